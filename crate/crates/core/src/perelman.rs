//! Perelman's v-quantity, the W-entropy and its monotonicity formula, the
//! differential Harnack residual and the Harnack/uniqueness diagnostics.
//!
//! With the Kähler normalization (`R = K`, `Δ = ½Δ_Riemannian`, `n = 1`) the
//! pointwise quantity is
//!
//! ```text
//! v = [τ(2Δf − |∇f|² + R) + f − ENTROPY_OFFSET] u,      τ = T′ − t.
//! ```
//!
//! `ENTROPY_OFFSET = 1` is the unique constant for which the shrinking round
//! sphere with `f ≡ 0` gives `v ≡ 0`; it differs from the Riemannian constant
//! by `1 − ln 2`, so `W` here equals Perelman's `W` minus `ln 2 − 1`. The
//! time derivative is
//!
//! ```text
//! dW/dt = τ ∫ [(R + Δf − 1/τ)² + ½|∇²f|°²] u dV,
//! ```
//!
//! the two terms being the trace and trace-free parts of
//! `Ric + ∇²f − g/(2τ)` written in the Kähler normalization.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::conjheat::ConjugateSolution;
use crate::error::{Error, Result};
use crate::geom2d::{self, MetricProfile};

/// Constant term of `v` fixed by the round-sphere oracle.
pub const ENTROPY_OFFSET: f64 = 1.0;

/// Pointwise ingredients of the entropy at one stored time.
struct Slice {
    profile: MetricProfile,
    tau: f64,
    u: Vec<f64>,
    f: Vec<f64>,
    curvature: Vec<f64>,
    lap_f: Vec<f64>,
    grad_f: Vec<f64>,
    tracefree: Vec<f64>,
}

impl Slice {
    fn new(sol: &ConjugateSolution, k: usize) -> Self {
        let t = sol.times()[k];
        let traj = sol.trajectory();
        let profile = sol.profile(k);
        let grid = profile.grid().clone();
        let f = sol.f(k);
        let curvature = traj.curvature_at(t).expect("stored time");
        let lap_f = geom2d::laplacian(&profile, &f).unwrap().into_inner();
        let grad_f = geom2d::grad_norm_sq(&profile, &f).unwrap().into_inner();

        // Trace-free Hessian |∇²f|°² = (f'' − 2w'f' − cot θ f')² / (2ρ²);
        // it vanishes at the poles by symmetry.
        let d1 = grid.derivative(&f);
        let d2 = grid.second_derivative(&f);
        let dw = grid.derivative(profile.w());
        let n = grid.len();
        let mut tracefree = vec![0.0; n];
        for j in 1..n - 1 {
            let theta = grid.theta()[j];
            let a = d2[j] - 2.0 * dw[j] * d1[j] - d1[j] / theta.tan();
            tracefree[j] = a * a * 0.5 * (-4.0 * profile.w()[j]).exp();
        }
        Self {
            tau: sol.horizon() - t,
            u: sol.u(k).to_vec(),
            profile,
            f,
            curvature,
            lap_f,
            grad_f,
            tracefree,
        }
    }

    fn v(&self) -> Vec<f64> {
        (0..self.u.len())
            .map(|j| {
                let bracket = 2.0 * self.lap_f[j] - self.grad_f[j] + self.curvature[j];
                (self.tau * bracket + self.f[j] - ENTROPY_OFFSET) * self.u[j]
            })
            .collect()
    }

    fn integrate(&self, density: impl Fn(usize) -> f64) -> f64 {
        let vals: Vec<f64> = (0..self.u.len()).map(|j| density(j) * self.u[j]).collect();
        geom2d::integrate(&self.profile, &vals).unwrap()
    }

    /// `∫(R + Δf − 1/τ)² u dV`.
    fn trace_defect(&self) -> f64 {
        self.integrate(|j| {
            let a = self.curvature[j] + self.lap_f[j] - 1.0 / self.tau;
            a * a
        })
    }

    /// `∫ ½|∇²f|°² u dV`.
    fn tracefree_energy(&self) -> f64 {
        self.integrate(|j| 0.5 * self.tracefree[j])
    }
}

/// `v(·, t)` at stored time `k`.
pub fn v_field(sol: &ConjugateSolution, k: usize) -> Vec<f64> {
    Slice::new(sol, k).v()
}

/// `W(t) = ∫ v dV` at stored time `k`.
pub fn entropy_w(sol: &ConjugateSolution, k: usize) -> f64 {
    let s = Slice::new(sol, k);
    geom2d::integrate(&s.profile, &s.v()).unwrap()
}

/// `dW/dt` from the monotonicity formula at stored time `k`.
pub fn w_derivative_formula(sol: &ConjugateSolution, k: usize) -> f64 {
    let s = Slice::new(sol, k);
    s.tau * (s.trace_defect() + s.tracefree_energy())
}

/// Three-point derivative at `t[1]` for unevenly spaced samples.
pub(crate) fn centred_derivative(t: [f64; 3], y: [f64; 3]) -> f64 {
    let (h0, h1) = (t[1] - t[0], t[2] - t[1]);
    (-h1 / (h0 * (h0 + h1))) * y[0] + ((h1 - h0) / (h0 * h1)) * y[1] + (h0 / (h1 * (h0 + h1))) * y[2]
}

/// Formula and finite-difference values of `dW/dt` at interior stored time `k`.
pub fn w_derivative(sol: &ConjugateSolution, k: usize) -> Result<(f64, f64)> {
    if k == 0 || k + 1 >= sol.len() {
        return Err(Error::Invalid(format!("w_derivative needs neighbours of slice {k}")));
    }
    let t = [sol.times()[k - 1], sol.times()[k], sol.times()[k + 1]];
    let w = [entropy_w(sol, k - 1), entropy_w(sol, k), entropy_w(sol, k + 1)];
    Ok((w_derivative_formula(sol, k), centred_derivative(t, w)))
}

/// `max u / min u` at stored time `k`.
pub fn harnack_ratio(sol: &ConjugateSolution, k: usize) -> f64 {
    let u = sol.u(k);
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = u.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// One row of the entropy report.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyRecord {
    pub t: f64,
    pub w: f64,
    pub dwdt_formula: f64,
    /// Three-point finite difference of `W`; `NaN` at the ends of the range.
    pub dwdt_fd: f64,
    pub v_max: f64,
    pub u_max: f64,
    pub u_min: f64,
    pub ratio: f64,
    /// `τ ∫(R + Δf − 1/τ)² u dV`, the trace part of the formula.
    pub r1: f64,
    /// `τ ∫ ½|∇²f|°² u dV`, the trace-free part.
    pub r2: f64,
}

/// Per-time entropy records over stored times in `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub records: Vec<EntropyRecord>,
}

impl EntropyReport {
    /// Smallest `W(t_{k+1}) − W(t_k)`.
    pub fn worst_step(&self) -> f64 {
        self.records
            .windows(2)
            .map(|p| p[1].w - p[0].w)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn v_max(&self) -> f64 {
        self.records.iter().map(|r| r.v_max).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,W,dWdt_formula,dWdt_fd,v_max,M,m,ratio,r1,r2\n");
        for r in &self.records {
            let row = [r.t, r.w, r.dwdt_formula, r.dwdt_fd, r.v_max, r.u_max, r.u_min, r.ratio, r.r1, r.r2];
            let row: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn entropy_report(sol: &ConjugateSolution, lo: f64, hi: f64) -> EntropyReport {
    let ks: Vec<usize> = (0..sol.len())
        .filter(|&k| sol.times()[k] >= lo && sol.times()[k] <= hi)
        .collect();
    // Slice quantities are independent; the ordered collect keeps the report
    // deterministic.
    let rows: Vec<(EntropyRecord, f64)> = ks
        .par_iter()
        .map(|&k| {
            let s = Slice::new(sol, k);
            let v = s.v();
            let w = geom2d::integrate(&s.profile, &v).unwrap();
            let r1 = s.tau * s.trace_defect();
            let r2 = s.tau * s.tracefree_energy();
            let u_max = s.u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let u_min = s.u.iter().copied().fold(f64::INFINITY, f64::min);
            let rec = EntropyRecord {
                t: sol.times()[k],
                w,
                dwdt_formula: r1 + r2,
                dwdt_fd: f64::NAN,
                v_max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                u_max,
                u_min,
                ratio: u_max / u_min,
                r1,
                r2,
            };
            (rec, w)
        })
        .collect();
    let mut records: Vec<EntropyRecord> = rows.into_iter().map(|(r, _)| r).collect();
    for i in 1..records.len().saturating_sub(1) {
        let t = [records[i - 1].t, records[i].t, records[i + 1].t];
        let w = [records[i - 1].w, records[i].w, records[i + 1].w];
        records[i].dwdt_fd = centred_derivative(t, w);
    }
    EntropyReport { records }
}

/// One sample point of a space-time curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    pub theta: f64,
    /// `dθ/dt`.
    pub theta_dot: f64,
}

/// Meridian sweep `θ(t) = θ₀ + c t`, reflected at the poles (a curve that
/// passes through a pole continues down the opposite meridian).
pub fn meridian_sweep(theta0: f64, speed: f64, times: &[f64]) -> Vec<CurvePoint> {
    times
        .iter()
        .map(|&t| {
            let raw = theta0 + speed * t;
            let period = raw.rem_euclid(2.0 * PI);
            let (theta, sign) = if period <= PI { (period, 1.0) } else { (2.0 * PI - period, -1.0) };
            CurvePoint {
                t,
                theta,
                theta_dot: sign * speed,
            }
        })
        .collect()
}

/// Smallest value over the curve samples of
/// `[½(R + |γ̇|²) − f/(2τ) + d/dt f(γ(t), t)] / (½ max R)`,
/// with `|γ̇|² = ½ e^{2w} θ̇²`. Samples must sit on interior stored times of
/// the solution, where `∂ₜf` is a three-point difference.
pub fn admissibility_residual(sol: &ConjugateSolution, curve: &[CurvePoint]) -> Result<f64> {
    let traj = sol.trajectory();
    let grid = sol.grid();
    let mut worst = f64::INFINITY;
    for p in curve {
        let k = sol.index_of(p.t).ok_or(Error::Range {
            time: p.t,
            lo: sol.times()[0],
            hi: sol.t_i(),
        })?;
        if k == 0 || k + 1 >= sol.len() {
            return Err(Error::Range {
                time: p.t,
                lo: sol.times()[1],
                hi: sol.times()[sol.len() - 2],
            });
        }
        let fs = [sol.f(k - 1), sol.f(k), sol.f(k + 1)];
        let ts = [sol.times()[k - 1], p.t, sol.times()[k + 1]];
        let samples = [
            grid.sample_cubic(&fs[0], p.theta).0,
            grid.sample_cubic(&fs[1], p.theta).0,
            grid.sample_cubic(&fs[2], p.theta).0,
        ];
        let (f, slope) = grid.sample_cubic(&fs[1], p.theta);
        let f_t = centred_derivative(ts, samples);
        let profile = sol.profile(k);
        let rho = (2.0 * grid.sample_cubic(profile.w(), p.theta).0).exp();
        let curvature = traj.curvature_at(p.t)?;
        let r = grid.sample_cubic(&curvature, p.theta).0;
        let r_max = curvature.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let speed_sq = 0.5 * rho * p.theta_dot * p.theta_dot;
        let tau = sol.horizon() - p.t;
        let residual = 0.5 * (r + speed_sq) - f / (2.0 * tau) + f_t + slope * p.theta_dot;
        worst = worst.min(residual / (0.5 * r_max));
    }
    Ok(worst)
}

/// Minimum scaled admissibility residual over a family of sweeps from both
/// poles at the given speeds, sampled on the interior stored times in `[lo, hi]`.
pub fn admissibility_scan(sol: &ConjugateSolution, speeds: &[f64], lo: f64, hi: f64) -> Result<f64> {
    let times: Vec<f64> = sol.times()[1..sol.len() - 1]
        .iter()
        .copied()
        .filter(|&t| t >= lo && t <= hi)
        .collect();
    let curves: Vec<Vec<CurvePoint>> = speeds
        .iter()
        .flat_map(|&c| [meridian_sweep(0.0, c, &times), meridian_sweep(PI, -c, &times)])
        .collect();
    let worst = curves
        .par_iter()
        .map(|c| admissibility_residual(sol, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(worst.into_iter().fold(f64::INFINITY, f64::min))
}

/// Outcome of the min/max chain between two times.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxChain {
    pub t1: f64,
    pub t2: f64,
    /// `max f(·, t₁)`.
    pub lhs: f64,
    /// `√((T−t₂)/(T−t₁)) min f(·, t₂) + C`.
    pub rhs: f64,
    /// Harnack integral constant `C`.
    pub c: f64,
    /// `rhs − lhs`.
    pub slack: f64,
    /// `Ã = C/√((T−t₂)/(T−t₁))`: lower bound `min f ≥ −Ã` implied by the chain.
    pub a_tilde: f64,
    /// `min f` over the stored times up to `t₂`.
    pub f_min: f64,
}

/// `½ ∫_{t₁}^{t₂} √(τ) (R + |γ̇|²) dt / √(T − t₁)` along the meridian path
/// moving linearly in `θ` from `a` at `t₁` to `b` at `t₂`.
fn harnack_integral(sol: &ConjugateSolution, k1: usize, k2: usize, a: f64, b: f64) -> f64 {
    let traj = sol.trajectory();
    let grid = sol.grid();
    let (t1, t2) = (sol.times()[k1], sol.times()[k2]);
    let speed = (b - a) / (t2 - t1);
    let big_t = sol.horizon();
    let integrand = |k: usize| {
        let t = sol.times()[k];
        let theta = a + speed * (t - t1);
        let w = grid.sample_cubic(sol.profile(k).w(), theta).0;
        let r = grid.sample_cubic(&traj.curvature_at(t).unwrap(), theta).0;
        (big_t - t).sqrt() * (r + 0.5 * (2.0 * w).exp() * speed * speed)
    };
    let mut total = 0.0;
    let mut prev = integrand(k1);
    for k in k1 + 1..=k2 {
        let next = integrand(k);
        total += 0.5 * (sol.times()[k] - sol.times()[k - 1]) * (prev + next);
        prev = next;
    }
    0.5 * total / (big_t - t1).sqrt()
}

/// Checks `max f(·,t₁) ≤ √((T−t₂)/(T−t₁)) min f(·,t₂) + C`, with `C` the
/// largest Harnack integral between points of a 33-point colatitude grid
/// (plus the extremal points themselves). Uses the stored times nearest to
/// `t₁` and `t₂`.
pub fn f_min_max_chain(sol: &ConjugateSolution, t1: f64, t2: f64) -> Result<MinMaxChain> {
    let (k1, k2) = (sol.nearest(t1), sol.nearest(t2));
    if k2 <= k1 {
        return Err(Error::Invalid(format!("chain needs t₁ < t₂, got {t1} and {t2}")));
    }
    let grid = sol.grid();
    let (f1, f2) = (sol.f(k1), sol.f(k2));
    let argmax = (0..f1.len()).max_by(|&i, &j| f1[i].total_cmp(&f1[j])).unwrap();
    let argmin = (0..f2.len()).min_by(|&i, &j| f2[i].total_cmp(&f2[j])).unwrap();
    let lhs = f1[argmax];
    let (ta, tb) = (sol.times()[k1], sol.times()[k2]);
    let big_t = sol.horizon();
    let factor = ((big_t - tb) / (big_t - ta)).sqrt();

    let mut points: Vec<f64> = (0..33).map(|i| i as f64 * PI / 32.0).collect();
    points.push(grid.theta()[argmax]);
    points.push(grid.theta()[argmin]);
    let pairs: Vec<(f64, f64)> = points
        .iter()
        .flat_map(|&a| points.iter().map(move |&b| (a, b)))
        .collect();
    let c = pairs
        .par_iter()
        .map(|&(a, b)| harnack_integral(sol, k1, k2, a, b))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max);
    let rhs = factor * f2[argmin] + c;
    let f_min = (0..=k2)
        .map(|k| sol.f(k).into_iter().fold(f64::INFINITY, f64::min))
        .fold(f64::INFINITY, f64::min);
    Ok(MinMaxChain {
        t1: ta,
        t2: tb,
        lhs,
        rhs,
        c,
        slack: rhs - lhs,
        a_tilde: c / factor,
        f_min,
    })
}

/// Blow-up soliton residuals on the rescaled window `[lo, hi]` around `tᵢ`:
/// `r₁ = (T−tᵢ) ∫∫ (R + Δf − 1/τ)² u dV dt` and
/// `r₂ = (T−tᵢ) ∫∫ ½|∇²f|°² u dV dt`, both invariant under the rescaling.
pub fn soliton_residual(sol: &ConjugateSolution, t_i: f64, window: (f64, f64)) -> Result<(f64, f64)> {
    let big_t = sol.horizon();
    let scale = big_t - t_i;
    let (a, b) = (t_i + window.0 * scale, t_i + window.1 * scale);
    let ks: Vec<usize> = (0..sol.len())
        .filter(|&k| sol.times()[k] >= a && sol.times()[k] <= b)
        .collect();
    if ks.len() < 2 {
        return Err(Error::Range {
            time: b,
            lo: sol.times()[0],
            hi: sol.times()[sol.len() - 1],
        });
    }
    let vals: Vec<(f64, f64)> = ks
        .par_iter()
        .map(|&k| {
            let s = Slice::new(sol, k);
            (s.trace_defect(), s.tracefree_energy())
        })
        .collect();
    let (mut r1, mut r2) = (0.0, 0.0);
    for i in 1..ks.len() {
        let dt = sol.times()[ks[i]] - sol.times()[ks[i - 1]];
        r1 += 0.5 * dt * (vals[i].0 + vals[i - 1].0);
        r2 += 0.5 * dt * (vals[i].1 + vals[i - 1].1);
    }
    Ok((scale * r1, scale * r2))
}

/// Ratio of two solutions on their common stored times.
#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub times: Vec<f64>,
    /// `max_θ u_A/u_B`.
    pub rho_max: Vec<f64>,
    /// Smallest `ρ_max(t_{k+1}) − ρ_max(t_k)`.
    pub worst_step: f64,
}

impl UniquenessReport {
    /// `ρ_max` at the stored time nearest to `t`.
    pub fn at(&self, t: f64) -> f64 {
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .unwrap()
            .0;
        self.rho_max[k]
    }
}

pub fn uniqueness_experiment(a: &ConjugateSolution, b: &ConjugateSolution, hi: f64) -> UniquenessReport {
    let mut times = Vec::new();
    let mut rho_max = Vec::new();
    for (k, &t) in a.times().iter().enumerate() {
        if t > hi {
            break;
        }
        if let Some(kb) = b.index_of(t) {
            times.push(t);
            rho_max.push(
                a.u(k)
                    .iter()
                    .zip(b.u(kb))
                    .map(|(x, y)| x / y)
                    .fold(f64::NEG_INFINITY, f64::max),
            );
        }
    }
    let worst_step = rho_max.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    UniquenessReport {
        times,
        rho_max,
        worst_step,
    }
}

/// W of the solution restricted to the blow-up rescaling around `tᵢ`:
/// `gᵢ = g/(T−tᵢ)`, `uᵢ = (T−tᵢ)u`, times `(t − tᵢ)/(T−tᵢ)`, horizon 1.
pub fn entropy_w_rescaled(sol: &ConjugateSolution, t_i: f64, k: usize) -> Result<f64> {
    let big_t = sol.horizon();
    let scale = big_t - t_i;
    let t = sol.times()[k];
    let profile = sol.profile(k).shifted(-0.5 * scale.ln())?;
    let grid = profile.grid().clone();
    let u: Vec<f64> = sol.u(k).iter().map(|u| u * scale).collect();
    let s = (t - t_i) / scale;
    let tau = 1.0 - s;
    let f: Vec<f64> = u.iter().map(|u| -u.ln() - (4.0 * PI * tau).ln()).collect();
    let lap = geom2d::laplacian(&profile, &f)?;
    let grad = geom2d::grad_norm_sq(&profile, &f)?;
    let curvature = geom2d::gauss_curvature(&profile);
    let v: Vec<f64> = (0..grid.len())
        .map(|j| (tau * (2.0 * lap[j] - grad[j] + curvature[j]) + f[j] - ENTROPY_OFFSET) * u[j])
        .collect();
    geom2d::integrate(&profile, &v)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::conjheat::{solve_backward, uniform_terminal, HeatOptions};
    use crate::flow::{evolve, FlowOptions};

    fn round_constant(n: usize) -> ConjugateSolution {
        let m = MetricProfile::round(n).unwrap();
        let tr = Arc::new(evolve(&m, 0.99, &FlowOptions::default()).unwrap());
        let t_i = tr.end();
        solve_backward(&tr, t_i, &uniform_terminal(&tr.profile_at(t_i).unwrap()), &HeatOptions::default()).unwrap()
    }

    #[test]
    fn round_soliton_satisfies_the_factor_audit() {
        let sol = round_constant(65);
        for k in (0..sol.len()).step_by(7) {
            assert!(v_field(&sol, k).iter().all(|v| v.abs() < 1e-9));
            assert!(entropy_w(&sol, k).abs() < 1e-9);
            assert!(w_derivative_formula(&sol, k).abs() < 1e-12);
        }
        let (r1, r2) = soliton_residual(&sol, 0.5, (0.0, 0.5)).unwrap();
        assert!(r1 + r2 < 1e-12);
    }

    #[test]
    fn constant_solution_has_unit_harnack_ratio() {
        let sol = round_constant(33);
        for k in 0..sol.len() {
            assert!((harnack_ratio(&sol, k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sweeps_reflect_at_the_poles() {
        let c = meridian_sweep(0.0, 1.0, &[0.5, PI + 0.5, 2.0 * PI + 0.5]);
        assert!((c[0].theta - 0.5).abs() < 1e-15 && c[0].theta_dot == 1.0);
        assert!((c[1].theta - (PI - 0.5)).abs() < 1e-12 && c[1].theta_dot == -1.0);
        assert!((c[2].theta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn round_admissibility_residual_is_half_curvature() {
        let sol = round_constant(33);
        let times = &sol.times()[1..4];
        let still = admissibility_residual(&sol, &meridian_sweep(0.7, 0.0, times)).unwrap();
        assert!((still - 1.0).abs() < 1e-6, "{still}");
        let moving = admissibility_scan(&sol, &[0.5, 5.0], 0.0, 0.5).unwrap();
        assert!(moving >= 1.0 - 1e-6);
    }

    #[test]
    fn chain_on_constant_solution_has_slack_c() {
        let sol = round_constant(33);
        let big_t = 1.0;
        let t2 = 0.75;
        let chain = f_min_max_chain(&sol, t2 - (big_t - t2), t2).unwrap();
        assert!(chain.lhs.abs() < 1e-9);
        assert!((chain.slack - chain.c).abs() < 1e-9);
        assert!(chain.c > 0.0);
    }

    #[test]
    fn identical_solutions_have_unit_ratio() {
        let sol = round_constant(33);
        let rep = uniqueness_experiment(&sol, &sol, 1.0);
        assert!(rep.rho_max.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn centred_derivative_is_exact_for_quadratics() {
        let t = [0.0, 0.3, 1.0];
        let y = t.map(|t: f64| 2.0 + 3.0 * t - t * t);
        assert!((centred_derivative(t, y) - (3.0 - 0.6)).abs() < 1e-12);
    }
}
