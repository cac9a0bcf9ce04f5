//! Conjugate heat equation `∂ₜu = −Δu + Ru` solved backward along a stored flow.
//!
//! The solver evolves the area density `q = e^{2w} u` rather than `u`. Since
//! `∂ₜ(e^{2w}) = −R e^{2w}`, the reaction term cancels and
//!
//! ```text
//! ∂ₛq = ½ Δ_round(q / e^{2w}),     s = tᵢ − t,
//! ```
//!
//! whose finite-volume form conserves `Σ A_j q_j = ∫u dV` to rounding error.
//! The step is kept below the positivity threshold of explicit RK4, so the
//! discrete solution stays positive and obeys a discrete maximum principle.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowTrajectory;
use crate::geom2d::{self, Grid, MetricProfile, ScalarField};

/// Step control for the backward solve: `Δt ≤ cfl · min e^{2w} · Δθ²`.
/// Explicit RK4 preserves positivity for `cfl ≤ 0.5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatOptions {
    pub cfl: f64,
}

impl Default for HeatOptions {
    fn default() -> Self {
        Self { cfl: 0.4 }
    }
}

/// Largest relative mass error accepted for terminal data.
const TERMINAL_MASS_TOL: f64 = 1e-9;

/// Bump widths below this many grid cells are rejected.
const MIN_CELLS_PER_WIDTH: f64 = 2.0;

/// Floor on the bump exponent, well above the `f64` underflow threshold.
const MAX_DECAY: f64 = 600.0;

/// Positive solution of the conjugate heat equation on `[0, tᵢ]`.
#[derive(Debug, Clone)]
pub struct ConjugateSolution {
    traj: Arc<FlowTrajectory>,
    t_i: f64,
    base: Option<f64>,
    eps: Option<f64>,
    horizon: f64,
    times: Vec<f64>,
    u: Vec<Vec<f64>>,
    mass: Vec<f64>,
}

impl ConjugateSolution {
    pub fn trajectory(&self) -> &Arc<FlowTrajectory> {
        &self.traj
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.traj.grid()
    }

    /// Rebuild a solution from stored densities, e.g. one read back from disk.
    pub fn from_parts(
        traj: Arc<FlowTrajectory>,
        t_i: f64,
        horizon: f64,
        times: Vec<f64>,
        u: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if times.is_empty() || times.len() != u.len() {
            return Err(Error::Dimension {
                expected: times.len(),
                got: u.len(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("solution times must increase".into()));
        }
        if *times.last().unwrap() > t_i || !(horizon >= t_i) {
            return Err(Error::Invalid(format!(
                "stored times must end by tᵢ = {t_i} ≤ horizon = {horizon}"
            )));
        }
        let grid = traj.grid().clone();
        for (&t, row) in times.iter().zip(&u) {
            traj.interval(t)?;
            grid.check(row)?;
            if let Some(j) = row.iter().position(|&x| !(x > 0.0)) {
                return Err(Error::Integrator {
                    time: t,
                    reason: format!("density not positive at node {j}"),
                });
            }
        }
        let mut out = Self {
            traj,
            t_i,
            base: None,
            eps: None,
            horizon,
            times,
            u,
            mass: Vec::new(),
        };
        out.mass = (0..out.times.len()).map(|k| out.mass_of(k)).collect();
        Ok(out)
    }

    /// Terminal time.
    pub fn t_i(&self) -> f64 {
        self.t_i
    }

    /// Colatitude of the terminal bump, if the data came from [`delta_terminal`].
    pub fn base(&self) -> Option<f64> {
        self.base
    }

    pub fn eps(&self) -> Option<f64> {
        self.eps
    }

    /// Time `T′` in the normalization `u = (4π(T′ − t))^{-1} e^{-f}`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Same solution with the potential measured against a different horizon.
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_base(mut self, base: f64, eps: f64) -> Self {
        self.base = Some(base);
        self.eps = Some(eps);
        self
    }

    /// Stored times: every trajectory slice before `tᵢ`, then `tᵢ`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn u(&self, k: usize) -> &[f64] {
        &self.u[k]
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Index of the stored time equal to `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times
            .binary_search_by(|s| s.partial_cmp(&t).unwrap())
            .ok()
    }

    /// Index of the stored time closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            0
        } else if k == self.times.len() {
            k - 1
        } else if t - self.times[k - 1] <= self.times[k] - t {
            k - 1
        } else {
            k
        }
    }

    /// Metric at stored time `k`.
    pub fn profile(&self, k: usize) -> MetricProfile {
        self.traj
            .profile_at(self.times[k])
            .expect("solution times lie inside the trajectory")
    }

    /// Potential `f = −ln u − ln(4π(T′ − t))` at stored time `k`.
    pub fn f(&self, k: usize) -> Vec<f64> {
        let shift = (4.0 * PI * (self.horizon - self.times[k])).ln();
        self.u[k].iter().map(|u| -u.ln() - shift).collect()
    }

    /// `∫ u dV` at stored time `k`, recomputed from the stored metric.
    pub fn mass_of(&self, k: usize) -> f64 {
        geom2d::integrate(&self.profile(k), &self.u[k]).unwrap()
    }

    /// Mirror image under `θ ↦ π − θ`, on the mirrored trajectory.
    pub fn reflected(&self, traj: Arc<FlowTrajectory>) -> Self {
        let mut out = self.clone();
        out.traj = traj;
        out.base = self.base.map(|b| PI - b);
        for u in &mut out.u {
            u.reverse();
        }
        out
    }
}

/// Potentials at every stored time.
pub fn f_of(sol: &ConjugateSolution) -> Vec<ScalarField> {
    (0..sol.len()).map(|k| sol.f(k).into()).collect()
}

/// Normalized geodesic Gaussian `exp(−d(θ, θ_p)²/(4ε))/Z`.
pub fn delta_terminal(m: &MetricProfile, theta_p: f64, eps: f64) -> Result<ScalarField> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Invalid(format!("bump parameter must be positive, got {eps}")));
    }
    let grid = m.grid();
    let width = (2.0 * eps).sqrt();
    let spacing = grid.sample_linear(m.w(), theta_p).exp() * grid.dtheta();
    if width < MIN_CELLS_PER_WIDTH * spacing {
        return Err(Error::Resolution { width, spacing });
    }
    let d = geom2d::distance_from(m, theta_p);
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let bump: Vec<f64> = d
        .iter()
        // The exponent is floored so far tails stay positive instead of
        // underflowing to zero.
        .map(|d| (-(d * d - dmin * dmin) / (4.0 * eps)).max(-MAX_DECAY).exp())
        .collect();
    let z = geom2d::integrate(m, &bump)?;
    Ok(bump.iter().map(|b| b / z).collect::<Vec<_>>().into())
}

/// Number of equal substeps used on `[a, b]`.
fn substeps(traj: &FlowTrajectory, a: f64, b: f64, cfl: f64) -> Result<usize> {
    let min_of = |t: f64| -> Result<f64> {
        Ok(traj.rho_at(t)?.iter().copied().fold(f64::INFINITY, f64::min))
    };
    // A small margin covers the dip of the Hermite interpolant between knots.
    let rho_min = 0.9 * min_of(a)?.min(min_of(b)?);
    let h = traj.grid().dtheta();
    let dt = cfl * rho_min * h * h;
    Ok(((b - a) / dt).ceil().max(1.0) as usize)
}

/// Evaluation times of the backward solve: stored slices before `t_i`, then `t_i`.
fn solution_times(traj: &FlowTrajectory, t_i: f64) -> Vec<f64> {
    let mut times: Vec<f64> = traj.times().iter().copied().filter(|&t| t < t_i).collect();
    times.push(t_i);
    times
}

/// Scratch buffers for the linear operators.
struct Workspace {
    rho: Vec<f64>,
    rate: Vec<f64>,
    tmp: Vec<f64>,
    lap: Vec<f64>,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            rho: vec![0.0; n],
            rate: vec![0.0; n],
            tmp: vec![0.0; n],
            lap: vec![0.0; n],
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            stage: vec![0.0; n],
        }
    }
}

/// `out = ½ L(q/ρ(t))`: backward generator acting on the density.
fn backward_rhs(traj: &FlowTrajectory, t: f64, q: &[f64], ws: &mut Workspace, slot: usize) {
    traj.rho_into(t, &mut ws.rho, &mut ws.rate).unwrap();
    for j in 0..q.len() {
        ws.tmp[j] = q[j] / ws.rho[j];
    }
    traj.grid().round_laplacian_into(&ws.tmp, &mut ws.lap);
    for j in 0..q.len() {
        ws.k[slot][j] = 0.5 * ws.lap[j];
    }
}

/// `out = ½ ρ(t)^{-1} L φ`: the forward heat generator `Δφ`.
fn forward_rhs(traj: &FlowTrajectory, t: f64, phi: &[f64], ws: &mut Workspace, slot: usize) {
    traj.rho_into(t, &mut ws.rho, &mut ws.rate).unwrap();
    traj.grid().round_laplacian_into(phi, &mut ws.lap);
    for j in 0..phi.len() {
        ws.k[slot][j] = 0.5 * ws.lap[j] / ws.rho[j];
    }
}

type Rhs = fn(&FlowTrajectory, f64, &[f64], &mut Workspace, usize);

/// One classical RK4 step between times `t0` and `t1` (in either order). The
/// generators are written in the variable that increases along the
/// integration direction, so the step length is `|t1 − t0|`.
fn rk4_step(traj: &FlowTrajectory, rhs: Rhs, t0: f64, t1: f64, y: &mut [f64], ws: &mut Workspace) {
    let n = y.len();
    let h = (t1 - t0).abs();
    let mid = 0.5 * (t0 + t1);
    rhs(traj, t0, y, ws, 0);
    for j in 0..n {
        ws.stage[j] = y[j] + 0.5 * h * ws.k[0][j];
    }
    let stage = std::mem::take(&mut ws.stage);
    rhs(traj, mid, &stage, ws, 1);
    ws.stage = stage;
    for j in 0..n {
        ws.stage[j] = y[j] + 0.5 * h * ws.k[1][j];
    }
    let stage = std::mem::take(&mut ws.stage);
    rhs(traj, mid, &stage, ws, 2);
    ws.stage = stage;
    for j in 0..n {
        ws.stage[j] = y[j] + h * ws.k[2][j];
    }
    let stage = std::mem::take(&mut ws.stage);
    rhs(traj, t1, &stage, ws, 3);
    ws.stage = stage;
    for j in 0..n {
        y[j] += h / 6.0 * (ws.k[0][j] + 2.0 * ws.k[1][j] + 2.0 * ws.k[2][j] + ws.k[3][j]);
    }
}

/// Substep knots on `[a, b]`, hitting both ends exactly.
fn knots(traj: &FlowTrajectory, a: f64, b: f64, cfl: f64) -> Result<Vec<f64>> {
    let m = substeps(traj, a, b, cfl)?;
    let dt = (b - a) / m as f64;
    Ok((0..=m)
        .map(|i| if i == m { b } else { a + i as f64 * dt })
        .collect())
}

/// Solves the conjugate heat equation backward from `terminal` at `t_i` to `t = 0`.
pub fn solve_backward(
    traj: &Arc<FlowTrajectory>,
    t_i: f64,
    terminal: &ScalarField,
    opts: &HeatOptions,
) -> Result<ConjugateSolution> {
    let grid = traj.grid().clone();
    grid.check(terminal)?;
    if !(t_i > traj.start() && t_i <= traj.end()) {
        return Err(Error::Range {
            time: t_i,
            lo: traj.start(),
            hi: traj.end(),
        });
    }
    if let Some(j) = terminal.iter().position(|u| !(*u > 0.0 && u.is_finite())) {
        return Err(Error::Invalid(format!(
            "terminal data must be positive and finite (node {j} holds {})",
            terminal[j]
        )));
    }
    let rho_i = traj.rho_at(t_i)?;
    let mut q: Vec<f64> = terminal.iter().zip(&rho_i).map(|(u, r)| u * r).collect();
    let mass_i = grid.integrate_round(&q);
    if (mass_i - 1.0).abs() > TERMINAL_MASS_TOL {
        return Err(Error::Normalization { mass: mass_i });
    }

    let times = solution_times(traj, t_i);
    let n = grid.len();
    let mut ws = Workspace::new(n);
    let mut u = vec![Vec::new(); times.len()];
    let mut mass = vec![0.0; times.len()];
    let last = times.len() - 1;
    u[last] = terminal.values().to_vec();
    mass[last] = mass_i;

    for k in (0..last).rev() {
        let (a, b) = (times[k], times[k + 1]);
        let ts = knots(traj, a, b, opts.cfl)?;
        for pair in ts.windows(2).rev() {
            rk4_step(traj, backward_rhs, pair[1], pair[0], &mut q, &mut ws);
            if let Some(j) = q.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::Integrator {
                    time: pair[0],
                    reason: format!("density lost positivity at node {j} ({:e})", q[j]),
                });
            }
        }
        let rho = traj.rho_at(a)?;
        u[k] = q.iter().zip(&rho).map(|(q, r)| q / r).collect();
        mass[k] = grid.integrate_round(&q);
    }

    Ok(ConjugateSolution {
        traj: traj.clone(),
        t_i,
        base: None,
        eps: None,
        horizon: traj.t_exact(),
        times,
        u,
        mass,
    })
}

/// Outcome of [`duality_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    /// `∫ φ u dV` at each stored time of the solution.
    pub pairing: Vec<f64>,
    /// `max_t |pairing(t) − pairing(0)|`.
    pub drift: f64,
}

/// Evolves `φ0` by the forward heat equation `∂ₜφ = Δφ` on the solution's
/// step sequence and tracks the pairing `∫ φ u dV`, which is conserved.
pub fn duality_check(
    sol: &ConjugateSolution,
    phi0: &ScalarField,
    opts: &HeatOptions,
) -> Result<DualityReport> {
    let traj = sol.trajectory();
    let grid = traj.grid();
    grid.check(phi0)?;
    let times = sol.times();
    let mut phi = phi0.values().to_vec();
    let mut ws = Workspace::new(grid.len());
    let pair = |k: usize, phi: &[f64]| -> f64 {
        let m = sol.profile(k);
        geom2d::integrate(&m, &sol.u[k].iter().zip(phi).map(|(u, p)| u * p).collect::<Vec<_>>())
            .unwrap()
    };
    let mut pairing = vec![pair(0, &phi)];
    for k in 0..times.len() - 1 {
        // Walk the substep grid of the backward solve in the other direction.
        for pair in knots(traj, times[k], times[k + 1], opts.cfl)?.windows(2) {
            rk4_step(traj, forward_rhs, pair[0], pair[1], &mut phi, &mut ws);
        }
        pairing.push(pair(k + 1, &phi));
    }
    let drift = pairing
        .iter()
        .map(|p| (p - pairing[0]).abs())
        .fold(0.0, f64::max);
    Ok(DualityReport { pairing, drift })
}

/// Backward solves from a schedule of terminal times approaching `T`.
#[derive(Debug, Clone)]
pub struct CandidateSequence {
    /// One solution per schedule entry, in schedule order.
    pub solutions: Vec<ConjugateSolution>,
    /// `sup_{[0, t₁]} |u^{(i+1)} − u^{(i)}|` for consecutive schedule entries.
    pub increments: Vec<f64>,
    /// Set when the increments fail to decrease.
    pub warning: Option<String>,
}

impl CandidateSequence {
    /// The solution from the latest terminal time.
    pub fn candidate(&self) -> &ConjugateSolution {
        self.solutions.last().unwrap()
    }

    /// Richardson combination of the last two solutions that cancels the
    /// leading `(T − tᵢ)` term of their difference. Both are solutions of the
    /// same linear equation and the weights sum to one, so the result is again
    /// a unit-mass solution, on the slices before the earlier terminal time.
    pub fn extrapolated(&self) -> ConjugateSolution {
        let n = self.solutions.len();
        let (prev, last) = (&self.solutions[n - 2], &self.solutions[n - 1]);
        let big_t = last.trajectory().t_exact();
        let (tau_prev, tau_last) = (big_t - prev.t_i(), big_t - last.t_i());
        let weight = tau_last / (tau_prev - tau_last);
        let mut out = prev.clone();
        out.base = last.base;
        out.eps = last.eps;
        // Keep the stored times the two solutions share (all but prev's terminal time).
        let shared: Vec<(usize, usize)> = (0..prev.times.len())
            .filter_map(|k| last.index_of(prev.times[k]).map(|kl| (k, kl)))
            .collect();
        out.times = shared.iter().map(|&(k, _)| prev.times[k]).collect();
        out.u = shared
            .iter()
            .map(|&(k, kl)| {
                let (up, ul) = (&prev.u[k], &last.u[kl]);
                (0..up.len()).map(|j| ul[j] + weight * (ul[j] - up[j])).collect()
            })
            .collect();
        out.t_i = *out.times.last().expect("solutions share their early slices");
        out.mass = (0..out.times.len()).map(|k| out.mass_of(k)).collect();
        out
    }
}

/// Terminal bump parameter `ε = ratio · (T − tᵢ)`.
pub fn eps_rule(t_exact: f64, t_i: f64, ratio: f64) -> f64 {
    ratio * (t_exact - t_i)
}

/// Solves backward from a normalized bump at `(θ_p, tᵢ)` for every `tᵢ` in
/// `schedule` and reports how successive solutions settle on `[0, t₁]`.
pub fn admissible_candidate(
    traj: &Arc<FlowTrajectory>,
    schedule: &[f64],
    theta_p: f64,
    eps_ratio: f64,
    opts: &HeatOptions,
) -> Result<CandidateSequence> {
    if schedule.len() < 3 {
        return Err(Error::Invalid(format!(
            "need at least 3 terminal times, got {}",
            schedule.len()
        )));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("terminal times must increase".into()));
    }
    let big_t = traj.t_exact();
    let solutions = schedule
        .par_iter()
        .map(|&t_i| {
            let eps = eps_rule(big_t, t_i, eps_ratio);
            let terminal = delta_terminal(&traj.profile_at(t_i)?, theta_p, eps)?;
            Ok(solve_backward(traj, t_i, &terminal, opts)?.with_base(theta_p, eps))
        })
        .collect::<Result<Vec<_>>>()?;

    let t1 = schedule[0];
    let increments: Vec<f64> = solutions
        .windows(2)
        .map(|pair| {
            let mut sup: f64 = 0.0;
            for (k, &t) in pair[0].times().iter().enumerate() {
                if t > t1 {
                    break;
                }
                if let Some(k2) = pair[1].index_of(t) {
                    for (a, b) in pair[0].u(k).iter().zip(pair[1].u(k2)) {
                        sup = sup.max((a - b).abs());
                    }
                }
            }
            sup
        })
        .collect();
    let warning = increments
        .windows(2)
        .position(|w| w[1] >= w[0])
        .map(|i| format!("increments do not decrease at entry {}", i + 1));
    Ok(CandidateSequence {
        solutions,
        increments,
        warning,
    })
}

/// Constant solution `u = (4π(T − t))^{-1}` on a round trajectory, or the
/// uniform terminal density on any trajectory.
pub fn uniform_terminal(m: &MetricProfile) -> ScalarField {
    ScalarField::constant(m.grid(), 1.0 / geom2d::volume(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{evolve, FlowOptions};
    use approx::assert_relative_eq;

    fn traj(n: usize, amp: f64, frac: f64) -> Arc<FlowTrajectory> {
        let m = MetricProfile::conformal_cos(n, amp).unwrap();
        Arc::new(evolve(&m, frac, &FlowOptions::default()).unwrap())
    }

    #[test]
    fn round_constant_solution_is_exact() {
        let tr = traj(65, 0.0, 0.99);
        let t_i = tr.times()[tr.len() / 2];
        let sol = solve_backward(&tr, t_i, &uniform_terminal(&tr.profile_at(t_i).unwrap()), &HeatOptions::default()).unwrap();
        for k in 0..sol.len() {
            let expect = 1.0 / (4.0 * PI * (1.0 - sol.times()[k]));
            for u in sol.u(k) {
                assert_relative_eq!(*u, expect, max_relative = 1e-11);
            }
            for f in sol.f(k) {
                assert!(f.abs() < 1e-11);
            }
        }
    }

    #[test]
    fn mass_is_conserved_and_density_stays_positive() {
        let tr = traj(65, 0.2, 0.99);
        let t_i = 0.95 * tr.t_exact();
        let eps = eps_rule(tr.t_exact(), t_i, 0.1);
        let terminal = delta_terminal(&tr.profile_at(t_i).unwrap(), 0.0, eps).unwrap();
        let sol = solve_backward(&tr, t_i, &terminal, &HeatOptions::default()).unwrap();
        for k in 0..sol.len() {
            assert!((sol.mass()[k] - 1.0).abs() < 1e-12);
            assert!((sol.mass_of(k) - 1.0).abs() < 1e-12);
            assert!(sol.u(k).iter().all(|&u| u > 0.0));
        }
    }

    #[test]
    fn terminal_mass_is_checked() {
        let tr = traj(33, 0.0, 0.5);
        let t_i = tr.end();
        let bad = ScalarField::constant(tr.grid(), 1.0);
        assert!(matches!(
            solve_backward(&tr, t_i, &bad, &HeatOptions::default()),
            Err(Error::Normalization { .. })
        ));
        let zero = ScalarField::constant(tr.grid(), 0.0);
        assert!(matches!(
            solve_backward(&tr, t_i, &zero, &HeatOptions::default()),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn bump_is_normalized_and_resolved() {
        let m = MetricProfile::round(129).unwrap();
        for eps in [2e-3, 1e-2, 0.1, 10.0] {
            let u = delta_terminal(&m, 0.0, eps).unwrap();
            assert_relative_eq!(geom2d::integrate(&m, &u).unwrap(), 1.0, max_relative = 1e-13);
        }
        let wide = delta_terminal(&m, 0.0, 1e6).unwrap();
        for u in wide.iter() {
            assert_relative_eq!(*u, 1.0 / (4.0 * PI), max_relative = 1e-5);
        }
        assert!(matches!(delta_terminal(&m, 0.0, 1e-6), Err(Error::Resolution { .. })));
    }

    #[test]
    fn bump_second_moment_matches_flat_gaussian() {
        let m = MetricProfile::round(1025).unwrap();
        let eps = 1e-3;
        let u = delta_terminal(&m, 0.0, eps).unwrap();
        let d = geom2d::distance_from(&m, 0.0);
        let moment: Vec<f64> = u.iter().zip(&d).map(|(u, d)| u * d * d).collect();
        let second = geom2d::integrate(&m, &moment).unwrap();
        assert_relative_eq!(second, 4.0 * eps, max_relative = 1e-2);
    }

    #[test]
    fn pairing_with_heat_flow_is_conserved() {
        let tr = traj(65, 0.2, 0.99);
        let t_i = 0.9 * tr.t_exact();
        let terminal = delta_terminal(&tr.profile_at(t_i).unwrap(), 0.3, 0.01).unwrap();
        let sol = solve_backward(&tr, t_i, &terminal, &HeatOptions::default()).unwrap();
        let phi = ScalarField::from_fn(tr.grid(), |t| 0.3 + t.cos() + 0.5 * (2.0 * t).cos());
        let report = duality_check(&sol, &phi, &HeatOptions::default()).unwrap();
        assert!(report.drift < 1e-8, "drift {}", report.drift);
        let one = ScalarField::constant(tr.grid(), 1.0);
        let report = duality_check(&sol, &one, &HeatOptions::default()).unwrap();
        assert!(report.drift < 1e-12);
    }

    #[test]
    fn mirrored_bumps_give_mirrored_solutions() {
        let tr = traj(65, 0.0, 0.99);
        let t_i = 0.9;
        let north = delta_terminal(&tr.profile_at(t_i).unwrap(), 0.0, 0.01).unwrap();
        let south = delta_terminal(&tr.profile_at(t_i).unwrap(), PI, 0.01).unwrap();
        let a = solve_backward(&tr, t_i, &north, &HeatOptions::default()).unwrap();
        let b = solve_backward(&tr, t_i, &south, &HeatOptions::default()).unwrap();
        for k in 0..a.len() {
            let rev: Vec<f64> = b.u(k).iter().rev().copied().collect();
            assert_eq!(a.u(k), &rev[..]);
        }
    }

    #[test]
    fn potential_near_the_bump_follows_the_heat_kernel() {
        // Kähler heat kernel: f ≈ d²/(2s) − ln 2 for ε ≪ s ≪ 1.
        let tr = traj(257, 0.0, 0.95);
        let t_i = 0.9;
        let eps = 4e-5;
        let terminal = delta_terminal(&tr.profile_at(t_i).unwrap(), 0.0, eps).unwrap();
        let sol = solve_backward(&tr, t_i, &terminal, &HeatOptions::default())
            .unwrap()
            .with_horizon(t_i);
        let k = sol.nearest(t_i - 4e-3);
        let s = t_i - sol.times()[k];
        let f = sol.f(k);
        let d = geom2d::distance_from(&sol.profile(k), 0.0);
        let j = d.iter().position(|&d| d > (s).sqrt()).unwrap();
        let s_eff = s + 2.0 * eps;
        let expect = d[j] * d[j] / (2.0 * s_eff) + (s_eff / (2.0 * s)).ln();
        assert!((f[j] - expect).abs() < 0.05, "f {} vs {}", f[j], expect);
    }

    #[test]
    fn candidate_sequence_settles_on_round_sphere() {
        let tr = traj(65, 0.0, 0.9995);
        let seq = admissible_candidate(&tr, &[0.9, 0.99, 0.999], 0.0, 0.1, &HeatOptions::default()).unwrap();
        assert!(seq.warning.is_none(), "{:?}", seq.increments);
        let c = seq.candidate();
        for (k, &t) in c.times().iter().enumerate() {
            if t <= 0.5 {
                assert!(c.f(k).iter().all(|f| f.abs() < 0.05));
            }
        }
    }
}
