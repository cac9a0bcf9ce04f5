//! Perelman's L-functional, minimizing meridian L-geodesics and reduced distance.
//!
//! Curves run backward from a base point `x` at time `tᵢ` to `q` at `t < tᵢ`.
//! With `r = √(tᵢ − s)` the action becomes
//!
//! ```text
//! L = ∫₀^{√(tᵢ−t)} [ 2r² R(θ, tᵢ − r²) + ρ(θ, tᵢ − r²) θ_r² ] dr,   |γ̇|² = 2ρθ̇²,
//! ```
//!
//! which removes the √-degeneracy at `s = tᵢ`. Curves are transcribed on a
//! uniform `r` mesh with a midpoint rule per segment; the same cost on a
//! `(θ, r)` lattice gives a dynamic-programming initial guess that a damped
//! Newton iteration then polishes (the transcribed Hessian is tridiagonal). Curves may run over a pole: colatitudes are folded into `[0, π]`
//! when sampling.
//!
//! `L̃ᵢ(q, t)` is the minimum of `Lᵢˣ(q, t)` over a base grid and
//! `l̃ᵢ = L̃ᵢ / (2√(tᵢ − t))`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::conjheat::ConjugateSolution;
use crate::error::{Error, Result};
use crate::flow::FlowTrajectory;
use crate::geom2d::{self, gauss_curvature, Grid, MetricProfile};
use crate::perelman::centred_derivative;

/// Discretization of the curve problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LgeoOptions {
    /// Number of `r` segments of a transcribed curve.
    pub stages: usize,
    /// Colatitude nodes of the shortest-path lattice, poles included.
    pub lattice: usize,
    /// Newton iteration cap.
    pub max_iters: usize,
    /// Gradient norm accepted as stationary, relative to `max(1, L)`.
    pub tol_stat: f64,
}

impl Default for LgeoOptions {
    fn default() -> Self {
        Self {
            stages: 64,
            lattice: 65,
            max_iters: 100,
            tol_stat: 1e-6,
        }
    }
}

/// Number of base colatitudes used for `L̃`.
pub const BASE_SAMPLES: usize = 33;

/// Fold a colatitude on the great circle into `[0, π]`; the sign is `dθ̄/dθ`.
fn fold(theta: f64) -> (f64, f64) {
    let x = theta.rem_euclid(2.0 * PI);
    if x > PI {
        (2.0 * PI - x, -1.0)
    } else {
        (x, 1.0)
    }
}

/// A meridian curve sampled at `r_k = k·√(tᵢ − t)/M`, from the base (`k = 0`)
/// to the endpoint (`k = M`).
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub t: f64,
    pub t_i: f64,
    pub theta: Vec<f64>,
}

impl Curve {
    pub fn constant(theta: f64, t: f64, t_i: f64, stages: usize) -> Self {
        Self {
            t,
            t_i,
            theta: vec![theta; stages + 1],
        }
    }

    /// Linear in `r` between base and endpoint.
    pub fn straight(base: f64, q: f64, t: f64, t_i: f64, stages: usize) -> Self {
        let theta = (0..=stages)
            .map(|k| base + (q - base) * k as f64 / stages as f64)
            .collect();
        Self { t, t_i, theta }
    }

    pub fn stages(&self) -> usize {
        self.theta.len() - 1
    }

    /// Curve time at node `k`.
    pub fn time(&self, k: usize) -> f64 {
        let r = (self.t_i - self.t).sqrt() * k as f64 / self.stages() as f64;
        self.t_i - r * r
    }

    /// `(s, θ)` samples ordered by increasing `s`.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        (0..=self.stages())
            .rev()
            .map(|k| (self.time(k), self.theta[k]))
            .collect()
    }
}

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Sub-panels per curve segment in [`l_functional`].
const PANELS: usize = 4;

/// Action of a piecewise-linear (in `r`) curve by composite Gauss–Legendre
/// quadrature along the interpolated flow.
pub fn l_functional(traj: &FlowTrajectory, curve: &Curve) -> Result<f64> {
    let tau = curve.t_i - curve.t;
    if tau < 0.0 || curve.theta.len() < 2 {
        return Err(Error::Invalid(format!(
            "curve needs t ≤ tᵢ and two nodes, got t = {}, tᵢ = {}",
            curve.t, curve.t_i
        )));
    }
    traj.interval(curve.t)?;
    traj.interval(curve.t_i)?;
    if tau == 0.0 {
        return Ok(0.0);
    }
    let grid = traj.grid();
    let m = curve.stages();
    let h = tau.sqrt() / m as f64;
    let hp = h / PANELS as f64;
    let mut total = 0.0;
    for k in 0..m {
        let (a, b) = (curve.theta[k], curve.theta[k + 1]);
        let slope = (b - a) / h;
        for p in 0..PANELS {
            let lo = k as f64 * h + p as f64 * hp;
            for &(x, wt) in &GAUSS4 {
                let r = lo + 0.5 * hp * (1.0 + x);
                let s = curve.t_i - r * r;
                let theta = fold(a + slope * (r - k as f64 * h)).0;
                let profile = traj.profile_at(s)?;
                let rho = (2.0 * grid.sample_cubic(profile.w(), theta).0).exp();
                let curvature = grid.sample_cubic(gauss_curvature(&profile).values(), theta).0;
                total += 0.5 * hp * wt * (2.0 * r * r * curvature + rho * slope * slope);
            }
        }
    }
    Ok(total)
}

/// Closed-form action of the constant curve on the round shrinking sphere.
pub fn round_constant_action(t_exact: f64, t: f64, t_i: f64) -> f64 {
    let b = (t_i - t).sqrt();
    let a = (t_exact - t_i).sqrt();
    if a == 0.0 {
        return 2.0 * b;
    }
    2.0 * (b - a * (b / a).atan())
}

/// Log conformal factor and curvature at the midpoint time of every segment.
struct Row {
    grid: Arc<Grid>,
    t: f64,
    t_i: f64,
    h: f64,
    r_mid: Vec<f64>,
    w: Vec<Vec<f64>>,
    curvature: Vec<Vec<f64>>,
}

impl Row {
    fn new(traj: &FlowTrajectory, t: f64, t_i: f64, stages: usize) -> Result<Self> {
        if !(t < t_i) {
            return Err(Error::Invalid(format!(
                "reduced distance needs t < tᵢ, got t = {t}, tᵢ = {t_i}"
            )));
        }
        traj.interval(t)?;
        traj.interval(t_i)?;
        let h = (t_i - t).sqrt() / stages as f64;
        let r_mid: Vec<f64> = (0..stages).map(|k| (k as f64 + 0.5) * h).collect();
        let mut w = Vec::with_capacity(stages);
        let mut curvature = Vec::with_capacity(stages);
        for &r in &r_mid {
            let profile = traj.profile_at(t_i - r * r)?;
            curvature.push(gauss_curvature(&profile).into_inner());
            w.push(profile.into_w());
        }
        Ok(Self {
            grid: traj.grid().clone(),
            t,
            t_i,
            h,
            r_mid,
            w,
            curvature,
        })
    }

    fn stages(&self) -> usize {
        self.r_mid.len()
    }

    /// Segment cost and its partials in the two end colatitudes.
    fn segment(&self, k: usize, a: f64, b: f64) -> (f64, f64, f64) {
        let (theta, sign) = fold(0.5 * (a + b));
        let (w, dw) = self.grid.sample_cubic(&self.w[k], theta);
        let (curv, dcurv) = self.grid.sample_cubic(&self.curvature[k], theta);
        let rho = (2.0 * w).exp();
        let r2 = self.r_mid[k] * self.r_mid[k];
        let d = b - a;
        let cost = self.h * 2.0 * r2 * curv + rho * d * d / self.h;
        let dmid = sign * (self.h * 2.0 * r2 * dcurv + 2.0 * rho * dw * d * d / self.h);
        let dd = 2.0 * rho * d / self.h;
        (cost, 0.5 * dmid - dd, 0.5 * dmid + dd)
    }

    /// Segment gradient and Hessian `[∂aa, ∂ab, ∂bb]`.
    fn segment_hessian(&self, k: usize, a: f64, b: f64) -> ([f64; 2], [f64; 3]) {
        let (theta, sign) = fold(0.5 * (a + b));
        let [w, dw, ddw] = self.grid.sample_cubic_d2(&self.w[k], theta);
        let [_, dcurv, ddcurv] = self.grid.sample_cubic_d2(&self.curvature[k], theta);
        let rho = (2.0 * w).exp();
        let pot = self.h * 2.0 * self.r_mid[k] * self.r_mid[k];
        let d = b - a;
        let c_m = sign * (pot * dcurv + 2.0 * rho * dw * d * d / self.h);
        let c_mm = pot * ddcurv + (2.0 * rho * ddw + 4.0 * rho * dw * dw) * d * d / self.h;
        let c_d = 2.0 * rho * d / self.h;
        let c_dd = 2.0 * rho / self.h;
        let c_md = sign * 4.0 * rho * dw * d / self.h;
        (
            [0.5 * c_m - c_d, 0.5 * c_m + c_d],
            [0.25 * c_mm - c_md + c_dd, 0.25 * c_mm - c_dd, 0.25 * c_mm + c_md + c_dd],
        )
    }

    fn action(&self, theta: &[f64]) -> f64 {
        (0..self.stages()).map(|k| self.segment(k, theta[k], theta[k + 1]).0).sum()
    }

    #[cfg(test)]
    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; theta.len()];
        for k in 0..self.stages() {
            let (_, ga, gb) = self.segment(k, theta[k], theta[k + 1]);
            g[k] += ga;
            g[k + 1] += gb;
        }
        g
    }
}

/// Segment costs between colatitude lattice nodes, tabulated at half-nodes.
struct Lattice {
    n: usize,
    cost_pot: Vec<Vec<f64>>,
    cost_kin: Vec<Vec<f64>>,
}

impl Lattice {
    fn new(row: &Row, n: usize) -> Self {
        let dh = PI / (2 * (n - 1)) as f64;
        let mut cost_pot = Vec::with_capacity(row.stages());
        let mut cost_kin = Vec::with_capacity(row.stages());
        for k in 0..row.stages() {
            let r2 = row.r_mid[k] * row.r_mid[k];
            let (mut pot, mut kin) = (Vec::with_capacity(2 * n - 1), Vec::with_capacity(2 * n - 1));
            for c in 0..2 * n - 1 {
                let theta = c as f64 * dh;
                let rho = (2.0 * row.grid.sample_cubic(&row.w[k], theta).0).exp();
                let curv = row.grid.sample_cubic(&row.curvature[k], theta).0;
                pot.push(row.h * 2.0 * r2 * curv);
                kin.push(rho / row.h);
            }
            cost_pot.push(pot);
            cost_kin.push(kin);
        }
        Self { n, cost_pot, cost_kin }
    }

    fn node(&self, a: usize) -> f64 {
        a as f64 * PI / (self.n - 1) as f64
    }

    /// Shortest path from every base node to lattice node `q`: the costs at
    /// `r = 0` and the successor table.
    fn shortest(&self, q: usize) -> (Vec<f64>, Vec<Vec<usize>>) {
        let m = self.cost_pot.len();
        let mut value = vec![f64::INFINITY; self.n];
        value[q] = 0.0;
        let mut next = vec![vec![0usize; self.n]; m];
        let step2 = |a: usize, b: usize| {
            let d = self.node(b) - self.node(a);
            d * d
        };
        for k in (0..m).rev() {
            let mut fresh = vec![f64::INFINITY; self.n];
            for a in 0..self.n {
                let (mut best, mut arg) = (f64::INFINITY, 0);
                for b in 0..self.n {
                    if !value[b].is_finite() {
                        continue;
                    }
                    let c = self.cost_pot[k][a + b] + self.cost_kin[k][a + b] * step2(a, b) + value[b];
                    if c < best {
                        best = c;
                        arg = b;
                    }
                }
                fresh[a] = best;
                next[k][a] = arg;
            }
            value = fresh;
        }
        (value, next)
    }

    /// Brute-force shortest path on the same nodes with edges spanning up to
    /// `span` stages (piecewise linear in `r` between lattice nodes); returns
    /// the cost from every base node.
    fn shortest_spanning(&self, row: &Row, q: usize, span: usize) -> Vec<f64> {
        let m = row.stages();
        let mut value = vec![vec![f64::INFINITY; self.n]; m + 1];
        value[m][q] = 0.0;
        for k in (0..m).rev() {
            for a in 0..self.n {
                let mut best = f64::INFINITY;
                for j in 1..=span.min(m - k) {
                    for b in 0..self.n {
                        let tail = value[k + j][b];
                        if !tail.is_finite() {
                            continue;
                        }
                        let (ta, tb) = (self.node(a), self.node(b));
                        let mut c = tail;
                        for i in 0..j {
                            let x0 = ta + (tb - ta) * i as f64 / j as f64;
                            let x1 = ta + (tb - ta) * (i + 1) as f64 / j as f64;
                            c += row.segment(k + i, x0, x1).0;
                            if c >= best {
                                break;
                            }
                        }
                        best = best.min(c);
                    }
                }
                value[k][a] = best;
            }
        }
        value.swap_remove(0)
    }

    fn path(&self, next: &[Vec<usize>], x: usize) -> Vec<f64> {
        let mut idx = x;
        let mut theta = vec![self.node(x)];
        for step in next {
            idx = step[idx];
            theta.push(self.node(idx));
        }
        theta
    }
}

/// A minimizing meridian L-geodesic.
#[derive(Debug, Clone, PartialEq)]
pub struct LGeodesicResult {
    /// Base colatitude at time `t_i`.
    pub base: f64,
    pub t_i: f64,
    /// Endpoint colatitude at time `t`.
    pub q: f64,
    pub t: f64,
    pub curve: Curve,
    /// `L`.
    pub action: f64,
    /// `l = L / (2√(tᵢ − t))`.
    pub reduced: f64,
    /// Value of the lattice initial guess (infinite when off-lattice).
    pub lattice: f64,
    /// Gradient norm of the transcribed action at the result.
    pub stationarity: f64,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve the tridiagonal system `(H + μI) x = rhs`; `None` unless every
/// pivot is positive.
fn tridiagonal_solve(diag: &[f64], off: &[f64], mu: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot = diag[0] + mu;
    if !(pivot > 0.0) {
        return None;
    }
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        c[i - 1] = off[i - 1] / pivot;
        pivot = diag[i] + mu - off[i - 1] * c[i - 1];
        if !(pivot > 0.0) {
            return None;
        }
        x[i] = (rhs[i] - off[i - 1] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Some(x)
}

/// Damped Newton on the interior nodes of `theta`; returns the final
/// interior gradient norm.
fn newton(row: &Row, theta: &mut [f64], opts: &LgeoOptions) -> f64 {
    let m = row.stages();
    let interior = m - 1;
    let mut cost = row.action(theta);
    let mut mu = 0.0;
    let mut stat = f64::INFINITY;
    for _ in 0..=opts.max_iters {
        let mut g = vec![0.0; m + 1];
        let mut diag = vec![0.0; m + 1];
        let mut off = vec![0.0; m];
        for k in 0..m {
            let ([ga, gb], [haa, hab, hbb]) = row.segment_hessian(k, theta[k], theta[k + 1]);
            g[k] += ga;
            g[k + 1] += gb;
            diag[k] += haa;
            diag[k + 1] += hbb;
            off[k] = hab;
        }
        let g = &g[1..m];
        stat = norm(g);
        if interior == 0 || stat <= opts.tol_stat * cost.max(1.0) {
            break;
        }
        let (diag, off) = (&diag[1..m], &off[1..m - 1]);
        let scale = diag.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let step = loop {
            if let Some(p) = tridiagonal_solve(diag, off, mu, &rhs) {
                break p;
            }
            mu = (10.0 * mu).max(1e-10 * scale);
        };
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut alpha = 1.0;
        let mut trial = theta.to_vec();
        let accepted = loop {
            for i in 0..interior {
                trial[i + 1] = theta[i + 1] + alpha * step[i];
            }
            let c = row.action(&trial);
            if c <= cost + 1e-4 * alpha * slope {
                break Some(c);
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                break None;
            }
        };
        match accepted {
            Some(c) => {
                theta.copy_from_slice(&trial);
                cost = c;
                mu *= 0.1;
            }
            None if mu < scale => mu = (10.0 * mu).max(1e-10 * scale),
            None => break,
        }
    }
    stat
}

/// Best of the given initial curves, polished by Newton's method.
fn refine(row: &Row, base: f64, q: f64, starts: &[Vec<f64>], lattice: f64, opts: &LgeoOptions) -> LGeodesicResult {
    let mut theta = starts
        .iter()
        .min_by(|a, b| row.action(a).total_cmp(&row.action(b)))
        .expect("at least one start")
        .clone();
    let stationarity = newton(row, &mut theta, opts);
    let action = row.action(&theta);
    let tau = row.t_i - row.t;
    LGeodesicResult {
        base,
        t_i: row.t_i,
        q,
        t: row.t,
        curve: Curve {
            t: row.t,
            t_i: row.t_i,
            theta,
        },
        action,
        reduced: action / (2.0 * tau.sqrt()),
        lattice,
        stationarity,
        converged: stationarity <= opts.tol_stat * action.max(1.0),
    }
}

fn lattice_index(n: usize, theta: f64) -> Option<usize> {
    let x = theta / PI * (n - 1) as f64;
    let k = x.round();
    ((x - k).abs() < 1e-9 && k >= 0.0 && k <= (n - 1) as f64).then_some(k as usize)
}

/// Minimizing L-geodesic from `(base, tᵢ)` back to `(q, t)` along a meridian.
pub fn minimize_l(
    traj: &FlowTrajectory,
    base: f64,
    q: f64,
    t: f64,
    t_i: f64,
    opts: &LgeoOptions,
) -> Result<LGeodesicResult> {
    let row = Row::new(traj, t, t_i, opts.stages)?;
    let lattice = Lattice::new(&row, opts.lattice);
    let snap = |theta: f64| ((theta.clamp(0.0, PI) / PI) * (opts.lattice - 1) as f64).round() as usize;
    let (values, next) = lattice.shortest(snap(q));
    let xb = snap(base);
    let mut path = lattice.path(&next, xb);
    let on_lattice = lattice_index(opts.lattice, base).is_some() && lattice_index(opts.lattice, q).is_some();
    path[0] = base;
    *path.last_mut().unwrap() = q;
    let straight = Curve::straight(base, q, t, t_i, opts.stages).theta;
    let lat = if on_lattice { values[xb] } else { f64::INFINITY };
    Ok(refine(&row, base, q, &[path, straight], lat, opts))
}

/// `l = L / (2√(tᵢ − t))`.
pub fn reduced_distance(result: &LGeodesicResult) -> Result<f64> {
    let tau = result.t_i - result.t;
    if !(tau > 0.0) {
        return Err(Error::Invalid(format!("reduced distance undefined at τ = {tau}")));
    }
    Ok(result.action / (2.0 * tau.sqrt()))
}

/// Colatitudes of a uniform base grid including both poles.
pub fn base_grid(samples: usize) -> Vec<f64> {
    (0..samples).map(|j| j as f64 * PI / (samples - 1) as f64).collect()
}

/// Actions to `(q, t)` from every base sample, each refined.
fn all_bases(row: &Row, q: f64, bases: &[f64], opts: &LgeoOptions) -> Vec<LGeodesicResult> {
    let lattice = Lattice::new(row, opts.lattice);
    let snap = |theta: f64| ((theta / PI) * (opts.lattice - 1) as f64).round() as usize;
    let (values, next) = lattice.shortest(snap(q));
    bases
        .iter()
        .map(|&x| {
            let mut path = lattice.path(&next, snap(x));
            path[0] = x;
            *path.last_mut().unwrap() = q;
            let straight = Curve::straight(x, q, row.t, row.t_i, opts.stages).theta;
            refine(row, x, q, &[path, straight], values[snap(x)], opts)
        })
        .collect()
}

fn check_bases(bases: &[f64], opts: &LgeoOptions) -> Result<()> {
    match bases.iter().all(|&x| lattice_index(opts.lattice, x).is_some()) {
        true => Ok(()),
        false => Err(Error::Invalid(format!(
            "base samples must lie on the {}-node lattice",
            opts.lattice
        ))),
    }
}

/// `L̃ᵢ(q, t)`: the minimum over `bases` and the minimizing base.
pub fn tilde_l(
    traj: &FlowTrajectory,
    q: f64,
    t: f64,
    t_i: f64,
    bases: &[f64],
    opts: &LgeoOptions,
) -> Result<(f64, f64)> {
    check_bases(bases, opts)?;
    let row = Row::new(traj, t, t_i, opts.stages)?;
    let all = all_bases(&row, q, bases, opts);
    let best = all
        .iter()
        .min_by(|a, b| a.action.total_cmp(&b.action))
        .ok_or_else(|| Error::Invalid("empty base grid".into()))?;
    Ok((best.action, best.base))
}

/// `Lᵢˣ(q, t)` over a grid of base points, endpoints and times, plus `L̃ᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDistanceField {
    pub t_i: f64,
    /// Shared colatitudes of endpoints and bases.
    pub thetas: Vec<f64>,
    pub times: Vec<f64>,
    /// `action[row][q][x]`.
    pub action: Vec<Vec<Vec<f64>>>,
    /// `L̃ᵢ[row][q]`.
    pub tilde: Vec<Vec<f64>>,
    /// Index of the minimizing base.
    pub argmin: Vec<Vec<usize>>,
    /// Refinements that stopped short of the stationarity tolerance.
    pub unconverged: usize,
}

impl ReducedDistanceField {
    fn tau(&self, row: usize) -> f64 {
        self.t_i - self.times[row]
    }

    /// `l̃ᵢ[row][q]`.
    pub fn tilde_reduced(&self) -> Vec<Vec<f64>> {
        (0..self.times.len())
            .map(|i| {
                let scale = 2.0 * self.tau(i).sqrt();
                self.tilde[i].iter().map(|v| v / scale).collect()
            })
            .collect()
    }

    /// `lᵢˣ[row][q]` for the base with index `x`.
    pub fn base_reduced(&self, x: usize) -> Vec<Vec<f64>> {
        (0..self.times.len())
            .map(|i| {
                let scale = 2.0 * self.tau(i).sqrt();
                self.action[i].iter().map(|v| v[x] / scale).collect()
            })
            .collect()
    }

    /// Smallest slack of `L̃ᵢ ≤ Lᵢˣ`; zero by construction.
    pub fn min_property(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for (row, tl) in self.action.iter().zip(&self.tilde) {
            for (v, &m) in row.iter().zip(tl) {
                for &a in v {
                    worst = worst.min(a - m);
                }
            }
        }
        worst
    }

    /// Largest `L̃ᵢ − C√(tᵢ − t)` and the supremum of `l̃ᵢ`.
    pub fn bound_check(&self, c: f64) -> (f64, f64) {
        let mut excess = f64::NEG_INFINITY;
        let mut sup = f64::NEG_INFINITY;
        for (i, row) in self.tilde.iter().enumerate() {
            let root = self.tau(i).sqrt();
            for &v in row {
                excess = excess.max(v - c * root);
                sup = sup.max(v / (2.0 * root));
            }
        }
        (excess, sup)
    }

    /// CSV with one line per `(q, t)`.
    pub fn to_csv(&self, residuals: Option<&InequalityResiduals>) -> String {
        let mut out = String::from("theta_q,t,t_i,L_tilde,l_tilde,res_ineq1,res_ineq2,argmin_base\n");
        let reduced = self.tilde_reduced();
        for (i, &t) in self.times.iter().enumerate() {
            for (j, &q) in self.thetas.iter().enumerate() {
                let (r1, r2) = residuals.map_or((f64::NAN, f64::NAN), |r| (r.first[i][j], r.second[i][j]));
                let row = [q, t, self.t_i, self.tilde[i][j], reduced[i][j], r1, r2, self.thetas[self.argmin[i][j]]];
                let row: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        out
    }
}

/// Build `Lᵢˣ(q, t)` and `L̃ᵢ` with endpoints and bases on `samples` colatitudes.
pub fn reduced_distance_field(
    traj: &FlowTrajectory,
    t_i: f64,
    times: &[f64],
    samples: usize,
    opts: &LgeoOptions,
) -> Result<ReducedDistanceField> {
    let thetas = base_grid(samples);
    check_bases(&thetas, opts)?;
    let rows: Vec<Row> = times
        .par_iter()
        .map(|&t| Row::new(traj, t, t_i, opts.stages))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..times.len())
        .flat_map(|i| (0..samples).map(move |j| (i, j)))
        .collect();
    let results: Vec<Vec<LGeodesicResult>> = jobs
        .par_iter()
        .map(|&(i, j)| all_bases(&rows[i], thetas[j], &thetas, opts))
        .collect();
    let mut action = vec![Vec::with_capacity(samples); times.len()];
    let mut tilde = vec![Vec::with_capacity(samples); times.len()];
    let mut argmin = vec![Vec::with_capacity(samples); times.len()];
    let mut unconverged = 0;
    for (&(i, _), res) in jobs.iter().zip(results) {
        unconverged += res.iter().filter(|r| !r.converged).count();
        let values: Vec<f64> = res.iter().map(|r| r.action).collect();
        let (arg, &min) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty base grid");
        action[i].push(values.clone());
        tilde[i].push(min);
        argmin[i].push(arg);
    }
    Ok(ReducedDistanceField {
        t_i,
        thetas,
        times: times.to_vec(),
        action,
        tilde,
        argmin,
        unconverged,
    })
}

/// Smallest `L̃ⱼ − L̃ᵢ` over the common grid, for `earlier.t_i ≤ later.t_i`.
pub fn tilde_monotonicity_check(earlier: &ReducedDistanceField, later: &ReducedDistanceField) -> Result<f64> {
    if earlier.thetas != later.thetas || earlier.times != later.times {
        return Err(Error::Invalid("fields are not on a common grid".into()));
    }
    if earlier.t_i > later.t_i {
        return Err(Error::Invalid(format!(
            "fields out of order: tᵢ = {} after {}",
            earlier.t_i, later.t_i
        )));
    }
    let mut worst = f64::INFINITY;
    for (a, b) in earlier.tilde.iter().zip(&later.tilde) {
        for (x, y) in a.iter().zip(b) {
            worst = worst.min(y - x);
        }
    }
    Ok(worst)
}

/// `l̃` extrapolated to `tᵢ = T` by a quadratic in `√(T − tᵢ)` through the last
/// three fields.
pub fn extrapolate_reduced(fields: &[ReducedDistanceField], t_exact: f64) -> Result<Vec<Vec<f64>>> {
    if fields.len() < 3 {
        return Err(Error::Invalid(format!("extrapolation needs three fields, got {}", fields.len())));
    }
    let last = &fields[fields.len() - 3..];
    let a: Vec<f64> = last.iter().map(|f| (t_exact - f.t_i).sqrt()).collect();
    // Lagrange weights at a = 0.
    let weight = |i: usize| {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        a[j] * a[k] / ((a[i] - a[j]) * (a[i] - a[k]))
    };
    let ls: Vec<Vec<Vec<f64>>> = last.iter().map(|f| f.tilde_reduced()).collect();
    let mut out = ls[0].clone();
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|m| weight(m) * ls[m][i][j]).sum();
        }
    }
    Ok(out)
}

/// Residuals of Perelman's two differential inequalities for an `l` field,
/// multiplied by `tᵢ − t`:
///
/// ```text
/// first  = −l_t − Δl + |∇l|² − R + 1/(tᵢ − t)       ≥ 0
/// second = 2Δl − |∇l|² + R + (l − 2)/(tᵢ − t)       ≤ 0
/// ```
///
/// Rows without two neighbours in time are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityResiduals {
    pub times: Vec<f64>,
    pub thetas: Vec<f64>,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    /// Nodes next to a non-smooth pole of `l`, excluded from the sign count.
    pub excluded: Vec<Vec<bool>>,
}

/// Sign statistics of [`InequalityResiduals`] over interior nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuestionSummary {
    pub nodes: usize,
    pub excluded: usize,
    pub first_violations: usize,
    pub second_violations: usize,
    /// Most negative scaled first residual.
    pub first_worst: f64,
    /// Most positive scaled second residual.
    pub second_worst: f64,
}

impl QuestionSummary {
    /// Fraction of counted nodes where both signs hold.
    pub fn pass_fraction(&self, both_ok: usize) -> f64 {
        both_ok as f64 / self.nodes.max(1) as f64
    }
}

impl InequalityResiduals {
    fn interior(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.thetas.len();
        (1..self.times.len().saturating_sub(1)).flat_map(move |i| (1..n - 1).map(move |j| (i, j)))
    }

    /// Fraction of interior, non-excluded nodes with both signs correct within `tol`.
    pub fn sign_fraction(&self, tol: f64) -> f64 {
        let (mut ok, mut total) = (0usize, 0usize);
        for (i, j) in self.interior().filter(|&(i, j)| !self.excluded[i][j]) {
            total += 1;
            if self.first[i][j] >= -tol && self.second[i][j] <= tol {
                ok += 1;
            }
        }
        ok as f64 / total.max(1) as f64
    }

    pub fn summary(&self, tol: f64) -> QuestionSummary {
        let mut s = QuestionSummary {
            nodes: 0,
            excluded: 0,
            first_violations: 0,
            second_violations: 0,
            first_worst: f64::INFINITY,
            second_worst: f64::NEG_INFINITY,
        };
        for (i, j) in self.interior() {
            if self.excluded[i][j] {
                s.excluded += 1;
                continue;
            }
            s.nodes += 1;
            let (a, b) = (self.first[i][j], self.second[i][j]);
            s.first_violations += (a < -tol) as usize;
            s.second_violations += (b > tol) as usize;
            s.first_worst = s.first_worst.min(a);
            s.second_worst = s.second_worst.max(b);
        }
        s
    }
}

/// Pole nodes where `l` has a conical kink, and the nodes within two cells.
fn kinks(l: &[f64]) -> Vec<bool> {
    let n = l.len();
    let mut out = vec![false; n];
    let cone = |a: f64, b: f64, c: f64| (b - a).abs() > 0.5 * (c - b).abs();
    if cone(l[0], l[1], l[2]) {
        out[..3].iter_mut().for_each(|x| *x = true);
    }
    if cone(l[n - 1], l[n - 2], l[n - 3]) {
        out[n - 3..].iter_mut().for_each(|x| *x = true);
    }
    out
}

/// Residuals of the two inequalities for `l[row][j]` on the uniform grid of
/// `l[0].len()` colatitudes at `times`.
pub fn perelman_l_inequalities(
    traj: &FlowTrajectory,
    t_i: f64,
    times: &[f64],
    l: &[Vec<f64>],
) -> Result<InequalityResiduals> {
    let n = l.first().map_or(0, |r| r.len());
    let coarse = Grid::new(n)?;
    if l.len() != times.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            got: l.len(),
        });
    }
    let fine = traj.grid();
    let nan = vec![f64::NAN; n];
    let mut first = vec![nan.clone(); times.len()];
    let mut second = vec![nan; times.len()];
    let mut excluded = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        excluded.push(kinks(&l[i]));
        if i == 0 || i + 1 == times.len() {
            continue;
        }
        let profile = traj.profile_at(t)?;
        let curvature = gauss_curvature(&profile);
        let w: Vec<f64> = coarse.theta().iter().map(|&x| fine.sample_cubic(profile.w(), x).0).collect();
        let metric = MetricProfile::new(coarse.clone(), w)?;
        let lap = geom2d::laplacian(&metric, &l[i])?;
        let grad = geom2d::grad_norm_sq(&metric, &l[i])?;
        let tau = t_i - t;
        for j in 0..n {
            let r = fine.sample_cubic(curvature.values(), coarse.theta()[j]).0;
            let lt = centred_derivative(
                [times[i - 1], t, times[i + 1]],
                [l[i - 1][j], l[i][j], l[i + 1][j]],
            );
            first[i][j] = tau * (-lt - lap[j] + grad[j] - r) + 1.0;
            second[i][j] = tau * (2.0 * lap[j] - grad[j] + r) + l[i][j] - 2.0;
        }
    }
    Ok(InequalityResiduals {
        times: times.to_vec(),
        thetas: coarse.theta().to_vec(),
        first,
        second,
        excluded,
    })
}

/// The two inequalities evaluated on `l̃ᵢ`; exploratory, never asserted.
pub fn question_experiment(
    traj: &FlowTrajectory,
    field: &ReducedDistanceField,
    tol: f64,
) -> Result<(InequalityResiduals, QuestionSummary)> {
    let res = perelman_l_inequalities(traj, field.t_i, &field.times, &field.tilde_reduced())?;
    let summary = res.summary(tol);
    Ok((res, summary))
}

/// `Ṽ(t) = (T − t)⁻¹ ∫ e^{−l̃} dV` with `l̃` given on a uniform colatitude grid.
pub fn reduced_volume(traj: &FlowTrajectory, t: f64, l: &[f64]) -> Result<f64> {
    let coarse = Grid::new(l.len())?;
    let profile = traj.profile_at(t)?;
    let fine = traj.grid();
    let weight: Vec<f64> = fine.theta().iter().map(|&x| (-coarse.sample_cubic(l, x).0).exp()).collect();
    Ok(geom2d::integrate(&profile, &weight)? / (traj.t_exact() - t))
}

/// Smallest `l − f` for a delta-limit solution and the reduced distance based
/// at the same point and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlSlack {
    pub min_slack: f64,
    pub t: f64,
    pub theta: f64,
}

/// Check `f(q, t) ≤ l(q, tᵢ − t)` at the stored times nearest `rows`, on
/// `samples` colatitudes.
pub fn f_le_l_check(sol: &ConjugateSolution, rows: &[f64], samples: usize, opts: &LgeoOptions) -> Result<FlSlack> {
    let base = sol
        .base()
        .ok_or_else(|| Error::Invalid("f ≤ l needs a delta-limit solution".into()))?;
    let traj = sol.trajectory();
    let thetas = base_grid(samples);
    check_bases(&thetas, opts)?;
    let ks: Vec<usize> = rows.iter().map(|&t| sol.nearest(t)).collect();
    let slacks: Vec<FlSlack> = ks
        .par_iter()
        .map(|&k| -> Result<FlSlack> {
            let t = sol.times()[k];
            let row = Row::new(traj, t, sol.t_i(), opts.stages)?;
            let f = sol.f(k);
            let mut worst = FlSlack {
                min_slack: f64::INFINITY,
                t,
                theta: 0.0,
            };
            for &q in &thetas {
                let l = all_bases(&row, q, &[base], opts)[0].reduced;
                let fq = sol.grid().sample_cubic(&f, q).0;
                if l - fq < worst.min_slack {
                    worst.min_slack = l - fq;
                    worst.theta = q;
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    slacks
        .into_iter()
        .min_by(|a, b| a.min_slack.total_cmp(&b.min_slack))
        .ok_or_else(|| Error::Invalid("no rows".into()))
}

/// Transcription action and the brute-force lattice action for one triple;
/// lattice edges span up to `span` stages.
pub fn lattice_oracle(
    traj: &FlowTrajectory,
    base: f64,
    q: f64,
    t: f64,
    t_i: f64,
    span: usize,
    opts: &LgeoOptions,
) -> Result<(f64, f64)> {
    let (xb, qb) = match (lattice_index(opts.lattice, base), lattice_index(opts.lattice, q)) {
        (Some(x), Some(q)) => (x, q),
        _ => return Err(Error::Invalid("oracle endpoints must be lattice nodes".into())),
    };
    let res = minimize_l(traj, base, q, t, t_i, opts)?;
    let row = Row::new(traj, t, t_i, opts.stages)?;
    let lattice = Lattice::new(&row, opts.lattice);
    Ok((res.action, lattice.shortest_spanning(&row, qb, span)[xb]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{evolve, FlowOptions};

    fn round(frac: f64) -> Arc<FlowTrajectory> {
        let m = MetricProfile::round(65).unwrap();
        Arc::new(evolve(&m, frac, &FlowOptions::default()).unwrap())
    }

    #[test]
    fn constant_curve_matches_closed_form() {
        let traj = round(0.9995);
        let t_exact = traj.t_exact();
        for &(t, t_i) in &[(0.0, 0.99), (0.5, 0.999), (0.2, 0.9)] {
            let c = Curve::constant(0.0, t * t_exact, t_i * t_exact, 64);
            let l = l_functional(&traj, &c).unwrap();
            let exact = round_constant_action(t_exact, t * t_exact, t_i * t_exact);
            assert!((l - exact).abs() < 1e-6, "{l} vs {exact}");
        }
        let c = Curve::constant(1.0, 0.5, 0.5, 8);
        assert_eq!(l_functional(&traj, &c).unwrap(), 0.0);
    }

    #[test]
    fn fold_reflects_through_poles() {
        assert_eq!(fold(0.3), (0.3, 1.0));
        let (x, s) = fold(-0.3);
        assert!((x - 0.3).abs() < 1e-15 && s == -1.0);
        let (x, s) = fold(PI + 0.2);
        assert!((x - (PI - 0.2)).abs() < 1e-14 && s == -1.0);
    }

    #[test]
    fn gradient_matches_differences() {
        let traj = round(0.99);
        let m0 = MetricProfile::conformal_cos(65, 0.2).unwrap();
        let pert = evolve(&m0, 0.99, &FlowOptions::default()).unwrap();
        for tr in [&*traj, &pert] {
            let t_exact = tr.t_exact();
            let row = Row::new(tr, 0.1 * t_exact, 0.9 * t_exact, 16).unwrap();
            let theta: Vec<f64> = (0..=16).map(|k| 0.4 + 0.1 * k as f64 + 0.05 * (k as f64).sin()).collect();
            let g = row.gradient(&theta);
            for k in [0, 3, 9, 16] {
                let mut p = theta.clone();
                let mut m = theta.clone();
                p[k] += 1e-6;
                m[k] -= 1e-6;
                let fd = (row.action(&p) - row.action(&m)) / 2e-6;
                assert!((fd - g[k]).abs() < 1e-6 * (1.0 + g[k].abs()), "{k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let m0 = MetricProfile::conformal_cos(65, 0.2).unwrap();
        let traj = evolve(&m0, 0.99, &FlowOptions::default()).unwrap();
        let t_exact = traj.t_exact();
        let row = Row::new(&traj, 0.1 * t_exact, 0.9 * t_exact, 16).unwrap();
        for &(k, a, b) in &[(3, 0.4, 0.55), (10, 2.9, 3.3), (0, -0.2, 0.1)] {
            let ([ga, gb], [haa, hab, hbb]) = row.segment_hessian(k, a, b);
            let (_, ga0, gb0) = row.segment(k, a, b);
            assert!((ga - ga0).abs() < 1e-12 && (gb - gb0).abs() < 1e-12);
            let e = 1e-6;
            let (_, ga1, gb1) = row.segment(k, a + e, b);
            let (_, ga2, _) = row.segment(k, a, b + e);
            let (_, _, gb2) = row.segment(k, a, b + e);
            let tol = 1e-4 * (1.0 + haa.abs() + hbb.abs());
            assert!(((ga1 - ga) / e - haa).abs() < tol, "{k} aa");
            assert!(((gb1 - gb) / e - hab).abs() < tol, "{k} ab");
            assert!(((ga2 - ga) / e - hab).abs() < tol, "{k} ba");
            assert!(((gb2 - gb) / e - hbb).abs() < tol, "{k} bb");
        }
    }

    #[test]
    fn tridiagonal_solver_matches_dense_product() {
        let diag = [4.0, 5.0, 6.0, 3.0];
        let off = [1.0, -2.0, 0.5];
        let rhs = [1.0, 2.0, -1.0, 0.5];
        let x = tridiagonal_solve(&diag, &off, 0.0, &rhs).unwrap();
        for i in 0..4 {
            let mut y = diag[i] * x[i];
            if i > 0 {
                y += off[i - 1] * x[i - 1];
            }
            if i < 3 {
                y += off[i] * x[i + 1];
            }
            assert!((y - rhs[i]).abs() < 1e-12);
        }
        assert!(tridiagonal_solve(&[-1.0, 2.0], &[0.0], 0.0, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn constant_curve_is_optimal_on_round() {
        let traj = round(0.9995);
        let t_exact = traj.t_exact();
        let opts = LgeoOptions::default();
        let (t, t_i) = (0.3 * t_exact, 0.99 * t_exact);
        let res = minimize_l(&traj, 1.0, 1.0, t, t_i, &opts).unwrap();
        let exact = round_constant_action(t_exact, t, t_i);
        assert!(res.action <= Row::new(&traj, t, t_i, 64).unwrap().action(&vec![1.0; 65]) + 1e-15);
        assert!((res.action - exact).abs() < 1e-6, "{} vs {exact}", res.action);
        assert!(res.curve.theta.iter().all(|&x| (x - 1.0).abs() < 1e-6));
        assert!(res.converged);
    }

    #[test]
    fn reduced_distance_tends_to_one() {
        let traj = round(0.999_995);
        let t_exact = traj.t_exact();
        let opts = LgeoOptions::default();
        let res = minimize_l(&traj, 0.0, 0.0, 0.0, 0.99999 * t_exact, &opts).unwrap();
        let l = reduced_distance(&res).unwrap();
        assert!((l - 1.0).abs() < 1e-2, "{l}");
        let mut zero = res.clone();
        zero.t = zero.t_i;
        assert!(reduced_distance(&zero).is_err());
    }

    #[test]
    fn transcription_beats_lattice_and_straight_line() {
        let m0 = MetricProfile::conformal_cos(65, 0.2).unwrap();
        let traj = evolve(&m0, 0.995, &FlowOptions::default()).unwrap();
        let t_exact = traj.t_exact();
        let opts = LgeoOptions::default();
        let (t, t_i) = (0.2 * t_exact, 0.99 * t_exact);
        let res = minimize_l(&traj, 0.0, PI, t, t_i, &opts).unwrap();
        let straight = Row::new(&traj, t, t_i, 64)
            .unwrap()
            .action(&Curve::straight(0.0, PI, t, t_i, 64).theta);
        assert!(res.converged, "{}", res.stationarity);
        assert!(res.action <= res.lattice);
        assert!(res.action <= straight);
        let (action, lattice) = lattice_oracle(&traj, 0.0, PI, t, t_i, 4, &opts).unwrap();
        assert_eq!(action, res.action);
        assert!(action <= lattice && (lattice - action) / action < 0.02);
    }

    #[test]
    fn round_field_is_symmetric_and_bounded() {
        let traj = round(0.9995);
        let t_exact = traj.t_exact();
        let opts = LgeoOptions {
            stages: 16,
            lattice: 17,
            ..Default::default()
        };
        let times = [0.0, 0.3 * t_exact, 0.6 * t_exact];
        let a = reduced_distance_field(&traj, 0.9 * t_exact, &times, 9, &opts).unwrap();
        let b = reduced_distance_field(&traj, 0.99 * t_exact, &times, 9, &opts).unwrap();
        assert_eq!(a.min_property(), 0.0);
        for (i, &t) in times.iter().enumerate() {
            let exact = round_constant_action(t_exact, t, 0.9 * t_exact);
            for j in 0..9 {
                assert_eq!(a.argmin[i][j], j);
                assert!((a.tilde[i][j] - exact).abs() < 1e-4);
            }
        }
        assert!(tilde_monotonicity_check(&a, &b).unwrap() > 0.0);
        assert!(tilde_monotonicity_check(&b, &a).is_err());
        let (excess, sup) = b.bound_check(2.0);
        assert!(excess < 0.0 && sup < 1.0);
        assert!(b.to_csv(None).lines().count() == 28);
    }

    #[test]
    fn round_reduced_volume() {
        let traj = round(0.9995);
        let t = 0.4 * traj.t_exact();
        let v = reduced_volume(&traj, t, &vec![0.7; 17]).unwrap();
        assert!((v - 4.0 * PI * (-0.7f64).exp()).abs() < 1e-9, "{v}");
        let shifted = reduced_volume(&traj, t, &vec![1.7; 17]).unwrap();
        assert!((shifted / v - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn constant_field_has_soliton_residuals() {
        // l ≡ 1 with tᵢ = T is the equality case of both inequalities.
        let traj = round(0.9995);
        let t_exact = traj.t_exact();
        let times: Vec<f64> = (0..5).map(|k| 0.1 * k as f64 * t_exact).collect();
        let l = vec![vec![1.0; 9]; 5];
        let res = perelman_l_inequalities(&traj, t_exact, &times, &l).unwrap();
        assert!(res.first[0][0].is_nan());
        for i in 1..4 {
            for j in 0..9 {
                assert!(res.first[i][j].abs() < 1e-9 && res.second[i][j].abs() < 1e-9);
            }
        }
        assert_eq!(res.sign_fraction(1e-6), 1.0);
    }

    #[test]
    fn kinks_flag_cones_only() {
        let smooth: Vec<f64> = base_grid(9).iter().map(|x| x.cos()).collect();
        assert!(kinks(&smooth).iter().all(|x| !x));
        let cone: Vec<f64> = base_grid(9).iter().map(|x| (PI - x).abs()).collect();
        let k = kinks(&cone);
        assert!(k[8] && k[6] && !k[5]);
    }
}
