//! Unnormalized Kähler–Ricci flow on a rotationally symmetric S².
//!
//! In the conformal gauge the flow `∂ₜg = −Ric` reduces to the scalar PDE
//! `∂ₜw = −½K = −½ e^{-2w}(1 − Δ_round w)`. Gauss–Bonnet makes the area decay
//! exactly linearly, `Vol(t) = Vol(0) − 4πt`, so the extinction time is known in
//! closed form, `T = Vol(0)/4π`.
//!
//! Trajectories keep a slice every `stride` steps. Consumers see the conformal
//! factor `ρ = e^{2w}` as a cubic Hermite spline in time whose knot slopes are the
//! exact flow velocities `ρ̇ = −Kρ`; with these slopes the interpolated area is
//! still exactly linear in `t`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom2d::{self, gauss_curvature, Grid, MetricProfile};

/// Step control for [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    /// Upper bound on the time step.
    pub max_step: f64,
    /// Step is at most `cfl · min e^{2w} · Δθ²`.
    pub cfl: f64,
    /// Store one slice every `stride` steps.
    pub stride: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            max_step: 1e-3,
            cfl: 0.4,
            stride: 100,
        }
    }
}

/// Largest per-step change in `w` accepted before declaring the step unstable.
const MAX_STEP_CHANGE: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    grid: Arc<Grid>,
    times: Vec<f64>,
    profiles: Vec<MetricProfile>,
    t_exact: f64,
    step: f64,
    rho: Vec<Vec<f64>>,
    rho_rate: Vec<Vec<f64>>,
    curvature: Vec<Vec<f64>>,
    type1_sup: f64,
}

#[derive(Serialize, Deserialize)]
struct SnapshotJson {
    step: f64,
    #[serde(rename = "T_exact")]
    t_exact: f64,
    times: Vec<f64>,
    profiles: Vec<Vec<f64>>,
}

impl FlowTrajectory {
    /// Assembles a trajectory from stored slices and recomputes derived caches.
    pub fn from_slices(
        times: Vec<f64>,
        profiles: Vec<MetricProfile>,
        t_exact: f64,
        step: f64,
    ) -> Result<Self> {
        if times.is_empty() || times.len() != profiles.len() {
            return Err(Error::Invalid(format!(
                "{} times for {} profiles",
                times.len(),
                profiles.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("slice times must increase strictly".into()));
        }
        if let Some(&last) = times.last() {
            if last >= t_exact {
                return Err(Error::Range {
                    time: last,
                    lo: times[0],
                    hi: t_exact,
                });
            }
        }
        let grid = profiles[0].grid().clone();
        if profiles.iter().any(|p| **p.grid() != *grid) {
            return Err(Error::Invalid("slices live on different grids".into()));
        }
        let rho: Vec<Vec<f64>> = profiles.iter().map(|p| p.conformal_factor()).collect();
        let curvature: Vec<Vec<f64>> = profiles
            .iter()
            .map(|p| gauss_curvature(p).into_inner())
            .collect();
        let rho_rate = rho
            .iter()
            .zip(&curvature)
            .map(|(r, k)| r.iter().zip(k).map(|(r, k)| -r * k).collect())
            .collect();
        let type1_sup = times
            .iter()
            .zip(&curvature)
            .map(|(t, k)| max_abs(k) * (t_exact - t))
            .fold(0.0, f64::max);
        Ok(Self {
            grid,
            times,
            profiles,
            t_exact,
            step,
            rho,
            rho_rate,
            curvature,
            type1_sup,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn profiles(&self) -> &[MetricProfile] {
        &self.profiles
    }

    /// Extinction time from the area law.
    pub fn t_exact(&self) -> f64 {
        self.t_exact
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn type1_sup(&self) -> f64 {
        self.type1_sup
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Stored curvature of slice `k`.
    pub fn slice_curvature(&self, k: usize) -> &[f64] {
        &self.curvature[k]
    }

    pub fn slice_rho(&self, k: usize) -> &[f64] {
        &self.rho[k]
    }

    /// Index of a stored slice at exactly time `t`.
    pub fn slice_at(&self, t: f64) -> Option<usize> {
        self.times
            .binary_search_by(|s| s.partial_cmp(&t).unwrap())
            .ok()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(Error::Range {
                time: t,
                lo: self.start(),
                hi: self.end(),
            });
        }
        Ok(())
    }

    /// Index `k` with `times[k] ≤ t ≤ times[k+1]`.
    pub fn interval(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        if self.times.len() == 1 {
            return Ok(0);
        }
        let k = self.times.partition_point(|&s| s <= t);
        Ok(k.saturating_sub(1).min(self.times.len() - 2))
    }

    /// Conformal factor and its time derivative at `t`, written into the buffers.
    pub fn rho_into(&self, t: f64, rho: &mut [f64], rate: &mut [f64]) -> Result<()> {
        let k = self.interval(t)?;
        if self.times.len() == 1 || t == self.times[k] {
            rho.copy_from_slice(&self.rho[k]);
            rate.copy_from_slice(&self.rho_rate[k]);
            return Ok(());
        }
        self.hermite_into(k, t, rho, rate);
        Ok(())
    }

    /// Cubic Hermite evaluation on interval `k` (no range check).
    pub(crate) fn hermite_into(&self, k: usize, t: f64, rho: &mut [f64], rate: &mut [f64]) {
        let h = self.times[k + 1] - self.times[k];
        let s = (t - self.times[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = (s3 - 2.0 * s2 + s) * h;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = (s3 - s2) * h;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let (r0, r1) = (&self.rho[k], &self.rho[k + 1]);
        let (v0, v1) = (&self.rho_rate[k], &self.rho_rate[k + 1]);
        for j in 0..rho.len() {
            rho[j] = h00 * r0[j] + h10 * v0[j] + h01 * r1[j] + h11 * v1[j];
            rate[j] = d00 * r0[j] + d10 * v0[j] + d01 * r1[j] + d11 * v1[j];
        }
    }

    pub fn rho_at(&self, t: f64) -> Result<Vec<f64>> {
        let n = self.grid.len();
        let (mut rho, mut rate) = (vec![0.0; n], vec![0.0; n]);
        self.rho_into(t, &mut rho, &mut rate)?;
        Ok(rho)
    }

    /// Metric at time `t`; the stored profile when `t` is a slice time.
    pub fn profile_at(&self, t: f64) -> Result<MetricProfile> {
        if let Some(k) = self.slice_at(t) {
            return Ok(self.profiles[k].clone());
        }
        let rho = self.rho_at(t)?;
        MetricProfile::new(
            self.grid.clone(),
            rho.iter().map(|r| 0.5 * r.ln()).collect(),
        )
    }

    /// Scalar curvature `R = K` at time `t`.
    pub fn curvature_at(&self, t: f64) -> Result<Vec<f64>> {
        if let Some(k) = self.slice_at(t) {
            return Ok(self.curvature[k].clone());
        }
        Ok(gauss_curvature(&self.profile_at(t)?).into_inner())
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.profiles.iter().map(geom2d::volume).collect()
    }

    /// Mirror image of every slice under `θ ↦ π − θ`.
    pub fn reflected(&self) -> Self {
        Self::from_slices(
            self.times.clone(),
            self.profiles.iter().map(|p| p.reflected()).collect(),
            self.t_exact,
            self.step,
        )
        .expect("reflection preserves validity")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SnapshotJson {
            step: self.step,
            t_exact: self.t_exact,
            times: self.times.clone(),
            profiles: self.profiles.iter().map(|p| p.w().to_vec()).collect(),
        })
        .expect("snapshot serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let snap: SnapshotJson =
            serde_json::from_str(text).map_err(|e| Error::Invalid(e.to_string()))?;
        let n = snap
            .profiles
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Invalid("snapshot without profiles".into()))?;
        let grid = Grid::new(n)?;
        let profiles = snap
            .profiles
            .into_iter()
            .map(|w| MetricProfile::new(grid.clone(), w))
            .collect::<Result<Vec<_>>>()?;
        Self::from_slices(snap.times, profiles, snap.t_exact, snap.step)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `T = Vol(m0)/4π`.
pub fn extinction_time(m0: &MetricProfile) -> f64 {
    geom2d::volume(m0) / (4.0 * PI)
}

fn flow_rhs(grid: &Grid, w: &[f64], lap: &mut [f64], out: &mut [f64]) {
    grid.round_laplacian_into(w, lap);
    for j in 0..w.len() {
        out[j] = -0.5 * (-2.0 * w[j]).exp() * (1.0 - lap[j]);
    }
}

/// Integrates the flow from `m0` up to `t_max_fraction · T` with explicit RK4.
pub fn evolve(
    m0: &MetricProfile,
    t_max_fraction: f64,
    opts: &FlowOptions,
) -> Result<FlowTrajectory> {
    if !(t_max_fraction > 0.0 && t_max_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "t_max_fraction must lie in (0, 1), got {t_max_fraction}"
        )));
    }
    if !(opts.max_step > 0.0 && opts.cfl > 0.0 && opts.stride > 0) {
        return Err(Error::Invalid(format!("bad flow options {opts:?}")));
    }
    let grid = m0.grid().clone();
    let n = grid.len();
    let t_exact = extinction_time(m0);
    let t_end = t_max_fraction * t_exact;
    let h2 = grid.dtheta() * grid.dtheta();

    let mut w = m0.w().to_vec();
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut profiles = vec![m0.clone()];

    let mut lap = vec![0.0; n];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut steps = 0usize;

    while t < t_end {
        let min_rho = w.iter().map(|w| (2.0 * w).exp()).fold(f64::INFINITY, f64::min);
        let mut dt = opts.max_step.min(opts.cfl * min_rho * h2);
        if t + dt >= t_end || t_end - (t + dt) < 1e-3 * dt {
            dt = t_end - t;
        }

        flow_rhs(&grid, &w, &mut lap, &mut k1);
        for j in 0..n {
            stage[j] = w[j] + 0.5 * dt * k1[j];
        }
        flow_rhs(&grid, &stage, &mut lap, &mut k2);
        for j in 0..n {
            stage[j] = w[j] + 0.5 * dt * k2[j];
        }
        flow_rhs(&grid, &stage, &mut lap, &mut k3);
        for j in 0..n {
            stage[j] = w[j] + dt * k3[j];
        }
        flow_rhs(&grid, &stage, &mut lap, &mut k4);

        let mut change: f64 = 0.0;
        for j in 0..n {
            let dw = dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            change = change.max(dw.abs());
            w[j] += dw;
        }
        let failed_at = t + dt;
        if !change.is_finite() || change > MAX_STEP_CHANGE {
            return Err(Error::Integrator {
                time: failed_at,
                reason: format!(
                    "conformal exponent jumped by {change:e} in one step (curvature CFL violated)"
                ),
            });
        }
        t = if dt == t_end - t { t_end } else { t + dt };
        steps += 1;

        if steps % opts.stride == 0 || t == t_end {
            let profile = MetricProfile::new(grid.clone(), w.clone()).map_err(|e| match e {
                Error::NonFinite(_) => Error::Integrator {
                    time: t,
                    reason: e.to_string(),
                },
                other => other,
            })?;
            times.push(t);
            profiles.push(profile);
        }
    }

    FlowTrajectory::from_slices(times, profiles, t_exact, opts.max_step)
}

/// Sup over stored slices of `max_θ |K| (T − t)`.
pub fn type1_constant(traj: &FlowTrajectory) -> f64 {
    traj.type1_sup()
}

/// The normalized flow `g̃(s) = T g(t)/(T − t)`, `s = −T ln(1 − t/T)`.
#[derive(Debug, Clone)]
pub struct NormalizedFlow {
    pub scale: f64,
    pub times: Vec<f64>,
    pub profiles: Vec<MetricProfile>,
}

impl NormalizedFlow {
    pub fn volumes(&self) -> Vec<f64> {
        self.profiles.iter().map(geom2d::volume).collect()
    }
}

pub fn normalized_time(t: f64, t_exact: f64) -> f64 {
    -t_exact * (1.0 - t / t_exact).ln()
}

pub fn normalized_view(traj: &FlowTrajectory) -> Result<NormalizedFlow> {
    let big_t = traj.t_exact();
    let profiles = traj
        .times()
        .iter()
        .zip(traj.profiles())
        .map(|(&t, p)| p.shifted(0.5 * (big_t / (big_t - t)).ln()))
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalizedFlow {
        scale: big_t,
        times: traj.times().iter().map(|&t| normalized_time(t, big_t)).collect(),
        profiles,
    })
}

/// Parabolic rescaling `gᵢ(t) = (T − tᵢ)^{-1} g((T − tᵢ)t + tᵢ)`, restricted to
/// the stored slices whose rescaled time lies in `window`.
pub fn blowup_sequence(
    traj: &FlowTrajectory,
    t_i: f64,
    window: (f64, f64),
) -> Result<FlowTrajectory> {
    let big_t = traj.t_exact();
    if !(t_i < traj.end()) {
        return Err(Error::Range {
            time: t_i,
            lo: traj.start(),
            hi: traj.end(),
        });
    }
    let scale = big_t - t_i;
    let to_rescaled = |t: f64| (t - t_i) / scale;
    let (lo, hi) = window;
    let (first, last) = (to_rescaled(traj.start()), to_rescaled(traj.end()));
    let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    if lo < first - slack || hi > last + slack || lo > hi {
        return Err(Error::Range {
            time: if lo < first { lo } else { hi },
            lo: first,
            hi: last,
        });
    }
    let shift = -0.5 * scale.ln();
    let mut times = Vec::new();
    let mut profiles = Vec::new();
    for (&t, p) in traj.times().iter().zip(traj.profiles()) {
        let s = to_rescaled(t);
        if s >= lo - slack && s <= hi + slack {
            times.push(s);
            profiles.push(p.shifted(shift)?);
        }
    }
    if times.is_empty() {
        return Err(Error::Range {
            time: lo,
            lo: first,
            hi: last,
        });
    }
    FlowTrajectory::from_slices(times, profiles, 1.0, traj.step() / scale)
}

/// Outcome of the metric comparison `g(s) ≤ (T−t)/(T−s) g(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricComparison {
    /// `max_θ e^{2w(s)}/e^{2w(t)} · (T−s)/(T−t)`; bounded by one when the claim applies.
    pub ratio: f64,
    /// Smallest `K (T − τ)` over stored slices in `[t, s]`.
    pub min_scaled_curvature: f64,
    /// Whether `Ric (T−τ) ≥ −g` held on the window.
    pub hypothesis_holds: bool,
}

impl MetricComparison {
    pub fn holds(&self, tol: f64) -> bool {
        !self.hypothesis_holds || self.ratio <= 1.0 + tol
    }
}

pub fn metric_comparison_check(traj: &FlowTrajectory, t: f64, s: f64) -> Result<MetricComparison> {
    if t > s {
        return Err(Error::Invalid(format!("comparison needs t ≤ s, got {t} > {s}")));
    }
    let big_t = traj.t_exact();
    let rho_t = traj.rho_at(t)?;
    let rho_s = traj.rho_at(s)?;
    let factor = (big_t - s) / (big_t - t);
    let ratio = rho_s
        .iter()
        .zip(&rho_t)
        .map(|(a, b)| a / b * factor)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut min_scaled = f64::INFINITY;
    let mut sample = |tau: f64, k: &[f64]| {
        let m = k.iter().copied().fold(f64::INFINITY, f64::min);
        min_scaled = min_scaled.min(m * (big_t - tau));
    };
    sample(t, &traj.curvature_at(t)?);
    sample(s, &traj.curvature_at(s)?);
    for (k, &tau) in traj.times().iter().enumerate() {
        if tau > t && tau < s {
            sample(tau, traj.slice_curvature(k));
        }
    }
    Ok(MetricComparison {
        ratio,
        min_scaled_curvature: min_scaled,
        hypothesis_holds: min_scaled >= -1.0,
    })
}

/// Series of `max_θ K · (T − t)` over the stored slices.
pub fn scaled_curvature_series(traj: &FlowTrajectory) -> Vec<f64> {
    traj.times()
        .iter()
        .enumerate()
        .map(|(k, t)| {
            traj.slice_curvature(k)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
                * (traj.t_exact() - t)
        })
        .collect()
}

/// Diameter against `√(T − t)`: the constant fitted on the first quarter of
/// the run and the largest ratio seen afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct DiameterBound {
    pub fitted: f64,
    pub sup_after: f64,
}

pub fn diameter_bound(traj: &FlowTrajectory) -> Result<DiameterBound> {
    let big_t = traj.t_exact();
    let quarter = traj.start() + 0.25 * (traj.end() - traj.start());
    let mut fitted: f64 = 0.0;
    let mut sup_after: f64 = 0.0;
    for (&t, p) in traj.times().iter().zip(traj.profiles()) {
        let ratio = geom2d::meridian_distance(p, 0.0, PI)? / (big_t - t).sqrt();
        if t <= quarter {
            fitted = fitted.max(ratio);
        } else {
            sup_after = sup_after.max(ratio);
        }
    }
    Ok(DiameterBound { fitted, sup_after })
}
