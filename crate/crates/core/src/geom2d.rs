//! Rotationally symmetric metrics on S² in the conformal gauge.
//!
//! A metric is stored as `e^{2w(θ)} g_round` on a uniform colatitude grid that
//! includes both poles. All geometric operators use the Kähler normalization of
//! a complex curve:
//!
//! * scalar curvature `R = K` (Gauss curvature),
//! * `Δ = ½ Δ_Riemannian = ½ e^{-2w} Δ_round`,
//! * `|∇φ|² = ½ e^{-2w} (φ')²` for covectors, and by duality
//!   `|X|² = 2 e^{2w} (θ')²` for a meridian velocity,
//! * the ordinary Riemannian area element `dV = e^{2w} dA_round`.
//!
//! The round Laplacian is a finite-volume flux divergence over dual cells
//! bounded by the half-node latitudes, so `Σ A_j (Δ_round φ)_j = 0` holds to
//! rounding error and the discrete Gauss–Bonnet sum is exactly `4π`.

use std::f64::consts::PI;
use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible grid.
pub const MIN_NODES: usize = 5;

/// Conformal factors `e^{2w}` below this value are treated as metric collapse.
pub const COLLAPSE_FLOOR: f64 = 1e-12;

/// Uniform colatitude grid `θ_j = jπ/(n-1)` with finite-volume weights.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    dtheta: f64,
    theta: Vec<f64>,
    area: Vec<f64>,
    flux: Vec<f64>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl Grid {
    pub fn new(n: usize) -> Result<Arc<Self>> {
        if n < MIN_NODES {
            return Err(Error::DegenerateGrid(n));
        }
        let dtheta = PI / (n - 1) as f64;
        let theta: Vec<f64> = (0..n).map(|j| j as f64 * dtheta).collect();

        // Weights are built on the northern half and mirrored so the grid is
        // exactly symmetric under θ ↦ π − θ.
        let half_angle = |j: usize| (j as f64 + 0.5) * dtheta;
        let mut area = vec![0.0; n];
        let mut flux = vec![0.0; n - 1];
        for j in 0..n.div_ceil(2) {
            area[j] = if j == 0 {
                2.0 * PI * (1.0 - (0.5 * dtheta).cos())
            } else {
                2.0 * PI * (half_angle(j - 1).cos() - half_angle(j).cos())
            };
            area[n - 1 - j] = area[j];
        }
        for j in 0..(n - 1).div_ceil(2) {
            flux[j] = 2.0 * PI * half_angle(j).sin() / dtheta;
            flux[n - 2 - j] = flux[j];
        }
        Ok(Arc::new(Self {
            n,
            dtheta,
            theta,
            area,
            flux,
        }))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Dual-cell areas on the unit round sphere; they sum to `4π`.
    pub fn area(&self) -> &[f64] {
        &self.area
    }

    pub fn check(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: values.len(),
            });
        }
        Ok(())
    }

    /// Round-sphere Laplacian `φ'' + cot θ φ'` as a flux divergence.
    pub fn round_laplacian(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.round_laplacian_into(phi, &mut out);
        out
    }

    pub fn round_laplacian_into(&self, phi: &[f64], out: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let up = if j + 1 < n {
                self.flux[j] * (phi[j + 1] - phi[j])
            } else {
                0.0
            };
            let down = if j > 0 {
                self.flux[j - 1] * (phi[j] - phi[j - 1])
            } else {
                0.0
            };
            out[j] = (up - down) / self.area[j];
        }
    }

    /// Central first derivative; zero at the poles where regularity forces `φ' = 0`.
    pub fn derivative(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for j in 1..n - 1 {
            out[j] = (phi[j + 1] - phi[j - 1]) / (2.0 * self.dtheta);
        }
        out
    }

    /// Central second derivative with even reflection across the poles.
    pub fn second_derivative(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.n;
        let h2 = self.dtheta * self.dtheta;
        let mut out = vec![0.0; n];
        out[0] = 2.0 * (phi[1] - phi[0]) / h2;
        out[n - 1] = 2.0 * (phi[n - 2] - phi[n - 1]) / h2;
        for j in 1..n - 1 {
            out[j] = (phi[j + 1] - 2.0 * phi[j] + phi[j - 1]) / h2;
        }
        out
    }

    /// Round-sphere integral `Σ A_j φ_j`.
    pub fn integrate_round(&self, phi: &[f64]) -> f64 {
        self.mirrored_sum(|j| self.area[j] * phi[j])
    }

    /// `Σ_j term(j)`, accumulated over mirror pairs `(j, n−1−j)` so the
    /// result is bit-identical for reflected data.
    pub fn mirrored_sum(&self, term: impl Fn(usize) -> f64) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for j in 0..n / 2 {
            total += term(j) + term(n - 1 - j);
        }
        if n % 2 == 1 {
            total += term(n / 2);
        }
        total
    }

    fn locate(&self, theta: f64) -> (usize, f64) {
        let x = (theta.clamp(0.0, PI) / self.dtheta).min((self.n - 1) as f64);
        let j = (x.floor() as usize).min(self.n - 2);
        (j, x - j as f64)
    }

    /// Piecewise-linear interpolation of nodal values.
    pub fn sample_linear(&self, values: &[f64], theta: f64) -> f64 {
        let (j, s) = self.locate(theta);
        values[j] + s * (values[j + 1] - values[j])
    }

    /// Catmull–Rom cubic interpolation, with even reflection across the poles.
    /// Returns the value and its θ-derivative.
    pub fn sample_cubic(&self, values: &[f64], theta: f64) -> (f64, f64) {
        let [value, slope, _] = self.sample_cubic_d2(values, theta);
        (value, slope)
    }

    /// As [`Grid::sample_cubic`], also returning the second θ-derivative
    /// (piecewise linear, discontinuous at nodes).
    pub fn sample_cubic_d2(&self, values: &[f64], theta: f64) -> [f64; 3] {
        let n = self.n as isize;
        let (j, s) = self.locate(theta);
        let at = |k: isize| -> f64 {
            let k = if k < 0 {
                -k
            } else if k > n - 1 {
                2 * (n - 1) - k
            } else {
                k
            };
            values[k as usize]
        };
        let j = j as isize;
        let (p0, p1, p2, p3) = (at(j - 1), at(j), at(j + 1), at(j + 2));
        let m1 = 0.5 * (p2 - p0);
        let m2 = 0.5 * (p3 - p1);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let value = h00 * p1 + h10 * m1 + h01 * p2 + h11 * m2;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        let slope = (d00 * p1 + d10 * m1 + d01 * p2 + d11 * m2) / self.dtheta;
        let e00 = 12.0 * s - 6.0;
        let e10 = 6.0 * s - 4.0;
        let e11 = 6.0 * s - 2.0;
        let second = (e00 * (p1 - p2) + e10 * m1 + e11 * m2) / (self.dtheta * self.dtheta);
        [value, slope, second]
    }
}

/// Nodal values of a function on the colatitude grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Self(grid.theta().iter().map(|&t| f(t)).collect())
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self(vec![c; grid.len()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Deref for ScalarField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ScalarField {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// The metric `e^{2w} g_round`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricProfile {
    grid: Arc<Grid>,
    w: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProfileJson {
    n_nodes: usize,
    w: Vec<f64>,
}

impl MetricProfile {
    pub fn new(grid: Arc<Grid>, w: Vec<f64>) -> Result<Self> {
        grid.check(&w)?;
        for (node, &wj) in w.iter().enumerate() {
            if !wj.is_finite() {
                return Err(Error::NonFinite(node));
            }
            let factor = (2.0 * wj).exp();
            if factor < COLLAPSE_FLOOR {
                return Err(Error::DegenerateMetric { node, factor });
            }
        }
        Ok(Self { grid, w })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let w = grid.theta().iter().map(|&t| f(t)).collect();
        Self::new(grid, w)
    }

    /// Unit round sphere.
    pub fn round(n: usize) -> Result<Self> {
        Self::from_fn(Grid::new(n)?, |_| 0.0)
    }

    /// The conformal-cosine family `w = a cos θ`.
    pub fn conformal_cos(n: usize, amplitude: f64) -> Result<Self> {
        Self::from_fn(Grid::new(n)?, |t| amplitude * t.cos())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn into_w(self) -> Vec<f64> {
        self.w
    }

    /// Conformal factor `e^{2w}` per node.
    pub fn conformal_factor(&self) -> Vec<f64> {
        self.w.iter().map(|w| (2.0 * w).exp()).collect()
    }

    /// Adds a constant to `w`, i.e. scales the metric by `e^{2c}`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.w.iter().map(|w| w + c).collect())
    }

    /// Mirror image under `θ ↦ π − θ`.
    pub fn reflected(&self) -> Self {
        let mut w = self.w.clone();
        w.reverse();
        Self {
            grid: self.grid.clone(),
            w,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ProfileJson {
            n_nodes: self.grid.len(),
            w: self.w.clone(),
        })
        .expect("profile serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parsed: ProfileJson =
            serde_json::from_str(text).map_err(|e| Error::Invalid(e.to_string()))?;
        if parsed.w.len() != parsed.n_nodes {
            return Err(Error::Dimension {
                expected: parsed.n_nodes,
                got: parsed.w.len(),
            });
        }
        Self::new(Grid::new(parsed.n_nodes)?, parsed.w)
    }
}

/// Gauss curvature `K = e^{-2w}(1 − Δ_round w)`; equal to the Kähler scalar curvature.
pub fn gauss_curvature(m: &MetricProfile) -> ScalarField {
    let lap = m.grid.round_laplacian(&m.w);
    m.w.iter()
        .zip(&lap)
        .map(|(w, l)| (-2.0 * w).exp() * (1.0 - l))
        .collect::<Vec<_>>()
        .into()
}

/// Kähler Laplacian `½ e^{-2w} Δ_round φ`.
pub fn laplacian(m: &MetricProfile, phi: &[f64]) -> Result<ScalarField> {
    m.grid.check(phi)?;
    let lap = m.grid.round_laplacian(phi);
    Ok(m.w
        .iter()
        .zip(&lap)
        .map(|(w, l)| 0.5 * (-2.0 * w).exp() * l)
        .collect::<Vec<_>>()
        .into())
}

/// Kähler gradient norm `½ e^{-2w} (φ')²`.
pub fn grad_norm_sq(m: &MetricProfile, phi: &[f64]) -> Result<ScalarField> {
    m.grid.check(phi)?;
    let d = m.grid.derivative(phi);
    Ok(m.w
        .iter()
        .zip(&d)
        .map(|(w, d)| 0.5 * (-2.0 * w).exp() * d * d)
        .collect::<Vec<_>>()
        .into())
}

/// Riemannian area `2π ∫ e^{2w} sin θ dθ`.
pub fn volume(m: &MetricProfile) -> f64 {
    m.grid.mirrored_sum(|j| m.grid.area[j] * (2.0 * m.w[j]).exp())
}

/// `∫ φ dV` against the metric's area element.
pub fn integrate(m: &MetricProfile, phi: &[f64]) -> Result<f64> {
    m.grid.check(phi)?;
    Ok(m.grid
        .mirrored_sum(|j| m.grid.area[j] * (2.0 * m.w[j]).exp() * phi[j]))
}

/// `∫ e^{w} dθ` over one piecewise-linear cell segment.
fn segment_length(w0: f64, w1: f64, h: f64) -> f64 {
    let dw = w1 - w0;
    if dw.abs() < 1e-8 {
        h * (0.5 * (w0 + w1)).exp() * (1.0 + dw * dw / 24.0)
    } else {
        h * (w1.exp() - w0.exp()) / dw
    }
}

/// Length of the meridian arc between colatitudes `θ₁ ≤ θ₂`, with `w`
/// interpolated linearly between nodes.
pub fn meridian_distance(m: &MetricProfile, theta1: f64, theta2: f64) -> Result<f64> {
    if !(theta1 <= theta2) {
        return Err(Error::Invalid(format!(
            "meridian_distance needs θ₁ ≤ θ₂, got {theta1} > {theta2}"
        )));
    }
    let g = &m.grid;
    let (a, b) = (theta1.clamp(0.0, PI), theta2.clamp(0.0, PI));
    let (ja, _) = g.locate(a);
    let (jb, _) = g.locate(b);
    let w_at = |t: f64| g.sample_linear(&m.w, t);
    if ja == jb {
        return Ok(segment_length(w_at(a), w_at(b), b - a));
    }
    let mut total = segment_length(w_at(a), m.w[ja + 1], g.theta[ja + 1] - a);
    for j in ja + 1..jb {
        total += segment_length(m.w[j], m.w[j + 1], g.dtheta);
    }
    total += segment_length(m.w[jb], w_at(b), b - g.theta[jb]);
    Ok(total)
}

/// Meridian distance from colatitude `theta_p` to every node.
pub fn distance_from(m: &MetricProfile, theta_p: f64) -> Vec<f64> {
    let g = &m.grid;
    let n = g.len();
    let mut d = vec![0.0; n];
    let x = theta_p.clamp(0.0, PI) / g.dtheta;
    let node = x.round();
    if (x - node).abs() < 1e-9 {
        // Base on a node: accumulate whole cells outward, which keeps the
        // field exactly mirror-symmetric for mirrored inputs.
        let jp = node as usize;
        for j in (0..jp).rev() {
            d[j] = d[j + 1] + segment_length(m.w[j], m.w[j + 1], g.dtheta);
        }
        for j in jp + 1..n {
            d[j] = d[j - 1] + segment_length(m.w[j - 1], m.w[j], g.dtheta);
        }
        return d;
    }
    let (jp, _) = g.locate(theta_p);
    let w_p = g.sample_linear(&m.w, theta_p);
    // Northward accumulation from the base point.
    let mut acc = segment_length(m.w[jp], w_p, theta_p - g.theta[jp]);
    d[jp] = acc;
    for j in (0..jp).rev() {
        acc += segment_length(m.w[j], m.w[j + 1], g.dtheta);
        d[j] = acc;
    }
    let mut acc = segment_length(w_p, m.w[jp + 1], g.theta[jp + 1] - theta_p);
    d[jp + 1] = acc;
    for j in jp + 2..n {
        acc += segment_length(m.w[j - 1], m.w[j], g.dtheta);
        d[j] = acc;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const N: usize = 257;

    fn cos_profile(a: f64) -> MetricProfile {
        MetricProfile::conformal_cos(N, a).unwrap()
    }

    #[test]
    fn round_curvature_is_one() {
        let k = gauss_curvature(&MetricProfile::round(N).unwrap());
        assert!(k.iter().all(|&k| (k - 1.0).abs() < 1e-14));
    }

    #[test]
    fn constant_shift_scales_curvature() {
        let c = 0.3;
        let m = MetricProfile::round(N).unwrap().shifted(c).unwrap();
        for k in gauss_curvature(&m).iter() {
            assert_relative_eq!(*k, (-2.0 * c).exp(), max_relative = 1e-14);
        }
    }

    #[test]
    fn cosine_curvature_matches_closed_form() {
        let m = cos_profile(0.1);
        let k = gauss_curvature(&m);
        let err = m
            .grid()
            .theta()
            .iter()
            .zip(k.iter())
            .map(|(t, k)| (k - (-0.2 * t.cos()).exp() * (1.0 + 0.2 * t.cos())).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "max error {err}");
    }

    #[test]
    fn curvature_error_is_second_order() {
        let err = |n: usize| {
            let m = MetricProfile::conformal_cos(n, 0.1).unwrap();
            let k = gauss_curvature(&m);
            m.grid()
                .theta()
                .iter()
                .zip(k.iter())
                .map(|(t, k)| (k - (-0.2 * t.cos()).exp() * (1.0 + 0.2 * t.cos())).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(65) / err(129);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn gauss_bonnet_is_exact() {
        for a in [0.0, 0.1, 0.2, -0.35] {
            let m = cos_profile(a);
            let total = integrate(&m, &gauss_curvature(&m)).unwrap();
            assert!((total - 4.0 * PI).abs() < 1e-11, "a = {a}: {total}");
        }
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let m = cos_profile(0.2);
        let lap = laplacian(&m, &vec![3.5; N]).unwrap();
        assert!(lap.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn laplacian_halves_round_eigenvalue() {
        let c = -0.25;
        for shift in [0.0, c] {
            let m = MetricProfile::round(N).unwrap().shifted(shift).unwrap();
            let phi = ScalarField::from_fn(m.grid(), f64::cos);
            let lap = laplacian(&m, &phi).unwrap();
            for (l, p) in lap.iter().zip(phi.iter()) {
                assert!((l + (-2.0 * shift).exp() * p).abs() < 5e-5);
            }
        }
    }

    #[test]
    fn gradient_of_colatitude() {
        for shift in [0.0, 0.4] {
            let m = MetricProfile::round(N).unwrap().shifted(shift).unwrap();
            let phi = m.grid().theta().to_vec();
            let g = grad_norm_sq(&m, &phi).unwrap();
            for v in &g[1..N - 1] {
                assert_relative_eq!(*v, 0.5 * (-2.0 * shift).exp(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = cos_profile(0.1);
        assert_eq!(
            laplacian(&m, &[1.0; 10]).unwrap_err(),
            Error::Dimension {
                expected: N,
                got: 10
            }
        );
    }

    #[test]
    fn volume_closed_forms() {
        assert_relative_eq!(volume(&MetricProfile::round(N).unwrap()), 4.0 * PI, max_relative = 1e-14);
        let t: f64 = 0.75;
        let m = MetricProfile::round(N)
            .unwrap()
            .shifted(0.5 * (1.0 - t).ln())
            .unwrap();
        assert_relative_eq!(volume(&m), PI, max_relative = 1e-14);
        let exact = 2.0 * PI * (0.2f64.exp() - (-0.2f64).exp()) / 0.2;
        assert_relative_eq!(volume(&cos_profile(0.1)), exact, max_relative = 1e-5);
    }

    #[test]
    fn meridian_distance_closed_forms() {
        let round = MetricProfile::round(N).unwrap();
        assert_relative_eq!(meridian_distance(&round, 0.0, PI).unwrap(), PI, max_relative = 1e-14);
        let c = 0.3;
        let m = round.shifted(c).unwrap();
        assert_relative_eq!(
            meridian_distance(&m, 0.4, 2.1).unwrap(),
            c.exp() * 1.7,
            max_relative = 1e-12
        );
        // Simpson oracle for ∫₀^π e^{0.1 cos θ} dθ.
        let k = 20_000;
        let h = PI / k as f64;
        let f = |t: f64| (0.1 * t.cos()).exp();
        let simpson = (0..=k)
            .map(|i| {
                let w = if i == 0 || i == k {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * f(i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert_relative_eq!(
            meridian_distance(&cos_profile(0.1), 0.0, PI).unwrap(),
            simpson,
            max_relative = 1e-6
        );
    }

    #[test]
    fn meridian_distance_is_additive() {
        let m = cos_profile(0.2);
        let whole = meridian_distance(&m, 0.3, 2.9).unwrap();
        let parts =
            meridian_distance(&m, 0.3, 1.234).unwrap() + meridian_distance(&m, 1.234, 2.9).unwrap();
        assert_relative_eq!(whole, parts, max_relative = 1e-13);
        assert!(meridian_distance(&m, 1.0, 0.5).is_err());
    }

    #[test]
    fn distance_from_pole_matches_meridian_distance() {
        let m = cos_profile(0.2);
        let d = distance_from(&m, 0.0);
        for (j, t) in m.grid().theta().iter().enumerate().step_by(17) {
            assert_relative_eq!(d[j], meridian_distance(&m, 0.0, *t).unwrap(), max_relative = 1e-12);
        }
        let d = distance_from(&m, 1.0);
        assert_relative_eq!(d[200], meridian_distance(&m, 1.0, m.grid().theta()[200]).unwrap(), max_relative = 1e-12);
        assert_relative_eq!(d[10], meridian_distance(&m, m.grid().theta()[10], 1.0).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn collapse_is_rejected() {
        let g = Grid::new(9).unwrap();
        assert!(matches!(
            MetricProfile::new(g.clone(), vec![-20.0; 9]),
            Err(Error::DegenerateMetric { .. })
        ));
        assert!(matches!(Grid::new(3), Err(Error::DegenerateGrid(3))));
        let mut w = vec![0.0; 9];
        w[4] = f64::NAN;
        assert_eq!(MetricProfile::new(g, w), Err(Error::NonFinite(4)));
    }

    #[test]
    fn json_round_trip() {
        let m = cos_profile(0.2);
        let text = m.to_json();
        assert!(text.starts_with("{\"n_nodes\":257,\"w\":["));
        assert_eq!(MetricProfile::from_json(&text).unwrap(), m);
    }

    #[test]
    fn cubic_interpolation_reproduces_smooth_data() {
        let g = Grid::new(N).unwrap();
        let vals: Vec<f64> = g.theta().iter().map(|t| t.cos()).collect();
        for &t in &[0.0, 0.001, 0.7, 1.55, 3.1, PI] {
            let (v, d) = g.sample_cubic(&vals, t);
            assert!((v - t.cos()).abs() < 1e-7);
            assert!((d + t.sin()).abs() < 1e-4);
        }
    }
}
