use std::f64::consts::PI;
use std::sync::Arc;

use kflow_core::conjheat::{solve_backward, HeatOptions};
use kflow_core::flow::{evolve, FlowOptions};
use kflow_core::geom2d::{
    gauss_curvature, integrate, laplacian, meridian_distance, volume, Grid, MetricProfile, ScalarField,
};
use proptest::prelude::*;

fn profile(n: usize, a: [f64; 3]) -> MetricProfile {
    MetricProfile::from_fn(Grid::new(n).unwrap(), |t| {
        a[0] * t.cos() + a[1] * (2.0 * t).cos() + a[2] * (3.0 * t).cos()
    })
    .unwrap()
}

fn coeffs() -> impl Strategy<Value = [f64; 3]> {
    [-0.3..0.3f64, -0.3..0.3f64, -0.3..0.3f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn laplacian_is_self_adjoint(a in coeffs(), b in coeffs(), c in coeffs()) {
        let m = profile(129, a);
        let phi: Vec<f64> = profile(129, b).into_w();
        let psi: Vec<f64> = profile(129, c).into_w();
        let lphi = laplacian(&m, &phi).unwrap();
        let lpsi = laplacian(&m, &psi).unwrap();
        let left = integrate(&m, &phi.iter().zip(lpsi.values()).map(|(x, y)| x * y).collect::<Vec<_>>()).unwrap();
        let right = integrate(&m, &psi.iter().zip(lphi.values()).map(|(x, y)| x * y).collect::<Vec<_>>()).unwrap();
        prop_assert!((left - right).abs() <= 1e-10 * (1.0 + left.abs()));
        prop_assert!(integrate(&m, lphi.values()).unwrap().abs() <= 1e-11);
    }

    #[test]
    fn gauss_bonnet_holds(a in coeffs()) {
        let m = profile(129, a);
        let k = gauss_curvature(&m);
        prop_assert!((integrate(&m, k.values()).unwrap() - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn conformal_shift_rescales(a in coeffs(), c in -1.0..1.0f64, b in coeffs()) {
        let m = profile(65, a);
        let shifted = m.shifted(c).unwrap();
        let scale = (-2.0 * c).exp();
        let k0 = gauss_curvature(&m);
        let k1 = gauss_curvature(&shifted);
        for (x, y) in k0.values().iter().zip(k1.values()) {
            prop_assert!((y - scale * x).abs() <= 1e-10 * (1.0 + (scale * x).abs()));
        }
        let phi = profile(65, b).into_w();
        let l0 = laplacian(&m, &phi).unwrap();
        let l1 = laplacian(&shifted, &phi).unwrap();
        for (x, y) in l0.values().iter().zip(l1.values()) {
            prop_assert!((y - scale * x).abs() <= 1e-10 * (1.0 + (scale * x).abs()));
        }
        prop_assert!((volume(&shifted) / volume(&m) - 1.0 / scale).abs() < 1e-12);
    }

    #[test]
    fn meridian_distance_is_additive(a in coeffs(), x in 0.0..PI, y in 0.0..PI, z in 0.0..PI) {
        let m = profile(129, a);
        let mut p = [x, y, z];
        p.sort_by(f64::total_cmp);
        let d01 = meridian_distance(&m, p[0], p[1]).unwrap();
        let d12 = meridian_distance(&m, p[1], p[2]).unwrap();
        let d02 = meridian_distance(&m, p[0], p[2]).unwrap();
        prop_assert!((d01 + d12 - d02).abs() < 1e-12 * (1.0 + d02));
        if p[2] > p[0] {
            prop_assert!(meridian_distance(&m, p[2], p[0]).is_err());
        }
    }

    #[test]
    fn reflection_mirrors_curvature(a in coeffs()) {
        let m = profile(65, a);
        let r = m.reflected();
        let k0 = gauss_curvature(&m).into_inner();
        let mut k1 = gauss_curvature(&r).into_inner();
        k1.reverse();
        prop_assert_eq!(k0, k1);
        prop_assert_eq!(volume(&m), volume(&r));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn conjugate_heat_conserves_mass(a in coeffs(), b in coeffs()) {
        let m = profile(33, a);
        let traj = Arc::new(evolve(&m, 0.6, &FlowOptions::default()).unwrap());
        let t_i = traj.end();
        let end = traj.profile_at(t_i).unwrap();
        let raw: Vec<f64> = profile(33, b).w().iter().map(|v| (2.0 * v).exp()).collect();
        let mass = integrate(&end, &raw).unwrap();
        let terminal = ScalarField::new(raw.iter().map(|v| v / mass).collect());
        let sol = solve_backward(&traj, t_i, &terminal, &HeatOptions::default()).unwrap();
        for k in 0..sol.len() {
            prop_assert!((sol.mass_of(k) - 1.0).abs() < 1e-12);
            prop_assert!(sol.u(k).iter().all(|&u| u > 0.0));
        }
    }
}
