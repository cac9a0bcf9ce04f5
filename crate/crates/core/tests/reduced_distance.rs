use std::f64::consts::PI;
use std::sync::Arc;

use kflow_core::conjheat::{delta_terminal, eps_rule, solve_backward, HeatOptions};
use kflow_core::flow::{evolve, FlowOptions, FlowTrajectory};
use kflow_core::geom2d::MetricProfile;
use kflow_core::lgeo::*;

fn run(amplitude: f64) -> Arc<FlowTrajectory> {
    let m0 = MetricProfile::conformal_cos(65, amplitude).unwrap();
    Arc::new(evolve(&m0, 0.99995, &FlowOptions::default()).unwrap())
}

fn small() -> LgeoOptions {
    LgeoOptions {
        stages: 32,
        lattice: 33,
        ..Default::default()
    }
}

#[test]
fn fields_are_monotone_and_bounded() {
    for amplitude in [0.0, 0.2] {
        let traj = run(amplitude);
        let t_exact = traj.t_exact();
        let times: Vec<f64> = (0..7).map(|k| 0.15 * k as f64 * t_exact).collect();
        let fields: Vec<ReducedDistanceField> = [0.99, 0.999, 0.9999]
            .iter()
            .map(|f| reduced_distance_field(&traj, f * t_exact, &times, 9, &small()).unwrap())
            .collect();
        let c = 2.0 * traj.type1_sup();
        for f in &fields {
            assert_eq!(f.min_property(), 0.0);
            assert_eq!(f.unconverged, 0);
            let (excess, sup) = f.bound_check(c);
            assert!(excess < 0.0 && sup <= c);
        }
        assert!(tilde_monotonicity_check(&fields[0], &fields[1]).unwrap() > -1e-6);
        assert!(tilde_monotonicity_check(&fields[1], &fields[2]).unwrap() > -1e-6);
        let limit = extrapolate_reduced(&fields, t_exact).unwrap();
        for row in &limit {
            for &l in row {
                assert!((l - 1.0).abs() < 2e-2, "amplitude {amplitude}: {l}");
            }
        }
        let v = reduced_volume(&traj, times[3], &limit[3]).unwrap();
        assert!((v - 4.0 * PI * (-1.0f64).exp()).abs() < 0.1);
    }
}

#[test]
fn single_base_question_matches_per_base_residuals() {
    let traj = run(0.2);
    let t_exact = traj.t_exact();
    let times: Vec<f64> = (0..5).map(|k| 0.2 * k as f64 * t_exact).collect();
    let field = reduced_distance_field(&traj, 0.99 * t_exact, &times, 9, &small()).unwrap();
    let per_base = perelman_l_inequalities(&traj, field.t_i, &times, &field.base_reduced(0)).unwrap();
    let mut single = field.clone();
    for i in 0..times.len() {
        for j in 0..9 {
            single.tilde[i][j] = single.action[i][j][0];
            single.argmin[i][j] = 0;
        }
    }
    let (res, _) = question_experiment(&traj, &single, 1e-2).unwrap();
    assert_eq!(res.first[1..4], per_base.first[1..4]);
    assert_eq!(res.second[1..4], per_base.second[1..4]);
    let csv = field.to_csv(Some(&res));
    assert!(csv.starts_with("theta_q,t,t_i,L_tilde,l_tilde,res_ineq1,res_ineq2,argmin_base\n"));
    assert_eq!(csv.lines().count(), 1 + 5 * 9);
}

#[test]
fn delta_solution_stays_below_reduced_distance() {
    let traj = run(0.2);
    let t_exact = traj.t_exact();
    let t_i = 0.99 * t_exact;
    let eps = eps_rule(t_exact, t_i, 0.1);
    let terminal = delta_terminal(&traj.profile_at(t_i).unwrap(), 0.0, eps).unwrap();
    let sol = solve_backward(&traj, t_i, &terminal, &HeatOptions::default())
        .unwrap()
        .with_base(0.0, eps)
        .with_horizon(t_i);
    let rows: Vec<f64> = (0..7).map(|k| 0.15 * k as f64 * t_exact).collect();
    let slack = f_le_l_check(&sol, &rows, 9, &small()).unwrap();
    assert!(slack.min_slack > -1e-2, "{slack:?}");
}

#[test]
fn lattice_oracle_brackets_transcription() {
    let traj = run(0.2);
    let t_exact = traj.t_exact();
    let opts = small();
    for &(x, q) in &[(0.0, PI), (PI / 4.0, PI / 2.0)] {
        let (action, lattice) = lattice_oracle(&traj, x, q, 0.3 * t_exact, 0.99 * t_exact, 4, &opts).unwrap();
        assert!(action <= lattice && (lattice - action) / action < 0.02);
    }
    assert!(lattice_oracle(&traj, 0.1, 0.5, 0.0, 0.9 * t_exact, 4, &opts).is_err());
}
