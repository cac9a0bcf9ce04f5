//! End-to-end acceptance suite on the round and perturbed instances.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use kflow_core::conjheat::{
    admissible_candidate, delta_terminal, duality_check, eps_rule, solve_backward, uniform_terminal,
    ConjugateSolution,
};
use kflow_core::flow::{evolve, FlowTrajectory};
use kflow_core::geom2d::{MetricProfile, ScalarField};
use kflow_core::lgeo::{
    extrapolate_reduced, f_le_l_check, l_functional, lattice_oracle, perelman_l_inequalities, round_constant_action,
    tilde_monotonicity_check, Curve, ReducedDistanceField,
};
use kflow_core::perelman::{
    admissibility_scan, entropy_report, f_min_max_chain, soliton_residual, uniqueness_experiment, v_field,
    EntropyReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::commands::{
    flow_options, flow_table, heat_options, initial_profile, lgeo_fields, lgeo_options, lgeo_tables, FLOW_HEADER,
    LGEO_HEADER, LGEO_SUMMARY_HEADER,
};
use crate::config::{ExperimentConfig, InitialProfile};
use crate::error::CliError;
use crate::output::{num, row, Check, Metric, OutputDir, RunManifest};

/// Speeds of the meridian sweeps in the admissibility scan.
fn sweep_speeds() -> Vec<f64> {
    (0..50).map(|i| 0.05 * 1.15f64.powi(i)).collect()
}

/// Smooth seeded test field `Σ cₖ cos kθ`.
fn smooth_field(m: &MetricProfile, rng: &mut ChaCha8Rng) -> ScalarField {
    let c: Vec<f64> = (0..5).map(|k| rng.gen_range(-1.0..1.0) / (1.0 + k as f64)).collect();
    ScalarField::from_fn(m.grid(), |t| {
        c.iter().enumerate().map(|(k, ck)| ck * (k as f64 * t).cos()).sum()
    })
}

fn delta_solution(
    cfg: &ExperimentConfig,
    traj: &Arc<FlowTrajectory>,
    t_i: f64,
    theta: f64,
) -> Result<ConjugateSolution, CliError> {
    let eps = eps_rule(traj.t_exact(), t_i, cfg.eps_ratio);
    let terminal = delta_terminal(&traj.profile_at(t_i)?, theta, eps)?;
    Ok(solve_backward(traj, t_i, &terminal, &heat_options(cfg))?.with_base(theta, eps))
}

fn max_abs(xs: impl Iterator<Item = f64>) -> f64 {
    xs.map(f64::abs).fold(0.0, f64::max)
}

fn check(id: u32, name: &str, metrics: Vec<Metric>, notes: Vec<String>) -> Check {
    Check {
        id,
        name: name.to_string(),
        metrics,
        notes,
    }
}

fn round_exactness(cfg: &ExperimentConfig, round: &FlowTrajectory) -> Check {
    let (mut err_w, mut err_k) = (0.0f64, 0.0f64);
    for (k, &t) in round.times().iter().enumerate() {
        if t > 0.9 {
            break;
        }
        let exact = 0.5 * (1.0 - t).ln();
        err_w = err_w.max(max_abs(round.profiles()[k].w().iter().map(|w| w - exact)));
        err_k = err_k.max(max_abs(round.slice_curvature(k).iter().map(|c| c * (1.0 - t) - 1.0)));
    }
    check(
        1,
        "round-sphere exactness",
        vec![
            Metric::at_most("max|w - ln(1-t)/2|", err_w, cfg.tol.round),
            Metric::at_most("max|K(T-t) - 1|", err_k, cfg.tol.round),
        ],
        vec![format!("T_exact = {}", num(round.t_exact()))],
    )
}

fn area_law(cfg: &ExperimentConfig, pert: &FlowTrajectory) -> Check {
    let volumes = pert.volumes();
    let big_t = pert.t_exact();
    let err = max_abs(
        pert.times()
            .iter()
            .zip(&volumes)
            .take_while(|(&t, _)| t <= 0.9 * big_t)
            .map(|(&t, &v)| v - volumes[0] + 4.0 * PI * t),
    );
    check(
        2,
        "area law",
        vec![Metric::at_most("max|Vol(t) - Vol(0) + 4 pi t|", err, cfg.tol.area)],
        vec![],
    )
}

fn mass_metrics(label: &str, sol: &ConjugateSolution, tol: f64) -> [Metric; 2] {
    let err = max_abs((0..sol.len()).map(|k| sol.mass_of(k) - 1.0));
    let u_min = (0..sol.len())
        .flat_map(|k| sol.u(k).iter().copied())
        .fold(f64::INFINITY, f64::min);
    [
        Metric::at_most(&format!("{label} max|mass - 1|"), err, tol),
        Metric::above(&format!("{label} min u"), u_min, 0.0),
    ]
}

fn entropy_table(report: &EntropyReport) -> String {
    let csv = report.to_csv();
    csv.split_once('\n').map_or(String::new(), |x| x.1.to_string())
}

/// Everything the criteria share.
struct Instances {
    round: Arc<FlowTrajectory>,
    pert: Arc<FlowTrajectory>,
}

pub fn cmd_acceptance(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, CliError> {
    let (manifest, _) = run_acceptance(cfg, out)?;
    Ok(manifest)
}

/// Run the suite; also returns the printable lines.
pub fn run_acceptance(cfg: &ExperimentConfig, out: &Path) -> Result<(RunManifest, Vec<String>), CliError> {
    let started = Instant::now();
    let mut dir = OutputDir::create(out, &cfg.hash())?;
    let opts = flow_options(cfg);
    let mut round_cfg = cfg.clone();
    round_cfg.profile = InitialProfile::Round;
    let inst = Instances {
        round: Arc::new(evolve(&initial_profile(&round_cfg)?, cfg.t_max_fraction, &opts)?),
        pert: Arc::new(evolve(&initial_profile(cfg)?, cfg.t_max_fraction, &opts)?),
    };
    let Instances { round, pert } = &inst;
    let big_t = pert.t_exact();
    let t_round = round.t_exact();
    dir.write_csv("flow_round.csv", &[], FLOW_HEADER, &flow_table(round))?;
    dir.write_csv("flow_perturbed.csv", &[], FLOW_HEADER, &flow_table(pert))?;
    let mut checks = vec![round_exactness(cfg, round), area_law(cfg, pert)];

    // Delta-limit solutions on the perturbed run and the admissible candidate.
    let schedule: Vec<f64> = cfg.schedule.iter().map(|f| f * big_t).collect();
    let seq = admissible_candidate(pert, &schedule, cfg.theta_p, cfg.eps_ratio, &heat_options(cfg))?;
    let raw = |frac: f64, theta: f64| -> Result<ConjugateSolution, CliError> {
        let t_i = frac * big_t;
        match seq.solutions.iter().find(|s| s.t_i() == t_i && s.base() == Some(theta)) {
            Some(s) => Ok(s.clone()),
            None => delta_solution(cfg, pert, t_i, theta),
        }
    };

    // 3. Mass, positivity, duality.
    let t3 = cfg.lgeo_schedule[0];
    let pert_delta = raw(t3, cfg.theta_p)?;
    let round_delta = delta_solution(cfg, round, t3 * t_round, cfg.theta_p)?;
    let mut metrics: Vec<Metric> = mass_metrics("round", &round_delta, cfg.tol.mass).into();
    metrics.extend(mass_metrics("perturbed", &pert_delta, cfg.tol.mass));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut drift = 0.0f64;
    for _ in 0..5 {
        let phi = smooth_field(&pert.profiles()[0], &mut rng);
        drift = drift.max(duality_check(&pert_delta, &phi, &heat_options(cfg))?.drift);
    }
    metrics.push(Metric::at_most("duality drift (5 fields)", drift, cfg.tol.duality));
    checks.push(check(3, "conjugate mass and positivity", metrics, vec![]));

    // 4. Soliton oracle on the round constant solution.
    let t_const = t3 * t_round;
    let constant = solve_backward(
        round,
        t_const,
        &uniform_terminal(&round.profile_at(t_const)?),
        &heat_options(cfg),
    )?;
    let hi_round = cfg.window * t_round;
    let report_round = entropy_report(&constant, 0.0, hi_round);
    let v_abs = (0..constant.len())
        .filter(|&k| constant.times()[k] <= hi_round)
        .map(|k| max_abs(v_field(&constant, k).into_iter()))
        .fold(0.0, f64::max);
    let (r1, r2) = soliton_residual(&constant, cfg.schedule[0] * t_round, (0.0, 0.5))?;
    checks.push(check(
        4,
        "soliton oracle after factor audit",
        vec![
            Metric::at_most("max|v|", v_abs, cfg.tol.soliton),
            Metric::at_most("max|W|", max_abs(report_round.records.iter().map(|r| r.w)), cfg.tol.soliton),
            Metric::at_most(
                "max|dW/dt formula|",
                max_abs(report_round.records.iter().map(|r| r.dwdt_formula)),
                cfg.tol.soliton,
            ),
            Metric::at_most("r1 + r2", r1 + r2, cfg.tol.soliton),
        ],
        vec![],
    ));
    dir.write_csv("entropy_round.csv", &[], "t,W,dWdt_formula,dWdt_fd,v_max,M,m,ratio,r1,r2", &entropy_table(&report_round))?;

    // 5. Entropy monotonicity on the admissible candidate.
    let cand = seq.extrapolated();
    let hi = cfg.window * big_t;
    let report = entropy_report(&cand, 0.0, hi);
    let recs = &report.records;
    let interior = recs.len().saturating_sub(2);
    let rel = (0..10)
        .map(|i| &recs[1 + i * (interior - 1) / 9])
        .map(|r| (r.dwdt_formula - r.dwdt_fd).abs() / r.dwdt_fd.abs())
        .fold(0.0, f64::max);
    let w_max = recs.iter().map(|r| r.w).fold(f64::NEG_INFINITY, f64::max);
    let mut notes = vec![format!("max W = {w_max:.6e}")];
    for frac in [cfg.schedule[0], cfg.schedule[1]] {
        let (a, b) = soliton_residual(&cand, frac * big_t, (0.0, 0.5))?;
        notes.push(format!("soliton residual at {frac}T: r1 = {a:.6e}, r2 = {b:.6e}"));
    }
    let t2 = cfg.schedule[0] * big_t;
    let chain = f_min_max_chain(&cand, t2 - (big_t - t2), t2)?;
    notes.push(format!(
        "min/max chain: C = {:.6e}, slack = {:.6e}, A = {:.6e}, min f = {:.6e}",
        chain.c, chain.slack, chain.a_tilde, chain.f_min
    ));
    notes.push(format!("candidate warning: {}", seq.warning.as_deref().unwrap_or("none")));
    checks.push(check(
        5,
        "W monotonicity",
        vec![
            Metric::at_least("worst W step", report.worst_step(), -cfg.tol.w_step),
            Metric::at_most("max v", report.v_max(), cfg.tol.v_max),
            Metric::at_most("dW/dt relative gap (10 times)", rel, cfg.tol.dwdt),
        ],
        notes,
    ));
    dir.write_csv("entropy_perturbed.csv", &[], "t,W,dWdt_formula,dWdt_fd,v_max,M,m,ratio,r1,r2", &entropy_table(&report))?;

    // 6. Admissibility.
    let adm = admissibility_scan(&cand, &sweep_speeds(), 0.0, hi)?;
    checks.push(check(
        6,
        "admissibility residual",
        vec![Metric::at_least("min scaled residual (100 curves)", adm, -cfg.tol.admissible)],
        vec![],
    ));

    // 7. Elliptic Harnack.
    let near = |t: f64| {
        recs.iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .unwrap()
    };
    let finite = recs.iter().all(|r| r.ratio.is_finite()) as u32 as f64;
    let half = near(0.5 * big_t).ratio;
    let late = recs
        .iter()
        .filter(|r| r.t >= 0.75 * big_t)
        .map(|r| r.ratio - half)
        .fold(f64::NEG_INFINITY, f64::max);
    let end = near(hi).ratio;
    checks.push(check(
        7,
        "elliptic Harnack",
        vec![
            Metric::at_least("all ratios finite", finite, 1.0),
            Metric::at_most("max_{t>=0.75T} M/m - (M/m)(0.5T)", late, 0.0),
            Metric::at_most("|M/m(end) - 1|", (end - 1.0).abs(), cfg.tol.harnack),
        ],
        vec![format!("M/m(0) = {:.6e}, M/m(0.5T) = {half:.6e}", recs[0].ratio)],
    ));

    // 8. Uniqueness trend.
    let mut table = String::new();
    let (mut worst, mut at_half) = (f64::INFINITY, Vec::new());
    for &frac in &cfg.uniqueness_schedule {
        let north = raw(frac, cfg.theta_p)?;
        let south = delta_solution(cfg, pert, frac * big_t, PI - cfg.theta_p)?;
        let rep = uniqueness_experiment(&north, &south, hi.min(frac * big_t));
        worst = worst.min(rep.worst_step);
        at_half.push(rep.at(0.5 * big_t));
        for (t, r) in rep.times.iter().zip(&rep.rho_max) {
            let _ = writeln!(table, "{}", row(&[frac * big_t, *t, *r]));
        }
    }
    dir.write_csv("uniqueness.csv", &[], "t_i,t,rho_max", &table)?;
    let decrease = at_half.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    checks.push(check(
        8,
        "uniqueness trend",
        vec![
            Metric::at_least("worst rho_max step", worst, -cfg.tol.unique_step),
            Metric::below("max change of rho_max(0.5T) across schedule", decrease, 0.0),
            Metric::at_most("final rho_max(0.5T)", *at_half.last().unwrap(), 1.0 + cfg.tol.unique_final),
        ],
        vec![format!(
            "rho_max(0.5T) = {}",
            at_half.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(", ")
        )],
    ));

    // 9 and 10. Reduced distance.
    let lopts = lgeo_options(cfg);
    let fields_round = lgeo_fields(cfg, round)?;
    let fields_pert = lgeo_fields(cfg, pert)?;
    let mut oracle = 0.0f64;
    for &(t, ti) in &[(0.0, 0.99), (0.5, 0.999), (0.3, 0.9999), (0.9, 0.99999)] {
        if ti > cfg.t_max_fraction {
            continue;
        }
        for theta in [0.0, 1.0] {
            let curve = Curve::constant(theta, t * t_round, ti * t_round, cfg.stages);
            let l = l_functional(round, &curve)?;
            oracle = oracle.max((l - round_constant_action(t_round, t * t_round, ti * t_round)).abs());
        }
    }
    let limit = extrapolate_reduced(&fields_round, t_round)?;
    let pole_limit = max_abs(limit.iter().map(|r| r[0] - 1.0));
    let mut gap = 0.0f64;
    let mut order = f64::INFINITY;
    let row_max = *cfg.lgeo_rows.last().unwrap();
    for _ in 0..5 {
        let node = |rng: &mut ChaCha8Rng| rng.gen_range(0..cfg.lattice) as f64 * PI / (cfg.lattice - 1) as f64;
        let (x, q) = (node(&mut rng), node(&mut rng));
        let t = rng.gen_range(0.0..row_max) * big_t;
        let (action, lattice) = lattice_oracle(pert, x, q, t, cfg.lgeo_schedule[0] * big_t, cfg.oracle_span, &lopts)?;
        gap = gap.max((lattice - action).abs() / action);
        order = order.min(lattice - action);
    }
    let mut metrics = vec![
        Metric::at_most("constant-curve L vs closed form", oracle, cfg.tol.l_oracle),
        Metric::at_most("round max|l_limit(pole) - 1|", pole_limit, cfg.tol.l_limit),
        Metric::at_most("lattice relative gap (5 triples)", gap, cfg.tol.lattice),
        Metric::at_least("lattice - transcription", order, 0.0),
    ];
    let mut notes = Vec::new();
    for (label, traj, fields) in [("round", round, &fields_round), ("perturbed", pert, &fields_pert)] {
        let mono = fields
            .windows(2)
            .map(|w| tilde_monotonicity_check(&w[0], &w[1]))
            .collect::<Result<Vec<f64>, _>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let c = 2.0 * traj.type1_sup();
        let (excess, sup) = fields.iter().map(|f| f.bound_check(c)).fold(
            (f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b), (x, y)| (a.max(x), b.max(y)),
        );
        let t_i = cfg.lgeo_schedule[0] * traj.t_exact();
        let sol = delta_solution(cfg, traj, t_i, cfg.theta_p)?.with_horizon(t_i);
        let rows: Vec<f64> = cfg.lgeo_rows.iter().map(|f| f * traj.t_exact()).collect();
        let slack = f_le_l_check(&sol, &rows, cfg.base_samples, &lopts)?;
        metrics.push(Metric::at_least(&format!("{label} min L_tilde step in t_i"), mono, -cfg.tol.l_mono));
        metrics.push(Metric::at_most(&format!("{label} max L_tilde - C sqrt(t_i - t)"), excess, 0.0));
        metrics.push(Metric::at_most(&format!("{label} sup l_tilde - C"), sup - c, 0.0));
        metrics.push(Metric::at_least(&format!("{label} min (l - f)"), slack.min_slack, -cfg.tol.fl));
        let unconverged: usize = fields.iter().map(|f| f.unconverged).sum();
        notes.push(format!("{label}: C = {c:.6e}, unconverged refinements = {unconverged}"));
    }
    checks.push(check(9, "L-geodesic oracles", metrics, notes));

    let per_base = |fields: &[ReducedDistanceField], traj: &FlowTrajectory| -> Result<f64, CliError> {
        let mut worst = f64::INFINITY;
        for f in fields {
            for x in [0, f.thetas.len() - 1] {
                let res = perelman_l_inequalities(traj, f.t_i, &f.times, &f.base_reduced(x))?;
                worst = worst.min(res.sign_fraction(cfg.tol.ineq));
            }
        }
        Ok(worst)
    };
    let fraction = per_base(&fields_round, round)?;
    let mut notes = vec![format!("perturbed pole-based sign fraction = {:.6e}", per_base(&fields_pert, pert)?)];
    for (label, traj, fields) in [("round", round, &fields_round), ("perturbed", pert, &fields_pert)] {
        let tables = lgeo_tables(cfg, traj, fields)?;
        dir.write_csv(&format!("lgeo_{label}.csv"), &[], LGEO_HEADER, &tables.fields)?;
        dir.write_csv(&format!("lgeo_summary_{label}.csv"), &[], LGEO_SUMMARY_HEADER, &tables.summary)?;
        dir.write_csv(&format!("lgeo_limit_{label}.csv"), &[], "theta_q,t,l_limit", &tables.limit)?;
        dir.write_csv(&format!("reduced_volume_{label}.csv"), &[], "t,V", &tables.volume)?;
        notes.push(format!("question experiment ({label}) written to lgeo_summary_{label}.csv"));
    }
    checks.push(check(
        10,
        "Perelman l-inequality signs",
        vec![Metric::at_least("round pole-based sign fraction", fraction, cfg.tol.ineq_fraction)],
        notes,
    ));

    let mut body = String::new();
    for c in &checks {
        for m in &c.metrics {
            let _ = writeln!(
                body,
                "{},{},{},{},{},{},{}",
                c.id,
                c.name,
                m.label.replace(',', ";"),
                num(m.value),
                m.relation,
                num(m.bound),
                m.passed()
            );
        }
    }
    dir.write_csv("acceptance.csv", &[], "criterion,name,metric,value,relation,bound,passed", &body)?;
    let mut lines: Vec<String> = checks.iter().map(Check::line).collect();
    for c in &checks {
        for n in &c.notes {
            lines.push(format!("    [{}] {n}", c.id));
        }
    }
    let manifest = dir.finish("acceptance", Vec::new(), started, checks)?;
    Ok((manifest, lines))
}
