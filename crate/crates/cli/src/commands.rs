//! The `flow`, `heatback`, `entropy` and `lgeo` verbs.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use kflow_core::conjheat::{
    admissible_candidate, solve_backward, uniform_terminal, ConjugateSolution, HeatOptions,
};
use kflow_core::flow::{evolve, FlowOptions, FlowTrajectory};
use kflow_core::geom2d::MetricProfile;
use kflow_core::lgeo::{
    extrapolate_reduced, question_experiment, reduced_distance_field, reduced_volume, tilde_monotonicity_check,
    LgeoOptions, ReducedDistanceField,
};
use kflow_core::perelman::entropy_report;

use crate::config::{ExperimentConfig, InitialProfile, Terminal};
use crate::error::CliError;
use crate::output::{num, read_input, row, sha256_hex, InputHash, OutputDir, RunManifest};

pub fn flow_options(cfg: &ExperimentConfig) -> FlowOptions {
    FlowOptions {
        max_step: cfg.max_step,
        cfl: cfg.cfl,
        stride: cfg.stride,
    }
}

pub fn heat_options(cfg: &ExperimentConfig) -> HeatOptions {
    HeatOptions { cfl: cfg.heat_cfl }
}

pub fn lgeo_options(cfg: &ExperimentConfig) -> LgeoOptions {
    LgeoOptions {
        stages: cfg.stages,
        lattice: cfg.lattice,
        ..Default::default()
    }
}

pub fn initial_profile(cfg: &ExperimentConfig) -> Result<MetricProfile, CliError> {
    Ok(match &cfg.profile {
        InitialProfile::Round => MetricProfile::round(cfg.n)?,
        InitialProfile::ConformalCos(a) => MetricProfile::conformal_cos(cfg.n, *a)?,
        InitialProfile::File(path) => {
            let bytes = read_input(path)?;
            let text = String::from_utf8_lossy(&bytes);
            MetricProfile::from_json(&text)?
        }
    })
}

/// Volume, its exact law and the type-I scale at every slice.
pub fn flow_table(traj: &FlowTrajectory) -> String {
    let big_t = traj.t_exact();
    let volumes = traj.volumes();
    let mut body = String::new();
    for (k, &t) in traj.times().iter().enumerate() {
        let w = traj.profiles()[k].w();
        let k_max = traj.slice_curvature(k).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w_min = w.iter().copied().fold(f64::INFINITY, f64::min);
        let w_max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exact = volumes[0] - 4.0 * PI * t;
        body.push_str(&row(&[t, volumes[k], exact, k_max * (big_t - t), w_min, w_max]));
        body.push('\n');
    }
    body
}

pub const FLOW_HEADER: &str = "t,volume,volume_exact,k_max_scaled,w_min,w_max";

pub fn cmd_flow(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let m0 = initial_profile(cfg)?;
    let traj = evolve(&m0, cfg.t_max_fraction, &flow_options(cfg))?;
    let mut dir = OutputDir::create(out, &cfg.hash())?;
    dir.write("trajectory.json", &traj.to_json())?;
    dir.write_csv(
        "flow.csv",
        &[format!("T_exact={}", num(traj.t_exact()))],
        FLOW_HEADER,
        &flow_table(&traj),
    )?;
    let inputs = match &cfg.profile {
        InitialProfile::File(p) => vec![InputHash {
            path: p.clone(),
            sha256: sha256_hex(&read_input(p)?),
        }],
        _ => Vec::new(),
    };
    dir.finish("flow", inputs, started, Vec::new())
}

pub fn load_trajectory(path: &Path) -> Result<(Arc<FlowTrajectory>, InputHash), CliError> {
    let bytes = read_input(path)?;
    let traj = FlowTrajectory::from_json(&String::from_utf8_lossy(&bytes))?;
    Ok((
        Arc::new(traj),
        InputHash {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        },
    ))
}

/// Solution CSV: `t, theta, u, f` at every `stride`-th stored time.
pub fn solution_csv(sol: &ConjugateSolution, stride: usize, hi: f64) -> String {
    let grid = sol.grid();
    let mut body = String::new();
    let last = sol.len() - 1;
    for k in (0..sol.len()).filter(|&k| (k % stride == 0 || k == last) && sol.times()[k] <= hi) {
        let f = sol.f(k);
        for (j, &theta) in grid.theta().iter().enumerate() {
            let _ = writeln!(body, "{}", row(&[sol.times()[k], theta, sol.u(k)[j], f[j]]));
        }
    }
    body
}

pub const SOLUTION_HEADER: &str = "t,theta,u,f";

fn meta_value(lines: &[&str], key: &str) -> Option<f64> {
    lines.iter().find_map(|l| {
        l.trim_start_matches('#')
            .split(',')
            .find_map(|kv| kv.trim().strip_prefix(key)?.strip_prefix('=')?.parse().ok())
    })
}

/// Read a solution CSV written by `heatback` back onto its trajectory.
pub fn load_solution(path: &Path, traj: Arc<FlowTrajectory>) -> Result<(ConjugateSolution, InputHash), CliError> {
    let bytes = read_input(path)?;
    let text = String::from_utf8_lossy(&bytes);
    let missing = |reason: &str| CliError::MissingInput {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let meta: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    let t_i = meta_value(&meta, "t_i").ok_or_else(|| missing("no t_i in header"))?;
    let horizon = meta_value(&meta, "horizon").ok_or_else(|| missing("no horizon in header"))?;
    let n = traj.grid().len();
    let mut times: Vec<f64> = Vec::new();
    let mut u: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().skip(meta.len() + 1) {
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| missing("malformed row"))?;
        if cols.len() != 4 {
            return Err(missing("expected four columns"));
        }
        if times.last() != Some(&cols[0]) {
            times.push(cols[0]);
            u.push(Vec::with_capacity(n));
        }
        u.last_mut().unwrap().push(cols[2]);
    }
    if times.is_empty() {
        return Err(missing("solution has no rows"));
    }
    let mut sol = ConjugateSolution::from_parts(traj, t_i, horizon, times, u)?;
    if let (Some(b), Some(e)) = (meta_value(&meta, "theta_p"), meta_value(&meta, "eps")) {
        // NaN marks a solution without a point base.
        if b.is_finite() && e.is_finite() {
            sol = sol.with_base(b, e);
        }
    }
    Ok((
        sol,
        InputHash {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        },
    ))
}

pub fn cmd_heatback(cfg: &ExperimentConfig, traj_path: &Path, out: &Path) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let (traj, input) = load_trajectory(traj_path)?;
    let big_t = traj.t_exact();
    let opts = heat_options(cfg);
    let mut dir = OutputDir::create(out, &cfg.hash())?;
    let sol = match cfg.terminal {
        Terminal::Uniform => {
            let t_i = cfg.schedule.last().unwrap() * big_t;
            solve_backward(&traj, t_i, &uniform_terminal(&traj.profile_at(t_i)?), &opts)?
        }
        Terminal::Delta => {
            let schedule: Vec<f64> = cfg.schedule.iter().map(|f| f * big_t).collect();
            let seq = admissible_candidate(&traj, &schedule, cfg.theta_p, cfg.eps_ratio, &opts)?;
            let mut body = String::new();
            for (i, s) in seq.solutions.iter().enumerate() {
                let mass_err = s.mass().iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
                let u_min = (0..s.len()).flat_map(|k| s.u(k).iter().copied()).fold(f64::INFINITY, f64::min);
                let inc = seq.increments.get(i).copied().unwrap_or(f64::NAN);
                let _ = writeln!(body, "{}", row(&[s.t_i(), s.eps().unwrap_or(f64::NAN), mass_err, u_min, inc]));
            }
            let warn = seq.warning.clone().unwrap_or_else(|| "none".into());
            dir.write_csv(
                "candidate.csv",
                &[format!("warning={warn}")],
                "t_i,eps,mass_error,u_min,increment",
                &body,
            )?;
            seq.extrapolated()
        }
    };
    let meta = format!(
        "t_i={},theta_p={},eps={},horizon={},trajectory_sha256={}",
        num(sol.t_i()),
        num(sol.base().unwrap_or(f64::NAN)),
        num(sol.eps().unwrap_or(f64::NAN)),
        num(sol.horizon()),
        input.sha256
    );
    dir.write_csv(
        "solution.csv",
        &[meta],
        SOLUTION_HEADER,
        &solution_csv(&sol, cfg.export_stride, cfg.window * big_t),
    )?;
    let mass: String = (0..sol.len())
        .map(|k| format!("{}\n", row(&[sol.times()[k], sol.mass_of(k)])))
        .collect();
    dir.write_csv("mass.csv", &[], "t,mass", &mass)?;
    dir.finish("heatback", vec![input], started, Vec::new())
}

pub fn cmd_entropy(
    cfg: &ExperimentConfig,
    traj_path: &Path,
    sol_path: &Path,
    out: &Path,
) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let (traj, traj_input) = load_trajectory(traj_path)?;
    let big_t = traj.t_exact();
    let (sol, sol_input) = load_solution(sol_path, traj)?;
    let report = entropy_report(&sol, 0.0, cfg.window * big_t);
    let mut dir = OutputDir::create(out, &cfg.hash())?;
    let csv = report.to_csv();
    let (header, body) = csv.split_once('\n').unwrap_or((&csv, ""));
    dir.write_csv("entropy.csv", &[], header, body)?;
    dir.finish("entropy", vec![traj_input, sol_input], started, Vec::new())
}

/// Fields for every `lgeo_schedule` entry, in schedule order.
pub fn lgeo_fields(cfg: &ExperimentConfig, traj: &FlowTrajectory) -> Result<Vec<ReducedDistanceField>, CliError> {
    let big_t = traj.t_exact();
    let rows: Vec<f64> = cfg.lgeo_rows.iter().map(|f| f * big_t).collect();
    let opts = lgeo_options(cfg);
    cfg.lgeo_schedule
        .iter()
        .map(|f| Ok(reduced_distance_field(traj, f * big_t, &rows, cfg.base_samples, &opts)?))
        .collect()
}

/// Field CSV body (all schedule entries), a summary table, the extrapolated
/// `l̃` and the reduced-volume series.
pub struct LgeoTables {
    pub fields: String,
    pub summary: String,
    pub limit: String,
    pub volume: String,
}

pub const LGEO_SUMMARY_HEADER: &str =
    "t_i,unconverged,monotone_gap_to_next,bound_excess,sup_l_tilde,nodes,excluded,first_violations,second_violations,first_worst,second_worst";

pub fn lgeo_tables(
    cfg: &ExperimentConfig,
    traj: &FlowTrajectory,
    fields: &[ReducedDistanceField],
) -> Result<LgeoTables, CliError> {
    let c = 2.0 * traj.type1_sup();
    let mut t = LgeoTables {
        fields: String::new(),
        summary: String::new(),
        limit: String::new(),
        volume: String::new(),
    };
    for (i, f) in fields.iter().enumerate() {
        let (res, s) = question_experiment(traj, f, cfg.tol.ineq)?;
        let csv = f.to_csv(Some(&res));
        t.fields.push_str(csv.split_once('\n').map_or("", |x| x.1));
        let gap = match fields.get(i + 1) {
            Some(next) => tilde_monotonicity_check(f, next)?,
            None => f64::NAN,
        };
        let (excess, sup) = f.bound_check(c);
        let _ = writeln!(
            t.summary,
            "{}",
            row(&[
                f.t_i,
                f.unconverged as f64,
                gap,
                excess,
                sup,
                s.nodes as f64,
                s.excluded as f64,
                s.first_violations as f64,
                s.second_violations as f64,
                s.first_worst,
                s.second_worst,
            ])
        );
    }
    let limit = extrapolate_reduced(fields, traj.t_exact())?;
    let f = &fields[0];
    for (i, &time) in f.times.iter().enumerate() {
        for (j, &q) in f.thetas.iter().enumerate() {
            let _ = writeln!(t.limit, "{}", row(&[q, time, limit[i][j]]));
        }
        let _ = writeln!(t.volume, "{}", row(&[time, reduced_volume(traj, time, &limit[i])?]));
    }
    Ok(t)
}

pub const LGEO_HEADER: &str = "theta_q,t,t_i,L_tilde,l_tilde,res_ineq1,res_ineq2,argmin_base";

pub fn cmd_lgeo(cfg: &ExperimentConfig, traj_path: &Path, out: &Path) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let (traj, input) = load_trajectory(traj_path)?;
    let fields = lgeo_fields(cfg, &traj)?;
    let tables = lgeo_tables(cfg, &traj, &fields)?;
    let mut dir = OutputDir::create(out, &cfg.hash())?;
    dir.write_csv("lgeo.csv", &[], LGEO_HEADER, &tables.fields)?;
    dir.write_csv("lgeo_summary.csv", &[], LGEO_SUMMARY_HEADER, &tables.summary)?;
    dir.write_csv("lgeo_limit.csv", &[], "theta_q,t,l_limit", &tables.limit)?;
    dir.write_csv("reduced_volume.csv", &[], "t,V", &tables.volume)?;
    dir.finish("lgeo", vec![input], started, Vec::new())
}
