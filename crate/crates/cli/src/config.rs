//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, unknown keys are errors. Lists are
//! comma separated. Every key has a default, so an empty file is a valid
//! configuration of the standard perturbed instance.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Initial metric of the forward run.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialProfile {
    Round,
    /// `w₀ = a cos θ`.
    ConformalCos(f64),
    /// A metric profile JSON file.
    File(PathBuf),
}

/// Terminal data of `heatback`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    /// Normalized bumps at `theta_p` along `schedule`.
    Delta,
    /// Uniform density at the last schedule entry.
    Uniform,
}

/// Pass/fail thresholds of the acceptance suite.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub round: f64,
    pub area: f64,
    pub mass: f64,
    pub duality: f64,
    pub soliton: f64,
    pub w_step: f64,
    pub v_max: f64,
    pub dwdt: f64,
    pub admissible: f64,
    pub harnack: f64,
    pub unique_step: f64,
    pub unique_final: f64,
    pub l_oracle: f64,
    pub l_limit: f64,
    pub lattice: f64,
    pub l_mono: f64,
    pub fl: f64,
    pub ineq: f64,
    pub ineq_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            round: 1e-5,
            area: 1e-5,
            mass: 1e-6,
            duality: 1e-6,
            soliton: 1e-5,
            w_step: 1e-7,
            v_max: 1e-3,
            dwdt: 1e-3,
            admissible: 1e-3,
            harnack: 0.05,
            unique_step: 1e-6,
            unique_final: 0.05,
            l_oracle: 1e-6,
            l_limit: 1e-2,
            lattice: 0.02,
            l_mono: 1e-6,
            fl: 1e-2,
            ineq: 1e-2,
            ineq_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub profile: InitialProfile,
    pub max_step: f64,
    pub cfl: f64,
    pub stride: usize,
    pub t_max_fraction: f64,
    /// Terminal times as fractions of `T`.
    pub schedule: Vec<f64>,
    pub theta_p: f64,
    pub eps_ratio: f64,
    pub heat_cfl: f64,
    pub terminal: Terminal,
    /// Upper end of the evaluation window, as a fraction of `T`.
    pub window: f64,
    /// Write every k-th stored time of a solution.
    pub export_stride: usize,
    pub uniqueness_schedule: Vec<f64>,
    pub lgeo_schedule: Vec<f64>,
    /// Row times of the reduced-distance fields, as fractions of `T`.
    pub lgeo_rows: Vec<f64>,
    pub base_samples: usize,
    pub stages: usize,
    pub lattice: usize,
    pub oracle_span: usize,
    pub seed: u64,
    pub tol: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 256,
            profile: InitialProfile::ConformalCos(0.2),
            max_step: 1e-3,
            cfl: 0.4,
            stride: 100,
            t_max_fraction: 0.999995,
            schedule: vec![0.9, 0.99, 0.999, 0.9999, 0.99999],
            theta_p: 0.0,
            eps_ratio: 0.1,
            heat_cfl: 0.4,
            terminal: Terminal::Delta,
            window: 0.95,
            export_stride: 10,
            uniqueness_schedule: vec![0.9, 0.99, 0.999],
            lgeo_schedule: vec![0.99, 0.999, 0.9999],
            lgeo_rows: (0..19).map(|k| k as f64 * 0.05).collect(),
            base_samples: 33,
            stages: 64,
            lattice: 65,
            oracle_span: 4,
            seed: 20_240_601,
            tol: Tolerances::default(),
        }
    }
}

fn bad(key: &str, value: &str, why: &str) -> CliError {
    CliError::Config(format!("{key}: cannot use `{value}` ({why})"))
}

fn real(key: &str, v: &str) -> Result<f64, CliError> {
    let x: f64 = v.parse().map_err(|_| bad(key, v, "expected a number"))?;
    if !x.is_finite() {
        return Err(bad(key, v, "must be finite"));
    }
    Ok(x)
}

fn count(key: &str, v: &str) -> Result<usize, CliError> {
    v.parse().map_err(|_| bad(key, v, "expected a non-negative integer"))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',').map(|x| real(key, x.trim())).collect()
}

fn fractions(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    let xs = list(key, v)?;
    if xs.is_empty() || xs.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(bad(key, v, "fractions must lie in (0, 1)"));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad(key, v, "fractions must increase strictly"));
    }
    Ok(xs)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut c = Self::default();
        let mut amplitude = None;
        let mut kind = None;
        let mut file = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, v) = (key.trim(), v.trim());
            let t = &mut c.tol;
            match key {
                "n" => c.n = count(key, v)?,
                "profile" => kind = Some(v.to_string()),
                "amplitude" => amplitude = Some(real(key, v)?),
                "profile_file" => file = Some(PathBuf::from(v)),
                "max_step" => c.max_step = real(key, v)?,
                "cfl" => c.cfl = real(key, v)?,
                "stride" => c.stride = count(key, v)?,
                "t_max_fraction" => c.t_max_fraction = real(key, v)?,
                "schedule" => c.schedule = fractions(key, v)?,
                "theta_p" => c.theta_p = real(key, v)?,
                "eps_ratio" => c.eps_ratio = real(key, v)?,
                "heat_cfl" => c.heat_cfl = real(key, v)?,
                "terminal" => {
                    c.terminal = match v {
                        "delta" => Terminal::Delta,
                        "uniform" => Terminal::Uniform,
                        _ => return Err(bad(key, v, "expected delta or uniform")),
                    }
                }
                "window" => c.window = real(key, v)?,
                "export_stride" => c.export_stride = count(key, v)?,
                "uniqueness_schedule" => c.uniqueness_schedule = fractions(key, v)?,
                "lgeo_schedule" => c.lgeo_schedule = fractions(key, v)?,
                "lgeo_rows" => c.lgeo_rows = list(key, v)?,
                "base_samples" => c.base_samples = count(key, v)?,
                "stages" => c.stages = count(key, v)?,
                "lattice" => c.lattice = count(key, v)?,
                "oracle_span" => c.oracle_span = count(key, v)?,
                "seed" => c.seed = v.parse().map_err(|_| bad(key, v, "expected an integer"))?,
                "tol_round" => t.round = real(key, v)?,
                "tol_area" => t.area = real(key, v)?,
                "tol_mass" => t.mass = real(key, v)?,
                "tol_duality" => t.duality = real(key, v)?,
                "tol_soliton" => t.soliton = real(key, v)?,
                "tol_w_step" => t.w_step = real(key, v)?,
                "tol_v" => t.v_max = real(key, v)?,
                "tol_dwdt" => t.dwdt = real(key, v)?,
                "tol_admissible" => t.admissible = real(key, v)?,
                "tol_harnack" => t.harnack = real(key, v)?,
                "tol_unique_step" => t.unique_step = real(key, v)?,
                "tol_unique_final" => t.unique_final = real(key, v)?,
                "tol_l_oracle" => t.l_oracle = real(key, v)?,
                "tol_l_limit" => t.l_limit = real(key, v)?,
                "tol_lattice" => t.lattice = real(key, v)?,
                "tol_l_mono" => t.l_mono = real(key, v)?,
                "tol_fl" => t.fl = real(key, v)?,
                "tol_ineq" => t.ineq = real(key, v)?,
                "ineq_fraction" => t.ineq_fraction = real(key, v)?,
                _ => return Err(CliError::Config(format!("{key}: unknown key"))),
            }
        }
        c.profile = match (kind.as_deref(), amplitude, file) {
            (None | Some("cos"), a, None) => InitialProfile::ConformalCos(a.unwrap_or(0.2)),
            (Some("round"), None, None) => InitialProfile::Round,
            (Some("file"), None, Some(p)) => InitialProfile::File(p),
            (Some(k), _, _) if !["cos", "round", "file"].contains(&k) => {
                return Err(bad("profile", k, "expected round, cos or file"))
            }
            _ => {
                return Err(CliError::Config(
                    "profile: amplitude goes with cos, profile_file with file".into(),
                ))
            }
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), CliError> {
        let fail = |key: &str, why: &str| Err(CliError::Config(format!("{key}: {why}")));
        if self.n < 64 {
            return fail("n", "grid needs at least 64 nodes");
        }
        if !(self.t_max_fraction > 0.0 && self.t_max_fraction < 1.0) {
            return fail("t_max_fraction", "must lie in (0, 1)");
        }
        if *self.schedule.last().unwrap() > self.t_max_fraction
            || *self.lgeo_schedule.last().unwrap() > self.t_max_fraction
            || *self.uniqueness_schedule.last().unwrap() > self.t_max_fraction
        {
            return fail("schedule", "terminal times must not exceed t_max_fraction");
        }
        if self.schedule.len() < 3 {
            return fail("schedule", "needs at least three terminal times");
        }
        if self.lgeo_schedule.len() < 3 {
            return fail("lgeo_schedule", "needs at least three terminal times");
        }
        if self.lgeo_rows.len() < 3
            || self.lgeo_rows.windows(2).any(|w| w[1] <= w[0])
            || self.lgeo_rows[0] < 0.0
            || *self.lgeo_rows.last().unwrap() >= self.lgeo_schedule[0]
        {
            return fail("lgeo_rows", "need three increasing times in [0, first lgeo_schedule entry)");
        }
        if !(self.window > 0.0 && self.window < 1.0) {
            return fail("window", "must lie in (0, 1)");
        }
        for (key, x) in [
            ("max_step", self.max_step),
            ("cfl", self.cfl),
            ("eps_ratio", self.eps_ratio),
            ("heat_cfl", self.heat_cfl),
        ] {
            if !(x > 0.0) {
                return fail(key, "must be positive");
            }
        }
        if self.stride == 0 || self.export_stride == 0 || self.oracle_span == 0 || self.stages == 0 {
            return fail("stride", "strides, spans and stages must be positive");
        }
        if self.base_samples < 3 || self.lattice < 3 || (self.lattice - 1) % (self.base_samples - 1) != 0 {
            return fail("lattice", "lattice - 1 must be a multiple of base_samples - 1");
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.theta_p) {
            return fail("theta_p", "must lie in [0, π]");
        }
        for (key, x) in self.tolerances() {
            if !(x >= 0.0) {
                return fail(key, "tolerances must be non-negative");
            }
        }
        Ok(())
    }

    fn tolerances(&self) -> [(&'static str, f64); 19] {
        let t = &self.tol;
        [
            ("tol_round", t.round),
            ("tol_area", t.area),
            ("tol_mass", t.mass),
            ("tol_duality", t.duality),
            ("tol_soliton", t.soliton),
            ("tol_w_step", t.w_step),
            ("tol_v", t.v_max),
            ("tol_dwdt", t.dwdt),
            ("tol_admissible", t.admissible),
            ("tol_harnack", t.harnack),
            ("tol_unique_step", t.unique_step),
            ("tol_unique_final", t.unique_final),
            ("tol_l_oracle", t.l_oracle),
            ("tol_l_limit", t.l_limit),
            ("tol_lattice", t.lattice),
            ("tol_l_mono", t.l_mono),
            ("tol_fl", t.fl),
            ("tol_ineq", t.ineq),
            ("ineq_fraction", t.ineq_fraction),
        ]
    }

    /// Every resolved key in a fixed order; the input of [`Self::hash`].
    pub fn canonical(&self) -> String {
        let join = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "n={}", self.n);
        match &self.profile {
            InitialProfile::Round => s.push_str("profile=round\n"),
            InitialProfile::ConformalCos(a) => {
                let _ = writeln!(s, "profile=cos\namplitude={a:?}");
            }
            InitialProfile::File(p) => {
                let _ = writeln!(s, "profile=file\nprofile_file={}", p.display());
            }
        }
        let _ = writeln!(s, "max_step={:?}\ncfl={:?}\nstride={}", self.max_step, self.cfl, self.stride);
        let _ = writeln!(s, "t_max_fraction={:?}\nschedule={}", self.t_max_fraction, join(&self.schedule));
        let _ = writeln!(s, "theta_p={:?}\neps_ratio={:?}\nheat_cfl={:?}", self.theta_p, self.eps_ratio, self.heat_cfl);
        let terminal = match self.terminal {
            Terminal::Delta => "delta",
            Terminal::Uniform => "uniform",
        };
        let _ = writeln!(s, "terminal={terminal}\nwindow={:?}\nexport_stride={}", self.window, self.export_stride);
        let _ = writeln!(s, "uniqueness_schedule={}", join(&self.uniqueness_schedule));
        let _ = writeln!(s, "lgeo_schedule={}\nlgeo_rows={}", join(&self.lgeo_schedule), join(&self.lgeo_rows));
        let _ = writeln!(
            s,
            "base_samples={}\nstages={}\nlattice={}\noracle_span={}\nseed={}",
            self.base_samples, self.stages, self.lattice, self.oracle_span, self.seed
        );
        for (key, x) in self.tolerances() {
            let _ = writeln!(s, "{key}={x:?}");
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        format!("{digest:x}")[..16].to_string()
    }
}
