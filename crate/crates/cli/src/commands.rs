//! Command implementations.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use nonholo_core::brackets::{gauge_transform, pi_nh, PhaseState};
use nonholo_core::dynamics::{hamiltonian, integrate, Monitor, Trajectory};
use nonholo_core::gauge::momentum_value;
use nonholo_core::geometry::MechanicalSystem;
use nonholo_core::systems::chaplygin::{ChaplyginParams, ChaplyginSphere};
use nonholo_core::systems::revolution::{solve_gauge_ode, wronskian_min, SolidOfRevolution};
use nonholo_core::verification::{
    run_chaplygin_check, run_revolution_check, LambdaChoice, Report, SuiteConfig, CHAPLYGIN_CHECKS,
    REVOLUTION_CHECKS,
};

use crate::config::{RunConfig, SystemConfig};

/// Version tag written into every JSON document.
pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
            Self::Verification(_) => 4,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Built system plus the extra columns it contributes to trajectory output.
enum Built {
    Chaplygin(ChaplyginSphere<f64>),
    Revolution(Box<SolidOfRevolution<f64>>),
}

impl Built {
    fn new(cfg: &SystemConfig) -> Result<Self, CliError> {
        Ok(match cfg {
            SystemConfig::Chaplygin(p) => Self::Chaplygin(ChaplyginSphere::new(*p).map_err(runtime)?),
            SystemConfig::Revolution { profile, params, solution } => Self::Revolution(Box::new(
                SolidOfRevolution::new(profile.clone(), *params, *solution).map_err(runtime)?,
            )),
        })
    }

    fn system(&self) -> &MechanicalSystem<f64> {
        match self {
            Self::Chaplygin(c) => &c.system,
            Self::Revolution(b) => &b.system,
        }
    }

    fn extra_header(&self) -> Vec<String> {
        let mut h: Vec<String> = match self {
            Self::Chaplygin(_) => vec!["p_Z1".into()],
            Self::Revolution(_) => vec!["p_Z1".into(), "p_Z2".into()],
        };
        h.extend(["M1", "M2", "M3", "gamma1", "gamma2", "gamma3"].map(String::from));
        if let Self::Revolution(_) = self {
            h.extend((1..=5).map(|i| format!("sigma{i}")));
        }
        h
    }

    /// Gauge momenta followed by reduced variables.
    fn extra_values(&self, s: &PhaseState<f64>) -> nonholo_core::Result<Vec<f64>> {
        Ok(match self {
            Self::Chaplygin(c) => {
                let z = &c.system.gauge_generators[0];
                let r = c.reduce(s)?;
                let mut v = vec![momentum_value(&c.system, z, s)?];
                v.extend(r.m.iter().chain(r.gamma.iter()));
                v
            }
            Self::Revolution(b) => {
                let cs = b.casimirs(s)?;
                let r = b.reduce(s)?;
                let mut v = cs.to_vec();
                v.extend(r.m.iter().chain(r.gamma.iter()).chain(r.sigma.sigma.iter()));
                v
            }
        })
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Numbers are written in shortest round-trip form.
fn fmt(x: f64) -> String {
    format!("{x}")
}

fn max_drift(rows: &[Vec<f64>], col: usize) -> f64 {
    rows.iter().fold(0.0f64, |m, r| m.max((r[col] - rows[0][col]).abs()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub version: &'static str,
    pub system: String,
    pub seed: u64,
    pub method: String,
    pub step: f64,
    pub t_end: f64,
    pub samples: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub energy_initial: f64,
    pub energy_relative_drift: f64,
    pub momentum_drift: std::collections::BTreeMap<String, f64>,
    pub trajectory: PathBuf,
}

/// Integrates from the configured initial state; writes `trajectory.csv` and `summary.json`.
pub fn simulate(cfg: &RunConfig) -> Result<SimulationSummary, CliError> {
    let built = Built::new(&cfg.system)?;
    let sys = built.system();
    let s0 = PhaseState::from_slices(&cfg.q0, &cfg.pi0);
    let traj: Trajectory<f64> = integrate(sys, &s0, &cfg.integrator, &[Monitor::energy(sys)]).map_err(runtime)?;
    let (n, r) = (sys.n, sys.r);
    let energy = traj.monitor("H").expect("energy monitor");
    let mut rows = Vec::with_capacity(traj.states.len());
    for ((t, s), h) in traj.times.iter().zip(&traj.states).zip(energy) {
        let mut row = vec![*t];
        row.extend(s.q.iter().chain(s.pi.iter()));
        row.push(*h);
        row.extend(built.extra_values(s).map_err(runtime)?);
        rows.push(row);
    }
    let h0 = energy[0];
    let energy_drift = traj.max_drift("H").expect("energy monitor") / h0.abs().max(f64::MIN_POSITIVE);
    let extra = built.extra_header();
    let n_momenta = if extra[1] == "p_Z2" { 2 } else { 1 };
    let momentum_drift = (0..n_momenta).map(|j| (extra[j].clone(), max_drift(&rows, n + r + 2 + j))).collect();
    if let Some(limit) = cfg.max_energy_drift {
        if energy_drift > limit {
            return Err(CliError::Runtime(format!(
                "invariant H violated: relative energy drift {energy_drift:.3e} exceeds {limit:.3e}"
            )));
        }
    }

    create_dir(&cfg.out_dir)?;
    let csv_path = cfg.out_dir.join("trajectory.csv");
    let mut w = csv_writer(&csv_path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("q{i}")));
    header.extend((1..=r).map(|i| format!("pi{i}")));
    header.push("H".into());
    header.extend(extra);
    w.write_record(&header).map_err(runtime)?;
    for row in &rows {
        w.write_record(row.iter().map(|x| fmt(*x))).map_err(runtime)?;
    }
    w.flush().map_err(runtime)?;

    let summary = SimulationSummary {
        version: FORMAT_VERSION,
        system: sys.name.clone(),
        seed: cfg.seed,
        method: format!("{:?}", cfg.integrator.method),
        step: cfg.integrator.step,
        t_end: cfg.integrator.t_end,
        samples: rows.len(),
        accepted_steps: traj.accepted_steps,
        rejected_steps: traj.rejected_steps,
        energy_initial: h0,
        energy_relative_drift: energy_drift,
        momentum_drift,
        trajectory: csv_path,
    };
    write_json(&cfg.out_dir.join("summary.json"), &serde_json::to_value(&summary).map_err(runtime)?)?;
    Ok(summary)
}

/// System selection for `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VerifyTarget {
    /// The configured system.
    Config,
    /// Chaplygin sphere with the configured inertia.
    Chaplygin,
    /// Chaplygin sphere with `I1 != I3`.
    ChaplyginIntermediate,
    /// Chaplygin sphere with `I3 = I1`.
    ChaplyginHomogeneous,
    /// The configured (or default) solid of revolution.
    Revolution,
    /// Both bundled systems.
    All,
}

fn chaplygin_params_of(cfg: &RunConfig) -> ChaplyginParams {
    match &cfg.system {
        SystemConfig::Chaplygin(p) => *p,
        SystemConfig::Revolution { .. } => ChaplyginParams::default(),
    }
}

fn revolution_of(cfg: &RunConfig) -> Result<SystemConfig, CliError> {
    match &cfg.system {
        s @ SystemConfig::Revolution { .. } => Ok(s.clone()),
        SystemConfig::Chaplygin(_) => {
            let mut raw = crate::config::RawConfig::default();
            raw.set("system", "revolution").expect("known key");
            raw.set("revolution.potential", "gravity").expect("known key");
            raw.set("revolution.g0", "1").expect("known key");
            Ok(RunConfig::resolve(&raw, None).map_err(|e| CliError::Config(e.to_string()))?.system)
        }
    }
}

/// Expands the target into concrete systems.
fn verify_systems(cfg: &RunConfig, target: VerifyTarget) -> Result<Vec<SystemConfig>, CliError> {
    let chap = chaplygin_params_of(cfg);
    Ok(match target {
        VerifyTarget::Config => vec![cfg.system.clone()],
        VerifyTarget::Chaplygin => vec![SystemConfig::Chaplygin(chap)],
        VerifyTarget::ChaplyginIntermediate => {
            if chap.i1 == chap.i3 {
                return Err(CliError::Config("chaplygin-intermediate needs chaplygin.I1 != chaplygin.I3".into()));
            }
            vec![SystemConfig::Chaplygin(chap)]
        }
        VerifyTarget::ChaplyginHomogeneous => vec![SystemConfig::Chaplygin(ChaplyginParams { i3: chap.i1, ..chap })],
        VerifyTarget::Revolution => vec![revolution_of(cfg)?],
        VerifyTarget::All => vec![SystemConfig::Chaplygin(chap), revolution_of(cfg)?],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutput {
    pub version: &'static str,
    pub seed: u64,
    pub lambda: LambdaChoice,
    pub reports: Vec<Report>,
    pub all_ok: bool,
}

/// Runs the selected checks; `check = "all"` runs every check applicable to each system.
pub fn verify(cfg: &RunConfig, check: &str, target: VerifyTarget, jobs: Option<usize>) -> Result<VerifyOutput, CliError> {
    let systems = verify_systems(cfg, target)?;
    let mut built = Vec::new();
    for s in &systems {
        built.push(Built::new(s)?);
    }
    let mut tasks: Vec<(usize, &str)> = Vec::new();
    for (i, b) in built.iter().enumerate() {
        let names = match b {
            Built::Chaplygin(_) => CHAPLYGIN_CHECKS,
            Built::Revolution(_) => REVOLUTION_CHECKS,
        };
        if check == "all" {
            tasks.extend(names.iter().map(|c| (i, *c)));
        } else if let Some(c) = names.iter().find(|c| **c == check) {
            tasks.push((i, c));
        } else if systems.len() == 1 {
            return Err(CliError::Config(format!(
                "unknown check '{check}' for {}; available: {}",
                systems[0].kind(),
                names.join(", ")
            )));
        }
    }
    if tasks.is_empty() {
        return Err(CliError::Config(format!("unknown check '{check}'")));
    }
    let suite = SuiteConfig { n_samples: cfg.verify.n_samples, n_triples: cfg.verify.n_triples, seed: cfg.seed };
    let lambda = cfg.verify.lambda;
    let run_all = || -> Vec<nonholo_core::Result<Report>> {
        tasks
            .par_iter()
            .map(|(i, c)| match &built[*i] {
                Built::Chaplygin(s) => run_chaplygin_check(s, c, lambda, &suite),
                Built::Revolution(b) => run_revolution_check(b, c, lambda, &suite),
            })
            .collect()
    };
    let results = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(runtime)?.install(run_all),
        None => run_all(),
    };
    let reports: Vec<Report> = results.into_iter().collect::<Result<_, _>>().map_err(runtime)?;
    let all_ok = reports.iter().all(Report::ok);
    Ok(VerifyOutput { version: FORMAT_VERSION, seed: cfg.seed, lambda, reports, all_ok })
}

/// Writes the gauge-ODE solutions on the `theta` grid and their residuals.
pub fn gauge_ode(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let SystemConfig::Revolution { profile, params, .. } = &cfg.system else {
        return Err(CliError::Config("gauge-ode needs system = revolution".into()));
    };
    let (a, b) = solve_gauge_ode::<f64>(profile, params).map_err(runtime)?;
    if let Err(e) = profile.validate() {
        return Err(CliError::Runtime(format!(
            "{e}; Floquet residuals: evenness {:.3e}, periodicity {:.3e}",
            a.evenness_residual.max(b.evenness_residual),
            a.periodicity_residual.max(b.periodicity_residual)
        )));
    }
    create_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("gauge_ode.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["theta", "g1", "k1", "g2", "k2"]).map_err(runtime)?;
    for i in 0..a.theta_grid.len() {
        w.write_record([a.theta_grid[i], a.g[i], a.k[i], b.g[i], b.k[i]].map(fmt)).map_err(runtime)?;
    }
    w.flush().map_err(runtime)?;
    let out = json!({
        "version": FORMAT_VERSION,
        "profile": profile,
        "params": params,
        "steps": a.theta_grid.len() - 1,
        "evenness_1": a.evenness_residual,
        "periodicity_1": a.periodicity_residual,
        "evenness_2": b.evenness_residual,
        "periodicity_2": b.periodicity_residual,
        "wronskian_min": wronskian_min(&a, &b),
        "grid": path,
    });
    write_json(&cfg.out_dir.join("gauge_ode.json"), &out)?;
    Ok(out)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Blocks of `Pi_nh` and `Pi^Lambda` at the configured initial state.
pub fn bracket_table(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let built = Built::new(&cfg.system)?;
    let sys = built.system();
    let s = PhaseState::from_slices(&cfg.q0, &cfg.pi0);
    let lam = cfg.verify.lambda.build(sys, &sys.gauge_generators).map_err(runtime)?;
    let nh = pi_nh(sys, &s).map_err(runtime)?;
    let gl = gauge_transform(sys, &lam, &s).map_err(runtime)?;
    Ok(json!({
        "version": FORMAT_VERSION,
        "system": sys.name,
        "lambda": cfg.verify.lambda,
        "q": cfg.q0,
        "pi": cfg.pi0,
        "hamiltonian": hamiltonian(sys, &s).map_err(runtime)?,
        "rho": rows(&nh.rho),
        "pi_nh_lower_right": rows(&nh.lower_right),
        "pi_lambda_lower_right": rows(&gl.lower_right),
        "pi_nh": rows(&nh.to_matrix()),
        "pi_lambda": rows(&gl.to_matrix()),
    }))
}
