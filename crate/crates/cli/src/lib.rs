//! Experiment orchestration for the impulse-control solver.
//!
//! Subcommands: `simulate` (SFDE paths to CSV), `solve` (value iteration +
//! policy extraction + evaluation on either backend), `policy-eval`
//! (re-evaluate a saved policy), `verify` (run the verification suites) and
//! `example` (the closed-form two-point-horizon instance end to end).
//!
//! Runs are self-describing: every resolved option is written into the
//! output directory next to the artifacts (`values.json`, `policy.json`,
//! `convergence.csv`, `report.json`).  With a fixed seed the numeric
//! artifacts are byte-identical across reruns; the only non-reproducible
//! column is the wall-time in the convergence log.
//!
//! Exit codes: 0 ok, 2 usage error, 3 numerical failure, 4 verification
//! failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use impulse_core::control::{DyadicGrid, ImpulseControl};
use impulse_core::error::Error as CoreError;
use impulse_core::instances;
use impulse_core::oracle::{example_supremum, example_value, FiniteInstance, LatticeHorizon};
use impulse_core::path::FeatureSpec;
use impulse_core::sfde::{simulate_with_noise, NoiseRealization, ProblemSpec};
use impulse_core::solver::lattice as lattice_solver;
use impulse_core::solver::regression::{self, RegressionOptions};
use impulse_core::solver::{convergence_csv, SolveOptions};
use impulse_core::verify;

/// CLI failure carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Verification(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) | CliError::Verification(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message())
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::InvalidInput(_)
            | CoreError::MarkDomain { .. }
            | CoreError::OffGrid(_)
            | CoreError::Io(_)
            | CoreError::Serialization(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Run configuration; a TOML file supplies defaults and command-line flags
/// override individual fields.  The resolved value is recorded into the
/// output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in problem name or `file:<path>` pointing at a finite-instance
    /// JSON file.
    pub problem: String,
    /// `exact-lattice` or `regression-mc`.
    pub backend: String,
    /// Dyadic grid level (1..=14) where the problem leaves it free.
    pub level: u32,
    pub k_max: Option<usize>,
    pub tol: f64,
    pub n_paths: usize,
    /// Forward-evaluation paths (0 means `n_paths`).
    pub eval_paths: usize,
    pub seed: u64,
    pub out: Option<String>,
    /// `auto`, `infinite` or `random-horizon`; non-auto values must match
    /// the instance.
    pub mode: String,
    /// Regression backend: monomial degree over the features.
    pub degree: usize,
    /// Regression backend: initial-state training dispersion.
    pub dispersion: f64,
    /// Regression backend: decision dates every this many grid nodes.
    pub date_stride: usize,
    /// Simulation: impulse control as inline JSON `[{"t":..,"b":..}]` or
    /// `@file`.
    pub control: Option<String>,
    /// Simulation: cap on the number of per-path CSV files written.
    pub max_path_files: usize,
    /// Verification: randomized lattice count for the Snell suite.
    pub n_lattices: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: "example".into(),
            backend: "exact-lattice".into(),
            level: 7,
            k_max: None,
            tol: 1e-6,
            n_paths: 10_000,
            eval_paths: 0,
            seed: 1,
            out: None,
            mode: "auto".into(),
            degree: 3,
            dispersion: 0.08,
            date_stride: 1,
            control: None,
            max_path_files: 8,
            n_lattices: 100,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        if !(1..=14).contains(&self.level) {
            return Err(usage(format!("level out of range: {} (must be 1..=14)", self.level)));
        }
        if self.n_paths == 0 {
            return Err(usage("n_paths must be at least 1"));
        }
        if !matches!(self.backend.as_str(), "exact-lattice" | "regression-mc") {
            return Err(usage(format!(
                "unknown backend '{}' (exact-lattice | regression-mc)",
                self.backend
            )));
        }
        if !matches!(self.mode.as_str(), "auto" | "infinite" | "random-horizon") {
            return Err(usage(format!(
                "unknown mode '{}' (auto | infinite | random-horizon)",
                self.mode
            )));
        }
        Ok(())
    }

    pub fn eval_paths(&self) -> usize {
        if self.eval_paths == 0 {
            self.n_paths
        } else {
            self.eval_paths
        }
    }
}

/// Common command-line flags; unset flags fall back to the config file and
/// then to the defaults.
#[derive(Debug, Clone, Args, Default)]
pub struct CommonArgs {
    /// TOML run-configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub level: Option<u32>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub eval_paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub dispersion: Option<f64>,
    #[arg(long)]
    pub date_stride: Option<usize>,
    /// Impulse control as inline JSON or @file.
    #[arg(long)]
    pub control: Option<String>,
    #[arg(long)]
    pub n_lattices: Option<usize>,
}

impl CommonArgs {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
                toml::from_str::<RunConfig>(&text)
                    .map_err(|e| usage(format!("bad config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = &self.problem {
            cfg.problem = v.clone();
        }
        if let Some(v) = &self.backend {
            cfg.backend = v.clone();
        }
        if let Some(v) = self.level {
            cfg.level = v;
        }
        if self.k_max.is_some() {
            cfg.k_max = self.k_max;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.n_paths {
            cfg.n_paths = v;
        }
        if let Some(v) = self.eval_paths {
            cfg.eval_paths = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = &self.mode {
            cfg.mode = v.clone();
        }
        if let Some(v) = self.degree {
            cfg.degree = v;
        }
        if let Some(v) = self.dispersion {
            cfg.dispersion = v;
        }
        if let Some(v) = self.date_stride {
            cfg.date_stride = v;
        }
        if let Some(v) = &self.control {
            cfg.control = Some(v.clone());
        }
        if let Some(v) = self.n_lattices {
            cfg.n_lattices = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "impulse",
    about = "Impulse-control solver: simulate, solve, evaluate, verify",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate controlled SFDE paths and export them as CSV.
    Simulate(CommonArgs),
    /// Run the value iteration and extract + evaluate the policy.
    Solve(CommonArgs),
    /// Re-evaluate a saved lattice policy.
    PolicyEval(PolicyEvalArgs),
    /// Run verification suites; any violation exits with code 4.
    Verify(VerifyArgs),
    /// Solve the closed-form two-point-horizon example at a grid level.
    Example(CommonArgs),
}

#[derive(Debug, Args)]
pub struct PolicyEvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Saved policy JSON (written by `solve`).
    #[arg(long)]
    pub policy: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// lattice | snell | enumeration | sfde | all
    #[arg(long, default_value = "all")]
    pub suite: String,
}

// ---------------------------------------------------------------------------
// Problem resolution
// ---------------------------------------------------------------------------

pub fn lattice_instance(cfg: &RunConfig) -> CliResult<FiniteInstance> {
    let name = cfg.problem.as_str();
    let inst = if let Some(path) = name.strip_prefix("file:") {
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read instance {path}: {e}")))?;
        FiniteInstance::load_json(&text)?
    } else {
        match name {
            "example" => instances::example_instance(cfg.level),
            "gbm" => instances::gbm_lattice(&instances::GbmSpec::standard())?,
            other => instances::shipped_instances()
                .into_iter()
                .find(|i| i.name == other)
                .ok_or_else(|| {
                    usage(format!(
                        "unknown lattice problem '{other}' (example, gbm, {}, or file:<path>)",
                        instances::shipped_instances()
                            .iter()
                            .map(|i| i.name.clone())
                            .collect::<Vec<_>>()
                            .join(", ")
                    ))
                })?,
        }
    };
    check_mode(cfg, &inst)?;
    Ok(inst)
}

fn check_mode(cfg: &RunConfig, inst: &FiniteInstance) -> CliResult<()> {
    let is_random = matches!(inst.horizon, LatticeHorizon::Random { .. });
    match (cfg.mode.as_str(), is_random) {
        ("auto", _) | ("infinite", false) | ("random-horizon", true) => Ok(()),
        (m, _) => Err(usage(format!(
            "mode '{m}' does not match the instance's horizon ({})",
            if is_random { "random-horizon" } else { "infinite" }
        ))),
    }
}

/// SFDE problems available to `simulate` and the regression backend, with
/// their canonical simulation horizons.
pub fn sfde_problem(name: &str) -> CliResult<(ProblemSpec, f64)> {
    match name {
        "gbm-mc" => {
            let spec = instances::GbmSpec::standard();
            Ok((instances::gbm_problem(&spec), spec.horizon))
        }
        "bs" => Ok((instances::bs_problem(), 1.0)),
        "flow-gbm" => Ok((instances::flow_gbm_problem(), 1.0)),
        "ou" => Ok((instances::ou_problem(), 1.0)),
        "bounded-discounted" => Ok((instances::bounded_discounted_problem(), 8.0)),
        other => Err(usage(format!(
            "unknown SFDE problem '{other}' (gbm-mc, bs, flow-gbm, ou, bounded-discounted)"
        ))),
    }
}

fn parse_control(raw: &Option<String>) -> CliResult<ImpulseControl> {
    match raw {
        None => Ok(ImpulseControl::empty()),
        Some(text) => {
            let json = if let Some(path) = text.strip_prefix('@') {
                fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read control file {path}: {e}")))?
            } else {
                text.clone()
            };
            Ok(ImpulseControl::from_json(&json)?)
        }
    }
}

// ---------------------------------------------------------------------------
// Artifact helpers
// ---------------------------------------------------------------------------

struct OutDir {
    dir: Option<PathBuf>,
}

impl OutDir {
    fn new(cfg: &RunConfig) -> CliResult<Self> {
        let dir = match &cfg.out {
            Some(d) => {
                let p = PathBuf::from(d);
                fs::create_dir_all(&p)
                    .map_err(|e| usage(format!("cannot create output dir {d}: {e}")))?;
                Some(p)
            }
            None => None,
        };
        Ok(OutDir { dir })
    }

    fn required(cfg: &RunConfig) -> CliResult<Self> {
        if cfg.out.is_none() {
            return Err(usage("this subcommand requires --out <dir>"));
        }
        Self::new(cfg)
    }

    fn write(&self, name: &str, content: &str) -> CliResult<()> {
        if let Some(dir) = &self.dir {
            fs::write(dir.join(name), content)
                .map_err(|e| usage(format!("cannot write {name}: {e}")))?;
        }
        Ok(())
    }

    fn record_config(&self, cfg: &RunConfig) -> CliResult<()> {
        let json = serde_json::to_string_pretty(cfg).map_err(CoreError::from)?;
        self.write("resolved_config.json", &json)
    }
}

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Simulate(args) => run_simulate(&args.resolve()?),
        Command::Solve(args) => run_solve(&args.resolve()?),
        Command::PolicyEval(args) => {
            let cfg = args.common.resolve()?;
            run_policy_eval(&cfg, &args.policy)
        }
        Command::Verify(args) => {
            let cfg = args.common.resolve()?;
            run_verify(&cfg, &args.suite)
        }
        Command::Example(args) => {
            let cfg = args.resolve()?;
            run_example(&cfg)
        }
    }
}

pub fn run_simulate(cfg: &RunConfig) -> CliResult<String> {
    let (problem, horizon) = sfde_problem(&cfg.problem)?;
    let grid = DyadicGrid::new(cfg.level, horizon)?;
    let control = parse_control(&cfg.control)?;
    let out = OutDir::required(cfg)?;
    out.record_config(cfg)?;

    let mut terminal = Vec::with_capacity(cfg.n_paths);
    let mut sup = Vec::with_capacity(cfg.n_paths);
    for p in 0..cfg.n_paths {
        let noise = NoiseRealization::for_grid(&problem, cfg.seed, p as u64, &grid);
        let path = simulate_with_noise(&problem, &control, &grid, &noise)?;
        if p < cfg.max_path_files {
            out.write(&format!("path_{p:03}.csv"), &path.to_csv())?;
        }
        terminal.push(path.right_at_node(grid.n_steps()));
        sup.push(path.sup_norm(0.0, grid.time(grid.n_steps()))?);
    }
    let t = impulse_core::sfde::mean_stderr(&terminal);
    let s = impulse_core::sfde::mean_stderr(&sup);
    let summary = serde_json::json!({
        "problem": problem.name,
        "n_paths": cfg.n_paths,
        "grid_level": cfg.level,
        "horizon": horizon,
        "control": control,
        "terminal_mean": t.value,
        "terminal_stderr": t.stderr,
        "sup_norm_mean": s.value,
        "sup_norm_stderr": s.stderr,
    });
    out.write(
        "summary.json",
        &serde_json::to_string_pretty(&summary).map_err(CoreError::from)?,
    )?;
    Ok(format!(
        "simulated {} paths of '{}' at level {}: terminal {:.6} +- {:.6}",
        cfg.n_paths, problem.name, cfg.level, t.value, t.stderr
    ))
}

pub fn run_solve(cfg: &RunConfig) -> CliResult<String> {
    match cfg.backend.as_str() {
        "exact-lattice" => solve_lattice(cfg),
        "regression-mc" => solve_regression(cfg),
        other => Err(usage(format!("unknown backend '{other}'"))),
    }
}

fn solve_lattice(cfg: &RunConfig) -> CliResult<String> {
    let instance = lattice_instance(cfg)?;
    let out = OutDir::required(cfg)?;
    out.record_config(cfg)?;
    let opts = SolveOptions {
        k_max: cfg.k_max,
        tol: cfg.tol,
        intervention_cutoff: None,
    };
    let values = lattice_solver::value_iteration(&instance, &opts)?;
    let policy = lattice_solver::extract_policy(&instance, &values)?;
    let exact = lattice_solver::evaluate_policy_exact(&instance, &policy)?;
    let forward = lattice_solver::evaluate_policy(&instance, &policy, cfg.eval_paths(), cfg.seed)?;

    out.write("values.json", &values.to_json()?)?;
    out.write("policy.json", &policy.to_json()?)?;
    out.write("convergence.csv", &convergence_csv(&values.convergence))?;
    let report = serde_json::json!({
        "instance": instance.name,
        "backend": "exact-lattice",
        "value": values.final_value(),
        "value_per_stage": values.value0,
        "stages_used": values.k_used(),
        "converged_at": values.converged_at,
        "domination_cap": values.cap,
        "policy_value_exact": exact,
        "policy_eval": forward,
    });
    out.write(
        "report.json",
        &serde_json::to_string_pretty(&report).map_err(CoreError::from)?,
    )?;
    Ok(format!(
        "solved '{}' (exact lattice): value {:.8}, {} stages (cap {}), policy check {:.8}",
        instance.name,
        values.final_value(),
        values.k_used(),
        values.cap,
        exact
    ))
}

fn solve_regression(cfg: &RunConfig) -> CliResult<String> {
    let (problem, horizon) = sfde_problem(&cfg.problem)?;
    let level = if cfg.problem == "gbm-mc" {
        instances::GbmSpec::standard().grid_level
    } else {
        cfg.level
    };
    let grid = DyadicGrid::new(level, horizon)?;
    let out = OutDir::required(cfg)?;
    out.record_config(cfg)?;
    let opts = RegressionOptions {
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        k_max: cfg.k_max.unwrap_or(4),
        tol: if cfg.tol > 0.0 { Some(cfg.tol) } else { None },
        features: FeatureSpec::default(),
        degree: cfg.degree,
        ridge: 1e-8,
        date_stride: cfg.date_stride,
        eval_paths: cfg.eval_paths(),
        initial_dispersion: cfg.dispersion,
    };
    let solution = regression::solve(&problem, &grid, &opts)?;
    out.write("values.json", &solution.values.to_json()?)?;
    let policy = serde_json::json!({
        "problem": problem.name,
        "dates": solution.values.dates,
        "degree": solution.values.degree,
        "features": solution.values.features,
        "stages": solution.values.stages,
        "marks": problem.marks,
        "rule": "intervene while the best obstacle is at least the fitted continuation",
    });
    out.write(
        "policy.json",
        &serde_json::to_string_pretty(&policy).map_err(CoreError::from)?,
    )?;
    out.write("convergence.csv", &convergence_csv(&solution.values.convergence))?;
    let report = serde_json::json!({
        "problem": problem.name,
        "backend": "regression-mc",
        "value": solution.forward.mean,
        "stderr": solution.forward.stderr,
        "histogram": solution.forward.histogram,
        "stages": solution.values.stages.iter().map(|s| s.value0).collect::<Vec<_>>(),
        "converged_at": solution.values.converged_at,
        "warnings": solution.values.warnings,
    });
    out.write(
        "report.json",
        &serde_json::to_string_pretty(&report).map_err(CoreError::from)?,
    )?;
    Ok(format!(
        "solved '{}' (regression): forward value {:.6} +- {:.6} over {} paths",
        problem.name, solution.forward.mean, solution.forward.stderr, solution.forward.n_paths
    ))
}

pub fn run_policy_eval(cfg: &RunConfig, policy_path: &Path) -> CliResult<String> {
    let instance = lattice_instance(cfg)?;
    let text = fs::read_to_string(policy_path)
        .map_err(|e| usage(format!("cannot read policy {}: {e}", policy_path.display())))?;
    let policy: lattice_solver::Policy =
        serde_json::from_str(&text).map_err(|e| usage(format!("bad policy file: {e}")))?;
    if policy.instance_name != instance.name {
        return Err(usage(format!(
            "policy was extracted for '{}', not '{}'",
            policy.instance_name, instance.name
        )));
    }
    let out = OutDir::new(cfg)?;
    out.record_config(cfg)?;
    let exact = lattice_solver::evaluate_policy_exact(&instance, &policy)?;
    let forward = lattice_solver::evaluate_policy(&instance, &policy, cfg.eval_paths(), cfg.seed)?;
    let report = serde_json::json!({
        "instance": instance.name,
        "policy_value_exact": exact,
        "policy_eval": forward,
    });
    out.write(
        "report.json",
        &serde_json::to_string_pretty(&report).map_err(CoreError::from)?,
    )?;
    Ok(format!(
        "policy on '{}': exact value {:.8}, forward {:.6} +- {:.6}",
        instance.name, exact, forward.mean, forward.stderr
    ))
}

pub fn run_verify(cfg: &RunConfig, suite: &str) -> CliResult<String> {
    let report = match suite {
        "lattice" => verify::verify_lattice(),
        "snell" => verify::verify_snell(cfg.n_lattices, cfg.seed),
        "enumeration" => verify::verify_enumeration(),
        "sfde" => verify::verify_sfde(cfg.seed),
        "all" => verify::verify_lattice()
            .merge(verify::verify_snell(cfg.n_lattices, cfg.seed))
            .merge(verify::verify_enumeration())
            .merge(verify::verify_sfde(cfg.seed)),
        other => {
            return Err(usage(format!(
                "unknown suite '{other}' (lattice | snell | enumeration | sfde | all)"
            )))
        }
    };
    let out = OutDir::new(cfg)?;
    out.record_config(cfg)?;
    out.write("report.json", &report.to_json()?)?;
    let mut lines = String::new();
    for check in &report.checks {
        let _ = writeln!(
            lines,
            "{} {}: {}",
            if check.pass { "ok  " } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    let _ = write!(lines, "{}", report.summary());
    if report.pass {
        Ok(lines)
    } else {
        Err(CliError::Verification(lines))
    }
}

pub fn run_example(cfg: &RunConfig) -> CliResult<String> {
    let instance = instances::example_instance(cfg.level);
    let out = OutDir::new(cfg)?;
    out.record_config(cfg)?;
    let opts = SolveOptions {
        k_max: cfg.k_max,
        tol: cfg.tol,
        intervention_cutoff: None,
    };
    let (values, policy) = lattice_solver::solve_random_horizon(&instance, &opts)?;
    let value = values.final_value();
    let h = 0.5f64.powi(cfg.level as i32);
    let closed_form = example_value(1.0 - h);
    let target = example_supremum();
    out.write("values.json", &values.to_json()?)?;
    out.write("policy.json", &policy.to_json()?)?;
    out.write("convergence.csv", &convergence_csv(&values.convergence))?;
    let eval = lattice_solver::evaluate_policy(&instance, &policy, 1, cfg.seed)?;
    let report = serde_json::json!({
        "instance": instance.name,
        "value": value,
        "closed_form": closed_form,
        "supremum": target,
        "gap_to_supremum": target - value,
        "policy_eval": eval,
    });
    out.write(
        "report.json",
        &serde_json::to_string_pretty(&report).map_err(CoreError::from)?,
    )?;
    if cfg.level >= 2 && (value - closed_form).abs() > 1e-9 {
        return Err(CliError::Numerical(format!(
            "example value {value:.12} deviates from the closed form {closed_form:.12}"
        )));
    }
    Ok(format!(
        "example at level {}: value {:.9} (closed form {:.9}), supremum target {:.9} not attained (gap {:.3e})",
        cfg.level,
        value,
        closed_form,
        target,
        target - value
    ))
}
