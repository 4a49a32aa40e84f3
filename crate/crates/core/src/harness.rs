//! Command-line configuration, dispatch and persistence of results.
//!
//! Settings are resolved with the precedence command-line flag, then the
//! configuration file given by `--config`, then the built-in defaults.
//! [`run`] dispatches to the numerical modules and returns a [`RunOutput`];
//! [`write_outputs`] persists it. Data tables contain only values derived
//! from the configuration and keyed random streams, so rerunning a
//! configuration reproduces them byte for byte at any thread count.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::constants::constants_report;
use crate::error::{ensure, invalid, Error, Result};
use crate::field::Field;
use crate::kac_rice::{covariance_audit, kr_bound, IntervalSet, KrOptions};
use crate::output::Table;
use crate::rmt::{eigenvalues, esd_w1, sample_bhgoe_trial, sample_tbhgoe_trial, Model};
use crate::scenarios::{self, ScenarioOutcome};
use crate::tensor::{
    entanglement, estimate_injective_norm, hs_norm, sample_tensor_keyed, AlsOptions, Scalar, Tensor, DEFAULT_ENTRY_BUDGET,
};

/// Version tag of the manifest layout.
pub const MANIFEST_SCHEMA: &str = "injlab.manifest.v1";

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "INJLAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "injlab", version, about = "Injective norms of random tensors, random-matrix spectra and Kac-Rice bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Analytic constants for one (p, d, field).
    Constants,
    /// Sample Gaussian tensors and report their norms.
    SampleTensor,
    /// Estimate injective norms by multistart alternating maximization.
    InjNorm,
    /// Geometric entanglement of normalized Gaussian tensors.
    Gme,
    /// Spectra of BHGOE / tBHGOE matrices.
    Rmt,
    /// Monte Carlo Kac-Rice bound over an interval set.
    KacRice,
    /// Compare sampled landscape covariances with their closed forms.
    AuditCovariance,
    /// Run named acceptance scenarios (`--name`: a number, a name or `all`).
    Experiment,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::SampleTensor => "sample-tensor",
            Command::InjNorm => "inj-norm",
            Command::Gme => "gme",
            Command::Rmt => "rmt",
            Command::KacRice => "kac-rice",
            Command::AuditCovariance => "audit-covariance",
            Command::Experiment => "experiment",
        }
    }
}

/// Flags shared by all subcommands. Every field is optional so that unset
/// flags fall through to the configuration file and then to defaults. The
/// same keys (with dashes) are accepted in the TOML configuration file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Flags {
    /// Tensor order.
    #[arg(long, global = true)]
    pub p: Option<usize>,
    /// Dimension of each factor (block size for `rmt`).
    #[arg(long, global = true)]
    pub d: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub field: Option<Field>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Random restarts per ALS estimate.
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    /// Interval set `a:b[,c:d...]`; `inf` and `-inf` are allowed.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub interval: Option<String>,
    /// Simpson nodes per unit length for Kac-Rice integrals.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Monte Carlo samples.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub out: Option<OutFormat>,
    /// Output directory for the manifest and data files.
    #[arg(long, global = true)]
    pub out_path: Option<PathBuf>,
    /// Random-matrix model for `rmt`.
    #[arg(long, global = true, value_enum)]
    pub model: Option<Model>,
    /// Scenario for `experiment`.
    #[arg(long, global = true)]
    pub name: Option<String>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Flags {
    fn or(self, lower: Flags) -> Flags {
        Flags {
            p: self.p.or(lower.p),
            d: self.d.or(lower.d),
            field: self.field.or(lower.field),
            seed: self.seed.or(lower.seed),
            trials: self.trials.or(lower.trials),
            restarts: self.restarts.or(lower.restarts),
            interval: self.interval.or(lower.interval),
            grid: self.grid.or(lower.grid),
            samples: self.samples.or(lower.samples),
            out: self.out.or(lower.out),
            out_path: self.out_path.or(lower.out_path),
            model: self.model.or(lower.model),
            name: self.name.or(lower.name),
            config: self.config.or(lower.config),
        }
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub subcommand: Command,
    pub p: usize,
    pub d: usize,
    pub field: Field,
    pub seed: u64,
    pub trials: usize,
    pub restarts: usize,
    pub interval: Option<String>,
    pub grid: usize,
    pub samples: usize,
    pub out_format: OutFormat,
    pub out_path: Option<PathBuf>,
    pub model: Model,
    pub name: String,
}

impl Serialize for Command {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// Reads a TOML configuration file into [`Flags`].
pub fn read_config_file(path: &Path) -> Result<Flags> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| invalid(format!("bad configuration file {}: {e}", path.display())))
}

/// Merges command-line flags over the configuration file over defaults and
/// validates the result.
pub fn resolve(command: Command, cli: Flags) -> Result<ExperimentConfig> {
    let file = match &cli.config {
        Some(path) => read_config_file(path)?,
        None => Flags::default(),
    };
    let f = cli.or(file);
    let default_samples = match command {
        Command::AuditCovariance => 100_000,
        _ => 1000,
    };
    let cfg = ExperimentConfig {
        subcommand: command,
        p: f.p.unwrap_or(3),
        d: f.d.unwrap_or(10),
        field: f.field.unwrap_or(Field::Real),
        seed: f.seed.unwrap_or(0),
        trials: f.trials.unwrap_or(1),
        restarts: f.restarts.unwrap_or(32),
        interval: f.interval,
        grid: f.grid.unwrap_or(33),
        samples: f.samples.unwrap_or(default_samples),
        out_format: f.out.unwrap_or(OutFormat::Json),
        out_path: f.out_path,
        model: f.model.unwrap_or(Model::Bhgoe),
        name: f.name.unwrap_or_else(|| "all".into()),
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(c: &ExperimentConfig) -> Result<()> {
    ensure(c.p >= 2, || format!("--p must be at least 2, got {}", c.p))?;
    let min_d = if c.subcommand == Command::Rmt { 1 } else { 2 };
    ensure(c.d >= min_d, || format!("--d must be at least {min_d}, got {}", c.d))?;
    for (flag, v) in [("trials", c.trials), ("restarts", c.restarts), ("grid", c.grid), ("samples", c.samples)] {
        ensure(v >= 1, || format!("--{flag} must be at least 1"))?;
    }
    if let Some(s) = &c.interval {
        IntervalSet::parse(s)?;
    }
    if c.subcommand == Command::Experiment && c.name != "all" {
        scenarios::resolve(&c.name)?;
    }
    Ok(())
}

/// Number of worker threads requested through [`THREADS_ENV`], if any.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| invalid(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
            ensure(n >= 1, || format!("{THREADS_ENV} must be at least 1"))?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub data: Table,
    /// Structured result for subcommands that have one.
    pub result: Option<Value>,
    /// Extra named tables written next to the main data file.
    pub extra: Vec<(String, Table)>,
    /// How every random number in `data` was drawn.
    pub stream_keys: Vec<String>,
    pub warnings: Vec<String>,
    pub wall_time_seconds: f64,
    pub threads: usize,
}

/// Runs one configuration on the current rayon pool.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let mut out = RunOutput {
        config: config.clone(),
        data: Table::new(&[]),
        result: None,
        extra: Vec::new(),
        stream_keys: Vec::new(),
        warnings: Vec::new(),
        wall_time_seconds: 0.0,
        threads: rayon::current_num_threads(),
    };
    match config.subcommand {
        Command::Constants => run_constants(config, &mut out)?,
        Command::SampleTensor => match config.field {
            Field::Real => run_sample_tensor::<f64>(config, &mut out)?,
            Field::Complex => run_sample_tensor::<Complex64>(config, &mut out)?,
        },
        Command::InjNorm | Command::Gme => match config.field {
            Field::Real => run_inj_norm::<f64>(config, &mut out)?,
            Field::Complex => run_inj_norm::<Complex64>(config, &mut out)?,
        },
        Command::Rmt => run_rmt(config, &mut out)?,
        Command::KacRice => run_kac_rice(config, &mut out)?,
        Command::AuditCovariance => run_audit(config, &mut out)?,
        Command::Experiment => run_experiment(config, &mut out)?,
    }
    out.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Numerical(format!("serialization failed: {e}")))
}

fn run_constants(c: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let r = constants_report(c.p as u64, c.d as u64, c.field)?;
    let mut t = Table::new(&[
        "p",
        "d",
        "field",
        "e0",
        "alpha",
        "beta",
        "gamma",
        "gamma_asymptotic_3term",
        "gamma_minus",
        "gamma_dagger",
        "gamma_star",
        "e_star",
        "q_c",
        "log_prefactor",
        "max_abs_residual",
    ]);
    let max_res = r.residuals.values().map(|v| v.abs()).fold(0.0, f64::max);
    t.push(vec![
        r.p.into(),
        r.d.into(),
        r.field.as_str().into(),
        r.e0.into(),
        r.alpha.into(),
        r.beta.into(),
        r.gamma.into(),
        r.gamma_asymptotic_3term.into(),
        r.gamma_minus.into(),
        r.gamma_dagger.into(),
        r.gamma_star.into(),
        r.e_star.into(),
        r.q_c.into(),
        r.log_prefactor.into(),
        max_res.into(),
    ]);
    out.data = t;
    out.result = Some(to_value(&r)?);
    Ok(())
}

fn run_sample_tensor<S: Scalar>(c: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let mut t = Table::new(&["trial", "hs_norm_sq", "max_abs_entry", "first_entry_re", "first_entry_im"]);
    for trial in 0..c.trials as u64 {
        let x: Tensor<S> = sample_tensor_keyed(c.p, c.d, c.seed, &[trial], DEFAULT_ENTRY_BUDGET)?;
        let max_abs = x.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
        let first = x.data()[0];
        t.push(vec![trial.into(), hs_norm(&x).powi(2).into(), max_abs.into(), first.re().into(), first.im().into()]);
    }
    out.data = t;
    out.stream_keys.push("tensor entries: (seed, \"tensor\", [trial]), row-major".into());
    Ok(())
}

fn run_inj_norm<S: Scalar>(c: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let gme_mode = c.subcommand == Command::Gme;
    let mut t = if gme_mode {
        Table::new(&["trial", "inj_norm", "gme", "dist_sep", "hs_norm"])
    } else {
        Table::new(&["trial", "value", "value_over_sqrt_d", "iterations", "converged", "best_restart"])
    };
    for trial in 0..c.trials as u64 {
        let x: Tensor<S> = sample_tensor_keyed(c.p, c.d, c.seed, &[trial], DEFAULT_ENTRY_BUDGET)?;
        let opts = AlsOptions { restarts: c.restarts, seed: c.seed, trial, ..Default::default() };
        if gme_mode {
            let e = entanglement(&x.normalized()?, &opts)?;
            t.push(vec![trial.into(), e.inj_norm.into(), e.gme.into(), e.dist_sep.into(), hs_norm(&x).into()]);
        } else {
            let est = estimate_injective_norm(&x, &opts)?;
            if !est.converged {
                out.warnings.push(format!("trial {trial}: best restart did not reach the tolerance"));
            }
            t.push(vec![
                trial.into(),
                est.value.into(),
                (est.value / (c.d as f64).sqrt()).into(),
                est.iterations.into(),
                est.converged.into(),
                est.best_restart.into(),
            ]);
        }
    }
    out.data = t;
    out.stream_keys.push("tensor entries: (seed, \"tensor\", [trial])".into());
    out.stream_keys.push("ALS start of restart r, slot k: (seed, \"als\", [trial, r, k])".into());
    out.stream_keys.push("ALS zero-contraction resampling: (seed, \"als-aux\", [trial, r, sweep, k])".into());
    Ok(())
}

fn run_rmt(c: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let mut t = Table::new(&["trial", "n", "op_norm", "lambda_min", "lambda_max", "trace", "esd_w1"]);
    for trial in 0..c.trials as u64 {
        let m = match c.model {
            Model::Bhgoe => sample_bhgoe_trial(c.d, c.p, 1.0 / (c.p * c.d) as f64, c.seed, &[trial])?,
            Model::Tbhgoe => sample_tbhgoe_trial(c.d, c.p, c.seed, &[trial])?,
        };
        let s = eigenvalues(&m)?;
        t.push(vec![
            trial.into(),
            s.len().into(),
            s.op_norm.into(),
            s.min().into(),
            s.max().into(),
            s.trace().into(),
            esd_w1(&s, c.p, 0.0)?.into(),
        ]);
    }
    out.data = t;
    out.stream_keys.push("matrix entries: (seed, \"rmt\", [trial]), upper triangle row-major".into());
    Ok(())
}

fn run_kac_rice(c: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let domain = match &c.interval {
        Some(s) => IntervalSet::parse(s)?,
        None => IntervalSet::real_line(),
    };
    let opts = KrOptions { grid_per_unit: c.grid, samples: c.samples, seed: c.seed, ..Default::default() };
    let e = kr_bound(c.p, c.d, c.field, &domain, &opts)?;
    let mut t = Table::new(&[
        "p",
        "d",
        "field",
        "interval",
        "log_bound",
        "mc_stderr_log",
        "rate",
        "laplace_prediction",
        "log_prefactor",
        "log_integral",
        "grid_points",
        "samples",
        "u_max",
        "log_truncation_error",
        "refinements",
    ]);
    t.push(vec![
        e.p.into(),
        e.d.into(),
        e.field.as_str().into(),
        domain.to_string().into(),
        e.log_bound.into(),
        e.mc_stderr_log.into(),
        e.rate().into(),
        e.laplace_prediction.into(),
        e.log_prefactor.into(),
        e.log_integral.into(),
        e.grid_points.into(),
        e.samples_per_point.into(),
        e.u_max.into(),
        e.log_truncation_error.into(),
        e.refinements.into(),
    ]);
    out.warnings.extend(e.warnings.iter().cloned());
    out.data = t;
    out.result = Some(to_value(&e)?);
    out.stream_keys.push("Hessian sample s: (seed, \"kr\", [s]), shared by every grid point".into());
    Ok(())
}

fn run_audit(c: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let a = covariance_audit(c.p, c.d, c.field, c.samples, c.seed)?;
    let mut t = Table::new(&["a", "b", "empirical", "predicted", "stderr", "z"]);
    for e in &a.all {
        t.push(vec![
            e.a.clone().into(),
            e.b.clone().into(),
            e.empirical.into(),
            e.predicted.into(),
            e.stderr.into(),
            e.z.into(),
        ]);
    }
    out.data = t;
    let mut v = to_value(&a)?;
    v["covariances_match"] = json!(a.covariances_match());
    out.result = Some(v);
    out.stream_keys.push("tensor of sample s: (seed, \"audit\", [s])".into());
    Ok(())
}

fn scenario_rows(t: &mut Table, o: &ScenarioOutcome) {
    for ch in &o.checks {
        if ch.label == "runtime" {
            continue;
        }
        t.push(vec![
            (o.id as u64).into(),
            o.name.into(),
            ch.label.clone().into(),
            ch.pass.into(),
            ch.detail.clone().into(),
        ]);
    }
}

fn run_experiment(c: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let mut t = Table::new(&["criterion", "scenario", "check", "pass", "detail"]);
    let mut outcomes = Vec::new();
    let ids: Vec<u8> = if c.name == "all" { (1..=12).collect() } else { vec![scenarios::resolve(&c.name)?] };
    for &id in &ids {
        let o = if id == 12 {
            let reference = if outcomes.is_empty() { scenarios::run_all(c.seed)? } else { outcomes.clone() };
            scenarios::reproducibility(c.seed, &reference)?
        } else {
            scenarios::run_scenario(id, c.seed)?
        };
        eprintln!("{}", o.line());
        outcomes.push(o);
    }
    let mut timing = Vec::new();
    for o in &outcomes {
        scenario_rows(&mut t, o);
        out.extra.push((format!("criterion-{:02}", o.id), o.table.clone()));
        timing.push(json!({"criterion": o.id, "pass": o.pass(), "seconds": o.seconds, "line": o.line()}));
    }
    out.data = t;
    out.result = Some(json!({ "criteria": timing }));
    out.stream_keys.push("each scenario documents its keys in docs/schemas.md".into());
    Ok(())
}

impl RunOutput {
    fn data_schema(&self) -> String {
        format!("injlab.{}.v1", self.config.subcommand.name())
    }

    /// Serialized data file.
    pub fn data_bytes(&self) -> Result<Vec<u8>> {
        match self.config.out_format {
            OutFormat::Csv => self.data.to_csv(),
            OutFormat::Json => {
                let v = json!({
                    "schema_version": self.data_schema(),
                    "columns": self.data.columns,
                    "rows": self.data.to_json(),
                });
                let mut s = serde_json::to_vec_pretty(&v).map_err(|e| Error::Numerical(e.to_string()))?;
                s.push(b'\n');
                Ok(s)
            }
        }
    }

    fn data_file_name(&self) -> &'static str {
        match self.config.out_format {
            OutFormat::Csv => "data.csv",
            OutFormat::Json => "data.json",
        }
    }

    /// The manifest: configuration echo, timing, rows and summaries.
    pub fn manifest(&self) -> Value {
        json!({
            "schema_version": MANIFEST_SCHEMA,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.config.subcommand.name(),
            "config": self.config,
            "threads": self.threads,
            "wall_time_seconds": self.wall_time_seconds,
            "data_schema": self.data_schema(),
            "data_file": self.config.out_path.as_ref().map(|_| self.data_file_name()),
            "columns": self.data.columns,
            "row_count": self.data.len(),
            "rows": self.data.to_json(),
            "summary": self.data.summary(),
            "stream_keys": self.stream_keys,
            "result": self.result,
            "warnings": self.warnings,
        })
    }
}

/// Writes the manifest, the data file and any extra tables into
/// `config.out_path`, or prints to standard output when no path is set
/// (the manifest for JSON output, the bare table for CSV).
pub fn write_outputs(out: &RunOutput, stdout: &mut dyn std::io::Write) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    match &out.config.out_path {
        None => match out.config.out_format {
            OutFormat::Csv => stdout.write_all(&out.data_bytes()?).map_err(io),
            OutFormat::Json => {
                let s = serde_json::to_string_pretty(&out.manifest()).map_err(|e| Error::Numerical(e.to_string()))?;
                writeln!(stdout, "{s}").map_err(io)
            }
        },
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io)?;
            fs::write(dir.join(out.data_file_name()), out.data_bytes()?).map_err(io)?;
            for (name, table) in &out.extra {
                fs::write(dir.join(format!("{name}.csv")), table.to_csv()?).map_err(io)?;
            }
            let s = serde_json::to_string_pretty(&out.manifest()).map_err(|e| Error::Numerical(e.to_string()))?;
            fs::write(dir.join("manifest.json"), s + "\n").map_err(io)
        }
    }
}

/// Parses arguments, runs on a pool sized by [`THREADS_ENV`] and writes
/// outputs. Returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(stderr, "{}", e.render());
            if code == 0 {
                let _ = write!(stdout, "{}", e.render());
            }
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(warnings) => {
            for w in warnings {
                let _ = writeln!(stderr, "warning: {w}");
            }
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, stdout: &mut dyn std::io::Write) -> Result<Vec<String>> {
    let config = resolve(cli.command, cli.flags)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads_from_env()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Numerical(format!("cannot build thread pool: {e}")))?;
    let out = pool.install(|| run(&config))?;
    write_outputs(&out, stdout)?;
    Ok(out.warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(p: Option<usize>, seed: Option<u64>) -> Flags {
        Flags { p, seed, ..Default::default() }
    }

    #[test]
    fn precedence_cli_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "p = 4\nseed = 9\ntrials = 3\nfield = \"complex\"\n").unwrap();
        let mut cli = flags(Some(5), None);
        cli.config = Some(path);
        let c = resolve(Command::InjNorm, cli).unwrap();
        assert_eq!((c.p, c.seed, c.trials, c.field, c.d), (5, 9, 3, Field::Complex, 10));
        let c = resolve(Command::AuditCovariance, Flags::default()).unwrap();
        assert_eq!((c.p, c.seed, c.samples, c.restarts), (3, 0, 100_000, 32));
    }

    #[test]
    fn bad_config_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "bogus = 1\n").unwrap();
        let cli = Flags { config: Some(path), ..Default::default() };
        assert_eq!(resolve(Command::Constants, cli).unwrap_err().exit_code(), 2);
        let e = resolve(Command::KacRice, Flags { interval: Some("2:1".into()), ..Default::default() }).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(resolve(Command::Constants, flags(Some(1), None)).is_err());
    }

    #[test]
    fn exit_codes() {
        let mut o = Vec::new();
        let mut e = Vec::new();
        assert_eq!(main_with_args(["injlab", "constants", "--p", "3", "--d", "10"], &mut o, &mut e), 0);
        assert_eq!(main_with_args(["injlab", "constants", "--p", "x"], &mut o, &mut e), 2);
        assert_eq!(main_with_args(["injlab", "frobnicate"], &mut o, &mut e), 2);
        assert_eq!(main_with_args(["injlab", "constants", "--d", "1"], &mut o, &mut e), 2);
        assert_eq!(main_with_args(["injlab", "experiment", "--name", "nope"], &mut o, &mut e), 2);
    }

    #[test]
    fn rows_match_trials() {
        let c = resolve(Command::SampleTensor, Flags { trials: Some(4), d: Some(3), ..Default::default() }).unwrap();
        let out = run(&c).unwrap();
        assert_eq!(out.data.len(), 4);
        assert_eq!(out.manifest()["row_count"], 4);
    }
}
