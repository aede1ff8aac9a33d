//! Command-line front end for the `brenier` estimators.
//!
//! The binary is a thin wrapper around [`main_with_args`]; everything it does
//! is also reachable through [`config::resolve`] and [`run`].

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use brenier::closed_form::fit_location_scale;
use brenier::semidual::{pgd_fit, select_finite, EmpiricalPair};
use brenier::synthetic::{draw_pair, rate_sweep, stability_check, Estimator, SweepOptions};
use brenier::{ErrorClass, Potential, PotentialSpec, SampleSet};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{Command, ConfigError, EstimatorKind, Format, Input, Overrides, RunConfig};
use report::{fmt_f64, rows, to_json_bytes, vector, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "brenier", version, about = "Estimate optimal transport maps from unpaired samples")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Plug-in location-scale (Gaussian) estimator.
    FitGaussian(Common),
    /// Projected gradient descent over dictionary weights.
    FitDictionary(Common),
    /// Pick the candidate with the smallest empirical semidual.
    Select(Common),
    /// Monte Carlo rate sweep over sample sizes and replicates.
    Sweep(Common),
    /// Check the stability sandwich for each candidate against the truth.
    Verify(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Report destination; stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Conjugate oracle tolerance.
    #[arg(long, value_name = "REAL")]
    tolerance: Option<f64>,
    /// Iteration cap for projected gradient descent.
    #[arg(long, value_name = "N")]
    max_iter: Option<usize>,
    /// Input CSV files start with a header row.
    #[arg(long)]
    header: bool,
    #[arg(long, value_name = "PATH")]
    source: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    target: Option<PathBuf>,
    #[arg(long, value_name = "LEVEL")]
    log_level: Option<String>,
}

impl Sub {
    fn split(self) -> (Command, Common) {
        match self {
            Sub::FitGaussian(c) => (Command::FitGaussian, c),
            Sub::FitDictionary(c) => (Command::FitDictionary, c),
            Sub::Select(c) => (Command::Select, c),
            Sub::Sweep(c) => (Command::Sweep, c),
            Sub::Verify(c) => (Command::Verify, c),
        }
    }
}

/// A failure tagged with the pipeline stage it came from.
#[derive(Debug)]
pub struct RunError {
    pub stage: &'static str,
    pub class: ErrorClass,
    pub message: String,
}

impl RunError {
    fn lib(stage: &'static str, e: brenier::Error) -> Self {
        Self {
            stage,
            class: e.class(),
            message: e.to_string(),
        }
    }

    fn config(e: ConfigError) -> Self {
        Self {
            stage: "config",
            class: match e {
                ConfigError::Io { .. } => ErrorClass::Io,
                _ => ErrorClass::Usage,
            },
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::Usage => EXIT_USAGE,
            ErrorClass::Numerical => EXIT_NUMERICAL,
            ErrorClass::Io => EXIT_IO,
        }
    }

    pub fn to_json(&self) -> String {
        let class = match self.class {
            ErrorClass::Usage => "usage",
            ErrorClass::Numerical => "numerical",
            ErrorClass::Io => "io",
        };
        serde_json::json!({
            "error": { "stage": self.stage, "class": class, "message": self.message }
        })
        .to_string()
    }
}

fn load_pair(input: &Input) -> Result<EmpiricalPair, RunError> {
    let stage = "input";
    match input {
        Input::Csv { source, target, header } => {
            let read = |path: &PathBuf| {
                SampleSet::read_csv_path(path, *header).map_err(|e| {
                    let mut err = RunError::lib(stage, e);
                    err.message = format!("{}: {}", path.display(), err.message);
                    err
                })
            };
            let (x, y) = (read(source)?, read(target)?);
            EmpiricalPair::new(x, y).map_err(|e| RunError::lib(stage, e))
        }
        Input::Experiment(spec) => draw_pair(spec, 0, 0).map_err(|e| RunError::lib(stage, e)),
    }
}

fn experiment(cfg: &RunConfig) -> &brenier::synthetic::ExperimentSpec {
    match &cfg.input {
        Input::Experiment(spec) => spec,
        Input::Csv { .. } => unreachable!("validated: command needs an experiment"),
    }
}

#[derive(Serialize)]
struct GaussianReport {
    estimator: &'static str,
    n_source: usize,
    n_target: usize,
    mean_p: Vec<f64>,
    mean_q: Vec<f64>,
    cov_p: Vec<Vec<f64>>,
    cov_q: Vec<Vec<f64>>,
    monge_matrix: Vec<Vec<f64>>,
    potential: PotentialSpec,
}

#[derive(Serialize)]
struct DictionaryReport {
    #[serde(flatten)]
    fit: brenier::semidual::SemidualFitReport,
    potential: PotentialSpec,
}

#[derive(Serialize)]
struct SelectReport {
    selected: usize,
    values: Vec<f64>,
    potential: PotentialSpec,
}

#[derive(Serialize)]
struct VerifyRow {
    candidate: usize,
    holds: bool,
    #[serde(flatten)]
    report: brenier::synthetic::StabilityReport,
}

fn bool_cell(b: bool) -> String {
    b.to_string()
}

fn fit_gaussian(cfg: &RunConfig) -> Result<Vec<u8>, RunError> {
    let data = load_pair(&cfg.input)?;
    let est = fit_location_scale(&data, cfg.ridge).map_err(|e| RunError::lib("fit", e))?;
    let potential = est.potential().map_err(|e| RunError::lib("fit", e))?;
    let shift = match &potential {
        Potential::Quadratic(q) => q.shift().clone(),
        _ => unreachable!("location-scale fit is quadratic"),
    };
    Ok(match cfg.format {
        Format::Json => json(&GaussianReport {
            estimator: "location_scale",
            n_source: data.source().len(),
            n_target: data.target().len(),
            mean_p: vector(&est.mean_p),
            mean_q: vector(&est.mean_q),
            cov_p: rows(&est.cov_p),
            cov_q: rows(&est.cov_q),
            monge_matrix: rows(&est.monge_matrix),
            potential: potential.to_spec(),
        })?,
        Format::Csv => {
            // the affine map x ↦ A x + b, one output coordinate per row
            let d = data.dim();
            let mut t = Table::new((0..d).map(|j| format!("a{j}")).chain(["b".to_string()]));
            for i in 0..d {
                let mut row: Vec<String> = (0..d).map(|j| fmt_f64(est.monge_matrix[(i, j)])).collect();
                row.push(fmt_f64(shift[i]));
                t.push(row);
            }
            t.to_bytes()
        }
    })
}

fn fit_dictionary(cfg: &RunConfig) -> Result<Vec<u8>, RunError> {
    let data = load_pair(&cfg.input)?;
    let fit = pgd_fit(&cfg.dictionary, &data, cfg.step, cfg.max_iter, &cfg.oracle)
        .map_err(|e| RunError::lib("fit", e))?;
    Ok(match cfg.format {
        Format::Json => {
            let potential = Potential::mixture(cfg.dictionary.clone(), fit.weights.clone())
                .map_err(|e| RunError::lib("fit", e))?;
            json(&DictionaryReport {
                fit,
                potential: potential.to_spec(),
            })?
        }
        Format::Csv => {
            let mut t = Table::new(["atom", "weight"]);
            for (j, w) in fit.weights.iter().enumerate() {
                t.push(vec![j.to_string(), fmt_f64(*w)]);
            }
            t.to_bytes()
        }
    })
}

fn select(cfg: &RunConfig) -> Result<Vec<u8>, RunError> {
    let data = load_pair(&cfg.input)?;
    let (k, values) = select_finite(&cfg.candidates, &data, &cfg.oracle).map_err(|e| RunError::lib("select", e))?;
    Ok(match cfg.format {
        Format::Json => json(&SelectReport {
            selected: k,
            values,
            potential: cfg.candidates[k].to_spec(),
        })?,
        Format::Csv => {
            let mut t = Table::new(["candidate", "semidual", "selected"]);
            for (j, v) in values.iter().enumerate() {
                t.push(vec![j.to_string(), fmt_f64(*v), bool_cell(j == k)]);
            }
            t.to_bytes()
        }
    })
}

fn sweep(cfg: &RunConfig) -> Result<Vec<u8>, RunError> {
    let spec = experiment(cfg);
    let estimator = match cfg.estimator.expect("validated: sweep has an estimator") {
        EstimatorKind::LocationScale => Estimator::LocationScale { ridge: cfg.ridge },
        EstimatorKind::FiniteSelect => Estimator::FiniteSelect {
            candidates: cfg.candidates.clone(),
        },
        EstimatorKind::PgdDictionary => Estimator::PgdDictionary {
            atoms: cfg.dictionary.clone(),
            step: cfg.step,
            max_iter: cfg.max_iter,
        },
    };
    let opts = SweepOptions {
        oracle: cfg.oracle.clone(),
        record_timing: cfg.record_timing,
    };
    let table = rate_sweep(spec, &estimator, &opts).map_err(|e| RunError::lib("sweep", e))?;
    Ok(match cfg.format {
        Format::Json => json(&table)?,
        Format::Csv => {
            let mut t = Table::new([
                "n",
                "replicate",
                "estimator",
                "map_error",
                "map_error_se",
                "excess",
                "excess_se",
                "wall_ms",
            ]);
            for r in &table {
                t.push(vec![
                    r.n.to_string(),
                    r.replicate.to_string(),
                    r.estimator.clone(),
                    fmt_f64(r.map_error),
                    fmt_f64(r.map_error_se),
                    fmt_f64(r.excess),
                    fmt_f64(r.excess_se),
                    r.wall_ms.to_string(),
                ]);
            }
            t.to_bytes()
        }
    })
}

fn verify(cfg: &RunConfig) -> Result<Vec<u8>, RunError> {
    let spec = experiment(cfg);
    let reports = cfg
        .candidates
        .iter()
        .enumerate()
        .map(|(k, p1)| {
            stability_check(p1, &spec.truth, spec, &cfg.oracle)
                .map(|report| VerifyRow {
                    candidate: k,
                    holds: report.holds(),
                    report,
                })
                .map_err(|e| RunError::lib("verify", e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match cfg.format {
        Format::Json => json(&reports)?,
        Format::Csv => {
            let mut t = Table::new([
                "candidate",
                "excess",
                "excess_se",
                "map_error",
                "map_error_se",
                "mc_margin",
                "alpha1",
                "beta1",
                "lower_ok",
                "upper_ok",
                "holds",
            ]);
            for v in &reports {
                let r = &v.report;
                t.push(vec![
                    v.candidate.to_string(),
                    fmt_f64(r.excess),
                    fmt_f64(r.excess_se),
                    fmt_f64(r.map_error),
                    fmt_f64(r.map_error_se),
                    fmt_f64(r.mc_margin),
                    fmt_f64(r.alpha1),
                    fmt_f64(r.beta1),
                    bool_cell(r.lower_ok),
                    bool_cell(r.upper_ok),
                    bool_cell(v.holds),
                ]);
            }
            t.to_bytes()
        }
    })
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, RunError> {
    to_json_bytes(value).map_err(|e| RunError {
        stage: "output",
        class: ErrorClass::Io,
        message: e.to_string(),
    })
}

/// Produces the report bytes for a validated configuration.
pub fn execute(cfg: &RunConfig) -> Result<Vec<u8>, RunError> {
    match cfg.command {
        Command::FitGaussian => fit_gaussian(cfg),
        Command::FitDictionary => fit_dictionary(cfg),
        Command::Select => select(cfg),
        Command::Sweep => sweep(cfg),
        Command::Verify => verify(cfg),
    }
}

/// Writes the report for `cfg` to its destination.
pub fn run(cfg: &RunConfig) -> Result<(), RunError> {
    let bytes = execute(cfg)?;
    let written = match &cfg.output {
        Some(path) => std::fs::write(path, &bytes),
        None => {
            use std::io::Write;
            std::io::stdout().lock().write_all(&bytes)
        }
    };
    written.map_err(|e| RunError {
        stage: "output",
        class: ErrorClass::Io,
        message: e.to_string(),
    })
}

fn resolve_cli(command: Command, c: Common) -> Result<RunConfig, RunError> {
    let file = match &c.config {
        Some(path) => config::read_config_file(path).map_err(RunError::config)?,
        None => config::ConfigFile::default(),
    };
    let flags = Overrides {
        seed: c.seed,
        out: c.out,
        format: c.format,
        tolerance: c.tolerance,
        max_iter: c.max_iter,
        header: c.header,
        source_csv: c.source,
        target_csv: c.target,
        log_level: c.log_level,
    };
    config::resolve(command, file, flags).map_err(RunError::config)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (command, common) = cli.command.split();
    let outcome = resolve_cli(command, common).and_then(|cfg| {
        let _ = env_logger::Builder::new()
            .parse_filters(&cfg.log_level)
            .try_init();
        log::info!("running {} with seed {}", cfg.command, cfg.seed);
        run(&cfg)
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
