//! Run configuration: a strict JSON file overlaid with command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use brenier::conjugate::OracleConfig;
use brenier::synthetic::{ExperimentSpec, ExperimentSpecFile};
use brenier::{Potential, PotentialSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    FitGaussian,
    FitDictionary,
    Select,
    Sweep,
    Verify,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::FitGaussian => "fit-gaussian",
            Command::FitDictionary => "fit-dictionary",
            Command::Select => "select",
            Command::Sweep => "sweep",
            Command::Verify => "verify",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    LocationScale,
    FiniteSelect,
    PgdDictionary,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputFile {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

fn default_max_iter() -> usize {
    1000
}

/// On-disk layout of a run configuration. Every key is optional except where
/// the chosen command needs it.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub command: Option<Command>,
    pub source_csv: Option<PathBuf>,
    pub target_csv: Option<PathBuf>,
    #[serde(default)]
    pub header: bool,
    pub experiment: Option<ExperimentSpecFile>,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub output: OutputFile,
    pub seed: Option<u64>,
    pub log_level: Option<String>,
    /// Atoms for `fit-dictionary` and for a `pgd_dictionary` sweep.
    pub dictionary: Option<Vec<PotentialSpec>>,
    /// Candidates for `select`, a `finite_select` sweep, and `verify`.
    pub candidates: Option<Vec<PotentialSpec>>,
    pub estimator: Option<EstimatorKind>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub step: Option<f64>,
    #[serde(default)]
    pub ridge: f64,
    #[serde(default)]
    pub record_timing: bool,
}

impl Default for ConfigFile {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub tolerance: Option<f64>,
    pub max_iter: Option<usize>,
    pub header: bool,
    pub source_csv: Option<PathBuf>,
    pub target_csv: Option<PathBuf>,
    pub log_level: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Csv {
        source: PathBuf,
        target: PathBuf,
        header: bool,
    },
    Experiment(Box<ExperimentSpec>),
}

/// Validated configuration for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub input: Input,
    pub oracle: OracleConfig,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    pub log_level: String,
    pub dictionary: Vec<Potential>,
    pub candidates: Vec<Potential>,
    pub estimator: Option<EstimatorKind>,
    pub max_iter: usize,
    pub step: Option<f64>,
    pub ridge: f64,
    pub record_timing: bool,
}

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Parse { line: usize, column: usize, message: String },
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Parse { line, column, message } => {
                write!(f, "config parse error at line {line}, column {column}: {message}")
            }
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(m: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(m.into())
}

pub fn parse_config_str(text: &str) -> Result<ConfigFile, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn read_config_file(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

fn potentials(field: &str, specs: Option<Vec<PotentialSpec>>) -> Result<Vec<Potential>, ConfigError> {
    specs
        .unwrap_or_default()
        .into_iter()
        .enumerate()
        .map(|(i, s)| Potential::try_from(s).map_err(|e| invalid(format!("{field}[{i}]: {e}"))))
        .collect()
}

fn format_from_extension(path: &Path) -> Option<Format> {
    match path.extension()?.to_str()? {
        "csv" => Some(Format::Csv),
        "json" => Some(Format::Json),
        _ => None,
    }
}

/// Merges `file` with `flags` (flags win) and checks the result against `command`.
pub fn resolve(command: Command, file: ConfigFile, flags: Overrides) -> Result<RunConfig, ConfigError> {
    if let Some(c) = file.command {
        if c != command {
            return Err(invalid(format!(
                "command: config is for \"{c}\" but \"{command}\" was requested"
            )));
        }
    }

    let mut oracle = file.oracle;
    if let Some(t) = flags.tolerance {
        oracle.tolerance = t;
    }
    oracle
        .validate()
        .map_err(|e| invalid(format!("oracle: {e}")))?;

    let seed = flags.seed.or(file.seed);
    let source_csv = flags.source_csv.or(file.source_csv);
    let target_csv = flags.target_csv.or(file.target_csv);
    let input = match (source_csv, target_csv, file.experiment) {
        (Some(_), _, Some(_)) | (_, Some(_), Some(_)) => {
            return Err(invalid(
                "give either source_csv/target_csv or an embedded experiment, not both",
            ))
        }
        (Some(source), Some(target), None) => Input::Csv {
            source,
            target,
            header: file.header || flags.header,
        },
        (Some(_), None, None) => return Err(invalid("target_csv: missing (source_csv was given)")),
        (None, Some(_), None) => return Err(invalid("source_csv: missing (target_csv was given)")),
        (None, None, Some(mut exp)) => {
            if let Some(s) = seed {
                exp.seed = s;
            }
            Input::Experiment(Box::new(
                ExperimentSpec::try_from(exp).map_err(|e| invalid(format!("experiment: {e}")))?,
            ))
        }
        (None, None, None) => {
            return Err(invalid(
                "no input: set source_csv and target_csv, or embed an experiment",
            ))
        }
    };
    if matches!(command, Command::Sweep | Command::Verify) && matches!(input, Input::Csv { .. }) {
        return Err(invalid(format!("{command} needs an embedded experiment, not CSV inputs")));
    }

    let dictionary = potentials("dictionary", file.dictionary)?;
    let candidates = potentials("candidates", file.candidates)?;
    let max_iter = flags.max_iter.unwrap_or(file.max_iter);
    if max_iter == 0 {
        return Err(invalid("max_iter: must be positive"));
    }
    if let Some(step) = file.step {
        if !(step.is_finite() && step > 0.0) {
            return Err(invalid(format!("step: must be positive, got {step}")));
        }
    }
    if !(file.ridge.is_finite() && file.ridge >= 0.0) {
        return Err(invalid(format!("ridge: must be nonnegative, got {}", file.ridge)));
    }

    match command {
        Command::FitDictionary if dictionary.is_empty() => {
            return Err(invalid("dictionary: fit-dictionary needs at least one atom"))
        }
        Command::Select | Command::Verify if candidates.is_empty() => {
            return Err(invalid(format!("candidates: {command} needs at least one candidate")))
        }
        Command::Sweep => match file.estimator {
            None => return Err(invalid("estimator: sweep needs an estimator")),
            Some(EstimatorKind::FiniteSelect) if candidates.is_empty() => {
                return Err(invalid("candidates: finite_select sweep needs at least one candidate"))
            }
            Some(EstimatorKind::PgdDictionary) if dictionary.is_empty() => {
                return Err(invalid("dictionary: pgd_dictionary sweep needs at least one atom"))
            }
            _ => {}
        },
        _ => {}
    }

    let seed = match &input {
        Input::Experiment(spec) => spec.seed,
        Input::Csv { .. } => seed.unwrap_or(0),
    };
    let output = flags.out.or(file.output.path);
    let format = flags
        .format
        .or(file.output.format)
        .or_else(|| output.as_deref().and_then(format_from_extension))
        .unwrap_or(if command == Command::Sweep { Format::Csv } else { Format::Json });
    if let Some(dir) = output.as_deref().and_then(Path::parent) {
        if !dir.as_os_str().is_empty() && !dir.is_dir() {
            return Err(invalid(format!("output.path: directory {} does not exist", dir.display())));
        }
    }

    Ok(RunConfig {
        command,
        input,
        oracle,
        output,
        format,
        seed,
        log_level: flags.log_level.or(file.log_level).unwrap_or_else(|| "warn".into()),
        dictionary,
        candidates,
        estimator: file.estimator,
        max_iter,
        step: file.step,
        ridge: file.ridge,
        record_timing: file.record_timing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"source_csv": "x.csv", "target_csv": "y.csv"}"#;

    fn experiment(seed: u64) -> String {
        format!(
            r#"{{"experiment": {{"source": {{"kind": "gaussian", "mean": [0, 0], "cov": [[1, 0], [0, 1]]}},
                "truth": {{"kind": "quadratic", "matrix": [[2, 0], [0, 1]]}},
                "sample_sizes": [100], "seed": {seed}}}}}"#
        )
    }

    #[test]
    fn minimal_fit_gaussian_gets_defaults() {
        let cfg = resolve(Command::FitGaussian, parse_config_str(MINIMAL).unwrap(), Overrides::default()).unwrap();
        assert_eq!(cfg.oracle, OracleConfig::default());
        assert_eq!(cfg.format, Format::Json);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.max_iter, 1000);
        assert!(matches!(cfg.input, Input::Csv { header: false, .. }));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config_str(r#"{"oracle": {"tolerence": 1e-6}}"#).unwrap_err();
        assert!(err.to_string().contains("tolerence"), "{err}");
        let err = parse_config_str(r#"{"sead": 1}"#).unwrap_err();
        assert!(err.to_string().contains("sead"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_config_str("{\n  \"seed\": ,\n}") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_flag_wins() {
        let file = parse_config_str(&experiment(3)).unwrap();
        let flags = Overrides {
            seed: Some(7),
            ..Overrides::default()
        };
        let cfg = resolve(Command::FitGaussian, file, flags).unwrap();
        assert_eq!(cfg.seed, 7);
        match cfg.input {
            Input::Experiment(e) => assert_eq!(e.seed, 7),
            _ => panic!("expected experiment input"),
        }
    }

    #[test]
    fn inputs_are_exclusive() {
        let mut file = parse_config_str(&experiment(1)).unwrap();
        file.source_csv = Some("x.csv".into());
        file.target_csv = Some("y.csv".into());
        assert!(resolve(Command::FitGaussian, file, Overrides::default()).is_err());
        assert!(resolve(Command::FitGaussian, ConfigFile::default(), Overrides::default()).is_err());
    }

    #[test]
    fn command_specific_requirements() {
        let csv = || parse_config_str(MINIMAL).unwrap();
        assert!(resolve(Command::Select, csv(), Overrides::default()).is_err());
        assert!(resolve(Command::FitDictionary, csv(), Overrides::default()).is_err());
        assert!(resolve(Command::Sweep, csv(), Overrides::default()).is_err());
        let mut exp = parse_config_str(&experiment(1)).unwrap();
        exp.estimator = Some(EstimatorKind::LocationScale);
        let cfg = resolve(Command::Sweep, exp, Overrides::default()).unwrap();
        assert_eq!(cfg.format, Format::Csv);
    }

    #[test]
    fn flags_override_oracle_and_output() {
        let flags = Overrides {
            tolerance: Some(1e-10),
            max_iter: Some(5),
            out: Some("report.csv".into()),
            header: true,
            ..Overrides::default()
        };
        let cfg = resolve(Command::FitGaussian, parse_config_str(MINIMAL).unwrap(), flags).unwrap();
        assert_eq!(cfg.oracle.tolerance, 1e-10);
        assert_eq!(cfg.max_iter, 5);
        assert_eq!(cfg.format, Format::Csv);
        assert!(matches!(cfg.input, Input::Csv { header: true, .. }));
    }

    #[test]
    fn bad_atoms_are_validation_errors() {
        let text = r#"{"source_csv": "x.csv", "target_csv": "y.csv",
            "dictionary": [{"kind": "quadratic", "matrix": [[1, 0], [0, -1]]}]}"#;
        let err = resolve(Command::FitDictionary, parse_config_str(text).unwrap(), Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("dictionary[0]"), "{err}");
    }
}
