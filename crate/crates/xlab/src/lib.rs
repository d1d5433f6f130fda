//! Experiment runner for the adq-core encoders. Each experiment drives
//! one of the core modules over a seeded parameter sweep and writes
//! plot-ready CSV tables plus a JSON summary; reruns with the same seed
//! and parameters reproduce every output byte for byte.

pub mod decoding;
pub mod modulator;
pub mod output;
pub mod params;
pub mod recovery;
pub mod stability;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

pub use output::{Outputs, Table};
pub use params::Params;

/// Version stamp written into every manifest and summary.
pub const SCHEMA_VERSION: u32 = 1;

/// Every experiment the runner knows.
pub const EXPERIMENTS: [&str; 10] = [
    "gamma-recovery",
    "gamma-polys",
    "gre-stability-sweep",
    "quiet-map",
    "orbit",
    "chaos-compare",
    "sd-accuracy",
    "omp-cv",
    "jl-check",
    "adaptive-demo",
];

/// What went wrong, split by who has to fix it: `Usage` means the
/// invocation was bad and exits with code 2, `Failed` means the run
/// itself broke and exits with code 1.
#[derive(Debug)]
pub enum RunError {
    Usage(String),
    Failed(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            RunError::Failed(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Usage(msg) | RunError::Failed(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<adq_core::Error> for RunError {
    fn from(e: adq_core::Error) -> Self {
        // Core config rejections mean the requested parameters were
        // invalid, which is an invocation problem.
        match e {
            adq_core::Error::Config(_) => RunError::Usage(e.to_string()),
            other => RunError::Failed(other.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Failed(format!("io error: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, RunError>;

/// A fully specified run: which experiment, overrides on top of its
/// defaults, the master seed, and the directory outputs go under.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub overrides: BTreeMap<String, String>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Runs one experiment and returns the directory its outputs landed in.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<PathBuf> {
    let runner = match spec.name.as_str() {
        "gamma-recovery" => recovery::gamma_recovery,
        "gamma-polys" => recovery::gamma_polys,
        "gre-stability-sweep" => stability::gre_stability_sweep,
        "quiet-map" => modulator::quiet_map,
        "orbit" => modulator::orbit,
        "chaos-compare" => modulator::chaos_compare,
        "sd-accuracy" => modulator::sd_accuracy,
        "omp-cv" => decoding::omp_cv,
        "jl-check" => decoding::jl_check,
        "adaptive-demo" => decoding::adaptive_demo,
        other => {
            return Err(RunError::Usage(format!(
                "unknown experiment {other:?}; expected one of: {}",
                EXPERIMENTS.join(", ")
            )))
        }
    };
    runner(spec)
}

/// Splits one `key=value` override. Values may contain further `=`
/// signs; surrounding whitespace is trimmed on both sides.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    match arg.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => {
            Ok((k.trim().to_string(), v.trim().to_string()))
        }
        _ => Err(RunError::Usage(format!("expected key=value, got {arg:?}"))),
    }
}

/// Parses a key=value config file: one pair per line, blank lines and
/// `#` comments ignored.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = parse_override(line).map_err(|_| {
            RunError::Usage(format!("config line {}: expected key=value, got {raw:?}", idx + 1))
        })?;
        map.insert(k, v);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_split_on_the_first_equals() {
        assert_eq!(
            parse_override(" grid = 10x10=cells ").unwrap(),
            ("grid".to_string(), "10x10=cells".to_string())
        );
        assert!(matches!(parse_override("novalue"), Err(RunError::Usage(_))));
        assert!(matches!(parse_override("=5"), Err(RunError::Usage(_))));
    }

    #[test]
    fn config_files_skip_blanks_and_comments() {
        let text = "# settings\n\n trials = 7 \nlengths=4,8\n";
        let map = parse_config_file(text).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map["trials"], "7");
        assert_eq!(map["lengths"], "4,8");
        let err = parse_config_file("good=1\nbroken line\n").unwrap_err();
        assert!(err.to_string().contains("config line 2"), "{err}");
    }

    #[test]
    fn unknown_experiments_are_usage_errors() {
        let spec = ExperimentSpec {
            name: "does-not-exist".into(),
            overrides: BTreeMap::new(),
            seed: 0,
            out_dir: std::env::temp_dir(),
        };
        let err = run_experiment(&spec).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("gamma-recovery"), "{err}");
    }

    #[test]
    fn unknown_parameters_are_usage_errors() {
        let tmp = tempfile::tempdir().unwrap();
        let mut overrides = BTreeMap::new();
        overrides.insert("bogus".to_string(), "1".to_string());
        let spec = ExperimentSpec {
            name: "orbit".into(),
            overrides,
            seed: 0,
            out_dir: tmp.path().to_path_buf(),
        };
        let err = run_experiment(&spec).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn core_config_errors_map_to_usage() {
        let e: RunError = adq_core::Error::Config("bad".into()).into();
        assert_eq!(e.exit_code(), 2);
        let e: RunError = adq_core::Error::Numerical("bad".into()).into();
        assert_eq!(e.exit_code(), 1);
    }
}
