//! Run configuration: command-line flags layered over an optional TOML file.

use std::path::{Path, PathBuf};

use clap::Args;
use debacer_core::DEFAULT_AGENDA_LABEL;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "DEBACER_SEED";
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_K: usize = 5;
pub const DEFAULT_BUDGET: usize = 20;
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

/// Flags shared by every command. Each one wins over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML file with defaults for any of the flags below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Transcript file (CSV or JSONL).
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Labels CSV (`minute_id,order,label`).
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,
    /// Trained model file.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Directory for JSON reports.
    #[arg(long, global = true)]
    pub reports_dir: Option<PathBuf>,
    /// Explicit report path; defaults to `<reports-dir>/<command>.json`.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Agenda item label to work on.
    #[arg(long, global = true)]
    pub agenda_label: Option<String>,
    /// Master seed (also read from DEBACER_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of cross-validation folds.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Search budget in trials.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    /// Address for `annotate serve`.
    #[arg(long, global = true)]
    pub bind: Option<String>,
    /// Static API token for `annotate serve`.
    #[arg(long, global = true)]
    pub token: Option<String>,
}

/// Shape of the TOML config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub reports_dir: Option<PathBuf>,
    pub agenda_label: Option<String>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub budget: Option<usize>,
    pub bind: Option<String>,
    pub token: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Effective configuration after merging flags, file, environment and defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub reports_dir: PathBuf,
    pub report: Option<PathBuf>,
    pub agenda_label: String,
    pub seed: u64,
    pub k: usize,
    pub budget: usize,
    pub bind: String,
    /// Never serialized into reports.
    #[serde(skip)]
    pub token: Option<String>,
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

impl RunConfig {
    pub fn resolve(args: &GlobalArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Self::merge(args, file, env_seed()?)
    }

    /// Precedence: flag, then file, then environment (seed only), then default.
    pub fn merge(args: &GlobalArgs, file: FileConfig, env_seed: Option<u64>) -> Result<Self, CliError> {
        let cfg = RunConfig {
            corpus: args.corpus.clone().or(file.corpus),
            labels: args.labels.clone().or(file.labels),
            model: args.model.clone().or(file.model),
            reports_dir: args.reports_dir.clone().or(file.reports_dir).unwrap_or_else(|| PathBuf::from("reports")),
            report: args.report.clone(),
            agenda_label: args
                .agenda_label
                .clone()
                .or(file.agenda_label)
                .unwrap_or_else(|| DEFAULT_AGENDA_LABEL.to_string()),
            seed: args.seed.or(file.seed).or(env_seed).unwrap_or(DEFAULT_SEED),
            k: args.k.or(file.k).unwrap_or(DEFAULT_K),
            budget: args.budget.or(file.budget).unwrap_or(DEFAULT_BUDGET),
            bind: args.bind.clone().or(file.bind).unwrap_or_else(|| DEFAULT_BIND.to_string()),
            token: args.token.clone().or(file.token),
        };
        if cfg.k < 2 {
            return Err(CliError::Config(format!("k must be at least 2, got {}", cfg.k)));
        }
        if cfg.budget == 0 {
            return Err(CliError::Config("budget must be at least 1".into()));
        }
        if cfg.agenda_label.trim().is_empty() {
            return Err(CliError::Config("agenda label is empty".into()));
        }
        Ok(cfg)
    }

    /// Path to an existing input file, or a config error naming the flag.
    pub fn existing(path: Option<&PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
        let path = path.ok_or_else(|| CliError::Config(format!("--{flag} is required")))?;
        if !path.exists() {
            return Err(CliError::Config(format!("--{flag} {} does not exist", path.display())));
        }
        Ok(path.clone())
    }

    pub fn corpus_path(&self) -> Result<PathBuf, CliError> {
        Self::existing(self.corpus.as_ref(), "corpus")
    }

    pub fn labels_path(&self) -> Result<PathBuf, CliError> {
        Self::existing(self.labels.as_ref(), "labels")
    }

    pub fn model_path(&self) -> Result<PathBuf, CliError> {
        Self::existing(self.model.as_ref(), "model")
    }

    pub fn report_path(&self, command: &str) -> PathBuf {
        self.report
            .clone()
            .unwrap_or_else(|| self.reports_dir.join(format!("{command}.json")))
    }

    pub fn fingerprint(&self) -> String {
        debacer_core::fingerprint::fingerprint(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beats_env() {
        let file = FileConfig {
            seed: Some(5),
            k: Some(10),
            agenda_label: Some("votes".into()),
            ..FileConfig::default()
        };
        let args = GlobalArgs {
            seed: Some(9),
            ..GlobalArgs::default()
        };
        let cfg = RunConfig::merge(&args, file.clone(), Some(1)).unwrap();
        assert_eq!((cfg.seed, cfg.k, cfg.agenda_label.as_str()), (9, 10, "votes"));
        let cfg = RunConfig::merge(&GlobalArgs::default(), file, Some(1)).unwrap();
        assert_eq!(cfg.seed, 5);
        let cfg = RunConfig::merge(&GlobalArgs::default(), FileConfig::default(), Some(1)).unwrap();
        assert_eq!(cfg.seed, 1);
        let cfg = RunConfig::merge(&GlobalArgs::default(), FileConfig::default(), None).unwrap();
        assert_eq!((cfg.seed, cfg.k), (DEFAULT_SEED, DEFAULT_K));
    }

    #[test]
    fn rejects_bad_values() {
        let args = GlobalArgs {
            k: Some(1),
            ..GlobalArgs::default()
        };
        assert!(matches!(RunConfig::merge(&args, FileConfig::default(), None), Err(CliError::Config(_))));
        assert!(toml::from_str::<FileConfig>("nope = 1").is_err());
        let parsed: FileConfig = toml::from_str("seed = 3\nk = 4\ncorpus = \"c.csv\"").unwrap();
        assert_eq!(parsed.seed, Some(3));
        assert_eq!(parsed.corpus, Some(PathBuf::from("c.csv")));
    }

    #[test]
    fn token_stays_out_of_fingerprint() {
        let a = RunConfig::merge(&GlobalArgs::default(), FileConfig::default(), None).unwrap();
        let mut b = a.clone();
        b.token = Some("secret".into());
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert!(!serde_json::to_string(&b).unwrap().contains("secret"));
    }
}
