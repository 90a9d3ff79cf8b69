//! Run configuration: defaults, overridden by the JSON config file,
//! overridden by command-line flags. One loader, no schema drift.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use cmpagg::compare::ComparisonKind;
use cmpagg::data::{SyntheticTask, TaskShape};
use cmpagg::error::{Error, Result};
use cmpagg::train::TrainConfig;

use crate::args::SharedArgs;

/// The config file: a flat key set mirroring the shared flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub comparison: Option<String>,
    pub windows: Option<Vec<usize>>,
    pub hidden_dim: Option<usize>,
    pub dropout: Option<f64>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub task_shape: Option<String>,
    pub embed_dim: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))
    }
}

/// Fully resolved settings for one command invocation.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub out_dir: PathBuf,
    /// Explicitly requested task shape, if any; synthetic specs and
    /// checkpoints supply one otherwise.
    pub task_shape: Option<TaskShape>,
    pub embed_dim: usize,
}

pub fn parse_windows(text: &str) -> Result<Vec<usize>> {
    let windows: Vec<usize> = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad window size {p:?} in {text:?}")))
        })
        .collect::<Result<_>>()?;
    if windows.is_empty() || windows.contains(&0) {
        return Err(Error::Config(format!("invalid window list {text:?}")));
    }
    Ok(windows)
}

impl RunConfig {
    /// Resolve defaults < config file < flags and validate the result.
    pub fn resolve(shared: &SharedArgs) -> Result<Self> {
        let file = match &shared.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let mut train = TrainConfig {
            max_epochs: 20,
            ..TrainConfig::default()
        };

        if let Some(seed) = file.seed {
            train.seed = seed;
        }
        if let Some(name) = &file.comparison {
            train.comparison = ComparisonKind::from_str(name)?;
        }
        if let Some(windows) = &file.windows {
            train.windows = windows.clone();
        }
        if let Some(hidden) = file.hidden_dim {
            train.hidden_dim = hidden;
        }
        if let Some(dropout) = file.dropout {
            train.dropout = dropout;
        }
        if let Some(lr) = file.lr {
            train.learning_rate = lr;
        }
        if let Some(batch) = file.batch_size {
            train.batch_size = batch;
        }
        if let Some(epochs) = file.epochs {
            train.max_epochs = epochs;
        }

        if let Some(seed) = shared.seed {
            train.seed = seed;
        }
        if let Some(name) = &shared.comparison {
            train.comparison = ComparisonKind::from_str(name)?;
        }
        if let Some(text) = &shared.windows {
            train.windows = parse_windows(text)?;
        }
        if let Some(hidden) = shared.hidden_dim {
            train.hidden_dim = hidden;
        }
        if let Some(dropout) = shared.dropout {
            train.dropout = dropout;
        }
        if let Some(lr) = shared.lr {
            train.learning_rate = lr;
        }
        if let Some(batch) = shared.batch_size {
            train.batch_size = batch;
        }
        if let Some(epochs) = shared.epochs {
            train.max_epochs = epochs;
        }
        train.validate()?;
        if train.windows.is_empty() || train.windows.contains(&0) {
            return Err(Error::Config("invalid window list".into()));
        }

        let task_shape = match shared.task_shape.as_deref().or(file.task_shape.as_deref()) {
            Some(name) => Some(TaskShape::from_str(name)?),
            None => None,
        };
        let embed_dim = shared.embed_dim.or(file.embed_dim).unwrap_or(50);
        if embed_dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(RunConfig {
            train,
            out_dir: shared
                .out_dir
                .clone()
                .or(file.out_dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            task_shape,
            embed_dim,
        })
    }
}

/// Parsed `--synthetic` specification: `task:n[:seed=S][:vocab=V]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub task: SyntheticTask,
    pub n: usize,
    pub vocab_size: usize,
    pub seed: Option<u64>,
}

impl SyntheticSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.split(':');
        let task: SyntheticTask = parts
            .next()
            .filter(|p| !p.is_empty())
            .ok_or_else(|| Error::Config(format!("empty synthetic spec {text:?}")))?
            .parse()?;
        let n: usize = parts
            .next()
            .ok_or_else(|| Error::Config(format!("synthetic spec {text:?} is missing a size")))?
            .parse()
            .map_err(|_| Error::Config(format!("bad size in synthetic spec {text:?}")))?;
        let mut spec = SyntheticSpec {
            task,
            n,
            vocab_size: 64,
            seed: None,
        };
        for part in parts {
            match part.split_once('=') {
                Some(("seed", v)) => {
                    spec.seed = Some(v.parse().map_err(|_| {
                        Error::Config(format!("bad seed in synthetic spec {text:?}"))
                    })?);
                }
                Some(("vocab", v)) => {
                    spec.vocab_size = v.parse().map_err(|_| {
                        Error::Config(format!("bad vocab size in synthetic spec {text:?}"))
                    })?;
                }
                _ => {
                    return Err(Error::Config(format!(
                        "unknown synthetic option {part:?} (expected seed=N or vocab=N)"
                    )))
                }
            }
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_spec_round_trip() {
        let spec = SyntheticSpec::parse("containment:200:seed=7").unwrap();
        assert_eq!(spec.task, SyntheticTask::Containment);
        assert_eq!(spec.n, 200);
        assert_eq!(spec.seed, Some(7));
        assert_eq!(spec.vocab_size, 64);

        let spec = SyntheticSpec::parse("plot:50:vocab=80").unwrap();
        assert_eq!(spec.task, SyntheticTask::PlotContainment);
        assert_eq!(spec.vocab_size, 80);

        assert!(SyntheticSpec::parse("containment").is_err());
        assert!(SyntheticSpec::parse("containment:x").is_err());
        assert!(SyntheticSpec::parse("bogus:10").is_err());
        assert!(SyntheticSpec::parse("containment:10:k=3").is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"lr": 0.5, "epochs": 3, "comparison": "sub"}"#).unwrap();
        let shared = SharedArgs {
            config: Some(path),
            lr: Some(0.25),
            ..SharedArgs::default()
        };
        let run = RunConfig::resolve(&shared).unwrap();
        assert_eq!(run.train.learning_rate, 0.25);
        assert_eq!(run.train.max_epochs, 3);
        assert_eq!(run.train.comparison, ComparisonKind::Sub);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"learning_rate": 0.5}"#).unwrap();
        let shared = SharedArgs {
            config: Some(path),
            ..SharedArgs::default()
        };
        assert!(RunConfig::resolve(&shared).is_err());
    }

    #[test]
    fn bad_windows_are_rejected() {
        assert!(parse_windows("1,2,3").is_ok());
        assert!(parse_windows("1,x").is_err());
        assert!(parse_windows("0").is_err());
    }
}
