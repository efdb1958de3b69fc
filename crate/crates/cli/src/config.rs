use std::path::{Path, PathBuf};

use maskwin::harness::{SyntheticTaskSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "MASKWIN_SEED";

/// One JSON document describing a run. Missing fields take the defaults of
/// the default synthetic task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub task: SyntheticTaskSpec,
    pub train: TrainConfig,
    pub out_dir: Option<PathBuf>,
}

impl CliConfig {
    /// Reads `path`, or returns the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Usage(format!("invalid config at `{path}`: {}", e.into_inner()))
        })
    }

    /// Applies `MASKWIN_SEED` (if set) and validates everything.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.train.seed = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        }
        self.task.validate()?;
        self.train.validate()?;
        Ok(self)
    }

    /// `--out` wins over `out_dir` from the file.
    pub fn out_dir(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .ok_or_else(|| CliError::Usage("no output directory: pass --out or set out_dir".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(CliConfig::parse("{}").unwrap(), CliConfig::default());
    }

    #[test]
    fn unknown_key_names_its_path() {
        let err = CliConfig::parse(r#"{"train": {"lamda": 0.5}}"#).unwrap_err().to_string();
        assert!(err.contains("train.lamda"), "{err}");
    }

    #[test]
    fn wrong_type_names_its_path() {
        let err = CliConfig::parse(r#"{"task": {"n": "big"}}"#).unwrap_err().to_string();
        assert!(err.contains("task.n"), "{err}");
    }

    #[test]
    fn roundtrip() {
        let mut cfg = CliConfig::default();
        cfg.train.lambda = 0.25;
        cfg.out_dir = Some("runs/a".into());
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(CliConfig::parse(&text).unwrap(), cfg);
    }
}
