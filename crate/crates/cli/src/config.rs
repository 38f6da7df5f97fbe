//! Run configuration documents.
//!
//! A run config is a JSON object; every section and field is optional and
//! falls back to its default, but unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use mbls::data::{BlobSpec, SplitFractions};
use mbls::metrics::{DEFAULT_DIAGRAM_BINS, DEFAULT_ECE_BINS};
use mbls::model::TrainConfig;
use mbls::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub blobs: BlobSpec,
    pub fractions: SplitFractions,
    pub split_seed: u64,
    /// Holds `train.csv`, `val.csv`, `test.csv` and `manifest.json`.
    pub dir: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            blobs: BlobSpec::default(),
            fractions: SplitFractions::default(),
            split_seed: 0,
            dir: PathBuf::from("data"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub ece_bins: usize,
    pub diagram_bins: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            ece_bins: DEFAULT_ECE_BINS,
            diagram_bins: DEFAULT_DIAGRAM_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            train: TrainConfig::default(),
            metrics: MetricsConfig::default(),
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid run config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path`, or returns the validated defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, Error> {
        match path {
            None => {
                let config = RunConfig::default();
                config.validate()?;
                Ok(config)
            }
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_json(&text).map_err(|e| match e {
                    Error::Config(msg) => Error::Config(format!("{}: {msg}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.data.blobs.validate()?;
        let SplitFractions { train, val, test } = self.data.fractions;
        if !(train > 0.0 && val > 0.0 && test > 0.0) || ((train + val + test) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1, got ({train}, {val}, {test})"
            )));
        }
        self.train.validate()?;
        if self.metrics.ece_bins == 0 || self.metrics.diagram_bins == 0 {
            return Err(Error::Config("bin counts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in [
            r#"{"outputdir": "x"}"#,
            r#"{"data": {"blob": {}}}"#,
            r#"{"train": {"loss": {"kind": "ce", "margn": 1}}}"#,
            r#"{"metrics": {"bins": 10}}"#,
        ] {
            assert!(
                matches!(RunConfig::from_json(doc), Err(Error::Config(_))),
                "{doc}"
            );
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for doc in [
            r#"{"train": {"batch_size": 0}}"#,
            r#"{"train": {"loss": {"kind": "mbls", "margin": -1}}}"#,
            r#"{"data": {"fractions": {"train": 0.5, "val": 0.5, "test": 0.5}}}"#,
            r#"{"metrics": {"ece_bins": 0}}"#,
            r#"{"train": {"loss": {"kind": "hinge"}}}"#,
        ] {
            assert!(
                matches!(RunConfig::from_json(doc), Err(Error::Config(_))),
                "{doc}"
            );
        }
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c =
            RunConfig::from_json(r#"{"train": {"epochs": 3}, "data": {"split_seed": 9}}"#).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(c.data.split_seed, 9);
        assert_eq!(c.data.blobs, BlobSpec::default());
    }
}
