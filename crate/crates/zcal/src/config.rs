//! TOML configuration file. Every key is optional and command-line flags
//! take precedence.
//!
//! ```toml
//! gt = "data/train.json"
//! val_gt = "data/val.json"
//! cycles = 6
//! seeds = [0, 1, 2, 3, 4]
//! detector.kind = "external"
//! detector.command = "python detect.py"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub gt: Option<PathBuf>,
    pub val_gt: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub scorer: Option<String>,
    pub accumulator: Option<String>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub cycles: Option<usize>,
    pub initial_size: Option<usize>,
    pub iou: Option<f64>,
    pub confidence_threshold: Option<f64>,
    pub empty_image_score: Option<f64>,
    pub interpolation: Option<String>,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub data: DataConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// `synthetic` or `external`.
    pub kind: Option<String>,
    pub command: Option<String>,
    pub workdir: Option<PathBuf>,
    pub skill_floor: Option<f64>,
    pub skill_ceiling: Option<f64>,
    pub box_jitter: Option<f64>,
    pub miss_rate: Option<f64>,
    pub false_positive_rate: Option<f64>,
    pub concentration: Option<f64>,
    pub seed: Option<u64>,
    pub class_conditional: Option<bool>,
    pub class_saturation: Option<f64>,
}

/// Synthetic dataset, used when no ground-truth file is given.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub images: Option<usize>,
    pub val_images: Option<usize>,
    pub classes: Option<usize>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            Error::Format { origin: origin.into(), line, message: e.message().to_owned() }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys() {
        let c = FileConfig::parse("cycles = 3\ndetector.kind = \"external\"\ndata.classes = 4\n", "t").unwrap();
        assert_eq!(c.cycles, Some(3));
        assert_eq!(c.detector.kind.as_deref(), Some("external"));
        assert_eq!(c.data.classes, Some(4));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = FileConfig::parse("x = 1\ncylces = 3\n", "cfg.toml").unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
    }
}
