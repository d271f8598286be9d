//! Pipeline configuration, loaded from JSON, with a stable fingerprint.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boundary::HoughConfig;
use crate::encoding::{fingerprint_of, FilterBankConfig};
use crate::error::{Error, Result};
use crate::evaluation::EvaluationConfig;
use crate::normalization::PolarSize;
use crate::segmentation::Segmenter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub segmenter: Segmenter,
    pub hough: HoughConfig,
    pub polar: PolarSize,
    pub filter_bank: FilterBankConfig,
    /// Rotation search range, in grid columns either way.
    pub max_shift: u32,
    pub score_norm: bool,
    pub evaluation: EvaluationConfig,
    /// Not part of the fingerprint.
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            segmenter: Segmenter::default(),
            hough: HoughConfig::default(),
            polar: PolarSize::default(),
            filter_bank: FilterBankConfig::default(),
            max_shift: 8,
            score_norm: false,
            evaluation: EvaluationConfig::default(),
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hash over every field that can change a result.
    pub fn fingerprint(&self) -> u64 {
        let mut c = self.clone();
        c.output_dir = None;
        fingerprint_of(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(PipelineConfig::from_json("{}").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn roundtrip_and_fingerprint() {
        let c = PipelineConfig::default();
        let back = PipelineConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.fingerprint(), c.fingerprint());
        let moved = PipelineConfig {
            output_dir: Some("/tmp/x".into()),
            ..c.clone()
        };
        assert_eq!(moved.fingerprint(), c.fingerprint());
        let other = PipelineConfig { max_shift: 4, ..c.clone() };
        assert_ne!(other.fingerprint(), c.fingerprint());
    }

    #[test]
    fn classical_segmenter_parses() {
        let c = PipelineConfig::from_json(r#"{"segmenter": {"kind": "classical_baseline", "pupil_threshold": 50}}"#).unwrap();
        assert_eq!(c.segmenter.open_radius, 2);
        assert!(PipelineConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
