use std::fmt;

use serde::{Deserialize, Serialize};

use super::scores::Label;
use crate::error::{Error, Result};
use crate::manifest::{Manifest, SampleRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePair {
    pub sample_a: String,
    pub sample_b: String,
    pub label: Label,
}

/// Every unordered pair of the records passing `filter`, in manifest order
/// (`i < j`).
pub fn gen_pairs(manifest: &Manifest, filter: impl Fn(&SampleRecord) -> bool) -> Result<Vec<SamplePair>> {
    let recs: Vec<&SampleRecord> = manifest.records.iter().filter(|r| filter(r)).collect();
    if recs.len() < 2 {
        return Err(Error::TooFewSamples(recs.len()));
    }
    let mut out = Vec::with_capacity(recs.len() * (recs.len() - 1) / 2);
    for (i, a) in recs.iter().enumerate() {
        for b in &recs[i + 1..] {
            out.push(SamplePair {
                sample_a: a.sample_id.clone(),
                sample_b: b.sample_id.clone(),
                label: Label::of(a, b),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonDirection {
    AtMost,
    AtLeast,
}

/// Post-mortem capture-time bound on a subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub bound_hours: f64,
    pub direction: HorizonDirection,
}

impl Horizon {
    pub fn at_most(bound_hours: f64) -> Self {
        Horizon {
            bound_hours,
            direction: HorizonDirection::AtMost,
        }
    }

    pub fn at_least(bound_hours: f64) -> Self {
        Horizon {
            bound_hours,
            direction: HorizonDirection::AtLeast,
        }
    }

    pub fn contains(&self, record: &SampleRecord) -> bool {
        match self.direction {
            HorizonDirection::AtMost => record.capture_hours <= self.bound_hours,
            HorizonDirection::AtLeast => record.capture_hours >= self.bound_hours,
        }
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.direction {
            HorizonDirection::AtMost => "<=",
            HorizonDirection::AtLeast => ">=",
        };
        write!(f, "{op}{}h", self.bound_hours)
    }
}

pub fn subset_by_horizon(manifest: &Manifest, bound_hours: f64, direction: HorizonDirection) -> Result<Manifest> {
    if !(bound_hours >= 0.0) {
        return Err(Error::InvalidArgument(format!("horizon bound must be >= 0, got {bound_hours}")));
    }
    let h = Horizon {
        bound_hours,
        direction,
    };
    Ok(manifest.filtered(|r| h.contains(r)))
}
