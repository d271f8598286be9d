use serde::{Deserialize, Serialize};

use super::pairs::{subset_by_horizon, HorizonDirection};
use super::roc::{count_le, split_sorted};
use super::scores::ScoreSet;
use crate::error::{Error, Result};
use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
    /// Set when fewer than one impostor fits under the bound, so the point is
    /// the strictest threshold the data can resolve.
    pub resolution_limited: bool,
}

/// FNMR at the largest threshold whose FMR stays within `fmr_max`.
///
/// The admissible set is right-open at the first impostor score that would
/// break the bound, so the threshold is the float just below that score.
pub fn fnmr_at_fmr(scores: &ScoreSet, fmr_max: f64) -> Result<OperatingPoint> {
    if !(fmr_max > 0.0 && fmr_max <= 1.0) {
        return Err(Error::InvalidArgument(format!("fmr_max must lie in (0, 1], got {fmr_max}")));
    }
    let (genuine, impostor) = split_sorted(scores)?;
    let ni = impostor.len();
    let allowed = ((fmr_max * ni as f64) + 1e-9).floor() as usize;
    let threshold = if allowed >= ni {
        genuine.last().unwrap().max(*impostor.last().unwrap())
    } else {
        impostor[allowed].next_down()
    };
    let fmr = count_le(&impostor, threshold) as f64 / ni as f64;
    let fnmr = (genuine.len() - count_le(&genuine, threshold)) as f64 / genuine.len() as f64;
    Ok(OperatingPoint {
        threshold,
        fmr,
        fnmr,
        resolution_limited: allowed == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsPoint {
    pub horizon_hours: f64,
    pub genuine: usize,
    pub impostor: usize,
    pub point: Option<OperatingPoint>,
    /// Why `point` is absent.
    pub flag: Option<String>,
}

/// FNMR at FMR ≤ `fmr_max` over cumulative `at_most` horizon subsets.
/// `rescore` maps each restricted subset to the scores to evaluate (e.g.
/// per-subset normalization).
pub fn fnmr_dynamics_with(
    manifest: &Manifest,
    scores: &ScoreSet,
    horizons: &[f64],
    fmr_max: f64,
    rescore: impl Fn(&ScoreSet) -> Result<ScoreSet>,
) -> Result<Vec<DynamicsPoint>> {
    if horizons.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("horizons must be strictly ascending".into()));
    }
    let mut out = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let subset = subset_by_horizon(manifest, h, HorizonDirection::AtMost)?;
        let restricted = scores.restrict_to_manifest(&subset);
        let (genuine, impostor) = (
            restricted.count(super::Label::Genuine),
            restricted.count(super::Label::Impostor),
        );
        let (point, flag) = if genuine == 0 || impostor == 0 {
            (None, Some(format!("one-class subset ({genuine} genuine, {impostor} impostor)")))
        } else {
            (Some(fnmr_at_fmr(&rescore(&restricted)?, fmr_max)?), None)
        };
        out.push(DynamicsPoint {
            horizon_hours: h,
            genuine,
            impostor,
            point,
            flag,
        });
    }
    Ok(out)
}

/// FNMR@FMR≤1% per cumulative horizon on the given scores.
pub fn fnmr_dynamics(manifest: &Manifest, scores: &ScoreSet, horizons: &[f64]) -> Result<Vec<DynamicsPoint>> {
    fnmr_dynamics_with(manifest, scores, horizons, 0.01, |s| Ok(s.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::scores::{Label, ScoreRecord, ScoreSource};

    fn set(genuine: &[f64], impostor: &[f64]) -> ScoreSet {
        let mk = |label, (i, &s): (usize, &f64)| ScoreRecord {
            sample_a: format!("{label}{i}a"),
            sample_b: format!("{label}{i}b"),
            label,
            score: s,
            n: None,
        };
        let records = genuine
            .iter()
            .enumerate()
            .map(|x| mk(Label::Genuine, x))
            .chain(impostor.iter().enumerate().map(|x| mk(Label::Impostor, x)))
            .collect();
        ScoreSet::new(records, ScoreSource::Internal)
    }

    #[test]
    fn separable_scores_have_zero_fnmr() {
        let s = set(&[0.1, 0.2], &[0.4, 0.5, 0.6]);
        for f in [0.01, 0.3, 0.5, 1.0] {
            assert_eq!(fnmr_at_fmr(&s, f).unwrap().fnmr, 0.0);
        }
    }

    #[test]
    fn constant_impostors_put_threshold_just_below() {
        let s = set(&[0.1, 0.3, 0.5, 0.6], &[0.5; 50]);
        let p = fnmr_at_fmr(&s, 0.01).unwrap();
        assert!(p.threshold < 0.5 && p.threshold > 0.4999999);
        assert_eq!(p.fmr, 0.0);
        // genuine scores above the threshold: 0.5 and 0.6
        assert_eq!(p.fnmr, 0.5);
        assert!(p.resolution_limited);
    }

    #[test]
    fn vacuous_bound_takes_max_score() {
        let s = set(&[0.1, 0.9], &[0.3, 0.5]);
        let p = fnmr_at_fmr(&s, 1.0).unwrap();
        assert_eq!(p.threshold, 0.9);
        assert_eq!(p.fnmr, 0.0);
        assert!(fnmr_at_fmr(&s, 0.0).is_err());
    }

    #[test]
    fn threshold_is_largest_admissible() {
        let imp: Vec<f64> = (0..100).map(|i| 0.3 + i as f64 * 0.001).collect();
        let s = set(&[0.2, 0.302, 0.31], &imp);
        let p = fnmr_at_fmr(&s, 0.02).unwrap();
        // two impostors may pass: 0.300, 0.301; the third (0.302) must not
        assert!(p.threshold < imp[2] && p.threshold >= imp[1]);
        assert_eq!(p.fmr, 0.02);
        assert!((p.fnmr - 2.0 / 3.0).abs() < 1e-12);
    }
}
