use serde::{Deserialize, Serialize};

use super::scores::{Label, ScoreSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    /// Fraction of impostor scores `<= threshold`.
    pub fmr: f64,
    /// Fraction of genuine scores `> threshold`.
    pub fnmr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub eer: f64,
    pub eer_threshold: f64,
}

/// Both classes' scores, sorted ascending.
pub(crate) fn split_sorted(scores: &ScoreSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut genuine = scores.scores(Label::Genuine);
    let mut impostor = scores.scores(Label::Impostor);
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::OneClass {
            genuine: genuine.len(),
            impostor: impostor.len(),
        });
    }
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);
    Ok((genuine, impostor))
}

#[inline]
pub(crate) fn count_le(sorted: &[f64], t: f64) -> usize {
    sorted.partition_point(|&s| s <= t)
}

fn unique_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// FMR/FNMR over thresholds at every distinct observed score, or at
/// `resolution` evenly spaced quantiles of the pooled scores when there are
/// more distinct scores than that. EER is interpolated linearly between the
/// bracketing points, starting from the implicit `(fmr 0, fnmr 1)` state
/// below every score.
pub fn compute_roc(scores: &ScoreSet, resolution: Option<usize>) -> Result<RocCurve> {
    let (genuine, impostor) = split_sorted(scores)?;
    let pooled = unique_sorted(genuine.iter().chain(&impostor).copied().collect());
    let thresholds = match resolution {
        Some(res) if res >= 2 && pooled.len() > res => unique_sorted(
            (0..res)
                .map(|i| pooled[i * (pooled.len() - 1) / (res - 1)])
                .collect(),
        ),
        _ => pooled,
    };
    let (ng, ni) = (genuine.len() as f64, impostor.len() as f64);
    let points: Vec<RocPoint> = thresholds
        .iter()
        .map(|&t| RocPoint {
            threshold: t,
            fmr: count_le(&impostor, t) as f64 / ni,
            fnmr: (genuine.len() - count_le(&genuine, t)) as f64 / ng,
        })
        .collect();
    let (eer, eer_threshold) = equal_error(&points);
    Ok(RocCurve {
        points,
        eer,
        eer_threshold,
    })
}

fn equal_error(points: &[RocPoint]) -> (f64, f64) {
    let mut prev = RocPoint {
        threshold: points[0].threshold,
        fmr: 0.0,
        fnmr: 1.0,
    };
    for p in points {
        let d_prev = prev.fmr - prev.fnmr;
        let d = p.fmr - p.fnmr;
        if d == 0.0 {
            return (p.fmr, p.threshold);
        }
        if d > 0.0 {
            let a = -d_prev / (d - d_prev);
            let eer = prev.fmr + a * (p.fmr - prev.fmr);
            let t = prev.threshold + a * (p.threshold - prev.threshold);
            return (eer, t);
        }
        prev = *p;
    }
    // FNMR reaches 0 at the largest score, so the loop always returns
    unreachable!("ROC sweep ends with fnmr = 0 <= fmr")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::scores::{ScoreRecord, ScoreSource};

    fn set(genuine: &[f64], impostor: &[f64]) -> ScoreSet {
        let mut records = Vec::new();
        for (i, &s) in genuine.iter().enumerate() {
            records.push(ScoreRecord {
                sample_a: format!("g{i}a"),
                sample_b: format!("g{i}b"),
                label: Label::Genuine,
                score: s,
                n: None,
            });
        }
        for (i, &s) in impostor.iter().enumerate() {
            records.push(ScoreRecord {
                sample_a: format!("i{i}a"),
                sample_b: format!("i{i}b"),
                label: Label::Impostor,
                score: s,
                n: None,
            });
        }
        ScoreSet::new(records, ScoreSource::Internal)
    }

    #[test]
    fn separated_scores_have_zero_eer() {
        let roc = compute_roc(&set(&[0.1, 0.2, 0.25], &[0.4, 0.45, 0.5]), None).unwrap();
        assert_eq!(roc.eer, 0.0);
        assert_eq!(roc.eer_threshold, 0.25);
    }

    #[test]
    fn worked_example_is_one_third() {
        let roc = compute_roc(&set(&[0.1, 0.2, 0.4], &[0.3, 0.45, 0.5]), None).unwrap();
        assert!((roc.eer - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(roc.points.len(), 6);
    }

    #[test]
    fn one_class_is_an_error() {
        assert!(matches!(compute_roc(&set(&[0.1], &[]), None), Err(Error::OneClass { .. })));
    }

    #[test]
    fn inverted_scores_have_eer_one() {
        let roc = compute_roc(&set(&[0.9], &[0.1]), None).unwrap();
        assert_eq!(roc.eer, 1.0);
    }

    #[test]
    fn resolution_limits_thresholds() {
        let g: Vec<f64> = (0..500).map(|i| i as f64 / 1000.0).collect();
        let im: Vec<f64> = (0..500).map(|i| 0.3 + i as f64 / 1000.0).collect();
        let roc = compute_roc(&set(&g, &im), Some(50)).unwrap();
        assert!(roc.points.len() <= 50);
        assert!(roc.points.windows(2).all(|w| w[0].threshold < w[1].threshold));
        assert_eq!(roc.points.last().unwrap().fnmr, 0.0);
    }

    #[test]
    fn identical_distributions_sit_at_chance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let g: Vec<f64> = (0..4000).map(|_| rng.gen()).collect();
        let im: Vec<f64> = (0..4000).map(|_| rng.gen()).collect();
        let roc = compute_roc(&set(&g, &im), None).unwrap();
        assert!((roc.eer - 0.5).abs() < 1.0 / (4000f64).sqrt(), "{}", roc.eer);
    }
}
