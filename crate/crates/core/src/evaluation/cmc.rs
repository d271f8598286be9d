use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::scores::ScoreSet;
use crate::error::{Error, Result};
use crate::manifest::{Eye, Manifest, SampleRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcCurve {
    /// `(k, identification rate)` for `k = 1..=max_rank`.
    pub ranks: Vec<(usize, f64)>,
    pub gallery_size: usize,
    pub probe_count: usize,
    /// Probes dropped because they or their gallery mate have no scores.
    pub excluded_probes: usize,
}

impl CmcCurve {
    pub fn rate_at(&self, k: usize) -> Option<f64> {
        self.ranks.iter().find(|(r, _)| *r == k).map(|&(_, v)| v)
    }
}

/// First-session gallery: per (subject, eye), the record with the smallest
/// session index (ties: earlier capture, then sample id).
pub fn first_session_gallery(manifest: &Manifest) -> Vec<&SampleRecord> {
    let mut best: HashMap<(&str, Eye), &SampleRecord> = HashMap::new();
    for r in &manifest.records {
        best.entry(r.identity())
            .and_modify(|cur| {
                let key = |x: &SampleRecord| (x.session_index, x.capture_hours, x.sample_id.clone());
                if key(r).partial_cmp(&key(cur)) == Some(std::cmp::Ordering::Less) {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    let mut gallery: Vec<&SampleRecord> = best.into_values().collect();
    gallery.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    gallery
}

/// Closed-set identification against the first-session gallery. Probes are
/// the non-gallery records accepted by `probe_filter`. A probe's rank is one
/// plus the number of non-mate gallery entries scoring at or below its mate
/// (ties counted against the probe); missing scores count as +∞.
pub fn compute_cmc(
    manifest: &Manifest,
    scores: &ScoreSet,
    probe_filter: impl Fn(&SampleRecord) -> bool,
    max_rank: usize,
) -> Result<CmcCurve> {
    if max_rank == 0 {
        return Err(Error::InvalidArgument("max_rank must be positive".into()));
    }
    let gallery = first_session_gallery(manifest);
    let lookup = scores.lookup();
    let scored = scores.sample_ids();
    let gallery_ids: std::collections::HashSet<&str> = gallery.iter().map(|g| g.sample_id.as_str()).collect();
    let score = |a: &str, b: &str| lookup.get(&(a, b)).copied().unwrap_or(f64::INFINITY);

    let mut ranks = Vec::new();
    let mut excluded = 0usize;
    for probe in manifest.records.iter().filter(|r| !gallery_ids.contains(r.sample_id.as_str())) {
        if !probe_filter(probe) {
            continue;
        }
        let mate = gallery.iter().find(|g| g.identity() == probe.identity());
        let Some(mate) = mate.filter(|m| scored.contains(m.sample_id.as_str()) && scored.contains(probe.sample_id.as_str()))
        else {
            excluded += 1;
            continue;
        };
        let mate_score = score(&probe.sample_id, &mate.sample_id);
        let ahead = gallery
            .iter()
            .filter(|g| g.sample_id != mate.sample_id)
            .filter(|g| score(&probe.sample_id, &g.sample_id) <= mate_score)
            .count();
        ranks.push(ahead + 1);
    }
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("no scorable probes for CMC".into()));
    }
    let total = ranks.len() as f64;
    let curve = (1..=max_rank)
        .map(|k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / total))
        .collect();
    Ok(CmcCurve {
        ranks: curve,
        gallery_size: gallery.len(),
        probe_count: ranks.len(),
        excluded_probes: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::scores::{Label, ScoreRecord, ScoreSource};
    use crate::manifest::SampleRecord;

    fn rec(id: &str, subject: &str, session: u32) -> SampleRecord {
        SampleRecord {
            sample_id: id.into(),
            subject_id: subject.into(),
            eye: Eye::Left,
            capture_hours: session as f64 * 10.0,
            session_index: session,
            image_path: "x.png".into(),
            coarse_mask_path: None,
            fine_mask_path: None,
        }
    }

    fn scores(m: &Manifest, f: impl Fn(&SampleRecord, &SampleRecord) -> f64) -> ScoreSet {
        let mut out = Vec::new();
        for (i, a) in m.records.iter().enumerate() {
            for b in &m.records[i + 1..] {
                out.push(ScoreRecord {
                    sample_a: a.sample_id.clone(),
                    sample_b: b.sample_id.clone(),
                    label: Label::of(a, b),
                    score: f(a, b),
                    n: None,
                });
            }
        }
        ScoreSet::new(out, ScoreSource::Internal)
    }

    fn manifest() -> Manifest {
        Manifest::new(
            vec![
                rec("a1", "a", 1),
                rec("a2", "a", 2),
                rec("b1", "b", 1),
                rec("b2", "b", 2),
                rec("c1", "c", 1),
                rec("c2", "c", 2),
            ],
            "",
        )
        .unwrap()
    }

    #[test]
    fn gallery_is_first_session() {
        let m = manifest();
        let ids: Vec<&str> = first_session_gallery(&m).iter().map(|r| r.sample_id.as_str()).collect();
        assert_eq!(ids, vec!["a1", "b1", "c1"]);
    }

    #[test]
    fn mates_lowest_give_rank_one() {
        let m = manifest();
        let s = scores(&m, |a, b| if a.subject_id == b.subject_id { 0.1 } else { 0.5 });
        let c = compute_cmc(&m, &s, |_| true, 3).unwrap();
        assert_eq!(c.rate_at(1), Some(1.0));
        assert_eq!(c.probe_count, 3);
        assert_eq!(c.gallery_size, 3);
    }

    #[test]
    fn ties_are_pessimistic() {
        let m = manifest();
        let s = scores(&m, |_, _| 0.4);
        let c = compute_cmc(&m, &s, |_| true, 3).unwrap();
        assert_eq!(c.rate_at(1), Some(0.0));
        assert_eq!(c.rate_at(2), Some(0.0));
        assert_eq!(c.rate_at(3), Some(1.0));
    }

    #[test]
    fn probe_filter_and_exclusions() {
        let m = manifest();
        let s = scores(&m, |a, b| if a.subject_id == b.subject_id { 0.1 } else { 0.5 });
        let c = compute_cmc(&m, &s, |r| r.subject_id != "c", 3).unwrap();
        assert_eq!(c.probe_count, 2);
        // drop everything involving b1: probe b2 loses its enrolled mate
        let ids: std::collections::HashSet<&str> = ["a1", "a2", "b2", "c1", "c2"].into_iter().collect();
        let c = compute_cmc(&m, &s.restrict(&ids), |_| true, 3).unwrap();
        assert_eq!(c.excluded_probes, 1);
        assert_eq!(c.probe_count, 2);
    }
}
