use std::collections::BTreeMap;
use std::path::Path;

use iris_core::config::PipelineConfig;
use iris_core::evaluation::{Label, ScoreSet};
use iris_core::pipeline::Pipeline;
use iris_core::synth::{gen_dataset, DecaySchedule, SynthConfig};

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        n_identities: 3,
        sessions: 2,
        base_seed: seed,
        ..SynthConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    gen_dataset(a.path(), &small(42)).unwrap();
    gen_dataset(b.path(), &small(42)).unwrap();
    gen_dataset(c.path(), &small(43)).unwrap();
    let (ta, tb, tc) = (tree(a.path()), tree(b.path()), tree(c.path()));
    assert_eq!(ta.len(), 3 + 6 * 3);
    assert_eq!(ta, tb);
    assert_ne!(ta.get("images/id000_s1.png"), tc.get("images/id000_s1.png"));
}

#[test]
fn decay_free_scores_separate_at_fixed_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_dataset(dir.path(), &small(8)).unwrap();
    let p = Pipeline::new(PipelineConfig::default()).unwrap();
    let batch = p.encode_all(&ds.manifest);
    assert!(batch.skipped.is_empty());
    let scores = ScoreSet::from_matches(&p.match_all(&ds.manifest, &batch.items).unwrap());
    let g = scores.scores(Label::Genuine);
    let i = scores.scores(Label::Impostor);
    assert_eq!((g.len(), i.len()), (3, 12));
    assert!(g.iter().all(|&s| s < 0.25), "{g:?}");
    assert!(i.iter().all(|&s| s > 0.35), "{i:?}");
}

#[test]
fn mean_genuine_distance_grows_with_decay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_identities: 4,
        sessions: 4,
        decay_schedule: DecaySchedule::new(vec![(0.0, 0.0), (24.0, 0.2), (48.0, 0.35), (96.0, 0.5)]).unwrap(),
        base_seed: 12,
        ..SynthConfig::default()
    };
    let ds = gen_dataset(dir.path(), &cfg).unwrap();
    let p = Pipeline::new(PipelineConfig::default()).unwrap();
    let batch = p.encode_all(&ds.manifest);
    assert!(batch.skipped.is_empty());
    let matches = p.match_all(&ds.manifest, &batch.items).unwrap();
    // genuine distance of each later session against session 1
    let mut by_session = [0.0f64; 4];
    for m in matches.iter().filter(|m| m.label == Label::Genuine && m.sample_a.ends_with("_s1")) {
        let s: usize = m.sample_b.rsplit("_s").next().unwrap().parse().unwrap();
        by_session[s - 1] += m.result.hd_raw.unwrap() / cfg.n_identities as f64;
    }
    assert!(by_session[1..].windows(2).all(|w| w[0] <= w[1]), "{by_session:?}");
}
