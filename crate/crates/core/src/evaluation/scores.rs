use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Manifest, SampleRecord};
use crate::matching::{normalize_score, MatchResult, NormContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Genuine,
    Impostor,
}

impl Label {
    pub fn of(a: &SampleRecord, b: &SampleRecord) -> Label {
        if a.identity() == b.identity() {
            Label::Genuine
        } else {
            Label::Impostor
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Genuine => "genuine",
            Label::Impostor => "impostor",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "genuine" => Ok(Label::Genuine),
            "impostor" => Ok(Label::Impostor),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreDirection {
    /// Lower scores mean more similar.
    Dissimilarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSource {
    Internal,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_a: String,
    pub sample_b: String,
    pub label: Label,
    pub score: f64,
    /// Commonly unmasked bits, for internal Hamming scores.
    pub n: Option<u32>,
}

/// Labelled comparison scores, one per unordered pair. Pairs without any
/// commonly unmasked bits are kept out of `records` and listed in
/// `no_overlap`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub records: Vec<ScoreRecord>,
    pub no_overlap: Vec<(String, String, Label)>,
    pub direction: ScoreDirection,
    pub source: ScoreSource,
}

impl ScoreSet {
    pub fn new(records: Vec<ScoreRecord>, source: ScoreSource) -> Self {
        ScoreSet {
            records,
            no_overlap: Vec::new(),
            direction: ScoreDirection::Dissimilarity,
            source,
        }
    }

    pub fn from_matches(matches: &[MatchRecord]) -> Self {
        let mut set = ScoreSet::new(Vec::new(), ScoreSource::Internal);
        for m in matches {
            match m.result.hd_raw {
                Some(hd) => set.records.push(ScoreRecord {
                    sample_a: m.sample_a.clone(),
                    sample_b: m.sample_b.clone(),
                    label: m.label,
                    score: hd,
                    n: Some(m.result.n),
                }),
                None => set.no_overlap.push((m.sample_a.clone(), m.sample_b.clone(), m.label)),
            }
        }
        set
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    pub fn scores(&self, label: Label) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.label == label)
            .map(|r| r.score)
            .collect()
    }

    /// Keeps pairs whose two samples are both in `ids`.
    pub fn restrict(&self, ids: &HashSet<&str>) -> ScoreSet {
        let keep = |a: &str, b: &str| ids.contains(a) && ids.contains(b);
        ScoreSet {
            records: self
                .records
                .iter()
                .filter(|r| keep(&r.sample_a, &r.sample_b))
                .cloned()
                .collect(),
            no_overlap: self
                .no_overlap
                .iter()
                .filter(|(a, b, _)| keep(a, b))
                .cloned()
                .collect(),
            direction: self.direction,
            source: self.source,
        }
    }

    pub fn restrict_to_manifest(&self, manifest: &Manifest) -> ScoreSet {
        let ids: HashSet<&str> = manifest.records.iter().map(|r| r.sample_id.as_str()).collect();
        self.restrict(&ids)
    }

    /// Mean impostor bit count of this set.
    pub fn estimate_norm(&self) -> Result<NormContext> {
        let ns: Vec<u32> = self
            .records
            .iter()
            .filter(|r| r.label == Label::Impostor)
            .map(|r| r.n.ok_or_else(|| Error::InvalidArgument("score set carries no bit counts".into())))
            .collect::<Result<_>>()?;
        if ns.is_empty() {
            return Err(Error::EmptyImpostorSet);
        }
        Ok(NormContext {
            n_typical: ns.iter().map(|&n| n as f64).sum::<f64>() / ns.len() as f64,
        })
    }

    /// Scores replaced by their normalized values under `ctx`.
    pub fn normalized_with(&self, ctx: &NormContext) -> Result<ScoreSet> {
        let mut out = self.clone();
        for r in &mut out.records {
            let n = r
                .n
                .ok_or_else(|| Error::InvalidArgument("score set carries no bit counts".into()))?;
            r.score = normalize_score(r.score, n, ctx)?;
        }
        Ok(out)
    }

    /// Normalizes with N estimated from this set's own impostors.
    pub fn normalized(&self) -> Result<(ScoreSet, NormContext)> {
        let ctx = self.estimate_norm()?;
        Ok((self.normalized_with(&ctx)?, ctx))
    }

    pub fn lookup(&self) -> HashMap<(&str, &str), f64> {
        let mut map = HashMap::with_capacity(self.records.len() * 2);
        for r in &self.records {
            map.insert((r.sample_a.as_str(), r.sample_b.as_str()), r.score);
            map.insert((r.sample_b.as_str(), r.sample_a.as_str()), r.score);
        }
        map
    }

    pub fn sample_ids(&self) -> HashSet<&str> {
        self.records
            .iter()
            .flat_map(|r| [r.sample_a.as_str(), r.sample_b.as_str()])
            .chain(self.no_overlap.iter().flat_map(|(a, b, _)| [a.as_str(), b.as_str()]))
            .collect()
    }
}

/// One internal comparison as written to the score CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub sample_a: String,
    pub sample_b: String,
    pub label: Label,
    pub result: MatchResult,
}

pub const SCORE_CSV_HEADER: [&str; 7] = ["sample_a", "sample_b", "label", "hd_raw", "best_shift", "n", "hd_norm"];

fn csv_err(e: csv::Error) -> Error {
    Error::ScoreParse {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    }
}

/// Score CSV text. `hd_norm` is filled from `norm` when given; no-overlap
/// pairs have empty `hd_raw`/`best_shift` and `n = 0`.
pub fn score_csv(matches: &[MatchRecord], norm: Option<&NormContext>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCORE_CSV_HEADER).map_err(csv_err)?;
    for m in matches {
        let r = &m.result;
        let hd_norm = match (norm, r.hd_raw) {
            (Some(ctx), Some(hd)) => normalize_score(hd, r.n, ctx)?.to_string(),
            _ => String::new(),
        };
        w.write_record([
            m.sample_a.clone(),
            m.sample_b.clone(),
            m.label.to_string(),
            r.hd_raw.map(|v| v.to_string()).unwrap_or_default(),
            if r.hd_raw.is_some() { r.best_shift.to_string() } else { String::new() },
            r.n.to_string(),
            hd_norm,
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

pub fn write_score_csv(path: &Path, matches: &[MatchRecord], norm: Option<&NormContext>) -> Result<()> {
    std::fs::write(path, score_csv(matches, norm)?).map_err(|e| Error::io(path, e))
}

pub fn parse_score_csv(text: &str) -> Result<Vec<MatchRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if headers != SCORE_CSV_HEADER {
        return Err(Error::ScoreParse {
            line: 1,
            message: format!("expected header `{}`", SCORE_CSV_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::ScoreParse { line, message };
        let field = |i: usize| row.get(i).unwrap_or("");
        let label = field(2).parse::<Label>().map_err(bad)?;
        let opt_f64 = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| bad(format!("{e}: `{s}`")))
            }
        };
        let hd_raw = opt_f64(field(3))?;
        let best_shift = if field(4).is_empty() {
            0
        } else {
            field(4).parse().map_err(|e| bad(format!("{e}")))?
        };
        let n = field(5).parse().map_err(|e| bad(format!("{e}")))?;
        let hd_norm = opt_f64(field(6))?;
        out.push(MatchRecord {
            sample_a: field(0).to_string(),
            sample_b: field(1).to_string(),
            label,
            result: MatchResult {
                hd_raw,
                best_shift,
                n,
                hd_norm,
            },
        });
    }
    Ok(out)
}

pub fn read_score_csv(path: &Path) -> Result<Vec<MatchRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_score_csv(&text)
}

#[derive(Debug, Deserialize)]
struct ExternalRow {
    sample_a: String,
    sample_b: String,
    score: f64,
}

/// Parses an external matcher's `sample_a,sample_b,score` CSV, labelling
/// rows from the manifest. Scores are taken as-is.
pub fn parse_external_scores(text: &str, manifest: &Manifest) -> Result<ScoreSet> {
    let index = manifest.index();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if headers != ["sample_a", "sample_b", "score"] {
        return Err(Error::ScoreParse {
            line: 1,
            message: "expected header `sample_a,sample_b,score`".into(),
        });
    }
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.deserialize::<ExternalRow>().enumerate() {
        let row = row.map_err(csv_err)?;
        let a = index.get(row.sample_a.as_str()).ok_or_else(|| Error::UnknownSample(row.sample_a.clone()))?;
        let b = index.get(row.sample_b.as_str()).ok_or_else(|| Error::UnknownSample(row.sample_b.clone()))?;
        if !row.score.is_finite() {
            return Err(Error::ScoreParse {
                line: i as u64 + 2,
                message: format!("non-finite score for {}/{}", row.sample_a, row.sample_b),
            });
        }
        let key = if row.sample_a <= row.sample_b {
            (row.sample_a.clone(), row.sample_b.clone())
        } else {
            (row.sample_b.clone(), row.sample_a.clone())
        };
        if !seen.insert(key) {
            continue; // one comparison per unordered pair
        }
        records.push(ScoreRecord {
            label: Label::of(a, b),
            sample_a: row.sample_a,
            sample_b: row.sample_b,
            score: row.score,
            n: None,
        });
    }
    Ok(ScoreSet::new(records, ScoreSource::External))
}

pub fn import_external_scores(path: &Path, manifest: &Manifest) -> Result<ScoreSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_external_scores(&text, manifest)
}
