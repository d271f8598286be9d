use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::cmc::{compute_cmc, first_session_gallery, CmcCurve};
use super::fnmr::{fnmr_at_fmr, fnmr_dynamics_with, DynamicsPoint, OperatingPoint};
use super::pairs::{gen_pairs, subset_by_horizon, Horizon, HorizonDirection};
use super::roc::{compute_roc, RocCurve};
use super::scores::{Label, ScoreSet, ScoreSource};
use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::matching::NormContext;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    /// Upper capture-time bounds of the cumulative ROC subsets.
    pub roc_horizons: Vec<f64>,
    /// Lower capture-time bounds of the identification probe subsets.
    pub cmc_probe_horizons: Vec<f64>,
    pub fnmr_horizons: Vec<f64>,
    pub fmr_max: f64,
    pub max_rank: usize,
    pub roc_resolution: Option<usize>,
    pub n_policy: NPolicy,
}

/// How the typical bit count N is chosen for score normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NPolicy {
    /// Mean impostor bit count of the subset being evaluated.
    MeanImpostorPerSubset,
    Fixed { n: f64 },
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let roc = vec![10.0, 24.0, 48.0, 60.0, 110.0, 160.0, 210.0, 369.0];
        EvaluationConfig {
            fnmr_horizons: roc.clone(),
            roc_horizons: roc,
            cmc_probe_horizons: vec![24.0, 48.0, 60.0, 110.0, 160.0, 210.0],
            fmr_max: 0.01,
            max_rank: 10,
            roc_resolution: None,
            n_policy: NPolicy::MeanImpostorPerSubset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Raw,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub subset: Horizon,
    pub samples: usize,
    /// All unordered pairs of the subset's samples.
    pub pairs: usize,
    pub genuine: usize,
    pub impostor: usize,
    pub no_overlap: usize,
    /// Pairs with no score at all (a sample was skipped upstream).
    pub unscored: usize,
    pub eer: Option<f64>,
    pub eer_threshold: Option<f64>,
    pub fnmr_at_fmr: Option<OperatingPoint>,
    pub n_typical: Option<f64>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcSummary {
    pub probe_subset: Horizon,
    pub gallery_size: usize,
    pub probe_count: usize,
    pub excluded_probes: usize,
    /// Gallery × probe comparisons.
    pub comparisons: usize,
    pub rank1: Option<f64>,
    pub rank10: Option<f64>,
    pub n_typical: Option<f64>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherReport {
    pub name: String,
    pub source: ScoreSource,
    pub score_mode: ScoreMode,
    pub roc: Vec<RocSummary>,
    pub cmc: Vec<CmcSummary>,
    pub fnmr_dynamics: Vec<DynamicsPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSample {
    pub sample_id: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_fingerprint: String,
    pub matchers: Vec<MatcherReport>,
    pub skipped: Vec<SkippedSample>,
}

/// Full curves backing a [`MatcherReport`], for CSV/SVG export.
#[derive(Debug, Clone, Default)]
pub struct CurveSet {
    pub roc: Vec<(Horizon, RocCurve)>,
    pub cmc: Vec<(Horizon, CmcCurve)>,
}

/// A score source entering the report.
pub struct MatcherInput<'a> {
    pub name: String,
    pub scores: &'a ScoreSet,
    pub mode: ScoreMode,
}

fn rescore(set: &ScoreSet, mode: ScoreMode, policy: NPolicy) -> Result<(ScoreSet, Option<f64>)> {
    match (mode, set.source) {
        (ScoreMode::Normalized, ScoreSource::Internal) => {
            let ctx = match policy {
                NPolicy::MeanImpostorPerSubset => set.estimate_norm()?,
                NPolicy::Fixed { n } if n > 0.0 => NormContext { n_typical: n },
                NPolicy::Fixed { n } => return Err(Error::Config(format!("fixed N must be positive, got {n}"))),
            };
            Ok((set.normalized_with(&ctx)?, Some(ctx.n_typical)))
        }
        _ => Ok((set.clone(), None)),
    }
}

fn flag_of(e: &Error) -> String {
    e.to_string()
}

fn roc_summary(
    manifest: &Manifest,
    scores: &ScoreSet,
    mode: ScoreMode,
    cfg: &EvaluationConfig,
    horizon: Horizon,
    curves: &mut CurveSet,
) -> Result<RocSummary> {
    let subset = subset_by_horizon(manifest, horizon.bound_hours, horizon.direction)?;
    let pairs = gen_pairs(&subset, |_| true).map(|p| p.len()).unwrap_or(0);
    let restricted = scores.restrict_to_manifest(&subset);
    let (genuine, impostor) = (restricted.count(Label::Genuine), restricted.count(Label::Impostor));
    let no_overlap = restricted.no_overlap.len();
    let mut summary = RocSummary {
        subset: horizon,
        samples: subset.len(),
        pairs,
        genuine,
        impostor,
        no_overlap,
        unscored: pairs - (genuine + impostor + no_overlap).min(pairs),
        eer: None,
        eer_threshold: None,
        fnmr_at_fmr: None,
        n_typical: None,
        flag: None,
    };
    if genuine == 0 || impostor == 0 {
        summary.flag = Some(format!("one-class subset ({genuine} genuine, {impostor} impostor)"));
        return Ok(summary);
    }
    let (scored, n_typical) = rescore(&restricted, mode, cfg.n_policy)?;
    summary.n_typical = n_typical;
    let roc = compute_roc(&scored, cfg.roc_resolution)?;
    summary.eer = Some(roc.eer);
    summary.eer_threshold = Some(roc.eer_threshold);
    summary.fnmr_at_fmr = Some(fnmr_at_fmr(&scored, cfg.fmr_max)?);
    curves.roc.push((horizon, roc));
    Ok(summary)
}

fn cmc_summary(
    manifest: &Manifest,
    scores: &ScoreSet,
    mode: ScoreMode,
    cfg: &EvaluationConfig,
    horizon: Horizon,
    curves: &mut CurveSet,
) -> Result<CmcSummary> {
    let gallery: HashSet<&str> = first_session_gallery(manifest)
        .iter()
        .map(|r| r.sample_id.as_str())
        .collect();
    let probes: Vec<&str> = manifest
        .records
        .iter()
        .filter(|r| !gallery.contains(r.sample_id.as_str()) && horizon.contains(r))
        .map(|r| r.sample_id.as_str())
        .collect();
    let mut summary = CmcSummary {
        probe_subset: horizon,
        gallery_size: gallery.len(),
        probe_count: 0,
        excluded_probes: 0,
        comparisons: gallery.len() * probes.len(),
        rank1: None,
        rank10: None,
        n_typical: None,
        flag: None,
    };
    let ids: HashSet<&str> = gallery.iter().copied().chain(probes.iter().copied()).collect();
    let restricted = scores.restrict(&ids);
    let scored = match rescore(&restricted, mode, cfg.n_policy) {
        Ok((s, n)) => {
            summary.n_typical = n;
            s
        }
        Err(e) => {
            summary.flag = Some(flag_of(&e));
            return Ok(summary);
        }
    };
    match compute_cmc(manifest, &scored, |r| horizon.contains(r), cfg.max_rank) {
        Ok(curve) => {
            summary.probe_count = curve.probe_count;
            summary.excluded_probes = curve.excluded_probes;
            summary.rank1 = curve.rate_at(1);
            summary.rank10 = curve.rate_at(10.min(cfg.max_rank));
            curves.cmc.push((horizon, curve));
        }
        Err(e) => summary.flag = Some(flag_of(&e)),
    }
    Ok(summary)
}

/// Runs the ROC, CMC and FNMR-dynamics protocol for every matcher.
pub fn evaluate(
    manifest: &Manifest,
    matchers: &[MatcherInput<'_>],
    cfg: &EvaluationConfig,
    config_fingerprint: u64,
    skipped: Vec<SkippedSample>,
) -> Result<(EvalReport, Vec<CurveSet>)> {
    let mut reports = Vec::new();
    let mut all_curves = Vec::new();
    for m in matchers {
        let mut curves = CurveSet::default();
        let roc = cfg
            .roc_horizons
            .iter()
            .map(|&h| roc_summary(manifest, m.scores, m.mode, cfg, Horizon::at_most(h), &mut curves))
            .collect::<Result<Vec<_>>>()?;
        let cmc = cfg
            .cmc_probe_horizons
            .iter()
            .map(|&h| cmc_summary(manifest, m.scores, m.mode, cfg, Horizon::at_least(h), &mut curves))
            .collect::<Result<Vec<_>>>()?;
        let fnmr_dynamics = fnmr_dynamics_with(manifest, m.scores, &cfg.fnmr_horizons, cfg.fmr_max, |s| {
            rescore(s, m.mode, cfg.n_policy).map(|(s, _)| s)
        })?;
        reports.push(MatcherReport {
            name: m.name.clone(),
            source: m.scores.source,
            score_mode: m.mode,
            roc,
            cmc,
            fnmr_dynamics,
        });
        all_curves.push(curves);
    }
    Ok((
        EvalReport {
            config_fingerprint: format!("{config_fingerprint:016x}"),
            matchers: reports,
            skipped,
        },
        all_curves,
    ))
}

/// `threshold,fmr,fnmr` rows.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,fmr,fnmr\n");
    for p in &curve.points {
        s.push_str(&format!("{},{},{}\n", p.threshold, p.fmr, p.fnmr));
    }
    s
}

/// `rank,identification_rate` rows.
pub fn cmc_csv(curve: &CmcCurve) -> String {
    let mut s = String::from("rank,identification_rate\n");
    for (k, r) in &curve.ranks {
        s.push_str(&format!("{k},{r}\n"));
    }
    s
}

/// `horizon_hours,genuine,impostor,threshold,fnmr,flag` rows.
pub fn fnmr_csv(series: &[DynamicsPoint]) -> String {
    let mut s = String::from("horizon_hours,genuine,impostor,threshold,fnmr,flag\n");
    for p in series {
        let (t, f) = p
            .point
            .map(|op| (op.threshold.to_string(), op.fnmr.to_string()))
            .unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{t},{f},{}\n",
            p.horizon_hours,
            p.genuine,
            p.impostor,
            p.flag.as_deref().unwrap_or("")
        ));
    }
    s
}

impl HorizonDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            HorizonDirection::AtMost => "at_most",
            HorizonDirection::AtLeast => "at_least",
        }
    }
}
