//! Sample-level and batch orchestration: segment, fit, normalize, encode,
//! match all pairs and evaluate.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::boundary::{fit_circles_with_diagnostics, mask_edges, BoundaryCircles, FitDiagnostics};
use crate::config::PipelineConfig;
use crate::encoding::{build_filter_bank, encode, FilterBank, IrisCode};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, CurveSet, EvalReport, Label, MatchRecord, MatcherInput, ScoreMode, ScoreSet, SkippedSample};
use crate::manifest::{load_image, BinaryMask, IrisImage, Manifest, SampleRecord};
use crate::matching::match_codes;
use crate::normalization::normalize;
use crate::segmentation::MaskPair;

#[derive(Debug, Clone)]
pub struct ProcessedSample {
    pub sample_id: String,
    pub masks: MaskPair,
    pub circles: BoundaryCircles,
    pub diagnostics: FitDiagnostics,
    pub mask_fraction: f64,
    pub code: IrisCode,
}

/// Result of a batch stage: successes in manifest order plus skipped samples.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub items: Vec<T>,
    pub skipped: Vec<SkippedSample>,
}

pub fn skipped(sample_id: &str, e: &Error) -> SkippedSample {
    SkippedSample {
        sample_id: sample_id.to_string(),
        kind: e.kind().to_string(),
        message: e.to_string(),
    }
}

/// Runs `f` on a pool with `workers` threads (0 = rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub bank: FilterBank,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let bank = build_filter_bank(&config.filter_bank, config.polar)?;
        Ok(Pipeline { config, bank })
    }

    pub fn segment(&self, manifest: &Manifest, record: &SampleRecord) -> Result<(MaskPair, BoundaryCircles, FitDiagnostics)> {
        let image = load_image(&manifest.resolve(&record.image_path))?;
        let masks = self.config.segmenter.segment(&image, record, &manifest.base_dir)?;
        let edges = mask_edges(&masks.coarse);
        let (circles, diag) = fit_circles_with_diagnostics(&edges, &self.config.hough)?;
        Ok((masks, circles, diag))
    }

    /// Normalizes and encodes with masks and circles already in hand.
    pub fn encode_with(&self, image: &IrisImage, fine: &BinaryMask, circles: &BoundaryCircles, sample_id: &str) -> Result<(IrisCode, f64)> {
        let norm = normalize(image, fine, circles, self.config.polar)?;
        Ok((encode(&norm, &self.bank, sample_id)?, norm.mask_fraction()))
    }

    pub fn process_sample(&self, manifest: &Manifest, record: &SampleRecord) -> Result<ProcessedSample> {
        let image = load_image(&manifest.resolve(&record.image_path))?;
        let masks = self.config.segmenter.segment(&image, record, &manifest.base_dir)?;
        let edges = mask_edges(&masks.coarse);
        let (circles, diagnostics) = fit_circles_with_diagnostics(&edges, &self.config.hough)?;
        let (code, mask_fraction) = self.encode_with(&image, &masks.fine, &circles, &record.sample_id)?;
        Ok(ProcessedSample {
            sample_id: record.sample_id.clone(),
            masks,
            circles,
            diagnostics,
            mask_fraction,
            code,
        })
    }

    /// Encodes every sample; failures are recorded and skipped.
    pub fn encode_all(&self, manifest: &Manifest) -> Batch<IrisCode> {
        let results: Vec<(String, Result<IrisCode>)> = manifest
            .records
            .par_iter()
            .map(|r| (r.sample_id.clone(), self.process_sample(manifest, r).map(|p| p.code)))
            .collect();
        let mut batch = Batch {
            items: Vec::new(),
            skipped: Vec::new(),
        };
        for (id, r) in results {
            match r {
                Ok(c) => batch.items.push(c),
                Err(e) => batch.skipped.push(skipped(&id, &e)),
            }
        }
        batch
    }

    pub fn match_all(&self, manifest: &Manifest, codes: &[IrisCode]) -> Result<Vec<MatchRecord>> {
        match_all(manifest, codes, self.config.max_shift)
    }

    /// Encode, match and evaluate in one pass.
    pub fn run(&self, manifest: &Manifest) -> Result<RunOutput> {
        let batch = self.encode_all(manifest);
        let matches = self.match_all(manifest, &batch.items)?;
        let scores = ScoreSet::from_matches(&matches);
        let (report, curves) = self.evaluate(manifest, &scores, None, batch.skipped.clone())?;
        Ok(RunOutput {
            codes: batch.items,
            skipped: batch.skipped,
            matches,
            report,
            curves,
        })
    }

    /// Report over the internal scores and an optional external score set.
    pub fn evaluate(
        &self,
        manifest: &Manifest,
        internal: &ScoreSet,
        external: Option<&ScoreSet>,
        skipped: Vec<SkippedSample>,
    ) -> Result<(EvalReport, Vec<CurveSet>)> {
        let mode = if self.config.score_norm {
            ScoreMode::Normalized
        } else {
            ScoreMode::Raw
        };
        let mut inputs = vec![MatcherInput {
            name: "internal".into(),
            scores: internal,
            mode,
        }];
        if let Some(ext) = external {
            inputs.push(MatcherInput {
                name: "external".into(),
                scores: ext,
                mode: ScoreMode::Raw,
            });
        }
        evaluate(manifest, &inputs, &self.config.evaluation, self.config.fingerprint(), skipped)
    }
}

pub struct RunOutput {
    pub codes: Vec<IrisCode>,
    pub skipped: Vec<SkippedSample>,
    pub matches: Vec<MatchRecord>,
    pub report: EvalReport,
    pub curves: Vec<CurveSet>,
}

/// All unordered pairs of `codes`, ordered by manifest position (`i < j`).
pub fn match_all(manifest: &Manifest, codes: &[IrisCode], max_shift: u32) -> Result<Vec<MatchRecord>> {
    let index = manifest.index();
    let pos: HashMap<&str, usize> = manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.sample_id.as_str(), i))
        .collect();
    let mut ordered: Vec<(&IrisCode, &SampleRecord)> = codes
        .iter()
        .map(|c| {
            index
                .get(c.sample_id.as_str())
                .map(|r| (c, *r))
                .ok_or_else(|| Error::UnknownSample(c.sample_id.clone()))
        })
        .collect::<Result<_>>()?;
    ordered.sort_by_key(|(c, _)| pos[c.sample_id.as_str()]);
    let rows: Vec<Vec<MatchRecord>> = (0..ordered.len())
        .into_par_iter()
        .map(|i| {
            let (a, ra) = ordered[i];
            ordered[i + 1..]
                .iter()
                .map(|&(b, rb)| {
                    Ok(MatchRecord {
                        sample_a: ra.sample_id.clone(),
                        sample_b: rb.sample_id.clone(),
                        label: Label::of(ra, rb),
                        result: match_codes(a, b, max_shift)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}
