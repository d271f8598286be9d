use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use iris_core::boundary::{BoundaryCircles, Circle, FitDiagnostics};
use iris_core::config::PipelineConfig;
use iris_core::encoding::IrisCode;
use iris_core::evaluation::svg::{Plot, Series};
use iris_core::evaluation::{
    cmc_csv, fnmr_csv, import_external_scores, read_score_csv, roc_csv, write_score_csv, CurveSet, EvalReport,
    MatchRecord, ScoreSet, SkippedSample,
};
use iris_core::manifest::{load_image, load_mask, load_manifest, write_mask, Manifest, MaskSemantics};
use iris_core::matching::{match_codes, NormContext};
use iris_core::pipeline::{match_all, skipped, with_workers, Pipeline};
use iris_core::synth::{gen_dataset, SynthConfig};

#[derive(Parser)]
#[command(name = "iris", version, about = "Iris recognition pipeline and post-mortem evaluation harness")]
struct Cli {
    /// Pipeline configuration (JSON); defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for batch stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Overrides the config's score-normalization switch.
    #[arg(long, global = true, value_enum)]
    score_norm: Option<Switch>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Generator configuration (JSON).
        #[arg(long)]
        synth_config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        identities: Option<u32>,
        #[arg(long)]
        sessions: Option<u32>,
    },
    /// Clean masks and fit boundary circles.
    Segment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Include accumulator diagnostics for every sample.
        #[arg(long)]
        debug_fit: bool,
    },
    /// Produce one iris-code file per sample.
    Encode {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Output directory of a previous `segment` run to reuse.
        #[arg(long)]
        segmentation: Option<PathBuf>,
    },
    /// Compare two code files, or all pairs of an `encode` run.
    Match {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, requires = "codes")]
        manifest: Option<PathBuf>,
        /// Output directory of an `encode` run.
        #[arg(long, conflicts_with = "pair")]
        codes: Option<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        pair: Option<Vec<PathBuf>>,
    },
    /// Build the evaluation report, end to end or from a `match` run.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Output directory of a `match` run; omitted means end to end.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// External matcher scores (`sample_a,sample_b,score`).
        #[arg(long)]
        external: Option<PathBuf>,
    },
    /// Validate and label an external score file.
    ImportScores {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

const SEGMENTATION_JSON: &str = "segmentation.json";
const ENCODING_JSON: &str = "encoding.json";
const SCORES_CSV: &str = "scores.csv";
const SCORES_META: &str = "scores.meta.json";

#[derive(Serialize, Deserialize)]
struct SegmentedSample {
    sample_id: String,
    pupil: Circle,
    limbic: Circle,
    pupil_votes: u32,
    limbic_votes: u32,
    fine_defaulted: bool,
    coarse_mask: PathBuf,
    fine_mask: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    diagnostics: Option<FitDiagnostics>,
}

#[derive(Serialize, Deserialize)]
struct SegmentationOutput {
    config_fingerprint: String,
    samples: Vec<SegmentedSample>,
    skipped: Vec<SkippedSample>,
}

#[derive(Serialize, Deserialize)]
struct EncodedSample {
    sample_id: String,
    code: PathBuf,
    mask_fraction: f64,
}

#[derive(Serialize, Deserialize)]
struct EncodingOutput {
    config_fingerprint: String,
    code_fingerprint: String,
    samples: Vec<EncodedSample>,
    skipped: Vec<SkippedSample>,
}

#[derive(Serialize, Deserialize)]
struct ScoresMeta {
    config_fingerprint: String,
    max_shift: u32,
    pairs: usize,
    n_typical: Option<f64>,
    skipped: Vec<SkippedSample>,
}

#[derive(Serialize)]
struct ImportSummary {
    source: String,
    records: usize,
    genuine: usize,
    impostor: usize,
}

fn hex(v: u64) -> String {
    format!("{v:016x}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn check_fingerprint(found: &str, expected: u64, what: &Path) -> anyhow::Result<()> {
    if found != hex(expected) {
        return Err(iris_core::Error::Config(format!(
            "{} was produced under config fingerprint {found}, current config is {}",
            what.display(),
            hex(expected)
        ))
        .into());
    }
    Ok(())
}

fn sort_skipped(manifest: &Manifest, list: &mut [SkippedSample]) {
    let pos: HashMap<&str, usize> = manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.sample_id.as_str(), i))
        .collect();
    list.sort_by_key(|s| pos.get(s.sample_id.as_str()).copied().unwrap_or(usize::MAX));
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.score_norm {
        config.score_norm = matches!(s, Switch::On);
    }
    Ok(config)
}

fn open_manifest(path: &Path) -> anyhow::Result<Manifest> {
    let manifest = load_manifest(path)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(manifest)
}

fn cmd_synth(
    out: &Path,
    synth_config: Option<&Path>,
    seed: Option<u64>,
    identities: Option<u32>,
    sessions: Option<u32>,
) -> anyhow::Result<()> {
    let mut cfg: SynthConfig = match synth_config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    if let Some(n) = identities {
        cfg.n_identities = n;
    }
    if let Some(n) = sessions {
        cfg.sessions = n;
    }
    let ds = gen_dataset(out, &cfg)?;
    println!("{} samples written to {}", ds.manifest.len(), ds.manifest_path.display());
    Ok(())
}

fn cmd_segment(pipeline: &Pipeline, manifest_path: &Path, out: &Path, debug_fit: bool) -> anyhow::Result<()> {
    let manifest = open_manifest(manifest_path)?;
    let results: Vec<_> = manifest
        .records
        .par_iter()
        .map(|r| (r, pipeline.segment(&manifest, r)))
        .collect();
    let mut samples = Vec::new();
    let mut skip = Vec::new();
    for (r, res) in results {
        match res {
            Ok((masks, circles, diag)) => {
                let coarse_mask = PathBuf::from(format!("masks/{}_coarse.png", r.sample_id));
                let fine_mask = PathBuf::from(format!("masks/{}_fine.png", r.sample_id));
                write_mask(&out.join(&coarse_mask), &masks.coarse)?;
                write_mask(&out.join(&fine_mask), &masks.fine)?;
                samples.push(SegmentedSample {
                    sample_id: r.sample_id.clone(),
                    pupil: circles.pupil,
                    limbic: circles.limbic,
                    pupil_votes: circles.pupil_votes,
                    limbic_votes: circles.limbic_votes,
                    fine_defaulted: masks.fine_defaulted,
                    coarse_mask,
                    fine_mask,
                    diagnostics: debug_fit.then_some(diag),
                });
            }
            Err(e) => {
                if debug_fit {
                    if let iris_core::Error::FitFailure { diagnostics, .. } = &e {
                        eprintln!(
                            "{}",
                            serde_json::json!({"sample_id": r.sample_id, "fit_diagnostics": diagnostics})
                        );
                    }
                }
                skip.push(skipped(&r.sample_id, &e));
            }
        }
    }
    let n = samples.len();
    write_json(
        &out.join(SEGMENTATION_JSON),
        &SegmentationOutput {
            config_fingerprint: hex(pipeline.config.fingerprint()),
            samples,
            skipped: skip,
        },
    )?;
    println!("segmented {n} of {} samples", manifest.len());
    Ok(())
}

fn cmd_encode(pipeline: &Pipeline, manifest_path: &Path, out: &Path, segmentation: Option<&Path>) -> anyhow::Result<()> {
    let manifest = open_manifest(manifest_path)?;
    let fingerprint = pipeline.config.fingerprint();
    let mut skip = Vec::new();
    let results: Vec<(String, iris_core::Result<(IrisCode, f64)>)> = match segmentation {
        None => manifest
            .records
            .par_iter()
            .map(|r| {
                let res = pipeline.process_sample(&manifest, r).map(|p| (p.code, p.mask_fraction));
                (r.sample_id.clone(), res)
            })
            .collect(),
        Some(dir) => {
            let seg_path = dir.join(SEGMENTATION_JSON);
            let seg: SegmentationOutput = read_json(&seg_path)?;
            check_fingerprint(&seg.config_fingerprint, fingerprint, &seg_path)?;
            skip.extend(seg.skipped);
            let by_id: HashMap<&str, &SegmentedSample> = seg.samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
            manifest
                .records
                .par_iter()
                .filter_map(|r| by_id.get(r.sample_id.as_str()).map(|s| (r, *s)))
                .map(|(r, s)| {
                    let res = (|| {
                        let image = load_image(&manifest.resolve(&r.image_path))?;
                        let (fine, _) = load_mask(&dir.join(&s.fine_mask), image.width, image.height, MaskSemantics::Fine)?;
                        let circles = BoundaryCircles {
                            pupil: s.pupil,
                            limbic: s.limbic,
                            pupil_votes: s.pupil_votes,
                            limbic_votes: s.limbic_votes,
                        };
                        pipeline.encode_with(&image, &fine, &circles, &r.sample_id)
                    })();
                    (r.sample_id.clone(), res)
                })
                .collect()
        }
    };
    let mut samples = Vec::new();
    for (id, res) in results {
        match res {
            Ok((code, mask_fraction)) => {
                let rel = PathBuf::from(format!("codes/{id}.ircd"));
                code.save(&out.join(&rel))?;
                samples.push(EncodedSample {
                    sample_id: id,
                    code: rel,
                    mask_fraction,
                });
            }
            Err(e) => skip.push(skipped(&id, &e)),
        }
    }
    sort_skipped(&manifest, &mut skip);
    let n = samples.len();
    write_json(
        &out.join(ENCODING_JSON),
        &EncodingOutput {
            config_fingerprint: hex(fingerprint),
            code_fingerprint: hex(pipeline.bank.fingerprint),
            samples,
            skipped: skip,
        },
    )?;
    println!("encoded {n} of {} samples", manifest.len());
    Ok(())
}

/// Writes scores.csv and its sidecar; returns the score set.
fn write_scores(pipeline: &Pipeline, out: &Path, matches: &[MatchRecord], skip: Vec<SkippedSample>) -> anyhow::Result<()> {
    let set = ScoreSet::from_matches(matches);
    let norm = if pipeline.config.score_norm {
        Some(set.estimate_norm()?)
    } else {
        None
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_score_csv(&out.join(SCORES_CSV), matches, norm.as_ref())?;
    write_json(
        &out.join(SCORES_META),
        &ScoresMeta {
            config_fingerprint: hex(pipeline.config.fingerprint()),
            max_shift: pipeline.config.max_shift,
            pairs: matches.len(),
            n_typical: norm.map(|c: NormContext| c.n_typical),
            skipped: skip,
        },
    )
}

fn cmd_match(
    pipeline: &Pipeline,
    out: &Path,
    manifest: Option<&Path>,
    codes: Option<&Path>,
    pair: Option<&[PathBuf]>,
) -> anyhow::Result<()> {
    if let Some([a, b]) = pair {
        let (ca, cb) = (IrisCode::load(a)?, IrisCode::load(b)?);
        let r = match_codes(&ca, &cb, pipeline.config.max_shift)?;
        let m = MatchRecord {
            sample_a: ca.sample_id.clone(),
            sample_b: cb.sample_id.clone(),
            label: if ca.sample_id == cb.sample_id {
                iris_core::evaluation::Label::Genuine
            } else {
                iris_core::evaluation::Label::Impostor
            },
            result: r,
        };
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write_score_csv(&out.join(SCORES_CSV), std::slice::from_ref(&m), None)?;
        print!("{}", iris_core::evaluation::score_csv(std::slice::from_ref(&m), None)?);
        return Ok(());
    }
    let (Some(manifest_path), Some(dir)) = (manifest, codes) else {
        bail!(iris_core::Error::InvalidArgument(
            "match needs either --pair A B or --codes DIR --manifest PATH".into()
        ));
    };
    let manifest = open_manifest(manifest_path)?;
    let enc_path = dir.join(ENCODING_JSON);
    let enc: EncodingOutput = read_json(&enc_path)?;
    check_fingerprint(&enc.config_fingerprint, pipeline.config.fingerprint(), &enc_path)?;
    let codes = enc
        .samples
        .iter()
        .map(|s| {
            let code = IrisCode::load(&dir.join(&s.code))?;
            if code.fingerprint != pipeline.bank.fingerprint {
                return Err(iris_core::Error::FingerprintMismatch(pipeline.bank.fingerprint, code.fingerprint));
            }
            Ok(code)
        })
        .collect::<iris_core::Result<Vec<_>>>()?;
    let matches = match_all(&manifest, &codes, pipeline.config.max_shift)?;
    write_scores(pipeline, out, &matches, enc.skipped)?;
    println!("{} comparisons written", matches.len());
    Ok(())
}

fn slug(h: &iris_core::evaluation::Horizon) -> String {
    format!("{}_{}h", h.direction.as_str(), h.bound_hours)
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_curves(out: &Path, report: &EvalReport, curves: &[CurveSet]) -> anyhow::Result<()> {
    let mut fnmr_series = Vec::new();
    for (m, c) in report.matchers.iter().zip(curves) {
        let mut roc_series = Vec::new();
        for (h, roc) in &c.roc {
            write_text(&out.join(format!("curves/roc_{}_{}.csv", m.name, slug(h))), &roc_csv(roc))?;
            roc_series.push(Series {
                label: h.to_string(),
                points: roc.points.iter().map(|p| (p.fmr.max(1e-6), 1.0 - p.fnmr)).collect(),
            });
        }
        let mut cmc_series = Vec::new();
        for (h, cmc) in &c.cmc {
            write_text(&out.join(format!("curves/cmc_{}_{}.csv", m.name, slug(h))), &cmc_csv(cmc))?;
            cmc_series.push(Series {
                label: h.to_string(),
                points: cmc.ranks.iter().map(|&(k, r)| (k as f64, r)).collect(),
            });
        }
        write_text(&out.join(format!("curves/fnmr_{}.csv", m.name)), &fnmr_csv(&m.fnmr_dynamics))?;
        fnmr_series.push(Series {
            label: m.name.clone(),
            points: m
                .fnmr_dynamics
                .iter()
                .filter_map(|p| p.point.map(|op| (p.horizon_hours, op.fnmr)))
                .collect(),
        });
        let roc_plot = Plot {
            title: format!("ROC ({})", m.name),
            x_label: "FMR".into(),
            y_label: "1 - FNMR".into(),
            x_range: (1e-6, 1.0),
            y_range: (0.0, 1.0),
            log_x: true,
            series: roc_series,
        };
        write_text(&out.join(format!("plots/roc_{}.svg", m.name)), &roc_plot.render())?;
        let max_rank = c.cmc.iter().flat_map(|(_, k)| k.ranks.last().map(|r| r.0)).max().unwrap_or(1);
        let cmc_plot = Plot {
            title: format!("CMC ({})", m.name),
            x_label: "rank".into(),
            y_label: "identification rate".into(),
            x_range: (1.0, max_rank.max(2) as f64),
            y_range: (0.0, 1.0),
            log_x: false,
            series: cmc_series,
        };
        write_text(&out.join(format!("plots/cmc_{}.svg", m.name)), &cmc_plot.render())?;
    }
    let max_h = report
        .matchers
        .iter()
        .flat_map(|m| m.fnmr_dynamics.iter().map(|p| p.horizon_hours))
        .fold(1.0, f64::max);
    let fnmr_plot = Plot {
        title: "FNMR at FMR bound vs post-mortem horizon".into(),
        x_label: "hours".into(),
        y_label: "FNMR".into(),
        x_range: (0.0, max_h),
        y_range: (0.0, 1.0),
        log_x: false,
        series: fnmr_series,
    };
    write_text(&out.join("plots/fnmr_dynamics.svg"), &fnmr_plot.render())
}

fn cmd_evaluate(
    pipeline: &Pipeline,
    manifest_path: &Path,
    out: &Path,
    scores: Option<&Path>,
    external: Option<&Path>,
) -> anyhow::Result<()> {
    let manifest = open_manifest(manifest_path)?;
    let (internal, skip) = match scores {
        Some(dir) => {
            let meta_path = dir.join(SCORES_META);
            let meta: ScoresMeta = read_json(&meta_path)?;
            check_fingerprint(&meta.config_fingerprint, pipeline.config.fingerprint(), &meta_path)?;
            (ScoreSet::from_matches(&read_score_csv(&dir.join(SCORES_CSV))?), meta.skipped)
        }
        None => {
            let batch = pipeline.encode_all(&manifest);
            let matches = pipeline.match_all(&manifest, &batch.items)?;
            write_scores(pipeline, out, &matches, batch.skipped.clone())?;
            (ScoreSet::from_matches(&matches), batch.skipped)
        }
    };
    let ext = external.map(|p| import_external_scores(p, &manifest)).transpose()?;
    let (report, curves) = pipeline.evaluate(&manifest, &internal, ext.as_ref(), skip)?;
    write_json(&out.join("report.json"), &report)?;
    write_curves(out, &report, &curves)?;
    for m in &report.matchers {
        for r in &m.roc {
            let eer = r.eer.map_or("n/a".to_string(), |e| format!("{:.2}%", 100.0 * e));
            println!("{} {}: {} comparisons, EER {eer}", m.name, r.subset, r.genuine + r.impostor);
        }
    }
    Ok(())
}

fn cmd_import(manifest_path: &Path, input: &Path, out: &Path) -> anyhow::Result<()> {
    let manifest = open_manifest(manifest_path)?;
    let set = import_external_scores(input, &manifest)?;
    let mut text = String::from("sample_a,sample_b,score\n");
    for r in &set.records {
        text.push_str(&format!("{},{},{}\n", r.sample_a, r.sample_b, r.score));
    }
    write_text(&out.join("external_scores.csv"), &text)?;
    let summary = ImportSummary {
        source: "external".into(),
        records: set.records.len(),
        genuine: set.count(iris_core::evaluation::Label::Genuine),
        impostor: set.count(iris_core::evaluation::Label::Impostor),
    };
    write_json(&out.join("external_scores.meta.json"), &summary)?;
    println!("{} external scores ({} genuine, {} impostor)", summary.records, summary.genuine, summary.impostor);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let workers = cli.workers;
    if let Command::Synth {
        out,
        synth_config,
        seed,
        identities,
        sessions,
    } = &cli.command
    {
        return with_workers(workers, || cmd_synth(out, synth_config.as_deref(), *seed, *identities, *sessions))?;
    }
    let pipeline = Pipeline::new(load_config(&cli)?)?;
    with_workers(workers, || match &cli.command {
        Command::Synth { .. } => unreachable!(),
        Command::Segment { manifest, out, debug_fit } => cmd_segment(&pipeline, manifest, out, *debug_fit),
        Command::Encode {
            manifest,
            out,
            segmentation,
        } => cmd_encode(&pipeline, manifest, out, segmentation.as_deref()),
        Command::Match {
            out,
            manifest,
            codes,
            pair,
        } => cmd_match(&pipeline, out, manifest.as_deref(), codes.as_deref(), pair.as_deref()),
        Command::Evaluate {
            manifest,
            out,
            scores,
            external,
        } => cmd_evaluate(&pipeline, manifest, out, scores.as_deref(), external.as_deref()),
        Command::ImportScores { manifest, input, out } => cmd_import(manifest, input, out),
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<iris_core::Error>().map_or("cli", |c| c.kind());
            let mut message = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                // core errors already render their source
                if !message.ends_with(&cause) {
                    if !message.is_empty() {
                        message.push_str(": ");
                    }
                    message.push_str(&cause);
                }
            }
            eprintln!("{}", serde_json::json!({"error": kind, "message": message}));
            ExitCode::FAILURE
        }
    }
}
