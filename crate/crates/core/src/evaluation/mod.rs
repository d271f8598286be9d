//! Verification and identification metrics over labelled comparison scores,
//! with capture-time subsetting.

mod cmc;
mod fnmr;
mod pairs;
mod report;
mod roc;
mod scores;
pub mod svg;

pub use cmc::{compute_cmc, first_session_gallery, CmcCurve};
pub use fnmr::{fnmr_at_fmr, fnmr_dynamics, fnmr_dynamics_with, DynamicsPoint, OperatingPoint};
pub use pairs::{gen_pairs, subset_by_horizon, Horizon, HorizonDirection, SamplePair};
pub use report::{
    cmc_csv, evaluate, fnmr_csv, roc_csv, CmcSummary, CurveSet, EvalReport, EvaluationConfig, MatcherInput,
    MatcherReport, NPolicy, RocSummary, ScoreMode, SkippedSample,
};
pub use roc::{compute_roc, RocCurve, RocPoint};
pub use scores::{
    import_external_scores, parse_external_scores, parse_score_csv, read_score_csv, score_csv, write_score_csv,
    Label, MatchRecord, ScoreDirection, ScoreRecord, ScoreSet, ScoreSource, SCORE_CSV_HEADER,
};
