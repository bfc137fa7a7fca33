//! Zero-cost active learning for object detection.
//!
//! Everything here works from a single inference pass of a detector: boxes
//! are scored from their class distributions ([`scoring`]), box scores are
//! reduced to one image score ([`accumulate`]), the unlabeled pool is ranked
//! and the top of it is handed to a ground-truth oracle ([`experiment`]).
//! Detector quality is measured with VOC-style mAP ([`eval`]), and
//! [`synth`] provides a deterministic surrogate detector so that complete
//! experiments run without training a network.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the
//! subprocess adapter and the command line live in the `zcal` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod accumulate;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod scoring;
pub mod seed;
pub mod summary;
pub mod synth;
pub mod types;

pub use accumulate::{accumulate, rank, score_pool, AccumulatorKind, ImageScore, RankedPool, SelectionPolicy};
pub use error::{Error, Result};
pub use eval::{average_precision, evaluate, iou, match_detections, mean_ap, ApInterpolation, ClassAp, Evaluation, MatchResult};
pub use experiment::{
    oracle_label, run_cycle, run_experiment, schedule, AdapterOutput, CycleRecord, CycleRequest, DetectorAdapter,
    ExperimentConfig, ExperimentState, LabeledSet,
};
pub use scoring::{entropy_score, margin_score, random_score, score_boxes, variance_score, ScorerKind};
pub use seed::SeedStream;
pub use summary::{summarize, CurveSummary, ReportRow};
pub use synth::{skill, synth_predict, SkillProfile, SynthDetectorParams, SyntheticDataSpec, SyntheticDetector};
pub use types::{
    BoxGeometry, CategorySet, ClassDistribution, DatasetIndex, Detection, GroundTruthAnnotation, GroundTruthBox,
    ImageId, ImagePrediction,
};
