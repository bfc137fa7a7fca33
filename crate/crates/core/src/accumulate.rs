//! Image-level scores from box scores, and ranking of the unlabeled pool.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::scoring::ScorerKind;
use crate::seed::SeedStream;
use crate::types::{ImageId, ImagePrediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccumulatorKind {
    Mean,
    Sum,
    Max,
}

impl AccumulatorKind {
    pub const ALL: [AccumulatorKind; 3] = [AccumulatorKind::Mean, AccumulatorKind::Sum, AccumulatorKind::Max];

    pub fn as_str(&self) -> &'static str {
        match self {
            AccumulatorKind::Mean => "mean",
            AccumulatorKind::Sum => "sum",
            AccumulatorKind::Max => "max",
        }
    }
}

impl fmt::Display for AccumulatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccumulatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AccumulatorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown accumulator {s:?}; expected mean, sum or max")))
    }
}

/// Reduces box scores to one value. An empty list yields 0 for every kind.
pub fn accumulate(scores: &[f64], kind: AccumulatorKind) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    match kind {
        AccumulatorKind::Sum => scores.iter().sum(),
        AccumulatorKind::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
        AccumulatorKind::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// How images are scored for selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionPolicy {
    pub scorer: ScorerKind,
    pub accumulator: AccumulatorKind,
    /// Detections below this confidence are dropped before scoring.
    pub confidence_threshold: f64,
    /// Score given to images with no detection left after filtering.
    pub empty_image_score: f64,
}

impl SelectionPolicy {
    pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.05;

    pub fn new(scorer: ScorerKind, accumulator: AccumulatorKind) -> Self {
        Self { scorer, accumulator, confidence_threshold: Self::DEFAULT_CONFIDENCE_THRESHOLD, empty_image_score: 0.0 }
    }

    pub fn with_confidence_threshold(mut self, threshold: f64) -> Self {
        self.confidence_threshold = threshold;
        self
    }

    pub fn with_empty_image_score(mut self, score: f64) -> Self {
        self.empty_image_score = score;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::Config(format!("confidence threshold {} outside [0, 1]", self.confidence_threshold)));
        }
        if !self.empty_image_score.is_finite() {
            return Err(Error::Config("empty-image score must be finite".into()));
        }
        Ok(())
    }

    /// Box scores of the detections that pass the confidence filter.
    pub fn box_scores(&self, pred: &ImagePrediction, stream: &SeedStream) -> Result<Vec<f64>> {
        let mut rng = stream.rng_for(&pred.image_id);
        pred.detections
            .iter()
            .filter(|det| det.confidence() >= self.confidence_threshold)
            .map(|det| self.scorer.score(&det.distribution, &mut rng))
            .collect()
    }

    pub fn score_image(&self, pred: &ImagePrediction, stream: &SeedStream) -> Result<ImageScore> {
        let scores = self.box_scores(pred, stream)?;
        let value =
            if scores.is_empty() { self.empty_image_score } else { accumulate(&scores, self.accumulator) };
        Ok(ImageScore { image_id: pred.image_id.clone(), value, n_boxes: scores.len() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub image_id: ImageId,
    pub value: f64,
    /// Boxes that survived the confidence filter.
    pub n_boxes: usize,
}

/// Scores each prediction. The random scorer draws from a generator derived
/// from `stream` and the image id.
pub fn score_pool(preds: &[ImagePrediction], policy: &SelectionPolicy, stream: &SeedStream) -> Result<Vec<ImageScore>> {
    preds.iter().map(|p| policy.score_image(p, stream)).collect()
}

/// Pool entries, highest score first; equal scores in ascending id order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedPool {
    entries: Vec<ImageScore>,
}

fn by_rank(a: &ImageScore, b: &ImageScore) -> Ordering {
    b.value.total_cmp(&a.value).then_with(|| a.image_id.cmp(&b.image_id))
}

pub fn rank(mut scores: Vec<ImageScore>) -> Result<RankedPool> {
    let mut seen = BTreeSet::new();
    for s in &scores {
        if !seen.insert(&s.image_id) {
            return Err(Error::Validation(format!("duplicate image_id {} in ranking", s.image_id)));
        }
        if s.value.is_nan() {
            return Err(Error::Validation(format!("score of {} is NaN", s.image_id)));
        }
    }
    scores.sort_by(by_rank);
    Ok(RankedPool { entries: scores })
}

impl RankedPool {
    pub fn entries(&self) -> &[ImageScore] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The first `min(l, len)` ids. An empty pool gives an empty selection.
    pub fn select_top(&self, l: usize) -> Result<Vec<ImageId>> {
        if l == 0 {
            return Err(Error::Domain("selection size must be at least 1".into()));
        }
        Ok(self.entries.iter().take(l).map(|e| e.image_id.clone()).collect())
    }

    pub fn into_entries(self) -> Vec<ImageScore> {
        self.entries
    }
}
