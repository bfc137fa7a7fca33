//! Shared domain model: categories, boxes, class distributions, predictions
//! and the ground-truth dataset index.
//!
//! Category indices are 0-based in memory. File formats use 1-based indices
//! and convert at the boundary.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Largest deviation of a probability sum from 1 that is silently repaired.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-6;

/// Sums closer to 1 than this are left untouched, which makes normalization
/// idempotent: a vector that was normalized once is never rescaled again.
const RENORMALIZE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ImageId(String);

impl ImageId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ImageId {
    fn from(s: &str) -> Self {
        Self(s.into())
    }
}

impl From<String> for ImageId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// Ordered, duplicate-free list of foreground category names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategorySet {
    names: Vec<String>,
}

impl CategorySet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Validation("category set must not be empty".into()));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Validation(format!("duplicate category name {name:?}")));
            }
        }
        Ok(Self { names })
    }

    /// Number of categories, `D`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Axis-aligned box in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxGeometry {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoxGeometry {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = Self { x_min, y_min, x_max, y_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.x_min, self.y_min, self.x_max, self.y_max].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Validation(format!("box has non-finite coordinates: {self:?}")));
        }
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::Validation(format!("degenerate box: {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self { x_min: self.x_min + dx, y_min: self.y_min + dy, x_max: self.x_max + dx, y_max: self.y_max + dy }
    }
}

/// Probability vector over the `D` foreground categories of one box.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    /// Validates `probs` and rescales it onto the simplex when its sum is
    /// within [`PROBABILITY_SUM_TOLERANCE`] of one.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Validation("empty probability vector".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
            return Err(Error::Validation(format!("probability {bad} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        let deviation = (sum - 1.0).abs();
        if deviation > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::Validation(format!(
                "probabilities sum to {sum}, deviating from 1 by more than {PROBABILITY_SUM_TOLERANCE}"
            )));
        }
        if deviation > RENORMALIZE_EPSILON {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self { probs })
    }

    pub fn one_hot(class: usize, n_classes: usize) -> Result<Self> {
        if class >= n_classes {
            return Err(Error::Validation(format!("class {class} out of range for D = {n_classes}")));
        }
        let mut probs = alloc::vec![0.0; n_classes];
        probs[class] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform(n_classes: usize) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::Validation("uniform distribution over zero classes".into()));
        }
        Ok(Self { probs: alloc::vec![1.0 / n_classes as f64; n_classes] })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Largest class probability.
    pub fn confidence(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Predicted class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub geometry: BoxGeometry,
    pub distribution: ClassDistribution,
}

impl Detection {
    pub fn new(geometry: BoxGeometry, distribution: ClassDistribution) -> Self {
        Self { geometry, distribution }
    }

    pub fn confidence(&self) -> f64 {
        self.distribution.confidence()
    }

    pub fn predicted_class(&self) -> usize {
        self.distribution.argmax()
    }
}

/// All detections of one image in one cycle. May be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePrediction {
    pub image_id: ImageId,
    pub detections: Vec<Detection>,
}

impl ImagePrediction {
    pub fn new(image_id: ImageId, detections: Vec<Detection>) -> Self {
        Self { image_id, detections }
    }

    pub fn empty(image_id: ImageId) -> Self {
        Self { image_id, detections: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthBox {
    pub geometry: BoxGeometry,
    /// 0-based category index.
    pub category: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthAnnotation {
    pub image_id: ImageId,
    pub boxes: Vec<GroundTruthBox>,
}

impl GroundTruthAnnotation {
    pub fn new(image_id: ImageId, boxes: Vec<GroundTruthBox>) -> Self {
        Self { image_id, boxes }
    }

    /// Ground truth presented as a perfect prediction: every box emitted
    /// with a one-hot distribution on its category.
    pub fn as_prediction(&self, n_classes: usize) -> Result<ImagePrediction> {
        let detections = self
            .boxes
            .iter()
            .map(|b| Ok(Detection::new(b.geometry, ClassDistribution::one_hot(b.category, n_classes)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ImagePrediction::new(self.image_id.clone(), detections))
    }
}

/// Images of one split with their complete ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    categories: CategorySet,
    images: Vec<ImageId>,
    members: BTreeSet<ImageId>,
    annotations: BTreeMap<ImageId, GroundTruthAnnotation>,
}

impl DatasetIndex {
    /// Builds and validates an index. Images without an entry in
    /// `annotations` have no objects. Several annotation records for the
    /// same image are merged.
    pub fn new(categories: CategorySet, images: Vec<ImageId>, annotations: Vec<GroundTruthAnnotation>) -> Result<Self> {
        let mut known = BTreeSet::new();
        for id in &images {
            if !known.insert(id.clone()) {
                return Err(Error::Validation(format!("duplicate image_id {id}")));
            }
        }
        let d = categories.len();
        let mut merged: BTreeMap<ImageId, GroundTruthAnnotation> = BTreeMap::new();
        for ann in annotations {
            if !known.contains(&ann.image_id) {
                return Err(Error::Validation(format!("annotation for unknown image_id {}", ann.image_id)));
            }
            for b in &ann.boxes {
                b.geometry
                    .validate()
                    .map_err(|e| Error::Validation(format!("image_id {}: {e}", ann.image_id)))?;
                if b.category >= d {
                    return Err(Error::Validation(format!(
                        "image_id {}: category index {} out of range 1..={d}",
                        ann.image_id,
                        b.category + 1
                    )));
                }
            }
            merged
                .entry(ann.image_id.clone())
                .or_insert_with(|| GroundTruthAnnotation::new(ann.image_id.clone(), Vec::new()))
                .boxes
                .extend(ann.boxes);
        }
        Ok(Self { categories, images, members: known, annotations: merged })
    }

    pub fn categories(&self) -> &CategorySet {
        &self.categories
    }

    pub fn n_classes(&self) -> usize {
        self.categories.len()
    }

    pub fn images(&self) -> &[ImageId] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn contains(&self, id: &ImageId) -> bool {
        self.members.contains(id)
    }

    /// Ground truth of `id`; images without objects get an empty annotation.
    pub fn annotation(&self, id: &ImageId) -> Option<GroundTruthAnnotation> {
        if let Some(ann) = self.annotations.get(id) {
            return Some(ann.clone());
        }
        self.members.contains(id).then(|| GroundTruthAnnotation::new(id.clone(), Vec::new()))
    }

    pub fn boxes(&self, id: &ImageId) -> &[GroundTruthBox] {
        self.annotations.get(id).map(|a| a.boxes.as_slice()).unwrap_or(&[])
    }

    pub fn object_count(&self, id: &ImageId) -> usize {
        self.boxes(id).len()
    }

    /// Annotations in image order, one per image (possibly empty).
    pub fn annotations(&self) -> impl Iterator<Item = GroundTruthAnnotation> + '_ {
        self.images
            .iter()
            .map(move |id| self.annotation(id).unwrap_or_else(|| GroundTruthAnnotation::new(id.clone(), Vec::new())))
    }

    /// Instance count per category over the whole split.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.n_classes()];
        for ann in self.annotations.values() {
            for b in &ann.boxes {
                counts[b.category] += 1;
            }
        }
        counts
    }

    /// Checks a prediction against this index: known image and D-length
    /// distributions.
    pub fn check_prediction(&self, pred: &ImagePrediction) -> Result<()> {
        if !self.contains(&pred.image_id) {
            return Err(Error::Validation(format!("prediction for unknown image_id {}", pred.image_id)));
        }
        let d = self.n_classes();
        for det in &pred.detections {
            if det.distribution.len() != d {
                return Err(Error::Validation(format!(
                    "image_id {}: probability vector has length {}, expected {d}",
                    pred.image_id,
                    det.distribution.len()
                )));
            }
        }
        Ok(())
    }
}
