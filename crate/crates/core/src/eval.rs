//! IoU, greedy detection-to-ground-truth matching, per-class average
//! precision and mAP.
//!
//! Matching follows the Pascal VOC protocol: detections are visited in
//! descending confidence (input order on ties) and each one claims the
//! still-unmatched ground-truth box it overlaps most (earliest box on ties),
//! provided the overlap reaches the IoU threshold.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{BoxGeometry, DatasetIndex, ImageId, ImagePrediction};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoxGeometry, b: &BoxGeometry) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedDetection {
    pub confidence: f64,
    pub true_positive: bool,
}

/// Outcome of matching one class's detections against its ground truth.
/// Detections keep their input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub detections: Vec<MatchedDetection>,
    pub n_ground_truth: usize,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.detections.iter().filter(|d| d.true_positive).count()
    }

    /// Appends another image's result for the same class.
    pub fn merge(&mut self, other: MatchResult) {
        self.detections.extend(other.detections);
        self.n_ground_truth += other.n_ground_truth;
    }

    /// Detections in ranking order: descending confidence, stable.
    fn ranked(&self) -> Vec<MatchedDetection> {
        let mut ranked = self.detections.clone();
        ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        ranked
    }
}

pub fn match_detections(dets: &[(BoxGeometry, f64)], gts: &[BoxGeometry], threshold: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].1.total_cmp(&dets[i].1));

    let mut claimed = alloc::vec![false; gts.len()];
    let mut flags = alloc::vec![false; dets.len()];
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (j, gt) in gts.iter().enumerate() {
            if claimed[j] {
                continue;
            }
            let overlap = iou(&dets[i].0, gt);
            if best.is_none_or(|(_, o)| overlap > o) {
                best = Some((j, overlap));
            }
        }
        if let Some((j, overlap)) = best {
            if overlap >= threshold {
                claimed[j] = true;
                flags[i] = true;
            }
        }
    }
    MatchResult {
        detections: dets
            .iter()
            .zip(flags)
            .map(|(&(_, confidence), true_positive)| MatchedDetection { confidence, true_positive })
            .collect(),
        n_ground_truth: gts.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApInterpolation {
    /// Area under the monotone precision envelope (VOC 2010 and later).
    #[default]
    AllPoints,
    /// Mean of the envelope at recall 0, 0.1, ..., 1 (VOC 2007).
    ElevenPoint,
}

impl ApInterpolation {
    pub fn as_str(&self) -> &'static str {
        match self {
            ApInterpolation::AllPoints => "all-points",
            ApInterpolation::ElevenPoint => "11-point",
        }
    }
}

impl fmt::Display for ApInterpolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ApInterpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-points" | "all_points" | "continuous" => Ok(ApInterpolation::AllPoints),
            "11-point" | "eleven-point" => Ok(ApInterpolation::ElevenPoint),
            _ => Err(Error::Config(format!("unknown AP interpolation {s:?}; expected all-points or 11-point"))),
        }
    }
}

/// Precision/recall after each ranked detection.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrCurve {
    /// `(recall, precision)` pairs, recall non-decreasing.
    pub points: Vec<(f64, f64)>,
}

pub fn precision_recall_curve(matches: &MatchResult) -> PrCurve {
    let g = matches.n_ground_truth;
    let mut tp = 0usize;
    let points = matches
        .ranked()
        .iter()
        .enumerate()
        .map(|(i, d)| {
            tp += usize::from(d.true_positive);
            let recall = if g == 0 { 0.0 } else { tp as f64 / g as f64 };
            (recall, tp as f64 / (i + 1) as f64)
        })
        .collect();
    PrCurve { points }
}

/// Average precision of one class. `None` when the class has neither
/// ground truth nor detections; `Some(0.0)` for detections without ground
/// truth.
pub fn average_precision(matches: &MatchResult, interpolation: ApInterpolation) -> Option<f64> {
    let g = matches.n_ground_truth;
    if g == 0 {
        return (!matches.detections.is_empty()).then_some(0.0);
    }
    let ranked = matches.ranked();
    let mut tp_counts = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (i, d) in ranked.iter().enumerate() {
        tp += usize::from(d.true_positive);
        tp_counts.push(tp);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    // precision envelope: best precision at this rank or any later one
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let ap = match interpolation {
        // recall rises by 1/G exactly at each true positive
        ApInterpolation::AllPoints => {
            ranked.iter().zip(&precision).filter(|(d, _)| d.true_positive).map(|(_, p)| p).sum::<f64>() / g as f64
        }
        ApInterpolation::ElevenPoint => {
            (0..=10usize)
                .map(|t| {
                    // first rank whose recall tp/g reaches t/10
                    tp_counts.iter().position(|&c| c * 10 >= t * g).map_or(0.0, |i| precision[i])
                })
                .sum::<f64>()
                / 11.0
        }
    };
    Some(ap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAp {
    /// 0-based category index.
    pub category: usize,
    pub ap: Option<f64>,
    pub n_ground_truth: usize,
}

/// Unweighted mean over classes with at least one ground-truth box.
pub fn mean_ap(per_class: &[ClassAp]) -> Result<f64> {
    let present: Vec<f64> = per_class.iter().filter(|c| c.n_ground_truth > 0).map(|c| c.ap.unwrap_or(0.0)).collect();
    if present.is_empty() {
        return Err(Error::Domain("mAP undefined: no class has ground truth in the evaluation split".into()));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_class: Vec<ClassAp>,
    pub map: f64,
}

/// Evaluates `preds` against the ground truth of `gt`. Each detection counts
/// for its argmax class with its maximum probability as confidence. Images
/// without a prediction record have no detections.
pub fn evaluate(
    gt: &DatasetIndex,
    preds: &[ImagePrediction],
    iou_threshold: f64,
    interpolation: ApInterpolation,
) -> Result<Evaluation> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::Domain(format!("IoU threshold {iou_threshold} outside (0, 1]")));
    }
    let mut by_image: BTreeMap<&ImageId, &ImagePrediction> = BTreeMap::new();
    for p in preds {
        gt.check_prediction(p)?;
        if by_image.insert(&p.image_id, p).is_some() {
            return Err(Error::Validation(format!("duplicate prediction record for image_id {}", p.image_id)));
        }
    }

    let d = gt.n_classes();
    let mut per_class_matches: Vec<MatchResult> = (0..d).map(|_| MatchResult::default()).collect();
    for id in gt.images() {
        let boxes = gt.boxes(id);
        let pred = by_image.get(id);
        for (c, result) in per_class_matches.iter_mut().enumerate() {
            let gts: Vec<BoxGeometry> = boxes.iter().filter(|b| b.category == c).map(|b| b.geometry).collect();
            let dets: Vec<(BoxGeometry, f64)> = pred
                .map(|p| {
                    p.detections
                        .iter()
                        .filter(|det| det.predicted_class() == c)
                        .map(|det| (det.geometry, det.confidence()))
                        .collect()
                })
                .unwrap_or_default();
            if gts.is_empty() && dets.is_empty() {
                continue;
            }
            result.merge(match_detections(&dets, &gts, iou_threshold));
        }
    }

    let per_class: Vec<ClassAp> = per_class_matches
        .iter()
        .enumerate()
        .map(|(category, m)| ClassAp {
            category,
            ap: average_precision(m, interpolation),
            n_ground_truth: m.n_ground_truth,
        })
        .collect();
    let map = mean_ap(&per_class)?;
    Ok(Evaluation { per_class, map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoxGeometry {
        BoxGeometry::new(x0, y0, x1, y1).unwrap()
    }

    fn det(confidence: f64, true_positive: bool) -> MatchedDetection {
        MatchedDetection { confidence, true_positive }
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert_eq!(iou(&a, &bx(10.0, 0.0, 20.0, 10.0)), 0.0);
        assert!((iou(&a, &bx(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn single_claim_rule() {
        let g = bx(0.0, 0.0, 10.0, 10.0);
        let m = match_detections(&[(g, 0.9)], &[g], 0.5);
        assert_eq!((m.true_positives(), m.detections.len()), (1, 1));
        let m = match_detections(&[(g, 0.4), (g, 0.8)], &[g], 0.5);
        assert_eq!(m.detections, vec![det(0.4, false), det(0.8, true)]);
    }

    #[test]
    fn below_threshold_is_false_positive() {
        let g = bx(0.0, 0.0, 10.0, 10.0);
        let m = match_detections(&[(bx(5.0, 0.0, 15.0, 10.0), 0.9)], &[g], 0.5);
        assert!(!m.detections[0].true_positive);
    }

    #[test]
    fn ap_hand_examples() {
        let ap = |dets: Vec<MatchedDetection>| {
            average_precision(&MatchResult { detections: dets, n_ground_truth: 1 }, ApInterpolation::AllPoints)
        };
        assert_eq!(ap(vec![det(0.9, true)]), Some(1.0));
        assert_eq!(ap(vec![det(0.9, true), det(0.8, false)]), Some(1.0));
        assert_eq!(ap(vec![det(0.9, false), det(0.8, true)]), Some(0.5));
        assert_eq!(ap(vec![]), Some(0.0));
    }

    #[test]
    fn eleven_point_interpolation() {
        let m = MatchResult { detections: vec![det(0.9, false), det(0.8, true)], n_ground_truth: 1 };
        assert!((average_precision(&m, ApInterpolation::ElevenPoint).unwrap() - 0.5).abs() < 1e-12);
        // 2 GT, TP then FP then TP: envelope 1.0 up to recall 0.5, 2/3 after
        let m = MatchResult { detections: vec![det(0.9, true), det(0.8, false), det(0.7, true)], n_ground_truth: 2 };
        let expected = (6.0 * 1.0 + 5.0 * (2.0 / 3.0)) / 11.0;
        assert!((average_precision(&m, ApInterpolation::ElevenPoint).unwrap() - expected).abs() < 1e-12);
        assert!((average_precision(&m, ApInterpolation::AllPoints).unwrap() - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_classes_are_skipped() {
        assert_eq!(average_precision(&MatchResult::default(), ApInterpolation::AllPoints), None);
        let fp_only = MatchResult { detections: vec![det(0.5, false)], n_ground_truth: 0 };
        assert_eq!(average_precision(&fp_only, ApInterpolation::AllPoints), Some(0.0));
    }

    #[test]
    fn mean_ap_examples() {
        let c = |category, ap: Option<f64>, n| ClassAp { category, ap, n_ground_truth: n };
        assert_eq!(mean_ap(&[c(0, Some(0.5), 1), c(1, Some(1.0), 3)]).unwrap(), 0.75);
        assert_eq!(mean_ap(&[c(0, Some(0.42), 2)]).unwrap(), 0.42);
        assert_eq!(mean_ap(&[c(0, Some(1.0), 1), c(1, Some(0.0), 0)]).unwrap(), 1.0);
        assert!(matches!(mean_ap(&[c(0, None, 0)]), Err(Error::Domain(_))));
    }

    #[test]
    fn pr_curve_is_monotone_in_recall() {
        let m = MatchResult { detections: vec![det(0.2, true), det(0.9, false), det(0.5, true)], n_ground_truth: 3 };
        let curve = precision_recall_curve(&m);
        assert_eq!(curve.points, vec![(0.0, 0.0), (1.0 / 3.0, 0.5), (2.0 / 3.0, 2.0 / 3.0)]);
    }

    #[test]
    fn parse_interpolation() {
        assert_eq!("all-points".parse::<ApInterpolation>().unwrap(), ApInterpolation::AllPoints);
        assert_eq!("11-point".parse::<ApInterpolation>().unwrap(), ApInterpolation::ElevenPoint);
        assert!("x".parse::<ApInterpolation>().is_err());
    }
}
