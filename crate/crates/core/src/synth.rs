//! Synthetic detector and dataset generator.
//!
//! The surrogate detector perturbs ground truth. Its quality is governed by
//! a skill in `[0, 1]` that grows with the amount of labeled data: low skill
//! means more missed objects, looser boxes, more false positives and class
//! distributions closer to noise. In the class-conditional variant each
//! category has its own skill driven by how many of its instances have been
//! labeled, so selecting images with uncertain categories pays off.
//!
//! Every random draw is keyed by `(seed, labeled-set size, image id)` and the
//! draws are consumed in a fixed order regardless of skill, so two skill
//! levels see the same underlying noise.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::experiment::{AdapterOutput, CycleRequest, DetectorAdapter, LabeledSet};
use crate::seed::SeedStream;
use crate::types::{
    BoxGeometry, CategorySet, ClassDistribution, DatasetIndex, Detection, GroundTruthAnnotation, GroundTruthBox,
    ImageId, ImagePrediction,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDetectorParams {
    /// Skill with no labeled data.
    pub skill_floor: f64,
    /// Skill with everything labeled.
    pub skill_ceiling: f64,
    /// Box jitter at zero skill, as a fraction of box size. In `[0, 1)`.
    pub box_jitter: f64,
    /// Miss probability at zero skill.
    pub miss_rate_at_floor: f64,
    /// Probability of one false-positive box per image at zero skill.
    pub false_positive_rate_at_floor: f64,
    /// Concentration of the class noise around uniform. Small values give
    /// peaked, often wrong noise; `f64::INFINITY` removes the noise.
    pub concentration: f64,
    pub seed: u64,
    /// Per-category skill from per-category labeled instance counts.
    pub class_conditional: bool,
    /// Class-conditional only: labeled instances at which a category
    /// reaches the ceiling, as a fraction of the mean instance count per
    /// category. In `(0, 1]`.
    pub class_saturation: f64,
    /// Image extent used to place false positives.
    pub canvas: (f64, f64),
}

impl Default for SynthDetectorParams {
    fn default() -> Self {
        Self {
            skill_floor: 0.05,
            skill_ceiling: 0.95,
            box_jitter: 0.3,
            miss_rate_at_floor: 0.4,
            false_positive_rate_at_floor: 0.1,
            concentration: 6.0,
            seed: 0,
            class_conditional: true,
            class_saturation: 0.25,
            canvas: (1000.0, 800.0),
        }
    }
}

impl SynthDetectorParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("skill_floor", self.skill_floor)?;
        unit("skill_ceiling", self.skill_ceiling)?;
        unit("miss_rate_at_floor", self.miss_rate_at_floor)?;
        unit("false_positive_rate_at_floor", self.false_positive_rate_at_floor)?;
        if self.skill_floor > self.skill_ceiling {
            return Err(Error::Config("skill_floor exceeds skill_ceiling".into()));
        }
        if !(0.0..1.0).contains(&self.box_jitter) {
            return Err(Error::Config(format!("box_jitter = {} outside [0, 1)", self.box_jitter)));
        }
        if !(self.class_saturation > 0.0 && self.class_saturation <= 1.0) {
            return Err(Error::Config(format!("class_saturation = {} outside (0, 1]", self.class_saturation)));
        }
        if self.concentration.is_nan() || self.concentration <= 0.0 {
            return Err(Error::Config("concentration must be positive".into()));
        }
        let (w, h) = self.canvas;
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(Error::Config("canvas must have positive finite size".into()));
        }
        Ok(())
    }
}

/// `floor + (ceiling - floor) * sqrt(n_labeled / n_total)`.
pub fn skill(n_labeled: usize, n_total: usize, params: &SynthDetectorParams) -> f64 {
    if n_total == 0 {
        return params.skill_floor;
    }
    let fraction = n_labeled.min(n_total) as f64 / n_total as f64;
    params.skill_floor + (params.skill_ceiling - params.skill_floor) * libm::sqrt(fraction)
}

/// Skill of the surrogate for one labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillProfile {
    /// Drives false positives.
    pub global: f64,
    /// Drives misses, jitter and class confusion of each category.
    pub per_class: Vec<f64>,
}

impl SkillProfile {
    pub fn uniform(skill: f64, n_classes: usize) -> Self {
        Self { global: skill, per_class: alloc::vec![skill; n_classes] }
    }

    /// Global skill follows the labeled fraction of images. Per-category
    /// skill follows labeled instances of that category against a common
    /// quota derived from the mean instance count per category, so rare
    /// categories stay weak unless their images are deliberately selected.
    pub fn for_labeled(labeled: &LabeledSet, train: &DatasetIndex, params: &SynthDetectorParams) -> Self {
        let d = train.n_classes();
        let global = skill(labeled.len(), train.len(), params);
        if !params.class_conditional {
            return Self::uniform(global, d);
        }
        let total: usize = train.class_counts().iter().sum();
        let quota = libm::ceil(total as f64 / d as f64 * params.class_saturation).max(1.0) as usize;
        let per_class = labeled.class_counts(d).into_iter().map(|n| skill(n, quota, params)).collect();
        Self { global, per_class }
    }
}

// Standard logistic draw from an open-interval uniform.
fn logistic<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    libm::log(u / (1.0 - u))
}

fn signed<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    2.0 * rng.random::<f64>() - 1.0
}

fn class_noise<R: RngCore + ?Sized>(rng: &mut R, n_classes: usize) -> Vec<f64> {
    (0..n_classes).map(|_| logistic(rng)).collect()
}

/// `weight * onehot(class) + (1 - weight) * softmax(noise / sqrt(concentration))`.
/// Without a class the result is pure noise.
fn blend(class: Option<usize>, weight: f64, noise: &[f64], concentration: f64) -> Result<ClassDistribution> {
    let scale = if concentration.is_infinite() { 0.0 } else { 1.0 / libm::sqrt(concentration) };
    let top = noise.iter().map(|z| z * scale).fold(f64::NEG_INFINITY, f64::max);
    let expd: Vec<f64> = noise.iter().map(|z| libm::exp(z * scale - top)).collect();
    let norm: f64 = expd.iter().sum();
    let weight = if class.is_some() { weight.clamp(0.0, 1.0) } else { 0.0 };
    let probs = expd
        .iter()
        .enumerate()
        .map(|(d, e)| {
            let hot = if class == Some(d) { 1.0 } else { 0.0 };
            (weight * hot + (1.0 - weight) * e / norm).clamp(0.0, 1.0)
        })
        .collect();
    ClassDistribution::new(probs)
}

/// Surrogate prediction for one image.
pub fn synth_predict<R: RngCore + ?Sized>(
    image: &GroundTruthAnnotation,
    profile: &SkillProfile,
    params: &SynthDetectorParams,
    rng: &mut R,
) -> Result<ImagePrediction> {
    let d = profile.per_class.len();
    let mut detections = Vec::with_capacity(image.boxes.len() + 1);
    for gt in &image.boxes {
        let s = *profile
            .per_class
            .get(gt.category)
            .ok_or_else(|| Error::Validation(format!("image_id {}: category out of range", image.image_id)))?;
        let u_miss = rng.random::<f64>();
        let (sx, sy, sw, sh) = (signed(rng), signed(rng), signed(rng), signed(rng));
        let noise = class_noise(rng, d);
        if u_miss < params.miss_rate_at_floor * (1.0 - s) {
            continue;
        }
        let a = params.box_jitter * (1.0 - s);
        let g = gt.geometry;
        let (w, h) = (g.width(), g.height());
        let (dx, dy, dw, dh) = (sx * a * w, sy * a * h, sw * a * w, sh * a * h);
        let geometry =
            BoxGeometry::new(g.x_min + dx - dw / 2.0, g.y_min + dy - dh / 2.0, g.x_max + dx + dw / 2.0, g.y_max + dy + dh / 2.0)?;
        detections.push(Detection::new(geometry, blend(Some(gt.category), s, &noise, params.concentration)?));
    }

    let u_fp = rng.random::<f64>();
    let (ux, uy, uw, uh) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
    let noise = class_noise(rng, d);
    if u_fp < params.false_positive_rate_at_floor * (1.0 - profile.global) {
        let (cw, ch) = params.canvas;
        let w = (20.0 + 180.0 * uw).min(cw);
        let h = (20.0 + 180.0 * uh).min(ch);
        let (x, y) = (ux * (cw - w), uy * (ch - h));
        let geometry = BoxGeometry::new(x, y, x + w, y + h)?;
        detections.push(Detection::new(geometry, blend(None, 0.0, &noise, params.concentration)?));
    }
    Ok(ImagePrediction::new(image.image_id.clone(), detections))
}

/// In-process surrogate detector implementing the adapter contract.
#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    params: SynthDetectorParams,
}

impl SyntheticDetector {
    pub fn new(params: SynthDetectorParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &SynthDetectorParams {
        &self.params
    }

    fn predict_split(
        &self,
        ids: &[ImageId],
        index: &DatasetIndex,
        profile: &SkillProfile,
        stream: &SeedStream,
    ) -> Result<Vec<ImagePrediction>> {
        ids.iter()
            .map(|id| {
                let ann = index.annotation(id).ok_or_else(|| Error::Validation(format!("unknown image_id {id}")))?;
                synth_predict(&ann, profile, &self.params, &mut stream.rng_for(id))
            })
            .collect()
    }
}

impl DetectorAdapter for SyntheticDetector {
    fn predict(&mut self, request: &CycleRequest<'_>) -> Result<AdapterOutput> {
        let profile = SkillProfile::for_labeled(request.labeled, request.train, &self.params);
        let stream = SeedStream::new(self.params.seed).child(request.labeled.len() as u64);
        Ok(AdapterOutput {
            pool: self.predict_split(request.pool, request.train, &profile, &stream.labeled("pool"))?,
            validation: self.predict_split(
                request.validation.images(),
                request.validation,
                &profile,
                &stream.labeled("validation"),
            )?,
        })
    }
}

/// Parameters of a synthetic ground-truth dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataSpec {
    pub n_images: usize,
    pub n_classes: usize,
    /// Relative category frequencies; geometric with ratio 0.4 when empty.
    pub class_weights: Vec<f64>,
    pub min_objects: usize,
    pub max_objects: usize,
    pub canvas: (f64, f64),
    pub seed: u64,
    pub id_prefix: String,
}

impl SyntheticDataSpec {
    pub fn new(n_images: usize, n_classes: usize, seed: u64, id_prefix: impl Into<String>) -> Self {
        Self {
            n_images,
            n_classes,
            class_weights: Vec::new(),
            min_objects: 1,
            max_objects: 8,
            canvas: (1000.0, 800.0),
            seed,
            id_prefix: id_prefix.into(),
        }
    }

    fn weights(&self) -> Result<Vec<f64>> {
        let raw: Vec<f64> = if self.class_weights.is_empty() {
            (0..self.n_classes).map(|c| libm::pow(0.4, c as f64)).collect()
        } else {
            self.class_weights.clone()
        };
        if raw.len() != self.n_classes || raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("class weights must be D non-negative numbers".into()));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::Config("class weights sum to zero".into()));
        }
        Ok(raw.iter().map(|w| w / total).collect())
    }

    pub fn generate(&self) -> Result<DatasetIndex> {
        if self.n_classes == 0 || self.min_objects > self.max_objects {
            return Err(Error::Config("synthetic dataset needs D >= 1 and min_objects <= max_objects".into()));
        }
        let (cw, ch) = self.canvas;
        if !(cw > 60.0 && ch > 60.0) {
            return Err(Error::Config("synthetic canvas must exceed 60 x 60".into()));
        }
        let weights = self.weights()?;
        let categories = CategorySet::new((0..self.n_classes).map(|c| format!("class_{c}")).collect())?;
        let stream = SeedStream::new(self.seed).labeled("dataset");
        let mut images = Vec::with_capacity(self.n_images);
        let mut annotations = Vec::with_capacity(self.n_images);
        for i in 0..self.n_images {
            let id = ImageId::new(format!("{}{i:05}", self.id_prefix));
            let mut rng = stream.rng_for(&id);
            let n = rng.random_range(self.min_objects..=self.max_objects);
            let boxes = (0..n)
                .map(|_| {
                    let mut u = rng.random::<f64>();
                    let category = weights
                        .iter()
                        .position(|w| {
                            u -= w;
                            u < 0.0
                        })
                        .unwrap_or(self.n_classes - 1);
                    let w = (30.0 + 220.0 * rng.random::<f64>()).min(cw / 2.0);
                    let h = (30.0 + 220.0 * rng.random::<f64>()).min(ch / 2.0);
                    let x = rng.random::<f64>() * (cw - w);
                    let y = rng.random::<f64>() * (ch - h);
                    Ok(GroundTruthBox { geometry: BoxGeometry::new(x, y, x + w, y + h)?, category })
                })
                .collect::<Result<Vec<_>>>()?;
            annotations.push(GroundTruthAnnotation::new(id.clone(), boxes));
            images.push(id);
        }
        DatasetIndex::new(categories, images, annotations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{evaluate, ApInterpolation};
    use crate::scoring::{entropy_score, margin_score};

    fn params() -> SynthDetectorParams {
        SynthDetectorParams { skill_floor: 0.2, skill_ceiling: 0.8, ..SynthDetectorParams::default() }
    }

    #[test]
    fn skill_curve() {
        let p = params();
        assert_eq!(skill(0, 100, &p), 0.2);
        assert!((skill(100, 100, &p) - 0.8).abs() < 1e-12);
        assert!((skill(25, 100, &p) - 0.5).abs() < 1e-12);
        let mut last = 0.0;
        for n in 0..=100 {
            let s = skill(n, 100, &p);
            assert!(s >= last);
            last = s;
        }
    }

    #[test]
    fn perfect_skill_reproduces_ground_truth() {
        let data = SyntheticDataSpec::new(20, 4, 1, "img_").generate().unwrap();
        let p = SynthDetectorParams { box_jitter: 0.0, ..SynthDetectorParams::default() };
        let profile = SkillProfile::uniform(1.0, 4);
        for ann in data.annotations() {
            let pred = synth_predict(&ann, &profile, &p, &mut SeedStream::new(5).rng_for(&ann.image_id)).unwrap();
            assert_eq!(pred.detections.len(), ann.boxes.len());
            for (det, gt) in pred.detections.iter().zip(&ann.boxes) {
                assert_eq!(det.geometry, gt.geometry);
                assert_eq!(det.predicted_class(), gt.category);
                assert!(det.confidence() > 0.999);
            }
        }
    }

    #[test]
    fn zero_skill_without_noise_is_uniform() {
        let data = SyntheticDataSpec::new(20, 3, 2, "img_").generate().unwrap();
        let p = SynthDetectorParams { concentration: f64::INFINITY, ..SynthDetectorParams::default() };
        let profile = SkillProfile::uniform(0.0, 3);
        let mut seen = 0;
        for ann in data.annotations() {
            let pred = synth_predict(&ann, &profile, &p, &mut SeedStream::new(5).rng_for(&ann.image_id)).unwrap();
            for det in &pred.detections {
                assert!((entropy_score(&det.distribution).unwrap() - 1.0).abs() < 1e-12);
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn predictions_are_deterministic() {
        let data = SyntheticDataSpec::new(5, 3, 2, "img_").generate().unwrap();
        let ann = data.annotation(&"img_00003".into()).unwrap();
        let profile = SkillProfile::uniform(0.4, 3);
        let run = || synth_predict(&ann, &profile, &params(), &mut SeedStream::new(9).rng_for(&ann.image_id)).unwrap();
        assert_eq!(run(), run());
        assert_eq!(data, SyntheticDataSpec::new(5, 3, 2, "img_").generate().unwrap());
    }

    fn mean_over_seeds(skill_level: f64, f: impl Fn(&[ImagePrediction], &DatasetIndex) -> f64) -> f64 {
        let data = SyntheticDataSpec::new(80, 4, 17, "v").generate().unwrap();
        let profile = SkillProfile::uniform(skill_level, 4);
        let p = SynthDetectorParams::default();
        (0..5u64)
            .map(|seed| {
                let stream = SeedStream::new(seed);
                let preds: Vec<ImagePrediction> = data
                    .annotations()
                    .map(|ann| synth_predict(&ann, &profile, &p, &mut stream.rng_for(&ann.image_id)).unwrap())
                    .collect();
                f(&preds, &data)
            })
            .sum::<f64>()
            / 5.0
    }

    #[test]
    fn map_rises_and_margin_falls_with_skill() {
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let maps: Vec<f64> = grid
            .iter()
            .map(|&s| {
                mean_over_seeds(s, |preds, data| evaluate(data, preds, 0.5, ApInterpolation::AllPoints).unwrap().map)
            })
            .collect();
        let margins: Vec<f64> = grid
            .iter()
            .map(|&s| {
                mean_over_seeds(s, |preds, _| {
                    let all: Vec<f64> = preds
                        .iter()
                        .flat_map(|p| p.detections.iter().map(|d| margin_score(&d.distribution).unwrap()))
                        .collect();
                    all.iter().sum::<f64>() / all.len().max(1) as f64
                })
            })
            .collect();
        for w in maps.windows(2) {
            assert!(w[1] >= w[0] - 0.02, "{maps:?}");
        }
        for w in margins.windows(2) {
            assert!(w[1] <= w[0] + 0.02, "{margins:?}");
        }
        assert!(maps[4] > 0.99, "{maps:?}");
    }

    #[test]
    fn emitted_distributions_lie_on_the_simplex() {
        let data = SyntheticDataSpec::new(30, 6, 3, "i").generate().unwrap();
        let profile = SkillProfile::uniform(0.3, 6);
        for ann in data.annotations() {
            let pred = synth_predict(&ann, &profile, &params(), &mut SeedStream::new(1).rng_for(&ann.image_id)).unwrap();
            for det in pred.detections {
                let sum: f64 = det.distribution.probs().iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
                assert!(det.distribution.probs().iter().all(|p| (0.0..=1.0).contains(p)));
            }
        }
    }

    #[test]
    fn class_conditional_profile_tracks_labeled_instances() {
        let train = SyntheticDataSpec::new(100, 3, 4, "t").generate().unwrap();
        let mut labeled = LabeledSet::new();
        let p = SynthDetectorParams::default();
        let before = SkillProfile::for_labeled(&labeled, &train, &p);
        assert!(before.per_class.iter().all(|&s| s == p.skill_floor));
        for id in train.images().iter().take(30) {
            labeled.insert(train.annotation(id).unwrap()).unwrap();
        }
        let after = SkillProfile::for_labeled(&labeled, &train, &p);
        assert!(after.per_class.iter().all(|&s| s > p.skill_floor));
        // the most frequent class has the most labeled instances
        assert!(after.per_class[0] > after.per_class[2]);
        let flat = SkillProfile::for_labeled(&labeled, &train, &SynthDetectorParams { class_conditional: false, ..p });
        assert!(flat.per_class.iter().all(|&s| s == flat.global));
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = SynthDetectorParams { skill_floor: 0.9, skill_ceiling: 0.1, ..SynthDetectorParams::default() };
        assert!(bad.validate().is_err());
        let bad = SynthDetectorParams { box_jitter: 1.0, ..SynthDetectorParams::default() };
        assert!(SyntheticDetector::new(bad).is_err());
    }
}
