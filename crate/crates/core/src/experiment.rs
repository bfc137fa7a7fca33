//! Pool-based active-learning cycles with a ground-truth oracle.
//!
//! Per cycle `l` (starting at 1): predict the unlabeled pool, score and rank
//! it, hand the top `10 l + 10` images to the oracle, then evaluate the
//! detector trained on the grown labeled set on the validation split.
//!
//! The detector sits behind [`DetectorAdapter`]. It is asked once for the
//! initial labeled set and once after every cycle; the predictions made after
//! cycle `l` provide both the mAP recorded for cycle `l` and the pool scores
//! used to select in cycle `l + 1`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::accumulate::{rank, score_pool, AccumulatorKind, SelectionPolicy};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ApInterpolation, DEFAULT_IOU_THRESHOLD};
use crate::scoring::ScorerKind;
use crate::seed::SeedStream;
use crate::summary::ReportRow;
use crate::types::{DatasetIndex, GroundTruthAnnotation, ImageId, ImagePrediction};

/// Number of images selected in cycle `cycle`: `10 * cycle + 10`.
pub fn schedule(cycle: usize) -> Result<usize> {
    if cycle < 1 {
        return Err(Error::Domain("cycle index starts at 1".into()));
    }
    Ok(10 * cycle + 10)
}

/// Images annotated so far, in the order they were labeled.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledSet {
    order: Vec<ImageId>,
    annotations: BTreeMap<ImageId, GroundTruthAnnotation>,
}

impl LabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, id: &ImageId) -> bool {
        self.annotations.contains_key(id)
    }

    pub fn ids(&self) -> &[ImageId] {
        &self.order
    }

    pub fn annotations(&self) -> impl Iterator<Item = &GroundTruthAnnotation> + '_ {
        self.order.iter().map(move |id| &self.annotations[id])
    }

    pub fn insert(&mut self, annotation: GroundTruthAnnotation) -> Result<()> {
        if self.contains(&annotation.image_id) {
            return Err(Error::Protocol(format!("image_id {} is already labeled", annotation.image_id)));
        }
        self.order.push(annotation.image_id.clone());
        self.annotations.insert(annotation.image_id.clone(), annotation);
        Ok(())
    }

    /// Labeled instances per category.
    pub fn class_counts(&self, n_classes: usize) -> Vec<usize> {
        let mut counts = alloc::vec![0; n_classes];
        for b in self.annotations.values().flat_map(|a| &a.boxes) {
            if let Some(c) = counts.get_mut(b.category) {
                *c += 1;
            }
        }
        counts
    }
}

/// The oracle: complete and exact ground truth for every requested image.
pub fn oracle_label(ids: &[ImageId], index: &DatasetIndex, labeled: &LabeledSet) -> Result<Vec<GroundTruthAnnotation>> {
    let mut seen = BTreeSet::new();
    ids.iter()
        .map(|id| {
            if labeled.contains(id) || !seen.insert(id) {
                return Err(Error::Protocol(format!("image_id {id} was already labeled")));
            }
            index.annotation(id).ok_or_else(|| Error::Validation(format!("unknown image_id {id}")))
        })
        .collect()
}

/// What a detector adapter is asked to predict.
#[derive(Debug, Clone, Copy)]
pub struct CycleRequest<'a> {
    pub seed: u64,
    /// Cycles completed when `labeled` was formed; 0 for the initial set.
    pub cycle: usize,
    pub labeled: &'a LabeledSet,
    pub pool: &'a [ImageId],
    pub train: &'a DatasetIndex,
    pub validation: &'a DatasetIndex,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdapterOutput {
    /// One record per pool image.
    pub pool: Vec<ImagePrediction>,
    /// One record per validation image.
    pub validation: Vec<ImagePrediction>,
}

/// A detector trained on the labeled set, applied to the pool and the
/// validation split.
pub trait DetectorAdapter {
    fn predict(&mut self, request: &CycleRequest<'_>) -> Result<AdapterOutput>;
}

impl<A: DetectorAdapter + ?Sized> DetectorAdapter for &mut A {
    fn predict(&mut self, request: &CycleRequest<'_>) -> Result<AdapterOutput> {
        (**self).predict(request)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub policy: SelectionPolicy,
    pub initial_size: usize,
    pub cycles: usize,
    pub seeds: Vec<u64>,
    pub iou_threshold: f64,
    pub interpolation: ApInterpolation,
}

impl ExperimentConfig {
    pub const DEFAULT_INITIAL_SIZE: usize = 10;
    pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

    pub fn new(scorer: ScorerKind, accumulator: AccumulatorKind, cycles: usize) -> Self {
        Self {
            policy: SelectionPolicy::new(scorer, accumulator),
            initial_size: Self::DEFAULT_INITIAL_SIZE,
            cycles,
            seeds: Self::DEFAULT_SEEDS.to_vec(),
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            interpolation: ApInterpolation::AllPoints,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_size < 1 {
            return Err(Error::Config("initial_size must be at least 1".into()));
        }
        if self.cycles < 1 {
            return Err(Error::Config("cycles must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!("IoU threshold {} outside (0, 1]", self.iou_threshold)));
        }
        self.policy.validate()
    }

    /// Checks that the two splits can be used with this configuration.
    pub fn check_splits(&self, train: &DatasetIndex, validation: &DatasetIndex) -> Result<()> {
        if train.categories() != validation.categories() {
            return Err(Error::Config("training and validation splits use different category sets".into()));
        }
        if self.policy.scorer.is_deterministic() && train.n_classes() < 2 {
            return Err(Error::Config(format!("{} scoring needs at least two categories", self.policy.scorer)));
        }
        if train.len() < self.initial_size {
            return Err(Error::Config(format!(
                "dataset has {} images, fewer than the initial labeled set of {}",
                train.len(),
                self.initial_size
            )));
        }
        if validation.class_counts().iter().all(|&c| c == 0) {
            return Err(Error::Config("validation split has no ground-truth boxes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub seed: u64,
    pub cycle: usize,
    pub scorer: ScorerKind,
    pub accumulator: AccumulatorKind,
    /// `L` from the schedule.
    pub requested: usize,
    /// Images handed to the oracle, in rank order. Fewer than `requested`
    /// only when the pool ran out.
    pub selected: Vec<ImageId>,
    /// Labeled-set size after this cycle.
    pub n_labeled: usize,
    pub map: f64,
}

impl CycleRecord {
    pub fn row(&self) -> ReportRow {
        ReportRow {
            seed: self.seed,
            cycle: self.cycle,
            n_labeled: self.n_labeled,
            scorer: self.scorer,
            accumulator: self.accumulator,
            map: self.map,
        }
    }
}

/// State of one repetition between cycles.
#[derive(Debug, Clone)]
pub struct ExperimentState {
    seed: u64,
    stream: SeedStream,
    completed: usize,
    labeled: LabeledSet,
    pool: Vec<ImageId>,
    current: Option<AdapterOutput>,
}

impl ExperimentState {
    /// Labels `initial_size` images drawn uniformly without replacement;
    /// the draw depends on `seed` only.
    pub fn initial(train: &DatasetIndex, seed: u64, initial_size: usize) -> Result<Self> {
        if initial_size < 1 || train.len() < initial_size {
            return Err(Error::Config(format!(
                "cannot draw an initial labeled set of {initial_size} from {} images",
                train.len()
            )));
        }
        let stream = SeedStream::new(seed);
        let mut ids = train.images().to_vec();
        let (chosen, _) = ids.partial_shuffle(&mut stream.labeled("initial-set").rng(), initial_size);
        let chosen = chosen.to_vec();
        let mut labeled = LabeledSet::new();
        for ann in oracle_label(&chosen, train, &labeled)? {
            labeled.insert(ann)?;
        }
        let pool = train.images().iter().filter(|id| !labeled.contains(id)).cloned().collect();
        Ok(Self { seed, stream, completed: 0, labeled, pool, current: None })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn completed_cycles(&self) -> usize {
        self.completed
    }

    pub fn labeled(&self) -> &LabeledSet {
        &self.labeled
    }

    /// Unlabeled images in dataset order.
    pub fn pool(&self) -> &[ImageId] {
        &self.pool
    }

    pub fn is_exhausted(&self) -> bool {
        self.pool.is_empty()
    }

    fn request<'a>(&'a self, train: &'a DatasetIndex, validation: &'a DatasetIndex) -> CycleRequest<'a> {
        CycleRequest {
            seed: self.seed,
            cycle: self.completed,
            labeled: &self.labeled,
            pool: &self.pool,
            train,
            validation,
        }
    }
}

fn describe_missing(missing: &[&ImageId]) -> String {
    const SHOWN: usize = 10;
    let mut s = missing.iter().take(SHOWN).map(|id| id.as_str()).collect::<Vec<_>>().join(", ");
    if missing.len() > SHOWN {
        s.push_str(&format!(" and {} more", missing.len() - SHOWN));
    }
    s
}

/// Picks exactly one prediction per id in `ids`, in that order.
fn cover(ids: &[ImageId], preds: Vec<ImagePrediction>, what: &str) -> Result<Vec<ImagePrediction>> {
    let wanted: BTreeSet<&ImageId> = ids.iter().collect();
    let mut by_id: BTreeMap<ImageId, ImagePrediction> = BTreeMap::new();
    for p in preds {
        if !wanted.contains(&p.image_id) {
            continue;
        }
        if by_id.contains_key(&p.image_id) {
            return Err(Error::Protocol(format!("adapter returned two {what} predictions for image_id {}", p.image_id)));
        }
        by_id.insert(p.image_id.clone(), p);
    }
    let missing: Vec<&ImageId> = ids.iter().filter(|id| !by_id.contains_key(*id)).collect();
    if !missing.is_empty() {
        return Err(Error::Protocol(format!(
            "adapter is missing {} {what} predictions: {}",
            missing.len(),
            describe_missing(&missing)
        )));
    }
    Ok(ids.iter().map(|id| by_id.remove(id).expect("coverage checked")).collect())
}

fn invoke<A: DetectorAdapter + ?Sized>(
    adapter: &mut A,
    state: &ExperimentState,
    train: &DatasetIndex,
    validation: &DatasetIndex,
) -> Result<AdapterOutput> {
    let out = adapter.predict(&state.request(train, validation))?;
    for p in out.pool.iter().chain(&out.validation) {
        let index = if train.contains(&p.image_id) { train } else { validation };
        index.check_prediction(p)?;
    }
    Ok(AdapterOutput {
        pool: cover(&state.pool, out.pool, "pool")?,
        validation: cover(validation.images(), out.validation, "validation")?,
    })
}

/// Runs the next cycle. Returns `None` without doing anything when the pool
/// is already empty.
pub fn run_cycle<A: DetectorAdapter + ?Sized>(
    state: &mut ExperimentState,
    config: &ExperimentConfig,
    train: &DatasetIndex,
    validation: &DatasetIndex,
    adapter: &mut A,
) -> Result<Option<CycleRecord>> {
    if state.is_exhausted() {
        return Ok(None);
    }
    let cycle = state.completed + 1;
    let current = match state.current.take() {
        Some(out) => out,
        None => invoke(adapter, state, train, validation)?,
    };

    let scores = score_pool(&current.pool, &config.policy, &state.stream.child(cycle as u64))?;
    let ranked = rank(scores)?;
    let requested = schedule(cycle)?;
    let selected = ranked.select_top(requested)?;

    for ann in oracle_label(&selected, train, &state.labeled)? {
        state.labeled.insert(ann)?;
    }
    let labeled = &state.labeled;
    state.pool.retain(|id| !labeled.contains(id));
    state.completed = cycle;

    let next = invoke(adapter, state, train, validation)?;
    let evaluation = evaluate(validation, &next.validation, config.iou_threshold, config.interpolation)?;
    state.current = Some(next);

    Ok(Some(CycleRecord {
        seed: state.seed,
        cycle,
        scorer: config.policy.scorer,
        accumulator: config.policy.accumulator,
        requested,
        selected,
        n_labeled: state.labeled.len(),
        map: evaluation.map,
    }))
}

/// All repetitions of one configuration. Each seed runs up to
/// `config.cycles` cycles and stops early once the pool is exhausted.
pub fn run_experiment<A: DetectorAdapter + ?Sized>(
    config: &ExperimentConfig,
    train: &DatasetIndex,
    validation: &DatasetIndex,
    adapter: &mut A,
) -> Result<Vec<CycleRecord>> {
    config.validate()?;
    config.check_splits(train, validation)?;
    let mut records = Vec::with_capacity(config.seeds.len() * config.cycles);
    for &seed in &config.seeds {
        let mut state = ExperimentState::initial(train, seed, config.initial_size)?;
        for _ in 0..config.cycles {
            match run_cycle(&mut state, config, train, validation, adapter)? {
                Some(record) => records.push(record),
                None => break,
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BoxGeometry, CategorySet, ClassDistribution, Detection, GroundTruthBox};
    use alloc::string::ToString;
    use alloc::vec;

    fn index(prefix: &str, n: usize, objects: impl Fn(usize) -> usize) -> DatasetIndex {
        let cats = CategorySet::new(vec!["a".into(), "b".into()]).unwrap();
        let images: Vec<ImageId> = (0..n).map(|i| format!("{prefix}{i:03}").into()).collect();
        let anns = images
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let boxes = (0..objects(i))
                    .map(|k| GroundTruthBox {
                        geometry: BoxGeometry::new(20.0 * k as f64, 0.0, 20.0 * k as f64 + 10.0, 10.0).unwrap(),
                        category: (i + k) % 2,
                    })
                    .collect();
                GroundTruthAnnotation::new(id.clone(), boxes)
            })
            .collect();
        DatasetIndex::new(cats, images, anns).unwrap()
    }

    /// Emits ground truth with a fixed, image-dependent class confusion.
    struct Replay;

    impl Replay {
        fn predict_index(index: &DatasetIndex, ids: &[ImageId]) -> Vec<ImagePrediction> {
            ids.iter()
                .map(|id| {
                    let n: usize = id.as_str()[1..].parse().unwrap_or(0);
                    let confusion = (n % 7) as f64 / 20.0;
                    let dets = index
                        .boxes(id)
                        .iter()
                        .map(|b| {
                            let mut p = vec![confusion; 2];
                            p[b.category] = 1.0 - confusion;
                            Detection::new(b.geometry, ClassDistribution::new(p).unwrap())
                        })
                        .collect();
                    ImagePrediction::new(id.clone(), dets)
                })
                .collect()
        }
    }

    impl DetectorAdapter for Replay {
        fn predict(&mut self, r: &CycleRequest<'_>) -> Result<AdapterOutput> {
            Ok(AdapterOutput {
                pool: Self::predict_index(r.train, r.pool),
                validation: Self::predict_index(r.validation, r.validation.images()),
            })
        }
    }

    struct Forgetful;

    impl DetectorAdapter for Forgetful {
        fn predict(&mut self, r: &CycleRequest<'_>) -> Result<AdapterOutput> {
            let mut out = Replay.predict(r)?;
            out.pool.retain(|p| p.image_id != r.pool[0]);
            Ok(out)
        }
    }

    #[test]
    fn schedule_values() {
        assert_eq!(schedule(1).unwrap(), 20);
        assert_eq!(schedule(3).unwrap(), 40);
        assert_eq!(schedule(10).unwrap(), 110);
        assert!(schedule(0).is_err());
    }

    #[test]
    fn oracle_is_identity_on_ground_truth() {
        let train = index("t", 5, |_| 4);
        let mut labeled = LabeledSet::new();
        let anns = oracle_label(&["t001".into()], &train, &labeled).unwrap();
        assert_eq!(anns[0].boxes.len(), 4);
        assert_eq!(anns[0].boxes, train.boxes(&"t001".into()));
        assert!(oracle_label(&[], &train, &labeled).unwrap().is_empty());
        labeled.insert(anns[0].clone()).unwrap();
        assert!(matches!(oracle_label(&["t001".into()], &train, &labeled), Err(Error::Protocol(_))));
        assert!(matches!(oracle_label(&["zzz".into()], &train, &labeled), Err(Error::Validation(_))));
    }

    #[test]
    fn cycle_moves_twenty_images() {
        let (train, val) = (index("t", 60, |i| 1 + i % 3), index("v", 10, |_| 2));
        let config = ExperimentConfig::new(ScorerKind::Margin, AccumulatorKind::Max, 1);
        let mut state = ExperimentState::initial(&train, 0, 10).unwrap();
        assert_eq!(state.pool().len(), 50);
        let record = run_cycle(&mut state, &config, &train, &val, &mut Replay).unwrap().unwrap();
        assert_eq!(record.selected.len(), 20);
        assert_eq!(record.n_labeled, 30);
        assert_eq!(state.pool().len() + state.labeled().len(), train.len());
        assert!((0.0..=1.0).contains(&record.map));
    }

    #[test]
    fn exhaustion_clamps_and_stops() {
        let (train, val) = (index("t", 25, |_| 1), index("v", 5, |_| 1));
        let config = ExperimentConfig::new(ScorerKind::Entropy, AccumulatorKind::Sum, 3);
        let mut state = ExperimentState::initial(&train, 1, 10).unwrap();
        let record = run_cycle(&mut state, &config, &train, &val, &mut Replay).unwrap().unwrap();
        assert_eq!((record.requested, record.selected.len(), record.n_labeled), (20, 15, 25));
        assert!(state.is_exhausted());
        assert!(run_cycle(&mut state, &config, &train, &val, &mut Replay).unwrap().is_none());
    }

    #[test]
    fn missing_predictions_are_reported() {
        let (train, val) = (index("t", 30, |_| 1), index("v", 5, |_| 1));
        let config = ExperimentConfig::new(ScorerKind::Margin, AccumulatorKind::Mean, 1);
        let mut state = ExperimentState::initial(&train, 0, 10).unwrap();
        let dropped = state.pool()[0].to_string();
        let err = run_cycle(&mut state, &config, &train, &val, &mut Forgetful).unwrap_err();
        assert!(matches!(&err, Error::Protocol(m) if m.contains(&dropped)), "{err}");
    }

    #[test]
    fn labeled_count_follows_the_schedule() {
        let (train, val) = (index("t", 200, |i| i % 4), index("v", 10, |_| 2));
        let mut config = ExperimentConfig::new(ScorerKind::Variance, AccumulatorKind::Mean, 4);
        config.seeds = vec![3, 9];
        let records = run_experiment(&config, &train, &val, &mut Replay).unwrap();
        let sizes: Vec<usize> = records.iter().map(|r| r.n_labeled).collect();
        assert_eq!(sizes, [30, 60, 100, 150, 30, 60, 100, 150]);
        assert_eq!(records, run_experiment(&config, &train, &val, &mut Replay).unwrap());
    }

    #[test]
    fn configuration_errors() {
        let (train, val) = (index("t", 5, |_| 1), index("v", 5, |_| 1));
        let config = ExperimentConfig::new(ScorerKind::Margin, AccumulatorKind::Max, 1);
        assert!(matches!(run_experiment(&config, &train, &val, &mut Replay), Err(Error::Config(_))));
        let mut bad = config.clone();
        bad.seeds.clear();
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        bad = config.clone();
        bad.cycles = 0;
        assert!(bad.validate().is_err());
        let empty_val = index("v", 3, |_| 0);
        let train = index("t", 30, |_| 1);
        assert!(run_experiment(&config, &train, &empty_val, &mut Replay).is_err());
    }
}
