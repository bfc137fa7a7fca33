//! Command-line interface.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use zcal_core::{
    rank, schedule, score_pool, summarize, AccumulatorKind, ApInterpolation, CycleRecord, DatasetIndex,
    ExperimentConfig, ImageId, ImagePrediction, LabeledSet, RankedPool, ReportRow, ScorerKind, SeedStream,
    SelectionPolicy, SynthDetectorParams, SyntheticDataSpec, SyntheticDetector,
};

use crate::adapter::{synth_detect_in_dir, ExternalAdapter};
use crate::config::FileConfig;
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Parser)]
#[command(name = "zcal", version, about = "Zero-cost active learning for object detection")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Ground-truth JSON of the training pool.
    #[arg(long, global = true)]
    pub gt: Option<PathBuf>,
    /// Ground-truth JSON of the validation split.
    #[arg(long, global = true)]
    pub val_gt: Option<PathBuf>,
    /// Predictions, JSON lines.
    #[arg(long, global = true)]
    pub pred: Option<PathBuf>,
    /// margin, variance, entropy or random.
    #[arg(long, global = true, value_parser = parse_scorer)]
    pub scorer: Option<ScorerKind>,
    /// mean, sum or max.
    #[arg(long, global = true, value_parser = parse_accumulator)]
    pub accumulator: Option<AccumulatorKind>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated repetition seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    pub cycles: Option<usize>,
    #[arg(long, global = true)]
    pub initial_size: Option<usize>,
    #[arg(long, global = true)]
    pub iou: Option<f64>,
    #[arg(long, global = true)]
    pub confidence_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub empty_image_score: Option<f64>,
    /// all-points or 11-point.
    #[arg(long, global = true, value_parser = parse_interpolation)]
    pub interpolation: Option<ApInterpolation>,
    /// Output file, or directory for `simulate` and `gen-data`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

fn parse_scorer(s: &str) -> std::result::Result<ScorerKind, String> {
    s.parse().map_err(|e: zcal_core::Error| e.to_string())
}

fn parse_accumulator(s: &str) -> std::result::Result<AccumulatorKind, String> {
    s.parse().map_err(|e: zcal_core::Error| e.to_string())
}

fn parse_interpolation(s: &str) -> std::result::Result<ApInterpolation, String> {
    s.parse().map_err(|e: zcal_core::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every image of --gt from --pred; prints the ranking.
    Score(ScoreArgs),
    /// Rank the unlabeled pool and print the images to label next.
    Rank(RankArgs),
    /// One manual cycle: select, label from ground truth, write the labeled set.
    Cycle(CycleArgs),
    /// Run the active-learning loop and write report.csv and summary.csv.
    Simulate(SimulateArgs),
    /// Per-class AP and mAP of --pred against --gt.
    Eval,
    /// Summarize a report CSV over seeds.
    Report(ReportArgs),
    /// Synthetic detector speaking the file protocol.
    SynthDetect(SynthDetectArgs),
    /// Write a synthetic dataset (train.json, val.json).
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Cycle whose random stream is used by the random scorer.
    #[arg(long, default_value_t = 1)]
    pub cycle: usize,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Already labeled images (ground-truth schema); excluded from the pool.
    #[arg(long)]
    pub labeled: Option<PathBuf>,
    /// Number of images to select.
    #[arg(long, conflicts_with = "cycle")]
    pub top: Option<usize>,
    /// Select as many images as this cycle's schedule asks for.
    #[arg(long)]
    pub cycle: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CycleArgs {
    #[arg(long)]
    pub labeled: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub cycle: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// synthetic or external.
    #[arg(long)]
    pub detector: Option<String>,
    /// External detector command; the work directory is appended.
    #[arg(long)]
    pub detector_command: Option<String>,
    /// Work directory of the external detector [default: <out>/adapter].
    #[arg(long)]
    pub workdir: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthDetectArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Directory holding labeled.json and pool.txt.
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub skill_floor: Option<f64>,
    #[arg(long)]
    pub skill_ceiling: Option<f64>,
    #[arg(long)]
    pub box_jitter: Option<f64>,
    #[arg(long)]
    pub miss_rate: Option<f64>,
    #[arg(long)]
    pub false_positive_rate: Option<f64>,
    #[arg(long)]
    pub concentration: Option<f64>,
    #[arg(long)]
    pub detector_seed: Option<u64>,
    #[arg(long)]
    pub class_conditional: Option<bool>,
    #[arg(long)]
    pub class_saturation: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Generate a synthetic training pool of this many images.
    #[arg(long)]
    pub synthetic_images: Option<usize>,
    #[arg(long)]
    pub synthetic_val_images: Option<usize>,
    #[arg(long)]
    pub synthetic_classes: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
}

/// Flags merged over the configuration file.
struct Settings {
    g: GlobalArgs,
    file: FileConfig,
}

impl Settings {
    fn new(g: GlobalArgs) -> Result<Self> {
        let file = match &g.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Ok(Self { g, file })
    }

    fn path(&self, flag: &Option<PathBuf>, key: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        flag.clone().or_else(|| key.clone()).ok_or_else(|| Error::Usage(format!("--{name} is required")))
    }

    fn gt(&self) -> Result<PathBuf> {
        self.path(&self.g.gt, &self.file.gt, "gt")
    }

    fn val_gt(&self) -> Result<PathBuf> {
        self.path(&self.g.val_gt, &self.file.val_gt, "val-gt")
    }

    fn pred(&self) -> Result<PathBuf> {
        self.path(&self.g.pred, &self.file.pred, "pred")
    }

    fn out(&self) -> Option<PathBuf> {
        self.g.out.clone().or_else(|| self.file.out.clone())
    }

    fn scorer(&self) -> Result<Option<ScorerKind>> {
        match (self.g.scorer, &self.file.scorer) {
            (Some(s), _) => Ok(Some(s)),
            (None, Some(s)) => Ok(Some(s.parse()?)),
            (None, None) => Ok(None),
        }
    }

    fn accumulator(&self) -> Result<Option<AccumulatorKind>> {
        match (self.g.accumulator, &self.file.accumulator) {
            (Some(a), _) => Ok(Some(a)),
            (None, Some(a)) => Ok(Some(a.parse()?)),
            (None, None) => Ok(None),
        }
    }

    fn interpolation(&self) -> Result<ApInterpolation> {
        match (self.g.interpolation, &self.file.interpolation) {
            (Some(i), _) => Ok(i),
            (None, Some(i)) => Ok(i.parse()?),
            (None, None) => Ok(ApInterpolation::default()),
        }
    }

    fn seed(&self) -> u64 {
        self.g.seed.or(self.file.seed).unwrap_or(0)
    }

    fn iou(&self) -> f64 {
        self.g.iou.or(self.file.iou).unwrap_or(zcal_core::eval::DEFAULT_IOU_THRESHOLD)
    }

    /// Selection policy; both halves must be given.
    fn policy(&self) -> Result<SelectionPolicy> {
        let scorer = self.scorer()?.ok_or_else(|| Error::Usage("--scorer is required".into()))?;
        let accumulator = self.accumulator()?.ok_or_else(|| Error::Usage("--accumulator is required".into()))?;
        self.policy_for(scorer, accumulator)
    }

    fn policy_for(&self, scorer: ScorerKind, accumulator: AccumulatorKind) -> Result<SelectionPolicy> {
        let mut policy = SelectionPolicy::new(scorer, accumulator);
        if let Some(t) = self.g.confidence_threshold.or(self.file.confidence_threshold) {
            policy = policy.with_confidence_threshold(t);
        }
        if let Some(s) = self.g.empty_image_score.or(self.file.empty_image_score) {
            policy = policy.with_empty_image_score(s);
        }
        policy.validate()?;
        Ok(policy)
    }

    fn synth_params(&self, a: &SynthArgs) -> Result<SynthDetectorParams> {
        let d = &self.file.detector;
        let mut p = SynthDetectorParams::default();
        let set = |slot: &mut f64, flag: Option<f64>, key: Option<f64>| {
            if let Some(v) = flag.or(key) {
                *slot = v;
            }
        };
        set(&mut p.skill_floor, a.skill_floor, d.skill_floor);
        set(&mut p.skill_ceiling, a.skill_ceiling, d.skill_ceiling);
        set(&mut p.box_jitter, a.box_jitter, d.box_jitter);
        set(&mut p.miss_rate_at_floor, a.miss_rate, d.miss_rate);
        set(&mut p.false_positive_rate_at_floor, a.false_positive_rate, d.false_positive_rate);
        set(&mut p.concentration, a.concentration, d.concentration);
        set(&mut p.class_saturation, a.class_saturation, d.class_saturation);
        if let Some(s) = a.detector_seed.or(d.seed) {
            p.seed = s;
        }
        if let Some(c) = a.class_conditional.or(d.class_conditional) {
            p.class_conditional = c;
        }
        p.validate()?;
        Ok(p)
    }

    fn data_specs(&self, a: &DataArgs) -> (SyntheticDataSpec, SyntheticDataSpec) {
        let d = &self.file.data;
        let images = a.synthetic_images.or(d.images).unwrap_or(500);
        let val_images = a.synthetic_val_images.or(d.val_images).unwrap_or(200);
        let classes = a.synthetic_classes.or(d.classes).unwrap_or(5);
        let seed = a.data_seed.or(d.seed).unwrap_or(0);
        (
            SyntheticDataSpec::new(images, classes, seed, "img_"),
            SyntheticDataSpec::new(val_images, classes, seed.wrapping_add(1000), "val_"),
        )
    }

    fn wants_synthetic_data(&self, a: &DataArgs) -> bool {
        a.synthetic_images.is_some() || self.file.data.images.is_some()
    }
}

/// Writes to `--out` when given, stdout otherwise.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => io::write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// One prediction per pool image; images without a record have none.
fn pool_predictions(pool: &[ImageId], preds: Vec<ImagePrediction>) -> Vec<ImagePrediction> {
    let mut by_id: std::collections::BTreeMap<ImageId, ImagePrediction> =
        preds.into_iter().map(|p| (p.image_id.clone(), p)).collect();
    pool.iter().map(|id| by_id.remove(id).unwrap_or_else(|| ImagePrediction::empty(id.clone()))).collect()
}

fn load_labeled(path: Option<&Path>, train: &DatasetIndex) -> Result<LabeledSet> {
    let mut labeled = LabeledSet::new();
    let Some(path) = path else { return Ok(labeled) };
    let index = io::load_ground_truth(path)?;
    if index.categories() != train.categories() {
        return Err(Error::Usage(format!("{} uses different categories than --gt", path.display())));
    }
    for id in index.images() {
        if !train.contains(id) {
            return Err(zcal_core::Error::Validation(format!("labeled image_id {id} is not in --gt")).into());
        }
        labeled.insert(index.annotation(id).expect("listed image"))?;
    }
    Ok(labeled)
}

fn ranking_csv(ranked: &RankedPool, limit: usize) -> String {
    let mut out = String::from("rank,image_id,score,n_boxes\n");
    for (i, e) in ranked.entries().iter().take(limit).enumerate() {
        writeln!(out, "{},{},{:.6},{}", i + 1, e.image_id, e.value, e.n_boxes).expect("write to string");
    }
    out
}

/// Scores and ranks the unlabeled part of `train`.
fn rank_pool(s: &Settings, train: &DatasetIndex, labeled: &LabeledSet, cycle: usize) -> Result<RankedPool> {
    let policy = s.policy()?;
    let preds = io::load_predictions(&s.pred()?, train)?;
    let pool: Vec<ImageId> = train.images().iter().filter(|id| !labeled.contains(id)).cloned().collect();
    let stream = SeedStream::new(s.seed()).child(cycle as u64);
    Ok(rank(score_pool(&pool_predictions(&pool, preds), &policy, &stream)?)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let s = Settings::new(cli.global)?;
    match cli.command {
        Command::Score(a) => {
            let train = io::load_ground_truth(&s.gt()?)?;
            let ranked = rank_pool(&s, &train, &LabeledSet::new(), a.cycle)?;
            emit(s.out().as_deref(), &ranking_csv(&ranked, usize::MAX))
        }
        Command::Rank(a) => {
            let train = io::load_ground_truth(&s.gt()?)?;
            let labeled = load_labeled(a.labeled.as_deref(), &train)?;
            let ranked = rank_pool(&s, &train, &labeled, a.cycle.unwrap_or(1))?;
            let limit = match (a.top, a.cycle) {
                (Some(0), _) => return Err(Error::Usage("--top must be at least 1".into())),
                (Some(l), _) => l,
                (None, Some(c)) => schedule(c)?,
                (None, None) => usize::MAX,
            };
            emit(s.out().as_deref(), &ranking_csv(&ranked, limit))
        }
        Command::Cycle(a) => {
            let out = s.out().ok_or_else(|| Error::Usage("--out is required for the updated labeled set".into()))?;
            let train = io::load_ground_truth(&s.gt()?)?;
            let mut labeled = load_labeled(a.labeled.as_deref(), &train)?;
            let ranked = rank_pool(&s, &train, &labeled, a.cycle)?;
            let selected = ranked.select_top(schedule(a.cycle)?)?;
            for ann in zcal_core::oracle_label(&selected, &train, &labeled)? {
                labeled.insert(ann)?;
            }
            io::write_text(&out, &io::annotations_json(train.categories(), labeled.annotations()))?;
            log::info!("labeled {} images, {} in total", selected.len(), labeled.len());
            print!("{}", io::id_list(&selected));
            Ok(())
        }
        Command::Simulate(a) => simulate(&s, &a),
        Command::Eval => {
            let gt = io::load_ground_truth(&s.gt()?)?;
            let preds = io::load_predictions(&s.pred()?, &gt)?;
            let evaluation = zcal_core::evaluate(&gt, &preds, s.iou(), s.interpolation()?)?;
            let mut text = String::from("category,n_ground_truth,ap\n");
            for c in &evaluation.per_class {
                let ap = c.ap.map(|v| format!("{v:.6}")).unwrap_or_default();
                let name = gt.categories().name(c.category).expect("known category");
                writeln!(text, "{name},{},{ap}", c.n_ground_truth).expect("write to string");
            }
            let total: usize = evaluation.per_class.iter().map(|c| c.n_ground_truth).sum();
            writeln!(text, "mAP,{total},{:.6}", evaluation.map).expect("write to string");
            emit(s.out().as_deref(), &text)
        }
        Command::Report(a) => {
            let rows = io::read_report(&a.report)?;
            emit(s.out().as_deref(), &io::summary_csv(&summarize(&rows)))
        }
        Command::SynthDetect(a) => {
            let train = io::load_ground_truth(&s.gt()?)?;
            let validation = io::load_ground_truth(&s.val_gt()?)?;
            synth_detect_in_dir(&a.dir, &train, &validation, s.synth_params(&a.synth)?)
        }
        Command::GenData(a) => {
            let out = s.out().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let (train, val) = s.data_specs(&a.data);
            io::write_ground_truth(&train.generate()?, &out.join("train.json"))?;
            io::write_ground_truth(&val.generate()?, &out.join("val.json"))?;
            Ok(())
        }
    }
}

/// Scorer/accumulator pairs to run. Without either flag: every
/// deterministic scorer with every accumulator, plus random-max.
fn method_grid(scorer: Option<ScorerKind>, accumulator: Option<AccumulatorKind>) -> Vec<(ScorerKind, AccumulatorKind)> {
    let accumulators = match accumulator {
        Some(a) => vec![a],
        None => AccumulatorKind::ALL.to_vec(),
    };
    match scorer {
        Some(s) => accumulators.into_iter().map(|a| (s, a)).collect(),
        None => {
            let mut pairs: Vec<_> = ScorerKind::ALL
                .iter()
                .filter(|s| s.is_deterministic())
                .flat_map(|&s| accumulators.iter().map(move |&a| (s, a)))
                .collect();
            if accumulator.is_none() {
                pairs.push((ScorerKind::Random, AccumulatorKind::Max));
            }
            pairs
        }
    }
}

fn simulate(s: &Settings, a: &SimulateArgs) -> Result<()> {
    let out = s.out().unwrap_or_else(|| PathBuf::from("zcal-out"));
    let (train, validation) = if s.g.gt.is_some() || s.file.gt.is_some() {
        (io::load_ground_truth(&s.gt()?)?, io::load_ground_truth(&s.val_gt()?)?)
    } else if s.wants_synthetic_data(&a.data) {
        let (t, v) = s.data_specs(&a.data);
        (t.generate()?, v.generate()?)
    } else {
        return Err(Error::Usage("give --gt and --val-gt, or --synthetic-images".into()));
    };

    let mut configs = Vec::new();
    for (scorer, accumulator) in method_grid(s.scorer()?, s.accumulator()?) {
        let mut config = ExperimentConfig::new(scorer, accumulator, s.g.cycles.or(s.file.cycles).unwrap_or(5));
        config.policy = s.policy_for(scorer, accumulator)?;
        if let Some(seeds) = s.g.seeds.clone().or_else(|| s.file.seeds.clone()) {
            config.seeds = seeds;
        }
        if let Some(n) = s.g.initial_size.or(s.file.initial_size) {
            config.initial_size = n;
        }
        config.iou_threshold = s.iou();
        config.interpolation = s.interpolation()?;
        config.validate()?;
        config.check_splits(&train, &validation)?;
        configs.push(config);
    }

    let kind = a.detector.clone().or_else(|| s.file.detector.kind.clone()).unwrap_or_else(|| "synthetic".into());
    let records: Vec<CycleRecord> = match kind.as_str() {
        "synthetic" => {
            let detector = SyntheticDetector::new(s.synth_params(&a.synth)?)?;
            let results: Vec<zcal_core::Result<Vec<CycleRecord>>> = std::thread::scope(|scope| {
                let handles: Vec<_> = configs
                    .iter()
                    .map(|config| {
                        let mut detector = detector.clone();
                        let (train, validation) = (&train, &validation);
                        scope.spawn(move || zcal_core::run_experiment(config, train, validation, &mut detector))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("experiment thread panicked")).collect()
            });
            let mut all = Vec::new();
            for r in results {
                all.extend(r?);
            }
            all
        }
        "external" => {
            let command = a
                .detector_command
                .clone()
                .or_else(|| s.file.detector.command.clone())
                .ok_or_else(|| Error::Usage("--detector-command is required for an external detector".into()))?;
            let workdir =
                a.workdir.clone().or_else(|| s.file.detector.workdir.clone()).unwrap_or_else(|| out.join("adapter"));
            let mut adapter = ExternalAdapter::new(&command, workdir)?;
            let mut all = Vec::new();
            for config in &configs {
                all.extend(zcal_core::run_experiment(config, &train, &validation, &mut adapter)?);
            }
            all
        }
        other => return Err(Error::Usage(format!("unknown detector kind {other:?}; expected synthetic or external"))),
    };

    for config in &configs {
        for &seed in &config.seeds {
            let done = records
                .iter()
                .filter(|r| {
                    r.seed == seed && r.scorer == config.policy.scorer && r.accumulator == config.policy.accumulator
                })
                .count();
            if done < config.cycles {
                log::warn!(
                    "{}-{} seed {seed}: pool exhausted after {done} of {} cycles",
                    config.policy.scorer,
                    config.policy.accumulator,
                    config.cycles
                );
            }
        }
    }

    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let rows: Vec<ReportRow> = records.iter().map(CycleRecord::row).collect();
    io::write_report(&rows, &out.join("report.csv"))?;
    io::write_summary(&summarize(&rows), &out.join("summary.csv"))?;
    log::info!("wrote {} rows to {}", rows.len(), out.join("report.csv").display());
    Ok(())
}
