//! Detector adapters that talk through files.
//!
//! Each call gets a directory holding `labeled.json` (ground-truth schema,
//! labeled images in labeling order) and `pool.txt` (one image id per
//! line). The command runs with that directory as its last argument and
//! must leave `predictions.jsonl` (pool) and `val_predictions.jsonl`
//! (validation split) there.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use zcal_core::{
    AdapterOutput, CycleRequest, DatasetIndex, DetectorAdapter, LabeledSet, SynthDetectorParams, SyntheticDetector,
};

use crate::error::{Error, Result};
use crate::io;

pub const LABELED_FILE: &str = "labeled.json";
pub const POOL_FILE: &str = "pool.txt";
pub const POOL_PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const VALIDATION_PREDICTIONS_FILE: &str = "val_predictions.jsonl";

/// Runs an external command once per adapter call.
#[derive(Debug, Clone)]
pub struct ExternalAdapter {
    program: String,
    args: Vec<String>,
    workdir: PathBuf,
}

impl ExternalAdapter {
    /// `command` is split on whitespace; no shell is involved.
    pub fn new(command: &str, workdir: impl Into<PathBuf>) -> Result<Self> {
        let mut parts = command.split_whitespace().map(str::to_owned);
        let program = parts.next().ok_or_else(|| Error::Usage("empty detector command".into()))?;
        Ok(Self { program, args: parts.collect(), workdir: workdir.into() })
    }

    pub fn from_parts(program: impl Into<String>, args: Vec<String>, workdir: impl Into<PathBuf>) -> Self {
        Self { program: program.into(), args, workdir: workdir.into() }
    }

    fn call(&self, request: &CycleRequest<'_>) -> Result<AdapterOutput> {
        let dir = self.workdir.join(format!("seed{}_cycle{}", request.seed, request.cycle));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let labeled = io::annotations_json(request.train.categories(), request.labeled.annotations());
        io::write_text(&dir.join(LABELED_FILE), &labeled)?;
        io::write_text(&dir.join(POOL_FILE), &io::id_list(request.pool))?;
        for stale in [POOL_PREDICTIONS_FILE, VALIDATION_PREDICTIONS_FILE] {
            let path = dir.join(stale);
            if path.exists() {
                fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
        }

        log::debug!("running {} in {}", self.program, dir.display());
        let output = Command::new(&self.program)
            .args(&self.args)
            .arg(&dir)
            .output()
            .map_err(|e| Error::io(&self.program, e))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(Error::Detector(format!(
                "command {} failed with {}: {}",
                self.program,
                output.status,
                stderr.trim()
            )));
        }
        Ok(AdapterOutput {
            pool: io::load_predictions(&dir.join(POOL_PREDICTIONS_FILE), request.train)?,
            validation: io::load_predictions(&dir.join(VALIDATION_PREDICTIONS_FILE), request.validation)?,
        })
    }
}

impl DetectorAdapter for ExternalAdapter {
    fn predict(&mut self, request: &CycleRequest<'_>) -> zcal_core::Result<AdapterOutput> {
        self.call(request).map_err(|e| match e {
            Error::Core(inner) => inner,
            other => zcal_core::Error::Adapter(other.to_string()),
        })
    }
}

/// Answers one adapter call in `dir` with the synthetic detector. Produces
/// the same predictions as the in-process [`SyntheticDetector`].
pub fn synth_detect_in_dir(
    dir: &Path,
    train: &DatasetIndex,
    validation: &DatasetIndex,
    params: SynthDetectorParams,
) -> Result<()> {
    let labeled_index = io::load_ground_truth(&dir.join(LABELED_FILE))?;
    if labeled_index.categories() != train.categories() {
        return Err(Error::Usage(format!("{LABELED_FILE} and the training split use different categories")));
    }
    let mut labeled = LabeledSet::new();
    for id in labeled_index.images() {
        if !train.contains(id) {
            return Err(zcal_core::Error::Validation(format!("labeled image_id {id} is not in the training split")).into());
        }
        let ann = labeled_index.annotation(id).expect("listed image");
        labeled.insert(ann)?;
    }
    let pool = io::load_id_list(&dir.join(POOL_FILE))?;

    let mut detector = SyntheticDetector::new(params)?;
    let request = CycleRequest { seed: 0, cycle: 0, labeled: &labeled, pool: &pool, train, validation };
    let out = detector.predict(&request)?;
    io::write_predictions(&out.pool, &dir.join(POOL_PREDICTIONS_FILE))?;
    io::write_predictions(&out.validation, &dir.join(VALIDATION_PREDICTIONS_FILE))?;
    Ok(())
}
