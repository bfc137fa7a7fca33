//! On-disk formats: ground truth (JSON), predictions (JSON lines) and the
//! report and summary tables (CSV).
//!
//! Categories are 1-based on disk and 0-based in memory.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use zcal_core::{
    AccumulatorKind, BoxGeometry, CategorySet, ClassDistribution, CurveSummary, DatasetIndex, Detection,
    GroundTruthAnnotation, GroundTruthBox, ImageId, ImagePrediction, ReportRow, ScorerKind,
};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthDoc {
    categories: Vec<String>,
    images: Vec<String>,
    #[serde(default)]
    annotations: Vec<AnnotationRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationRecord {
    image_id: String,
    #[serde(default)]
    boxes: Vec<BoxRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxRecord {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    category: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRecord {
    image_id: String,
    #[serde(default)]
    detections: Vec<DetectionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRecord {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    probs: Vec<f64>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn json_error(origin: &str, e: serde_json::Error) -> Error {
    Error::Format { origin: origin.into(), line: e.line(), message: e.to_string() }
}

/// Parses a ground-truth document. `origin` names the source in errors.
pub fn parse_ground_truth(text: &str, origin: &str) -> Result<DatasetIndex> {
    let doc: GroundTruthDoc = serde_json::from_str(text).map_err(|e| json_error(origin, e))?;
    let categories = CategorySet::new(doc.categories)?;
    let d = categories.len();
    let annotations = doc
        .annotations
        .into_iter()
        .map(|a| {
            let boxes = a
                .boxes
                .iter()
                .map(|b| {
                    if b.category == 0 || b.category > d {
                        return Err(zcal_core::Error::Validation(format!(
                            "image_id {}: category index {} outside 1..={d}",
                            a.image_id, b.category
                        )));
                    }
                    let geometry = BoxGeometry::new(b.x_min, b.y_min, b.x_max, b.y_max)
                        .map_err(|e| zcal_core::Error::Validation(format!("image_id {}: {e}", a.image_id)))?;
                    Ok(GroundTruthBox { geometry, category: b.category - 1 })
                })
                .collect::<zcal_core::Result<Vec<_>>>()?;
            Ok(GroundTruthAnnotation::new(ImageId::new(a.image_id), boxes))
        })
        .collect::<Result<Vec<_>>>()?;
    let images = doc.images.into_iter().map(ImageId::new).collect();
    Ok(DatasetIndex::new(categories, images, annotations)?)
}

pub fn load_ground_truth(path: &Path) -> Result<DatasetIndex> {
    parse_ground_truth(&read(path)?, &path.display().to_string())
}

fn box_record(b: &GroundTruthBox) -> BoxRecord {
    let g = b.geometry;
    BoxRecord { x_min: g.x_min, y_min: g.y_min, x_max: g.x_max, y_max: g.y_max, category: b.category + 1 }
}

fn ground_truth_doc<'a>(
    categories: &CategorySet,
    annotations: impl Iterator<Item = &'a GroundTruthAnnotation>,
) -> GroundTruthDoc {
    let mut images = Vec::new();
    let mut records = Vec::new();
    for a in annotations {
        images.push(a.image_id.as_str().to_owned());
        if !a.boxes.is_empty() {
            records.push(AnnotationRecord {
                image_id: a.image_id.as_str().to_owned(),
                boxes: a.boxes.iter().map(box_record).collect(),
            });
        }
    }
    GroundTruthDoc { categories: categories.names().to_vec(), images, annotations: records }
}

fn to_json(doc: &GroundTruthDoc) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("ground truth serializes");
    s.push('\n');
    s
}

/// Serializes `index`; the image list keeps the index order.
pub fn ground_truth_json(index: &DatasetIndex) -> String {
    let annotations: Vec<_> = index.annotations().collect();
    to_json(&ground_truth_doc(index.categories(), annotations.iter()))
}

pub fn write_ground_truth(index: &DatasetIndex, path: &Path) -> Result<()> {
    write(path, &ground_truth_json(index))
}

/// Ground-truth document of the given annotations, in the given order.
pub fn annotations_json<'a>(
    categories: &CategorySet,
    annotations: impl Iterator<Item = &'a GroundTruthAnnotation>,
) -> String {
    to_json(&ground_truth_doc(categories, annotations))
}

/// Parses JSON-lines predictions and validates them against `index`.
/// Blank lines are skipped; an image may appear at most once.
pub fn parse_predictions(text: &str, origin: &str, index: &DatasetIndex) -> Result<Vec<ImagePrediction>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| Error::Format { origin: origin.into(), line: line_no, message };
        let rec: PredictionRecord = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        let detections = rec
            .detections
            .into_iter()
            .map(|d| {
                let geometry = BoxGeometry::new(d.x_min, d.y_min, d.x_max, d.y_max)?;
                Ok(Detection::new(geometry, ClassDistribution::new(d.probs)?))
            })
            .collect::<zcal_core::Result<Vec<_>>>()
            .map_err(|e| fail(format!("image_id {}: {e}", rec.image_id)))?;
        let pred = ImagePrediction::new(ImageId::new(rec.image_id), detections);
        index.check_prediction(&pred).map_err(|e| fail(e.to_string()))?;
        if !seen.insert(pred.image_id.clone()) {
            return Err(fail(format!("duplicate record for image_id {}", pred.image_id)));
        }
        out.push(pred);
    }
    Ok(out)
}

pub fn load_predictions(path: &Path, index: &DatasetIndex) -> Result<Vec<ImagePrediction>> {
    parse_predictions(&read(path)?, &path.display().to_string(), index)
}

pub fn predictions_jsonl(preds: &[ImagePrediction]) -> String {
    let mut out = String::new();
    for p in preds {
        let rec = PredictionRecord {
            image_id: p.image_id.as_str().to_owned(),
            detections: p
                .detections
                .iter()
                .map(|d| DetectionRecord {
                    x_min: d.geometry.x_min,
                    y_min: d.geometry.y_min,
                    x_max: d.geometry.x_max,
                    y_max: d.geometry.y_max,
                    probs: d.distribution.probs().to_vec(),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn write_predictions(preds: &[ImagePrediction], path: &Path) -> Result<()> {
    write(path, &predictions_jsonl(preds))
}

pub const REPORT_HEADER: &str = "seed,cycle,n_labeled,scorer,accumulator,map";
pub const SUMMARY_HEADER: &str = "scorer,accumulator,n_labeled,n_seeds,mean_map,std_map";

/// Report CSV: rows sorted by `(seed, cycle, scorer, accumulator)`, mAP with
/// 6 decimals, `\n` line endings.
pub fn report_csv(rows: &[ReportRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Usage("refusing to write an empty report".into()));
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| (r.seed, r.cycle, r.scorer, r.accumulator));
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in &sorted {
        writeln!(out, "{},{},{},{},{},{:.6}", r.seed, r.cycle, r.n_labeled, r.scorer, r.accumulator, r.map)
            .expect("write to string");
    }
    Ok(out)
}

pub fn write_report(rows: &[ReportRow], path: &Path) -> Result<()> {
    write(path, &report_csv(rows)?)
}

#[derive(Debug, Deserialize)]
struct ReportRecord {
    seed: u64,
    cycle: usize,
    n_labeled: usize,
    scorer: String,
    accumulator: String,
    map: f64,
}

pub fn parse_report(text: &str, origin: &str) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Format { origin: origin.into(), line: 1, message: e.to_string() })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != REPORT_HEADER {
        return Err(Error::Format { origin: origin.into(), line: 1, message: format!("expected header {REPORT_HEADER}") });
    }
    reader
        .deserialize::<ReportRecord>()
        .enumerate()
        .map(|(i, rec)| {
            let fail = |message: String| Error::Format { origin: origin.into(), line: i + 2, message };
            let rec = rec.map_err(|e| fail(e.to_string()))?;
            Ok(ReportRow {
                seed: rec.seed,
                cycle: rec.cycle,
                n_labeled: rec.n_labeled,
                scorer: rec.scorer.parse::<ScorerKind>().map_err(|e| fail(e.to_string()))?,
                accumulator: rec.accumulator.parse::<AccumulatorKind>().map_err(|e| fail(e.to_string()))?,
                map: rec.map,
            })
        })
        .collect()
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    parse_report(&read(path)?, &path.display().to_string())
}

/// Summary CSV; `std_map` is left empty for single-seed groups.
pub fn summary_csv(summaries: &[CurveSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in summaries {
        let std = s.std_map.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(out, "{},{},{},{},{:.6},{std}", s.scorer, s.accumulator, s.n_labeled, s.n_seeds, s.mean_map)
            .expect("write to string");
    }
    out
}

pub fn write_summary(summaries: &[CurveSummary], path: &Path) -> Result<()> {
    write(path, &summary_csv(summaries))
}

/// One image id per line; blank lines are skipped.
pub fn parse_id_list(text: &str) -> Vec<ImageId> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(ImageId::from).collect()
}

pub fn load_id_list(path: &Path) -> Result<Vec<ImageId>> {
    Ok(parse_id_list(&read(path)?))
}

pub fn id_list(ids: &[ImageId]) -> String {
    ids.iter().map(|id| format!("{id}\n")).collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write(path, text)
}
