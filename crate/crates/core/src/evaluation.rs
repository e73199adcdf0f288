//! Detection metrics over external detectors' prediction files: per-class
//! AP at a fixed IoU threshold (default 0.5, greedy score-ordered
//! matching, 101-point interpolation), mAP as the unweighted mean over
//! classes present in the ground truth, the efficiency ratio mAP:C, and
//! fps from caller-supplied inference timings.

use crate::canonical::Value;
use crate::dataset_io::Dataset;
use crate::geometry::{iou, BoundingBox};
use crate::scalar::Scalar;
use serde::Deserialize;
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Match threshold used throughout the toolkit unless overridden.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse {path} as detections JSON: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("detection {index} references unknown image id '{image_id}'")]
    UnknownImage { index: usize, image_id: String },
    #[error("detection {index} references unknown category id {category_id}")]
    UnknownCategory { index: usize, category_id: u64 },
    #[error("detection {index} is invalid: {message}")]
    InvalidDetection { index: usize, message: String },
    #[error("invalid model metadata: {0}")]
    InvalidMeta(String),
}

/// One detector output being scored.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub bbox: BoundingBox,
    pub class_id: usize,
    pub score: f64,
}

/// Detector description: complexity (the C of mAP:C) and optional
/// per-image inference times. The toolkit never times detectors itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub name: String,
    pub parameter_count_millions: f64,
    pub inference_times_ms: Option<Vec<f64>>,
}

impl ModelMeta {
    pub fn validate(&self) -> Result<(), EvalError> {
        let c = self.parameter_count_millions;
        if !c.is_finite() || c <= 0.0 {
            return Err(EvalError::InvalidMeta(format!(
                "parameter_count_millions must be > 0, got {}",
                self.parameter_count_millions
            )));
        }
        if let Some(times) = &self.inference_times_ms {
            if times.is_empty() || times.iter().any(|t| !t.is_finite() || *t <= 0.0) {
                return Err(EvalError::InvalidMeta(
                    "inference times must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-class matching and AP results.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub ap: f64,
    pub gt_count: u64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

/// Full evaluation result. `map` is internal `[0, 1]`; reports display it
/// on the 0-100 scale, which is also the scale `map_over_c` uses.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub per_class: BTreeMap<usize, ClassMetrics>,
    pub map: f64,
    pub map_over_c: f64,
    pub fps: Option<f64>,
    pub iou_threshold: f64,
    pub model_name: String,
}

impl EvalReport {
    pub fn map_scaled(&self) -> f64 {
        self.map * 100.0
    }
}

/// Label detections of one image/class group as TP or FP.
///
/// Detections are processed in descending score (ties keep input order);
/// each matches the not-yet-matched ground-truth box of highest IoU at or
/// above the threshold, otherwise it is a false positive. Returns
/// `(score, is_tp)` in processing order.
pub fn match_detections(
    gt: &[BoundingBox],
    detections: &[(f64, BoundingBox)],
    iou_threshold: f64,
) -> Vec<(f64, bool)> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .0
            .partial_cmp(&detections[a].0)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut gt_matched = vec![false; gt.len()];
    let mut labels = Vec::with_capacity(detections.len());
    for &det_index in &order {
        let (score, det_box) = &detections[det_index];
        let mut best: Option<(usize, f64)> = None;
        for (gt_index, gt_box) in gt.iter().enumerate() {
            if gt_matched[gt_index] {
                continue;
            }
            let overlap = iou(det_box, gt_box);
            if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((gt_index, overlap));
            }
        }
        match best {
            Some((gt_index, _)) => {
                gt_matched[gt_index] = true;
                labels.push((*score, true));
            }
            None => labels.push((*score, false)),
        }
    }
    labels
}

/// COCO-interpolated average precision from labeled detections.
///
/// `labels` are `(score, is_tp)` pairs across all images of one class;
/// they are sorted by descending score (stable). AP is the mean over the
/// 101-point recall grid `{0.00, 0.01, ..., 1.00}` of the maximum
/// precision at recall >= r. Zero when there is no ground truth.
pub fn average_precision<S: Scalar>(labels: &[(S, bool)], gt_count: usize) -> S {
    if gt_count == 0 {
        return S::zero();
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| {
        labels[b]
            .0
            .partial_cmp(&labels[a].0)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut precisions = Vec::with_capacity(labels.len());
    let mut recalls = Vec::with_capacity(labels.len());
    let gt_total = S::from_usize(gt_count).unwrap();
    let mut tp = S::zero();
    for (rank, &i) in order.iter().enumerate() {
        if labels[i].1 {
            tp = tp + S::one();
        }
        let seen = S::from_usize(rank + 1).unwrap();
        precisions.push(tp / seen);
        recalls.push(tp / gt_total);
    }
    // Monotone envelope from the right.
    for i in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }

    let hundred = S::from_u32(100).unwrap();
    let mut sum = S::zero();
    let mut pointer = 0usize;
    for step in 0..=100u32 {
        let recall_target = S::from_u32(step).unwrap() / hundred;
        while pointer < recalls.len() && recalls[pointer] < recall_target {
            pointer += 1;
        }
        if pointer < precisions.len() {
            sum = sum + precisions[pointer];
        }
    }
    sum / S::from_u32(101).unwrap()
}

/// Score detections against ground truth and assemble the report.
///
/// Per-class AP entries exist for every class with ground truth, plus
/// classes that received detections without any ground truth (AP 0).
/// mAP averages only the classes present in the ground truth. TP/FP/FN
/// counts are over all detections, with FN = GT - TP.
pub fn evaluate(
    gt: &Dataset,
    detections: &[Detection],
    meta: &ModelMeta,
    iou_threshold: f64,
) -> Result<EvalReport, EvalError> {
    meta.validate()?;
    let known_ids: HashMap<&str, ()> = gt.samples.iter().map(|s| (s.id.as_str(), ())).collect();
    for (index, det) in detections.iter().enumerate() {
        if !known_ids.contains_key(det.image_id.as_str()) {
            return Err(EvalError::UnknownImage {
                index,
                image_id: det.image_id.clone(),
            });
        }
        if det.class_id >= gt.classes.len() {
            return Err(EvalError::UnknownCategory {
                index,
                category_id: det.class_id as u64,
            });
        }
        if !(0.0..=1.0).contains(&det.score) {
            return Err(EvalError::InvalidDetection {
                index,
                message: format!("score {} outside [0, 1]", det.score),
            });
        }
    }

    // Group ground truth and detections by (class, image).
    let mut gt_boxes: HashMap<(usize, &str), Vec<BoundingBox>> = HashMap::new();
    let mut gt_per_class: HashMap<usize, u64> = HashMap::new();
    for sample in &gt.samples {
        for ann in &sample.annotations {
            gt_boxes
                .entry((ann.class_id, sample.id.as_str()))
                .or_default()
                .push(ann.bbox);
            *gt_per_class.entry(ann.class_id).or_default() += 1;
        }
    }
    let mut det_boxes: HashMap<(usize, &str), Vec<(f64, BoundingBox)>> = HashMap::new();
    for det in detections {
        det_boxes
            .entry((det.class_id, det.image_id.as_str()))
            .or_default()
            .push((det.score, det.bbox));
    }

    let mut per_class = BTreeMap::new();
    for class_id in 0..gt.classes.len() {
        let gt_count = gt_per_class.get(&class_id).copied().unwrap_or(0);
        let has_dets = det_boxes.keys().any(|(c, _)| *c == class_id);
        if gt_count == 0 && !has_dets {
            continue; // skipped entirely
        }

        // Deterministic image order: dataset sample order.
        let mut labels: Vec<(f64, bool)> = Vec::new();
        for sample in &gt.samples {
            let key = (class_id, sample.id.as_str());
            let dets = match det_boxes.get(&key) {
                Some(d) => d,
                None => continue,
            };
            let empty = Vec::new();
            let boxes = gt_boxes.get(&key).unwrap_or(&empty);
            labels.extend(match_detections(boxes, dets, iou_threshold));
        }

        let ap = average_precision(&labels, gt_count as usize);
        let true_positives = labels.iter().filter(|(_, tp)| *tp).count() as u64;
        let false_positives = labels.len() as u64 - true_positives;
        per_class.insert(
            class_id,
            ClassMetrics {
                ap,
                gt_count,
                true_positives,
                false_positives,
                false_negatives: gt_count - true_positives,
            },
        );
    }

    let present: Vec<f64> = per_class
        .values()
        .filter(|m| m.gt_count > 0)
        .map(|m| m.ap)
        .collect();
    let map = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    let fps = meta
        .inference_times_ms
        .as_ref()
        .map(|times| 1000.0 / (times.iter().sum::<f64>() / times.len() as f64));

    Ok(EvalReport {
        map,
        map_over_c: map * 100.0 / meta.parameter_count_millions,
        fps,
        per_class,
        iou_threshold,
        model_name: meta.name.clone(),
    })
}

// ---------------------------------------------------------------------------
// IO

#[derive(Deserialize)]
struct RawDetection {
    image_id: serde_json::Value,
    category_id: u64,
    bbox: [f64; 4],
    score: f64,
}

/// Parse a COCO results array (`[{image_id, category_id, bbox, score}]`)
/// against the ground-truth catalog. Image ids may be integers or strings.
pub fn load_detections(path: &Path, gt: &Dataset) -> Result<Vec<Detection>, EvalError> {
    let bytes = std::fs::read(path).map_err(|source| EvalError::Io {
        path: path.to_owned(),
        source,
    })?;
    let raw: Vec<RawDetection> = serde_json::from_slice(&bytes).map_err(|e| EvalError::Parse {
        path: path.to_owned(),
        message: format!("{e} (line {}, column {})", e.line(), e.column()),
    })?;
    raw.into_iter()
        .enumerate()
        .map(|(index, det)| {
            let image_id = match det.image_id {
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::String(s) => s,
                other => {
                    return Err(EvalError::InvalidDetection {
                        index,
                        message: format!("image_id must be an integer or string, got {other}"),
                    })
                }
            };
            let class_id =
                gt.classes
                    .index_of_id(det.category_id)
                    .ok_or(EvalError::UnknownCategory {
                        index,
                        category_id: det.category_id,
                    })?;
            let [x, y, w, h] = det.bbox;
            let bbox =
                BoundingBox::try_new(x, y, w, h).map_err(|e| EvalError::InvalidDetection {
                    index,
                    message: e.to_string(),
                })?;
            Ok(Detection {
                image_id,
                bbox,
                class_id,
                score: det.score,
            })
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeta {
    name: String,
    parameter_count_millions: f64,
    #[serde(default)]
    inference_times_ms: Option<Vec<f64>>,
    /// Pass-through experimental metadata (e.g. training hours); unused.
    #[serde(default)]
    #[allow(dead_code)]
    training_hours: Option<f64>,
}

pub fn load_model_meta(path: &Path) -> Result<ModelMeta, EvalError> {
    let bytes = std::fs::read(path).map_err(|source| EvalError::Io {
        path: path.to_owned(),
        source,
    })?;
    let raw: RawMeta = serde_json::from_slice(&bytes).map_err(|e| EvalError::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    let meta = ModelMeta {
        name: raw.name,
        parameter_count_millions: raw.parameter_count_millions,
        inference_times_ms: raw.inference_times_ms,
    };
    meta.validate()?;
    Ok(meta)
}

/// Canonical report JSON. AP values are on the 0-100 display scale.
pub fn report_to_canonical_value(report: &EvalReport, gt: &Dataset) -> Value {
    let classes = Value::Object(
        report
            .per_class
            .iter()
            .map(|(class_id, m)| {
                let name = gt.classes.name_of(*class_id).unwrap_or("?").to_owned();
                (
                    name,
                    Value::object([
                        ("ap", Value::Fixed(m.ap * 100.0)),
                        ("gt_count", Value::UInt(m.gt_count)),
                        ("true_positives", Value::UInt(m.true_positives)),
                        ("false_positives", Value::UInt(m.false_positives)),
                        ("false_negatives", Value::UInt(m.false_negatives)),
                    ]),
                )
            })
            .collect(),
    );
    Value::object([
        ("model", Value::str(&report.model_name)),
        ("iou_threshold", Value::Fixed(report.iou_threshold)),
        ("classes", classes),
        ("map", Value::Fixed(report.map_scaled())),
        ("map_over_c", Value::Fixed(report.map_over_c)),
        (
            "fps",
            match report.fps {
                Some(v) => Value::Fixed(v),
                None => Value::Null,
            },
        ),
    ])
}

/// One row per model with a column per class AP (0-100 scale) and the
/// summary metrics, followed by a matching-count block.
pub fn format_report_table(report: &EvalReport, gt: &Dataset) -> String {
    let name_of = |class_id: usize| gt.classes.name_of(class_id).unwrap_or("?").to_owned();
    let mut out = String::new();
    out.push_str(&format!("IoU >= {:.2}\n", report.iou_threshold));

    let mut header = format!("{:<18}", "model");
    let mut row = format!("{:<18}", report.model_name);
    for (class_id, m) in &report.per_class {
        let name = name_of(*class_id);
        let width = name.len().max(6);
        header.push_str(&format!(" {name:>width$}"));
        row.push_str(&format!(" {:>width$.1}", m.ap * 100.0));
    }
    header.push_str(&format!(" {:>6} {:>6}", "mAP", "mAP:C"));
    row.push_str(&format!(
        " {:>6.1} {:>6.2}",
        report.map_scaled(),
        report.map_over_c
    ));
    if let Some(fps) = report.fps {
        header.push_str(&format!(" {:>6}", "fps"));
        row.push_str(&format!(" {fps:>6.1}"));
    }
    out.push_str(&header);
    out.push('\n');
    out.push_str(&row);
    out.push('\n');

    out.push_str(&format!(
        "\n{:<20} {:>6} {:>6} {:>6} {:>6}\n",
        "class", "GT", "TP", "FP", "FN"
    ));
    for (class_id, m) in &report.per_class {
        out.push_str(&format!(
            "{:<20} {:>6} {:>6} {:>6} {:>6}\n",
            name_of(*class_id),
            m.gt_count,
            m.true_positives,
            m.false_positives,
            m.false_negatives
        ));
    }
    out
}
