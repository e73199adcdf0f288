//! Dataset statistics: class histogram, box-size distribution, and
//! per-image object counts.

use boxaug::canonical::Value;
use boxaug::dataset_io::Dataset;
use std::collections::BTreeMap;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn dataset_stats(dataset: &Dataset) -> Value {
    let mut class_counts: BTreeMap<String, u64> = BTreeMap::new();
    for entry in dataset.classes.entries() {
        class_counts.insert(entry.name.clone(), 0);
    }
    let mut areas: Vec<f64> = Vec::new();
    let mut widths: Vec<f64> = Vec::new();
    let mut heights: Vec<f64> = Vec::new();
    let mut objects_per_image: BTreeMap<u64, u64> = BTreeMap::new();

    for sample in &dataset.samples {
        *objects_per_image
            .entry(sample.annotations.len() as u64)
            .or_default() += 1;
        for ann in &sample.annotations {
            if let Some(name) = dataset.classes.name_of(ann.class_id) {
                *class_counts.entry(name.to_owned()).or_default() += 1;
            }
            areas.push(ann.bbox.area());
            widths.push(ann.bbox.width());
            heights.push(ann.bbox.height());
        }
    }
    areas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    widths.sort_by(|a, b| a.partial_cmp(b).unwrap());
    heights.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let dist = |sorted: &[f64]| {
        if sorted.is_empty() {
            Value::Null
        } else {
            Value::object([
                ("min", Value::Fixed(sorted[0])),
                ("p25", Value::Fixed(quantile(sorted, 0.25))),
                ("median", Value::Fixed(quantile(sorted, 0.5))),
                ("p75", Value::Fixed(quantile(sorted, 0.75))),
                ("max", Value::Fixed(sorted[sorted.len() - 1])),
                (
                    "mean",
                    Value::Fixed(sorted.iter().sum::<f64>() / sorted.len() as f64),
                ),
            ])
        }
    };

    Value::object([
        ("command", Value::str("stats")),
        ("samples", Value::UInt(dataset.len() as u64)),
        ("annotations", Value::UInt(areas.len() as u64)),
        (
            "class_histogram",
            Value::Object(
                class_counts
                    .into_iter()
                    .map(|(k, v)| (k, Value::UInt(v)))
                    .collect(),
            ),
        ),
        ("box_area", dist(&areas)),
        ("box_width", dist(&widths)),
        ("box_height", dist(&heights)),
        (
            "objects_per_image",
            Value::Object(
                objects_per_image
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), Value::UInt(v)))
                    .collect(),
            ),
        ),
    ])
}
