//! Dataset loading, validation, and canonical storage.
//!
//! Annotations travel as COCO-style JSON (`images` / `annotations` /
//! `categories` arrays, `bbox` as `[x, y, w, h]`). Image ids may be JSON
//! integers or strings on input; they are handled as strings internally
//! and written back as strings. Serialization is canonical: UTF-8, sorted
//! keys, samples sorted by id, six-decimal box coordinates, so two saves
//! of the same dataset are byte-identical.

use crate::canonical::Value;
use crate::geometry::{BoundingBox, GeometryError, ImageExtent, DEGENERATE_BOX_EPS};
use crate::imageops::{Annotation, PixelImage, Provenance};
use rayon::prelude::*;
use serde::Deserialize;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse {path} as annotation JSON: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("dataset validation failed:\n{}", issues.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n"))]
    Validation { issues: Vec<LoadIssue> },
    #[error("image codec failure for '{id}': {message}")]
    Codec { id: String, message: String },
    #[error("sample '{0}' carries no decoded pixels")]
    MissingPixels(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One problem found while loading; fatal in strict mode, skipped and
/// reported in lenient mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadIssue {
    pub sample_id: Option<String>,
    pub message: String,
}

impl std::fmt::Display for LoadIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.sample_id {
            Some(id) => write!(f, "sample '{id}': {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// Ordered class catalog mapping dense indices to COCO category ids/names.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassCatalog {
    entries: Vec<ClassEntry>,
    by_id: HashMap<u64, usize>,
    by_name: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEntry {
    pub id: u64,
    pub name: String,
}

impl ClassCatalog {
    pub fn from_entries(entries: Vec<ClassEntry>) -> Result<Self, String> {
        let mut by_id = HashMap::new();
        let mut by_name = HashMap::new();
        for (index, entry) in entries.iter().enumerate() {
            if by_id.insert(entry.id, index).is_some() {
                return Err(format!("duplicate category id {}", entry.id));
            }
            if by_name.insert(entry.name.clone(), index).is_some() {
                return Err(format!("duplicate category name '{}'", entry.name));
            }
        }
        Ok(Self {
            entries,
            by_id,
            by_name,
        })
    }

    /// Catalog from bare names, with ids 1..=n.
    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Self {
        let entries = names
            .into_iter()
            .enumerate()
            .map(|(i, name)| ClassEntry {
                id: i as u64 + 1,
                name,
            })
            .collect();
        Self::from_entries(entries).expect("generated ids are unique")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn index_of_id(&self, id: u64) -> Option<usize> {
        self.by_id.get(&id).copied()
    }

    pub fn index_of_name(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn name_of(&self, index: usize) -> Option<&str> {
        self.entries.get(index).map(|e| e.name.as_str())
    }

    pub fn id_of(&self, index: usize) -> Option<u64> {
        self.entries.get(index).map(|e| e.id)
    }
}

/// One image with its annotations. `image` is `Some` once pixels have been
/// decoded (annotation-only loads leave it `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub file_name: String,
    pub extent: ImageExtent,
    pub annotations: Vec<Annotation>,
    pub image: Option<PixelImage>,
}

/// A collection of samples plus the class catalog they reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub classes: ClassCatalog,
    /// Base directory image `file_name`s are relative to.
    pub root: PathBuf,
    pub metadata: BTreeMap<String, String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_by_id(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Check the in-memory invariants: unique ids, known classes, boxes
    /// inside their extents, weights in (0, 1].
    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut issues = Vec::new();
        let mut seen = HashSet::new();
        for sample in &self.samples {
            if !seen.insert(sample.id.as_str()) {
                issues.push(LoadIssue {
                    sample_id: Some(sample.id.clone()),
                    message: "duplicate sample id".into(),
                });
            }
            for ann in &sample.annotations {
                if ann.class_id >= self.classes.len() {
                    issues.push(LoadIssue {
                        sample_id: Some(sample.id.clone()),
                        message: format!(
                            "annotation references unknown class index {}",
                            ann.class_id
                        ),
                    });
                }
                if !(ann.weight > 0.0 && ann.weight <= 1.0) {
                    issues.push(LoadIssue {
                        sample_id: Some(sample.id.clone()),
                        message: format!("annotation weight {} outside (0, 1]", ann.weight),
                    });
                }
                if !ann.bbox.within_extent(sample.extent) {
                    issues.push(LoadIssue {
                        sample_id: Some(sample.id.clone()),
                        message: format!(
                            "box {:?} outside extent {}",
                            ann.bbox.xywh(),
                            sample.extent
                        ),
                    });
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(DatasetError::Validation { issues })
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Deserialize)]
struct RawCoco {
    #[serde(default)]
    images: Vec<RawImage>,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
    #[serde(default)]
    categories: Vec<RawCategory>,
    #[serde(default)]
    metadata: Option<BTreeMap<String, String>>,
}

#[derive(Deserialize)]
struct RawImage {
    id: RawId,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct RawAnnotation {
    image_id: RawId,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default)]
    weight: Option<f64>,
    #[serde(default)]
    provenance: Option<String>,
}

#[derive(Deserialize)]
struct RawCategory {
    id: u64,
    name: String,
}

/// COCO ids appear both as integers and strings in the wild.
#[derive(Deserialize, Clone)]
#[serde(untagged)]
enum RawId {
    Int(u64),
    Str(String),
}

impl RawId {
    fn into_string(self) -> String {
        match self {
            RawId::Int(v) => v.to_string(),
            RawId::Str(s) => s,
        }
    }
}

fn read_and_parse(path: &Path) -> Result<RawCoco, DatasetError> {
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| DatasetError::Parse {
        path: path.to_owned(),
        message: format!("{e} (line {}, column {})", e.line(), e.column()),
    })
}

/// Load annotations only; `image` stays `None` and declared extents are
/// trusted. Samples are sorted by id.
pub fn load_annotations(
    annotation_file: &Path,
    image_root: &Path,
) -> Result<Dataset, DatasetError> {
    let loaded = load_impl(annotation_file, image_root, DecodeMode::None, true)?;
    Ok(loaded.dataset)
}

/// Result of a dataset load: the dataset plus any non-fatal issues found
/// in lenient mode.
#[derive(Debug)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub issues: Vec<LoadIssue>,
}

/// Load and decode a dataset.
///
/// In strict mode every referenced image must decode and match its
/// declared dimensions, and every problem is fatal. In lenient mode
/// offending samples are skipped and reported in `issues`. Structural
/// corruption (unknown category or image references, duplicate ids) is
/// fatal in both modes.
pub fn load_dataset(
    annotation_file: &Path,
    image_root: &Path,
    strict: bool,
) -> Result<LoadedDataset, DatasetError> {
    load_impl(annotation_file, image_root, DecodeMode::Decode, strict)
}

#[derive(PartialEq, Clone, Copy)]
enum DecodeMode {
    None,
    Decode,
}

fn load_impl(
    annotation_file: &Path,
    image_root: &Path,
    decode: DecodeMode,
    strict: bool,
) -> Result<LoadedDataset, DatasetError> {
    let raw = read_and_parse(annotation_file)?;

    let entries: Vec<ClassEntry> = raw
        .categories
        .iter()
        .map(|c| ClassEntry {
            id: c.id,
            name: c.name.clone(),
        })
        .collect();
    let classes =
        ClassCatalog::from_entries(entries).map_err(|message| DatasetError::Validation {
            issues: vec![LoadIssue {
                sample_id: None,
                message,
            }],
        })?;

    let mut samples: Vec<Sample> = Vec::with_capacity(raw.images.len());
    let mut index_by_id: HashMap<String, usize> = HashMap::new();
    let mut structural: Vec<LoadIssue> = Vec::new();

    for image in raw.images {
        let id = image.id.into_string();
        let extent = match ImageExtent::try_new(image.width, image.height) {
            Ok(e) => e,
            Err(_) => {
                structural.push(LoadIssue {
                    sample_id: Some(id),
                    message: format!(
                        "declared dimensions {}x{} are invalid",
                        image.width, image.height
                    ),
                });
                continue;
            }
        };
        if index_by_id.contains_key(&id) {
            structural.push(LoadIssue {
                sample_id: Some(id),
                message: "duplicate image id".into(),
            });
            continue;
        }
        index_by_id.insert(id.clone(), samples.len());
        samples.push(Sample {
            id,
            file_name: image.file_name,
            extent,
            annotations: Vec::new(),
            image: None,
        });
    }
    if !structural.is_empty() {
        return Err(DatasetError::Validation { issues: structural });
    }

    let mut issues: Vec<LoadIssue> = Vec::new();
    for (ann_index, ann) in raw.annotations.into_iter().enumerate() {
        let image_id = ann.image_id.into_string();
        let sample_index = *index_by_id
            .get(&image_id)
            .ok_or_else(|| DatasetError::Validation {
                issues: vec![LoadIssue {
                    sample_id: Some(image_id.clone()),
                    message: format!(
                        "annotation {ann_index} references unknown image id '{image_id}'"
                    ),
                }],
            })?;
        let class_id =
            classes
                .index_of_id(ann.category_id)
                .ok_or_else(|| DatasetError::Validation {
                    issues: vec![LoadIssue {
                        sample_id: Some(image_id.clone()),
                        message: format!(
                            "annotation {ann_index} references unknown category id {}",
                            ann.category_id
                        ),
                    }],
                })?;

        let sample = &mut samples[sample_index];
        let [x, y, w, h] = ann.bbox;
        let parsed = BoundingBox::try_new(x, y, w, h)
            .ok()
            .and_then(|b| b.clipped_to(sample.extent))
            .filter(|b| b.width() > DEGENERATE_BOX_EPS && b.height() > DEGENERATE_BOX_EPS);
        let bbox = match parsed {
            Some(b) => b,
            None => {
                issues.push(LoadIssue {
                    sample_id: Some(sample.id.clone()),
                    message: format!("degenerate bbox [{x}, {y}, {w}, {h}] dropped"),
                });
                continue;
            }
        };

        let weight = ann.weight.unwrap_or(1.0);
        if !(weight > 0.0 && weight <= 1.0) {
            issues.push(LoadIssue {
                sample_id: Some(sample.id.clone()),
                message: format!("annotation weight {weight} outside (0, 1], dropped"),
            });
            continue;
        }
        let provenance = match &ann.provenance {
            None => Provenance::Original,
            Some(tag) => match Provenance::parse(tag) {
                Some(p) => p,
                None => {
                    issues.push(LoadIssue {
                        sample_id: Some(sample.id.clone()),
                        message: format!("unknown provenance tag '{tag}', dropped"),
                    });
                    continue;
                }
            },
        };
        sample.annotations.push(Annotation {
            bbox,
            class_id,
            weight,
            provenance,
        });
    }

    if decode == DecodeMode::Decode {
        let decoded: Vec<Result<PixelImage, LoadIssue>> = samples
            .par_iter()
            .map(|sample| {
                let path = image_root.join(&sample.file_name);
                let image = image::open(&path).map_err(|e| LoadIssue {
                    sample_id: Some(sample.id.clone()),
                    message: format!("cannot decode '{}': {e}", path.display()),
                })?;
                let rgb = image.to_rgb8();
                if (rgb.width(), rgb.height()) != (sample.extent.width(), sample.extent.height()) {
                    return Err(LoadIssue {
                        sample_id: Some(sample.id.clone()),
                        message: format!(
                            "decoded size {}x{} does not match declared {}",
                            rgb.width(),
                            rgb.height(),
                            sample.extent
                        ),
                    });
                }
                let extent = ImageExtent::new(rgb.width(), rgb.height());
                Ok(PixelImage::from_raw(extent, rgb.into_raw()).expect("buffer sized by codec"))
            })
            .collect();
        let mut kept = Vec::with_capacity(samples.len());
        for (mut sample, result) in samples.into_iter().zip(decoded) {
            match result {
                Ok(pixels) => {
                    sample.image = Some(pixels);
                    kept.push(sample);
                }
                Err(issue) => issues.push(issue),
            }
        }
        samples = kept;
    }

    if strict && !issues.is_empty() {
        return Err(DatasetError::Validation { issues });
    }

    samples.sort_by(|a, b| a.id.cmp(&b.id));
    let dataset = Dataset {
        samples,
        classes,
        root: image_root.to_owned(),
        metadata: raw.metadata.unwrap_or_default(),
    };
    Ok(LoadedDataset { dataset, issues })
}

// ---------------------------------------------------------------------------
// Canonical serialization

/// Round a coordinate to the canonical six decimals and clamp the box to
/// its extent so the printed values always satisfy the invariants.
fn canonical_bbox(bbox: &BoundingBox, extent: ImageExtent) -> [f64; 4] {
    let round6 = |v: f64| (v * 1e6).round() / 1e6;
    let (w, h) = (extent.width() as f64, extent.height() as f64);
    let x = round6(bbox.x_min()).clamp(0.0, w);
    let y = round6(bbox.y_min()).clamp(0.0, h);
    let bw = round6(bbox.width()).min(w - x);
    let bh = round6(bbox.height()).min(h - y);
    [x, y, bw, bh]
}

/// Canonical annotation JSON for the dataset. Pure: does not touch disk
/// or rename files. `serialize(load(serialize(d))) == serialize(d)`.
pub fn canonical_annotation_json(dataset: &Dataset) -> String {
    let mut order: Vec<usize> = (0..dataset.samples.len()).collect();
    order.sort_by(|&a, &b| dataset.samples[a].id.cmp(&dataset.samples[b].id));

    let images = Value::array(order.iter().map(|&i| {
        let s = &dataset.samples[i];
        Value::object([
            ("file_name", Value::str(&s.file_name)),
            ("height", Value::UInt(s.extent.height() as u64)),
            ("id", Value::str(&s.id)),
            ("width", Value::UInt(s.extent.width() as u64)),
        ])
    }));

    let mut ann_id = 0u64;
    let mut annotations = Vec::new();
    for &i in &order {
        let s = &dataset.samples[i];
        for ann in &s.annotations {
            ann_id += 1;
            let [x, y, w, h] = canonical_bbox(&ann.bbox, s.extent);
            annotations.push(Value::object([
                ("area", Value::Fixed(w * h)),
                (
                    "bbox",
                    Value::array([
                        Value::Fixed(x),
                        Value::Fixed(y),
                        Value::Fixed(w),
                        Value::Fixed(h),
                    ]),
                ),
                (
                    "category_id",
                    Value::UInt(dataset.classes.id_of(ann.class_id).unwrap_or(0)),
                ),
                ("id", Value::UInt(ann_id)),
                ("image_id", Value::str(&s.id)),
                ("iscrowd", Value::UInt(0)),
                ("provenance", Value::str(ann.provenance.as_str())),
                ("weight", Value::Fixed(ann.weight)),
            ]));
        }
    }

    let categories = Value::array(
        dataset
            .classes
            .entries()
            .iter()
            .map(|c| Value::object([("id", Value::UInt(c.id)), ("name", Value::str(&c.name))])),
    );

    let metadata = Value::Object(
        dataset
            .metadata
            .iter()
            .map(|(k, v)| (k.clone(), Value::str(v)))
            .collect(),
    );

    let doc = Value::object([
        ("annotations", Value::Array(annotations)),
        ("categories", categories),
        ("images", images),
        ("metadata", metadata),
    ]);
    let mut json = doc.to_json_string();
    json.push('\n');
    json
}

/// On-disk image encoding for [`save_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageFormat {
    Png,
    Jpeg { quality: u8 },
}

impl StorageFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            StorageFormat::Png => "png",
            StorageFormat::Jpeg { .. } => "jpg",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileEntry {
    pub path: PathBuf,
    pub bytes: u64,
}

/// What a save wrote: every file path with its size.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SaveManifest {
    pub files: Vec<FileEntry>,
}

impl SaveManifest {
    pub fn total_bytes(&self) -> u64 {
        self.files.iter().map(|f| f.bytes).sum()
    }
}

/// Replace path-hostile characters so a sample id can name a file.
pub fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Materialize the dataset: canonical `annotations.json` plus one image
/// file per sample under `images/`, named by sample id. The dataset's
/// in-memory `file_name`s are rewritten to the stored names first so the
/// annotation file matches the files on disk.
pub fn save_dataset(
    dataset: &mut Dataset,
    out_dir: &Path,
    format: StorageFormat,
) -> Result<SaveManifest, DatasetError> {
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|source| DatasetError::Io {
        path: images_dir.clone(),
        source,
    })?;

    let mut names = HashSet::new();
    for sample in &mut dataset.samples {
        let base = sanitize_id(&sample.id);
        let mut candidate = format!("{base}.{}", format.extension());
        let mut suffix = 1;
        while !names.insert(candidate.clone()) {
            suffix += 1;
            candidate = format!("{base}-{suffix}.{}", format.extension());
        }
        sample.file_name = candidate;
    }

    let encoded: Vec<Result<(PathBuf, Vec<u8>), DatasetError>> = dataset
        .samples
        .par_iter()
        .map(|sample| {
            let pixels = sample
                .image
                .as_ref()
                .ok_or_else(|| DatasetError::MissingPixels(sample.id.clone()))?;
            let bytes = encode_image(pixels, format).map_err(|message| DatasetError::Codec {
                id: sample.id.clone(),
                message,
            })?;
            Ok((images_dir.join(&sample.file_name), bytes))
        })
        .collect();

    let mut files = Vec::with_capacity(encoded.len() + 1);
    for result in encoded {
        let (path, bytes) = result?;
        std::fs::write(&path, &bytes).map_err(|source| DatasetError::Io {
            path: path.clone(),
            source,
        })?;
        files.push(FileEntry {
            path,
            bytes: bytes.len() as u64,
        });
    }

    let json = canonical_annotation_json(dataset);
    let ann_path = out_dir.join("annotations.json");
    std::fs::write(&ann_path, json.as_bytes()).map_err(|source| DatasetError::Io {
        path: ann_path.clone(),
        source,
    })?;
    files.push(FileEntry {
        path: ann_path,
        bytes: json.len() as u64,
    });

    files.sort_by(|a, b| a.path.cmp(&b.path));
    dataset.root = images_dir;
    Ok(SaveManifest { files })
}

pub fn encode_image(pixels: &PixelImage, format: StorageFormat) -> Result<Vec<u8>, String> {
    match format {
        StorageFormat::Png => {
            let mut bytes = Vec::new();
            let encoder = image::codecs::png::PngEncoder::new(&mut bytes);
            image::ImageEncoder::write_image(
                encoder,
                pixels.as_raw(),
                pixels.width(),
                pixels.height(),
                image::ExtendedColorType::Rgb8,
            )
            .map_err(|e| e.to_string())?;
            Ok(bytes)
        }
        StorageFormat::Jpeg { quality } => {
            crate::imageops::encode_jpeg(pixels, quality).map_err(|e| e.to_string())
        }
    }
}
