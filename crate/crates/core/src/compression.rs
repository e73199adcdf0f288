//! Lossy-compressed dataset variants and storage/fidelity reporting.
//!
//! Every image is re-encoded as baseline JPEG (4:2:0 chroma subsampling)
//! at each requested quality level; annotations are copied verbatim, so
//! the annotation JSON is byte-identical across variants. The report
//! tracks per-image sizes, totals, the ratio against the original files
//! on disk, and mean PSNR of the decoded variants.

use crate::canonical::Value;
use crate::dataset_io::{
    canonical_annotation_json, Dataset, DatasetError, FileEntry, SaveManifest,
};
use crate::imageops::{decode_jpeg, encode_jpeg, PixelImage};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompressionError {
    #[error("quality levels must be non-empty and each in 1..=100")]
    InvalidLevels,
    #[error("extent mismatch: {0} vs {1}")]
    ExtentMismatch(String, String),
    #[error("codec failure for sample '{id}': {message}")]
    Codec { id: String, message: String },
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Peak signal-to-noise ratio in decibels over all channels;
/// `f64::INFINITY` when the images are identical.
pub fn psnr(original: &PixelImage, degraded: &PixelImage) -> Result<f64, CompressionError> {
    if original.extent() != degraded.extent() {
        return Err(CompressionError::ExtentMismatch(
            original.extent().to_string(),
            degraded.extent().to_string(),
        ));
    }
    // Exact integer sum of squared differences.
    let sse: u64 = original
        .as_raw()
        .iter()
        .zip(degraded.as_raw())
        .map(|(&a, &b)| {
            let d = a as i64 - b as i64;
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / original.as_raw().len() as f64;
    Ok(10.0 * ((255.0 * 255.0) / mse).log10())
}

/// Storage and fidelity statistics for one quality level.
#[derive(Debug, Clone)]
pub struct LevelReport {
    pub quality: u8,
    pub total_bytes: u64,
    pub ratio_vs_original: f64,
    /// `(sample_id, bytes)` in sample order.
    pub per_image_bytes: Vec<(String, u64)>,
    pub mean_psnr_db: Option<f64>,
    /// Samples skipped after codec failures (lenient mode only).
    pub skipped: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct CompressionReport {
    pub original_total_bytes: u64,
    pub levels: Vec<LevelReport>,
}

impl CompressionReport {
    pub fn to_canonical_value(&self) -> Value {
        Value::object([
            (
                "original_total_bytes",
                Value::UInt(self.original_total_bytes),
            ),
            (
                "levels",
                Value::array(self.levels.iter().map(|level| {
                    Value::object([
                        ("quality", Value::UInt(level.quality as u64)),
                        ("total_bytes", Value::UInt(level.total_bytes)),
                        ("ratio_vs_original", Value::Fixed(level.ratio_vs_original)),
                        (
                            "per_image_bytes",
                            Value::array(level.per_image_bytes.iter().map(|(id, bytes)| {
                                Value::object([
                                    ("id", Value::str(id)),
                                    ("bytes", Value::UInt(*bytes)),
                                ])
                            })),
                        ),
                        (
                            "mean_psnr_db",
                            match level.mean_psnr_db {
                                Some(v) if v.is_finite() => Value::Fixed(v),
                                Some(_) => Value::str("inf"),
                                None => Value::Null,
                            },
                        ),
                        (
                            "skipped",
                            Value::array(level.skipped.iter().map(|(id, why)| {
                                Value::object([("id", Value::str(id)), ("reason", Value::str(why))])
                            })),
                        ),
                    ])
                })),
            ),
        ])
    }

    /// Human-readable summary table.
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:>8} {:>14} {:>10} {:>12}\n",
            "quality", "total bytes", "ratio", "mean PSNR"
        ));
        for level in &self.levels {
            let psnr = match level.mean_psnr_db {
                Some(v) if v.is_finite() => format!("{v:.2} dB"),
                Some(_) => "inf".into(),
                None => "-".into(),
            };
            out.push_str(&format!(
                "{:>8} {:>14} {:>10.4} {:>12}\n",
                level.quality, level.total_bytes, level.ratio_vs_original, psnr
            ));
        }
        out.push_str(&format!(
            "original total bytes: {}\n",
            self.original_total_bytes
        ));
        out
    }
}

/// One produced variant: the re-encoded dataset plus its file manifest.
#[derive(Debug)]
pub struct Variant {
    pub quality: u8,
    pub dataset: Dataset,
    pub manifest: SaveManifest,
    pub out_dir: PathBuf,
}

/// Re-encode every image at each quality level into `out_dir/q<level>/`,
/// mirroring the source layout (`annotations.json` + `images/`).
///
/// The source dataset must carry decoded pixels; original byte sizes are
/// taken from the files referenced by `dataset.root`. In strict mode any
/// codec failure aborts; in lenient mode the sample is skipped and
/// recorded in the report.
pub fn compress_dataset(
    dataset: &Dataset,
    levels: &[u8],
    out_dir: &Path,
    strict: bool,
) -> Result<(Vec<Variant>, CompressionReport), CompressionError> {
    if levels.is_empty() || levels.iter().any(|q| !(1..=100).contains(q)) {
        return Err(CompressionError::InvalidLevels);
    }

    let mut original_total_bytes = 0u64;
    for sample in &dataset.samples {
        let path = dataset.root.join(&sample.file_name);
        let meta =
            std::fs::metadata(&path).map_err(|source| CompressionError::Io { path, source })?;
        original_total_bytes += meta.len();
    }

    let mut variants = Vec::with_capacity(levels.len());
    let mut reports = Vec::with_capacity(levels.len());
    for &quality in levels {
        let variant_dir = out_dir.join(format!("q{quality}"));
        let images_dir = variant_dir.join("images");
        std::fs::create_dir_all(&images_dir).map_err(|source| CompressionError::Io {
            path: images_dir.clone(),
            source,
        })?;

        struct Encoded {
            id: String,
            file_name: String,
            bytes: Vec<u8>,
            decoded: PixelImage,
            psnr_db: f64,
        }

        let encoded: Vec<Result<Encoded, (String, String)>> = dataset
            .samples
            .par_iter()
            .map(|sample| {
                let pixels = sample
                    .image
                    .as_ref()
                    .ok_or_else(|| (sample.id.clone(), "no decoded pixels".to_string()))?;
                let bytes =
                    encode_jpeg(pixels, quality).map_err(|e| (sample.id.clone(), e.to_string()))?;
                let decoded =
                    decode_jpeg(&bytes).map_err(|e| (sample.id.clone(), e.to_string()))?;
                let psnr_db =
                    psnr(pixels, &decoded).map_err(|e| (sample.id.clone(), e.to_string()))?;
                let stem = crate::dataset_io::sanitize_id(&sample.id);
                Ok(Encoded {
                    id: sample.id.clone(),
                    file_name: format!("{stem}.jpg"),
                    bytes,
                    decoded,
                    psnr_db,
                })
            })
            .collect();

        let mut variant_dataset = Dataset {
            samples: Vec::with_capacity(dataset.len()),
            classes: dataset.classes.clone(),
            root: images_dir.clone(),
            metadata: dataset.metadata.clone(),
        };
        let mut per_image_bytes = Vec::with_capacity(dataset.len());
        let mut skipped = Vec::new();
        let mut psnr_sum = 0.0f64;
        let mut psnr_n = 0usize;
        let mut files = Vec::with_capacity(dataset.len() + 1);

        for (sample, result) in dataset.samples.iter().zip(encoded) {
            let item = match result {
                Ok(item) => item,
                Err((id, message)) => {
                    if strict {
                        return Err(CompressionError::Codec { id, message });
                    }
                    skipped.push((id, message));
                    continue;
                }
            };
            let path = images_dir.join(&item.file_name);
            std::fs::write(&path, &item.bytes).map_err(|source| CompressionError::Io {
                path: path.clone(),
                source,
            })?;
            files.push(FileEntry {
                path,
                bytes: item.bytes.len() as u64,
            });
            per_image_bytes.push((item.id.clone(), item.bytes.len() as u64));
            if item.psnr_db.is_finite() {
                psnr_sum += item.psnr_db;
                psnr_n += 1;
            }
            let mut out_sample = sample.clone();
            out_sample.file_name = item.file_name;
            out_sample.image = Some(item.decoded);
            variant_dataset.samples.push(out_sample);
        }

        let json = canonical_annotation_json(&variant_dataset);
        let ann_path = variant_dir.join("annotations.json");
        std::fs::write(&ann_path, json.as_bytes()).map_err(|source| CompressionError::Io {
            path: ann_path.clone(),
            source,
        })?;
        files.push(FileEntry {
            path: ann_path,
            bytes: json.len() as u64,
        });
        files.sort_by(|a, b| a.path.cmp(&b.path));

        let total_bytes: u64 = per_image_bytes.iter().map(|(_, b)| b).sum();
        reports.push(LevelReport {
            quality,
            total_bytes,
            ratio_vs_original: if original_total_bytes == 0 {
                0.0
            } else {
                total_bytes as f64 / original_total_bytes as f64
            },
            per_image_bytes,
            mean_psnr_db: if psnr_n > 0 {
                Some(psnr_sum / psnr_n as f64)
            } else {
                None
            },
            skipped,
        });
        variants.push(Variant {
            quality,
            dataset: variant_dataset,
            manifest: SaveManifest { files },
            out_dir: variant_dir,
        });
    }

    Ok((
        variants,
        CompressionReport {
            original_total_bytes,
            levels: reports,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::{save_dataset, ClassCatalog, Sample, StorageFormat};
    use crate::geometry::{BoundingBox, ImageExtent};
    use crate::imageops::Annotation;
    use std::collections::BTreeMap;
    use tempfile::TempDir;

    fn photo_like(w: u32, h: u32, phase: f64) -> PixelImage {
        let mut img = PixelImage::new(ImageExtent::new(w, h));
        for y in 0..h {
            for x in 0..w {
                let fx = x as f64 / w as f64;
                let fy = y as f64 / h as f64;
                let r = 127.5 + 110.0 * ((fx * 7.0 + phase).sin() * (fy * 5.0).cos());
                let g = 127.5 + 90.0 * ((fx * 3.0 - fy * 4.0 + phase).sin());
                let b = 40.0 + 180.0 * fx * fy;
                img.put(x, y, [r as u8, g as u8, b as u8]);
            }
        }
        img
    }

    fn photo_dataset(dir: &Path, n: usize) -> Dataset {
        let classes = ClassCatalog::from_names(vec!["item".into()]);
        let samples = (0..n)
            .map(|i| {
                let image = photo_like(48, 40, i as f64 * 0.7);
                Sample {
                    id: format!("p{i:03}"),
                    file_name: format!("p{i:03}.png"),
                    extent: image.extent(),
                    annotations: vec![Annotation::new(BoundingBox::new(2.0, 2.0, 10.0, 8.0), 0)],
                    image: Some(image),
                }
            })
            .collect();
        let mut ds = Dataset {
            samples,
            classes,
            root: dir.to_owned(),
            metadata: BTreeMap::new(),
        };
        save_dataset(&mut ds, dir, StorageFormat::Png).unwrap();
        ds
    }

    #[test]
    fn psnr_identical_images_is_infinite() {
        let img = photo_like(16, 16, 0.0);
        assert_eq!(psnr(&img, &img).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_black_vs_white_is_zero_db() {
        let black = PixelImage::new(ImageExtent::new(8, 8));
        let white = PixelImage::filled(ImageExtent::new(8, 8), [255, 255, 255]);
        assert!(psnr(&black, &white).unwrap().abs() < 1e-12);
    }

    #[test]
    fn psnr_is_symmetric_and_matches_brute_force() {
        let a = photo_like(20, 14, 0.1);
        let b = photo_like(20, 14, 0.4);
        let ab = psnr(&a, &b).unwrap();
        let ba = psnr(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        let mse: f64 = a
            .as_raw()
            .iter()
            .zip(b.as_raw())
            .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
            .sum::<f64>()
            / a.as_raw().len() as f64;
        let expected = 10.0 * (255.0f64 * 255.0 / mse).log10();
        assert!((ab - expected).abs() < 1e-9);
    }

    #[test]
    fn psnr_rejects_extent_mismatch() {
        let a = PixelImage::new(ImageExtent::new(8, 8));
        let b = PixelImage::new(ImageExtent::new(8, 9));
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn compress_produces_ordered_variants() {
        let dir = TempDir::new().unwrap();
        let src = dir.path().join("src");
        let ds = photo_dataset(&src, 6);
        let out = dir.path().join("out");
        let (variants, report) = compress_dataset(&ds, &[95, 50, 10], &out, true).unwrap();

        assert_eq!(variants.len(), 3);
        for variant in &variants {
            assert_eq!(variant.dataset.len(), ds.len());
        }

        // Annotation JSON byte-identical across variants.
        let read_ann =
            |q: u8| std::fs::read(out.join(format!("q{q}")).join("annotations.json")).unwrap();
        assert_eq!(read_ann(95), read_ann(50));
        assert_eq!(read_ann(50), read_ann(10));

        // Sizes strictly decrease with quality on photo-like fixtures.
        let bytes: Vec<u64> = report.levels.iter().map(|l| l.total_bytes).collect();
        assert!(
            bytes[0] > bytes[1] && bytes[1] > bytes[2],
            "sizes {bytes:?}"
        );

        // Fidelity decreases with quality.
        let psnrs: Vec<f64> = report
            .levels
            .iter()
            .map(|l| l.mean_psnr_db.unwrap())
            .collect();
        assert!(psnrs[0] > psnrs[1] && psnrs[1] > psnrs[2], "psnr {psnrs:?}");

        // total = sum of per-image sizes, and matches the files on disk.
        for level in &report.levels {
            let sum: u64 = level.per_image_bytes.iter().map(|(_, b)| b).sum();
            assert_eq!(level.total_bytes, sum);
        }
        assert!(report.original_total_bytes > 0);
    }

    #[test]
    fn invalid_levels_are_rejected() {
        let dir = TempDir::new().unwrap();
        let ds = photo_dataset(&dir.path().join("src"), 1);
        assert!(matches!(
            compress_dataset(&ds, &[], dir.path(), true),
            Err(CompressionError::InvalidLevels)
        ));
        assert!(matches!(
            compress_dataset(&ds, &[0], dir.path(), true),
            Err(CompressionError::InvalidLevels)
        ));
    }

    #[test]
    fn report_renders_as_canonical_json_and_table() {
        let dir = TempDir::new().unwrap();
        let ds = photo_dataset(&dir.path().join("src"), 2);
        let (_, report) = compress_dataset(&ds, &[50], &dir.path().join("out"), true).unwrap();
        let json = report.to_canonical_value().to_json_string();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["levels"][0]["quality"], serde_json::json!(50));
        assert!(report.format_table().contains("quality"));
    }
}
