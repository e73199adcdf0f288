//! Deterministic synthetic datasets for tests and benchmarks.
//!
//! Images are smooth gradients with drawn rectangles plus mild noise, so
//! JPEG sizes and PSNR behave like photographic content; boxes sit on
//! integer coordinates so geometric involutions are exact.

use boxaug::dataset_io::{ClassCatalog, Dataset, Sample};
use boxaug::geometry::{BoundingBox, ImageExtent};
use boxaug::imageops::{Annotation, PixelImage};
use boxaug::rng::{derive_stream, RngStream};
use std::collections::BTreeMap;
use std::path::PathBuf;

/// Smooth, photo-like image: sinusoidal gradients plus light noise.
pub fn synth_image(width: u32, height: u32, seed: u64) -> PixelImage {
    let mut rng = derive_stream(seed, "fixture-image", 0);
    let phase = rng.next_f64() * std::f64::consts::TAU;
    let mut img = PixelImage::new(ImageExtent::new(width, height));
    for y in 0..height {
        for x in 0..width {
            let fx = x as f64 / width as f64;
            let fy = y as f64 / height as f64;
            let noise = rng.next_f64() * 12.0 - 6.0;
            let r = 127.5 + 100.0 * ((fx * 6.3 + phase).sin() * (fy * 4.1).cos()) + noise;
            let g = 127.5 + 80.0 * ((fx * 2.7 - fy * 3.9 + phase).sin());
            let b = 30.0 + 200.0 * fx * (1.0 - fy);
            img.put(x, y, [clamp8(r), clamp8(g), clamp8(b)]);
        }
    }
    img
}

fn clamp8(v: f64) -> u8 {
    v.clamp(0.0, 255.0) as u8
}

fn draw_rect(img: &mut PixelImage, bbox: &BoundingBox, rgb: [u8; 3]) {
    let x0 = bbox.x_min() as u32;
    let y0 = bbox.y_min() as u32;
    let x1 = (bbox.x_max() as u32).min(img.width());
    let y1 = (bbox.y_max() as u32).min(img.height());
    for y in y0..y1 {
        for x in x0..x1 {
            img.put(x, y, rgb);
        }
    }
}

/// Integer-coordinate box fitting the extent, with dimensions in
/// `[min_dim, max_dim]`.
pub fn random_box(
    extent: ImageExtent,
    rng: &mut RngStream,
    min_dim: u32,
    max_dim: u32,
) -> BoundingBox {
    let max_w = max_dim.min(extent.width().saturating_sub(1)).max(min_dim);
    let max_h = max_dim.min(extent.height().saturating_sub(1)).max(min_dim);
    let w = min_dim + rng.next_index((max_w - min_dim + 1) as usize) as u32;
    let h = min_dim + rng.next_index((max_h - min_dim + 1) as usize) as u32;
    let x = rng.next_index((extent.width() - w + 1) as usize) as u32;
    let y = rng.next_index((extent.height() - h + 1) as usize) as u32;
    BoundingBox::new(x as f64, y as f64, w as f64, h as f64)
}

/// How the annotations of a synthesized sample overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapPolicy {
    /// All boxes pairwise below 0.3 IoU (placed on a coarse grid).
    Isolated,
    /// Half the samples get one heavily overlapped pair (IoU >= 0.3)
    /// alongside the isolated boxes.
    Mixed,
}

/// One synthetic sample with `n_boxes` annotated objects drawn into it.
pub fn synth_sample(
    id: &str,
    extent: ImageExtent,
    n_boxes: usize,
    n_classes: usize,
    seed: u64,
    policy: OverlapPolicy,
) -> Sample {
    let mut rng = derive_stream(seed, id, 1);
    let mut image = synth_image(extent.width(), extent.height(), seed ^ 0x5eed);
    let mut annotations = Vec::with_capacity(n_boxes + 2);

    // Cells on a 3x3 grid keep the isolated boxes apart. Tiny extents
    // degenerate to 1x1 cells and 1x1 boxes.
    let cell_w = (extent.width() / 3).max(1);
    let cell_h = (extent.height() / 3).max(1);
    let mut cells: Vec<(u32, u32)> = (0..9).map(|i| (i % 3, i / 3)).collect();
    for i in 0..n_boxes.min(9) {
        let pick = i + rng.next_index(cells.len() - i).min(cells.len() - 1 - i);
        cells.swap(i, pick);
        let (cx, cy) = cells[i];
        let min_w = 3.min(cell_w);
        let min_h = 3.min(cell_h);
        let w = min_w + rng.next_index((cell_w - min_w + 1) as usize) as u32;
        let h = min_h + rng.next_index((cell_h - min_h + 1) as usize) as u32;
        let x = (cx * cell_w + rng.next_index((cell_w - w + 1) as usize) as u32)
            .min(extent.width() - w);
        let y = (cy * cell_h + rng.next_index((cell_h - h + 1) as usize) as u32)
            .min(extent.height() - h);
        let bbox = BoundingBox::new(x as f64, y as f64, w as f64, h as f64);
        let class_id = rng.next_index(n_classes);
        let tint = [
            (40 + class_id * 60 % 200) as u8,
            (200 - class_id * 45 % 180) as u8,
            (90 + class_id * 97 % 160) as u8,
        ];
        draw_rect(&mut image, &bbox, tint);
        annotations.push(Annotation::new(bbox, class_id));
    }

    if policy == OverlapPolicy::Mixed && rng.next_f64() < 0.5 {
        // A pair shifted by a quarter of its width overlaps well above 0.3.
        let base = random_box(extent, &mut rng, 8, (extent.width() / 3).max(9));
        let shift = (base.width() / 4.0).max(1.0);
        let partner = BoundingBox::new(
            (base.x_min() + shift).min(extent.width() as f64 - base.width()),
            base.y_min(),
            base.width(),
            base.height(),
        );
        let class_id = rng.next_index(n_classes);
        draw_rect(&mut image, &base, [220, 40, 40]);
        draw_rect(&mut image, &partner, [40, 40, 220]);
        annotations.push(Annotation::new(base, class_id));
        annotations.push(Annotation::new(partner, class_id));
    }

    Sample {
        id: id.to_owned(),
        file_name: format!("{id}.png"),
        extent,
        annotations,
        image: Some(image),
    }
}

/// In-memory dataset of `n` samples. `root` is empty until materialized.
pub fn synth_dataset(
    n: usize,
    extent: ImageExtent,
    class_names: &[&str],
    seed: u64,
    policy: OverlapPolicy,
) -> Dataset {
    let classes = ClassCatalog::from_names(
        class_names
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
    );
    let samples = (0..n)
        .map(|i| {
            let id = format!("img{i:05}");
            let boxes = 1 + (i % 3);
            synth_sample(
                &id,
                extent,
                boxes,
                class_names.len(),
                seed.wrapping_add(i as u64),
                policy,
            )
        })
        .collect();
    Dataset {
        samples,
        classes,
        root: PathBuf::new(),
        metadata: BTreeMap::new(),
    }
}
