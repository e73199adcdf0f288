//! Sample-combination augmentations: whole-image MixUp, single-object
//! BboxMixUp, box-level CutMix, and its class-targeted ClassCutMix variant.
//!
//! MixUp interpolates two resized images pixel-wise with factor `lambda`
//! and unions their annotations. CutMix composites a masked proportion of
//! one object's box with another object's (resized) box and splits the
//! label weight across both classes. Objects are only eligible for mixing
//! when their IoU with every co-object stays below the isolation
//! threshold, so no partial features enter a sample without a target.

use crate::dataset_io::{Dataset, Sample};
use crate::geometry::{
    is_isolated, pixel_rect, transform_box, BoundingBox, BoxTransform, ImageExtent,
};
use crate::imageops::{blend_images, resize_bilinear, Annotation, PixelImage, Provenance};
use crate::rng::RngStream;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MixerError {
    /// The inputs cannot support this mix; callers decide the fallback
    /// (the pipeline passes the sample through unchanged).
    #[error("mixer ineligible: {0}")]
    Ineligible(String),
    #[error("sample '{0}' carries no decoded pixels")]
    MissingPixels(String),
    #[error("class_cutmix requires params.class_pair")]
    MissingClassPair,
}

/// Knobs shared by the mixers.
#[derive(Debug, Clone, PartialEq)]
pub struct MixerParams {
    /// Interpolation factor of Eq-style blends, in `[0, 1]`.
    pub lambda: f64,
    /// Fraction of the target box kept from the first object, in `(0, 1]`.
    pub mask_proportion: f64,
    /// Maximum IoU an object may have with co-objects to stay eligible.
    pub isolation_threshold: f64,
    /// Class pairing for [`class_cutmix`], as catalog indices.
    pub class_pair: Option<(usize, usize)>,
}

impl Default for MixerParams {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            mask_proportion: 0.5,
            isolation_threshold: 0.3,
            class_pair: None,
        }
    }
}

impl MixerParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if !(self.mask_proportion > 0.0 && self.mask_proportion <= 1.0) {
            return Err(format!(
                "mask_proportion must be in (0, 1], got {}",
                self.mask_proportion
            ));
        }
        if !(0.0..=1.0).contains(&self.isolation_threshold) {
            return Err(format!(
                "isolation_threshold must be in [0, 1], got {}",
                self.isolation_threshold
            ));
        }
        Ok(())
    }
}

/// Which contiguous half of the box the mask keeps from the first object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskOrientation {
    Left,
    Right,
    Top,
    Bottom,
}

impl MaskOrientation {
    const ALL: [MaskOrientation; 4] = [
        MaskOrientation::Left,
        MaskOrientation::Right,
        MaskOrientation::Top,
        MaskOrientation::Bottom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MaskOrientation::Left => "left",
            MaskOrientation::Right => "right",
            MaskOrientation::Top => "top",
            MaskOrientation::Bottom => "bottom",
        }
    }
}

/// Per-pixel selector over a box-sized region: `true` keeps the first
/// object's pixel, `false` takes the second's.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    /// Contiguous half-split with exactly `round(proportion * area)` ones,
    /// grown from the chosen side. A partial column (or row) is filled
    /// top-to-bottom (left-to-right) so the ones stay connected.
    pub fn half_split(
        width: u32,
        height: u32,
        proportion: f64,
        orientation: MaskOrientation,
    ) -> Self {
        let area = width as u64 * height as u64;
        let ones = (proportion * area as f64).round() as u64;
        let mut bits = vec![false; area as usize];
        let mut set = |x: u32, y: u32| bits[(y * width + x) as usize] = true;
        let mut remaining = ones;
        match orientation {
            MaskOrientation::Left | MaskOrientation::Right => {
                'outer: for col in 0..width {
                    let x = if orientation == MaskOrientation::Left {
                        col
                    } else {
                        width - 1 - col
                    };
                    for y in 0..height {
                        if remaining == 0 {
                            break 'outer;
                        }
                        set(x, y);
                        remaining -= 1;
                    }
                }
            }
            MaskOrientation::Top | MaskOrientation::Bottom => {
                'outer: for row in 0..height {
                    let y = if orientation == MaskOrientation::Top {
                        row
                    } else {
                        height - 1 - row
                    };
                    for x in 0..width {
                        if remaining == 0 {
                            break 'outer;
                        }
                        set(x, y);
                        remaining -= 1;
                    }
                }
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn ones(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }
}

/// What a mixer did; feeds pipeline provenance and the isolation checks.
#[derive(Debug, Clone, Default)]
pub struct MixOutcome {
    /// Id of the partner sample, when one was used.
    pub partner_id: Option<String>,
    /// Index of the object chosen from the first sample's annotations.
    pub chosen_from_i: Option<usize>,
    /// Index of the object chosen from the partner's annotations.
    pub chosen_from_j: Option<usize>,
    pub mask_orientation: Option<MaskOrientation>,
}

fn pixels_of(sample: &Sample) -> Result<&PixelImage, MixerError> {
    sample
        .image
        .as_ref()
        .ok_or_else(|| MixerError::MissingPixels(sample.id.clone()))
}

fn other_boxes(anns: &[Annotation], skip: usize) -> Vec<BoundingBox> {
    anns.iter()
        .enumerate()
        .filter(|(i, _)| *i != skip)
        .map(|(_, a)| a.bbox)
        .collect()
}

/// Annotation indices whose boxes are isolated from all co-objects,
/// optionally restricted to one class.
pub fn eligible_objects(
    sample: &Sample,
    threshold: f64,
    class_filter: Option<usize>,
) -> Vec<usize> {
    sample
        .annotations
        .iter()
        .enumerate()
        .filter(|(i, ann)| {
            class_filter.is_none_or(|c| ann.class_id == c)
                && is_isolated(&ann.bbox, &other_boxes(&sample.annotations, *i), threshold)
        })
        .map(|(i, _)| i)
        .collect()
}

fn scale_to(extent_from: ImageExtent, extent_to: ImageExtent) -> BoxTransform {
    BoxTransform::Scale {
        sx: extent_to.width() as f64 / extent_from.width() as f64,
        sy: extent_to.height() as f64 / extent_from.height() as f64,
    }
}

fn scale_box(bbox: &BoundingBox, from: ImageExtent, to: ImageExtent) -> BoundingBox {
    let scaled = transform_box(bbox, &scale_to(from, to))
        .expect("scale cannot fail")
        .expect("scale never drops");
    // Guard float wobble at the far edge.
    scaled.clipped_to(to).unwrap_or(scaled)
}

/// Whole-image interpolation: the partner is resized to the first image's
/// extent, pixels blend as `round(lambda a + (1 - lambda) b)`, and the
/// annotations of both samples are unioned (the partner's boxes scaled by
/// the resize factors). Every output annotation is tagged `mixup`.
pub fn mixup(
    sample_i: &Sample,
    sample_j: &Sample,
    params: &MixerParams,
) -> Result<(Sample, MixOutcome), MixerError> {
    debug_assert!(params.validate().is_ok(), "invalid mixer params");
    let image_i = pixels_of(sample_i)?;
    let image_j = pixels_of(sample_j)?;
    let resized_j = resize_bilinear(image_j, image_i.extent());
    let mixed = blend_images(image_i, &resized_j, params.lambda);

    let mut annotations: Vec<Annotation> = sample_i
        .annotations
        .iter()
        .map(|a| Annotation {
            provenance: Provenance::Mixup,
            ..a.clone()
        })
        .collect();
    annotations.extend(sample_j.annotations.iter().map(|a| Annotation {
        bbox: scale_box(&a.bbox, image_j.extent(), image_i.extent()),
        provenance: Provenance::Mixup,
        ..a.clone()
    }));

    let out = Sample {
        id: sample_i.id.clone(),
        file_name: sample_i.file_name.clone(),
        extent: image_i.extent(),
        annotations,
        image: Some(mixed),
    };
    Ok((
        out,
        MixOutcome {
            partner_id: Some(sample_j.id.clone()),
            ..Default::default()
        },
    ))
}

/// Object-level MixUp: one isolated object of the partner (of
/// `target_class` when given) is chosen uniformly, and only the pixels
/// under its box, after resizing the partner to the first image's extent,
/// are interpolated into the first image. The chosen object's annotation
/// is appended; every other pixel stays byte-identical.
pub fn bbox_mixup(
    sample_i: &Sample,
    sample_j: &Sample,
    params: &MixerParams,
    target_class: Option<usize>,
    rng: &mut RngStream,
) -> Result<(Sample, MixOutcome), MixerError> {
    debug_assert!(params.validate().is_ok(), "invalid mixer params");
    let image_i = pixels_of(sample_i)?;
    let image_j = pixels_of(sample_j)?;

    let candidates = eligible_objects(sample_j, params.isolation_threshold, target_class);
    if candidates.is_empty() {
        return Err(MixerError::Ineligible(format!(
            "partner '{}' has no isolated object{}",
            sample_j.id,
            target_class
                .map(|c| format!(" of class {c}"))
                .unwrap_or_default()
        )));
    }
    let chosen_idx = *rng.choose(&candidates);
    let chosen = &sample_j.annotations[chosen_idx];

    let resized_j = resize_bilinear(image_j, image_i.extent());
    let scaled_box = scale_box(&chosen.bbox, image_j.extent(), image_i.extent());
    let rect = pixel_rect(&scaled_box, image_i.extent());

    let region_i = image_i.crop_rect(rect);
    let region_j = resized_j.crop_rect(rect);
    let blended = blend_images(&region_i, &region_j, params.lambda);

    let mut out_image = image_i.clone();
    out_image.paste_rect(rect, &blended);

    let mut annotations = sample_i.annotations.clone();
    annotations.push(Annotation {
        bbox: scaled_box,
        class_id: chosen.class_id,
        weight: chosen.weight,
        provenance: Provenance::BboxMixup,
    });

    let out = Sample {
        id: sample_i.id.clone(),
        file_name: sample_i.file_name.clone(),
        extent: image_i.extent(),
        annotations,
        image: Some(out_image),
    };
    Ok((
        out,
        MixOutcome {
            partner_id: Some(sample_j.id.clone()),
            chosen_from_j: Some(chosen_idx),
            ..Default::default()
        },
    ))
}

/// CutMix over two chosen objects: the partner object's pixel crop is
/// resized to the first object's box, a contiguous half mask keeps
/// `round(mask_proportion * area)` pixels of the first object, and the
/// composite replaces the first object's region. The first object's
/// annotation is replaced by one annotation per source class at the same
/// coordinates, weighted `mask_proportion` and `1 - mask_proportion`.
pub fn cutmix(
    sample_i: &Sample,
    sample_j: &Sample,
    params: &MixerParams,
    rng: &mut RngStream,
) -> Result<(Sample, MixOutcome), MixerError> {
    debug_assert!(params.validate().is_ok(), "invalid mixer params");
    let candidates_i = eligible_objects(sample_i, params.isolation_threshold, None);
    if candidates_i.is_empty() {
        return Err(MixerError::Ineligible(format!(
            "'{}' has no isolated object",
            sample_i.id
        )));
    }
    let candidates_j = eligible_objects(sample_j, params.isolation_threshold, None);
    if candidates_j.is_empty() {
        return Err(MixerError::Ineligible(format!(
            "partner '{}' has no isolated object",
            sample_j.id
        )));
    }
    let idx_i = *rng.choose(&candidates_i);
    let idx_j = *rng.choose(&candidates_j);
    cutmix_objects(
        sample_i,
        idx_i,
        sample_j,
        idx_j,
        params,
        rng,
        Provenance::Cutmix,
    )
}

/// ClassCutMix: restrict CutMix to a configured class pair. The first
/// sample must carry an isolated object of one paired class; the partner
/// is drawn uniformly from pool samples holding an isolated object of the
/// other class.
pub fn class_cutmix(
    sample_i: &Sample,
    pool: &Dataset,
    params: &MixerParams,
    rng: &mut RngStream,
) -> Result<(Sample, MixOutcome), MixerError> {
    debug_assert!(params.validate().is_ok(), "invalid mixer params");
    let (class_a, class_b) = params.class_pair.ok_or(MixerError::MissingClassPair)?;

    // Candidate objects in sample_i, each tagged with the partner class.
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for (idx, partner_class) in
        eligible_objects(sample_i, params.isolation_threshold, Some(class_a))
            .into_iter()
            .map(|i| (i, class_b))
            .chain(
                eligible_objects(sample_i, params.isolation_threshold, Some(class_b))
                    .into_iter()
                    .map(|i| (i, class_a)),
            )
    {
        candidates.push((idx, partner_class));
    }
    if candidates.is_empty() {
        return Err(MixerError::Ineligible(format!(
            "'{}' has no isolated object of either paired class",
            sample_i.id
        )));
    }
    let (idx_i, partner_class) = *rng.choose(&candidates);

    let partners: Vec<usize> = pool
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            s.id != sample_i.id
                && !eligible_objects(s, params.isolation_threshold, Some(partner_class)).is_empty()
        })
        .map(|(i, _)| i)
        .collect();
    if partners.is_empty() {
        return Err(MixerError::Ineligible(format!(
            "pool has no partner with an isolated object of class {partner_class}"
        )));
    }
    let sample_j = &pool.samples[*rng.choose(&partners)];
    let options_j = eligible_objects(sample_j, params.isolation_threshold, Some(partner_class));
    let idx_j = *rng.choose(&options_j);

    cutmix_objects(
        sample_i,
        idx_i,
        sample_j,
        idx_j,
        params,
        rng,
        Provenance::ClassCutmix,
    )
}

#[allow(clippy::too_many_arguments)]
fn cutmix_objects(
    sample_i: &Sample,
    idx_i: usize,
    sample_j: &Sample,
    idx_j: usize,
    params: &MixerParams,
    rng: &mut RngStream,
    provenance: Provenance,
) -> Result<(Sample, MixOutcome), MixerError> {
    let image_i = pixels_of(sample_i)?;
    let image_j = pixels_of(sample_j)?;
    let ann_i = &sample_i.annotations[idx_i];
    let ann_j = &sample_j.annotations[idx_j];

    let rect_i = pixel_rect(&ann_i.bbox, image_i.extent());
    let rect_j = pixel_rect(&ann_j.bbox, image_j.extent());

    let crop_j = image_j.crop_rect(rect_j);
    let resized_j = resize_bilinear(&crop_j, ImageExtent::new(rect_i.width, rect_i.height));
    let region_i = image_i.crop_rect(rect_i);

    let orientation = *rng.choose(&MaskOrientation::ALL);
    let mask = BinaryMask::half_split(
        rect_i.width,
        rect_i.height,
        params.mask_proportion,
        orientation,
    );

    let mut composite = PixelImage::new(region_i.extent());
    for y in 0..rect_i.height {
        for x in 0..rect_i.width {
            let src = if mask.get(x, y) {
                &region_i
            } else {
                &resized_j
            };
            composite.put(x, y, src.get(x, y));
        }
    }

    let mut out_image = image_i.clone();
    out_image.paste_rect(rect_i, &composite);

    let mut annotations: Vec<Annotation> = Vec::with_capacity(sample_i.annotations.len() + 1);
    for (k, ann) in sample_i.annotations.iter().enumerate() {
        if k != idx_i {
            annotations.push(ann.clone());
        }
    }
    annotations.push(Annotation {
        bbox: ann_i.bbox,
        class_id: ann_i.class_id,
        weight: params.mask_proportion,
        provenance,
    });
    // When the mask keeps everything, nothing of the partner object is
    // visible and a zero-weight annotation would violate invariants.
    if params.mask_proportion < 1.0 {
        annotations.push(Annotation {
            bbox: ann_i.bbox,
            class_id: ann_j.class_id,
            weight: 1.0 - params.mask_proportion,
            provenance,
        });
    }

    let out = Sample {
        id: sample_i.id.clone(),
        file_name: sample_i.file_name.clone(),
        extent: image_i.extent(),
        annotations,
        image: Some(out_image),
    };
    Ok((
        out,
        MixOutcome {
            partner_id: Some(sample_j.id.clone()),
            chosen_from_i: Some(idx_i),
            chosen_from_j: Some(idx_j),
            mask_orientation: Some(orientation),
        },
    ))
}
