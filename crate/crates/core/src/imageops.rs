//! Image-level augmentations with annotation propagation: flips, random
//! crop, rotation, Gaussian blur, histogram equalization, and JPEG
//! degradation.
//!
//! All operations are pure: identical `(image, annotations, rng state)`
//! inputs produce byte-identical outputs. Where interpolation lands between
//! 8-bit levels the result is rounded half-up.

use crate::geometry::{
    pixel_rect, rotate_box_hull, transform_box, BoundingBox, BoxTransform, GeometryError,
    ImageExtent, PixelRect,
};
use crate::rng::RngStream;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageOpError {
    #[error("pixel buffer length {got} does not match extent {extent} (expected {expected})")]
    BufferSize {
        extent: ImageExtent,
        expected: usize,
        got: usize,
    },
    #[error("JPEG codec failure: {0}")]
    Codec(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Round half-up to an 8-bit level.
pub fn round_half_up(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Decoded 8-bit RGB raster, row-major, interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelImage {
    extent: ImageExtent,
    data: Vec<u8>,
}

impl PixelImage {
    pub const CHANNELS: usize = 3;

    /// All-black image of the given extent.
    pub fn new(extent: ImageExtent) -> Self {
        Self {
            extent,
            data: vec![0; extent.pixel_count() * Self::CHANNELS],
        }
    }

    pub fn filled(extent: ImageExtent, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(extent.pixel_count() * Self::CHANNELS);
        for _ in 0..extent.pixel_count() {
            data.extend_from_slice(&rgb);
        }
        Self { extent, data }
    }

    pub fn from_raw(extent: ImageExtent, data: Vec<u8>) -> Result<Self, ImageOpError> {
        let expected = extent.pixel_count() * Self::CHANNELS;
        if data.len() != expected {
            return Err(ImageOpError::BufferSize {
                extent,
                expected,
                got: data.len(),
            });
        }
        Ok(Self { extent, data })
    }

    pub fn extent(&self) -> ImageExtent {
        self.extent
    }

    pub fn width(&self) -> u32 {
        self.extent.width()
    }

    pub fn height(&self) -> u32 {
        self.extent.height()
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width() as usize + x as usize) * Self::CHANNELS
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.index(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.index(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copy of the pixels inside `rect` (must lie within the image).
    pub fn crop_rect(&self, rect: PixelRect) -> PixelImage {
        debug_assert!(rect.x + rect.width <= self.width() && rect.y + rect.height <= self.height());
        let extent = ImageExtent::new(rect.width, rect.height);
        let mut data = Vec::with_capacity(extent.pixel_count() * Self::CHANNELS);
        for y in rect.y..rect.y + rect.height {
            let start = self.index(rect.x, y);
            let end = start + rect.width as usize * Self::CHANNELS;
            data.extend_from_slice(&self.data[start..end]);
        }
        PixelImage { extent, data }
    }

    /// Overwrite the pixels inside `rect` with `src` (same dimensions).
    pub fn paste_rect(&mut self, rect: PixelRect, src: &PixelImage) {
        debug_assert_eq!(src.width(), rect.width);
        debug_assert_eq!(src.height(), rect.height);
        for row in 0..rect.height {
            let dst_start = self.index(rect.x, rect.y + row);
            let src_start = src.index(0, row);
            let len = rect.width as usize * Self::CHANNELS;
            self.data[dst_start..dst_start + len]
                .copy_from_slice(&src.data[src_start..src_start + len]);
        }
    }

    /// Sum of all channel values; used by conservation checks.
    pub fn channel_sum(&self) -> u64 {
        self.data.iter().map(|&v| v as u64).sum()
    }
}

/// Label attached to a box: class, soft weight, and the augmentation that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub bbox: BoundingBox,
    pub class_id: usize,
    /// In `(0, 1]`; 1.0 for ordinary annotations, split by CutMix outputs.
    pub weight: f64,
    pub provenance: Provenance,
}

impl Annotation {
    pub fn new(bbox: BoundingBox, class_id: usize) -> Self {
        Self {
            bbox,
            class_id,
            weight: 1.0,
            provenance: Provenance::Original,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Original,
    Mixup,
    BboxMixup,
    Cutmix,
    ClassCutmix,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::Mixup => "mixup",
            Provenance::BboxMixup => "bbox_mixup",
            Provenance::Cutmix => "cutmix",
            Provenance::ClassCutmix => "class_cutmix",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "original" => Provenance::Original,
            "mixup" => Provenance::Mixup,
            "bbox_mixup" => Provenance::BboxMixup,
            "cutmix" => Provenance::Cutmix,
            "class_cutmix" => Provenance::ClassCutmix,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    Horizontal,
    Vertical,
}

fn map_annotations(anns: &[Annotation], transform: &BoxTransform) -> Vec<Annotation> {
    anns.iter()
        .filter_map(|ann| {
            transform_box(&ann.bbox, transform)
                .expect("transform validated by caller")
                .map(|bbox| Annotation {
                    bbox,
                    ..ann.clone()
                })
        })
        .collect()
}

/// Mirror the image along the given axis and map every box with it.
pub fn flip(
    image: &PixelImage,
    anns: &[Annotation],
    axis: FlipAxis,
) -> (PixelImage, Vec<Annotation>) {
    let (w, h) = (image.width(), image.height());
    let mut out = PixelImage::new(image.extent());
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = match axis {
                FlipAxis::Horizontal => (w - 1 - x, y),
                FlipAxis::Vertical => (x, h - 1 - y),
            };
            out.put(x, y, image.get(sx, sy));
        }
    }
    let transform = match axis {
        FlipAxis::Horizontal => BoxTransform::HorizontalFlip {
            extent: image.extent(),
        },
        FlipAxis::Vertical => BoxTransform::VerticalFlip {
            extent: image.extent(),
        },
    };
    (out, map_annotations(anns, &transform))
}

/// Crop a uniformly sized and positioned window.
///
/// Window width is `round(u * W)` with `u` uniform in `[min_frac, max_frac]`
/// (drawn independently for the height), floored at one pixel; the top-left
/// offset is uniform over the valid positions. Boxes keep at least a quarter
/// of their area or are dropped. Draw order: width fraction, height
/// fraction, x offset, y offset.
pub fn random_crop(
    image: &PixelImage,
    anns: &[Annotation],
    rng: &mut RngStream,
    min_frac: f64,
    max_frac: f64,
) -> (PixelImage, Vec<Annotation>) {
    assert!(
        min_frac > 0.0 && min_frac <= max_frac && max_frac <= 1.0,
        "crop fractions must satisfy 0 < min <= max <= 1"
    );
    let (w, h) = (image.width(), image.height());
    let crop_w = ((rng.next_in_range(min_frac, max_frac) * w as f64).round() as u32).clamp(1, w);
    let crop_h = ((rng.next_in_range(min_frac, max_frac) * h as f64).round() as u32).clamp(1, h);
    let x0 = rng.next_index((w - crop_w + 1) as usize) as u32;
    let y0 = rng.next_index((h - crop_h + 1) as usize) as u32;

    let rect = PixelRect {
        x: x0,
        y: y0,
        width: crop_w,
        height: crop_h,
    };
    let out = image.crop_rect(rect);
    let window = BoundingBox::new(x0 as f64, y0 as f64, crop_w as f64, crop_h as f64);
    let transform = BoxTransform::Crop {
        window,
        extent: image.extent(),
    };
    (out, map_annotations(anns, &transform))
}

/// Rotation behaviour for [`rotate`].
#[derive(Debug, Clone, PartialEq)]
pub enum RotationMode {
    /// Clockwise right angles drawn uniformly from the set. Boxes stay tight.
    RightAngles(Vec<RightAngle>),
    /// Uniform angle in `[min_deg, max_deg]`, clockwise. Boxes become the
    /// axis-aligned hull of their rotated corners, which loosens them; the
    /// output keeps the input extent and uncovered pixels are black.
    ArbitraryDegrees { min_deg: f64, max_deg: f64 },
}

impl Default for RotationMode {
    fn default() -> Self {
        RotationMode::RightAngles(vec![
            RightAngle::Quarter,
            RightAngle::Half,
            RightAngle::ThreeQuarter,
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RightAngle {
    Quarter,
    Half,
    ThreeQuarter,
}

impl RightAngle {
    pub fn quarter_turns(&self) -> u8 {
        match self {
            RightAngle::Quarter => 1,
            RightAngle::Half => 2,
            RightAngle::ThreeQuarter => 3,
        }
    }

    pub fn degrees(&self) -> u16 {
        self.quarter_turns() as u16 * 90
    }

    pub fn from_degrees(deg: u16) -> Option<Self> {
        match deg {
            90 => Some(RightAngle::Quarter),
            180 => Some(RightAngle::Half),
            270 => Some(RightAngle::ThreeQuarter),
            _ => None,
        }
    }
}

/// Rotate the image clockwise by `quarter_turns` without resampling.
pub fn rotate90_pixels(image: &PixelImage, quarter_turns: u8) -> PixelImage {
    let (w, h) = (image.width(), image.height());
    match quarter_turns {
        1 => {
            let mut out = PixelImage::new(image.extent().transposed());
            for y in 0..w {
                for x in 0..h {
                    out.put(x, y, image.get(y, h - 1 - x));
                }
            }
            out
        }
        2 => {
            let mut out = PixelImage::new(image.extent());
            for y in 0..h {
                for x in 0..w {
                    out.put(x, y, image.get(w - 1 - x, h - 1 - y));
                }
            }
            out
        }
        3 => {
            let mut out = PixelImage::new(image.extent().transposed());
            for y in 0..w {
                for x in 0..h {
                    out.put(x, y, image.get(w - 1 - y, x));
                }
            }
            out
        }
        k => panic!("quarter turns must be 1, 2 or 3, got {k}"),
    }
}

/// Rotate by an angle drawn from `mode`; right angles permute pixels
/// exactly, arbitrary angles resample bilinearly about the image center.
pub fn rotate(
    image: &PixelImage,
    anns: &[Annotation],
    rng: &mut RngStream,
    mode: &RotationMode,
) -> (PixelImage, Vec<Annotation>) {
    match mode {
        RotationMode::RightAngles(angles) => {
            assert!(!angles.is_empty(), "angle set must be non-empty");
            let angle = *rng.choose(angles);
            let out = rotate90_pixels(image, angle.quarter_turns());
            let transform = BoxTransform::Rotate90 {
                extent: image.extent(),
                quarter_turns: angle.quarter_turns(),
            };
            (out, map_annotations(anns, &transform))
        }
        RotationMode::ArbitraryDegrees { min_deg, max_deg } => {
            assert!(min_deg <= max_deg, "degree range must be ordered");
            let degrees = rng.next_in_range(*min_deg, *max_deg);
            rotate_arbitrary(image, anns, degrees)
        }
    }
}

fn rotate_arbitrary(
    image: &PixelImage,
    anns: &[Annotation],
    degrees: f64,
) -> (PixelImage, Vec<Annotation>) {
    let (w, h) = (image.width(), image.height());
    let radians = degrees.to_radians();
    let (sin, cos) = radians.sin_cos();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut out = PixelImage::new(image.extent());
    for y in 0..h {
        for x in 0..w {
            // Continuous destination point, inverse-rotated into the source.
            let dx = (x as f64 + 0.5) - cx;
            let dy = (y as f64 + 0.5) - cy;
            let sx = cx + dx * cos + dy * sin;
            let sy = cy - dx * sin + dy * cos;
            if sx < 0.0 || sy < 0.0 || sx > w as f64 || sy > h as f64 {
                continue; // stays black
            }
            out.put(x, y, sample_bilinear(image, sx - 0.5, sy - 0.5));
        }
    }
    let extent = image.extent();
    let clip = BoxTransform::Crop {
        window: BoundingBox::new(0.0, 0.0, w as f64, h as f64),
        extent,
    };
    let mapped = anns
        .iter()
        .filter_map(|ann| {
            let hull = rotate_box_hull(&ann.bbox, radians, (cx, cy));
            transform_box(&hull, &clip)
                .expect("full-extent window is always valid")
                .map(|bbox| Annotation {
                    bbox,
                    ..ann.clone()
                })
        })
        .collect();
    (out, mapped)
}

/// Bilinear sample at pixel-index coordinates, clamped to the image.
fn sample_bilinear(image: &PixelImage, x: f64, y: f64) -> [u8; 3] {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as i64;
    let y0 = y.floor() as i64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p00 = image.get(x0 as u32, y0 as u32);
    let p10 = image.get(x1 as u32, y0 as u32);
    let p01 = image.get(x0 as u32, y1 as u32);
    let p11 = image.get(x1 as u32, y1 as u32);
    let mut rgb = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        rgb[c] = round_half_up(top * (1.0 - fy) + bottom * fy);
    }
    rgb
}

/// Bilinear resize with round-half-up; identity when the extents match.
pub fn resize_bilinear(image: &PixelImage, target: ImageExtent) -> PixelImage {
    if target == image.extent() {
        return image.clone();
    }
    let (sw, sh) = (image.width(), image.height());
    let (tw, th) = (target.width(), target.height());
    let scale_x = sw as f64 / tw as f64;
    let scale_y = sh as f64 / th as f64;
    let mut out = PixelImage::new(target);
    for y in 0..th {
        let sy = (y as f64 + 0.5) * scale_y - 0.5;
        for x in 0..tw {
            let sx = (x as f64 + 0.5) * scale_x - 0.5;
            out.put(x, y, sample_bilinear(image, sx, sy));
        }
    }
    out
}

/// Gaussian blur with sigma uniform in `sigma_range`, kernel radius
/// `ceil(3 sigma)`, symmetric-reflect borders, and a single half-up
/// rounding after both separable passes (so results match a dense 2-D
/// convolution). Annotations pass through untouched.
pub fn blur(
    image: &PixelImage,
    anns: &[Annotation],
    rng: &mut RngStream,
    sigma_range: (f64, f64),
) -> (PixelImage, Vec<Annotation>) {
    assert!(
        sigma_range.0 > 0.0 && sigma_range.0 <= sigma_range.1,
        "sigma range must be positive and ordered"
    );
    let sigma = rng.next_in_range(sigma_range.0, sigma_range.1);
    (blur_with_sigma(image, sigma), anns.to_vec())
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= sum;
    }
    kernel
}

fn reflect_index(mut i: i64, n: i64) -> usize {
    // Symmetric reflection: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

pub fn blur_with_sigma(image: &PixelImage, sigma: f64) -> PixelImage {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h) = (image.width() as i64, image.height() as i64);
    let chans = PixelImage::CHANNELS;

    // Horizontal pass in f64; rounding happens only after the vertical pass.
    let mut horizontal = vec![0.0f64; (w * h) as usize * chans];
    let src = image.as_raw();
    for y in 0..h {
        for x in 0..w {
            let out_i = ((y * w + x) as usize) * chans;
            for (k, &weight) in kernel.iter().enumerate() {
                let sx = reflect_index(x + k as i64 - radius, w);
                let src_i = ((y as usize * w as usize) + sx) * chans;
                for c in 0..chans {
                    horizontal[out_i + c] += weight * src[src_i + c] as f64;
                }
            }
        }
    }

    let mut out = PixelImage::new(image.extent());
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; PixelImage::CHANNELS];
            for (k, &weight) in kernel.iter().enumerate() {
                let sy = reflect_index(y + k as i64 - radius, h);
                let src_i = ((sy * w as usize) + x as usize) * chans;
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += weight * horizontal[src_i + c];
                }
            }
            out.put(
                x as u32,
                y as u32,
                [
                    round_half_up(acc[0]),
                    round_half_up(acc[1]),
                    round_half_up(acc[2]),
                ],
            );
        }
    }
    out
}

/// Per-channel 256-bin histogram equalization with the classic cdf map
/// `v -> round(255 (cdf(v) - cdf_min) / (N - cdf_min))`. Channels with a
/// single distinct value are left unchanged. Annotations pass through.
pub fn equalize(image: &PixelImage, anns: &[Annotation]) -> (PixelImage, Vec<Annotation>) {
    let n = image.extent().pixel_count() as u64;
    let mut out = image.clone();
    for channel in 0..PixelImage::CHANNELS {
        let mut histogram = [0u64; 256];
        for p in image.as_raw()[channel..]
            .iter()
            .step_by(PixelImage::CHANNELS)
        {
            histogram[*p as usize] += 1;
        }
        let mut cdf = [0u64; 256];
        let mut running = 0u64;
        for (v, &count) in histogram.iter().enumerate() {
            running += count;
            cdf[v] = running;
        }
        let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
        if cdf_min == n {
            continue; // single distinct value
        }
        let denom = (n - cdf_min) as f64;
        let mut lut = [0u8; 256];
        for v in 0..256 {
            lut[v] = round_half_up(255.0 * (cdf[v].saturating_sub(cdf_min)) as f64 / denom);
        }
        for p in out.data[channel..].iter_mut().step_by(PixelImage::CHANNELS) {
            *p = lut[*p as usize];
        }
    }
    (out, anns.to_vec())
}

/// Encode as baseline JPEG (4:2:0 chroma subsampling, libjpeg-style
/// quality scale) and decode straight back. Annotations pass through.
pub fn jpeg_degrade(
    image: &PixelImage,
    anns: &[Annotation],
    quality: u8,
) -> Result<(PixelImage, Vec<Annotation>), ImageOpError> {
    let bytes = encode_jpeg(image, quality)?;
    let decoded = decode_jpeg(&bytes)?;
    if decoded.extent() != image.extent() {
        return Err(ImageOpError::Codec(format!(
            "decoded extent {} does not match input {}",
            decoded.extent(),
            image.extent()
        )));
    }
    Ok((decoded, anns.to_vec()))
}

pub fn encode_jpeg(image: &PixelImage, quality: u8) -> Result<Vec<u8>, ImageOpError> {
    if !(1..=100).contains(&quality) {
        return Err(ImageOpError::InvalidParam(format!(
            "JPEG quality must be 1..=100, got {quality}"
        )));
    }
    let (w, h) = (image.width(), image.height());
    if w > u16::MAX as u32 || h > u16::MAX as u32 {
        return Err(ImageOpError::Codec(format!(
            "image {w}x{h} exceeds the baseline JPEG limit"
        )));
    }
    let mut bytes = Vec::new();
    let mut encoder = jpeg_encoder::Encoder::new(&mut bytes, quality);
    encoder.set_sampling_factor(jpeg_encoder::SamplingFactor::F_2_2);
    encoder
        .encode(
            image.as_raw(),
            w as u16,
            h as u16,
            jpeg_encoder::ColorType::Rgb,
        )
        .map_err(|e| ImageOpError::Codec(e.to_string()))?;
    Ok(bytes)
}

pub fn decode_jpeg(bytes: &[u8]) -> Result<PixelImage, ImageOpError> {
    let dynamic = image::load_from_memory_with_format(bytes, image::ImageFormat::Jpeg)
        .map_err(|e| ImageOpError::Codec(e.to_string()))?;
    let rgb = dynamic.to_rgb8();
    let extent = ImageExtent::try_new(rgb.width(), rgb.height())?;
    PixelImage::from_raw(extent, rgb.into_raw())
}

/// Blend of two equally sized images: `round(lambda a + (1 - lambda) b)`.
pub(crate) fn blend_images(a: &PixelImage, b: &PixelImage, lambda: f64) -> PixelImage {
    debug_assert_eq!(a.extent(), b.extent());
    let data = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&pa, &pb)| round_half_up(lambda * pa as f64 + (1.0 - lambda) * pb as f64))
        .collect();
    PixelImage {
        extent: a.extent(),
        data,
    }
}

/// Pixel region selected by a continuous box, clamped to the image.
pub fn box_pixel_rect(bbox: &BoundingBox, extent: ImageExtent) -> PixelRect {
    pixel_rect(bbox, extent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn extent(w: u32, h: u32) -> ImageExtent {
        ImageExtent::new(w, h)
    }

    fn image_from_fn(w: u32, h: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> PixelImage {
        let mut img = PixelImage::new(extent(w, h));
        for y in 0..h {
            for x in 0..w {
                img.put(x, y, f(x, y));
            }
        }
        img
    }

    fn noise_image(w: u32, h: u32, seed: u64) -> PixelImage {
        let mut rng = derive_stream(seed, "noise", 0);
        image_from_fn(w, h, |_, _| {
            [
                rng.next_index(256) as u8,
                rng.next_index(256) as u8,
                rng.next_index(256) as u8,
            ]
        })
    }

    fn ann(x: f64, y: f64, w: f64, h: f64) -> Annotation {
        Annotation::new(BoundingBox::new(x, y, w, h), 0)
    }

    #[test]
    fn horizontal_flip_reverses_rows() {
        let img = image_from_fn(3, 1, |x, _| [(x as u8 + 1) * 10; 3]);
        let (flipped, _) = flip(&img, &[], FlipAxis::Horizontal);
        assert_eq!(flipped.get(0, 0), [30; 3]);
        assert_eq!(flipped.get(1, 0), [20; 3]);
        assert_eq!(flipped.get(2, 0), [10; 3]);
    }

    #[test]
    fn half_black_half_white_swaps_sides() {
        let img = image_from_fn(4, 2, |x, _| if x < 2 { [0; 3] } else { [255; 3] });
        let (flipped, _) = flip(&img, &[], FlipAxis::Horizontal);
        assert_eq!(flipped.get(0, 0), [255; 3]);
        assert_eq!(flipped.get(3, 0), [0; 3]);
    }

    #[test]
    fn flips_are_involutions() {
        let img = noise_image(13, 7, 1);
        let anns = vec![ann(1.0, 2.0, 4.0, 3.0), ann(5.5, 0.25, 2.25, 6.0)];
        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            let (once, anns1) = flip(&img, &anns, axis);
            let (twice, anns2) = flip(&once, &anns1, axis);
            assert_eq!(twice, img);
            assert_eq!(anns2, anns);
        }
    }

    #[test]
    fn full_window_crop_is_identity() {
        let img = noise_image(10, 8, 2);
        let anns = vec![ann(1.0, 1.0, 3.0, 3.0)];
        // min=max=1.0 forces the full window at offset (0, 0).
        let mut rng = derive_stream(0, "crop", 0);
        let (out, out_anns) = random_crop(&img, &anns, &mut rng, 1.0, 1.0);
        assert_eq!(out, img);
        assert_eq!(out_anns, anns);
    }

    #[test]
    fn crop_drops_boxes_fully_outside_window() {
        // 20x20 image; force a 10x10 window. Offsets depend on the stream,
        // so place one box outside whatever window was chosen.
        let img = noise_image(20, 20, 3);
        let mut rng = derive_stream(7, "crop-outside", 0);
        let anns = vec![ann(0.5, 0.5, 19.0, 19.0)];
        let (out, kept) = random_crop(&img, &anns, &mut rng, 0.5, 0.5);
        assert_eq!(out.width(), 10);
        assert_eq!(out.height(), 10);
        // The large box keeps 100/361 > 0.25 of its area: retained, clipped.
        assert_eq!(kept.len(), 1);
        assert!(kept[0].bbox.within_extent(out.extent()));
    }

    #[test]
    fn rotate180_twice_is_identity() {
        let img = noise_image(9, 5, 4);
        let anns = vec![ann(1.0, 1.0, 3.0, 2.0)];
        let mode = RotationMode::RightAngles(vec![RightAngle::Half]);
        let mut rng = derive_stream(0, "rot", 0);
        let (once, anns1) = rotate(&img, &anns, &mut rng, &mode);
        let (twice, anns2) = rotate(&once, &anns1, &mut rng, &mode);
        assert_eq!(twice, img);
        assert_eq!(anns2, anns);
    }

    #[test]
    fn rotate90_four_times_is_identity() {
        let img = noise_image(6, 11, 5);
        let anns = vec![ann(0.5, 2.0, 2.5, 4.0)];
        let mode = RotationMode::RightAngles(vec![RightAngle::Quarter]);
        let mut rng = derive_stream(0, "rot4", 0);
        let mut current = (img.clone(), anns.clone());
        for _ in 0..4 {
            current = rotate(&current.0, &current.1, &mut rng, &mode);
        }
        assert_eq!(current.0, img);
        assert_eq!(current.1, anns);
    }

    #[test]
    fn rotate90_pixels_follow_the_corner_permutation() {
        // 1x2 column [A; B] turns into row [B, A].
        let mut img = PixelImage::new(extent(1, 2));
        img.put(0, 0, [10, 0, 0]);
        img.put(0, 1, [20, 0, 0]);
        let out = rotate90_pixels(&img, 1);
        assert_eq!(out.width(), 2);
        assert_eq!(out.height(), 1);
        assert_eq!(out.get(0, 0), [20, 0, 0]);
        assert_eq!(out.get(1, 0), [10, 0, 0]);
    }

    #[test]
    fn arbitrary_rotation_by_90_matches_exact_on_square() {
        let img = noise_image(8, 8, 6);
        let exact = rotate90_pixels(&img, 1);
        let mode = RotationMode::ArbitraryDegrees {
            min_deg: 90.0,
            max_deg: 90.0,
        };
        let mut rng = derive_stream(0, "arb", 0);
        let (out, _) = rotate(&img, &[], &mut rng, &mode);
        assert_eq!(out, exact);
    }

    #[test]
    fn blur_preserves_constant_images() {
        let img = PixelImage::filled(extent(12, 9), [77, 130, 200]);
        let mut rng = derive_stream(0, "blur", 0);
        let (out, _) = blur(&img, &[], &mut rng, (0.5, 1.5));
        assert_eq!(out, img);
    }

    /// Dense 2-D convolution oracle: builds the full kernel, normalizes it,
    /// and convolves with symmetric-reflect borders.
    fn dense_blur_oracle(image: &PixelImage, sigma: f64) -> PixelImage {
        let radius = (3.0 * sigma).ceil() as i64;
        let size = (2 * radius + 1) as usize;
        let mut kernel = vec![0.0f64; size * size];
        let mut sum = 0.0;
        for j in -radius..=radius {
            for i in -radius..=radius {
                let w = (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
                kernel[((j + radius) * (2 * radius + 1) + (i + radius)) as usize] = w;
                sum += w;
            }
        }
        for w in &mut kernel {
            *w /= sum;
        }
        let (w, h) = (image.width() as i64, image.height() as i64);
        let mut out = PixelImage::new(image.extent());
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0f64; 3];
                for j in -radius..=radius {
                    for i in -radius..=radius {
                        let sx = reflect_index(x + i, w) as u32;
                        let sy = reflect_index(y + j, h) as u32;
                        let weight =
                            kernel[((j + radius) * (2 * radius + 1) + (i + radius)) as usize];
                        let p = image.get(sx, sy);
                        for c in 0..3 {
                            acc[c] += weight * p[c] as f64;
                        }
                    }
                }
                out.put(
                    x as u32,
                    y as u32,
                    [
                        round_half_up(acc[0]),
                        round_half_up(acc[1]),
                        round_half_up(acc[2]),
                    ],
                );
            }
        }
        out
    }

    #[test]
    fn blur_impulse_center_matches_kernel_weight() {
        let mut img = PixelImage::new(extent(7, 7));
        img.put(3, 3, [255, 255, 255]);
        let sigma = 1.0;
        let out = blur_with_sigma(&img, sigma);
        // Center weight of the dense normalized 2-D kernel.
        let radius = (3.0 * sigma).ceil() as i64;
        let mut sum = 0.0;
        for j in -radius..=radius {
            for i in -radius..=radius {
                sum += (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
            }
        }
        let expected = round_half_up(255.0 / sum);
        assert_eq!(out.get(3, 3)[0], expected);
    }

    #[test]
    fn blur_matches_dense_oracle() {
        for (seed, sigma) in [(10, 0.5), (11, 0.9), (12, 1.5)] {
            let img = noise_image(11, 9, seed);
            let fast = blur_with_sigma(&img, sigma);
            let oracle = dense_blur_oracle(&img, sigma);
            let worst = fast
                .as_raw()
                .iter()
                .zip(oracle.as_raw())
                .map(|(&a, &b)| (a as i16 - b as i16).abs())
                .max()
                .unwrap();
            assert!(
                worst <= 1,
                "separable blur differs from dense oracle by {worst}"
            );
        }
    }

    #[test]
    fn blur_conserves_total_mass_within_rounding() {
        let img = noise_image(16, 16, 13);
        let out = blur_with_sigma(&img, 1.2);
        let diff = (img.channel_sum() as i64 - out.channel_sum() as i64).abs();
        let bound = (img.extent().pixel_count() * PixelImage::CHANNELS) as i64 / 2 + 1;
        assert!(
            diff <= bound,
            "mass drift {diff} exceeds rounding bound {bound}"
        );
    }

    #[test]
    fn blur_leaves_annotations_untouched() {
        let img = noise_image(8, 8, 14);
        let anns = vec![ann(1.0, 1.0, 3.0, 3.0)];
        let mut rng = derive_stream(0, "blur-anns", 0);
        let (_, out) = blur(&img, &anns, &mut rng, (0.5, 1.5));
        assert_eq!(out, anns);
    }

    #[test]
    fn equalize_constant_channel_is_unchanged() {
        let img = PixelImage::filled(extent(6, 6), [42, 42, 42]);
        let (out, _) = equalize(&img, &[]);
        assert_eq!(out, img);
    }

    #[test]
    fn equalize_two_level_channel_stretches_to_full_range() {
        let img = image_from_fn(4, 2, |x, _| if x % 2 == 0 { [100; 3] } else { [200; 3] });
        let (out, _) = equalize(&img, &[]);
        assert_eq!(out.get(0, 0), [0; 3]);
        assert_eq!(out.get(1, 0), [255; 3]);
    }

    #[test]
    fn equalize_preserves_rank_order() {
        let img = noise_image(16, 16, 15);
        let (out, _) = equalize(&img, &[]);
        for c in 0..3 {
            let pairs: Vec<(u8, u8)> = img.as_raw()[c..]
                .iter()
                .step_by(3)
                .zip(out.as_raw()[c..].iter().step_by(3))
                .map(|(&a, &b)| (a, b))
                .collect();
            for &(a1, b1) in &pairs {
                for &(a2, b2) in &pairs {
                    if a1 <= a2 {
                        assert!(b1 <= b2, "rank order broken: {a1}->{b1} vs {a2}->{b2}");
                    }
                }
            }
        }
    }

    #[test]
    fn jpeg_mid_gray_stays_within_two_levels() {
        let img = PixelImage::filled(extent(24, 16), [128, 128, 128]);
        for quality in [10u8, 50, 95] {
            let (out, _) = jpeg_degrade(&img, &[], quality).unwrap();
            let worst = out
                .as_raw()
                .iter()
                .map(|&v| (v as i16 - 128).abs())
                .max()
                .unwrap();
            assert!(worst <= 2, "q={quality} deviates by {worst}");
        }
    }

    #[test]
    fn jpeg_low_quality_is_lossier_than_high() {
        let img = noise_image(32, 32, 16);
        let mae = |quality: u8| {
            let (out, _) = jpeg_degrade(&img, &[], quality).unwrap();
            img.as_raw()
                .iter()
                .zip(out.as_raw())
                .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs() as u64)
                .sum::<u64>()
        };
        assert!(mae(10) > mae(95));
    }

    #[test]
    fn jpeg_keeps_annotations_and_extent() {
        let img = noise_image(17, 9, 17); // odd sizes exercise 4:2:0 padding
        let anns = vec![ann(1.0, 1.0, 5.0, 4.0)];
        let (out, out_anns) = jpeg_degrade(&img, &anns, 10).unwrap();
        assert_eq!(out.extent(), img.extent());
        assert_eq!(out_anns, anns);
    }

    #[test]
    fn jpeg_rejects_bad_quality() {
        let img = PixelImage::filled(extent(4, 4), [1, 2, 3]);
        assert!(jpeg_degrade(&img, &[], 0).is_err());
        assert!(jpeg_degrade(&img, &[], 101).is_err());
    }

    #[test]
    fn resize_identity_is_exact() {
        let img = noise_image(9, 7, 18);
        assert_eq!(resize_bilinear(&img, img.extent()), img);
    }

    #[test]
    fn resize_of_constant_image_is_constant() {
        let img = PixelImage::filled(extent(10, 10), [9, 90, 200]);
        let out = resize_bilinear(&img, extent(7, 13));
        assert!(out.as_raw().chunks(3).all(|p| p == [9, 90, 200]));
    }

    #[test]
    fn operations_are_deterministic_for_equal_streams() {
        let img = noise_image(15, 10, 19);
        let anns = vec![ann(2.0, 2.0, 6.0, 5.0)];
        let run = |seed: u64| {
            let mut rng = derive_stream(seed, "det", 0);
            let (a, _) = random_crop(&img, &anns, &mut rng, 0.75, 1.0);
            let (b, _) = blur(&a, &anns, &mut rng, (0.5, 1.5));
            b
        };
        assert_eq!(run(99), run(99));
        // Same sigma range, different stream: window offsets almost surely differ.
        assert_ne!(run(99), run(100));
    }

    #[test]
    fn round_half_up_behaviour() {
        assert_eq!(round_half_up(1.5), 2);
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(2.4999), 2);
        assert_eq!(round_half_up(-1.0), 0);
        assert_eq!(round_half_up(300.0), 255);
    }
}
