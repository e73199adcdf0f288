//! Axis-aligned bounding-box algebra: area, intersection, IoU, clipping,
//! and coordinate transforms under flip/crop/rotate/scale.
//!
//! Boxes follow the COCO convention: `(x_min, y_min, width, height)` in
//! continuous pixel units, top-left origin, y growing downward.

use crate::scalar::Scalar;
use thiserror::Error;

/// Fraction of a box's area that must stay visible inside a crop window
/// for the box to be retained (and clipped) rather than dropped.
pub const CROP_RETENTION_MIN_FRACTION: f64 = 0.25;

/// Width/height below which a box is treated as degenerate by loaders.
pub const DEGENERATE_BOX_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("bounding box must have positive width and height, got {width}x{height}")]
    InvalidBox { width: f64, height: f64 },
    #[error("image extent must be at least 1x1, got {width}x{height}")]
    InvalidExtent { width: u32, height: u32 },
    #[error("crop window [{x_min}, {y_min}, {width}, {height}] extends outside the {extent_width}x{extent_height} extent")]
    CropOutsideExtent {
        x_min: f64,
        y_min: f64,
        width: f64,
        height: f64,
        extent_width: u32,
        extent_height: u32,
    },
    #[error("quarter-turn count must be 1, 2 or 3, got {0}")]
    InvalidQuarterTurns(u8),
}

/// Integer image dimensions, both at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageExtent {
    width: u32,
    height: u32,
}

impl ImageExtent {
    pub fn new(width: u32, height: u32) -> Self {
        Self::try_new(width, height).expect("extent dimensions must be >= 1")
    }

    pub fn try_new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidExtent { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Extent with width and height swapped (after a quarter turn).
    pub fn transposed(&self) -> Self {
        Self {
            width: self.height,
            height: self.width,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

impl std::fmt::Display for ImageExtent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Axis-aligned box in `(x_min, y_min, width, height)` form.
///
/// Invariant: `width > 0 && height > 0`. Enforced by the constructors;
/// the fields are private so a constructed box stays valid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<S: Scalar = f64> {
    x_min: S,
    y_min: S,
    width: S,
    height: S,
}

impl<S: Scalar> BoundingBox<S> {
    /// Panics if `width` or `height` is not strictly positive or any field
    /// is non-finite. Use [`BoundingBox::try_new`] for untrusted input.
    pub fn new(x_min: S, y_min: S, width: S, height: S) -> Self {
        Self::try_new(x_min, y_min, width, height).expect("box dimensions must be positive")
    }

    pub fn try_new(x_min: S, y_min: S, width: S, height: S) -> Result<Self, GeometryError> {
        let finite =
            x_min.is_finite() && y_min.is_finite() && width.is_finite() && height.is_finite();
        if !finite || width <= S::zero() || height <= S::zero() {
            return Err(GeometryError::InvalidBox {
                width: width.to_f64().unwrap_or(f64::NAN),
                height: height.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            x_min,
            y_min,
            width,
            height,
        })
    }

    pub fn x_min(&self) -> S {
        self.x_min
    }

    pub fn y_min(&self) -> S {
        self.y_min
    }

    pub fn width(&self) -> S {
        self.width
    }

    pub fn height(&self) -> S {
        self.height
    }

    pub fn x_max(&self) -> S {
        self.x_min + self.width
    }

    pub fn y_max(&self) -> S {
        self.y_min + self.height
    }

    pub fn area(&self) -> S {
        self.width * self.height
    }

    pub fn xywh(&self) -> [S; 4] {
        [self.x_min, self.y_min, self.width, self.height]
    }

    /// Overlapping region of two boxes, or `None` when they are disjoint.
    /// Boxes that merely touch along an edge count as disjoint.
    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let x0 = self.x_min.max(other.x_min);
        let y0 = self.y_min.max(other.y_min);
        let x1 = self.x_max().min(other.x_max());
        let y1 = self.y_max().min(other.y_max());
        if x1 > x0 && y1 > y0 {
            Some(Self {
                x_min: x0,
                y_min: y0,
                width: x1 - x0,
                height: y1 - y0,
            })
        } else {
            None
        }
    }

    /// True when the box lies fully inside `[0, w] x [0, h]`.
    pub fn within_extent(&self, extent: ImageExtent) -> bool {
        let w = S::from_u32(extent.width()).unwrap();
        let h = S::from_u32(extent.height()).unwrap();
        self.x_min >= S::zero() && self.y_min >= S::zero() && self.x_max() <= w && self.y_max() <= h
    }

    /// Clamp the box to the extent. Returns `None` when nothing positive
    /// remains (the box lies entirely outside, or degenerates to a line).
    pub fn clipped_to(&self, extent: ImageExtent) -> Option<Self> {
        let w = S::from_u32(extent.width()).unwrap();
        let h = S::from_u32(extent.height()).unwrap();
        let x0 = self.x_min.max(S::zero()).min(w);
        let y0 = self.y_min.max(S::zero()).min(h);
        let x1 = self.x_max().max(S::zero()).min(w);
        let y1 = self.y_max().max(S::zero()).min(h);
        if x1 > x0 && y1 > y0 {
            Some(Self {
                x_min: x0,
                y_min: y0,
                width: x1 - x0,
                height: y1 - y0,
            })
        } else {
            None
        }
    }
}

/// Intersection over union of two boxes. Total on valid boxes: returns 0
/// for disjoint pairs, 1 for identical ones.
pub fn iou<S: Scalar>(a: &BoundingBox<S>, b: &BoundingBox<S>) -> S {
    let inter = match a.intersection(b) {
        Some(r) => r.area(),
        None => return S::zero(),
    };
    let union = a.area() + b.area() - inter;
    inter / union
}

/// True iff the box overlaps every co-object below `threshold` IoU.
/// Vacuously true for an empty `others` slice.
pub fn is_isolated<S: Scalar>(
    bbox: &BoundingBox<S>,
    others: &[BoundingBox<S>],
    threshold: S,
) -> bool {
    others.iter().all(|other| iou(bbox, other) < threshold)
}

/// Geometric transform applied to boxes alongside the matching pixel operation.
#[derive(Debug, Clone, PartialEq)]
pub enum BoxTransform<S: Scalar = f64> {
    HorizontalFlip {
        extent: ImageExtent,
    },
    VerticalFlip {
        extent: ImageExtent,
    },
    /// Intersect with `window`, re-express in window coordinates, and keep
    /// only boxes retaining at least [`CROP_RETENTION_MIN_FRACTION`] of
    /// their area.
    Crop {
        window: BoundingBox<S>,
        extent: ImageExtent,
    },
    /// Clockwise quarter turns; `quarter_turns` in `{1, 2, 3}`.
    Rotate90 {
        extent: ImageExtent,
        quarter_turns: u8,
    },
    Scale {
        sx: S,
        sy: S,
    },
}

/// Axis-aligned image of `bbox` under `transform`.
///
/// `Ok(None)` means the box was dropped by the crop retention rule.
pub fn transform_box<S: Scalar>(
    bbox: &BoundingBox<S>,
    transform: &BoxTransform<S>,
) -> Result<Option<BoundingBox<S>>, GeometryError> {
    match transform {
        BoxTransform::HorizontalFlip { extent } => {
            let w = S::from_u32(extent.width()).unwrap();
            Ok(Some(BoundingBox {
                x_min: w - bbox.x_min - bbox.width,
                ..*bbox
            }))
        }
        BoxTransform::VerticalFlip { extent } => {
            let h = S::from_u32(extent.height()).unwrap();
            Ok(Some(BoundingBox {
                y_min: h - bbox.y_min - bbox.height,
                ..*bbox
            }))
        }
        BoxTransform::Crop { window, extent } => {
            if !window.within_extent(*extent) {
                return Err(GeometryError::CropOutsideExtent {
                    x_min: window.x_min.to_f64().unwrap_or(f64::NAN),
                    y_min: window.y_min.to_f64().unwrap_or(f64::NAN),
                    width: window.width.to_f64().unwrap_or(f64::NAN),
                    height: window.height.to_f64().unwrap_or(f64::NAN),
                    extent_width: extent.width(),
                    extent_height: extent.height(),
                });
            }
            let retention = S::from_f64(CROP_RETENTION_MIN_FRACTION).unwrap();
            Ok(bbox.intersection(window).and_then(|visible| {
                if visible.area() / bbox.area() < retention {
                    None
                } else {
                    Some(BoundingBox {
                        x_min: visible.x_min - window.x_min,
                        y_min: visible.y_min - window.y_min,
                        width: visible.width,
                        height: visible.height,
                    })
                }
            }))
        }
        BoxTransform::Rotate90 {
            extent,
            quarter_turns,
        } => {
            let w = S::from_u32(extent.width()).unwrap();
            let h = S::from_u32(extent.height()).unwrap();
            let b = match quarter_turns {
                1 => BoundingBox {
                    x_min: h - bbox.y_min - bbox.height,
                    y_min: bbox.x_min,
                    width: bbox.height,
                    height: bbox.width,
                },
                2 => BoundingBox {
                    x_min: w - bbox.x_min - bbox.width,
                    y_min: h - bbox.y_min - bbox.height,
                    width: bbox.width,
                    height: bbox.height,
                },
                3 => BoundingBox {
                    x_min: bbox.y_min,
                    y_min: w - bbox.x_min - bbox.width,
                    width: bbox.height,
                    height: bbox.width,
                },
                k => return Err(GeometryError::InvalidQuarterTurns(*k)),
            };
            Ok(Some(b))
        }
        BoxTransform::Scale { sx, sy } => Ok(Some(BoundingBox {
            x_min: bbox.x_min * *sx,
            y_min: bbox.y_min * *sy,
            width: bbox.width * *sx,
            height: bbox.height * *sy,
        })),
    }
}

/// Axis-aligned hull of the box's four corners rotated clockwise by
/// `radians` about `center`. Used by arbitrary-angle rotation, which
/// loosens boxes; quarter turns should go through [`BoxTransform::Rotate90`].
pub fn rotate_box_hull<S: Scalar>(
    bbox: &BoundingBox<S>,
    radians: S,
    center: (S, S),
) -> BoundingBox<S> {
    let (cx, cy) = center;
    // Screen coordinates have y down, so a clockwise visual rotation by a
    // uses the standard rotation matrix for +a.
    let (sin, cos) = radians.sin_cos();
    let corners = [
        (bbox.x_min, bbox.y_min),
        (bbox.x_max(), bbox.y_min),
        (bbox.x_min, bbox.y_max()),
        (bbox.x_max(), bbox.y_max()),
    ];
    let mut x_lo = S::infinity();
    let mut x_hi = S::neg_infinity();
    let mut y_lo = S::infinity();
    let mut y_hi = S::neg_infinity();
    for (x, y) in corners {
        let dx = x - cx;
        let dy = y - cy;
        let rx = cx + dx * cos - dy * sin;
        let ry = cy + dx * sin + dy * cos;
        x_lo = x_lo.min(rx);
        x_hi = x_hi.max(rx);
        y_lo = y_lo.min(ry);
        y_hi = y_hi.max(ry);
    }
    BoundingBox {
        x_min: x_lo,
        y_min: y_lo,
        width: x_hi - x_lo,
        height: y_hi - y_lo,
    }
}

/// Integer pixel rectangle, used when a continuous box selects a pixel region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl PixelRect {
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Smallest integer rectangle covering the box, clamped to the extent.
/// Always at least 1x1.
pub fn pixel_rect<S: Scalar>(bbox: &BoundingBox<S>, extent: ImageExtent) -> PixelRect {
    let w = extent.width() as i64;
    let h = extent.height() as i64;
    let x0 = (bbox.x_min().floor().to_i64().unwrap_or(0)).clamp(0, w - 1);
    let y0 = (bbox.y_min().floor().to_i64().unwrap_or(0)).clamp(0, h - 1);
    let x1 = (bbox.x_max().ceil().to_i64().unwrap_or(w)).clamp(x0 + 1, w);
    let y1 = (bbox.y_max().ceil().to_i64().unwrap_or(h)).clamp(y0 + 1, h);
    PixelRect {
        x: x0 as u32,
        y: y0 as u32,
        width: (x1 - x0) as u32,
        height: (y1 - y0) as u32,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h)
    }

    /// Cell-counting IoU oracle for integer-coordinate boxes: exact on a
    /// unit grid.
    fn raster_iou(a: &BoundingBox, b: &BoundingBox, grid: u32) -> f64 {
        let mut inter = 0u64;
        let mut union = 0u64;
        for y in 0..grid {
            for x in 0..grid {
                let cx = x as f64 + 0.5;
                let cy = y as f64 + 0.5;
                let in_a = cx > a.x_min() && cx < a.x_max() && cy > a.y_min() && cy < a.y_max();
                let in_b = cx > b.x_min() && cx < b.x_max() && cy > b.y_min() && cy < b.y_max();
                if in_a && in_b {
                    inter += 1;
                }
                if in_a || in_b {
                    union += 1;
                }
            }
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    #[test]
    fn iou_identity_is_one() {
        let a = bb(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        let a = bb(0.0, 0.0, 2.0, 2.0);
        let b = bb(5.0, 5.0, 1.0, 1.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_partial_overlap_matches_hand_value() {
        // Overlap 1x1 = 1, union 4 + 4 - 1 = 7.
        let a = bb(0.0, 0.0, 2.0, 2.0);
        let b = bb(1.0, 1.0, 2.0, 2.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
        assert!((iou(&a, &b) - raster_iou(&a, &b, 8)).abs() < 1e-12);
    }

    #[test]
    fn iou_is_symmetric_and_bounded_on_random_integer_boxes() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..300 {
            let gx = |n: &mut dyn FnMut() -> u64| (n() % 60) as f64;
            let a = bb(
                gx(&mut next),
                gx(&mut next),
                1.0 + (next() % 4) as f64,
                1.0 + (next() % 4) as f64,
            );
            let b = bb(
                gx(&mut next),
                gx(&mut next),
                1.0 + (next() % 4) as f64,
                1.0 + (next() % 4) as f64,
            );
            let ab = iou(&a, &b);
            let ba = iou(&b, &a);
            assert_eq!(ab, ba);
            assert!((0.0..=1.0).contains(&ab));
            assert!((ab - raster_iou(&a, &b, 64)).abs() < 1e-6);
        }
    }

    #[test]
    fn iou_generic_over_f32() {
        let a = BoundingBox::<f32>::new(0.0, 0.0, 2.0, 2.0);
        let b = BoundingBox::<f32>::new(1.0, 1.0, 2.0, 2.0);
        assert!((iou(&a, &b) - 1.0f32 / 7.0).abs() < 1e-6);
    }

    #[test]
    fn isolation_vacuous_and_self() {
        let a = bb(0.0, 0.0, 2.0, 2.0);
        assert!(is_isolated(&a, &[], 0.3));
        assert!(!is_isolated(&a, &[a], 0.3));
    }

    #[test]
    fn isolation_below_threshold() {
        let a = bb(0.0, 0.0, 2.0, 2.0);
        let b = bb(1.0, 1.0, 2.0, 2.0);
        // 1/7 < 0.3
        assert!(is_isolated(&a, &[b], 0.3));
    }

    #[test]
    fn hflip_maps_and_inverts() {
        let extent = ImageExtent::new(100, 100);
        let t = BoxTransform::HorizontalFlip { extent };
        let b = bb(10.0, 20.0, 30.0, 40.0);
        let f = transform_box(&b, &t).unwrap().unwrap();
        assert_eq!(f.xywh(), [60.0, 20.0, 30.0, 40.0]);
        let ff = transform_box(&f, &t).unwrap().unwrap();
        assert_eq!(ff, b);
    }

    #[test]
    fn rotate180_twice_is_identity() {
        let extent = ImageExtent::new(64, 48);
        let t = BoxTransform::Rotate90 {
            extent,
            quarter_turns: 2,
        };
        let b = bb(3.25, 7.5, 11.0, 5.75);
        let once = transform_box(&b, &t).unwrap().unwrap();
        let twice = transform_box(&once, &t).unwrap().unwrap();
        assert_eq!(twice, b);
    }

    #[test]
    fn rotate90_four_times_is_identity() {
        let mut extent = ImageExtent::new(64, 48);
        let mut b = bb(3.0, 7.0, 11.0, 5.0);
        let original = b;
        for _ in 0..4 {
            let t = BoxTransform::Rotate90 {
                extent,
                quarter_turns: 1,
            };
            b = transform_box(&b, &t).unwrap().unwrap();
            extent = extent.transposed();
        }
        assert_eq!(b, original);
        assert_eq!(extent, ImageExtent::new(64, 48));
    }

    #[test]
    fn rotate90_matches_corner_mapping() {
        // (x, y, w, h) -> (H - y - h, x, h, w) for one clockwise turn.
        let extent = ImageExtent::new(100, 60);
        let t = BoxTransform::Rotate90 {
            extent,
            quarter_turns: 1,
        };
        let b = bb(10.0, 20.0, 30.0, 15.0);
        let r = transform_box(&b, &t).unwrap().unwrap();
        assert_eq!(r.xywh(), [60.0 - 20.0 - 15.0, 10.0, 15.0, 30.0]);
    }

    #[test]
    fn rotate90_rejects_bad_turn_count() {
        let extent = ImageExtent::new(10, 10);
        let t = BoxTransform::Rotate90 {
            extent,
            quarter_turns: 4,
        };
        assert_eq!(
            transform_box(&bb(0.0, 0.0, 1.0, 1.0), &t),
            Err(GeometryError::InvalidQuarterTurns(4))
        );
    }

    #[test]
    fn crop_keeps_box_at_exactly_quarter_visibility() {
        // Visible area 100 of 400 = 0.25: retained and remapped.
        let extent = ImageExtent::new(100, 100);
        let t = BoxTransform::Crop {
            window: bb(10.0, 10.0, 90.0, 90.0),
            extent,
        };
        let kept = transform_box(&bb(0.0, 0.0, 20.0, 20.0), &t)
            .unwrap()
            .unwrap();
        assert_eq!(kept.xywh(), [0.0, 0.0, 10.0, 10.0]);
    }

    #[test]
    fn crop_drops_outside_box() {
        let extent = ImageExtent::new(100, 100);
        let t = BoxTransform::Crop {
            window: bb(50.0, 50.0, 40.0, 40.0),
            extent,
        };
        assert_eq!(transform_box(&bb(0.0, 0.0, 10.0, 10.0), &t).unwrap(), None);
    }

    #[test]
    fn crop_result_lies_within_window_frame() {
        let extent = ImageExtent::new(100, 100);
        let window = bb(10.0, 20.0, 50.0, 40.0);
        let t = BoxTransform::Crop { window, extent };
        for b in [
            bb(5.0, 15.0, 20.0, 20.0),
            bb(30.0, 30.0, 40.0, 40.0),
            bb(12.0, 22.0, 3.0, 3.0),
        ] {
            if let Some(out) = transform_box(&b, &t).unwrap() {
                assert!(out.x_min() >= 0.0 && out.y_min() >= 0.0);
                assert!(out.x_max() <= window.width() && out.y_max() <= window.height());
            }
        }
    }

    #[test]
    fn crop_rejects_window_outside_extent() {
        let extent = ImageExtent::new(100, 100);
        let t = BoxTransform::Crop {
            window: bb(90.0, 90.0, 20.0, 20.0),
            extent,
        };
        assert!(matches!(
            transform_box(&bb(0.0, 0.0, 5.0, 5.0), &t),
            Err(GeometryError::CropOutsideExtent { .. })
        ));
    }

    #[test]
    fn scale_multiplies_all_fields() {
        let t = BoxTransform::Scale { sx: 2.0, sy: 0.5 };
        let r = transform_box(&bb(10.0, 20.0, 30.0, 40.0), &t)
            .unwrap()
            .unwrap();
        assert_eq!(r.xywh(), [20.0, 10.0, 60.0, 20.0]);
    }

    #[test]
    fn hull_of_zero_rotation_is_original() {
        let b = bb(10.0, 20.0, 30.0, 40.0);
        let hull = rotate_box_hull(&b, 0.0, (50.0, 50.0));
        for (a, e) in hull.xywh().iter().zip(b.xywh()) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn hull_of_quarter_turn_matches_rotate90_on_square_extent() {
        let extent = ImageExtent::new(100, 100);
        let b = bb(10.0, 20.0, 30.0, 15.0);
        let hull = rotate_box_hull(&b, std::f64::consts::FRAC_PI_2, (50.0, 50.0));
        let t = BoxTransform::Rotate90 {
            extent,
            quarter_turns: 1,
        };
        let exact = transform_box(&b, &t).unwrap().unwrap();
        for (a, e) in hull.xywh().iter().zip(exact.xywh()) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn pixel_rect_covers_fractional_box() {
        let extent = ImageExtent::new(100, 100);
        let r = pixel_rect(&bb(1.2, 2.9, 0.5, 0.2), extent);
        // Spans the row boundary at y = 3, so it covers two pixel rows.
        assert_eq!(
            r,
            PixelRect {
                x: 1,
                y: 2,
                width: 1,
                height: 2
            }
        );
        let r = pixel_rect(&bb(1.2, 2.1, 0.5, 0.2), extent);
        assert_eq!(
            r,
            PixelRect {
                x: 1,
                y: 2,
                width: 1,
                height: 1
            }
        );
        let r = pixel_rect(&bb(10.0, 10.0, 5.0, 5.0), extent);
        assert_eq!(
            r,
            PixelRect {
                x: 10,
                y: 10,
                width: 5,
                height: 5
            }
        );
    }

    #[test]
    fn invalid_constructions_are_rejected() {
        assert!(BoundingBox::try_new(0.0, 0.0, 0.0, 5.0).is_err());
        assert!(BoundingBox::try_new(0.0, 0.0, 5.0, -1.0).is_err());
        assert!(BoundingBox::try_new(f64::NAN, 0.0, 5.0, 5.0).is_err());
        assert!(ImageExtent::try_new(0, 5).is_err());
    }
}
