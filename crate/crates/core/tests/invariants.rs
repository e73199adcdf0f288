//! Property tests for the crate's contracts: box-algebra involutions,
//! crop containment, IoU bounds, mask counts, and AP score-scale
//! invariance.

use boxaug::evaluation::average_precision;
use boxaug::geometry::{iou, transform_box, BoundingBox, BoxTransform, ImageExtent};
use boxaug::mixers::{BinaryMask, MaskOrientation};
use proptest::prelude::*;

/// Dyadic coordinates (quarter-pixel grid) keep flip/rotate arithmetic
/// exact in f64, so involution checks can assert equality.
fn dyadic_box(max: u32) -> impl Strategy<Value = BoundingBox> {
    let quarter = 0..(max * 4 - 4);
    (quarter.clone(), quarter, 1u32..=16, 1u32..=16).prop_map(move |(x4, y4, w4, h4)| {
        let x = x4 as f64 / 4.0;
        let y = y4 as f64 / 4.0;
        let w = (w4 as f64 / 4.0).min(max as f64 - x);
        let h = (h4 as f64 / 4.0).min(max as f64 - y);
        BoundingBox::new(x, y, w.max(0.25), h.max(0.25))
    })
}

proptest! {
    #[test]
    fn iou_is_symmetric_bounded_and_one_on_self(a in dyadic_box(64), b in dyadic_box(64)) {
        let ab = iou(&a, &b);
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn flips_and_half_turns_are_involutions(bbox in dyadic_box(64)) {
        let extent = ImageExtent::new(64, 64);
        for t in [
            BoxTransform::HorizontalFlip { extent },
            BoxTransform::VerticalFlip { extent },
            BoxTransform::Rotate90 { extent, quarter_turns: 2 },
        ] {
            let once = transform_box(&bbox, &t).unwrap().unwrap();
            let twice = transform_box(&once, &t).unwrap().unwrap();
            prop_assert_eq!(twice, bbox);
        }
    }

    #[test]
    fn quarter_turns_compose_to_identity(bbox in dyadic_box(64)) {
        let mut extent = ImageExtent::new(64, 64);
        let mut current = bbox;
        for _ in 0..4 {
            let t = BoxTransform::Rotate90 { extent, quarter_turns: 1 };
            current = transform_box(&current, &t).unwrap().unwrap();
            extent = extent.transposed();
        }
        prop_assert_eq!(current, bbox);
    }

    #[test]
    fn crop_outputs_stay_inside_the_window(
        bbox in dyadic_box(64),
        wx in 0u32..32, wy in 0u32..32, ww in 8u32..32, wh in 8u32..32,
    ) {
        let extent = ImageExtent::new(64, 64);
        let window = BoundingBox::new(wx as f64, wy as f64, ww as f64, wh as f64);
        let t = BoxTransform::Crop { window, extent };
        if let Some(out) = transform_box(&bbox, &t).unwrap() {
            prop_assert!(out.x_min() >= 0.0 && out.y_min() >= 0.0);
            prop_assert!(out.x_max() <= ww as f64 + 1e-9);
            prop_assert!(out.y_max() <= wh as f64 + 1e-9);
            // Retention rule: at least a quarter of the original area.
            prop_assert!(out.area() / bbox.area() >= 0.25 - 1e-12);
        }
    }

    #[test]
    fn half_split_masks_have_exact_counts(
        w in 1u32..=24, h in 1u32..=24, proportion in 0.05f64..=1.0,
    ) {
        for orientation in [MaskOrientation::Left, MaskOrientation::Right, MaskOrientation::Top, MaskOrientation::Bottom] {
            let mask = BinaryMask::half_split(w, h, proportion, orientation);
            let expected = (proportion * (w * h) as f64).round() as u64;
            prop_assert_eq!(mask.ones(), expected);
        }
    }

    #[test]
    fn ap_depends_only_on_score_order(
        labels in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 0..12),
        gt_extra in 0usize..4,
    ) {
        let gt_count = labels.iter().filter(|(_, tp)| *tp).count() + gt_extra;
        // A strictly increasing transform of the scores must not move AP.
        let transformed: Vec<(f64, bool)> =
            labels.iter().map(|(s, tp)| (s / 2.0 + 0.25, *tp)).collect();
        let a: f64 = average_precision(&labels, gt_count);
        let b: f64 = average_precision(&transformed, gt_count);
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
    }
}
