//! Detector-agnostic toolkit for object-detection datasets: bounding-box
//! aware augmentations (MixUp, BboxMixUp, CutMix, ClassCutMix plus the
//! standard flips/crop/rotate/blur/equalize/JPEG transforms), lossy
//! JPEG dataset variants with storage reporting, and COCO-style detection
//! metrics (per-class AP at IoU 0.5, mAP, mAP:C, fps) over external
//! detectors' prediction files.
//!
//! The box algebra and scalar metrics are generic over the floating-point
//! type (see [`scalar::Scalar`]); the aliases below pin the `f64` defaults
//! the rest of the crate uses.

pub mod canonical;
pub mod compression;
pub mod dataset_io;
pub mod evaluation;
pub mod geometry;
pub mod imageops;
pub mod mixers;
pub mod pipeline;
pub mod rng;
pub mod scalar;

pub use geometry::{BoundingBox, ImageExtent};
pub use imageops::{Annotation, PixelImage, Provenance};
pub use scalar::Scalar;

/// Single-precision box, for callers that want the generic algebra at f32.
pub type BoundingBoxF32 = geometry::BoundingBox<f32>;
/// Double-precision box; identical to the crate-wide `BoundingBox` default.
pub type BoundingBoxF64 = geometry::BoundingBox<f64>;
