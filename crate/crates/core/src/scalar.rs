//! Scalar abstraction for the box algebra and metric computations.
//!
//! The geometric and metric code in this crate is generic over the
//! floating-point type; `f64` is the default used by the concrete
//! aliases at the crate root.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: f32 or f64.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + std::fmt::Debug + Copy + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}
