//! Scalar abstraction for the numeric core.
//!
//! Everything downstream of the tensor engine is generic over [`Scalar`] so
//! the same model code runs in f32 for training and in f64 where tests need
//! tighter floating-point headroom (e.g. finite-difference gradient checks).

use num_traits::{Float, NumAssignOps, NumCast, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating-point element type supported by tensors, models and optimizers.
pub trait Scalar:
    Float + NumAssignOps + Debug + Display + Default + Send + Sync + 'static
{
    #[inline]
    fn from_f64(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 -> scalar conversion")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("scalar -> f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
