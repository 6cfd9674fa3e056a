//! Scalar abstraction shared by every floating-point code path.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the pipeline is generic over: `f32` or `f64`.
///
/// Bundles the nalgebra field operations with the num-traits conversions
/// used for index arithmetic and the fixed-point codec.
pub trait Real: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default {
    /// Lossless widening to `f64` (exact for both `f32` and `f64`).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("real scalar converts to f64")
    }

    /// Conversion from `f64`, rounding to the nearest representable value.
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("f64 converts to real scalar")
    }

    fn from_usize_lossy(value: usize) -> Self {
        Self::from_usize(value).expect("usize converts to real scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}
