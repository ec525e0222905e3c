//! Floating-point scalar abstraction for the numerical kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Scalar used by the power-flow and criteria kernels: `f32` or `f64`.
///
/// Network data is stored in `f64`; kernels convert on entry and report margins
/// back in `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to every Scalar")
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
