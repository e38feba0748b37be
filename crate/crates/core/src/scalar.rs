//! Scalar abstractions.
//!
//! The spiking engine only needs field arithmetic and ordering, so it is
//! generic over [`Scalar`], which exact rational types also satisfy. The
//! adaptation head needs `exp`, so it works over [`Real`] (`f32`/`f64`).

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, NumAssign, ToPrimitive};

/// Field-like number usable by the LIF recurrence, layers and backward pass.
pub trait Scalar:
    Num + NumAssign + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Lossy conversion from `f64`. Panics only if the value is not representable at all.
    fn of(value: f64) -> Self {
        Self::from_f64(value).unwrap_or_else(|| panic!("{value} not representable"))
    }

    /// Lossy conversion to `f64`.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `false` for NaN or infinite values. Exact types are always finite.
    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl<T> Scalar for T where
    T: Num + NumAssign + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
}

/// Floating-point scalar used by softmax, similarity and MMD.
pub trait Real: Scalar + Float {}

impl<T: Scalar + Float> Real for T {}
