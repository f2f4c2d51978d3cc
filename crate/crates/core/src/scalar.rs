//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating-point scalar usable throughout the crate (`f32` or `f64`).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Serialize + DeserializeOwned + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the concrete type.
    #[inline]
    fn eps() -> Self {
        Self::default_epsilon()
    }

    /// The larger of `tol` and a small multiple of machine epsilon, so that
    /// tolerances tuned for `f64` stay attainable in `f32`.
    #[inline]
    fn attainable(tol: f64) -> Self {
        let floor = Self::eps() * Self::lit(8.0);
        let tol = Self::lit(tol);
        if tol > floor {
            tol
        } else {
            floor
        }
    }
}

impl<T> Real for T where
    T: RealField + Copy + FromPrimitive + ToPrimitive + Serialize + DeserializeOwned + Send + Sync + 'static
{
}
