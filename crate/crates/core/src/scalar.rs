//! Scalar abstraction shared by every numerical module.
//!
//! All matrix code is written against [`Scalar`], which is implemented for
//! `f32` and `f64`. Tolerances are expressed as `f64` literals and converted
//! with [`Scalar::of`]; the defaults are tuned for double precision.

use nalgebra::RealField;
use num_traits::ToPrimitive;

pub trait Scalar: RealField + Copy + ToPrimitive {
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the concrete type.
    fn machine_eps() -> Self {
        Self::default_epsilon()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_round_trip() {
        assert_eq!(<f64 as Scalar>::of(0.5), 0.5);
        assert_eq!(<f32 as Scalar>::of(0.25), 0.25f32);
        assert_eq!(Scalar::as_f64(1.5f32), 1.5);
        assert!(<f32 as Scalar>::machine_eps() > <f64 as Scalar>::machine_eps() as f32);
    }
}
