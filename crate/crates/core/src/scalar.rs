//! Scalar abstraction shared by every geometric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::{RealField, Vector3};
use num_traits::{FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating point type the geometry, fitting and metric code is generic over.
///
/// Implemented for `f32` and `f64`. Everything that needs linear algebra goes
/// through nalgebra's `RealField`, so the usual `sqrt`/`abs`/`atan2` methods
/// are available without pulling `num_traits::Float` into scope.
pub trait Scalar:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon.
    fn eps() -> Self;

    #[inline]
    fn is_finite_val(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Scalar for f32 {
    #[inline]
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    #[inline]
    fn eps() -> Self {
        f64::EPSILON
    }
}

/// A 3D point or direction.
pub type Vec3<T> = Vector3<T>;

pub(crate) fn is_finite_point<T: Scalar>(p: &Vec3<T>) -> bool {
    p.iter().all(|c| c.is_finite_val())
}

/// Converts a point between scalar types.
pub fn cast_point<T: Scalar, U: Scalar>(p: &Vec3<T>) -> Vec3<U> {
    Vector3::new(U::lit(p.x.as_f64()), U::lit(p.y.as_f64()), U::lit(p.z.as_f64()))
}

/// Returns two unit vectors completing `axis` to a right-handed orthonormal frame.
///
/// The choice is deterministic: the helper vector is the world axis least
/// aligned with `axis`.
pub fn orthonormal_complement<T: Scalar>(axis: &Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let a = axis.normalize();
    let ax = a.x.abs();
    let ay = a.y.abs();
    let az = a.z.abs();
    let helper = if ax <= ay && ax <= az {
        Vec3::x()
    } else if ay <= az {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let x = (helper - a * helper.dot(&a)).normalize();
    let y = a.cross(&x);
    (x, y)
}

/// Angle in radians between two directions, ignoring sign.
pub fn axis_angle<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    let c = (a.normalize().dot(&b.normalize())).abs().min(T::one());
    c.acos()
}
