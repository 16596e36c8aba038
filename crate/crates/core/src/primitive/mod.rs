//! Typed geometric primitives attached to refined complex elements.

mod bspline;
mod curve;
mod surface;

use serde::{Deserialize, Serialize};

use crate::scalar::{orthonormal_complement, Scalar, Vec3};

pub use bspline::{Basis, BSplineCurve, BSplineSurface};
pub use curve::{point_ellipse_distance_2d, CurvePrimitive};
pub use surface::Surface;

/// Right-handed orthonormal frame. `z` is the distinguished axis (normal for
/// planes and circles, symmetry axis for surfaces of revolution).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Frame<T: Scalar> {
    pub origin: Vec3<T>,
    pub x: Vec3<T>,
    pub y: Vec3<T>,
    pub z: Vec3<T>,
}

impl<T: Scalar> Frame<T> {
    /// Frame with the given origin and axis; `x`/`y` are chosen deterministically.
    pub fn from_axis(origin: Vec3<T>, axis: Vec3<T>) -> Self {
        let z = axis.normalize();
        let (x, y) = orthonormal_complement(&z);
        Frame { origin, x, y, z }
    }

    /// Frame with axis `z` whose `x` axis is the component of `hint` orthogonal to `z`.
    pub fn from_axis_and_hint(origin: Vec3<T>, axis: Vec3<T>, hint: Vec3<T>) -> Self {
        let z = axis.normalize();
        let h = hint - z * hint.dot(&z);
        if h.norm() <= T::lit(1e-12) {
            return Self::from_axis(origin, z);
        }
        let x = h.normalize();
        let y = z.cross(&x);
        Frame { origin, x, y, z }
    }

    pub fn to_local(&self, p: &Vec3<T>) -> Vec3<T> {
        let d = p - self.origin;
        Vec3::new(d.dot(&self.x), d.dot(&self.y), d.dot(&self.z))
    }

    pub fn to_world(&self, l: &Vec3<T>) -> Vec3<T> {
        self.origin + self.x * l.x + self.y * l.y + self.z * l.z
    }

    pub fn cast<U: Scalar>(&self) -> Frame<U> {
        use crate::scalar::cast_point;
        Frame {
            origin: cast_point(&self.origin),
            x: cast_point(&self.x),
            y: cast_point(&self.y),
            z: cast_point(&self.z),
        }
    }
}
