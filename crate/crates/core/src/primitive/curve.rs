use serde::{Deserialize, Serialize};

use super::{BSplineCurve, Frame};
use crate::complex::CurveKind;
use crate::scalar::{Scalar, Vec3};

/// Parametric curve of an edge. Lines are parameterized by arc length from
/// `point`; circles and ellipses by angle in the frame's `x`/`y` plane;
/// splines by `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", bound = "T: Scalar")]
pub enum CurvePrimitive<T: Scalar> {
    Line { point: Vec3<T>, direction: Vec3<T> },
    Circle { frame: Frame<T>, radius: T },
    /// `frame.x` is the direction of the `semi_x` axis.
    Ellipse { frame: Frame<T>, semi_x: T, semi_y: T },
    BSpline(BSplineCurve<T>),
}

impl<T: Scalar> CurvePrimitive<T> {
    pub fn kind(&self) -> CurveKind {
        match self {
            CurvePrimitive::Line { .. } => CurveKind::Line,
            CurvePrimitive::Circle { .. } => CurveKind::Circle,
            CurvePrimitive::Ellipse { .. } => CurveKind::Ellipse,
            CurvePrimitive::BSpline(_) => CurveKind::BSpline,
        }
    }

    pub fn eval(&self, t: T) -> Vec3<T> {
        match self {
            CurvePrimitive::Line { point, direction } => point + direction * t,
            CurvePrimitive::Circle { frame, radius } => {
                frame.origin + (frame.x * t.cos() + frame.y * t.sin()) * *radius
            }
            CurvePrimitive::Ellipse { frame, semi_x, semi_y } => {
                frame.origin + frame.x * (*semi_x * t.cos()) + frame.y * (*semi_y * t.sin())
            }
            CurvePrimitive::BSpline(c) => c.eval(t),
        }
    }

    /// Plane normal of planar conics.
    pub fn normal(&self) -> Option<Vec3<T>> {
        match self {
            CurvePrimitive::Circle { frame, .. } | CurvePrimitive::Ellipse { frame, .. } => {
                Some(frame.z)
            }
            _ => None,
        }
    }

    pub fn center(&self) -> Option<Vec3<T>> {
        match self {
            CurvePrimitive::Circle { frame, .. } | CurvePrimitive::Ellipse { frame, .. } => {
                Some(frame.origin)
            }
            _ => None,
        }
    }

    /// Closest point: `(parameter, foot, distance)`.
    pub fn project(&self, p: &Vec3<T>) -> (T, Vec3<T>, T) {
        match self {
            CurvePrimitive::Line { point, direction } => {
                let t = (p - point).dot(direction);
                let foot = point + direction * t;
                (t, foot, (p - foot).norm())
            }
            CurvePrimitive::Circle { frame, radius } => {
                let l = frame.to_local(p);
                let rho = (l.x * l.x + l.y * l.y).sqrt();
                let t = if rho > T::zero() { l.y.atan2(l.x) } else { T::zero() };
                let foot = self.eval(t);
                let dr = rho - *radius;
                (t, foot, (dr * dr + l.z * l.z).sqrt())
            }
            CurvePrimitive::Ellipse { frame, semi_x, semi_y } => {
                let l = frame.to_local(p);
                let (x, y, d2) = point_ellipse_distance_2d(*semi_x, *semi_y, l.x, l.y);
                let t = (y / *semi_y).atan2(x / *semi_x);
                let foot = frame.origin + frame.x * x + frame.y * y;
                (t, foot, (d2 * d2 + l.z * l.z).sqrt())
            }
            CurvePrimitive::BSpline(c) => c.project(p),
        }
    }

    pub fn distance(&self, p: &Vec3<T>) -> T {
        self.project(p).2
    }
}

/// Closest point on the axis-aligned ellipse `(x/a)² + (y/b)² = 1` to `(px, py)`.
///
/// Returns `(x, y, distance)`. Robust bisection on the Lagrange multiplier,
/// valid for any point including the interior and the axes.
pub fn point_ellipse_distance_2d<T: Scalar>(a: T, b: T, px: T, py: T) -> (T, T, T) {
    // Work with e0 >= e1 and the point in the first quadrant.
    let swap = a < b;
    let (e0, e1) = if swap { (b, a) } else { (a, b) };
    let (q0, q1) = if swap { (py, px) } else { (px, py) };
    let (y0, y1) = (q0.abs(), q1.abs());
    let zero = T::zero();
    let one = T::one();
    let (x0, x1) = if y1 > zero {
        if y0 > zero {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - one;
            if g != zero {
                let r0 = (e0 / e1) * (e0 / e1);
                let s = ellipse_bisector(r0, z0, z1, g);
                (r0 * y0 / (s + r0), y1 / (s + one))
            } else {
                (y0, y1)
            }
        } else {
            (zero, e1)
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            (e0 * xde0, e1 * (one - xde0 * xde0).max(zero).sqrt())
        } else {
            (e0, zero)
        }
    };
    let dist = ((x0 - y0) * (x0 - y0) + (x1 - y1) * (x1 - y1)).sqrt();
    let x0 = if q0 < zero { -x0 } else { x0 };
    let x1 = if q1 < zero { -x1 } else { x1 };
    if swap {
        (x1, x0, dist)
    } else {
        (x0, x1, dist)
    }
}

fn ellipse_bisector<T: Scalar>(r0: T, z0: T, z1: T, g0: T) -> T {
    let one = T::one();
    let n0 = r0 * z0;
    let mut s0 = z1 - one;
    let mut s1 = if g0 < T::zero() { T::zero() } else { (n0 * n0 + z1 * z1).sqrt() - one };
    let mut s = T::zero();
    for _ in 0..200 {
        s = (s0 + s1) * T::lit(0.5);
        if s == s0 || s == s1 {
            break;
        }
        let ratio0 = n0 / (s + r0);
        let ratio1 = z1 / (s + one);
        let g = ratio0 * ratio0 + ratio1 * ratio1 - one;
        if g > T::zero() {
            s0 = s;
        } else if g < T::zero() {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipse_distance_matches_dense_scan() {
        let (a, b) = (0.4, 0.15);
        for &(px, py) in &[(0.5, 0.3), (0.1, 0.05), (-0.2, 0.4), (0.0, 0.0), (0.6, 0.0), (0.0, -0.3)] {
            let (_, _, d) = point_ellipse_distance_2d(a, b, px, py);
            let brute = (0..200_000)
                .map(|i| {
                    let t = i as f64 / 200_000.0 * std::f64::consts::TAU;
                    ((a * t.cos() - px).powi(2) + (b * t.sin() - py).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((d - brute).abs() < 1e-7, "({px},{py}) d={d} brute={brute}");
        }
    }

    #[test]
    fn circle_projection() {
        let c = CurvePrimitive::Circle { frame: Frame::from_axis(Vec3::zeros(), Vec3::z()), radius: 0.3 };
        let (_, foot, d) = c.project(&Vec3::new(0.5, 0.0, 0.1));
        assert!((foot - Vec3::new(0.3, 0.0, 0.0)).norm() < 1e-12);
        assert!((d - (0.04f64 + 0.01).sqrt()).abs() < 1e-12);
    }
}
