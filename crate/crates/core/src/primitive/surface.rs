use serde::{Deserialize, Serialize};

use super::{BSplineSurface, Frame};
use crate::complex::PatchKind;
use crate::scalar::{Scalar, Vec3};

/// Parametric surface of a patch.
///
/// Parameterizations (`u`, `v`) per kind:
/// - plane: in-plane coordinates along `frame.x`, `frame.y`
/// - cylinder: angle about `frame.z`, height along it
/// - cone: angle, height above the apex (`frame.origin`) along `frame.z`
/// - sphere: longitude, latitude
/// - torus: angle about the axis, angle around the tube
/// - b-spline: native `[0, 1]²`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", bound = "T: Scalar")]
pub enum Surface<T: Scalar> {
    Plane { frame: Frame<T> },
    Cylinder { frame: Frame<T>, radius: T },
    Cone { frame: Frame<T>, half_angle: T },
    Sphere { frame: Frame<T>, radius: T },
    Torus { frame: Frame<T>, major_radius: T, minor_radius: T },
    BSpline(BSplineSurface<T>),
}

impl<T: Scalar> Surface<T> {
    pub fn kind(&self) -> PatchKind {
        match self {
            Surface::Plane { .. } => PatchKind::Plane,
            Surface::Cylinder { .. } => PatchKind::Cylinder,
            Surface::Cone { .. } => PatchKind::Cone,
            Surface::Sphere { .. } => PatchKind::Sphere,
            Surface::Torus { .. } => PatchKind::Torus,
            Surface::BSpline(_) => PatchKind::BSpline,
        }
    }

    pub fn frame(&self) -> Option<&Frame<T>> {
        match self {
            Surface::Plane { frame }
            | Surface::Cylinder { frame, .. }
            | Surface::Cone { frame, .. }
            | Surface::Sphere { frame, .. }
            | Surface::Torus { frame, .. } => Some(frame),
            Surface::BSpline(_) => None,
        }
    }

    /// Unit normal and signed offset (`n·x = d`) of a plane.
    pub fn plane_equation(&self) -> Option<(Vec3<T>, T)> {
        match self {
            Surface::Plane { frame } => Some((frame.z, frame.z.dot(&frame.origin))),
            _ => None,
        }
    }

    /// Symmetry axis (point, unit direction) for surfaces of revolution.
    pub fn axis(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        match self {
            Surface::Cylinder { frame, .. }
            | Surface::Cone { frame, .. }
            | Surface::Torus { frame, .. } => Some((frame.origin, frame.z)),
            _ => None,
        }
    }

    pub fn eval(&self, u: T, v: T) -> Vec3<T> {
        match self {
            Surface::Plane { frame } => frame.origin + frame.x * u + frame.y * v,
            Surface::Cylinder { frame, radius } => {
                frame.to_world(&Vec3::new(*radius * u.cos(), *radius * u.sin(), v))
            }
            Surface::Cone { frame, half_angle } => {
                let r = v * half_angle.tan();
                frame.to_world(&Vec3::new(r * u.cos(), r * u.sin(), v))
            }
            Surface::Sphere { frame, radius } => frame.to_world(&Vec3::new(
                *radius * v.cos() * u.cos(),
                *radius * v.cos() * u.sin(),
                *radius * v.sin(),
            )),
            Surface::Torus { frame, major_radius, minor_radius } => {
                let rho = *major_radius + *minor_radius * v.cos();
                frame.to_world(&Vec3::new(rho * u.cos(), rho * u.sin(), *minor_radius * v.sin()))
            }
            Surface::BSpline(s) => s.eval(u, v),
        }
    }

    /// Closest point on the (untrimmed) surface: `(u, v, foot, distance)`.
    pub fn project(&self, p: &Vec3<T>) -> (T, T, Vec3<T>, T) {
        let zero = T::zero();
        match self {
            Surface::Plane { frame } => {
                let l = frame.to_local(p);
                let foot = frame.origin + frame.x * l.x + frame.y * l.y;
                (l.x, l.y, foot, l.z.abs())
            }
            Surface::Cylinder { frame, radius } => {
                let l = frame.to_local(p);
                let rho = (l.x * l.x + l.y * l.y).sqrt();
                let u = if rho > zero { l.y.atan2(l.x) } else { zero };
                let foot = self.eval(u, l.z);
                (u, l.z, foot, (rho - *radius).abs())
            }
            Surface::Cone { frame, half_angle } => {
                let l = frame.to_local(p);
                let rho = (l.x * l.x + l.y * l.y).sqrt();
                let u = if rho > zero { l.y.atan2(l.x) } else { zero };
                let (s, c) = (half_angle.sin(), half_angle.cos());
                let t = rho * s + l.z * c;
                if t <= zero {
                    (u, zero, frame.origin, (p - frame.origin).norm())
                } else {
                    let v = t * c;
                    let foot = self.eval(u, v);
                    (u, v, foot, (rho * c - l.z * s).abs())
                }
            }
            Surface::Sphere { frame, radius } => {
                let l = frame.to_local(p);
                let rho = (l.x * l.x + l.y * l.y).sqrt();
                let u = if rho > zero { l.y.atan2(l.x) } else { zero };
                let v = l.z.atan2(rho);
                let foot = self.eval(u, v);
                (u, v, foot, (l.norm() - *radius).abs())
            }
            Surface::Torus { frame, major_radius, minor_radius } => {
                let l = frame.to_local(p);
                let rho = (l.x * l.x + l.y * l.y).sqrt();
                let u = if rho > zero { l.y.atan2(l.x) } else { zero };
                let dr = rho - *major_radius;
                let v = l.z.atan2(dr);
                let foot = self.eval(u, v);
                (u, v, foot, ((dr * dr + l.z * l.z).sqrt() - *minor_radius).abs())
            }
            Surface::BSpline(s) => s.project(p),
        }
    }

    pub fn distance(&self, p: &Vec3<T>) -> T {
        self.project(p).3
    }

    /// Unit normal at parameters `(u, v)`.
    pub fn normal(&self, u: T, v: T) -> Vec3<T> {
        match self {
            Surface::Plane { frame } => frame.z,
            Surface::Cylinder { frame, .. } => frame.x * u.cos() + frame.y * u.sin(),
            Surface::Cone { frame, half_angle } => {
                let radial = frame.x * u.cos() + frame.y * u.sin();
                (radial * half_angle.cos() - frame.z * half_angle.sin()).normalize()
            }
            Surface::Sphere { frame, .. } => {
                (frame.x * (v.cos() * u.cos()) + frame.y * (v.cos() * u.sin()) + frame.z * v.sin())
                    .normalize()
            }
            Surface::Torus { frame, .. } => {
                let radial = frame.x * u.cos() + frame.y * u.sin();
                (radial * v.cos() + frame.z * v.sin()).normalize()
            }
            Surface::BSpline(s) => s.normal(u, v),
        }
    }

    /// Whether the `u` parameter is an angle (periodic with period 2π).
    pub fn u_is_angular(&self) -> bool {
        matches!(
            self,
            Surface::Cylinder { .. } | Surface::Cone { .. } | Surface::Sphere { .. } | Surface::Torus { .. }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> Frame<f64> {
        Frame::from_axis(Vec3::new(0.5, 0.5, 0.5), Vec3::new(0.2, -0.3, 1.0))
    }

    fn surfaces() -> Vec<Surface<f64>> {
        vec![
            Surface::Plane { frame: frame() },
            Surface::Cylinder { frame: frame(), radius: 0.2 },
            Surface::Cone { frame: frame(), half_angle: 0.4 },
            Surface::Sphere { frame: frame(), radius: 0.3 },
            Surface::Torus { frame: frame(), major_radius: 0.3, minor_radius: 0.1 },
        ]
    }

    #[test]
    fn projection_of_surface_point_is_itself() {
        for s in surfaces() {
            for &(u, v) in &[(0.3, 0.2), (1.9, 0.35), (-2.5, 0.1)] {
                let p = s.eval(u, v);
                let (_, _, foot, d) = s.project(&p);
                assert!(d < 1e-12, "{:?} d={d}", s.kind());
                assert!((foot - p).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn offset_along_normal_gives_distance() {
        for s in surfaces() {
            let (u, v) = (0.7, 0.25);
            let p = s.eval(u, v) + s.normal(u, v) * 0.01;
            let d = s.distance(&p);
            assert!((d - 0.01).abs() < 1e-10, "{:?} d={d}", s.kind());
        }
    }

    #[test]
    fn normals_orthogonal_to_tangents() {
        let h = 1e-6;
        for s in surfaces() {
            let (u, v) = (0.9, 0.3);
            let n = s.normal(u, v);
            let du = (s.eval(u + h, v) - s.eval(u - h, v)) / (2.0 * h);
            let dv = (s.eval(u, v + h) - s.eval(u, v - h)) / (2.0 * h);
            assert!(n.dot(&du).abs() < 1e-6 && n.dot(&dv).abs() < 1e-6, "{:?}", s.kind());
        }
    }

    #[test]
    fn cylinder_distance_from_axis() {
        let s = Surface::Cylinder { frame: Frame::from_axis(Vec3::zeros(), Vec3::z()), radius: 0.2f64 };
        let d = s.distance(&Vec3::new(0.25, 0.0, 3.0));
        assert!((d - 0.05).abs() < 1e-12);
    }
}
