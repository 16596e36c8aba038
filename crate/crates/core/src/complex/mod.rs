//! Definite B-Rep chain complex: corners, curves and patches with binary
//! incidence matrices FE (patch×curve), EV (curve×corner) and FV (patch×corner).

mod matrix;
mod topology;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CurveSamples, PatchSamples};
use crate::primitive::{CurvePrimitive, Surface};
use crate::scalar::{cast_point, is_finite_point, Scalar, Vec3};

pub use matrix::BinaryMatrix;
pub use topology::{check_dependencies, is_valid_topology, topology_residuals, TopologyResiduals};

/// The three element groups of a complex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementGroup {
    Corner,
    Curve,
    Patch,
}

/// Curve primitive kinds, in the order used by type distributions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Line,
    Circle,
    BSpline,
    Ellipse,
}

impl CurveKind {
    pub const ALL: [CurveKind; 4] =
        [CurveKind::Line, CurveKind::Circle, CurveKind::BSpline, CurveKind::Ellipse];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CurveKind::Line => "line",
            CurveKind::Circle => "circle",
            CurveKind::BSpline => "b_spline",
            CurveKind::Ellipse => "ellipse",
        }
    }
}

/// Patch primitive kinds, in the order used by type distributions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchKind {
    Plane,
    Cylinder,
    Torus,
    BSpline,
    Cone,
    Sphere,
}

impl PatchKind {
    pub const ALL: [PatchKind; 6] = [
        PatchKind::Plane,
        PatchKind::Cylinder,
        PatchKind::Torus,
        PatchKind::BSpline,
        PatchKind::Cone,
        PatchKind::Sphere,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PatchKind::Plane => "plane",
            PatchKind::Cylinder => "cylinder",
            PatchKind::Torus => "torus",
            PatchKind::BSpline => "b_spline",
            PatchKind::Cone => "cone",
            PatchKind::Sphere => "sphere",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Corner<T: Scalar> {
    pub point: Vec3<T>,
    pub exists: bool,
}

impl<T: Scalar> Corner<T> {
    pub fn new(point: Vec3<T>) -> Self {
        Corner { point, exists: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Curve<T: Scalar> {
    pub kind: CurveKind,
    pub samples: CurveSamples<T>,
    pub primitive: Option<CurvePrimitive<T>>,
    pub exists: bool,
}

impl<T: Scalar> Curve<T> {
    pub fn new(kind: CurveKind, samples: CurveSamples<T>) -> Self {
        Curve { kind, samples, primitive: None, exists: true }
    }

    pub fn with_primitive(mut self, primitive: CurvePrimitive<T>) -> Self {
        self.primitive = Some(primitive);
        self
    }

    /// The openness flag `O`: an open curve has two endpoints.
    pub fn is_open(&self) -> bool {
        !self.samples.is_closed()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Patch<T: Scalar> {
    pub kind: PatchKind,
    pub samples: PatchSamples<T>,
    pub primitive: Option<Surface<T>>,
    pub exists: bool,
}

impl<T: Scalar> Patch<T> {
    pub fn new(kind: PatchKind, samples: PatchSamples<T>) -> Self {
        Patch { kind, samples, primitive: None, exists: true }
    }

    pub fn with_primitive(mut self, primitive: Surface<T>) -> Self {
        self.primitive = Some(primitive);
        self
    }

    pub fn is_u_closed(&self) -> bool {
        self.samples.is_u_closed()
    }
}

/// A B-Rep chain complex with binary structure and per-element geometry.
///
/// Immutable structure is not enforced by the type, but every constructor
/// checks that matrix shapes agree with the element lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ChainComplex<T: Scalar> {
    pub corners: Vec<Corner<T>>,
    pub curves: Vec<Curve<T>>,
    pub patches: Vec<Patch<T>>,
    pub fe: BinaryMatrix,
    pub ev: BinaryMatrix,
    pub fv: BinaryMatrix,
}

impl<T: Scalar> ChainComplex<T> {
    pub fn new(
        corners: Vec<Corner<T>>,
        curves: Vec<Curve<T>>,
        patches: Vec<Patch<T>>,
        fe: BinaryMatrix,
        ev: BinaryMatrix,
        fv: BinaryMatrix,
    ) -> Result<Self> {
        let c = ChainComplex { corners, curves, patches, fe, ev, fv };
        c.validate()?;
        Ok(c)
    }

    /// Checks matrix dimensions and finiteness of corner coordinates.
    pub fn validate(&self) -> Result<()> {
        let (nf, ne, nv) = (self.patches.len(), self.curves.len(), self.corners.len());
        let check = |name: &str, m: &BinaryMatrix, r: usize, c: usize| {
            if m.rows() != r || m.cols() != c {
                Err(Error::Structural(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.rows(),
                    m.cols()
                )))
            } else {
                Ok(())
            }
        };
        check("FE", &self.fe, nf, ne)?;
        check("EV", &self.ev, ne, nv)?;
        check("FV", &self.fv, nf, nv)?;
        if let Some(i) = self.corners.iter().position(|c| !is_finite_point(&c.point)) {
            return Err(Error::Argument(format!("corner {i} has non-finite coordinates")));
        }
        Ok(())
    }

    pub fn num_corners(&self) -> usize {
        self.corners.len()
    }

    pub fn num_curves(&self) -> usize {
        self.curves.len()
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    /// Indices of the curves bounding patch `face`.
    pub fn face_curves(&self, face: usize) -> Vec<usize> {
        (0..self.curves.len()).filter(|&j| self.fe.get(face, j)).collect()
    }

    /// Indices of the corners bounding curve `edge`.
    pub fn curve_corners(&self, edge: usize) -> Vec<usize> {
        (0..self.corners.len()).filter(|&k| self.ev.get(edge, k)).collect()
    }

    pub fn face_corners(&self, face: usize) -> Vec<usize> {
        (0..self.corners.len()).filter(|&k| self.fv.get(face, k)).collect()
    }

    pub fn curve_faces(&self, edge: usize) -> Vec<usize> {
        (0..self.patches.len()).filter(|&i| self.fe.get(i, edge)).collect()
    }

    pub fn corner_curves(&self, corner: usize) -> Vec<usize> {
        (0..self.curves.len()).filter(|&j| self.ev.get(j, corner)).collect()
    }

    pub fn corner_faces(&self, corner: usize) -> Vec<usize> {
        (0..self.patches.len()).filter(|&i| self.fv.get(i, corner)).collect()
    }

    /// Relabels elements: new element `i` of each group is old element `perm[i]`.
    pub fn permuted(&self, faces: &[usize], edges: &[usize], verts: &[usize]) -> Self {
        ChainComplex {
            corners: verts.iter().map(|&k| self.corners[k].clone()).collect(),
            curves: edges.iter().map(|&j| self.curves[j].clone()).collect(),
            patches: faces.iter().map(|&i| self.patches[i].clone()).collect(),
            fe: self.fe.permuted(faces, edges),
            ev: self.ev.permuted(edges, verts),
            fv: self.fv.permuted(faces, verts),
        }
    }

    /// Converts geometry to another scalar type. Primitives are dropped unless
    /// the scalar type is unchanged, since their parameters are not re-fitted.
    pub fn cast<U: Scalar>(&self) -> ChainComplex<U> {
        let cp = |p: &Vec3<T>| cast_point::<T, U>(p);
        ChainComplex {
            corners: self.corners.iter().map(|c| Corner { point: cp(&c.point), exists: c.exists }).collect(),
            curves: self
                .curves
                .iter()
                .map(|c| Curve {
                    kind: c.kind,
                    samples: CurveSamples::new(c.samples.points().iter().map(cp).collect(), c.samples.is_closed())
                        .expect("same sample count"),
                    primitive: None,
                    exists: c.exists,
                })
                .collect(),
            patches: self
                .patches
                .iter()
                .map(|p| Patch {
                    kind: p.kind,
                    samples: PatchSamples::new(p.samples.points().iter().map(cp).collect(), p.samples.is_u_closed())
                        .expect("same sample count"),
                    primitive: None,
                    exists: p.exists,
                })
                .collect(),
            fe: self.fe.clone(),
            ev: self.ev.clone(),
            fv: self.fv.clone(),
        }
    }
}
