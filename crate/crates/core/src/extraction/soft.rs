use serde::{Deserialize, Serialize};

use crate::complex::{CurveKind, PatchKind};
use crate::error::{Error, Result};
use crate::geometry::{CurveSamples, PatchSamples};
use crate::scalar::{is_finite_point, Scalar, Vec3};

/// Dense row-major matrix of probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SoftMatrix<T: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> SoftMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SoftMatrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Structural(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(SoftMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn zero_row(&mut self, i: usize) {
        for j in 0..self.cols {
            self.set(i, j, T::zero());
        }
    }

    pub fn zero_col(&mut self, j: usize) {
        for i in 0..self.rows {
            self.set(i, j, T::zero());
        }
    }

    /// Row `i` rounded at 0.5.
    pub fn rounded_row(&self, i: usize) -> Vec<bool> {
        (0..self.cols).map(|j| self.get(i, j) >= T::lit(0.5)).collect()
    }

    pub fn rounded_col(&self, j: usize) -> Vec<bool> {
        (0..self.rows).map(|i| self.get(i, j) >= T::lit(0.5)).collect()
    }

    /// Appends a row copied from `src` (or zeros when `None`).
    pub(crate) fn push_row(&mut self, src: Option<usize>) {
        let row: Vec<T> = match src {
            Some(i) => self.data[i * self.cols..(i + 1) * self.cols].to_vec(),
            None => vec![T::zero(); self.cols],
        };
        self.data.extend(row);
        self.rows += 1;
    }

    /// Appends a column copied from `src` (or zeros when `None`).
    pub(crate) fn push_col(&mut self, src: Option<usize>) {
        let cols = self.cols + 1;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(&self.data[i * self.cols..(i + 1) * self.cols]);
            data.push(src.map_or(T::zero(), |j| self.get(i, j)));
        }
        self.data = data;
        self.cols = cols;
    }

    /// Keeps only the listed rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                data.push(self.get(i, j));
            }
        }
        SoftMatrix { rows: rows.len(), cols: cols.len(), data }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SoftCorner<T: Scalar> {
    pub validness: T,
    pub point: Vec3<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SoftCurve<T: Scalar> {
    pub validness: T,
    /// Probability of the curve having two endpoints.
    pub openness: T,
    /// Distribution over [`CurveKind::ALL`].
    pub type_probs: [T; 4],
    pub samples: CurveSamples<T>,
}

impl<T: Scalar> SoftCurve<T> {
    pub fn kind(&self) -> CurveKind {
        CurveKind::from_index(argmax(&self.type_probs)).unwrap()
    }

    pub fn is_open(&self) -> bool {
        self.openness >= T::lit(0.5)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SoftPatch<T: Scalar> {
    pub validness: T,
    /// Probability of the patch being closed in `u`.
    pub u_closed: T,
    /// Distribution over [`PatchKind::ALL`].
    pub type_probs: [T; 6],
    pub samples: PatchSamples<T>,
}

impl<T: Scalar> SoftPatch<T> {
    pub fn kind(&self) -> PatchKind {
        PatchKind::from_index(argmax(&self.type_probs)).unwrap()
    }

    pub fn is_u_closed(&self) -> bool {
        self.u_closed >= T::lit(0.5)
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Scalar>(p: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// Soft predictions for every candidate element and their adjacency.
///
/// The matrices hold conditional adjacency probabilities as produced by a
/// predictor; [`combine_probabilities`](super::combine_probabilities) turns
/// them into joint probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ProbabilisticComplex<T: Scalar> {
    pub corners: Vec<SoftCorner<T>>,
    pub curves: Vec<SoftCurve<T>>,
    pub patches: Vec<SoftPatch<T>>,
    pub fe: SoftMatrix<T>,
    pub ev: SoftMatrix<T>,
    pub fv: SoftMatrix<T>,
}

fn check_prob<T: Scalar>(what: &str, x: T) -> Result<()> {
    if !(x.is_finite_val() && x >= T::zero() && x <= T::one()) {
        return Err(Error::Argument(format!("{what} = {x} is not a probability")));
    }
    Ok(())
}

impl<T: Scalar> ProbabilisticComplex<T> {
    pub fn empty() -> Self {
        ProbabilisticComplex {
            corners: vec![],
            curves: vec![],
            patches: vec![],
            fe: SoftMatrix::zeros(0, 0),
            ev: SoftMatrix::zeros(0, 0),
            fv: SoftMatrix::zeros(0, 0),
        }
    }

    /// Checks dimensions, probability ranges and finiteness.
    pub fn validate(&self) -> Result<()> {
        let (nf, ne, nv) = (self.patches.len(), self.curves.len(), self.corners.len());
        for (name, m, r, c) in [("FE", &self.fe, nf, ne), ("EV", &self.ev, ne, nv), ("FV", &self.fv, nf, nv)] {
            if m.rows() != r || m.cols() != c {
                return Err(Error::Structural(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.rows(),
                    m.cols()
                )));
            }
            for i in 0..r {
                for j in 0..c {
                    check_prob(&format!("{name}[{i},{j}]"), m.get(i, j))?;
                }
            }
        }
        for (i, v) in self.corners.iter().enumerate() {
            check_prob(&format!("corner {i} validness"), v.validness)?;
            if !is_finite_point(&v.point) {
                return Err(Error::Argument(format!("corner {i} has non-finite coordinates")));
            }
        }
        for (i, e) in self.curves.iter().enumerate() {
            check_prob(&format!("curve {i} validness"), e.validness)?;
            check_prob(&format!("curve {i} openness"), e.openness)?;
            for (k, &p) in e.type_probs.iter().enumerate() {
                check_prob(&format!("curve {i} type_probs[{k}]"), p)?;
            }
        }
        for (i, f) in self.patches.iter().enumerate() {
            check_prob(&format!("patch {i} validness"), f.validness)?;
            check_prob(&format!("patch {i} u_closed"), f.u_closed)?;
            for (k, &p) in f.type_probs.iter().enumerate() {
                check_prob(&format!("patch {i} type_probs[{k}]"), p)?;
            }
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

    /// Sub-complex on the listed elements, in the given order.
    pub fn select(&self, faces: &[usize], edges: &[usize], verts: &[usize]) -> Self {
        ProbabilisticComplex {
            corners: verts.iter().map(|&k| self.corners[k].clone()).collect(),
            curves: edges.iter().map(|&j| self.curves[j].clone()).collect(),
            patches: faces.iter().map(|&i| self.patches[i].clone()).collect(),
            fe: self.fe.select(faces, edges),
            ev: self.ev.select(edges, verts),
            fv: self.fv.select(faces, verts),
        }
    }
}
