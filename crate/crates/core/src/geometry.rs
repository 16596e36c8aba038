//! Distances between sampled element geometries.
//!
//! Curves carry [`CURVE_SAMPLES`] ordered points and patches a
//! [`PATCH_GRID`]×[`PATCH_GRID`] grid. Closed curves are sampled over `[0, 1)`
//! without repeating the first point, so cyclic rolls are exact symmetries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{is_finite_point, Scalar, Vec3};

/// Samples per curve.
pub const CURVE_SAMPLES: usize = 30;
/// Samples per patch side.
pub const PATCH_GRID: usize = 10;
/// Fall-off of the proximity fitness score.
pub const FITNESS_EPSILON: f64 = 0.1;

/// Ordered curve samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CurveSamples<T: Scalar> {
    points: Vec<Vec3<T>>,
    closed: bool,
}

impl<T: Scalar> CurveSamples<T> {
    pub fn new(points: Vec<Vec3<T>>, closed: bool) -> Result<Self> {
        if points.len() != CURVE_SAMPLES {
            return Err(Error::Structural(format!(
                "curve needs {CURVE_SAMPLES} samples, got {}",
                points.len()
            )));
        }
        if !points.iter().all(is_finite_point) {
            return Err(Error::Argument("curve samples must be finite".into()));
        }
        Ok(CurveSamples { points, closed })
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [Vec3<T>] {
        &mut self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn set_closed(&mut self, closed: bool) {
        self.closed = closed;
    }

    pub fn translated(&self, t: &Vec3<T>) -> Self {
        CurveSamples { points: self.points.iter().map(|p| p + t).collect(), closed: self.closed }
    }

    /// Applies `rev` then a cyclic roll by `roll` positions.
    pub fn permuted(&self, reverse: bool, roll: usize) -> Self {
        let k = self.points.len();
        let points = (0..k).map(|i| self.points[curve_index(k, i, reverse, roll)]).collect();
        CurveSamples { points, closed: self.closed }
    }
}

/// Patch sample grid, stored row-major with the first (`u`) index slow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PatchSamples<T: Scalar> {
    grid: Vec<Vec3<T>>,
    u_closed: bool,
}

impl<T: Scalar> PatchSamples<T> {
    pub fn new(grid: Vec<Vec3<T>>, u_closed: bool) -> Result<Self> {
        if grid.len() != PATCH_GRID * PATCH_GRID {
            return Err(Error::Structural(format!(
                "patch needs {}x{} samples, got {}",
                PATCH_GRID,
                PATCH_GRID,
                grid.len()
            )));
        }
        if !grid.iter().all(is_finite_point) {
            return Err(Error::Argument("patch samples must be finite".into()));
        }
        Ok(PatchSamples { grid, u_closed })
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.grid
    }

    pub fn points_mut(&mut self) -> &mut [Vec3<T>] {
        &mut self.grid
    }

    pub fn at(&self, u: usize, v: usize) -> Vec3<T> {
        self.grid[u * PATCH_GRID + v]
    }

    pub fn is_u_closed(&self) -> bool {
        self.u_closed
    }

    pub fn set_u_closed(&mut self, closed: bool) {
        self.u_closed = closed;
    }

    pub fn translated(&self, t: &Vec3<T>) -> Self {
        PatchSamples { grid: self.grid.iter().map(|p| p + t).collect(), u_closed: self.u_closed }
    }

    /// Applies axis reversals followed by rolls along both axes.
    pub fn permuted(&self, rev_x: bool, rev_y: bool, roll_x: usize, roll_y: usize) -> Self {
        let k = PATCH_GRID;
        let mut grid = Vec::with_capacity(k * k);
        for x in 0..k {
            let sx = curve_index(k, x, rev_x, roll_x);
            for y in 0..k {
                let sy = curve_index(k, y, rev_y, roll_y);
                grid.push(self.grid[sx * k + sy]);
            }
        }
        PatchSamples { grid, u_closed: self.u_closed }
    }
}

#[inline]
fn curve_index(k: usize, i: usize, reverse: bool, roll: usize) -> usize {
    let j = if reverse { k - 1 - i } else { i };
    (j + roll) % k
}

/// Squared distance between two corners.
pub fn vertex_distance<T: Scalar>(p: &Vec3<T>, q: &Vec3<T>) -> T {
    (p - q).norm_squared()
}

/// Order-preserving curve distance: mean squared point distance minimized over
/// reversal of `b` and, when `b` is closed, all cyclic rolls.
pub fn curve_distance<T: Scalar>(a: &CurveSamples<T>, b: &CurveSamples<T>) -> T {
    let pa = a.points();
    let pb = b.points();
    assert_eq!(pa.len(), pb.len(), "curve sample counts differ");
    let k = pa.len();
    let rolls = if b.is_closed() { k } else { 1 };
    let mut best = T::max_value().unwrap();
    for reverse in [false, true] {
        for roll in 0..rolls {
            let mut s = T::zero();
            for (i, p) in pa.iter().enumerate() {
                s += (p - pb[curve_index(k, i, reverse, roll)]).norm_squared();
            }
            if s < best {
                best = s;
            }
        }
    }
    best / T::from_usize(k).unwrap()
}

/// Order-preserving patch distance: mean squared point distance minimized
/// over the 4 grid reversals of `b` and, when `b` is u-closed, all rolls along
/// both grid axes (400 alignments).
pub fn patch_distance<T: Scalar>(a: &PatchSamples<T>, b: &PatchSamples<T>) -> T {
    let k = PATCH_GRID;
    let rolls = if b.is_u_closed() { k } else { 1 };
    let pa = a.points();
    let pb = b.points();
    let mut best = T::max_value().unwrap();
    for rev_x in [false, true] {
        for rev_y in [false, true] {
            for roll_x in 0..rolls {
                for roll_y in 0..rolls {
                    let mut s = T::zero();
                    for x in 0..k {
                        let sx = curve_index(k, x, rev_x, roll_x);
                        for y in 0..k {
                            let sy = curve_index(k, y, rev_y, roll_y);
                            s += (pa[x * k + y] - pb[sx * k + sy]).norm_squared();
                        }
                    }
                    if s < best {
                        best = s;
                    }
                }
            }
        }
    }
    best / T::from_usize(k * k).unwrap()
}

/// Mean over `a` of the Euclidean distance to the nearest point of `b`.
///
/// `a` should be the lower-order element (corner→curve, corner→patch,
/// curve→patch).
pub fn proximity<T: Scalar>(a: &[Vec3<T>], b: &[Vec3<T>]) -> T {
    if a.is_empty() || b.is_empty() {
        return T::max_value().unwrap();
    }
    let sum = a.iter().fold(T::zero(), |acc, p| acc + nearest_distance(p, b));
    sum / T::from_usize(a.len()).unwrap()
}

pub(crate) fn nearest_distance<T: Scalar>(p: &Vec3<T>, set: &[Vec3<T>]) -> T {
    set.iter()
        .map(|q| (p - q).norm_squared())
        .fold(T::max_value().unwrap(), |m, d| if d < m { d } else { m })
        .sqrt()
}

/// `exp(-d² / ε²)`.
pub fn fitness_score_with<T: Scalar>(d: T, epsilon: T) -> T {
    (-(d * d) / (epsilon * epsilon)).exp()
}

/// Fitness score with the default fall-off `ε = 0.1`.
pub fn fitness_score<T: Scalar>(d: T) -> T {
    fitness_score_with(d, T::lit(FITNESS_EPSILON))
}

/// Symmetric chamfer distance: average of the two directed mean nearest distances.
pub fn chamfer_distance<T: Scalar>(a: &[Vec3<T>], b: &[Vec3<T>]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("chamfer distance of an empty point set".into()));
    }
    Ok((proximity(a, b) + proximity(b, a)) * T::lit(0.5))
}

/// Subdivisions per grid cell when triangulating a sample grid.
pub const DENSIFY: usize = 4;

/// Triangles of a patch's bilinearly refined sample grid, wrapping in `u`
/// for u-closed patches.
pub fn patch_triangles<T: Scalar>(samples: &PatchSamples<T>, sub: usize) -> Vec<[Vec3<T>; 3]> {
    let k = PATCH_GRID;
    let cells_u = if samples.is_u_closed() { k } else { k - 1 };
    let at = |u: usize, v: usize| samples.at(u % k, v);
    let mut tris = Vec::with_capacity(cells_u * (k - 1) * sub * sub * 2);
    let s = T::lit(sub as f64);
    for cu in 0..cells_u {
        for cv in 0..k - 1 {
            let (a, b, c, d) = (at(cu, cv), at(cu + 1, cv), at(cu, cv + 1), at(cu + 1, cv + 1));
            let bl = |x: T, y: T| {
                let one = T::one();
                a * ((one - x) * (one - y)) + b * (x * (one - y)) + c * ((one - x) * y) + d * (x * y)
            };
            for i in 0..sub {
                for j in 0..sub {
                    let (x0, x1) = (T::lit(i as f64) / s, T::lit((i + 1) as f64) / s);
                    let (y0, y1) = (T::lit(j as f64) / s, T::lit((j + 1) as f64) / s);
                    let (q00, q10, q01, q11) = (bl(x0, y0), bl(x1, y0), bl(x0, y1), bl(x1, y1));
                    tris.push([q00, q10, q11]);
                    tris.push([q00, q11, q01]);
                }
            }
        }
    }
    tris
}

/// Vertices of the bilinearly refined sample grid, `sub` steps per cell
/// (`u` rows wrap for u-closed patches, so the seam is not repeated).
pub fn dense_grid<T: Scalar>(samples: &PatchSamples<T>, sub: usize) -> Vec<Vec3<T>> {
    let k = PATCH_GRID;
    let sub = sub.max(1);
    let rows_u = if samples.is_u_closed() { k * sub } else { (k - 1) * sub + 1 };
    let rows_v = (k - 1) * sub + 1;
    let s = T::lit(sub as f64);
    let mut out = Vec::with_capacity(rows_u * rows_v);
    let last_u = if samples.is_u_closed() { k - 1 } else { k - 2 };
    for iu in 0..rows_u {
        let cu = (iu / sub).min(last_u);
        let x = T::lit((iu - cu * sub) as f64) / s;
        for iv in 0..rows_v {
            let cv = (iv / sub).min(k - 2);
            let y = T::lit((iv - cv * sub) as f64) / s;
            let (a, b) = (samples.at(cu, cv), samples.at((cu + 1) % k, cv));
            let (c, d) = (samples.at(cu, cv + 1), samples.at((cu + 1) % k, cv + 1));
            let one = T::one();
            out.push(a * ((one - x) * (one - y)) + b * (x * (one - y)) + c * ((one - x) * y) + d * (x * y));
        }
    }
    out
}

/// Closest point to `p` on triangle `t`.
pub fn closest_point_on_triangle<T: Scalar>(p: &Vec3<T>, t: &[Vec3<T>; 3]) -> Vec3<T> {
    let (a, b, c) = (t[0], t[1], t[2]);
    let zero = T::zero();
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= zero && d2 <= zero {
        return a;
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= zero && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= zero && d1 >= zero && d3 <= zero {
        let den = d1 - d3;
        return if den > zero { a + ab * (d1 / den) } else { a };
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= zero && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= zero && d2 >= zero && d6 <= zero {
        let den = d2 - d6;
        return if den > zero { a + ac * (d2 / den) } else { a };
    }
    let va = d3 * d6 - d5 * d4;
    if va <= zero && (d4 - d3) >= zero && (d5 - d6) >= zero {
        let den = (d4 - d3) + (d5 - d6);
        return if den > zero { b + (c - b) * ((d4 - d3) / den) } else { b };
    }
    let den = va + vb + vc;
    if den <= zero {
        // Degenerate triangle: fall back to the nearest vertex.
        return [a, b, c]
            .into_iter()
            .min_by(|x, y| (p - x).norm_squared().partial_cmp(&(p - y).norm_squared()).unwrap())
            .unwrap();
    }
    let (v, w) = (vb / den, vc / den);
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(offset: f64) -> CurveSamples<f64> {
        CurveSamples::new(
            (0..CURVE_SAMPLES).map(|i| Vec3::new(i as f64 / 29.0, offset, 0.0)).collect(),
            false,
        )
        .unwrap()
    }

    fn circle() -> CurveSamples<f64> {
        CurveSamples::new(
            (0..CURVE_SAMPLES)
                .map(|i| {
                    let t = i as f64 / CURVE_SAMPLES as f64 * std::f64::consts::TAU;
                    Vec3::new(0.5 + 0.3 * t.cos(), 0.5 + 0.3 * t.sin(), 0.5)
                })
                .collect(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn vertex_distance_examples() {
        let o = Vec3::zeros();
        assert_eq!(vertex_distance(&o, &o), 0.0);
        assert_eq!(vertex_distance(&Vec3::new(1.0, 0.0, 0.0), &o), 1.0);
        assert!((vertex_distance(&Vec3::new(0.3f64, 0.4, 0.0), &o) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn curve_distance_examples() {
        let a = line(0.0);
        assert_eq!(curve_distance(&a, &a), 0.0);
        assert_eq!(curve_distance(&a, &a.permuted(true, 0)), 0.0);
        let c = circle();
        assert!(curve_distance(&c, &c.permuted(false, 7)) < 1e-30);
        let t = 0.05;
        let shifted = c.translated(&Vec3::new(t, 0.0, 0.0));
        assert!((curve_distance(&c, &shifted) - t * t).abs() < 1e-15);
    }

    #[test]
    fn curve_distance_wrong_size_rejected() {
        assert!(CurveSamples::<f64>::new(vec![Vec3::zeros(); 29], false).is_err());
    }

    #[test]
    fn patch_distance_x_reversal() {
        let grid: Vec<_> = (0..100).map(|i| Vec3::new((i / 10) as f64, (i % 10) as f64 * 0.3, 0.0)).collect();
        let a = PatchSamples::new(grid, false).unwrap();
        assert_eq!(patch_distance(&a, &a), 0.0);
        assert_eq!(patch_distance(&a, &a.permuted(true, false, 0, 0)), 0.0);
    }

    #[test]
    fn proximity_examples() {
        let c = line(0.0);
        let on = [c.points()[4]];
        assert_eq!(proximity(&on, c.points()), 0.0);
        let single = [Vec3::new(0.0, 0.0, 0.0)];
        assert!((proximity(&[Vec3::new(0.0f64, 0.0, 0.2)], &single) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn fitness_examples() {
        assert_eq!(fitness_score(0.0f64), 1.0);
        assert!((fitness_score(0.1f64) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((fitness_score(0.2f64) - (-4.0f64).exp()).abs() < 1e-15);
        assert!((fitness_score(0.1f64) - 0.36788).abs() < 1e-5);
        assert!((fitness_score(0.2f64) - 0.01832).abs() < 1e-5);
    }

    #[test]
    fn chamfer_examples() {
        let o = Vec3::new(0.0, 0.0, 0.0);
        let x = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(chamfer_distance(&[o, x], &[o, x]).unwrap(), 0.0);
        assert_eq!(chamfer_distance(&[o], &[x]).unwrap(), 1.0);
        // directed means: a→b = (0 + 1)/2, b→a = 0
        assert_eq!(chamfer_distance(&[o, x], &[o]).unwrap(), 0.25);
        assert!(chamfer_distance::<f64>(&[], &[o]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let a: Vec3<f32> = Vec3::new(0.3, 0.4, 0.0);
        assert!((vertex_distance(&a, &Vec3::zeros()) - 0.25).abs() < 1e-6);
        assert!((fitness_score(0.1f32) - 0.36788).abs() < 1e-5);
    }
}
