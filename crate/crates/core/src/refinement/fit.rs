//! Weighted least-squares fitting of typed primitives.
//!
//! Planes and lines use the weighted covariance eigenvectors. Every other
//! analytic kind starts from an algebraic estimate and is polished with
//! Levenberg-Marquardt on geometric distances. Splines are linear fits at
//! parameters obtained by projecting onto an initial surface or curve.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::lm;
use crate::complex::{CurveKind, PatchKind};
use crate::error::{Error, Result};
use crate::primitive::{
    point_ellipse_distance_2d, BSplineCurve, BSplineSurface, Basis, CurvePrimitive, Frame, Surface,
};
use crate::scalar::{orthonormal_complement, Scalar, Vec3};

/// Control points along a closed spline direction.
pub const PERIODIC_CONTROLS: usize = 8;

const LM_ITERATIONS: usize = 200;
const LM_PROBE_ITERATIONS: usize = 25;

/// Weights of the three target sets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitWeights {
    pub input: f64,
    pub adjacent: f64,
    pub stabilization: f64,
}

impl Default for FitWeights {
    fn default() -> Self {
        FitWeights { input: 1.0, adjacent: 5.0, stabilization: 0.1 }
    }
}

/// Hard constraint on the symmetry axis (or normal) of a fitted primitive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AxisConstraint<T: Scalar> {
    pub direction: Vec3<T>,
    /// A point the axis must pass through, if known.
    pub point: Option<Vec3<T>>,
}

/// Weighted target sets for one fit.
#[derive(Clone, Debug)]
pub struct FittingProblem<T: Scalar> {
    pub input: Vec<Vec3<T>>,
    pub adjacent: Vec<Vec3<T>>,
    pub previous: Vec<Vec3<T>>,
    pub weights: FitWeights,
    pub axis: Option<AxisConstraint<T>>,
    /// Build a closed curve or a u-closed spline patch.
    pub closed: bool,
}

impl<T: Scalar> Default for FittingProblem<T> {
    fn default() -> Self {
        FittingProblem {
            input: Vec::new(),
            adjacent: Vec::new(),
            previous: Vec::new(),
            weights: FitWeights::default(),
            axis: None,
            closed: false,
        }
    }
}

impl<T: Scalar> FittingProblem<T> {
    /// Unit-weight fit to a single point set.
    pub fn from_points(points: Vec<Vec3<T>>) -> Self {
        FittingProblem { input: points, ..Default::default() }
    }

    pub fn with_axis(mut self, axis: AxisConstraint<T>) -> Self {
        self.axis = Some(axis);
        self
    }

    /// All targets with their weights, input first.
    pub fn targets(&self) -> (Vec<Vec3<T>>, Vec<T>) {
        let mut pts = Vec::with_capacity(self.input.len() + self.adjacent.len() + self.previous.len());
        let mut w = Vec::with_capacity(pts.capacity());
        for (set, wt) in [
            (&self.input, self.weights.input),
            (&self.adjacent, self.weights.adjacent),
            (&self.previous, self.weights.stabilization),
        ] {
            if wt > 0.0 {
                pts.extend_from_slice(set);
                w.extend(std::iter::repeat_n(T::lit(wt), set.len()));
            }
        }
        (pts, w)
    }
}

/// A fitted primitive with its weighted RMS distance to the targets.
#[derive(Clone, Debug)]
pub struct Fit<T: Scalar, P> {
    pub primitive: P,
    pub residual: T,
    /// False when the iteration limit was hit; the best iterate is returned.
    pub converged: bool,
}

/// Kind selector for [`fit_primitive`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimitiveKind {
    Curve(CurveKind),
    Patch(PatchKind),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TypedPrimitive<T: Scalar> {
    Curve(CurvePrimitive<T>),
    Surface(Surface<T>),
}

pub fn fit_primitive<T: Scalar>(kind: PrimitiveKind, problem: &FittingProblem<T>) -> Result<Fit<T, TypedPrimitive<T>>> {
    match kind {
        PrimitiveKind::Curve(k) => fit_curve(k, problem, None).map(|f| Fit {
            primitive: TypedPrimitive::Curve(f.primitive),
            residual: f.residual,
            converged: f.converged,
        }),
        PrimitiveKind::Patch(k) => fit_surface(k, problem, None).map(|f| Fit {
            primitive: TypedPrimitive::Surface(f.primitive),
            residual: f.residual,
            converged: f.converged,
        }),
    }
}

fn degenerate<E>(kind: &'static str, reason: impl Into<String>) -> Result<E> {
    Err(Error::Degenerate { kind, reason: reason.into() })
}

fn require(kind: &'static str, n: usize, min: usize) -> Result<()> {
    if n < min {
        degenerate(kind, format!("needs at least {min} points, got {n}"))
    } else {
        Ok(())
    }
}

/// Weighted RMS of `dist` over the targets.
fn weighted_rms<T: Scalar>(pts: &[Vec3<T>], w: &[T], dist: impl Fn(&Vec3<T>) -> T) -> T {
    let (mut num, mut den) = (T::zero(), T::zero());
    for (p, &wi) in pts.iter().zip(w) {
        let d = dist(p);
        num += wi * d * d;
        den += wi;
    }
    if den > T::zero() {
        (num / den).sqrt()
    } else {
        T::zero()
    }
}

fn weighted_mean<T: Scalar>(pts: &[Vec3<T>], w: &[T]) -> Vec3<T> {
    let mut s = Vec3::zeros();
    let mut sw = T::zero();
    for (p, &wi) in pts.iter().zip(w) {
        s += p * wi;
        sw += wi;
    }
    s / sw
}

/// Eigen-decomposition of the weighted covariance, ascending eigenvalues.
fn covariance_eigen<T: Scalar>(pts: &[Vec3<T>], w: &[T], c: &Vec3<T>) -> ([T; 3], [Vec3<T>; 3]) {
    let mut m = Matrix3::zeros();
    for (p, &wi) in pts.iter().zip(w) {
        let d = p - c;
        m += d * d.transpose() * wi;
    }
    sorted_eigen(m)
}

fn sorted_eigen<T: Scalar>(m: Matrix3<T>) -> ([T; 3], [Vec3<T>; 3]) {
    let e = SymmetricEigen::new(m);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| e.eigenvalues[a].partial_cmp(&e.eigenvalues[b]).unwrap_or(std::cmp::Ordering::Equal));
    let vals = idx.map(|i| e.eigenvalues[i]);
    let vecs = idx.map(|i| e.eigenvectors.column(i).into_owned().normalize());
    (vals, vecs)
}

/// Weighted linear least squares `min Σ w (aᵀx − b)²` via SVD.
fn solve_wls<T: Scalar>(rows: &[(Vec<T>, T, T)]) -> Option<DVector<T>> {
    let n = rows.first()?.0.len();
    let mut a = DMatrix::zeros(rows.len(), n);
    let mut b = DVector::zeros(rows.len());
    for (r, (coef, rhs, w)) in rows.iter().enumerate() {
        let s = w.sqrt();
        for c in 0..n {
            a[(r, c)] = coef[c] * s;
        }
        b[r] = *rhs * s;
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= T::zero() {
        return None;
    }
    if svd.singular_values.min() <= smax * T::lit(1e-10) {
        return None;
    }
    svd.solve(&b, T::zero()).ok()
}

fn unit<T: Scalar>(v: Vec3<T>) -> Vec3<T> {
    let n = v.norm();
    if n > T::zero() {
        v / n
    } else {
        Vec3::z()
    }
}

fn vec_at<T: Scalar>(x: &DVector<T>, i: usize) -> Vec3<T> {
    Vec3::new(x[i], x[i + 1], x[i + 2])
}

fn align<T: Scalar>(v: Vec3<T>, reference: Option<Vec3<T>>) -> Vec3<T> {
    match reference {
        Some(r) if v.dot(&r) < T::zero() => -v,
        _ => v,
    }
}

fn finite_or<T: Scalar>(kind: &'static str, vals: &[T]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite_val()) {
        Ok(())
    } else {
        degenerate(kind, "fit diverged")
    }
}

// ---------------------------------------------------------------------------
// Surfaces

/// Fits a surface of the given kind. `init` seeds the nonlinear kinds and
/// provides spline parameters.
pub fn fit_surface<T: Scalar>(
    kind: PatchKind,
    problem: &FittingProblem<T>,
    init: Option<&Surface<T>>,
) -> Result<Fit<T, Surface<T>>> {
    let (pts, w) = problem.targets();
    let (surface, converged) = match kind {
        PatchKind::Plane => (fit_plane(&pts, &w, init)?, true),
        PatchKind::Sphere => fit_sphere(&pts, &w)?,
        PatchKind::Cylinder => fit_cylinder(&pts, &w, problem.axis.as_ref(), init)?,
        PatchKind::Cone => fit_cone(&pts, &w, problem.axis.as_ref(), init)?,
        PatchKind::Torus => fit_torus(&pts, &w, problem.axis.as_ref(), init)?,
        PatchKind::BSpline => (fit_spline_surface(&pts, &w, problem.closed, init)?, true),
    };
    let residual = weighted_rms(&pts, &w, |p| surface.distance(p));
    Ok(Fit { primitive: surface, residual, converged })
}

fn fit_plane<T: Scalar>(pts: &[Vec3<T>], w: &[T], init: Option<&Surface<T>>) -> Result<Surface<T>> {
    require("plane", pts.len(), 3)?;
    let c = weighted_mean(pts, w);
    let (vals, vecs) = covariance_eigen(pts, w, &c);
    if vals[1] <= vals[2] * T::lit(1e-12) {
        return degenerate("plane", "points are collinear");
    }
    let prev = init.and_then(|s| s.frame().cloned());
    let n = align(vecs[0], prev.as_ref().map(|f| f.z));
    let hint = prev.map(|f| f.x).unwrap_or(vecs[2]);
    Ok(Surface::Plane { frame: Frame::from_axis_and_hint(c, n, hint) })
}

fn fit_sphere<T: Scalar>(pts: &[Vec3<T>], w: &[T]) -> Result<(Surface<T>, bool)> {
    require("sphere", pts.len(), 4)?;
    let two = T::lit(2.0);
    let rows: Vec<_> = pts
        .iter()
        .zip(w)
        .map(|(p, &wi)| (vec![two * p.x, two * p.y, two * p.z, T::one()], p.norm_squared(), wi))
        .collect();
    let sol = match solve_wls(&rows) {
        Some(s) => s,
        None => return degenerate("sphere", "points are coplanar"),
    };
    let c0 = Vec3::new(sol[0], sol[1], sol[2]);
    let r0 = (sol[3] + c0.norm_squared()).max(T::zero()).sqrt();
    let sw: Vec<T> = w.iter().map(|x| x.sqrt()).collect();
    let f = |x: &DVector<T>| {
        let c = vec_at(x, 0);
        DVector::from_iterator(pts.len(), pts.iter().zip(&sw).map(|(p, &s)| s * ((p - c).norm() - x[3])))
    };
    let r = lm::minimize(f, DVector::from_vec(vec![c0.x, c0.y, c0.z, r0]), LM_ITERATIONS);
    let (c, radius) = (vec_at(&r.x, 0), r.x[3].abs());
    finite_or("sphere", &[c.x, c.y, c.z, radius])?;
    if radius <= T::zero() {
        return degenerate("sphere", "zero radius");
    }
    Ok((Surface::Sphere { frame: Frame::from_axis(c, Vec3::z()), radius }, r.converged))
}

/// Estimates unit normals by local PCA over the `k` nearest neighbours of a
/// deterministic subsample.
fn estimate_normals<T: Scalar>(pts: &[Vec3<T>], k: usize) -> Vec<Vec3<T>> {
    let stride = (pts.len() / 300).max(1);
    let sub: Vec<Vec3<T>> = pts.iter().step_by(stride).copied().collect();
    if sub.len() <= k {
        return Vec::new();
    }
    let ones = vec![T::one(); k + 1];
    sub.iter()
        .map(|p| {
            let mut d: Vec<(T, usize)> = sub.iter().enumerate().map(|(i, q)| ((p - q).norm_squared(), i)).collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
            let nb: Vec<Vec3<T>> = d[..=k].iter().map(|&(_, i)| sub[i]).collect();
            let c = weighted_mean(&nb, &ones);
            covariance_eigen(&nb, &ones, &c).1[0]
        })
        .collect()
}

/// Direction orthogonal to the spread of a set of normals: the axis of a
/// cylinder or cone.
fn axis_from_normals<T: Scalar>(normals: &[Vec3<T>]) -> Option<Vec3<T>> {
    if normals.len() < 3 {
        return None;
    }
    let ones = vec![T::one(); normals.len()];
    let mean = weighted_mean(normals, &ones);
    let (vals, vecs) = covariance_eigen(normals, &ones, &mean);
    if vals[1] <= T::lit(1e-12) * vals[2].max(T::eps()) {
        return None;
    }
    Some(vecs[0])
}

fn spline_normals<T: Scalar>(s: &Surface<T>) -> Vec<Vec3<T>> {
    let n = 12;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let u = T::lit((i as f64 + 0.5) / n as f64);
            let v = T::lit((j as f64 + 0.5) / n as f64);
            out.push(s.normal(u, v));
        }
    }
    out
}

/// Candidate axis directions for surfaces of revolution.
fn axis_candidates<T: Scalar>(
    pts: &[Vec3<T>],
    w: &[T],
    init: Option<&Surface<T>>,
    use_normals: bool,
) -> Vec<Vec3<T>> {
    let c = weighted_mean(pts, w);
    let (_, vecs) = covariance_eigen(pts, w, &c);
    let mut cands = Vec::new();
    match init {
        Some(Surface::BSpline(_)) => {
            if let Some(a) = axis_from_normals(&spline_normals(init.unwrap())) {
                cands.push(a);
            }
        }
        Some(s) => {
            if let Some((_, a)) = s.axis() {
                cands.push(a);
            } else if let Some(f) = s.frame() {
                cands.push(f.z);
            }
        }
        None => {}
    }
    if use_normals {
        if let Some(a) = axis_from_normals(&estimate_normals(pts, 8)) {
            cands.push(a);
        }
    }
    cands.extend(vecs);
    cands
}

fn local_coords<T: Scalar>(p: &Vec3<T>, origin: &Vec3<T>, e1: &Vec3<T>, e2: &Vec3<T>, a: &Vec3<T>) -> Vec3<T> {
    let d = p - origin;
    Vec3::new(d.dot(e1), d.dot(e2), d.dot(a))
}

/// Keeps the LM result with the lowest cost.
fn best_of<T: Scalar>(runs: impl IntoIterator<Item = lm::LmResult<T>>) -> Option<lm::LmResult<T>> {
    runs.into_iter()
        .filter(|r| r.cost.is_finite_val())
        .fold(None, |best: Option<lm::LmResult<T>>, r| match best {
            Some(b) if b.cost <= r.cost => Some(b),
            _ => Some(r),
        })
}

fn cylinder_residuals<'a, T: Scalar>(
    pts: &'a [Vec3<T>],
    sw: &'a [T],
    fixed_axis: Option<Vec3<T>>,
) -> impl Fn(&DVector<T>) -> DVector<T> + 'a {
    move |x: &DVector<T>| {
        let (a, p0, r) = match fixed_axis {
            Some(a) => (a, vec_at(x, 0), x[3]),
            None => (unit(vec_at(x, 0)), vec_at(x, 3), x[6]),
        };
        DVector::from_iterator(
            pts.len(),
            pts.iter().zip(sw).map(|(p, &s)| s * ((p - p0).cross(&a).norm() - r)),
        )
    }
}

fn circle_2d_init<T: Scalar>(pts: &[Vec3<T>], w: &[T], origin: &Vec3<T>, e1: &Vec3<T>, e2: &Vec3<T>, a: &Vec3<T>) -> Option<(Vec3<T>, T)> {
    let rows: Vec<_> = pts
        .iter()
        .zip(w)
        .map(|(p, &wi)| {
            let l = local_coords(p, origin, e1, e2, a);
            (vec![l.x, l.y, T::one()], -(l.x * l.x + l.y * l.y), wi)
        })
        .collect();
    let s = solve_wls(&rows)?;
    let (cx, cy) = (-s[0] / T::lit(2.0), -s[1] / T::lit(2.0));
    let r2 = cx * cx + cy * cy - s[2];
    if r2 <= T::zero() {
        return None;
    }
    Some((origin + e1 * cx + e2 * cy, r2.sqrt()))
}

fn fit_cylinder<T: Scalar>(
    pts: &[Vec3<T>],
    w: &[T],
    constraint: Option<&AxisConstraint<T>>,
    init: Option<&Surface<T>>,
) -> Result<(Surface<T>, bool)> {
    require("cylinder", pts.len(), 6)?;
    let sw: Vec<T> = w.iter().map(|x| x.sqrt()).collect();
    let centroid = weighted_mean(pts, w);
    let fixed = constraint.map(|c| unit(c.direction));
    let axes = match fixed {
        Some(a) => vec![a],
        None => axis_candidates(pts, w, init, true),
    };
    let mut starts = Vec::new();
    for a in axes {
        let (e1, e2) = orthonormal_complement(&a);
        let start = match init {
            Some(Surface::Cylinder { frame, radius }) if fixed.is_none() && (frame.z - a).norm() < T::lit(1e-12) => {
                Some((frame.origin, *radius))
            }
            _ => circle_2d_init(pts, w, &centroid, &e1, &e2, &a),
        };
        if let Some((p0, r0)) = start {
            starts.push((a, p0, r0));
        }
    }
    if starts.is_empty() {
        return degenerate("cylinder", "no circular cross-section found");
    }
    let pack = |a: Vec3<T>, p0: Vec3<T>, r: T| match fixed {
        Some(_) => DVector::from_vec(vec![p0.x, p0.y, p0.z, r]),
        None => DVector::from_vec(vec![a.x, a.y, a.z, p0.x, p0.y, p0.z, r]),
    };
    let f = cylinder_residuals(pts, &sw, fixed);
    let probes: Vec<_> = starts.iter().map(|&(a, p0, r)| lm::minimize(&f, pack(a, p0, r), LM_PROBE_ITERATIONS)).collect();
    let probe = best_of(probes).unwrap();
    let r = lm::minimize(&f, probe.x, LM_ITERATIONS);
    let (a, p0, radius) = match fixed {
        Some(a) => (a, vec_at(&r.x, 0), r.x[3].abs()),
        None => (unit(vec_at(&r.x, 0)), vec_at(&r.x, 3), r.x[6].abs()),
    };
    finite_or("cylinder", &[a.x, a.y, a.z, p0.x, p0.y, p0.z, radius])?;
    if radius <= T::zero() {
        return degenerate("cylinder", "zero radius");
    }
    let a = align(a, fixed.or_else(|| init.and_then(|s| s.axis().map(|x| x.1))));
    let origin = p0 + a * (centroid - p0).dot(&a);
    let hint = init.and_then(|s| s.frame().map(|f| f.x)).unwrap_or_else(|| centroid - origin);
    Ok((Surface::Cylinder { frame: Frame::from_axis_and_hint(origin, a, hint), radius }, r.converged))
}

/// Cone distance residual for apex `q`, unit axis `a` and half-angle `t`.
fn cone_distance<T: Scalar>(p: &Vec3<T>, q: &Vec3<T>, a: &Vec3<T>, t: T) -> T {
    let v = p - q;
    let h = v.dot(a);
    let rho = (v - a * h).norm();
    rho * t.cos() - h * t.sin()
}

fn cone_init<T: Scalar>(pts: &[Vec3<T>], w: &[T], centroid: &Vec3<T>, a: &Vec3<T>) -> Option<(Vec3<T>, Vec3<T>, T)> {
    let (e1, e2) = orthonormal_complement(a);
    let rows: Vec<_> = pts
        .iter()
        .zip(w)
        .map(|(p, &wi)| {
            let l = local_coords(p, centroid, &e1, &e2, a);
            (vec![l.x, l.y, T::one(), l.z, l.z * l.z], -(l.x * l.x + l.y * l.y), wi)
        })
        .collect();
    let s = solve_wls(&rows)?;
    let two = T::lit(2.0);
    let (cx, cy) = (-s[0] / two, -s[1] / two);
    let m2 = -s[4];
    if m2 <= T::lit(1e-8) {
        return None;
    }
    let m = m2.sqrt();
    let b = -s[3] / (two * m);
    let h0 = -b / m;
    let mean_h = pts.iter().zip(w).fold(T::zero(), |acc, (p, &wi)| acc + wi * (p - centroid).dot(a))
        / w.iter().fold(T::zero(), |acc, &x| acc + x);
    let axis = if mean_h >= h0 { *a } else { -*a };
    let apex = centroid + e1 * cx + e2 * cy + a * h0;
    Some((apex, axis, m.atan()))
}

fn fit_cone<T: Scalar>(
    pts: &[Vec3<T>],
    w: &[T],
    constraint: Option<&AxisConstraint<T>>,
    init: Option<&Surface<T>>,
) -> Result<(Surface<T>, bool)> {
    require("cone", pts.len(), 6)?;
    let sw: Vec<T> = w.iter().map(|x| x.sqrt()).collect();
    let sw = &sw;
    let centroid = weighted_mean(pts, w);
    let best = match constraint {
        Some(c) => {
            let d = unit(c.direction);
            let mut runs = Vec::new();
            for a in [d, -d] {
                let start = cone_init(pts, w, &centroid, &a);
                match c.point {
                    Some(base) => {
                        let (t0, ang0) = match start {
                            Some((q, _, ang)) => ((q - base).dot(&a), ang),
                            None => ((centroid - base).dot(&a) - T::one(), T::lit(0.5)),
                        };
                        let f = move |x: &DVector<T>| {
                            let q = base + a * x[0];
                            DVector::from_iterator(pts.len(), pts.iter().zip(sw).map(|(p, &s)| s * cone_distance(p, &q, &a, x[1])))
                        };
                        let r = lm::minimize(f, DVector::from_vec(vec![t0, ang0]), LM_ITERATIONS);
                        let q = base + a * r.x[0];
                        runs.push((lm::LmResult { x: DVector::from_vec(vec![q.x, q.y, q.z, r.x[1]]), cost: r.cost, converged: r.converged }, a));
                    }
                    None => {
                        let (q0, ang0) = match start {
                            Some((q, _, ang)) => (q, ang),
                            None => (centroid - a, T::lit(0.5)),
                        };
                        let f = move |x: &DVector<T>| {
                            let q = vec_at(x, 0);
                            DVector::from_iterator(pts.len(), pts.iter().zip(sw).map(|(p, &s)| s * cone_distance(p, &q, &a, x[3])))
                        };
                        let r = lm::minimize(f, DVector::from_vec(vec![q0.x, q0.y, q0.z, ang0]), LM_ITERATIONS);
                        runs.push((r, a));
                    }
                }
            }
            runs.into_iter()
                .filter(|(r, _)| r.cost.is_finite_val() && r.x[3] > T::zero() && r.x[3] < T::frac_pi_2())
                .min_by(|x, y| x.0.cost.partial_cmp(&y.0.cost).unwrap())
                .map(|(r, a)| (vec_at(&r.x, 0), a, r.x[3], r.converged))
        }
        None => {
            let f = |x: &DVector<T>| {
                let q = vec_at(x, 0);
                let a = unit(vec_at(x, 3));
                DVector::from_iterator(pts.len(), pts.iter().zip(sw).map(|(p, &s)| s * cone_distance(p, &q, &a, x[6])))
            };
            let mut starts = Vec::new();
            if let Some(Surface::Cone { frame, half_angle }) = init {
                starts.push((frame.origin, frame.z, *half_angle));
            }
            for a in axis_candidates(pts, w, init, true) {
                for s in [a, -a] {
                    if let Some(st) = cone_init(pts, w, &centroid, &s) {
                        starts.push(st);
                    }
                    // Near-cylindrical start, used when the quadratic model is ill-posed.
                    let (e1, e2) = orthonormal_complement(&s);
                    if let Some((c, r)) = circle_2d_init(pts, w, &centroid, &e1, &e2, &s) {
                        let t = T::lit(0.1);
                        starts.push((c - s * (r / t.tan()), s, t));
                    }
                }
            }
            let pack = |(q, a, t): (Vec3<T>, Vec3<T>, T)| DVector::from_vec(vec![q.x, q.y, q.z, a.x, a.y, a.z, t]);
            let probes = starts.into_iter().map(|s| lm::minimize(&f, pack(s), LM_PROBE_ITERATIONS));
            best_of(probes).map(|p| {
                let r = lm::minimize(&f, p.x, LM_ITERATIONS);
                (vec_at(&r.x, 0), unit(vec_at(&r.x, 3)), r.x[6], r.converged)
            })
        }
    };
    let Some((apex, mut a, mut t, converged)) = best else {
        return degenerate("cone", "no conical fit found");
    };
    finite_or("cone", &[apex.x, apex.y, apex.z, a.x, a.y, a.z, t])?;
    // (q, a, t) and (q, -a, π - t) describe the same double cone.
    if t < T::zero() {
        t = -t;
    }
    if t > T::frac_pi_2() {
        a = -a;
        t = T::pi() - t;
    }
    if t <= T::zero() || t >= T::frac_pi_2() {
        return degenerate("cone", "half-angle outside (0, π/2)");
    }
    let hint = init.and_then(|s| s.frame().map(|f| f.x)).unwrap_or_else(|| centroid - apex);
    Ok((Surface::Cone { frame: Frame::from_axis_and_hint(apex, a, hint), half_angle: t }, converged))
}

fn torus_distance<T: Scalar>(p: &Vec3<T>, c: &Vec3<T>, a: &Vec3<T>, big: T, small: T) -> T {
    let v = p - c;
    let h = v.dot(a);
    let rho = (v - a * h).norm();
    ((rho - big) * (rho - big) + h * h).sqrt() - small
}

fn fit_torus<T: Scalar>(
    pts: &[Vec3<T>],
    w: &[T],
    constraint: Option<&AxisConstraint<T>>,
    init: Option<&Surface<T>>,
) -> Result<(Surface<T>, bool)> {
    require("torus", pts.len(), 7)?;
    let sw: Vec<T> = w.iter().map(|x| x.sqrt()).collect();
    let centroid = weighted_mean(pts, w);
    let sum_w = w.iter().fold(T::zero(), |acc, &x| acc + x);
    let fixed = constraint.map(|c| unit(c.direction));
    let mut starts = Vec::new();
    if let Some(Surface::Torus { frame, major_radius, minor_radius }) = init {
        starts.push((frame.origin, frame.z, *major_radius, *minor_radius));
    }
    let axes = match fixed {
        Some(a) => vec![a],
        None => axis_candidates(pts, w, init, false),
    };
    for a in axes {
        let c = constraint.and_then(|c| c.point).map(|q| q + a * (centroid - q).dot(&a)).unwrap_or(centroid);
        let big = pts.iter().zip(w).fold(T::zero(), |acc, (p, &wi)| {
            let v = p - c;
            acc + wi * (v - a * v.dot(&a)).norm()
        }) / sum_w;
        let small2 = pts.iter().zip(w).fold(T::zero(), |acc, (p, &wi)| {
            let v = p - c;
            let h = v.dot(&a);
            let dr = (v - a * h).norm() - big;
            acc + wi * (dr * dr + h * h)
        }) / sum_w;
        starts.push((c, a, big, small2.sqrt()));
    }
    let f = |x: &DVector<T>| {
        let (c, a, big, small) = match fixed {
            Some(a) => (vec_at(x, 0), a, x[3], x[4]),
            None => (vec_at(x, 0), unit(vec_at(x, 3)), x[6], x[7]),
        };
        DVector::from_iterator(pts.len(), pts.iter().zip(&sw).map(|(p, &s)| s * torus_distance(p, &c, &a, big, small)))
    };
    let pack = |(c, a, big, small): (Vec3<T>, Vec3<T>, T, T)| match fixed {
        Some(_) => DVector::from_vec(vec![c.x, c.y, c.z, big, small]),
        None => DVector::from_vec(vec![c.x, c.y, c.z, a.x, a.y, a.z, big, small]),
    };
    let probes = starts.into_iter().map(|s| lm::minimize(&f, pack(s), LM_PROBE_ITERATIONS));
    let Some(probe) = best_of(probes) else {
        return degenerate("torus", "no toroidal fit found");
    };
    let r = lm::minimize(&f, probe.x, LM_ITERATIONS);
    let (c, a, big, small) = match fixed {
        Some(a) => (vec_at(&r.x, 0), a, r.x[3], r.x[4].abs()),
        None => (vec_at(&r.x, 0), unit(vec_at(&r.x, 3)), r.x[6], r.x[7].abs()),
    };
    finite_or("torus", &[c.x, c.y, c.z, a.x, a.y, a.z, big, small])?;
    if !(big > small && small > T::zero()) {
        return degenerate("torus", "radii violate major > minor > 0");
    }
    let a = align(a, fixed.or_else(|| init.and_then(|s| s.axis().map(|x| x.1))));
    let hint = init.and_then(|s| s.frame().map(|f| f.x)).unwrap_or_else(|| orthonormal_complement(&a).0);
    Ok((Surface::Torus { frame: Frame::from_axis_and_hint(c, a, hint), major_radius: big, minor_radius: small }, r.converged))
}

fn spline_surface_params<T: Scalar>(pts: &[Vec3<T>], w: &[T], closed: bool, init: Option<&Surface<T>>) -> Vec<(T, T)> {
    if let Some(s @ Surface::BSpline(_)) = init {
        return pts.iter().map(|p| {
            let (u, v, _, _) = s.project(p);
            (u, v)
        }).collect();
    }
    let c = weighted_mean(pts, w);
    let (_, vecs) = covariance_eigen(pts, w, &c);
    let coords: Vec<(T, T)> = if closed {
        let a = axis_from_normals(&estimate_normals(pts, 8)).unwrap_or(vecs[2]);
        let (e1, e2) = orthonormal_complement(&a);
        pts.iter()
            .map(|p| {
                let l = local_coords(p, &c, &e1, &e2, &a);
                ((l.y.atan2(l.x) + T::pi()) / T::two_pi(), l.z)
            })
            .collect()
    } else {
        pts.iter().map(|p| ((p - c).dot(&vecs[2]), (p - c).dot(&vecs[1]))).collect()
    };
    let range = |f: &dyn Fn(&(T, T)) -> T| {
        coords.iter().map(f).fold((T::max_value().unwrap(), T::min_value().unwrap()), |(lo, hi), x| (lo.min(x), hi.max(x)))
    };
    let (vlo, vhi) = range(&|c| c.1);
    let (ulo, uhi) = range(&|c| c.0);
    let norm = |x: T, lo: T, hi: T| if hi > lo { (x - lo) / (hi - lo) } else { T::lit(0.5) };
    coords
        .iter()
        .map(|&(u, v)| (if closed { u } else { norm(u, ulo, uhi) }, norm(v, vlo, vhi)))
        .collect()
}

fn fit_spline_surface<T: Scalar>(pts: &[Vec3<T>], w: &[T], closed: bool, init: Option<&Surface<T>>) -> Result<Surface<T>> {
    let u_basis = if closed { Basis::Periodic(PERIODIC_CONTROLS) } else { Basis::Bezier };
    let v_basis = Basis::Bezier;
    require("spline", pts.len(), u_basis.count() * v_basis.count())?;
    let params = spline_surface_params(pts, w, closed, init);
    Ok(Surface::BSpline(BSplineSurface::fit(u_basis, v_basis, &params, pts, w)?))
}

// ---------------------------------------------------------------------------
// Curves

/// Fits a curve of the given kind. Splines take their parameters from
/// `init` when given, else from chord length along the first nonempty
/// target set, which must then be ordered.
pub fn fit_curve<T: Scalar>(
    kind: CurveKind,
    problem: &FittingProblem<T>,
    init: Option<&CurvePrimitive<T>>,
) -> Result<Fit<T, CurvePrimitive<T>>> {
    let (pts, w) = problem.targets();
    let (curve, converged) = match kind {
        CurveKind::Line => (fit_line(&pts, &w, problem.axis.as_ref(), init)?, true),
        CurveKind::Circle => fit_circle(&pts, &w, problem.axis.as_ref(), init)?,
        CurveKind::Ellipse => fit_ellipse(&pts, &w, problem.axis.as_ref(), init)?,
        CurveKind::BSpline => (fit_spline_curve(problem, &pts, &w, init)?, true),
    };
    let residual = weighted_rms(&pts, &w, |p| curve.distance(p));
    Ok(Fit { primitive: curve, residual, converged })
}

fn fit_line<T: Scalar>(
    pts: &[Vec3<T>],
    w: &[T],
    constraint: Option<&AxisConstraint<T>>,
    init: Option<&CurvePrimitive<T>>,
) -> Result<CurvePrimitive<T>> {
    require("line", pts.len(), 2)?;
    let c = weighted_mean(pts, w);
    let dir = match constraint {
        Some(a) => unit(a.direction),
        None => {
            let (vals, vecs) = covariance_eigen(pts, w, &c);
            if vals[2] <= T::eps() {
                return degenerate("line", "points coincide");
            }
            vecs[2]
        }
    };
    let reference = match init {
        Some(CurvePrimitive::Line { direction, .. }) => Some(*direction),
        _ => Some(pts[pts.len() - 1] - pts[0]),
    };
    Ok(CurvePrimitive::Line { point: c, direction: align(dir, reference) })
}

/// Plane normal for planar curves: the constraint, or the covariance normal.
fn curve_plane<T: Scalar>(
    kind: &'static str,
    pts: &[Vec3<T>],
    w: &[T],
    constraint: Option<&AxisConstraint<T>>,
) -> Result<(Vec3<T>, Vec3<T>)> {
    let c = weighted_mean(pts, w);
    match constraint {
        Some(a) => Ok((c, unit(a.direction))),
        None => {
            let (vals, vecs) = covariance_eigen(pts, w, &c);
            if vals[1] <= vals[2] * T::lit(1e-12) {
                return degenerate(kind, "points are collinear");
            }
            Ok((c, vecs[0]))
        }
    }
}

fn fit_circle<T: Scalar>(
    pts: &[Vec3<T>],
    w: &[T],
    constraint: Option<&AxisConstraint<T>>,
    init: Option<&CurvePrimitive<T>>,
) -> Result<(CurvePrimitive<T>, bool)> {
    require("circle", pts.len(), 3)?;
    let (c, n0) = curve_plane("circle", pts, w, constraint)?;
    let (e1, e2) = orthonormal_complement(&n0);
    let Some((c0, r0)) = circle_2d_init(pts, w, &c, &e1, &e2, &n0) else {
        return degenerate("circle", "points are collinear");
    };
    let sw: Vec<T> = w.iter().map(|x| x.sqrt()).collect();
    let fixed = constraint.map(|_| n0);
    // Two residual components per point keep the objective smooth at zero.
    let f = |x: &DVector<T>| {
        let (ctr, n, r) = match fixed {
            Some(n) => (vec_at(x, 0), n, x[3]),
            None => (vec_at(x, 0), unit(vec_at(x, 3)), x[6]),
        };
        let mut out = DVector::zeros(2 * pts.len());
        for (i, (p, &s)) in pts.iter().zip(&sw).enumerate() {
            let v = p - ctr;
            let h = v.dot(&n);
            out[2 * i] = s * ((v - n * h).norm() - r);
            out[2 * i + 1] = s * h;
        }
        out
    };
    let x0 = match fixed {
        Some(_) => DVector::from_vec(vec![c0.x, c0.y, c0.z, r0]),
        None => DVector::from_vec(vec![c0.x, c0.y, c0.z, n0.x, n0.y, n0.z, r0]),
    };
    let r = lm::minimize(f, x0, LM_ITERATIONS);
    let (ctr, n, radius) = match fixed {
        Some(n) => (vec_at(&r.x, 0), n, r.x[3].abs()),
        None => (vec_at(&r.x, 0), unit(vec_at(&r.x, 3)), r.x[6].abs()),
    };
    finite_or("circle", &[ctr.x, ctr.y, ctr.z, n.x, n.y, n.z, radius])?;
    if radius <= T::zero() {
        return degenerate("circle", "zero radius");
    }
    let prev = match init {
        Some(CurvePrimitive::Circle { frame, .. }) | Some(CurvePrimitive::Ellipse { frame, .. }) => Some(frame.clone()),
        _ => None,
    };
    let n = align(n, prev.as_ref().map(|f| f.z).or(fixed));
    let hint = prev.map(|f| f.x).unwrap_or(pts[0] - ctr);
    Ok((CurvePrimitive::Circle { frame: Frame::from_axis_and_hint(ctr, n, hint), radius }, r.converged))
}

/// Signed in-plane distance to an axis-aligned ellipse.
fn ellipse_signed_2d<T: Scalar>(a: T, b: T, x: T, y: T) -> T {
    let (_, _, d) = point_ellipse_distance_2d(a, b, x, y);
    if (x / a) * (x / a) + (y / b) * (y / b) < T::one() {
        -d
    } else {
        d
    }
}

fn ellipse_starts<T: Scalar>(pts: &[Vec3<T>], w: &[T], c: &Vec3<T>, e1: &Vec3<T>, e2: &Vec3<T>, n: &Vec3<T>) -> Vec<(T, T, T, T, T)> {
    let mut starts = Vec::new();
    let local: Vec<(T, T)> = pts.iter().map(|p| {
        let l = local_coords(p, c, e1, e2, n);
        (l.x, l.y)
    }).collect();
    // General conic through the centered coordinates.
    let rows: Vec<_> = local.iter().zip(w).map(|(&(x, y), &wi)| (vec![x * x, x * y, y * y, x, y], T::one(), wi)).collect();
    if let Some(s) = solve_wls(&rows) {
        let two = T::lit(2.0);
        let m = nalgebra::Matrix2::new(s[0], s[1] / two, s[1] / two, s[2]);
        if let Some(inv) = m.try_inverse() {
            let ctr = -(inv * nalgebra::Vector2::new(s[3], s[4])) / two;
            let k = ctr.dot(&(m * ctr)) + T::one();
            let e = nalgebra::SymmetricEigen::new(m);
            let (l0, l1) = (e.eigenvalues[0], e.eigenvalues[1]);
            if k > T::zero() && l0 > T::zero() && l1 > T::zero() {
                let v0 = e.eigenvectors.column(0);
                starts.push((ctr.x, ctr.y, v0[1].atan2(v0[0]), (k / l0).sqrt(), (k / l1).sqrt()));
            }
        }
    }
    let ones_sum = w.iter().fold(T::zero(), |a, &x| a + x);
    let mut cov = nalgebra::Matrix2::zeros();
    for (&(x, y), &wi) in local.iter().zip(w) {
        cov += nalgebra::Matrix2::new(x * x, x * y, x * y, y * y) * wi;
    }
    let e = nalgebra::SymmetricEigen::new(cov / ones_sum);
    let (i_max, i_min) = if e.eigenvalues[0] >= e.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let v = e.eigenvectors.column(i_max);
    let two = T::lit(2.0);
    let a = (two * e.eigenvalues[i_max]).max(T::eps()).sqrt();
    let b = (two * e.eigenvalues[i_min]).max(T::eps()).sqrt();
    starts.push((T::zero(), T::zero(), v[1].atan2(v[0]), a, b));
    starts
}

fn fit_ellipse<T: Scalar>(
    pts: &[Vec3<T>],
    w: &[T],
    constraint: Option<&AxisConstraint<T>>,
    init: Option<&CurvePrimitive<T>>,
) -> Result<(CurvePrimitive<T>, bool)> {
    require("ellipse", pts.len(), 5)?;
    let (c, n0) = curve_plane("ellipse", pts, w, constraint)?;
    let (e1, e2) = orthonormal_complement(&n0);
    let sw: Vec<T> = w.iter().map(|x| x.sqrt()).collect();
    let fixed = constraint.is_some();
    // Parameters: center, normal, in-plane angle of the x axis, semi-axes.
    let f = |x: &DVector<T>| {
        let ctr = vec_at(x, 0);
        let n = if fixed { n0 } else { unit(vec_at(x, 3)) };
        let o = if fixed { 3 } else { 6 };
        let (b1, b2) = orthonormal_complement(&n);
        let (s, co) = (x[o].sin(), x[o].cos());
        let ex = b1 * co + b2 * s;
        let ey = n.cross(&ex);
        let (a, b) = (x[o + 1].abs().max(T::eps()), x[o + 2].abs().max(T::eps()));
        let mut out = DVector::zeros(2 * pts.len());
        for (i, (p, &sq)) in pts.iter().zip(&sw).enumerate() {
            let v = p - ctr;
            out[2 * i] = sq * ellipse_signed_2d(a, b, v.dot(&ex), v.dot(&ey));
            out[2 * i + 1] = sq * v.dot(&n);
        }
        out
    };
    // Angles in the starts are relative to (e1, e2), which equal the
    // complement of n0 used inside `f` at the start.
    let mut starts: Vec<DVector<T>> = Vec::new();
    if let Some(CurvePrimitive::Ellipse { frame, semi_x, semi_y }) = init {
        let ang = frame.x.dot(&e2).atan2(frame.x.dot(&e1));
        let o = frame.origin;
        let mut v = vec![o.x, o.y, o.z];
        if !fixed {
            v.extend([n0.x, n0.y, n0.z]);
        }
        v.extend([ang, *semi_x, *semi_y]);
        starts.push(DVector::from_vec(v));
    }
    for (cx, cy, ang, a, b) in ellipse_starts(pts, w, &c, &e1, &e2, &n0) {
        let o = c + e1 * cx + e2 * cy;
        let mut v = vec![o.x, o.y, o.z];
        if !fixed {
            v.extend([n0.x, n0.y, n0.z]);
        }
        v.extend([ang, a, b]);
        starts.push(DVector::from_vec(v));
    }
    let probes = starts.into_iter().map(|s| lm::minimize(&f, s, LM_PROBE_ITERATIONS));
    let Some(probe) = best_of(probes) else {
        return degenerate("ellipse", "no elliptical fit found");
    };
    let r = lm::minimize(&f, probe.x, LM_ITERATIONS);
    let ctr = vec_at(&r.x, 0);
    let n = if fixed { n0 } else { unit(vec_at(&r.x, 3)) };
    let o = if fixed { 3 } else { 6 };
    let (b1, b2) = orthonormal_complement(&n);
    let ex = b1 * r.x[o].cos() + b2 * r.x[o].sin();
    let (a, b) = (r.x[o + 1].abs(), r.x[o + 2].abs());
    finite_or("ellipse", &[ctr.x, ctr.y, ctr.z, ex.x, ex.y, ex.z, a, b])?;
    if a <= T::zero() || b <= T::zero() {
        return degenerate("ellipse", "zero semi-axis");
    }
    // Keep the frame right-handed with the original normal; flipping z
    // mirrors y, which leaves the ellipse unchanged.
    let prev_n = match init {
        Some(CurvePrimitive::Ellipse { frame, .. }) | Some(CurvePrimitive::Circle { frame, .. }) => Some(frame.z),
        _ => None,
    };
    let z = align(n, prev_n);
    let frame = Frame { origin: ctr, x: ex, y: z.cross(&ex), z };
    Ok((CurvePrimitive::Ellipse { frame, semi_x: a, semi_y: b }, r.converged))
}

/// Chord-length parameters of an ordered polyline over `[0, 1]`; closed
/// polylines include the closing segment and stay below 1.
pub(crate) fn chord_params<T: Scalar>(pts: &[Vec3<T>], closed: bool) -> Vec<T> {
    let n = pts.len();
    let mut acc = vec![T::zero(); n];
    for i in 1..n {
        acc[i] = acc[i - 1] + (pts[i] - pts[i - 1]).norm();
    }
    let total = if closed { acc[n - 1] + (pts[0] - pts[n - 1]).norm() } else { acc[n - 1] };
    if total <= T::zero() {
        return (0..n).map(|i| T::lit(i as f64 / (n.max(2) - 1) as f64)).collect();
    }
    acc.into_iter().map(|a| a / total).collect()
}

fn fit_spline_curve<T: Scalar>(
    problem: &FittingProblem<T>,
    pts: &[Vec3<T>],
    w: &[T],
    init: Option<&CurvePrimitive<T>>,
) -> Result<CurvePrimitive<T>> {
    let basis = if problem.closed { Basis::Periodic(PERIODIC_CONTROLS) } else { Basis::Bezier };
    require("spline", pts.len(), basis.count())?;
    let seed = match init {
        Some(c @ CurvePrimitive::BSpline(_)) => c.clone(),
        _ => {
            let ordered = [&problem.input, &problem.adjacent, &problem.previous]
                .into_iter()
                .find(|s| !s.is_empty())
                .unwrap();
            if ordered.len() < basis.count() {
                return degenerate("spline", "ordered target set shorter than the control polygon");
            }
            let params = chord_params(ordered, problem.closed);
            let ones = vec![T::one(); ordered.len()];
            CurvePrimitive::BSpline(BSplineCurve::fit(basis, &params, ordered, &ones)?)
        }
    };
    let params: Vec<T> = pts.iter().map(|p| seed.project(p).0).collect();
    Ok(CurvePrimitive::BSpline(BSplineCurve::fit(basis, &params, pts, w)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize, r: f64, z: f64) -> Vec<Vec3<f64>> {
        (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * std::f64::consts::TAU;
                Vec3::new(0.5 + r * t.cos(), 0.5 + r * t.sin(), z)
            })
            .collect()
    }

    #[test]
    fn exact_plane() {
        let pts: Vec<_> = (0..100).map(|i| Vec3::new((i % 10) as f64 / 9.0, (i / 10) as f64 / 9.0, 0.5)).collect();
        let fit = fit_surface(PatchKind::Plane, &FittingProblem::from_points(pts), None).unwrap();
        let (n, d) = fit.primitive.plane_equation().unwrap();
        assert!((n.z.abs() - 1.0).abs() < 1e-12);
        assert!((d * n.z.signum() - 0.5).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn collinear_plane_is_degenerate() {
        let pts: Vec<_> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let err = fit_surface(PatchKind::Plane, &FittingProblem::from_points(pts), None).unwrap_err();
        assert!(matches!(err, Error::Degenerate { kind: "plane", .. }));
    }

    #[test]
    fn too_few_points_named() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0); 3];
        let err = fit_surface(PatchKind::Sphere, &FittingProblem::from_points(pts), None).unwrap_err();
        assert!(err.to_string().contains("at least 4"));
    }

    #[test]
    fn exact_circle_and_cylinder() {
        let pts = ring(24, 0.3, 0.2);
        let c = fit_curve(CurveKind::Circle, &FittingProblem::from_points(pts), None).unwrap();
        assert!(c.residual < 1e-9);
        let mut pts = ring(24, 0.2, 0.1);
        pts.extend(ring(24, 0.2, 0.5));
        pts.extend(ring(24, 0.2, 0.9));
        let fit = fit_surface(PatchKind::Cylinder, &FittingProblem::from_points(pts), None).unwrap();
        match fit.primitive {
            Surface::Cylinder { frame, radius } => {
                assert!((radius - 0.2).abs() < 1e-9);
                assert!(frame.z.z.abs() > 1.0 - 1e-12);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn constrained_axis_is_exact() {
        let mut pts = ring(20, 0.2, 0.1);
        pts.extend(ring(20, 0.2, 0.7));
        let dir = Vec3::new(0.0, 0.01, 1.0).normalize();
        let problem = FittingProblem::from_points(pts).with_axis(AxisConstraint { direction: dir, point: None });
        let fit = fit_surface(PatchKind::Cylinder, &problem, None).unwrap();
        let (_, a) = fit.primitive.axis().unwrap();
        assert!((a - dir).norm() < 1e-12);
    }

    #[test]
    fn open_spline_curve_reproduces_line() {
        let pts: Vec<_> = (0..30).map(|i| Vec3::new(i as f64 / 29.0, 0.2, 0.3)).collect();
        let fit = fit_curve(CurveKind::BSpline, &FittingProblem::from_points(pts), None).unwrap();
        assert!(fit.residual < 1e-9);
    }
}
