//! Geometric refinement of an extracted complex against an input point cloud.
//!
//! Refinement alternates patch, curve and corner updates. Every update is a
//! majorize-minimize step on one global energy:
//!
//! ```text
//! E = Σ_points min(d_nearest², τ²) + w_adj (Σ_FE Σ_samples d² + Σ_FV d² + Σ_EV d²)
//! ```
//!
//! where `τ` is the assignment threshold. Point assignments are recomputed
//! from the current geometry at the start of every round, and an element's
//! new geometry is kept only if its share of the energy under that fixed
//! assignment does not grow. `E` is therefore non-increasing round by round
//! within each stage. The one exception is the first typed fit of a patch
//! predicted as an analytic kind: that conversion is always taken, since a
//! spline can overfit noise better than the primitive it stands in for.

mod fit;
mod lm;

use serde::{Deserialize, Serialize};

use crate::complex::{is_valid_topology, ChainComplex, Curve, CurveKind, ElementGroup, Patch, PatchKind};
use crate::error::{Error, Result};
use crate::geometry::{closest_point_on_triangle, dense_grid, proximity, CurveSamples, PatchSamples, DENSIFY, PATCH_GRID};
use crate::primitive::{BSplineCurve, BSplineSurface, Basis, CurvePrimitive, Surface};
use crate::scalar::{axis_angle, Scalar, Vec3};

pub use fit::{
    fit_curve, fit_primitive, fit_surface, AxisConstraint, Fit, FitWeights, FittingProblem, PrimitiveKind,
    TypedPrimitive, PERIODIC_CONTROLS,
};

/// Default point-to-patch assignment threshold.
pub const ASSIGN_THRESHOLD: f64 = 0.02;
/// Default validity threshold.
pub const VALIDITY_THRESHOLD: f64 = 0.03;
/// Largest angle between line directions and circle normals still treated as
/// a consistent axis cue, in degrees.
pub const CUE_TOLERANCE_DEG: f64 = 10.0;

/// Margin around a patch's bounding sphere beyond which input points are not
/// considered for assignment.
const TRIM_MARGIN: f64 = 0.05;

// ---------------------------------------------------------------------------
// Projection

/// Grid parameter of sample row `i` along `u`.
fn grid_u<T: Scalar>(i: usize, closed: bool) -> T {
    let d = if closed { PATCH_GRID } else { PATCH_GRID - 1 };
    T::lit(i as f64 / d as f64)
}

fn grid_v<T: Scalar>(j: usize) -> T {
    T::lit(j as f64 / (PATCH_GRID - 1) as f64)
}

fn barycentric<T: Scalar>(p: &Vec3<T>, a: &Vec3<T>, b: &Vec3<T>, c: &Vec3<T>) -> (T, T, T) {
    let (v0, v1, v2) = (b - a, c - a, p - a);
    let (d00, d01, d11) = (v0.dot(&v0), v0.dot(&v1), v1.dot(&v1));
    let (d20, d21) = (v2.dot(&v0), v2.dot(&v1));
    let den = d00 * d11 - d01 * d01;
    if den.abs() <= T::eps() * T::eps() {
        return (T::one(), T::zero(), T::zero());
    }
    let v = (d11 * d20 - d01 * d21) / den;
    let w = (d00 * d21 - d01 * d20) / den;
    (T::one() - v - w, v, w)
}

/// Closest point on the triangulated sample grid: `(u, v, foot, distance)`
/// with grid parameters interpolated over the hit triangle.
pub fn project_point_to_samples<T: Scalar>(p: &Vec3<T>, samples: &PatchSamples<T>) -> (T, T, Vec3<T>, T) {
    let k = PATCH_GRID;
    let closed = samples.is_u_closed();
    let cells_u = if closed { k } else { k - 1 };
    let mut best = (T::zero(), T::zero(), samples.at(0, 0), T::max_value().unwrap());
    for cu in 0..cells_u {
        let (u0, u1) = (grid_u::<T>(cu, closed), grid_u::<T>(cu + 1, closed));
        for cv in 0..k - 1 {
            let (v0, v1) = (grid_v::<T>(cv), grid_v::<T>(cv + 1));
            let q00 = samples.at(cu, cv);
            let q10 = samples.at((cu + 1) % k, cv);
            let q01 = samples.at(cu, cv + 1);
            let q11 = samples.at((cu + 1) % k, cv + 1);
            for (tri, uv) in [
                ([q00, q10, q11], [(u0, v0), (u1, v0), (u1, v1)]),
                ([q00, q11, q01], [(u0, v0), (u1, v1), (u0, v1)]),
            ] {
                let foot = closest_point_on_triangle(p, &tri);
                let d = (foot - p).norm_squared();
                if d < best.3 {
                    let (l0, l1, l2) = barycentric(&foot, &tri[0], &tri[1], &tri[2]);
                    let u = uv[0].0 * l0 + uv[1].0 * l1 + uv[2].0 * l2;
                    let v = uv[0].1 * l0 + uv[1].1 * l1 + uv[2].1 * l2;
                    best = (u, v, foot, d);
                }
            }
        }
    }
    let u = if closed && best.0 >= T::one() { best.0 - T::one() } else { best.0 };
    (u, best.1, best.2, best.3.sqrt())
}

/// Closest point on a patch: its primitive when present, else its
/// triangulated sample grid. Returns `(foot, distance)`.
pub fn project_point_to_patch<T: Scalar>(p: &Vec3<T>, patch: &Patch<T>) -> (Vec3<T>, T) {
    match &patch.primitive {
        Some(s) => {
            let (_, _, foot, d) = s.project(p);
            (foot, d)
        }
        None => {
            let (_, _, foot, d) = project_point_to_samples(p, &patch.samples);
            (foot, d)
        }
    }
}

fn closest_on_segment<T: Scalar>(p: &Vec3<T>, a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    let ab = b - a;
    let l2 = ab.norm_squared();
    if l2 <= T::zero() {
        return *a;
    }
    let t = ((p - a).dot(&ab) / l2).max(T::zero()).min(T::one());
    a + ab * t
}

fn project_to_polyline<T: Scalar>(p: &Vec3<T>, samples: &CurveSamples<T>) -> (Vec3<T>, T) {
    let pts = samples.points();
    let n = pts.len();
    let segs = if samples.is_closed() { n } else { n - 1 };
    let mut best = (pts[0], (pts[0] - p).norm_squared());
    for i in 0..segs {
        let q = closest_on_segment(p, &pts[i], &pts[(i + 1) % n]);
        let d = (q - p).norm_squared();
        if d < best.1 {
            best = (q, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// Closest point on a curve: its primitive when present, else its sample
/// polyline. Returns `(foot, distance)`.
pub fn project_point_to_curve<T: Scalar>(p: &Vec3<T>, curve: &Curve<T>) -> (Vec3<T>, T) {
    match &curve.primitive {
        Some(c) => {
            let (_, foot, d) = c.project(p);
            (foot, d)
        }
        None => project_to_polyline(p, &curve.samples),
    }
}

// ---------------------------------------------------------------------------
// Topological cues and assignment

/// Direction of a line curve and whether it came from a primitive.
fn line_direction<T: Scalar>(curve: &Curve<T>) -> Vec3<T> {
    match &curve.primitive {
        Some(CurvePrimitive::Line { direction, .. }) => *direction,
        _ => {
            let pts = curve.samples.points();
            (pts[pts.len() - 1] - pts[0]).normalize()
        }
    }
}

/// Plane normal and center of a circle curve, from its primitive or samples.
fn circle_plane<T: Scalar>(curve: &Curve<T>) -> Option<(Vec3<T>, Vec3<T>)> {
    if let Some(c) = &curve.primitive {
        if let (Some(n), Some(ctr)) = (c.normal(), c.center()) {
            return Some((n, ctr));
        }
    }
    let problem = FittingProblem {
        input: curve.samples.points().to_vec(),
        closed: curve.samples.is_closed(),
        ..Default::default()
    };
    let f = fit_curve(CurveKind::Circle, &problem, None).ok()?;
    Some((f.primitive.normal()?, f.primitive.center()?))
}

fn mean_direction<T: Scalar>(dirs: &[Vec3<T>]) -> Vec3<T> {
    let r = dirs[0];
    dirs.iter()
        .fold(Vec3::zeros(), |acc, d| acc + if d.dot(&r) < T::zero() { -d } else { *d })
        .normalize()
}

fn max_spread<T: Scalar>(dirs: &[Vec3<T>], reference: &Vec3<T>) -> f64 {
    dirs.iter().map(|d| axis_angle(d, reference).as_f64().to_degrees()).fold(0.0, f64::max)
}

/// Axis constraint implied by a cylinder or cone patch's boundary curves.
///
/// Cylinders follow their line boundaries and the normals of their circle
/// boundaries; cones pass through the center of their first circle boundary
/// along its normal. Cues that disagree by more than [`CUE_TOLERANCE_DEG`]
/// yield no constraint and a warning.
pub fn axis_cues<T: Scalar>(c: &ChainComplex<T>, face: usize) -> Option<AxisConstraint<T>> {
    let patch = c.patches.get(face)?;
    if !matches!(patch.kind, PatchKind::Cylinder | PatchKind::Cone) {
        return None;
    }
    let curves: Vec<&Curve<T>> = c.face_curves(face).into_iter().map(|j| &c.curves[j]).filter(|e| e.exists).collect();
    let lines: Vec<Vec3<T>> = curves.iter().filter(|e| e.kind == CurveKind::Line).map(|e| line_direction(e)).collect();
    let circles: Vec<(Vec3<T>, Vec3<T>)> =
        curves.iter().filter(|e| e.kind == CurveKind::Circle).filter_map(|e| circle_plane(e)).collect();
    let normals: Vec<Vec3<T>> = circles.iter().map(|c| c.0).collect();
    match patch.kind {
        PatchKind::Cylinder => {
            let axis = match (lines.is_empty(), normals.is_empty()) {
                (true, true) => return None,
                (false, _) => mean_direction(&lines),
                (true, false) => mean_direction(&normals),
            };
            let spread = max_spread(&lines, &axis).max(max_spread(&normals, &axis));
            if spread > CUE_TOLERANCE_DEG {
                log::warn!("patch {face}: contradictory axis cues ({spread:.1}° apart), fitting unconstrained");
                return None;
            }
            Some(AxisConstraint { direction: axis, point: None })
        }
        PatchKind::Cone => {
            let &(n, ctr) = circles.first()?;
            if max_spread(&normals, &n) > CUE_TOLERANCE_DEG {
                log::warn!("patch {face}: circle boundaries are not parallel, fitting unconstrained");
                return None;
            }
            Some(AxisConstraint { direction: n, point: Some(ctr) })
        }
        _ => None,
    }
}

/// Assigns each input point to its closest patch; points farther than
/// `threshold` from every patch are dropped. Ties go to the lower index.
pub fn assign_points_to_patches<T: Scalar>(points: &[Vec3<T>], patches: &[Patch<T>], threshold: T) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); patches.len()];
    for (i, p) in points.iter().enumerate() {
        let mut best: Option<(usize, T)> = None;
        for (f, patch) in patches.iter().enumerate() {
            if !patch.exists {
                continue;
            }
            let d = project_point_to_patch(p, patch).1;
            if d <= threshold && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((f, d));
            }
        }
        if let Some((f, _)) = best {
            out[f].push(i);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Validity

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjacency {
    /// Curve `lower` bounds patch `higher`.
    Fe,
    /// Corner `lower` bounds curve `higher`.
    Ev,
    /// Corner `lower` bounds patch `higher`.
    Fv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub adjacency: Adjacency,
    pub higher: usize,
    pub lower: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    /// Fraction of adjacent pairs within the threshold; 1 when there are none.
    pub ratio: f64,
    pub pairs: usize,
    pub violations: Vec<Violation>,
}

/// Curve samples with `sub` points per segment.
fn dense_curve<T: Scalar>(samples: &CurveSamples<T>, sub: usize) -> Vec<Vec3<T>> {
    let pts = samples.points();
    let n = pts.len();
    let segs = if samples.is_closed() { n } else { n - 1 };
    let mut out = Vec::with_capacity(segs * sub + 1);
    for i in 0..segs {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        for s in 0..sub {
            let t = T::lit(s as f64 / sub as f64);
            out.push(a + (b - a) * t);
        }
    }
    if !samples.is_closed() {
        out.push(pts[n - 1]);
    }
    out
}

/// Proximity of every adjacent pair in FE, EV and FV, computed on sample
/// sets refined [`DENSIFY`] times so that sampling gaps are not mistaken
/// for geometric gaps.
pub fn validity_assessment<T: Scalar>(c: &ChainComplex<T>, threshold: T) -> ValidityReport {
    let curve_pts: Vec<Vec<Vec3<T>>> = c.curves.iter().map(|e| dense_curve(&e.samples, DENSIFY)).collect();
    let patch_pts: Vec<Vec<Vec3<T>>> = c.patches.iter().map(|f| dense_grid(&f.samples, DENSIFY)).collect();
    let mut pairs = 0usize;
    let mut violations = Vec::new();
    let mut check = |adjacency, higher, lower, d: T| {
        pairs += 1;
        if !(d <= threshold) {
            violations.push(Violation { adjacency, higher, lower, distance: d.as_f64() });
        }
    };
    for i in 0..c.num_patches() {
        for j in c.face_curves(i) {
            check(Adjacency::Fe, i, j, proximity(c.curves[j].samples.points(), &patch_pts[i]));
        }
    }
    for j in 0..c.num_curves() {
        for k in c.curve_corners(j) {
            check(Adjacency::Ev, j, k, proximity(&[c.corners[k].point], &curve_pts[j]));
        }
    }
    for i in 0..c.num_patches() {
        for k in c.face_corners(i) {
            check(Adjacency::Fv, i, k, proximity(&[c.corners[k].point], &patch_pts[i]));
        }
    }
    let ratio = if pairs == 0 { 1.0 } else { (pairs - violations.len()) as f64 / pairs as f64 };
    ValidityReport { ratio, pairs, violations }
}

// ---------------------------------------------------------------------------
// Refinement

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    /// Rounds with spline patches.
    pub stage1_rounds: usize,
    /// Rounds with typed patches.
    pub stage2_rounds: usize,
    pub assign_threshold: f64,
    pub weights: FitWeights,
    pub use_axis_cues: bool,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            stage1_rounds: 3,
            stage2_rounds: 5,
            assign_threshold: ASSIGN_THRESHOLD,
            weights: FitWeights::default(),
            use_axis_cues: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitFailure {
    pub group: ElementGroup,
    pub index: usize,
    pub round: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    /// Energy before the first round and after every round.
    pub residual_history: Vec<f64>,
    /// Fits that raised an error; the element kept its previous geometry.
    pub failures: Vec<FitFailure>,
    /// Updates discarded because they would have raised the energy.
    pub rejected_updates: usize,
    /// Patches still carrying a spline where a typed primitive was predicted.
    pub unconverted: Vec<usize>,
    /// Points assigned to some patch in the last round.
    pub assigned_points: usize,
}

struct Bounds<T: Scalar> {
    center: Vec3<T>,
    radius: T,
}

fn bounds<T: Scalar>(s: &PatchSamples<T>) -> Bounds<T> {
    let pts = s.points();
    let n = T::lit(pts.len() as f64);
    let center = pts.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let radius = pts.iter().map(|p| (p - center).norm()).fold(T::zero(), |a, b| a.max(b));
    Bounds { center, radius: radius + T::lit(TRIM_MARGIN) }
}

/// Distance used during refinement: spline projections are seeded at the
/// nearest grid sample, whose parameters are known exactly.
fn patch_distance<T: Scalar>(p: &Vec3<T>, patch: &Patch<T>) -> T {
    match &patch.primitive {
        Some(Surface::BSpline(s)) => {
            let closed = patch.samples.is_u_closed();
            let (mut best, mut bd) = (0usize, T::max_value().unwrap());
            for (i, q) in patch.samples.points().iter().enumerate() {
                let d = (q - p).norm_squared();
                if d < bd {
                    bd = d;
                    best = i;
                }
            }
            let (u, v) = (grid_u::<T>(best / PATCH_GRID, closed), grid_v::<T>(best % PATCH_GRID));
            s.newton_project(p, u, v).3
        }
        Some(s) => s.distance(p),
        None => project_point_to_samples(p, &patch.samples).3,
    }
}

fn curve_distance<T: Scalar>(p: &Vec3<T>, curve: &Curve<T>) -> T {
    project_point_to_curve(p, curve).1
}

/// Which patch each point is assigned to, with the truncated cost term.
struct Assignment<T: Scalar> {
    owner: Vec<Option<usize>>,
    cost: Vec<T>,
}

struct Refiner<'a, T: Scalar> {
    c: ChainComplex<T>,
    points: &'a [Vec3<T>],
    tau2: T,
    w_adj: T,
    opts: &'a RefineOptions,
    report: RefineReport,
}

impl<'a, T: Scalar> Refiner<'a, T> {
    fn trimmed(&self, p: &Vec3<T>, patch: &Patch<T>, b: &Bounds<T>) -> Option<T> {
        if (p - b.center).norm() > b.radius {
            return None;
        }
        Some(patch_distance(p, patch))
    }

    fn assign(&self) -> Assignment<T> {
        let live: Vec<(usize, Bounds<T>)> =
            self.c.patches.iter().enumerate().filter(|(_, f)| f.exists).map(|(i, f)| (i, bounds(&f.samples))).collect();
        let mut owner = Vec::with_capacity(self.points.len());
        let mut cost = Vec::with_capacity(self.points.len());
        for p in self.points {
            let mut best: Option<(usize, T)> = None;
            for (i, b) in &live {
                if let Some(d) = self.trimmed(p, &self.c.patches[*i], b) {
                    let d2 = d * d;
                    if d2 <= self.tau2 && best.is_none_or(|(_, bd)| d2 < bd) {
                        best = Some((*i, d2));
                    }
                }
            }
            owner.push(best.map(|b| b.0));
            cost.push(best.map(|b| b.1).unwrap_or(self.tau2));
        }
        Assignment { owner, cost }
    }

    /// Adjacency share of patch `f`.
    fn patch_adjacency(&self, f: usize, patch: &Patch<T>) -> T {
        let mut s = T::zero();
        for j in self.c.face_curves(f) {
            for q in self.c.curves[j].samples.points() {
                let d = patch_distance(q, patch);
                s += d * d;
            }
        }
        for k in self.c.face_corners(f) {
            let d = patch_distance(&self.c.corners[k].point, patch);
            s += d * d;
        }
        self.w_adj * s
    }

    fn patch_share(&self, f: usize, patch: &Patch<T>, owned: &[usize]) -> T {
        let b = bounds(&patch.samples);
        let mut s = T::zero();
        for &i in owned {
            let d2 = self.trimmed(&self.points[i], patch, &b).map(|d| d * d).unwrap_or(self.tau2);
            s += d2.min(self.tau2);
        }
        s + self.patch_adjacency(f, patch)
    }

    fn curve_share(&self, j: usize, curve: &Curve<T>) -> T {
        let mut s = T::zero();
        for f in self.c.curve_faces(j) {
            for q in curve.samples.points() {
                let d = patch_distance(q, &self.c.patches[f]);
                s += d * d;
            }
        }
        for k in self.c.curve_corners(j) {
            let d = curve_distance(&self.c.corners[k].point, curve);
            s += d * d;
        }
        self.w_adj * s
    }

    fn corner_share(&self, k: usize, p: &Vec3<T>) -> T {
        let mut s = T::zero();
        for f in self.c.corner_faces(k) {
            let d = patch_distance(p, &self.c.patches[f]);
            s += d * d;
        }
        for j in self.c.corner_curves(k) {
            let d = curve_distance(p, &self.c.curves[j]);
            s += d * d;
        }
        self.w_adj * s
    }

    fn energy(&self) -> T {
        let a = self.assign();
        let mut e = a.cost.iter().fold(T::zero(), |acc, &x| acc + x);
        for (f, patch) in self.c.patches.iter().enumerate() {
            if patch.exists {
                e += self.patch_adjacency(f, patch);
            }
        }
        for j in 0..self.c.num_curves() {
            if !self.c.curves[j].exists {
                continue;
            }
            for k in self.c.curve_corners(j) {
                let d = curve_distance(&self.c.corners[k].point, &self.c.curves[j]);
                e += self.w_adj * d * d;
            }
        }
        e
    }

    fn fail(&mut self, group: ElementGroup, index: usize, round: usize, err: Error) {
        log::debug!("{group:?} {index}: fit failed in round {round}: {err}");
        self.report.failures.push(FitFailure { group, index, round, reason: err.to_string() });
    }

    fn round(&mut self, round: usize, typed: bool) {
        let a = self.assign();
        let mut owned = vec![Vec::new(); self.c.num_patches()];
        for (i, o) in a.owner.iter().enumerate() {
            if let Some(f) = o {
                owned[*f].push(i);
            }
        }
        self.report.assigned_points = a.owner.iter().filter(|o| o.is_some()).count();
        for f in 0..self.c.num_patches() {
            if !self.c.patches[f].exists {
                continue;
            }
            let patch = &self.c.patches[f];
            let converting = typed && patch.primitive.as_ref().is_some_and(|s| s.kind() != patch.kind);
            match self.fit_patch(f, &owned[f], typed) {
                Ok(candidate) => {
                    let old = self.patch_share(f, patch, &owned[f]);
                    let new = self.patch_share(f, &candidate, &owned[f]);
                    if converting || new <= old {
                        self.c.patches[f] = candidate;
                    } else {
                        self.report.rejected_updates += 1;
                    }
                }
                Err(e) => self.fail(ElementGroup::Patch, f, round, e),
            }
        }
        for j in 0..self.c.num_curves() {
            if !self.c.curves[j].exists {
                continue;
            }
            match self.fit_curve(j) {
                Ok(candidate) => {
                    if self.curve_share(j, &candidate) <= self.curve_share(j, &self.c.curves[j]) {
                        self.c.curves[j] = candidate;
                    } else {
                        self.report.rejected_updates += 1;
                    }
                }
                Err(e) => self.fail(ElementGroup::Curve, j, round, e),
            }
        }
        for k in 0..self.c.num_corners() {
            if !self.c.corners[k].exists {
                continue;
            }
            let old = self.c.corners[k].point;
            let candidate = self.corner_target(k);
            if self.corner_share(k, &candidate) <= self.corner_share(k, &old) {
                self.c.corners[k].point = candidate;
            } else {
                self.report.rejected_updates += 1;
            }
        }
    }

    fn fit_patch(&self, f: usize, owned: &[usize], typed: bool) -> Result<Patch<T>> {
        let patch = &self.c.patches[f];
        let kind = match patch.kind {
            PatchKind::Plane | PatchKind::Sphere => patch.kind,
            k if typed => k,
            _ => PatchKind::BSpline,
        };
        let mut adjacent = Vec::new();
        for j in self.c.face_curves(f) {
            adjacent.extend_from_slice(self.c.curves[j].samples.points());
        }
        for k in self.c.face_corners(f) {
            adjacent.push(self.c.corners[k].point);
        }
        let axis = if typed && self.opts.use_axis_cues { axis_cues(&self.c, f) } else { None };
        let problem = FittingProblem {
            input: owned.iter().map(|&i| self.points[i]).collect(),
            adjacent,
            previous: patch.samples.points().to_vec(),
            weights: self.opts.weights,
            axis,
            closed: patch.samples.is_u_closed(),
        };
        let seed;
        let init = match (&patch.primitive, kind) {
            (Some(s), _) => Some(s),
            (None, PatchKind::BSpline) => {
                seed = grid_spline(&patch.samples)?;
                Some(&seed)
            }
            (None, _) => None,
        };
        let fitted = fit_surface(kind, &problem, init)?;
        let samples = resample_patch(&fitted.primitive, &patch.samples)?;
        Ok(Patch { kind: patch.kind, samples, primitive: Some(fitted.primitive), exists: true })
    }

    /// Samples moved to the nearest common point of the adjacent patches,
    /// with endpoints snapped to the bounding corners.
    fn curve_targets(&self, j: usize) -> Vec<Vec3<T>> {
        let curve = &self.c.curves[j];
        let faces: Vec<&Patch<T>> = self.c.curve_faces(j).into_iter().map(|f| &self.c.patches[f]).collect();
        let w_stab = T::lit(self.opts.weights.stabilization);
        let mut targets: Vec<Vec3<T>> = curve
            .samples
            .points()
            .iter()
            .map(|s| if faces.is_empty() { *s } else { common_point(s, &faces, &[], self.w_adj, w_stab) })
            .collect();
        let corners = self.c.curve_corners(j);
        if curve.is_open() && corners.len() == 2 {
            let (a, b) = (self.c.corners[corners[0]].point, self.c.corners[corners[1]].point);
            let n = targets.len();
            let straight = (targets[0] - a).norm() + (targets[n - 1] - b).norm();
            let swapped = (targets[0] - b).norm() + (targets[n - 1] - a).norm();
            let (first, last) = if straight <= swapped { (a, b) } else { (b, a) };
            targets[0] = first;
            targets[n - 1] = last;
        }
        targets
    }

    fn fit_curve(&self, j: usize) -> Result<Curve<T>> {
        let curve = &self.c.curves[j];
        let closed = curve.samples.is_closed();
        let targets = self.curve_targets(j);
        let problem = FittingProblem {
            input: Vec::new(),
            adjacent: targets.clone(),
            previous: curve.samples.points().to_vec(),
            weights: self.opts.weights,
            axis: None,
            closed,
        };
        let seed;
        let init = match (&curve.primitive, curve.kind) {
            (Some(p), _) => Some(p),
            (None, CurveKind::BSpline) => {
                seed = polyline_spline(&curve.samples)?;
                Some(&seed)
            }
            (None, _) => None,
        };
        let fitted = fit_curve(curve.kind, &problem, init)?;
        let samples = resample_curve(&fitted.primitive, &targets, closed)?;
        Ok(Curve { kind: curve.kind, samples, primitive: Some(fitted.primitive), exists: true })
    }

    fn corner_target(&self, k: usize) -> Vec3<T> {
        let faces: Vec<&Patch<T>> = self.c.corner_faces(k).into_iter().map(|f| &self.c.patches[f]).collect();
        let curves: Vec<&Curve<T>> = self.c.corner_curves(k).into_iter().map(|j| &self.c.curves[j]).collect();
        let w_stab = T::lit(self.opts.weights.stabilization);
        common_point(&self.c.corners[k].point, &faces, &curves, self.w_adj, w_stab)
    }
}

/// Distance to an element linearized at the foot of a point.
enum Local<T: Scalar> {
    Plane(Vec3<T>, Vec3<T>),
    Line(Vec3<T>, Vec3<T>),
    Point(Vec3<T>),
}

fn patch_local<T: Scalar>(x: &Vec3<T>, patch: &Patch<T>) -> Local<T> {
    match &patch.primitive {
        Some(s) => {
            let (u, v, foot, _) = s.project(x);
            let n = s.normal(u, v);
            // Feet on a patch border have an in-surface offset; the tangent
            // plane would ignore it.
            let r = x - foot;
            let tangential = (r - n * r.dot(&n)).norm();
            if n.norm() > T::lit(0.5) && tangential <= T::lit(1e-3) * r.norm() + T::lit(1e-12) {
                Local::Plane(foot, n)
            } else {
                Local::Point(foot)
            }
        }
        None => Local::Point(project_point_to_samples(x, &patch.samples).2),
    }
}

fn curve_local<T: Scalar>(x: &Vec3<T>, curve: &Curve<T>) -> Local<T> {
    match &curve.primitive {
        Some(c) => {
            let (t, foot, _) = c.project(x);
            let h = T::lit(1e-5);
            let d = c.eval(t + h) - c.eval(t - h);
            if d.norm() > T::eps() {
                Local::Line(foot, d.normalize())
            } else {
                Local::Point(foot)
            }
        }
        None => Local::Point(project_to_polyline(x, &curve.samples).0),
    }
}

/// Point minimizing the weighted squared distances to the given patches and
/// curves plus a stabilization pull towards `x0`, by Gauss-Newton on the
/// tangent planes and lines at the feet.
fn common_point<T: Scalar>(x0: &Vec3<T>, patches: &[&Patch<T>], curves: &[&Curve<T>], w: T, w_stab: T) -> Vec3<T> {
    let id = nalgebra::Matrix3::<T>::identity();
    let mut x = *x0;
    for _ in 0..8 {
        let mut a = id * w_stab;
        let mut b = x0 * w_stab;
        let locals = patches.iter().map(|p| patch_local(&x, p)).chain(curves.iter().map(|c| curve_local(&x, c)));
        for l in locals {
            let (m, foot) = match l {
                Local::Plane(f, n) => (n * n.transpose(), f),
                Local::Line(f, t) => (id - t * t.transpose(), f),
                Local::Point(f) => (id, f),
            };
            a += m * w;
            b += m * foot * w;
        }
        let Some(next) = a.lu().solve(&b) else { break };
        let step = (next - x).norm();
        x = next;
        if step <= T::eps().sqrt() * T::lit(1e-4) {
            break;
        }
    }
    x
}

/// Spline through a sample grid at the grid parameters.
fn grid_spline<T: Scalar>(samples: &PatchSamples<T>) -> Result<Surface<T>> {
    let closed = samples.is_u_closed();
    let u_basis = if closed { Basis::Periodic(PERIODIC_CONTROLS) } else { Basis::Bezier };
    let params: Vec<(T, T)> =
        (0..PATCH_GRID * PATCH_GRID).map(|i| (grid_u(i / PATCH_GRID, closed), grid_v(i % PATCH_GRID))).collect();
    let w = vec![T::one(); params.len()];
    Ok(Surface::BSpline(BSplineSurface::fit(u_basis, Basis::Bezier, &params, samples.points(), &w)?))
}

fn polyline_spline<T: Scalar>(samples: &CurveSamples<T>) -> Result<CurvePrimitive<T>> {
    let closed = samples.is_closed();
    let basis = if closed { Basis::Periodic(PERIODIC_CONTROLS) } else { Basis::Bezier };
    let params = fit::chord_params(samples.points(), closed);
    let w = vec![T::one(); params.len()];
    Ok(CurvePrimitive::BSpline(BSplineCurve::fit(basis, &params, samples.points(), &w)?))
}

/// New sample grid for a fitted surface: splines are evaluated at the grid
/// parameters, other kinds take the feet of the previous samples.
fn resample_patch<T: Scalar>(s: &Surface<T>, prev: &PatchSamples<T>) -> Result<PatchSamples<T>> {
    let closed = prev.is_u_closed();
    let grid = match s {
        Surface::BSpline(b) => (0..PATCH_GRID * PATCH_GRID)
            .map(|i| b.eval(grid_u(i / PATCH_GRID, closed), grid_v(i % PATCH_GRID)))
            .collect(),
        _ => prev.points().iter().map(|p| s.project(p).2).collect(),
    };
    PatchSamples::new(grid, closed)
}

fn wrap_angle<T: Scalar>(a: T) -> T {
    let two_pi = T::two_pi();
    let mut x = a - two_pi * ((a + T::pi()) / two_pi).floor();
    if x > T::pi() {
        x -= two_pi;
    }
    x
}

/// Uniform samples of a fitted curve spanning the targets, in target order.
fn resample_curve<T: Scalar>(c: &CurvePrimitive<T>, targets: &[Vec3<T>], closed: bool) -> Result<CurveSamples<T>> {
    let n = targets.len();
    let params: Vec<T> = targets.iter().map(|p| c.project(p).0).collect();
    let (start, span) = match c {
        CurvePrimitive::Line { .. } => (params[0], params[n - 1] - params[0]),
        CurvePrimitive::Circle { .. } | CurvePrimitive::Ellipse { .. } => {
            let mut acc = params[0];
            for i in 1..n {
                acc += wrap_angle(params[i] - params[i - 1]);
            }
            let total = acc - params[0];
            if closed {
                let dir = if total < T::zero() { -T::one() } else { T::one() };
                (params[0], dir * T::two_pi())
            } else {
                (params[0], total)
            }
        }
        CurvePrimitive::BSpline(_) => {
            if closed {
                (params[0], T::one())
            } else {
                (params[0], params[n - 1] - params[0])
            }
        }
    };
    let denom = if closed { n } else { n - 1 };
    let pts = (0..n).map(|i| c.eval(start + span * T::lit(i as f64 / denom as f64))).collect();
    CurveSamples::new(pts, closed)
}

/// Refines the geometry of `c` against `points` without touching topology.
///
/// Stage one fits planes and spheres directly and every other patch as a
/// spline; stage two converts patches to their predicted kinds, with axis
/// cues for cylinders and cones. Curves are fitted with their own kind in
/// both stages. A failed fit leaves the element unchanged and is reported.
pub fn refine<T: Scalar>(
    c: &ChainComplex<T>,
    points: &[Vec3<T>],
    opts: &RefineOptions,
) -> Result<(ChainComplex<T>, RefineReport)> {
    if !is_valid_topology(c) {
        return Err(Error::Argument("refinement requires a complex with valid topology".into()));
    }
    if !(opts.assign_threshold > 0.0) {
        return Err(Error::Argument("assignment threshold must be positive".into()));
    }
    let tau = T::lit(opts.assign_threshold);
    let mut r = Refiner {
        c: c.clone(),
        points,
        tau2: tau * tau,
        w_adj: T::lit(opts.weights.adjacent),
        opts,
        report: RefineReport::default(),
    };
    let rounds = opts.stage1_rounds + opts.stage2_rounds;
    r.report.residual_history.push(r.energy().as_f64());
    for round in 0..rounds {
        r.round(round, round >= opts.stage1_rounds);
        r.report.residual_history.push(r.energy().as_f64());
    }
    r.report.unconverted = r
        .c
        .patches
        .iter()
        .enumerate()
        .filter(|(_, f)| {
            f.exists && f.kind != PatchKind::BSpline && matches!(f.primitive, Some(Surface::BSpline(_)))
        })
        .map(|(i, _)| i)
        .collect();
    if rounds == 0 {
        r.report.assigned_points = r.assign().owner.iter().filter(|o| o.is_some()).count();
    }
    Ok((r.c, r.report))
}
