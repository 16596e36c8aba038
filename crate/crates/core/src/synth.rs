//! Procedural ground-truth complexes, point clouds and a corruption model
//! that turns a definite complex into soft predictions.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::complex::{BinaryMatrix, ChainComplex, Corner, Curve, CurveKind, ElementGroup, Patch, PatchKind};
use crate::error::{Error, Result};
use crate::extraction::{ProbabilisticComplex, SoftCorner, SoftCurve, SoftMatrix, SoftPatch};
use crate::geometry::{patch_triangles, CurveSamples, PatchSamples, CURVE_SAMPLES, DENSIFY, PATCH_GRID};
use crate::primitive::{CurvePrimitive, Frame, Surface};
use crate::scalar::{Scalar, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Cube,
    CappedCylinder,
    Sphere,
    LBracket,
    /// Right prism over a regular polygon with the given number of sides.
    Prism(usize),
}

impl Shape {
    /// One instance of every family, with a hexagonal prism.
    pub const FAMILIES: [Shape; 5] =
        [Shape::Cube, Shape::CappedCylinder, Shape::Sphere, Shape::LBracket, Shape::Prism(6)];
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Cube => f.write_str("cube"),
            Shape::CappedCylinder => f.write_str("capped_cylinder"),
            Shape::Sphere => f.write_str("sphere"),
            Shape::LBracket => f.write_str("l_bracket"),
            Shape::Prism(n) => write!(f, "prism{n}"),
        }
    }
}

impl FromStr for Shape {
    type Err = Error;

    /// Accepts `cube`, `capped_cylinder`, `sphere`, `l_bracket`, `prism6` or `prism:6`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cube" => Ok(Shape::Cube),
            "capped_cylinder" | "cylinder" => Ok(Shape::CappedCylinder),
            "sphere" => Ok(Shape::Sphere),
            "l_bracket" => Ok(Shape::LBracket),
            _ => {
                let n = s
                    .strip_prefix("prism")
                    .map(|r| r.trim_start_matches([':', '(']).trim_end_matches(')'))
                    .ok_or_else(|| Error::Argument(format!("unknown shape {s:?}")))?;
                let n: usize = n.parse().map_err(|_| Error::Argument(format!("bad prism size in {s:?}")))?;
                Ok(Shape::Prism(n))
            }
        }
    }
}

fn p3<T: Scalar>(x: f64, y: f64, z: f64) -> Vec3<T> {
    Vec3::new(T::lit(x), T::lit(y), T::lit(z))
}

fn lit<T: Scalar>(x: f64) -> T {
    T::lit(x)
}

fn line_curve<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> Curve<T> {
    let last = T::lit((CURVE_SAMPLES - 1) as f64);
    let pts = (0..CURVE_SAMPLES).map(|i| a + (b - a) * (T::lit(i as f64) / last)).collect();
    let samples = CurveSamples::new(pts, false).expect("sample count");
    Curve::new(CurveKind::Line, samples)
        .with_primitive(CurvePrimitive::Line { point: a, direction: (b - a).normalize() })
}

fn circle_curve<T: Scalar>(frame: Frame<T>, radius: T) -> Curve<T> {
    let prim = CurvePrimitive::Circle { frame, radius };
    let pts = (0..CURVE_SAMPLES).map(|i| prim.eval(lit(TAU * i as f64 / CURVE_SAMPLES as f64))).collect();
    Curve::new(CurveKind::Circle, CurveSamples::new(pts, true).expect("sample count")).with_primitive(prim)
}

/// Bilinear grid; `u` runs from `p00` to `p10`, `v` from `p00` to `p01`.
fn quad_grid<T: Scalar>(p00: Vec3<T>, p10: Vec3<T>, p01: Vec3<T>, p11: Vec3<T>) -> PatchSamples<T> {
    let last = T::lit((PATCH_GRID - 1) as f64);
    let mut g = Vec::with_capacity(PATCH_GRID * PATCH_GRID);
    for i in 0..PATCH_GRID {
        let s = T::lit(i as f64) / last;
        for j in 0..PATCH_GRID {
            let t = T::lit(j as f64) / last;
            let one = T::one();
            g.push(p00 * ((one - s) * (one - t)) + p10 * (s * (one - t)) + p01 * ((one - s) * t) + p11 * (s * t));
        }
    }
    PatchSamples::new(g, false).expect("grid size")
}

/// Star-shaped grid in polar form: `u` runs around the perimeter (closed)
/// and `v` scales each perimeter sample from `center` outward.
fn radial_grid<T: Scalar>(center: Vec3<T>, perimeter: &[Vec3<T>]) -> PatchSamples<T> {
    let last = T::lit((PATCH_GRID - 1) as f64);
    let mut g = Vec::with_capacity(PATCH_GRID * PATCH_GRID);
    for q in perimeter {
        for j in 0..PATCH_GRID {
            let s = T::lit(j as f64) / last;
            g.push(center + (q - center) * s);
        }
    }
    PatchSamples::new(g, true).expect("grid size")
}

/// `PATCH_GRID` points around a closed polygon. When the polygon has at most
/// that many vertices every vertex is a sample and the rest are spread over
/// the edges by length; otherwise samples are uniform in arc length.
fn polygon_perimeter(poly: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = poly.len();
    let len = |i: usize| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt()
    };
    let total: f64 = (0..n).map(len).sum();
    let lerp = |i: usize, t: f64| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
    };
    if n > PATCH_GRID {
        let mut out = Vec::with_capacity(PATCH_GRID);
        let mut edge = 0;
        let mut before = 0.0;
        for s in 0..PATCH_GRID {
            let target = total * s as f64 / PATCH_GRID as f64;
            while before + len(edge) < target {
                before += len(edge);
                edge += 1;
            }
            out.push(lerp(edge, (target - before) / len(edge)));
        }
        return out;
    }
    // Largest-remainder allocation of the extra samples.
    let extra = PATCH_GRID - n;
    let quota: Vec<f64> = (0..n).map(|i| extra as f64 * len(i) / total).collect();
    let mut alloc: Vec<usize> = quota.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| (quota[b] - quota[b].floor()).total_cmp(&(quota[a] - quota[a].floor())).then(a.cmp(&b)));
    let mut left = extra - alloc.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        alloc[i] += 1;
        left -= 1;
    }
    let mut out = Vec::with_capacity(PATCH_GRID);
    for i in 0..n {
        for k in 0..=alloc[i] {
            out.push(lerp(i, k as f64 / (alloc[i] + 1) as f64));
        }
    }
    out
}

fn plane_patch<T: Scalar>(samples: PatchSamples<T>, origin: Vec3<T>, normal: Vec3<T>, hint: Vec3<T>) -> Patch<T> {
    Patch::new(PatchKind::Plane, samples)
        .with_primitive(Surface::Plane { frame: Frame::from_axis_and_hint(origin, normal, hint) })
}

/// Extrudes a counter-clockwise polygon along `z`. `center` must see the
/// whole polygon (used for the radial cap grids of non-quadrilaterals).
fn extrusion<T: Scalar>(poly: &[(f64, f64)], z0: f64, z1: f64, center: (f64, f64)) -> Result<ChainComplex<T>> {
    let n = poly.len();
    let b = |i: usize| p3::<T>(poly[i % n].0, poly[i % n].1, z0);
    let t = |i: usize| p3::<T>(poly[i % n].0, poly[i % n].1, z1);

    let corners: Vec<_> = (0..n).map(|i| Corner::new(b(i))).chain((0..n).map(|i| Corner::new(t(i)))).collect();
    let mut curves = Vec::with_capacity(3 * n);
    curves.extend((0..n).map(|i| line_curve(b(i), b(i + 1))));
    curves.extend((0..n).map(|i| line_curve(t(i), t(i + 1))));
    curves.extend((0..n).map(|i| line_curve(b(i), t(i))));

    let mut patches = Vec::with_capacity(n + 2);
    for i in 0..n {
        let d = b(i + 1) - b(i);
        let normal = Vec3::new(d.y, -d.x, T::zero()).normalize();
        patches.push(plane_patch(quad_grid(b(i), b(i + 1), t(i), t(i + 1)), b(i), normal, d));
    }
    let down = p3::<T>(0.0, 0.0, -1.0);
    let up = p3::<T>(0.0, 0.0, 1.0);
    let xdir = p3::<T>(1.0, 0.0, 0.0);
    if n == 4 {
        patches.push(plane_patch(quad_grid(b(0), b(1), b(3), b(2)), b(0), down, xdir));
        patches.push(plane_patch(quad_grid(t(0), t(1), t(3), t(2)), t(0), up, xdir));
    } else {
        let per = polygon_perimeter(poly);
        let ring = |z: f64| per.iter().map(|&(x, y)| p3::<T>(x, y, z)).collect::<Vec<_>>();
        let c0 = p3::<T>(center.0, center.1, z0);
        let c1 = p3::<T>(center.0, center.1, z1);
        patches.push(plane_patch(radial_grid(c0, &ring(z0)), c0, down, xdir));
        patches.push(plane_patch(radial_grid(c1, &ring(z1)), c1, up, xdir));
    }

    let mut fe = BinaryMatrix::zeros(n + 2, 3 * n);
    let mut ev = BinaryMatrix::zeros(3 * n, 2 * n);
    let mut fv = BinaryMatrix::zeros(n + 2, 2 * n);
    for i in 0..n {
        let j = (i + 1) % n;
        for e in [i, n + i, 2 * n + i, 2 * n + j] {
            fe.set(i, e, true);
        }
        fe.set(n, i, true);
        fe.set(n + 1, n + i, true);
        ev.set(i, i, true);
        ev.set(i, j, true);
        ev.set(n + i, n + i, true);
        ev.set(n + i, n + j, true);
        ev.set(2 * n + i, i, true);
        ev.set(2 * n + i, n + i, true);
        for v in [i, j, n + i, n + j] {
            fv.set(i, v, true);
        }
        fv.set(n, i, true);
        fv.set(n + 1, n + i, true);
    }
    ChainComplex::new(corners, curves, patches, fe, ev, fv)
}

fn capped_cylinder<T: Scalar>() -> Result<ChainComplex<T>> {
    let (r, z0, z1) = (0.3, 0.2, 0.8);
    let bottom = Frame::from_axis_and_hint(p3::<T>(0.5, 0.5, z0), p3(0.0, 0.0, 1.0), p3(1.0, 0.0, 0.0));
    let top = Frame { origin: p3(0.5, 0.5, z1), ..bottom.clone() };
    let side = Surface::Cylinder { frame: bottom.clone(), radius: lit(r) };
    let last = (PATCH_GRID - 1) as f64;
    let mut grid = Vec::with_capacity(PATCH_GRID * PATCH_GRID);
    for i in 0..PATCH_GRID {
        for j in 0..PATCH_GRID {
            grid.push(side.eval(lit(TAU * i as f64 / PATCH_GRID as f64), lit((z1 - z0) * j as f64 / last)));
        }
    }
    let side_patch = Patch::new(PatchKind::Cylinder, PatchSamples::new(grid, true)?).with_primitive(side);
    let ring = |f: &Frame<T>| {
        (0..PATCH_GRID)
            .map(|i| {
                let a = lit::<T>(TAU * i as f64 / PATCH_GRID as f64);
                f.origin + (f.x * a.cos() + f.y * a.sin()) * lit::<T>(r)
            })
            .collect::<Vec<_>>()
    };
    let xdir = p3::<T>(1.0, 0.0, 0.0);
    let cap0 = plane_patch(radial_grid(bottom.origin, &ring(&bottom)), bottom.origin, p3(0.0, 0.0, -1.0), xdir);
    let cap1 = plane_patch(radial_grid(top.origin, &ring(&top)), top.origin, p3(0.0, 0.0, 1.0), xdir);
    let curves = vec![circle_curve(bottom, lit(r)), circle_curve(top, lit(r))];
    let fe = BinaryMatrix::from_entries(3, 2, [(0, 0), (0, 1), (1, 0), (2, 1)]);
    ChainComplex::new(
        vec![],
        curves,
        vec![side_patch, cap0, cap1],
        fe,
        BinaryMatrix::zeros(2, 0),
        BinaryMatrix::zeros(3, 0),
    )
}

fn sphere<T: Scalar>() -> Result<ChainComplex<T>> {
    let s = Surface::Sphere { frame: Frame::from_axis(p3(0.5, 0.5, 0.5), p3(0.0, 0.0, 1.0)), radius: lit(0.35) };
    let last = (PATCH_GRID - 1) as f64;
    let mut grid = Vec::with_capacity(PATCH_GRID * PATCH_GRID);
    for i in 0..PATCH_GRID {
        for j in 0..PATCH_GRID {
            let u = TAU * i as f64 / PATCH_GRID as f64;
            let v = -TAU / 4.0 + TAU / 2.0 * j as f64 / last;
            grid.push(s.eval(lit(u), lit(v)));
        }
    }
    let patch = Patch::new(PatchKind::Sphere, PatchSamples::new(grid, true)?).with_primitive(s);
    ChainComplex::new(
        vec![],
        vec![],
        vec![patch],
        BinaryMatrix::zeros(1, 0),
        BinaryMatrix::zeros(0, 0),
        BinaryMatrix::zeros(1, 0),
    )
}

/// Ground-truth complex with exact analytic geometry inside the unit cube.
pub fn generate_gt<T: Scalar>(shape: Shape) -> Result<ChainComplex<T>> {
    match shape {
        Shape::Cube => extrusion(&[(0.1, 0.1), (0.9, 0.1), (0.9, 0.9), (0.1, 0.9)], 0.1, 0.9, (0.5, 0.5)),
        Shape::CappedCylinder => capped_cylinder(),
        Shape::Sphere => sphere(),
        Shape::LBracket => extrusion(
            &[(0.1, 0.1), (0.9, 0.1), (0.9, 0.4), (0.4, 0.4), (0.4, 0.9), (0.1, 0.9)],
            0.3,
            0.7,
            (0.25, 0.25),
        ),
        Shape::Prism(n) => {
            if n < 3 {
                return Err(Error::Argument(format!("a prism needs at least 3 sides, got {n}")));
            }
            let poly: Vec<_> = (0..n)
                .map(|i| {
                    let a = TAU * i as f64 / n as f64;
                    (0.5 + 0.35 * a.cos(), 0.5 + 0.35 * a.sin())
                })
                .collect();
            extrusion(&poly, 0.15, 0.85, (0.5, 0.5))
        }
    }
}

/// Points with `normal · p > offset` are culled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HalfSpace<T: Scalar> {
    pub normal: Vec3<T>,
    pub offset: T,
}

impl<T: Scalar> HalfSpace<T> {
    pub fn contains(&self, p: &Vec3<T>) -> bool {
        self.normal.dot(p) > self.offset
    }
}

/// Area-weighted samples on the patches with Gaussian offsets of standard
/// deviation `sigma` along the surface normal. Points inside any mask
/// half-space are removed, so fewer than `n` points may be returned.
pub fn sample_point_cloud<T: Scalar>(
    c: &ChainComplex<T>,
    n: usize,
    sigma: f64,
    masks: &[HalfSpace<T>],
    seed: u64,
) -> Vec<Vec3<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tris: Vec<(usize, [Vec3<T>; 3])> = Vec::new();
    for (i, p) in c.patches.iter().enumerate() {
        tris.extend(patch_triangles(&p.samples, DENSIFY).into_iter().map(|t| (i, t)));
    }
    let areas: Vec<f64> = tris.iter().map(|(_, t)| (t[1] - t[0]).cross(&(t[2] - t[0])).norm().as_f64() * 0.5).collect();
    let total: f64 = areas.iter().sum();
    if total <= 0.0 || n == 0 {
        return vec![];
    }
    let mut cdf = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a / total;
        cdf.push(acc);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let r: f64 = rng.random();
        let ti = cdf.partition_point(|&x| x < r).min(tris.len() - 1);
        let (pi, t) = &tris[ti];
        let (mut a, mut b): (f64, f64) = (rng.random(), rng.random());
        if a + b > 1.0 {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        let q = t[0] + (t[1] - t[0]) * T::lit(a) + (t[2] - t[0]) * T::lit(b);
        let noise: f64 = StandardNormal.sample(&mut rng);
        let (foot, normal) = match &c.patches[*pi].primitive {
            Some(s) => {
                let (u, v, foot, _) = s.project(&q);
                (foot, s.normal(u, v))
            }
            None => (q, (t[1] - t[0]).cross(&(t[2] - t[0])).normalize()),
        };
        let p = foot + normal * T::lit(noise * sigma);
        if !masks.iter().any(|m| m.contains(&p)) {
            out.push(p);
        }
    }
    out
}

/// Strength of the synthetic corruption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionParams {
    /// Standard deviation of per-coordinate sample jitter.
    pub sigma_g: f64,
    /// Blur of validness, type, openness and u-closedness probabilities.
    pub validness_blur: f64,
    /// Blur of adjacency probabilities.
    pub topology_blur: f64,
    /// Near-duplicate copies of real elements.
    pub spurious: usize,
    /// Random elements away from the shape with validness near 0.4.
    pub outliers: usize,
    pub seed: u64,
}

impl CorruptionParams {
    /// No corruption at all.
    pub fn none() -> Self {
        CorruptionParams { sigma_g: 0.0, validness_blur: 0.0, topology_blur: 0.0, spurious: 0, outliers: 0, seed: 0 }
    }
}

impl Default for CorruptionParams {
    fn default() -> Self {
        CorruptionParams { sigma_g: 0.005, validness_blur: 0.1, topology_blur: 0.1, spurious: 0, outliers: 0, seed: 0 }
    }
}

/// Elements injected by [`corrupt_with_trace`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionTrace {
    /// `(group, index of the copy, index of its source)`.
    pub duplicates: Vec<(ElementGroup, usize, usize)>,
    pub outliers: Vec<(ElementGroup, usize)>,
}

struct Corruptor {
    rng: ChaCha8Rng,
}

impl Corruptor {
    fn blur<T: Scalar>(&mut self, truth: bool, beta: f64) -> T {
        if beta == 0.0 {
            return if truth { T::one() } else { T::zero() };
        }
        let u: f64 = self.rng.random();
        T::lit(if truth { 1.0 - beta * u } else { beta * u })
    }

    fn uniform<T: Scalar>(&mut self, lo: f64, hi: f64) -> T {
        T::lit(self.rng.random_range(lo..hi))
    }

    fn one_hot<T: Scalar, const N: usize>(&mut self, hot: usize, beta: f64) -> [T; N] {
        let mut p = [T::zero(); N];
        for (i, x) in p.iter_mut().enumerate() {
            *x = self.blur(i == hot, beta);
        }
        let s = p.iter().fold(T::zero(), |a, &b| a + b);
        p.map(|x| x / s)
    }

    fn jitter<T: Scalar>(&mut self, p: &Vec3<T>, sigma: f64) -> Vec3<T> {
        if sigma == 0.0 {
            return *p;
        }
        let n = Normal::new(0.0, sigma).expect("finite sigma");
        p + Vec3::new(T::lit(n.sample(&mut self.rng)), T::lit(n.sample(&mut self.rng)), T::lit(n.sample(&mut self.rng)))
    }

    fn jitter_all<T: Scalar>(&mut self, pts: &[Vec3<T>], sigma: f64) -> Vec<Vec3<T>> {
        pts.iter().map(|p| self.jitter(p, sigma)).collect()
    }

    fn blur_matrix<T: Scalar>(&mut self, m: &BinaryMatrix, beta: f64) -> SoftMatrix<T> {
        let mut s = SoftMatrix::zeros(m.rows(), m.cols());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = self.blur(m.get(i, j), beta);
                s.set(i, j, v);
            }
        }
        s
    }
}

/// Soft predictions derived from `c`; see [`corrupt_with_trace`].
pub fn corrupt<T: Scalar>(c: &ChainComplex<T>, params: &CorruptionParams) -> ProbabilisticComplex<T> {
    corrupt_with_trace(c, params).0
}

/// Jitters geometry, blurs every probability (true entries drawn from
/// `[1-β, 1]`, false ones from `[0, β]`) and appends injected elements:
/// near-duplicates with validness in `[0.55, 0.75]` that copy their source's
/// adjacency, and outliers with validness in `[0.35, 0.45]` placed away from
/// the shape. Deterministic in `params.seed`.
pub fn corrupt_with_trace<T: Scalar>(
    c: &ChainComplex<T>,
    params: &CorruptionParams,
) -> (ProbabilisticComplex<T>, CorruptionTrace) {
    let mut r = Corruptor { rng: ChaCha8Rng::seed_from_u64(params.seed) };
    let (sg, bv, bt) = (params.sigma_g, params.validness_blur, params.topology_blur);

    let mut corners = Vec::with_capacity(c.num_corners());
    for v in &c.corners {
        let validness = r.blur(v.exists, bv);
        corners.push(SoftCorner { validness, point: r.jitter(&v.point, sg) });
    }
    let mut curves = Vec::with_capacity(c.num_curves());
    for e in &c.curves {
        let validness = r.blur(e.exists, bv);
        let openness = r.blur(e.is_open(), bv);
        let type_probs = r.one_hot(e.kind.index(), bv);
        let pts = r.jitter_all(e.samples.points(), sg);
        let samples = CurveSamples::new(pts, e.samples.is_closed()).expect("sample count");
        curves.push(SoftCurve { validness, openness, type_probs, samples });
    }
    let mut patches = Vec::with_capacity(c.num_patches());
    for f in &c.patches {
        let validness = r.blur(f.exists, bv);
        let u_closed = r.blur(f.is_u_closed(), bv);
        let type_probs = r.one_hot(f.kind.index(), bv);
        let pts = r.jitter_all(f.samples.points(), sg);
        let samples = PatchSamples::new(pts, f.is_u_closed()).expect("grid size");
        patches.push(SoftPatch { validness, u_closed, type_probs, samples });
    }
    let fe = r.blur_matrix(&c.fe, bt);
    let ev = r.blur_matrix(&c.ev, bt);
    let fv = r.blur_matrix(&c.fv, bt);
    let mut p = ProbabilisticComplex { corners, curves, patches, fe, ev, fv };
    let mut trace = CorruptionTrace::default();

    let dup_sigma = sg.max(0.005);
    let total = c.num_corners() + c.num_curves() + c.num_patches();
    for _ in 0..params.spurious {
        if total == 0 {
            break;
        }
        let pick = r.rng.random_range(0..total);
        let validness = r.uniform(0.55, 0.75);
        if pick < c.num_patches() {
            let src = pick;
            let mut f = p.patches[src].clone();
            f.validness = validness;
            let pts = r.jitter_all(f.samples.points(), dup_sigma);
            f.samples = PatchSamples::new(pts, f.samples.is_u_closed()).expect("grid size");
            p.patches.push(f);
            p.fe.push_row(Some(src));
            p.fv.push_row(Some(src));
            trace.duplicates.push((ElementGroup::Patch, p.patches.len() - 1, src));
        } else if pick < c.num_patches() + c.num_curves() {
            let src = pick - c.num_patches();
            let mut e = p.curves[src].clone();
            e.validness = validness;
            let pts = r.jitter_all(e.samples.points(), dup_sigma);
            e.samples = CurveSamples::new(pts, e.samples.is_closed()).expect("sample count");
            p.curves.push(e);
            p.fe.push_col(Some(src));
            p.ev.push_row(Some(src));
            trace.duplicates.push((ElementGroup::Curve, p.curves.len() - 1, src));
        } else {
            let src = pick - c.num_patches() - c.num_curves();
            let point = r.jitter(&p.corners[src].point, dup_sigma);
            p.corners.push(SoftCorner { validness, point });
            p.ev.push_col(Some(src));
            p.fv.push_col(Some(src));
            trace.duplicates.push((ElementGroup::Corner, p.corners.len() - 1, src));
        }
    }

    let all_points: Vec<Vec3<T>> = c
        .corners
        .iter()
        .map(|v| v.point)
        .chain(c.curves.iter().flat_map(|e| e.samples.points().iter().copied()))
        .chain(c.patches.iter().flat_map(|f| f.samples.points().iter().copied()))
        .collect();
    for _ in 0..params.outliers {
        // A location at least 0.15 from every sample, or the best of 200 tries.
        let mut best = (p3::<T>(0.5, 0.5, 0.5), -1.0);
        for _ in 0..200 {
            let q = p3::<T>(r.rng.random_range(0.05..0.95), r.rng.random_range(0.05..0.95), r.rng.random_range(0.05..0.95));
            let d = all_points.iter().map(|s| (s - q).norm().as_f64()).fold(f64::INFINITY, f64::min);
            if d > best.1 {
                best = (q, d);
            }
            if d >= 0.15 {
                break;
            }
        }
        let q = best.0;
        let validness = r.uniform(0.35, 0.45);
        let group = r.rng.random_range(0..3);
        let h = T::lit(0.05);
        if group == 0 {
            p.corners.push(SoftCorner { validness, point: q });
            p.ev.push_col(None);
            p.fv.push_col(None);
            let k = p.corners.len() - 1;
            for j in 0..p.curves.len() {
                let x = r.blur(false, bt);
                p.ev.set(j, k, x);
            }
            for i in 0..p.patches.len() {
                let x = r.blur(false, bt);
                p.fv.set(i, k, x);
            }
            trace.outliers.push((ElementGroup::Corner, k));
        } else if group == 1 {
            let a = q - Vec3::new(h, T::zero(), T::zero());
            let b = q + Vec3::new(h, T::zero(), T::zero());
            let line = line_curve(a, b);
            let pts = r.jitter_all(line.samples.points(), sg);
            let openness = r.blur(true, bv);
            let type_probs = r.one_hot(CurveKind::Line.index(), bv);
            let samples = CurveSamples::new(pts, false).expect("sample count");
            p.curves.push(SoftCurve { validness, openness, type_probs, samples });
            p.fe.push_col(None);
            p.ev.push_row(None);
            let j = p.curves.len() - 1;
            for i in 0..p.patches.len() {
                let x = r.blur(false, bt);
                p.fe.set(i, j, x);
            }
            for k in 0..p.corners.len() {
                let x = r.blur(false, bt);
                p.ev.set(j, k, x);
            }
            trace.outliers.push((ElementGroup::Curve, j));
        } else {
            let dx = Vec3::new(h, T::zero(), T::zero());
            let dy = Vec3::new(T::zero(), h, T::zero());
            let grid = quad_grid(q - dx - dy, q + dx - dy, q - dx + dy, q + dx + dy);
            let pts = r.jitter_all(grid.points(), sg);
            let u_closed = r.blur(false, bv);
            let type_probs = r.one_hot(PatchKind::Plane.index(), bv);
            let samples = PatchSamples::new(pts, false).expect("grid size");
            p.patches.push(SoftPatch { validness, u_closed, type_probs, samples });
            p.fe.push_row(None);
            p.fv.push_row(None);
            let i = p.patches.len() - 1;
            for j in 0..p.curves.len() {
                let x = r.blur(false, bt);
                p.fe.set(i, j, x);
            }
            for k in 0..p.corners.len() {
                let x = r.blur(false, bt);
                p.fv.set(i, k, x);
            }
            trace.outliers.push((ElementGroup::Patch, i));
        }
    }
    (p, trace)
}
