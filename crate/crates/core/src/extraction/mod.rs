//! From soft predictions to a definite chain complex: probability
//! combination, duplicate suppression, proximity scores and the binary
//! program that enforces the manifold, endpoint and closure equations.

pub mod ilp;
pub mod lp_format;
mod soft;

use serde::{Deserialize, Serialize};

use crate::complex::{BinaryMatrix, ChainComplex, Corner, Curve, Patch};
use crate::error::{Error, Result};
use crate::geometry::{chamfer_distance, fitness_score_with, proximity, CurveSamples, FITNESS_EPSILON};
use crate::scalar::{Scalar, Vec3};

pub use ilp::{solve_ilp, solve_ilp_with_start, Cmp, IlpModel, IlpSolution, SolveMethod, SolveOptions, VarKind};
pub use soft::{argmax, ProbabilisticComplex, SoftCorner, SoftCurve, SoftMatrix, SoftPatch};

/// Multiplies conditional adjacency probabilities by the validness of both ends.
pub fn combine_probabilities<T: Scalar>(p: &ProbabilisticComplex<T>) -> ProbabilisticComplex<T> {
    let mut out = p.clone();
    for i in 0..p.num_patches() {
        for j in 0..p.num_curves() {
            out.fe.set(i, j, p.fe.get(i, j) * p.patches[i].validness * p.curves[j].validness);
        }
        for k in 0..p.num_corners() {
            out.fv.set(i, k, p.fv.get(i, k) * p.patches[i].validness * p.corners[k].validness);
        }
    }
    for j in 0..p.num_curves() {
        for k in 0..p.num_corners() {
            out.ev.set(j, k, p.ev.get(j, k) * p.curves[j].validness * p.corners[k].validness);
        }
    }
    out
}

/// Which elements [`nms`] suppressed, by group.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suppressed {
    pub corners: Vec<usize>,
    pub curves: Vec<usize>,
    pub patches: Vec<usize>,
}

impl Suppressed {
    pub fn total(&self) -> usize {
        self.corners.len() + self.curves.len() + self.patches.len()
    }
}

fn retention_order<T: Scalar>(validness: &[T]) -> Vec<usize> {
    let half = T::lit(0.5);
    let mut order: Vec<usize> = (0..validness.len()).filter(|&i| validness[i] >= half).collect();
    order.sort_by(|&a, &b| validness[b].partial_cmp(&validness[a]).unwrap().then(a.cmp(&b)));
    order
}

/// Greedy duplicate suppression within one element group.
fn suppress_group<T: Scalar>(
    validness: &[T],
    same_label: impl Fn(usize, usize) -> bool,
    topology: impl Fn(usize) -> Vec<bool>,
    points: impl Fn(usize) -> Vec<Vec3<T>>,
    threshold: T,
) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for q in retention_order(validness) {
        let tq = topology(q);
        let pq = points(q);
        let dup = kept.iter().any(|&r| {
            same_label(q, r)
                && topology(r) == tq
                && chamfer_distance(&pq, &points(r)).is_ok_and(|d| d <= threshold)
        });
        if dup {
            dropped.push(q);
        } else {
            kept.push(q);
        }
    }
    dropped
}

/// Removes near-duplicate elements: a valid element whose type, rounded
/// adjacency and geometry (chamfer distance within `threshold`) match an
/// already retained element gets zero validness and zeroed adjacency.
///
/// Elements are visited in order of decreasing validness, lowest index
/// first among equals. Patches are processed before curves and curves before
/// corners; suppressed mass is discarded.
pub fn nms<T: Scalar>(p: &ProbabilisticComplex<T>, threshold: T) -> (ProbabilisticComplex<T>, Suppressed) {
    let mut out = p.clone();
    let mut sup = Suppressed::default();

    let validness: Vec<T> = out.patches.iter().map(|f| f.validness).collect();
    let dropped = {
        let o = &out;
        suppress_group(
            &validness,
            |a, b| o.patches[a].kind() == o.patches[b].kind(),
            |i| [o.fe.rounded_row(i), o.fv.rounded_row(i)].concat(),
            |i| o.patches[i].samples.points().to_vec(),
            threshold,
        )
    };
    for &i in &dropped {
        out.patches[i].validness = T::zero();
        out.fe.zero_row(i);
        out.fv.zero_row(i);
    }
    sup.patches = dropped;

    let validness: Vec<T> = out.curves.iter().map(|e| e.validness).collect();
    let dropped = {
        let o = &out;
        suppress_group(
            &validness,
            |a, b| o.curves[a].kind() == o.curves[b].kind(),
            |j| [o.fe.rounded_col(j), o.ev.rounded_row(j)].concat(),
            |j| o.curves[j].samples.points().to_vec(),
            threshold,
        )
    };
    for &j in &dropped {
        out.curves[j].validness = T::zero();
        out.fe.zero_col(j);
        out.ev.zero_row(j);
    }
    sup.curves = dropped;

    let validness: Vec<T> = out.corners.iter().map(|v| v.validness).collect();
    let dropped = {
        let o = &out;
        suppress_group(
            &validness,
            |_, _| true,
            |k| [o.ev.rounded_col(k), o.fv.rounded_col(k)].concat(),
            |k| vec![o.corners[k].point],
            threshold,
        )
    };
    for &k in &dropped {
        out.corners[k].validness = T::zero();
        out.ev.zero_col(k);
        out.fv.zero_col(k);
    }
    sup.corners = dropped;

    (out, sup)
}

/// Geometric adjacency likelihoods `S_FE`, `S_EV`, `S_FV`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ProximityMatrices<T: Scalar> {
    pub fe: SoftMatrix<T>,
    pub ev: SoftMatrix<T>,
    pub fv: SoftMatrix<T>,
}

/// Fitness of the mean-min distance from each lower-order element to each
/// higher-order one.
pub fn proximity_matrices<T: Scalar>(p: &ProbabilisticComplex<T>, epsilon: T) -> ProximityMatrices<T> {
    let (nf, ne, nv) = (p.num_patches(), p.num_curves(), p.num_corners());
    let s = |d: T| fitness_score_with(d, epsilon);
    let mut fe = SoftMatrix::zeros(nf, ne);
    let mut fv = SoftMatrix::zeros(nf, nv);
    let mut ev = SoftMatrix::zeros(ne, nv);
    for (i, f) in p.patches.iter().enumerate() {
        let grid = f.samples.points();
        for (j, e) in p.curves.iter().enumerate() {
            fe.set(i, j, s(proximity(e.samples.points(), grid)));
        }
        for (k, v) in p.corners.iter().enumerate() {
            fv.set(i, k, s(proximity(&[v.point], grid)));
        }
    }
    for (j, e) in p.curves.iter().enumerate() {
        for (k, v) in p.corners.iter().enumerate() {
            ev.set(j, k, s(proximity(&[v.point], e.samples.points())));
        }
    }
    ProximityMatrices { fe, ev, fv }
}

/// Objective weights of the extraction program.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlpWeights {
    /// Weight of the prediction term; the proximity term gets `1 - w`.
    pub w: f64,
    /// Weight of element and openness variables.
    pub unary: f64,
    /// Weight of adjacency variables.
    pub binary: f64,
    /// Per-element penalty breaking ties toward fewer elements.
    pub tie_break: f64,
}

impl Default for IlpWeights {
    fn default() -> Self {
        IlpWeights { w: 0.5, unary: 10.0, binary: 1.0, tie_break: 1e-7 }
    }
}

/// An extraction program together with the soft-complex indices of its candidates.
#[derive(Clone, Debug)]
pub struct ExtractionModel {
    pub model: IlpModel,
    pub faces: Vec<usize>,
    pub edges: Vec<usize>,
    pub verts: Vec<usize>,
}

fn candidates<T: Scalar>(validness: impl Iterator<Item = T>, cutoff: f64) -> Vec<usize> {
    validness.enumerate().filter(|(_, v)| v.as_f64() >= cutoff).map(|(i, _)| i).collect()
}

/// Builds the binary program over the elements whose raw validness reaches
/// `cutoff`. `p` must hold combined probabilities (validness is unchanged by
/// combination).
pub fn build_ilp<T: Scalar>(
    p: &ProbabilisticComplex<T>,
    s: &ProximityMatrices<T>,
    weights: &IlpWeights,
    cutoff: f64,
) -> Result<ExtractionModel> {
    let faces = candidates(p.patches.iter().map(|f| f.validness), cutoff);
    let edges = candidates(p.curves.iter().map(|e| e.validness), cutoff);
    let verts = candidates(p.corners.iter().map(|v| v.validness), cutoff);
    if faces.is_empty() && edges.is_empty() && verts.is_empty() {
        return Err(Error::EmptyCandidates { cutoff });
    }
    let (nf, ne, nv) = (faces.len(), edges.len(), verts.len());
    let IlpWeights { w, unary, binary, tie_break } = *weights;
    let topo = |x: T, wx: f64| w * wx * (2.0 * x.as_f64() - 1.0);
    let geom = |x: T, wx: f64| (1.0 - w) * wx * (2.0 * x.as_f64() - 1.0);

    let mut m = IlpModel::new();
    let f: Vec<usize> = (0..nf)
        .map(|a| m.add_var_with_tie(VarKind::F(a), topo(p.patches[faces[a]].validness, unary), -tie_break))
        .collect();
    let e: Vec<usize> = (0..ne)
        .map(|b| m.add_var_with_tie(VarKind::E(b), topo(p.curves[edges[b]].validness, unary), -tie_break))
        .collect();
    let v: Vec<usize> = (0..nv)
        .map(|c| m.add_var_with_tie(VarKind::V(c), topo(p.corners[verts[c]].validness, unary), -tie_break))
        .collect();
    let o: Vec<usize> =
        (0..ne).map(|b| m.add_var(VarKind::O(b), topo(p.curves[edges[b]].openness, unary))).collect();

    let mut fe = vec![vec![0; ne]; nf];
    for a in 0..nf {
        for b in 0..ne {
            let (i, j) = (faces[a], edges[b]);
            fe[a][b] = m.add_var(VarKind::FE(a, b), topo(p.fe.get(i, j), binary) + geom(s.fe.get(i, j), binary));
        }
    }
    let mut ev = vec![vec![0; nv]; ne];
    for b in 0..ne {
        for c in 0..nv {
            let (j, k) = (edges[b], verts[c]);
            ev[b][c] = m.add_var(VarKind::EV(b, c), topo(p.ev.get(j, k), binary) + geom(s.ev.get(j, k), binary));
        }
    }
    let mut fv = vec![vec![0; nv]; nf];
    for a in 0..nf {
        for c in 0..nv {
            let (i, k) = (faces[a], verts[c]);
            fv[a][c] = m.add_var(VarKind::FV(a, c), topo(p.fv.get(i, k), binary) + geom(s.fv.get(i, k), binary));
        }
    }
    let y: Vec<usize> = (0..ne).map(|b| m.add_var(VarKind::Y(b), 0.0)).collect();

    // Each existing curve borders exactly two patches.
    for b in 0..ne {
        let mut t: Vec<_> = (0..nf).map(|a| (fe[a][b], 1.0)).collect();
        t.push((e[b], -2.0));
        m.add_constraint(t, Cmp::Eq, 0.0);
    }
    // Open curves have two endpoints, closed ones none: Y = E·O.
    for b in 0..ne {
        m.add_constraint(vec![(y[b], 1.0), (e[b], -1.0)], Cmp::Le, 0.0);
        m.add_constraint(vec![(y[b], 1.0), (o[b], -1.0)], Cmp::Le, 0.0);
        m.add_constraint(vec![(y[b], 1.0), (e[b], -1.0), (o[b], -1.0)], Cmp::Ge, -1.0);
        let mut t: Vec<_> = (0..nv).map(|c| (ev[b][c], 1.0)).collect();
        t.push((y[b], -2.0));
        m.add_constraint(t, Cmp::Eq, 0.0);
    }
    // Boundary loops close: Σ_j FE[i,j]·EV[j,k] = 2 FV[i,k], with Z = FE·EV.
    for a in 0..nf {
        for c in 0..nv {
            let mut sum = Vec::with_capacity(ne + 1);
            for b in 0..ne {
                let z = m.add_var(VarKind::Z(a, b, c), 0.0);
                m.add_constraint(vec![(z, 1.0), (fe[a][b], -1.0)], Cmp::Le, 0.0);
                m.add_constraint(vec![(z, 1.0), (ev[b][c], -1.0)], Cmp::Le, 0.0);
                m.add_constraint(vec![(z, 1.0), (fe[a][b], -1.0), (ev[b][c], -1.0)], Cmp::Ge, -1.0);
                sum.push((z, 1.0));
            }
            sum.push((fv[a][c], -2.0));
            m.add_constraint(sum, Cmp::Eq, 0.0);
        }
    }
    // Existence dependencies.
    for a in 0..nf {
        for b in 0..ne {
            m.add_constraint(vec![(fe[a][b], 1.0), (f[a], -1.0)], Cmp::Le, 0.0);
        }
        if !p.patches[faces[a]].is_u_closed() {
            let mut t: Vec<_> = (0..ne).map(|b| (fe[a][b], -1.0)).collect();
            t.push((f[a], 1.0));
            m.add_constraint(t, Cmp::Le, 0.0);
        }
    }
    for c in 0..nv {
        for b in 0..ne {
            m.add_constraint(vec![(ev[b][c], 1.0), (v[c], -1.0)], Cmp::Le, 0.0);
        }
        let mut t: Vec<_> = (0..ne).map(|b| (ev[b][c], -1.0)).collect();
        t.push((v[c], 1.0));
        m.add_constraint(t, Cmp::Le, 0.0);
    }
    Ok(ExtractionModel { model: m, faces, edges, verts })
}

/// A feasible assignment of an extraction program, built greedily: every
/// variable with positive objective is switched on, then elements and
/// incidences that break a constraint are dropped until none is broken.
/// `u_closed[a]` tells whether candidate patch `a` may have no boundary.
pub fn greedy_assignment(em: &ExtractionModel, u_closed: &[bool]) -> Vec<bool> {
    let m = &em.model;
    let (nf, ne, nv) = (em.faces.len(), em.edges.len(), em.verts.len());
    let obj = |k: VarKind| m.var(k).map_or(f64::NEG_INFINITY, |i| m.vars[i].objective);
    let pos = |k: VarKind| obj(k) > 0.0;

    let mut f: Vec<bool> = (0..nf).map(|a| pos(VarKind::F(a))).collect();
    let mut e: Vec<bool> = (0..ne).map(|b| pos(VarKind::E(b))).collect();
    let mut v: Vec<bool> = (0..nv).map(|c| pos(VarKind::V(c))).collect();
    let mut open = vec![false; ne];
    let mut fe: Vec<Vec<bool>> =
        (0..nf).map(|a| (0..ne).map(|b| f[a] && e[b] && pos(VarKind::FE(a, b))).collect()).collect();
    let mut ev: Vec<Vec<bool>> =
        (0..ne).map(|b| (0..nv).map(|c| e[b] && v[c] && pos(VarKind::EV(b, c))).collect()).collect();

    // Keeps the two best-scoring members of `on`, or none if fewer than two.
    let keep_two = |on: Vec<usize>, score: &dyn Fn(usize) -> f64| -> Vec<usize> {
        let mut on = on;
        on.sort_by(|&x, &y| score(y).total_cmp(&score(x)).then(x.cmp(&y)));
        on.truncate(2);
        on
    };

    let mut changed = true;
    while changed {
        changed = false;
        for b in 0..ne {
            if !e[b] {
                continue;
            }
            let on: Vec<usize> = (0..nf).filter(|&a| fe[a][b]).collect();
            let n_on = on.len();
            let kept = keep_two(on, &|a| obj(VarKind::FE(a, b)));
            if kept.len() < 2 {
                e[b] = false;
                changed = true;
                continue;
            }
            if n_on > 2 {
                (0..nf).for_each(|a| fe[a][b] = kept.contains(&a));
                changed = true;
            }
        }
        for b in 0..ne {
            if !e[b] {
                for a in 0..nf {
                    changed |= std::mem::take(&mut fe[a][b]);
                }
                for c in 0..nv {
                    changed |= std::mem::take(&mut ev[b][c]);
                }
                continue;
            }
            let on: Vec<usize> = (0..nv).filter(|&c| ev[b][c]).collect();
            if on.len() == 1 {
                ev[b][on[0]] = false;
                changed = true;
            } else if on.len() > 2 {
                let kept = keep_two(on, &|c| obj(VarKind::EV(b, c)));
                (0..nv).for_each(|c| ev[b][c] = kept.contains(&c));
                changed = true;
            }
            open[b] = ev[b].iter().any(|&x| x);
        }
        for c in 0..nv {
            if v[c] && !(0..ne).any(|b| ev[b][c]) {
                v[c] = false;
                changed = true;
            }
            if !v[c] {
                for b in 0..ne {
                    changed |= std::mem::take(&mut ev[b][c]);
                }
            }
        }
        for a in 0..nf {
            if f[a] && !u_closed[a] && !fe[a].iter().any(|&x| x) {
                f[a] = false;
                changed = true;
            }
            if !f[a] {
                for b in 0..ne {
                    changed |= std::mem::take(&mut fe[a][b]);
                }
            }
        }
        // Boundary loops: a face meets a corner through zero or two of its curves.
        for a in 0..nf {
            for c in 0..nv {
                let through: Vec<usize> = (0..ne).filter(|&b| fe[a][b] && ev[b][c]).collect();
                if through.is_empty() || through.len() == 2 {
                    continue;
                }
                let worst = through.iter().copied().min_by(|&x, &y| obj(VarKind::E(x)).total_cmp(&obj(VarKind::E(y))));
                if let Some(b) = worst {
                    e[b] = false;
                    changed = true;
                }
            }
        }
    }

    let mut x = vec![false; m.num_vars()];
    let mut set = |k: VarKind, val: bool| {
        if let Some(i) = m.var(k) {
            x[i] = val;
        }
    };
    for a in 0..nf {
        set(VarKind::F(a), f[a]);
        for b in 0..ne {
            set(VarKind::FE(a, b), fe[a][b]);
            for c in 0..nv {
                set(VarKind::Z(a, b, c), fe[a][b] && ev[b][c]);
            }
        }
        for c in 0..nv {
            set(VarKind::FV(a, c), (0..ne).any(|b| fe[a][b] && ev[b][c]));
        }
    }
    for b in 0..ne {
        set(VarKind::E(b), e[b]);
        set(VarKind::O(b), open[b]);
        set(VarKind::Y(b), e[b] && open[b]);
        for c in 0..nv {
            set(VarKind::EV(b, c), ev[b][c]);
        }
    }
    for c in 0..nv {
        set(VarKind::V(c), v[c]);
    }
    x
}

/// Tunables of [`extract_complex`].
#[derive(Clone, Debug)]
pub struct ExtractOptions {
    pub cutoff: f64,
    /// Cutoff tried once more when nothing survives `cutoff`.
    pub retry_cutoff: Option<f64>,
    pub nms_threshold: f64,
    pub epsilon: f64,
    pub weights: IlpWeights,
    pub solve: SolveOptions,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            cutoff: 0.3,
            retry_cutoff: Some(0.1),
            nms_threshold: 0.05,
            epsilon: FITNESS_EPSILON,
            weights: IlpWeights::default(),
            solve: SolveOptions::default(),
        }
    }
}

/// Result of [`extract_complex`] with bookkeeping for reports.
#[derive(Clone, Debug)]
pub struct Extraction<T: Scalar> {
    pub complex: ChainComplex<T>,
    pub solution: IlpSolution,
    /// Soft-complex indices of the surviving patches, curves and corners.
    pub faces: Vec<usize>,
    pub edges: Vec<usize>,
    pub verts: Vec<usize>,
    pub suppressed: Suppressed,
    /// Cutoff that produced the result.
    pub cutoff: f64,
    pub num_vars: usize,
    pub num_constraints: usize,
}

/// Assembles the complex selected by a solution of `em`.
pub fn assemble<T: Scalar>(
    p: &ProbabilisticComplex<T>,
    em: &ExtractionModel,
    sol: &IlpSolution,
) -> Result<(ChainComplex<T>, [Vec<usize>; 3])> {
    let m = &em.model;
    let on = |k: VarKind| sol.value(m, k);
    let fa: Vec<usize> = (0..em.faces.len()).filter(|&a| on(VarKind::F(a))).collect();
    let eb: Vec<usize> = (0..em.edges.len()).filter(|&b| on(VarKind::E(b))).collect();
    let vc: Vec<usize> = (0..em.verts.len()).filter(|&c| on(VarKind::V(c))).collect();

    let corners = vc.iter().map(|&c| Corner::new(p.corners[em.verts[c]].point)).collect();
    let curves = eb
        .iter()
        .map(|&b| {
            let src = &p.curves[em.edges[b]];
            let closed = !on(VarKind::O(b));
            let samples = CurveSamples::new(src.samples.points().to_vec(), closed)?;
            Ok(Curve::new(src.kind(), samples))
        })
        .collect::<Result<Vec<_>>>()?;
    let patches = fa
        .iter()
        .map(|&a| {
            let src = &p.patches[em.faces[a]];
            let mut samples = src.samples.clone();
            samples.set_u_closed(src.is_u_closed());
            Patch::new(src.kind(), samples)
        })
        .collect();
    let pick = |rows: &[usize], cols: &[usize], f: &dyn Fn(usize, usize) -> VarKind| {
        let mut b = BinaryMatrix::zeros(rows.len(), cols.len());
        for (r, &i) in rows.iter().enumerate() {
            for (c, &j) in cols.iter().enumerate() {
                b.set(r, c, on(f(i, j)));
            }
        }
        b
    };
    let fe = pick(&fa, &eb, &|i, j| VarKind::FE(i, j));
    let ev = pick(&eb, &vc, &|i, j| VarKind::EV(i, j));
    let fv = pick(&fa, &vc, &|i, j| VarKind::FV(i, j));
    let complex = ChainComplex::new(corners, curves, patches, fe, ev, fv)?;
    let to_orig = |sel: &[usize], map: &[usize]| sel.iter().map(|&x| map[x]).collect::<Vec<_>>();
    Ok((complex, [to_orig(&fa, &em.faces), to_orig(&eb, &em.edges), to_orig(&vc, &em.verts)]))
}

/// Runs suppression, combination, proximity scoring, the binary program and
/// assembly. When no element survives the cutoff, retries once with
/// `retry_cutoff`.
pub fn extract_complex<T: Scalar>(p: &ProbabilisticComplex<T>, opts: &ExtractOptions) -> Result<Extraction<T>> {
    p.validate()?;
    let (deduped, suppressed) = nms(p, T::lit(opts.nms_threshold));
    let combined = combine_probabilities(&deduped);
    let s = proximity_matrices(&deduped, T::lit(opts.epsilon));
    let (em, cutoff) = match build_ilp(&combined, &s, &opts.weights, opts.cutoff) {
        Ok(em) => (em, opts.cutoff),
        Err(Error::EmptyCandidates { .. }) if opts.retry_cutoff.is_some_and(|r| r < opts.cutoff) => {
            let r = opts.retry_cutoff.unwrap();
            log::warn!("no candidates at cutoff {}; retrying with {r}", opts.cutoff);
            (build_ilp(&combined, &s, &opts.weights, r)?, r)
        }
        Err(e) => return Err(e),
    };
    log::debug!(
        "extraction program: {} variables, {} constraints",
        em.model.num_vars(),
        em.model.constraints.len()
    );
    let u_closed: Vec<bool> = em.faces.iter().map(|&i| combined.patches[i].is_u_closed()).collect();
    let start = greedy_assignment(&em, &u_closed);
    debug_assert!(em.model.is_feasible(&start), "greedy assignment violates {:?}", em.model.violations(&start));
    let solution = solve_ilp_with_start(&em.model, &opts.solve, Some(&start))?;
    let (complex, [faces, edges, verts]) = assemble(&combined, &em, &solution)?;
    Ok(Extraction {
        complex,
        num_vars: em.model.num_vars(),
        num_constraints: em.model.constraints.len(),
        solution,
        faces,
        edges,
        verts,
        suppressed,
        cutoff,
    })
}
