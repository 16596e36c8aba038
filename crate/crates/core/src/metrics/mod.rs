//! Matching of predicted to reference elements and the evaluation metrics.
//!
//! Evaluation matches each element group on geometric distance alone
//! ([`distance_matching`]); the training-style cost with KL terms lives in
//! [`training_matching`] and feeds [`loss_terms`].

mod hungarian;
mod loss;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::complex::{topology_residuals, BinaryMatrix, ChainComplex, Patch, TopologyResiduals};
use crate::error::{Error, Result};
use crate::geometry::{curve_distance, patch_distance, vertex_distance};
use crate::refinement::{project_point_to_patch, validity_assessment, VALIDITY_THRESHOLD};
use crate::scalar::{Scalar, Vec3};

pub use hungarian::{assignment_cost, hungarian_match};
pub use loss::{
    bce, ce, corner_matching_cost, curve_matching_cost, loss_terms, patch_matching_cost, training_matching, LossTerms,
    NLL_CAP, W_GEO, W_TOPO,
};

/// Distance gate for true positives, on the root of the group distance.
pub const FSCORE_DELTA: f64 = 0.1;
pub const COVERAGE_EPSILON: f64 = 0.01;
/// Neighborhood size of the segmentation adjacency utility.
pub const SEGMENT_NEIGHBORS: usize = 6;

/// Assignment of one element group. Indices refer to the full element
/// lists; elements with `exists == false` never take part.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupMatching {
    /// `(prediction, reference)` pairs sorted by prediction.
    pub pairs: Vec<(usize, usize)>,
    /// Group distance `D` of each pair.
    pub distances: Vec<f64>,
    /// `m`: prediction to reference.
    pub forward: Vec<Option<usize>>,
    /// `m′`: reference to prediction.
    pub inverse: Vec<Option<usize>>,
    pub pred_elements: Vec<usize>,
    pub gt_elements: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub corners: GroupMatching,
    pub curves: GroupMatching,
    pub patches: GroupMatching,
}

impl Matching {
    pub(crate) fn check(&self, nv: usize, ne: usize, nf: usize) -> Result<()> {
        for (name, g, n) in [("corner", &self.corners, nv), ("curve", &self.curves, ne), ("patch", &self.patches, nf)] {
            if g.forward.len() != n {
                return Err(Error::Structural(format!("{name} matching covers {} predictions, expected {n}", g.forward.len())));
            }
        }
        Ok(())
    }
}

pub(crate) fn live(flags: impl Iterator<Item = bool>) -> Vec<usize> {
    flags.enumerate().filter(|(_, e)| *e).map(|(i, _)| i).collect()
}

/// Hungarian assignment between the listed predictions and references.
pub(crate) fn match_group(
    pred: &[usize],
    gt: &[usize],
    (n_pred, n_gt): (usize, usize),
    cost: impl Fn(usize, usize) -> f64,
    distance: impl Fn(usize, usize) -> f64,
) -> Result<GroupMatching> {
    let c = DMatrix::from_fn(pred.len(), gt.len(), |r, k| cost(pred[r], gt[k]));
    let mut g = GroupMatching {
        forward: vec![None; n_pred],
        inverse: vec![None; n_gt],
        pred_elements: pred.to_vec(),
        gt_elements: gt.to_vec(),
        ..Default::default()
    };
    for (r, k) in hungarian_match(&c)? {
        let (i, j) = (pred[r], gt[k]);
        g.pairs.push((i, j));
        g.distances.push(distance(i, j));
        g.forward[i] = Some(j);
        g.inverse[j] = Some(i);
    }
    Ok(g)
}

/// Evaluation matching: each group is assigned on `D_v`, `D_e` or `D_f`.
pub fn distance_matching<T: Scalar>(pred: &ChainComplex<T>, gt: &ChainComplex<T>) -> Result<Matching> {
    let corners = |c: &ChainComplex<T>| live(c.corners.iter().map(|v| v.exists));
    let curves = |c: &ChainComplex<T>| live(c.curves.iter().map(|e| e.exists));
    let patches = |c: &ChainComplex<T>| live(c.patches.iter().map(|f| f.exists));
    let dv = |i: usize, j: usize| vertex_distance(&pred.corners[i].point, &gt.corners[j].point).as_f64();
    let de = |i: usize, j: usize| curve_distance(&pred.curves[i].samples, &gt.curves[j].samples).as_f64();
    let df = |i: usize, j: usize| patch_distance(&pred.patches[i].samples, &gt.patches[j].samples).as_f64();
    Ok(Matching {
        corners: match_group(&corners(pred), &corners(gt), (pred.num_corners(), gt.num_corners()), dv, dv)?,
        curves: match_group(&curves(pred), &curves(gt), (pred.num_curves(), gt.num_curves()), de, de)?,
        patches: match_group(&patches(pred), &patches(gt), (pred.num_patches(), gt.num_patches()), df, df)?,
    })
}

/// `2PR/(P+R)` from a true-positive count, or 0 when `P + R = 0`.
/// Harmonic mean of precision and recall. Two empty sets agree perfectly
/// and score 1.
pub fn fscore(true_positives: usize, n_pred: usize, n_gt: usize) -> f64 {
    if n_pred == 0 && n_gt == 0 {
        return 1.0;
    }
    let p = if n_pred == 0 { 0.0 } else { true_positives as f64 / n_pred as f64 };
    let r = if n_gt == 0 { 0.0 } else { true_positives as f64 / n_gt as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Pairs whose distance passes the gate `sqrt(D) <= delta`.
pub fn true_positives(g: &GroupMatching, delta: f64) -> usize {
    g.distances.iter().filter(|d| d.sqrt() <= delta).count()
}

pub fn group_fscore(g: &GroupMatching, delta: f64) -> f64 {
    fscore(true_positives(g, delta), g.pred_elements.len(), g.gt_elements.len())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupScores {
    pub corner: f64,
    pub curve: f64,
    pub patch: f64,
}

pub fn evaluate_fscore(m: &Matching, delta: f64) -> GroupScores {
    GroupScores {
        corner: group_fscore(&m.corners, delta),
        curve: group_fscore(&m.curves, delta),
        patch: group_fscore(&m.patches, delta),
    }
}

/// Fraction of matched predictions carrying the reference label; absent
/// when nothing is matched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeAccuracy {
    pub curve_type: Option<f64>,
    pub curve_openness: Option<f64>,
    pub patch_type: Option<f64>,
    pub patch_u_closed: Option<f64>,
}

fn accuracy(pairs: &[(usize, usize)], same: impl Fn(usize, usize) -> bool) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    Some(pairs.iter().filter(|&&(i, j)| same(i, j)).count() as f64 / pairs.len() as f64)
}

pub fn type_accuracy<T: Scalar>(pred: &ChainComplex<T>, gt: &ChainComplex<T>, m: &Matching) -> TypeAccuracy {
    let (ec, fc) = (&m.curves.pairs, &m.patches.pairs);
    TypeAccuracy {
        curve_type: accuracy(ec, |i, j| pred.curves[i].kind == gt.curves[j].kind),
        curve_openness: accuracy(ec, |i, j| pred.curves[i].is_open() == gt.curves[j].is_open()),
        patch_type: accuracy(fc, |i, j| pred.patches[i].kind == gt.patches[j].kind),
        patch_u_closed: accuracy(fc, |i, j| pred.patches[i].is_u_closed() == gt.patches[j].is_u_closed()),
    }
}

/// Mean over reference pairs of `|GT[i,j] − Pred[m′(i), m′(j)]|`, where a
/// pair with an unmatched endpoint counts as 1.
pub fn topology_error(pred: &BinaryMatrix, gt: &BinaryMatrix, rows: &GroupMatching, cols: &GroupMatching) -> f64 {
    let n = rows.gt_elements.len() * cols.gt_elements.len();
    if n == 0 {
        return 0.0;
    }
    let mut err = 0usize;
    for &i in &rows.gt_elements {
        for &j in &cols.gt_elements {
            err += match (rows.inverse[i], cols.inverse[j]) {
                (Some(pi), Some(pj)) => usize::from(gt.get(i, j) != pred.get(pi, pj)),
                _ => 1,
            };
        }
    }
    err as f64 / n as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TopologyErrors {
    pub fe: f64,
    pub ev: f64,
    pub fv: f64,
}

pub fn topology_errors<T: Scalar>(pred: &ChainComplex<T>, gt: &ChainComplex<T>, m: &Matching) -> TopologyErrors {
    TopologyErrors {
        fe: topology_error(&pred.fe, &gt.fe, &m.patches, &m.curves),
        ev: topology_error(&pred.ev, &gt.ev, &m.curves, &m.corners),
        fv: topology_error(&pred.fv, &gt.fv, &m.patches, &m.corners),
    }
}

/// Patch adjacency through shared curves: `FF = (FE·FEᵀ ≥ 1)` off the
/// diagonal.
pub fn patch_patch_matrix<T: Scalar>(c: &ChainComplex<T>) -> BinaryMatrix {
    let prod = c.fe.product(&c.fe.transpose());
    let n = c.num_patches();
    BinaryMatrix::from_entries(n, n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| i != j && prod[i][j] >= 1))
}

/// Mean over matched patches of the mean projection distance of the
/// reference patch's samples onto the predicted patch, and the fraction of
/// reference patches whose match passes the distance gate.
pub fn patch_residual_and_recall<T: Scalar>(
    pred: &ChainComplex<T>,
    gt: &ChainComplex<T>,
    m: &Matching,
    delta: f64,
) -> (Option<f64>, f64) {
    let g = &m.patches;
    let recall = if g.gt_elements.is_empty() { 0.0 } else { true_positives(g, delta) as f64 / g.gt_elements.len() as f64 };
    if g.pairs.is_empty() {
        return (None, recall);
    }
    let total: f64 = g
        .pairs
        .iter()
        .map(|&(i, j)| {
            let s = gt.patches[j].samples.points();
            s.iter().map(|p| project_point_to_patch(p, &pred.patches[i]).1.as_f64()).sum::<f64>() / s.len() as f64
        })
        .sum();
    (Some(total / g.pairs.len() as f64), recall)
}

/// Fraction of points within `epsilon` of some existing patch; 0 without
/// patches.
pub fn p_coverage<T: Scalar>(points: &[Vec3<T>], patches: &[Patch<T>], epsilon: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Argument("p-coverage needs at least one input point".into()));
    }
    let live: Vec<&Patch<T>> = patches.iter().filter(|f| f.exists).collect();
    if live.is_empty() {
        return Ok(0.0);
    }
    let eps = T::lit(epsilon);
    let covered = points.iter().filter(|p| live.iter().any(|f| project_point_to_patch(p, f).1 < eps)).count();
    Ok(covered as f64 / points.len() as f64)
}

/// Segment adjacency for external segmentations: segments `a` and `b` are
/// adjacent when some `p ∈ a` and `q ∈ b` are among each other's `k`
/// nearest neighbors. Brute force, O(N²) in the total point count.
pub fn segmentation_adjacency<T: Scalar>(segments: &[Vec<Vec3<T>>], k: usize) -> BinaryMatrix {
    let pts: Vec<(usize, Vec3<T>)> =
        segments.iter().enumerate().flat_map(|(s, ps)| ps.iter().map(move |p| (s, *p))).collect();
    let n = pts.len();
    let k = k.min(n.saturating_sub(1));
    let knn: Vec<Vec<usize>> = (0..n)
        .map(|a| {
            let mut d: Vec<(T, usize)> =
                (0..n).filter(|&b| b != a).map(|b| ((pts[a].1 - pts[b].1).norm_squared(), b)).collect();
            if k < d.len() {
                d.select_nth_unstable_by(k, |x, y| x.partial_cmp(y).unwrap());
                d.truncate(k);
            }
            let mut ids: Vec<usize> = d.into_iter().map(|(_, b)| b).collect();
            ids.sort_unstable();
            ids
        })
        .collect();
    let ns = segments.len();
    let mut m = BinaryMatrix::zeros(ns, ns);
    for a in 0..n {
        for &b in &knn[a] {
            let (sa, sb) = (pts[a].0, pts[b].0);
            if sa != sb && knn[b].binary_search(&a).is_ok() {
                m.set(sa, sb, true);
                m.set(sb, sa, true);
            }
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub delta: f64,
    pub coverage_epsilon: f64,
    pub validity_threshold: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { delta: FSCORE_DELTA, coverage_epsilon: COVERAGE_EPSILON, validity_threshold: VALIDITY_THRESHOLD }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub fscore: GroupScores,
    pub type_accuracy: TypeAccuracy,
    pub topology_error: TopologyErrors,
    /// Equation residuals of the prediction.
    pub inconsistency: TopologyResiduals,
    pub patch_residual: Option<f64>,
    pub recall: f64,
    /// Present when input points were given.
    pub p_coverage: Option<f64>,
    pub patch_patch_error: f64,
    pub validity_ratio: f64,
}

/// Every metric of `pred` against `gt`; `points` are the input points used
/// for p-coverage.
pub fn evaluate<T: Scalar>(
    pred: &ChainComplex<T>,
    gt: &ChainComplex<T>,
    points: Option<&[Vec3<T>]>,
    opts: &EvalOptions,
) -> Result<EvaluationReport> {
    pred.validate()?;
    gt.validate()?;
    let m = distance_matching(pred, gt)?;
    let (patch_residual, recall) = patch_residual_and_recall(pred, gt, &m, opts.delta);
    let p_coverage = match points {
        Some(p) => Some(p_coverage(p, &pred.patches, opts.coverage_epsilon)?),
        None => None,
    };
    Ok(EvaluationReport {
        fscore: evaluate_fscore(&m, opts.delta),
        type_accuracy: type_accuracy(pred, gt, &m),
        topology_error: topology_errors(pred, gt, &m),
        inconsistency: topology_residuals(pred)?,
        patch_residual,
        recall,
        p_coverage,
        patch_patch_error: topology_error(&patch_patch_matrix(pred), &patch_patch_matrix(gt), &m.patches, &m.patches),
        validity_ratio: validity_assessment(pred, T::lit(opts.validity_threshold)).ratio,
    })
}
