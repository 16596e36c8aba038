//! Training-style matching cost and loss terms, evaluated as reference
//! functions on a soft prediction and a reference complex.

use serde::{Deserialize, Serialize};

use super::{live, match_group, GroupMatching, Matching};
use crate::complex::{BinaryMatrix, ChainComplex, Corner, Curve, Patch};
use crate::error::Result;
use crate::extraction::{ProbabilisticComplex, SoftCorner, SoftCurve, SoftMatrix, SoftPatch};
use crate::geometry::{curve_distance, patch_distance, vertex_distance};
use crate::scalar::Scalar;

/// Cap on each negative log-likelihood term, in nats.
pub const NLL_CAP: f64 = 30.0;
pub const W_GEO: f64 = 300.0;
pub const W_TOPO: f64 = 10.0;

/// `-ln p`, capped at [`NLL_CAP`].
fn nll<T: Scalar>(p: T) -> f64 {
    let p = p.as_f64();
    if p <= 0.0 {
        NLL_CAP
    } else {
        (-p.ln()).min(NLL_CAP)
    }
}

/// Binary cross entropy of probability `p` against label `y`.
pub fn bce<T: Scalar>(p: T, y: bool) -> f64 {
    if y {
        nll(p)
    } else {
        nll(T::one() - p)
    }
}

/// Cross entropy of a distribution against a one-hot label.
pub fn ce<T: Scalar>(probs: &[T], class: usize) -> f64 {
    nll(probs[class])
}

pub fn corner_matching_cost<T: Scalar>(p: &SoftCorner<T>, q: &Corner<T>) -> f64 {
    nll(p.validness) + W_GEO * vertex_distance(&p.point, &q.point).as_f64()
}

pub fn curve_matching_cost<T: Scalar>(p: &SoftCurve<T>, q: &Curve<T>) -> f64 {
    nll(p.validness)
        + ce(&p.type_probs, q.kind.index())
        + bce(p.openness, q.is_open())
        + W_GEO * curve_distance(&p.samples, &q.samples).as_f64()
}

pub fn patch_matching_cost<T: Scalar>(p: &SoftPatch<T>, q: &Patch<T>) -> f64 {
    nll(p.validness)
        + ce(&p.type_probs, q.kind.index())
        + bce(p.u_closed, q.is_u_closed())
        + W_GEO * patch_distance(&p.samples, &q.samples).as_f64()
}

/// Matching on the full training cost (KL terms plus weighted geometry).
/// Every soft element is a candidate; only existing reference elements are
/// matched.
pub fn training_matching<T: Scalar>(pred: &ProbabilisticComplex<T>, gt: &ChainComplex<T>) -> Result<Matching> {
    pred.validate()?;
    let all = |n: usize| (0..n).collect::<Vec<_>>();
    let gv = live(gt.corners.iter().map(|v| v.exists));
    let ge = live(gt.curves.iter().map(|e| e.exists));
    let gf = live(gt.patches.iter().map(|f| f.exists));
    Ok(Matching {
        corners: match_group(
            &all(pred.num_corners()),
            &gv,
            (pred.num_corners(), gt.num_corners()),
            |i, j| corner_matching_cost(&pred.corners[i], &gt.corners[j]),
            |i, j| vertex_distance(&pred.corners[i].point, &gt.corners[j].point).as_f64(),
        )?,
        curves: match_group(
            &all(pred.num_curves()),
            &ge,
            (pred.num_curves(), gt.num_curves()),
            |i, j| curve_matching_cost(&pred.curves[i], &gt.curves[j]),
            |i, j| curve_distance(&pred.curves[i].samples, &gt.curves[j].samples).as_f64(),
        )?,
        patches: match_group(
            &all(pred.num_patches()),
            &gf,
            (pred.num_patches(), gt.num_patches()),
            |i, j| patch_matching_cost(&pred.patches[i], &gt.patches[j]),
            |i, j| patch_distance(&pred.patches[i].samples, &gt.patches[j].samples).as_f64(),
        )?,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub val: f64,
    pub cls: f64,
    pub geo: f64,
    pub topo: f64,
    /// `val + cls + w_geo·geo + w_topo·topo`.
    pub total: f64,
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn validness_term<T: Scalar>(p: impl Iterator<Item = T>, m: &GroupMatching) -> f64 {
    let mut n = 0;
    let mut s = 0.0;
    for (i, v) in p.enumerate() {
        s += bce(v, m.forward[i].is_some());
        n += 1;
    }
    mean(s, n)
}

fn topo_term<T: Scalar>(soft: &SoftMatrix<T>, gt: &BinaryMatrix, rows: &GroupMatching, cols: &GroupMatching) -> f64 {
    let mut s = 0.0;
    for &(i, gi) in &rows.pairs {
        for &(j, gj) in &cols.pairs {
            s += bce(soft.get(i, j), gt.get(gi, gj));
        }
    }
    mean(s, rows.pairs.len() * cols.pairs.len())
}

/// The four loss terms and their weighted total for a soft prediction
/// against a reference complex under a given matching.
pub fn loss_terms<T: Scalar>(pred: &ProbabilisticComplex<T>, gt: &ChainComplex<T>, m: &Matching) -> Result<LossTerms> {
    pred.validate()?;
    m.check(pred.num_corners(), pred.num_curves(), pred.num_patches())?;
    let val = validness_term(pred.corners.iter().map(|v| v.validness), &m.corners)
        + validness_term(pred.curves.iter().map(|e| e.validness), &m.curves)
        + validness_term(pred.patches.iter().map(|f| f.validness), &m.patches);

    let curve_cls: f64 = m
        .curves
        .pairs
        .iter()
        .map(|&(i, g)| {
            let (p, q) = (&pred.curves[i], &gt.curves[g]);
            ce(&p.type_probs, q.kind.index()) + bce(p.openness, q.is_open())
        })
        .sum();
    let patch_cls: f64 = m
        .patches
        .pairs
        .iter()
        .map(|&(i, g)| {
            let (p, q) = (&pred.patches[i], &gt.patches[g]);
            ce(&p.type_probs, q.kind.index()) + bce(p.u_closed, q.is_u_closed())
        })
        .sum();
    let cls = mean(curve_cls, m.curves.pairs.len()) + mean(patch_cls, m.patches.pairs.len());

    let geo_v: f64 = m.corners.pairs.iter().map(|&(i, g)| vertex_distance(&pred.corners[i].point, &gt.corners[g].point).as_f64()).sum();
    let geo_e: f64 = m.curves.pairs.iter().map(|&(i, g)| curve_distance(&pred.curves[i].samples, &gt.curves[g].samples).as_f64()).sum();
    let geo_f: f64 = m.patches.pairs.iter().map(|&(i, g)| patch_distance(&pred.patches[i].samples, &gt.patches[g].samples).as_f64()).sum();
    let geo = mean(geo_v, m.corners.pairs.len()) + mean(geo_e, m.curves.pairs.len()) + mean(geo_f, m.patches.pairs.len());

    let topo = topo_term(&pred.ev, &gt.ev, &m.curves, &m.corners)
        + topo_term(&pred.fe, &gt.fe, &m.patches, &m.curves)
        + topo_term(&pred.fv, &gt.fv, &m.patches, &m.corners);

    Ok(LossTerms { val, cls, geo, topo, total: val + cls + W_GEO * geo + W_TOPO * topo })
}
