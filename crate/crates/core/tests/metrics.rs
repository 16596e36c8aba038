use approx::assert_relative_eq;
use chainrep::extraction::{ProbabilisticComplex, SoftCorner};
use chainrep::metrics::*;
use chainrep::synth::{corrupt, generate_gt, sample_point_cloud, CorruptionParams, Shape};
use chainrep::{BinaryMatrix, ChainComplex, Corner, Vec3};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Minimum over all injective maps of the smaller side into the larger.
fn brute_force(c: &DMatrix<f64>) -> f64 {
    fn go(c: &DMatrix<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == c.nrows() {
            *best = best.min(acc);
            return;
        }
        for j in 0..c.ncols() {
            if !used[j] {
                used[j] = true;
                go(c, row + 1, used, acc + c[(row, j)], best);
                used[j] = false;
            }
        }
    }
    let c = if c.nrows() > c.ncols() { c.transpose() } else { c.clone() };
    let mut best = f64::INFINITY;
    go(&c, 0, &mut vec![false; c.ncols()], 0.0, &mut best);
    best
}

fn cost_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..=6, 1usize..=6, any::<bool>()).prop_flat_map(|(r, c, integer)| {
        let entry = if integer { (0i32..20).prop_map(f64::from).boxed() } else { (0.0f64..10.0).boxed() };
        proptest::collection::vec(entry, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
    })
}

proptest! {
    #[test]
    fn hungarian_equals_permutation_minimum(c in cost_matrix()) {
        let pairs = hungarian_match(&c).unwrap();
        prop_assert_eq!(pairs.len(), c.nrows().min(c.ncols()));
        let mut rows: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let mut cols: Vec<_> = pairs.iter().map(|p| p.1).collect();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        prop_assert_eq!(rows.len(), pairs.len());
        prop_assert_eq!(cols.len(), pairs.len());
        let got = assignment_cost(&c, &pairs);
        let best = brute_force(&c);
        prop_assert!((got - best).abs() <= 1e-9 * best.max(1.0), "{} vs {}", got, best);
    }

    #[test]
    fn fscore_bounded_and_monotone(n_pred in 0usize..20, n_gt in 0usize..20, tp in 0usize..20) {
        let tp = tp.min(n_pred).min(n_gt);
        let f = fscore(tp, n_pred, n_gt);
        prop_assert!((0.0..=1.0).contains(&f));
        if tp < n_pred.min(n_gt) {
            prop_assert!(fscore(tp + 1, n_pred, n_gt) > f);
        }
        prop_assert_eq!(fscore(tp, n_pred, n_gt) == fscore(tp, n_gt, n_pred), true);
    }

    #[test]
    fn topology_error_of_permuted_self_is_zero(family in 0usize..5, seed in any::<u64>()) {
        let gt = generate_gt::<f64>(Shape::FAMILIES[family]).unwrap();
        let perm = |n: usize, s: u64| {
            let mut p: Vec<usize> = (0..n).collect();
            let mut x = s | 1;
            for i in (1..n).rev() {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                p.swap(i, (x % (i as u64 + 1)) as usize);
            }
            p
        };
        let pred = gt.permuted(&perm(gt.num_patches(), seed), &perm(gt.num_curves(), seed ^ 1), &perm(gt.num_corners(), seed ^ 2));
        let m = distance_matching(&pred, &gt).unwrap();
        let e = topology_errors(&pred, &gt, &m);
        prop_assert_eq!((e.fe, e.ev, e.fv), (0.0, 0.0, 0.0));
    }
}

#[test]
fn hungarian_examples() {
    let c = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 });
    assert_eq!(hungarian_match(&c).unwrap(), vec![(0, 0), (1, 1), (2, 2)]);
    assert_eq!(hungarian_match(&DMatrix::from_element(1, 1, 2.5)).unwrap(), vec![(0, 0)]);
    let nan = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
    assert!(hungarian_match(&nan).is_err());
}

fn corner(x: f64) -> Corner<f64> {
    Corner::new(Vec3::new(x, 0.5, 0.5))
}

fn corners_only(pts: &[f64]) -> ChainComplex<f64> {
    let n = pts.len();
    ChainComplex::new(pts.iter().map(|&x| corner(x)).collect(), vec![], vec![], BinaryMatrix::zeros(0, 0), BinaryMatrix::zeros(0, n), BinaryMatrix::zeros(0, n))
        .unwrap()
}

#[test]
fn matching_cost_examples() {
    let q = corner(0.5);
    let exact = SoftCorner { validness: 1.0, point: q.point };
    assert_eq!(corner_matching_cost(&exact, &q), 0.0);
    let offset = SoftCorner { validness: 1.0, point: q.point + Vec3::new(0.1, 0.0, 0.0) };
    assert_relative_eq!(corner_matching_cost(&offset, &q), 3.0, max_relative = 1e-12);
    let half = SoftCorner { validness: 0.5, point: q.point };
    assert_relative_eq!(corner_matching_cost(&half, &q), std::f64::consts::LN_2, max_relative = 1e-15);
    let none = SoftCorner { validness: 0.0, point: q.point };
    assert_eq!(corner_matching_cost(&none, &q), NLL_CAP);
}

#[test]
fn fscore_examples() {
    let gt = corners_only(&[0.5]);
    let same = distance_matching(&gt, &gt).unwrap();
    assert_eq!(evaluate_fscore(&same, FSCORE_DELTA).corner, 1.0);
    let empty = corners_only(&[]);
    let m = distance_matching(&empty, &gt).unwrap();
    assert_eq!(evaluate_fscore(&m, FSCORE_DELTA).corner, 0.0);
    let m = distance_matching(&empty, &empty).unwrap();
    assert_eq!(evaluate_fscore(&m, FSCORE_DELTA).corner, 1.0);
    let two = corners_only(&[0.55, 0.9]);
    let m = distance_matching(&two, &gt).unwrap();
    assert_relative_eq!(evaluate_fscore(&m, FSCORE_DELTA).corner, 2.0 / 3.0, max_relative = 1e-15);
    // Matched but beyond the gate.
    let far = corners_only(&[0.75]);
    let m = distance_matching(&far, &gt).unwrap();
    assert_eq!(m.corners.pairs, vec![(0, 0)]);
    assert_eq!(evaluate_fscore(&m, FSCORE_DELTA).corner, 0.0);
}

#[test]
fn type_accuracy_counts_matched_labels() {
    let gt = generate_gt::<f64>(Shape::Cube).unwrap();
    let mut pred = gt.clone();
    let all = type_accuracy(&pred, &gt, &distance_matching(&pred, &gt).unwrap());
    assert_eq!(all.patch_type, Some(1.0));
    assert_eq!(all.curve_type, Some(1.0));
    for f in &mut pred.patches[..3] {
        f.kind = chainrep::PatchKind::Cylinder;
    }
    let half = type_accuracy(&pred, &gt, &distance_matching(&pred, &gt).unwrap());
    assert_eq!(half.patch_type, Some(0.5));
    assert_eq!(half.patch_u_closed, Some(1.0));
    let none = type_accuracy(&corners_only(&[]), &corners_only(&[0.5]), &Matching::default());
    assert_eq!(none.curve_type, None);
}

#[test]
fn topology_error_with_missing_vertex() {
    let gt = generate_gt::<f64>(Shape::Cube).unwrap();
    let mut pred = gt.clone();
    pred.corners[0].exists = false;
    let m = distance_matching(&pred, &gt).unwrap();
    let e = topology_errors(&pred, &gt, &m);
    // Independent count: every GT pair in the missing corner's column is
    // an error, all other entries agree.
    let ev_pairs = gt.num_curves() * gt.num_corners();
    let fv_pairs = gt.num_patches() * gt.num_corners();
    assert_eq!(e.ev, gt.num_curves() as f64 / ev_pairs as f64);
    assert_eq!(e.ev, 0.125);
    assert_eq!(e.fv, gt.num_patches() as f64 / fv_pairs as f64);
    assert_eq!(e.fe, 0.0);

    let nothing = distance_matching(&corners_only(&[]), &corners_only(&[0.2, 0.8])).unwrap();
    assert_eq!(topology_error(&BinaryMatrix::zeros(0, 0), &BinaryMatrix::zeros(2, 2), &nothing.corners, &nothing.corners), 1.0);
}

#[test]
fn patch_patch_matrix_examples() {
    let cube = patch_patch_matrix(&generate_gt::<f64>(Shape::Cube).unwrap());
    assert!((0..6).all(|i| cube.row_sum(i) == 4 && !cube.get(i, i)));
    assert_eq!(cube, cube.transpose());
    let sphere = patch_patch_matrix(&generate_gt::<f64>(Shape::Sphere).unwrap());
    assert_eq!(sphere, BinaryMatrix::zeros(1, 1));
    let cyl = generate_gt::<f64>(Shape::CappedCylinder).unwrap();
    let ff = patch_patch_matrix(&cyl);
    let side = (0..3).find(|&i| cyl.patches[i].kind == chainrep::PatchKind::Cylinder).unwrap();
    let caps: Vec<usize> = (0..3).filter(|&i| i != side).collect();
    assert!(ff.get(side, caps[0]) && ff.get(side, caps[1]));
    assert!(!ff.get(caps[0], caps[1]));
}

#[test]
fn residual_of_offset_plane() {
    let gt = generate_gt::<f64>(Shape::Cube).unwrap();
    let mut pred = gt.clone();
    let s = pred.patches[0].samples.points().to_vec();
    let n = (s[1] - s[0]).cross(&(s[10] - s[0])).normalize();
    pred.patches[0].primitive = None;
    for p in pred.patches[0].samples.points_mut() {
        *p += n * 0.01;
    }
    let m = distance_matching(&pred, &gt).unwrap();
    let (res, recall) = patch_residual_and_recall(&pred, &gt, &m, FSCORE_DELTA);
    // Only one of six matched patches is off.
    assert_relative_eq!(res.unwrap(), 0.01 / 6.0, max_relative = 1e-9);
    assert_eq!(recall, 1.0);
    let exact = patch_residual_and_recall(&gt, &gt, &distance_matching(&gt, &gt).unwrap(), FSCORE_DELTA);
    assert!(exact.0.unwrap() < 1e-12 && exact.1 == 1.0, "{exact:?}");
}

#[test]
fn p_coverage_examples() {
    let gt = generate_gt::<f64>(Shape::Cube).unwrap();
    let on = sample_point_cloud(&gt, 500, 0.0, &[], 3);
    assert_eq!(p_coverage(&on, &gt.patches, COVERAGE_EPSILON).unwrap(), 1.0);
    let far: Vec<Vec3<f64>> = on.iter().map(|p| p + Vec3::new(5.0, 5.0, 5.0)).collect();
    assert_eq!(p_coverage(&far, &gt.patches, COVERAGE_EPSILON).unwrap(), 0.0);
    // Half on the top face, half 0.1 above it.
    let top = (0..6).find(|&i| gt.patches[i].samples.points().iter().all(|p| (p.z - 0.9).abs() < 1e-12)).unwrap();
    let mut mixed = Vec::new();
    for i in 0..10 {
        let p = Vec3::new(0.2 + 0.05 * i as f64, 0.5, 0.9);
        mixed.push(p);
        mixed.push(p + Vec3::new(0.0, 0.0, 0.1));
    }
    assert_eq!(p_coverage(&mixed, &gt.patches[top..=top], COVERAGE_EPSILON).unwrap(), 0.5);
    assert_eq!(p_coverage(&mixed, &[], COVERAGE_EPSILON).unwrap(), 0.0);
    assert!(p_coverage::<f64>(&[], &gt.patches, COVERAGE_EPSILON).is_err());
}

#[test]
fn losses_vanish_on_certain_exact_prediction() {
    for shape in Shape::FAMILIES {
        let gt = generate_gt::<f64>(shape).unwrap();
        let soft = corrupt(&gt, &CorruptionParams::none());
        let m = training_matching(&soft, &gt).unwrap();
        let l = loss_terms(&soft, &gt, &m).unwrap();
        assert_eq!(l, LossTerms::default(), "{shape}");
    }
}

#[test]
fn loss_examples() {
    let gt = corners_only(&[0.5]);
    let mut soft = ProbabilisticComplex::empty();
    soft.corners.push(SoftCorner { validness: 0.5, point: gt.corners[0].point });
    soft.ev = chainrep::extraction::SoftMatrix::zeros(0, 1);
    soft.fv = chainrep::extraction::SoftMatrix::zeros(0, 1);
    let m = training_matching(&soft, &gt).unwrap();
    let l = loss_terms(&soft, &gt, &m).unwrap();
    assert_relative_eq!(l.val, -(0.5f64).ln(), max_relative = 1e-15);
    assert_eq!(l.total, l.val);

    // One confidently wrong openness flag.
    let cube = generate_gt::<f64>(Shape::Cube).unwrap();
    let mut soft = corrupt(&cube, &CorruptionParams::none());
    soft.curves[0].openness = 0.0;
    let m = training_matching(&soft, &cube).unwrap();
    let l = loss_terms(&soft, &cube, &m).unwrap();
    assert_relative_eq!(l.cls, NLL_CAP / cube.num_curves() as f64, max_relative = 1e-15);

    soft.curves[0].openness = 1.5;
    assert!(loss_terms(&soft, &cube, &m).is_err());
}

#[test]
fn self_evaluation_is_perfect() {
    for shape in Shape::FAMILIES {
        let gt = generate_gt::<f64>(shape).unwrap();
        let pts = sample_point_cloud(&gt, 2000, 0.0, &[], 1);
        let r = evaluate(&gt, &gt, Some(&pts), &EvalOptions::default()).unwrap();
        assert_eq!(r.fscore, GroupScores { corner: 1.0, curve: 1.0, patch: 1.0 }, "{shape}");
        assert_eq!(r.topology_error, TopologyErrors::default());
        assert!(r.inconsistency.is_zero());
        assert!(r.patch_residual.unwrap() < 1e-12, "{shape}");
        assert_eq!(r.p_coverage, Some(1.0));
        assert_eq!(r.patch_patch_error, 0.0);
        assert_eq!(r.validity_ratio, 1.0);
    }
}

#[test]
fn segmentation_adjacency_finds_touching_segments() {
    let grid = |z: f64, x0: f64| -> Vec<Vec3<f64>> {
        (0..8).flat_map(|i| (0..8).map(move |j| Vec3::new(x0 + 0.02 * i as f64, 0.02 * j as f64, z))).collect()
    };
    let segs = vec![grid(0.0, 0.0), grid(0.0, 0.16), grid(0.5, 0.0)];
    let m = segmentation_adjacency(&segs, SEGMENT_NEIGHBORS);
    assert!(m.get(0, 1) && m.get(1, 0));
    assert!(!m.get(0, 2) && !m.get(1, 2));
    assert!((0..3).all(|i| !m.get(i, i)));
}
