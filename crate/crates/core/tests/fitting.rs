use chainrep::primitive::{CurvePrimitive, Surface};
use chainrep::refinement::{fit_curve, fit_surface, AxisConstraint, FittingProblem};
use chainrep::scalar::{axis_angle, orthonormal_complement};
use chainrep::{CurveKind, PatchKind, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

const TRIALS: u64 = 100;
const SIGMA: f64 = 0.01;
const CURVE_SAMPLES: usize = 200;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dir(r: &mut ChaCha8Rng) -> Vec3<f64> {
    let v: [f64; 3] = UnitSphere.sample(r);
    Vec3::new(v[0], v[1], v[2])
}

fn noisy(r: &mut ChaCha8Rng, pts: Vec<Vec3<f64>>, sigma: f64) -> Vec<Vec3<f64>> {
    if sigma == 0.0 {
        return pts;
    }
    let n = Normal::new(0.0, sigma).unwrap();
    pts.into_iter().map(|p| p + Vec3::new(n.sample(r), n.sample(r), n.sample(r))).collect()
}

fn deg(a: f64) -> f64 {
    a.to_degrees()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// One trial: returns (relative error, angular error in degrees, residual).
type Trial = fn(u64, f64) -> (f64, f64, f64);

fn plane_trial(seed: u64, sigma: f64) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let n = dir(&mut r).map(f64::abs).normalize();
    let c = Vec3::new(r.random_range(0.3..0.7), r.random_range(0.3..0.7), r.random_range(0.3..0.7));
    let (e1, e2) = orthonormal_complement(&n);
    let pts = (0..200)
        .map(|_| c + e1 * r.random_range(-0.3..0.3) + e2 * r.random_range(-0.3..0.3))
        .collect();
    let pts = noisy(&mut r, pts, sigma);
    let fit = fit_surface(PatchKind::Plane, &FittingProblem::from_points(pts), None).unwrap();
    let (fn_, fd) = fit.primitive.plane_equation().unwrap();
    let fd = if fn_.dot(&n) < 0.0 { -fd } else { fd };
    (rel(fd, n.dot(&c)), deg(axis_angle(&fn_, &n)), fit.residual)
}

fn sphere_trial(seed: u64, sigma: f64) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let c = Vec3::new(r.random_range(0.4..0.6), r.random_range(0.4..0.6), r.random_range(0.4..0.6));
    let rad = r.random_range(0.2..0.35);
    let pts = (0..300).map(|_| c + dir(&mut r) * rad).collect();
    let pts = noisy(&mut r, pts, sigma);
    let fit = fit_surface(PatchKind::Sphere, &FittingProblem::from_points(pts), None).unwrap();
    match fit.primitive {
        Surface::Sphere { frame, radius } => {
            let center_err = (frame.origin - c).norm() / rad;
            (rel(radius, rad).max(center_err), 0.0, fit.residual)
        }
        _ => unreachable!(),
    }
}

fn revolution_frame(r: &mut ChaCha8Rng) -> (Vec3<f64>, Vec3<f64>, Vec3<f64>, Vec3<f64>) {
    let a = dir(r);
    let (e1, e2) = orthonormal_complement(&a);
    let c = Vec3::new(r.random_range(0.45..0.55), r.random_range(0.45..0.55), r.random_range(0.45..0.55));
    (c, a, e1, e2)
}

fn cylinder_points(r: &mut ChaCha8Rng) -> (Vec<Vec3<f64>>, Vec3<f64>, f64) {
    let (c, a, e1, e2) = revolution_frame(r);
    let rad = r.random_range(0.15..0.3);
    let pts = (0..300)
        .map(|_| {
            let t: f64 = r.random_range(0.0..std::f64::consts::TAU);
            c + (e1 * t.cos() + e2 * t.sin()) * rad + a * r.random_range(-0.3..0.3)
        })
        .collect();
    (pts, a, rad)
}

fn cylinder_trial(seed: u64, sigma: f64) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let (pts, a, rad) = cylinder_points(&mut r);
    let pts = noisy(&mut r, pts, sigma);
    let fit = fit_surface(PatchKind::Cylinder, &FittingProblem::from_points(pts), None).unwrap();
    match fit.primitive {
        Surface::Cylinder { frame, radius } => (rel(radius, rad), deg(axis_angle(&frame.z, &a)), fit.residual),
        _ => unreachable!(),
    }
}

fn cone_points(r: &mut ChaCha8Rng) -> (Vec<Vec3<f64>>, Vec3<f64>, Vec3<f64>, f64) {
    let (c, a, e1, e2) = revolution_frame(r);
    let half: f64 = r.random_range(0.3..0.7);
    let apex = c - a * 0.35;
    let pts = (0..300)
        .map(|_| {
            let t: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let h: f64 = r.random_range(0.2..0.6);
            apex + a * h + (e1 * t.cos() + e2 * t.sin()) * (h * half.tan())
        })
        .collect();
    (pts, apex, a, half)
}

fn cone_trial(seed: u64, sigma: f64) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let (pts, apex, a, half) = cone_points(&mut r);
    let pts = noisy(&mut r, pts, sigma);
    let fit = fit_surface(PatchKind::Cone, &FittingProblem::from_points(pts), None).unwrap();
    match fit.primitive {
        // Radius of the cross-section at mid-height of the sampled band.
        Surface::Cone { frame, half_angle } => {
            let mid = apex + a * 0.4;
            let h = (mid - frame.origin).dot(&frame.z);
            let radius = h * half_angle.tan();
            (rel(radius, 0.4 * half.tan()), deg(axis_angle(&frame.z, &a)), fit.residual)
        }
        _ => unreachable!(),
    }
}

fn torus_trial(seed: u64, sigma: f64) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let (c, a, e1, e2) = revolution_frame(&mut r);
    let big = r.random_range(0.25..0.3);
    let small = r.random_range(0.08..0.12);
    let pts = (0..400)
        .map(|_| {
            let u: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let v: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let radial = e1 * u.cos() + e2 * u.sin();
            c + radial * (big + small * v.cos()) + a * (small * v.sin())
        })
        .collect();
    let pts = noisy(&mut r, pts, sigma);
    let fit = fit_surface(PatchKind::Torus, &FittingProblem::from_points(pts), None).unwrap();
    match fit.primitive {
        Surface::Torus { frame, major_radius, minor_radius } => (
            rel(major_radius, big).max(rel(minor_radius, small)),
            deg(axis_angle(&frame.z, &a)),
            fit.residual,
        ),
        _ => unreachable!(),
    }
}

fn line_trial(seed: u64, sigma: f64) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let d = dir(&mut r);
    let c = Vec3::new(r.random_range(0.4..0.6), r.random_range(0.4..0.6), r.random_range(0.4..0.6));
    let pts = (0..30).map(|i| c + d * (-0.3 + 0.6 * i as f64 / 29.0)).collect();
    let pts = noisy(&mut r, pts, sigma);
    let fit = fit_curve(CurveKind::Line, &FittingProblem::from_points(pts), None).unwrap();
    match fit.primitive {
        CurvePrimitive::Line { point, direction } => {
            let off = (point - c - d * (point - c).dot(&d)).norm() / 0.3;
            (off, deg(axis_angle(&direction, &d)), fit.residual)
        }
        _ => unreachable!(),
    }
}

fn conic_points(r: &mut ChaCha8Rng, a: f64, b: f64) -> (Vec<Vec3<f64>>, Vec3<f64>, Vec3<f64>) {
    let (c, n, e1, e2) = revolution_frame(r);
    let pts = (0..CURVE_SAMPLES)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / CURVE_SAMPLES as f64;
            c + e1 * (a * t.cos()) + e2 * (b * t.sin())
        })
        .collect();
    (pts, c, n)
}

fn circle_trial(seed: u64, sigma: f64) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let rad = r.random_range(0.15..0.3);
    let (pts, _, n) = conic_points(&mut r, rad, rad);
    let pts = noisy(&mut r, pts, sigma);
    let fit = fit_curve(CurveKind::Circle, &FittingProblem::from_points(pts), None).unwrap();
    match fit.primitive {
        CurvePrimitive::Circle { frame, radius } => (rel(radius, rad), deg(axis_angle(&frame.z, &n)), fit.residual),
        _ => unreachable!(),
    }
}

fn ellipse_trial(seed: u64, sigma: f64) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let (a, b) = (r.random_range(0.2..0.3), r.random_range(0.1..0.15));
    let (pts, _, n) = conic_points(&mut r, a, b);
    let pts = noisy(&mut r, pts, sigma);
    let fit = fit_curve(CurveKind::Ellipse, &FittingProblem::from_points(pts), None).unwrap();
    match fit.primitive {
        CurvePrimitive::Ellipse { frame, semi_x, semi_y } => {
            let (big, small) = (semi_x.max(semi_y), semi_x.min(semi_y));
            (rel(big, a).max(rel(small, b)), deg(axis_angle(&frame.z, &n)), fit.residual)
        }
        _ => unreachable!(),
    }
}

const KINDS: [(&str, Trial); 8] = [
    ("plane", plane_trial),
    ("sphere", sphere_trial),
    ("cylinder", cylinder_trial),
    ("cone", cone_trial),
    ("torus", torus_trial),
    ("line", line_trial),
    ("circle", circle_trial),
    ("ellipse", ellipse_trial),
];

#[test]
fn noisy_fits_are_accurate() {
    for (name, trial) in KINDS {
        let good = (0..TRIALS)
            .filter(|&s| {
                let (e, a, _) = trial(1000 + s, SIGMA);
                e < 0.02 && a < 2.0
            })
            .count();
        assert!(good as f64 >= 0.95 * TRIALS as f64, "{name}: {good}/{TRIALS} within tolerance");
    }
}

#[test]
fn exact_fits_have_no_residual() {
    for (name, trial) in KINDS {
        for s in 0..10 {
            let (e, a, res) = trial(s, 0.0);
            assert!(res < 1e-6, "{name} seed {s}: residual {res}");
            assert!(e < 1e-6 && a < 1e-4, "{name} seed {s}: errors {e} {a}");
        }
    }
}

#[test]
fn axis_constraint_is_hard() {
    for s in 0..20 {
        let mut r = rng(s);
        let (pts, a, rad) = cylinder_points(&mut r);
        let pts = noisy(&mut r, pts, SIGMA);
        let problem = FittingProblem::from_points(pts).with_axis(AxisConstraint { direction: a, point: None });
        let fit = fit_surface(PatchKind::Cylinder, &problem, None).unwrap();
        let (_, axis) = fit.primitive.axis().unwrap();
        assert!(axis_angle(&axis, &a) < 1e-9);
        match fit.primitive {
            Surface::Cylinder { radius, .. } => assert!(rel(radius, rad) < 0.01, "seed {s}"),
            _ => unreachable!(),
        }

        let (pts, apex, a, _) = cone_points(&mut r);
        let pts = noisy(&mut r, pts, SIGMA);
        let through = apex + a * 0.4;
        let problem = FittingProblem::from_points(pts).with_axis(AxisConstraint { direction: a, point: Some(through) });
        let fit = fit_surface(PatchKind::Cone, &problem, None).unwrap();
        let (origin, axis) = fit.primitive.axis().unwrap();
        assert!(axis_angle(&axis, &a) < 1e-9);
        let off = (origin - through) - a * (origin - through).dot(&a);
        assert!(off.norm() < 1e-9);
    }
}

#[test]
fn sphere_center_and_radius_tolerance() {
    let good = (0..TRIALS)
        .filter(|&s| {
            let mut r = rng(7000 + s);
            let c = Vec3::new(0.5, 0.5, 0.5);
            let pts = (0..300).map(|_| c + dir(&mut r) * 0.3).collect();
            let pts = noisy(&mut r, pts, SIGMA);
            match fit_surface(PatchKind::Sphere, &FittingProblem::from_points(pts), None).unwrap().primitive {
                Surface::Sphere { frame, radius } => (frame.origin - c).norm() < 0.005 && (radius - 0.3).abs() < 0.005,
                _ => false,
            }
        })
        .count();
    assert!(good >= 95, "{good}/100");
}
