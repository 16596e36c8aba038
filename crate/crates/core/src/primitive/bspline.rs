use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Scalar, Vec3};

/// Cubic basis over the unit parameter interval.
///
/// `Bezier` is the clamped cubic with four control points; `Periodic(n)` is
/// the uniform periodic cubic B-spline with `n` control points, where the
/// parameter wraps at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Bezier,
    Periodic(usize),
}

/// Nonzero basis functions at a parameter: control indices with value, first
/// and second derivative.
pub(crate) struct BasisEval<T> {
    pub idx: [usize; 4],
    pub val: [T; 4],
    pub d1: [T; 4],
    pub d2: [T; 4],
}

impl Basis {
    pub fn count(&self) -> usize {
        match self {
            Basis::Bezier => 4,
            Basis::Periodic(n) => *n,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Basis::Periodic(_))
    }

    /// Maps a parameter into the canonical domain.
    pub fn wrap<T: Scalar>(&self, t: T) -> T {
        match self {
            Basis::Bezier => t.max(T::zero()).min(T::one()),
            Basis::Periodic(_) => {
                let f = t - t.floor();
                if f >= T::one() {
                    T::zero()
                } else {
                    f
                }
            }
        }
    }

    pub(crate) fn eval<T: Scalar>(&self, t: T) -> BasisEval<T> {
        let one = T::one();
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let six = T::lit(6.0);
        match *self {
            Basis::Bezier => {
                let t = self.wrap(t);
                let s = one - t;
                BasisEval {
                    idx: [0, 1, 2, 3],
                    val: [s * s * s, three * t * s * s, three * t * t * s, t * t * t],
                    d1: [
                        -three * s * s,
                        three - T::lit(12.0) * t + T::lit(9.0) * t * t,
                        six * t - T::lit(9.0) * t * t,
                        three * t * t,
                    ],
                    d2: [
                        six * s,
                        T::lit(18.0) * t - T::lit(12.0),
                        six - T::lit(18.0) * t,
                        six * t,
                    ],
                }
            }
            Basis::Periodic(n) => {
                let nf = T::from_usize(n).unwrap();
                let s = self.wrap(t) * nf;
                let mut k = s.floor().to_usize().unwrap_or(0);
                if k >= n {
                    k = n - 1;
                }
                let tau = s - T::from_usize(k).unwrap();
                let om = one - tau;
                let idx = [k % n, (k + 1) % n, (k + 2) % n, (k + 3) % n];
                let tau2 = tau * tau;
                let tau3 = tau2 * tau;
                let val = [
                    om * om * om / six,
                    (three * tau3 - six * tau2 + T::lit(4.0)) / six,
                    (-three * tau3 + three * tau2 + three * tau + one) / six,
                    tau3 / six,
                ];
                let h = T::lit(0.5);
                let d1 = [
                    -om * om * h * nf,
                    (T::lit(1.5) * tau2 - two * tau) * nf,
                    (-T::lit(1.5) * tau2 + tau + h) * nf,
                    tau2 * h * nf,
                ];
                let n2 = nf * nf;
                let d2 = [om * n2, (three * tau - two) * n2, (one - three * tau) * n2, tau * n2];
                BasisEval { idx, val, d1, d2 }
            }
        }
    }
}

/// Solves the weighted linear least-squares problem `min Σ w_r ‖Σ_c A[r,c] X_c − b_r‖²`
/// for control points `X`, with a small ridge term for numerically absent columns.
fn weighted_control_solve<T: Scalar>(
    rows: &[(Vec<(usize, T)>, Vec3<T>, T)],
    ncols: usize,
) -> Result<Vec<Vec3<T>>> {
    if rows.is_empty() {
        return Err(Error::Degenerate { kind: "spline", reason: "no targets".into() });
    }
    let mut ata = DMatrix::<T>::zeros(ncols, ncols);
    let mut atb = DMatrix::<T>::zeros(ncols, 3);
    for (terms, b, w) in rows {
        for &(i, ai) in terms {
            for &(j, aj) in terms {
                ata[(i, j)] += *w * ai * aj;
            }
            for k in 0..3 {
                atb[(i, k)] += *w * ai * b[k];
            }
        }
    }
    let trace = (0..ncols).fold(T::zero(), |acc, i| acc + ata[(i, i)]);
    let ridge = trace / T::from_usize(ncols).unwrap() * T::lit(1e-10) + T::lit(1e-14);
    for i in 0..ncols {
        ata[(i, i)] += ridge;
    }
    let chol = ata.cholesky().ok_or_else(|| Error::Degenerate {
        kind: "spline",
        reason: "normal equations not positive definite".into(),
    })?;
    let x = chol.solve(&atb);
    Ok((0..ncols).map(|i| Vec3::new(x[(i, 0)], x[(i, 1)], x[(i, 2)])).collect())
}

/// Cubic B-spline curve on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BSplineCurve<T: Scalar> {
    pub basis: Basis,
    pub control: Vec<Vec3<T>>,
}

impl<T: Scalar> BSplineCurve<T> {
    pub fn eval(&self, t: T) -> Vec3<T> {
        let b = self.basis.eval(t);
        (0..4).fold(Vec3::zeros(), |acc, i| acc + self.control[b.idx[i]] * b.val[i])
    }

    fn derivs(&self, t: T) -> (Vec3<T>, Vec3<T>, Vec3<T>) {
        let b = self.basis.eval(t);
        let mut p = Vec3::zeros();
        let mut d1 = Vec3::zeros();
        let mut d2 = Vec3::zeros();
        for i in 0..4 {
            let c = self.control[b.idx[i]];
            p += c * b.val[i];
            d1 += c * b.d1[i];
            d2 += c * b.d2[i];
        }
        (p, d1, d2)
    }

    pub fn is_closed(&self) -> bool {
        self.basis.is_periodic()
    }

    /// Closest parameter to `p`: coarse scan then Newton polish.
    pub fn project(&self, p: &Vec3<T>) -> (T, Vec3<T>, T) {
        let n = 64;
        let closed = self.is_closed();
        let denom = if closed { n } else { n - 1 };
        let mut best_t = T::zero();
        let mut best_d = T::max_value().unwrap();
        for i in 0..n {
            let t = T::from_usize(i).unwrap() / T::from_usize(denom).unwrap();
            let d = (self.eval(t) - p).norm_squared();
            if d < best_d {
                best_d = d;
                best_t = t;
            }
        }
        let mut t = best_t;
        for _ in 0..30 {
            let (c, d1, d2) = self.derivs(t);
            let r = c - p;
            let g = d1.dot(&r);
            let h = d1.dot(&d1) + d2.dot(&r);
            let step = if h > T::zero() { g / h } else { g / (d1.dot(&d1) + T::lit(1e-12)) };
            let nt = self.basis.wrap(t - step);
            if (self.eval(nt) - p).norm_squared() > (c - p).norm_squared() {
                break;
            }
            let done = (nt - t).abs() < T::lit(1e-14);
            t = nt;
            if done {
                break;
            }
        }
        let foot = self.eval(t);
        let dist = (foot - p).norm();
        (t, foot, dist)
    }

    /// Weighted least-squares fit to targets at fixed parameters.
    pub fn fit(basis: Basis, params: &[T], targets: &[Vec3<T>], weights: &[T]) -> Result<Self> {
        let rows: Vec<_> = params
            .iter()
            .zip(targets)
            .zip(weights)
            .map(|((&t, &q), &w)| {
                let b = basis.eval(t);
                let terms: Vec<_> = (0..4).map(|i| (b.idx[i], b.val[i])).collect();
                (terms, q, w)
            })
            .collect();
        let control = weighted_control_solve(&rows, basis.count())?;
        Ok(BSplineCurve { basis, control })
    }
}

/// Tensor-product cubic B-spline surface on `[0, 1]²`. Control points are
/// stored row-major with `u` as the slow index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BSplineSurface<T: Scalar> {
    pub u_basis: Basis,
    pub v_basis: Basis,
    pub control: Vec<Vec3<T>>,
}

pub(crate) struct SurfaceDerivs<T: Scalar> {
    pub p: Vec3<T>,
    pub du: Vec3<T>,
    pub dv: Vec3<T>,
    pub duu: Vec3<T>,
    pub duv: Vec3<T>,
    pub dvv: Vec3<T>,
}

impl<T: Scalar> BSplineSurface<T> {
    fn ctrl(&self, i: usize, j: usize) -> Vec3<T> {
        self.control[i * self.v_basis.count() + j]
    }

    pub fn eval(&self, u: T, v: T) -> Vec3<T> {
        let bu = self.u_basis.eval(u);
        let bv = self.v_basis.eval(v);
        let mut p = Vec3::zeros();
        for a in 0..4 {
            for b in 0..4 {
                p += self.ctrl(bu.idx[a], bv.idx[b]) * (bu.val[a] * bv.val[b]);
            }
        }
        p
    }

    pub(crate) fn derivs(&self, u: T, v: T) -> SurfaceDerivs<T> {
        let bu = self.u_basis.eval(u);
        let bv = self.v_basis.eval(v);
        let z = Vec3::zeros();
        let mut d = SurfaceDerivs { p: z, du: z, dv: z, duu: z, duv: z, dvv: z };
        for a in 0..4 {
            for b in 0..4 {
                let c = self.ctrl(bu.idx[a], bv.idx[b]);
                d.p += c * (bu.val[a] * bv.val[b]);
                d.du += c * (bu.d1[a] * bv.val[b]);
                d.dv += c * (bu.val[a] * bv.d1[b]);
                d.duu += c * (bu.d2[a] * bv.val[b]);
                d.duv += c * (bu.d1[a] * bv.d1[b]);
                d.dvv += c * (bu.val[a] * bv.d2[b]);
            }
        }
        d
    }

    pub fn normal(&self, u: T, v: T) -> Vec3<T> {
        let d = self.derivs(u, v);
        let n = d.du.cross(&d.dv);
        if n.norm() > T::lit(1e-14) {
            n.normalize()
        } else {
            Vec3::z()
        }
    }

    /// Closest point: nearest sample of a coarse grid, then damped Newton.
    /// The coarse grid contains the 10×10 sample parameters, so the result
    /// is never farther than any sample of a grid-resampled patch.
    pub fn project(&self, p: &Vec3<T>) -> (T, T, Vec3<T>, T) {
        let (nu, ud) = if self.u_basis.is_periodic() { (30, 30) } else { (28, 27) };
        let (nv, vd) = if self.v_basis.is_periodic() { (30, 30) } else { (28, 27) };
        let mut best = (T::zero(), T::zero());
        let mut best_d = T::max_value().unwrap();
        for i in 0..nu {
            let u = T::from_usize(i).unwrap() / T::from_usize(ud).unwrap();
            for j in 0..nv {
                let v = T::from_usize(j).unwrap() / T::from_usize(vd).unwrap();
                let d = (self.eval(u, v) - p).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = (u, v);
                }
            }
        }
        self.newton_project(p, best.0, best.1)
    }

    pub(crate) fn newton_project(&self, p: &Vec3<T>, u0: T, v0: T) -> (T, T, Vec3<T>, T) {
        let (mut u, mut v) = (u0, v0);
        let mut cur = (self.eval(u, v) - p).norm_squared();
        for _ in 0..40 {
            let d = self.derivs(u, v);
            let r = d.p - p;
            let g = Vector2::new(d.du.dot(&r), d.dv.dot(&r));
            let h11 = d.du.dot(&d.du) + d.duu.dot(&r);
            let h12 = d.du.dot(&d.dv) + d.duv.dot(&r);
            let h22 = d.dv.dot(&d.dv) + d.dvv.dot(&r);
            let det = h11 * h22 - h12 * h12;
            let step = if det > T::lit(1e-20) && h11 > T::zero() {
                Vector2::new((h22 * g.x - h12 * g.y) / det, (h11 * g.y - h12 * g.x) / det)
            } else {
                let jj = d.du.dot(&d.du) + d.dv.dot(&d.dv) + T::lit(1e-12);
                g / jj
            };
            let mut lambda = T::one();
            let mut accepted = false;
            for _ in 0..12 {
                let nu = self.u_basis.wrap(u - step.x * lambda);
                let nv = self.v_basis.wrap(v - step.y * lambda);
                let nd = (self.eval(nu, nv) - p).norm_squared();
                if nd <= cur {
                    let moved = (nu - u).abs() + (nv - v).abs();
                    u = nu;
                    v = nv;
                    let improved = cur - nd;
                    cur = nd;
                    accepted = moved > T::lit(1e-15) && improved > T::zero();
                    break;
                }
                lambda *= T::lit(0.5);
            }
            if !accepted {
                break;
            }
        }
        let foot = self.eval(u, v);
        let dist = (foot - p).norm();
        (u, v, foot, dist)
    }

    /// Weighted least-squares fit of control points to targets at fixed `(u, v)`.
    pub fn fit(
        u_basis: Basis,
        v_basis: Basis,
        params: &[(T, T)],
        targets: &[Vec3<T>],
        weights: &[T],
    ) -> Result<Self> {
        let nv = v_basis.count();
        let rows: Vec<_> = params
            .iter()
            .zip(targets)
            .zip(weights)
            .map(|((&(u, v), &q), &w)| {
                let bu = u_basis.eval(u);
                let bv = v_basis.eval(v);
                let mut terms = Vec::with_capacity(16);
                for a in 0..4 {
                    for b in 0..4 {
                        terms.push((bu.idx[a] * nv + bv.idx[b], bu.val[a] * bv.val[b]));
                    }
                }
                (terms, q, w)
            })
            .collect();
        let control = weighted_control_solve(&rows, u_basis.count() * nv)?;
        Ok(BSplineSurface { u_basis, v_basis, control })
    }
}
