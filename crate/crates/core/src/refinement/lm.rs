//! Damped Gauss-Newton (Levenberg-Marquardt) with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Scalar;

pub(crate) struct LmResult<T: Scalar> {
    pub x: DVector<T>,
    /// Sum of squared residuals at `x`.
    pub cost: T,
    pub converged: bool,
}

fn cost<T: Scalar>(r: &DVector<T>) -> T {
    r.norm_squared()
}

fn jacobian<T: Scalar>(f: &impl Fn(&DVector<T>) -> DVector<T>, x: &DVector<T>, m: usize) -> DMatrix<T> {
    let n = x.len();
    let mut j = DMatrix::zeros(m, n);
    let base = T::eps().cbrt();
    for c in 0..n {
        let h = base * x[c].abs().max(T::one());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += h;
        xm[c] -= h;
        let d = (f(&xp) - f(&xm)) / (h + h);
        j.set_column(c, &d);
    }
    j
}

/// Minimizes `‖f(x)‖²` starting at `x0`.
pub(crate) fn minimize<T: Scalar>(
    f: impl Fn(&DVector<T>) -> DVector<T>,
    x0: DVector<T>,
    max_iter: usize,
) -> LmResult<T> {
    let mut x = x0;
    let mut r = f(&x);
    let mut c = cost(&r);
    let mut lambda = T::lit(1e-3);
    let tiny = T::eps() * T::eps();
    let mut converged = false;
    for _ in 0..max_iter {
        if c <= tiny {
            converged = true;
            break;
        }
        let j = jacobian(&f, &x, r.len());
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        if g.amax() <= T::eps() * c.sqrt().max(T::eps()) {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..16 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * (jtj[(i, i)] + T::lit(1e-12));
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => match a.lu().solve(&g) {
                    Some(s) => s,
                    None => {
                        lambda *= T::lit(10.0);
                        continue;
                    }
                },
            };
            let xn = &x - &step;
            let rn = f(&xn);
            let cn = cost(&rn);
            if cn.is_finite_val() && cn < c {
                let rel = (c - cn) / c.max(tiny);
                let small_step = step.norm() <= T::eps().sqrt() * (x.norm() + T::eps().sqrt());
                x = xn;
                r = rn;
                c = cn;
                lambda = (lambda * T::lit(0.3)).max(T::lit(1e-12));
                improved = true;
                if rel < T::eps() * T::lit(16.0) || small_step {
                    converged = true;
                }
                break;
            }
            lambda *= T::lit(10.0);
        }
        if !improved {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    LmResult { x, cost: c, converged }
}
