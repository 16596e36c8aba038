//! Minimum-cost bipartite assignment (shortest augmenting paths with
//! potentials, O(n²m)).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum-total-cost one-to-one assignment on a possibly rectangular cost
/// matrix. Returns `(row, col)` pairs sorted by row, covering
/// `min(rows, cols)` pairs.
pub fn hungarian_match<T: Scalar>(cost: &DMatrix<T>) -> Result<Vec<(usize, usize)>> {
    for ((r, c), x) in cost.iter().enumerate().map(|(k, x)| ((k % cost.nrows(), k / cost.nrows()), x)) {
        if !x.is_finite_val() {
            return Err(Error::Argument(format!("cost[{r},{c}] = {x} is not finite")));
        }
    }
    if cost.nrows() == 0 || cost.ncols() == 0 {
        return Ok(Vec::new());
    }
    if cost.nrows() > cost.ncols() {
        let mut pairs: Vec<_> = solve(&cost.transpose()).into_iter().map(|(c, r)| (r, c)).collect();
        pairs.sort_unstable();
        return Ok(pairs);
    }
    Ok(solve(cost))
}

/// Sum of the assigned entries, in row order.
pub fn assignment_cost<T: Scalar>(cost: &DMatrix<T>, pairs: &[(usize, usize)]) -> T {
    pairs.iter().fold(T::zero(), |acc, &(r, c)| acc + cost[(r, c)])
}

/// Requires `rows <= cols`.
fn solve<T: Scalar>(a: &DMatrix<T>) -> Vec<(usize, usize)> {
    let (n, m) = (a.nrows(), a.ncols());
    let inf = T::max_value().unwrap();
    // 1-based rows and columns; column 0 is the virtual start.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m).filter(|&j| p[j] != 0).map(|j| (p[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_favoring() {
        let c = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 });
        assert_eq!(hungarian_match(&c).unwrap(), vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn single_entry() {
        assert_eq!(hungarian_match(&DMatrix::from_element(1, 1, 4.0)).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn rectangular_both_ways() {
        let c = DMatrix::from_row_slice(2, 3, &[5.0, 1.0, 3.0, 2.0, 1.5, 9.0]);
        let pairs = hungarian_match(&c).unwrap();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
        let t = hungarian_match(&c.transpose()).unwrap();
        assert_eq!(t, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn nan_rejected() {
        let c = DMatrix::from_row_slice(2, 2, &[0.0, f64::NAN, 1.0, 2.0]);
        assert!(matches!(hungarian_match(&c), Err(Error::Argument(_))));
    }

    #[test]
    fn empty_matrix() {
        assert!(hungarian_match(&DMatrix::<f64>::zeros(0, 4)).unwrap().is_empty());
    }
}
