//! Residuals of the manifold, endpoint and closure equations, and the
//! existence dependencies between elements.

use serde::{Deserialize, Serialize};

use super::ChainComplex;
use crate::error::Result;
use crate::scalar::Scalar;

/// Mean absolute residual of each equation system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TopologyResiduals {
    /// `Σ_i FE[i,j] = 2E[j]`, averaged over curves.
    pub manifold: f64,
    /// `Σ_k EV[j,k] = 2E[j]O[j]`, averaged over all curves (closed ones included).
    pub endpoint: f64,
    /// `FE·EV = 2FV`, averaged over patch-corner pairs.
    pub closure: f64,
}

impl TopologyResiduals {
    pub fn is_zero(&self) -> bool {
        self.manifold == 0.0 && self.endpoint == 0.0 && self.closure == 0.0
    }
}

fn mean(total: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total as f64 / n as f64
    }
}

pub fn topology_residuals<T: Scalar>(c: &ChainComplex<T>) -> Result<TopologyResiduals> {
    c.validate()?;
    let (nf, ne, nv) = (c.num_patches(), c.num_curves(), c.num_corners());

    let manifold: usize = (0..ne)
        .map(|j| c.fe.col_sum(j).abs_diff(2 * c.curves[j].exists as usize))
        .sum();

    let endpoint: usize = (0..ne)
        .map(|j| {
            let e = &c.curves[j];
            c.ev.row_sum(j).abs_diff(2 * (e.exists && e.is_open()) as usize)
        })
        .sum();

    let prod = c.fe.product(&c.ev);
    let mut closure = 0usize;
    for (i, row) in prod.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            closure += v.abs_diff(2 * c.fv.get(i, k) as usize);
        }
    }

    Ok(TopologyResiduals {
        manifold: mean(manifold, ne),
        endpoint: mean(endpoint, ne),
        closure: mean(closure, nf * nv),
    })
}

/// Existence dependencies: an incidence requires both ends to exist, a patch
/// needs a boundary curve unless it is u-closed without any, and a corner
/// needs an incident curve.
pub fn check_dependencies<T: Scalar>(c: &ChainComplex<T>) -> bool {
    if c.validate().is_err() {
        return false;
    }
    for (i, f) in c.patches.iter().enumerate() {
        let row = c.fe.row_sum(i);
        if row > 0 && !f.exists {
            return false;
        }
        if c.fv.row_sum(i) > 0 && !f.exists {
            return false;
        }
        let waived = f.is_u_closed() && row == 0;
        if f.exists && row == 0 && !waived {
            return false;
        }
    }
    for (j, e) in c.curves.iter().enumerate() {
        if !e.exists && (c.fe.col_sum(j) > 0 || c.ev.row_sum(j) > 0) {
            return false;
        }
    }
    for (k, v) in c.corners.iter().enumerate() {
        let col = c.ev.col_sum(k);
        if !v.exists && (col > 0 || c.fv.col_sum(k) > 0) {
            return false;
        }
        if v.exists && col == 0 {
            return false;
        }
    }
    true
}

pub fn is_valid_topology<T: Scalar>(c: &ChainComplex<T>) -> bool {
    topology_residuals(c).is_ok_and(|r| r.is_zero()) && check_dependencies(c)
}
