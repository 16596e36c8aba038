//! Extraction, refinement and evaluation of B-Rep chain complexes.
//!
//! A soft [`ProbabilisticComplex`] (per-element validness, type and
//! adjacency probabilities with sampled geometry) is turned into a definite
//! [`ChainComplex`] by an integer program that enforces the manifold,
//! endpoint and closure equations. The result can be refined against an
//! input point cloud and scored against a reference.

pub mod complex;
pub mod error;
pub mod extraction;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod primitive;
pub mod refinement;
pub mod scalar;
pub mod synth;

pub use complex::{
    check_dependencies, is_valid_topology, topology_residuals, BinaryMatrix, ChainComplex, Corner,
    Curve, CurveKind, ElementGroup, Patch, PatchKind, TopologyResiduals,
};
pub use error::{Error, Result};
pub use extraction::{extract_complex, ProbabilisticComplex};
pub use scalar::{Scalar, Vec3};

pub type Complex = ChainComplex<f64>;
pub type Complex32 = ChainComplex<f32>;
pub type SoftComplex = ProbabilisticComplex<f64>;
