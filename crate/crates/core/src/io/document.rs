//! Versioned JSON complex documents.
//!
//! ```json
//! {
//!   "schema": "chainrep.complex",
//!   "version": 1,
//!   "kind": "chain",
//!   "corners": [{ "id": 0, "validness": 1.0, "point": [0.1, 0.1, 0.1] }],
//!   "curves": [{ "id": 0, "validness": 1.0, "kind": "line", "openness": 1.0,
//!                "samples": [[...], ...], "primitive": { ... } }],
//!   "patches": [{ "id": 0, "validness": 1.0, "kind": "plane", "u_closed": 0.0,
//!                 "samples": [[...], ...] }],
//!   "topology": {
//!     "fe": { "rows": 6, "cols": 12, "entries": [[0, 3, 1.0], ...] },
//!     "ev": { "rows": 12, "cols": 8, "dense": [0.0, 1.0, ...] },
//!     "fv": { ... }
//!   },
//!   "provenance": { "generator": "synth", "shape": "cube" }
//! }
//! ```
//!
//! `kind` is `chain` for definite complexes and `probabilistic` for soft
//! ones. Chain records carry a `kind` label and 0/1 probabilities; soft
//! records carry `type_probs` instead. Matrices use sparse triplets
//! (`entries`) or a row-major `dense` array. Floats are written in their
//! shortest round-trip form, so parse∘serialize is the identity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::complex::{BinaryMatrix, ChainComplex, Corner, Curve, CurveKind, Patch, PatchKind};
use crate::error::{Error, Result};
use crate::extraction::{ProbabilisticComplex, SoftCorner, SoftCurve, SoftMatrix, SoftPatch};
use crate::geometry::{CurveSamples, PatchSamples};
use crate::primitive::{CurvePrimitive, Surface};
use crate::scalar::Vec3;
use crate::{is_valid_topology, Complex, SoftComplex};

pub const SCHEMA: &str = "chainrep.complex";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    Chain,
    Probabilistic,
}

/// What to do with documents that parse but break complex invariants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Reject them.
    #[default]
    Strict,
    /// Log a warning and return them.
    Lenient,
}

/// The complex held by a document.
#[derive(Clone, Debug, PartialEq)]
pub enum ComplexData {
    Chain(Complex),
    Probabilistic(SoftComplex),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexDocument {
    pub data: ComplexData,
    pub provenance: BTreeMap<String, String>,
}

impl ComplexDocument {
    pub fn chain(c: Complex) -> Self {
        ComplexDocument { data: ComplexData::Chain(c), provenance: BTreeMap::new() }
    }

    pub fn probabilistic(p: SoftComplex) -> Self {
        ComplexDocument { data: ComplexData::Probabilistic(p), provenance: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.provenance.insert(key.to_string(), value.to_string());
        self
    }

    pub fn kind(&self) -> DocumentKind {
        match self.data {
            ComplexData::Chain(_) => DocumentKind::Chain,
            ComplexData::Probabilistic(_) => DocumentKind::Probabilistic,
        }
    }

    pub fn into_chain(self) -> Result<Complex> {
        match self.data {
            ComplexData::Chain(c) => Ok(c),
            ComplexData::Probabilistic(_) => Err(Error::Argument("expected a chain complex document, got a probabilistic one".into())),
        }
    }

    pub fn into_probabilistic(self) -> Result<SoftComplex> {
        match self.data {
            ComplexData::Probabilistic(p) => Ok(p),
            ComplexData::Chain(_) => Err(Error::Argument("expected a probabilistic complex document, got a chain one".into())),
        }
    }
}

// ---------------------------------------------------------------------------
// Wire format

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    schema: String,
    version: u32,
    kind: DocumentKind,
    corners: Vec<CornerRecord>,
    curves: Vec<CurveRecord>,
    patches: Vec<PatchRecord>,
    topology: Topology,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    provenance: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CornerRecord {
    id: usize,
    validness: f64,
    point: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveRecord {
    id: usize,
    validness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<CurveKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    type_probs: Option<[f64; 4]>,
    openness: f64,
    samples: Vec<[f64; 3]>,
    /// Sample ring closure for soft curves, whose openness is a probability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    closed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    primitive: Option<CurvePrimitive<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchRecord {
    id: usize,
    validness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<PatchKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    type_probs: Option<[f64; 6]>,
    u_closed: f64,
    samples: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid_u_closed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    primitive: Option<Surface<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Topology {
    fe: MatrixRecord,
    ev: MatrixRecord,
    fv: MatrixRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRecord {
    rows: usize,
    cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entries: Option<Vec<(usize, usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dense: Option<Vec<f64>>,
}

/// Dense storage is only accepted below this many rows and columns.
pub const DENSE_LIMIT: usize = 1000;

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn arr(p: &Vec3<f64>) -> [f64; 3] {
    [p.x, p.y, p.z]
}

fn vec3(a: &[f64; 3]) -> Vec3<f64> {
    Vec3::new(a[0], a[1], a[2])
}

fn sparse(rows: usize, cols: usize, get: impl Fn(usize, usize) -> f64) -> MatrixRecord {
    let mut entries = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let v = get(i, j);
            if v != 0.0 {
                entries.push((i, j, v));
            }
        }
    }
    MatrixRecord { rows, cols, entries: Some(entries), dense: None }
}

fn binary_record(m: &BinaryMatrix) -> MatrixRecord {
    sparse(m.rows(), m.cols(), |i, j| flag(m.get(i, j)))
}

fn soft_record(m: &SoftMatrix<f64>) -> MatrixRecord {
    sparse(m.rows(), m.cols(), |i, j| m.get(i, j))
}

fn to_doc(d: &ComplexDocument) -> Doc {
    let (corners, curves, patches, topology) = match &d.data {
        ComplexData::Chain(c) => (
            c.corners.iter().enumerate().map(|(id, v)| CornerRecord { id, validness: flag(v.exists), point: arr(&v.point) }).collect(),
            c.curves
                .iter()
                .enumerate()
                .map(|(id, e)| CurveRecord {
                    id,
                    validness: flag(e.exists),
                    kind: Some(e.kind),
                    type_probs: None,
                    openness: flag(e.is_open()),
                    samples: e.samples.points().iter().map(arr).collect(),
                    closed: None,
                    primitive: e.primitive.clone(),
                })
                .collect(),
            c.patches
                .iter()
                .enumerate()
                .map(|(id, f)| PatchRecord {
                    id,
                    validness: flag(f.exists),
                    kind: Some(f.kind),
                    type_probs: None,
                    u_closed: flag(f.is_u_closed()),
                    samples: f.samples.points().iter().map(arr).collect(),
                    grid_u_closed: None,
                    primitive: f.primitive.clone(),
                })
                .collect(),
            Topology { fe: binary_record(&c.fe), ev: binary_record(&c.ev), fv: binary_record(&c.fv) },
        ),
        ComplexData::Probabilistic(p) => (
            p.corners.iter().enumerate().map(|(id, v)| CornerRecord { id, validness: v.validness, point: arr(&v.point) }).collect(),
            p.curves
                .iter()
                .enumerate()
                .map(|(id, e)| CurveRecord {
                    id,
                    validness: e.validness,
                    kind: None,
                    type_probs: Some(e.type_probs),
                    openness: e.openness,
                    samples: e.samples.points().iter().map(arr).collect(),
                    closed: Some(e.samples.is_closed()),
                    primitive: None,
                })
                .collect(),
            p.patches
                .iter()
                .enumerate()
                .map(|(id, f)| PatchRecord {
                    id,
                    validness: f.validness,
                    kind: None,
                    type_probs: Some(f.type_probs),
                    u_closed: f.u_closed,
                    samples: f.samples.points().iter().map(arr).collect(),
                    grid_u_closed: Some(f.samples.is_u_closed()),
                    primitive: None,
                })
                .collect(),
            Topology { fe: soft_record(&p.fe), ev: soft_record(&p.ev), fv: soft_record(&p.fv) },
        ),
    };
    Doc {
        schema: SCHEMA.into(),
        version: VERSION,
        kind: d.kind(),
        corners,
        curves,
        patches,
        topology,
        provenance: d.provenance.clone(),
    }
}

fn parse_err(locus: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse { locus: locus.into(), message: message.into() }
}

/// Relabels an error raised while building an element with its record locus.
fn at<T>(locus: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Structural(m) => Error::Structural(format!("{locus}: {m}")),
        Error::Argument(m) | Error::Parse { message: m, .. } => parse_err(locus, m),
        other => other,
    })
}

fn check_ids(locus: &str, ids: impl Iterator<Item = usize>) -> Result<()> {
    for (i, id) in ids.enumerate() {
        if id != i {
            return Err(parse_err(format!("{locus}[{i}].id"), format!("expected id {i}, found {id}")));
        }
    }
    Ok(())
}

fn dense_matrix(name: &str, m: &MatrixRecord, rows: usize, cols: usize) -> Result<Vec<f64>> {
    let locus = format!("topology.{name}");
    if m.rows != rows || m.cols != cols {
        return Err(Error::Structural(format!("{locus} is {}x{}, expected {rows}x{cols}", m.rows, m.cols)));
    }
    match (&m.entries, &m.dense) {
        (Some(entries), None) => {
            let mut out = vec![0.0; rows * cols];
            for (k, &(i, j, v)) in entries.iter().enumerate() {
                if i >= rows || j >= cols {
                    return Err(Error::Structural(format!("{locus}.entries[{k}]: ({i}, {j}) outside {rows}x{cols}")));
                }
                out[i * cols + j] = v;
            }
            Ok(out)
        }
        (None, Some(dense)) => {
            if rows >= DENSE_LIMIT || cols >= DENSE_LIMIT {
                return Err(parse_err(&locus, format!("dense storage is limited to matrices below {DENSE_LIMIT}x{DENSE_LIMIT}")));
            }
            if dense.len() != rows * cols {
                return Err(Error::Structural(format!("{locus}.dense has {} entries, expected {}", dense.len(), rows * cols)));
            }
            Ok(dense.clone())
        }
        _ => Err(parse_err(locus, "exactly one of `entries` and `dense` is required")),
    }
}

fn binary_matrix(name: &str, m: &MatrixRecord, rows: usize, cols: usize) -> Result<BinaryMatrix> {
    let data = dense_matrix(name, m, rows, cols)?;
    let mut b = BinaryMatrix::zeros(rows, cols);
    for (k, &v) in data.iter().enumerate() {
        if v != 0.0 && v != 1.0 {
            return Err(parse_err(format!("topology.{name}[{}, {}]", k / cols.max(1), k % cols.max(1)), format!("{v} is not 0 or 1")));
        }
        b.set(k / cols, k % cols, v == 1.0);
    }
    Ok(b)
}

fn binary_flag(locus: String, v: f64) -> Result<bool> {
    match v {
        0.0 => Ok(false),
        1.0 => Ok(true),
        _ => Err(parse_err(locus, format!("{v} is not 0 or 1 in a chain document"))),
    }
}

fn required<T>(locus: String, v: Option<T>) -> Result<T> {
    v.ok_or_else(|| parse_err(locus, "missing field"))
}

fn from_chain(d: Doc) -> Result<Complex> {
    let mut corners = Vec::with_capacity(d.corners.len());
    for (i, r) in d.corners.iter().enumerate() {
        let mut v = Corner::new(vec3(&r.point));
        v.exists = binary_flag(format!("corners[{i}].validness"), r.validness)?;
        corners.push(v);
    }
    let mut curves = Vec::with_capacity(d.curves.len());
    for (i, r) in d.curves.into_iter().enumerate() {
        let locus = format!("curves[{i}]");
        let kind = required(format!("{locus}.kind"), r.kind)?;
        let open = binary_flag(format!("{locus}.openness"), r.openness)?;
        let samples = at(&format!("{locus}.samples"), CurveSamples::new(r.samples.iter().map(vec3).collect(), !open))?;
        curves.push(Curve {
            kind,
            samples,
            primitive: r.primitive,
            exists: binary_flag(format!("{locus}.validness"), r.validness)?,
        });
    }
    let mut patches = Vec::with_capacity(d.patches.len());
    for (i, r) in d.patches.into_iter().enumerate() {
        let locus = format!("patches[{i}]");
        let kind = required(format!("{locus}.kind"), r.kind)?;
        let closed = binary_flag(format!("{locus}.u_closed"), r.u_closed)?;
        let samples = at(&format!("{locus}.samples"), PatchSamples::new(r.samples.iter().map(vec3).collect(), closed))?;
        patches.push(Patch {
            kind,
            samples,
            primitive: r.primitive,
            exists: binary_flag(format!("{locus}.validness"), r.validness)?,
        });
    }
    let (nf, ne, nv) = (patches.len(), curves.len(), corners.len());
    let fe = binary_matrix("fe", &d.topology.fe, nf, ne)?;
    let ev = binary_matrix("ev", &d.topology.ev, ne, nv)?;
    let fv = binary_matrix("fv", &d.topology.fv, nf, nv)?;
    at("corners", ChainComplex::new(corners, curves, patches, fe, ev, fv))
}

fn from_soft(d: Doc) -> Result<SoftComplex> {
    let corners: Vec<SoftCorner<f64>> =
        d.corners.iter().map(|r| SoftCorner { validness: r.validness, point: vec3(&r.point) }).collect();
    let mut curves = Vec::with_capacity(d.curves.len());
    for (i, r) in d.curves.into_iter().enumerate() {
        let locus = format!("curves[{i}]");
        let type_probs = required(format!("{locus}.type_probs"), r.type_probs)?;
        let closed = r.closed.unwrap_or(r.openness < 0.5);
        let samples = at(&format!("{locus}.samples"), CurveSamples::new(r.samples.iter().map(vec3).collect(), closed))?;
        curves.push(SoftCurve { validness: r.validness, openness: r.openness, type_probs, samples });
    }
    let mut patches = Vec::with_capacity(d.patches.len());
    for (i, r) in d.patches.into_iter().enumerate() {
        let locus = format!("patches[{i}]");
        let type_probs = required(format!("{locus}.type_probs"), r.type_probs)?;
        let closed = r.grid_u_closed.unwrap_or(r.u_closed >= 0.5);
        let samples = at(&format!("{locus}.samples"), PatchSamples::new(r.samples.iter().map(vec3).collect(), closed))?;
        patches.push(SoftPatch { validness: r.validness, u_closed: r.u_closed, type_probs, samples });
    }
    let (nf, ne, nv) = (patches.len(), curves.len(), corners.len());
    let fe = SoftMatrix::from_vec(nf, ne, dense_matrix("fe", &d.topology.fe, nf, ne)?)?;
    let ev = SoftMatrix::from_vec(ne, nv, dense_matrix("ev", &d.topology.ev, ne, nv)?)?;
    let fv = SoftMatrix::from_vec(nf, nv, dense_matrix("fv", &d.topology.fv, nf, nv)?)?;
    Ok(ProbabilisticComplex { corners, curves, patches, fe, ev, fv })
}

/// Invariant violations that strict loading rejects.
fn invariant_problem(data: &ComplexData) -> Option<String> {
    match data {
        ComplexData::Chain(c) => (!is_valid_topology(c)).then(|| "chain complex violates the topology constraints".to_string()),
        ComplexData::Probabilistic(p) => p.validate().err().map(|e| e.to_string()),
    }
}

pub fn to_json(d: &ComplexDocument) -> String {
    serde_json::to_string_pretty(&to_doc(d)).expect("documents always serialize")
}

pub fn from_json(text: &str, mode: LoadMode) -> Result<ComplexDocument> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: Doc = serde_path_to_error::deserialize(de).map_err(|e| {
        let locus = e.path().to_string();
        parse_err(if locus == "." { "document".to_string() } else { locus }, e.inner().to_string())
    })?;
    if doc.schema != SCHEMA {
        return Err(parse_err("schema", format!("expected \"{SCHEMA}\", found \"{}\"", doc.schema)));
    }
    if doc.version != VERSION {
        return Err(parse_err("version", format!("unsupported version {} (this build reads {VERSION})", doc.version)));
    }
    check_ids("corners", doc.corners.iter().map(|r| r.id))?;
    check_ids("curves", doc.curves.iter().map(|r| r.id))?;
    check_ids("patches", doc.patches.iter().map(|r| r.id))?;
    let provenance = doc.provenance.clone();
    let data = match doc.kind {
        DocumentKind::Chain => ComplexData::Chain(from_chain(doc)?),
        DocumentKind::Probabilistic => ComplexData::Probabilistic(from_soft(doc)?),
    };
    if let Some(problem) = invariant_problem(&data) {
        match mode {
            LoadMode::Strict => return Err(parse_err("document", problem)),
            LoadMode::Lenient => log::warn!("{problem}"),
        }
    }
    Ok(ComplexDocument { data, provenance })
}
