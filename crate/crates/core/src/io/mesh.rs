//! Triangle mesh and polyline export in Wavefront OBJ.
//!
//! Patches are triangulated from their refined sample grids. Triangles of
//! an open patch whose parametric centroid lies outside the region bounded
//! by its boundary curves (projected into the patch's grid parameters,
//! even-odd rule) are culled. u-closed patches are not trimmed: their
//! boundary loops run along the grid border.

use std::fmt::Write as _;
use std::path::Path;

use crate::complex::ChainComplex;
use crate::error::Result;
use crate::geometry::{dense_grid, PATCH_GRID};
use crate::refinement::project_point_to_samples;
use crate::scalar::Vec3;

use super::write_atomic;

/// Subdivisions per grid cell for exported patch meshes.
pub const TRIM_SUBDIVISIONS: usize = 4;

/// Vertices closer than this (relative to the patch extent) are welded.
const WELD_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PatchMesh {
    pub patch: usize,
    pub vertices: Vec<Vec3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    /// Triangles removed by trimming.
    pub culled: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeshExport {
    pub patches: Vec<PatchMesh>,
    /// `(curve index, points, closed)`.
    pub polylines: Vec<(usize, Vec<Vec3<f64>>, bool)>,
    pub corners: Vec<(usize, Vec3<f64>)>,
    /// Patches with degenerate grids.
    pub skipped: Vec<usize>,
}

fn segment_crosses(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    if (a.1 > p.1) == (b.1 > p.1) {
        return false;
    }
    let u = a.0 + (p.1 - a.1) / (b.1 - a.1) * (b.0 - a.0);
    u > p.0
}

/// Even-odd containment of `p` in the union of parametric polylines.
fn inside(p: (f64, f64), loops: &[(Vec<(f64, f64)>, bool)]) -> bool {
    let mut odd = false;
    for (pts, closed) in loops {
        let n = pts.len();
        let segs = if *closed { n } else { n.saturating_sub(1) };
        for i in 0..segs {
            if segment_crosses(p, pts[i], pts[(i + 1) % n]) {
                odd = !odd;
            }
        }
    }
    odd
}

/// Welds coincident vertices and drops triangles that collapse.
fn weld(vertices: Vec<Vec3<f64>>, triangles: Vec<[usize; 3]>) -> (Vec<Vec3<f64>>, Vec<[usize; 3]>) {
    let extent = vertices.iter().flat_map(|p| p.iter().map(|x| x.abs())).fold(1.0, f64::max);
    let tol = WELD_TOLERANCE * extent;
    let mut remap = Vec::with_capacity(vertices.len());
    let mut kept: Vec<Vec3<f64>> = Vec::new();
    for p in &vertices {
        match kept.iter().position(|q| (q - p).norm() <= tol) {
            Some(k) => remap.push(k),
            None => {
                remap.push(kept.len());
                kept.push(*p);
            }
        }
    }
    let tris = triangles
        .into_iter()
        .map(|t| t.map(|i| remap[i]))
        .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
        .collect();
    (kept, tris)
}

/// Triangulates patch `face` of `c` with `sub` subdivisions per grid cell,
/// trimmed by its boundary curves. `None` for degenerate grids.
pub fn triangulate_patch(c: &ChainComplex<f64>, face: usize, sub: usize) -> Option<PatchMesh> {
    let patch = &c.patches[face];
    let samples = &patch.samples;
    let sub = sub.max(1);
    let closed = samples.is_u_closed();
    let grid = dense_grid(samples, sub);
    let rows_v = (PATCH_GRID - 1) * sub + 1;
    let rows_u = grid.len() / rows_v;
    let cells_u = if closed { rows_u } else { rows_u - 1 };
    let idx = |iu: usize, iv: usize| (iu % rows_u) * rows_v + iv;

    let loops: Vec<(Vec<(f64, f64)>, bool)> = if closed {
        vec![]
    } else {
        c.face_curves(face)
            .into_iter()
            .filter(|&j| c.curves[j].exists)
            .map(|j| {
                let s = &c.curves[j].samples;
                let uv = s.points().iter().map(|p| {
                    let (u, v, _, _) = project_point_to_samples(p, samples);
                    (u, v)
                });
                (uv.collect(), s.is_closed())
            })
            .collect()
    };

    let su = (sub * (PATCH_GRID - 1)) as f64;
    let mut triangles = Vec::with_capacity(cells_u * (rows_v - 1) * 2);
    let mut culled = 0;
    for iu in 0..cells_u {
        for iv in 0..rows_v - 1 {
            let (a, b, cc, d) = (idx(iu, iv), idx(iu + 1, iv), idx(iu, iv + 1), idx(iu + 1, iv + 1));
            for (tri, du, dv) in [([a, b, d], 2.0, 1.0), ([a, d, cc], 1.0, 2.0)] {
                let centroid = ((iu as f64 + du / 3.0) / su, (iv as f64 + dv / 3.0) / su);
                if loops.is_empty() || inside(centroid, &loops) {
                    triangles.push(tri);
                } else {
                    culled += 1;
                }
            }
        }
    }
    if triangles.is_empty() && culled > 0 {
        log::warn!("patch {face}: trimming removed every triangle, exporting it untrimmed");
        return triangulate_untrimmed(face, grid, rows_u, rows_v, closed);
    }
    let area: f64 = triangles.iter().map(|t| (grid[t[1]] - grid[t[0]]).cross(&(grid[t[2]] - grid[t[0]])).norm()).sum();
    if !(area > 0.0) {
        log::warn!("patch {face}: degenerate sample grid, skipped");
        return None;
    }
    let (vertices, triangles) = weld(grid, triangles);
    Some(PatchMesh { patch: face, vertices, triangles, culled })
}

fn triangulate_untrimmed(face: usize, grid: Vec<Vec3<f64>>, rows_u: usize, rows_v: usize, closed: bool) -> Option<PatchMesh> {
    let cells_u = if closed { rows_u } else { rows_u - 1 };
    let idx = |iu: usize, iv: usize| (iu % rows_u) * rows_v + iv;
    let mut triangles = Vec::new();
    for iu in 0..cells_u {
        for iv in 0..rows_v - 1 {
            let (a, b, c, d) = (idx(iu, iv), idx(iu + 1, iv), idx(iu, iv + 1), idx(iu + 1, iv + 1));
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    let (vertices, triangles) = weld(grid, triangles);
    (!triangles.is_empty()).then_some(PatchMesh { patch: face, vertices, triangles, culled: 0 })
}

/// Meshes every existing patch, curve and corner of `c`.
pub fn mesh_export(c: &ChainComplex<f64>, sub: usize) -> MeshExport {
    let mut out = MeshExport::default();
    for (i, f) in c.patches.iter().enumerate() {
        if !f.exists {
            continue;
        }
        match triangulate_patch(c, i, sub) {
            Some(m) => out.patches.push(m),
            None => out.skipped.push(i),
        }
    }
    for (j, e) in c.curves.iter().enumerate().filter(|(_, e)| e.exists) {
        out.polylines.push((j, e.samples.points().to_vec(), e.samples.is_closed()));
    }
    for (k, v) in c.corners.iter().enumerate().filter(|(_, v)| v.exists) {
        out.corners.push((k, v.point));
    }
    out
}

/// OBJ text with one group per patch (`patch_<i>_<kind>`), curve
/// (`curve_<j>_<kind>`, as `l` polylines) and corner (`corner_<k>`, as `p`).
pub fn mesh_to_obj(c: &ChainComplex<f64>, m: &MeshExport) -> String {
    let mut s = String::new();
    let mut base = 1usize;
    let _ = writeln!(s, "# {} patches, {} curves, {} corners", m.patches.len(), m.polylines.len(), m.corners.len());
    for pm in &m.patches {
        let _ = writeln!(s, "g patch_{}_{}", pm.patch, c.patches[pm.patch].kind.name());
        for v in &pm.vertices {
            let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for t in &pm.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + base, t[1] + base, t[2] + base);
        }
        base += pm.vertices.len();
    }
    for (j, pts, closed) in &m.polylines {
        let _ = writeln!(s, "g curve_{}_{}", j, c.curves[*j].kind.name());
        for v in pts {
            let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        let mut line: Vec<String> = (0..pts.len()).map(|i| (base + i).to_string()).collect();
        if *closed {
            line.push(base.to_string());
        }
        let _ = writeln!(s, "l {}", line.join(" "));
        base += pts.len();
    }
    for (k, v) in &m.corners {
        let _ = writeln!(s, "g corner_{k}");
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        let _ = writeln!(s, "p {base}");
        base += 1;
    }
    s
}

/// Writes the OBJ export of `c` to `path` and returns what was written.
pub fn export_mesh(c: &ChainComplex<f64>, path: &Path, sub: usize) -> Result<MeshExport> {
    let m = mesh_export(c, sub);
    write_atomic(path, mesh_to_obj(c, &m).as_bytes())?;
    Ok(m)
}
