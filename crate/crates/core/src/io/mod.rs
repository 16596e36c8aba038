//! Files: complex documents, point clouds and mesh export.

mod document;
mod mesh;

use std::fs;
use std::io::Write as _;
use std::path::Path;

pub use document::{from_json, to_json, ComplexData, ComplexDocument, DocumentKind, LoadMode, DENSE_LIMIT, SCHEMA, VERSION};
pub use mesh::{export_mesh, mesh_export, mesh_to_obj, triangulate_patch, MeshExport, PatchMesh, TRIM_SUBDIVISIONS};

use crate::error::{Error, Result};
use crate::scalar::Vec3;

/// Writes `contents` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path.file_name().ok_or_else(|| Error::Argument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn save_complex(doc: &ComplexDocument, path: &Path) -> Result<()> {
    write_atomic(path, to_json(doc).as_bytes())
}

pub fn load_complex(path: &Path, mode: LoadMode) -> Result<ComplexDocument> {
    let text = fs::read_to_string(path)?;
    from_json(&text, mode).map_err(|e| match e {
        Error::Parse { locus, message } => Error::Parse { locus: format!("{}: {locus}", path.display()), message },
        other => other,
    })
}

/// One `x y z` line per point, shortest round-trip float formatting.
pub fn points_to_xyz(points: &[Vec3<f64>]) -> String {
    let mut out = String::with_capacity(points.len() * 48);
    for p in points {
        out.push_str(&format!("{:?} {:?} {:?}\n", p.x, p.y, p.z));
    }
    out
}

/// Parses `x y z` lines; blank lines and `#` comments are skipped, extra
/// columns (normals, colors) are ignored.
pub fn points_from_xyz(text: &str) -> Result<Vec<Vec3<f64>>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut c = [0.0f64; 3];
        let mut tokens = line.split_whitespace();
        for x in &mut c {
            let tok = tokens.next().ok_or_else(|| Error::Parse { locus: format!("line {}", n + 1), message: "expected three coordinates".into() })?;
            *x = tok.parse().map_err(|_| Error::Parse { locus: format!("line {}", n + 1), message: format!("`{tok}` is not a number") })?;
        }
        if !c.iter().all(|x| x.is_finite()) {
            return Err(Error::Parse { locus: format!("line {}", n + 1), message: "non-finite coordinate".into() });
        }
        out.push(Vec3::new(c[0], c[1], c[2]));
    }
    Ok(out)
}

pub fn save_points(points: &[Vec3<f64>], path: &Path) -> Result<()> {
    write_atomic(path, points_to_xyz(points).as_bytes())
}

pub fn load_points(path: &Path) -> Result<Vec<Vec3<f64>>> {
    points_from_xyz(&fs::read_to_string(path)?).map_err(|e| match e {
        Error::Parse { locus, message } => Error::Parse { locus: format!("{}: {locus}", path.display()), message },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyz_round_trip() {
        let pts = vec![Vec3::new(0.1, 1.0 / 3.0, -2.5e-17), Vec3::new(1e300, 0.0, 7.0)];
        assert_eq!(points_from_xyz(&points_to_xyz(&pts)).unwrap(), pts);
    }

    #[test]
    fn xyz_errors_name_the_line() {
        let err = points_from_xyz("# header\n0 0 0\n1 2\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(points_from_xyz("0 0 nan").is_err());
        assert_eq!(points_from_xyz("1 2 3 0 0 1\n").unwrap().len(), 1);
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
