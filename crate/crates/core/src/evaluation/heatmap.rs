use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::TriMesh;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeatmapFiles {
    pub mesh: PathBuf,
    pub csv: PathBuf,
}

/// Diverging blue→white→red map of `d` over `[-range, range]`.
pub fn heatmap_color(d: f64, range: f64) -> [u8; 3] {
    let t = if range > 0.0 { (d / range).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |s: f64| (255.0 * (1.0 - s.abs())).round() as u8;
    if t < 0.0 {
        [fade(t), fade(t), 255]
    } else {
        [255, fade(t), fade(t)]
    }
}

/// Writes a vertex-colored ASCII PLY mesh and the raw distances as CSV.
///
/// `range` defaults to the largest absolute distance, giving a symmetric scale.
pub fn export_heatmap(
    mesh: &TriMesh,
    distances: &[f64],
    mesh_path: impl AsRef<Path>,
    csv_path: impl AsRef<Path>,
    range: Option<f64>,
) -> Result<HeatmapFiles> {
    if distances.len() != mesh.vertex_count() {
        return Err(Error::LengthMismatch {
            expected: mesh.vertex_count(),
            found: distances.len(),
        });
    }
    let range = range.unwrap_or_else(|| distances.iter().fold(0.0, |m, d| d.abs().max(m)));
    let mut ply = String::new();
    ply.push_str("ply\nformat ascii 1.0\ncomment signed surface error, mm\n");
    let _ = writeln!(ply, "comment color range +/- {range}");
    let _ = writeln!(ply, "element vertex {}", mesh.vertex_count());
    ply.push_str("property float x\nproperty float y\nproperty float z\n");
    ply.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    let _ = writeln!(ply, "element face {}", mesh.triangle_count());
    ply.push_str("property list uchar int vertex_indices\nend_header\n");
    for (p, d) in mesh.vertices().iter().zip(distances) {
        let [r, g, b] = heatmap_color(*d, range);
        let _ = writeln!(ply, "{} {} {} {r} {g} {b}", p.x, p.y, p.z);
    }
    for [a, b, c] in mesh.triangles() {
        let _ = writeln!(ply, "3 {a} {b} {c}");
    }
    let mesh_path = mesh_path.as_ref();
    std::fs::write(mesh_path, ply).map_err(|e| Error::io(mesh_path, e))?;
    let csv_path = csv_path.as_ref();
    save_distances_csv(csv_path, distances)?;
    Ok(HeatmapFiles {
        mesh: mesh_path.to_path_buf(),
        csv: csv_path.to_path_buf(),
    })
}

/// `vertex,signed_distance_mm`
pub fn save_distances_csv(path: impl AsRef<Path>, distances: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["vertex", "signed_distance_mm"]).map_err(err)?;
    for (i, d) in distances.iter().enumerate() {
        w.write_record([i.to_string(), d.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_distances_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let bad = |m: String| Error::Csv {
        path: path.to_path_buf(),
        message: m,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let d = rec
            .get(1)
            .ok_or_else(|| bad(format!("row {}: missing distance", out.len() + 1)))?;
        out.push(d.trim().parse().map_err(|e| bad(format!("`{d}`: {e}")))?);
    }
    Ok(out)
}
