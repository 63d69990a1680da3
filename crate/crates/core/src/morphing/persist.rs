use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::MorphResult;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

fn csv_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != columns {
            return Err(csv_error(path, format!("expected {columns} columns, found {}", rec.len())));
        }
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| csv_error(path, format!("`{f}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        out.push(row);
    }
    Ok(out)
}

/// `vertex,dx_mm,dy_mm,dz_mm`, one row per vertex.
pub fn save_displacements(path: impl AsRef<Path>, displacements: &[Vector3<f64>]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["vertex", "dx_mm", "dy_mm", "dz_mm"],
        displacements
            .iter()
            .enumerate()
            .map(|(i, d)| vec![i.to_string(), d.x.to_string(), d.y.to_string(), d.z.to_string()]),
    )
}

pub fn load_displacements(path: impl AsRef<Path>) -> Result<Vec<Vector3<f64>>> {
    let path = path.as_ref();
    let rows = read_rows(path, 4)?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if r[0] != i as f64 {
                return Err(csv_error(path, format!("row {i} has vertex index {}", r[0])));
            }
            Ok(Vector3::new(r[1], r[2], r[3]))
        })
        .collect()
}

/// `iteration,contour_rms_mm`, iterations numbered from 1.
pub fn save_history(path: impl AsRef<Path>, history_mm: &[f64]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["iteration", "contour_rms_mm"],
        history_mm
            .iter()
            .enumerate()
            .map(|(i, v)| vec![(i + 1).to_string(), v.to_string()]),
    )
}

pub fn load_history(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    Ok(read_rows(path.as_ref(), 2)?.into_iter().map(|r| r[1]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphSummary {
    pub converged: bool,
    pub iterations: usize,
    pub final_contour_rms_mm: f64,
    pub max_displacement_mm: f64,
    pub rms_displacement_mm: f64,
    pub prefit_scale: Option<f64>,
    pub pose: RigidTransform,
}

impl MorphSummary {
    pub fn from_result(r: &MorphResult) -> Self {
        MorphSummary {
            converged: r.converged,
            iterations: r.iterations,
            final_contour_rms_mm: r.history_mm.last().copied().unwrap_or(0.0),
            max_displacement_mm: r.max_displacement_mm(),
            rms_displacement_mm: r.rms_displacement_mm(),
            prefit_scale: r.prefit.map(|p| p.scale),
            pose: r.pose,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("summary serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}
