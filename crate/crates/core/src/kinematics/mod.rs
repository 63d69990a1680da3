//! Femorotibial kinematics: femur pose in the tibial frame, reduced to an
//! anterior-posterior translation and an axial rotation per frame.
//!
//! Tibial frame axes are x anterior, y lateral, z proximal. The relative
//! rotation is decomposed as `Ry(flexion) · Rx(adduction) · Rz(axial)`, and
//! the translation channel is the anterior component of the femoral origin.

use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

/// Second Cardan angle this close to ±90° (radians) makes the first and third
/// angles indistinguishable.
pub const GIMBAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePoses {
    pub frame: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flexion_deg: Option<f64>,
    pub femur: RigidTransform,
    pub tibia: RigidTransform,
}

impl FramePoses {
    /// Reads a JSON array of frames.
    pub fn load_all(path: impl AsRef<Path>) -> Result<Vec<FramePoses>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save_all(frames: &[FramePoses], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(frames).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Femur expressed in the tibial frame.
pub fn relative_pose(femur: &RigidTransform, tibia: &RigidTransform) -> RigidTransform {
    tibia.inverse().compose(femur)
}

/// `Ry(flexion) · Rx(adduction) · Rz(axial)`, angles in radians.
pub fn cardan_rotation(flexion: f64, adduction: f64, axial: f64) -> Matrix3<f64> {
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), flexion);
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), adduction);
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), axial);
    *(ry * rx * rz).matrix()
}

/// Inverse of [`cardan_rotation`]: `(flexion, adduction, axial)` in radians,
/// or `None` when the adduction angle is within [`GIMBAL_TOLERANCE`] of ±90°.
pub fn cardan_angles(r: &Matrix3<f64>) -> Option<(f64, f64, f64)> {
    let b = (-r[(1, 2)]).clamp(-1.0, 1.0).asin();
    if (b.abs() - std::f64::consts::FRAC_PI_2).abs() < GIMBAL_TOLERANCE {
        return None;
    }
    let a = r[(0, 2)].atan2(r[(2, 2)]);
    let c = r[(1, 0)].atan2(r[(1, 1)]);
    Some((a, b, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicsTrace {
    pub frames: Vec<usize>,
    /// The frame's label when given, otherwise the measured flexion angle.
    pub flexion_deg: Vec<f64>,
    pub ap_mm: Vec<f64>,
    pub axial_deg: Vec<f64>,
    /// Frames whose rotation was gimbal-degenerate; their angles are carried
    /// over from the nearest earlier (else later) valid frame.
    #[serde(default)]
    pub degenerate: Vec<usize>,
}

impl KinematicsTrace {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `frame,flexion_deg,ap_mm,axial_deg`
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let err = |e: csv::Error| csv_error(path, e);
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["frame", "flexion_deg", "ap_mm", "axial_deg"]).map_err(err)?;
        for i in 0..self.len() {
            w.write_record([
                self.frames[i].to_string(),
                self.flexion_deg[i].to_string(),
                self.ap_mm[i].to_string(),
                self.axial_deg[i].to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut t = KinematicsTrace {
            frames: Vec::new(),
            flexion_deg: Vec::new(),
            ap_mm: Vec::new(),
            axial_deg: Vec::new(),
            degenerate: Vec::new(),
        };
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            if rec.len() != 4 {
                return Err(csv_error(path, format!("row {}: expected 4 columns, found {}", row + 1, rec.len())));
            }
            let num = |i: usize| -> Result<f64> {
                let v: f64 = rec[i]
                    .trim()
                    .parse()
                    .map_err(|e| csv_error(path, format!("row {}: `{}`: {e}", row + 1, &rec[i])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(csv_error(path, format!("row {}: non-finite value", row + 1)))
                }
            };
            t.frames.push(
                rec[0]
                    .trim()
                    .parse()
                    .map_err(|e| csv_error(path, format!("row {}: frame `{}`: {e}", row + 1, &rec[0])))?,
            );
            t.flexion_deg.push(num(1)?);
            t.ap_mm.push(num(2)?);
            t.axial_deg.push(num(3)?);
        }
        Ok(t)
    }
}

fn csv_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn reduce_trace(frames: &[FramePoses]) -> Result<KinematicsTrace> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no frames to reduce".into()));
    }
    let rel: Vec<RigidTransform> = frames.iter().map(|f| relative_pose(&f.femur, &f.tibia)).collect();
    let angles: Vec<Option<(f64, f64, f64)>> = rel.iter().map(|r| cardan_angles(r.rotation())).collect();
    let degenerate: Vec<usize> = (0..frames.len()).filter(|&i| angles[i].is_none()).collect();
    let carried = |i: usize| -> (f64, f64, f64) {
        (0..=i)
            .rev()
            .chain(i + 1..frames.len())
            .find_map(|j| angles[j])
            .unwrap_or((0.0, 0.0, 0.0))
    };
    let mut t = KinematicsTrace {
        frames: frames.iter().map(|f| f.frame).collect(),
        flexion_deg: Vec::with_capacity(frames.len()),
        ap_mm: rel.iter().map(|r| r.translation().x).collect(),
        axial_deg: Vec::with_capacity(frames.len()),
        degenerate: degenerate.iter().map(|&i| frames[i].frame).collect(),
    };
    for (i, f) in frames.iter().enumerate() {
        let (a, _, c) = carried(i);
        t.flexion_deg.push(f.flexion_deg.unwrap_or(a.to_degrees()));
        t.axial_deg.push(c.to_degrees());
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameDifference {
    pub frame: usize,
    pub ap_mm: f64,
    pub axial_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicsError {
    pub translation_mean_mm: f64,
    pub translation_std_mm: f64,
    pub rotation_mean_deg: f64,
    pub rotation_std_deg: f64,
    /// Absolute per-frame differences; written to CSV, not to the JSON.
    #[serde(skip)]
    pub per_frame: Vec<FrameDifference>,
}

/// Mean and population std of the absolute per-frame differences. Rotation
/// differences are wrapped to (−180°, 180°] first.
pub fn compare_traces(recon: &KinematicsTrace, truth: &KinematicsTrace) -> Result<KinematicsError> {
    if recon.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            found: recon.len(),
        });
    }
    if recon.is_empty() {
        return Err(Error::InvalidArgument("traces have no frames".into()));
    }
    let per_frame: Vec<FrameDifference> = (0..recon.len())
        .map(|i| FrameDifference {
            frame: truth.frames[i],
            ap_mm: (recon.ap_mm[i] - truth.ap_mm[i]).abs(),
            axial_deg: wrap_deg(recon.axial_deg[i] - truth.axial_deg[i]).abs(),
        })
        .collect();
    let (tm, ts) = mean_std(per_frame.iter().map(|d| d.ap_mm));
    let (rm, rs) = mean_std(per_frame.iter().map(|d| d.axial_deg));
    Ok(KinematicsError {
        translation_mean_mm: tm,
        translation_std_mm: ts,
        rotation_mean_deg: rm,
        rotation_std_deg: rs,
        per_frame,
    })
}

/// Into (−180°, 180°]. Odd up to the ±180° boundary, so absolute
/// differences do not depend on argument order.
fn wrap_deg(d: f64) -> f64 {
    let w = d - 360.0 * (d / 360.0).round();
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl KinematicsError {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// `frame,ap_abs_diff_mm,axial_abs_diff_deg`
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let err = |e: csv::Error| csv_error(path, e);
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["frame", "ap_abs_diff_mm", "axial_abs_diff_deg"]).map_err(err)?;
        for d in &self.per_frame {
            w.write_record([d.frame.to_string(), d.ap_mm.to_string(), d.axial_deg.to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pose(r: Matrix3<f64>, t: Vector3<f64>) -> RigidTransform {
        RigidTransform::new(r, t).unwrap()
    }

    fn frames_from(rel: &[RigidTransform], tibia: &RigidTransform) -> Vec<FramePoses> {
        rel.iter()
            .enumerate()
            .map(|(i, r)| FramePoses {
                frame: i,
                flexion_deg: None,
                femur: tibia.compose(r),
                tibia: *tibia,
            })
            .collect()
    }

    #[test]
    fn relative_pose_definition() {
        let f = RigidTransform::from_axis_angle(Vector3::new(1.0, 2.0, 0.5), 0.7, Vector3::new(3.0, 1.0, -2.0));
        let t = RigidTransform::from_axis_angle(Vector3::new(-1.0, 0.2, 0.5), 0.3, Vector3::new(-5.0, 4.0, 9.0));
        let id = relative_pose(&f, &f);
        assert!((id.rotation() - Matrix3::identity()).abs().max() < 1e-12);
        assert!(id.translation().norm() < 1e-12);
        assert_eq!(relative_pose(&f, &RigidTransform::identity()), f);
        let back = t.compose(&relative_pose(&f, &t));
        assert!((back.rotation() - f.rotation()).abs().max() < 1e-9);
        assert!((back.translation() - f.translation()).abs().max() < 1e-9);
    }

    #[test]
    fn identity_sequence_is_zero() {
        let tibia = RigidTransform::from_axis_angle(Vector3::new(0.0, 1.0, 1.0), 0.4, Vector3::new(1.0, 2.0, 3.0));
        let t = reduce_trace(&frames_from(&[RigidTransform::identity(); 5], &tibia)).unwrap();
        assert!(t.ap_mm.iter().chain(&t.axial_deg).chain(&t.flexion_deg).all(|v| v.abs() < 1e-12));
        assert!(t.degenerate.is_empty());
    }

    #[test]
    fn pure_axial_rotation() {
        let rel = pose(cardan_rotation(0.0, 0.0, 10f64.to_radians()), Vector3::zeros());
        let t = reduce_trace(&frames_from(&[rel], &RigidTransform::identity())).unwrap();
        assert!((t.axial_deg[0] - 10.0).abs() < 1e-12);
        assert_eq!(t.ap_mm[0], 0.0);
    }

    #[test]
    fn composite_rotation_matches_brute_force() {
        // independent oracle: rotate the basis step by step about the moving axes
        let (a, b, c) = (5f64.to_radians(), 3f64.to_radians(), 7f64.to_radians());
        let r1 = Rotation3::from_axis_angle(&Vector3::y_axis(), a);
        let x1 = r1 * Vector3::x();
        let r2 = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(x1), b) * r1;
        let z2 = r2 * Vector3::z();
        let r3 = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(z2), c) * r2;
        assert!((r3.matrix() - cardan_rotation(a, b, c)).abs().max() < 1e-12);
        let t = reduce_trace(&frames_from(&[pose(*r3.matrix(), Vector3::zeros())], &RigidTransform::identity())).unwrap();
        assert!((t.axial_deg[0] - 7.0).abs() < 1e-9);
        assert!((t.flexion_deg[0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn round_trip_random_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let a = rng.gen_range(-179.0..179.0f64).to_radians();
            let b = rng.gen_range(-79.9..79.9f64).to_radians();
            let c = rng.gen_range(-179.0..179.0f64).to_radians();
            let (x, y, z) = cardan_angles(&cardan_rotation(a, b, c)).unwrap();
            assert!((x - a).abs() < 1e-9 && (y - b).abs() < 1e-9 && (z - c).abs() < 1e-9);
        }
    }

    #[test]
    fn gimbal_frame_is_flagged_and_carried() {
        let ok = pose(cardan_rotation(0.2, 0.1, 0.3), Vector3::new(1.0, 0.0, 0.0));
        let lock = pose(cardan_rotation(0.5, std::f64::consts::FRAC_PI_2, 0.9), Vector3::new(2.0, 0.0, 0.0));
        let t = reduce_trace(&frames_from(&[ok, lock], &RigidTransform::identity())).unwrap();
        assert_eq!(t.degenerate, vec![1]);
        assert!((t.axial_deg[1] - t.axial_deg[0]).abs() < 1e-12);
        assert!((t.ap_mm[1] - 2.0).abs() < 1e-12);
        let t = reduce_trace(&frames_from(&[lock, ok], &RigidTransform::identity())).unwrap();
        assert!((t.axial_deg[0] - 0.3f64.to_degrees()).abs() < 1e-9);
    }

    #[test]
    fn channels_are_independent() {
        let base = pose(cardan_rotation(0.4, 0.05, 0.1), Vector3::new(3.0, -1.0, 20.0));
        let spun = pose(base.rotation() * cardan_rotation(0.0, 0.0, 0.2), *base.translation());
        let moved = pose(*base.rotation(), base.translation() + Vector3::new(0.0, 2.0, -4.0));
        let t = reduce_trace(&frames_from(&[base, spun, moved], &RigidTransform::identity())).unwrap();
        assert_eq!(t.ap_mm[0], t.ap_mm[1]);
        assert_eq!(t.axial_deg[0], t.axial_deg[2]);
    }

    fn trace(ap: &[f64], axial: &[f64]) -> KinematicsTrace {
        KinematicsTrace {
            frames: (0..ap.len()).collect(),
            flexion_deg: (0..ap.len()).map(|i| i as f64 * 10.0).collect(),
            ap_mm: ap.to_vec(),
            axial_deg: axial.to_vec(),
            degenerate: vec![],
        }
    }

    #[test]
    fn compare_identical_and_offset() {
        let a = trace(&[0.5, -1.0, 2.0], &[3.0, 4.0, -5.0]);
        let e = compare_traces(&a, &a).unwrap();
        assert_eq!((e.translation_mean_mm, e.translation_std_mm, e.rotation_mean_deg, e.rotation_std_deg), (0.0, 0.0, 0.0, 0.0));
        let b = trace(&[1.5, 0.0, 3.0], &[3.0, 4.0, -5.0]);
        let e = compare_traces(&b, &a).unwrap();
        assert_eq!((e.translation_mean_mm, e.translation_std_mm), (1.0, 0.0));
        assert_eq!(compare_traces(&a, &b).unwrap(), e);
        assert!(compare_traces(&a, &trace(&[0.0], &[0.0])).is_err());
    }

    #[test]
    fn rotation_difference_wraps() {
        let e = compare_traces(&trace(&[0.0], &[179.0]), &trace(&[0.0], &[-179.0])).unwrap();
        assert!((e.rotation_mean_deg - 2.0).abs() < 1e-12);
    }

    #[test]
    fn csv_and_json_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        let a = trace(&[0.5, -1.0 / 3.0], &[3.0, 4.25]);
        a.save_csv(&p).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("frame,flexion_deg,ap_mm,axial_deg\n"));
        assert_eq!(KinematicsTrace::load_csv(&p).unwrap(), a);
        std::fs::write(&p, "frame,flexion_deg,ap_mm,axial_deg\n0,1,x,2\n").unwrap();
        assert!(matches!(KinematicsTrace::load_csv(&p), Err(Error::Csv { .. })));

        let e = compare_traces(&a, &a).unwrap();
        let j = dir.path().join("cmp.json");
        e.save_json(&j).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&j).unwrap()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["rotation_mean_deg", "rotation_std_deg", "translation_mean_mm", "translation_std_mm"]);
    }
}
