//! Rigid ICP alignment of a reconstruction onto its ground truth, per-vertex
//! signed surface error, RMS / largest-error reports and cohort statistics.

mod heatmap;

use std::path::Path;

use kiddo::{KdTree, SquaredEuclidean};
use nalgebra::{DMatrix, DVector, Matrix3, Point3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, SurfaceIndex, TriMesh};

pub use heatmap::{export_heatmap, heatmap_color, load_distances_csv, save_distances_csv, HeatmapFiles};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop when the mean closest-point distance changes by less than this.
    pub tolerance_mm: f64,
    /// Meshes with more vertices are subsampled to this many, with a fixed seed.
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iterations: 200,
            tolerance_mm: 1e-6,
            max_samples: 50_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    /// Maps source coordinates onto the target.
    pub transform: RigidTransform,
    pub mean_distance_mm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// RMS closest-point distance at the start and after every surface
    /// iteration; never increases.
    pub history_mm: Vec<f64>,
}

/// Point-to-point ICP of `source` vertices against the `target` surface.
///
/// Every sampled vertex is paired with its closest surface point and the
/// rigid motion from the original vertices to those points is refit by SVD.
/// Plain ICP slides tangentially along the surface very slowly, so each step
/// also proposes an Anderson-mixed pose from the last few steps; it is kept
/// only when its squared error beats the plain step. Once that converges, the
/// vertices are snapped to their nearest target vertices (classic point-set
/// ICP); if that lowers the error, a second surface pass polishes the result.
/// On identical tessellations the snap recovers the motion exactly.
pub fn icp_align(
    source: &TriMesh,
    target: &SurfaceIndex,
    init: &RigidTransform,
    cfg: &IcpConfig,
) -> Result<IcpResult> {
    if source.vertex_count() == 0 || target.triangle_count() == 0 {
        return Err(Error::EmptyMesh);
    }
    let samples = sample_vertices(source, cfg);
    let rank = affine_rank(&samples);
    if rank < 3 {
        return Err(Error::DegenerateCorrespondences { rank });
    }

    let mut history = Vec::new();
    let first = surface_phase(target, &samples, init, cfg, 0, &mut history)?;
    let budget = cfg.max_iterations - first.iterations;
    let (snapped, used) = match_vertices(&samples, target, &first.transform, budget)?;
    let mut out = first;
    if Correspond::at(target, &samples, &snapped).sq_sum < out.sq_sum {
        let mut rest = Vec::new();
        let second = surface_phase(target, &samples, &snapped, cfg, out.iterations + used, &mut rest)?;
        history.extend(rest);
        out = second;
    }
    Ok(IcpResult {
        transform: out.transform,
        mean_distance_mm: out.mean,
        iterations: out.iterations,
        converged: out.converged,
        history_mm: history,
    })
}

struct Phase {
    transform: RigidTransform,
    mean: f64,
    sq_sum: f64,
    iterations: usize,
    converged: bool,
}

/// Closest-surface-point ICP with Anderson mixing, continuing the iteration
/// count from `iterations`.
fn surface_phase(
    target: &SurfaceIndex,
    samples: &[Point3<f64>],
    start: &RigidTransform,
    cfg: &IcpConfig,
    mut iterations: usize,
    history: &mut Vec<f64>,
) -> Result<Phase> {
    let mut transform = *start;
    let mut pass = Correspond::at(target, samples, &transform);
    history.push(pass.rms());
    let mut mean = pass.mean();
    let mut anderson = Anderson::default();
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let fitted = kabsch(samples, &pass.matched)?;
        let mut next = (fitted, Correspond::at(target, samples, &fitted));
        if let Some(p) = anderson.push(params(&transform), params(&fitted)) {
            let t = from_params(&p);
            let c = Correspond::at(target, samples, &t);
            if c.sq_sum < next.1.sq_sum {
                next = (t, c);
            } else {
                anderson.restart();
            }
        }
        transform = next.0;
        pass = next.1;
        history.push(pass.rms());
        let m = pass.mean();
        let change = (mean - m).abs();
        mean = m;
        if change < cfg.tolerance_mm {
            converged = true;
            break;
        }
    }
    Ok(Phase {
        transform,
        mean,
        sq_sum: pass.sq_sum,
        iterations,
        converged,
    })
}

/// Point-set ICP against the target's vertices, run until the nearest-vertex
/// assignment stops changing.
fn match_vertices(
    samples: &[Point3<f64>],
    target: &SurfaceIndex,
    init: &RigidTransform,
    budget: usize,
) -> Result<(RigidTransform, usize)> {
    let mut tree: KdTree<f64, 3> = KdTree::new();
    for (i, v) in target.vertices().iter().enumerate() {
        tree.add(&[v.x, v.y, v.z], i as u64);
    }
    let nearest = |t: &RigidTransform| -> Vec<u64> {
        samples
            .iter()
            .map(|p| {
                let q = t.apply_point(p);
                tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]).item
            })
            .collect()
    };
    let mut transform = *init;
    let mut assigned = nearest(&transform);
    let mut used = 0;
    while used < budget {
        used += 1;
        let to: Vec<Point3<f64>> = assigned.iter().map(|&i| target.vertices()[i as usize]).collect();
        transform = kabsch(samples, &to)?;
        let next = nearest(&transform);
        if next == assigned {
            break;
        }
        assigned = next;
    }
    Ok((transform, used))
}

/// Closest target points for the sampled vertices under one transform.
struct Correspond {
    matched: Vec<Point3<f64>>,
    sum: f64,
    sq_sum: f64,
}

impl Correspond {
    fn at(target: &SurfaceIndex, samples: &[Point3<f64>], t: &RigidTransform) -> Self {
        let mut c = Correspond {
            matched: Vec::with_capacity(samples.len()),
            sum: 0.0,
            sq_sum: 0.0,
        };
        for p in samples {
            let hit = target.closest_point(&t.apply_point(p));
            c.sum += hit.distance;
            c.sq_sum += hit.distance * hit.distance;
            c.matched.push(hit.point);
        }
        c
    }

    fn mean(&self) -> f64 {
        self.sum / self.matched.len() as f64
    }

    fn rms(&self) -> f64 {
        (self.sq_sum / self.matched.len() as f64).sqrt()
    }
}

// Pose as (rotation vector, translation).
fn params(t: &RigidTransform) -> [f64; 6] {
    let r = t.quaternion().scaled_axis();
    let v = t.translation();
    [r.x, r.y, r.z, v.x, v.y, v.z]
}

fn from_params(p: &[f64; 6]) -> RigidTransform {
    let q = UnitQuaternion::from_scaled_axis(Vector3::new(p[0], p[1], p[2]));
    RigidTransform::from_quaternion(q, Vector3::new(p[3], p[4], p[5]))
}

const ANDERSON_DEPTH: usize = 12;

/// Anderson mixing for the fixed point `q = fit(q)` over pose parameters.
#[derive(Default)]
struct Anderson {
    /// (fit(q), fit(q) - q) for the most recent states, oldest first.
    window: Vec<([f64; 6], [f64; 6])>,
}

impl Anderson {
    /// Records one plain step and proposes an accelerated state once two
    /// steps are known.
    fn push(&mut self, q: [f64; 6], g: [f64; 6]) -> Option<[f64; 6]> {
        let f = std::array::from_fn(|i| g[i] - q[i]);
        self.window.push((g, f));
        if self.window.len() > ANDERSON_DEPTH + 1 {
            self.window.remove(0);
        }
        let m = self.window.len() - 1;
        if m == 0 {
            return None;
        }
        let (g_k, f_k) = self.window[m];
        let df = DMatrix::from_fn(6, m, |r, c| self.window[c + 1].1[r] - self.window[c].1[r]);
        let gamma = df
            .svd(true, true)
            .solve(&DVector::from_column_slice(&f_k), 1e-12)
            .ok()?;
        let p: [f64; 6] = std::array::from_fn(|r| {
            g_k[r] - (0..m).map(|c| (self.window[c + 1].0[r] - self.window[c].0[r]) * gamma[c]).sum::<f64>()
        });
        p.iter().all(|v| v.is_finite()).then_some(p)
    }

    fn restart(&mut self) {
        let last = self.window.pop();
        self.window.clear();
        self.window.extend(last);
    }
}

fn sample_vertices(mesh: &TriMesh, cfg: &IcpConfig) -> Vec<Point3<f64>> {
    let v = mesh.vertices();
    if v.len() <= cfg.max_samples {
        return v.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut idx = rand::seq::index::sample(&mut rng, v.len(), cfg.max_samples).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| v[i]).collect()
}

/// 0 for no points, 1 for coincident points, 2 for collinear, 3 for planar, 4 otherwise.
fn affine_rank(points: &[Point3<f64>]) -> usize {
    if points.is_empty() {
        return 0;
    }
    let c = centroid(points);
    let cov = points
        .iter()
        .fold(Matrix3::zeros(), |acc, p| acc + (p - c) * (p - c).transpose());
    let sv = cov.singular_values();
    let scale = sv.max();
    if scale == 0.0 {
        return 1;
    }
    1 + sv.iter().filter(|&&s| s > scale * 1e-12).count()
}

fn centroid(points: &[Point3<f64>]) -> Point3<f64> {
    Point3::from(
        points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords)
            / points.len() as f64,
    )
}

/// Least-squares rigid motion taking `from[i]` to `to[i]`.
pub fn kabsch(from: &[Point3<f64>], to: &[Point3<f64>]) -> Result<RigidTransform> {
    if from.len() != to.len() {
        return Err(Error::LengthMismatch {
            expected: from.len(),
            found: to.len(),
        });
    }
    let rank = affine_rank(from);
    if rank < 3 {
        return Err(Error::DegenerateCorrespondences { rank });
    }
    let (cf, ct) = (centroid(from), centroid(to));
    let h = from
        .iter()
        .zip(to)
        .fold(Matrix3::zeros(), |acc, (p, q)| acc + (p - cf) * (q - ct).transpose());
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    RigidTransform::new(r, ct.coords - r * cf.coords)
}

/// Signed distance from every vertex of `morphed` to the `truth` surface,
/// positive outside.
pub fn vertex_surface_errors(morphed: &TriMesh, truth: &SurfaceIndex) -> Result<Vec<f64>> {
    if morphed.vertex_count() == 0 || truth.triangle_count() == 0 {
        return Err(Error::EmptyMesh);
    }
    Ok(morphed
        .vertices()
        .iter()
        .map(|p| truth.closest_point(p).signed_distance)
        .collect())
}

/// Summary of one case. The per-vertex distances live in the errors CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub case_id: String,
    pub rms_mm: f64,
    /// Largest absolute per-vertex distance.
    pub largest_mm: f64,
    pub largest_vertex: usize,
}

pub fn error_report(distances: &[f64], case_id: &str) -> Result<ErrorReport> {
    if distances.is_empty() {
        return Err(Error::InvalidArgument("no distances to report".into()));
    }
    let rms = (distances.iter().map(|d| d * d).sum::<f64>() / distances.len() as f64).sqrt();
    let mut largest = (0.0, 0);
    for (i, d) in distances.iter().enumerate() {
        if d.abs() > largest.0 {
            largest = (d.abs(), i);
        }
    }
    Ok(ErrorReport {
        case_id: case_id.to_string(),
        rms_mm: rms,
        largest_mm: largest.0,
        largest_vertex: largest.1,
    })
}

impl ErrorReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_json(path.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricStats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("no values to summarize".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(MetricStats {
            // keeps min <= mean <= max under rounding
            mean: mean.clamp(
                values.iter().copied().fold(f64::INFINITY, f64::min),
                values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub cases: Vec<ErrorReport>,
    pub rms_mm: MetricStats,
    pub largest_mm: MetricStats,
}

pub fn summarize_cohort(reports: &[ErrorReport]) -> Result<CohortSummary> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("cohort has no evaluated cases".into()));
    }
    let rms: Vec<f64> = reports.iter().map(|r| r.rms_mm).collect();
    let largest: Vec<f64> = reports.iter().map(|r| r.largest_mm).collect();
    Ok(CohortSummary {
        cases: reports.to_vec(),
        rms_mm: MetricStats::of(&rms)?,
        largest_mm: MetricStats::of(&largest)?,
    })
}

const SUMMARY_LABEL: &str = "average";

impl CohortSummary {
    /// `case,rms_mm,largest_mm` per case, then an `average` row of `mean ± std`.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["case", "rms_mm", "largest_mm"]).map_err(err)?;
        for r in &self.cases {
            w.write_record([r.case_id.clone(), format!("{:.4}", r.rms_mm), format!("{:.4}", r.largest_mm)])
                .map_err(err)?;
        }
        w.write_record([
            SUMMARY_LABEL.to_string(),
            format!("{:.4} ± {:.4}", self.rms_mm.mean, self.rms_mm.std),
            format!("{:.4} ± {:.4}", self.largest_mm.mean, self.largest_mm.std),
        ])
        .map_err(err)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        save_json(path.as_ref(), self)
    }
}

/// Reads `case,rms_mm,largest_mm` rows, skipping a trailing `average` row.
pub fn load_cohort_csv(path: impl AsRef<Path>) -> Result<Vec<ErrorReport>> {
    let path = path.as_ref();
    let bad = |m: String| Error::Csv {
        path: path.to_path_buf(),
        message: m,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 3 {
            return Err(bad(format!("row {}: expected 3 columns, found {}", i + 1, rec.len())));
        }
        if rec[0].trim() == SUMMARY_LABEL {
            continue;
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: `{s}`: {e}", i + 1)))
        };
        out.push(ErrorReport {
            case_id: rec[0].trim().to_string(),
            rms_mm: num(&rec[1])?,
            largest_mm: num(&rec[2])?,
            largest_vertex: 0,
        });
    }
    Ok(out)
}

pub(crate) fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
