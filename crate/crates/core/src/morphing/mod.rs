//! Deformation of a template mesh until its silhouettes match target contours.
//!
//! One morph step renders the current mesh in every view, pairs silhouette-rim
//! vertices with target contour pixels, lifts the 2D residuals to 3D
//! displacements perpendicular to each viewing ray, spreads them over the
//! mesh with a Gaussian kernel, smooths the field on the mesh graph and moves
//! the vertices by a fraction of it.

mod persist;

use nalgebra::{Matrix3, Point2, Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{scale_mesh, RigidTransform, TriMesh};
use crate::imaging::{
    extract_contour, nearest_point_field, project_vertices, render_silhouette, Camera, Contour, NearestField, View,
};
use crate::registration::{register_multi_view, MultiViewCost, RegistrationConfig};

pub use persist::{load_displacements, load_history, save_displacements, save_history, MorphSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MorphConfig {
    pub max_iterations: usize,
    /// Stop when the contour RMS (mm) or its change between iterations falls
    /// below this.
    pub tolerance_mm: f64,
    /// Fraction of the smoothed displacement field applied per iteration.
    pub step_fraction: f64,
    /// Laplacian smoothing weight λ.
    pub smoothing_weight: f64,
    pub smoothing_iterations: usize,
    /// Gaussian scatter width (mm); `None` means 5% of the template's
    /// bounding-box diagonal.
    pub influence_radius_mm: Option<f64>,
    /// A vertex is on the silhouette rim when its projection lies within this
    /// many pixels of the rendered contour.
    pub rim_distance_px: f64,
    /// Interior (non-boundary) rim vertices also need `|n·ray| ≤` this.
    pub rim_normal_max: f64,
    /// Residuals longer than this multiple of the median are dropped.
    pub outlier_factor: f64,
    pub prefit: bool,
    pub scale_bracket: [f64; 2],
    pub prefit_rounds: usize,
}

impl Default for MorphConfig {
    fn default() -> Self {
        MorphConfig {
            max_iterations: 50,
            tolerance_mm: 0.05,
            step_fraction: 0.5,
            smoothing_weight: 0.3,
            smoothing_iterations: 3,
            influence_radius_mm: None,
            rim_distance_px: 1.5,
            rim_normal_max: 0.5,
            outlier_factor: 5.0,
            prefit: true,
            scale_bracket: [0.8, 1.25],
            prefit_rounds: 2,
        }
    }
}

impl MorphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations", "must be positive"));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(Error::config("step_fraction", "must lie in (0, 1]"));
        }
        if !(self.smoothing_weight >= 0.0 && self.smoothing_weight <= 1.0) {
            return Err(Error::config("smoothing_weight", "must lie in [0, 1]"));
        }
        for (name, v) in [
            ("tolerance_mm", self.tolerance_mm),
            ("rim_distance_px", self.rim_distance_px),
            ("rim_normal_max", self.rim_normal_max),
            ("outlier_factor", self.outlier_factor),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if let Some(r) = self.influence_radius_mm {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::config("influence_radius_mm", "must be positive"));
            }
        }
        let [lo, hi] = self.scale_bracket;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::config("scale_bracket", "must satisfy 0 < lo < hi"));
        }
        Ok(())
    }

    fn radius_for(&self, template: &TriMesh) -> f64 {
        self.influence_radius_mm
            .unwrap_or_else(|| 0.05 * template.bounding_box().diagonal())
    }
}

/// A rim vertex and the 2D offset (pixels) that would put it on the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub vertex: usize,
    pub residual_px: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prefit {
    pub scale: f64,
    /// Object → world pose of the scaled template.
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphResult {
    /// Same triangles as the template, new vertex positions (object frame).
    pub mesh: TriMesh,
    /// Morphed minus template vertex positions (mm), including any prefit
    /// scaling.
    pub displacements: Vec<Vector3<f64>>,
    /// Contour RMS (mm at the object) measured at the start of each iteration.
    pub history_mm: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub prefit: Option<Prefit>,
    /// Object → world pose the morph ran at.
    pub pose: RigidTransform,
}

impl MorphResult {
    pub fn max_displacement_mm(&self) -> f64 {
        self.displacements.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }

    pub fn rms_displacement_mm(&self) -> f64 {
        let n = self.displacements.len() as f64;
        (self.displacements.iter().map(|d| d.norm_squared()).sum::<f64>() / n).sqrt()
    }
}

/// Rim correspondences of `mesh` seen with object → camera `pose` against
/// `target`.
///
/// For each rim vertex the residual is `t(m) − m`, where `m` is the model
/// contour pixel nearest to the vertex's projection and `t(m)` the target
/// contour pixel nearest to `m`. Measuring from `m` rather than from the raw
/// projection keeps a perfectly matching silhouette at exactly zero.
pub fn silhouette_correspondences(
    mesh: &TriMesh,
    camera: &Camera,
    pose: &RigidTransform,
    target: &Contour,
    cfg: &MorphConfig,
) -> Result<Vec<Correspondence>> {
    let field = nearest_point_field(target, camera.width_px, camera.height_px)?;
    let boundary = boundary_vertices(mesh);
    correspondences_with(mesh, camera, pose, target, &field, &boundary, cfg)
}

fn correspondences_with(
    mesh: &TriMesh,
    camera: &Camera,
    pose: &RigidTransform,
    target: &Contour,
    target_field: &NearestField,
    boundary: &[bool],
    cfg: &MorphConfig,
) -> Result<Vec<Correspondence>> {
    if target.is_empty() {
        return Err(Error::EmptyContour);
    }
    let mask = render_silhouette(camera, pose, mesh)?;
    let model = extract_contour(&mask)?;
    let model_field = nearest_point_field(&model, camera.width_px, camera.height_px)?;
    let projected: Vec<Point2<f64>> = project_vertices(camera, pose, mesh)?;
    let (w, h) = (camera.width_px as f64, camera.height_px as f64);
    let mut out = Vec::new();
    for (i, q) in projected.iter().enumerate() {
        let (px, py) = (q.x.round(), q.y.round());
        if px < 0.0 || py < 0.0 || px >= w || py >= h {
            continue;
        }
        let m = model.points[model_field.nearest(px as u32, py as u32)];
        let mv = Vector2::new(m[0] as f64, m[1] as f64);
        if (q.coords - mv).norm() > cfg.rim_distance_px {
            continue;
        }
        if !boundary[i] {
            let p = pose.apply_point(&mesh.vertices()[i]);
            let n = pose.apply_vector(&mesh.normals()[i]);
            if n.dot(&p.coords.normalize()).abs() > cfg.rim_normal_max {
                continue;
            }
        }
        let t = target.points[target_field.nearest(m[0], m[1])];
        out.push(Correspondence {
            vertex: i,
            residual_px: Vector2::new(t[0] as f64, t[1] as f64) - mv,
        });
    }
    if out.is_empty() {
        return Err(Error::NoRimVertices);
    }
    Ok(out)
}

/// Vertices on an edge used by only one triangle.
fn boundary_vertices(mesh: &TriMesh) -> Vec<bool> {
    let mut edges: Vec<(usize, usize)> = mesh
        .triangles()
        .iter()
        .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
        .map(|(u, v)| (u.min(v), u.max(v)))
        .collect();
    edges.sort_unstable();
    let mut out = vec![false; mesh.vertex_count()];
    let mut i = 0;
    while i < edges.len() {
        let mut j = i + 1;
        while j < edges.len() && edges[j] == edges[i] {
            j += 1;
        }
        if j - i == 1 {
            out[edges[i].0] = true;
            out[edges[i].1] = true;
        }
        i = j;
    }
    out
}

/// Lifts pixel residuals to object-frame displacements (mm) at each vertex's
/// depth, with the component along the viewing ray removed.
pub fn backproject_displacements(
    mesh: &TriMesh,
    correspondences: &[Correspondence],
    camera: &Camera,
    pose: &RigidTransform,
) -> Result<Vec<(usize, Vector3<f64>)>> {
    let rt = pose.rotation().transpose();
    correspondences
        .iter()
        .map(|c| {
            let p = pose.apply_point(&mesh.vertices()[c.vertex]);
            if !(p.z > crate::imaging::MIN_DEPTH_MM) {
                return Err(Error::BehindSource { depth: p.z });
            }
            let s = camera.mm_per_pixel_at(p.z);
            let ray = p.coords.normalize();
            let mut d = Vector3::new(c.residual_px.x * s, c.residual_px.y * s, 0.0);
            d -= ray * d.dot(&ray);
            Ok((c.vertex, rt * d))
        })
        .collect()
}

/// Spreads sparse vertex displacements over the mesh and smooths them.
///
/// Each vertex receives `Σ wᵢ dᵢ / max(Σ wᵢ, 1)` with Gaussian weights of
/// width `radius_mm` (cut off at three widths); vertices with an assigned
/// displacement keep it. Each smoothing pass then blends every vertex with
/// the mean of its neighbours by `smoothing_weight`, blending assigned
/// vertices towards their assigned value rather than their current one.
pub fn propagate_and_smooth(
    mesh: &TriMesh,
    sparse: &[(usize, Vector3<f64>)],
    radius_mm: f64,
    smoothing_weight: f64,
    smoothing_iterations: usize,
) -> Vec<Vector3<f64>> {
    let n = mesh.vertex_count();
    let verts = mesh.vertices();
    let mut assigned: Vec<Option<Vector3<f64>>> = vec![None; n];
    for &(i, d) in sparse {
        assigned[i] = Some(d);
    }
    let cutoff2 = (3.0 * radius_mm).powi(2);
    let inv = 1.0 / (2.0 * radius_mm * radius_mm);
    let mut field: Vec<Vector3<f64>> = (0..n)
        .map(|v| {
            if let Some(d) = assigned[v] {
                return d;
            }
            let mut sum = Vector3::zeros();
            let mut wsum = 0.0;
            for &(i, d) in sparse {
                let r2 = (verts[v] - verts[i]).norm_squared();
                if r2 <= cutoff2 {
                    let w = (-r2 * inv).exp();
                    sum += w * d;
                    wsum += w;
                }
            }
            sum / wsum.max(1.0)
        })
        .collect();

    let nbrs = mesh.vertex_neighbors();
    let lambda = smoothing_weight;
    for _ in 0..smoothing_iterations {
        field = (0..n)
            .map(|v| {
                let base = assigned[v].unwrap_or(field[v]);
                if nbrs[v].is_empty() {
                    return base;
                }
                let mean = nbrs[v].iter().fold(Vector3::zeros(), |a, &u| a + field[u]) / nbrs[v].len() as f64;
                (1.0 - lambda) * base + lambda * mean
            })
            .collect();
    }
    field
}

/// Uniform scale and pose of `template` that best explain the targets.
///
/// Alternates a golden-section search over the scale bracket (pose fixed,
/// scaling about the template centroid) with multi-view re-registration of
/// the scaled template. Scale 1 is kept whenever it matches as well as the
/// search optimum.
pub fn similarity_prefit(
    template: &TriMesh,
    views: &[View],
    targets: &[Contour],
    init: &RigidTransform,
    cfg: &MorphConfig,
    reg: &RegistrationConfig,
) -> Result<Prefit> {
    cfg.validate()?;
    let mut cost = MultiViewCost::new(views, targets)?;
    let center = template.centroid();
    let [lo, hi] = cfg.scale_bracket;
    let tol = 1e-3;
    let mut scale = 1.0;
    let mut pose = *init;
    for _ in 0..cfg.prefit_rounds.max(1) {
        let mut eval = |s: f64| -> Result<f64> {
            let m = scale_mesh(template, s, &center)?;
            Ok(cost.evaluate(&m, &pose))
        };
        let s = golden_section(&mut eval, lo, hi, tol)?;
        if s - lo < 2.0 * tol || hi - s < 2.0 * tol {
            return Err(Error::BracketExhausted { scale: s });
        }
        scale = if lo <= 1.0 && 1.0 <= hi && eval(1.0)? <= eval(s)? { 1.0 } else { s };
        let scaled = scale_mesh(template, scale, &center)?;
        let r = register_multi_view(views, &scaled, targets, &pose, reg)?;
        pose = r.pose;
    }
    Ok(Prefit { scale, pose })
}

fn golden_section(f: &mut impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { c } else { d })
}

/// Morphs `template` until its silhouettes in `views` match `targets`.
///
/// `pose` is the registered object → world pose. With `cfg.prefit` the
/// template is first scaled and re-registered by [`similarity_prefit`].
pub fn morph(
    template: &TriMesh,
    views: &[View],
    targets: &[Contour],
    pose: &RigidTransform,
    cfg: &MorphConfig,
    reg: &RegistrationConfig,
) -> Result<MorphResult> {
    cfg.validate()?;
    if views.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: views.len(),
            found: targets.len(),
        });
    }
    let mut fields = Vec::with_capacity(views.len());
    for (v, t) in views.iter().zip(targets) {
        let f = nearest_point_field(t, v.camera.width_px, v.camera.height_px)
            .map_err(|e| Error::in_view(v.name().label(), e))?;
        fields.push(f);
    }

    let (prefit, start, pose) = if cfg.prefit {
        let p = similarity_prefit(template, views, targets, pose, cfg, reg)?;
        (Some(p), scale_mesh(template, p.scale, &template.centroid())?, p.pose)
    } else {
        (None, template.clone(), *pose)
    };

    let radius = cfg.radius_for(template);
    let boundary = boundary_vertices(template);
    let mut mesh = start;
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut growth_streak = 0;
    let mut iterations = 0;
    for _ in 0..cfg.max_iterations {
        iterations += 1;
        let mut per_vertex: Vec<Option<(Matrix3<f64>, Vector3<f64>, usize)>> = vec![None; mesh.vertex_count()];
        let mut all: Vec<(usize, Correspondence, f64)> = Vec::new();
        for (k, (v, t)) in views.iter().zip(targets).enumerate() {
            let cam_pose = v.camera_pose(&pose);
            let cs = correspondences_with(&mesh, &v.camera, &cam_pose, t, &fields[k], &boundary, cfg)
                .map_err(|e| Error::in_view(v.name().label(), e))?;
            for c in cs {
                let z = cam_pose.apply_point(&mesh.vertices()[c.vertex]).z;
                all.push((k, c, v.camera.mm_per_pixel_at(z)));
            }
        }
        let mut lengths: Vec<f64> = all.iter().map(|(_, c, _)| c.residual_px.norm()).collect();
        lengths.sort_by(f64::total_cmp);
        let median = lengths[lengths.len() / 2];
        if median > 0.0 {
            let limit = cfg.outlier_factor * median;
            all.retain(|(_, c, _)| c.residual_px.norm() <= limit);
        }
        let rms = (all.iter().map(|(_, c, s)| (c.residual_px.norm() * s).powi(2)).sum::<f64>() / all.len() as f64).sqrt();

        let previous = history.last().copied();
        history.push(rms);
        if rms < cfg.tolerance_mm || previous.is_some_and(|p| (p - rms).abs() < cfg.tolerance_mm) {
            converged = true;
            break;
        }
        if previous.is_some_and(|p| rms > 1.05 * p) {
            growth_streak += 1;
            if growth_streak >= 3 {
                break;
            }
        } else {
            growth_streak = 0;
        }

        for (k, c, _) in &all {
            let v = &views[*k];
            let cam_pose = v.camera_pose(&pose);
            let d = backproject_displacements(&mesh, std::slice::from_ref(c), &v.camera, &cam_pose)?[0].1;
            // Each view only constrains the plane perpendicular to its ray;
            // combine views by least squares over those planes.
            let p_cam = cam_pose.apply_point(&mesh.vertices()[c.vertex]);
            let ray = cam_pose.rotation().transpose() * p_cam.coords.normalize();
            let proj = Matrix3::identity() - ray * ray.transpose();
            let e = per_vertex[c.vertex].get_or_insert((Matrix3::zeros(), Vector3::zeros(), 0));
            e.0 += proj;
            e.1 += d;
            e.2 += 1;
        }
        let sparse: Vec<(usize, Vector3<f64>)> = per_vertex
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                let (a, b, n) = (*e)?;
                let d = if n == 1 {
                    b
                } else {
                    a.pseudo_inverse(1e-9).map(|p| p * b).unwrap_or(b / n as f64)
                };
                Some((i, d))
            })
            .collect();
        let field = propagate_and_smooth(&mesh, &sparse, radius, cfg.smoothing_weight, cfg.smoothing_iterations);
        let moved: Vec<Point3<f64>> = mesh
            .vertices()
            .iter()
            .zip(&field)
            .map(|(p, d)| p + cfg.step_fraction * d)
            .collect();
        mesh = mesh.with_vertices(moved)?;
    }

    let displacements = mesh
        .vertices()
        .iter()
        .zip(template.vertices())
        .map(|(a, b)| a - b)
        .collect();
    Ok(MorphResult {
        mesh,
        displacements,
        history_mm: history,
        converged,
        iterations,
        prefit,
        pose,
    })
}
