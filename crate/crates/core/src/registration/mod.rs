//! Six-degree-of-freedom pose recovery from silhouette contours.
//!
//! The cost of a pose is the mean, over the pixels of the rendered model's
//! contour, of the target contour's distance field. Poses are searched with
//! Nelder–Mead over three rotations (degrees, about the posed centroid) and
//! three translations (mm), coarse to fine over an image pyramid.

mod simplex;

use std::path::Path;

use nalgebra::{Point2, Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, TriMesh};
use crate::imaging::{
    distance_field, project_vertices_into, rasterize, trace_outer_boundary, Camera, Contour,
    DistanceField, Mask, View,
};

pub use simplex::{axis_steps, nelder_mead, SimplexOptions, SimplexOutcome};

/// Cost assigned to a view whose render is invalid (behind the source or
/// outside the image).
pub const INVALID_RENDER_COST: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    /// Nelder–Mead iteration cap per run.
    pub max_iterations: usize,
    /// Spread of simplex costs (pixels) below which a run stops.
    pub tolerance_px: f64,
    /// Simplex diameter (1° ≡ 1 mm) below which a run stops.
    pub simplex_tolerance: f64,
    pub initial_step_deg: f64,
    pub initial_step_mm: f64,
    /// Additional randomly oriented restarts at the coarsest level.
    pub restarts: usize,
    pub pyramid_levels: u32,
    /// Average model→target and target→model distances.
    pub symmetric: bool,
    /// Mean per-view residual (pixels) above which a result is not
    /// reported as converged.
    pub converged_residual_px: f64,
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            max_iterations: 400,
            tolerance_px: 0.01,
            simplex_tolerance: 0.01,
            initial_step_deg: 4.0,
            initial_step_mm: 4.0,
            restarts: 4,
            pyramid_levels: 3,
            symmetric: false,
            converged_residual_px: 1.0,
            seed: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations", "must be positive"));
        }
        for (name, v) in [
            ("tolerance_px", self.tolerance_px),
            ("simplex_tolerance", self.simplex_tolerance),
            ("initial_step_deg", self.initial_step_deg),
            ("initial_step_mm", self.initial_step_mm),
            ("converged_residual_px", self.converged_residual_px),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if self.pyramid_levels == 0 {
            return Err(Error::config("pyramid_levels", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewResidual {
    pub view: String,
    pub residual_px: f64,
    pub residual_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Object → world for multi-view registration, object → camera for a
    /// single view.
    pub pose: RigidTransform,
    /// Mean of the per-view residuals.
    pub residual_px: f64,
    pub residual_mm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub per_view: Vec<ViewResidual>,
}

impl RegistrationResult {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("result serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Mean distance (pixels) from the rendered model contour to `target`.
pub fn contour_residual(camera: &Camera, pose: &RigidTransform, mesh: &TriMesh, target: &Contour) -> Result<f64> {
    residual_impl(camera, pose, mesh, target, false)
}

/// Average of the model→target and target→model mean contour distances.
pub fn contour_residual_symmetric(
    camera: &Camera,
    pose: &RigidTransform,
    mesh: &TriMesh,
    target: &Contour,
) -> Result<f64> {
    residual_impl(camera, pose, mesh, target, true)
}

fn residual_impl(camera: &Camera, pose: &RigidTransform, mesh: &TriMesh, target: &Contour, symmetric: bool) -> Result<f64> {
    let field = distance_field(target, camera.width_px, camera.height_px)?;
    let mut scratch = Scratch::new(camera);
    view_cost(mesh, camera, pose, &field, &target.points, symmetric, &mut scratch)
}

struct Scratch {
    projected: Vec<Point2<f64>>,
    mask: Mask,
    front_only: bool,
}

impl Scratch {
    fn new(camera: &Camera) -> Self {
        Scratch {
            projected: Vec::new(),
            mask: Mask::new(camera.width_px, camera.height_px),
            front_only: false,
        }
    }
}

fn view_cost(
    mesh: &TriMesh,
    camera: &Camera,
    pose: &RigidTransform,
    field: &DistanceField,
    target: &[[u32; 2]],
    symmetric: bool,
    scratch: &mut Scratch,
) -> Result<f64> {
    project_vertices_into(camera, pose, mesh, &mut scratch.projected)?;
    let bounds = rasterize(&scratch.projected, mesh.triangles(), &mut scratch.mask, scratch.front_only)
        .ok_or(Error::EmptyFootprint)?;
    let model = trace_outer_boundary(&scratch.mask, bounds);
    let forward = model.iter().map(|p| field.get(p[0], p[1])).sum::<f64>() / model.len() as f64;
    if !symmetric {
        return Ok(forward);
    }
    let model_field = distance_field(&Contour::new(model), camera.width_px, camera.height_px)?;
    let backward = target.iter().map(|p| model_field.get(p[0], p[1])).sum::<f64>() / target.len() as f64;
    Ok(0.5 * (forward + backward))
}

/// One target silhouette with the camera that saw it.
struct Target<'a> {
    name: String,
    camera: Camera,
    world_to_camera: RigidTransform,
    contour: &'a Contour,
}

struct LevelView {
    camera: Camera,
    world_to_camera: RigidTransform,
    field: DistanceField,
    target: Vec<[u32; 2]>,
    scratch: Scratch,
}

struct Level {
    factor: u32,
    views: Vec<LevelView>,
}

impl Level {
    /// Search levels of a closed mesh rasterize front faces only.
    fn build(targets: &[Target], factor: u32, closed: bool) -> Result<Level> {
        let mut views = Vec::with_capacity(targets.len());
        for t in targets {
            let camera = if factor == 1 { t.camera } else { t.camera.downsampled(factor) };
            let contour = if factor == 1 {
                t.contour.clone()
            } else {
                let mut c = t.contour.downsampled(factor);
                for p in &mut c.points {
                    p[0] = p[0].min(camera.width_px - 1);
                    p[1] = p[1].min(camera.height_px - 1);
                }
                c
            };
            let field = distance_field(&contour, camera.width_px, camera.height_px)
                .map_err(|e| Error::in_view(t.name.clone(), e))?;
            views.push(LevelView {
                camera,
                world_to_camera: t.world_to_camera,
                field,
                target: contour.points,
                scratch: Scratch {
                    front_only: closed,
                    ..Scratch::new(&camera)
                },
            });
        }
        Ok(Level { factor, views })
    }

    /// Summed view costs in full-resolution pixels; invalid views are
    /// penalized rather than reported.
    fn cost(&mut self, mesh: &TriMesh, pose: &RigidTransform, symmetric: bool) -> f64 {
        let f = self.factor as f64;
        self.views
            .iter_mut()
            .map(|v| {
                let cam_pose = v.world_to_camera.compose(pose);
                view_cost(mesh, &v.camera, &cam_pose, &v.field, &v.target, symmetric, &mut v.scratch)
                    .map(|c| c * f)
                    .unwrap_or(INVALID_RENDER_COST)
            })
            .sum()
    }
}

/// Summed full-resolution contour residual of a mesh over several views,
/// with the target distance fields computed once.
pub struct MultiViewCost {
    level: Level,
}

impl MultiViewCost {
    pub fn new(views: &[View], targets: &[Contour]) -> Result<Self> {
        let targets = view_targets(views, targets)?;
        for t in &targets {
            if t.contour.is_empty() {
                return Err(Error::in_view(t.name.clone(), Error::EmptyContour));
            }
        }
        Ok(MultiViewCost {
            level: Level::build(&targets, 1, false)?,
        })
    }

    /// Sum of per-view residuals (pixels) at object → world `pose`; a view
    /// that cannot be rendered contributes [`INVALID_RENDER_COST`].
    pub fn evaluate(&mut self, mesh: &TriMesh, pose: &RigidTransform) -> f64 {
        self.level.cost(mesh, pose, false)
    }
}

fn view_targets<'a>(views: &[View], targets: &'a [Contour]) -> Result<Vec<Target<'a>>> {
    if views.len() != targets.len() || views.is_empty() {
        return Err(Error::LengthMismatch {
            expected: views.len(),
            found: targets.len(),
        });
    }
    Ok(views
        .iter()
        .zip(targets)
        .map(|(v, c)| Target {
            name: v.name().label().to_string(),
            camera: v.camera,
            world_to_camera: v.world_to_camera(),
            contour: c,
        })
        .collect())
}

/// Pose perturbation about the posed centroid:
/// `x = (rx, ry, rz [deg], tx, ty, tz [mm])`, `R = Rz·Ry·Rx`.
#[derive(Debug, Clone, Copy)]
struct PoseParams {
    base: RigidTransform,
    center: Point3<f64>,
}

impl PoseParams {
    fn new(base: RigidTransform, mesh: &TriMesh) -> Self {
        PoseParams {
            base,
            center: base.apply_point(&mesh.centroid()),
        }
    }

    fn pose(&self, x: &[f64]) -> RigidTransform {
        let dq = UnitQuaternion::from_euler_angles(x[0].to_radians(), x[1].to_radians(), x[2].to_radians());
        let q = dq * self.base.quaternion();
        let c = self.center.coords;
        let t = dq * (self.base.translation() - c) + c + Vector3::new(x[3], x[4], x[5]);
        RigidTransform::from_quaternion(q, t)
    }
}

/// Recovers the object → camera pose of `mesh` from one contour.
pub fn register_single_view(
    camera: &Camera,
    mesh: &TriMesh,
    target: &Contour,
    init: &RigidTransform,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    let targets = [Target {
        name: "single".into(),
        camera: *camera,
        world_to_camera: RigidTransform::identity(),
        contour: target,
    }];
    register(&targets, mesh, init, cfg)
}

/// Recovers one object → world pose from contours seen in several views.
pub fn register_multi_view(
    views: &[View],
    mesh: &TriMesh,
    targets: &[Contour],
    init: &RigidTransform,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    let targets = view_targets(views, targets)?;
    register(&targets, mesh, init, cfg)
}

fn register(targets: &[Target], mesh: &TriMesh, init: &RigidTransform, cfg: &RegistrationConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    for t in targets {
        if t.contour.is_empty() {
            return Err(Error::in_view(t.name.clone(), Error::EmptyContour));
        }
        t.camera.validate().map_err(|e| Error::in_view(t.name.clone(), e))?;
    }

    let min_side = targets
        .iter()
        .map(|t| t.camera.width_px.min(t.camera.height_px))
        .min()
        .unwrap();
    let mut factors = Vec::new();
    for l in (0..cfg.pyramid_levels).rev() {
        let f = 1u32 << l;
        if f == 1 || min_side / f >= 64 {
            factors.push(f);
        }
    }

    let closed = mesh.is_closed() && mesh.signed_volume() > 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pose = *init;
    let mut iterations = 0;
    let mut evaluations = 0;
    let mut final_converged = false;
    let mut full = None;
    for (li, &factor) in factors.iter().enumerate() {
        let mut level = Level::build(targets, factor, closed)?;
        let shrink = 0.5f64.powi(li as i32);
        let step = [
            cfg.initial_step_deg * shrink,
            cfg.initial_step_deg * shrink,
            cfg.initial_step_deg * shrink,
            cfg.initial_step_mm * shrink,
            cfg.initial_step_mm * shrink,
            cfg.initial_step_mm * shrink,
        ];
        let runs = if li == 0 { 1 + cfg.restarts } else { 1 + cfg.restarts.min(1) };
        // Coarse levels only need to land inside the next level's basin.
        let f = factor as f64;
        let opts = SimplexOptions {
            max_iterations: cfg.max_iterations,
            f_tolerance: cfg.tolerance_px * f,
            x_tolerance: cfg.simplex_tolerance * f * f,
        };
        let mut best_cost = level.cost(mesh, &pose, cfg.symmetric);
        evaluations += 1;
        let mut level_converged = false;
        for run in 0..runs {
            let params = PoseParams::new(pose, mesh);
            let steps = if run == 0 {
                axis_steps(&step)
            } else {
                random_steps(&step, &mut rng)
            };
            let out = nelder_mead(
                |x| level.cost(mesh, &params.pose(x), cfg.symmetric),
                &[0.0; 6],
                &steps,
                &opts,
            );
            iterations += out.iterations;
            evaluations += out.evaluations;
            if out.f < best_cost {
                best_cost = out.f;
                pose = params.pose(&out.x);
                level_converged = out.converged;
            } else if run == 0 {
                level_converged = out.converged;
            }
        }
        if best_cost >= INVALID_RENDER_COST {
            return Err(Error::NoValidPose);
        }
        final_converged = level_converged;
        if factor == 1 {
            full = Some(level);
        }
    }

    let mut full = full.expect("pyramid ends at full resolution");
    for v in &mut full.views {
        v.scratch.front_only = false;
    }
    let init_cost = full.cost(mesh, init, cfg.symmetric);
    let final_cost = full.cost(mesh, &pose, cfg.symmetric);
    evaluations += 2;
    if init_cost <= final_cost {
        pose = *init;
    }

    let mut per_view = Vec::with_capacity(targets.len());
    for (t, v) in targets.iter().zip(full.views.iter_mut()) {
        let cam_pose = t.world_to_camera.compose(&pose);
        let px = view_cost(mesh, &v.camera, &cam_pose, &v.field, &v.target, cfg.symmetric, &mut v.scratch)
            .map_err(|e| Error::in_view(t.name.clone(), e))?;
        let depth = cam_pose.apply_point(&mesh.centroid()).z;
        per_view.push(ViewResidual {
            view: t.name.clone(),
            residual_px: px,
            residual_mm: px * t.camera.mm_per_pixel_at(depth),
        });
    }
    let n = per_view.len() as f64;
    let residual_px = per_view.iter().map(|v| v.residual_px).sum::<f64>() / n;
    let residual_mm = per_view.iter().map(|v| v.residual_mm).sum::<f64>() / n;
    Ok(RegistrationResult {
        pose,
        residual_px,
        residual_mm,
        converged: final_converged && residual_px <= cfg.converged_residual_px,
        iterations,
        evaluations,
        per_view,
    })
}

/// Simplex edges along a random orthonormal frame, scaled per coordinate.
fn random_steps(scale: &[f64; 6], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<[f64; 6]> = Vec::with_capacity(6);
    while basis.len() < 6 {
        let mut v = [0.0; 6];
        for c in &mut v {
            *c = rng.gen_range(-1.0..1.0);
        }
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(a, b)| a * b).sum();
            for (c, bc) in v.iter_mut().zip(b) {
                *c -= d * bc;
            }
        }
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-3 {
            basis.push(v.map(|c| c / norm));
        }
    }
    basis
        .iter()
        .map(|b| b.iter().zip(scale).map(|(c, s)| c * s).collect())
        .collect()
}
