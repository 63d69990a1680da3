use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::camera::View;
use super::contour::{extract_contour, Contour};
use super::mask::Mask;
use super::render::render_silhouette;
use crate::error::{Error, Result};
use crate::geometry::{scale_mesh, RigidTransform, TriMesh};

/// Random one-pixel perturbation of mask boundaries.
///
/// Every pixel on either side of the boundary (foreground with a background
/// 4-neighbour, or background with a foreground 4-neighbour) is flipped with
/// probability `boundary_flip_probability`, so the outline erodes or dilates
/// by at most one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub boundary_flip_probability: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            boundary_flip_probability: 0.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn is_active(&self) -> bool {
        self.boundary_flip_probability > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticView {
    pub view: View,
    /// Object → camera transform used to render the truth mesh.
    pub pose_true: RigidTransform,
    pub mask: Mask,
    pub contour: Contour,
}

/// A case with known ground truth: the template, a uniformly scaled truth
/// mesh and its four silhouettes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCase {
    pub case_id: String,
    pub template: TriMesh,
    pub truth: TriMesh,
    pub scale: f64,
    /// Object → world placement shared by all views.
    pub object_pose: RigidTransform,
    pub views: Vec<SyntheticView>,
}

/// Scales `template` about its centroid by `scale`, places it with
/// `object_pose` and renders it into each view.
pub fn generate_synthetic_case(
    case_id: &str,
    template: &TriMesh,
    scale: f64,
    views: &[View],
    object_pose: &RigidTransform,
    noise: &NoiseConfig,
) -> Result<SyntheticCase> {
    if views.len() != 4 {
        return Err(Error::InvalidArgument(format!("expected 4 views, got {}", views.len())));
    }
    for (i, v) in views.iter().enumerate() {
        if views[..i].iter().any(|u| u.name() == v.name()) {
            return Err(Error::InvalidArgument(format!("view {} given twice", v.name())));
        }
    }
    if !(0.0..=1.0).contains(&noise.boundary_flip_probability) {
        return Err(Error::config("boundary_flip_probability", "must lie in [0, 1]"));
    }
    let truth = scale_mesh(template, scale, &template.centroid())?;
    let mut out = Vec::with_capacity(4);
    for (i, view) in views.iter().enumerate() {
        let pose_true = view.camera_pose(object_pose);
        let mut mask = render_silhouette(&view.camera, &pose_true, &truth).map_err(|e| Error::in_view(view.name().label(), e))?;
        if noise.is_active() {
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
            rng.set_stream(i as u64);
            mask = perturb_boundary(&mask, noise.boundary_flip_probability, &mut rng);
        }
        let contour = extract_contour(&mask).map_err(|e| Error::in_view(view.name().label(), e))?;
        out.push(SyntheticView {
            view: *view,
            pose_true,
            mask,
            contour,
        });
    }
    Ok(SyntheticCase {
        case_id: case_id.to_string(),
        template: template.clone(),
        truth,
        scale,
        object_pose: *object_pose,
        views: out,
    })
}

/// Flips boundary pixels of `mask` on both sides with probability `p`.
/// Candidates are decided on the unperturbed mask.
pub fn perturb_boundary(mask: &Mask, p: f64, rng: &mut impl Rng) -> Mask {
    let mut out = mask.clone();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let (xi, yi) = (x as i64, y as i64);
            let on = mask.get(x, y);
            let n4 = [(xi - 1, yi), (xi + 1, yi), (xi, yi - 1), (xi, yi + 1)];
            let edge = n4.iter().any(|&(nx, ny)| mask.get_signed(nx, ny) != on);
            if edge && rng.gen::<f64>() < p {
                out.set(x, y, !on);
            }
        }
    }
    out
}
