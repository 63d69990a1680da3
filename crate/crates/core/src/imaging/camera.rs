use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

/// Points closer to the source plane than this (mm) cannot be projected.
pub const MIN_DEPTH_MM: f64 = 1e-6;

/// Point-source fluoroscope: the source sits at the camera origin, the
/// detector is the plane `z = sdd_mm`, image x runs along camera x and
/// image y along camera y (downwards). Pixel centers sit at integer
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub sdd_mm: f64,
    pub pitch_mm: f64,
    pub width_px: u32,
    pub height_px: u32,
    pub principal_px: [f64; 2],
}

impl Default for Camera {
    /// 1000 mm source-to-detector, 0.25 mm pixels, 1024² detector, centered principal point.
    fn default() -> Self {
        Camera {
            sdd_mm: 1000.0,
            pitch_mm: 0.25,
            width_px: 1024,
            height_px: 1024,
            principal_px: [512.0, 512.0],
        }
    }
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        let [cx, cy] = self.principal_px;
        if !(self.sdd_mm > 0.0) || !self.sdd_mm.is_finite() {
            return Err(Error::config("sdd_mm", "must be positive"));
        }
        if !(self.pitch_mm > 0.0) || !self.pitch_mm.is_finite() {
            return Err(Error::config("pitch_mm", "must be positive"));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::config("width_px/height_px", "must be nonzero"));
        }
        if !(cx >= 0.0 && cx <= self.width_px as f64 && cy >= 0.0 && cy <= self.height_px as f64) {
            return Err(Error::config("principal_px", "must lie inside the image"));
        }
        Ok(())
    }

    /// Same field of view sampled with `resolution`² pixels.
    pub fn with_resolution(&self, resolution: u32) -> Camera {
        let f = self.width_px as f64 / resolution as f64;
        let aspect = self.height_px as f64 / self.width_px as f64;
        Camera {
            sdd_mm: self.sdd_mm,
            pitch_mm: self.pitch_mm * f,
            width_px: resolution,
            height_px: ((resolution as f64) * aspect).round().max(1.0) as u32,
            principal_px: [self.principal_px[0] / f, self.principal_px[1] / f],
        }
    }

    /// Coarser detector with pixels `factor` times larger; image coordinates
    /// map as `u -> u / factor`.
    pub fn downsampled(&self, factor: u32) -> Camera {
        let f = factor as f64;
        Camera {
            sdd_mm: self.sdd_mm,
            pitch_mm: self.pitch_mm * f,
            width_px: self.width_px.div_ceil(factor),
            height_px: self.height_px.div_ceil(factor),
            principal_px: [self.principal_px[0] / f, self.principal_px[1] / f],
        }
    }

    /// Projects a camera-space point to continuous pixel coordinates.
    pub fn project(&self, p: &Point3<f64>) -> Result<Point2<f64>> {
        if !(p.z > MIN_DEPTH_MM) {
            return Err(Error::BehindSource { depth: p.z });
        }
        let s = self.sdd_mm / (p.z * self.pitch_mm);
        Ok(Point2::new(
            self.principal_px[0] + p.x * s,
            self.principal_px[1] + p.y * s,
        ))
    }

    /// Object-space size (mm) of one pixel at `depth_mm` from the source.
    pub fn mm_per_pixel_at(&self, depth_mm: f64) -> f64 {
        self.pitch_mm * depth_mm / self.sdd_mm
    }

    /// Unit direction from the source through camera-space point `p`.
    pub fn ray_direction(p: &Point3<f64>) -> Vector3<f64> {
        p.coords.normalize()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Camera> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cam: Camera = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("camera serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Pixel coordinates of object point `p` under `pose` (object → camera).
pub fn project_point(camera: &Camera, pose: &RigidTransform, p: &Point3<f64>) -> Result<Point2<f64>> {
    camera.project(&pose.apply_point(p))
}

/// The four standard fluoroscopic views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViewName {
    #[serde(rename = "AP")]
    Ap,
    #[serde(rename = "ML")]
    Ml,
    #[serde(rename = "ROT+45")]
    RotPlus45,
    #[serde(rename = "ROT-45")]
    RotMinus45,
}

impl ViewName {
    pub const ALL: [ViewName; 4] = [ViewName::Ap, ViewName::Ml, ViewName::RotPlus45, ViewName::RotMinus45];

    pub fn label(&self) -> &'static str {
        match self {
            ViewName::Ap => "AP",
            ViewName::Ml => "ML",
            ViewName::RotPlus45 => "ROT+45",
            ViewName::RotMinus45 => "ROT-45",
        }
    }

    /// Directory name used in case layouts.
    pub fn dir_name(&self) -> &'static str {
        match self {
            ViewName::Ap => "ap",
            ViewName::Ml => "ml",
            ViewName::RotPlus45 => "rot+45",
            ViewName::RotMinus45 => "rot-45",
        }
    }

    pub fn standard_angle_deg(&self) -> f64 {
        match self {
            ViewName::Ap => 0.0,
            ViewName::Ml => 90.0,
            ViewName::RotPlus45 => 45.0,
            ViewName::RotMinus45 => -45.0,
        }
    }
}

impl fmt::Display for ViewName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ViewName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ViewName::ALL
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(s) || v.dir_name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown view `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewDefinition {
    pub name: ViewName,
    /// Rotation about the subject's vertical axis relative to AP, degrees.
    pub angle_deg: f64,
}

/// AP (0°), ML (90°), ROT+45 (+45°), ROT-45 (−45°).
pub fn standard_views() -> [ViewDefinition; 4] {
    ViewName::ALL.map(|name| ViewDefinition {
        name,
        angle_deg: name.standard_angle_deg(),
    })
}

/// A calibrated view: detector model plus where the C-arm sits.
///
/// World coordinates have their origin at the isocenter with `y` along the
/// subject's vertical axis. The view's camera is the AP camera rotated by
/// `angle_deg` about that axis, with the source `isocenter_mm` from the
/// isocenter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub definition: ViewDefinition,
    pub camera: Camera,
    pub isocenter_mm: f64,
}

/// Source-to-isocenter distance giving magnification 2 with the default camera.
pub const DEFAULT_ISOCENTER_MM: f64 = 500.0;

impl View {
    pub fn new(definition: ViewDefinition, camera: Camera, isocenter_mm: f64) -> Self {
        View {
            definition,
            camera,
            isocenter_mm,
        }
    }

    /// The four standard views sharing one camera model.
    pub fn standard_set(camera: Camera, isocenter_mm: f64) -> Vec<View> {
        standard_views()
            .into_iter()
            .map(|d| View::new(d, camera, isocenter_mm))
            .collect()
    }

    pub fn name(&self) -> ViewName {
        self.definition.name
    }

    /// World → camera transform of this view.
    pub fn world_to_camera(&self) -> RigidTransform {
        RigidTransform::from_axis_angle(
            Vector3::y(),
            self.definition.angle_deg.to_radians(),
            Vector3::new(0.0, 0.0, self.isocenter_mm),
        )
    }

    /// Object → camera pose for an object placed in the world by `object_pose`.
    pub fn camera_pose(&self, object_pose: &RigidTransform) -> RigidTransform {
        self.world_to_camera().compose(object_pose)
    }

    pub fn with_camera(&self, camera: Camera) -> View {
        View { camera, ..*self }
    }
}
