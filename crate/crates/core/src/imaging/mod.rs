//! Point-source projection of meshes into binary silhouettes and everything
//! derived from them: contours, distance fields, synthetic cases and COCO
//! annotation exchange.
//!
//! Image coordinates are pixels with the origin at the center of the top-left
//! pixel, x to the right and y down.

mod camera;
mod coco;
mod contour;
mod distance;
mod mask;
mod render;
mod synth;

pub use camera::{
    project_point, standard_views, Camera, View, ViewDefinition, ViewName, DEFAULT_ISOCENTER_MM,
    MIN_DEPTH_MM,
};
pub use coco::{
    export_coco, mask_iou, rasterize_polygon, CocoAnnotation, CocoCategory, CocoDocument,
    CocoImage, ImplantLabel,
};
pub use contour::{extract_contour, Contour};
pub use distance::{distance_field, nearest_point_field, DistanceField, NearestField};
pub use mask::{import_mask, Mask, BACKGROUND, FOREGROUND, IMPORT_THRESHOLD};
pub use render::{render_silhouette, PixelBounds};
pub use synth::{generate_synthetic_case, perturb_boundary, NoiseConfig, SyntheticCase, SyntheticView};

pub(crate) use contour::trace_outer_boundary;
pub(crate) use render::{project_vertices, project_vertices_into, rasterize};
