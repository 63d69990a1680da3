use std::path::Path;

use serde::{Deserialize, Serialize};

use super::contour::extract_contour;
use super::mask::Mask;
use crate::error::{Error, Result};

/// Instance categories exchanged with segmenters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImplantLabel {
    Femur,
    Tibia,
}

impl ImplantLabel {
    pub fn category_id(&self) -> u64 {
        match self {
            ImplantLabel::Femur => 1,
            ImplantLabel::Tibia => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ImplantLabel::Femur => "femur",
            ImplantLabel::Tibia => "tibia",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDocument {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// Polygons as flat `[x0, y0, x1, y1, ...]` lists in continuous image
    /// coordinates (pixel `(x, y)` spans `[x, x+1) × [y, y+1)`).
    pub segmentation: Vec<Vec<f64>>,
    pub area: f64,
    /// `[x, y, width, height]` in pixels.
    pub bbox: [f64; 4],
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
    pub supercategory: String,
}

impl CocoDocument {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("document serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Builds one COCO document with an image entry and one polygon annotation
/// per mask. Image and annotation ids are sequential from 1.
pub fn export_coco(items: &[(String, Mask, ImplantLabel)]) -> Result<CocoDocument> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("no masks to export".into()));
    }
    let mut doc = CocoDocument {
        images: Vec::with_capacity(items.len()),
        annotations: Vec::with_capacity(items.len()),
        categories: [ImplantLabel::Femur, ImplantLabel::Tibia]
            .iter()
            .map(|l| CocoCategory {
                id: l.category_id(),
                name: l.name().to_string(),
                supercategory: "implant".to_string(),
            })
            .collect(),
    };
    for (i, (file_name, mask, label)) in items.iter().enumerate() {
        let id = i as u64 + 1;
        let (x0, y0, x1, y1) = mask.bounds().ok_or(Error::EmptyMask)?;
        let contour = extract_contour(mask)?;
        let polygon: Vec<f64> = if contour.len() >= 3 {
            contour
                .points
                .iter()
                .flat_map(|p| [p[0] as f64 + 0.5, p[1] as f64 + 0.5])
                .collect()
        } else {
            let (a, b, c, d) = (x0 as f64, y0 as f64, x1 as f64 + 1.0, y1 as f64 + 1.0);
            vec![a, b, c, b, c, d, a, d]
        };
        doc.images.push(CocoImage {
            id,
            file_name: file_name.clone(),
            width: mask.width(),
            height: mask.height(),
        });
        doc.annotations.push(CocoAnnotation {
            id,
            image_id: id,
            category_id: label.category_id(),
            segmentation: vec![polygon],
            area: mask.foreground_count() as f64,
            bbox: [x0 as f64, y0 as f64, (x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64],
            iscrowd: 0,
        });
    }
    Ok(doc)
}

/// Mask of the pixels whose centers `(x + 0.5, y + 0.5)` lie inside or on
/// the flat polygon `[x0, y0, x1, y1, ...]`.
pub fn rasterize_polygon(polygon: &[f64], width: u32, height: u32) -> Mask {
    let pts: Vec<(f64, f64)> = polygon.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    Mask::from_fn(width, height, |x, y| point_in_polygon(&pts, x as f64 + 0.5, y as f64 + 0.5))
}

/// Intersection over union of two equally sized masks.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::InvalidArgument("masks differ in size".into()));
    }
    Ok(a.iou(b))
}

fn point_in_polygon(pts: &[(f64, f64)], px: f64, py: f64) -> bool {
    let n = pts.len();
    if n == 0 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let (ax, ay) = pts[i];
        let (bx, by) = pts[(i + 1) % n];
        let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
        let within = px >= ax.min(bx) - 1e-12
            && px <= ax.max(bx) + 1e-12
            && py >= ay.min(by) - 1e-12
            && py <= ay.max(by) + 1e-12;
        if cross.abs() < 1e-12 && within {
            return true;
        }
        if (ay > py) != (by > py) && px < ax + (py - ay) * (bx - ax) / (by - ay) {
            inside = !inside;
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block() -> Mask {
        Mask::from_fn(5, 5, |x, y| (1..=3).contains(&x) && (1..=3).contains(&y))
    }

    #[test]
    fn block_bbox() {
        let doc = export_coco(&[("a.pgm".into(), block(), ImplantLabel::Femur)]).unwrap();
        assert_eq!(doc.annotations.len(), 1);
        assert_eq!(doc.annotations[0].bbox, [1.0, 1.0, 3.0, 3.0]);
        assert_eq!(doc.annotations[0].area, 9.0);
        let names: Vec<_> = doc.categories.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["femur", "tibia"]);
    }

    #[test]
    fn ids_are_sequential() {
        let doc = export_coco(&[
            ("a.pgm".into(), block(), ImplantLabel::Femur),
            ("b.pgm".into(), block(), ImplantLabel::Tibia),
        ])
        .unwrap();
        let ids: Vec<u64> = doc.images.iter().map(|i| i.id).collect();
        assert_eq!(ids, [1, 2]);
        assert_eq!(doc.annotations[1].image_id, 2);
        assert_eq!(doc.annotations[1].category_id, 2);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(export_coco(&[]).is_err());
        assert!(matches!(
            export_coco(&[("e".into(), Mask::new(3, 3), ImplantLabel::Femur)]),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn polygon_round_trip_reproduces_convex_mask() {
        let m = Mask::from_fn(80, 60, |x, y| {
            let (dx, dy) = ((x as f64 - 41.2) / 25.0, (y as f64 - 28.7) / 17.0);
            dx * dx + dy * dy <= 1.0
        });
        let doc = export_coco(&[("m".into(), m.clone(), ImplantLabel::Tibia)]).unwrap();
        let r = rasterize_polygon(&doc.annotations[0].segmentation[0], 80, 60);
        assert!(mask_iou(&m, &r).unwrap() >= 0.98);
    }

    #[test]
    fn tiny_mask_uses_box_polygon() {
        let m = Mask::from_fn(4, 4, |x, y| x == 1 && y == 2);
        let doc = export_coco(&[("t".into(), m.clone(), ImplantLabel::Femur)]).unwrap();
        assert_eq!(doc.annotations[0].segmentation[0], vec![1.0, 2.0, 2.0, 2.0, 2.0, 3.0, 1.0, 3.0]);
        assert_eq!(rasterize_polygon(&doc.annotations[0].segmentation[0], 4, 4), m);
    }
}
