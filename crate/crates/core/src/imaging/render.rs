use nalgebra::Point2;

use super::camera::{Camera, MIN_DEPTH_MM};
use super::mask::{Mask, FOREGROUND};
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, TriMesh};

/// Inclusive pixel rectangle `(x0, y0, x1, y1)`.
pub type PixelBounds = (u32, u32, u32, u32);

/// Binary silhouette of `mesh` seen through `camera` with object → camera
/// transform `pose`.
///
/// A pixel is set when its center falls inside at least one projected
/// triangle. Pixel centers exactly on an edge belong to the triangle for
/// which that edge is a top or left edge.
pub fn render_silhouette(camera: &Camera, pose: &RigidTransform, mesh: &TriMesh) -> Result<Mask> {
    let projected = project_vertices(camera, pose, mesh)?;
    let mut mask = Mask::new(camera.width_px, camera.height_px);
    rasterize(&projected, mesh.triangles(), &mut mask, false).ok_or(Error::EmptyFootprint)?;
    Ok(mask)
}

pub(crate) fn project_vertices(
    camera: &Camera,
    pose: &RigidTransform,
    mesh: &TriMesh,
) -> Result<Vec<Point2<f64>>> {
    let mut out = Vec::with_capacity(mesh.vertex_count());
    project_vertices_into(camera, pose, mesh, &mut out)?;
    Ok(out)
}

pub(crate) fn project_vertices_into(
    camera: &Camera,
    pose: &RigidTransform,
    mesh: &TriMesh,
    out: &mut Vec<Point2<f64>>,
) -> Result<()> {
    out.clear();
    let r = pose.rotation();
    let t = pose.translation();
    let s = camera.sdd_mm / camera.pitch_mm;
    let [cx, cy] = camera.principal_px;
    for v in mesh.vertices() {
        let p = r * v.coords + t;
        if !(p.z > MIN_DEPTH_MM) {
            return Err(Error::BehindSource { depth: p.z });
        }
        out.push(Point2::new(cx + p.x * s / p.z, cy + p.y * s / p.z));
    }
    Ok(())
}

/// Clears `mask` and fills the union of the projected triangles. Returns the
/// bounds of what was drawn, or `None` if no pixel center was covered.
///
/// With `front_only`, triangles facing away from the source are skipped. For
/// a closed, outward-oriented mesh this gives the same silhouette up to
/// pixel centers lying exactly on rim edges.
pub(crate) fn rasterize(
    points: &[Point2<f64>],
    triangles: &[[usize; 3]],
    mask: &mut Mask,
    front_only: bool,
) -> Option<PixelBounds> {
    let (w, h) = (mask.width(), mask.height());
    let stride = w as usize;
    let data = mask.data_mut();
    data.fill(0);
    let mut bounds: Option<PixelBounds> = None;
    let (wf, hf) = (w as f64 - 1.0, h as f64 - 1.0);

    for tri in triangles {
        let mut a = points[tri[0]];
        let mut b = points[tri[1]];
        let c = points[tri[2]];
        let area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if area == 0.0 || !area.is_finite() || (front_only && area > 0.0) {
            continue;
        }
        if area < 0.0 {
            std::mem::swap(&mut a, &mut b);
        }
        let minx = a.x.min(b.x).min(c.x).ceil().max(0.0);
        let maxx = a.x.max(b.x).max(c.x).floor().min(wf);
        let miny = a.y.min(b.y).min(c.y).ceil().max(0.0);
        let maxy = a.y.max(b.y).max(c.y).floor().min(hf);
        if minx > maxx || miny > maxy {
            continue;
        }
        let edges = [Edge::new(a, b), Edge::new(b, c), Edge::new(c, a)];
        let (x0, x1) = (minx as i64, maxx as i64);
        let (mut tx0, mut tx1, mut ty0, mut ty1) = (u32::MAX, 0, u32::MAX, 0);
        for y in miny as u32..=maxy as u32 {
            let py = y as f64;
            // Coverage along a row is an interval; estimate its ends, then
            // settle them with the exact per-pixel test.
            let (mut lo, mut hi) = (x0, x1);
            for e in &edges {
                if e.dy > 0.0 {
                    let bound = e.ax + e.dx * (py - e.ay) / e.dy;
                    hi = hi.min((bound.floor() as i64).saturating_add(1));
                } else if e.dy < 0.0 {
                    let bound = e.ax + e.dx * (py - e.ay) / e.dy;
                    lo = lo.max((bound.ceil() as i64).saturating_sub(1));
                }
            }
            let covered = |x: i64| edges.iter().all(|e| e.covers(x as f64, py));
            while lo <= hi && !covered(lo) {
                lo += 1;
            }
            while hi >= lo && !covered(hi) {
                hi -= 1;
            }
            if lo > hi {
                continue;
            }
            let row = y as usize * stride;
            data[row + lo as usize..=row + hi as usize].fill(FOREGROUND);
            tx0 = tx0.min(lo as u32);
            tx1 = tx1.max(hi as u32);
            ty0 = ty0.min(y);
            ty1 = ty1.max(y);
        }
        if tx0 <= tx1 {
            bounds = Some(match bounds {
                None => (tx0, ty0, tx1, ty1),
                Some((bx0, by0, bx1, by1)) => (bx0.min(tx0), by0.min(ty0), bx1.max(tx1), by1.max(ty1)),
            });
        }
    }
    bounds
}

struct Edge {
    ax: f64,
    ay: f64,
    dx: f64,
    dy: f64,
    owns_boundary: bool,
}

impl Edge {
    fn new(a: Point2<f64>, b: Point2<f64>) -> Self {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        Edge {
            ax: a.x,
            ay: a.y,
            dx,
            dy,
            owns_boundary: dy < 0.0 || (dy == 0.0 && dx > 0.0),
        }
    }

    #[inline]
    fn covers(&self, px: f64, py: f64) -> bool {
        let e = self.dx * (py - self.ay) - self.dy * (px - self.ax);
        e > 0.0 || (e == 0.0 && self.owns_boundary)
    }
}
