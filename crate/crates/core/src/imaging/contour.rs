use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mask::Mask;
use super::render::PixelBounds;
use crate::error::{Error, Result};

/// Neighbour offsets in the order Moore tracing scans them: starting west and
/// turning counterclockwise as seen on screen (y down).
const DIRS: [(i64, i64); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

fn dir_index(dx: i64, dy: i64) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("offset between 8-neighbours")
}

/// Closed one-pixel-thick outer boundary of a silhouette.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contour {
    pub points: Vec<[u32; 2]>,
    pub closed: bool,
    pub subpixel: bool,
    /// Set when the source mask held more than one 8-connected component and
    /// only the largest was traced.
    #[serde(default)]
    pub fragmented: bool,
}

impl Contour {
    pub fn new(points: Vec<[u32; 2]>) -> Self {
        Contour {
            points,
            closed: true,
            subpixel: false,
            fragmented: false,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Contour with every coordinate divided by `factor` (rounded to nearest)
    /// and consecutive duplicates removed.
    pub fn downsampled(&self, factor: u32) -> Contour {
        let mut points: Vec<[u32; 2]> = Vec::with_capacity(self.points.len());
        let f = factor as f64;
        for p in &self.points {
            let q = [
                (p[0] as f64 / f).round() as u32,
                (p[1] as f64 / f).round() as u32,
            ];
            if points.last() != Some(&q) {
                points.push(q);
            }
        }
        while points.len() > 1 && points.first() == points.last() {
            points.pop();
        }
        Contour {
            points,
            ..self.clone()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Contour> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("contour serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Traces the outer boundary of the largest 8-connected foreground component.
///
/// Tracing starts at the component's topmost, then leftmost pixel and runs
/// counterclockwise on screen (down the left side first). Consecutive points
/// are 8-adjacent and the last one is adjacent to the first; pixels on
/// one-pixel-wide spurs or bridges are passed twice and appear twice.
pub fn extract_contour(mask: &Mask) -> Result<Contour> {
    let (labels, sizes) = label_components(mask);
    if sizes.is_empty() {
        return Err(Error::EmptyContour);
    }
    let keep = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i as u32 + 1)
        .unwrap();
    let w = mask.width() as usize;
    let start = labels.iter().position(|&l| l == keep).unwrap();
    let start = ((start % w) as i64, (start / w) as i64);
    let inside = |x: i64, y: i64| {
        x >= 0
            && y >= 0
            && (x as usize) < w
            && (y as u32) < mask.height()
            && labels[y as usize * w + x as usize] == keep
    };
    let mut contour = Contour::new(moore_trace(start, inside));
    contour.fragmented = sizes.len() > 1;
    Ok(contour)
}

/// Boundary of the component holding the topmost-leftmost foreground pixel
/// inside `bounds`, without component labelling.
pub(crate) fn trace_outer_boundary(mask: &Mask, bounds: PixelBounds) -> Vec<[u32; 2]> {
    let (x0, y0, x1, _) = bounds;
    let start = (x0..=x1).find(|&x| mask.get(x, y0)).expect("bounds row holds foreground");
    moore_trace((start as i64, y0 as i64), |x, y| mask.get_signed(x, y))
}

fn moore_trace(start: (i64, i64), inside: impl Fn(i64, i64) -> bool) -> Vec<[u32; 2]> {
    let to_point = |p: (i64, i64)| [p.0 as u32, p.1 as u32];
    let mut points = vec![start];
    let mut cur = start;
    let mut back = 0usize;
    let limit = 1 << 26;
    for _ in 0..limit {
        let mut next = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let q = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            if inside(q.0, q.1) {
                let prev = DIRS[(back + k - 1) % 8];
                let prev = (cur.0 + prev.0, cur.1 + prev.1);
                next = Some((q, dir_index(prev.0 - q.0, prev.1 - q.1)));
                break;
            }
        }
        let Some((q, b)) = next else {
            break;
        };
        if cur == start && points.len() > 1 && q == points[1] {
            points.pop();
            break;
        }
        points.push(q);
        cur = q;
        back = b;
    }
    points.into_iter().map(to_point).collect()
}

/// 8-connected component labels (0 = background, components numbered from 1
/// in raster order of their first pixel) and component sizes.
fn label_components(mask: &Mask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut labels = vec![0u32; (w * h) as usize];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if labels[start] != 0 || mask.data()[start] == 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        let mut size = 0;
        labels[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i as i64 % w, i as i64 / w);
            for (dx, dy) in DIRS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let j = (ny * w + nx) as usize;
                if labels[j] == 0 && mask.data()[j] != 0 {
                    labels[j] = id;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}
