use super::contour::Contour;
use crate::error::{Error, Result};

const INF: i64 = i64::MAX / 4;

/// Per-pixel Euclidean distance (pixels) to the nearest contour point.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl DistanceField {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }
}

/// Distance field plus, per pixel, the index of the nearest contour point.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestField {
    pub field: DistanceField,
    nearest: Vec<u32>,
}

impl NearestField {
    /// Index into the contour's points of the nearest contour pixel.
    #[inline]
    pub fn nearest(&self, x: u32, y: u32) -> usize {
        self.nearest[y as usize * self.field.width as usize + x as usize] as usize
    }
}

/// Exact Euclidean distance transform of the contour pixels.
pub fn distance_field(contour: &Contour, width: u32, height: u32) -> Result<DistanceField> {
    Ok(nearest_point_field(contour, width, height)?.field)
}

/// [`distance_field`] that also records which contour point is nearest.
pub fn nearest_point_field(contour: &Contour, width: u32, height: u32) -> Result<NearestField> {
    if contour.is_empty() {
        return Err(Error::EmptyContour);
    }
    let (w, h) = (width as usize, height as usize);
    let mut site = vec![u32::MAX; w * h];
    for (i, p) in contour.points.iter().enumerate() {
        if p[0] >= width || p[1] >= height {
            return Err(Error::InvalidArgument(format!(
                "contour point ({}, {}) outside {width}x{height} image",
                p[0], p[1]
            )));
        }
        let k = p[1] as usize * w + p[0] as usize;
        if site[k] == u32::MAX {
            site[k] = i as u32;
        }
    }
    let (d2, nearest_flat) = squared_edt(w, h, |k| site[k] != u32::MAX);
    Ok(NearestField {
        field: DistanceField {
            width,
            height,
            values: d2.iter().map(|&d| (d as f64).sqrt()).collect(),
        },
        nearest: nearest_flat.iter().map(|&k| site[k]).collect(),
    })
}

/// Squared distances and flat index of the nearest site, computed
/// separably: exact 1-D distances along rows, then the lower envelope of
/// parabolas down each column.
fn squared_edt(w: usize, h: usize, is_site: impl Fn(usize) -> bool) -> (Vec<i64>, Vec<usize>) {
    let mut g = vec![INF; w * h];
    let mut gx = vec![0usize; w * h];
    for y in 0..h {
        let row = y * w;
        let mut last: Option<usize> = None;
        for x in 0..w {
            if is_site(row + x) {
                last = Some(x);
            }
            if let Some(s) = last {
                g[row + x] = ((x - s) * (x - s)) as i64;
                gx[row + x] = s;
            }
        }
        let mut last: Option<usize> = None;
        for x in (0..w).rev() {
            if is_site(row + x) {
                last = Some(x);
            }
            if let Some(s) = last {
                let d = ((s - x) * (s - x)) as i64;
                if d < g[row + x] {
                    g[row + x] = d;
                    gx[row + x] = s;
                }
            }
        }
    }

    let mut d2 = vec![INF; w * h];
    let mut nearest = vec![0usize; w * h];
    let mut v = vec![0usize; h];
    let mut z = vec![0f64; h + 1];
    for x in 0..w {
        let f = |y: usize| g[y * w + x];
        let mut k: isize = -1;
        for q in 0..h {
            if f(q) >= INF {
                continue;
            }
            let fq = (f(q) + (q * q) as i64) as f64;
            loop {
                if k < 0 {
                    k = 0;
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                let p = v[k as usize];
                let s = (fq - (f(p) + (p * p) as i64) as f64) / (2.0 * (q as f64 - p as f64));
                if s <= z[k as usize] {
                    k -= 1;
                } else {
                    k += 1;
                    v[k as usize] = q;
                    z[k as usize] = s;
                    z[k as usize + 1] = f64::INFINITY;
                    break;
                }
            }
        }
        if k < 0 {
            continue;
        }
        let mut k = 0usize;
        for q in 0..h {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let p = v[k];
            let dy = q as i64 - p as i64;
            d2[q * w + x] = dy * dy + f(p);
            nearest[q * w + x] = p * w + gx[p * w + x];
        }
    }
    (d2, nearest)
}
