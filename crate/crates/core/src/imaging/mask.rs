use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FOREGROUND: u8 = 255;
pub const BACKGROUND: u8 = 0;

/// Gray level at or above which an imported pixel counts as foreground.
pub const IMPORT_THRESHOLD: u8 = 128;

/// Binary silhouette image, row-major, values 0 and 255 only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            data: vec![BACKGROUND; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Mask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Thresholds 8-bit gray levels at [`IMPORT_THRESHOLD`].
    pub fn from_gray(width: u32, height: u32, gray: &[u8]) -> Result<Self> {
        if gray.len() != width as usize * height as usize {
            return Err(Error::LengthMismatch {
                expected: width as usize * height as usize,
                found: gray.len(),
            });
        }
        Ok(Mask {
            width,
            height,
            data: gray
                .iter()
                .map(|&g| if g >= IMPORT_THRESHOLD { FOREGROUND } else { BACKGROUND })
                .collect(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize] != BACKGROUND
    }

    /// Out-of-image coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && x < self.width as i64
            && y < self.height as i64
            && self.get(x as u32, y as u32)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = if on { FOREGROUND } else { BACKGROUND };
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != BACKGROUND).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == BACKGROUND)
    }

    /// Inclusive pixel bounds `(x0, y0, x1, y1)` of the foreground.
    pub fn bounds(&self) -> Option<(u32, u32, u32, u32)> {
        let mut b: Option<(u32, u32, u32, u32)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    b = Some(match b {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        b
    }

    /// Foreground pixel with at least one background 4-neighbour (image
    /// outside counts as background).
    pub fn is_boundary(&self, x: u32, y: u32) -> bool {
        let (x, y) = (x as i64, y as i64);
        self.get_signed(x, y)
            && (!self.get_signed(x - 1, y)
                || !self.get_signed(x + 1, y)
                || !self.get_signed(x, y - 1)
                || !self.get_signed(x, y + 1))
    }

    /// Mask translated by whole pixels; content shifted past the border is lost.
    pub fn shifted(&self, dx: i64, dy: i64) -> Mask {
        Mask::from_fn(self.width, self.height, |x, y| {
            self.get_signed(x as i64 - dx, y as i64 - dy)
        })
    }

    /// Intersection over union of the foregrounds (1 when both are empty).
    pub fn iou(&self, other: &Mask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.data.iter().zip(&other.data) {
            let (a, b) = (*a != BACKGROUND, *b != BACKGROUND);
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Binary PGM (P5, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// Reads an 8-bit grayscale image (PGM or PNG) and thresholds it at 128.
pub fn import_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    match img {
        image::DynamicImage::ImageLuma8(gray) => {
            let (w, h) = gray.dimensions();
            Mask::from_gray(w, h, gray.as_raw())
        }
        other => Err(Error::NonGrayscale {
            path: path.to_path_buf(),
            kind: format!("{:?}", other.color()),
        }),
    }
}
