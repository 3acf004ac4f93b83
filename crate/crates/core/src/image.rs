//! Grayscale and binary pixel grids.
//!
//! Cells are addressed as `(c, r)` = (column, row), stored row-major, so the
//! flat index of a cell is `r * width + c`.

use crate::error::{Error, Result};

/// Row-major 8-bit intensity image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::dims(
                format!("{} pixels ({width}x{height})", width * height),
                format!("{} pixels", pixels.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, c: usize, r: usize) -> u8 {
        self.pixels[r * self.width + c]
    }
}

/// Row-major binary image. A set cell is an "ink" pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitImage {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitImage {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::dims(
                format!("{} cells ({width}x{height})", width * height),
                format!("{} cells", bits.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    /// Builds an image by evaluating `ink(c, r)` on every cell.
    pub fn from_fn(width: usize, height: usize, mut ink: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                bits.push(ink(c, r));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of cells, i.e. the input width of a network reading this image.
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, c: usize, r: usize) -> bool {
        self.bits[r * self.width + c]
    }

    pub fn set(&mut self, c: usize, r: usize, ink: bool) {
        self.bits[r * self.width + c] = ink;
    }

    pub fn ink_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Flat indices of ink cells in ascending order.
    pub fn ink_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// `(c, r)` coordinates of ink cells in row-major order.
    pub fn ink_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter_map(move |(i, &b)| b.then_some((i % w, i / w)))
    }

    /// Input vector with 1.0 on ink cells and 0.0 elsewhere.
    pub fn to_values(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Default binarization cutoff: a pixel is ink iff its intensity is strictly above 127.
pub const DEFAULT_THRESHOLD: u8 = 127;

/// Ink iff `pixel > threshold`.
pub fn binarize(image: &GrayImage, threshold: u8) -> BitImage {
    BitImage {
        width: image.width,
        height: image.height,
        bits: image.pixels.iter().map(|&p| p > threshold).collect(),
    }
}
