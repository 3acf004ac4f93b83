//! MNIST IDX container parsing and labeled datasets.
//!
//! ```text
//! images: 0x00000803 | n: u32 | rows: u32 | cols: u32 | n*rows*cols bytes
//! labels: 0x00000801 | n: u32 | n bytes
//! ```
//! All header integers are big-endian. Images are row-major, one byte per pixel.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Standard file names of the MNIST distribution.
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

pub const MNIST_CLASSES: usize = 10;

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let chunk = bytes.get(at..at + 4).ok_or(Error::Truncation {
        expected: at + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("4-byte slice")))
}

fn check_magic(bytes: &[u8], magic: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != magic {
        return Err(Error::Format(format!(
            "expected IDX magic {magic:#010x}, found {found:#010x}"
        )));
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, payload: usize) -> Result<()> {
    let found = bytes.len() - header;
    if found < payload {
        return Err(Error::Truncation {
            expected: payload,
            found,
        });
    }
    if found > payload {
        return Err(Error::Format(format!(
            "{} trailing bytes after declared payload",
            found - payload
        )));
    }
    Ok(())
}

/// Image file header plus images, kept together so re-encoding is lossless
/// even for a file that declares zero images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<GrayImage>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let area = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format(format!("image size {rows}x{cols} overflows")))?;
    let payload = n
        .checked_mul(area)
        .ok_or_else(|| Error::Format(format!("{n} images of {area} pixels overflows")))?;
    check_payload(bytes, 16, payload)?;

    let images = if area == 0 {
        (0..n)
            .map(|_| GrayImage::new(cols, rows, Vec::new()))
            .collect::<Result<_>>()?
    } else {
        bytes[16..]
            .chunks_exact(area)
            .map(|px| GrayImage::new(cols, rows, px.to_vec()))
            .collect::<Result<_>>()?
    };
    Ok(IdxImages { rows, cols, images })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    check_payload(bytes, 8, n)?;
    Ok(bytes[8..].to_vec())
}

fn be_u32(v: usize) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_be_bytes)
        .map_err(|_| Error::Format(format!("{v} does not fit an IDX header field")))
}

pub fn encode_idx_images(idx: &IdxImages) -> Result<Vec<u8>> {
    let area = idx.rows * idx.cols;
    let mut out = Vec::with_capacity(16 + idx.images.len() * area);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&be_u32(idx.images.len())?);
    out.extend_from_slice(&be_u32(idx.rows)?);
    out.extend_from_slice(&be_u32(idx.cols)?);
    for img in &idx.images {
        if img.width() != idx.cols || img.height() != idx.rows {
            return Err(Error::dims(
                format!("{}x{}", idx.cols, idx.rows),
                format!("{}x{}", img.width(), img.height()),
            ));
        }
        out.extend_from_slice(img.pixels());
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&be_u32(labels.len())?);
    out.extend_from_slice(labels);
    Ok(out)
}

/// Images paired with class labels in `[0, class_count)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    images: Vec<GrayImage>,
    labels: Vec<u8>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(images: Vec<GrayImage>, labels: Vec<u8>, class_count: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::dims(
                format!("{} labels", images.len()),
                format!("{} labels", labels.len()),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= class_count) {
            return Err(Error::Range {
                what: "label",
                detail: format!("{bad} >= class count {class_count}"),
            });
        }
        Ok(Self {
            images,
            labels,
            class_count,
        })
    }

    pub fn from_idx_bytes(images: &[u8], labels: &[u8], class_count: usize) -> Result<Self> {
        let idx = parse_idx_images(images)?;
        Self::new(idx.images, parse_idx_labels(labels)?, class_count)
    }

    pub fn load(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
        Self::from_idx_bytes(
            &read(images.as_ref())?,
            &read(labels.as_ref())?,
            MNIST_CLASSES,
        )
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn images(&self) -> &[GrayImage] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> (&GrayImage, usize) {
        (&self.images[i], self.labels[i] as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GrayImage, usize)> + '_ {
        self.images
            .iter()
            .zip(self.labels.iter().map(|&l| l as usize))
    }

    /// First `n` records in file order.
    pub fn take_prefix(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(Error::Range {
                what: "subset size",
                detail: format!("{n} > dataset length {}", self.len()),
            });
        }
        Ok(Self {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            class_count: self.class_count,
        })
    }

    /// Per-class record counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }
}

/// Locations of the four MNIST files.
#[derive(Debug, Clone)]
pub struct MnistPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistPaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            train_images: dir.join(TRAIN_IMAGES),
            train_labels: dir.join(TRAIN_LABELS),
            test_images: dir.join(TEST_IMAGES),
            test_labels: dir.join(TEST_LABELS),
        }
    }

    pub fn exists(&self) -> bool {
        [
            &self.train_images,
            &self.train_labels,
            &self.test_images,
            &self.test_labels,
        ]
        .iter()
        .all(|p| p.is_file())
    }

    pub fn load_train(&self) -> Result<LabeledDataset> {
        LabeledDataset::load(&self.train_images, &self.train_labels)
    }

    pub fn load_test(&self) -> Result<LabeledDataset> {
        LabeledDataset::load(&self.test_images, &self.test_labels)
    }
}
