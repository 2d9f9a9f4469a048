//! IDX container decoding (the MNIST distribution format).
//!
//! Layout: a big-endian `u32` magic (`0x00000803` for `u8` rank-3 image
//! tensors, `0x00000801` for `u8` rank-1 label vectors), one big-endian `u32`
//! per dimension, then the raw bytes in row-major order.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, IdxError, Result};
use crate::math::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Divisor applied to raw pixel bytes.
pub const PIXEL_SCALE: f64 = 126.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdxData {
    Images(IdxImages),
    Labels(Vec<u8>),
}

fn read_u32(bytes: &[u8], at: usize) -> std::result::Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            needed: at + 4,
            available: bytes.len(),
        })
}

fn payload(bytes: &[u8], header: usize, dims: &[u32]) -> std::result::Result<usize, IdxError> {
    let size = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or(IdxError::DimensionOverflow)?;
    let needed = header.checked_add(size).ok_or(IdxError::DimensionOverflow)?;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    Ok(size)
}

pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<IdxImages, IdxError> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(IdxError::BadMagic {
            found: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let dims = [read_u32(bytes, 4)?, read_u32(bytes, 8)?, read_u32(bytes, 12)?];
    let size = payload(bytes, 16, &dims)?;
    Ok(IdxImages {
        count: dims[0] as usize,
        rows: dims[1] as usize,
        cols: dims[2] as usize,
        pixels: bytes[16..16 + size].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<Vec<u8>, IdxError> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(IdxError::BadMagic {
            found: magic,
            expected: LABELS_MAGIC,
        });
    }
    let count = read_u32(bytes, 4)?;
    let size = payload(bytes, 8, &[count])?;
    Ok(bytes[8..8 + size].to_vec())
}

/// Decodes either kind of IDX file, dispatching on the magic number.
pub fn parse_idx(bytes: &[u8]) -> std::result::Result<IdxData, IdxError> {
    match read_u32(bytes, 0)? {
        LABELS_MAGIC => parse_idx_labels(bytes).map(IdxData::Labels),
        _ => parse_idx_images(bytes).map(IdxData::Images),
    }
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Images with scaled pixels and their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    pub images: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl LabeledImageSet {
    pub fn new(images: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::Data(format!(
                "{} images but {} labels",
                images.rows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Data(format!("label {bad} outside 0..{n_classes}")));
        }
        Ok(Self {
            images,
            labels,
            n_classes,
        })
    }

    /// Builds the set from decoded IDX payloads, dividing every pixel by
    /// [`PIXEL_SCALE`]. This is the only place scaling happens.
    pub fn from_idx(images: &IdxImages, labels: &[u8]) -> Result<Self> {
        if images.count != labels.len() {
            return Err(Error::Data(format!(
                "{} images but {} labels",
                images.count,
                labels.len()
            )));
        }
        let dim = images.rows * images.cols;
        let pixels = images.pixels.iter().map(|&b| b as f64 / PIXEL_SCALE).collect();
        let matrix = Matrix::new(images.count, dim, pixels)?;
        Self::new(matrix, labels.iter().map(|&l| l as usize).collect(), 10)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.images.select_rows(indices)?,
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.n_classes,
        )
    }

    /// Contiguous slice `[start, end)`.
    pub fn range(&self, start: usize, end: usize) -> Result<Self> {
        Self::new(
            self.images.row_range(start, end)?,
            self.labels[start..end].to_vec(),
            self.n_classes,
        )
    }
}

/// Reads a file, transparently gunzipping when the name ends in `.gz`.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(BufReader::new(file)).read_to_end(&mut bytes)?;
    } else {
        BufReader::new(file).read_to_end(&mut bytes)?;
    }
    Ok(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::Data(format!("{stem}[.gz] not found in {}", dir.display())))
}

/// Loads the standard MNIST files (`train-*` or `t10k-*`, optionally gzipped)
/// from `dir`.
pub fn load_mnist(dir: &Path, split: MnistSplit) -> Result<LabeledImageSet> {
    let prefix = match split {
        MnistSplit::Train => "train",
        MnistSplit::Test => "t10k",
    };
    let images = parse_idx_images(&read_maybe_gz(&locate(dir, &format!("{prefix}-images-idx3-ubyte"))?)?)?;
    let labels = parse_idx_labels(&read_maybe_gz(&locate(dir, &format!("{prefix}-labels-idx1-ubyte"))?)?)?;
    LabeledImageSet::from_idx(&images, &labels)
}
