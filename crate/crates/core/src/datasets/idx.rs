//! The IDX container used by the MNIST family: a big-endian magic
//! `00 00 <type> <rank>`, `rank` big-endian u32 dimensions, then the
//! row-major payload. Only unsigned-byte image tensors (`0x0803`) and
//! label vectors (`0x0801`) are read.

use std::fs;
use std::path::Path;

use super::{Domain, DomainDataset};
use crate::error::{Error, Result};
use crate::grad::Matrix;

pub const IDX_IMAGES: u32 = 0x0803;
pub const IDX_LABELS: u32 = 0x0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an IDX buffer whose magic must equal `expected`.
pub fn parse_idx(bytes: &[u8], expected: u32) -> Result<IdxArray> {
    let header = |need: usize| {
        if bytes.len() < need {
            Err(Error::IdxTruncated {
                expected: need,
                found: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    header(4)?;
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if magic >> 16 != 0 {
        return Err(Error::IdxMagic(magic));
    }
    if magic != expected {
        return Err(Error::IdxUnsupported { magic, expected });
    }
    let rank = (magic & 0xff) as usize;
    let offset = 4 + 4 * rank;
    header(offset)?;
    let dims: Vec<usize> = bytes[4..offset]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(Error::IdxOverflow)?;
    let end = offset.checked_add(len).ok_or(Error::IdxOverflow)?;
    header(end)?;
    Ok(IdxArray {
        dims,
        data: bytes[offset..end].to_vec(),
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an image tensor, flattening each image row-major, and pairs it
/// with a label vector when one is given. Pixel values stay in [0, 255];
/// the class count is one past the largest label (0 when unlabeled).
pub fn load_idx(images: &Path, labels: Option<&Path>, domain: Domain) -> Result<DomainDataset> {
    let img = parse_idx(&read(images)?, IDX_IMAGES)?;
    let n = img.dims[0];
    let width = img.dims[1] * img.dims[2];
    let x = Matrix::from_shape_vec((n, width), img.data.iter().map(|&b| f64::from(b)).collect())
        .map_err(|e| Error::InvalidData(e.to_string()))?;
    let (labels, classes, note) = match labels {
        Some(p) => {
            let lab = parse_idx(&read(p)?, IDX_LABELS)?;
            if lab.dims[0] != n {
                return Err(Error::IdxCountMismatch {
                    images: n,
                    labels: lab.dims[0],
                });
            }
            let y: Vec<usize> = lab.data.iter().map(|&b| usize::from(b)).collect();
            let k = y.iter().max().map_or(0, |m| m + 1);
            (Some(y), k, format!(" + {}", p.display()))
        }
        None => (None, 0, String::new()),
    };
    DomainDataset::new(
        x,
        labels,
        classes,
        domain,
        format!("idx({}{note})", images.display()),
    )
}

fn be_header(magic: u32, dims: &[usize]) -> Result<Vec<u8>> {
    let mut out = magic.to_be_bytes().to_vec();
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::IdxOverflow)?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    Ok(out)
}

/// Writes `count` row-major `rows × cols` byte images.
pub fn write_idx_images(path: &Path, count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != count * rows * cols {
        return Err(Error::InvalidData(format!(
            "{} pixels for {count} images of {rows}x{cols}",
            pixels.len()
        )));
    }
    let mut out = be_header(IDX_IMAGES, &[count, rows, cols])?;
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = be_header(IDX_LABELS, &[labels.len()])?;
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
