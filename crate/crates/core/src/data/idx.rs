//! IDX (MNIST / Fashion-MNIST) image and label files.
//!
//! Layout: big-endian `u32` magic, `u32` item count, then for images `u32`
//! rows and `u32` columns, followed by one unsigned byte per pixel or label.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::parse(bytes.len(), format!("header truncated, needed 4 bytes at offset {offset}")))
}

/// Images as rows of pixel values scaled to `[0, 1]`, plus the row width.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(Vec<f64>, usize, usize)> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::parse(0, format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let dim = rows * cols;
    let header = 16;
    let needed = count
        .checked_mul(dim)
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| Error::parse(4, "image payload size overflows"))?;
    if bytes.len() < needed {
        return Err(Error::parse(
            bytes.len(),
            format!("image payload truncated: {count} images of {rows}x{cols} need {needed} bytes"),
        ));
    }
    let pixels = bytes[header..needed].iter().map(|&b| b as f64 / 255.0).collect();
    Ok((pixels, count, dim))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::parse(0, format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let header = 8;
    if bytes.len() < header + count {
        return Err(Error::parse(
            bytes.len(),
            format!("label payload truncated: {count} labels need {} bytes", header + count),
        ));
    }
    Ok(bytes[header..header + count].iter().map(|&b| b as usize).collect())
}

/// Combine parsed image and label buffers into a dataset over `num_classes` classes.
pub fn parse_idx(images: &[u8], labels: &[u8], num_classes: usize) -> Result<Dataset> {
    let (pixels, count, dim) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != count {
        return Err(Error::parse(4, format!("{count} images but {} labels", labels.len())));
    }
    if let Some(pos) = labels.iter().position(|&y| y >= num_classes) {
        return Err(Error::parse(8 + pos, format!("label {} out of range for {num_classes} classes", labels[pos])));
    }
    Dataset::new(dim, num_classes, pixels, labels)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, num_classes: usize) -> Result<Dataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    parse_idx(&images, &labels, num_classes)
}
