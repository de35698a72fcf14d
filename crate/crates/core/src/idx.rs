//! The IDX binary container used by MNIST and Fashion-MNIST.
//!
//! Layout: a 4-byte big-endian magic (`0x0000_08NN`, `08` = unsigned byte
//! payload, `NN` = number of dimensions), one big-endian `u32` per dimension,
//! then the raw payload.

use alloc::format;
use alloc::vec::Vec;

use crate::dataset::{LabeledDataset, SampleShape};
use crate::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Decoded image file: `count` images of `rows x cols` unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated(format!("{what}: header ends after {} bytes", bytes.len())))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let magic = read_u32(bytes, 0, what)?;
    if magic != expected {
        return Err(Error::Format(format!(
            "{what}: magic 0x{magic:08x}, expected 0x{expected:08x}"
        )));
    }
    Ok(())
}

pub fn decode_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC, "image file")?;
    let count = read_u32(bytes, 4, "image file")? as usize;
    let rows = read_u32(bytes, 8, "image file")? as usize;
    let cols = read_u32(bytes, 12, "image file")? as usize;
    let len = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < len {
        return Err(Error::Truncated(format!(
            "image file: payload has {} bytes, header promises {len}",
            payload.len()
        )));
    }
    Ok(IdxImages { count, rows, cols, pixels: payload[..len].to_vec() })
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC, "label file")?;
    let count = read_u32(bytes, 4, "label file")? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Truncated(format!(
            "label file: payload has {} bytes, header promises {count}",
            payload.len()
        )));
    }
    Ok(payload[..count].to_vec())
}

pub fn encode_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for dim in [count, rows, cols] {
        out.extend_from_slice(&(dim as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Build a dataset from an image/label file pair. Pixels are scaled by
/// `1/255`. `num_classes` defaults to `max(label) + 1` (at least 2).
pub fn dataset_from_idx(
    image_bytes: &[u8],
    label_bytes: &[u8],
    num_classes: Option<usize>,
) -> Result<LabeledDataset> {
    let images = decode_images(image_bytes)?;
    let labels = decode_labels(label_bytes)?;
    if images.count != labels.len() {
        return Err(Error::Inconsistent(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let k = num_classes
        .unwrap_or_else(|| labels.iter().copied().max().map_or(0, |m| m as usize + 1))
        .max(2);
    let samples = images.pixels.iter().map(|&p| f32::from(p) / 255.0).collect();
    let labels = labels.into_iter().map(usize::from).collect();
    LabeledDataset::new(samples, labels, SampleShape::new(1, images.rows, images.cols), k)
}

/// Quantize a dataset back to IDX bytes (`round(v * 255)`), the inverse of
/// [`dataset_from_idx`] at 1/255 resolution.
pub fn dataset_to_idx(ds: &LabeledDataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let shape = ds.shape();
    if shape.channels != 1 {
        return Err(Error::arg("IDX image files hold single-channel images"));
    }
    if ds.num_classes() > 256 {
        return Err(Error::arg("IDX label files hold at most 256 classes"));
    }
    let pixels: Vec<u8> = ds.samples().iter().map(|&v| libm::roundf(v * 255.0) as u8).collect();
    let labels: Vec<u8> = ds.labels().iter().map(|&l| l as u8).collect();
    Ok((encode_images(shape.height, shape.width, &pixels), encode_labels(&labels)))
}
