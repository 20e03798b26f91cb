//! Reader for the IDX binary format used by MNIST-style image datasets.

use std::path::Path;

use super::{Dataset, TaskError};
use crate::scalar::Scalar;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> Result<u32, TaskError> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or(TaskError::TruncatedFile)?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], TaskError> {
        let end = self.pos.checked_add(n).ok_or(TaskError::TruncatedFile)?;
        let chunk = self.bytes.get(self.pos..end).ok_or(TaskError::TruncatedFile)?;
        self.pos = end;
        Ok(chunk)
    }
}

/// Parse an image file and a label file already in memory.
pub fn parse_idx<T: Scalar>(images: &[u8], labels: &[u8]) -> Result<Dataset<T>, TaskError> {
    let mut img = Cursor { bytes: images, pos: 0 };
    let magic = img.u32()?;
    if magic != IMAGE_MAGIC {
        return Err(TaskError::BadMagic { expected: IMAGE_MAGIC, found: magic });
    }
    let count = img.u32()? as usize;
    let rows = img.u32()? as usize;
    let cols = img.u32()? as usize;
    let dim = rows * cols;
    let pixels = img.take(count * dim)?;

    let mut lab = Cursor { bytes: labels, pos: 0 };
    let magic = lab.u32()?;
    if magic != LABEL_MAGIC {
        return Err(TaskError::BadMagic { expected: LABEL_MAGIC, found: magic });
    }
    let label_count = lab.u32()? as usize;
    if label_count != count {
        return Err(TaskError::CountMismatch { images: count, labels: label_count });
    }
    let raw_labels = lab.take(count)?;

    let scale = T::one() / T::of(255.0);
    let features = pixels.iter().map(|&p| T::of(p as f64) * scale).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&y| y as usize).collect();
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    Dataset::new(features, dim, labels, num_classes)
}

pub fn load_idx_images<T: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset<T>, TaskError> {
    let images = std::fs::read(images_path.as_ref())?;
    let labels = std::fs::read(labels_path.as_ref())?;
    parse_idx(&images, &labels)
}

/// Serialize a dataset back to IDX byte buffers (pixels rounded from `[0,1]`).
pub fn encode_idx<T: Scalar>(data: &Dataset<T>, rows: usize, cols: usize) -> (Vec<u8>, Vec<u8>) {
    assert_eq!(rows * cols, data.dim());
    let mut images = Vec::with_capacity(16 + data.len() * data.dim());
    images.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    images.extend_from_slice(&(data.len() as u32).to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    for i in 0..data.len() {
        images.extend(
            data.row(i)
                .iter()
                .map(|&x| (x.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    let mut labels = Vec::with_capacity(8 + data.len());
    labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(data.len() as u32).to_be_bytes());
    labels.extend(data.labels().iter().map(|&y| y as u8));
    (images, labels)
}
