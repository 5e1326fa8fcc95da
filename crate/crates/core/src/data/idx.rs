//! Big-endian IDX files as used by MNIST-style datasets.
//!
//! Images: magic `0x00000803`, dims `[n, rows, cols]`, one unsigned byte per
//! pixel. Labels: magic `0x00000801`, dims `[n]`.

use std::fs;
use std::path::Path;

use super::{Dataset, Split};
use crate::nn::Matrix;
use crate::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header at byte {offset}")))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let magic = read_u32(bytes, 0, what)?;
    if magic != expected {
        return Err(Error::Format(format!(
            "{what}: expected magic 0x{expected:08x}, found 0x{magic:08x}"
        )));
    }
    Ok(())
}

/// Parses an image file into `(n, rows·cols)` pixel bytes.
pub fn read_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    check_magic(bytes, IMAGES_MAGIC, "images")?;
    let n = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let dims = rows * cols;
    let body = &bytes[16..];
    if body.len() < n * dims {
        return Err(Error::Format(format!(
            "images: truncated body, need {} bytes, have {}",
            n * dims,
            body.len()
        )));
    }
    Ok((n, dims, body[..n * dims].to_vec()))
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC, "labels")?;
    let n = read_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Format(format!(
            "labels: truncated body, need {n} bytes, have {}",
            body.len()
        )));
    }
    Ok(body[..n].to_vec())
}

pub fn write_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an image/label file pair. Pixels are scaled to `[0, 1]` by
/// dividing by 255; the class count is `max(label) + 1`, at least 10.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let image_bytes = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let label_bytes = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (n, dims, pixels) = read_idx_images(&image_bytes)?;
    let labels = read_idx_labels(&label_bytes)?;
    if labels.len() != n {
        return Err(Error::Format(format!("{n} images but {} labels", labels.len())));
    }
    let features = Matrix::from_vec(n, dims, pixels.iter().map(|&p| f64::from(p) / 255.0).collect())?;
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    Dataset::new(features, labels, n_classes, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_pair(dir: &Path, images: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("images-idx3-ubyte");
        let lp = dir.join("labels-idx1-ubyte");
        fs::write(&ip, images).unwrap();
        fs::write(&lp, labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn two_image_fixture_scales_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let pixels = [0u8, 255, 255, 0, 255, 255, 0, 0];
        let (ip, lp) = write_pair(dir.path(), &write_idx_images(2, 2, &pixels), &write_idx_labels(&[3, 7]));
        let ds = load_idx(&ip, &lp, Split::Train).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dims(), 4);
        assert_eq!(ds.features.row(0), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(ds.features.row(1), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(ds.labels, vec![3, 7]);
        assert_eq!(ds.n_classes, 10);
    }

    #[test]
    fn labels_with_image_magic_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_idx_images(1, 1, &[9]);
        let (ip, _) = write_pair(dir.path(), &images, &[]);
        let err = load_idx(&ip, &ip, Split::Train).unwrap_err();
        assert!(matches!(&err, Error::Format(m) if m.contains("0x00000803")), "{err}");
    }

    #[test]
    fn truncated_files_are_rejected() {
        let mut images = write_idx_images(2, 2, &[1, 2, 3, 4, 5, 6, 7, 8]);
        images.truncate(20);
        assert!(matches!(read_idx_images(&images), Err(Error::Format(_))));
        assert!(matches!(read_idx_labels(&[0, 0, 8]), Err(Error::Format(_))));
        let mut labels = write_idx_labels(&[1, 2, 3]);
        labels.pop();
        assert!(matches!(read_idx_labels(&labels), Err(Error::Format(_))));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = load_idx("/nonexistent/a", "/nonexistent/b", Split::Test).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/a"));
    }

    proptest! {
        #[test]
        fn writer_and_reader_round_trip(pixels in prop::collection::vec(any::<u8>(), 0..6).prop_map(|v| v.repeat(6)), labels in prop::collection::vec(0u8..10, 1..5)) {
            let n = pixels.len() / 6;
            let (m, dims, back) = read_idx_images(&write_idx_images(2, 3, &pixels)).unwrap();
            prop_assert_eq!((m, dims), (n, 6));
            prop_assert_eq!(back, pixels);
            prop_assert_eq!(read_idx_labels(&write_idx_labels(&labels)).unwrap(), labels);
        }
    }
}
