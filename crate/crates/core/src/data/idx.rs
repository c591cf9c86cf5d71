use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::Array2;

use super::{Dataset, Provenance};
use crate::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn header(bytes: &[u8], magic: u32, ndims: usize, what: &str) -> Result<Vec<usize>> {
    let need = 4 + 4 * ndims;
    if bytes.len() < need {
        return Err(Error::Format(format!("{what}: truncated header")));
    }
    let word = |i: usize| u32::from_be_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let found = word(0);
    if found != magic {
        return Err(Error::Format(format!(
            "{what}: magic {found:#010x}, expected {magic:#010x}"
        )));
    }
    Ok((0..ndims).map(|k| word(4 + 4 * k) as usize).collect())
}

/// Images as rows of pixels scaled to `[0, 1]`, plus `(rows, cols)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(Array2<f64>, usize, usize)> {
    let dims = header(bytes, IMAGES_MAGIC, 3, "images")?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    let body = &bytes[16..];
    if body.len() != n * h * w {
        return Err(Error::Format(format!(
            "images: expected {} pixel bytes, found {}",
            n * h * w,
            body.len()
        )));
    }
    let x = Array2::from_shape_fn((n, h * w), |(i, j)| body[i * h * w + j] as f64 / 255.0);
    Ok((x, h, w))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let dims = header(bytes, LABELS_MAGIC, 1, "labels")?;
    let body = &bytes[8..];
    if body.len() != dims[0] {
        return Err(Error::Format(format!(
            "labels: expected {} entries, found {}",
            dims[0],
            body.len()
        )));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Reads an IDX image/label pair (optionally gzip-compressed).
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let (x, _, _) = parse_idx_images(&read_file(ip)?)?;
    let labels = parse_idx_labels(&read_file(lp)?)?;
    if x.nrows() != labels.len() {
        return Err(Error::Data(format!(
            "{} images but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(
        x,
        labels,
        k,
        Provenance::new(format!("idx({}, {})", ip.display(), lp.display())),
    )
}
