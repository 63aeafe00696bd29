//! Labeled image data: the CIFAR-100 binary loader, the synthetic
//! hierarchical generator, the dataset file format, and per-class
//! subsampling.

mod cifar;
mod store;
mod subsample;
mod synthetic;

pub use cifar::{
    encode_cifar100, load_cifar100, parse_cifar100, parse_cifar100_records, CIFAR_RECORD_BYTES,
    CIFAR_TEST_RECORDS, CIFAR_TRAIN_RECORDS,
};
pub use store::{decode_dataset, encode_dataset, load_dataset, save_dataset, DatasetHeader, DATASET_MAGIC};
pub use subsample::subsample_per_class;
pub use synthetic::{generate_synthetic, SyntheticConfig};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// One RGB image with its fine label. Pixels are kept as bytes in
/// channel-major order (all red, then green, then blue; rows of `size`
/// pixels) and exposed as values in `[0, 1]` via `byte / 255`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: u32,
    pub fine_label: usize,
    pub size: usize,
    pixels: Vec<u8>,
}

impl ImageRecord {
    pub fn new(image_id: u32, fine_label: usize, size: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != 3 * size * size {
            return Err(Error::Contract(format!(
                "image of size {size} needs {} pixel bytes, got {}",
                3 * size * size,
                pixels.len()
            )));
        }
        Ok(ImageRecord {
            image_id,
            fine_label,
            size,
            pixels,
        })
    }

    pub fn bytes(&self) -> &[u8] {
        &self.pixels
    }

    /// Pixel value in `[0, 1]` at channel `c`, row `y`, column `x`.
    pub fn pixel<T: Scalar>(&self, c: usize, y: usize, x: usize) -> T {
        T::of(self.pixels[(c * self.size + y) * self.size + x] as f64 / 255.0)
    }
}

/// SHA-256 over every record's label and pixel bytes, hex encoded.
pub fn fingerprint(records: &[ImageRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(r.image_id.to_le_bytes());
        h.update((r.fine_label as u32).to_le_bytes());
        h.update(&r.pixels);
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Checks the pixel-range and label-range invariants against a fine-class count.
pub fn check_records(records: &[ImageRecord], fine_count: usize) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        if r.fine_label >= fine_count {
            return Err(Error::Validation(format!(
                "record {i}: fine label {} >= fine count {fine_count}",
                r.fine_label
            )));
        }
    }
    Ok(())
}
