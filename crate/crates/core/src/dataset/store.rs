//! Dataset file format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "THPD"
//! 4       4     version (u32 LE) = 1
//! 8       4     M, coarse classes at level 0 (u32 LE)
//! 12      4     K, fine classes per coarse class, 0 if not uniform (u32 LE)
//! 16      4     H, image side length (u32 LE)
//! 20      4     record count (u32 LE)
//! 24      ...   records, each 2 + 3·H·H bytes:
//!               coarse label byte, fine label byte, pixels channel-major
//! ```
//!
//! Records use the CIFAR-100 record layout generalized to side length `H`.

use std::path::Path;

use super::ImageRecord;
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;

pub const DATASET_MAGIC: &[u8; 4] = b"THPD";
const VERSION: u32 = 1;
const HEADER_BYTES: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetHeader {
    pub coarse_count: usize,
    pub fine_per_coarse: usize,
    pub image_size: usize,
    pub count: usize,
}

pub fn encode_dataset(records: &[ImageRecord], hierarchy: &LabelHierarchy) -> Result<Vec<u8>> {
    let size = records.first().map_or(0, |r| r.size);
    let m = hierarchy.coarse_count(0)?;
    let fine = hierarchy.fine_count();
    let uniform = fine % m == 0
        && (0..fine).all(|f| hierarchy.ancestor_of(f, 0).map(|c| c == f / (fine / m)).unwrap_or(false));
    let k = if uniform { fine / m } else { 0 };
    if fine > 256 || m > 256 {
        return Err(Error::Contract("labels must fit in one byte".into()));
    }
    let mut out = Vec::with_capacity(HEADER_BYTES + records.len() * (2 + 3 * size * size));
    out.extend_from_slice(DATASET_MAGIC);
    for v in [VERSION, m as u32, k as u32, size as u32, records.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for r in records {
        if r.size != size {
            return Err(Error::Contract("all records must share one image size".into()));
        }
        out.push(hierarchy.ancestor_of(r.fine_label, 0)? as u8);
        out.push(r.fine_label as u8);
        out.extend_from_slice(r.bytes());
    }
    Ok(out)
}

/// Decodes a dataset, checking every coarse byte against `hierarchy` when given.
pub fn decode_dataset(
    bytes: &[u8],
    hierarchy: Option<&LabelHierarchy>,
) -> Result<(DatasetHeader, Vec<ImageRecord>)> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Length {
            expected: format!("at least {HEADER_BYTES}"),
            actual: bytes.len(),
        });
    }
    if &bytes[..4] != DATASET_MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    if word(0) != VERSION as usize {
        return Err(Error::Format(format!("unsupported dataset version {}", word(0))));
    }
    let header = DatasetHeader {
        coarse_count: word(1),
        fine_per_coarse: word(2),
        image_size: word(3),
        count: word(4),
    };
    let rec = 2 + 3 * header.image_size * header.image_size;
    let expected = HEADER_BYTES + header.count * rec;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected: expected.to_string(),
            actual: bytes.len(),
        });
    }
    let mut records = Vec::with_capacity(header.count);
    for (i, chunk) in bytes[HEADER_BYTES..].chunks_exact(rec).enumerate() {
        let (coarse, fine) = (chunk[0] as usize, chunk[1] as usize);
        let expected_coarse = match hierarchy {
            Some(h) => Some(h.ancestor_of(fine, 0).map_err(|_| {
                Error::Validation(format!("record {i}: fine label {fine} outside hierarchy"))
            })?),
            None if header.fine_per_coarse > 0 => Some(fine / header.fine_per_coarse),
            None => None,
        };
        if let Some(e) = expected_coarse {
            if e != coarse {
                return Err(Error::Consistency {
                    record: i,
                    fine,
                    stored: coarse,
                    expected: e,
                });
            }
        }
        records.push(ImageRecord::new(i as u32, fine, header.image_size, chunk[2..].to_vec())?);
    }
    Ok((header, records))
}

pub fn save_dataset(path: impl AsRef<Path>, records: &[ImageRecord], h: &LabelHierarchy) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_dataset(records, h)?).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    hierarchy: Option<&LabelHierarchy>,
) -> Result<(DatasetHeader, Vec<ImageRecord>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes, hierarchy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticConfig};

    #[test]
    fn round_trip_bytes() {
        let cfg = SyntheticConfig {
            images_per_fine: 2,
            image_size: 8,
            ..Default::default()
        };
        let (recs, h) = generate_synthetic(&cfg).unwrap();
        let bytes = encode_dataset(&recs, &h).unwrap();
        assert_eq!(&bytes[..4], b"THPD");
        let (header, back) = decode_dataset(&bytes, Some(&h)).unwrap();
        assert_eq!(header.coarse_count, 8);
        assert_eq!(header.fine_per_coarse, 4);
        assert_eq!(header.count, recs.len());
        assert_eq!(back, recs);
        assert_eq!(encode_dataset(&back, &h).unwrap(), bytes);
    }

    #[test]
    fn detects_corruption() {
        let cfg = SyntheticConfig {
            images_per_fine: 1,
            image_size: 8,
            ..Default::default()
        };
        let (recs, h) = generate_synthetic(&cfg).unwrap();
        let mut bytes = encode_dataset(&recs, &h).unwrap();
        assert!(matches!(decode_dataset(&bytes[..bytes.len() - 1], None), Err(Error::Length { .. })));
        bytes[24] ^= 1;
        assert!(matches!(decode_dataset(&bytes, None), Err(Error::Consistency { record: 0, .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_dataset(&bytes, None), Err(Error::Format(_))));
    }
}
