use std::path::Path;

use super::ImageRecord;
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;

/// One coarse byte, one fine byte, 3072 pixel bytes.
pub const CIFAR_RECORD_BYTES: usize = 2 + 3 * 32 * 32;
pub const CIFAR_TRAIN_RECORDS: usize = 50_000;
pub const CIFAR_TEST_RECORDS: usize = 10_000;

/// Parses any whole number of CIFAR-100 records, checking each stored
/// coarse byte against the built-in taxonomy.
pub fn parse_cifar100_records(bytes: &[u8], first_id: u32) -> Result<Vec<ImageRecord>> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_BYTES != 0 {
        return Err(Error::Length {
            expected: format!("a positive multiple of {CIFAR_RECORD_BYTES}"),
            actual: bytes.len(),
        });
    }
    let taxonomy = LabelHierarchy::cifar100();
    bytes
        .chunks_exact(CIFAR_RECORD_BYTES)
        .enumerate()
        .map(|(i, rec)| {
            let coarse = rec[0] as usize;
            let fine = rec[1] as usize;
            if fine >= 100 {
                return Err(Error::Validation(format!("record {i}: fine label {fine} >= 100")));
            }
            let expected = taxonomy.ancestor_of(fine, 0)?;
            if coarse != expected {
                return Err(Error::Consistency {
                    record: i,
                    fine,
                    stored: coarse,
                    expected,
                });
            }
            ImageRecord::new(first_id + i as u32, fine, 32, rec[2..].to_vec())
        })
        .collect()
}

/// Parses the train and test splits. Each buffer may hold any whole number
/// of records; use [`load_cifar100`] to also enforce the official split sizes.
pub fn parse_cifar100(
    train: &[u8],
    test: &[u8],
) -> Result<(Vec<ImageRecord>, Vec<ImageRecord>, LabelHierarchy)> {
    let train = parse_cifar100_records(train, 0)?;
    let test = parse_cifar100_records(test, train.len() as u32)?;
    Ok((train, test, LabelHierarchy::cifar100()))
}

/// Reads `train.bin` / `test.bin` style files of exactly 50,000 and 10,000 records.
pub fn load_cifar100(
    train: impl AsRef<Path>,
    test: impl AsRef<Path>,
) -> Result<(Vec<ImageRecord>, Vec<ImageRecord>, LabelHierarchy)> {
    let read = |p: &Path, records: usize| -> Result<Vec<u8>> {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        let expected = records * CIFAR_RECORD_BYTES;
        if bytes.len() != expected {
            return Err(Error::Length {
                expected: expected.to_string(),
                actual: bytes.len(),
            });
        }
        Ok(bytes)
    };
    let train = read(train.as_ref(), CIFAR_TRAIN_RECORDS)?;
    let test = read(test.as_ref(), CIFAR_TEST_RECORDS)?;
    parse_cifar100(&train, &test)
}

/// Serializes records back into the CIFAR-100 layout.
pub fn encode_cifar100(records: &[ImageRecord]) -> Result<Vec<u8>> {
    let taxonomy = LabelHierarchy::cifar100();
    let mut out = Vec::with_capacity(records.len() * CIFAR_RECORD_BYTES);
    for r in records {
        if r.size != 32 {
            return Err(Error::Contract(format!("CIFAR images are 32x32, got {}", r.size)));
        }
        out.push(taxonomy.ancestor_of(r.fine_label, 0)? as u8);
        out.push(r.fine_label as u8);
        out.extend_from_slice(r.bytes());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(coarse: u8, fine: u8, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut v = vec![coarse, fine];
        v.extend((0..3072).map(fill));
        v
    }

    #[test]
    fn two_crafted_records() {
        // trout (91) is a fish (1); tank (85) is vehicles 2 (19)
        let mut bytes = record(1, 91, |i| (i % 256) as u8);
        bytes.extend(record(19, 85, |i| 255 - (i % 7) as u8));
        let recs = parse_cifar100_records(&bytes, 0).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].fine_label, 91);
        assert_eq!(recs[1].fine_label, 85);
        // red channel, row 0, col 3 -> byte 3
        assert_eq!(recs[0].pixel::<f64>(0, 0, 3), 3.0 / 255.0);
        // blue channel, row 31, col 31 -> index 3071
        assert_eq!(recs[0].pixel::<f64>(2, 31, 31), (3071 % 256) as f64 / 255.0);
        assert_eq!(recs[1].pixel::<f64>(1, 2, 5), (255 - ((1024 + 69) % 7)) as f64 / 255.0);
        assert_eq!(encode_cifar100(&recs).unwrap(), bytes);
    }

    #[test]
    fn empty_and_truncated_inputs() {
        assert!(matches!(
            parse_cifar100_records(&[], 0),
            Err(Error::Length { actual: 0, .. })
        ));
        let mut bytes = record(1, 91, |_| 0);
        bytes.pop();
        match parse_cifar100_records(&bytes, 0) {
            Err(Error::Length { actual, .. }) => assert_eq!(actual, 3073),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistent_coarse_byte() {
        let mut bytes = record(1, 91, |_| 0);
        bytes.extend(record(2, 91, |_| 0));
        match parse_cifar100_records(&bytes, 0) {
            Err(Error::Consistency {
                record,
                fine,
                stored,
                expected,
            }) => {
                assert_eq!((record, fine, stored, expected), (1, 91, 2, 1));
            }
            other => panic!("{other:?}"),
        }
    }
}
