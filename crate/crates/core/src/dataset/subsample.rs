use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ImageRecord;
use crate::error::{Error, Result};

/// Keeps `ceil(fraction · n_c)` records of every fine class `c`, chosen
/// uniformly without replacement. Survivors keep their original order.
pub fn subsample_per_class(records: &[ImageRecord], fraction: f64, seed: u64) -> Result<Vec<ImageRecord>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Contract(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let classes = records.iter().map(|r| r.fine_label + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, r) in records.iter().enumerate() {
        by_class[r.fine_label].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; records.len()];
    for members in &by_class {
        let n = members.len();
        let take = ((fraction * n as f64).ceil() as usize).min(n);
        if take == n {
            members.iter().for_each(|&i| keep[i] = true);
            continue;
        }
        for j in index::sample(&mut rng, n, take) {
            keep[members[j]] = true;
        }
    }
    Ok(records
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| r.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dummy(labels: &[usize]) -> Vec<ImageRecord> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| ImageRecord::new(i as u32, l, 1, vec![i as u8; 3]).unwrap())
            .collect()
    }

    #[test]
    fn full_fraction_is_identity() {
        let recs = dummy(&[2, 0, 1, 0, 2]);
        assert_eq!(subsample_per_class(&recs, 1.0, 3).unwrap(), recs);
    }

    #[test]
    fn half_of_ten() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let recs = dummy(&labels);
        let out = subsample_per_class(&recs, 0.5, 11).unwrap();
        for c in 0..3 {
            assert_eq!(out.iter().filter(|r| r.fine_label == c).count(), 5);
        }
        assert_eq!(out, subsample_per_class(&recs, 0.5, 11).unwrap());
        assert!(out.windows(2).all(|w| w[0].image_id < w[1].image_id));
    }

    #[test]
    fn rejects_bad_fraction() {
        let recs = dummy(&[0]);
        assert!(subsample_per_class(&recs, 0.0, 0).is_err());
        assert!(subsample_per_class(&recs, 1.5, 0).is_err());
    }

    proptest! {
        #[test]
        fn ceiling_counts(labels in proptest::collection::vec(0usize..5, 1..60), frac in 0.01f64..=1.0, seed: u64) {
            let recs = dummy(&labels);
            let out = subsample_per_class(&recs, frac, seed).unwrap();
            for c in 0..5 {
                let n = labels.iter().filter(|&&l| l == c).count();
                let kept = out.iter().filter(|r| r.fine_label == c).count();
                prop_assert_eq!(kept, (frac * n as f64).ceil() as usize);
            }
        }
    }
}
