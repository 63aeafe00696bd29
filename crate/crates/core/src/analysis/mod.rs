//! Prompt absorption statistics and class-token attention maps.
//!
//! The absorption weight of feature token `x` on prompt `p_i` is the
//! attention probability of query `x` on key `p_i` inside a prompting
//! block, averaged over heads. These are entries of already normalized
//! softmax rows, so they are not renormalized over the prompts.

mod heatmap;

pub use heatmap::{attention_map, export_attention_map, read_csv_matrix, AttentionMap};

use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;
use crate::model::{ForwardOutput, TransHPModel};
use crate::numerics::{Scalar, Tape, Tensor};

/// `[n_feature × M]` head-averaged attention of every feature-token query
/// on every prompt key, from an `[h × T × T]` attention tensor with
/// `T = n_feature + M`.
pub fn absorption_weights<T: Scalar>(attention: &Tensor<T>, n_feature: usize, m: usize) -> Result<Tensor<T>> {
    let s = attention.shape();
    if s.len() != 3 || s[1] != s[2] || s[1] != n_feature + m {
        return Err(Error::Dimension {
            op: "absorption_weights",
            lhs: s.to_vec(),
            rhs: vec![n_feature + m, n_feature + m],
        });
    }
    let (heads, t) = (s[0], s[1]);
    let mut out = Tensor::zeros([n_feature, m]);
    let inv = T::one() / T::of(heads as f64);
    let a = attention.data();
    for q in 0..n_feature {
        for i in 0..m {
            let mut acc = T::zero();
            for h in 0..heads {
                acc += a[(h * t + q) * t + n_feature + i];
            }
            out.data_mut()[q * m + i] = acc * inv;
        }
    }
    Ok(out)
}

/// `w_k / max_{i≠k} w_i`.
pub fn absorption_ratio(weights: &[f64], k: usize) -> Result<f64> {
    if weights.len() < 2 {
        return Err(Error::Contract(format!(
            "absorption ratio needs at least 2 prompts, got {}",
            weights.len()
        )));
    }
    if k >= weights.len() {
        return Err(Error::Index {
            index: k,
            len: weights.len(),
        });
    }
    let rival = weights
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, &w)| w)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(weights[k] / rival)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    /// Class-token query only.
    ClassToken,
    /// Mean over class and patch token queries.
    Features,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Predicted,
    GroundTruth,
}

impl Scope {
    fn tag(self) -> &'static str {
        match self {
            Scope::ClassToken => "cls",
            Scope::Features => "feat",
        }
    }
}

impl Target {
    fn tag(self) -> &'static str {
        match self {
            Target::Predicted => "pred",
            Target::GroundTruth => "gt",
        }
    }
}

/// Absorption of one image at one prompting block.
#[derive(Clone, Debug, PartialEq)]
pub struct AbsorptionReport {
    pub image_id: u32,
    /// 1-based block index.
    pub layer: usize,
    /// Sequence length of the block, `1 + N + M`.
    pub seq_len: usize,
    /// Class-token weights per prompt, head-averaged.
    pub cls_weights: Vec<f64>,
    /// Weights per prompt averaged over all feature-token queries.
    pub feature_weights: Vec<f64>,
    /// Class-token weights per head and prompt, `[h][M]`.
    pub per_head_cls: Vec<Vec<f64>>,
    /// Predicted coarse class, when the block has a coarse head.
    pub predicted: Option<usize>,
    pub ground_truth: usize,
}

impl AbsorptionReport {
    pub fn weights(&self, scope: Scope) -> &[f64] {
        match scope {
            Scope::ClassToken => &self.cls_weights,
            Scope::Features => &self.feature_weights,
        }
    }

    pub fn target(&self, target: Target) -> Option<usize> {
        match target {
            Target::Predicted => self.predicted,
            Target::GroundTruth => Some(self.ground_truth),
        }
    }

    pub fn target_weight(&self, scope: Scope, target: Target) -> Option<f64> {
        self.target(target).map(|k| self.weights(scope)[k])
    }

    pub fn ratio(&self, scope: Scope, target: Target) -> Option<f64> {
        let k = self.target(target)?;
        absorption_ratio(self.weights(scope), k).ok()
    }
}

/// One aggregated statistic, as written to run logs.
#[derive(Clone, Debug, PartialEq)]
pub struct AbsorptionRecord {
    pub epoch: usize,
    pub split: String,
    pub block: usize,
    pub statistic: String,
    pub value: f64,
}

/// Builds per-image reports for every pool-carrying block of a forward pass.
pub fn reports_from_forward<T: Scalar>(
    model: &TransHPModel<T>,
    tape: &Tape<T>,
    out: &ForwardOutput,
    images: &[&ImageRecord],
    hierarchy: &LabelHierarchy,
) -> Result<Vec<AbsorptionReport>> {
    let cfg = model.config();
    if !cfg.variant.has_pools() {
        return Ok(Vec::new());
    }
    let n_feature = cfg.feature_tokens();
    let with_head = !out.coarse_logits.is_empty();
    let mut reports = Vec::with_capacity(images.len() * cfg.prompting.len());
    for (j, spec) in cfg.prompting.iter().enumerate() {
        let m = spec.coarse_count;
        let attn = tape
            .attention_probs(out.attention[spec.layer - 1])
            .ok_or_else(|| Error::Contract("block output carries no attention".into()))?;
        for (b, img) in images.iter().enumerate() {
            let sample = attn.sample(b);
            let w = absorption_weights(&sample, n_feature, m)?;
            let cls_weights: Vec<f64> = w.row(0).iter().map(|v| v.as_f64()).collect();
            let mut feature_weights = vec![0.0; m];
            for q in 0..n_feature {
                for (acc, v) in feature_weights.iter_mut().zip(w.row(q)) {
                    *acc += v.as_f64();
                }
            }
            feature_weights.iter_mut().for_each(|v| *v /= n_feature as f64);
            let t = attn.seq;
            let s = sample.data();
            let per_head_cls = (0..attn.heads)
                .map(|h| (0..m).map(|i| s[h * t * t + n_feature + i].as_f64()).collect())
                .collect();
            let predicted = with_head.then(|| argmax(tape.value(out.coarse_logits[j]).row(b)));
            reports.push(AbsorptionReport {
                image_id: img.image_id,
                layer: spec.layer,
                seq_len: t,
                cls_weights,
                feature_weights,
                per_head_cls,
                predicted,
                ground_truth: hierarchy.ancestor_of(img.fine_label, spec.level)?,
            });
        }
    }
    Ok(reports)
}

pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Aggregates reports into per-block statistics:
/// `count`, `uniform` (1/T), and for each scope (`cls`, `feat`) and target
/// (`pred`, `gt`) `target_weight.{scope}.{target}` (mean),
/// `ratio_mean.{scope}.{target}` and `ratio_median.{scope}.{target}`.
/// Statistics whose target is unavailable are omitted.
pub fn summarize(reports: &[AbsorptionReport], epoch: usize, split: &str) -> Vec<AbsorptionRecord> {
    let mut layers: Vec<usize> = reports.iter().map(|r| r.layer).collect();
    layers.sort_unstable();
    layers.dedup();
    let mut out = Vec::new();
    for layer in layers {
        let rs: Vec<&AbsorptionReport> = reports.iter().filter(|r| r.layer == layer).collect();
        let mut put = |statistic: String, value: f64| {
            out.push(AbsorptionRecord {
                epoch,
                split: split.to_string(),
                block: layer,
                statistic,
                value,
            })
        };
        put("count".into(), rs.len() as f64);
        put("uniform".into(), 1.0 / rs[0].seq_len as f64);
        for scope in [Scope::ClassToken, Scope::Features] {
            for target in [Target::Predicted, Target::GroundTruth] {
                let tw: Vec<f64> = rs.iter().filter_map(|r| r.target_weight(scope, target)).collect();
                if tw.is_empty() {
                    continue;
                }
                let suffix = format!("{}.{}", scope.tag(), target.tag());
                put(format!("target_weight.{suffix}"), tw.iter().sum::<f64>() / tw.len() as f64);
                let mut ratios: Vec<f64> = rs.iter().filter_map(|r| r.ratio(scope, target)).collect();
                if !ratios.is_empty() {
                    put(format!("ratio_mean.{suffix}"), ratios.iter().sum::<f64>() / ratios.len() as f64);
                    put(format!("ratio_median.{suffix}"), median(&mut ratios));
                }
            }
        }
    }
    out
}

/// Forward passes over `split` in batches, returning one report per image
/// and prompting block.
pub fn track_absorption<T: Scalar>(
    model: &TransHPModel<T>,
    hierarchy: &LabelHierarchy,
    split: &[ImageRecord],
    batch_size: usize,
) -> Result<Vec<AbsorptionReport>> {
    let cfg = model.config();
    if cfg.prompting.is_empty() || !cfg.variant.has_pools() {
        return Err(Error::Contract("model has no prompting blocks with prompt pools".into()));
    }
    let mut reports = Vec::new();
    for chunk in split.chunks(batch_size.max(1)) {
        let refs: Vec<&ImageRecord> = chunk.iter().collect();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let out = model.forward(&mut tape, &bound, &refs)?;
        reports.extend(reports_from_forward(model, &tape, &out, &refs, hierarchy)?);
    }
    Ok(reports)
}

/// Looks up one statistic among aggregated records.
pub fn find_stat(records: &[AbsorptionRecord], split: &str, block: usize, statistic: &str) -> Option<f64> {
    records
        .iter()
        .find(|r| r.split == split && r.block == block && r.statistic == statistic)
        .map(|r| r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::softmax;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_attention() {
        let t = 217;
        let attn = Tensor::<f64>::full([2, t, t], 1.0 / t as f64);
        let w = absorption_weights(&attn, 197, 20).unwrap();
        assert_eq!(w.shape(), &[197, 20]);
        assert!(w.data().iter().all(|&v| (v - 1.0 / 217.0).abs() < 1e-15));
    }

    #[test]
    fn empty_pool() {
        let attn = Tensor::<f64>::full([1, 3, 3], 1.0 / 3.0);
        assert_eq!(absorption_weights(&attn, 3, 0).unwrap().numel(), 0);
        assert!(absorption_weights(&attn, 3, 1).is_err());
    }

    #[test]
    fn matches_softmax_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (h, nf, m) = (3, 5, 4);
        let t = nf + m;
        let logits = Tensor::<f64>::from_fn([h, t, t], |_| rng.random_range(-3.0..3.0));
        let probs = softmax(&logits, 2).unwrap();
        let w = absorption_weights(&probs, nf, m).unwrap();
        for q in 0..nf {
            let mut row_total = 0.0;
            for i in 0..m {
                let mut oracle = 0.0;
                for head in 0..h {
                    let row = &logits.data()[(head * t + q) * t..(head * t + q + 1) * t];
                    let z: f64 = row.iter().map(|v| v.exp()).sum();
                    oracle += row[nf + i].exp() / z;
                }
                oracle /= h as f64;
                let v = w.data()[q * m + i];
                assert!((v - oracle).abs() <= 1e-12);
                assert!((0.0..=1.0).contains(&v));
                row_total += v;
            }
            assert!(row_total <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn ratios() {
        assert_eq!(absorption_ratio(&[0.4, 0.1, 0.1], 0).unwrap(), 4.0);
        assert_eq!(absorption_ratio(&[0.2, 0.2, 0.2], 1).unwrap(), 1.0);
        assert!(absorption_ratio(&[0.1, 0.3, 0.2], 0).unwrap() < 1.0);
        assert!(matches!(absorption_ratio(&[1.0], 0), Err(Error::Contract(_))));
    }

    #[test]
    fn summary_statistics() {
        let r = |id, w: Vec<f64>, pred, gt| AbsorptionReport {
            image_id: id,
            layer: 5,
            seq_len: 10,
            cls_weights: w.clone(),
            feature_weights: w,
            per_head_cls: vec![],
            predicted: Some(pred),
            ground_truth: gt,
        };
        let reports = vec![
            r(0, vec![0.4, 0.1, 0.1], 0, 0),
            r(1, vec![0.1, 0.2, 0.1], 1, 0),
            r(2, vec![0.3, 0.1, 0.3], 0, 2),
        ];
        let s = summarize(&reports, 3, "val");
        assert_eq!(find_stat(&s, "val", 5, "count"), Some(3.0));
        assert_eq!(find_stat(&s, "val", 5, "uniform"), Some(0.1));
        let tw = find_stat(&s, "val", 5, "target_weight.cls.pred").unwrap();
        assert!((tw - 0.9 / 3.0).abs() < 1e-12);
        assert_eq!(find_stat(&s, "val", 5, "ratio_median.cls.pred"), Some(2.0));
        let gt = find_stat(&s, "val", 5, "target_weight.cls.gt").unwrap();
        assert!((gt - 0.8 / 3.0).abs() < 1e-12);
    }
}
