//! Multi-run experiments: prompting-layer sweep and training-data fraction study.

use super::{train, TrainConfig, TrainRunLog};
use crate::dataset::{subsample_per_class, ImageRecord};
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;
use crate::model::{ModelConfig, TransHPModel};
use crate::numerics::Scalar;

/// Everything one training run needs besides the seed.
#[derive(Clone, Copy, Debug)]
pub struct Experiment<'a> {
    pub hierarchy: &'a LabelHierarchy,
    pub train: &'a [ImageRecord],
    pub val: &'a [ImageRecord],
    pub model: &'a ModelConfig,
    pub train_cfg: &'a TrainConfig,
}

/// Assembles `model` from `seed`, trains it with `train_cfg.seed = seed` and
/// returns the trained model, its log and the final validation top-1.
pub fn run_arm<T: Scalar>(
    exp: &Experiment<'_>,
    model: &ModelConfig,
    train_split: &[ImageRecord],
    seed: u64,
) -> Result<(TransHPModel<T>, TrainRunLog, f64)> {
    let m = TransHPModel::<T>::assemble(model.clone(), exp.hierarchy, seed)?;
    let cfg = TrainConfig {
        seed,
        ..exp.train_cfg.clone()
    };
    let (m, log) = train(m, exp.hierarchy, train_split, exp.val, &cfg)?;
    let acc = log
        .final_val()
        .map(|v| v.fine_top1)
        .ok_or_else(|| Error::Contract("run produced no validation result".into()))?;
    Ok((m, log, acc))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    /// Prompting layer, or `None` for the no-prompt baseline.
    pub layer: Option<usize>,
    pub fine_top1: f64,
    pub coarse_top1: Option<f64>,
}

/// Moves the first prompting spec of `exp.model` to each candidate layer
/// and trains once per placement under `exp.train_cfg.seed`. With
/// `include_baseline` a final row without prompting is added.
pub fn position_sweep<T: Scalar>(
    exp: &Experiment<'_>,
    layers: &[usize],
    include_baseline: bool,
) -> Result<Vec<SweepRow>> {
    let spec = exp
        .model
        .prompting
        .first()
        .ok_or_else(|| Error::Config("position sweep needs a prompting spec to move".into()))?;
    let seed = exp.train_cfg.seed;
    let mut rows = Vec::new();
    for &layer in layers {
        if layer == 0 || layer > exp.model.depth {
            return Err(Error::Config(format!("candidate layer {layer} outside [1, {}]", exp.model.depth)));
        }
        let mut cfg = exp.model.clone();
        cfg.prompting = vec![crate::model::PromptingSpec { layer, ..spec.clone() }];
        let (_, log, acc) = run_arm::<T>(exp, &cfg, exp.train, seed)?;
        rows.push(SweepRow {
            layer: Some(layer),
            fine_top1: acc,
            coarse_top1: log.final_val().and_then(|v| v.coarse_top1.first().copied()),
        });
        log::info!("sweep layer {layer}: top1 {acc:.4}");
    }
    if include_baseline {
        let cfg = ModelConfig {
            prompting: Vec::new(),
            ..exp.model.clone()
        };
        let (_, _, acc) = run_arm::<T>(exp, &cfg, exp.train, seed)?;
        rows.push(SweepRow {
            layer: None,
            fine_top1: acc,
            coarse_top1: None,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyRow {
    pub fraction: f64,
    pub seed: u64,
    pub baseline_top1: f64,
    pub transhp_top1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencySummary {
    pub fraction: f64,
    pub baseline_median: f64,
    pub transhp_median: f64,
    /// Median over seeds of (top-1 at the largest fraction − top-1 here).
    pub baseline_drop: f64,
    pub transhp_drop: f64,
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// For every seed and fraction, subsamples the training split per class
/// (the subset depends only on the seed, so both arms see the same images)
/// and trains the plain backbone and the prompted model on it.
pub fn data_efficiency_protocol<T: Scalar>(
    exp: &Experiment<'_>,
    fractions: &[f64],
    seeds: &[u64],
) -> Result<(Vec<EfficiencyRow>, Vec<EfficiencySummary>)> {
    if fractions.is_empty() || fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::Config(format!("fractions must lie in (0, 1], got {fractions:?}")));
    }
    if exp.model.prompting.is_empty() {
        return Err(Error::Config("data-efficiency protocol needs a prompted model".into()));
    }
    let baseline = ModelConfig {
        prompting: Vec::new(),
        ..exp.model.clone()
    };
    let mut rows = Vec::new();
    for &seed in seeds {
        for &fraction in fractions {
            let subset = subsample_per_class(exp.train, fraction, seed)?;
            let (_, _, b) = run_arm::<T>(exp, &baseline, &subset, seed)?;
            let (_, _, t) = run_arm::<T>(exp, exp.model, &subset, seed)?;
            log::info!("fraction {fraction} seed {seed}: baseline {b:.4} transhp {t:.4}");
            rows.push(EfficiencyRow {
                fraction,
                seed,
                baseline_top1: b,
                transhp_top1: t,
            });
        }
    }
    Ok((rows.clone(), summarize_efficiency(&rows)))
}

pub fn summarize_efficiency(rows: &[EfficiencyRow]) -> Vec<EfficiencySummary> {
    let mut fractions: Vec<f64> = rows.iter().map(|r| r.fraction).collect();
    fractions.sort_by(|a, b| b.total_cmp(a));
    fractions.dedup();
    let top = fractions[0];
    fractions
        .iter()
        .map(|&f| {
            let at = |f: f64| rows.iter().filter(move |r| r.fraction == f);
            let drops = |pick: fn(&EfficiencyRow) -> f64| -> Vec<f64> {
                at(f)
                    .filter_map(|r| at(top).find(|t| t.seed == r.seed).map(|t| pick(t) - pick(r)))
                    .collect()
            };
            EfficiencySummary {
                fraction: f,
                baseline_median: median(&at(f).map(|r| r.baseline_top1).collect::<Vec<_>>()),
                transhp_median: median(&at(f).map(|r| r.transhp_top1).collect::<Vec<_>>()),
                baseline_drop: median(&drops(|r| r.baseline_top1)),
                transhp_drop: median(&drops(|r| r.transhp_top1)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_are_per_seed_medians() {
        let row = |fraction, seed, b, t| EfficiencyRow {
            fraction,
            seed,
            baseline_top1: b,
            transhp_top1: t,
        };
        let rows = vec![
            row(1.0, 0, 0.9, 0.95),
            row(0.5, 0, 0.6, 0.8),
            row(1.0, 1, 0.8, 0.85),
            row(0.5, 1, 0.7, 0.8),
            row(1.0, 2, 0.7, 0.9),
            row(0.5, 2, 0.3, 0.7),
        ];
        let s = summarize_efficiency(&rows);
        assert_eq!(s[0].fraction, 1.0);
        assert_eq!(s[0].baseline_drop, 0.0);
        assert!((s[1].baseline_drop - 0.3).abs() < 1e-12);
        assert!((s[1].transhp_drop - 0.15).abs() < 1e-12);
        assert!((s[1].transhp_median - 0.8).abs() < 1e-12);
    }
}
