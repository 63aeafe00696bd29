//! Training, evaluation and the multi-run experiment protocols.
//!
//! Training is single-threaded: batch order comes from a seeded RNG and
//! every reduction runs in a fixed order, so equal configurations and seeds
//! give bitwise-identical parameters and logs.

mod optim;
mod protocols;
mod runlog;
mod schedule;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use optim::AdamW;
pub use protocols::{
    data_efficiency_protocol, position_sweep, run_arm, summarize_efficiency, EfficiencyRow, EfficiencySummary, Experiment, SweepRow,
};
pub use runlog::{log_checksum, read_absorption, EpochRecord, EvalMetrics, SplitMetrics, TrainRunLog};
pub use schedule::LrSchedule;

use crate::analysis::{self, argmax, AbsorptionReport};
use crate::dataset::{fingerprint, ImageRecord};
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;
use crate::kv::KvMap;
use crate::model::TransHPModel;
use crate::numerics::{Scalar, Tape};
use crate::objective::total_loss;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub deterministic: bool,
    /// Validation runs every this many epochs and always after the last.
    pub eval_every: usize,
    /// Random horizontal flips of training images.
    pub flip: bool,
}

impl TrainConfig {
    /// 60 epochs, batch 64, lr 3e-3, weight decay 0.05, 5 warmup epochs.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 64,
            base_lr: 3e-3,
            warmup_epochs: 5,
            weight_decay: 0.05,
            seed: 0,
            deterministic: true,
            eval_every: 1,
            flip: false,
        }
    }

    /// Large-scale reference recipe: 300 epochs, batch 1024, lr 1e-3.
    pub fn large() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 1024,
            base_lr: 1e-3,
            warmup_epochs: 5,
            weight_decay: 0.05,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("base_lr must be > 0, got {}", self.base_lr));
        }
        if self.epochs > 0 && self.warmup_epochs >= self.epochs {
            return bad(format!(
                "warmup epochs {} must be fewer than epochs {}",
                self.warmup_epochs, self.epochs
            ));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return bad("batch_size and eval_every must be >= 1".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        Ok(())
    }

    pub fn to_kv(&self, prefix: &str) -> KvMap {
        let mut m = KvMap::new();
        let mut put = |k: &str, v: String| m.set(format!("{prefix}{k}"), v);
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("base_lr", self.base_lr.to_string());
        put("warmup_epochs", self.warmup_epochs.to_string());
        put("weight_decay", self.weight_decay.to_string());
        put("seed", self.seed.to_string());
        put("deterministic", self.deterministic.to_string());
        put("eval_every", self.eval_every.to_string());
        put("flip", self.flip.to_string());
        m
    }

    pub fn from_kv(m: &KvMap, prefix: &str) -> Result<Self> {
        let key = |k: &str| format!("{prefix}{k}");
        let cfg = TrainConfig {
            epochs: m.required(&key("epochs"))?,
            batch_size: m.required(&key("batch_size"))?,
            base_lr: m.required(&key("base_lr"))?,
            warmup_epochs: m.required(&key("warmup_epochs"))?,
            weight_decay: m.required(&key("weight_decay"))?,
            seed: m.required(&key("seed"))?,
            deterministic: m.required(&key("deterministic"))?,
            eval_every: m.required(&key("eval_every"))?,
            flip: m.required(&key("flip"))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn schedule(&self, steps_per_epoch: usize) -> LrSchedule {
        LrSchedule {
            base_lr: self.base_lr,
            warmup_steps: self.warmup_epochs * steps_per_epoch,
            total_steps: self.epochs * steps_per_epoch,
        }
    }
}

/// Accuracy of a model on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub count: usize,
    pub fine_top1: f64,
    /// One entry per coarse head.
    pub coarse_top1: Vec<f64>,
}

fn coarse_targets<T: Scalar>(
    model: &TransHPModel<T>,
    hierarchy: &LabelHierarchy,
    images: &[&ImageRecord],
) -> Result<Vec<Vec<usize>>> {
    model
        .config()
        .prompting
        .iter()
        .map(|s| {
            images
                .iter()
                .map(|r| hierarchy.ancestor_of(r.fine_label, s.level))
                .collect()
        })
        .collect()
}

fn count_correct<T: Scalar>(tape: &Tape<T>, logits: crate::numerics::Var, targets: &[usize]) -> usize {
    let v = tape.value(logits);
    targets
        .iter()
        .enumerate()
        .filter(|&(b, &t)| argmax(v.row(b)) == t)
        .count()
}

fn eval_pass<T: Scalar>(
    model: &TransHPModel<T>,
    hierarchy: &LabelHierarchy,
    split: &[ImageRecord],
    batch_size: usize,
    absorption: bool,
) -> Result<(EvalResult, Vec<AbsorptionReport>)> {
    if split.is_empty() {
        return Err(Error::Contract("cannot evaluate on an empty split".into()));
    }
    let heads = if model.config().variant == crate::model::Variant::NoCoarseLabels {
        0
    } else {
        model.config().prompting.len()
    };
    let mut fine = 0;
    let mut coarse = vec![0; heads];
    let mut reports = Vec::new();
    for chunk in split.chunks(batch_size.max(1)) {
        let refs: Vec<&ImageRecord> = chunk.iter().collect();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let out = model.forward(&mut tape, &bound, &refs)?;
        let labels: Vec<usize> = chunk.iter().map(|r| r.fine_label).collect();
        fine += count_correct(&tape, out.fine_logits, &labels);
        let targets = coarse_targets(model, hierarchy, &refs)?;
        for ((n, &logits), t) in coarse.iter_mut().zip(&out.coarse_logits).zip(&targets) {
            *n += count_correct(&tape, logits, t);
        }
        if absorption {
            reports.extend(analysis::reports_from_forward(model, &tape, &out, &refs, hierarchy)?);
        }
    }
    let n = split.len() as f64;
    Ok((
        EvalResult {
            count: split.len(),
            fine_top1: fine as f64 / n,
            coarse_top1: coarse.into_iter().map(|c| c as f64 / n).collect(),
        },
        reports,
    ))
}

/// Fine and per-head coarse top-1 accuracy.
pub fn evaluate<T: Scalar>(
    model: &TransHPModel<T>,
    hierarchy: &LabelHierarchy,
    split: &[ImageRecord],
    batch_size: usize,
) -> Result<EvalResult> {
    Ok(eval_pass(model, hierarchy, split, batch_size, false)?.0)
}

/// [`evaluate`] plus the absorption reports of the same forward passes.
pub fn evaluate_with_absorption<T: Scalar>(
    model: &TransHPModel<T>,
    hierarchy: &LabelHierarchy,
    split: &[ImageRecord],
    batch_size: usize,
) -> Result<(EvalResult, Vec<AbsorptionReport>)> {
    eval_pass(model, hierarchy, split, batch_size, true)
}

fn flipped(r: &ImageRecord) -> ImageRecord {
    let s = r.size;
    let px = r.bytes();
    let mut out = px.to_vec();
    for row in 0..3 * s {
        for x in 0..s {
            out[row * s + x] = px[row * s + s - 1 - x];
        }
    }
    ImageRecord::new(r.image_id, r.fine_label, s, out).expect("same size")
}

/// Trains `model` end to end on `train`, evaluating on `val`.
///
/// Each step minimizes `fine + Σ λ_l·coarse_l` over one batch with AdamW
/// under a warmup-plus-cosine schedule. A non-finite loss aborts with
/// [`Error::Divergence`].
pub fn train<T: Scalar>(
    mut model: TransHPModel<T>,
    hierarchy: &LabelHierarchy,
    train: &[ImageRecord],
    val: &[ImageRecord],
    cfg: &TrainConfig,
) -> Result<(TransHPModel<T>, TrainRunLog)> {
    cfg.validate()?;
    model.config().validate_against(hierarchy)?;
    let mut config = model.config().to_kv("model.");
    config.merge(&cfg.to_kv("train."));
    config.set("precision", T::NAME);
    let mut log = TrainRunLog {
        config,
        seed: cfg.seed,
        dataset_fingerprint: fingerprint(train),
        epochs: Vec::with_capacity(cfg.epochs),
        wall_clock_secs: 0.0,
    };
    if cfg.epochs == 0 {
        return Ok((model, log));
    }
    if train.is_empty() {
        return Err(Error::Contract("cannot train on an empty split".into()));
    }
    let start = Instant::now();
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let schedule = cfg.schedule(steps_per_epoch);
    let lambdas = match model.config().variant {
        crate::model::Variant::NoCoarseLabels => Vec::new(),
        _ => model.config().lambdas(),
    };
    let mut opt = AdamW::new(model.params(), cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(7);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = SplitMetrics {
            loss_coarse: vec![0.0; lambdas.len()],
            coarse_top1: vec![0.0; lambdas.len()],
            ..Default::default()
        };
        let mut reports = Vec::new();
        let mut lr = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let owned: Vec<ImageRecord>;
            let refs: Vec<&ImageRecord> = if cfg.flip {
                owned = idx
                    .iter()
                    .map(|&i| if rng.random_bool(0.5) { flipped(&train[i]) } else { train[i].clone() })
                    .collect();
                owned.iter().collect()
            } else {
                idx.iter().map(|&i| &train[i]).collect()
            };
            let labels: Vec<usize> = refs.iter().map(|r| r.fine_label).collect();
            let targets = coarse_targets(&model, hierarchy, &refs)?;
            let targets = if lambdas.is_empty() { Vec::new() } else { targets };
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, true);
            let out = model.forward(&mut tape, &bound, &refs)?;
            let (loss, br) = total_loss(&mut tape, &out, &labels, &targets, &lambdas)?;
            if !br.total.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: bi,
                    loss: br.total,
                });
            }
            tape.backward(loss)?;
            let n = refs.len() as f64;
            sums.loss_total += br.total * n;
            sums.loss_fine += br.fine_loss * n;
            for (acc, c) in sums.loss_coarse.iter_mut().zip(&br.coarse_losses) {
                *acc += c * n;
            }
            sums.fine_top1 += count_correct(&tape, out.fine_logits, &labels) as f64;
            for ((acc, &logits), t) in sums.coarse_top1.iter_mut().zip(&out.coarse_logits).zip(&targets) {
                *acc += count_correct(&tape, logits, t) as f64;
            }
            reports.extend(analysis::reports_from_forward(&model, &tape, &out, &refs, hierarchy)?);
            let grads: Vec<_> = bound.vars().iter().map(|&v| tape.grad(v)).collect();
            lr = schedule.lr_at(step);
            opt.step(model.params_mut(), &grads, lr)?;
            step += 1;
        }
        let n = train.len() as f64;
        sums.loss_total /= n;
        sums.loss_fine /= n;
        sums.fine_top1 /= n;
        sums.loss_coarse.iter_mut().for_each(|v| *v /= n);
        sums.coarse_top1.iter_mut().for_each(|v| *v /= n);
        let mut absorption = analysis::summarize(&reports, epoch, "train");
        let val_metrics = if !val.is_empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            let (res, val_reports) = evaluate_with_absorption(&model, hierarchy, val, cfg.batch_size)?;
            absorption.extend(analysis::summarize(&val_reports, epoch, "val"));
            Some(EvalMetrics {
                fine_top1: res.fine_top1,
                coarse_top1: res.coarse_top1,
            })
        } else {
            None
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.4} train top1 {:.4} val top1 {}",
            cfg.epochs,
            sums.loss_total,
            sums.fine_top1,
            val_metrics
                .as_ref()
                .map_or("-".to_string(), |v| format!("{:.4}", v.fine_top1))
        );
        log.epochs.push(EpochRecord {
            epoch,
            lr,
            train: sums,
            val: val_metrics,
            absorption,
        });
    }
    log.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok((model, log))
}
