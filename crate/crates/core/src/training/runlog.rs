//! Run logs as line-delimited JSON.
//!
//! Line types, in file order:
//! - `{"type":"config", "seed":…, "dataset":…, "config":{key: value, …}}`
//! - per epoch `{"type":"epoch", "epoch":…, "lr":…, "train":{…}, "val":{…}|null}`
//!   followed by that epoch's `{"type":"absorption", "epoch", "split",
//!   "block", "statistic", "value"}` lines
//! - `{"type":"timing", "wall_clock_secs":…}`
//!
//! The checksum is the SHA-256 of every line except the timing line, so
//! identical runs produce identical checksums.

use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::AbsorptionRecord;
use crate::dataset::hex;
use crate::error::{Error, Result};
use crate::kv::KvMap;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitMetrics {
    pub loss_total: f64,
    pub loss_fine: f64,
    pub loss_coarse: Vec<f64>,
    pub fine_top1: f64,
    pub coarse_top1: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalMetrics {
    pub fine_top1: f64,
    pub coarse_top1: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    /// Running averages over the epoch's training batches.
    pub train: SplitMetrics,
    pub val: Option<EvalMetrics>,
    pub absorption: Vec<AbsorptionRecord>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainRunLog {
    pub config: KvMap,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub epochs: Vec<EpochRecord>,
    pub wall_clock_secs: f64,
}

impl TrainRunLog {
    pub fn final_val(&self) -> Option<&EvalMetrics> {
        self.epochs.last().and_then(|e| e.val.as_ref())
    }

    fn lines(&self) -> Vec<String> {
        let config: serde_json::Map<String, Value> = self
            .config
            .iter()
            .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
            .collect();
        let mut lines = vec![json!({
            "type": "config",
            "seed": self.seed,
            "dataset": self.dataset_fingerprint,
            "config": config,
        })
        .to_string()];
        for e in &self.epochs {
            let val = e.val.as_ref().map(|v| {
                json!({"fine_top1": v.fine_top1, "coarse_top1": v.coarse_top1})
            });
            lines.push(
                json!({
                    "type": "epoch",
                    "epoch": e.epoch,
                    "lr": e.lr,
                    "train": {
                        "loss_total": e.train.loss_total,
                        "loss_fine": e.train.loss_fine,
                        "loss_coarse": e.train.loss_coarse,
                        "fine_top1": e.train.fine_top1,
                        "coarse_top1": e.train.coarse_top1,
                    },
                    "val": val,
                })
                .to_string(),
            );
            for a in &e.absorption {
                lines.push(
                    json!({
                        "type": "absorption",
                        "epoch": a.epoch,
                        "split": a.split,
                        "block": a.block,
                        "statistic": a.statistic,
                        "value": a.value,
                    })
                    .to_string(),
                );
            }
        }
        lines
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = self.lines().join("\n");
        out.push('\n');
        out.push_str(&json!({"type": "timing", "wall_clock_secs": self.wall_clock_secs}).to_string());
        out.push('\n');
        out
    }

    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for line in self.lines() {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }
}

/// Checksum of a log file's text, skipping timing lines.
pub fn log_checksum(text: &str) -> String {
    let mut h = Sha256::new();
    for line in text.lines() {
        if line.starts_with("{\"type\":\"timing\"") {
            continue;
        }
        h.update(line.as_bytes());
        h.update(b"\n");
    }
    hex(&h.finalize())
}

/// Reads the absorption records of a log file.
pub fn read_absorption(text: &str) -> Result<Vec<AbsorptionRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let v: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if v["type"] != "absorption" {
            continue;
        }
        let bad = || Error::Parse {
            line: i + 1,
            msg: "malformed absorption record".into(),
        };
        out.push(AbsorptionRecord {
            epoch: v["epoch"].as_u64().ok_or_else(bad)? as usize,
            split: v["split"].as_str().ok_or_else(bad)?.to_string(),
            block: v["block"].as_u64().ok_or_else(bad)? as usize,
            statistic: v["statistic"].as_str().ok_or_else(bad)?.to_string(),
            value: v["value"].as_f64().ok_or_else(bad)?,
        });
    }
    Ok(out)
}
