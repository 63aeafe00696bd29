//! Class-token attention maps.
//!
//! Exports per map: `<stem>.pgm` (binary P5 grayscale, min-max normalized,
//! one pixel per patch), `<stem>.csv` (the raw head-averaged attention
//! grid, one grid row per line) and, for prompting blocks,
//! `<stem>.prompts.csv` (one line with the class token's weight on each
//! prompt).

use std::path::{Path, PathBuf};

use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::model::TransHPModel;
use crate::numerics::{Scalar, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    /// 1-based block index.
    pub layer: usize,
    /// Grid side, `H / P`.
    pub grid: usize,
    /// Head-averaged class-token attention on each patch key, row-major.
    pub values: Vec<f64>,
    /// Head-averaged class-token attention on each prompt key.
    pub prompt_weights: Vec<f64>,
}

impl AttentionMap {
    /// Min-max normalization to `[0, 1]`; a constant map becomes all 0.5.
    pub fn normalized(&self) -> Vec<f64> {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            return vec![0.5; self.values.len()];
        }
        self.values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    }
}

/// Class-token attention of block `block_index` (1-based) for one image.
pub fn attention_map<T: Scalar>(model: &TransHPModel<T>, image: &ImageRecord, block_index: usize) -> Result<AttentionMap> {
    let cfg = model.config();
    if block_index == 0 || block_index > cfg.depth {
        return Err(Error::Index {
            index: block_index,
            len: cfg.depth,
        });
    }
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false);
    let out = model.forward(&mut tape, &bound, &[image])?;
    let attn = tape
        .attention_probs(out.attention[block_index - 1])
        .ok_or_else(|| Error::Contract("block output carries no attention".into()))?;
    let (heads, t) = (attn.heads, attn.seq);
    let n_feature = cfg.feature_tokens();
    let head_mean = |key: usize| {
        let mut acc = 0.0;
        for h in 0..heads {
            acc += attn.probs[h * t * t + key].as_f64();
        }
        acc / heads as f64
    };
    Ok(AttentionMap {
        layer: block_index,
        grid: cfg.grid(),
        values: (1..n_feature).map(head_mean).collect(),
        prompt_weights: (n_feature..t).map(head_mean).collect(),
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_line(values: &[f64]) -> String {
    let mut s = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

/// Writes the map's files next to `stem` and returns their paths.
pub fn export_attention_map(map: &AttentionMap, stem: &Path) -> Result<Vec<PathBuf>> {
    let with = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    let g = map.grid;
    let mut pgm = format!("P5\n{g} {g}\n255\n").into_bytes();
    pgm.extend(map.normalized().iter().map(|v| (v * 255.0).round() as u8));
    let pgm_path = with(".pgm");
    write(&pgm_path, &pgm)?;
    let csv: String = map.values.chunks(g).map(csv_line).collect();
    let csv_path = with(".csv");
    write(&csv_path, csv.as_bytes())?;
    let mut paths = vec![pgm_path, csv_path];
    if !map.prompt_weights.is_empty() {
        let p = with(".prompts.csv");
        write(&p, csv_line(&map.prompt_weights).as_bytes())?;
        paths.push(p);
    }
    Ok(paths)
}

pub fn read_csv_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: i + 1,
                        msg: e.to_string(),
                    })
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::LabelHierarchy;
    use crate::model::presets;

    #[test]
    fn constant_map_normalizes_to_half() {
        let m = AttentionMap {
            layer: 1,
            grid: 2,
            values: vec![0.25; 4],
            prompt_weights: vec![],
        };
        assert_eq!(m.normalized(), vec![0.5; 4]);
    }

    #[test]
    fn export_round_trip() {
        let h = LabelHierarchy::uniform(8, 4).unwrap();
        let model = TransHPModel::<f64>::assemble(presets::desk_model(32, 8), &h, 3).unwrap();
        let img = ImageRecord::new(0, 0, 32, (0..3072).map(|i| (i % 251) as u8).collect()).unwrap();
        let map = attention_map(&model, &img, 5).unwrap();
        assert_eq!(map.grid, 8);
        assert_eq!(map.values.len(), 64);
        assert_eq!(map.prompt_weights.len(), 8);
        let dir = tempfile::tempdir().unwrap();
        let files = export_attention_map(&map, &dir.path().join("m")).unwrap();
        assert_eq!(files.len(), 3);
        let back = read_csv_matrix(&files[1]).unwrap();
        assert_eq!(back.len(), 8);
        for (r, row) in back.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((v - map.values[r * 8 + c]).abs() <= 1e-6);
            }
        }
        let pgm = std::fs::read(&files[0]).unwrap();
        assert!(pgm.starts_with(b"P5\n8 8\n255\n"));
        assert_eq!(pgm.len(), 11 + 64);
        assert!(matches!(attention_map(&model, &img, 9), Err(Error::Index { .. })));
        assert_eq!(attention_map(&model, &img, 4).unwrap().prompt_weights.len(), 0);
    }
}
