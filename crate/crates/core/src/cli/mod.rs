//! Command-line interface.
//!
//! Training commands resolve their configuration in three layers, later
//! layers winning: a built-in preset, then an optional `--config` file, then
//! explicit flags. Config files use the key-value grammar of [`crate::kv`];
//! recognized keys are
//!
//! ```text
//! preset          model preset name (desk, tiny, cifar100, inat2018, ...)
//! train_preset    desk | large
//! variant         transhp | baseline | no-prompts | no-coarse-labels
//! precision       f32 | f64
//! data.train, data.val, data.hierarchy
//! model.*         see ModelConfig::to_kv
//! train.*         see TrainConfig::to_kv
//! ```
//!
//! Every command writes `manifest.txt` into its `--out` directory before
//! doing any work. Setting `TRANSHP_DETERMINISTIC=1` forces
//! `train.deterministic=true`.

mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub use manifest::{file_sha256, strip_manifest_keys, RunManifest};

use crate::analysis::{self, attention_map, export_attention_map};
use crate::dataset::{generate_synthetic, load_dataset, save_dataset, ImageRecord, SyntheticConfig};
use crate::error::{Error, Result};
use crate::hierarchy::{merge_coarse, LabelHierarchy, MergeSpec};
use crate::kv::KvMap;
use crate::model::{load_checkpoint, parse_specs, presets, save_checkpoint, format_specs, ModelConfig, TransHPModel};
use crate::numerics::Scalar;
use crate::training::{self, data_efficiency_protocol, position_sweep, Experiment, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "transhp", version, about = "Vision transformer with hierarchical prompting", args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic hierarchical dataset.
    GenData(GenDataArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Absorption reports and attention heatmaps for a checkpoint.
    Analyze(AnalyzeArgs),
    /// Train once per prompting-layer candidate.
    SweepPositions(SweepArgs),
    /// Baseline vs prompted accuracy on per-class subsets of the training split.
    DataEfficiency(EfficiencyArgs),
    /// Merge coarse classes of a hierarchy level.
    MergeHierarchy(MergeArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long = "M", default_value_t = 8)]
    pub coarse: usize,
    #[arg(long = "K", default_value_t = 4)]
    pub fine_per_coarse: usize,
    #[arg(long, default_value_t = 64)]
    pub per_fine: usize,
    /// Validation images per fine class; 0 skips the validation split.
    #[arg(long, default_value_t = 16)]
    pub val_per_fine: usize,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Default, Clone)]
pub struct TrainFlags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub train_preset: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub precision: Option<String>,
    #[arg(long = "train")]
    pub train_data: Option<PathBuf>,
    #[arg(long = "val")]
    pub val_data: Option<PathBuf>,
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
    #[arg(long)]
    pub prompt_layer: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub flip: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub hierarchy: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub hierarchy: PathBuf,
    /// Record indices for heatmaps: `a..b` (exclusive), or a comma list.
    #[arg(long, default_value = "0..4")]
    pub images: String,
    /// Blocks for heatmaps: 1-based numbers, `coarse` (every prompting
    /// block) and `final` (the last block), comma separated.
    #[arg(long, default_value = "coarse,final")]
    pub blocks: String,
    /// Skip absorption statistics (required for checkpoints without prompt pools).
    #[arg(long)]
    pub no_absorption: bool,
    /// Name of the analyzed split in the report.
    #[arg(long, default_value = "val")]
    pub split: String,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Comma-separated 1-based candidate layers.
    #[arg(long)]
    pub layers: String,
    /// Also train a no-prompt baseline row.
    #[arg(long)]
    pub with_baseline: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EfficiencyArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long, default_value = "1,0.5,0.25")]
    pub fractions: String,
    #[arg(long, default_value = "0,1,2")]
    pub seeds: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MergeArgs {
    /// Input hierarchy file; the built-in CIFAR-100 taxonomy when omitted.
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub level: usize,
    /// Built-in CIFAR-100 grouping by target class count (20, 10, 5, 2).
    #[arg(long)]
    pub target: Option<usize>,
    /// Explicit groups: `0,1;2,17;...`.
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_list<V: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<V>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid {what} entry {t:?}")))
        })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Fully resolved inputs of a training command.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: KvMap,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub precision: String,
    pub train_path: PathBuf,
    pub val_path: Option<PathBuf>,
    pub hierarchy_path: PathBuf,
}

impl TrainFlags {
    fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        let mut opt = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.set(k, v)
            }
        };
        opt("preset", self.preset.clone());
        opt("train_preset", self.train_preset.clone());
        opt("variant", self.variant.clone());
        opt("precision", self.precision.clone());
        opt("data.train", self.train_data.as_ref().map(|p| p.display().to_string()));
        opt("data.val", self.val_data.as_ref().map(|p| p.display().to_string()));
        opt("data.hierarchy", self.hierarchy.as_ref().map(|p| p.display().to_string()));
        opt("model.patch_size", self.patch_size.map(|v| v.to_string()));
        opt("model.embed_dim", self.embed_dim.map(|v| v.to_string()));
        opt("model.depth", self.depth.map(|v| v.to_string()));
        opt("model.heads", self.heads.map(|v| v.to_string()));
        opt("train.epochs", self.epochs.map(|v| v.to_string()));
        opt("train.batch_size", self.batch_size.map(|v| v.to_string()));
        opt("train.base_lr", self.lr.map(|v| v.to_string()));
        opt("train.warmup_epochs", self.warmup.map(|v| v.to_string()));
        opt("train.weight_decay", self.weight_decay.map(|v| v.to_string()));
        opt("train.seed", self.seed.map(|v| v.to_string()));
        opt("train.eval_every", self.eval_every.map(|v| v.to_string()));
        if self.deterministic {
            m.set("train.deterministic", "true");
        }
        if self.flip {
            m.set("train.flip", "true");
        }
        m
    }

    /// Merges preset, config file and flags into one configuration.
    pub fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                strip_manifest_keys(&KvMap::parse(&text)?)
            }
            None => KvMap::new(),
        };
        let flags = self.to_kv();
        let mut top = file.clone();
        top.merge(&flags);
        let path = |k: &str| top.get(k).filter(|v| !v.is_empty()).map(PathBuf::from);
        let train_path = path("data.train").ok_or_else(|| Error::Config("no training data (--train)".into()))?;
        let hierarchy_path =
            path("data.hierarchy").ok_or_else(|| Error::Config("no hierarchy file (--hierarchy)".into()))?;
        let val_path = path("data.val");
        let hierarchy = LabelHierarchy::load(&hierarchy_path)?;
        let counts: Vec<usize> = hierarchy.levels().iter().map(|l| l.coarse_count).collect();
        let preset = top.get("preset").unwrap_or("desk").to_string();
        let model_preset = presets::by_name(&preset, hierarchy.fine_count(), &counts)
            .ok_or_else(|| Error::Config(format!("unknown preset {preset:?}")))?;
        let train_preset = match top.get("train_preset").unwrap_or("desk") {
            "desk" => TrainConfig::desk(),
            "large" => TrainConfig::large(),
            other => return Err(Error::Config(format!("unknown train preset {other:?}"))),
        };
        let mut config = KvMap::new();
        config.set("preset", &preset);
        config.set("train_preset", top.get("train_preset").unwrap_or("desk"));
        config.set("variant", "transhp");
        config.set("precision", "f32");
        config.merge(&model_preset.to_kv("model."));
        config.merge(&train_preset.to_kv("train."));
        config.merge(&top);
        let mut specs = parse_specs(config.get("model.prompting").unwrap_or(""))?;
        if let Some(first) = specs.first_mut() {
            if let Some(l) = self.prompt_layer {
                first.layer = l;
            }
            if let Some(l) = self.lambda {
                first.lambda = l;
            }
        } else if self.prompt_layer.is_some() || self.lambda.is_some() {
            return Err(Error::Config("--prompt-layer/--lambda given but the preset has no prompting spec".into()));
        }
        let variant = config.get("variant").unwrap_or("transhp").to_string();
        match variant.as_str() {
            "baseline" => {
                specs.clear();
                config.set("model.variant", "transhp");
            }
            "transhp" | "no-prompts" | "no-coarse-labels" => config.set("model.variant", &variant),
            other => return Err(Error::Config(format!("unknown variant {other:?}"))),
        }
        if variant != "baseline" && specs.is_empty() {
            return Err(Error::Config(format!("variant {variant} needs a prompting spec")));
        }
        config.set("model.prompting", format_specs(&specs));
        if std::env::var("TRANSHP_DETERMINISTIC").is_ok_and(|v| v == "1") {
            config.set("train.deterministic", "true");
        }
        config.set("data.train", train_path.display());
        config.set("data.hierarchy", hierarchy_path.display());
        if let Some(v) = &val_path {
            config.set("data.val", v.display());
        }
        let model = ModelConfig::from_kv(&config, "model.")?;
        model.validate_against(&hierarchy)?;
        let train = TrainConfig::from_kv(&config, "train.")?;
        let precision = config.get("precision").unwrap_or("f32").to_string();
        if precision != "f32" && precision != "f64" {
            return Err(Error::Config(format!("precision must be f32 or f64, got {precision:?}")));
        }
        Ok(Resolved {
            config,
            model,
            train,
            precision,
            train_path,
            val_path,
            hierarchy_path,
        })
    }
}

struct Data {
    hierarchy: LabelHierarchy,
    train: Vec<ImageRecord>,
    val: Vec<ImageRecord>,
}

impl Resolved {
    fn manifest(&self, command: &str) -> RunManifest {
        let mut m = RunManifest::new(command, self.config.clone())
            .input("train", &self.train_path)
            .input("hierarchy", &self.hierarchy_path);
        if let Some(v) = &self.val_path {
            m = m.input("val", v);
        }
        m
    }

    fn load(&self) -> Result<Data> {
        let hierarchy = LabelHierarchy::load(&self.hierarchy_path)?;
        let train = load_dataset(&self.train_path, Some(&hierarchy))?.1;
        let val = match &self.val_path {
            Some(p) => load_dataset(p, Some(&hierarchy))?.1,
            None => Vec::new(),
        };
        Ok(Data { hierarchy, train, val })
    }
}

fn check_out_dir(out: &Path) -> Result<()> {
    create_dir(out)
}

fn cmd_gen_data(a: &GenDataArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        coarse_count: a.coarse,
        fine_per_coarse: a.fine_per_coarse,
        images_per_fine: a.per_fine,
        image_size: a.size,
        noise_std: a.noise,
        seed: a.seed,
    };
    cfg.validate()?;
    if a.val_per_fine > 0 {
        SyntheticConfig {
            images_per_fine: a.val_per_fine,
            ..cfg.clone()
        }
        .validate()?;
    }
    check_out_dir(&a.out)?;
    let mut config = KvMap::new();
    config.set("synth.M", a.coarse);
    config.set("synth.K", a.fine_per_coarse);
    config.set("synth.per_fine", a.per_fine);
    config.set("synth.val_per_fine", a.val_per_fine);
    config.set("synth.size", a.size);
    config.set("synth.noise", a.noise);
    config.set("synth.seed", a.seed);
    let train_path = a.out.join("train.thpd");
    let val_path = a.out.join("val.thpd");
    let h_path = a.out.join("hierarchy.txt");
    let mut manifest = RunManifest::new("gen-data", config)
        .output("train", &train_path)
        .output("hierarchy", &h_path);
    if a.val_per_fine > 0 {
        manifest = manifest.output("val", &val_path);
    }
    manifest.write(&a.out.join("manifest.txt"))?;
    let (train, h) = generate_synthetic(&cfg)?;
    save_dataset(&train_path, &train, &h)?;
    h.save(&h_path)?;
    if a.val_per_fine > 0 {
        let (val, _) = generate_synthetic(&SyntheticConfig {
            images_per_fine: a.val_per_fine,
            seed: val_seed(a.seed),
            ..cfg
        })?;
        save_dataset(&val_path, &val, &h)?;
        println!("wrote {} train and {} val records to {}", train.len(), val.len(), a.out.display());
    } else {
        println!("wrote {} train records to {}", train.len(), a.out.display());
    }
    Ok(())
}

/// Seed of the validation split generated alongside a training split.
pub fn val_seed(seed: u64) -> u64 {
    seed ^ 0x5a5a_5a5a_0000_0001
}

fn run_train<T: Scalar>(r: &Resolved, out: &Path) -> Result<()> {
    let data = r.load()?;
    let model = TransHPModel::<T>::assemble(r.model.clone(), &data.hierarchy, r.train.seed)?;
    let (model, log) = training::train(model, &data.hierarchy, &data.train, &data.val, &r.train)?;
    save_checkpoint(out.join("checkpoint.bin"), &model)?;
    log.write(out.join("log.jsonl"))?;
    let counts = model.count_params();
    println!(
        "{}",
        json!({
            "checksum": log.checksum(),
            "params": counts.total,
            "added_by_prompting": counts.added_by_prompting,
            "val_fine_top1": log.final_val().map(|v| v.fine_top1),
            "val_coarse_top1": log.final_val().map(|v| v.coarse_top1.clone()),
        })
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let r = a.flags.resolve()?;
    check_out_dir(&a.out)?;
    r.manifest("train")
        .output("checkpoint", a.out.join("checkpoint.bin"))
        .output("log", a.out.join("log.jsonl"))
        .write(&a.out.join("manifest.txt"))?;
    match r.precision.as_str() {
        "f64" => run_train::<f64>(&r, &a.out),
        _ => run_train::<f32>(&r, &a.out),
    }
}

fn checkpoint_for(path: &Path, data: &Path, hierarchy: &Path) -> Result<(TransHPModel<f32>, LabelHierarchy, Vec<ImageRecord>)> {
    let model = load_checkpoint(path)?;
    let h = LabelHierarchy::load(hierarchy)?;
    model.config().validate_against(&h)?;
    let (_, records) = load_dataset(data, Some(&h))?;
    if let Some(r) = records.first() {
        if r.size != model.config().image_size {
            return Err(Error::Config(format!(
                "checkpoint expects {}px images, dataset has {}px",
                model.config().image_size,
                r.size
            )));
        }
    }
    Ok((model, h, records))
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    check_out_dir(&a.out)?;
    let mut config = KvMap::new();
    config.set("eval.batch_size", a.batch_size);
    RunManifest::new("eval", config)
        .input("checkpoint", &a.checkpoint)
        .input("data", &a.data)
        .input("hierarchy", &a.hierarchy)
        .output("result", a.out.join("eval.json"))
        .write(&a.out.join("manifest.txt"))?;
    let (model, h, records) = checkpoint_for(&a.checkpoint, &a.data, &a.hierarchy)?;
    let res = training::evaluate(&model, &h, &records, a.batch_size)?;
    let text = json!({"count": res.count, "fine_top1": res.fine_top1, "coarse_top1": res.coarse_top1}).to_string();
    write_text(&a.out.join("eval.json"), &(text.clone() + "\n"))?;
    println!("{text}");
    Ok(())
}

fn parse_indices(s: &str, len: usize) -> Result<Vec<usize>> {
    let idx: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| Error::Config(format!("bad range {s:?}")))?;
        let b: usize = b.trim().parse().map_err(|_| Error::Config(format!("bad range {s:?}")))?;
        (a..b).collect()
    } else {
        parse_list(s, "image index")?
    };
    if let Some(&bad) = idx.iter().find(|&&i| i >= len) {
        return Err(Error::Index { index: bad, len });
    }
    Ok(idx)
}

fn parse_blocks(s: &str, cfg: &ModelConfig) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for t in s.split(',').map(str::trim) {
        match t {
            "coarse" => out.extend(cfg.prompting.iter().map(|p| p.layer)),
            "final" => out.push(cfg.depth),
            n => out.push(n.parse().map_err(|_| Error::Config(format!("invalid block {n:?}")))?),
        }
    }
    out.dedup();
    Ok(out)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    check_out_dir(&a.out)?;
    let mut config = KvMap::new();
    config.set("analyze.images", &a.images);
    config.set("analyze.blocks", &a.blocks);
    config.set("analyze.absorption", !a.no_absorption);
    config.set("analyze.split", &a.split);
    config.set("analyze.batch_size", a.batch_size);
    RunManifest::new("analyze", config)
        .input("checkpoint", &a.checkpoint)
        .input("data", &a.data)
        .input("hierarchy", &a.hierarchy)
        .output("report", a.out.join("report.jsonl"))
        .output("heatmaps", a.out.join("heatmaps"))
        .write(&a.out.join("manifest.txt"))?;
    let (model, h, records) = checkpoint_for(&a.checkpoint, &a.data, &a.hierarchy)?;
    let cfg = model.config();
    if !a.no_absorption && (cfg.prompting.is_empty() || !cfg.variant.has_pools()) {
        return Err(Error::Contract(
            "no prompting blocks: this checkpoint has no prompt pools to analyze (use --no-absorption)".into(),
        ));
    }
    let images = parse_indices(&a.images, records.len())?;
    let blocks = parse_blocks(&a.blocks, cfg)?;
    for &b in &blocks {
        if b == 0 || b > cfg.depth {
            return Err(Error::Index { index: b, len: cfg.depth });
        }
    }
    let mut report = String::new();
    if !a.no_absorption {
        let (_, reports) = training::evaluate_with_absorption(&model, &h, &records, a.batch_size)?;
        for s in analysis::summarize(&reports, 0, &a.split) {
            report.push_str(
                &json!({"type": "summary", "split": s.split, "block": s.block, "statistic": s.statistic, "value": s.value})
                    .to_string(),
            );
            report.push('\n');
        }
        for r in &reports {
            report.push_str(
                &json!({
                    "type": "image",
                    "image_id": r.image_id,
                    "block": r.layer,
                    "ground_truth": r.ground_truth,
                    "predicted": r.predicted,
                    "cls_weights": r.cls_weights,
                    "feature_weights": r.feature_weights,
                    "per_head_cls": r.per_head_cls,
                })
                .to_string(),
            );
            report.push('\n');
        }
    }
    let heat_dir = a.out.join("heatmaps");
    create_dir(&heat_dir)?;
    let mut written = 0;
    for &i in &images {
        for &b in &blocks {
            let map = attention_map(&model, &records[i], b)?;
            export_attention_map(&map, &heat_dir.join(format!("img{i}_block{b}")))?;
            written += 1;
        }
    }
    write_text(&a.out.join("report.jsonl"), &report)?;
    println!("wrote {written} heatmaps and {}", a.out.join("report.jsonl").display());
    Ok(())
}

fn experiment_run(
    r: &Resolved,
    f: impl FnOnce(&Experiment<'_>) -> Result<()>,
) -> Result<()> {
    let data = r.load()?;
    if data.val.is_empty() {
        return Err(Error::Config("experiments need a validation split (--val)".into()));
    }
    let exp = Experiment {
        hierarchy: &data.hierarchy,
        train: &data.train,
        val: &data.val,
        model: &r.model,
        train_cfg: &r.train,
    };
    f(&exp)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let r = a.flags.resolve()?;
    let layers: Vec<usize> = parse_list(&a.layers, "layer")?;
    for &l in &layers {
        if l == 0 || l > r.model.depth {
            return Err(Error::Config(format!("candidate layer {l} outside [1, {}]", r.model.depth)));
        }
    }
    check_out_dir(&a.out)?;
    let mut m = r.manifest("sweep-positions").output("table", a.out.join("sweep.csv"));
    m.config.set("sweep.layers", &a.layers);
    m.config.set("sweep.with_baseline", a.with_baseline);
    m.write(&a.out.join("manifest.txt"))?;
    let go = |exp: &Experiment<'_>| -> Result<()> {
        let rows = match r.precision.as_str() {
            "f64" => position_sweep::<f64>(exp, &layers, a.with_baseline)?,
            _ => position_sweep::<f32>(exp, &layers, a.with_baseline)?,
        };
        let mut csv = String::from("layer,fine_top1,coarse_top1\n");
        for row in rows {
            csv.push_str(&format!(
                "{},{},{}\n",
                row.layer.map_or("none".into(), |l| l.to_string()),
                row.fine_top1,
                row.coarse_top1.map_or(String::new(), |c| c.to_string())
            ));
        }
        write_text(&a.out.join("sweep.csv"), &csv)?;
        print!("{csv}");
        Ok(())
    };
    experiment_run(&r, go)
}

fn cmd_efficiency(a: &EfficiencyArgs) -> Result<()> {
    let r = a.flags.resolve()?;
    let fractions: Vec<f64> = parse_list(&a.fractions, "fraction")?;
    let seeds: Vec<u64> = parse_list(&a.seeds, "seed")?;
    check_out_dir(&a.out)?;
    let mut m = r
        .manifest("data-efficiency")
        .output("rows", a.out.join("efficiency.csv"))
        .output("summary", a.out.join("efficiency_summary.csv"));
    m.config.set("efficiency.fractions", &a.fractions);
    m.config.set("efficiency.seeds", &a.seeds);
    m.write(&a.out.join("manifest.txt"))?;
    let go = |exp: &Experiment<'_>| -> Result<()> {
        let (rows, summary) = match r.precision.as_str() {
            "f64" => data_efficiency_protocol::<f64>(exp, &fractions, &seeds)?,
            _ => data_efficiency_protocol::<f32>(exp, &fractions, &seeds)?,
        };
        let mut csv = String::from("fraction,seed,baseline_top1,transhp_top1\n");
        for row in rows {
            csv.push_str(&format!("{},{},{},{}\n", row.fraction, row.seed, row.baseline_top1, row.transhp_top1));
        }
        write_text(&a.out.join("efficiency.csv"), &csv)?;
        let mut sum = String::from("fraction,baseline_median,transhp_median,baseline_drop,transhp_drop\n");
        for s in summary {
            sum.push_str(&format!(
                "{},{},{},{},{}\n",
                s.fraction, s.baseline_median, s.transhp_median, s.baseline_drop, s.transhp_drop
            ));
        }
        write_text(&a.out.join("efficiency_summary.csv"), &sum)?;
        print!("{sum}");
        Ok(())
    };
    experiment_run(&r, go)
}

fn parse_groups(s: &str) -> Result<MergeSpec> {
    let groups = s
        .split(';')
        .map(|g| parse_list(g, "group member"))
        .collect::<Result<Vec<Vec<usize>>>>()?;
    Ok(MergeSpec::new(groups))
}

fn cmd_merge(a: &MergeArgs) -> Result<()> {
    let spec = match (&a.groups, a.target) {
        (Some(g), None) => parse_groups(g)?,
        (None, Some(t)) => MergeSpec::cifar100(t)
            .ok_or_else(|| Error::Config(format!("no built-in grouping into {t} classes (use 20, 10, 5 or 2)")))?,
        _ => return Err(Error::Config("give exactly one of --groups or --target".into())),
    };
    let h = match &a.hierarchy {
        Some(p) => LabelHierarchy::load(p)?,
        None => LabelHierarchy::cifar100(),
    };
    check_out_dir(&a.out)?;
    let mut config = KvMap::new();
    config.set("merge.level", a.level);
    config.set(
        "merge.groups",
        spec.groups
            .iter()
            .map(|g| g.iter().map(ToString::to_string).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join(";"),
    );
    let mut manifest = RunManifest::new("merge-hierarchy", config).output("hierarchy", a.out.join("hierarchy.txt"));
    if let Some(p) = &a.hierarchy {
        manifest = manifest.input("hierarchy", p);
    }
    manifest.write(&a.out.join("manifest.txt"))?;
    let merged = merge_coarse(&h, a.level, &spec)?;
    merged.save(a.out.join("hierarchy.txt"))?;
    println!(
        "level {} now has {} coarse classes",
        a.level,
        merged.coarse_count(a.level)?
    );
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::SweepPositions(a) => cmd_sweep(a),
        Command::DataEfficiency(a) => cmd_efficiency(a),
        Command::MergeHierarchy(a) => cmd_merge(a),
    }
}
