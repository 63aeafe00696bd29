//! The vision transformer with hierarchical prompt pools.
//!
//! Parameters live in a flat, ordered list of named tensors. Names and
//! shapes (`C` embed dim, `F` fine classes, `M_j` coarse classes of the
//! `j`-th prompting spec, `N` patches, `P` patch size):
//!
//! | name | shape |
//! |------|-------|
//! | `patch_embed.weight` / `.bias` | `3P² × C` / `C` |
//! | `cls_token` | `1 × C` |
//! | `pos_embed` | `(1+N) × C` |
//! | `blocks.{i}.ln1.gain` / `.bias` | `C` |
//! | `blocks.{i}.attn.qkv.weight` / `.bias` | `C × 3C` / `3C` |
//! | `blocks.{i}.attn.proj.weight` / `.bias` | `C × C` / `C` |
//! | `blocks.{i}.ln2.gain` / `.bias` | `C` |
//! | `blocks.{i}.mlp.fc1.weight` / `.bias` | `C × rC` / `rC` |
//! | `blocks.{i}.mlp.fc2.weight` / `.bias` | `rC × C` / `C` |
//! | `norm.gain` / `.bias` | `C` |
//! | `head.weight` / `.bias` | `C × F` / `F` |
//! | `prompts.{j}.pool` | `M_j × C` |
//! | `prompts.{j}.prototypes` | `M_j × C` |
//! | `coarse_heads.{j}.weight` / `.bias` | `C × M_j` / `M_j` |
//!
//! Block indices `i` are 0-based here while prompting layers are 1-based:
//! a spec at layer `l` replaces `blocks.{l-1}`. Pools exist for the
//! `transhp` and `no-coarse-labels` variants, prototypes only for
//! `transhp`, coarse heads only for `no-prompts`.

mod checkpoint;
mod config;
mod forward;
pub mod presets;

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{format_specs, parse_specs, ModelConfig, PromptingSpec, Variant, LN_EPS};
pub use forward::{
    block_forward, block_forward_masked, patchify, prompting_block_forward, BlockVars, Bound, ForwardOutput,
};

use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;
use crate::numerics::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    TruncNormal,
    FanIn(usize),
    Zeros,
    Ones,
}

const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub added_by_prompting: usize,
}

/// Which RNG stream initializes a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stream {
    Backbone,
    Pool(usize),
    CoarseHead(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Backbone => 0,
            Stream::Pool(j) => 1 + j as u64,
            Stream::CoarseHead(j) => 1_000_001 + j as u64,
        }
    }
}

struct Slot {
    name: String,
    shape: Vec<usize>,
    init: Init,
    stream: Stream,
}

fn layout(cfg: &ModelConfig) -> Vec<Slot> {
    let c = cfg.embed_dim;
    let hidden = c * cfg.mlp_ratio;
    let mut out = Vec::new();
    let mut put = |name: String, shape: Vec<usize>, init: Init, stream: Stream| {
        out.push(Slot {
            name,
            shape,
            init,
            stream,
        })
    };
    let bb = Stream::Backbone;
    let pd = cfg.patch_dim();
    put("patch_embed.weight".into(), vec![pd, c], Init::FanIn(pd), bb);
    put("patch_embed.bias".into(), vec![c], Init::Zeros, bb);
    put("cls_token".into(), vec![1, c], Init::TruncNormal, bb);
    put("pos_embed".into(), vec![cfg.feature_tokens(), c], Init::TruncNormal, bb);
    for i in 0..cfg.depth {
        let p = |s: &str| format!("blocks.{i}.{s}");
        put(p("ln1.gain"), vec![c], Init::Ones, bb);
        put(p("ln1.bias"), vec![c], Init::Zeros, bb);
        put(p("attn.qkv.weight"), vec![c, 3 * c], Init::FanIn(c), bb);
        put(p("attn.qkv.bias"), vec![3 * c], Init::Zeros, bb);
        put(p("attn.proj.weight"), vec![c, c], Init::FanIn(c), bb);
        put(p("attn.proj.bias"), vec![c], Init::Zeros, bb);
        put(p("ln2.gain"), vec![c], Init::Ones, bb);
        put(p("ln2.bias"), vec![c], Init::Zeros, bb);
        put(p("mlp.fc1.weight"), vec![c, hidden], Init::FanIn(c), bb);
        put(p("mlp.fc1.bias"), vec![hidden], Init::Zeros, bb);
        put(p("mlp.fc2.weight"), vec![hidden, c], Init::FanIn(hidden), bb);
        put(p("mlp.fc2.bias"), vec![c], Init::Zeros, bb);
    }
    put("norm.gain".into(), vec![c], Init::Ones, bb);
    put("norm.bias".into(), vec![c], Init::Zeros, bb);
    put("head.weight".into(), vec![c, cfg.fine_count], Init::FanIn(c), bb);
    put("head.bias".into(), vec![cfg.fine_count], Init::Zeros, bb);
    for (j, s) in cfg.prompting.iter().enumerate() {
        let m = s.coarse_count;
        match cfg.variant {
            Variant::TransHP => {
                put(format!("prompts.{j}.pool"), vec![m, c], Init::TruncNormal, Stream::Pool(j));
                put(format!("prompts.{j}.prototypes"), vec![m, c], Init::TruncNormal, Stream::Pool(j));
            }
            Variant::NoCoarseLabels => {
                put(format!("prompts.{j}.pool"), vec![m, c], Init::TruncNormal, Stream::Pool(j));
            }
            Variant::NoPrompts => {
                put(format!("coarse_heads.{j}.weight"), vec![c, m], Init::FanIn(c), Stream::CoarseHead(j));
                put(format!("coarse_heads.{j}.bias"), vec![m], Init::Zeros, Stream::CoarseHead(j));
            }
        }
    }
    out
}

fn draw(init: Init, numel: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match init {
        Init::Zeros => vec![0.0; numel],
        Init::Ones => vec![1.0; numel],
        Init::TruncNormal => {
            let n = Normal::new(0.0, INIT_STD).expect("valid std");
            (0..numel)
                .map(|_| loop {
                    let v: f64 = n.sample(rng);
                    if v.abs() <= 2.0 * INIT_STD {
                        break v;
                    }
                })
                .collect()
        }
        Init::FanIn(fan) => {
            let bound = 1.0 / (fan as f64).sqrt();
            let u = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
            (0..numel).map(|_| u.sample(rng)).collect()
        }
    }
}

fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Vec<Param<T>> {
    let mut rngs: HashMap<u64, ChaCha8Rng> = HashMap::new();
    layout(cfg)
        .into_iter()
        .map(|slot| {
            let rng = rngs
                .entry(slot.stream.id())
                .or_insert_with(|| stream_rng(seed, slot.stream));
            let numel = slot.shape.iter().product();
            let data = draw(slot.init, numel, rng);
            Param {
                name: slot.name,
                value: Tensor::from_f64(slot.shape, &data).expect("layout shapes are consistent"),
            }
        })
        .collect()
}

/// A model: configuration, initialization seed and named parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TransHPModel<T> {
    config: ModelConfig,
    seed: u64,
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> TransHPModel<T> {
    /// Builds and initializes a model. Backbone parameters come from one RNG
    /// stream of `seed`, each prompting spec from its own, so a model with
    /// and without prompting specs shares identical backbone weights.
    pub fn assemble(config: ModelConfig, hierarchy: &LabelHierarchy, seed: u64) -> Result<Self> {
        config.validate_against(hierarchy)?;
        let params = init_params(&config, seed);
        Ok(Self::from_parts(config, seed, params))
    }

    fn from_parts(config: ModelConfig, seed: u64, params: Vec<Param<T>>) -> Self {
        let index = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        TransHPModel {
            config,
            seed,
            params,
            index,
        }
    }

    /// Builds a model from explicit parameters, checking names and shapes
    /// against the configuration's layout.
    pub fn with_params(config: ModelConfig, seed: u64, params: Vec<Param<T>>) -> Result<Self> {
        config.validate()?;
        let slots = layout(&config);
        if slots.len() != params.len() {
            return Err(Error::Format(format!(
                "expected {} parameter tensors, got {}",
                slots.len(),
                params.len()
            )));
        }
        for (slot, p) in slots.iter().zip(&params) {
            if slot.name != p.name || slot.shape != p.value.shape() {
                return Err(Error::Format(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    p.name,
                    p.value.shape(),
                    slot.name,
                    slot.shape
                )));
            }
        }
        Ok(Self::from_parts(config, seed, params))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index_of(name).map(|i| &self.params[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index_of(name).map(move |i| &mut self.params[i].value)
    }

    pub fn cast<U: Scalar>(&self) -> TransHPModel<U> {
        let params = self
            .params
            .iter()
            .map(|p| Param {
                name: p.name.clone(),
                value: p.value.cast(),
            })
            .collect();
        TransHPModel::from_parts(self.config.clone(), self.seed, params)
    }

    /// Parameter totals. Everything outside the plain backbone counts as
    /// added by prompting.
    pub fn count_params(&self) -> ParamCount {
        let mut count = ParamCount {
            total: 0,
            added_by_prompting: 0,
        };
        for p in &self.params {
            let n = p.value.numel();
            count.total += n;
            if p.name.starts_with("prompts.") || p.name.starts_with("coarse_heads.") {
                count.added_by_prompting += n;
            }
        }
        count
    }

    /// Drops every prompting spec and the parameters that belong to them,
    /// leaving the plain backbone.
    pub fn strip_prompting(&self) -> Self {
        let mut config = self.config.clone();
        config.prompting.clear();
        config.variant = Variant::TransHP;
        let params = self
            .params
            .iter()
            .filter(|p| !(p.name.starts_with("prompts.") || p.name.starts_with("coarse_heads.")))
            .cloned()
            .collect();
        Self::from_parts(config, self.seed, params)
    }

    /// Converts a prompted model into one of the ablation arms. Shared
    /// parameters are copied; new ones (coarse heads) are drawn exactly as
    /// [`TransHPModel::assemble`] would draw them.
    pub fn make_variant(&self, kind: Variant) -> Result<Self> {
        if self.config.prompting.is_empty() {
            return Err(Error::Contract("cannot derive a variant of a model without prompting blocks".into()));
        }
        let mut config = self.config.clone();
        config.variant = kind;
        let fresh: Vec<Param<T>> = init_params(&config, self.seed);
        let params = fresh
            .into_iter()
            .map(|p| match self.get(&p.name) {
                Some(v) if v.shape() == p.value.shape() => Param {
                    name: p.name,
                    value: v.clone(),
                },
                _ => p,
            })
            .collect();
        Ok(Self::from_parts(config, self.seed, params))
    }
}
