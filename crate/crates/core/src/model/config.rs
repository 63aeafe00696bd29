use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;
use crate::kv::KvMap;

/// Architecture arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Prompt pools with prototype-scored coarse supervision.
    TransHP,
    /// No prompt pools; the class token after each prompting layer feeds a
    /// linear coarse classifier.
    NoPrompts,
    /// Prompt pools concatenated as usual but without prototypes or coarse loss.
    NoCoarseLabels,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::TransHP => "transhp",
            Variant::NoPrompts => "no-prompts",
            Variant::NoCoarseLabels => "no-coarse-labels",
        }
    }

    pub fn has_pools(self) -> bool {
        !matches!(self, Variant::NoPrompts)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transhp" => Ok(Variant::TransHP),
            "no-prompts" => Ok(Variant::NoPrompts),
            "no-coarse-labels" => Ok(Variant::NoCoarseLabels),
            _ => Err(Error::Config(format!("unknown variant {s:?}"))),
        }
    }
}

/// One prompting block: the pool for hierarchy level `level` is attached at
/// block `layer` (1-based) and its coarse loss is weighted by `lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptingSpec {
    pub layer: usize,
    pub level: usize,
    pub coarse_count: usize,
    pub lambda: f64,
}

impl PromptingSpec {
    pub fn new(layer: usize, level: usize, coarse_count: usize, lambda: f64) -> Self {
        PromptingSpec {
            layer,
            level,
            coarse_count,
            lambda,
        }
    }
}

impl fmt::Display for PromptingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.layer, self.level, self.coarse_count, self.lambda)
    }
}

impl FromStr for PromptingSpec {
    type Err = Error;

    /// `layer:level:M:lambda`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::Config(format!("prompting spec {s:?} is not layer:level:M:lambda"));
        if parts.len() != 4 {
            return Err(bad());
        }
        Ok(PromptingSpec {
            layer: parts[0].parse().map_err(|_| bad())?,
            level: parts[1].parse().map_err(|_| bad())?,
            coarse_count: parts[2].parse().map_err(|_| bad())?,
            lambda: parts[3].parse().map_err(|_| bad())?,
        })
    }
}

/// Comma-separated list of [`PromptingSpec`]s; empty means none.
pub fn parse_specs(s: &str) -> Result<Vec<PromptingSpec>> {
    if s.trim().is_empty() || s.trim() == "none" {
        return Ok(Vec::new());
    }
    s.split(',').map(str::parse).collect()
}

pub fn format_specs(specs: &[PromptingSpec]) -> String {
    if specs.is_empty() {
        return "none".into();
    }
    specs
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub fine_count: usize,
    pub prompting: Vec<PromptingSpec>,
    pub variant: Variant,
}

pub const LN_EPS: f64 = 1e-6;

impl ModelConfig {
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    /// Patch tokens per image.
    pub fn patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Feature tokens per image: class token plus patches.
    pub fn feature_tokens(&self) -> usize {
        1 + self.patches()
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn patch_dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    pub fn spec_at(&self, layer: usize) -> Option<(usize, &PromptingSpec)> {
        self.prompting.iter().enumerate().find(|(_, s)| s.layer == layer)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.prompting.iter().map(|s| s.lambda).collect()
    }

    /// Checks internal consistency. Placement-principle violations (a finer
    /// level below a coarser one) only log a warning.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return bad(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.heads == 0 || self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
            return bad(format!(
                "embed dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            ));
        }
        if self.depth == 0 || self.mlp_ratio == 0 || self.fine_count == 0 {
            return bad("depth, mlp_ratio and fine_count must be >= 1".into());
        }
        let mut prev = 0;
        for s in &self.prompting {
            if s.layer == 0 || s.layer > self.depth {
                return bad(format!("prompting layer {} outside [1, {}]", s.layer, self.depth));
            }
            if s.layer <= prev {
                return bad(format!(
                    "prompting layers must be strictly increasing, got {} after {prev}",
                    s.layer
                ));
            }
            prev = s.layer;
            if s.coarse_count == 0 {
                return bad(format!("prompting layer {} has M=0", s.layer));
            }
            if !(s.lambda >= 0.0 && s.lambda.is_finite()) {
                return bad(format!("lambda {} at layer {} must be finite and >= 0", s.lambda, s.layer));
            }
        }
        for w in self.prompting.windows(2) {
            if w[1].coarse_count < w[0].coarse_count {
                log::warn!(
                    "placement: level with M={} at layer {} sits above level with M={} at layer {}",
                    w[1].coarse_count,
                    w[1].layer,
                    w[0].coarse_count,
                    w[0].layer
                );
            }
        }
        Ok(())
    }

    pub fn validate_against(&self, h: &LabelHierarchy) -> Result<()> {
        self.validate()?;
        if h.fine_count() != self.fine_count {
            return Err(Error::Config(format!(
                "model has {} fine classes, hierarchy has {}",
                self.fine_count,
                h.fine_count()
            )));
        }
        for s in &self.prompting {
            let m = h.coarse_count(s.level).map_err(|_| {
                Error::Config(format!(
                    "prompting layer {} refers to level {} but the hierarchy has {}",
                    s.layer,
                    s.level,
                    h.levels().len()
                ))
            })?;
            if m != s.coarse_count {
                return Err(Error::Config(format!(
                    "prompting layer {} declares M={} but level {} has M={m}",
                    s.layer, s.coarse_count, s.level
                )));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self, prefix: &str) -> KvMap {
        let mut m = KvMap::new();
        let mut put = |k: &str, v: String| m.set(format!("{prefix}{k}"), v);
        put("image_size", self.image_size.to_string());
        put("patch_size", self.patch_size.to_string());
        put("embed_dim", self.embed_dim.to_string());
        put("depth", self.depth.to_string());
        put("heads", self.heads.to_string());
        put("mlp_ratio", self.mlp_ratio.to_string());
        put("fine_count", self.fine_count.to_string());
        put("variant", self.variant.to_string());
        put("prompting", format_specs(&self.prompting));
        m
    }

    pub fn from_kv(m: &KvMap, prefix: &str) -> Result<Self> {
        let key = |k: &str| format!("{prefix}{k}");
        let cfg = ModelConfig {
            image_size: m.required(&key("image_size"))?,
            patch_size: m.required(&key("patch_size"))?,
            embed_dim: m.required(&key("embed_dim"))?,
            depth: m.required(&key("depth"))?,
            heads: m.required(&key("heads"))?,
            mlp_ratio: m.required(&key("mlp_ratio"))?,
            fine_count: m.required(&key("fine_count"))?,
            variant: m.required(&key("variant"))?,
            prompting: parse_specs(m.get(&key("prompting")).unwrap_or(""))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
