use super::{ModelConfig, TransHPModel, Variant, LN_EPS};
use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var};
use crate::objective;

/// Parameters of one transformer block, bound to a tape.
#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    pub ln1: (Var, Var),
    pub qkv: (Var, Var),
    pub proj: (Var, Var),
    pub ln2: (Var, Var),
    pub fc1: (Var, Var),
    pub fc2: (Var, Var),
}

/// Pre-norm block over `batch` sequences of `seq` tokens stacked as
/// `[batch·seq × C]`: `x + Attn(LN(x))`, then `x + MLP(LN(x))`.
/// Returns the output and the attention node.
pub fn block_forward<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    p: &BlockVars,
    batch: usize,
    seq: usize,
    heads: usize,
) -> Result<(Var, Var)> {
    block_forward_masked(tape, x, p, batch, seq, heads, seq)
}

/// [`block_forward`] with keys at positions `>= visible` masked out of attention.
pub fn block_forward_masked<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    p: &BlockVars,
    batch: usize,
    seq: usize,
    heads: usize,
    visible: usize,
) -> Result<(Var, Var)> {
    let h = tape.layer_norm(x, p.ln1.0, p.ln1.1, LN_EPS)?;
    let qkv = tape.linear(h, p.qkv.0, Some(p.qkv.1))?;
    let attn = tape.attention_masked(qkv, batch, seq, heads, visible)?;
    let o = tape.linear(attn, p.proj.0, Some(p.proj.1))?;
    let x = tape.add(x, o)?;
    let h = tape.layer_norm(x, p.ln2.0, p.ln2.1, LN_EPS)?;
    let h = tape.linear(h, p.fc1.0, Some(p.fc1.1))?;
    let h = tape.gelu(h);
    let h = tape.linear(h, p.fc2.0, Some(p.fc2.1))?;
    Ok((tape.add(x, h)?, attn))
}

/// Runs a block on `[x_cls, X, P]` for each of `batch` images, where `x`
/// holds the `batch·t0` feature rows and `pool` the `M` prompt tokens shared
/// by every image. Returns the feature rows `[batch·t0 × C]`, the prompt
/// output states `[batch·M × C]` and the attention node (sequence length
/// `t0 + M`).
pub fn prompting_block_forward<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    pool: Var,
    p: &BlockVars,
    batch: usize,
    heads: usize,
) -> Result<(Var, Var, Var)> {
    prompting_block_inner(tape, x, pool, p, batch, heads, false)
}

pub(crate) fn prompting_block_inner<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    pool: Var,
    p: &BlockVars,
    batch: usize,
    heads: usize,
    mask_prompts: bool,
) -> Result<(Var, Var, Var)> {
    let rows = tape.value(x).rows();
    if batch == 0 || rows % batch != 0 {
        return Err(Error::Contract(format!("{rows} feature rows do not split into {batch} images")));
    }
    let t0 = rows / batch;
    let m = tape.value(pool).rows();
    let seq = t0 + m;
    let joined = tape.concat_rows(x, pool)?;
    let mut idx = Vec::with_capacity(batch * seq);
    for b in 0..batch {
        idx.extend(b * t0..(b + 1) * t0);
        idx.extend(rows..rows + m);
    }
    let input = tape.gather_rows(joined, &idx)?;
    let visible = if mask_prompts { t0 } else { seq };
    let (out, attn) = block_forward_masked(tape, input, p, batch, seq, heads, visible)?;
    let feat_idx: Vec<usize> = (0..batch).flat_map(|b| b * seq..b * seq + t0).collect();
    let prompt_idx: Vec<usize> = (0..batch).flat_map(|b| b * seq + t0..(b + 1) * seq).collect();
    let features = tape.gather_rows(out, &feat_idx)?;
    let prompts = tape.gather_rows(out, &prompt_idx)?;
    Ok((features, prompts, attn))
}

/// Flattens images into patch rows `[B·N × 3P²]`. Patches are row-major
/// over the grid; within a patch the layout is channel, then row, then
/// column. Pixel values are `byte / 255`.
pub fn patchify<T: Scalar>(images: &[&ImageRecord], cfg: &ModelConfig) -> Result<Tensor<T>> {
    let (h, p, g) = (cfg.image_size, cfg.patch_size, cfg.grid());
    let pd = cfg.patch_dim();
    let mut data = Vec::with_capacity(images.len() * cfg.patches() * pd);
    let lut: Vec<T> = (0..256).map(|b| T::of(b as f64 / 255.0)).collect();
    for img in images {
        if img.size != h {
            return Err(Error::Config(format!(
                "image {} is {}x{} but the model expects {h}x{h}",
                img.image_id, img.size, img.size
            )));
        }
        let px = img.bytes();
        for gy in 0..g {
            for gx in 0..g {
                for ch in 0..3 {
                    for dy in 0..p {
                        let start = (ch * h + gy * p + dy) * h + gx * p;
                        data.extend(px[start..start + p].iter().map(|&b| lut[b as usize]));
                    }
                }
            }
        }
    }
    Tensor::new([images.len() * cfg.patches(), pd], data)
}

/// Model parameters placed on a tape, in model order.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Nodes produced by one batched forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub batch: usize,
    /// `[B × F]`
    pub fine_logits: Var,
    /// `[B × M_j]` per prompting spec that carries a coarse head.
    pub coarse_logits: Vec<Var>,
    /// `[B·M_j × C]` per prompting spec that carries a pool.
    pub prompt_states: Vec<Var>,
    /// Attention node of every block.
    pub attention: Vec<Var>,
    /// Sequence length entering every block.
    pub seq_lens: Vec<usize>,
}

impl<T: Scalar> TransHPModel<T> {
    /// Places every parameter on `tape`, as gradient-tracked leaves when
    /// `trainable`.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .params()
            .iter()
            .map(|p| tape.leaf(p.value.clone(), trainable))
            .collect();
        Bound { vars }
    }

    fn var(&self, bound: &Bound, name: &str) -> Var {
        bound.vars[self.index_of(name).unwrap_or_else(|| panic!("missing parameter {name}"))]
    }

    pub fn block_vars(&self, bound: &Bound, i: usize) -> BlockVars {
        let v = |s: &str| self.var(bound, &format!("blocks.{i}.{s}"));
        BlockVars {
            ln1: (v("ln1.gain"), v("ln1.bias")),
            qkv: (v("attn.qkv.weight"), v("attn.qkv.bias")),
            proj: (v("attn.proj.weight"), v("attn.proj.bias")),
            ln2: (v("ln2.gain"), v("ln2.bias")),
            fc1: (v("mlp.fc1.weight"), v("mlp.fc1.bias")),
            fc2: (v("mlp.fc2.weight"), v("mlp.fc2.bias")),
        }
    }

    /// Class token plus position-embedded patch tokens: `[B·(1+N) × C]`.
    pub fn patch_embed(&self, tape: &mut Tape<T>, bound: &Bound, images: &[&ImageRecord]) -> Result<Var> {
        let cfg = self.config();
        let (b, n, t0) = (images.len(), cfg.patches(), cfg.feature_tokens());
        let patches = tape.constant(patchify(images, cfg)?);
        let pe = tape.linear(
            patches,
            self.var(bound, "patch_embed.weight"),
            Some(self.var(bound, "patch_embed.bias")),
        )?;
        let stacked = tape.concat_rows(self.var(bound, "cls_token"), pe)?;
        let idx: Vec<usize> = (0..b)
            .flat_map(|i| std::iter::once(0).chain(1 + i * n..1 + (i + 1) * n))
            .collect();
        let tokens = tape.gather_rows(stacked, &idx)?;
        let pos_idx: Vec<usize> = (0..b).flat_map(|_| 0..t0).collect();
        let pos = tape.gather_rows(self.var(bound, "pos_embed"), &pos_idx)?;
        tape.add(tokens, pos)
    }

    /// Batched forward pass over `images`.
    pub fn forward(&self, tape: &mut Tape<T>, bound: &Bound, images: &[&ImageRecord]) -> Result<ForwardOutput> {
        self.forward_inner(tape, bound, images, false)
    }

    pub(crate) fn forward_inner(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        images: &[&ImageRecord],
        mask_prompts: bool,
    ) -> Result<ForwardOutput> {
        let cfg = self.config();
        let batch = images.len();
        if batch == 0 {
            return Err(Error::Contract("forward on an empty batch".into()));
        }
        let t0 = cfg.feature_tokens();
        let mut x = self.patch_embed(tape, bound, images)?;
        let mut out = ForwardOutput {
            batch,
            fine_logits: x,
            coarse_logits: Vec::new(),
            prompt_states: Vec::new(),
            attention: Vec::with_capacity(cfg.depth),
            seq_lens: Vec::with_capacity(cfg.depth),
        };
        let cls_idx: Vec<usize> = (0..batch).map(|b| b * t0).collect();
        for i in 0..cfg.depth {
            let p = self.block_vars(bound, i);
            let spec = cfg.spec_at(i + 1);
            match (spec, cfg.variant) {
                (Some((j, s)), Variant::TransHP | Variant::NoCoarseLabels) => {
                    let pool = self.var(bound, &format!("prompts.{j}.pool"));
                    let (feat, states, attn) =
                        prompting_block_inner(tape, x, pool, &p, batch, cfg.heads, mask_prompts)?;
                    out.seq_lens.push(t0 + s.coarse_count);
                    out.attention.push(attn);
                    out.prompt_states.push(states);
                    if cfg.variant == Variant::TransHP {
                        let protos = self.var(bound, &format!("prompts.{j}.prototypes"));
                        out.coarse_logits
                            .push(objective::coarse_scores_batched(tape, states, protos, batch)?);
                    }
                    x = feat;
                }
                (Some((j, _)), Variant::NoPrompts) => {
                    let (y, attn) = block_forward(tape, x, &p, batch, t0, cfg.heads)?;
                    out.seq_lens.push(t0);
                    out.attention.push(attn);
                    let cls = tape.gather_rows(y, &cls_idx)?;
                    let logits = tape.linear(
                        cls,
                        self.var(bound, &format!("coarse_heads.{j}.weight")),
                        Some(self.var(bound, &format!("coarse_heads.{j}.bias"))),
                    )?;
                    out.coarse_logits.push(logits);
                    x = y;
                }
                (None, _) => {
                    let (y, attn) = block_forward(tape, x, &p, batch, t0, cfg.heads)?;
                    out.seq_lens.push(t0);
                    out.attention.push(attn);
                    x = y;
                }
            }
            debug_assert_eq!(tape.value(x).rows(), batch * t0);
        }
        let cls = tape.gather_rows(x, &cls_idx)?;
        let cls = tape.layer_norm(cls, self.var(bound, "norm.gain"), self.var(bound, "norm.bias"), LN_EPS)?;
        out.fine_logits = tape.linear(cls, self.var(bound, "head.weight"), Some(self.var(bound, "head.bias")))?;
        Ok(out)
    }
}
