//! Built-in architecture presets.
//!
//! Layer indices are 1-based block numbers. The dataset presets follow the
//! published balance-parameter table, whose columns are 0-based block
//! indices; column 11 there is the weight of the final fine loss, which is
//! always 1 here.

use super::{ModelConfig, PromptingSpec, Variant};

/// Desk-scale default: 32×32 images, 4×4 patches, 8 blocks of width 64 with
/// 4 heads, one prompting block at layer 5.
pub fn desk_model(fine_count: usize, coarse_count: usize) -> ModelConfig {
    ModelConfig {
        image_size: 32,
        patch_size: 4,
        embed_dim: 64,
        depth: 8,
        heads: 4,
        mlp_ratio: 4,
        fine_count,
        prompting: vec![PromptingSpec::new(5, 0, coarse_count, 1.0)],
        variant: Variant::TransHP,
    }
}

/// Smallest configuration that still exercises every code path.
pub fn tiny_model(fine_count: usize, coarse_count: usize) -> ModelConfig {
    ModelConfig {
        image_size: 16,
        patch_size: 4,
        embed_dim: 16,
        depth: 3,
        heads: 2,
        mlp_ratio: 4,
        fine_count,
        prompting: vec![PromptingSpec::new(2, 0, coarse_count, 1.0)],
        variant: Variant::TransHP,
    }
}

/// ViT-Small backbone at 224×224 with 16×16 patches.
fn vit_small(fine_count: usize, prompting: Vec<PromptingSpec>) -> ModelConfig {
    ModelConfig {
        image_size: 224,
        patch_size: 16,
        embed_dim: 384,
        depth: 12,
        heads: 6,
        mlp_ratio: 4,
        fine_count,
        prompting,
        variant: Variant::TransHP,
    }
}

/// CIFAR-100: 20 superclasses at layer 9, λ=1.
pub fn cifar100_model() -> ModelConfig {
    vit_small(100, vec![PromptingSpec::new(9, 0, 20, 1.0)])
}

/// iNaturalist 2018/2019: one coarse level at layer 7, λ=1.
pub fn inat_model(fine_count: usize, coarse_count: usize) -> ModelConfig {
    vit_small(fine_count, vec![PromptingSpec::new(7, 0, coarse_count, 1.0)])
}

/// DeepFashion: the coarser level at layer 7 (λ=0.5), the finer at layer 9 (λ=1).
pub fn deepfashion_model(fine_count: usize, coarse_m: usize, mid_m: usize) -> ModelConfig {
    vit_small(
        fine_count,
        vec![
            PromptingSpec::new(7, 0, coarse_m, 0.5),
            PromptingSpec::new(9, 1, mid_m, 1.0),
        ],
    )
}

/// ImageNet balance parameters for blocks 1..=11.
pub const IMAGENET_LAMBDAS: [f64; 11] = [0.1, 0.1, 0.1, 0.1, 0.1, 0.15, 0.15, 0.15, 0.15, 1.0, 1.0];

/// ImageNet: one prompting block per layer 1..=11, one hierarchy level each,
/// coarsest first. `level_counts` gives M for each of the 11 levels.
pub fn imagenet_model(level_counts: &[usize; 11]) -> ModelConfig {
    let specs = IMAGENET_LAMBDAS
        .iter()
        .zip(level_counts)
        .enumerate()
        .map(|(i, (&l, &m))| PromptingSpec::new(i + 1, i, m, l))
        .collect();
    vit_small(1000, specs)
}

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 6] = ["desk", "cifar100", "inat2018", "inat2019", "deepfashion", "imagenet"];

/// Looks up a preset by name. Dataset-specific coarse counts that are not
/// fixed by the dataset itself come from `fine_count` and `coarse_counts`.
pub fn by_name(name: &str, fine_count: usize, coarse_counts: &[usize]) -> Option<ModelConfig> {
    let m = |i: usize| coarse_counts.get(i).copied().unwrap_or(1);
    match name {
        "desk" => Some(desk_model(fine_count, m(0))),
        "tiny" => Some(tiny_model(fine_count, m(0))),
        "cifar100" => Some(cifar100_model()),
        "inat2018" | "inat2019" => Some(inat_model(fine_count, m(0))),
        "deepfashion" => Some(deepfashion_model(fine_count, m(0), m(1))),
        "imagenet" => {
            let counts: [usize; 11] = std::array::from_fn(m);
            Some(imagenet_model(&counts))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cifar_row() {
        let cfg = cifar100_model();
        assert_eq!(cfg.depth, 12);
        assert_eq!(cfg.prompting, vec![PromptingSpec::new(9, 0, 20, 1.0)]);
        cfg.validate_against(&crate::hierarchy::LabelHierarchy::cifar100()).unwrap();
    }

    #[test]
    fn deepfashion_row() {
        let cfg = deepfashion_model(100, 2, 17);
        let layers: Vec<_> = cfg.prompting.iter().map(|s| (s.layer, s.lambda)).collect();
        assert_eq!(layers, vec![(7, 0.5), (9, 1.0)]);
    }

    #[test]
    fn imagenet_row() {
        let cfg = imagenet_model(&[2, 4, 8, 16, 32, 64, 100, 200, 300, 400, 500]);
        cfg.validate().unwrap();
        assert_eq!(cfg.lambdas(), IMAGENET_LAMBDAS.to_vec());
        assert_eq!(cfg.prompting.last().unwrap().layer, 11);
    }

    #[test]
    fn names_resolve() {
        for n in NAMES {
            assert!(by_name(n, 10, &[2, 5]).is_some(), "{n}");
        }
        assert!(by_name("nope", 10, &[]).is_none());
    }
}
