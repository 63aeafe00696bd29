//! Coarse scoring and the composite training objective.
//!
//! Each prompt output state is compared only with its own prototype,
//! `S[i] = p̂_i · w_i`, and the coarse loss is ordinary softmax
//! cross-entropy over those scores. The published form of this loss omits
//! the exponential in the numerator; that expression is not a normalized
//! likelihood, so the standard form (exp in numerator and denominator) is
//! used. Scores carry no temperature.
//!
//! The total loss is `fine + Σ_l λ_l · coarse_l`.

use crate::error::{Error, Result};
use crate::model::ForwardOutput;
use crate::numerics::{self, Scalar, Tape, Tensor, Var};

/// `S[i] = prompt_states[i] · prototypes[i]` for `[M × C]` inputs.
pub fn coarse_scores<T: Scalar>(prompt_states: &Tensor<T>, prototypes: &Tensor<T>) -> Result<Tensor<T>> {
    if prompt_states.shape() != prototypes.shape() || prompt_states.shape().len() != 2 {
        return Err(Error::dims("coarse_scores", prompt_states.shape(), prototypes.shape()));
    }
    let c = prompt_states.cols();
    let scores: Vec<T> = prompt_states
        .data()
        .chunks(c)
        .zip(prototypes.data().chunks(c))
        .map(|(p, w)| {
            let mut s = T::zero();
            for (&a, &b) in p.iter().zip(w) {
                s += a * b;
            }
            s
        })
        .collect();
    Tensor::new([scores.len()], scores)
}

/// Tape version over a batch: `states` is `[B·M × C]`, `prototypes` is
/// `[M × C]`, the result `[B × M]`.
pub fn coarse_scores_batched<T: Scalar>(tape: &mut Tape<T>, states: Var, prototypes: Var, batch: usize) -> Result<Var> {
    let m = tape.value(prototypes).rows();
    if tape.value(states).rows() != batch * m || tape.value(states).cols() != tape.value(prototypes).cols() {
        return Err(Error::dims("coarse_scores", tape.shape(states), tape.shape(prototypes)));
    }
    let idx: Vec<usize> = (0..batch).flat_map(|_| 0..m).collect();
    let tiled = tape.gather_rows(prototypes, &idx)?;
    let s = tape.row_dot(states, tiled)?;
    tape.reshape(s, &[batch, m])
}

/// Softmax cross-entropy of `scores` against coarse label `y`.
pub fn coarse_loss<T: Scalar>(scores: &Tensor<T>, y: usize) -> Result<T> {
    numerics::cross_entropy(scores, y)
}

/// Loss terms of one batch, as plain numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub fine_loss: f64,
    pub coarse_losses: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub total: f64,
}

/// Builds `fine + Σ λ_l · coarse_l` on the tape. `coarse_labels[l][b]` is
/// the coarse target of image `b` for the `l`-th coarse head; there must be
/// one label vector and one λ per coarse head in `out`.
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    out: &ForwardOutput,
    fine_labels: &[usize],
    coarse_labels: &[Vec<usize>],
    lambdas: &[f64],
) -> Result<(Var, LossBreakdown)> {
    let heads = out.coarse_logits.len();
    if coarse_labels.len() != heads || lambdas.len() != heads {
        return Err(Error::Contract(format!(
            "{heads} coarse heads but {} label sets and {} lambdas",
            coarse_labels.len(),
            lambdas.len()
        )));
    }
    let fine = tape.cross_entropy(out.fine_logits, fine_labels)?;
    let mut total = fine;
    let mut coarse_losses = Vec::with_capacity(heads);
    for ((&logits, labels), &lambda) in out.coarse_logits.iter().zip(coarse_labels).zip(lambdas) {
        let c = tape.cross_entropy(logits, labels)?;
        coarse_losses.push(tape.value(c).item()?.as_f64());
        let weighted = tape.scale(c, T::of(lambda));
        total = tape.add(total, weighted)?;
    }
    let breakdown = LossBreakdown {
        fine_loss: tape.value(fine).item()?.as_f64(),
        coarse_losses,
        lambdas: lambdas.to_vec(),
        total: tape.value(total).item()?.as_f64(),
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 2], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_rows_score_one() {
        let eye = Tensor::from_fn([4, 4], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 });
        assert_eq!(coarse_scores(&eye, &eye).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn single_prompt_is_dot() {
        let a = Tensor::<f64>::from_f64([1, 3], &[1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::<f64>::from_f64([1, 3], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(coarse_scores(&a, &b).unwrap().data(), &[32.0]);
    }

    #[test]
    fn diagonal_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = random([5, 7], &mut rng);
            let w = random([5, 7], &mut rng);
            let full = numerics::matmul(&p, &w.transpose().unwrap()).unwrap();
            let diag: Vec<f64> = (0..5).map(|i| full.data()[i * 5 + i]).collect();
            assert_eq!(coarse_scores(&p, &w).unwrap().data(), diag.as_slice());
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::<f64>::zeros([2, 3]);
        let b = Tensor::<f64>::zeros([3, 3]);
        assert!(matches!(coarse_scores(&a, &b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn loss_values() {
        assert_eq!(coarse_loss(&Tensor::<f64>::from_f64([1], &[3.7]).unwrap(), 0).unwrap(), 0.0);
        let uniform = Tensor::<f64>::full([20], 0.3);
        assert!((coarse_loss(&uniform, 7).unwrap() - 20f64.ln()).abs() < 1e-14);
        assert!(matches!(coarse_loss(&uniform, 20), Err(Error::Index { .. })));
        let s = Tensor::<f64>::from_f64([3], &[0.5, -1.0, 2.0]).unwrap();
        let direct = -(0.5f64.exp() / (0.5f64.exp() + (-1f64).exp() + 2f64.exp())).ln();
        assert!((coarse_loss(&s, 0).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn batched_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let states = random([6, 4], &mut rng);
        let protos = random([3, 4], &mut rng);
        let mut tape = Tape::new();
        let s = tape.constant(states.clone());
        let w = tape.constant(protos.clone());
        let out = coarse_scores_batched(&mut tape, s, w, 2).unwrap();
        assert_eq!(tape.shape(out), &[2, 3]);
        for b in 0..2 {
            let rows = Tensor::new([3, 4], states.data()[b * 12..(b + 1) * 12].to_vec()).unwrap();
            assert_eq!(tape.value(out).row(b), coarse_scores(&rows, &protos).unwrap().data());
        }
    }
}
