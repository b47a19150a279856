use crate::num::{NodeId, NumError};
use crate::{Tape, Tensor};

use super::DecoderError;

/// Weights of the joint generator objective.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GanWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for GanWeights {
    fn default() -> Self {
        Self { lambda1: 10.0, lambda2: 1.0 }
    }
}

/// Hinge GAN losses from batches of real/fake scores:
/// L_D = E[max(0, 1 - D(x,s))] + E[max(0, 1 + D(x_hat,s))],
/// L_G = -E[D(x_hat,s)].
pub fn hinge_losses(real: &[f64], fake: &[f64]) -> (f64, f64) {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let l_d = mean(&real.iter().map(|&r| (1.0 - r).max(0.0)).collect::<Vec<_>>())
        + mean(&fake.iter().map(|&f| (1.0 + f).max(0.0)).collect::<Vec<_>>());
    let l_g = -mean(fake);
    (l_d, l_g)
}

/// Discriminator-side hinge loss node for single scalar scores.
pub fn hinge_discriminator_graph(
    tape: &mut Tape,
    real_score: NodeId,
    fake_score: NodeId,
) -> Result<NodeId, NumError> {
    let neg_real = tape.scale(real_score, -1.0)?;
    let one_minus = tape.add_const(neg_real, 1.0)?;
    let real_term = tape.relu(one_minus)?;
    let one_plus = tape.add_const(fake_score, 1.0)?;
    let fake_term = tape.relu(one_plus)?;
    tape.add(real_term, fake_term)
}

/// Generator-side adversarial term: -D(x_hat, s).
pub fn hinge_generator_graph(tape: &mut Tape, fake_score: NodeId) -> Result<NodeId, NumError> {
    tape.scale(fake_score, -1.0)
}

/// Joint generator objective: -E[D] + lambda1 * L_P + lambda2 * L_C.
pub fn joint_generator_loss(adv: f64, l_p: f64, l_c: f64, weights: &GanWeights) -> f64 {
    adv + weights.lambda1 * l_p + weights.lambda2 * l_c
}

/// Pixelwise fusion x_hat = W_l .* x_l + W_g .* x_g. Rejects weight maps
/// that do not sum to one pointwise.
pub fn attention_fuse(
    x_l: &Tensor,
    x_g: &Tensor,
    w_l: &Tensor,
    w_g: &Tensor,
) -> Result<Tensor, DecoderError> {
    if x_l.len() != x_g.len() || x_l.len() != w_l.len() || w_l.len() != w_g.len() {
        return Err(DecoderError::Invalid("fusion operand sizes differ".into()));
    }
    for (p, (a, b)) in w_l.data().iter().zip(w_g.data()).enumerate() {
        if (a + b - 1.0).abs() > 1e-9 {
            return Err(DecoderError::BadAttention(p));
        }
    }
    Ok(x_l
        .mul(w_l)
        .and_then(|lhs| x_g.mul(w_g).and_then(|rhs| lhs.add(&rhs)))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::RngStream;

    #[test]
    fn satisfied_margins_zero_d_loss() {
        let (l_d, _) = hinge_losses(&[1.0, 1.5], &[-1.0, -2.0]);
        assert_eq!(l_d, 0.0);
    }

    #[test]
    fn zero_scores_give_d_loss_two() {
        let (l_d, l_g) = hinge_losses(&[0.0], &[0.0]);
        assert_eq!(l_d, 2.0);
        assert_eq!(l_g, 0.0);
    }

    #[test]
    fn generator_loss_strictly_decreasing_in_fake_score() {
        let mut prev = f64::INFINITY;
        for f in [-2.0, -0.5, 0.0, 0.7, 3.0] {
            let (_, l_g) = hinge_losses(&[1.0], &[f]);
            assert!(l_g < prev);
            prev = l_g;
        }
    }

    #[test]
    fn d_loss_zero_iff_margins_met() {
        let (l_d, _) = hinge_losses(&[1.0, 0.99], &[-1.0]);
        assert!(l_d > 0.0);
        let (l_d, _) = hinge_losses(&[1.0], &[-0.99]);
        assert!(l_d > 0.0);
    }

    #[test]
    fn graph_hinge_matches_pure_form() {
        let mut tape = Tape::new();
        for (r, f) in [(0.3, -0.2), (1.4, -1.7), (-0.5, 0.9)] {
            let rs = tape.input(Tensor::scalar(r));
            let fs = tape.input(Tensor::scalar(f));
            let ld = hinge_discriminator_graph(&mut tape, rs, fs).unwrap();
            let lg = hinge_generator_graph(&mut tape, fs).unwrap();
            let (want_d, want_g) = hinge_losses(&[r], &[f]);
            assert!((tape.value(ld).scalar_value().unwrap() - want_d).abs() < 1e-15);
            assert!((tape.value(lg).scalar_value().unwrap() - want_g).abs() < 1e-15);
        }
    }

    #[test]
    fn joint_loss_weighted_sum() {
        let w = GanWeights::default();
        assert!((joint_generator_loss(0.5, 0.02, 0.3, &w) - 1.0).abs() < 1e-15);
        let off = GanWeights { lambda1: 0.0, lambda2: 0.0 };
        assert_eq!(joint_generator_loss(0.5, 9.0, 9.0, &off), 0.5);
    }

    #[test]
    fn fuse_extremes_and_average() {
        let xl = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let xg = Tensor::from_vec(vec![5.0, 6.0, 7.0]);
        let ones = Tensor::from_vec(vec![1.0; 3]);
        let zeros = Tensor::from_vec(vec![0.0; 3]);
        assert_eq!(attention_fuse(&xl, &xg, &ones, &zeros).unwrap(), xl);
        let half = Tensor::from_vec(vec![0.5; 3]);
        let avg = attention_fuse(&xl, &xg, &half, &half).unwrap();
        assert_eq!(avg.data(), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn fuse_is_convex_combination() {
        let mut rng = RngStream::new(810, 0);
        let xl = Tensor::from_vec((0..32).map(|_| rng.normal()).collect());
        let xg = Tensor::from_vec((0..32).map(|_| rng.normal()).collect());
        let wl = Tensor::from_vec((0..32).map(|_| rng.uniform(0.0, 1.0)).collect());
        let wg = Tensor::from_vec(wl.data().iter().map(|v| 1.0 - v).collect());
        let fused = attention_fuse(&xl, &xg, &wl, &wg).unwrap();
        for i in 0..32 {
            let lo = xl.data()[i].min(xg.data()[i]);
            let hi = xl.data()[i].max(xg.data()[i]);
            assert!(fused.data()[i] >= lo - 1e-12 && fused.data()[i] <= hi + 1e-12);
        }
    }

    #[test]
    fn bad_weights_rejected_with_pixel() {
        let x = Tensor::from_vec(vec![0.0, 0.0]);
        let wl = Tensor::from_vec(vec![0.5, 0.7]);
        let wg = Tensor::from_vec(vec![0.5, 0.4]);
        assert_eq!(
            attention_fuse(&x, &x, &wl, &wg),
            Err(DecoderError::BadAttention(1))
        );
    }
}
