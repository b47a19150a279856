use crate::layout::{Layout, PATCH_LEN};
use crate::num::{NumError, ParamBlock, ParamNodes, RngStream};
use crate::{Tape, Tensor};

use super::SemanticConcept;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const NORM_EPS: f64 = 1e-5;

/// Per-patch linear feature encoder plus the shared classification head.
///
/// Parameters: `enc.w` [192, n], `enc.b` [n], `head.w` [n, M], `head.b` [M].
#[derive(Debug, Clone)]
pub struct EncoderModel {
    pub params: ParamBlock<f64>,
    pub n: usize,
    pub m: usize,
}

impl EncoderModel {
    pub fn new(n: usize, m: usize, rng: &mut RngStream) -> Self {
        let mut params = ParamBlock::new();
        params.insert_randn("enc.w", vec![PATCH_LEN, n], (PATCH_LEN as f64).sqrt().recip(), rng);
        params.insert_zeros("enc.b", vec![n]);
        params.insert_randn("head.w", vec![n, m], (n as f64).sqrt().recip(), rng);
        params.insert_zeros("head.b", vec![m]);
        Self { params, n, m }
    }
}

/// Encoder graph: 8x8x3 patches through a shared linear layer and
/// leaky-relu, then per-channel normalization to zero mean / unit
/// variance over the spatial grid. Returns an [n, cells] node.
pub fn encode_features_graph(
    tape: &mut Tape,
    nodes: &ParamNodes,
    image: crate::num::NodeId,
    layout: &Layout,
    n: usize,
) -> Result<crate::num::NodeId, NumError> {
    let cells = layout.cells();
    let patches = tape.gather(
        image,
        layout.image_to_patches.clone(),
        vec![cells, PATCH_LEN],
    )?;
    let lin = tape.matmul(patches, nodes.id("enc.w"))?;
    let bias = tape.gather(
        nodes.id("enc.b"),
        Layout::row_broadcast_map(cells, n),
        vec![cells, n],
    )?;
    let pre = tape.add(lin, bias)?;
    let act = tape.leaky_relu(pre, LEAKY_SLOPE)?;
    let chan = tape.gather(act, Layout::transpose_map(cells, n), vec![n, cells])?;
    tape.norm_rows(chan, NORM_EPS)
}

/// Convenience wrapper running [`encode_features_graph`] on a fresh tape.
pub fn encode_features(
    image: &Tensor,
    model: &EncoderModel,
    layout: &Layout,
) -> Result<Tensor, NumError> {
    let mut tape = Tape::new();
    let nodes = model.params.feed(&mut tape);
    let x = tape.input(image.clone());
    let out = encode_features_graph(&mut tape, &nodes, x, layout, model.n)?;
    Ok(tape.value(out).clone())
}

/// Differentiable concept-classification loss: per concept, spatial
/// max-pool to an n-vector, shared linear head to M logits, softmax,
/// cross entropy against the concept's own class. Empty concepts are
/// skipped. Returns the scalar loss node.
pub fn feature_class_loss_graph(
    tape: &mut Tape,
    nodes: &ParamNodes,
    concepts: &[(u8, crate::num::NodeId, bool)],
    m: usize,
) -> Result<crate::num::NodeId, NumError> {
    let mut terms = Vec::new();
    for &(class_id, feats, empty) in concepts {
        if empty {
            continue;
        }
        let pooled = tape.max_rows(feats)?;
        let n = tape.value(pooled).len();
        let row = tape.reshape(pooled, vec![1, n])?;
        let logits = tape.matmul(row, nodes.id("head.w"))?;
        let bias = tape.reshape(nodes.id("head.b"), vec![1, m])?;
        let shifted = tape.add(logits, bias)?;
        let probs = tape.softmax_rows(shifted)?;
        let p = tape.gather(
            probs,
            std::rc::Rc::new(vec![(class_id - 1) as usize]),
            vec![1],
        )?;
        let lp = tape.log(p)?;
        terms.push(tape.scale(lp, -1.0)?);
    }
    if terms.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let all = tape.concat(&terms)?;
    tape.sum(all)
}

/// Evaluation form of the classification loss over concrete concepts.
pub fn feature_class_loss(
    concepts: &[SemanticConcept],
    params: &ParamBlock<f64>,
    m: usize,
) -> Result<f64, NumError> {
    let mut tape = Tape::new();
    let nodes = params.feed(&mut tape);
    let ids: Vec<(u8, crate::num::NodeId, bool)> = concepts
        .iter()
        .map(|c| (c.class_id, tape.input(c.features.clone()), c.is_empty()))
        .collect();
    let loss = feature_class_loss_graph(&mut tape, &nodes, &ids, m)?;
    tape.value(loss).scalar_value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{decompose_features, SemanticMask};

    fn straight_loop_encode(image: &Tensor, model: &EncoderModel, layout: &Layout) -> Tensor {
        // Independent reimplementation without the tape.
        let cells = layout.cells();
        let n = model.n;
        let w = model.params.get("enc.w").unwrap();
        let b = model.params.get("enc.b").unwrap();
        let mut act = vec![0.0; cells * n];
        for cell in 0..cells {
            for ch in 0..n {
                let mut s = b.data()[ch];
                for k in 0..PATCH_LEN {
                    let px = image.data()[layout.image_to_patches[cell * PATCH_LEN + k]];
                    s += px * w.data()[k * n + ch];
                }
                act[cell * n + ch] = if s >= 0.0 { s } else { LEAKY_SLOPE * s };
            }
        }
        let mut out = vec![0.0; n * cells];
        for ch in 0..n {
            let col: Vec<f64> = (0..cells).map(|c| act[c * n + ch]).collect();
            let mu = col.iter().sum::<f64>() / cells as f64;
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / cells as f64;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            for (cell, v) in col.iter().enumerate() {
                out[ch * cells + cell] = (v - mu) * inv;
            }
        }
        Tensor::new(vec![n, cells], out).unwrap()
    }

    #[test]
    fn matches_straight_loop_oracle() {
        let mut rng = RngStream::new(10, 0);
        let layout = Layout::new(16, 24);
        let model = EncoderModel::new(5, 4, &mut rng);
        let image = Tensor::new(
            vec![3, 16, 24],
            (0..3 * 16 * 24).map(|_| rng.uniform(0.0, 1.0)).collect(),
        )
        .unwrap();
        let got = encode_features(&image, &model, &layout).unwrap();
        let want = straight_loop_encode(&image, &model, &layout);
        assert_eq!(got.shape(), &[5, 6]);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_image_zero_bias_gives_zero_features() {
        let mut rng = RngStream::new(11, 0);
        let layout = Layout::new(8, 8);
        let mut model = EncoderModel::new(4, 3, &mut rng);
        model.params.insert_zeros("enc.b", vec![4]);
        let image = Tensor::zeros(vec![3, 8, 8]);
        let feats = encode_features(&image, &model, &layout).unwrap();
        assert!(feats.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_for_identical_images() {
        let mut rng = RngStream::new(12, 0);
        let layout = Layout::new(16, 16);
        let model = EncoderModel::new(6, 4, &mut rng);
        let image = Tensor::new(
            vec![3, 16, 16],
            (0..3 * 16 * 16).map(|_| rng.normal()).collect(),
        )
        .unwrap();
        let a = encode_features(&image, &model, &layout).unwrap();
        let b = encode_features(&image, &model, &layout).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_head_loss_is_m_ln_m() {
        // Zero head on zero-pooled features gives the uniform posterior,
        // so each of the M concepts contributes ln M.
        let m = 5usize;
        let cells = 8;
        let mut params = ParamBlock::new();
        params.insert_zeros("head.w", vec![3, m]);
        params.insert_zeros("head.b", vec![m]);
        let concepts: Vec<SemanticConcept> = (1..=m as u8)
            .map(|class_id| SemanticConcept {
                class_id,
                features: Tensor::zeros(vec![3, cells]),
                mask: SemanticMask {
                    class_id,
                    full: vec![1; 64 * cells],
                    down: vec![1; cells],
                    height: 8,
                    width: 8 * cells,
                },
            })
            .collect();
        let loss = feature_class_loss(&concepts, &params, m).unwrap();
        assert!((loss - m as f64 * (m as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_head_drives_loss_to_zero() {
        let m = 3usize;
        let cells = 4;
        let mut params = ParamBlock::new();
        // head.w scaled identity over 3 channels: sharper logits as the
        // scale grows push the cross entropy toward its lower bound 0.
        let mut prev = f64::INFINITY;
        for scale in [1.0, 5.0, 25.0] {
            let mut w = vec![0.0; m * m];
            for i in 0..m {
                w[i * m + i] = scale;
            }
            params.insert("head.w", Tensor::new(vec![m, m], w).unwrap());
            params.insert_zeros("head.b", vec![m]);
            let concepts: Vec<SemanticConcept> = (1..=m as u8)
                .map(|class_id| {
                    let mut f = vec![0.0; m * cells];
                    f[(class_id as usize - 1) * cells] = 1.0;
                    SemanticConcept {
                        class_id,
                        features: Tensor::new(vec![m, cells], f).unwrap(),
                        mask: SemanticMask {
                            class_id,
                            full: vec![1; 64 * cells],
                            down: vec![1; cells],
                            height: 8,
                            width: 8 * cells,
                        },
                    }
                })
                .collect();
            let loss = feature_class_loss(&concepts, &params, m).unwrap();
            assert!(loss >= 0.0 && loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn random_head_matches_direct_formula() {
        let mut rng = RngStream::new(13, 0);
        let m = 4usize;
        let n = 3usize;
        let cells = 6;
        let mut params = ParamBlock::new();
        params.insert_randn("head.w", vec![n, m], 1.0, &mut rng);
        params.insert_randn("head.b", vec![m], 1.0, &mut rng);
        let concepts: Vec<SemanticConcept> = (1..=m as u8)
            .map(|class_id| SemanticConcept {
                class_id,
                features: Tensor::new(
                    vec![n, cells],
                    (0..n * cells).map(|_| rng.normal()).collect(),
                )
                .unwrap(),
                mask: SemanticMask {
                    class_id,
                    full: vec![1; 64 * cells],
                    down: vec![1; cells],
                    height: 8,
                    width: 8 * cells,
                },
            })
            .collect();
        let got = feature_class_loss(&concepts, &params, m).unwrap();

        // Direct cross-entropy evaluation.
        let w = params.get("head.w").unwrap();
        let b = params.get("head.b").unwrap();
        let mut want = 0.0;
        for c in &concepts {
            let pooled: Vec<f64> = (0..n)
                .map(|ch| {
                    c.features.data()[ch * cells..(ch + 1) * cells]
                        .iter()
                        .cloned()
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            let logits: Vec<f64> = (0..m)
                .map(|j| {
                    b.data()[j]
                        + (0..n).map(|ch| pooled[ch] * w.data()[ch * m + j]).sum::<f64>()
                })
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            want -= (logits[(c.class_id - 1) as usize].exp() / z).ln();
        }
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn empty_concepts_contribute_nothing() {
        let m = 3usize;
        let mut rng = RngStream::new(14, 0);
        let mut params = ParamBlock::new();
        params.insert_randn("head.w", vec![2, m], 1.0, &mut rng);
        params.insert_randn("head.b", vec![m], 1.0, &mut rng);
        let feats = Tensor::new(vec![2, 4], (0..8).map(|_| rng.normal()).collect()).unwrap();
        let full_mask = SemanticMask {
            class_id: 1,
            full: vec![1; 64 * 4],
            down: vec![1; 4],
            height: 8,
            width: 32,
        };
        let empty_mask = SemanticMask {
            class_id: 2,
            full: vec![0; 64 * 4],
            down: vec![0; 4],
            height: 8,
            width: 32,
        };
        let full = decompose_features(&feats, &full_mask);
        let empty = decompose_features(&feats, &empty_mask);
        let with = feature_class_loss(&[full.clone(), empty], &params, m).unwrap();
        let without = feature_class_loss(&[full], &params, m).unwrap();
        assert!((with - without).abs() < 1e-15);
    }
}
