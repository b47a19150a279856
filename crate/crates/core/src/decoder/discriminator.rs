use crate::layout::{Layout, PATCH};
use crate::num::{NodeId, NumError, ParamBlock, ParamNodes, RngStream};
use crate::{Tape, Tensor};

/// Two-scale linear patch scorer conditioned on the label map by one-hot
/// channel concatenation.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub params: ParamBlock<f64>,
    pub m: usize,
}

impl Discriminator {
    pub fn new(m: usize, rng: &mut RngStream) -> Self {
        let plen = PATCH * PATCH * (3 + m);
        let std = (plen as f64).sqrt().recip();
        let mut params = ParamBlock::new();
        params.insert_randn("disc.s1.w", vec![plen, 1], std, rng);
        params.insert_zeros("disc.s1.b", vec![1]);
        params.insert_randn("disc.s2.w", vec![plen, 1], std, rng);
        params.insert_zeros("disc.s2.b", vec![1]);
        Self { params, m }
    }
}

fn one_hot_channels(labels: &[u8], m: usize) -> Vec<f64> {
    let hw = labels.len();
    let mut out = vec![0.0; m * hw];
    for (p, &c) in labels.iter().enumerate() {
        out[(c as usize - 1) * hw + p] = 1.0;
    }
    out
}

fn scale_score(
    tape: &mut Tape,
    nodes: &ParamNodes,
    combined: NodeId,
    channels: usize,
    h: usize,
    w: usize,
    which: &str,
) -> Result<NodeId, NumError> {
    let cells = (h / PATCH) * (w / PATCH);
    let plen = PATCH * PATCH * channels;
    let patches = tape.gather(combined, Layout::patch_map(channels, h, w), vec![cells, plen])?;
    let raw = tape.matmul(patches, nodes.id(&format!("disc.{which}.w")))?;
    let bias = tape.gather(
        nodes.id(&format!("disc.{which}.b")),
        Layout::row_broadcast_map(cells, 1),
        vec![cells, 1],
    )?;
    let scores = tape.add(raw, bias)?;
    tape.mean(scores)
}

/// Scalar conditional score D(x, s) for a [3, H, W] image node.
pub fn discriminate_graph(
    tape: &mut Tape,
    nodes: &ParamNodes,
    layout: &Layout,
    image: NodeId,
    labels: &[u8],
    m: usize,
) -> Result<NodeId, NumError> {
    let (h, w) = (layout.height, layout.width);
    assert_eq!(labels.len(), h * w);
    let pix = h * w;

    // Full scale: image channels followed by the one-hot label planes.
    let flat = tape.reshape(image, vec![3 * pix])?;
    let onehot = tape.constant(Tensor::new(vec![m * pix], one_hot_channels(labels, m))?);
    let combined = tape.concat(&[flat, onehot])?;
    let s1 = scale_score(tape, nodes, combined, 3 + m, h, w, "s1")?;

    // Half scale: 2x2 mean pool of both image and label planes.
    let (hh, hw) = (h / 2, w / 2);
    let q = &layout.pool_quads;
    let shape = vec![3 * hh * hw];
    let p0 = tape.gather(flat, q[0].clone(), shape.clone())?;
    let p1 = tape.gather(flat, q[1].clone(), shape.clone())?;
    let p2 = tape.gather(flat, q[2].clone(), shape.clone())?;
    let p3 = tape.gather(flat, q[3].clone(), shape)?;
    let a = tape.add(p0, p1)?;
    let b = tape.add(p2, p3)?;
    let s = tape.add(a, b)?;
    let pooled = tape.scale(s, 0.25)?;
    let full_onehot = one_hot_channels(labels, m);
    let mut pooled_onehot = vec![0.0; m * hh * hw];
    for c in 0..m {
        for i in 0..hh {
            for j in 0..hw {
                let v = |di: usize, dj: usize| {
                    full_onehot[c * pix + (2 * i + di) * w + 2 * j + dj]
                };
                pooled_onehot[c * hh * hw + i * hw + j] =
                    (v(0, 0) + v(0, 1) + v(1, 0) + v(1, 1)) / 4.0;
            }
        }
    }
    let onehot2 = tape.constant(Tensor::new(vec![m * hh * hw], pooled_onehot)?);
    let combined2 = tape.concat(&[pooled, onehot2])?;
    let s2 = scale_score(tape, nodes, combined2, 3 + m, hh, hw, "s2")?;

    let sum = tape.add(s1, s2)?;
    tape.scale(sum, 0.5)
}

/// Concrete score for an image/label pair.
pub fn discriminate(
    disc: &Discriminator,
    layout: &Layout,
    image: &Tensor,
    labels: &[u8],
) -> Result<f64, NumError> {
    let mut tape = Tape::new();
    let nodes = disc.params.feed(&mut tape);
    let x = tape.input(image.clone());
    let score = discriminate_graph(&mut tape, &nodes, layout, x, labels, disc.m)?;
    tape.value(score).scalar_value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, SceneConfig};

    #[test]
    fn score_is_deterministic() {
        let config = SceneConfig::default();
        let layout = Layout::new(config.height, config.width);
        let mut rng = RngStream::new(800, 0);
        let disc = Discriminator::new(config.num_classes, &mut rng);
        let s = generate_scene(&mut RngStream::new(801, 0), &config).unwrap();
        let a = discriminate(&disc, &layout, &s.image, &s.labels).unwrap();
        let b = discriminate(&disc, &layout, &s.image, &s.labels).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditioning_on_labels_matters() {
        let config = SceneConfig::default();
        let layout = Layout::new(config.height, config.width);
        let mut rng = RngStream::new(802, 0);
        let disc = Discriminator::new(config.num_classes, &mut rng);
        let s = generate_scene(&mut RngStream::new(803, 0), &config).unwrap();
        let mut other = s.labels.clone();
        for c in other.iter_mut() {
            *c = 1 + (*c % config.num_classes as u8);
        }
        let a = discriminate(&disc, &layout, &s.image, &s.labels).unwrap();
        let b = discriminate(&disc, &layout, &s.image, &other).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn score_is_affine_in_the_image() {
        let config = SceneConfig::default();
        let layout = Layout::new(config.height, config.width);
        let mut rng = RngStream::new(804, 0);
        let disc = Discriminator::new(config.num_classes, &mut rng);
        let s = generate_scene(&mut RngStream::new(805, 0), &config).unwrap();
        let x = &s.image;
        let y = Tensor::new(
            x.shape().to_vec(),
            (0..x.len()).map(|_| rng.uniform(0.0, 1.0)).collect(),
        )
        .unwrap();
        let zero = Tensor::zeros(x.shape().to_vec());
        let dx = discriminate(&disc, &layout, x, &s.labels).unwrap();
        let dy = discriminate(&disc, &layout, &y, &s.labels).unwrap();
        let d0 = discriminate(&disc, &layout, &zero, &s.labels).unwrap();
        let dxy = discriminate(&disc, &layout, &x.add(&y).unwrap(), &s.labels).unwrap();
        assert!(((dxy - d0) - ((dx - d0) + (dy - d0))).abs() < 1e-12);
    }

    #[test]
    fn gradient_reaches_the_image() {
        let config = SceneConfig::default();
        let layout = Layout::new(config.height, config.width);
        let mut rng = RngStream::new(806, 0);
        let disc = Discriminator::new(config.num_classes, &mut rng);
        let s = generate_scene(&mut RngStream::new(807, 0), &config).unwrap();
        let mut tape = Tape::new();
        let nodes = disc.params.feed(&mut tape);
        let x = tape.input(s.image.clone());
        let score =
            discriminate_graph(&mut tape, &nodes, &layout, x, &s.labels, disc.m).unwrap();
        let grads = tape.backward(score).unwrap();
        let gx = grads[x.index()].as_ref().unwrap();
        assert!(gx.data().iter().any(|&v| v != 0.0));
    }
}
