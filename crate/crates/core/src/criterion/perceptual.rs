use std::rc::Rc;

use crate::layout::Layout;
use crate::num::{NodeId, NumError, RngStream};
use crate::{Tape, Tensor};

pub const PERCEPTUAL_SCALES: usize = 3;
/// Input channels per scale: RGB plus horizontal/vertical gradient
/// magnitudes of the luminance.
pub const PERCEPTUAL_IN: usize = 5;
pub const PERCEPTUAL_OUT: usize = 8;

/// Frozen multi-scale feature extractor standing in for a pretrained
/// perceptual network: three scales (full, 1/2, 1/4 via 2x2 average
/// pooling), each projected by a fixed seeded linear map.
#[derive(Debug, Clone)]
pub struct PerceptualExtractor {
    scales: Vec<ScaleSpec>,
}

#[derive(Debug, Clone)]
struct ScaleSpec {
    h: usize,
    w: usize,
    /// [5, 8] seeded projection, frozen at construction.
    proj: Tensor,
    /// 2x2 average-pool quads from the previous scale; None at full res.
    pool: Option<[Rc<Vec<usize>>; 4]>,
    shift_h: Rc<Vec<usize>>,
    shift_v: Rc<Vec<usize>>,
    chan: [Rc<Vec<usize>>; 3],
    transpose: Rc<Vec<usize>>,
}

fn pool_quads(h: usize, w: usize) -> [Rc<Vec<usize>>; 4] {
    // Maps into the parent scale of size [3, 2h, 2w].
    let (ph, pw) = (2 * h, 2 * w);
    let mut quads: [Vec<usize>; 4] =
        [vec![0; 3 * h * w], vec![0; 3 * h * w], vec![0; 3 * h * w], vec![0; 3 * h * w]];
    for c in 0..3 {
        for i in 0..h {
            for j in 0..w {
                let out = c * h * w + i * w + j;
                let base = c * ph * pw;
                quads[0][out] = base + (2 * i) * pw + 2 * j;
                quads[1][out] = base + (2 * i) * pw + 2 * j + 1;
                quads[2][out] = base + (2 * i + 1) * pw + 2 * j;
                quads[3][out] = base + (2 * i + 1) * pw + 2 * j + 1;
            }
        }
    }
    let [a, b, c, d] = quads;
    [Rc::new(a), Rc::new(b), Rc::new(c), Rc::new(d)]
}

impl PerceptualExtractor {
    /// Builds the frozen extractor for images of the given size. The
    /// seed fully determines the projections.
    pub fn new(height: usize, width: usize, seed: u64) -> Self {
        assert!(height % 4 == 0 && width % 4 == 0, "need /4 divisibility for 3 scales");
        let scales = (0..PERCEPTUAL_SCALES)
            .map(|s| {
                let h = height >> s;
                let w = width >> s;
                let hw = h * w;
                let mut rng = RngStream::new(seed, s as u64);
                let std = (PERCEPTUAL_IN as f64).sqrt().recip();
                let proj = Tensor::new(
                    vec![PERCEPTUAL_IN, PERCEPTUAL_OUT],
                    (0..PERCEPTUAL_IN * PERCEPTUAL_OUT)
                        .map(|_| rng.normal() * std)
                        .collect(),
                )
                .expect("projection init");
                let mut shift_h = vec![0usize; hw];
                let mut shift_v = vec![0usize; hw];
                for i in 0..h {
                    for j in 0..w {
                        shift_h[i * w + j] = i * w + (j + 1).min(w - 1);
                        shift_v[i * w + j] = (i + 1).min(h - 1) * w + j;
                    }
                }
                let chan = [
                    Rc::new((0..hw).collect::<Vec<_>>()),
                    Rc::new((hw..2 * hw).collect::<Vec<_>>()),
                    Rc::new((2 * hw..3 * hw).collect::<Vec<_>>()),
                ];
                ScaleSpec {
                    h,
                    w,
                    proj,
                    pool: (s > 0).then(|| pool_quads(h, w)),
                    shift_h: Rc::new(shift_h),
                    shift_v: Rc::new(shift_v),
                    chan,
                    transpose: Layout::transpose_map(PERCEPTUAL_IN, hw),
                }
            })
            .collect();
        Self { scales }
    }

    /// Per-scale feature nodes, each [pixels, 8], for a [3, H, W] image
    /// node already on the tape.
    pub fn features_graph(
        &self,
        tape: &mut Tape,
        image: NodeId,
    ) -> Result<Vec<NodeId>, NumError> {
        let mut cur = image;
        let mut out = Vec::with_capacity(self.scales.len());
        for spec in &self.scales {
            let hw = spec.h * spec.w;
            if let Some(q) = &spec.pool {
                let shape = vec![3 * hw];
                let p0 = tape.gather(cur, q[0].clone(), shape.clone())?;
                let p1 = tape.gather(cur, q[1].clone(), shape.clone())?;
                let p2 = tape.gather(cur, q[2].clone(), shape.clone())?;
                let p3 = tape.gather(cur, q[3].clone(), shape)?;
                let a = tape.add(p0, p1)?;
                let b = tape.add(p2, p3)?;
                let s = tape.add(a, b)?;
                cur = tape.scale(s, 0.25)?;
            }
            let r = tape.gather(cur, spec.chan[0].clone(), vec![hw])?;
            let g = tape.gather(cur, spec.chan[1].clone(), vec![hw])?;
            let b = tape.gather(cur, spec.chan[2].clone(), vec![hw])?;
            let rg = tape.add(r, g)?;
            let rgb = tape.add(rg, b)?;
            let lum = tape.scale(rgb, 1.0 / 3.0)?;
            let sh = tape.gather(lum, spec.shift_h.clone(), vec![hw])?;
            let dh = tape.sub(sh, lum)?;
            let gh = tape.abs(dh)?;
            let sv = tape.gather(lum, spec.shift_v.clone(), vec![hw])?;
            let dv = tape.sub(sv, lum)?;
            let gv = tape.abs(dv)?;
            let stacked = tape.concat(&[r, g, b, gh, gv])?;
            let mat = tape.reshape(stacked, vec![PERCEPTUAL_IN, hw])?;
            let t = tape.gather(mat, spec.transpose.clone(), vec![hw, PERCEPTUAL_IN])?;
            let proj = tape.constant(spec.proj.clone());
            out.push(tape.matmul(t, proj)?);
        }
        Ok(out)
    }

    /// Concrete per-scale features of an image.
    pub fn features(&self, image: &Tensor) -> Result<Vec<Tensor>, NumError> {
        let mut tape = Tape::new();
        let x = tape.input(image.clone());
        let ids = self.features_graph(&mut tape, x)?;
        Ok(ids.into_iter().map(|id| tape.value(id).clone()).collect())
    }
}

/// Differentiable perceptual loss node: sum over scales of the mean
/// squared feature difference.
pub fn perceptual_loss_graph(
    tape: &mut Tape,
    extractor: &PerceptualExtractor,
    x: NodeId,
    x_hat: NodeId,
) -> Result<NodeId, NumError> {
    let fa = extractor.features_graph(tape, x)?;
    let fb = extractor.features_graph(tape, x_hat)?;
    let mut terms = Vec::with_capacity(fa.len());
    for (a, b) in fa.into_iter().zip(fb) {
        let d = tape.sub(a, b)?;
        let sq = tape.mul(d, d)?;
        terms.push(tape.mean(sq)?);
    }
    let all = tape.concat(&terms)?;
    tape.sum(all)
}

/// Concrete perceptual loss between two images.
pub fn perceptual_loss(
    x: &Tensor,
    x_hat: &Tensor,
    extractor: &PerceptualExtractor,
) -> Result<f64, NumError> {
    let mut tape = Tape::new();
    let a = tape.input(x.clone());
    let b = tape.input(x_hat.clone());
    let loss = perceptual_loss_graph(&mut tape, extractor, a, b)?;
    tape.value(loss).scalar_value()
}
