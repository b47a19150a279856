use std::rc::Rc;

use crate::layout::{Layout, PATCH_LEN};
use crate::num::{NodeId, NumError, ParamBlock, ParamNodes, RngStream};
use crate::scene::{SemanticConcept, LEAKY_SLOPE};
use crate::{Tape, Tensor};

/// Hidden width of the shared local-generator trunk.
pub const TRUNK_WIDTH: usize = 16;

/// Generator parameters: shared local trunk with per-class patch heads,
/// a class-modulated global decoder, and the attention head.
#[derive(Debug, Clone)]
pub struct GeneratorModel {
    pub params: ParamBlock<f64>,
    pub n: usize,
    pub m: usize,
}

impl GeneratorModel {
    pub fn new(n: usize, m: usize, rng: &mut RngStream) -> Self {
        let mut params = ParamBlock::new();
        let std_n = (n as f64).sqrt().recip();
        let std_t = (TRUNK_WIDTH as f64).sqrt().recip();
        params.insert_randn("gen.trunk.w", vec![n, TRUNK_WIDTH], std_n, rng);
        params.insert_zeros("gen.trunk.b", vec![TRUNK_WIDTH]);
        for c in 1..=m {
            params.insert_randn(&format!("gen.head.{c}.w"), vec![TRUNK_WIDTH, PATCH_LEN], std_t, rng);
            params.insert_zeros(&format!("gen.head.{c}.b"), vec![PATCH_LEN]);
        }
        params.insert_randn("gen.glob.w", vec![n, PATCH_LEN], std_n, rng);
        params.insert_zeros("gen.glob.b", vec![PATCH_LEN]);
        params.insert("gen.glob.gamma", Tensor::full(vec![m, PATCH_LEN], 1.0));
        params.insert_zeros("gen.glob.beta", vec![m, PATCH_LEN]);
        params.insert_randn("gen.att.w", vec![n, 2], std_n, rng);
        params.insert_zeros("gen.att.b", vec![2]);
        Self { params, n, m }
    }
}

/// Node handles of one decode pass.
#[derive(Debug, Clone, Copy)]
pub struct DecodeNodes {
    pub local: NodeId,
    pub global: NodeId,
    pub w_l: NodeId,
    pub w_g: NodeId,
    pub fused: NodeId,
}

fn bias_broadcast(
    tape: &mut Tape,
    nodes: &ParamNodes,
    name: &str,
    rows: usize,
    cols: usize,
) -> Result<NodeId, NumError> {
    tape.gather(nodes.id(name), Layout::row_broadcast_map(rows, cols), vec![rows, cols])
}

fn cell_mask_tensor(down: &[u8], cols: usize) -> Tensor {
    let mut data = vec![0.0; down.len() * cols];
    for (cell, &on) in down.iter().enumerate() {
        if on != 0 {
            for k in 0..cols {
                data[cell * cols + k] = 1.0;
            }
        }
    }
    Tensor::new(vec![down.len(), cols], data).expect("cell mask")
}

/// Full decode pass. `concept_feats[i]` is the [cells, n] feature node of
/// concept i+1, already gated by its downscaled mask; `down` holds each
/// concept's downscaled indicator and `down_labels` the cell-majority
/// label grid driving the global modulation.
pub fn decode_graph(
    tape: &mut Tape,
    nodes: &ParamNodes,
    layout: &Layout,
    concept_feats: &[NodeId],
    down: &[Vec<u8>],
    down_labels: &[u8],
) -> Result<DecodeNodes, NumError> {
    let cells = layout.cells();
    let m = concept_feats.len();
    assert_eq!(down.len(), m);
    assert_eq!(down_labels.len(), cells);

    // Local path: per-concept trunk + class head, gated to the class
    // region; masks partition so the sum writes each cell exactly once.
    let trunk_b = bias_broadcast(tape, nodes, "gen.trunk.b", cells, TRUNK_WIDTH)?;
    let mut local_patches: Option<NodeId> = None;
    for (i, &feats) in concept_feats.iter().enumerate() {
        if down[i].iter().all(|&v| v == 0) {
            continue;
        }
        let lin = tape.matmul(feats, nodes.id("gen.trunk.w"))?;
        let pre = tape.add(lin, trunk_b)?;
        let hid = tape.leaky_relu(pre, LEAKY_SLOPE)?;
        let head_w = nodes.id(&format!("gen.head.{}.w", i + 1));
        let head_b = bias_broadcast(tape, nodes, &format!("gen.head.{}.b", i + 1), cells, PATCH_LEN)?;
        let out = tape.matmul(hid, head_w)?;
        let shifted = tape.add(out, head_b)?;
        let mask = tape.constant(cell_mask_tensor(&down[i], PATCH_LEN));
        let gated = tape.mul(shifted, mask)?;
        local_patches = Some(match local_patches {
            Some(acc) => tape.add(acc, gated)?,
            None => gated,
        });
    }
    let local_patches = match local_patches {
        Some(p) => p,
        None => tape.constant(Tensor::zeros(vec![cells, PATCH_LEN])),
    };
    let local_flat = tape.reshape(local_patches, vec![cells * PATCH_LEN])?;
    let local = tape.gather(local_flat, layout.patches_to_image.clone(), vec![3 * layout.pixels()])?;

    // Merged features drive the global decoder and the attention head.
    let mut merged = concept_feats[0];
    for &f in &concept_feats[1..] {
        merged = tape.add(merged, f)?;
    }

    // Global path: linear decode modulated by per-class scale/shift.
    let glob_lin = tape.matmul(merged, nodes.id("gen.glob.w"))?;
    let glob_b = bias_broadcast(tape, nodes, "gen.glob.b", cells, PATCH_LEN)?;
    let act = tape.add(glob_lin, glob_b)?;
    let class_map: Rc<Vec<usize>> = Rc::new(
        down_labels
            .iter()
            .flat_map(|&c| {
                let base = (c as usize - 1) * PATCH_LEN;
                base..base + PATCH_LEN
            })
            .collect(),
    );
    let gamma = tape.gather(nodes.id("gen.glob.gamma"), class_map.clone(), vec![cells, PATCH_LEN])?;
    let beta = tape.gather(nodes.id("gen.glob.beta"), class_map, vec![cells, PATCH_LEN])?;
    let scaled = tape.mul(act, gamma)?;
    let modulated = tape.add(scaled, beta)?;
    let glob_flat = tape.reshape(modulated, vec![cells * PATCH_LEN])?;
    let global = tape.gather(glob_flat, layout.patches_to_image.clone(), vec![3 * layout.pixels()])?;

    // Attention: two logits per cell, softmaxed, upsampled to pixels.
    let att_lin = tape.matmul(merged, nodes.id("gen.att.w"))?;
    let att_b = bias_broadcast(tape, nodes, "gen.att.b", cells, 2)?;
    let logits = tape.add(att_lin, att_b)?;
    let probs = tape.softmax_rows(logits)?;
    let probs_flat = tape.reshape(probs, vec![cells * 2])?;
    let pix = 3 * layout.pixels();
    let w_l = tape.gather(probs_flat, layout.cell_pair_to_image[0].clone(), vec![pix])?;
    let w_g = tape.gather(probs_flat, layout.cell_pair_to_image[1].clone(), vec![pix])?;

    let wl_xl = tape.mul(w_l, local)?;
    let wg_xg = tape.mul(w_g, global)?;
    let fused = tape.add(wl_xl, wg_xg)?;
    Ok(DecodeNodes { local, global, w_l, w_g, fused })
}

fn concept_inputs(
    tape: &mut Tape,
    concepts: &[SemanticConcept],
    cells: usize,
    n: usize,
) -> (Vec<NodeId>, Vec<Vec<u8>>) {
    let feats = concepts
        .iter()
        .map(|c| {
            // Graph expects [cells, n]; concepts store [n, cells].
            let mut data = vec![0.0; cells * n];
            for ch in 0..n {
                for cell in 0..cells {
                    data[cell * n + ch] = c.features.data()[ch * cells + cell];
                }
            }
            tape.input(Tensor::new(vec![cells, n], data).expect("concept input"))
        })
        .collect();
    let down = concepts.iter().map(|c| c.mask.down.clone()).collect();
    (feats, down)
}

fn down_labels_of(concepts: &[SemanticConcept], cells: usize) -> Vec<u8> {
    let mut labels = vec![1u8; cells];
    for c in concepts {
        for (cell, &on) in c.mask.down.iter().enumerate() {
            if on != 0 {
                labels[cell] = c.class_id;
            }
        }
    }
    labels
}

/// Full reconstruction of one image from its (dequantized) concepts.
pub fn decode_image(
    model: &GeneratorModel,
    layout: &Layout,
    concepts: &[SemanticConcept],
) -> Result<Tensor, NumError> {
    let mut tape = Tape::new();
    let nodes = model.params.feed(&mut tape);
    let (feats, down) = concept_inputs(&mut tape, concepts, layout.cells(), model.n);
    let labels = down_labels_of(concepts, layout.cells());
    let out = decode_graph(&mut tape, &nodes, layout, &feats, &down, &labels)?;
    Ok(tape.value(out.fused).clone())
}

/// Local reconstruction only.
pub fn local_generate(
    model: &GeneratorModel,
    layout: &Layout,
    concepts: &[SemanticConcept],
) -> Result<Tensor, NumError> {
    let mut tape = Tape::new();
    let nodes = model.params.feed(&mut tape);
    let (feats, down) = concept_inputs(&mut tape, concepts, layout.cells(), model.n);
    let labels = down_labels_of(concepts, layout.cells());
    let out = decode_graph(&mut tape, &nodes, layout, &feats, &down, &labels)?;
    Ok(tape.value(out.local).clone())
}

/// Global reconstruction only.
pub fn global_generate(
    model: &GeneratorModel,
    layout: &Layout,
    concepts: &[SemanticConcept],
) -> Result<Tensor, NumError> {
    let mut tape = Tape::new();
    let nodes = model.params.feed(&mut tape);
    let (feats, down) = concept_inputs(&mut tape, concepts, layout.cells(), model.n);
    let labels = down_labels_of(concepts, layout.cells());
    let out = decode_graph(&mut tape, &nodes, layout, &feats, &down, &labels)?;
    Ok(tape.value(out.global).clone())
}
