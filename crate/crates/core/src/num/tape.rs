use std::rc::Rc;

use super::tensor::{NumError, Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Add,
    Sub,
    Mul,
    Scale(T),
    AddConst(T),
    Matmul,
    LeakyRelu(T),
    Relu,
    Exp,
    Log,
    Abs,
    SoftmaxRows,
    NormRows(T),
    Sum,
    Mean,
    MeanRows,
    MaxRows,
    Gather { indices: Rc<Vec<usize>> },
    Concat,
    Reshape,
    SoftQuant { centers: Rc<Vec<T>>, sigma: T },
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    inputs: Vec<NodeId>,
    value: Tensor<T>,
}

/// Define-by-run reverse-mode tape. Values are computed eagerly when an
/// op is recorded; `backward` replays the tape to accumulate gradients.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Per-node gradients returned by [`Tape::backward`].
pub type Gradients<T> = Vec<Option<Tensor<T>>>;

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, inputs: Vec<NodeId>, value: Tensor<T>) -> Result<NodeId, NumError> {
        if !value.all_finite() {
            return Err(NumError::NonFinite { op: op_name(&op) });
        }
        self.nodes.push(Node { op, inputs, value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node { op: Op::Input, inputs: vec![], value });
        NodeId(self.nodes.len() - 1)
    }

    /// Non-differentiable constant; identical to `input` but reads better
    /// at call sites that feed side information.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.input(value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let v = self.value(a).add(self.value(b))?;
        self.push(Op::Add, vec![a, b], v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let v = self.value(a).sub(self.value(b))?;
        self.push(Op::Sub, vec![a, b], v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let v = self.value(a).mul(self.value(b))?;
        self.push(Op::Mul, vec![a, b], v)
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId, NumError> {
        let v = self.value(a).scale(c);
        self.push(Op::Scale(c), vec![a], v)
    }

    pub fn add_const(&mut self, a: NodeId, c: T) -> Result<NodeId, NumError> {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddConst(c), vec![a], v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(Op::Matmul, vec![a, b], v)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: T) -> Result<NodeId, NumError> {
        let v = self.value(a).map(|x| if x >= T::zero() { x } else { slope * x });
        self.push(Op::LeakyRelu(slope), vec![a], v)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, NumError> {
        let v = self.value(a).map(|x| if x >= T::zero() { x } else { T::zero() });
        self.push(Op::Relu, vec![a], v)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId, NumError> {
        let v = self.value(a).map(|x| x.exp());
        self.push(Op::Exp, vec![a], v)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId, NumError> {
        let v = self.value(a).map(|x| x.ln());
        self.push(Op::Log, vec![a], v)
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId, NumError> {
        let v = self.value(a).map(|x| x.abs());
        self.push(Op::Abs, vec![a], v)
    }

    /// Row-wise numerically stable softmax over the last axis.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId, NumError> {
        let x = self.value(a);
        let (r, c) = x.rows_cols();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            let row = &x.data()[i * c..(i + 1) * c];
            softmax_into(row, &mut out[i * c..(i + 1) * c]);
        }
        let v = Tensor::new(x.shape().to_vec(), out)?;
        self.push(Op::SoftmaxRows, vec![a], v)
    }

    /// Row-wise normalization to zero mean, unit variance.
    pub fn norm_rows(&mut self, a: NodeId, eps: T) -> Result<NodeId, NumError> {
        let x = self.value(a);
        let (r, c) = x.rows_cols();
        let nf = T::from_usize(c).unwrap();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            let row = &x.data()[i * c..(i + 1) * c];
            let mu = row.iter().fold(T::zero(), |s, &v| s + v) / nf;
            let var = row.iter().fold(T::zero(), |s, &v| s + (v - mu) * (v - mu)) / nf;
            let inv = (var + eps).sqrt().recip();
            for j in 0..c {
                out[i * c + j] = (row[j] - mu) * inv;
            }
        }
        let v = Tensor::new(x.shape().to_vec(), out)?;
        self.push(Op::NormRows(eps), vec![a], v)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, NumError> {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum, vec![a], v)
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, NumError> {
        let x = self.value(a);
        let n = T::from_usize(x.len()).unwrap();
        let v = Tensor::scalar(x.sum() / n);
        self.push(Op::Mean, vec![a], v)
    }

    /// Mean over the last axis: [r, c] -> [r].
    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId, NumError> {
        let x = self.value(a);
        let (r, c) = x.rows_cols();
        let nf = T::from_usize(c).unwrap();
        let out = (0..r)
            .map(|i| x.data()[i * c..(i + 1) * c].iter().fold(T::zero(), |s, &v| s + v) / nf)
            .collect();
        let v = Tensor::new(vec![r], out)?;
        self.push(Op::MeanRows, vec![a], v)
    }

    /// Max over the last axis: [r, c] -> [r]. Ties route gradient to the
    /// first maximal entry.
    pub fn max_rows(&mut self, a: NodeId) -> Result<NodeId, NumError> {
        let x = self.value(a);
        let (r, c) = x.rows_cols();
        let out = (0..r)
            .map(|i| {
                x.data()[i * c..(i + 1) * c]
                    .iter()
                    .cloned()
                    .fold(T::neg_infinity(), T::max)
            })
            .collect();
        let v = Tensor::new(vec![r], out)?;
        self.push(Op::MaxRows, vec![a], v)
    }

    /// out[i] = in[indices[i]]; backward scatter-adds.
    pub fn gather(
        &mut self,
        a: NodeId,
        indices: Rc<Vec<usize>>,
        shape: Vec<usize>,
    ) -> Result<NodeId, NumError> {
        let x = self.value(a);
        let n: usize = shape.iter().product();
        if n != indices.len() {
            return Err(NumError::BadLength { len: indices.len(), shape });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= x.len()) {
            return Err(NumError::Invalid(format!(
                "gather index {bad} out of bounds for length {}",
                x.len()
            )));
        }
        let out = indices.iter().map(|&i| x.data()[i]).collect();
        let v = Tensor::new(shape.clone(), out)?;
        self.push(Op::Gather { indices }, vec![a], v)
    }

    /// Flat concatenation of several nodes into a 1-D tensor.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, NumError> {
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let v = Tensor::from_vec(data);
        self.push(Op::Concat, parts.to_vec(), v)
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId, NumError> {
        let v = self.value(a).reshape(shape)?;
        self.push(Op::Reshape, vec![a], v)
    }

    /// Differentiable scalar quantization against `centers`.
    ///
    /// `hard_forward = false`: forward is the softmax-weighted average of
    /// centers (soft quantization). `hard_forward = true`: forward is the
    /// nearest-center assignment of the clipped input while the backward
    /// pass keeps the soft Jacobian (straight-through pairing).
    pub fn soft_quant(
        &mut self,
        a: NodeId,
        centers: Rc<Vec<T>>,
        sigma: T,
        hard_forward: bool,
    ) -> Result<NodeId, NumError> {
        let x = self.value(a);
        let out: Vec<T> = if hard_forward {
            x.data().iter().map(|&v| nearest_center(&centers, v)).collect()
        } else {
            x.data().iter().map(|&v| soft_quant_value(&centers, sigma, v)).collect()
        };
        let v = Tensor::new(x.shape().to_vec(), out)?;
        self.push(Op::SoftQuant { centers, sigma }, vec![a], v)
    }

    /// Reverse sweep from a scalar loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>, NumError> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(NumError::NotScalar { shape: lv.shape().to_vec() });
        }
        let mut grads: Gradients<T> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), T::one()));
        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    fn propagate(
        &self,
        node: &Node<T>,
        g: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<(), NumError> {
        let acc = |grads: &mut Gradients<T>, id: NodeId, t: Tensor<T>| -> Result<(), NumError> {
            match &mut grads[id.0] {
                Some(existing) => *existing = existing.add(&t)?,
                slot @ None => *slot = Some(t),
            }
            Ok(())
        };
        match &node.op {
            Op::Input => {}
            Op::Add => {
                acc(grads, node.inputs[0], g.clone())?;
                acc(grads, node.inputs[1], g.clone())?;
            }
            Op::Sub => {
                acc(grads, node.inputs[0], g.clone())?;
                acc(grads, node.inputs[1], g.scale(-T::one()))?;
            }
            Op::Mul => {
                let a = self.value(node.inputs[0]);
                let b = self.value(node.inputs[1]);
                acc(grads, node.inputs[0], g.mul(b)?)?;
                acc(grads, node.inputs[1], g.mul(a)?)?;
            }
            Op::Scale(c) => acc(grads, node.inputs[0], g.scale(*c))?,
            Op::AddConst(_) => acc(grads, node.inputs[0], g.clone())?,
            Op::Matmul => {
                let a = self.value(node.inputs[0]);
                let b = self.value(node.inputs[1]);
                acc(grads, node.inputs[0], matmul_nt(g, b))?;
                acc(grads, node.inputs[1], matmul_tn(a, g))?;
            }
            Op::LeakyRelu(slope) => {
                let x = self.value(node.inputs[0]);
                let d = x
                    .zip_map(g, |xv, gv| if xv >= T::zero() { gv } else { *slope * gv })?;
                acc(grads, node.inputs[0], d)?;
            }
            Op::Relu => {
                let x = self.value(node.inputs[0]);
                let d = x.zip_map(g, |xv, gv| if xv >= T::zero() { gv } else { T::zero() })?;
                acc(grads, node.inputs[0], d)?;
            }
            Op::Exp => {
                let y = &node.value;
                acc(grads, node.inputs[0], g.mul(y)?)?;
            }
            Op::Log => {
                let x = self.value(node.inputs[0]);
                acc(grads, node.inputs[0], g.zip_map(x, |gv, xv| gv / xv)?)?;
            }
            Op::Abs => {
                let x = self.value(node.inputs[0]);
                let d = x.zip_map(g, |xv, gv| {
                    if xv > T::zero() {
                        gv
                    } else if xv < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                })?;
                acc(grads, node.inputs[0], d)?;
            }
            Op::SoftmaxRows => {
                let y = &node.value;
                let (r, c) = y.rows_cols();
                let mut d = vec![T::zero(); r * c];
                for i in 0..r {
                    let yr = &y.data()[i * c..(i + 1) * c];
                    let gr = &g.data()[i * c..(i + 1) * c];
                    let dot = yr
                        .iter()
                        .zip(gr)
                        .fold(T::zero(), |s, (&yv, &gv)| s + yv * gv);
                    for j in 0..c {
                        d[i * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(grads, node.inputs[0], Tensor::new(y.shape().to_vec(), d)?)?;
            }
            Op::NormRows(eps) => {
                let x = self.value(node.inputs[0]);
                let y = &node.value;
                let (r, c) = x.rows_cols();
                let nf = T::from_usize(c).unwrap();
                let mut d = vec![T::zero(); r * c];
                for i in 0..r {
                    let xr = &x.data()[i * c..(i + 1) * c];
                    let yr = &y.data()[i * c..(i + 1) * c];
                    let gr = &g.data()[i * c..(i + 1) * c];
                    let mu = xr.iter().fold(T::zero(), |s, &v| s + v) / nf;
                    let var = xr.iter().fold(T::zero(), |s, &v| s + (v - mu) * (v - mu)) / nf;
                    let inv = (var + *eps).sqrt().recip();
                    let gmean = gr.iter().fold(T::zero(), |s, &v| s + v) / nf;
                    let gy = yr
                        .iter()
                        .zip(gr)
                        .fold(T::zero(), |s, (&yv, &gv)| s + yv * gv)
                        / nf;
                    for j in 0..c {
                        d[i * c + j] = inv * (gr[j] - gmean - yr[j] * gy);
                    }
                }
                acc(grads, node.inputs[0], Tensor::new(x.shape().to_vec(), d)?)?;
            }
            Op::Sum => {
                let x = self.value(node.inputs[0]);
                let gv = g.scalar_value()?;
                acc(grads, node.inputs[0], Tensor::full(x.shape().to_vec(), gv))?;
            }
            Op::Mean => {
                let x = self.value(node.inputs[0]);
                let gv = g.scalar_value()? / T::from_usize(x.len()).unwrap();
                acc(grads, node.inputs[0], Tensor::full(x.shape().to_vec(), gv))?;
            }
            Op::MeanRows => {
                let x = self.value(node.inputs[0]);
                let (r, c) = x.rows_cols();
                let nf = T::from_usize(c).unwrap();
                let mut d = vec![T::zero(); r * c];
                for i in 0..r {
                    let gv = g.data()[i] / nf;
                    for j in 0..c {
                        d[i * c + j] = gv;
                    }
                }
                acc(grads, node.inputs[0], Tensor::new(x.shape().to_vec(), d)?)?;
            }
            Op::MaxRows => {
                let x = self.value(node.inputs[0]);
                let (r, c) = x.rows_cols();
                let mut d = vec![T::zero(); r * c];
                for i in 0..r {
                    let row = &x.data()[i * c..(i + 1) * c];
                    let mut best = 0;
                    for j in 1..c {
                        if row[j] > row[best] {
                            best = j;
                        }
                    }
                    d[i * c + best] = g.data()[i];
                }
                acc(grads, node.inputs[0], Tensor::new(x.shape().to_vec(), d)?)?;
            }
            Op::Gather { indices } => {
                let x = self.value(node.inputs[0]);
                let mut d = vec![T::zero(); x.len()];
                for (o, &src) in indices.iter().enumerate() {
                    d[src] = d[src] + g.data()[o];
                }
                acc(grads, node.inputs[0], Tensor::new(x.shape().to_vec(), d)?)?;
            }
            Op::Concat => {
                let mut offset = 0;
                for &inp in &node.inputs {
                    let x = self.value(inp);
                    let part = g.data()[offset..offset + x.len()].to_vec();
                    offset += x.len();
                    acc(grads, inp, Tensor::new(x.shape().to_vec(), part)?)?;
                }
            }
            Op::Reshape => {
                let x = self.value(node.inputs[0]);
                acc(grads, node.inputs[0], g.reshape(x.shape().to_vec())?)?;
            }
            Op::SoftQuant { centers, sigma } => {
                let x = self.value(node.inputs[0]);
                let d = x.zip_map(g, |xv, gv| gv * soft_quant_deriv(centers, *sigma, xv))?;
                acc(grads, node.inputs[0], d)?;
            }
        }
        Ok(())
    }
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Input => "input",
        Op::Add => "add",
        Op::Sub => "sub",
        Op::Mul => "mul",
        Op::Scale(_) => "scale",
        Op::AddConst(_) => "add_const",
        Op::Matmul => "matmul",
        Op::LeakyRelu(_) => "leaky_relu",
        Op::Relu => "relu",
        Op::Exp => "exp",
        Op::Log => "log",
        Op::Abs => "abs",
        Op::SoftmaxRows => "softmax_rows",
        Op::NormRows(_) => "norm_rows",
        Op::Sum => "sum",
        Op::Mean => "mean",
        Op::MeanRows => "mean_rows",
        Op::MaxRows => "max_rows",
        Op::Gather { .. } => "gather",
        Op::Concat => "concat",
        Op::Reshape => "reshape",
        Op::SoftQuant { .. } => "soft_quant",
    }
}

/// Stable exp-normalize into `out`.
pub fn softmax_into<T: Scalar>(row: &[T], out: &mut [T]) {
    let mx = row.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - mx).exp();
        total = total + *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

/// Nearest center of the clipped input; ties go to the lower index.
pub fn nearest_center<T: Scalar>(centers: &[T], x: T) -> T {
    centers[nearest_center_index(centers, x)]
}

pub fn nearest_center_index<T: Scalar>(centers: &[T], x: T) -> usize {
    let lo = centers[0];
    let hi = centers[centers.len() - 1];
    let xc = x.max(lo).min(hi);
    let mut best = 0;
    let mut best_d = (xc - centers[0]).abs();
    for (i, &c) in centers.iter().enumerate().skip(1) {
        let d = (xc - c).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Softmax-weighted average of centers (soft quantization) at one input.
pub fn soft_quant_value<T: Scalar>(centers: &[T], sigma: T, x: T) -> T {
    let mx = centers
        .iter()
        .map(|&c| -sigma * (x - c).abs())
        .fold(T::neg_infinity(), T::max);
    let mut num = T::zero();
    let mut den = T::zero();
    for &c in centers {
        let w = (-sigma * (x - c).abs() - mx).exp();
        num = num + w * c;
        den = den + w;
    }
    num / den
}

/// Analytic derivative of [`soft_quant_value`] with respect to the input.
pub fn soft_quant_deriv<T: Scalar>(centers: &[T], sigma: T, x: T) -> T {
    let mx = centers
        .iter()
        .map(|&c| -sigma * (x - c).abs())
        .fold(T::neg_infinity(), T::max);
    let mut den = T::zero();
    let mut ws = Vec::with_capacity(centers.len());
    for &c in centers {
        let w = (-sigma * (x - c).abs() - mx).exp();
        ws.push(w);
        den = den + w;
    }
    let mut soft = T::zero();
    let mut dz_mean = T::zero();
    let mut lw_dz = T::zero();
    for (&c, &w) in centers.iter().zip(&ws) {
        let p = w / den;
        let sign = if x > c {
            T::one()
        } else if x < c {
            -T::one()
        } else {
            T::zero()
        };
        let dz = -sigma * sign;
        soft = soft + p * c;
        dz_mean = dz_mean + p * dz;
        lw_dz = lw_dz + p * c * dz;
    }
    lw_dz - soft * dz_mean
}

fn matmul_nt<T: Scalar>(g: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    // g [r, c] * b^T [c, k] -> [r, k]
    let (r, c) = (g.shape()[0], g.shape()[1]);
    let k = b.shape()[0];
    let mut out = vec![T::zero(); r * k];
    for i in 0..r {
        for j in 0..c {
            let gv = g.data()[i * c + j];
            if gv == T::zero() {
                continue;
            }
            for p in 0..k {
                out[i * k + p] = out[i * k + p] + gv * b.data()[p * c + j];
            }
        }
    }
    Tensor::new(vec![r, k], out).expect("matmul_nt")
}

fn matmul_tn<T: Scalar>(a: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    // a^T [k, r] * g [r, c] -> [k, c]
    let (r, k) = (a.shape()[0], a.shape()[1]);
    let c = g.shape()[1];
    let mut out = vec![T::zero(); k * c];
    for i in 0..r {
        for p in 0..k {
            let av = a.data()[i * k + p];
            if av == T::zero() {
                continue;
            }
            for j in 0..c {
                out[p * c + j] = out[p * c + j] + av * g.data()[i * c + j];
            }
        }
    }
    Tensor::new(vec![k, c], out).expect("matmul_tn")
}

#[cfg(test)]
mod tests {
    use super::*;

    type Tape64 = Tape<f64>;
    type T64 = Tensor<f64>;

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let mut tape = Tape64::new();
        let x = tape.input(T64::from_vec(vec![0.0, 0.0, 0.0]));
        let y = tape.softmax_rows(x).unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_stable_under_large_logits() {
        let mut tape = Tape64::new();
        let x = tape.input(T64::from_vec(vec![1000.0, 0.0]));
        let y = tape.softmax_rows(x).unwrap();
        let d = tape.value(y).data();
        assert!(d[0] > 1.0 - 1e-12 && d[1] < 1e-12);
        assert!(d.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_two_logit_value() {
        // Direct evaluation of exp-normalize for [1, 2].
        let mut tape = Tape64::new();
        let x = tape.input(T64::from_vec(vec![1.0, 2.0]));
        let y = tape.softmax_rows(x).unwrap();
        let d = tape.value(y).data();
        assert!((d[0] - 0.26894).abs() < 1e-5);
        assert!((d[1] - 0.73106).abs() < 1e-5);
        assert!((d[0] + d[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_loss_gradient_is_input() {
        // loss = sum(W * x): dW = x broadcast over rows.
        let mut tape = Tape64::new();
        let w = tape.input(T64::new(vec![2, 2], vec![0.5, -0.25, 1.0, 2.0]).unwrap());
        let x = tape.input(T64::new(vec![2, 1], vec![3.0, 4.0]).unwrap());
        let y = tape.matmul(w, x).unwrap();
        let loss = tape.sum(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        let gw = grads[0].as_ref().unwrap();
        assert_eq!(gw.data(), &[3.0, 4.0, 3.0, 4.0]);
    }

    #[test]
    fn constant_loss_zero_gradient() {
        let mut tape = Tape64::new();
        let w = tape.input(T64::from_vec(vec![1.0, 2.0]));
        let x = tape.input(T64::from_vec(vec![3.0, 4.0]));
        let loss = tape.sum(x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads[w.index()].is_none());
    }

    #[test]
    fn leaky_relu_definition() {
        let mut tape = Tape64::new();
        let x = tape.input(T64::from_vec(vec![-1.0, 2.0]));
        let y = tape.leaky_relu(x, 0.2).unwrap();
        assert_eq!(tape.value(y).data(), &[-0.2, 2.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape64::new();
        let x = tape.input(T64::from_vec(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(NumError::NotScalar { .. })));
    }

    #[test]
    fn log_of_zero_rejected() {
        let mut tape = Tape64::new();
        let x = tape.input(T64::from_vec(vec![0.0]));
        assert!(matches!(tape.log(x), Err(NumError::NonFinite { .. })));
    }
}

impl NodeId {
    pub const fn index(self) -> usize {
        self.0
    }
}
