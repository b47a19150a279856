use super::rng::RngStream;
use super::tape::{Gradients, NodeId, Tape};
use super::tensor::{NumError, Scalar, Tensor};

/// Named parameter tensors with matching gradient slots.
///
/// `version` is bumped on every update so that consumers holding stale
/// derived quantities (e.g. trajectory log-probs) can detect the change.
#[derive(Debug, Clone)]
pub struct ParamBlock<T> {
    entries: Vec<(String, Tensor<T>, Tensor<T>)>,
    version: u64,
}

impl<T: Scalar> Default for ParamBlock<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamBlock<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), version: 0 }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) {
        let grad = Tensor::zeros(value.shape().to_vec());
        match self.entries.iter_mut().find(|(n, _, _)| n == name) {
            Some(e) => {
                e.1 = value;
                e.2 = grad;
            }
            None => self.entries.push((name.to_string(), value, grad)),
        }
    }

    /// Seeded Gaussian initialization with the given standard deviation.
    pub fn insert_randn(&mut self, name: &str, shape: Vec<usize>, std: f64, rng: &mut RngStream) {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64(rng.normal() * std).unwrap())
            .collect();
        self.insert(name, Tensor::new(shape, data).expect("randn init"));
    }

    pub fn insert_zeros(&mut self, name: &str, shape: Vec<usize>) {
        self.insert(name, Tensor::zeros(shape));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _, _)| n == name).map(|(_, v, _)| v)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _, _)| n == name).map(|(_, _, g)| g)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, v, _)| (n.as_str(), v))
    }

    /// Feed all parameters into a tape; returns node ids in entry order.
    pub fn feed(&self, tape: &mut Tape<T>) -> ParamNodes {
        let ids = self
            .entries
            .iter()
            .map(|(n, v, _)| (n.clone(), tape.input(v.clone())))
            .collect();
        ParamNodes { ids }
    }

    pub fn zero_grads(&mut self) {
        for (_, v, g) in &mut self.entries {
            *g = Tensor::zeros(v.shape().to_vec());
        }
    }

    /// Accumulate tape gradients into the matching slots.
    pub fn accumulate_grads(
        &mut self,
        nodes: &ParamNodes,
        grads: &Gradients<T>,
    ) -> Result<(), NumError> {
        for (name, id) in &nodes.ids {
            if let Some(g) = &grads[id.index()] {
                let entry = self
                    .entries
                    .iter_mut()
                    .find(|(n, _, _)| n == name)
                    .ok_or_else(|| NumError::Invalid(format!("unknown parameter {name}")))?;
                entry.2 = entry.2.add(g)?;
            }
        }
        Ok(())
    }

    /// theta <- theta + step_scale * grad-slot (gradient ascent when
    /// step_scale > 0, descent when negative). Bumps the version.
    pub fn apply_step(&mut self, step_scale: T) -> Result<(), NumError> {
        for (_, v, g) in &mut self.entries {
            *v = v.add(&g.scale(step_scale))?;
        }
        self.version += 1;
        Ok(())
    }

    pub fn bump_version(&mut self) {
        self.version += 1;
    }
}

/// Tape node ids of a fed parameter block.
#[derive(Debug, Clone)]
pub struct ParamNodes {
    ids: Vec<(String, NodeId)>,
}

impl ParamNodes {
    pub fn id(&self, name: &str) -> NodeId {
        self.ids
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .unwrap_or_else(|| panic!("parameter {name} was not fed to the tape"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.ids.iter().map(|(n, id)| (n.as_str(), *id))
    }
}

/// ADAM moment buffers for one parameter block.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamBlock<T>, beta1: T, beta2: T) -> Self {
        let m = params
            .entries
            .iter()
            .map(|(_, p, _)| Tensor::zeros(p.shape().to_vec()))
            .collect::<Vec<_>>();
        let v = m.clone();
        Self { m, v, t: 0, beta1, beta2, eps: T::from_f64(1e-8).unwrap() }
    }

    /// One descent step using the gradients currently accumulated in the
    /// block's gradient slots.
    pub fn step(&mut self, params: &mut ParamBlock<T>, lr: T) -> Result<(), NumError> {
        self.t += 1;
        let bc1 = T::one() - self.beta1.powi(self.t as i32);
        let bc2 = T::one() - self.beta2.powi(self.t as i32);
        for (i, (_, p, g)) in params.entries.iter_mut().enumerate() {
            self.m[i] = self.m[i]
                .scale(self.beta1)
                .add(&g.scale(T::one() - self.beta1))?;
            self.v[i] = self.v[i]
                .scale(self.beta2)
                .add(&g.mul(g)?.scale(T::one() - self.beta2))?;
            let mhat = self.m[i].scale(bc1.recip());
            let vhat = self.v[i].scale(bc2.recip());
            let upd = mhat.zip_map(&vhat, |m, v| m / (v.sqrt() + self.eps))?;
            *p = p.sub(&upd.scale(lr))?;
        }
        params.version += 1;
        Ok(())
    }
}
