use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{CdmError, Result};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub step: u64,
}

impl AdamState {
    fn fresh(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            step: 0,
        }
    }
}

/// A learnable matrix with its optimizer state. Constrained tensors are kept
/// element-wise non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub value: Matrix,
    pub constrained: bool,
    pub adam: AdamState,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, mut value: Matrix, constrained: bool) -> Self {
        if constrained {
            project_nonnegative(&mut value);
        }
        let adam = AdamState::fresh(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            constrained,
            adam,
        }
    }
}

/// Every entry below zero is replaced by zero.
pub fn project_nonnegative(m: &mut Matrix) {
    for v in m.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// One bias-corrected Adam update, followed by the non-negativity
/// projection when the tensor is constrained.
pub fn adam_step(param: &mut ParamTensor, grad: &Matrix, cfg: &AdamConfig) -> Result<()> {
    if grad.shape() != param.value.shape() {
        return Err(CdmError::dim(
            "adam_step",
            format!(
                "gradient {:?} for `{}` of shape {:?}",
                grad.shape(),
                param.name,
                param.value.shape()
            ),
        ));
    }
    if let Some(pos) = grad.data().iter().position(|g| !g.is_finite()) {
        return Err(CdmError::NonFinite {
            what: "gradient",
            detail: format!("`{}` entry {pos} = {}", param.name, grad.data()[pos]),
        });
    }
    let state = &mut param.adam;
    state.step += 1;
    let t = state.step as i32;
    let inv_bc1 = 1.0 / (1.0 - cfg.beta1.powi(t));
    let inv_bc2 = 1.0 / (1.0 - cfg.beta2.powi(t));
    let values = param.value.data_mut();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (((p, m), v), &g) in values.iter_mut().zip(m).zip(v).zip(grad.data()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m * inv_bc1;
        let v_hat = *v * inv_bc2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    if param.constrained {
        project_nonnegative(&mut param.value);
    }
    Ok(())
}

/// Xavier (Glorot) normal draw: N(0, 2 / (fan_in + fan_out)).
pub fn xavier_normal<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let std = (2.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite positive std");
    let data = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("shape matches length")
}

/// Seeded Xavier normal initialisation of a `fan_in x fan_out` matrix.
pub fn xavier_normal_init(fan_in: usize, fan_out: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    xavier_normal(fan_in, fan_out, &mut rng)
}

/// All learnable tensors of one model, addressed by [`ParamId`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<ParamTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix, constrained: bool) -> ParamId {
        self.params.push(ParamTensor::new(name, value, constrained));
        ParamId(self.params.len() - 1)
    }

    pub fn push(&mut self, tensor: ParamTensor) -> ParamId {
        self.params.push(tensor);
        ParamId(self.params.len() - 1)
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &ParamTensor {
        &self.params[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor {
        &mut self.params[id.0]
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamTensor)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Applies one Adam step to every tensor that received a gradient.
    pub fn apply_adam(&mut self, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
        for (i, g) in grads.slots.iter().enumerate() {
            if let Some(g) = g {
                adam_step(&mut self.params[i], g, cfg)?;
            }
        }
        Ok(())
    }

    /// Copies of every value tensor, for best-epoch snapshots.
    pub fn snapshot(&self) -> Vec<Matrix> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: Vec<Matrix>) {
        debug_assert_eq!(snapshot.len(), self.params.len());
        for (p, v) in self.params.iter_mut().zip(snapshot) {
            p.value = v;
        }
    }

    /// Smallest entry over all constrained tensors (`+inf` if none).
    pub fn constrained_min(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| p.constrained)
            .map(|p| p.value.min_value())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Gradients produced by one backward pass, one optional slot per parameter.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub(crate) slots: Vec<Option<Matrix>>,
}

impl Gradients {
    pub(crate) fn new(n: usize) -> Self {
        Self { slots: vec![None; n] }
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, shape: (usize, usize), f: impl FnOnce(&mut Matrix)) {
        let slot = &mut self.slots[id.0];
        let g = slot.get_or_insert_with(|| Matrix::zeros(shape.0, shape.1));
        f(g);
    }

    /// Adds `grad` into a slot, taking ownership when the slot is empty.
    pub(crate) fn add_owned(&mut self, id: ParamId, grad: Matrix) {
        match &mut self.slots[id.0] {
            Some(acc) => acc.add_assign(&grad),
            slot => *slot = Some(grad),
        }
    }

    /// Overwrites one slot; used by tests that inject gradients.
    pub fn set(&mut self, id: ParamId, grad: Matrix) {
        self.slots[id.0] = Some(grad);
    }

    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            slots: store
                .params
                .iter()
                .map(|p| Some(Matrix::zeros(p.value.rows(), p.value.cols())))
                .collect(),
        }
    }
}
