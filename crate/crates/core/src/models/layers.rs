use rand::Rng;

use crate::diffcore::{xavier_normal, Graph, Matrix, NodeId, ParamId, ParamStore};
use crate::error::Result;

/// Weight (`fan_in x fan_out`) and bias (`1 x fan_out`) of an affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        constrained: bool,
    ) -> Self {
        let w = store.add(format!("{name}.w"), xavier_normal(fan_in, fan_out, rng), constrained);
        let b = store.add(format!("{name}.b"), Matrix::zeros(1, fan_out), false);
        Self { w, b }
    }

    /// `sigmoid(x W + b)`.
    pub fn sigmoid(&self, g: &mut Graph<'_>, x: NodeId) -> Result<NodeId> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let z = g.matmul(x, w)?;
        let z = g.add_bias(z, b)?;
        Ok(g.sigmoid(z))
    }
}

/// One-hot `rows.len() x count` matrix selecting `positions[r]` for row `r`.
pub(crate) fn selection(positions: &[usize], count: usize) -> Matrix {
    let mut m = Matrix::zeros(positions.len(), count);
    for (r, &p) in positions.iter().enumerate() {
        m.set(r, p, 1.0);
    }
    m
}

/// Unique ids in first-appearance order plus, for every input, its position
/// in the unique list.
pub(crate) fn dedup(ids: impl Iterator<Item = usize>) -> (Vec<usize>, Vec<usize>) {
    let mut uniq = Vec::new();
    let mut pos_of = std::collections::HashMap::new();
    let positions = ids
        .map(|id| {
            *pos_of.entry(id).or_insert_with(|| {
                uniq.push(id);
                uniq.len() - 1
            })
        })
        .collect();
    (uniq, positions)
}
