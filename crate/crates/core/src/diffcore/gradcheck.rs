use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, Matrix, NodeId, OpKind, ParamStore};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct FdOptions {
    pub h: f64,
    pub tolerance: f64,
    /// Entries sampled per parameter tensor (all entries if the tensor is smaller).
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tolerance: 1e-3,
            samples_per_param: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub label: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Entries outside `tolerance` whose discrepancy is within the
    /// round-off bound of the central difference. Counted, not failed.
    pub unresolved: usize,
    pub failures: Vec<FdEntry>,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Round-off bound of a central difference of a loss near `loss`: a few
/// ulps of error in each evaluation, divided by the step.
pub fn central_difference_noise(loss: f64, h: f64) -> f64 {
    4.0 * f64::EPSILON * loss.abs() / h
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares backward-pass gradients with central differences on sampled
/// parameter entries. `build` must construct the same scalar-rooted graph
/// each time it is called.
pub fn finite_difference_check<F>(label: &str, params: &mut ParamStore, build: F, opts: &FdOptions) -> Result<FdReport>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId>,
{
    finite_difference_check_with(label, params, build, opts, None)
}

pub(crate) fn finite_difference_check_with<F>(
    label: &str,
    params: &mut ParamStore,
    build: F,
    opts: &FdOptions,
    corrupt: Option<OpKind>,
) -> Result<FdReport>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId>,
{
    let analytic = {
        let mut g = Graph::new(params);
        if let Some(k) = corrupt {
            g.corrupt_rule(k);
        }
        let root = build(&mut g)?;
        g.backward(root)?
    };
    let eval = |params: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(params);
        let root = build(&mut g)?;
        Ok(g.evaluate(root).get(0, 0))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = FdReport {
        label: label.to_string(),
        checked: 0,
        max_rel_error: 0.0,
        tolerance: opts.tolerance,
        unresolved: 0,
        failures: Vec::new(),
    };
    let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
    for id in ids {
        let len = params.value(id).len();
        let picks: Vec<usize> = if len <= opts.samples_per_param {
            (0..len).collect()
        } else {
            rand::seq::index::sample(&mut rng, len, opts.samples_per_param).into_vec()
        };
        for idx in picks {
            let a = analytic.get(id).map_or(0.0, |g| g.data()[idx]);
            let orig = params.value(id).data()[idx];
            params.get_mut(id).value.data_mut()[idx] = orig + opts.h;
            let up = eval(params)?;
            params.get_mut(id).value.data_mut()[idx] = orig - opts.h;
            let down = eval(params)?;
            params.get_mut(id).value.data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * opts.h);
            let rel = relative_error(a, numeric);
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(rel);
            if rel <= opts.tolerance {
                continue;
            }
            if (a - numeric).abs() <= central_difference_noise(up.abs().max(down.abs()), opts.h) {
                report.unresolved += 1;
            } else {
                report.failures.push(FdEntry {
                    param: params.get(id).name.clone(),
                    index: idx,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    Ok(report)
}

/// Op kinds with a backward rule that the per-op suite exercises.
pub const DIFFERENTIABLE_OPS: [OpKind; 11] = [
    OpKind::ParamRows,
    OpKind::MatMul,
    OpKind::AddBias,
    OpKind::Sigmoid,
    OpKind::Mul,
    OpKind::Sub,
    OpKind::Mask,
    OpKind::ConcatRows,
    OpKind::Exp,
    OpKind::Ln,
    OpKind::BceLoss,
];

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

/// Builds a random instance exercising `kind`, reduced to a scalar through a
/// random weighting, and runs [`finite_difference_check`] on it. `corrupt`
/// scales the backward rule of `kind` to exercise the checker itself.
pub fn check_op_kind(kind: OpKind, seed: u64, opts: &FdOptions, corrupt: bool) -> Result<FdReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let r = rng.random_range(1..=4);
    let c = rng.random_range(1..=4);
    let k = rng.random_range(1..=4);
    let mut store = ParamStore::new();

    // The reduction weights are constants captured by the builder.
    let a = store.add("a", uniform(&mut rng, r, c, -2.0, 2.0), false);
    let (b, out_rows, out_cols) = match kind {
        OpKind::MatMul => (store.add("b", uniform(&mut rng, c, k, -2.0, 2.0), false), r, k),
        OpKind::AddBias => (store.add("b", uniform(&mut rng, 1, c, -2.0, 2.0), false), r, c),
        OpKind::Mul if rng.random_bool(0.5) => (store.add("b", uniform(&mut rng, r, 1, -2.0, 2.0), false), r, c),
        OpKind::Mul | OpKind::Sub => (store.add("b", uniform(&mut rng, r, c, -2.0, 2.0), false), r, c),
        OpKind::ConcatRows => (store.add("b", uniform(&mut rng, k, c, -2.0, 2.0), false), r + k, c),
        OpKind::Ln => {
            store.get_mut(a).value = uniform(&mut rng, r, c, 0.3, 3.0);
            (a, r, c)
        }
        OpKind::BceLoss => (a, 1, 1),
        OpKind::ParamRows => (a, k, c),
        _ => (a, r, c),
    };
    let mut mask = uniform(&mut rng, r, c, 0.0, 1.0).map(|v| if v < 0.5 { 0.0 } else { 1.0 });
    mask.set(0, 0, 1.0);
    let gather: Vec<usize> = (0..k).map(|_| rng.random_range(0..r)).collect();
    let targets: Vec<f64> = (0..r).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let bce_col = uniform(&mut rng, c, 1, -1.0, 1.0);
    let weights = uniform(&mut rng, out_rows, out_cols, -1.0, 1.0);

    let build = |g: &mut Graph<'_>| -> Result<NodeId> {
        let an = g.param(a);
        let out = match kind {
            OpKind::ParamRows => g.param_rows(a, &gather),
            OpKind::MatMul => {
                let bn = g.param(b);
                g.matmul(an, bn)?
            }
            OpKind::AddBias => {
                let bn = g.param(b);
                g.add_bias(an, bn)?
            }
            OpKind::Sigmoid => g.sigmoid(an),
            OpKind::Mul => {
                let bn = g.param(b);
                g.mul(an, bn)?
            }
            OpKind::Sub => {
                let bn = g.param(b);
                g.sub(an, bn)?
            }
            OpKind::Mask => g.mask(an, mask.clone())?,
            OpKind::ConcatRows => {
                let bn = g.param(b);
                g.concat_rows(&[an, bn])?
            }
            OpKind::Exp => g.exp(an),
            OpKind::Ln => g.ln(an),
            OpKind::BceLoss => {
                let w = g.constant(bce_col.clone());
                let z = g.matmul(an, w)?;
                let y = g.sigmoid(z);
                return g.bce_loss(y, &targets);
            }
            OpKind::Param | OpKind::Const => an,
        };
        weighted_sum(g, out, &weights)
    };
    let label = format!("{kind} (seed {seed})");
    let corrupt = corrupt.then_some(kind);
    finite_difference_check_with(&label, &mut store, build, opts, corrupt)
}

/// `sum(x .* w)` as a 1x1 node, built from mask + matmul.
fn weighted_sum(g: &mut Graph<'_>, x: NodeId, w: &Matrix) -> Result<NodeId> {
    let (rows, cols) = w.shape();
    let weighted = g.mask(x, w.clone())?;
    let left = g.constant(Matrix::filled(1, rows, 1.0));
    let right = g.constant(Matrix::filled(cols, 1, 1.0));
    let row = g.matmul(left, weighted)?;
    g.matmul(row, right)
}
