//! Transductive baselines: every learner and question owns free parameters
//! fitted to the observed logs.

use rand::Rng;

use super::layers::Linear;
use super::{Dims, ModelConfig};
use crate::diffcore::{sigmoid, xavier_normal, Graph, Matrix, NodeId, ParamId, ParamStore};
use crate::error::{CdmError, Result};

/// 2PL item response: `sigmoid(a (theta - b))`.
pub fn irt_predict(theta: f64, a: f64, b: f64) -> f64 {
    sigmoid(a * (theta - b))
}

/// Compensatory multidimensional IRT: `sigmoid(a . theta - b)`.
pub fn mirt_predict(theta: &[f64], a: &[f64], b: f64) -> Result<f64> {
    if theta.len() != a.len() {
        return Err(CdmError::dim(
            "mirt_predict",
            format!("theta has {} entries, a has {}", theta.len(), a.len()),
        ));
    }
    let z: f64 = theta.iter().zip(a).map(|(t, a)| t * a).sum();
    Ok(sigmoid(z - b))
}

/// Soft DINA: `eta = prod_k mastery_k^q_k`, `P = (1 - s)^eta g^(1 - eta)`.
pub fn dina_predict(mastery: &[f64], q: &[f64], guess: f64, slip: f64) -> Result<f64> {
    if mastery.len() != q.len() {
        return Err(CdmError::dim(
            "dina_predict",
            format!("mastery has {} entries, q has {}", mastery.len(), q.len()),
        ));
    }
    let log_eta: f64 = mastery.iter().zip(q).map(|(m, q)| q * m.ln()).sum();
    let eta = log_eta.exp();
    Ok((eta * (1.0 - slip).ln() + (1.0 - eta) * guess.ln()).exp())
}

#[derive(Debug, Clone)]
pub(crate) struct NcdmArch {
    pub traits: ParamId,
    pub difficulty: ParamId,
    pub discrimination: ParamId,
    pub mlp: [Linear; 3],
}

impl NcdmArch {
    /// `constant` replaces the Xavier draw of the diagnostic embeddings
    /// (traits, difficulty, discrimination) by a fixed pre-sigmoid value.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        dims: Dims,
        cfg: &ModelConfig,
        constant: Option<f64>,
    ) -> Self {
        let (n, m, k) = (dims.learners, dims.questions, dims.concepts);
        let emb = |rows, cols, rng: &mut R| match constant {
            Some(c) => Matrix::filled(rows, cols, c),
            None => xavier_normal(rows, cols, rng),
        };
        let t = emb(n, k, rng);
        let d = emb(m, k, rng);
        let e = emb(m, 1, rng);
        Self {
            traits: store.add("traits", t, false),
            difficulty: store.add("difficulty", d, false),
            discrimination: store.add("discrimination", e, false),
            mlp: [
                Linear::new(store, rng, "interaction.0", k, cfg.ncdm_hidden1, true),
                Linear::new(store, rng, "interaction.1", cfg.ncdm_hidden1, cfg.ncdm_hidden2, true),
                Linear::new(store, rng, "interaction.2", cfg.ncdm_hidden2, 1, true),
            ],
        }
    }

    pub fn learner_repr(&self, g: &mut Graph<'_>, rows: &[usize]) -> Vec<NodeId> {
        let t = g.param_rows(self.traits, rows);
        vec![g.sigmoid(t)]
    }

    pub fn question_repr(&self, g: &mut Graph<'_>, rows: &[usize]) -> Vec<NodeId> {
        let d = g.param_rows(self.difficulty, rows);
        let e = g.param_rows(self.discrimination, rows);
        vec![g.sigmoid(d), g.sigmoid(e)]
    }

    /// `x = disc * (traits - difficulty) .* q` through the non-negative MLP.
    pub fn head(
        &self,
        g: &mut Graph<'_>,
        traits: NodeId,
        difficulty: NodeId,
        disc: NodeId,
        q: Matrix,
    ) -> Result<NodeId> {
        let gap = g.sub(traits, difficulty)?;
        let scaled = g.mul(gap, disc)?;
        let x = g.mask(scaled, q)?;
        let h1 = self.mlp[0].sigmoid(g, x)?;
        let h2 = self.mlp[1].sigmoid(g, h1)?;
        self.mlp[2].sigmoid(g, h2)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct IrtArch {
    pub theta: ParamId,
    /// log-discrimination, so that `a = exp(.) > 0`
    pub log_a: ParamId,
    pub b: ParamId,
}

impl IrtArch {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, dims: Dims) -> Self {
        Self {
            theta: store.add("theta", xavier_normal(dims.learners, 1, rng), false),
            log_a: store.add("log_a", xavier_normal(dims.questions, 1, rng), false),
            b: store.add("b", xavier_normal(dims.questions, 1, rng), false),
        }
    }

    pub fn learner_repr(&self, g: &mut Graph<'_>, rows: &[usize]) -> Vec<NodeId> {
        vec![g.param_rows(self.theta, rows)]
    }

    pub fn question_repr(&self, g: &mut Graph<'_>, rows: &[usize]) -> Vec<NodeId> {
        let la = g.param_rows(self.log_a, rows);
        let a = g.exp(la);
        let b = g.param_rows(self.b, rows);
        vec![a, b]
    }

    pub fn head(&self, g: &mut Graph<'_>, theta: NodeId, a: NodeId, b: NodeId) -> Result<NodeId> {
        let gap = g.sub(theta, b)?;
        let z = g.mul(gap, a)?;
        Ok(g.sigmoid(z))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct MirtArch {
    pub theta: ParamId,
    pub a: ParamId,
    pub b: ParamId,
    pub dim: usize,
}

impl MirtArch {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, dims: Dims, cfg: &ModelConfig) -> Self {
        let d = cfg.mirt_dim;
        Self {
            theta: store.add("theta", xavier_normal(dims.learners, d, rng), false),
            a: store.add("a", xavier_normal(dims.questions, d, rng), false),
            b: store.add("b", xavier_normal(dims.questions, 1, rng), false),
            dim: d,
        }
    }

    pub fn learner_repr(&self, g: &mut Graph<'_>, rows: &[usize]) -> Vec<NodeId> {
        vec![g.param_rows(self.theta, rows)]
    }

    pub fn question_repr(&self, g: &mut Graph<'_>, rows: &[usize]) -> Vec<NodeId> {
        vec![g.param_rows(self.a, rows), g.param_rows(self.b, rows)]
    }

    pub fn head(&self, g: &mut Graph<'_>, theta: NodeId, a: NodeId, b: NodeId) -> Result<NodeId> {
        let prod = g.mul(theta, a)?;
        let ones = g.constant(Matrix::filled(self.dim, 1, 1.0));
        let dot = g.matmul(prod, ones)?;
        let z = g.sub(dot, b)?;
        Ok(g.sigmoid(z))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct DinaArch {
    pub mastery: ParamId,
    pub guess: ParamId,
    pub slip: ParamId,
}

impl DinaArch {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, dims: Dims) -> Self {
        Self {
            mastery: store.add("mastery", xavier_normal(dims.learners, dims.concepts, rng), false),
            guess: store.add("guess", xavier_normal(dims.questions, 1, rng), false),
            slip: store.add("slip", xavier_normal(dims.questions, 1, rng), false),
        }
    }

    pub fn learner_repr(&self, g: &mut Graph<'_>, rows: &[usize]) -> Vec<NodeId> {
        let m = g.param_rows(self.mastery, rows);
        vec![g.sigmoid(m)]
    }

    pub fn question_repr(&self, g: &mut Graph<'_>, rows: &[usize]) -> Vec<NodeId> {
        let gl = g.param_rows(self.guess, rows);
        let sl = g.param_rows(self.slip, rows);
        vec![g.sigmoid(gl), g.sigmoid(sl)]
    }

    /// `P = g * exp(eta * (ln(1 - s) - ln g))`, i.e. `(1 - s)^eta g^(1 - eta)`.
    pub fn head(&self, g: &mut Graph<'_>, mastery: NodeId, guess: NodeId, slip: NodeId, q: Matrix) -> Result<NodeId> {
        let rows = q.rows();
        let k = q.cols();
        let ln_m = g.ln(mastery);
        let masked = g.mask(ln_m, q)?;
        let ones_k = g.constant(Matrix::filled(k, 1, 1.0));
        let log_eta = g.matmul(masked, ones_k)?;
        let eta = g.exp(log_eta);
        let ones = g.constant(Matrix::filled(rows, 1, 1.0));
        let keep = g.sub(ones, slip)?;
        let ln_keep = g.ln(keep);
        let ln_guess = g.ln(guess);
        let gap = g.sub(ln_keep, ln_guess)?;
        let scaled = g.mul(eta, gap)?;
        let lift = g.exp(scaled);
        g.mul(guess, lift)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn irt_reference_points() {
        assert_eq!(irt_predict(0.3, 1.7, 0.3), 0.5);
        assert_abs_diff_eq!(irt_predict(3f64.ln() + 0.5, 1.0, 0.5), 0.75, epsilon = 1e-12);
        for (t, b) in [(-3.0, 1.0), (2.0, -1.0), (0.0, 0.0)] {
            assert_eq!(irt_predict(t, 0.0, b), 0.5);
        }
    }

    #[test]
    fn mirt_reference_points() {
        let zero = vec![0.0; 16];
        let a: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
        assert_eq!(mirt_predict(&zero, &a, 0.0).unwrap(), 0.5);
        let mut theta = vec![0.0; 16];
        theta[0] = 3f64.ln();
        let mut unit = vec![0.0; 16];
        unit[0] = 1.0;
        assert_abs_diff_eq!(mirt_predict(&theta, &unit, 0.0).unwrap(), 0.75, epsilon = 1e-12);
        assert!(mirt_predict(&zero, &a[..15], 0.0).is_err());
    }

    #[test]
    fn dina_reference_points() {
        assert_abs_diff_eq!(
            dina_predict(&[1.0, 1.0], &[1.0, 1.0], 0.2, 0.1).unwrap(),
            0.9,
            epsilon = 1e-12
        );
        // eta = 0 needs a mastery of 0 on a required concept
        assert_abs_diff_eq!(
            dina_predict(&[0.0, 1.0], &[1.0, 0.0], 0.2, 0.1).unwrap(),
            0.2,
            epsilon = 1e-12
        );
        let p = dina_predict(&[0.5, 1.0], &[1.0, 1.0], 0.2, 0.1).unwrap();
        assert_abs_diff_eq!(p, (0.5 * 0.9f64.ln() + 0.5 * 0.2f64.ln()).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(p, 0.4243, epsilon = 1e-4);
    }
}
