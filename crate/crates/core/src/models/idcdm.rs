//! Inductive diagnosis: learner and question diagnostic networks read
//! response vectors, a masked aggregation plus a three-layer MLP
//! reconstructs scores.

use rand::Rng;

use super::layers::Linear;
use super::{Dims, FitContext, ModelConfig};
use crate::diffcore::{xavier_normal, Graph, Matrix, NodeId, ParamId, ParamStore};
use crate::error::Result;

#[derive(Debug, Clone)]
pub(crate) enum Encoder {
    /// `theta = s(W2 s(W1 x + b1) + b2)` over learner response vectors and
    /// a three-layer counterpart over question response vectors.
    Networks {
        learner: [Linear; 2],
        question: [Linear; 3],
    },
    /// Free per-entity embeddings squashed by a sigmoid (the no-encoder ablation).
    Embeddings { learner: ParamId, question: ParamId },
}

#[derive(Debug, Clone)]
pub(crate) struct IdCdmArch {
    pub encoder: Encoder,
    pub agg_learner: Linear,
    pub agg_question: Linear,
    pub mlp: [Linear; 3],
}

impl IdCdmArch {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        dims: Dims,
        cfg: &ModelConfig,
        monotone: bool,
        encoder: bool,
    ) -> Self {
        let k = dims.concepts;
        let encoder = if encoder {
            Encoder::Networks {
                learner: [
                    Linear::new(
                        store,
                        rng,
                        "learner_diag.0",
                        dims.questions,
                        cfg.learner_hidden,
                        monotone,
                    ),
                    Linear::new(store, rng, "learner_diag.1", cfg.learner_hidden, k, monotone),
                ],
                question: [
                    Linear::new(
                        store,
                        rng,
                        "question_diag.0",
                        dims.learners,
                        cfg.question_hidden1,
                        false,
                    ),
                    Linear::new(
                        store,
                        rng,
                        "question_diag.1",
                        cfg.question_hidden1,
                        cfg.question_hidden2,
                        false,
                    ),
                    Linear::new(store, rng, "question_diag.2", cfg.question_hidden2, k, false),
                ],
            }
        } else {
            Encoder::Embeddings {
                learner: store.add("learner_emb", xavier_normal(dims.learners, k, rng), false),
                question: store.add("question_emb", xavier_normal(dims.questions, k, rng), false),
            }
        };
        let pc = cfg.constrain_predictive;
        Self {
            encoder,
            agg_learner: Linear::new(store, rng, "agg_learner", k, cfg.agg_dim, pc),
            agg_question: Linear::new(store, rng, "agg_question", k, cfg.agg_dim, pc),
            mlp: [
                Linear::new(store, rng, "predict.0", cfg.agg_dim, cfg.pred_hidden1, pc),
                Linear::new(store, rng, "predict.1", cfg.pred_hidden1, cfg.pred_hidden2, pc),
                Linear::new(store, rng, "predict.2", cfg.pred_hidden2, 1, pc),
            ],
        }
    }

    /// Learner diagnostic network applied to a response-vector node.
    pub fn learner_net(&self, g: &mut Graph<'_>, x: NodeId) -> Result<Option<NodeId>> {
        match &self.encoder {
            Encoder::Networks { learner, .. } => {
                let h = learner[0].sigmoid(g, x)?;
                Ok(Some(learner[1].sigmoid(g, h)?))
            }
            Encoder::Embeddings { .. } => Ok(None),
        }
    }

    pub fn question_net(&self, g: &mut Graph<'_>, x: NodeId) -> Result<Option<NodeId>> {
        match &self.encoder {
            Encoder::Networks { question, .. } => {
                let h1 = question[0].sigmoid(g, x)?;
                let h2 = question[1].sigmoid(g, h1)?;
                Ok(Some(question[2].sigmoid(g, h2)?))
            }
            Encoder::Embeddings { .. } => Ok(None),
        }
    }

    pub fn learner_repr(&self, g: &mut Graph<'_>, rows: &[usize], ctx: &FitContext) -> Result<Vec<NodeId>> {
        match &self.encoder {
            Encoder::Networks { .. } => {
                let x = g.constant(ctx.learner_x.select_rows(rows));
                Ok(vec![self.learner_net(g, x)?.expect("networks")])
            }
            Encoder::Embeddings { learner, .. } => {
                let e = g.param_rows(*learner, rows);
                Ok(vec![g.sigmoid(e)])
            }
        }
    }

    pub fn question_repr(&self, g: &mut Graph<'_>, rows: &[usize], ctx: &FitContext) -> Result<Vec<NodeId>> {
        match &self.encoder {
            Encoder::Networks { .. } => {
                let x = g.constant(ctx.question_x.select_rows(rows));
                Ok(vec![self.question_net(g, x)?.expect("networks")])
            }
            Encoder::Embeddings { question, .. } => {
                let e = g.param_rows(*question, rows);
                Ok(vec![g.sigmoid(e)])
            }
        }
    }

    /// Masked aggregation followed by the prediction MLP.
    pub fn head(&self, g: &mut Graph<'_>, theta: NodeId, psi: NodeId, q: Matrix) -> Result<NodeId> {
        let tm = g.mask(theta, q.clone())?;
        let pm = g.mask(psi, q)?;
        let alpha = self.agg_learner.sigmoid(g, tm)?;
        let phi = self.agg_question.sigmoid(g, pm)?;
        let diff = g.sub(alpha, phi)?;
        let z1 = self.mlp[0].sigmoid(g, diff)?;
        let z2 = self.mlp[1].sigmoid(g, z1)?;
        self.mlp[2].sigmoid(g, z2)
    }
}
