//! Cognitive diagnosis models behind one interface: diagnose every entity,
//! then predict the probability of a correct response.

mod baselines;
mod idcdm;
mod layers;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baselines::{dina_predict, irt_predict, mirt_predict};
use baselines::{DinaArch, IrtArch, MirtArch, NcdmArch};
use idcdm::IdCdmArch;
use layers::{dedup, selection};

use crate::dataset::{build_response_vectors, vectors_to_matrix, EntityMode, QMatrix, ResponseDataset, ResponseLog};
use crate::diffcore::{finite_difference_check, FdOptions, FdReport, Graph, Matrix, NodeId, ParamStore};
use crate::error::{CdmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "idcdm")]
    IdCdm,
    #[serde(rename = "idcdm-nmono")]
    IdCdmNoMono,
    #[serde(rename = "idcdm-nenc")]
    IdCdmNoEnc,
    #[serde(rename = "ncdm")]
    Ncdm,
    #[serde(rename = "ncdm-const")]
    NcdmConst,
    #[serde(rename = "irt")]
    Irt,
    #[serde(rename = "mirt")]
    Mirt,
    #[serde(rename = "dina")]
    Dina,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::IdCdm,
        ModelKind::IdCdmNoMono,
        ModelKind::IdCdmNoEnc,
        ModelKind::Ncdm,
        ModelKind::NcdmConst,
        ModelKind::Irt,
        ModelKind::Mirt,
        ModelKind::Dina,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::IdCdm => "idcdm",
            ModelKind::IdCdmNoMono => "idcdm-nmono",
            ModelKind::IdCdmNoEnc => "idcdm-nenc",
            ModelKind::Ncdm => "ncdm",
            ModelKind::NcdmConst => "ncdm-const",
            ModelKind::Irt => "irt",
            ModelKind::Mirt => "mirt",
            ModelKind::Dina => "dina",
        }
    }

    pub fn is_idcdm(self) -> bool {
        matches!(self, ModelKind::IdCdm | ModelKind::IdCdmNoMono | ModelKind::IdCdmNoEnc)
    }

    /// Whether learner traits are concept-wise, so that concept-level
    /// interpretability metrics apply.
    pub fn concept_traits(self) -> bool {
        !matches!(self, ModelKind::Irt | ModelKind::Mirt)
    }

    /// Forces the flags that define an ablation variant.
    pub fn apply_to(self, cfg: &mut ModelConfig) {
        match self {
            ModelKind::IdCdmNoMono => cfg.monotonicity = false,
            ModelKind::IdCdmNoEnc => cfg.encoder = false,
            ModelKind::NcdmConst if cfg.ncdm_init == NcdmInit::Xavier => cfg.ncdm_init = NcdmInit::Constant(0.0),
            _ => {}
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = CdmError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or(CdmError::UnknownModel(s))
    }
}

/// Initialisation of the NCDM diagnostic embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NcdmInit {
    Xavier,
    /// Every trait, difficulty and discrimination logit starts at this value.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub learner_hidden: usize,
    pub question_hidden1: usize,
    pub question_hidden2: usize,
    pub agg_dim: usize,
    pub pred_hidden1: usize,
    pub pred_hidden2: usize,
    pub ncdm_hidden1: usize,
    pub ncdm_hidden2: usize,
    pub mirt_dim: usize,
    /// Non-negative weights in the learner diagnostic network.
    pub monotonicity: bool,
    /// Diagnostic networks (true) or free embeddings (false).
    pub encoder: bool,
    /// Non-negative weights in the aggregation and prediction layers.
    pub constrain_predictive: bool,
    pub ncdm_init: NcdmInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            learner_hidden: 256,
            question_hidden1: 256,
            question_hidden2: 128,
            agg_dim: 64,
            pred_hidden1: 128,
            pred_hidden2: 64,
            ncdm_hidden1: 128,
            ncdm_hidden2: 64,
            mirt_dim: 16,
            monotonicity: true,
            encoder: true,
            constrain_predictive: false,
            ncdm_init: NcdmInit::Xavier,
        }
    }
}

impl ModelConfig {
    pub fn for_kind(kind: ModelKind) -> Self {
        let mut cfg = Self::default();
        kind.apply_to(&mut cfg);
        cfg
    }

    fn validate(&self) -> Result<()> {
        let widths = [
            ("learner_hidden", self.learner_hidden),
            ("question_hidden1", self.question_hidden1),
            ("question_hidden2", self.question_hidden2),
            ("agg_dim", self.agg_dim),
            ("pred_hidden1", self.pred_hidden1),
            ("pred_hidden2", self.pred_hidden2),
            ("ncdm_hidden1", self.ncdm_hidden1),
            ("ncdm_hidden2", self.ncdm_hidden2),
            ("mirt_dim", self.mirt_dim),
        ];
        match widths.iter().find(|(_, w)| *w == 0) {
            Some((name, _)) => Err(CdmError::Config(format!("{name} must be at least 1"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub learners: usize,
    pub questions: usize,
    pub concepts: usize,
}

impl Dims {
    pub fn of(dataset: &ResponseDataset) -> Self {
        Self {
            learners: dataset.n_learners,
            questions: dataset.n_questions,
            concepts: dataset.n_concepts,
        }
    }
}

/// Inputs shared by every forward pass of one training run: response
/// vectors built from the fit logs and the Q-matrix.
#[derive(Debug, Clone)]
pub struct FitContext {
    /// `N x M`, row `i` is learner `i`'s response vector.
    pub learner_x: Matrix,
    /// `M x N`, row `j` is question `j`'s response vector.
    pub question_x: Matrix,
    /// `M x K`
    pub q: Matrix,
}

impl FitContext {
    pub fn new(dims: Dims, fit_logs: &[ResponseLog], q: &QMatrix) -> Result<Self> {
        if q.questions() != dims.questions || q.concepts() != dims.concepts {
            return Err(CdmError::dim(
                "fit_context",
                format!(
                    "Q-matrix is {}x{}, expected {}x{}",
                    q.questions(),
                    q.concepts(),
                    dims.questions,
                    dims.concepts
                ),
            ));
        }
        check_ids(dims, fit_logs)?;
        let (n, m) = (dims.learners, dims.questions);
        Ok(Self {
            learner_x: vectors_to_matrix(&build_response_vectors(n, m, fit_logs, EntityMode::Learner)),
            question_x: vectors_to_matrix(&build_response_vectors(n, m, fit_logs, EntityMode::Question)),
            q: q.to_matrix(),
        })
    }

    pub fn from_dataset(dataset: &ResponseDataset, fit_logs: &[ResponseLog]) -> Result<Self> {
        Self::new(Dims::of(dataset), fit_logs, &dataset.q_matrix)
    }
}

fn check_ids(dims: Dims, logs: &[ResponseLog]) -> Result<()> {
    for log in logs {
        if log.learner >= dims.learners || log.question >= dims.questions {
            return Err(CdmError::Validation(format!(
                "log ({}, {}) outside {} learners x {} questions",
                log.learner, log.question, dims.learners, dims.questions
            )));
        }
    }
    Ok(())
}

/// Diagnostic output for every entity. Most models have one learner part
/// (the trait vector); question parts hold e.g. difficulty and
/// discrimination separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnosis {
    pub learner_parts: Vec<Matrix>,
    pub question_parts: Vec<Matrix>,
}

impl Diagnosis {
    /// Learner traits, parts concatenated column-wise (`N x width`).
    pub fn learner_traits(&self) -> Matrix {
        hconcat(&self.learner_parts)
    }

    pub fn question_params(&self) -> Matrix {
        hconcat(&self.question_parts)
    }

    pub fn learner(&self, i: usize) -> Vec<f64> {
        self.learner_parts.iter().flat_map(|p| p.row(i).to_vec()).collect()
    }

    pub fn question(&self, j: usize) -> Vec<f64> {
        self.question_parts.iter().flat_map(|p| p.row(j).to_vec()).collect()
    }
}

fn hconcat(parts: &[Matrix]) -> Matrix {
    let rows = parts.first().map_or(0, Matrix::rows);
    let cols = parts.iter().map(Matrix::cols).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for p in parts {
            data.extend_from_slice(p.row(r));
        }
    }
    Matrix::from_vec(rows, cols, data).expect("parts share a row count")
}

#[derive(Debug, Clone)]
enum Arch {
    IdCdm(IdCdmArch),
    Ncdm(NcdmArch),
    Irt(IrtArch),
    Mirt(MirtArch),
    Dina(DinaArch),
}

impl Arch {
    fn learner_repr(&self, g: &mut Graph<'_>, rows: &[usize], ctx: &FitContext) -> Result<Vec<NodeId>> {
        Ok(match self {
            Arch::IdCdm(a) => a.learner_repr(g, rows, ctx)?,
            Arch::Ncdm(a) => a.learner_repr(g, rows),
            Arch::Irt(a) => a.learner_repr(g, rows),
            Arch::Mirt(a) => a.learner_repr(g, rows),
            Arch::Dina(a) => a.learner_repr(g, rows),
        })
    }

    fn question_repr(&self, g: &mut Graph<'_>, rows: &[usize], ctx: &FitContext) -> Result<Vec<NodeId>> {
        Ok(match self {
            Arch::IdCdm(a) => a.question_repr(g, rows, ctx)?,
            Arch::Ncdm(a) => a.question_repr(g, rows),
            Arch::Irt(a) => a.question_repr(g, rows),
            Arch::Mirt(a) => a.question_repr(g, rows),
            Arch::Dina(a) => a.question_repr(g, rows),
        })
    }

    fn head(&self, g: &mut Graph<'_>, l: &[NodeId], q: &[NodeId], mask: Matrix) -> Result<NodeId> {
        match self {
            Arch::IdCdm(a) => a.head(g, l[0], q[0], mask),
            Arch::Ncdm(a) => a.head(g, l[0], q[0], q[1], mask),
            Arch::Irt(a) => a.head(g, l[0], q[0], q[1]),
            Arch::Mirt(a) => a.head(g, l[0], q[0], q[1]),
            Arch::Dina(a) => a.head(g, l[0], q[0], q[1], mask),
        }
    }

    fn part_widths(&self, dims: Dims) -> (Vec<usize>, Vec<usize>) {
        let k = dims.concepts;
        match self {
            Arch::IdCdm(_) => (vec![k], vec![k]),
            Arch::Ncdm(_) => (vec![k], vec![k, 1]),
            Arch::Irt(_) => (vec![1], vec![1, 1]),
            Arch::Mirt(a) => (vec![a.dim], vec![a.dim, 1]),
            Arch::Dina(_) => (vec![k], vec![1, 1]),
        }
    }

    /// Probability node (`B x 1`) for a batch of (learner, question) pairs.
    fn forward(&self, g: &mut Graph<'_>, logs: &[ResponseLog], ctx: &FitContext) -> Result<NodeId> {
        let (lu, lpos) = dedup(logs.iter().map(|l| l.learner));
        let (qu, qpos) = dedup(logs.iter().map(|l| l.question));
        let lparts = self.learner_repr(g, &lu, ctx)?;
        let qparts = self.question_repr(g, &qu, ctx)?;
        let lsel = g.constant(selection(&lpos, lu.len()));
        let qsel = g.constant(selection(&qpos, qu.len()));
        let l = lparts
            .into_iter()
            .map(|p| g.matmul(lsel, p))
            .collect::<Result<Vec<_>>>()?;
        let q = qparts
            .into_iter()
            .map(|p| g.matmul(qsel, p))
            .collect::<Result<Vec<_>>>()?;
        let questions: Vec<usize> = logs.iter().map(|l| l.question).collect();
        self.head(g, &l, &q, ctx.q.select_rows(&questions))
    }

    fn loss(&self, g: &mut Graph<'_>, logs: &[ResponseLog], ctx: &FitContext) -> Result<NodeId> {
        let y = self.forward(g, logs, ctx)?;
        let targets: Vec<f64> = logs.iter().map(ResponseLog::target).collect();
        g.bce_loss(y, &targets)
    }
}

/// Rows per graph when scoring logs outside training.
const PREDICT_CHUNK: usize = 4096;

/// A model kind, its configuration and its learnable parameters.
#[derive(Debug, Clone)]
pub struct Model {
    kind: ModelKind,
    config: ModelConfig,
    dims: Dims,
    arch: Arch,
    params: ParamStore,
}

impl Model {
    /// Fresh model with parameters drawn from a generator seeded by `seed`.
    pub fn new(kind: ModelKind, config: ModelConfig, dims: Dims, seed: u64) -> Result<Self> {
        config.validate()?;
        if dims.learners == 0 || dims.questions == 0 || dims.concepts == 0 {
            return Err(CdmError::Validation(format!(
                "model needs at least one learner, question and concept, got {dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let store = &mut params;
        let arch = match kind {
            ModelKind::IdCdm | ModelKind::IdCdmNoMono | ModelKind::IdCdmNoEnc => Arch::IdCdm(IdCdmArch::new(
                store,
                &mut rng,
                dims,
                &config,
                config.monotonicity,
                config.encoder,
            )),
            ModelKind::Ncdm | ModelKind::NcdmConst => {
                let constant = match config.ncdm_init {
                    NcdmInit::Xavier => None,
                    NcdmInit::Constant(c) => Some(c),
                };
                Arch::Ncdm(NcdmArch::new(store, &mut rng, dims, &config, constant))
            }
            ModelKind::Irt => Arch::Irt(IrtArch::new(store, &mut rng, dims)),
            ModelKind::Mirt => Arch::Mirt(MirtArch::new(store, &mut rng, dims, &config)),
            ModelKind::Dina => Arch::Dina(DinaArch::new(store, &mut rng, dims)),
        };
        Ok(Self {
            kind,
            config,
            dims,
            arch,
            params,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Summed binary cross-entropy of `logs` as a scalar node of `g`, which
    /// must be built over this model's parameters.
    pub fn loss(&self, g: &mut Graph<'_>, logs: &[ResponseLog], ctx: &FitContext) -> Result<NodeId> {
        if logs.is_empty() {
            return Err(CdmError::Empty("logs"));
        }
        check_ids(self.dims, logs)?;
        self.arch.loss(g, logs, ctx)
    }

    /// Central finite-difference check of the loss over `logs`.
    pub fn gradient_check(
        &mut self,
        label: &str,
        logs: &[ResponseLog],
        ctx: &FitContext,
        opts: &FdOptions,
    ) -> Result<FdReport> {
        check_ids(self.dims, logs)?;
        let arch = &self.arch;
        finite_difference_check(label, &mut self.params, |g| arch.loss(g, logs, ctx), opts)
    }

    /// Traits and question parameters for every entity, in dense-id order.
    pub fn diagnose_all(&self, ctx: &FitContext) -> Result<Diagnosis> {
        let mut g = Graph::new(&self.params);
        let learners: Vec<usize> = (0..self.dims.learners).collect();
        let questions: Vec<usize> = (0..self.dims.questions).collect();
        let l = self.arch.learner_repr(&mut g, &learners, ctx)?;
        let q = self.arch.question_repr(&mut g, &questions, ctx)?;
        Ok(Diagnosis {
            learner_parts: l.into_iter().map(|n| g.value(n).clone()).collect(),
            question_parts: q.into_iter().map(|n| g.value(n).clone()).collect(),
        })
    }

    /// Probabilities for `logs` from a precomputed diagnosis.
    pub fn predict_with(&self, diagnosis: &Diagnosis, logs: &[ResponseLog], ctx: &FitContext) -> Result<Vec<f64>> {
        check_ids(self.dims, logs)?;
        let mut out = Vec::with_capacity(logs.len());
        for chunk in logs.chunks(PREDICT_CHUNK) {
            let mut g = Graph::new(&self.params);
            let learners: Vec<usize> = chunk.iter().map(|l| l.learner).collect();
            let questions: Vec<usize> = chunk.iter().map(|l| l.question).collect();
            let l: Vec<NodeId> = diagnosis
                .learner_parts
                .iter()
                .map(|p| g.constant(p.select_rows(&learners)))
                .collect();
            let q: Vec<NodeId> = diagnosis
                .question_parts
                .iter()
                .map(|p| g.constant(p.select_rows(&questions)))
                .collect();
            let y = self.arch.head(&mut g, &l, &q, ctx.q.select_rows(&questions))?;
            out.extend_from_slice(g.value(y).data());
        }
        Ok(out)
    }

    pub fn predict_logs(&self, ctx: &FitContext, logs: &[ResponseLog]) -> Result<Vec<f64>> {
        let diagnosis = self.diagnose_all(ctx)?;
        self.predict_with(&diagnosis, logs, ctx)
    }

    /// Probability that `learner` answers `question` correctly.
    pub fn predict(&self, ctx: &FitContext, learner: usize, question: usize) -> Result<f64> {
        let log = ResponseLog::new(learner, question, 0);
        check_ids(self.dims, &[log])?;
        let mut g = Graph::new(&self.params);
        let y = self.arch.forward(&mut g, &[log], ctx)?;
        Ok(g.value(y).data()[0])
    }

    /// Prediction from explicit diagnostic vectors, one slice per part.
    pub fn predict_from_parts(&self, learner: &[&[f64]], question: &[&[f64]], q_row: &[f64]) -> Result<f64> {
        let (lw, qw) = self.arch.part_widths(self.dims);
        let widths = |parts: &[&[f64]]| parts.iter().map(|p| p.len()).collect::<Vec<_>>();
        if widths(learner) != lw || widths(question) != qw || q_row.len() != self.dims.concepts {
            return Err(CdmError::dim(
                "predict",
                format!(
                    "expected learner parts {lw:?}, question parts {qw:?}, q of {}; got {:?}, {:?}, {}",
                    self.dims.concepts,
                    widths(learner),
                    widths(question),
                    q_row.len()
                ),
            ));
        }
        let mut g = Graph::new(&self.params);
        let l: Vec<NodeId> = learner.iter().map(|p| g.constant(Matrix::row_vector(p))).collect();
        let q: Vec<NodeId> = question.iter().map(|p| g.constant(Matrix::row_vector(p))).collect();
        let y = self.arch.head(&mut g, &l, &q, Matrix::row_vector(q_row))?;
        Ok(g.value(y).data()[0])
    }

    fn idcdm_arch(&self) -> Result<&IdCdmArch> {
        match &self.arch {
            Arch::IdCdm(a) => Ok(a),
            _ => Err(CdmError::Config(format!("{} is not an ID-CDM model", self.kind))),
        }
    }

    /// Learner trait vector computed from a response vector of length `M`.
    pub fn diagnose_learner(&self, x: &[f64]) -> Result<Vec<f64>> {
        let arch = self.idcdm_arch()?;
        if x.len() != self.dims.questions {
            return Err(CdmError::dim(
                "diagnose_learner",
                format!(
                    "response vector has {} entries, expected {}",
                    x.len(),
                    self.dims.questions
                ),
            ));
        }
        let mut g = Graph::new(&self.params);
        let input = g.constant(Matrix::row_vector(x));
        match arch.learner_net(&mut g, input)? {
            Some(theta) => Ok(g.value(theta).data().to_vec()),
            None => Err(CdmError::Config("model has no learner diagnostic network".into())),
        }
    }

    /// Question parameter vector computed from a response vector of length `N`.
    pub fn diagnose_question(&self, x: &[f64]) -> Result<Vec<f64>> {
        let arch = self.idcdm_arch()?;
        if x.len() != self.dims.learners {
            return Err(CdmError::dim(
                "diagnose_question",
                format!(
                    "response vector has {} entries, expected {}",
                    x.len(),
                    self.dims.learners
                ),
            ));
        }
        let mut g = Graph::new(&self.params);
        let input = g.constant(Matrix::row_vector(x));
        match arch.question_net(&mut g, input)? {
            Some(psi) => Ok(g.value(psi).data().to_vec()),
            None => Err(CdmError::Config("model has no question diagnostic network".into())),
        }
    }

    /// NCDM prediction from raw logits.
    pub fn ncdm_predict(
        &self,
        trait_logits: &[f64],
        diff_logits: &[f64],
        disc_logit: f64,
        q_row: &[f64],
    ) -> Result<f64> {
        if !matches!(self.arch, Arch::Ncdm(_)) {
            return Err(CdmError::Config(format!("{} is not an NCDM model", self.kind)));
        }
        let s = |v: &[f64]| v.iter().map(|&z| crate::diffcore::sigmoid(z)).collect::<Vec<_>>();
        let t = s(trait_logits);
        let d = s(diff_logits);
        let e = [crate::diffcore::sigmoid(disc_logit)];
        self.predict_from_parts(&[&t], &[&d, &e], q_row)
    }

    /// Rebuilds a model around stored tensors; names and shapes must match
    /// what `kind`/`config`/`dims` would create.
    pub fn from_parts(kind: ModelKind, config: ModelConfig, dims: Dims, params: ParamStore) -> Result<Self> {
        let mut model = Self::new(kind, config, dims, 0)?;
        if model.params.len() != params.len() {
            return Err(CdmError::CorruptCheckpoint(format!(
                "{} tensors stored, {} expected",
                params.len(),
                model.params.len()
            )));
        }
        for ((_, want), (_, got)) in model.params.iter().zip(params.iter()) {
            if want.name != got.name || want.value.shape() != got.value.shape() || want.constrained != got.constrained {
                return Err(CdmError::CorruptCheckpoint(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    got.name,
                    got.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }
}
