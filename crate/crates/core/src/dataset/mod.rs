//! Response logs, Q-matrices, preprocessing, splitting, response
//! vectorisation and shadow augmentation.

pub(crate) mod io;
pub mod synthetic;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::Matrix;
use crate::error::{CdmError, Result};

pub use io::{load_q_matrix, load_response_logs, write_logs_csv, write_q_matrix_csv, write_remap_csv, LoadedLogs};

/// One dichotomous response of a learner to a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResponseLog {
    pub learner: usize,
    pub question: usize,
    pub score: u8,
    /// Attempt sequence number, when the source provides one.
    pub order: Option<i64>,
}

impl ResponseLog {
    pub fn new(learner: usize, question: usize, score: u8) -> Self {
        Self {
            learner,
            question,
            score,
            order: None,
        }
    }

    #[inline]
    pub fn target(&self) -> f64 {
        f64::from(self.score)
    }
}

/// Binary question x concept matrix; every row has at least one concept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QMatrix {
    questions: usize,
    concepts: usize,
    entries: Vec<u8>,
}

impl QMatrix {
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self> {
        let concepts = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || concepts == 0 {
            return Err(CdmError::Validation("Q-matrix is empty".into()));
        }
        let mut entries = Vec::with_capacity(rows.len() * concepts);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != concepts {
                return Err(CdmError::Validation(format!(
                    "Q-matrix row {j} has {} entries, expected {concepts}",
                    row.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|&&v| v > 1) {
                return Err(CdmError::Validation(format!(
                    "Q-matrix row {j} has non-binary entry {bad}"
                )));
            }
            if row.iter().all(|&v| v == 0) {
                return Err(CdmError::Validation(format!(
                    "Q-matrix row {j} requires no knowledge concept"
                )));
            }
            entries.extend_from_slice(row);
        }
        Ok(Self {
            questions: rows.len(),
            concepts,
            entries,
        })
    }

    pub fn questions(&self) -> usize {
        self.questions
    }

    pub fn concepts(&self) -> usize {
        self.concepts
    }

    pub fn row(&self, j: usize) -> &[u8] {
        &self.entries[j * self.concepts..(j + 1) * self.concepts]
    }

    pub fn row_f64(&self, j: usize) -> Vec<f64> {
        self.row(j).iter().map(|&v| f64::from(v)).collect()
    }

    /// Rows gathered in the given order.
    pub fn select(&self, rows: &[usize]) -> QMatrix {
        let mut entries = Vec::with_capacity(rows.len() * self.concepts);
        for &r in rows {
            entries.extend_from_slice(self.row(r));
        }
        QMatrix {
            questions: rows.len(),
            concepts: self.concepts,
            entries,
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        let data = self.entries.iter().map(|&v| f64::from(v)).collect();
        Matrix::from_vec(self.questions, self.concepts, data).expect("shape")
    }

    pub fn mean_concepts_per_question(&self) -> f64 {
        self.entries.iter().map(|&v| f64::from(v)).sum::<f64>() / self.questions as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityMode {
    Learner,
    Question,
}

impl std::fmt::Display for EntityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EntityMode::Learner => "learner",
            EntityMode::Question => "question",
        })
    }
}

/// Original-to-shadow pairs created by [`augment_shadows`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowMap {
    pub mode: EntityMode,
    pub pairs: Vec<(usize, usize)>,
}

/// Dense-id to external-id tables.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IdRemap {
    pub learners: Vec<String>,
    pub questions: Vec<String>,
}

impl IdRemap {
    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            learners: (0..n).map(|i| i.to_string()).collect(),
            questions: (0..m).map(|j| j.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseDataset {
    pub n_learners: usize,
    pub n_questions: usize,
    pub n_concepts: usize,
    pub logs: Vec<ResponseLog>,
    pub q_matrix: QMatrix,
    pub remap: IdRemap,
    pub shadow_map: Option<ShadowMap>,
}

impl ResponseDataset {
    /// Dataset over already-dense ids. Q-matrix rows are indexed by question id.
    pub fn from_dense(n_learners: usize, logs: Vec<ResponseLog>, q_matrix: QMatrix) -> Result<Self> {
        let n_questions = q_matrix.questions();
        let ds = Self {
            n_learners,
            n_questions,
            n_concepts: q_matrix.concepts(),
            logs,
            remap: IdRemap::identity(n_learners, n_questions),
            q_matrix,
            shadow_map: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Joins loaded logs with a Q-matrix. Each question's external id must be
    /// an integer naming a Q-matrix row (`q_base` is the id of row 0).
    pub fn from_loaded(loaded: LoadedLogs, q_full: &QMatrix, q_base: i64) -> Result<Self> {
        let mut rows = Vec::with_capacity(loaded.remap.questions.len());
        for ext in &loaded.remap.questions {
            let id: i64 = ext
                .trim()
                .parse()
                .map_err(|_| CdmError::Validation(format!("question id `{ext}` is not an integer Q-matrix row")))?;
            let row = id - q_base;
            if row < 0 || row as usize >= q_full.questions() {
                return Err(CdmError::Validation(format!(
                    "question id `{ext}` has no Q-matrix row ({} rows, base {q_base})",
                    q_full.questions()
                )));
            }
            rows.push(row as usize);
        }
        let q_matrix = q_full.select(&rows);
        let ds = Self {
            n_learners: loaded.remap.learners.len(),
            n_questions: q_matrix.questions(),
            n_concepts: q_matrix.concepts(),
            logs: loaded.logs,
            remap: loaded.remap,
            q_matrix,
            shadow_map: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_matrix.questions() != self.n_questions {
            return Err(CdmError::Validation(format!(
                "Q-matrix has {} rows for {} questions",
                self.q_matrix.questions(),
                self.n_questions
            )));
        }
        for log in &self.logs {
            if log.learner >= self.n_learners || log.question >= self.n_questions {
                return Err(CdmError::Validation(format!(
                    "log ({}, {}) out of range for {}x{}",
                    log.learner, log.question, self.n_learners, self.n_questions
                )));
            }
            if log.score > 1 {
                return Err(CdmError::Validation(format!("score {} is not binary", log.score)));
            }
        }
        Ok(())
    }

    pub fn entity_count(&self, mode: EntityMode) -> usize {
        match mode {
            EntityMode::Learner => self.n_learners,
            EntityMode::Question => self.n_questions,
        }
    }

    pub fn correct_rate(&self) -> f64 {
        if self.logs.is_empty() {
            return 0.0;
        }
        self.logs.iter().map(|l| f64::from(l.score)).sum::<f64>() / self.logs.len() as f64
    }

    /// Applies [`preprocess`] and re-densifies learner ids, keeping the
    /// external-id table aligned. Question ids are left untouched so they
    /// stay aligned with the Q-matrix.
    pub fn preprocess(&self, min_logs: usize, first_attempt_only: bool) -> Result<Self> {
        let (logs, kept) = preprocess_with_learners(&self.logs, min_logs, first_attempt_only)?;
        let mut out = self.clone();
        out.remap.learners = kept.iter().map(|&i| self.remap.learners[i].clone()).collect();
        out.n_learners = kept.len();
        out.logs = logs;
        out.shadow_map = None;
        Ok(out)
    }

    /// Restricts the dataset to its first `max` learners (by dense id).
    pub fn take_learners(&self, max: usize) -> Self {
        if max >= self.n_learners {
            return self.clone();
        }
        let mut out = self.clone();
        out.logs.retain(|l| l.learner < max);
        out.remap.learners.truncate(max);
        out.n_learners = max;
        out.shadow_map = None;
        out
    }
}

/// Deduplicates (learner, question) pairs and drops learners with fewer
/// than `min_logs` logs, then re-densifies learner ids.
///
/// With `first_attempt_only` the lowest-order log of each pair is kept;
/// otherwise the majority score wins and ties resolve to incorrect.
pub fn preprocess(logs: &[ResponseLog], min_logs: usize, first_attempt_only: bool) -> Result<Vec<ResponseLog>> {
    preprocess_with_learners(logs, min_logs, first_attempt_only).map(|(l, _)| l)
}

fn preprocess_with_learners(
    logs: &[ResponseLog],
    min_logs: usize,
    first_attempt_only: bool,
) -> Result<(Vec<ResponseLog>, Vec<usize>)> {
    // position of the kept log for each pair, plus a running vote
    let mut slot: HashMap<(usize, usize), usize> = HashMap::new();
    let mut kept: Vec<ResponseLog> = Vec::with_capacity(logs.len());
    let mut votes: Vec<i64> = Vec::with_capacity(logs.len());
    let mut dup = false;
    for log in logs {
        match slot.get(&(log.learner, log.question)) {
            None => {
                slot.insert((log.learner, log.question), kept.len());
                kept.push(*log);
                votes.push(if log.score == 1 { 1 } else { -1 });
            }
            Some(&pos) => {
                dup = true;
                if first_attempt_only {
                    let cur = kept[pos];
                    let better = match (log.order, cur.order) {
                        (Some(a), Some(b)) => a < b,
                        (Some(_), None) => true,
                        _ => false,
                    };
                    if better {
                        kept[pos] = *log;
                    }
                } else {
                    votes[pos] += if log.score == 1 { 1 } else { -1 };
                }
            }
        }
    }
    if dup && !first_attempt_only {
        for (log, v) in kept.iter_mut().zip(&votes) {
            log.score = u8::from(*v > 0);
        }
    }

    let mut counts: HashMap<usize, usize> = HashMap::new();
    for log in &kept {
        *counts.entry(log.learner).or_default() += 1;
    }
    let mut learners: Vec<usize> = counts.iter().filter(|(_, &c)| c >= min_logs).map(|(&l, _)| l).collect();
    learners.sort_unstable();
    let dense: HashMap<usize, usize> = learners.iter().enumerate().map(|(d, &l)| (l, d)).collect();
    let out: Vec<ResponseLog> = kept
        .into_iter()
        .filter_map(|mut log| {
            dense.get(&log.learner).map(|&d| {
                log.learner = d;
                log
            })
        })
        .collect();
    if out.is_empty() {
        return Err(CdmError::Exhausted);
    }
    Ok((out, learners))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSplit {
    pub fit: Vec<ResponseLog>,
    pub validation: Vec<ResponseLog>,
    pub test: Vec<ResponseLog>,
}

impl DataSplit {
    /// Adds shadow copies to every part, so that each shadow lands in the
    /// same part as its original.
    pub fn with_shadows(&self, n_learners: usize, n_questions: usize, mode: EntityMode) -> Self {
        Self {
            fit: shadow_logs(&self.fit, n_learners, n_questions, mode),
            validation: shadow_logs(&self.validation, n_learners, n_questions, mode),
            test: shadow_logs(&self.test, n_learners, n_questions, mode),
        }
    }

    pub fn len(&self) -> usize {
        self.fit.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fit and validation logs together (the "train" side of a train/test split).
    pub fn train(&self) -> Vec<ResponseLog> {
        let mut v = self.fit.clone();
        v.extend_from_slice(&self.validation);
        v
    }
}

#[inline]
fn floor_count(ratio: f64, n: usize) -> usize {
    // guard against ratios like 0.29 * 100 = 28.999999999999996
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Per-learner seeded split: `floor(test_ratio * n)` logs to test, then
/// `floor(val_ratio * rest)` to validation, the remainder to fit.
pub fn split_dataset(logs: &[ResponseLog], test_ratio: f64, val_ratio: f64, seed: u64) -> Result<DataSplit> {
    if !(0.0..1.0).contains(&test_ratio) || !(0.0..1.0).contains(&val_ratio) || test_ratio + val_ratio >= 1.0 {
        return Err(CdmError::Validation(format!(
            "split ratios test={test_ratio} val={val_ratio} must be non-negative with sum < 1"
        )));
    }
    let mut per_learner: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, log) in logs.iter().enumerate() {
        per_learner.entry(log.learner).or_default().push(i);
    }
    let mut learners: Vec<usize> = per_learner.keys().copied().collect();
    learners.sort_unstable();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut part = vec![0u8; logs.len()]; // 0 fit, 1 val, 2 test
    for l in learners {
        let idx = per_learner.get_mut(&l).expect("present");
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_test = floor_count(test_ratio, n);
        let n_val = floor_count(val_ratio, n - n_test);
        if n - n_test - n_val == 0 {
            log::warn!("learner {l} has no fit logs after splitting");
        }
        for &i in &idx[..n_test] {
            part[i] = 2;
        }
        for &i in &idx[n_test..n_test + n_val] {
            part[i] = 1;
        }
    }
    let mut split = DataSplit {
        fit: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (log, p) in logs.iter().zip(part) {
        match p {
            0 => split.fit.push(*log),
            1 => split.validation.push(*log),
            _ => split.test.push(*log),
        }
    }
    Ok(split)
}

/// A response vector over {-1, 0, +1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResponseVector(pub Vec<i8>);

impl ResponseVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Vectorises `subset`: +1 for a correct log, -1 for an incorrect one and 0
/// for an unobserved pair. Learner mode yields `N` vectors of length `M`,
/// question mode `M` vectors of length `N`.
pub fn build_response_vectors(
    n_learners: usize,
    n_questions: usize,
    subset: &[ResponseLog],
    mode: EntityMode,
) -> Vec<ResponseVector> {
    let mut votes = vec![0i32; n_learners * n_questions];
    let mut seen = vec![false; n_learners * n_questions];
    for log in subset {
        let cell = log.learner * n_questions + log.question;
        votes[cell] += if log.score == 1 { 1 } else { -1 };
        seen[cell] = true;
    }
    let entry = |cell: usize| -> i8 {
        match (seen[cell], votes[cell] > 0) {
            (false, _) => 0,
            (true, true) => 1,
            (true, false) => -1,
        }
    };
    match mode {
        EntityMode::Learner => (0..n_learners)
            .map(|i| ResponseVector((0..n_questions).map(|j| entry(i * n_questions + j)).collect()))
            .collect(),
        EntityMode::Question => (0..n_questions)
            .map(|j| ResponseVector((0..n_learners).map(|i| entry(i * n_questions + j)).collect()))
            .collect(),
    }
}

/// Stacks response vectors into an `entities x length` matrix.
pub fn vectors_to_matrix(vectors: &[ResponseVector]) -> Matrix {
    let cols = vectors.first().map_or(0, ResponseVector::len);
    let data = vectors.iter().flat_map(|v| v.0.iter().map(|&x| f64::from(x))).collect();
    Matrix::from_vec(vectors.len(), cols, data).expect("equal-length vectors")
}

fn shadow_logs(logs: &[ResponseLog], n_learners: usize, n_questions: usize, mode: EntityMode) -> Vec<ResponseLog> {
    let mut out = logs.to_vec();
    out.extend(logs.iter().map(|log| {
        let mut s = *log;
        match mode {
            EntityMode::Learner => s.learner += n_learners,
            EntityMode::Question => s.question += n_questions,
        }
        s
    }));
    out
}

/// Duplicates every learner (or question) under a fresh id with identical
/// logs. Shadows are appended after the originals: the shadow of `i` is
/// `i + N` (or `j + M`).
pub fn augment_shadows(dataset: &ResponseDataset, mode: EntityMode) -> ResponseDataset {
    let (n, m) = (dataset.n_learners, dataset.n_questions);
    let mut out = dataset.clone();
    out.logs = shadow_logs(&dataset.logs, n, m, mode);
    let count = dataset.entity_count(mode);
    match mode {
        EntityMode::Learner => {
            out.n_learners = 2 * n;
            let shadows: Vec<String> = dataset.remap.learners.iter().map(|e| format!("{e}#shadow")).collect();
            out.remap.learners.extend(shadows);
        }
        EntityMode::Question => {
            out.n_questions = 2 * m;
            let rows: Vec<usize> = (0..m).chain(0..m).collect();
            out.q_matrix = dataset.q_matrix.select(&rows);
            let shadows: Vec<String> = dataset.remap.questions.iter().map(|e| format!("{e}#shadow")).collect();
            out.remap.questions.extend(shadows);
        }
    }
    out.shadow_map = Some(ShadowMap {
        mode,
        pairs: (0..count).map(|i| (i, i + count)).collect(),
    });
    out
}

/// Partitions indices into groups of element-wise equal vectors, ordered by
/// each group's first index.
pub fn group_identical(vectors: &[ResponseVector]) -> Vec<Vec<usize>> {
    let mut index: HashMap<&[i8], usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, v) in vectors.iter().enumerate() {
        match index.get(v.0.as_slice()) {
            Some(&g) => groups[g].push(i),
            None => {
                index.insert(v.0.as_slice(), groups.len());
                groups.push(vec![i]);
            }
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log(l: usize, q: usize, s: u8) -> ResponseLog {
        ResponseLog::new(l, q, s)
    }

    #[test]
    fn preprocess_drops_sparse_learners() {
        let mut logs: Vec<_> = (0..14).map(|q| log(0, q, 1)).collect();
        logs.extend((0..15).map(|q| log(1, q, 0)));
        let out = preprocess(&logs, 15, false).unwrap();
        assert_eq!(out.len(), 15);
        assert!(out.iter().all(|l| l.learner == 0 && l.score == 0));
    }

    #[test]
    fn preprocess_keeps_first_attempt() {
        let logs = vec![
            ResponseLog {
                order: Some(2),
                ..log(0, 0, 1)
            },
            ResponseLog {
                order: Some(1),
                ..log(0, 0, 0)
            },
        ];
        let out = preprocess(&logs, 0, true).unwrap();
        assert_eq!(out, vec![logs[1]]);
    }

    #[test]
    fn preprocess_identity_without_filters() {
        let logs = vec![log(0, 1, 1), log(1, 0, 0), log(0, 0, 0)];
        assert_eq!(preprocess(&logs, 0, false).unwrap(), logs);
    }

    #[test]
    fn preprocess_majority_vote_ties_to_incorrect() {
        let logs = vec![log(0, 0, 1), log(0, 0, 0), log(0, 1, 1), log(0, 1, 1), log(0, 1, 0)];
        let out = preprocess(&logs, 0, false).unwrap();
        assert_eq!(out, vec![log(0, 0, 0), log(0, 1, 1)]);
    }

    #[test]
    fn preprocess_exhausted() {
        let logs = vec![log(0, 0, 1)];
        assert!(matches!(preprocess(&logs, 2, false), Err(CdmError::Exhausted)));
    }

    #[test]
    fn split_floor_rules() {
        let logs: Vec<_> = (0..20).map(|q| log(0, q, (q % 2) as u8)).collect();
        let s = split_dataset(&logs, 0.2, 0.1, 7).unwrap();
        assert_eq!((s.test.len(), s.validation.len(), s.fit.len()), (4, 1, 15));
        let all = split_dataset(&logs, 0.0, 0.0, 7).unwrap();
        assert_eq!(all.fit, logs);
        assert_eq!(split_dataset(&logs, 0.2, 0.1, 7).unwrap(), s);
        assert!(split_dataset(&logs, 0.6, 0.4, 7).is_err());
    }

    #[test]
    fn vectorisation_follows_sign_rule() {
        let logs = vec![log(0, 0, 1), log(0, 1, 0), log(1, 0, 1)];
        let v = build_response_vectors(3, 3, &logs, EntityMode::Learner);
        assert_eq!(v[0].0, vec![1, -1, 0]);
        assert_eq!(v[2].0, vec![0, 0, 0]);
        let q = build_response_vectors(2, 3, &logs, EntityMode::Question);
        assert_eq!(q[0].0, vec![1, 1]);
    }

    #[test]
    fn shadows_copy_rows_and_columns() {
        let qm = QMatrix::new(vec![vec![1, 0], vec![0, 1]]).unwrap();
        let logs = vec![log(0, 0, 1), log(1, 1, 0), log(2, 0, 0)];
        let ds = ResponseDataset::from_dense(3, logs, qm).unwrap();
        let aug = augment_shadows(&ds, EntityMode::Learner);
        assert_eq!(aug.n_learners, 6);
        let v = build_response_vectors(aug.n_learners, aug.n_questions, &aug.logs, EntityMode::Learner);
        for &(o, s) in &aug.shadow_map.as_ref().unwrap().pairs {
            assert_eq!(v[o], v[s]);
        }
        let qa = augment_shadows(&ds, EntityMode::Question);
        assert_eq!(qa.n_questions, 4);
        assert_eq!(qa.q_matrix.row(2), qa.q_matrix.row(0));
        assert_eq!(qa.q_matrix.row(3), qa.q_matrix.row(1));
    }

    #[test]
    fn grouping() {
        let v = vec![
            ResponseVector(vec![1, 0]),
            ResponseVector(vec![1, 0]),
            ResponseVector(vec![-1, 0]),
        ];
        assert_eq!(group_identical(&v), vec![vec![0, 1], vec![2]]);
        let distinct = vec![
            ResponseVector(vec![1]),
            ResponseVector(vec![0]),
            ResponseVector(vec![-1]),
        ];
        assert!(group_identical(&distinct).iter().all(|g| g.len() == 1));
    }

    #[test]
    fn q_matrix_validation() {
        assert_eq!(QMatrix::new(vec![vec![1, 0, 1]]).unwrap().row(0), &[1, 0, 1]);
        assert!(QMatrix::new(vec![vec![0, 0, 0]]).is_err());
        assert!(QMatrix::new(vec![vec![2, 0]]).is_err());
    }

    fn arb_logs() -> impl Strategy<Value = Vec<ResponseLog>> {
        proptest::collection::vec((0usize..8, 0usize..6, 0u8..2, proptest::option::of(0i64..5)), 1..80).prop_map(|v| {
            v.into_iter()
                .map(|(l, q, s, o)| ResponseLog {
                    learner: l,
                    question: q,
                    score: s,
                    order: o,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn preprocessing_is_idempotent(logs in arb_logs(), min in 0usize..4, first in any::<bool>()) {
            if let Ok(once) = preprocess(&logs, min, first) {
                prop_assert_eq!(preprocess(&once, min, first).unwrap(), once);
            }
        }

        #[test]
        fn split_is_a_partition(logs in arb_logs(), t in 0.0f64..0.5, v in 0.0f64..0.45, seed in any::<u64>()) {
            let logs = preprocess(&logs, 0, true).unwrap();
            let s = split_dataset(&logs, t, v, seed).unwrap();
            prop_assert_eq!(s.len(), logs.len());
            let mut all: Vec<_> = s.fit.iter().chain(&s.validation).chain(&s.test).copied().collect();
            let mut orig = logs.clone();
            all.sort_by_key(|l| (l.learner, l.question));
            orig.sort_by_key(|l| (l.learner, l.question));
            prop_assert_eq!(all, orig);
            let mut per: HashMap<usize, (usize, usize, usize)> = HashMap::new();
            for l in &s.fit { per.entry(l.learner).or_default().0 += 1; }
            for l in &s.validation { per.entry(l.learner).or_default().1 += 1; }
            for l in &s.test { per.entry(l.learner).or_default().2 += 1; }
            for (_, (f, va, te)) in per {
                let n = f + va + te;
                let nt = floor_count(t, n);
                prop_assert_eq!(te, nt);
                prop_assert_eq!(va, floor_count(v, n - nt));
            }
        }

        #[test]
        fn vectors_match_scores(logs in arb_logs()) {
            let logs = preprocess(&logs, 0, true).unwrap();
            let vs = build_response_vectors(8, 6, &logs, EntityMode::Learner);
            let mut observed = std::collections::HashSet::new();
            for l in &logs {
                prop_assert_eq!(i32::from(vs[l.learner].0[l.question]), 2 * i32::from(l.score) - 1);
                observed.insert((l.learner, l.question));
            }
            for (i, v) in vs.iter().enumerate() {
                for (j, &x) in v.0.iter().enumerate() {
                    if !observed.contains(&(i, j)) { prop_assert_eq!(x, 0); }
                }
            }
        }
    }
}
