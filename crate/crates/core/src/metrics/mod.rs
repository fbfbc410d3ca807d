//! Identifiability (IDS), explainability (DOC, REO) and prediction metrics.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::io::create;
use crate::dataset::{QMatrix, ResponseLog};
use crate::diffcore::Matrix;
use crate::error::{CdmError, Result};

pub fn manhattan(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(CdmError::dim(
            "manhattan",
            format!("lengths {} and {}", u.len(), v.len()),
        ));
    }
    Ok(u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum())
}

fn check_groups(traits: &Matrix, groups: &[Vec<usize>]) -> Result<()> {
    if let Some(&bad) = groups.iter().flatten().find(|&&i| i >= traits.rows()) {
        return Err(CdmError::Validation(format!(
            "group member {bad} outside {} trait rows",
            traits.rows()
        )));
    }
    Ok(())
}

/// Manhattan distance of every unordered within-group pair.
pub fn within_group_distances(traits: &Matrix, groups: &[Vec<usize>]) -> Result<Vec<f64>> {
    check_groups(traits, groups)?;
    let mut out = Vec::new();
    for g in groups {
        for (a, &i) in g.iter().enumerate() {
            for &j in &g[a + 1..] {
                out.push(manhattan(traits.row(i), traits.row(j))?);
            }
        }
    }
    Ok(out)
}

/// Identifiability score: the mean of `1 / (1 + d)^2` over ordered pairs of
/// distinct entities with identical response vectors.
pub fn ids(traits: &Matrix, groups: &[Vec<usize>]) -> Result<f64> {
    let distances = within_group_distances(traits, groups)?;
    if distances.is_empty() {
        return Err(CdmError::NoIdenticalPairs);
    }
    // each unordered pair stands for two ordered ones with the same weight
    let total: f64 = distances.iter().map(|d| 1.0 / ((1.0 + d) * (1.0 + d))).sum();
    Ok(total / distances.len() as f64)
}

/// Per-question DOC (`None` where no pair is comparable) and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocResult {
    pub per_question: Vec<Option<f64>>,
    pub mean: f64,
}

/// Concordant and comparable (learner pair, concept) counts of one question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DocCounts {
    pub concordant: u64,
    pub comparable: u64,
}

/// Observed score per (learner, question) cell: majority vote, ties count
/// as incorrect.
pub(crate) fn cell_scores(logs: &[ResponseLog]) -> Vec<(usize, usize, u8)> {
    let mut votes: HashMap<(usize, usize), i64> = HashMap::new();
    let mut order = Vec::new();
    for log in logs {
        let v = votes.entry((log.learner, log.question)).or_insert_with(|| {
            order.push((log.learner, log.question));
            0
        });
        *v += if log.score == 1 { 1 } else { -1 };
    }
    order
        .into_iter()
        .map(|cell| (cell.0, cell.1, u8::from(votes[&cell] > 0)))
        .collect()
}

/// Counts per question: for every learner `i` who answered correctly, every
/// learner `j` who answered incorrectly and every required concept `k`, the
/// pair is comparable when `theta_ik != theta_jk` and concordant when
/// `theta_ik > theta_jk`.
pub fn doc_counts(traits: &Matrix, logs: &[ResponseLog], q: &QMatrix) -> Result<Vec<DocCounts>> {
    if traits.cols() != q.concepts() {
        return Err(CdmError::dim(
            "doc",
            format!(
                "traits have {} columns, Q-matrix {} concepts",
                traits.cols(),
                q.concepts()
            ),
        ));
    }
    let mut right: Vec<Vec<usize>> = vec![Vec::new(); q.questions()];
    let mut wrong: Vec<Vec<usize>> = vec![Vec::new(); q.questions()];
    for (i, j, r) in cell_scores(logs) {
        if i >= traits.rows() || j >= q.questions() {
            return Err(CdmError::Validation(format!(
                "log ({i}, {j}) outside {} learners x {} questions",
                traits.rows(),
                q.questions()
            )));
        }
        if r == 1 {
            right[j].push(i);
        } else {
            wrong[j].push(i);
        }
    }
    let mut out = vec![DocCounts::default(); q.questions()];
    let mut below: Vec<f64> = Vec::new();
    for l in 0..q.questions() {
        if right[l].is_empty() || wrong[l].is_empty() {
            continue;
        }
        for k in (0..q.concepts()).filter(|&k| q.row(l)[k] == 1) {
            below.clear();
            below.extend(wrong[l].iter().map(|&j| traits.get(j, k)));
            below.sort_by(f64::total_cmp);
            for &i in &right[l] {
                let t = traits.get(i, k);
                let less = below.partition_point(|&x| x < t);
                let not_more = below.partition_point(|&x| x <= t);
                out[l].concordant += less as u64;
                out[l].comparable += (below.len() - (not_more - less)) as u64;
            }
        }
    }
    Ok(out)
}

/// Degree of consistency between score order and trait order per question,
/// averaged over the questions where it is defined.
pub fn doc(traits: &Matrix, logs: &[ResponseLog], q: &QMatrix) -> Result<DocResult> {
    let per_question: Vec<Option<f64>> = doc_counts(traits, logs, q)?
        .into_iter()
        .map(|c| (c.comparable > 0).then(|| c.concordant as f64 / c.comparable as f64))
        .collect();
    let defined: Vec<f64> = per_question.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(CdmError::NoDefinedDoc);
    }
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(DocResult { per_question, mean })
}

/// `(mantissa, scale)` with `x = mantissa / 10^scale`, read from the
/// shortest decimal that round-trips to `x`.
fn short_decimal(x: f64) -> Option<(i128, u32)> {
    let text = format!("{x}");
    let (sign, digits) = match text.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, text.as_str()),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let all = format!("{int}{frac}");
    let significant = all.trim_start_matches('0').len();
    if significant > 15 || frac.len() > 30 {
        return None;
    }
    let m: i128 = all.parse().ok()?;
    Some((sign * m, frac.len() as u32))
}

/// Rate of explainability overfitting, `1 - doc_test / doc_train`.
///
/// Inputs with short decimal forms are combined exactly, so `reo(0.8, 0.6)`
/// is `0.25` rather than the nearest neighbour reached through binary
/// rounding of 0.8 and 0.6.
pub fn reo(doc_train: f64, doc_test: f64) -> Result<f64> {
    if doc_train == 0.0 {
        return Err(CdmError::ZeroTrainDoc);
    }
    if !(doc_train.is_finite() && doc_test.is_finite()) {
        return Err(CdmError::NonFinite {
            what: "doc",
            detail: format!("train {doc_train}, test {doc_test}"),
        });
    }
    if let (Some((a, sa)), Some((b, sb))) = (short_decimal(doc_train), short_decimal(doc_test)) {
        let s = sa.max(sb);
        let scale = |m: i128, from: u32| 10i128.checked_pow(s - from).and_then(|p| m.checked_mul(p));
        if let (Some(train), Some(test)) = (scale(a, sa), scale(b, sb)) {
            const EXACT: i128 = 1 << 53;
            let num = train - test;
            if num.abs() <= EXACT && train.abs() <= EXACT {
                return Ok(num as f64 / train as f64);
            }
        }
    }
    Ok(1.0 - doc_test / doc_train)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub acc: f64,
    pub rmse: f64,
    pub f1: f64,
}

/// Accuracy and F1 with `pred >= threshold` as the positive class, RMSE of
/// the raw probabilities. F1 is 0 when it would be 0/0.
pub fn classification_metrics(preds: &[f64], labels: &[u8], threshold: f64) -> Result<Classification> {
    if preds.len() != labels.len() {
        return Err(CdmError::dim(
            "classification_metrics",
            format!("{} predictions, {} labels", preds.len(), labels.len()),
        ));
    }
    if preds.is_empty() {
        return Err(CdmError::Empty("predictions"));
    }
    let (mut tp, mut fp, mut fne, mut hits) = (0u64, 0u64, 0u64, 0u64);
    let mut sq = 0.0;
    for (&p, &r) in preds.iter().zip(labels) {
        let positive = p >= threshold;
        let actual = r == 1;
        match (positive, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => {}
        }
        hits += u64::from(positive == actual);
        sq += (p - f64::from(r)).powi(2);
    }
    let n = preds.len() as f64;
    let denom = 2 * tp + fp + fne;
    Ok(Classification {
        acc: hits as f64 / n,
        rmse: (sq / n).sqrt(),
        f1: if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    /// Fraction of all distances in this bin or below it.
    pub cumulative: f64,
}

/// Non-empty bins `[b w, (b + 1) w)` in ascending order.
pub fn histogram(distances: &[f64], bin_width: f64) -> Result<Vec<HistogramBin>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(CdmError::Config(format!("bin width must be positive, got {bin_width}")));
    }
    if distances.is_empty() {
        return Err(CdmError::NoIdenticalPairs);
    }
    let mut counts: Vec<(u64, u64)> = Vec::new();
    let mut idx: Vec<u64> = distances.iter().map(|d| (d / bin_width).floor() as u64).collect();
    idx.sort_unstable();
    for b in idx {
        match counts.last_mut() {
            Some((last, c)) if *last == b => *c += 1,
            _ => counts.push((b, 1)),
        }
    }
    let total = distances.len() as f64;
    let mut seen = 0u64;
    Ok(counts
        .into_iter()
        .map(|(b, c)| {
            seen += c;
            HistogramBin {
                lo: b as f64 * bin_width,
                hi: (b + 1) as f64 * bin_width,
                count: c,
                cumulative: seen as f64 / total,
            }
        })
        .collect())
}

/// Histogram of within-group trait distances (unordered pairs).
pub fn distance_histogram(traits: &Matrix, groups: &[Vec<usize>], bin_width: f64) -> Result<Vec<HistogramBin>> {
    histogram(&within_group_distances(traits, groups)?, bin_width)
}

pub fn write_histogram_csv(bins: &[HistogramBin], path: &Path) -> Result<()> {
    let mut body = String::from("bin_lo,bin_hi,count,cumulative\n");
    for b in bins {
        body.push_str(&format!("{},{},{},{}\n", b.lo, b.hi, b.count, b.cumulative));
    }
    let mut w = create(path)?;
    w.write_all(body.as_bytes()).map_err(|e| CdmError::io(path, e))
}

/// Everything measured for one model run; absent entries were not requested
/// or do not apply (e.g. DOC for scalar-trait models).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ids_learner: Option<f64>,
    pub ids_question: Option<f64>,
    pub mean_doc_train: Option<f64>,
    pub mean_doc_test: Option<f64>,
    pub reo: Option<f64>,
    pub acc: Option<f64>,
    pub rmse: Option<f64>,
    pub f1: Option<f64>,
    pub histogram: Vec<HistogramBin>,
}

impl MetricsReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| CdmError::Validation(e.to_string()))?;
        let mut w = create(path)?;
        writeln!(w, "{json}").map_err(|e| CdmError::io(path, e))
    }
}

#[cfg(test)]
mod tests;
