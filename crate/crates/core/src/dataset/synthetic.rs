//! Seeded generator for response data with a known latent structure.
//!
//! Each learner has a general ability plus concept-specific deviations; the
//! probability of a correct answer is a logistic function of the learner's
//! mean ability over the concepts a question requires. Used wherever the
//! public datasets are not at hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{QMatrix, ResponseDataset, ResponseLog};
use crate::diffcore::sigmoid;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub learners: usize,
    pub questions: usize,
    pub concepts: usize,
    pub concepts_per_question: f64,
    pub correct_rate: f64,
    /// Probability that a given learner answered a given question.
    pub answer_rate: f64,
    /// Spread of concept-specific ability around the general ability.
    pub concept_spread: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Matches the Math1 summary: 4,209 learners, 20 questions, 11 concepts,
    /// 3.35 concepts per question, every learner answers every question,
    /// correct rate 0.424.
    pub fn math1_like(seed: u64) -> Self {
        Self {
            learners: 4209,
            questions: 20,
            concepts: 11,
            concepts_per_question: 3.35,
            correct_rate: 0.424,
            answer_rate: 1.0,
            concept_spread: 0.8,
            seed,
        }
    }
}

struct Item {
    concepts: Vec<usize>,
    discrimination: f64,
    difficulty: f64,
}

pub fn generate(cfg: &SyntheticConfig) -> Result<ResponseDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.concepts;
    let base = cfg.concepts_per_question.floor() as usize;
    let frac = cfg.concepts_per_question - base as f64;

    let mut q_rows = Vec::with_capacity(cfg.questions);
    let mut items = Vec::with_capacity(cfg.questions);
    let diff = Normal::new(0.0, 0.6).expect("valid");
    for _ in 0..cfg.questions {
        let size = (base + usize::from(rng.random_bool(frac))).clamp(1, k);
        let concepts = rand::seq::index::sample(&mut rng, k, size).into_vec();
        let mut row = vec![0u8; k];
        for &c in &concepts {
            row[c] = 1;
        }
        q_rows.push(row);
        items.push(Item {
            concepts,
            discrimination: rng.random_range(1.2..2.5),
            difficulty: diff.sample(&mut rng),
        });
    }

    let general = Normal::new(0.0, 1.0).expect("valid");
    let spread = Normal::new(0.0, cfg.concept_spread).expect("valid");
    let abilities: Vec<Vec<f64>> = (0..cfg.learners)
        .map(|_| {
            let g = general.sample(&mut rng);
            (0..k).map(|_| g + spread.sample(&mut rng)).collect()
        })
        .collect();

    // (learner, question, logit without the global shift)
    let mut pairs = Vec::new();
    for (i, ab) in abilities.iter().enumerate() {
        for (j, item) in items.iter().enumerate() {
            if cfg.answer_rate < 1.0 && !rng.random_bool(cfg.answer_rate) {
                continue;
            }
            let mean = item.concepts.iter().map(|&c| ab[c]).sum::<f64>() / item.concepts.len() as f64;
            pairs.push((i, j, item.discrimination, mean - item.difficulty));
        }
    }

    // global shift so that the expected correct rate hits the target
    let expected = |shift: f64| -> f64 {
        pairs.iter().map(|&(_, _, a, z)| sigmoid(a * (z - shift))).sum::<f64>() / pairs.len().max(1) as f64
    };
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) > cfg.correct_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let shift = 0.5 * (lo + hi);

    let logs = pairs
        .into_iter()
        .map(|(i, j, a, z)| {
            let p = sigmoid(a * (z - shift));
            ResponseLog::new(i, j, u8::from(rng.random_bool(p)))
        })
        .collect();
    ResponseDataset::from_dense(cfg.learners, logs, QMatrix::new(q_rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn math1_shape() {
        let ds = generate(&SyntheticConfig::math1_like(0)).unwrap();
        assert_eq!((ds.n_learners, ds.n_questions, ds.n_concepts), (4209, 20, 11));
        assert_eq!(ds.logs.len(), 84_180);
        assert!((ds.correct_rate() - 0.424).abs() < 0.02, "{}", ds.correct_rate());
        let kc = ds.q_matrix.mean_concepts_per_question();
        assert!((2.5..=4.5).contains(&kc), "{kc}");
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig {
            learners: 50,
            ..SyntheticConfig::math1_like(5)
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    }
}
