use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archetype::Attribute;
use crate::benchmark::CorpusSample;
use crate::hashing::hash64_parts;
use crate::prompt::ParseResult;

pub const DEFAULT_KEY_ATTRIBUTES: [Attribute; 3] = [Attribute::Country, Attribute::IncomeBracket, Attribute::Religion];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrpoError {
    #[error("non-finite gradient for key {0}")]
    NonFiniteGradient(String),
    #[error("key {key} has {have} logits but the question has {want} options")]
    RowLength { key: String, have: usize, want: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid training config: {0}")]
    Config(String),
}

/// Softmax policy with one logit row per (profile bucket, question) key.
/// Rows are created lazily; an unseen key behaves as all-zero logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub key_attributes: Vec<Attribute>,
    pub temperature: f64,
    pub logits: BTreeMap<String, Vec<f64>>,
}

impl Default for TabularPolicy {
    fn default() -> Self {
        TabularPolicy::new(DEFAULT_KEY_ATTRIBUTES.to_vec(), 1.0)
    }
}

fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| ((l - max) / temperature).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl TabularPolicy {
    pub fn new(key_attributes: Vec<Attribute>, temperature: f64) -> Self {
        TabularPolicy {
            key_attributes,
            temperature,
            logits: BTreeMap::new(),
        }
    }

    pub fn key(&self, sample: &CorpusSample) -> String {
        format!("{}::{}", sample.profile.projection(&self.key_attributes), sample.question.id)
    }

    pub fn row(&self, key: &str, k: usize) -> Result<Vec<f64>, GrpoError> {
        match self.logits.get(key) {
            None => Ok(vec![0.0; k]),
            Some(row) if row.len() == k => Ok(row.clone()),
            Some(row) => Err(GrpoError::RowLength {
                key: key.to_string(),
                have: row.len(),
                want: k,
            }),
        }
    }

    pub fn probabilities(&self, key: &str, k: usize) -> Result<Vec<f64>, GrpoError> {
        Ok(softmax(&self.row(key, k)?, self.temperature))
    }

    /// Most likely option, ties to the lowest index.
    pub fn argmax(&self, sample: &CorpusSample) -> Result<usize, GrpoError> {
        Ok(argmax(&self.row(&self.key(sample), sample.k)?))
    }

    pub(crate) fn sample_index(&self, key: &str, k: usize, rng: &mut impl Rng) -> Result<usize, GrpoError> {
        Ok(draw(&self.probabilities(key, k)?, rng))
    }
}

fn draw(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    Argmax,
    /// Draws from softmax(logits / temperature) with a stream derived from
    /// the seed and the sample id.
    Softmax { temperature: f64, seed: u64 },
}

pub fn policy_predict(policy: &TabularPolicy, sample: &CorpusSample, sampling: Sampling) -> Result<usize, GrpoError> {
    match sampling {
        Sampling::Argmax => policy.argmax(sample),
        Sampling::Softmax { temperature, seed } => {
            let row = policy.row(&policy.key(sample), sample.k)?;
            let mut rng = ChaCha8Rng::seed_from_u64(hash64_parts(&[&seed.to_string(), &sample.sample_id]));
            Ok(draw(&softmax(&row, temperature), &mut rng))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub index: usize,
    pub parse: ParseResult,
    pub reward: f64,
}

/// G rollouts for one sample, with the advantages computed from their
/// rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub sample_id: String,
    pub key: String,
    pub k: usize,
    pub rollouts: Vec<Rollout>,
    pub advantages: Vec<f64>,
}

/// Mean over groups of `(1/G) sum_i A_i log pi(o_i | key)`.
pub fn objective(policy: &TabularPolicy, groups: &[RolloutGroup]) -> Result<f64, GrpoError> {
    if groups.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for g in groups {
        let probs = policy.probabilities(&g.key, g.k)?;
        let n = g.rollouts.len().max(1) as f64;
        total += g
            .rollouts
            .iter()
            .zip(&g.advantages)
            .map(|(r, a)| a * probs[r.index].ln())
            .sum::<f64>()
            / n;
    }
    Ok(total / groups.len() as f64)
}

/// Closed-form gradient of [`objective`] with respect to each touched logit
/// row: `d log pi_o / d theta_j = (1[j = o] - pi_j) / T`.
pub fn policy_gradient(policy: &TabularPolicy, groups: &[RolloutGroup]) -> Result<BTreeMap<String, Vec<f64>>, GrpoError> {
    let mut grad: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    if groups.is_empty() {
        return Ok(grad);
    }
    let scale = 1.0 / groups.len() as f64;
    for g in groups {
        let probs = policy.probabilities(&g.key, g.k)?;
        let row = grad.entry(g.key.clone()).or_insert_with(|| vec![0.0; g.k]);
        if row.len() != g.k {
            return Err(GrpoError::RowLength {
                key: g.key.clone(),
                have: row.len(),
                want: g.k,
            });
        }
        let n = g.rollouts.len().max(1) as f64;
        for (r, a) in g.rollouts.iter().zip(&g.advantages) {
            if *a == 0.0 {
                continue;
            }
            let w = scale * a / (n * policy.temperature);
            for (j, slot) in row.iter_mut().enumerate() {
                let indicator = if j == r.index { 1.0 } else { 0.0 };
                *slot += w * (indicator - probs[j]);
            }
        }
    }
    for (key, row) in &grad {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(GrpoError::NonFiniteGradient(key.clone()));
        }
    }
    Ok(grad)
}

/// One gradient-ascent step. Rows with an all-zero gradient are left
/// untouched.
pub fn grpo_step(policy: &mut TabularPolicy, groups: &[RolloutGroup], learning_rate: f64) -> Result<(), GrpoError> {
    let grad = policy_gradient(policy, groups)?;
    for (key, g) in grad {
        if learning_rate == 0.0 || g.iter().all(|v| *v == 0.0) {
            continue;
        }
        let row = policy.logits.entry(key).or_insert_with(|| vec![0.0; g.len()]);
        for (theta, d) in row.iter_mut().zip(&g) {
            if *d != 0.0 {
                *theta += learning_rate * d;
            }
        }
    }
    Ok(())
}
