use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::advantage::group_advantages;
use super::policy::{grpo_step, GrpoError, Rollout, RolloutGroup, TabularPolicy, DEFAULT_KEY_ATTRIBUTES};
use super::reward::{compute_reward, RewardConfig};
use crate::archetype::Attribute;
use crate::benchmark::CorpusSample;
use crate::hashing::hash64_parts;
use crate::prompt::ParseResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub group_size: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub reward: RewardConfig,
    pub key_attributes: Vec<Attribute>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            group_size: 8,
            steps: 200,
            batch_size: 64,
            learning_rate: 16.0,
            temperature: 1.0,
            reward: RewardConfig::default(),
            key_attributes: DEFAULT_KEY_ATTRIBUTES.to_vec(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: String| Err(GrpoError::Config(m));
        if self.group_size == 0 {
            return bad("group_size must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return bad(format!("temperature must be finite and > 0, got {}", self.temperature));
        }
        self.reward.validate().map_err(GrpoError::Config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    /// Expected reward of the current policy over the whole corpus.
    pub mean_reward: f64,
    pub argmax_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub policy: TabularPolicy,
    pub trace: Vec<TracePoint>,
}

fn evaluate(policy: &TabularPolicy, corpus: &[CorpusSample], cfg: &RewardConfig, step: usize) -> Result<TracePoint, GrpoError> {
    let mut reward = 0.0;
    let mut correct = 0usize;
    for s in corpus {
        let key = policy.key(s);
        let probs = policy.probabilities(&key, s.k)?;
        for (j, p) in probs.iter().enumerate() {
            let parse = ParseResult::Ok {
                label: s.question.options.get(j).cloned().unwrap_or_default(),
                index: j,
            };
            reward += p * compute_reward(&parse, s.truth_index, s.k, cfg);
        }
        if policy.argmax(s)? == s.truth_index {
            correct += 1;
        }
    }
    Ok(TracePoint {
        step,
        mean_reward: reward / corpus.len() as f64,
        argmax_acc: correct as f64 / corpus.len() as f64,
    })
}

fn rollout_group(
    policy: &TabularPolicy,
    sample: &CorpusSample,
    cfg: &TrainConfig,
    step: usize,
) -> Result<RolloutGroup, GrpoError> {
    let key = policy.key(sample);
    // counter-based stream: independent of worker scheduling
    let mut rng = ChaCha8Rng::seed_from_u64(hash64_parts(&[
        &cfg.seed.to_string(),
        &step.to_string(),
        &sample.sample_id,
    ]));
    let mut rollouts = Vec::with_capacity(cfg.group_size);
    for _ in 0..cfg.group_size {
        let index = policy.sample_index(&key, sample.k, &mut rng)?;
        let parse = ParseResult::Ok {
            label: sample.question.options.get(index).cloned().unwrap_or_default(),
            index,
        };
        let reward = compute_reward(&parse, sample.truth_index, sample.k, &cfg.reward);
        rollouts.push(Rollout { index, parse, reward });
    }
    let rewards: Vec<f64> = rollouts.iter().map(|r| r.reward).collect();
    Ok(RolloutGroup {
        sample_id: sample.sample_id.clone(),
        key,
        k: sample.k,
        rollouts,
        advantages: group_advantages(&rewards),
    })
}

/// On-policy GRPO over the training corpus. Batches walk a seeded
/// permutation of the corpus, reshuffled each epoch. The trace has one
/// point for the initial policy and one per step.
pub fn train_toy(corpus: &[CorpusSample], cfg: &TrainConfig) -> Result<TrainOutcome, GrpoError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(GrpoError::EmptyCorpus);
    }
    let mut policy = TabularPolicy::new(cfg.key_attributes.clone(), cfg.temperature);
    let mut trace = vec![evaluate(&policy, corpus, &cfg.reward, 0)?];
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut cursor = corpus.len();
    let mut epoch = 0u64;
    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(corpus.len()) {
            if cursor == order.len() {
                let mut rng = ChaCha8Rng::seed_from_u64(hash64_parts(&[&cfg.seed.to_string(), "epoch", &epoch.to_string()]));
                order.shuffle(&mut rng);
                cursor = 0;
                epoch += 1;
            }
            batch.push(&corpus[order[cursor]]);
            cursor += 1;
        }
        let groups = batch
            .par_iter()
            .map(|s| rollout_group(&policy, s, cfg, step))
            .collect::<Result<Vec<_>, _>>()?;
        grpo_step(&mut policy, &groups, cfg.learning_rate)?;
        trace.push(evaluate(&policy, corpus, &cfg.reward, step)?);
    }
    if let Some(last) = trace.last() {
        tracing::info!(steps = cfg.steps, mean_reward = last.mean_reward, argmax_acc = last.argmax_acc, "training finished");
    }
    Ok(TrainOutcome { policy, trace })
}

pub fn trace_to_csv(trace: &[TracePoint]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for point in trace {
        w.serialize(point)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
