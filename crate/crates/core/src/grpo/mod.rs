//! Binary and Likert-adjusted rewards, group-relative advantages and a
//! small GRPO trainer over a tabular softmax policy.

mod advantage;
mod policy;
mod reward;
mod trainer;

pub use advantage::{group_advantages, ADVANTAGE_EPS};
pub use policy::{
    grpo_step, objective, policy_gradient, policy_predict, GrpoError, Rollout, RolloutGroup, Sampling,
    TabularPolicy, DEFAULT_KEY_ATTRIBUTES,
};
pub use reward::{compute_reward, RewardConfig, RewardMode};
pub use trainer::{trace_to_csv, train_toy, TracePoint, TrainConfig, TrainOutcome};
