use serde::{Deserialize, Serialize};

use crate::prompt::ParseResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    #[default]
    Binary,
    LikertSoft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub mode: RewardMode,
    /// Weight of the answer term in soft mode.
    pub alpha: f64,
    /// Weight of the format term.
    pub beta: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            mode: RewardMode::Binary,
            alpha: 1.0,
            beta: 0.1,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        if self.mode == RewardMode::LikertSoft && !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(format!("alpha must be finite and > 0 in soft mode, got {}", self.alpha));
        }
        Ok(())
    }
}

/// Answer term plus `beta` times the format indicator. A format error
/// scores zero on both terms.
pub fn compute_reward(parse: &ParseResult, truth_index: usize, k: usize, cfg: &RewardConfig) -> f64 {
    let Some(pred) = parse.index() else {
        return 0.0;
    };
    let answer = match cfg.mode {
        RewardMode::Binary => {
            if pred == truth_index {
                1.0
            } else {
                0.0
            }
        }
        RewardMode::LikertSoft => {
            let span = k.saturating_sub(1).max(1) as f64;
            cfg.alpha * (1.0 - pred.abs_diff(truth_index) as f64 / span)
        }
    };
    answer + cfg.beta * 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::FormatErrorReason;

    fn ok(i: usize) -> ParseResult {
        ParseResult::Ok {
            label: String::new(),
            index: i,
        }
    }

    #[test]
    fn binary_examples() {
        let cfg = RewardConfig::default();
        assert_eq!(compute_reward(&ok(1), 1, 3, &cfg), 1.1);
        assert_eq!(compute_reward(&ok(0), 1, 3, &cfg), 0.1);
        let bad = ParseResult::FormatError {
            reason: FormatErrorReason::NoTag,
        };
        assert_eq!(compute_reward(&bad, 1, 3, &cfg), 0.0);
    }

    #[test]
    fn soft_examples() {
        let cfg = RewardConfig {
            mode: RewardMode::LikertSoft,
            alpha: 1.0,
            beta: 0.0,
        };
        assert_eq!(compute_reward(&ok(1), 0, 3, &cfg), 0.5);
        assert_eq!(compute_reward(&ok(2), 0, 3, &cfg), 0.0);
        assert_eq!(compute_reward(&ok(0), 0, 3, &cfg), 1.0);
    }

    #[test]
    fn validation() {
        assert!(RewardConfig::default().validate().is_ok());
        let soft = RewardConfig {
            mode: RewardMode::LikertSoft,
            alpha: 0.0,
            beta: 0.1,
        };
        assert!(soft.validate().is_err());
        let neg = RewardConfig {
            beta: -1.0,
            ..RewardConfig::default()
        };
        assert!(neg.validate().is_err());
    }
}
