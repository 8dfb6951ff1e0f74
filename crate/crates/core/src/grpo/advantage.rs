pub const ADVANTAGE_EPS: f64 = 1e-8;

/// Standardizes rewards within a group with the population standard
/// deviation. Groups whose spread is at most `ADVANTAGE_EPS` get all-zero
/// advantages.
pub fn group_advantages(rewards: &[f64]) -> Vec<f64> {
    let g = rewards.len();
    if g == 0 {
        return Vec::new();
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g as f64;
    let std = var.sqrt();
    if std <= ADVANTAGE_EPS {
        return vec![0.0; g];
    }
    rewards.iter().map(|r| (r - mean) / (std + ADVANTAGE_EPS)).collect()
}
