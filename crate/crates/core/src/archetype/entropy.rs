use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EntropyError {
    #[error("histogram has no mass")]
    Empty,
}

/// Answer counts aligned to a question's option order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(k: usize) -> Self {
        Histogram { counts: vec![0; k] }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        Histogram { counts }
    }

    /// Counts option indices; indices must be below `k`.
    pub fn from_indices(k: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut h = Histogram::new(k);
        for i in indices {
            h.counts[i] += 1;
        }
        h
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn nonzero_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Index of the largest bin; ties go to the lowest index.
    pub fn mode(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        if max == 0 {
            return None;
        }
        self.counts.iter().position(|&c| c == max)
    }

    /// Whether more than one bin shares the maximum count.
    pub fn mode_is_tied(&self) -> bool {
        let Some(max) = self.counts.iter().max() else {
            return false;
        };
        *max > 0 && self.counts.iter().filter(|&c| c == max).count() > 1
    }

    pub fn probabilities(&self) -> Result<Vec<f64>, EntropyError> {
        let total = self.total();
        if total == 0 {
            return Err(EntropyError::Empty);
        }
        Ok(self
            .counts
            .iter()
            .map(|&c| c as f64 / total as f64)
            .collect())
    }
}

/// Shannon entropy in nats over the non-empty bins.
///
/// A histogram with all mass in one bin returns exactly `0.0`.
pub fn shannon_entropy(h: &Histogram) -> Result<f64, EntropyError> {
    let p = h.probabilities()?;
    if h.nonzero_bins() == 1 {
        return Ok(0.0);
    }
    Ok(-p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>())
}
