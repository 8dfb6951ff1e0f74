use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archetype::Histogram;
use crate::hashing::hash64_parts;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ForestError {
    #[error("no samples to fit")]
    Empty,
    #[error("row {row} has {got} features, expected {want}")]
    RowWidth { row: usize, got: usize, want: usize },
    #[error("label {label} out of range for {n_labels} classes")]
    Label { label: usize, n_labels: usize },
    #[error("invalid forest config: {0}")]
    Config(String),
}

/// Impurity `1 - sum p_i^2`.
pub fn gini(h: &Histogram) -> Result<f64, ForestError> {
    let total = h.total();
    if total == 0 {
        return Err(ForestError::Empty);
    }
    Ok(gini_counts(&h.counts, total as f64))
}

fn gini_counts(counts: &[u64], total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|&c| (c as f64 / total).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "n")]
pub enum FeatureSubset {
    #[default]
    Sqrt,
    All,
    Fixed(usize),
}

impl FeatureSubset {
    fn count(self, n_features: usize) -> usize {
        let m = match self {
            FeatureSubset::Sqrt => (n_features as f64).sqrt().round() as usize,
            FeatureSubset::All => n_features,
            FeatureSubset::Fixed(n) => n,
        };
        m.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub features_per_split: FeatureSubset,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 12,
            min_samples_leaf: 5,
            features_per_split: FeatureSubset::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::Config("n_trees must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(ForestError::Config("min_samples_leaf must be >= 1".into()));
        }
        if self.features_per_split == FeatureSubset::Fixed(0) {
            return Err(ForestError::Config("features_per_split must be >= 1".into()));
        }
        Ok(())
    }
}

/// Categorical rows encoded per feature against the sorted set of observed
/// values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub categories: Vec<Vec<String>>,
    pub rows: Vec<Vec<u32>>,
    pub labels: Vec<usize>,
    pub n_labels: usize,
    /// Content hash plus occurrence count; drives the bootstrap so that
    /// reordering the input leaves the forest unchanged.
    keys: Vec<String>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, samples: &[(Vec<String>, usize)], n_labels: usize) -> Result<Self, ForestError> {
        if samples.is_empty() {
            return Err(ForestError::Empty);
        }
        let width = feature_names.len();
        let mut categories: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); width];
        for (row, (values, label)) in samples.iter().enumerate() {
            if values.len() != width {
                return Err(ForestError::RowWidth {
                    row,
                    got: values.len(),
                    want: width,
                });
            }
            if *label >= n_labels {
                return Err(ForestError::Label { label: *label, n_labels });
            }
            for (f, v) in values.iter().enumerate() {
                categories[f].insert(v);
            }
        }
        let categories: Vec<Vec<String>> = categories
            .into_iter()
            .map(|s| s.into_iter().map(str::to_string).collect())
            .collect();
        let mut seen: HashMap<u64, u64> = HashMap::new();
        let mut rows = Vec::with_capacity(samples.len());
        let mut keys = Vec::with_capacity(samples.len());
        for (values, label) in samples {
            let encoded: Vec<u32> = values
                .iter()
                .enumerate()
                .map(|(f, v)| categories[f].binary_search(v).expect("value was collected") as u32)
                .collect();
            let mut parts: Vec<&str> = values.iter().map(String::as_str).collect();
            let label_s = label.to_string();
            parts.push(&label_s);
            let content = hash64_parts(&parts);
            let occurrence = seen.entry(content).or_insert(0);
            keys.push(format!("{content:016x}#{occurrence}"));
            *occurrence += 1;
            rows.push(encoded);
        }
        Ok(Dataset {
            feature_names,
            categories,
            rows,
            labels: samples.iter().map(|s| s.1).collect(),
            n_labels,
            keys,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn distinct_labels(&self) -> usize {
        self.labels.iter().collect::<BTreeSet<_>>().len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        counts: Vec<u64>,
    },
    /// Rows whose feature equals `category` go left.
    Split {
        feature: usize,
        category: u32,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Weighted impurity decrease per feature, as a fraction of the root
    /// weight.
    pub importance: Vec<f64>,
}

impl Tree {
    pub fn root_split_feature(&self) -> Option<usize> {
        match self.nodes.first() {
            Some(Node::Split { feature, .. }) => Some(*feature),
            _ => None,
        }
    }

    fn leaf_counts(&self, row: &[u32]) -> &[u64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    category,
                    left,
                    right,
                } => i = if row[*feature] == *category { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub n_labels: usize,
}

impl Forest {
    /// Majority vote of the trees' leaf modes, ties to the lowest label.
    pub fn predict(&self, row: &[u32]) -> usize {
        let mut votes = vec![0u64; self.n_labels];
        for t in &self.trees {
            let counts = t.leaf_counts(row);
            if let Some(m) = Histogram::from_counts(counts.to_vec()).mode() {
                votes[m] += 1;
            }
        }
        Histogram::from_counts(votes).mode().unwrap_or(0)
    }
}

/// Poisson(1) draw by inverse transform.
fn poisson_one(u: f64) -> u64 {
    let mut k = 0u64;
    let mut p = (-1.0f64).exp();
    let mut cum = p;
    while u > cum && k < 32 {
        k += 1;
        p /= k as f64;
        cum += p;
    }
    k
}

struct Grower<'a> {
    data: &'a Dataset,
    cfg: &'a ForestConfig,
    tree_index: usize,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    root_weight: f64,
}

impl Grower<'_> {
    fn label_counts(&self, members: &[(usize, u64)]) -> Vec<u64> {
        let mut counts = vec![0u64; self.data.n_labels];
        for &(i, w) in members {
            counts[self.data.labels[i]] += w;
        }
        counts
    }

    /// All features in the order they are examined at this node, and how
    /// many of them form the random subset.
    fn candidate_features(&self, path: &str) -> (Vec<usize>, usize) {
        let n = self.data.n_features();
        let m = self.cfg.features_per_split.count(n);
        if m >= n {
            return ((0..n).collect(), n);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(hash64_parts(&[
            &self.cfg.seed.to_string(),
            &self.tree_index.to_string(),
            path,
        ]));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        (order, m)
    }

    fn grow(&mut self, members: Vec<(usize, u64)>, depth: usize, path: String) -> usize {
        let id = self.nodes.len();
        let counts = self.label_counts(&members);
        let weight: u64 = counts.iter().sum();
        self.nodes.push(Node::Leaf { counts: counts.clone() });
        let min_leaf = self.cfg.min_samples_leaf as u64;
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if depth >= self.cfg.max_depth || pure || weight < 2 * min_leaf {
            return id;
        }
        let parent_gini = gini_counts(&counts, weight as f64);
        // (decrease, feature, category)
        let mut best: Option<(f64, usize, u32)> = None;
        let (order, m) = self.candidate_features(&path);
        for (rank, &f) in order.iter().enumerate() {
            // past the subset, keep looking only until some split is valid
            if rank >= m && best.is_some() {
                break;
            }
            let n_cat = self.data.categories[f].len();
            let mut table = vec![vec![0u64; self.data.n_labels]; n_cat];
            for &(i, w) in &members {
                table[self.data.rows[i][f] as usize][self.data.labels[i]] += w;
            }
            for (c, left) in table.iter().enumerate() {
                let wl: u64 = left.iter().sum();
                let wr = weight - wl;
                if wl < min_leaf || wr < min_leaf {
                    continue;
                }
                let right: Vec<u64> = counts.iter().zip(left).map(|(a, b)| a - b).collect();
                let decrease = weight as f64 * parent_gini
                    - wl as f64 * gini_counts(left, wl as f64)
                    - wr as f64 * gini_counts(&right, wr as f64);
                if decrease <= 1e-12 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((d, bf, bc)) => decrease > d + 1e-12 || ((decrease - d).abs() <= 1e-12 && (f, c as u32) < (bf, bc)),
                };
                if better {
                    best = Some((decrease, f, c as u32));
                }
            }
        }
        let Some((decrease, feature, category)) = best else {
            return id;
        };
        self.importance[feature] += decrease / self.root_weight;
        let (left, right): (Vec<_>, Vec<_>) = members
            .into_iter()
            .partition(|&(i, _)| self.data.rows[i][feature] == category);
        let l = self.grow(left, depth + 1, format!("{path}L"));
        let r = self.grow(right, depth + 1, format!("{path}R"));
        self.nodes[id] = Node::Split {
            feature,
            category,
            left: l,
            right: r,
        };
        id
    }
}

fn grow_tree(data: &Dataset, cfg: &ForestConfig, tree_index: usize) -> Tree {
    let members: Vec<(usize, u64)> = (0..data.len())
        .map(|i| {
            let w = if cfg.bootstrap {
                let h = hash64_parts(&[&cfg.seed.to_string(), &tree_index.to_string(), &data.keys[i]]);
                poisson_one(crate::hashing::unit_interval(h))
            } else {
                1
            };
            (i, w)
        })
        .filter(|&(_, w)| w > 0)
        .collect();
    let root_weight = members.iter().map(|m| m.1).sum::<u64>().max(1) as f64;
    let mut grower = Grower {
        data,
        cfg,
        tree_index,
        nodes: Vec::new(),
        importance: vec![0.0; data.n_features()],
        root_weight,
    };
    grower.grow(members, 0, String::new());
    Tree {
        nodes: grower.nodes,
        importance: grower.importance,
    }
}

/// Grows `cfg.n_trees` trees in parallel. Deterministic for a fixed seed and
/// independent of row order.
pub fn fit_forest(data: &Dataset, cfg: &ForestConfig) -> Result<Forest, ForestError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ForestError::Empty);
    }
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(data, cfg, t))
        .collect();
    Ok(Forest {
        trees,
        n_features: data.n_features(),
        n_labels: data.n_labels,
    })
}
