use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use dvmap_core::archetype::{Attribute, FilterMode};
use dvmap_core::attribution::{ForestConfig, ImportanceConfig};
use dvmap_core::benchmark::{Split, SplitSpec};
use dvmap_core::grpo::{RewardConfig, TrainConfig, DEFAULT_KEY_ATTRIBUTES};
use dvmap_core::hashing::stage_seed;
use dvmap_core::inference::EndpointConfig;
use dvmap_core::ingest::SyntheticSpec;
use dvmap_core::metrics::Grouping;
use dvmap_core::prompt::PromptMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Survey CSV. When absent, stages read the output of `generate`.
    pub survey: Option<PathBuf>,
    /// Codebook JSON. When absent, the bundled WVS-7 codebook is used.
    pub codebook: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    /// JSONL of `{"id", "vector"}` objects for `semdist`.
    pub embeddings: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            survey: None,
            codebook: None,
            out_dir: PathBuf::from("out"),
            cache_dir: None,
            embeddings: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchetypeSection {
    pub mode: FilterMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptsSection {
    pub mode: PromptMode,
    pub splits: Vec<Split>,
}

impl Default for PromptsSection {
    fn default() -> Self {
        PromptsSection {
            mode: PromptMode::StructuredCot,
            splits: Split::TESTS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Http,
    /// Offline stub that answers every known prompt with its true label.
    StubTruth,
    /// Offline stub that returns the same completion for every prompt.
    StubConstant { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub label: String,
    pub backend: BackendChoice,
    pub splits: Vec<Split>,
    pub grouping: Grouping,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            label: "model".into(),
            backend: BackendChoice::Http,
            splits: Split::TESTS.to_vec(),
            grouping: Grouping::CountryQuestion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub group_size: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub key_attributes: Vec<Attribute>,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            group_size: d.group_size,
            steps: d.steps,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            temperature: d.temperature,
            key_attributes: DEFAULT_KEY_ATTRIBUTES.to_vec(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceSource {
    #[default]
    Records,
    Respondents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceSection {
    pub source: ImportanceSource,
    pub min_samples: usize,
    pub include_country: bool,
}

impl Default for ImportanceSection {
    fn default() -> Self {
        let d = ImportanceConfig::default();
        ImportanceSection {
            source: ImportanceSource::Records,
            min_samples: d.min_samples,
            include_country: d.include_country,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlipSection {
    pub splits: Vec<Split>,
    pub attribute: Attribute,
}

impl Default for FlipSection {
    fn default() -> Self {
        FlipSection {
            splits: Split::TESTS.to_vec(),
            attribute: Attribute::IncomeBracket,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemdistSection {
    /// Accuracy gain per held-out question, in points.
    pub gains: BTreeMap<String, f64>,
    /// Defaults to the split's cross-value questions.
    pub test_questions: Option<Vec<String>>,
    /// Defaults to the split's training questions.
    pub train_questions: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRun {
    pub label: String,
    /// An `eval/report.json` from some run.
    pub report: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportSection {
    /// Empty means this run's own evaluation report.
    pub runs: Vec<ReportRun>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synthetic: SyntheticSpec,
    pub archetype: ArchetypeSection,
    pub split: SplitSpec,
    pub prompts: PromptsSection,
    pub eval: EvalSection,
    pub endpoint: EndpointConfig,
    pub reward: RewardConfig,
    pub train: TrainSection,
    pub forest: ForestConfig,
    pub importance: ImportanceSection,
    pub flip: FlipSection,
    pub semdist: SemdistSection,
    pub report: ReportSection,
}

#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub problems: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config {}:", self.path.display())?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// Overrides applied from the command line before seeds are resolved.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// Seeds explicitly set in the file win; the rest derive from the global
/// seed and the stage name.
const STAGE_SEEDS: [(&str, &str); 3] = [("/split/seed", "split"), ("/forest/seed", "importance"), ("/train/seed", "train-toy")];

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let fail = |problems: Vec<String>| ConfigError {
        path: path.to_path_buf(),
        problems,
    };
    let text = std::fs::read_to_string(path).map_err(|e| fail(vec![format!("cannot read: {e}")]))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| fail(vec![format!("not valid JSON: {e}")]))?;
    let mut unknown = Vec::new();
    let mut cfg: RunConfig = serde_ignored::deserialize(raw.clone(), |p| unknown.push(p.to_string()))
        .map_err(|e| fail(vec![format!("type error: {e}")]))?;
    let mut problems: Vec<String> = unknown.into_iter().map(|k| format!("unknown key `{k}`")).collect();

    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &overrides.out_dir {
        cfg.paths.out_dir = out.clone();
    }
    for (pointer, stage) in STAGE_SEEDS {
        if raw.pointer(pointer).is_none() {
            let derived = stage_seed(cfg.seed, stage);
            match stage {
                "split" => cfg.split.seed = derived,
                "importance" => cfg.forest.seed = derived,
                _ => cfg.train.seed = derived,
            }
        }
    }
    if cfg.paths.cache_dir.is_some() {
        cfg.endpoint.cache_dir = cfg.paths.cache_dir.clone();
    }

    problems.extend(cfg.validate());
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(fail(problems))
    }
}

impl RunConfig {
    /// Every problem found, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for (name, p) in [
            ("paths.survey", &self.paths.survey),
            ("paths.codebook", &self.paths.codebook),
            ("paths.embeddings", &self.paths.embeddings),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    problems.push(format!("{name}: {} does not exist", p.display()));
                }
            }
        }
        if self.paths.out_dir.exists() && !self.paths.out_dir.is_dir() {
            problems.push(format!("paths.out_dir: {} is not a directory", self.paths.out_dir.display()));
        }
        if let Err(e) = self.split.validate() {
            problems.push(format!("split: {e}"));
        }
        if let Err(e) = self.endpoint.validate() {
            problems.push(format!("endpoint: {e}"));
        }
        if let Err(e) = self.reward.validate() {
            problems.push(format!("reward: {e}"));
        }
        if let Err(e) = self.train_config().validate() {
            problems.push(format!("train: {e}"));
        }
        if let Err(e) = self.forest.validate() {
            problems.push(format!("forest: {e}"));
        }
        if !(0.0..=1.0).contains(&self.synthetic.noise) {
            problems.push(format!("synthetic.noise must lie in [0, 1], got {}", self.synthetic.noise));
        }
        if self.prompts.splits.is_empty() {
            problems.push("prompts.splits must not be empty".into());
        }
        if self.eval.splits.is_empty() {
            problems.push("eval.splits must not be empty".into());
        }
        for s in &self.eval.splits {
            if !self.prompts.splits.contains(s) {
                problems.push(format!("eval.splits: {s} has no prompts (add it to prompts.splits)"));
            }
        }
        if self.flip.attribute != Attribute::IncomeBracket {
            problems.push(format!("flip.attribute: only income_bracket is supported, got {}", self.flip.attribute));
        }
        problems
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            group_size: self.train.group_size,
            steps: self.train.steps,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            temperature: self.train.temperature,
            reward: self.reward,
            key_attributes: self.train.key_attributes.clone(),
            seed: self.train.seed,
        }
    }

    pub fn importance_config(&self) -> ImportanceConfig {
        ImportanceConfig {
            forest: self.forest,
            min_samples: self.importance.min_samples,
            include_country: self.importance.include_country,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("run.json");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_config_is_fully_defaulted() {
        let dir = tempfile::tempdir().unwrap();
        let survey = dir.path().join("s.csv");
        std::fs::write(&survey, "x").unwrap();
        let out = dir.path().join("out");
        let body = serde_json::json!({"paths": {"survey": survey, "out_dir": out}}).to_string();
        let cfg = load_config(&write(dir.path(), &body), &Overrides::default()).unwrap();
        assert_eq!(cfg.endpoint.temperature, 0.0);
        assert_eq!(cfg.reward.beta, 0.1);
        assert_eq!(cfg.split.seed, stage_seed(0, "split"));
        assert_eq!(cfg.forest.n_trees, 100);
    }

    #[test]
    fn unknown_keys_are_all_reported() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let body = serde_json::json!({
            "paths": {"out_dir": out},
            "endpoint": {"tempratue": 0.5},
            "forest": {"n_tree": 3}
        })
        .to_string();
        let err = load_config(&write(dir.path(), &body), &Overrides::default()).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("endpoint.tempratue"), "{text}");
        assert!(text.contains("forest.n_tree"), "{text}");
    }

    #[test]
    fn validation_problems_aggregate() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let body = serde_json::json!({
            "paths": {"out_dir": out, "survey": dir.path().join("missing.csv")},
            "endpoint": {"temperature": -1.0},
            "forest": {"n_trees": 0}
        })
        .to_string();
        let err = load_config(&write(dir.path(), &body), &Overrides::default()).unwrap_err();
        assert_eq!(err.problems.len(), 3, "{err}");
    }

    #[test]
    fn explicit_stage_seed_wins() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let body = serde_json::json!({"paths": {"out_dir": out}, "split": {"seed": 7}}).to_string();
        let over = Overrides {
            seed: Some(3),
            out_dir: None,
        };
        let cfg = load_config(&write(dir.path(), &body), &over).unwrap();
        assert_eq!(cfg.split.seed, 7);
        assert_eq!(cfg.train.seed, stage_seed(3, "train-toy"));
    }

    #[test]
    fn type_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_config(&write(dir.path(), r#"{"seed": "x"}"#), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("type error"));
    }
}
