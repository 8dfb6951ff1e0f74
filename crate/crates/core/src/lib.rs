//! Demographic-value alignment toolkit.
//!
//! The pipeline turns survey microdata into a high-consensus corpus of
//! (demographic profile, value question, answer) triples, partitions it into
//! a training set and three generalization test sets, renders prompts,
//! evaluates completions and hosts the reward / group-relative advantage
//! machinery together with a small tabular policy trainer.
//!
//! Modules follow the pipeline order:
//!
//! - [`ingest`]: codebook, CSV parsing and the synthetic survey generator
//! - [`archetype`]: profile derivation, entropy and consensus extraction
//! - [`benchmark`]: split construction and counterfactual pairs
//! - [`prompt`]: template rendering and answer parsing
//! - [`inference`]: chat-completion driver with cache, retries and a stub backend
//! - [`metrics`]: accuracy, Likert consistency, Wasserstein, flip rate, Pearson
//! - [`grpo`]: rewards, advantages and the tabular trainer
//! - [`attribution`]: random forest with impurity-based importance
//! - [`semdist`]: cosine distance analysis over embedding files

pub mod archetype;
pub mod attribution;
pub mod benchmark;
pub mod grpo;
pub mod hashing;
pub mod inference;
pub mod ingest;
pub mod jsonl;
pub mod metrics;
pub mod prompt;
pub mod semdist;

pub use archetype::{
    Attribute, ConsensusRecord, DemographicProfile, FilterMode, FilterStats, Histogram,
};

pub use benchmark::{
    CorpusBundle, CorpusIndex, CorpusSample, CounterfactualPair, Split, SplitSpec,
};
pub use ingest::{Codebook, IngestStats, QuestionSpec, Respondent};
