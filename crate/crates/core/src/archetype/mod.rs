//! Demographic archetypes: discretization rules, profile derivation,
//! Shannon entropy and extraction of the zero-entropy consensus mapping.

mod consensus;
mod discretize;
mod entropy;
mod profile;

pub use consensus::{
    extract_consensus, ConsensusError, ConsensusRecord, FilterMode, FilterStats, QuestionEntropy,
};
pub use discretize::{
    derive_profile, discretize_age, discretize_income, discretize_parenthood, discretize_response,
    Answer, DiscretizeError, ProfileRejection,
};
pub use entropy::{shannon_entropy, EntropyError, Histogram};
pub use profile::{Attribute, DemographicProfile, IncomeBracket, LifeStage, Parenthood};
