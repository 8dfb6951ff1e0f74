//! Survey ingestion: declarative codebook, CSV microdata parsing and a
//! seeded synthetic survey generator with planted consensus structure.

mod codebook;
mod survey;
mod synthetic;

pub use codebook::{
    Codebook, CodebookError, DemographicVar, Discretization, QuestionRole, QuestionSpec, ScaleKind,
    Transform, DEFAULT_CODEBOOK_JSON, DEFAULT_MISSING_CODES,
};
pub use survey::{parse_survey, respondents_to_csv, IngestError, IngestStats, Respondent};
pub use synthetic::{generate_synthetic, Planting, SyntheticError, SyntheticSpec};
