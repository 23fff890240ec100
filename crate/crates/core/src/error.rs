use alloc::boxed::Box;
use alloc::string::String;

use crate::synthgen::AnalogyQuestion;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("vocabulary is empty after filtering with min_count={min_count}")]
    EmptyVocabulary { min_count: u64 },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("holdout fraction {0} is outside (0, 1)")]
    HoldoutFraction(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("analogy constraint {question:?} could not be satisfied (residual {residual:e})")]
    InfeasibleConstraint {
        question: AnalogyQuestion,
        residual: f64,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("non-finite codelength term for candidate context {context}")]
    NonFiniteCandidate { context: usize },
    #[error("record {index}: {source}")]
    Record { index: usize, source: Box<Error> },
    #[error("truth assigns zero probability to (word {word}, context {context}) where the model is positive")]
    ZeroTruth { word: usize, context: usize },
    #[error("rank correlation is undefined for constant input")]
    ConstantInput,
    #[error("all {0} questions are out of vocabulary")]
    AllOutOfVocabulary(usize),
    #[error("need at least 3 usable similarity pairs, got {0}")]
    TooFewPairs(usize),
}
