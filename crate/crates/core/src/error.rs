use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("token id {id} is outside the vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("unit L{layer}-U{unit} is outside the model ({layers} layers x {hidden} units)")]
    UnitOutOfRange {
        layer: usize,
        unit: usize,
        layers: usize,
        hidden: usize,
    },
    #[error("non-finite loss at training step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error("labels contain a single class")]
    SingleClass,
    #[error("features have zero variance everywhere")]
    DegenerateFeatures,
    #[error("need at least {needed} samples, have {have}")]
    TooFewSamples { needed: usize, have: usize },
    #[error("misaligned input: {0}")]
    Misaligned(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
