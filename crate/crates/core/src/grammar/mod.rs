//! Stimulus and corpus generation.
//!
//! * [`template`]: the fixed-structure number-agreement tasks.
//! * [`depth`]: sentences annotated with the number of open syntactic nodes,
//!   sampled so position and depth are de-correlated.
//! * [`corpus`]: the probabilistic grammar the language model is trained on.
//! * [`cfg`]: the context-free machinery the last two are built on.

pub mod cfg;
pub mod corpus;
pub mod depth;
pub mod lexicon;
pub mod template;

pub use corpus::{CorpusConfig, LexiconSplit};
pub use depth::{DepthConfig, DepthDataset, DepthSentence, Span};
pub use lexicon::{Lexicon, Pair, PoolSizes};
pub use template::{Condition, Stimulus, StimulusSet, Template};

use serde::{Deserialize, Serialize};

/// Grammatical number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Number {
    Singular,
    Plural,
}

impl Number {
    pub const BOTH: [Number; 2] = [Number::Singular, Number::Plural];

    pub fn flip(self) -> Number {
        match self {
            Number::Singular => Number::Plural,
            Number::Plural => Number::Singular,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Number::Singular => 'S',
            Number::Plural => 'P',
        }
    }

    pub fn from_letter(c: char) -> Option<Number> {
        match c {
            'S' | 's' => Some(Number::Singular),
            'P' | 'p' => Some(Number::Plural),
            _ => None,
        }
    }
}
