//! Token vocabulary with the reserved `<eos>` and `<unk>` entries.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Token ids in the given order.
    pub fn from_tokens(tokens: Vec<String>) -> Vocabulary {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    /// `<eos>` = 0, `<unk>` = 1, then the words sorted and deduplicated.
    pub fn with_reserved<I: IntoIterator<Item = String>>(words: I) -> Vocabulary {
        let mut ws: Vec<String> = words
            .into_iter()
            .filter(|w| w != EOS && w != UNK)
            .collect();
        ws.sort();
        ws.dedup();
        let mut tokens = alloc::vec![EOS.to_string(), UNK.to_string()];
        tokens.extend(ws);
        Vocabulary::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, erroring with the token name when unknown.
    pub fn require(&self, token: &str) -> Result<usize> {
        self.id(token)
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or_else(|| self.unk())
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn eos(&self) -> usize {
        self.id(EOS).unwrap_or(0)
    }

    pub fn unk(&self) -> usize {
        self.id(UNK).unwrap_or(1)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<usize>> {
        tokens.iter().map(|t| self.require(t.as_ref())).collect()
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_tokens_first() {
        let v = Vocabulary::with_reserved(["b".to_string(), "a".to_string(), "b".to_string()]);
        assert_eq!(v.tokens(), ["<eos>", "<unk>", "a", "b"]);
        assert_eq!(v.eos(), 0);
        assert_eq!(v.unk(), 1);
        assert_eq!(v.id_or_unk("zzz"), 1);
        assert_eq!(v.require("zzz"), Err(Error::UnknownToken("zzz".into())));
    }
}
