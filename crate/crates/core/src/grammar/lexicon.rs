//! Word pools for the agreement tasks.
//!
//! The built-in pools are curated so that every combination a template can
//! produce is semantically unremarkable: subjects and objects are animate
//! nouns, verbs are agentive transitives that take an animate object, the
//! intervening nouns of prepositional phrases are locations and proper
//! names. Each built-in pool is longer than its default size; the surplus
//! forms the training-only extension (see [`Lexicon::training_extension`]).

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::Number;
use crate::{Error, Result};

/// A singular/plural pair of surface forms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub singular: String,
    pub plural: String,
}

impl Pair {
    pub fn new(singular: &str, plural: &str) -> Self {
        Pair {
            singular: singular.to_string(),
            plural: plural.to_string(),
        }
    }

    pub fn form(&self, n: Number) -> &str {
        match n {
            Number::Singular => &self.singular,
            Number::Plural => &self.plural,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolSizes {
    pub nouns: usize,
    pub verbs: usize,
    pub adverbs: usize,
    pub prepositions: usize,
    pub proper_nouns: usize,
    pub location_nouns: usize,
}

impl Default for PoolSizes {
    fn default() -> Self {
        PoolSizes {
            nouns: 20,
            verbs: 15,
            adverbs: 10,
            prepositions: 5,
            proper_nouns: 10,
            location_nouns: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub subject_object_nouns: Vec<Pair>,
    pub verbs: Vec<Pair>,
    pub adverbs: Vec<String>,
    pub prepositions: Vec<String>,
    pub proper_nouns: Vec<String>,
    pub location_nouns: Vec<Pair>,
}

const NOUNS: &[(&str, &str)] = &[
    ("boy", "boys"),
    ("girl", "girls"),
    ("man", "men"),
    ("woman", "women"),
    ("guy", "guys"),
    ("friend", "friends"),
    ("teacher", "teachers"),
    ("doctor", "doctors"),
    ("farmer", "farmers"),
    ("student", "students"),
    ("pilot", "pilots"),
    ("lawyer", "lawyers"),
    ("author", "authors"),
    ("singer", "singers"),
    ("dancer", "dancers"),
    ("athlete", "athletes"),
    ("painter", "painters"),
    ("banker", "bankers"),
    ("officer", "officers"),
    ("manager", "managers"),
    // training-only surplus
    ("child", "children"),
    ("nurse", "nurses"),
    ("actor", "actors"),
    ("baker", "bakers"),
    ("driver", "drivers"),
    ("senator", "senators"),
    ("cousin", "cousins"),
    ("neighbor", "neighbors"),
];

const VERBS: &[(&str, &str)] = &[
    ("greets", "greet"),
    ("sees", "see"),
    ("knows", "know"),
    ("likes", "like"),
    ("helps", "help"),
    ("thanks", "thank"),
    ("calls", "call"),
    ("meets", "meet"),
    ("admires", "admire"),
    ("remembers", "remember"),
    ("blames", "blame"),
    ("avoids", "avoid"),
    ("praises", "praise"),
    ("watches", "watch"),
    ("follows", "follow"),
    // training-only surplus
    ("trusts", "trust"),
    ("hates", "hate"),
    ("visits", "visit"),
    ("loves", "love"),
    ("finds", "find"),
];

const ADVERBS: &[&str] = &[
    "probably",
    "openly",
    "deliberately",
    "kindly",
    "certainly",
    "quietly",
    "clearly",
    "rarely",
    "often",
    "gladly",
    // training-only surplus
    "always",
    "never",
    "surely",
];

const PREPOSITIONS: &[&str] = &["near", "behind", "beside", "around", "by", "past"];

const PROPER_NOUNS: &[&str] = &[
    "pat", "alex", "sam", "kim", "chris", "jamie", "robin", "taylor", "jordan", "casey",
    // training-only surplus
    "lee", "max", "dana",
];

const LOCATION_NOUNS: &[(&str, &str)] = &[
    ("car", "cars"),
    ("house", "houses"),
    ("table", "tables"),
    ("tree", "trees"),
    ("window", "windows"),
    ("door", "doors"),
    ("desk", "desks"),
    ("building", "buildings"),
    ("store", "stores"),
    ("fence", "fences"),
    // training-only surplus
    ("bench", "benches"),
    ("truck", "trucks"),
    ("wall", "walls"),
];

fn pairs(src: &[(&str, &str)], range: core::ops::Range<usize>) -> Vec<Pair> {
    src[range].iter().map(|(s, p)| Pair::new(s, p)).collect()
}

fn words(src: &[&str], range: core::ops::Range<usize>) -> Vec<String> {
    src[range].iter().map(|s| s.to_string()).collect()
}

fn take(len: usize, n: usize, what: &str) -> Result<core::ops::Range<usize>> {
    if n > len {
        return Err(Error::Config(alloc::format!(
            "built-in {what} pool has only {len} items, {n} requested"
        )));
    }
    Ok(0..n)
}

impl Lexicon {
    /// Built-in evaluation lexicon with the requested pool sizes.
    pub fn builtin(sizes: PoolSizes) -> Result<Lexicon> {
        Ok(Lexicon {
            subject_object_nouns: pairs(NOUNS, take(NOUNS.len(), sizes.nouns, "noun")?),
            verbs: pairs(VERBS, take(VERBS.len(), sizes.verbs, "verb")?),
            adverbs: words(ADVERBS, take(ADVERBS.len(), sizes.adverbs, "adverb")?),
            prepositions: words(
                PREPOSITIONS,
                take(PREPOSITIONS.len(), sizes.prepositions, "preposition")?,
            ),
            proper_nouns: words(
                PROPER_NOUNS,
                take(PROPER_NOUNS.len(), sizes.proper_nouns, "proper noun")?,
            ),
            location_nouns: pairs(
                LOCATION_NOUNS,
                take(LOCATION_NOUNS.len(), sizes.location_nouns, "location noun")?,
            ),
        })
    }

    /// The default evaluation lexicon (20/15/10/5/10/10).
    pub fn default_eval() -> Lexicon {
        Lexicon::builtin(PoolSizes::default()).expect("default pool sizes fit the built-ins")
    }

    /// Built-in items beyond `sizes`: content words only seen in training.
    pub fn training_extension(sizes: PoolSizes) -> Result<Lexicon> {
        take(NOUNS.len(), sizes.nouns, "noun")?;
        take(VERBS.len(), sizes.verbs, "verb")?;
        take(ADVERBS.len(), sizes.adverbs, "adverb")?;
        take(PREPOSITIONS.len(), sizes.prepositions, "preposition")?;
        take(PROPER_NOUNS.len(), sizes.proper_nouns, "proper noun")?;
        take(LOCATION_NOUNS.len(), sizes.location_nouns, "location noun")?;
        Ok(Lexicon {
            subject_object_nouns: pairs(NOUNS, sizes.nouns..NOUNS.len()),
            verbs: pairs(VERBS, sizes.verbs..VERBS.len()),
            adverbs: words(ADVERBS, sizes.adverbs..ADVERBS.len()),
            prepositions: words(PREPOSITIONS, sizes.prepositions..PREPOSITIONS.len()),
            proper_nouns: words(PROPER_NOUNS, sizes.proper_nouns..PROPER_NOUNS.len()),
            location_nouns: pairs(LOCATION_NOUNS, sizes.location_nouns..LOCATION_NOUNS.len()),
        })
    }

    /// Pool-wise concatenation.
    pub fn merged(&self, other: &Lexicon) -> Lexicon {
        fn cat<T: Clone>(a: &[T], b: &[T]) -> Vec<T> {
            a.iter().chain(b).cloned().collect()
        }
        Lexicon {
            subject_object_nouns: cat(&self.subject_object_nouns, &other.subject_object_nouns),
            verbs: cat(&self.verbs, &other.verbs),
            adverbs: cat(&self.adverbs, &other.adverbs),
            prepositions: cat(&self.prepositions, &other.prepositions),
            proper_nouns: cat(&self.proper_nouns, &other.proper_nouns),
            location_nouns: cat(&self.location_nouns, &other.location_nouns),
        }
    }

    /// Checks the pool invariants: nonempty tokens without whitespace, no
    /// duplicate surface forms within a pool, distinct singular and plural.
    pub fn validate(&self) -> Result<()> {
        fn check_word(w: &str, pool: &str) -> Result<()> {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::Config(alloc::format!(
                    "invalid token {w:?} in {pool} pool"
                )));
            }
            Ok(())
        }
        fn check_words<'a>(ws: impl Iterator<Item = &'a str>, pool: &str) -> Result<()> {
            let mut seen = BTreeSet::new();
            for w in ws {
                check_word(w, pool)?;
                if !seen.insert(w) {
                    return Err(Error::Config(alloc::format!(
                        "duplicate form {w:?} in {pool} pool"
                    )));
                }
            }
            Ok(())
        }
        fn check_pairs(ps: &[Pair], pool: &str) -> Result<()> {
            for p in ps {
                if p.singular == p.plural {
                    return Err(Error::Config(alloc::format!(
                        "{pool} pair {:?} has identical forms",
                        p.singular
                    )));
                }
            }
            check_words(
                ps.iter().flat_map(|p| [p.singular.as_str(), p.plural.as_str()]),
                pool,
            )
        }
        check_pairs(&self.subject_object_nouns, "noun")?;
        check_pairs(&self.verbs, "verb")?;
        check_pairs(&self.location_nouns, "location noun")?;
        check_words(self.adverbs.iter().map(String::as_str), "adverb")?;
        check_words(self.prepositions.iter().map(String::as_str), "preposition")?;
        check_words(self.proper_nouns.iter().map(String::as_str), "proper noun")?;
        Ok(())
    }

    /// Every surface form in the lexicon.
    pub fn all_words(&self) -> Vec<String> {
        let mut out = Vec::new();
        for p in self
            .subject_object_nouns
            .iter()
            .chain(&self.verbs)
            .chain(&self.location_nouns)
        {
            out.push(p.singular.clone());
            out.push(p.plural.clone());
        }
        out.extend(self.adverbs.iter().cloned());
        out.extend(self.prepositions.iter().cloned());
        out.extend(self.proper_nouns.iter().cloned());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_pools_have_paper_sizes() {
        let lx = Lexicon::default_eval();
        assert_eq!(lx.subject_object_nouns.len(), 20);
        assert_eq!(lx.verbs.len(), 15);
        assert_eq!(lx.adverbs.len(), 10);
        assert_eq!(lx.prepositions.len(), 5);
        assert_eq!(lx.proper_nouns.len(), 10);
        assert_eq!(lx.location_nouns.len(), 10);
        lx.validate().unwrap();
    }

    #[test]
    fn extension_is_disjoint_from_eval() {
        let sizes = PoolSizes::default();
        let eval = Lexicon::builtin(sizes).unwrap();
        let ext = Lexicon::training_extension(sizes).unwrap();
        let a: BTreeSet<_> = eval.all_words().into_iter().collect();
        for w in ext.all_words() {
            assert!(!a.contains(&w), "{w} in both");
        }
        eval.merged(&ext).validate().unwrap();
    }

    #[test]
    fn oversized_pool_is_config_error() {
        let sizes = PoolSizes {
            verbs: 99,
            ..PoolSizes::default()
        };
        assert!(matches!(Lexicon::builtin(sizes), Err(Error::Config(_))));
    }

    #[test]
    fn duplicate_and_identical_forms_rejected() {
        let mut lx = Lexicon::default_eval();
        lx.adverbs.push("probably".into());
        assert!(lx.validate().is_err());
        let mut lx = Lexicon::default_eval();
        lx.verbs.push(Pair::new("run", "run"));
        assert!(lx.validate().is_err());
    }
}
