//! The synthetic training corpus: a weighted grammar whose constructions
//! include every agreement template (with prepositional-phrase and
//! relative-clause attractors) and the depth grammar's clauses as filler.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::cfg::{Grammar, GrammarBuilder};
use super::depth::add_depth_rules;
use super::{Lexicon, PoolSizes};
use crate::vocab::Vocabulary;
use crate::{rng, Error, Result};

/// How the training lexicon relates to the evaluation lexicon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconSplit {
    /// Train on exactly the evaluation pools.
    Shared,
    /// Evaluation pools plus training-only content words.
    Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub split: LexiconSplit,
    pub pool_sizes: PoolSizes,
    /// Sentences longer than this are resampled.
    pub max_words: usize,
    /// Relative weight of agreement-template clauses vs depth-grammar clauses.
    pub agreement_weight: f64,
    pub depth_weight: f64,
    /// Relative weight of two coordinated agreement clauses.
    pub coordination_weight: f64,
    /// Weight, per subject number, of subjects with an object relative
    /// clause ("the boy that the girls greet"), against 6.5 for the other
    /// subject shapes.
    pub object_relative_weight: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            split: LexiconSplit::Extended,
            pool_sizes: PoolSizes::default(),
            max_words: 40,
            agreement_weight: 0.85,
            depth_weight: 0.15,
            coordination_weight: 0.001,
            object_relative_weight: 1.0,
        }
    }
}

impl CorpusConfig {
    pub fn training_lexicon(&self) -> Result<Lexicon> {
        let eval = Lexicon::builtin(self.pool_sizes)?;
        Ok(match self.split {
            LexiconSplit::Shared => eval,
            LexiconSplit::Extended => eval.merged(&Lexicon::training_extension(self.pool_sizes)?),
        })
    }
}

fn add_agreement_rules(b: &mut GrammarBuilder, lex: &Lexicon, objrel: f64) {
    let sg = |ps: &[super::Pair]| ps.iter().map(|p| p.singular.clone()).collect::<Vec<_>>();
    let pl = |ps: &[super::Pair]| ps.iter().map(|p| p.plural.clone()).collect::<Vec<_>>();
    b.category("A_N_sg", &sg(&lex.subject_object_nouns))
        .category("A_N_pl", &pl(&lex.subject_object_nouns))
        .category("A_V_sg", &sg(&lex.verbs))
        .category("A_V_pl", &pl(&lex.verbs))
        .category("A_Loc_sg", &sg(&lex.location_nouns))
        .category("A_Loc_pl", &pl(&lex.location_nouns))
        .category("A_Adv", &lex.adverbs)
        .category("A_P", &lex.prepositions)
        .category("A_Name", &lex.proper_nouns);
    b.rule("A_Obj", &["'the'", "A_N_sg"], 1.0)
        .rule("A_Obj", &["'the'", "A_N_pl"], 1.0);
    for n in ["sg", "pl"] {
        let np = alloc::format!("A_NP_{n}");
        let vp = alloc::format!("A_VP_{n}");
        let noun = alloc::format!("A_N_{n}");
        let verb = alloc::format!("A_V_{n}");
        b.rule("A_S", &[&np, &vp], 1.0);
        // Subjects: bare, with PP attractors, with relative clauses.
        b.rule(&np, &["'the'", &noun], 2.0)
            .rule(&np, &["'the'", &noun, "A_P", "A_Name"], 1.0)
            .rule(&np, &["'the'", &noun, "A_P", "'the'", "A_Loc_sg"], 1.0)
            .rule(&np, &["'the'", &noun, "A_P", "'the'", "A_Loc_pl"], 1.0)
            .rule(&np, &["'the'", &noun, "A_P", "A_Obj"], 0.5)
            .rule(&np, &["'the'", &noun, "'that'", &verb, "A_RCObj"], 1.0);
        // Object relatives: the embedded verb agrees with the nearer noun.
        for m in ["sg", "pl"].into_iter().filter(|_| objrel > 0.0) {
            let inner_noun = alloc::format!("A_N_{m}");
            let inner_verb = alloc::format!("A_V_{m}");
            b.rule(&np, &["'the'", &noun, "'that'", "'the'", &inner_noun, &inner_verb], objrel);
        }
        // Object of a relative clause, optionally with its own relative.
        b.rule("A_RCObj", &["'the'", &noun, "'that'", &verb, "A_Obj"], 0.15);
        // Predicates: Simple, Adv, 2Adv, CoAdv shapes.
        b.rule(&vp, &[&verb, "A_Obj"], 2.0)
            .rule(&vp, &["A_Adv", &verb, "A_Obj"], 1.0)
            .rule(&vp, &["'most'", "A_Adv", &verb, "A_Obj"], 0.5)
            .rule(&vp, &["A_Adv", "'and'", "A_Adv", &verb, "A_Obj"], 0.5);
    }
    b.rule("A_RCObj", &["A_Obj"], 1.0);
}

/// The corpus grammar over `lex`, start symbol `S`.
pub fn corpus_grammar(lex: &Lexicon, config: &CorpusConfig) -> Result<Grammar> {
    lex.validate()?;
    let mut b = GrammarBuilder::new();
    add_agreement_rules(&mut b, lex, config.object_relative_weight);
    add_depth_rules(&mut b, "D_S");
    b.rule("S", &["A_S"], config.agreement_weight)
        .rule("S", &["D_S"], config.depth_weight)
        .rule("S", &["A_S", "'and'", "A_S"], config.coordination_weight);
    b.build("S")
}

/// Sentences, each a list of lower-case tokens without the end marker.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub sentences: Vec<Vec<String>>,
}

impl Corpus {
    pub fn n_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.len() + 1).sum()
    }

    /// Token ids with `<eos>` after every sentence.
    pub fn encode(&self, vocab: &Vocabulary) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_tokens());
        for s in &self.sentences {
            out.extend(s.iter().map(|w| vocab.id_or_unk(w)));
            out.push(vocab.eos());
        }
        out
    }

    /// Splits off the last `fraction` of sentences (at least one when the
    /// corpus has two or more) as a validation set.
    pub fn split_validation(&self, fraction: f64) -> (Corpus, Corpus) {
        let n = self.sentences.len();
        let mut n_valid = (n as f64 * fraction) as usize;
        if n_valid == 0 && n >= 2 && fraction > 0.0 {
            n_valid = 1;
        }
        let cut = n - n_valid;
        (
            Corpus {
                sentences: self.sentences[..cut].to_vec(),
            },
            Corpus {
                sentences: self.sentences[cut..].to_vec(),
            },
        )
    }
}

/// Sample `n_sentences` sentences from the corpus grammar. Also returns the
/// vocabulary of every word the grammar can produce.
pub fn generate_training_corpus(
    lexicon: &Lexicon,
    config: &CorpusConfig,
    n_sentences: usize,
    seed: u64,
) -> Result<(Corpus, Vocabulary)> {
    let grammar = corpus_grammar(lexicon, config)?;
    let vocab = Vocabulary::with_reserved(grammar.vocabulary());
    let mut rng = rng::stream(seed, "corpus");
    let mut sentences = Vec::with_capacity(n_sentences);
    let mut failures = 0usize;
    while sentences.len() < n_sentences {
        match grammar.sample(grammar.start(), config.max_words, &mut rng) {
            Some(tree) => sentences.push(tree.leaves()),
            None => {
                failures += 1;
                if failures > 100 * (n_sentences + 10) {
                    return Err(Error::Config(
                        "corpus grammar rarely yields sentences within max_words".into(),
                    ));
                }
            }
        }
    }
    Ok((Corpus { sentences }, vocab))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::template::generate_na_task;
    use crate::grammar::Template;

    #[test]
    fn one_sentence_ends_with_eos() {
        let cfg = CorpusConfig::default();
        let lex = cfg.training_lexicon().unwrap();
        let (c, v) = generate_training_corpus(&lex, &cfg, 1, 0).unwrap();
        assert_eq!(c.sentences.len(), 1);
        let ids = c.encode(&v);
        assert_eq!(*ids.last().unwrap(), v.eos());
        assert_eq!(ids.iter().filter(|&&t| t == v.eos()).count(), 1);
    }

    #[test]
    fn empty_corpus_is_valid() {
        let cfg = CorpusConfig::default();
        let lex = cfg.training_lexicon().unwrap();
        let (c, _) = generate_training_corpus(&lex, &cfg, 0, 0).unwrap();
        assert!(c.sentences.is_empty());
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = CorpusConfig::default();
        let lex = cfg.training_lexicon().unwrap();
        let a = generate_training_corpus(&lex, &cfg, 200, 42).unwrap();
        let b = generate_training_corpus(&lex, &cfg, 200, 42).unwrap();
        let c = generate_training_corpus(&lex, &cfg, 200, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn templates_are_covered_by_corpus_grammar() {
        let cfg = CorpusConfig::default();
        let lex = cfg.training_lexicon().unwrap();
        let g = corpus_grammar(&lex, &cfg).unwrap();
        let eval = Lexicon::default_eval();
        for t in Template::ALL {
            let set = generate_na_task(t, &eval, 20, 1).unwrap();
            for s in &set.stimuli {
                assert!(g.recognizes(&s.tokens), "{}", s.tokens.join(" "));
                // The wrong inflection must not parse.
                let mut bad = s.tokens.clone();
                bad[s.verb_pos] = s.wrong_verb.clone();
                assert!(!g.recognizes(&bad), "{}", bad.join(" "));
            }
        }
    }

    #[test]
    fn object_relative_verb_agrees_with_the_nearer_noun() {
        let cfg = CorpusConfig {
            object_relative_weight: 1.0,
            ..CorpusConfig::default()
        };
        let lex = cfg.training_lexicon().unwrap();
        let g = corpus_grammar(&lex, &cfg).unwrap();
        let ok = "the boy that the girls greet sees the man";
        let bad = "the boy that the girls greets sees the man";
        let words = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
        assert!(g.recognizes(&words(ok)));
        assert!(!g.recognizes(&words(bad)));
        let off = corpus_grammar(&lex, &CorpusConfig { object_relative_weight: 0.0, ..cfg.clone() }).unwrap();
        assert!(!off.recognizes(&words(ok)));
    }

    #[test]
    fn eval_words_are_in_vocabulary() {
        for split in [LexiconSplit::Shared, LexiconSplit::Extended] {
            let cfg = CorpusConfig {
                split,
                ..CorpusConfig::default()
            };
            let lex = cfg.training_lexicon().unwrap();
            let (_, v) = generate_training_corpus(&lex, &cfg, 0, 0).unwrap();
            for w in Lexicon::default_eval().all_words() {
                assert!(v.id(&w).is_some(), "{w}");
            }
            for w in ["the", "most", "and", "that", "ten", "laughing"] {
                assert!(v.id(w).is_some(), "{w}");
            }
        }
    }
}
