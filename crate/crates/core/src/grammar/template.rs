//! Number-agreement tasks: fixed syntactic frames filled with lexical
//! material, instantiated in every subject/intervener number condition.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Lexicon, Number};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Template {
    Simple,
    Adv,
    #[serde(rename = "2Adv")]
    TwoAdv,
    CoAdv,
    NamePP,
    NounPP,
    NounPPAdv,
    SubjRel,
    DoubleSubjRel,
}

/// One position of a template frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Word(&'static str),
    Subject,
    /// The k-th adverb; adverbs within a sentence are distinct.
    Adverb(u8),
    Preposition,
    /// Proper-noun intervener (always singular).
    ProperNoun,
    /// Location-noun intervener inside a prepositional phrase.
    PpNoun,
    /// Object-of-relative-clause intervener.
    RelNoun,
    /// Relative-clause verb agreeing with the subject.
    RelVerb,
    /// Verb of a second relative clause, agreeing with the intervener.
    EmbeddedRelVerb,
    /// Object of the second relative clause, free number.
    EmbeddedNoun,
    MainVerb,
    /// Main-clause object, free number, distinct from the subject noun.
    Object,
}

use Slot::*;

const SIMPLE: &[Slot] = &[Word("the"), Subject, MainVerb, Word("the"), Object];
const ADV: &[Slot] = &[Word("the"), Subject, Adverb(0), MainVerb, Word("the"), Object];
const TWO_ADV: &[Slot] = &[
    Word("the"),
    Subject,
    Word("most"),
    Adverb(0),
    MainVerb,
    Word("the"),
    Object,
];
const CO_ADV: &[Slot] = &[
    Word("the"),
    Subject,
    Adverb(0),
    Word("and"),
    Adverb(1),
    MainVerb,
    Word("the"),
    Object,
];
const NAME_PP: &[Slot] = &[
    Word("the"),
    Subject,
    Preposition,
    ProperNoun,
    MainVerb,
    Word("the"),
    Object,
];
const NOUN_PP: &[Slot] = &[
    Word("the"),
    Subject,
    Preposition,
    Word("the"),
    PpNoun,
    MainVerb,
    Word("the"),
    Object,
];
const NOUN_PP_ADV: &[Slot] = &[
    Word("the"),
    Subject,
    Preposition,
    Word("the"),
    PpNoun,
    Adverb(0),
    MainVerb,
    Word("the"),
    Object,
];
const SUBJ_REL: &[Slot] = &[
    Word("the"),
    Subject,
    Word("that"),
    RelVerb,
    Word("the"),
    RelNoun,
    MainVerb,
    Word("the"),
    Object,
];
const DOUBLE_SUBJ_REL: &[Slot] = &[
    Word("the"),
    Subject,
    Word("that"),
    RelVerb,
    Word("the"),
    RelNoun,
    Word("that"),
    EmbeddedRelVerb,
    Word("the"),
    EmbeddedNoun,
    MainVerb,
    Word("the"),
    Object,
];

impl Template {
    /// The seven agreement tasks, in order of increasing difficulty.
    pub const NA_TASKS: [Template; 7] = [
        Template::Simple,
        Template::Adv,
        Template::TwoAdv,
        Template::CoAdv,
        Template::NamePP,
        Template::NounPP,
        Template::NounPPAdv,
    ];

    pub const ALL: [Template; 9] = [
        Template::Simple,
        Template::Adv,
        Template::TwoAdv,
        Template::CoAdv,
        Template::NamePP,
        Template::NounPP,
        Template::NounPPAdv,
        Template::SubjRel,
        Template::DoubleSubjRel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::Simple => "Simple",
            Template::Adv => "Adv",
            Template::TwoAdv => "2Adv",
            Template::CoAdv => "CoAdv",
            Template::NamePP => "NamePP",
            Template::NounPP => "NounPP",
            Template::NounPPAdv => "NounPPAdv",
            Template::SubjRel => "SubjRel",
            Template::DoubleSubjRel => "DoubleSubjRel",
        }
    }

    pub fn slots(self) -> &'static [Slot] {
        match self {
            Template::Simple => SIMPLE,
            Template::Adv => ADV,
            Template::TwoAdv => TWO_ADV,
            Template::CoAdv => CO_ADV,
            Template::NamePP => NAME_PP,
            Template::NounPP => NOUN_PP,
            Template::NounPPAdv => NOUN_PP_ADV,
            Template::SubjRel => SUBJ_REL,
            Template::DoubleSubjRel => DOUBLE_SUBJ_REL,
        }
    }

    pub fn has_intervener(self) -> bool {
        self.slots()
            .iter()
            .any(|s| matches!(s, ProperNoun | PpNoun | RelNoun))
    }

    /// Conditions in report order. Proper-noun interveners only come in
    /// the singular, so NamePP has the SS and PS conditions only.
    pub fn conditions(self) -> Vec<Condition> {
        let slots = self.slots();
        if slots.contains(&ProperNoun) {
            Number::BOTH
                .iter()
                .map(|&s| Condition::new(s, Some(Number::Singular)))
                .collect()
        } else if self.has_intervener() {
            Number::BOTH
                .iter()
                .flat_map(|&s| Number::BOTH.iter().map(move |&i| Condition::new(s, Some(i))))
                .collect()
        } else {
            Number::BOTH.iter().map(|&s| Condition::new(s, None)).collect()
        }
    }

    fn radices(self, lex: &Lexicon) -> Vec<(Slot, usize)> {
        let nouns = lex.subject_object_nouns.len();
        let advs = lex.adverbs.len();
        self.slots()
            .iter()
            .filter_map(|&s| {
                let r = match s {
                    Word(_) => return None,
                    Subject => nouns,
                    Adverb(k) => advs.saturating_sub(k as usize),
                    Preposition => lex.prepositions.len(),
                    ProperNoun => lex.proper_nouns.len(),
                    PpNoun => lex.location_nouns.len(),
                    RelNoun => nouns,
                    RelVerb | EmbeddedRelVerb | MainVerb => lex.verbs.len(),
                    EmbeddedNoun => nouns * 2,
                    Object => nouns.saturating_sub(1) * 2,
                };
                Some((s, r))
            })
            .collect()
    }

    /// Build the stimulus for a lexical `choice` (one digit per non-literal
    /// slot, each below that slot's pool size) under `condition`.
    pub fn instantiate(self, lex: &Lexicon, choice: &[usize], condition: Condition) -> Result<Stimulus> {
        let radices = self.radices(lex);
        if choice.len() != radices.len() {
            return Err(Error::Shape {
                what: "template choice",
                expected: radices.len(),
                got: choice.len(),
            });
        }
        for (&(slot, r), &d) in radices.iter().zip(choice) {
            if d >= r {
                return Err(Error::InvalidArgument(alloc::format!(
                    "choice {d} out of range for {slot:?} (pool size {r})"
                )));
            }
        }
        if condition.intervening.is_some() != self.has_intervener() {
            return Err(Error::InvalidArgument(alloc::format!(
                "condition {condition} does not fit template {}",
                self.name()
            )));
        }
        let subj_n = condition.subject;
        let int_n = condition.intervening.unwrap_or(Number::Singular);
        let mut digits = choice.iter().copied();
        let mut tokens = Vec::with_capacity(self.slots().len());
        let mut subject_pos = 0;
        let mut subject_idx = 0;
        let mut verb_pos = 0;
        let mut intervening_pos = None;
        let mut adverbs_used: Vec<usize> = Vec::new();
        let mut correct = String::new();
        let mut wrong = String::new();
        for &slot in self.slots() {
            let pos = tokens.len();
            let word: String = match slot {
                Word(w) => w.to_string(),
                Subject => {
                    subject_idx = digits.next().unwrap();
                    subject_pos = pos;
                    lex.subject_object_nouns[subject_idx].form(subj_n).to_string()
                }
                Adverb(_) => {
                    let mut d = digits.next().unwrap();
                    // Skip adverbs already used, in index order.
                    let mut used = adverbs_used.clone();
                    used.sort_unstable();
                    for u in used {
                        if d >= u {
                            d += 1;
                        }
                    }
                    adverbs_used.push(d);
                    lex.adverbs[d].clone()
                }
                Preposition => lex.prepositions[digits.next().unwrap()].clone(),
                ProperNoun => {
                    intervening_pos = Some(pos);
                    lex.proper_nouns[digits.next().unwrap()].clone()
                }
                PpNoun => {
                    intervening_pos = Some(pos);
                    lex.location_nouns[digits.next().unwrap()].form(int_n).to_string()
                }
                RelNoun => {
                    intervening_pos = Some(pos);
                    lex.subject_object_nouns[digits.next().unwrap()]
                        .form(int_n)
                        .to_string()
                }
                RelVerb => lex.verbs[digits.next().unwrap()].form(subj_n).to_string(),
                EmbeddedRelVerb => lex.verbs[digits.next().unwrap()].form(int_n).to_string(),
                EmbeddedNoun => {
                    let d = digits.next().unwrap();
                    lex.subject_object_nouns[d / 2].form(parity(d)).to_string()
                }
                MainVerb => {
                    let v = &lex.verbs[digits.next().unwrap()];
                    verb_pos = pos;
                    correct = v.form(subj_n).to_string();
                    wrong = v.form(subj_n.flip()).to_string();
                    correct.clone()
                }
                Object => {
                    let d = digits.next().unwrap();
                    let mut noun = d / 2;
                    if noun >= subject_idx {
                        noun += 1;
                    }
                    lex.subject_object_nouns[noun].form(parity(d)).to_string()
                }
            };
            tokens.push(word);
        }
        Ok(Stimulus {
            task: self,
            condition,
            tokens,
            subject_pos,
            verb_pos,
            correct_verb: correct,
            wrong_verb: wrong,
            intervening_pos,
        })
    }
}

fn parity(d: usize) -> Number {
    if d % 2 == 0 {
        Number::Singular
    } else {
        Number::Plural
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Template::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown task {s:?}")))
    }
}

/// Subject number plus, for templates with an intervening noun, its number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Condition {
    pub subject: Number,
    pub intervening: Option<Number>,
}

impl Condition {
    pub fn new(subject: Number, intervening: Option<Number>) -> Self {
        Condition { subject, intervening }
    }

    /// Congruent iff there is no intervener or it matches the subject.
    pub fn is_congruent(&self) -> bool {
        self.intervening.is_none_or(|i| i == self.subject)
    }

    pub fn label(&self) -> String {
        let mut s = String::new();
        s.push(self.subject.letter());
        if let Some(i) = self.intervening {
            s.push(i.letter());
        }
        s
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut cs = s.chars();
        let bad = || Error::InvalidArgument(alloc::format!("bad condition label {s:?}"));
        let subject = cs.next().and_then(Number::from_letter).ok_or_else(bad)?;
        let intervening = match cs.next() {
            None => None,
            Some(c) => Some(Number::from_letter(c).ok_or_else(bad)?),
        };
        if cs.next().is_some() {
            return Err(bad());
        }
        Ok(Condition { subject, intervening })
    }
}

impl From<Condition> for String {
    fn from(c: Condition) -> String {
        c.label()
    }
}

impl TryFrom<String> for Condition {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub task: Template,
    pub condition: Condition,
    pub tokens: Vec<String>,
    pub subject_pos: usize,
    pub verb_pos: usize,
    pub correct_verb: String,
    pub wrong_verb: String,
    pub intervening_pos: Option<usize>,
}

impl Stimulus {
    /// Tokens before the main verb.
    pub fn prefix(&self) -> &[String] {
        &self.tokens[..self.verb_pos]
    }

    /// The same stimulus with the verb labels exchanged.
    pub fn swapped(&self) -> Stimulus {
        let mut s = self.clone();
        core::mem::swap(&mut s.correct_verb, &mut s.wrong_verb);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSet {
    pub task: Template,
    /// Every condition of the task, present even when it has no stimuli.
    pub conditions: Vec<Condition>,
    pub stimuli: Vec<Stimulus>,
}

impl StimulusSet {
    pub fn len(&self) -> usize {
        self.stimuli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stimuli.is_empty()
    }

    pub fn of_condition(&self, c: Condition) -> impl Iterator<Item = &Stimulus> {
        self.stimuli.iter().filter(move |s| s.condition == c)
    }

    pub fn count(&self, c: Condition) -> usize {
        self.of_condition(c).count()
    }

    /// Subset restricted to the given conditions.
    pub fn filtered(&self, keep: &[Condition]) -> StimulusSet {
        StimulusSet {
            task: self.task,
            conditions: self.conditions.iter().filter(|c| keep.contains(c)).copied().collect(),
            stimuli: self
                .stimuli
                .iter()
                .filter(|s| keep.contains(&s.condition))
                .cloned()
                .collect(),
        }
    }
}

/// Draw `n` lexical combinations as mixed-radix indices: distinct while the
/// combination space lasts, then with replacement.
fn sample_combinations<R: Rng>(total: u128, n: usize, rng: &mut R) -> Vec<u128> {
    let want = n as u128;
    if total <= want || total <= 4 * want {
        let mut all: Vec<u128> = (0..total).collect();
        all.shuffle(rng);
        all.truncate(n);
        while all.len() < n {
            all.push(rng.gen_range(0..total));
        }
        return all;
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let k = rng.gen_range(0..total);
        if seen.insert(k) {
            out.push(k);
        }
    }
    out
}

fn decode(mut k: u128, radices: &[usize]) -> Vec<usize> {
    let mut digits = alloc::vec![0; radices.len()];
    for (d, &r) in digits.iter_mut().zip(radices).rev() {
        *d = (k % r as u128) as usize;
        k /= r as u128;
    }
    digits
}

/// Generate `n_per_condition` stimuli for every condition of `template`.
/// The same lexical combinations are used in all conditions, so conditions
/// differ only in the number inflections.
pub fn generate_na_task(
    template: Template,
    lexicon: &Lexicon,
    n_per_condition: usize,
    seed: u64,
) -> Result<StimulusSet> {
    let radices = template.radices(lexicon);
    if let Some((slot, _)) = radices.iter().find(|(_, r)| *r == 0) {
        return Err(Error::Config(alloc::format!(
            "template {} needs a nonempty pool for {slot:?}",
            template.name()
        )));
    }
    let total = radices
        .iter()
        .fold(1u128, |acc, &(_, r)| acc.saturating_mul(r as u128));
    let mut rng = rng::stream(seed, template.name());
    let combos = sample_combinations(total, n_per_condition, &mut rng);
    let digits: Vec<usize> = radices.iter().map(|&(_, r)| r).collect();
    let conditions = template.conditions();
    let mut stimuli = Vec::with_capacity(combos.len() * conditions.len());
    for &c in &conditions {
        for &k in &combos {
            stimuli.push(template.instantiate(lexicon, &decode(k, &digits), c)?);
        }
    }
    Ok(StimulusSet {
        task: template,
        conditions,
        stimuli,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_noun(lex: &Lexicon, w: &str) -> usize {
        lex.subject_object_nouns.iter().position(|p| p.singular == w).unwrap()
    }

    #[test]
    fn nounpp_exemplars() {
        let lex = Lexicon::default_eval();
        let boy = idx_noun(&lex, "boy");
        let guy = idx_noun(&lex, "guy");
        // Object digit skips the subject noun index.
        let obj = 2 * if guy > boy { guy - 1 } else { guy };
        let near = lex.prepositions.iter().position(|p| p == "near").unwrap();
        let car = lex.location_nouns.iter().position(|p| p.singular == "car").unwrap();
        let greets = lex.verbs.iter().position(|p| p.singular == "greets").unwrap();
        let choice = [boy, near, car, greets, obj];
        let ss = Template::NounPP
            .instantiate(&lex, &choice, "SS".parse().unwrap())
            .unwrap();
        assert_eq!(ss.tokens.join(" "), "the boy near the car greets the guy");
        assert_eq!((ss.subject_pos, ss.verb_pos), (1, 5));
        assert_eq!(ss.intervening_pos, Some(4));
        let ps = Template::NounPP
            .instantiate(&lex, &choice, "PS".parse().unwrap())
            .unwrap();
        assert_eq!(ps.tokens.join(" "), "the boys near the car greet the guy");
        assert_eq!(ps.wrong_verb, "greets");
    }

    #[test]
    fn condition_counts() {
        let lex = Lexicon::default_eval();
        let set = generate_na_task(Template::NounPP, &lex, 600, 1).unwrap();
        assert_eq!(set.len(), 2400);
        for c in &set.conditions {
            assert_eq!(set.count(*c), 600);
        }
        let simple = generate_na_task(Template::Simple, &lex, 5, 1).unwrap();
        assert_eq!(simple.conditions.len(), 2);
        let name = generate_na_task(Template::NamePP, &lex, 5, 1).unwrap();
        let labels: Vec<String> = name.conditions.iter().map(|c| c.label()).collect();
        assert_eq!(labels, ["SS", "PS"]);
    }

    #[test]
    fn empty_generation_keeps_labels() {
        let lex = Lexicon::default_eval();
        for t in Template::ALL {
            let set = generate_na_task(t, &lex, 0, 9).unwrap();
            assert!(set.is_empty());
            assert_eq!(set.conditions, t.conditions());
        }
    }

    #[test]
    fn empty_pool_is_config_error() {
        let mut lex = Lexicon::default_eval();
        lex.prepositions.clear();
        assert!(matches!(
            generate_na_task(Template::NounPP, &lex, 3, 0),
            Err(Error::Config(_))
        ));
        // Templates that do not use the pool are unaffected.
        assert!(generate_na_task(Template::Simple, &lex, 3, 0).is_ok());
    }

    #[test]
    fn exhausted_space_falls_back_to_replacement() {
        let mut lex = Lexicon::default_eval();
        lex.subject_object_nouns.truncate(2);
        lex.verbs.truncate(1);
        // 2 subjects x 1 verb x (1 other noun x 2 numbers) = 4 combinations.
        let set = generate_na_task(Template::Simple, &lex, 10, 0).unwrap();
        let s_cond = set.conditions[0];
        let firsts: BTreeSet<Vec<String>> =
            set.of_condition(s_cond).take(4).map(|s| s.tokens.clone()).collect();
        assert_eq!(firsts.len(), 4);
        assert_eq!(set.count(s_cond), 10);
    }

    #[test]
    fn coadv_adverbs_distinct_and_object_not_subject() {
        let lex = Lexicon::default_eval();
        let set = generate_na_task(Template::CoAdv, &lex, 300, 5).unwrap();
        for s in &set.stimuli {
            assert_ne!(s.tokens[2], s.tokens[4]);
            let subj_sg = lex
                .subject_object_nouns
                .iter()
                .find(|p| p.form(s.condition.subject) == s.tokens[1])
                .unwrap();
            let obj = &s.tokens[7];
            assert!(obj != &subj_sg.singular && obj != &subj_sg.plural);
        }
    }

    #[test]
    fn condition_label_roundtrip() {
        for t in Template::ALL {
            for c in t.conditions() {
                assert_eq!(c.label().parse::<Condition>().unwrap(), c);
            }
        }
        assert!("SX".parse::<Condition>().is_err());
        assert!("SPP".parse::<Condition>().is_err());
    }
}
