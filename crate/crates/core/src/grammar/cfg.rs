//! A small context-free grammar engine: derivation counting by yield length,
//! exact-length uniform sampling, weighted top-down sampling, an Earley
//! recognizer, and open-node depth annotation of derivation trees.
//!
//! Grammatical number is encoded by splitting nonterminals (`NP_sg`,
//! `NP_pl`, ...), so a sentence parses only if it agrees.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Symbol {
    /// Preterminal category, rewrites to one of its words.
    Cat(usize),
    Nt(usize),
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub lhs: usize,
    pub rhs: Vec<Symbol>,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Category {
    pub name: String,
    pub words: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    nonterminals: Vec<String>,
    categories: Vec<Category>,
    rules: Vec<Rule>,
    by_lhs: Vec<Vec<usize>>,
    start: usize,
    word_cats: BTreeMap<String, Vec<usize>>,
}

/// Builds a [`Grammar`] from names. In rule right-hand sides a name that
/// was registered as a category refers to it, `'word'` is a one-word
/// category, anything else is a nonterminal.
#[derive(Debug, Default)]
pub struct GrammarBuilder {
    nonterminals: Vec<String>,
    nt_ids: BTreeMap<String, usize>,
    categories: Vec<Category>,
    cat_ids: BTreeMap<String, usize>,
    rules: Vec<Rule>,
}

impl GrammarBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn category<S: AsRef<str>>(&mut self, name: &str, words: &[S]) -> &mut Self {
        let words: Vec<String> = words.iter().map(|w| w.as_ref().to_string()).collect();
        match self.cat_ids.get(name) {
            Some(&id) => {
                for w in words {
                    if !self.categories[id].words.contains(&w) {
                        self.categories[id].words.push(w);
                    }
                }
            }
            None => {
                self.cat_ids.insert(name.to_string(), self.categories.len());
                self.categories.push(Category {
                    name: name.to_string(),
                    words,
                });
            }
        }
        self
    }

    fn nt(&mut self, name: &str) -> usize {
        if let Some(&id) = self.nt_ids.get(name) {
            return id;
        }
        let id = self.nonterminals.len();
        self.nonterminals.push(name.to_string());
        self.nt_ids.insert(name.to_string(), id);
        id
    }

    fn symbol(&mut self, name: &str) -> Symbol {
        if let Some(word) = name.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')) {
            let cat_name = alloc::format!("'{word}'");
            if !self.cat_ids.contains_key(&cat_name) {
                self.category(&cat_name, &[word]);
            }
            return Symbol::Cat(self.cat_ids[&cat_name]);
        }
        if let Some(&c) = self.cat_ids.get(name) {
            return Symbol::Cat(c);
        }
        Symbol::Nt(self.nt(name))
    }

    pub fn rule(&mut self, lhs: &str, rhs: &[&str], weight: f64) -> &mut Self {
        let lhs = self.nt(lhs);
        let rhs = rhs.iter().map(|s| self.symbol(s)).collect();
        self.rules.push(Rule { lhs, rhs, weight });
        self
    }

    pub fn build(mut self, start: &str) -> Result<Grammar> {
        let start = self.nt(start);
        let mut by_lhs = vec![Vec::new(); self.nonterminals.len()];
        for (i, r) in self.rules.iter().enumerate() {
            if r.rhs.is_empty() {
                return Err(Error::Config(alloc::format!(
                    "empty production for {}",
                    self.nonterminals[r.lhs]
                )));
            }
            if !(r.weight > 0.0) {
                return Err(Error::Config(alloc::format!(
                    "non-positive weight on a {} production",
                    self.nonterminals[r.lhs]
                )));
            }
            by_lhs[r.lhs].push(i);
        }
        for (i, rs) in by_lhs.iter().enumerate() {
            if rs.is_empty() {
                return Err(Error::Config(alloc::format!(
                    "nonterminal {} has no productions",
                    self.nonterminals[i]
                )));
            }
        }
        for c in &self.categories {
            if c.words.is_empty() {
                return Err(Error::Config(alloc::format!("category {} is empty", c.name)));
            }
        }
        let mut word_cats: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (ci, c) in self.categories.iter().enumerate() {
            for w in &c.words {
                word_cats.entry(w.clone()).or_default().push(ci);
            }
        }
        Ok(Grammar {
            nonterminals: self.nonterminals,
            categories: self.categories,
            rules: self.rules,
            by_lhs,
            start,
            word_cats,
        })
    }
}

/// A derivation tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Tree {
    Node { nt: usize, children: Vec<Tree> },
    Leaf { cat: usize, word: String },
}

impl Tree {
    pub fn leaves(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<String>) {
        match self {
            Tree::Leaf { word, .. } => out.push(word.clone()),
            Tree::Node { children, .. } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    /// Number of open syntactic nodes at each word.
    ///
    /// Reading left to right, the material before word `k` is held as a
    /// sequence of maximal completed constituents still waiting for their
    /// parent to close; the count at `k` is that sequence's length plus one
    /// for the word itself. Equivalently it is the stack size of a
    /// shift-reduce parser that reduces a constituent as soon as the next
    /// word shows it is finished. The first word always has depth 1, and
    /// depth grows by at most one per word.
    pub fn open_node_depths(&self) -> Vec<usize> {
        // (end, parent_end) for every non-root subtree.
        let mut spans = Vec::new();
        let n = self.annotate_spans(0, usize::MAX, &mut spans);
        (0..n)
            .map(|k| 1 + spans.iter().filter(|&&(end, pend)| end <= k && pend > k).count())
            .collect()
    }

    /// Returns the end of this subtree's span.
    fn annotate_spans(&self, start: usize, parent_end: usize, spans: &mut Vec<(usize, usize)>) -> usize {
        match self {
            Tree::Leaf { .. } => {
                if parent_end != usize::MAX {
                    spans.push((start + 1, parent_end));
                }
                start + 1
            }
            Tree::Node { children, .. } => {
                let end = start + self.leaf_count();
                let mut pos = start;
                for c in children {
                    pos = c.annotate_spans(pos, end, spans);
                }
                if parent_end != usize::MAX {
                    spans.push((end, parent_end));
                }
                end
            }
        }
    }

    fn leaf_count(&self) -> usize {
        match self {
            Tree::Leaf { .. } => 1,
            Tree::Node { children, .. } => children.iter().map(Tree::leaf_count).sum(),
        }
    }
}

/// Weighted derivation counts per nonterminal and yield length.
#[derive(Debug, Clone)]
pub struct LengthTable {
    max_len: usize,
    nt: Vec<Vec<f64>>,
    /// `suffix[r][i][len]`: weighted count of `rhs[i..]` yielding `len` words.
    suffix: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Item {
    rule: u32,
    dot: u16,
    origin: u16,
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        (self.rule, self.dot, self.origin).cmp(&(other.rule, other.dot, other.origin))
    }
}

impl Grammar {
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn nonterminal_name(&self, nt: usize) -> &str {
        &self.nonterminals[nt]
    }

    pub fn nonterminal_id(&self, name: &str) -> Option<usize> {
        self.nonterminals.iter().position(|n| n == name)
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// All words any category can produce, sorted and deduplicated.
    pub fn vocabulary(&self) -> Vec<String> {
        self.word_cats.keys().cloned().collect()
    }

    fn sym_count(&self, table: &LengthTable, s: Symbol, len: usize) -> f64 {
        match s {
            Symbol::Cat(c) => {
                if len == 1 {
                    self.categories[c].words.len() as f64
                } else {
                    0.0
                }
            }
            Symbol::Nt(n) => table.nt[n][len],
        }
    }

    /// Derivation counts for all yield lengths up to `max_len`, each rule
    /// contributing its weight times the number of word choices.
    pub fn length_table(&self, max_len: usize) -> LengthTable {
        let mut t = LengthTable {
            max_len,
            nt: vec![vec![0.0; max_len + 1]; self.nonterminals.len()],
            suffix: self
                .rules
                .iter()
                .map(|r| {
                    let mut s = vec![vec![0.0; max_len + 1]; r.rhs.len() + 1];
                    s[r.rhs.len()][0] = 1.0;
                    s
                })
                .collect(),
        };
        for len in 1..=max_len {
            // Unary productions read counts of the same length; iterate to
            // a fixpoint (terminates because there are no unary cycles).
            for _ in 0..=self.nonterminals.len() {
                let mut changed = false;
                for (ri, r) in self.rules.iter().enumerate() {
                    for i in (0..r.rhs.len()).rev() {
                        let rest = r.rhs.len() - i - 1;
                        let mut acc = 0.0;
                        for l in 1..=len.saturating_sub(rest) {
                            let tail = t.suffix[ri][i + 1][len - l];
                            if tail != 0.0 {
                                acc += self.sym_count(&t, r.rhs[i], l) * tail;
                            }
                        }
                        t.suffix[ri][i][len] = acc;
                    }
                }
                for (nt, rules) in self.by_lhs.iter().enumerate() {
                    let v: f64 = rules
                        .iter()
                        .map(|&ri| self.rules[ri].weight * t.suffix[ri][0][len])
                        .sum();
                    if v != t.nt[nt][len] {
                        t.nt[nt][len] = v;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
        }
        t
    }

    /// Sample a derivation of `nt` with exactly `len` words, with probability
    /// proportional to the product of rule weights (uniform over sentences
    /// when all weights are 1). `None` when no such derivation exists.
    pub fn sample_exact<R: Rng + ?Sized>(
        &self,
        table: &LengthTable,
        nt: usize,
        len: usize,
        rng: &mut R,
    ) -> Option<Tree> {
        if len > table.max_len || !(table.nt[nt][len] > 0.0) {
            return None;
        }
        let rules = &self.by_lhs[nt];
        let weights: Vec<f64> = rules
            .iter()
            .map(|&ri| self.rules[ri].weight * table.suffix[ri][0][len])
            .collect();
        let ri = rules[pick_weighted(&weights, rng)?];
        let rule = &self.rules[ri];
        let mut children = Vec::with_capacity(rule.rhs.len());
        let mut remaining = len;
        for i in 0..rule.rhs.len() {
            let rest = rule.rhs.len() - i - 1;
            let l = if rest == 0 {
                remaining
            } else {
                let options: Vec<f64> = (1..=remaining - rest)
                    .map(|l| {
                        self.sym_count(table, rule.rhs[i], l) * table.suffix[ri][i + 1][remaining - l]
                    })
                    .collect();
                pick_weighted(&options, rng)? + 1
            };
            children.push(self.sample_symbol_exact(table, rule.rhs[i], l, rng)?);
            remaining -= l;
        }
        Some(Tree::Node { nt, children })
    }

    fn sample_symbol_exact<R: Rng + ?Sized>(
        &self,
        table: &LengthTable,
        s: Symbol,
        len: usize,
        rng: &mut R,
    ) -> Option<Tree> {
        match s {
            Symbol::Cat(c) if len == 1 => Some(self.random_leaf(c, rng)),
            Symbol::Cat(_) => None,
            Symbol::Nt(n) => self.sample_exact(table, n, len, rng),
        }
    }

    fn random_leaf<R: Rng + ?Sized>(&self, cat: usize, rng: &mut R) -> Tree {
        let words = &self.categories[cat].words;
        Tree::Leaf {
            cat,
            word: words[rng.gen_range(0..words.len())].clone(),
        }
    }

    /// Top-down sampling with rule probabilities proportional to weights.
    /// Returns `None` if the derivation exceeds `max_words`.
    pub fn sample<R: Rng + ?Sized>(&self, nt: usize, max_words: usize, rng: &mut R) -> Option<Tree> {
        let mut budget = max_words;
        self.sample_rec(nt, &mut budget, rng)
    }

    fn sample_rec<R: Rng + ?Sized>(&self, nt: usize, budget: &mut usize, rng: &mut R) -> Option<Tree> {
        let rules = &self.by_lhs[nt];
        let weights: Vec<f64> = rules.iter().map(|&ri| self.rules[ri].weight).collect();
        let rule = &self.rules[rules[pick_weighted(&weights, rng)?]];
        let mut children = Vec::with_capacity(rule.rhs.len());
        for &s in &rule.rhs {
            match s {
                Symbol::Cat(c) => {
                    *budget = budget.checked_sub(1)?;
                    children.push(self.random_leaf(c, rng));
                }
                Symbol::Nt(n) => children.push(self.sample_rec(n, budget, rng)?),
            }
        }
        Some(Tree::Node { nt, children })
    }

    /// Earley recognition of `tokens` from the start symbol.
    pub fn recognizes<S: AsRef<str>>(&self, tokens: &[S]) -> bool {
        self.recognizes_from(self.start, tokens)
    }

    pub fn recognizes_from<S: AsRef<str>>(&self, nt: usize, tokens: &[S]) -> bool {
        let n = tokens.len();
        if n == 0 || n >= u16::MAX as usize {
            return false;
        }
        let token_cats: Vec<&[usize]> = tokens
            .iter()
            .map(|t| self.word_cats.get(t.as_ref()).map(Vec::as_slice).unwrap_or(&[]))
            .collect();
        if token_cats.iter().any(|c| c.is_empty()) {
            return false;
        }
        let mut sets: Vec<Vec<Item>> = vec![Vec::new(); n + 1];
        let mut seen: Vec<BTreeSet<Item>> = vec![BTreeSet::new(); n + 1];
        for &ri in &self.by_lhs[nt] {
            let it = Item { rule: ri as u32, dot: 0, origin: 0 };
            seen[0].insert(it);
            sets[0].push(it);
        }
        for k in 0..=n {
            let mut idx = 0;
            while idx < sets[k].len() {
                let it = sets[k][idx];
                idx += 1;
                let rule = &self.rules[it.rule as usize];
                match rule.rhs.get(it.dot as usize) {
                    Some(Symbol::Nt(b)) => {
                        for &ri in &self.by_lhs[*b] {
                            let new = Item { rule: ri as u32, dot: 0, origin: k as u16 };
                            if seen[k].insert(new) {
                                sets[k].push(new);
                            }
                        }
                    }
                    Some(Symbol::Cat(c)) => {
                        if k < n && token_cats[k].contains(c) {
                            let new = Item { dot: it.dot + 1, ..it };
                            if seen[k + 1].insert(new) {
                                sets[k + 1].push(new);
                            }
                        }
                    }
                    None => {
                        let origin = it.origin as usize;
                        // No empty productions, so origin < k and its set is final.
                        let waiting: Vec<Item> = sets[origin]
                            .iter()
                            .filter(|w| {
                                self.rules[w.rule as usize].rhs.get(w.dot as usize)
                                    == Some(&Symbol::Nt(rule.lhs))
                            })
                            .copied()
                            .collect();
                        for w in waiting {
                            let new = Item { dot: w.dot + 1, ..w };
                            if seen[k].insert(new) {
                                sets[k].push(new);
                            }
                        }
                    }
                }
            }
        }
        sets[n].iter().any(|it| {
            let r = &self.rules[it.rule as usize];
            r.lhs == nt && it.origin == 0 && it.dot as usize == r.rhs.len()
        })
    }
}

impl LengthTable {
    pub fn count(&self, nt: usize, len: usize) -> f64 {
        self.nt.get(nt).and_then(|v| v.get(len)).copied().unwrap_or(0.0)
    }
}

fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut x = rng.gen::<f64>() * total;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if x < w {
                return Some(i);
            }
            x -= w;
            last = Some(i);
        }
    }
    last
}
