//! Sentences annotated with syntactic depth (open nodes per word), sampled
//! so that word position and depth are de-correlated.

use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::cfg::{Grammar, GrammarBuilder};
use crate::{rng, stats, Error, Result};

pub(crate) const DET_SG: &[&str] = &["the", "a", "one", "this", "every"];
pub(crate) const DET_PL: &[&str] = &[
    "the", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "many", "these",
];
pub(crate) const N_SG: &[&str] = &[
    "cousin", "teacher", "neighbor", "artist", "chef", "poet", "soldier", "worker", "sailor", "writer",
];
pub(crate) const N_PL: &[&str] = &[
    "cousins", "teachers", "neighbors", "artists", "chefs", "poets", "soldiers", "workers", "sailors",
    "writers",
];
const ADJ: &[&str] = &[
    "ecstatic", "happy", "tired", "angry", "young", "old", "clever", "nervous", "proud", "busy",
];
const DEG: &[&str] = &["really", "very", "quite", "extremely", "rather"];
const PREP: &[&str] = &["of", "with", "from", "near"];
const AUX_SG: &[&str] = &["is", "was"];
const AUX_PL: &[&str] = &["are", "were"];
const VING: &[&str] = &[
    "laughing", "sleeping", "dancing", "smiling", "singing", "waiting", "working", "talking",
];
const ADV_V: &[&str] = &["quickly", "slowly", "loudly", "happily", "quietly"];
const VI_SG: &[&str] = &["laughs", "sleeps", "smiles", "waits", "works"];
const VI_PL: &[&str] = &["laugh", "sleep", "smile", "wait", "work"];
const VT_SG: &[&str] = &["teaches", "thanks", "meets", "helps"];
const VT_PL: &[&str] = &["teach", "thank", "meet", "help"];
const NAMES: &[&str] = &["bill", "mary", "john", "susan", "peter"];

/// Add the depth grammar under nonterminal `start`. All other symbols are
/// prefixed with `D_` so the rules can be merged into larger grammars.
pub fn add_depth_rules(b: &mut GrammarBuilder, start: &str) {
    b.category("D_Det_sg", DET_SG)
        .category("D_Det_pl", DET_PL)
        .category("D_N_sg", N_SG)
        .category("D_N_pl", N_PL)
        .category("D_Adj", ADJ)
        .category("D_Deg", DEG)
        .category("D_P", PREP)
        .category("D_Aux_sg", AUX_SG)
        .category("D_Aux_pl", AUX_PL)
        .category("D_Ving", VING)
        .category("D_AdvV", ADV_V)
        .category("D_Vi_sg", VI_SG)
        .category("D_Vi_pl", VI_PL)
        .category("D_Vt_sg", VT_SG)
        .category("D_Vt_pl", VT_PL)
        .category("D_Name", NAMES);
    b.rule(start, &["D_Clause"], 1.0)
        .rule(start, &["D_Clause", "'and'", start], 1.0);
    for n in ["sg", "pl"] {
        let np = alloc::format!("D_NP_{n}");
        let nps = alloc::format!("D_NPs_{n}");
        let vp = alloc::format!("D_VP_{n}");
        let det = alloc::format!("D_Det_{n}");
        let noun = alloc::format!("D_N_{n}");
        let aux = alloc::format!("D_Aux_{n}");
        let vi = alloc::format!("D_Vi_{n}");
        let vt = alloc::format!("D_Vt_{n}");
        b.rule("D_Clause", &[&np, &vp], 1.0);
        b.rule(&np, &[&det, &noun], 1.0)
            .rule(&np, &[&det, "D_AdjP", &noun], 1.0)
            .rule(&np, &[&det, &noun, "D_PP"], 1.0)
            .rule(&np, &[&det, "D_AdjP", &noun, "D_PP"], 1.0);
        b.rule(&nps, &[&det, &noun], 1.0)
            .rule(&nps, &[&det, "D_AdjP", &noun], 1.0);
        b.rule("D_PP", &["D_P", &nps], 1.0);
        b.rule(&vp, &[&vi], 1.0)
            .rule(&vp, &["D_AdvV", &vi], 1.0)
            .rule(&vp, &[&aux, "D_Ving"], 1.0)
            .rule(&vp, &[&aux, "D_AdvV", "D_Ving"], 1.0)
            .rule(&vp, &[&aux, "D_Ving", "D_PP"], 1.0)
            .rule(&vp, &[&aux, "D_AdvV", "D_Ving", "D_PP"], 1.0)
            .rule(&vp, &[&vt, "D_NP_sg"], 1.0)
            .rule(&vp, &[&vt, "D_NP_pl"], 1.0);
    }
    b.rule("D_NP_sg", &["D_Name"], 1.0)
        .rule("D_NPs_sg", &["D_Name"], 1.0);
    b.rule("D_AdjP", &["D_Adj"], 1.0)
        .rule("D_AdjP", &["D_Deg", "D_Adj"], 1.0);
}

/// The standalone depth grammar, start symbol `D_S`.
pub fn depth_grammar() -> Grammar {
    let mut b = GrammarBuilder::new();
    add_depth_rules(&mut b, "D_S");
    b.build("D_S").expect("built-in depth grammar is well formed")
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub lo: usize,
    pub hi: usize,
}

impl Span {
    pub fn new(lo: usize, hi: usize) -> Self {
        Span { lo, hi }
    }

    pub fn contains(&self, x: usize) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn iter(&self) -> core::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub sentences_per_length: usize,
    /// 1-based word positions.
    pub position_range: Span,
    pub depth_range: Span,
    /// Optional cap on the number of retained points.
    pub max_points: Option<usize>,
}

impl Default for DepthConfig {
    fn default() -> Self {
        DepthConfig {
            min_len: 2,
            max_len: 25,
            sentences_per_length: 300,
            position_range: Span::new(7, 12),
            depth_range: Span::new(3, 8),
            max_points: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSentence {
    pub tokens: Vec<String>,
    /// Open-node count for every token.
    pub depths: Vec<usize>,
    /// Retained (1-based position, depth) points.
    pub retained: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthDataset {
    pub config: DepthConfig,
    pub seed: u64,
    /// Sentences with at least one retained point.
    pub sentences: Vec<DepthSentence>,
    /// Retained points per (position, depth) cell, row-major over the ranges.
    pub cell_counts: Vec<((usize, usize), usize)>,
    /// Cells no generated sentence reached.
    pub empty_cells: Vec<(usize, usize)>,
    /// Pearson correlation between position and depth over retained points.
    pub correlation: f64,
}

impl DepthDataset {
    pub fn n_points(&self) -> usize {
        self.sentences.iter().map(|s| s.retained.len()).sum()
    }

    pub fn warnings(&self) -> Vec<String> {
        self.empty_cells
            .iter()
            .map(|(p, d)| alloc::format!("no sentence reaches position {p} at depth {d}"))
            .collect()
    }
}

/// Generate random sentences for every length, then keep (position, depth)
/// points spread as evenly as possible over all cells of the two ranges.
pub fn generate_depth_dataset(config: &DepthConfig, seed: u64) -> Result<DepthDataset> {
    if config.position_range.is_empty() || config.depth_range.is_empty() {
        return Err(Error::Config("position and depth ranges must be nonempty".into()));
    }
    if config.sentences_per_length == 0 {
        return Err(Error::Config("sentences_per_length must be at least 1".into()));
    }
    if config.min_len == 0 || config.min_len > config.max_len {
        return Err(Error::Config("need 1 <= min_len <= max_len".into()));
    }
    let grammar = depth_grammar();
    let table = grammar.length_table(config.max_len);
    let mut rng = rng::stream(seed, "depth-sentences");
    let mut pool: Vec<(Vec<String>, Vec<usize>)> = Vec::new();
    for len in config.min_len..=config.max_len {
        for _ in 0..config.sentences_per_length {
            if let Some(tree) = grammar.sample_exact(&table, grammar.start(), len, &mut rng) {
                pool.push((tree.leaves(), tree.open_node_depths()));
            }
        }
    }

    let pr = config.position_range;
    let dr = config.depth_range;
    let n_depth = dr.hi - dr.lo + 1;
    let cells: Vec<(usize, usize)> = pr
        .iter()
        .flat_map(|p| dr.iter().map(move |d| (p, d)))
        .collect();
    let mut buckets: Vec<Vec<(usize, usize)>> = alloc::vec![Vec::new(); cells.len()];
    for (si, (_, depths)) in pool.iter().enumerate() {
        for (i, &d) in depths.iter().enumerate() {
            let p = i + 1;
            if pr.contains(p) && dr.contains(d) {
                buckets[(p - pr.lo) * n_depth + (d - dr.lo)].push((si, p));
            }
        }
    }
    let mut pick_rng = rng::stream(seed, "depth-sampling");
    for b in &mut buckets {
        b.shuffle(&mut pick_rng);
    }
    let reachable: Vec<usize> = (0..cells.len()).filter(|&c| !buckets[c].is_empty()).collect();
    let empty_cells: Vec<(usize, usize)> = (0..cells.len())
        .filter(|&c| buckets[c].is_empty())
        .map(|c| cells[c])
        .collect();

    // Round-robin over reachable cells in a seeded order per round; a round
    // that finds any cell exhausted is the last one.
    let cap = config.max_points.unwrap_or(usize::MAX);
    let mut taken = alloc::vec![0usize; cells.len()];
    let mut selected: Vec<(usize, usize, usize)> = Vec::new();
    'rounds: loop {
        if reachable.is_empty() {
            break;
        }
        let mut order = reachable.clone();
        order.shuffle(&mut pick_rng);
        let mut exhausted = false;
        for &c in &order {
            if selected.len() >= cap {
                break 'rounds;
            }
            if let Some(&(si, p)) = buckets[c].get(taken[c]) {
                selected.push((si, p, cells[c].1));
                taken[c] += 1;
            } else {
                exhausted = true;
            }
        }
        if exhausted {
            break;
        }
    }

    let mut per_sentence: Vec<Vec<(usize, usize)>> = alloc::vec![Vec::new(); pool.len()];
    for &(si, p, d) in &selected {
        per_sentence[si].push((p, d));
    }
    let mut sentences = Vec::new();
    for (si, (tokens, depths)) in pool.into_iter().enumerate() {
        let mut retained = core::mem::take(&mut per_sentence[si]);
        if retained.is_empty() {
            continue;
        }
        retained.sort_unstable();
        sentences.push(DepthSentence {
            tokens,
            depths,
            retained,
        });
    }
    let xs: Vec<f64> = selected.iter().map(|&(_, p, _)| p as f64).collect();
    let ys: Vec<f64> = selected.iter().map(|&(_, _, d)| d as f64).collect();
    let correlation = if xs.len() >= 2 {
        stats::pearson(&xs, &ys)
    } else {
        f64::NAN
    };
    Ok(DepthDataset {
        config: config.clone(),
        seed,
        sentences,
        cell_counts: cells.iter().copied().zip(taken).collect(),
        empty_cells,
        correlation,
    })
}
