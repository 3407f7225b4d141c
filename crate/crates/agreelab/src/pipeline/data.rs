use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use agreelab_core::grammar::corpus::{generate_training_corpus, Corpus, LexiconSplit};
use agreelab_core::grammar::depth::generate_depth_dataset;
use agreelab_core::grammar::template::generate_na_task;
use agreelab_core::grammar::{DepthDataset, Lexicon, StimulusSet, Template};
use agreelab_core::rng::derive_seed;
use agreelab_core::vocab::Vocabulary;
use serde::{Deserialize, Serialize};

use super::{paths, Workspace};
use crate::error::{AppError, AppResult};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCounts {
    pub task: Template,
    pub file: String,
    /// Stimuli per condition label.
    pub conditions: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSummary {
    pub sentences: usize,
    pub points: usize,
    /// Points per (position, depth) cell.
    pub cells: Vec<((usize, usize), usize)>,
    pub empty_cells: Vec<(usize, usize)>,
    /// Pearson correlation of position and depth over retained points.
    pub position_depth_correlation: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub train_sentences: usize,
    pub train_tokens: usize,
    pub valid_sentences: usize,
    pub valid_tokens: usize,
    pub vocab_size: usize,
    pub tasks: Vec<TaskCounts>,
    pub depth: DepthSummary,
}

/// Natural-log relative frequency of every word in `corpus`, counting the
/// end marker of each sentence.
pub fn log_frequencies(corpus: &Corpus) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0usize;
    for s in &corpus.sentences {
        for w in s {
            *counts.entry(w.clone()).or_default() += 1;
        }
        total += s.len();
    }
    let total = total.max(1) as f64;
    counts
        .into_iter()
        .map(|(w, c)| (w, (c as f64 / total).ln()))
        .collect()
}

fn training_lexicon(ws: &Workspace, eval: &Lexicon) -> AppResult<Lexicon> {
    let c = &ws.cfg.data.corpus;
    Ok(match c.split {
        LexiconSplit::Shared => eval.clone(),
        LexiconSplit::Extended => eval.merged(&Lexicon::training_extension(c.pool_sizes)?),
    })
}

pub(super) fn run(ws: &Workspace) -> AppResult<Vec<PathBuf>> {
    let cfg = &ws.cfg;
    let eval = cfg.eval_lexicon()?;
    let train_lex = training_lexicon(ws, &eval)?;
    let (corpus, vocab) = generate_training_corpus(
        &train_lex,
        &cfg.data.corpus,
        cfg.data.train_sentences,
        derive_seed(cfg.seed, "corpus"),
    )?;
    let (train, valid) = corpus.split_validation(cfg.data.valid_fraction);
    let mut out: Vec<PathBuf> = Vec::new();
    io::write_corpus(&ws.path(paths::CORPUS_TRAIN), &ws.prov, &train)?;
    io::write_corpus(&ws.path(paths::CORPUS_VALID), &ws.prov, &valid)?;
    out.push(paths::CORPUS_TRAIN.into());
    out.push(paths::CORPUS_VALID.into());
    out.push(ws.write_json(paths::VOCAB, &vocab)?);
    out.push(ws.write_json(paths::LOG_FREQ, &log_frequencies(&train))?);

    let mut tasks = Vec::new();
    for &t in &cfg.data.tasks {
        let set = generate_na_task(t, &eval, cfg.data.per_condition, derive_seed(cfg.seed, "tasks"))?;
        // Every stimulus must be readable by the model trained on this corpus.
        for s in &set.stimuli {
            vocab.encode(&s.tokens)?;
        }
        let rel = paths::task(t);
        io::write_jsonl(&ws.path(&rel), &ws.prov, &set.stimuli)?;
        tasks.push(TaskCounts {
            task: t,
            file: rel.display().to_string(),
            conditions: set
                .conditions
                .iter()
                .map(|c| (c.label(), set.count(*c)))
                .collect(),
        });
        out.push(rel);
    }

    let depth = generate_depth_dataset(&cfg.data.depth, derive_seed(cfg.seed, "depth"))?;
    for s in &depth.sentences {
        vocab.encode(&s.tokens)?;
    }
    out.push(ws.write_json(paths::DEPTH, &depth)?);
    let manifest = DataManifest {
        train_sentences: train.sentences.len(),
        train_tokens: train.n_tokens(),
        valid_sentences: valid.sentences.len(),
        valid_tokens: valid.n_tokens(),
        vocab_size: vocab.len(),
        tasks,
        depth: DepthSummary {
            sentences: depth.sentences.len(),
            points: depth.n_points(),
            cells: depth.cell_counts.clone(),
            empty_cells: depth.empty_cells.clone(),
            position_depth_correlation: depth.correlation,
            warnings: depth.warnings(),
        },
    };
    out.push(ws.write_json(paths::DATA_MANIFEST, &manifest)?);
    Ok(out)
}

pub(super) fn load_task(path: &Path, task: Template) -> AppResult<StimulusSet> {
    if !path.exists() {
        return Err(AppError::Config(format!(
            "{} is missing; run gen-data first",
            path.display()
        )));
    }
    let stimuli: Vec<agreelab_core::grammar::Stimulus> = io::read_jsonl(path)?;
    if let Some(bad) = stimuli.iter().find(|s| s.task != task) {
        return Err(AppError::format(
            path,
            format!("stimulus of task {} in the {} file", bad.task.name(), task.name()),
        ));
    }
    Ok(StimulusSet {
        task,
        conditions: task.conditions(),
        stimuli,
    })
}

pub(super) fn load_corpus_pair(ws: &Workspace) -> AppResult<(Corpus, Corpus, Vocabulary)> {
    let train = io::read_corpus(&ws.path(paths::CORPUS_TRAIN))?;
    let valid = io::read_corpus(&ws.path(paths::CORPUS_VALID))?;
    let vocab: Vocabulary = ws.read_json(paths::VOCAB)?;
    Ok((train, valid, vocab))
}

pub(super) fn load_depth(ws: &Workspace) -> AppResult<DepthDataset> {
    ws.read_json(paths::DEPTH)
}
