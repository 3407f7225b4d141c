use std::path::PathBuf;

use agreelab_core::lstm::{train, Dims, EpochLog, LstmModel};
use agreelab_core::rng::derive_seed;
use serde::{Deserialize, Serialize};

use super::{data, input_hash, paths, Stage, Workspace};
use crate::error::{AppError, AppResult};
use crate::io::checkpoint::{self, Checkpoint};

const PARTIAL: &str = "model/partial/checkpoint.json";
const PARTIAL_META: &str = "model/partial/meta.json";
const IMPORT_META: &str = "model/import.json";

/// Progress of an interrupted training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PartialMeta {
    input_hash: String,
    log: Vec<EpochLog>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ImportRecord {
    source: PathBuf,
    dims: Dims,
    vocab_size: usize,
}

fn log_rows(log: &[EpochLog]) -> Vec<Vec<String>> {
    log.iter()
        .map(|l| {
            vec![
                l.epoch.to_string(),
                l.lr.to_string(),
                l.train_ppl.to_string(),
                l.valid_ppl.to_string(),
                l.improved.to_string(),
            ]
        })
        .collect()
}

pub(super) fn run(ws: &Workspace) -> AppResult<Vec<PathBuf>> {
    if let Some(src) = &ws.cfg.model.checkpoint {
        let ck = checkpoint::load(&ws.path(src))?;
        let vocab = ck
            .vocab
            .ok_or_else(|| AppError::format(src, "imported checkpoint carries no vocabulary"))?;
        let rec = ImportRecord {
            source: src.clone(),
            dims: ck.model.dims,
            vocab_size: vocab.len(),
        };
        return Ok(vec![ws.write_json(IMPORT_META, &rec)?]);
    }
    let cfg = &ws.cfg;
    let (train_c, valid_c, vocab) = data::load_corpus_pair(ws)?;
    let encode = |c: &agreelab_core::grammar::corpus::Corpus| {
        c.sentences
            .iter()
            .map(|s| vocab.encode(s))
            .collect::<agreelab_core::Result<Vec<_>>>()
    };
    let train_ids = encode(&train_c)?;
    let valid_ids = encode(&valid_c)?;
    let dims = Dims {
        vocab_size: vocab.len(),
        embed_dim: cfg.model.embed_dim,
        hidden_dim: cfg.model.hidden_dim,
        n_layers: cfg.model.n_layers,
    };
    let mut tc = cfg.train.clone();
    tc.seed = derive_seed(cfg.seed, "train");

    // Resume from an explicit checkpoint, else from this stage's own
    // partial progress when its inputs are unchanged.
    let hash = input_hash(Stage::Train, ws)?;
    let mut prior_log: Vec<EpochLog> = Vec::new();
    let (model, resume) = if let Some(p) = &ws.resume_from {
        let ck = checkpoint::load(p)?;
        if ck.model.dims != dims {
            return Err(AppError::Config(format!(
                "resume checkpoint has dims {:?}, config asks for {dims:?}",
                ck.model.dims
            )));
        }
        (ck.model, ck.training)
    } else {
        let meta_path = ws.path(PARTIAL_META);
        let partial = if meta_path.exists() {
            let meta: PartialMeta = ws.read_json(PARTIAL_META)?;
            if meta.input_hash == hash {
                let ck = checkpoint::load(&ws.path(PARTIAL))?;
                prior_log = meta.log;
                Some((ck.model, ck.training))
            } else {
                None
            }
        } else {
            None
        };
        partial.unwrap_or_else(|| (LstmModel::init(dims, derive_seed(cfg.seed, "init")), None))
    };

    let mut log = prior_log.clone();
    let outcome = train(
        model,
        &train_ids,
        &valid_ids,
        vocab.eos(),
        &tc,
        resume,
        &ws.pool,
        &mut |entry, model, state| {
            log.push(entry.clone());
            let ck = Checkpoint {
                model: model.clone(),
                vocab: Some(vocab.clone()),
                training: Some(state.clone()),
            };
            let save = || -> AppResult<()> {
                checkpoint::save(&ws.path(PARTIAL), &ck)?;
                ws.write_json(
                    PARTIAL_META,
                    &PartialMeta {
                        input_hash: hash.clone(),
                        log: log.clone(),
                    },
                )?;
                Ok(())
            };
            save().map_err(|e| agreelab_core::Error::Config(format!("saving progress: {e}")))
        },
    )?;
    let mut full_log = prior_log;
    full_log.extend(outcome.log.iter().cloned());
    let ck = Checkpoint {
        model: outcome.model,
        vocab: Some(vocab),
        training: Some(outcome.state),
    };
    checkpoint::save(&ws.path(paths::CHECKPOINT), &ck)?;
    let csv = ws.write_csv(
        paths::PERPLEXITY,
        &["epoch", "lr", "train_ppl", "valid_ppl", "improved"],
        &log_rows(&full_log),
    )?;
    let _ = std::fs::remove_dir_all(ws.path("model/partial"));
    Ok(vec![paths::CHECKPOINT.into(), csv])
}

