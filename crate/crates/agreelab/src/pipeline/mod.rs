//! Stage orchestration.
//!
//! Each stage reads files written by earlier stages and writes its own
//! outputs under the run directory. `manifest.json` records the resolved
//! config and, per completed stage, a hash of its inputs (the relevant
//! config sections plus the bytes of every input file) and a hash of every
//! output. A stage whose input hash and outputs are unchanged is skipped.

mod analysis;
mod data;
mod report;
mod train;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use agreelab_core::grammar::{StimulusSet, Template};
use agreelab_core::lstm::{LstmModel, UnitRef};
use agreelab_core::vocab::Vocabulary;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{hash_value, hex, RunConfig};
use crate::error::{AppError, AppResult};
use crate::exec::Pool;
use crate::io::{self, checkpoint, Provenance};

pub use analysis::{
    AccuracyRow, AccuracyTable, ConnectivityReport, GatReport, GatSelection, LrSummary, NamedUnit,
    PermutationEntry, PermutationReport, SrReport, SyntaxReport, MASK, MINUS_LR, SR_LR, SR_ONLY,
};
pub use data::{log_frequencies, DataManifest};
pub use report::{cross_reference_problems, Artifact, Index};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenData,
    Train,
    Eval,
    Ablate,
    Traces,
    Gat,
    Depth,
    Connectivity,
    PermTest,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::GenData,
        Stage::Train,
        Stage::Eval,
        Stage::Ablate,
        Stage::Traces,
        Stage::Gat,
        Stage::Depth,
        Stage::Connectivity,
        Stage::PermTest,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Ablate => "ablate",
            Stage::Traces => "traces",
            Stage::Gat => "gat",
            Stage::Depth => "depth",
            Stage::Connectivity => "connectivity",
            Stage::PermTest => "perm-test",
            Stage::Report => "report",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Stage::GenData => "generate training corpus, agreement tasks and depth dataset",
            Stage::Train => "train the language model (or import a checkpoint)",
            Stage::Eval => "agreement accuracy per task and condition",
            Stage::Ablate => "single-unit ablation sweep and long-range unit identification",
            Stage::Traces => "gate and cell traces of the long-range units",
            Stage::Gat => "short-range unit identification and generalization-across-time decoding",
            Stage::Depth => "depth regression, syntax units and their traces",
            Stage::Connectivity => "efferent and effective afferent weights, mutual inhibition",
            Stage::PermTest => "group ablation permutation tests on easy tasks",
            Stage::Report => "index report linking every artifact",
        }
    }

    /// Config sections (dotted paths) that affect the stage's outputs.
    fn config_keys(self) -> &'static [&'static str] {
        match self {
            Stage::GenData => &["seed", "data"],
            Stage::Train => &["seed", "model", "train"],
            Stage::Eval => &["analysis.ablation_mode", "analysis.eval_mask"],
            Stage::Ablate => &[
                "analysis.ablation_mode",
                "analysis.sweep_threshold",
                "analysis.sweep_tasks",
                "analysis.lr_tolerance",
            ],
            Stage::Traces => &["analysis.eval_mask"],
            Stage::Gat => &["analysis.gat", "analysis.gat_state", "analysis.sr"],
            Stage::Depth => &["analysis.depth", "analysis.depth_frequency"],
            Stage::Connectivity => &[
                "seed",
                "analysis.afferent_threshold",
                "analysis.afferent_population",
                "analysis.random_units",
            ],
            Stage::PermTest => &[
                "seed",
                "analysis.ablation_mode",
                "analysis.permutation_draws",
                "analysis.permutation_tasks",
                "analysis.eval_mask",
            ],
            Stage::Report => &[],
        }
    }

    /// Files (relative to the run directory) the stage reads.
    fn inputs(self, ws: &Workspace) -> Vec<PathBuf> {
        let model = vec![ws.checkpoint_rel()];
        let tasks = |ts: &[Template]| ts.iter().map(|t| paths::task(*t)).collect::<Vec<_>>();
        let mut v = match self {
            Stage::GenData => vec![],
            Stage::Train => vec![paths::CORPUS_TRAIN.into(), paths::CORPUS_VALID.into(), paths::VOCAB.into()],
            Stage::Eval => [model, tasks(&ws.cfg.data.tasks)].concat(),
            Stage::Ablate => [model, tasks(&ws.cfg.data.tasks)].concat(),
            Stage::Traces => [model, tasks(&[Template::NounPP]), vec![paths::LR_UNITS.into()]].concat(),
            Stage::Gat => [model, tasks(&[Template::NounPP]), vec![paths::LR_UNITS.into()]].concat(),
            Stage::Depth => [
                model,
                tasks(&[Template::NounPP]),
                vec![paths::DEPTH.into(), paths::LOG_FREQ.into()],
            ]
            .concat(),
            Stage::Connectivity => [
                model,
                tasks(&[Template::NounPP]),
                vec![paths::LR_UNITS.into(), paths::SR_UNITS.into(), paths::SYNTAX.into()],
            ]
            .concat(),
            Stage::PermTest => [
                model,
                tasks(&ws.cfg.analysis.permutation_tasks),
                vec![paths::LR_UNITS.into(), paths::SR_UNITS.into()],
            ]
            .concat(),
            Stage::Report => vec![],
        };
        if self == Stage::GenData {
            if let Some(p) = &ws.cfg.data.eval_lexicon {
                v.push(p.clone());
            }
        }
        v
    }

    fn run(self, ws: &Workspace) -> AppResult<Vec<PathBuf>> {
        match self {
            Stage::GenData => data::run(ws),
            Stage::Train => train::run(ws),
            Stage::Eval => analysis::eval(ws),
            Stage::Ablate => analysis::ablate(ws),
            Stage::Traces => analysis::traces(ws),
            Stage::Gat => analysis::gat(ws),
            Stage::Depth => analysis::depth(ws),
            Stage::Connectivity => analysis::connectivity(ws),
            Stage::PermTest => analysis::perm_test(ws),
            Stage::Report => report::run(ws),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = AppError;

    fn from_str(s: &str) -> AppResult<Stage> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| AppError::Config(format!("unknown stage {s:?}")))
    }
}

/// Relative output paths.
pub mod paths {
    use std::path::PathBuf;

    use agreelab_core::grammar::Template;
    use agreelab_core::lstm::UnitRef;

    pub const MANIFEST: &str = "manifest.json";
    pub const CORPUS_TRAIN: &str = "data/corpus_train.txt";
    pub const CORPUS_VALID: &str = "data/corpus_valid.txt";
    pub const VOCAB: &str = "data/vocab.json";
    pub const DEPTH: &str = "data/depth.json";
    pub const LOG_FREQ: &str = "data/log_frequency.json";
    pub const DATA_MANIFEST: &str = "data/manifest.json";
    pub const CHECKPOINT: &str = "model/checkpoint.json";
    pub const PERPLEXITY: &str = "model/perplexity.csv";
    pub const ACCURACY_JSON: &str = "reports/accuracy.json";
    pub const ACCURACY_CSV: &str = "reports/accuracy.csv";
    pub const SWEEP_JSON: &str = "reports/ablation_sweep.json";
    pub const SWEEP_CSV: &str = "reports/ablation_sweep.csv";
    pub const TABLE2_CSV: &str = "reports/ablation_table.csv";
    pub const LR_UNITS: &str = "reports/lr_units.json";
    pub const SR_UNITS: &str = "reports/sr_units.json";
    pub const GAT_JSON: &str = "reports/gat.json";
    pub const GAT_CSV: &str = "reports/gat.csv";
    pub const GAT_SVG: &str = "plots/gat.svg";
    pub const SR_SVG: &str = "plots/sr_units.svg";
    pub const DEPTH_JSON: &str = "reports/depth.json";
    pub const DEPTH_CSV: &str = "reports/depth_weights.csv";
    pub const SYNTAX: &str = "reports/syntax_units.json";
    pub const SYNTAX_SVG: &str = "plots/syntax_traces.svg";
    pub const DEPTH_SVG: &str = "plots/depth_weights.svg";
    pub const CONNECTIVITY_JSON: &str = "reports/connectivity.json";
    pub const EFFERENT_CSV: &str = "reports/efferent.csv";
    pub const AFFERENT_CSV: &str = "reports/afferent.csv";
    pub const EFFERENT_SVG: &str = "plots/efferent.svg";
    pub const AFFERENT_SVG: &str = "plots/afferent.svg";
    pub const PERMUTATION_JSON: &str = "reports/permutation.json";
    pub const INDEX_HTML: &str = "index.html";
    pub const INDEX_JSON: &str = "reports/index.json";

    pub fn task(t: Template) -> PathBuf {
        PathBuf::from(format!("data/tasks/{}.jsonl", t.name()))
    }

    pub fn unit_traces_csv(u: UnitRef) -> PathBuf {
        PathBuf::from(format!("reports/traces_{u}.csv"))
    }

    pub fn unit_traces_svg(u: UnitRef) -> PathBuf {
        PathBuf::from(format!("plots/traces_{u}.svg"))
    }
}

/// Everything a stage needs: config, run directory, provenance and the
/// worker pool.
pub struct Workspace {
    pub cfg: RunConfig,
    pub root: PathBuf,
    pub prov: Provenance,
    pub pool: Pool,
    /// Continue training from this checkpoint's stored state.
    pub resume_from: Option<PathBuf>,
}

impl Workspace {
    pub fn new(cfg: RunConfig) -> AppResult<Workspace> {
        let pool = Pool::new(cfg.jobs);
        let prov = Provenance::new(&cfg.hash(), cfg.seed);
        Ok(Workspace {
            root: cfg.out.clone(),
            cfg,
            prov,
            pool,
            resume_from: None,
        })
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    /// Checkpoint path relative to the run directory, or absolute for an
    /// imported checkpoint.
    fn checkpoint_rel(&self) -> PathBuf {
        self.cfg
            .model
            .checkpoint
            .clone()
            .unwrap_or_else(|| PathBuf::from(paths::CHECKPOINT))
    }

    pub fn load_model(&self) -> AppResult<(LstmModel, Vocabulary)> {
        let p = self.path(self.checkpoint_rel());
        let ck = checkpoint::load(&p)?;
        let vocab = ck.vocab.ok_or_else(|| {
            AppError::format(&p, "checkpoint carries no vocabulary; analyses need one")
        })?;
        Ok((ck.model, vocab))
    }

    pub fn load_task(&self, t: Template) -> AppResult<StimulusSet> {
        data::load_task(&self.path(paths::task(t)), t)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, v: &T) -> AppResult<PathBuf> {
        io::write_json(&self.path(rel), &self.prov, v)?;
        Ok(rel.into())
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&self, rel: &str) -> AppResult<T> {
        let p = self.path(rel);
        if !p.exists() {
            return Err(AppError::Config(format!(
                "{} is missing; run the stage that produces it first",
                p.display()
            )));
        }
        Ok(io::read_json(&p)?.1)
    }

    pub fn write_csv<S: AsRef<str>>(&self, rel: &str, header: &[&str], rows: &[Vec<S>]) -> AppResult<PathBuf> {
        io::write_csv(&self.path(rel), &self.prov, header, rows)?;
        Ok(rel.into())
    }

    pub fn write_svg(&self, rel: &str, fig: &crate::plot::Figure) -> AppResult<PathBuf> {
        io::write_atomic(&self.path(rel), fig.render(&self.prov).as_bytes())?;
        Ok(rel.into())
    }

    /// Units from the long-range report.
    pub fn lr_units(&self) -> AppResult<LrSummary> {
        self.read_json(paths::LR_UNITS)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_hash: String,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub provenance: Provenance,
    pub config: RunConfig,
    pub stages: BTreeMap<Stage, StageRecord>,
}

fn file_hash(p: &Path) -> AppResult<String> {
    let bytes = std::fs::read(p).map_err(|e| AppError::io(p, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn config_section(cfg: &RunConfig, keys: &[&str]) -> Value {
    let full = serde_json::to_value(cfg).expect("config serializes");
    let mut out = serde_json::Map::new();
    for k in keys {
        let mut node = &full;
        for part in k.split('.') {
            node = node.get(part).unwrap_or(&Value::Null);
        }
        out.insert((*k).to_string(), node.clone());
    }
    Value::Object(out)
}

fn input_hash(stage: Stage, ws: &Workspace) -> AppResult<String> {
    let mut files = serde_json::Map::new();
    for rel in stage.inputs(ws) {
        let p = ws.path(&rel);
        let h = if p.exists() { file_hash(&p)? } else { "missing".into() };
        files.insert(rel.display().to_string(), Value::String(h));
    }
    Ok(hash_value(&serde_json::json!({
        "stage": stage.name(),
        "tool": ws.prov.version,
        "config": config_section(&ws.cfg, stage.config_keys()),
        "files": files,
    })))
}

/// Load the manifest of a run directory, if any.
pub fn load_manifest(root: &Path) -> AppResult<Option<Manifest>> {
    let p = root.join(paths::MANIFEST);
    if !p.exists() {
        return Ok(None);
    }
    let text = io::read_text(&p)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| AppError::format(&p, e))
}

fn save_manifest(ws: &Workspace, m: &Manifest) -> AppResult<()> {
    let mut s = serde_json::to_string_pretty(m).expect("manifest serializes");
    s.push('\n');
    io::write_atomic(&ws.path(paths::MANIFEST), s.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

/// What a pipeline run did, stage by stage.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub stages: Vec<(Stage, StageOutcome)>,
}

fn is_complete(ws: &Workspace, rec: &StageRecord, hash: &str) -> AppResult<bool> {
    if rec.input_hash != hash {
        return Ok(false);
    }
    for (rel, h) in &rec.outputs {
        let p = ws.path(rel);
        if !p.exists() || file_hash(&p)? != *h {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Run `stages` in order. Completed stages with unchanged inputs are
/// skipped unless `force`. A failing stage halts the run; outputs of
/// earlier stages and the manifest stay on disk.
pub fn run_stages(
    ws: &Workspace,
    stages: &[Stage],
    force: bool,
    log: &mut dyn FnMut(&str),
) -> AppResult<RunSummary> {
    let mut manifest = Manifest {
        provenance: ws.prov.clone(),
        config: ws.cfg.clone(),
        stages: load_manifest(&ws.root)?.map(|m| m.stages).unwrap_or_default(),
    };
    save_manifest(ws, &manifest)?;
    let mut summary = RunSummary { stages: Vec::new() };
    for &stage in stages {
        let mut hash = input_hash(stage, ws)?;
        if stage == Stage::Report {
            // The report reads every other stage's outputs, whichever command wrote them.
            let upstream: BTreeMap<_, _> = manifest
                .stages
                .iter()
                .filter(|(s, _)| **s != Stage::Report)
                .map(|(s, rec)| (s.name(), &rec.outputs))
                .collect();
            hash = hash_value(&serde_json::json!({ "own": hash, "upstream": upstream }));
        }
        let done = match manifest.stages.get(&stage) {
            Some(rec) if !force => is_complete(ws, rec, &hash)?,
            _ => false,
        };
        if done {
            log(&format!("[{stage}] up to date, skipped"));
            summary.stages.push((stage, StageOutcome::Skipped));
            continue;
        }
        log(&format!("[{stage}] {}", stage.describe()));
        let t0 = std::time::Instant::now();
        manifest.stages.remove(&stage);
        let outputs = stage.run(ws).map_err(|e| AppError::Stage {
            stage: stage.name().to_string(),
            source: Box::new(e),
        })?;
        let mut rec = StageRecord {
            input_hash: hash,
            outputs: BTreeMap::new(),
        };
        for rel in outputs {
            let h = file_hash(&ws.path(&rel))?;
            rec.outputs.insert(rel.display().to_string(), h);
        }
        manifest.stages.insert(stage, rec);
        save_manifest(ws, &manifest)?;
        log(&format!("[{stage}] done in {:.1}s", t0.elapsed().as_secs_f64()));
        summary.stages.push((stage, StageOutcome::Ran));
    }
    Ok(summary)
}

/// The full pipeline plan, one line per stage.
pub fn plan(ws: &Workspace) -> Vec<String> {
    Stage::ALL
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mode = if *s == Stage::Train && ws.cfg.model.checkpoint.is_some() {
                " (import)"
            } else {
                ""
            };
            format!("{:>2}. {:<13} {}{}", k + 1, s.name(), s.describe(), mode)
        })
        .collect()
}

pub fn run_pipeline(ws: &Workspace, log: &mut dyn FnMut(&str)) -> AppResult<RunSummary> {
    run_stages(ws, &Stage::ALL, false, log)
}

/// Units named in an ablation mask flag.
pub fn parse_mask(s: &str) -> AppResult<Vec<UnitRef>> {
    Ok(UnitRef::parse_list(s)?)
}
