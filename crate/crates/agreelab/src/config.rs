//! Run configuration.
//!
//! Resolution order, lowest to highest precedence: built-in defaults, the
//! JSON file given with `--config`, `--set key.path=value` overrides, then
//! the dedicated flags (`--seed`, `--out`, `--jobs`). The config file may
//! be partial; missing fields take their defaults.

use std::path::{Path, PathBuf};

use agreelab_core::connectivity::SourcePopulation;
use agreelab_core::decoding::{DecoderConfig, DepthRegressionConfig, SrConfig, StateKind};
use agreelab_core::grammar::{CorpusConfig, DepthConfig, Lexicon, Span, Template};
use agreelab_core::lstm::{AblationMode, TrainConfig, UnitRef};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 means all cores. Results do not depend on it.
    pub jobs: usize,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub corpus: CorpusConfig,
    pub train_sentences: usize,
    pub valid_fraction: f64,
    /// Evaluation lexicon as a JSON file; the built-in pools when absent.
    pub eval_lexicon: Option<PathBuf>,
    pub tasks: Vec<Template>,
    pub per_condition: usize,
    pub depth: DepthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    /// Analyse this checkpoint instead of training one.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Clamp h only, or h and the cell state, for every ablation.
    pub ablation_mode: AblationMode,
    /// Accuracy drop (points) that flags a unit in the sweep.
    pub sweep_threshold: f64,
    pub sweep_tasks: Vec<Template>,
    /// Largest accuracy change (points) allowed on opposite-number
    /// conditions for a long-range unit.
    pub lr_tolerance: f64,
    pub gat: DecoderConfig,
    pub gat_state: StateKind,
    pub sr: SrConfig,
    pub depth: DepthRegressionConfig,
    pub depth_frequency: bool,
    pub afferent_threshold: f64,
    pub afferent_population: SourcePopulation,
    /// Units drawn at random as controls for the efferent analysis.
    pub random_units: usize,
    pub permutation_draws: usize,
    pub permutation_tasks: Vec<Template>,
    /// Extra ablation applied by `eval` and `traces`; replaces the
    /// SR+LR target group of `perm-test` when nonempty.
    pub eval_mask: Vec<UnitRef>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            out: PathBuf::from("agreelab-out"),
            jobs: 0,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            corpus: CorpusConfig::default(),
            train_sentences: 10_000,
            valid_fraction: 0.05,
            eval_lexicon: None,
            tasks: vec![
                Template::Simple,
                Template::Adv,
                Template::TwoAdv,
                Template::CoAdv,
                Template::NamePP,
                Template::NounPP,
                Template::NounPPAdv,
            ],
            per_condition: 600,
            depth: DepthConfig {
                min_len: 2,
                max_len: 20,
                sentences_per_length: 60,
                position_range: Span::new(5, 10),
                depth_range: Span::new(2, 5),
                max_points: Some(2000),
            },
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 16,
            hidden_dim: 12,
            n_layers: 2,
            checkpoint: None,
        }
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            ablation_mode: AblationMode::Hidden,
            sweep_threshold: 10.0,
            sweep_tasks: vec![Template::NounPP],
            lr_tolerance: 5.0,
            gat: DecoderConfig::default(),
            gat_state: StateKind::Cell,
            sr: SrConfig::default(),
            depth: DepthRegressionConfig::default(),
            depth_frequency: true,
            afferent_threshold: 3.0,
            afferent_population: SourcePopulation::SameLayer,
            random_units: 2,
            permutation_draws: 1000,
            permutation_tasks: vec![
                Template::Simple,
                Template::Adv,
                Template::TwoAdv,
                Template::CoAdv,
            ],
            eval_mask: Vec::new(),
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    /// `dotted.key=json-or-string` assignments.
    pub set: Vec<String>,
}

impl RunConfig {
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> AppResult<RunConfig> {
        let mut value = serde_json::to_value(RunConfig::default()).expect("config serializes");
        if let Some(path) = file {
            let text = crate::io::read_text(path)?;
            let mut from_file: Value = serde_json::from_str(&text).map_err(|e| AppError::format(path, e))?;
            // A run manifest carries its full config under "config".
            if from_file.get("provenance").is_some() {
                if let Some(c) = from_file.get_mut("config") {
                    from_file = c.take();
                }
            }
            merge(&mut value, from_file);
        }
        for assignment in &overrides.set {
            apply_assignment(&mut value, assignment)?;
        }
        let mut cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| AppError::Config(format!("invalid config: {e}")))?;
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(o) = &overrides.out {
            cfg.out = o.clone();
        }
        if let Some(j) = overrides.jobs {
            cfg.jobs = j;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> AppResult<()> {
        let bad = |m: &str| Err(AppError::Config(m.into()));
        if self.model.embed_dim == 0 || self.model.hidden_dim == 0 || self.model.n_layers == 0 {
            return bad("model dimensions must be positive");
        }
        if self.data.tasks.is_empty() {
            return bad("task list is empty");
        }
        if self.data.per_condition == 0 {
            return bad("per_condition must be positive");
        }
        if !(0.0..1.0).contains(&self.data.valid_fraction) {
            return bad("valid_fraction must lie in [0, 1)");
        }
        for t in self.analysis.sweep_tasks.iter().chain(&self.analysis.permutation_tasks) {
            if !self.data.tasks.contains(t) {
                return Err(AppError::Config(format!(
                    "analysis task {} is not in data.tasks",
                    t.name()
                )));
            }
        }
        self.train.validate()?;
        Ok(())
    }

    /// Hash of everything that can change results. The output directory and
    /// worker count are excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("out");
            m.remove("jobs");
        }
        hash_value(&v)
    }

    pub fn eval_lexicon(&self) -> AppResult<Lexicon> {
        match &self.data.eval_lexicon {
            None => Ok(Lexicon::builtin(self.data.corpus.pool_sizes)?),
            Some(p) => {
                let lex: Lexicon =
                    serde_json::from_str(&crate::io::read_text(p)?).map_err(|e| AppError::format(p, e))?;
                lex.validate()?;
                Ok(lex)
            }
        }
    }
}

/// Short hex digest of a JSON value. Object keys are emitted in sorted
/// order, so the digest does not depend on field order.
pub fn hash_value(v: &Value) -> String {
    let canonical = serde_json::to_string(&sorted(v)).expect("json");
    hex(&Sha256::digest(canonical.as_bytes()))[..16].to_string()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sorted(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let mut out = serde_json::Map::new();
            for k in keys {
                out.insert(k.clone(), sorted(&m[k]));
            }
            Value::Object(out)
        }
        Value::Array(a) => Value::Array(a.iter().map(sorted).collect()),
        other => other.clone(),
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn apply_assignment(root: &mut Value, assignment: &str) -> AppResult<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| AppError::Config(format!("--set expects key=value, got {assignment:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| AppError::Config(format!("--set {path}: {part} is not inside an object")))?;
        if !obj.contains_key(*part) {
            return Err(AppError::Config(format!("--set {path}: unknown key {part}")));
        }
        if k + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.get_mut(*part).expect("checked");
    }
    Err(AppError::Config("--set with empty key".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_cli_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 9, "model": {"hidden_dim": 8}, "train": {"epochs": 3}}"#).unwrap();
        let ov = Overrides {
            seed: Some(4),
            set: vec!["train.epochs=5".into(), "analysis.gat_state=hidden".into()],
            ..Default::default()
        };
        let cfg = RunConfig::resolve(Some(&p), &ov).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.model.hidden_dim, 8);
        assert_eq!(cfg.model.embed_dim, ModelConfig::default().embed_dim);
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.analysis.gat_state, StateKind::Hidden);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let ov = Overrides {
            set: vec!["model.hiden_dim=3".into()],
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(None, &ov), Err(AppError::Config(_))));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"modle": {}}"#).unwrap();
        assert!(matches!(
            RunConfig::resolve(Some(&p), &Overrides::default()),
            Err(AppError::Config(_))
        ));
    }

    #[test]
    fn hash_ignores_out_and_jobs() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out = "elsewhere".into();
        b.jobs = 7;
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
