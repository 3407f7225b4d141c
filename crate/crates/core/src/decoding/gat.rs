use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::cv::{split, stratified_kfold, take};
use super::features::{stimulus_traces, time_features, UnitSelection};
use super::linear::{fit_classifier, Backend, LinearFit};
use super::auc;
use crate::exec::Executor;
use crate::grammar::{Number, StimulusSet};
use crate::lstm::{AblationMask, LstmModel, UnitRef};
use crate::vocab::Vocabulary;
use crate::{math, rng, stats, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub backend: Backend,
    /// Regularization grid searched on inner folds.
    pub lambdas: Vec<f64>,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            backend: Backend::Logistic,
            lambdas: math::logspace(-4.0, 3.0, 8),
            outer_folds: 5,
            inner_folds: 3,
            seed: 0,
        }
    }
}

/// Mean inner-fold AUC per grid value; returns the best value (first on ties).
fn select_lambda(x: &[Vec<f64>], y: &[bool], cfg: &DecoderConfig, seed: u64) -> Result<(f64, Vec<f64>)> {
    if cfg.lambdas.is_empty() {
        return Err(Error::Config("empty regularization grid".into()));
    }
    if cfg.lambdas.len() == 1 {
        return Ok((cfg.lambdas[0], Vec::new()));
    }
    let folds = stratified_kfold(y, cfg.inner_folds, seed)?;
    let mut scores = Vec::with_capacity(cfg.lambdas.len());
    for &lambda in &cfg.lambdas {
        let mut s = 0.0;
        for k in 0..cfg.inner_folds {
            let (tr, te) = split(&folds, k);
            let fit = fit_classifier(&take(x, &tr), &take(y, &tr), lambda, cfg.backend)?;
            s += auc(&fit.predict(&take(x, &te)), &take(y, &te))?;
        }
        scores.push(s / cfg.inner_folds as f64);
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok((cfg.lambdas[best], scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberDecoder {
    pub fit: LinearFit,
    /// Mean inner-fold AUC for each grid value.
    pub grid_scores: Vec<f64>,
    pub warnings: Vec<String>,
}

impl NumberDecoder {
    pub fn scores(&self, x: &[Vec<f64>]) -> Vec<f64> {
        self.fit.predict(x)
    }
}

fn imbalance_warning(y: &[bool]) -> Option<String> {
    let pos = y.iter().filter(|&&b| b).count();
    let neg = y.len() - pos;
    let (hi, lo) = (pos.max(neg), pos.min(neg));
    (hi > 4 * lo).then(|| format!("class imbalance {pos}:{neg} exceeds 4:1"))
}

/// Fit a regularized linear decoder of `y` (plural = true), with the
/// regularization strength chosen on inner folds.
pub fn train_number_decoder(x: &[Vec<f64>], y: &[bool], cfg: &DecoderConfig) -> Result<NumberDecoder> {
    let (lambda, grid_scores) = select_lambda(x, y, cfg, rng::derive_seed(cfg.seed, "inner"))?;
    Ok(NumberDecoder {
        fit: fit_classifier(x, y, lambda, cfg.backend)?,
        grid_scores,
        warnings: imbalance_warning(y).into_iter().collect(),
    })
}

/// Held-out AUC on each outer fold.
pub fn cross_validated_auc(x: &[Vec<f64>], y: &[bool], cfg: &DecoderConfig) -> Result<Vec<f64>> {
    let folds = stratified_kfold(y, cfg.outer_folds, cfg.seed)?;
    (0..cfg.outer_folds)
        .map(|k| {
            let (tr, te) = split(&folds, k);
            let inner = DecoderConfig {
                seed: rng::derive_index(cfg.seed, k as u64),
                ..cfg.clone()
            };
            let dec = train_number_decoder(&take(x, &tr), &take(y, &tr), &inner)?;
            auc(&dec.scores(&take(x, &te)), &take(y, &te))
        })
        .collect()
}

/// Generalization across time from one training timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatMatrix {
    pub label: String,
    pub train_time: usize,
    /// Mean over splits of the held-out AUC at each test time.
    pub mean: Vec<f64>,
    /// Sample SD over splits.
    pub sd: Vec<f64>,
    /// `[split][test time]`
    pub per_split: Vec<Vec<f64>>,
    pub lambdas: Vec<f64>,
    pub grid: Vec<f64>,
    pub folds: Vec<usize>,
    pub seed: u64,
    pub warnings: Vec<String>,
}

/// Train at `train_time` on each split's training sentences and test the
/// frozen decoder at every timestep on its held-out sentences.
/// `features` is `[t][sample][feature]`.
pub fn gat_from_features(
    label: &str,
    features: &[Vec<Vec<f64>>],
    labels: &[bool],
    train_time: usize,
    cfg: &DecoderConfig,
) -> Result<GatMatrix> {
    if train_time >= features.len() {
        return Err(Error::InvalidArgument(format!(
            "train time {train_time} outside {} timesteps",
            features.len()
        )));
    }
    if let Some(bad) = features.iter().find(|f| f.len() != labels.len()) {
        return Err(Error::Misaligned(format!(
            "{} samples at some timestep, {} labels",
            bad.len(),
            labels.len()
        )));
    }
    let folds = stratified_kfold(labels, cfg.outer_folds, cfg.seed)?;
    let mut per_split = Vec::with_capacity(cfg.outer_folds);
    let mut lambdas = Vec::new();
    let mut warnings = Vec::new();
    for k in 0..cfg.outer_folds {
        let (tr, te) = split(&folds, k);
        let inner = DecoderConfig {
            seed: rng::derive_index(cfg.seed, k as u64),
            ..cfg.clone()
        };
        let dec = train_number_decoder(&take(&features[train_time], &tr), &take(labels, &tr), &inner)?;
        lambdas.push(dec.fit.lambda);
        warnings.extend(dec.warnings.iter().cloned());
        let y_te = take(labels, &te);
        let row = features
            .iter()
            .map(|ft| auc(&dec.scores(&take(ft, &te)), &y_te))
            .collect::<Result<Vec<f64>>>()?;
        per_split.push(row);
    }
    let n_t = features.len();
    let col = |t: usize| per_split.iter().map(|r| r[t]).collect::<Vec<f64>>();
    warnings.dedup();
    Ok(GatMatrix {
        label: label.into(),
        train_time,
        mean: (0..n_t).map(|t| stats::mean(&col(t))).collect(),
        sd: (0..n_t).map(|t| stats::sample_sd(&col(t))).collect(),
        per_split,
        lambdas,
        grid: cfg.lambdas.clone(),
        folds,
        seed: cfg.seed,
        warnings,
    })
}

fn plural_labels(set: &StimulusSet) -> Vec<bool> {
    set.stimuli
        .iter()
        .map(|s| s.condition.subject == Number::Plural)
        .collect()
}

/// Decode subject number from `selection` in the traces of `set`. The
/// training time defaults to the subject position.
pub fn gat_analysis<E: Executor>(
    model: &LstmModel,
    vocab: &Vocabulary,
    set: &StimulusSet,
    selection: &UnitSelection,
    train_time: Option<usize>,
    cfg: &DecoderConfig,
    exec: &E,
) -> Result<GatMatrix> {
    let first = set.stimuli.first().ok_or(Error::TooFewSamples { needed: 1, have: 0 })?;
    if set
        .stimuli
        .iter()
        .any(|s| s.subject_pos != first.subject_pos || s.tokens.len() != first.tokens.len())
    {
        return Err(Error::Misaligned("stimuli differ in length or subject position".into()));
    }
    for u in &selection.units {
        u.validate(&model.dims)?;
    }
    let traces = stimulus_traces(model, vocab, &set.stimuli, &AblationMask::none(), exec)?;
    let feats = time_features(&traces, selection)?;
    gat_from_features(
        &selection.label,
        &feats,
        &plural_labels(set),
        train_time.unwrap_or(first.subject_pos),
        cfg,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrConfig {
    /// Minimum single-unit AUC at subject time.
    pub min_auc: f64,
    /// The unit swaps when its mean AUC over the window after the
    /// intervening noun falls below this.
    pub swap_below: f64,
}

impl Default for SrConfig {
    fn default() -> Self {
        SrConfig {
            min_auc: 0.9,
            swap_below: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrCandidate {
    pub unit: UnitRef,
    /// +1 when larger activity means plural, -1 otherwise.
    pub orientation: f64,
    pub auc_at_subject: f64,
    /// Orientation-fixed AUC at every timestep.
    pub auc_over_time: Vec<f64>,
    pub mean_auc_after: f64,
    pub flagged: bool,
}

/// Single-unit decoding. Each unit's activity is used directly as the
/// decision score, with the sign fixed at subject time so the AUC there is
/// at least 0.5; that orientation is kept at all later timesteps. A unit is
/// flagged when it decodes the subject well at subject time but the
/// decoding inverts over `[window.0, window.1)`.
pub fn identify_sr_units_from_features(
    features: &[Vec<Vec<f64>>],
    labels: &[bool],
    units: &[UnitRef],
    subject_time: usize,
    window: (usize, usize),
    cfg: &SrConfig,
) -> Result<Vec<SrCandidate>> {
    if subject_time >= features.len() || window.0 >= window.1 || window.1 > features.len() {
        return Err(Error::InvalidArgument("time indices outside the traces".into()));
    }
    let mut out = Vec::with_capacity(units.len());
    for (j, &unit) in units.iter().enumerate() {
        let column = |t: usize| features[t].iter().map(|r| r[j]).collect::<Vec<f64>>();
        let raw = auc(&column(subject_time), labels)?;
        let orientation = if raw >= 0.5 { 1.0 } else { -1.0 };
        let auc_over_time = (0..features.len())
            .map(|t| {
                let s: Vec<f64> = column(t).iter().map(|v| v * orientation).collect();
                auc(&s, labels)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean_auc_after = stats::mean(&auc_over_time[window.0..window.1]);
        let auc_at_subject = auc_over_time[subject_time];
        out.push(SrCandidate {
            unit,
            orientation,
            auc_at_subject,
            flagged: auc_at_subject > cfg.min_auc && mean_auc_after < cfg.swap_below,
            auc_over_time,
            mean_auc_after,
        });
    }
    Ok(out)
}

/// Short-range number units from cell activity on a set with an
/// intervening noun (incongruent conditions give the sharpest contrast).
pub fn identify_sr_units<E: Executor>(
    model: &LstmModel,
    vocab: &Vocabulary,
    set: &StimulusSet,
    cfg: &SrConfig,
    exec: &E,
) -> Result<Vec<SrCandidate>> {
    let first = set.stimuli.first().ok_or(Error::TooFewSamples { needed: 1, have: 0 })?;
    let Some(inter) = first.intervening_pos else {
        return Err(Error::InvalidArgument(format!(
            "task {} has no intervening noun",
            set.task.name()
        )));
    };
    if set.stimuli.iter().any(|s| {
        s.intervening_pos != Some(inter) || s.verb_pos != first.verb_pos || s.tokens.len() != first.tokens.len()
    }) {
        return Err(Error::Misaligned("stimuli differ in structure".into()));
    }
    let sel = UnitSelection::all_except("all", &model.dims, &[], super::StateKind::Cell);
    let traces = stimulus_traces(model, vocab, &set.stimuli, &AblationMask::none(), exec)?;
    let feats = time_features(&traces, &sel)?;
    identify_sr_units_from_features(
        &feats,
        &plural_labels(set),
        &sel.units,
        first.subject_pos,
        (inter, first.verb_pos),
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Eight timesteps, subject at 1, intervening noun at 4. `stable` copies
    /// the subject number everywhere; `swap` copies the last noun's number.
    fn constructed(n: usize) -> (Vec<Vec<Vec<f64>>>, Vec<bool>) {
        let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let inter: Vec<bool> = (0..n).map(|i| (i / 2) % 2 == 0).collect();
        let feats = (0..8)
            .map(|t| {
                (0..n)
                    .map(|i| {
                        let sign = |b: bool| if b { 1.0 } else { -1.0 };
                        let noise = libm::sin((i * 7 + t) as f64) * 0.3;
                        let stable = sign(labels[i]) + noise;
                        let swap = if t >= 4 { sign(!labels[i]) } else { sign(labels[i]) } + noise;
                        vec![stable, swap, noise, sign(inter[i]) * 0.1]
                    })
                    .collect()
            })
            .collect();
        (feats, labels)
    }

    #[test]
    fn stable_and_swapping_codes() {
        let (feats, labels) = constructed(80);
        let cfg = DecoderConfig::default();
        let only = |j: usize| -> Vec<Vec<Vec<f64>>> {
            feats.iter().map(|ft| ft.iter().map(|r| vec![r[j], r[2]]).collect()).collect()
        };
        let stable = gat_from_features("stable", &only(0), &labels, 1, &cfg).unwrap();
        assert!(stable.mean.iter().all(|&a| a == 1.0));
        let swap = gat_from_features("swap", &only(1), &labels, 1, &cfg).unwrap();
        assert!(swap.mean[..4].iter().all(|&a| a >= 0.95));
        assert!(swap.mean[4..].iter().all(|&a| a <= 0.05));
        let units = [UnitRef::new(1, 1), UnitRef::new(1, 2), UnitRef::new(1, 3), UnitRef::new(1, 4)];
        let sr = identify_sr_units_from_features(&feats, &labels, &units, 1, (4, 6), &SrConfig::default())
            .unwrap();
        let flagged: Vec<UnitRef> = sr.iter().filter(|c| c.flagged).map(|c| c.unit).collect();
        assert_eq!(flagged, vec![UnitRef::new(1, 2)]);
        assert!(sr[0].auc_at_subject > 0.9 && !sr[0].flagged);
    }

    #[test]
    fn constant_unit_is_not_flagged() {
        let labels: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let feats = vec![vec![vec![0.5]; 20]; 3];
        let sr = identify_sr_units_from_features(&feats, &labels, &[UnitRef::new(1, 1)], 0, (1, 3), &SrConfig::default())
            .unwrap();
        assert_eq!(sr[0].auc_at_subject, 0.5);
        assert!(!sr[0].flagged);
    }

    #[test]
    fn permuted_labels_decode_near_chance() {
        let n = 200;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![libm::sin(i as f64 * 1.3), libm::cos(i as f64 * 0.7), libm::sin(i as f64 * 0.11)])
            .collect();
        let mut r = rng::from_seed(5);
        let y: Vec<bool> = (0..n).map(|_| rand::Rng::gen_bool(&mut r, 0.5)).collect();
        let aucs = cross_validated_auc(&x, &y, &DecoderConfig::default()).unwrap();
        let m = stats::mean(&aucs);
        assert!((0.3..=0.7).contains(&m), "{m}");
    }
}
