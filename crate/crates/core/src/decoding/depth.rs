use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::cv::{kfold, split, take};
use super::features::{StateKind, UnitSelection};
use super::linear::fit_ridge;
use crate::exec::Executor;
use crate::grammar::DepthDataset;
use crate::lstm::{forward_sentence, AblationMask, LstmModel, UnitRef};
use crate::vocab::Vocabulary;
use crate::{math, rng, stats, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthRegressionConfig {
    pub lambdas: Vec<f64>,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    /// Weights further than this many SDs from the mean are outliers.
    pub outlier_k: f64,
    /// Add word log-frequency as an extra regressor.
    pub use_frequency: bool,
    pub kind: StateKind,
}

impl Default for DepthRegressionConfig {
    fn default() -> Self {
        DepthRegressionConfig {
            lambdas: math::logspace(-4.0, 3.0, 8),
            outer_folds: 5,
            inner_folds: 3,
            seed: 0,
            outlier_k: 3.0,
            use_frequency: true,
            kind: StateKind::Hidden,
        }
    }
}

/// Activations at the annotated words, read at the timestep each word is
/// input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthFeatures {
    pub units: Vec<UnitRef>,
    pub x: Vec<Vec<f64>>,
    pub depth: Vec<f64>,
    pub log_frequency: Vec<f64>,
    pub words: Vec<String>,
    /// 1-based word positions.
    pub positions: Vec<usize>,
    /// Sentence index of each sample; folds never split a sentence.
    pub groups: Vec<usize>,
}

/// Collect features for every retained point of `dataset`. Words missing
/// from `log_frequency` get the smallest listed value.
pub fn depth_features<E: Executor>(
    model: &LstmModel,
    vocab: &Vocabulary,
    dataset: &DepthDataset,
    selection: &UnitSelection,
    log_frequency: Option<&BTreeMap<String, f64>>,
    exec: &E,
) -> Result<DepthFeatures> {
    for u in &selection.units {
        u.validate(&model.dims)?;
    }
    let floor = log_frequency
        .and_then(|m| m.values().copied().reduce(f64::min))
        .unwrap_or(0.0);
    let encoded = dataset
        .sentences
        .iter()
        .map(|s| vocab.encode(&s.tokens))
        .collect::<Result<Vec<_>>>()?;
    let rows = exec.map(encoded.into_iter().enumerate().collect(), |(k, ids)| {
        let trace = forward_sentence(model, &ids, vocab.eos(), &AblationMask::none(), true)?
            .trace
            .expect("trace was requested");
        let s = &dataset.sentences[k];
        Ok::<_, Error>(
            s.retained
                .iter()
                .map(|&(pos, depth)| {
                    let word = s.tokens[pos - 1].clone();
                    (selection.read(&trace, pos - 1), depth as f64, word, pos, k)
                })
                .collect::<Vec<_>>(),
        )
    });
    let mut out = DepthFeatures {
        units: selection.units.clone(),
        x: Vec::new(),
        depth: Vec::new(),
        log_frequency: Vec::new(),
        words: Vec::new(),
        positions: Vec::new(),
        groups: Vec::new(),
    };
    for r in rows {
        for (x, d, w, p, g) in r? {
            let f = log_frequency.map_or(0.0, |m| m.get(&w).copied().unwrap_or(floor));
            out.x.push(x);
            out.depth.push(d);
            out.log_frequency.push(f);
            out.words.push(w);
            out.positions.push(p);
            out.groups.push(g);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitWeight {
    pub unit: UnitRef,
    /// Standardized regression weight.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRegressionResult {
    pub n_samples: usize,
    /// Held-out R² of the full model on each outer fold.
    pub r2_folds: Vec<f64>,
    pub r2_mean: f64,
    pub r2_sd: f64,
    pub covariate_corrected: bool,
    /// Held-out R² of the frequency-only model.
    pub frequency_only_r2_mean: Option<f64>,
    /// `r2_mean - frequency_only_r2_mean`.
    pub delta_r2: Option<f64>,
    /// Held-out R² of a unit-only model on targets residualized against
    /// frequency within each fold.
    pub residualized_r2_mean: Option<f64>,
    /// Weights of the model refit on all samples.
    pub weights: Vec<UnitWeight>,
    pub frequency_weight: Option<f64>,
    pub outliers: Vec<UnitWeight>,
    pub outlier_k: f64,
    pub lambda: f64,
    pub fold_lambdas: Vec<f64>,
    pub grid: Vec<f64>,
    pub folds: Vec<usize>,
    pub seed: u64,
    pub feature_time: String,
}

fn grouped_folds(groups: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n_groups = groups.iter().copied().max().map_or(0, |g| g + 1);
    let gf = kfold(n_groups, k, seed)?;
    Ok(groups.iter().map(|&g| gf[g]).collect())
}

fn with_column(x: &[Vec<f64>], extra: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .zip(extra)
        .map(|(r, &e)| {
            let mut r = r.clone();
            r.push(e);
            r
        })
        .collect()
}

/// Lambda with the best mean inner-fold R² (first on ties).
fn select_lambda(x: &[Vec<f64>], y: &[f64], groups: &[usize], cfg: &DepthRegressionConfig, seed: u64) -> Result<f64> {
    if cfg.lambdas.is_empty() {
        return Err(Error::Config("empty regularization grid".into()));
    }
    if cfg.lambdas.len() == 1 {
        return Ok(cfg.lambdas[0]);
    }
    let folds = grouped_folds(groups, cfg.inner_folds, seed)?;
    let mut best = (f64::NEG_INFINITY, cfg.lambdas[0]);
    for &lambda in &cfg.lambdas {
        let mut s = 0.0;
        for k in 0..cfg.inner_folds {
            let (tr, te) = split(&folds, k);
            if tr.is_empty() || te.is_empty() {
                continue;
            }
            let fit = fit_ridge(&take(x, &tr), &take(y, &tr), lambda)?;
            s += stats::r_squared(&take(y, &te), &fit.predict(&take(x, &te)));
        }
        if s > best.0 {
            best = (s, lambda);
        }
    }
    Ok(best.1)
}

fn fit_selected(
    x: &[Vec<f64>],
    y: &[f64],
    groups: &[usize],
    cfg: &DepthRegressionConfig,
    seed: u64,
) -> Result<super::LinearFit> {
    let lambda = select_lambda(x, y, groups, cfg, seed)?;
    fit_ridge(x, y, lambda)
}

/// Nested cross-validated ridge regression of depth on unit activity,
/// optionally with a frequency covariate. `groups` keeps samples of one
/// sentence in the same fold (each sample is its own group when `None`).
pub fn depth_regression_from_features(
    x: &[Vec<f64>],
    y: &[f64],
    frequency: Option<&[f64]>,
    groups: Option<&[usize]>,
    units: &[UnitRef],
    cfg: &DepthRegressionConfig,
) -> Result<DepthRegressionResult> {
    if x.len() != y.len() || frequency.is_some_and(|f| f.len() != y.len()) {
        return Err(Error::Misaligned("features, targets and covariate differ in length".into()));
    }
    if x.first().is_some_and(|r| r.len() != units.len()) {
        return Err(Error::Misaligned("feature columns do not match the unit list".into()));
    }
    let own: Vec<usize> = (0..y.len()).collect();
    let groups = groups.unwrap_or(&own);
    let n_groups = groups.iter().copied().max().map_or(0, |g| g + 1);
    if n_groups < cfg.outer_folds {
        return Err(Error::TooFewSamples {
            needed: cfg.outer_folds,
            have: n_groups,
        });
    }
    let full_x = match frequency {
        Some(f) => with_column(x, f),
        None => x.to_vec(),
    };
    let freq_x: Option<Vec<Vec<f64>>> = frequency.map(|f| f.iter().map(|&v| alloc::vec![v]).collect());
    let folds = grouped_folds(groups, cfg.outer_folds, cfg.seed)?;
    let mut r2_folds = Vec::new();
    let mut freq_r2 = Vec::new();
    let mut resid_r2 = Vec::new();
    let mut fold_lambdas = Vec::new();
    for k in 0..cfg.outer_folds {
        let (tr, te) = split(&folds, k);
        let inner_seed = rng::derive_index(cfg.seed, k as u64);
        let g_tr = take(groups, &tr);
        let y_tr = take(y, &tr);
        let y_te = take(y, &te);
        let fit = fit_selected(&take(&full_x, &tr), &y_tr, &g_tr, cfg, inner_seed)?;
        fold_lambdas.push(fit.lambda);
        r2_folds.push(stats::r_squared(&y_te, &fit.predict(&take(&full_x, &te))));
        if let Some(fx) = &freq_x {
            let fx_tr = take(fx, &tr);
            let fx_te = take(fx, &te);
            match fit_ridge(&fx_tr, &y_tr, 0.0) {
                Ok(ffit) => {
                    freq_r2.push(stats::r_squared(&y_te, &ffit.predict(&fx_te)));
                    let res_tr: Vec<f64> = y_tr.iter().zip(ffit.predict(&fx_tr)).map(|(a, b)| a - b).collect();
                    let res_te: Vec<f64> = y_te.iter().zip(ffit.predict(&fx_te)).map(|(a, b)| a - b).collect();
                    let rfit = fit_selected(&take(x, &tr), &res_tr, &g_tr, cfg, inner_seed)?;
                    resid_r2.push(stats::r_squared(&res_te, &rfit.predict(&take(x, &te))));
                }
                // A constant covariate explains nothing.
                Err(Error::DegenerateFeatures) => {
                    freq_r2.push(0.0);
                    let rfit = fit_selected(&take(x, &tr), &y_tr, &g_tr, cfg, inner_seed)?;
                    resid_r2.push(stats::r_squared(&y_te, &rfit.predict(&take(x, &te))));
                }
                Err(e) => return Err(e),
            }
        }
    }
    let final_fit = fit_selected(&full_x, y, groups, cfg, rng::derive_seed(cfg.seed, "final"))?;
    let weights: Vec<UnitWeight> = units
        .iter()
        .zip(&final_fit.weights)
        .map(|(&unit, &weight)| UnitWeight { unit, weight })
        .collect();
    let ws: Vec<f64> = weights.iter().map(|w| w.weight).collect();
    let outliers = stats::sd_outliers(&ws, cfg.outlier_k)
        .into_iter()
        .map(|i| weights[i].clone())
        .collect();
    let r2_mean = stats::mean(&r2_folds);
    let frequency_only_r2_mean = frequency.map(|_| stats::mean(&freq_r2));
    Ok(DepthRegressionResult {
        n_samples: y.len(),
        r2_sd: stats::sample_sd(&r2_folds),
        r2_mean,
        r2_folds,
        covariate_corrected: frequency.is_some(),
        delta_r2: frequency_only_r2_mean.map(|f| r2_mean - f),
        frequency_only_r2_mean,
        residualized_r2_mean: frequency.map(|_| stats::mean(&resid_r2)),
        frequency_weight: frequency.map(|_| final_fit.weights[units.len()]),
        weights,
        outliers,
        outlier_k: cfg.outlier_k,
        lambda: final_fit.lambda,
        fold_lambdas,
        grid: cfg.lambdas.clone(),
        folds,
        seed: cfg.seed,
        feature_time: "word input step".into(),
    })
}

/// Depth regression from the activity of all units of `model`.
pub fn depth_regression<E: Executor>(
    model: &LstmModel,
    vocab: &Vocabulary,
    dataset: &DepthDataset,
    log_frequency: Option<&BTreeMap<String, f64>>,
    cfg: &DepthRegressionConfig,
    exec: &E,
) -> Result<(DepthFeatures, DepthRegressionResult)> {
    if dataset.n_points() == 0 {
        return Err(Error::TooFewSamples { needed: 1, have: 0 });
    }
    let sel = UnitSelection::all_except("all", &model.dims, &[], cfg.kind);
    let freq = if cfg.use_frequency { log_frequency } else { None };
    let f = depth_features(model, vocab, dataset, &sel, freq, exec)?;
    let res = depth_regression_from_features(
        &f.x,
        &f.depth,
        freq.map(|_| f.log_frequency.as_slice()),
        Some(&f.groups),
        &f.units,
        cfg,
    )?;
    Ok((f, res))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn units(n: usize) -> Vec<UnitRef> {
        (1..=n).map(|u| UnitRef::new(1, u)).collect()
    }

    fn data(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let t = i as f64;
                vec![libm::sin(t), libm::cos(1.3 * t), libm::sin(0.37 * t + 1.0)]
            })
            .collect()
    }

    #[test]
    fn linear_target_is_recovered() {
        let x = data(60);
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] - r[1] + 0.5 * r[2]).collect();
        let r = depth_regression_from_features(&x, &y, None, None, &units(3), &DepthRegressionConfig::default())
            .unwrap();
        assert!(r.r2_mean >= 0.999, "{}", r.r2_mean);
    }

    #[test]
    fn permuted_targets_score_near_zero() {
        let x = data(300);
        let mut r = rng::from_seed(2);
        let y: Vec<f64> = (0..300).map(|_| rand::Rng::gen_range(&mut r, 0.0..1.0)).collect();
        let res = depth_regression_from_features(&x, &y, None, None, &units(3), &DepthRegressionConfig::default())
            .unwrap();
        assert!(res.r2_mean <= 0.05, "{}", res.r2_mean);
    }

    #[test]
    fn frequency_covariate_is_separated() {
        let x = data(200);
        let freq: Vec<f64> = (0..200).map(|i| libm::cos(0.05 * i as f64)).collect();
        let y: Vec<f64> = x.iter().zip(&freq).map(|(r, f)| r[0] + 2.0 * f).collect();
        let res = depth_regression_from_features(&x, &y, Some(&freq), None, &units(3), &DepthRegressionConfig::default())
            .unwrap();
        assert!(res.r2_mean > 0.99);
        let fr = res.frequency_only_r2_mean.unwrap();
        assert!((res.delta_r2.unwrap() - (res.r2_mean - fr)).abs() < 1e-15);
        assert!(res.residualized_r2_mean.unwrap() > 0.99);
        assert!(res.covariate_corrected);
    }

    #[test]
    fn too_few_samples() {
        let x = data(3);
        let y = [1.0, 2.0, 3.0];
        assert!(matches!(
            depth_regression_from_features(&x, &y, None, None, &units(3), &DepthRegressionConfig::default()),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
