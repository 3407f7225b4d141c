use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{math, Error, Result};

/// Per-column z-scoring fitted on training rows. Constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Result<Standardizer> {
        let n = x.len();
        let Some(first) = x.first() else {
            return Err(Error::TooFewSamples { needed: 1, have: 0 });
        };
        let d = first.len();
        if let Some(bad) = x.iter().find(|r| r.len() != d) {
            return Err(Error::Shape {
                what: "feature row",
                expected: d,
                got: bad.len(),
            });
        }
        let mut means = vec![0.0; d];
        for r in x {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut sds = vec![0.0; d];
        for r in x {
            for ((s, v), m) in sds.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        sds.iter_mut().for_each(|s| *s = math::sqrt(*s / n as f64));
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        if d > 0 && sds.iter().all(|&s| !(s > 0.0)) {
            return Err(Error::DegenerateFeatures);
        }
        Ok(Standardizer { means, sds })
    }

    pub fn apply_row(&self, r: &[f64]) -> Vec<f64> {
        r.iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((v, m), s)| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }

    pub fn apply(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.apply_row(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// L2-regularized logistic regression, scored by the decision value.
    #[default]
    Logistic,
    /// Ridge regression on 0/1 labels.
    Ridge,
}

/// A linear model over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub standardizer: Standardizer,
    /// Weights in standardized units.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl LinearFit {
    pub fn predict_row(&self, r: &[f64]) -> f64 {
        let z = self.standardizer.apply_row(r);
        self.intercept + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict_row(r)).collect()
    }

    /// Weights mapped back to the original feature scale.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.standardizer.sds)
            .map(|(w, s)| if *s > 0.0 { w / s } else { 0.0 })
            .collect()
    }
}

fn design(z: &[Vec<f64>]) -> DMatrix<f64> {
    let n = z.len();
    let d = z.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, d, |i, j| z[i][j])
}

/// Minimizes `(1/n) sum (y - b - w.z)^2 + lambda |w|^2` over standardized
/// features `z`.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            what: "targets",
            expected: x.len(),
            got: y.len(),
        });
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument("negative regularization".into()));
    }
    let st = Standardizer::fit(x)?;
    let z = st.apply(x);
    let n = z.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let a = design(&z);
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    let d = a.ncols();
    let mut gram = a.tr_mul(&a) / n;
    for k in 0..d {
        if st.sds[k] > 0.0 {
            gram[(k, k)] += lambda;
        } else {
            // Constant column: pin its weight to zero.
            gram[(k, k)] = 1.0;
        }
    }
    let rhs = a.tr_mul(&yc) / n;
    let w = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or(Error::DegenerateFeatures)?,
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFeatures);
    }
    Ok(LinearFit {
        standardizer: st,
        weights: w.iter().copied().collect(),
        intercept: y_mean,
        lambda,
    })
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + math::ln_1p(math::exp(-z))
    } else {
        math::ln_1p(math::exp(z))
    }
}

/// Minimizes `(1/n) sum logloss + (lambda/2) |w|^2` by damped Newton steps.
fn fit_logistic(x: &[Vec<f64>], y: &[bool], lambda: f64) -> Result<LinearFit> {
    let st = Standardizer::fit(x)?;
    let z = st.apply(x);
    let n = z.len();
    let nf = n as f64;
    let d = z.first().map_or(0, Vec::len);
    let live: Vec<bool> = st.sds.iter().map(|&s| s > 0.0).collect();
    let target = DVector::from_iterator(n, y.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    // Design with a trailing intercept column; parameters are weights then intercept.
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j < d { z[i][j] } else { 1.0 });
    let lam = lambda.max(1e-12);
    let penalty = |t: &DVector<f64>| 0.5 * lam * (0..d).map(|k| t[k] * t[k]).sum::<f64>();
    let objective = |m: &DVector<f64>, t: &DVector<f64>| -> f64 {
        let loss: f64 = m.iter().zip(target.iter()).map(|(&mi, &yi)| log1p_exp(mi) - yi * mi).sum();
        loss / nf + penalty(t)
    };
    let mut theta = DVector::<f64>::zeros(d + 1);
    let mut margins = &a * &theta;
    let mut f = objective(&margins, &theta);
    for _ in 0..100 {
        let p = margins.map(math::sigmoid);
        let mut grad = a.tr_mul(&(&p - &target)) / nf;
        let sw = p.map(|pi| math::sqrt(pi * (1.0 - pi)));
        let mut aw = a.clone();
        for (i, mut row) in aw.row_iter_mut().enumerate() {
            row *= sw[i];
        }
        let mut hess = aw.tr_mul(&aw) / nf;
        for k in 0..d {
            if live[k] {
                grad[k] += lam * theta[k];
                hess[(k, k)] += lam;
            } else {
                grad[k] = 0.0;
                for j in 0..=d {
                    hess[(k, j)] = 0.0;
                    hess[(j, k)] = 0.0;
                }
                hess[(k, k)] = 1.0;
            }
        }
        hess[(d, d)] += 1e-12;
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => hess.lu().solve(&grad).ok_or(Error::DegenerateFeatures)?,
        };
        let decrease = grad.dot(&step);
        let step_margins = &a * &step;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = &theta - &step * t;
            let cm = &margins - &step_margins * t;
            let fc = objective(&cm, &cand);
            if fc <= f - 1e-4 * t * decrease {
                theta = cand;
                margins = cm;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || step.amax() * t < 1e-10 {
            break;
        }
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFeatures);
    }
    Ok(LinearFit {
        standardizer: st,
        weights: theta.rows(0, d).iter().copied().collect(),
        intercept: theta[d],
        lambda,
    })
}

/// Fit a binary classifier with the given backend. Requires both classes.
pub fn fit_classifier(x: &[Vec<f64>], y: &[bool], lambda: f64, backend: Backend) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            what: "labels",
            expected: x.len(),
            got: y.len(),
        });
    }
    if !y.iter().any(|&b| b) || y.iter().all(|&b| b) {
        return Err(Error::SingleClass);
    }
    match backend {
        Backend::Logistic => fit_logistic(x, y, lambda),
        Backend::Ridge => {
            let t: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            fit_ridge(x, &t, lambda)
        }
    }
}
