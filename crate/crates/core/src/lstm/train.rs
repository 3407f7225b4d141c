use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::forward::{activate, gates, forward_sentence, LayerSnapshot};
use super::{AblationMask, LstmModel, State};
use crate::exec::Executor;
use crate::{math, rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Truncated backpropagation window length.
    pub bptt: usize,
    pub lr: f64,
    /// Global gradient-norm clipping threshold.
    pub clip_norm: f64,
    /// Learning-rate multiplier applied when validation perplexity does not
    /// improve; the best parameters are restored at the same time.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 16,
            batch_size: 2,
            bptt: 20,
            lr: 3.0,
            clip_norm: 5.0,
            lr_decay: 0.5,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.bptt == 0 {
            return Err(Error::Config("batch size and bptt must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.clip_norm > 0.0) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr and clip must be positive, lr_decay in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Everything needed to resume training deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epochs_done: usize,
    pub lr: f64,
    pub best_valid_ppl: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_ppl: f64,
    pub valid_ppl: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LstmModel,
    pub state: TrainState,
    pub log: Vec<EpochLog>,
}

struct StepCache {
    token: usize,
    layers: Vec<LayerCache>,
    probs: Vec<f64>,
}

struct LayerCache {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    snap: LayerSnapshot,
    tanh_c: Vec<f64>,
}

/// Summed negative log-likelihood of `targets` given `inputs`, starting from
/// `init`. The state is reset before every `eos` input. When `grads` is
/// given, `scale * d(loss)/d(params)` is added to it.
pub fn sequence_loss_and_grad(
    model: &LstmModel,
    inputs: &[usize],
    targets: &[usize],
    eos: Option<usize>,
    init: &State,
    grads: Option<&mut LstmModel>,
    scale: f64,
) -> Result<(f64, State)> {
    let d = model.dims;
    if inputs.len() != targets.len() {
        return Err(Error::Shape {
            what: "targets",
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    if let Some(&bad) = inputs.iter().chain(targets).find(|&&t| t >= d.vocab_size) {
        return Err(Error::TokenOutOfRange {
            id: bad,
            vocab_size: d.vocab_size,
        });
    }
    let hd = d.hidden_dim;
    let mut state = init.clone();
    let mut pre = vec![0.0; 4 * hd];
    let mut caches: Vec<StepCache> = Vec::with_capacity(inputs.len());
    let mut loss = 0.0;
    for (&tok, &target) in inputs.iter().zip(targets) {
        if Some(tok) == eos {
            state.reset();
        }
        let mut layers = Vec::with_capacity(d.n_layers);
        for l in 0..d.n_layers {
            let layer = &model.layers[l];
            let mut snap = LayerSnapshot {
                h: vec![0.0; hd],
                c: vec![0.0; hd],
                i: vec![0.0; hd],
                f: vec![0.0; hd],
                g: vec![0.0; hd],
                o: vec![0.0; hd],
            };
            {
                let x: &[f64] = if l == 0 {
                    model.embedding.row(tok)
                } else {
                    &state.h[l - 1]
                };
                gates(layer, x, &state.h[l], &mut pre);
            }
            activate(&pre, &state.c[l], &mut snap);
            let tanh_c = snap.c.iter().map(|&c| math::tanh(c)).collect();
            let h_prev = core::mem::replace(&mut state.h[l], snap.h.clone());
            let c_prev = core::mem::replace(&mut state.c[l], snap.c.clone());
            layers.push(LayerCache {
                h_prev,
                c_prev,
                snap,
                tanh_c,
            });
        }
        let mut logits = model.out_b.clone();
        model.out_w.matvec_add(&state.h[d.n_layers - 1], &mut logits);
        math::log_softmax_in_place(&mut logits);
        loss -= logits[target];
        let probs = if grads.is_some() {
            logits.iter().map(|&x| math::exp(x)).collect()
        } else {
            Vec::new()
        };
        caches.push(StepCache {
            token: tok,
            layers,
            probs,
        });
    }
    let Some(g) = grads else {
        return Ok((loss, state));
    };

    let mut dh_next = vec![vec![0.0; hd]; d.n_layers];
    let mut dc_next = vec![vec![0.0; hd]; d.n_layers];
    let mut da = vec![0.0; 4 * hd];
    let mut dh = vec![0.0; hd];
    for (t, cache) in caches.iter().enumerate().rev() {
        let mut dlogits = cache.probs.clone();
        dlogits[targets[t]] -= 1.0;
        dlogits.iter_mut().for_each(|x| *x *= scale);
        let top = &cache.layers[d.n_layers - 1].snap.h;
        g.out_w.add_outer(&dlogits, top);
        for (b, dl) in g.out_b.iter_mut().zip(&dlogits) {
            *b += dl;
        }
        let mut from_above = vec![0.0; hd];
        model.out_w.t_matvec_add(&dlogits, &mut from_above);
        let reset = Some(cache.token) == eos;
        for l in (0..d.n_layers).rev() {
            let lc = &cache.layers[l];
            let s = &lc.snap;
            for u in 0..hd {
                dh[u] = from_above[u] + dh_next[l][u];
                let dc = dc_next[l][u] + dh[u] * s.o[u] * (1.0 - lc.tanh_c[u] * lc.tanh_c[u]);
                let d_o = dh[u] * lc.tanh_c[u];
                let di = dc * s.g[u];
                let dg = dc * s.i[u];
                let df = dc * lc.c_prev[u];
                da[u] = di * s.i[u] * (1.0 - s.i[u]);
                da[hd + u] = df * s.f[u] * (1.0 - s.f[u]);
                da[2 * hd + u] = dg * (1.0 - s.g[u] * s.g[u]);
                da[3 * hd + u] = d_o * s.o[u] * (1.0 - s.o[u]);
                dc_next[l][u] = if reset { 0.0 } else { dc * s.f[u] };
            }
            let layer = &model.layers[l];
            let gl = &mut g.layers[l];
            let x: &[f64] = if l == 0 {
                model.embedding.row(cache.token)
            } else {
                &cache.layers[l - 1].snap.h
            };
            gl.w_ih.add_outer(&da, x);
            gl.w_hh.add_outer(&da, &lc.h_prev);
            for (b, a) in gl.bias.iter_mut().zip(&da) {
                *b += a;
            }
            dh_next[l].iter_mut().for_each(|x| *x = 0.0);
            if !reset {
                layer.w_hh.t_matvec_add(&da, &mut dh_next[l]);
            }
            let mut dx = vec![0.0; layer.input()];
            layer.w_ih.t_matvec_add(&da, &mut dx);
            if l == 0 {
                for (e, v) in g.embedding.row_mut(cache.token).iter_mut().zip(&dx) {
                    *e += v;
                }
            } else {
                from_above = dx;
            }
        }
    }
    Ok((loss, state))
}

fn check_sentences(sents: &[Vec<usize>], vocab_size: usize) -> Result<()> {
    for s in sents {
        if let Some(&bad) = s.iter().find(|&&t| t >= vocab_size) {
            return Err(Error::TokenOutOfRange { id: bad, vocab_size });
        }
    }
    Ok(())
}

/// Per-token perplexity over sentences, each read as `<eos> w1 .. wn` and
/// predicting `w1 .. wn <eos>`.
pub fn perplexity(
    model: &LstmModel,
    sentences: &[Vec<usize>],
    eos: usize,
    mask: &AblationMask,
) -> Result<f64> {
    perplexity_with(&crate::exec::Sequential, model, sentences, eos, mask)
}

pub fn perplexity_with<E: Executor>(
    exec: &E,
    model: &LstmModel,
    sentences: &[Vec<usize>],
    eos: usize,
    mask: &AblationMask,
) -> Result<f64> {
    check_sentences(sentences, model.dims.vocab_size)?;
    mask.resolve(&model.dims)?;
    let n: usize = sentences.iter().map(|s| s.len() + 1).sum();
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, have: 0 });
    }
    let nll = exec.map(sentences.iter().collect(), |s| {
        let out = forward_sentence(model, s, eos, mask, false)?;
        let mut nll = 0.0;
        for (k, lp) in out.log_probs.iter().enumerate() {
            let target = s.get(k).copied().unwrap_or(eos);
            nll -= lp[target];
        }
        Ok::<f64, Error>(nll)
    });
    let mut total = 0.0;
    for x in nll {
        total += x?;
    }
    Ok(math::exp(total / n as f64))
}

fn grad_norm(g: &mut LstmModel) -> f64 {
    let mut s = 0.0;
    for p in g.params_mut() {
        s += p.iter().map(|x| x * x).sum::<f64>();
    }
    math::sqrt(s)
}

/// Build the epoch stream `<eos> s1 <eos> s2 ... <eos>` from shuffled
/// sentences.
fn epoch_stream(sentences: &[Vec<usize>], eos: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut r = rng::from_seed(rng::derive_index(rng::derive_seed(seed, "epoch"), epoch as u64));
    order.shuffle(&mut r);
    let mut stream = vec![eos];
    for i in order {
        stream.extend_from_slice(&sentences[i]);
        stream.push(eos);
    }
    stream
}

/// Truncated-BPTT SGD over `batch_size` contiguous streams. After each epoch
/// the model is evaluated on `valid`; without improvement the best parameters
/// are restored and the learning rate is decayed, so the returned model is
/// always the best one seen. `on_epoch` is called after every epoch with the
/// current best model, which makes per-epoch checkpoints resumable.
#[allow(clippy::too_many_arguments)]
pub fn train<E: Executor>(
    mut model: LstmModel,
    train_sents: &[Vec<usize>],
    valid_sents: &[Vec<usize>],
    eos: usize,
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    exec: &E,
    on_epoch: &mut dyn FnMut(&EpochLog, &LstmModel, &TrainState) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    let d = model.dims;
    check_sentences(train_sents, d.vocab_size)?;
    if train_sents.is_empty() || valid_sents.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, have: 0 });
    }
    let none = AblationMask::none();
    let mut state = match resume {
        Some(s) => s,
        None => TrainState {
            epochs_done: 0,
            lr: cfg.lr,
            best_valid_ppl: perplexity_with(exec, &model, valid_sents, eos, &none)?,
            steps: 0,
        },
    };
    let mut best = model.clone();
    let mut log = Vec::new();
    for epoch in state.epochs_done..cfg.epochs {
        let stream = epoch_stream(train_sents, eos, cfg.seed, epoch);
        let n_pred = stream.len() - 1;
        let b = cfg.batch_size.min(n_pred).max(1);
        let chunk = n_pred / b;
        let mut states: Vec<State> = (0..b).map(|_| State::zeros(&d)).collect();
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        let mut start = 0;
        while start < chunk {
            let end = (start + cfg.bptt).min(chunk);
            let scale = 1.0 / (b * (end - start)) as f64;
            let jobs: Vec<(usize, State)> = states.drain(..).enumerate().collect();
            let m = &model;
            let results = exec.map(jobs, |(k, st)| {
                let off = k * chunk;
                let mut g = m.zero_like();
                let r = sequence_loss_and_grad(
                    m,
                    &stream[off + start..off + end],
                    &stream[off + start + 1..off + end + 1],
                    Some(eos),
                    &st,
                    Some(&mut g),
                    scale,
                );
                r.map(|(loss, st)| (loss, st, g))
            });
            let mut total = model.zero_like();
            for r in results {
                let (loss, st, g) = r?;
                epoch_loss += loss;
                states.push(st);
                for (acc, part) in total.params_mut().into_iter().zip(g.tensors()) {
                    for (a, p) in acc.iter_mut().zip(part.2) {
                        *a += p;
                    }
                }
            }
            epoch_count += b * (end - start);
            state.steps += 1;
            let norm = grad_norm(&mut total);
            if !norm.is_finite() || !epoch_loss.is_finite() {
                return Err(Error::NonFinite {
                    step: state.steps,
                    detail: format!("loss {epoch_loss}, gradient norm {norm}"),
                });
            }
            let factor = if norm > cfg.clip_norm { cfg.clip_norm / norm } else { 1.0 };
            let lr = state.lr * factor;
            for (p, gp) in model.params_mut().into_iter().zip(total.tensors()) {
                for (w, dw) in p.iter_mut().zip(gp.2) {
                    *w -= lr * dw;
                }
            }
            start = end;
        }
        let valid_ppl = perplexity_with(exec, &model, valid_sents, eos, &none)?;
        if !valid_ppl.is_finite() {
            return Err(Error::NonFinite {
                step: state.steps,
                detail: format!("validation perplexity {valid_ppl}"),
            });
        }
        let improved = valid_ppl < state.best_valid_ppl;
        let entry = EpochLog {
            epoch: epoch + 1,
            lr: state.lr,
            train_ppl: math::exp(epoch_loss / epoch_count.max(1) as f64),
            valid_ppl,
            improved,
        };
        if improved {
            state.best_valid_ppl = valid_ppl;
            best = model.clone();
        } else {
            model = best.clone();
            state.lr *= cfg.lr_decay;
        }
        state.epochs_done = epoch + 1;
        on_epoch(&entry, &model, &state)?;
        log.push(entry);
    }
    Ok(TrainOutcome {
        model,
        state,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::super::Dims;
    use super::*;
    use crate::exec::Sequential;

    fn tiny() -> LstmModel {
        LstmModel::init(
            Dims {
                vocab_size: 6,
                embed_dim: 3,
                hidden_dim: 4,
                n_layers: 2,
            },
            11,
        )
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = tiny();
        let inputs = [2, 3, 0, 4, 5];
        let targets = [3, 0, 4, 5, 1];
        let init = State::zeros(&m.dims);
        let mut g = m.zero_like();
        sequence_loss_and_grad(&m, &inputs, &targets, Some(0), &init, Some(&mut g), 1.0).unwrap();
        let eps = 1e-5;
        let n_tensors = m.tensors().len();
        for ti in 0..n_tensors {
            let len = m.tensors()[ti].2.len();
            for k in 0..len {
                let mut plus = m.clone();
                plus.params_mut()[ti][k] += eps;
                let mut minus = m.clone();
                minus.params_mut()[ti][k] -= eps;
                let lp = sequence_loss_and_grad(&plus, &inputs, &targets, Some(0), &init, None, 1.0)
                    .unwrap()
                    .0;
                let lm = sequence_loss_and_grad(&minus, &inputs, &targets, Some(0), &init, None, 1.0)
                    .unwrap()
                    .0;
                let numeric = (lp - lm) / (2.0 * eps);
                let analytic = g.tensors()[ti].2[k];
                let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-6);
                assert!(rel < 1e-4, "tensor {ti} entry {k}: {analytic} vs {numeric}");
            }
        }
    }

    #[test]
    fn uniform_model_has_vocab_perplexity() {
        let m = LstmModel::zeros(tiny().dims);
        let p = perplexity(&m, &[vec![1, 2, 3], vec![4]], 0, &AblationMask::none()).unwrap();
        assert!((p - 6.0).abs() < 1e-9);
    }

    #[test]
    fn training_reduces_perplexity_and_resumes_identically() {
        let sents: Vec<Vec<usize>> = (0..60).map(|k| if k % 2 == 0 { vec![1, 2, 3] } else { vec![4, 5] }).collect();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 4,
            bptt: 6,
            lr: 0.5,
            ..TrainConfig::default()
        };
        let before = perplexity(&tiny(), &sents, 0, &AblationMask::none()).unwrap();
        let full = train(tiny(), &sents, &sents, 0, &cfg, None, &Sequential, &mut |_, _, _| Ok(())).unwrap();
        assert!(full.state.best_valid_ppl < before);

        let half_cfg = TrainConfig { epochs: 2, ..cfg.clone() };
        let half = train(tiny(), &sents, &sents, 0, &half_cfg, None, &Sequential, &mut |_, _, _| Ok(())).unwrap();
        let resumed = train(half.model, &sents, &sents, 0, &cfg, Some(half.state), &Sequential, &mut |_, _, _| Ok(()))
            .unwrap();
        assert_eq!(resumed.model, full.model);
        assert_eq!(resumed.state, full.state);
    }

    #[test]
    fn zero_epochs_leave_the_model_untouched() {
        let sents = vec![vec![1, 2, 3]; 4];
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let out = train(tiny(), &sents, &sents, 0, &cfg, None, &Sequential, &mut |_, _, _| Ok(())).unwrap();
        assert_eq!(out.model, tiny());
        assert!(out.log.is_empty());
        assert_eq!(out.state.steps, 0);
    }

    #[test]
    fn memorizes_two_sentences() {
        let dims = Dims {
            vocab_size: 6,
            embed_dim: 4,
            hidden_dim: 8,
            n_layers: 2,
        };
        let pair = [vec![1, 2, 3], vec![4, 5, 3]];
        let sents: Vec<Vec<usize>> = pair.iter().cycle().take(20).cloned().collect();
        let cfg = TrainConfig {
            epochs: 200,
            lr: 1.0,
            batch_size: 1,
            bptt: 8,
            ..TrainConfig::default()
        };
        let out = train(LstmModel::init(dims, 3), &sents, &pair,  0, &cfg, None, &Sequential, &mut |_, _, _| Ok(()))
            .unwrap();
        // The first word after <eos> is a coin flip, so even perfect recall
        // stays above 1.
        assert!(out.state.best_valid_ppl < 1.5, "{}", out.state.best_valid_ppl);
    }

    #[test]
    fn exploding_learning_rate_is_reported() {
        let sents = vec![vec![1, 2, 3]; 10];
        let cfg = TrainConfig {
            lr: f64::MAX,
            clip_norm: f64::MAX,
            epochs: 2,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let r = train(tiny(), &sents, &sents, 0, &cfg, None, &Sequential, &mut |_, _, _| Ok(()));
        assert!(matches!(r, Err(Error::NonFinite { .. })), "{r:?}");
    }
}
