use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AblationMask, Dims, LayerParams, LstmModel, ResolvedMask};
use crate::{math, Error, Result};

/// Hidden and cell state of every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl State {
    pub fn zeros(dims: &Dims) -> State {
        State {
            h: vec![vec![0.0; dims.hidden_dim]; dims.n_layers],
            c: vec![vec![0.0; dims.hidden_dim]; dims.n_layers],
        }
    }

    pub fn reset(&mut self) {
        for v in self.h.iter_mut().chain(self.c.iter_mut()) {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// Activations of one layer at one timestep. `g` is the cell candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSnapshot {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
}

impl LayerSnapshot {
    fn zeros(hidden: usize) -> LayerSnapshot {
        LayerSnapshot {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
            i: vec![0.0; hidden],
            f: vec![0.0; hidden],
            g: vec![0.0; hidden],
            o: vec![0.0; hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub layers: Vec<LayerSnapshot>,
}

/// Per-timestep gate and state values, aligned with `tokens`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationTrace {
    pub tokens: Vec<usize>,
    pub steps: Vec<StepRecord>,
}

impl ActivationTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Hidden activation of 0-based `(layer, unit)` at step `t`.
    pub fn h(&self, t: usize, layer: usize, unit: usize) -> f64 {
        self.steps[t].layers[layer].h[unit]
    }

    pub fn c(&self, t: usize, layer: usize, unit: usize) -> f64 {
        self.steps[t].layers[layer].c[unit]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `log_probs[t]` is the log-distribution over the token following
    /// input `t`.
    pub log_probs: Vec<Vec<f64>>,
    pub trace: Option<ActivationTrace>,
}

/// One LSTM cell update with gate order i, f, g, o:
/// `c = f*c_prev + i*g`, `h = o*tanh(c)`.
pub fn cell_step(
    layer: &LayerParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<LayerSnapshot> {
    let hd = layer.hidden();
    check_len("cell input", layer.input(), x.len())?;
    check_len("previous hidden state", hd, h_prev.len())?;
    check_len("previous cell state", hd, c_prev.len())?;
    let mut pre = layer.bias.clone();
    let mut out = LayerSnapshot::zeros(hd);
    gates(layer, x, h_prev, &mut pre);
    activate(&pre, c_prev, &mut out);
    Ok(out)
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape { what, expected, got });
    }
    Ok(())
}

#[inline]
pub(crate) fn gates(layer: &LayerParams, x: &[f64], h_prev: &[f64], pre: &mut [f64]) {
    pre.copy_from_slice(&layer.bias);
    layer.w_ih.matvec_add(x, pre);
    layer.w_hh.matvec_add(h_prev, pre);
}

#[inline]
pub(crate) fn activate(pre: &[f64], c_prev: &[f64], out: &mut LayerSnapshot) {
    let hd = c_prev.len();
    for u in 0..hd {
        let i = math::sigmoid(pre[u]);
        let f = math::sigmoid(pre[hd + u]);
        let g = math::tanh(pre[2 * hd + u]);
        let o = math::sigmoid(pre[3 * hd + u]);
        let c = f * c_prev[u] + i * g;
        out.i[u] = i;
        out.f[u] = f;
        out.g[u] = g;
        out.o[u] = o;
        out.c[u] = c;
        out.h[u] = o * math::tanh(c);
    }
}

/// Incremental runner with preallocated scratch buffers.
pub struct Stepper<'m> {
    model: &'m LstmModel,
    mask: ResolvedMask,
    pre: Vec<f64>,
    snap: Vec<LayerSnapshot>,
    logits: Vec<f64>,
}

impl<'m> Stepper<'m> {
    pub fn new(model: &'m LstmModel, mask: &AblationMask) -> Result<Stepper<'m>> {
        let d = model.dims;
        Ok(Stepper {
            model,
            mask: mask.resolve(&d)?,
            pre: vec![0.0; 4 * d.hidden_dim],
            snap: (0..d.n_layers).map(|_| LayerSnapshot::zeros(d.hidden_dim)).collect(),
            logits: vec![0.0; d.vocab_size],
        })
    }

    pub fn model(&self) -> &LstmModel {
        self.model
    }

    pub fn zero_state(&self) -> State {
        State::zeros(&self.model.dims)
    }

    /// Advance `state` by one input token.
    pub fn step(&mut self, state: &mut State, token: usize) -> Result<()> {
        let d = self.model.dims;
        if token >= d.vocab_size {
            return Err(Error::TokenOutOfRange {
                id: token,
                vocab_size: d.vocab_size,
            });
        }
        for l in 0..d.n_layers {
            let layer = &self.model.layers[l];
            {
                let x: &[f64] = if l == 0 {
                    self.model.embedding.row(token)
                } else {
                    &self.snap[l - 1].h
                };
                gates(layer, x, &state.h[l], &mut self.pre);
            }
            let snap = &mut self.snap[l];
            activate(&self.pre, &state.c[l], snap);
            self.mask.apply(l, &mut snap.h, &mut snap.c);
            state.h[l].copy_from_slice(&snap.h);
            state.c[l].copy_from_slice(&snap.c);
        }
        Ok(())
    }

    /// Snapshot of the last step's activations.
    pub fn record(&self) -> StepRecord {
        StepRecord {
            layers: self.snap.clone(),
        }
    }

    /// Log-softmax of the output layer applied to the top hidden state.
    pub fn log_probs(&mut self, state: &State) -> &[f64] {
        let top = state.h.last().expect("at least one layer");
        self.logits.copy_from_slice(&self.model.out_b);
        self.model.out_w.matvec_add(top, &mut self.logits);
        math::log_softmax_in_place(&mut self.logits);
        &self.logits
    }
}

/// Run `tokens` from a zero state. The state is reset before every `<eos>`
/// input, so each sentence is processed independently.
pub fn forward_stream(
    model: &LstmModel,
    tokens: &[usize],
    eos: Option<usize>,
    mask: &AblationMask,
    record: bool,
) -> Result<ForwardOutput> {
    let mut st = Stepper::new(model, mask)?;
    let mut state = st.zero_state();
    let mut log_probs = Vec::with_capacity(tokens.len());
    let mut steps = Vec::new();
    for &tok in tokens {
        if Some(tok) == eos {
            state.reset();
        }
        st.step(&mut state, tok)?;
        if record {
            steps.push(st.record());
        }
        log_probs.push(st.log_probs(&state).to_vec());
    }
    Ok(ForwardOutput {
        log_probs,
        trace: record.then(|| ActivationTrace {
            tokens: tokens.to_vec(),
            steps,
        }),
    })
}

/// Run `tokens` from a zero state with no resets.
pub fn forward(
    model: &LstmModel,
    tokens: &[usize],
    mask: &AblationMask,
    record: bool,
) -> Result<ForwardOutput> {
    forward_stream(model, tokens, None, mask, record)
}

/// Run one sentence the way it is seen in training: `<eos>` first, then the
/// words. `log_probs[k]` is the distribution over word `k` given the words
/// before it (length `n + 1`); trace steps are aligned with the words.
pub fn forward_sentence(
    model: &LstmModel,
    words: &[usize],
    eos: usize,
    mask: &AblationMask,
    record: bool,
) -> Result<ForwardOutput> {
    let mut st = Stepper::new(model, mask)?;
    let mut state = st.zero_state();
    st.step(&mut state, eos)?;
    let mut log_probs = Vec::with_capacity(words.len() + 1);
    log_probs.push(st.log_probs(&state).to_vec());
    let mut steps = Vec::new();
    for &w in words {
        st.step(&mut state, w)?;
        if record {
            steps.push(st.record());
        }
        log_probs.push(st.log_probs(&state).to_vec());
    }
    Ok(ForwardOutput {
        log_probs,
        trace: record.then(|| ActivationTrace {
            tokens: words.to_vec(),
            steps,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::super::UnitRef;
    use super::*;

    fn model() -> LstmModel {
        LstmModel::init(
            Dims {
                vocab_size: 9,
                embed_dim: 5,
                hidden_dim: 6,
                n_layers: 2,
            },
            3,
        )
    }

    #[test]
    fn trace_invariants_hold() {
        let m = model();
        let out = forward(&m, &[1, 4, 2, 8, 0, 3], &AblationMask::none(), true).unwrap();
        let tr = out.trace.unwrap();
        let mut c_prev = vec![vec![0.0; 6]; 2];
        for step in &tr.steps {
            for (l, s) in step.layers.iter().enumerate() {
                for u in 0..6 {
                    for gate in [s.i[u], s.f[u], s.o[u]] {
                        assert!((0.0..=1.0).contains(&gate));
                    }
                    assert!(s.g[u].abs() <= 1.0 && s.h[u].abs() <= 1.0);
                    let c = s.f[u] * c_prev[l][u] + s.i[u] * s.g[u];
                    assert!((c - s.c[u]).abs() < 1e-12);
                    assert!((s.o[u] * math::tanh(s.c[u]) - s.h[u]).abs() < 1e-12);
                }
                c_prev[l] = s.c.clone();
            }
        }
        for lp in &out.log_probs {
            let total: f64 = lp.iter().map(|x| math::exp(*x)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ablated_unit_is_zero_everywhere() {
        let m = model();
        let mask = AblationMask::of([UnitRef::new(1, 2), UnitRef::new(2, 6)]);
        let tr = forward(&m, &[1, 2, 3, 4], &mask, true).unwrap().trace.unwrap();
        for s in &tr.steps {
            assert_eq!(s.layers[0].h[1], 0.0);
            assert_eq!(s.layers[1].h[5], 0.0);
        }
    }

    #[test]
    fn out_of_range_token_is_an_error() {
        let m = model();
        assert_eq!(
            forward(&m, &[1, 9], &AblationMask::none(), false).unwrap_err(),
            Error::TokenOutOfRange { id: 9, vocab_size: 9 }
        );
    }

    #[test]
    fn sentence_runs_match_stream_runs() {
        let m = model();
        let s = forward_sentence(&m, &[3, 4, 5], 0, &AblationMask::none(), false).unwrap();
        let t = forward_stream(&m, &[7, 7, 0, 3, 4, 5], Some(0), &AblationMask::none(), false)
            .unwrap();
        for k in 0..4 {
            assert_eq!(s.log_probs[k], t.log_probs[k + 2]);
        }
    }
}
