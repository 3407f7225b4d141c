use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{math, rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
}

impl Dims {
    pub fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed_dim
        } else {
            self.hidden_dim
        }
    }

    pub fn total_units(&self) -> usize {
        self.hidden_dim * self.n_layers
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    Input,
    Forget,
    Candidate,
    Output,
}

pub const GATE_ORDER: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Candidate, Gate::Output];

impl Gate {
    pub fn block(self) -> usize {
        match self {
            Gate::Input => 0,
            Gate::Forget => 1,
            Gate::Candidate => 2,
            Gate::Output => 3,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Gate::Input => "i",
            Gate::Forget => "f",
            Gate::Candidate => "g",
            Gate::Output => "o",
        }
    }
}

impl core::str::FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Gate> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "input" => Ok(Gate::Input),
            "f" | "forget" => Ok(Gate::Forget),
            "g" | "c" | "ctilde" | "candidate" => Ok(Gate::Candidate),
            "o" | "output" => Ok(Gate::Output),
            _ => Err(Error::InvalidArgument(alloc::format!("unknown gate {s:?}"))),
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let ra = ca.remainder();
    let rb = cb.remainder();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `out += self * x`
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), x);
        }
    }

    /// `out += self^T * v`
    pub fn t_matvec_add(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &a) in v.iter().enumerate() {
            if a != 0.0 {
                axpy(a, self.row(r), out);
            }
        }
    }

    /// `self += a ⊗ x`
    pub fn add_outer(&mut self, a: &[f64], x: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            if ar != 0.0 {
                let cols = self.cols;
                axpy(ar, x, &mut self.data[r * cols..(r + 1) * cols]);
            }
        }
    }
}

/// One LSTM layer: gate pre-activations are `w_ih x + w_hh h + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `[4H x input]`
    pub w_ih: Matrix,
    /// `[4H x H]`
    pub w_hh: Matrix,
    /// `[4H]`
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(input: usize, hidden: usize) -> LayerParams {
        LayerParams {
            w_ih: Matrix::zeros(4 * hidden, input),
            w_hh: Matrix::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols
    }

    pub fn input(&self) -> usize {
        self.w_ih.cols
    }

    /// Row index of `unit`'s pre-activation in `gate`'s block.
    pub fn gate_row(&self, gate: Gate, unit: usize) -> usize {
        gate.block() * self.hidden() + unit
    }
}

/// All model parameters. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub dims: Dims,
    /// `[V x E]`
    pub embedding: Matrix,
    pub layers: Vec<LayerParams>,
    /// `[V x H]`, row `v` holds the efferent weights to token `v`.
    pub out_w: Matrix,
    /// `[V]`
    pub out_b: Vec<f64>,
}

impl LstmModel {
    pub fn zeros(dims: Dims) -> LstmModel {
        LstmModel {
            dims,
            embedding: Matrix::zeros(dims.vocab_size, dims.embed_dim),
            layers: (0..dims.n_layers)
                .map(|l| LayerParams::zeros(dims.layer_input(l), dims.hidden_dim))
                .collect(),
            out_w: Matrix::zeros(dims.vocab_size, dims.hidden_dim),
            out_b: vec![0.0; dims.vocab_size],
        }
    }

    /// Uniform `[-k, k]` with `k = 1/sqrt(H)`, forget-gate biases `+1`,
    /// output bias zero.
    pub fn init(dims: Dims, seed: u64) -> LstmModel {
        let mut m = LstmModel::zeros(dims);
        let k = 1.0 / math::sqrt(dims.hidden_dim.max(1) as f64);
        let mut r = rng::stream(seed, "init");
        let mut fill = |xs: &mut [f64]| {
            for x in xs {
                *x = r.gen_range(-k..=k);
            }
        };
        fill(&mut m.embedding.data);
        for layer in &mut m.layers {
            fill(&mut layer.w_ih.data);
            fill(&mut layer.w_hh.data);
            fill(&mut layer.bias);
            let h = dims.hidden_dim;
            for b in &mut layer.bias[h..2 * h] {
                *b = 1.0;
            }
        }
        fill(&mut m.out_w.data);
        m
    }

    /// Parameter tensors in serialization order with names and shapes.
    pub fn tensors(&self) -> Vec<(String, [usize; 2], &[f64])> {
        let mut out: Vec<(String, [usize; 2], &[f64])> = Vec::new();
        let m = |x: &Matrix| [x.rows, x.cols];
        out.push(("embedding".into(), m(&self.embedding), &self.embedding.data));
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((alloc::format!("layer{}.w_ih", l + 1), m(&layer.w_ih), &layer.w_ih.data));
            out.push((alloc::format!("layer{}.w_hh", l + 1), m(&layer.w_hh), &layer.w_hh.data));
            out.push((alloc::format!("layer{}.bias", l + 1), [layer.bias.len(), 1], &layer.bias));
        }
        out.push(("output.weight".into(), m(&self.out_w), &self.out_w.data));
        out.push(("output.bias".into(), [self.out_b.len(), 1], &self.out_b));
        out
    }

    /// Mutable parameter slices, in the same order as [`tensors`](Self::tensors).
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.push(&mut self.embedding.data);
        for layer in &mut self.layers {
            out.push(&mut layer.w_ih.data);
            out.push(&mut layer.w_hh.data);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.out_w.data);
        out.push(&mut self.out_b);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    /// Shapes consistent with `dims` and every value finite.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if d.n_layers == 0 || d.hidden_dim == 0 || d.vocab_size == 0 || d.embed_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        let expect = LstmModel::zeros(d);
        let have = self.tensors();
        let want = expect.tensors();
        if have.len() != want.len() {
            return Err(Error::Shape {
                what: "tensor count",
                expected: want.len(),
                got: have.len(),
            });
        }
        for ((_, hs, hd), (_, ws, _)) in have.iter().zip(&want) {
            if hs != ws || hd.len() != ws[0] * ws[1] {
                return Err(Error::Shape {
                    what: "tensor",
                    expected: ws[0] * ws[1],
                    got: hd.len(),
                });
            }
        }
        for (name, _, data) in &have {
            if data.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(alloc::format!("non-finite value in {name}")));
            }
        }
        Ok(())
    }

    pub(crate) fn zero_like(&self) -> LstmModel {
        LstmModel::zeros(self.dims)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_respects_bounds_and_forget_bias() {
        let d = Dims {
            vocab_size: 7,
            embed_dim: 3,
            hidden_dim: 4,
            n_layers: 2,
        };
        let m = LstmModel::init(d, 1);
        m.validate().unwrap();
        for l in &m.layers {
            assert!(l.bias[4..8].iter().all(|&b| b == 1.0));
            assert!(l.w_hh.data.iter().all(|w| w.abs() <= 0.5));
        }
        assert!(m.out_b.iter().all(|&b| b == 0.0));
        assert_eq!(m, LstmModel::init(d, 1));
        assert_ne!(m, LstmModel::init(d, 2));
    }

    #[test]
    fn validate_catches_nan_and_shape() {
        let d = Dims {
            vocab_size: 5,
            embed_dim: 2,
            hidden_dim: 3,
            n_layers: 1,
        };
        let mut m = LstmModel::init(d, 0);
        m.out_b[2] = f64::NAN;
        assert!(m.validate().is_err());
        let mut m = LstmModel::init(d, 0);
        m.layers[0].bias.pop();
        assert!(m.validate().is_err());
    }

    #[test]
    fn matvec_kernels_agree_with_loops() {
        let mut m = Matrix::zeros(3, 5);
        for (k, x) in m.data.iter_mut().enumerate() {
            *x = k as f64 * 0.5 - 3.0;
        }
        let x = [1.0, -2.0, 0.5, 3.0, -1.0];
        let mut out = [0.0; 3];
        m.matvec_add(&x, &mut out);
        for r in 0..3 {
            let want: f64 = (0..5).map(|c| m.get(r, c) * x[c]).sum();
            assert!((out[r] - want).abs() < 1e-12);
        }
        let v = [1.0, 2.0, -1.0];
        let mut back = [0.0; 5];
        m.t_matvec_add(&v, &mut back);
        for c in 0..5 {
            let want: f64 = (0..3).map(|r| m.get(r, c) * v[r]).sum();
            assert!((back[c] - want).abs() < 1e-12);
        }
    }
}
