//! Trace export: one row per (timestep, unit) with the gate and state
//! values. Layers and units are 1-based, `t` is the 0-based word index.

use std::path::Path;

use agreelab_core::lstm::{ActivationTrace, UnitRef};
use agreelab_core::vocab::Vocabulary;

use super::{write_csv, Provenance};
use crate::error::AppResult;

pub const HEADER: [&str; 10] = ["t", "token", "layer", "unit", "h", "c", "i", "f", "o", "ctilde"];

pub fn trace_rows(trace: &ActivationTrace, vocab: &Vocabulary, units: &[UnitRef]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (t, step) in trace.steps.iter().enumerate() {
        let tok = vocab.token(trace.tokens[t]).unwrap_or("<unk>");
        for u in units {
            let (l, k) = u.index();
            let s = &step.layers[l];
            rows.push(vec![
                t.to_string(),
                tok.to_string(),
                u.layer.to_string(),
                u.unit.to_string(),
                s.h[k].to_string(),
                s.c[k].to_string(),
                s.i[k].to_string(),
                s.f[k].to_string(),
                s.o[k].to_string(),
                s.g[k].to_string(),
            ]);
        }
    }
    rows
}

pub fn write_trace_csv(
    path: &Path,
    prov: &Provenance,
    trace: &ActivationTrace,
    vocab: &Vocabulary,
    units: &[UnitRef],
) -> AppResult<()> {
    write_csv(path, prov, &HEADER, &trace_rows(trace, vocab, units))
}
