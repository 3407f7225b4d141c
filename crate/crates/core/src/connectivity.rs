//! Weight-space analyses: efferent segregation toward verb forms, effective
//! afferent weights into a unit's gates, and reciprocal-inhibition checks.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::grammar::Pair;
use crate::lstm::{ActivationTrace, Dims, Gate, LstmModel, UnitRef};
use crate::vocab::Vocabulary;
use crate::{stats, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfferentProfile {
    pub unit: UnitRef,
    /// (verb form, output weight) for singular forms.
    pub singular: Vec<(String, f64)>,
    pub plural: Vec<(String, f64)>,
    /// Balanced accuracy of the best single threshold, in either
    /// orientation. Lies in [0.5, 1].
    pub segregation: f64,
}

/// Best balanced accuracy of a threshold rule separating `a` from `b`.
pub fn threshold_balanced_accuracy(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.5;
    }
    let mut cuts: Vec<f64> = a.iter().chain(b).copied().collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (na, nb) = (a.len() as u64, b.len() as u64);
    // Balanced accuracy times 2*na*nb, kept in integers so orientation and
    // label swaps give bit-identical results.
    let mut best = na * nb;
    for &c in &cuts {
        let ca = a.iter().filter(|&&x| x <= c).count() as u64;
        let cb = b.iter().filter(|&&x| x <= c).count() as u64;
        let ba = ca * nb + (nb - cb) * na;
        best = best.max(ba).max(2 * na * nb - ba);
    }
    best as f64 / (2 * na * nb) as f64
}

fn require_top_layer(dims: &Dims, unit: UnitRef) -> Result<()> {
    unit.validate(dims)?;
    if unit.layer != dims.n_layers {
        return Err(Error::InvalidArgument(format!(
            "{unit} has no efferent output weights; only layer {} projects to the vocabulary",
            dims.n_layers
        )));
    }
    Ok(())
}

/// Output weights of `unit` to the singular and plural forms of `verbs`.
pub fn efferent_profile(
    model: &LstmModel,
    vocab: &Vocabulary,
    unit: UnitRef,
    verbs: &[Pair],
) -> Result<EfferentProfile> {
    require_top_layer(&model.dims, unit)?;
    let (_, col) = unit.index();
    let mut singular = Vec::with_capacity(verbs.len());
    let mut plural = Vec::with_capacity(verbs.len());
    for p in verbs {
        let s = vocab.require(&p.singular)?;
        let q = vocab.require(&p.plural)?;
        if s == q {
            return Err(Error::InvalidArgument(format!("verb {} has identical forms", p.singular)));
        }
        singular.push((p.singular.clone(), model.out_w.get(s, col)));
        plural.push((p.plural.clone(), model.out_w.get(q, col)));
    }
    let ws: Vec<f64> = singular.iter().map(|x| x.1).collect();
    let wp: Vec<f64> = plural.iter().map(|x| x.1).collect();
    Ok(EfferentProfile {
        unit,
        segregation: threshold_balanced_accuracy(&ws, &wp),
        singular,
        plural,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePopulation {
    /// Recurrent connections from the target's own layer.
    #[default]
    SameLayer,
    /// Recurrent sources plus the feed-forward sources in the layer below.
    WithLowerLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfferentSource {
    pub source: UnitRef,
    pub raw: f64,
    /// Max |h| of the source over the reference traces.
    pub scale: f64,
    pub effective: f64,
    /// Mean h of the source, so the sign of its typical drive is visible.
    pub mean_activity: f64,
    pub z: f64,
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveAfferent {
    pub target: UnitRef,
    pub gate: Gate,
    pub population: SourcePopulation,
    pub threshold: f64,
    pub sources: Vec<AfferentSource>,
}

impl EffectiveAfferent {
    pub fn outliers(&self) -> Vec<&AfferentSource> {
        self.sources.iter().filter(|s| s.outlier).collect()
    }

    pub fn source(&self, u: UnitRef) -> Option<&AfferentSource> {
        self.sources.iter().find(|s| s.source == u)
    }
}

/// Per layer and unit: (max |h|, mean h) over all steps of `traces`.
pub fn activity_stats(traces: &[ActivationTrace], dims: &Dims) -> Result<Vec<Vec<(f64, f64)>>> {
    let steps: usize = traces.iter().map(ActivationTrace::len).sum();
    if steps == 0 {
        return Err(Error::TooFewSamples { needed: 1, have: 0 });
    }
    let mut out = vec![vec![(0.0f64, 0.0f64); dims.hidden_dim]; dims.n_layers];
    for tr in traces {
        for st in &tr.steps {
            if st.layers.len() != dims.n_layers {
                return Err(Error::Shape {
                    what: "trace layers",
                    expected: dims.n_layers,
                    got: st.layers.len(),
                });
            }
            for (l, snap) in st.layers.iter().enumerate() {
                for (u, &h) in snap.h.iter().enumerate() {
                    let e = &mut out[l][u];
                    e.0 = e.0.max(h.abs());
                    e.1 += h;
                }
            }
        }
    }
    for layer in &mut out {
        for e in layer {
            e.1 /= steps as f64;
        }
    }
    Ok(out)
}

/// Effective afferent weights into `gate` of `target` with sources scaled
/// by their activity statistics, z-scored (population SD) within the
/// population and flagged at `|z| > threshold`.
pub fn effective_afferents_from_stats(
    model: &LstmModel,
    target: UnitRef,
    gate: Gate,
    activity: &[Vec<(f64, f64)>],
    population: SourcePopulation,
    threshold: f64,
) -> Result<EffectiveAfferent> {
    let d = model.dims;
    target.validate(&d)?;
    let (tl, tu) = target.index();
    let layer = &model.layers[tl];
    let row = layer.gate_row(gate, tu);
    let mut sources = Vec::new();
    for s in 0..d.hidden_dim {
        let (scale, mean) = activity[tl][s];
        let raw = layer.w_hh.get(row, s);
        sources.push((UnitRef::new(tl + 1, s + 1), raw, scale, mean));
    }
    if population == SourcePopulation::WithLowerLayer && tl > 0 {
        for s in 0..d.hidden_dim {
            let (scale, mean) = activity[tl - 1][s];
            let raw = layer.w_ih.get(row, s);
            sources.push((UnitRef::new(tl, s + 1), raw, scale, mean));
        }
    }
    let eff: Vec<f64> = sources.iter().map(|s| s.1 * s.2).collect();
    let z = stats::zscores(&eff);
    Ok(EffectiveAfferent {
        target,
        gate,
        population,
        threshold,
        sources: sources
            .into_iter()
            .zip(eff.iter().zip(&z))
            .map(|((source, raw, scale, mean_activity), (&effective, &z))| AfferentSource {
                source,
                raw,
                scale,
                effective,
                mean_activity,
                z,
                outlier: z.abs() > threshold,
            })
            .collect(),
    })
}

pub fn effective_afferents(
    model: &LstmModel,
    target: UnitRef,
    gate: Gate,
    traces: &[ActivationTrace],
    population: SourcePopulation,
    threshold: f64,
) -> Result<EffectiveAfferent> {
    let activity = activity_stats(traces, &model.dims)?;
    effective_afferents_from_stats(model, target, gate, &activity, population, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    MutuallyInhibiting,
    Independent,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutualInhibitionReport {
    pub a: UnitRef,
    pub b: UnitRef,
    /// Recurrent weights from `a` into `b`'s input and forget gates.
    pub a_to_b_input: f64,
    pub a_to_b_forget: f64,
    pub b_to_a_input: f64,
    pub b_to_a_forget: f64,
    pub reciprocal_positive: bool,
    /// Mean cell state of each unit over the span of every trace.
    pub mean_cell_a: f64,
    pub mean_cell_b: f64,
    pub activity_negative: bool,
    pub interaction: Interaction,
}

/// Positive reciprocal input/forget-gate weights together with negative
/// cell activity in both units is labeled mutual inhibition; all-zero
/// reciprocal weights are independence. `span` restricts the timesteps
/// `[lo, hi)` read from each trace.
pub fn mutual_inhibition_check(
    model: &LstmModel,
    a: UnitRef,
    b: UnitRef,
    traces: &[ActivationTrace],
    span: Option<(usize, usize)>,
) -> Result<MutualInhibitionReport> {
    a.validate(&model.dims)?;
    b.validate(&model.dims)?;
    if a.layer != b.layer || a == b {
        return Err(Error::InvalidArgument(format!("{a} and {b} must be distinct units of one layer")));
    }
    let (l, ia) = a.index();
    let (_, ib) = b.index();
    let layer = &model.layers[l];
    let w = |gate: Gate, to: usize, from: usize| layer.w_hh.get(layer.gate_row(gate, to), from);
    let weights = [
        w(Gate::Input, ib, ia),
        w(Gate::Forget, ib, ia),
        w(Gate::Input, ia, ib),
        w(Gate::Forget, ia, ib),
    ];
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    for tr in traces {
        let (lo, hi) = span.unwrap_or((0, tr.len()));
        for t in lo..hi.min(tr.len()) {
            ca.push(tr.c(t, l, ia));
            cb.push(tr.c(t, l, ib));
        }
    }
    let reciprocal_positive = weights.iter().all(|&x| x > 0.0);
    let (mean_cell_a, mean_cell_b) = if ca.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (stats::mean(&ca), stats::mean(&cb))
    };
    let activity_negative = mean_cell_a < 0.0 && mean_cell_b < 0.0;
    let interaction = if weights.iter().all(|&x| x == 0.0) {
        Interaction::Independent
    } else if reciprocal_positive && activity_negative {
        Interaction::MutuallyInhibiting
    } else {
        Interaction::Other
    };
    Ok(MutualInhibitionReport {
        a,
        b,
        a_to_b_input: weights[0],
        a_to_b_forget: weights[1],
        b_to_a_input: weights[2],
        b_to_a_forget: weights[3],
        reciprocal_positive,
        mean_cell_a,
        mean_cell_b,
        activity_negative,
        interaction,
    })
}
