use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::exec::Executor;
use crate::grammar::Stimulus;
use crate::lstm::{forward_sentence, ActivationTrace, AblationMask, Dims, LstmModel, UnitRef};
use crate::vocab::Vocabulary;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    #[default]
    Hidden,
    Cell,
}

/// A named set of units and the state variable read from each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSelection {
    pub label: String,
    pub units: Vec<UnitRef>,
    pub kind: StateKind,
}

impl UnitSelection {
    pub fn new(label: &str, units: Vec<UnitRef>, kind: StateKind) -> UnitSelection {
        UnitSelection {
            label: label.into(),
            units,
            kind,
        }
    }

    /// Every unit of the model except `exclude`.
    pub fn all_except(label: &str, dims: &Dims, exclude: &[UnitRef], kind: StateKind) -> UnitSelection {
        let units = UnitRef::all(dims)
            .into_iter()
            .filter(|u| !exclude.contains(u))
            .collect();
        UnitSelection::new(label, units, kind)
    }

    pub fn read(&self, trace: &ActivationTrace, t: usize) -> Vec<f64> {
        self.units
            .iter()
            .map(|u| {
                let (l, i) = u.index();
                match self.kind {
                    StateKind::Hidden => trace.h(t, l, i),
                    StateKind::Cell => trace.c(t, l, i),
                }
            })
            .collect()
    }
}

/// Record a trace for every stimulus (full sentence, read after `<eos>`),
/// aligned with its words.
pub fn stimulus_traces<E: Executor>(
    model: &LstmModel,
    vocab: &Vocabulary,
    stimuli: &[Stimulus],
    mask: &AblationMask,
    exec: &E,
) -> Result<Vec<ActivationTrace>> {
    let encoded = stimuli
        .iter()
        .map(|s| vocab.encode(&s.tokens))
        .collect::<Result<Vec<_>>>()?;
    exec.map(encoded, |ids| {
        forward_sentence(model, &ids, vocab.eos(), mask, true)
            .map(|o| o.trace.expect("trace was requested"))
    })
    .into_iter()
    .collect()
}

/// `[t][sample][feature]` tensor from traces of equal length.
pub fn time_features(traces: &[ActivationTrace], sel: &UnitSelection) -> Result<Vec<Vec<Vec<f64>>>> {
    let Some(first) = traces.first() else {
        return Err(Error::TooFewSamples { needed: 1, have: 0 });
    };
    let len = first.len();
    if let Some(bad) = traces.iter().find(|t| t.len() != len) {
        return Err(Error::Misaligned(format!(
            "traces have lengths {len} and {}",
            bad.len()
        )));
    }
    Ok((0..len)
        .map(|t| traces.iter().map(|tr| sel.read(tr, t)).collect())
        .collect())
}
