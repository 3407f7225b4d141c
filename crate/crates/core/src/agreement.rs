//! Number-agreement scoring by likelihood comparison, single-unit ablation
//! sweeps and permutation tests over random equi-size ablations.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::exec::Executor;
use crate::grammar::{Condition, Number, Stimulus, StimulusSet, Template};
use crate::lstm::{AblationMask, AblationMode, LstmModel, Stepper, UnitRef};
use crate::vocab::Vocabulary;
use crate::{rng, Error, Result};

/// A stimulus mapped to token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedStimulus {
    pub task: Template,
    pub condition: Condition,
    pub prefix: Vec<usize>,
    pub correct: usize,
    pub wrong: usize,
}

impl EncodedStimulus {
    pub fn new(vocab: &Vocabulary, s: &Stimulus) -> Result<EncodedStimulus> {
        Ok(EncodedStimulus {
            task: s.task,
            condition: s.condition,
            prefix: vocab.encode(s.prefix())?,
            correct: vocab.require(&s.correct_verb)?,
            wrong: vocab.require(&s.wrong_verb)?,
        })
    }
}

pub fn encode_stimuli<'a, I>(vocab: &Vocabulary, stimuli: I) -> Result<Vec<EncodedStimulus>>
where
    I: IntoIterator<Item = &'a Stimulus>,
{
    stimuli.into_iter().map(|s| EncodedStimulus::new(vocab, s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusScore {
    pub log_p_correct: f64,
    pub log_p_wrong: f64,
}

impl StimulusScore {
    /// Strictly higher likelihood for the correct form; ties are incorrect.
    pub fn is_correct(&self) -> bool {
        self.log_p_correct > self.log_p_wrong
    }
}

/// Score one stimulus: the model reads `<eos>` and the prefix, then the
/// log-probabilities of the two verb forms are compared.
pub fn score_stimulus(
    model: &LstmModel,
    vocab: &Vocabulary,
    stimulus: &Stimulus,
    mask: &AblationMask,
) -> Result<StimulusScore> {
    let enc = EncodedStimulus::new(vocab, stimulus)?;
    let mut st = Stepper::new(model, mask)?;
    let mut state = st.zero_state();
    st.step(&mut state, vocab.eos())?;
    for &t in &enc.prefix {
        st.step(&mut state, t)?;
    }
    let lp = st.log_probs(&state);
    Ok(StimulusScore {
        log_p_correct: lp[enc.correct],
        log_p_wrong: lp[enc.wrong],
    })
}

/// Score many stimuli, sharing the computation of common prefixes. Results
/// are identical to scoring each stimulus on its own and are returned in
/// input order.
pub fn score_encoded(
    model: &LstmModel,
    eos: usize,
    stimuli: &[EncodedStimulus],
    mask: &AblationMask,
) -> Result<Vec<StimulusScore>> {
    let mut st = Stepper::new(model, mask)?;
    let vs = model.dims.vocab_size;
    for s in stimuli {
        if let Some(&bad) = s.prefix.iter().chain([&s.correct, &s.wrong]).find(|&&t| t >= vs) {
            return Err(Error::TokenOutOfRange { id: bad, vocab_size: vs });
        }
    }
    let mut order: Vec<usize> = (0..stimuli.len()).collect();
    order.sort_by(|&a, &b| stimuli[a].prefix.cmp(&stimuli[b].prefix));
    let mut out = alloc::vec![StimulusScore { log_p_correct: 0.0, log_p_wrong: 0.0 }; stimuli.len()];
    // stack[k] is the state after `<eos>` and the first k prefix tokens.
    let mut root = st.zero_state();
    st.step(&mut root, eos)?;
    let mut stack = alloc::vec![root];
    let mut current: &[usize] = &[];
    for &i in &order {
        let p = &stimuli[i].prefix;
        let common = current.iter().zip(p).take_while(|(a, b)| a == b).count();
        stack.truncate(common + 1);
        for &t in &p[common..] {
            let mut next = stack.last().expect("root state").clone();
            st.step(&mut next, t)?;
            stack.push(next);
        }
        current = p;
        let lp = st.log_probs(stack.last().expect("root state"));
        out[i] = StimulusScore {
            log_p_correct: lp[stimuli[i].correct],
            log_p_wrong: lp[stimuli[i].wrong],
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionAccuracy {
    pub task: Template,
    pub condition: Condition,
    pub n: usize,
    pub n_correct: usize,
    pub accuracy: f64,
}

fn tally(stimuli: &[EncodedStimulus], scores: &[StimulusScore]) -> Vec<ConditionAccuracy> {
    let mut groups: BTreeMap<(Template, Condition), (usize, usize)> = BTreeMap::new();
    for (s, sc) in stimuli.iter().zip(scores) {
        let e = groups.entry((s.task, s.condition)).or_default();
        e.0 += 1;
        e.1 += usize::from(sc.is_correct());
    }
    groups
        .into_iter()
        .map(|((task, condition), (n, n_correct))| ConditionAccuracy {
            task,
            condition,
            n,
            n_correct,
            accuracy: n_correct as f64 / n as f64,
        })
        .collect()
}

/// Accuracy per (task, condition) over already encoded stimuli. Conditions
/// without stimuli are omitted.
pub fn encoded_accuracy(
    model: &LstmModel,
    eos: usize,
    stimuli: &[EncodedStimulus],
    mask: &AblationMask,
) -> Result<Vec<ConditionAccuracy>> {
    let scores = score_encoded(model, eos, stimuli, mask)?;
    Ok(tally(stimuli, &scores))
}

pub fn task_accuracy(
    model: &LstmModel,
    vocab: &Vocabulary,
    set: &StimulusSet,
    mask: &AblationMask,
) -> Result<Vec<ConditionAccuracy>> {
    let enc = encode_stimuli(vocab, &set.stimuli)?;
    encoded_accuracy(model, vocab.eos(), &enc, mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionDelta {
    pub task: Template,
    pub condition: Condition,
    pub full: f64,
    pub ablated: f64,
    /// `full - ablated`, in percentage points.
    pub delta: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEffect {
    pub unit: UnitRef,
    pub deltas: Vec<ConditionDelta>,
    pub max_delta: f64,
    /// Set when every flagged condition has a subject of the same number.
    pub number_dependence: Option<Number>,
}

impl AblationEffect {
    pub fn is_flagged(&self) -> bool {
        self.deltas.iter().any(|d| d.flagged)
    }

    pub fn delta(&self, task: Template, condition: Condition) -> Option<&ConditionDelta> {
        self.deltas
            .iter()
            .find(|d| d.task == task && d.condition == condition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Drop in percentage points above which a unit is flagged.
    pub threshold: f64,
    pub mode: AblationMode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            threshold: 10.0,
            mode: AblationMode::Hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub baseline: Vec<ConditionAccuracy>,
    /// Sorted by decreasing `max_delta`, then by unit.
    pub effects: Vec<AblationEffect>,
}

/// Ablate each of `units` in turn and compare every (task, condition)
/// accuracy against the unablated baseline.
pub fn ablation_sweep<E: Executor>(
    model: &LstmModel,
    vocab: &Vocabulary,
    sets: &[StimulusSet],
    units: &[UnitRef],
    config: &SweepConfig,
    exec: &E,
) -> Result<SweepReport> {
    if sets.is_empty() {
        return Err(Error::InvalidArgument("ablation sweep needs at least one task".into()));
    }
    for u in units {
        u.validate(&model.dims)?;
    }
    let mut enc = Vec::new();
    for set in sets {
        enc.extend(encode_stimuli(vocab, &set.stimuli)?);
    }
    let eos = vocab.eos();
    let baseline = encoded_accuracy(model, eos, &enc, &AblationMask::none())?;
    let enc = &enc;
    let baseline_ref = &baseline;
    let results = exec.map(units.to_vec(), |u| {
        let mask = AblationMask::of([u]).with_mode(config.mode);
        let acc = encoded_accuracy(model, eos, enc, &mask)?;
        Ok::<_, Error>(effect(u, baseline_ref, &acc, config.threshold))
    });
    let mut effects = results.into_iter().collect::<Result<Vec<_>>>()?;
    effects.sort_by(|a, b| {
        b.max_delta
            .partial_cmp(&a.max_delta)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.unit.cmp(&b.unit))
    });
    Ok(SweepReport {
        config: config.clone(),
        baseline,
        effects,
    })
}

fn effect(
    unit: UnitRef,
    baseline: &[ConditionAccuracy],
    ablated: &[ConditionAccuracy],
    threshold: f64,
) -> AblationEffect {
    let deltas: Vec<ConditionDelta> = baseline
        .iter()
        .zip(ablated)
        .map(|(b, a)| {
            let delta = 100.0 * (b.accuracy - a.accuracy);
            ConditionDelta {
                task: b.task,
                condition: b.condition,
                full: b.accuracy,
                ablated: a.accuracy,
                delta,
                flagged: delta > threshold,
            }
        })
        .collect();
    let max_delta = deltas.iter().map(|d| d.delta).fold(f64::NEG_INFINITY, f64::max);
    let mut numbers = deltas.iter().filter(|d| d.flagged).map(|d| d.condition.subject);
    let number_dependence = numbers.next().filter(|&first| numbers.all(|n| n == first));
    AblationEffect {
        unit,
        deltas,
        max_delta,
        number_dependence,
    }
}

/// A unit whose ablation selectively impairs agreement for one number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrUnit {
    pub unit: UnitRef,
    pub number: Number,
    /// The incongruent condition with the largest drop.
    pub condition: Condition,
    pub delta: f64,
}

/// Units that drop an incongruent condition of `task` by more than the
/// sweep threshold while every condition of `task` with the opposite subject
/// number stays within `tolerance` points of baseline.
pub fn identify_lr_units(report: &SweepReport, task: Template, tolerance: f64) -> Vec<LrUnit> {
    let mut out = Vec::new();
    for e in &report.effects {
        let of_task: Vec<&ConditionDelta> = e.deltas.iter().filter(|d| d.task == task).collect();
        let best = of_task
            .iter()
            .filter(|d| !d.condition.is_congruent() && d.delta > report.config.threshold)
            .max_by(|a, b| a.delta.partial_cmp(&b.delta).unwrap_or(core::cmp::Ordering::Equal));
        let Some(best) = best else { continue };
        let number = best.condition.subject;
        let selective = of_task
            .iter()
            .filter(|d| d.condition.subject != number)
            .all(|d| d.delta.abs() <= tolerance);
        if selective {
            out.push(LrUnit {
                unit: e.unit,
                number,
                condition: best.condition,
                delta: best.delta,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationTestResult {
    pub targets: Vec<UnitRef>,
    /// Task and condition label, e.g. `Simple` or `NounPP/SP`.
    pub task_condition: String,
    pub full_accuracy: f64,
    pub observed_accuracy: f64,
    pub n_random: usize,
    pub seed: u64,
    /// Accuracy under each random ablation, in draw order.
    pub null: Vec<f64>,
    pub p_value: f64,
}

/// Add-one permutation p-value: the fraction of random ablations at least as
/// damaging as the observed one, counting the observed one.
pub fn permutation_p_value(observed: f64, null: &[f64]) -> f64 {
    let hits = null.iter().filter(|&&a| a <= observed).count();
    (1 + hits) as f64 / (null.len() + 1) as f64
}

fn pooled_accuracy(model: &LstmModel, eos: usize, enc: &[EncodedStimulus], mask: &AblationMask) -> Result<f64> {
    let scores = score_encoded(model, eos, enc, mask)?;
    let n = scores.iter().filter(|s| s.is_correct()).count();
    Ok(n as f64 / scores.len() as f64)
}

/// Compare the accuracy after ablating `targets` against `n_random` random
/// ablations of the same size drawn from `universe` (all non-target units
/// of the model when `None`). Accuracy is pooled over the stimuli of `set`,
/// restricted to `condition` when given.
#[allow(clippy::too_many_arguments)]
pub fn permutation_group_ablation<E: Executor>(
    model: &LstmModel,
    vocab: &Vocabulary,
    set: &StimulusSet,
    condition: Option<Condition>,
    targets: &[UnitRef],
    universe: Option<&[UnitRef]>,
    n_random: usize,
    seed: u64,
    mode: AblationMode,
    exec: &E,
) -> Result<PermutationTestResult> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no target units".into()));
    }
    for u in targets {
        u.validate(&model.dims)?;
    }
    let pool: Vec<UnitRef> = match universe {
        Some(u) => u.iter().copied().filter(|x| !targets.contains(x)).collect(),
        None => UnitRef::all(&model.dims)
            .into_iter()
            .filter(|x| !targets.contains(x))
            .collect(),
    };
    if pool.len() < targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} candidate units cannot supply random groups of {}",
            pool.len(),
            targets.len()
        )));
    }
    let chosen: Vec<&Stimulus> = set
        .stimuli
        .iter()
        .filter(|s| condition.is_none_or(|c| s.condition == c))
        .collect();
    if chosen.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, have: 0 });
    }
    let enc = encode_stimuli(vocab, chosen)?;
    let eos = vocab.eos();
    let full_accuracy = pooled_accuracy(model, eos, &enc, &AblationMask::none())?;
    let observed_accuracy = pooled_accuracy(
        model,
        eos,
        &enc,
        &AblationMask::of(targets.iter().copied()).with_mode(mode),
    )?;
    let draw_seed = rng::derive_seed(seed, "permutation");
    let k = targets.len();
    let (enc, pool) = (&enc, &pool);
    let null = exec
        .map((0..n_random).collect(), |i| {
            let mut r = rng::from_seed(rng::derive_index(draw_seed, i as u64));
            let group = index::sample(&mut r, pool.len(), k).into_iter().map(|j| pool[j]);
            pooled_accuracy(model, eos, enc, &AblationMask::of(group).with_mode(mode))
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let task_condition = match condition {
        Some(c) => format!("{}/{}", set.task.name(), c),
        None => String::from(set.task.name()),
    };
    Ok(PermutationTestResult {
        targets: targets.to_vec(),
        task_condition,
        full_accuracy,
        observed_accuracy,
        n_random,
        seed,
        p_value: permutation_p_value(observed_accuracy, &null),
        null,
    })
}
