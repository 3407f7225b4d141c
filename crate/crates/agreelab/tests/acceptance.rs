//! Release gate: criteria 1-13. Every test prints one `criterion N: PASS|FAIL`
//! line with the measured values; tolerances are the constants below.
//!
//! Criteria 9-13 share one desk-scale pipeline run. When a seed fails any of
//! them, the run is repeated with the next alternate seed, up to five.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use agreelab::config::RunConfig;
use agreelab::io::{self, checkpoint};
use agreelab::pipeline::{
    paths, run_stages, AccuracyTable, ConnectivityReport, GatReport, LrSummary, PermutationReport,
    Stage, Workspace, MINUS_LR, SR_LR,
};
use agreelab_core::agreement::{ablation_sweep, task_accuracy, SweepConfig, SweepReport};
use agreelab_core::connectivity::{effective_afferents_from_stats, SourcePopulation};
use agreelab_core::decoding::{auc, depth_regression_from_features, fit_ridge, gat_from_features};
use agreelab_core::decoding::{DecoderConfig, DepthRegressionConfig};
use agreelab_core::exec::Sequential;
use agreelab_core::grammar::depth::generate_depth_dataset;
use agreelab_core::grammar::template::generate_na_task;
use agreelab_core::grammar::{Lexicon, Number, Template};
use agreelab_core::lstm::{
    forward_sentence, sequence_loss_and_grad, AblationMask, AblationMode, Dims, Gate, LstmModel,
    State, UnitRef,
};
use agreelab_core::vocab::Vocabulary;
use rand::Rng;

const FORWARD_REL_TOL: f64 = 1e-12;
const FORWARD_BUDGET: Duration = Duration::from_secs(5);
const GRAD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
/// Per parameter group: `|analytic - numeric| / max(|analytic|, |numeric|, GRAD_FLOOR)`
/// in the Euclidean norm.
const GRAD_FLOOR: f64 = 1e-6;
const GRAD_BUDGET: Duration = Duration::from_secs(30);
const AUC_BUDGET: Duration = Duration::from_secs(1);
const RIDGE_TOL: f64 = 1e-10;
const LINEAR_R2_MIN: f64 = 0.999;
const CIRCUIT_STIMULI: usize = 600;
const CIRCUIT_ACC_TOL: f64 = 0.02;
const SWEEP_THRESHOLD: f64 = 10.0;
const OUTLIER_Z: f64 = 3.0;
const INJECTED_SD: f64 = 10.0;
const PER_CONDITION: usize = 600;
const MAX_POSITION_DEPTH_R: f64 = 0.2;

const SIMPLE_MIN: f64 = 0.95;
const CONGRUENT_NOUNPP_MIN: f64 = 0.70;
const LR_DROP_MIN: f64 = 10.0;
const LR_OPPOSITE_MAX: f64 = 5.0;
const MINUS_LR_AFTER_MAX: f64 = 0.5;
const LR_DECODING_MIN: f64 = 0.8;
const PERMUTATION_DRAWS: usize = 1000;
const P_MAX: f64 = 0.05;
const LR_SEGREGATION_MIN: f64 = 0.9;
const RANDOM_SEGREGATION_MAX: f64 = 0.7;
const RANDOM_UNITS: usize = 2;
const ALTERNATE_SEEDS: u64 = 5;
const PIPELINE_BUDGET: Duration = Duration::from_secs(20 * 60);
const TRAIN_BUDGET: Duration = Duration::from_secs(10 * 60);

fn report(id: u32, name: &str, pass: bool, detail: impl AsRef<str>) {
    println!(
        "criterion {id:>2}: {} {name}: {}",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
}

fn rng(seed: u64) -> agreelab_core::rng::Rng {
    agreelab_core::rng::from_seed(seed)
}

fn random_model(r: &mut impl Rng, seed: u64) -> LstmModel {
    let dims = Dims {
        vocab_size: r.gen_range(3..9),
        embed_dim: r.gen_range(1..5),
        hidden_dim: r.gen_range(1..6),
        n_layers: r.gen_range(1..4),
    };
    let mut m = LstmModel::init(dims, seed);
    // Larger weights push gates away from 0.5 so the check sees saturation.
    let gain = r.gen_range(0.5..3.0);
    for p in m.params_mut() {
        p.iter_mut().for_each(|x| *x *= gain);
    }
    m
}

// ---------------------------------------------------------------- 1

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct RefStep {
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    gates: Vec<[Vec<f64>; 4]>,
    log_probs: Vec<f64>,
}

/// Scalar-loop LSTM: every sum written out over explicit indices.
fn reference_run(m: &LstmModel, tokens: &[usize]) -> Vec<RefStep> {
    let d = m.dims;
    let hd = d.hidden_dim;
    let mut h = vec![vec![0.0; hd]; d.n_layers];
    let mut c = vec![vec![0.0; hd]; d.n_layers];
    let mut out = Vec::new();
    for &tok in tokens {
        let mut gates_all = Vec::new();
        for l in 0..d.n_layers {
            let layer = &m.layers[l];
            let input: Vec<f64> = if l == 0 {
                (0..d.embed_dim).map(|e| m.embedding.get(tok, e)).collect()
            } else {
                h[l - 1].clone()
            };
            let mut g4: [Vec<f64>; 4] = Default::default();
            for (gi, gate) in [Gate::Input, Gate::Forget, Gate::Candidate, Gate::Output].iter().enumerate() {
                g4[gi] = (0..hd)
                    .map(|u| {
                        let row = layer.gate_row(*gate, u);
                        let mut s = layer.bias[row];
                        for (k, x) in input.iter().enumerate() {
                            s += layer.w_ih.get(row, k) * x;
                        }
                        for k in 0..hd {
                            s += layer.w_hh.get(row, k) * h[l][k];
                        }
                        if *gate == Gate::Candidate {
                            s.tanh()
                        } else {
                            sigmoid(s)
                        }
                    })
                    .collect();
            }
            for u in 0..hd {
                c[l][u] = g4[1][u] * c[l][u] + g4[0][u] * g4[2][u];
                h[l][u] = g4[3][u] * c[l][u].tanh();
            }
            gates_all.push(g4);
        }
        let top = &h[d.n_layers - 1];
        let logits: Vec<f64> = (0..d.vocab_size)
            .map(|v| m.out_b[v] + (0..hd).map(|k| m.out_w.get(v, k) * top[k]).sum::<f64>())
            .collect();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + logits.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
        out.push(RefStep {
            h: h.clone(),
            c: c.clone(),
            gates: gates_all,
            log_probs: logits.iter().map(|x| x - lse).collect(),
        });
    }
    out
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn criterion_01_lstm_oracle() {
    let t0 = Instant::now();
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    let mut worst_eq: f64 = 0.0;
    for inst in 0..50u64 {
        let m = random_model(&mut r, 1000 + inst);
        let eos = 0;
        let n = r.gen_range(1..12);
        let words: Vec<usize> = (0..n).map(|_| r.gen_range(1..m.dims.vocab_size)).collect();
        let out = forward_sentence(&m, &words, eos, &AblationMask::none(), true).unwrap();
        let mut seq = vec![eos];
        seq.extend(&words);
        let reference = reference_run(&m, &seq);
        assert_eq!(out.log_probs.len(), reference.len());
        for (lp, rs) in out.log_probs.iter().zip(&reference) {
            for (a, b) in lp.iter().zip(&rs.log_probs) {
                worst = worst.max(rel_err(*a, *b));
            }
        }
        let trace = out.trace.unwrap();
        for (t, step) in trace.steps.iter().enumerate() {
            let rs = &reference[t + 1];
            for (l, snap) in step.layers.iter().enumerate() {
                let pairs = [
                    (&snap.i, &rs.gates[l][0]),
                    (&snap.f, &rs.gates[l][1]),
                    (&snap.g, &rs.gates[l][2]),
                    (&snap.o, &rs.gates[l][3]),
                    (&snap.c, &rs.c[l]),
                    (&snap.h, &rs.h[l]),
                ];
                for (a, b) in pairs {
                    for (x, y) in a.iter().zip(b) {
                        worst = worst.max(rel_err(*x, *y));
                    }
                }
                // Cell and hidden updates recomputed from the recorded gates.
                for u in 0..snap.c.len() {
                    let c_prev = if t == 0 {
                        reference[0].c[l][u]
                    } else {
                        trace.steps[t - 1].layers[l].c[u]
                    };
                    let c = snap.f[u] * c_prev + snap.i[u] * snap.g[u];
                    let h = snap.o[u] * snap.c[u].tanh();
                    worst_eq = worst_eq.max(rel_err(snap.c[u], c)).max(rel_err(snap.h[u], h));
                }
            }
        }
    }
    let elapsed = t0.elapsed();
    let pass = worst <= FORWARD_REL_TOL && worst_eq <= FORWARD_REL_TOL && elapsed < FORWARD_BUDGET;
    report(
        1,
        "LSTM forward vs scalar reference",
        pass,
        format!("50 instances, max rel err {worst:.2e}, update recomputation {worst_eq:.2e}, {elapsed:.2?}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_gradient_check() {
    let t0 = Instant::now();
    let mut r = rng(202);
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut groups = 0usize;
    for inst in 0..10u64 {
        let m = random_model(&mut r, 2000 + inst);
        let v = m.dims.vocab_size;
        let len = r.gen_range(2..8);
        let inputs: Vec<usize> = (0..len).map(|_| r.gen_range(0..v)).collect();
        let targets: Vec<usize> = (0..len).map(|_| r.gen_range(0..v)).collect();
        let init = State::zeros(&m.dims);
        let mut g = LstmModel::zeros(m.dims);
        sequence_loss_and_grad(&m, &inputs, &targets, Some(0), &init, Some(&mut g), 1.0).unwrap();
        let n_tensors = m.tensors().len();
        groups += n_tensors;
        for ti in 0..n_tensors {
            let (mut diff, mut norm_a, mut norm_n) = (0.0f64, 0.0f64, 0.0f64);
            for k in 0..m.tensors()[ti].2.len() {
                let loss = |delta: f64| {
                    let mut p = m.clone();
                    p.params_mut()[ti][k] += delta;
                    sequence_loss_and_grad(&p, &inputs, &targets, Some(0), &init, None, 1.0).unwrap().0
                };
                let numeric = (loss(GRAD_STEP) - loss(-GRAD_STEP)) / (2.0 * GRAD_STEP);
                let analytic = g.tensors()[ti].2[k];
                diff += (numeric - analytic).powi(2);
                norm_a += analytic * analytic;
                norm_n += numeric * numeric;
                worst_abs = worst_abs.max((numeric - analytic).abs());
            }
            worst = worst.max(diff.sqrt() / norm_a.sqrt().max(norm_n.sqrt()).max(GRAD_FLOOR));
        }
    }
    let elapsed = t0.elapsed();
    let pass = worst <= GRAD_REL_TOL && elapsed < GRAD_BUDGET;
    report(
        2,
        "BPTT gradients vs central differences",
        pass,
        format!("10 instances, {groups} parameter groups, max group rel err {worst:.2e}, max element abs err {worst_abs:.2e}, {elapsed:.2?}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice = 0u64;
    let (mut np, mut nn) = (0u64, 0u64);
    for (s, &l) in scores.iter().zip(labels) {
        if l {
            np += 1;
            for (t, &m) in scores.iter().zip(labels) {
                if !m {
                    twice += if s > t { 2 } else if s == t { 1 } else { 0 };
                }
            }
        } else {
            nn += 1;
        }
    }
    twice as f64 / 2.0 / (np * nn) as f64
}

#[test]
fn criterion_03_auc_oracle() {
    let t0 = Instant::now();
    let mut r = rng(303);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = r.gen_range(2..60);
        let mut labels: Vec<bool> = (0..n).map(|_| r.gen_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        // Coarse values so ties are common.
        let levels = r.gen_range(2..12);
        let scores: Vec<f64> = (0..n).map(|_| r.gen_range(0..levels) as f64 * 0.25).collect();
        if auc(&scores, &labels).unwrap() != brute_auc(&scores, &labels) {
            mismatches += 1;
        }
    }
    let elapsed = t0.elapsed();
    let pass = mismatches == 0 && elapsed < AUC_BUDGET;
    report(3, "rank AUC vs pair enumeration", pass, format!("100 instances, {mismatches} mismatches, {elapsed:.2?}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_ridge_oracle() {
    // Three points, one feature: with z-scored x the ridge weight is
    // cov(z, y) / (var(z) + lambda) and the intercept is mean(y).
    let x = vec![vec![0.0], vec![1.0], vec![2.0]];
    let y = [1.0, 2.0, 4.0];
    let mut worst: f64 = 0.0;
    for lambda in [0.0, 0.1, 0.5, 2.0, 10.0] {
        let fit = fit_ridge(&x, &y, lambda).unwrap();
        let sd = (2.0f64 / 3.0).sqrt();
        let z = [-1.0 / sd, 0.0, 1.0 / sd];
        let ym = 7.0 / 3.0;
        let cov = z.iter().zip(&y).map(|(a, b)| a * (b - ym)).sum::<f64>() / 3.0;
        worst = worst
            .max((fit.weights[0] - cov / (1.0 + lambda)).abs())
            .max((fit.intercept - ym).abs());
    }
    let mut r = rng(404);
    let xs: Vec<Vec<f64>> = (0..120).map(|_| (0..6).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let w = [1.5, -2.0, 0.3, 0.0, 4.0, -0.7];
    let ys: Vec<f64> = xs.iter().map(|row| 0.25 + row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()).collect();
    let units: Vec<UnitRef> = (1..=6).map(|u| UnitRef::new(1, u)).collect();
    let res = depth_regression_from_features(&xs, &ys, None, None, &units, &DepthRegressionConfig::default()).unwrap();
    let pass = worst <= RIDGE_TOL && res.r2_mean >= LINEAR_R2_MIN;
    report(
        4,
        "ridge closed form and nested CV",
        pass,
        format!("3-point max abs err {worst:.2e}, nested-CV R2 on linear data {:.6}", res.r2_mean),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

/// One-layer network with three units. Unit 1 stores the number of the first
/// noun and drives the verb outputs; units 2 and 3 are redundant latches
/// that close unit 1's input gate once a noun has been read. A small bias
/// favours singular verbs when unit 1 is silent.
fn constructed_circuit(vocab: &Vocabulary, lex: &Lexicon) -> LstmModel {
    let dims = Dims {
        vocab_size: vocab.len(),
        embed_dim: 2,
        hidden_dim: 3,
        n_layers: 1,
    };
    let mut m = LstmModel::zeros(dims);
    let nouns = lex.subject_object_nouns.iter().chain(&lex.location_nouns);
    for p in nouns {
        for (form, sign) in [(&p.singular, -1.0), (&p.plural, 1.0)] {
            if let Some(id) = vocab.id(form) {
                m.embedding.set(id, 0, 1.0);
                m.embedding.set(id, 1, sign);
            }
        }
    }
    let l = &mut m.layers[0];
    let row = |g: Gate, u: usize| g.block() * 3 + u;
    // number unit
    l.w_ih.set(row(Gate::Input, 0), 0, 20.0);
    l.w_hh.set(row(Gate::Input, 0), 1, -40.0);
    l.w_hh.set(row(Gate::Input, 0), 2, -40.0);
    l.bias[row(Gate::Input, 0)] = -10.0;
    l.bias[row(Gate::Forget, 0)] = 30.0;
    l.w_ih.set(row(Gate::Candidate, 0), 1, 5.0);
    l.bias[row(Gate::Output, 0)] = 30.0;
    // latches
    for u in 1..3 {
        l.w_ih.set(row(Gate::Input, u), 0, 20.0);
        l.bias[row(Gate::Input, u)] = -10.0;
        l.bias[row(Gate::Forget, u)] = 30.0;
        l.bias[row(Gate::Candidate, u)] = 5.0;
        l.bias[row(Gate::Output, u)] = 30.0;
    }
    for p in &lex.verbs {
        let s = vocab.id(&p.singular).unwrap();
        let pl = vocab.id(&p.plural).unwrap();
        m.out_w.set(s, 0, -10.0);
        m.out_w.set(pl, 0, 10.0);
        m.out_b[s] = 0.01;
    }
    m
}

#[test]
fn criterion_05_constructed_circuit_ablation() {
    let lex = Lexicon::default_eval();
    let set = generate_na_task(Template::NounPP, &lex, CIRCUIT_STIMULI / 4, 5).unwrap();
    let words = set.stimuli.iter().flat_map(|s| s.tokens.iter().cloned());
    let vocab = Vocabulary::with_reserved(words.chain(lex.all_words()));
    let m = constructed_circuit(&vocab, &lex);
    let cfg = SweepConfig {
        threshold: SWEEP_THRESHOLD,
        mode: AblationMode::Hidden,
    };
    let sweep = ablation_sweep(&m, &vocab, std::slice::from_ref(&set), &UnitRef::all(&m.dims), &cfg, &Sequential).unwrap();
    let flagged: Vec<UnitRef> = sweep.effects.iter().filter(|e| e.is_flagged()).map(|e| e.unit).collect();
    let pooled = |mask: &AblationMask| {
        let acc = task_accuracy(&m, &vocab, &set, mask).unwrap();
        let n: usize = acc.iter().map(|a| a.n).sum();
        let k: usize = acc.iter().map(|a| a.n_correct).sum();
        (n, k as f64 / n as f64)
    };
    let (n, full) = pooled(&AblationMask::none());
    let (_, ablated) = pooled(&AblationMask::of([UnitRef::new(1, 1)]));
    let pass = flagged == vec![UnitRef::new(1, 1)]
        && n == CIRCUIT_STIMULI
        && full == 1.0
        && (ablated - 0.5).abs() <= CIRCUIT_ACC_TOL;
    report(
        5,
        "constructed-circuit ablation",
        pass,
        format!(
            "flagged {:?}, intact {:.1}%, carrier ablated {:.1}% over {n} stimuli",
            flagged.iter().map(|u| u.to_string()).collect::<Vec<_>>(),
            100.0 * full,
            100.0 * ablated
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_gat_constructed_traces() {
    // Eight timesteps, subject at 1, intervening noun at 4.
    let n = 120;
    let (subject, noun2, steps) = (1, 4, 8);
    let mut r = rng(606);
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let sign = |b: bool| if b { 1.0 } else { -1.0 };
    let noise: Vec<Vec<f64>> = (0..steps).map(|_| (0..n).map(|_| r.gen_range(-0.3..0.3)).collect()).collect();
    let make = |copy_last: bool| -> Vec<Vec<Vec<f64>>> {
        (0..steps)
            .map(|t| {
                (0..n)
                    .map(|i| {
                        let bit = if copy_last && t >= noun2 { !labels[i] } else { labels[i] };
                        vec![sign(bit) + noise[t][i], noise[(t + 3) % steps][i]]
                    })
                    .collect()
            })
            .collect()
    };
    let cfg = DecoderConfig::default();
    let stable = gat_from_features("stable", &make(false), &labels, subject, &cfg).unwrap();
    let swap = gat_from_features("last noun", &make(true), &labels, subject, &cfg).unwrap();
    let before = swap.mean[..noun2].iter().cloned().fold(f64::INFINITY, f64::min);
    let after = swap.mean[noun2..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let stable_ok = stable.mean.iter().all(|&a| a == 1.0);
    let pass = stable_ok && before >= 0.95 && after <= 0.05;
    report(
        6,
        "decoding across time on constructed traces",
        pass,
        format!(
            "stable code min AUC {:.3}; last-noun copy min before {before:.3}, max after {after:.3}",
            stable.mean.iter().cloned().fold(f64::INFINITY, f64::min)
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_07_afferent_outlier() {
    let mut r = rng(707);
    let hidden = 60;
    let mut unique = 0;
    for trial in 0..100u64 {
        let dims = Dims {
            vocab_size: 4,
            embed_dim: 2,
            hidden_dim: hidden,
            n_layers: 1,
        };
        let mut m = LstmModel::init(dims, 7000 + trial);
        let target = UnitRef::new(1, r.gen_range(1..=hidden));
        let gate = [Gate::Input, Gate::Forget][r.gen_range(0..2)];
        let activity: Vec<Vec<(f64, f64)>> =
            vec![(0..hidden).map(|_| (r.gen_range(0.5..1.0), r.gen_range(-0.5..0.5))).collect()];
        let row = m.layers[0].gate_row(gate, target.unit - 1);
        let eff: Vec<f64> = (0..hidden).map(|s| m.layers[0].w_hh.get(row, s) * activity[0][s].0).collect();
        let mean = eff.iter().sum::<f64>() / hidden as f64;
        let sd = (eff.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / hidden as f64).sqrt();
        let src = r.gen_range(0..hidden);
        let dir = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        let value = (mean + dir * INJECTED_SD * sd) / activity[0][src].0;
        m.layers[0].w_hh.set(row, src, value);
        let res = effective_afferents_from_stats(&m, target, gate, &activity, SourcePopulation::SameLayer, OUTLIER_Z)
            .unwrap();
        let out: Vec<UnitRef> = res.outliers().iter().map(|s| s.source).collect();
        if out == vec![UnitRef::new(1, src + 1)] {
            unique += 1;
        }
    }
    let pass = unique == 100;
    report(7, "injected afferent outlier", pass, format!("flagged uniquely in {unique}/100 populations"));
    assert!(pass);
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_dataset_contracts() {
    let cfg = RunConfig::default();
    let lex = cfg.eval_lexicon().unwrap();
    let mut bad_counts = Vec::new();
    for t in Template::NA_TASKS {
        let set = generate_na_task(t, &lex, PER_CONDITION, 8).unwrap();
        for c in t.conditions() {
            if set.count(c) != PER_CONDITION {
                bad_counts.push(format!("{} {}: {}", t.name(), c.label(), set.count(c)));
            }
        }
    }
    let ds = generate_depth_dataset(&cfg.data.depth, 8).unwrap();
    let reached: Vec<usize> = ds
        .cell_counts
        .iter()
        .filter(|(c, _)| !ds.empty_cells.contains(c))
        .map(|&(_, n)| n)
        .collect();
    let spread = reached.iter().max().unwrap() - reached.iter().min().unwrap();
    // Correlation recomputed from the retained points.
    let pts: Vec<(f64, f64)> = ds
        .sentences
        .iter()
        .flat_map(|s| s.retained.iter().map(|&(p, d)| (p as f64, d as f64)))
        .collect();
    let n = pts.len() as f64;
    let (mp, md) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let cov: f64 = pts.iter().map(|p| (p.0 - mp) * (p.1 - md)).sum();
    let vp: f64 = pts.iter().map(|p| (p.0 - mp).powi(2)).sum();
    let vd: f64 = pts.iter().map(|p| (p.1 - md).powi(2)).sum();
    let r = cov / (vp * vd).sqrt();
    let pass = bad_counts.is_empty() && spread <= 1 && r.abs() < MAX_POSITION_DEPTH_R;
    report(
        8,
        "dataset contracts",
        pass,
        format!(
            "7 tasks x {PER_CONDITION}/condition ({} deviations); depth cells {} reached, {} empty, spread {spread}, r(position, depth) {r:.3}",
            bad_counts.len(),
            reached.len(),
            ds.empty_cells.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 9-13

struct Verdict {
    pass: bool,
    detail: String,
}

struct Attempt {
    seed: u64,
    elapsed: Duration,
    train: Duration,
    verdicts: BTreeMap<u32, Verdict>,
}

impl Attempt {
    fn all_pass(&self) -> bool {
        self.verdicts.values().all(|v| v.pass)
    }
}

struct Gate9To13 {
    attempts: Vec<Attempt>,
    _root: tempfile::TempDir,
}

impl Gate9To13 {
    /// The passing attempt, else the one passing most criteria (earliest on ties).
    fn chosen(&self) -> &Attempt {
        let passes = |a: &Attempt| a.verdicts.values().filter(|v| v.pass).count();
        self.attempts
            .iter()
            .rev()
            .max_by_key(|a| passes(a))
            .expect("at least one attempt")
    }
}

fn read<T: serde::de::DeserializeOwned>(dir: &Path, rel: &str) -> T {
    io::read_json(&dir.join(rel)).unwrap().1
}

fn check_9(dir: &Path) -> Verdict {
    let acc: AccuracyTable = read(dir, paths::ACCURACY_JSON);
    let get = |t: Template, c: &str| acc.get(t, c).map_or(f64::NAN, |r| r.full);
    let (s, p) = (get(Template::Simple, "S"), get(Template::Simple, "P"));
    let (ss, pp) = (get(Template::NounPP, "SS"), get(Template::NounPP, "PP"));
    Verdict {
        pass: s >= SIMPLE_MIN && p >= SIMPLE_MIN && ss >= CONGRUENT_NOUNPP_MIN && pp >= CONGRUENT_NOUNPP_MIN,
        detail: format!(
            "Simple S {:.1}% P {:.1}%, NounPP SS {:.1}% PP {:.1}%",
            100.0 * s,
            100.0 * p,
            100.0 * ss,
            100.0 * pp
        ),
    }
}

/// Units whose ablation drops one incongruent NounPP condition by more than
/// the threshold while the opposite-number conditions move by at most the
/// tolerance, read straight from the sweep deltas.
fn number_units(sweep: &SweepReport) -> Vec<(UnitRef, Number, f64)> {
    let mut out = Vec::new();
    for e in &sweep.effects {
        let np: Vec<_> = e.deltas.iter().filter(|d| d.task == Template::NounPP).collect();
        for number in [Number::Singular, Number::Plural] {
            let drop = np
                .iter()
                .filter(|d| d.condition.subject == number && d.condition.intervening.is_some_and(|i| i != number))
                .map(|d| d.delta)
                .fold(f64::NEG_INFINITY, f64::max);
            let opposite_ok = np
                .iter()
                .filter(|d| d.condition.subject != number)
                .all(|d| d.delta.abs() <= LR_OPPOSITE_MAX);
            if drop > LR_DROP_MIN && opposite_ok {
                out.push((e.unit, number, drop));
            }
        }
    }
    out
}

fn check_10(dir: &Path) -> Verdict {
    let sweep: SweepReport = read(dir, paths::SWEEP_JSON);
    let units = number_units(&sweep);
    let has = |n: Number| units.iter().any(|u| u.1 == n);
    Verdict {
        pass: has(Number::Singular) && has(Number::Plural),
        detail: format!(
            "number units {:?}",
            units.iter().map(|(u, n, d)| format!("{u} {n:?} -{d:.1}")).collect::<Vec<_>>()
        ),
    }
}

fn check_11(dir: &Path) -> Verdict {
    let gat: GatReport = read(dir, paths::GAT_JSON);
    let lr: LrSummary = read(dir, paths::LR_UNITS);
    let after = gat.intervening_pos..gat.verb_pos;
    let minus = gat.selection(MINUS_LR).map(|s| s.matrix.mean[after.clone()].iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let mut unit_mins = Vec::new();
    for u in lr.primary() {
        let min = gat
            .selection(&u.to_string())
            .map(|s| s.matrix.mean[gat.subject_pos..gat.verb_pos].iter().cloned().fold(f64::INFINITY, f64::min));
        unit_mins.push((u, min.unwrap_or(f64::NAN)));
    }
    let minus = minus.unwrap_or(f64::NAN);
    Verdict {
        pass: minus < MINUS_LR_AFTER_MAX && !unit_mins.is_empty() && unit_mins.iter().all(|(_, m)| *m > LR_DECODING_MIN),
        detail: format!(
            "minus-LR AUC after intervening noun {minus:.3}; LR units min AUC subject..verb {:?}",
            unit_mins.iter().map(|(u, m)| format!("{u} {m:.3}")).collect::<Vec<_>>()
        ),
    }
}

fn check_12(dir: &Path) -> Verdict {
    let perm: PermutationReport = read(dir, paths::PERMUTATION_JSON);
    match perm.test(SR_LR) {
        Some(t) => {
            let hits = t.null.iter().filter(|&&a| a <= t.observed_accuracy).count();
            let p = (1 + hits) as f64 / (t.null.len() + 1) as f64;
            Verdict {
                pass: t.null.len() == PERMUTATION_DRAWS && p < P_MAX && p == t.p_value,
                detail: format!(
                    "{} units ablated: accuracy {:.1}% -> {:.1}%, p = {p:.4} over {} draws",
                    t.targets.len(),
                    100.0 * t.full_accuracy,
                    100.0 * t.observed_accuracy,
                    t.null.len()
                ),
            }
        }
        None => Verdict {
            pass: false,
            detail: "no SR+LR group to test".into(),
        },
    }
}

/// Best balanced accuracy of any threshold, by enumerating every split
/// point between sorted values in both orientations.
fn brute_segregation(a: &[f64], b: &[f64]) -> f64 {
    let mut vals: Vec<f64> = a.iter().chain(b).copied().collect();
    vals.sort_by(f64::total_cmp);
    let mut cuts = vec![f64::NEG_INFINITY];
    cuts.extend(vals.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    cuts.push(f64::INFINITY);
    let mut best: f64 = 0.5;
    for c in cuts {
        let ta = a.iter().filter(|&&x| x < c).count() as f64 / a.len() as f64;
        let tb = b.iter().filter(|&&x| x >= c).count() as f64 / b.len() as f64;
        let ba = (ta + tb) / 2.0;
        best = best.max(ba).max(1.0 - ba);
    }
    best
}

fn check_13(dir: &Path, cfg: &RunConfig) -> Verdict {
    let conn: ConnectivityReport = read(dir, paths::CONNECTIVITY_JSON);
    let lr: LrSummary = read(dir, paths::LR_UNITS);
    let ck = checkpoint::load(&dir.join(paths::CHECKPOINT)).unwrap();
    let vocab = ck.vocab.unwrap();
    let verbs = cfg.eval_lexicon().unwrap().verbs;
    let top = ck.model.dims.n_layers;
    let seg = |u: UnitRef| {
        let col = u.unit - 1;
        let w = |form: &str| ck.model.out_w.get(vocab.id(form).unwrap(), col);
        let s: Vec<f64> = verbs.iter().map(|p| w(&p.singular)).collect();
        let p: Vec<f64> = verbs.iter().map(|p| w(&p.plural)).collect();
        brute_segregation(&s, &p)
    };
    let lr_top: Vec<(UnitRef, f64)> = lr.primary().into_iter().filter(|u| u.layer == top).map(|u| (u, seg(u))).collect();
    let random: Vec<(UnitRef, f64)> = conn.random_units.iter().map(|&u| (u, seg(u))).collect();
    let reported_match = lr_top
        .iter()
        .chain(&random)
        .all(|(u, s)| conn.efferent_of(*u).is_some_and(|e| (e.segregation - s).abs() < 1e-12));
    Verdict {
        pass: !lr_top.is_empty()
            && lr_top.iter().all(|(_, s)| *s >= LR_SEGREGATION_MIN)
            && random.len() == RANDOM_UNITS
            && random.iter().all(|(_, s)| *s <= RANDOM_SEGREGATION_MAX)
            && reported_match,
        detail: format!(
            "LR units {:?}, random units {:?}, lower-layer LR units without efferents {:?}",
            lr_top.iter().map(|(u, s)| format!("{u} {s:.2}")).collect::<Vec<_>>(),
            random.iter().map(|(u, s)| format!("{u} {s:.2}")).collect::<Vec<_>>(),
            lr.primary().iter().filter(|u| u.layer != top).map(|u| u.to_string()).collect::<Vec<_>>()
        ),
    }
}

fn run_attempt(root: &Path, seed: u64) -> Attempt {
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.jobs = 1;
    cfg.out = root.join(format!("seed-{seed}"));
    cfg.analysis.permutation_draws = PERMUTATION_DRAWS;
    cfg.analysis.random_units = RANDOM_UNITS;
    let ws = Workspace::new(cfg.clone()).unwrap();
    let t0 = Instant::now();
    let mut stage_start = Instant::now();
    let mut train = Duration::ZERO;
    run_stages(&ws, &Stage::ALL, true, &mut |line| {
        if line.starts_with("[train]") {
            if line.contains("done") {
                train = stage_start.elapsed();
            } else {
                stage_start = Instant::now();
            }
        }
    })
    .unwrap();
    let elapsed = t0.elapsed();
    let dir = cfg.out.clone();
    let mut verdicts = BTreeMap::new();
    verdicts.insert(9, check_9(&dir));
    verdicts.insert(10, check_10(&dir));
    verdicts.insert(11, check_11(&dir));
    verdicts.insert(12, check_12(&dir));
    verdicts.insert(13, check_13(&dir, &cfg));
    for (id, v) in &verdicts {
        println!("  seed {seed}: criterion {id} {} {}", if v.pass { "pass" } else { "fail" }, v.detail);
    }
    Attempt {
        seed,
        elapsed,
        train,
        verdicts,
    }
}

fn desk_gate() -> &'static Gate9To13 {
    static GATE: OnceLock<Gate9To13> = OnceLock::new();
    GATE.get_or_init(|| {
        let root = tempfile::tempdir().unwrap();
        let first = RunConfig::default().seed;
        let mut attempts = Vec::new();
        for seed in first..=first + ALTERNATE_SEEDS {
            let a = run_attempt(root.path(), seed);
            let done = a.all_pass();
            attempts.push(a);
            if done {
                break;
            }
        }
        Gate9To13 {
            attempts,
            _root: root,
        }
    })
}

fn desk_criterion(id: u32, name: &str) {
    let gate = desk_gate();
    let a = gate.chosen();
    let v = &a.verdicts[&id];
    let tried: Vec<u64> = gate.attempts.iter().map(|a| a.seed).collect();
    report(id, name, v.pass, format!("seed {} (tried {tried:?}): {}", a.seed, v.detail));
    let per_seed: Vec<String> = gate
        .attempts
        .iter()
        .map(|t| {
            let w = &t.verdicts[&id];
            format!("seed {}: {} {}", t.seed, if w.pass { "pass" } else { "fail" }, w.detail)
        })
        .collect();
    assert!(v.pass, "criterion {id} failed on every seed tried\n{}", per_seed.join("\n"));
}

#[test]
fn criterion_09_agreement_accuracy() {
    desk_criterion(9, "desk-scale agreement accuracy");
}

#[test]
fn criterion_10_number_units() {
    desk_criterion(10, "singular and plural long-range units");
}

#[test]
fn criterion_11_decoding_across_time() {
    desk_criterion(11, "decoding across time");
}

#[test]
fn criterion_12_group_ablation() {
    desk_criterion(12, "group ablation permutation test");
}

#[test]
fn criterion_13_efferent_segregation() {
    desk_criterion(13, "efferent segregation");
}

#[test]
fn desk_scale_budget() {
    let gate = desk_gate();
    let worst_total = gate.attempts.iter().map(|a| a.elapsed).max().unwrap();
    let worst_train = gate.attempts.iter().map(|a| a.train).max().unwrap();
    let pass = worst_total < PIPELINE_BUDGET && worst_train < TRAIN_BUDGET;
    println!(
        "budget      : {} pipeline {worst_total:.1?} (limit {PIPELINE_BUDGET:?}), training {worst_train:.1?} (limit {TRAIN_BUDGET:?}), one worker",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}
