use std::collections::BTreeSet;
use std::path::PathBuf;

use agreelab_core::agreement::{
    ablation_sweep, identify_lr_units, permutation_group_ablation, task_accuracy, LrUnit,
    PermutationTestResult, SweepConfig, SweepReport,
};
use agreelab_core::connectivity::{
    activity_stats, effective_afferents_from_stats, efferent_profile, mutual_inhibition_check,
    EffectiveAfferent, EfferentProfile, MutualInhibitionReport,
};
use agreelab_core::decoding::{
    depth_regression, gat_from_features, identify_sr_units_from_features, stimulus_traces,
    time_features, DepthRegressionResult, GatMatrix, SrCandidate, StateKind, UnitSelection,
};
use agreelab_core::exec::Executor;
use agreelab_core::grammar::{Condition, Number, Stimulus, StimulusSet, Template};
use agreelab_core::lstm::{
    forward_sentence, AblationMask, ActivationTrace, Gate, UnitRef,
};
use agreelab_core::rng;
use agreelab_core::stats;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{data, paths, Workspace};
use crate::error::{AppError, AppResult};
use crate::plot::{Figure, Panel, Series, StripPoint, PALETTE};

fn condition_color(c: Condition) -> &'static str {
    match (c.subject, c.intervening) {
        (Number::Singular, Some(Number::Singular)) | (Number::Singular, None) => PALETTE[0],
        (Number::Singular, Some(Number::Plural)) => "#6baed6",
        (Number::Plural, Some(Number::Plural)) | (Number::Plural, None) => PALETTE[1],
        (Number::Plural, Some(Number::Singular)) => "#fc9272",
    }
}

fn fmt_units(us: &[UnitRef]) -> String {
    us.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(",")
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub task: Template,
    pub condition: Condition,
    pub n: usize,
    pub full: f64,
    /// Accuracy with the configured mask applied.
    pub masked: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub mask: Vec<UnitRef>,
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    pub fn get(&self, task: Template, condition: &str) -> Option<&AccuracyRow> {
        self.rows
            .iter()
            .find(|r| r.task == task && r.condition.label() == condition)
    }
}

fn mask_of(ws: &Workspace, units: &[UnitRef]) -> AblationMask {
    AblationMask::of(units.iter().copied()).with_mode(ws.cfg.analysis.ablation_mode)
}

pub(super) fn eval(ws: &Workspace) -> AppResult<Vec<PathBuf>> {
    let (model, vocab) = ws.load_model()?;
    let mask_units = ws.cfg.analysis.eval_mask.clone();
    let mask = mask_of(ws, &mask_units);
    let sets = ws
        .cfg
        .data
        .tasks
        .iter()
        .map(|&t| ws.load_task(t))
        .collect::<AppResult<Vec<_>>>()?;
    let results = ws.pool.map(sets, |set| -> agreelab_core::Result<_> {
        let full = task_accuracy(&model, &vocab, &set, &AblationMask::none())?;
        let masked = if mask.is_empty() {
            None
        } else {
            Some(task_accuracy(&model, &vocab, &set, &mask)?)
        };
        Ok((full, masked))
    });
    let mut rows = Vec::new();
    for r in results {
        let (full, masked) = r?;
        for (k, a) in full.iter().enumerate() {
            rows.push(AccuracyRow {
                task: a.task,
                condition: a.condition,
                n: a.n,
                full: a.accuracy,
                masked: masked.as_ref().map(|m| m[k].accuracy),
            });
        }
    }
    let table = AccuracyTable {
        mask: mask_units,
        rows,
    };
    let mut header = vec!["task", "condition", "n", "full"];
    if !table.mask.is_empty() {
        header.push("masked");
    }
    let csv_rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.task.name().to_string(),
                r.condition.label(),
                r.n.to_string(),
                format!("{:.4}", r.full),
            ];
            if let Some(m) = r.masked {
                v.push(format!("{m:.4}"));
            }
            v
        })
        .collect();
    Ok(vec![
        ws.write_json(paths::ACCURACY_JSON, &table)?,
        ws.write_csv(paths::ACCURACY_CSV, &header, &csv_rows)?,
    ])
}

// ---------------------------------------------------------------- ablate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSummary {
    pub task: Template,
    pub tolerance: f64,
    pub threshold: f64,
    pub units: Vec<LrUnit>,
    /// Strongest long-range unit of each number.
    pub singular: Option<UnitRef>,
    pub plural: Option<UnitRef>,
    /// Every unit flagged by the sweep, long-range or not.
    pub flagged: Vec<UnitRef>,
}

impl LrSummary {
    pub fn unit_refs(&self) -> Vec<UnitRef> {
        self.units.iter().map(|u| u.unit).collect()
    }

    pub fn primary(&self) -> Vec<UnitRef> {
        self.singular.iter().chain(&self.plural).copied().collect()
    }
}

fn strongest(units: &[LrUnit], n: Number) -> Option<UnitRef> {
    units
        .iter()
        .filter(|u| u.number == n)
        .max_by(|a, b| a.delta.total_cmp(&b.delta).then(b.unit.cmp(&a.unit)))
        .map(|u| u.unit)
}

pub(super) fn ablate(ws: &Workspace) -> AppResult<Vec<PathBuf>> {
    let a = &ws.cfg.analysis;
    let (model, vocab) = ws.load_model()?;
    let sweep_sets = a
        .sweep_tasks
        .iter()
        .map(|&t| ws.load_task(t))
        .collect::<AppResult<Vec<_>>>()?;
    let cfg = SweepConfig {
        threshold: a.sweep_threshold,
        mode: a.ablation_mode,
    };
    let report = ablation_sweep(&model, &vocab, &sweep_sets, &UnitRef::all(&model.dims), &cfg, &ws.pool)?;
    let lr_task = if a.sweep_tasks.contains(&Template::NounPP) {
        Template::NounPP
    } else {
        a.sweep_tasks[0]
    };
    let units = identify_lr_units(&report, lr_task, a.lr_tolerance);
    let summary = LrSummary {
        task: lr_task,
        tolerance: a.lr_tolerance,
        threshold: a.sweep_threshold,
        singular: strongest(&units, Number::Singular),
        plural: strongest(&units, Number::Plural),
        flagged: report.effects.iter().filter(|e| e.is_flagged()).map(|e| e.unit).collect(),
        units,
    };

    let mut out = vec![ws.write_json(paths::SWEEP_JSON, &report)?];
    out.push(ws.write_csv(
        paths::SWEEP_CSV,
        &["unit", "task", "condition", "full", "ablated", "delta", "flagged", "number_dependence"],
        &sweep_rows(&report),
    )?);
    out.push(ws.write_json(paths::LR_UNITS, &summary)?);

    // Accuracy of every task under each long-range unit's ablation, plus
    // the full model, as one table.
    let columns = summary.unit_refs();
    let sets = ws
        .cfg
        .data
        .tasks
        .iter()
        .map(|&t| ws.load_task(t))
        .collect::<AppResult<Vec<_>>>()?;
    let mut header: Vec<String> = vec!["task".into(), "condition".into()];
    header.extend(columns.iter().map(|u| u.to_string()));
    header.push("Full".into());
    let mut rows = Vec::new();
    for set in &sets {
        let full = task_accuracy(&model, &vocab, set, &AblationMask::none())?;
        let ablated = ws
            .pool
            .map(columns.clone(), |u| task_accuracy(&model, &vocab, set, &mask_of(ws, &[u])))
            .into_iter()
            .collect::<agreelab_core::Result<Vec<_>>>()?;
        for (k, f) in full.iter().enumerate() {
            let mut row = vec![set.task.name().to_string(), f.condition.label()];
            row.extend(ablated.iter().map(|acc| format!("{:.1}", 100.0 * acc[k].accuracy)));
            row.push(format!("{:.1}", 100.0 * f.accuracy));
            rows.push(row);
        }
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.push(ws.write_csv(paths::TABLE2_CSV, &header_refs, &rows)?);
    Ok(out)
}

fn sweep_rows(report: &SweepReport) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for e in &report.effects {
        for d in &e.deltas {
            rows.push(vec![
                e.unit.to_string(),
                d.task.name().to_string(),
                d.condition.label(),
                format!("{:.4}", d.full),
                format!("{:.4}", d.ablated),
                format!("{:.2}", d.delta),
                d.flagged.to_string(),
                e.number_dependence
                    .map_or(String::new(), |n| format!("{n:?}").to_lowercase()),
            ]);
        }
    }
    rows
}

// ---------------------------------------------------------------- traces

const QUANTITIES: [&str; 6] = ["i", "f", "ctilde", "c", "o", "h"];

fn quantity(tr: &ActivationTrace, t: usize, u: UnitRef, q: &str) -> f64 {
    let (l, k) = u.index();
    let s = &tr.steps[t].layers[l];
    match q {
        "i" => s.i[k],
        "f" => s.f[k],
        "ctilde" => s.g[k],
        "c" => s.c[k],
        "o" => s.o[k],
        _ => s.h[k],
    }
}

/// Mean and SD over `traces` of one quantity at every timestep.
fn mean_sd(traces: &[&ActivationTrace], u: UnitRef, q: &str) -> (Vec<f64>, Vec<f64>) {
    let len = traces.first().map_or(0, |t| t.len());
    (0..len)
        .map(|t| {
            let xs: Vec<f64> = traces.iter().map(|tr| quantity(tr, t, u, q)).collect();
            (stats::mean(&xs), stats::pop_sd(&xs))
        })
        .unzip()
}

/// Word labels for aligned template stimuli: the word where all stimuli
/// agree, else both number forms.
fn position_labels(stimuli: &[Stimulus]) -> Vec<String> {
    let Some(first) = stimuli.first() else { return Vec::new() };
    (0..first.tokens.len())
        .map(|t| {
            let mut forms: Vec<&str> = stimuli.iter().map(|s| s.tokens[t].as_str()).collect();
            forms.sort();
            forms.dedup();
            if forms.len() == 1 {
                forms[0].to_string()
            } else if first.subject_pos == t {
                "subject".into()
            } else if first.intervening_pos == Some(t) {
                "noun2".into()
            } else if first.verb_pos == t {
                "verb".into()
            } else {
                format!("w{}", t + 1)
            }
        })
        .collect()
}

fn trace_units(ws: &Workspace) -> AppResult<Vec<UnitRef>> {
    let lr = ws.lr_units()?;
    let set: BTreeSet<UnitRef> = lr.unit_refs().into_iter().chain(lr.flagged.iter().copied()).collect();
    Ok(set.into_iter().collect())
}

pub(super) fn traces(ws: &Workspace) -> AppResult<Vec<PathBuf>> {
    let (model, vocab) = ws.load_model()?;
    let set = ws.load_task(Template::NounPP)?;
    let mask = mask_of(ws, &ws.cfg.analysis.eval_mask);
    let traces = stimulus_traces(&model, &vocab, &set.stimuli, &mask, &ws.pool)?;
    let labels = position_labels(&set.stimuli);
    let mut out = Vec::new();
    for u in trace_units(ws)? {
        let mut fig = Figure::new(format!("{u}: gates and cell state on NounPP"), 3);
        let mut rows = Vec::new();
        for q in QUANTITIES {
            let mut series = Vec::new();
            for &c in &set.conditions {
                let of: Vec<&ActivationTrace> = set
                    .stimuli
                    .iter()
                    .zip(&traces)
                    .filter(|(s, _)| s.condition == c)
                    .map(|(_, t)| t)
                    .collect();
                if of.is_empty() {
                    continue;
                }
                let (m, sd) = mean_sd(&of, u, q);
                for t in 0..m.len() {
                    rows.push(vec![
                        c.label(),
                        q.to_string(),
                        t.to_string(),
                        labels[t].clone(),
                        u.layer.to_string(),
                        u.unit.to_string(),
                        format!("{:.6}", m[t]),
                        format!("{:.6}", sd[t]),
                    ]);
                }
                series.push(Series::new(c.label(), condition_color(c), m).with_err(sd));
            }
            let title = match q {
                "i" => "input gate i",
                "f" => "forget gate f",
                "ctilde" => "candidate C~",
                "c" => "cell state C",
                "o" => "output gate o",
                _ => "hidden state h",
            };
            let y_range = match q {
                "i" | "f" | "o" => Some((0.0, 1.0)),
                _ => None,
            };
            fig.push(Panel::Lines {
                title: title.into(),
                x_labels: labels.clone(),
                series,
                y_range,
                hline: None,
            });
        }
        let csv = paths::unit_traces_csv(u);
        out.push(ws.write_csv(
            &csv.display().to_string(),
            &["condition", "quantity", "t", "token", "layer", "unit", "mean", "sd"],
            &rows,
        )?);
        out.push(ws.write_svg(&paths::unit_traces_svg(u).display().to_string(), &fig)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------- gat

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatSelection {
    pub label: String,
    pub units: Vec<UnitRef>,
    pub kind: StateKind,
    pub matrix: GatMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatReport {
    pub task: Template,
    pub conditions: Vec<Condition>,
    pub n_stimuli: usize,
    pub labels: Vec<String>,
    pub subject_pos: usize,
    pub intervening_pos: usize,
    pub verb_pos: usize,
    pub selections: Vec<GatSelection>,
}

impl GatReport {
    pub fn selection(&self, label: &str) -> Option<&GatSelection> {
        self.selections.iter().find(|s| s.label == label)
    }

    /// Timesteps from the intervening noun up to, not including, the verb.
    pub fn after_window(&self) -> std::ops::Range<usize> {
        self.intervening_pos..self.verb_pos
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrReport {
    pub task: Template,
    pub conditions: Vec<Condition>,
    pub window: (usize, usize),
    pub min_auc: f64,
    pub swap_below: f64,
    /// Flagged units, excluding long-range units.
    pub units: Vec<UnitRef>,
    pub candidates: Vec<SrCandidate>,
}

pub const MINUS_LR: &str = "all minus LR";

pub(super) fn gat(ws: &Workspace) -> AppResult<Vec<PathBuf>> {
    let a = &ws.cfg.analysis;
    let (model, vocab) = ws.load_model()?;
    let lr = ws.lr_units()?;
    let full = ws.load_task(Template::NounPP)?;
    let incongruent: Vec<Condition> = full.conditions.iter().copied().filter(|c| !c.is_congruent()).collect();
    let set = full.filtered(&incongruent);
    let first = set
        .stimuli
        .first()
        .ok_or_else(|| AppError::Config("NounPP set has no incongruent stimuli".into()))?;
    let subject_pos = first.subject_pos;
    let intervening_pos = first
        .intervening_pos
        .ok_or_else(|| AppError::Config("NounPP stimuli lack an intervening noun".into()))?;
    let verb_pos = first.verb_pos;
    let traces = stimulus_traces(&model, &vocab, &set.stimuli, &AblationMask::none(), &ws.pool)?;
    let y: Vec<bool> = set.stimuli.iter().map(|s| s.condition.subject == Number::Plural).collect();

    // Short-range units: every unit's cell state on its own.
    let all_cells = UnitSelection::all_except("all", &model.dims, &[], StateKind::Cell);
    let cell_feats = time_features(&traces, &all_cells)?;
    let candidates = identify_sr_units_from_features(
        &cell_feats,
        &y,
        &all_cells.units,
        subject_pos,
        (intervening_pos, verb_pos),
        &a.sr,
    )?;
    let lr_units = lr.unit_refs();
    let sr = SrReport {
        task: Template::NounPP,
        conditions: incongruent.clone(),
        window: (intervening_pos, verb_pos),
        min_auc: a.sr.min_auc,
        swap_below: a.sr.swap_below,
        units: candidates
            .iter()
            .filter(|c| c.flagged && !lr_units.contains(&c.unit))
            .map(|c| c.unit)
            .collect(),
        candidates,
    };

    let mut selections = vec![UnitSelection::all_except(MINUS_LR, &model.dims, &lr_units, a.gat_state)];
    for u in &lr_units {
        selections.push(UnitSelection::new(&u.to_string(), vec![*u], StateKind::Cell));
    }
    let matrices = ws.pool.map(selections, |sel| -> AppResult<GatSelection> {
        let feats = time_features(&traces, &sel)?;
        let matrix = gat_from_features(&sel.label, &feats, &y, subject_pos, &a.gat)?;
        Ok(GatSelection {
            label: sel.label.clone(),
            units: sel.units.clone(),
            kind: sel.kind,
            matrix,
        })
    });
    let report = GatReport {
        task: Template::NounPP,
        conditions: incongruent,
        n_stimuli: set.stimuli.len(),
        labels: position_labels(&set.stimuli),
        subject_pos,
        intervening_pos,
        verb_pos,
        selections: matrices.into_iter().collect::<AppResult<Vec<_>>>()?,
    };

    let mut rows = Vec::new();
    for s in &report.selections {
        for (t, (m, sd)) in s.matrix.mean.iter().zip(&s.matrix.sd).enumerate() {
            rows.push(vec![
                s.label.clone(),
                s.matrix.train_time.to_string(),
                t.to_string(),
                report.labels[t].clone(),
                format!("{m:.6}"),
                format!("{sd:.6}"),
            ]);
        }
    }
    let mut fig = Figure::new("Decoding subject number across time (NounPP, incongruent)", 2);
    fig.push(Panel::Lines {
        title: format!("decoder trained at '{}'", report.labels[subject_pos]),
        x_labels: report.labels.clone(),
        series: report
            .selections
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let se = Series::new(s.label.clone(), PALETTE[k % PALETTE.len()], s.matrix.mean.clone())
                    .with_err(s.matrix.sd.clone());
                if s.label == MINUS_LR {
                    se.dashed()
                } else {
                    se
                }
            })
            .collect(),
        y_range: Some((0.0, 1.0)),
        hline: Some(0.5),
    });
    let mut sr_fig = Figure::new("Single-unit decoding, flagged short-range units", 2);
    sr_fig.push(Panel::Lines {
        title: "AUC of cell state (orientation fixed at subject)".into(),
        x_labels: report.labels.clone(),
        series: sr
            .candidates
            .iter()
            .filter(|c| sr.units.contains(&c.unit) || lr_units.contains(&c.unit))
            .enumerate()
            .map(|(k, c)| {
                let se = Series::new(c.unit.to_string(), PALETTE[k % PALETTE.len()], c.auc_over_time.clone());
                if lr_units.contains(&c.unit) {
                    se.dashed()
                } else {
                    se
                }
            })
            .collect(),
        y_range: Some((0.0, 1.0)),
        hline: Some(0.5),
    });
    Ok(vec![
        ws.write_json(paths::SR_UNITS, &sr)?,
        ws.write_json(paths::GAT_JSON, &report)?,
        ws.write_csv(paths::GAT_CSV, &["selection", "train_t", "test_t", "token", "auc_mean", "auc_sd"], &rows)?,
        ws.write_svg(paths::GAT_SVG, &fig)?,
        ws.write_svg(paths::SR_SVG, &sr_fig)?,
    ])
}

// ---------------------------------------------------------------- depth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntaxReport {
    pub units: Vec<UnitRef>,
    pub regression: DepthRegressionResult,
}

pub(super) fn depth(ws: &Workspace) -> AppResult<Vec<PathBuf>> {
    let a = &ws.cfg.analysis;
    let (model, vocab) = ws.load_model()?;
    let dataset = data::load_depth(ws)?;
    let freq: Option<std::collections::BTreeMap<String, f64>> = if a.depth_frequency {
        Some(ws.read_json(paths::LOG_FREQ)?)
    } else {
        None
    };
    let mut cfg = a.depth.clone();
    cfg.use_frequency = a.depth_frequency;
    let (_features, result) = depth_regression(&model, &vocab, &dataset, freq.as_ref(), &cfg, &ws.pool)?;
    let mut units: Vec<UnitRef> = result.outliers.iter().map(|w| w.unit).collect();
    units.sort();
    let report = SyntaxReport {
        units: units.clone(),
        regression: result,
    };
    let rows: Vec<Vec<String>> = report
        .regression
        .weights
        .iter()
        .map(|w| {
            vec![
                w.unit.to_string(),
                format!("{:.6}", w.weight),
                units.contains(&w.unit).to_string(),
            ]
        })
        .collect();
    let mut out = vec![
        ws.write_json(paths::DEPTH_JSON, &report.regression)?,
        ws.write_json(paths::SYNTAX, &report)?,
        ws.write_csv(paths::DEPTH_CSV, &["unit", "weight", "outlier"], &rows)?,
    ];

    let mut wfig = Figure::new(
        format!(
            "Depth regression weights (R2 = {:.3} +/- {:.3})",
            report.regression.r2_mean, report.regression.r2_sd
        ),
        1,
    );
    wfig.push(Panel::Strip {
        title: format!("standardized weights, outliers at {} SD", report.regression.outlier_k),
        groups: (1..=model.dims.n_layers)
            .map(|l| {
                let pts = report
                    .regression
                    .weights
                    .iter()
                    .filter(|w| w.unit.layer == l)
                    .map(|w| StripPoint {
                        value: w.weight,
                        label: units.contains(&w.unit).then(|| w.unit.to_string()),
                        highlight: units.contains(&w.unit),
                    })
                    .collect();
                (format!("layer {l}"), pts)
            })
            .collect(),
    });
    out.push(ws.write_svg(paths::DEPTH_SVG, &wfig)?);

    // Cell activity of each syntax unit: mean over the NounPP task and on
    // a few depth-annotated sentences.
    let nounpp = ws.load_task(Template::NounPP)?;
    let np_traces = stimulus_traces(&model, &vocab, &nounpp.stimuli, &AblationMask::none(), &ws.pool)?;
    let np_labels = position_labels(&nounpp.stimuli);
    let examples: Vec<_> = dataset.sentences.iter().take(3).collect();
    let example_traces = examples
        .iter()
        .map(|s| -> AppResult<ActivationTrace> {
            let ids = vocab.encode(&s.tokens)?;
            Ok(forward_sentence(&model, &ids, vocab.eos(), &AblationMask::none(), true)?
                .trace
                .expect("trace was requested"))
        })
        .collect::<AppResult<Vec<_>>>()?;
    let mut fig = Figure::new("Syntax units: cell state", 1 + examples.len());
    for &u in units.iter().take(6) {
        let mut series = Vec::new();
        for &c in &nounpp.conditions {
            let of: Vec<&ActivationTrace> = nounpp
                .stimuli
                .iter()
                .zip(&np_traces)
                .filter(|(s, _)| s.condition == c)
                .map(|(_, t)| t)
                .collect();
            if of.is_empty() {
                continue;
            }
            let (m, sd) = mean_sd(&of, u, "c");
            series.push(Series::new(c.label(), condition_color(c), m).with_err(sd));
        }
        fig.push(Panel::Lines {
            title: format!("{u} on NounPP"),
            x_labels: np_labels.clone(),
            series,
            y_range: None,
            hline: Some(0.0),
        });
        for (s, tr) in examples.iter().zip(&example_traces) {
            let c: Vec<f64> = (0..tr.len()).map(|t| quantity(tr, t, u, "c")).collect();
            let d: Vec<f64> = s.depths.iter().map(|&x| x as f64).collect();
            fig.push(Panel::Lines {
                title: format!("{u}, depth-annotated sentence"),
                x_labels: s.tokens.clone(),
                series: vec![
                    Series::new("cell", PALETTE[0], c),
                    Series::new("open nodes", PALETTE[7], d).dashed(),
                ],
                y_range: None,
                hline: Some(0.0),
            });
        }
    }
    out.push(ws.write_svg(paths::SYNTAX_SVG, &fig)?);
    Ok(out)
}

// ---------------------------------------------------------------- connectivity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedUnit {
    pub unit: UnitRef,
    pub roles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub units: Vec<NamedUnit>,
    pub random_units: Vec<UnitRef>,
    /// Top-layer units only: lower layers have no output weights.
    pub efferent: Vec<EfferentProfile>,
    pub afferent: Vec<EffectiveAfferent>,
    pub mutual_inhibition: Option<MutualInhibitionReport>,
    /// Timesteps `[lo, hi)` of the NounPP traces used for the
    /// mutual-inhibition activity check.
    pub span: (usize, usize),
    pub notes: Vec<String>,
}

impl ConnectivityReport {
    pub fn efferent_of(&self, u: UnitRef) -> Option<&EfferentProfile> {
        self.efferent.iter().find(|e| e.unit == u)
    }
}

fn add_role(units: &mut Vec<NamedUnit>, u: UnitRef, role: &str) {
    match units.iter_mut().find(|n| n.unit == u) {
        Some(n) => {
            if !n.roles.iter().any(|r| r == role) {
                n.roles.push(role.into());
            }
        }
        None => units.push(NamedUnit {
            unit: u,
            roles: vec![role.into()],
        }),
    }
}

pub(super) fn connectivity(ws: &Workspace) -> AppResult<Vec<PathBuf>> {
    let a = &ws.cfg.analysis;
    let (model, vocab) = ws.load_model()?;
    let lr = ws.lr_units()?;
    let sr: SrReport = ws.read_json(paths::SR_UNITS)?;
    let syntax: SyntaxReport = ws.read_json(paths::SYNTAX)?;
    let verbs = ws.cfg.eval_lexicon()?.verbs;
    let top = model.dims.n_layers;

    let mut units: Vec<NamedUnit> = Vec::new();
    for u in &lr.units {
        let role = match u.number {
            Number::Singular => "LR singular",
            Number::Plural => "LR plural",
        };
        add_role(&mut units, u.unit, role);
    }
    for &u in &lr.flagged {
        add_role(&mut units, u, "ablation flagged");
    }
    for &u in &sr.units {
        add_role(&mut units, u, "SR");
    }
    for &u in &syntax.units {
        add_role(&mut units, u, "syntax");
    }
    let named: BTreeSet<UnitRef> = units.iter().map(|n| n.unit).collect();
    let mut pool: Vec<UnitRef> = UnitRef::of_layer(&model.dims, top)
        .into_iter()
        .filter(|u| !named.contains(u))
        .collect();
    let mut r = rng::stream(ws.cfg.seed, "random-units");
    pool.shuffle(&mut r);
    let mut random_units: Vec<UnitRef> = pool.into_iter().take(a.random_units).collect();
    random_units.sort();
    for &u in &random_units {
        add_role(&mut units, u, "random");
    }
    units.sort_by_key(|n| n.unit);

    let mut notes = Vec::new();
    let mut efferent = Vec::new();
    for n in &units {
        if n.unit.layer == top {
            efferent.push(efferent_profile(&model, &vocab, n.unit, &verbs)?);
        } else {
            notes.push(format!(
                "{} ({}) is in layer {}, which has no output weights",
                n.unit,
                n.roles.join(", "),
                n.unit.layer
            ));
        }
    }

    let nounpp = ws.load_task(Template::NounPP)?;
    let traces = stimulus_traces(&model, &vocab, &nounpp.stimuli, &AblationMask::none(), &ws.pool)?;
    let activity = activity_stats(&traces, &model.dims)?;
    let mut afferent = Vec::new();
    for u in lr.unit_refs() {
        for gate in [Gate::Input, Gate::Forget, Gate::Candidate, Gate::Output] {
            afferent.push(effective_afferents_from_stats(
                &model,
                u,
                gate,
                &activity,
                a.afferent_population,
                a.afferent_threshold,
            )?);
        }
    }
    let first = &nounpp.stimuli[0];
    let span = (first.subject_pos, first.verb_pos);
    let mutual_inhibition = match (lr.singular, lr.plural) {
        (Some(s), Some(p)) if s.layer == p.layer => {
            // Each unit's activity is read on sentences whose subject
            // carries its number.
            Some(mutual_inhibition_check(&model, s, p, &traces, Some(span))?)
        }
        (Some(s), Some(p)) => {
            notes.push(format!("{s} and {p} are in different layers; no mutual-inhibition check"));
            None
        }
        _ => {
            notes.push("no singular/plural long-range pair; no mutual-inhibition check".into());
            None
        }
    };
    let report = ConnectivityReport {
        units,
        random_units,
        efferent,
        afferent,
        mutual_inhibition,
        span,
        notes,
    };

    let mut eff_rows = Vec::new();
    for e in &report.efferent {
        for (form, w) in &e.singular {
            eff_rows.push(vec![e.unit.to_string(), "singular".into(), form.clone(), format!("{w:.6}")]);
        }
        for (form, w) in &e.plural {
            eff_rows.push(vec![e.unit.to_string(), "plural".into(), form.clone(), format!("{w:.6}")]);
        }
    }
    let mut aff_rows = Vec::new();
    for af in &report.afferent {
        for s in &af.sources {
            aff_rows.push(vec![
                af.target.to_string(),
                af.gate.symbol().to_string(),
                s.source.to_string(),
                format!("{:.6}", s.raw),
                format!("{:.6}", s.scale),
                format!("{:.6}", s.effective),
                format!("{:.6}", s.mean_activity),
                format!("{:.4}", s.z),
                s.outlier.to_string(),
            ]);
        }
    }

    let roles_of = |u: UnitRef| {
        report
            .units
            .iter()
            .find(|n| n.unit == u)
            .map_or(String::new(), |n| n.roles.join(", "))
    };
    let mut efig = Figure::new("Efferent weights to verb forms", 3);
    for e in &report.efferent {
        let pts = |xs: &[(String, f64)]| {
            xs.iter()
                .map(|(_, w)| StripPoint {
                    value: *w,
                    label: None,
                    highlight: false,
                })
                .collect::<Vec<_>>()
        };
        efig.push(Panel::Strip {
            title: format!("{} [{}] segregation {:.2}", e.unit, roles_of(e.unit), e.segregation),
            groups: vec![("singular".into(), pts(&e.singular)), ("plural".into(), pts(&e.plural))],
        });
    }
    let mut afig = Figure::new(
        format!("Effective afferent weights (z), outliers at |z| > {}", a.afferent_threshold),
        2,
    );
    for af in report
        .afferent
        .iter()
        .filter(|af| matches!(af.gate, Gate::Input | Gate::Forget))
    {
        let pts = af
            .sources
            .iter()
            .map(|s| StripPoint {
                value: s.z,
                label: s.outlier.then(|| s.source.to_string()),
                highlight: s.outlier,
            })
            .collect();
        let gate = if af.gate == Gate::Input { "input" } else { "forget" };
        afig.push(Panel::Strip {
            title: format!("into {} {gate} gate", af.target),
            groups: vec![(format!("{} sources", af.sources.len()), pts)],
        });
    }
    Ok(vec![
        ws.write_json(paths::CONNECTIVITY_JSON, &report)?,
        ws.write_csv(paths::EFFERENT_CSV, &["unit", "verb_number", "verb", "weight"], &eff_rows)?,
        ws.write_csv(
            paths::AFFERENT_CSV,
            &["target", "gate", "source", "raw", "scale", "effective", "mean_h", "z", "outlier"],
            &aff_rows,
        )?,
        ws.write_svg(paths::EFFERENT_SVG, &efig)?,
        ws.write_svg(paths::AFFERENT_SVG, &afig)?,
    ])
}

// ---------------------------------------------------------------- perm-test

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationEntry {
    pub label: String,
    pub result: Option<PermutationTestResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub tasks: Vec<Template>,
    pub mode: agreelab_core::lstm::AblationMode,
    pub tests: Vec<PermutationEntry>,
}

impl PermutationReport {
    pub fn test(&self, label: &str) -> Option<&PermutationTestResult> {
        self.tests
            .iter()
            .find(|t| t.label == label)
            .and_then(|t| t.result.as_ref())
    }
}

pub const SR_LR: &str = "SR+LR";
pub const SR_ONLY: &str = "SR only";
pub const MASK: &str = "mask";

pub(super) fn perm_test(ws: &Workspace) -> AppResult<Vec<PathBuf>> {
    let a = &ws.cfg.analysis;
    let (model, vocab) = ws.load_model()?;
    let lr = ws.lr_units()?;
    let sr: SrReport = ws.read_json(paths::SR_UNITS)?;
    // All easy tasks pooled into one stimulus list.
    let mut stimuli = Vec::new();
    for &t in &a.permutation_tasks {
        stimuli.extend(ws.load_task(t)?.stimuli);
    }
    let first_task = *a
        .permutation_tasks
        .first()
        .ok_or_else(|| AppError::Config("analysis.permutation_tasks is empty".into()))?;
    let pooled = StimulusSet {
        task: first_task,
        conditions: first_task.conditions(),
        stimuli,
    };
    let label_tasks = a
        .permutation_tasks
        .iter()
        .map(|t| t.name())
        .collect::<Vec<_>>()
        .join("+");
    let mut groups: Vec<(String, Vec<UnitRef>)> = Vec::new();
    if a.eval_mask.is_empty() {
        let mut both: Vec<UnitRef> = sr.units.iter().copied().chain(lr.unit_refs()).collect();
        both.sort();
        both.dedup();
        groups.push((SR_LR.into(), both));
        groups.push((SR_ONLY.into(), sr.units.clone()));
    } else {
        groups.push((MASK.into(), a.eval_mask.clone()));
    }
    let mut tests = Vec::new();
    for (k, (label, targets)) in groups.into_iter().enumerate() {
        if targets.is_empty() {
            tests.push(PermutationEntry {
                label,
                result: None,
                note: Some("no units in this group".into()),
            });
            continue;
        }
        let mut res = permutation_group_ablation(
            &model,
            &vocab,
            &pooled,
            None,
            &targets,
            None,
            a.permutation_draws,
            rng::derive_index(rng::derive_seed(ws.cfg.seed, "perm-test"), k as u64),
            a.ablation_mode,
            &ws.pool,
        )?;
        res.task_condition = label_tasks.clone();
        tests.push(PermutationEntry {
            label: label.to_string(),
            result: Some(res),
            note: Some(format!("targets {}", fmt_units(&targets))),
        });
    }
    let report = PermutationReport {
        tasks: a.permutation_tasks.clone(),
        mode: a.ablation_mode,
        tests,
    };
    Ok(vec![ws.write_json(paths::PERMUTATION_JSON, &report)?])
}
