use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use agreelab_core::lstm::UnitRef;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::analysis::{
    AccuracyTable, ConnectivityReport, GatReport, LrSummary, PermutationReport, SrReport,
    SyntaxReport, MINUS_LR,
};
use super::{load_manifest, paths, Stage, Workspace};
use crate::error::AppResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub stage: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub artifacts: Vec<Artifact>,
    /// Headline numbers per analysis, absent when the stage has not run.
    pub summary: serde_json::Map<String, Value>,
    pub cross_reference_problems: Vec<String>,
}

fn try_read<T: serde::de::DeserializeOwned>(ws: &Workspace, rel: &str) -> Option<T> {
    ws.path(rel).exists().then(|| ws.read_json(rel).ok()).flatten()
}

/// Units named by the ablation report that lack a trace plot or an entry
/// in the connectivity report.
pub fn cross_reference_problems(ws: &Workspace) -> AppResult<Vec<String>> {
    let mut problems = Vec::new();
    let Some(lr) = try_read::<LrSummary>(ws, paths::LR_UNITS) else {
        return Ok(problems);
    };
    let named: BTreeSet<UnitRef> = lr.unit_refs().into_iter().chain(lr.flagged.iter().copied()).collect();
    let conn = try_read::<ConnectivityReport>(ws, paths::CONNECTIVITY_JSON);
    for u in named {
        for p in [paths::unit_traces_csv(u), paths::unit_traces_svg(u)] {
            if !ws.path(&p).exists() {
                problems.push(format!("{u}: missing {}", p.display()));
            }
        }
        match &conn {
            Some(c) if c.units.iter().any(|n| n.unit == u) => {}
            Some(_) => problems.push(format!("{u}: absent from {}", paths::CONNECTIVITY_JSON)),
            None => problems.push(format!("{u}: {} missing", paths::CONNECTIVITY_JSON)),
        }
    }
    Ok(problems)
}

fn summary(ws: &Workspace) -> serde_json::Map<String, Value> {
    let mut s = serde_json::Map::new();
    if let Some(acc) = try_read::<AccuracyTable>(ws, paths::ACCURACY_JSON) {
        let mut m = serde_json::Map::new();
        for r in &acc.rows {
            m.insert(format!("{} {}", r.task.name(), r.condition.label()), r.full.into());
        }
        s.insert("accuracy".into(), m.into());
    }
    if let Some(lr) = try_read::<LrSummary>(ws, paths::LR_UNITS) {
        s.insert(
            "lr_units".into(),
            serde_json::json!({
                "units": lr.units,
                "singular": lr.singular,
                "plural": lr.plural,
            }),
        );
    }
    if let Some(sr) = try_read::<SrReport>(ws, paths::SR_UNITS) {
        s.insert("sr_units".into(), serde_json::to_value(&sr.units).unwrap_or_default());
    }
    if let Some(g) = try_read::<GatReport>(ws, paths::GAT_JSON) {
        let w = g.after_window();
        let mut m = serde_json::Map::new();
        for sel in &g.selections {
            let after = &sel.matrix.mean[w.clone()];
            let mean = after.iter().sum::<f64>() / after.len().max(1) as f64;
            m.insert(sel.label.clone(), mean.into());
        }
        s.insert("gat_mean_auc_after_intervening_noun".into(), m.into());
    }
    if let Some(d) = try_read::<SyntaxReport>(ws, paths::SYNTAX) {
        s.insert(
            "depth".into(),
            serde_json::json!({
                "r2_mean": d.regression.r2_mean,
                "r2_sd": d.regression.r2_sd,
                "delta_r2_over_frequency": d.regression.delta_r2,
                "syntax_units": d.units,
            }),
        );
    }
    if let Some(c) = try_read::<ConnectivityReport>(ws, paths::CONNECTIVITY_JSON) {
        let seg: serde_json::Map<String, Value> = c
            .efferent
            .iter()
            .map(|e| (e.unit.to_string(), e.segregation.into()))
            .collect();
        s.insert("segregation".into(), seg.into());
        s.insert("random_units".into(), serde_json::to_value(&c.random_units).unwrap_or_default());
    }
    if let Some(p) = try_read::<PermutationReport>(ws, paths::PERMUTATION_JSON) {
        let m: serde_json::Map<String, Value> = p
            .tests
            .iter()
            .filter_map(|t| t.result.as_ref().map(|r| (t.label.clone(), r.p_value.into())))
            .collect();
        s.insert("permutation_p".into(), m.into());
    }
    s
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn html(ws: &Workspace, index: &Index) -> String {
    let mut h = String::new();
    let _ = writeln!(h, "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>agreelab report</title>");
    let _ = writeln!(
        h,
        "<style>body{{font-family:sans-serif;max-width:1100px;margin:auto}}table{{border-collapse:collapse}}td,th{{border:1px solid #ccc;padding:2px 6px}}img{{max-width:100%}}</style></head><body>"
    );
    let _ = writeln!(h, "<!-- {} -->", esc(&ws.prov.comment_line()));
    let _ = writeln!(h, "<h1>agreelab report</h1>");
    let _ = writeln!(
        h,
        "<p>seed {} &middot; config {} &middot; {} {}</p>",
        ws.prov.seed, ws.prov.config_hash, ws.prov.tool, ws.prov.version
    );

    if let Some(acc) = try_read::<AccuracyTable>(ws, paths::ACCURACY_JSON) {
        let _ = writeln!(h, "<h2>Agreement accuracy</h2><table><tr><th>task</th><th>condition</th><th>n</th><th>full</th>{}</tr>",
            if acc.mask.is_empty() { String::new() } else { "<th>masked</th>".into() });
        for r in &acc.rows {
            let masked = r.masked.map_or(String::new(), |m| format!("<td>{:.1}</td>", 100.0 * m));
            let _ = writeln!(
                h,
                "<tr><td>{}</td><td>{}</td><td>{}</td><td>{:.1}</td>{masked}</tr>",
                r.task.name(),
                r.condition.label(),
                r.n,
                100.0 * r.full
            );
        }
        let _ = writeln!(h, "</table>");
    }
    if let Some(lr) = try_read::<LrSummary>(ws, paths::LR_UNITS) {
        let _ = writeln!(h, "<h2>Long-range number units</h2><ul>");
        for u in &lr.units {
            let _ = writeln!(
                h,
                "<li>{} ({:?}): ablation costs {:.1} points on {} {}</li>",
                u.unit,
                u.number,
                u.delta,
                lr.task.name(),
                u.condition.label()
            );
        }
        if lr.units.is_empty() {
            let _ = writeln!(h, "<li>none identified</li>");
        }
        let _ = writeln!(h, "</ul>");
        let _ = writeln!(h, "<p><a href=\"{}\">ablation table</a></p>", paths::TABLE2_CSV);
        for u in lr.unit_refs().into_iter().chain(lr.flagged.iter().copied()).collect::<BTreeSet<_>>() {
            let svg = paths::unit_traces_svg(u);
            if ws.path(&svg).exists() {
                let _ = writeln!(h, "<h3>{u}</h3><img src=\"{}\">", svg.display());
            }
        }
    }
    for (title, rel) in [
        ("Decoding across time", paths::GAT_SVG),
        ("Short-range units", paths::SR_SVG),
        ("Depth regression", paths::DEPTH_SVG),
        ("Syntax units", paths::SYNTAX_SVG),
        ("Efferent weights", paths::EFFERENT_SVG),
        ("Afferent weights", paths::AFFERENT_SVG),
    ] {
        if ws.path(rel).exists() {
            let _ = writeln!(h, "<h2>{title}</h2><img src=\"{rel}\">");
        }
    }
    if let Some(Value::Object(p)) = index.summary.get("permutation_p") {
        let _ = writeln!(h, "<h2>Group ablation permutation tests</h2><ul>");
        for (k, v) in p {
            let _ = writeln!(h, "<li>{}: p = {}</li>", esc(k), v);
        }
        let _ = writeln!(h, "</ul>");
    }
    if let Some(Value::Object(g)) = index.summary.get("gat_mean_auc_after_intervening_noun") {
        if let Some(v) = g.get(MINUS_LR) {
            let _ = writeln!(h, "<p>Mean AUC after the intervening noun without LR units: {v}</p>");
        }
    }
    if !index.cross_reference_problems.is_empty() {
        let _ = writeln!(h, "<h2>Consistency problems</h2><ul>");
        for p in &index.cross_reference_problems {
            let _ = writeln!(h, "<li>{}</li>", esc(p));
        }
        let _ = writeln!(h, "</ul>");
    }
    let _ = writeln!(h, "<h2>All artifacts</h2><table><tr><th>file</th><th>stage</th><th>sha256</th></tr>");
    for a in &index.artifacts {
        let _ = writeln!(
            h,
            "<tr><td><a href=\"{0}\">{0}</a></td><td>{1}</td><td><code>{2}</code></td></tr>",
            esc(&a.path),
            a.stage,
            &a.sha256[..16.min(a.sha256.len())]
        );
    }
    let _ = writeln!(h, "</table></body></html>");
    h
}

pub(super) fn run(ws: &Workspace) -> AppResult<Vec<PathBuf>> {
    let mut artifacts = Vec::new();
    if let Some(m) = load_manifest(&ws.root)? {
        // The report's own outputs would make each rerun differ from the last.
        for (stage, rec) in m.stages.iter().filter(|(s, _)| **s != Stage::Report) {
            for (path, sha256) in &rec.outputs {
                artifacts.push(Artifact {
                    path: path.clone(),
                    stage: stage.name().to_string(),
                    sha256: sha256.clone(),
                });
            }
        }
    }
    let index = Index {
        artifacts,
        summary: summary(ws),
        cross_reference_problems: cross_reference_problems(ws)?,
    };
    let json = ws.write_json(paths::INDEX_JSON, &index)?;
    crate::io::write_atomic(&ws.path(paths::INDEX_HTML), html(ws, &index).as_bytes())?;
    Ok(vec![json, paths::INDEX_HTML.into()])
}
