//! On-disk formats. Every file written here carries a provenance record
//! (tool version, config hash, seed): a `provenance` field in JSON, a first
//! line in JSON Lines, a `#` comment line in CSV and text files, and an XML
//! comment in SVG.

pub mod checkpoint;
pub mod traces;

use std::fs;
use std::io::Write;
use std::path::Path;

use agreelab_core::grammar::corpus::Corpus;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const TOOL: &str = "agreelab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: &str, seed: u64) -> Provenance {
        Provenance {
            tool: TOOL.into(),
            version: TOOL_VERSION.into(),
            config_hash: config_hash.into(),
            seed,
        }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# {} {} config={} seed={}",
            self.tool, self.version, self.config_hash, self.seed
        )
    }
}

/// Write via a temporary sibling and rename, creating parent directories.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        }
    }
    let tmp = path.with_extension("tmp~");
    let mut f = fs::File::create(&tmp).map_err(|e| AppError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| AppError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

pub fn read_text(path: &Path) -> AppResult<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    provenance: &'a Provenance,
    result: &'a T,
}

#[derive(Deserialize)]
struct OwnedEnvelope<T> {
    provenance: Provenance,
    result: T,
}

pub fn to_json_string<T: Serialize>(prov: &Provenance, value: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Envelope {
        provenance: prov,
        result: value,
    })
    .expect("result serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, value: &T) -> AppResult<()> {
    write_atomic(path, to_json_string(prov, value).as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<(Provenance, T)> {
    let text = read_text(path)?;
    let env: OwnedEnvelope<T> = serde_json::from_str(&text).map_err(|e| AppError::format(path, e))?;
    Ok((env.provenance, env.result))
}

pub fn write_jsonl<T: Serialize>(path: &Path, prov: &Provenance, items: &[T]) -> AppResult<()> {
    let mut out = serde_json::to_string(&serde_json::json!({ "provenance": prov })).expect("json");
    out.push('\n');
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("record serializes"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> AppResult<Vec<T>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (k == 0 && line.starts_with("{\"provenance\"")) {
            continue;
        }
        out.push(
            serde_json::from_str(line).map_err(|e| AppError::format(path, format!("line {}: {e}", k + 1)))?,
        );
    }
    Ok(out)
}

/// CSV with a leading provenance comment.
pub fn write_csv<S: AsRef<str>>(
    path: &Path,
    prov: &Provenance,
    header: &[&str],
    rows: &[Vec<S>],
) -> AppResult<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(prov.comment_line().as_bytes());
    buf.push(b'\n');
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(|e| AppError::format(path, e))?;
        for r in rows {
            w.write_record(r.iter().map(|s| s.as_ref()))
                .map_err(|e| AppError::format(path, e))?;
        }
        w.flush().map_err(|e| AppError::io(path, e))?;
    }
    write_atomic(path, &buf)
}

/// Header and rows of a CSV file, skipping `#` comment lines.
pub fn read_csv(path: &Path) -> AppResult<(Vec<String>, Vec<Vec<String>>)> {
    let text = read_text(path)?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| AppError::format(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| AppError::format(path, e))?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

/// One sentence per line, each ending in ` <eos>`.
pub fn write_corpus(path: &Path, prov: &Provenance, corpus: &Corpus) -> AppResult<()> {
    let mut out = prov.comment_line();
    out.push('\n');
    for s in &corpus.sentences {
        out.push_str(&s.join(" "));
        out.push_str(" <eos>\n");
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_corpus(path: &Path) -> AppResult<Corpus> {
    let text = read_text(path)?;
    let mut sentences = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut words: Vec<String> = line.split_whitespace().map(String::from).collect();
        if words.last().map(String::as_str) != Some("<eos>") {
            return Err(AppError::format(path, format!("line does not end in <eos>: {line:?}")));
        }
        words.pop();
        sentences.push(words);
    }
    Ok(Corpus { sentences })
}
