//! Model checkpoint file.
//!
//! A single JSON document:
//!
//! ```text
//! {
//!   "format": "agreelab-lstm",
//!   "version": 1,
//!   "dims": {"vocab_size": V, "embed_dim": E, "hidden_dim": H, "n_layers": L},
//!   "gate_order": ["i", "f", "g", "o"],
//!   "encoding": "base64 little-endian f64, row-major",
//!   "vocab": ["<eos>", "<unk>", ...],          (optional)
//!   "training": {...},                         (optional, resume state)
//!   "tensors": [{"name": ..., "shape": [rows, cols], "data": "..."}]
//! }
//! ```
//!
//! Tensors appear in this order: `embedding` `[V, E]`; for each layer `k`
//! (1-based) `layer{k}.w_ih` `[4H, in]`, `layer{k}.w_hh` `[4H, H]`,
//! `layer{k}.bias` `[4H, 1]`; then `output.weight` `[V, H]` and
//! `output.bias` `[V, 1]`. Rows `[b*H, (b+1)*H)` of every gate matrix belong
//! to gate block `b` in `gate_order`. `in` is `E` for layer 1 and `H` above.
//! A converter from another framework only needs to reorder gate blocks and
//! concatenate its two bias vectors.

use std::path::Path;

use agreelab_core::lstm::{Dims, LstmModel, TrainState, GATE_ORDER};
use agreelab_core::vocab::Vocabulary;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const FORMAT: &str = "agreelab-lstm";
pub const VERSION: u32 = 1;
const ENCODING: &str = "base64 little-endian f64, row-major";

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    data: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    dims: Dims,
    gate_order: Vec<String>,
    encoding: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocab: Option<Vocabulary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainState>,
    tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: LstmModel,
    pub vocab: Option<Vocabulary>,
    pub training: Option<TrainState>,
}

fn encode(xs: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

fn decode(s: &str) -> Result<Vec<f64>, String> {
    let bytes = STANDARD.decode(s).map_err(|e| e.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err(format!("{} bytes is not a whole number of f64 values", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn to_json(ck: &Checkpoint) -> String {
    let file = CheckpointFile {
        format: FORMAT.into(),
        version: VERSION,
        dims: ck.model.dims,
        gate_order: GATE_ORDER.iter().map(|g| g.symbol().to_string()).collect(),
        encoding: ENCODING.into(),
        vocab: ck.vocab.clone(),
        training: ck.training.clone(),
        tensors: ck
            .model
            .tensors()
            .into_iter()
            .map(|(name, shape, data)| TensorRecord {
                name,
                shape,
                data: encode(data),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("checkpoint serializes")
}

pub fn from_json(text: &str, origin: &Path) -> AppResult<Checkpoint> {
    let bad = |d: String| AppError::format(origin, d);
    let file: CheckpointFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if file.format != FORMAT {
        return Err(bad(format!("not an {FORMAT} checkpoint (format {:?})", file.format)));
    }
    if file.version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {}", file.version)));
    }
    let order: Vec<String> = GATE_ORDER.iter().map(|g| g.symbol().to_string()).collect();
    if file.gate_order != order {
        return Err(bad(format!("gate order {:?}, expected {:?}", file.gate_order, order)));
    }
    let mut model = LstmModel::zeros(file.dims);
    let expected: Vec<(String, [usize; 2])> = model
        .tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    if file.tensors.len() != expected.len() {
        return Err(bad(format!(
            "{} tensors, expected {}",
            file.tensors.len(),
            expected.len()
        )));
    }
    for (((name, shape), rec), slot) in expected
        .iter()
        .zip(&file.tensors)
        .zip(model.params_mut())
    {
        if &rec.name != name || &rec.shape != shape {
            return Err(bad(format!(
                "tensor {} {:?} where {} {:?} was expected",
                rec.name, rec.shape, name, shape
            )));
        }
        let data = decode(&rec.data).map_err(|e| bad(format!("tensor {name}: {e}")))?;
        if data.len() != slot.len() {
            return Err(bad(format!(
                "tensor {name} holds {} values, shape needs {}",
                data.len(),
                slot.len()
            )));
        }
        slot.copy_from_slice(&data);
    }
    model.validate().map_err(|e| bad(e.to_string()))?;
    if let Some(v) = &file.vocab {
        if v.len() != file.dims.vocab_size {
            return Err(bad(format!(
                "vocabulary has {} entries, model expects {}",
                v.len(),
                file.dims.vocab_size
            )));
        }
    }
    Ok(Checkpoint {
        model,
        vocab: file.vocab,
        training: file.training,
    })
}

pub fn save(path: &Path, ck: &Checkpoint) -> AppResult<()> {
    super::write_atomic(path, to_json(ck).as_bytes())
}

pub fn load(path: &Path) -> AppResult<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    from_json(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let dims = Dims {
            vocab_size: 5,
            embed_dim: 3,
            hidden_dim: 4,
            n_layers: 2,
        };
        Checkpoint {
            model: LstmModel::init(dims, 7),
            vocab: Some(Vocabulary::with_reserved(["a", "b", "c"].map(String::from))),
            training: None,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = from_json(&to_json(&ck), Path::new("x")).unwrap();
        assert_eq!(back.model, ck.model);
        assert_eq!(back.vocab, ck.vocab);
    }

    #[test]
    fn rejects_unknown_version_and_bad_shapes() {
        let text = to_json(&sample());
        let v2 = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(from_json(&v2, Path::new("x")).is_err());
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["tensors"][1]["shape"][0] = 15.into();
        assert!(from_json(&doc.to_string(), Path::new("x")).is_err());
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["gate_order"][0] = "f".into();
        assert!(from_json(&doc.to_string(), Path::new("x")).is_err());
    }

    #[test]
    fn rejects_non_finite_values() {
        let mut ck = sample();
        ck.model.out_b[0] = f64::INFINITY;
        assert!(from_json(&to_json(&ck), Path::new("x")).is_err());
    }
}
