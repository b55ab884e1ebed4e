//! Weight checkpoints and attention dumps.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::AssociatorConfig;
use super::model::{AssociatorModel, AttentionMaps};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Archive {
    version: u32,
    fingerprint: String,
    config: AssociatorConfig,
    /// `(cls, l1, giou)` weights the parameters were trained with.
    loss_weights: [f64; 3],
    tensors: Vec<NamedTensor>,
}

/// Hash over the architecture-relevant config and the loss weights.
pub fn fingerprint(config: &AssociatorConfig, loss_weights: [f64; 3]) -> String {
    let material = serde_json::json!({
        "d_model": config.d_model,
        "n_heads": config.n_heads,
        "ffn_dim": config.ffn_dim,
        "tau_q": config.tau_q,
        "ema_weight": config.ema_weight,
        "box_space": config.box_space,
        "learned_projections": config.use_learned_projections,
        "noisy_source": config.noisy_source,
        "temperature": config.temperature,
        "loss_weights": loss_weights,
    });
    hex::encode(Sha256::digest(material.to_string().as_bytes()))
}

pub fn save_checkpoint(model: &AssociatorModel, loss_weights: [f64; 3], path: &Path) -> Result<()> {
    let tensors = model
        .params
        .iter()
        .map(|(name, m)| NamedTensor {
            name: name.to_string(),
            rows: m.rows(),
            cols: m.cols(),
            data: m.data().to_vec(),
        })
        .collect();
    let archive = Archive {
        version: CHECKPOINT_VERSION,
        fingerprint: fingerprint(model.config(), loss_weights),
        config: model.config().clone(),
        loss_weights,
        tensors,
    };
    let text = serde_json::to_string(&archive).map_err(|e| Error::Serde(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint, checking that its stored fingerprint matches its contents.
pub fn load_checkpoint(path: &Path) -> Result<(AssociatorModel, [f64; 3])> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let archive: Archive = serde_json::from_str(&text)
        .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
    if archive.version != CHECKPOINT_VERSION {
        return Err(Error::Serde(format!(
            "unsupported checkpoint version {}",
            archive.version
        )));
    }
    let found = fingerprint(&archive.config, archive.loss_weights);
    if found != archive.fingerprint {
        return Err(Error::Fingerprint {
            expected: archive.fingerprint,
            found,
        });
    }
    let mut model = AssociatorModel::new(archive.config, 0)?;
    if archive.tensors.len() != model.params.len() {
        return Err(Error::Shape(format!(
            "checkpoint holds {} tensors, model has {}",
            archive.tensors.len(),
            model.params.len()
        )));
    }
    for t in archive.tensors {
        let id = model
            .params
            .find(&t.name)
            .ok_or_else(|| Error::Shape(format!("unknown parameter {}", t.name)))?;
        let slot = model.params.get_mut(id);
        if slot.shape() != (t.rows, t.cols) || t.data.len() != t.rows * t.cols {
            return Err(Error::Shape(format!(
                "parameter {} is {:?}, checkpoint has {}x{}",
                t.name,
                slot.shape(),
                t.rows,
                t.cols
            )));
        }
        *slot = Matrix::from_vec(t.rows, t.cols, t.data);
    }
    Ok((model, archive.loss_weights))
}

/// Loads a checkpoint and rejects it unless it was produced for `config` and `loss_weights`.
pub fn load_checkpoint_for(
    path: &Path,
    config: &AssociatorConfig,
    loss_weights: [f64; 3],
) -> Result<AssociatorModel> {
    let (model, stored) = load_checkpoint(path)?;
    let expected = fingerprint(config, loss_weights);
    let found = fingerprint(model.config(), stored);
    if expected != found {
        return Err(Error::Fingerprint { expected, found });
    }
    Ok(model)
}

/// Appends one frame's maps as `frame,map,row,col,weight` lines.
pub fn write_attention_rows(
    out: &mut impl Write,
    frame: usize,
    maps: &AttentionMaps,
) -> std::io::Result<()> {
    for (label, m) in [("detection", &maps.detection), ("track", &maps.track)] {
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                writeln!(out, "{frame},{label},{r},{c},{}", m.get(r, c))?;
            }
        }
    }
    Ok(())
}

pub const ATTENTION_CSV_HEADER: &str = "frame,map,row,col,weight";
