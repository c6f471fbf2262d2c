//! Checkpoint layout (little-endian, trailing SHA-256 over all prior bytes):
//!
//! ```text
//! "TABEMBCK" u32 version
//! [32] pool config hash
//! u8 task | u8 variant | u64 depth hidden heads input_dim
//! str backend_id
//! u64 epochs batch_size | f64 lr weight_decay | u64 m seed block_size(0 = none)
//! u64 n_labels, str * n_labels | [32] label fingerprint
//! u64 n_params, (str name, u64 rows, u64 cols, f64 * rows*cols) * n_params
//! [32] sha256
//! ```

use std::fs;
use std::path::Path;

use super::{TrainConfig, TrainedModel};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::nn::{Network, NetworkConfig, Tensor, Variant};
use crate::table::{LabelSpace, Task};

const MAGIC: &[u8; 8] = b"TABEMBCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_model(model: &TrainedModel) -> Vec<u8> {
    let c = &model.config;
    let g = model.network.config.gnn;
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.bytes(&model.pool_hash);
    w.u8(c.task.code());
    w.u8(g.variant.code());
    for v in [g.depth, g.hidden, g.heads, g.input_dim] {
        w.usize(v);
    }
    w.str(&model.backend_id);
    w.usize(c.epochs);
    w.usize(c.batch_size);
    w.f64(c.lr);
    w.f64(c.weight_decay);
    w.usize(c.m);
    w.u64(c.seed);
    w.usize(c.block_size.unwrap_or(0));
    w.usize(model.labels.len());
    for l in model.labels.labels() {
        w.str(l);
    }
    w.bytes(&model.labels.fingerprint());
    let params = &model.network.params;
    w.usize(params.len());
    for (name, t) in params.names().iter().zip(params.values()) {
        w.str(name);
        w.usize(t.rows());
        w.usize(t.cols());
        t.data().iter().for_each(|&v| w.f64(v));
    }
    w.finish_with_digest()
}

pub fn decode_model(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = ByteReader::with_digest(bytes, "checkpoint")?;
    r.expect_magic(MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let pool_hash = r.array::<32>()?;
    let task = Task::from_code(r.u8()?).ok_or_else(|| Error::format("checkpoint: unknown task code"))?;
    let variant = Variant::from_code(r.u8()?).ok_or_else(|| Error::format("checkpoint: unknown variant code"))?;
    let depth = r.usize()?;
    let hidden = r.usize()?;
    let heads = r.usize()?;
    let input_dim = r.usize()?;
    let backend_id = r.str()?;
    let mut config = TrainConfig::new(task);
    config.variant = variant;
    config.depth = depth;
    config.hidden = hidden;
    config.heads = heads;
    config.epochs = r.usize()?;
    config.batch_size = r.usize()?;
    config.lr = r.f64()?;
    config.weight_decay = r.f64()?;
    config.m = r.usize()?;
    config.seed = r.u64()?;
    config.block_size = Some(r.usize()?).filter(|&b| b > 0);
    config.validate().map_err(|e| Error::format(format!("checkpoint config: {e}")))?;

    let n_labels = r.count(4)?;
    let names = (0..n_labels).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let labels = LabelSpace::new(task, names).map_err(|e| Error::format(format!("checkpoint labels: {e}")))?;
    if r.array::<32>()? != labels.fingerprint() {
        return Err(Error::format("checkpoint label fingerprint does not match its label list"));
    }
    // Guard the allocation in Network::new before trusting the header.
    let budget = r.remaining() / 8;
    let needed = input_dim.saturating_mul(hidden).saturating_add(depth.saturating_mul(hidden).saturating_mul(hidden));
    if input_dim == 0 || needed > budget {
        return Err(Error::format("checkpoint: declared model size exceeds the file"));
    }
    let mut network = Network::new(
        NetworkConfig {
            gnn: config.gnn_config(input_dim),
            task,
            n_labels: labels.len(),
        },
        0,
    )
    .map_err(|e| Error::format(format!("checkpoint model: {e}")))?;

    let n_params = r.count(8)?;
    if n_params != network.params.len() {
        return Err(Error::format(format!(
            "checkpoint has {n_params} parameters, model layout needs {}",
            network.params.len()
        )));
    }
    for i in 0..n_params {
        let name = r.str()?;
        let (rows, cols) = (r.usize()?, r.usize()?);
        let expected = &network.params.values()[i];
        if name != network.params.name(i) || (rows, cols) != expected.shape() {
            return Err(Error::format(format!(
                "checkpoint parameter {name} ({rows}x{cols}) does not match {} {:?}",
                network.params.name(i),
                expected.shape()
            )));
        }
        let data = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(format!("checkpoint parameter {name} is not finite")));
        }
        network.params.values_mut()[i] = Tensor::from_vec(rows, cols, data)?;
    }
    r.expect_end()?;
    Ok(TrainedModel {
        network,
        labels,
        backend_id,
        config,
        pool_hash,
    })
}

pub fn save_model(path: &Path, model: &TrainedModel) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode_model(model))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => e.into(),
    })?;
    decode_model(&bytes)
}

/// Loads a checkpoint and refuses it unless it was trained on `labels`.
pub fn load_model_for(path: &Path, labels: &LabelSpace) -> Result<TrainedModel> {
    let model = load_model(path)?;
    if model.labels.task() != labels.task() || model.labels.fingerprint() != labels.fingerprint() {
        return Err(Error::validation(format!(
            "checkpoint {} was trained on a different {} label space",
            path.display(),
            labels.task()
        )));
    }
    Ok(model)
}
