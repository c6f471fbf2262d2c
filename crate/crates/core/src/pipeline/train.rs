use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tracing::{debug, info};

use super::{supervision, TrainConfig, TrainedModel};
use crate::codec::{sha256, short_hex};
use crate::colgraph::GraphPool;
use crate::error::{Error, Result};
use crate::eval::micro_f1;
use crate::nn::{Adam, Network, NetworkConfig, Tensor, Variant};
use crate::pipeline::predict::argmax;
use crate::table::{LabelSpace, Task};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean cross-entropy over every target seen this epoch.
    pub loss: f64,
    pub valid_micro_f1: Option<f64>,
    pub optimizer_steps: usize,
    /// Short hex fingerprint of all parameters after the epoch.
    pub params: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingLog {
    pub task: String,
    pub variant: String,
    pub ablation: bool,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub selected_epoch: usize,
    pub selected_by_validation: bool,
    pub total_steps: usize,
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut key = [0u8; 16];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..].copy_from_slice(&(epoch as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(sha256(&key));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn check_pool(pool: &GraphPool, task: Task, labels: &LabelSpace, what: &str) -> Result<()> {
    if let Some(fp) = pool.meta.label_fingerprints[task.code() as usize] {
        if fp != labels.fingerprint() {
            return Err(Error::validation(format!("{what} pool was built against a different {task} label space")));
        }
    }
    for entry in &pool.entries {
        let Some((_, gold)) = supervision(entry, task) else { continue };
        if let Some(g) = gold.iter().find(|&&g| g >= labels.len()) {
            return Err(Error::validation(format!(
                "{what} table {}: label ordinal {g} outside the {} {task} labels",
                entry.graph.table_id,
                labels.len()
            )));
        }
    }
    Ok(())
}

/// Micro-F1 of `net` over every labeled target in `pool`, or `None` if the pool has none.
pub fn evaluate_pool(net: &Network, pool: &GraphPool, task: Task) -> Result<Option<f64>> {
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    for entry in &pool.entries {
        let Some((targets, gold)) = supervision(entry, task) else { continue };
        let logits = net.forward(&entry.graph, &targets)?.logits;
        preds.extend((0..logits.rows()).map(|r| argmax(logits.row(r))));
        golds.extend(gold);
    }
    if golds.is_empty() {
        return Ok(None);
    }
    micro_f1(&preds, &golds).map(Some)
}

/// Mini-batch training of encoder and head jointly. With a validation pool
/// the parameters of the epoch with the highest validation micro-F1 are
/// returned (earliest on ties), otherwise those of the final epoch.
pub fn train(
    pool: &GraphPool,
    labels: &LabelSpace,
    config: &TrainConfig,
    valid: Option<&GraphPool>,
) -> Result<(TrainedModel, TrainingLog)> {
    config.validate()?;
    let task = config.task;
    if labels.task() != task {
        return Err(Error::invalid(format!("{} label space given for a {task} model", labels.task())));
    }
    if pool.is_empty() {
        return Err(Error::invalid("training pool is empty"));
    }
    check_pool(pool, task, labels, "training")?;
    if let Some(v) = valid {
        if v.meta.backend_id != pool.meta.backend_id || v.meta.dim != pool.meta.dim {
            return Err(Error::validation("validation pool was embedded with a different backend"));
        }
        check_pool(v, task, labels, "validation")?;
    }
    let supervised: Vec<_> = pool.entries.iter().map(|e| supervision(e, task)).collect();
    if supervised.iter().all(Option::is_none) {
        return Err(Error::validation(format!("training pool has no {task} labels")));
    }

    let net_config = NetworkConfig {
        gnn: config.gnn_config(pool.meta.dim),
        task,
        n_labels: labels.len(),
    };
    let mut net = Network::new(net_config, config.seed)?;
    let mut adam = Adam::new(&net.params, config.lr, config.weight_decay);
    if config.variant == Variant::None {
        info!("ablation mode: no message passing, ψ is the projected ψ⁽⁰⁾");
    }
    info!(
        task = %task,
        variant = %config.variant,
        tables = pool.len(),
        params = net.params.n_scalars(),
        "training"
    );

    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut steps = 0usize;
    for epoch in 0..config.epochs {
        let order = epoch_order(pool.len(), config.seed, epoch);
        let (mut epoch_loss, mut epoch_targets) = (0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let n_targets: usize = chunk
                .iter()
                .filter_map(|&i| supervised[i].as_ref())
                .map(|(_, g)| g.len())
                .sum();
            if n_targets == 0 {
                continue;
            }
            let scale = 1.0 / n_targets as f64;
            let mut grads: Vec<Option<Tensor>> = vec![None; net.params.len()];
            let mut batch_loss = 0.0;
            for &i in chunk {
                let Some((targets, gold)) = &supervised[i] else { continue };
                let (loss, g) = net.loss_and_gradients(&pool.entries[i].graph, targets, gold, scale)?;
                batch_loss += loss;
                for (acc, g) in grads.iter_mut().zip(g.params) {
                    match (acc, g) {
                        (Some(a), Some(g)) => a.add_assign(&g),
                        (slot @ None, Some(g)) => *slot = Some(g),
                        _ => {}
                    }
                }
            }
            let abort = |message: String| Error::Training {
                epoch: epoch + 1,
                batch: b + 1,
                message,
            };
            if !batch_loss.is_finite() {
                return Err(abort(format!("loss is {batch_loss}")));
            }
            adam.step(&mut net.params, &grads).map_err(|e| abort(e.to_string()))?;
            steps += 1;
            epoch_loss += batch_loss;
            epoch_targets += n_targets;
            debug!(epoch = epoch + 1, batch = b + 1, loss = batch_loss * scale, "step");
        }
        let valid_f1 = match valid {
            Some(v) => evaluate_pool(&net, v, task)?,
            None => None,
        };
        if let Some(f1) = valid_f1 {
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, epoch + 1, net.params.values().to_vec()));
            }
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            loss: epoch_loss / epoch_targets.max(1) as f64,
            valid_micro_f1: valid_f1,
            optimizer_steps: steps,
            params: short_hex(&net.params.fingerprint()),
        };
        info!(epoch = record.epoch, loss = record.loss, valid_micro_f1 = ?record.valid_micro_f1, "epoch");
        records.push(record);
    }

    let (selected_epoch, by_validation) = match best {
        Some((_, epoch, values)) => {
            net.params.values_mut().clone_from_slice(&values);
            (epoch, true)
        }
        None => (config.epochs, false),
    };
    let log = TrainingLog {
        task: task.as_str().to_string(),
        variant: config.variant.as_str().to_string(),
        ablation: config.variant == Variant::None,
        epochs: records,
        selected_epoch,
        selected_by_validation: by_validation,
        total_steps: steps,
    };
    let model = TrainedModel {
        network: net,
        labels: labels.clone(),
        backend_id: pool.meta.backend_id.clone(),
        config: config.clone(),
        pool_hash: pool.meta.config_hash,
    };
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(50, 3, 0);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_eq!(a, epoch_order(50, 3, 0));
        assert_ne!(a, epoch_order(50, 3, 1));
        assert_ne!(a, epoch_order(50, 4, 0));
    }
}
