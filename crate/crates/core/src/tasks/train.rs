//! Mini-batch training with seeded shuffling and per-epoch metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use super::eval::{argmax, evaluate};
use crate::error::{Error, Result};
use crate::net::{Adam, Checkpoint, NetInput, Network, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy of the training-mode predictions made during the epoch.
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub val_mean_class_accuracy: Option<f64>,
    /// Optimizer steps skipped for non-finite gradients.
    pub skipped_steps: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: Checkpoint,
    /// Highest validation accuracy (earliest on ties); the final state when
    /// there is no validation set.
    pub best_checkpoint: Checkpoint,
    pub log: Vec<EpochMetrics>,
}

/// Index batches for one epoch. A trailing batch of one joins the previous
/// batch so batch norm always sees at least two samples.
pub fn epoch_batches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(2)).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().expect("non-empty");
        batches.last_mut().expect("at least one").extend(last);
    }
    batches
}

pub fn train(
    cfg: &TrainConfig,
    train: &[Sample],
    val: Option<&[Sample]>,
    classes: usize,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.len() < 2 {
        return Err(Error::BatchTooSmall(train.len()));
    }
    if let Some(s) = train.iter().chain(val.unwrap_or_default()).find(|s| s.label >= classes) {
        return Err(Error::InvalidLabel { label: s.label, classes });
    }
    let in_channels = train[0].input.features.ncols();
    let mut net = Network::new(cfg.net_config(in_channels, classes), cfg.seed)?;
    let mut adam = Adam::new(net.param_count(), cfg.learning_rate());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let snapshot = |net: &Network, adam: &Adam, epoch: usize| {
        let mut c = Checkpoint::from_network(net, Some(adam), cfg.seed);
        c.epoch = epoch;
        c
    };
    let mut best = snapshot(&net, &adam, 0);
    let mut best_val = f64::NEG_INFINITY;

    for epoch in 1..=cfg.epochs {
        net.set_training(true);
        adam.lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut skipped = 0usize;
        for batch in epoch_batches(&order, cfg.batch_size) {
            let inputs: Vec<&NetInput> = batch.iter().map(|&i| &train[i].input).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train[i].label).collect();
            let (loss, logits) = net.loss_and_grad(&inputs, &labels)?;
            loss_sum += loss * batch.len() as f64;
            correct += logits
                .rows()
                .into_iter()
                .zip(&labels)
                .filter(|(row, &l)| argmax(row.as_slice().expect("contiguous")) == l)
                .count();
            let (params, grads) = net.params_and_grads();
            if !adam.update(params, grads)? {
                skipped += 1;
            }
        }
        net.set_training(false);
        let val_report = match val {
            Some(v) if !v.is_empty() => Some(evaluate(&net, v, classes)?.1),
            _ => None,
        };
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_accuracy: val_report.as_ref().map(|r| r.accuracy),
            val_mean_class_accuracy: val_report.as_ref().map(|r| r.mean_class_accuracy),
            skipped_steps: skipped,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train acc {:.4}{}",
            metrics.train_loss,
            metrics.train_accuracy,
            metrics.val_accuracy.map_or(String::new(), |a| format!(" val acc {a:.4}"))
        );
        match metrics.val_accuracy {
            Some(acc) if acc > best_val => {
                best_val = acc;
                best = snapshot(&net, &adam, epoch);
            }
            None => best = snapshot(&net, &adam, epoch),
            _ => {}
        }
        on_epoch(&metrics);
        log.push(metrics);
    }
    Ok(TrainOutcome {
        final_checkpoint: snapshot(&net, &adam, cfg.epochs),
        best_checkpoint: best,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use crate::polyshape::{build_polyshape, Scheme};

    fn samples() -> Vec<Sample> {
        let meshes = [
            primitives::icosphere(1),
            primitives::cube(),
            primitives::cylinder(0.5, 1.0, 10, 3),
            primitives::tetrahedron(),
            primitives::icosahedron(),
        ];
        meshes
            .iter()
            .enumerate()
            .map(|(i, m)| Sample {
                id: i.to_string(),
                label: i % 3,
                input: NetInput::from_shape(&build_polyshape(m, Scheme::Sqrt3, 1, 30).unwrap()),
            })
            .collect()
    }

    fn small_config() -> TrainConfig {
        let mut cfg = TrainConfig::mesh_default();
        cfg.conv_widths = vec![8, 8];
        cfg.fc_widths = vec![16, 8];
        cfg.batch_size = 5;
        cfg
    }

    #[test]
    fn batches_never_hold_a_single_sample() {
        let order: Vec<usize> = (0..7).collect();
        let b = epoch_batches(&order, 3);
        assert_eq!(b, vec![vec![0, 1, 2], vec![3, 4, 5, 6]]);
        assert_eq!(epoch_batches(&order[..1], 4), vec![vec![0]]);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let s = samples();
        let mut cfg = small_config();
        cfg.lr = Some(0.0);
        cfg.epochs = 1;
        let out = train(&cfg, &s, None, 3, |_| {}).unwrap();
        let init = Network::new(cfg.net_config(6, 3), cfg.seed).unwrap();
        assert_eq!(out.final_checkpoint.params, init.params());
    }

    #[test]
    fn overfits_five_samples_and_is_deterministic() {
        let s = samples();
        let mut cfg = small_config();
        cfg.epochs = 200;
        let mut first_perfect = None;
        let out = train(&cfg, &s, Some(&s), 3, |m| {
            if m.val_accuracy == Some(1.0) && first_perfect.is_none() {
                first_perfect = Some(m.epoch);
            }
        })
        .unwrap();
        assert!(first_perfect.is_some());
        assert_eq!(out.best_checkpoint.epoch, first_perfect.unwrap());
        let again = train(&cfg, &s, Some(&s), 3, |_| {}).unwrap();
        assert_eq!(
            serde_json::to_string(&out.log).unwrap(),
            serde_json::to_string(&again.log).unwrap()
        );
    }

    #[test]
    fn rejects_bad_labels() {
        let mut s = samples();
        s[0].label = 7;
        assert!(matches!(
            train(&small_config(), &s, None, 3, |_| {}),
            Err(Error::InvalidLabel { label: 7, .. })
        ));
    }
}
