//! Training loop: schedule, gradient accumulation over mini-batches, hard
//! negative bootstrapping rounds and a final fine-tuning phase.

pub mod batch;

use std::time::Instant;

use crate::error::{Error, Result};
use crate::loss::{total_loss, LossConfig};
use crate::net::optim::sgd_nesterov_step;
use crate::net::{init_parameters, network_backward, network_forward, Gradients, NetworkSpec, Parameters};
use crate::rng;
use crate::tensor::Tensor;
use batch::{assemble_minibatch, compute_hard_negatives, epoch_queues, HardNegatives, PoolMeta, PoolRef};

/// Training protocol. The learning rate decays by `lr_decay` every
/// `lr_decay_every` epochs through the initial and bootstrap phases; the
/// final phase runs at a tenth of the last rate reached.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub initial_epochs: usize,
    pub initial_lr: f64,
    pub momentum: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub bootstrap_rounds: usize,
    pub epochs_per_bootstrap: usize,
    pub final_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            initial_epochs: 400,
            initial_lr: 0.01,
            momentum: 0.9,
            lr_decay: 0.9,
            lr_decay_every: 100,
            bootstrap_rounds: 2,
            epochs_per_bootstrap: 200,
            final_epochs: 300,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl Schedule {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.initial_epochs == 0 {
            return Err(Error::Config("initialEpochs must be positive".into()));
        }
        if !(self.initial_lr > 0.0) {
            return Err(Error::Config("initialLr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(0.0 < self.lr_decay && self.lr_decay <= 1.0) {
            return Err(Error::Config("lrDecay must lie in (0, 1]".into()));
        }
        if self.lr_decay_every == 0 {
            return Err(Error::Config("lrDecayEvery must be positive".into()));
        }
        // Floor: one training sample plus two templates per object.
        if self.batch_size < 3 * n_classes {
            return Err(Error::Config(format!(
                "batchSize {} below floor {} (three slots per object)",
                self.batch_size,
                3 * n_classes
            )));
        }
        Ok(())
    }

    /// Learning rate at a global epoch of the initial or bootstrap phases.
    pub fn learning_rate(&self, global_epoch: usize) -> f64 {
        self.initial_lr * self.lr_decay.powi((global_epoch / self.lr_decay_every) as i32)
    }

    /// Epochs before the final phase starts.
    pub fn pre_final_epochs(&self) -> usize {
        self.initial_epochs + self.bootstrap_rounds * self.epochs_per_bootstrap
    }

    pub fn total_epochs(&self) -> usize {
        self.pre_final_epochs() + self.final_epochs
    }

    /// Fixed rate of the final fine-tuning phase.
    pub fn final_lr(&self) -> f64 {
        self.learning_rate(self.pre_final_epochs().saturating_sub(1)) / 10.0
    }
}

/// One log line; loss columns are per-item means over the epoch.
#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub triplet_loss: f64,
    pub pair_loss: f64,
    pub reg_term: f64,
    pub wall_time_sec: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: Parameters<f32>,
    pub log: Vec<EpochStats>,
    /// Set when a non-finite loss or update aborted training; `params` then
    /// holds the last state that completed an epoch with finite values.
    pub aborted: Option<String>,
}

pub struct TrainInputs<'a> {
    pub meta: &'a PoolMeta,
    pub template_images: &'a [Tensor<f32>],
    pub training_images: &'a [Tensor<f32>],
}

fn image_of<'a>(inputs: &'a TrainInputs, r: PoolRef) -> &'a Tensor<f32> {
    match r {
        PoolRef::Template(i) => &inputs.template_images[i],
        PoolRef::Training(i) => &inputs.training_images[i],
    }
}

/// Embeds a slice of images with the current network.
pub fn embed_images(
    spec: &NetworkSpec,
    params: &Parameters<f32>,
    images: &[Tensor<f32>],
) -> Result<Vec<Vec<f32>>> {
    images
        .iter()
        .map(|im| network_forward(spec, params, im).map(|(d, _)| d))
        .collect()
}

/// Runs the full schedule: initial epochs, bootstrap rounds that re-mine
/// hard negatives with the current network, then final fine-tuning at a
/// tenth of the learning rate. Deterministic in (inputs, spec, schedule).
pub fn train(
    inputs: &TrainInputs,
    spec: &NetworkSpec,
    loss_cfg: &LossConfig<f32>,
    schedule: &Schedule,
) -> Result<TrainOutcome> {
    let meta = inputs.meta;
    schedule.validate(meta.n_classes)?;
    loss_cfg.validate()?;
    if inputs.template_images.len() != meta.templates.len()
        || inputs.training_images.len() != meta.training.len()
    {
        return Err(Error::InvalidArgument("image count does not match pool".into()));
    }
    if meta.training.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }

    let mut params = init_parameters(spec, &mut rng::stream(schedule.seed, "init"))?;
    let mut batch_rng = rng::stream(schedule.seed, "batching");
    let mut last_good = params.clone();
    let mut log = Vec::new();
    let mut hard: Option<HardNegatives> = None;
    let mut global_epoch = 0usize;

    // (epochs, is_final, mines_negatives_first)
    let mut phases = vec![(schedule.initial_epochs, false, false)];
    for _ in 0..schedule.bootstrap_rounds {
        phases.push((schedule.epochs_per_bootstrap, false, true));
    }
    phases.push((schedule.final_epochs, true, false));

    for (epochs, is_final, mine) in phases {
        if mine {
            let tpl = embed_images(spec, &params, inputs.template_images)?;
            let trn = embed_images(spec, &params, inputs.training_images)?;
            hard = Some(compute_hard_negatives(meta, &tpl, &trn)?);
        }
        for _ in 0..epochs {
            let lr = if is_final {
                schedule.final_lr()
            } else {
                schedule.learning_rate(global_epoch)
            };
            let started = Instant::now();
            let mut queues = epoch_queues(meta, &mut batch_rng);
            let mut triplet_sum = 0.0f64;
            let mut triplet_count = 0usize;
            let mut pair_sum = 0.0f64;
            let mut pair_count = 0usize;
            let mut reg_sum = 0.0f64;
            let mut batches = 0usize;

            while queues.iter().any(|q| !q.is_empty()) {
                let batch = assemble_minibatch(
                    meta,
                    &mut queues,
                    schedule.batch_size,
                    hard.as_ref(),
                    &mut batch_rng,
                )?;
                // Each member is embedded exactly once per batch step.
                let mut forward_calls = 0usize;
                let mut descriptors = Vec::with_capacity(batch.members.len());
                let mut caches = Vec::with_capacity(batch.members.len());
                for &member in &batch.members {
                    let (d, cache) = network_forward(spec, &params, image_of(inputs, member))?;
                    forward_calls += 1;
                    descriptors.push(d);
                    caches.push(cache);
                }
                assert_eq!(forward_calls, batch.members.len());

                let total = total_loss(&descriptors, &batch.pairs, &batch.triplets, &params, loss_cfg)?;
                if !total.value.is_finite() {
                    return Ok(TrainOutcome {
                        params: last_good,
                        log,
                        aborted: Some(format!(
                            "non-finite loss at epoch {}",
                            global_epoch
                        )),
                    });
                }
                triplet_sum += total.triplet_term as f64;
                triplet_count += batch.triplets.len();
                pair_sum += total.pair_term as f64;
                pair_count += batch.pairs.len();
                reg_sum += total.reg_term as f64;
                batches += 1;

                // Steps descend the per-item mean of the batch costs plus the
                // regularizer; raw sums would couple the step size to the
                // batch size and diverge at the protocol's learning rate.
                let items = (batch.triplets.len() + batch.pairs.len()).max(1);
                let item_scale = 1.0 / items as f32;
                let mut grads = Gradients::zeros_like(&params);
                for (cache, dgrad) in caches.iter().zip(&total.descriptor_grads) {
                    let scaled: Vec<f32> = dgrad.iter().map(|g| g * item_scale).collect();
                    let g = network_backward(spec, &params, cache, &scaled)?;
                    grads.add_assign(&g)?;
                }
                grads.add_assign(&total.reg_grads)?;

                if let Err(e) = sgd_nesterov_step(
                    &mut params,
                    &grads,
                    lr as f32,
                    schedule.momentum as f32,
                ) {
                    let message = format!("update failed at epoch {}: {}", global_epoch, e);
                    return Ok(TrainOutcome {
                        params: last_good,
                        log,
                        aborted: Some(message),
                    });
                }
            }

            last_good = params.clone();
            log.push(EpochStats {
                epoch: global_epoch,
                lr,
                triplet_loss: if triplet_count > 0 { triplet_sum / triplet_count as f64 } else { 0.0 },
                pair_loss: if pair_count > 0 { pair_sum / pair_count as f64 } else { 0.0 },
                reg_term: if batches > 0 { reg_sum / batches as f64 } else { 0.0 },
                wall_time_sec: started.elapsed().as_secs_f64(),
            });
            global_epoch += 1;
        }
    }

    Ok(TrainOutcome {
        params,
        log,
        aborted: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::LayerSpec;
    use crate::scene::{Pose, SymmetryClass};
    use rand::Rng;

    fn pose(az: f64, el: f64) -> Pose {
        Pose {
            azimuth_deg: az,
            elevation_deg: el,
            distance_m: 0.6,
        }
    }

    /// Tiny synthetic problem: 2 classes, 8x8 single-channel images drawn
    /// from class-dependent patterns, minimal network.
    fn tiny_setup() -> (PoolMeta, Vec<Tensor<f32>>, Vec<Tensor<f32>>, NetworkSpec) {
        let mut templates = Vec::new();
        let mut training = Vec::new();
        for c in 0..2 {
            for k in 0..3 {
                templates.push((c, pose(120.0 * k as f64, 20.0 + 10.0 * k as f64)));
            }
            for k in 0..4 {
                training.push((c, pose(90.0 * k as f64 + 15.0, 25.0 + 5.0 * k as f64)));
            }
        }
        let meta = PoolMeta::new(
            2,
            vec![SymmetryClass::None, SymmetryClass::None],
            templates,
            training,
        )
        .unwrap();
        let mut r = rng::stream(3, "images");
        let mut image = |class: usize, az: f64| {
            let base = if class == 0 { 0.3 } else { -0.3 };
            let data: Vec<f32> = (0..64)
                .map(|i| {
                    let v = base + 0.1 * (i as f64 * 0.7 + az * 0.02).sin();
                    v as f32 + r.random_range(-0.02f32..0.02)
                })
                .collect();
            Tensor::from_vec(&[1, 8, 8], data).unwrap()
        };
        let tpl_images: Vec<_> = meta
            .templates
            .clone()
            .iter()
            .map(|&(c, ref p)| image(c, p.azimuth_deg))
            .collect();
        let trn_images: Vec<_> = meta
            .training
            .clone()
            .iter()
            .map(|&(c, ref p)| image(c, p.azimuth_deg))
            .collect();
        let spec = NetworkSpec::new(
            (1, 8, 8),
            vec![
                LayerSpec::Conv { out_channels: 2, kernel_h: 3, kernel_w: 3 },
                LayerSpec::MaxPool2x2,
                LayerSpec::Relu,
                LayerSpec::Fully { out_dim: 4 },
            ],
            4,
        )
        .unwrap();
        (meta, tpl_images, trn_images, spec)
    }

    fn tiny_schedule() -> Schedule {
        Schedule {
            initial_epochs: 3,
            initial_lr: 0.01,
            momentum: 0.9,
            lr_decay: 0.9,
            lr_decay_every: 100,
            bootstrap_rounds: 1,
            epochs_per_bootstrap: 2,
            final_epochs: 2,
            batch_size: 8,
            seed: 5,
        }
    }

    #[test]
    fn learning_rate_schedule_arithmetic() {
        let s = Schedule::default();
        assert!((s.learning_rate(250) - 0.0081).abs() < 1e-15);
        assert!((s.learning_rate(0) - 0.01).abs() < 1e-15);
        assert!((s.learning_rate(99) - 0.01).abs() < 1e-15);
        assert!((s.learning_rate(100) - 0.009).abs() < 1e-15);
        // Final phase: a tenth of the last pre-final rate (epoch 799).
        assert!((s.final_lr() - 0.01 * 0.9f64.powi(7) / 10.0).abs() < 1e-15);
    }

    #[test]
    fn smoke_run_completes_and_logs_every_epoch() {
        let (meta, tpl, trn, spec) = tiny_setup();
        let inputs = TrainInputs {
            meta: &meta,
            template_images: &tpl,
            training_images: &trn,
        };
        let out = train(&inputs, &spec, &LossConfig::default(), &tiny_schedule()).unwrap();
        assert!(out.aborted.is_none());
        assert_eq!(out.log.len(), 7);
        assert!(out.log.iter().all(|e| e.triplet_loss.is_finite()));
        // Final phase runs at a tenth of the last bootstrap-phase rate.
        let final_lr = out.log.last().unwrap().lr;
        assert!((final_lr - 0.001).abs() < 1e-12);
        out.params
            .layers
            .iter()
            .flatten()
            .for_each(|l| assert!(l.weights.data().iter().all(|v| v.is_finite())));
    }

    #[test]
    fn training_is_deterministic() {
        let (meta, tpl, trn, spec) = tiny_setup();
        let inputs = TrainInputs {
            meta: &meta,
            template_images: &tpl,
            training_images: &trn,
        };
        let cfg = LossConfig::default();
        let sched = tiny_schedule();
        let a = train(&inputs, &spec, &cfg, &sched).unwrap();
        let b = train(&inputs, &spec, &cfg, &sched).unwrap();
        let bits = |p: &Parameters<f32>| -> Vec<u32> {
            p.layers
                .iter()
                .flatten()
                .flat_map(|l| {
                    l.weights
                        .data()
                        .iter()
                        .chain(l.bias.iter())
                        .map(|v| v.to_bits())
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        assert_eq!(bits(&a.params), bits(&b.params));
        assert_eq!(a.log.len(), b.log.len());
        assert!(a
            .log
            .iter()
            .zip(&b.log)
            .all(|(x, y)| x.triplet_loss == y.triplet_loss && x.pair_loss == y.pair_loss));
    }

    #[test]
    fn absurd_learning_rate_aborts_with_finite_parameters() {
        let (meta, tpl, trn, spec) = tiny_setup();
        let inputs = TrainInputs {
            meta: &meta,
            template_images: &tpl,
            training_images: &trn,
        };
        let mut sched = tiny_schedule();
        sched.initial_lr = 1e30;
        let out = train(&inputs, &spec, &LossConfig::default(), &sched).unwrap();
        assert!(out.aborted.is_some());
        out.params
            .layers
            .iter()
            .flatten()
            .for_each(|l| {
                assert!(l.weights.data().iter().all(|v| v.is_finite()));
                assert!(l.bias.iter().all(|v| v.is_finite()));
            });
    }

    #[test]
    fn batch_size_floor_enforced() {
        let (meta, tpl, trn, spec) = tiny_setup();
        let inputs = TrainInputs {
            meta: &meta,
            template_images: &tpl,
            training_images: &trn,
        };
        let mut sched = tiny_schedule();
        sched.batch_size = 5; // floor is 6 for two objects
        let err = train(&inputs, &spec, &LossConfig::default(), &sched);
        assert!(err.is_err());
    }
}
