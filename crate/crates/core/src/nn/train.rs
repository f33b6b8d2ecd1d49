//! The training loop: fixed batch order, per-epoch augmentation streams,
//! validation-driven checkpointing, reduce-on-plateau, and early stopping.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::loss::{hbce, hbce_grad, LossConfig};
use crate::metrics::{auroc, MetricsError};
use crate::penalty::PenaltyTable;
use crate::seeding::derive_seed;
use crate::synthdata::{augment, AugmentConfig, Dataset, Split};
use crate::tensor::Tensor;

use super::{backward, Adam, Model, ModelConfig, NnError};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate; decays by `plateau_factor` on plateaus.
    pub lr: f64,
    /// Master seed. Weight init, batch order, dropout, and augmentation all
    /// use distinct streams derived from it.
    pub seed: u64,
    /// `None` trains on the raw images.
    pub augment: Option<AugmentConfig>,
    pub loss: LossConfig,
    pub plateau_factor: f64,
    /// Consecutive non-improving epochs tolerated before each decay.
    pub plateau_patience: usize,
    /// Consecutive non-improving epochs before training stops.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 30,
            batch_size: 16,
            lr: 1e-4,
            seed: 42,
            augment: Some(AugmentConfig::default()),
            loss: LossConfig::default(),
            plateau_factor: 0.9,
            plateau_patience: 1,
            early_stop_patience: 3,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), NnError> {
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(NnError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return Err(NnError::InvalidConfig(format!(
                "plateau_factor must lie in (0, 1], got {}",
                self.plateau_factor
            )));
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return Err(NnError::InvalidConfig(
                "patience values must be positive".into(),
            ));
        }
        self.loss.check()?;
        Ok(())
    }
}

/// What the controller decided after seeing one epoch's validation numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerDecision {
    /// Validation loss or AUROC improved on its best so far.
    pub save_checkpoint: bool,
    /// Validation loss specifically improved (drives final-model choice).
    pub improved_loss: bool,
    pub stop: bool,
    /// Learning rate for the next epoch.
    pub lr: f64,
}

/// Tracks best validation numbers and implements the checkpoint /
/// reduce-on-plateau / early-stop policy. All comparisons are strict, and
/// plateau counting looks only at validation loss.
#[derive(Debug, Clone)]
pub struct TrainController {
    lr: f64,
    factor: f64,
    plateau_patience: usize,
    stop_patience: usize,
    best_loss: f64,
    best_auroc: f64,
    bad_epochs: usize,
    decays: usize,
}

impl TrainController {
    pub fn new(lr: f64, factor: f64, plateau_patience: usize, stop_patience: usize) -> Self {
        TrainController {
            lr,
            factor,
            plateau_patience,
            stop_patience,
            best_loss: f64::INFINITY,
            best_auroc: f64::NEG_INFINITY,
            bad_epochs: 0,
            decays: 0,
        }
    }

    /// Learning rate the next epoch should use.
    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Times the plateau schedule has fired, so `lr = lr0 * factor^decays`.
    pub fn decays(&self) -> usize {
        self.decays
    }

    pub fn observe(&mut self, val_loss: f64, val_auroc: f64) -> ControllerDecision {
        let improved_loss = val_loss < self.best_loss;
        let improved_auroc = val_auroc > self.best_auroc;
        if improved_loss {
            self.best_loss = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs % self.plateau_patience == 0 {
                self.lr *= self.factor;
                self.decays += 1;
            }
        }
        if improved_auroc {
            self.best_auroc = val_auroc;
        }
        ControllerDecision {
            save_checkpoint: improved_loss || improved_auroc,
            improved_loss,
            stop: self.bad_epochs >= self.stop_patience,
            lr: self.lr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean AUROC over validation labels with both classes present.
    pub val_mean_auroc: f64,
    /// Rate the epoch's updates used (decays apply to later epochs).
    pub lr: f64,
    pub checkpointed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    /// Fixed five-column layout: `epoch,train_loss,val_loss,val_mean_auroc,lr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_mean_auroc,lr\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                r.epoch, r.train_loss, r.val_loss, r.val_mean_auroc, r.lr
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The checkpoint with the lowest validation loss (the initial model if
    /// no epochs ran).
    pub model: Model,
    pub history: History,
    /// Epoch the returned model was saved at; `None` if no epochs ran.
    pub best_epoch: Option<usize>,
}

fn batch_targets(dataset: &Dataset, indices: &[usize]) -> Tensor {
    let l = dataset.taxonomy().len();
    let mut y = Tensor::zeros(&[indices.len(), l]);
    for (row, &i) in indices.iter().enumerate() {
        for (col, &v) in dataset.label_row(i).iter().enumerate() {
            y.data_mut()[row * l + col] = f64::from(v);
        }
    }
    y
}

/// Mean AUROC over labels that have both classes in `targets`; NaN when no
/// label does.
fn mean_val_auroc(preds: &Tensor, targets: &Tensor) -> Result<f64, MetricsError> {
    let (n, l) = (preds.shape()[0], preds.shape()[1]);
    let mut sum = 0.0;
    let mut count = 0usize;
    for li in 0..l {
        let scores: Vec<f64> = (0..n).map(|r| preds.data()[r * l + li]).collect();
        let labels: Vec<u8> = (0..n).map(|r| targets.data()[r * l + li] as u8).collect();
        match auroc(&scores, &labels) {
            Ok(r) => {
                sum += r.auroc;
                count += 1;
            }
            Err(MetricsError::DegenerateLabels { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(if count == 0 { f64::NAN } else { sum / count as f64 })
}

/// Initializes a model from the config and trains it; see [`train_from`].
pub fn train(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    table: &PenaltyTable,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, NnError> {
    let model = Model::init(model_cfg.clone(), derive_seed(cfg.seed, 0))?;
    train_from(model, dataset, table, cfg)
}

/// Trains `model` on the dataset's train split, validating each epoch on the
/// val split.
///
/// Batch order is one seed-derived permutation reused every epoch;
/// augmentation draws come from a fresh per-epoch stream, so epochs see
/// different transforms of the same sequence. Returns the checkpoint with
/// the lowest validation loss. A non-finite training or validation quantity
/// aborts with [`NnError::Diverged`].
pub fn train_from(
    model: Model,
    dataset: &Dataset,
    table: &PenaltyTable,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, NnError> {
    cfg.validate()?;
    model.config.validate()?;
    if model.config.output_labels != dataset.taxonomy().len() {
        return Err(NnError::InvalidConfig(format!(
            "model emits {} labels but the taxonomy has {}",
            model.config.output_labels,
            dataset.taxonomy().len()
        )));
    }

    let mut model = model;
    let mut history = History::default();
    if cfg.max_epochs == 0 {
        return Ok(TrainOutcome {
            model,
            history,
            best_epoch: None,
        });
    }

    let mut train_idx = dataset.indices(Split::Train);
    let val_idx = dataset.indices(Split::Val);
    if train_idx.is_empty() {
        return Err(NnError::EmptySplit("train"));
    }
    if val_idx.is_empty() {
        return Err(NnError::EmptySplit("val"));
    }

    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    train_idx.shuffle(&mut order_rng);

    let val_targets = batch_targets(dataset, &val_idx);
    let val_images: Vec<&Tensor> = val_idx.iter().map(|&i| dataset.image(i)).collect();

    let mut opt = Adam::new(&model.config);
    let mut controller = TrainController::new(
        cfg.lr,
        cfg.plateau_factor,
        cfg.plateau_patience,
        cfg.early_stop_patience,
    );
    let mut best: Option<(Model, usize)> = None;

    for epoch in 1..=cfg.max_epochs {
        let lr = controller.lr();
        let mut aug_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2 * epoch as u64));
        let drop_epoch_seed = derive_seed(cfg.seed, 2 * epoch as u64 + 1);

        let mut loss_weighted = 0.0;
        for (bi, chunk) in train_idx.chunks(cfg.batch_size).enumerate() {
            let mut owned: Vec<Tensor> = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let img = dataset.image(i);
                owned.push(match &cfg.augment {
                    Some(a) => augment(img, a, &mut aug_rng)?,
                    None => img.clone(),
                });
            }
            let refs: Vec<&Tensor> = owned.iter().collect();
            let y = batch_targets(dataset, chunk);

            let drop_seed = derive_seed(drop_epoch_seed, bi as u64);
            let (preds, cache) = model.forward(&refs, true, drop_seed)?;
            if preds.data().iter().any(|v| !v.is_finite()) {
                return Err(NnError::Diverged { epoch });
            }
            let loss = hbce(&y, &preds, table, &cfg.loss)?;
            if !loss.total.is_finite() {
                return Err(NnError::Diverged { epoch });
            }
            loss_weighted += loss.total * chunk.len() as f64;

            let dpred = hbce_grad(&y, &preds, table, &cfg.loss)?;
            let grads = backward(&model, &cache, &dpred)?;
            opt.step(&mut model.params, &grads, lr)?;
        }
        let train_loss = loss_weighted / train_idx.len() as f64;

        let val_preds = model.predict(&val_images, cfg.batch_size)?;
        if val_preds.data().iter().any(|v| !v.is_finite()) {
            return Err(NnError::Diverged { epoch });
        }
        let val_loss = hbce(&val_targets, &val_preds, table, &cfg.loss)?.total;
        if !val_loss.is_finite() {
            return Err(NnError::Diverged { epoch });
        }
        let val_mean_auroc = mean_val_auroc(&val_preds, &val_targets)?;

        let decision = controller.observe(val_loss, val_mean_auroc);
        if decision.improved_loss {
            best = Some((model.clone(), epoch));
        }
        history.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_mean_auroc,
            lr,
            checkpointed: decision.save_checkpoint,
        });
        if decision.stop {
            break;
        }
    }

    let (model, best_epoch) = match best {
        Some((m, e)) => (m, Some(e)),
        // first epoch always improves on +inf, so this needs max_epochs > 0
        // plus an immediate divergence, which returns above
        None => (model, None),
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::fixed_penalties;
    use crate::synthdata::{generate, GenConfig};
    use crate::taxonomy::Taxonomy;

    fn taxonomy() -> Taxonomy {
        Taxonomy::new(vec!["P", "A"], vec![(0, 1)]).unwrap()
    }

    fn dataset(n: usize, seed: u64) -> Dataset {
        generate(
            &taxonomy(),
            &GenConfig {
                n_samples: n,
                image_h: 10,
                image_w: 10,
                signal: 0.8,
                noise_std: 0.05,
                root_marginal: 0.5,
                p_child_pos: 0.7,
                p_child_neg: 0.1,
                seed,
            },
        )
        .unwrap()
    }

    fn small_model_cfg() -> ModelConfig {
        ModelConfig {
            input_h: 10,
            input_w: 10,
            conv_filters: 4,
            conv_kernel: 3,
            dense_units: 8,
            output_labels: 2,
            dropout_rate: 0.25,
        }
    }

    fn quick_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            max_epochs: epochs,
            batch_size: 16,
            lr: 0.01,
            seed: 7,
            augment: None,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn controller_policy_sequence() {
        let mut c = TrainController::new(1.0, 0.9, 1, 3);
        // epoch 1: first loss always improves
        let d1 = c.observe(1.0, 0.50);
        assert!(d1.save_checkpoint && d1.improved_loss && !d1.stop);
        assert_eq!(d1.lr, 1.0);
        // epoch 2: loss improves again
        let d2 = c.observe(0.9, 0.60);
        assert!(d2.save_checkpoint && !d2.stop);
        assert_eq!(d2.lr, 1.0);
        // epoch 3: no improvement on either metric
        let d3 = c.observe(0.95, 0.55);
        assert!(!d3.save_checkpoint && !d3.improved_loss && !d3.stop);
        assert!((d3.lr - 0.9).abs() < 1e-12);
        // epoch 4: loss still flat but AUROC improves: checkpoint, decay
        let d4 = c.observe(0.94, 0.65);
        assert!(d4.save_checkpoint && !d4.improved_loss && !d4.stop);
        assert!((d4.lr - 0.81).abs() < 1e-12);
        // epoch 5: third consecutive bad epoch: stop
        let d5 = c.observe(0.93, 0.60);
        assert!(d5.stop);
        assert!((d5.lr - 0.729).abs() < 1e-12);
        assert_eq!(c.decays(), 3);
    }

    #[test]
    fn controller_resets_plateau_on_improvement() {
        let mut c = TrainController::new(1.0, 0.5, 1, 3);
        c.observe(1.0, 0.5);
        c.observe(1.1, 0.5); // bad 1, decay
        let d = c.observe(0.8, 0.5); // improvement resets the streak
        assert!(d.improved_loss && !d.stop);
        assert_eq!(d.lr, 0.5);
        c.observe(0.9, 0.5); // bad 1 again
        c.observe(0.9, 0.5); // bad 2
        let d = c.observe(0.9, 0.5); // bad 3: stop
        assert!(d.stop);
        assert_eq!(d.lr, 0.0625);
    }

    #[test]
    fn strict_comparison_treats_equal_loss_as_plateau() {
        let mut c = TrainController::new(1.0, 0.9, 1, 3);
        c.observe(1.0, 0.5);
        let d = c.observe(1.0, 0.5);
        assert!(!d.save_checkpoint);
        assert!((d.lr - 0.9).abs() < 1e-12);
    }

    #[test]
    fn history_csv_layout() {
        let h = History {
            records: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.75,
                val_loss: 0.5,
                val_mean_auroc: 0.875,
                lr: 0.001,
                checkpointed: true,
            }],
        };
        assert_eq!(
            h.to_csv(),
            "epoch,train_loss,val_loss,val_mean_auroc,lr\n1,0.750000,0.500000,0.875000,0.001000\n"
        );
    }

    #[test]
    fn zero_epochs_returns_initial_model_untouched() {
        let d = dataset(26, 3);
        let table = fixed_penalties(&taxonomy(), 1.0).unwrap();
        let cfg = quick_cfg(0);
        let out = train(&d, &small_model_cfg(), &table, &cfg).unwrap();
        assert!(out.history.records.is_empty());
        assert_eq!(out.best_epoch, None);
        let fresh = Model::init(small_model_cfg(), derive_seed(cfg.seed, 0)).unwrap();
        assert_eq!(out.model, fresh);
    }

    #[test]
    fn training_is_deterministic() {
        let d = dataset(130, 3);
        let table = fixed_penalties(&taxonomy(), 1.0).unwrap();
        let cfg = TrainConfig {
            augment: Some(AugmentConfig::default()),
            ..quick_cfg(2)
        };
        let a = train(&d, &small_model_cfg(), &table, &cfg).unwrap();
        let b = train(&d, &small_model_cfg(), &table, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history.to_csv(), b.history.to_csv());
        let c = train(
            &d,
            &small_model_cfg(),
            &table,
            &TrainConfig { seed: 8, ..cfg },
        )
        .unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn loss_decreases_on_easy_data() {
        let d = dataset(130, 5);
        let table = fixed_penalties(&taxonomy(), 1.0).unwrap();
        let out = train(&d, &small_model_cfg(), &table, &quick_cfg(6)).unwrap();
        let first = out.history.records.first().unwrap().train_loss;
        let last = out.history.records.last().unwrap().train_loss;
        assert!(
            last < first,
            "train loss went from {first} to {last} over {} epochs",
            out.history.records.len()
        );
        assert!(out.best_epoch.is_some());
    }

    #[test]
    fn lr_history_follows_decay_invariant() {
        let d = dataset(65, 9);
        let table = fixed_penalties(&taxonomy(), 1.0).unwrap();
        let cfg = quick_cfg(10);
        let out = train(&d, &small_model_cfg(), &table, &cfg).unwrap();
        let mut expected = cfg.lr;
        let mut best = f64::INFINITY;
        for r in &out.history.records {
            assert!(
                (r.lr - expected).abs() < 1e-15,
                "epoch {}: lr {} expected {expected}",
                r.epoch,
                r.lr
            );
            if r.val_loss < best {
                best = r.val_loss;
            } else {
                expected *= cfg.plateau_factor;
            }
        }
    }

    #[test]
    fn early_stopping_caps_epochs() {
        let d = dataset(39, 1);
        let table = fixed_penalties(&taxonomy(), 1.0).unwrap();
        // lr so large the first epoch is the best and the rest plateau
        let cfg = TrainConfig {
            lr: 5.0,
            ..quick_cfg(40)
        };
        let out = train(&d, &small_model_cfg(), &table, &cfg);
        match out {
            Ok(out) => {
                assert!(
                    out.history.records.len() < 40,
                    "expected an early stop, ran all {} epochs",
                    out.history.records.len()
                );
                let stopped = out.history.records.len();
                let last = &out.history.records[stopped - 1];
                assert!(!last.checkpointed);
            }
            // blowing up instead is acceptable for this lr
            Err(NnError::Diverged { .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn best_model_has_lowest_val_loss() {
        let d = dataset(65, 2);
        let table = fixed_penalties(&taxonomy(), 1.0).unwrap();
        let cfg = quick_cfg(8);
        let out = train(&d, &small_model_cfg(), &table, &cfg).unwrap();
        let best_epoch = out.best_epoch.unwrap();
        let min_loss = out
            .history
            .records
            .iter()
            .map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min);
        let best_rec = out
            .history
            .records
            .iter()
            .find(|r| r.epoch == best_epoch)
            .unwrap();
        assert_eq!(best_rec.val_loss, min_loss);
        assert!(best_rec.checkpointed);

        // the stored model reproduces that epoch's validation loss
        let val_idx = d.indices(Split::Val);
        let val_images: Vec<&Tensor> = val_idx.iter().map(|&i| d.image(i)).collect();
        let preds = out.model.predict(&val_images, 16).unwrap();
        let y = batch_targets(&d, &val_idx);
        let loss = hbce(&y, &preds, &table, &cfg.loss).unwrap().total;
        assert!((loss - min_loss).abs() < 1e-12);
    }

    #[test]
    fn nan_parameters_surface_as_divergence() {
        let d = dataset(26, 3);
        let table = fixed_penalties(&taxonomy(), 1.0).unwrap();
        let mut m = Model::init(small_model_cfg(), 0).unwrap();
        m.params.fc2_w.data_mut()[0] = f64::NAN;
        let err = train_from(m, &d, &table, &quick_cfg(2)).unwrap_err();
        assert!(matches!(err, NnError::Diverged { epoch: 1 }));
    }

    #[test]
    fn empty_splits_are_rejected() {
        // 5 samples: 5*10/13 = 3 train, 0 val
        let d = dataset(5, 3);
        assert!(d.indices(Split::Val).is_empty());
        let table = fixed_penalties(&taxonomy(), 1.0).unwrap();
        let err = train(&d, &small_model_cfg(), &table, &quick_cfg(1)).unwrap_err();
        assert!(matches!(err, NnError::EmptySplit("val")));
    }

    #[test]
    fn degenerate_val_labels_are_excluded_from_mean_auroc() {
        // root_marginal 1 makes the parent label constant in every split
        let d = generate(
            &taxonomy(),
            &GenConfig {
                n_samples: 130,
                image_h: 10,
                image_w: 10,
                root_marginal: 1.0,
                p_child_pos: 0.5,
                p_child_neg: 0.5,
                seed: 4,
                ..GenConfig::default()
            },
        )
        .unwrap();
        let table = fixed_penalties(&taxonomy(), 1.0).unwrap();
        let out = train(&d, &small_model_cfg(), &table, &quick_cfg(1)).unwrap();
        assert!(out.history.records[0].val_mean_auroc.is_finite());
    }

    #[test]
    fn augmentation_changes_the_run() {
        let d = dataset(39, 3);
        let table = fixed_penalties(&taxonomy(), 1.0).unwrap();
        let plain = train(&d, &small_model_cfg(), &table, &quick_cfg(1)).unwrap();
        let augged = train(
            &d,
            &small_model_cfg(),
            &table,
            &TrainConfig {
                augment: Some(AugmentConfig::default()),
                ..quick_cfg(1)
            },
        )
        .unwrap();
        assert_ne!(param_bits(&plain), param_bits(&augged));

        fn param_bits(o: &TrainOutcome) -> Vec<u64> {
            o.model
                .params
                .tensors()
                .iter()
                .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
                .collect()
        }
    }

    #[test]
    fn config_validation_errors() {
        let d = dataset(26, 3);
        let table = fixed_penalties(&taxonomy(), 1.0).unwrap();
        for bad in [
            TrainConfig {
                batch_size: 0,
                ..quick_cfg(1)
            },
            TrainConfig {
                lr: 0.0,
                ..quick_cfg(1)
            },
            TrainConfig {
                plateau_factor: 1.5,
                ..quick_cfg(1)
            },
            TrainConfig {
                early_stop_patience: 0,
                ..quick_cfg(1)
            },
        ] {
            assert!(train(&d, &small_model_cfg(), &table, &bad).is_err());
        }
        // label-count mismatch between model and taxonomy
        let mut wrong = small_model_cfg();
        wrong.output_labels = 3;
        assert!(matches!(
            train(&d, &wrong, &table, &quick_cfg(1)),
            Err(NnError::InvalidConfig(_))
        ));
    }
}
