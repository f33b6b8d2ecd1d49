//! A small dense/convolutional network trained from scratch: one same-padded
//! convolution, ReLU, global pooling (scaled by 1/sqrt(H*W) so pooled
//! features keep a workable magnitude), one hidden dense layer with
//! inverted dropout, and a sigmoid output per label.
//!
//! Everything is f64 and single-threaded; the sizes involved (tens of
//! thousands of parameters) make that comfortably fast and keep runs
//! bit-reproducible. Dropout randomness comes from an explicit seed passed
//! to [`Model::forward`], so a forward pass is a pure function of
//! `(params, batch, train, seed)`.

mod adam;
mod checkpoint;
mod train;

pub use adam::Adam;
pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use train::{
    train, train_from, ControllerDecision, EpochRecord, History, TrainConfig, TrainController,
    TrainOutcome,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::loss::{sigmoid, LossError};
use crate::metrics::MetricsError;
use crate::synthdata::SynthError;
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("batch must contain at least one image")]
    EmptyBatch,
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("training diverged (non-finite loss or prediction) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("mc passes must be at least 1")]
    ZeroPasses,
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Architecture hyperparameters. The toy defaults fit the synthetic images.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub conv_filters: usize,
    /// Kernel side length; must be odd so same-padding is symmetric.
    pub conv_kernel: usize,
    pub dense_units: usize,
    pub output_labels: usize,
    pub dropout_rate: f64,
}

impl ModelConfig {
    pub fn toy(input_h: usize, input_w: usize, output_labels: usize) -> Self {
        ModelConfig {
            input_h,
            input_w,
            conv_filters: 8,
            conv_kernel: 3,
            dense_units: 32,
            output_labels,
            dropout_rate: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let positive = [
            ("input_h", self.input_h),
            ("input_w", self.input_w),
            ("conv_filters", self.conv_filters),
            ("conv_kernel", self.conv_kernel),
            ("dense_units", self.dense_units),
            ("output_labels", self.output_labels),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(NnError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.conv_kernel % 2 == 0 {
            return Err(NnError::InvalidConfig(format!(
                "conv_kernel must be odd, got {}",
                self.conv_kernel
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnError::InvalidConfig(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// The six learnable tensors. Gradients and optimizer moments reuse this
/// shape bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `[filters, kernel, kernel]`
    pub conv_w: Tensor,
    /// `[filters]`
    pub conv_b: Tensor,
    /// `[filters, dense_units]`
    pub fc1_w: Tensor,
    /// `[dense_units]`
    pub fc1_b: Tensor,
    /// `[dense_units, output_labels]`
    pub fc2_w: Tensor,
    /// `[output_labels]`
    pub fc2_b: Tensor,
}

impl Params {
    pub fn zeros(cfg: &ModelConfig) -> Params {
        let (f, k) = (cfg.conv_filters, cfg.conv_kernel);
        let (u, l) = (cfg.dense_units, cfg.output_labels);
        Params {
            conv_w: Tensor::zeros(&[f, k, k]),
            conv_b: Tensor::zeros(&[f]),
            fc1_w: Tensor::zeros(&[f, u]),
            fc1_b: Tensor::zeros(&[u]),
            fc2_w: Tensor::zeros(&[u, l]),
            fc2_b: Tensor::zeros(&[l]),
        }
    }

    /// Checkpoint and optimizer tensor order: conv then dense, weights
    /// before biases.
    pub fn tensors(&self) -> [&Tensor; 6] {
        [
            &self.conv_w,
            &self.conv_b,
            &self.fc1_w,
            &self.fc1_b,
            &self.fc2_w,
            &self.fc2_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.conv_w,
            &mut self.conv_b,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.fc2_w,
            &mut self.fc2_b,
        ]
    }
}

/// Tensor names matching [`Params::tensors`] order.
pub(crate) const TENSOR_NAMES: [&str; 6] =
    ["conv_w", "conv_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b"];

fn expected_shapes(cfg: &ModelConfig) -> [Vec<usize>; 6] {
    let (f, k) = (cfg.conv_filters, cfg.conv_kernel);
    let (u, l) = (cfg.dense_units, cfg.output_labels);
    [
        vec![f, k, k],
        vec![f],
        vec![f, u],
        vec![u],
        vec![u, l],
        vec![l],
    ]
}

/// Config plus parameters. Parameter shapes must stay consistent with the
/// config; constructors and the checkpoint loader guarantee it.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

fn fill_he_uniform<R: Rng>(data: &mut [f64], fan_in: usize, rng: &mut R) {
    let bound = (6.0 / fan_in as f64).sqrt();
    for v in data {
        *v = rng.gen_range(-bound..=bound);
    }
}

impl Model {
    /// He-uniform weights (`U(+-sqrt(6 / fan_in))`). Two departures from
    /// the plain recipe, both aimed at making a *fixed* small learning rate
    /// workable: conv biases start at -0.2 so filters begin selective
    /// (background-level windows sit below the ReLU gate and pooled
    /// features reflect localized structure from the first step), and the
    /// output layer is drawn 10x smaller so the untrained model starts near
    /// p = 0.5 for every label instead of spending its first epochs
    /// unwinding large random logits. Weight tensors are filled in
    /// checkpoint order, so a seed pins every value.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Model, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(&config);
        let kk = config.conv_kernel * config.conv_kernel;
        fill_he_uniform(params.conv_w.data_mut(), kk, &mut rng);
        fill_he_uniform(params.fc1_w.data_mut(), config.conv_filters, &mut rng);
        fill_he_uniform(params.fc2_w.data_mut(), config.dense_units, &mut rng);
        for v in params.conv_b.data_mut() {
            *v = -0.2;
        }
        for v in params.fc2_w.data_mut() {
            *v *= 0.1;
        }
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: Params) -> Result<Model, NnError> {
        config.validate()?;
        for ((tensor, expected), name) in params
            .tensors()
            .iter()
            .zip(expected_shapes(&config))
            .zip(TENSOR_NAMES)
        {
            if tensor.shape() != expected.as_slice() {
                return Err(NnError::InvalidConfig(format!(
                    "{name} must have shape {expected:?}, got {:?}",
                    tensor.shape()
                )));
            }
        }
        Ok(Model { config, params })
    }

    /// Runs the network on a batch of `[H, W]` images and returns `[B, L]`
    /// sigmoid outputs plus the intermediate activations.
    ///
    /// In training mode an inverted dropout mask is drawn from
    /// `dropout_seed`; evaluation mode consumes no randomness.
    pub fn forward(
        &self,
        batch: &[&Tensor],
        train: bool,
        dropout_seed: u64,
    ) -> Result<(Tensor, Cache), NnError> {
        let cfg = &self.config;
        let b = batch.len();
        if b == 0 {
            return Err(NnError::EmptyBatch);
        }
        let (h, w) = (cfg.input_h, cfg.input_w);
        for img in batch {
            if img.shape() != [h, w] {
                return Err(NnError::ShapeMismatch {
                    expected: vec![h, w],
                    got: img.shape().to_vec(),
                });
            }
        }
        let (f, k) = (cfg.conv_filters, cfg.conv_kernel);
        let (u, l) = (cfg.dense_units, cfg.output_labels);
        let pad = k / 2;
        let hw = h * w;

        let mut inputs = Tensor::zeros(&[b, h, w]);
        for (bi, img) in batch.iter().enumerate() {
            inputs.data_mut()[bi * hw..(bi + 1) * hw].copy_from_slice(img.data());
        }

        // conv, same zero padding, stride 1
        let mut conv_pre = Tensor::zeros(&[b, f, h, w]);
        {
            let x = inputs.data();
            let wt = self.params.conv_w.data();
            let bias = self.params.conv_b.data();
            let out = conv_pre.data_mut();
            for bi in 0..b {
                for fi in 0..f {
                    let kernel = &wt[fi * k * k..(fi + 1) * k * k];
                    for r in 0..h {
                        for c in 0..w {
                            let mut acc = bias[fi];
                            for i in 0..k {
                                let rr = r + i;
                                if rr < pad || rr >= h + pad {
                                    continue;
                                }
                                let sr = rr - pad;
                                for j in 0..k {
                                    let cc = c + j;
                                    if cc < pad || cc >= w + pad {
                                        continue;
                                    }
                                    acc += kernel[i * k + j] * x[bi * hw + sr * w + cc - pad];
                                }
                            }
                            out[((bi * f + fi) * h + r) * w + c] = acc;
                        }
                    }
                }
            }
        }

        let mut conv_post = conv_pre.clone();
        for v in conv_post.data_mut() {
            *v = v.max(0.0);
        }

        // global pooling over each feature map, scaled by 1/sqrt(H*W)
        // instead of 1/(H*W): plain averaging leaves the pooled features so
        // small that the dense layers would need weights far outside the
        // range a low fixed learning rate can reach, and training stalls
        let mut gap = Tensor::zeros(&[b, f]);
        let pool_scale = 1.0 / (hw as f64).sqrt();
        for bi in 0..b {
            for fi in 0..f {
                let base = (bi * f + fi) * hw;
                let sum: f64 = conv_post.data()[base..base + hw].iter().sum();
                gap.data_mut()[bi * f + fi] = sum * pool_scale;
            }
        }

        // dense 1 + ReLU
        let mut fc1_pre = Tensor::zeros(&[b, u]);
        for bi in 0..b {
            for ui in 0..u {
                let mut acc = self.params.fc1_b.data()[ui];
                for fi in 0..f {
                    acc += gap.data()[bi * f + fi] * self.params.fc1_w.data()[fi * u + ui];
                }
                fc1_pre.data_mut()[bi * u + ui] = acc;
            }
        }

        // inverted dropout: surviving units are scaled by 1/(1-rate) so
        // evaluation mode needs no rescaling
        let rate = cfg.dropout_rate;
        let mut drop_mask = Tensor::zeros(&[b, u]);
        if train && rate > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
            let keep_scale = 1.0 / (1.0 - rate);
            for v in drop_mask.data_mut() {
                *v = if rng.gen::<f64>() < rate { 0.0 } else { keep_scale };
            }
        } else {
            for v in drop_mask.data_mut() {
                *v = 1.0;
            }
        }
        let mut dropped = Tensor::zeros(&[b, u]);
        for i in 0..b * u {
            dropped.data_mut()[i] = fc1_pre.data()[i].max(0.0) * drop_mask.data()[i];
        }

        // dense 2 + sigmoid
        let mut logits = Tensor::zeros(&[b, l]);
        for bi in 0..b {
            for li in 0..l {
                let mut acc = self.params.fc2_b.data()[li];
                for ui in 0..u {
                    acc += dropped.data()[bi * u + ui] * self.params.fc2_w.data()[ui * l + li];
                }
                logits.data_mut()[bi * l + li] = acc;
            }
        }
        let mut preds = logits.clone();
        for v in preds.data_mut() {
            *v = sigmoid(*v);
        }

        let cache = Cache {
            inputs,
            conv_pre,
            conv_post,
            gap,
            fc1_pre,
            drop_mask,
            dropped,
            logits,
            preds: preds.clone(),
        };
        Ok((preds, cache))
    }

    /// Evaluation-mode predictions in batches of `chunk`, without keeping
    /// caches around. Returns `[N, L]`.
    pub fn predict(&self, images: &[&Tensor], chunk: usize) -> Result<Tensor, NnError> {
        if images.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let chunk = chunk.max(1);
        let l = self.config.output_labels;
        let mut out = Tensor::zeros(&[images.len(), l]);
        let mut row = 0;
        for part in images.chunks(chunk) {
            let (preds, _) = self.forward(part, false, 0)?;
            out.data_mut()[row * l..(row + part.len()) * l].copy_from_slice(preds.data());
            row += part.len();
        }
        Ok(out)
    }
}

/// Intermediate activations from one forward pass, retained for
/// backpropagation and for class activation maps.
#[derive(Debug, Clone)]
pub struct Cache {
    /// `[B, H, W]`
    pub(crate) inputs: Tensor,
    /// `[B, F, H, W]` before ReLU
    pub(crate) conv_pre: Tensor,
    /// `[B, F, H, W]` after ReLU; these are the feature maps CAMs combine
    pub(crate) conv_post: Tensor,
    /// `[B, F]`
    pub(crate) gap: Tensor,
    /// `[B, U]` before ReLU
    pub(crate) fc1_pre: Tensor,
    /// `[B, U]` zeros and `1/(1-rate)` survivors
    pub(crate) drop_mask: Tensor,
    /// `[B, U]` after ReLU and dropout
    pub(crate) dropped: Tensor,
    /// `[B, L]` pre-sigmoid
    pub(crate) logits: Tensor,
    /// `[B, L]`
    pub(crate) preds: Tensor,
}

impl Cache {
    /// Post-ReLU convolution activations, `[B, F, H, W]`.
    pub fn conv_feature_maps(&self) -> &Tensor {
        &self.conv_post
    }

    pub fn logits(&self) -> &Tensor {
        &self.logits
    }

    pub fn preds(&self) -> &Tensor {
        &self.preds
    }
}

/// Backpropagates `dloss_dpred` (`[B, L]`, gradient of the loss with respect
/// to the sigmoid outputs) through the cached pass and returns parameter
/// gradients.
pub fn backward(model: &Model, cache: &Cache, dloss_dpred: &Tensor) -> Result<Params, NnError> {
    let cfg = &model.config;
    let b = cache.gap.shape()[0];
    let (h, w) = (cfg.input_h, cfg.input_w);
    let (f, k) = (cfg.conv_filters, cfg.conv_kernel);
    let (u, l) = (cfg.dense_units, cfg.output_labels);
    if dloss_dpred.shape() != [b, l] {
        return Err(NnError::ShapeMismatch {
            expected: vec![b, l],
            got: dloss_dpred.shape().to_vec(),
        });
    }
    let pad = k / 2;
    let hw = h * w;
    let mut grads = Params::zeros(cfg);

    // through the sigmoid: dz3 = dp * p * (1 - p)
    let mut dz3 = vec![0.0; b * l];
    for i in 0..b * l {
        let p = cache.preds.data()[i];
        dz3[i] = dloss_dpred.data()[i] * p * (1.0 - p);
    }

    for bi in 0..b {
        for li in 0..l {
            let g = dz3[bi * l + li];
            grads.fc2_b.data_mut()[li] += g;
            for ui in 0..u {
                grads.fc2_w.data_mut()[ui * l + li] += cache.dropped.data()[bi * u + ui] * g;
            }
        }
    }

    // through dropout (same scaled mask) and the hidden ReLU
    let mut dz2 = vec![0.0; b * u];
    for bi in 0..b {
        for ui in 0..u {
            let mut acc = 0.0;
            for li in 0..l {
                acc += model.params.fc2_w.data()[ui * l + li] * dz3[bi * l + li];
            }
            acc *= cache.drop_mask.data()[bi * u + ui];
            if cache.fc1_pre.data()[bi * u + ui] <= 0.0 {
                acc = 0.0;
            }
            dz2[bi * u + ui] = acc;
        }
    }

    for bi in 0..b {
        for ui in 0..u {
            let g = dz2[bi * u + ui];
            grads.fc1_b.data_mut()[ui] += g;
            for fi in 0..f {
                grads.fc1_w.data_mut()[fi * u + ui] += cache.gap.data()[bi * f + fi] * g;
            }
        }
    }

    // pooling spreads each feature gradient uniformly over its map, with
    // the same 1/sqrt(H*W) scale the forward pass applies
    let mut dgap = vec![0.0; b * f];
    let pool_scale = 1.0 / (hw as f64).sqrt();
    for bi in 0..b {
        for fi in 0..f {
            let mut acc = 0.0;
            for ui in 0..u {
                acc += model.params.fc1_w.data()[fi * u + ui] * dz2[bi * u + ui];
            }
            dgap[bi * f + fi] = acc * pool_scale;
        }
    }

    for bi in 0..b {
        for fi in 0..f {
            let dmap = dgap[bi * f + fi];
            if dmap == 0.0 {
                continue;
            }
            let base = (bi * f + fi) * hw;
            for r in 0..h {
                for c in 0..w {
                    if cache.conv_pre.data()[base + r * w + c] <= 0.0 {
                        continue;
                    }
                    grads.conv_b.data_mut()[fi] += dmap;
                    for i in 0..k {
                        let rr = r + i;
                        if rr < pad || rr >= h + pad {
                            continue;
                        }
                        let sr = rr - pad;
                        for j in 0..k {
                            let cc = c + j;
                            if cc < pad || cc >= w + pad {
                                continue;
                            }
                            grads.conv_w.data_mut()[fi * k * k + i * k + j] +=
                                dmap * cache.inputs.data()[bi * hw + sr * w + cc - pad];
                        }
                    }
                }
            }
        }
    }

    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{hbce, hbce_grad, IndicatorMode, LossConfig};
    use crate::penalty::PenaltyTable;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            input_h: 5,
            input_w: 5,
            conv_filters: 2,
            conv_kernel: 3,
            dense_units: 3,
            output_labels: 2,
            dropout_rate: 0.5,
        }
    }

    fn tiny_batch() -> Vec<Tensor> {
        let mut a = Tensor::zeros(&[5, 5]);
        let mut b = Tensor::zeros(&[5, 5]);
        for i in 0..25 {
            a.data_mut()[i] = (i as f64 * 0.03).sin().abs();
            b.data_mut()[i] = ((i + 7) as f64 * 0.11).cos().abs() * 0.8;
        }
        vec![a, b]
    }

    fn soft_cfg() -> LossConfig {
        LossConfig {
            lambda: 0.8,
            mode: IndicatorMode::soft_default(),
            ..LossConfig::default()
        }
    }

    fn table() -> PenaltyTable {
        PenaltyTable::new(vec![((0, 1), 0.6)]).unwrap()
    }

    #[test]
    fn init_is_seeded_he_uniform() {
        let m = Model::init(tiny_config(), 3).unwrap();
        let m2 = Model::init(tiny_config(), 3).unwrap();
        assert_eq!(m, m2);
        let m3 = Model::init(tiny_config(), 4).unwrap();
        assert_ne!(m, m3);

        // conv filters start gated; dense biases start neutral
        assert!(m.params.conv_b.data().iter().all(|&v| v == -0.2));
        assert!(m.params.fc1_b.data().iter().all(|&v| v == 0.0));
        assert!(m.params.fc2_b.data().iter().all(|&v| v == 0.0));
        let bound_conv = (6.0_f64 / 9.0).sqrt();
        assert!(m.params.conv_w.data().iter().all(|&v| v.abs() <= bound_conv));
        let bound_fc1 = (6.0_f64 / 2.0).sqrt();
        assert!(m.params.fc1_w.data().iter().all(|&v| v.abs() <= bound_fc1));
        // the output layer is deliberately drawn 10x under its He bound
        let bound_fc2 = 0.1 * (6.0_f64 / 3.0).sqrt();
        assert!(m.params.fc2_w.data().iter().all(|&v| v.abs() <= bound_fc2));
        assert!(m.params.conv_w.data().iter().any(|&v| v != 0.0));
        assert!(m.params.fc2_w.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config();
        c.conv_kernel = 4;
        assert!(matches!(
            Model::init(c, 0),
            Err(NnError::InvalidConfig(_))
        ));
        let mut c = tiny_config();
        c.dropout_rate = 1.0;
        assert!(Model::init(c, 0).is_err());
        let mut c = tiny_config();
        c.conv_filters = 0;
        assert!(Model::init(c, 0).is_err());
    }

    #[test]
    fn forward_shapes_and_ranges() {
        let m = Model::init(tiny_config(), 1).unwrap();
        let batch = tiny_batch();
        let refs: Vec<&Tensor> = batch.iter().collect();
        let (preds, cache) = m.forward(&refs, false, 0).unwrap();
        assert_eq!(preds.shape(), &[2, 2]);
        assert_eq!(cache.conv_feature_maps().shape(), &[2, 2, 5, 5]);
        assert!(preds.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert!(cache
            .conv_feature_maps()
            .data()
            .iter()
            .all(|&v| v >= 0.0));
    }

    #[test]
    fn forward_rejects_bad_batches() {
        let m = Model::init(tiny_config(), 1).unwrap();
        assert!(matches!(m.forward(&[], false, 0), Err(NnError::EmptyBatch)));
        let wrong = Tensor::zeros(&[4, 5]);
        assert!(matches!(
            m.forward(&[&wrong], false, 0),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn eval_mode_is_deterministic_and_ignores_seed() {
        let m = Model::init(tiny_config(), 1).unwrap();
        let batch = tiny_batch();
        let refs: Vec<&Tensor> = batch.iter().collect();
        let (a, _) = m.forward(&refs, false, 1).unwrap();
        let (b, _) = m.forward(&refs, false, 999).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn train_mode_dropout_is_seeded() {
        let m = Model::init(tiny_config(), 1).unwrap();
        let batch = tiny_batch();
        let refs: Vec<&Tensor> = batch.iter().collect();
        let (a, ca) = m.forward(&refs, true, 7).unwrap();
        let (b, _) = m.forward(&refs, true, 7).unwrap();
        assert_eq!(a, b);
        // mask entries are either dropped or inverted-scaled
        for &v in ca.drop_mask.data() {
            assert!(v == 0.0 || v == 2.0);
        }
        // a different seed almost surely drops a different unit set
        let (_, cb) = m.forward(&refs, true, 8).unwrap();
        assert_ne!(ca.drop_mask, cb.drop_mask);
    }

    #[test]
    fn zero_dropout_makes_train_match_eval() {
        let mut c = tiny_config();
        c.dropout_rate = 0.0;
        let m = Model::init(c, 1).unwrap();
        let batch = tiny_batch();
        let refs: Vec<&Tensor> = batch.iter().collect();
        let (a, _) = m.forward(&refs, true, 7).unwrap();
        let (b, _) = m.forward(&refs, false, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gap_of_constant_input_matches_hand_computation() {
        // all-ones 1x1-kernel model: conv output = w*x + b everywhere, so
        // pooling returns that value times sqrt(H*W)
        let cfg = ModelConfig {
            input_h: 3,
            input_w: 4,
            conv_filters: 1,
            conv_kernel: 1,
            dense_units: 1,
            output_labels: 1,
            dropout_rate: 0.0,
        };
        let mut m = Model::init(cfg, 0).unwrap();
        m.params.conv_w.data_mut()[0] = 2.0;
        m.params.conv_b.data_mut()[0] = 0.25;
        let mut img = Tensor::zeros(&[3, 4]);
        for v in img.data_mut() {
            *v = 0.5;
        }
        let (_, cache) = m.forward(&[&img], false, 0).unwrap();
        assert!((cache.gap.data()[0] - 1.25 * 12f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn predict_matches_forward_chunking() {
        let m = Model::init(tiny_config(), 2).unwrap();
        let batch = tiny_batch();
        let refs: Vec<&Tensor> = batch.iter().collect();
        let (all, _) = m.forward(&refs, false, 0).unwrap();
        let chunked = m.predict(&refs, 1).unwrap();
        assert_eq!(all, chunked);
    }

    fn loss_for(
        m: &Model,
        refs: &[&Tensor],
        y: &Tensor,
        train: bool,
        seed: u64,
        cfg: &LossConfig,
    ) -> f64 {
        let (preds, _) = m.forward(refs, train, seed).unwrap();
        hbce(y, &preds, &table(), cfg).unwrap().total
    }

    fn finite_difference_check(train: bool, seed: u64, loss_cfg: &LossConfig) {
        let m = Model::init(tiny_config(), 11).unwrap();
        let batch = tiny_batch();
        let refs: Vec<&Tensor> = batch.iter().collect();
        let y = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();

        let (preds, cache) = m.forward(&refs, train, seed).unwrap();
        let dpred = hbce_grad(&y, &preds, &table(), loss_cfg).unwrap();
        let grads = backward(&m, &cache, &dpred).unwrap();

        let h = 1e-5;
        for t in 0..6 {
            let n = grads.tensors()[t].len();
            for i in 0..n {
                let mut plus = m.clone();
                plus.params.tensors_mut()[t].data_mut()[i] += h;
                let mut minus = m.clone();
                minus.params.tensors_mut()[t].data_mut()[i] -= h;
                let fd = (loss_for(&plus, &refs, &y, train, seed, loss_cfg)
                    - loss_for(&minus, &refs, &y, train, seed, loss_cfg))
                    / (2.0 * h);
                let an = grads.tensors()[t].data()[i];
                let scale = fd.abs().max(an.abs()).max(1.0);
                assert!(
                    (fd - an).abs() / scale < 1e-4,
                    "tensor {} index {i}: fd {fd} vs analytic {an}",
                    TENSOR_NAMES[t]
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_eval_mode() {
        finite_difference_check(false, 0, &soft_cfg());
    }

    #[test]
    fn gradients_match_finite_differences_with_fixed_dropout() {
        // a fixed dropout seed makes the masked network a deterministic
        // function, so finite differences remain valid through the mask
        finite_difference_check(true, 5, &soft_cfg());
    }

    #[test]
    fn gradients_match_finite_differences_bce_only() {
        let cfg = LossConfig {
            lambda: 0.0,
            ..LossConfig::default()
        };
        finite_difference_check(false, 0, &cfg);
    }

    #[test]
    fn backward_rejects_wrong_gradient_shape() {
        let m = Model::init(tiny_config(), 1).unwrap();
        let batch = tiny_batch();
        let refs: Vec<&Tensor> = batch.iter().collect();
        let (_, cache) = m.forward(&refs, false, 0).unwrap();
        let bad = Tensor::zeros(&[2, 3]);
        assert!(matches!(
            backward(&m, &cache, &bad),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn from_parts_checks_shapes() {
        let cfg = tiny_config();
        let good = Params::zeros(&cfg);
        assert!(Model::from_parts(cfg.clone(), good).is_ok());
        let mut other = tiny_config();
        other.conv_filters = 3;
        let bad = Params::zeros(&other);
        assert!(Model::from_parts(cfg, bad).is_err());
    }
}
