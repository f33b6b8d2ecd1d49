//! Hierarchical binary cross-entropy.
//!
//! The total loss over a batch of `B` samples and `L` labels is
//!
//! ```text
//! total = bce + lambda * penalty_sum
//! penalty_sum = (1/B) * sum over samples, edges of Pen(p, c) * ind(p, c)
//! ```
//!
//! where `bce` averages over the batch and sums over labels, `Pen` comes
//! from a [`PenaltyTable`], and `ind` flags hierarchy violations: a child
//! predicted above the decision threshold while its parent sits below it.
//!
//! The indicator comes in two flavours. The hard form is the exact
//! `1{y_parent < thr and y_child > thr}` (strict on both sides), which is
//! what evaluation reports but which has zero gradient almost everywhere.
//! The soft form replaces each comparison with a logistic ramp of width
//! `tau`, `sigma((thr - y_parent)/tau) * sigma((y_child - thr)/tau)`, which
//! equals 1/4 exactly at the threshold corner and approaches the hard
//! indicator as `tau` shrinks.

use thiserror::Error;

use crate::penalty::PenaltyTable;
use crate::tensor::Tensor;

/// Default width of the soft indicator's logistic ramp.
pub const DEFAULT_TAU: f64 = 0.05;

/// Default clipping bound applied to predictions inside the BCE logarithms.
pub const DEFAULT_CLIP: f64 = 1e-7;

/// Default decision threshold separating negative from positive predictions.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("y_true has shape {true_shape:?} but y_pred has shape {pred_shape:?}")]
    ShapeMismatch {
        true_shape: Vec<usize>,
        pred_shape: Vec<usize>,
    },
    #[error("expected 2-D (batch, labels) tensors, got shape {0:?}")]
    NotTwoDim(Vec<usize>),
    #[error("batch and label dimensions must be non-zero, got shape {0:?}")]
    EmptyInput(Vec<usize>),
    #[error("y_true must contain only 0.0 or 1.0, got {value} at ({row}, {col})")]
    NonBinaryTarget { row: usize, col: usize, value: f64 },
    #[error("y_pred must lie in [0, 1], got {value} at ({row}, {col})")]
    PredictionOutOfRange { row: usize, col: usize, value: f64 },
    #[error("penalty edge ({parent}, {child}) out of range for {labels} labels")]
    EdgeOutOfRange {
        parent: usize,
        child: usize,
        labels: usize,
    },
    #[error("lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("threshold must lie strictly inside (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("tau must be finite and positive, got {0}")]
    InvalidTau(f64),
    #[error("prediction_clip must lie in (0, 0.5) and below the threshold, got {0}")]
    InvalidClip(f64),
}

/// Which indicator the penalty term uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndicatorMode {
    /// Exact strict-inequality indicator; zero gradient almost everywhere.
    Hard,
    /// Product of logistic ramps of width `tau`; differentiable everywhere.
    Soft { tau: f64 },
}

impl IndicatorMode {
    /// The soft mode at [`DEFAULT_TAU`].
    pub fn soft_default() -> Self {
        IndicatorMode::Soft { tau: DEFAULT_TAU }
    }
}

/// Loss hyperparameters. The defaults reproduce the reference setup: hard
/// indicator, unit scale factor, threshold 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub mode: IndicatorMode,
    pub threshold: f64,
    pub prediction_clip: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 1.0,
            mode: IndicatorMode::Hard,
            threshold: DEFAULT_THRESHOLD,
            prediction_clip: DEFAULT_CLIP,
        }
    }
}

impl LossConfig {
    /// Rejects configurations the loss cannot evaluate: negative or
    /// non-finite lambda, a threshold outside (0, 1), a non-positive tau,
    /// or a clip that is not strictly inside (0, min(threshold, 0.5)).
    pub fn check(&self) -> Result<(), LossError> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(LossError::InvalidLambda(self.lambda));
        }
        if !self.threshold.is_finite() || self.threshold <= 0.0 || self.threshold >= 1.0 {
            return Err(LossError::InvalidThreshold(self.threshold));
        }
        if let IndicatorMode::Soft { tau } = self.mode {
            if !tau.is_finite() || tau <= 0.0 {
                return Err(LossError::InvalidTau(tau));
            }
        }
        if !self.prediction_clip.is_finite()
            || self.prediction_clip <= 0.0
            || self.prediction_clip >= 0.5
            || self.prediction_clip >= self.threshold
        {
            return Err(LossError::InvalidClip(self.prediction_clip));
        }
        Ok(())
    }
}

/// A decomposed loss evaluation.
///
/// `penalty_sum` is the batch-averaged penalty term *before* the `lambda`
/// scaling, so `total = bce + lambda * penalty_sum` holds by construction.
/// `triggered_edges` counts (sample, edge) pairs meeting the *hard*
/// violation condition regardless of the indicator mode in effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub bce: f64,
    pub penalty_sum: f64,
    pub triggered_edges: usize,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_pair(y_true: &Tensor, y_pred: &Tensor) -> Result<(usize, usize), LossError> {
    if y_true.shape() != y_pred.shape() {
        return Err(LossError::ShapeMismatch {
            true_shape: y_true.shape().to_vec(),
            pred_shape: y_pred.shape().to_vec(),
        });
    }
    if y_true.shape().len() != 2 {
        return Err(LossError::NotTwoDim(y_true.shape().to_vec()));
    }
    let (b, l) = (y_true.shape()[0], y_true.shape()[1]);
    if b == 0 || l == 0 {
        return Err(LossError::EmptyInput(y_true.shape().to_vec()));
    }
    for row in 0..b {
        for col in 0..l {
            let y = y_true.at2(row, col);
            if y != 0.0 && y != 1.0 {
                return Err(LossError::NonBinaryTarget { row, col, value: y });
            }
            let p = y_pred.at2(row, col);
            if !(0.0..=1.0).contains(&p) {
                return Err(LossError::PredictionOutOfRange { row, col, value: p });
            }
        }
    }
    Ok((b, l))
}

fn check_predictions(y_pred: &Tensor) -> Result<(usize, usize), LossError> {
    if y_pred.shape().len() != 2 {
        return Err(LossError::NotTwoDim(y_pred.shape().to_vec()));
    }
    let (b, l) = (y_pred.shape()[0], y_pred.shape()[1]);
    if b == 0 || l == 0 {
        return Err(LossError::EmptyInput(y_pred.shape().to_vec()));
    }
    for row in 0..b {
        for col in 0..l {
            let p = y_pred.at2(row, col);
            if !(0.0..=1.0).contains(&p) {
                return Err(LossError::PredictionOutOfRange { row, col, value: p });
            }
        }
    }
    Ok((b, l))
}

fn check_table(table: &PenaltyTable, labels: usize) -> Result<(), LossError> {
    for ((parent, child), _) in table.iter() {
        if parent >= labels || child >= labels {
            return Err(LossError::EdgeOutOfRange {
                parent,
                child,
                labels,
            });
        }
    }
    Ok(())
}

/// Binary cross-entropy, averaged over the batch and summed over labels,
/// with predictions clipped to `[clip, 1 - clip]` inside the logarithms.
pub fn bce(y_true: &Tensor, y_pred: &Tensor, clip: f64) -> Result<f64, LossError> {
    if !clip.is_finite() || clip <= 0.0 || clip >= 0.5 {
        return Err(LossError::InvalidClip(clip));
    }
    let (b, l) = check_pair(y_true, y_pred)?;
    let mut sum = 0.0;
    for row in 0..b {
        for col in 0..l {
            let y = y_true.at2(row, col);
            let p = y_pred.at2(row, col).clamp(clip, 1.0 - clip);
            sum -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
    }
    Ok(sum / b as f64)
}

/// The indicator factor for one edge of one sample.
fn indicator(mode: IndicatorMode, y_parent: f64, y_child: f64, threshold: f64) -> f64 {
    match mode {
        IndicatorMode::Hard => {
            if y_parent < threshold && y_child > threshold {
                1.0
            } else {
                0.0
            }
        }
        IndicatorMode::Soft { tau } => {
            sigmoid((threshold - y_parent) / tau) * sigmoid((y_child - threshold) / tau)
        }
    }
}

fn penalty_with_triggers(
    y_pred: &Tensor,
    table: &PenaltyTable,
    mode: IndicatorMode,
    threshold: f64,
) -> (f64, usize) {
    let b = y_pred.shape()[0];
    let mut raw = 0.0;
    let mut triggered = 0;
    for row in 0..b {
        for ((parent, child), pen) in table.iter() {
            let yp = y_pred.at2(row, parent);
            let yc = y_pred.at2(row, child);
            if yp < threshold && yc > threshold {
                triggered += 1;
            }
            raw += pen * indicator(mode, yp, yc, threshold);
        }
    }
    (raw / b as f64, triggered)
}

/// The batch-averaged penalty term, before `lambda` scaling:
/// `(1/B) * sum over samples, edges of Pen(p, c) * ind(p, c)`.
pub fn hierarchy_penalty(
    y_pred: &Tensor,
    table: &PenaltyTable,
    config: &LossConfig,
) -> Result<f64, LossError> {
    config.check()?;
    let (_, l) = check_predictions(y_pred)?;
    check_table(table, l)?;
    Ok(penalty_with_triggers(y_pred, table, config.mode, config.threshold).0)
}

/// Full hierarchical BCE over a batch.
pub fn hbce(
    y_true: &Tensor,
    y_pred: &Tensor,
    table: &PenaltyTable,
    config: &LossConfig,
) -> Result<LossValue, LossError> {
    config.check()?;
    let (_, l) = check_pair(y_true, y_pred)?;
    check_table(table, l)?;
    let bce = bce(y_true, y_pred, config.prediction_clip)?;
    let (penalty_sum, triggered_edges) =
        penalty_with_triggers(y_pred, table, config.mode, config.threshold);
    Ok(LossValue {
        total: bce + config.lambda * penalty_sum,
        bce,
        penalty_sum,
        triggered_edges,
    })
}

/// Gradient of [`hbce`] with respect to `y_pred`, same shape as the inputs.
///
/// The BCE part is `(1/B) (p - y) / (p (1 - p))` evaluated on the clipped
/// prediction. The hard indicator contributes nothing (it is piecewise
/// constant); the soft indicator contributes
/// `-(lambda/B) (Pen/tau) s_p (1 - s_p) s_c` to the parent coordinate and
/// `+(lambda/B) (Pen/tau) s_p s_c (1 - s_c)` to the child coordinate.
pub fn hbce_grad(
    y_true: &Tensor,
    y_pred: &Tensor,
    table: &PenaltyTable,
    config: &LossConfig,
) -> Result<Tensor, LossError> {
    config.check()?;
    let (b, l) = check_pair(y_true, y_pred)?;
    check_table(table, l)?;
    let inv_b = 1.0 / b as f64;
    let mut grad = Tensor::zeros(&[b, l]);
    for row in 0..b {
        for col in 0..l {
            let y = y_true.at2(row, col);
            let p = y_pred
                .at2(row, col)
                .clamp(config.prediction_clip, 1.0 - config.prediction_clip);
            grad.set2(row, col, inv_b * (p - y) / (p * (1.0 - p)));
        }
    }
    if let IndicatorMode::Soft { tau } = config.mode {
        let scale = config.lambda * inv_b;
        for row in 0..b {
            for ((parent, child), pen) in table.iter() {
                let sp = sigmoid((config.threshold - y_pred.at2(row, parent)) / tau);
                let sc = sigmoid((y_pred.at2(row, child) - config.threshold) / tau);
                let gp = grad.at2(row, parent) - scale * (pen / tau) * sp * (1.0 - sp) * sc;
                grad.set2(row, parent, gp);
                let gc = grad.at2(row, child) + scale * (pen / tau) * sp * sc * (1.0 - sc);
                grad.set2(row, child, gc);
            }
        }
    }
    Ok(grad)
}
