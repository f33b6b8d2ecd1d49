//! Monte Carlo dropout: repeated stochastic forward passes over one input,
//! summarized per label as a mean and a population standard deviation.
//!
//! Pass `i` uses dropout seed `seed + i`, so a summary is reproducible from
//! `(model, input, passes, seed)` alone and individual passes can be
//! recomputed independently.

use crate::nn::{Model, NnError};
use crate::tensor::Tensor;

/// Per-label summary of `passes` stochastic predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub mean: Vec<f64>,
    /// Population standard deviation (divides by the pass count).
    pub std: Vec<f64>,
    pub passes: usize,
    pub seed: u64,
}

pub fn mc_predict(
    model: &Model,
    input: &Tensor,
    passes: usize,
    seed: u64,
) -> Result<McSummary, NnError> {
    if passes == 0 {
        return Err(NnError::ZeroPasses);
    }
    let l = model.config.output_labels;
    let mut samples = vec![0.0; passes * l];
    for pass in 0..passes {
        let (preds, _) = model.forward(&[input], true, seed.wrapping_add(pass as u64))?;
        samples[pass * l..(pass + 1) * l].copy_from_slice(preds.data());
    }

    let mut mean = vec![0.0; l];
    let mut std = vec![0.0; l];
    for li in 0..l {
        let column = || (0..passes).map(|p| samples[p * l + li]);
        let first = samples[li];
        // identical passes (e.g. dropout rate 0) must report exactly zero
        // spread, so skip the arithmetic that could leave rounding dust
        if column().all(|v| v == first) {
            mean[li] = first;
            continue;
        }
        let m = column().sum::<f64>() / passes as f64;
        let var = column().map(|v| (v - m) * (v - m)).sum::<f64>() / passes as f64;
        mean[li] = m;
        std[li] = var.sqrt();
    }
    Ok(McSummary {
        mean,
        std,
        passes,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;

    fn config(dropout: f64) -> ModelConfig {
        ModelConfig {
            input_h: 6,
            input_w: 6,
            conv_filters: 3,
            conv_kernel: 3,
            dense_units: 5,
            output_labels: 4,
            dropout_rate: dropout,
        }
    }

    fn input() -> Tensor {
        let mut t = Tensor::zeros(&[6, 6]);
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin() * 0.5 + 0.5;
        }
        t
    }

    #[test]
    fn summary_is_reproducible() {
        let m = Model::init(config(0.5), 21).unwrap();
        let a = mc_predict(&m, &input(), 10, 7).unwrap();
        let b = mc_predict(&m, &input(), 10, 7).unwrap();
        assert_eq!(a, b);
        let c = mc_predict(&m, &input(), 10, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dropout_produces_spread() {
        let m = Model::init(config(0.5), 21).unwrap();
        let s = mc_predict(&m, &input(), 20, 7).unwrap();
        assert!(s.std.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn zero_dropout_gives_exactly_zero_std() {
        let m = Model::init(config(0.0), 21).unwrap();
        let s = mc_predict(&m, &input(), 10, 7).unwrap();
        for (li, &v) in s.std.iter().enumerate() {
            assert_eq!(v, 0.0, "label {li}");
        }
        // and the mean equals the deterministic prediction
        let (det, _) = m.forward(&[&input()], false, 0).unwrap();
        assert_eq!(s.mean, det.data());
    }

    #[test]
    fn single_pass_has_zero_std() {
        let m = Model::init(config(0.5), 21).unwrap();
        let s = mc_predict(&m, &input(), 1, 3).unwrap();
        assert!(s.std.iter().all(|&v| v == 0.0));
        assert_eq!(s.passes, 1);
    }

    #[test]
    fn summaries_stay_in_probability_range() {
        let m = Model::init(config(0.5), 2).unwrap();
        let s = mc_predict(&m, &input(), 25, 99).unwrap();
        for li in 0..4 {
            assert!((0.0..=1.0).contains(&s.mean[li]));
            // a [0,1]-valued variable cannot spread more than 1/2
            assert!(s.std[li] <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn zero_passes_is_rejected() {
        let m = Model::init(config(0.5), 21).unwrap();
        assert!(matches!(
            mc_predict(&m, &input(), 0, 7),
            Err(NnError::ZeroPasses)
        ));
    }
}
