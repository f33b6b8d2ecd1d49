//! Adam with bias-corrected first and second moments. The learning rate is
//! passed per step so the plateau schedule can adjust it between epochs
//! without touching optimizer state.

use super::{ModelConfig, NnError, Params};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam {
    m: Params,
    v: Params,
    t: u64,
}

impl Adam {
    pub fn new(cfg: &ModelConfig) -> Adam {
        Adam {
            m: Params::zeros(cfg),
            v: Params::zeros(cfg),
            t: 0,
        }
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(
        &mut self,
        params: &mut Params,
        grads: &Params,
        lr: f64,
    ) -> Result<(), NnError> {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t as i32);
        let c2 = 1.0 - BETA2.powi(self.t as i32);
        let pts = params.tensors_mut();
        let gts = grads.tensors();
        let mts = self.m.tensors_mut();
        let vts = self.v.tensors_mut();
        for (((p, g), m), v) in pts.into_iter().zip(gts).zip(mts).zip(vts) {
            if p.shape() != g.shape() {
                return Err(NnError::ShapeMismatch {
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
            let (pd, gd) = (p.data_mut(), g.data());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                md[i] = BETA1 * md[i] + (1.0 - BETA1) * gd[i];
                vd[i] = BETA2 * vd[i] + (1.0 - BETA2) * gd[i] * gd[i];
                let mhat = md[i] / c1;
                let vhat = vd[i] / c2;
                pd[i] -= lr * mhat / (vhat.sqrt() + EPS);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn cfg() -> ModelConfig {
        ModelConfig {
            input_h: 3,
            input_w: 3,
            conv_filters: 1,
            conv_kernel: 1,
            dense_units: 1,
            output_labels: 1,
            dropout_rate: 0.0,
        }
    }

    fn grad_of_ones(c: &ModelConfig) -> Params {
        let mut g = Params::zeros(c);
        for t in g.tensors_mut() {
            for v in t.data_mut() {
                *v = 1.0;
            }
        }
        g
    }

    #[test]
    fn first_step_moves_by_lr_regardless_of_gradient_scale() {
        // bias correction makes the first update exactly lr * sign(g)
        // (up to eps) for any constant gradient
        for scale in [1.0, 100.0, 1e-4] {
            let c = cfg();
            let mut params = Params::zeros(&c);
            let mut g = grad_of_ones(&c);
            for t in g.tensors_mut() {
                for v in t.data_mut() {
                    *v *= scale;
                }
            }
            let mut opt = Adam::new(&c);
            opt.step(&mut params, &g, 0.01).unwrap();
            for t in params.tensors() {
                for &v in t.data() {
                    assert!((v + 0.01).abs() < 1e-5, "scale {scale}: got {v}");
                }
            }
        }
    }

    #[test]
    fn hand_computed_second_step() {
        let c = cfg();
        let mut params = Params::zeros(&c);
        let g1 = grad_of_ones(&c);
        let mut g2 = grad_of_ones(&c);
        for t in g2.tensors_mut() {
            for v in t.data_mut() {
                *v = 0.5;
            }
        }
        let mut opt = Adam::new(&c);
        opt.step(&mut params, &g1, 0.1).unwrap();
        opt.step(&mut params, &g2, 0.1).unwrap();
        assert_eq!(opt.steps(), 2);

        // m2 = 0.9*0.1 + 0.1*0.5, v2 = 0.999*0.001 + 0.001*0.25
        let m2: f64 = 0.9 * 0.1 + 0.1 * 0.5;
        let v2: f64 = 0.999 * 0.001 + 0.001 * 0.25;
        let mhat = m2 / (1.0 - 0.9f64.powi(2));
        let vhat = v2 / (1.0 - 0.999f64.powi(2));
        let step1 = 0.1 * 1.0 / ((0.001f64 / (1.0 - 0.999)).sqrt() + EPS);
        let expected = -step1 - 0.1 * mhat / (vhat.sqrt() + EPS);
        for t in params.tensors() {
            for &v in t.data() {
                assert!((v - expected).abs() < 1e-12, "got {v}, want {expected}");
            }
        }
    }

    #[test]
    fn zero_gradient_leaves_params_nearly_fixed() {
        let c = cfg();
        let mut params = Params::zeros(&c);
        params.conv_w.data_mut()[0] = 0.3;
        let g = Params::zeros(&c);
        let mut opt = Adam::new(&c);
        opt.step(&mut params, &g, 0.1).unwrap();
        assert_eq!(params.conv_w.data()[0], 0.3);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let c = cfg();
        let mut params = Params::zeros(&c);
        let mut g = Params::zeros(&c);
        g.conv_w = Tensor::zeros(&[2, 1, 1]);
        let mut opt = Adam::new(&c);
        assert!(matches!(
            opt.step(&mut params, &g, 0.1),
            Err(NnError::ShapeMismatch { .. })
        ));
    }
}
