use serde::{Deserialize, Serialize};

use super::{Gradient, Mlp, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Mlp {
    /// One bias-corrected Adam step descending `grad`.
    ///
    /// A gradient with any non-finite entry leaves the network and its moment
    /// state untouched.
    pub fn adam_step(&mut self, grad: &Gradient, cfg: &AdamConfig) -> Result<(), NnError> {
        if grad.layers.len() != self.layers.len()
            || grad
                .layers
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| g.weight.dim() != l.weight.dim() || g.bias.len() != l.bias.len())
        {
            return Err(NnError::Shape("gradient is not congruent with network".into()));
        }
        if !grad.is_finite() {
            log::warn!("adam_step: rejecting non-finite gradient");
            return Err(NnError::NonFiniteGradient);
        }
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let (b1, b2, lr, eps) = (cfg.beta1, cfg.beta2, cfg.lr, cfg.eps);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (k, layer) in self.layers.iter_mut().enumerate() {
            let g = &grad.layers[k];
            let m = &mut self.adam.first.layers[k];
            let v = &mut self.adam.second.layers[k];
            for (((p, mm), vv), &gg) in layer
                .weight
                .iter_mut()
                .zip(m.weight.iter_mut())
                .zip(v.weight.iter_mut())
                .zip(g.weight.iter())
            {
                update(p, mm, vv, gg);
            }
            for (((p, mm), vv), &gg) in layer
                .bias
                .iter_mut()
                .zip(m.bias.iter_mut())
                .zip(v.bias.iter_mut())
                .zip(g.bias.iter())
            {
                update(p, mm, vv, gg);
            }
        }
        self.generation += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, OutputActivation};
    use ndarray::array;

    fn scalar(w: f64) -> Mlp {
        Mlp::from_layers(
            vec![Layer {
                weight: array![[w]],
                bias: array![0.0],
            }],
            OutputActivation::Linear,
        )
        .unwrap()
    }

    fn grad(w: f64, b: f64) -> Gradient {
        Gradient {
            layers: vec![Layer {
                weight: array![[w]],
                bias: array![b],
            }],
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = scalar(0.4);
        net.adam_step(&grad(0.0, 0.0), &AdamConfig::with_lr(0.1)).unwrap();
        assert_eq!(net.layers()[0].weight[[0, 0]], 0.4);
        assert_eq!(net.adam_state().step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig::with_lr(0.01);
        let mut net = scalar(1.0);
        net.adam_step(&grad(1.0, 0.0), &cfg).unwrap();
        // m̂ = 1, v̂ = 1 after bias correction
        let expected = 1.0 - cfg.lr * 1.0 / (1.0 + cfg.eps);
        assert!((net.layers()[0].weight[[0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn second_step_matches_recurrence() {
        let cfg = AdamConfig::with_lr(0.05);
        let mut net = scalar(0.0);
        net.adam_step(&grad(2.0, 0.0), &cfg).unwrap();
        net.adam_step(&grad(-1.0, 0.0), &cfg).unwrap();
        let mut p = 0.0;
        let (mut m, mut v) = (0.0, 0.0);
        for (t, g) in [(1, 2.0f64), (2, -1.0)] {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            p -= 0.05 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((net.layers()[0].weight[[0, 0]] - p).abs() < 1e-15);
    }

    #[test]
    fn identical_inputs_identical_results() {
        let cfg = AdamConfig::with_lr(0.1);
        let mut a = scalar(0.3);
        let mut b = scalar(0.3);
        for g in [0.5, -0.2, 1.3] {
            a.adam_step(&grad(g, g), &cfg).unwrap();
            b.adam_step(&grad(g, g), &cfg).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut net = scalar(0.3);
        let before = net.clone();
        let err = net.adam_step(&grad(f64::NAN, 0.0), &AdamConfig::default()).unwrap_err();
        assert_eq!(err, NnError::NonFiniteGradient);
        assert_eq!(net, before);
    }
}
