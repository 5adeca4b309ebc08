use std::f64::consts::PI;

use super::TrainConfig;
use crate::model::Parameters;
use crate::num::Real;

/// Linear warmup from 0 to `base_lr` over `warmup_epochs`, then cosine decay
/// to 0 at `epochs`. `epoch` may be fractional.
pub fn lr_schedule(epoch: f64, config: &TrainConfig) -> f64 {
    let total = config.epochs as f64;
    let warmup = config.warmup_epochs;
    let epoch = epoch.clamp(0.0, total);
    if epoch < warmup {
        return config.base_lr * epoch / warmup;
    }
    if total <= warmup {
        return config.base_lr;
    }
    let progress = (epoch - warmup) / (total - warmup);
    config.base_lr * 0.5 * (1.0 + (PI * progress).cos())
}

/// AdamW first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub step: u64,
    pub first_moment: Parameters<T>,
    pub second_moment: Parameters<T>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &Parameters<T>) -> Self {
        OptimizerState {
            step: 0,
            first_moment: Parameters::zeros(&params.config),
            second_moment: Parameters::zeros(&params.config),
        }
    }
}

/// One decoupled-weight-decay Adam step with bias-corrected moments.
/// Normalization parameters and the mask token are not decayed.
pub fn adamw_update<T: Real>(
    params: &mut Parameters<T>,
    grads: &Parameters<T>,
    state: &mut OptimizerState<T>,
    lr: f64,
    config: &TrainConfig,
) {
    state.step += 1;
    let step = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(step);
    let bc2 = 1.0 - config.beta2.powi(step);
    let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - config.beta1), T::lit(1.0 - config.beta2));
    let (inv_bc1, inv_bc2) = (T::lit(1.0 / bc1), T::lit(1.0 / bc2));
    let (lr_t, eps, wd) = (T::lit(lr), T::lit(config.eps), T::lit(config.weight_decay));

    let kinds: Vec<_> = params.specs().into_iter().map(|s| s.kind).collect();
    let g = grads.slices();
    let m = state.first_moment.slices_mut();
    let v = state.second_moment.slices_mut();
    for ((((theta, grad), m), v), kind) in params.slices_mut().into_iter().zip(g).zip(m).zip(v).zip(kinds) {
        let decay = kind.decays();
        for (((p, &gr), mi), vi) in theta.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + one_b1 * gr;
            *vi = b2 * *vi + one_b2 * gr * gr;
            let m_hat = *mi * inv_bc1;
            let v_hat = *vi * inv_bc2;
            let mut update = m_hat / (v_hat.sqrt() + eps);
            if decay {
                update += wd * *p;
            }
            *p -= lr_t * update;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn scalar_setup(theta: f64, grad: f64) -> (Parameters<f64>, Parameters<f64>) {
        let cfg = ModelConfig::micro();
        let mut p = Parameters::<f64>::zeros(&cfg);
        let mut g = Parameters::<f64>::zeros(&cfg);
        p.head.weight[0] = theta;
        g.head.weight[0] = grad;
        (p, g)
    }

    #[test]
    fn schedule_key_points() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(5.0, &cfg), 5e-4);
        assert!(lr_schedule(200.0, &cfg).abs() < 1e-20);
        assert!((lr_schedule(102.5, &cfg) - 2.5e-4).abs() < 1e-15);
        assert_eq!(lr_schedule(0.0, &cfg), 0.0);
    }

    #[test]
    fn schedule_monotone_and_bounded() {
        let cfg = TrainConfig::default();
        let mut prev = -1.0;
        for i in 0..=50 {
            let lr = lr_schedule(i as f64 * 0.1, &cfg);
            assert!(lr >= prev && lr <= cfg.base_lr);
            prev = lr;
        }
        for i in 0..=1950 {
            let lr = lr_schedule(5.0 + i as f64 * 0.1, &cfg);
            assert!(lr <= prev + 1e-18 && lr >= 0.0);
            prev = lr;
        }
    }

    #[test]
    fn first_step_hand_value() {
        let cfg = TrainConfig::default();
        let (mut p, g) = scalar_setup(1.0, 1.0);
        let mut st = OptimizerState::new(&p);
        adamw_update(&mut p, &g, &mut st, 0.1, &cfg);
        // m̂ = v̂ = 1, so θ' = 1 − 0.1·(1/(1 + 1e-8) + 0.05).
        let expect = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8) + 0.05);
        assert!((p.head.weight[0] - expect).abs() < 1e-15);
        assert!((p.head.weight[0] - 0.895).abs() < 1e-8);
    }

    #[test]
    fn zero_grad_without_decay_is_noop() {
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let (mut p, g) = scalar_setup(0.7, 0.0);
        let before = p.clone();
        let mut st = OptimizerState::new(&p);
        adamw_update(&mut p, &g, &mut st, 0.1, &cfg);
        assert_eq!(p, before);
    }

    #[test]
    fn decoupled_decay_shrinks_weights_only() {
        let cfg = TrainConfig::default();
        let (mut p, g) = scalar_setup(2.0, 0.0);
        p.dec_norm.gain[0] = 2.0;
        p.mask_token[0] = 2.0;
        let mut st = OptimizerState::new(&p);
        adamw_update(&mut p, &g, &mut st, 0.1, &cfg);
        assert!((p.head.weight[0] - 2.0 * (1.0 - 0.1 * 0.05)).abs() < 1e-15);
        assert_eq!(p.dec_norm.gain[0], 2.0);
        assert_eq!(p.mask_token[0], 2.0);
    }
}
