use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, Parameters};
use super::tensor::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub steps: u64,
    /// Linear warmup length; afterwards the rate follows a cosine decay to
    /// `min_lr_ratio · learning_rate` at `steps`.
    pub warmup_steps: u64,
    pub min_lr_ratio: f64,
    pub label_smoothing: f64,
    pub data_seed: u64,
    pub shuffle: bool,
    /// Validation accuracy is logged every this many steps (0 disables).
    pub eval_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.98,
            epsilon: 1e-9,
            batch_size: 32,
            steps: 1000,
            warmup_steps: 100,
            min_lr_ratio: 0.1,
            label_smoothing: 0.0,
            data_seed: 0,
            shuffle: true,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.batch_size > 0
            && self.steps > 0
            && (0.0..=1.0).contains(&self.min_lr_ratio)
            && (0.0..1.0).contains(&self.label_smoothing);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config {self:?}")))
        }
    }

    /// Learning rate used for update number `step` (1-based).
    pub fn lr_at(&self, step: u64) -> f64 {
        let base = self.learning_rate;
        if step <= self.warmup_steps {
            return base * step as f64 / self.warmup_steps.max(1) as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        base * (self.min_lr_ratio + (1.0 - self.min_lr_ratio) * cosine)
    }
}

/// First and second moment estimates plus the update counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Parameters<F>,
    pub v: Parameters<F>,
    pub step: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(config: &ModelConfig) -> Self {
        AdamState {
            m: Parameters::zeros(config),
            v: Parameters::zeros(config),
            step: 0,
        }
    }
}

/// Bias-corrected Adam update. Gradients are checked for finiteness before
/// anything is modified.
pub fn adam_step<F: Scalar>(
    params: &mut Parameters<F>,
    grads: &Parameters<F>,
    state: &mut AdamState<F>,
    config: &TrainConfig,
) -> Result<()> {
    for (name, g) in grads.named() {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient { tensor: name });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let lr = config.lr_at(state.step);
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (fb1, fb2) = (F::of(b1), F::of(b2));
    let (one_b1, one_b2) = (F::of(1.0 - b1), F::of(1.0 - b2));
    let step_size = F::of(lr / c1);
    let inv_c2 = F::of(1.0 / c2);
    let eps = F::of(config.epsilon);

    let tensors = params
        .named_mut()
        .into_iter()
        .zip(grads.named())
        .zip(state.m.named_mut())
        .zip(state.v.named_mut());
    for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = fb1 * m.data[i] + one_b1 * gi;
            v.data[i] = fb2 * v.data[i] + one_b2 * gi * gi;
            p.data[i] -= step_size * m.data[i] / ((v.data[i] * inv_c2).sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::init_parameters;

    fn setup() -> (ModelConfig, Parameters<f64>) {
        let cfg = ModelConfig::tiny();
        let params = init_parameters::<f64>(&cfg).unwrap();
        (cfg, params)
    }

    fn constant_lr(lr: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            warmup_steps: 0,
            min_lr_ratio: 1.0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let (cfg, params) = setup();
        let mut updated = params.clone();
        let mut grads = params.zeros_like();
        for (_, g) in grads.named_mut() {
            for (i, x) in g.data.iter_mut().enumerate() {
                *x = if i % 2 == 0 { 0.3 } else { -2.0 };
            }
        }
        let mut state = AdamState::new(&cfg);
        let tc = constant_lr(1e-2);
        adam_step(&mut updated, &grads, &mut state, &tc).unwrap();
        assert_eq!(state.step, 1);
        for (((_, before), (_, after)), (_, g)) in
            params.named().into_iter().zip(updated.named()).zip(grads.named())
        {
            for i in 0..before.data.len() {
                let delta = after.data[i] - before.data[i];
                let expected = -1e-2 * g.data[i].signum();
                assert!((delta - expected).abs() < 1e-9, "{delta} vs {expected}");
            }
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (cfg, params) = setup();
        let mut updated = params.clone();
        let grads = params.zeros_like();
        let mut state = AdamState::new(&cfg);
        adam_step(&mut updated, &grads, &mut state, &constant_lr(1e-2)).unwrap();
        assert_eq!(updated, params);
    }

    #[test]
    fn identical_histories_give_identical_parameters() {
        let (cfg, params) = setup();
        let mut grads = params.zeros_like();
        for (k, (_, g)) in grads.named_mut().into_iter().enumerate() {
            for (i, x) in g.data.iter_mut().enumerate() {
                *x = ((k * 7 + i) as f64).sin();
            }
        }
        let run = || {
            let mut p = params.clone();
            let mut s = AdamState::new(&cfg);
            for _ in 0..3 {
                adam_step(&mut p, &grads, &mut s, &TrainConfig::default()).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let (cfg, params) = setup();
        let mut p = params.clone();
        let mut grads = params.zeros_like();
        grads.decoder[0].ffn.up.b.data[3] = f64::NAN;
        let mut state = AdamState::new(&cfg);
        let err = adam_step(&mut p, &grads, &mut state, &TrainConfig::default()).unwrap_err();
        match err {
            Error::NonFiniteGradient { tensor } => assert_eq!(tensor, "decoder.0.ffn.up.b"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p, params);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn schedule_warms_up_then_decays() {
        let tc = TrainConfig {
            learning_rate: 1.0,
            warmup_steps: 10,
            steps: 110,
            min_lr_ratio: 0.1,
            ..TrainConfig::default()
        };
        assert!((tc.lr_at(5) - 0.5).abs() < 1e-12);
        assert!((tc.lr_at(10) - 1.0).abs() < 1e-12);
        assert!((tc.lr_at(110) - 0.1).abs() < 1e-12);
        assert!(tc.lr_at(60) < 1.0 && tc.lr_at(60) > 0.1);
    }
}
