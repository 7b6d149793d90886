use crate::config::KeyValues;
use crate::error::{Error, Result};

/// AdamW hyperparameters and the one-cycle learning-rate range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub lr_min: f64,
    pub lr_max: f64,
    /// Fraction of steps spent warming up from `lr_min` to `lr_max`.
    pub warmup_frac: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fixed learning rate for fine-tuning; `None` means `lr_max / 10`.
    pub finetune_lr: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr_min: 3e-4,
            lr_max: 2e-3,
            warmup_frac: 0.3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            epochs: 50,
            batch_size: 8,
            seed: 0,
            finetune_lr: None,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_min > 0.0
            && self.lr_max >= self.lr_min
            && (0.0..1.0).contains(&self.warmup_frac)
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.batch_size > 0
            && self.finetune_lr.is_none_or(|lr| lr > 0.0);
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }

    pub fn finetune_rate(&self) -> f64 {
        self.finetune_lr.unwrap_or(self.lr_max / 10.0)
    }

    pub fn from_kv(kv: &mut KeyValues) -> Result<Self> {
        let d = OptimConfig::default();
        let finetune_lr: f64 = kv.take("finetune_lr", 0.0)?;
        let cfg = OptimConfig {
            lr_min: kv.take("lr_min", d.lr_min)?,
            lr_max: kv.take("lr_max", d.lr_max)?,
            warmup_frac: kv.take("warmup_frac", d.warmup_frac)?,
            beta1: kv.take("beta1", d.beta1)?,
            beta2: kv.take("beta2", d.beta2)?,
            eps: kv.take("eps", d.eps)?,
            weight_decay: kv.take("weight_decay", d.weight_decay)?,
            epochs: kv.take("epochs", d.epochs)?,
            batch_size: kv.take("batch_size", d.batch_size)?,
            seed: kv.take("seed", d.seed)?,
            finetune_lr: (finetune_lr > 0.0).then_some(finetune_lr),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One-cycle schedule: linear warm-up from `lr_min` to `lr_max` over the first
/// `warmup_frac` of steps, then cosine annealing down to `lr_min / 10`.
pub fn one_cycle_lr(step: usize, total_steps: usize, cfg: &OptimConfig) -> f64 {
    let total = total_steps.max(1) as f64;
    let warm = cfg.warmup_frac * total;
    let s = step as f64;
    if s < warm {
        cfg.lr_min + (cfg.lr_max - cfg.lr_min) * s / warm
    } else {
        let floor = cfg.lr_min / 10.0;
        let progress = ((s - warm) / (total - warm).max(1.0)).clamp(0.0, 1.0);
        floor + (cfg.lr_max - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimState {
    pub fn new(n: usize) -> Self {
        OptimState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// Bias-corrected Adam update with decoupled weight decay.
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut OptimState, cfg: &OptimConfig, lr: f64) {
    debug_assert_eq!(params.len(), grads.len());
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * params[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grads_leave_params() {
        let cfg = OptimConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut p = vec![0.5, -1.0];
        let mut s = OptimState::new(2);
        adamw_step(&mut p, &[0.0, 0.0], &mut s, &cfg, 0.1);
        assert_eq!(p, vec![0.5, -1.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = OptimConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut p = vec![0.0];
        let mut s = OptimState::new(1);
        adamw_step(&mut p, &[1.0], &mut s, &cfg, 0.1);
        assert!((p[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn decoupled_decay_shrinks_weights() {
        let cfg = OptimConfig {
            weight_decay: 0.5,
            ..Default::default()
        };
        let mut p = vec![2.0];
        let mut s = OptimState::new(1);
        adamw_step(&mut p, &[0.0], &mut s, &cfg, 0.1);
        assert!((p[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn schedule_endpoints() {
        let cfg = OptimConfig::default();
        assert_eq!(one_cycle_lr(0, 100, &cfg), cfg.lr_min);
        assert!((one_cycle_lr(30, 100, &cfg) - cfg.lr_max).abs() < 1e-15);
        assert!((one_cycle_lr(100, 100, &cfg) - cfg.lr_min / 10.0).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for s in 30..=100 {
            let lr = one_cycle_lr(s, 100, &cfg);
            assert!(lr <= prev + 1e-18);
            prev = lr;
        }
    }
}
