use serde::{Deserialize, Serialize};

use crate::error::{LnsError, Result};
use crate::nn::arith::Arith;
use crate::nn::layers::Param;
use crate::nn::tensor::Tensor;

fn d_momentum() -> f64 {
    0.9
}
fn d_wd() -> f64 {
    1e-4
}
fn d_period() -> f64 {
    10.0
}
fn d_mult() -> f64 {
    2.0
}

/// SGD with momentum, weight decay and a cosine schedule with warm restarts.
/// Periods are in epochs and may be fractional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    #[serde(default = "d_momentum")]
    pub momentum: f64,
    #[serde(default = "d_wd")]
    pub weight_decay: f64,
    #[serde(default = "d_period")]
    pub restart_period: f64,
    #[serde(default = "d_mult")]
    pub restart_mult: f64,
    #[serde(default)]
    pub min_lr: f64,
}

impl SgdConfig {
    pub fn new(lr: f64) -> Self {
        SgdConfig {
            lr,
            momentum: d_momentum(),
            weight_decay: d_wd(),
            restart_period: d_period(),
            restart_mult: d_mult(),
            min_lr: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay >= 0.0
            && self.restart_period > 0.0
            && self.restart_mult >= 1.0
            && (0.0..=self.lr).contains(&self.min_lr);
        if ok {
            Ok(())
        } else {
            Err(LnsError::Config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }

    /// Learning rate after `epochs` (fractional) of training.
    pub fn learning_rate(&self, epochs: f64) -> f64 {
        let (mut start, mut period) = (0.0, self.restart_period);
        while epochs >= start + period {
            start += period;
            period *= self.restart_mult;
        }
        let frac = (epochs - start) / period;
        self.min_lr + 0.5 * (self.lr - self.min_lr) * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

/// Momentum buffers plus the schedule position.
#[derive(Debug, Clone)]
pub struct OptimizerState<S> {
    pub config: SgdConfig,
    pub velocity: Vec<Tensor<S>>,
    pub steps_per_epoch: usize,
    momentum: S,
    weight_decay: S,
}

impl<S: Copy> OptimizerState<S> {
    pub fn new<A: Arith<Scalar = S>>(
        a: &A,
        config: SgdConfig,
        params: &[&mut Param<S>],
        steps_per_epoch: usize,
    ) -> Result<Self> {
        config.validate()?;
        if steps_per_epoch == 0 {
            return Err(LnsError::Config("steps per epoch must be positive".into()));
        }
        Ok(OptimizerState {
            config,
            velocity: params
                .iter()
                .map(|p| Tensor::filled(p.value.shape().to_vec(), a.zero()))
                .collect(),
            steps_per_epoch,
            momentum: a.from_f64(config.momentum)?,
            weight_decay: a.from_f64(config.weight_decay)?,
        })
    }

    pub fn learning_rate(&self, step: u64) -> f64 {
        self.config
            .learning_rate(step as f64 / self.steps_per_epoch as f64)
    }
}

/// One update: `v = m*v + g + wd*w`, then `w = w - lr*v`, element by element
/// with the backend's multiply and add. Returns the learning rate used.
pub fn sgd_step<A: Arith>(
    a: &A,
    params: &mut [&mut Param<A::Scalar>],
    state: &mut OptimizerState<A::Scalar>,
    step: u64,
) -> Result<f64> {
    if params.len() != state.velocity.len() {
        return Err(LnsError::Shape(
            "optimizer state does not match parameters".into(),
        ));
    }
    let lr_real = state.learning_rate(step);
    let lr = a.from_f64(lr_real)?;
    for (p, v) in params.iter_mut().zip(&mut state.velocity) {
        if v.shape() != p.value.shape() {
            return Err(LnsError::Shape("momentum buffer shape".into()));
        }
        let grads = p.grad.data().to_vec();
        for ((w, vel), g) in p.value.data_mut().iter_mut().zip(v.data_mut()).zip(grads) {
            let nv = a.add(
                a.add(a.mul(state.momentum, *vel), g),
                a.mul(state.weight_decay, *w),
            );
            *vel = nv;
            *w = a.sub(*w, a.mul(lr, nv));
        }
    }
    Ok(lr_real)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_restarts_at_base_rate() {
        let c = SgdConfig::new(0.1);
        assert_eq!(c.learning_rate(0.0), 0.1);
        assert!(c.learning_rate(9.999) < 1e-6);
        assert_eq!(c.learning_rate(10.0), 0.1);
        // second period is twice as long
        assert!((c.learning_rate(20.0) - 0.05).abs() < 1e-12);
        assert_eq!(c.learning_rate(30.0), 0.1);
        let flat = SgdConfig {
            restart_mult: 1.0,
            ..c
        };
        assert_eq!(flat.learning_rate(50.0), 0.1);
    }

    #[test]
    fn bad_settings_rejected() {
        assert!(SgdConfig::new(0.0).validate().is_err());
        let c = SgdConfig {
            momentum: 1.0,
            ..SgdConfig::new(0.1)
        };
        assert!(c.validate().is_err());
    }
}
