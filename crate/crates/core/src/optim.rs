//! SGD with momentum and decoupled-from-nothing classic L2 weight decay
//! (decay folds into the gradient before the momentum update), plus
//! per-epoch learning-rate schedules.

use crate::error::Error;
use crate::model::{Model, Param};
use crate::numeric::{real, Real};
use crate::Result;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Schedule {
    /// `lr_max` everywhere.
    Constant,
    /// Half-cosine from `lr_max` at epoch 0 to `lr_min` at the final epoch.
    Cosine,
    /// `lr_max * gamma^(epoch / step_size)` with integer division.
    Step { step_size: usize, gamma: f64 },
}

/// Optimizer and loop hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimConfig {
    pub lr_max: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub lr_min: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub momentum: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub weight_decay: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_schedule"))]
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
}

#[cfg(feature = "serde")]
fn default_schedule() -> Schedule {
    Schedule::Constant
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_max > 0.0) || !self.lr_max.is_finite() {
            return Err(Error::config(format!(
                "lr_max must be finite and > 0, got {}",
                self.lr_max
            )));
        }
        if !(0.0..=self.lr_max).contains(&self.lr_min) {
            return Err(Error::config(format!(
                "lr_min must lie in [0, lr_max], got {}",
                self.lr_min
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::config(format!(
                "weight_decay must be finite and >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if let Schedule::Step { step_size, gamma } = self.schedule {
            if step_size == 0 {
                return Err(Error::config("step schedule needs step_size >= 1"));
            }
            if !(gamma > 0.0 && gamma <= 1.0) {
                return Err(Error::config(format!(
                    "step schedule gamma must lie in (0, 1], got {gamma}"
                )));
            }
        }
        Ok(())
    }

    /// Learning rate for `epoch` (0-based, must be `< epochs`).
    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        use num_traits::Float;
        if epoch >= self.epochs {
            return Err(Error::contract(format!(
                "epoch {epoch} out of range for a {}-epoch run",
                self.epochs
            )));
        }
        Ok(match self.schedule {
            Schedule::Constant => self.lr_max,
            Schedule::Cosine => {
                // One-epoch runs have no span to anneal over.
                if self.epochs == 1 {
                    self.lr_max
                } else {
                    let t = epoch as f64 / (self.epochs - 1) as f64;
                    self.lr_min
                        + (self.lr_max - self.lr_min)
                            * 0.5
                            * (1.0 + Float::cos(core::f64::consts::PI * t))
                }
            }
            Schedule::Step { step_size, gamma } => {
                self.lr_max * Float::powi(gamma, (epoch / step_size) as i32)
            }
        })
    }
}

/// Per-parameter momentum buffers, in the model's parameter order.
#[derive(Debug, Clone)]
pub struct SgdState<T> {
    velocity: Vec<Vec<T>>,
}

impl<T: Real> SgdState<T> {
    pub fn new(model: &Model<T>) -> Self {
        SgdState {
            velocity: model
                .params()
                .iter()
                .map(|p| alloc::vec![T::zero(); p.tensor.numel()])
                .collect(),
        }
    }

    /// Velocity buffer for parameter `i`, exposed for checkpointing.
    pub fn velocity(&self, i: usize) -> &[T] {
        &self.velocity[i]
    }

    pub fn len(&self) -> usize {
        self.velocity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocity.is_empty()
    }

    /// Rebuilds state from saved buffers; shapes must match the model.
    pub fn from_buffers(model: &Model<T>, buffers: Vec<Vec<T>>) -> Result<Self> {
        if buffers.len() != model.params().len() {
            return Err(Error::contract(format!(
                "{} velocity buffers for {} parameters",
                buffers.len(),
                model.params().len()
            )));
        }
        for (p, b) in model.params().iter().zip(&buffers) {
            if b.len() != p.tensor.numel() {
                return Err(Error::contract(format!(
                    "velocity for {} has {} elements, parameter has {}",
                    p.name,
                    b.len(),
                    p.tensor.numel()
                )));
            }
        }
        Ok(SgdState { velocity: buffers })
    }
}

/// One SGD update over every parameter:
/// `g' = g + wd * w;  v <- m * v + g';  w <- w - lr * v`.
///
/// `grads` must parallel `params`; a non-finite gradient aborts with a
/// numeric error naming the parameter, leaving weights untouched.
pub fn sgd_step<T: Real>(
    params: &mut [Param<T>],
    grads: &[&[T]],
    state: &mut SgdState<T>,
    lr: f64,
    cfg: &OptimConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.velocity.len() != params.len() {
        return Err(Error::contract(format!(
            "{} gradients and {} velocity buffers for {} parameters",
            grads.len(),
            state.velocity.len(),
            params.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if g.len() != p.tensor.numel() {
            return Err(Error::contract(format!(
                "gradient for {} has {} elements, parameter has {}",
                p.name,
                g.len(),
                p.tensor.numel()
            )));
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric(non_finite_msg(&p.name, *bad)));
        }
    }
    let lr = real::<T>(lr);
    let m = real::<T>(cfg.momentum);
    let wd = real::<T>(cfg.weight_decay);
    for ((p, g), vel) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        let w = p.tensor.data_mut();
        for i in 0..w.len() {
            let grad = g[i] + wd * w[i];
            vel[i] = m * vel[i] + grad;
            w[i] -= lr * vel[i];
        }
    }
    Ok(())
}

fn non_finite_msg<T: Real>(name: &str, v: T) -> String {
    format!("non-finite gradient {v} for parameter {name}")
}
