use serde::{Deserialize, Serialize};

use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};

/// Plain SGD with a delayed step-decay learning-rate schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub initial_lr: f64,
    pub decay_factor: f64,
    /// First epoch at which the decayed rate applies.
    pub decay_start_epoch: usize,
    pub decay_every: usize,
    pub total_epochs: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.05,
            decay_factor: 0.1,
            decay_start_epoch: 150,
            decay_every: 30,
            total_epochs: 240,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0) || !self.initial_lr.is_finite() {
            return Err(Error::invalid(format!(
                "sgd.initial_lr must be > 0, got {}",
                self.initial_lr
            )));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::invalid(format!(
                "sgd.decay_factor must be in (0, 1), got {}",
                self.decay_factor
            )));
        }
        if self.decay_every == 0 {
            return Err(Error::invalid("sgd.decay_every must be >= 1"));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch`.
    ///
    /// The first decay lands exactly on `decay_start_epoch`, then every
    /// `decay_every` epochs after it.
    pub fn lr_at_epoch(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(Error::invalid(format!(
                "epoch {epoch} outside schedule of {} epochs",
                self.total_epochs
            )));
        }
        let k = if epoch >= self.decay_start_epoch {
            (epoch - self.decay_start_epoch) / self.decay_every + 1
        } else {
            0
        };
        Ok(self.initial_lr * self.decay_factor.powi(k as i32))
    }
}

/// `param ← param − lr · grad`, then clears every gradient.
pub fn sgd_step(params: &mut [&mut Tensor], lr: f64) -> Result<()> {
    if let Some(i) = params.iter().position(|p| p.grad().is_none()) {
        return Err(Error::MissingGrad(i));
    }
    for p in params.iter_mut() {
        let grad = p.grad().expect("checked above").to_vec();
        p.data_mut()
            .iter_mut()
            .zip(&grad)
            .for_each(|(w, g)| *w -= lr * g);
        p.clear_grad();
    }
    Ok(())
}
