use super::params::ParamStore;
use crate::error::{Error, Result};

/// RMSprop without momentum or weight decay.
///
/// Per scalar: `s ← α·s + (1−α)·g²`, then `p ← p − lr·g / sqrt(s + ε)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            alpha: 0.99,
            eps: 1e-5,
        }
    }
}

impl RmsProp {
    pub fn new(lr: f64, alpha: f64) -> Self {
        Self {
            lr,
            alpha,
            ..Self::default()
        }
    }

    /// Applies one update from the gradients currently held in `store`.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&self, store: &mut ParamStore) -> Result<()> {
        for (name, g) in store.grads_iter() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of `{name}`")));
            }
        }
        for (_, param, grad, sq) in store.grads_and_state_mut() {
            for ((p, &g), s) in param.data.iter_mut().zip(grad).zip(sq.iter_mut()) {
                *s = self.alpha * *s + (1.0 - self.alpha) * g * g;
                *p -= self.lr * g / (*s + self.eps).sqrt();
            }
        }
        Ok(())
    }
}
