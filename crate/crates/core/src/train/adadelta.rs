use crate::error::{Error, Result};
use crate::models::ModelParams;
use crate::tensor::Tensor;
use crate::text::PAD;

/// One ADADELTA update of a scalar, returning `Δx`:
///
/// ```text
/// E[g²]  ← ρ E[g²] + (1 − ρ) g²
/// Δx     = −(√(E[Δx²] + ε) / √(E[g²] + ε)) g
/// E[Δx²] ← ρ E[Δx²] + (1 − ρ) Δx²
/// ```
#[inline]
pub fn adadelta_update(g: f64, sq_grad: &mut f64, sq_update: &mut f64, rho: f64, epsilon: f64) -> f64 {
    *sq_grad = rho * *sq_grad + (1.0 - rho) * g * g;
    let dx = -((*sq_update + epsilon).sqrt() / (*sq_grad + epsilon).sqrt()) * g;
    *sq_update = rho * *sq_update + (1.0 - rho) * dx * dx;
    dx
}

/// Per-parameter running averages, in the slot order of
/// [`ModelParams::tensors`].
#[derive(Clone, Debug, PartialEq)]
pub struct Adadelta {
    pub rho: f64,
    pub epsilon: f64,
    sq_grad: Vec<Tensor>,
    sq_update: Vec<Tensor>,
}

impl Adadelta {
    pub fn new(params: &ModelParams, rho: f64, epsilon: f64) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        Adadelta {
            rho,
            epsilon,
            sq_grad: zeros.clone(),
            sq_update: zeros,
        }
    }

    /// `E[g²]` per slot.
    pub fn sq_grad(&self) -> &[Tensor] {
        &self.sq_grad
    }

    /// `E[Δx²]` per slot.
    pub fn sq_update(&self) -> &[Tensor] {
        &self.sq_update
    }

    /// Applies one update. Slots whose gradient is `None` are frozen and
    /// left untouched, accumulators included. The `PAD` embedding row is
    /// never updated.
    pub fn step(&mut self, params: &mut ModelParams, grads: &[Option<Tensor>]) -> Result<()> {
        let mut slots = params.tensors_mut();
        if grads.len() != slots.len() || self.sq_grad.len() != slots.len() {
            return Err(Error::Precondition(format!(
                "{} gradients and {} accumulators for {} parameters",
                grads.len(),
                self.sq_grad.len(),
                slots.len()
            )));
        }
        for (slot, (param, grad)) in slots.iter_mut().zip(grads).enumerate() {
            let Some(grad) = grad else { continue };
            if grad.shape() != param.shape() {
                return Err(Error::shape("adadelta", param.shape(), grad.shape()));
            }
            // slot 0 is the embedding table
            let skip = if slot == 0 {
                let d = param.shape()[1];
                PAD * d..(PAD + 1) * d
            } else {
                0..0
            };
            let (eg, ex) = (self.sq_grad[slot].data_mut(), self.sq_update[slot].data_mut());
            for (i, (p, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
                if skip.contains(&i) {
                    continue;
                }
                *p += adadelta_update(g, &mut eg[i], &mut ex[i], self.rho, self.epsilon);
            }
        }
        Ok(())
    }
}
