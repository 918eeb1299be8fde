//! Parameter-update rules: SGD, Adagrad and Adam.

use std::collections::HashMap;

use crate::error::{AutodiffError, Result};
use crate::param::Parameter;

#[derive(Clone, Copy, Debug)]
pub enum OptimKind {
    Sgd {
        lr: f64,
    },
    Adagrad {
        lr: f64,
        eps: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimKind {
    pub fn sgd(lr: f64) -> Self {
        OptimKind::Sgd { lr }
    }

    pub fn adagrad(lr: f64) -> Self {
        OptimKind::Adagrad { lr, eps: 1e-8 }
    }

    pub fn adam(lr: f64, beta1: f64, beta2: f64) -> Self {
        OptimKind::Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }
}

struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state over a fixed set of parameters. Moment buffers are keyed
/// by parameter identity and live as long as the optimizer.
pub struct Optimizer {
    kind: OptimKind,
    params: Vec<Parameter>,
    slots: HashMap<usize, Slot>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimKind, params: Vec<Parameter>) -> Self {
        Optimizer {
            kind,
            params,
            slots: HashMap::new(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    /// One update from the gradients currently held by the parameters.
    /// A non-finite gradient aborts the whole step before any mutation.
    pub fn step(&mut self) -> Result<()> {
        for p in &self.params {
            if p.grad().iter().any(|g| !g.is_finite()) {
                return Err(AutodiffError::NonFiniteGrad(p.name()));
            }
        }
        self.t += 1;
        let t = self.t;
        for (idx, p) in self.params.iter().enumerate() {
            let slot = self.slots.entry(idx).or_insert_with(|| Slot {
                m: vec![0.0; p.len()],
                v: vec![0.0; p.len()],
            });
            match self.kind {
                OptimKind::Sgd { lr } => p.update(|value, grad| {
                    for (w, g) in value.iter_mut().zip(grad) {
                        *w -= lr * g;
                    }
                }),
                OptimKind::Adagrad { lr, eps } => p.update(|value, grad| {
                    for ((w, g), acc) in value.iter_mut().zip(grad).zip(slot.v.iter_mut()) {
                        *acc += g * g;
                        *w -= lr * g / (acc.sqrt() + eps);
                    }
                }),
                OptimKind::Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                } => {
                    let bc1 = 1.0 - beta1.powi(t as i32);
                    let bc2 = 1.0 - beta2.powi(t as i32);
                    p.update(|value, grad| {
                        for (i, (w, g)) in value.iter_mut().zip(grad).enumerate() {
                            slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * g;
                            slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * g * g;
                            let mhat = slot.m[i] / bc1;
                            let vhat = slot.v[i] / bc2;
                            *w -= lr * mhat / (vhat.sqrt() + eps);
                        }
                    });
                }
            }
        }
        Ok(())
    }
}
