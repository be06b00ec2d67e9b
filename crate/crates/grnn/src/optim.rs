//! RMSProp and Adam update rules over the flat parameter enumeration.
//! Epsilon is added after the square root, matching the Keras-style form.

use crate::error::{Error, Result};

pub const RMSPROP_DECAY: f64 = 0.9;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

/// Running mean of squared gradients; step is `lr * g / (sqrt(E) + eps)`.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    accum: Vec<f64>,
}

impl RmsProp {
    pub fn new(lr: f64, len: usize) -> Self {
        RmsProp::with_hyper(lr, RMSPROP_DECAY, DEFAULT_EPS, len)
    }

    pub fn with_hyper(lr: f64, rho: f64, eps: f64, len: usize) -> Self {
        RmsProp {
            lr,
            rho,
            eps,
            accum: vec![0.0; len],
        }
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.accum
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_congruent(params.len(), grads.len(), self.accum.len())?;
        check_finite(grads)?;
        for ((p, &g), e) in params.iter_mut().zip(grads).zip(&mut self.accum) {
            *e = self.rho * *e + (1.0 - self.rho) * g * g;
            *p -= self.lr * g / (e.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Bias-corrected first/second moment update.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, len: usize) -> Self {
        Adam::with_hyper(lr, ADAM_BETA1, ADAM_BETA2, DEFAULT_EPS, len)
    }

    pub fn with_hyper(lr: f64, beta1: f64, beta2: f64, eps: f64, len: usize) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_congruent(params.len(), grads.len(), self.m.len())?;
        check_finite(grads)?;
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Either update rule behind one call site for the training loop.
#[derive(Clone, Debug)]
pub enum Optimizer {
    RmsProp(RmsProp),
    Adam(Adam),
}

impl Optimizer {
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        match self {
            Optimizer::RmsProp(o) => o.update(params, grads),
            Optimizer::Adam(o) => o.update(params, grads),
        }
    }
}

fn check_congruent(params: usize, grads: usize, state: usize) -> Result<()> {
    if params != grads || params != state {
        return Err(Error::Dimension(format!(
            "optimizer lengths differ: params {params}, grads {grads}, state {state}"
        )));
    }
    Ok(())
}

fn check_finite(grads: &[f64]) -> Result<()> {
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite gradient; update rejected".into()));
    }
    Ok(())
}
