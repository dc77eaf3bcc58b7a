//! Bias-corrected ADAM.

use std::collections::BTreeMap;

use ndarray::Zip;

use super::{Gradients, Matrix, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    /// Learning rate 2e-4 with momenta 0.5 / 0.999.
    fn default() -> Self {
        AdamConfig {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: BTreeMap<String, Matrix>,
    v: BTreeMap<String, Matrix>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            t: 0,
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, name: &str) -> Option<&Matrix> {
        self.m.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Matrix> {
        self.v.get(name)
    }
}

/// Applies one ADAM step to every entry of `params`.
///
/// Every parameter must have a gradient of identical shape. Validation
/// happens before any mutation, so on error neither `params` nor `state`
/// changes.
pub fn adam_update(params: &mut ParamSet, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::MissingGradient(name.to_owned()))?;
        if g.dim() != p.dim() {
            return Err(Error::ParamShape {
                name: name.to_owned(),
                expected: format!("{}x{}", p.nrows(), p.ncols()),
                actual: format!("{}x{}", g.nrows(), g.ncols()),
            });
        }
    }

    state.t += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.t as i32;
    let m_corr = 1.0 - beta1.powi(t);
    let v_corr = 1.0 - beta2.powi(t);

    for (name, p) in params.iter_mut() {
        let g = &grads.get(name).expect("validated above");
        let m = state
            .m
            .entry(name.to_owned())
            .or_insert_with(|| Matrix::zeros(p.raw_dim()));
        let v = state
            .v
            .entry(name.to_owned())
            .or_insert_with(|| Matrix::zeros(p.raw_dim()));
        Zip::from(p)
            .and(m)
            .and(v)
            .and(*g)
            .for_each(|p, m, v, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / m_corr;
                let v_hat = *v / v_corr;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            });
    }
    Ok(())
}
