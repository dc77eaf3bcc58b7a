//! Central finite differences, used as an independent gradient oracle.

use super::{Gradients, ParamSet};
use crate::error::{Error, Result};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Magnitude below which gradient entries are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

/// Estimates `d loss / d param` for every entry of `params` by
/// `(f(p + h) - f(p - h)) / 2h`.
pub fn finite_diff_grad<F>(mut loss: F, params: &ParamSet, h: f64) -> Result<Gradients>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    let mut probe = params.clone();
    let mut grads = Gradients::new();
    for (name, value) in params.iter() {
        let mut g = value.clone();
        for index in 0..value.len() {
            let (r, c) = (index / value.ncols(), index % value.ncols());
            let original = value[[r, c]];
            let mut eval = |x: f64, probe: &mut ParamSet| -> Result<f64> {
                probe.get_mut(name).expect("cloned")[[r, c]] = x;
                let f = loss(probe)?;
                if f.is_finite() {
                    Ok(f)
                } else {
                    Err(Error::NonFiniteProbe {
                        name: name.to_owned(),
                        index,
                    })
                }
            };
            let plus = eval(original + h, &mut probe)?;
            let minus = eval(original - h, &mut probe)?;
            probe.get_mut(name).expect("cloned")[[r, c]] = original;
            g[[r, c]] = (plus - minus) / (2.0 * h);
        }
        grads.insert(name, g);
    }
    Ok(grads)
}

/// `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Largest entrywise [`relative_error`] over the parameters of `expected`.
/// A name missing from `actual`, or a shape disagreement, counts as infinite.
pub fn max_relative_error(actual: &Gradients, expected: &Gradients) -> f64 {
    let mut worst: f64 = 0.0;
    for (name, e) in expected.iter() {
        let Some(a) = actual.get(name) else {
            return f64::INFINITY;
        };
        if a.dim() != e.dim() {
            return f64::INFINITY;
        }
        for (x, y) in a.iter().zip(e.iter()) {
            worst = worst.max(relative_error(*x, *y));
        }
    }
    worst
}
