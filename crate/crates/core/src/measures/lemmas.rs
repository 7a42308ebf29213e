//! Two measure-theoretic inequalities behind the long-time analysis, checked on sampled
//! functions. Integrals and set measures both use trapezoid weights on the uniform
//! partition, which makes the discrete statements exact consequences of their
//! hypotheses; the only slack is floating-point rounding.

use serde::Serialize;

use crate::error::{Error, Result};

const ROUNDING: f64 = 1e-12;

/// Trapezoid weights of `m + 1` samples on `[0, t]`.
fn weights(len: usize, t: f64) -> Result<Vec<f64>> {
    if len < 2 {
        return Err(Error::invalid("a sampled function needs at least two samples"));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("T must be positive, got {t}")));
    }
    let h = t / (len - 1) as f64;
    let mut w = vec![h; len];
    w[0] = 0.5 * h;
    w[len - 1] = 0.5 * h;
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LemmaA1Outcome {
    /// `(1/T) int_0^T (T - s) f(s) ds`.
    pub hypothesis_value: f64,
    pub hypothesis_holds: bool,
    /// `|{s : f(s) <= C}|`.
    pub measure_below: f64,
    /// `T/2 - 1`.
    pub bound: f64,
    pub conclusion_holds: bool,
}

impl LemmaA1Outcome {
    /// The implication "hypothesis implies conclusion".
    pub fn holds(&self) -> bool {
        !self.hypothesis_holds || self.conclusion_holds
    }
}

/// `(1/T) int (T - s) f <= C` implies `|{f <= C}| >= T/2 - 1`, for `f >= 0` sampled at
/// `s_i = i T / m`.
pub fn lemma_a1_check(f: &[f64], t: f64, c: f64) -> Result<LemmaA1Outcome> {
    let w = weights(f.len(), t)?;
    if !(c > 0.0) {
        return Err(Error::invalid(format!("C must be positive, got {c}")));
    }
    if let Some(bad) = f.iter().find(|&&v| !(v >= 0.0)) {
        return Err(Error::invalid(format!("f must be nonnegative, found {bad}")));
    }
    let h = t / (f.len() - 1) as f64;
    let hypothesis_value = f
        .iter()
        .zip(&w)
        .enumerate()
        .map(|(i, (fi, wi))| wi * (t - i as f64 * h) * fi)
        .sum::<f64>()
        / t;
    let measure_below: f64 = f.iter().zip(&w).filter(|(fi, _)| **fi <= c).map(|(_, wi)| wi).sum();
    let bound = 0.5 * t - 1.0;
    Ok(LemmaA1Outcome {
        hypothesis_value,
        hypothesis_holds: hypothesis_value <= c * (1.0 + ROUNDING),
        measure_below,
        bound,
        conclusion_holds: measure_below >= bound - ROUNDING * t.max(1.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LemmaA2Outcome {
    pub mean: f64,
    /// `(1/T) |{t : f(t) >= lambda}|`.
    pub fraction_above: f64,
    /// `(rho - lambda) / (delta - lambda)`.
    pub bound: f64,
    pub holds: bool,
}

/// For `0 <= f <= delta`, `0 < lambda < rho < delta` and mean at least `rho`, the time
/// fraction where `f >= lambda` is at least `(rho - lambda) / (delta - lambda)`.
pub fn lemma_a2_check(f: &[f64], t: f64, delta: f64, rho: f64, lambda: f64) -> Result<LemmaA2Outcome> {
    let w = weights(f.len(), t)?;
    if !(0.0 < lambda && lambda < rho && rho < delta) {
        return Err(Error::invalid(format!(
            "need 0 < lambda < rho < delta, got lambda={lambda}, rho={rho}, delta={delta}"
        )));
    }
    if let Some(bad) = f.iter().find(|&&v| !(0.0..=delta).contains(&v)) {
        return Err(Error::invalid(format!("f must lie in [0, {delta}], found {bad}")));
    }
    let mean = f.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / t;
    if mean < rho {
        return Err(Error::invalid(format!("mean of f is {mean}, below rho = {rho}")));
    }
    let fraction_above = f.iter().zip(&w).filter(|(fi, _)| **fi >= lambda).map(|(_, wi)| wi).sum::<f64>() / t;
    let bound = (rho - lambda) / (delta - lambda);
    Ok(LemmaA2Outcome {
        mean,
        fraction_above,
        bound,
        holds: fraction_above >= bound - ROUNDING,
    })
}
