use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::plan::{BondProfile, ShapePlan};

/// Frobenius norm of the discarded tail: `sqrt(sum_{i >= kept} sigma_i^2)`.
/// `kept` beyond the spectrum length discards nothing.
pub fn local_truncation_error<T: Scalar>(spectrum: &[T], kept: usize) -> T {
    spectrum.iter().skip(kept).fold(T::zero(), |acc, &s| acc + s * s).sqrt()
}

/// `sqrt(sum eps_k^2)`, the Frobenius bound on a multi-cut truncation.
pub fn error_bound<T: Scalar>(local_errors: &[T]) -> T {
    local_errors.iter().fold(T::zero(), |acc, &e| acc + e * e).sqrt()
}

/// `sum_k d_{k-1} i_k j_k d_k`.
pub fn parameter_count(plan: &ShapePlan, bonds: &BondProfile) -> usize {
    plan.site_dims()
        .iter()
        .enumerate()
        .map(|(k, a)| bonds.dims[k] * a * bonds.dims[k + 1])
        .sum()
}

/// Parameter count divided by `prod_k i_k j_k` (the padded matrix size).
pub fn compression_ratio(plan: &ShapePlan, bonds: &BondProfile) -> f64 {
    parameter_count(plan, bonds) as f64 / (plan.padded_rows as f64 * plan.padded_cols as f64)
}

/// How singular values are turned into probability weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyWeights {
    /// `v_j = sigma_j^2 / sum sigma_i^2` (Schmidt coefficients).
    #[default]
    Squared,
    /// `v_j = sigma_j / sum sigma_i`.
    Linear,
}

/// Entanglement entropy `-sum v_j ln v_j` of a cut spectrum, with
/// `0 ln 0 = 0`.
pub fn entanglement_entropy<T: Scalar>(spectrum: &[T], weights: EntropyWeights) -> Result<T> {
    if spectrum.iter().any(|&s| s < T::zero() || !s.is_finite()) {
        return Err(Error::InvalidArgument("spectrum entries must be finite and non-negative".into()));
    }
    let w: Vec<T> = match weights {
        EntropyWeights::Squared => spectrum.iter().map(|&s| s * s).collect(),
        EntropyWeights::Linear => spectrum.to_vec(),
    };
    let total: T = w.iter().copied().sum();
    if total == T::zero() {
        return Err(Error::ZeroSpectrum);
    }
    let s = w
        .iter()
        .map(|&x| x / total)
        .filter(|&v| v > T::zero())
        .map(|v| -v * v.ln())
        .sum::<T>();
    Ok(s.max(T::zero()))
}
