//! Matrix product operator factorization of dense matrices.
//!
//! A matrix `M[I, J]` with `I = prod i_k` and `J = prod j_k` is written as a
//! chain of local tensors `T_k[d_{k-1}, i_k, j_k, d_k]`. Row and column
//! indices are split row-major into `(i_1 .. i_n)` and `(j_1 .. j_n)`, then
//! interleaved as `[i1, j1, i2, j2, ..]` before the sequential SVD sweep.

mod chain;
mod metrics;
mod plan;
mod presets;

pub use chain::{decompose, unfolding_spectrum, MpoFactorization, TruncationReport};
pub use metrics::{
    compression_ratio, entanglement_entropy, error_bound, local_truncation_error, parameter_count,
    EntropyWeights,
};
pub use plan::{full_bonds, plan_shapes, BondProfile, ShapePlan};
pub use presets::{preset, Preset, PRESETS};
