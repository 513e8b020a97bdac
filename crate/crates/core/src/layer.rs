//! Affine layer `y = x W + b` with `W` held in MPO form.
//!
//! Inputs are `[batch, I]` with `I = prod i_k`, outputs `[batch, J]` with
//! `J = prod j_k`. The weight matrix is never materialized on the forward
//! path: the input is reshaped to `[batch, i_1, .., i_n]` and contracted
//! through the chain one local tensor at a time, left to right.
//!
//! At step `k` the running state is laid out as `[O, P, R]` with
//! `O = batch * j_1 .. j_{k-1}`, `P = d_{k-1} * i_k`, `R = i_{k+1} .. i_n`,
//! and the local tensor is viewed as `[P, Q]` with `Q = j_k * d_k`.

use crate::error::{Error, Result};
use crate::mpo::{decompose, BondProfile, MpoFactorization, ShapePlan};
use crate::scalar::Scalar;
use crate::tensor::{matmul_raw, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct MpoLinear<T: Scalar = f64> {
    factorization: MpoFactorization<T>,
    bias: Vec<T>,
    freeze_central: bool,
}

/// Gradients with the same shapes as the layer's parameters and input.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T: Scalar = f64> {
    pub tensors: Vec<Tensor<T>>,
    pub bias: Vec<T>,
    pub input: Tensor<T>,
}

impl<T: Scalar> LayerGrads<T> {
    /// Largest absolute entry over parameter gradients (input excluded).
    pub fn max_abs(&self) -> T {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter())
            .chain(&self.bias)
            .fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}

/// Per-step shapes of the left-to-right contraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct StepDims {
    outer: usize,
    inner: usize,
    out: usize,
    rest: usize,
}

fn step_dims(plan: &ShapePlan, bonds: &BondProfile, batch: usize) -> Vec<StepDims> {
    let n = plan.n();
    (0..n)
        .map(|k| StepDims {
            outer: batch * plan.col_factors[..k].iter().product::<usize>(),
            inner: bonds.dims[k] * plan.row_factors[k],
            out: plan.col_factors[k] * bonds.dims[k + 1],
            rest: plan.row_factors[k + 1..].iter().product(),
        })
        .collect()
}

/// Analytic floating-point operation count (two per multiply-add) of the
/// chain forward pass for a batch. Bias additions are not counted.
pub fn forward_flops(plan: &ShapePlan, bonds: &BondProfile, batch: usize) -> u64 {
    step_dims(plan, bonds, batch)
        .iter()
        .map(|s| 2 * (s.outer as u64) * (s.inner as u64) * (s.out as u64) * (s.rest as u64))
        .sum()
}

/// `2 * rows * cols * batch`, the cost of the equivalent dense product.
pub fn dense_flops(rows: usize, cols: usize, batch: usize) -> u64 {
    2 * rows as u64 * cols as u64 * batch as u64
}

// out[o, q, r] = sum_p s[o, p, r] t[p, q]
fn contract_forward<T: Scalar>(s: &[T], t: &[T], d: StepDims) -> Vec<T> {
    let StepDims { outer, inner, out, rest } = d;
    if rest == 1 {
        return matmul_raw(s, t, outer, inner, out);
    }
    let mut res = vec![T::zero(); outer * out * rest];
    for o in 0..outer {
        let src = &s[o * inner * rest..(o + 1) * inner * rest];
        let dst = &mut res[o * out * rest..(o + 1) * out * rest];
        for p in 0..inner {
            let srow = &src[p * rest..(p + 1) * rest];
            for q in 0..out {
                let w = t[p * out + q];
                if w == T::zero() {
                    continue;
                }
                for (y, &x) in dst[q * rest..(q + 1) * rest].iter_mut().zip(srow) {
                    *y += w * x;
                }
            }
        }
    }
    res
}

// out[o, p, r] = sum_q g[o, q, r] t[p, q]
fn contract_backward<T: Scalar>(g: &[T], t: &[T], d: StepDims) -> Vec<T> {
    let StepDims { outer, inner, out, rest } = d;
    let mut res = vec![T::zero(); outer * inner * rest];
    for o in 0..outer {
        let src = &g[o * out * rest..(o + 1) * out * rest];
        let dst = &mut res[o * inner * rest..(o + 1) * inner * rest];
        for p in 0..inner {
            let drow = &mut dst[p * rest..(p + 1) * rest];
            for q in 0..out {
                let w = t[p * out + q];
                if w == T::zero() {
                    continue;
                }
                for (y, &x) in drow.iter_mut().zip(&src[q * rest..(q + 1) * rest]) {
                    *y += w * x;
                }
            }
        }
    }
    res
}

// dt[p, q] = sum_{o, r} l[o, p, r] g[o, q, r]
fn contract_weight_grad<T: Scalar>(l: &[T], g: &[T], d: StepDims) -> Vec<T> {
    let StepDims { outer, inner, out, rest } = d;
    let mut res = vec![T::zero(); inner * out];
    for o in 0..outer {
        let lo = &l[o * inner * rest..(o + 1) * inner * rest];
        let go = &g[o * out * rest..(o + 1) * out * rest];
        for p in 0..inner {
            let lrow = &lo[p * rest..(p + 1) * rest];
            for q in 0..out {
                let grow = &go[q * rest..(q + 1) * rest];
                let dot: T = lrow.iter().zip(grow).map(|(&a, &b)| a * b).sum();
                res[p * out + q] += dot;
            }
        }
    }
    res
}

fn pad_columns<T: Scalar>(x: &Tensor<T>, cols: usize) -> Result<Tensor<T>> {
    x.pad(x.rows(), cols)
}

impl<T: Scalar> MpoLinear<T> {
    /// Decomposes `w` (`[I, J]`), truncates to `bonds` and balances the
    /// tensor norms. `bias` must have length `J`.
    pub fn from_dense(w: &Tensor<T>, bias: &[T], plan: &ShapePlan, bonds: &BondProfile) -> Result<Self> {
        if bias.len() != plan.cols {
            return Err(Error::ShapeMismatch(format!("bias has {} entries, expected {}", bias.len(), plan.cols)));
        }
        bonds.validate(plan)?;
        let full = decompose(w, plan)?;
        let mut factorization = if &bonds.realizable(plan) == full.bonds() {
            full
        } else {
            full.truncate(bonds, None)?.0
        };
        factorization.balance_norms();
        Ok(Self { factorization, bias: bias.to_vec(), freeze_central: false })
    }

    pub fn from_factorization(factorization: MpoFactorization<T>, bias: Vec<T>, freeze_central: bool) -> Result<Self> {
        if bias.len() != factorization.plan().cols {
            return Err(Error::ShapeMismatch(format!(
                "bias has {} entries, expected {}",
                bias.len(),
                factorization.plan().cols
            )));
        }
        Ok(Self { factorization, bias, freeze_central })
    }

    pub fn factorization(&self) -> &MpoFactorization<T> {
        &self.factorization
    }

    pub fn factorization_mut(&mut self) -> &mut MpoFactorization<T> {
        &mut self.factorization
    }

    pub fn plan(&self) -> &ShapePlan {
        self.factorization.plan()
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn input_dim(&self) -> usize {
        self.plan().rows
    }

    pub fn output_dim(&self) -> usize {
        self.plan().cols
    }

    pub fn freeze_central(&self) -> bool {
        self.freeze_central
    }

    pub fn set_freeze_central(&mut self, freeze: bool) {
        self.freeze_central = freeze;
    }

    pub fn central_index(&self) -> usize {
        self.factorization.central_index()
    }

    pub fn parameter_count(&self) -> usize {
        self.factorization.parameter_count()
    }

    pub fn central_parameter_count(&self) -> usize {
        self.factorization.central().numel()
    }

    pub fn auxiliary_parameter_count(&self) -> usize {
        self.parameter_count() - self.central_parameter_count()
    }

    /// Parameters an optimizer may change under the current freeze flag,
    /// biases included.
    pub fn trainable_parameter_count(&self) -> usize {
        let tensors = if self.freeze_central { self.auxiliary_parameter_count() } else { self.parameter_count() };
        tensors + self.bias.len()
    }

    /// Analytic FLOPs of one forward pass over `batch` rows.
    pub fn forward_flops(&self, batch: usize) -> u64 {
        forward_flops(self.plan(), self.factorization.bonds(), batch)
    }

    /// Dense weight and bias copy.
    pub fn to_dense(&self) -> Result<(Tensor<T>, Vec<T>)> {
        Ok((self.factorization.reconstruct()?, self.bias.clone()))
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if !x.is_matrix() || x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input is {:?}, expected [batch, {}]",
                x.shape(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Left states `L_0 .. L_n` of the contraction (`L_0` is the padded
    /// input, `L_n` the padded output without bias).
    fn left_states(&self, x: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        let plan = self.plan();
        let batch = x.rows();
        let dims = step_dims(plan, self.factorization.bonds(), batch);
        let mut states = Vec::with_capacity(dims.len() + 1);
        states.push(pad_columns(x, plan.padded_rows)?.into_data());
        for (k, d) in dims.iter().enumerate() {
            let next = contract_forward(&states[k], self.factorization.tensors()[k].data(), *d);
            states.push(next);
        }
        Ok(states)
    }

    fn finish_output(&self, padded_out: Vec<T>, batch: usize) -> Result<Tensor<T>> {
        let plan = self.plan();
        let mut y = Tensor::new(vec![batch, plan.padded_cols], padded_out)?.crop(batch, plan.cols)?;
        for row in y.data_mut().chunks_mut(plan.cols) {
            for (v, &b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(y)
    }

    /// `x W + b` for `x` of shape `[batch, I]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut states = self.left_states(x)?;
        let out = states.pop().expect("n >= 2 states");
        self.finish_output(out, x.rows())
    }

    /// Gradients of `sum(grad_out * forward(x))` with respect to every local
    /// tensor, the bias and the input. When the central tensor is frozen its
    /// gradient is computed and then zeroed.
    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<LayerGrads<T>> {
        let grads = self.backward_unmasked(x, grad_out)?;
        Ok(self.mask(grads))
    }

    /// [`Self::backward`] without the freeze mask.
    pub fn backward_unmasked(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<LayerGrads<T>> {
        self.check_input(x)?;
        let batch = x.rows();
        if grad_out.shape() != [batch, self.output_dim()] {
            return Err(Error::ShapeMismatch(format!(
                "grad_out is {:?}, expected [{batch}, {}]",
                grad_out.shape(),
                self.output_dim()
            )));
        }
        let plan = self.plan();
        let n = plan.n();
        let dims = step_dims(plan, self.factorization.bonds(), batch);
        let states = self.left_states(x)?;

        let mut bias = vec![T::zero(); self.output_dim()];
        for row in grad_out.data().chunks(self.output_dim()) {
            for (b, &g) in bias.iter_mut().zip(row) {
                *b += g;
            }
        }

        let mut g = pad_columns(grad_out, plan.padded_cols)?.into_data();
        let mut tensor_grads: Vec<Option<Tensor<T>>> = vec![None; n];
        for k in (0..n).rev() {
            let t = &self.factorization.tensors()[k];
            let dt = contract_weight_grad(&states[k], &g, dims[k]);
            tensor_grads[k] = Some(Tensor::new(t.shape().to_vec(), dt)?);
            g = contract_backward(&g, t.data(), dims[k]);
        }
        let input = Tensor::new(vec![batch, plan.padded_rows], g)?.crop(batch, self.input_dim())?;
        Ok(LayerGrads {
            tensors: tensor_grads.into_iter().map(|t| t.expect("filled")).collect(),
            bias,
            input,
        })
    }

    fn mask(&self, mut grads: LayerGrads<T>) -> LayerGrads<T> {
        if self.freeze_central {
            let c = self.central_index();
            grads.tensors[c].data_mut().iter_mut().for_each(|x| *x = T::zero());
        }
        grads
    }

    /// Subtracts `delta` from the parameters. The central tensor is skipped
    /// entirely while frozen, whatever `delta` contains.
    pub fn apply_delta(&mut self, delta: &LayerGrads<T>) -> Result<()> {
        if delta.tensors.len() != self.factorization.n() || delta.bias.len() != self.bias.len() {
            return Err(Error::ShapeMismatch("update does not match layer parameters".into()));
        }
        let central = self.central_index();
        for (k, d) in delta.tensors.iter().enumerate() {
            if self.freeze_central && k == central {
                continue;
            }
            if d.shape() != self.factorization.tensors()[k].shape() {
                return Err(Error::ShapeMismatch(format!("update for tensor {k} has shape {:?}", d.shape())));
            }
            let t = self.factorization.tensor_mut(k);
            for (p, &u) in t.data_mut().iter_mut().zip(d.data()) {
                *p -= u;
            }
        }
        for (b, &u) in self.bias.iter_mut().zip(&delta.bias) {
            *b -= u;
        }
        Ok(())
    }

    /// Re-derives the chain at `target` bonds from the current weights and
    /// rebalances norms. Bias and freeze flag are kept.
    pub fn retruncate(&mut self, target: &BondProfile) -> Result<crate::mpo::TruncationReport<T>> {
        let (mut f, report) = self.factorization.truncate(target, None)?;
        f.balance_norms();
        self.factorization = f;
        Ok(report)
    }
}

/// Counts of elementwise `|after - before|` per tensor group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupHistogram {
    pub total: usize,
    /// Entries with exactly zero change.
    pub unchanged: usize,
    /// `counts[0]` is `(0, edges[0]]`, ..., the last is `(edges[last], inf)`.
    pub counts: Vec<usize>,
}

impl GroupHistogram {
    fn new(bins: usize) -> Self {
        Self { total: 0, unchanged: 0, counts: vec![0; bins] }
    }

    pub fn fractions(&self) -> Vec<f64> {
        let total = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    pub fn unchanged_fraction(&self) -> f64 {
        self.unchanged as f64 / self.total.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationHistogram {
    pub edges: Vec<f64>,
    pub central: GroupHistogram,
    pub auxiliary: GroupHistogram,
}

/// Bin edges giving `(0, 1e-4]`, `(1e-4, 1e-3]`, `(1e-3, inf)`.
pub const DEFAULT_VARIATION_EDGES: [f64; 2] = [1e-4, 1e-3];

/// Histogram of parameter changes between two snapshots of the same layer.
pub fn variation_histogram<T: Scalar>(
    before: &MpoLinear<T>,
    after: &MpoLinear<T>,
    edges: &[f64],
) -> Result<VariationHistogram> {
    if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) || edges[0] <= 0.0 {
        return Err(Error::InvalidArgument(format!("bin edges must be positive and increasing: {edges:?}")));
    }
    let fb = before.factorization();
    let fa = after.factorization();
    if fb.bonds() != fa.bonds() || fb.plan() != fa.plan() {
        return Err(Error::ShapeMismatch("layers have different shapes".into()));
    }
    let mut central = GroupHistogram::new(edges.len() + 1);
    let mut auxiliary = GroupHistogram::new(edges.len() + 1);
    let c = fb.central_index();
    for (k, (tb, ta)) in fb.tensors().iter().zip(fa.tensors()).enumerate() {
        let group = if k == c { &mut central } else { &mut auxiliary };
        for (&x, &y) in tb.data().iter().zip(ta.data()) {
            let delta = (y - x).abs().to_f64_lossy();
            group.total += 1;
            if delta == 0.0 {
                group.unchanged += 1;
                continue;
            }
            let bin = edges.iter().position(|&e| delta <= e).unwrap_or(edges.len());
            group.counts[bin] += 1;
        }
    }
    Ok(VariationHistogram { edges: edges.to_vec(), central, auxiliary })
}
