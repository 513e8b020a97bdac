use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{Error, Result};
use crate::layer::{LayerGrads, MpoLinear};
use crate::mpo::{decompose, full_bonds, plan_shapes, BondProfile, ShapePlan};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
    #[default]
    Tanh,
}

impl Nonlinearity {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Nonlinearity::Relu => z.max(0.0),
            Nonlinearity::Tanh => z.tanh(),
        }
    }

    /// Derivative evaluated at the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Nonlinearity::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Loss attached to the network output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Per-sample mean squared error over output coordinates.
    #[default]
    Regression,
    /// Cross-entropy of softmax(output) against a probability target.
    Softmax,
}

impl Head {
    pub fn sample_loss(self, y: &[f64], t: &[f64]) -> f64 {
        match self {
            Head::Regression => y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64,
            Head::Softmax => {
                let lse = log_sum_exp(y);
                y.iter().zip(t).map(|(&z, &p)| if p == 0.0 { 0.0 } else { -p * (z - lse) }).sum()
            }
        }
    }

    /// Gradient of `sample_loss` with respect to `y`, written into `out`.
    fn sample_grad(self, y: &[f64], t: &[f64], out: &mut [f64]) {
        match self {
            Head::Regression => {
                let s = 2.0 / y.len() as f64;
                for ((o, a), b) in out.iter_mut().zip(y).zip(t) {
                    *o = s * (a - b);
                }
            }
            Head::Softmax => {
                let lse = log_sum_exp(y);
                let mass: f64 = t.iter().sum();
                for ((o, &z), &p) in out.iter_mut().zip(y).zip(t) {
                    *o = mass * (z - lse).exp() - p;
                }
            }
        }
    }
}

fn log_sum_exp(y: &[f64]) -> f64 {
    let m = y.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + y.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Uniform `(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
fn scaled_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(vec![rows, cols], |_| rng.gen_range(-a..a))
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidArgument(format!("layer widths must be positive, got {dims:?}")));
    }
    Ok(())
}

fn add_bias(y: &mut Tensor, b: &[f64]) {
    let cols = y.cols();
    for row in y.data_mut().chunks_mut(cols) {
        for (v, bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
}

/// Shape of a structured teacher, see [`DenseNetwork::low_entanglement`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherStructure {
    pub n: usize,
    pub bond_cap: usize,
    pub residual: f64,
}

/// The uncompressed counterpart of [`ToyNetwork`]; used as teacher and as
/// the reference a compressed network is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Vec<f64>>,
    pub nonlinearity: Nonlinearity,
    pub head: Head,
}

impl DenseNetwork {
    /// Scaled-uniform weights and zero biases, deterministic in `seed`.
    pub fn random(dims: &[usize], nonlinearity: Nonlinearity, head: Head, seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = dims.windows(2).map(|w| scaled_uniform(w[0], w[1], &mut rng)).collect::<Result<Vec<_>>>()?;
        let biases = dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Ok(Self { weights, biases, nonlinearity, head })
    }

    /// Like [`DenseNetwork::random`], but every weight is first projected
    /// onto an `n`-site MPO with interior bonds capped at `bond_cap`,
    /// rescaled to its original norm, and then perturbed by `residual`
    /// times the original matrix. Weights of this kind have quickly
    /// decaying cut spectra.
    pub fn low_entanglement(
        dims: &[usize],
        nonlinearity: Nonlinearity,
        head: Head,
        seed: u64,
        structure: &TeacherStructure,
    ) -> Result<Self> {
        let mut net = Self::random(dims, nonlinearity, head, seed)?;
        for w in &mut net.weights {
            let plan = plan_shapes(w.rows(), w.cols(), structure.n, None, None)?;
            let n = plan.n();
            let caps = BondProfile::new(
                full_bonds(&plan)
                    .dims
                    .iter()
                    .enumerate()
                    .map(|(k, &d)| if k == 0 || k == n { 1 } else { d.min(structure.bond_cap.max(1)) })
                    .collect(),
            );
            let mut low = decompose(w, &plan)?.truncate(&caps, None)?.0.reconstruct()?;
            let (norm, low_norm) = (w.frobenius_norm(), low.frobenius_norm());
            if low_norm > 0.0 {
                low.scale_in_place(norm / low_norm);
            }
            for (a, &b) in low.data_mut().iter_mut().zip(w.data()) {
                *a += structure.residual * b;
            }
            *w = low;
        }
        Ok(net)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.matmul(w)?;
            add_bias(&mut h, b);
            if l < last {
                h.data_mut().iter_mut().for_each(|v| *v = self.nonlinearity.apply(*v));
            }
        }
        Ok(h)
    }
}

/// Stack of [`MpoLinear`] layers with a pointwise nonlinearity between
/// consecutive layers (none after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNetwork {
    pub layers: Vec<MpoLinear>,
    pub nonlinearity: Nonlinearity,
    pub head: Head,
}

/// Automatic plans with `n` sites for every layer of `dims`.
pub fn auto_plans(dims: &[usize], n: usize) -> Result<Vec<ShapePlan>> {
    check_dims(dims)?;
    dims.windows(2).map(|w| plan_shapes(w[0], w[1], n, None, None)).collect()
}

/// Random dense initialization from `seed`, factorized at full bonds.
pub fn build_toy_network(
    dims: &[usize],
    plans: &[ShapePlan],
    nonlinearity: Nonlinearity,
    head: Head,
    seed: u64,
) -> Result<ToyNetwork> {
    let dense = DenseNetwork::random(dims, nonlinearity, head, seed)?;
    ToyNetwork::from_dense(&dense, plans, None)
}

impl ToyNetwork {
    /// Factorizes every layer of `dense`, at full bonds unless `bonds` is
    /// given.
    pub fn from_dense(dense: &DenseNetwork, plans: &[ShapePlan], bonds: Option<&[BondProfile]>) -> Result<Self> {
        if dense.weights.len() < 2 {
            return Err(Error::InvalidArgument("a toy network needs at least two layers".into()));
        }
        if plans.len() != dense.weights.len() || bonds.is_some_and(|b| b.len() != plans.len()) {
            return Err(Error::InvalidArgument(format!(
                "{} layers but {} plans",
                dense.weights.len(),
                plans.len()
            )));
        }
        let layers = dense
            .weights
            .iter()
            .zip(&dense.biases)
            .zip(plans)
            .enumerate()
            .map(|(l, ((w, b), plan))| {
                if w.shape() != [plan.rows, plan.cols] {
                    return Err(Error::InvalidPlan(format!(
                        "layer {l} is {:?} but its plan is {}x{}",
                        w.shape(),
                        plan.rows,
                        plan.cols
                    )));
                }
                let target = bonds.map_or_else(|| full_bonds(plan), |b| b[l].clone());
                MpoLinear::from_dense(w, b, plan, &target)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, dense.nonlinearity, dense.head)
    }

    pub fn new(layers: Vec<MpoLinear>, nonlinearity: Nonlinearity, head: Head) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidArgument("a toy network needs at least two layers".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    l + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers, nonlinearity, head })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn set_freeze_central(&mut self, freeze: bool) {
        self.layers.iter_mut().for_each(|l| l.set_freeze_central(freeze));
    }

    /// MPO tensor elements over all layers (biases excluded).
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(MpoLinear::parameter_count).sum()
    }

    pub fn bias_count(&self) -> usize {
        self.layers.iter().map(|l| l.bias().len()).sum()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.layers.iter().map(MpoLinear::trainable_parameter_count).sum()
    }

    /// Network-level ratio: tensor elements over the summed padded matrix
    /// sizes of all layers.
    pub fn compression_ratio(&self) -> f64 {
        let dense: usize = self.layers.iter().map(|l| l.plan().padded_rows * l.plan().padded_cols).sum();
        self.parameter_count() as f64 / dense as f64
    }

    pub fn bond_profiles(&self) -> Vec<BondProfile> {
        self.layers.iter().map(|l| l.factorization().bonds().clone()).collect()
    }

    pub fn to_dense(&self) -> Result<DenseNetwork> {
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (w, b) = l.to_dense()?;
            weights.push(w);
            biases.push(b);
        }
        Ok(DenseNetwork { weights, biases, nonlinearity: self.nonlinearity, head: self.head })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if l < last {
                h.data_mut().iter_mut().for_each(|v| *v = self.nonlinearity.apply(*v));
            }
        }
        Ok(h)
    }

    /// Mean batch loss and per-layer gradients (masked by each layer's
    /// freeze flag).
    pub fn loss_and_grads(&self, x: &Tensor, t: &Tensor) -> Result<(f64, Vec<LayerGrads>)> {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h)?;
            inputs.push(h);
            h = z.clone();
            if l < last {
                h.data_mut().iter_mut().for_each(|v| *v = self.nonlinearity.apply(*v));
            }
            pre.push(z);
        }
        let y = &pre[last];
        if t.shape() != y.shape() {
            return Err(Error::ShapeMismatch(format!("targets are {:?}, outputs {:?}", t.shape(), y.shape())));
        }
        let batch = y.rows();
        let cols = y.cols();
        let mut loss = 0.0;
        let mut g = Tensor::zeros(vec![batch, cols])?;
        for ((yr, tr), gr) in y.data().chunks(cols).zip(t.data().chunks(cols)).zip(g.data_mut().chunks_mut(cols)) {
            loss += self.head.sample_loss(yr, tr);
            self.head.sample_grad(yr, tr, gr);
        }
        g.scale_in_place(1.0 / batch as f64);
        loss /= batch as f64;

        let mut grads: Vec<Option<LayerGrads>> = vec![None; self.layers.len()];
        for l in (0..=last).rev() {
            let lg = self.layers[l].backward(&inputs[l], &g)?;
            if l > 0 {
                g = lg.input.clone();
                for (gv, &z) in g.data_mut().iter_mut().zip(pre[l - 1].data()) {
                    *gv *= self.nonlinearity.derivative(z);
                }
            }
            grads[l] = Some(lg);
        }
        Ok((loss, grads.into_iter().map(|g| g.expect("filled")).collect()))
    }
}

const EVAL_CHUNK: usize = 256;

/// Mean per-sample loss over `data`, accumulated in row order.
pub fn evaluate(net: &ToyNetwork, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cols = net.output_dim();
    let mut total = 0.0;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, t) = data.batch(chunk)?;
        let y = net.forward(&x)?;
        if t.shape() != y.shape() {
            return Err(Error::ShapeMismatch(format!("targets are {:?}, outputs {:?}", t.shape(), y.shape())));
        }
        for (yr, tr) in y.data().chunks(cols).zip(t.data().chunks(cols)) {
            total += net.head.sample_loss(yr, tr);
        }
    }
    Ok(total / data.len() as f64)
}
