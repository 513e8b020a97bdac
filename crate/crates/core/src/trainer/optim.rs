use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::network::{evaluate, ToyNetwork};
use crate::error::{Error, Result};
use crate::layer::LayerGrads;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd {
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        epsilon: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Sgd { momentum: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Sample-weighted mean of the minibatch losses seen during the epoch.
    pub train_loss: f64,
    pub eval_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub initial_eval_loss: f64,
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn final_eval_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_eval_loss, |e| e.eval_loss)
    }
}

/// First and second moment buffers shaped like the parameters.
struct Moments {
    first: Vec<LayerGrads>,
    second: Vec<LayerGrads>,
    steps: i32,
}

fn zeros_like(net: &ToyNetwork) -> Vec<LayerGrads> {
    net.layers
        .iter()
        .map(|l| LayerGrads {
            tensors: l.factorization().tensors().iter().map(|t| Tensor::zeros(t.shape().to_vec()).expect("valid")).collect(),
            bias: vec![0.0; l.bias().len()],
            input: Tensor::zeros(vec![1]).expect("valid"),
        })
        .collect()
}

fn zip_params(a: &mut LayerGrads, b: &LayerGrads, mut f: impl FnMut(&mut f64, f64)) {
    for (ta, tb) in a.tensors.iter_mut().zip(&b.tensors) {
        for (x, &y) in ta.data_mut().iter_mut().zip(tb.data()) {
            f(x, y);
        }
    }
    for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
        f(x, y);
    }
}

fn scale_params(g: &mut LayerGrads, s: f64) {
    g.tensors.iter_mut().for_each(|t| t.scale_in_place(s));
    g.bias.iter_mut().for_each(|b| *b *= s);
}

impl Moments {
    fn new(net: &ToyNetwork) -> Self {
        Self { first: zeros_like(net), second: zeros_like(net), steps: 0 }
    }

    /// Turns raw gradients into the (already scaled) parameter deltas.
    fn deltas(&mut self, opt: Optimizer, lr: f64, mut grads: Vec<LayerGrads>) -> Vec<LayerGrads> {
        self.steps += 1;
        match opt {
            Optimizer::Sgd { momentum } if momentum == 0.0 => {
                grads.iter_mut().for_each(|g| scale_params(g, lr));
                grads
            }
            Optimizer::Sgd { momentum } => {
                for (v, g) in self.first.iter_mut().zip(&grads) {
                    zip_params(v, g, |x, y| *x = momentum * *x + y);
                }
                let mut out = self.first.clone();
                out.iter_mut().for_each(|d| scale_params(d, lr));
                out
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                for ((m, v), g) in self.first.iter_mut().zip(self.second.iter_mut()).zip(&grads) {
                    zip_params(m, g, |x, y| *x = beta1 * *x + (1.0 - beta1) * y);
                    zip_params(v, g, |x, y| *x = beta2 * *x + (1.0 - beta2) * y * y);
                }
                let c1 = 1.0 - beta1.powi(self.steps);
                let c2 = 1.0 - beta2.powi(self.steps);
                let mut out = self.first.clone();
                for (d, v) in out.iter_mut().zip(&self.second) {
                    zip_params(d, v, |x, y| *x = lr * (*x / c1) / ((y / c2).sqrt() + epsilon));
                }
                out
            }
        }
    }
}

/// Minibatch training of every parameter the layers' freeze flags allow.
/// Rows are reshuffled each epoch from `opts.seed`.
pub fn train(net: &mut ToyNetwork, train: &Dataset, eval: &Dataset, opts: &TrainOptions) -> Result<TrainingLog> {
    opts.validate()?;
    let initial_eval_loss = evaluate(net, eval)?;
    let mut log = TrainingLog { initial_eval_loss, epochs: Vec::with_capacity(opts.epochs) };
    if opts.epochs == 0 {
        return Ok(log);
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut moments = Moments::new(net);
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (b, chunk) in order.chunks(opts.batch_size).enumerate() {
            let (x, t) = train.batch(chunk)?;
            let (loss, grads) = net.loss_and_grads(&x, &t)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "epoch {epoch}, batch {b}: loss {loss} (learning rate {})",
                    opts.learning_rate
                )));
            }
            weighted += loss * chunk.len() as f64;
            let deltas = moments.deltas(opts.optimizer, opts.learning_rate, grads);
            for (layer, d) in net.layers.iter_mut().zip(&deltas) {
                layer.apply_delta(d)?;
            }
        }
        let eval_loss = evaluate(net, eval)?;
        if !eval_loss.is_finite() {
            return Err(Error::NonFiniteLoss(format!("epoch {epoch}: held-out loss {eval_loss}")));
        }
        log.epochs.push(EpochLog { epoch, train_loss: weighted / train.len() as f64, eval_loss });
    }
    Ok(log)
}

/// Freezes every central tensor and trains the auxiliary tensors and
/// biases only.
pub fn finetune_auxiliary(
    net: &mut ToyNetwork,
    train_set: &Dataset,
    eval: &Dataset,
    opts: &TrainOptions,
) -> Result<TrainingLog> {
    net.set_freeze_central(true);
    train(net, train_set, eval, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullVsAuxiliaryReport {
    pub initial_loss: f64,
    pub full_loss: f64,
    pub auxiliary_loss: f64,
    /// Tensor elements plus biases.
    pub total_parameters: usize,
    pub full_trainable: usize,
    pub auxiliary_trainable: usize,
}

impl FullVsAuxiliaryReport {
    pub fn auxiliary_share(&self) -> f64 {
        self.auxiliary_trainable as f64 / self.total_parameters as f64
    }
}

/// Trains two clones of `net` under identical options, one with every
/// tensor free and one with central tensors frozen.
pub fn full_vs_auxiliary_report(
    net: &ToyNetwork,
    train_set: &Dataset,
    eval: &Dataset,
    opts: &TrainOptions,
) -> Result<(FullVsAuxiliaryReport, ToyNetwork, ToyNetwork)> {
    let mut full = net.clone();
    full.set_freeze_central(false);
    let full_trainable = full.trainable_parameter_count();
    let full_log = train(&mut full, train_set, eval, opts)?;

    let mut aux = net.clone();
    aux.set_freeze_central(true);
    let auxiliary_trainable = aux.trainable_parameter_count();
    let aux_log = train(&mut aux, train_set, eval, opts)?;

    let report = FullVsAuxiliaryReport {
        initial_loss: full_log.initial_eval_loss,
        full_loss: full_log.final_eval_loss(),
        auxiliary_loss: aux_log.final_eval_loss(),
        total_parameters: net.parameter_count() + net.bias_count(),
        full_trainable,
        auxiliary_trainable,
    };
    Ok((report, full, aux))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::data::{teacher_data, TeacherTask};
    use crate::trainer::network::{auto_plans, build_toy_network, Head, Nonlinearity};

    fn setup(seed: u64) -> (ToyNetwork, Dataset, Dataset) {
        let task = TeacherTask {
            dims: vec![16, 4],
            nonlinearity: Nonlinearity::Tanh,
            head: Head::Regression,
            train_size: 128,
            eval_size: 64,
            noise: 0.01,
            seed,
            structure: None,
        };
        let (train, eval, _) = teacher_data(&task).unwrap();
        let dims = [16, 16, 4];
        let net =
            build_toy_network(&dims, &auto_plans(&dims, 3).unwrap(), Nonlinearity::Tanh, Head::Regression, seed + 1)
                .unwrap();
        (net, train, eval)
    }

    fn opts(epochs: usize) -> TrainOptions {
        TrainOptions { epochs, learning_rate: 0.05, batch_size: 16, seed: 1, optimizer: Optimizer::default() }
    }

    fn centrals(net: &ToyNetwork) -> Vec<Tensor> {
        net.layers.iter().map(|l| l.factorization().central().clone()).collect()
    }

    #[test]
    fn zero_epochs_leave_network_unchanged() {
        let (mut net, train_set, eval) = setup(1);
        let before = net.clone();
        let log = finetune_auxiliary(&mut net, &train_set, &eval, &opts(0)).unwrap();
        assert!(log.epochs.is_empty());
        net.set_freeze_central(false);
        assert_eq!(net, before);
    }

    #[test]
    fn auxiliary_training_keeps_centrals_and_reduces_loss() {
        let (mut net, train_set, eval) = setup(2);
        let before = centrals(&net);
        let log = finetune_auxiliary(&mut net, &train_set, &eval, &opts(20)).unwrap();
        assert_eq!(centrals(&net), before);
        assert!(log.final_eval_loss() < log.initial_eval_loss);
        assert_eq!(log.epochs.len(), 20);
    }

    #[test]
    fn momentum_and_adam_also_respect_the_freeze() {
        for optimizer in [
            Optimizer::Sgd { momentum: 0.9 },
            Optimizer::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 },
        ] {
            let (mut net, train_set, eval) = setup(3);
            let before = centrals(&net);
            let o = TrainOptions { learning_rate: 0.005, optimizer, ..opts(5) };
            let log = finetune_auxiliary(&mut net, &train_set, &eval, &o).unwrap();
            assert_eq!(centrals(&net), before);
            assert!(log.final_eval_loss() < log.initial_eval_loss, "{optimizer:?}");
        }
    }

    #[test]
    fn diverging_run_reports_non_finite_loss() {
        let (mut net, train_set, eval) = setup(4);
        let o = TrainOptions { learning_rate: 1e6, ..opts(30) };
        assert!(matches!(train(&mut net, &train_set, &eval, &o), Err(Error::NonFiniteLoss(_))));
    }

    #[test]
    fn training_is_deterministic() {
        let (mut a, train_set, eval) = setup(5);
        let mut b = a.clone();
        let la = train(&mut a, &train_set, &eval, &opts(3)).unwrap();
        let lb = train(&mut b, &train_set, &eval, &opts(3)).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
    }

    #[test]
    fn full_and_auxiliary_runs_differ_only_in_central_after_one_step() {
        let (net, train_set, eval) = setup(6);
        let one_step = TrainOptions { epochs: 1, batch_size: train_set.len(), ..opts(1) };
        let (report, full, aux) = full_vs_auxiliary_report(&net, &train_set, &eval, &one_step).unwrap();
        for ((lf, la), l0) in full.layers.iter().zip(&aux.layers).zip(&net.layers) {
            let c = l0.central_index();
            for k in 0..l0.factorization().n() {
                let (tf, ta) = (&lf.factorization().tensors()[k], &la.factorization().tensors()[k]);
                if k == c {
                    assert_eq!(ta, &l0.factorization().tensors()[k]);
                    assert_ne!(tf, ta);
                } else {
                    assert_eq!(tf, ta);
                }
            }
            assert_eq!(lf.bias(), la.bias());
        }
        let want: usize = net.layers.iter().map(|l| l.auxiliary_parameter_count() + l.bias().len()).sum();
        assert_eq!(report.auxiliary_trainable, want);
        assert_eq!(report.full_trainable, report.total_parameters);
        assert_eq!(report.full_loss, evaluate(&full, &eval).unwrap());
        assert_eq!(report.auxiliary_loss, evaluate(&aux, &eval).unwrap());
    }

    #[test]
    fn options_json_round_trip() {
        let o = TrainOptions { optimizer: Optimizer::Adam { beta1: 0.8, beta2: 0.99, epsilon: 1e-7 }, ..opts(2) };
        let s = serde_json::to_string(&o).unwrap();
        assert_eq!(serde_json::from_str::<TrainOptions>(&s).unwrap(), o);
        let plain: TrainOptions =
            serde_json::from_str(r#"{"epochs":1,"learning_rate":0.1,"batch_size":4,"seed":0}"#).unwrap();
        assert_eq!(plain.optimizer, Optimizer::Sgd { momentum: 0.0 });
    }
}
