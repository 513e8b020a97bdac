use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::network::{evaluate, ToyNetwork};
use super::optim::{finetune_auxiliary, Optimizer, TrainOptions, TrainingLog};
use crate::error::{Error, Result};
use crate::mpo::BondProfile;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMode {
    /// Compare every step against the loss measured before squeezing.
    #[default]
    Fixed,
    /// Compare against the loss of the last accepted step.
    Rolling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezeConfig {
    /// Largest tolerated `|p - p~|`.
    pub delta: f64,
    pub max_iter: usize,
    pub finetune_epochs_per_step: usize,
    #[serde(default)]
    pub baseline_mode: BaselineMode,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl SqueezeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::InvalidArgument(format!("delta must be finite and non-negative, got {}", self.delta)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        self.train_options(0).validate()
    }

    /// Options for the fine-tuning run after step `step`.
    pub fn train_options(&self, step: usize) -> TrainOptions {
        TrainOptions {
            epochs: self.finetune_epochs_per_step,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed: self.seed.wrapping_add(step as u64),
            optimizer: self.optimizer,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum BondSide {
    #[default]
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationChoice {
    pub layer: usize,
    /// Bond index in the layer's chain (`1..n`).
    pub bond: usize,
    pub side: BondSide,
    /// Singular value that the reduction discards.
    pub epsilon: f64,
    pub new_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezeStep {
    pub layer: usize,
    pub bond: usize,
    pub epsilon: f64,
    /// Error bound of this step's truncation against the matrix it was
    /// applied to.
    pub bound: f64,
    /// Held-out loss after fine-tuning.
    pub loss: f64,
    /// Network tensor elements after the step.
    pub params: usize,
    pub rho: f64,
    #[serde(skip)]
    pub new_dim: usize,
    #[serde(skip)]
    pub side: BondSide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezeTrace {
    pub steps: Vec<SqueezeStep>,
    pub baseline_loss: f64,
    pub config: SqueezeConfig,
}

impl SqueezeTrace {
    /// Steps applied to the returned network (the breaking step, if any,
    /// is recorded but not applied).
    pub fn accepted_steps(&self) -> usize {
        let mut baseline = self.baseline_loss;
        for (k, s) in self.steps.iter().enumerate() {
            if (baseline - s.loss).abs() > self.config.delta {
                return k;
            }
            if self.config.baseline_mode == BaselineMode::Rolling {
                baseline = s.loss;
            }
        }
        self.steps.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn candidate(bonds: &BondProfile, central: usize) -> Option<(usize, BondSide)> {
    let n = bonds.dims.len() - 1;
    let eligible = |b: usize| b >= 1 && b < n && bonds.dims[b] > 1;
    let (left, right) = (central, central + 1);
    match (eligible(left), eligible(right)) {
        (true, true) if bonds.dims[right] > bonds.dims[left] => Some((right, BondSide::Right)),
        (true, _) => Some((left, BondSide::Left)),
        (false, true) => Some((right, BondSide::Right)),
        (false, false) => None,
    }
}

/// Picks the layer whose central-adjacent bond reduction discards the
/// smallest singular value. Per layer the larger flanking bond is the
/// candidate (left on ties); across layers ties go to the lowest index.
/// Stale spectra are recomputed first.
pub fn select_truncation(net: &mut ToyNetwork) -> Result<TruncationChoice> {
    let mut best: Option<TruncationChoice> = None;
    for (l, layer) in net.layers.iter_mut().enumerate() {
        let f = layer.factorization_mut();
        let bonds = f.bonds().clone();
        let Some((bond, side)) = candidate(&bonds, f.central_index()) else {
            continue;
        };
        let d = bonds.dims[bond];
        let spectrum = &f.refresh_spectra()?[bond - 1];
        let epsilon = spectrum.get(d - 1).copied().unwrap_or(0.0);
        if best.as_ref().is_none_or(|b| epsilon < b.epsilon) {
            best = Some(TruncationChoice { layer: l, bond, side, epsilon, new_dim: d - 1 });
        }
    }
    best.ok_or(Error::NothingToTruncate)
}

/// Greedy squeezing: truncate one bond, fine-tune auxiliary tensors,
/// evaluate, and stop once the loss gap exceeds `cfg.delta` or
/// `cfg.max_iter` steps ran. Returns the last network within the gap and
/// the trace of every attempted step.
pub fn dimension_squeeze(
    net: &ToyNetwork,
    train: &Dataset,
    eval: &Dataset,
    cfg: &SqueezeConfig,
) -> Result<(ToyNetwork, SqueezeTrace)> {
    cfg.validate()?;
    let baseline_loss = evaluate(net, eval)?;
    let mut trace = SqueezeTrace { steps: Vec::new(), baseline_loss, config: cfg.clone() };
    let mut baseline = baseline_loss;
    let mut accepted = net.clone();
    accepted.set_freeze_central(true);
    let mut current = accepted.clone();

    for step in 0..cfg.max_iter {
        let choice = match select_truncation(&mut current) {
            Ok(c) => c,
            Err(Error::NothingToTruncate) => break,
            Err(e) => return Err(e),
        };
        let layer = &mut current.layers[choice.layer];
        let mut target = layer.factorization().bonds().clone();
        target.dims[choice.bond] = choice.new_dim;
        let report = layer.retruncate(&target)?;
        finetune_auxiliary(&mut current, train, eval, &cfg.train_options(step))?;
        let loss = evaluate(&current, eval)?;
        trace.steps.push(SqueezeStep {
            layer: choice.layer,
            bond: choice.bond,
            epsilon: choice.epsilon,
            bound: report.bound,
            loss,
            params: current.parameter_count(),
            rho: current.compression_ratio(),
            new_dim: choice.new_dim,
            side: choice.side,
        });
        if (baseline - loss).abs() > cfg.delta {
            break;
        }
        if cfg.baseline_mode == BaselineMode::Rolling {
            baseline = loss;
        }
        accepted = current.clone();
    }
    Ok((accepted, trace))
}

/// Truncates every layer straight to `profiles` and fine-tunes auxiliary
/// tensors once with `opts`.
pub fn direct_truncation(
    net: &ToyNetwork,
    profiles: &[BondProfile],
    train: &Dataset,
    eval: &Dataset,
    opts: &TrainOptions,
) -> Result<(ToyNetwork, TrainingLog)> {
    if profiles.len() != net.layers.len() {
        return Err(Error::InvalidArgument(format!("{} profiles for {} layers", profiles.len(), net.layers.len())));
    }
    let mut out = net.clone();
    for (layer, p) in out.layers.iter_mut().zip(profiles) {
        layer.retruncate(p)?;
    }
    let log = finetune_auxiliary(&mut out, train, eval, opts)?;
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::MpoLinear;
    use crate::mpo::{full_bonds, plan_shapes};
    use crate::tensor::Tensor;
    use crate::trainer::data::{teacher_data, TeacherTask};
    use crate::trainer::network::{auto_plans, build_toy_network, DenseNetwork, Head, Nonlinearity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn task(seed: u64) -> (Dataset, Dataset) {
        let t = TeacherTask {
            dims: vec![16, 16, 4],
            nonlinearity: Nonlinearity::Tanh,
            head: Head::Regression,
            train_size: 96,
            eval_size: 64,
            noise: 0.01,
            seed,
            structure: None,
        };
        let (a, b, _) = teacher_data(&t).unwrap();
        (a, b)
    }

    fn net(seed: u64) -> ToyNetwork {
        let dims = [16, 16, 4];
        build_toy_network(&dims, &auto_plans(&dims, 3).unwrap(), Nonlinearity::Tanh, Head::Regression, seed).unwrap()
    }

    fn cfg(delta: f64, max_iter: usize) -> SqueezeConfig {
        SqueezeConfig {
            delta,
            max_iter,
            finetune_epochs_per_step: 1,
            baseline_mode: BaselineMode::Fixed,
            learning_rate: 0.02,
            batch_size: 16,
            seed: 3,
            optimizer: Optimizer::default(),
        }
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(vec![rows, cols], |_| rng.gen_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn candidate_prefers_larger_then_left() {
        assert_eq!(candidate(&BondProfile::new(vec![1, 4, 16, 4, 1]), 2), Some((2, BondSide::Left)));
        assert_eq!(candidate(&BondProfile::new(vec![1, 16, 16, 4, 1]), 2), Some((2, BondSide::Left)));
        assert_eq!(candidate(&BondProfile::new(vec![1, 4, 16, 1]), 1), Some((2, BondSide::Right)));
        assert_eq!(candidate(&BondProfile::new(vec![1, 4, 1]), 1), Some((1, BondSide::Left)));
        assert_eq!(candidate(&BondProfile::new(vec![1, 1, 1]), 1), None);
    }

    #[test]
    fn near_deficient_layer_is_selected() {
        let plan = plan_shapes(16, 16, 3, None, None).unwrap();
        // first layer: a generic matrix; second: rank one in the paired
        // layout plus a tiny perturbation
        let a = MpoLinear::from_dense(&random(16, 16, 1), &[0.0; 16], &plan, &full_bonds(&plan)).unwrap();
        let k = random(4, 4, 2);
        let mut w = Tensor::zeros(vec![16, 16]).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                w.set(&[r, c], k.at(&[r / 4, c / 4]) * k.at(&[r % 4, c % 4]) + 1e-9 * ((r * 16 + c) as f64).sin());
            }
        }
        let b = MpoLinear::from_dense(&w, &[0.0; 16], &plan, &full_bonds(&plan)).unwrap();
        let mut n = ToyNetwork::new(vec![a, b], Nonlinearity::Tanh, Head::Regression).unwrap();
        let choice = select_truncation(&mut n).unwrap();
        assert_eq!(choice.layer, 1);
        assert!(choice.epsilon < 1e-7);
    }

    #[test]
    fn identical_layers_tie_to_lowest_index() {
        let plan = plan_shapes(16, 16, 3, None, None).unwrap();
        let l = MpoLinear::from_dense(&random(16, 16, 4), &[0.0; 16], &plan, &full_bonds(&plan)).unwrap();
        let mut n = ToyNetwork::new(vec![l.clone(), l.clone(), l], Nonlinearity::Relu, Head::Regression).unwrap();
        assert_eq!(select_truncation(&mut n).unwrap().layer, 0);
    }

    #[test]
    fn nothing_to_truncate_is_an_error() {
        let plan = plan_shapes(4, 4, 2, None, None).unwrap();
        let one = BondProfile::new(vec![1, 1, 1]);
        let l = MpoLinear::from_dense(&random(4, 4, 5), &[0.0; 4], &plan, &one).unwrap();
        let mut n = ToyNetwork::new(vec![l.clone(), l], Nonlinearity::Tanh, Head::Regression).unwrap();
        assert!(matches!(select_truncation(&mut n), Err(Error::NothingToTruncate)));
    }

    #[test]
    fn selection_agrees_with_brute_force() {
        let mut agree = 0;
        let trials = 20;
        for t in 0..trials {
            let dims = [16, 16, 16];
            let dense = DenseNetwork::random(&dims, Nonlinearity::Tanh, Head::Regression, 100 + t).unwrap();
            let mut n = ToyNetwork::from_dense(&dense, &auto_plans(&dims, 3).unwrap(), None).unwrap();
            let choice = select_truncation(&mut n).unwrap();
            let mut errors = Vec::new();
            for layer in &n.layers {
                let (bond, _) = candidate(layer.factorization().bonds(), layer.central_index()).unwrap();
                let mut target = layer.factorization().bonds().clone();
                target.dims[bond] -= 1;
                let before = layer.factorization().reconstruct().unwrap();
                let (f, _) = layer.factorization().truncate(&target, None).unwrap();
                errors.push(f.reconstruct().unwrap().sub(&before).unwrap().frobenius_norm());
            }
            let oracle = (0..errors.len()).fold(0, |b, k| if errors[k] < errors[b] { k } else { b });
            agree += usize::from(oracle == choice.layer);
        }
        assert!(agree * 10 >= trials as usize * 9, "{agree}/{trials}");
    }

    #[test]
    fn huge_delta_runs_to_max_iter() {
        let (train, eval) = task(1);
        let (out, trace) = dimension_squeeze(&net(2), &train, &eval, &cfg(1e9, 6)).unwrap();
        assert_eq!(trace.steps.len(), 6);
        assert_eq!(trace.accepted_steps(), 6);
        assert_eq!(out.parameter_count(), trace.steps[5].params);
        for w in trace.steps.windows(2) {
            assert!(w[1].params < w[0].params);
            assert!(w[1].rho < w[0].rho);
        }
        let dense: usize = out.layers.iter().map(|l| l.plan().padded_rows * l.plan().padded_cols).sum();
        assert_eq!(trace.steps[5].rho, trace.steps[5].params as f64 / dense as f64);
    }

    #[test]
    fn zero_delta_returns_pre_step_network() {
        let (train, eval) = task(2);
        let start = net(3);
        let (out, trace) = dimension_squeeze(&start, &train, &eval, &cfg(0.0, 5)).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.accepted_steps(), 0);
        assert_eq!(out.bond_profiles(), start.bond_profiles());
        assert_eq!(out.parameter_count(), start.parameter_count());
    }

    #[test]
    fn returned_network_is_within_delta() {
        let (train, eval) = task(3);
        let c = SqueezeConfig { delta: 2e-3, ..cfg(0.0, 40) };
        let (out, trace) = dimension_squeeze(&net(4), &train, &eval, &c).unwrap();
        assert!((evaluate(&out, &eval).unwrap() - trace.baseline_loss).abs() <= c.delta);
        assert!(trace.steps.len() <= 40);
    }

    #[test]
    fn rolling_baseline_tracks_last_accepted() {
        let (train, eval) = task(4);
        let c = SqueezeConfig { delta: 1e-3, baseline_mode: BaselineMode::Rolling, ..cfg(0.0, 10) };
        let (out, trace) = dimension_squeeze(&net(5), &train, &eval, &c).unwrap();
        let k = trace.accepted_steps();
        let mut base = trace.baseline_loss;
        for s in &trace.steps[..k] {
            assert!((s.loss - base).abs() <= c.delta);
            base = s.loss;
        }
        if k > 0 {
            assert_eq!(out.parameter_count(), trace.steps[k - 1].params);
        }
    }

    #[test]
    fn squeeze_is_deterministic_and_keeps_centrals_between_truncations() {
        let (train, eval) = task(5);
        let (a, ta) = dimension_squeeze(&net(6), &train, &eval, &cfg(1e9, 4)).unwrap();
        let (b, tb) = dimension_squeeze(&net(6), &train, &eval, &cfg(1e9, 4)).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a, b);

        let mut n = net(6);
        n.set_freeze_central(true);
        let mut target = n.layers[0].factorization().bonds().clone();
        target.dims[1] -= 1;
        n.layers[0].retruncate(&target).unwrap();
        let before: Vec<_> = n.layers.iter().map(|l| l.factorization().central().clone()).collect();
        finetune_auxiliary(&mut n, &train, &eval, &cfg(0.0, 1).train_options(0)).unwrap();
        let after: Vec<_> = n.layers.iter().map(|l| l.factorization().central().clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn trace_json_has_exact_schema() {
        let (train, eval) = task(6);
        let (_, trace) = dimension_squeeze(&net(7), &train, &eval, &cfg(1e9, 2)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&trace.to_json().unwrap()).unwrap();
        let mut top: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        top.sort_unstable();
        assert_eq!(top, ["baseline_loss", "config", "steps"]);
        let mut step: Vec<&str> = v["steps"][0].as_object().unwrap().keys().map(String::as_str).collect();
        step.sort_unstable();
        assert_eq!(step, ["bond", "bound", "epsilon", "layer", "loss", "params", "rho"]);
        assert!(v["steps"][0]["layer"].is_u64() && v["steps"][0]["rho"].is_f64());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (train, eval) = task(7);
        for c in [cfg(-1.0, 3), cfg(f64::NAN, 3), cfg(0.1, 0), SqueezeConfig { batch_size: 0, ..cfg(0.1, 3) }] {
            assert!(dimension_squeeze(&net(1), &train, &eval, &c).is_err());
        }
    }

    #[test]
    fn direct_truncation_hits_requested_profile() {
        let (train, eval) = task(8);
        let start = net(9);
        let mut profiles = start.bond_profiles();
        profiles[0].dims[1] = 2;
        let (out, log) = direct_truncation(&start, &profiles, &train, &eval, &cfg(0.0, 1).train_options(0)).unwrap();
        // the right bond is capped by what the reduced left bond can feed
        assert_eq!(out.bond_profiles()[0], profiles[0].realizable(start.layers[0].plan()));
        assert_eq!(out.bond_profiles()[1], profiles[1]);
        assert_eq!(log.epochs.len(), 1);
    }
}
