use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::network::{DenseNetwork, Head, Nonlinearity, TeacherStructure};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major inputs and targets. May be empty (unlike [`Tensor`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_dim: usize,
    target_dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(input_dim: usize, target_dim: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if input_dim == 0 || target_dim == 0 {
            return Err(Error::ShapeMismatch("dataset dimensions must be positive".into()));
        }
        if inputs.len() % input_dim != 0
            || targets.len() % target_dim != 0
            || inputs.len() / input_dim != targets.len() / target_dim
        {
            return Err(Error::ShapeMismatch(format!(
                "{} input values and {} target values do not form rows of {input_dim} and {target_dim}",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(Self { input_dim, target_dim, inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target_row(&self, i: usize) -> &[f64] {
        &self.targets[i * self.target_dim..(i + 1) * self.target_dim]
    }

    /// Rows `indices` as `([b, input_dim], [b, target_dim])` tensors.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let x: Vec<f64> = indices.iter().flat_map(|&i| self.input_row(i).iter().copied()).collect();
        let t: Vec<f64> = indices.iter().flat_map(|&i| self.target_row(i).iter().copied()).collect();
        Ok((
            Tensor::new(vec![indices.len(), self.input_dim], x)?,
            Tensor::new(vec![indices.len(), self.target_dim], t)?,
        ))
    }

    /// A new dataset with the rows reordered (or subset) by `indices`.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            input_dim: self.input_dim,
            target_dim: self.target_dim,
            inputs: indices.iter().flat_map(|&i| self.input_row(i).iter().copied()).collect(),
            targets: indices.iter().flat_map(|&i| self.target_row(i).iter().copied()).collect(),
        }
    }
}

/// Synthetic task whose labels come from a hidden random dense network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherTask {
    /// Teacher layer widths; two entries give a linear teacher.
    pub dims: Vec<usize>,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    #[serde(default)]
    pub head: Head,
    pub train_size: usize,
    pub eval_size: usize,
    /// Standard deviation of the label noise (regression only).
    #[serde(default = "default_noise")]
    pub noise: f64,
    pub seed: u64,
    /// Low-entanglement teacher weights instead of plain random ones.
    #[serde(default)]
    pub structure: Option<TeacherStructure>,
}

fn default_noise() -> f64 {
    0.01
}

/// Train and held-out splits drawn from the teacher of `task`, plus the
/// teacher itself. Inputs are standard normal. Regression labels are the
/// teacher output plus Gaussian noise; classification labels are one-hot
/// argmax of the teacher output.
pub fn teacher_data(task: &TeacherTask) -> Result<(Dataset, Dataset, DenseNetwork)> {
    if task.dims.len() < 2 {
        return Err(Error::InvalidArgument("teacher needs at least an input and output width".into()));
    }
    let teacher = match &task.structure {
        None => DenseNetwork::random(&task.dims, task.nonlinearity, task.head, task.seed)?,
        Some(s) => DenseNetwork::low_entanglement(&task.dims, task.nonlinearity, task.head, task.seed, s)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed ^ 0x5eed_da7a);
    let mut draw = |rows: usize| -> Result<Dataset> {
        let i = task.dims[0];
        let j = *task.dims.last().expect("non-empty");
        let inputs: Vec<f64> = (0..rows * i).map(|_| rng.sample(StandardNormal)).collect();
        if rows == 0 {
            return Dataset::new(i, j, inputs, Vec::new());
        }
        let x = Tensor::new(vec![rows, i], inputs.clone())?;
        let y = teacher.forward(&x)?;
        let targets = match task.head {
            Head::Regression => {
                y.data().iter().map(|&v| v + task.noise * rng.sample::<f64, _>(StandardNormal)).collect()
            }
            Head::Softmax => y
                .data()
                .chunks(j)
                .flat_map(|row| {
                    let arg = row
                        .iter()
                        .enumerate()
                        .fold(0, |best, (k, &v)| if v > row[best] { k } else { best });
                    (0..j).map(move |k| if k == arg { 1.0 } else { 0.0 })
                })
                .collect(),
        };
        Dataset::new(i, j, inputs, targets)
    };
    let train = draw(task.train_size)?;
    let eval = draw(task.eval_size)?;
    Ok((train, eval, teacher))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(head: Head) -> TeacherTask {
        TeacherTask {
            dims: vec![8, 6, 3],
            nonlinearity: Nonlinearity::Tanh,
            head,
            train_size: 40,
            eval_size: 10,
            noise: 0.01,
            seed: 3,
            structure: None,
        }
    }

    #[test]
    fn dataset_rejects_ragged_rows() {
        assert!(Dataset::new(3, 1, vec![0.0; 7], vec![0.0; 2]).is_err());
        assert!(Dataset::new(3, 1, vec![0.0; 6], vec![0.0; 3]).is_err());
        let d = Dataset::new(3, 1, vec![0.0; 6], vec![1.0, 2.0]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.select(&[1, 1, 0]).target_row(1), &[2.0]);
    }

    #[test]
    fn teacher_data_is_deterministic_and_sized() {
        let (a, b, _) = teacher_data(&task(Head::Regression)).unwrap();
        let (c, d, _) = teacher_data(&task(Head::Regression)).unwrap();
        assert_eq!(a, c);
        assert_eq!(b, d);
        assert_eq!((a.len(), b.len()), (40, 10));
        assert_eq!((a.input_dim(), a.target_dim()), (8, 3));
    }

    #[test]
    fn regression_noise_has_requested_scale() {
        let mut t = task(Head::Regression);
        t.train_size = 4000;
        let (train, _, teacher) = teacher_data(&t).unwrap();
        let idx: Vec<usize> = (0..train.len()).collect();
        let (x, y) = train.batch(&idx).unwrap();
        let clean = teacher.forward(&x).unwrap();
        let resid = y.sub(&clean).unwrap();
        let sd = (resid.data().iter().map(|r| r * r).sum::<f64>() / resid.numel() as f64).sqrt();
        assert!((sd - 0.01).abs() < 0.001, "{sd}");
    }

    #[test]
    fn classification_targets_are_one_hot() {
        let (train, _, _) = teacher_data(&task(Head::Softmax)).unwrap();
        for i in 0..train.len() {
            let row = train.target_row(i);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }
}
