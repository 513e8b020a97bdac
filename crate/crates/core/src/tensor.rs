//! Dense row-major N-way arrays and the handful of kernels the factorization
//! code needs: reshape, permute, matricization and pairwise contraction.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense tensor stored as a flat row-major buffer.
///
/// The last axis varies fastest. The shape is never empty and every extent
/// is at least one, so a scalar is represented with shape `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn checked_numel(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::ShapeMismatch("shape must be non-empty".into()));
    }
    if shape.contains(&0) {
        return Err(Error::ShapeMismatch(format!("zero extent in shape {shape:?}")));
    }
    Ok(shape.iter().product())
}

/// Row-major strides for `shape`.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let numel = checked_numel(&shape)?;
        if numel != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let numel = checked_numel(&shape)?;
        Ok(Self { shape, data: vec![T::zero(); numel] })
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Result<Self> {
        let numel = checked_numel(&shape)?;
        Ok(Self { shape, data: (0..numel).map(&mut f).collect() })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n.max(1), n.max(1)]).expect("non-zero extent");
        for k in 0..n {
            t.data[k * n + k] = T::one();
        }
        t
    }

    /// Square diagonal matrix.
    pub fn diag(values: &[T]) -> Self {
        let n = values.len().max(1);
        let mut t = Self::zeros(vec![n, n]).expect("non-zero extent");
        for (k, &v) in values.iter().enumerate() {
            t.data[k * n + k] = v;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut off = 0;
        for (&i, &n) in index.iter().zip(&self.shape) {
            assert!(i < n, "index {index:?} out of bounds for {:?}", self.shape);
            off = off * n + i;
        }
        off
    }

    /// Element at a multi-index. Panics when out of bounds.
    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn reshape(&self, new_shape: &[usize]) -> Result<Self> {
        self.clone().into_reshape(new_shape)
    }

    pub fn into_reshape(self, new_shape: &[usize]) -> Result<Self> {
        let numel = checked_numel(new_shape)?;
        if numel != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {new_shape:?}",
                self.shape
            )));
        }
        Ok(Self { shape: new_shape.to_vec(), data: self.data })
    }

    /// Axis permutation: `out.shape[p] == self.shape[perm[p]]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank {
            return Err(Error::InvalidPermutation(perm.to_vec(), rank));
        }
        for &p in perm {
            if p >= rank || seen[p] {
                return Err(Error::InvalidPermutation(perm.to_vec(), rank));
            }
            seen[p] = true;
        }
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }

        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_strides = strides(&self.shape);
        // stride in the source buffer for each output axis
        let gather: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();

        let mut out = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; rank];
        let mut src = 0usize;
        for _ in 0..self.data.len() {
            out.push(self.data[src]);
            // odometer increment over the output index
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                src += gather[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                src -= gather[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(Self { shape: new_shape, data: out })
    }

    /// Unfolds into a matrix whose rows run over the first `split` axes and
    /// whose columns run over the rest, both in row-major order.
    ///
    /// For the paired MPO layout `[i1, j1, i2, j2, ..]` a split of `2k` gives
    /// the unfolding `M[i1 j1 .. ik jk, i(k+1) j(k+1) .. in jn]`.
    pub fn matricize(&self, split: usize) -> Result<Self> {
        let rank = self.rank();
        if split == 0 || split >= rank {
            return Err(Error::SplitOutOfRange { split, rank });
        }
        let rows: usize = self.shape[..split].iter().product();
        let cols: usize = self.shape[split..].iter().product();
        self.reshape(&[rows, cols])
    }

    /// Matrix transpose. Requires rank 2.
    pub fn transpose(&self) -> Result<Self> {
        if !self.is_matrix() {
            return Err(Error::ShapeMismatch(format!("transpose needs a matrix, got {:?}", self.shape)));
        }
        self.permute(&[1, 0])
    }

    /// Generalized contraction over paired axes. The result's axes are the
    /// free axes of `self` followed by the free axes of `other`, each in
    /// their original order. A full contraction yields shape `[1]`.
    pub fn contract(&self, other: &Self, axes_a: &[usize], axes_b: &[usize]) -> Result<Self> {
        if axes_a.len() != axes_b.len() {
            return Err(Error::ShapeMismatch(format!(
                "contracting {} axes against {}",
                axes_a.len(),
                axes_b.len()
            )));
        }
        let check_axes = |axes: &[usize], rank: usize| -> Result<()> {
            let mut seen = vec![false; rank];
            for &a in axes {
                if a >= rank || seen[a] {
                    return Err(Error::ShapeMismatch(format!("bad contraction axes {axes:?} for rank {rank}")));
                }
                seen[a] = true;
            }
            Ok(())
        };
        check_axes(axes_a, self.rank())?;
        check_axes(axes_b, other.rank())?;
        for (&a, &b) in axes_a.iter().zip(axes_b) {
            if self.shape[a] != other.shape[b] {
                return Err(Error::ShapeMismatch(format!(
                    "extent {} on axis {a} does not match {} on axis {b}",
                    self.shape[a], other.shape[b]
                )));
            }
        }

        let free_a: Vec<usize> = (0..self.rank()).filter(|k| !axes_a.contains(k)).collect();
        let free_b: Vec<usize> = (0..other.rank()).filter(|k| !axes_b.contains(k)).collect();
        let k: usize = axes_a.iter().map(|&a| self.shape[a]).product();
        let m: usize = free_a.iter().map(|&a| self.shape[a]).product();
        let n: usize = free_b.iter().map(|&b| other.shape[b]).product();

        let perm_a: Vec<usize> = free_a.iter().chain(axes_a).copied().collect();
        let perm_b: Vec<usize> = axes_b.iter().chain(&free_b).copied().collect();
        let a = self.permute(&perm_a)?;
        let b = other.permute(&perm_b)?;

        let data = matmul_raw(a.data(), b.data(), m, k, n);
        let mut shape: Vec<usize> = free_a.iter().map(|&x| self.shape[x]).collect();
        shape.extend(free_b.iter().map(|&x| other.shape[x]));
        if shape.is_empty() {
            shape.push(1);
        }
        Self::new(shape, data)
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if !self.is_matrix() || !other.is_matrix() || self.shape[1] != other.shape[0] {
            return Err(Error::ShapeMismatch(format!(
                "matmul of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        Self::new(vec![m, n], matmul_raw(&self.data, &other.data, m, k, n))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn scale(&self, alpha: T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&x| x * alpha).collect() }
    }

    pub fn scale_in_place(&mut self, alpha: T) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!("{:?} - {:?}", self.shape, other.shape)));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Copy of the top-left `rows x cols` block of a matrix.
    pub fn crop(&self, rows: usize, cols: usize) -> Result<Self> {
        if !self.is_matrix() || rows > self.shape[0] || cols > self.shape[1] {
            return Err(Error::ShapeMismatch(format!("cannot crop {:?} to [{rows}, {cols}]", self.shape)));
        }
        let src_cols = self.shape[1];
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend_from_slice(&self.data[r * src_cols..r * src_cols + cols]);
        }
        Self::new(vec![rows, cols], data)
    }

    /// Zero-pads a matrix on the bottom and right to `rows x cols`.
    pub fn pad(&self, rows: usize, cols: usize) -> Result<Self> {
        if !self.is_matrix() || rows < self.shape[0] || cols < self.shape[1] {
            return Err(Error::ShapeMismatch(format!("cannot pad {:?} to [{rows}, {cols}]", self.shape)));
        }
        if rows == self.shape[0] && cols == self.shape[1] {
            return Ok(self.clone());
        }
        let src_cols = self.shape[1];
        let mut out = Self::zeros(vec![rows, cols])?;
        for r in 0..self.shape[0] {
            out.data[r * cols..r * cols + src_cols]
                .copy_from_slice(&self.data[r * src_cols..(r + 1) * src_cols]);
        }
        Ok(out)
    }

    /// Casts every element to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::lit(x.to_f64_lossy())).collect(),
        }
    }
}

/// Row-major `[m, k] x [k, n]` product.
pub(crate) fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}
