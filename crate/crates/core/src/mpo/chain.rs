use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::svd::svd_thin;
use crate::tensor::Tensor;

use super::metrics::{compression_ratio, error_bound, local_truncation_error};
use super::plan::{full_bonds, BondProfile, ShapePlan};

/// A matrix in MPO form: `n` local tensors of shape `[d_{k-1}, i_k, j_k, d_k]`.
///
/// `cut_spectra[k]` holds the singular values of the unfolding between
/// tensors `k` and `k + 1` of the represented matrix. The cache is marked
/// stale whenever tensors are mutated and can be rebuilt with
/// [`MpoFactorization::refresh_spectra`]. Equality ignores the cache.
#[derive(Debug, Clone)]
pub struct MpoFactorization<T: Scalar = f64> {
    plan: ShapePlan,
    bonds: BondProfile,
    tensors: Vec<Tensor<T>>,
    cut_spectra: Vec<Vec<T>>,
    spectra_fresh: bool,
}

impl<T: Scalar> PartialEq for MpoFactorization<T> {
    fn eq(&self, other: &Self) -> bool {
        self.plan == other.plan && self.bonds == other.bonds && self.tensors == other.tensors
    }
}

/// Outcome of a truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationReport<T: Scalar = f64> {
    /// Per-cut discarded energy `eps_k`, measured on the unfoldings of the
    /// matrix being truncated.
    pub local_errors: Vec<T>,
    /// `sqrt(sum eps_k^2)`.
    pub bound: T,
    /// `||reference - result||_F` when a reference matrix was supplied.
    pub achieved_error: Option<T>,
    /// Compression ratio of the truncated chain.
    pub ratio: f64,
    pub params_before: usize,
    pub params_after: usize,
    /// Bonds actually realized (the target, clamped where a sweep cannot
    /// carry more rank).
    pub bonds: BondProfile,
}

/// Reorders a padded `[I', J']` matrix into the paired layout
/// `[i1, j1, i2, j2, .., in, jn]`.
pub(crate) fn to_paired<T: Scalar>(padded: &Tensor<T>, plan: &ShapePlan) -> Result<Tensor<T>> {
    let n = plan.n();
    let mut shape = plan.row_factors.clone();
    shape.extend(&plan.col_factors);
    let split = padded.reshape(&shape)?;
    let perm: Vec<usize> = (0..n).flat_map(|k| [k, n + k]).collect();
    split.permute(&perm)
}

fn from_paired<T: Scalar>(paired: Tensor<T>, plan: &ShapePlan) -> Result<Tensor<T>> {
    let n = plan.n();
    let shape: Vec<usize> = (0..n).flat_map(|k| [plan.row_factors[k], plan.col_factors[k]]).collect();
    let t = paired.into_reshape(&shape)?;
    let perm: Vec<usize> = (0..n).map(|k| 2 * k).chain((0..n).map(|k| 2 * k + 1)).collect();
    t.permute(&perm)?.into_reshape(&[plan.padded_rows, plan.padded_cols])
}

struct Sweep<T: Scalar> {
    tensors: Vec<Tensor<T>>,
    bonds: Vec<usize>,
    spectra: Vec<Vec<T>>,
}

/// Sequential reshape + SVD over the paired tensor. `caps[k]` limits bond
/// `k + 1`; `None` keeps every singular triplet.
fn sweep<T: Scalar>(paired: Tensor<T>, plan: &ShapePlan, caps: Option<&[usize]>) -> Result<Sweep<T>> {
    let n = plan.n();
    let sites = plan.site_dims();
    let mut tensors = Vec::with_capacity(n);
    let mut spectra = Vec::with_capacity(n - 1);
    let mut bonds = vec![1usize; n + 1];

    let mut rest = paired.into_data();
    let mut d_prev = 1usize;
    for k in 0..n - 1 {
        let rows = d_prev * sites[k];
        let cols = rest.len() / rows;
        let m = Tensor::new(vec![rows, cols], rest)?;
        let svd = svd_thin(&m)?;
        let avail = svd.sigma.len();
        let keep = caps.map_or(avail, |c| c[k].min(avail)).max(1);

        let mut u = Vec::with_capacity(rows * keep);
        for r in 0..rows {
            u.extend_from_slice(&svd.u.data()[r * avail..r * avail + keep]);
        }
        tensors.push(Tensor::new(vec![d_prev, plan.row_factors[k], plan.col_factors[k], keep], u)?);

        let mut next = Vec::with_capacity(keep * cols);
        for r in 0..keep {
            let s = svd.sigma[r];
            next.extend(svd.vt.data()[r * cols..(r + 1) * cols].iter().map(|&v| v * s));
        }
        spectra.push(svd.sigma);
        rest = next;
        d_prev = keep;
        bonds[k + 1] = keep;
    }
    tensors.push(Tensor::new(vec![d_prev, plan.row_factors[n - 1], plan.col_factors[n - 1], 1], rest)?);
    Ok(Sweep { tensors, bonds, spectra })
}

impl<T: Scalar> MpoFactorization<T> {
    /// Assembles a factorization from explicit tensors. Shapes are checked
    /// against the plan; the spectra cache starts stale.
    pub fn from_parts(plan: ShapePlan, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let n = plan.n();
        if tensors.len() != n {
            return Err(Error::ShapeMismatch(format!("plan has {n} sites but {} tensors were given", tensors.len())));
        }
        let mut dims = Vec::with_capacity(n + 1);
        dims.push(1);
        for (k, t) in tensors.iter().enumerate() {
            let s = t.shape();
            if s.len() != 4 || s[0] != dims[k] || s[1] != plan.row_factors[k] || s[2] != plan.col_factors[k] {
                return Err(Error::ShapeMismatch(format!("tensor {k} has shape {s:?}, inconsistent with the plan")));
            }
            dims.push(s[3]);
        }
        if dims[n] != 1 {
            return Err(Error::ShapeMismatch(format!("last bond must be 1, got {}", dims[n])));
        }
        let bonds = BondProfile::new(dims);
        bonds.validate(&plan)?;
        Ok(Self { plan, bonds, tensors, cut_spectra: Vec::new(), spectra_fresh: false })
    }

    pub fn plan(&self) -> &ShapePlan {
        &self.plan
    }

    pub fn bonds(&self) -> &BondProfile {
        &self.bonds
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn n(&self) -> usize {
        self.tensors.len()
    }

    pub fn central_index(&self) -> usize {
        self.plan.central_index()
    }

    pub fn central(&self) -> &Tensor<T> {
        &self.tensors[self.central_index()]
    }

    /// Mutable access to one tensor. Invalidates the spectra cache.
    pub fn tensor_mut(&mut self, k: usize) -> &mut Tensor<T> {
        self.spectra_fresh = false;
        &mut self.tensors[k]
    }

    pub fn spectra_fresh(&self) -> bool {
        self.spectra_fresh
    }

    /// Cached cut spectra, `None` when stale.
    pub fn cut_spectra(&self) -> Option<&[Vec<T>]> {
        self.spectra_fresh.then_some(self.cut_spectra.as_slice())
    }

    /// Recomputes the cut spectra from the represented matrix if stale.
    pub fn refresh_spectra(&mut self) -> Result<&[Vec<T>]> {
        if !self.spectra_fresh {
            let paired = to_paired(&self.reconstruct_padded()?, &self.plan)?;
            self.cut_spectra = sweep(paired, &self.plan, None)?.spectra;
            self.spectra_fresh = true;
        }
        Ok(&self.cut_spectra)
    }

    /// Total number of stored tensor elements.
    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn compression_ratio(&self) -> f64 {
        compression_ratio(&self.plan, &self.bonds)
    }

    /// Contracts the chain into the padded `[I', J']` matrix.
    pub fn reconstruct_padded(&self) -> Result<Tensor<T>> {
        let mut acc = self.tensors[0].reshape(&[self.tensors[0].numel() / self.bonds.dims[1], self.bonds.dims[1]])?;
        for k in 1..self.n() {
            let t = &self.tensors[k];
            let d_in = self.bonds.dims[k];
            let rhs = t.reshape(&[d_in, t.numel() / d_in])?;
            let prod = acc.matmul(&rhs)?;
            let d_out = self.bonds.dims[k + 1];
            let len = prod.numel();
            acc = prod.into_reshape(&[len / d_out, d_out])?;
        }
        from_paired(acc, &self.plan)
    }

    /// The represented `[I, J]` matrix with padding removed.
    pub fn reconstruct(&self) -> Result<Tensor<T>> {
        self.reconstruct_padded()?.crop(self.plan.rows, self.plan.cols)
    }

    /// Largest `|Q^T Q - I|` entry of the left unfolding
    /// `[d_{k-1} i_k j_k, d_k]` of tensor `k`.
    pub fn left_orthonormality_defect(&self, k: usize) -> T {
        let t = &self.tensors[k];
        let d = t.shape()[3];
        let q = t.reshape(&[t.numel() / d, d]).expect("consistent shape");
        let g = q.transpose().expect("matrix").matmul(&q).expect("square");
        let mut worst = T::zero();
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { T::one() } else { T::zero() };
                worst = worst.max((g.at(&[i, j]) - want).abs());
            }
        }
        worst
    }

    /// Rescales the tensors to a common Frobenius norm `(prod ||T_k||)^(1/n)`.
    /// The represented matrix is unchanged up to rounding: the last factor
    /// absorbs the reciprocal of all other scale factors. Chains containing
    /// an all-zero tensor are left untouched.
    pub fn balance_norms(&mut self) {
        let norms: Vec<T> = self.tensors.iter().map(Tensor::frobenius_norm).collect();
        if norms.iter().any(|&x| x == T::zero() || !x.is_finite()) {
            return;
        }
        let n = T::lit(self.n() as f64);
        let log_mean = norms.iter().map(|x| x.ln()).sum::<T>() / n;
        let target = log_mean.exp();
        let last = self.n() - 1;
        let mut product = T::one();
        for (k, &nk) in norms.iter().enumerate().take(last) {
            let s = target / nk;
            product *= s;
            self.tensors[k].scale_in_place(s);
        }
        self.tensors[last].scale_in_place(T::one() / product);
        // scaling preserves the matrix, so cached spectra stay valid
    }

    /// Re-runs the decomposition with rank caps against the currently
    /// represented matrix, restoring left-orthonormality.
    pub fn truncate(
        &self,
        target: &BondProfile,
        reference: Option<&Tensor<T>>,
    ) -> Result<(MpoFactorization<T>, TruncationReport<T>)> {
        if target.dims.len() != self.bonds.dims.len() {
            return Err(Error::NotDominated(format!("target {:?} vs bonds {:?}", target.dims, self.bonds.dims)));
        }
        if !target.dominated_by(&self.bonds) {
            return Err(Error::NotDominated(format!("target {:?} exceeds bonds {:?}", target.dims, self.bonds.dims)));
        }
        let n = self.n();
        if target.dims[0] != 1 || target.dims[n] != 1 || target.dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid target bonds {:?}", target.dims)));
        }
        if let Some(r) = reference {
            if r.shape() != [self.plan.rows, self.plan.cols] {
                return Err(Error::ShapeMismatch(format!(
                    "reference is {:?}, expected [{}, {}]",
                    r.shape(),
                    self.plan.rows,
                    self.plan.cols
                )));
            }
        }

        let padded = self.reconstruct_padded()?;
        let paired = to_paired(&padded, &self.plan)?;
        let spectra = match self.cut_spectra() {
            Some(s) => s.to_vec(),
            None => sweep(paired.clone(), &self.plan, None)?.spectra,
        };

        let caps = &target.dims[1..n];
        let capped = sweep(paired, &self.plan, Some(caps))?;
        let bonds = BondProfile::new(capped.bonds);
        let local_errors: Vec<T> = spectra
            .iter()
            .zip(&bonds.dims[1..n])
            .map(|(s, &kept)| local_truncation_error(s, kept))
            .collect();
        let truncated = MpoFactorization {
            plan: self.plan.clone(),
            bonds,
            tensors: capped.tensors,
            cut_spectra: Vec::new(),
            spectra_fresh: false,
        };
        let achieved_error = match reference {
            Some(r) => Some(r.sub(&truncated.reconstruct()?)?.frobenius_norm()),
            None => None,
        };
        let report = TruncationReport {
            bound: error_bound(&local_errors),
            local_errors,
            achieved_error,
            ratio: truncated.compression_ratio(),
            params_before: self.parameter_count(),
            params_after: truncated.parameter_count(),
            bonds: truncated.bonds.clone(),
        };
        Ok((truncated, report))
    }
}

/// Factorizes `m` (shape `[I, J]`) with full bonds by sequential SVD.
///
/// The returned chain is left-canonical: tensors `0..n-1` have orthonormal
/// left unfoldings and the last tensor carries the norm of the matrix.
pub fn decompose<T: Scalar>(m: &Tensor<T>, plan: &ShapePlan) -> Result<MpoFactorization<T>> {
    if m.shape() != [plan.rows, plan.cols] {
        return Err(Error::ShapeMismatch(format!(
            "matrix is {:?} but the plan expects [{}, {}]",
            m.shape(),
            plan.rows,
            plan.cols
        )));
    }
    let padded = m.pad(plan.padded_rows, plan.padded_cols)?;
    let paired = to_paired(&padded, plan)?;
    let s = sweep(paired, plan, None)?;
    debug_assert_eq!(s.bonds, full_bonds(plan).dims);
    Ok(MpoFactorization {
        plan: plan.clone(),
        bonds: BondProfile::new(s.bonds),
        tensors: s.tensors,
        cut_spectra: s.spectra,
        spectra_fresh: true,
    })
}

/// Singular values of the `k`-th unfolding (0-based cut) of `m` under `plan`,
/// computed directly on the unfolded matrix.
pub fn unfolding_spectrum<T: Scalar>(m: &Tensor<T>, plan: &ShapePlan, cut: usize) -> Result<Vec<T>> {
    let padded = m.pad(plan.padded_rows, plan.padded_cols)?;
    let paired = to_paired(&padded, plan)?;
    let unfolded = paired.matricize(2 * (cut + 1))?;
    Ok(svd_thin(&unfolded)?.sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpo::plan::plan_shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(vec![rows, cols], |_| rng.gen_range(-1.0..1.0)).unwrap()
    }

    fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
    }

    #[test]
    fn identity_round_trip() {
        let plan = plan_shapes(4, 4, 2, None, None).unwrap();
        let eye: Tensor = Tensor::identity(4);
        let f = decompose(&eye, &plan).unwrap();
        assert!(f.reconstruct().unwrap().sub(&eye).unwrap().frobenius_norm() <= 1e-12);
        // the identity is a product state in the paired layout
        let s = &f.cut_spectra().unwrap()[0];
        assert!((s[0] - 2.0).abs() < 1e-12);
        assert!(s[1..].iter().all(|&x| x < 1e-12));
    }

    #[test]
    fn random_square_five_sites() {
        let m = random(64, 64, 1);
        let plan = plan_shapes(64, 64, 5, None, None).unwrap();
        let f = decompose(&m, &plan).unwrap();
        assert_eq!(f.bonds(), &full_bonds(&plan));
        assert!(rel_err(&f.reconstruct().unwrap(), &m) <= 1e-10);
        for k in 0..4 {
            assert!(f.left_orthonormality_defect(k) <= 1e-8, "tensor {k}");
        }
        for (k, s) in f.cut_spectra().unwrap().iter().enumerate() {
            assert!(s.len() <= f.bonds().dims[k + 1]);
            assert!(s.windows(2).all(|w| w[0] >= w[1]));
        }
        assert_eq!(f.parameter_count(), crate::mpo::parameter_count(&plan, f.bonds()));
    }

    #[test]
    fn kronecker_rank_one_has_single_singular_value_per_cut() {
        // u and v are Kronecker products over the plan's sites, so every cut
        // of u v^T in the paired layout has rank one
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut factor = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(0.5..1.5)).collect() };
        let kron = |parts: &[Vec<f64>]| -> Vec<f64> {
            parts.iter().fold(vec![1.0], |acc, p| acc.iter().flat_map(|a| p.iter().map(move |b| a * b)).collect())
        };
        let plan = plan_shapes(16, 16, 3, None, None).unwrap();
        let u = kron(&plan.row_factors.iter().map(|&i| factor(i)).collect::<Vec<_>>());
        let v = kron(&plan.col_factors.iter().map(|&j| factor(j)).collect::<Vec<_>>());
        let m = Tensor::from_fn(vec![16, 16], |k| u[k / 16] * v[k % 16]).unwrap();
        let f = decompose(&m, &plan).unwrap();
        let sigma1 = crate::svd::svd_thin(&m).unwrap().sigma[0];
        for s in f.cut_spectra().unwrap() {
            assert_eq!(s.iter().filter(|&&x| x > 1e-10 * sigma1).count(), 1);
        }
    }

    #[test]
    fn generic_rank_one_cut_rank_is_bounded_by_factor_ranks() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = Tensor::from_fn(vec![16, 16], |k| u[k / 16] * v[k % 16]).unwrap();
        let plan = plan_shapes(16, 16, 3, None, None).unwrap();
        let f = decompose(&m, &plan).unwrap();
        let sigma1 = crate::svd::svd_thin(&m).unwrap().sigma[0];
        for (k, s) in f.cut_spectra().unwrap().iter().enumerate() {
            let left_rows: usize = plan.row_factors[..=k].iter().product();
            let left_cols: usize = plan.col_factors[..=k].iter().product();
            let cap = left_rows.min(16 / left_rows) * left_cols.min(16 / left_cols);
            let rank = s.iter().filter(|&&x| x > 1e-10 * sigma1).count();
            assert!(rank >= 1 && rank <= cap, "cut {k}: rank {rank} > {cap}");
        }
    }

    #[test]
    fn padding_is_zero_and_cropped() {
        let m = random(13, 6, 2);
        let plan = plan_shapes(13, 6, 2, Some(&[4, 4]), Some(&[2, 3])).unwrap();
        assert_eq!(plan.padded_rows, 16);
        let f = decompose(&m, &plan).unwrap();
        let padded = f.reconstruct_padded().unwrap();
        for r in 13..16 {
            for c in 0..6 {
                assert!(padded.at(&[r, c]).abs() <= 1e-12);
            }
        }
        let back = f.reconstruct().unwrap();
        assert_eq!(back.shape(), &[13, 6]);
        assert!(rel_err(&back, &m) <= 1e-10);
    }

    #[test]
    fn unfolding_matches_explicit_permutation_oracle() {
        // build the cut-1 unfolding M[(i1 j1), (i2 j2 i3 j3)] by explicit index arithmetic
        let m = random(8, 12, 3);
        let plan = ShapePlan::new(8, 12, vec![2, 2, 2], vec![2, 3, 2]).unwrap();
        let mut oracle = Tensor::zeros(vec![4, 24]).unwrap();
        for x in 0..8 {
            for y in 0..12 {
                let (i1, i2, i3) = (x / 4, (x / 2) % 2, x % 2);
                let (j1, j2, j3) = (y / 6, (y / 2) % 3, y % 2);
                let row = i1 * 2 + j1;
                let col = ((i2 * 3 + j2) * 2 + i3) * 2 + j3;
                oracle.set(&[row, col], m.at(&[x, y]));
            }
        }
        let direct = unfolding_spectrum(&m, &plan, 0).unwrap();
        let via_oracle = crate::svd::svd_thin(&oracle).unwrap().sigma;
        for (a, b) in direct.iter().zip(&via_oracle) {
            assert!((a - b).abs() <= 1e-12);
        }
        let f = decompose(&m, &plan).unwrap();
        for (a, b) in f.cut_spectra().unwrap()[0].iter().zip(&via_oracle) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn identity_truncation_is_lossless() {
        let m = random(32, 32, 4);
        let plan = plan_shapes(32, 32, 3, None, None).unwrap();
        let f = decompose(&m, &plan).unwrap();
        let (t, r) = f.truncate(f.bonds(), Some(&m)).unwrap();
        assert!(r.local_errors.iter().all(|&e| e == 0.0));
        assert_eq!(r.bound, 0.0);
        assert!(r.achieved_error.unwrap() <= 1e-10 * m.frobenius_norm());
        assert_eq!(t.bonds(), f.bonds());
    }

    #[test]
    fn single_cut_truncation_is_eckart_young() {
        let m = random(8, 8, 5);
        let plan = ShapePlan::new(8, 8, vec![2, 4], vec![4, 2]).unwrap();
        // site dims [8, 8]: the only cut is the plain row/column split of a reshuffled matrix
        let f = decompose(&m, &plan).unwrap();
        let (_, r) = f.truncate(&BondProfile::new(vec![1, 3, 1]), Some(&m)).unwrap();
        let sigma = unfolding_spectrum(&m, &plan, 0).unwrap();
        let tail = local_truncation_error(&sigma, 3);
        assert!((r.achieved_error.unwrap() - tail).abs() <= 1e-8 * tail);
        assert!((r.bound - tail).abs() <= 1e-12 * tail);
    }

    #[test]
    fn truncation_restores_left_orthonormality_and_respects_bound() {
        let m = random(64, 64, 6);
        let plan = plan_shapes(64, 64, 5, None, None).unwrap();
        let mut f = decompose(&m, &plan).unwrap();
        // perturb so the factors are no longer SVD factors
        f.tensor_mut(1).data_mut()[0] += 0.3;
        let perturbed = f.reconstruct().unwrap();
        let half = BondProfile::new(f.bonds().dims.iter().map(|&d| (d / 2).max(1)).collect());
        let (t, r) = f.truncate(&half, Some(&perturbed)).unwrap();
        for k in 0..4 {
            assert!(t.left_orthonormality_defect(k) <= 1e-8);
        }
        assert!(r.achieved_error.unwrap() <= r.bound + 1e-8 * perturbed.frobenius_norm());
        assert!(r.params_after < r.params_before);
        assert_eq!(r.params_after, t.parameter_count());
    }

    #[test]
    fn truncate_rejects_non_dominated_target() {
        let m = random(16, 16, 7);
        let plan = plan_shapes(16, 16, 2, None, None).unwrap();
        let f = decompose(&m, &plan).unwrap();
        let err = f.truncate(&BondProfile::new(vec![1, 17, 1]), None).unwrap_err();
        assert!(matches!(err, Error::NotDominated(_)));
    }

    #[test]
    fn balance_norms_preserves_the_matrix() {
        let m = random(16, 32, 8);
        let plan = plan_shapes(16, 32, 3, None, None).unwrap();
        let mut f = decompose(&m, &plan).unwrap();
        f.balance_norms();
        let norms: Vec<f64> = f.tensors().iter().map(Tensor::frobenius_norm).collect();
        for w in norms.windows(2) {
            assert!((w[0] - w[1]).abs() <= 1e-10 * w[0]);
        }
        assert!(rel_err(&f.reconstruct().unwrap(), &m) <= 1e-10);
        assert!(f.spectra_fresh());
    }

    #[test]
    fn zero_matrix_is_finite() {
        let z = Tensor::<f64>::zeros(vec![8, 8]).unwrap();
        let plan = plan_shapes(8, 8, 3, None, None).unwrap();
        let mut f = decompose(&z, &plan).unwrap();
        f.balance_norms();
        assert!(f.tensors().iter().all(Tensor::is_finite));
        assert_eq!(f.reconstruct().unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn decomposition_is_deterministic() {
        let m = random(48, 40, 9);
        let plan = plan_shapes(48, 40, 3, None, None).unwrap();
        let a = decompose(&m, &plan).unwrap();
        let b = decompose(&m, &plan).unwrap();
        for (x, y) in a.tensors().iter().zip(b.tensors()) {
            let bits_x: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
            let bits_y: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_x, bits_y);
        }
    }

    #[test]
    fn stale_spectra_are_recomputed() {
        let m = random(16, 16, 10);
        let plan = plan_shapes(16, 16, 3, None, None).unwrap();
        let mut f = decompose(&m, &plan).unwrap();
        let before = f.cut_spectra().unwrap().to_vec();
        f.tensor_mut(0).scale_in_place(2.0);
        assert!(f.cut_spectra().is_none());
        let after = f.refresh_spectra().unwrap();
        assert!((after[0][0] - 2.0 * before[0][0]).abs() < 1e-10);
    }

    #[test]
    fn single_precision_round_trip() {
        let m: Tensor<f32> = random(16, 16, 11).cast();
        let plan = plan_shapes(16, 16, 3, None, None).unwrap();
        let f = decompose(&m, &plan).unwrap();
        let err = f.reconstruct().unwrap().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(err < 1e-5);
    }
}
