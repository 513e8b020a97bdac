use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the `I x J` matrix is split into `n` paired local index extents.
///
/// Row factors multiply to `padded_rows >= rows` and column factors to
/// `padded_cols >= cols`; the difference is zero padding that is added before
/// decomposition and cropped after reconstruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapePlan {
    pub row_factors: Vec<usize>,
    pub col_factors: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
    pub padded_rows: usize,
    pub padded_cols: usize,
}

impl ShapePlan {
    /// Validates explicit factor lists. Products at least as large as the
    /// matrix dims are accepted and recorded as padding.
    pub fn new(rows: usize, cols: usize, row_factors: Vec<usize>, col_factors: Vec<usize>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidPlan(format!("matrix dims must be positive, got {rows}x{cols}")));
        }
        if row_factors.len() != col_factors.len() {
            return Err(Error::InvalidPlan(format!(
                "{} row factors but {} column factors",
                row_factors.len(),
                col_factors.len()
            )));
        }
        if row_factors.len() < 2 {
            return Err(Error::InvalidPlan("at least two local tensors are required".into()));
        }
        if row_factors.iter().chain(&col_factors).any(|&f| f == 0) {
            return Err(Error::InvalidPlan("factors must be >= 1".into()));
        }
        let padded_rows: usize = row_factors.iter().product();
        let padded_cols: usize = col_factors.iter().product();
        if padded_rows < rows {
            return Err(Error::InvalidPlan(format!("row factors {row_factors:?} multiply to {padded_rows} < {rows}")));
        }
        if padded_cols < cols {
            return Err(Error::InvalidPlan(format!("column factors {col_factors:?} multiply to {padded_cols} < {cols}")));
        }
        Ok(Self { row_factors, col_factors, rows, cols, padded_rows, padded_cols })
    }

    pub fn n(&self) -> usize {
        self.row_factors.len()
    }

    /// `i_k * j_k` for every site.
    pub fn site_dims(&self) -> Vec<usize> {
        self.row_factors.iter().zip(&self.col_factors).map(|(i, j)| i * j).collect()
    }

    pub fn is_padded(&self) -> bool {
        self.padded_rows != self.rows || self.padded_cols != self.cols
    }

    /// Index of the central tensor (0-based): the middle one for odd `n`,
    /// right of the middle for even `n`.
    pub fn central_index(&self) -> usize {
        self.n() / 2
    }

    /// Non-fatal issues, currently only unit factors, which make the
    /// corresponding local tensor trivial along that index.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.row_factors.contains(&1) {
            out.push(format!("row factors {:?} contain 1: n exceeds the padded row dimension's factor count", self.row_factors));
        }
        if self.col_factors.contains(&1) {
            out.push(format!("column factors {:?} contain 1: n exceeds the padded column dimension's factor count", self.col_factors));
        }
        out
    }
}

/// Builds a plan for an `rows x cols` matrix with `n` local tensors.
///
/// Explicit factor lists are validated and used verbatim. A side without
/// an override is padded to the smallest 5-smooth size (prime factors in
/// {2, 3, 5}) and its prime factors are dealt out largest first, each to the
/// slot with the currently smallest product; the result is sorted
/// non-decreasing.
pub fn plan_shapes(
    rows: usize,
    cols: usize,
    n: usize,
    row_override: Option<&[usize]>,
    col_override: Option<&[usize]>,
) -> Result<ShapePlan> {
    if n < 2 {
        return Err(Error::InvalidPlan(format!("n must be >= 2, got {n}")));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidPlan(format!("matrix dims must be positive, got {rows}x{cols}")));
    }
    let pick = |dim: usize, ov: Option<&[usize]>| -> Result<Vec<usize>> {
        match ov {
            Some(f) if f.len() != n => Err(Error::InvalidPlan(format!("override {f:?} does not have {n} factors"))),
            Some(f) => Ok(f.to_vec()),
            None => Ok(balanced_factors(smallest_smooth_at_least(dim), n)),
        }
    };
    ShapePlan::new(rows, cols, pick(rows, row_override)?, pick(cols, col_override)?)
}

fn is_five_smooth(mut x: usize) -> bool {
    for p in [2, 3, 5] {
        while x % p == 0 {
            x /= p;
        }
    }
    x == 1
}

pub(crate) fn smallest_smooth_at_least(dim: usize) -> usize {
    (dim.max(1)..).find(|&x| is_five_smooth(x)).expect("5-smooth numbers are unbounded")
}

fn prime_factors(mut x: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= x {
        while x % p == 0 {
            out.push(p);
            x /= p;
        }
        p += 1;
    }
    if x > 1 {
        out.push(x);
    }
    out
}

pub(crate) fn balanced_factors(dim: usize, n: usize) -> Vec<usize> {
    let mut primes = prime_factors(dim);
    primes.sort_unstable_by(|a, b| b.cmp(a));
    let mut slots = vec![1usize; n];
    for p in primes {
        let (idx, _) = slots
            .iter()
            .enumerate()
            .min_by_key(|&(k, &v)| (v, k))
            .expect("n >= 1");
        slots[idx] *= p;
    }
    slots.sort_unstable();
    slots
}

/// Bond dimensions `d_0 .. d_n` of a chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BondProfile {
    pub dims: Vec<usize>,
}

impl BondProfile {
    pub fn new(dims: Vec<usize>) -> Self {
        Self { dims }
    }

    pub fn interior(&self) -> &[usize] {
        &self.dims[1..self.dims.len() - 1]
    }

    /// Checks boundary dims, positivity and the full-bond ceiling.
    pub fn validate(&self, plan: &ShapePlan) -> Result<()> {
        let n = plan.n();
        if self.dims.len() != n + 1 {
            return Err(Error::InvalidArgument(format!(
                "bond profile needs {} entries, got {}",
                n + 1,
                self.dims.len()
            )));
        }
        if self.dims[0] != 1 || self.dims[n] != 1 {
            return Err(Error::InvalidArgument(format!("boundary bonds must be 1, got {:?}", self.dims)));
        }
        if self.dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("bond dims must be >= 1, got {:?}", self.dims)));
        }
        let full = full_bonds(plan);
        if let Some(k) = (0..=n).find(|&k| self.dims[k] > full.dims[k]) {
            return Err(Error::NotDominated(format!(
                "bond {k} is {} but the full bond is {}",
                self.dims[k], full.dims[k]
            )));
        }
        Ok(())
    }

    /// True when every entry is <= the matching entry of `other`.
    pub fn dominated_by(&self, other: &BondProfile) -> bool {
        self.dims.len() == other.dims.len() && self.dims.iter().zip(&other.dims).all(|(a, b)| a <= b)
    }

    /// Clamps each bond to what a left-to-right sweep can realize: bond `k`
    /// cannot exceed `d_{k-1} * i_k * j_k` nor the product of the site dims
    /// to its right.
    pub fn realizable(&self, plan: &ShapePlan) -> BondProfile {
        let sites = plan.site_dims();
        let n = plan.n();
        let mut dims = self.dims.clone();
        dims[0] = 1;
        dims[n] = 1;
        for k in 1..n {
            let right: usize = sites[k..].iter().product();
            dims[k] = dims[k].min(dims[k - 1] * sites[k - 1]).min(right).max(1);
        }
        BondProfile { dims }
    }
}

/// Untruncated bonds: `d_k = min(prod_{m<=k} i_m j_m, prod_{m>k} i_m j_m)`.
pub fn full_bonds(plan: &ShapePlan) -> BondProfile {
    let sites = plan.site_dims();
    let n = sites.len();
    let mut dims = vec![1usize; n + 1];
    for k in 1..n {
        // saturating keeps huge plans from overflowing; min() is unaffected
        let left = sites[..k].iter().fold(1usize, |acc, &a| acc.saturating_mul(a));
        let right = sites[k..].iter().fold(1usize, |acc, &a| acc.saturating_mul(a));
        dims[k] = left.min(right);
    }
    BondProfile { dims }
}
