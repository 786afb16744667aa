//! The chain structure: shear matrix `A`, its closed-form exponential,
//! the anisotropic dilation, and time-dependent diffusion profiles.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Parameters of the n-block chain model on R^{n*d}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    n: usize,
    d: usize,
    kappa: f64,
}

impl ChainParams {
    pub fn new(n: usize, d: usize, kappa: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams(format!("n = {n}, need n >= 2")));
        }
        if d < 1 {
            return Err(Error::InvalidParams(format!("d = {d}, need d >= 1")));
        }
        if !(kappa >= 1.0) || !kappa.is_finite() {
            return Err(Error::InvalidParams(format!("kappa = {kappa}, need kappa >= 1")));
        }
        Ok(Self { n, d, kappa })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Total dimension N = n*d.
    pub fn dim(&self) -> usize {
        self.n * self.d
    }

    /// Dilation exponent of block `j` (0-based): 2(n-j)-1 in 1-based terms,
    /// i.e. block j scales by r^{2(n-j)+1} with j counted from 1.
    pub fn block_exponent(&self, block: usize) -> i32 {
        debug_assert!(block < self.n);
        (2 * (self.n - 1 - block) + 1) as i32
    }

    /// Parabolic homogeneous dimension n^2*d + 2 of the space-time geometry.
    pub fn homogeneous_dim(&self) -> i32 {
        (self.n * self.n * self.d + 2) as i32
    }
}

/// A real (n*d) x (n*d) matrix with d x d block structure.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    n: usize,
    d: usize,
    mat: DMatrix<f64>,
}

impl BlockMatrix {
    fn zeros(params: &ChainParams) -> Self {
        Self {
            n: params.n,
            d: params.d,
            mat: DMatrix::zeros(params.dim(), params.dim()),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// Entry of block (bi, bj) at local position (i, j); all 0-based.
    pub fn block_entry(&self, bi: usize, bj: usize, i: usize, j: usize) -> f64 {
        self.mat[(bi * self.d + i, bj * self.d + j)]
    }

    fn set_block_diag(&mut self, bi: usize, bj: usize, v: f64) {
        for k in 0..self.d {
            self.mat[(bi * self.d + k, bj * self.d + k)] = v;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.mat * DVector::from_column_slice(x);
        v.as_slice().to_vec()
    }

    pub fn transpose(&self) -> Self {
        Self {
            n: self.n,
            d: self.d,
            mat: self.mat.transpose(),
        }
    }
}

/// The shear matrix A: identity d x d blocks on the superdiagonal, zero elsewhere.
pub fn shear_matrix(params: &ChainParams) -> BlockMatrix {
    let mut a = BlockMatrix::zeros(params);
    for b in 0..params.n - 1 {
        a.set_block_diag(b, b + 1, 1.0);
    }
    a
}

/// Closed-form e^{tA}: block (i, j) = t^{j-i}/(j-i)! * I for j >= i.
///
/// A is nilpotent of order n, so this finite sum is exact; no series
/// truncation is involved.
pub fn mat_exp(params: &ChainParams, t: f64) -> BlockMatrix {
    let mut e = BlockMatrix::zeros(params);
    for bi in 0..params.n {
        let mut coeff = 1.0;
        for bj in bi..params.n {
            if bj > bi {
                coeff *= t / (bj - bi) as f64;
            }
            e.set_block_diag(bi, bj, coeff);
        }
    }
    e
}

/// The anisotropic dilation Theta_r: block j scaled by r^{2(n-j)+1}.
pub fn dilation(params: &ChainParams, r: f64, x: &[f64]) -> Vec<f64> {
    assert!(r > 0.0, "dilation requires r > 0");
    assert_eq!(x.len(), params.dim());
    let mut out = x.to_vec();
    for b in 0..params.n {
        let scale = r.powi(params.block_exponent(b));
        for k in 0..params.d {
            out[b * params.d + k] *= scale;
        }
    }
    out
}

/// Diagonal matrix of Theta_r as a full matrix (handy for covariance scaling).
pub fn dilation_matrix(params: &ChainParams, r: f64) -> DMatrix<f64> {
    let nd = params.dim();
    let mut m = DMatrix::zeros(nd, nd);
    for b in 0..params.n {
        let scale = r.powi(params.block_exponent(b));
        for k in 0..params.d {
            let i = b * params.d + k;
            m[(i, i)] = scale;
        }
    }
    m
}

/// Symmetric square root via eigendecomposition, with an eigenvalue floor check.
pub fn sym_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = nalgebra::SymmetricEigen::new(a.clone());
    let min = sym.eigenvalues.min();
    if min < 1e-12 {
        return Err(Error::NotPositiveDefinite(min));
    }
    let sqrt_vals = DMatrix::from_diagonal(&sym.eigenvalues.map(f64::sqrt));
    Ok(&sym.eigenvectors * sqrt_vals * sym.eigenvectors.transpose())
}

/// The noise embedding: zero except the bottom-right d x d block, which is
/// the symmetric square root of 2a.
pub fn sigma_embed(params: &ChainParams, a: &DMatrix<f64>) -> Result<BlockMatrix> {
    assert_eq!(a.nrows(), params.d);
    assert_eq!(a.ncols(), params.d);
    let root = sym_sqrt(&(a * 2.0))?;
    let mut s = BlockMatrix::zeros(params);
    let off = (params.n - 1) * params.d;
    for i in 0..params.d {
        for j in 0..params.d {
            s.mat[(off + i, off + j)] = root[(i, j)];
        }
    }
    Ok(s)
}

/// The time-dependent diffusion coefficient a_t, evaluable at any t.
#[derive(Debug, Clone)]
pub struct DiffusionProfile {
    kappa: f64,
    d: usize,
    kind: ProfileKind,
}

#[derive(Debug, Clone)]
pub enum ProfileKind {
    Constant(DMatrix<f64>),
    /// `mats[i]` applies on (breaks[i-1], breaks[i]]; mats.len() == breaks.len() + 1.
    PiecewiseConstant {
        breaks: Vec<f64>,
        mats: Vec<DMatrix<f64>>,
    },
    /// a_t = ((kappa + 1/kappa)/2 + (kappa - 1/kappa)/2 * sin t) * I.
    SmoothPeriodic,
}

impl DiffusionProfile {
    pub fn constant(params: &ChainParams, a: DMatrix<f64>) -> Result<Self> {
        check_ellipticity(params, &a, 0.0)?;
        Ok(Self {
            kappa: params.kappa(),
            d: params.d(),
            kind: ProfileKind::Constant(a),
        })
    }

    pub fn constant_scalar(params: &ChainParams, a: f64) -> Result<Self> {
        Self::constant(params, DMatrix::identity(params.d(), params.d()) * a)
    }

    pub fn piecewise_constant(
        params: &ChainParams,
        breaks: Vec<f64>,
        mats: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if mats.len() != breaks.len() + 1 {
            return Err(Error::InvalidParams(
                "piecewise profile needs breaks.len() + 1 matrices".into(),
            ));
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams("breakpoints must be strictly increasing".into()));
        }
        for (i, m) in mats.iter().enumerate() {
            let t = if i < breaks.len() { breaks[i] } else { *breaks.last().unwrap() + 1.0 };
            check_ellipticity(params, m, t)?;
        }
        Ok(Self {
            kappa: params.kappa(),
            d: params.d(),
            kind: ProfileKind::PiecewiseConstant { breaks, mats },
        })
    }

    pub fn smooth_periodic(params: &ChainParams) -> Self {
        Self {
            kappa: params.kappa(),
            d: params.d(),
            kind: ProfileKind::SmoothPeriodic,
        }
    }

    /// Bypasses the ellipticity check; used by negative-control scenarios that
    /// deliberately understate kappa.
    pub fn constant_unchecked(kappa: f64, a: DMatrix<f64>) -> Self {
        let d = a.nrows();
        Self {
            kappa,
            d,
            kind: ProfileKind::Constant(a),
        }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    /// Evaluate a_t.
    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        match &self.kind {
            ProfileKind::Constant(a) => a.clone(),
            ProfileKind::PiecewiseConstant { breaks, mats } => {
                let idx = breaks.partition_point(|&b| b < t);
                mats[idx].clone()
            }
            ProfileKind::SmoothPeriodic => {
                let k = self.kappa;
                let mid = (k + 1.0 / k) / 2.0;
                let amp = (k - 1.0 / k) / 2.0;
                DMatrix::identity(self.d, self.d) * (mid + amp * t.sin())
            }
        }
    }

    /// Breakpoints inside the open interval (lo, hi), in increasing order.
    pub fn breakpoints_within(&self, lo: f64, hi: f64) -> Vec<f64> {
        match &self.kind {
            ProfileKind::PiecewiseConstant { breaks, .. } => breaks
                .iter()
                .copied()
                .filter(|&b| b > lo && b < hi)
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, ProfileKind::Constant(_))
    }

    /// Verify ellipticity on a dense sample of `[lo, hi]`.
    pub fn check_range(&self, params: &ChainParams, lo: f64, hi: f64, samples: usize) -> Result<()> {
        for i in 0..=samples {
            let t = lo + (hi - lo) * i as f64 / samples as f64;
            check_ellipticity(params, &self.eval(t), t)?;
        }
        Ok(())
    }
}

/// `a` must be symmetric with eigenvalues in [1/kappa - eps, kappa + eps].
pub fn check_ellipticity(params: &ChainParams, a: &DMatrix<f64>, t: f64) -> Result<()> {
    let eps = 1e-10;
    let asym = (a - a.transpose()).abs().max();
    if asym > 1e-12 {
        return Err(Error::InvalidParams(format!("a_t not symmetric at t = {t} (skew {asym:.3e})")));
    }
    let eigs = nalgebra::SymmetricEigen::new(a.clone()).eigenvalues;
    let lo = 1.0 / params.kappa() - eps;
    let hi = params.kappa() + eps;
    for &e in eigs.iter() {
        if e < lo || e > hi {
            return Err(Error::EllipticityViolated { t, eig: e, lo, hi });
        }
    }
    Ok(())
}
