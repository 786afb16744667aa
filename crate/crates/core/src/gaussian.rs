//! The exact Gaussian law of the chain diffusion: covariance quadrature,
//! density evaluation, sampling, and empirical certification of the
//! kernel decay bounds.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::chain::{
    dilation_matrix, mat_exp, sigma_embed, sym_sqrt, ChainParams, DiffusionProfile,
};
use crate::error::{Error, Result};
use crate::quad;

/// Normalized covariance of the dilation-rescaled endpoint
/// Theta_{(t-s)^{-1/2}} X^{s,0}_t.
///
/// Computed as the unit-interval integral of
/// e^{rA} sigma_r sigma_r^T e^{rA^T} with the diffusion coefficient read at
/// the reversed time s + (t-s)(1-r). The quadrature partition is aligned to
/// the profile's breakpoints, so piecewise-constant coefficients integrate
/// exactly too.
pub fn covariance(
    params: &ChainParams,
    profile: &DiffusionProfile,
    s: f64,
    t: f64,
    quad_nodes: usize,
) -> Result<DMatrix<f64>> {
    if !(s < t) {
        return Err(Error::EmptyInterval { s, t });
    }
    if quad_nodes < 2 {
        return Err(Error::InvalidParams(format!(
            "quad_nodes = {quad_nodes}, need at least 2"
        )));
    }
    let tau = t - s;
    // breakpoints of a_u in (s, t) mapped through u = s + tau*(1 - r)
    let mut cuts = vec![0.0];
    let mut breaks: Vec<f64> = profile
        .breakpoints_within(s, t)
        .iter()
        .map(|&u| 1.0 - (u - s) / tau)
        .collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.extend(breaks);
    cuts.push(1.0);

    let nd = params.dim();
    let mut sigma = DMatrix::zeros(nd, nd);
    for (r, w) in quad::composite_nodes(&cuts, quad_nodes) {
        let a = profile.eval(s + tau * (1.0 - r));
        let emb = sigma_embed(params, &a)?.into_matrix();
        let e = mat_exp(params, r).into_matrix();
        let es = &e * emb;
        sigma += (&es * es.transpose()) * w;
    }
    // enforce exact symmetry against quadrature round-off
    sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(sigma)
}

/// The Gaussian transition law of X^{s,x}_t.
#[derive(Debug, Clone)]
pub struct GaussianLaw {
    params: ChainParams,
    s: f64,
    t: f64,
    mean: Vec<f64>,
    sigma_norm: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
    det_norm: f64,
}

impl GaussianLaw {
    pub fn new(
        params: &ChainParams,
        profile: &DiffusionProfile,
        s: f64,
        t: f64,
        x: &[f64],
        quad_nodes: usize,
    ) -> Result<Self> {
        let sigma_norm = covariance(params, profile, s, t, quad_nodes)?;
        let mean = mat_exp(params, t - s).apply(x);
        Self::from_parts(params, s, t, mean, sigma_norm)
    }

    /// Assemble a law from an explicit mean and normalized covariance.
    pub fn from_parts(
        params: &ChainParams,
        s: f64,
        t: f64,
        mean: Vec<f64>,
        sigma_norm: DMatrix<f64>,
    ) -> Result<Self> {
        if !(s < t) {
            return Err(Error::EmptyInterval { s, t });
        }
        if mean.len() != params.dim() {
            return Err(Error::InvalidParams("mean has wrong dimension".into()));
        }
        let eig = nalgebra::SymmetricEigen::new(sigma_norm.clone());
        let min = eig.eigenvalues.min();
        if min < 1e-12 {
            return Err(Error::SingularCovariance(min));
        }
        let det_norm = eig.eigenvalues.iter().product();
        let inv_vals = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
        let sigma_inv = &eig.eigenvectors * inv_vals * eig.eigenvectors.transpose();
        Ok(Self {
            params: *params,
            s,
            t,
            mean,
            sigma_norm,
            sigma_inv,
            det_norm,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.s, self.t)
    }

    /// Normalized covariance (of the dilation-rescaled variable).
    pub fn covariance_normalized(&self) -> &DMatrix<f64> {
        &self.sigma_norm
    }

    /// Covariance of the un-rescaled endpoint: Theta Sigma Theta with
    /// Theta = Theta_{sqrt(t-s)}.
    pub fn covariance_raw(&self) -> DMatrix<f64> {
        let th = dilation_matrix(&self.params, (self.t - self.s).sqrt());
        &th * &self.sigma_norm * &th
    }

    /// Transition density p_{s,t}(x, y) at the point y.
    ///
    /// Evaluated through the rescaled variable z = Theta_{(t-s)^{-1/2}}(y - mean):
    /// the raw-covariance determinant is (t-s)^{n^2 d} det(Sigma), so the
    /// normalization carries the anisotropic time power explicitly.
    pub fn density(&self, y: &[f64]) -> f64 {
        let tau = self.t - self.s;
        let nd = self.params.dim();
        let root = tau.sqrt();
        let mut z = DVector::zeros(nd);
        for b in 0..self.params.n() {
            let scale = root.powi(-self.params.block_exponent(b));
            for k in 0..self.params.d() {
                let i = b * self.params.d() + k;
                z[i] = (y[i] - self.mean[i]) * scale;
            }
        }
        let q = (z.transpose() * &self.sigma_inv * &z)[(0, 0)];
        let n2d = (self.params.n() * self.params.n() * self.params.d()) as i32;
        let norm = (2.0 * std::f64::consts::PI).powi(nd as i32 / 2)
            * if nd % 2 == 1 {
                (2.0 * std::f64::consts::PI).sqrt()
            } else {
                1.0
            }
            * root.powi(n2d)
            * self.det_norm.sqrt();
        (-0.5 * q).exp() / norm
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub(crate) fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    pub(crate) fn det_norm(&self) -> f64 {
        self.det_norm
    }
}

/// Exact i.i.d. draws from the transition law, via the symmetric square
/// root of the raw covariance. Deterministic given the seed.
pub fn sample_exact(
    params: &ChainParams,
    profile: &DiffusionProfile,
    s: f64,
    t: f64,
    x: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let law = GaussianLaw::new(params, profile, s, t, x, 64)?;
    let root = sym_sqrt(&law.covariance_raw())?;
    let nd = params.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let g = DVector::from_fn(nd, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = &root * g;
        out.push(
            law.mean()
                .iter()
                .zip(v.iter())
                .map(|(m, dv)| m + dv)
                .collect(),
        );
    }
    Ok(out)
}

/// Euler-Maruyama endpoint samples of the linear SDE
/// dX = AX dt + sigma_t dW. Converges in law to `sample_exact` as the step
/// count grows; for this additive-noise linear drift the weak error is
/// O(1/steps).
pub fn sample_euler(
    params: &ChainParams,
    profile: &DiffusionProfile,
    s: f64,
    t: f64,
    x: &[f64],
    steps: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !(s < t) {
        return Err(Error::EmptyInterval { s, t });
    }
    if steps < 1 {
        return Err(Error::InvalidParams("steps must be >= 1".into()));
    }
    let d = params.d();
    let n = params.n();
    let dt = (t - s) / steps as f64;
    let sq_dt = dt.sqrt();
    // noise only enters the last block; cache its sqrt(2 a) factor per step
    let mut noise_roots = Vec::with_capacity(steps);
    for k in 0..steps {
        let tk = s + k as f64 * dt;
        noise_roots.push(sym_sqrt(&(profile.eval(tk) * 2.0))?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut xv = x.to_vec();
        for root in &noise_roots {
            let mut next = xv.clone();
            // drift: block b feeds from block b+1
            for b in 0..n - 1 {
                for k in 0..d {
                    next[b * d + k] += dt * xv[(b + 1) * d + k];
                }
            }
            let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let kick = root * g * sq_dt;
            for k in 0..d {
                next[(n - 1) * d + k] += kick[k];
            }
            xv = next;
        }
        out.push(xv);
    }
    Ok(out)
}

/// The n x n moment matrix M_{ij} = 1/((2n-i-j+1)(n-i)!(n-j)!), indices from 1.
///
/// This is the Gram matrix of the monomials r^{n-i}/(n-i)! on [0, 1]; its
/// quadratic form in a unit direction is the directional covariance floor.
pub fn moment_matrix(n: usize) -> DMatrix<f64> {
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    DMatrix::from_fn(n, n, |i0, j0| {
        let (i, j) = (i0 + 1, j0 + 1);
        1.0 / ((2 * n - i - j + 1) as f64 * fact(n - i) * fact(n - j))
    })
}

/// Directional moment form delta(omega) = omega^T M omega for a unit vector.
pub fn delta_direction(n: usize, omega: &[f64]) -> f64 {
    let m = moment_matrix(n);
    let w = DVector::from_column_slice(omega);
    (w.transpose() * m * &w)[(0, 0)]
}

/// The uniform covariance floor c0 = inf over unit directions of
/// delta(omega), i.e. the minimum eigenvalue of the moment matrix. Every
/// normalized covariance then satisfies Sigma >= (2 c0 / kappa) I.
pub fn c0_lower_bound(params: &ChainParams) -> f64 {
    nalgebra::SymmetricEigen::new(moment_matrix(params.n()))
        .eigenvalues
        .min()
}

/// Sparse multivariate polynomial, exponent vector -> coefficient.
/// Ordered map so eval sums terms in a fixed order (bitwise reproducibility).
#[derive(Debug, Clone)]
pub struct MultiPoly {
    nvars: usize,
    terms: BTreeMap<Vec<u16>, f64>,
}

impl MultiPoly {
    pub fn one(nvars: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![0u16; nvars], 1.0);
        Self { nvars, terms }
    }

    fn add_term(&mut self, exps: Vec<u16>, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let slot = self.terms.entry(exps).or_insert(0.0);
        *slot += coeff;
        if *slot == 0.0 {
            // keep the map sparse
        }
    }

    /// Partial derivative in variable c.
    pub fn diff(&self, c: usize) -> Self {
        let mut out = Self {
            nvars: self.nvars,
            terms: BTreeMap::new(),
        };
        for (exps, &coeff) in &self.terms {
            if exps[c] == 0 {
                continue;
            }
            let mut e = exps.clone();
            let k = e[c] as f64;
            e[c] -= 1;
            out.add_term(e, coeff * k);
        }
        out
    }

    /// Multiply by the linear form sum_k row[k] * z_k.
    pub fn mul_linear(&self, row: &[f64]) -> Self {
        let mut out = Self {
            nvars: self.nvars,
            terms: BTreeMap::new(),
        };
        for (exps, &coeff) in &self.terms {
            for (k, &rk) in row.iter().enumerate() {
                if rk == 0.0 {
                    continue;
                }
                let mut e = exps.clone();
                e[k] += 1;
                out.add_term(e, coeff * rk);
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (exps, &coeff) in &other.terms {
            out.add_term(exps.clone(), -coeff);
        }
        out
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(exps, &coeff)| {
                coeff
                    * exps
                        .iter()
                        .zip(z)
                        .map(|(&e, &zi)| zi.powi(e as i32))
                        .product::<f64>()
            })
            .sum()
    }
}

/// Polynomial factor of the beta-derivative of the centered Gaussian:
/// D^beta e^{-q(z)} = P_beta(z) e^{-q(z)} with q = z^T Sigma^{-1} z / 2.
///
/// Built by the recursion P_{beta + e_c} = d_c P - (Sigma^{-1} z)_c P.
pub fn gaussian_derivative_poly(sigma_inv: &DMatrix<f64>, beta: &[usize]) -> MultiPoly {
    let nvars = sigma_inv.nrows();
    assert_eq!(beta.len(), nvars);
    let mut p = MultiPoly::one(nvars);
    for (c, &order) in beta.iter().enumerate() {
        let row: Vec<f64> = (0..nvars).map(|k| sigma_inv[(c, k)]).collect();
        for _ in 0..order {
            p = p.diff(c).sub(&p.mul_linear(&row));
        }
    }
    p
}

/// Result of fitting the Gaussian decay envelope of a kernel derivative.
#[derive(Debug, Clone)]
pub struct KernelBoundFit {
    pub beta: Vec<usize>,
    pub big_c: f64,
    pub small_c: f64,
    pub samples: usize,
    pub max_rel_violation: f64,
}

/// Empirical envelope for the dilation-normalized kernel derivative.
///
/// For each sampled (tau, y) the derivative of the centered density is
/// evaluated analytically (polynomial times Gaussian) at the rescaled point
/// z = Theta_{tau^{-1/2}} y; the chain rule turns every y-derivative of
/// order beta_i in block i into tau^{-(2(n-i)+1)/2} z-derivatives, so after
/// removing the full power of tau the sampled value depends on tau only
/// through the covariance. The fit takes C as the sample maximum and c as
/// the smallest log-ratio decay rate, which makes the envelope hold on the
/// whole sample by construction; `max_rel_violation` re-checks that.
pub fn kernel_bound_fit(
    params: &ChainParams,
    profile: &DiffusionProfile,
    beta: &[usize],
    t_range: (f64, f64),
    samples: usize,
    seed: u64,
) -> Result<KernelBoundFit> {
    let nd = params.dim();
    if beta.len() != nd {
        return Err(Error::InvalidParams(
            "multi-index length must match the state dimension".into(),
        ));
    }
    if beta.iter().any(|&b| b > 2) {
        return Err(Error::InvalidParams("derivative orders above 2 unsupported".into()));
    }
    if !(t_range.0 > 0.0 && t_range.0 < t_range.1) {
        return Err(Error::InvalidParams("need 0 < t_min < t_max".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // (value, |z|^2) pairs of the normalized derivative magnitude
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(samples);
    let n_tau = 8.max(samples / 1024);
    let per_tau = samples / n_tau;
    for it in 0..n_tau {
        let tau = t_range.0 + (t_range.1 - t_range.0) * it as f64 / (n_tau - 1).max(1) as f64;
        let sigma = covariance(params, profile, 0.0, tau, 64)?;
        let law = GaussianLaw::from_parts(params, 0.0, tau, vec![0.0; nd], sigma)?;
        let poly = gaussian_derivative_poly(law.sigma_inv(), beta);
        let norm = (2.0 * std::f64::consts::PI).powf(nd as f64 / 2.0) * law.det_norm().sqrt();
        let eig = nalgebra::SymmetricEigen::new(law.sigma_inv().clone());
        let min_idx = eig.eigenvalues.imin();
        let vmin: Vec<f64> = eig.eigenvectors.column(min_idx).iter().copied().collect();

        let mut push = |z: &[f64]| {
            let q = {
                let zv = DVector::from_column_slice(z);
                (zv.transpose() * law.sigma_inv() * &zv)[(0, 0)]
            };
            let val = poly.eval(z).abs() * (-0.5 * q).exp() / norm;
            let r2 = z.iter().map(|v| v * v).sum::<f64>();
            pts.push((val, r2));
        };
        // random cloud at mixed radii, plus rays along the flattest
        // direction of the quadratic form so the fitted c is pinned there
        for k in 0..per_tau {
            let r = 6.0 * (k as f64 + 1.0) / per_tau as f64;
            let z: Vec<f64> = (0..nd)
                .map(|_| r * rng.sample::<f64, _>(StandardNormal) / (nd as f64).sqrt())
                .collect();
            push(&z);
        }
        for k in 1..=32 {
            let r = 8.0 * k as f64 / 32.0;
            let z: Vec<f64> = vmin.iter().map(|v| v * r).collect();
            push(&z);
        }
    }

    let peak = pts.iter().map(|p| p.0).fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Err(Error::DegenerateFit("derivative vanished on every sample".into()));
    }
    // decay rate measured in the far field only, past the polynomial bump of
    // low-order derivatives; the flattest-direction rays pin the infimum
    let far = 16.0;
    let mut small_c = f64::INFINITY;
    for &(val, r2) in &pts {
        if r2 < far || val <= 0.0 {
            continue;
        }
        let rate = (peak.ln() - val.ln()) / r2;
        small_c = small_c.min(rate);
    }
    if !small_c.is_finite() || small_c <= 0.0 {
        return Err(Error::DegenerateFit(format!("non-positive decay rate {small_c}")));
    }
    // envelope constant lifted until no sample violates the bound
    let big_c = pts
        .iter()
        .map(|&(val, r2)| val * (small_c * r2).exp())
        .fold(0.0f64, f64::max);
    let mut max_rel_violation = 0.0f64;
    for &(val, r2) in &pts {
        let bound = big_c * (-small_c * r2).exp();
        if val > bound {
            max_rel_violation = max_rel_violation.max(val / bound - 1.0);
        }
    }
    Ok(KernelBoundFit {
        beta: beta.to_vec(),
        big_c,
        small_c,
        samples: pts.len(),
        max_rel_violation,
    })
}
