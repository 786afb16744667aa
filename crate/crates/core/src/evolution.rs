//! The two-parameter evolution family, its adjoint, resolvent and transport
//! integrals, the spectral generator, and decay-exponent probes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rayon::prelude::*;
use std::sync::Arc;

use crate::chain::{dilation_matrix, mat_exp, ChainParams, DiffusionProfile};
use crate::error::{Error, Result};
use crate::field::{
    frac_laplacian, shear_resample, Domain, Grid, GridField, SpaceTimeField,
};
use crate::gaussian::covariance;

/// One application window of the evolution family.
#[derive(Debug, Clone)]
pub struct SemigroupSpec<'a> {
    params: ChainParams,
    profile: &'a DiffusionProfile,
    s: f64,
    t: f64,
}

impl<'a> SemigroupSpec<'a> {
    pub fn new(params: &ChainParams, profile: &'a DiffusionProfile, s: f64, t: f64) -> Result<Self> {
        if !(s <= t) {
            return Err(Error::EmptyInterval { s, t });
        }
        Ok(Self {
            params: *params,
            profile,
            s,
            t,
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.s, self.t)
    }
}

/// Covariance of the un-rescaled increment over [s, t].
fn raw_covariance(
    params: &ChainParams,
    profile: &DiffusionProfile,
    s: f64,
    t: f64,
) -> Result<DMatrix<f64>> {
    let sigma = covariance(params, profile, s, t, 64)?;
    let th = dilation_matrix(params, (t - s).sqrt());
    Ok(&th * sigma * &th)
}

fn check_grid(params: &ChainParams, f: &GridField) -> Result<()> {
    if f.grid().params() != params {
        return Err(Error::GridMismatch(
            "field grid was built for different chain parameters".into(),
        ));
    }
    Ok(())
}

fn gaussian_multiplier(raw: DMatrix<f64>) -> impl Fn(&[f64]) -> Complex<f64> + Sync {
    move |xi: &[f64]| {
        let v = DVector::from_column_slice(xi);
        let q = (v.transpose() * &raw * &v)[(0, 0)];
        Complex::new((-0.5 * q).exp(), 0.0)
    }
}

/// Forward action: convolve with the centered Gaussian of the window's
/// covariance (exact in frequency), then compose with the shear flow.
pub fn apply_semigroup(spec: &SemigroupSpec, f: &GridField) -> Result<GridField> {
    check_grid(&spec.params, f)?;
    if spec.t == spec.s {
        return Ok(f.clone());
    }
    let raw = raw_covariance(&spec.params, spec.profile, spec.s, spec.t)?;
    let conv = f.multiply_symbol(gaussian_multiplier(raw));
    Ok(shear_resample(&conv, &mat_exp(&spec.params, spec.t - spec.s)))
}

/// L^2-adjoint of `apply_semigroup`: the inverse shear first, then the same
/// Gaussian convolution (the kernel is even, so convolution is self-adjoint).
pub fn apply_adjoint(spec: &SemigroupSpec, f: &GridField) -> Result<GridField> {
    check_grid(&spec.params, f)?;
    if spec.t == spec.s {
        return Ok(f.clone());
    }
    let raw = raw_covariance(&spec.params, spec.profile, spec.s, spec.t)?;
    let sheared = shear_resample(f, &mat_exp(&spec.params, spec.s - spec.t));
    Ok(sheared.multiply_symbol(gaussian_multiplier(raw)))
}

/// Pointwise multiplication by the box coordinate of one axis.
pub fn multiply_coordinate(f: &GridField, axis: usize) -> GridField {
    assert_eq!(f.domain(), Domain::Physical);
    let grid = f.grid().clone();
    let nd = grid.num_axes();
    let mut out = f.clone();
    out.values_mut()
        .par_iter_mut()
        .enumerate()
        .for_each_init(
            || vec![0.0; nd],
            |x, (i, v)| {
                grid.coords_of(i, x);
                *v *= x[axis];
            },
        );
    out
}

/// The frozen-time generator applied spectrally: the diffusion part is a
/// frequency multiplier on the last block, the drift part differentiates in
/// frequency and multiplies by the (periodic) coordinate in physical space.
pub fn apply_generator(params: &ChainParams, a: &DMatrix<f64>, f: &GridField) -> Result<GridField> {
    check_grid(params, f)?;
    let d = params.d();
    let n = params.n();
    let lo = (n - 1) * d;
    let a = a.clone();
    let mut out = f.multiply_symbol(move |xi| {
        let mut q = 0.0;
        for i in 0..d {
            for k in 0..d {
                q += a[(i, k)] * xi[lo + i] * xi[lo + k];
            }
        }
        Complex::new(-q, 0.0)
    });
    for axis in 0..(n - 1) * d {
        let deriv = f.multiply_symbol(|xi| Complex::new(0.0, xi[axis]));
        out = out.add(&multiply_coordinate(&deriv, axis + d))?;
    }
    Ok(out)
}

/// Time-quadrature recipe for the resolvent integral.
#[derive(Debug, Clone)]
pub struct ResolventSpec {
    pub lambda: f64,
    pub t_max: f64,
    pub dt: f64,
    /// Relative sup-norm tail threshold at the horizon.
    pub tail_tol: f64,
    pub allow_short_horizon: bool,
}

impl ResolventSpec {
    /// The horizon must cover ten decay times of max(lambda, 1/2) unless
    /// explicitly overridden with `allow_short_horizon`.
    pub fn new(lambda: f64, t_max: f64, dt: f64) -> Result<Self> {
        if lambda < 0.0 || !(dt > 0.0) || !(t_max > dt) {
            return Err(Error::InvalidParams("need lambda >= 0, 0 < dt < t_max".into()));
        }
        let spec = Self {
            lambda,
            t_max,
            dt,
            tail_tol: 1e-5,
            allow_short_horizon: false,
        };
        if t_max < 10.0 / lambda.max(0.5) {
            return Err(Error::InvalidParams(format!(
                "horizon {t_max} below ten decay times; use allow_short_horizon to override"
            )));
        }
        Ok(spec)
    }

    pub fn with_short_horizon(lambda: f64, t_max: f64, dt: f64) -> Result<Self> {
        if lambda < 0.0 || !(dt > 0.0) || !(t_max > dt) {
            return Err(Error::InvalidParams("need lambda >= 0, 0 < dt < t_max".into()));
        }
        Ok(Self {
            lambda,
            t_max,
            dt,
            tail_tol: 1e-5,
            allow_short_horizon: true,
        })
    }
}

fn horizon_check(
    rspec: &ResolventSpec,
    f: &SpaceTimeField,
    s: f64,
    steps: usize,
) -> Result<()> {
    if (f.t0() - s).abs() > 1e-9 {
        return Err(Error::GridMismatch(
            "space-time data must start at the evaluation time".into(),
        ));
    }
    if (f.dt() - rspec.dt).abs() > 1e-12 {
        return Err(Error::GridMismatch("time step disagrees with the quadrature step".into()));
    }
    if f.len() <= steps {
        return Err(Error::GridMismatch("space-time data shorter than the horizon".into()));
    }
    let peak = f
        .slices()
        .iter()
        .map(|sl| sl.lp_norm(f64::INFINITY))
        .fold(0.0f64, f64::max);
    if peak == 0.0 {
        return Ok(());
    }
    let tail = (-rspec.lambda * rspec.t_max).exp() * f.slice(steps).lp_norm(f64::INFINITY) / peak;
    if tail > rspec.tail_tol && !rspec.allow_short_horizon {
        return Err(Error::HorizonTooShort {
            achieved: tail,
            requested: rspec.tail_tol,
        });
    }
    Ok(())
}

/// Weighted sum of per-slice operator applications, evaluated in parallel
/// chunks but reduced strictly in time order so runs are bit-reproducible.
fn quadrature_sum(
    steps: usize,
    term: impl Fn(usize) -> Result<GridField> + Sync,
) -> Result<GridField> {
    let mut acc: Option<GridField> = None;
    for chunk in (0..=steps).collect::<Vec<_>>().chunks(16) {
        let parts: Vec<Result<GridField>> = chunk.par_iter().map(|&k| term(k)).collect();
        for part in parts {
            let part = part?;
            acc = Some(match acc {
                None => part,
                Some(a) => a.add(&part)?,
            });
        }
    }
    Ok(acc.expect("at least one quadrature node"))
}

/// u(s, x) = integral over t >= 0 of e^{-lambda t} applied-semigroup of
/// f(t + s), by trapezoidal quadrature on f's time lattice.
pub fn resolvent(
    params: &ChainParams,
    profile: &DiffusionProfile,
    rspec: &ResolventSpec,
    f: &SpaceTimeField,
    s: f64,
) -> Result<GridField> {
    let steps = (rspec.t_max / rspec.dt).round() as usize;
    horizon_check(rspec, f, s, steps)?;
    quadrature_sum(steps, |k| {
        let tau = k as f64 * rspec.dt;
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 } * rspec.dt;
        let spec = SemigroupSpec::new(params, profile, s, s + tau)?;
        let applied = apply_semigroup(&spec, f.slice(k))?;
        Ok(applied.scale(w * (-rspec.lambda * tau).exp()))
    })
}

/// Pure-transport resolvent (no diffusion): u(s, x) = integral of
/// e^{-lambda t} f(t + s, e^{tA} x), by characteristics.
pub fn transport_solve(
    params: &ChainParams,
    rspec: &ResolventSpec,
    f: &SpaceTimeField,
    s: f64,
) -> Result<GridField> {
    let steps = (rspec.t_max / rspec.dt).round() as usize;
    horizon_check(rspec, f, s, steps)?;
    for sl in f.slices() {
        check_grid(params, sl)?;
    }
    quadrature_sum(steps, |k| {
        let tau = k as f64 * rspec.dt;
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 } * rspec.dt;
        let moved = if k == 0 {
            f.slice(0).clone()
        } else {
            shear_resample(f.slice(k), &mat_exp(params, tau))
        };
        Ok(moved.scale(w * (-rspec.lambda * tau).exp()))
    })
}

/// Relative L^2 defect of the backward equation at time s: the centered
/// s-difference of the applied semigroup plus the spectrally applied frozen
/// generator, normalized by the L^2 norm of the input.
pub fn generator_residual(
    params: &ChainParams,
    profile: &DiffusionProfile,
    s: f64,
    t: f64,
    f: &GridField,
    h_s: f64,
) -> Result<f64> {
    assert!(h_s > 0.0);
    let plus = apply_semigroup(&SemigroupSpec::new(params, profile, s + h_s, t)?, f)?;
    let minus = apply_semigroup(&SemigroupSpec::new(params, profile, s - h_s, t)?, f)?;
    let center = apply_semigroup(&SemigroupSpec::new(params, profile, s, t)?, f)?;
    let fd = plus.sub(&minus)?.scale(1.0 / (2.0 * h_s));
    let gen = apply_generator(params, &profile.eval(s), &center)?;
    let res = fd.add(&gen)?.lp_norm(2.0);
    let base = f.lp_norm(2.0);
    if base == 0.0 {
        return Ok(0.0);
    }
    Ok(res / base)
}

/// Result of a derivative-decay sweep over elapsed times.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub slope: f64,
    pub predicted: f64,
    pub points: Vec<(f64, f64)>,
}

/// Measures the sup-to-sup operator norm of
/// f -> frac-Laplacian(block j, alpha) D^beta (semigroup over tau) f
/// as the L^1 norm of its kernel, on a dilation-adapted grid per tau, and
/// fits the log-log slope against the predicted homogeneity exponent.
pub fn derivative_decay_probe(
    params: &ChainParams,
    profile: &DiffusionProfile,
    j: usize,
    alpha: f64,
    beta: &[usize],
    taus: &[f64],
    pts_per_axis: usize,
    span: f64,
) -> Result<ProbeReport> {
    let n = params.n();
    let d = params.d();
    let nd = params.dim();
    if j >= n || beta.len() != nd || alpha < 0.0 || alpha > 2.0 {
        return Err(Error::InvalidParams("bad probe configuration".into()));
    }
    let (lo, hi) = taus
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &t| (l.min(t), h.max(t)));
    if !(lo > 0.0) || hi / lo < 10.0 {
        return Err(Error::DegenerateFit(
            "time sweep must span at least one decade".into(),
        ));
    }

    let mut points = Vec::with_capacity(taus.len());
    for &tau in taus {
        let raw = raw_covariance(params, profile, 0.0, tau)?;
        // box adapted to the kernel's anisotropic width
        let half: Vec<f64> = (0..n)
            .map(|b| span * tau.sqrt().powi(params.block_exponent(b)))
            .collect();
        let grid = Arc::new(Grid::new(params, half, vec![pts_per_axis; n])?);
        let et = mat_exp(params, tau).into_matrix();
        let dv = grid.cell_volume();
        let mut hat = GridField::zeros(grid.clone(), Domain::Frequency);
        let g = grid.clone();
        let beta_own = beta.to_vec();
        let raw_ref = &raw;
        hat.values_mut()
            .par_iter_mut()
            .enumerate()
            .for_each_init(
                || (vec![0.0f64; nd], vec![0.0f64; nd]),
                |(xi, eta), (i, v)| {
                    g.freqs_of(i, xi);
                    // output-side frequency after the shear
                    for r in 0..nd {
                        eta[r] = (0..nd).map(|c| et[(c, r)] * xi[c]).sum();
                    }
                    let q: f64 = {
                        let mut acc = 0.0;
                        for r in 0..nd {
                            for c in 0..nd {
                                acc += xi[r] * raw_ref[(r, c)] * xi[c];
                            }
                        }
                        acc
                    };
                    let frac = {
                        let r2: f64 = eta[j * d..(j + 1) * d].iter().map(|w| w * w).sum();
                        if alpha == 0.0 {
                            1.0
                        } else {
                            r2.powf(alpha / 2.0)
                        }
                    };
                    let mut amp = Complex::new(frac * (-0.5 * q).exp() / dv, 0.0);
                    for (axis, &order) in beta_own.iter().enumerate() {
                        for _ in 0..order {
                            amp *= Complex::new(0.0, eta[axis]);
                        }
                    }
                    *v = amp;
                },
            );
        let kernel = hat.to_physical();
        points.push((tau, kernel.lp_norm(1.0)));
    }

    // least-squares slope of log norm against log tau
    let m = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(t, v) in &points {
        if v <= 0.0 {
            return Err(Error::DegenerateFit("kernel norm vanished".into()));
        }
        let (x, y) = (t.ln(), v.ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let beta_weight: f64 = beta
        .iter()
        .enumerate()
        .map(|(axis, &o)| o as f64 * params.block_exponent(axis / d) as f64)
        .sum();
    let predicted = -(beta_weight + params.block_exponent(j) as f64 * alpha) / 2.0;
    Ok(ProbeReport {
        slope,
        predicted,
        points,
    })
}

/// Space-time data of the form Re sum_m e^{i omega_m t} psi_m(x),
/// evaluable at arbitrary times.
#[derive(Debug, Clone)]
pub struct TimeHarmonicField {
    omegas: Vec<f64>,
    comps: Vec<GridField>,
}

impl TimeHarmonicField {
    pub fn new(omegas: Vec<f64>, comps: Vec<GridField>) -> Result<Self> {
        if omegas.len() != comps.len() || comps.is_empty() {
            return Err(Error::InvalidParams(
                "need one spatial component per frequency".into(),
            ));
        }
        let g0 = comps[0].grid().clone();
        if comps.iter().any(|c| c.grid().as_ref() != g0.as_ref()) {
            return Err(Error::GridMismatch("components on different grids".into()));
        }
        Ok(Self { omegas, comps })
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn components(&self) -> &[GridField] {
        &self.comps
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.comps[0].grid()
    }

    /// The real spatial slice at time t.
    pub fn slice(&self, t: f64) -> GridField {
        let mut out = GridField::zeros(self.grid().clone(), Domain::Physical);
        for (w, c) in self.omegas.iter().zip(&self.comps) {
            let phase = Complex::new(0.0, w * t).exp();
            for (o, v) in out.values_mut().iter_mut().zip(c.values()) {
                *o += Complex::new((v * phase).re, 0.0);
            }
        }
        out
    }

    pub fn sample(&self, t0: f64, dt: f64, len: usize) -> Result<SpaceTimeField> {
        let slices = (0..len)
            .into_par_iter()
            .map(|k| self.slice(t0 + k as f64 * dt))
            .collect();
        SpaceTimeField::new(t0, dt, slices)
    }
}

/// Applies the lambda-resolvent to every harmonic component of a
/// time-harmonic input under a constant-coefficient profile, where the
/// window depends only on the elapsed time; the s-dependence then stays
/// harmonic and space-time norms reduce to sums over components.
pub fn resolvent_harmonic(
    params: &ChainParams,
    profile: &DiffusionProfile,
    rspec: &ResolventSpec,
    f: &TimeHarmonicField,
) -> Result<TimeHarmonicField> {
    if !profile.is_constant() {
        return Err(Error::InvalidParams(
            "harmonic reduction needs a constant-in-time profile".into(),
        ));
    }
    let steps = (rspec.t_max / rspec.dt).round() as usize;
    let mut outs = Vec::with_capacity(f.comps.len());
    for (w, c) in f.omegas.iter().zip(&f.comps) {
        let u = quadrature_sum(steps, |k| {
            let tau = k as f64 * rspec.dt;
            let wt = if k == 0 || k == steps { 0.5 } else { 1.0 } * rspec.dt;
            let spec = SemigroupSpec::new(params, profile, 0.0, tau)?;
            let applied = apply_semigroup(&spec, c)?;
            let phase = Complex::new(-rspec.lambda * tau, w * tau).exp() * wt;
            Ok(applied.zip_with(&applied, move |a, _| a * phase).unwrap())
        })?;
        outs.push(u);
    }
    TimeHarmonicField::new(f.omegas.clone(), outs)
}

/// Same harmonic reduction for the pure-transport solve.
pub fn transport_harmonic(
    params: &ChainParams,
    rspec: &ResolventSpec,
    f: &TimeHarmonicField,
) -> Result<TimeHarmonicField> {
    let steps = (rspec.t_max / rspec.dt).round() as usize;
    let mut outs = Vec::with_capacity(f.comps.len());
    for (w, c) in f.omegas.iter().zip(&f.comps) {
        let u = quadrature_sum(steps, |k| {
            let tau = k as f64 * rspec.dt;
            let wt = if k == 0 || k == steps { 0.5 } else { 1.0 } * rspec.dt;
            let moved = if k == 0 {
                c.clone()
            } else {
                shear_resample(c, &mat_exp(params, tau))
            };
            let phase = Complex::new(-rspec.lambda * tau, w * tau).exp() * wt;
            Ok(moved.zip_with(&moved, move |a, _| a * phase).unwrap())
        })?;
        outs.push(u);
    }
    TimeHarmonicField::new(f.omegas.clone(), outs)
}

/// Space-time L^2 norm over one period of a time-harmonic field with
/// distinct frequencies: orthogonality reduces it to the component norms;
/// the period factor is dropped (it cancels in every ratio we report).
pub fn harmonic_l2(f: &TimeHarmonicField) -> f64 {
    f.comps
        .iter()
        .map(|c| {
            let n = c.lp_norm(2.0);
            0.5 * n * n
        })
        .sum::<f64>()
        .sqrt()
}

/// Component-wise fractional Laplacian of a time-harmonic field.
pub fn harmonic_frac_laplacian(f: &TimeHarmonicField, block: usize, alpha: f64) -> TimeHarmonicField {
    TimeHarmonicField {
        omegas: f.omegas.clone(),
        comps: f
            .comps
            .iter()
            .map(|c| frac_laplacian(c, block, alpha))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::random_bandlimited;
    use crate::gaussian::sample_exact;
    use approx::assert_abs_diff_eq;

    fn setup(m: usize) -> (ChainParams, DiffusionProfile, Arc<Grid>) {
        let p = ChainParams::new(2, 1, 2.0).unwrap();
        let prof = DiffusionProfile::constant_scalar(&p, 0.5).unwrap();
        let g = Arc::new(Grid::new(&p, vec![8.0, 8.0], vec![m, m]).unwrap());
        (p, prof, g)
    }

    #[test]
    fn constants_are_fixed_points() {
        let (p, prof, g) = setup(64);
        let c = GridField::from_fn(g.clone(), |_| 3.25);
        let spec = SemigroupSpec::new(&p, &prof, 0.0, 0.8).unwrap();
        for out in [apply_semigroup(&spec, &c).unwrap(), apply_adjoint(&spec, &c).unwrap()] {
            let err = out.sub(&c).unwrap().lp_norm(f64::INFINITY);
            assert!(err < 1e-10);
        }
    }

    #[test]
    fn zero_elapsed_time_is_identity() {
        let (p, prof, g) = setup(64);
        let f = random_bandlimited(&g, 1, 0.3, 0.5);
        let spec = SemigroupSpec::new(&p, &prof, 0.5, 0.5).unwrap();
        assert_eq!(apply_semigroup(&spec, &f).unwrap().values(), f.values());
        assert_eq!(apply_adjoint(&spec, &f).unwrap().values(), f.values());
    }

    #[test]
    fn monte_carlo_oracle() {
        let (p, prof, g) = setup(256);
        let pi = std::f64::consts::PI;
        // explicit low-mode test function, evaluable off the lattice
        let func = move |x: &[f64]| {
            (pi / 8.0 * x[0]).cos() + 0.5 * (pi / 4.0 * x[1]).sin()
                - 0.3 * (pi / 8.0 * (x[0] + x[1])).cos()
        };
        let f = GridField::from_fn(g.clone(), func);
        let (s, t) = (0.0, 0.5);
        let spec = SemigroupSpec::new(&p, &prof, s, t).unwrap();
        let out = apply_semigroup(&spec, &f).unwrap();

        let draws = sample_exact(&p, &prof, s, t, &[0.0, 0.0], 100_000, 2024).unwrap();
        let flow = mat_exp(&p, t - s).into_matrix();
        for probe in 0..16 {
            let i0 = (probe % 4) * 64 + 13;
            let i1 = (probe / 4) * 64 + 41;
            let x = [g.coord(0, i0), g.coord(1, i1)];
            let moved = [
                flow[(0, 0)] * x[0] + flow[(0, 1)] * x[1],
                flow[(1, 0)] * x[0] + flow[(1, 1)] * x[1],
            ];
            let vals: Vec<f64> = draws
                .iter()
                .map(|z| func(&[moved[0] + z[0], moved[1] + z[1]]))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (vals.len() - 1) as f64;
            let se = (var / vals.len() as f64).sqrt();
            let got = out.values()[g.flat_index(&[i0, i1])].re;
            assert!(
                (got - mean).abs() <= 3.0 * se + 1e-4,
                "probe {probe}: {got} vs {mean} +- {se}"
            );
        }
    }

    #[test]
    fn adjoint_duality() {
        let (p, prof, g) = setup(256);
        let spec = SemigroupSpec::new(&p, &prof, 0.0, 0.7).unwrap();
        let dv = g.cell_volume();
        for seed in 0..5 {
            let f = random_bandlimited(&g, 10 + seed, 0.03, 1.0);
            let gfun = random_bandlimited(&g, 90 + seed, 0.03, 1.0);
            let tf = apply_semigroup(&spec, &f).unwrap();
            let tg = apply_adjoint(&spec, &gfun).unwrap();
            let lhs: f64 = gfun
                .values()
                .iter()
                .zip(tf.values())
                .map(|(a, b)| a.re * b.re)
                .sum::<f64>()
                * dv;
            let rhs: f64 = tg
                .values()
                .iter()
                .zip(f.values())
                .map(|(a, b)| a.re * b.re)
                .sum::<f64>()
                * dv;
            let bound = 1e-6 * f.lp_norm(2.0) * gfun.lp_norm(2.0);
            assert!((lhs - rhs).abs() <= bound, "gap {} bound {bound}", (lhs - rhs).abs());
        }
    }

    #[test]
    fn chapman_kolmogorov_commensurate() {
        // integer elapsed times on an equal-spacing box keep every shear
        // displacement on the lattice, so the composition law is exact
        let (p, prof, g) = setup(256);
        let f = random_bandlimited(&g, 5, 0.05, 1.0);
        let one = apply_semigroup(&SemigroupSpec::new(&p, &prof, 0.0, 2.0).unwrap(), &f).unwrap();
        let inner = apply_semigroup(&SemigroupSpec::new(&p, &prof, 1.0, 2.0).unwrap(), &f).unwrap();
        let two = apply_semigroup(&SemigroupSpec::new(&p, &prof, 0.0, 1.0).unwrap(), &inner).unwrap();
        let err = one.sub(&two).unwrap().lp_norm(f64::INFINITY);
        let scale = f.lp_norm(f64::INFINITY);
        assert!(err < 1e-10 * scale, "gap {}", err / scale);
    }

    #[test]
    fn chapman_kolmogorov_localized() {
        // data decaying before the box boundary: the wrap branches of the
        // two paths agree there, leaving only interpolation error
        let (p, prof, g) = setup(256);
        let f = GridField::from_fn(g.clone(), |x| {
            (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp() * (x[0] + 0.5 * x[1]).cos()
        });
        let one = apply_semigroup(&SemigroupSpec::new(&p, &prof, 0.0, 0.7).unwrap(), &f).unwrap();
        let inner = apply_semigroup(&SemigroupSpec::new(&p, &prof, 0.3, 0.7).unwrap(), &f).unwrap();
        let two = apply_semigroup(&SemigroupSpec::new(&p, &prof, 0.0, 0.3).unwrap(), &inner).unwrap();
        let err = one.sub(&two).unwrap().lp_norm(f64::INFINITY);
        let scale = f.lp_norm(f64::INFINITY);
        assert!(err < 1e-4 * scale, "gap {}", err / scale);
    }

    #[test]
    fn sup_contraction_and_mass() {
        let (p, prof, g) = setup(256);
        let f = random_bandlimited(&g, 8, 0.05, 1.0);
        let spec = SemigroupSpec::new(&p, &prof, 0.0, 0.6).unwrap();
        let out = apply_semigroup(&spec, &f).unwrap();
        let (fmin, fmax) = f
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v.re), hi.max(v.re))
            });
        let sup = f.lp_norm(f64::INFINITY);
        for v in out.values() {
            assert!(v.re >= fmin - 1e-6 * sup && v.re <= fmax + 1e-6 * sup);
        }
        let mass_in: f64 = f.values().iter().map(|v| v.re).sum();
        let mass_out: f64 = out.values().iter().map(|v| v.re).sum();
        assert!((mass_in - mass_out).abs() <= 1e-8 * mass_in.abs().max(1.0));
    }

    #[test]
    fn resolvent_constant_in_space() {
        let (p, prof, g) = setup(64);
        // f(t, x) = e^{-t}, lambda = 0: the integral is exactly 1
        let rspec = ResolventSpec::with_short_horizon(0.0, 16.0, 0.05).unwrap();
        let slices: Vec<GridField> = (0..=320)
            .map(|k| GridField::from_fn(g.clone(), move |_| (-(k as f64) * 0.05f64).exp()))
            .collect();
        let f = SpaceTimeField::new(0.0, 0.05, slices).unwrap();
        let u = resolvent(&p, &prof, &rspec, &f, 0.0).unwrap();
        for v in u.values() {
            assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-3);
        }

        // f = 1, lambda = 1: again exactly 1
        let rspec = ResolventSpec::new(1.0, 16.0, 0.05).unwrap();
        let ones: Vec<GridField> = (0..=320)
            .map(|_| GridField::from_fn(g.clone(), |_| 1.0))
            .collect();
        let f = SpaceTimeField::new(0.0, 0.05, ones).unwrap();
        let u = resolvent(&p, &prof, &rspec, &f, 0.0).unwrap();
        for v in u.values() {
            assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-3);
        }
    }

    #[test]
    fn resolvent_rejects_short_horizon() {
        let (p, prof, g) = setup(64);
        assert!(ResolventSpec::new(1.0, 5.0, 0.05).is_err());
        let rspec = ResolventSpec::with_short_horizon(0.0, 2.0, 0.1).unwrap();
        let ones: Vec<GridField> = (0..=20)
            .map(|_| GridField::from_fn(g.clone(), |_| 1.0))
            .collect();
        let f = SpaceTimeField::new(0.0, 0.1, ones).unwrap();
        // the override allows the run even though the tail is order one
        assert!(resolvent(&p, &prof, &rspec, &f, 0.0).is_ok());
        let mut strict = rspec.clone();
        strict.allow_short_horizon = false;
        assert!(matches!(
            resolvent(&p, &prof, &strict, &f, 0.0),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn transport_constant_in_space() {
        let (p, _, g) = setup(64);
        let rspec = ResolventSpec::with_short_horizon(0.0, 16.0, 0.05).unwrap();
        let s0 = 0.3;
        let slices: Vec<GridField> = (0..=320)
            .map(|k| {
                let t = s0 + k as f64 * 0.05;
                GridField::from_fn(g.clone(), move |_| (-t).exp())
            })
            .collect();
        let f = SpaceTimeField::new(s0, 0.05, slices).unwrap();
        let u = transport_solve(&p, &rspec, &f, s0).unwrap();
        for v in u.values() {
            assert_abs_diff_eq!(v.re, (-s0).exp(), epsilon = 1e-3);
        }
    }

    #[test]
    fn transport_last_block_decouples() {
        // f depending only on the last block is invariant under the shear,
        // so u = f / lambda for time-independent f
        let (p, _, g) = setup(64);
        let rspec = ResolventSpec::new(1.0, 16.0, 0.05).unwrap();
        let base = GridField::from_fn(g.clone(), |x| (std::f64::consts::PI / 8.0 * x[1]).cos());
        let slices: Vec<GridField> = (0..=320).map(|_| base.clone()).collect();
        let f = SpaceTimeField::new(0.0, 0.05, slices).unwrap();
        let u = transport_solve(&p, &rspec, &f, 0.0).unwrap();
        let err = u.sub(&base).unwrap().lp_norm(f64::INFINITY);
        assert!(err < 1e-3, "gap {err}");
    }

    #[test]
    fn transport_matches_vanishing_diffusion() {
        let p = ChainParams::new(2, 1, 10_000.0).unwrap();
        let prof = DiffusionProfile::constant_scalar(&p, 1e-4).unwrap();
        let g = Arc::new(Grid::new(&p, vec![8.0, 8.0], vec![128, 128]).unwrap());
        let rspec = ResolventSpec::new(1.0, 14.0, 0.05).unwrap();
        let base = random_bandlimited(&g, 77, 0.05, 1.0);
        let slices: Vec<GridField> = (0..=280).map(|_| base.clone()).collect();
        let f = SpaceTimeField::new(0.0, 0.05, slices).unwrap();
        let u_diff = resolvent(&p, &prof, &rspec, &f, 0.0).unwrap();
        let u_tran = transport_solve(&p, &rspec, &f, 0.0).unwrap();
        let gap = u_diff.sub(&u_tran).unwrap().lp_norm(2.0);
        assert!(gap < 0.01 * u_tran.lp_norm(2.0), "gap {}", gap / u_tran.lp_norm(2.0));
    }

    #[test]
    fn generator_residual_constant_input() {
        let (p, prof, g) = setup(64);
        let c = GridField::from_fn(g.clone(), |_| 2.0);
        let r = generator_residual(&p, &prof, 0.2, 1.2, &c, 1e-3).unwrap();
        assert!(r < 1e-12);
    }

    #[test]
    fn generator_residual_second_order_in_stencil() {
        // elapsed time 1 with matched spacings keeps every sheared mode on
        // the lattice, so the finite-difference error dominates
        let (p, prof, g) = setup(256);
        let f = random_bandlimited(&g, 3, 0.02, 1.0);
        let r1 = generator_residual(&p, &prof, 0.0, 1.0, &f, 1e-3).unwrap();
        let r2 = generator_residual(&p, &prof, 0.0, 1.0, &f, 5e-4).unwrap();
        assert!(r1 < 1e-3, "residual {r1}");
        let ratio = r1 / r2;
        assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    }

    #[test]
    fn probe_recovers_homogeneity_exponents() {
        let (p, prof, _) = setup(64);
        let taus: Vec<f64> = (0..7).map(|k| 0.1 * 10f64.powf(k as f64 / 3.0)).collect();
        // first derivative in the diffusive block: slope -1/2
        let rep = derivative_decay_probe(&p, &prof, 1, 0.0, &[0, 1], &taus, 128, 8.0).unwrap();
        assert_abs_diff_eq!(rep.predicted, -0.5);
        assert!((rep.slope - rep.predicted).abs() < 0.07, "slope {}", rep.slope);
        // fractional order 2/3 in the degenerate block: slope -1
        let rep = derivative_decay_probe(&p, &prof, 0, 2.0 / 3.0, &[0, 0], &taus, 128, 8.0).unwrap();
        assert_abs_diff_eq!(rep.predicted, -1.0);
        assert!((rep.slope - rep.predicted).abs() < 0.07, "slope {}", rep.slope);
    }

    #[test]
    fn probe_needs_a_decade() {
        let (p, prof, _) = setup(64);
        let taus = vec![0.5, 1.0, 2.0];
        assert!(derivative_decay_probe(&p, &prof, 0, 1.0, &[0, 0], &taus, 64, 8.0).is_err());
    }

    #[test]
    fn harmonic_field_round_trip() {
        let (_, _, g) = setup(64);
        let c1 = random_bandlimited(&g, 1, 0.2, 0.5);
        let c2 = random_bandlimited(&g, 2, 0.2, 0.5);
        let thf = TimeHarmonicField::new(vec![1.0, 2.0], vec![c1.clone(), c2.clone()]).unwrap();
        let got = thf.slice(0.4);
        let want = c1
            .scale((0.4f64).cos())
            .add(&c2.scale((0.8f64).cos()))
            .unwrap();
        let err = got.sub(&want).unwrap().lp_norm(f64::INFINITY);
        assert!(err < 1e-12 * want.lp_norm(f64::INFINITY).max(1.0));
        let stf = thf.sample(0.0, 0.1, 5).unwrap();
        assert_eq!(stf.len(), 5);
    }

    #[test]
    fn harmonic_resolvent_matches_slicewise() {
        let (p, prof, g) = setup(64);
        let comp = random_bandlimited(&g, 6, 0.2, 1.0);
        let thf = TimeHarmonicField::new(vec![1.5], vec![comp]).unwrap();
        let rspec = ResolventSpec::new(1.0, 14.0, 0.05).unwrap();
        let uh = resolvent_harmonic(&p, &prof, &rspec, &thf).unwrap();
        // compare against the direct sampled resolvent at s = 0
        let f = thf.sample(0.0, 0.05, 281).unwrap();
        let u0 = resolvent(&p, &prof, &rspec, &f, 0.0).unwrap();
        let err = uh.slice(0.0).sub(&u0).unwrap().lp_norm(2.0);
        assert!(err < 1e-9 * u0.lp_norm(2.0).max(1e-12), "gap {err}");
    }
}
