//! Maximal-regularity checks for the damped resolvent: gain ratios per
//! block, the discrete equation residual, the scaling identity, and a
//! negative control with a deliberately mis-scaled exponent.

use std::sync::Arc;

use super::fields::{
    band_project, band_project_field, harmonic_mode_field, harmonic_white_field, ball_oscillation,
    refined_grid, rescaled_grid, upsample_harmonic,
};
use super::{CheckRecord, ProfileTag, Scenario, Suite, SuiteOutput, SuiteReport};
use crate::error::Result;
use crate::evolution::{
    apply_generator, harmonic_frac_laplacian, harmonic_l2, resolvent, resolvent_harmonic,
    ResolventSpec, TimeHarmonicField,
};
use crate::field::{frac_laplacian, Grid};
use num_complex::Complex;

fn base_grid(sc: &Scenario) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::new(
        &sc.params,
        vec![sc.half_len; sc.params.n()],
        vec![sc.pts; sc.params.n()],
    )?))
}

/// Fractional order gained on block j (1-based): Delta^{1/(1+2(n-j))}.
fn gain_order(n: usize, j: usize) -> f64 {
    2.0 / (1.0 + 2.0 * (n - j) as f64)
}

/// Quadrature horizon by total dimension; see the transport suite for the
/// shear-tilt rationale behind the shorter high-dimensional horizon.
fn horizon(nd: usize) -> (f64, f64) {
    if nd <= 2 {
        (0.15, 10.5)
    } else {
        (0.3, 4.5)
    }
}

/// Per-axis mode caps keeping tilted frequencies resolvable; the diffusive
/// block additionally enjoys Gaussian damping, so it gets the larger cap.
fn mode_caps(params: &crate::chain::ChainParams, pts: usize) -> Vec<i64> {
    let n = params.n();
    let nd = params.dim();
    let low = if nd <= 2 { 2 } else { 1 };
    let top = if pts >= 48 { 4 } else { 2 };
    let mut caps = Vec::with_capacity(nd);
    for b in 0..n {
        for _ in 0..params.d() {
            caps.push(if b + 1 == n { top } else { low });
        }
    }
    caps
}

/// Max over the ensemble of || Delta^{gamma_j} u ||_2 / || f ||_2 per block,
/// via the harmonic reduction (constant profiles). A refinement rerun passes
/// the finer grid in `up`: the data is still drawn on the base grid and
/// transferred by exact trigonometric interpolation, so both runs see the
/// identical function.
fn ratio_sweep_harmonic(
    sc: &Scenario,
    grid: &Arc<Grid>,
    up: Option<&Arc<Grid>>,
    rspec: &ResolventSpec,
) -> Result<Vec<f64>> {
    let params = sc.params;
    let profile = sc.profile()?;
    let n = params.n();
    let stride = vec![1i64; params.dim()];
    let caps = mode_caps(&params, sc.pts);
    let mut maxes = vec![0.0f64; n];
    for i in 0..sc.ensemble {
        let mut f = harmonic_mode_field(grid, &stride, &caps, 6, 2, 0.7, sc.seed + 777 * i as u64, true)?;
        if let Some(target) = up {
            f = upsample_harmonic(&f, target)?;
        }
        let fnorm = harmonic_l2(&f);
        if fnorm < 1e-12 {
            continue;
        }
        // measure on a fixed frequency window (half the base Nyquist of the
        // diffusive axes) so refinement reruns compare the same functional
        let u = band_project(&resolvent_harmonic(&params, &profile, rspec, &f)?, sc.pts as i64 / 4)?;
        for j in 1..=n {
            let g = harmonic_l2(&harmonic_frac_laplacian(&u, j - 1, gain_order(n, j)));
            maxes[j - 1] = maxes[j - 1].max(g / fnorm);
        }
    }
    Ok(maxes)
}

/// Same sweep through the time-stepping resolvent, sampling the solution at
/// several phases of the period; used when the profile is time-dependent.
fn ratio_sweep_direct(
    sc: &Scenario,
    grid: &Arc<Grid>,
    up: Option<&Arc<Grid>>,
    rspec: &ResolventSpec,
) -> Result<Vec<f64>> {
    let params = sc.params;
    let profile = sc.profile()?;
    let n = params.n();
    let stride = vec![1i64; params.dim()];
    let caps = mode_caps(&params, sc.pts);
    let omega0 = 0.7;
    let steps = (rspec.t_max / rspec.dt).round() as usize;
    let phases = 6usize;
    let period = std::f64::consts::TAU / omega0;
    let mut maxes = vec![0.0f64; n];
    for i in 0..4.min(sc.ensemble) {
        let mut f = harmonic_mode_field(grid, &stride, &caps, 6, 2, omega0, sc.seed + 777 * i as u64, true)?;
        if let Some(target) = up {
            f = upsample_harmonic(&f, target)?;
        }
        let fnorm = harmonic_l2(&f);
        if fnorm < 1e-12 {
            continue;
        }
        let mut acc = vec![0.0f64; n];
        for p in 0..phases {
            let s = period * p as f64 / phases as f64;
            let sampled = f.sample(s, rspec.dt, steps + 1)?;
            let u = band_project_field(&resolvent(&params, &profile, rspec, &sampled, s)?, sc.pts as i64 / 4);
            for j in 1..=n {
                let g = frac_laplacian(&u, j - 1, gain_order(n, j)).lp_norm(2.0);
                acc[j - 1] += g * g;
            }
        }
        for j in 0..n {
            maxes[j] = maxes[j].max((acc[j] / phases as f64).sqrt() / fnorm);
        }
    }
    Ok(maxes)
}

pub fn suite_maxreg(sc: &Scenario) -> Result<SuiteOutput> {
    let params = sc.params;
    let profile = sc.profile()?;
    let n = params.n();
    let nd = params.dim();
    let lambda = sc.lambda.max(0.5);
    let constant = sc.profile_tag == ProfileTag::Constant;
    let mut checks = Vec::new();

    let grid = base_grid(sc)?;
    let (dt, t_max) = horizon(nd);
    let rspec = ResolventSpec::with_short_horizon(lambda, t_max, dt)?;

    let sweep = |up: Option<&Arc<Grid>>| -> Result<Vec<f64>> {
        if constant {
            ratio_sweep_harmonic(sc, &grid, up, &rspec)
        } else {
            ratio_sweep_direct(sc, &grid, up, &rspec)
        }
    };
    let base = sweep(None)?;
    let fine = if sc.refine {
        Some(sweep(Some(&refined_grid(&grid)?))?)
    } else {
        None
    };
    for j in 1..=n {
        let r0 = base[j - 1];
        let name = format!("gain_ratio_j{j}");
        match &fine {
            Some(f) => {
                let r1 = f[j - 1];
                let drift = (r1 - r0).abs() / r0.max(1e-300);
                checks.push(CheckRecord::gated(
                    &name,
                    "Theorem 1.1",
                    vec![r0, r1, drift],
                    r0.is_finite() && drift <= sc.tol_drift,
                    "ensemble max gain ratio at base and refined resolution, drift",
                ));
            }
            None => checks.push(CheckRecord::gated(
                &name,
                "Theorem 1.1",
                vec![r0],
                r0.is_finite(),
                "ensemble max gain ratio; rerun with refine for the drift gate",
            )),
        }
    }

    // gain ratios shrink as the damping grows
    if constant {
        let weak = ResolventSpec::with_short_horizon(0.0, t_max, dt)?;
        let undamped = ratio_sweep_harmonic(sc, &grid, None, &weak)?;
        let mono = base.iter().zip(&undamped).all(|(a, b)| *a <= b * 1.1);
        checks.push(CheckRecord::gated(
            "damping_monotonicity",
            "Theorem 1.1",
            base.iter().chain(undamped.iter()).copied().collect(),
            mono,
            "per-block ratios at lambda vs the truncated lambda = 0 run",
        ));
    } else {
        checks.push(CheckRecord::recorded(
            "damping_monotonicity",
            "Theorem 1.1",
            vec![],
            "skipped: needs a constant-in-time profile",
        ));
    }

    // discrete residual of the resolvent equation; the ensemble lives in the
    // diffusive block so every quadrature shear stays on the lattice and the
    // measured defect is pure time-quadrature error
    if constant {
        let mut stride = vec![0i64; nd];
        for a in (n - 1) * params.d()..nd {
            stride[a] = 1;
        }
        let a_mat = profile.eval(0.0);
        let caps = vec![3i64; nd];
        let residual_at = |dtr: f64| -> Result<f64> {
            let rs = ResolventSpec::with_short_horizon(lambda, 6.0, dtr)?;
            let mut worst = 0.0f64;
            for i in 0..4u64 {
                let f =
                    harmonic_mode_field(&grid, &stride, &caps, 5, 2, 0.5, sc.seed ^ (0xfade + i), false)?;
                let fnorm = harmonic_l2(&f);
                let u = resolvent_harmonic(&params, &profile, &rs, &f)?;
                let mut rcomps = Vec::new();
                for (m, (w, uc)) in u.omegas().iter().zip(u.components()).enumerate() {
                    let lu = apply_generator(&params, &a_mat, uc)?;
                    let c = Complex::new(lambda, -*w);
                    let r = uc
                        .zip_with(&lu, move |a, b| a * c - b)?
                        .sub(&f.components()[m])?;
                    rcomps.push(r);
                }
                let res = TimeHarmonicField::new(u.omegas().to_vec(), rcomps)?;
                worst = worst.max(harmonic_l2(&res) / fnorm);
            }
            Ok(worst)
        };
        let r_coarse = residual_at(0.125)?;
        if sc.refine {
            let r_fine = residual_at(0.0625)?;
            checks.push(CheckRecord::gated(
                "resolvent_residual",
                "Eq. 1.12",
                vec![r_coarse, r_fine],
                r_coarse <= sc.tol_residual && r_fine < r_coarse,
                "relative L2 residual of the resolvent equation, two time steps",
            ));
        } else {
            checks.push(CheckRecord::gated(
                "resolvent_residual",
                "Eq. 1.12",
                vec![r_coarse],
                r_coarse <= sc.tol_residual,
                "relative L2 residual of the resolvent equation",
            ));
        }
    } else {
        checks.push(CheckRecord::recorded(
            "resolvent_residual",
            "Eq. 1.12",
            vec![],
            "skipped: needs a constant-in-time profile",
        ));
    }

    // scaling identity: the rescaled run must reproduce the ball oscillation
    // of the fractional gain exactly, mode for mode
    if constant {
        for r in [0.5, 2.0] {
            let stride = vec![1i64; nd];
            let omega0 = 0.6;
            let caps = vec![2i64; nd];
            let f = harmonic_mode_field(&grid, &stride, &caps, 5, 2, omega0, sc.seed ^ 0x5c1, false)?;
            let u = resolvent_harmonic(&params, &profile, &rspec, &f)?;
            let g = harmonic_frac_laplacian(&u, n - 1, 2.0);
            let osc = ball_oscillation(&g, r, 16);

            let grid2 = rescaled_grid(&grid, r)?;
            let f2 =
                harmonic_mode_field(&grid2, &stride, &caps, 5, 2, r * r * omega0, sc.seed ^ 0x5c1, false)?;
            let rs2 = ResolventSpec::with_short_horizon(
                r * r * lambda,
                rspec.t_max / (r * r),
                rspec.dt / (r * r),
            )?;
            let u2 = resolvent_harmonic(&params, &profile, &rs2, &f2)?;
            let g2 = harmonic_frac_laplacian(&u2, n - 1, 2.0);
            let osc2 = ball_oscillation(&g2, 1.0, 16);

            let diff = (osc - osc2).abs() / osc.max(1e-300);
            checks.push(CheckRecord::gated(
                &format!("scaling_identity_r{r}"),
                "Lemma 4.2",
                vec![osc, osc2, diff],
                diff < 1e-6,
                "ball oscillation of the fractional gain, original vs rescaled run",
            ));
        }
    } else {
        checks.push(CheckRecord::recorded(
            "scaling_identity",
            "Lemma 4.2",
            vec![],
            "skipped: needs a constant-in-time profile",
        ));
    }

    // negative control: white-noise data, with refinement along the probed
    // block; the correctly scaled exponent stays put while an exponent
    // borrowed from the diffusive block must blow up
    if constant && n >= 2 {
        let block = n - 2; // 0-based block n-1
        let correct = gain_order(n, n - 1);
        let mut pts: Vec<usize> = (0..n).map(|b| grid.points_per_axis(b)).collect();
        pts[block] *= 2;
        let grid_fine = Arc::new(Grid::new(
            &params,
            vec![sc.half_len; n],
            pts,
        )?);
        let control = |g: &Arc<Grid>| -> Result<(f64, f64)> {
            let mut right = 0.0f64;
            let mut wrong = 0.0f64;
            for i in 0..6u64 {
                let f = harmonic_white_field(g, 2, 0.7, sc.seed ^ (0xc0de + i))?;
                let fnorm = harmonic_l2(&f);
                let u = resolvent_harmonic(&params, &profile, &rspec, &f)?;
                right += harmonic_l2(&harmonic_frac_laplacian(&u, block, correct)) / fnorm;
                wrong += harmonic_l2(&harmonic_frac_laplacian(&u, block, 2.0)) / fnorm;
            }
            Ok((right / 6.0, wrong / 6.0))
        };
        let (right0, wrong0) = control(&grid)?;
        let (right1, wrong1) = control(&grid_fine)?;
        let growth = wrong1 / wrong0 - 1.0;
        checks.push(CheckRecord::gated(
            "negative_control_growth",
            "Theorem 1.1",
            vec![wrong0, wrong1, growth],
            growth >= 0.5,
            "mis-scaled exponent ratio must grow under refinement of its block",
        ));
        checks.push(CheckRecord::recorded(
            "negative_control_reference",
            "Theorem 1.1",
            vec![right0, right1, right1 / right0 - 1.0],
            "correctly scaled exponent on the same data and refinement",
        ));
    } else {
        checks.push(CheckRecord::recorded(
            "negative_control_growth",
            "Theorem 1.1",
            vec![],
            "skipped: needs a constant-in-time profile",
        ));
    }

    Ok(SuiteOutput {
        report: SuiteReport::new(Suite::Maxreg, checks),
        tables: Vec::new(),
    })
}
