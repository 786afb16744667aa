//! Propagation-of-regularity checks for the pure transport resolvent.

use nalgebra::DMatrix;
use num_complex::Complex;
use std::collections::BTreeMap;
use std::sync::Arc;

use super::fields::{band_project, harmonic_mode_field, refined_grid, upsample_harmonic};
use super::{CheckRecord, Scenario, Status, Suite, SuiteOutput, SuiteReport};
use crate::error::Result;
use crate::evolution::{
    apply_generator, harmonic_frac_laplacian, harmonic_l2, transport_harmonic, ResolventSpec,
    TimeHarmonicField,
};
use crate::field::Grid;

fn base_grid(sc: &Scenario) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::new(
        &sc.params,
        vec![sc.half_len; sc.params.n()],
        vec![sc.pts; sc.params.n()],
    )?))
}

/// Quadrature horizon by total dimension: more axes mean a costlier grid
/// and a shorter horizon (shear tilt must stay resolvable, see mode_caps).
fn horizon(nd: usize) -> (f64, f64) {
    if nd <= 2 {
        (0.15, 10.5)
    } else {
        (0.3, 4.5)
    }
}

/// Per-axis mode index caps for the ratio ensembles. The shear maps a mode
/// of block b to tilted frequencies in the blocks above it, with tilt up to
/// t^(n-1-b) k_b over the horizon; the caps keep every tilted index well
/// below Nyquist so cubic resampling error cannot masquerade as ratio drift
/// under refinement.
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

type RatioTable = BTreeMap<(usize, usize, &'static str), f64>;

fn accumulate_ratios(
    sc: &Scenario,
    rspec: &ResolventSpec,
    f: &crate::evolution::TimeHarmonicField,
    table: &mut RatioTable,
) -> Result<()> {
    let params = sc.params;
    let n = params.n();
    let fnorm = harmonic_l2(f);
    if fnorm < 1e-12 {
        return Ok(());
    }
    // measure on a fixed frequency window (half the base Nyquist of the
    // diffusive axes) so refinement reruns compare the same functional
    let u = band_project(&transport_harmonic(&params, rspec, f)?, sc.pts as i64 / 4)?;
    for (ai, &alpha) in sc.alphas.iter().enumerate() {
        if alpha <= 0.0 {
            continue;
        }
        for j in 1..n {
            // fractional gain one block down from block j+1
            let lhs = harmonic_l2(&harmonic_frac_laplacian(&u, j - 1, alpha / (1.0 + alpha)));
            let next = harmonic_l2(&harmonic_frac_laplacian(&u, j, alpha));
            let rhs = next.powf(1.0 / (1.0 + alpha)) * fnorm.powf(alpha / (1.0 + alpha));
            if rhs > 1e-300 {
                let e = table.entry((j, ai, "e4")).or_insert(0.0f64);
                *e = e.max(lhs / rhs);
            }
            // chained exponents against the diffusive block
            let m = (n - j) as f64;
            let lhs = harmonic_l2(&harmonic_frac_laplacian(&u, j - 1, alpha / (1.0 + m * alpha)));
            let last = harmonic_l2(&harmonic_frac_laplacian(&u, n - 1, alpha));
            let theta = (1.0 + (m - 1.0) * alpha) / (1.0 + m * alpha);
            let rhs = last.powf(theta) * fnorm.powf(1.0 - theta);
            if rhs > 1e-300 {
                let e = table.entry((j, ai, "ev7")).or_insert(0.0f64);
                *e = e.max(lhs / rhs);
            }
        }
    }
    Ok(())
}

/// Max over the ensemble of the E4 and EV7 ratios, keyed by
/// (j 1-based, alpha index, "e4" | "ev7"). The refined run reuses the base
/// grid's data through exact trigonometric interpolation.
fn ratio_tables(
    sc: &Scenario,
    grid: &Arc<Grid>,
    fine: Option<&Arc<Grid>>,
    rspec: &ResolventSpec,
) -> Result<(RatioTable, Option<RatioTable>)> {
    let params = sc.params;
    let stride = vec![1i64; params.dim()];
    let caps = mode_caps(&params, sc.pts);
    let mut base = RatioTable::new();
    let mut refined = fine.map(|_| RatioTable::new());
    for i in 0..sc.ensemble {
        let f = harmonic_mode_field(grid, &stride, &caps, 6, 2, 0.7, sc.seed + 1000 * i as u64, true)?;
        accumulate_ratios(sc, rspec, &f, &mut base)?;
        if let (Some(fg), Some(t)) = (fine, refined.as_mut()) {
            accumulate_ratios(sc, rspec, &upsample_harmonic(&f, fg)?, t)?;
        }
    }
    Ok((base, refined))
}

pub fn suite_transport(sc: &Scenario) -> Result<SuiteOutput> {
    let params = sc.params;
    let n = params.n();
    let nd = params.dim();
    let lambda = sc.lambda.max(0.5);
    let mut checks = Vec::new();

    let grid = base_grid(sc)?;
    let (dt, t_max) = horizon(nd);
    let rspec = ResolventSpec::with_short_horizon(lambda, t_max, dt)?;

    let fine_grid = if sc.refine { Some(refined_grid(&grid)?) } else { None };
    let (base, fine) = ratio_tables(sc, &grid, fine_grid.as_ref(), &rspec)?;
    for (&(j, ai, kind), &r0) in &base {
        let alpha = sc.alphas[ai];
        let name = format!("{kind}_ratio_j{j}_a{alpha:.3}");
        let paper_ref = if kind == "e4" { "Eq. E4" } else { "Eq. EV7" };
        match &fine {
            Some(f) => {
                let r1 = f[&(j, ai, kind)];
                let drift = (r1 - r0).abs() / r0.max(1e-300);
                checks.push(CheckRecord::gated(
                    &name,
                    paper_ref,
                    vec![r0, r1, drift],
                    r0.is_finite() && drift <= sc.tol_drift,
                    "ensemble max ratio at base and refined resolution, drift",
                ));
            }
            None => checks.push(CheckRecord {
                status: if r0.is_finite() { Status::Recorded } else { Status::Fail },
                ..CheckRecord::recorded(
                    &name,
                    paper_ref,
                    vec![r0],
                    "ensemble max ratio; rerun with refine for the drift gate",
                )
            }),
        }
    }

    if sc.alphas.iter().any(|&a| a == 0.0) {
        checks.push(CheckRecord::recorded(
            "e4_ratio_alpha0",
            "Eq. E4",
            vec![],
            "alpha = 0 gives a zero fractional order on both sides; degenerate",
        ));
    }

    if n == 3 {
        // closed-form exponent of the chained estimate at alpha = 1, j = 1
        let theta = (1.0 + 1.0) / (1.0 + 2.0);
        checks.push(CheckRecord::scored(
            "ev7_exponent_arithmetic",
            "Eq. EV7",
            theta,
            2.0 / 3.0,
            1e-12,
            "(1 + (n-j-1) alpha)/(1 + (n-j) alpha) at n=3, j=1, alpha=1",
        ));
    }

    // discrete residual of the transport equation on a mode ensemble whose
    // shears stay on the frequency lattice (block-1 modes pinned for n >= 3)
    let mut stride = vec![1i64; nd];
    if n >= 3 {
        for a in 0..params.d() {
            stride[a] = 0;
        }
    }
    let residual_at = |dtr: f64| -> Result<f64> {
        let rs = ResolventSpec::with_short_horizon(lambda, 6.0, dtr)?;
        let zero = DMatrix::zeros(params.d(), params.d());
        let caps = vec![1i64; nd];
        let mut worst = 0.0f64;
        for i in 0..4u64 {
            let f = harmonic_mode_field(&grid, &stride, &caps, 5, 2, 0.5, sc.seed ^ (0xbeef + i), false)?;
            let fnorm = harmonic_l2(&f);
            let u = transport_harmonic(&params, &rs, &f)?;
            let mut rcomps = Vec::new();
            for (m, (w, uc)) in u.omegas().iter().zip(u.components()).enumerate() {
                let drift = apply_generator(&params, &zero, uc)?;
                let iw = Complex::new(-lambda, *w);
                let r = uc
                    .zip_with(&drift, move |a, b| a * iw + b)?
                    .add(&f.components()[m])?;
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
            "transport_residual",
            "Eq. Tran",
            vec![r_coarse, r_fine],
            r_coarse <= sc.tol_residual && r_fine < r_coarse,
            "relative L2 residual of the transport equation, two time steps",
        ));
    } else {
        checks.push(CheckRecord::gated(
            "transport_residual",
            "Eq. Tran",
            vec![r_coarse],
            r_coarse <= sc.tol_residual,
            "relative L2 residual of the transport equation",
        ));
    }

    Ok(SuiteOutput {
        report: SuiteReport::new(Suite::Transport, checks),
        tables: Vec::new(),
    })
}
