//! Checks of the Gaussian kernel bounds and derivative decay exponents.

use nalgebra::DMatrix;

use super::{CheckRecord, Scenario, Suite, SuiteOutput, SuiteReport};
use crate::chain::{check_ellipticity, DiffusionProfile};
use crate::error::Result;
use crate::evolution::derivative_decay_probe;
use crate::gaussian::{c0_lower_bound, covariance, kernel_bound_fit};

/// Probe tuples (block j 0-based, alpha, beta per axis) with their
/// homogeneity exponents, valid for any chain shape.
fn probe_tuples(n: usize, d: usize) -> Vec<(usize, f64, Vec<usize>)> {
    let nd = n * d;
    let e = |axis: usize| {
        let mut v = vec![0usize; nd];
        v[axis] = 1;
        v
    };
    let last = nd - 1;
    let mut out = vec![
        (n - 1, 0.0, e(last)),
        (n - 1, 1.0, vec![0; nd]),
        (0, 2.0 / (2 * n - 1) as f64, vec![0; nd]),
        (n - 1, 0.0, {
            let mut v = vec![0usize; nd];
            v[last] = 2;
            v
        }),
    ];
    out.push((0, 0.0, e(0)));
    out
}

pub fn suite_kernel(sc: &Scenario) -> Result<SuiteOutput> {
    let params = sc.params;
    let profile = sc.profile()?;
    let n = params.n();
    let d = params.d();
    let mut checks = Vec::new();
    let mut tables = Vec::new();

    // moment-matrix floor constant; closed form known for n = 2
    let c0 = c0_lower_bound(&params);
    if n == 2 {
        checks.push(CheckRecord::scored(
            "c0_closed_form",
            "Eq. HJ2",
            c0,
            (4.0 - 13.0f64.sqrt()) / 6.0,
            1e-12,
            "smallest eigenvalue of the n = 2 moment matrix",
        ));
    } else {
        checks.push(CheckRecord::gated(
            "c0_positive",
            "Eq. HJ2",
            vec![c0],
            c0 > 0.0,
            "moment matrix strictly positive definite",
        ));
    }

    // normalized covariance spectrum stays above the ellipticity floor
    let floor = 2.0 * c0 / params.kappa();
    let mut min_eig = f64::INFINITY;
    let mut violations = 0usize;
    for i in 0..40 {
        let s = -2.0 + 0.17 * i as f64;
        for tau in [0.05, 0.3, 1.0, 4.0] {
            let sigma = covariance(&params, &profile, s, s + tau, 32)?;
            let eig = nalgebra::SymmetricEigen::new(sigma).eigenvalues.min();
            min_eig = min_eig.min(eig);
            if eig < floor * (1.0 - 1e-9) {
                violations += 1;
            }
        }
    }
    checks.push(CheckRecord::gated(
        "covariance_spectrum_floor",
        "Eq. HJ2",
        vec![min_eig, floor],
        violations == 0,
        "min eigenvalue of the normalized covariance over an (s, tau) sweep",
    ));

    // Gaussian bound fits for derivative orders 0, e_n, 2 e_n
    for (tag, order) in [("0", 0usize), ("en", 1), ("2en", 2)] {
        let mut beta = vec![0usize; params.dim()];
        beta[params.dim() - 1] = order;
        let name = format!("kernel_bound_fit_beta_{tag}");
        match kernel_bound_fit(&params, &profile, &beta, (0.2, 2.0), 4000, sc.seed) {
            Ok(fit) => checks.push(CheckRecord::gated(
                &name,
                "Eq. HJ4",
                vec![fit.big_c, fit.small_c, fit.max_rel_violation],
                fit.small_c > 0.0 && fit.max_rel_violation < 1e-9,
                "fitted (C, c) envelope with no bound violations at samples",
            )),
            Err(e) => checks.push(CheckRecord::failed(&name, "Eq. HJ4", &e)),
        }
    }

    // decay-exponent probes on dilation-adapted grids
    let taus: Vec<f64> = (0..7).map(|k| 0.1 * 10f64.powf(k as f64 / 3.0)).collect();
    let pts = match n * d {
        2 => 128,
        3 => 48,
        _ => 16,
    };
    let mut csv = String::from("j,alpha,beta,tau,norm,slope,predicted\n");
    for (j, alpha, beta) in probe_tuples(n, d) {
        let btag: String = beta.iter().map(|b| b.to_string()).collect();
        let name = format!("decay_slope_j{}_a{:.3}_b{}", j + 1, alpha, btag);
        match derivative_decay_probe(&params, &profile, j, alpha, &beta, &taus, pts, 8.0) {
            Ok(rep) => {
                for (t, v) in &rep.points {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        j + 1,
                        alpha,
                        btag,
                        t,
                        v,
                        rep.slope,
                        rep.predicted
                    ));
                }
                checks.push(CheckRecord::scored(
                    &name,
                    "Eq. EK2",
                    rep.slope,
                    rep.predicted,
                    sc.tol_slope,
                    "log-log slope of the kernel L1 norm against elapsed time",
                ));
            }
            Err(e) => checks.push(CheckRecord::failed(&name, "Eq. EK2", &e)),
        }
    }
    tables.push((format!("kernel_decay_{}.csv", sc.name), csv));

    // negative control: an understated kappa must be caught
    let bad = DiffusionProfile::constant_unchecked(1.05, DMatrix::identity(d, d) * 2.0);
    let caught = bad.check_range(&crate::chain::ChainParams::new(n, d, 1.05)?, 0.0, 1.0, 4);
    checks.push(CheckRecord::gated(
        "negative_ellipticity_guard",
        "Lemma 2.1",
        vec![if caught.is_err() { 1.0 } else { 0.0 }],
        caught.is_err(),
        "profile outside the claimed ellipticity window is rejected",
    ));
    let good = check_ellipticity(&params, &profile.eval(0.3), 0.3);
    checks.push(CheckRecord::gated(
        "ellipticity_in_range",
        "Lemma 2.1",
        vec![if good.is_ok() { 1.0 } else { 0.0 }],
        good.is_ok(),
        "scenario profile satisfies its ellipticity window",
    ));

    Ok(SuiteOutput {
        report: SuiteReport::new(Suite::Kernel, checks),
        tables,
    })
}
