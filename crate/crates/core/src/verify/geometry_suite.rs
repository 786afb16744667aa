//! Checks of the quasi-metric lemmas and the maximal/sharp operators.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use super::{CheckRecord, Scenario, Suite, SuiteOutput, SuiteReport};
use crate::chain::ChainParams;
use crate::error::Result;
use crate::field::{Grid, GridField, SpaceTimeField};
use crate::geometry::{
    ball_volume, bmo_norm, ell, engulf_check, fefferman_stein_probe, maximal_fn,
    quasi_triangle_check, sharp_fn, write_triple_csv,
};

fn random_x(params: &ChainParams, rng: &mut ChaCha8Rng, span: f64) -> Vec<f64> {
    (0..params.dim()).map(|_| rng.gen_range(-span..span)).collect()
}

pub fn suite_geometry(sc: &Scenario) -> Result<SuiteOutput> {
    let params = sc.params;
    let mut checks = Vec::new();
    let mut tables = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);

    // dilation scaling of the gauge
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let t: f64 = rng.gen_range(-10.0..10.0);
        let x = random_x(&params, &mut rng, 10.0);
        let r: f64 = rng.gen_range(0.1..4.0);
        let scaled: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(a, v)| v * r.powi(params.block_exponent(a / params.d())))
            .collect();
        let lhs = ell(&params, r * r * t, &scaled);
        let rhs = r * ell(&params, t, &x);
        worst = worst.max((lhs - rhs).abs() / rhs.max(1e-300));
    }
    checks.push(CheckRecord::gated(
        "ell_scaling",
        "Lemma 2.3(i)",
        vec![worst],
        worst < 1e-12,
        "max relative defect of ell(r^2 t, Theta_r x) = r ell(t, x)",
    ));

    // subadditivity sweep
    let mut violations = 0usize;
    let mut margin = 0.0f64;
    for _ in 0..100_000 {
        let (t1, t2): (f64, f64) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let x1 = random_x(&params, &mut rng, 10.0);
        let x2 = random_x(&params, &mut rng, 10.0);
        let sum: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
        let lhs = ell(&params, t1 + t2, &sum);
        let rhs = ell(&params, t1, &x1) + ell(&params, t2, &x2);
        margin = margin.max(lhs / rhs.max(1e-300));
        if lhs > rhs * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    checks.push(CheckRecord::gated(
        "ell_subadditivity",
        "Eq. ES2",
        vec![margin, violations as f64],
        violations == 0,
        "max ratio of ell(sum) to the sum of gauges over 1e5 pairs",
    ));

    // volume exponent and the Monte Carlo cross-check
    let slope = (ball_volume(&params, 2.0) / ball_volume(&params, 1.0)).log2();
    checks.push(CheckRecord::scored(
        "ball_volume_exponent",
        "Lemma 2.3(ii)",
        slope,
        params.homogeneous_dim() as f64,
        1e-12,
        "log2 of the volume ratio at radii 2 and 1",
    ));
    let r = 1.3f64;
    let mut hits = 0u64;
    let total = 1_000_000u64;
    let d = params.d();
    let mut box_vol = 2.0 * r * r;
    for b in 0..params.n() {
        box_vol *= (2.0 * r.powi(params.block_exponent(b))).powi(d as i32);
    }
    for _ in 0..total {
        let mut inside = true;
        let _t: f64 = rng.gen_range(-r * r..r * r);
        for b in 0..params.n() {
            let rad = r.powi(params.block_exponent(b));
            let mut n2 = 0.0;
            for _ in 0..d {
                let u: f64 = rng.gen_range(-rad..rad);
                n2 += u * u;
            }
            if n2 > rad * rad {
                inside = false;
            }
        }
        if inside {
            hits += 1;
        }
    }
    let mc = box_vol * hits as f64 / total as f64;
    let exact = ball_volume(&params, r);
    checks.push(CheckRecord::gated(
        "ball_volume_monte_carlo",
        "Lemma 2.3(ii)",
        vec![mc, exact],
        (mc - exact).abs() <= 0.01 * exact,
        "rejection-sampled volume against the closed form, 1e6 samples",
    ));

    // quasi-triangle and engulfing sweeps
    let sweep = quasi_triangle_check(&params, 100_000, 10.0, sc.seed, false);
    checks.push(CheckRecord::gated(
        "quasi_triangle_factor12",
        "Eq. Tri",
        vec![sweep.max_triangle_ratio],
        sweep.max_triangle_ratio <= 1.0,
        "max LHS/RHS for the factor-12 inequality over 1e5 triples",
    ));
    checks.push(CheckRecord::gated(
        "quasi_triangle_factor3",
        "Eq. Tri",
        vec![sweep.max_symmetry_ratio],
        sweep.max_symmetry_ratio <= 1.0,
        "max LHS/RHS for the factor-3 symmetrization over 1e5 triples",
    ));
    let small = quasi_triangle_check(&params, 1000, 10.0, sc.seed, true);
    let mut csv = Vec::new();
    write_triple_csv(&small, &mut csv)?;
    tables.push((
        format!("triples_{}.csv", sc.name),
        String::from_utf8(csv).expect("csv is utf8"),
    ));

    let eng = engulf_check(&params, 10_000, 100, 5.0, 0.8, sc.seed ^ 0xabc);
    checks.push(CheckRecord::gated(
        "engulfing_factor20",
        "Eq. EL1",
        vec![eng.worst_engulf_margin, eng.engulf_violations as f64],
        eng.engulf_violations == 0,
        "boundary points of intersecting balls inside the 20r engulfing ball",
    ));
    checks.push(CheckRecord::gated(
        "sandwich_factor4",
        "Lemma 2.3(v)",
        vec![eng.worst_sandwich_margin, eng.sandwich_violations as f64],
        eng.sandwich_violations == 0,
        "one-sided balls inside the symmetrized 4r balls on the same sweep",
    ));

    // maximal / sharp operators on a small space-time sample
    let grid = Arc::new(Grid::new(&params, vec![2.0; params.n()], vec![12; params.n()])?);
    let mk = |fill: &(dyn Fn(f64, &[f64]) -> f64 + Sync)| -> Result<SpaceTimeField> {
        let slices: Vec<GridField> = (0..6)
            .map(|k| GridField::from_fn(grid.clone(), |x| fill(k as f64 * 0.25, x)))
            .collect();
        SpaceTimeField::new(0.0, 0.25, slices)
    };
    let radii = [0.2, 0.4, 0.8];
    let constant = mk(&|_, _| 2.5)?;
    let mc_const = maximal_fn(&constant, &radii)?;
    let max_err = mc_const
        .slices()
        .iter()
        .flat_map(|s| s.values().iter().map(|v| (v.re - 2.5).abs()))
        .fold(0.0f64, f64::max);
    let sharp_const = bmo_norm(&constant, &radii)?;
    checks.push(CheckRecord::gated(
        "maximal_sharp_constants",
        "Section 2.2",
        vec![max_err, sharp_const],
        max_err < 1e-12 && sharp_const < 1e-12,
        "maximal of a constant is the constant; its sharp function vanishes",
    ));
    let wavy = mk(&|t, x| (t + x[0]).sin() + 0.4 * x[x.len() - 1])?;
    let m = maximal_fn(&wavy, &radii)?;
    let s = sharp_fn(&wavy, &radii)?;
    let mut dom_ok = true;
    for k in 0..wavy.len() {
        for ((mv, fv), sv) in m
            .slice(k)
            .values()
            .iter()
            .zip(wavy.slice(k).values())
            .zip(s.slice(k).values())
        {
            dom_ok &= mv.re >= fv.norm() - 1e-12 && sv.re <= 2.0 * mv.re + 1e-12;
        }
    }
    checks.push(CheckRecord::gated(
        "maximal_dominates_sharp_bounded",
        "Section 2.2",
        vec![m.lp_norm(f64::INFINITY), s.lp_norm(f64::INFINITY)],
        dom_ok,
        "pointwise M f >= |f| and sharp <= 2 M f",
    ));

    // empirical Fefferman-Stein constant, recorded
    let mut ensemble = Vec::new();
    for j in 0..4u64 {
        let f = mk(&|t, x| {
            ((1.0 + j as f64 * 0.5) * t + x[0]).sin() * (0.7 * x[x.len() - 1] + j as f64).cos()
        })?;
        let mean: f64 = f
            .slices()
            .iter()
            .flat_map(|sl| sl.values().iter().map(|v| v.re))
            .sum::<f64>()
            / (f.len() * grid.num_points()) as f64;
        ensemble.push(SpaceTimeField::new(
            f.t0(),
            f.dt(),
            f.slices().iter().map(|sl| sl.add_scalar(-mean)).collect(),
        )?);
    }
    let fs = fefferman_stein_probe(&ensemble, 4.0, &radii)?;
    checks.push(CheckRecord::recorded(
        "fefferman_stein_constant",
        "Theorem 2.5",
        vec![fs.max_ratio],
        "empirical L4 ratio of field norm to sharp-function norm",
    ));

    Ok(SuiteOutput {
        report: SuiteReport::new(Suite::Geometry, checks),
        tables,
    })
}
