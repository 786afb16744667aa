//! The anisotropic quasi-metric, its balls and quantitative lemmas, and the
//! discrete Hardy-Littlewood maximal and sharp functions built on them.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::chain::{mat_exp, ChainParams};
use crate::error::{Error, Result};
use crate::field::SpaceTimeField;

/// A point (t, x) of the space-time on which the quasi-metric lives.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub x: Vec<f64>,
}

/// The ball {(t, x): ell(t - t0, x - e^{(t - t0)A} x0) <= r}.
#[derive(Debug, Clone)]
pub struct AnisoBall {
    pub center: SpaceTimePoint,
    pub radius: f64,
}

/// ell(t, x) = max(|t|^{1/2}, |x_1|^{1/(2n-1)}, ..., |x_n|), Euclidean norm
/// on each d-block.
pub fn ell(params: &ChainParams, t: f64, x: &[f64]) -> f64 {
    let d = params.d();
    let mut best = t.abs().sqrt();
    for b in 0..params.n() {
        let norm = x[b * d..(b + 1) * d]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        best = best.max(norm.powf(1.0 / params.block_exponent(b) as f64));
    }
    best
}

/// Forward quasi-distance from p to the ball center convention:
/// ell(t - t0, x - e^{(t - t0)A} x0).
pub fn ell_to(params: &ChainParams, from: &SpaceTimePoint, to: &SpaceTimePoint) -> f64 {
    let dt = to.t - from.t;
    let flow = mat_exp(params, dt);
    let moved = flow.apply(&from.x);
    let diff: Vec<f64> = to.x.iter().zip(&moved).map(|(a, b)| a - b).collect();
    ell(params, dt, &diff)
}

/// Symmetrized quasi-distance: the sum of both one-sided distances.
pub fn rho(params: &ChainParams, p: &SpaceTimePoint, q: &SpaceTimePoint) -> f64 {
    ell_to(params, q, p) + ell_to(params, p, q)
}

pub fn ball_contains(params: &ChainParams, ball: &AnisoBall, p: &SpaceTimePoint) -> bool {
    ell_to(params, &ball.center, p) <= ball.radius
}

fn unit_ball_volume(d: usize) -> f64 {
    // recursion omega_d = omega_{d-2} * 2 pi / d with omega_0 = 1, omega_1 = 2
    let mut vol = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        vol *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    vol
}

/// Exact Lebesgue volume of any radius-r ball: the time slab has length
/// 2 r^2 and each spatial block is a Euclidean d-ball of radius
/// r^{2(n-j)+1}, so the product is 2 omega_d^n r^{n^2 d + 2}.
pub fn ball_volume(params: &ChainParams, r: f64) -> f64 {
    assert!(r > 0.0);
    let d = params.d() as i32;
    2.0 * r.powi(2)
        * (0..params.n())
            .map(|b| unit_ball_volume(params.d()) * r.powi(params.block_exponent(b) * d))
            .product::<f64>()
}

/// One random triple with both sides of the two quasi-triangle inequalities.
#[derive(Debug, Clone)]
pub struct TripleRecord {
    pub points: [SpaceTimePoint; 3],
    /// ell(y -> x) over 3 ell(x -> y)
    pub symmetry_ratio: f64,
    /// 3 ell(x -> y) over 12 (ell(z -> x) + ell(y -> z))
    pub triangle_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct TripleSweep {
    pub seed: u64,
    pub max_symmetry_ratio: f64,
    pub max_triangle_ratio: f64,
    pub skipped_degenerate: usize,
    pub records: Vec<TripleRecord>,
}

fn random_point(params: &ChainParams, rng: &mut ChaCha8Rng, span: f64) -> SpaceTimePoint {
    let nd = params.dim();
    SpaceTimePoint {
        t: rng.gen_range(-span..span),
        x: (0..nd).map(|_| rng.gen_range(-span..span)).collect(),
    }
}

/// Random sweep of the quasi-triangle inequalities; ratios above 1 would be
/// counterexamples to the lemma.
pub fn quasi_triangle_check(
    params: &ChainParams,
    triples: usize,
    span: f64,
    seed: u64,
    keep_records: bool,
) -> TripleSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sweep = TripleSweep {
        seed,
        max_symmetry_ratio: 0.0,
        max_triangle_ratio: 0.0,
        skipped_degenerate: 0,
        records: Vec::new(),
    };
    for _ in 0..triples {
        let px = random_point(params, &mut rng, span);
        let py = random_point(params, &mut rng, span);
        let pz = random_point(params, &mut rng, span);
        let fwd = ell_to(params, &py, &px);
        let bwd = ell_to(params, &px, &py);
        let leg_a = ell_to(params, &pz, &px);
        let leg_b = ell_to(params, &py, &pz);
        if fwd == 0.0 || leg_a + leg_b == 0.0 {
            sweep.skipped_degenerate += 1;
            continue;
        }
        let symmetry_ratio = bwd / (3.0 * fwd);
        let triangle_ratio = 3.0 * fwd / (12.0 * (leg_a + leg_b));
        sweep.max_symmetry_ratio = sweep.max_symmetry_ratio.max(symmetry_ratio);
        sweep.max_triangle_ratio = sweep.max_triangle_ratio.max(triangle_ratio);
        if keep_records {
            sweep.records.push(TripleRecord {
                points: [px, py, pz],
                symmetry_ratio,
                triangle_ratio,
            });
        }
    }
    sweep
}

/// CSV dump of a triple sweep for failure forensics.
pub fn write_triple_csv(sweep: &TripleSweep, w: &mut impl std::io::Write) -> Result<()> {
    let nd = sweep
        .records
        .first()
        .map(|r| r.points[0].x.len())
        .unwrap_or(0);
    // header: per-point time and coordinates, then the two ratios
    let mut header = String::new();
    for p in 1..=3 {
        header.push_str(&format!("t{p},"));
        for a in 0..nd {
            header.push_str(&format!("x{p}_{a},"));
        }
    }
    writeln!(w, "{header}symmetry_ratio,triangle_ratio")?;
    for rec in &sweep.records {
        for p in &rec.points {
            write!(w, "{},", p.t)?;
            for c in &p.x {
                write!(w, "{c},")?;
            }
        }
        writeln!(w, "{},{}", rec.symmetry_ratio, rec.triangle_ratio)?;
    }
    Ok(())
}

/// Uniform draw from the product parametrization of a radius-r ball around
/// the origin: time slab times per-block Euclidean balls.
fn random_ball_offset(params: &ChainParams, rng: &mut ChaCha8Rng, r: f64) -> (f64, Vec<f64>) {
    let d = params.d();
    let dt = rng.gen_range(-1.0f64..1.0) * r * r;
    let mut x = Vec::with_capacity(params.dim());
    for b in 0..params.n() {
        let rad = r.powi(params.block_exponent(b));
        let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let scale = rad * rng.gen_range(0.0f64..1.0).powf(1.0 / d as f64) / norm;
        x.extend(dir.iter().map(|v| v * scale));
    }
    (dt, x)
}

#[derive(Debug, Clone)]
pub struct EngulfReport {
    pub seed: u64,
    pub pairs: usize,
    pub samples_per_pair: usize,
    pub engulf_violations: usize,
    pub sandwich_violations: usize,
    /// Largest observed ell-distance to the second center over 20 r.
    pub worst_engulf_margin: f64,
    /// Largest observed rho to the first center over 4 r.
    pub worst_sandwich_margin: f64,
}

/// Random intersecting ball pairs: boundary points of the first ball must
/// land in the 20 r ball of the second center, and within the symmetrized
/// 4 r ball of their own center (the two-sided comparison of the metrics).
pub fn engulf_check(
    params: &ChainParams,
    pairs: usize,
    samples_per_pair: usize,
    span: f64,
    r: f64,
    seed: u64,
) -> EngulfReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EngulfReport {
        seed,
        pairs,
        samples_per_pair,
        engulf_violations: 0,
        sandwich_violations: 0,
        worst_engulf_margin: 0.0,
        worst_sandwich_margin: 0.0,
    };
    for _ in 0..pairs {
        let c1 = random_point(params, &mut rng, span);
        // witness inside the first ball
        let (dtw, dxw) = random_ball_offset(params, &mut rng, r);
        let wt = c1.t + dtw;
        let moved = mat_exp(params, dtw).apply(&c1.x);
        let witness = SpaceTimePoint {
            t: wt,
            x: moved.iter().zip(&dxw).map(|(a, b)| a + b).collect(),
        };
        // second center chosen so its ball contains the witness
        let (dtc, dxc) = random_ball_offset(params, &mut rng, r);
        let shifted: Vec<f64> = witness.x.iter().zip(&dxc).map(|(a, b)| a - b).collect();
        let c2 = SpaceTimePoint {
            t: witness.t - dtc,
            x: mat_exp(params, -dtc).apply(&shifted),
        };
        debug_assert!(ell_to(params, &c2, &witness) <= r * (1.0 + 1e-9));

        for _ in 0..samples_per_pair {
            // rescale a random interior offset onto the boundary shell
            let (dt, dx) = random_ball_offset(params, &mut rng, r);
            let lam = ell(params, dt, &dx);
            if lam == 0.0 {
                continue;
            }
            let s = r / lam;
            let dt = dt * s * s;
            let dx: Vec<f64> = dx
                .iter()
                .enumerate()
                .map(|(a, v)| v * s.powi(params.block_exponent(a / params.d())))
                .collect();
            let moved = mat_exp(params, dt).apply(&c1.x);
            let p = SpaceTimePoint {
                t: c1.t + dt,
                x: moved.iter().zip(&dx).map(|(a, b)| a + b).collect(),
            };
            let to_c2 = ell_to(params, &c2, &p) / (20.0 * r);
            report.worst_engulf_margin = report.worst_engulf_margin.max(to_c2);
            if to_c2 > 1.0 {
                report.engulf_violations += 1;
            }
            let sym = rho(params, &p, &c1) / (4.0 * r);
            report.worst_sandwich_margin = report.worst_sandwich_margin.max(sym);
            if sym > 1.0 {
                report.sandwich_violations += 1;
            }
        }
    }
    report
}

/// Cells of the discrete ball around space-time grid index (slice, flat):
/// calls `visit(slice_index, flat_index)` for every cell center inside.
fn for_ball_cells(
    params: &ChainParams,
    f: &SpaceTimeField,
    slice: usize,
    flat: usize,
    r: f64,
    mut visit: impl FnMut(usize, usize),
) {
    let grid = f.slice(0).grid();
    let nd = params.dim();
    let d = params.d();
    let mut x0 = vec![0.0; nd];
    grid.coords_of(flat, &mut x0);
    let dt_steps = (r * r / f.dt()).floor() as i64;
    let mut center = vec![0.0; nd];
    let mut idx = vec![0usize; nd];
    for kdt in -dt_steps..=dt_steps {
        let k = slice as i64 + kdt;
        if k < 0 || k as usize >= f.len() {
            continue;
        }
        let tau = kdt as f64 * f.dt();
        let flow = mat_exp(params, tau).into_matrix();
        for a in 0..nd {
            center[a] = (0..nd).map(|c| flow[(a, c)] * x0[c]).sum();
        }
        // per-axis index windows around the sheared center
        let mut lo = vec![0i64; nd];
        let mut hi = vec![0i64; nd];
        for a in 0..nd {
            let b = a / d;
            let h = grid.spacing(a);
            let m = grid.points_per_axis(b) as i64;
            let rad = r.powi(params.block_exponent(b));
            let base = (center[a] + grid.half_len(b)) / h;
            let (mut l, mut u) = (
                (base - rad / h).ceil() as i64,
                (base + rad / h).floor() as i64,
            );
            if u - l + 1 >= m {
                l = 0;
                u = m - 1;
            }
            lo[a] = l;
            hi[a] = u;
        }
        // odometer over the window, wrapped periodically
        let mut cur = lo.clone();
        'outer: loop {
            let mut dx = vec![0.0; nd];
            for a in 0..nd {
                let b = a / d;
                let m = grid.points_per_axis(b) as i64;
                let wrapped = cur[a].rem_euclid(m) as usize;
                idx[a] = wrapped;
                // minimal periodic representative of the offset
                let span = 2.0 * grid.half_len(b);
                let mut delta = grid.coord(a, wrapped) - center[a];
                delta -= (delta / span).round() * span;
                dx[a] = delta;
            }
            let mut ok = true;
            for b in 0..params.n() {
                let norm2: f64 = dx[b * d..(b + 1) * d].iter().map(|v| v * v).sum();
                let rad = r.powi(params.block_exponent(b));
                if norm2 > rad * rad {
                    ok = false;
                    break;
                }
            }
            if ok {
                visit(k as usize, grid.flat_index(&idx));
            }
            // advance
            for a in (0..nd).rev() {
                cur[a] += 1;
                if cur[a] <= hi[a] {
                    continue 'outer;
                }
                cur[a] = lo[a];
            }
            break;
        }
    }
}

fn validate_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidParams("need a nonempty positive radius list".into()));
    }
    Ok(())
}

/// Discrete maximal function: per space-time cell, the largest average of
/// |f| over the balls of the given radii centered there.
pub fn maximal_fn(f: &SpaceTimeField, radii: &[f64]) -> Result<SpaceTimeField> {
    validate_radii(radii)?;
    let params = *f.slice(0).grid().params();
    let per_slice = f.slice(0).grid().num_points();
    let vals: Vec<Vec<f64>> = (0..f.len())
        .into_par_iter()
        .map(|k| {
            (0..per_slice)
                .into_par_iter()
                .map(|i| {
                    let mut best = 0.0f64;
                    for &r in radii {
                        let (mut sum, mut cnt) = (0.0, 0usize);
                        for_ball_cells(&params, f, k, i, r, |kk, ii| {
                            sum += f.slice(kk).values()[ii].norm();
                            cnt += 1;
                        });
                        if cnt > 0 {
                            best = best.max(sum / cnt as f64);
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();
    rebuild(f, vals)
}

/// Discrete sharp function: per cell, the largest mean oscillation of f
/// over the same ball family.
pub fn sharp_fn(f: &SpaceTimeField, radii: &[f64]) -> Result<SpaceTimeField> {
    validate_radii(radii)?;
    let params = *f.slice(0).grid().params();
    let per_slice = f.slice(0).grid().num_points();
    let vals: Vec<Vec<f64>> = (0..f.len())
        .into_par_iter()
        .map(|k| {
            (0..per_slice)
                .into_par_iter()
                .map(|i| {
                    let mut best = 0.0f64;
                    for &r in radii {
                        let mut cells = Vec::new();
                        for_ball_cells(&params, f, k, i, r, |kk, ii| {
                            cells.push(f.slice(kk).values()[ii].re);
                        });
                        if cells.is_empty() {
                            continue;
                        }
                        let mean = cells.iter().sum::<f64>() / cells.len() as f64;
                        let osc =
                            cells.iter().map(|v| (v - mean).abs()).sum::<f64>() / cells.len() as f64;
                        best = best.max(osc);
                    }
                    best
                })
                .collect()
        })
        .collect();
    rebuild(f, vals)
}

fn rebuild(f: &SpaceTimeField, vals: Vec<Vec<f64>>) -> Result<SpaceTimeField> {
    let grid = f.slice(0).grid().clone();
    let slices = vals
        .into_iter()
        .map(|v| {
            let mut s = crate::field::GridField::zeros(grid.clone(), crate::field::Domain::Physical);
            for (o, x) in s.values_mut().iter_mut().zip(v) {
                *o = num_complex::Complex::new(x, 0.0);
            }
            s
        })
        .collect();
    SpaceTimeField::new(f.t0(), f.dt(), slices)
}

/// Grid maximum of the sharp function.
pub fn bmo_norm(f: &SpaceTimeField, radii: &[f64]) -> Result<f64> {
    let sharp = sharp_fn(f, radii)?;
    Ok(sharp.lp_norm(f64::INFINITY))
}

#[derive(Debug, Clone)]
pub struct FeffermanSteinReport {
    pub p: f64,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

/// Empirical Fefferman-Stein constants: per mean-zero field, the ratio of
/// its L^p norm to the L^p norm of its sharp function.
pub fn fefferman_stein_probe(
    ensemble: &[SpaceTimeField],
    p: f64,
    radii: &[f64],
) -> Result<FeffermanSteinReport> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidParams("need p in (1, infinity)".into()));
    }
    let mut ratios = Vec::with_capacity(ensemble.len());
    for f in ensemble {
        let num = f.lp_norm(p);
        if num == 0.0 {
            continue;
        }
        let den = sharp_fn(f, radii)?.lp_norm(p);
        if den > 0.0 {
            ratios.push(num / den);
        }
    }
    let max_ratio = ratios.iter().cloned().fold(0.0f64, f64::max);
    Ok(FeffermanSteinReport { p, ratios, max_ratio })
}
