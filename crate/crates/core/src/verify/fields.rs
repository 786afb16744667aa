//! Test-field ensembles for the verification suites.
//!
//! Mode-sum fields are defined by integer lattice modes with seeded random
//! amplitudes and phases, so the same function is reproduced exactly on any
//! resolution of the same box; refinement studies then compare genuine
//! discretization drift instead of resampled noise.

use num_complex::Complex;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

use crate::chain::ChainParams;
use crate::error::{Error, Result};
use crate::evolution::TimeHarmonicField;
use crate::field::{Domain, Grid, GridField};
use crate::geometry::ell;

/// One real cosine mode: integer frequency index per axis, amplitude, phase.
#[derive(Debug, Clone)]
pub struct Mode {
    pub k: Vec<i64>,
    pub amp: f64,
    pub phase: f64,
}

/// Draws `count` modes with per-axis indices `stride[a] * u`,
/// u in [-kmax[a], kmax[a]], rejecting the all-zero vector. A stride of 0
/// pins that axis to frequency zero. The draw never consults the grid, so
/// the same seed yields the same function at every resolution; callers must
/// keep stride * kmax below the coarsest Nyquist index, and low enough that
/// the shear tilt accumulated over the time horizon stays resolvable.
pub fn random_modes(
    nd: usize,
    stride: &[i64],
    kmax: &[i64],
    count: usize,
    seed: u64,
) -> Vec<Mode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::with_capacity(count);
    while modes.len() < count {
        let k: Vec<i64> = (0..nd)
            .map(|a| stride[a] * rng.gen_range(-kmax[a]..=kmax[a]))
            .collect();
        if k.iter().all(|&v| v == 0) {
            continue;
        }
        let weight = 1.0 + k.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        modes.push(Mode {
            k,
            amp: rng.sample::<f64, _>(StandardNormal) / weight,
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        });
    }
    modes
}

/// Evaluates a mode sum on a grid; the function is independent of the grid
/// resolution.
pub fn mode_field(grid: &Arc<Grid>, modes: &[Mode]) -> GridField {
    let params = *grid.params();
    let d = params.d();
    let freqs: Vec<Vec<f64>> = modes
        .iter()
        .map(|m| {
            (0..params.dim())
                .map(|a| std::f64::consts::PI * m.k[a] as f64 / grid.half_len(a / d))
                .collect()
        })
        .collect();
    let modes = modes.to_vec();
    GridField::from_fn(grid.clone(), move |x| {
        modes
            .iter()
            .zip(&freqs)
            .map(|(m, f)| {
                let arg: f64 = f.iter().zip(x).map(|(fr, xi)| fr * xi).sum();
                m.amp * (arg + m.phase).cos()
            })
            .sum()
    })
}

/// Per-axis index cutoff applied to seam-windowed data.
const SEAM_BAND: i64 = 12;

/// C-infinity bump on (-1, 1), flat to all orders at the endpoints.
fn seam_bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// Smooth window vanishing to all orders at the box boundary of every
/// driven block (blocks 2..n). The shear tilts frequency content of block
/// b into block b+1, so a transported field is periodic across the block-1
/// seam but generically jumps across the driven-block seams; data windowed
/// this way keeps the transported field smooth on the torus, which is what
/// derivative-weighted norms need to be refinement-stable. The window is a
/// fixed analytic function of x / L, hence grid-independent.
pub fn seam_envelope(grid: &Grid, x: &[f64]) -> f64 {
    let d = grid.params().d();
    let mut w = 1.0;
    for (a, &xa) in x.iter().enumerate() {
        let b = a / d;
        if b >= 1 {
            w *= seam_bump(xa / grid.half_len(b));
        }
    }
    w
}

/// A time-harmonic field with mode-sum components: one complex spatial
/// profile per temporal frequency m * omega0, m = 1..=harmonics. With
/// `seam_safe` the components are multiplied by `seam_envelope`.
pub fn harmonic_mode_field(
    grid: &Arc<Grid>,
    stride: &[i64],
    kmax: &[i64],
    modes_per_comp: usize,
    harmonics: usize,
    omega0: f64,
    seed: u64,
    seam_safe: bool,
) -> Result<TimeHarmonicField> {
    let nd = grid.params().dim();
    let mut omegas = Vec::with_capacity(harmonics);
    let mut comps = Vec::with_capacity(harmonics);
    for m in 1..=harmonics {
        let re = mode_field(
            grid,
            &random_modes(nd, stride, kmax, modes_per_comp, seed ^ (m as u64 * 0x9e37)),
        );
        let im = mode_field(
            grid,
            &random_modes(nd, stride, kmax, modes_per_comp, seed ^ (m as u64 * 0x51ed + 1)),
        );
        let mut comp = re.zip_with(&im, |a, b| Complex::new(a.re, b.re))?;
        if seam_safe {
            let g = grid.clone();
            let mut x = vec![0.0; nd];
            for (i, v) in comp.values_mut().iter_mut().enumerate() {
                g.coords_of(i, &mut x);
                *v *= seam_envelope(&g, &x);
            }
            // band-limit the windowed axes at a fixed index so the function
            // (and its shear tilts) stays inside every grid's Nyquist range;
            // the window's residual seam value at this cutoff is ~1e-3
            let d = grid.params().d();
            let g = grid.clone();
            comp = comp.multiply_symbol(move |xi| {
                for (a, &f) in xi.iter().enumerate() {
                    let b = a / d;
                    if b >= 1 {
                        let k = f * g.half_len(b) / std::f64::consts::PI;
                        if k.abs() > SEAM_BAND as f64 + 0.5 {
                            return Complex::new(0.0, 0.0);
                        }
                    }
                }
                Complex::new(1.0, 0.0)
            });
        }
        omegas.push(m as f64 * omega0);
        comps.push(comp);
    }
    TimeHarmonicField::new(omegas, comps)
}

/// Transfers a field to a finer grid over the same box by Fourier
/// zero-padding, i.e. exact trigonometric interpolation. Refinement reruns
/// take their data through this path only, so the base and refined runs
/// evaluate the identical band-limited function; without it the window's
/// own spectral tail repopulates up to the new Nyquist and derivative
/// weights read that as drift.
pub fn upsample(f: &GridField, target: &Arc<Grid>) -> Result<GridField> {
    let src = f.grid();
    let nd = src.num_axes();
    for a in 0..nd {
        let b = a / src.params().d();
        if (src.half_len(b) - target.half_len(b)).abs() > 1e-12 * src.half_len(b)
            || target.dims()[a] < src.dims()[a]
        {
            return Err(Error::InvalidParams(
                "upsample target must refine the source box".into(),
            ));
        }
    }
    let hat = f.to_frequency();
    let mut out = GridField::zeros(target.clone(), Domain::Frequency);
    let scale = target.num_points() as f64 / src.num_points() as f64;
    let mut idx = vec![0usize; nd];
    let mut tgt = vec![0usize; nd];
    for (i, v) in hat.values().iter().enumerate() {
        src.multi_index(i, &mut idx);
        for a in 0..nd {
            let ns = src.dims()[a] as i64;
            let s = if (idx[a] as i64) <= ns / 2 {
                idx[a] as i64
            } else {
                idx[a] as i64 - ns
            };
            tgt[a] = if s >= 0 {
                s as usize
            } else {
                (s + target.dims()[a] as i64) as usize
            };
        }
        out.values_mut()[target.flat_index(&tgt)] = v * scale;
    }
    Ok(out.to_physical())
}

/// Projects every component onto |index| <= kcut in the diffusive (last)
/// block's axes, leaving other axes untouched. The cutoff is a fixed
/// continuum frequency, so base and refined runs of a refinement study
/// measure the same functional of the same function; content between the
/// window and the running Nyquist is where the two grids legitimately
/// disagree (resolved tail vs alias) and carries no information about the
/// estimate under test.
pub fn band_project_field(f: &GridField, kcut: i64) -> GridField {
    let grid = f.grid().clone();
    let params = grid.params().clone();
    let d = params.d();
    let n = params.n();
    let lo = (n - 1) * d;
    f.multiply_symbol(move |xi| {
        for a in lo..lo + d {
            let k = xi[a] * grid.half_len(a / d) / std::f64::consts::PI;
            if k.abs() > kcut as f64 + 0.5 {
                return Complex::new(0.0, 0.0);
            }
        }
        Complex::new(1.0, 0.0)
    })
}

/// Componentwise `band_project_field`.
pub fn band_project(f: &TimeHarmonicField, kcut: i64) -> Result<TimeHarmonicField> {
    let comps = f
        .components()
        .iter()
        .map(|c| band_project_field(c, kcut))
        .collect();
    TimeHarmonicField::new(f.omegas().to_vec(), comps)
}

/// Componentwise `upsample` of a time-harmonic field.
pub fn upsample_harmonic(f: &TimeHarmonicField, target: &Arc<Grid>) -> Result<TimeHarmonicField> {
    let comps = f
        .components()
        .iter()
        .map(|c| upsample(c, target))
        .collect::<Result<Vec<_>>>()?;
    TimeHarmonicField::new(f.omegas().to_vec(), comps)
}

/// A full-band rough harmonic field: per-cell white noise in space. Unlike
/// mode sums this roughens as the grid refines, which is what the
/// boundedness checks need (new frequency content must not grow the
/// estimate's constant).
pub fn harmonic_white_field(
    grid: &Arc<Grid>,
    harmonics: usize,
    omega0: f64,
    seed: u64,
) -> Result<TimeHarmonicField> {
    let mut omegas = Vec::with_capacity(harmonics);
    let mut comps = Vec::with_capacity(harmonics);
    for m in 1..=harmonics {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (m as u64 * 0x2545));
        let mut comp = GridField::zeros(grid.clone(), Domain::Physical);
        for v in comp.values_mut() {
            *v = Complex::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
        }
        // strip the spatial zero mode so lambda = 0 integrals converge
        let n = comp.values().len() as f64;
        let mean = comp.values().iter().sum::<Complex<f64>>() / n;
        for v in comp.values_mut() {
            *v -= mean;
        }
        omegas.push(m as f64 * omega0);
        comps.push(comp);
    }
    TimeHarmonicField::new(omegas, comps)
}

/// Mean square oscillation of Re sum_m e^{i omega_m s} comp_m over the
/// anisotropic ball Q_r centered at the space-time origin, discretized with
/// `time_samples` time slices and the field's spatial lattice.
pub fn ball_oscillation(f: &TimeHarmonicField, r: f64, time_samples: usize) -> f64 {
    let grid = f.grid().clone();
    let params = *grid.params();
    let nd = params.dim();
    let mut vals = Vec::new();
    for kt in 0..time_samples {
        let s = -r * r + (2.0 * r * r) * (kt as f64 + 0.5) / time_samples as f64;
        let slice = f.slice(s);
        let mut x = vec![0.0; nd];
        for (i, v) in slice.values().iter().enumerate() {
            grid.coords_of(i, &mut x);
            if ell(&params, s, &x) <= r {
                vals.push(v.re);
            }
        }
    }
    if vals.is_empty() {
        return 0.0;
    }
    let c = vals.iter().sum::<f64>() / vals.len() as f64;
    vals.iter().map(|v| (v - c) * (v - c)).sum::<f64>() / vals.len() as f64
}

/// Grid whose half-lengths are the originals divided by the anisotropic
/// dilation factors, as used by the rescaled run of the scaling lemma.
pub fn rescaled_grid(grid: &Grid, r: f64) -> Result<Arc<Grid>> {
    let params = *grid.params();
    let half: Vec<f64> = (0..params.n())
        .map(|b| grid.half_len(b) / r.powi(params.block_exponent(b)))
        .collect();
    let pts: Vec<usize> = (0..params.n()).map(|b| grid.points_per_axis(b)).collect();
    Ok(Arc::new(Grid::new(&params, half, pts)?))
}

/// Hook for building the grid of a refinement rerun: doubles the point
/// count of the diffusive (last) block.
pub fn refined_grid(grid: &Grid) -> Result<Arc<Grid>> {
    let params = *grid.params();
    let half: Vec<f64> = (0..params.n()).map(|b| grid.half_len(b)).collect();
    let mut pts: Vec<usize> = (0..params.n()).map(|b| grid.points_per_axis(b)).collect();
    *pts.last_mut().unwrap() *= 2;
    Ok(Arc::new(Grid::new(&params, half, pts)?))
}

/// Strides that keep every quadrature-time shear displacement of a mode on
/// the frequency lattice when the time step is 1/q: block b needs its
/// indices divisible by q^(n-1-b) times (n-1-b)! compensations; for the
/// chains used here (n <= 3) this is [q, 1] and [2 q^2, q, 1].
pub fn commensurate_strides(params: &ChainParams, q: i64) -> Vec<i64> {
    let n = params.n();
    let d = params.d();
    let mut per_block = vec![1i64; n];
    for b in (0..n.saturating_sub(1)).rev() {
        per_block[b] = per_block[b + 1] * q;
    }
    if n >= 3 {
        // the t^2/2 transport term doubles the divisibility of block 1
        per_block[0] *= 2;
    }
    let mut out = Vec::with_capacity(params.dim());
    for b in 0..n {
        for _ in 0..d {
            out.push(per_block[b]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainParams;

    fn grid(pts: usize) -> Arc<Grid> {
        let params = ChainParams::new(2, 1, 2.0).unwrap();
        Arc::new(Grid::new(&params, vec![4.0, 4.0], vec![pts, pts]).unwrap())
    }

    #[test]
    fn mode_draws_respect_strides_and_caps() {
        let modes = random_modes(2, &[0, 3], &[5, 2], 40, 9);
        for m in &modes {
            assert_eq!(m.k[0], 0);
            assert_eq!(m.k[1] % 3, 0);
            assert!(m.k[1].abs() <= 6);
            assert!(m.k.iter().any(|&v| v != 0));
        }
    }

    #[test]
    fn mode_fields_are_resolution_independent() {
        let modes = random_modes(2, &[1, 1], &[2, 2], 5, 42);
        let coarse = mode_field(&grid(16), &modes);
        let fine = mode_field(&grid(32), &modes);
        // the coarse lattice is a sublattice of the fine one
        let mut x = [0.0; 2];
        for (i, v) in coarse.values().iter().enumerate() {
            coarse.grid().coords_of(i, &mut x);
            let fi = fine.grid().flat_index(&[
                ((x[0] + 4.0) / fine.grid().spacing(0)).round() as usize,
                ((x[1] + 4.0) / fine.grid().spacing(1)).round() as usize,
            ]);
            assert!((v - fine.values()[fi]).norm() < 1e-12);
        }
    }

    #[test]
    fn harmonic_fields_reproduce_with_the_same_seed() {
        let g = grid(16);
        let a = harmonic_mode_field(&g, &[1, 1], &[2, 2], 4, 2, 0.5, 7, false).unwrap();
        let b = harmonic_mode_field(&g, &[1, 1], &[2, 2], 4, 2, 0.5, 7, false).unwrap();
        for (ca, cb) in a.components().iter().zip(b.components()) {
            assert_eq!(ca.values(), cb.values());
        }
        let c = harmonic_mode_field(&g, &[1, 1], &[2, 2], 4, 2, 0.5, 8, false).unwrap();
        assert!(a.components()[0].values() != c.components()[0].values());
    }

    #[test]
    fn upsampling_reproduces_band_limited_data_on_the_sublattice() {
        let coarse = grid(16);
        let params = *coarse.params();
        let fine = Arc::new(Grid::new(&params, vec![4.0, 4.0], vec![16, 32]).unwrap());
        let modes = random_modes(2, &[1, 1], &[3, 3], 6, 5);
        let up = upsample(&mode_field(&coarse, &modes), &fine).unwrap();
        let direct = mode_field(&fine, &modes);
        let err = up.sub(&direct).unwrap().lp_norm(f64::INFINITY);
        assert!(err < 1e-12, "gap {err}");
        // windowed data is not band-limited: the transfer must still hit the
        // coarse samples exactly and carry no content above the old Nyquist
        let mut win = mode_field(&coarse, &modes);
        let g = coarse.clone();
        let mut x = [0.0; 2];
        for (i, v) in win.values_mut().iter_mut().enumerate() {
            g.coords_of(i, &mut x);
            *v *= seam_envelope(&g, &x);
        }
        let up = upsample(&win, &fine).unwrap();
        for (i, v) in win.values().iter().enumerate() {
            coarse.coords_of(i, &mut x);
            let fi = fine.flat_index(&[
                ((x[0] + 4.0) / fine.spacing(0)).round() as usize,
                ((x[1] + 4.0) / fine.spacing(1)).round() as usize,
            ]);
            assert!((v - up.values()[fi]).norm() < 1e-12);
        }
        let hat = up.to_frequency();
        let mut idx = [0usize; 2];
        for (i, v) in hat.values().iter().enumerate() {
            fine.multi_index(i, &mut idx);
            let s = if idx[1] <= 16 { idx[1] as i64 } else { idx[1] as i64 - 32 };
            if s.abs() > 8 {
                assert!(v.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn white_field_strips_the_spatial_mean() {
        let f = harmonic_white_field(&grid(16), 2, 0.5, 3).unwrap();
        for c in f.components() {
            let mean: Complex<f64> =
                c.values().iter().sum::<Complex<f64>>() / c.values().len() as f64;
            assert!(mean.norm() < 1e-12);
        }
    }

    #[test]
    fn constant_component_has_zero_ball_oscillation() {
        let g = grid(16);
        let ones = GridField::from_fn(g.clone(), |_| 1.0);
        let f = TimeHarmonicField::new(vec![0.0], vec![ones]).unwrap();
        assert!(ball_oscillation(&f, 1.0, 8) < 1e-24);
        let wave = GridField::from_fn(g, |x| x[1].sin());
        let f = TimeHarmonicField::new(vec![0.0], vec![wave]).unwrap();
        assert!(ball_oscillation(&f, 1.0, 8) > 1e-3);
    }

    #[test]
    fn grid_builders_scale_and_refine() {
        let g = grid(16);
        let resc = rescaled_grid(&g, 2.0).unwrap();
        assert!((resc.half_len(0) - 4.0 / 8.0).abs() < 1e-15);
        assert!((resc.half_len(1) - 4.0 / 2.0).abs() < 1e-15);
        assert_eq!(resc.points_per_axis(0), 16);
        let refd = refined_grid(&g).unwrap();
        assert_eq!(refd.points_per_axis(0), 16);
        assert_eq!(refd.points_per_axis(1), 32);
    }

    #[test]
    fn commensurate_strides_pin_the_sheared_blocks() {
        let p2 = ChainParams::new(2, 1, 2.0).unwrap();
        assert_eq!(commensurate_strides(&p2, 8), vec![8, 1]);
        let p3 = ChainParams::new(3, 2, 2.0).unwrap();
        assert_eq!(commensurate_strides(&p3, 4), vec![32, 32, 4, 4, 1, 1]);
    }
}
