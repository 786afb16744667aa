//! Randomized invariant checks over the model's parameter space.

use std::sync::Arc;

use proptest::prelude::*;

use hypochain::chain::{dilation, mat_exp, ChainParams, DiffusionProfile};
use hypochain::field::{frac_laplacian, random_bandlimited, Grid};
use hypochain::gaussian::covariance;
use hypochain::geometry::{ell, ell_to, SpaceTimePoint};

fn params(n: usize) -> ChainParams {
    ChainParams::new(n, 1, 2.0).unwrap()
}

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

proptest! {
    #[test]
    fn gauge_scales_with_dilation(n in 2usize..4, x in coords(3), t in -4.0f64..4.0, r in 0.2f64..5.0) {
        let p = params(n);
        let x = &x[..n];
        let base = ell(&p, t, x);
        prop_assume!(base > 1e-9);
        let scaled = ell(&p, r * r * t, &dilation(&p, r, x));
        prop_assert!((scaled - r * base).abs() <= 1e-9 * r * base.max(1.0));
    }

    #[test]
    fn gauge_is_quasi_symmetric_and_subadditive(
        n in 2usize..4,
        xs in prop::collection::vec(-5.0f64..5.0, 9),
        ts in prop::collection::vec(-4.0f64..4.0, 3),
    ) {
        let p = params(n);
        let pt = |k: usize| SpaceTimePoint { t: ts[k], x: xs[k * 3..k * 3 + n].to_vec() };
        let (a, b, c) = (pt(0), pt(1), pt(2));
        let fwd = ell_to(&p, &b, &a);
        let bwd = ell_to(&p, &a, &b);
        prop_assert!(bwd <= 3.0 * fwd + 1e-12);
        let legs = ell_to(&p, &c, &a) + ell_to(&p, &b, &c);
        prop_assert!(fwd <= 4.0 * legs + 1e-12);
    }

    #[test]
    fn shear_flow_is_a_group(n in 2usize..4, s in -3.0f64..3.0, t in -3.0f64..3.0) {
        let p = params(n);
        let lhs = mat_exp(&p, s).into_matrix() * mat_exp(&p, t).into_matrix();
        let rhs = mat_exp(&p, s + t).into_matrix();
        prop_assert!((lhs - rhs).abs().max() <= 1e-12);
    }

    #[test]
    fn covariance_stays_positive_definite(a0 in 0.5f64..2.0, tau in 0.1f64..4.0) {
        let p = params(2);
        let prof = DiffusionProfile::constant_scalar(&p, a0).unwrap();
        let sigma = covariance(&p, &prof, 0.0, tau, 32).unwrap();
        let eig = nalgebra::SymmetricEigen::new(sigma);
        prop_assert!(eig.eigenvalues.min() > 0.0);
    }

    #[test]
    fn fractional_orders_compose(a in 0.2f64..1.0, b in 0.2f64..1.0, seed in 0u64..32) {
        let p = params(2);
        let g = Arc::new(Grid::new(&p, vec![4.0, 4.0], vec![32, 32]).unwrap());
        let f = random_bandlimited(&g, seed, 0.5, 1.0);
        // multipliers -|xi|^a and -|xi|^b stack to +|xi|^{a+b}
        let twice = frac_laplacian(&frac_laplacian(&f, 1, a), 1, b);
        let once = frac_laplacian(&f, 1, a + b).scale(-1.0);
        let err = twice.sub(&once).unwrap().lp_norm(f64::INFINITY);
        prop_assert!(err <= 1e-9 * f.lp_norm(f64::INFINITY).max(1e-12));
    }
}
