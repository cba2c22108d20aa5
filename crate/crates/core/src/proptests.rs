//! Property tests for invariants that hold on every input.

use crate::content::{choquet_integral, hausdorff_content};
use crate::experiments::spiky_field;
use crate::norms::{lpl_norm, morrey_norm};
use crate::operators::{fractional_integral, fractional_maximal};
use crate::sparse::{build_sparse_integral, build_sparse_maximal, verify_sparse, verify_stopping, SparseFamily};
use crate::weights::ap_constant;
use crate::{Fidelity, Grid, GridFunction};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid1(level: usize) -> Grid {
    Grid::new(1, level).unwrap()
}

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..6.0, len)
}

fn positive(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..50.0, len)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_is_homogeneous_and_ordered_by_fidelity(v in values(32), c in -5.0f64..5.0, p in 1.0f64..4.0, lam in 0.05f64..0.95) {
        let g = grid1(5);
        let f = GridFunction::new(g, v).unwrap();
        let d = lpl_norm(&f, p, lam, Fidelity::Dyadic).unwrap().value;
        let s = lpl_norm(&f, p, lam, Fidelity::Shifted).unwrap().value;
        let a = lpl_norm(&f, p, lam, Fidelity::Aligned).unwrap().value;
        prop_assert!(d <= s * (1.0 + 1e-12));
        prop_assert!(d <= a * (1.0 + 1e-12));
        let cf = lpl_norm(&f.scale(c), p, lam, Fidelity::Aligned).unwrap().value;
        prop_assert!(close(cf, c.abs() * a, 1e-12));
    }

    #[test]
    fn morrey_lattice_is_monotone(v in values(32), p0 in 2.0f64..8.0, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let f = GridFunction::new(grid1(5), v).unwrap();
        let p1 = 1.0 + (p0 - 1.0) * t1.max(t2);
        let p2 = 1.0 + (p0 - 1.0) * t1.min(t2);
        let big = morrey_norm(&f, p1, p0, Fidelity::Aligned).unwrap().value;
        let small = morrey_norm(&f, p2, p0, Fidelity::Aligned).unwrap().value;
        prop_assert!(small <= big * (1.0 + 1e-12));
    }

    #[test]
    fn ap_constant_at_least_one_and_scale_free(w in positive(16), p in 1.0f64..5.0, c in 0.1f64..10.0) {
        let w = GridFunction::new(grid1(4), w).unwrap();
        let a = ap_constant(&w, p, Fidelity::Aligned).unwrap().value;
        prop_assert!(a >= 1.0 - 1e-12);
        let b = ap_constant(&w.scale(c), p, Fidelity::Aligned).unwrap().value;
        prop_assert!(close(a, b, 1e-10));
    }

    #[test]
    fn content_is_monotone_and_subadditive(bits in prop::collection::vec(0u8..4, 32), lam in 0.05f64..0.95) {
        let g = grid1(5);
        let a: Vec<bool> = bits.iter().map(|b| b & 1 == 1).collect();
        let b: Vec<bool> = bits.iter().map(|b| b & 2 == 2).collect();
        let union: Vec<bool> = a.iter().zip(&b).map(|(x, y)| *x || *y).collect();
        let ca = hausdorff_content(g, &a, lam).unwrap().value;
        let cb = hausdorff_content(g, &b, lam).unwrap().value;
        let cu = hausdorff_content(g, &union, lam).unwrap().value;
        prop_assert!(cu >= ca.max(cb) * (1.0 - 1e-12));
        prop_assert!(cu <= (ca + cb) * (1.0 + 1e-12));
    }

    #[test]
    fn choquet_is_monotone_and_homogeneous(v in positive(32), extra in positive(32), c in 0.1f64..10.0, lam in 0.05f64..0.95) {
        let g = grid1(5);
        let f = GridFunction::new(g, v).unwrap();
        let big = f.add(&GridFunction::new(g, extra).unwrap()).unwrap();
        let a = choquet_integral(&f, lam).unwrap();
        prop_assert!(choquet_integral(&big, lam).unwrap() >= a * (1.0 - 1e-12));
        prop_assert!(close(choquet_integral(&f.scale(c), lam).unwrap(), c * a, 1e-12));
    }

    #[test]
    fn fractional_integral_is_symmetric(u in positive(32), v in positive(32), alpha in 0.05f64..0.95) {
        let g = grid1(5);
        let f = GridFunction::new(g, u).unwrap();
        let h = GridFunction::new(g, v).unwrap();
        let a = fractional_integral(&f, alpha).unwrap().result.dot(&h).unwrap();
        let b = fractional_integral(&h, alpha).unwrap().result.dot(&f).unwrap();
        prop_assert!(close(a, b, 1e-11));
    }

    #[test]
    fn maximal_grows_with_the_cube_family(v in values(32), alpha in 0.0f64..0.95) {
        let f = GridFunction::new(grid1(5), v).unwrap();
        let d = fractional_maximal(&f, alpha, Fidelity::Dyadic).unwrap();
        let a = fractional_maximal(&f, alpha, Fidelity::Aligned).unwrap();
        for (x, y) in d.values().iter().zip(a.values()) {
            prop_assert!(*x <= y * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sparse_families_are_half_sparse_and_stop_correctly(seed in any::<u64>(), dim in 1usize..=2, t in 0.05f64..0.95) {
        let g = Grid::new(dim, if dim == 1 { 6 } else { 3 }).unwrap();
        let f = spiky_field(g, &mut ChaCha8Rng::seed_from_u64(seed));
        let alpha = t * dim as f64;
        for r in [build_sparse_maximal(&f, alpha, &g.root()).unwrap(), build_sparse_integral(&f, alpha, &g.root(), 2.0).unwrap()] {
            prop_assert!(verify_sparse(&r.family, 0.5).ok);
            prop_assert!(verify_stopping(&f, &r.family).unwrap().ok);
            let json = serde_json::to_string(&r.family).unwrap();
            let back: SparseFamily = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, r.family);
        }
    }
}
