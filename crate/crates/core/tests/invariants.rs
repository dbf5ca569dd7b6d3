use densfact_core::density::{c1inf, c1q_bracket};
use densfact_core::ell1fact::{alpha_of, cross_masses, select_subset};
use densfact_core::extraction::level_set_split;
use densfact_core::rankreduce::{l1_rank_reduction, linf_rank_projection};
use densfact_core::{conjugate, AtomSet, Fun, LinOp, MeasureSpace, NormedSpace};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    })
}

fn operator(max_dim: usize, max_atoms: usize) -> impl Strategy<Value = LinOp> {
    (1..=max_dim, 2..=max_atoms, any::<bool>()).prop_flat_map(|(d, a, linf)| {
        (weights(a), prop::collection::vec(-2.0f64..2.0, a * d)).prop_map(move |(w, m)| {
            let dom = if linf { NormedSpace::linf(d) } else { NormedSpace::l1(d) };
            LinOp::into_l1(dom, MeasureSpace::new(w).unwrap(), DMatrix::from_vec(a, d, m)).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lp_norms_increase_with_the_exponent(w in weights(6), f in prop::collection::vec(-3.0f64..3.0, 6), r in 1.0f64..5.0, dr in 0.0f64..5.0) {
        let mu = MeasureSpace::new(w).unwrap();
        let a = mu.lp_norm(&f, r).unwrap();
        let b = mu.lp_norm(&f, r + dr).unwrap();
        let c = mu.lp_norm(&f, f64::INFINITY).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-12) + 1e-15);
        prop_assert!(b <= c * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn conjugation_is_an_involution(r in 1.001f64..100.0) {
        let s = conjugate(r).unwrap();
        prop_assert!((1.0 / r + 1.0 / s - 1.0).abs() < 1e-12);
        prop_assert!((conjugate(s).unwrap() - r).abs() < 1e-9 * r);
    }

    #[test]
    fn density_constants_are_sandwiched(t in operator(3, 6), p in 1.2f64..3.0, dq in 0.3f64..4.0) {
        let norm = t.op_norm().unwrap().value;
        let cp = c1q_bracket(&t, p, 1e-8).unwrap();
        let cq = c1q_bracket(&t, p + dq, 1e-8).unwrap();
        let top = c1inf(&t).unwrap();
        prop_assert!(cp.lower <= cp.upper * (1.0 + 1e-12));
        prop_assert!(norm <= cp.upper * (1.0 + 1e-6));
        prop_assert!(cp.lower <= cq.upper * (1.0 + 1e-6));
        prop_assert!(cq.lower <= top * (1.0 + 1e-6));
        // the density is a probability density
        let mu = t.measure().unwrap();
        let h = cp.density(mu);
        prop_assert!((mu.integral(&h) - 1.0).abs() < 1e-9);
        prop_assert!(h.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn norms_are_norms(x in prop::collection::vec(-2.0f64..2.0, 3), y in prop::collection::vec(-2.0f64..2.0, 3), s in -3.0f64..3.0) {
        let kernel = DMatrix::from_column_slice(6, 1, &[1.0, -1.0, 0.5, 0.0, 2.0, 1.0]);
        let spaces = [NormedSpace::l1(3), NormedSpace::linf(3), NormedSpace::l2(3), NormedSpace::from_reps(DMatrix::from_column_slice(3, 4, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 2.0])).unwrap()];
        for sp in &spaces {
            let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let sx: Vec<f64> = x.iter().map(|a| a * s).collect();
            let (nx, ny) = (sp.norm(&x).unwrap(), sp.norm(&y).unwrap());
            prop_assert!(sp.norm(&sum).unwrap() <= (nx + ny) * (1.0 + 1e-9) + 1e-12);
            prop_assert!((sp.norm(&sx).unwrap() - s.abs() * nx).abs() <= 1e-9 * (1.0 + nx));
            let dot: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            prop_assert!(dot.abs() <= nx * sp.dual_norm(&y).unwrap() * (1.0 + 1e-9) + 1e-12);
        }
        let q = NormedSpace::quotient(vec![1.0 / 6.0; 6], kernel.clone()).unwrap();
        let z: Vec<f64> = x.iter().chain(&y).copied().collect();
        let l1: f64 = z.iter().map(|v| v.abs() / 6.0).sum();
        let nz = q.norm(&z).unwrap();
        prop_assert!(nz <= l1 * (1.0 + 1e-9) + 1e-12);
        // adding kernel elements does not change the class
        let shifted: Vec<f64> = z.iter().zip(kernel.iter()).map(|(a, k)| a + s * k).collect();
        prop_assert!((q.norm(&shifted).unwrap() - nz).abs() < 1e-8 * (1.0 + nz));
    }

    #[test]
    fn composition_norms_multiply_below(t in operator(3, 5), s in prop::collection::vec(-1.0f64..1.0, 9)) {
        let d = t.domain.dim();
        let inner = LinOp::new(NormedSpace::l1(3), densfact_core::Codomain::Normed(t.domain.clone()), DMatrix::from_fn(d, 3, |i, j| s[i * 3 + j])).unwrap();
        let c = t.compose(&inner).unwrap();
        let lhs = c.op_norm().unwrap().value;
        prop_assert!(lhs <= t.op_norm().unwrap().value * inner.op_norm().unwrap().value * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn level_set_split_conclusions(w in weights(8), g in prop::collection::vec(-2.0f64..2.0, 8), mask in prop::collection::vec(any::<bool>(), 8), p in 1.1f64..4.0, dq in 0.1f64..5.0, inf in any::<bool>(), frac in 0.05f64..0.95) {
        let mu = MeasureSpace::new(w.clone()).unwrap();
        let e: AtomSet = (0..8).filter(|&a| mask[a] && a > 0).collect();
        let l1 = mu.lp_norm(&g, 1.0).unwrap();
        prop_assume!(l1 > 1e-9);
        let g: Vec<f64> = g.iter().map(|v| v / l1).collect();
        let outside: Vec<f64> = (0..8).map(|a| if e.contains(a) { 0.0 } else { g[a] }).collect();
        let lp = mu.lp_norm(&outside, p).unwrap();
        prop_assume!(lp > 1e-9);
        let q = if inf { f64::INFINITY } else { p + dq };
        let kappa = frac * lp;
        let f = level_set_split(&mu, &g, &e, p, q, kappa).unwrap();
        prop_assert!(f.is_disjoint(&e));
        let cap = (2f64.powf(1.0 / p) / kappa).powf(conjugate(p).unwrap());
        prop_assert!(mu.mass(&f) < cap + 1e-9);
    }

    #[test]
    fn subset_selection_beats_the_average(w in weights(12), vals in prop::collection::vec(-1.0f64..1.0, 6 * 12), k in 2usize..=3) {
        let mu = MeasureSpace::new(w).unwrap();
        let xs: Vec<Fun> = vals.chunks(12).map(|c| Fun::new(c.to_vec())).collect();
        let sets: Vec<AtomSet> = (0..6).map(|i| (2 * i..2 * i + 2).collect()).collect();
        let s = select_subset(&mu, &xs, &sets, k).unwrap();
        let a = cross_masses(&mu, &xs, &sets);
        let avg = (2 * k * (2 * k - 1)) as f64 / 30.0 * alpha_of(&a, &(0..6).collect::<Vec<_>>());
        prop_assert!(s.alpha_e0 <= avg * (1.0 + 1e-12) + 1e-15);
        prop_assert_eq!(s.d.len(), k);
        prop_assert!(s.row_sums.iter().all(|&r| r <= s.row_bound * (1.0 + 1e-12) + 1e-15));
    }

    #[test]
    fn rank_reduction_reproduces(d in 2usize..7, n in 1usize..=2, seedvals in prop::collection::vec(-1.0f64..1.0, 2 * 7), w in weights(7)) {
        let u = DMatrix::from_fn(n, d, |i, j| seedvals[i * 7 + j]);
        let w = &w[..d];
        let s: f64 = w.iter().sum();
        let mu = MeasureSpace::new(w.iter().map(|v| v / s).collect()).unwrap();
        let r = l1_rank_reduction(&u, &mu, 0.5).unwrap();
        prop_assert!((&u * &r.p - &u).amax() < 1e-8);
        prop_assert!(r.violations().is_empty());
        let b = u.transpose();
        let r = linf_rank_projection(&b, 0.5).unwrap();
        prop_assert!((&r.p * &b - &b).amax() < 1e-9);
        prop_assert!(r.violations().is_empty());
    }
}
