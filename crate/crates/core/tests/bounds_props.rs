use densfact_core::bounds::*;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

proptest! {
    #[test]
    fn density_bounds_monotone_in_c1p(nt in 0.1f64..10.0, r in 1.0f64..3.0, s in 1.0f64..3.0, p in 1.1f64..4.0, dq in 0.1f64..6.0) {
        let c1p = nt * r;
        let c1q = c1p * s;
        let q = p + dq;
        let a = density_bounds(nt, c1p, c1q, p, q).unwrap();
        let b = density_bounds(nt, c1p * 1.1, c1q * 1.1, p, q).unwrap();
        // larger C_{1,p} at a fixed ratio C_{1,q}/C_{1,p} only helps
        prop_assert!(b.gamma <= a.gamma * (1.0 + 1e-12));
        prop_assert!(b.k >= a.k * (1.0 - 1e-12));
        prop_assert!(a.sigma > 0.0 && a.sigma < 1.0);
        // with C_{1,q} = C_{1,p} the ratio reduces to (‖T‖/C_{1,p})^σ
        let flat = density_bounds(nt, c1p, c1p, p, q).unwrap();
        prop_assert!(rel(flat.big_delta, (nt / c1p).powf(flat.sigma)) < 1e-12);
    }

    #[test]
    fn summing_at_r_one_is_the_cube_form(u in 0.1f64..5.0, c in 0.5f64..64.0, t in 1.2f64..6.0, n in 1.0f64..1e4) {
        let (_, _, a) = summing_bounds(u, n * u, c * u, 1.0, t).unwrap();
        let b = cube_summing_bounds(u, c, t, n).unwrap();
        prop_assert!(rel(a.gamma, b.gamma) < 1e-10);
        prop_assert!(rel(a.k, b.k) < 1e-10);
    }

    #[test]
    fn half_forms_are_weaker(nt in 0.1f64..10.0, p in 1.01f64..6.0, n in 1usize..12) {
        let full = l1_extension_bounds(nt, 32.0, p, 0.5, n).unwrap();
        let (_, half) = l1_extension_half_bounds(nt, p, n).unwrap();
        prop_assert!(full.gamma <= half.gamma * (1.0 + 1e-12));
        prop_assert!(full.k >= half.k * (1.0 - 1e-12));
        let full = linf_extension_bounds(nt, 32.0, p, 0.5, n).unwrap();
        let (_, half) = linf_extension_half_bounds(nt, p, n).unwrap();
        prop_assert!(full.gamma <= half.gamma * (1.0 + 1e-12));
        prop_assert!(full.k >= half.k * (1.0 - 1e-12));
    }

    #[test]
    fn extension_bounds_improve_with_c(nt in 0.1f64..10.0, c in 1.0f64..100.0, p in 1.1f64..5.0, eps in 0.05f64..0.95, n in 1usize..8) {
        let a = l1_extension_bounds(nt, c, p, eps, n).unwrap();
        let b = l1_extension_bounds(nt, 2.0 * c, p, eps, n).unwrap();
        prop_assert!(b.gamma < a.gamma && b.k > a.k);
        let a = linf_extension_bounds(nt, c, p, eps, n).unwrap();
        let b = linf_extension_bounds(nt, c, p, eps, n + 1).unwrap();
        prop_assert!(b.gamma > a.gamma && b.k < a.k);
    }

    #[test]
    fn khintchine_premise_closes(c in 1e-4f64..0.05, u in 1e-3f64..0.1, n in 1usize..1_000_000) {
        match khintchine_bounds(n, c, u).unwrap() {
            KhintchineBounds::Obvious { d } => prop_assert!((n as f64) < 2.0 * d),
            KhintchineBounds::Bound { d, p, delta, premise_lhs, premise_rhs, .. } => {
                prop_assert!(rel(premise_lhs, premise_rhs) < 1e-12);
                prop_assert!(delta <= 2.0 * d * (1.0 + 1e-12));
                prop_assert!((1.0 / p + d / n as f64 - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn james_giesy_chain_grows(a in 1.0001f64..4.0, len in 2u32..20) {
        let g1 = james_giesy_chain(a, len);
        let g2 = james_giesy_chain(a, len + 1);
        prop_assert!(g2 > g1);
        let b = 2.0 / (1.0 + 1.0 / a);
        prop_assert!(rel(g1, a * b.powi(len as i32 - 1)) < 1e-12);
    }

    #[test]
    fn growth_needs_c_at_least_32(n in 1.0f64..1e9, t in 1.01f64..50.0, c in 0.0f64..32.0) {
        prop_assert!(growth_bounds(n, t, c).is_err());
        let g = growth_bounds(n, t, 32.0).unwrap();
        prop_assert!(g.j_feasible >= 0.0 && g.j_feasible.is_finite());
        prop_assert!(rel(g.alpha, n / (t - 1.0)) < 1e-12);
    }

    #[test]
    fn net_cap_is_the_volume_bound(n in 0usize..10, eps in 0.01f64..1.0) {
        prop_assert!(rel(net_cap(n, eps), 0.5 * (2.0 / eps + 1.0).powi(n as i32)) < 1e-14);
    }
}

#[test]
fn worked_examples() {
    // A = 2 forces B = 4/3 and A/B² = 9/8
    let b = james_giesy_step(1.0, 2.0);
    assert!((b - 4.0 / 3.0).abs() < 1e-15);
    assert!((2.0 / (b * b) - 9.0 / 8.0).abs() < 1e-15);
    assert!((growth_c1() - 0.1239).abs() < 1e-3);
    // ε = ½: net cap (5^n)/2
    assert_eq!(net_cap(2, 0.5), 12.5);
}
