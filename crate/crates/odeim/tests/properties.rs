use odeim::airy::bessel_k;
use odeim::bethe::{genericity, random_generic_ell, reflect_weight, weyl_action, weyl_chamber, GENERIC_TOL};
use odeim::cli::{parse_complex, parse_grid};
use odeim::intertwiners::shifted;
use odeim::liealg::{langlands_fold, AlgebraLabel, FoldingRecord};
use odeim::linalg::C64;
use odeim::repmatrix::{wedge_rep, AffineAlgebra};
use proptest::prelude::*;
use rand::SeedableRng;

fn alg(s: &str) -> AffineAlgebra {
    AffineAlgebra::new(s.parse().unwrap()).unwrap()
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn complex_text_round_trip(re in -1e6f64..1e6, im in -1e6f64..1e6) {
        let s = format!("{:?}{:+?}i", re, im);
        let z = parse_complex(&s).unwrap();
        prop_assert_eq!(z.re.to_bits(), re.to_bits());
        prop_assert_eq!(z.im.to_bits(), im.to_bits());
    }

    #[test]
    fn grid_has_product_size(a in -10f64..0.0, b in 0.1f64..10.0, n in 1usize..8, m in 1usize..8) {
        let g = parse_grid(&format!("{}:{}:{},{}:{}:{}", a, b, n, a, b, m)).unwrap();
        prop_assert_eq!(g.len(), n * m);
        prop_assert!(g.iter().all(|z| z.re >= a && z.re <= b + 1e-12));
    }

    /// K_{nu+1} - K_{nu-1} = (2 nu / z) K_nu, across all three evaluation regimes.
    #[test]
    fn bessel_recurrence(r in 0.3f64..40.0, t in -1.5f64..1.5, nu in 0.05f64..0.45) {
        let z = C64::from_polar(r, t);
        let (k0, _) = bessel_k(nu, z);
        let (kp, _) = bessel_k(nu + 1.0, z);
        let (km, _) = bessel_k(nu - 1.0, z);
        let lhs = kp - km;
        let rhs = k0 * (2.0 * nu) / z;
        prop_assert!((lhs - rhs).norm() < 1e-10 * kp.norm().max(km.norm()), "z={} nu={}: {} vs {}", z, nu, lhs, rhs);
    }

    /// K' = -(K_{nu-1} + K_{nu+1}) / 2.
    #[test]
    fn bessel_derivative(r in 0.3f64..40.0, t in -1.5f64..1.5, nu in 0.05f64..0.45) {
        let z = C64::from_polar(r, t);
        let (_, d) = bessel_k(nu, z);
        let want = -(bessel_k(nu - 1.0, z).0 + bessel_k(nu + 1.0, z).0) * 0.5;
        prop_assert!(rel(d, want) < 1e-10, "z={}: {} vs {}", z, d, want);
    }

    /// Conjugation: K_nu(conj z) = conj K_nu(z).
    #[test]
    fn bessel_reflection(r in 0.3f64..40.0, t in 0.0f64..2.5, nu in 0.05f64..0.45) {
        let z = C64::from_polar(r, t);
        prop_assert!(rel(bessel_k(nu, z.conj()).0, bessel_k(nu, z).0.conj()) < 1e-12);
    }

    #[test]
    fn reflections_are_involutions(mu in proptest::collection::vec(-3f64..3.0, 3), k in 0usize..3) {
        let a = alg("B3");
        let back = reflect_weight(&a, &reflect_weight(&a, &mu, k), k);
        for (x, y) in back.iter().zip(&mu) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    /// Braid relation of G2: (s1 s2)^6 = 1.
    #[test]
    fn g2_braid(mu in proptest::collection::vec(-3f64..3.0, 2)) {
        let a = alg("G2");
        let word: Vec<usize> = (0..12).map(|k| k % 2).collect();
        let out = weyl_action(&a, &word, &mu);
        for (x, y) in out.iter().zip(&mu) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn seeded_draws_are_generic_and_dominant(seed in 0u64..10_000) {
        for s in ["B3", "G2", "C2"] {
            let a = alg(s);
            let ell = random_generic_ell(&a, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert!(genericity(&a, &ell).unwrap() > GENERIC_TOL);
            prop_assert!(weyl_chamber(&a, &ell).unwrap().is_empty());
        }
    }

    #[test]
    fn shifts_compose(s1 in -2f64..2.0, s2 in -2f64..2.0) {
        let a = alg("B3");
        let v = a.fundamental_rep(0).unwrap();
        let x: Vec<C64> = (0..v.dim()).map(|k| C64::new(1.0 + k as f64, 0.5 - k as f64)).collect();
        let once = shifted(&x, &v.grading, 5, s1 + s2);
        let twice = shifted(&shifted(&x, &v.grading, 5, s1), &v.grading, 5, s2);
        for (p, q) in once.iter().zip(&twice) {
            prop_assert!((p - q).norm() < 1e-12 * p.norm().max(1.0));
        }
    }
}

#[test]
fn folding_record_round_trips_exactly() {
    for s in ["A3", "B3", "B4", "C2", "C3", "F4", "G2", "E6", "D5"] {
        let f = langlands_fold(s.parse::<AlgebraLabel>().unwrap()).unwrap();
        let rec = f.record();
        let back = FoldingRecord::from_json(&rec.to_json()).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.d_values().unwrap(), f.d);
        assert_eq!(back.k_values().unwrap(), f.k_tilde);
    }
}

#[test]
fn symmetrised_cartan_for_every_family() {
    for s in ["A1", "A4", "B3", "B6", "C2", "C5", "D4", "D7", "E6", "E7", "E8", "F4", "G2"] {
        let f = langlands_fold(s.parse::<AlgebraLabel>().unwrap()).unwrap();
        let dc = f.sym_cartan();
        let n = dc.len();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(dc[i][j], dc[j][i], "{}", s);
            }
        }
    }
}

#[test]
fn exterior_powers_keep_the_relations() {
    for s in ["B3", "C2", "G2"] {
        let a = alg(s);
        let cm = a.chevalley_matrix();
        let v = a.standard_rep().unwrap();
        for p in 2..=3 {
            let w = wedge_rep(&v, p);
            let n = v.dim();
            let binom = (0..p).fold(1usize, |acc, k| acc * (n - k) / (k + 1));
            assert_eq!(w.dim(), binom);
            assert!(w.chevalley_residual(&cm) < 1e-12, "{} wedge {}", s, p);
        }
    }
}
