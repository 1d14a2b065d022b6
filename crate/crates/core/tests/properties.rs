use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use skewlab::cone::Cone;
use skewlab::curves::{approximate_unstable_vector, classify_field, distortion_constant, FieldClass};
use skewlab::harness::{self, ExperimentConfig};
use skewlab::hypotheses::critical_region;
use skewlab::lyapunov::{self, parry_measure, CocycleDriver, LyapunovParams, System};
use skewlab::maps::{self, CoupledP, CoupledQ, FiberMap, IdentityMap, KickProjection, SkewProduct, StandardMap, TwistMap};
use skewlab::torus::{wrap, ToralAutomorphism, TorusVector};

fn fiber(kind: u8, r: f64, tau: f64) -> Arc<dyn FiberMap> {
    match kind % 4 {
        0 => Arc::new(StandardMap::new(r)),
        1 => Arc::new(CoupledP::new(r, tau)),
        2 => Arc::new(CoupledQ::new(r)),
        _ => Arc::new(TwistMap::froeschle(r, r, tau)),
    }
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    a.iter().zip(b).map(|(x, y)| (x - dot * y).powi(2)).sum::<f64>().sqrt()
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..TAU, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reduce_is_a_projection(x in prop::collection::vec(-1e6..1e6f64, 1..6), k in -50i32..50) {
        let a = TorusVector::reduce(&x).unwrap();
        prop_assert!(a.coords().iter().all(|&c| (0.0..TAU).contains(&c)));
        prop_assert_eq!(TorusVector::reduce(a.coords()).unwrap(), a.clone());
        let shifted: Vec<f64> = x.iter().map(|c| c + TAU * k as f64).collect();
        prop_assert!(TorusVector::reduce(&shifted).unwrap().distance(&a) < 1e-8);
    }

    #[test]
    fn fiber_maps_invert_and_preserve_volume(kind in 0u8..4, r in 1.0..500.0f64, tau in -0.5..0.5f64, seed in point(4)) {
        let m = fiber(kind, r, tau);
        let y = TorusVector::reduce(&seed[..m.dim()]).unwrap();
        let back = maps::inverse(m.as_ref(), &maps::eval(m.as_ref(), &y).unwrap()).unwrap();
        prop_assert!(back.distance(&y) < 1e-9 * r.max(1.0));
        let det = maps::jacobian_matrix(m.as_ref(), y.coords()).determinant();
        prop_assert!((det - 1.0).abs() < 1e-10 * r.max(1.0), "det {}", det);
    }

    #[test]
    fn offsets_match_differences(kind in 0u8..4, r in 1.0..100.0f64, y in point(4), h in prop::collection::vec(-1e-3..1e-3f64, 4)) {
        let m = fiber(kind, r, 0.01);
        let d = m.dim();
        let mut off = vec![0.0; d];
        m.eval_offset(&y[..d], &h[..d], &mut off);
        let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
        let yh: Vec<f64> = y[..d].iter().zip(&h).map(|(p, q)| p + q).collect();
        m.eval_lift(&yh, &mut a);
        m.eval_lift(&y[..d], &mut b);
        for i in 0..d {
            prop_assert!((off[i] - (a[i] - b[i])).abs() < 1e-9 * r);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences(kind in 0u8..4, r in 1.0..50.0f64, y in point(4)) {
        let m = fiber(kind, r, 0.05);
        let d = m.dim();
        let j = maps::jacobian_matrix(m.as_ref(), &y[..d]);
        let eps = 1e-6;
        for c in 0..d {
            let mut h = vec![0.0; d];
            h[c] = eps;
            let mut off = vec![0.0; d];
            m.eval_offset(&y[..d], &h, &mut off);
            for i in 0..d {
                prop_assert!((off[i] / eps - j[(i, c)]).abs() < 1e-4 * r, "entry ({}, {})", i, c);
            }
        }
    }

    #[test]
    fn skew_round_trip(which in 0usize..2, l in 1usize..6, k in 0usize..4, r in 1.0..100.0f64, p in point(4)) {
        let base = if which == 0 { ToralAutomorphism::cat_map() } else { ToralAutomorphism::from_rows(&[vec![13, 8], vec![8, 5]]).unwrap() };
        let f = SkewProduct::new(base, l, k, KickProjection::first_coordinate(2, 2), Arc::new(StandardMap::new(r))).unwrap();
        let m = TorusVector::reduce(&p).unwrap();
        let back = f.inverse(&f.eval(&m).unwrap()).unwrap();
        let lam = ((3.0 + 5f64.sqrt()) / 2.0).powi((l * (1 + 2 * which)) as i32);
        prop_assert!(back.distance(&m) < 1e-12 * lam * r);
    }

    #[test]
    fn cone_membership_is_scale_invariant(r in 2.0..1e6f64, a in -10.0..10.0f64, b in -10.0..10.0f64, c in 0.01..100.0f64) {
        let cone = Cone::delta(r).unwrap();
        let v = DVector::from_vec(vec![a, b]);
        prop_assert_eq!(cone.contains(&v, true), cone.contains(&(&v * c), true));
        prop_assert_eq!(cone.contains(&v, true), cone.contains(&(&v * -c), true));
        let inside = b.abs() <= r.powf(0.25) * a.abs();
        prop_assert_eq!(cone.contains(&v, true), inside);
    }

    #[test]
    fn critical_length_bound(r in 16.0..1e8f64) {
        let l = critical_region(&StandardMap::new(r), 0).unwrap().length();
        let k = r.floor();
        prop_assert!(l <= 8.0 / r.sqrt());
        prop_assert!((l - 4.0 * (1.0 / k.sqrt()).asin()).abs() < 1e-9);
    }

    #[test]
    fn parry_is_stationary(n in 2usize..6, extra in prop::collection::vec(any::<bool>(), 36)) {
        let mut c = vec![0u8; n * n];
        for i in 0..n {
            c[i * n + (i + 1) % n] = 1;
        }
        for (i, e) in extra.iter().take(n * n).enumerate() {
            if *e {
                c[i] = 1;
            }
        }
        let p = parry_measure(&c, n).unwrap();
        prop_assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..n {
            let row: f64 = p.transitions[i * n..(i + 1) * n].iter().sum();
            prop_assert!((row - 1.0).abs() < 1e-12);
            let inflow: f64 = (0..n).map(|j| p.weights[j] * p.transitions[j * n + i]).sum();
            prop_assert!((inflow - p.weights[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_exponents_match_eigenvalues(a in 1i64..6, b in 1i64..6, c in 1i64..6) {
        // [[a, b], [c, d]] with ad - bc = 1 whenever c divides 1 + bc
        let d_num = 1 + b * c;
        prop_assume!(d_num % a == 0);
        let d = d_num / a;
        let m = DMatrix::from_row_slice(2, 2, &[a as f64, b as f64, c as f64, d as f64]);
        let tr = (a + d) as f64;
        prop_assume!(tr > 2.0);
        let rho = (tr + (tr * tr - 4.0).sqrt()) / 2.0;
        let params = LyapunovParams { n: 5000, burn_in: 50, qr_period: 1, seeds: vec![0] };
        let rep = lyapunov::lyapunov_spectrum(&System::Linear(m), &CocycleDriver::Autonomous, &params).unwrap();
        prop_assert!((rep.exponents[0] - rho.ln()).abs() < 1e-3);
        prop_assert!(rep.exponents.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn config_round_trip(r in 1.0..1e5f64, n in 1usize..1_000_000, seeds in prop::collection::vec(0u64..1000, 0..5), idx in 0usize..7) {
        let mut c = harness::preset(harness::PRESETS[idx], Some(r)).unwrap();
        c.lyapunov.n = n;
        c.lyapunov.seeds = seeds;
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn classification_ignores_positive_scaling(ys in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..20), s in 0.1..10.0f64) {
        let cone = Some(Cone::delta(16.0).unwrap());
        let blocks = vec![vec![0usize, 1]];
        let a: Vec<Vec<f64>> = ys.iter().map(|&(x, y)| vec![x, y]).collect();
        let b: Vec<Vec<f64>> = a.iter().map(|v| v.iter().map(|c| c * s).collect()).collect();
        let ca = classify_field(&a, &blocks, std::slice::from_ref(&cone));
        prop_assert_eq!(ca, classify_field(&b, &blocks, std::slice::from_ref(&cone)));
        prop_assert!(ca != FieldClass::AlmostGood);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn unstable_vector_is_cone_trapped(p in point(4), k_back in 20usize..30) {
        let f = SkewProduct::standard_family(Arc::new(StandardMap::new(10.0)), 10.0).unwrap();
        let m = TorusVector::reduce(&p).unwrap();
        let a = approximate_unstable_vector(&f, &m, k_back, None).unwrap();
        let b = approximate_unstable_vector(&f, &m, k_back + 10, None).unwrap();
        prop_assert!(angle(&a.vector, &b.vector) < 1e-10);
        prop_assert!(a.within);
    }

    #[test]
    fn linear_distortion_is_one(ps in prop::collection::vec(point(4), 2..6), k in 1usize..4) {
        let f = SkewProduct::new(ToralAutomorphism::cat_map(), 3, 1, KickProjection::zero(2, 2), Arc::new(IdentityMap { dim: 2 })).unwrap();
        let pts: Vec<TorusVector> = ps.iter().map(|p| TorusVector::reduce(p).unwrap()).collect();
        prop_assert_eq!(distortion_constant(&f, &pts, k, 4).unwrap(), 1.0);
    }

    #[test]
    fn wrap_agrees_with_reduce(x in -1e3..1e3f64) {
        prop_assert_eq!(wrap(x), TorusVector::reduce(&[x]).unwrap().coords()[0]);
    }
}
