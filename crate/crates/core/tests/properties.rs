use proptest::prelude::*;
use walshdiv::orlicz::{young_conjugate, PiecewiseConvex};
use walshdiv::walsh::{
    dirichlet_dense, dirichlet_point, fwht, fwht_exact, fwht_inverse, fwht_inverse_exact, walsh_eval,
    walsh_grid, StepFunction,
};
use walshdiv::{DyadicPoint, ExpFloat, Rational, SpectralNat};

fn variation_u128(v: u128) -> u64 {
    let mut runs = 0;
    let mut prev = false;
    for i in 0..128 {
        let b = v >> i & 1 == 1;
        if b && !prev {
            runs += 1;
        }
        prev = b;
    }
    2 * runs
}

proptest! {
    #[test]
    fn spectral_matches_machine_integers(a in any::<u64>(), b in any::<u64>()) {
        let (x, y) = (SpectralNat::from_u64(a), SpectralNat::from_u64(b));
        prop_assert_eq!(x.add(&y).to_u128(), Some(a as u128 + b as u128));
        prop_assert_eq!(x.xor(&y).to_u64(), Some(a ^ b));
        prop_assert_eq!(x.cmp(&y), a.cmp(&b));
        prop_assert_eq!(x.checked_sub(&y).ok().and_then(|d| d.to_u64()), a.checked_sub(b));
        prop_assert_eq!(x.variation(), variation_u128(a as u128));
        prop_assert_eq!(x.shl(7).to_u128(), Some((a as u128) << 7));
    }

    #[test]
    fn spectral_round_trips(v in any::<u128>()) {
        let n = SpectralNat::from_u128(v);
        prop_assert_eq!(n.to_u128(), Some(v));
        let json = serde_json::to_string(&n).unwrap();
        prop_assert_eq!(serde_json::from_str::<SpectralNat>(&json).unwrap(), n);
    }

    #[test]
    fn exact_transform_inverts(res in 0u32..10, seed in any::<u64>()) {
        let len = 1usize << res;
        let vals: Vec<i64> = (0..len)
            .map(|i| ((seed.wrapping_mul(i as u64 + 1).rotate_left(17) % (1 << 40)) as i64) - (1 << 39))
            .collect();
        let f = StepFunction::new(res, vals.clone()).unwrap();
        let back = fwht_inverse_exact(&fwht_exact(&f)).to_int_grid().unwrap();
        prop_assert_eq!(back.values(), &vals[..]);
    }

    #[test]
    fn float_transform_inverts(vals in prop::collection::vec(-1e3f64..1e3, 64)) {
        let f = StepFunction::new(6, vals.clone()).unwrap();
        let back = fwht_inverse(&fwht(&f));
        for (a, b) in back.values().iter().zip(&vals) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn walsh_point_matches_grid(k in 0u64..256, cell in 0u64..256) {
        let x = DyadicPoint::cell_anchor(cell, 8);
        let grid = walsh_grid(k, 8);
        prop_assert_eq!(walsh_eval(&SpectralNat::from_u64(k), &x) as i64, grid.value_at(&x));
    }

    #[test]
    fn dirichlet_point_matches_dense(n in 1u64..512, cell in 0u64..512) {
        let d = dirichlet_dense(&SpectralNat::from_u64(n), 9).unwrap();
        let x = DyadicPoint::cell_anchor(cell, 9);
        prop_assert_eq!(dirichlet_point(&SpectralNat::from_u64(n), &x).unwrap(), d.value_at(&x) as i128);
    }

    #[test]
    fn young_inequality(mut slopes in prop::collection::vec(1i128..50, 1..6), u in 0i64..400, v in 0i64..80) {
        slopes.sort();
        slopes.dedup();
        let mut knots = vec![(Rational::from_integer(0), Rational::from_integer(0))];
        for (i, s) in slopes.iter().enumerate().take(slopes.len() - 1) {
            let (x, y) = knots[i];
            knots.push((x + Rational::from_integer(10), y + Rational::from_integer(10 * s)));
        }
        let phi = PiecewiseConvex::from_knots(knots, Rational::from_integer(slopes[slopes.len() - 1])).unwrap();
        prop_assert!(phi.is_convex());
        let psi = young_conjugate(&phi);
        let (u, v) = (Rational::from_integer(u as i128), Rational::from_integer(v as i128));
        if let (Some(a), Some(b)) = (phi.eval(u), psi.eval(v)) {
            prop_assert!(u * v <= a + b);
        }
    }

    #[test]
    fn expfloat_tracks_f64(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        let (x, y) = (ExpFloat::from_f64(a), ExpFloat::from_f64(b));
        let close = |p: ExpFloat, q: f64| (p.to_f64() - q).abs() <= 1e-12 * q.abs().max(1.0);
        prop_assert!(close(x + y, a + b));
        prop_assert!(close(x * y, a * b));
        prop_assert_eq!(x.partial_cmp(&y), a.partial_cmp(&b));
    }
}
