use gaprich::words::{cyclic_shift, repeat_blocks, sieve, word_distance};
use gaprich::Word;
use proptest::prelude::*;

fn values(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1..=max_len)
}

proptest! {
    #[test]
    fn sharp_powers_are_at_distance_zero(v in values(6), m in 1usize..=8) {
        let x = Word::from_values(&v).unwrap();
        prop_assert_eq!(word_distance(&x, &x.sharp_power(m).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn distance_is_symmetric_with_triangle(
        (a, b, c) in (1usize..6).prop_flat_map(|n| (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        ))
    ) {
        let (x, y, z) = (Word::from_values(&a).unwrap(), Word::from_values(&b).unwrap(), Word::from_values(&c).unwrap());
        let d = |p: &Word, q: &Word| word_distance(p, q).unwrap();
        prop_assert_eq!(d(&x, &y), d(&y, &x));
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12);
    }

    #[test]
    fn aggregation_respects_concatenation(a in values(6), b in values(6), k in 1usize..4) {
        let x = repeat_blocks(&a, k).unwrap();
        let y = repeat_blocks(&b, k).unwrap();
        let mut expect = x.aggregate();
        expect.extend(y.aggregate());
        prop_assert_eq!(x.concat(&y).unwrap().aggregate(), expect);
    }

    #[test]
    fn sieve_matches_pointwise_rule(v in values(5), k in 1usize..5) {
        let w = sieve(&v, k).unwrap();
        let agg = w.aggregate();
        let q = v.len() as i64;
        let k = k as i64;
        for n in -2 * q * k..=2 * q * k {
            let got = agg[n.rem_euclid(q * k) as usize];
            let expect = if n % k == 0 { v[(n / k).rem_euclid(q) as usize] } else { 0.0 };
            prop_assert_eq!(got, expect);
        }
    }

    #[test]
    fn repeat_matches_floor_rule(v in values(5), k in 1usize..5) {
        let agg = repeat_blocks(&v, k).unwrap().aggregate();
        for (n, x) in agg.iter().enumerate() {
            prop_assert_eq!(*x, v[n / k]);
        }
    }

    #[test]
    fn full_rotation_is_identity(v in values(9)) {
        let mut w = v.clone();
        for _ in 0..v.len() {
            w = cyclic_shift(&w, 1);
        }
        prop_assert_eq!(w, v);
    }
}
