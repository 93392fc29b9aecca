use std::f64::consts::PI;

use gaprich::continuum::{
    continuum_bands, continuum_repeat_gap, continuum_sieve_gap, free_transfer, repeat_trace, sieve_trace, transfer_concat,
    transfer_ode, unimodularity_defect, CellPotential, ContinuumWord,
};
use gaprich::Mat2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cell(rng: &mut ChaCha8Rng, amp: f64) -> CellPotential {
    let n = [1, 2, 4, 8][rng.gen_range(0..4)];
    let a = rng.gen_range(0.2..2.0);
    CellPotential::new(a, (0..n).map(|_| rng.gen_range(-amp..amp)).collect()).unwrap()
}

/// Classical RK4 on `M' = [[0, 1], [φ(x) - E, 0]] M` with `steps` steps;
/// step boundaries fall on the subcell boundaries.
fn rk4(phi: &CellPotential, e: f64, lambda: f64, steps: usize) -> Mat2 {
    let h = phi.a / steps as f64;
    let rhs = |x: f64, m: &Mat2| {
        let w = lambda * phi.value_at(x) - e;
        Mat2::new(m.a21, m.a22, w * m.a11, w * m.a12)
    };
    let add = |m: &Mat2, k: &Mat2, s: f64| Mat2::new(m.a11 + s * k.a11, m.a12 + s * k.a12, m.a21 + s * k.a21, m.a22 + s * k.a22);
    let mut m = Mat2::IDENTITY;
    for i in 0..steps {
        // sample inside the step so that the piecewise value is unambiguous
        let x = (i as f64 + 0.5) * h;
        let k1 = rhs(x, &m);
        let k2 = rhs(x, &add(&m, &k1, h / 2.0));
        let k3 = rhs(x, &add(&m, &k2, h / 2.0));
        let k4 = rhs(x, &add(&m, &k3, h));
        m = Mat2::new(
            m.a11 + h / 6.0 * (k1.a11 + 2.0 * k2.a11 + 2.0 * k3.a11 + k4.a11),
            m.a12 + h / 6.0 * (k1.a12 + 2.0 * k2.a12 + 2.0 * k3.a12 + k4.a12),
            m.a21 + h / 6.0 * (k1.a21 + 2.0 * k2.a21 + 2.0 * k3.a21 + k4.a21),
            m.a22 + h / 6.0 * (k1.a22 + 2.0 * k2.a22 + 2.0 * k3.a22 + k4.a22),
        );
    }
    m
}

#[test]
fn cells_are_unimodular() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let c = random_cell(&mut rng, 10.0);
        let m = transfer_ode(&c, rng.gen_range(-10.0..10.0), 1.0);
        assert!((m.det() - 1.0).abs() < 1e-9 * m.max_abs().powi(2).max(1.0));
    }
}

#[test]
fn unimodularity_identity_on_grid() {
    for i in 0..=2000 {
        let z = -100.0 + 0.1 * i as f64;
        assert!(unimodularity_defect(z).abs() < 1e-12, "z={z}");
    }
}

#[test]
fn matches_runge_kutta() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let c = random_cell(&mut rng, 10.0);
        let e = rng.gen_range(-10.0..10.0);
        let exact = transfer_ode(&c, e, 1.0);
        let approx = rk4(&c, e, 1.0, 4096);
        assert!(exact.sub(&approx).max_abs() < 1e-6 * exact.max_abs().max(1.0), "{exact:?} vs {approx:?}");
    }
}

#[test]
fn half_cells_multiply() {
    let c = CellPotential::new(1.0, vec![2.0, -1.0]).unwrap();
    let e = 0.7;
    let product = free_transfer(0.5, e + 1.0).mul(&free_transfer(0.5, e - 2.0));
    assert!(transfer_ode(&c, e, 1.0).approx_eq(&product, 1e-12));
}

#[test]
fn concatenation_reverses_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n1 = rng.gen_range(1..=4);
        let n2 = rng.gen_range(1..=4);
        let x = ContinuumWord::new((0..n1).map(|_| random_cell(&mut rng, 3.0)).collect()).unwrap();
        let y = ContinuumWord::new((0..n2).map(|_| random_cell(&mut rng, 3.0)).collect()).unwrap();
        let e = rng.gen_range(-2.0..5.0);
        let l = rng.gen_range(0.5..2.0);
        let xy = transfer_concat(&x.concat(&y), e, l);
        let prod = transfer_concat(&y, e, l).mul(&transfer_concat(&x, e, l));
        assert!(xy.sub(&prod).max_abs() < 1e-8 * xy.max_abs().max(1.0));
    }
}

#[test]
fn free_bands_for_several_lengths() {
    for a in [1.0, PI, 2.5] {
        let w = ContinuumWord::single(CellPotential::zero(a).unwrap());
        let (lo, hi) = (0.05, 30.0);
        let b = continuum_bands(&w, lo, hi, 1.0, 500).unwrap();
        let mut edges = vec![lo];
        let mut k = 1.0;
        while (k * PI / a).powi(2) < hi {
            edges.push((k * PI / a).powi(2));
            k += 1.0;
        }
        edges.push(hi);
        assert_eq!(b.bands().len(), edges.len() - 1, "a={a}: {:?}", b.bands());
        for (iv, e) in b.bands().iter().zip(edges.windows(2)) {
            assert!((iv.lo - e[0]).abs() < 1e-7 && (iv.hi - e[1]).abs() < 1e-7, "a={a}: {iv:?} vs {e:?}");
        }
    }
}

#[test]
fn constant_potential_shifts_bands() {
    let a = 1.3;
    let v = 0.8;
    let lambda = 2.0;
    let free = continuum_bands(&ContinuumWord::single(CellPotential::zero(a).unwrap()), -3.0, 20.0, 1.0, 400).unwrap();
    let shifted = continuum_bands(
        &ContinuumWord::single(CellPotential::constant(a, v).unwrap()),
        -3.0 + lambda * v,
        20.0 + lambda * v,
        lambda,
        400,
    )
    .unwrap();
    assert_eq!(free.bands().len(), shifted.bands().len());
    for (f, s) in free.bands().iter().zip(shifted.bands()) {
        assert!((f.lo + lambda * v - s.lo).abs() < 1e-7 && (f.hi + lambda * v - s.hi).abs() < 1e-7);
    }
}

#[test]
fn deep_well_energy_is_outside_spectrum() {
    let w = ContinuumWord::single(CellPotential::new(1.0, vec![-5.0, -8.0, -5.0]).unwrap());
    let e = -20.0;
    assert!(transfer_concat(&w, e, 1.0).trace() > 2.0);
    let b = continuum_bands(&w, -25.0, 5.0, 1.0, 300).unwrap();
    assert!(!b.contains(e));
}

#[test]
fn sieve_trace_formula_matches_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let psi = random_cell(&mut rng, 3.0);
        let a = rng.gen_range(0.3..2.0);
        let e = rng.gen_range(-3.0..6.0);
        let l = rng.gen_range(-5.0..20.0);
        let w = ContinuumWord::new(vec![CellPotential::constant(a, l).unwrap(), psi.clone()]).unwrap();
        let direct = transfer_concat(&w, e, 1.0).trace();
        let formula = sieve_trace(&transfer_ode(&psi, e, 1.0), a, e, l);
        assert!((direct - formula).abs() < 1e-9 * direct.abs().max(1.0));
    }
}

#[test]
fn sieve_gap_grows_with_coupling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let psi = random_cell(&mut rng, 2.0);
        let a = rng.gen_range(0.3..2.0);
        let e = rng.gen_range(-3.0..6.0);
        let l = continuum_sieve_gap(&psi, a, e, 200.0).unwrap();
        assert!((0.0..=200.0).contains(&l));
        assert!(sieve_trace(&transfer_ode(&psi, e, 1.0), a, e, l).abs() > 3.0);
    }
}

#[test]
fn repeat_gap_is_above_the_energy() {
    for e in [-3.0, 0.0, 0.4, 12.0] {
        let l = continuum_repeat_gap(0.7, 3, e, 100.0).unwrap();
        assert_eq!(l, e + 1.0);
        assert!(repeat_trace(0.7, 3, e, l) > 2.0);
        // λ = E is parabolic
        assert!((repeat_trace(0.7, 3, e, e) - 2.0).abs() < 1e-15);
    }
    assert!(continuum_repeat_gap(1.0, 2, 5.0, 4.0).is_err());
}
