use improvevolve_core::aci::{aci_fitness, aci_generate, autoconvolve, StepFunction};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn f(values: Vec<f64>) -> StepFunction {
    StepFunction::new(values).unwrap()
}

/// Direct double loop over all index pairs.
fn oracle_autoconv(v: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; 2 * v.len() - 1];
    for (i, a) in v.iter().enumerate() {
        for (j, b) in v.iter().enumerate() {
            g[i + j] += a * b;
        }
    }
    g
}

#[test]
fn two_ones_give_three_quarters() {
    assert_eq!(aci_fitness(&f(vec![1.0, 1.0])).c_value, 0.75);
}

#[test]
fn uniform_matches_closed_form() {
    let n = 4096.0f64;
    let expected = (2.0 * (n - 1.0) * n * (2.0 * n - 1.0) / 6.0 + n * n) / (n * n * n);
    let got = aci_fitness(&f(vec![1.0; 4096])).c_value;
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn autoconvolution_matches_double_loop_up_to_256() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in (1..=256).step_by(5).chain([255, 256]) {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let got = autoconvolve(&f(v.clone()));
        let want = oracle_autoconv(&v);
        assert_eq!(got.len(), want.len());
        let scale = want.iter().cloned().fold(0.0, f64::max);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-10 * scale, "n={n}: {g} vs {w}");
        }
    }
}

#[test]
fn large_autoconvolution_stays_close_to_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let v: Vec<f64> = (0..1500).map(|_| rng.random_range(0.0..1.0)).collect();
    let got = autoconvolve(&f(v.clone()));
    let want = oracle_autoconv(&v);
    let scale = want.iter().cloned().fold(0.0, f64::max);
    assert!(got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= 1e-10 * scale));
}

fn random_function(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(2..=600);
    let mut v: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..2.0) }).collect();
    v[rng.random_range(0..n)] = 1.0;
    v
}

#[test]
fn scale_and_reversal_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let v = random_function(&mut rng);
        let c = aci_fitness(&f(v.clone())).c_value;
        for scale in [1e-6, 3.0, 1e6] {
            let s = aci_fitness(&f(v.iter().map(|x| x * scale).collect())).c_value;
            assert!((s - c).abs() < 1e-12, "scale {scale}: {s} vs {c}");
        }
        let r = aci_fitness(&f(v.iter().rev().cloned().collect())).c_value;
        assert!((r - c).abs() < 1e-12, "reversal: {r} vs {c}");
    }
}

#[test]
fn seed_zero_start_clears_one_half() {
    let f = aci_generate(1024, 0).unwrap();
    assert_eq!(f.len(), 1024);
    assert!(aci_fitness(&f).c_value >= 0.5);
}

proptest! {
    #[test]
    fn ratio_lies_in_unit_interval(v in prop::collection::vec(0.0..10.0f64, 1..300)) {
        prop_assume!(v.iter().any(|x| *x > 0.0));
        let c = aci_fitness(&f(v)).c_value;
        prop_assert!(c > 0.0 && c <= 1.0 + 1e-12);
    }

    #[test]
    fn generate_is_valid_and_deterministic(res in 16usize..2048, seed in any::<u64>()) {
        let a = aci_generate(res, seed).unwrap();
        prop_assert_eq!(a.len(), res);
        let c = aci_fitness(&a).c_value;
        prop_assert!(c > 0.0 && c <= 1.0);
        prop_assert_eq!(a, aci_generate(res, seed).unwrap());
    }
}
