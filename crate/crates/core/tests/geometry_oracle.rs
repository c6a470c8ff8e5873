use std::f64::consts::PI;
use std::time::Instant;

use improvevolve_core::geometry::{intersection_area, penetration_depth, Hexagon};
use improvevolve_core::Point2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pair(rng: &mut ChaCha8Rng) -> (Hexagon, Hexagon) {
    let hex = |r: &mut ChaCha8Rng| {
        Hexagon::unit(Point2::new(r.random_range(-2.5..2.5), r.random_range(-2.5..2.5)), r.random_range(0.0..2.0 * PI))
    };
    (hex(rng), hex(rng))
}

#[test]
fn depth_sign_agrees_with_clipped_area() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let mut overlapping = 0;
    for k in 0..1000 {
        let (a, b) = random_pair(&mut rng);
        let depth = penetration_depth(&a, &b);
        let area = intersection_area(&a, &b);
        assert_eq!(depth > 0.0, area > 1e-9, "pair {k}: depth {depth}, area {area}, {a:?} {b:?}");
        overlapping += usize::from(area > 1e-9);
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
    // both branches must actually be exercised
    assert!((100..900).contains(&overlapping), "{overlapping}");
}

fn hexagon() -> impl Strategy<Value = Hexagon> {
    (-3.0..3.0f64, -3.0..3.0f64, 0.0..2.0 * PI).prop_map(|(x, y, t)| Hexagon::unit(Point2::new(x, y), t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn depth_is_symmetric(a in hexagon(), b in hexagon()) {
        prop_assert!((penetration_depth(&a, &b) - penetration_depth(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn depth_and_area_are_translation_invariant(a in hexagon(), b in hexagon(), dx in -10.0..10.0f64, dy in -10.0..10.0f64) {
        let shift = |h: &Hexagon| Hexagon::unit(Point2::new(h.center.x + dx, h.center.y + dy), h.angle);
        prop_assert!((penetration_depth(&a, &b) - penetration_depth(&shift(&a), &shift(&b))).abs() < 1e-9);
        prop_assert!((intersection_area(&a, &b) - intersection_area(&shift(&a), &shift(&b))).abs() < 1e-9);
    }

    #[test]
    fn sixty_degree_turns_change_nothing(a in hexagon(), b in hexagon(), k in 1..6i32) {
        let turn = |h: &Hexagon| Hexagon::unit(h.center, h.angle + k as f64 * PI / 3.0);
        prop_assert!((penetration_depth(&a, &b) - penetration_depth(&turn(&a), &b)).abs() < 1e-9);
    }
}
