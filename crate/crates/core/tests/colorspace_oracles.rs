//! Colour transform checks against frozen high-precision oracles.

use radlog_core::colorspace::{inverse_transform, forward_transform, ColorSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALL: [ColorSpace; 6] = [
    ColorSpace::Linear,
    ColorSpace::SrgbGamma,
    ColorSpace::GpLog,
    ColorSpace::TrueLog,
    ColorSpace::LOG100,
    ColorSpace::LOG01,
];

/// Normalised `ln(255 x)` with its clamp at 1/255, evaluated with 50-digit
/// arithmetic by `data/gen_truelog_literal.py` on the grid `i / 9999`.
const TRUELOG_LITERAL: &str = include_str!("data/truelog_literal.txt");

#[test]
fn truelog_matches_extended_precision_literal_form() {
    let mut worst = 0.0f64;
    let mut count = 0;
    for line in TRUELOG_LITERAL.lines() {
        let mut it = line.split_whitespace();
        let i: u32 = it.next().unwrap().parse().unwrap();
        let expected: f64 = it.next().unwrap().parse().unwrap();
        let x = i as f64 / 9999.0;
        let got = forward_transform(ColorSpace::TrueLog, x).unwrap();
        worst = worst.max((got - expected).abs());
        count += 1;
    }
    assert_eq!(count, 10_000);
    assert!(worst < 1e-12, "worst deviation {worst:e}");
}

#[test]
fn round_trips_on_invertible_domain() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for space in ALL {
        let lo = space.lower_bound();
        for _ in 0..100_000 {
            let x = rng.random_range(lo..=1.0);
            let y = forward_transform(space, x).unwrap();
            let back = inverse_transform(space, y).unwrap();
            assert!((back - x).abs() < 1e-9, "{space}: {x} -> {y} -> {back}");
        }
    }
}
