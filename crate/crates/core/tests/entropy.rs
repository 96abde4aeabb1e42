use mpqkd::math::{binary_entropy, poisson_pmf};
use proptest::prelude::*;

#[test]
fn endpoints() {
    assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
    assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
    assert!((binary_entropy(0.5).unwrap() - 1.0).abs() < 1e-15);
    assert!(binary_entropy(-0.1).is_err());
    assert!(binary_entropy(1.1).is_err());
}

#[test]
fn symmetric_on_grid() {
    for i in 0..=1000 {
        let x = i as f64 / 1000.0;
        let d = binary_entropy(x).unwrap() - binary_entropy(1.0 - x).unwrap();
        assert!(d.abs() <= 1e-12, "x = {x}: {d:e}");
    }
}

#[test]
fn poisson_normalizes_up_to_largest_total() {
    // Largest intensity sum in the bundled configs is below 1.4; cover twice that.
    for i in 0..=28 {
        let lambda = i as f64 * 0.1;
        let s: f64 = (0..=50).map(|k| poisson_pmf(k, lambda)).sum();
        assert!((s - 1.0).abs() <= 1e-12, "lambda {lambda}: {s}");
    }
}

proptest! {
    #[test]
    fn entropy_in_unit_interval(x in 0.0f64..=1.0) {
        let h = binary_entropy(x).unwrap();
        prop_assert!((0.0..=1.0 + 1e-15).contains(&h));
    }

    #[test]
    fn entropy_increases_towards_half(a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(binary_entropy(lo).unwrap() <= binary_entropy(hi).unwrap());
    }
}
