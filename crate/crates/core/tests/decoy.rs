//! Soundness of the decoy LPs against counts generated from known
//! photon-number-resolved yields.

mod common;

use common::random_fixture;
use mpqkd::decoy::{bound_x_single_photon, estimate, lower_bound_m11, DecoyOptions, KCut};
use mpqkd::Basis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn forward_model_soundness() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_gap = [0.0f64; 2];
    for case in 0..100 {
        let f = random_fixture(&mut rng);
        let widened = DecoyOptions::from_config(&f.cfg);
        let exact = DecoyOptions { widen: false, ..widened };
        for (basis, truth) in [(Basis::Z, f.m11_z), (Basis::X, f.m11_x)] {
            let lb = lower_bound_m11(&f.counts, basis, &f.cfg, &widened).unwrap().value;
            let lb_exact = lower_bound_m11(&f.counts, basis, &f.cfg, &exact).unwrap().value;
            assert!(lb <= truth * (1.0 + 1e-9), "case {case} {basis}: widened {lb} > truth {truth}");
            assert!(lb_exact <= truth * (1.0 + 1e-9), "case {case} {basis}: exact {lb_exact} > truth {truth}");
            assert!(lb <= lb_exact * (1.0 + 1e-9));
            let gap = 1.0 - lb_exact / truth;
            let w = &mut worst_gap[(basis == Basis::X) as usize];
            *w = w.max(gap);
            if basis == Basis::Z {
                assert!(gap <= 0.05, "case {case}: exact bound {lb_exact} vs truth {truth}");
            }
        }
        let x = bound_x_single_photon(&f.counts, &f.cfg, &widened).unwrap();
        assert!(x.e11_x_u >= f.e11_x * (1.0 - 1e-9), "case {case}: E11 {} < truth {}", x.e11_x_u, f.e11_x);
        let x = bound_x_single_photon(&f.counts, &f.cfg, &exact).unwrap();
        assert!(x.e11_x_u >= f.e11_x * (1.0 - 1e-9));
    }
    println!("worst exact-bound gap Z {:.4} X {:.4}", worst_gap[0], worst_gap[1]);
}

#[test]
fn widening_and_smaller_epsilon_only_loosen() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let f = random_fixture(&mut rng);
        let mut prev = f64::INFINITY;
        let mut prev_e = 0.0;
        let exact = DecoyOptions { widen: false, ..DecoyOptions::from_config(&f.cfg) };
        for opts in [exact, DecoyOptions { epsilon: 1e-6, ..DecoyOptions::from_config(&f.cfg) }, DecoyOptions { epsilon: 1e-12, ..DecoyOptions::from_config(&f.cfg) }] {
            let est = estimate(&f.counts, &f.cfg, &opts).unwrap();
            assert!(est.m11_z_l <= prev * (1.0 + 1e-9));
            assert!(est.e11_x_u >= prev_e * (1.0 - 1e-9));
            prev = est.m11_z_l;
            prev_e = est.e11_x_u;
        }
    }
}

#[test]
fn larger_cutoff_never_raises_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = random_fixture(&mut rng);
    let opts = |k| DecoyOptions { k_cut: KCut::Fixed(k), ..DecoyOptions::from_config(&f.cfg) };
    let a = lower_bound_m11(&f.counts, Basis::Z, &f.cfg, &opts(14)).unwrap().value;
    let b = lower_bound_m11(&f.counts, Basis::Z, &f.cfg, &opts(18)).unwrap().value;
    assert!(b <= a * (1.0 + 1e-6), "{b} > {a}");
}

#[test]
fn cutoff_above_limit_rejected() {
    let f = random_fixture(&mut ChaCha8Rng::seed_from_u64(1));
    let opts = DecoyOptions { k_cut: KCut::Fixed(25), ..DecoyOptions::from_config(&f.cfg) };
    assert!(lower_bound_m11(&f.counts, Basis::Z, &f.cfg, &opts).is_err());
}
