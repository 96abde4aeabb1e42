//! Count tables generated from known photon-number-resolved yields.

#![allow(dead_code)]

use mpqkd::math::poisson_pmf;
use mpqkd::{Basis, CountTable, Intensity, ProtocolConfig, Setting};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const KMAX: u32 = 40;

pub fn base_config() -> ProtocolConfig {
    ProtocolConfig::from_json(include_str!("../../fixtures/symmetric.json")).unwrap()
}

pub struct Fixture {
    pub cfg: ProtocolConfig,
    pub counts: CountTable,
    pub m11_z: f64,
    pub m11_x: f64,
    pub e11_x: f64,
}

/// Per-side total-intensity prior of a round pair, written out from the sending probabilities.
fn side_prior(p: [f64; 3], basis: Basis, level: Intensity) -> f64 {
    let [p0, pn, pm] = p;
    match (basis, level) {
        (_, Intensity::Vacuum) => p0 * p0,
        (Basis::Z, Intensity::Decoy) => 2.0 * p0 * pn,
        (Basis::Z, Intensity::Signal) => 2.0 * p0 * pm,
        (Basis::X, Intensity::Decoy) => pn * pn,
        (Basis::X, Intensity::Signal) => pm * pm,
    }
}

pub fn random_fixture(rng: &mut ChaCha8Rng) -> Fixture {
    let mut cfg = base_config();
    cfg.mu_a = rng.random_range(0.2..0.6);
    cfg.mu_b = rng.random_range(0.2..0.6);
    cfg.nu_a = rng.random_range(0.02..0.1);
    cfg.nu_b = rng.random_range(0.02..0.1);
    cfg.p_mu_a = rng.random_range(0.15..0.4);
    cfg.p_nu_a = rng.random_range(0.15..0.4);
    cfg.p_mu_b = rng.random_range(0.15..0.4);
    cfg.p_nu_b = rng.random_range(0.15..0.4);
    let eta_a = 10f64.powf(rng.random_range(-3.0..-1.0));
    let eta_b = 10f64.powf(rng.random_range(-3.0..-1.0));
    let y0 = 10f64.powf(rng.random_range(-8.0..-6.0));
    let e11 = rng.random_range(0.02..0.3);
    let yield_k = |ka: u32, kb: u32| 1.0 - (1.0 - y0) * (1.0 - eta_a).powi(ka as i32) * (1.0 - eta_b).powi(kb as i32);
    let err_k = |ka: u32, kb: u32| if ka == 0 || kb == 0 { 0.5 } else if ka == 1 && kb == 1 { e11 } else { 0.25 };
    let pairs_sent = 1e12;
    let d = cfg.phase_count_d as f64;
    let (pa, pb) = (cfg.probs(mpqkd::Side::Alice), cfg.probs(mpqkd::Side::Bob));

    let mut counts = CountTable::new();
    let (mut m11_z, mut m11_x, mut e11_x) = (0.0, 0.0, 0.0);
    for basis in [Basis::Z, Basis::X] {
        let mult = if basis == Basis::X { 2.0 } else { 1.0 };
        for s in Setting::ALL {
            let n_s = pairs_sent * side_prior(pa, basis, s.a) * side_prior(pb, basis, s.b);
            let la = mult * cfg.intensity(mpqkd::Side::Alice, s.a);
            let lb = mult * cfg.intensity(mpqkd::Side::Bob, s.b);
            let keep = if basis == Basis::X && s.both_nonzero() { 2.0 / d } else { 1.0 };
            let (mut m, mut em) = (0.0, 0.0);
            for ka in 0..=KMAX {
                for kb in 0..=KMAX {
                    let v = n_s * keep * poisson_pmf(ka, la) * poisson_pmf(kb, lb) * yield_k(ka, kb);
                    m += v;
                    em += v * err_k(ka, kb);
                    if ka == 1 && kb == 1 {
                        // Single-photon pairs counted before phase sifting.
                        let unsifted = v / keep;
                        match basis {
                            Basis::Z => m11_z += unsifted,
                            Basis::X => {
                                m11_x += unsifted;
                                e11_x += unsifted * e11;
                            }
                        }
                    }
                }
            }
            counts.set(basis, s, m, em);
        }
    }
    Fixture { cfg, counts, m11_z, m11_x, e11_x }
}
