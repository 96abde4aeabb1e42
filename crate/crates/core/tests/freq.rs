use std::f64::consts::PI;

use mpqkd::freq::*;
use mpqkd::sim::{simulate_reference_blocks, Detector, ReferenceClick};
use mpqkd::ProtocolConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const TAU: f64 = 1.6e-9;

/// Clicks at random pulse slots within `span` seconds, detector L with
/// probability (1 + cos θ)/2 where θ = φ0 + ω t.
fn synthetic_group(rng: &mut ChaCha8Rng, n: usize, span: f64, omega: f64) -> ClickGroup {
    let slots = (span / TAU) as u64;
    let mut ks: Vec<u64> = (0..n).map(|_| rng.random_range(0..slots)).collect();
    ks.sort_unstable();
    ks.dedup();
    let phi0 = rng.random_range(0.0..2.0 * PI);
    let clicks: Vec<ReferenceClick> = ks
        .iter()
        .map(|&k| {
            let t = k as f64 * TAU;
            let l = rng.random::<f64>() < 0.5 + 0.5 * (phi0 + omega * t).cos();
            ReferenceClick { time_s: t, detector: if l { Detector::L } else { Detector::R } }
        })
        .collect();
    let span_s = clicks[clicks.len() - 1].time_s - clicks[0].time_s;
    ClickGroup { clicks, span_s }
}

fn search() -> (f64, f64) {
    let w = 2.0 * PI * 200e3;
    (-w, w)
}

#[test]
fn likelihood_is_scale_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = synthetic_group(&mut rng, 120, 1e-3, 2.0 * PI * 5e3);
    let stretched = ClickGroup {
        clicks: g.clicks.iter().map(|c| ReferenceClick { time_s: 2.0 * c.time_s, ..*c }).collect(),
        span_s: 2.0 * g.span_s,
    };
    for i in 0..200 {
        let w = -1e6 + i as f64 * 1e4;
        assert_eq!(log_likelihood(&g, w, TAU), log_likelihood(&stretched, w / 2.0, 2.0 * TAU));
    }
}

#[test]
fn recovers_constant_offset_at_information_limit() {
    let omega = 2.0 * PI * 5e3;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..2 {
        let g = synthetic_group(&mut rng, 300, 1e-3, omega);
        let est = estimate_group_omega(&g, search(), TAU).unwrap();
        // One unit of Fisher information per click about the phase.
        let mean = g.clicks.iter().map(|c| c.time_s).sum::<f64>() / g.clicks.len() as f64;
        let sxx: f64 = g.clicks.iter().map(|c| (c.time_s - mean).powi(2)).sum();
        let crb = 1.0 / sxx.sqrt();
        assert!((est - omega).abs() <= 4.0 * crb, "estimate {est}, truth {omega}, CRB sigma {crb}");
    }
}

#[test]
fn estimate_beats_random_probes() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let g = synthetic_group(&mut rng, 80, 1e-3, 2.0 * PI * 5e3);
    let est = estimate_group_omega(&g, search(), TAU).unwrap();
    let f = GroupLikelihood::new(&g, TAU);
    let best = f.eval(est);
    for _ in 0..10_000 {
        let w = rng.random_range(search().0..search().1);
        assert!(best >= f.eval(w) - 1e-9);
    }
}

#[test]
fn linear_trajectory_within_standard_errors() {
    let (a, b) = (2.0 * PI * 4e3, 2.0 * PI * 300.0);
    let noise = 150.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dist = Normal::new(0.0, noise).unwrap();
    let pts: Vec<(f64, f64)> = (0..200).map(|i| {
        let t = 0.5e-3 + i as f64 * 1e-3;
        (t, a + b * t + dist.sample(&mut rng))
    }).collect();
    let traj = fit_trajectory(&pts, 1, 200).unwrap();
    assert_eq!(traj.windows.len(), 1);
    let c = &traj.windows[0].coefficients;
    let n = pts.len() as f64;
    let tbar = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tbar).powi(2)).sum();
    let se_b = noise / sxx.sqrt();
    let se_a = noise * (1.0 / n + tbar * tbar / sxx).sqrt();
    assert!((c[1] - b).abs() <= 3.0 * se_b, "slope {} vs {b} (se {se_b})", c[1]);
    assert!((c[0] - a).abs() <= 3.0 * se_a, "intercept {} vs {a} (se {se_a})", c[0]);
}

#[test]
fn windows_cover_long_streams() {
    let pts: Vec<(f64, f64)> = (0..450).map(|i| (i as f64 * 1e-3, 1000.0 + 5.0 * i as f64)).collect();
    let traj = fit_trajectory(&pts, 1, 200).unwrap();
    assert_eq!(traj.windows.len(), 2);
    for &(t, w) in &pts {
        assert!((traj.eval(t).unwrap() - w).abs() < 1e-6);
    }
    // Phase is additive across window boundaries.
    let whole = accumulated_phase(&traj, 0.01, 0.4).unwrap();
    let split = accumulated_phase(&traj, 0.01, 0.2).unwrap() + accumulated_phase(&traj, 0.2, 0.4).unwrap();
    assert!((whole - split).abs() < 1e-9 * whole.abs());
}

fn reference_config(hz: f64) -> ProtocolConfig {
    let mut cfg = ProtocolConfig::from_json(include_str!("../fixtures/symmetric.json")).unwrap();
    cfg.channel.delta_omega_profile = vec![2.0 * PI * hz];
    cfg.channel.ref_click_prob = 0.002;
    cfg
}

fn within_3_sigma(stats: &PredictionStats, p: f64) -> bool {
    let sigma = (p * (1.0 - p) / stats.pairs as f64).sqrt();
    (stats.rate - p).abs() <= 3.0 * sigma
}

#[test]
fn perfect_trajectory_gives_quarter_error() {
    // Per-cycle phase advance of a golden angle spreads click phases evenly.
    let hz = 6180.339887;
    let cfg = reference_config(hz);
    let clicks = simulate_reference_blocks(&cfg, 11, 1000).unwrap();
    let truth = OmegaTrajectory::constant(2.0 * PI * hz, 0.0, 1.0);
    let stats = prediction_error_rate(&truth, &clicks).unwrap();
    assert!(within_3_sigma(&stats, 0.25), "{stats:?}");

    let wrong = OmegaTrajectory::constant(2.0 * PI * 2.1e6, 0.0, 1.0);
    let stats = prediction_error_rate(&wrong, &clicks).unwrap();
    assert!(within_3_sigma(&stats, 0.5), "{stats:?}");
}

#[test]
fn zero_offset_errors_come_from_dark_clicks() {
    let mut cfg = reference_config(0.0);
    cfg.channel.dark_rate_hz = 6.25e4;
    let clicks = simulate_reference_blocks(&cfg, 2, 300).unwrap();
    let stats = prediction_error_rate(&OmegaTrajectory::constant(0.0, 0.0, 1.0), &clicks).unwrap();
    // With Δω = 0 every signal click lands in L; every R is a dark click.
    let flips = clicks.windows(2).filter(|w| w[0].detector != w[1].detector).count() as u64;
    assert_eq!(stats.mistakes, flips);
    let gd = cfg.gate_dark();
    let pe = cfg.channel.ref_click_prob;
    let r = gd * (1.0 - pe) * (1.0 - gd) / (1.0 - (1.0 - pe) * (1.0 - gd).powi(2));
    assert!(within_3_sigma(&stats, 2.0 * r * (1.0 - r)), "{stats:?} vs {r}");
}

#[test]
fn too_few_groups_is_an_error() {
    let cfg = reference_config(5e3);
    let one = vec![
        ReferenceClick { time_s: 0.0, detector: Detector::L },
        ReferenceClick { time_s: 1e-6, detector: Detector::R },
    ];
    assert!(estimate_trajectory(&one, &cfg.freq, cfg.timing.tau()).is_err());
    assert!(estimate_trajectory(&[], &cfg.freq, cfg.timing.tau()).is_err());
}

#[test]
fn reference_csv_round_trip() {
    let cfg = reference_config(5e3);
    let clicks = simulate_reference_blocks(&cfg, 5, 3).unwrap();
    assert_eq!(read_reference_csv(&reference_csv(&clicks)).unwrap(), clicks);
    assert!(read_reference_csv("").is_err());
}
