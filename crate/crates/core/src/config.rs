//! Protocol, channel and timing parameters.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Per-round intensity choice. Real values live in [`ProtocolConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Intensity {
    Vacuum,
    Decoy,
    Signal,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::Vacuum, Intensity::Decoy, Intensity::Signal];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_vacuum(self) -> bool {
        self == Intensity::Vacuum
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Alice,
    Bob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    pub eta_a: f64,
    pub eta_b: f64,
    pub eta_det: f64,
    pub dark_rate_hz: f64,
    /// Variance rate of the relative channel phase random walk, rad²/s.
    #[serde(default)]
    pub phase_drift_rate: f64,
    /// Polynomial coefficients of the true Δω(t) in rad/s, lowest order first.
    #[serde(default)]
    pub delta_omega_profile: Vec<f64>,
    #[serde(default)]
    pub sigma_theta_residual: f64,
    /// Probability that a reference-region pulse yields a photon event.
    #[serde(default = "default_ref_click_prob")]
    pub ref_click_prob: f64,
}

fn default_ref_click_prob() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    pub system_rate_hz: f64,
    pub cycle_us: f64,
    pub ref_us: f64,
    pub recovery_us: f64,
    pub qkd_duty: f64,
}

impl TimingConfig {
    /// Inter-pulse interval τ in seconds.
    pub fn tau(&self) -> f64 {
        1.0 / self.system_rate_hz
    }

    pub fn cycle_s(&self) -> f64 {
        self.cycle_us * 1e-6
    }

    /// QKD-region pulses in one cycle.
    pub fn qkd_pulses_per_cycle(&self) -> u64 {
        ((self.qkd_duty * self.cycle_s() * self.system_rate_hz).floor() as u64).max(1)
    }

    pub fn ref_pulses_per_cycle(&self) -> u64 {
        (self.ref_us * 1e-6 * self.system_rate_hz).floor() as u64
    }

    /// Wall-clock time of QKD round `index` since session start.
    pub fn round_time(&self, index: u64) -> f64 {
        let per = self.qkd_pulses_per_cycle();
        let cycle = index / per;
        let offset = index % per;
        cycle as f64 * self.cycle_s() + (self.ref_us + self.recovery_us) * 1e-6 + offset as f64 * self.tau()
    }

    /// Session length used for per-second rates.
    pub fn elapsed_s(&self, n_rounds: u64) -> f64 {
        n_rounds as f64 / (self.system_rate_hz * self.qkd_duty)
    }
}

/// Settings for the reference-region frequency estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreqConfig {
    /// Half-width of the Δω search range, Hz.
    pub search_hz: f64,
    pub degree: usize,
    pub window_groups: usize,
    pub max_span_s: f64,
    pub max_group_clicks: usize,
}

impl Default for FreqConfig {
    fn default() -> Self {
        FreqConfig {
            search_hz: 200e3,
            degree: 1,
            window_groups: 200,
            max_span_s: 1e-3,
            max_group_clicks: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub mu_a: f64,
    pub nu_a: f64,
    pub mu_b: f64,
    pub nu_b: f64,
    pub p_mu_a: f64,
    pub p_nu_a: f64,
    pub p_mu_b: f64,
    pub p_nu_b: f64,
    #[serde(rename = "phase_count_D")]
    pub phase_count_d: u32,
    pub l_max: u64,
    pub n_rounds: u64,
    pub f_ec: f64,
    pub epsilon: f64,
    pub channel: ChannelModel,
    pub timing: TimingConfig,
    #[serde(default)]
    pub freq: FreqConfig,
}

impl ProtocolConfig {
    pub fn intensity(&self, side: Side, level: Intensity) -> f64 {
        match (side, level) {
            (_, Intensity::Vacuum) => 0.0,
            (Side::Alice, Intensity::Decoy) => self.nu_a,
            (Side::Alice, Intensity::Signal) => self.mu_a,
            (Side::Bob, Intensity::Decoy) => self.nu_b,
            (Side::Bob, Intensity::Signal) => self.mu_b,
        }
    }

    /// Per-round choice probabilities indexed by [`Intensity::index`].
    pub fn probs(&self, side: Side) -> [f64; 3] {
        let (pm, pn) = match side {
            Side::Alice => (self.p_mu_a, self.p_nu_a),
            Side::Bob => (self.p_mu_b, self.p_nu_b),
        };
        [1.0 - pm - pn, pn, pm]
    }

    pub fn gate_dark(&self) -> f64 {
        self.channel.dark_rate_hz / self.timing.system_rate_hz
    }

    pub fn elapsed_s(&self) -> f64 {
        self.timing.elapsed_s(self.n_rounds)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&text)?;
        validate_config(&cfg).map_err(Error::Config)?;
        Ok(cfg)
    }
}

/// Checks every invariant and returns all violations.
pub fn validate_config(cfg: &ProtocolConfig) -> std::result::Result<(), Vec<String>> {
    let mut errs = Vec::new();
    let mut check = |ok: bool, msg: String| {
        if !ok {
            errs.push(msg);
        }
    };
    for (side, mu, nu, pm, pn) in [
        ("a", cfg.mu_a, cfg.nu_a, cfg.p_mu_a, cfg.p_nu_a),
        ("b", cfg.mu_b, cfg.nu_b, cfg.p_mu_b, cfg.p_nu_b),
    ] {
        check(nu >= 0.0, format!("nu_{side} = {nu} is negative"));
        check(nu < mu, format!("nu < mu violated on side {side} (nu = {nu}, mu = {mu})"));
        check((0.0..=1.0).contains(&pm), format!("p_mu_{side} = {pm} outside [0, 1]"));
        check((0.0..=1.0).contains(&pn), format!("p_nu_{side} = {pn} outside [0, 1]"));
        check(pm + pn <= 1.0 + 1e-12, format!("probabilities exceed 1 on side {side} (p_mu + p_nu = {})", pm + pn));
    }
    let d = cfg.phase_count_d;
    check(d >= 2 && d.is_multiple_of(2), format!("phase_count_D = {d} must be even and >= 2"));
    check(cfg.l_max >= 1, "l_max must be >= 1".into());
    check(cfg.n_rounds >= 1, "n_rounds must be >= 1".into());
    check(cfg.f_ec >= 1.0, format!("f_ec = {} must be >= 1", cfg.f_ec));
    check(cfg.epsilon > 0.0 && cfg.epsilon < 1.0, format!("epsilon = {} outside (0, 1)", cfg.epsilon));

    let ch = &cfg.channel;
    for (name, v) in [("eta_a", ch.eta_a), ("eta_b", ch.eta_b), ("eta_det", ch.eta_det)] {
        check(v > 0.0 && v <= 1.0, format!("{name} = {v} outside (0, 1]"));
    }
    check(ch.dark_rate_hz >= 0.0, "dark_rate_hz is negative".into());
    check(ch.phase_drift_rate >= 0.0, "phase_drift_rate is negative".into());
    check(ch.sigma_theta_residual >= 0.0, "sigma_theta_residual is negative".into());
    check(ch.delta_omega_profile.iter().all(|c| c.is_finite()), "delta_omega_profile has non-finite coefficients".into());
    check(
        ch.ref_click_prob > 0.0 && ch.ref_click_prob <= 1.0,
        format!("ref_click_prob = {} outside (0, 1]", ch.ref_click_prob),
    );

    let t = &cfg.timing;
    check(t.system_rate_hz > 0.0, "system_rate_hz must be positive".into());
    check(t.cycle_us > 0.0, "cycle_us must be positive".into());
    check(t.ref_us >= 0.0 && t.recovery_us >= 0.0, "region lengths must be nonnegative".into());
    check(t.qkd_duty > 0.0 && t.qkd_duty <= 1.0, format!("qkd_duty = {} outside (0, 1]", t.qkd_duty));
    check(
        t.ref_us + t.recovery_us + t.qkd_duty * t.cycle_us <= 1.01 * t.cycle_us,
        "cycle regions do not fit in cycle_us".into(),
    );

    let f = &cfg.freq;
    check(f.search_hz > 0.0, "freq.search_hz must be positive".into());
    check(f.window_groups > f.degree, "freq.window_groups must exceed freq.degree".into());
    check(f.max_span_s > 0.0, "freq.max_span_s must be positive".into());
    check(f.max_group_clicks >= 2, "freq.max_group_clicks must be >= 2".into());

    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}
