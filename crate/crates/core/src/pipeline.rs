//! End-to-end pipelines shared by the command-line tool and the test suites.

use serde::{Deserialize, Serialize};

use crate::config::ProtocolConfig;
use crate::counts::CountTable;
use crate::decoy::{estimate, DecoyOptions, SettingBound, SettingShare};
use crate::error::Result;
use crate::io::RunManifest;
use crate::keyrate::{key_length, key_rates, KeySetting};
use crate::pairing::{process_rounds, tally, PairRecord};
use crate::sim::{simulate_clicked, Outcome, RoundRecord, SimulatedPhaseEstimate};

#[derive(Debug, Clone)]
pub struct Simulation {
    pub rounds: u64,
    pub clicked: u64,
    pub double_clicks: u64,
    /// Rounds with at least one click.
    pub records: Vec<RoundRecord>,
    pub pairs: Vec<PairRecord>,
    pub counts: CountTable,
}

/// Simulate `n` rounds, pair the single-click rounds and tally counts.
pub fn simulate_counts(cfg: &ProtocolConfig, seed: u64, n: u64) -> Result<Simulation> {
    let clicked = simulate_clicked(cfg, seed, n)?;
    let mut phase = SimulatedPhaseEstimate::new(cfg, seed);
    let pairs = process_rounds(&clicked, cfg.l_max, cfg.phase_count_d, &mut |i, j| phase.delta_theta(i, j));
    let counts = tally(&pairs);
    Ok(Simulation {
        rounds: n,
        clicked: clicked.len() as u64,
        double_clicks: clicked.iter().filter(|r| r.outcome == Outcome::Both).count() as u64,
        pairs,
        counts,
        records: clicked,
    })
}

/// Flat report of one post-processing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub manifest: Option<RunManifest>,
    #[serde(rename = "M11_Z_L")]
    pub m11_z_l: f64,
    #[serde(rename = "M11_X_L")]
    pub m11_x_l: f64,
    #[serde(rename = "E11_X_U")]
    pub e11_x_u: f64,
    #[serde(rename = "e_ph_U")]
    pub e_ph_u: f64,
    /// Set when E11_X_U > M11_X_L and the phase error was capped at 1/2.
    pub e_ph_capped: bool,
    pub m11_per_setting: Vec<SettingShare>,
    pub key_settings: Vec<KeySetting>,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "K_clamped")]
    pub k_clamped: bool,
    pub privacy_term: f64,
    pub leak_ec: f64,
    #[serde(rename = "R_per_pair")]
    pub r_per_pair: f64,
    #[serde(rename = "R_per_mumu_pair")]
    pub r_per_mumu_pair: f64,
    #[serde(rename = "R_per_second")]
    pub r_per_second: f64,
    pub elapsed_s: f64,
    pub k_cut_z: usize,
    pub k_cut_x: usize,
    pub lp_iterations: usize,
    pub setting_bounds: Vec<SettingBound>,
    pub config: ProtocolConfig,
}

impl KeyRateReport {
    /// M11 lower bound attributed to a Z key setting, by label.
    pub fn m11_setting(&self, a: &str, b: &str) -> Option<f64> {
        self.m11_per_setting.iter().find(|s| s.set_a == a && s.set_b == b).map(|s| s.m11_l)
    }
}

/// Counts → decoy bounds → phase error → key length and rates.
pub fn postprocess(counts: &CountTable, cfg: &ProtocolConfig, opts: &DecoyOptions) -> Result<KeyRateReport> {
    counts.validate()?;
    let est = estimate(counts, cfg, opts)?;
    let key = key_length(&est, counts, cfg.f_ec)?;
    let rates = key_rates(key.bits, counts, cfg)?;
    Ok(KeyRateReport {
        manifest: None,
        m11_z_l: est.m11_z_l,
        m11_x_l: est.m11_x_l,
        e11_x_u: est.e11_x_u,
        e_ph_u: est.e_ph_u,
        e_ph_capped: est.e_ph_guard,
        m11_per_setting: est.per_setting,
        key_settings: key.settings,
        k: key.bits,
        k_clamped: key.clamped,
        privacy_term: key.privacy_term,
        leak_ec: key.leak_ec,
        r_per_pair: rates.r_per_pair,
        r_per_mumu_pair: rates.r_per_mumu_pair,
        r_per_second: rates.r_per_second,
        elapsed_s: rates.elapsed_s,
        k_cut_z: est.k_cut_z,
        k_cut_x: est.k_cut_x,
        lp_iterations: est.lp_iterations,
        setting_bounds: est.bounds,
        config: cfg.clone(),
    })
}

/// Aligned text table with the usual row names.
pub fn report_table(r: &KeyRateReport) -> String {
    let mut out = String::new();
    let mut row = |name: &str, value: String| out.push_str(&format!("{name:<28}{value:>18}\n"));
    for s in &r.m11_per_setting {
        row(&format!("M11 ({}, {})", s.set_a, s.set_b), format!("{:.0}", s.m11_l));
    }
    row("M11 Z (total)", format!("{:.0}", r.m11_z_l));
    row("M11 X", format!("{:.0}", r.m11_x_l));
    row("E11 X", format!("{:.0}", r.e11_x_u));
    row("e_ph", format!("{:.4}", r.e_ph_u));
    for s in &r.key_settings {
        row(&format!("E ({}, {})", s.set_a, s.set_b), format!("{:.4e}", s.qber));
    }
    row("MR (bits)", format!("{:.0}", r.k));
    row("R (bit per pair)", format!("{:.3e}", r.r_per_pair));
    row("R (bit per second)", format!("{:.2}", r.r_per_second));
    out
}
