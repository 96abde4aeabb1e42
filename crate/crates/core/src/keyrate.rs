//! Final key length and rates.

use serde::{Deserialize, Serialize};

use crate::config::{Intensity, ProtocolConfig};
use crate::counts::{Basis, CountTable, Setting};
use crate::decoy::DecoyEstimates;
use crate::error::{Error, Result};
use crate::math::binary_entropy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeySetting {
    pub set_a: String,
    pub set_b: String,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "EM")]
    pub em: f64,
    pub qber: f64,
    /// f·M·h(QBER)
    pub leak_ec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyLength {
    pub bits: f64,
    pub privacy_term: f64,
    pub leak_ec: f64,
    pub clamped: bool,
    pub settings: Vec<KeySetting>,
}

/// K = M11·(1 − h(e_ph)) − Σ f·M·h(E) over the four Z key settings, clamped at 0.
pub fn key_length(est: &DecoyEstimates, counts: &CountTable, f_ec: f64) -> Result<KeyLength> {
    if !(0.0..=1.0).contains(&est.e_ph_u) {
        return Err(Error::Domain(format!("phase error bound {} outside [0, 1]", est.e_ph_u)));
    }
    let privacy_term = est.m11_z_l * (1.0 - binary_entropy(est.e_ph_u)?);
    let mut settings = Vec::new();
    let mut leak = 0.0;
    for s in Setting::ALL.into_iter().filter(|s| s.both_nonzero()) {
        let c = counts.get(Basis::Z, s);
        let qber = if c.m > 0.0 { c.em / c.m } else { 0.0 };
        let l = f_ec * c.m * binary_entropy(qber)?;
        leak += l;
        let (a, b) = s.label(Basis::Z);
        settings.push(KeySetting { set_a: a.into(), set_b: b.into(), m: c.m, em: c.em, qber, leak_ec: l });
    }
    let raw = privacy_term - leak;
    Ok(KeyLength { bits: raw.max(0.0), privacy_term, leak_ec: leak, clamped: raw < 0.0, settings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRates {
    /// Bits per pulse pair, 2K/N.
    pub r_per_pair: f64,
    /// Bits per (μ_a, μ_b) Z pair.
    pub r_per_mumu_pair: f64,
    pub r_per_second: f64,
    pub elapsed_s: f64,
}

pub fn key_rates(k_bits: f64, counts: &CountTable, cfg: &ProtocolConfig) -> Result<KeyRates> {
    if k_bits < 0.0 {
        return Err(Error::Domain("negative key length".into()));
    }
    let mumu = counts.get(Basis::Z, Setting::new(Intensity::Signal, Intensity::Signal)).m;
    if mumu <= 0.0 && k_bits > 0.0 {
        return Err(Error::Data("no (mu, mu) pairs to normalize the key rate".into()));
    }
    let elapsed_s = cfg.elapsed_s();
    let per = |d: f64| if k_bits == 0.0 { 0.0 } else { k_bits / d };
    Ok(KeyRates {
        r_per_pair: per(cfg.n_rounds as f64 / 2.0),
        r_per_mumu_pair: per(mumu),
        r_per_second: per(elapsed_s),
        elapsed_s,
    })
}
