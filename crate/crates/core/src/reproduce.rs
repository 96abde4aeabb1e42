//! Bundled field-test fixtures and the published figures they should reproduce.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ProtocolConfig;
use crate::counts::CountTable;
use crate::error::{Error, Result};
use crate::pipeline::KeyRateReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Symmetric,
    Asymmetric,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::Symmetric, Scenario::Asymmetric];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Symmetric => "symmetric",
            Scenario::Asymmetric => "asymmetric",
        }
    }

    pub fn config_file(self) -> &'static str {
        match self {
            Scenario::Symmetric => "symmetric.json",
            Scenario::Asymmetric => "asymmetric.json",
        }
    }

    pub fn counts_file(self) -> &'static str {
        match self {
            Scenario::Symmetric => "table4_symmetric.csv",
            Scenario::Asymmetric => "table4_asymmetric.csv",
        }
    }

    fn bundled(self) -> (&'static str, &'static str) {
        match self {
            Scenario::Symmetric => (include_str!("../fixtures/symmetric.json"), include_str!("../fixtures/table4_symmetric.csv")),
            Scenario::Asymmetric => (include_str!("../fixtures/asymmetric.json"), include_str!("../fixtures/table4_asymmetric.csv")),
        }
    }

    pub fn bundled_config(self) -> ProtocolConfig {
        ProtocolConfig::from_json(self.bundled().0).expect("bundled config parses")
    }

    pub fn bundled_counts(self) -> CountTable {
        CountTable::from_csv_str(self.bundled().1).expect("bundled counts parse")
    }

    /// Config and counts from a fixture directory instead of the bundled copies.
    pub fn load_from(self, dir: &Path) -> Result<(ProtocolConfig, CountTable)> {
        let cfg = ProtocolConfig::load(&dir.join(self.config_file()))?;
        let counts = CountTable::load(&dir.join(self.counts_file()))?;
        Ok((cfg, counts))
    }

    pub fn parse(s: &str) -> Result<Vec<Scenario>> {
        match s {
            "symmetric" => Ok(vec![Scenario::Symmetric]),
            "asymmetric" => Ok(vec![Scenario::Asymmetric]),
            "all" => Ok(Scenario::ALL.to_vec()),
            other => Err(Error::Config(vec![format!("unknown scenario {other:?}; expected symmetric, asymmetric or all")])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tolerance {
    Relative(f64),
    Absolute(f64),
}

impl Tolerance {
    pub fn accepts(self, target: f64, value: f64) -> bool {
        match self {
            Tolerance::Relative(r) => (value - target).abs() <= r * target.abs(),
            Tolerance::Absolute(a) => (value - target).abs() <= a,
        }
    }

    pub fn describe(self) -> String {
        match self {
            Tolerance::Relative(r) => format!("±{}%", r * 100.0),
            Tolerance::Absolute(a) => format!("±{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub scenario: Scenario,
    pub quantity: String,
    pub target: f64,
    pub computed: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

/// Published results for each scenario: (quantity, target, tolerance).
pub fn targets(s: Scenario) -> Vec<(&'static str, f64, Tolerance)> {
    use Tolerance::*;
    match s {
        Scenario::Symmetric => vec![
            ("M11 (mu, mu)", 43019763.0, Relative(0.01)),
            ("M11 (mu, nu)", 5959809.0, Relative(0.02)),
            ("M11 (nu, mu)", 5944932.0, Relative(0.02)),
            ("M11 (nu, nu)", 823590.0, Relative(0.02)),
            ("e_ph", 0.3131, Absolute(0.01)),
            ("MR", 5477255.0, Relative(0.02)),
            ("R per pair", 5.47e-6, Relative(0.02)),
            ("R per second", 1217.17, Relative(0.005)),
        ],
        Scenario::Asymmetric => vec![
            ("M11 (mu, mu)", 124841146.0, Relative(0.01)),
            ("M11 (mu, nu)", 18596822.0, Relative(0.02)),
            ("M11 (nu, mu)", 6510179.0, Relative(0.02)),
            ("M11 (nu, nu)", 969782.0, Relative(0.02)),
            ("e_ph", 0.3152, Absolute(0.01)),
            ("MR", 13899131.0, Relative(0.02)),
            ("R per pair", 1.38e-5, Relative(0.02)),
            ("R per second", 3088.70, Relative(0.005)),
        ],
    }
}

fn computed(r: &KeyRateReport, quantity: &str) -> f64 {
    let setting = |a, b| r.m11_setting(a, b).unwrap_or(f64::NAN);
    match quantity {
        "M11 (mu, mu)" => setting("mu", "mu"),
        "M11 (mu, nu)" => setting("mu", "nu"),
        "M11 (nu, mu)" => setting("nu", "mu"),
        "M11 (nu, nu)" => setting("nu", "nu"),
        "e_ph" => r.e_ph_u,
        "MR" => r.k,
        "R per pair" => r.r_per_pair,
        "R per second" => r.r_per_second,
        _ => f64::NAN,
    }
}

pub fn check_report(s: Scenario, r: &KeyRateReport) -> Vec<CheckRow> {
    targets(s)
        .into_iter()
        .map(|(q, target, tolerance)| {
            let value = computed(r, q);
            CheckRow { scenario: s, quantity: q.to_string(), target, computed: value, tolerance, pass: tolerance.accepts(target, value) }
        })
        .collect()
}

pub fn check_table(rows: &[CheckRow]) -> String {
    let mut out = format!("{:<12}{:<16}{:>16}{:>16}{:>10}  {}\n", "scenario", "quantity", "target", "computed", "tol", "result");
    for r in rows {
        out.push_str(&format!(
            "{:<12}{:<16}{:>16.6e}{:>16.6e}{:>10}  {}\n",
            r.scenario.name(),
            r.quantity,
            r.target,
            r.computed,
            r.tolerance.describe(),
            if r.pass { "PASS" } else { "FAIL" }
        ));
    }
    out
}
