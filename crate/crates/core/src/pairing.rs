//! Click pairing, basis sifting, key mapping and tallying.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::config::Intensity;
use crate::counts::{Basis, CountTable, Setting};
use crate::sim::{Outcome, RoundRecord};

/// Scan over clicked positions: the front pairs with the next click when the
/// distance is below `l_max`, otherwise the next click becomes the front.
pub fn pair_positions(indices: &[u64], l_max: u64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(indices.len() / 2);
    let mut front: Option<usize> = None;
    for pos in 0..indices.len() {
        match front {
            None => front = Some(pos),
            Some(f) => {
                if indices[pos] - indices[f] < l_max {
                    pairs.push((f, pos));
                    front = None;
                } else {
                    front = Some(pos);
                }
            }
        }
    }
    pairs
}

pub fn pair_clicks(indices: &[u64], l_max: u64) -> Vec<(u64, u64)> {
    pair_positions(indices, l_max).into_iter().map(|(a, b)| (indices[a], indices[b])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SideLabel {
    Zero,
    Z,
    X,
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairBasis {
    ZeroPair,
    ZPair,
    XPair,
    Discard,
}

impl PairBasis {
    pub fn name(self) -> &'static str {
        match self {
            PairBasis::ZeroPair => "zero",
            PairBasis::ZPair => "Z",
            PairBasis::XPair => "X",
            PairBasis::Discard => "discard",
        }
    }
}

/// One party's label from the intensities of its two paired rounds.
pub fn side_label(i: Intensity, j: Intensity) -> SideLabel {
    use Intensity::*;
    match (i, j) {
        (Vacuum, Vacuum) => SideLabel::Zero,
        (Vacuum, _) | (_, Vacuum) => SideLabel::Z,
        (Decoy, Decoy) | (Signal, Signal) => SideLabel::X,
        _ => SideLabel::Discard,
    }
}

/// Two-party basis from both side labels.
pub fn pair_basis(a: SideLabel, b: SideLabel) -> PairBasis {
    use SideLabel::*;
    match (a, b) {
        (Discard, _) | (_, Discard) => PairBasis::Discard,
        (Zero, Zero) => PairBasis::ZeroPair,
        (Zero, Z) | (Z, Zero) | (Z, Z) => PairBasis::ZPair,
        (Zero, X) | (X, Zero) | (X, X) => PairBasis::XPair,
        (Z, X) | (X, Z) => PairBasis::Discard,
    }
}

/// Total intensity level of one side's pair (the doubled level for X labels).
fn side_total(i: Intensity, j: Intensity) -> Intensity {
    if i.is_vacuum() {
        j
    } else {
        i
    }
}

/// Z key bits from the round intensities, `None` for estimation-only pairs.
pub fn map_z_key(a: (Intensity, Intensity), b: (Intensity, Intensity)) -> Option<(u8, u8)> {
    let za = side_label(a.0, a.1);
    let zb = side_label(b.0, b.1);
    if za != SideLabel::Z || zb != SideLabel::Z {
        return None;
    }
    let chi_a = if a.0.is_vacuum() { 0 } else { 1 };
    let chi_b = if b.0.is_vacuum() { 1 } else { 0 };
    Some((chi_a, chi_b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XKey {
    pub chi_a: u8,
    pub chi_b: u8,
    pub theta_a: f64,
    pub theta_b: f64,
    pub retained: bool,
    /// Window integer k with θ_b − θ_a − Δθ ≈ kπ.
    pub k: i64,
}

/// Bit and sub-π phase of one side from its two phase indices.
pub fn x_bit_theta(phase_i: u32, phase_j: u32, d: u32) -> (u8, f64) {
    let diff = (phase_j as i64 - phase_i as i64).rem_euclid(d as i64) as u32;
    let half = d / 2;
    let chi = (diff >= half) as u8;
    (chi, 2.0 * PI * (diff % half) as f64 / d as f64)
}

/// X key mapping with the phase-sifting window of half-width π/D taken modulo π.
/// Edge ties are retained.
pub fn map_x_key(phases_a: (u32, u32), phases_b: (u32, u32), delta_theta: f64, d: u32, sift: bool) -> XKey {
    let (chi_a, theta_a) = x_bit_theta(phases_a.0, phases_a.1, d);
    let (chi_b, theta_b) = x_bit_theta(phases_b.0, phases_b.1, d);
    let x = theta_b - theta_a - delta_theta;
    let k = (x / PI).round();
    let r = x - k * PI;
    let retained = !sift || r.abs() <= PI / d as f64 * (1.0 + 1e-12);
    XKey { chi_a, chi_b, theta_a, theta_b, retained, k: k as i64 }
}

/// Error iff χ_a ⊕ χ_b differs from d ⊕ (k mod 2), d = 0 for the same detector.
pub fn x_error_decision(same_detector: bool, chi_a: u8, chi_b: u8, k: i64) -> bool {
    let d = (!same_detector) as u8;
    let r = k.rem_euclid(2) as u8;
    (chi_a ^ chi_b) != (d ^ r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub i: u64,
    pub j: u64,
    pub basis: PairBasis,
    pub setting: Setting,
    pub chi_a: Option<u8>,
    pub chi_b: Option<u8>,
    pub theta_a: Option<f64>,
    pub theta_b: Option<f64>,
    pub retained: bool,
    pub error: bool,
}

/// Pairs exactly-one-click rounds and maps each pair. `delta_theta(i, j)` is
/// queried for X pairs only.
pub fn process_rounds(
    rounds: &[RoundRecord],
    l_max: u64,
    d: u32,
    delta_theta: &mut dyn FnMut(u64, u64) -> f64,
) -> Vec<PairRecord> {
    let usable: Vec<&RoundRecord> = rounds.iter().filter(|r| matches!(r.outcome, Outcome::L | Outcome::R)).collect();
    let indices: Vec<u64> = usable.iter().map(|r| r.index).collect();
    pair_positions(&indices, l_max)
        .into_iter()
        .map(|(p, q)| map_pair(usable[p], usable[q], d, delta_theta))
        .collect()
}

pub fn map_pair(ri: &RoundRecord, rj: &RoundRecord, d: u32, delta_theta: &mut dyn FnMut(u64, u64) -> f64) -> PairRecord {
    let la = side_label(ri.intensity_a, rj.intensity_a);
    let lb = side_label(ri.intensity_b, rj.intensity_b);
    let basis = pair_basis(la, lb);
    let setting = Setting::new(side_total(ri.intensity_a, rj.intensity_a), side_total(ri.intensity_b, rj.intensity_b));
    let mut rec = PairRecord {
        i: ri.index,
        j: rj.index,
        basis,
        setting,
        chi_a: None,
        chi_b: None,
        theta_a: None,
        theta_b: None,
        retained: false,
        error: false,
    };
    match basis {
        PairBasis::Discard => {}
        PairBasis::ZPair => {
            rec.retained = true;
            if let Some((a, b)) = map_z_key((ri.intensity_a, rj.intensity_a), (ri.intensity_b, rj.intensity_b)) {
                rec.chi_a = Some(a);
                rec.chi_b = Some(b);
                rec.error = a != b;
            }
        }
        PairBasis::XPair | PairBasis::ZeroPair => {
            let dt = delta_theta(ri.index, rj.index);
            let xk = map_x_key((ri.phase_a, rj.phase_a), (ri.phase_b, rj.phase_b), dt, d, setting.both_nonzero());
            rec.chi_a = Some(xk.chi_a);
            rec.chi_b = Some(xk.chi_b);
            rec.theta_a = Some(xk.theta_a);
            rec.theta_b = Some(xk.theta_b);
            rec.retained = xk.retained;
            rec.error = x_error_decision(ri.outcome == rj.outcome, xk.chi_a, xk.chi_b, xk.k);
        }
    }
    rec
}

/// Accumulates pairs into a count table. Zero pairs enter the (0,0) cell of
/// both bases; Z zero cells never carry errors.
pub fn tally(pairs: &[PairRecord]) -> CountTable {
    let mut t = CountTable::new();
    for p in pairs {
        let e = p.error as u8 as f64;
        match p.basis {
            PairBasis::Discard => {}
            PairBasis::ZeroPair => {
                t.add(Basis::Z, p.setting, 1.0, 0.0);
                t.add(Basis::X, p.setting, 1.0, e);
            }
            PairBasis::ZPair => {
                let e = if p.setting.both_nonzero() { e } else { 0.0 };
                t.add(Basis::Z, p.setting, 1.0, e);
            }
            PairBasis::XPair => {
                if p.retained {
                    t.add(Basis::X, p.setting, 1.0, e);
                }
            }
        }
    }
    t
}

pub fn pair_dump_csv(pairs: &[PairRecord]) -> String {
    let mut out = String::from("i,j,basis,set_a,set_b,chi_a,chi_b,retained,error\n");
    let bit = |b: Option<u8>| b.map(|v| v.to_string()).unwrap_or_default();
    for p in pairs {
        let lb = if p.basis == PairBasis::XPair { Basis::X } else { Basis::Z };
        let (sa, sb) = p.setting.label(lb);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            p.i,
            p.j,
            p.basis.name(),
            sa,
            sb,
            bit(p.chi_a),
            bit(p.chi_b),
            p.retained as u8,
            p.error as u8
        ));
    }
    out
}
