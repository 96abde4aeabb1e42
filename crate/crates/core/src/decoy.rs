//! Decoy-state estimation of single-photon pair counts and errors.
//!
//! Each observed setting constrains a posterior-weighted sum over photon-number
//! pairs k = (k_a, k_b). The linear programs run in units of the basis total so
//! that all coefficients and right-hand sides are of order one.

use serde::{Deserialize, Serialize};

use crate::bounds::{chernoff_bounds, ExpectationBounds};
use crate::config::{Intensity, ProtocolConfig, Side};
use crate::counts::{Basis, CountTable, Setting};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, Constraint, LinearProgram, Sense};
use crate::math::{poisson_pmf, poisson_tail};

pub const DEFAULT_K_CUT: usize = 12;
pub const MAX_K_CUT: usize = 20;
const TAIL_FRACTION: f64 = 1e-4;
const DROP_BELOW: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    pub basis: Basis,
    pub k_cut: usize,
    /// Row-major: `entries[s * nk + k]` with s in `Setting::ALL` order.
    entries: Vec<f64>,
    pub neglected_mass: [f64; 9],
    /// Whether the 2/D phase-sifting factor has been applied.
    pub sifted: bool,
}

impl PosteriorMatrix {
    pub fn num_k(&self) -> usize {
        (self.k_cut + 1) * (self.k_cut + 1)
    }

    pub fn k_index(&self, ka: usize, kb: usize) -> usize {
        ka * (self.k_cut + 1) + kb
    }

    pub fn k_pair(&self, k: usize) -> (usize, usize) {
        (k / (self.k_cut + 1), k % (self.k_cut + 1))
    }

    pub fn entry(&self, s: Setting, ka: usize, kb: usize) -> f64 {
        self.entries[s.index() * self.num_k() + self.k_index(ka, kb)]
    }

    pub fn row(&self, s: Setting) -> &[f64] {
        let nk = self.num_k();
        &self.entries[s.index() * nk..(s.index() + 1) * nk]
    }

    /// Expected observed counts 𝓜 = Σ_k Pr(μ|k)·M_k for a photon-number vector.
    pub fn forward(&self, m_k: &[f64]) -> [f64; 9] {
        let mut out = [0.0; 9];
        for s in Setting::ALL {
            out[s.index()] = self.row(s).iter().zip(m_k).map(|(p, m)| p * m).sum();
        }
        out
    }
}

/// Mean photon number per side of a pair setting.
pub fn setting_intensities(cfg: &ProtocolConfig, basis: Basis, s: Setting) -> (f64, f64) {
    let mult = match basis {
        Basis::Z => 1.0,
        Basis::X => 2.0,
    };
    (mult * cfg.intensity(Side::Alice, s.a), mult * cfg.intensity(Side::Bob, s.b))
}

/// Nominal probability that a pair of rounds yields a given per-side total.
fn side_pair_prior(cfg: &ProtocolConfig, side: Side, basis: Basis, level: Intensity) -> f64 {
    let [p0, pn, pm] = cfg.probs(side);
    match (basis, level) {
        (_, Intensity::Vacuum) => p0 * p0,
        (Basis::Z, Intensity::Decoy) => 2.0 * p0 * pn,
        (Basis::Z, Intensity::Signal) => 2.0 * p0 * pm,
        (Basis::X, Intensity::Decoy) => pn * pn,
        (Basis::X, Intensity::Signal) => pm * pm,
    }
}

/// Normalized nominal prior over the nine settings of a basis.
pub fn setting_priors(cfg: &ProtocolConfig, basis: Basis) -> [f64; 9] {
    let mut q = [0.0; 9];
    for s in Setting::ALL {
        q[s.index()] = side_pair_prior(cfg, Side::Alice, basis, s.a) * side_pair_prior(cfg, Side::Bob, basis, s.b);
    }
    let total: f64 = q.iter().sum();
    if total > 0.0 {
        q.iter_mut().for_each(|v| *v /= total);
    }
    q
}

/// Posterior Pr(μ|k) over k ∈ [0, k_cut]². For the X basis the four
/// both-nonzero settings are scaled by 2/D after normalization.
pub fn posterior_matrix(cfg: &ProtocolConfig, basis: Basis, k_cut: usize) -> PosteriorMatrix {
    posterior_with_prior(cfg, basis, k_cut, &setting_priors(cfg, basis))
}

pub fn posterior_with_prior(cfg: &ProtocolConfig, basis: Basis, k_cut: usize, prior: &[f64; 9]) -> PosteriorMatrix {
    let nk = (k_cut + 1) * (k_cut + 1);
    let mut entries = vec![0.0; 9 * nk];
    let mut neglected_mass = [0.0; 9];
    let lam: Vec<(f64, f64)> = Setting::ALL.iter().map(|&s| setting_intensities(cfg, basis, s)).collect();
    for (si, &(la, lb)) in lam.iter().enumerate() {
        let (ta, tb) = (poisson_tail(k_cut as u32, la), poisson_tail(k_cut as u32, lb));
        neglected_mass[si] = ta + tb - ta * tb;
        for ka in 0..=k_cut {
            let pa = poisson_pmf(ka as u32, la);
            for kb in 0..=k_cut {
                entries[si * nk + ka * (k_cut + 1) + kb] = prior[si] * pa * poisson_pmf(kb as u32, lb);
            }
        }
    }
    for k in 0..nk {
        let col: f64 = (0..9).map(|s| entries[s * nk + k]).sum();
        if col > 0.0 {
            for s in 0..9 {
                entries[s * nk + k] /= col;
            }
        }
    }
    let sifted = basis == Basis::X;
    if sifted {
        let f = 2.0 / cfg.phase_count_d as f64;
        for s in Setting::ALL.iter().filter(|s| s.both_nonzero()) {
            for v in &mut entries[s.index() * nk..(s.index() + 1) * nk] {
                *v *= f;
            }
        }
    }
    PosteriorMatrix { basis, k_cut, entries, neglected_mass, sifted }
}

/// Largest tolerated neglected tail mass for these counts: the mass times the
/// basis total must stay below 0.01% of the smallest constrained count.
fn tail_budget(counts: &CountTable, basis: Basis) -> f64 {
    let total = counts.total_m(basis);
    let smallest = Setting::ALL.iter().map(|&s| counts.get(basis, s).m.max(1.0)).fold(f64::INFINITY, f64::min);
    if total <= 0.0 {
        f64::INFINITY
    } else {
        TAIL_FRACTION * smallest / total
    }
}

pub fn check_truncation(pm: &PosteriorMatrix, counts: &CountTable) -> Result<()> {
    let budget = tail_budget(counts, pm.basis);
    let worst = pm.neglected_mass.iter().cloned().fold(0.0, f64::max);
    if worst > budget {
        return Err(Error::Numeric(format!(
            "k_cut = {} too small for {} basis: neglected Poisson mass {worst:.3e} exceeds {budget:.3e}",
            pm.k_cut, pm.basis
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KCut {
    /// Smallest k_cut in [12, 20] that passes the truncation check.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyOptions {
    pub epsilon: f64,
    /// Apply Chernoff-Hoeffding widening to observed counts.
    pub widen: bool,
    pub k_cut: KCut,
}

impl DecoyOptions {
    pub fn from_config(cfg: &ProtocolConfig) -> Self {
        DecoyOptions { epsilon: cfg.epsilon, widen: true, k_cut: KCut::Auto }
    }
}

fn prior_for(cfg: &ProtocolConfig, counts: &CountTable, basis: Basis) -> [f64; 9] {
    match counts.sent_pairs_prior {
        Some(_) => {
            let mut q = [0.0; 9];
            for s in Setting::ALL {
                q[s.index()] = counts.prior(basis, s).unwrap_or(0.0);
            }
            q
        }
        None => setting_priors(cfg, basis),
    }
}

pub fn build_posterior(cfg: &ProtocolConfig, counts: &CountTable, basis: Basis, k_cut: KCut) -> Result<PosteriorMatrix> {
    let prior = prior_for(cfg, counts, basis);
    match k_cut {
        KCut::Fixed(k) => {
            if k > MAX_K_CUT {
                return Err(Error::Domain(format!("k_cut = {k} exceeds {MAX_K_CUT}")));
            }
            let pm = posterior_with_prior(cfg, basis, k, &prior);
            check_truncation(&pm, counts)?;
            Ok(pm)
        }
        KCut::Auto => {
            let mut last = None;
            for k in DEFAULT_K_CUT..=MAX_K_CUT {
                let pm = posterior_with_prior(cfg, basis, k, &prior);
                match check_truncation(&pm, counts) {
                    Ok(()) => return Ok(pm),
                    Err(e) => last = Some(e),
                }
            }
            Err(last.unwrap())
        }
    }
}

fn interval(chi: f64, opts: &DecoyOptions) -> Result<ExpectationBounds> {
    if opts.widen {
        chernoff_bounds(chi, opts.epsilon)
    } else {
        Ok(ExpectationBounds::exact(chi))
    }
}

/// Observed count, its interval, and the constraint it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingBound {
    pub basis: Basis,
    pub quantity: String,
    pub set_a: String,
    pub set_b: String,
    pub bounds: ExpectationBounds,
}

fn setting_bound(basis: Basis, quantity: &str, s: Setting, bounds: ExpectationBounds) -> SettingBound {
    let (a, b) = s.label(basis);
    SettingBound { basis, quantity: quantity.into(), set_a: a.into(), set_b: b.into(), bounds }
}

/// Upper cap on Σ M_k in pre-sifting units.
fn presift_total(counts: &CountTable, basis: Basis, d: u32, em: bool) -> f64 {
    Setting::ALL
        .iter()
        .map(|&s| {
            let c = counts.get(basis, s);
            let v = if em { c.em } else { c.m };
            if basis == Basis::X && s.both_nonzero() {
                v * d as f64 / 2.0
            } else {
                v
            }
        })
        .sum()
}

struct MRows {
    constraints: Vec<Constraint>,
    bounds: Vec<SettingBound>,
}

/// Per-setting M constraints plus the total cap, over variables `offset..offset+nk`.
fn m_rows(pm: &PosteriorMatrix, counts: &CountTable, cfg: &ProtocolConfig, opts: &DecoyOptions, scale: f64, offset: usize) -> Result<MRows> {
    let mut constraints = Vec::new();
    let mut bounds = Vec::new();
    for s in Setting::ALL {
        let b = interval(counts.get(pm.basis, s).m, opts)?;
        let coefs = sparse_row(pm.row(s), offset);
        let (la, lb) = s.label(pm.basis);
        constraints.push(Constraint::new(format!("M {} ({la},{lb})", pm.basis), coefs, b.lower / scale, b.upper / scale));
        bounds.push(setting_bound(pm.basis, "M", s, b));
    }
    let cap = presift_total(counts, pm.basis, cfg.phase_count_d, false);
    let all: Vec<(usize, f64)> = (0..pm.num_k()).map(|k| (offset + k, 1.0)).collect();
    constraints.push(Constraint::new(format!("sum M {}", pm.basis), all, f64::NEG_INFINITY, cap / scale));
    Ok(MRows { constraints, bounds })
}

fn sparse_row(row: &[f64], offset: usize) -> Vec<(usize, f64)> {
    row.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > DROP_BELOW)
        .map(|(k, &v)| (offset + k, v))
        .collect()
}

fn lp_scale(counts: &CountTable, basis: Basis, cfg: &ProtocolConfig) -> f64 {
    presift_total(counts, basis, cfg.phase_count_d, false).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M11Bound {
    pub basis: Basis,
    pub value: f64,
    pub k_cut: usize,
    pub iterations: usize,
    pub bounds: Vec<SettingBound>,
}

pub fn lower_bound_m11(counts: &CountTable, basis: Basis, cfg: &ProtocolConfig, opts: &DecoyOptions) -> Result<M11Bound> {
    let pm = build_posterior(cfg, counts, basis, opts.k_cut)?;
    lower_bound_m11_with(&pm, counts, cfg, opts)
}

pub fn lower_bound_m11_with(pm: &PosteriorMatrix, counts: &CountTable, cfg: &ProtocolConfig, opts: &DecoyOptions) -> Result<M11Bound> {
    let nk = pm.num_k();
    let scale = lp_scale(counts, pm.basis, cfg);
    let mut obj = vec![0.0; nk];
    obj[pm.k_index(1, 1)] = 1.0;
    let mut lp = LinearProgram::new(Sense::Minimize, obj);
    let rows = m_rows(pm, counts, cfg, opts, scale, 0)?;
    rows.constraints.into_iter().for_each(|c| lp.push(c));
    let sol = solve_lp(&lp)?.require_optimal()?;
    Ok(M11Bound {
        basis: pm.basis,
        value: (sol.objective * scale).max(0.0),
        k_cut: pm.k_cut,
        iterations: sol.iterations,
        bounds: rows.bounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XBound {
    pub m11_x_l: f64,
    pub e11_x_u: f64,
    pub k_cut: usize,
    pub iterations: usize,
    pub bounds: Vec<SettingBound>,
}

/// Minimum of M^X_11, then maximum of E^X_11 under the M and E constraints.
///
/// E constraints are imposed on the four phase-sifted settings. Pairs with a
/// vacuum side carry E_k = M_k/2 exactly, so their observed error counts add
/// no information beyond the M constraints.
pub fn bound_x_single_photon(counts: &CountTable, cfg: &ProtocolConfig, opts: &DecoyOptions) -> Result<XBound> {
    let pm = build_posterior(cfg, counts, Basis::X, opts.k_cut)?;
    bound_x_single_photon_with(&pm, counts, cfg, opts)
}

pub fn bound_x_single_photon_with(pm: &PosteriorMatrix, counts: &CountTable, cfg: &ProtocolConfig, opts: &DecoyOptions) -> Result<XBound> {
    let first = lower_bound_m11_with(pm, counts, cfg, opts)?;
    let nk = pm.num_k();
    let scale = lp_scale(counts, Basis::X, cfg);
    let mut obj = vec![0.0; 2 * nk];
    obj[nk + pm.k_index(1, 1)] = 1.0;
    let mut lp = LinearProgram::new(Sense::Maximize, obj);
    let rows = m_rows(pm, counts, cfg, opts, scale, 0)?;
    rows.constraints.into_iter().for_each(|c| lp.push(c));
    let mut bounds = rows.bounds;
    for s in Setting::ALL.into_iter().filter(|s| s.both_nonzero()) {
        let b = interval(counts.get(Basis::X, s).em, opts)?;
        let (la, lb) = s.label(Basis::X);
        lp.push(Constraint::new(format!("E X ({la},{lb})"), sparse_row(pm.row(s), nk), b.lower / scale, b.upper / scale));
        bounds.push(setting_bound(Basis::X, "EM", s, b));
    }
    for k in 0..nk {
        let (ka, kb) = pm.k_pair(k);
        if ka == 0 || kb == 0 {
            lp.push(Constraint::new(format!("E = M/2 at ({ka},{kb})"), vec![(nk + k, 1.0), (k, -0.5)], 0.0, 0.0));
        } else {
            lp.push(Constraint::new(format!("E <= M at ({ka},{kb})"), vec![(nk + k, 1.0), (k, -1.0)], f64::NEG_INFINITY, 0.0));
        }
    }
    let cap = presift_total(counts, Basis::X, cfg.phase_count_d, true);
    let all: Vec<(usize, f64)> = (0..nk).map(|k| (nk + k, 1.0)).collect();
    lp.push(Constraint::new("sum E X", all, f64::NEG_INFINITY, cap / scale));
    let sol = solve_lp(&lp)?.require_optimal()?;
    Ok(XBound {
        m11_x_l: first.value,
        e11_x_u: (sol.objective * scale).max(0.0),
        k_cut: pm.k_cut,
        iterations: first.iterations + sol.iterations,
        bounds,
    })
}

/// e_ph = E11/M11 clamped to [0, 1]; the flag is set when M11 = 0.
pub fn phase_error_bound(m11_x_l: f64, e11_x_u: f64) -> (f64, bool) {
    if m11_x_l <= 0.0 {
        return (1.0, true);
    }
    ((e11_x_u / m11_x_l).clamp(0.0, 1.0), false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingShare {
    pub set_a: String,
    pub set_b: String,
    pub share: f64,
    pub m11_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyEstimates {
    pub m11_z_l: f64,
    pub m11_x_l: f64,
    pub e11_x_u: f64,
    pub e_ph_u: f64,
    pub e_ph_guard: bool,
    pub k_cut_z: usize,
    pub k_cut_x: usize,
    /// M11 attributed to each Z key setting by its posterior share at k = (1,1).
    pub per_setting: Vec<SettingShare>,
    pub bounds: Vec<SettingBound>,
    pub lp_iterations: usize,
}

pub fn estimate(counts: &CountTable, cfg: &ProtocolConfig, opts: &DecoyOptions) -> Result<DecoyEstimates> {
    let pz = build_posterior(cfg, counts, Basis::Z, opts.k_cut)?;
    let px = build_posterior(cfg, counts, Basis::X, opts.k_cut)?;
    let (z, x) = rayon::join(
        || lower_bound_m11_with(&pz, counts, cfg, opts),
        || bound_x_single_photon_with(&px, counts, cfg, opts),
    );
    let (z, x) = (z?, x?);
    let (e_ph_u, e_ph_guard) = phase_error_bound(x.m11_x_l, x.e11_x_u);
    let per_setting = Setting::ALL
        .iter()
        .filter(|s| s.both_nonzero())
        .map(|&s| {
            let share = pz.entry(s, 1, 1);
            let (a, b) = s.label(Basis::Z);
            SettingShare { set_a: a.into(), set_b: b.into(), share, m11_l: share * z.value }
        })
        .collect();
    let mut bounds = z.bounds;
    bounds.extend(x.bounds);
    Ok(DecoyEstimates {
        m11_z_l: z.value,
        m11_x_l: x.m11_x_l,
        e11_x_u: x.e11_x_u,
        e_ph_u,
        e_ph_guard,
        k_cut_z: pz.k_cut,
        k_cut_x: px.k_cut,
        per_setting,
        bounds,
        lp_iterations: z.iterations + x.iterations,
    })
}
