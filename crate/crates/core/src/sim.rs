//! Monte Carlo generation of QKD-region rounds and reference-region clicks.
//!
//! Every round's intensities are i.i.d. and the probability that at least one
//! detector fires does not depend on phase, so clicked rounds are placed by
//! geometric skipping and their settings drawn from the click-weighted
//! posterior. Rounds are split into fixed blocks, each with its own ChaCha
//! streams, so the output does not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::config::{validate_config, ChannelModel, Intensity, ProtocolConfig, Side};
use crate::error::{Error, Result};

pub const BLOCK: u64 = 1 << 20;
const REF_BLOCK_CYCLES: u64 = 64;

const STREAM_CLICKS: u64 = 0;
const STREAM_FILLER: u64 = 1;
const STREAM_WALK: u64 = 2;
const STREAM_BRIDGE: u64 = 3;
const STREAM_RESIDUAL: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    None,
    L,
    R,
    Both,
}

impl Outcome {
    pub fn code(self) -> char {
        match self {
            Outcome::None => '-',
            Outcome::L => 'L',
            Outcome::R => 'R',
            Outcome::Both => 'B',
        }
    }

    pub fn clicked(self) -> bool {
        self != Outcome::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub index: u64,
    pub intensity_a: Intensity,
    pub intensity_b: Intensity,
    pub phase_a: u32,
    pub phase_b: u32,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Detector {
    L,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceClick {
    pub time_s: f64,
    pub detector: Detector,
}

/// Click probabilities of the two output ports of a balanced beamsplitter.
pub fn click_probabilities(i_a: f64, i_b: f64, delta_phi: f64, ch: &ChannelModel, gate_dark: f64) -> Result<(f64, f64)> {
    if i_a < 0.0 || i_b < 0.0 {
        return Err(Error::Domain(format!("negative intensity ({i_a}, {i_b})")));
    }
    let mean = 0.5 * (i_a + i_b);
    let cross = (i_a * i_b).sqrt() * delta_phi.cos();
    let port = |i: f64| 1.0 - (1.0 - gate_dark) * (-ch.eta_det * i.max(0.0)).exp();
    Ok((port(mean + cross), port(mean - cross)))
}

/// Phase accumulated by the laser frequency difference, ∫₀ᵗ Δω.
pub fn laser_phase(profile: &[f64], t: f64) -> f64 {
    let mut acc = 0.0;
    let mut pow = t;
    for (i, c) in profile.iter().enumerate() {
        acc += c * pow / (i + 1) as f64;
        pow *= t;
    }
    acc
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn block_stream(seed: u64, block: u64, purpose: u64) -> ChaCha8Rng {
    stream_rng(seed, block.wrapping_mul(8).wrapping_add(purpose))
}

/// Runs `f` on a pool capped by `MPQKD_THREADS` when that is set.
pub fn with_worker_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match std::env::var("MPQKD_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

/// Precomputed per-setting tables for the QKD region.
struct RoundModel {
    intensities: [(f64, f64); 9],
    cum_click: [f64; 9],
    cum_quiet: [f64; 9],
    p_any: f64,
    gd: f64,
    d: u32,
}

fn setting_of(k: usize) -> (Intensity, Intensity) {
    (Intensity::ALL[k / 3], Intensity::ALL[k % 3])
}

impl RoundModel {
    fn new(cfg: &ProtocolConfig) -> Self {
        let gd = cfg.gate_dark();
        let pa = cfg.probs(Side::Alice);
        let pb = cfg.probs(Side::Bob);
        let mut intensities = [(0.0, 0.0); 9];
        let mut w_click = [0.0; 9];
        let mut w_quiet = [0.0; 9];
        for k in 0..9 {
            let (a, b) = setting_of(k);
            let ia = cfg.channel.eta_a * cfg.intensity(Side::Alice, a);
            let ib = cfg.channel.eta_b * cfg.intensity(Side::Bob, b);
            intensities[k] = (ia, ib);
            let q = pa[a.index()] * pb[b.index()];
            let quiet = (1.0 - gd).powi(2) * (-cfg.channel.eta_det * (ia + ib)).exp();
            w_click[k] = q * (1.0 - quiet);
            w_quiet[k] = q * quiet;
        }
        let p_any: f64 = w_click.iter().sum();
        RoundModel {
            intensities,
            cum_click: cumulative(&w_click),
            cum_quiet: cumulative(&w_quiet),
            p_any,
            gd,
            d: cfg.phase_count_d,
        }
    }
}

fn cumulative(w: &[f64; 9]) -> [f64; 9] {
    let total: f64 = w.iter().sum();
    let mut out = [0.0; 9];
    let mut acc = 0.0;
    for k in 0..9 {
        acc += w[k];
        out[k] = if total > 0.0 { acc / total } else { (k + 1) as f64 / 9.0 };
    }
    out[8] = 1.0;
    out
}

fn pick(cum: &[f64; 9], u: f64) -> usize {
    cum.iter().position(|&c| u < c).unwrap_or(8)
}

/// Geometric number of trials up to and including the next success.
fn geometric_gap(rng: &mut ChaCha8Rng, ln_q: f64) -> u64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let g = (u.ln() / ln_q).floor();
    if g >= 1e18 {
        u64::MAX / 2
    } else {
        g as u64 + 1
    }
}

/// Random-walk values at block starts: `w[b] = W(T_b)` with W(0) = 0.
fn walk_endpoints(cfg: &ProtocolConfig, seed: u64, n_blocks: u64) -> Vec<f64> {
    let rate = cfg.channel.phase_drift_rate;
    let mut w = Vec::with_capacity(n_blocks as usize + 1);
    let mut prev_t = 0.0;
    let mut acc = 0.0;
    for b in 0..=n_blocks {
        let t = cfg.timing.round_time(b * BLOCK);
        if rate > 0.0 {
            let mut rng = block_stream(seed, b, STREAM_WALK);
            let z: f64 = rng.sample(StandardNormal);
            acc += z * (rate * (t - prev_t)).sqrt();
        }
        w.push(acc);
        prev_t = t;
    }
    w
}

/// Clicked rounds of one block, in index order.
fn block_clicks(cfg: &ProtocolConfig, model: &RoundModel, seed: u64, block: u64, n: u64, walk: (f64, f64)) -> Vec<RoundRecord> {
    let start = block * BLOCK;
    let end = ((block + 1) * BLOCK).min(n);
    let mut out = Vec::new();
    if model.p_any <= 0.0 || start >= end {
        return out;
    }
    let mut rng = block_stream(seed, block, STREAM_CLICKS);
    let mut bridge = block_stream(seed, block, STREAM_BRIDGE);
    let ln_q = (-model.p_any).ln_1p();
    let rate = cfg.channel.phase_drift_rate;
    let t_end = cfg.timing.round_time(start + BLOCK);
    let (mut w_prev, w_end) = walk;
    let mut t_prev = cfg.timing.round_time(start);
    let mut pos = start;
    let mut first = true;
    loop {
        let gap = if model.p_any >= 1.0 { 1 } else { geometric_gap(&mut rng, ln_q) };
        pos = if first { start + gap - 1 } else { pos.saturating_add(gap) };
        first = false;
        if pos >= end {
            break;
        }
        let k = pick(&model.cum_click, rng.random::<f64>());
        let (a, b) = setting_of(k);
        let phase_a = rng.random_range(0..model.d);
        let phase_b = rng.random_range(0..model.d);
        let t = cfg.timing.round_time(pos);
        let w = if rate > 0.0 {
            let span = t_end - t_prev;
            let frac = if span > 0.0 { (t - t_prev) / span } else { 0.0 };
            let mean = w_prev + frac * (w_end - w_prev);
            let var = rate * (t - t_prev) * (1.0 - frac).max(0.0);
            let z: f64 = bridge.sample(StandardNormal);
            mean + z * var.sqrt()
        } else {
            0.0
        };
        w_prev = w;
        t_prev = t;
        let dphi = 2.0 * PI * (phase_a as f64 - phase_b as f64) / model.d as f64 + w + laser_phase(&cfg.channel.delta_omega_profile, t);
        let (ia, ib) = model.intensities[k];
        let (pl, pr) = click_probabilities(ia, ib, dphi, &cfg.channel, model.gd).expect("intensities are nonnegative");
        let l_only = pl * (1.0 - pr);
        let r_only = pr * (1.0 - pl);
        let any = 1.0 - (1.0 - pl) * (1.0 - pr);
        let u = rng.random::<f64>() * any;
        let outcome = if u < l_only {
            Outcome::L
        } else if u < l_only + r_only {
            Outcome::R
        } else {
            Outcome::Both
        };
        out.push(RoundRecord { index: pos, intensity_a: a, intensity_b: b, phase_a, phase_b, outcome });
    }
    out
}

/// All rounds with at least one click, in index order.
pub fn simulate_clicked(cfg: &ProtocolConfig, seed: u64, n: u64) -> Result<Vec<RoundRecord>> {
    validate_config(cfg).map_err(Error::Config)?;
    let model = RoundModel::new(cfg);
    let n_blocks = n.div_ceil(BLOCK);
    let walk = walk_endpoints(cfg, seed, n_blocks);
    let blocks: Vec<Vec<RoundRecord>> = with_worker_cap(|| {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| block_clicks(cfg, &model, seed, b, n, (walk[b as usize], walk[b as usize + 1])))
            .collect()
    });
    Ok(blocks.into_iter().flatten().collect())
}

/// Full round stream, clicked and quiet rounds alike. Clicked rounds are
/// identical to [`simulate_clicked`].
pub fn simulate_rounds(cfg: &ProtocolConfig, seed: u64, n: u64) -> Result<RoundStream> {
    validate_config(cfg).map_err(Error::Config)?;
    let model = RoundModel::new(cfg);
    let n_blocks = n.div_ceil(BLOCK);
    let walk = walk_endpoints(cfg, seed, n_blocks);
    Ok(RoundStream {
        cfg: cfg.clone(),
        model,
        walk,
        seed,
        n,
        next: 0,
        block: u64::MAX,
        clicks: Vec::new(),
        cursor: 0,
        filler: block_stream(seed, 0, STREAM_FILLER),
    })
}

pub struct RoundStream {
    cfg: ProtocolConfig,
    model: RoundModel,
    walk: Vec<f64>,
    seed: u64,
    n: u64,
    next: u64,
    block: u64,
    clicks: Vec<RoundRecord>,
    cursor: usize,
    filler: ChaCha8Rng,
}

impl Iterator for RoundStream {
    type Item = RoundRecord;

    fn next(&mut self) -> Option<RoundRecord> {
        if self.next >= self.n {
            return None;
        }
        let idx = self.next;
        self.next += 1;
        let b = idx / BLOCK;
        if b != self.block {
            self.block = b;
            let w = (self.walk[b as usize], self.walk[b as usize + 1]);
            self.clicks = block_clicks(&self.cfg, &self.model, self.seed, b, self.n, w);
            self.cursor = 0;
            self.filler = block_stream(self.seed, b, STREAM_FILLER);
        }
        if let Some(r) = self.clicks.get(self.cursor) {
            if r.index == idx {
                self.cursor += 1;
                return Some(*r);
            }
        }
        let k = pick(&self.model.cum_quiet, self.filler.random::<f64>());
        let (a, bb) = setting_of(k);
        Some(RoundRecord {
            index: idx,
            intensity_a: a,
            intensity_b: bb,
            phase_a: self.filler.random_range(0..self.model.d),
            phase_b: self.filler.random_range(0..self.model.d),
            outcome: Outcome::None,
        })
    }
}

/// Phase difference seen by X-key mapping in simulation: the true laser phase
/// increment plus Gaussian residual noise.
pub struct SimulatedPhaseEstimate {
    profile: Vec<f64>,
    timing: crate::config::TimingConfig,
    sigma: f64,
    rng: ChaCha8Rng,
}

impl SimulatedPhaseEstimate {
    pub fn new(cfg: &ProtocolConfig, seed: u64) -> Self {
        SimulatedPhaseEstimate {
            profile: cfg.channel.delta_omega_profile.clone(),
            timing: cfg.timing.clone(),
            sigma: cfg.channel.sigma_theta_residual,
            rng: stream_rng(seed, STREAM_RESIDUAL),
        }
    }

    pub fn delta_theta(&mut self, i: u64, j: u64) -> f64 {
        let ti = self.timing.round_time(i);
        let tj = self.timing.round_time(j);
        let mut dt = laser_phase(&self.profile, tj) - laser_phase(&self.profile, ti);
        if self.sigma > 0.0 {
            let z: f64 = self.rng.sample(StandardNormal);
            dt += self.sigma * z;
        }
        dt
    }
}

/// Reference-region clicks. A pulse carries a photon event with probability
/// `ref_click_prob`, landing on L with probability (1 + cos Δθ(t))/2; each
/// detector also fires on a dark count. Only single-detector pulses are kept.
pub fn simulate_reference_blocks(cfg: &ProtocolConfig, seed: u64, n_cycles: u64) -> Result<Vec<ReferenceClick>> {
    validate_config(cfg).map_err(Error::Config)?;
    let per_cycle = cfg.timing.ref_pulses_per_cycle();
    let n_blocks = n_cycles.div_ceil(REF_BLOCK_CYCLES);
    let rate = cfg.channel.phase_drift_rate;
    // Walk values at block starts, then Brownian bridges inside blocks.
    let block_t = |b: u64| b as f64 * REF_BLOCK_CYCLES as f64 * cfg.timing.cycle_s();
    let mut ends = vec![0.0];
    let mut acc = 0.0;
    for b in 0..n_blocks {
        if rate > 0.0 {
            let mut rng = stream_rng(seed ^ 0x5245_4600, b * 8 + STREAM_WALK);
            let z: f64 = rng.sample(StandardNormal);
            acc += z * (rate * (block_t(b + 1) - block_t(b))).sqrt();
        }
        ends.push(acc);
    }
    let pe = cfg.channel.ref_click_prob;
    let gd = cfg.gate_dark();
    let p_any = 1.0 - (1.0 - pe) * (1.0 - gd).powi(2);
    let tau = cfg.timing.tau();
    let blocks: Vec<Vec<ReferenceClick>> = with_worker_cap(|| {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream_rng(seed ^ 0x5245_4600, b * 8 + STREAM_CLICKS);
                let mut bridge = stream_rng(seed ^ 0x5245_4600, b * 8 + STREAM_BRIDGE);
                let (t0, t1) = (block_t(b), block_t(b + 1));
                let (mut w_prev, w_end) = (ends[b as usize], ends[b as usize + 1]);
                let mut t_prev = t0;
                let mut out = Vec::new();
                let ln_q = (-p_any).ln_1p();
                let total = (REF_BLOCK_CYCLES.min(n_cycles - b * REF_BLOCK_CYCLES)) * per_cycle;
                let mut pos: u64 = 0;
                let mut first = true;
                if p_any <= 0.0 {
                    return out;
                }
                loop {
                    let gap = if p_any >= 1.0 { 1 } else { geometric_gap(&mut rng, ln_q) };
                    pos = if first { gap - 1 } else { pos.saturating_add(gap) };
                    first = false;
                    if pos >= total {
                        break;
                    }
                    let (event, dark_l, dark_r) = loop {
                        let e = rng.random::<f64>() < pe;
                        let l = rng.random::<f64>() < gd;
                        let r = rng.random::<f64>() < gd;
                        if e || l || r {
                            break (e, l, r);
                        }
                    };
                    let cycle = b * REF_BLOCK_CYCLES + pos / per_cycle;
                    let t = cycle as f64 * cfg.timing.cycle_s() + (pos % per_cycle) as f64 * tau;
                    let w = if rate > 0.0 {
                        let frac = (t - t_prev) / (t1 - t_prev);
                        let z: f64 = bridge.sample(StandardNormal);
                        let v = w_prev + frac * (w_end - w_prev) + z * (rate * (t - t_prev) * (1.0 - frac)).max(0.0).sqrt();
                        w_prev = v;
                        t_prev = t;
                        v
                    } else {
                        0.0
                    };
                    let mut fired_l = dark_l;
                    let mut fired_r = dark_r;
                    if event {
                        let theta = laser_phase(&cfg.channel.delta_omega_profile, t) + w;
                        if rng.random::<f64>() < 0.5 + 0.5 * theta.cos() {
                            fired_l = true;
                        } else {
                            fired_r = true;
                        }
                    }
                    match (fired_l, fired_r) {
                        (true, false) => out.push(ReferenceClick { time_s: t, detector: Detector::L }),
                        (false, true) => out.push(ReferenceClick { time_s: t, detector: Detector::R }),
                        _ => {}
                    }
                }
                out
            })
            .collect()
    });
    Ok(blocks.into_iter().flatten().collect())
}

pub fn round_dump_header() -> &'static str {
    "index,int_a,phase_a,int_b,phase_b,outcome\n"
}

pub fn round_dump_line(r: &RoundRecord) -> String {
    let lvl = |i: Intensity| match i {
        Intensity::Vacuum => "0",
        Intensity::Decoy => "nu",
        Intensity::Signal => "mu",
    };
    format!(
        "{},{},{},{},{},{}\n",
        r.index,
        lvl(r.intensity_a),
        r.phase_a,
        lvl(r.intensity_b),
        r.phase_b,
        r.outcome.code()
    )
}
