//! Laser frequency-difference estimation from reference-region clicks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::config::FreqConfig;
use crate::error::{Error, Result};
use crate::sim::{with_worker_cap, ReferenceClick};

pub const GRID_POINTS: usize = 10_001;
const GOLDEN_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickGroup {
    pub clicks: Vec<ReferenceClick>,
    pub span_s: f64,
}

impl ClickGroup {
    pub fn t_mid(&self) -> f64 {
        0.5 * (self.clicks[0].time_s + self.clicks[self.clicks.len() - 1].time_s)
    }
}

/// Greedy grouping: a click joins the open group while the span stays below
/// `max_span_s`. Singleton groups are dropped.
pub fn group_clicks(clicks: &[ReferenceClick], max_span_s: f64) -> Result<Vec<ClickGroup>> {
    if let Some(w) = clicks.windows(2).position(|w| w[1].time_s < w[0].time_s) {
        return Err(Error::Data(format!("reference clicks out of order at position {}", w + 1)));
    }
    let mut groups = Vec::new();
    let mut cur: Vec<ReferenceClick> = Vec::new();
    let close = |cur: &mut Vec<ReferenceClick>, groups: &mut Vec<ClickGroup>| {
        if cur.len() >= 2 {
            let span_s = cur[cur.len() - 1].time_s - cur[0].time_s;
            groups.push(ClickGroup { clicks: std::mem::take(cur), span_s });
        } else {
            cur.clear();
        }
    };
    for c in clicks {
        if let Some(first) = cur.first() {
            if c.time_s - first.time_s >= max_span_s {
                close(&mut cur, &mut groups);
            }
        }
        cur.push(*c);
    }
    close(&mut cur, &mut groups);
    Ok(groups)
}

/// Pair statistics aggregated by pulse separation: (Δk, same-detector count, different count).
fn pair_table(group: &ClickGroup, tau_s: f64, cap: usize) -> Vec<(f64, f64, f64)> {
    let n = group.clicks.len();
    let picked: Vec<&ReferenceClick> = if n > cap {
        (0..cap).map(|m| &group.clicks[m * n / cap]).collect()
    } else {
        group.clicks.iter().collect()
    };
    let mut table: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for (a, ca) in picked.iter().enumerate() {
        for cb in &picked[a + 1..] {
            let dk = ((cb.time_s - ca.time_s) / tau_s).round() as i64;
            let e = table.entry(dk).or_insert((0.0, 0.0));
            if ca.detector == cb.detector {
                e.0 += 1.0;
            } else {
                e.1 += 1.0;
            }
        }
    }
    table.into_iter().map(|(k, (s, d))| (k as f64, s, d)).collect()
}

fn likelihood_from_table(table: &[(f64, f64, f64)], omega: f64, tau_s: f64) -> f64 {
    table
        .iter()
        .map(|&(dk, same, diff)| {
            let c = (omega * tau_s * dk).cos();
            same * (0.5 + 0.25 * c).ln() + diff * (0.5 - 0.25 * c).ln()
        })
        .sum()
}

/// Log-likelihood of Δω over all click pairs of a group.
pub fn log_likelihood(group: &ClickGroup, omega: f64, tau_s: f64) -> f64 {
    GroupLikelihood::new(group, tau_s).eval(omega)
}

/// Pair statistics of one group, for repeated likelihood evaluations.
#[derive(Debug, Clone)]
pub struct GroupLikelihood {
    table: Vec<(f64, f64, f64)>,
    tau_s: f64,
}

impl GroupLikelihood {
    pub fn new(group: &ClickGroup, tau_s: f64) -> Self {
        GroupLikelihood { table: pair_table(group, tau_s, usize::MAX), tau_s }
    }

    pub fn eval(&self, omega: f64) -> f64 {
        likelihood_from_table(&self.table, omega, self.tau_s)
    }
}

/// Likelihood on `points` uniform grid nodes starting at `lo` with step `step`.
/// Cosines come from per-separation rotating phasors, reseeded every segment;
/// the log is taken once per block of products.
fn grid_likelihood(table: &[(f64, f64, f64)], lo: f64, step: f64, points: usize, tau_s: f64) -> Vec<f64> {
    const SEG: usize = 256;
    const LANES: usize = 8;
    const RUN: usize = 64;
    // One entry per pair: separation and ±1/4 for same/different detector.
    let mut dk = Vec::new();
    let mut q = Vec::new();
    for &(k, same, diff) in table {
        for _ in 0..same as usize {
            dk.push(k);
            q.push(0.25);
        }
        for _ in 0..diff as usize {
            dk.push(k);
            q.push(-0.25);
        }
    }
    let n = dk.len();
    let segments: Vec<usize> = (0..points.div_ceil(SEG)).collect();
    let parts: Vec<Vec<f64>> = segments
        .par_iter()
        .map(|&sgi| {
            let g0 = sgi * SEG;
            let g1 = (g0 + SEG).min(points);
            let w0 = lo + g0 as f64 * step;
            let mut re: Vec<f64> = dk.iter().map(|k| (w0 * tau_s * k).cos()).collect();
            let mut im: Vec<f64> = dk.iter().map(|k| (w0 * tau_s * k).sin()).collect();
            let cr: Vec<f64> = dk.iter().map(|k| (step * tau_s * k).cos()).collect();
            let ci: Vec<f64> = dk.iter().map(|k| (step * tau_s * k).sin()).collect();
            let mut factor = vec![0.0; n];
            let mut out = Vec::with_capacity(g1 - g0);
            for _ in g0..g1 {
                for p in 0..n {
                    factor[p] = 0.5 + q[p] * re[p];
                }
                let mut total = 0.0;
                for block in factor.chunks(LANES * RUN) {
                    let mut acc = [1.0f64; LANES];
                    let mut lanes = block.chunks_exact(LANES);
                    for c in &mut lanes {
                        for l in 0..LANES {
                            acc[l] *= c[l];
                        }
                    }
                    for (l, v) in lanes.remainder().iter().enumerate() {
                        acc[l] *= v;
                    }
                    total += acc.iter().map(|a| a.ln()).sum::<f64>();
                }
                out.push(total);
                for p in 0..n {
                    let nr = re[p] * cr[p] - im[p] * ci[p];
                    im[p] = re[p] * ci[p] + im[p] * cr[p];
                    re[p] = nr;
                }
            }
            out
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Maximum-likelihood Δω for one group: uniform grid, then golden-section
/// refinement around the best node. Ties go to the smallest |Δω|.
pub fn estimate_group_omega(group: &ClickGroup, range: (f64, f64), tau_s: f64) -> Result<f64> {
    estimate_group_omega_capped(group, range, tau_s, FreqConfig::default().max_group_clicks)
}

pub fn estimate_group_omega_capped(group: &ClickGroup, range: (f64, f64), tau_s: f64, cap: usize) -> Result<f64> {
    let (lo, hi) = range;
    if group.clicks.len() < 2 {
        return Err(Error::Data("frequency estimation needs at least two clicks".into()));
    }
    if !(lo < hi) || !(tau_s > 0.0) {
        return Err(Error::Domain(format!("bad search range ({lo}, {hi}) or tau {tau_s}")));
    }
    let table = pair_table(group, tau_s, cap.max(2));
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let values = grid_likelihood(&table, lo, step, GRID_POINTS, tau_s);
    let best_val = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tie = 1e-9 * best_val.abs().max(1.0);
    let node = |g: usize| lo + g as f64 * step;
    let tied: Vec<usize> = (0..GRID_POINTS).filter(|&g| values[g] >= best_val - tie).collect();
    let min_abs = tied.iter().map(|&g| node(g).abs()).fold(f64::INFINITY, f64::min);
    // ±Δω give the same likelihood; among mirror ties the nonnegative one wins.
    let best = *tied.iter().filter(|&&g| node(g).abs() <= min_abs + 0.5 * step).max_by(|&&a, &&b| node(a).total_cmp(&node(b))).unwrap();
    // Flat likelihood: no refinement can improve on the tie-break.
    if values.iter().all(|v| (v - best_val).abs() <= tie) {
        return Ok(node(best));
    }
    let f = |w: f64| likelihood_from_table(&table, w, tau_s);
    let mut a = node(best.saturating_sub(1)).max(lo);
    let mut b = node((best + 1).min(GRID_POINTS - 1)).min(hi);
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let tol = GOLDEN_REL_TOL * node(best).abs().max(step);
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    let refined = 0.5 * (a + b);
    Ok(if f(refined) >= values[best] { refined } else { node(best) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryWindow {
    pub window_start_s: f64,
    pub window_end_s: f64,
    /// Δω(t) = Σ c_i t^i in rad/s, t in seconds since session start.
    pub coefficients: Vec<f64>,
    /// RMS fit residual, rad/s.
    pub residual: f64,
}

impl TrajectoryWindow {
    pub fn eval(&self, t: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    /// ∫ Δω from 0 to t.
    fn antiderivative(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, c)| acc * t + c / (i + 1) as f64)
            * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaTrajectory {
    pub windows: Vec<TrajectoryWindow>,
}

impl OmegaTrajectory {
    pub fn constant(omega: f64, start: f64, end: f64) -> Self {
        OmegaTrajectory {
            windows: vec![TrajectoryWindow { window_start_s: start, window_end_s: end, coefficients: vec![omega], residual: 0.0 }],
        }
    }

    pub fn start(&self) -> f64 {
        self.windows.first().map_or(0.0, |w| w.window_start_s)
    }

    pub fn end(&self) -> f64 {
        self.windows.last().map_or(0.0, |w| w.window_end_s)
    }

    /// Stretches the outer windows to cover [t0, t1].
    pub fn with_coverage(mut self, t0: f64, t1: f64) -> Self {
        if let Some(w) = self.windows.first_mut() {
            w.window_start_s = w.window_start_s.min(t0);
        }
        if let Some(w) = self.windows.last_mut() {
            w.window_end_s = w.window_end_s.max(t1);
        }
        self
    }

    pub fn fit_residual(&self) -> f64 {
        let n = self.windows.len().max(1) as f64;
        (self.windows.iter().map(|w| w.residual * w.residual).sum::<f64>() / n).sqrt()
    }

    fn window_at(&self, t: f64) -> usize {
        self.windows.iter().position(|w| t < w.window_end_s).unwrap_or(self.windows.len() - 1)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.windows[self.window_at(t)].eval(t))
    }

    fn check(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * self.end().abs().max(1.0);
        if self.windows.is_empty() || t < self.start() - slack || t > self.end() + slack {
            return Err(Error::Domain(format!(
                "time {t} s outside trajectory coverage [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        Ok(())
    }
}

/// Ordinary least squares polynomial fit, refreshed every `window` estimates.
pub fn fit_trajectory(estimates: &[(f64, f64)], degree: usize, window: usize) -> Result<OmegaTrajectory> {
    let window = window.max(degree + 1);
    if estimates.len() < degree + 1 {
        return Err(Error::Data(format!("{} estimates cannot fit degree {degree}", estimates.len())));
    }
    let mut chunks: Vec<&[(f64, f64)]> = estimates.chunks(window).collect();
    if chunks.len() > 1 && chunks[chunks.len() - 1].len() < window / 2 {
        let n = chunks.len();
        let start = (n - 2) * window;
        chunks.truncate(n - 2);
        chunks.push(&estimates[start..]);
    }
    let mut windows = Vec::with_capacity(chunks.len());
    for (ci, chunk) in chunks.iter().enumerate() {
        let (coefficients, residual) = polyfit(chunk, degree)?;
        let start = chunk[0].0;
        let end = chunks.get(ci + 1).map_or(chunk[chunk.len() - 1].0, |next| next[0].0);
        windows.push(TrajectoryWindow { window_start_s: start, window_end_s: end, coefficients, residual });
    }
    Ok(OmegaTrajectory { windows })
}

/// Least squares in the scaled variable u = (t − c)/s, mapped back to powers of t.
fn polyfit(points: &[(f64, f64)], degree: usize) -> Result<(Vec<f64>, f64)> {
    let m = degree + 1;
    if points.len() < m {
        return Err(Error::Data("too few points for fit".into()));
    }
    let tmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let tmax = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let c = 0.5 * (tmin + tmax);
    let s = if tmax > tmin { 0.5 * (tmax - tmin) } else { 1.0 };
    let mut ata = vec![vec![0.0; m]; m];
    let mut atb = vec![0.0; m];
    for &(t, y) in points {
        let u = (t - c) / s;
        let pw: Vec<f64> = (0..m).map(|i| u.powi(i as i32)).collect();
        for i in 0..m {
            atb[i] += pw[i] * y;
            for j in 0..m {
                ata[i][j] += pw[i] * pw[j];
            }
        }
    }
    let beta = solve_dense(ata, atb).ok_or_else(|| Error::Numeric("rank-deficient trajectory design matrix".into()))?;
    // Expand Σ β_i ((t − c)/s)^i into powers of t.
    let mut coef = vec![0.0; m];
    for (i, b) in beta.iter().enumerate() {
        let scale = b / s.powi(i as i32);
        let mut binom = 1.0;
        for k in 0..=i {
            coef[k] += scale * binom * (-c).powi((i - k) as i32);
            binom = binom * (i - k) as f64 / (k + 1) as f64;
        }
    }
    let rss: f64 = points
        .iter()
        .map(|&(t, y)| {
            let u = (t - c) / s;
            let fit: f64 = beta.iter().enumerate().map(|(i, b)| b * u.powi(i as i32)).sum();
            (y - fit).powi(2)
        })
        .sum();
    Ok((coef, (rss / points.len() as f64).sqrt()))
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let norm = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * norm.max(1e-300) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Δθ_{i,j} = ∫_{t_i}^{t_j} Δω(t) dt over the piecewise trajectory.
pub fn accumulated_phase(traj: &OmegaTrajectory, t_i: f64, t_j: f64) -> Result<f64> {
    if t_j < t_i {
        return Err(Error::Domain(format!("t_j = {t_j} precedes t_i = {t_i}")));
    }
    traj.check(t_i)?;
    traj.check(t_j)?;
    let (wi, wj) = (traj.window_at(t_i), traj.window_at(t_j));
    let mut total = 0.0;
    let mut t = t_i;
    for w in wi..=wj {
        let win = &traj.windows[w];
        let upper = if w == wj { t_j } else { win.window_end_s };
        total += win.antiderivative(upper) - win.antiderivative(t);
        t = upper;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionStats {
    pub pairs: u64,
    pub mistakes: u64,
    pub rate: f64,
}

/// Predicts same/different detector on consecutive clicks from cos Δθ ≥ 0.
pub fn prediction_error_rate(traj: &OmegaTrajectory, clicks: &[ReferenceClick]) -> Result<PredictionStats> {
    let mut pairs = 0u64;
    let mut mistakes = 0u64;
    for w in clicks.windows(2) {
        let dtheta = accumulated_phase(traj, w[0].time_s, w[1].time_s)?;
        let predict_same = dtheta.cos() >= 0.0;
        let same = w[0].detector == w[1].detector;
        pairs += 1;
        mistakes += (predict_same != same) as u64;
    }
    let rate = if pairs == 0 { 0.0 } else { mistakes as f64 / pairs as f64 };
    Ok(PredictionStats { pairs, mistakes, rate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEstimate {
    pub t_mid: f64,
    pub clicks: usize,
    pub omega: f64,
}

/// Grouping, per-group estimation in parallel, and the windowed fit.
pub fn estimate_trajectory(clicks: &[ReferenceClick], fc: &FreqConfig, tau_s: f64) -> Result<(OmegaTrajectory, Vec<GroupEstimate>)> {
    let groups = group_clicks(clicks, fc.max_span_s)?;
    if groups.len() < 2 {
        return Err(Error::Data(format!("{} usable click groups; need at least 2", groups.len())));
    }
    let w = 2.0 * std::f64::consts::PI * fc.search_hz;
    let estimates: Vec<GroupEstimate> = with_worker_cap(|| {
        groups
            .par_iter()
            .map(|g| {
                estimate_group_omega_capped(g, (-w, w), tau_s, fc.max_group_clicks)
                    .map(|omega| GroupEstimate { t_mid: g.t_mid(), clicks: g.clicks.len(), omega })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let pts: Vec<(f64, f64)> = estimates.iter().map(|e| (e.t_mid, e.omega)).collect();
    let degree = fc.degree.min(pts.len() - 1);
    let traj = fit_trajectory(&pts, degree, fc.window_groups)?
        .with_coverage(clicks[0].time_s, clicks[clicks.len() - 1].time_s);
    Ok((traj, estimates))
}

pub fn read_reference_csv(text: &str) -> Result<Vec<ReferenceClick>> {
    use crate::sim::Detector;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["time_s", "detector"] {
        return Err(Error::Data("reference clicks header must be time_s,detector".into()));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
        let bad = || Error::Data(format!("reference clicks row {}: malformed", line + 1));
        let time_s: f64 = rec[0].parse().map_err(|_| bad())?;
        let detector = match &rec[1] {
            "L" => Detector::L,
            "R" => Detector::R,
            _ => return Err(bad()),
        };
        out.push(ReferenceClick { time_s, detector });
    }
    Ok(out)
}

pub fn reference_csv(clicks: &[ReferenceClick]) -> String {
    let mut out = String::from("time_s,detector\n");
    for c in clicks {
        out.push_str(&format!("{:?},{}\n", c.time_s, if c.detector == crate::sim::Detector::L { "L" } else { "R" }));
    }
    out
}
