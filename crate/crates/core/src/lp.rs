//! Dense two-phase primal simplex for small linear programs.
//!
//! Deterministic: pivot choices depend only on the input, so repeated solves
//! are bit-identical. Dantzig pricing, switching to Bland's rule after a run
//! of degenerate pivots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `lo <= Σ coefs·x <= hi`; either side may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coefs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

impl Constraint {
    pub fn new(name: impl Into<String>, coefs: Vec<(usize, f64)>, lo: f64, hi: f64) -> Self {
        Constraint { name: name.into(), coefs, lo, hi }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    /// Per-variable (lower, upper). Lower bounds must be finite.
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// Variables default to [0, ∞).
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram { sense, objective, constraints: Vec::new(), bounds: vec![(0.0, f64::INFINITY); n] }
    }

    pub fn push(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
    /// For infeasible programs: the constraint carrying the largest residual
    /// infeasibility after phase one, with that residual.
    pub most_violated: Option<(String, f64)>,
}

impl LpSolution {
    pub fn require_optimal(self) -> Result<Self> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            LpStatus::Infeasible => {
                let (name, r) = self.most_violated.clone().unwrap_or_default();
                Err(Error::Infeasible(format!("most violated constraint {name:?} (residual {r:.6e})")))
            }
            LpStatus::Unbounded => Err(Error::Unbounded("objective unbounded".into())),
        }
    }
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const MAX_ITER: usize = 100_000;
const BLAND_AFTER: usize = 50;

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Le,
    Ge,
    Eq,
}

struct Tableau {
    rows: usize,
    cols: usize, // excluding rhs
    a: Vec<f64>,  // rows × (cols+1)
    obj: Vec<f64>, // cols+1, reduced costs, last = −objective
    basis: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.a[r * w + c];
        let row_r: Vec<f64> = self.a[r * w..(r + 1) * w].iter().map(|v| v / p).collect();
        self.a[r * w..(r + 1) * w].copy_from_slice(&row_r);
        self.a[r * w + c] = 1.0;
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * w + c];
            if f != 0.0 {
                let row = &mut self.a[i * w..(i + 1) * w];
                for (v, pr) in row.iter_mut().zip(&row_r) {
                    *v -= f * pr;
                    if v.abs() < 1e-15 {
                        *v = 0.0;
                    }
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pr) in self.obj.iter_mut().zip(&row_r) {
                *v -= f * pr;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Runs simplex iterations over columns `< allowed`. Returns false if unbounded.
    fn optimize(&mut self, allowed: usize) -> Result<bool> {
        let mut stall = 0usize;
        let mut last = f64::INFINITY;
        loop {
            if self.iterations > MAX_ITER {
                return Err(Error::Numeric(format!("simplex exceeded {MAX_ITER} iterations")));
            }
            let bland = stall >= BLAND_AFTER;
            let mut enter = None;
            let mut best = -COST_TOL;
            for j in 0..allowed {
                let d = self.obj[j];
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else { return Ok(true) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let v = self.at(i, c);
                if v > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / v;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            let tie = (ratio - lr).abs() <= 1e-12 * lr.abs().max(1e-300);
                            if ratio < lr && !tie {
                                Some((i, ratio))
                            } else if tie {
                                // Bland: smallest basic index; otherwise prefer the larger pivot.
                                let better = if bland {
                                    self.basis[i] < self.basis[li]
                                } else {
                                    v > self.at(li, c)
                                };
                                if better { Some((i, ratio)) } else { Some((li, lr)) }
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return Ok(false) };
            self.pivot(r, c);
            let z = -self.obj[self.cols];
            if z < last - 1e-13 * last.abs().max(1.0) {
                stall = 0;
                last = z;
            } else {
                stall += 1;
            }
        }
    }
}

/// Solves `lp`. Infeasible and unbounded programs are reported through the status.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.num_vars();
    if lp.bounds.len() != n {
        return Err(Error::Domain("bounds length differs from objective length".into()));
    }
    for (j, &(l, u)) in lp.bounds.iter().enumerate() {
        if !l.is_finite() || u < l || u.is_nan() {
            return Err(Error::Domain(format!("variable {j} has bounds ({l}, {u})")));
        }
    }
    if lp.objective.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("non-finite objective coefficient".into()));
    }

    // Rows over shifted variables x' = x − l, each scaled to unit max coefficient.
    struct Row {
        coefs: Vec<f64>,
        b: f64,
        kind: Kind,
        origin: usize,
    }
    let mut rows: Vec<Row> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for c in &lp.constraints {
        let mut dense = vec![0.0; n];
        for &(j, v) in &c.coefs {
            if j >= n || !v.is_finite() {
                return Err(Error::Domain(format!("constraint {:?} has bad entry ({j}, {v})", c.name)));
            }
            dense[j] += v;
        }
        let shift: f64 = dense.iter().zip(&lp.bounds).map(|(a, b)| a * b.0).sum();
        let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let origin = names.len();
        names.push(c.name.clone());
        if scale == 0.0 {
            if c.lo > 1e-12 || c.hi < -1e-12 {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    objective: f64::NAN,
                    x: Vec::new(),
                    iterations: 0,
                    most_violated: Some((c.name.clone(), if c.lo > 0.0 { c.lo } else { -c.hi })),
                });
            }
            continue;
        }
        let coefs: Vec<f64> = dense.iter().map(|v| v / scale).collect();
        let lo = (c.lo - shift) / scale;
        let hi = (c.hi - shift) / scale;
        if c.lo == c.hi {
            rows.push(Row { coefs, b: lo, kind: Kind::Eq, origin });
            continue;
        }
        if hi.is_finite() {
            rows.push(Row { coefs: coefs.clone(), b: hi, kind: Kind::Le, origin });
        }
        if lo.is_finite() {
            rows.push(Row { coefs, b: lo, kind: Kind::Ge, origin });
        }
    }
    for (j, &(l, u)) in lp.bounds.iter().enumerate() {
        if u.is_finite() {
            let mut coefs = vec![0.0; n];
            coefs[j] = 1.0;
            let origin = names.len();
            names.push(format!("upper bound of x{j}"));
            rows.push(Row { coefs, b: u - l, kind: Kind::Le, origin });
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.kind != Kind::Eq).count();
    // Rows are negated as needed for a nonnegative right-hand side; a row
    // whose slack then carries +1 starts with the slack basic, others get an
    // artificial.
    let flip = |r: &Row| match r.kind {
        Kind::Le | Kind::Eq => r.b < 0.0,
        Kind::Ge => r.b <= 0.0,
    };
    let needs_art: Vec<bool> = rows
        .iter()
        .map(|r| match r.kind {
            Kind::Eq => true,
            Kind::Le => flip(r),
            Kind::Ge => !flip(r),
        })
        .collect();
    let n_art = needs_art.iter().filter(|&&x| x).count();
    let cols = n + n_slack + n_art;
    let w = cols + 1;
    let mut t = Tableau {
        rows: m,
        cols,
        a: vec![0.0; m * w],
        obj: vec![0.0; w],
        basis: vec![0; m],
        iterations: 0,
    };
    let mut art_row = vec![usize::MAX; n_art];
    let mut slack_col = n;
    let mut art_col = n + n_slack;
    for (i, r) in rows.iter().enumerate() {
        let sign = if flip(r) { -1.0 } else { 1.0 };
        let row = &mut t.a[i * w..(i + 1) * w];
        for j in 0..n {
            row[j] = sign * r.coefs[j];
        }
        row[cols] = sign * r.b;
        if r.kind != Kind::Eq {
            row[slack_col] = if r.kind == Kind::Le { sign } else { -sign };
            slack_col += 1;
        }
        if needs_art[i] {
            row[art_col] = 1.0;
            t.basis[i] = art_col;
            art_row[art_col - n - n_slack] = i;
            art_col += 1;
        } else {
            t.basis[i] = slack_col - 1;
        }
    }
    debug_assert_eq!(art_col, cols);

    // Phase one: minimize the sum of artificials.
    if n_art > 0 {
        for i in 0..m {
            if t.basis[i] >= n + n_slack {
                for j in 0..w {
                    t.obj[j] -= t.a[i * w + j];
                }
            }
        }
        for j in n + n_slack..cols {
            t.obj[j] = 0.0;
        }
        t.optimize(cols)?;
        let bmax = rows.iter().fold(1.0f64, |acc, r| acc.max(r.b.abs()));
        let infeas = -t.obj[cols];
        if infeas > 1e-9 * bmax {
            let mut worst = (String::new(), 0.0);
            for i in 0..m {
                if t.basis[i] >= n + n_slack && t.rhs(i) > worst.1 {
                    let k = t.basis[i] - n - n_slack;
                    worst = (names[rows[art_row[k]].origin].clone(), t.rhs(i));
                }
            }
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                x: Vec::new(),
                iterations: t.iterations,
                most_violated: Some(worst),
            });
        }
        // Drive remaining zero-level artificials out of the basis.
        for i in 0..m {
            if t.basis[i] >= n + n_slack {
                if let Some(j) = (0..n + n_slack).find(|&j| t.at(i, j).abs() > 1e-9) {
                    t.pivot(i, j);
                } else {
                    for j in 0..w {
                        t.a[i * w + j] = 0.0;
                    }
                }
            }
        }
    }

    // Phase two.
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    t.obj = vec![0.0; w];
    for j in 0..n {
        t.obj[j] = sign * lp.objective[j];
    }
    for i in 0..m {
        let c = t.basis[i];
        let f = t.obj.get(c).copied().unwrap_or(0.0);
        if c < cols && f != 0.0 {
            for j in 0..w {
                t.obj[j] -= f * t.a[i * w + j];
            }
        }
    }
    let bounded = t.optimize(n + n_slack)?;
    if !bounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: sign * f64::NEG_INFINITY,
            x: Vec::new(),
            iterations: t.iterations,
            most_violated: None,
        });
    }
    let mut x: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] += t.rhs(i).max(0.0);
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { status: LpStatus::Optimal, objective, x, iterations: t.iterations, most_violated: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_minimum() {
        let mut lp = LinearProgram::new(Sense::Minimize, vec![1.0]);
        lp.bounds[0] = (-5.0, 10.0);
        lp.push(Constraint::new("box", vec![(0, 1.0)], 1.0, 2.0));
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simple_max() {
        let mut lp = LinearProgram::new(Sense::Maximize, vec![1.0, 1.0]);
        lp.push(Constraint::new("sum", vec![(0, 1.0), (1, 1.0)], f64::NEG_INFINITY, 3.0));
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reports_infeasible_row() {
        let mut lp = LinearProgram::new(Sense::Minimize, vec![1.0, 0.0]);
        lp.push(Constraint::new("cap", vec![(0, 1.0), (1, 1.0)], f64::NEG_INFINITY, 1.0));
        lp.push(Constraint::new("need", vec![(0, 1.0)], 2.0, f64::INFINITY));
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        assert!(s.most_violated.is_some());
        assert!(s.require_optimal().is_err());
    }

    #[test]
    fn reports_unbounded() {
        let mut lp = LinearProgram::new(Sense::Maximize, vec![1.0]);
        lp.push(Constraint::new("floor", vec![(0, 1.0)], 1.0, f64::INFINITY));
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_negative_rhs() {
        // min x0 + 2 x1, x0 - x1 = -1, x0 + x1 >= 3
        let mut lp = LinearProgram::new(Sense::Minimize, vec![1.0, 2.0]);
        lp.push(Constraint::new("eq", vec![(0, 1.0), (1, -1.0)], -1.0, -1.0));
        lp.push(Constraint::new("ge", vec![(0, 1.0), (1, 1.0)], 3.0, f64::INFINITY));
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective - 5.0).abs() < 1e-10, "{s:?}");
        assert!((s.x[0] - 1.0).abs() < 1e-10 && (s.x[1] - 2.0).abs() < 1e-10);
    }
}
