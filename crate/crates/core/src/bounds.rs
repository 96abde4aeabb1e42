//! Chernoff-Hoeffding intervals for the expectation behind an observed count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationBounds {
    pub lower: f64,
    pub upper: f64,
    pub chi: f64,
    pub epsilon: f64,
    pub delta_lower: f64,
    pub delta_upper: f64,
    /// χ = 0: the defining equations degenerate and the zero-count tail bound is used.
    pub zero_count: bool,
    /// No finite δ^L exists in double precision; the lower bound is reported as 0.
    pub lower_degenerate: bool,
}

impl ExpectationBounds {
    /// Degenerate interval [χ, χ], used when finite-size widening is switched off.
    pub fn exact(chi: f64) -> Self {
        ExpectationBounds {
            lower: chi,
            upper: chi,
            chi,
            epsilon: 0.0,
            delta_lower: 0.0,
            delta_upper: 0.0,
            zero_count: false,
            lower_degenerate: false,
        }
    }
}

const MAX_STEPS: usize = 200;
const X_TOL: f64 = 1e-13;

/// δ − (1+δ)·ln(1+δ), with a series near zero to avoid cancellation.
pub(crate) fn lower_kernel(d: f64) -> f64 {
    if d.abs() < 1e-2 {
        let mut sum = 0.0;
        let mut pow = d * d;
        for n in 2..16 {
            let nf = n as f64;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * pow / (nf * (nf - 1.0));
            pow *= d;
        }
        -sum
    } else {
        d - (1.0 + d) * d.ln_1p()
    }
}

/// −δ − (1−δ)·ln(1−δ) on [0, 1).
pub(crate) fn upper_kernel(d: f64) -> f64 {
    if d < 1e-2 {
        let mut sum = 0.0;
        let mut pow = d * d;
        for n in 2..16 {
            let nf = n as f64;
            sum += pow / (nf * (nf - 1.0));
            pow *= d;
        }
        -sum
    } else {
        -d - (1.0 - d) * (-d).ln_1p()
    }
}

/// Bisection for a decreasing function on [lo, hi] with g(lo) > 0 > g(hi).
fn bisect(mut lo: f64, mut hi: f64, g: impl Fn(f64) -> f64) -> Result<f64> {
    for _ in 0..MAX_STEPS {
        // Relative once |x| > 1, where adjacent doubles are already ~1e-13 apart.
        if hi - lo <= X_TOL * lo.abs().max(hi.abs()).max(1.0) {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numeric(format!("bisection did not converge in {MAX_STEPS} steps")))
}

/// Solves both defining equations for χ and ε.
///
/// δ^L is searched as x = ln δ, δ^U as the logit x = ln(δ/(1−δ)), so the
/// tolerance on x is a relative tolerance on δ (and on 1−δ near 1).
pub fn chernoff_bounds(chi: f64, epsilon: f64) -> Result<ExpectationBounds> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    if !(chi >= 0.0 && chi.is_finite()) {
        return Err(Error::Domain(format!("observed count {chi} must be finite and >= 0")));
    }
    let target = (epsilon / 2.0).ln();
    if chi == 0.0 {
        return Ok(ExpectationBounds {
            lower: 0.0,
            upper: -target,
            chi,
            epsilon,
            delta_lower: f64::INFINITY,
            delta_upper: 1.0,
            zero_count: true,
            lower_degenerate: false,
        });
    }

    let gl = |x: f64| {
        let d = x.exp();
        chi / (1.0 + d) * lower_kernel(d) - target
    };
    let lo = 1e-12f64.ln();
    let mut hi = 1e6f64.ln();
    let mut lower_degenerate = false;
    while gl(hi) > 0.0 {
        hi += 1e6f64.ln();
        if hi > 1e300f64.ln() {
            lower_degenerate = true;
            break;
        }
    }
    let delta_lower = if lower_degenerate { f64::INFINITY } else { bisect(lo, hi, gl)?.exp() };

    let gu = |x: f64| {
        let d = 1.0 / (1.0 + (-x).exp());
        chi / (1.0 - d) * upper_kernel(d) - target
    };
    let lim = (1e12f64 - 1.0).ln();
    let xu = if gu(lim) > 0.0 {
        return Err(Error::Numeric(format!("no upper-bound root below 1 - 1e-12 for chi = {chi}")));
    } else {
        bisect(-lim, lim, gu)?
    };
    let delta_upper = 1.0 / (1.0 + (-xu).exp());
    let one_minus = 1.0 / (1.0 + xu.exp());

    Ok(ExpectationBounds {
        lower: if lower_degenerate { 0.0 } else { chi / (1.0 + delta_lower) },
        upper: chi / one_minus,
        chi,
        epsilon,
        delta_lower,
        delta_upper,
        zero_count: false,
        lower_degenerate,
    })
}
