//! Elementary functions shared across the pipeline.

use crate::error::{Error, Result};

/// Shannon entropy of a Bernoulli(x) source in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("binary entropy argument {x} outside [0, 1]")));
    }
    Ok(plogp(x) + plogp(1.0 - x))
}

fn plogp(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// ln(k!) exact summation for small k, Stirling series beyond.
pub fn ln_factorial(k: u32) -> f64 {
    if k < 64 {
        (2..=k).map(|i| (i as f64).ln()).sum()
    } else {
        let n = k as f64 + 1.0;
        (n - 0.5) * n.ln() - n + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * n)
            - 1.0 / (360.0 * n.powi(3))
            + 1.0 / (1260.0 * n.powi(5))
    }
}

/// Poisson probability mass, evaluated in log space.
pub fn poisson_pmf(k: u32, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * lambda.ln() - lambda - ln_factorial(k)).exp()
}

/// Upper tail P(K > k) of a Poisson variable, summed from the top down.
pub fn poisson_tail(k: u32, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut i = k + 1;
    loop {
        let p = poisson_pmf(i, lambda);
        total += p;
        if (i as f64) > lambda && p < total * 1e-18 || i > k + 400 {
            break;
        }
        i += 1;
    }
    total
}
