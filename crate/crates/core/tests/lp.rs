use mpqkd::lp::{solve_lp, Constraint, LinearProgram, LpStatus, Sense};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dot(c: &[(usize, f64)], x: &[f64]) -> f64 {
    c.iter().map(|&(j, a)| a * x[j]).sum()
}

fn feasible(lp: &LinearProgram, x: &[f64], tol: f64) -> bool {
    lp.bounds.iter().zip(x).all(|(&(lo, hi), &v)| v >= lo - tol && v <= hi + tol)
        && lp.constraints.iter().all(|c| {
            let v = dot(&c.coefs, x);
            (c.lo == f64::NEG_INFINITY || v >= c.lo - tol * (1.0 + c.lo.abs()))
                && (c.hi == f64::INFINITY || v <= c.hi + tol * (1.0 + c.hi.abs()))
        })
}

/// Ten variables in a box, with two-sided rows built around a known interior point.
fn random_lp(rng: &mut ChaCha8Rng, sense: Sense) -> LinearProgram {
    let n = 10;
    let objective: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut lp = LinearProgram::new(sense, objective);
    lp.bounds = (0..n).map(|_| (rng.random_range(-1.0..0.0), rng.random_range(1.0..3.0))).collect();
    let x0: Vec<f64> = lp.bounds.iter().map(|&(lo, hi)| lo + 0.5 * (hi - lo)).collect();
    for r in 0..6 {
        let coefs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.random_range(-1.0..1.0))).collect();
        let v = dot(&coefs, &x0);
        let lo = if r % 3 == 0 { f64::NEG_INFINITY } else { v - rng.random_range(0.5..2.0) };
        let hi = if r % 3 == 1 { f64::INFINITY } else { v + rng.random_range(0.5..2.0) };
        lp.push(Constraint::new(format!("r{r}"), coefs, lo, hi));
    }
    lp
}

#[test]
fn random_probe_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..20 {
        let sense = if case % 2 == 0 { Sense::Minimize } else { Sense::Maximize };
        let lp = random_lp(&mut rng, sense);
        let x0: Vec<f64> = lp.bounds.iter().map(|&(lo, hi)| lo + 0.5 * (hi - lo)).collect();
        let sol = solve_lp(&lp).unwrap().require_optimal().unwrap();
        assert!(feasible(&lp, &sol.x, 1e-9), "case {case}: solution infeasible");
        let obj = |x: &[f64]| lp.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>();
        assert!((obj(&sol.x) - sol.objective).abs() < 1e-9);
        let mut probes = 0;
        let mut tries = 0;
        while probes < 10_000 && tries < 2_000_000 {
            tries += 1;
            // Points on segments from the interior point or from the optimum
            // towards a uniform point in the box.
            let q: Vec<f64> = lp.bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
            let (base, t) = if tries % 2 == 0 { (&x0, rng.random_range(0.0..1.0)) } else { (&sol.x, rng.random_range(0.0..0.05f64).powi(2)) };
            let p: Vec<f64> = base.iter().zip(&q).map(|(b, q)| b + t * (q - b)).collect();
            if !feasible(&lp, &p, 0.0) {
                continue;
            }
            probes += 1;
            match sense {
                Sense::Minimize => assert!(sol.objective <= obj(&p) + 1e-9),
                Sense::Maximize => assert!(sol.objective >= obj(&p) - 1e-9),
            }
        }
        assert_eq!(probes, 10_000, "case {case}: too few feasible probes");
    }
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Best vertex by enumerating every choice of n tight hyperplanes.
fn brute_force(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), lo));
        planes.push((e, hi));
    }
    for c in &lp.constraints {
        let mut row = vec![0.0; n];
        for &(j, a) in &c.coefs {
            row[j] += a;
        }
        for v in [c.lo, c.hi] {
            if v.is_finite() {
                planes.push((row.clone(), v));
            }
        }
    }
    let m = planes.len();
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    fn rec(start: usize, depth: usize, pick: &mut Vec<usize>, m: usize, f: &mut dyn FnMut(&[usize])) {
        if depth == pick.len() {
            f(pick);
            return;
        }
        for i in start..m {
            pick[depth] = i;
            rec(i + 1, depth + 1, pick, m, f);
        }
    }
    rec(0, 0, &mut pick, m, &mut |sel| {
        let a: Vec<Vec<f64>> = sel.iter().map(|&i| planes[i].0.clone()).collect();
        let b: Vec<f64> = sel.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve(a, b) {
            if feasible(lp, &x, 1e-9) {
                let v: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(match (best, lp.sense) {
                    (None, _) => v,
                    (Some(b), Sense::Minimize) => b.min(v),
                    (Some(b), Sense::Maximize) => b.max(v),
                });
            }
        }
    });
    best
}

fn small_lp() -> impl Strategy<Value = LinearProgram> {
    (2usize..4, any::<bool>(), any::<u64>()).prop_map(|(n, max, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sense = if max { Sense::Maximize } else { Sense::Minimize };
        let mut lp = LinearProgram::new(sense, (0..n).map(|_| rng.random_range(-2.0..2.0)).collect());
        lp.bounds = (0..n).map(|_| (rng.random_range(-2.0..0.5), rng.random_range(1.0..4.0))).collect();
        for r in 0..rng.random_range(1..5) {
            let coefs = (0..n).map(|j| (j, rng.random_range(-2.0..2.0))).collect();
            let kind = rng.random_range(0..4);
            let a = rng.random_range(-3.0..3.0);
            let (lo, hi) = match kind {
                0 => (f64::NEG_INFINITY, a),
                1 => (a, f64::INFINITY),
                2 => (a, a + rng.random_range(0.0..2.0)),
                _ => (a, a),
            };
            lp.push(Constraint::new(format!("c{r}"), coefs, lo, hi));
        }
        lp
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]
    #[test]
    fn matches_vertex_enumeration(lp in small_lp()) {
        let sol = solve_lp(&lp).unwrap();
        match brute_force(&lp) {
            Some(best) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective - best).abs() <= 1e-7 * (1.0 + best.abs()), "{} vs {}", sol.objective, best);
                prop_assert!(feasible(&lp, &sol.x, 1e-8));
            }
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
        }
    }
}

#[test]
fn detects_unbounded_and_infeasible() {
    let mut lp = LinearProgram::new(Sense::Maximize, vec![1.0, 1.0]);
    lp.push(Constraint::new("diff", vec![(0, 1.0), (1, -1.0)], f64::NEG_INFINITY, 1.0));
    assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    assert!(solve_lp(&lp).unwrap().require_optimal().is_err());

    let mut lp = LinearProgram::new(Sense::Minimize, vec![1.0, 0.0]);
    lp.push(Constraint::new("sum_hi", vec![(0, 1.0), (1, 1.0)], f64::NEG_INFINITY, 1.0));
    lp.push(Constraint::new("sum_lo", vec![(0, 1.0), (1, 1.0)], 3.0, f64::INFINITY));
    let sol = solve_lp(&lp).unwrap();
    assert_eq!(sol.status, LpStatus::Infeasible);
    let (name, _) = sol.most_violated.unwrap();
    assert!(name == "sum_hi" || name == "sum_lo");
}

#[test]
fn repeated_solves_are_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let lp = random_lp(&mut rng, Sense::Minimize);
    assert_eq!(solve_lp(&lp).unwrap(), solve_lp(&lp).unwrap());
}
