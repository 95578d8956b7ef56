//! Numeric helpers for the independence tests: rank-based normal scores,
//! least-squares residualization, and the t-distribution tail for
//! correlation p-values.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Maps a series to normal scores: average ranks (ties share their mean
/// rank) pushed through the standard normal quantile at `rank / (n + 1)`.
/// Monotone in the data, so it tames heavy tails without reordering.
pub fn normal_scores(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    ranks
        .into_iter()
        .map(|r| normal.inverse_cdf(r / (n as f64 + 1.0)))
        .collect()
}

/// Residual of `y` after projecting out the spans of `cols` and the
/// constant (everything is demeaned first). Rank-deficient column sets are
/// handled by skipping dependent columns, which leaves the projection --
/// and therefore the residual -- unchanged; the flag reports that it
/// happened.
pub fn ols_residuals(y: &[f64], cols: &[Vec<f64>]) -> (Vec<f64>, bool) {
    let n = y.len();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let my = mean(y);
    let mut resid: Vec<f64> = y.iter().map(|v| v - my).collect();

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    let mut rank_deficient = false;
    for col in cols {
        let mc = mean(col);
        let mut q: Vec<f64> = col.iter().map(|v| v - mc).collect();
        let orig_norm = norm(&q);
        if orig_norm == 0.0 {
            rank_deficient = true;
            continue;
        }
        // modified Gram-Schmidt, twice for stability
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(&q, b);
                for (qi, bi) in q.iter_mut().zip(b) {
                    *qi -= proj * bi;
                }
            }
        }
        let nrm = norm(&q);
        if nrm < 1e-10 * orig_norm {
            rank_deficient = true;
            continue;
        }
        for qi in &mut q {
            *qi /= nrm;
        }
        basis.push(q);
    }
    for b in &basis {
        let proj = dot(&resid, b);
        for (ri, bi) in resid.iter_mut().zip(b) {
            *ri -= proj * bi;
        }
    }
    debug_assert_eq!(resid.len(), n);
    (resid, rank_deficient)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sum of squared entries, for BIC bookkeeping.
pub fn sum_sq(x: &[f64]) -> f64 {
    dot(x, x)
}

/// Two-sided p-value for a (partial) correlation `r` with `df` residual
/// degrees of freedom, via the exact t transform.
pub fn correlation_pvalue(r: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return 1.0;
    }
    let r = r.clamp(-1.0, 1.0);
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normal_scores_are_monotone_and_centered() {
        let x = [3.0, -1.0, 10.0, 0.5, 0.5, -7.0];
        let s = normal_scores(&x);
        assert_eq!(s[3], s[4]); // ties share a score
        assert!(s[5] < s[1] && s[1] < s[3] && s[3] < s[0] && s[0] < s[2]);
        let mean: f64 = s.iter().sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 1e-9); // symmetric ranks cancel
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|t| 2.0 * cols[0][t] - cols[1][t] + 0.3 * rng.gen_range(-1.0..1.0f64))
            .collect();
        let (resid, deficient) = ols_residuals(&y, &cols);
        assert!(!deficient);
        for col in &cols {
            let mc = col.iter().sum::<f64>() / n as f64;
            let centered: Vec<f64> = col.iter().map(|v| v - mc).collect();
            assert!(dot(&resid, &centered).abs() < 1e-8);
        }
        // residual norm can only shrink relative to the demeaned response
        let my = y.iter().sum::<f64>() / n as f64;
        let dy: Vec<f64> = y.iter().map(|v| v - my).collect();
        assert!(sum_sq(&resid) <= sum_sq(&dy) + 1e-12);
    }

    #[test]
    fn duplicate_column_flags_but_projects_the_same() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 40;
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|t| a[t] + rng.gen_range(-0.1..0.1f64)).collect();
        let (r1, d1) = ols_residuals(&y, &[a.clone()]);
        let (r2, d2) = ols_residuals(&y, &[a.clone(), a.clone()]);
        assert!(!d1);
        assert!(d2);
        for (u, v) in r1.iter().zip(&r2) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn pvalue_behaves() {
        // exact null at r = 0
        assert!((correlation_pvalue(0.0, 50.0) - 1.0).abs() < 1e-12);
        assert_eq!(correlation_pvalue(1.0, 50.0), 0.0);
        // known point: r = 0.5, n = 27, df = 25 -> t ~ 2.887, p ~ 0.0079
        let p = correlation_pvalue(0.5, 25.0);
        assert!((p - 0.0079).abs() < 5e-4, "p = {p}");
        // monotone in |r|
        assert!(correlation_pvalue(0.6, 25.0) < correlation_pvalue(0.4, 25.0));
        // symmetric
        assert!(
            (correlation_pvalue(0.37, 33.0) - correlation_pvalue(-0.37, 33.0)).abs() < 1e-12
        );
    }
}
