//! Candidate scoring against the performance metric.
//!
//! Each candidate series is normalized, then searched over a small
//! smoothing-and-lead grid: widths 1..=max_width (trailing means) and
//! leads 0..=max_shift (the candidate is allowed to move ahead of the
//! target, never behind it, since causes precede effects). Every grid
//! cell is charged for its distortion, score = |corr| - penalty, and
//! the best cell wins. Candidates clearing `min_sim` and any
//! correlation-sign rules become root-cause candidates.

use crate::dataset::{normalize, pearson, shift, smooth, DiagnosticInput};
use crate::knowledge::DomainKnowledge;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct RefinementConfig {
    /// Largest lead (in samples) a candidate may take on the target.
    pub max_shift: usize,
    /// Largest trailing-mean window applied to a candidate.
    pub max_width: usize,
    /// Score cost per step of lead.
    pub shift_penalty: f64,
    /// Score cost per unit of smoothing beyond width 1.
    pub smooth_penalty: f64,
    /// Minimum adjusted score a candidate must reach.
    pub min_sim: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            max_shift: 1,
            max_width: 2,
            shift_penalty: 0.004,
            smooth_penalty: 0.01,
            min_sim: 0.5,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_width < 1 {
            return Err(Error::arg("max_width must be at least 1"));
        }
        if !(self.shift_penalty >= 0.0 && self.smooth_penalty >= 0.0) {
            return Err(Error::arg("penalties must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.min_sim) {
            return Err(Error::arg(format!(
                "min_sim {} outside [0, 1]",
                self.min_sim
            )));
        }
        Ok(())
    }
}

/// The winning grid cell for one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustedScore {
    /// |corr| minus the penalty.
    pub score: f64,
    /// Signed Pearson correlation at the winning cell.
    pub corr: f64,
    /// smooth_penalty * (width - 1) + shift_penalty * shift.
    pub penalty: f64,
    pub width: usize,
    pub shift: usize,
}

/// Scores one candidate against the target series over the full
/// smoothing/lead grid. Ties on score fall to the smaller penalty, then
/// to the smaller (width, shift) pair, making the result canonical.
pub fn adjusted_score(
    x: &[f64],
    c: &[f64],
    config: &RefinementConfig,
) -> Result<AdjustedScore> {
    config.validate()?;
    if x.len() != c.len() {
        return Err(Error::arg(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            c.len()
        )));
    }
    if x.len() < config.max_width + config.max_shift + 2 {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot support width {} and shift {}",
            x.len(),
            config.max_width,
            config.max_shift
        )));
    }

    let nx = normalize(x);
    let nc = normalize(c);
    let mut best: Option<AdjustedScore> = None;
    for width in 1..=config.max_width {
        let smoothed = smooth(&nc, width)?;
        for lead in 0..=config.max_shift {
            let al = shift(&smoothed, lead)?;
            let corr = pearson(&nx[al.target_range()], &smoothed[al.candidate_range()])?;
            let penalty =
                config.smooth_penalty * (width - 1) as f64 + config.shift_penalty * lead as f64;
            let cell = AdjustedScore {
                score: corr.abs() - penalty,
                corr,
                penalty,
                width,
                shift: lead,
            };
            let wins = match &best {
                None => true,
                Some(b) => {
                    cell.score > b.score
                        || (cell.score == b.score && cell.penalty < b.penalty)
                }
            };
            if wins {
                best = Some(cell);
            }
        }
    }
    Ok(best.expect("grid has at least one cell"))
}

/// Outcome of scoring every candidate metric.
#[derive(Debug, Clone, Default)]
pub struct Refined {
    /// Candidates that cleared the threshold and the sign rules, in
    /// metric-name order.
    pub accepted: Vec<(String, AdjustedScore)>,
    /// Candidates scoring below min_sim.
    pub below_min_sim: Vec<String>,
    /// Candidates whose correlation sign broke a refinement rule.
    pub sign_filtered: Vec<String>,
}

/// Scores all candidates of `input` against its target and filters by
/// threshold and sign rules.
pub fn refine(
    input: &DiagnosticInput,
    dk: &DomainKnowledge,
    config: &RefinementConfig,
) -> Result<Refined> {
    config.validate()?;
    let x = input.target_series();
    let mut out = Refined::default();
    for (idx, name) in input.candidates() {
        let s = adjusted_score(x, input.dataset.series(idx), config)?;
        if s.score < config.min_sim {
            out.below_min_sim.push(name.to_string());
        } else if !dk.sign_permits(name, s.corr) {
            out.sign_filtered.push(name.to_string());
        } else {
            out.accepted.push((name.to_string(), s));
        }
    }
    out.accepted.sort_by(|a, b| a.0.cmp(&b.0));
    out.below_min_sim.sort();
    out.sign_filtered.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TimeSeriesDataset;
    use crate::knowledge::parse_dk;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Independent re-statement of the grid: naive normalize, naive
    /// trailing mean with partial left windows, naive overlap Pearson.
    fn oracle(x: &[f64], c: &[f64], cfg: &RefinementConfig) -> AdjustedScore {
        let norm = |v: &[f64]| -> Vec<f64> {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            if var == 0.0 {
                return vec![0.0; v.len()];
            }
            v.iter().map(|a| (a - mean) / var.sqrt()).collect()
        };
        let corr = |a: &[f64], b: &[f64]| -> f64 {
            let n = a.len() as f64;
            let (ma, mb) = (
                a.iter().sum::<f64>() / n,
                b.iter().sum::<f64>() / n,
            );
            let cov: f64 = a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum();
            let (va, vb): (f64, f64) = (
                a.iter().map(|p| (p - ma).powi(2)).sum(),
                b.iter().map(|q| (q - mb).powi(2)).sum(),
            );
            if va == 0.0 || vb == 0.0 {
                0.0
            } else {
                cov / (va * vb).sqrt()
            }
        };
        let nx = norm(x);
        let nc = norm(c);
        let mut best: Option<AdjustedScore> = None;
        for w in 1..=cfg.max_width {
            let sm: Vec<f64> = (0..nc.len())
                .map(|t| {
                    let lo = t.saturating_sub(w - 1);
                    nc[lo..=t].iter().sum::<f64>() / (t - lo + 1) as f64
                })
                .collect();
            for s in 0..=cfg.max_shift {
                let r = corr(&nx[s..], &sm[..sm.len() - s]);
                let penalty = cfg.smooth_penalty * (w - 1) as f64 + cfg.shift_penalty * s as f64;
                let cell = AdjustedScore {
                    score: r.abs() - penalty,
                    corr: r,
                    penalty,
                    width: w,
                    shift: s,
                };
                let wins = match &best {
                    None => true,
                    Some(b) => {
                        cell.score > b.score
                            || (cell.score == b.score && cell.penalty < b.penalty)
                    }
                };
                if wins {
                    best = Some(cell);
                }
            }
        }
        best.unwrap()
    }

    fn walk(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(n);
        let mut acc = 0.0;
        for _ in 0..n {
            acc += rng.sample::<f64, _>(StandardNormal);
            v.push(acc);
        }
        v
    }

    #[test]
    fn identical_series_score_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let x = walk(&mut rng, 50);
        let s = adjusted_score(&x, &x, &RefinementConfig::default()).unwrap();
        assert!((s.score - 1.0).abs() < 1e-12);
        assert!((s.corr - 1.0).abs() < 1e-12);
        assert_eq!(s.penalty, 0.0);
        assert_eq!((s.width, s.shift), (1, 0));
    }

    #[test]
    fn negated_series_score_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = walk(&mut rng, 50);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let s = adjusted_score(&x, &neg, &RefinementConfig::default()).unwrap();
        assert!((s.score - 1.0).abs() < 1e-12);
        assert!((s.corr + 1.0).abs() < 1e-12);
        assert_eq!(s.penalty, 0.0);
    }

    #[test]
    fn leading_candidate_wins_the_shift_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let full = walk(&mut rng, 61);
        let x = full[..60].to_vec();
        let c = full[1..].to_vec(); // c runs one step ahead of x
        let cfg = RefinementConfig::default();
        let s = adjusted_score(&x, &c, &cfg).unwrap();
        assert_eq!((s.width, s.shift), (1, 1));
        assert!((s.corr - 1.0).abs() < 1e-12);
        assert!((s.penalty - 0.004).abs() < 1e-15);
        assert!((s.score - 0.996).abs() < 1e-12);
        let o = oracle(&x, &c, &cfg);
        assert_eq!((o.width, o.shift), (1, 1));
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_pairs() {
        let cfg = RefinementConfig {
            max_shift: 2,
            max_width: 3,
            ..RefinementConfig::default()
        };
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(4_400 + seed);
            let x = walk(&mut rng, 40);
            let c = walk(&mut rng, 40);
            let got = adjusted_score(&x, &c, &cfg).unwrap();
            let want = oracle(&x, &c, &cfg);
            assert_eq!((got.width, got.shift), (want.width, want.shift), "seed {seed}");
            assert!((got.score - want.score).abs() < 1e-12, "seed {seed}");
            assert!((got.corr - want.corr).abs() < 1e-12, "seed {seed}");
            assert_eq!(got.penalty, want.penalty, "seed {seed}");
        }
    }

    #[test]
    fn exact_grid_tie_takes_smallest_cell() {
        // A constant candidate correlates exactly 0.0 in every grid
        // cell, so with zero penalties all cells tie bit-for-bit on
        // both score and penalty. The (width, shift) order must break
        // the tie toward the least-distorted cell. (Score ties with
        // unequal penalties are not pinned here: they require exact
        // float coincidences across different correlations, and at the
        // default penalties the penalty order and the lexicographic
        // order agree anyway.)
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let x = walk(&mut rng, 40);
        let flat = vec![7.5; 40];
        let cfg = RefinementConfig {
            max_shift: 2,
            max_width: 3,
            shift_penalty: 0.0,
            smooth_penalty: 0.0,
            ..RefinementConfig::default()
        };
        let s = adjusted_score(&x, &flat, &cfg).unwrap();
        assert_eq!((s.width, s.shift), (1, 0));
        assert_eq!(s.score, 0.0);
        assert_eq!(s.corr, 0.0);
        assert_eq!(s.penalty, 0.0);
    }

    #[test]
    fn ablation_config_reduces_to_plain_correlation() {
        let cfg = RefinementConfig {
            max_shift: 0,
            max_width: 1,
            ..RefinementConfig::default()
        };
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(5_500 + seed);
            let x = walk(&mut rng, 35);
            let c = walk(&mut rng, 35);
            let s = adjusted_score(&x, &c, &cfg).unwrap();
            let plain = pearson(&normalize(&x), &normalize(&c)).unwrap();
            assert!((s.score - plain.abs()).abs() < 1e-12);
            assert_eq!(s.penalty, 0.0);
            assert_eq!((s.width, s.shift), (1, 0));
        }
    }

    #[test]
    fn score_never_exceeds_abs_corr() {
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(6_600 + seed);
            let x = walk(&mut rng, 30);
            let c = walk(&mut rng, 30);
            let s = adjusted_score(&x, &c, &RefinementConfig::default()).unwrap();
            assert!(s.score <= s.corr.abs() + 1e-15);
            assert!(s.corr.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn short_series_error() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let cfg = RefinementConfig::default(); // needs 2 + 1 + 2 = 5
        assert!(matches!(
            adjusted_score(&x, &x, &cfg),
            Err(Error::InsufficientData(_))
        ));
    }

    fn fixture_input() -> DiagnosticInput {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = walk(&mut rng, 60);
        let strong = x.clone();
        let medium: Vec<f64> = x
            .iter()
            .map(|v| v + 0.8 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        // White noise, not a walk: two independent walks correlate
        // spuriously at this length, which would defeat the point.
        let weak: Vec<f64> = (0..60).map(|_| rng.sample(StandardNormal)).collect();
        let data = TimeSeriesDataset::new(
            vec!["perf".into(), "strong".into(), "medium".into(), "weak".into()],
            vec![x, strong, medium, weak],
        )
        .unwrap();
        DiagnosticInput::new(data, "perf").unwrap()
    }

    #[test]
    fn refine_thresholds_candidates() {
        let input = fixture_input();
        let dk = parse_dk("{}").unwrap();
        let cfg = RefinementConfig::default();
        let out = refine(&input, &dk, &cfg).unwrap();
        let names: Vec<&str> = out.accepted.iter().map(|(n, _)| n.as_str()).collect();
        assert!(names.contains(&"strong"));
        assert!(names.contains(&"medium"));
        assert!(out.below_min_sim.contains(&"weak".to_string()));
        assert!(out.sign_filtered.is_empty());

        // Push the threshold above the medium candidate's score: the
        // accepted set must shrink, never grow.
        let medium_score = out
            .accepted
            .iter()
            .find(|(n, _)| n == "medium")
            .map(|(_, s)| s.score)
            .unwrap();
        let tight = RefinementConfig {
            min_sim: (medium_score + 0.01).min(1.0),
            ..cfg
        };
        let narrower = refine(&input, &dk, &tight).unwrap();
        let narrow_names: Vec<&str> =
            narrower.accepted.iter().map(|(n, _)| n.as_str()).collect();
        assert!(!narrow_names.contains(&"medium"));
        for n in &narrow_names {
            assert!(names.contains(n), "tighter min_sim admitted {n}");
        }
    }

    #[test]
    fn refine_is_monotone_in_min_sim() {
        let input = fixture_input();
        let dk = parse_dk("{}").unwrap();
        let mut previous: Option<Vec<String>> = None;
        for threshold in [0.0, 0.25, 0.5, 0.75, 0.9, 1.0] {
            let cfg = RefinementConfig {
                min_sim: threshold,
                ..RefinementConfig::default()
            };
            let got: Vec<String> = refine(&input, &dk, &cfg)
                .unwrap()
                .accepted
                .into_iter()
                .map(|(n, _)| n)
                .collect();
            if let Some(prev) = &previous {
                for n in &got {
                    assert!(prev.contains(n), "RC grew when min_sim rose");
                }
            }
            previous = Some(got);
        }
    }

    #[test]
    fn sign_rules_filter_on_correlation_sign() {
        let input = fixture_input();
        // strong correlates positively with perf; a "negative" rule
        // must throw it out.
        let dk = parse_dk(r#"{"rules": {"strong": "negative"}}"#).unwrap();
        let out = refine(&input, &dk, &RefinementConfig::default()).unwrap();
        assert!(out.sign_filtered.contains(&"strong".to_string()));
        assert!(!out.accepted.iter().any(|(n, _)| n == "strong"));

        let dk = parse_dk(r#"{"rules": {"strong": "positive"}}"#).unwrap();
        let out = refine(&input, &dk, &RefinementConfig::default()).unwrap();
        assert!(out.accepted.iter().any(|(n, _)| n == "strong"));
    }

    #[test]
    fn zero_correlation_fails_any_sign_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = walk(&mut rng, 40);
        let flat = vec![3.0; 40];
        let data = TimeSeriesDataset::new(
            vec!["perf".into(), "flat".into()],
            vec![x, flat],
        )
        .unwrap();
        let input = DiagnosticInput::new(data, "perf").unwrap();
        let dk = parse_dk(r#"{"rules": {"flat": "positive"}}"#).unwrap();
        let cfg = RefinementConfig {
            min_sim: 0.0,
            ..RefinementConfig::default()
        };
        let out = refine(&input, &dk, &cfg).unwrap();
        assert!(out.sign_filtered.contains(&"flat".to_string()));
    }
}
