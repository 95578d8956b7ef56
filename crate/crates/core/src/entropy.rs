//! Orientation of contemporaneous ties by noise-entropy asymmetry.
//!
//! For an undirected pair {u, v} both series are discretized into
//! quantile bins and each direction is charged the entropy of the
//! cheapest exogenous noise that could drive it: direction u -> v costs
//! H(u) + H(E) where E couples the conditional distributions
//! P(v | u = bin). The cheaper direction wins; a gap below `min_gap`
//! bits is inconclusive. Minimum-entropy coupling is NP-hard, so H(E)
//! uses the standard greedy approximation (repeatedly allocate the
//! largest probability mass every conditional can still absorb).

use crate::dataset::TimeSeriesDataset;
use crate::graph::CausalGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// First argument causes the second.
    Forward,
    /// Second argument causes the first.
    Backward,
    Inconclusive,
}

#[derive(Debug, Clone, Copy)]
pub struct OrientationVerdict {
    pub direction: Orientation,
    /// Entropy gap between the two directions, in bits.
    pub score: f64,
}

impl OrientationVerdict {
    pub fn conclusive(&self) -> bool {
        self.direction != Orientation::Inconclusive
    }

    fn inconclusive() -> Self {
        OrientationVerdict {
            direction: Orientation::Inconclusive,
            score: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EntropyConfig {
    /// Quantile bin count for discretization.
    pub bins: usize,
    /// Smallest entropy gap (bits) treated as evidence.
    pub min_gap: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        EntropyConfig {
            bins: 8,
            min_gap: 0.05,
        }
    }
}

impl EntropyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::arg(format!("need at least 2 bins, got {}", self.bins)));
        }
        if !(self.min_gap >= 0.0) {
            return Err(Error::arg(format!("min_gap {} must be >= 0", self.min_gap)));
        }
        Ok(())
    }
}

/// Equal-mass binning: bin edges sit at the k*n/bins order statistics,
/// and tied values always land in the same bin.
fn quantile_bins(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len();
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Each edge is the last order statistic of its bin, so a value
    // equal to an edge stays in the lower bin and ties never split.
    let edges: Vec<f64> = (1..bins).map(|k| sorted[(k * n / bins).max(1) - 1]).collect();
    x.iter()
        .map(|&v| edges.partition_point(|&e| e < v))
        .collect()
}

/// Plug-in entropy in bits. Zero-mass entries contribute nothing.
fn entropy_bits(p: &[f64]) -> f64 {
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    -p.iter()
        .filter(|&&m| m > 0.0)
        .map(|&m| {
            let q = m / total;
            q * q.log2()
        })
        .sum::<f64>()
}

/// Greedy approximate minimum-entropy coupling of the given conditional
/// distributions: each round allocates the largest mass every row can
/// still serve from a single cell. Rows must each sum to 1; the returned
/// value is an upper bound on the exact coupling entropy.
pub fn greedy_coupling_entropy(rows_in: &[Vec<f64>]) -> f64 {
    if rows_in.is_empty() {
        return 0.0;
    }
    let mut rows: Vec<Vec<f64>> = rows_in
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            row.iter().map(|&m| m / s).collect()
        })
        .collect();
    let mut masses = Vec::new();
    let mut remaining = 1.0;
    while remaining > 1e-9 {
        let r = rows
            .iter()
            .map(|row| row.iter().copied().fold(0.0_f64, f64::max))
            .fold(f64::INFINITY, f64::min);
        if r <= 1e-12 {
            break;
        }
        for row in &mut rows {
            let max = row.iter().copied().fold(0.0_f64, f64::max);
            // First index attaining the max keeps the allocation
            // deterministic.
            let i = row.iter().position(|&m| m == max).unwrap();
            row[i] -= r;
        }
        masses.push(r);
        remaining -= r;
    }
    entropy_bits(&masses)
}

/// Entropy cost of explaining `effect` from `cause`: H(cause marginal)
/// plus the coupled noise entropy over the occupied cause bins.
fn direction_cost(joint: &[Vec<f64>]) -> f64 {
    let marginal: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
    let rows: Vec<Vec<f64>> = joint
        .iter()
        .filter(|row| row.iter().sum::<f64>() > 0.0)
        .cloned()
        .collect();
    entropy_bits(&marginal) + greedy_coupling_entropy(&rows)
}

/// Decides between u -> v and v -> u from the two series alone.
pub fn orient_pair(u: &[f64], v: &[f64], config: &EntropyConfig) -> Result<OrientationVerdict> {
    config.validate()?;
    if u.len() != v.len() {
        return Err(Error::arg(format!(
            "series lengths differ: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    if u.len() < 3 * config.bins {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot fill {} bins",
            u.len(),
            config.bins
        )));
    }
    let bu = quantile_bins(u, config.bins);
    let bv = quantile_bins(v, config.bins);
    let occupied = |labels: &[usize]| {
        let mut seen = vec![false; config.bins];
        labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if occupied(&bu) <= 1 || occupied(&bv) <= 1 {
        // A flat series carries no orientation evidence.
        return Ok(OrientationVerdict::inconclusive());
    }

    let n = u.len() as f64;
    let mut joint = vec![vec![0.0; config.bins]; config.bins];
    for (&a, &b) in bu.iter().zip(&bv) {
        joint[a][b] += 1.0 / n;
    }
    let transposed: Vec<Vec<f64>> = (0..config.bins)
        .map(|b| (0..config.bins).map(|a| joint[a][b]).collect())
        .collect();

    let forward = direction_cost(&joint);
    let backward = direction_cost(&transposed);
    let score = (forward - backward).abs();
    let direction = if score < config.min_gap || forward == backward {
        Orientation::Inconclusive
    } else if forward < backward {
        Orientation::Forward
    } else {
        Orientation::Backward
    };
    Ok(OrientationVerdict { direction, score })
}

/// What the orientation stage did with each pair it was handed.
#[derive(Debug, Clone, Default)]
pub struct EntropyInsertions {
    /// Oriented edges actually inserted, as (from, to) vertex indices.
    pub inserted: Vec<(usize, usize)>,
    /// Pairs dropped: inconclusive verdicts, per-pair estimator
    /// failures, and orientations refused by the cycle guard.
    pub discarded: Vec<(usize, usize)>,
}

/// Resolves the given undirected pairs of `g` in place: conclusive
/// verdicts are inserted in score order (ties broken by vertex names)
/// under a cycle guard; everything else is removed as spurious.
pub fn entropy_orientation(
    g: &mut CausalGraph,
    pairs: &[(usize, usize)],
    data: &TimeSeriesDataset,
    config: &EntropyConfig,
) -> Result<EntropyInsertions> {
    config.validate()?;
    let mut out = EntropyInsertions::default();
    let mut conclusive: Vec<(f64, usize, usize)> = Vec::new();
    for &(u, v) in pairs {
        if !g.has_undirected(u, v) {
            return Err(Error::arg(format!(
                "pair {{{}, {}}} is not undirected in the graph",
                g.name(u),
                g.name(v)
            )));
        }
        let su = data.series_by_name(g.name(u))?;
        let sv = data.series_by_name(g.name(v))?;
        match orient_pair(su, sv, config) {
            Ok(verdict) => match verdict.direction {
                Orientation::Forward => conclusive.push((verdict.score, u, v)),
                Orientation::Backward => conclusive.push((verdict.score, v, u)),
                Orientation::Inconclusive => {
                    g.remove_undirected(u, v);
                    out.discarded.push((u, v));
                }
            },
            // Estimator failures on a single pair downgrade to
            // inconclusive rather than abort the stage.
            Err(Error::InsufficientData(_)) => {
                g.remove_undirected(u, v);
                out.discarded.push((u, v));
            }
            Err(e) => return Err(e),
        }
    }
    conclusive.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| g.name(a.1).cmp(g.name(b.1)))
            .then_with(|| g.name(a.2).cmp(g.name(b.2)))
    });
    for (_, from, to) in conclusive {
        if !g.has_undirected(from, to) {
            continue;
        }
        match g.orient_undirected(from, to) {
            Ok(()) => out.inserted.push((from, to)),
            Err(Error::Cycle { .. }) => {
                g.remove_undirected(from, to);
                out.discarded.push((from, to));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
