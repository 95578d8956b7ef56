//! Constraint-based causal structure learning over lagged series.
//!
//! Three stages, run once per candidate significance level:
//!
//! 1. lagged parent screening per variable (PC1-style: condition on the
//!    strongest surviving candidates, growing the conditioning size each
//!    pass),
//! 2. contemporaneous skeleton search conditioning on both endpoints'
//!    screened lagged parents plus subsets of contemporaneous neighbors,
//! 3. collider orientation followed by Meek rules 1-3, freezing any pair
//!    the rules disagree on (those stay undirected in the output).
//!
//! Each stage ends with a family-wise prune: an edge survives only when
//! the worst p-value it ever produced clears alpha divided by the size of
//! its test family. Without that prune the per-test false-positive rate
//! accumulates across the O(N^2) tests and null data stops coming back
//! empty.
//!
//! When no fixed alpha is given, the whole procedure runs once per grid
//! value and the result with the lowest summed per-variable regression
//! BIC wins; ties go to the smaller alpha.

use std::collections::{BTreeMap, BTreeSet};

use crate::dataset::{pearson, DiagnosticInput, TimeSeriesDataset};
use crate::graph::CausalGraph;
use crate::stats::{correlation_pvalue, normal_scores, ols_residuals, sum_sq};
use crate::{Error, Result};

/// A series reference: (metric index, lag in samples).
pub type VarLag = (usize, usize);

/// Which conditional-independence test backs the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiTestKind {
    /// Partial correlation on normal-scores (rank-transformed) data with a
    /// Student-t p-value.
    RobustPartialCorrelation,
}

#[derive(Debug, Clone)]
pub struct DiscoveryConfig {
    /// Maximum lag, in samples, considered for lagged edges.
    pub tau_max: usize,
    /// Fixed significance level. When `None` the grid below is searched.
    pub alpha: Option<f64>,
    /// Candidate significance levels for the BIC-driven selection.
    pub alpha_grid: Vec<f64>,
    /// Cap on the contemporaneous conditioning-subset size. Bounds stage-2
    /// runtime on dense 25-node graphs.
    pub max_condition_size: usize,
    pub ci_test: CiTestKind,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            tau_max: 1,
            alpha: None,
            alpha_grid: vec![0.01, 0.02, 0.05, 0.1, 0.2],
            max_condition_size: 3,
            ci_test: CiTestKind::RobustPartialCorrelation,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CiTestResult {
    /// Partial correlation of the two residual series.
    pub statistic: f64,
    /// Two-sided p-value from a t-transform of the statistic.
    pub p_value: f64,
    /// Samples left after lag alignment.
    pub effective_samples: usize,
    /// Set when the conditioning regression was rank-deficient and
    /// redundant columns were dropped from the projection.
    pub rank_deficient: bool,
    /// The conditioning set actually used (sorted, deduplicated).
    pub conditioning: Vec<VarLag>,
}

/// Result of a full structure search, with the selection metadata the
/// plain [`discover`] entry point throws away.
#[derive(Debug, Clone)]
pub struct Discovery {
    pub graph: CausalGraph,
    /// Significance level the BIC selection settled on.
    pub alpha: f64,
    /// Summed per-variable regression BIC of the winning graph.
    pub bic: f64,
    /// The dataset was shorter than the recommended 10 * (tau_max + 1)
    /// samples; results are usable but underpowered.
    pub low_sample: bool,
}

/// Tests x independent of y given Z on the lag-aligned overlap of all
/// involved series. Columns are rank-transformed to normal scores before
/// the partial correlation, which keeps the test usable on skewed or
/// spiky load metrics.
pub fn ci_test(
    data: &TimeSeriesDataset,
    x: VarLag,
    y: VarLag,
    z: &[VarLag],
) -> Result<CiTestResult> {
    let n_vars = data.n_metrics();
    let check = |(v, _): VarLag| -> Result<()> {
        if v >= n_vars {
            return Err(Error::arg(format!(
                "metric index {v} out of range ({n_vars} metrics)"
            )));
        }
        Ok(())
    };
    check(x)?;
    check(y)?;
    let mut zset: BTreeSet<VarLag> = BTreeSet::new();
    for &zv in z {
        check(zv)?;
        zset.insert(zv);
    }
    let conditioning: Vec<VarLag> = zset.into_iter().collect();

    let max_lag = conditioning
        .iter()
        .map(|&(_, l)| l)
        .chain([x.1, y.1])
        .max()
        .unwrap_or(0);
    let t_len = data.len();
    if t_len <= max_lag {
        return Err(Error::InsufficientData(format!(
            "{t_len} samples cannot support lag {max_lag}"
        )));
    }
    let n = t_len - max_lag;
    if n < conditioning.len() + 3 {
        return Err(Error::InsufficientData(format!(
            "{n} effective samples for a conditioning set of {}",
            conditioning.len()
        )));
    }

    let column = |(v, lag): VarLag| -> Vec<f64> {
        let s = data.series(v);
        (max_lag..t_len).map(|t| s[t - lag]).collect()
    };
    let xs = normal_scores(&column(x));
    let ys = normal_scores(&column(y));
    let zcols: Vec<Vec<f64>> = conditioning
        .iter()
        .map(|&zv| normal_scores(&column(zv)))
        .collect();

    let (rx, dx) = ols_residuals(&xs, &zcols);
    let (ry, dy) = ols_residuals(&ys, &zcols);
    let r = pearson(&rx, &ry)?;
    let df = (n - conditioning.len()) as f64 - 2.0;
    Ok(CiTestResult {
        statistic: r,
        p_value: correlation_pvalue(r, df),
        effective_samples: n,
        rank_deficient: dx || dy,
        conditioning,
    })
}

/// Learns a causal graph over the input's metrics. Lagged edges are
/// directed forward in time by construction; contemporaneous edges are
/// directed only where the orientation rules agree.
pub fn discover(input: &DiagnosticInput, config: &DiscoveryConfig) -> Result<CausalGraph> {
    Ok(discover_detailed(input, config)?.graph)
}

/// [`discover`] plus the chosen alpha, its BIC score, and the low-sample
/// flag.
pub fn discover_detailed(input: &DiagnosticInput, config: &DiscoveryConfig) -> Result<Discovery> {
    let data = &input.dataset;
    let t_len = data.len();
    if t_len < config.tau_max + 3 {
        return Err(Error::InsufficientData(format!(
            "{t_len} samples is too short for any test at max lag {}",
            config.tau_max
        )));
    }
    let alphas = if let Some(a) = config.alpha {
        vec![a]
    } else {
        let mut g = config.alpha_grid.clone();
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    };
    if alphas.is_empty() {
        return Err(Error::arg("empty alpha grid"));
    }
    for &a in &alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::arg(format!("alpha {a} outside (0, 1)")));
        }
    }

    let mut best: Option<(f64, f64, CausalGraph)> = None;
    for &alpha in &alphas {
        let graph = run_at_alpha(data, config, alpha)?;
        let bic = total_bic(data, config.tau_max, &graph);
        // Strict comparison over an ascending grid: ties keep the
        // smaller alpha.
        let better = match &best {
            None => true,
            Some((_, b, _)) => bic < *b,
        };
        if better {
            best = Some((alpha, bic, graph));
        }
    }
    let (alpha, bic, graph) = best.expect("alpha grid is nonempty");
    Ok(Discovery {
        graph,
        alpha,
        bic,
        low_sample: t_len < 10 * (config.tau_max + 1),
    })
}

#[derive(Debug, Clone)]
struct Candidate {
    var: usize,
    lag: usize,
    /// Weakest absolute partial correlation seen across passes.
    strength: f64,
    /// Worst p-value seen across passes; the family prune keys off this.
    p_max: f64,
}

fn sort_candidates(cands: &mut [Candidate]) {
    cands.sort_by(|a, b| {
        b.strength
            .total_cmp(&a.strength)
            .then(a.var.cmp(&b.var))
            .then(a.lag.cmp(&b.lag))
    });
}

/// Stage 1: per-variable lagged parent screening.
fn screen_lagged(
    data: &TimeSeriesDataset,
    config: &DiscoveryConfig,
    alpha: f64,
    target: usize,
) -> Result<Vec<Candidate>> {
    let n_vars = data.n_metrics();
    let n_eff = data.len() - config.tau_max;

    let mut cands = Vec::new();
    for var in 0..n_vars {
        for lag in 1..=config.tau_max {
            let res = ci_test(data, (var, lag), (target, 0), &[])?;
            if res.p_value <= alpha {
                cands.push(Candidate {
                    var,
                    lag,
                    strength: res.statistic.abs(),
                    p_max: res.p_value,
                });
            }
        }
    }

    let mut q = 1;
    while cands.len() > q && n_eff >= q + 3 {
        sort_candidates(&mut cands);
        let snapshot: Vec<VarLag> = cands.iter().map(|c| (c.var, c.lag)).collect();
        let mut keep = vec![true; cands.len()];
        for idx in 0..cands.len() {
            let me = snapshot[idx];
            let others: Vec<VarLag> = snapshot
                .iter()
                .copied()
                .filter(|&vl| vl != me)
                .take(q)
                .collect();
            let res = ci_test(data, me, (target, 0), &others)?;
            let c = &mut cands[idx];
            c.strength = c.strength.min(res.statistic.abs());
            c.p_max = c.p_max.max(res.p_value);
            if res.p_value > alpha {
                keep[idx] = false;
            }
        }
        let mut it = keep.into_iter();
        cands.retain(|_| it.next().unwrap());
        q += 1;
    }

    // Family-wise prune. Each target's candidate family has
    // n_vars * tau_max members; every member got at least one test.
    let family = (n_vars * config.tau_max).max(1) as f64;
    cands.retain(|c| c.p_max <= alpha / family);
    sort_candidates(&mut cands);
    Ok(cands)
}

struct ContempSkeleton {
    /// Surviving contemporaneous adjacencies, stored with u < v.
    adj: BTreeSet<(usize, usize)>,
    /// For each removed pair, the conditioning set that separated it.
    sepsets: BTreeMap<(usize, usize), BTreeSet<VarLag>>,
}

/// Stage 2: contemporaneous skeleton via PC-stable over neighbor subsets,
/// always conditioning on both endpoints' screened lagged parents.
fn contemporaneous_skeleton(
    data: &TimeSeriesDataset,
    config: &DiscoveryConfig,
    alpha: f64,
    lag_parents: &[Vec<VarLag>],
) -> Result<ContempSkeleton> {
    let n_vars = data.n_metrics();
    let t_len = data.len();
    let mut adj: BTreeSet<(usize, usize)> = (0..n_vars)
        .flat_map(|u| (u + 1..n_vars).map(move |v| (u, v)))
        .collect();
    let mut sepsets = BTreeMap::new();
    // Worst test each surviving pair has produced, for the final prune.
    let mut worst: BTreeMap<(usize, usize), (f64, BTreeSet<VarLag>)> = BTreeMap::new();

    for q in 0..=config.max_condition_size {
        if adj.is_empty() {
            break;
        }
        let snapshot = adj.clone();
        let mut nbrs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_vars];
        for &(u, v) in &snapshot {
            nbrs[u].insert(v);
            nbrs[v].insert(u);
        }
        let mut removals: Vec<((usize, usize), BTreeSet<VarLag>)> = Vec::new();
        for &(u, v) in &snapshot {
            let pool: Vec<usize> = nbrs[u]
                .union(&nbrs[v])
                .copied()
                .filter(|&w| w != u && w != v)
                .collect();
            if pool.len() < q {
                continue;
            }
            let base: BTreeSet<VarLag> = lag_parents[u]
                .iter()
                .chain(lag_parents[v].iter())
                .copied()
                .collect();
            for subset in combinations(&pool, q) {
                let mut zset = base.clone();
                for &w in &subset {
                    zset.insert((w, 0));
                }
                let max_lag = zset.iter().map(|&(_, l)| l).max().unwrap_or(0);
                if t_len - max_lag < zset.len() + 3 {
                    // Not enough samples to run this test; the pair stays
                    // adjacent rather than being separated untested.
                    continue;
                }
                let z: Vec<VarLag> = zset.iter().copied().collect();
                let res = ci_test(data, (u, 0), (v, 0), &z)?;
                let entry = worst.entry((u, v)).or_insert((-1.0, BTreeSet::new()));
                if res.p_value > entry.0 {
                    *entry = (res.p_value, zset.clone());
                }
                if res.p_value > alpha {
                    removals.push(((u, v), zset));
                    break;
                }
            }
        }
        for (pair, sep) in removals {
            adj.remove(&pair);
            sepsets.insert(pair, sep);
        }
    }

    // Family-wise prune over the pair family.
    let family = (n_vars * (n_vars - 1) / 2).max(1) as f64;
    for &(u, v) in &adj.clone() {
        if let Some((p, sep)) = worst.get(&(u, v)) {
            if *p > alpha / family {
                adj.remove(&(u, v));
                sepsets.insert((u, v), sep.clone());
            }
        }
    }
    Ok(ContempSkeleton { adj, sepsets })
}

fn pair_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Stage 3: assemble the output graph and orient contemporaneous edges.
/// Collider rule first, then Meek rules 1-3 to a fixpoint. Pairs with
/// conflicting demands (or whose orientation would close a lag-0 cycle)
/// are frozen and stay undirected.
fn assemble_and_orient(
    names: &[String],
    lag_parents: &[Vec<VarLag>],
    skel: &ContempSkeleton,
) -> Result<CausalGraph> {
    let mut g = CausalGraph::new(names.to_vec())?;
    for (target, parents) in lag_parents.iter().enumerate() {
        for &(var, lag) in parents {
            g.add_directed(var, target, lag)?;
        }
    }
    for &(u, v) in &skel.adj {
        g.add_undirected(u, v)?;
    }

    let n = names.len();
    let mut frozen: BTreeSet<(usize, usize)> = BTreeSet::new();

    // Collider rule: for each unshielded triple i - k - j whose separating
    // set does not contain k at lag 0, propose i -> k and j -> k.
    let mut proposals: BTreeSet<(usize, usize)> = BTreeSet::new();
    for k in 0..n {
        let nb: Vec<usize> = (0..n)
            .filter(|&x| x != k && skel.adj.contains(&pair_key(x, k)))
            .collect();
        for (a, &i) in nb.iter().enumerate() {
            for &j in &nb[a + 1..] {
                if skel.adj.contains(&pair_key(i, j)) {
                    continue;
                }
                if let Some(sep) = skel.sepsets.get(&pair_key(i, j)) {
                    if !sep.contains(&(k, 0)) {
                        proposals.insert((i, k));
                        proposals.insert((j, k));
                    }
                }
            }
        }
    }
    for &(a, b) in &proposals {
        if proposals.contains(&(b, a)) {
            frozen.insert(pair_key(a, b));
        }
    }
    for &(a, b) in &proposals {
        if frozen.contains(&pair_key(a, b)) || !g.has_undirected(a, b) {
            continue;
        }
        match g.orient_undirected(a, b) {
            Ok(()) => {}
            Err(Error::Cycle { .. }) => {
                frozen.insert(pair_key(a, b));
            }
            Err(e) => return Err(e),
        }
    }

    // Meek rules to fixpoint. Both directions are evaluated before either
    // is applied so scan order cannot decide a conflict.
    loop {
        let mut changed = false;
        let pairs: Vec<(usize, usize)> = g.undirected_pairs().collect();
        for (u, v) in pairs {
            if frozen.contains(&(u, v)) || !g.has_undirected(u, v) {
                continue;
            }
            let fwd = meek_demands(&g, u, v);
            let rev = meek_demands(&g, v, u);
            let (from, to) = match (fwd, rev) {
                (true, true) => {
                    frozen.insert((u, v));
                    continue;
                }
                (true, false) => (u, v),
                (false, true) => (v, u),
                (false, false) => continue,
            };
            match g.orient_undirected(from, to) {
                Ok(()) => changed = true,
                Err(Error::Cycle { .. }) => {
                    frozen.insert((u, v));
                }
                Err(e) => return Err(e),
            }
        }
        if !changed {
            break;
        }
    }
    Ok(g)
}

/// True when any of Meek rules 1-3 demands the lag-0 orientation a -> b.
fn meek_demands(g: &CausalGraph, a: usize, b: usize) -> bool {
    let n = g.n_vertices();
    let dir0 = |x: usize, y: usize| g.has_directed(x, y, 0);
    let adj0 = |x: usize, y: usize| dir0(x, y) || dir0(y, x) || g.has_undirected(x, y);

    // R1: c -> a, c and b non-adjacent.
    for c in 0..n {
        if c != a && c != b && dir0(c, a) && !adj0(c, b) {
            return true;
        }
    }
    // R2: a -> c -> b.
    for c in 0..n {
        if c != a && c != b && dir0(a, c) && dir0(c, b) {
            return true;
        }
    }
    // R3: a - c -> b and a - d -> b with c, d non-adjacent.
    let into_b: Vec<usize> = (0..n)
        .filter(|&c| c != a && c != b && g.has_undirected(a, c) && dir0(c, b))
        .collect();
    for (i, &c) in into_b.iter().enumerate() {
        for &d in &into_b[i + 1..] {
            if !adj0(c, d) {
                return true;
            }
        }
    }
    false
}

fn run_at_alpha(
    data: &TimeSeriesDataset,
    config: &DiscoveryConfig,
    alpha: f64,
) -> Result<CausalGraph> {
    let n_vars = data.n_metrics();
    let mut lag_parents: Vec<Vec<VarLag>> = Vec::with_capacity(n_vars);
    for target in 0..n_vars {
        let cands = screen_lagged(data, config, alpha, target)?;
        lag_parents.push(cands.into_iter().map(|c| (c.var, c.lag)).collect());
    }
    let skel = contemporaneous_skeleton(data, config, alpha, &lag_parents)?;
    assemble_and_orient(data.names(), &lag_parents, &skel)
}

/// Summed per-variable BIC of ordinary least squares on each variable's
/// parents in `graph`. Undirected adjacencies contribute nothing; an
/// overparameterized variable sends the total to infinity.
fn total_bic(data: &TimeSeriesDataset, tau_max: usize, graph: &CausalGraph) -> f64 {
    let t_len = data.len();
    let n = t_len - tau_max;
    let mut parents: Vec<Vec<VarLag>> = vec![Vec::new(); data.n_metrics()];
    for (from, to, lag) in graph.directed_edges() {
        parents[to].push((from, lag));
    }
    let mut total = 0.0;
    for (j, pars) in parents.iter().enumerate() {
        let k = pars.len();
        if n <= k + 1 {
            return f64::INFINITY;
        }
        let cols: Vec<Vec<f64>> = pars
            .iter()
            .map(|&(v, lag)| {
                let s = data.series(v);
                (tau_max..t_len).map(|t| s[t - lag]).collect()
            })
            .collect();
        let y: Vec<f64> = data.series(j)[tau_max..].to_vec();
        let (resid, _) = ols_residuals(&y, &cols);
        let rss = sum_sq(&resid).max(1e-300);
        let nf = n as f64;
        total += nf * (rss / nf).ln() + (k + 1) as f64 * nf.ln();
    }
    total
}

/// Lexicographic k-subsets of `pool`.
fn combinations(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > pool.len() {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| pool[i]).collect());
        // Advance the rightmost index that still has room.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + pool.len() - k {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
