//! Linear-SCM data generation with anomaly injection.
//!
//! A ground-truth graph carries one real weight per directed edge. Data
//! generation draws one standard-normal noise value per metric per time
//! step and evaluates X_j[t] = sum of w * X_i[t - lag] over incoming
//! edges plus the noise, resolving contemporaneous terms in topological
//! order of the lag-0 sub-graph. Anomaly injection subtracts a constant
//! from the chosen root's noise over the central third of the output
//! and re-runs the same equations on the same noise, so the shift
//! propagates exactly as the structure dictates and every non-descendant
//! stays bit-for-bit unchanged.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::Uniform;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::graph::CausalGraph;
use crate::window::AnomalyWindow;
use crate::{Error, Result};

/// Output samples per simulated dataset. 99 divides into thirds
/// exactly; pass another length to get floor(T/3) flanks.
pub const DEFAULT_SIM_LEN: usize = 99;
/// Default downward shift applied to the injected root's noise,
/// in noise-standard-deviation units.
pub const DEFAULT_DELTA: f64 = 3.0;
/// Samples simulated and discarded before the output window starts.
pub const BURN_IN: usize = 50;

const STABILITY_LIMIT: f64 = 1e6;
// 2020-01-01T00:00:00Z, one sample per hour
const TIMESTAMP_EPOCH: i64 = 1_577_836_800;
const TIMESTAMP_STEP: i64 = 3_600;

/// A causal graph with edge weights, a designated performance sink, and
/// the metrics eligible for anomaly injection.
#[derive(Debug, Clone)]
pub struct GroundTruthGraph {
    pub graph: CausalGraph,
    /// Weight per directed edge, keyed by (from, to, lag) indices.
    pub weights: BTreeMap<(usize, usize, usize), f64>,
    pub performance: String,
    pub eligible_roots: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthJson {
    vertices: Vec<String>,
    directed: Vec<(String, String, usize)>,
    weights: Vec<f64>,
    performance: String,
    eligible_roots: Vec<String>,
}

impl GroundTruthGraph {
    pub fn new(
        graph: CausalGraph,
        weights: BTreeMap<(usize, usize, usize), f64>,
        performance: String,
        eligible_roots: BTreeSet<String>,
    ) -> Result<Self> {
        if graph.n_undirected() != 0 {
            return Err(Error::data("ground truth must be fully directed"));
        }
        let edge_count = graph.directed_edges().count();
        if weights.len() != edge_count {
            return Err(Error::data(format!(
                "{} weights for {} edges",
                weights.len(),
                edge_count
            )));
        }
        for (edge, w) in &weights {
            if !graph.has_directed(edge.0, edge.1, edge.2) {
                return Err(Error::data("weight references a missing edge"));
            }
            if !w.is_finite() {
                return Err(Error::data("non-finite edge weight"));
            }
        }
        let perf = graph.index_of(&performance)?;
        for root in &eligible_roots {
            let r = graph.index_of(root)?;
            if r == perf {
                return Err(Error::data(
                    "performance metric cannot be an eligible root",
                ));
            }
            if !graph.has_causal_path(r, perf) {
                return Err(Error::data(format!(
                    "eligible root {root} has no path to {performance}"
                )));
            }
        }
        Ok(GroundTruthGraph {
            graph,
            weights,
            performance,
            eligible_roots,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GroundTruthJson = serde_json::from_str(text)?;
        if raw.weights.len() != raw.directed.len() {
            return Err(Error::data(format!(
                "{} weights for {} edges",
                raw.weights.len(),
                raw.directed.len()
            )));
        }
        let mut graph = CausalGraph::new(raw.vertices)?;
        let mut weights = BTreeMap::new();
        for ((from, to, lag), w) in raw.directed.into_iter().zip(raw.weights) {
            let (f, t) = (graph.index_of(&from)?, graph.index_of(&to)?);
            graph.add_directed(f, t, lag)?;
            if weights.insert((f, t, lag), w).is_some() {
                return Err(Error::data(format!("duplicate edge {from} -> {to}")));
            }
        }
        GroundTruthGraph::new(
            graph,
            weights,
            raw.performance,
            raw.eligible_roots.into_iter().collect(),
        )
    }

    pub fn to_json(&self) -> String {
        let mut directed = Vec::new();
        let mut weights = Vec::new();
        for (f, t, lag) in self.graph.directed_edges() {
            directed.push((
                self.graph.name(f).to_string(),
                self.graph.name(t).to_string(),
                lag,
            ));
            weights.push(self.weights[&(f, t, lag)]);
        }
        let doc = GroundTruthJson {
            vertices: self.graph.vertices().to_vec(),
            directed,
            weights,
            performance: self.performance.clone(),
            eligible_roots: self.eligible_roots.iter().cloned().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("ground truth serializes")
    }

    /// Same structure, fresh i.i.d. Uniform(0.1, 0.9) weights.
    pub fn randomize_weights(&self, seed: u64) -> GroundTruthGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new(0.1, 0.9);
        let weights = self
            .weights
            .keys()
            .map(|&edge| (edge, rng.sample(dist)))
            .collect();
        GroundTruthGraph {
            graph: self.graph.clone(),
            weights,
            performance: self.performance.clone(),
            eligible_roots: self.eligible_roots.clone(),
        }
    }
}

/// One simulated incident: the dataset handed to diagnosis plus the
/// ground truth needed to score the answer.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub dataset: TimeSeriesDataset,
    pub injected_root: String,
    pub anomaly_window: AnomalyWindow,
    /// Metrics with a directed path from the root (the root included):
    /// exactly the series the injection may move.
    pub affected: BTreeSet<String>,
    pub seed: u64,
}

fn lag0_topo_order(g: &CausalGraph) -> Vec<usize> {
    let n = g.n_vertices();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for (f, t, lag) in g.directed_edges() {
        if lag == 0 {
            children[f].push(t);
            indegree[t] += 1;
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    while let Some(&v) = ready.iter().next() {
        ready.remove(&v);
        order.push(v);
        for &t in &children[v] {
            indegree[t] -= 1;
            if indegree[t] == 0 {
                ready.insert(t);
            }
        }
    }
    debug_assert_eq!(order.len(), n, "lag-0 sub-graph must be acyclic");
    order
}

fn draw_noise(n_metrics: usize, t_total: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    (0..n_metrics)
        .map(|_| (0..t_total).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

fn run_scm(
    g: &GroundTruthGraph,
    topo: &[usize],
    noise: &[Vec<f64>],
    t_total: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = g.graph.n_vertices();
    let mut parents: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
    for (&(f, t, lag), &w) in &g.weights {
        parents[t].push((f, lag, w));
    }
    let mut values = vec![vec![0.0; t_total]; n];
    for t in 0..t_total {
        for &j in topo {
            let mut v = noise[j][t];
            for &(i, lag, w) in &parents[j] {
                if t >= lag {
                    v += w * values[i][t - lag];
                }
            }
            if v.abs() > STABILITY_LIMIT {
                return Err(Error::Unstable(format!(
                    "{} exceeded {STABILITY_LIMIT:.0} at t={t}; rescale the edge weights",
                    g.graph.name(j)
                )));
            }
            values[j][t] = v;
        }
    }
    Ok(values)
}

fn trim_burn_in(values: Vec<Vec<f64>>, t_len: usize) -> Vec<Vec<f64>> {
    values
        .into_iter()
        .map(|series| series[BURN_IN..BURN_IN + t_len].to_vec())
        .collect()
}

/// Anomaly-free dataset of length `t_len` (after a discarded burn-in).
pub fn generate(g: &GroundTruthGraph, t_len: usize, seed: u64) -> Result<TimeSeriesDataset> {
    if t_len == 0 {
        return Err(Error::arg("t_len must be positive"));
    }
    let t_total = BURN_IN + t_len;
    let noise = draw_noise(g.graph.n_vertices(), t_total, seed);
    let topo = lag0_topo_order(&g.graph);
    let values = run_scm(g, &topo, &noise, t_total)?;
    TimeSeriesDataset::new(g.graph.vertices().to_vec(), trim_burn_in(values, t_len))
}

/// Full incident simulation: picks a root, injects a downward shift of
/// `delta` noise-stds over the central third, and re-simulates so the
/// shift propagates causally. The same `seed` drives the same noise as
/// [`generate`], so the two outputs differ only where the injection
/// reaches.
pub fn simulate_run(
    g: &GroundTruthGraph,
    t_len: usize,
    delta: f64,
    seed: u64,
) -> Result<SimRun> {
    if t_len < 3 {
        return Err(Error::arg("t_len must be at least 3 to hold a central third"));
    }
    if !delta.is_finite() {
        return Err(Error::arg("delta must be finite"));
    }
    if g.eligible_roots.is_empty() {
        return Err(Error::arg("no eligible root causes to inject into"));
    }

    let roots: Vec<&String> = g.eligible_roots.iter().collect();
    let mut pick_rng = ChaCha8Rng::seed_from_u64(seed);
    pick_rng.set_stream(1); // keep the noise stream untouched by the pick
    let injected_root = roots[pick_rng.gen_range(0..roots.len())].clone();
    let root_idx = g.graph.index_of(&injected_root)?;

    let n = t_len / 3;
    let window = AnomalyWindow::new(n, 2 * n - 1)?;

    let t_total = BURN_IN + t_len;
    let mut noise = draw_noise(g.graph.n_vertices(), t_total, seed);
    for t in BURN_IN + window.start..=BURN_IN + window.end {
        noise[root_idx][t] -= delta;
    }
    let topo = lag0_topo_order(&g.graph);
    let values = run_scm(g, &topo, &noise, t_total)?;

    let affected: BTreeSet<String> = (0..g.graph.n_vertices())
        .filter(|&v| g.graph.has_causal_path(root_idx, v))
        .map(|v| g.graph.name(v).to_string())
        .collect();

    let timestamps: Vec<String> = (0..t_len)
        .map(|i| (TIMESTAMP_EPOCH + TIMESTAMP_STEP * i as i64).to_string())
        .collect();
    let dataset =
        TimeSeriesDataset::new(g.graph.vertices().to_vec(), trim_burn_in(values, t_len))?
            .with_timestamps("timestamp".to_string(), timestamps)?;

    Ok(SimRun {
        dataset,
        injected_root,
        anomaly_window: window,
        affected,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_graph(edges: &[(&str, &str, usize, f64)], names: &[&str]) -> GroundTruthGraph {
        let mut g = CausalGraph::new(names.iter().map(|s| s.to_string()).collect()).unwrap();
        let mut weights = BTreeMap::new();
        for (f, t, lag, w) in edges {
            let (fi, ti) = (g.index_of(f).unwrap(), g.index_of(t).unwrap());
            g.add_directed(fi, ti, *lag).unwrap();
            weights.insert((fi, ti, *lag), *w);
        }
        GroundTruthGraph::new(
            g,
            weights,
            names.last().unwrap().to_string(),
            [names[0].to_string()].into(),
        )
        .unwrap()
    }

    #[test]
    fn weight_randomization_is_seed_deterministic() {
        let g = chain_graph(
            &[("a", "b", 0, 0.5), ("b", "c", 1, 0.5)],
            &["a", "b", "c"],
        );
        let w1 = g.randomize_weights(7);
        let w2 = g.randomize_weights(7);
        assert_eq!(w1.weights, w2.weights);
        let w3 = g.randomize_weights(8);
        assert_ne!(w1.weights, w3.weights);
    }

    #[test]
    fn weight_distribution_is_uniform_on_the_interval() {
        // complete DAG on 20 vertices: 190 edges, 53 seeds ~ 10k draws
        let names: Vec<String> = (0..20).map(|i| format!("v{i:02}")).collect();
        let mut g = CausalGraph::new(names).unwrap();
        let mut weights = BTreeMap::new();
        for i in 0..20 {
            for j in (i + 1)..20 {
                g.add_directed(i, j, 0).unwrap();
                weights.insert((i, j, 0), 0.5);
            }
        }
        let gt = GroundTruthGraph::new(g, weights, "v19".into(), ["v00".to_string()].into())
            .unwrap();
        let mut draws = Vec::new();
        for seed in 0..53 {
            draws.extend(gt.randomize_weights(seed).weights.values().copied());
        }
        assert!(draws.len() >= 10_000);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((0.49..=0.51).contains(&mean), "mean {mean}");
        assert!(draws.iter().all(|w| (0.1..=0.9).contains(w)));
    }

    #[test]
    fn zero_edge_graph_randomizes_to_itself() {
        let g = CausalGraph::new(vec!["only".into()]).unwrap();
        let gt = GroundTruthGraph {
            graph: g,
            weights: BTreeMap::new(),
            performance: "only".into(),
            eligible_roots: BTreeSet::new(),
        };
        assert!(gt.randomize_weights(3).weights.is_empty());
    }

    #[test]
    fn isolated_vertex_is_unit_noise() {
        let g = CausalGraph::new(vec!["x".into()]).unwrap();
        let gt = GroundTruthGraph::new(g, BTreeMap::new(), "x".into(), BTreeSet::new()).unwrap();
        let data = generate(&gt, 1000, 11).unwrap();
        let series = data.series(0);
        let mean = series.iter().sum::<f64>() / 1000.0;
        let std = (series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 1000.0).sqrt();
        assert!((0.85..=1.15).contains(&std), "std {std}");
    }

    #[test]
    fn lagged_chain_coefficient_is_recoverable() {
        let gt = chain_graph(&[("a", "b", 1, 0.8)], &["a", "b"]);
        let data = generate(&gt, 5000, 13).unwrap();
        let (a, b) = (data.series(0), data.series(1));
        // least squares of b[t] on a[t-1]
        let xs: Vec<f64> = a[..4999].to_vec();
        let ys: Vec<f64> = b[1..].to_vec();
        let slope = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>()
            / xs.iter().map(|x| x * x).sum::<f64>();
        assert!((slope - 0.8).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn contemporaneous_chain_resolves_in_topological_order() {
        // c is listed before its lag-0 parent to exercise the ordering
        let mut g = CausalGraph::new(vec!["c".into(), "a".into()]).unwrap();
        g.add_directed(1, 0, 0).unwrap();
        let gt = GroundTruthGraph::new(
            g,
            [((1, 0, 0), 0.9)].into(),
            "c".into(),
            ["a".to_string()].into(),
        )
        .unwrap();
        let data = generate(&gt, 2000, 17).unwrap();
        let r = crate::dataset::pearson(data.series(0), data.series(1)).unwrap();
        // corr(a, 0.9a + e) = 0.9 / sqrt(1.81) ~ 0.669
        assert!((r - 0.669).abs() < 0.05, "corr {r}");
    }

    #[test]
    fn same_seed_reproduces_the_dataset_exactly() {
        let gt = chain_graph(
            &[("a", "b", 0, 0.7), ("b", "c", 1, 0.6), ("a", "c", 0, 0.3)],
            &["a", "b", "c"],
        );
        let d1 = generate(&gt, 99, 21).unwrap();
        let d2 = generate(&gt, 99, 21).unwrap();
        for j in 0..3 {
            assert_eq!(d1.series(j), d2.series(j));
        }
        let r1 = simulate_run(&gt, 99, 3.0, 21).unwrap();
        let r2 = simulate_run(&gt, 99, 3.0, 21).unwrap();
        assert_eq!(r1.injected_root, r2.injected_root);
        for j in 0..3 {
            assert_eq!(r1.dataset.series(j), r2.dataset.series(j));
        }
    }

    #[test]
    fn injection_moves_descendants_only() {
        // a -> b -> d, c isolated from a; root is always a
        let mut g = CausalGraph::new(vec!["a".into(), "b".into(), "c".into(), "d".into()])
            .unwrap();
        g.add_directed(0, 1, 0).unwrap();
        g.add_directed(1, 3, 1).unwrap();
        g.add_directed(2, 3, 0).unwrap();
        let gt = GroundTruthGraph::new(
            g,
            [((0, 1, 0), 0.8), ((1, 3, 1), 0.7), ((2, 3, 0), 0.5)].into(),
            "d".into(),
            ["a".to_string()].into(),
        )
        .unwrap();
        let base = generate(&gt, 99, 31).unwrap();
        let run = simulate_run(&gt, 99, 3.0, 31).unwrap();
        assert_eq!(run.injected_root, "a");
        assert_eq!(
            run.affected,
            ["a", "b", "d"].iter().map(|s| s.to_string()).collect()
        );
        // c is bit-for-bit untouched; the affected series all move
        assert_eq!(base.series(2), run.dataset.series(2));
        for name in &run.affected {
            let j = base.index_of(name).unwrap();
            assert_ne!(base.series(j), run.dataset.series(j), "{name} unmoved");
        }
        // and the difference is confined to the window and later
        let w = run.anomaly_window;
        let (b, r) = (base.series(0), run.dataset.series(0));
        assert_eq!(&b[..w.start], &r[..w.start]);
        assert!(b[w.start..=w.end]
            .iter()
            .zip(&r[w.start..=w.end])
            .all(|(x, y)| y < x));
    }

    #[test]
    fn window_sits_in_the_central_third() {
        let gt = chain_graph(&[("a", "b", 0, 0.8)], &["a", "b"]);
        for t_len in [99, 100, 60] {
            let run = simulate_run(&gt, t_len, 3.0, 41).unwrap();
            let n = t_len / 3;
            assert_eq!(run.anomaly_window.start, n);
            assert_eq!(run.anomaly_window.end, 2 * n - 1);
            run.anomaly_window.check_flanks(t_len).unwrap();
        }
    }

    #[test]
    fn sink_drops_by_a_detectable_margin() {
        // two-hop path; the sink sees delta * 0.8 * 0.8 = 1.92, far
        // enough above one noise-std that flank noise cannot hide it
        let gt = chain_graph(
            &[("a", "b", 0, 0.8), ("b", "perf", 0, 0.8)],
            &["a", "b", "perf"],
        );
        let mut passed = 0;
        for seed in 0..20 {
            let run = simulate_run(&gt, 99, 3.0, 500 + seed).unwrap();
            let perf = run.dataset.series(2);
            let w = run.anomaly_window;
            let central: f64 =
                perf[w.start..=w.end].iter().sum::<f64>() / w.n() as f64;
            let flanks: f64 = (perf[..w.start].iter().sum::<f64>()
                + perf[w.end + 1..].iter().sum::<f64>())
                / (perf.len() - w.n()) as f64;
            if flanks - central >= 1.0 {
                passed += 1;
            }
        }
        assert!(passed >= 18, "only {passed}/20 seeds moved the sink");
    }

    #[test]
    fn runaway_weights_error_out() {
        let gt = chain_graph(&[("a", "a", 1, 1.5), ("a", "b", 0, 0.5)], &["a", "b"]);
        assert!(matches!(
            generate(&gt, 99, 3),
            Err(Error::Unstable(_))
        ));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let gt = chain_graph(
            &[("a", "b", 0, 0.7), ("b", "c", 1, 0.6)],
            &["a", "b", "c"],
        );
        let text = gt.to_json();
        let back = GroundTruthGraph::from_json(&text).unwrap();
        assert_eq!(back.weights, gt.weights);
        assert_eq!(back.performance, "c");
        assert_eq!(back.eligible_roots, gt.eligible_roots);

        let missing_weight = r#"{"vertices":["a","b"],"directed":[["a","b",0]],
            "weights":[],"performance":"b","eligible_roots":["a"]}"#;
        assert!(GroundTruthGraph::from_json(missing_weight).is_err());

        let pathless_root = r#"{"vertices":["a","b"],"directed":[],
            "weights":[],"performance":"b","eligible_roots":["a"]}"#;
        assert!(GroundTruthGraph::from_json(pathless_root).is_err());

        let root_is_perf = r#"{"vertices":["a","b"],"directed":[["a","b",0]],
            "weights":[0.5],"performance":"b","eligible_roots":["b"]}"#;
        assert!(GroundTruthGraph::from_json(root_is_perf).is_err());
    }

    #[test]
    fn empty_eligible_set_cannot_run() {
        let g = CausalGraph::new(vec!["x".into()]).unwrap();
        let gt = GroundTruthGraph::new(g, BTreeMap::new(), "x".into(), BTreeSet::new()).unwrap();
        assert!(simulate_run(&gt, 99, 3.0, 1).is_err());
    }
}
