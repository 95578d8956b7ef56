//! Benchmark harness: repeated simulated incidents scored against the
//! injection log.
//!
//! For every run the harness randomizes the model weights, simulates one
//! incident, and hands the same dataset and the same discovered graph to
//! every variant under test. Variants therefore differ only in what the
//! diagnosis stages are allowed to know (levels, a slice of the true edges)
//! and in whether the refinement searches its full grid. A run scores a hit
//! when the injected root appears in the reported root causes; precision is
//! 1/|causes| on a hit and 0 otherwise.
//!
//! Scheduling is deterministic: per-run seeds derive from (seed, fixture,
//! run) alone, and workers only decide who computes a run, never what the
//! run contains, so any `jobs` count yields identical rows.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::knowledge::{DomainKnowledge, PartialGraphKnowledge, RefinementKnowledge};
use crate::pipeline::{diagnose_discovered, PipelineConfig};
use crate::simulator::{simulate_run, GroundTruthGraph, DEFAULT_DELTA, DEFAULT_SIM_LEN};
use crate::window::slice_3n;
use crate::{CausalGraph, DiagnosticInput, Result};

/// What a diagnosis variant is allowed to know and to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantSpec {
    /// Give the diagnosis the true level of every metric.
    pub use_levels: bool,
    /// Percentage of the true contemporaneous edges declared as known,
    /// rounded up. Nonzero values require `use_levels`.
    pub dk_edge_percent: u8,
    /// `false` pins the refinement to the plain correlation cell
    /// (no shift, no smoothing).
    pub use_adjusted_score: bool,
}

impl VariantSpec {
    pub fn new(use_levels: bool, dk_edge_percent: u8, use_adjusted_score: bool) -> Result<Self> {
        if dk_edge_percent > 0 && !use_levels {
            return Err(Error::arg(
                "declared edges imply declared levels; enable levels too",
            ));
        }
        if dk_edge_percent > 100 {
            return Err(Error::arg(format!(
                "edge percentage {dk_edge_percent} out of range"
            )));
        }
        Ok(VariantSpec {
            use_levels,
            dk_edge_percent,
            use_adjusted_score,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Radice(VariantSpec),
    /// No refinement, no enhancement: every metric with a directed causal
    /// path to the target in the raw discovered graph counts as a cause.
    RawDiscovery,
}

impl Variant {
    pub fn parse(name: &str) -> Result<Variant> {
        let spec = |l, e, a| VariantSpec::new(l, e, a).map(Variant::Radice);
        match name {
            "nodk" => spec(false, 0, true),
            "L" => spec(true, 0, true),
            "L10E" => spec(true, 10, true),
            "L25E" => spec(true, 25, true),
            "L50E" => spec(true, 50, true),
            "P_nodk" => spec(false, 0, false),
            "P_L" => spec(true, 0, false),
            "P_L10E" => spec(true, 10, false),
            "P_L25E" => spec(true, 25, false),
            "P_L50E" => spec(true, 50, false),
            "raw" => Ok(Variant::RawDiscovery),
            _ => Err(Error::arg(format!(
                "unknown variant `{name}`; known: nodk, L, L10E, L25E, L50E, \
                 P_nodk, P_L, P_L10E, P_L25E, P_L50E, raw"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::RawDiscovery => "raw",
            Variant::Radice(s) => match (s.use_levels, s.dk_edge_percent, s.use_adjusted_score) {
                (false, 0, true) => "nodk",
                (true, 0, true) => "L",
                (true, 10, true) => "L10E",
                (true, 25, true) => "L25E",
                (true, 50, true) => "L50E",
                (false, 0, false) => "P_nodk",
                (true, 0, false) => "P_L",
                (true, 10, false) => "P_L10E",
                (true, 25, false) => "P_L25E",
                (true, 50, false) => "P_L50E",
                _ => "custom",
            },
        }
    }
}

/// Parses a comma-separated variant list, preserving order.
pub fn parse_variants(list: &str) -> Result<Vec<Variant>> {
    let names: Vec<&str> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        return Err(Error::arg("empty variant list"));
    }
    names.iter().map(|n| Variant::parse(n)).collect()
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub runs: usize,
    pub seed: u64,
    /// Worker threads; results are identical for any value.
    pub jobs: usize,
    pub series_len: usize,
    pub delta: f64,
    pub pipeline: PipelineConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            runs: 50,
            seed: 36,
            jobs: 1,
            series_len: DEFAULT_SIM_LEN,
            delta: DEFAULT_DELTA,
            pipeline: PipelineConfig::default(),
        }
    }
}

/// One aggregated result line, mirroring the output CSV columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub graph_size: usize,
    pub variant: String,
    pub recall: f64,
    pub precision: f64,
    pub mean_runtime_s: f64,
    pub runs: usize,
    pub seed: u64,
}

/// Level of every vertex under the longest-path order of the
/// contemporaneous sub-graph: sources sit at 0, every edge goes from a
/// lower or equal level to a higher or equal one.
pub fn lag0_levels(g: &CausalGraph) -> BTreeMap<String, i64> {
    let n = g.n_vertices();
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut out_deg = vec![0usize; n];
    for (f, t, lag) in g.directed_edges() {
        if lag == 0 {
            parents[t].push(f);
            out_deg[f] += 1;
        }
    }
    // Repeated relaxation; the lag-0 sub-graph is acyclic so n rounds
    // suffice and the sizes here are tiny.
    let mut level = vec![0i64; n];
    for _ in 0..n {
        let mut changed = false;
        for v in 0..n {
            for &p in &parents[v] {
                if level[p] + 1 > level[v] {
                    level[v] = level[p] + 1;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).map(|v| (g.name(v).to_string(), level[v])).collect()
}

/// Builds the domain knowledge a variant is entitled to: true levels when
/// declared, plus a seeded sample of ceil(percent) of the contemporaneous
/// edges. For a fixed seed the samples are nested across percentages, so
/// a 50% variant knows everything the 25% variant knows.
pub fn make_dk_for_variant(
    gt: &GroundTruthGraph,
    spec: VariantSpec,
    seed: u64,
) -> Result<DomainKnowledge> {
    let levels = if spec.use_levels {
        lag0_levels(&gt.graph)
    } else {
        BTreeMap::new()
    };
    let mut edges = BTreeSet::new();
    if spec.dk_edge_percent > 0 {
        let lag0: Vec<(String, String)> = gt
            .graph
            .directed_edges()
            .filter(|&(_, _, lag)| lag == 0)
            .map(|(f, t, _)| (gt.graph.name(f).to_string(), gt.graph.name(t).to_string()))
            .collect();
        let k = (lag0.len() * spec.dk_edge_percent as usize + 99) / 100;
        let mut order: Vec<usize> = (0..lag0.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        for &i in order.iter().take(k) {
            edges.insert(lag0[i].clone());
        }
    }
    let partial = PartialGraphKnowledge::new(levels, edges)?;
    Ok(DomainKnowledge::new(
        partial,
        RefinementKnowledge::new(BTreeMap::new()),
    ))
}

// SplitMix64. Per-run seeds come from hashing (seed, fixture, run, role)
// so neighbouring runs share nothing and the worker layout is irrelevant.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

#[derive(Debug, Clone, Copy)]
struct RunScore {
    hit: bool,
    n_causes: usize,
    secs: f64,
}

impl RunScore {
    fn miss(secs: f64) -> RunScore {
        RunScore {
            hit: false,
            n_causes: 0,
            secs,
        }
    }

    fn precision(&self) -> f64 {
        if self.hit {
            1.0 / self.n_causes as f64
        } else {
            0.0
        }
    }
}

/// One simulated incident, scored under every variant. Any failure inside
/// a run (unstable weights, discovery on degenerate data, an empty report)
/// scores as a miss rather than aborting the experiment.
fn run_once(
    gt: &GroundTruthGraph,
    fixture_idx: u64,
    run_idx: u64,
    variants: &[Variant],
    config: &EvalConfig,
) -> Vec<RunScore> {
    let all_miss = |secs: f64| vec![RunScore::miss(secs); variants.len()];
    let weights_seed = derive_seed(&[config.seed, fixture_idx, run_idx, 0]);
    let sim_seed = derive_seed(&[config.seed, fixture_idx, run_idx, 1]);
    let dk_seed = derive_seed(&[config.seed, fixture_idx, run_idx, 2]);

    let model = gt.randomize_weights(weights_seed);
    let sim = match simulate_run(&model, config.series_len, config.delta, sim_seed) {
        Ok(s) => s,
        Err(_) => return all_miss(0.0),
    };

    // The injection log supplies the window; detection is not under test.
    let t0 = Instant::now();
    let prepared = slice_3n(&sim.dataset, &sim.anomaly_window)
        .and_then(|slice| DiagnosticInput::new(slice, &model.performance))
        .and_then(|input| {
            crate::discovery::discover_detailed(&input, &config.pipeline.discovery)
                .map(|d| (input, d))
        });
    let (input, disc) = match prepared {
        Ok(p) => p,
        Err(_) => return all_miss(t0.elapsed().as_secs_f64()),
    };
    let disc_secs = t0.elapsed().as_secs_f64();
    let target_idx = disc
        .graph
        .index_of(&model.performance)
        .expect("target survives discovery");

    variants
        .iter()
        .map(|variant| {
            let t1 = Instant::now();
            let score = match variant {
                Variant::RawDiscovery => {
                    let causes: Vec<&str> = (0..disc.graph.n_vertices())
                        .filter(|&v| v != target_idx && disc.graph.has_causal_path(v, target_idx))
                        .map(|v| disc.graph.name(v))
                        .collect();
                    RunScore {
                        hit: causes.iter().any(|&c| c == sim.injected_root),
                        n_causes: causes.len(),
                        secs: 0.0,
                    }
                }
                Variant::Radice(spec) => {
                    let mut pc = config.pipeline.clone();
                    if !spec.use_adjusted_score {
                        pc.refinement.max_shift = 0;
                        pc.refinement.max_width = 1;
                    }
                    let outcome = make_dk_for_variant(&model, *spec, dk_seed).and_then(|dk| {
                        diagnose_discovered(&input, &disc.graph, &dk, &pc, sim.anomaly_window)
                    });
                    match outcome {
                        Ok(diag) => RunScore {
                            hit: diag
                                .report
                                .root_causes
                                .iter()
                                .any(|(name, _)| *name == sim.injected_root),
                            n_causes: diag.report.root_causes.len(),
                            secs: 0.0,
                        },
                        Err(_) => RunScore::miss(0.0),
                    }
                }
            };
            RunScore {
                secs: disc_secs + t1.elapsed().as_secs_f64(),
                ..score
            }
        })
        .collect()
}

/// Runs every fixture under every variant. Rows come out in fixture order,
/// variants in input order within a fixture, and are reproducible for a
/// given seed regardless of `jobs`.
pub fn run_experiment(
    fixtures: &[(String, GroundTruthGraph)],
    variants: &[Variant],
    config: &EvalConfig,
) -> Result<Vec<EvalRow>> {
    if variants.is_empty() {
        return Err(Error::arg("no variants selected"));
    }
    if fixtures.is_empty() {
        return Err(Error::arg("no fixtures selected"));
    }
    let jobs = config.jobs.max(1);
    let mut rows = Vec::new();
    for (fi, (_, gt)) in fixtures.iter().enumerate() {
        let mut scores: Vec<Vec<RunScore>> = Vec::new();
        if jobs == 1 || config.runs <= 1 {
            for r in 0..config.runs {
                scores.push(run_once(gt, fi as u64, r as u64, variants, config));
            }
        } else {
            let mut collected: BTreeMap<usize, Vec<RunScore>> = BTreeMap::new();
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..jobs)
                    .map(|w| {
                        scope.spawn(move || {
                            let mut out = Vec::new();
                            let mut r = w;
                            while r < config.runs {
                                out.push((r, run_once(gt, fi as u64, r as u64, variants, config)));
                                r += jobs;
                            }
                            out
                        })
                    })
                    .collect();
                for h in handles {
                    for (r, s) in h.join().expect("worker panicked") {
                        collected.insert(r, s);
                    }
                }
            });
            scores.extend(collected.into_values());
        }

        for (vi, variant) in variants.iter().enumerate() {
            let n = scores.len().max(1) as f64;
            let recall = scores.iter().filter(|s| s[vi].hit).count() as f64 / n;
            let precision = scores.iter().map(|s| s[vi].precision()).sum::<f64>() / n;
            let mean_runtime_s = scores.iter().map(|s| s[vi].secs).sum::<f64>() / n;
            rows.push(EvalRow {
                graph_size: gt.graph.n_vertices(),
                variant: variant.name().to_string(),
                recall,
                precision,
                mean_runtime_s,
                runs: config.runs,
                seed: config.seed,
            });
        }
    }
    Ok(rows)
}

pub const RESULTS_HEADER: &str = "graph_size,variant,recall,precision,mean_runtime_s,runs,seed";

/// Fixed-precision CSV; identical rows give identical bytes except for the
/// wall-clock runtime column.
pub fn rows_to_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.3},{},{}\n",
            r.graph_size, r.variant, r.recall, r.precision, r.mean_runtime_s, r.runs, r.seed
        ));
    }
    out
}

/// Diffs rows against a reference CSV (`graph_size,variant,recall,precision`).
/// Rows without a reference entry are listed as such.
pub fn compare_to_reference(rows: &[EvalRow], reference_csv: &str) -> Result<String> {
    let mut reference: BTreeMap<(usize, String), (f64, f64)> = BTreeMap::new();
    for (i, line) in reference_csv.lines().enumerate() {
        if i == 0 {
            if line != "graph_size,variant,recall,precision" {
                return Err(Error::data(format!("unexpected reference header: {line}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::data(format!("reference line {}: {line}", i + 1)));
        }
        let size = f[0]
            .parse::<usize>()
            .map_err(|_| Error::data(format!("reference line {}: bad size", i + 1)))?;
        let recall = f[2]
            .parse::<f64>()
            .map_err(|_| Error::data(format!("reference line {}: bad recall", i + 1)))?;
        let precision = f[3]
            .parse::<f64>()
            .map_err(|_| Error::data(format!("reference line {}: bad precision", i + 1)))?;
        reference.insert((size, f[1].to_string()), (recall, precision));
    }

    let mut out = String::new();
    for row in rows {
        let key = (row.graph_size, row.variant.clone());
        match reference.get(&key) {
            Some(&(r_ref, p_ref)) => out.push_str(&format!(
                "n={:<3} {:<8} recall {:.2} vs {:.2} ({:+.2})   precision {:.2} vs {:.2} ({:+.2})\n",
                row.graph_size,
                row.variant,
                row.recall,
                r_ref,
                row.recall - r_ref,
                row.precision,
                p_ref,
                row.precision - p_ref,
            )),
            None => out.push_str(&format!(
                "n={:<3} {:<8} no reference entry\n",
                row.graph_size, row.variant
            )),
        }
    }
    Ok(out)
}
