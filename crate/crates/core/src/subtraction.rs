//! Root-cause sub-graph extraction.
//!
//! Scored candidates are walked in priority order (domain level first,
//! adjusted score second) and each one must justify itself with a
//! directed path to the target in the enhanced graph. The kept paths
//! are merged, the merged vertex set is closed over every edge of the
//! full graph, and the result is the diagnosis: final root causes, the
//! sub-graph connecting them to the target, and whatever fell out along
//! the way.

use std::collections::BTreeSet;

use serde_json::json;

use crate::graph::{CausalGraph, DEFAULT_PATH_LIMIT};
use crate::knowledge::PartialGraphKnowledge;
use crate::refinement::AdjustedScore;
use crate::window::AnomalyWindow;
use crate::{Error, Result};

/// Final diagnosis artifact.
#[derive(Debug, Clone)]
pub struct RootCauseReport {
    pub target: String,
    /// Root causes that survived the causal-path check, in processing
    /// order (level descending, score descending, name ascending).
    pub root_causes: Vec<(String, AdjustedScore)>,
    /// The graph connecting the root causes to the target.
    pub sub_graph: CausalGraph,
    /// Vertices of `sub_graph` that are neither target nor root cause.
    pub intermediates: Vec<String>,
    pub window: AnomalyWindow,
    /// Candidates dropped because no directed path reaches the target.
    pub no_causal_path: Vec<String>,
    /// True when any candidate's path enumeration hit the cap; the
    /// chosen paths then come from the enumerated prefix only.
    pub truncated_paths: bool,
}

impl RootCauseReport {
    /// The report document. Filter lists produced upstream (threshold
    /// and sign-rule rejections) are passed in so a single document
    /// accounts for every candidate.
    pub fn to_json(&self, below_min_sim: &[String], sign_rule: &[String]) -> serde_json::Value {
        json!({
            "target": self.target,
            "root_causes": self.root_causes.iter().map(|(m, s)| json!({
                "metric": m,
                "score": s.score,
                "corr": s.corr,
                "penalty": s.penalty,
            })).collect::<Vec<_>>(),
            "filtered": {
                "below_min_sim": below_min_sim,
                "sign_rule": sign_rule,
                "no_causal_path": self.no_causal_path,
            },
            "graph": &self.sub_graph,
            "window": { "start": self.window.start, "end": self.window.end },
        })
    }

    /// Graphviz rendering with root causes drawn with continuous
    /// borders, the target in bold, and intermediates dashed.
    pub fn to_dot(&self) -> String {
        self.sub_graph.to_dot(|v| {
            if v == self.target {
                Some("style=bold".to_string())
            } else if self.root_causes.iter().any(|(n, _)| n == v) {
                Some("style=solid, penwidth=2".to_string())
            } else {
                Some("style=dashed".to_string())
            }
        })
    }
}

/// Sorts candidates by domain level (higher first), then adjusted
/// score (higher first), then name.
pub fn order_candidates(
    rc: &[(String, AdjustedScore)],
    pk: &PartialGraphKnowledge,
) -> Vec<(String, AdjustedScore)> {
    let mut out = rc.to_vec();
    out.sort_by(|a, b| {
        pk.level_of(&b.0)
            .cmp(&pk.level_of(&a.0))
            .then(b.1.score.total_cmp(&a.1.score))
            .then(a.0.cmp(&b.0))
    });
    out
}

/// One candidate's chosen route to the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathChoice {
    pub vertices: Vec<String>,
    /// The enumeration cap was hit; the choice is best-of-enumerated.
    pub truncated: bool,
}

/// Picks the candidate's best directed path to the target: most
/// vertices inside `rc_set` (endpoints count), then fewest hops, then
/// the lexicographically smallest vertex sequence. `None` when the
/// target is unreachable.
pub fn select_path(
    g: &CausalGraph,
    from: &str,
    target: &str,
    rc_set: &BTreeSet<String>,
) -> Result<Option<PathChoice>> {
    if from == target {
        return Err(Error::arg("candidate equals the target"));
    }
    let f = g.index_of(from)?;
    let t = g.index_of(target)?;
    let enumeration = g.enumerate_paths(f, t, DEFAULT_PATH_LIMIT);
    let truncated = enumeration.truncated;
    let mut best: Option<(usize, usize, Vec<String>)> = None;
    for p in enumeration.paths {
        let hits = p.iter().filter(|v| rc_set.contains(*v)).count();
        let hops = p.len() - 1;
        let better = match &best {
            None => true,
            Some((bh, bl, bp)) => {
                hits > *bh
                    || (hits == *bh && hops < *bl)
                    || (hits == *bh && hops == *bl && p < *bp)
            }
        };
        if better {
            best = Some((hits, hops, p));
        }
    }
    Ok(best.map(|(_, _, vertices)| PathChoice { vertices, truncated }))
}

/// Builds the root-cause report from the enhanced whole-graph and the
/// scored candidates. Candidates without a directed path to the target
/// are moved to the `no_causal_path` list; the survivors' paths are
/// merged and closed over every edge of `g_dw` between kept vertices.
pub fn subtract(
    g_dw: &CausalGraph,
    rc: &[(String, AdjustedScore)],
    target: &str,
    pk: &PartialGraphKnowledge,
    window: AnomalyWindow,
) -> Result<RootCauseReport> {
    subtract_inner(g_dw, rc, target, pk, window, true)
}

fn subtract_inner(
    g_dw: &CausalGraph,
    rc: &[(String, AdjustedScore)],
    target: &str,
    pk: &PartialGraphKnowledge,
    window: AnomalyWindow,
    closure: bool,
) -> Result<RootCauseReport> {
    g_dw.index_of(target)?;
    if rc.iter().any(|(n, _)| n == target) {
        return Err(Error::arg("target cannot be its own root-cause candidate"));
    }
    let rc_set: BTreeSet<String> = rc.iter().map(|(n, _)| n.clone()).collect();

    let mut root_causes = Vec::new();
    let mut no_causal_path = Vec::new();
    let mut truncated_paths = false;
    let mut vertices: BTreeSet<String> = BTreeSet::new();
    vertices.insert(target.to_string());
    // consecutive pairs actually walked, for the closure-free variant
    let mut hops: BTreeSet<(String, String)> = BTreeSet::new();

    for (name, score) in order_candidates(rc, pk) {
        let choice = if g_dw.index_of(&name).is_ok() {
            select_path(g_dw, &name, target, &rc_set)?
        } else {
            None // not a graph vertex, so no path can exist
        };
        match choice {
            Some(c) => {
                truncated_paths |= c.truncated;
                for pair in c.vertices.windows(2) {
                    hops.insert((pair[0].clone(), pair[1].clone()));
                }
                vertices.extend(c.vertices.iter().cloned());
                root_causes.push((name, score));
            }
            None => no_causal_path.push(name),
        }
    }

    let sub_graph = if closure {
        g_dw.induced(&vertices)?
    } else {
        let names: Vec<String> = g_dw
            .vertices()
            .iter()
            .filter(|v| vertices.contains(*v))
            .cloned()
            .collect();
        let mut g = CausalGraph::new(names)?;
        for (f, t, lag) in g_dw.directed_edges() {
            let pair = (g_dw.name(f).to_string(), g_dw.name(t).to_string());
            if hops.contains(&pair) {
                g.add_directed(g.index_of(&pair.0)?, g.index_of(&pair.1)?, lag)?;
            }
        }
        g
    };

    let intermediates: Vec<String> = sub_graph
        .vertices()
        .iter()
        .filter(|v| *v != target && !root_causes.iter().any(|(n, _)| n == *v))
        .cloned()
        .collect();

    if cfg!(debug_assertions) {
        let t = sub_graph.index_of(target).expect("target always kept");
        for (name, _) in &root_causes {
            let r = sub_graph.index_of(name).expect("root vertex kept");
            debug_assert!(sub_graph.has_causal_path(r, t), "{name} lost its path");
        }
    }

    Ok(RootCauseReport {
        target: target.to_string(),
        root_causes,
        sub_graph,
        intermediates,
        window,
        no_causal_path,
        truncated_paths,
    })
}
