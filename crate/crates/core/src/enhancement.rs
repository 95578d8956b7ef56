//! Graph enhancement: merge structural domain knowledge into a
//! discovered graph.
//!
//! Domain edges are inserted first and treated as ground truth. Every
//! discovered directed edge must then respect the level ordering
//! (level(from) <= level(to)) or it is dropped as spurious. Undirected
//! pairs are oriented by strict level comparison where the levels
//! differ, and handed to the entropy stage where they tie. The result
//! has no undirected edges and keeps the lag-0 subgraph acyclic.

use crate::dataset::TimeSeriesDataset;
use crate::entropy::{entropy_orientation, EntropyConfig};
use crate::graph::CausalGraph;
use crate::knowledge::PartialGraphKnowledge;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// level(from) > level(to).
    LevelViolation,
    /// The edge contradicts a domain edge by closing a lag-0 cycle.
    DomainConflict,
    /// A level-based orientation would have closed a lag-0 cycle.
    CycleGuard,
    /// The entropy stage found no usable direction (or its winner was
    /// cycle-refused).
    Unoriented,
}

#[derive(Debug, Clone)]
pub struct DroppedEdge {
    pub from: String,
    pub to: String,
    pub lag: usize,
    pub reason: DropReason,
}

#[derive(Debug, Clone)]
pub struct Enhancement {
    pub graph: CausalGraph,
    /// Edges of the input graph that did not survive, with the rule
    /// that removed them.
    pub dropped: Vec<DroppedEdge>,
}

/// Applies domain knowledge to a discovered graph. See the module docs
/// for the rule order.
pub fn enhance(
    g: &CausalGraph,
    pk: &PartialGraphKnowledge,
    data: &TimeSeriesDataset,
    entropy: &EntropyConfig,
) -> Result<CausalGraph> {
    Ok(enhance_detailed(g, pk, data, entropy)?.graph)
}

/// [`enhance`] plus the log of dropped edges.
pub fn enhance_detailed(
    g: &CausalGraph,
    pk: &PartialGraphKnowledge,
    data: &TimeSeriesDataset,
    entropy: &EntropyConfig,
) -> Result<Enhancement> {
    entropy.validate()?;
    for v in g.vertices() {
        data.index_of(v)?;
    }

    let mut out = CausalGraph::new(g.vertices().to_vec())?;
    let mut dropped = Vec::new();
    let logged = |from: &str, to: &str, lag: usize, reason: DropReason| DroppedEdge {
        from: from.to_string(),
        to: to.to_string(),
        lag,
        reason,
    };

    // Domain edges first; they are ground truth and everything later
    // must fit around them. Validation already excluded cycles among
    // them, so a refusal here is a caller bug worth surfacing.
    for (u, v) in pk.edges() {
        let ui = out.index_of(u).map_err(|_| {
            Error::Knowledge(format!("domain edge endpoint {u} is not a graph vertex"))
        })?;
        let vi = out.index_of(v).map_err(|_| {
            Error::Knowledge(format!("domain edge endpoint {v} is not a graph vertex"))
        })?;
        if !out.try_add_directed(ui, vi, 0)? {
            return Err(Error::Knowledge(format!(
                "domain edges close a cycle at {u} -> {v}"
            )));
        }
    }

    // Discovered directed edges, filtered by level accordance. A legal
    // edge that still closes a cycle lost an argument with the domain
    // edges and is dropped.
    for (from, to, lag) in g.directed_edges() {
        let (fname, tname) = (g.name(from), g.name(to));
        if pk.level_of(fname) > pk.level_of(tname) {
            dropped.push(logged(fname, tname, lag, DropReason::LevelViolation));
            continue;
        }
        let fi = out.index_of(fname)?;
        let ti = out.index_of(tname)?;
        if out.has_directed(fi, ti, 0) && lag == 0 {
            continue;
        }
        if out.has_undirected(fi, ti) {
            // Can only happen while undirected pairs are added below;
            // directed edges run first, so this is unreachable.
            continue;
        }
        if !out.try_add_directed(fi, ti, lag)? {
            dropped.push(logged(fname, tname, lag, DropReason::DomainConflict));
        }
    }

    // Undirected pairs: consumed by an existing lag-0 edge, oriented by
    // strict level order, or left for the entropy stage on a tie.
    let mut ties: Vec<(usize, usize)> = Vec::new();
    for (u, v) in g.undirected_pairs() {
        let (uname, vname) = (g.name(u), g.name(v));
        let ui = out.index_of(uname)?;
        let vi = out.index_of(vname)?;
        if out.has_directed(ui, vi, 0) || out.has_directed(vi, ui, 0) {
            continue;
        }
        let (lu, lv) = (pk.level_of(uname), pk.level_of(vname));
        if lu == lv {
            out.add_undirected(ui, vi)?;
            ties.push((ui, vi));
            continue;
        }
        let (from, to) = if lu < lv { (ui, vi) } else { (vi, ui) };
        if !out.try_add_directed(from, to, 0)? {
            dropped.push(logged(uname, vname, 0, DropReason::CycleGuard));
        }
    }

    let outcome = entropy_orientation(&mut out, &ties, data, entropy)?;
    for (u, v) in outcome.discarded {
        dropped.push(logged(out.name(u), out.name(v), 0, DropReason::Unoriented));
    }

    debug_assert_eq!(out.n_undirected(), 0);
    Ok(Enhancement {
        graph: out,
        dropped,
    })
}
