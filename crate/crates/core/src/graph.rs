//! The causal graph: named vertices, directed edges carrying a time lag,
//! and undirected contemporaneous pairs awaiting orientation.
//!
//! Two structural rules hold at all times: the lag-0 directed sub-graph is
//! acyclic (instantaneous feedback is meaningless), and an undirected pair
//! never coexists with a lag-0 directed edge over the same two vertices.
//! Lagged edges may close cycles freely; feedback across time is real.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;
use crate::Result;

/// Default cap on path enumeration; see [`CausalGraph::enumerate_paths`].
pub const DEFAULT_PATH_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalGraph {
    vertices: Vec<String>,
    index: BTreeMap<String, usize>,
    directed: BTreeSet<(usize, usize, usize)>,
    undirected: BTreeSet<(usize, usize)>,
}

/// Paths found by [`CausalGraph::enumerate_paths`]. `truncated` warns that
/// the cap was hit and the list may be incomplete.
#[derive(Debug, Clone)]
pub struct PathEnumeration {
    pub paths: Vec<Vec<String>>,
    pub truncated: bool,
}

impl CausalGraph {
    pub fn new(vertices: Vec<String>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if v.is_empty() {
                return Err(Error::data("empty vertex name"));
            }
            if index.insert(v.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate vertex: {v}")));
            }
        }
        Ok(CausalGraph {
            vertices,
            index,
            directed: BTreeSet::new(),
            undirected: BTreeSet::new(),
        })
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownMetric(name.to_string()))
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.vertices[idx]
    }

    /// Directed edges as `(from, to, lag)` index triples, in deterministic
    /// order.
    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.directed.iter().copied()
    }

    /// Undirected pairs as `(u, v)` with `u < v`.
    pub fn undirected_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.undirected.iter().copied()
    }

    pub fn n_directed(&self) -> usize {
        self.directed.len()
    }

    pub fn n_undirected(&self) -> usize {
        self.undirected.len()
    }

    pub fn has_directed(&self, from: usize, to: usize, lag: usize) -> bool {
        self.directed.contains(&(from, to, lag))
    }

    pub fn has_any_directed(&self, from: usize, to: usize) -> bool {
        self.directed
            .range((from, to, 0)..=(from, to, usize::MAX))
            .next()
            .is_some()
    }

    pub fn has_undirected(&self, u: usize, v: usize) -> bool {
        self.undirected.contains(&norm_pair(u, v))
    }

    fn check_vertex(&self, idx: usize) -> Result<()> {
        if idx >= self.vertices.len() {
            return Err(Error::arg(format!(
                "vertex index {idx} out of range ({} vertices)",
                self.vertices.len()
            )));
        }
        Ok(())
    }

    /// True when `to` can reach `from` through lag-0 directed edges; used
    /// as the cycle guard.
    fn lag0_reaches(&self, start: usize, goal: usize) -> bool {
        if start == goal {
            return true;
        }
        let mut seen = vec![false; self.vertices.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for &(f, t, lag) in self.directed.range((v, 0, 0)..=(v, usize::MAX, usize::MAX)) {
                debug_assert_eq!(f, v);
                if lag == 0 && !seen[t] {
                    if t == goal {
                        return true;
                    }
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        false
    }

    /// Inserts a directed edge. Lag-0 insertions are refused when they
    /// would close an instantaneous cycle (self-loops included) or when the
    /// pair is currently held undirected.
    pub fn add_directed(&mut self, from: usize, to: usize, lag: usize) -> Result<()> {
        self.check_vertex(from)?;
        self.check_vertex(to)?;
        if lag == 0 {
            if self.has_undirected(from, to) {
                return Err(Error::arg(format!(
                    "pair {{{}, {}}} is undirected; orient it instead of adding a lag-0 edge",
                    self.name(from),
                    self.name(to)
                )));
            }
            if self.lag0_reaches(to, from) {
                return Err(Error::Cycle {
                    from: self.name(from).to_string(),
                    to: self.name(to).to_string(),
                });
            }
        }
        self.directed.insert((from, to, lag));
        Ok(())
    }

    /// Like [`add_directed`](Self::add_directed) but reports cycle refusals
    /// as `Ok(false)` so callers that expect them can log and move on.
    pub fn try_add_directed(&mut self, from: usize, to: usize, lag: usize) -> Result<bool> {
        match self.add_directed(from, to, lag) {
            Ok(()) => Ok(true),
            Err(Error::Cycle { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Inserts an undirected contemporaneous pair.
    pub fn add_undirected(&mut self, u: usize, v: usize) -> Result<()> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        if u == v {
            return Err(Error::arg(format!(
                "undirected self-pair on {}",
                self.name(u)
            )));
        }
        if self.has_directed(u, v, 0) || self.has_directed(v, u, 0) {
            return Err(Error::arg(format!(
                "pair {{{}, {}}} already has a lag-0 directed edge",
                self.name(u),
                self.name(v)
            )));
        }
        self.undirected.insert(norm_pair(u, v));
        Ok(())
    }

    /// Replaces the undirected pair `{from, to}` with the directed lag-0
    /// edge `from -> to`. Refuses (leaving the pair in place) when the
    /// orientation would close a cycle.
    pub fn orient_undirected(&mut self, from: usize, to: usize) -> Result<()> {
        if !self.has_undirected(from, to) {
            return Err(Error::arg(format!(
                "no undirected pair {{{}, {}}}",
                self.name(from),
                self.name(to)
            )));
        }
        if self.lag0_reaches(to, from) {
            return Err(Error::Cycle {
                from: self.name(from).to_string(),
                to: self.name(to).to_string(),
            });
        }
        self.undirected.remove(&norm_pair(from, to));
        self.directed.insert((from, to, 0));
        Ok(())
    }

    /// Drops an undirected pair (used when an orientation stage gives up
    /// on it).
    pub fn remove_undirected(&mut self, u: usize, v: usize) {
        self.undirected.remove(&norm_pair(u, v));
    }

    /// Successors of `v` over directed edges of any lag.
    pub fn successors(&self, v: usize) -> BTreeSet<usize> {
        self.directed
            .range((v, 0, 0)..=(v, usize::MAX, usize::MAX))
            .map(|&(_, t, _)| t)
            .collect()
    }

    /// True when a (vertex-simple) chain of directed edges leads from
    /// `from` to `to`, ignoring lags. `from == to` holds trivially.
    pub fn has_causal_path(&self, from: usize, to: usize) -> bool {
        if from == to {
            return true;
        }
        let mut seen = vec![false; self.vertices.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(v) = queue.pop_front() {
            for t in self.successors(v) {
                if t == to {
                    return true;
                }
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        false
    }

    /// All vertex-simple directed paths from `from` to `to`, in
    /// lexicographic order of the vertex-name sequence, capped at `limit`
    /// paths. The flag in the result says whether the cap cut the
    /// enumeration short.
    pub fn enumerate_paths(&self, from: usize, to: usize, limit: usize) -> PathEnumeration {
        let mut paths = Vec::new();
        let mut truncated = false;
        if from == to {
            paths.push(vec![self.name(from).to_string()]);
            return PathEnumeration { paths, truncated };
        }
        // successor lists pre-sorted by name so DFS emits lexicographic order
        let succ_by_name: Vec<Vec<usize>> = (0..self.vertices.len())
            .map(|v| {
                let mut s: Vec<usize> = self.successors(v).into_iter().collect();
                s.sort_by(|a, b| self.name(*a).cmp(self.name(*b)));
                s
            })
            .collect();

        let mut on_path = vec![false; self.vertices.len()];
        let mut stack = vec![from];
        on_path[from] = true;

        fn dfs(
            g: &CausalGraph,
            succ: &[Vec<usize>],
            stack: &mut Vec<usize>,
            on_path: &mut Vec<bool>,
            to: usize,
            limit: usize,
            paths: &mut Vec<Vec<String>>,
            truncated: &mut bool,
        ) {
            if *truncated {
                return;
            }
            let v = *stack.last().unwrap();
            for &next in &succ[v] {
                if *truncated {
                    return;
                }
                if next == to {
                    if paths.len() == limit {
                        *truncated = true;
                        return;
                    }
                    let mut p: Vec<String> =
                        stack.iter().map(|&i| g.name(i).to_string()).collect();
                    p.push(g.name(to).to_string());
                    paths.push(p);
                } else if !on_path[next] {
                    stack.push(next);
                    on_path[next] = true;
                    dfs(g, succ, stack, on_path, to, limit, paths, truncated);
                    stack.pop();
                    on_path[next] = false;
                }
            }
        }

        dfs(
            self,
            &succ_by_name,
            &mut stack,
            &mut on_path,
            to,
            limit,
            &mut paths,
            &mut truncated,
        );
        PathEnumeration { paths, truncated }
    }

    /// Induced sub-graph on the given vertex names (every edge of `self`
    /// with both endpoints inside survives).
    pub fn induced(&self, keep: &BTreeSet<String>) -> Result<CausalGraph> {
        let names: Vec<String> = self
            .vertices
            .iter()
            .filter(|v| keep.contains(*v))
            .cloned()
            .collect();
        let mut g = CausalGraph::new(names)?;
        for (f, t, lag) in self.directed_edges() {
            let (fname, tname) = (self.name(f), self.name(t));
            if keep.contains(fname) && keep.contains(tname) {
                g.add_directed(g.index_of(fname)?, g.index_of(tname)?, lag)?;
            }
        }
        for (u, v) in self.undirected_pairs() {
            let (uname, vname) = (self.name(u), self.name(v));
            if keep.contains(uname) && keep.contains(vname) {
                g.add_undirected(g.index_of(uname)?, g.index_of(vname)?)?;
            }
        }
        Ok(g)
    }

    /// Graphviz rendering. `node_attrs` may emit extra attributes for a
    /// vertex (styling for roots, targets, and so on). Undirected pairs
    /// come out as `dir=none` edges; lags >= 1 are shown as edge labels.
    pub fn to_dot(&self, node_attrs: impl Fn(&str) -> Option<String>) -> String {
        let mut out = String::from("digraph causal {\n  rankdir=LR;\n  node [shape=box];\n");
        for v in &self.vertices {
            match node_attrs(v) {
                Some(attrs) => writeln!(out, "  \"{v}\" [{attrs}];").unwrap(),
                None => writeln!(out, "  \"{v}\";").unwrap(),
            }
        }
        for (f, t, lag) in self.directed_edges() {
            if lag == 0 {
                writeln!(out, "  \"{}\" -> \"{}\";", self.name(f), self.name(t)).unwrap();
            } else {
                writeln!(
                    out,
                    "  \"{}\" -> \"{}\" [label=\"lag {}\"];",
                    self.name(f),
                    self.name(t),
                    lag
                )
                .unwrap();
            }
        }
        for (u, v) in self.undirected_pairs() {
            writeln!(
                out,
                "  \"{}\" -> \"{}\" [dir=none];",
                self.name(u),
                self.name(v)
            )
            .unwrap();
        }
        out.push_str("}\n");
        out
    }
}

fn norm_pair(u: usize, v: usize) -> (usize, usize) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    vertices: Vec<String>,
    directed: Vec<(String, String, usize)>,
    undirected: Vec<(String, String)>,
}

impl From<&CausalGraph> for GraphJson {
    fn from(g: &CausalGraph) -> Self {
        GraphJson {
            vertices: g.vertices.clone(),
            directed: g
                .directed_edges()
                .map(|(f, t, lag)| (g.name(f).to_string(), g.name(t).to_string(), lag))
                .collect(),
            undirected: g
                .undirected_pairs()
                .map(|(u, v)| (g.name(u).to_string(), g.name(v).to_string()))
                .collect(),
        }
    }
}

impl TryFrom<GraphJson> for CausalGraph {
    type Error = Error;

    fn try_from(json: GraphJson) -> Result<CausalGraph> {
        let mut g = CausalGraph::new(json.vertices)?;
        for (f, t, lag) in &json.directed {
            g.add_directed(g.index_of(f)?, g.index_of(t)?, *lag)?;
        }
        for (u, v) in &json.undirected {
            g.add_undirected(g.index_of(u)?, g.index_of(v)?)?;
        }
        Ok(g)
    }
}

impl Serialize for CausalGraph {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        GraphJson::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CausalGraph {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let json = GraphJson::deserialize(deserializer)?;
        CausalGraph::try_from(json).map_err(D::Error::custom)
    }
}
