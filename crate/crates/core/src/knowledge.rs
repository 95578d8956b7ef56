//! Operator knowledge about the system under diagnosis.
//!
//! Three independent ingredients, all optional:
//! * metric levels: a coarse "causal depth" per metric. A metric may only
//!   cause metrics at its own level or above, and the performance metric
//!   conventionally sits at the top.
//! * known edges: instantaneous causal relations the operator vouches for.
//!   They are taken as ground truth by the enhancement stage.
//! * sign rules: the correlation sign a metric must show against the
//!   degraded performance metric to count as a plausible cause (e.g. an
//!   error rate must move opposite to a success rate).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Required correlation sign between a candidate and the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationSign {
    Positive,
    Negative,
}

/// Structural half of the knowledge: levels plus vouched-for edges.
///
/// Invariants, checked on construction: edges are acyclic, never self
/// loops, and each edge `(u, v)` satisfies `level(u) <= level(v)`.
/// Metrics without a declared level sit at the neutral level 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartialGraphKnowledge {
    levels: BTreeMap<String, i64>,
    edges: BTreeSet<(String, String)>,
}

impl PartialGraphKnowledge {
    pub fn new(
        levels: BTreeMap<String, i64>,
        edges: BTreeSet<(String, String)>,
    ) -> Result<Self> {
        let pk = PartialGraphKnowledge { levels, edges };
        pk.validate()?;
        Ok(pk)
    }

    fn validate(&self) -> Result<()> {
        for (u, v) in &self.edges {
            if u == v {
                return Err(Error::Knowledge(format!("self edge on {u}")));
            }
            if self.level_of(u) > self.level_of(v) {
                return Err(Error::Knowledge(format!(
                    "edge {u} -> {v} contradicts levels {} > {}",
                    self.level_of(u),
                    self.level_of(v)
                )));
            }
        }
        // DFS cycle check over the declared edges
        let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (u, v) in &self.edges {
            adj.entry(u).or_default().push(v);
        }
        let mut state: BTreeMap<&str, u8> = BTreeMap::new(); // 1 = open, 2 = done
        fn visit<'a>(
            v: &'a str,
            adj: &BTreeMap<&'a str, Vec<&'a str>>,
            state: &mut BTreeMap<&'a str, u8>,
        ) -> bool {
            match state.get(v) {
                Some(1) => return false,
                Some(2) => return true,
                _ => {}
            }
            state.insert(v, 1);
            for next in adj.get(v).into_iter().flatten() {
                if !visit(next, adj, state) {
                    return false;
                }
            }
            state.insert(v, 2);
            true
        }
        for v in adj.keys() {
            if !visit(v, &adj, &mut state) {
                return Err(Error::Knowledge(format!("declared edges contain a cycle through {v}")));
            }
        }
        Ok(())
    }

    /// Declared level, or the neutral 0 for anything unmentioned.
    pub fn level_of(&self, metric: &str) -> i64 {
        self.levels.get(metric).copied().unwrap_or(0)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(u, v)| (u.as_str(), v.as_str()))
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn levels(&self) -> &BTreeMap<String, i64> {
        &self.levels
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty() && self.edges.is_empty()
    }
}

/// Correlation-sign requirements per metric.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefinementKnowledge {
    rules: BTreeMap<String, CorrelationSign>,
}

impl RefinementKnowledge {
    pub fn new(rules: BTreeMap<String, CorrelationSign>) -> Self {
        RefinementKnowledge { rules }
    }

    pub fn rule_for(&self, metric: &str) -> Option<CorrelationSign> {
        self.rules.get(metric).copied()
    }

    pub fn rules(&self) -> &BTreeMap<String, CorrelationSign> {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// The full knowledge model handed to the pipeline. `DomainKnowledge::default()`
/// is the explicit "no knowledge" model and changes nothing anywhere.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DomainKnowledge {
    pub partial: PartialGraphKnowledge,
    pub refinement: RefinementKnowledge,
}

impl DomainKnowledge {
    pub fn new(partial: PartialGraphKnowledge, refinement: RefinementKnowledge) -> Self {
        DomainKnowledge { partial, refinement }
    }

    pub fn level_of(&self, metric: &str) -> i64 {
        self.partial.level_of(metric)
    }

    /// Does `corr` satisfy the sign rule for `metric`? No rule means no
    /// constraint. A zero correlation fails any declared rule: it carries
    /// no sign, so it cannot carry the required one.
    pub fn sign_permits(&self, metric: &str, corr: f64) -> bool {
        match self.refinement.rule_for(metric) {
            None => true,
            Some(CorrelationSign::Positive) => corr > 0.0,
            Some(CorrelationSign::Negative) => corr < 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.partial.is_empty() && self.refinement.is_empty()
    }

    /// Checks that every metric mentioned anywhere is part of `universe`.
    /// Deferred to diagnose time so a knowledge file can be written before
    /// the data exists.
    pub fn validate_metrics(&self, universe: &BTreeSet<String>) -> Result<()> {
        for metric in self.partial.levels.keys() {
            if !universe.contains(metric) {
                return Err(Error::UnknownMetric(format!("{metric} (in levels)")));
            }
        }
        for (u, v) in &self.partial.edges {
            for metric in [u, v] {
                if !universe.contains(metric) {
                    return Err(Error::UnknownMetric(format!("{metric} (in edges)")));
                }
            }
        }
        for metric in self.refinement.rules.keys() {
            if !universe.contains(metric) {
                return Err(Error::UnknownMetric(format!("{metric} (in rules)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct DkJson {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    levels: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    rules: BTreeMap<String, CorrelationSign>,
}

/// Parses a knowledge file. All three sections are optional; `{}` is the
/// empty model.
pub fn parse_dk(text: &str) -> Result<DomainKnowledge> {
    let json: DkJson =
        serde_json::from_str(text).map_err(|e| Error::Knowledge(format!("bad knowledge file: {e}")))?;
    let partial = PartialGraphKnowledge::new(json.levels, json.edges.into_iter().collect())?;
    Ok(DomainKnowledge::new(partial, RefinementKnowledge::new(json.rules)))
}

pub fn load_dk(path: impl AsRef<Path>) -> Result<DomainKnowledge> {
    parse_dk(&std::fs::read_to_string(path)?)
}

/// Serializes a model back to the knowledge-file JSON layout.
pub fn dk_to_json(dk: &DomainKnowledge) -> String {
    let json = DkJson {
        levels: dk.partial.levels.clone(),
        edges: dk.partial.edges.iter().cloned().collect(),
        rules: dk.refinement.rules.clone(),
    };
    serde_json::to_string_pretty(&json).expect("knowledge model serializes")
}
