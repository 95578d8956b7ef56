//! Bundled benchmark models: four ground-truth graphs of increasing size
//! plus the reference result table the `evaluate --compare` flag diffs
//! against.
//!
//! The graphs are shaped like small monitoring deployments. Roots sit at
//! the top, the performance metric at the bottom, and the path depth grows
//! with size: n5 and n10 keep their eligible roots one or two hops from the
//! sink, n25 pushes most of them four or five hops away so the anomaly
//! arrives heavily attenuated. Every edge, lagged or not, points down the
//! level order induced by the contemporaneous part of the graph, so domain
//! knowledge derived from the model never contradicts the model itself.

use crate::error::Error;
use crate::simulator::GroundTruthGraph;
use crate::Result;

const N5: &str = include_str!("../fixtures/n5.json");
const N10: &str = include_str!("../fixtures/n10.json");
const N15: &str = include_str!("../fixtures/n15.json");
const N25: &str = include_str!("../fixtures/n25.json");
const REFERENCE: &str = include_str!("../fixtures/reference_results.csv");

pub const FIXTURE_NAMES: [&str; 4] = ["n5", "n10", "n15", "n25"];

pub fn builtin(name: &str) -> Result<GroundTruthGraph> {
    let text = match name {
        "n5" => N5,
        "n10" => N10,
        "n15" => N15,
        "n25" => N25,
        _ => {
            return Err(Error::arg(format!(
                "unknown fixture `{name}`, expected one of n5, n10, n15, n25"
            )))
        }
    };
    GroundTruthGraph::from_json(text)
}

pub fn builtin_all() -> Vec<(String, GroundTruthGraph)> {
    FIXTURE_NAMES
        .iter()
        .map(|n| (n.to_string(), builtin(n).expect("bundled fixture must parse")))
        .collect()
}

/// Benchmark numbers the evaluation harness compares against, as CSV with
/// columns `graph_size,variant,recall,precision`.
pub fn reference_results() -> &'static str {
    REFERENCE
}
