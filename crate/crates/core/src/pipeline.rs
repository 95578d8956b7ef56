//! End-to-end diagnosis wiring: window detection, data slicing,
//! discovery, knowledge enhancement, candidate scoring, and sub-graph
//! extraction, in that order. The CLI and the evaluation harness both
//! run through here so their behavior cannot drift apart.

use std::collections::BTreeSet;

use crate::dataset::DiagnosticInput;
use crate::discovery::{discover_detailed, DiscoveryConfig};
use crate::enhancement::{enhance_detailed, DroppedEdge};
use crate::entropy::EntropyConfig;
use crate::graph::CausalGraph;
use crate::knowledge::DomainKnowledge;
use crate::refinement::{refine, Refined, RefinementConfig};
use crate::subtraction::{subtract, RootCauseReport};
use crate::window::{detect_window, slice_3n, window_in_slice, AnomalyWindow, WindowConfig};
use crate::Result;

#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    pub window: WindowConfig,
    pub discovery: DiscoveryConfig,
    pub entropy: EntropyConfig,
    pub refinement: RefinementConfig,
}

/// Everything a caller may want to show or log about one diagnosis.
/// The report's window is in input-dataset coordinates.
#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub report: RootCauseReport,
    /// Scoring outcome, including the threshold and sign-rule filter
    /// lists the report document embeds.
    pub refined: Refined,
    /// Discovered edges removed during enhancement, with reasons.
    pub dropped_edges: Vec<DroppedEdge>,
    /// Graph as discovered, before knowledge was applied.
    pub discovered: CausalGraph,
    /// Graph after enhancement (the one subtraction ran on).
    pub enhanced: CausalGraph,
    /// Significance level the discovery selection settled on.
    pub alpha: f64,
    pub low_sample: bool,
}

impl Diagnosis {
    pub fn report_json(&self) -> serde_json::Value {
        self.report
            .to_json(&self.refined.below_min_sim, &self.refined.sign_filtered)
    }
}

/// Detects the anomaly window on the target series, then diagnoses.
/// Propagates `Error::NoAnomaly` when the target shows no drop.
pub fn diagnose(
    input: &DiagnosticInput,
    dk: &DomainKnowledge,
    config: &PipelineConfig,
) -> Result<Diagnosis> {
    let window = detect_window(input.target_series(), &config.window)?;
    diagnose_with_window(input, dk, config, window)
}

/// Diagnoses with a window supplied by the caller (manual override, or
/// an injection log when evaluating), bypassing detection.
pub fn diagnose_with_window(
    input: &DiagnosticInput,
    dk: &DomainKnowledge,
    config: &PipelineConfig,
    window: AnomalyWindow,
) -> Result<Diagnosis> {
    let slice = slice_3n(&input.dataset, &window)?;
    let sliced_input = DiagnosticInput::new(slice, input.target())?;
    let discovered = discover_detailed(&sliced_input, &config.discovery)?;
    diagnose_discovered(&sliced_input, &discovered.graph, dk, config, window).map(|mut d| {
        d.alpha = discovered.alpha;
        d.low_sample = discovered.low_sample;
        d
    })
}

/// The post-discovery stages alone. `input` must already be the 3n
/// slice that `discovered` was computed from; `window` is only embedded
/// in the report. The evaluation harness uses this entry point to share
/// one discovery across knowledge variants.
pub fn diagnose_discovered(
    input: &DiagnosticInput,
    discovered: &CausalGraph,
    dk: &DomainKnowledge,
    config: &PipelineConfig,
    window: AnomalyWindow,
) -> Result<Diagnosis> {
    let universe: BTreeSet<String> = input.dataset.names().iter().cloned().collect();
    dk.validate_metrics(&universe)?;
    let _ = window_in_slice(&window); // slice geometry is fixed by construction
    let enhancement = enhance_detailed(discovered, &dk.partial, &input.dataset, &config.entropy)?;
    let refined = refine(input, dk, &config.refinement)?;
    let report = subtract(
        &enhancement.graph,
        &refined.accepted,
        input.target(),
        &dk.partial,
        window,
    )?;
    Ok(Diagnosis {
        report,
        refined,
        dropped_edges: enhancement.dropped,
        discovered: discovered.clone(),
        enhanced: enhancement.graph,
        alpha: f64::NAN,
        low_sample: false,
    })
}
