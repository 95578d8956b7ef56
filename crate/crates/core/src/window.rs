//! Anomaly window detection on the performance metric, and slicing of the
//! dataset to the window plus equal-width flanks on both sides.

use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::Error;
use crate::Result;

/// Inclusive sample range `[start, end]` flagged as anomalous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyWindow {
    pub start: usize,
    pub end: usize,
}

impl AnomalyWindow {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if end < start {
            return Err(Error::arg(format!("window end {end} before start {start}")));
        }
        Ok(AnomalyWindow { start, end })
    }

    /// Window length in samples.
    pub fn n(&self) -> usize {
        self.end - self.start + 1
    }

    /// The window needs `n` samples of context on each side.
    pub fn check_flanks(&self, series_len: usize) -> Result<()> {
        let n = self.n();
        if self.start < n || self.end + n >= series_len {
            return Err(Error::InsufficientData(format!(
                "window [{}, {}] is too close to the boundary of {} samples to \
                 provide {n}-sample flanks",
                self.start, self.end, series_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WindowConfig {
    /// Robust z-score threshold: samples with `z < -z_threshold` count as
    /// part of a drop.
    pub z_threshold: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { z_threshold: 3.0 }
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Robust z-scores against the median and scaled MAD of the whole series.
/// Falls back to mean/std when the MAD degenerates to zero; returns None
/// when the fallback is degenerate too (a constant series).
fn robust_z(x: &[f64]) -> Option<Vec<f64>> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let med = median(&sorted);
    let mut dev: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(|a, b| a.total_cmp(b));
    let mad = median(&dev);
    if mad > 0.0 {
        let scale = 1.4826 * mad;
        return Some(x.iter().map(|v| (v - med) / scale).collect());
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return None;
    }
    Some(x.iter().map(|v| (v - mean) / std).collect())
}

/// Finds the anomalous drop in a performance series: the maximal
/// contiguous run of samples whose robust z-score falls below
/// `-z_threshold`. Among several runs the one with the largest cumulative
/// deviation wins. Upward excursions are deliberately ignored; the
/// diagnosed symptom is always a drop.
pub fn detect_window(x: &[f64], config: &WindowConfig) -> Result<AnomalyWindow> {
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} samples is too few for window detection",
            x.len()
        )));
    }
    let z = robust_z(x).ok_or(Error::NoAnomaly)?;
    let k = config.z_threshold;

    let mut best: Option<(AnomalyWindow, f64)> = None;
    let mut run_start: Option<usize> = None;
    let mut run_mass = 0.0;
    for (t, &zt) in z.iter().chain(std::iter::once(&0.0)).enumerate() {
        if t < z.len() && zt < -k {
            if run_start.is_none() {
                run_start = Some(t);
                run_mass = 0.0;
            }
            run_mass += -zt;
        } else if let Some(start) = run_start.take() {
            let w = AnomalyWindow { start, end: t - 1 };
            if best.as_ref().map_or(true, |(_, mass)| run_mass > *mass) {
                best = Some((w, run_mass));
            }
        }
    }

    let (window, _) = best.ok_or(Error::NoAnomaly)?;
    window.check_flanks(x.len())?;
    Ok(window)
}

/// Cuts every series down to `[start - n, end + n]`: the anomaly plus one
/// window-width of context on each side, exactly `3n` samples.
pub fn slice_3n(data: &TimeSeriesDataset, window: &AnomalyWindow) -> Result<TimeSeriesDataset> {
    window.check_flanks(data.len())?;
    let n = window.n();
    data.slice_samples(window.start - n..window.end + n + 1)
}

/// Re-expresses `window` relative to the start of its own 3n slice.
pub fn window_in_slice(window: &AnomalyWindow) -> AnomalyWindow {
    let n = window.n();
    AnomalyWindow { start: n, end: 2 * n - 1 }
}
