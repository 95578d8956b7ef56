//! Metric tables and the series primitives the rest of the pipeline
//! composes: rate conversion, normalization, trailing smoothing, shift
//! alignment, and Pearson correlation.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;
use std::time::Duration;

use crate::error::Error;
use crate::Result;

/// A table of equal-length time series, one per named metric.
///
/// An optional timestamp column is carried along verbatim so a loaded CSV
/// can be written back without losing it; it plays no part in any
/// computation. `sample_period` is likewise informational.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
    timestamps: Option<(String, Vec<String>)>,
    pub sample_period: Option<Duration>,
}

impl TimeSeriesDataset {
    /// Builds a dataset, enforcing the structural invariants: at least one
    /// metric, unique non-empty names, equal series lengths >= 1, and no
    /// non-finite values.
    pub fn new(names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::data("dataset has no metrics"));
        }
        if names.len() != values.len() {
            return Err(Error::data(format!(
                "{} metric names but {} series",
                names.len(),
                values.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::data("empty metric name"));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::data(format!("duplicate metric name: {name}")));
            }
        }
        let len = values[0].len();
        if len == 0 {
            return Err(Error::data("series are empty"));
        }
        for (name, series) in names.iter().zip(&values) {
            if series.len() != len {
                return Err(Error::data(format!(
                    "series {name} has {} samples, expected {len}",
                    series.len()
                )));
            }
            if series.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("non-finite value in series {name}")));
            }
        }
        Ok(TimeSeriesDataset {
            names,
            values,
            timestamps: None,
            sample_period: None,
        })
    }

    /// Attaches a timestamp column (header + one label per sample).
    pub fn with_timestamps(mut self, header: String, stamps: Vec<String>) -> Result<Self> {
        if stamps.len() != self.len() {
            return Err(Error::data(format!(
                "{} timestamps for {} samples",
                stamps.len(),
                self.len()
            )));
        }
        self.timestamps = Some((header, stamps));
        Ok(self)
    }

    /// Number of samples per series.
    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: len() >= 1
    }

    pub fn n_metrics(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownMetric(name.to_string()))
    }

    pub fn series(&self, idx: usize) -> &[f64] {
        &self.values[idx]
    }

    pub fn series_by_name(&self, name: &str) -> Result<&[f64]> {
        Ok(self.series(self.index_of(name)?))
    }

    pub fn timestamps(&self) -> Option<(&str, &[String])> {
        self.timestamps
            .as_ref()
            .map(|(h, s)| (h.as_str(), s.as_slice()))
    }

    /// Keeps samples `range` of every series (and of the timestamp column).
    pub fn slice_samples(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::arg(format!(
                "sample range {range:?} out of bounds for {} samples",
                self.len()
            )));
        }
        Ok(TimeSeriesDataset {
            names: self.names.clone(),
            values: self.values.iter().map(|s| s[range.clone()].to_vec()).collect(),
            timestamps: self
                .timestamps
                .as_ref()
                .map(|(h, s)| (h.clone(), s[range.clone()].to_vec())),
            sample_period: self.sample_period,
        })
    }
}

/// A dataset plus the designated performance metric under diagnosis.
#[derive(Debug, Clone)]
pub struct DiagnosticInput {
    pub dataset: TimeSeriesDataset,
    target: String,
}

impl DiagnosticInput {
    pub fn new(dataset: TimeSeriesDataset, target: impl Into<String>) -> Result<Self> {
        let target = target.into();
        dataset.index_of(&target)?;
        Ok(DiagnosticInput { dataset, target })
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn target_index(&self) -> usize {
        // new() checked membership
        self.dataset.index_of(&self.target).unwrap()
    }

    pub fn target_series(&self) -> &[f64] {
        self.dataset.series(self.target_index())
    }

    /// Every metric except the target, in dataset order.
    pub fn candidates(&self) -> impl Iterator<Item = (usize, &str)> {
        let target = self.target_index();
        self.dataset
            .names
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != target)
            .map(|(i, n)| (i, n.as_str()))
    }
}

/// Loads a metric table from CSV and designates the diagnosis target.
///
/// Expected layout: a header row naming the metrics, then one row per
/// sample. A leading timestamp column is recognized either by the header
/// `timestamp` (case-insensitive) or by non-numeric content, and is kept
/// aside for [`save_csv`].
pub fn load_csv(path: impl AsRef<Path>, target: &str) -> Result<DiagnosticInput> {
    let file = std::fs::File::open(path)?;
    let input = read_csv(file, target)?;
    Ok(input)
}

fn read_csv(reader: impl Read, target: &str) -> Result<DiagnosticInput> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() {
        return Err(Error::data("empty CSV header"));
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::data(format!(
                "row {} has {} fields, header has {}",
                rows.len() + 2, // 1-based, after the header line
                record.len(),
                headers.len()
            )));
        }
        rows.push(record.iter().map(|f| f.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::data("CSV has no data rows"));
    }

    let first_is_timestamp = headers[0].eq_ignore_ascii_case("timestamp")
        || rows.iter().any(|r| r[0].parse::<f64>().is_err());
    let metric_start = usize::from(first_is_timestamp);
    if headers.len() == metric_start {
        return Err(Error::data("CSV has a timestamp column but no metrics"));
    }

    let names: Vec<String> = headers[metric_start..].to_vec();
    let mut values = vec![Vec::with_capacity(rows.len()); names.len()];
    for (rownum, row) in rows.iter().enumerate() {
        for (col, cell) in row[metric_start..].iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::data(format!(
                    "non-numeric cell '{}' at row {}, column {}",
                    cell,
                    rownum + 2,
                    &names[col]
                ))
            })?;
            values[col].push(v);
        }
    }

    let mut dataset = TimeSeriesDataset::new(names, values)?;
    if first_is_timestamp {
        let stamps = rows.iter().map(|r| r[0].clone()).collect();
        dataset = dataset.with_timestamps(headers[0].clone(), stamps)?;
    }
    DiagnosticInput::new(dataset, target)
}

/// Writes a dataset back to CSV. Floats use the shortest representation
/// that round-trips, so save -> load -> save is byte-stable.
pub fn save_csv(dataset: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    write_csv(dataset, &mut file)
}

pub(crate) fn write_csv(dataset: &TimeSeriesDataset, out: &mut impl Write) -> Result<()> {
    let mut header: Vec<&str> = Vec::new();
    if let Some((h, _)) = dataset.timestamps() {
        header.push(h);
    }
    header.extend(dataset.names().iter().map(|n| n.as_str()));
    writeln!(out, "{}", header.join(","))?;
    for t in 0..dataset.len() {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        if let Some((_, stamps)) = dataset.timestamps() {
            row.push(stamps[t].clone());
        }
        for m in 0..dataset.n_metrics() {
            row.push(format!("{}", dataset.series(m)[t]));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Turns per-interval counts and totals into a rate series, `counts[t] /
/// totals[t]`.
pub fn rate_convert(counts: &[f64], totals: &[f64]) -> Result<Vec<f64>> {
    if counts.len() != totals.len() {
        return Err(Error::arg(format!(
            "counts has {} samples, totals has {}",
            counts.len(),
            totals.len()
        )));
    }
    counts
        .iter()
        .zip(totals)
        .enumerate()
        .map(|(t, (&c, &n))| {
            if n <= 0.0 {
                Err(Error::arg(format!("total {n} at sample {t} is not positive")))
            } else if c < 0.0 || c > n {
                Err(Error::arg(format!("count {c} at sample {t} outside [0, {n}]")))
            } else {
                Ok(c / n)
            }
        })
        .collect()
}

/// Centers and scales to unit population standard deviation. A constant
/// series maps to all zeros.
pub fn normalize(x: &[f64]) -> Vec<f64> {
    if x.is_empty() || x.iter().all(|v| *v == x[0]) {
        return vec![0.0; x.len()];
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - mean) / std).collect()
}

/// Trailing moving average of width `w`; the first `w - 1` positions
/// average over the shorter prefix that exists. `w = 1` is the identity.
pub fn smooth(x: &[f64], w: usize) -> Result<Vec<f64>> {
    if w == 0 {
        return Err(Error::arg("smoothing width must be >= 1"));
    }
    if w > x.len() {
        return Err(Error::arg(format!(
            "smoothing width {w} exceeds series length {}",
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for t in 0..x.len() {
        acc += x[t];
        if t >= w {
            acc -= x[t - w];
        }
        let span = (t + 1).min(w);
        out.push(acc / span as f64);
    }
    Ok(out)
}

/// Describes pairing a target series with a candidate shifted `shift`
/// steps into the past: `(x[t], c[t - shift])` for `t` in `shift..len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    shift: usize,
    len: usize,
}

impl Alignment {
    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn overlap(&self) -> usize {
        self.len - self.shift
    }

    /// Index range into the target series.
    pub fn target_range(&self) -> Range<usize> {
        self.shift..self.len
    }

    /// Index range into the shifted candidate series.
    pub fn candidate_range(&self) -> Range<usize> {
        0..self.len - self.shift
    }
}

/// Aligns a candidate series `c` against a same-length target, `s` steps
/// back in time.
pub fn shift(c: &[f64], s: usize) -> Result<Alignment> {
    if s >= c.len() {
        return Err(Error::arg(format!(
            "shift {s} leaves no overlap for length {}",
            c.len()
        )));
    }
    Ok(Alignment { shift: s, len: c.len() })
}

/// Pearson correlation. Either series being constant yields 0 by
/// convention (the pipeline treats "no variation" as "no evidence").
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::arg(format!(
            "series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} samples is too few for a correlation",
            a.len()
        )));
    }
    if a.iter().all(|v| *v == a[0]) || b.iter().all(|v| *v == b[0]) {
        return Ok(0.0);
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    // Rounding can push |r| a hair past 1 when the series are exact
    // (anti)copies of each other; keep downstream |r| math honest.
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}
