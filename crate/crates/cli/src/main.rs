//! taproot: root-cause diagnosis for metric incidents.
//!
//! Three subcommands: `diagnose` runs the full detect/discover/score
//! pipeline on one CSV, `simulate` produces incident datasets from a
//! ground-truth graph, `evaluate` scores knowledge variants across the
//! bundled benchmark graphs. Exit codes are the machine-readable
//! failure channel: 0 ok, 1 error, 2 no anomaly, 3 no root cause.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use taproot_core::dataset::{load_csv, save_csv};
use taproot_core::discovery::DiscoveryConfig;
use taproot_core::entropy::EntropyConfig;
use taproot_core::evaluation::{
    compare_to_reference, derive_seed, parse_variants, rows_to_csv, EvalConfig,
};
use taproot_core::fixtures;
use taproot_core::knowledge::{load_dk, parse_dk};
use taproot_core::pipeline::{diagnose, diagnose_with_window, Diagnosis, PipelineConfig};
use taproot_core::plot::{plot_csv, plot_svg};
use taproot_core::refinement::RefinementConfig;
use taproot_core::simulator::{simulate_run, GroundTruthGraph, DEFAULT_DELTA, DEFAULT_SIM_LEN};
use taproot_core::window::{slice_3n, window_in_slice, AnomalyWindow, WindowConfig};
use taproot_core::Error;

#[derive(Parser)]
#[command(name = "taproot", version, about = "Root cause analysis on metric time series")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Diagnose one incident: find the anomaly, build the causal graph,
    /// score candidates, and write the report artifacts.
    Diagnose(DiagnoseArgs),
    /// Generate incident datasets from a ground-truth graph.
    Simulate(SimulateArgs),
    /// Run the knowledge-variant benchmark over ground-truth graphs.
    Evaluate(EvaluateArgs),
}

/// Tuning knobs shared with the JSON config file. Flags win over the
/// file, the file wins over defaults.
#[derive(Args, Default)]
struct Knobs {
    /// JSON config file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Robust z threshold for drop detection.
    #[arg(long)]
    z_threshold: Option<f64>,
    /// Maximum causal lag, in samples.
    #[arg(long)]
    tau_max: Option<usize>,
    /// Fixed significance level (skips the BIC grid search).
    #[arg(long)]
    alpha: Option<f64>,
    /// Minimum adjusted similarity for a root-cause candidate.
    #[arg(long)]
    min_sim: Option<f64>,
    /// Largest lead a candidate may take on the target.
    #[arg(long)]
    max_shift: Option<usize>,
    /// Largest smoothing window applied to a candidate.
    #[arg(long)]
    max_width: Option<usize>,
    /// Score cost per sample of lead.
    #[arg(long)]
    shift_penalty: Option<f64>,
    /// Score cost per unit of smoothing beyond width 1.
    #[arg(long)]
    smooth_penalty: Option<f64>,
    /// Quantile bins for entropy orientation.
    #[arg(long)]
    entropy_bins: Option<usize>,
    /// Smallest entropy gap (bits) treated as orientation evidence.
    #[arg(long)]
    entropy_min_gap: Option<f64>,
}

/// File form of the knobs plus the simulation/benchmark settings that
/// have no dedicated flag.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    z_threshold: Option<f64>,
    tau_max: Option<usize>,
    alpha: Option<f64>,
    min_sim: Option<f64>,
    max_shift: Option<usize>,
    max_width: Option<usize>,
    shift_penalty: Option<f64>,
    smooth_penalty: Option<f64>,
    entropy_bins: Option<usize>,
    entropy_min_gap: Option<f64>,
    delta: Option<f64>,
    series_len: Option<usize>,
    runs: Option<usize>,
    seed: Option<u64>,
    jobs: Option<usize>,
    variants: Option<String>,
    fixtures: Option<String>,
}

impl FileConfig {
    fn load(path: &Option<PathBuf>) -> anyhow::Result<FileConfig> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

fn build_pipeline(knobs: &Knobs, file: &FileConfig) -> PipelineConfig {
    let d = PipelineConfig::default();
    PipelineConfig {
        window: WindowConfig {
            z_threshold: knobs
                .z_threshold
                .or(file.z_threshold)
                .unwrap_or(d.window.z_threshold),
        },
        discovery: DiscoveryConfig {
            tau_max: knobs.tau_max.or(file.tau_max).unwrap_or(d.discovery.tau_max),
            alpha: knobs.alpha.or(file.alpha).or(d.discovery.alpha),
            ..d.discovery
        },
        entropy: EntropyConfig {
            bins: knobs
                .entropy_bins
                .or(file.entropy_bins)
                .unwrap_or(d.entropy.bins),
            min_gap: knobs
                .entropy_min_gap
                .or(file.entropy_min_gap)
                .unwrap_or(d.entropy.min_gap),
        },
        refinement: RefinementConfig {
            max_shift: knobs
                .max_shift
                .or(file.max_shift)
                .unwrap_or(d.refinement.max_shift),
            max_width: knobs
                .max_width
                .or(file.max_width)
                .unwrap_or(d.refinement.max_width),
            shift_penalty: knobs
                .shift_penalty
                .or(file.shift_penalty)
                .unwrap_or(d.refinement.shift_penalty),
            smooth_penalty: knobs
                .smooth_penalty
                .or(file.smooth_penalty)
                .unwrap_or(d.refinement.smooth_penalty),
            min_sim: knobs.min_sim.or(file.min_sim).unwrap_or(d.refinement.min_sim),
        },
    }
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Input CSV: one column per metric, optional leading timestamp column.
    #[arg(long)]
    data: PathBuf,
    /// Performance metric whose drop is diagnosed.
    #[arg(long)]
    target: String,
    /// Domain-knowledge JSON (levels, edges, sign rules). Empty if absent.
    #[arg(long)]
    dk: Option<PathBuf>,
    /// Output directory for report.json, graph.dot, plot.csv, plot.svg.
    #[arg(long, default_value = "taproot-out")]
    out: PathBuf,
    /// Manual anomaly window "START:END" (inclusive sample indices),
    /// bypassing detection.
    #[arg(long)]
    window: Option<String>,
    #[command(flatten)]
    knobs: Knobs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Ground-truth graph: builtin fixture name (n5, n10, n15, n25) or a
    /// JSON file path.
    #[arg(long)]
    graph: String,
    /// Number of incident datasets to generate.
    #[arg(long, default_value_t = 50)]
    runs: usize,
    /// Base seed; per-run noise and weight seeds derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for run CSVs and manifest.json.
    #[arg(long, default_value = "taproot-sim")]
    out: PathBuf,
    /// JSON config file (delta and series_len are read from here).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Comma list of builtin fixture names or graph JSON paths.
    #[arg(long, default_value = "n5,n10,n15,n25")]
    fixtures: String,
    /// Comma list of variant names, e.g. nodk,L,L50E,P_nodk,raw.
    #[arg(long, default_value = "nodk,L,L10E,L25E,L50E,P_nodk,P_L,P_L10E,P_L25E,P_L50E,raw")]
    variants: String,
    /// Incidents per fixture/variant cell.
    #[arg(long)]
    runs: Option<usize>,
    /// Experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results are identical for any value.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory for results.csv.
    #[arg(long, default_value = "taproot-eval")]
    out: PathBuf,
    /// Print deltas against a reference CSV
    /// (graph_size,variant,recall,precision). Without a value, the
    /// bundled reference table is used.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    compare: Option<String>,
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.cmd {
        Cmd::Diagnose(args) => cmd_diagnose(args),
        Cmd::Simulate(args) => cmd_simulate(args),
        Cmd::Evaluate(args) => cmd_evaluate(args),
    }
}

fn parse_window(spec: &str) -> anyhow::Result<AnomalyWindow> {
    let (a, b) = spec
        .split_once(':')
        .with_context(|| format!("window must be START:END, got {spec:?}"))?;
    let start: usize = a.trim().parse().context("window start")?;
    let end: usize = b.trim().parse().context("window end")?;
    Ok(AnomalyWindow::new(start, end)?)
}

fn cmd_diagnose(args: DiagnoseArgs) -> anyhow::Result<i32> {
    let file_cfg = FileConfig::load(&args.knobs.config)?;
    let config = build_pipeline(&args.knobs, &file_cfg);

    let input = load_csv(&args.data, &args.target)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let dk = match &args.dk {
        Some(p) => load_dk(p).with_context(|| format!("loading {}", p.display()))?,
        None => parse_dk("{}")?,
    };

    let result = match &args.window {
        Some(spec) => diagnose_with_window(&input, &dk, &config, parse_window(spec)?),
        None => diagnose(&input, &dk, &config),
    };
    let d = match result {
        Ok(d) => d,
        Err(Error::NoAnomaly) => {
            eprintln!("no anomaly detected on {}", args.target);
            return Ok(2);
        }
        Err(e) => return Err(e.into()),
    };

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_diagnosis_artifacts(&args.out, &input.dataset, &d)?;
    print_summary(&args.out, &d);

    Ok(if d.report.root_causes.is_empty() { 3 } else { 0 })
}

fn write_diagnosis_artifacts(
    out: &Path,
    dataset: &taproot_core::dataset::TimeSeriesDataset,
    d: &Diagnosis,
) -> anyhow::Result<()> {
    let report = serde_json::to_string_pretty(&d.report_json())? + "\n";
    fs::write(out.join("report.json"), report)?;
    fs::write(out.join("graph.dot"), d.report.to_dot())?;

    let slice = slice_3n(dataset, &d.report.window)?;
    let mut metrics: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    for (name, _) in &d.report.root_causes {
        if seen.insert(name.clone()) {
            metrics.push(name.clone());
        }
    }
    for name in &d.report.intermediates {
        if seen.insert(name.clone()) {
            metrics.push(name.clone());
        }
    }
    if seen.insert(d.report.target.clone()) {
        metrics.push(d.report.target.clone());
    }
    let win = window_in_slice(&d.report.window);
    fs::write(out.join("plot.csv"), plot_csv(&slice, &metrics, &win)?)?;
    fs::write(out.join("plot.svg"), plot_svg(&slice, &metrics, &win)?)?;
    Ok(())
}

fn print_summary(out: &Path, d: &Diagnosis) {
    let w = &d.report.window;
    println!(
        "anomaly window: samples {}..={} (width {})",
        w.start,
        w.end,
        w.n()
    );
    if d.alpha.is_finite() {
        println!("discovery alpha: {}", d.alpha);
    }
    if d.low_sample {
        println!("warning: low sample count for the discovery tests");
    }
    if d.report.root_causes.is_empty() {
        println!("no root cause found");
    } else {
        println!("root causes:");
        for (i, (name, s)) in d.report.root_causes.iter().enumerate() {
            println!(
                "  {}. {name}  score {:.3}  corr {:+.3}  shift {}  width {}",
                i + 1,
                s.score,
                s.corr,
                s.shift,
                s.width
            );
        }
    }
    let mut filtered = Vec::new();
    if !d.refined.below_min_sim.is_empty() {
        filtered.push(format!(
            "below min_sim: {}",
            d.refined.below_min_sim.join(", ")
        ));
    }
    if !d.refined.sign_filtered.is_empty() {
        filtered.push(format!("sign rule: {}", d.refined.sign_filtered.join(", ")));
    }
    if !d.report.no_causal_path.is_empty() {
        filtered.push(format!(
            "no causal path to target: {}",
            d.report.no_causal_path.join(", ")
        ));
    }
    if !filtered.is_empty() {
        println!("filtered candidates:");
        for line in filtered {
            println!("  {line}");
        }
    }
    if d.report.truncated_paths {
        println!("note: path enumeration hit the cap; routes come from the enumerated prefix");
    }
    println!(
        "wrote report.json, graph.dot, plot.csv, plot.svg to {}",
        out.display()
    );
}

/// Builtin fixture name, else a JSON file path.
fn resolve_graph(spec: &str) -> anyhow::Result<(String, GroundTruthGraph)> {
    if fixtures::FIXTURE_NAMES.contains(&spec) {
        return Ok((spec.to_string(), fixtures::builtin(spec)?));
    }
    let path = Path::new(spec);
    let text =
        fs::read_to_string(path).with_context(|| format!("reading graph {}", path.display()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| spec.to_string());
    Ok((name, GroundTruthGraph::from_json(&text)?))
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<i32> {
    let file_cfg = FileConfig::load(&args.config)?;
    let delta = file_cfg.delta.unwrap_or(DEFAULT_DELTA);
    let series_len = file_cfg.series_len.unwrap_or(DEFAULT_SIM_LEN);

    let (_, truth) = resolve_graph(&args.graph)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let mut entries = Vec::with_capacity(args.runs);
    for run in 0..args.runs {
        let weights_seed = derive_seed(&[args.seed, run as u64, 0]);
        let sim_seed = derive_seed(&[args.seed, run as u64, 1]);
        let model = truth.randomize_weights(weights_seed);
        let sim = simulate_run(&model, series_len, delta, sim_seed)?;
        let file = format!("run_{run:03}.csv");
        save_csv(&sim.dataset, args.out.join(&file))?;
        entries.push(json!({
            "file": file,
            "injected_root": sim.injected_root,
            "window": { "start": sim.anomaly_window.start, "end": sim.anomaly_window.end },
        }));
    }

    let manifest = json!({
        "graph": args.graph,
        "performance": truth.performance,
        "seed": args.seed,
        "delta": delta,
        "series_len": series_len,
        "runs": entries,
    });
    fs::write(
        args.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    println!(
        "wrote {} runs and manifest.json to {}",
        args.runs,
        args.out.display()
    );
    Ok(0)
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<i32> {
    let file_cfg = FileConfig::load(&args.config)?;

    let fixture_spec = if args.fixtures == "n5,n10,n15,n25" {
        file_cfg.fixtures.clone().unwrap_or(args.fixtures.clone())
    } else {
        args.fixtures.clone()
    };
    let mut fixture_list = Vec::new();
    for item in fixture_spec.split(',').filter(|s| !s.is_empty()) {
        fixture_list.push(resolve_graph(item.trim())?);
    }
    if fixture_list.is_empty() {
        bail!("no fixtures given");
    }

    let variant_spec = match (&args.variants, &file_cfg.variants) {
        (v, Some(file)) if v == "nodk,L,L10E,L25E,L50E,P_nodk,P_L,P_L10E,P_L25E,P_L50E,raw" => {
            file.clone()
        }
        (v, _) => v.clone(),
    };
    let variants = parse_variants(&variant_spec)?;

    let defaults = EvalConfig::default();
    let knobs = Knobs::default();
    let config = EvalConfig {
        runs: args.runs.or(file_cfg.runs).unwrap_or(defaults.runs),
        seed: args.seed.or(file_cfg.seed).unwrap_or(defaults.seed),
        jobs: args.jobs.or(file_cfg.jobs).unwrap_or(defaults.jobs).max(1),
        series_len: file_cfg.series_len.unwrap_or(defaults.series_len),
        delta: file_cfg.delta.unwrap_or(defaults.delta),
        pipeline: build_pipeline(&knobs, &file_cfg),
    };

    let rows = taproot_core::evaluation::run_experiment(&fixture_list, &variants, &config)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let csv = rows_to_csv(&rows);
    fs::write(args.out.join("results.csv"), &csv)?;
    print!("{csv}");

    if let Some(compare) = &args.compare {
        let reference = if compare.is_empty() {
            fixtures::reference_results().to_string()
        } else {
            fs::read_to_string(compare)
                .with_context(|| format!("reading reference {compare}"))?
        };
        print!("{}", compare_to_reference(&rows, &reference)?);
    }
    eprintln!("wrote results.csv to {}", args.out.display());
    Ok(0)
}
