//! Command-line front-end for the additive-noise SDE toolkit.
//!
//! Every subcommand assembles an [`ExperimentConfig`] (from flags, a TOML
//! or JSON file, or a previously written run manifest), validates it in
//! full, runs the computation, and only then writes its outputs: a CSV or
//! JSON table, the suite's JSON report, and a run manifest that is
//! sufficient to reproduce the run.
//!
//! Exit codes: 0 on success, 1 when a requested check failed, 2 on
//! configuration errors.  `MALFLOW_THREADS` caps the worker pool.

mod config;
mod exec;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use malliavin_flow::suite::{CheckLine, RunManifest, DEFAULT_MASTER_SEED};

use config::{
    parse_f64_list, parse_params, validate, DensityBlock, DriftBlock, EstimateBlock,
    ExperimentConfig, FlowBlock, GridBlock, LampertiBlock, MalliavinBlock, McBlock, OutputFormat,
    ShuffleBlock, SimulateBlock, SuiteBlock, TransportBlock,
};
use output::{manifest_path, write_file, Outcome};

#[derive(Parser)]
#[command(
    name = "malflow",
    version,
    about = "Monte Carlo toolkit for additive-noise SDEs: flows, Malliavin weights, \
             density estimation, shuffle identities, transport and the Lamperti reduction"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate Euler paths of dX = b dt + dB and write them as CSV.
    Simulate(SimulateArgs),
    /// Jacobian (and second variation) of the flow along one path.
    Flow(FlowArgs),
    /// Malliavin derivatives along one path, with an optional
    /// non-degeneracy diagnostic.
    Malliavin(MalliavinArgs),
    /// Density (or density-derivative) estimation at the terminal time.
    Density(DensityArgs),
    /// Verify a shuffle identity by quadrature against its budget.
    VerifyShuffle(VerifyShuffleArgs),
    /// Monte Carlo moment estimate of a simplex word against the
    /// factorial envelope.
    VerifyEstimate(VerifyEstimateArgs),
    /// Solve the stochastic transport equation along one path.
    Transport(TransportArgs),
    /// Lamperti reduction of a multiplicative-noise SDE: round-trip or
    /// density cross-checks.
    Lamperti(LampertiArgs),
    /// Run the acceptance battery and write a JSON report.
    Suite(SuiteArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML or JSON configuration file, or a run manifest to reproduce.
    /// Explicit flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file for the main table or report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output serialization: csv or json.
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Also write the effective configuration as editable TOML.
    #[arg(long)]
    emit_config: Option<PathBuf>,
}

#[derive(Args)]
struct DriftArgs {
    /// Drift family: zero, ou, relu, softplus or bump.
    #[arg(long)]
    drift: Option<String>,
    /// Drift parameters as `key=value,...` (e.g. `theta=1.5,dim=1`).
    #[arg(long)]
    drift_params: Option<String>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, allow_hyphen_values = true)]
    t0: Option<f64>,
    /// End time of the grid.
    #[arg(long = "T")]
    t_end: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    drift: DriftArgs,
    /// Initial state, comma-separated per coordinate.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dump each path's driving noise to `{prefix}{index}.csv`.
    #[arg(long)]
    noise_prefix: Option<String>,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct FlowArgs {
    #[command(flatten)]
    drift: DriftArgs,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Start time of the flow (defaults to t0).
    #[arg(long, allow_hyphen_values = true)]
    s: Option<f64>,
    /// Also evaluate the Picard truncation at this order.
    #[arg(long)]
    picard_order: Option<usize>,
    /// Check the terminal Jacobian against finite differences.
    #[arg(long)]
    fd_check: bool,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct MalliavinArgs {
    #[command(flatten)]
    drift: DriftArgs,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Derivative order: 1 or 2.
    #[arg(long)]
    order: Option<usize>,
    /// Observation time (defaults to T).
    #[arg(long, allow_hyphen_values = true)]
    t: Option<f64>,
    /// Inverse-moment powers for the non-degeneracy diagnostic, e.g. "1,2,4".
    #[arg(long)]
    nondeg_p: Option<String>,
    /// Paths for the non-degeneracy Monte Carlo.
    #[arg(long)]
    paths: Option<u64>,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct DensityArgs {
    #[command(flatten)]
    drift: DriftArgs,
    /// Scalar initial state.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    /// Estimation order: 0 for the density, 1 for its derivative.
    #[arg(long)]
    order: Option<usize>,
    /// Evaluation points as `a:b:n`.
    #[arg(long, allow_hyphen_values = true)]
    y: Option<String>,
    /// malliavin, kde, both or oracle.
    #[arg(long)]
    method: Option<String>,
    /// Observation time (defaults to T).
    #[arg(long, allow_hyphen_values = true)]
    t: Option<f64>,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct VerifyShuffleArgs {
    /// Outer word length.
    #[arg(long)]
    m: Option<usize>,
    /// Inner word length.
    #[arg(long)]
    n: Option<usize>,
    /// Pin index for the nested identity; omit for the plain one.
    #[arg(long)]
    k: Option<usize>,
    /// Quadrature subdivisions.
    #[arg(long)]
    nsub: Option<usize>,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct VerifyEstimateArgs {
    /// Word length.
    #[arg(long)]
    m: Option<usize>,
    /// Per-factor multi-indices: comma list of `-` or coordinate indices.
    #[arg(long, allow_hyphen_values = true)]
    alphas: Option<String>,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Time subdivisions of the simplex chain.
    #[arg(long)]
    nsub: Option<usize>,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct TransportArgs {
    #[command(flatten)]
    drift: DriftArgs,
    /// Initial datum: gauss-bump, cosine or poly-probe.
    #[arg(long)]
    u0: Option<String>,
    /// Datum parameters as `key=value,...` (center, width, height,
    /// wavenumber, degree).
    #[arg(long)]
    u0_params: Option<String>,
    /// Evaluation points as `a:b:n`.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// `all` or a comma list of node indices.
    #[arg(long)]
    t_nodes: Option<String>,
    /// Residual channel: ito, weak or both.
    #[arg(long)]
    residual: Option<String>,
    /// Dyadic refinement levels for the residual rate study.
    #[arg(long)]
    refine: Option<usize>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct LampertiArgs {
    /// Diffusion coefficient: const or sin2.
    #[arg(long)]
    sigma: Option<String>,
    /// Coefficient parameters as `key=value` (s0 for const).
    #[arg(long)]
    sigma_params: Option<String>,
    /// Drift family of the multiplicative SDE.
    #[arg(long)]
    b: Option<String>,
    /// Parameters of that drift as `key=value,...`.
    #[arg(long)]
    b_params: Option<String>,
    /// Which cross-check to run: roundtrip or density.
    #[arg(long)]
    check: Option<String>,
    /// Scalar initial state.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct SuiteArgs {
    /// Battery to run: smoke or full.
    name: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: ConfigArgs,
}

fn base_config(common: &ConfigArgs, subcommand: &str) -> Result<ExperimentConfig> {
    let mut cfg = match common.config.as_ref() {
        Some(path) => {
            let loaded = config::load_config(path)?;
            if loaded.subcommand != subcommand {
                bail!(
                    "config file describes a '{}' run but the '{subcommand}' subcommand was invoked",
                    loaded.subcommand
                );
            }
            loaded
        }
        None => ExperimentConfig::empty(subcommand),
    };
    if let Some(out) = common.out.as_ref() {
        cfg.output.path = Some(out.clone());
    }
    if let Some(format) = common.format {
        cfg.output.format = format;
    }
    Ok(cfg)
}

fn merge_drift(cfg: &mut ExperimentConfig, args: &DriftArgs, default_family: &str) -> Result<()> {
    let mut block = cfg.drift.take().unwrap_or_else(|| DriftBlock {
        family: default_family.to_string(),
        params: Default::default(),
    });
    if let Some(family) = args.drift.as_ref() {
        block.family = family.clone();
        block.params.clear();
    }
    if let Some(text) = args.drift_params.as_ref() {
        block.params = parse_params(text, "drift.params")?;
    }
    cfg.drift = Some(block);
    Ok(())
}

fn merge_grid(cfg: &mut ExperimentConfig, args: &GridArgs, t0: f64, t_end: f64, steps: usize) {
    let mut block = cfg.grid.take().unwrap_or(GridBlock { t0, t_end, steps });
    if let Some(v) = args.t0 {
        block.t0 = v;
    }
    if let Some(v) = args.t_end {
        block.t_end = v;
    }
    if let Some(v) = args.steps {
        block.steps = v;
    }
    cfg.grid = Some(block);
}

fn merge_mc(cfg: &mut ExperimentConfig, paths: Option<u64>, seed: Option<u64>, default_paths: u64) {
    let mut block = cfg.mc.take().unwrap_or(McBlock {
        paths: default_paths,
        seed: DEFAULT_MASTER_SEED,
    });
    if let Some(p) = paths {
        block.paths = p;
    }
    if let Some(s) = seed {
        block.seed = s;
    }
    cfg.mc = Some(block);
}

fn parse_x0(text: Option<&String>, existing: Option<Vec<f64>>, fallback: f64) -> Result<Vec<f64>> {
    match text {
        Some(t) => parse_f64_list(t, "x0"),
        None => Ok(existing.unwrap_or_else(|| vec![fallback])),
    }
}

/// Assembles the effective configuration for one invocation: defaults,
/// then config-file values, then explicit flags.
fn build_config(cmd: &Cmd) -> Result<ExperimentConfig> {
    match cmd {
        Cmd::Simulate(a) => {
            let mut cfg = base_config(&a.common, "simulate")?;
            merge_drift(&mut cfg, &a.drift, "zero")?;
            merge_grid(&mut cfg, &a.grid, 0.0, 1.0, 256);
            merge_mc(&mut cfg, a.paths, a.seed, 8);
            let prev = cfg.simulate.take();
            cfg.simulate = Some(SimulateBlock {
                x0: parse_x0(a.x0.as_ref(), prev.as_ref().map(|p| p.x0.clone()), 0.0)?,
                noise_prefix: a
                    .noise_prefix
                    .clone()
                    .or(prev.and_then(|p| p.noise_prefix)),
            });
            Ok(cfg)
        }
        Cmd::Flow(a) => {
            let mut cfg = base_config(&a.common, "flow")?;
            merge_drift(&mut cfg, &a.drift, "softplus")?;
            merge_grid(&mut cfg, &a.grid, 0.0, 1.0, 1024);
            merge_mc(&mut cfg, None, a.seed, 1);
            let t0 = cfg.grid_block().t0;
            let prev = cfg.flow.take();
            cfg.flow = Some(FlowBlock {
                x0: parse_x0(a.x0.as_ref(), prev.as_ref().map(|p| p.x0.clone()), 0.3)?,
                s: a.s.or(prev.as_ref().map(|p| p.s)).unwrap_or(t0),
                picard_order: a.picard_order.or(prev.as_ref().and_then(|p| p.picard_order)),
                fd_check: a.fd_check || prev.map(|p| p.fd_check).unwrap_or(false),
            });
            Ok(cfg)
        }
        Cmd::Malliavin(a) => {
            let mut cfg = base_config(&a.common, "malliavin")?;
            merge_drift(&mut cfg, &a.drift, "ou")?;
            merge_grid(&mut cfg, &a.grid, 0.0, 1.0, 256);
            merge_mc(&mut cfg, a.paths, a.seed, 2_000);
            let t_end = cfg.grid_block().t_end;
            let prev = cfg.malliavin.take();
            let nondeg_p = match a.nondeg_p.as_ref() {
                Some(text) => Some(parse_f64_list(text, "malliavin.nondeg_p")?),
                None => prev.as_ref().and_then(|p| p.nondeg_p.clone()),
            };
            cfg.malliavin = Some(MalliavinBlock {
                x0: parse_x0(a.x0.as_ref(), prev.as_ref().map(|p| p.x0.clone()), 0.5)?,
                order: a.order.or(prev.as_ref().map(|p| p.order)).unwrap_or(1),
                t: a.t.or(prev.as_ref().map(|p| p.t)).unwrap_or(t_end),
                nondeg_p,
            });
            Ok(cfg)
        }
        Cmd::Density(a) => {
            let mut cfg = base_config(&a.common, "density")?;
            merge_drift(&mut cfg, &a.drift, "zero")?;
            merge_grid(&mut cfg, &a.grid, 0.0, 1.0, 512);
            merge_mc(&mut cfg, a.paths, a.seed, 20_000);
            let t_end = cfg.grid_block().t_end;
            let prev = cfg.density.take();
            cfg.density = Some(DensityBlock {
                x0: a.x0.or(prev.as_ref().map(|p| p.x0)).unwrap_or(0.0),
                order: a.order.or(prev.as_ref().map(|p| p.order)).unwrap_or(0),
                y: a.y
                    .clone()
                    .or(prev.as_ref().map(|p| p.y.clone()))
                    .unwrap_or_else(|| "-2:2:5".to_string()),
                method: a
                    .method
                    .clone()
                    .or(prev.as_ref().map(|p| p.method.clone()))
                    .unwrap_or_else(|| "malliavin".to_string()),
                t: a.t.or(prev.map(|p| p.t)).unwrap_or(t_end),
            });
            Ok(cfg)
        }
        Cmd::VerifyShuffle(a) => {
            let mut cfg = base_config(&a.common, "verify-shuffle")?;
            let prev = cfg.shuffle.take();
            cfg.shuffle = Some(ShuffleBlock {
                m: a.m.or(prev.as_ref().map(|p| p.m)).unwrap_or(2),
                n: a.n.or(prev.as_ref().map(|p| p.n)).unwrap_or(1),
                k: a.k.or(prev.as_ref().and_then(|p| p.k)),
                nsub: a.nsub.or(prev.map(|p| p.nsub)).unwrap_or(4_000),
            });
            Ok(cfg)
        }
        Cmd::VerifyEstimate(a) => {
            let mut cfg = base_config(&a.common, "verify-estimate")?;
            merge_mc(&mut cfg, a.paths, a.seed, 10_000);
            let prev = cfg.estimate.take();
            cfg.estimate = Some(EstimateBlock {
                m: a.m.or(prev.as_ref().map(|p| p.m)).unwrap_or(3),
                alphas: a.alphas.clone().or(prev.as_ref().and_then(|p| p.alphas.clone())),
                nsub: a.nsub.or(prev.map(|p| p.nsub)).unwrap_or(256),
            });
            Ok(cfg)
        }
        Cmd::Transport(a) => {
            let mut cfg = base_config(&a.common, "transport")?;
            merge_drift(&mut cfg, &a.drift, "softplus")?;
            merge_grid(&mut cfg, &a.grid, 0.0, 1.0, 256);
            merge_mc(&mut cfg, None, a.seed, 1);
            let prev = cfg.transport.take();
            let u0_params = match a.u0_params.as_ref() {
                Some(text) => parse_params(text, "transport.u0_params")?,
                None => prev.as_ref().map(|p| p.u0_params.clone()).unwrap_or_default(),
            };
            cfg.transport = Some(TransportBlock {
                u0: a.u0
                    .clone()
                    .or(prev.as_ref().map(|p| p.u0.clone()))
                    .unwrap_or_else(|| "gauss-bump".to_string()),
                u0_params,
                x: a.x
                    .clone()
                    .or(prev.as_ref().map(|p| p.x.clone()))
                    .unwrap_or_else(|| "-2:2:41".to_string()),
                t_nodes: a
                    .t_nodes
                    .clone()
                    .or(prev.as_ref().map(|p| p.t_nodes.clone()))
                    .unwrap_or_else(|| "all".to_string()),
                residual: a.residual.clone().or(prev.as_ref().and_then(|p| p.residual.clone())),
                refine: a.refine.or(prev.as_ref().and_then(|p| p.refine)),
                theta_center: prev.as_ref().and_then(|p| p.theta_center),
                theta_width: prev.and_then(|p| p.theta_width),
            });
            Ok(cfg)
        }
        Cmd::Lamperti(a) => {
            let mut cfg = base_config(&a.common, "lamperti")?;
            // `--b` names the drift of the multiplicative SDE; it lives in
            // the shared drift block.
            let drift_args = DriftArgs {
                drift: a.b.clone(),
                drift_params: a.b_params.clone(),
            };
            merge_drift(&mut cfg, &drift_args, "zero")?;
            merge_grid(&mut cfg, &a.grid, 0.0, 1.0, 256);
            merge_mc(&mut cfg, a.paths, a.seed, 20_000);
            let prev = cfg.lamperti.take();
            let sigma_params = match a.sigma_params.as_ref() {
                Some(text) => parse_params(text, "lamperti.sigma_params")?,
                None => prev.as_ref().map(|p| p.sigma_params.clone()).unwrap_or_default(),
            };
            cfg.lamperti = Some(LampertiBlock {
                sigma: a
                    .sigma
                    .clone()
                    .or(prev.as_ref().map(|p| p.sigma.clone()))
                    .unwrap_or_else(|| "sin2".to_string()),
                sigma_params,
                check: a
                    .check
                    .clone()
                    .or(prev.as_ref().map(|p| p.check.clone()))
                    .unwrap_or_else(|| "roundtrip".to_string()),
                x0: a.x0.or(prev.as_ref().map(|p| p.x0)).unwrap_or(0.4),
                anchor: prev.as_ref().map(|p| p.anchor).unwrap_or(0.0),
                box_lo: prev.as_ref().map(|p| p.box_lo).unwrap_or(-25.0),
                box_hi: prev.map(|p| p.box_hi).unwrap_or(25.0),
            });
            Ok(cfg)
        }
        Cmd::Suite(a) => {
            let mut cfg = base_config(&a.common, "suite")?;
            merge_mc(&mut cfg, None, a.seed, 1);
            let prev = cfg.suite.take();
            let name = a
                .name
                .clone()
                .or(prev.map(|p| p.name))
                .ok_or_else(|| anyhow::anyhow!("suite: battery name required (smoke or full)"))?;
            cfg.suite = Some(SuiteBlock { name });
            Ok(cfg)
        }
    }
}

fn default_out(cfg: &ExperimentConfig) -> PathBuf {
    match cfg.output.path.clone() {
        Some(p) => p,
        None => {
            if cfg.subcommand == "suite" {
                PathBuf::from("suite-report.json")
            } else {
                let ext = match cfg.output.format {
                    OutputFormat::Csv => "csv",
                    OutputFormat::Json => "json",
                };
                PathBuf::from(format!("{}.{ext}", cfg.subcommand))
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    match std::env::var("MALFLOW_THREADS") {
        Err(_) => Ok(()),
        Ok(text) => {
            let n: usize = text
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .with_context(|| {
                    format!("MALFLOW_THREADS must be a positive integer, got '{text}'")
                })?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("initialising the worker pool")
        }
    }
}

/// Writes every artifact of a finished run and prints the summary.
fn emit(cfg: &ExperimentConfig, outcome: &Outcome, wall_ms: u64) -> Result<()> {
    let out = default_out(cfg);
    for line in &outcome.summary {
        println!("{line}");
    }
    if let Some(table) = &outcome.table {
        let contents = match cfg.output.format {
            OutputFormat::Csv => table.to_csv(),
            OutputFormat::Json => {
                let mut text = serde_json::to_string_pretty(&table.to_json())
                    .context("serializing table to JSON")?;
                text.push('\n');
                text
            }
        };
        write_file(&out, &contents)?;
    }
    if let Some(report) = &outcome.report {
        let mut text =
            serde_json::to_string_pretty(report).context("serializing suite report")?;
        text.push('\n');
        write_file(&out, &text)?;
    }
    for (path, contents) in &outcome.extra_files {
        write_file(path, contents)?;
    }

    let mut manifest = RunManifest::new(
        &cfg.subcommand,
        cfg.master_seed(),
        wall_ms,
        serde_json::to_value(cfg).context("serializing configuration")?,
    );
    manifest.checks = outcome
        .checks
        .iter()
        .enumerate()
        .map(|(i, c)| CheckLine {
            id: i + 1,
            name: c.name.clone(),
            pass: c.pass,
        })
        .collect();
    let manifest_file = manifest_path(&out);
    write_file(&manifest_file, &format!("{}\n", manifest.to_json()?))?;

    for check in &outcome.checks {
        println!("[{}] {}", if check.pass { "PASS" } else { "FAIL" }, check.name);
    }
    println!("wrote {} and {}", out.display(), manifest_file.display());
    Ok(())
}

fn common_args(cmd: &Cmd) -> &ConfigArgs {
    match cmd {
        Cmd::Simulate(a) => &a.common,
        Cmd::Flow(a) => &a.common,
        Cmd::Malliavin(a) => &a.common,
        Cmd::Density(a) => &a.common,
        Cmd::VerifyShuffle(a) => &a.common,
        Cmd::VerifyEstimate(a) => &a.common,
        Cmd::Transport(a) => &a.common,
        Cmd::Lamperti(a) => &a.common,
        Cmd::Suite(a) => &a.common,
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    configure_threads()?;
    let cfg = build_config(&cli.command)?;
    validate(&cfg)?;
    let start = Instant::now();
    let outcome = exec::dispatch(&cfg)?;
    emit(&cfg, &outcome, start.elapsed().as_millis() as u64)?;
    if let Some(path) = common_args(&cli.command).emit_config.as_ref() {
        write_file(path, &cfg.to_toml()?)?;
        println!("wrote {}", path.display());
    }
    Ok(outcome.all_pass())
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
