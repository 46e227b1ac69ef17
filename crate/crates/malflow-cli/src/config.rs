//! Experiment configuration: one serializable struct per run.
//!
//! Flags, TOML files and JSON files all funnel into [`ExperimentConfig`];
//! the effective configuration is validated as a whole before any
//! computation starts and is embedded verbatim in the run manifest, so a
//! manifest is always enough to reproduce a run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use malliavin_flow::density::require_density_smoothness;
use malliavin_flow::drift::{builtin_drift, DriftSpec};
use malliavin_flow::shuffles::{MAX_VERIFY_LEN, MAX_WORD_LEN};
use malliavin_flow::suite::SuiteName;

/// Output serialization of the main table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(anyhow!("unknown output format '{other}' (expected csv or json)")),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftBlock {
    pub family: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

impl DriftBlock {
    pub fn build(&self) -> Result<DriftSpec> {
        builtin_drift(&self.family, &self.params).map_err(|e| anyhow!("drift: {e}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub t0: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    pub paths: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub x0: Vec<f64>,
    /// When set, each path's driving noise is dumped to
    /// `{prefix}{path_index}.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_prefix: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowBlock {
    pub x0: Vec<f64>,
    /// Start time of the flow (a grid node).
    pub s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picard_order: Option<usize>,
    #[serde(default)]
    pub fd_check: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MalliavinBlock {
    pub x0: Vec<f64>,
    /// Derivative order, 1 or 2.
    pub order: usize,
    /// Observation time (a grid node).
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nondeg_p: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityBlock {
    pub x0: f64,
    /// 0 for the density, 1 for its first derivative.
    pub order: usize,
    /// Evaluation points as `a:b:n`.
    pub y: String,
    /// `malliavin`, `kde`, `both` or `oracle`.
    pub method: String,
    /// Observation time (a grid node).
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShuffleBlock {
    pub m: usize,
    pub n: usize,
    /// Pin index for the nested identity; absent runs the plain one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub nsub: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateBlock {
    pub m: usize,
    /// Comma list, one entry per factor: `-` keeps the plain factor, a
    /// coordinate index differentiates it in that direction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<String>,
    pub nsub: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportBlock {
    /// `gauss-bump`, `cosine` or `poly-probe`.
    pub u0: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub u0_params: BTreeMap<String, f64>,
    /// Evaluation points as `a:b:n`.
    pub x: String,
    /// `all` or a comma list of node indices.
    pub t_nodes: String,
    /// `ito`, `weak` or `both`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<String>,
    /// Number of dyadic refinement levels for the residual rate study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_width: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LampertiBlock {
    /// `const` or `sin2`.
    pub sigma: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sigma_params: BTreeMap<String, f64>,
    /// `roundtrip` or `density`.
    pub check: String,
    pub x0: f64,
    pub anchor: f64,
    pub box_lo: f64,
    pub box_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteBlock {
    pub name: String,
}

/// The complete description of one run.  Only the blocks the subcommand
/// uses are populated; serialization round-trips losslessly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malliavin: Option<MalliavinBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle: Option<ShuffleBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<TransportBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lamperti: Option<LampertiBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

impl ExperimentConfig {
    pub fn empty(subcommand: &str) -> Self {
        ExperimentConfig {
            subcommand: subcommand.to_string(),
            drift: None,
            grid: None,
            mc: None,
            simulate: None,
            flow: None,
            malliavin: None,
            density: None,
            shuffle: None,
            estimate: None,
            transport: None,
            lamperti: None,
            suite: None,
            output: OutputBlock::default(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing configuration to TOML")
    }

    pub fn master_seed(&self) -> u64 {
        self.mc.as_ref().map(|m| m.seed).unwrap_or(0)
    }

    /// Required-block accessors; validation guarantees presence, so a
    /// missing block here is a programming error, not a user error.
    pub fn grid_block(&self) -> &GridBlock {
        self.grid.as_ref().expect("validated grid block")
    }

    pub fn mc_block(&self) -> &McBlock {
        self.mc.as_ref().expect("validated mc block")
    }

    pub fn drift_block(&self) -> &DriftBlock {
        self.drift.as_ref().expect("validated drift block")
    }
}

/// Loads a configuration from a TOML file, JSON file, or the `config`
/// snapshot embedded in a run manifest.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let is_json = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("json") | Some("JSON")
    ) || text.trim_start().starts_with('{');
    if !is_json {
        return toml::from_str(&text)
            .with_context(|| format!("parsing TOML config {}", path.display()));
    }
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing JSON config {}", path.display()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| anyhow!("config file {} is not a JSON object", path.display()))?;
    if obj.contains_key("tool") && obj.contains_key("config") {
        // A run manifest: rerun from its embedded snapshot.
        let tool = obj["tool"].as_str().unwrap_or("");
        let inner = obj["config"].clone();
        if let Ok(cfg) = serde_json::from_value::<ExperimentConfig>(inner.clone()) {
            return Ok(cfg);
        }
        // Library-written suite manifests record only the battery name.
        if tool == "suite" {
            if let Some(name) = inner.get("suite").and_then(|v| v.as_str()) {
                let seed = obj
                    .get("master_seed")
                    .and_then(|v| v.as_u64())
                    .ok_or_else(|| anyhow!("manifest lacks a master_seed"))?;
                let mut cfg = ExperimentConfig::empty("suite");
                cfg.suite = Some(SuiteBlock {
                    name: name.to_string(),
                });
                cfg.mc = Some(McBlock {
                    paths: 1,
                    seed,
                });
                return Ok(cfg);
            }
        }
        bail!(
            "manifest {} does not embed a runnable configuration",
            path.display()
        );
    }
    serde_json::from_value(value).with_context(|| format!("parsing config {}", path.display()))
}

/// Parses `a:b:n` into `n` evenly spaced points from `a` to `b`.
pub fn parse_linspace(text: &str, field: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        bail!("{field}: expected 'a:b:n', got '{text}'");
    }
    let a: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| anyhow!("{field}: bad lower endpoint '{}'", parts[0]))?;
    let b: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| anyhow!("{field}: bad upper endpoint '{}'", parts[1]))?;
    let n: usize = parts[2]
        .trim()
        .parse()
        .map_err(|_| anyhow!("{field}: bad point count '{}'", parts[2]))?;
    if n == 0 {
        bail!("{field}: point count must be positive");
    }
    if !a.is_finite() || !b.is_finite() {
        bail!("{field}: endpoints must be finite");
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    if !(b > a) {
        bail!("{field}: need a < b for more than one point");
    }
    let step = (b - a) / (n - 1) as f64;
    Ok((0..n).map(|i| a + step * i as f64).collect())
}

/// Parses a comma list of floats, e.g. `0.1,0.2`.
pub fn parse_f64_list(text: &str, field: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("{field}: bad number '{}'", p.trim()))
        })
        .collect()
}

/// Parses `key=value` pairs separated by commas into a parameter map.
pub fn parse_params(text: &str, field: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for pair in text.split(',') {
        let pair = pair.trim();
        if pair.is_empty() {
            continue;
        }
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("{field}: expected key=value, got '{pair}'"))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| anyhow!("{field}: bad value for '{}'", key.trim()))?;
        out.insert(key.trim().to_string(), v);
    }
    Ok(out)
}

fn push_err(errors: &mut Vec<String>, field: &str, msg: impl fmt::Display) {
    errors.push(format!("{field}: {msg}"));
}

fn validate_grid<'a>(cfg: &'a ExperimentConfig, errors: &mut Vec<String>) -> Option<&'a GridBlock> {
    match cfg.grid.as_ref() {
        None => {
            push_err(errors, "grid", "block is required for this subcommand");
            None
        }
        Some(g) => {
            if !g.t0.is_finite() || !g.t_end.is_finite() {
                push_err(errors, "grid", "t0 and T must be finite");
            }
            if !(g.t_end > g.t0) {
                push_err(errors, "grid.T", format!("must exceed t0 = {}", g.t0));
            }
            if g.steps == 0 {
                push_err(errors, "grid.steps", "must be positive");
            }
            Some(g)
        }
    }
}

fn validate_mc<'a>(cfg: &'a ExperimentConfig, errors: &mut Vec<String>) -> Option<&'a McBlock> {
    match cfg.mc.as_ref() {
        None => {
            push_err(errors, "mc", "block is required for this subcommand");
            None
        }
        Some(m) => {
            if m.paths == 0 {
                push_err(errors, "mc.paths", "must be positive");
            }
            Some(m)
        }
    }
}

fn validate_drift(cfg: &ExperimentConfig, errors: &mut Vec<String>) -> Option<DriftSpec> {
    match cfg.drift.as_ref() {
        None => {
            push_err(errors, "drift", "block is required for this subcommand");
            None
        }
        Some(d) => match builtin_drift(&d.family, &d.params) {
            Ok(spec) => Some(spec),
            Err(e) => {
                push_err(errors, "drift", e);
                None
            }
        },
    }
}

fn node_of(grid: &GridBlock, t: f64) -> Option<usize> {
    let dt = (grid.t_end - grid.t0) / grid.steps as f64;
    let j = ((t - grid.t0) / dt).round();
    if !j.is_finite() || j < 0.0 || j > grid.steps as f64 {
        return None;
    }
    let node = grid.t0 + j * dt;
    if (node - t).abs() <= 1e-9 * (1.0 + t.abs()) {
        Some(j as usize)
    } else {
        None
    }
}

/// Validates every populated field against the module preconditions.
/// Returns all problems at once, each prefixed with its field path.
pub fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let mut errors = Vec::new();
    match cfg.subcommand.as_str() {
        "simulate" => {
            let spec = validate_drift(cfg, &mut errors);
            validate_grid(cfg, &mut errors);
            validate_mc(cfg, &mut errors);
            match cfg.simulate.as_ref() {
                None => push_err(&mut errors, "simulate", "block is required"),
                Some(s) => {
                    if let Some(spec) = spec.as_ref() {
                        if s.x0.len() != spec.dim() {
                            push_err(
                                &mut errors,
                                "simulate.x0",
                                format!("has {} entries for a dimension-{} drift", s.x0.len(), spec.dim()),
                            );
                        }
                    }
                }
            }
        }
        "flow" => {
            let spec = validate_drift(cfg, &mut errors);
            let grid = validate_grid(cfg, &mut errors);
            validate_mc(cfg, &mut errors);
            match cfg.flow.as_ref() {
                None => push_err(&mut errors, "flow", "block is required"),
                Some(f) => {
                    if let Some(spec) = spec.as_ref() {
                        if f.x0.len() != spec.dim() {
                            push_err(
                                &mut errors,
                                "flow.x0",
                                format!("has {} entries for a dimension-{} drift", f.x0.len(), spec.dim()),
                            );
                        }
                        if spec.smoothness() < 1 {
                            push_err(
                                &mut errors,
                                "flow",
                                "the variational equation needs a drift with k >= 1 derivatives",
                            );
                        }
                    }
                    if let Some(grid) = grid {
                        if node_of(grid, f.s).is_none() {
                            push_err(&mut errors, "flow.s", "must be a grid node");
                        }
                    }
                    if let Some(order) = f.picard_order {
                        if order == 0 {
                            push_err(&mut errors, "flow.picard_order", "must be at least 1");
                        }
                    }
                }
            }
        }
        "malliavin" => {
            let spec = validate_drift(cfg, &mut errors);
            let grid = validate_grid(cfg, &mut errors);
            validate_mc(cfg, &mut errors);
            match cfg.malliavin.as_ref() {
                None => push_err(&mut errors, "malliavin", "block is required"),
                Some(m) => {
                    if m.order != 1 && m.order != 2 {
                        push_err(&mut errors, "malliavin.order", "must be 1 or 2");
                    }
                    if let Some(spec) = spec.as_ref() {
                        if m.x0.len() != spec.dim() {
                            push_err(
                                &mut errors,
                                "malliavin.x0",
                                format!("has {} entries for a dimension-{} drift", m.x0.len(), spec.dim()),
                            );
                        }
                        if m.order == 2 && spec.smoothness() < 2 {
                            push_err(
                                &mut errors,
                                "malliavin.order",
                                format!(
                                    "the second derivative needs k >= 2, but the drift declares k = {}",
                                    spec.smoothness()
                                ),
                            );
                        }
                    }
                    if let Some(grid) = grid {
                        match node_of(grid, m.t) {
                            None => push_err(&mut errors, "malliavin.t", "must be a grid node"),
                            Some(0) => {
                                push_err(&mut errors, "malliavin.t", "must be past the first node")
                            }
                            Some(_) => {}
                        }
                    }
                    if let Some(ps) = m.nondeg_p.as_ref() {
                        if ps.is_empty() || ps.iter().any(|&p| !(p > 0.0)) {
                            push_err(&mut errors, "malliavin.nondeg_p", "powers must be positive");
                        }
                    }
                }
            }
        }
        "density" => {
            let spec = validate_drift(cfg, &mut errors);
            let grid = validate_grid(cfg, &mut errors);
            validate_mc(cfg, &mut errors);
            match cfg.density.as_ref() {
                None => push_err(&mut errors, "density", "block is required"),
                Some(d) => {
                    if d.order > 1 {
                        push_err(&mut errors, "density.order", "must be 0 or 1");
                    }
                    if let Err(e) = parse_linspace(&d.y, "density.y") {
                        errors.push(e.to_string());
                    }
                    let method_known = matches!(d.method.as_str(), "malliavin" | "kde" | "both" | "oracle");
                    if !method_known {
                        push_err(
                            &mut errors,
                            "density.method",
                            format!("unknown method '{}' (expected malliavin, kde, both or oracle)", d.method),
                        );
                    }
                    if let Some(spec) = spec.as_ref() {
                        if spec.dim() != 1 {
                            push_err(&mut errors, "density", "estimation is one-dimensional");
                        }
                        let needs_weights = matches!(d.method.as_str(), "malliavin" | "both");
                        if needs_weights && d.order <= 1 {
                            if let Err(e) = require_density_smoothness(spec, d.order) {
                                push_err(&mut errors, "density.order", e);
                            }
                        }
                        if d.method == "oracle"
                            && !matches!(cfg.drift_block().family.as_str(), "zero" | "ou")
                        {
                            push_err(
                                &mut errors,
                                "density.method",
                                "the closed-form oracle exists for the zero and ou drifts only",
                            );
                        }
                    }
                    if method_known && d.method != "malliavin" && d.method != "oracle" && d.order > 0 {
                        push_err(
                            &mut errors,
                            "density.method",
                            "the kde baseline estimates order 0 only",
                        );
                    }
                    if let Some(grid) = grid {
                        match node_of(grid, d.t) {
                            None => push_err(&mut errors, "density.t", "must be a grid node"),
                            Some(0) => {
                                push_err(&mut errors, "density.t", "must be past the first node")
                            }
                            Some(_) => {}
                        }
                    }
                }
            }
        }
        "verify-shuffle" => match cfg.shuffle.as_ref() {
            None => push_err(&mut errors, "shuffle", "block is required"),
            Some(s) => {
                if s.m + s.n > MAX_VERIFY_LEN {
                    push_err(
                        &mut errors,
                        "shuffle",
                        format!("m + n must stay <= {MAX_VERIFY_LEN} for quadrature verification"),
                    );
                }
                if let Some(k) = s.k {
                    if k > s.m {
                        push_err(&mut errors, "shuffle.k", format!("pin must satisfy k <= m = {}", s.m));
                    }
                }
                if s.nsub == 0 {
                    push_err(&mut errors, "shuffle.nsub", "must be positive");
                }
            }
        },
        "verify-estimate" => {
            validate_mc(cfg, &mut errors);
            match cfg.estimate.as_ref() {
                None => push_err(&mut errors, "estimate", "block is required"),
                Some(e) => {
                    if e.m == 0 || e.m > MAX_WORD_LEN {
                        push_err(
                            &mut errors,
                            "estimate.m",
                            format!("word length must lie in 1..={MAX_WORD_LEN}"),
                        );
                    }
                    if e.nsub == 0 {
                        push_err(&mut errors, "estimate.nsub", "must be positive");
                    }
                    if let Some(text) = e.alphas.as_ref() {
                        match parse_alphas(text, e.m) {
                            Ok(_) => {}
                            Err(err) => errors.push(err.to_string()),
                        }
                    }
                }
            }
        }
        "transport" => {
            let spec = validate_drift(cfg, &mut errors);
            let grid = validate_grid(cfg, &mut errors);
            validate_mc(cfg, &mut errors);
            match cfg.transport.as_ref() {
                None => push_err(&mut errors, "transport", "block is required"),
                Some(t) => {
                    if !matches!(t.u0.as_str(), "gauss-bump" | "cosine" | "poly-probe") {
                        push_err(
                            &mut errors,
                            "transport.u0",
                            format!("unknown datum '{}' (expected gauss-bump, cosine or poly-probe)", t.u0),
                        );
                    }
                    if let Err(e) = parse_linspace(&t.x, "transport.x") {
                        errors.push(e.to_string());
                    }
                    let wants_residual = t.residual.is_some();
                    if let Some(r) = t.residual.as_ref() {
                        if !matches!(r.as_str(), "ito" | "weak" | "both") {
                            push_err(
                                &mut errors,
                                "transport.residual",
                                format!("unknown residual '{r}' (expected ito, weak or both)"),
                            );
                        }
                    }
                    if let Some(spec) = spec.as_ref() {
                        if spec.dim() != 1 {
                            push_err(&mut errors, "transport", "the front-end drives scalar state");
                        }
                        if spec.smoothness() < 1 {
                            push_err(
                                &mut errors,
                                "transport",
                                "transport needs a drift with k >= 1 bounded derivative",
                            );
                        }
                        let needs_laplacian = t.refine.is_some()
                            || matches!(t.residual.as_deref(), Some("ito") | Some("both"));
                        if needs_laplacian && spec.smoothness() < 2 {
                            push_err(
                                &mut errors,
                                "transport.residual",
                                format!(
                                    "the Ito residual needs k >= 2 bounded drift derivatives, \
                                     the drift declares k = {}",
                                    spec.smoothness()
                                ),
                            );
                        }
                    }
                    if t.t_nodes != "all" {
                        if wants_residual {
                            push_err(
                                &mut errors,
                                "transport.t_nodes",
                                "residual series need every node; use 'all'",
                            );
                        }
                        match parse_node_list(&t.t_nodes) {
                            Err(e) => errors.push(e.to_string()),
                            Ok(nodes) => {
                                if let Some(grid) = grid {
                                    if nodes.iter().any(|&j| j > grid.steps) {
                                        push_err(
                                            &mut errors,
                                            "transport.t_nodes",
                                            format!("indices must stay <= steps = {}", grid.steps),
                                        );
                                    }
                                }
                            }
                        }
                    }
                    if matches!(t.refine, Some(0) | Some(1)) {
                        push_err(
                            &mut errors,
                            "transport.refine",
                            "a rate study needs at least two refinement levels",
                        );
                    }
                    if t.u0.as_str() == "poly-probe" {
                        if let Some(&deg) = t.u0_params.get("degree") {
                            if deg != 1.0 && deg != 2.0 {
                                push_err(&mut errors, "transport.u0_params.degree", "must be 1 or 2");
                            }
                        }
                    }
                }
            }
        }
        "lamperti" => {
            let spec = validate_drift(cfg, &mut errors);
            let grid = validate_grid(cfg, &mut errors);
            validate_mc(cfg, &mut errors);
            match cfg.lamperti.as_ref() {
                None => push_err(&mut errors, "lamperti", "block is required"),
                Some(l) => {
                    match l.sigma.as_str() {
                        "sin2" => {}
                        "const" => {
                            let s0 = l.sigma_params.get("s0").copied().unwrap_or(2.0);
                            if !(s0 > 0.0) || !s0.is_finite() {
                                push_err(&mut errors, "lamperti.sigma_params.s0", "must be positive and finite");
                            }
                        }
                        other => push_err(
                            &mut errors,
                            "lamperti.sigma",
                            format!("unknown coefficient '{other}' (expected const or sin2)"),
                        ),
                    }
                    if !matches!(l.check.as_str(), "roundtrip" | "density") {
                        push_err(
                            &mut errors,
                            "lamperti.check",
                            format!("unknown check '{}' (expected roundtrip or density)", l.check),
                        );
                    }
                    if !(l.box_lo < l.box_hi) {
                        push_err(&mut errors, "lamperti.box_lo", "working box must be a proper interval");
                    }
                    if !(l.anchor >= l.box_lo && l.anchor <= l.box_hi) {
                        push_err(&mut errors, "lamperti.anchor", "must lie inside the working box");
                    }
                    if let Some(spec) = spec.as_ref() {
                        if spec.dim() != 1 {
                            push_err(&mut errors, "lamperti", "the transform is one-dimensional");
                        }
                        if l.check == "density" && spec.smoothness() < 2 {
                            push_err(
                                &mut errors,
                                "lamperti.check",
                                format!(
                                    "the density route differentiates the transformed drift twice and \
                                     needs k >= 2, but the drift declares k = {}",
                                    spec.smoothness()
                                ),
                            );
                        }
                    }
                    let _ = grid;
                }
            }
        }
        "suite" => match cfg.suite.as_ref() {
            None => push_err(&mut errors, "suite", "block is required"),
            Some(s) => {
                if let Err(e) = s.name.parse::<SuiteName>() {
                    push_err(&mut errors, "suite.name", e);
                }
            }
        },
        other => push_err(&mut errors, "subcommand", format!("unknown subcommand '{other}'")),
    }
    if errors.is_empty() {
        Ok(())
    } else {
        bail!("invalid configuration: {}", errors.join("; "))
    }
}

/// Parses the factor multi-index list for the moment estimate: `-` keeps
/// the plain factor, an integer differentiates in that coordinate.
pub fn parse_alphas(text: &str, m: usize) -> Result<Vec<Option<usize>>> {
    let entries: Vec<&str> = text.split(',').map(str::trim).collect();
    if entries.len() != m {
        bail!("estimate.alphas: {} entries for a length-{m} word", entries.len());
    }
    entries
        .iter()
        .map(|e| {
            if *e == "-" {
                Ok(None)
            } else {
                e.parse::<usize>()
                    .map(Some)
                    .map_err(|_| anyhow!("estimate.alphas: bad entry '{e}' (use '-' or a coordinate index)"))
            }
        })
        .collect()
}

/// Parses a comma list of node indices.
pub fn parse_node_list(text: &str) -> Result<Vec<usize>> {
    let nodes: Vec<usize> = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| anyhow!("transport.t_nodes: bad node index '{}'", p.trim()))
        })
        .collect::<Result<_>>()?;
    if nodes.is_empty() {
        bail!("transport.t_nodes: need at least one node");
    }
    if nodes.windows(2).any(|w| w[1] <= w[0]) {
        bail!("transport.t_nodes: indices must be strictly increasing");
    }
    Ok(nodes)
}
