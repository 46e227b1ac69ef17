//! Named check batteries shared by the command-line driver and the
//! integration tests.
//!
//! Each check pins one end-to-end claim about the library — a closed-form
//! density recovered, an identity exact, a residual rate, a capability
//! gate, thread-count independence — together with its sample sizes and
//! tolerances, and reports the measured numbers next to a pass/fail
//! verdict.  Failures are data: a check that runs to completion but misses
//! its tolerance yields `pass = false`, not an `Err`.  `Err` is reserved
//! for configurations that prevent a battery from running at all.
//!
//! Every Monte Carlo quantity below is a deterministic function of the
//! master seed, so a rerun from a [`RunManifest`] reproduces each reported
//! metric to within [`REPRO_REL_TOL`] relative (in practice bitwise),
//! regardless of the worker-thread count.  Wall times are recorded outside
//! the metric lists for exactly that reason.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use num::{BigRational, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::density::{estimate_density, gaussian_y_grid, DensityOracle};
use crate::drift::{DerivativeWord, DriftSpec, ProductBump, Scalar1dFn, ScalarBump};
use crate::error::{Error, Result};
use crate::flow::{picard_series, variational_flow};
use crate::lamperti::{
    build_map_1d, density_route_check, roundtrip_check, transform_drift, Observable, SigmaField,
};
use crate::malliavin::{d1_exponential_1d, malliavin_covariance, nondegeneracy_diagnostic};
use crate::paths::{BrownianPath, SeedSpec, TimeGrid};
use crate::sde::{girsanov_weight, mc_girsanov_gap, solve_forward, weight_moment_diagnostic};
use crate::shuffles::{
    binomial, check_moment_bound, enumerate_shuffles, poly_factor, symbolic_shuffle2_sides,
    symbolic_shuffle_sides, verify_shuffle2_identity, verify_shuffle_identity, Factor1, RatPoly,
    ShuffleVariant,
};
use crate::transport::{log2_rate, residual_rate_study, solve_transport, InitialDatum};
use crate::util::{par_fold_chunks, Moments, DEFAULT_CHUNK};
use crate::VERSION;

/// Master seed used when the caller does not supply one.
pub const DEFAULT_MASTER_SEED: u64 = 0x4D41_4C46;

/// Relative tolerance for comparing reported numbers across reruns.
pub const REPRO_REL_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

/// One labelled measured number inside a check report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metric {
    pub label: String,
    pub value: f64,
}

impl Metric {
    pub fn new(label: impl Into<String>, value: f64) -> Self {
        Metric {
            label: label.into(),
            value,
        }
    }
}

/// Outcome of a single named check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    /// Stable identifier (1-based position in the standard battery).
    pub id: usize,
    pub name: String,
    pub pass: bool,
    /// One-line human summary carrying the decisive numbers.
    pub summary: String,
    /// Every reported number of the check, in a fixed order.
    pub metrics: Vec<Metric>,
    pub wall_ms: u64,
}

impl CheckReport {
    /// Fixed-width console line, one per check.
    pub fn line(&self) -> String {
        format!(
            "[{}] {:02} {:<22} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.summary
        )
    }
}

/// Aggregate outcome of a suite run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub version: String,
    pub master_seed: u64,
    /// Worker threads in the pool the run executed under.
    pub threads: usize,
    pub wall_ms: u64,
    pub checks: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn n_failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }
}

/// The two battery sizes the suite runs at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteName {
    /// Reduced sample sizes; finishes within a minute.
    Smoke,
    /// Production sample sizes.
    Full,
}

impl SuiteName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SuiteName::Smoke => "smoke",
            SuiteName::Full => "full",
        }
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smoke" => Ok(SuiteName::Smoke),
            "full" => Ok(SuiteName::Full),
            other => Err(Error::invalid(format!(
                "unknown suite '{other}'; expected 'smoke' or 'full'"
            ))),
        }
    }
}

/// Monte Carlo sizes per battery.
#[derive(Clone, Copy, Debug)]
struct Sizes {
    density_paths: usize,
    density_steps: usize,
    bound_paths: u64,
    bound_nsub: usize,
    girsanov_paths: u64,
    relu_paths: usize,
    lamperti_paths: usize,
    lamperti_density_paths: usize,
}

impl Sizes {
    fn for_suite(name: SuiteName) -> Sizes {
        match name {
            SuiteName::Full => Sizes {
                density_paths: 200_000,
                density_steps: 512,
                bound_paths: 100_000,
                bound_nsub: 512,
                girsanov_paths: 100_000,
                relu_paths: 40_000,
                lamperti_paths: 100_000,
                lamperti_density_paths: 50_000,
            },
            SuiteName::Smoke => Sizes {
                density_paths: 80_000,
                density_steps: 256,
                bound_paths: 10_000,
                bound_nsub: 256,
                girsanov_paths: 20_000,
                relu_paths: 6_000,
                lamperti_paths: 10_000,
                lamperti_density_paths: 8_000,
            },
        }
    }
}

fn report(
    id: usize,
    name: &str,
    pass: bool,
    summary: String,
    metrics: Vec<Metric>,
    start: Instant,
) -> CheckReport {
    CheckReport {
        id,
        name: name.to_string(),
        pass,
        summary,
        metrics,
        wall_ms: start.elapsed().as_millis() as u64,
    }
}

// ---------------------------------------------------------------------------
// Individual checks
// ---------------------------------------------------------------------------

/// Zero-drift density estimates against the standard normal: within three
/// standard errors and 0.01 absolute at five evaluation points.
pub fn check_gaussian_density(
    n_paths: usize,
    n_steps: usize,
    master_seed: u64,
) -> Result<CheckReport> {
    let start = Instant::now();
    let spec = DriftSpec::zero(1)?;
    let grid = TimeGrid::new(0.0, 1.0, n_steps)?;
    let ys = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let oracle = DensityOracle::ZeroDrift { x0: 0.0, t: 1.0 };
    let est = estimate_density(&spec, 0.0, &grid, 1.0, &ys, 0, n_paths, master_seed)?;
    let mut metrics = Vec::new();
    let mut ok = true;
    let mut max_abs = 0.0f64;
    let mut max_z = 0.0f64;
    for (i, &y) in ys.iter().enumerate() {
        let gap = (est.values[i] - oracle.pdf(y)).abs();
        let se = est.std_errors[i];
        ok &= gap <= 3.0 * se && gap <= 0.01;
        max_abs = max_abs.max(gap);
        if se > 0.0 {
            max_z = max_z.max(gap / se);
        }
        metrics.push(Metric::new(format!("p[{y}]"), est.values[i]));
        metrics.push(Metric::new(format!("se[{y}]"), se));
    }
    let timely = start.elapsed().as_secs_f64() < 30.0;
    let summary = format!(
        "max |p - phi| = {max_abs:.1e} (cap 0.01), max gap/se = {max_z:.2} (cap 3), {n_paths} paths"
    );
    Ok(report(
        1,
        "gaussian-density",
        ok && timely,
        summary,
        metrics,
        start,
    ))
}

/// Ornstein-Uhlenbeck density and its first derivative against the
/// closed-form Gaussian, each within three standard errors.
pub fn check_ou_density(n_paths: usize, n_steps: usize, master_seed: u64) -> Result<CheckReport> {
    let start = Instant::now();
    let theta = 1.0;
    let x0 = 1.0;
    let oracle = DensityOracle::OrnsteinUhlenbeck { x0, theta, t: 1.0 };
    let spec = DriftSpec::ou(1, theta)?;
    let grid = TimeGrid::new(0.0, 1.0, n_steps)?;
    let ys = gaussian_y_grid(oracle.mean(), oracle.variance().sqrt(), 5, 1.5);
    let mut metrics = Vec::new();
    let mut ok = true;
    let mut max_z = 0.0f64;
    for order in [0usize, 1] {
        let est = estimate_density(&spec, x0, &grid, 1.0, &ys, order, n_paths, master_seed)?;
        for (i, &y) in ys.iter().enumerate() {
            let target = if order == 0 {
                oracle.pdf(y)
            } else {
                oracle.pdf_derivative(y)
            };
            let gap = (est.values[i] - target).abs();
            let se = est.std_errors[i];
            ok &= gap <= 3.0 * se;
            if se > 0.0 {
                max_z = max_z.max(gap / se);
            }
            metrics.push(Metric::new(format!("d{order}p[{i}]"), est.values[i]));
            metrics.push(Metric::new(format!("d{order}se[{i}]"), se));
        }
    }
    let summary =
        format!("orders 0 and 1 at 5 points, max gap/se = {max_z:.2} (cap 3), {n_paths} paths");
    Ok(report(2, "ou-density", ok, summary, metrics, start))
}

/// Polynomial coefficient pool for the identity battery; every entry is
/// exactly representable so the rational twin is exact.
const POLY_POOL: [&[f64]; 6] = [
    &[1.0, 1.0],
    &[0.0, 1.0],
    &[2.0, -1.0],
    &[1.0, 0.0, 1.0],
    &[0.5, 1.0],
    &[0.0, 0.0, 1.0],
];

/// Canonical polynomial factors for identity verification: `len` factors
/// drawn from the fixed pool starting at `offset`, each paired with its
/// exact rational twin so callers can run the symbolic oracle on the same
/// inputs.
pub fn polynomial_factors(offset: usize, len: usize) -> (Vec<Factor1>, Vec<RatPoly>) {
    let nums = (0..len)
        .map(|i| poly_factor(POLY_POOL[(offset + i) % POLY_POOL.len()]))
        .collect();
    let rats = (0..len)
        .map(|i| RatPoly::from_f64_coeffs(POLY_POOL[(offset + i) % POLY_POOL.len()]).unwrap())
        .collect();
    (nums, rats)
}

/// Product and pinned shuffle identities for all word lengths `m + n <= 5`
/// and every pin `k <= m`, with polynomial factors: the rational oracle
/// residual must vanish (cap 1e-8) and the quadrature at `n_sub = 4000`
/// must track the oracle within its declared budget.
pub fn check_shuffle_identities() -> Result<CheckReport> {
    let start = Instant::now();
    let s_rat = BigRational::from_integer(0.into());
    let t_rat = BigRational::from_integer(1.into());
    let mut sym_max = 0.0f64;
    let mut num_max = 0.0f64;
    let mut side_ratio_max = 0.0f64;
    let mut ok = true;
    let mut cases = 0usize;
    for m in 0..=5usize {
        for n in 0..=(5 - m) {
            let (f_num, f_rat) = polynomial_factors(0, m);
            let (g_num, g_rat) = polynomial_factors(m, n);
            let mut handle = |chk: crate::shuffles::ShuffleCheck,
                              lhs_sym: BigRational,
                              rhs_sym: BigRational| {
                let exact = lhs_sym == rhs_sym;
                let sym_res = (lhs_sym.clone() - rhs_sym)
                    .to_f64()
                    .unwrap_or(f64::NAN)
                    .abs();
                sym_max = sym_max.max(sym_res);
                num_max = num_max.max(chk.residual);
                let target = lhs_sym.to_f64().unwrap_or(f64::NAN);
                let side_gap = (chk.lhs - target).abs().max((chk.rhs - target).abs());
                if chk.budget > 0.0 {
                    side_ratio_max = side_ratio_max.max(side_gap / chk.budget);
                }
                ok &= exact && sym_res <= 1e-8 && chk.pass() && side_gap <= chk.budget;
                cases += 1;
            };
            let chk = verify_shuffle_identity(&f_num, &g_num, 0.0, 1.0, 4000)?;
            let (ls, rs) = symbolic_shuffle_sides(&f_rat, &g_rat, &s_rat, &t_rat)?;
            handle(chk, ls, rs);
            for k in 0..=m {
                let chk2 = verify_shuffle2_identity(&f_num, &g_num, k, 0.0, 1.0, 4000)?;
                let (ls2, rs2) = symbolic_shuffle2_sides(&f_rat, &g_rat, k, &s_rat, &t_rat)?;
                handle(chk2, ls2, rs2);
            }
        }
    }
    let timely = start.elapsed().as_secs_f64() < 10.0;
    let summary = format!(
        "{cases} cases: oracle residual {sym_max:.1e} (cap 1e-8), quadrature residual {num_max:.1e} within budget"
    );
    let metrics = vec![
        Metric::new("symbolic-max-residual", sym_max),
        Metric::new("numeric-max-residual", num_max),
        Metric::new("side-gap-over-budget", side_ratio_max),
        Metric::new("cases", cases as f64),
    ];
    Ok(report(
        3,
        "shuffle-identities",
        ok && timely,
        summary,
        metrics,
        start,
    ))
}

/// Exact enumeration counts: `|S(m, n)| = C(m + n, m)` for `m + n <= 12`.
pub fn check_shuffle_counting() -> Result<CheckReport> {
    let start = Instant::now();
    let mut ok = true;
    let mut cases = 0usize;
    let mut largest = 0u128;
    for m in 0..=12usize {
        for n in 0..=(12 - m) {
            let set = enumerate_shuffles(m, n, ShuffleVariant::Plain)?;
            ok &= set.len() as u128 == binomial(m + n, m);
            largest = largest.max(set.len() as u128);
            cases += 1;
        }
    }
    let summary = format!("{cases} pairs, largest set {largest}, all counts match C(m+n, m)");
    let metrics = vec![
        Metric::new("cases", cases as f64),
        Metric::new("largest-set", largest as f64),
    ];
    Ok(report(4, "shuffle-counting", ok, summary, metrics, start))
}

/// Simplex moment bound for bump-factor words of length 1..6: the implied
/// per-factor constant `ratio_root = (lhs / rhs_core)^{1/m}` must stay
/// within a factor-2 band across `m`.
pub fn check_moment_bound_battery(
    n_paths: u64,
    n_sub: usize,
    master_seed: u64,
) -> Result<CheckReport> {
    let start = Instant::now();
    let mut metrics = Vec::new();
    let mut ratios = Vec::new();
    for m in 1..=6usize {
        let word = bound_word(m)?;
        let stat = check_moment_bound(&word, 0.0, 1.0, n_paths, n_sub, master_seed)?;
        ratios.push(stat.ratio_root);
        metrics.push(Metric::new(format!("ratio-root[{m}]"), stat.ratio_root));
        metrics.push(Metric::new(format!("lhs-se[{m}]"), stat.lhs_se));
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
    let band = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    metrics.push(Metric::new("band", band));
    let timely = start.elapsed().as_secs_f64() < 120.0;
    let ok = lo > 0.0 && band <= 2.0;
    let summary = format!(
        "ratio-root in [{lo:.3}, {hi:.3}], band {band:.3} (cap 2), {n_paths} paths per word"
    );
    Ok(report(
        5,
        "moment-bound",
        ok && timely,
        summary,
        metrics,
        start,
    ))
}

/// Variational flow against central finite differences for the softplus
/// drift, and against the exponential-of-integral form in one dimension.
pub fn check_flow_vs_fd(master_seed: u64) -> Result<CheckReport> {
    let start = Instant::now();
    let spec = DriftSpec::softplus(1)?;
    let n = 1024usize;
    let grid = TimeGrid::new(0.0, 1.0, n)?;
    let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(master_seed, 0))?;
    let x0 = 0.3;
    let eps = 1e-4;
    let sol = solve_forward(&spec, &[x0], &path)?;
    let jac = variational_flow(&spec, &sol, 0)?.terminal_jacobian()[(0, 0)];
    let up = solve_forward(&spec, &[x0 + eps], &path)?.terminal()[0];
    let dn = solve_forward(&spec, &[x0 - eps], &path)?.terminal()[0];
    let fd = (up - dn) / (2.0 * eps);
    let rel_fd = ((jac - fd) / fd).abs();
    let expo = d1_exponential_1d(&spec, &sol, 0, n)?;
    let rel_exp = ((jac - expo) / expo).abs();
    let ok = rel_fd <= 1e-3 && rel_exp <= 5.0 * grid.dt();
    let summary = format!(
        "fd gap {rel_fd:.1e} (cap 1e-3), exponential gap {rel_exp:.1e} (cap {:.1e})",
        5.0 * grid.dt()
    );
    let metrics = vec![
        Metric::new("jacobian", jac),
        Metric::new("fd-jacobian", fd),
        Metric::new("rel-fd-gap", rel_fd),
        Metric::new("exponential", expo),
        Metric::new("rel-exp-gap", rel_exp),
    ];
    Ok(report(6, "flow-jacobian", ok, summary, metrics, start))
}

/// Picard terms of the Ornstein-Uhlenbeck flow against `theta^m / m!`, with
/// monotonically decaying term-norm ratios that drop below one half.
pub fn check_picard_decay(master_seed: u64) -> Result<CheckReport> {
    let start = Instant::now();
    let theta = 1.0;
    let spec = DriftSpec::ou(1, theta)?;
    let n = 512usize;
    let grid = TimeGrid::new(0.0, 1.0, n)?;
    let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(master_seed, 0))?;
    let sol = solve_forward(&spec, &[0.5], &path)?;
    let order = 10usize;
    let series = picard_series(&spec, &sol, 0, order)?;
    let norms = series.term_norms();
    let mut ok = true;
    let mut max_rel = 0.0f64;
    let mut fact = 1.0f64;
    for m in 1..=order {
        fact *= m as f64;
        let exact = theta.powi(m as i32) / fact;
        let rel = (norms[m] - exact).abs() / exact;
        // The left-point term is C(n, m) dt^m, short of 1/m! by at most
        // m(m-1)/(2n) relative.
        let budget = (m * (m - 1)) as f64 / (2.0 * n as f64) * 1.2 + 1e-13;
        ok &= rel <= budget;
        max_rel = max_rel.max(rel);
    }
    let ratios: Vec<f64> = (0..order).map(|m| norms[m + 1] / norms[m]).collect();
    let monotone = ratios.windows(2).all(|w| w[1] < w[0]);
    let below_half = ratios[8] < 0.5;
    ok &= monotone && below_half;
    let summary = format!(
        "terms track theta^m/m! (max rel {max_rel:.1e}); ratios monotone, r[8] = {:.3} < 0.5",
        ratios[8]
    );
    let mut metrics: Vec<Metric> = norms
        .iter()
        .enumerate()
        .map(|(m, &v)| Metric::new(format!("term-norm[{m}]"), v))
        .collect();
    metrics.push(Metric::new("ratio[8]", ratios[8]));
    Ok(report(7, "picard-decay", ok, summary, metrics, start))
}

/// Length-`m` derivative word of very wide bump factors.  The width keeps
/// every factor close to its sup along typical Brownian paths, so the
/// per-factor level is nearly m-independent and the moment-bound ratio
/// isolates the Gamma-decay of the envelope instead of probe geometry.
pub fn bound_word(m: usize) -> Result<DerivativeWord> {
    DerivativeWord::new(bound_factors(m)?, vec![None; m])
}

/// The factor list behind [`bound_word`], for callers that want to attach
/// their own derivative multi-indices.
pub fn bound_factors(m: usize) -> Result<Vec<ProductBump>> {
    (0..m)
        .map(|i| ProductBump::isotropic(1, ScalarBump::new(0.1 * i as f64 - 0.25, 30.0, 1.0)?))
        .collect()
}

fn constant_drift(c: f64) -> Result<DriftSpec> {
    let b: Scalar1dFn = Arc::new(move |_t, _x| c);
    let z: Scalar1dFn = Arc::new(|_t, _x| 0.0);
    DriftSpec::custom_1d(2, c.abs().max(1e-9), vec![0.0, 0.0], vec![b, z.clone(), z])
}

/// Girsanov reweighting for a constant drift: direct and reweighted
/// estimates of `E[cos(X_T)]` agree, the weight mean is one, and the
/// `(1+eps)`-moment matches the lognormal closed form.
pub fn check_girsanov(n_paths: u64, master_seed: u64) -> Result<CheckReport> {
    let start = Instant::now();
    let c = 0.7;
    let x0 = 0.2;
    let spec = constant_drift(c)?;
    let grid = TimeGrid::new(0.0, 1.0, 256)?;
    let gap = mc_girsanov_gap(&spec, &[x0], &grid, n_paths, master_seed, |x| x[0].cos())?;
    let acc = par_fold_chunks(
        n_paths as usize,
        DEFAULT_CHUNK,
        Moments::default,
        |acc, i| {
            let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(master_seed, i as u64))?;
            acc.push(girsanov_weight(&spec, &[x0], &path)?.value);
            Ok(())
        },
        |a, b| a.merge(b),
    )?;
    let weight_mean = acc.mean();
    let weight_se = acc.std_error();
    let eps = 0.5;
    let mom = weight_moment_diagnostic(&spec, &[x0], &grid, eps, n_paths, master_seed)?;
    let closed = (0.5 * c * c * eps * (1.0 + eps)).exp();
    let estimators_ok = gap.consistent(3.0);
    let mean_ok = (weight_mean - 1.0).abs() <= 3.0 * weight_se;
    let moment_ok = (mom.moment - closed).abs() <= 3.0 * mom.std_error;
    let ok = estimators_ok && mean_ok && moment_ok;
    let summary = format!(
        "direct-reweighted gap {:.1e} ({:.2} se), weight mean {:.4}, moment gap {:.1e} ({:.2} se)",
        gap.diff.abs(),
        if gap.diff_se > 0.0 {
            gap.diff.abs() / gap.diff_se
        } else {
            0.0
        },
        weight_mean,
        (mom.moment - closed).abs(),
        if mom.std_error > 0.0 {
            (mom.moment - closed).abs() / mom.std_error
        } else {
            0.0
        },
    );
    let metrics = vec![
        Metric::new("direct", gap.direct),
        Metric::new("reweighted", gap.reweighted),
        Metric::new("diff", gap.diff),
        Metric::new("diff-se", gap.diff_se),
        Metric::new("weight-mean", weight_mean),
        Metric::new("weight-se", weight_se),
        Metric::new("moment", mom.moment),
        Metric::new("moment-se", mom.std_error),
        Metric::new("moment-closed", closed),
    ];
    Ok(report(8, "girsanov", ok, summary, metrics, start))
}

/// Relative budget constant for the Ornstein-Uhlenbeck covariance check:
/// the discrete covariance differs from the closed form by `O(dt)` per
/// unit of `p * theta`.
const OU_COVARIANCE_DT_FACTOR: f64 = 4.0;

/// Non-degeneracy of the Malliavin covariance: the Ornstein-Uhlenbeck
/// inverse powers match the closed form within `O(dt)`, and the relu
/// inverse moments are finite and stable under halving the sample.
pub fn check_nondegeneracy(relu_paths: usize, master_seed: u64) -> Result<CheckReport> {
    let start = Instant::now();
    let theta = 1.0;
    let n = 512usize;
    let grid = TimeGrid::new(0.0, 1.0, n)?;
    let spec = DriftSpec::ou(1, theta)?;
    let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(master_seed, 0))?;
    let sol = solve_forward(&spec, &[0.5], &path)?;
    let gamma = malliavin_covariance(&spec, &sol, n)?[(0, 0)];
    let closed = (1.0 - (-2.0 * theta).exp()) / (2.0 * theta);
    let mut ok = true;
    let mut metrics = Vec::new();
    let mut max_ou_rel = 0.0f64;
    for p in [1.0, 2.0, 4.0] {
        let rel = (gamma.powf(-p) - closed.powf(-p)).abs() / closed.powf(-p);
        let budget = OU_COVARIANCE_DT_FACTOR * p * theta * grid.dt();
        ok &= rel <= budget;
        max_ou_rel = max_ou_rel.max(rel);
        metrics.push(Metric::new(format!("ou-inv[{p}]"), gamma.powf(-p)));
    }
    let relu = DriftSpec::relu(1)?;
    let rgrid = TimeGrid::new(0.0, 1.0, 256)?;
    let rep = nondegeneracy_diagnostic(
        &relu,
        &[0.3],
        &rgrid,
        &[1.0, 2.0, 4.0],
        relu_paths,
        master_seed,
    )?;
    let mut worst_ratio = 1.0f64;
    for e in &rep.entries {
        let ratio = e.stability_ratio();
        ok &= e.estimate.is_finite() && (0.9..=1.1).contains(&ratio);
        if (ratio - 1.0).abs() > (worst_ratio - 1.0).abs() {
            worst_ratio = ratio;
        }
        metrics.push(Metric::new(format!("relu-inv[{}]", e.p), e.estimate));
        metrics.push(Metric::new(format!("relu-ratio[{}]", e.p), ratio));
    }
    let summary = format!(
        "ou inverse powers within {max_ou_rel:.1e} rel (O(dt) cap), relu stability ratio {worst_ratio:.3} in [0.9, 1.1]"
    );
    Ok(report(9, "nondegeneracy", ok, summary, metrics, start))
}

/// Transport solver diagnostics: the characteristics round trip stays
/// under its `10 dt (1+|x|) ||grad u0||` budget, the Ito residual decays
/// with empirical rate at least 0.4 under step halving, and the zero-drift
/// solution is an exact translation on the grid.
pub fn check_transport(master_seed: u64) -> Result<CheckReport> {
    let start = Instant::now();
    let spec = DriftSpec::softplus(1)?;
    let u0 = InitialDatum::gauss_bump(1, 0.2, 1.4, 1.0)?;
    let n = 512usize;
    let grid = TimeGrid::new(0.0, 1.0, n)?;
    let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(master_seed, 0))?;
    let mut ok = true;
    let mut max_gap = 0.0f64;
    let mut max_ratio = 0.0f64;
    for &x in &[-1.5, -0.5, 0.5, 1.5] {
        let z = solve_forward(&spec, &[x], &path)?.terminal()[0];
        let solu = solve_transport(&spec, &u0, &path, &[vec![z]], &[n])?;
        let gap = (solu.value(0, 0) - u0.value(&[x])).abs();
        let budget = 10.0 * grid.dt() * (1.0 + x.abs()) * u0.sup_gradient();
        ok &= gap <= budget;
        max_gap = max_gap.max(gap);
        if budget > 0.0 {
            max_ratio = max_ratio.max(gap / budget);
        }
    }
    // A single path's sup-residual slope is noisy; average the per-level
    // sups over a small ensemble before fitting the decay rate, and use a
    // smooth datum so the martingale part of the residual dominates.
    let ou = DriftSpec::ou(1, 1.3)?;
    let u0_rate = InitialDatum::gauss_bump(1, 0.2, 3.0, 1.0)?;
    let base = TimeGrid::new(0.0, 1.0, 64)?;
    let ensemble = 24usize;
    let levels = 5usize;
    let studies: Vec<Vec<(f64, f64)>> = {
        use rayon::prelude::*;
        (0..ensemble)
            .into_par_iter()
            .map(|s| {
                residual_rate_study(
                    &ou,
                    &u0_rate,
                    &[0.5],
                    &base,
                    levels,
                    &SeedSpec::new(master_seed, 100 + s as u64),
                )
            })
            .collect::<Result<_>>()?
    };
    let mean_points: Vec<(f64, f64)> = (0..levels)
        .map(|j| {
            let dt = studies[0][j].0;
            let mean = studies.iter().map(|pts| pts[j].1).sum::<f64>() / ensemble as f64;
            (dt, mean)
        })
        .collect();
    let rate = log2_rate(&mean_points);
    ok &= rate >= 0.4;
    let zero = DriftSpec::zero(1)?;
    let u0c = InitialDatum::cosine(1, 1.3, 1.0)?;
    let tgrid = TimeGrid::new(0.0, 1.0, 64)?;
    let tpath = BrownianPath::sample(&tgrid, 1, &SeedSpec::new(master_seed, 3))?;
    let nodes: Vec<usize> = (0..=64).collect();
    let x_probe = 0.7;
    let tsol = solve_transport(&zero, &u0c, &tpath, &[vec![x_probe]], &nodes)?;
    let mut translate_gap = 0.0f64;
    for (row, _) in nodes.iter().enumerate() {
        let shift = x_probe - tpath.value(row)[0];
        translate_gap = translate_gap.max((tsol.value(row, 0) - u0c.value(&[shift])).abs());
    }
    ok &= translate_gap <= 1e-12;
    let summary = format!(
        "round trip {max_ratio:.2} of budget, residual rate {rate:.2} (floor 0.4), translation gap {translate_gap:.1e}"
    );
    let metrics = vec![
        Metric::new("roundtrip-max-gap", max_gap),
        Metric::new("roundtrip-budget-frac", max_ratio),
        Metric::new("residual-rate", rate),
        Metric::new("translation-gap", translate_gap),
    ];
    Ok(report(10, "transport", ok, summary, metrics, start))
}

/// Lamperti reduction for `sigma = 2 + sin`: the direct multiplicative
/// chain and the mapped-back additive chain agree weakly on shared noise,
/// and the two density routes agree on the bulk interval.
pub fn check_lamperti(
    round_paths: usize,
    density_paths: usize,
    master_seed: u64,
) -> Result<CheckReport> {
    let start = Instant::now();
    let sigma = SigmaField::two_plus_sin();
    let map = build_map_1d(&sigma, 0.0, -25.0, 25.0)?;
    let b = DriftSpec::zero(1)?;
    let transformed = transform_drift(&map, &b, &sigma, 2)?;
    let grid = TimeGrid::new(0.0, 1.0, 256)?;
    let x0 = 0.4;
    let observables = [
        Observable::Cos,
        Observable::Bump(ScalarBump::new(0.4, 2.0, 1.0)?),
    ];
    let rep = roundtrip_check(
        &b,
        &sigma,
        &map,
        &transformed,
        x0,
        &grid,
        &observables,
        round_paths,
        master_seed,
    )?;
    let mut ok = true;
    let mut metrics = Vec::new();
    let mut worst_frac = 0.0f64;
    for e in &rep.entries {
        ok &= e.pass();
        if e.budget > 0.0 {
            worst_frac = worst_frac.max(e.diff_mean.abs() / e.budget);
        }
        metrics.push(Metric::new(format!("diff[{}]", e.name), e.diff_mean));
        metrics.push(Metric::new(format!("diff-se[{}]", e.name), e.diff_se));
    }
    let x_points: Vec<f64> = (0..21).map(|i| x0 - 2.0 + 0.2 * i as f64).collect();
    let drep = density_route_check(
        &b,
        &sigma,
        &map,
        &transformed,
        x0,
        &grid,
        &x_points,
        density_paths,
        master_seed,
    )?;
    ok &= drep.pass();
    metrics.push(Metric::new("density-sup-gap", drep.sup_gap));
    metrics.push(Metric::new("density-tolerance", drep.tolerance));
    let summary = format!(
        "weak gap at {worst_frac:.2} of budget over {} observables, density routes {:.1}% of peak apart (cap 5%)",
        rep.entries.len(),
        100.0 * drep.sup_gap / drep.peak.max(1e-300)
    );
    Ok(report(11, "lamperti", ok, summary, metrics, start))
}

/// The regularity gate: density work on a drift with only one bounded
/// derivative must refuse with a capability error citing `k >= 2`.
pub fn check_capability_gate() -> Result<CheckReport> {
    let start = Instant::now();
    let relu = DriftSpec::relu(1)?;
    let grid = TimeGrid::new(0.0, 1.0, 64)?;
    let gate = |order: usize| -> bool {
        matches!(
            estimate_density(&relu, 0.0, &grid, 1.0, &[0.0], order, 64, 1),
            Err(Error::Capability(msg)) if msg.contains("k >= 2")
        )
    };
    let ok = gate(1) && gate(0);
    let summary = if ok {
        "density orders 0 and 1 on a k = 1 drift refuse with a capability error citing k >= 2"
            .to_string()
    } else {
        "expected a capability error citing k >= 2, got something else".to_string()
    };
    Ok(report(12, "capability-gate", ok, summary, Vec::new(), start))
}

/// A compact battery of seeded Monte Carlo quantities used to probe
/// thread-count independence.
fn repro_battery(master_seed: u64) -> Result<Vec<Metric>> {
    let mut out = Vec::new();
    let zero = DriftSpec::zero(1)?;
    let g128 = TimeGrid::new(0.0, 1.0, 128)?;
    let est = estimate_density(
        &zero,
        0.0,
        &g128,
        1.0,
        &[-1.0, 0.0, 1.0],
        0,
        4_000,
        master_seed,
    )?;
    for (i, v) in est.values.iter().enumerate() {
        out.push(Metric::new(format!("density[{i}]"), *v));
    }
    let cdrift = constant_drift(0.7)?;
    let g64 = TimeGrid::new(0.0, 1.0, 64)?;
    let gap = mc_girsanov_gap(&cdrift, &[0.2], &g64, 4_000, master_seed, |x| x[0].cos())?;
    out.push(Metric::new("girsanov-direct", gap.direct));
    out.push(Metric::new("girsanov-reweighted", gap.reweighted));
    out.push(Metric::new("girsanov-diff", gap.diff));
    let word = bound_word(3)?;
    let stat = check_moment_bound(&word, 0.0, 1.0, 2_000, 64, master_seed)?;
    out.push(Metric::new("bound-lhs", stat.lhs));
    out.push(Metric::new("bound-ratio-root", stat.ratio_root));
    let sigma = SigmaField::two_plus_sin();
    let map = build_map_1d(&sigma, 0.0, -25.0, 25.0)?;
    let b = DriftSpec::zero(1)?;
    let transformed = transform_drift(&map, &b, &sigma, 2)?;
    let rep = roundtrip_check(
        &b,
        &sigma,
        &map,
        &transformed,
        0.4,
        &g64,
        &[Observable::Cos],
        2_000,
        master_seed,
    )?;
    out.push(Metric::new("lamperti-diff", rep.entries[0].diff_mean));
    let relu = DriftSpec::relu(1)?;
    let nd = nondegeneracy_diagnostic(&relu, &[0.3], &g64, &[2.0], 2_000, master_seed)?;
    out.push(Metric::new("nondeg-inv", nd.entries[0].estimate));
    Ok(out)
}

/// Runs the reproducibility battery in the ambient pool and in dedicated
/// pools of 2 and 5 workers; every reported number must agree across the
/// three runs to within [`REPRO_REL_TOL`] relative.
pub fn check_thread_invariance(master_seed: u64) -> Result<CheckReport> {
    let start = Instant::now();
    let ambient = repro_battery(master_seed)?;
    let mut max_rel = 0.0f64;
    let mut ok = true;
    for workers in [2usize, 5] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot build a {workers}-thread pool: {e}")))?;
        let other = pool.install(|| repro_battery(master_seed))?;
        if other.len() != ambient.len() {
            ok = false;
            continue;
        }
        for (a, b) in ambient.iter().zip(&other) {
            if a.label != b.label {
                ok = false;
                continue;
            }
            let scale = a.value.abs().max(b.value.abs());
            let gap = (a.value - b.value).abs();
            if gap > 0.0 {
                max_rel = max_rel.max(gap / scale.max(1e-300));
            }
            ok &= gap == 0.0 || gap <= REPRO_REL_TOL * scale;
        }
    }
    let mut metrics = ambient;
    metrics.push(Metric::new("max-rel-gap", max_rel));
    let summary = format!(
        "{} quantities agree across 2-, 5- and ambient-thread pools (max rel gap {max_rel:.1e})",
        metrics.len() - 1
    );
    Ok(report(13, "thread-invariance", ok, summary, metrics, start))
}

// ---------------------------------------------------------------------------
// Suite assembly, manifests, rerun comparison
// ---------------------------------------------------------------------------

/// Runs the full standard battery at the given size.
pub fn run_suite(name: SuiteName, master_seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let sz = Sizes::for_suite(name);
    let checks = vec![
        check_gaussian_density(sz.density_paths, sz.density_steps, master_seed)?,
        check_ou_density(sz.density_paths, sz.density_steps, master_seed)?,
        check_shuffle_identities()?,
        check_shuffle_counting()?,
        check_moment_bound_battery(sz.bound_paths, sz.bound_nsub, master_seed)?,
        check_flow_vs_fd(master_seed)?,
        check_picard_decay(master_seed)?,
        check_girsanov(sz.girsanov_paths, master_seed)?,
        check_nondegeneracy(sz.relu_paths, master_seed)?,
        check_transport(master_seed)?,
        check_lamperti(sz.lamperti_paths, sz.lamperti_density_paths, master_seed)?,
        check_capability_gate()?,
        check_thread_invariance(master_seed)?,
    ];
    Ok(SuiteReport {
        suite: name.to_string(),
        version: VERSION.to_string(),
        master_seed,
        threads: rayon::current_num_threads(),
        wall_ms: start.elapsed().as_millis() as u64,
        checks,
    })
}

/// Pass/fail line of one check inside a manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckLine {
    pub id: usize,
    pub name: String,
    pub pass: bool,
}

/// Snapshot of one tool invocation: enough to rerun it and to compare the
/// rerun against the recorded outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand or battery that produced the run.
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub threads: usize,
    pub wall_ms: u64,
    /// Serialized configuration of the run.
    pub config: serde_json::Value,
    pub checks: Vec<CheckLine>,
}

impl RunManifest {
    pub fn new(tool: &str, master_seed: u64, wall_ms: u64, config: serde_json::Value) -> Self {
        RunManifest {
            tool: tool.to_string(),
            version: VERSION.to_string(),
            master_seed,
            threads: rayon::current_num_threads(),
            wall_ms,
            config,
            checks: Vec::new(),
        }
    }

    /// Manifest of a suite run.
    pub fn for_suite(report: &SuiteReport) -> RunManifest {
        RunManifest {
            tool: "suite".to_string(),
            version: report.version.clone(),
            master_seed: report.master_seed,
            threads: report.threads,
            wall_ms: report.wall_ms,
            config: serde_json::json!({ "suite": report.suite }),
            checks: report
                .checks
                .iter()
                .map(|c| CheckLine {
                    id: c.id,
                    name: c.name.clone(),
                    pass: c.pass,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("manifest serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<RunManifest> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("bad manifest: {e}")))
    }
}

/// Reruns the suite recorded in a manifest with the recorded master seed.
pub fn rerun_from_manifest(manifest: &RunManifest) -> Result<SuiteReport> {
    if manifest.tool != "suite" {
        return Err(Error::invalid(format!(
            "manifest records a '{}' run, not a suite",
            manifest.tool
        )));
    }
    let name: SuiteName = manifest
        .config
        .get("suite")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::invalid("manifest config lacks a 'suite' field"))?
        .parse()?;
    run_suite(name, manifest.master_seed)
}

/// Compares every reported number (and every pass flag) of two suite runs;
/// the error message names the first mismatch.
pub fn reports_match(
    a: &SuiteReport,
    b: &SuiteReport,
    rel_tol: f64,
) -> std::result::Result<(), String> {
    if a.checks.len() != b.checks.len() {
        return Err(format!(
            "check counts differ: {} vs {}",
            a.checks.len(),
            b.checks.len()
        ));
    }
    for (ca, cb) in a.checks.iter().zip(&b.checks) {
        if ca.id != cb.id || ca.name != cb.name {
            return Err(format!("check '{}' paired with '{}'", ca.name, cb.name));
        }
        if ca.pass != cb.pass {
            return Err(format!(
                "check '{}' flipped: {} vs {}",
                ca.name, ca.pass, cb.pass
            ));
        }
        if ca.metrics.len() != cb.metrics.len() {
            return Err(format!(
                "check '{}' metric counts differ: {} vs {}",
                ca.name,
                ca.metrics.len(),
                cb.metrics.len()
            ));
        }
        for (ma, mb) in ca.metrics.iter().zip(&cb.metrics) {
            if ma.label != mb.label {
                return Err(format!(
                    "check '{}': metric '{}' paired with '{}'",
                    ca.name, ma.label, mb.label
                ));
            }
            if ma.value.to_bits() == mb.value.to_bits() {
                continue;
            }
            let gap = (ma.value - mb.value).abs();
            let scale = ma.value.abs().max(mb.value.abs());
            if !(gap <= rel_tol * scale) {
                return Err(format!(
                    "check '{}': metric '{}' differs: {} vs {}",
                    ca.name, ma.label, ma.value, mb.value
                ));
            }
        }
    }
    Ok(())
}
