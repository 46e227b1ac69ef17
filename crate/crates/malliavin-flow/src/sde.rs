//! Euler–Maruyama solutions of `dX = b(t, X) dt + dB` and Girsanov
//! reweighting along a fixed Brownian path.
//!
//! Additive noise makes the diffusion part of the scheme exact, so forward
//! stepping, backward (inverse-flow) stepping and the discrete change of
//! measure all share one grid and one set of increments.  Two exact discrete
//! identities anchor the module's tests:
//!
//! * every stored state satisfies the Euler update of its predecessor
//!   bit-for-bit (recomputing `x + dt b + dB` in the same order reproduces
//!   the stored value), and
//! * the reweighted estimator `E[f(x0 + B_T) W]` with the left-point
//!   discrete weight `W` has *exactly* the same expectation as
//!   `E[f(X_T)]` for the Euler chain `X`, because under the reweighted
//!   measure `x0 + B` is that chain in law.  The two Monte Carlo estimates
//!   therefore differ only by sampling noise, not by an `O(dt)` bias.

use ndarray::{Array2, ArrayView1};

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::paths::{BrownianPath, SeedSpec, TimeGrid};
use crate::util::{par_fold_chunks, Moments, DEFAULT_CHUNK};

/// A forward Euler solution stored at every grid node.
#[derive(Clone, Debug)]
pub struct SolutionPath {
    grid: TimeGrid,
    x0: Vec<f64>,
    /// Row `j` holds `X(t_j)`; shape `(n_steps + 1, d)`.
    states: Array2<f64>,
}

impl SolutionPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    /// `X(t_j)`.
    pub fn state(&self, j: usize) -> ArrayView1<'_, f64> {
        self.states.row(j)
    }

    pub fn states(&self) -> &Array2<f64> {
        &self.states
    }

    /// `X(T)`.
    pub fn terminal(&self) -> ArrayView1<'_, f64> {
        self.states.row(self.grid.n_steps())
    }

    /// Largest absolute defect of the stored states against a recomputed
    /// Euler update (same evaluation order); zero for any unmodified
    /// solution.
    pub fn euler_residual(&self, spec: &DriftSpec, path: &BrownianPath) -> f64 {
        let dt = self.grid.dt();
        let d = self.dim();
        let mut b = vec![0.0; d];
        let mut worst: f64 = 0.0;
        for j in 0..self.grid.n_steps() {
            let x = self.states.row(j);
            spec.eval_into(self.grid.node(j), x.as_slice().unwrap(), &mut b);
            let db = path.increment(j);
            for k in 0..d {
                let expected = x[k] + dt * b[k] + db[k];
                worst = worst.max((self.states[(j + 1, k)] - expected).abs());
            }
        }
        worst
    }
}

/// Euler states along `path` from `x_start` at node `from` to node `to`.
///
/// Returns a `(to - from + 1) x d` array whose row `i` is the state at node
/// `from + i`.  [`solve_forward`] delegates here, so restarting a solve
/// from one of its own intermediate states continues the identical
/// arithmetic sequence and reproduces the remaining states bit-for-bit —
/// the discrete flow property.
pub fn solve_forward_segment(
    spec: &DriftSpec,
    x_start: &[f64],
    path: &BrownianPath,
    from: usize,
    to: usize,
) -> Result<Array2<f64>> {
    let d = spec.dim();
    if x_start.len() != d || path.dim() != d {
        return Err(Error::invalid(format!(
            "dimension mismatch: drift {d}, state {}, path {}",
            x_start.len(),
            path.dim()
        )));
    }
    let n = path.grid().n_steps();
    if from > to || to > n {
        return Err(Error::OutOfRange(format!(
            "segment [{from}, {to}] not within 0..={n}"
        )));
    }
    let dt = path.grid().dt();
    let mut states = Array2::zeros((to - from + 1, d));
    for (k, &v) in x_start.iter().enumerate() {
        states[(0, k)] = v;
    }
    let mut b = vec![0.0; d];
    for j in from..to {
        let i = j - from;
        let x = states.row(i).to_owned();
        spec.eval_into(path.grid().node(j), x.as_slice().unwrap(), &mut b);
        let db = path.increment(j);
        let mut finite = true;
        for k in 0..d {
            let next = x[k] + dt * b[k] + db[k];
            finite &= next.is_finite();
            states[(i + 1, k)] = next;
        }
        if !finite {
            return Err(Error::NumericOverflow {
                step: j + 1,
                context: "forward Euler state left the finite range".into(),
            });
        }
    }
    Ok(states)
}

/// Forward Euler solution on the whole grid of `path`.
pub fn solve_forward(spec: &DriftSpec, x0: &[f64], path: &BrownianPath) -> Result<SolutionPath> {
    let states = solve_forward_segment(spec, x0, path, 0, path.grid().n_steps())?;
    Ok(SolutionPath {
        grid: path.grid().clone(),
        x0: x0.to_vec(),
        states,
    })
}

/// A backward (inverse-flow) solution from a terminal condition at node
/// `t_index` down to the initial time.
#[derive(Clone, Debug)]
pub struct BackwardPath {
    grid: TimeGrid,
    t_index: usize,
    /// Row `j` holds `z(t_j)` for `j = 0..=t_index`.
    states: Array2<f64>,
}

impl BackwardPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Node index of the terminal condition.
    pub fn t_index(&self) -> usize {
        self.t_index
    }

    /// `z(t_j)`, defined for `j <= t_index`.
    pub fn state(&self, j: usize) -> ArrayView1<'_, f64> {
        self.states.row(j)
    }

    /// `z(t_0)`, the inverse-flow image of the terminal point.
    pub fn initial(&self) -> ArrayView1<'_, f64> {
        self.states.row(0)
    }
}

/// Solves `z(t_j) = z(t_{j+1}) - b(t_{j+1}, z(t_{j+1})) dt - dB_j` downward
/// from `z(t_index) = x_terminal`, keeping every intermediate state.
///
/// Stepping the forward scheme and then this one along the same increments
/// returns to the start within `O(dt)`; the two schemes are not exact
/// inverses because each evaluates the drift at its own endpoint.
pub fn solve_backward_path(
    spec: &DriftSpec,
    x_terminal: &[f64],
    path: &BrownianPath,
    t_index: usize,
) -> Result<BackwardPath> {
    let d = spec.dim();
    if x_terminal.len() != d || path.dim() != d {
        return Err(Error::invalid(format!(
            "dimension mismatch: drift {d}, state {}, path {}",
            x_terminal.len(),
            path.dim()
        )));
    }
    let n = path.grid().n_steps();
    if t_index > n {
        return Err(Error::OutOfRange(format!(
            "terminal node {t_index} beyond grid end {n}"
        )));
    }
    let dt = path.grid().dt();
    let mut states = Array2::zeros((t_index + 1, d));
    for (k, &v) in x_terminal.iter().enumerate() {
        states[(t_index, k)] = v;
    }
    let mut b = vec![0.0; d];
    for j in (0..t_index).rev() {
        let z = states.row(j + 1).to_owned();
        spec.eval_into(path.grid().node(j + 1), z.as_slice().unwrap(), &mut b);
        let db = path.increment(j);
        let mut finite = true;
        for k in 0..d {
            let prev = z[k] - dt * b[k] - db[k];
            finite &= prev.is_finite();
            states[(j, k)] = prev;
        }
        if !finite {
            return Err(Error::NumericOverflow {
                step: j,
                context: "backward Euler state left the finite range".into(),
            });
        }
    }
    Ok(BackwardPath {
        grid: path.grid().clone(),
        t_index,
        states,
    })
}

/// Convenience wrapper returning only `z(t_0)`.
pub fn solve_backward(
    spec: &DriftSpec,
    x_terminal: &[f64],
    path: &BrownianPath,
    t_index: usize,
) -> Result<Vec<f64>> {
    Ok(solve_backward_path(spec, x_terminal, path, t_index)?
        .initial()
        .to_vec())
}

/// Doléans-Dade exponential of the discrete drift martingale along a path.
#[derive(Clone, Copy, Debug)]
pub struct GirsanovWeight {
    /// `exp(log_value)`; positive whenever `log_value` is finite.
    pub value: f64,
    /// Left-point Itô sum `sum_j b_j . dB_j - (1/2) sum_j |b_j|^2 dt` with
    /// `b_j = b(t_j, x0 + B(t_j))`.
    pub log_value: f64,
    /// Moment exponent the weight is being raised to in diagnostics; zero
    /// for a plain weight.
    pub eps: f64,
}

/// Discrete change-of-measure weight along `x0 + B`.
///
/// The left-point sum makes the weight a discrete-time martingale in the
/// number of steps: conditioning on the past, each factor
/// `exp(b_j . dB_j - |b_j|^2 dt / 2)` has mean one.
pub fn girsanov_weight(
    spec: &DriftSpec,
    x0: &[f64],
    path: &BrownianPath,
) -> Result<GirsanovWeight> {
    let d = spec.dim();
    if x0.len() != d || path.dim() != d {
        return Err(Error::invalid(format!(
            "dimension mismatch: drift {d}, state {}, path {}",
            x0.len(),
            path.dim()
        )));
    }
    let dt = path.grid().dt();
    let mut b = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut log_value = 0.0;
    for j in 0..path.grid().n_steps() {
        let bj = path.value(j);
        for k in 0..d {
            x[k] = x0[k] + bj[k];
        }
        spec.eval_into(path.grid().node(j), &x, &mut b);
        let db = path.increment(j);
        let mut dot = 0.0;
        let mut norm_sq = 0.0;
        for k in 0..d {
            dot += b[k] * db[k];
            norm_sq += b[k] * b[k];
        }
        log_value += dot - 0.5 * norm_sq * dt;
    }
    Ok(GirsanovWeight {
        value: log_value.exp(),
        log_value,
        eps: 0.0,
    })
}

/// Empirical `(1 + eps)`-moment of the Girsanov weight.
#[derive(Clone, Copy, Debug)]
pub struct WeightMomentReport {
    pub eps: f64,
    pub n_paths: u64,
    /// Mean of `W^(1+eps)` over all paths.
    pub moment: f64,
    pub std_error: f64,
    /// Same estimate from the first half of the paths; comparing it with
    /// `moment` probes stability under doubling the sample.
    pub moment_half: f64,
}

impl WeightMomentReport {
    /// Full-sample estimate over the half-sample estimate.
    pub fn half_ratio(&self) -> f64 {
        self.moment / self.moment_half
    }
}

/// Estimates `E[W^(1+eps)]` over `n_paths` seeded paths.
pub fn weight_moment_diagnostic(
    spec: &DriftSpec,
    x0: &[f64],
    grid: &TimeGrid,
    eps: f64,
    n_paths: u64,
    master_seed: u64,
) -> Result<WeightMomentReport> {
    if !(eps > 0.0) {
        return Err(Error::invalid("moment exponent eps must be positive"));
    }
    if n_paths < 2 {
        return Err(Error::invalid("need at least two paths"));
    }
    let half = n_paths / 2;
    let acc = par_fold_chunks(
        n_paths as usize,
        DEFAULT_CHUNK,
        || (Moments::default(), Moments::default()),
        |acc, i| {
            let path = BrownianPath::sample(grid, spec.dim(), &SeedSpec::new(master_seed, i as u64))?;
            let w = girsanov_weight(spec, x0, &path)?;
            let powered = ((1.0 + eps) * w.log_value).exp();
            acc.0.push(powered);
            if (i as u64) < half {
                acc.1.push(powered);
            }
            Ok(())
        },
        |a, b| {
            a.0.merge(b.0);
            a.1.merge(b.1);
        },
    )?;
    Ok(WeightMomentReport {
        eps,
        n_paths,
        moment: acc.0.mean(),
        std_error: acc.0.std_error(),
        moment_half: acc.1.mean(),
    })
}

/// Mean and standard error of `f(X_T)` over seeded Euler paths.
pub fn mc_terminal_mean<F>(
    spec: &DriftSpec,
    x0: &[f64],
    grid: &TimeGrid,
    n_paths: u64,
    master_seed: u64,
    f: F,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let acc = par_fold_chunks(
        n_paths as usize,
        DEFAULT_CHUNK,
        Moments::default,
        |acc, i| {
            let path = BrownianPath::sample(grid, spec.dim(), &SeedSpec::new(master_seed, i as u64))?;
            let sol = solve_forward(spec, x0, &path)?;
            acc.push(f(sol.terminal().as_slice().unwrap()));
            Ok(())
        },
        |a, b| a.merge(b),
    )?;
    Ok((acc.mean(), acc.std_error()))
}

/// Two estimates of `E[f(X_T)]` on common random numbers: the direct Euler
/// estimate and the Girsanov-reweighted Brownian estimate.
#[derive(Clone, Copy, Debug)]
pub struct GirsanovGapReport {
    pub direct: f64,
    pub direct_se: f64,
    pub reweighted: f64,
    pub reweighted_se: f64,
    /// Per-path difference `f(X_T) - f(x0 + B_T) W`; its mean is zero in
    /// expectation, so `|diff| <= 3 diff_se` is the consistency check.
    pub diff: f64,
    pub diff_se: f64,
}

impl GirsanovGapReport {
    /// Whether the two estimators agree within `z` standard errors of their
    /// per-path difference.
    pub fn consistent(&self, z: f64) -> bool {
        self.diff.abs() <= z * self.diff_se
    }
}

/// Runs both estimators of `E[f(X_T)]` on the same seeded paths.
pub fn mc_girsanov_gap<F>(
    spec: &DriftSpec,
    x0: &[f64],
    grid: &TimeGrid,
    n_paths: u64,
    master_seed: u64,
    f: F,
) -> Result<GirsanovGapReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = spec.dim();
    let acc = par_fold_chunks(
        n_paths as usize,
        DEFAULT_CHUNK,
        || (Moments::default(), Moments::default(), Moments::default()),
        |acc, i| {
            let path = BrownianPath::sample(grid, d, &SeedSpec::new(master_seed, i as u64))?;
            let sol = solve_forward(spec, x0, &path)?;
            let direct = f(sol.terminal().as_slice().unwrap());
            let w = girsanov_weight(spec, x0, &path)?;
            let shifted: Vec<f64> = path
                .terminal()
                .iter()
                .zip(x0)
                .map(|(b, x)| x + b)
                .collect();
            let reweighted = f(&shifted) * w.value;
            acc.0.push(direct);
            acc.1.push(reweighted);
            acc.2.push(direct - reweighted);
            Ok(())
        },
        |a, b| {
            a.0.merge(b.0);
            a.1.merge(b.1);
            a.2.merge(b.2);
        },
    )?;
    Ok(GirsanovGapReport {
        direct: acc.0.mean(),
        direct_se: acc.0.std_error(),
        reweighted: acc.1.mean(),
        reweighted_se: acc.1.std_error(),
        diff: acc.2.mean(),
        diff_se: acc.2.std_error(),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::drift::DriftSpec;
    use crate::paths::{BrownianPath, SeedSpec, TimeGrid};

    fn constant_drift(c: f64) -> DriftSpec {
        DriftSpec::custom_1d(
            1,
            c.abs().max(1e-12),
            vec![0.0],
            vec![Arc::new(move |_t, _x| c), Arc::new(|_t, _x| 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn zero_drift_translates_the_path() {
        let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let path = BrownianPath::sample(&grid, 2, &SeedSpec::new(7, 0)).unwrap();
        let spec = DriftSpec::zero(2).unwrap();

        let sol = solve_forward(&spec, &[0.0, 0.0], &path).unwrap();
        for j in 0..=64 {
            for k in 0..2 {
                assert_eq!(sol.states()[(j, k)], path.value(j)[k]);
            }
        }

        let sol = solve_forward(&spec, &[0.7, -0.3], &path).unwrap();
        for j in 0..=64 {
            for k in 0..2 {
                let expected = sol.x0()[k] + path.value(j)[k];
                assert!((sol.states()[(j, k)] - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn euler_identity_is_exact() {
        let grid = TimeGrid::new(0.0, 1.0, 128).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(11, 3)).unwrap();
        let spec = DriftSpec::softplus(1).unwrap();
        let sol = solve_forward(&spec, &[0.4], &path).unwrap();
        assert_eq!(sol.euler_residual(&spec, &path), 0.0);
    }

    #[test]
    fn relu_drift_inactive_below_zero() {
        let grid = TimeGrid::new(0.0, 0.25, 64).unwrap();
        let spec = DriftSpec::relu(1).unwrap();
        for path_index in 0..8 {
            let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(21, path_index)).unwrap();
            let sol = solve_forward(&spec, &[-5.0], &path).unwrap();
            for j in 0..=64 {
                let x = sol.states()[(j, 0)];
                assert!(x < 0.0, "path wandered across zero; pick another seed");
                assert!((x - (-5.0 + path.value(j)[0])).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn ou_strong_error_halves_with_dt() {
        // Exact exponential integrator on the same increments as the oracle:
        // x_{m+1} = exp(-theta dt) (x_m + dB_m).
        let theta = 1.0;
        let ou_oracle = |path: &BrownianPath, x0: f64| -> f64 {
            let q = (-theta * path.grid().dt()).exp();
            let mut x = x0;
            for j in 0..path.grid().n_steps() {
                x = q * (x + path.increment(j)[0]);
            }
            x
        };
        let spec = DriftSpec::ou(1, theta).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let n_paths = 2000;
        let mut sum_sq = [0.0f64; 3];
        for i in 0..n_paths {
            let seed = SeedSpec::new(0x5DE0, i);
            let mut path = BrownianPath::sample(&grid, 1, &seed).unwrap();
            for level in 0..3 {
                if level > 0 {
                    path = path.refine(&seed);
                }
                let euler = solve_forward(&spec, &[1.0], &path).unwrap();
                let err = euler.terminal()[0] - ou_oracle(&path, 1.0);
                sum_sq[level] += err * err;
            }
        }
        let rms: Vec<f64> = sum_sq.iter().map(|s| (s / n_paths as f64).sqrt()).collect();
        for level in 0..2 {
            let ratio = rms[level] / rms[level + 1];
            assert!(
                (1.6..=2.5).contains(&ratio),
                "rms errors {rms:?}, ratio {ratio} outside the halving band"
            );
        }
    }

    #[test]
    fn backward_inverts_forward_within_dt_budget() {
        let grid = TimeGrid::new(0.0, 1.0, 256).unwrap();
        let dt = grid.dt();
        for (spec, x0) in [
            (DriftSpec::ou(1, 1.0).unwrap(), 0.8),
            (DriftSpec::softplus(1).unwrap(), 0.4),
            (DriftSpec::relu(1).unwrap(), 0.4),
        ] {
            for path_index in 0..4 {
                let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(33, path_index)).unwrap();
                let sol = solve_forward(&spec, &[x0], &path).unwrap();
                let back =
                    solve_backward(&spec, sol.terminal().as_slice().unwrap(), &path, 256).unwrap();
                let budget = 10.0 * dt * (1.0 + x0.abs());
                assert!(
                    (back[0] - x0).abs() <= budget,
                    "round trip defect {} over budget {budget}",
                    (back[0] - x0).abs()
                );
            }
        }
    }

    #[test]
    fn backward_zero_drift_subtracts_the_path() {
        let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let path = BrownianPath::sample(&grid, 2, &SeedSpec::new(5, 1)).unwrap();
        let spec = DriftSpec::zero(2).unwrap();
        let z = solve_backward(&spec, &[0.3, -0.1], &path, 20).unwrap();
        for k in 0..2 {
            let expected = [0.3, -0.1][k] - path.value(20)[k];
            assert!((z[k] - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn backward_matches_ou_inverse_flow() {
        // For b = -theta x the inverse flow has the closed form
        // z(0) = e^{theta t} (x - sum_j e^{-theta (t - t_j)} dB_j) + O(dt).
        let theta = 1.0;
        let grid = TimeGrid::new(0.0, 1.0, 512).unwrap();
        let spec = DriftSpec::ou(1, theta).unwrap();
        let x_term = 0.6;
        for path_index in 0..4 {
            let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(99, path_index)).unwrap();
            let t = grid.t_end();
            let mut conv = 0.0;
            for j in 0..grid.n_steps() {
                conv += (-theta * (t - grid.node(j))).exp() * path.increment(j)[0];
            }
            let oracle = (theta * t).exp() * (x_term - conv);
            let z = solve_backward(&spec, &[x_term], &path, 512).unwrap();
            let budget = 30.0 * grid.dt() * (1.0 + oracle.abs());
            assert!(
                (z[0] - oracle).abs() <= budget,
                "backward vs closed form gap {} over budget {budget}",
                (z[0] - oracle).abs()
            );
        }
    }

    #[test]
    fn overflow_reports_the_step() {
        let spec = DriftSpec::custom_1d(
            1,
            1.0,
            vec![1.0],
            vec![
                Arc::new(|_t, x: f64| x * x * x),
                Arc::new(|_t, x: f64| 3.0 * x * x),
            ],
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(1, 1)).unwrap();
        match solve_forward(&spec, &[1e150], &path) {
            Err(Error::NumericOverflow { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected numeric overflow, got {other:?}"),
        }
    }

    #[test]
    fn constant_drift_weight_is_the_exponential_martingale() {
        let c = 0.8;
        let spec = constant_drift(c);
        let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(4, 9)).unwrap();
        let w = girsanov_weight(&spec, &[0.0], &path).unwrap();
        let expected = c * path.terminal()[0] - 0.5 * c * c * grid.t_end();
        assert!((w.log_value - expected).abs() < 1e-12);
        assert!((w.value - expected.exp()).abs() < 1e-12 * expected.exp());
        assert!(w.value > 0.0);

        // Empirical mean of the weight is 1 within 3 SE.
        let mut m = Moments::default();
        for i in 0..20_000 {
            let p = BrownianPath::sample(&grid, 1, &SeedSpec::new(0xABC, i)).unwrap();
            m.push(girsanov_weight(&spec, &[0.0], &p).unwrap().value);
        }
        assert!(
            (m.mean() - 1.0).abs() <= 3.0 * m.std_error(),
            "weight mean {} +- {}",
            m.mean(),
            m.std_error()
        );
    }

    #[test]
    fn zero_drift_weight_is_one() {
        let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let path = BrownianPath::sample(&grid, 3, &SeedSpec::new(2, 2)).unwrap();
        let w = girsanov_weight(&DriftSpec::zero(3).unwrap(), &[0.0; 3], &path).unwrap();
        assert_eq!(w.value, 1.0);
        assert_eq!(w.log_value, 0.0);
    }

    #[test]
    fn weight_moment_matches_lognormal_closed_form() {
        let c = 0.6;
        let eps = 0.25;
        let spec = constant_drift(c);
        let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let report = weight_moment_diagnostic(&spec, &[0.0], &grid, eps, 30_000, 0xFEED).unwrap();
        let closed = (eps * (1.0 + eps) * c * c * grid.t_end() / 2.0).exp();
        assert!(
            (report.moment - closed).abs() <= 3.0 * report.std_error,
            "moment {} +- {} vs closed form {closed}",
            report.moment,
            report.std_error
        );
        assert!((0.9..=1.1).contains(&report.half_ratio()));

        let zero = weight_moment_diagnostic(
            &DriftSpec::zero(1).unwrap(),
            &[0.0],
            &grid,
            0.1,
            1000,
            1,
        )
        .unwrap();
        assert_eq!(zero.moment, 1.0);
    }

    #[test]
    fn girsanov_reweighting_agrees_with_direct_simulation() {
        let spec = DriftSpec::ou(1, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 128).unwrap();
        let report = mc_girsanov_gap(&spec, &[0.3], &grid, 4000, 0xD00D, |x| x[0].cos()).unwrap();
        assert!(
            report.consistent(3.0),
            "direct {} vs reweighted {}: diff {} +- {}",
            report.direct,
            report.reweighted,
            report.diff,
            report.diff_se
        );
        // The difference channel must be tighter than either single-route SE
        // would suggest; otherwise common random numbers buy nothing.
        assert!(report.diff_se < report.direct_se + report.reweighted_se);
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let path = BrownianPath::sample(&grid, 2, &SeedSpec::new(0, 0)).unwrap();
        let spec = DriftSpec::zero(3).unwrap();
        assert!(solve_forward(&spec, &[0.0; 3], &path).is_err());
        assert!(solve_backward(&spec, &[0.0; 3], &path, 8).is_err());
        let spec2 = DriftSpec::zero(2).unwrap();
        assert!(solve_backward(&spec2, &[0.0; 2], &path, 9).is_err());
    }
}
