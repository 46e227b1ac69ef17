//! Pathwise transport equation driven by an additive Brownian signal.
//!
//! For drift `b` and a fixed driving path, the field `u(t, x) = u0(z)` is
//! obtained by running the characteristic backwards from `(t, x)` to time
//! zero, where `z` is the initial point of that characteristic.  The module
//! computes the field together with its spatial gradient (variational
//! equation along the backward characteristic) and Laplacian, and offers
//! three residual certificates for the solution:
//!
//! * [`ito_residual`] - the pathwise Ito form: the running sum
//!   `u(t, x) + sum b.grad u dt + sum grad u . dB - 1/2 sum lap u dt` must
//!   return to `u0(x)` at every node,
//! * [`stratonovich_residual`] - the midpoint form of the stochastic sum,
//!   which carries no Laplacian correction,
//! * [`weak_residual`] - the distributional form against a smooth compactly
//!   supported test function, with all derivatives moved onto the test
//!   function by integration by parts.
//!
//! Everything here is deterministic given the driving path; the x-points of
//! a field solve are independent and processed in parallel.

use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView1};
use rayon::prelude::*;

use crate::drift::{DriftSpec, ScalarBump};
use crate::error::{Error, Result};
use crate::paths::{BrownianPath, SeedSpec, TimeGrid};
use crate::sde::solve_backward_path;

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type HessianFn = Arc<dyn Fn(&[f64], &mut Array2<f64>) + Send + Sync>;

/// Initial condition `u0` for the transport equation, with evaluators for
/// the function, its gradient and (optionally) its Hessian, plus declared
/// sup norms.  Unbounded analytic probes (linear, quadratic) are admitted
/// but flagged, so range-preservation checks know to skip them.
#[derive(Clone)]
pub struct InitialDatum {
    dim: usize,
    value: ValueFn,
    gradient: GradientFn,
    hessian: Option<HessianFn>,
    sup_value: f64,
    sup_gradient: f64,
    sup_hessian: f64,
    bounded: bool,
}

impl InitialDatum {
    /// Assemble an initial condition from user evaluators.  `sup_*` are the
    /// declared sup norms (`f64::INFINITY` for unbounded probes).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        value: ValueFn,
        gradient: GradientFn,
        hessian: Option<HessianFn>,
        sup_value: f64,
        sup_gradient: f64,
        sup_hessian: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("initial datum dimension must be positive"));
        }
        for (name, s) in [
            ("value", sup_value),
            ("gradient", sup_gradient),
            ("hessian", sup_hessian),
        ] {
            if s.is_nan() || s < 0.0 {
                return Err(Error::invalid(format!(
                    "declared sup norm of the {name} must be nonnegative (or infinite)"
                )));
            }
        }
        let bounded = sup_value.is_finite();
        Ok(InitialDatum {
            dim,
            value,
            gradient,
            hessian,
            sup_value,
            sup_gradient,
            sup_hessian,
            bounded,
        })
    }

    /// Smooth compactly supported product bump: `height * prod_i psi(x_i)`
    /// where `psi` is the standard bump of the given width about `center`.
    pub fn gauss_bump(dim: usize, center: f64, width: f64, height: f64) -> Result<Self> {
        let profile = ScalarBump::new(center, width, 1.0)?;
        let d1_sup = profile.deriv_sup(1);
        let d2_sup = profile.deriv_sup(2);
        let value_profile = profile;
        let grad_profile = profile;
        let hess_profile = profile;
        let value: ValueFn = Arc::new(move |x: &[f64]| {
            height * x.iter().map(|&s| value_profile.value(s)).product::<f64>()
        });
        let gradient: GradientFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
            let vals: Vec<f64> = x.iter().map(|&s| grad_profile.value(s)).collect();
            for i in 0..x.len() {
                let mut g = height * grad_profile.deriv(1, x[i]);
                for (j, v) in vals.iter().enumerate() {
                    if j != i {
                        g *= v;
                    }
                }
                out[i] = g;
            }
        });
        let hessian: HessianFn = Arc::new(move |x: &[f64], out: &mut Array2<f64>| {
            let d = x.len();
            let vals: Vec<f64> = x.iter().map(|&s| hess_profile.value(s)).collect();
            let ders: Vec<f64> = x.iter().map(|&s| hess_profile.deriv(1, s)).collect();
            for i in 0..d {
                for j in 0..d {
                    let mut h = height;
                    if i == j {
                        h *= hess_profile.deriv(2, x[i]);
                    } else {
                        h *= ders[i] * ders[j];
                    }
                    for (k, v) in vals.iter().enumerate() {
                        if k != i && k != j {
                            h *= v;
                        }
                    }
                    out[(i, j)] = h;
                }
            }
        });
        let dimf = dim as f64;
        InitialDatum::new(
            dim,
            value,
            gradient,
            Some(hessian),
            height.abs(),
            height.abs() * d1_sup * dimf.sqrt(),
            height.abs() * dimf * d2_sup.max(d1_sup * d1_sup),
        )
    }

    /// Bounded oscillatory datum `height * cos(k (x_1 + ... + x_d))`.
    pub fn cosine(dim: usize, wavenumber: f64, height: f64) -> Result<Self> {
        if !wavenumber.is_finite() || !height.is_finite() {
            return Err(Error::invalid("cosine datum needs finite parameters"));
        }
        let k = wavenumber;
        let value: ValueFn = Arc::new(move |x: &[f64]| height * (k * x.iter().sum::<f64>()).cos());
        let gradient: GradientFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
            let s = (k * x.iter().sum::<f64>()).sin();
            for o in out.iter_mut() {
                *o = -height * k * s;
            }
        });
        let hessian: HessianFn = Arc::new(move |x: &[f64], out: &mut Array2<f64>| {
            let c = (k * x.iter().sum::<f64>()).cos();
            out.fill(-height * k * k * c);
        });
        let dimf = dim as f64;
        InitialDatum::new(
            dim,
            value,
            gradient,
            Some(hessian),
            height.abs(),
            height.abs() * k.abs() * dimf.sqrt(),
            height.abs() * k * k * dimf,
        )
    }

    /// Unbounded analytic probe `u0(x) = x_1 + ... + x_d` (gradient one,
    /// Hessian zero).  Range-preservation checks do not apply to it.
    pub fn linear_probe(dim: usize) -> Result<Self> {
        let value: ValueFn = Arc::new(|x: &[f64]| x.iter().sum());
        let gradient: GradientFn = Arc::new(|_x: &[f64], out: &mut [f64]| {
            for o in out.iter_mut() {
                *o = 1.0;
            }
        });
        let hessian: HessianFn = Arc::new(|_x: &[f64], out: &mut Array2<f64>| out.fill(0.0));
        InitialDatum::new(
            dim,
            value,
            gradient,
            Some(hessian),
            f64::INFINITY,
            (dim as f64).sqrt(),
            0.0,
        )
    }

    /// Unbounded analytic probe `u0(x) = |x|^2` whose Ito residual isolates
    /// the quadratic variation of the driving path.
    pub fn quadratic_probe(dim: usize) -> Result<Self> {
        let value: ValueFn = Arc::new(|x: &[f64]| x.iter().map(|&s| s * s).sum());
        let gradient: GradientFn = Arc::new(|x: &[f64], out: &mut [f64]| {
            for (o, &s) in out.iter_mut().zip(x) {
                *o = 2.0 * s;
            }
        });
        let hessian: HessianFn = Arc::new(|x: &[f64], out: &mut Array2<f64>| {
            out.fill(0.0);
            for i in 0..x.len() {
                out[(i, i)] = 2.0;
            }
        });
        InitialDatum::new(
            dim,
            value,
            gradient,
            Some(hessian),
            f64::INFINITY,
            f64::INFINITY,
            2.0,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether the declared sup norm of the datum itself is finite.
    pub fn bounded(&self) -> bool {
        self.bounded
    }

    pub fn sup_value(&self) -> f64 {
        self.sup_value
    }

    pub fn sup_gradient(&self) -> f64 {
        self.sup_gradient
    }

    pub fn sup_hessian(&self) -> f64 {
        self.sup_hessian
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }

    /// Hessian evaluator; an error of kind capability when the datum was
    /// built without one.
    pub fn hessian_into(&self, x: &[f64], out: &mut Array2<f64>) -> Result<()> {
        match &self.hessian {
            Some(h) => {
                h(x, out);
                Ok(())
            }
            None => Err(Error::Capability(
                "this initial datum declares no Hessian evaluator".into(),
            )),
        }
    }

    /// Worst centred-difference gap of the declared gradient (and Hessian,
    /// when present) at `x` with step `h`.  Smooth data should return gaps
    /// of order `h^2`.
    pub fn fd_gap(&self, x: &[f64], h: f64) -> (f64, Option<f64>) {
        let d = self.dim;
        let mut grad = vec![0.0; d];
        self.gradient_into(x, &mut grad);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        let mut grad_gap = 0.0f64;
        for i in 0..d {
            xp[i] = x[i] + h;
            xm[i] = x[i] - h;
            let fd = (self.value(&xp) - self.value(&xm)) / (2.0 * h);
            grad_gap = grad_gap.max((fd - grad[i]).abs());
            xp[i] = x[i];
            xm[i] = x[i];
        }
        let hess_gap = self.hessian.as_ref().map(|hess| {
            let mut hmat = Array2::zeros((d, d));
            hess(x, &mut hmat);
            let mut gp = vec![0.0; d];
            let mut gm = vec![0.0; d];
            let mut gap = 0.0f64;
            for i in 0..d {
                xp[i] = x[i] + h;
                xm[i] = x[i] - h;
                self.gradient_into(&xp, &mut gp);
                self.gradient_into(&xm, &mut gm);
                for j in 0..d {
                    let fd = (gp[j] - gm[j]) / (2.0 * h);
                    gap = gap.max((fd - hmat[(i, j)]).abs());
                }
                xp[i] = x[i];
                xm[i] = x[i];
            }
            gap
        });
        (grad_gap, hess_gap)
    }
}

/// Transported field sampled on a set of x-points at a set of grid nodes,
/// together with its gradient, its Laplacian when the drift is twice
/// differentiable, and the driving path that produced it.
#[derive(Clone, Debug)]
pub struct TransportSolution {
    grid: TimeGrid,
    t_nodes: Vec<usize>,
    x_points: Vec<Vec<f64>>,
    /// `values[(row, k)] = u(t_nodes[row], x_points[k])`.
    values: Array2<f64>,
    /// `gradients[(row, k, i)] = d u / d x_i` at the same sample.
    gradients: Array3<f64>,
    laplacians: Option<Array2<f64>>,
    path: BrownianPath,
}

impl TransportSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn t_nodes(&self) -> &[usize] {
        &self.t_nodes
    }

    pub fn x_points(&self) -> &[Vec<f64>] {
        &self.x_points
    }

    pub fn path(&self) -> &BrownianPath {
        &self.path
    }

    /// `u` at sample row `row` (indexing `t_nodes`) and x-point `k`.
    pub fn value(&self, row: usize, k: usize) -> f64 {
        self.values[(row, k)]
    }

    pub fn gradient(&self, row: usize, k: usize) -> ArrayView1<'_, f64> {
        self.gradients.slice(ndarray::s![row, k, ..])
    }

    pub fn laplacian(&self, row: usize, k: usize) -> Option<f64> {
        self.laplacians.as_ref().map(|l| l[(row, k)])
    }

    pub fn has_laplacian(&self) -> bool {
        self.laplacians.is_some()
    }

    /// Largest `|u|` over every stored sample.
    pub fn sup_value(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Value and chain-rule gradient of the field at one `(t, x)` sample: one
/// backward characteristic solve plus the backward variational recursion
/// `Z_j = (I - dt b'(t_{j+1}, z_{j+1})) Z_{j+1}` started from the identity.
fn value_and_gradient(
    spec: &DriftSpec,
    u0: &InitialDatum,
    path: &BrownianPath,
    x: &[f64],
    t_index: usize,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let d = spec.dim();
    let dt = path.grid().dt();
    let bw = solve_backward_path(spec, x, path, t_index)?;
    let z0 = bw.initial().to_vec();
    let u = u0.value(&z0);
    let mut z_jac = Array2::eye(d);
    let mut db = Array2::zeros((d, d));
    let mut factor = Array2::zeros((d, d));
    for j in (0..t_index).rev() {
        let z = bw.state(j + 1).to_vec();
        spec.d1_into(path.grid().node(j + 1), &z, &mut db);
        for i in 0..d {
            for k in 0..d {
                factor[(i, k)] = if i == k { 1.0 } else { 0.0 } - dt * db[(i, k)];
            }
        }
        z_jac = factor.dot(&z_jac);
    }
    let mut g0 = vec![0.0; d];
    u0.gradient_into(&z0, &mut g0);
    let mut grad = vec![0.0; d];
    for i in 0..d {
        let mut acc = 0.0;
        for (a, &g) in g0.iter().enumerate() {
            acc += z_jac[(a, i)] * g;
        }
        grad[i] = acc;
    }
    Ok((u, grad, z0))
}

/// Scalar-case Laplacian through the exact second derivative of the
/// backward characteristic: alongside `z' = (1 - dt b') z'` one runs
/// `z'' = -dt b'' z'^2 + (1 - dt b') z''` and applies the chain rule with
/// the datum's own Hessian.
fn laplacian_exact_1d(
    spec: &DriftSpec,
    u0: &InitialDatum,
    path: &BrownianPath,
    x: f64,
    t_index: usize,
) -> Result<f64> {
    let dt = path.grid().dt();
    let bw = solve_backward_path(spec, &[x], path, t_index)?;
    let z0 = bw.initial()[0];
    let mut zp = 1.0f64;
    let mut zpp = 0.0f64;
    for j in (0..t_index).rev() {
        let z = bw.state(j + 1)[0];
        let t = path.grid().node(j + 1);
        let b1 = spec.deriv_1d(1, t, z);
        let b2 = spec.deriv_1d(2, t, z);
        zpp = -dt * b2 * zp * zp + (1.0 - dt * b1) * zpp;
        zp = (1.0 - dt * b1) * zp;
    }
    let mut grad = [0.0f64];
    u0.gradient_into(&[z0], &mut grad);
    let mut hess = Array2::zeros((1, 1));
    u0.hessian_into(&[z0], &mut hess)?;
    Ok(hess[(0, 0)] * zp * zp + grad[0] * zpp)
}

/// Laplacian via centred differences of the chain-rule gradient, one
/// coordinate at a time.  Needs only first derivatives of drift and datum,
/// at the price of `2 d` extra backward solves.
fn laplacian_fd(
    spec: &DriftSpec,
    u0: &InitialDatum,
    path: &BrownianPath,
    x: &[f64],
    t_index: usize,
) -> Result<f64> {
    let d = spec.dim();
    let mut lap = 0.0;
    let mut xs = x.to_vec();
    for i in 0..d {
        let h = 1e-4 * (1.0 + x[i].abs());
        xs[i] = x[i] + h;
        let (_, gp, _) = value_and_gradient(spec, u0, path, &xs, t_index)?;
        xs[i] = x[i] - h;
        let (_, gm, _) = value_and_gradient(spec, u0, path, &xs, t_index)?;
        xs[i] = x[i];
        lap += (gp[i] - gm[i]) / (2.0 * h);
    }
    Ok(lap)
}

struct Column {
    values: Vec<f64>,
    gradients: Vec<Vec<f64>>,
    laplacians: Vec<f64>,
}

/// Solve the transport equation along one driving path.
///
/// The field is sampled at every pair from `t_nodes` (grid node indices)
/// and `x_points`.  Requires a drift with at least one bounded derivative;
/// the Laplacian channel is filled exactly when the drift declares two,
/// through the exact scalar recursion when `d = 1` and the datum carries a
/// Hessian, and through centred differences of the gradient otherwise.
pub fn solve_transport(
    spec: &DriftSpec,
    u0: &InitialDatum,
    path: &BrownianPath,
    x_points: &[Vec<f64>],
    t_nodes: &[usize],
) -> Result<TransportSolution> {
    let d = spec.dim();
    if u0.dim() != d || path.dim() != d {
        return Err(Error::invalid(format!(
            "dimension mismatch: drift {d}, datum {}, path {}",
            u0.dim(),
            path.dim()
        )));
    }
    if spec.smoothness() < 1 {
        return Err(Error::Capability(
            "transport needs a drift with at least k >= 1 bounded derivative".into(),
        ));
    }
    if x_points.is_empty() || t_nodes.is_empty() {
        return Err(Error::invalid(
            "transport needs at least one x-point and one time node",
        ));
    }
    let n = path.grid().n_steps();
    for &t in t_nodes {
        if t > n {
            return Err(Error::OutOfRange(format!(
                "time node {t} beyond grid end {n}"
            )));
        }
    }
    for x in x_points {
        if x.len() != d {
            return Err(Error::invalid(format!(
                "x-point of length {} in dimension {d}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x-points must be finite"));
        }
    }
    let want_lap = spec.smoothness() >= 2;
    let columns: Vec<Result<Column>> = x_points
        .par_iter()
        .map(|x| {
            let mut col = Column {
                values: Vec::with_capacity(t_nodes.len()),
                gradients: Vec::with_capacity(t_nodes.len()),
                laplacians: Vec::new(),
            };
            for &t in t_nodes {
                let (u, grad, _) = value_and_gradient(spec, u0, path, x, t)?;
                col.values.push(u);
                col.gradients.push(grad);
                if want_lap {
                    let lap = if d == 1 && u0.has_hessian() {
                        laplacian_exact_1d(spec, u0, path, x[0], t)?
                    } else {
                        laplacian_fd(spec, u0, path, x, t)?
                    };
                    col.laplacians.push(lap);
                }
            }
            Ok(col)
        })
        .collect();
    let n_rows = t_nodes.len();
    let n_x = x_points.len();
    let mut values = Array2::zeros((n_rows, n_x));
    let mut gradients = Array3::zeros((n_rows, n_x, d));
    let mut laplacians = want_lap.then(|| Array2::zeros((n_rows, n_x)));
    for (k, col) in columns.into_iter().enumerate() {
        let col = col?;
        for row in 0..n_rows {
            values[(row, k)] = col.values[row];
            for i in 0..d {
                gradients[(row, k, i)] = col.gradients[row][i];
            }
            if let Some(l) = laplacians.as_mut() {
                l[(row, k)] = col.laplacians[row];
            }
        }
    }
    Ok(TransportSolution {
        grid: path.grid().clone(),
        t_nodes: t_nodes.to_vec(),
        x_points: x_points.to_vec(),
        values,
        gradients,
        laplacians,
        path: path.clone(),
    })
}

/// One residual per grid node; `values[j]` belongs to node `nodes[j]`.
#[derive(Clone, Debug)]
pub struct ResidualSeries {
    nodes: Vec<usize>,
    values: Vec<f64>,
}

impl ResidualSeries {
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest absolute residual over the series.
    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn require_full_series(sol: &TransportSolution) -> Result<()> {
    let n = sol.grid().n_steps();
    let ok = sol.t_nodes().len() == n + 1 && sol.t_nodes().iter().enumerate().all(|(j, &t)| t == j);
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(
            "residual series needs the solution sampled at every grid node in order",
        ))
    }
}

fn check_residual_args(sol: &TransportSolution, spec: &DriftSpec, x_index: usize) -> Result<()> {
    if spec.dim() != sol.path().dim() {
        return Err(Error::invalid("drift and solution dimensions differ"));
    }
    if x_index >= sol.x_points().len() {
        return Err(Error::OutOfRange(format!(
            "x-point index {x_index} beyond the {} stored columns",
            sol.x_points().len()
        )));
    }
    require_full_series(sol)
}

/// Pathwise Ito residual of the transported field at a stored x-point.
///
/// `R(t_j) = u(t_j, x) + sum_{i<j} b(t_i, x).grad u(t_i, x) dt
///         + sum_{i<j} grad u(t_i, x).dB_i - 1/2 sum_{i<j} lap u(t_i, x) dt
///         - u(0, x)`.
///
/// For the exact field the running sums reconstruct the initial value, so
/// the series measures pure discretisation error; it vanishes identically
/// for a linear datum under zero drift and reduces to the compensated
/// quadratic variation `sum (dB_i^2 - dt)` for the quadratic probe.
pub fn ito_residual(
    sol: &TransportSolution,
    spec: &DriftSpec,
    x_index: usize,
) -> Result<ResidualSeries> {
    check_residual_args(sol, spec, x_index)?;
    if !sol.has_laplacian() {
        return Err(Error::Capability(format!(
            "the Ito residual needs the Laplacian channel, which requires k >= 2 bounded drift \
             derivatives; the drift declares k = {}",
            spec.smoothness()
        )));
    }
    let n = sol.grid().n_steps();
    let dt = sol.grid().dt();
    let d = spec.dim();
    let x = sol.x_points()[x_index].clone();
    let u0_at_x = sol.value(0, x_index);
    let mut b = vec![0.0; d];
    let mut running = 0.0f64;
    let mut nodes = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    nodes.push(0);
    values.push(0.0);
    for i in 0..n {
        let grad = sol.gradient(i, x_index);
        spec.eval_into(sol.grid().node(i), &x, &mut b);
        let mut drift_dot = 0.0;
        let mut stoch_dot = 0.0;
        let db = sol.path().increment(i);
        for a in 0..d {
            drift_dot += b[a] * grad[a];
            stoch_dot += grad[a] * db[a];
        }
        let lap = sol.laplacian(i, x_index).unwrap_or(0.0);
        running += drift_dot * dt + stoch_dot - 0.5 * lap * dt;
        nodes.push(i + 1);
        values.push(sol.value(i + 1, x_index) + running - u0_at_x);
    }
    Ok(ResidualSeries { nodes, values })
}

/// Stratonovich residual: the stochastic sum uses the midpoint rule
/// `1/2 (grad u(t_i) + grad u(t_{i+1})) . dB_i` and carries no Laplacian
/// correction.  For the quadratic probe under zero drift the sum
/// telescopes, so the residual sits at machine precision.
pub fn stratonovich_residual(
    sol: &TransportSolution,
    spec: &DriftSpec,
    x_index: usize,
) -> Result<ResidualSeries> {
    check_residual_args(sol, spec, x_index)?;
    let n = sol.grid().n_steps();
    let dt = sol.grid().dt();
    let d = spec.dim();
    let x = sol.x_points()[x_index].clone();
    let u0_at_x = sol.value(0, x_index);
    let mut b = vec![0.0; d];
    let mut running = 0.0f64;
    let mut nodes = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    nodes.push(0);
    values.push(0.0);
    for i in 0..n {
        let grad_l = sol.gradient(i, x_index);
        let grad_r = sol.gradient(i + 1, x_index);
        spec.eval_into(sol.grid().node(i), &x, &mut b);
        let db = sol.path().increment(i);
        let mut drift_dot = 0.0;
        let mut stoch_dot = 0.0;
        for a in 0..d {
            drift_dot += b[a] * grad_l[a];
            stoch_dot += 0.5 * (grad_l[a] + grad_r[a]) * db[a];
        }
        running += drift_dot * dt + stoch_dot;
        nodes.push(i + 1);
        values.push(sol.value(i + 1, x_index) + running - u0_at_x);
    }
    Ok(ResidualSeries { nodes, values })
}

/// Weak-form residual against a smooth compactly supported test function.
///
/// All derivatives are moved onto the test function:
/// `R(t_j) = <u(t_j), theta> - <u(0), theta>
///         - sum_{i<j} <u(t_i), b(t_i, .) theta' + div b(t_i, .) theta> dt
///         - sum_{i<j} <u(t_i), theta'> dB_i - 1/2 sum_{i<j} <u(t_i), theta''> dt`,
/// with `<., .>` the trapezoid quadrature over the stored x-grid.  Scalar
/// state only; the x-points must form a uniform ascending grid whose box
/// covers the support of `theta`, otherwise the call reports a domain
/// error.
pub fn weak_residual(
    sol: &TransportSolution,
    spec: &DriftSpec,
    theta: &ScalarBump,
) -> Result<ResidualSeries> {
    if spec.dim() != 1 || sol.path().dim() != 1 {
        return Err(Error::Capability(
            "the weak residual is implemented for scalar state".into(),
        ));
    }
    require_full_series(sol)?;
    let xs: Vec<f64> = sol.x_points().iter().map(|p| p[0]).collect();
    if xs.len() < 2 {
        return Err(Error::invalid(
            "weak residual needs at least two quadrature points",
        ));
    }
    let h = xs[1] - xs[0];
    if !(h > 0.0) {
        return Err(Error::invalid("quadrature points must be ascending"));
    }
    for w in xs.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(Error::invalid(
                "weak residual needs a uniform quadrature grid",
            ));
        }
    }
    let lo = theta.center - theta.width;
    let hi = theta.center + theta.width;
    let slack = 1e-12 * (1.0 + h);
    if xs[0] > lo + slack || xs[xs.len() - 1] < hi - slack {
        return Err(Error::Domain(format!(
            "quadrature box [{}, {}] does not cover the test-function support [{lo}, {hi}]",
            xs[0],
            xs[xs.len() - 1]
        )));
    }
    let n = sol.grid().n_steps();
    let dt = sol.grid().dt();
    let n_x = xs.len();
    let weight = |k: usize| {
        if k == 0 || k == n_x - 1 {
            0.5 * h
        } else {
            h
        }
    };
    let th: Vec<f64> = xs.iter().map(|&x| theta.value(x)).collect();
    let th1: Vec<f64> = xs.iter().map(|&x| theta.deriv(1, x)).collect();
    let th2: Vec<f64> = xs.iter().map(|&x| theta.deriv(2, x)).collect();
    // Per-node quadratures: pairing with theta, with the transported test
    // function b theta' + div b theta, with theta', and with theta''.
    let mut pair = vec![0.0; n + 1];
    let mut drift_pair = vec![0.0; n + 1];
    let mut stoch_pair = vec![0.0; n + 1];
    let mut lap_pair = vec![0.0; n + 1];
    let mut bvec = [0.0f64];
    for j in 0..=n {
        let t = sol.grid().node(j);
        let mut a = 0.0;
        let mut p = 0.0;
        let mut s = 0.0;
        let mut l = 0.0;
        for (k, &x) in xs.iter().enumerate() {
            let w = weight(k) * sol.value(j, k);
            a += w * th[k];
            spec.eval_into(t, &[x], &mut bvec);
            let divb = spec.divergence(t, &[x]);
            p += w * (bvec[0] * th1[k] + divb * th[k]);
            s += w * th1[k];
            l += w * th2[k];
        }
        pair[j] = a;
        drift_pair[j] = p;
        stoch_pair[j] = s;
        lap_pair[j] = l;
    }
    let mut nodes = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    nodes.push(0);
    values.push(0.0);
    let mut running = 0.0f64;
    for i in 0..n {
        let db = sol.path().increment(i)[0];
        running += (drift_pair[i] + 0.5 * lap_pair[i]) * dt + stoch_pair[i] * db;
        nodes.push(i + 1);
        values.push(pair[i + 1] - pair[0] - running);
    }
    Ok(ResidualSeries { nodes, values })
}

/// Sup of the Ito residual for one path, datum and x-point, with the field
/// solved at every grid node.
pub fn sup_ito_residual(
    spec: &DriftSpec,
    u0: &InitialDatum,
    path: &BrownianPath,
    x: &[f64],
) -> Result<f64> {
    let nodes: Vec<usize> = (0..=path.grid().n_steps()).collect();
    let sol = solve_transport(spec, u0, path, &[x.to_vec()], &nodes)?;
    Ok(ito_residual(&sol, spec, 0)?.sup())
}

/// Sup Ito residual across dyadic refinements of one driving path.  Each
/// level halves the step and extends the same path by Brownian-bridge
/// midpoints, so the reported decay isolates the discretisation error.
/// Returns `(dt, sup residual)` per level, coarsest first.
pub fn residual_rate_study(
    spec: &DriftSpec,
    u0: &InitialDatum,
    x: &[f64],
    grid: &TimeGrid,
    levels: usize,
    seed: &SeedSpec,
) -> Result<Vec<(f64, f64)>> {
    if levels == 0 {
        return Err(Error::invalid("rate study needs at least one level"));
    }
    let mut path = BrownianPath::sample(grid, spec.dim(), seed)?;
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        out.push((path.grid().dt(), sup_ito_residual(spec, u0, &path, x)?));
        if level + 1 < levels {
            path = path.refine(seed);
        }
    }
    Ok(out)
}

/// Least-squares slope of `log2(err)` against `log2(dt)` for a refinement
/// table; an order-one method reports a value near one.  Levels with zero
/// error are skipped.
pub fn log2_rate(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(dt, err)| dt > 0.0 && err > 0.0)
        .map(|&(dt, err)| (dt.log2(), err.log2()))
        .collect();
    if logs.len() < 2 {
        return 0.0;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in logs {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{BrownianPath, SeedSpec, TimeGrid};
    use crate::sde::solve_forward;

    fn all_nodes(grid: &TimeGrid) -> Vec<usize> {
        (0..=grid.n_steps()).collect()
    }

    #[test]
    fn initial_data_report_small_fd_gaps() {
        let cases: Vec<InitialDatum> = vec![
            InitialDatum::gauss_bump(1, 0.0, 1.5, 0.8).unwrap(),
            InitialDatum::gauss_bump(2, 0.3, 2.0, 1.0).unwrap(),
            InitialDatum::cosine(2, 1.7, 0.9).unwrap(),
            InitialDatum::quadratic_probe(2).unwrap(),
        ];
        for u0 in cases {
            let x: Vec<f64> = (0..u0.dim()).map(|i| 0.2 + 0.1 * i as f64).collect();
            let (grad_gap, hess_gap) = u0.fd_gap(&x, 1e-5);
            assert!(grad_gap < 1e-5, "gradient fd gap {grad_gap}");
            let hess_gap = hess_gap.expect("built-in data declare Hessians");
            assert!(hess_gap < 1e-4, "hessian fd gap {hess_gap}");
        }
    }

    #[test]
    fn datum_validation_rejects_bad_bounds() {
        let value: ValueFn = Arc::new(|_x: &[f64]| 0.0);
        let gradient: GradientFn = Arc::new(|_x: &[f64], _g: &mut [f64]| {});
        assert!(matches!(
            InitialDatum::new(1, value.clone(), gradient.clone(), None, -1.0, 0.0, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        let datum = InitialDatum::new(1, value, gradient, None, 1.0, 1.0, 1.0).unwrap();
        assert!(datum.bounded());
        assert!(!datum.has_hessian());
        let mut h = Array2::zeros((1, 1));
        assert!(matches!(
            datum.hessian_into(&[0.0], &mut h),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn zero_drift_transports_by_translation() {
        let spec = DriftSpec::zero(1).unwrap();
        let u0 = InitialDatum::gauss_bump(1, 0.0, 2.0, 1.3).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(41, 7)).unwrap();
        let xs = vec![vec![-1.0], vec![-0.3], vec![0.7]];
        let nodes = vec![0usize, 17, 64];
        let sol = solve_transport(&spec, &u0, &path, &xs, &nodes).unwrap();
        for (row, &t) in nodes.iter().enumerate() {
            let bt = path.value(t)[0];
            for (k, x) in xs.iter().enumerate() {
                let expected = u0.value(&[x[0] - bt]);
                assert!(
                    (sol.value(row, k) - expected).abs() <= 1e-12,
                    "translation gap at node {t}"
                );
                let mut g = [0.0f64];
                u0.gradient_into(&[x[0] - bt], &mut g);
                assert!((sol.gradient(row, k)[0] - g[0]).abs() <= 1e-10);
                let expected_lap = {
                    let mut h = Array2::zeros((1, 1));
                    u0.hessian_into(&[x[0] - bt], &mut h).unwrap();
                    h[(0, 0)]
                };
                assert!((sol.laplacian(row, k).unwrap() - expected_lap).abs() <= 1e-9);
            }
        }
        // Time zero is the datum itself, exactly, and the bounded datum's
        // range is preserved.
        for (k, x) in xs.iter().enumerate() {
            assert_eq!(sol.value(0, k), u0.value(x));
        }
        assert!(sol.sup_value() <= u0.sup_value() + 1e-15);
    }

    #[test]
    fn round_trip_through_the_forward_flow_recovers_the_datum() {
        let spec = DriftSpec::softplus(1).unwrap();
        let u0 = InitialDatum::gauss_bump(1, 0.5, 2.5, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 256).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(55, 3)).unwrap();
        let x0 = [0.4f64];
        let fwd = solve_forward(&spec, &x0, &path).unwrap();
        for &t in &[64usize, 192, 256] {
            let xt = fwd.state(t).to_vec();
            let sol = solve_transport(&spec, &u0, &path, &[xt], &[t]).unwrap();
            let budget = 10.0 * grid.dt() * (1.0 + x0[0].abs()) * u0.sup_gradient();
            let gap = (sol.value(0, 0) - u0.value(&x0)).abs();
            assert!(gap <= budget, "round trip gap {gap} over budget {budget}");
        }
    }

    #[test]
    fn ou_field_matches_the_stochastic_convolution() {
        let theta = 1.3;
        let spec = DriftSpec::ou(1, theta).unwrap();
        let u0 = InitialDatum::gauss_bump(1, 0.0, 3.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 512).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(23, 11)).unwrap();
        let t = grid.t_end();
        let x = 0.8f64;
        let mut conv = 0.0;
        for j in 0..grid.n_steps() {
            conv += (-theta * (t - grid.node(j))).exp() * path.increment(j)[0];
        }
        let z_oracle = (theta * t).exp() * (x - conv);
        let sol = solve_transport(&spec, &u0, &path, &[vec![x]], &[512]).unwrap();
        let budget = u0.sup_gradient() * 30.0 * grid.dt() * (1.0 + z_oracle.abs());
        let gap = (sol.value(0, 0) - u0.value(&[z_oracle])).abs();
        assert!(gap <= budget, "field gap {gap} over budget {budget}");
    }

    #[test]
    fn chain_rule_gradient_matches_finite_differences_of_the_field() {
        let grid = TimeGrid::new(0.0, 1.0, 128).unwrap();
        // Scalar drift.
        let spec = DriftSpec::softplus(1).unwrap();
        let u0 = InitialDatum::gauss_bump(1, 0.0, 2.0, 1.0).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(17, 1)).unwrap();
        let x = 0.3f64;
        let h = 1e-5;
        let sol = solve_transport(
            &spec,
            &u0,
            &path,
            &[vec![x], vec![x + h], vec![x - h]],
            &[128],
        )
        .unwrap();
        let fd = (sol.value(0, 1) - sol.value(0, 2)) / (2.0 * h);
        assert!((sol.gradient(0, 0)[0] - fd).abs() <= 1e-6);
        // Two-dimensional drift with coupled coordinates.
        let spec2 = crate::drift::fixtures::trig_2d();
        let u02 = InitialDatum::cosine(2, 1.1, 0.7).unwrap();
        let path2 = BrownianPath::sample(&grid, 2, &SeedSpec::new(17, 2)).unwrap();
        let x2 = [0.4f64, -0.2];
        let mut points = vec![x2.to_vec()];
        for i in 0..2 {
            let mut p = x2.to_vec();
            p[i] += h;
            points.push(p);
            let mut m = x2.to_vec();
            m[i] -= h;
            points.push(m);
        }
        let sol2 = solve_transport(&spec2, &u02, &path2, &points, &[128]).unwrap();
        for i in 0..2 {
            let fd = (sol2.value(0, 1 + 2 * i) - sol2.value(0, 2 + 2 * i)) / (2.0 * h);
            assert!(
                (sol2.gradient(0, 0)[i] - fd).abs() <= 1e-6,
                "coordinate {i} gradient"
            );
        }
    }

    #[test]
    fn laplacian_routes_agree() {
        let grid = TimeGrid::new(0.0, 1.0, 128).unwrap();
        // Scalar: exact backward-Hessian route against finite differences
        // of the chain-rule gradient.
        let spec = DriftSpec::softplus(1).unwrap();
        let u0 = InitialDatum::gauss_bump(1, 0.0, 2.0, 1.0).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(29, 5)).unwrap();
        let exact = laplacian_exact_1d(&spec, &u0, &path, 0.3, 128).unwrap();
        let fd = laplacian_fd(&spec, &u0, &path, &[0.3], 128).unwrap();
        assert!(
            (exact - fd).abs() <= 1e-5,
            "laplacian routes differ: {exact} vs {fd}"
        );
        // Two dimensions: the fd-of-gradient route against a plain second
        // difference of the field values.
        let spec2 = crate::drift::fixtures::trig_2d();
        let u02 = InitialDatum::gauss_bump(2, 0.0, 2.5, 1.0).unwrap();
        let path2 = BrownianPath::sample(&grid, 2, &SeedSpec::new(29, 6)).unwrap();
        let x2 = [0.2f64, 0.1];
        let h = 1e-3;
        let mut points = vec![x2.to_vec()];
        for i in 0..2 {
            let mut p = x2.to_vec();
            p[i] += h;
            points.push(p);
            let mut m = x2.to_vec();
            m[i] -= h;
            points.push(m);
        }
        let sol2 = solve_transport(&spec2, &u02, &path2, &points, &[128]).unwrap();
        let mut second = 0.0;
        for i in 0..2 {
            second += (sol2.value(0, 1 + 2 * i) - 2.0 * sol2.value(0, 0)
                + sol2.value(0, 2 + 2 * i))
                / (h * h);
        }
        let lap = sol2.laplacian(0, 0).unwrap();
        assert!(
            (lap - second).abs() <= 1e-4,
            "2d laplacian {lap} vs second difference {second}"
        );
    }

    #[test]
    fn linear_probe_ito_residual_sits_at_machine_precision() {
        let spec = DriftSpec::zero(1).unwrap();
        let u0 = InitialDatum::linear_probe(1).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 256).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(7, 0)).unwrap();
        let sol = solve_transport(&spec, &u0, &path, &[vec![0.37]], &all_nodes(&grid)).unwrap();
        let res = ito_residual(&sol, &spec, 0).unwrap();
        assert!(
            res.sup() <= 1e-12,
            "linear probe residual {} not at machine precision",
            res.sup()
        );
    }

    #[test]
    fn quadratic_probe_residual_is_the_compensated_quadratic_variation() {
        let spec = DriftSpec::zero(1).unwrap();
        let u0 = InitialDatum::quadratic_probe(1).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 256).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(13, 4)).unwrap();
        let sol = solve_transport(&spec, &u0, &path, &[vec![0.6]], &all_nodes(&grid)).unwrap();
        let res = ito_residual(&sol, &spec, 0).unwrap();
        let dt = grid.dt();
        let mut qv = 0.0;
        for j in 0..grid.n_steps() {
            let db = path.increment(j)[0];
            qv += db * db - dt;
        }
        let last = *res.values().last().unwrap();
        assert!(
            (last - qv).abs() <= 1e-11,
            "residual {last} should equal the compensated quadratic variation {qv}"
        );
        // Statistical size: the compensator has standard deviation
        // sqrt(2 dt t), and the whole series stays within a generous band.
        assert!(res.sup() <= 5.0 * (2.0 * dt).sqrt());
    }

    #[test]
    fn stratonovich_sum_telescopes_for_the_quadratic_probe() {
        let spec = DriftSpec::zero(1).unwrap();
        let u0 = InitialDatum::quadratic_probe(1).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 256).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(13, 9)).unwrap();
        let sol = solve_transport(&spec, &u0, &path, &[vec![-0.4]], &all_nodes(&grid)).unwrap();
        let strat = stratonovich_residual(&sol, &spec, 0).unwrap();
        assert!(
            strat.sup() <= 1e-12,
            "midpoint rule should telescope, got {}",
            strat.sup()
        );
        // The two conventions differ by the Laplacian correction plus the
        // left-versus-midpoint gap; for u0 = x^2 both are explicit:
        // R_ito(t_j) - R_strat(t_j) + t_j = sum_{i<j} dB_i^2.
        let ito = ito_residual(&sol, &spec, 0).unwrap();
        let dt = grid.dt();
        let mut qv = 0.0;
        for j in 0..grid.n_steps() {
            let db = path.increment(j)[0];
            qv += db * db;
            let gap = ito.values()[j + 1] - strat.values()[j + 1] + dt * (j + 1) as f64;
            assert!((gap - qv).abs() <= 1e-11);
        }
    }

    #[test]
    fn ito_residual_shrinks_under_path_refinement() {
        let spec = DriftSpec::ou(1, 1.3).unwrap();
        let u0 = InitialDatum::gauss_bump(1, 0.0, 3.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let table = residual_rate_study(&spec, &u0, &[0.5], &grid, 4, &SeedSpec::new(201, 0))
            .expect("rate study");
        let rate = log2_rate(&table);
        assert!(
            rate >= 0.4,
            "observed refinement rate {rate} below 0.4: {table:?}"
        );
        assert!(table[3].1 < table[0].1, "residual did not shrink: {table:?}");
        // The fitter itself reports an exact first-order table as rate one.
        let synthetic: Vec<(f64, f64)> = (0..4).map(|l| {
            let dt = 0.5f64.powi(l);
            (dt, 0.3 * dt)
        })
        .collect();
        assert!((log2_rate(&synthetic) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn weak_residual_vanishes_for_the_zero_test_function() {
        let spec = DriftSpec::zero(1).unwrap();
        let u0 = InitialDatum::gauss_bump(1, 0.0, 1.5, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 0.5, 32).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(3, 3)).unwrap();
        let xs: Vec<Vec<f64>> = (0..81).map(|k| vec![-2.0 + 0.05 * k as f64]).collect();
        let sol = solve_transport(&spec, &u0, &path, &xs, &all_nodes(&grid)).unwrap();
        let theta = ScalarBump::new(0.0, 1.0, 0.0).unwrap();
        let res = weak_residual(&sol, &spec, &theta).unwrap();
        assert!(res.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weak_residual_stays_within_budget_for_zero_drift() {
        let spec = DriftSpec::zero(1).unwrap();
        let u0 = InitialDatum::gauss_bump(1, 0.0, 1.5, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 0.5, 128).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(31, 2)).unwrap();
        let n_x = 401;
        let h = 8.0 / (n_x - 1) as f64;
        let xs: Vec<Vec<f64>> = (0..n_x).map(|k| vec![-4.0 + h * k as f64]).collect();
        let sol = solve_transport(&spec, &u0, &path, &xs, &all_nodes(&grid)).unwrap();
        let theta = ScalarBump::new(0.2, 1.0, 1.0).unwrap();
        let res = weak_residual(&sol, &spec, &theta).unwrap();
        // The leading error is the compensated quadratic-variation
        // martingale 1/2 sum <u, theta''> (dB^2 - dt), so the honest budget
        // scales like sqrt(dt) times the curvature mass of the test
        // function, plus the trapezoid error.
        let curvature_mass: f64 = xs.iter().map(|p| theta.deriv(2, p[0]).abs() * h).sum();
        let budget =
            2.0 * u0.sup_value() * curvature_mass * (2.0 * grid.dt() * grid.t_end()).sqrt()
                + 50.0 * h * h;
        assert!(
            res.sup() <= budget,
            "zero-drift weak residual {} above budget {budget}",
            res.sup()
        );
    }

    #[test]
    fn weak_residual_shrinks_under_joint_refinement() {
        let spec = DriftSpec::ou(1, 1.0).unwrap();
        let u0 = InitialDatum::gauss_bump(1, 0.0, 2.0, 1.0).unwrap();
        let theta = ScalarBump::new(0.0, 1.2, 1.0).unwrap();
        let seed = SeedSpec::new(67, 1);
        let grid = TimeGrid::new(0.0, 0.5, 64).unwrap();
        let coarse_path = BrownianPath::sample(&grid, 1, &seed).unwrap();
        let fine_path = coarse_path.refine(&seed).refine(&seed);
        let mut sups = Vec::new();
        for (path, n_x) in [(&coarse_path, 101usize), (&fine_path, 401)] {
            let h = 8.0 / (n_x - 1) as f64;
            let xs: Vec<Vec<f64>> = (0..n_x).map(|k| vec![-4.0 + h * k as f64]).collect();
            let nodes: Vec<usize> = (0..=path.grid().n_steps()).collect();
            let sol = solve_transport(&spec, &u0, path, &xs, &nodes).unwrap();
            sups.push(weak_residual(&sol, &spec, &theta).unwrap().sup());
        }
        assert!(
            sups[1] < 0.6 * sups[0],
            "weak residual did not shrink under refinement: {sups:?}"
        );
    }

    #[test]
    fn weak_residual_guards_its_quadrature_box() {
        let spec = DriftSpec::zero(1).unwrap();
        let u0 = InitialDatum::gauss_bump(1, 0.0, 1.5, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 0.5, 16).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(5, 5)).unwrap();
        let xs: Vec<Vec<f64>> = (0..41).map(|k| vec![-1.0 + 0.05 * k as f64]).collect();
        let sol = solve_transport(&spec, &u0, &path, &xs, &all_nodes(&grid)).unwrap();
        // Support [1, 3] sticks out of the box [-1, 1].
        let theta = ScalarBump::new(2.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            weak_residual(&sol, &spec, &theta),
            Err(Error::Domain(_))
        ));
        // Non-uniform grids are rejected before any quadrature runs.
        let mut bad = xs.clone();
        bad[7][0] += 0.01;
        let sol_bad = solve_transport(&spec, &u0, &path, &bad, &all_nodes(&grid)).unwrap();
        let theta_in = ScalarBump::new(0.0, 0.5, 1.0).unwrap();
        assert!(matches!(
            weak_residual(&sol_bad, &spec, &theta_in),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn backward_solve_ignores_increments_beyond_the_target_node() {
        let spec = DriftSpec::softplus(1).unwrap();
        let u0 = InitialDatum::gauss_bump(1, 0.0, 2.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(71, 8)).unwrap();
        let t_index = 40usize;
        let sol = solve_transport(&spec, &u0, &path, &[vec![0.2]], &[t_index]).unwrap();
        let mut tampered = path.increments().clone();
        for j in t_index..grid.n_steps() {
            tampered[(j, 0)] *= -3.0;
        }
        let path2 = BrownianPath::from_increments(grid.clone(), tampered).unwrap();
        let sol2 = solve_transport(&spec, &u0, &path2, &[vec![0.2]], &[t_index]).unwrap();
        assert_eq!(sol.value(0, 0).to_bits(), sol2.value(0, 0).to_bits());
        assert_eq!(
            sol.gradient(0, 0)[0].to_bits(),
            sol2.gradient(0, 0)[0].to_bits()
        );
        assert_eq!(
            sol.laplacian(0, 0).unwrap().to_bits(),
            sol2.laplacian(0, 0).unwrap().to_bits()
        );
    }

    #[test]
    fn capability_and_argument_guards_fire() {
        let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(2, 2)).unwrap();
        let u0 = InitialDatum::gauss_bump(1, 0.0, 2.0, 1.0).unwrap();
        // One bounded derivative: field and gradient fine, no Laplacian,
        // and the Ito residual names the missing capability.
        let relu = DriftSpec::relu(1).unwrap();
        let sol = solve_transport(&relu, &u0, &path, &[vec![0.1]], &all_nodes(&grid)).unwrap();
        assert!(!sol.has_laplacian());
        match ito_residual(&sol, &relu, 0) {
            Err(Error::Capability(msg)) => {
                assert!(msg.contains("k >= 2"), "message: {msg}");
            }
            other => panic!("expected capability error, got {other:?}"),
        }
        // Stratonovich needs no Laplacian and still works there.
        assert!(stratonovich_residual(&sol, &relu, 0).is_ok());
        let spec = DriftSpec::softplus(1).unwrap();
        // Node beyond the grid.
        assert!(matches!(
            solve_transport(&spec, &u0, &path, &[vec![0.0]], &[33]),
            Err(Error::OutOfRange(_))
        ));
        // Wrong state dimension.
        assert!(matches!(
            solve_transport(&spec, &u0, &path, &[vec![0.0, 1.0]], &[1]),
            Err(Error::InvalidArgument(_))
        ));
        // Residuals need the full node range.
        let partial = solve_transport(&spec, &u0, &path, &[vec![0.0]], &[0, 5, 32]).unwrap();
        assert!(matches!(
            ito_residual(&partial, &spec, 0),
            Err(Error::InvalidArgument(_))
        ));
        // And a stored x-point.
        let full = solve_transport(&spec, &u0, &path, &[vec![0.0]], &all_nodes(&grid)).unwrap();
        assert!(matches!(
            ito_residual(&full, &spec, 3),
            Err(Error::OutOfRange(_))
        ));
    }
}
