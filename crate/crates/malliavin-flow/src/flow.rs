//! Variational flows: spatial Jacobians and Hessians along a solution
//! path, iterated-integral (Picard) expansions, and the discrete flow
//! property.
//!
//! The Jacobian `J(s, t) = dX_t / dX_s` of the Euler solution solves the
//! forward linear recursion `J(s, t_{j+1}) = (I + dt Db(t_j, X_j)) J(s,
//! t_j)` from `J(s, s) = I`.  The Hessian tensor `H^i_{jk} = d^2 X^i /
//! dx^j dx^k` solves the Leibniz expansion of the same equation driven by
//! the drift's second derivative and `J` itself.  Both ride on an already
//! computed [`SolutionPath`], so every start index reuses one trajectory.
//!
//! The step-size contraction `dt * sup|Db| < 1/2` is enforced up front:
//! it keeps each factor `I + dt Db` within distance 1/2 of the identity,
//! the discrete shadow of the positivity `J = exp(int b') > 0` in one
//! dimension.
//!
//! [`picard_series`] expands the same Jacobian as iterated simplex
//! integrals of `Db` along the path, with the product taken in ascending
//! time order left to right.  In one dimension (or whenever the Jacobian
//! factors commute) the partial sums converge to `J`; the expansion is
//! evaluated by the cumulative left-point chain, so its full sum equals
//! the discrete Jacobian product identically, term truncation being the
//! only error.  The factorial decay of the term norms is the observable
//! the series check exercises.

use ndarray::{Array2, Array3};

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::paths::{BrownianPath, TimeGrid};
use crate::sde::{solve_forward_segment, SolutionPath};

/// Largest Picard truncation order accepted; beyond this the factorial
/// decay puts every term below double-precision resolution.
pub const MAX_PICARD_ORDER: usize = 30;

/// Rejects grids too coarse for contractive Jacobian factors.
pub(crate) fn check_step_contraction(spec: &DriftSpec, grid: &TimeGrid) -> Result<()> {
    let lip = spec.deriv_bounds().first().copied().unwrap_or(0.0);
    if grid.dt() * lip >= 0.5 {
        return Err(Error::invalid(format!(
            "grid too coarse: dt * sup|Db| = {:.3} must stay below 1/2",
            grid.dt() * lip
        )));
    }
    Ok(())
}

fn require_smoothness(spec: &DriftSpec, k: usize, what: &str) -> Result<()> {
    if spec.smoothness() < k {
        return Err(Error::Capability(format!(
            "{what} needs drift smoothness k >= {k}, but the drift declares k = {}",
            spec.smoothness()
        )));
    }
    Ok(())
}

/// Frobenius norm of a matrix.
pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Jacobian (and, when available, Hessian) of the flow map `x_s -> x_t`
/// along one solution path, for a fixed start node and all later nodes.
#[derive(Clone, Debug)]
pub struct FlowJet {
    s_index: usize,
    dim: usize,
    n_steps: usize,
    /// `jacobians[i]` is `J(s, t_{s_index + i})`.
    jacobians: Vec<Array2<f64>>,
    /// `hessians[i][(i,j,k)] = d^2 X^i_t / dx^j dx^k`; present iff the
    /// drift declares two derivatives.
    hessians: Option<Vec<Array3<f64>>>,
}

impl FlowJet {
    pub fn s_index(&self) -> usize {
        self.s_index
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `J(s, t_j)`; `t_index` must lie in `s_index..=n_steps`.
    pub fn jacobian(&self, t_index: usize) -> &Array2<f64> {
        assert!(
            (self.s_index..=self.n_steps).contains(&t_index),
            "jacobian index {t_index} outside [{}, {}]",
            self.s_index,
            self.n_steps
        );
        &self.jacobians[t_index - self.s_index]
    }

    /// `H(s, t_j)` if second derivatives were available.
    pub fn hessian(&self, t_index: usize) -> Option<&Array3<f64>> {
        self.hessians.as_ref().map(|h| {
            assert!(
                (self.s_index..=self.n_steps).contains(&t_index),
                "hessian index {t_index} outside [{}, {}]",
                self.s_index,
                self.n_steps
            );
            &h[t_index - self.s_index]
        })
    }

    /// `J(s, T)`.
    pub fn terminal_jacobian(&self) -> &Array2<f64> {
        self.jacobians.last().unwrap()
    }

    pub fn has_hessian(&self) -> bool {
        self.hessians.is_some()
    }
}

/// Left-point Jacobian recursion `J(s, t_j)` for `j = s_index..=n`.
///
/// This is the shared backbone of the variational flow and the first
/// Malliavin derivative; both are the same chain of matrices.
pub(crate) fn jacobian_chain(
    spec: &DriftSpec,
    sol: &SolutionPath,
    s_index: usize,
) -> Result<Vec<Array2<f64>>> {
    require_smoothness(spec, 1, "the variational flow")?;
    check_step_contraction(spec, sol.grid())?;
    let n = sol.grid().n_steps();
    if s_index > n {
        return Err(Error::OutOfRange(format!(
            "start node {s_index} beyond grid end {n}"
        )));
    }
    let d = spec.dim();
    if sol.dim() != d {
        return Err(Error::invalid(format!(
            "dimension mismatch: drift {d}, solution {}",
            sol.dim()
        )));
    }
    let dt = sol.grid().dt();
    let mut jacobians = Vec::with_capacity(n - s_index + 1);
    jacobians.push(Array2::eye(d));
    let mut db = Array2::zeros((d, d));
    for j in s_index..n {
        let x = sol.state(j);
        spec.d1_into(sol.grid().node(j), x.as_slice().unwrap(), &mut db);
        let jac = jacobians.last().unwrap();
        // J(s, t_{j+1}) = (I + dt Db) J(s, t_j).
        let mut next = jac.clone();
        next += &(db.dot(jac) * dt);
        jacobians.push(next);
    }
    Ok(jacobians)
}

/// Solves the first (and second, when `spec.smoothness() >= 2`) variational
/// equations along `sol` starting at grid node `s_index`.
pub fn variational_flow(spec: &DriftSpec, sol: &SolutionPath, s_index: usize) -> Result<FlowJet> {
    let jacobians = jacobian_chain(spec, sol, s_index)?;
    let n = sol.grid().n_steps();
    let d = spec.dim();
    let dt = sol.grid().dt();

    let hessians = if spec.smoothness() >= 2 {
        let mut hs = Vec::with_capacity(n - s_index + 1);
        hs.push(Array3::zeros((d, d, d)));
        let mut db = Array2::zeros((d, d));
        let mut d2b = Array3::zeros((d, d, d));
        for j in s_index..n {
            let x = sol.state(j);
            let x_slice = x.as_slice().unwrap();
            let t = sol.grid().node(j);
            spec.d1_into(t, x_slice, &mut db);
            spec.d2_into(t, x_slice, &mut d2b);
            let jac = &jacobians[j - s_index];
            let h = hs.last().unwrap();
            let mut h_next = h.clone();
            for i in 0..d {
                for p in 0..d {
                    for q in 0..d {
                        let mut rate = 0.0;
                        for a in 0..d {
                            rate += db[(i, a)] * h[(a, p, q)];
                            for c in 0..d {
                                rate += d2b[(i, a, c)] * jac[(a, p)] * jac[(c, q)];
                            }
                        }
                        h_next[(i, p, q)] += dt * rate;
                    }
                }
            }
            hs.push(h_next);
        }
        Some(hs)
    } else {
        None
    };
    Ok(FlowJet {
        s_index,
        dim: d,
        n_steps: n,
        jacobians,
        hessians,
    })
}

/// Truncated iterated-integral expansion of the flow Jacobian.
#[derive(Clone, Debug)]
pub struct PicardTruncation {
    order: usize,
    /// `terms[m]` is the `m`-fold simplex integral; `terms[0] = I`.
    terms: Vec<Array2<f64>>,
    /// `partial_sums[m] = sum_{i <= m} terms[i]`.
    partial_sums: Vec<Array2<f64>>,
}

impl PicardTruncation {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn term(&self, m: usize) -> &Array2<f64> {
        &self.terms[m]
    }

    pub fn partial_sum(&self, m: usize) -> &Array2<f64> {
        &self.partial_sums[m]
    }

    pub fn term_norm(&self, m: usize) -> f64 {
        frobenius(&self.terms[m])
    }

    /// Frobenius norms of all terms, `m = 0..=order`.
    pub fn term_norms(&self) -> Vec<f64> {
        (0..=self.order).map(|m| self.term_norm(m)).collect()
    }
}

/// Evaluates the Picard terms `int_{s<u_1<...<u_m<T} Db(u_1) ... Db(u_m)`
/// along the solution path by cumulative left-point chains.
///
/// The matrix product is taken in ascending time order left to right; in
/// one dimension the full sum telescopes to the discrete Jacobian product
/// exactly, so the truncation defect is controlled by the first omitted
/// term.  In higher dimension the factors need not commute and the
/// variational solver remains the ground truth.
pub fn picard_series(
    spec: &DriftSpec,
    sol: &SolutionPath,
    s_index: usize,
    order: usize,
) -> Result<PicardTruncation> {
    require_smoothness(spec, 1, "the iterated-integral expansion")?;
    check_step_contraction(spec, sol.grid())?;
    if order > MAX_PICARD_ORDER {
        return Err(Error::Capability(format!(
            "expansion order {order} exceeds {MAX_PICARD_ORDER}; terms beyond that are below resolution"
        )));
    }
    let n = sol.grid().n_steps();
    if s_index > n {
        return Err(Error::OutOfRange(format!(
            "start node {s_index} beyond grid end {n}"
        )));
    }
    let d = spec.dim();
    if sol.dim() != d {
        return Err(Error::invalid(format!(
            "dimension mismatch: drift {d}, solution {}",
            sol.dim()
        )));
    }
    let dt = sol.grid().dt();
    // terms[m] holds the running value of the m-fold integral up to the
    // current node; descending update order keeps the left-point rule.
    let mut terms: Vec<Array2<f64>> = vec![Array2::zeros((d, d)); order + 1];
    terms[0] = Array2::eye(d);
    let mut db = Array2::zeros((d, d));
    for j in s_index..n {
        let x = sol.state(j);
        spec.d1_into(sol.grid().node(j), x.as_slice().unwrap(), &mut db);
        for m in (1..=order).rev() {
            let inc = terms[m - 1].dot(&db) * dt;
            terms[m] += &inc;
        }
    }
    let mut partial_sums = Vec::with_capacity(order + 1);
    let mut acc = Array2::zeros((d, d));
    for t in &terms {
        acc += t;
        partial_sums.push(acc.clone());
    }
    Ok(PicardTruncation {
        order,
        terms,
        partial_sums,
    })
}

/// Defects of the two discrete flow axioms for one path and start/middle/
/// end nodes.
#[derive(Clone, Copy, Debug)]
pub struct FlowPropertyReport {
    pub s: usize,
    pub u: usize,
    pub t: usize,
    /// `max_i |phi_{u,t}(phi_{s,u}(x))_i - phi_{s,t}(x)_i|`; zero for the
    /// shared-grid Euler scheme because the restart replays the identical
    /// arithmetic.
    pub composition_defect: f64,
    /// `max_i |phi_{s,s}(x)_i - x_i|`; zero by construction.
    pub identity_defect: f64,
}

/// Verifies the composition and identity properties of the discrete flow.
pub fn check_flow_properties(
    spec: &DriftSpec,
    x0: &[f64],
    path: &BrownianPath,
    s: usize,
    u: usize,
    t: usize,
) -> Result<FlowPropertyReport> {
    if !(s <= u && u <= t && t <= path.grid().n_steps()) {
        return Err(Error::OutOfRange(format!(
            "need s <= u <= t <= {}, got ({s}, {u}, {t})",
            path.grid().n_steps()
        )));
    }
    let through = solve_forward_segment(spec, x0, path, s, t)?;
    let first_leg = solve_forward_segment(spec, x0, path, s, u)?;
    let mid = first_leg.row(first_leg.nrows() - 1);
    let second_leg = solve_forward_segment(spec, mid.as_slice().unwrap(), path, u, t)?;
    let composed = second_leg.row(second_leg.nrows() - 1);
    let direct = through.row(through.nrows() - 1);
    let composition_defect = composed
        .iter()
        .zip(direct.iter())
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    let identity = solve_forward_segment(spec, x0, path, s, s)?;
    let identity_defect = identity
        .row(0)
        .iter()
        .zip(x0)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    Ok(FlowPropertyReport {
        s,
        u,
        t,
        composition_defect,
        identity_defect,
    })
}
