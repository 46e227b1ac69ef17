//! Drift fields: evaluation, derivative tensors, and hypothesis checks.
//!
//! A [`DriftSpec`] bundles a drift `b : [0,T] x R^d -> R^d` with
//!
//! * its dimension `d` and declared smoothness `k` (spatial derivatives up
//!   to order `k` exist and are bounded),
//! * a linear-growth constant `C` with `sup_t |b(t,x)| <= C (1 + |x|)`, and
//! * declared bounds `deriv_bounds[j-1] >= sup |D^j b|` for `j = 1..=k`.
//!
//! The bounds are declarations; [`validate_hypotheses`] probes them
//! empirically on a box.  Solvers gate their feature set on `k` (for
//! example, density weights of order `i` require `k >= i + 2`), and step
//! size checks use `deriv_bounds[0]`, so for non-diagonal custom fields the
//! first bound should dominate the operator norm of the Jacobian, not just
//! the largest entry.
//!
//! Built-in families (`builtin_drift`): `zero`, `ou` (`b = -theta x`),
//! `relu` (`b = max(x, 0)` componentwise, weak derivative `1_(0,inf)`,
//! `k = 1`), `softplus` (`ln(1 + e^x)` componentwise, smooth and globally
//! Lipschitz), and `bump` (compactly supported smooth bump, componentwise).
//! All built-ins are autonomous; the time argument is accepted everywhere
//! so custom time-dependent fields fit the same interface.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::paths::SeedSpec;

/// Highest derivative order implemented for the smooth built-in families.
pub const MAX_BUILTIN_ORDER: usize = 6;

/// Scalar drift or derivative evaluator `(t, x) -> value`.
pub type Scalar1dFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Vector field evaluator writing `b(t, x)` into the output slice.
pub type VectorFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// Jacobian evaluator writing `(Db)_{ij} = d b_i / d x_j`.
pub type JacobianFn = Arc<dyn Fn(f64, &[f64], &mut Array2<f64>) + Send + Sync>;
/// Hessian evaluator writing `(D2 b)_{ijk} = d^2 b_i / (d x_j d x_k)`.
pub type HessianFn = Arc<dyn Fn(f64, &[f64], &mut Array3<f64>) + Send + Sync>;

/// A drift field together with its declared regularity data.
#[derive(Clone)]
pub struct DriftSpec {
    dim: usize,
    smoothness: usize,
    linear_growth_c: f64,
    deriv_bounds: Vec<f64>,
    kind: DriftKind,
}

#[derive(Clone)]
enum DriftKind {
    Zero,
    Ou { theta: f64 },
    Relu,
    Softplus,
    Bump(ScalarBump),
    LinearNd { a: Array2<f64> },
    Scalar1d { derivs: Vec<Scalar1dFn> },
    CustomNd {
        b: VectorFn,
        d1: Option<JacobianFn>,
        d2: Option<HessianFn>,
    },
}

impl std::fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match &self.kind {
            DriftKind::Zero => "zero",
            DriftKind::Ou { .. } => "ou",
            DriftKind::Relu => "relu",
            DriftKind::Softplus => "softplus",
            DriftKind::Bump(_) => "bump",
            DriftKind::LinearNd { .. } => "linear",
            DriftKind::Scalar1d { .. } => "custom-1d",
            DriftKind::CustomNd { .. } => "custom-nd",
        };
        f.debug_struct("DriftSpec")
            .field("family", &name)
            .field("dim", &self.dim)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

/// Numerically stable sigmoid.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivatives of softplus: order 0 is the function itself.
fn softplus_deriv(order: usize, x: f64) -> f64 {
    let s = sigmoid(x);
    match order {
        0 => softplus(x),
        1 => s,
        2 => s * (1.0 - s),
        3 => s * (1.0 - s) * (1.0 - 2.0 * s),
        4 => s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s),
        5 => s * (1.0 - s) * (1.0 - 14.0 * s + 36.0 * s * s - 24.0 * s * s * s),
        6 => {
            s * (1.0 - s)
                * (1.0 - 30.0 * s + 150.0 * s * s - 240.0 * s * s * s + 120.0 * s.powi(4))
        }
        _ => panic!("softplus derivatives implemented up to order {MAX_BUILTIN_ORDER}"),
    }
}

/// Smooth compactly supported bump
/// `psi(x) = h exp(1 - 1/(1 - r^2))` with `r = (x - c)/w`, zero for `|r| >= 1`.
///
/// The peak value is `h` (at `x = c`) and the support is `[c - w, c + w]`.
#[derive(Clone, Copy, Debug)]
pub struct ScalarBump {
    pub center: f64,
    pub width: f64,
    pub height: f64,
}

impl ScalarBump {
    pub fn new(center: f64, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::invalid("bump width must be positive and finite"));
        }
        if !height.is_finite() || !center.is_finite() {
            return Err(Error::invalid("bump center and height must be finite"));
        }
        Ok(ScalarBump {
            center,
            width,
            height,
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        let r = (x - self.center) / self.width;
        let r2 = r * r;
        if r2 >= 1.0 {
            return 0.0;
        }
        self.height * (1.0 - 1.0 / (1.0 - r2)).exp()
    }

    /// Derivative of the given order (0, 1 or 2).
    pub fn deriv(&self, order: usize, x: f64) -> f64 {
        let r = (x - self.center) / self.width;
        let r2 = r * r;
        if r2 >= 1.0 {
            return 0.0;
        }
        let u = 1.0 / (1.0 - r2);
        let psi = self.height * (1.0 - u).exp();
        match order {
            0 => psi,
            1 => -2.0 * r * u * u * psi / self.width,
            2 => {
                psi * (4.0 * r2 * u.powi(4) - 2.0 * u * u - 8.0 * r2 * u.powi(3))
                    / (self.width * self.width)
            }
            _ => panic!("bump derivatives implemented up to order 2"),
        }
    }

    /// Sup norm of the bump itself.
    pub fn sup(&self) -> f64 {
        self.height.abs()
    }

    /// Numerical sup of a derivative over the support (dense sampling with
    /// a 1% safety margin, adequate for declared bounds).
    pub fn deriv_sup(&self, order: usize) -> f64 {
        let n = 8192;
        let mut best = 0.0f64;
        for i in 0..=n {
            let x = self.center - self.width + 2.0 * self.width * i as f64 / n as f64;
            best = best.max(self.deriv(order, x).abs());
        }
        best * 1.01 + 1e-12
    }
}

impl DriftSpec {
    /// The identically zero drift.
    pub fn zero(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(DriftSpec {
            dim,
            smoothness: MAX_BUILTIN_ORDER,
            linear_growth_c: 1.0,
            deriv_bounds: vec![0.0; MAX_BUILTIN_ORDER],
            kind: DriftKind::Zero,
        })
    }

    /// Ornstein-Uhlenbeck drift `b(x) = -theta x`, `theta > 0`.
    pub fn ou(dim: usize, theta: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::invalid("ou drift needs theta > 0"));
        }
        let mut bounds = vec![0.0; MAX_BUILTIN_ORDER];
        bounds[0] = theta;
        Ok(DriftSpec {
            dim,
            smoothness: MAX_BUILTIN_ORDER,
            linear_growth_c: theta,
            deriv_bounds: bounds,
            kind: DriftKind::Ou { theta },
        })
    }

    /// Componentwise `b(x) = max(x, 0)`: Lipschitz with one bounded weak
    /// derivative `1_(0, inf)`, hence `k = 1`.
    pub fn relu(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(DriftSpec {
            dim,
            smoothness: 1,
            linear_growth_c: 1.0,
            deriv_bounds: vec![1.0],
            kind: DriftKind::Relu,
        })
    }

    /// Componentwise `b(x) = ln(1 + e^x)`: smooth, globally Lipschitz, with
    /// derivatives implemented up to order [`MAX_BUILTIN_ORDER`].
    pub fn softplus(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        // Sup norms of the first six derivatives of ln(1 + e^x), rounded up
        // in the last digit.
        let bounds = vec![1.0, 0.25, 0.0963, 0.125, 0.1277, 0.25];
        Ok(DriftSpec {
            dim,
            smoothness: MAX_BUILTIN_ORDER,
            linear_growth_c: 1.0,
            deriv_bounds: bounds,
            kind: DriftKind::Softplus,
        })
    }

    /// Componentwise smooth bump drift.
    pub fn bump(dim: usize, center: f64, width: f64, height: f64) -> Result<Self> {
        check_dim(dim)?;
        let bump = ScalarBump::new(center, width, height)?;
        let bounds = vec![bump.deriv_sup(1), bump.deriv_sup(2)];
        Ok(DriftSpec {
            dim,
            smoothness: 2,
            linear_growth_c: bump.sup().max(f64::MIN_POSITIVE),
            deriv_bounds: bounds,
            kind: DriftKind::Bump(bump),
        })
    }

    /// Linear drift `b(x) = A x` (useful as a matrix-valued test field).
    ///
    /// `deriv_bounds[0]` is declared as the Frobenius norm of `A`, which
    /// dominates both the operator norm and the largest entry.
    pub fn linear_nd(a: Array2<f64>) -> Result<Self> {
        let dim = a.nrows();
        check_dim(dim)?;
        if a.ncols() != dim {
            return Err(Error::invalid("linear drift matrix must be square"));
        }
        let fro = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut bounds = vec![0.0; MAX_BUILTIN_ORDER];
        bounds[0] = fro;
        Ok(DriftSpec {
            dim,
            smoothness: MAX_BUILTIN_ORDER,
            linear_growth_c: fro.max(f64::MIN_POSITIVE),
            deriv_bounds: bounds,
            kind: DriftKind::LinearNd { a },
        })
    }

    /// Custom scalar drift with analytic derivatives.
    ///
    /// `derivs[j]` evaluates the `j`-th spatial derivative at `(t, x)` for
    /// `j = 0..=k`, so `derivs.len() = k + 1`.
    pub fn custom_1d(
        smoothness: usize,
        linear_growth_c: f64,
        deriv_bounds: Vec<f64>,
        derivs: Vec<Scalar1dFn>,
    ) -> Result<Self> {
        if derivs.len() != smoothness + 1 {
            return Err(Error::invalid(format!(
                "need k + 1 = {} derivative evaluators, got {}",
                smoothness + 1,
                derivs.len()
            )));
        }
        if deriv_bounds.len() != smoothness {
            return Err(Error::invalid(format!(
                "need k = {smoothness} derivative bounds, got {}",
                deriv_bounds.len()
            )));
        }
        if !(linear_growth_c > 0.0) {
            return Err(Error::invalid("linear growth constant must be positive"));
        }
        Ok(DriftSpec {
            dim: 1,
            smoothness,
            linear_growth_c,
            deriv_bounds,
            kind: DriftKind::Scalar1d { derivs },
        })
    }

    /// Custom vector field with optional Jacobian and Hessian evaluators.
    ///
    /// The declared smoothness may not exceed the number of supplied
    /// derivative evaluators.
    pub fn custom_nd(
        dim: usize,
        linear_growth_c: f64,
        deriv_bounds: Vec<f64>,
        b: VectorFn,
        d1: Option<JacobianFn>,
        d2: Option<HessianFn>,
    ) -> Result<Self> {
        check_dim(dim)?;
        let available = match (&d1, &d2) {
            (None, _) => 0,
            (Some(_), None) => 1,
            (Some(_), Some(_)) => 2,
        };
        if deriv_bounds.len() > available {
            return Err(Error::invalid(format!(
                "declared smoothness {} exceeds supplied derivative evaluators ({available})",
                deriv_bounds.len()
            )));
        }
        if !(linear_growth_c > 0.0) {
            return Err(Error::invalid("linear growth constant must be positive"));
        }
        Ok(DriftSpec {
            dim,
            smoothness: deriv_bounds.len(),
            linear_growth_c,
            deriv_bounds,
            kind: DriftKind::CustomNd { b, d1, d2 },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declared smoothness `k`.
    pub fn smoothness(&self) -> usize {
        self.smoothness
    }

    pub fn linear_growth_c(&self) -> f64 {
        self.linear_growth_c
    }

    /// `deriv_bounds()[j-1]` bounds `sup |D^j b|` for `j = 1..=k`.
    pub fn deriv_bounds(&self) -> &[f64] {
        &self.deriv_bounds
    }

    /// Scalar derivative of a componentwise family at one coordinate.
    ///
    /// Panics if the drift is not componentwise/scalar or the order exceeds
    /// the implemented range; callers gate on [`Self::smoothness`].
    pub fn deriv_1d(&self, order: usize, t: f64, x: f64) -> f64 {
        match &self.kind {
            DriftKind::Zero => 0.0,
            DriftKind::Ou { theta } => match order {
                0 => -theta * x,
                1 => -theta,
                _ => 0.0,
            },
            DriftKind::Relu => match order {
                0 => x.max(0.0),
                1 => {
                    if x > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                _ => panic!("relu has one bounded derivative (k = 1)"),
            },
            DriftKind::Softplus => softplus_deriv(order, x),
            DriftKind::Bump(b) => b.deriv(order, x),
            DriftKind::Scalar1d { derivs } => {
                let f = derivs
                    .get(order)
                    .unwrap_or_else(|| panic!("custom drift has no derivative of order {order}"));
                f(t, x)
            }
            DriftKind::LinearNd { .. } | DriftKind::CustomNd { .. } => {
                panic!("deriv_1d requires a componentwise or scalar drift")
            }
        }
    }

    /// `b(t, x)` written into `out`.
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        match &self.kind {
            DriftKind::LinearNd { a } => {
                for i in 0..self.dim {
                    let mut acc = 0.0;
                    for j in 0..self.dim {
                        acc += a[(i, j)] * x[j];
                    }
                    out[i] = acc;
                }
            }
            DriftKind::CustomNd { b, .. } => b(t, x, out),
            _ => {
                for i in 0..self.dim {
                    out[i] = self.deriv_1d(0, t, x[i]);
                }
            }
        }
    }

    /// Jacobian `d1[(i, j)] = d b^i / d x_j` written into `out`.
    pub fn d1_into(&self, t: f64, x: &[f64], out: &mut Array2<f64>) {
        debug_assert_eq!(out.dim(), (self.dim, self.dim));
        match &self.kind {
            DriftKind::LinearNd { a } => out.assign(a),
            DriftKind::CustomNd { d1, .. } => {
                let d1 = d1.as_ref().expect("custom drift lacks a Jacobian evaluator");
                d1(t, x, out)
            }
            _ => {
                out.fill(0.0);
                for i in 0..self.dim {
                    out[(i, i)] = self.deriv_1d(1, t, x[i]);
                }
            }
        }
    }

    /// Hessian tensor `d2[(i, j, k)] = d^2 b^i / d x_j d x_k` into `out`.
    pub fn d2_into(&self, t: f64, x: &[f64], out: &mut Array3<f64>) {
        debug_assert_eq!(out.dim(), (self.dim, self.dim, self.dim));
        match &self.kind {
            DriftKind::Zero | DriftKind::Ou { .. } | DriftKind::LinearNd { .. } => out.fill(0.0),
            DriftKind::CustomNd { d2, .. } => {
                let d2 = d2.as_ref().expect("custom drift lacks a Hessian evaluator");
                d2(t, x, out)
            }
            DriftKind::Relu => panic!("relu has no second derivative (k = 1)"),
            _ => {
                out.fill(0.0);
                for i in 0..self.dim {
                    out[(i, i, i)] = self.deriv_1d(2, t, x[i]);
                }
            }
        }
    }

    /// Divergence `sum_i d b^i / d x_i` (needs `k >= 1`).
    pub fn divergence(&self, t: f64, x: &[f64]) -> f64 {
        match &self.kind {
            DriftKind::LinearNd { a } => (0..self.dim).map(|i| a[(i, i)]).sum(),
            DriftKind::CustomNd { .. } => {
                let mut jac = Array2::zeros((self.dim, self.dim));
                self.d1_into(t, x, &mut jac);
                (0..self.dim).map(|i| jac[(i, i)]).sum()
            }
            _ => (0..self.dim).map(|i| self.deriv_1d(1, t, x[i])).sum(),
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::invalid("drift dimension must be at least 1"))
    } else {
        Ok(())
    }
}

/// Constructs a built-in drift family by name.
///
/// Parameters: `dim` (all families, default 1), `theta` (`ou`), and
/// `center`/`width`/`height` (`bump`).  Unknown names or parameters are
/// rejected.
pub fn builtin_drift(name: &str, params: &BTreeMap<String, f64>) -> Result<DriftSpec> {
    let dim = match params.get("dim") {
        None => 1,
        Some(&v) => {
            if v.fract() != 0.0 || v < 1.0 {
                return Err(Error::invalid("dim must be a positive integer"));
            }
            v as usize
        }
    };
    let known: &[&str] = match name {
        "zero" | "relu" | "softplus" => &["dim"],
        "ou" => &["dim", "theta"],
        "bump" => &["dim", "center", "width", "height"],
        other => {
            return Err(Error::invalid(format!(
                "unknown drift family '{other}' (expected zero, ou, relu, softplus, bump)"
            )))
        }
    };
    for key in params.keys() {
        if !known.contains(&key.as_str()) {
            return Err(Error::invalid(format!(
                "drift family '{name}' does not take parameter '{key}'"
            )));
        }
    }
    match name {
        "zero" => DriftSpec::zero(dim),
        "ou" => DriftSpec::ou(dim, params.get("theta").copied().unwrap_or(1.0)),
        "relu" => DriftSpec::relu(dim),
        "softplus" => DriftSpec::softplus(dim),
        "bump" => DriftSpec::bump(
            dim,
            params.get("center").copied().unwrap_or(0.0),
            params.get("width").copied().unwrap_or(1.0),
            params.get("height").copied().unwrap_or(1.0),
        ),
        _ => unreachable!(),
    }
}

/// Outcome of probing a drift's declared growth and derivative bounds.
#[derive(Clone, Debug)]
pub struct HypothesisReport {
    /// Largest observed `|b(t,x)| / (1 + |x|)` over the probes.
    pub growth_observed: f64,
    pub growth_declared: f64,
    /// Largest observed entry of `D^j b`, `j = 1..=k`.
    pub deriv_observed: Vec<f64>,
    pub deriv_declared: Vec<f64>,
}

impl HypothesisReport {
    /// All observed quantities within their declarations (tiny slack for
    /// rounding in the observations themselves).
    pub fn pass(&self) -> bool {
        const SLACK: f64 = 1e-9;
        self.growth_observed <= self.growth_declared + SLACK
            && self
                .deriv_observed
                .iter()
                .zip(&self.deriv_declared)
                .all(|(obs, dec)| *obs <= *dec + SLACK)
    }
}

/// Probes the linear-growth and derivative-bound declarations of `spec` at
/// `n_probes` seeded uniform points of `[-box_half, box_half]^d` with times
/// in `[0, 1]`.
///
/// Derivative entries are compared in sup (largest-entry) norm, which for
/// the componentwise built-ins coincides with the operator norm.
pub fn validate_hypotheses(
    spec: &DriftSpec,
    box_half: f64,
    n_probes: usize,
    master_seed: u64,
) -> Result<HypothesisReport> {
    if !(box_half > 0.0) {
        return Err(Error::invalid("probe box half-width must be positive"));
    }
    if n_probes == 0 {
        return Err(Error::invalid("need at least one probe point"));
    }
    let d = spec.dim();
    let k = spec.smoothness();
    let mut rng = SeedSpec::new(master_seed, 0).rng_stream(0xA11D);
    let mut x = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut growth = 0.0f64;
    let mut deriv = vec![0.0f64; k];
    let mut jac = Array2::zeros((d, d));
    let mut hess = Array3::zeros((d, d, d));
    for _ in 0..n_probes {
        let t: f64 = rng.gen::<f64>();
        for xi in x.iter_mut() {
            *xi = box_half * (2.0 * rng.gen::<f64>() - 1.0);
        }
        spec.eval_into(t, &x, &mut b);
        let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm_x = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        growth = growth.max(norm_b / (1.0 + norm_x));
        if k >= 1 {
            spec.d1_into(t, &x, &mut jac);
            let m = jac.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            deriv[0] = deriv[0].max(m);
        }
        if k >= 2 {
            spec.d2_into(t, &x, &mut hess);
            let m = hess.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            deriv[1] = deriv[1].max(m);
        }
        // Orders above 2 for scalar families.
        if d == 1 {
            for j in 3..=k {
                let m = spec.deriv_1d(j, t, x[0]).abs();
                deriv[j - 1] = deriv[j - 1].max(m);
            }
        }
    }
    Ok(HypothesisReport {
        growth_observed: growth,
        growth_declared: spec.linear_growth_c(),
        deriv_observed: deriv,
        deriv_declared: spec.deriv_bounds().to_vec(),
    })
}

/// Product of one-dimensional bumps: a smooth compactly supported scalar
/// field on `R^d`, the factor shape used by the moment-bound checker.
#[derive(Clone, Debug)]
pub struct ProductBump {
    factors: Vec<ScalarBump>,
}

impl ProductBump {
    pub fn new(factors: Vec<ScalarBump>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("product bump needs at least one factor"));
        }
        Ok(ProductBump { factors })
    }

    /// Isotropic bump: the same 1-D profile in every coordinate.
    pub fn isotropic(dim: usize, profile: ScalarBump) -> Result<Self> {
        check_dim(dim)?;
        Ok(ProductBump {
            factors: vec![profile; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        self.factors
            .iter()
            .zip(x)
            .map(|(f, &xi)| f.value(xi))
            .product()
    }

    /// Partial derivative along `coord`.
    pub fn partial(&self, coord: usize, x: &[f64]) -> f64 {
        debug_assert!(coord < self.dim());
        let mut prod = 1.0;
        for (j, (f, &xi)) in self.factors.iter().zip(x).enumerate() {
            prod *= if j == coord {
                f.deriv(1, xi)
            } else {
                f.value(xi)
            };
        }
        prod
    }

    /// Sup norm (product of factor peaks).
    pub fn sup(&self) -> f64 {
        self.factors.iter().map(|f| f.sup()).product()
    }
}

/// A word of scalar factors with first-order multi-indices: factor `i` is
/// evaluated as `b_i` itself (`alphas[i] = None`) or as the partial
/// derivative `d b_i / d x_c` (`alphas[i] = Some(c)`).
#[derive(Clone, Debug)]
pub struct DerivativeWord {
    factors: Vec<ProductBump>,
    alphas: Vec<Option<usize>>,
}

impl DerivativeWord {
    pub fn new(factors: Vec<ProductBump>, alphas: Vec<Option<usize>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("derivative word must not be empty"));
        }
        if factors.len() != alphas.len() {
            return Err(Error::invalid(format!(
                "word has {} factors but {} multi-indices",
                factors.len(),
                alphas.len()
            )));
        }
        let dim = factors[0].dim();
        for f in &factors {
            if f.dim() != dim {
                return Err(Error::invalid("all factors must share one dimension"));
            }
        }
        for alpha in alphas.iter().flatten() {
            if *alpha >= dim {
                return Err(Error::OutOfRange(format!(
                    "multi-index coordinate {alpha} outside dimension {dim}"
                )));
            }
        }
        Ok(DerivativeWord { factors, alphas })
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.factors[0].dim()
    }

    /// Evaluates factor `i` (with its derivative flag) at `x`.
    pub fn factor_value(&self, i: usize, x: &[f64]) -> f64 {
        match self.alphas[i] {
            None => self.factors[i].value(x),
            Some(c) => self.factors[i].partial(c, x),
        }
    }

    /// Product of the factor sup norms (underived factors only appear in
    /// the bound through their own sup, never through derivative norms).
    pub fn sup_product(&self) -> f64 {
        self.factors.iter().map(|f| f.sup()).product()
    }
}

/// Shared test fixtures.
#[cfg(test)]
pub(crate) mod fixtures {
    use super::DriftSpec;
    use ndarray::{Array2, Array3};
    use std::sync::Arc;

    /// Two-dimensional field with bounded, non-commuting derivatives and
    /// non-trivial second-derivative tensors:
    /// `b = (sin(x_1)/4, cos(x_0)/4)`.
    pub fn trig_2d() -> DriftSpec {
        let b = Arc::new(|_t: f64, x: &[f64], out: &mut [f64]| {
            out[0] = 0.25 * x[1].sin();
            out[1] = 0.25 * x[0].cos();
        });
        let d1 = Arc::new(|_t: f64, x: &[f64], out: &mut Array2<f64>| {
            out.fill(0.0);
            out[(0, 1)] = 0.25 * x[1].cos();
            out[(1, 0)] = -0.25 * x[0].sin();
        });
        let d2 = Arc::new(|_t: f64, x: &[f64], out: &mut Array3<f64>| {
            out.fill(0.0);
            out[(0, 1, 1)] = -0.25 * x[1].sin();
            out[(1, 0, 0)] = -0.25 * x[0].cos();
        });
        DriftSpec::custom_nd(2, 0.5, vec![0.25, 0.25], b, Some(d1), Some(d2)).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn builtin_names_and_params() {
        let mut params = BTreeMap::new();
        assert!(builtin_drift("zero", &params).is_ok());
        assert!(builtin_drift("relu", &params).is_ok());
        assert!(builtin_drift("softplus", &params).is_ok());
        assert!(builtin_drift("nope", &params).is_err());
        params.insert("theta".into(), 2.0);
        let ou = builtin_drift("ou", &params).unwrap();
        assert_eq!(ou.deriv_bounds()[0], 2.0);
        // Unknown parameter for the family.
        assert!(builtin_drift("relu", &params).is_err());
        params.clear();
        params.insert("theta".into(), -1.0);
        assert!(builtin_drift("ou", &params).is_err());
    }

    #[test]
    fn softplus_derivatives_match_finite_differences() {
        let spec = DriftSpec::softplus(1).unwrap();
        for order in 1..=4usize {
            for &x in &[-2.0, -0.3, 0.0, 0.7, 3.1] {
                let fd = central_diff(|y| spec.deriv_1d(order - 1, 0.0, y), x, 1e-5);
                let an = spec.deriv_1d(order, 0.0, x);
                assert!(
                    (fd - an).abs() < 1e-7,
                    "softplus order {order} at {x}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn softplus_declared_bounds_hold() {
        let spec = DriftSpec::softplus(1).unwrap();
        let report = validate_hypotheses(&spec, 8.0, 4000, 17).unwrap();
        assert!(report.pass(), "report {report:?}");
    }

    #[test]
    fn relu_weak_derivative_is_indicator() {
        let spec = DriftSpec::relu(1).unwrap();
        assert_eq!(spec.smoothness(), 1);
        assert_eq!(spec.deriv_1d(0, 0.0, -1.5), 0.0);
        assert_eq!(spec.deriv_1d(0, 0.0, 1.5), 1.5);
        assert_eq!(spec.deriv_1d(1, 0.0, -0.1), 0.0);
        assert_eq!(spec.deriv_1d(1, 0.0, 0.0), 0.0);
        assert_eq!(spec.deriv_1d(1, 0.0, 0.1), 1.0);
    }

    #[test]
    fn bump_is_compactly_supported_and_smooth() {
        let b = ScalarBump::new(0.5, 2.0, 3.0).unwrap();
        assert_eq!(b.value(0.5), 3.0);
        assert_eq!(b.value(2.5), 0.0);
        assert_eq!(b.value(-1.5), 0.0);
        assert_eq!(b.deriv(1, 2.6), 0.0);
        // Smooth decay to zero at the support edge.
        assert!(b.value(2.499).abs() < 1e-100);
        for &x in &[-0.9, 0.1, 1.2, 2.0] {
            let fd = central_diff(|y| b.value(y), x, 1e-6);
            assert!((fd - b.deriv(1, x)).abs() < 1e-6, "bump derivative at {x}");
            let fd2 = central_diff(|y| b.deriv(1, y), x, 1e-6);
            assert!((fd2 - b.deriv(2, x)).abs() < 1e-5, "bump curvature at {x}");
        }
    }

    #[test]
    fn builtins_pass_hypothesis_validation() {
        for name in ["zero", "ou", "relu", "softplus", "bump"] {
            let spec = builtin_drift(name, &BTreeMap::new()).unwrap();
            let report = validate_hypotheses(&spec, 5.0, 2000, 3).unwrap();
            assert!(report.pass(), "{name}: {report:?}");
        }
    }

    #[test]
    fn bad_declaration_is_caught() {
        // Drift x/2 declared with derivative bound 0.25: probe must exceed it.
        let spec = DriftSpec::custom_1d(
            1,
            1.0,
            vec![0.25],
            vec![Arc::new(|_, x| 0.5 * x), Arc::new(|_, _| 0.5)],
        )
        .unwrap();
        let report = validate_hypotheses(&spec, 2.0, 100, 5).unwrap();
        assert!(!report.pass());
    }

    #[test]
    fn ou_jacobian_is_minus_theta_identity() {
        let spec = DriftSpec::ou(3, 0.7).unwrap();
        let x = [0.3, -1.0, 2.0];
        let mut jac = Array2::zeros((3, 3));
        spec.d1_into(0.0, &x, &mut jac);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { -0.7 } else { 0.0 };
                assert_eq!(jac[(i, j)], want);
            }
        }
        let mut b = [0.0; 3];
        spec.eval_into(0.0, &x, &mut b);
        assert_eq!(b, [-0.21, 0.7, -1.4]);
        assert!((spec.divergence(0.0, &x) + 2.1).abs() < 1e-15);
    }

    #[test]
    fn linear_nd_matches_matrix() {
        let a = ndarray::array![[0.0, -1.0], [1.0, 0.0]];
        let spec = DriftSpec::linear_nd(a).unwrap();
        let mut b = [0.0; 2];
        spec.eval_into(0.0, &[2.0, 3.0], &mut b);
        assert_eq!(b, [-3.0, 2.0]);
        let report = validate_hypotheses(&spec, 4.0, 500, 9).unwrap();
        assert!(report.pass());
    }

    #[test]
    fn derivative_word_evaluates_factors() {
        let bump = ScalarBump::new(0.0, 1.0, 2.0).unwrap();
        let word = DerivativeWord::new(
            vec![
                ProductBump::isotropic(1, bump).unwrap(),
                ProductBump::isotropic(1, bump).unwrap(),
            ],
            vec![None, Some(0)],
        )
        .unwrap();
        assert_eq!(word.len(), 2);
        assert_eq!(word.factor_value(0, &[0.0]), 2.0);
        assert_eq!(word.factor_value(1, &[0.0]), 0.0); // odd derivative at center
        assert_eq!(word.sup_product(), 4.0);
        // Mismatched lengths rejected.
        assert!(DerivativeWord::new(
            vec![ProductBump::isotropic(1, bump).unwrap()],
            vec![None, None]
        )
        .is_err());
        // Coordinate outside dimension rejected.
        assert!(DerivativeWord::new(
            vec![ProductBump::isotropic(1, bump).unwrap()],
            vec![Some(1)]
        )
        .is_err());
    }
}
