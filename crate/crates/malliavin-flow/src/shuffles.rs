//! Shuffle permutations, simplex quadrature, and the factorial moment
//! bound for words of drift factors along Brownian paths.
//!
//! The module verifies two interchange identities for integrals over the
//! ordered simplex `L^m_{s,t} = {s < u_1 < ... < u_m < t}`:
//!
//! * the product rule: a product of two simplex integrals (lengths `m` and
//!   `n`) equals the sum over all `(m, n)` shuffles of single integrals of
//!   length `m + n`, and
//! * the pinned variant: nesting the second integral up to the `k`-th
//!   variable of the first restricts the sum to shuffles that keep factors
//!   `k..=m` in the top slots.
//!
//! Every identity is checked twice: numerically by nested left-point
//! cumulative quadrature with an explicit error budget, and exactly by a
//! rational symbolic route for polynomial factors.  The symbolic route is
//! the ground truth; it evaluates both sides in `BigRational` arithmetic
//! where the identity must hold with zero residual, which also certifies
//! the permutation enumeration itself.
//!
//! [`check_moment_bound`] estimates `|E[int_{simplex} prod_i D^{a_i} b_i
//! (B_{t_i}) dt]|` by Monte Carlo and reports the implied per-factor
//! constant against the `prod_i sup|b_i| (t - t_0)^{m/2} / Gamma(m/2 + 1)`
//! envelope, whose factorial decay is the point of the bound.

use std::sync::Arc;

use num::{BigRational, One, Zero};
use statrs::function::gamma::ln_gamma;

use crate::drift::DerivativeWord;
use crate::error::{Error, Result};
use crate::paths::{BrownianPath, SeedSpec, TimeGrid};
use crate::util::{par_fold_chunks, Moments, DEFAULT_CHUNK};

/// Largest `m + n` for which shuffle sets are enumerated.
pub const MAX_SHUFFLE_LEN: usize = 12;
/// Largest `m + n` accepted by the quadrature-based identity checks.
pub const MAX_VERIFY_LEN: usize = 6;
/// Largest word length accepted by the moment-bound checker.
pub const MAX_WORD_LEN: usize = 8;

/// Univariate factor used by the numerical quadrature routines.
pub type Factor1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Wraps polynomial coefficients `c_0 + c_1 u + ...` as a [`Factor1`].
pub fn poly_factor(coeffs: &[f64]) -> Factor1 {
    let c = coeffs.to_vec();
    Arc::new(move |u| c.iter().rev().fold(0.0, |acc, &ck| acc * u + ck))
}

// ---------------------------------------------------------------------------
// Shuffle permutation enumeration
// ---------------------------------------------------------------------------

/// Which shuffle family to enumerate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShuffleVariant {
    /// All interleavings of the two blocks.
    Plain,
    /// Interleavings fixing factors `k..=m` in the top slots: `s(j) = n + j`
    /// for `j = k..=m` (1-based).  With `k = 0` and `n >= 1` the set is
    /// empty, matching the vanishing inner integral it mirrors.
    Pinned { k: usize },
}

/// An enumerated set of `(m, n)` shuffle permutations.
///
/// Permutations are stored 0-based: `perm[i]` is the slot (position in the
/// combined ordered tuple) of factor `i`, factors `0..m` forming the first
/// block and `m..m+n` the second.  Within each block the slots increase.
#[derive(Clone, Debug)]
pub struct ShuffleSet {
    m: usize,
    n: usize,
    variant: ShuffleVariant,
    permutations: Vec<Vec<usize>>,
}

impl ShuffleSet {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn variant(&self) -> ShuffleVariant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.permutations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutations.is_empty()
    }

    pub fn permutations(&self) -> &[Vec<usize>] {
        &self.permutations
    }

    /// Closed-form cardinality: `C(m + n, m)` plain, `C(n + k - 1, n)`
    /// pinned (empty for `k = 0`, `n >= 1`).
    pub fn expected_len(&self) -> u128 {
        match self.variant {
            ShuffleVariant::Plain => binomial(self.m + self.n, self.m),
            ShuffleVariant::Pinned { k } => {
                if k == 0 {
                    if self.n == 0 {
                        1
                    } else {
                        0
                    }
                } else {
                    binomial(self.n + k - 1, self.n)
                }
            }
        }
    }
}

/// Exact binomial coefficient (fits easily for the sizes this module allows).
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Sorted `take`-element subsets of `0..n_items`, in lexicographic order.
fn combinations(n_items: usize, take: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(take);
    fn rec(start: usize, n_items: usize, take: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == take {
            out.push(current.clone());
            return;
        }
        let need = take - current.len();
        for i in start..=(n_items - need) {
            current.push(i);
            rec(i + 1, n_items, take, current, out);
            current.pop();
        }
    }
    if take == 0 {
        out.push(Vec::new());
    } else if take <= n_items {
        rec(0, n_items, take, &mut current, &mut out);
    }
    out
}

/// Enumerates the `(m, n)` shuffle permutations of the requested variant.
pub fn enumerate_shuffles(m: usize, n: usize, variant: ShuffleVariant) -> Result<ShuffleSet> {
    if m + n > MAX_SHUFFLE_LEN {
        return Err(Error::Capability(format!(
            "shuffle enumeration supports m + n <= {MAX_SHUFFLE_LEN}, got {}",
            m + n
        )));
    }
    let permutations = match variant {
        ShuffleVariant::Plain => {
            // Choose the slots of the first block; both blocks sorted.
            combinations(m + n, m)
                .into_iter()
                .map(|slots_a| {
                    let mut perm = vec![usize::MAX; m + n];
                    let mut in_a = vec![false; m + n];
                    for (p, &slot) in slots_a.iter().enumerate() {
                        perm[p] = slot;
                        in_a[slot] = true;
                    }
                    let mut q = m;
                    for slot in 0..m + n {
                        if !in_a[slot] {
                            perm[q] = slot;
                            q += 1;
                        }
                    }
                    perm
                })
                .collect()
        }
        ShuffleVariant::Pinned { k } => {
            if k > m {
                return Err(Error::OutOfRange(format!(
                    "pin index {k} exceeds first block length {m}"
                )));
            }
            if k == 0 {
                // The mirrored inner integral runs over an empty simplex.
                if n == 0 {
                    vec![(0..m).collect()]
                } else {
                    Vec::new()
                }
            } else {
                // Factors k..=m occupy the top slots; the remaining k - 1
                // first-block factors interleave with the second block in
                // the bottom n + k - 1 slots.
                combinations(n + k - 1, k - 1)
                    .into_iter()
                    .map(|slots_low| {
                        let mut perm = vec![usize::MAX; m + n];
                        let mut taken = vec![false; n + k - 1];
                        for (p, &slot) in slots_low.iter().enumerate() {
                            perm[p] = slot;
                            taken[slot] = true;
                        }
                        for p in (k - 1)..m {
                            perm[p] = n + p;
                        }
                        let mut q = m;
                        for slot in 0..n + k - 1 {
                            if !taken[slot] {
                                perm[q] = slot;
                                q += 1;
                            }
                        }
                        perm
                    })
                    .collect()
            }
        }
    };
    let set = ShuffleSet {
        m,
        n,
        variant,
        permutations,
    };
    debug_assert_eq!(set.len() as u128, set.expected_len());
    Ok(set)
}

// ---------------------------------------------------------------------------
// Exact rational polynomials (the symbolic oracle)
// ---------------------------------------------------------------------------

/// Dense polynomial with exact rational coefficients, `coeffs[i] * x^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct RatPoly {
    coeffs: Vec<BigRational>,
}

impl RatPoly {
    pub fn new(coeffs: Vec<BigRational>) -> Self {
        let mut p = RatPoly { coeffs };
        p.trim();
        p
    }

    /// Lifts binary-exact `f64` coefficients (integers, halves, ...) into
    /// rationals; every finite `f64` is exactly representable.
    pub fn from_f64_coeffs(coeffs: &[f64]) -> Result<Self> {
        let mut out = Vec::with_capacity(coeffs.len());
        for &c in coeffs {
            let r = BigRational::from_float(c)
                .ok_or_else(|| Error::invalid(format!("non-finite coefficient {c}")))?;
            out.push(r);
        }
        Ok(RatPoly::new(out))
    }

    pub fn one() -> Self {
        RatPoly {
            coeffs: vec![BigRational::one()],
        }
    }

    fn trim(&mut self) {
        while self.coeffs.len() > 1 && self.coeffs.last().map_or(false, Zero::is_zero) {
            self.coeffs.pop();
        }
        if self.coeffs.is_empty() {
            self.coeffs.push(BigRational::zero());
        }
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn mul(&self, other: &RatPoly) -> RatPoly {
        let mut coeffs = vec![BigRational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        RatPoly::new(coeffs)
    }

    /// Antiderivative with zero constant term.
    fn antiderivative(&self) -> RatPoly {
        let mut coeffs = vec![BigRational::zero(); self.coeffs.len() + 1];
        for (i, c) in self.coeffs.iter().enumerate() {
            coeffs[i + 1] = c / BigRational::from_integer((i as i64 + 1).into());
        }
        RatPoly::new(coeffs)
    }

    /// The cumulative integral `x -> int_s^x self(v) dv` as a polynomial.
    pub fn integral_from(&self, s: &BigRational) -> RatPoly {
        let anti = self.antiderivative();
        let at_s = anti.eval(s);
        let mut coeffs = anti.coeffs;
        coeffs[0] -= at_s;
        RatPoly::new(coeffs)
    }
}

/// Exact `int_{L^m_{s,t}} prod_i f_i(u_i) du` with `f_1` innermost.
///
/// Runs the cumulative chain `G_0 = 1`, `G_i(x) = int_s^x f_i G_{i-1}` in
/// polynomial space and evaluates `G_m(t)`; `m = 0` returns 1.
pub fn symbolic_simplex_integral(
    factors: &[RatPoly],
    s: &BigRational,
    t: &BigRational,
) -> BigRational {
    symbolic_chain(factors, s).eval(t)
}

/// The full cumulative chain `G_m` as a polynomial (see
/// [`symbolic_simplex_integral`]).
pub fn symbolic_chain(factors: &[RatPoly], s: &BigRational) -> RatPoly {
    let mut g = RatPoly::one();
    for f in factors {
        g = f.mul(&g).integral_from(s);
    }
    g
}

/// Both sides of the product-of-simplex-integrals identity, exactly.
///
/// Returns `(lhs, rhs)` where `lhs = (int_{L^m} prod f)(int_{L^n} prod g)`
/// and `rhs` sums the shuffled single integrals; a correct enumeration
/// makes them equal as rationals.
pub fn symbolic_shuffle_sides(
    f: &[RatPoly],
    g: &[RatPoly],
    s: &BigRational,
    t: &BigRational,
) -> Result<(BigRational, BigRational)> {
    let set = enumerate_shuffles(f.len(), g.len(), ShuffleVariant::Plain)?;
    let lhs = symbolic_simplex_integral(f, s, t) * symbolic_simplex_integral(g, s, t);
    let rhs = symbolic_shuffle_sum(f, g, &set, s, t);
    Ok((lhs, rhs))
}

/// Both sides of the pinned identity, exactly.
///
/// `lhs` nests the `g`-integral up to the `k`-th variable of the outer
/// `f`-integral; `rhs` sums over the pinned shuffle set.
pub fn symbolic_shuffle2_sides(
    f: &[RatPoly],
    g: &[RatPoly],
    k: usize,
    s: &BigRational,
    t: &BigRational,
) -> Result<(BigRational, BigRational)> {
    let (m, n) = (f.len(), g.len());
    let set = enumerate_shuffles(m, n, ShuffleVariant::Pinned { k })?;
    let lhs = if k == 0 {
        if n == 0 {
            symbolic_simplex_integral(f, s, t)
        } else {
            BigRational::zero()
        }
    } else {
        // Inner integral as a polynomial in u_k, folded into factor k.
        let v = symbolic_chain(g, s);
        let mut outer: Vec<RatPoly> = f.to_vec();
        outer[k - 1] = outer[k - 1].mul(&v);
        symbolic_simplex_integral(&outer, s, t)
    };
    let rhs = symbolic_shuffle_sum(f, g, &set, s, t);
    Ok((lhs, rhs))
}

fn symbolic_shuffle_sum(
    f: &[RatPoly],
    g: &[RatPoly],
    set: &ShuffleSet,
    s: &BigRational,
    t: &BigRational,
) -> BigRational {
    let all: Vec<&RatPoly> = f.iter().chain(g.iter()).collect();
    let mut rhs = BigRational::zero();
    for perm in set.permutations() {
        if all.is_empty() {
            rhs += BigRational::one();
            continue;
        }
        let mut slots: Vec<&RatPoly> = vec![all[0]; all.len()];
        for (i, &slot) in perm.iter().enumerate() {
            slots[slot] = all[i];
        }
        let ordered: Vec<RatPoly> = slots.into_iter().cloned().collect();
        rhs += symbolic_simplex_integral(&ordered, s, t);
    }
    rhs
}

// ---------------------------------------------------------------------------
// Numerical simplex quadrature
// ---------------------------------------------------------------------------

/// A numerically integrated simplex integral with its refinement check.
#[derive(Clone, Debug)]
pub struct SimplexIntegral {
    pub s: f64,
    pub t: f64,
    /// Simplex dimension (number of factors).
    pub m: usize,
    pub n_sub: usize,
    /// Left-point nested quadrature value at `n_sub` subdivisions.
    pub value: f64,
    /// Same quadrature at `2 n_sub`, for a Richardson-style check.
    pub refined_value: f64,
}

impl SimplexIntegral {
    /// Gap between the two refinement levels; tracks the `O(1/n_sub)`
    /// quadrature error.
    pub fn richardson_gap(&self) -> f64 {
        (self.refined_value - self.value).abs()
    }
}

fn check_interval(s: f64, t: f64, n_sub: usize) -> Result<()> {
    if !s.is_finite() || !t.is_finite() || t <= s {
        return Err(Error::invalid(format!("need finite t > s, got [{s}, {t}]")));
    }
    if n_sub < 2 {
        return Err(Error::invalid("need at least two subdivisions"));
    }
    Ok(())
}

/// Samples a factor at the `n_sub + 1` uniform nodes of `[s, t]`.
fn sample_values(f: &Factor1, s: f64, t: f64, n_sub: usize) -> Vec<f64> {
    let h = (t - s) / n_sub as f64;
    (0..=n_sub).map(|j| f(s + j as f64 * h)).collect()
}

/// Left-point cumulative chain over sampled factor values.
///
/// Input rows are factor values at the nodes; the return is `G_m` at every
/// node, where `G_0 = 1` and `G_i(x_r) = sum_{j<r} v_i(x_j) G_{i-1}(x_j) h`.
fn cumulative_chain(values: &[Vec<f64>], h: f64) -> Vec<f64> {
    let len = values.first().map_or(0, Vec::len);
    let mut g = vec![1.0; len];
    for v in values {
        let mut acc = 0.0;
        let mut next = vec![0.0; len];
        for r in 1..len {
            acc += v[r - 1] * g[r - 1] * h;
            next[r] = acc;
        }
        g = next;
    }
    g
}

/// Nested left-point quadrature of `int_{L^m_{s,t}} prod_i f_i(u_i) du`.
pub fn simplex_quad(factors: &[Factor1], s: f64, t: f64, n_sub: usize) -> Result<SimplexIntegral> {
    check_interval(s, t, n_sub)?;
    if factors.len() > MAX_SHUFFLE_LEN {
        return Err(Error::Capability(format!(
            "simplex dimension {} exceeds {MAX_SHUFFLE_LEN}",
            factors.len()
        )));
    }
    let eval = |nsub: usize| -> f64 {
        if factors.is_empty() {
            return 1.0;
        }
        let h = (t - s) / nsub as f64;
        let values: Vec<Vec<f64>> = factors.iter().map(|f| sample_values(f, s, t, nsub)).collect();
        *cumulative_chain(&values, h).last().unwrap()
    };
    Ok(SimplexIntegral {
        s,
        t,
        m: factors.len(),
        n_sub,
        value: eval(n_sub),
        refined_value: eval(2 * n_sub),
    })
}

/// Crude sup and Lipschitz estimates from sampled values.
fn sup_and_lip(values: &[f64], h: f64) -> (f64, f64) {
    let sup = values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let lip = values
        .windows(2)
        .fold(0.0f64, |a, w| a.max((w[1] - w[0]).abs() / h));
    (sup, 1.1 * lip)
}

/// Declared error budget of the left-point nested quadrature.
///
/// An engineering bound, not a theorem: the left-point rule on each level
/// is first order, so the total error scales like `K (t-s)^M / n_sub` with
/// `K` built from factor sup and Lipschitz estimates, `M` the total
/// dimension, and one quadrature's budget per summed integral.
fn quad_budget(factor_values: &[&[f64]], s: f64, t: f64, n_sub: usize, n_terms: usize) -> f64 {
    let h = (t - s) / n_sub as f64;
    let mut sup_prod: f64 = 1.0;
    let mut lip_max: f64 = 0.0;
    for v in factor_values {
        let (sup, lip) = sup_and_lip(v, h);
        sup_prod *= sup.max(1.0);
        lip_max = lip_max.max(lip);
    }
    let m_total = factor_values.len();
    let k = 3.0 * m_total as f64 * sup_prod * (1.0 + lip_max) * (t - s).max(1.0);
    k * (t - s).powi(m_total as i32) / n_sub as f64 * (1 + n_terms) as f64
}

/// Outcome of one numerical identity verification.
#[derive(Clone, Debug)]
pub struct ShuffleCheck {
    pub m: usize,
    pub n: usize,
    /// Pin index for the nested identity, `None` for the plain one.
    pub k: Option<usize>,
    pub s: f64,
    pub t: f64,
    pub n_sub: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs|` at `n_sub` subdivisions.
    pub residual: f64,
    /// `|lhs - rhs|` at `2 n_sub`; should shrink roughly in half.
    pub residual_refined: f64,
    /// Declared quadrature budget at `n_sub`.
    pub budget: f64,
}

impl ShuffleCheck {
    pub fn pass(&self) -> bool {
        self.residual <= self.budget
    }
}

/// Evaluates both sides of the plain identity by quadrature.
///
/// `f` are the `m` outer factors, `g` the `n` factors of the second
/// integral; both integrals run over `[s, t]`.
pub fn verify_shuffle_identity(
    f: &[Factor1],
    g: &[Factor1],
    s: f64,
    t: f64,
    n_sub: usize,
) -> Result<ShuffleCheck> {
    let (m, n) = (f.len(), g.len());
    if m + n > MAX_VERIFY_LEN {
        return Err(Error::Capability(format!(
            "identity verification supports m + n <= {MAX_VERIFY_LEN}, got {}",
            m + n
        )));
    }
    check_interval(s, t, n_sub)?;
    let set = enumerate_shuffles(m, n, ShuffleVariant::Plain)?;
    let run = |nsub: usize| -> (f64, f64, f64) {
        let h = (t - s) / nsub as f64;
        let fv: Vec<Vec<f64>> = f.iter().map(|x| sample_values(x, s, t, nsub)).collect();
        let gv: Vec<Vec<f64>> = g.iter().map(|x| sample_values(x, s, t, nsub)).collect();
        let lhs = chain_value(&fv, h) * chain_value(&gv, h);
        let rhs = shuffle_sum_value(&fv, &gv, &set, h);
        let all: Vec<&[f64]> = fv.iter().chain(gv.iter()).map(Vec::as_slice).collect();
        let budget = quad_budget(&all, s, t, nsub, set.len() + 1);
        (lhs, rhs, budget)
    };
    let (lhs, rhs, budget) = run(n_sub);
    let (lhs2, rhs2, _) = run(2 * n_sub);
    Ok(ShuffleCheck {
        m,
        n,
        k: None,
        s,
        t,
        n_sub,
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        residual_refined: (lhs2 - rhs2).abs(),
        budget,
    })
}

/// Evaluates both sides of the pinned identity by quadrature.
pub fn verify_shuffle2_identity(
    f: &[Factor1],
    g: &[Factor1],
    k: usize,
    s: f64,
    t: f64,
    n_sub: usize,
) -> Result<ShuffleCheck> {
    let (m, n) = (f.len(), g.len());
    if m + n > MAX_VERIFY_LEN {
        return Err(Error::Capability(format!(
            "identity verification supports m + n <= {MAX_VERIFY_LEN}, got {}",
            m + n
        )));
    }
    check_interval(s, t, n_sub)?;
    let set = enumerate_shuffles(m, n, ShuffleVariant::Pinned { k })?;
    let run = |nsub: usize| -> (f64, f64, f64) {
        let h = (t - s) / nsub as f64;
        let fv: Vec<Vec<f64>> = f.iter().map(|x| sample_values(x, s, t, nsub)).collect();
        let gv: Vec<Vec<f64>> = g.iter().map(|x| sample_values(x, s, t, nsub)).collect();
        let lhs = if k == 0 {
            if n == 0 {
                chain_value(&fv, h)
            } else {
                0.0
            }
        } else {
            let v = cumulative_chain(&gv, h);
            let mut outer = fv.clone();
            for (o, vv) in outer[k - 1].iter_mut().zip(&v) {
                *o *= vv;
            }
            chain_value(&outer, h)
        };
        let rhs = shuffle_sum_value(&fv, &gv, &set, h);
        let all: Vec<&[f64]> = fv.iter().chain(gv.iter()).map(Vec::as_slice).collect();
        let budget = quad_budget(&all, s, t, nsub, set.len() + 1);
        (lhs, rhs, budget)
    };
    let (lhs, rhs, budget) = run(n_sub);
    let (lhs2, rhs2, _) = run(2 * n_sub);
    Ok(ShuffleCheck {
        m,
        n,
        k: Some(k),
        s,
        t,
        n_sub,
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        residual_refined: (lhs2 - rhs2).abs(),
        budget,
    })
}

fn chain_value(values: &[Vec<f64>], h: f64) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    *cumulative_chain(values, h).last().unwrap()
}

fn shuffle_sum_value(fv: &[Vec<f64>], gv: &[Vec<f64>], set: &ShuffleSet, h: f64) -> f64 {
    let all: Vec<&Vec<f64>> = fv.iter().chain(gv.iter()).collect();
    let mut rhs = 0.0;
    for perm in set.permutations() {
        if all.is_empty() {
            rhs += 1.0;
            continue;
        }
        let mut slots: Vec<&Vec<f64>> = vec![all[0]; all.len()];
        for (i, &slot) in perm.iter().enumerate() {
            slots[slot] = all[i];
        }
        let ordered: Vec<Vec<f64>> = slots.into_iter().cloned().collect();
        rhs += chain_value(&ordered, h);
    }
    rhs
}

// ---------------------------------------------------------------------------
// Moment bound
// ---------------------------------------------------------------------------

/// Monte Carlo verdict on the factorial moment bound for one word.
#[derive(Clone, Debug)]
pub struct BoundStatistic {
    /// Word length `m`.
    pub m: usize,
    /// `|E[int_{simplex} prod factors dt]|` by Monte Carlo.
    pub lhs: f64,
    /// Standard error of the (signed) mean under the absolute value.
    pub lhs_se: f64,
    /// `prod_i sup|b_i| (t - t_0)^{m/2} / Gamma(m/2 + 1)`.
    pub rhs_core: f64,
    /// `(lhs / rhs_core)^{1/m}`: the implied per-factor constant.
    pub ratio_root: f64,
    pub n_paths: u64,
}

/// Estimates the simplex-integral expectation for `word` over Brownian
/// paths on `[t0, t]` and reports it against the factorial envelope.
///
/// Per path, the nested integral is a left-point cumulative chain on an
/// `n_sub`-step grid with factor `i` evaluated at `B(t_j)`; the outer
/// expectation is a deterministic seeded Monte Carlo average.
pub fn check_moment_bound(
    word: &DerivativeWord,
    t0: f64,
    t: f64,
    n_paths: u64,
    n_sub: usize,
    master_seed: u64,
) -> Result<BoundStatistic> {
    let m = word.len();
    if m > MAX_WORD_LEN {
        return Err(Error::Capability(format!(
            "moment bound supports words of length <= {MAX_WORD_LEN}, got {m}"
        )));
    }
    check_interval(t0, t, n_sub)?;
    if n_paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    let grid = TimeGrid::new(t0, t, n_sub)?;
    let h = grid.dt();
    let d = word.dim();
    let acc = par_fold_chunks(
        n_paths as usize,
        DEFAULT_CHUNK,
        Moments::default,
        |acc, i| {
            let path = BrownianPath::sample(&grid, d, &SeedSpec::new(master_seed, i as u64))?;
            // Left-point chain along this path's values.
            let mut g = vec![1.0; n_sub + 1];
            for fi in 0..m {
                let mut acc_sum = 0.0;
                let mut next = vec![0.0; n_sub + 1];
                for r in 1..=n_sub {
                    let x = path.value(r - 1);
                    acc_sum += word.factor_value(fi, x.as_slice().unwrap()) * g[r - 1] * h;
                    next[r] = acc_sum;
                }
                g = next;
            }
            acc.push(g[n_sub]);
            Ok(())
        },
        |a, b| a.merge(b),
    )?;
    let mean = acc.mean();
    let lhs = mean.abs();
    let log_rhs = 0.5 * m as f64 * (t - t0).ln() - ln_gamma(0.5 * m as f64 + 1.0);
    let rhs_core = word.sup_product() * log_rhs.exp();
    let ratio_root = if lhs > 0.0 && rhs_core > 0.0 {
        (lhs / rhs_core).powf(1.0 / m as f64)
    } else {
        0.0
    };
    Ok(BoundStatistic {
        m,
        lhs,
        lhs_se: acc.std_error(),
        rhs_core,
        ratio_root,
        n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{DerivativeWord, ProductBump, ScalarBump};
    use num::ToPrimitive;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(p.into(), q.into())
    }

    fn poly(coeffs: &[f64]) -> RatPoly {
        RatPoly::from_f64_coeffs(coeffs).unwrap()
    }

    #[test]
    fn plain_counts_match_binomial() {
        for m in 0..=6usize {
            for n in 0..=6usize {
                let set = enumerate_shuffles(m, n, ShuffleVariant::Plain).unwrap();
                assert_eq!(set.len() as u128, binomial(m + n, m), "({m},{n})");
                // Each permutation increases within both blocks.
                for perm in set.permutations() {
                    assert!(perm[..m].windows(2).all(|w| w[0] < w[1]));
                    assert!(perm[m..].windows(2).all(|w| w[0] < w[1]));
                }
            }
        }
        assert!(enumerate_shuffles(7, 6, ShuffleVariant::Plain).is_err());
    }

    #[test]
    fn pinned_counts_and_pins() {
        for m in 1..=4usize {
            for n in 0..=4usize {
                for k in 0..=m {
                    let set = enumerate_shuffles(m, n, ShuffleVariant::Pinned { k }).unwrap();
                    assert_eq!(set.len() as u128, set.expected_len(), "({m},{n},{k})");
                    let plain = enumerate_shuffles(m, n, ShuffleVariant::Plain).unwrap();
                    for perm in set.permutations() {
                        assert!(plain.permutations().contains(perm), "pinned not a shuffle");
                        for j in k.max(1)..=m {
                            assert_eq!(perm[j - 1], n + j - 1, "pin violated at {j}");
                        }
                    }
                }
            }
        }
        // k = 0 with a non-trivial inner block: empty set.
        assert!(enumerate_shuffles(2, 1, ShuffleVariant::Pinned { k: 0 })
            .unwrap()
            .is_empty());
        assert!(enumerate_shuffles(2, 1, ShuffleVariant::Pinned { k: 3 }).is_err());
    }

    #[test]
    fn symbolic_volume_and_monomial_values() {
        let one = RatPoly::one();
        let s = rat(0, 1);
        let t = rat(1, 1);
        let vol3 = symbolic_simplex_integral(&[one.clone(), one.clone(), one.clone()], &s, &t);
        assert_eq!(vol3, rat(1, 6));
        // int_{0<u1<u2<1} u1 u2 = 1/8.
        let u = poly(&[0.0, 1.0]);
        assert_eq!(
            symbolic_simplex_integral(&[u.clone(), u.clone()], &s, &t),
            rat(1, 8)
        );
        // Empty product convention.
        assert_eq!(symbolic_simplex_integral(&[], &s, &t), rat(1, 1));
    }

    #[test]
    fn symbolic_shuffle_identity_holds_exactly() {
        let s = rat(0, 1);
        let t = rat(1, 1);
        let pool = [
            poly(&[1.0]),
            poly(&[0.0, 1.0]),
            poly(&[1.0, -2.0]),
            poly(&[0.5, 0.0, 1.0]),
        ];
        for m in 0..=2usize {
            for n in 0..=2usize {
                let f: Vec<RatPoly> = (0..m).map(|i| pool[i % pool.len()].clone()).collect();
                let g: Vec<RatPoly> = (0..n).map(|i| pool[(i + 2) % pool.len()].clone()).collect();
                let (lhs, rhs) = symbolic_shuffle_sides(&f, &g, &s, &t).unwrap();
                assert_eq!(lhs, rhs, "shuffle identity broke at ({m},{n})");
            }
        }
    }

    #[test]
    fn symbolic_pinned_identity_holds_exactly() {
        let s = rat(0, 1);
        let t = rat(1, 1);
        let pool = [
            poly(&[0.0, 1.0]),
            poly(&[1.0, 1.0]),
            poly(&[2.0, 0.0, -1.0]),
            poly(&[1.0]),
        ];
        for m in 1..=3usize {
            for n in 0..=2usize {
                for k in 0..=m {
                    let f: Vec<RatPoly> = (0..m).map(|i| pool[i % pool.len()].clone()).collect();
                    let g: Vec<RatPoly> =
                        (0..n).map(|i| pool[(i + 1) % pool.len()].clone()).collect();
                    let (lhs, rhs) = symbolic_shuffle2_sides(&f, &g, k, &s, &t).unwrap();
                    assert_eq!(lhs, rhs, "pinned identity broke at ({m},{n},{k})");
                }
            }
        }
    }

    #[test]
    fn quadrature_tracks_the_symbolic_oracle() {
        // Non-constant factors so the left-point rule has a genuine
        // first-order error to halve.
        let coeff_sets: Vec<Vec<f64>> = vec![vec![0.0, 1.0], vec![1.0, -1.0, 0.5], vec![2.0, 1.0]];
        let s = 0.0;
        let t = 1.0;
        for m in 1..=3usize {
            let factors: Vec<Factor1> = (0..m)
                .map(|i| poly_factor(&coeff_sets[i % coeff_sets.len()]))
                .collect();
            let polys: Vec<RatPoly> = (0..m)
                .map(|i| poly(&coeff_sets[i % coeff_sets.len()]))
                .collect();
            let quad = simplex_quad(&factors, s, t, 2000).unwrap();
            let exact = symbolic_simplex_integral(&polys, &rat(0, 1), &rat(1, 1))
                .to_f64()
                .unwrap();
            let err = (quad.value - exact).abs();
            let err_fine = (quad.refined_value - exact).abs();
            assert!(err < 5e-3, "m={m}: quadrature error {err}");
            // First-order rule: error roughly halves.
            let ratio = err_fine / err;
            assert!(
                (0.3..=0.7).contains(&ratio),
                "m={m}: refinement ratio {ratio} not near 1/2 (err {err}, fine {err_fine})"
            );
        }
    }

    #[test]
    fn simplex_volume_example() {
        let one: Factor1 = Arc::new(|_| 1.0);
        let q = simplex_quad(&[one.clone(), one.clone(), one.clone()], 0.0, 1.0, 2000).unwrap();
        assert!((q.value - 1.0 / 6.0).abs() < 1e-3);
        let empty = simplex_quad(&[], 0.0, 1.0, 10).unwrap();
        assert_eq!(empty.value, 1.0);
    }

    #[test]
    fn numerical_shuffle_identity_within_budget() {
        let f: Vec<Factor1> = vec![poly_factor(&[1.0]), poly_factor(&[0.0, 1.0])];
        let g: Vec<Factor1> = vec![poly_factor(&[1.0, -1.0])];
        let check = verify_shuffle_identity(&f, &g, 0.0, 1.0, 1000).unwrap();
        assert!(check.pass(), "residual {} budget {}", check.residual, check.budget);
        assert!(check.residual_refined <= check.residual * 1.05);

        // Constant factors, m = n = 1: both sides analytic.
        let one: Vec<Factor1> = vec![Arc::new(|_| 1.0)];
        let check = verify_shuffle_identity(&one, &one, 0.0, 2.0, 500).unwrap();
        assert!((check.lhs - 4.0).abs() < 1e-10);
        assert!((check.rhs - 4.0).abs() < 2e-2);
        assert!(check.pass());

        // n = 0 is trivially exact.
        let check = verify_shuffle_identity(&one, &[], 0.0, 1.0, 100).unwrap();
        assert_eq!(check.residual, 0.0);
    }

    #[test]
    fn numerical_pinned_identity_within_budget() {
        let f: Vec<Factor1> = vec![poly_factor(&[1.0]), poly_factor(&[0.0, 1.0])];
        let g: Vec<Factor1> = vec![poly_factor(&[1.0, 1.0])];
        for k in 0..=2usize {
            let check = verify_shuffle2_identity(&f, &g, k, 0.0, 1.0, 1000).unwrap();
            assert!(
                check.pass(),
                "k={k}: residual {} budget {}",
                check.residual,
                check.budget
            );
        }
        // Oversized pin index is rejected.
        assert!(verify_shuffle2_identity(&f, &g, 3, 0.0, 1.0, 100).is_err());
    }

    #[test]
    fn moment_bound_single_factor() {
        let bump = ProductBump::isotropic(1, ScalarBump::new(0.5, 1.0, 1.0).unwrap()).unwrap();
        let word = DerivativeWord::new(vec![bump], vec![None]).unwrap();
        let stat = check_moment_bound(&word, 0.0, 1.0, 2000, 200, 0x5017).unwrap();
        // One underived bounded factor: lhs <= sup * (t - t0).
        assert!(stat.lhs <= 1.0 + 3.0 * stat.lhs_se);
        assert!(stat.ratio_root.is_finite());
        assert!(stat.rhs_core > 0.0);
    }

    #[test]
    fn moment_bound_vanishes_off_support() {
        // Support far outside the Brownian range on [0, 1].
        let bump = ProductBump::isotropic(1, ScalarBump::new(100.0, 1.0, 1.0).unwrap()).unwrap();
        let word = DerivativeWord::new(vec![bump], vec![Some(0)]).unwrap();
        let stat = check_moment_bound(&word, 0.0, 1.0, 2000, 100, 0x5017).unwrap();
        assert!(stat.lhs <= 3.0 * stat.lhs_se.max(1e-300));
        assert_eq!(stat.lhs, 0.0);
    }

    #[test]
    fn moment_bound_guards() {
        let bump = ProductBump::isotropic(1, ScalarBump::new(0.0, 1.0, 1.0).unwrap()).unwrap();
        let word = DerivativeWord::new(vec![bump; 9], vec![None; 9]).unwrap();
        assert!(matches!(
            check_moment_bound(&word, 0.0, 1.0, 10, 10, 0),
            Err(Error::Capability(_))
        ));
    }
}
