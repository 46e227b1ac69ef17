//! Uniform time grids and reproducible Brownian path sampling.
//!
//! A [`TimeGrid`] carries `n_steps + 1` nodes `t_0 < t_1 < ... < t_n = T`
//! with uniform spacing `dt = (T - t_0)/n_steps`.  A [`BrownianPath`] stores
//! the `n_steps x d` matrix of increments `dB_j ~ N(0, dt I_d)` together
//! with the partial sums `B(t_j)`.
//!
//! Sampling is reproducible and scheduler-independent: the generator state
//! for a path is a pure function of `(master_seed, path_index)`, obtained by
//! hashing both into a 256-bit ChaCha seed.  Drawing paths in parallel in
//! any order therefore yields the same multiset of paths as a sequential
//! loop.
//!
//! [`BrownianPath::refine`] performs Brownian-bridge midpoint insertion:
//! each increment over `[t_j, t_{j+1}]` is split into two half-step
//! increments whose sum reproduces the original increment to one rounding
//! error, with the midpoint fluctuation drawn from `N(0, dt/4)`.  Refinement is the tool
//! behind `dt -> dt/2` convergence studies that keep the underlying
//! Brownian path fixed.

use std::io::{self, Write};

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::{CSV_SCHEMA, VERSION};

/// Uniform partition of `[t_0, T]` into `n_steps` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n_steps: usize,
    dt: f64,
    nodes: Vec<f64>,
}

impl TimeGrid {
    /// Builds the grid; requires `t_end > t0`, `n_steps >= 1` and finite
    /// endpoints.
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::invalid("grid endpoints must be finite"));
        }
        if t_end <= t0 {
            return Err(Error::invalid(format!(
                "grid needs t_end > t0, got t0 = {t0}, t_end = {t_end}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        let dt = (t_end - t0) / n_steps as f64;
        let mut nodes: Vec<f64> = (0..=n_steps).map(|j| t0 + j as f64 * dt).collect();
        // Pin the last node to the requested endpoint; t0 + n*dt can be a
        // few ulp off when t0 != 0.
        nodes[n_steps] = t_end;
        Ok(TimeGrid {
            t0,
            t_end,
            n_steps,
            dt,
            nodes,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Uniform step size used by all quadratures on this grid.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `j`-th node, `0 <= j <= n_steps`.
    pub fn node(&self, j: usize) -> f64 {
        self.nodes[j]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Grid over the same interval with twice as many steps.
    pub fn refined(&self) -> TimeGrid {
        TimeGrid::new(self.t0, self.t_end, 2 * self.n_steps).expect("refining a valid grid")
    }

    /// Index of the node equal to `t` within `tol`, if any.
    pub fn find_node(&self, t: f64, tol: f64) -> Option<usize> {
        if t < self.t0 - tol || t > self.t_end + tol {
            return None;
        }
        let j = (((t - self.t0) / self.dt).round() as isize).clamp(0, self.n_steps as isize) as usize;
        if (self.nodes[j] - t).abs() <= tol {
            Some(j)
        } else {
            None
        }
    }
}

/// Identifies one path within a reproducible Monte Carlo experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub path_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        SeedSpec {
            master_seed,
            path_index,
        }
    }

    /// Generator for the path itself (stream 0).
    pub fn rng(&self) -> ChaCha8Rng {
        self.rng_stream(0)
    }

    /// Generator for an auxiliary purpose tied to this path.
    ///
    /// Stream 0 is the path's own increments; bridge refinement onto a grid
    /// with `m` steps uses stream `m` (distinct per level since step counts
    /// double).  Distinct streams hash to unrelated 256-bit seeds.
    pub fn rng_stream(&self, stream: u64) -> ChaCha8Rng {
        let mut state = mix64(
            self.master_seed
                ^ mix64(self.path_index.wrapping_add(0x9E37_79B9_7F4A_7C15))
                ^ mix64(stream.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(1)),
        );
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// Splits `db` into halves `(db/2 + eta, db - (db/2 + eta))`.
///
/// The floating-point sum of the pair reproduces `db` up to the single
/// rounding of the complement, i.e. to one ulp; when `|eta| <= |db|` the
/// complement is often exact and the sum reproduces `db` bit-for-bit.
fn split_halves(db: f64, eta: f64) -> (f64, f64) {
    let first = 0.5 * db + eta;
    (first, db - first)
}

/// Finalizer of SplitMix64; full-avalanche 64-bit mix.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 step: advances `state` and returns the next output word.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    mix64(*state)
}

/// A sampled d-dimensional Brownian path on a uniform grid.
#[derive(Clone, Debug)]
pub struct BrownianPath {
    grid: TimeGrid,
    dim: usize,
    /// Row `j` holds the increment over `[t_j, t_{j+1}]`; shape `(n_steps, d)`.
    increments: Array2<f64>,
    /// Row `j` holds `B(t_j)`; shape `(n_steps + 1, d)`, row 0 is zero.
    values: Array2<f64>,
}

impl BrownianPath {
    /// Draws a path on `grid` from the generator state determined by `seed`.
    pub fn sample(grid: &TimeGrid, dim: usize, seed: &SeedSpec) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("path dimension must be at least 1"));
        }
        let mut rng = seed.rng();
        let sqrt_dt = grid.dt().sqrt();
        let n = grid.n_steps();
        let mut increments = Array2::zeros((n, dim));
        for j in 0..n {
            for k in 0..dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                increments[(j, k)] = sqrt_dt * z;
            }
        }
        Self::from_increments(grid.clone(), increments)
    }

    /// Wraps externally supplied increments (shape `(n_steps, d)`).
    pub fn from_increments(grid: TimeGrid, increments: Array2<f64>) -> Result<Self> {
        if increments.nrows() != grid.n_steps() {
            return Err(Error::invalid(format!(
                "increment rows ({}) must match grid steps ({})",
                increments.nrows(),
                grid.n_steps()
            )));
        }
        let dim = increments.ncols();
        if dim == 0 {
            return Err(Error::invalid("path dimension must be at least 1"));
        }
        let mut values = Array2::zeros((grid.n_steps() + 1, dim));
        for j in 0..grid.n_steps() {
            for k in 0..dim {
                values[(j + 1, k)] = values[(j, k)] + increments[(j, k)];
            }
        }
        Ok(BrownianPath {
            grid,
            dim,
            increments,
            values,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Increment over `[t_j, t_{j+1}]`.
    pub fn increment(&self, j: usize) -> ArrayView1<'_, f64> {
        self.increments.row(j)
    }

    pub fn increments(&self) -> &Array2<f64> {
        &self.increments
    }

    /// `B(t_j)`.
    pub fn value(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.row(j)
    }

    /// `B(T)`.
    pub fn terminal(&self) -> ArrayView1<'_, f64> {
        self.values.row(self.grid.n_steps())
    }

    /// Linear interpolation of the stored nodes at an intermediate time.
    ///
    /// Exact at nodes; errors if `s` lies outside `[t_0, T]`.
    pub fn bridge_value(&self, s: f64) -> Result<Array1<f64>> {
        let grid = &self.grid;
        if !(grid.t0()..=grid.t_end()).contains(&s) {
            return Err(Error::OutOfRange(format!(
                "time {s} outside [{}, {}]",
                grid.t0(),
                grid.t_end()
            )));
        }
        let j = (((s - grid.t0()) / grid.dt()).floor() as usize).min(grid.n_steps() - 1);
        let (a, b) = (grid.node(j), grid.node(j + 1));
        let lambda = (s - a) / (b - a);
        let lo = self.values.row(j);
        let hi = self.values.row(j + 1);
        Ok(Array1::from_shape_fn(self.dim, |k| {
            lo[k] + lambda * (hi[k] - lo[k])
        }))
    }

    /// Brownian-bridge refinement onto the doubled grid.
    ///
    /// Every coarse increment `dB` over a step of length `dt` is split as
    /// `dB/2 + eta` and `dB - (dB/2 + eta)` with `eta ~ N(0, dt/4)`, so the
    /// two halves sum to `dB` up to one rounding error and the coarse path
    /// is preserved at shared nodes to the same accuracy.  The bridge
    /// noise comes from the stream indexed by the refined step count, making
    /// multi-level refinement a pure function of `seed`.
    pub fn refine(&self, seed: &SeedSpec) -> BrownianPath {
        let fine_grid = self.grid.refined();
        let mut rng = seed.rng_stream(fine_grid.n_steps() as u64);
        let half_sd = (self.grid.dt() / 4.0).sqrt();
        let n = self.grid.n_steps();
        let mut increments = Array2::zeros((2 * n, self.dim));
        for j in 0..n {
            for k in 0..self.dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                let eta = half_sd * z;
                let (first, second) = split_halves(self.increments[(j, k)], eta);
                increments[(2 * j, k)] = first;
                increments[(2 * j + 1, k)] = second;
            }
        }
        BrownianPath::from_increments(fine_grid, increments).expect("refined path is well-formed")
    }

    /// Writes the path as CSV (`t,b1,...,bd`) with the schema header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# malliavin-flow v{VERSION} schema={CSV_SCHEMA}")?;
        let cols: Vec<String> = (1..=self.dim).map(|k| format!("b{k}")).collect();
        writeln!(w, "t,{}", cols.join(","))?;
        for j in 0..=self.grid.n_steps() {
            let row: Vec<String> = self
                .values
                .row(j)
                .iter()
                .map(|v| format!("{v:.17e}"))
                .collect();
            writeln!(w, "{:.17e},{}", self.grid.node(j), row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::{par_fold_chunks, Moments};

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(0.0, 1.0, 8).unwrap();
        assert_eq!(g.n_steps(), 8);
        assert_eq!(g.dt(), 0.125);
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(8), 1.0);
        for j in 0..8 {
            assert!(g.node(j) < g.node(j + 1));
        }
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(TimeGrid::new(0.0, 0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(f64::NAN, 1.0, 4).is_err());
    }

    #[test]
    fn grid_endpoint_pinned_for_offset_start() {
        let g = TimeGrid::new(0.1, 0.3, 7).unwrap();
        assert_eq!(g.node(7), 0.3);
        assert!(g.node(6) < g.node(7));
    }

    #[test]
    fn sampling_is_reproducible_and_seed_sensitive() {
        let g = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let a = BrownianPath::sample(&g, 2, &SeedSpec::new(7, 3)).unwrap();
        let b = BrownianPath::sample(&g, 2, &SeedSpec::new(7, 3)).unwrap();
        assert_eq!(a.increments(), b.increments());
        let c = BrownianPath::sample(&g, 2, &SeedSpec::new(7, 4)).unwrap();
        assert_ne!(a.increments(), c.increments());
        let d = BrownianPath::sample(&g, 2, &SeedSpec::new(8, 3)).unwrap();
        assert_ne!(a.increments(), d.increments());
    }

    #[test]
    fn parallel_sampling_matches_sequential() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let sequential: Vec<f64> = (0..64)
            .map(|i| {
                BrownianPath::sample(&g, 1, &SeedSpec::new(42, i))
                    .unwrap()
                    .terminal()[0]
            })
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(5)
            .build()
            .unwrap();
        let parallel: Vec<f64> = pool.install(|| {
            use rayon::prelude::*;
            (0..64u64)
                .into_par_iter()
                .map(|i| {
                    BrownianPath::sample(&g, 1, &SeedSpec::new(42, i))
                        .unwrap()
                        .terminal()[0]
                })
                .collect()
        });
        assert_eq!(sequential, parallel);
    }

    #[test]
    fn bridge_value_interpolates() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let p = BrownianPath::sample(&g, 1, &SeedSpec::new(1, 0)).unwrap();
        // Exact at nodes.
        for j in 0..=4 {
            assert_eq!(p.bridge_value(g.node(j)).unwrap()[0], p.value(j)[0]);
        }
        // Midpoint is the average of the bracketing nodes.
        let mid = p.bridge_value(0.125).unwrap()[0];
        assert!((mid - 0.5 * (p.value(0)[0] + p.value(1)[0])).abs() < 1e-15);
        assert!(p.bridge_value(-0.1).is_err());
        assert!(p.bridge_value(1.1).is_err());
    }

    #[test]
    fn refinement_preserves_coarse_increments() {
        let g = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let seed = SeedSpec::new(11, 5);
        let coarse = BrownianPath::sample(&g, 2, &seed).unwrap();
        let fine = coarse.refine(&seed);
        assert_eq!(fine.grid().n_steps(), 64);
        for j in 0..32 {
            for k in 0..2 {
                let a = fine.increments()[(2 * j, k)];
                let b = fine.increments()[(2 * j + 1, k)];
                let tol = 1e-15 * (1.0 + a.abs() + b.abs());
                assert!(
                    (a + b - coarse.increments()[(j, k)]).abs() <= tol,
                    "step {j} coord {k}"
                );
            }
        }
        // Deterministic: refining again gives the same path.
        let fine2 = coarse.refine(&seed);
        assert_eq!(fine.increments(), fine2.increments());
    }

    #[test]
    fn refinement_midpoints_have_bridge_variance() {
        // Midpoint deviation from the chord has variance dt/4.
        let g = TimeGrid::new(0.0, 1.0, 1).unwrap();
        let mut dev = Moments::default();
        for i in 0..20_000u64 {
            let seed = SeedSpec::new(99, i);
            let coarse = BrownianPath::sample(&g, 1, &seed).unwrap();
            let fine = coarse.refine(&seed);
            let chord_mid = 0.5 * coarse.terminal()[0];
            dev.push(fine.value(1)[0] - chord_mid);
        }
        let var = dev.sum_sq / dev.n as f64;
        assert!(
            (var - 0.25).abs() < 0.01,
            "bridge midpoint variance {var}, expected 0.25"
        );
    }

    /// Terminal-value statistics over 10^5 paths: 4-sigma mean band,
    /// 5%-relative variance band, and a 4-sigma band on the cross-coordinate
    /// increment covariance.
    #[test]
    fn terminal_statistics_match_brownian_law() {
        let n_paths = 100_000usize;
        let g = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let t_end = g.t_end();
        struct Acc {
            b1: Moments,
            cross: Moments,
        }
        let acc = par_fold_chunks(
            n_paths,
            crate::util::DEFAULT_CHUNK,
            || Acc {
                b1: Moments::default(),
                cross: Moments::default(),
            },
            |acc, i| {
                let p = BrownianPath::sample(&g, 2, &SeedSpec::new(2024, i as u64))?;
                acc.b1.push(p.terminal()[0]);
                for j in 0..g.n_steps() {
                    acc.cross.push(p.increments()[(j, 0)] * p.increments()[(j, 1)]);
                }
                Ok(())
            },
            |a, b| {
                a.b1.merge(b.b1);
                a.cross.merge(b.cross);
            },
        )
        .unwrap();

        let mean = acc.b1.mean();
        let band = 4.0 * (t_end / n_paths as f64).sqrt();
        assert!(mean.abs() < band, "terminal mean {mean} outside 4-sigma {band}");

        let var = acc.b1.sum_sq / n_paths as f64 - mean * mean;
        assert!(
            (var - t_end).abs() / t_end < 0.05,
            "terminal variance {var} more than 5% from {t_end}"
        );

        // E[dB^1 dB^2] = 0 with per-term variance dt^2.
        let cross_mean = acc.cross.mean();
        let cross_band = 4.0 * g.dt() / (acc.cross.n as f64).sqrt();
        assert!(
            cross_mean.abs() < cross_band,
            "increment cross-covariance {cross_mean} outside {cross_band}"
        );
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let p = BrownianPath::sample(&g, 2, &SeedSpec::new(3, 0)).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("# malliavin-flow v"));
        assert!(header.contains("schema=1"));
        assert_eq!(lines.next().unwrap(), "t,b1,b2");
        assert_eq!(lines.count(), 3);
    }
}
