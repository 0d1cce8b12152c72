//! Representations of the (unnormalized) stationary density and the drift of
//! the transformed SDE whose expectations solve the ratio equation
//! `h = p / p_inf`.
//!
//! All representations expose a log-density (defined up to an additive
//! constant) and its gradient, the score. The transformed drift is
//! `sigma^2 * score - mu`; for gradient systems with the closed-form
//! stationary density this collapses back to `mu` itself.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{read_grid_file, write_grid_file, RegularGrid};
use crate::rng::{purpose, Stream};
use crate::systems::SystemSpec;
use crate::trajectories::Aabb;

/// How grid-tabulated densities answer queries outside their extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extrapolation {
    /// Out-of-domain queries are errors.
    Strict,
    /// Clamp to the nearest face: constant log-density along the escape
    /// direction, one-sided boundary differences for the score.
    Clamp,
}

/// Log-density tabulated on a regular grid, with precomputed per-axis
/// central-difference fields so the score is a deterministic interpolation.
#[derive(Clone, Debug)]
pub struct GridDensity {
    grid: RegularGrid,
    log_values: Vec<f64>,
    /// One central-difference field per axis (one-sided at boundary slabs).
    diffs: Vec<Vec<f64>>,
    extrapolation: Extrapolation,
}

impl GridDensity {
    pub fn new(grid: RegularGrid, log_values: Vec<f64>, extrapolation: Extrapolation) -> Result<Self> {
        if log_values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "grid has {} nodes but {} log-density values were supplied",
                grid.len(),
                log_values.len()
            )));
        }
        if log_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "log-density values must all be finite".into(),
            ));
        }
        let diffs = central_differences(&grid, &log_values);
        Ok(GridDensity {
            grid,
            log_values,
            diffs,
            extrapolation,
        })
    }

    pub fn grid(&self) -> &RegularGrid {
        &self.grid
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn extrapolation(&self) -> Extrapolation {
        self.extrapolation
    }
}

/// Per-axis gradient fields of the tabulated log-density.
fn central_differences(grid: &RegularGrid, values: &[f64]) -> Vec<Vec<f64>> {
    let d = grid.dim();
    let mut fields = Vec::with_capacity(d);
    for a in 0..d {
        let spacing = grid.axes()[a].spacing();
        let count = grid.axes()[a].count;
        let field: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                let mut idx = vec![0usize; d];
                grid.unravel(flat, &mut idx);
                let i = idx[a];
                if i == 0 {
                    idx[a] = 1;
                    let up = values[grid.ravel(&idx)];
                    (up - values[flat]) / spacing
                } else if i == count - 1 {
                    idx[a] = i - 1;
                    let down = values[grid.ravel(&idx)];
                    (values[flat] - down) / spacing
                } else {
                    idx[a] = i + 1;
                    let up = values[grid.ravel(&idx)];
                    idx[a] = i - 1;
                    let down = values[grid.ravel(&idx)];
                    (up - down) / (2.0 * spacing)
                }
            })
            .collect();
        fields.push(field);
    }
    fields
}

#[derive(Clone, Debug)]
enum Repr {
    /// Closed form for gradient systems: `log p_inf = -2 V / sigma^2`.
    GradientAnalytic { system: SystemSpec },
    /// Diagonal Gaussian with the given mean and per-axis variance.
    GaussianAnalytic { mean: Vec<f64>, variance: Vec<f64> },
    /// Tabulated on a regular grid.
    GridTabulated(GridDensity),
}

/// An unnormalized stationary density: log-density plus score.
///
/// Immutable after construction; shared freely across threads. The
/// `log_offset` field realizes the free normalization constant explicitly:
/// shifting it changes `log_density` by a constant and provably leaves the
/// score, the transformed drift and every density estimate invariant.
#[derive(Clone, Debug)]
pub struct StationaryDensity {
    repr: Repr,
    log_offset: f64,
}

impl StationaryDensity {
    /// Closed-form stationary density of a gradient system.
    pub fn gradient_analytic(system: &SystemSpec) -> Result<Self> {
        if !system.is_gradient() {
            return Err(Error::InvalidArgument(format!(
                "system `{}` has no potential; its stationary density is not available in closed form",
                system.name
            )));
        }
        if !(system.sigma > 0.0) {
            return Err(Error::InvalidArgument(
                "closed-form stationary density requires sigma > 0".into(),
            ));
        }
        Ok(StationaryDensity {
            repr: Repr::GradientAnalytic {
                system: system.clone(),
            },
            log_offset: 0.0,
        })
    }

    pub fn gaussian(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() || mean.is_empty() {
            return Err(Error::InvalidArgument(
                "mean and variance must be nonempty and of equal length".into(),
            ));
        }
        if variance.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("variances must be positive".into()));
        }
        Ok(StationaryDensity {
            repr: Repr::GaussianAnalytic { mean, variance },
            log_offset: 0.0,
        })
    }

    pub fn grid(grid: GridDensity) -> Self {
        StationaryDensity {
            repr: Repr::GridTabulated(grid),
            log_offset: 0.0,
        }
    }

    pub fn from_grid_file(path: &Path, extrapolation: Extrapolation) -> Result<Self> {
        let (grid, values) = read_grid_file(path)?;
        Ok(StationaryDensity::grid(GridDensity::new(grid, values, extrapolation)?))
    }

    pub fn write_grid_file(&self, path: &Path) -> Result<()> {
        match &self.repr {
            Repr::GridTabulated(g) => write_grid_file(path, &g.grid, &g.log_values),
            _ => Err(Error::InvalidArgument(
                "only grid-tabulated densities can be written to a grid file".into(),
            )),
        }
    }

    /// Shift the log-density by a constant (multiply the density by e^c).
    pub fn with_log_offset(mut self, c: f64) -> Self {
        self.log_offset += c;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            Repr::GradientAnalytic { system } => system.dim,
            Repr::GaussianAnalytic { mean, .. } => mean.len(),
            Repr::GridTabulated(g) => g.grid.dim(),
        }
    }

    pub fn as_grid(&self) -> Option<&GridDensity> {
        match &self.repr {
            Repr::GridTabulated(g) => Some(g),
            _ => None,
        }
    }

    /// Unnormalized log-density. Errors for out-of-extent queries on a
    /// strict grid tabulation.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_query(x)?;
        Ok(self.log_density_clamped(x))
    }

    /// Unnormalized log-density with clamp extrapolation (total function).
    pub fn log_density_clamped(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let v = match &self.repr {
            Repr::GradientAnalytic { system } => {
                let v = system.potential(x).expect("gradient system has a potential");
                -2.0 * v / (system.sigma * system.sigma)
            }
            Repr::GaussianAnalytic { mean, variance } => {
                let mut q = 0.0;
                for a in 0..mean.len() {
                    let d = x[a] - mean[a];
                    q += d * d / variance[a];
                }
                -0.5 * q
            }
            Repr::GridTabulated(g) => g.grid.interpolate_clamped(&g.log_values, x),
        };
        v + self.log_offset
    }

    /// Gradient of the log-density.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_query(x)?;
        let mut out = vec![0.0; self.dim()];
        self.score_clamped_into(x, &mut out);
        Ok(out)
    }

    /// Score with clamp extrapolation; offset-free by construction.
    pub fn score_clamped_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        match &self.repr {
            Repr::GradientAnalytic { system } => {
                // score = -2 grad V / sigma^2
                system.potential_gradient(x, out);
                let scale = -2.0 / (system.sigma * system.sigma);
                for v in out.iter_mut() {
                    *v *= scale;
                }
            }
            Repr::GaussianAnalytic { mean, variance } => {
                for a in 0..mean.len() {
                    out[a] = -(x[a] - mean[a]) / variance[a];
                }
            }
            Repr::GridTabulated(g) => {
                for (a, field) in g.diffs.iter().enumerate() {
                    out[a] = g.grid.interpolate_clamped(field, x);
                }
            }
        }
    }

    fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if let Repr::GridTabulated(g) = &self.repr {
            if g.extrapolation == Extrapolation::Strict && !g.grid.contains(x) {
                return Err(Error::OutOfDomain { point: x.to_vec() });
            }
        }
        Ok(())
    }
}

/// Drift of the transformed SDE: `sigma^2 * score(x) - mu(x)`.
pub fn hsde_drift(pinf: &StationaryDensity, sys: &SystemSpec, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != sys.dim {
        return Err(Error::DimensionMismatch {
            expected: sys.dim,
            got: x.len(),
        });
    }
    let score = pinf.score(x)?;
    let mut mu = vec![0.0; sys.dim];
    sys.drift_into(x, &mut mu);
    let s2 = sys.sigma * sys.sigma;
    Ok(score
        .iter()
        .zip(&mu)
        .map(|(sc, m)| s2 * sc - m)
        .collect())
}

/// Allocation-free transformed-drift evaluator for simulation loops.
/// Uses clamp extrapolation so it is total; escapes are accounted for by the
/// containment flags, not by failures mid-step.
pub fn hsde_drift_fn<'a>(
    pinf: &'a StationaryDensity,
    sys: &'a SystemSpec,
) -> impl Fn(&[f64], &mut [f64]) + Sync + 'a {
    let s2 = sys.sigma * sys.sigma;
    let dim = sys.dim;
    move |x: &[f64], out: &mut [f64]| {
        pinf.score_clamped_into(x, out);
        let mut mu = [0.0f64; 16];
        debug_assert!(dim <= 16);
        sys.drift_into(x, &mut mu[..dim]);
        for a in 0..dim {
            out[a] = s2 * out[a] - mu[a];
        }
    }
}

/// Tabulate an analytic stationary density on a grid over `omega`.
pub fn tabulate(
    pinf: &StationaryDensity,
    omega: &Aabb,
    counts: &[usize],
    extrapolation: Extrapolation,
) -> Result<GridDensity> {
    let grid = RegularGrid::from_bounds(omega.lo(), omega.hi(), counts)?;
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|flat| pinf.log_density_clamped(&grid.node(flat)))
        .collect();
    GridDensity::new(grid, values, extrapolation)
}

/// Parameters for estimating a stationary log-density grid from long
/// simulations of the original SDE (the documented recipe for non-gradient
/// systems): burn in, then deposit snapshots of the ensemble into a
/// histogram over `omega`, Laplace-smooth, Gaussian-blur, and take logs.
#[derive(Clone, Copy, Debug)]
pub struct InvariantGridConfig {
    pub n_particles: usize,
    pub burn_in: f64,
    pub snapshots: usize,
    pub snapshot_gap: f64,
    pub dt: f64,
    /// Pseudo-count added to every box before taking logs.
    pub pseudo_count: f64,
    /// Gaussian blur radius in units of grid cells (0 disables smoothing).
    pub blur_cells: f64,
    pub seed: u64,
}

impl Default for InvariantGridConfig {
    fn default() -> Self {
        InvariantGridConfig {
            n_particles: 100_000,
            burn_in: 20.0,
            snapshots: 20,
            snapshot_gap: 1.0,
            dt: 0.02,
            pseudo_count: 0.25,
            blur_cells: 1.0,
            seed: 1,
        }
    }
}

/// Estimate `log p_inf` on a node grid over `omega` by evolving an ensemble
/// of the original SDE to stationarity and smoothing the occupation
/// histogram. Particles start from the system's initial density; samples
/// outside `omega` are ignored.
pub fn estimate_invariant_grid(
    sys: &SystemSpec,
    omega: &Aabb,
    counts: &[usize],
    cfg: &InvariantGridConfig,
) -> Result<GridDensity> {
    if omega.dim() != sys.dim {
        return Err(Error::DimensionMismatch {
            expected: sys.dim,
            got: omega.dim(),
        });
    }
    if counts.len() != sys.dim || counts.iter().any(|c| *c < 2) {
        return Err(Error::InvalidArgument(
            "invariant grid needs at least 2 nodes per axis".into(),
        ));
    }
    if cfg.n_particles == 0 || cfg.snapshots == 0 || !(cfg.dt > 0.0) {
        return Err(Error::InvalidArgument("degenerate invariant-grid config".into()));
    }
    let grid = RegularGrid::from_bounds(omega.lo(), omega.hi(), counts)?;
    let d = sys.dim;
    let burn_steps = (cfg.burn_in / cfg.dt).ceil() as usize;
    let gap_steps = (cfg.snapshot_gap / cfg.dt).ceil().max(1.0) as usize;
    let root = Stream::new(cfg.seed).child(purpose::PINF_BUILD);

    // Node-centered bins: node k covers [node_k - h/2, node_k + h/2).
    let bins = (0..cfg.n_particles)
        .into_par_iter()
        .fold(
            || vec![0u64; grid.len()],
            |mut acc, i| {
                let s = root.child(i as u64);
                let mut x = vec![0.0; d];
                sys.p0.sample_into(s.child(0), &mut x);
                let step_stream = s.child(1);
                let mut mu = vec![0.0; d];
                let scale = sys.sigma * cfg.dt.sqrt();
                let mut counter = 0u64;
                let mut frozen = false;
                let total_steps = burn_steps + (cfg.snapshots - 1) * gap_steps;
                for step in 0..=total_steps {
                    if step >= burn_steps && (step - burn_steps) % gap_steps == 0 && !frozen {
                        deposit(&grid, &x, &mut acc);
                    }
                    if step == total_steps || frozen {
                        counter += d as u64;
                        continue;
                    }
                    sys.drift_into(&x, &mut mu);
                    for a in 0..d {
                        x[a] += mu[a] * cfg.dt + scale * step_stream.normal(counter);
                        counter += 1;
                    }
                    if x.iter().any(|v| !v.is_finite()) {
                        frozen = true;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; grid.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    let mut density: Vec<f64> = bins
        .iter()
        .map(|&c| c as f64 + cfg.pseudo_count)
        .collect();
    if cfg.blur_cells > 0.0 {
        density = gaussian_blur(&grid, &density, cfg.blur_cells);
    }
    let log_values: Vec<f64> = density.iter().map(|v| v.ln()).collect();
    GridDensity::new(grid, log_values, Extrapolation::Clamp)
}

#[inline]
fn deposit(grid: &RegularGrid, x: &[f64], acc: &mut [u64]) {
    let mut flat = 0usize;
    for (a, ax) in grid.axes().iter().enumerate() {
        let u = (x[a] - ax.min) / ax.spacing() + 0.5;
        if u < 0.0 || u >= ax.count as f64 {
            return;
        }
        flat = flat * ax.count + u as usize;
    }
    acc[flat] += 1;
}

/// Separable Gaussian blur along each grid axis (truncated at 3 radii).
fn gaussian_blur(grid: &RegularGrid, values: &[f64], radius_cells: f64) -> Vec<f64> {
    let half = (3.0 * radius_cells).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|k| (-0.5 * (k as f64 / radius_cells).powi(2)).exp())
        .collect();
    let ksum: f64 = kernel.iter().sum();

    let d = grid.dim();
    let mut cur = values.to_vec();
    let mut idx = vec![0usize; d];
    for a in 0..d {
        let count = grid.axes()[a].count as isize;
        let mut next = vec![0.0; cur.len()];
        for flat in 0..cur.len() {
            grid.unravel(flat, &mut idx);
            let i = idx[a] as isize;
            let mut acc = 0.0;
            for (off, w) in (-half..=half).zip(&kernel) {
                // reflect at the edges
                let mut k = i + off;
                if k < 0 {
                    k = -k;
                }
                if k >= count {
                    k = 2 * (count - 1) - k;
                }
                idx[a] = k.clamp(0, count - 1) as usize;
                acc += w * cur[grid.ravel(&idx)];
            }
            next[flat] = acc / ksum;
        }
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::SystemSpec;

    #[test]
    fn gradient_analytic_values() {
        // Ring system, sigma^2 = 2: log p_inf = -V. On the unit circle V = 0;
        // at the origin V = 1. sigma is stored as sqrt(2), so squaring it
        // costs one ulp against the exact diffusion coefficient.
        let sys = SystemSpec::ring2d();
        let pinf = StationaryDensity::gradient_analytic(&sys).unwrap();
        assert_eq!(pinf.log_density(&[1.0, 0.0]).unwrap(), 0.0);
        assert!((pinf.log_density(&[0.0, 0.0]).unwrap() + 1.0).abs() < 1e-15);
        // score = -2 grad V / sigma^2 = -grad V; grad V(1,1) = (4,4).
        let s = pinf.score(&[1.0, 1.0]).unwrap();
        assert!((s[0] + 4.0).abs() < 4e-15 && (s[1] + 4.0).abs() < 4e-15, "{s:?}");
    }

    #[test]
    fn gaussian_score() {
        let pinf = StationaryDensity::gaussian(vec![0.0, 0.0], vec![2.0, 0.5]).unwrap();
        let s = pinf.score(&[1.0, -1.0]).unwrap();
        assert_eq!(s, vec![-0.5, 2.0]);
    }

    #[test]
    fn grid_values_at_nodes_are_bit_exact() {
        let sys = SystemSpec::ring2d();
        let pinf = StationaryDensity::gradient_analytic(&sys).unwrap();
        let omega = Aabb::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let gd = tabulate(&pinf, &omega, &[21, 21], Extrapolation::Clamp).unwrap();
        let grid = gd.grid().clone();
        let tabulated = StationaryDensity::grid(gd);
        for flat in [0usize, 5, 57, 220, 440] {
            let x = grid.node(flat);
            assert_eq!(
                tabulated.log_density(&x).unwrap(),
                pinf.log_density(&x).unwrap()
            );
        }
    }

    #[test]
    fn strict_grid_rejects_outside_queries() {
        let sys = SystemSpec::ring2d();
        let pinf = StationaryDensity::gradient_analytic(&sys).unwrap();
        let omega = Aabb::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let gd = tabulate(&pinf, &omega, &[11, 11], Extrapolation::Strict).unwrap();
        let strict = StationaryDensity::grid(gd.clone());
        assert!(matches!(
            strict.log_density(&[2.0, 0.0]),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(matches!(strict.score(&[2.0, 0.0]), Err(Error::OutOfDomain { .. })));
        // The clamp variant answers with the face value.
        let clamp = StationaryDensity::grid(
            GridDensity::new(gd.grid().clone(), gd.log_values().to_vec(), Extrapolation::Clamp)
                .unwrap(),
        );
        let face = clamp.log_density(&[1.0, 0.0]).unwrap();
        assert_eq!(clamp.log_density(&[2.0, 0.0]).unwrap(), face);
    }

    #[test]
    fn grid_score_is_exact_on_affine_log_density() {
        let grid = RegularGrid::from_bounds(&[-1.0, -1.0], &[1.0, 1.0], &[9, 9]).unwrap();
        let a = [0.7, -1.3];
        let values: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x = grid.node(i);
                a[0] * x[0] + a[1] * x[1]
            })
            .collect();
        let gd = GridDensity::new(grid, values, Extrapolation::Clamp).unwrap();
        let pinf = StationaryDensity::grid(gd);
        for x in [[0.0, 0.0], [0.31, -0.72], [0.99, 0.99]] {
            let s = pinf.score(&x).unwrap();
            assert!((s[0] - a[0]).abs() < 1e-12 && (s[1] - a[1]).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn log_offset_leaves_score_bit_identical() {
        let sys = SystemSpec::ring2d();
        let base = StationaryDensity::gradient_analytic(&sys).unwrap();
        let omega = Aabb::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let gd = tabulate(&base, &omega, &[31, 31], Extrapolation::Clamp).unwrap();
        let plain = StationaryDensity::grid(gd.clone());
        let shifted = StationaryDensity::grid(gd).with_log_offset(17.25);
        let s = Stream::new(4);
        for k in 0..100u64 {
            let x = [
                s.child(k).uniform_in(0, -2.5, 2.5),
                s.child(k).uniform_in(1, -2.5, 2.5),
            ];
            assert_eq!(plain.score(&x).unwrap(), shifted.score(&x).unwrap());
            let mu_a = hsde_drift(&plain, &sys, &x).unwrap();
            let mu_b = hsde_drift(&shifted, &sys, &x).unwrap();
            assert_eq!(mu_a, mu_b);
            assert_eq!(
                shifted.log_density(&x).unwrap(),
                plain.log_density(&x).unwrap() + 17.25
            );
        }
    }

    #[test]
    fn raw_value_shift_changes_score_negligibly() {
        // Adding the constant into the tabulated values themselves (instead
        // of the offset field) may re-round, but stays within 1e-12.
        let sys = SystemSpec::ring2d();
        let base = StationaryDensity::gradient_analytic(&sys).unwrap();
        let omega = Aabb::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let gd = tabulate(&base, &omega, &[31, 31], Extrapolation::Clamp).unwrap();
        let shifted_values: Vec<f64> = gd.log_values().iter().map(|v| v + 3.0).collect();
        let shifted = StationaryDensity::grid(
            GridDensity::new(gd.grid().clone(), shifted_values, Extrapolation::Clamp).unwrap(),
        );
        let plain = StationaryDensity::grid(gd);
        for x in [[0.1, 0.4], [-1.7, 1.9], [0.0, 0.0]] {
            let a = plain.score(&x).unwrap();
            let b = shifted.score(&x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_identity_transformed_drift_equals_drift() {
        // For gradient systems, sigma^2 score - mu == mu.
        let s = Stream::new(8);
        for sys in [SystemSpec::ring2d(), SystemSpec::ring_chain(2).unwrap()] {
            let pinf = StationaryDensity::gradient_analytic(&sys).unwrap();
            for k in 0..100u64 {
                let x: Vec<f64> = (0..sys.dim)
                    .map(|a| s.child(k).uniform_in(a as u64, -2.0, 2.0))
                    .collect();
                let bar_mu = hsde_drift(&pinf, &sys, &x).unwrap();
                let mu = sys.drift(&x).unwrap();
                for (b, m) in bar_mu.iter().zip(&mu) {
                    assert!((b - m).abs() <= 1e-12, "{x:?}: {bar_mu:?} vs {mu:?}");
                }
            }
        }
    }

    #[test]
    fn ou_transformed_drift() {
        // theta=1, sigma^2=2, stationary N(0,1): drift 2*(-x) - (-x) = -x.
        let sys = SystemSpec::ou(1.0).unwrap();
        let pinf = StationaryDensity::gaussian(vec![0.0], vec![1.0]).unwrap();
        let v = hsde_drift(&pinf, &sys, &[3.0]).unwrap();
        assert!((v[0] + 3.0).abs() < 1e-14, "{v:?}");
    }

    #[test]
    fn grid_score_second_order_convergence() {
        // Central differences on a smooth log-density: halving the spacing
        // should shrink the max score error at observed order >= 1.8.
        let f = |x: &[f64]| (-0.3 * x[0] * x[0] - 0.2 * x[0] * x[1] - 0.4 * x[1] * x[1]).sin() - x[0];
        let grad = |x: &[f64]| {
            let inner = -0.3 * x[0] * x[0] - 0.2 * x[0] * x[1] - 0.4 * x[1] * x[1];
            let c = inner.cos();
            [
                c * (-0.6 * x[0] - 0.2 * x[1]) - 1.0,
                c * (-0.2 * x[0] - 0.8 * x[1]),
            ]
        };
        let probe: Vec<[f64; 2]> = (0..50)
            .map(|k| {
                let s = Stream::new(21).child(k);
                [s.uniform_in(0, -0.9, 0.9), s.uniform_in(1, -0.9, 0.9)]
            })
            .collect();
        let mut errs = Vec::new();
        for count in [33usize, 65] {
            let grid = RegularGrid::from_bounds(&[-1.2, -1.2], &[1.2, 1.2], &[count, count]).unwrap();
            let values: Vec<f64> = (0..grid.len()).map(|i| f(&grid.node(i))).collect();
            let pinf =
                StationaryDensity::grid(GridDensity::new(grid, values, Extrapolation::Clamp).unwrap());
            let mut max_err = 0.0f64;
            for x in &probe {
                let s = pinf.score(x).unwrap();
                let g = grad(x);
                max_err = max_err.max((s[0] - g[0]).abs()).max((s[1] - g[1]).abs());
            }
            errs.push(max_err);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order >= 1.8, "observed order {order} from errors {errs:?}");
    }

    #[test]
    fn invariant_grid_recovers_a_gaussian_score() {
        // Long-run linear system has stationary N(0, 1); the histogram-based
        // builder should produce a grid whose score is roughly -x.
        let sys = SystemSpec::ou(1.0).unwrap();
        let omega = Aabb::new(vec![-4.0], vec![4.0]).unwrap();
        let cfg = InvariantGridConfig {
            n_particles: 20_000,
            burn_in: 4.0,
            snapshots: 10,
            snapshot_gap: 0.5,
            dt: 0.01,
            pseudo_count: 0.25,
            blur_cells: 1.0,
            seed: 5,
        };
        let gd = estimate_invariant_grid(&sys, &omega, &[81], &cfg).unwrap();
        let pinf = StationaryDensity::grid(gd);
        for x in [-1.5f64, -0.5, 0.5, 1.5] {
            let s = pinf.score(&[x]).unwrap()[0];
            assert!(
                (s + x).abs() < 0.35,
                "score at {x}: got {s}, expected about {}",
                -x
            );
        }
    }
}
