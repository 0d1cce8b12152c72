//! Pointwise density estimation for time-dependent Fokker-Planck equations.
//!
//! The estimator runs an ensemble of the transformed SDE (drift
//! `sigma^2 * score - mu`, see [`crate::stationary`]) from the query point
//! and averages the initial-to-stationary density ratio along the
//! trajectories:
//!
//! ```text
//! p_hat(tau_j, x) = p_inf(x) * (1/K) * sum_i p0(X_ij) / p_inf(X_ij)
//! ```
//!
//! One simulated batch serves every intermediate time simultaneously, and a
//! dumped batch can be re-scored against a different initial density without
//! re-simulation. The free normalization constant of `p_inf` cancels between
//! the prefactor and the summands.
//!
//! Trajectories that leave the knowledge domain `omega` are handled by an
//! [`EscapePolicy`]: `strict` refuses to estimate, `drop` conditions on the
//! trajectories that stayed inside, and `clamp` keeps every trajectory and
//! evaluates `p_inf` under constant face extrapolation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RegularGrid;
use crate::rng::{purpose, Stream};
use crate::stationary::{hsde_drift_fn, StationaryDensity};
use crate::systems::{GaussianMixture, SystemSpec};
use crate::trajectories::{simulate_batch_with_stream, Aabb, EmConfig, TrajectoryBatch};

/// Handling of trajectories that leave omega.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EscapePolicy {
    /// Any escape is an error carrying the first offending trajectory/step.
    Strict,
    /// Average only over trajectories still inside omega at each time.
    Drop,
    /// Keep all trajectories; `p_inf` is evaluated under clamp extrapolation.
    Clamp,
}

impl Default for EscapePolicy {
    fn default() -> Self {
        EscapePolicy::Drop
    }
}

/// Normalization state carried by exported estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Normalization {
    Unnormalized,
    SliceNormalized { axes: [usize; 2] },
}

/// Density values on a set of spacetime points, with Monte-Carlo error bars.
///
/// Rows are time-major: row `t_idx * n_nodes + node_idx` holds the estimate
/// at (`times[t_idx]`, node `node_idx`).
#[derive(Clone, Debug)]
pub struct DensityEstimate {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Flattened node coordinates, `n_nodes x dim`.
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_traj_used: Vec<usize>,
    pub escape_fraction: Vec<f64>,
    pub normalization: Normalization,
}

impl DensityEstimate {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    /// Values at the `t_idx`-th time, one per node.
    pub fn time_slice(&self, t_idx: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.values[t_idx * n..(t_idx + 1) * n]
    }

    pub fn stderr_slice(&self, t_idx: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.stderr[t_idx * n..(t_idx + 1) * n]
    }

    /// Index of the stored time closest to `t`.
    pub fn nearest_time_index(&self, t: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (j, tj) in self.times.iter().enumerate() {
            let d = (tj - t).abs();
            if d < dist {
                dist = d;
                best = j;
            }
        }
        best
    }

    /// All (t, x) rows in storage order.
    pub fn points(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        let n = self.n_nodes();
        (0..self.times.len()).flat_map(move |tj| {
            (0..n).map(move |k| (self.times[tj], self.node(k)))
        })
    }
}

/// Fixed-shape pairwise (tree) summation; the result depends only on the
/// slice contents, never on thread scheduling.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

struct TimeStats {
    value: f64,
    stderr: f64,
    n_used: usize,
    escape_fraction: f64,
}

/// Score a simulated batch against an initial density: the workhorse behind
/// both fresh solves and re-scoring dumped trajectory files.
fn score_batch_impl(
    batch: &TrajectoryBatch,
    p0: &GaussianMixture,
    pinf: &StationaryDensity,
    policy: EscapePolicy,
    with_prefactor: bool,
) -> Result<Vec<TimeStats>> {
    let n = batch.n_traj();
    let m = batch.steps();
    if p0.dim() != batch.dim() || pinf.dim() != batch.dim() {
        return Err(Error::DimensionMismatch {
            expected: batch.dim(),
            got: p0.dim().min(pinf.dim()),
        });
    }

    if policy == EscapePolicy::Strict {
        for j in 0..=m {
            for i in 0..n {
                if !batch.inside(i, j) {
                    return Err(Error::Escaped { traj: i, step: j });
                }
            }
        }
    }

    // Density ratios for every (trajectory, time), computed in log space.
    let mut ratios = vec![0.0f64; n * (m + 1)];
    ratios
        .par_chunks_mut(m + 1)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                let x = batch.state(i, j);
                let lw = p0.log_density_unchecked(x) - pinf.log_density_clamped(x);
                *slot = lw.exp();
            }
        });

    let log_prefactor = if with_prefactor {
        pinf.log_density_clamped(batch.origin())
    } else {
        0.0
    };
    let prefactor = log_prefactor.exp();

    let mut out = Vec::with_capacity(m + 1);
    let mut scratch = Vec::with_capacity(n);
    for j in 0..=m {
        scratch.clear();
        match policy {
            EscapePolicy::Drop => {
                for i in 0..n {
                    if batch.inside(i, j) {
                        scratch.push(ratios[i * (m + 1) + j]);
                    }
                }
                if scratch.is_empty() {
                    return Err(Error::DegenerateEstimate { step: j });
                }
            }
            EscapePolicy::Strict | EscapePolicy::Clamp => {
                for i in 0..n {
                    scratch.push(ratios[i * (m + 1) + j]);
                }
            }
        }
        let k = scratch.len();
        let mean = pairwise_sum(&scratch) / k as f64;
        let sd = if k > 1 {
            for v in scratch.iter_mut() {
                let d = *v - mean;
                *v = d * d;
            }
            (pairwise_sum(&scratch) / (k - 1) as f64).sqrt()
        } else {
            0.0
        };
        let escaped = (0..n).filter(|&i| !batch.inside(i, j)).count();
        out.push(TimeStats {
            value: prefactor * mean,
            stderr: prefactor * sd / (k as f64).sqrt(),
            n_used: k,
            escape_fraction: escaped as f64 / n as f64,
        });
    }
    Ok(out)
}

fn stats_to_estimate(
    origin: &[f64],
    times: Vec<f64>,
    stats: Vec<TimeStats>,
) -> DensityEstimate {
    DensityEstimate {
        dim: origin.len(),
        times,
        nodes: origin.to_vec(),
        values: stats.iter().map(|s| s.value).collect(),
        stderr: stats.iter().map(|s| s.stderr).collect(),
        n_traj_used: stats.iter().map(|s| s.n_used).collect(),
        escape_fraction: stats.iter().map(|s| s.escape_fraction).collect(),
        normalization: Normalization::Unnormalized,
    }
}

/// Re-score a (possibly reloaded) batch against a new initial density.
/// Only the density ratios are re-evaluated; no re-simulation happens.
pub fn score_batch(
    batch: &TrajectoryBatch,
    p0: &GaussianMixture,
    pinf: &StationaryDensity,
    policy: EscapePolicy,
) -> Result<DensityEstimate> {
    let stats = score_batch_impl(batch, p0, pinf, policy, true)?;
    Ok(stats_to_estimate(batch.origin(), batch.times(), stats))
}

fn check_solve_inputs(
    sys: &SystemSpec,
    pinf: &StationaryDensity,
    x: &[f64],
    cfg: &EmConfig,
    omega: &Aabb,
) -> Result<()> {
    cfg.validate()?;
    if x.len() != sys.dim {
        return Err(Error::DimensionMismatch {
            expected: sys.dim,
            got: x.len(),
        });
    }
    if pinf.dim() != sys.dim {
        return Err(Error::DimensionMismatch {
            expected: sys.dim,
            got: pinf.dim(),
        });
    }
    if omega.dim() != sys.dim {
        return Err(Error::DimensionMismatch {
            expected: sys.dim,
            got: omega.dim(),
        });
    }
    if !omega.contains(x) {
        return Err(Error::InvalidArgument(format!(
            "query point {x:?} lies outside omega; the estimator needs x in D, D inside omega"
        )));
    }
    Ok(())
}

fn solve_point_impl(
    sys: &SystemSpec,
    pinf: &StationaryDensity,
    x: &[f64],
    cfg: &EmConfig,
    omega: &Aabb,
    policy: EscapePolicy,
    stream: Stream,
    with_prefactor: bool,
) -> Result<DensityEstimate> {
    check_solve_inputs(sys, pinf, x, cfg, omega)?;
    let drift = hsde_drift_fn(pinf, sys);
    let batch = simulate_batch_with_stream(drift, sys.sigma, x, cfg, omega, stream)?;
    let stats = score_batch_impl(&batch, &sys.p0, pinf, policy, with_prefactor)?;
    Ok(stats_to_estimate(x, batch.times(), stats))
}

fn node_stream(seed: u64, node: u64) -> Stream {
    Stream::new(seed).child(purpose::FK_SOLVE).child(node)
}

/// Estimate `p(tau_j, x)` for every time in the discretization at one point.
pub fn solve_point(
    sys: &SystemSpec,
    pinf: &StationaryDensity,
    x: &[f64],
    cfg: &EmConfig,
    omega: &Aabb,
    policy: EscapePolicy,
) -> Result<DensityEstimate> {
    solve_point_impl(
        sys,
        pinf,
        x,
        cfg,
        omega,
        policy,
        node_stream(cfg.master_seed, 0),
        true,
    )
}

/// As [`solve_point`] but for the ratio `h = p / p_inf`: no `p_inf(x)`
/// prefactor is applied.
pub fn solve_h_point(
    sys: &SystemSpec,
    pinf: &StationaryDensity,
    x: &[f64],
    cfg: &EmConfig,
    omega: &Aabb,
    policy: EscapePolicy,
) -> Result<DensityEstimate> {
    solve_point_impl(
        sys,
        pinf,
        x,
        cfg,
        omega,
        policy,
        node_stream(cfg.master_seed, 0),
        false,
    )
}

/// [`solve_point`] at every node of a grid, with independent per-node noise
/// streams derived from (seed, node index, trajectory index). Node results
/// do not depend on how nodes are scheduled across threads.
pub fn solve_grid(
    sys: &SystemSpec,
    pinf: &StationaryDensity,
    grid: &RegularGrid,
    cfg: &EmConfig,
    omega: &Aabb,
    policy: EscapePolicy,
) -> Result<DensityEstimate> {
    if grid.dim() != sys.dim {
        return Err(Error::DimensionMismatch {
            expected: sys.dim,
            got: grid.dim(),
        });
    }
    let n_nodes = grid.len();
    let per_node: Vec<Result<Vec<TimeStats>>> = (0..n_nodes)
        .into_par_iter()
        .map(|k| {
            let x = grid.node(k);
            check_solve_inputs(sys, pinf, &x, cfg, omega).map_err(|e| e.at_node(k))?;
            let drift = hsde_drift_fn(pinf, sys);
            let batch = simulate_batch_with_stream(
                &drift,
                sys.sigma,
                &x,
                cfg,
                omega,
                node_stream(cfg.master_seed, k as u64),
            )
            .map_err(|e| e.at_node(k))?;
            score_batch_impl(&batch, &sys.p0, pinf, policy, true).map_err(|e| e.at_node(k))
        })
        .collect();

    let mut columns = Vec::with_capacity(n_nodes);
    for res in per_node {
        columns.push(res?);
    }

    let times = cfg.times();
    let n_times = times.len();
    let mut est = DensityEstimate {
        dim: sys.dim,
        times,
        nodes: (0..n_nodes).flat_map(|k| grid.node(k)).collect(),
        values: vec![0.0; n_times * n_nodes],
        stderr: vec![0.0; n_times * n_nodes],
        n_traj_used: vec![0; n_times * n_nodes],
        escape_fraction: vec![0.0; n_times * n_nodes],
        normalization: Normalization::Unnormalized,
    };
    for (k, col) in columns.iter().enumerate() {
        for (j, s) in col.iter().enumerate() {
            let row = j * n_nodes + k;
            est.values[row] = s.value;
            est.stderr[row] = s.stderr;
            est.n_traj_used[row] = s.n_used;
            est.escape_fraction[row] = s.escape_fraction;
        }
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationary::{tabulate, Extrapolation};
    use crate::systems::{ou_exact_density, ou_stationary_variance};

    fn ou_setup() -> (SystemSpec, StationaryDensity) {
        let sys = SystemSpec::ou(1.0).unwrap();
        let var = ou_stationary_variance(1.0, sys.sigma).unwrap();
        let pinf = StationaryDensity::gaussian(vec![0.0], vec![var]).unwrap();
        (sys, pinf)
    }

    #[test]
    fn time_zero_recovers_the_initial_density() {
        let cases: Vec<(SystemSpec, StationaryDensity)> = vec![
            {
                let s = SystemSpec::ring2d();
                let p = StationaryDensity::gradient_analytic(&s).unwrap();
                (s, p)
            },
            {
                let s = SystemSpec::ring_chain(2).unwrap();
                let p = StationaryDensity::gradient_analytic(&s).unwrap();
                (s, p)
            },
            ou_setup(),
        ];
        for (sys, pinf) in cases {
            let cfg = EmConfig {
                t_final: 0.2,
                steps: 4,
                n_traj: 100,
                master_seed: 1,
            };
            let x = vec![0.3; sys.dim];
            for policy in [EscapePolicy::Strict, EscapePolicy::Drop, EscapePolicy::Clamp] {
                let est = solve_point(&sys, &pinf, &x, &cfg, &Aabb::unbounded(sys.dim), policy)
                    .unwrap();
                let p0 = sys.p0_density(&x).unwrap();
                let rel = (est.values[0] - p0).abs() / p0;
                assert!(rel <= 1e-12, "{}: {} vs {p0}", sys.name, est.values[0]);
            }
        }
    }

    #[test]
    fn stationary_start_is_constant_in_time() {
        // p0 equal to the normalized stationary density makes the summand
        // constant, so the estimate never moves.
        let sys_base = SystemSpec::ou(1.0).unwrap();
        let p0 = GaussianMixture::single(vec![0.0], vec![1.0]).unwrap();
        let sys = SystemSpec::new("ou-stationary", 1, sys_base.sigma,
            crate::systems::Dynamics::Ou { theta: 1.0 }, p0).unwrap();
        let pinf = StationaryDensity::gaussian(vec![0.0], vec![1.0]).unwrap();
        let cfg = EmConfig {
            t_final: 1.0,
            steps: 20,
            n_traj: 500,
            master_seed: 2,
        };
        let est =
            solve_point(&sys, &pinf, &[0.4], &cfg, &Aabb::unbounded(1), EscapePolicy::Drop).unwrap();
        let p0_val = sys.p0_density(&[0.4]).unwrap();
        for (j, v) in est.values.iter().enumerate() {
            assert!(
                (v - p0_val).abs() <= 1e-12 * p0_val,
                "t index {j}: {v} vs {p0_val}"
            );
        }
    }

    #[test]
    fn ou_oracle_within_three_standard_errors() {
        let (sys, pinf) = ou_setup();
        let cfg = EmConfig {
            t_final: 0.5,
            steps: 50,
            n_traj: 20_000,
            master_seed: 31,
        };
        let x = [0.5];
        let est =
            solve_point(&sys, &pinf, &x, &cfg, &Aabb::unbounded(1), EscapePolicy::Drop).unwrap();
        for t in [0.1, 0.25, 0.5] {
            let j = est.nearest_time_index(t);
            let exact = ou_exact_density(1.0, sys.sigma, &sys.p0, est.times[j], &x).unwrap();
            let dev = (est.values[j] - exact).abs();
            assert!(
                dev <= 3.0 * est.stderr[j],
                "t={t}: {} vs {exact} (se {})",
                est.values[j],
                est.stderr[j]
            );
        }
    }

    #[test]
    fn normalization_constant_cancels() {
        let (sys, pinf) = ou_setup();
        let cfg = EmConfig {
            t_final: 0.5,
            steps: 20,
            n_traj: 2_000,
            master_seed: 7,
        };
        let base = solve_point(&sys, &pinf, &[0.5], &cfg, &Aabb::unbounded(1), EscapePolicy::Drop)
            .unwrap();
        for scale in [1e-6f64, 1e6] {
            let scaled = pinf.clone().with_log_offset(scale.ln());
            let est =
                solve_point(&sys, &scaled, &[0.5], &cfg, &Aabb::unbounded(1), EscapePolicy::Drop)
                    .unwrap();
            for (a, b) in base.values.iter().zip(&est.values) {
                assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} vs {b} at scale {scale}");
            }
        }
    }

    #[test]
    fn ratio_times_prefactor_reproduces_the_density_estimate() {
        let (sys, pinf) = ou_setup();
        let cfg = EmConfig {
            t_final: 0.5,
            steps: 10,
            n_traj: 1_000,
            master_seed: 3,
        };
        let x = [0.25];
        let p = solve_point(&sys, &pinf, &x, &cfg, &Aabb::unbounded(1), EscapePolicy::Drop).unwrap();
        let h = solve_h_point(&sys, &pinf, &x, &cfg, &Aabb::unbounded(1), EscapePolicy::Drop)
            .unwrap();
        let prefactor = pinf.log_density(&x).unwrap().exp();
        for (pv, hv) in p.values.iter().zip(&h.values) {
            assert_eq!(*pv, prefactor * hv);
        }
        // At t=0 the ratio is p0/p_inf exactly.
        let h0 = sys.p0_density(&x).unwrap() / pinf.log_density(&x).unwrap().exp();
        assert!((h.values[0] - h0).abs() <= 1e-12 * h0);
    }

    #[test]
    fn single_node_grid_equals_solve_point() {
        let (sys, pinf) = ou_setup();
        let cfg = EmConfig {
            t_final: 0.3,
            steps: 6,
            n_traj: 400,
            master_seed: 5,
        };
        // A 2-node grid where we compare node 0 against solve_point.
        let grid = RegularGrid::from_bounds(&[0.5], &[0.9], &[2]).unwrap();
        let est = solve_grid(&sys, &pinf, &grid, &cfg, &Aabb::unbounded(1), EscapePolicy::Drop)
            .unwrap();
        let point =
            solve_point(&sys, &pinf, &[0.5], &cfg, &Aabb::unbounded(1), EscapePolicy::Drop)
                .unwrap();
        for j in 0..est.times.len() {
            assert_eq!(est.time_slice(j)[0], point.values[j]);
        }
    }

    #[test]
    fn escape_policies_disagree_only_under_escapes() {
        let sys = SystemSpec::ring2d();
        let pinf = StationaryDensity::gradient_analytic(&sys).unwrap();
        let omega_tight = Aabb::new(vec![-1.05, -1.05], vec![1.05, 1.05]).unwrap();
        let cfg = EmConfig {
            t_final: 0.5,
            steps: 50,
            n_traj: 400,
            master_seed: 11,
        };
        let x = [0.5, 0.5];

        let strict = solve_point(&sys, &pinf, &x, &cfg, &omega_tight, EscapePolicy::Strict);
        assert!(matches!(strict, Err(Error::Escaped { .. })), "{strict:?}");

        let tight_grid = tabulate(&pinf, &omega_tight, &[101, 101], Extrapolation::Clamp).unwrap();
        let pinf_sharp = StationaryDensity::grid(tight_grid);
        let drop = solve_point(&sys, &pinf_sharp, &x, &cfg, &omega_tight, EscapePolicy::Drop)
            .unwrap();
        let clamp = solve_point(&sys, &pinf_sharp, &x, &cfg, &omega_tight, EscapePolicy::Clamp)
            .unwrap();
        let last = cfg.steps;
        assert!(drop.escape_fraction[last] > 0.0);
        assert!(drop.n_traj_used[last] < cfg.n_traj);
        assert_eq!(clamp.n_traj_used[last], cfg.n_traj);
        assert_ne!(drop.values[last], clamp.values[last]);
    }

    #[test]
    fn drop_policy_with_no_survivors_is_degenerate() {
        let (sys, pinf) = ou_setup();
        // Origin inside omega but a box so tight every trajectory leaves.
        let omega = Aabb::new(vec![0.49], vec![0.51]).unwrap();
        let cfg = EmConfig {
            t_final: 1.0,
            steps: 50,
            n_traj: 50,
            master_seed: 13,
        };
        let res = solve_point(&sys, &pinf, &[0.5], &cfg, &omega, EscapePolicy::Drop);
        assert!(matches!(res, Err(Error::DegenerateEstimate { .. })), "{res:?}");
    }

    #[test]
    fn query_outside_omega_is_rejected() {
        let (sys, pinf) = ou_setup();
        let omega = Aabb::new(vec![-1.0], vec![1.0]).unwrap();
        let cfg = EmConfig {
            t_final: 0.1,
            steps: 2,
            n_traj: 10,
            master_seed: 1,
        };
        assert!(matches!(
            solve_point(&sys, &pinf, &[2.0], &cfg, &omega, EscapePolicy::Drop),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn reported_stderr_scales_as_inverse_sqrt_n() {
        let (sys, pinf) = ou_setup();
        let mut logs = Vec::new();
        for (k, n) in [1_000usize, 2_000, 4_000, 8_000, 16_000].iter().enumerate() {
            let cfg = EmConfig {
                t_final: 0.5,
                steps: 25,
                n_traj: *n,
                master_seed: 100 + k as u64,
            };
            let est =
                solve_point(&sys, &pinf, &[0.5], &cfg, &Aabb::unbounded(1), EscapePolicy::Drop)
                    .unwrap();
            let j = est.nearest_time_index(0.5);
            logs.push(((*n as f64).ln(), est.stderr[j].ln()));
        }
        // Least-squares slope of log(se) against log(N).
        let n = logs.len() as f64;
        let sx: f64 = logs.iter().map(|p| p.0).sum();
        let sy: f64 = logs.iter().map(|p| p.1).sum();
        let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (slope + 0.5).abs() <= 0.1,
            "stderr slope {slope}, expected -0.5 +- 0.1"
        );
    }

    #[test]
    fn rescoring_a_dumped_batch_matches_a_fresh_solve() {
        let (sys, pinf) = ou_setup();
        let cfg = EmConfig {
            t_final: 0.4,
            steps: 8,
            n_traj: 300,
            master_seed: 21,
        };
        let x = [0.5];
        let omega = Aabb::unbounded(1);
        let fresh = solve_point(&sys, &pinf, &x, &cfg, &omega, EscapePolicy::Drop).unwrap();

        let drift = hsde_drift_fn(&pinf, &sys);
        let batch = simulate_batch_with_stream(
            drift,
            sys.sigma,
            &x,
            &cfg,
            &omega,
            node_stream(cfg.master_seed, 0),
        )
        .unwrap();
        let rescored = score_batch(&batch, &sys.p0, &pinf, EscapePolicy::Drop).unwrap();
        assert_eq!(fresh.values, rescored.values);

        // Re-scoring against a different initial density changes values but
        // reuses the same trajectories (t=0 identity for the new density).
        let new_p0 = GaussianMixture::single(vec![-0.5], vec![0.5]).unwrap();
        let other = score_batch(&batch, &new_p0, &pinf, EscapePolicy::Drop).unwrap();
        let expect0 = new_p0.density(&x).unwrap();
        assert!((other.values[0] - expect0).abs() <= 1e-12 * expect0);
    }
}
