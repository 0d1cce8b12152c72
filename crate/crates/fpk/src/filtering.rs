//! One-step Bayesian filtering: the posterior after a single partial
//! observation is the solved density at the observation gap times a Gaussian
//! likelihood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fk::{solve_grid, DensityEstimate, EscapePolicy, Normalization};
use crate::grid::RegularGrid;
use crate::quadrature::{marginal_2d, slice_normalize, Field2d};
use crate::rng::{purpose, Stream};
use crate::stationary::StationaryDensity;
use crate::systems::SystemSpec;
use crate::trajectories::{Aabb, EmConfig};

/// A partial linear observation `y = H x + noise` where H selects
/// coordinates and the noise is isotropic Gaussian with deviation `sigma_o`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub observed_axes: Vec<usize>,
    pub y: Vec<f64>,
    pub sigma_o: f64,
}

impl Observation {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.observed_axes.len() != self.y.len() {
            return Err(Error::InvalidArgument(
                "observation needs one value per observed axis".into(),
            ));
        }
        if self.observed_axes.is_empty() || self.observed_axes.len() > dim {
            return Err(Error::InvalidArgument(format!(
                "observation must select between 1 and {dim} axes"
            )));
        }
        let mut seen = vec![false; dim];
        for &a in &self.observed_axes {
            if a >= dim {
                return Err(Error::InvalidArgument(format!(
                    "observed axis {a} out of range for dim {dim}"
                )));
            }
            if seen[a] {
                return Err(Error::InvalidArgument("observed axes must be distinct".into()));
            }
            seen[a] = true;
        }
        if !(self.sigma_o > 0.0) {
            return Err(Error::InvalidArgument("sigma_o must be positive".into()));
        }
        Ok(())
    }
}

/// Unnormalized Gaussian likelihood `exp(-|Hx - y|^2 / (2 sigma_o^2))`.
pub fn likelihood(obs: &Observation, x: &[f64]) -> Result<f64> {
    obs.validate(x.len())?;
    Ok(likelihood_unchecked(obs, x))
}

#[inline]
pub fn likelihood_unchecked(obs: &Observation, x: &[f64]) -> f64 {
    let mut q = 0.0;
    for (k, &a) in obs.observed_axes.iter().enumerate() {
        let r = x[a] - obs.y[k];
        q += r * r;
    }
    (-0.5 * q / (obs.sigma_o * obs.sigma_o)).exp()
}

/// Output of a one-step filter run.
#[derive(Clone, Debug)]
pub struct FilterOutput {
    /// Predicted density p(x1 | x0-density) at the observation gap, on the grid.
    pub prediction: DensityEstimate,
    /// Unnormalized posterior prediction * likelihood, same grid layout.
    pub posterior: DensityEstimate,
    /// Slice-normalized 2D marginals of prediction and posterior.
    pub prediction_marginal: Field2d,
    pub posterior_marginal: Field2d,
}

/// Compute the one-step filtering density on a grid: solve the density
/// forward by the observation gap `t_final` of `cfg`, multiply by the
/// observation likelihood, and produce slice-normalized 2D marginals over
/// `marginal_keep` (integrating the remaining axes over `domain`).
#[allow(clippy::too_many_arguments)]
pub fn one_step_filter(
    sys: &SystemSpec,
    pinf: &StationaryDensity,
    obs: &Observation,
    grid: &RegularGrid,
    domain: &Aabb,
    cfg: &EmConfig,
    omega: &Aabb,
    policy: EscapePolicy,
    marginal_keep: (usize, usize),
    n_quad: usize,
    marginal_shape: (usize, usize),
) -> Result<FilterOutput> {
    obs.validate(sys.dim)?;
    let prediction = solve_grid(sys, pinf, grid, cfg, omega, policy)?;

    let n_nodes = prediction.n_nodes();
    let last = prediction.times.len() - 1;
    let mut posterior = prediction.clone();
    for k in 0..n_nodes {
        let weight = likelihood_unchecked(obs, prediction.node(k));
        for j in 0..prediction.times.len() {
            let row = j * n_nodes + k;
            posterior.values[row] *= weight;
            posterior.stderr[row] *= weight;
        }
    }

    let pred_slice: Vec<f64> = prediction.time_slice(last).to_vec();
    let post_slice: Vec<f64> = posterior.time_slice(last).to_vec();
    let pred_field =
        marginal_of_grid_slice(grid, &pred_slice, domain, marginal_keep, n_quad, marginal_shape)?;
    let post_field =
        marginal_of_grid_slice(grid, &post_slice, domain, marginal_keep, n_quad, marginal_shape)?;
    let prediction_marginal = slice_normalize(&pred_field, n_quad)?;
    let posterior_marginal = slice_normalize(&post_field, n_quad)?;

    posterior.normalization = Normalization::Unnormalized;
    Ok(FilterOutput {
        prediction,
        posterior,
        prediction_marginal,
        posterior_marginal,
    })
}

/// Marginalize values tabulated on a d-dimensional node grid down to 2D by
/// quadrature over the dropped axes, interpolating the grid multilinearly.
pub fn marginal_of_grid_slice(
    grid: &RegularGrid,
    values: &[f64],
    domain: &Aabb,
    keep: (usize, usize),
    n_quad: usize,
    out_shape: (usize, usize),
) -> Result<Field2d> {
    if values.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "grid has {} nodes but {} values were supplied",
            grid.len(),
            values.len()
        )));
    }
    let evaluator = |x: &[f64]| grid.interpolate_clamped(values, x);
    marginal_2d(evaluator, grid.dim(), keep, domain, n_quad, out_shape)
}

/// Simulate one truth trajectory of the original SDE from an initial-density
/// sample and observe it with seeded noise. Returns the truth state at the
/// gap together with the observation.
pub fn synthesize_observation(
    sys: &SystemSpec,
    observed_axes: &[usize],
    sigma_o: f64,
    gap: f64,
    steps: usize,
    seed: u64,
) -> Result<(Vec<f64>, Observation)> {
    if !(gap > 0.0) || steps == 0 {
        return Err(Error::InvalidArgument("gap must be positive with steps >= 1".into()));
    }
    let d = sys.dim;
    let root = Stream::new(seed).child(purpose::OBSERVATION);
    let mut x = vec![0.0; d];
    sys.p0.sample_into(root.child(0), &mut x);
    let step_stream = root.child(1);
    let h = gap / steps as f64;
    let scale = sys.sigma * h.sqrt();
    let mut mu = vec![0.0; d];
    for j in 0..steps {
        sys.drift_into(&x, &mut mu);
        for a in 0..d {
            x[a] += mu[a] * h + scale * step_stream.normal((j * d + a) as u64);
        }
    }
    let noise_stream = root.child(2);
    let y: Vec<f64> = observed_axes
        .iter()
        .enumerate()
        .map(|(k, &a)| x[a] + sigma_o * noise_stream.normal(k as u64))
        .collect();
    let obs = Observation {
        observed_axes: observed_axes.to_vec(),
        y,
        sigma_o,
    };
    obs.validate(d)?;
    Ok((x, obs))
}

/// Number of 4-connected components of the superlevel set
/// `{ value >= level_frac * max }` on a 2D field.
pub fn count_superlevel_components(field: &Field2d, level_frac: f64) -> usize {
    let level = level_frac * field.max_value();
    let shape: Vec<usize> = field.grid.axes().iter().map(|a| a.count).collect();
    let (nx, ny) = (shape[0], shape[1]);
    let mut visited = vec![false; nx * ny];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..nx * ny {
        if visited[start] || field.values[start] < level {
            continue;
        }
        components += 1;
        stack.push(start);
        visited[start] = true;
        while let Some(p) = stack.pop() {
            let (i, j) = (p / ny, p % ny);
            let push = |ii: usize, jj: usize, stack: &mut Vec<usize>, visited: &mut Vec<bool>| {
                let q = ii * ny + jj;
                if !visited[q] && field.values[q] >= level {
                    visited[q] = true;
                    stack.push(q);
                }
            };
            if i > 0 {
                push(i - 1, j, &mut stack, &mut visited);
            }
            if i + 1 < nx {
                push(i + 1, j, &mut stack, &mut visited);
            }
            if j > 0 {
                push(i, j - 1, &mut stack, &mut visited);
            }
            if j + 1 < ny {
                push(i, j + 1, &mut stack, &mut visited);
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationary::StationaryDensity;
    use crate::systems::{ou_stationary_variance, SystemSpec};

    #[test]
    fn likelihood_values() {
        // Peak value 1 when the residual vanishes.
        let obs = Observation {
            observed_axes: vec![0, 2],
            y: vec![1.0, 2.0],
            sigma_o: 5.0,
        };
        assert_eq!(likelihood(&obs, &[1.0, 5.0, 2.0]).unwrap(), 1.0);

        // Very wide noise flattens the likelihood.
        let flat = Observation {
            observed_axes: vec![0],
            y: vec![100.0],
            sigma_o: 1e9,
        };
        let v = likelihood(&flat, &[0.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn observation_validation() {
        let bad_axes = Observation {
            observed_axes: vec![0, 0],
            y: vec![1.0, 1.0],
            sigma_o: 1.0,
        };
        assert!(bad_axes.validate(3).is_err());
        let out_of_range = Observation {
            observed_axes: vec![5],
            y: vec![1.0],
            sigma_o: 1.0,
        };
        assert!(out_of_range.validate(3).is_err());
        let bad_noise = Observation {
            observed_axes: vec![0],
            y: vec![1.0],
            sigma_o: 0.0,
        };
        assert!(bad_noise.validate(3).is_err());
    }

    fn ou_filter_setup() -> (SystemSpec, StationaryDensity, RegularGrid, Aabb, EmConfig) {
        let sys = SystemSpec::ou_nd(1.0, 2).unwrap();
        let var = ou_stationary_variance(1.0, sys.sigma).unwrap();
        let pinf = StationaryDensity::gaussian(vec![0.0, 0.0], vec![var, var]).unwrap();
        let grid = RegularGrid::from_bounds(&[-2.0, -2.0], &[2.0, 2.0], &[13, 13]).unwrap();
        let domain = Aabb::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let cfg = EmConfig {
            t_final: 0.25,
            steps: 5,
            n_traj: 400,
            master_seed: 8,
        };
        (sys, pinf, grid, domain, cfg)
    }

    #[test]
    fn flat_likelihood_posterior_matches_prediction() {
        let (sys, pinf, grid, domain, cfg) = ou_filter_setup();
        let obs = Observation {
            observed_axes: vec![0],
            y: vec![0.3],
            sigma_o: 1e9,
        };
        let out = one_step_filter(
            &sys,
            &pinf,
            &obs,
            &grid,
            &domain,
            &cfg,
            &Aabb::unbounded(2),
            EscapePolicy::Drop,
            (0, 1),
            20,
            (13, 13),
        )
        .unwrap();
        for (a, b) in out
            .prediction_marginal
            .values
            .iter()
            .zip(&out.posterior_marginal.values)
        {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
        }
        // Posterior is nonnegative and vanishes exactly where prediction does.
        for (p, q) in out.prediction.values.iter().zip(&out.posterior.values) {
            assert!(*q >= 0.0);
            if *p == 0.0 {
                assert_eq!(*q, 0.0);
            }
        }
    }

    #[test]
    fn near_point_mass_observation_pins_the_posterior() {
        let (sys, pinf, grid, domain, cfg) = ou_filter_setup();
        // Observe axis 0 at a grid-node value with tiny noise.
        let target = 1.0;
        let obs = Observation {
            observed_axes: vec![0],
            y: vec![target],
            sigma_o: 1e-4,
        };
        let out = one_step_filter(
            &sys,
            &pinf,
            &obs,
            &grid,
            &domain,
            &cfg,
            &Aabb::unbounded(2),
            EscapePolicy::Drop,
            (0, 1),
            20,
            (13, 13),
        )
        .unwrap();
        let n = out.posterior.n_nodes();
        let last = out.posterior.times.len() - 1;
        let slice = out.posterior.time_slice(last);
        for k in 0..n {
            let x = out.posterior.node(k);
            if (x[0] - target).abs() > 1e-3 && slice[k] != 0.0 {
                let on_target = (0..n)
                    .filter(|&m| (out.posterior.node(m)[0] - target).abs() < 1e-12)
                    .map(|m| slice[m])
                    .fold(0.0f64, f64::max);
                assert!(
                    slice[k] < 1e-8 * on_target,
                    "mass off the observed value at {x:?}: {} vs {on_target}",
                    slice[k]
                );
            }
        }
    }

    #[test]
    fn scale_invariance_of_normalized_marginals() {
        let (sys, pinf, grid, domain, cfg) = ou_filter_setup();
        let obs = Observation {
            observed_axes: vec![0],
            y: vec![0.5],
            sigma_o: 2.0,
        };
        let run = |p: StationaryDensity| {
            one_step_filter(
                &sys,
                &p,
                &obs,
                &grid,
                &domain,
                &cfg,
                &Aabb::unbounded(2),
                EscapePolicy::Drop,
                (0, 1),
                20,
                (13, 13),
            )
            .unwrap()
        };
        let base = run(pinf.clone());
        let scaled = run(pinf.clone().with_log_offset(1000.0f64.ln()));
        for (a, b) in base
            .posterior_marginal
            .values
            .iter()
            .zip(&scaled.posterior_marginal.values)
        {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn synthesized_observation_is_reproducible_and_valid() {
        let sys = SystemSpec::lorenz63();
        let (truth, obs) = synthesize_observation(&sys, &[0, 2], 5.0, 0.03, 3, 42).unwrap();
        let (truth2, obs2) = synthesize_observation(&sys, &[0, 2], 5.0, 0.03, 3, 42).unwrap();
        assert_eq!(truth, truth2);
        assert_eq!(obs, obs2);
        assert_eq!(obs.observed_axes, vec![0, 2]);
        assert!(truth.iter().all(|v| v.is_finite()));
        // The observation stays within a few noise deviations of the truth.
        for (k, &a) in obs.observed_axes.iter().enumerate() {
            assert!((obs.y[k] - truth[a]).abs() < 6.0 * obs.sigma_o);
        }
    }

    #[test]
    fn component_counting_on_synthetic_fields() {
        let grid = RegularGrid::from_bounds(&[0.0, 0.0], &[1.0, 1.0], &[10, 10]).unwrap();
        // Two separated bumps.
        let values: Vec<f64> = (0..100)
            .map(|flat| {
                let (i, j) = (flat / 10, flat % 10);
                if (i < 3 && j < 3) || (i > 6 && j > 6) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let field = Field2d::new(grid.clone(), values).unwrap();
        assert_eq!(count_superlevel_components(&field, 0.5), 2);
        // One plateau.
        let field_one = Field2d::new(grid, vec![1.0; 100]).unwrap();
        assert_eq!(count_superlevel_components(&field_one, 0.5), 1);
    }
}
