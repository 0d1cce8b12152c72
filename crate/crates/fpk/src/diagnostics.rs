//! Solver diagnostics: containment probabilities of the transformed SDE,
//! the escape-error proportionality study, and the direct demonstration that
//! the naive physics-informed least-squares objective admits minimizing
//! sequences that do not converge to the solution.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fk::{pairwise_sum, solve_point, EscapePolicy};
use crate::rng::{purpose, Stream};
use crate::stationary::{hsde_drift_fn, tabulate, Extrapolation, StationaryDensity};
use crate::systems::{ou_exact_density, ou_stationary_variance, Dynamics, SystemSpec};
use crate::trajectories::{simulate_batch_with_stream, Aabb, EmConfig};

/// Average probability that a transformed-SDE trajectory started uniformly
/// in D stays inside omega, as a function of time.
#[derive(Clone, Debug)]
pub struct XiEstimate {
    pub t_values: Vec<f64>,
    pub xi: Vec<f64>,
    /// Between-origin standard error of the mean.
    pub stderr: Vec<f64>,
    pub n_origins: usize,
    pub n_traj_per_origin: usize,
}

/// Estimate the containment curve xi(t, D, omega) for `t` up to `t_final`:
/// origins are sampled uniformly in `d_box`; per origin, the fraction of
/// transformed-SDE trajectories still inside `omega` at each step is
/// averaged over origins.
#[allow(clippy::too_many_arguments)]
pub fn estimate_xi(
    sys: &SystemSpec,
    pinf: &StationaryDensity,
    d_box: &Aabb,
    omega: &Aabb,
    t_final: f64,
    steps: usize,
    n_origins: usize,
    n_traj: usize,
    seed: u64,
) -> Result<XiEstimate> {
    if !omega.contains_box(d_box) {
        return Err(Error::InvalidArgument(
            "domain D must be contained in omega".into(),
        ));
    }
    if n_origins == 0 {
        return Err(Error::InvalidArgument("n_origins must be at least 1".into()));
    }
    let cfg = EmConfig {
        t_final,
        steps,
        n_traj,
        master_seed: seed,
    };
    cfg.validate()?;
    let d = sys.dim;
    if d_box.dim() != d || pinf.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: d_box.dim().min(pinf.dim()),
        });
    }

    let root = Stream::new(seed).child(purpose::XI);
    let per_origin: Vec<Result<Vec<f64>>> = (0..n_origins)
        .into_par_iter()
        .map(|k| {
            let o = root.child(k as u64);
            let origin: Vec<f64> = (0..d)
                .map(|a| o.child(0).uniform_in(a as u64, d_box.lo()[a], d_box.hi()[a]))
                .collect();
            let drift = hsde_drift_fn(pinf, sys);
            let batch =
                simulate_batch_with_stream(drift, sys.sigma, &origin, &cfg, omega, o.child(1))?;
            Ok((0..=steps)
                .map(|j| 1.0 - batch.escape_fraction(j).expect("step in range"))
                .collect())
        })
        .collect();

    let mut fractions = Vec::with_capacity(n_origins);
    for r in per_origin {
        fractions.push(r?);
    }

    let mut xi = Vec::with_capacity(steps + 1);
    let mut stderr = Vec::with_capacity(steps + 1);
    let mut scratch = vec![0.0; n_origins];
    for j in 0..=steps {
        for (k, f) in fractions.iter().enumerate() {
            scratch[k] = f[j];
        }
        let mean = pairwise_sum(&scratch) / n_origins as f64;
        let var = if n_origins > 1 {
            let mut dev = scratch.clone();
            for v in dev.iter_mut() {
                let d = *v - mean;
                *v = d * d;
            }
            pairwise_sum(&dev) / (n_origins - 1) as f64
        } else {
            0.0
        };
        xi.push(mean);
        stderr.push((var / n_origins as f64).sqrt());
    }
    Ok(XiEstimate {
        t_values: cfg.times(),
        xi,
        stderr,
        n_origins,
        n_traj_per_origin: n_traj,
    })
}

/// One row of the escape-error study.
#[derive(Clone, Copy, Debug)]
pub struct EscapeErrorRow {
    /// Escape mass 1 - xi(T, D, omega) for this omega.
    pub epsilon: f64,
    /// D-averaged absolute difference between the clamp-policy estimate
    /// under tabulated knowledge on omega and the full-knowledge estimate.
    pub avg_abs_error: f64,
}

/// Study configuration: shared ensemble sizes for the compared solves.
#[derive(Clone, Copy, Debug)]
pub struct EscapeStudyConfig {
    pub steps: usize,
    pub n_traj: usize,
    /// Number of evaluation points drawn uniformly in D.
    pub n_eval_points: usize,
    /// Nodes per axis when tabulating the stationary density on each omega.
    pub tabulation_nodes: usize,
    /// Trajectories per origin when estimating xi.
    pub xi_origins: usize,
    pub xi_traj: usize,
    pub seed: u64,
}

/// Quantify how the estimation error grows with the fraction of escaping
/// trajectories: for each omega (nested, all containing D), solve with
/// full analytic knowledge on an unbounded domain and with clamp-extrapolated
/// tabulated knowledge on omega, then average |difference| over D.
///
/// Rows are sorted by epsilon ascending.
pub fn escape_error_study(
    sys: &SystemSpec,
    pinf_true: &StationaryDensity,
    d_box: &Aabb,
    omegas: &[Aabb],
    t_final: f64,
    cfg: &EscapeStudyConfig,
) -> Result<Vec<EscapeErrorRow>> {
    if omegas.is_empty() {
        return Err(Error::InvalidArgument("study needs at least one omega".into()));
    }
    // Validate nesting: sorted by volume, each box must contain the smaller.
    let mut order: Vec<usize> = (0..omegas.len()).collect();
    order.sort_by(|&a, &b| {
        omegas[a]
            .volume()
            .partial_cmp(&omegas[b].volume())
            .expect("finite volumes")
    });
    for w in order.windows(2) {
        if !omegas[w[1]].contains_box(&omegas[w[0]]) {
            return Err(Error::InvalidArgument(
                "omegas must be nested boxes".into(),
            ));
        }
    }
    for omega in omegas {
        if !omega.contains_box(d_box) {
            return Err(Error::InvalidArgument(
                "domain D must be contained in omega".into(),
            ));
        }
    }

    let root = Stream::new(cfg.seed).child(purpose::STUDY);
    let d = sys.dim;
    let points: Vec<Vec<f64>> = (0..cfg.n_eval_points)
        .map(|k| {
            let s = root.child(0).child(k as u64);
            (0..d)
                .map(|a| s.uniform_in(a as u64, d_box.lo()[a], d_box.hi()[a]))
                .collect()
        })
        .collect();

    // Per-point solver seeds are shared across runs so the compared
    // estimates use common random numbers.
    let solve_at = |pinf: &StationaryDensity, omega: &Aabb, policy: EscapePolicy| -> Result<Vec<f64>> {
        let results: Vec<Result<f64>> = points
            .par_iter()
            .enumerate()
            .map(|(k, x)| {
                let cfg_k = EmConfig {
                    t_final,
                    steps: cfg.steps,
                    n_traj: cfg.n_traj,
                    master_seed: root.child(1).child(k as u64).bits(0),
                };
                let est = solve_point(sys, pinf, x, &cfg_k, omega, policy)?;
                Ok(*est.values.last().expect("terminal time present"))
            })
            .collect();
        results.into_iter().collect()
    };

    let full = solve_at(pinf_true, &Aabb::unbounded(d), EscapePolicy::Drop)?;

    let mut rows = Vec::with_capacity(omegas.len());
    for omega in omegas {
        let tab = tabulate(
            pinf_true,
            omega,
            &vec![cfg.tabulation_nodes; d],
            Extrapolation::Clamp,
        )?;
        let pinf_sharp = StationaryDensity::grid(tab);
        let clamped = solve_at(&pinf_sharp, omega, EscapePolicy::Clamp)?;
        let xi = estimate_xi(
            sys,
            &pinf_sharp,
            d_box,
            omega,
            t_final,
            cfg.steps,
            cfg.xi_origins,
            cfg.xi_traj,
            root.child(2).bits(0),
        )?;
        let epsilon = 1.0 - xi.xi.last().expect("terminal xi");
        let diffs: Vec<f64> = full
            .iter()
            .zip(&clamped)
            .map(|(a, b)| (a - b).abs())
            .collect();
        rows.push(EscapeErrorRow {
            epsilon,
            avg_abs_error: pairwise_sum(&diffs) / diffs.len() as f64,
        });
    }
    rows.sort_by(|a, b| a.epsilon.partial_cmp(&b.epsilon).expect("finite epsilons"));
    Ok(rows)
}

/// One row of the pathological-sequence demonstration.
#[derive(Clone, Copy, Debug)]
pub struct PinnRow {
    pub k: f64,
    /// Sampled least-squares objective J(f_k).
    pub j_value: f64,
    /// Initial-condition term of the objective (zero by construction).
    pub ic_term: f64,
    /// Analytic bound 2 B e^2 k^2 exp(-2 k t2).
    pub bound: f64,
    /// Largest |f_k - p| over samples at t >= t2.
    pub sup_gap: f64,
    /// False when k <= 1/t2, outside the regime the bound argument assumes.
    pub in_regime: bool,
}

/// Evaluate the sampled physics-informed objective on the blending sequence
/// `f_k = phi_k p + (1 - phi_k) p_stat` (with `f_k = p` for `t <= 1/k`,
/// `phi_k(t) = exp(1 - k t)`) for a linear-drift system whose solution is
/// known in closed form. The objective vanishes as k grows while `f_k`
/// converges to the stationary density, not to the solution.
///
/// `sample_times` must be sorted with `sample_times[0] == 0` and a positive
/// second entry.
pub fn pinn_pathology(
    sys: &SystemSpec,
    sample_times: &[f64],
    sample_points: &[Vec<f64>],
    k_values: &[f64],
) -> Result<Vec<PinnRow>> {
    let theta = match sys.dynamics {
        Dynamics::Ou { theta } if theta > 0.0 => theta,
        _ => {
            return Err(Error::InvalidArgument(
                "the pathology demonstration needs the linear-drift oracle system".into(),
            ))
        }
    };
    if sample_times.len() < 2 || sample_times[0] != 0.0 {
        return Err(Error::InvalidArgument(
            "sample times must start at 0 and contain a positive time".into(),
        ));
    }
    if sample_times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("sample times must be strictly increasing".into()));
    }
    if sample_points.is_empty() || k_values.is_empty() {
        return Err(Error::InvalidArgument("need sample points and k values".into()));
    }
    for x in sample_points {
        if x.len() != sys.dim {
            return Err(Error::DimensionMismatch {
                expected: sys.dim,
                got: x.len(),
            });
        }
    }
    let t2 = sample_times[1];

    let svar = ou_stationary_variance(theta, sys.sigma)?;
    let stationary = |x: &[f64]| -> f64 {
        let q: f64 = x.iter().map(|v| v * v / svar).sum();
        (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * svar).sqrt().powi(sys.dim as i32)
    };

    // Closed-form solution values on the sample lattice, reused per k.
    let n_t = sample_times.len();
    let n_x = sample_points.len();
    let mut p_vals = vec![0.0f64; n_t * n_x];
    let mut stat_vals = vec![0.0f64; n_x];
    for (jx, x) in sample_points.iter().enumerate() {
        stat_vals[jx] = stationary(x);
        for (it, &t) in sample_times.iter().enumerate() {
            p_vals[it * n_x + jx] = ou_exact_density(theta, sys.sigma, &sys.p0, t, x)?;
        }
    }

    // B = sup over the sample lattice of max(p^2, p_stat^2).
    let mut b = 0.0f64;
    for v in &p_vals {
        b = b.max(v * v);
    }
    for v in &stat_vals {
        b = b.max(v * v);
    }

    let e2 = std::f64::consts::E * std::f64::consts::E;
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        if !(k > 0.0) {
            return Err(Error::InvalidArgument("k values must be positive".into()));
        }
        // Residual of d/dt - L on f_k: both p and the stationary density are
        // annihilated, leaving phi_k'(t) (p - p_stat) for t > 1/k and zero on
        // the p-branch t <= 1/k.
        let mut residual_sq_sum = 0.0;
        let mut sup_gap = 0.0f64;
        for (it, &t) in sample_times.iter().enumerate() {
            if t <= 1.0 / k {
                continue; // f_k = p here: zero residual, zero gap
            }
            let phi = (1.0 - k * t).exp();
            let dphi = -k * phi;
            for jx in 0..n_x {
                let diff = p_vals[it * n_x + jx] - stat_vals[jx];
                let r = dphi * diff;
                residual_sq_sum += r * r;
                if t >= t2 {
                    let gap = ((1.0 - phi) * diff).abs();
                    sup_gap = sup_gap.max(gap);
                }
            }
        }
        // Initial-condition term: f_k(0, .) = p(0, .) = p0, so this vanishes.
        let ic_term: f64 = sample_points
            .iter()
            .enumerate()
            .map(|(jx, x)| {
                let d = p_vals[jx] - sys.p0.log_density_unchecked(x).exp();
                d * d
            })
            .sum::<f64>()
            / n_x as f64;
        let j_value = residual_sq_sum / (n_t * n_x) as f64 + ic_term;
        let bound = 2.0 * b * e2 * k * k * (-2.0 * k * t2).exp();
        rows.push(PinnRow {
            k,
            j_value,
            ic_term,
            bound,
            sup_gap,
            in_regime: k > 1.0 / t2,
        });
    }
    Ok(rows)
}
