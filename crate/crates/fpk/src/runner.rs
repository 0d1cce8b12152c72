//! Subcommand dispatch shared by the CLI binary and the test suites.
//! Each run reads one JSON config, writes CSV artifacts plus a JSON sidecar
//! into the output directory, and returns printable summary lines.
//! Identical config and seed produce byte-identical numeric CSV content
//! regardless of worker-thread count.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::diagnostics::{escape_error_study, estimate_xi, pinn_pathology, EscapeStudyConfig};
use crate::error::{Error, Result};
use crate::export;
use crate::filtering::{one_step_filter, synthesize_observation, Observation};
use crate::fk::{score_batch, solve_grid, solve_point, DensityEstimate, EscapePolicy};
use crate::grid::RegularGrid;
use crate::mc::mc_solve;
use crate::rng::{purpose, Stream};
use crate::stationary::hsde_drift_fn;
use crate::systems::{growth_constant_check, ou_exact_density, Dynamics};
use crate::trajectories::{simulate_batch_with_stream, EmConfig, TrajectoryBatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Solve,
    Mc,
    Xi,
    EscapeStudy,
    Filter,
    Marginal,
    PinnDemo,
    CheckGrowth,
    DumpTraj,
    Rescore,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Solve => "solve",
            Subcommand::Mc => "mc",
            Subcommand::Xi => "xi",
            Subcommand::EscapeStudy => "escape-study",
            Subcommand::Filter => "filter",
            Subcommand::Marginal => "marginal",
            Subcommand::PinnDemo => "pinn-demo",
            Subcommand::CheckGrowth => "check-growth",
            Subcommand::DumpTraj => "dump-traj",
            Subcommand::Rescore => "rescore",
        }
    }
}

/// Result of a run: human-readable summary lines, files written, and whether
/// a checked property failed (used by `check-growth`).
#[derive(Debug, Default)]
pub struct RunOutput {
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
    pub check_failed: bool,
}

#[derive(Serialize)]
struct MetaSidecar<'a> {
    system: &'a str,
    seed: u64,
    steps: usize,
    n_traj: usize,
    t_final: f64,
    domain: &'a crate::config::BoxConfig,
    omega: Option<&'a crate::config::BoxConfig>,
    policy: EscapePolicy,
    normalization: crate::fk::Normalization,
    #[serde(skip_serializing_if = "Option::is_none")]
    observation: Option<ObservationRecord>,
}

#[derive(Serialize)]
struct ObservationRecord {
    observed_axes: Vec<usize>,
    y: Vec<f64>,
    sigma_o: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    synthesize_seed: Option<u64>,
}

pub fn run(cmd: Subcommand, config_path: &Path, out_dir: &Path) -> Result<RunOutput> {
    let cfg = RunConfig::from_file(config_path)?;
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    match cmd {
        Subcommand::Solve => run_solve(&cfg, out_dir),
        Subcommand::Mc => run_mc(&cfg, out_dir),
        Subcommand::Xi => run_xi(&cfg, out_dir),
        Subcommand::EscapeStudy => run_escape_study(&cfg, out_dir),
        Subcommand::Filter => run_filter(&cfg, out_dir),
        Subcommand::Marginal => run_marginal(&cfg, out_dir),
        Subcommand::PinnDemo => run_pinn(&cfg, out_dir),
        Subcommand::CheckGrowth => run_growth(&cfg, out_dir),
        Subcommand::DumpTraj => run_dump(&cfg, out_dir),
        Subcommand::Rescore => run_rescore(&cfg, out_dir),
    }
}

fn em_config(cfg: &RunConfig) -> EmConfig {
    EmConfig {
        t_final: cfg.t_final,
        steps: cfg.steps,
        n_traj: cfg.n_traj,
        master_seed: cfg.seed,
    }
}

fn output_grid(cfg: &RunConfig, dim: usize) -> Result<RegularGrid> {
    let counts = cfg.output_grid.as_ref().ok_or_else(|| {
        Error::Validation("this subcommand requires `output_grid`".into())
    })?;
    let domain = cfg.domain()?;
    if counts.len() != dim {
        return Err(Error::Validation(format!(
            "output_grid needs {dim} axis counts"
        )));
    }
    RegularGrid::from_bounds(domain.lo(), domain.hi(), counts)
        .map_err(|e| Error::Validation(format!("output_grid: {e}")))
}

fn write_meta(
    cfg: &RunConfig,
    path: &Path,
    normalization: crate::fk::Normalization,
    observation: Option<ObservationRecord>,
) -> Result<()> {
    let meta = MetaSidecar {
        system: &cfg.system.name,
        seed: cfg.seed,
        steps: cfg.steps,
        n_traj: cfg.n_traj,
        t_final: cfg.t_final,
        domain: &cfg.domain,
        omega: cfg.omega.as_ref(),
        policy: cfg.policy,
        normalization,
        observation,
    };
    export::write_sidecar(path, &meta)
}

fn run_solve(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let sys = cfg.system()?;
    let pinf = cfg.pinf(&sys)?;
    let omega = cfg.omega(sys.dim)?;
    let em = em_config(cfg);
    let est: DensityEstimate = if cfg.output_grid.is_some() {
        let grid = output_grid(cfg, sys.dim)?;
        solve_grid(&sys, &pinf, &grid, &em, &omega, cfg.policy)?
    } else {
        let point = cfg.point.clone().ok_or_else(|| {
            Error::Validation("solve needs either `output_grid` or `point`".into())
        })?;
        solve_point(&sys, &pinf, &point, &em, &omega, cfg.policy)?
    };

    let csv = out_dir.join("solve.csv");
    export::write_density_csv(&csv, &est)?;
    let meta = out_dir.join("solve.meta.json");
    write_meta(cfg, &meta, est.normalization, None)?;

    let mut out = RunOutput {
        lines: vec![format!(
            "solved {} nodes x {} times (policy {:?})",
            est.n_nodes(),
            est.times.len(),
            cfg.policy
        )],
        files: vec![csv, meta],
        check_failed: false,
    };

    if cfg.compare_closed_form {
        let theta = match sys.dynamics {
            Dynamics::Ou { theta } if theta > 0.0 => theta,
            _ => {
                return Err(Error::Validation(
                    "compare_closed_form requires the `ou` system".into(),
                ))
            }
        };
        let n = est.n_nodes();
        let mut worst: f64 = 0.0;
        let mut compared = 0usize;
        for (jt, &t) in est.times.iter().enumerate() {
            for k in 0..n {
                let row = jt * n + k;
                if est.stderr[row] > 0.0 {
                    let exact = ou_exact_density(theta, sys.sigma, &sys.p0, t, est.node(k))?;
                    worst = worst.max((est.values[row] - exact).abs() / est.stderr[row]);
                    compared += 1;
                }
            }
        }
        out.lines.push(format!(
            "closed-form comparison over {compared} rows: max |p_hat - p_exact| / stderr = {worst:.3}"
        ));
    }
    Ok(out)
}

fn run_mc(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let sys = cfg.system()?;
    let domain = cfg.domain()?;
    let shape = cfg.output_grid.clone().ok_or_else(|| {
        Error::Validation("mc requires `output_grid` (box counts per axis)".into())
    })?;
    let n_particles = cfg.n_particles.unwrap_or(cfg.n_traj);
    let hist = mc_solve(
        &sys,
        cfg.t_final,
        cfg.steps,
        n_particles,
        &domain,
        &shape,
        cfg.seed,
    )?;
    let csv = out_dir.join("mc.csv");
    export::write_histogram_csv(&csv, &hist)?;
    let meta = out_dir.join("mc.meta.json");
    write_meta(cfg, &meta, crate::fk::Normalization::Unnormalized, None)?;
    Ok(RunOutput {
        lines: vec![format!(
            "binned {} particles into {} boxes; inside fraction {:.6}",
            n_particles,
            hist.n_boxes(),
            hist.fraction_inside()
        )],
        files: vec![csv, meta],
        check_failed: false,
    })
}

fn run_xi(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let sys = cfg.system()?;
    let pinf = cfg.pinf(&sys)?;
    let omega = cfg.omega(sys.dim)?;
    let d_box = cfg.domain()?;
    let n_origins = cfg.n_origins.unwrap_or(100);
    let xi = estimate_xi(
        &sys,
        &pinf,
        &d_box,
        &omega,
        cfg.t_final,
        cfg.steps,
        n_origins,
        cfg.n_traj,
        cfg.seed,
    )?;
    let csv = out_dir.join("xi.csv");
    export::write_xi_csv(&csv, &xi)?;
    let last = xi.xi.len() - 1;
    Ok(RunOutput {
        lines: vec![format!(
            "xi({}) = {:.3} +- {:.3}  ({} origins x {} trajectories)",
            xi.t_values[last], xi.xi[last], xi.stderr[last], n_origins, cfg.n_traj
        )],
        files: vec![csv],
        check_failed: false,
    })
}

fn run_escape_study(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let sys = cfg.system()?;
    let pinf = cfg.pinf(&sys)?;
    let d_box = cfg.domain()?;
    let omegas: Vec<_> = cfg
        .omegas
        .as_ref()
        .ok_or_else(|| Error::Validation("escape-study requires `omegas`".into()))?
        .iter()
        .map(|b| b.to_aabb())
        .collect::<Result<_>>()?;
    let study_cfg = EscapeStudyConfig {
        steps: cfg.steps,
        n_traj: cfg.n_traj,
        n_eval_points: cfg.n_origins.unwrap_or(64),
        tabulation_nodes: 101,
        xi_origins: 200,
        xi_traj: 200,
        seed: cfg.seed,
    };
    let rows = escape_error_study(&sys, &pinf, &d_box, &omegas, cfg.t_final, &study_cfg)?;
    let csv = out_dir.join("escape_study.csv");
    export::write_escape_study_csv(&csv, &rows)?;
    let lines = rows
        .iter()
        .map(|r| format!("epsilon={:.4}  avg_abs_error={:.6e}", r.epsilon, r.avg_abs_error))
        .collect();
    Ok(RunOutput {
        lines,
        files: vec![csv],
        check_failed: false,
    })
}

fn run_filter(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let sys = cfg.system()?;
    let pinf = cfg.pinf(&sys)?;
    let omega = cfg.omega(sys.dim)?;
    let domain = cfg.domain()?;
    let grid = output_grid(cfg, sys.dim)?;
    let obs_cfg = cfg
        .observation
        .as_ref()
        .ok_or_else(|| Error::Validation("filter requires `observation`".into()))?;
    let marg = cfg
        .marginal
        .as_ref()
        .ok_or_else(|| Error::Validation("filter requires `marginal`".into()))?;

    let (truth, obs) = match (&obs_cfg.y, obs_cfg.synthesize_seed) {
        (Some(y), _) => (
            None,
            Observation {
                observed_axes: obs_cfg.axes.clone(),
                y: y.clone(),
                sigma_o: obs_cfg.sigma_o,
            },
        ),
        (None, Some(seed)) => {
            let (truth, obs) =
                synthesize_observation(&sys, &obs_cfg.axes, obs_cfg.sigma_o, cfg.t_final, cfg.steps, seed)?;
            (Some(truth), obs)
        }
        (None, None) => unreachable!("validated"),
    };

    let em = em_config(cfg);
    let out = one_step_filter(
        &sys,
        &pinf,
        &obs,
        &grid,
        &domain,
        &em,
        &omega,
        cfg.policy,
        (marg.keep[0], marg.keep[1]),
        marg.n_quad,
        (marg.out[0], marg.out[1]),
    )?;

    let post_csv = out_dir.join("filter_posterior.csv");
    export::write_density_csv(&post_csv, &out.posterior)?;
    let pred_marg_csv = out_dir.join("filter_prediction_marginal.csv");
    export::write_field2d_csv(&pred_marg_csv, &out.prediction_marginal)?;
    let post_marg_csv = out_dir.join("filter_posterior_marginal.csv");
    export::write_field2d_csv(&post_marg_csv, &out.posterior_marginal)?;
    let meta = out_dir.join("filter.meta.json");
    write_meta(
        cfg,
        &meta,
        crate::fk::Normalization::SliceNormalized {
            axes: [marg.keep[0], marg.keep[1]],
        },
        Some(ObservationRecord {
            observed_axes: obs.observed_axes.clone(),
            y: obs.y.clone(),
            sigma_o: obs.sigma_o,
            truth,
            synthesize_seed: obs_cfg.synthesize_seed,
        }),
    )?;

    let pred_modes = crate::filtering::count_superlevel_components(&out.prediction_marginal, 0.5);
    let post_modes = crate::filtering::count_superlevel_components(&out.posterior_marginal, 0.5);
    Ok(RunOutput {
        lines: vec![
            format!("observed axes {:?} at y = {:?}", obs.observed_axes, obs.y),
            format!(
                "50% superlevel components: prediction {pred_modes}, posterior {post_modes}"
            ),
        ],
        files: vec![post_csv, pred_marg_csv, post_marg_csv, meta],
        check_failed: false,
    })
}

fn run_marginal(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let sys = cfg.system()?;
    let pinf = cfg.pinf(&sys)?;
    let omega = cfg.omega(sys.dim)?;
    let domain = cfg.domain()?;
    let grid = output_grid(cfg, sys.dim)?;
    let marg = cfg
        .marginal
        .as_ref()
        .ok_or_else(|| Error::Validation("marginal requires a `marginal` section".into()))?;
    let em = em_config(cfg);
    let est = solve_grid(&sys, &pinf, &grid, &em, &omega, cfg.policy)?;
    let last = est.times.len() - 1;
    let slice = est.time_slice(last).to_vec();
    let field = crate::filtering::marginal_of_grid_slice(
        &grid,
        &slice,
        &domain,
        (marg.keep[0], marg.keep[1]),
        marg.n_quad,
        (marg.out[0], marg.out[1]),
    )?;
    let normalized = crate::quadrature::slice_normalize(&field, marg.n_quad)?;
    let csv = out_dir.join("marginal.csv");
    export::write_field2d_csv(&csv, &normalized)?;
    let meta = out_dir.join("marginal.meta.json");
    write_meta(
        cfg,
        &meta,
        crate::fk::Normalization::SliceNormalized {
            axes: [marg.keep[0], marg.keep[1]],
        },
        None,
    )?;
    Ok(RunOutput {
        lines: vec![format!(
            "marginal over axes ({}, {}) at t = {}",
            marg.keep[0], marg.keep[1], est.times[last]
        )],
        files: vec![csv, meta],
        check_failed: false,
    })
}

fn run_pinn(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let sys = cfg.system()?;
    let t2 = cfg.t2.unwrap_or(0.1);
    let k_values = cfg.k_values.clone().unwrap_or_else(|| vec![10.0, 20.0, 40.0]);
    if !(t2 > 0.0 && t2 < cfg.t_final) {
        return Err(Error::Validation("t2 must satisfy 0 < t2 < t_final".into()));
    }
    // Sample lattice: time 0 plus `steps` evenly spaced times on [t2, T].
    let mut times = vec![0.0];
    let m = cfg.steps.max(1);
    for i in 0..m {
        let t = if m == 1 {
            t2
        } else {
            t2 + (cfg.t_final - t2) * i as f64 / (m - 1) as f64
        };
        times.push(t);
    }
    let grid = output_grid(cfg, sys.dim)?;
    let points: Vec<Vec<f64>> = (0..grid.len()).map(|k| grid.node(k)).collect();
    let rows = pinn_pathology(&sys, &times, &points, &k_values)?;
    let csv = out_dir.join("pinn.csv");
    export::write_pinn_csv(&csv, &rows)?;
    let mut lines = Vec::new();
    for r in &rows {
        if !r.in_regime {
            lines.push(format!(
                "warning: k={} is at or below 1/t2={:.3}; the bound argument assumes k > 1/t2",
                r.k,
                1.0 / t2
            ));
        }
        lines.push(format!(
            "k={:<6} J={:.6e}  bound={:.6e}  sup_gap={:.6e}",
            r.k, r.j_value, r.bound, r.sup_gap
        ));
    }
    Ok(RunOutput {
        lines,
        files: vec![csv],
        check_failed: false,
    })
}

fn run_growth(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let sys = cfg.system()?;
    let growth = cfg
        .growth
        .as_ref()
        .ok_or_else(|| Error::Validation("check-growth requires a `growth` section".into()))?;
    let sample_box = match &growth.sample_box {
        Some(b) => b.to_aabb()?,
        None => cfg.domain()?,
    };
    if sample_box.dim() != sys.dim {
        return Err(Error::Validation("growth sample box has the wrong dimension".into()));
    }
    if growth.n_samples == 0 {
        return Err(Error::Validation("growth.n_samples must be positive".into()));
    }
    let root = Stream::new(cfg.seed).child(purpose::GROWTH);
    let sample: Vec<Vec<f64>> = (0..growth.n_samples)
        .map(|k| {
            let s = root.child(k as u64);
            (0..sys.dim)
                .map(|a| s.uniform_in(a as u64, sample_box.lo()[a], sample_box.hi()[a]))
                .collect()
        })
        .collect();
    let report = growth_constant_check(&sys, growth.c, &sample)?;
    let json = out_dir.join("growth.json");
    export::write_sidecar(&json, &report)?;
    Ok(RunOutput {
        lines: vec![format!(
            "growth bound with C={}: max violation {:.6e} -> {}",
            growth.c,
            report.max_violation,
            if report.pass { "pass" } else { "FAIL" }
        )],
        files: vec![json],
        check_failed: !report.pass,
    })
}

fn traj_path(cfg: &RunConfig, out_dir: &Path) -> PathBuf {
    cfg.traj_file
        .clone()
        .unwrap_or_else(|| out_dir.join("batch.fktb"))
}

fn run_dump(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let sys = cfg.system()?;
    let pinf = cfg.pinf(&sys)?;
    let omega = cfg.omega(sys.dim)?;
    let point = cfg
        .point
        .clone()
        .ok_or_else(|| Error::Validation("dump-traj requires `point`".into()))?;
    let em = em_config(cfg);
    let drift = hsde_drift_fn(&pinf, &sys);
    let stream = Stream::new(em.master_seed).child(purpose::FK_SOLVE).child(0);
    let batch = simulate_batch_with_stream(drift, sys.sigma, &point, &em, &omega, stream)?;
    let path = traj_path(cfg, out_dir);
    batch.write_file(&path)?;
    Ok(RunOutput {
        lines: vec![format!(
            "dumped {} trajectories x {} steps from {:?}",
            em.n_traj, em.steps, point
        )],
        files: vec![path],
        check_failed: false,
    })
}

fn run_rescore(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let sys = cfg.system()?;
    let pinf = cfg.pinf(&sys)?;
    let path = cfg
        .traj_file
        .clone()
        .ok_or_else(|| Error::Validation("rescore requires `traj_file`".into()))?;
    let batch = TrajectoryBatch::read_file(&path)?;
    if batch.dim() != sys.dim {
        return Err(Error::Validation(format!(
            "trajectory file has dim {} but system `{}` has dim {}",
            batch.dim(),
            sys.name,
            sys.dim
        )));
    }
    let est = score_batch(&batch, &sys.p0, &pinf, cfg.policy)?;
    let csv = out_dir.join("rescore.csv");
    export::write_density_csv(&csv, &est)?;
    let meta = out_dir.join("rescore.meta.json");
    write_meta(cfg, &meta, est.normalization, None)?;
    Ok(RunOutput {
        lines: vec![format!(
            "re-scored {} trajectories x {} times against `{}` initial density",
            batch.n_traj(),
            batch.steps() + 1,
            sys.name
        )],
        files: vec![csv, meta],
        check_failed: false,
    })
}
