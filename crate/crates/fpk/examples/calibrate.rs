//! Scratch calibration probe (temporary, not part of the deliverable).

use fpk::diagnostics::estimate_xi;
use fpk::stationary::{estimate_invariant_grid, InvariantGridConfig, StationaryDensity};
use fpk::systems::SystemSpec;
use fpk::trajectories::Aabb;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "thomas".into());
    match which.as_str() {
        "thomas" => thomas_xi(),
        "study" => ring_study(),
        "filter" => lorenz_filter(),
        _ => panic!("unknown probe"),
    }
}

fn lorenz_filter() {
    use fpk::filtering::{count_superlevel_components, one_step_filter, synthesize_observation};
    use fpk::fk::EscapePolicy;
    use fpk::grid::RegularGrid;
    use fpk::trajectories::EmConfig;

    let sys = SystemSpec::lorenz63();
    let omega = Aabb::new(vec![-30.0, -40.0, 0.0], vec![30.0, 40.0, 70.0]).unwrap();
    let t0 = std::time::Instant::now();
    let cfg = InvariantGridConfig {
        n_particles: 50_000,
        burn_in: 2.0,
        snapshots: 15,
        snapshot_gap: 0.2,
        dt: 0.002,
        pseudo_count: 0.25,
        blur_cells: 1.0,
        seed: 77,
    };
    let gd = estimate_invariant_grid(&sys, &omega, &[31, 41, 36], &cfg).unwrap();
    println!("pinf build: {:.1}s", t0.elapsed().as_secs_f64());
    let pinf = StationaryDensity::grid(gd);

    let domain = Aabb::new(vec![-10.0, -15.0, 7.0], vec![10.0, 15.0, 28.0]).unwrap();
    let grid = RegularGrid::from_bounds(domain.lo(), domain.hi(), &[21, 21, 11]).unwrap();
    let em = EmConfig {
        t_final: 0.03,
        steps: 3,
        n_traj: 200,
        master_seed: 42,
    };

    for obs_seed in 1..=14u64 {
        let (truth, obs) = synthesize_observation(&sys, &[0, 2], 5.0, 0.03, 3, obs_seed).unwrap();
        let t1 = std::time::Instant::now();
        let out = one_step_filter(
            &sys,
            &pinf,
            &obs,
            &grid,
            &domain,
            &em,
            &omega,
            EscapePolicy::Drop,
            (0, 1),
            20,
            (41, 41),
        )
        .unwrap();
        let pred = count_superlevel_components(&out.prediction_marginal, 0.5);
        let post = count_superlevel_components(&out.posterior_marginal, 0.5);
        println!(
            "seed={obs_seed}: truth=({:+.2},{:+.2},{:+.2}) y=({:+.2},{:+.2}) disc={:+.2} pred_modes={pred} post_modes={post} [{:.1}s]",
            truth[0], truth[1], truth[2], obs.y[0], obs.y[1],
            obs.y[0] + obs.y[1],
            t1.elapsed().as_secs_f64()
        );
    }
}

fn ring_study() {
    use fpk::diagnostics::{escape_error_study, EscapeStudyConfig};
    let sys = SystemSpec::ring2d();
    let pinf = StationaryDensity::gradient_analytic(&sys).unwrap();
    let d_box = Aabb::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    // First: scan single omegas for their epsilon.
    for half in [1.3f64, 1.4, 1.5, 1.6, 1.7, 1.8, 2.0, 2.2] {
        let omega = Aabb::new(vec![-half, -half], vec![half, half]).unwrap();
        let xi = estimate_xi(&sys, &pinf, &d_box, &omega, 0.5, 50, 200, 200, 7).unwrap();
        println!("half={half}: eps = {:.4}", 1.0 - xi.xi.last().unwrap());
    }
    // Then: full study runs with candidate boxes at increasing N to see
    // whether the small-epsilon ratio is a noise floor.
    let omegas: Vec<Aabb> = [1.5f64, 1.6, 1.7, 2.5]
        .iter()
        .map(|&h| Aabb::new(vec![-h, -h], vec![h, h]).unwrap())
        .collect();
    for n_traj in [4000usize] {
        let cfg = EscapeStudyConfig {
            steps: 50,
            n_traj,
            n_eval_points: 100,
            tabulation_nodes: 301,
            xi_origins: 200,
            xi_traj: 500,
            seed: 11,
        };
        let t0 = std::time::Instant::now();
        let rows = escape_error_study(&sys, &pinf, &d_box, &omegas, 0.5, &cfg).unwrap();
        println!("n_traj = {n_traj}:");
        for r in &rows {
            println!(
                "  eps={:.4}  err={:.5e}  err/eps={:.5e}",
                r.epsilon,
                r.avg_abs_error,
                r.avg_abs_error / r.epsilon
            );
        }
        println!("  study took {:.1}s", t0.elapsed().as_secs_f64());
    }
}

fn thomas_xi() {
    let sys = SystemSpec::thomas();
    let omega = Aabb::new(vec![-10.0; 3], vec![10.0; 3]).unwrap();
    let d_box = Aabb::new(vec![-8.0; 3], vec![8.0; 3]).unwrap();

    for (np, dt, burn, snaps, gap, blur, pseudo, nodes) in [
        (100_000usize, 0.1, 30.0, 20usize, 1.0, 1.0, 0.25, 41usize),
        (100_000, 0.1, 30.0, 20, 1.0, 2.0, 0.25, 41),
    ] {
        let t0 = std::time::Instant::now();
        let cfg = InvariantGridConfig {
            n_particles: np,
            burn_in: burn,
            snapshots: snaps,
            snapshot_gap: gap,
            dt,
            pseudo_count: pseudo,
            blur_cells: blur,
            seed: 2024,
        };
        let gd = estimate_invariant_grid(&sys, &omega, &[nodes; 3], &cfg).unwrap();
        let build_time = t0.elapsed().as_secs_f64();
        let pinf = StationaryDensity::grid(gd);
        let t1 = std::time::Instant::now();
        let xi = estimate_xi(&sys, &pinf, &d_box, &omega, 1.0, 10, 200, 200, 7).unwrap();
        println!(
            "np={np} dt={dt} burn={burn} snaps={snaps} gap={gap} blur={blur} pseudo={pseudo} nodes={nodes}: \
             xi(1)={:.4} +- {:.4}  [build {:.1}s, xi {:.1}s]",
            xi.xi.last().unwrap(),
            xi.stderr.last().unwrap(),
            build_time,
            t1.elapsed().as_secs_f64()
        );
        let curve: Vec<String> = xi.xi.iter().map(|v| format!("{v:.4}")).collect();
        println!("  curve: {}", curve.join(" "));
    }
}
