//! Gauss-Legendre quadrature and the 2D marginalization it powers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::RegularGrid;
use crate::trajectories::Aabb;

/// Largest number of integrated-out axes `marginal_2d` accepts before the
/// tensor-product cost becomes unreasonable.
pub const MAX_DROPPED_AXES: usize = 6;

/// Gauss-Legendre nodes and weights on [lo, hi], exact for polynomials of
/// degree <= 2n-1. Nodes are computed by Newton iteration on the Legendre
/// polynomial recurrence to 1e-15.
pub fn gl_nodes(n: usize, lo: f64, hi: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("quadrature order must be at least 1".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "quadrature interval must be finite with lo < hi, got [{lo}, {hi}]"
        )));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Only half the roots need solving; the rest follows by symmetry.
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let step = p / d;
            x -= step;
            if step.abs() <= 1e-15 {
                break;
            }
        }
        // One polishing step, then the weight from the derivative at the root.
        let (p, d) = legendre_with_derivative(n, x);
        x -= p / d;
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x.abs();
        nodes[n - 1 - i] = x.abs();
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    for i in 0..n {
        nodes[i] = center + half * nodes[i];
        weights[i] *= half;
    }
    Ok((nodes, weights))
}

/// Legendre polynomial P_n and its derivative at x via the three-term
/// recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Values on a 2D node grid, the common currency of marginals and plots.
#[derive(Clone, Debug)]
pub struct Field2d {
    pub grid: RegularGrid,
    pub values: Vec<f64>,
}

impl Field2d {
    pub fn new(grid: RegularGrid, values: Vec<f64>) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(Error::InvalidArgument("Field2d needs a 2-axis grid".into()));
        }
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "grid has {} nodes but {} values were supplied",
                grid.len(),
                values.len()
            )));
        }
        Ok(Field2d { grid, values })
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Integrate a density evaluator over all axes except `keep`, producing its
/// 2D marginal on an `out_shape` node grid spanning the kept axes of
/// `domain`. The dropped axes are integrated with tensor-product
/// Gauss-Legendre rules of order `n_quad` over their `domain` extents.
///
/// Refuses more than [`MAX_DROPPED_AXES`] dropped axes; use the Monte-Carlo
/// histogram solver for marginals of higher-dimensional fields.
pub fn marginal_2d<F>(
    f: F,
    dim: usize,
    keep: (usize, usize),
    domain: &Aabb,
    n_quad: usize,
    out_shape: (usize, usize),
) -> Result<Field2d>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if dim < 2 {
        return Err(Error::InvalidArgument("marginalization needs dim >= 2".into()));
    }
    if domain.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: domain.dim(),
        });
    }
    let (ka, kb) = keep;
    if ka == kb || ka >= dim || kb >= dim {
        return Err(Error::InvalidArgument(format!(
            "kept axes must be distinct and < {dim}, got ({ka}, {kb})"
        )));
    }
    let dropped: Vec<usize> = (0..dim).filter(|a| *a != ka && *a != kb).collect();
    if dropped.len() > MAX_DROPPED_AXES {
        return Err(Error::InvalidArgument(format!(
            "refusing to integrate {} axes by tensor-product quadrature; \
             use the Monte-Carlo histogram solver (mc module) for this marginal",
            dropped.len()
        )));
    }

    let rules: Vec<(Vec<f64>, Vec<f64>)> = dropped
        .iter()
        .map(|&a| gl_nodes(n_quad, domain.lo()[a], domain.hi()[a]))
        .collect::<Result<_>>()?;

    let grid = RegularGrid::from_bounds(
        &[domain.lo()[ka], domain.lo()[kb]],
        &[domain.hi()[ka], domain.hi()[kb]],
        &[out_shape.0, out_shape.1],
    )?;

    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let node = grid.node(flat);
            let mut x = vec![0.0; dim];
            x[ka] = node[0];
            x[kb] = node[1];
            integrate_rec(&f, &mut x, &dropped, &rules, 0)
        })
        .collect();

    Field2d::new(grid, values)
}

/// Recursive tensor-product integration over the dropped axes. Evaluation
/// order is fixed, so results do not depend on thread scheduling.
fn integrate_rec<F>(
    f: &F,
    x: &mut [f64],
    dropped: &[usize],
    rules: &[(Vec<f64>, Vec<f64>)],
    level: usize,
) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if level == dropped.len() {
        return f(x);
    }
    let (nodes, weights) = &rules[level];
    let axis = dropped[level];
    let mut acc = 0.0;
    for (&u, &w) in nodes.iter().zip(weights) {
        x[axis] = u;
        acc += w * integrate_rec(f, x, dropped, rules, level + 1);
    }
    acc
}

/// Integral of a 2D field over its own grid extent: Gauss-Legendre in both
/// axes applied to the bilinear interpolant of the node values.
pub fn integral_2d(field: &Field2d, n_quad: usize) -> Result<f64> {
    let ax = field.grid.axes();
    let (nx, wx) = gl_nodes(n_quad, ax[0].min, ax[0].max)?;
    let (ny, wy) = gl_nodes(n_quad, ax[1].min, ax[1].max)?;
    let mut acc = 0.0;
    for (&u, &wu) in nx.iter().zip(&wx) {
        for (&v, &wv) in ny.iter().zip(&wy) {
            acc += wu * wv * field.grid.interpolate_clamped(&field.values, &[u, v]);
        }
    }
    Ok(acc)
}

/// Divide a nonnegative 2D field by its quadrature integral so that the
/// result integrates to 1 over the field's extent.
pub fn slice_normalize(field: &Field2d, n_quad: usize) -> Result<Field2d> {
    let mass = integral_2d(field, n_quad)?;
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::DegenerateNormalization(format!(
            "field integrates to {mass}; cannot normalize"
        )));
    }
    Field2d::new(
        field.grid.clone(),
        field.values.iter().map(|v| v / mass).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Series expansion of erf(x), used as an independent oracle.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut acc = x;
        for n in 1..200 {
            let nf = n as f64;
            term *= -x * x / nf;
            let contrib = term / (2.0 * nf + 1.0);
            acc += contrib;
            if contrib.abs() < 1e-18 {
                break;
            }
        }
        acc * 2.0 / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn small_rules_match_textbook_values() {
        let (n1, w1) = gl_nodes(1, -1.0, 1.0).unwrap();
        assert_eq!(n1, vec![0.0]);
        assert!((w1[0] - 2.0).abs() < 1e-15);

        let (n2, w2) = gl_nodes(2, -1.0, 1.0).unwrap();
        let r = 1.0 / 3.0f64.sqrt();
        assert!((n2[0] + r).abs() < 1e-15 && (n2[1] - r).abs() < 1e-15);
        assert!((w2[0] - 1.0).abs() < 1e-15 && (w2[1] - 1.0).abs() < 1e-15);

        assert!(matches!(gl_nodes(0, -1.0, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn polynomial_exactness_up_to_2n_minus_1() {
        let (a, b) = (-1.3, 2.7);
        for n in 1..=30usize {
            let (nodes, weights) = gl_nodes(n, a, b).unwrap();
            let wsum: f64 = weights.iter().sum();
            assert!((wsum - (b - a)).abs() < 1e-12 * (b - a));
            for k in 0..=(2 * n - 1) {
                let quad: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&x, &w)| w * x.powi(k as i32))
                    .sum();
                let exact = (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / (k as f64 + 1.0);
                assert!(
                    (quad - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                    "n={n} k={k}: {quad} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn gaussian_integral_matches_error_function() {
        // Normal mass on [-4, 4] = erf(4/sqrt(2)) ~ 0.9999366575.
        let (nodes, weights) = gl_nodes(20, -4.0, 4.0).unwrap();
        let quad: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&x, &w)| w * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt())
            .sum();
        let oracle = erf_series(4.0 / std::f64::consts::SQRT_2);
        assert!((oracle - 0.999_936_657_5).abs() < 1e-9, "oracle sanity");
        assert!((quad - oracle).abs() < 1e-8, "{quad} vs {oracle}");
    }

    #[test]
    fn marginal_of_2d_field_is_the_field() {
        let domain = Aabb::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let f = |x: &[f64]| (x[0] + 2.0 * x[1]).exp();
        let field = marginal_2d(f, 2, (0, 1), &domain, 8, (5, 5)).unwrap();
        for flat in 0..field.grid.len() {
            let node = field.grid.node(flat);
            assert!((field.values[flat] - f(&node)).abs() < 1e-14);
        }
    }

    #[test]
    fn separable_density_marginalizes_to_its_factor() {
        // f(x,y,z) = g(x,y) h(z) with integral of h equal to 1 over the box.
        let g = |x: f64, y: f64| (1.0 + x * x) * (-0.5 * (x * x + y * y)).exp();
        let hvar: f64 = 0.3;
        let h = |z: f64| (-0.5 * z * z / hvar).exp() / (2.0 * std::f64::consts::PI * hvar).sqrt();
        let domain = Aabb::new(vec![-2.0, -2.0, -8.0], vec![2.0, 2.0, 8.0]).unwrap();
        let field = marginal_2d(
            |x: &[f64]| g(x[0], x[1]) * h(x[2]),
            3,
            (0, 1),
            &domain,
            40,
            (9, 9),
        )
        .unwrap();
        for flat in 0..field.grid.len() {
            let node = field.grid.node(flat);
            let expect = g(node[0], node[1]);
            assert!(
                (field.values[flat] - expect).abs() <= 1e-6 * expect.max(1.0),
                "{node:?}: {} vs {expect}",
                field.values[flat]
            );
        }
    }

    #[test]
    fn bimodal_symmetric_marginal_is_swap_invariant() {
        // Symmetric two-center mixture: marginal over (x,y) must equal its
        // transpose under (x,y) -> (y,x).
        let sys = crate::systems::SystemSpec::lorenz63();
        let domain = Aabb::new(vec![-8.0, -8.0, -8.0], vec![8.0, 8.0, 8.0]).unwrap();
        let field = marginal_2d(
            |x: &[f64]| sys.p0_density(x).unwrap(),
            3,
            (0, 1),
            &domain,
            40,
            (11, 11),
        )
        .unwrap();
        let n = 11;
        for i in 0..n {
            for j in 0..n {
                let a = field.values[i * n + j];
                let b = field.values[j * n + i];
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-30));
            }
        }
    }

    #[test]
    fn dropped_axis_guard() {
        let domain = Aabb::new(vec![-1.0; 9], vec![1.0; 9]).unwrap();
        let err = marginal_2d(|_: &[f64]| 1.0, 9, (0, 1), &domain, 4, (3, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Monte-Carlo histogram"), "{msg}");
    }

    #[test]
    fn slice_normalize_constant_and_scale_invariance() {
        let grid = RegularGrid::from_bounds(&[0.0, 0.0], &[1.0, 1.0], &[6, 6]).unwrap();
        let c = Field2d::new(grid.clone(), vec![7.5; 36]).unwrap();
        let normed = slice_normalize(&c, 20).unwrap();
        for v in &normed.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
        // Scaling the input by 7 changes nothing.
        let scaled = Field2d::new(grid, c.values.iter().map(|v| v * 7.0).collect()).unwrap();
        let normed2 = slice_normalize(&scaled, 20).unwrap();
        for (a, b) in normed.values.iter().zip(&normed2.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn slice_normalize_is_idempotent_and_self_consistent() {
        // Unnormalized ring stationary density on [-2,2]^2.
        let sys = crate::systems::SystemSpec::ring2d();
        let grid = RegularGrid::from_bounds(&[-2.0, -2.0], &[2.0, 2.0], &[41, 41]).unwrap();
        let values: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x = grid.node(i);
                (-2.0 * sys.potential(&x).unwrap() / (sys.sigma * sys.sigma)).exp()
            })
            .collect();
        let field = Field2d::new(grid, values).unwrap();
        let once = slice_normalize(&field, 40).unwrap();
        let mass = integral_2d(&once, 40).unwrap();
        assert!((mass - 1.0).abs() < 1e-10, "mass {mass}");
        let twice = slice_normalize(&once, 40).unwrap();
        for (a, b) in once.values.iter().zip(&twice.values) {
            assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn slice_normalize_rejects_zero_field() {
        let grid = RegularGrid::from_bounds(&[0.0, 0.0], &[1.0, 1.0], &[3, 3]).unwrap();
        let zero = Field2d::new(grid, vec![0.0; 9]).unwrap();
        assert!(matches!(
            slice_normalize(&zero, 10),
            Err(Error::DegenerateNormalization(_))
        ));
    }
}
