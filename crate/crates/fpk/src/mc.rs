//! Monte-Carlo reference solver: evolve particles under the original SDE and
//! bin them into a box histogram at the requested time.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{purpose, Stream};
use crate::systems::SystemSpec;
use crate::trajectories::Aabb;

/// Particle counts over a box subdivision of the domain of interest.
/// Particles outside the domain stay in the simulation but are not counted.
#[derive(Clone, Debug)]
pub struct Histogram {
    domain: Aabb,
    shape: Vec<usize>,
    counts: Vec<u64>,
    n_particles: usize,
    t: f64,
}

impl Histogram {
    pub fn domain(&self) -> &Aabb {
        &self.domain
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn n_boxes(&self) -> usize {
        self.counts.len()
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Volume of one box.
    pub fn box_volume(&self) -> f64 {
        self.domain
            .lo()
            .iter()
            .zip(self.domain.hi())
            .zip(&self.shape)
            .map(|((l, h), &c)| (h - l) / c as f64)
            .product()
    }

    /// Center coordinates of a box by flat index (row-major, last axis fastest).
    pub fn center(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0usize; self.dim()];
        let mut rem = flat;
        for a in (0..self.dim()).rev() {
            idx[a] = rem % self.shape[a];
            rem /= self.shape[a];
        }
        idx.iter()
            .enumerate()
            .map(|(a, &i)| {
                let w = (self.domain.hi()[a] - self.domain.lo()[a]) / self.shape[a] as f64;
                self.domain.lo()[a] + (i as f64 + 0.5) * w
            })
            .collect()
    }

    /// Density estimate at a box center: counts / (N * box volume).
    pub fn density(&self, flat: usize) -> f64 {
        self.counts[flat] as f64 / (self.n_particles as f64 * self.box_volume())
    }

    pub fn densities(&self) -> Vec<f64> {
        let scale = 1.0 / (self.n_particles as f64 * self.box_volume());
        self.counts.iter().map(|&c| c as f64 * scale).collect()
    }

    /// Poisson-approximation standard error of the density in a box.
    pub fn density_stderr(&self, flat: usize) -> f64 {
        (self.counts[flat] as f64).sqrt() / (self.n_particles as f64 * self.box_volume())
    }

    /// Fraction of particles that landed inside the domain.
    pub fn fraction_inside(&self) -> f64 {
        self.counts.iter().sum::<u64>() as f64 / self.n_particles as f64
    }
}

/// Sample particles from the system's initial density, evolve them under the
/// original SDE to time `t` by Euler-Maruyama with `steps` steps, and count
/// box occupancy over `domain` subdivided into `shape` boxes per axis.
///
/// Deterministic under the crate's counter-based seeding: particle `i` draws
/// from `Stream::new(seed).child(MC).child(i)`, so results do not depend on
/// the number of worker threads.
pub fn mc_solve(
    sys: &SystemSpec,
    t: f64,
    steps: usize,
    n_particles: usize,
    domain: &Aabb,
    shape: &[usize],
    seed: u64,
) -> Result<Histogram> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument("solve time must be positive".into()));
    }
    if steps == 0 || n_particles == 0 {
        return Err(Error::InvalidArgument(
            "steps and n_particles must be at least 1".into(),
        ));
    }
    if domain.dim() != sys.dim || shape.len() != sys.dim {
        return Err(Error::DimensionMismatch {
            expected: sys.dim,
            got: domain.dim().min(shape.len()),
        });
    }
    if shape.iter().any(|&c| c == 0) {
        return Err(Error::InvalidArgument("histogram needs at least one box per axis".into()));
    }
    if domain
        .lo()
        .iter()
        .zip(domain.hi())
        .any(|(l, h)| !(h - l).is_finite() || !(h - l > 0.0))
    {
        return Err(Error::InvalidArgument(
            "histogram boxes must have finite positive volume".into(),
        ));
    }

    let d = sys.dim;
    let h = t / steps as f64;
    let noise_scale = sys.sigma * h.sqrt();
    let n_boxes: usize = shape.iter().product();
    let root = Stream::new(seed).child(purpose::MC);

    let widths: Vec<f64> = domain
        .lo()
        .iter()
        .zip(domain.hi())
        .zip(shape)
        .map(|((l, hi), &c)| (hi - l) / c as f64)
        .collect();

    let counts = (0..n_particles)
        .into_par_iter()
        .fold(
            || vec![0u64; n_boxes],
            |mut acc, i| {
                let s = root.child(i as u64);
                let mut x = vec![0.0; d];
                sys.p0.sample_into(s.child(0), &mut x);
                let step_stream = s.child(1);
                let mut mu = vec![0.0; d];
                let mut alive = true;
                for j in 0..steps {
                    sys.drift_into(&x, &mut mu);
                    for a in 0..d {
                        x[a] += mu[a] * h + noise_scale * step_stream.normal((j * d + a) as u64);
                    }
                    if x.iter().any(|v| !v.is_finite()) {
                        alive = false;
                        break;
                    }
                }
                if alive {
                    // Half-open boxes [edge_k, edge_{k+1}); the top face is out.
                    let mut flat = 0usize;
                    let mut inside = true;
                    for a in 0..d {
                        let u = (x[a] - domain.lo()[a]) / widths[a];
                        if u < 0.0 || u >= shape[a] as f64 {
                            inside = false;
                            break;
                        }
                        flat = flat * shape[a] + u as usize;
                    }
                    if inside {
                        acc[flat] += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; n_boxes],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    Ok(Histogram {
        domain: domain.clone(),
        shape: shape.to_vec(),
        counts,
        n_particles,
        t,
    })
}
