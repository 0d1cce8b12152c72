//! Deterministic parallel Euler-Maruyama ensembles with per-step domain
//! containment tracking.
//!
//! Noise is drawn from counter-based streams (see [`crate::rng`]): the
//! increment for (trajectory i, step j, axis a) is a pure function of the
//! batch stream key, so any partition of trajectories across threads yields
//! bit-identical batches.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Axis-aligned box, possibly unbounded (faces at +-infinity).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Aabb {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidArgument(
                "box bounds must be nonempty and of equal length".into(),
            ));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l < h) {
                return Err(Error::InvalidArgument(format!(
                    "box needs lo < hi per axis, got [{l}, {h}]"
                )));
            }
        }
        Ok(Aabb { lo, hi })
    }

    /// The whole space: nothing can escape this box.
    pub fn unbounded(dim: usize) -> Self {
        Aabb {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn is_unbounded(&self) -> bool {
        self.lo.iter().all(|l| *l == f64::NEG_INFINITY)
            && self.hi.iter().all(|h| *h == f64::INFINITY)
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&l, &h))| v >= l && v <= h)
    }

    /// Whether `inner` lies entirely inside `self`.
    pub fn contains_box(&self, inner: &Aabb) -> bool {
        self.dim() == inner.dim()
            && inner
                .lo
                .iter()
                .zip(&self.lo)
                .all(|(il, ol)| il >= ol)
            && inner.hi.iter().zip(&self.hi).all(|(ih, oh)| ih <= oh)
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| h - l)
            .product()
    }
}

/// Euler-Maruyama ensemble configuration. Step length is `t_final / steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub t_final: f64,
    pub steps: usize,
    pub n_traj: usize,
    pub master_seed: u64,
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidArgument("t_final must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if self.n_traj == 0 {
            return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    /// The M+1 sample times 0 = tau_0 < ... < tau_M = t_final.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|j| self.t_final * j as f64 / self.steps as f64)
            .collect()
    }
}

/// An ensemble of trajectories from a common origin, with per-step
/// containment flags. `inside(i, j)` is true iff trajectory i stayed inside
/// omega at *all* steps 0..=j.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    origin: Vec<f64>,
    t_final: f64,
    dim: usize,
    steps: usize,
    n_traj: usize,
    /// (i, j, axis) row-major.
    states: Vec<f64>,
    /// (i, j) row-major, prefix-conjunctive along j.
    inside: Vec<bool>,
}

impl TrajectoryBatch {
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_traj(&self) -> usize {
        self.n_traj
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|j| self.t_final * j as f64 / self.steps as f64)
            .collect()
    }

    #[inline]
    pub fn state(&self, traj: usize, step: usize) -> &[f64] {
        let base = (traj * (self.steps + 1) + step) * self.dim;
        &self.states[base..base + self.dim]
    }

    #[inline]
    pub fn inside(&self, traj: usize, step: usize) -> bool {
        self.inside[traj * (self.steps + 1) + step]
    }

    /// Fraction of trajectories that have left omega by step `j`.
    pub fn escape_fraction(&self, j: usize) -> Result<f64> {
        if j > self.steps {
            return Err(Error::InvalidArgument(format!(
                "step index {j} out of range 0..={}",
                self.steps
            )));
        }
        let escaped = (0..self.n_traj).filter(|&i| !self.inside(i, j)).count();
        Ok(escaped as f64 / self.n_traj as f64)
    }

    /// Serialize to the binary batch format (little-endian): header
    /// `FKTB, version u32, d u32, M u32, N u64, T f64`, then states as f64
    /// row-major (i, j, axis), then containment flags packed LSB-first.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"FKTB")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.steps as u32).to_le_bytes())?;
        w.write_all(&(self.n_traj as u64).to_le_bytes())?;
        w.write_all(&self.t_final.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.states.len() * 8);
        for v in &self.states {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        let mut packed = vec![0u8; self.inside.len().div_ceil(8)];
        for (b, &flag) in self.inside.iter().enumerate() {
            if flag {
                packed[b / 8] |= 1 << (b % 8);
            }
        }
        w.write_all(&packed)?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"FKTB" {
            return Err(Error::TrajectoryFormat("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != 1 {
            return Err(Error::TrajectoryFormat(format!("unsupported version {version}")));
        }
        let dim = read_u32(r)? as usize;
        let steps = read_u32(r)? as usize;
        let n_traj = read_u64(r)? as usize;
        let t_final = f64::from_le_bytes(read_array(r)?);
        if dim == 0 || n_traj == 0 || !(t_final > 0.0) {
            return Err(Error::TrajectoryFormat("degenerate header".into()));
        }
        let n_states = n_traj * (steps + 1) * dim;
        let mut raw = vec![0u8; n_states * 8];
        r.read_exact(&mut raw)?;
        let states: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let n_flags = n_traj * (steps + 1);
        let mut packed = vec![0u8; n_flags.div_ceil(8)];
        r.read_exact(&mut packed)?;
        let inside: Vec<bool> = (0..n_flags)
            .map(|b| packed[b / 8] >> (b % 8) & 1 == 1)
            .collect();
        let origin = states[..dim].to_vec();
        Ok(TrajectoryBatch {
            origin,
            t_final,
            dim,
            steps,
            n_traj,
            states,
            inside,
        })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        TrajectoryBatch::read_from(&mut f)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Simulate an ensemble with noise from `cfg.master_seed`. Equivalent to a
/// single-node FK solve stream (node index 0).
pub fn simulate_batch<F>(
    drift: F,
    sigma: f64,
    origin: &[f64],
    cfg: &EmConfig,
    omega: &Aabb,
) -> Result<TrajectoryBatch>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let stream = Stream::new(cfg.master_seed)
        .child(crate::rng::purpose::FK_SOLVE)
        .child(0);
    simulate_batch_with_stream(drift, sigma, origin, cfg, omega, stream)
}

/// Simulate an ensemble drawing noise from an explicit stream. Trajectory i
/// uses `stream.child(i)` with counter `step * dim + axis`, so the result is
/// independent of how trajectories are partitioned across workers.
///
/// A trajectory whose next state would be non-finite is frozen at its last
/// finite state and marked escaped from that step on.
pub fn simulate_batch_with_stream<F>(
    drift: F,
    sigma: f64,
    origin: &[f64],
    cfg: &EmConfig,
    omega: &Aabb,
    stream: Stream,
) -> Result<TrajectoryBatch>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    cfg.validate()?;
    let dim = origin.len();
    if dim == 0 || origin.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("origin must be finite and nonempty".into()));
    }
    if omega.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: omega.dim(),
        });
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument("sigma must be nonnegative".into()));
    }

    let m = cfg.steps;
    let n = cfg.n_traj;
    let h = cfg.dt();
    let noise_scale = sigma * h.sqrt();

    let mut states = vec![0.0f64; n * (m + 1) * dim];
    let mut inside = vec![false; n * (m + 1)];

    states
        .par_chunks_mut((m + 1) * dim)
        .zip(inside.par_chunks_mut(m + 1))
        .enumerate()
        .for_each(|(i, (traj_states, traj_inside))| {
            let s = stream.child(i as u64);
            let mut x = origin.to_vec();
            let mut mu = vec![0.0; dim];
            traj_states[..dim].copy_from_slice(origin);
            let mut contained = omega.contains(origin);
            traj_inside[0] = contained;
            let mut frozen = false;
            for j in 1..=m {
                if !frozen {
                    drift(&x, &mut mu);
                    let mut ok = true;
                    for a in 0..dim {
                        let counter = ((j - 1) * dim + a) as u64;
                        let next = x[a] + mu[a] * h + noise_scale * s.normal(counter);
                        if !next.is_finite() {
                            ok = false;
                            break;
                        }
                        mu[a] = next; // stage the update so a failure leaves x intact
                    }
                    if ok {
                        x.copy_from_slice(&mu[..dim]);
                        contained = contained && omega.contains(&x);
                    } else {
                        frozen = true;
                        contained = false;
                    }
                } else {
                    contained = false;
                }
                traj_states[j * dim..(j + 1) * dim].copy_from_slice(&x);
                traj_inside[j] = contained;
            }
        });

    Ok(TrajectoryBatch {
        origin: origin.to_vec(),
        t_final: cfg.t_final,
        dim,
        steps: m,
        n_traj: n,
        states,
        inside,
    })
}
