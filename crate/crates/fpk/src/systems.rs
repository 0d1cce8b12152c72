//! Drift systems and their initial densities.
//!
//! A [`SystemSpec`] bundles a named drift field, a scalar diffusion
//! coefficient `sigma` (so the diffusion matrix is `sigma^2/2 * I`) and a
//! Gaussian-mixture initial density. Gradient systems additionally expose
//! their potential `V` with `drift = -grad V`, which makes the stationary
//! density available in closed form.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rng::Stream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One diagonal Gaussian component of an initial density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// A mixture of diagonal Gaussians. Strictly positive everywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    components: Vec<GaussianComponent>,
    /// ln(weight) + ln of the normalization constant, per component.
    log_coef: Vec<f64>,
    dim: usize,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs a component".into()));
        }
        let dim = components[0].mean.len();
        let mut total = 0.0;
        for c in &components {
            if c.mean.len() != dim || c.variance.len() != dim {
                return Err(Error::InvalidArgument(
                    "mixture components must share one dimension".into(),
                ));
            }
            if !(c.weight > 0.0) {
                return Err(Error::InvalidArgument("component weights must be positive".into()));
            }
            if c.variance.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidArgument("component variances must be positive".into()));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "component weights must sum to 1, got {total}"
            )));
        }
        let log_coef = components
            .iter()
            .map(|c| {
                let log_norm: f64 = c.variance.iter().map(|&v| -0.5 * (LN_2PI + v.ln())).sum();
                c.weight.ln() + log_norm
            })
            .collect();
        Ok(GaussianMixture {
            components,
            log_coef,
            dim,
        })
    }

    /// Single Gaussian N(mean, diag(variance)).
    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        GaussianMixture::new(vec![GaussianComponent {
            weight: 1.0,
            mean,
            variance,
        }])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.log_density_unchecked(x).exp())
    }

    /// Log density, stable via log-sum-exp. `x` must have the right length.
    pub fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut max = f64::NEG_INFINITY;
        let mut terms = [0.0f64; 64];
        let n = self.components.len();
        debug_assert!(n <= 64, "mixtures limited to 64 components");
        for (k, c) in self.components.iter().enumerate() {
            let mut quad = 0.0;
            for a in 0..self.dim {
                let d = x[a] - c.mean[a];
                quad += d * d / c.variance[a];
            }
            let t = self.log_coef[k] - 0.5 * quad;
            terms[k] = t;
            if t > max {
                max = t;
            }
        }
        if !max.is_finite() {
            return f64::NEG_INFINITY;
        }
        let mut sum = 0.0;
        for t in &terms[..n] {
            sum += (t - max).exp();
        }
        max + sum.ln()
    }

    /// Draw one sample: component by weight, then a Gaussian per axis.
    /// Counters used: 0 for the component pick, 1..=dim for the coordinates.
    pub fn sample_into(&self, stream: Stream, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let u = stream.uniform(0);
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (k, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u <= acc {
                pick = k;
                break;
            }
        }
        let c = &self.components[pick];
        for a in 0..self.dim {
            out[a] = c.mean[a] + c.variance[a].sqrt() * stream.normal(1 + a as u64);
        }
    }

    /// Tensor product of two mixtures on disjoint coordinate blocks.
    pub fn product(&self, other: &GaussianMixture) -> Result<Self> {
        let mut components = Vec::with_capacity(self.components.len() * other.components.len());
        for a in &self.components {
            for b in &other.components {
                let mut mean = a.mean.clone();
                mean.extend_from_slice(&b.mean);
                let mut variance = a.variance.clone();
                variance.extend_from_slice(&b.variance);
                components.push(GaussianComponent {
                    weight: a.weight * b.weight,
                    mean,
                    variance,
                });
            }
        }
        GaussianMixture::new(components)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// The drift families this crate knows how to evaluate.
#[derive(Clone, Debug, PartialEq)]
pub enum Dynamics {
    /// Chained planar ring wells: `V = sum_i (x_{2i}^2 + x_{2i+1}^2 - 1)^2`.
    /// `pairs = 1` is the 2D ring system.
    RingPairs { pairs: usize },
    /// Lorenz-63 convection model.
    Lorenz63 { alpha: f64, beta: f64, rho: f64 },
    /// Thomas' cyclically symmetric attractor:
    /// `(sin y - b x, sin z - b y, sin x - b z)`.
    Thomas { b: f64 },
    /// Linear mean reversion `drift = -theta x` (gradient, closed forms known).
    Ou { theta: f64 },
}

/// A named SDE: drift, scalar diffusion and initial density.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub name: String,
    pub dim: usize,
    pub sigma: f64,
    pub dynamics: Dynamics,
    pub p0: GaussianMixture,
}

impl SystemSpec {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        sigma: f64,
        dynamics: Dynamics,
        p0: GaussianMixture,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dim must be at least 1".into()));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument("sigma must be nonnegative".into()));
        }
        if p0.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p0.dim(),
            });
        }
        let expected = match &dynamics {
            Dynamics::RingPairs { pairs } => {
                if *pairs == 0 {
                    return Err(Error::InvalidArgument("ring chain needs pairs >= 1".into()));
                }
                2 * pairs
            }
            Dynamics::Lorenz63 { .. } | Dynamics::Thomas { .. } => 3,
            Dynamics::Ou { .. } => dim,
        };
        if expected != dim {
            return Err(Error::DimensionMismatch { expected, got: dim });
        }
        Ok(SystemSpec {
            name: name.into(),
            dim,
            sigma,
            dynamics,
            p0,
        })
    }

    /// Planar double-well ring, diffusion coefficient 1 (`sigma = sqrt 2`),
    /// bimodal initial density centered at (-1/2,-1/2) and (1/2,1/2).
    pub fn ring2d() -> Self {
        SystemSpec::ring_chain(1).expect("static system")
    }

    /// `n` decoupled copies of the 2D ring system in 2n dimensions.
    pub fn ring_chain(pairs: usize) -> Result<Self> {
        let pair_p0 = GaussianMixture::new(vec![
            GaussianComponent {
                weight: 0.5,
                mean: vec![-0.5, -0.5],
                variance: vec![0.25, 0.25],
            },
            GaussianComponent {
                weight: 0.5,
                mean: vec![0.5, 0.5],
                variance: vec![0.25, 0.25],
            },
        ])?;
        let mut p0 = pair_p0.clone();
        for _ in 1..pairs {
            p0 = p0.product(&pair_p0)?;
        }
        let name = if pairs == 1 {
            "ring2d".to_string()
        } else {
            format!("ring2nd(n={pairs})")
        };
        SystemSpec::new(name, 2 * pairs, std::f64::consts::SQRT_2, Dynamics::RingPairs { pairs }, p0)
    }

    /// Noisy Lorenz-63 with the standard parameters and diffusion
    /// coefficient 50 (`sigma = 10`).
    pub fn lorenz63() -> Self {
        let p0 = GaussianMixture::new(vec![
            GaussianComponent {
                weight: 0.5,
                mean: vec![-2.0, -2.0, -2.0],
                variance: vec![1.0, 1.0, 1.0],
            },
            GaussianComponent {
                weight: 0.5,
                mean: vec![2.0, 2.0, 2.0],
                variance: vec![1.0, 1.0, 1.0],
            },
        ])
        .expect("static mixture");
        SystemSpec::new(
            "lorenz63",
            3,
            10.0,
            Dynamics::Lorenz63 {
                alpha: 10.0,
                beta: 8.0 / 3.0,
                rho: 28.0,
            },
            p0,
        )
        .expect("static system")
    }

    /// Noisy Thomas attractor, diffusion coefficient 1 (`sigma = sqrt 2`).
    pub fn thomas() -> Self {
        let p0 = GaussianMixture::new(vec![
            GaussianComponent {
                weight: 0.5,
                mean: vec![-2.0, -2.0, -2.0],
                variance: vec![1.0, 1.0, 1.0],
            },
            GaussianComponent {
                weight: 0.5,
                mean: vec![2.0, 2.0, 2.0],
                variance: vec![1.0, 1.0, 1.0],
            },
        ])
        .expect("static mixture");
        SystemSpec::new("thomas", 3, std::f64::consts::SQRT_2, Dynamics::Thomas { b: 0.2 }, p0)
            .expect("static system")
    }

    /// 1D mean-reverting oracle system with closed-form solution,
    /// `p0 = N(1, 0.25)` and `sigma = sqrt 2`.
    pub fn ou(theta: f64) -> Result<Self> {
        SystemSpec::ou_nd(theta, 1)
    }

    pub fn ou_nd(theta: f64, dim: usize) -> Result<Self> {
        if !(theta >= 0.0) {
            return Err(Error::InvalidArgument("theta must be nonnegative".into()));
        }
        let p0 = GaussianMixture::single(vec![1.0; dim], vec![0.25; dim])?;
        SystemSpec::new(
            format!("ou(theta={theta})"),
            dim,
            std::f64::consts::SQRT_2,
            Dynamics::Ou { theta },
            p0,
        )
    }

    /// Look a system up by registry name with an optional parameter map.
    ///
    /// Names: `ring2d`, `ring2nd` (param `n`), `lorenz63`, `thomas`, `ou`
    /// (param `theta`, default 1). All accept an optional `sigma` override.
    pub fn by_name(name: &str, params: &serde_json::Map<String, Value>) -> Result<Self> {
        let get_f64 = |key: &str| -> Result<Option<f64>> {
            match params.get(key) {
                None => Ok(None),
                Some(v) => v
                    .as_f64()
                    .map(Some)
                    .ok_or_else(|| Error::Validation(format!("system param `{key}` must be a number"))),
            }
        };
        let get_usize = |key: &str| -> Result<Option<usize>> {
            match params.get(key) {
                None => Ok(None),
                Some(v) => v
                    .as_u64()
                    .map(|u| Some(u as usize))
                    .ok_or_else(|| Error::Validation(format!("system param `{key}` must be a positive integer"))),
            }
        };
        let known: &[&str] = match name {
            "ring2d" => &["sigma"],
            "ring2nd" => &["n", "sigma"],
            "lorenz63" => &["sigma"],
            "thomas" => &["sigma"],
            "ou" => &["theta", "dim", "sigma"],
            other => {
                return Err(Error::Validation(format!(
                    "unknown system `{other}` (known: ring2d, ring2nd, lorenz63, thomas, ou)"
                )))
            }
        };
        for key in params.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::Validation(format!(
                    "unknown param `{key}` for system `{name}`"
                )));
            }
        }
        let mut sys = match name {
            "ring2d" => SystemSpec::ring2d(),
            "ring2nd" => {
                let n = get_usize("n")?.ok_or_else(|| {
                    Error::Validation("system ring2nd requires param `n`".into())
                })?;
                SystemSpec::ring_chain(n)?
            }
            "lorenz63" => SystemSpec::lorenz63(),
            "thomas" => SystemSpec::thomas(),
            "ou" => {
                let theta = get_f64("theta")?.unwrap_or(1.0);
                let dim = get_usize("dim")?.unwrap_or(1);
                SystemSpec::ou_nd(theta, dim)?
            }
            _ => unreachable!(),
        };
        if let Some(sigma) = get_f64("sigma")? {
            if !(sigma >= 0.0) {
                return Err(Error::Validation("sigma must be nonnegative".into()));
            }
            sys.sigma = sigma;
        }
        Ok(sys)
    }

    /// Evaluate the drift at `x`.
    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, &mut out);
        Ok(out)
    }

    /// Allocation-free drift evaluation for hot loops.
    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        match &self.dynamics {
            Dynamics::RingPairs { pairs } => {
                for i in 0..*pairs {
                    let (a, b) = (x[2 * i], x[2 * i + 1]);
                    let s = a * a + b * b - 1.0;
                    out[2 * i] = -4.0 * a * s;
                    out[2 * i + 1] = -4.0 * b * s;
                }
            }
            Dynamics::Lorenz63 { alpha, beta, rho } => {
                out[0] = alpha * (x[1] - x[0]);
                out[1] = x[0] * (rho - x[2]) - x[1];
                out[2] = x[0] * x[1] - beta * x[2];
            }
            Dynamics::Thomas { b } => {
                out[0] = x[1].sin() - b * x[0];
                out[1] = x[2].sin() - b * x[1];
                out[2] = x[0].sin() - b * x[2];
            }
            Dynamics::Ou { theta } => {
                for a in 0..self.dim {
                    out[a] = -theta * x[a];
                }
            }
        }
    }

    /// Potential `V` with `drift = -grad V`, when the system is a gradient one.
    pub fn potential(&self, x: &[f64]) -> Option<f64> {
        match &self.dynamics {
            Dynamics::RingPairs { pairs } => {
                let mut v = 0.0;
                for i in 0..*pairs {
                    let s = x[2 * i] * x[2 * i] + x[2 * i + 1] * x[2 * i + 1] - 1.0;
                    v += s * s;
                }
                Some(v)
            }
            Dynamics::Ou { theta } => {
                Some(0.5 * theta * x.iter().map(|v| v * v).sum::<f64>())
            }
            _ => None,
        }
    }

    /// Analytic gradient of the potential, when present.
    pub fn potential_gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        match &self.dynamics {
            Dynamics::RingPairs { pairs } => {
                for i in 0..*pairs {
                    let (a, b) = (x[2 * i], x[2 * i + 1]);
                    let s = a * a + b * b - 1.0;
                    out[2 * i] = 4.0 * a * s;
                    out[2 * i + 1] = 4.0 * b * s;
                }
                true
            }
            Dynamics::Ou { theta } => {
                for a in 0..self.dim {
                    out[a] = theta * x[a];
                }
                true
            }
            _ => false,
        }
    }

    pub fn is_gradient(&self) -> bool {
        matches!(self.dynamics, Dynamics::RingPairs { .. } | Dynamics::Ou { .. })
    }

    /// Initial density at `x`.
    pub fn p0_density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.p0.log_density_unchecked(x).exp())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Result of a drift growth-bound check `mu(x).x <= C (1 + |x|^2)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GrowthReport {
    pub max_violation: f64,
    pub pass: bool,
}

/// Check the linear-growth bound that guarantees a unique FPE solution:
/// passes iff `mu(x).x - C(1 + |x|^2) <= 0` at every sampled point.
pub fn growth_constant_check(sys: &SystemSpec, c: f64, sample: &[Vec<f64>]) -> Result<GrowthReport> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("growth check needs a nonempty sample".into()));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument("growth constant C must be positive".into()));
    }
    let mut mu = vec![0.0; sys.dim];
    let mut max_violation = f64::NEG_INFINITY;
    for x in sample {
        if x.len() != sys.dim {
            return Err(Error::DimensionMismatch {
                expected: sys.dim,
                got: x.len(),
            });
        }
        sys.drift_into(x, &mut mu);
        let dot: f64 = mu.iter().zip(x).map(|(m, v)| m * v).sum();
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let lhs = dot - c * (1.0 + norm2);
        if lhs > max_violation {
            max_violation = lhs;
        }
    }
    Ok(GrowthReport {
        max_violation,
        pass: max_violation <= 0.0,
    })
}

/// Moments of the linear-drift transition kernel: starting from a point `x0`,
/// the state at time `t` is Gaussian with mean `x0 * decay` and variance
/// `stationary_var * (1 - decay^2)` per axis.
pub fn ou_transition(theta: f64, sigma: f64, t: f64) -> (f64, f64) {
    let decay = (-theta * t).exp();
    let var = if theta > 0.0 {
        sigma * sigma / (2.0 * theta) * (1.0 - decay * decay)
    } else {
        sigma * sigma * t
    };
    (decay, var)
}

/// Closed-form solution density for a linear-drift system started from a
/// diagonal Gaussian mixture: each component evolves to
/// `N(mean * decay, variance * decay^2 + transition_var)`.
pub fn ou_exact_density(theta: f64, sigma: f64, p0: &GaussianMixture, t: f64, x: &[f64]) -> Result<f64> {
    let (decay, tvar) = ou_transition(theta, sigma, t);
    let components = p0
        .components()
        .iter()
        .map(|c| GaussianComponent {
            weight: c.weight,
            mean: c.mean.iter().map(|m| m * decay).collect(),
            variance: c.variance.iter().map(|v| v * decay * decay + tvar).collect(),
        })
        .collect();
    GaussianMixture::new(components)?.density(x)
}

/// Normalized stationary density of the linear-drift system,
/// `N(0, sigma^2/(2 theta))` per axis.
pub fn ou_stationary_variance(theta: f64, sigma: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::InvalidArgument(
            "stationary density requires theta > 0".into(),
        ));
    }
    Ok(sigma * sigma / (2.0 * theta))
}
