//! Declarative run configuration: JSON, strict about unknown keys so typos
//! in scientific configs fail loudly instead of silently changing runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fk::EscapePolicy;
use crate::stationary::{Extrapolation, StationaryDensity};
use crate::systems::{GaussianComponent, GaussianMixture, SystemSpec};
use crate::trajectories::Aabb;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxConfig {
    pub fn to_aabb(&self) -> Result<Aabb> {
        Aabb::new(self.lo.clone(), self.hi.clone())
            .map_err(|e| Error::Validation(format!("bad box: {e}")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "variant")]
pub enum PinfConfig {
    /// Closed form `exp(-2V/sigma^2)` for gradient systems.
    GradientAnalytic,
    /// Diagonal Gaussian with explicit moments.
    Gaussian { mean: Vec<f64>, variance: Vec<f64> },
    /// Log-density grid file produced externally (see the README recipe).
    Grid {
        grid_file: PathBuf,
        #[serde(default)]
        strict_domain: bool,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub axes: Vec<usize>,
    pub sigma_o: f64,
    /// Explicit observed values; omit to synthesize from a seeded truth run.
    #[serde(default)]
    pub y: Option<Vec<f64>>,
    #[serde(default)]
    pub synthesize_seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalConfig {
    pub keep: [usize; 2],
    #[serde(default = "default_quad_order")]
    pub n_quad: usize,
    pub out: [usize; 2],
}

fn default_quad_order() -> usize {
    40
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthConfig {
    pub c: f64,
    pub n_samples: usize,
    /// Sample box; defaults to the run's domain when omitted.
    #[serde(default)]
    pub sample_box: Option<BoxConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// A declarative description of one solver run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub domain: BoxConfig,
    #[serde(default)]
    pub omega: Option<BoxConfig>,
    pub t_final: f64,
    pub steps: usize,
    pub n_traj: usize,
    pub seed: u64,
    #[serde(default)]
    pub policy: EscapePolicy,
    #[serde(default)]
    pub pinf: Option<PinfConfig>,
    /// Output node counts per axis over `domain` (grid-based subcommands).
    #[serde(default)]
    pub output_grid: Option<Vec<usize>>,
    /// Query point for point solves and trajectory dumps.
    #[serde(default)]
    pub point: Option<Vec<f64>>,
    #[serde(default)]
    pub observation: Option<ObservationConfig>,
    /// k values of the pathology demonstration.
    #[serde(default)]
    pub k_values: Option<Vec<f64>>,
    /// First positive sample time of the pathology demonstration.
    #[serde(default)]
    pub t2: Option<f64>,
    /// Nested knowledge domains for the escape study.
    #[serde(default)]
    pub omegas: Option<Vec<BoxConfig>>,
    #[serde(default)]
    pub marginal: Option<MarginalConfig>,
    #[serde(default)]
    pub growth: Option<GrowthConfig>,
    /// Compare against the closed-form solution (linear-drift system only).
    #[serde(default)]
    pub compare_closed_form: bool,
    /// Replacement initial density, used when re-scoring dumped trajectories.
    #[serde(default)]
    pub p0_override: Option<Vec<ComponentConfig>>,
    /// Trajectory batch file for dump/rescore.
    #[serde(default)]
    pub traj_file: Option<PathBuf>,
    /// Particles for the Monte-Carlo reference solver (defaults to n_traj).
    #[serde(default)]
    pub n_particles: Option<usize>,
    /// Origins for containment estimation (defaults to 100).
    #[serde(default)]
    pub n_origins: Option<usize>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("config parse: {e}")))?;
        Ok(cfg)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn system(&self) -> Result<SystemSpec> {
        let mut sys = SystemSpec::by_name(&self.system.name, &self.system.params)?;
        if let Some(components) = &self.p0_override {
            let comps: Vec<GaussianComponent> = components
                .iter()
                .map(|c| GaussianComponent {
                    weight: c.weight,
                    mean: c.mean.clone(),
                    variance: c.variance.clone(),
                })
                .collect();
            let mixture = GaussianMixture::new(comps)
                .map_err(|e| Error::Validation(format!("p0_override: {e}")))?;
            if mixture.dim() != sys.dim {
                return Err(Error::Validation(format!(
                    "p0_override has dim {} but system `{}` has dim {}",
                    mixture.dim(),
                    sys.name,
                    sys.dim
                )));
            }
            sys.p0 = mixture;
        }
        Ok(sys)
    }

    pub fn domain(&self) -> Result<Aabb> {
        self.domain.to_aabb()
    }

    /// The knowledge domain; unbounded when omitted.
    pub fn omega(&self, dim: usize) -> Result<Aabb> {
        match &self.omega {
            Some(b) => b.to_aabb(),
            None => Ok(Aabb::unbounded(dim)),
        }
    }

    pub fn pinf(&self, sys: &SystemSpec) -> Result<StationaryDensity> {
        let cfg = self.pinf.as_ref().ok_or_else(|| {
            Error::Validation("this subcommand requires a `pinf` section".into())
        })?;
        match cfg {
            PinfConfig::GradientAnalytic => StationaryDensity::gradient_analytic(sys),
            PinfConfig::Gaussian { mean, variance } => {
                StationaryDensity::gaussian(mean.clone(), variance.clone())
            }
            PinfConfig::Grid {
                grid_file,
                strict_domain,
            } => {
                let extrapolation = if *strict_domain {
                    Extrapolation::Strict
                } else {
                    Extrapolation::Clamp
                };
                StationaryDensity::from_grid_file(grid_file, extrapolation)
            }
        }
    }

    /// Structural checks shared by every subcommand.
    pub fn validate(&self) -> Result<()> {
        let sys = self.system()?;
        let domain = self
            .domain
            .to_aabb()
            .map_err(|e| Error::Validation(format!("domain: {e}")))?;
        if domain.dim() != sys.dim {
            return Err(Error::Validation(format!(
                "domain has dim {} but system `{}` has dim {}",
                domain.dim(),
                sys.name,
                sys.dim
            )));
        }
        if let Some(omega) = &self.omega {
            let omega = omega
                .to_aabb()
                .map_err(|e| Error::Validation(format!("omega: {e}")))?;
            if omega.dim() != sys.dim {
                return Err(Error::Validation(format!(
                    "omega has dim {} but system `{}` has dim {}",
                    omega.dim(),
                    sys.name,
                    sys.dim
                )));
            }
            if !omega.contains_box(&domain) {
                return Err(Error::Validation(
                    "domain D must be contained in omega".into(),
                ));
            }
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Validation("t_final must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::Validation("steps must be positive".into()));
        }
        if self.n_traj == 0 {
            return Err(Error::Validation("n_traj must be positive".into()));
        }
        if let Some(counts) = &self.output_grid {
            if counts.len() != sys.dim {
                return Err(Error::Validation(format!(
                    "output_grid needs {} axis counts, got {}",
                    sys.dim,
                    counts.len()
                )));
            }
            if counts.iter().any(|&c| c < 1) {
                return Err(Error::Validation("output_grid counts must be positive".into()));
            }
        }
        if let Some(p) = &self.point {
            if p.len() != sys.dim {
                return Err(Error::Validation(format!(
                    "point needs {} coordinates, got {}",
                    sys.dim,
                    p.len()
                )));
            }
            if !domain.contains(p) {
                return Err(Error::Validation("point must lie inside domain".into()));
            }
        }
        if let Some(obs) = &self.observation {
            if obs.y.is_none() && obs.synthesize_seed.is_none() {
                return Err(Error::Validation(
                    "observation needs either explicit `y` or `synthesize_seed`".into(),
                ));
            }
            if let Some(y) = &obs.y {
                if y.len() != obs.axes.len() {
                    return Err(Error::Validation(
                        "observation needs one value per observed axis".into(),
                    ));
                }
            }
        }
        if let Some(m) = &self.marginal {
            if m.keep[0] == m.keep[1] || m.keep.iter().any(|&a| a >= sys.dim) {
                return Err(Error::Validation(
                    "marginal.keep axes must be distinct and in range".into(),
                ));
            }
            if m.out.iter().any(|&c| c < 2) || m.n_quad == 0 {
                return Err(Error::Validation("marginal.out and n_quad must be positive".into()));
            }
        }
        Ok(())
    }
}
