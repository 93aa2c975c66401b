//! Multi-Bernoulli prediction, the clustered joint update and the
//! independent-target baseline, composed into a single filter step.

mod update;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::Cluster;
use crate::error::{Error, Result};
use crate::gaussian::{matrix_from_rows, matrix_to_rows, symmetrize, GaussianDensity, StateMatrix, DEFAULT_KAPPA};
use crate::rfs::{extract, prune, BirthComponent, Extraction, MultiBernoulli};
use crate::sensor::{ImageMeasurement, SensorConfig};

pub use update::{mbtbd_update, partitioned_update, tcmb_update};

/// Linear-Gaussian single-target motion with constant survival probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "MotionRepr", into = "MotionRepr")]
pub struct MotionModel {
    pub transition: StateMatrix,
    pub process_noise: StateMatrix,
    pub p_survival: f64,
    /// Sampling period; informational, `transition` already embeds it.
    pub period: f64,
}

#[derive(Serialize, Deserialize)]
struct MotionRepr {
    #[serde(rename = "F")]
    f: [[f64; 4]; 4],
    #[serde(rename = "Q")]
    q: [[f64; 4]; 4],
    p_s: f64,
    #[serde(rename = "T")]
    t: f64,
}

impl From<MotionRepr> for MotionModel {
    fn from(r: MotionRepr) -> Self {
        Self {
            transition: matrix_from_rows(&r.f),
            process_noise: matrix_from_rows(&r.q),
            p_survival: r.p_s,
            period: r.t,
        }
    }
}

impl From<MotionModel> for MotionRepr {
    fn from(m: MotionModel) -> Self {
        Self {
            f: matrix_to_rows(&m.transition),
            q: matrix_to_rows(&m.process_noise),
            p_s: m.p_survival,
            t: m.period,
        }
    }
}

impl MotionModel {
    /// Nearly-constant-velocity model on `[x, vx, y, vy]`:
    /// `F = I₂ ⊗ [[1, T], [0, 1]]`, `Q = q · I₂ ⊗ [[T⁴/4, T³/2], [T³/2, T²]]`.
    pub fn constant_velocity(period: f64, q: f64, p_survival: f64) -> Self {
        let eye = nalgebra::Matrix2::<f64>::identity();
        let f = nalgebra::Matrix2::new(1.0, period, 0.0, 1.0);
        let t2 = period * period;
        let g = nalgebra::Matrix2::new(t2 * t2 / 4.0, t2 * period / 2.0, t2 * period / 2.0, t2);
        Self {
            transition: eye.kronecker(&f),
            process_noise: eye.kronecker(&g) * q,
            p_survival,
            period,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_survival) {
            return Err(Error::InvalidConfig(format!(
                "survival probability {} outside [0, 1]",
                self.p_survival
            )));
        }
        let q = &self.process_noise;
        if (q - q.transpose()).amax() > 1e-12 * q.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidConfig("process noise is not symmetric".into()));
        }
        let eig = nalgebra::SymmetricEigen::new(symmetrize(q));
        if eig.eigenvalues.iter().any(|l| *l < -1e-12 * q.amax()) {
            return Err(Error::InvalidConfig(
                "process noise is not positive semidefinite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateConfig {
    /// Sigma-point spread parameter; must be positive.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Largest cluster updated jointly. Members beyond the cap, lowest
    /// existence first, are updated on their own.
    #[serde(default = "default_max_cluster")]
    pub max_cluster_size: usize,
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

fn default_max_cluster() -> usize {
    6
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            kappa: default_kappa(),
            max_cluster_size: default_max_cluster(),
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidConfig("kappa must be positive".into()));
        }
        if self.max_cluster_size == 0 {
            return Err(Error::InvalidConfig("max_cluster_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Clustered joint update.
    Tcmb,
    /// Every component updated alone over its own cells.
    Mbtbd,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Tcmb => "tcmb",
            Algorithm::Mbtbd => "mbtbd",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tcmb" | "tc-mb" => Ok(Algorithm::Tcmb),
            "mbtbd" | "mb-tbd" => Ok(Algorithm::Mbtbd),
            other => Err(Error::InvalidConfig(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Kalman prediction of every surviving component plus the births scheduled
/// for step `k`. Survivors keep their ids; births get fresh ones.
pub fn predict(mb: &MultiBernoulli, mm: &MotionModel, births: &[BirthComponent], k: u32) -> MultiBernoulli {
    let f = &mm.transition;
    let survivors = mb
        .components
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.r *= mm.p_survival;
            let mean = f * c.density.mean;
            let cov = symmetrize(&(f * c.density.cov * f.transpose() + mm.process_noise));
            c.density = GaussianDensity::new(mean, cov);
            c
        })
        .collect();
    let mut out = mb.with_components(survivors);
    for b in births.iter().filter(|b| b.time == k) {
        out.push_new(b.r_b, b.density.clone(), b.intensity);
    }
    out
}

/// Everything produced by one filter cycle.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Updated and pruned multi-Bernoulli.
    pub posterior: MultiBernoulli,
    pub extractions: Vec<Extraction>,
    /// Clusters of the predicted components, before any size cap.
    pub clusters: Vec<Cluster>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub r_extract: f64,
    pub r_prune: f64,
}

/// predict → update → prune → extract.
#[allow(clippy::too_many_arguments)]
pub fn step(
    mb: &MultiBernoulli,
    z: &ImageMeasurement,
    mm: &MotionModel,
    births: &[BirthComponent],
    k: u32,
    cfg: &SensorConfig,
    ucfg: &UpdateConfig,
    thresholds: Thresholds,
    algorithm: Algorithm,
) -> Result<StepOutput> {
    let predicted = predict(mb, mm, births, k);
    let (updated, clusters) = update::update_with_clusters(&predicted, z, cfg, ucfg, algorithm)?;
    let posterior = prune(&updated, thresholds.r_prune);
    let extractions = extract(&posterior, thresholds.r_extract);
    Ok(StepOutput {
        posterior,
        extractions,
        clusters,
    })
}
