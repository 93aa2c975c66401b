//! Four-dimensional Gaussian densities and the symmetric sigma-point rule.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-target state `[x, vx, y, vy]`: position in cells, velocity in cells per step.
pub type StateVector = Vector4<f64>;
pub type StateMatrix = Matrix4<f64>;

/// Dimension of the single-target state.
pub const STATE_DIM: usize = 4;

/// Number of points produced by [`sigma_points`].
pub const NUM_SIGMA_POINTS: usize = 2 * STATE_DIM + 1;

/// Default sigma-point spread parameter. Must stay positive so that the
/// central weight is non-negative.
pub const DEFAULT_KAPPA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "GaussianRepr", into = "GaussianRepr")]
pub struct GaussianDensity {
    pub mean: StateVector,
    pub cov: StateMatrix,
}

/// On-disk form: plain arrays, covariance row-major.
#[derive(Serialize, Deserialize)]
struct GaussianRepr {
    mean: [f64; 4],
    cov: [[f64; 4]; 4],
}

impl From<GaussianRepr> for GaussianDensity {
    fn from(r: GaussianRepr) -> Self {
        Self {
            mean: StateVector::from(r.mean),
            cov: matrix_from_rows(&r.cov),
        }
    }
}

impl From<GaussianDensity> for GaussianRepr {
    fn from(d: GaussianDensity) -> Self {
        Self {
            mean: d.mean.into(),
            cov: matrix_to_rows(&d.cov),
        }
    }
}

pub fn matrix_from_rows(rows: &[[f64; 4]; 4]) -> StateMatrix {
    StateMatrix::from_fn(|i, j| rows[i][j])
}

pub fn matrix_to_rows(m: &StateMatrix) -> [[f64; 4]; 4] {
    let mut rows = [[0.0; 4]; 4];
    for (i, row) in rows.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    rows
}

impl GaussianDensity {
    pub fn new(mean: StateVector, cov: StateMatrix) -> Self {
        Self { mean, cov }
    }

    /// Position part of the mean, `(x, y)`.
    pub fn position(&self) -> (f64, f64) {
        (self.mean[0], self.mean[2])
    }

    /// Draws one sample. Works for singular (PSD) covariances, including zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVector {
        let root = psd_sqrt(&self.cov);
        let e = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        self.mean + root * e
    }
}

/// Symmetric square root factor `A` with `A·Aᵀ = cov` for a PSD matrix;
/// negative eigenvalues from round-off are clamped to zero.
pub fn psd_sqrt(cov: &StateMatrix) -> StateMatrix {
    let sym = symmetrize(cov);
    let eig = SymmetricEigen::new(sym);
    let mut scaled = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        for i in 0..STATE_DIM {
            scaled[(i, j)] *= s;
        }
    }
    scaled
}

pub fn symmetrize(m: &StateMatrix) -> StateMatrix {
    (m + m.transpose()) * 0.5
}

/// Lower-triangular Cholesky factor of a symmetric matrix.
///
/// A failed decomposition is retried once with `1e-9 · trace / 4` added to the
/// diagonal, which covers covariances that collapsed after a sharp update.
pub fn cholesky(cov: &StateMatrix) -> Result<StateMatrix> {
    if let Some(l) = cholesky_lower(cov) {
        return Ok(l);
    }
    let jitter = 1e-9 * cov.trace() / STATE_DIM as f64;
    if jitter > 0.0 {
        let jittered = cov + StateMatrix::identity() * jitter;
        if let Some(l) = cholesky_lower(&jittered) {
            return Ok(l);
        }
    }
    Err(Error::NotPositiveDefinite)
}

fn cholesky_lower(a: &StateMatrix) -> Option<StateMatrix> {
    if !a.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut l = StateMatrix::zeros();
    for j in 0..STATE_DIM {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..STATE_DIM {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Weighted point set matching a Gaussian's first two moments.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPointSet {
    pub points: Vec<StateVector>,
    pub weights: Vec<f64>,
}

impl SigmaPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weighted_mean(&self) -> StateVector {
        self.points
            .iter()
            .zip(&self.weights)
            .fold(StateVector::zeros(), |acc, (p, w)| acc + p * *w)
    }

    pub fn weighted_cov(&self) -> StateMatrix {
        let mean = self.weighted_mean();
        self.points
            .iter()
            .zip(&self.weights)
            .fold(StateMatrix::zeros(), |acc, (p, w)| {
                let d = p - mean;
                acc + d * d.transpose() * *w
            })
    }
}

/// Symmetric unscented point set: the mean with weight `κ/(n+κ)` plus the
/// mean shifted by ± each column of `sqrt((n+κ)·P)`, each with weight
/// `1/(2(n+κ))`.
pub fn sigma_points(d: &GaussianDensity, kappa: f64) -> Result<SigmaPointSet> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sigma-point kappa must be positive, got {kappa}"
        )));
    }
    let n = STATE_DIM as f64;
    let l = cholesky(&d.cov)?;
    let scale = (n + kappa).sqrt();
    let side_w = 1.0 / (2.0 * (n + kappa));

    let mut points = Vec::with_capacity(NUM_SIGMA_POINTS);
    let mut weights = Vec::with_capacity(NUM_SIGMA_POINTS);
    points.push(d.mean);
    weights.push(kappa / (n + kappa));
    for j in 0..STATE_DIM {
        let col = l.column(j) * scale;
        points.push(d.mean + col);
        weights.push(side_w);
        points.push(d.mean - col);
        weights.push(side_w);
    }
    Ok(SigmaPointSet { points, weights })
}
