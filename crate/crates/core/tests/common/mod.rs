//! Independent oracles for the integration and acceptance tests.
//!
//! Nothing here calls into the update, sigma-point or clustering code paths
//! it is used to check.
#![allow(dead_code)]

use nalgebra::{Cholesky, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tcmb_core::{
    BernoulliComponent, CellSet, ComponentId, GaussianDensity, ImageMeasurement, MultiBernoulli, SensorConfig,
};

pub fn reference_sensor() -> SensorConfig {
    SensorConfig {
        width: 128,
        height: 128,
        dx: 1.0,
        dy: 1.0,
        sigma_h2: 2.0,
        noise_var: 1.0,
        h_threshold: 1.0,
    }
}

pub fn component(id: u64, r: f64, mean: [f64; 4], cov: Matrix4<f64>, intensity: f64) -> BernoulliComponent {
    BernoulliComponent {
        id: ComponentId(id),
        r,
        density: GaussianDensity::new(Vector4::from(mean), cov),
        intensity,
    }
}

pub fn multi(comps: Vec<BernoulliComponent>) -> MultiBernoulli {
    MultiBernoulli::from_components(comps).unwrap()
}

fn blob(x: f64, y: f64, intensity: f64, i: u32, j: u32, cfg: &SensorConfig) -> f64 {
    let dx = i as f64 * cfg.dx - x;
    let dy = j as f64 * cfg.dy - y;
    intensity * (-(dx * dx + dy * dy) / cfg.sigma_h2).exp()
}

/// Image of the given `(x, y, intensity)` targets plus optional `N(0, R)` noise.
pub fn render(targets: &[(f64, f64, f64)], cfg: &SensorConfig, noise_seed: Option<u64>) -> ImageMeasurement {
    let mut rng = noise_seed.map(ChaCha8Rng::seed_from_u64);
    let mut values = Vec::with_capacity(cfg.width * cfg.height);
    for j in 1..=cfg.height as u32 {
        for i in 1..=cfg.width as u32 {
            let mut v: f64 = targets.iter().map(|(x, y, s)| blob(*x, *y, *s, i, j, cfg)).sum();
            if let Some(rng) = rng.as_mut() {
                v += cfg.noise_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
            values.push(v);
        }
    }
    ImageMeasurement::from_values(cfg.width, cfg.height, values).unwrap()
}

/// Cells with PSF above threshold, by scanning the whole image.
pub fn scan_cells(x: f64, y: f64, intensity: f64, cfg: &SensorConfig) -> CellSet {
    let mut cells = Vec::new();
    for j in 1..=cfg.height as u32 {
        for i in 1..=cfg.width as u32 {
            if blob(x, y, intensity, i, j, cfg) > cfg.h_threshold {
                cells.push(tcmb_core::Cell::new(i, j));
            }
        }
    }
    CellSet::from_cells(cells)
}

#[derive(Debug, Clone, Copy)]
pub struct OraclePosterior {
    pub r: f64,
    pub mean: Vector4<f64>,
}

/// Monte Carlo evaluation of the per-member marginal posterior of a cluster:
/// joint prior samples replace the sigma points, every existence pattern is
/// enumerated per sample, and the marginal existence and mean of each member
/// are read off the accumulated masses.
pub fn monte_carlo_cluster_posterior(
    comps: &[BernoulliComponent],
    z: &ImageMeasurement,
    cfg: &SensorConfig,
    samples: usize,
    seed: u64,
) -> Vec<OraclePosterior> {
    let m = comps.len();
    let mut cells_vec = Vec::new();
    for c in comps {
        let (x, y) = c.density.position();
        cells_vec.extend(scan_cells(x, y, c.intensity, cfg).iter().copied());
    }
    let cells = CellSet::from_cells(cells_vec);
    let zc: Vec<f64> = cells.iter().map(|c| z.get(*c)).collect();

    let roots: Vec<Matrix4<f64>> = comps
        .iter()
        .map(|c| Cholesky::new(c.density.cov).expect("oracle needs PD prior").l())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patterns = 1usize << m;

    // ln(prior(b) · L(b; x)) for each (sample, pattern), plus the samples.
    let mut log_terms = vec![0.0; samples * patterns];
    let mut draws = vec![Vector4::zeros(); samples * m];
    for s in 0..samples {
        for (u, c) in comps.iter().enumerate() {
            let e = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            draws[s * m + u] = c.density.mean + roots[u] * e;
        }
        for b in 0..patterns {
            let mut lp = 0.0;
            for (u, c) in comps.iter().enumerate() {
                lp += if b >> u & 1 == 1 { c.r.ln() } else { (1.0 - c.r).ln() };
            }
            let mut ll = 0.0;
            for (cell, zv) in cells.iter().zip(&zc) {
                let mut sig = 0.0;
                for (u, c) in comps.iter().enumerate() {
                    if b >> u & 1 == 1 {
                        let x = &draws[s * m + u];
                        sig += blob(x[0], x[2], c.intensity, cell.i, cell.j, cfg);
                    }
                }
                // log N(z; sig, R) - log N(z; 0, R)
                ll += -((zv - sig).powi(2) - zv * zv) / (2.0 * cfg.noise_var);
            }
            log_terms[s * patterns + b] = lp + ll;
        }
    }
    let top = log_terms
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);

    (0..m)
        .map(|u| {
            let (mut present, mut absent) = (0.0, 0.0);
            let mut moment = Vector4::zeros();
            for s in 0..samples {
                for b in 0..patterns {
                    let w = (log_terms[s * patterns + b] - top).exp();
                    if b >> u & 1 == 1 {
                        present += w;
                        moment += draws[s * m + u] * w;
                    } else {
                        absent += w;
                    }
                }
            }
            OraclePosterior {
                r: present / (present + absent),
                mean: if present > 0.0 {
                    moment / present
                } else {
                    comps[u].density.mean
                },
            }
        })
        .collect()
}

/// Connected components of the pairwise-overlap graph, via repeated
/// closure. Groups and members sorted.
pub fn brute_force_partition(sets: &[CellSet], ids: &[ComponentId]) -> Vec<Vec<ComponentId>> {
    let n = sets.len();
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for a in 0..n {
            for b in 0..n {
                if a != b && label[a] != label[b] && sets[a].iter().any(|c| sets[b].contains(c)) {
                    let (lo, hi) = (label[a].min(label[b]), label[a].max(label[b]));
                    for l in label.iter_mut() {
                        if *l == hi {
                            *l = lo;
                        }
                    }
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups: Vec<Vec<ComponentId>> = Vec::new();
    for l in 0..n {
        let mut g: Vec<ComponentId> = (0..n).filter(|&i| label[i] == l).map(|i| ids[i]).collect();
        if !g.is_empty() {
            g.sort();
            groups.push(g);
        }
    }
    groups.sort();
    groups
}

/// Diagonal covariance with the given position and velocity variances.
pub fn diag_cov(pos_var: f64, vel_var: f64) -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(pos_var, vel_var, pos_var, vel_var))
}

/// Randomized cluster configuration for oracle comparisons: one or two
/// members, the second 1.5–3 cells from the first, true positions drawn from
/// the priors, noisy measurement.
pub struct OracleCase {
    pub comps: Vec<BernoulliComponent>,
    pub z: ImageMeasurement,
}

pub fn random_oracle_case(seed: u64, members: usize, cfg: &SensorConfig) -> OracleCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cx = rng.random_range(30.0..90.0);
    let cy = rng.random_range(30.0..90.0);
    let mut comps = Vec::new();
    let mut truth = Vec::new();
    for u in 0..members {
        let (x, y) = if u == 0 {
            (cx, cy)
        } else {
            let d = rng.random_range(1.5..3.0);
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            (cx + d * a.cos(), cy + d * a.sin())
        };
        let pos_sd: f64 = rng.random_range(0.05..0.15);
        let intensity = rng.random_range(2.0..10.0);
        let r = rng.random_range(0.2..0.9);
        comps.push(component(
            u as u64,
            r,
            [x, rng.random_range(-2.0..2.0), y, rng.random_range(-2.0..2.0)],
            diag_cov(pos_sd * pos_sd, 0.01),
            intensity,
        ));
        if rng.random_bool(0.7) {
            let tx = x + pos_sd * rng.sample::<f64, _>(StandardNormal);
            let ty = y + pos_sd * rng.sample::<f64, _>(StandardNormal);
            truth.push((tx, ty, intensity));
        }
    }
    let z = render(&truth, cfg, Some(seed ^ 0x5eed));
    OracleCase { comps, z }
}
