//! Superpositional image sensor: Gaussian point-spread contributions,
//! illuminated cell sets, measurement synthesis and per-cell likelihood ratios.
//!
//! Cells are addressed by 1-based `(i, j)` with `i` along x and `j` along y;
//! cell `(i, j)` has its center at `(i·dx, j·dy)`.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::StateVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub width: usize,
    pub height: usize,
    pub dx: f64,
    pub dy: f64,
    /// Blurring factor of the point-spread function.
    pub sigma_h2: f64,
    /// Per-cell noise variance.
    #[serde(rename = "R")]
    pub noise_var: f64,
    /// A cell is illuminated by a target when its PSF value exceeds this.
    pub h_threshold: f64,
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("sensor width and height must be at least 1");
        }
        if !(self.dx > 0.0 && self.dy > 0.0) {
            return bad("cell side lengths must be positive");
        }
        if !(self.sigma_h2 > 0.0) {
            return bad("sigma_h2 must be positive");
        }
        if !(self.noise_var > 0.0) {
            return bad("noise variance R must be positive");
        }
        if !(self.h_threshold > 0.0) {
            return bad("illumination threshold must be positive");
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.i >= 1 && cell.j >= 1 && cell.i as usize <= self.width && cell.j as usize <= self.height
    }

    fn index(&self, cell: Cell) -> usize {
        (cell.j as usize - 1) * self.width + (cell.i as usize - 1)
    }

    /// Radius around a target inside which the PSF exceeds the threshold.
    /// `None` when the peak itself does not exceed it.
    pub fn illumination_radius(&self, intensity: f64) -> Option<f64> {
        if intensity > self.h_threshold {
            Some((self.sigma_h2 * (intensity / self.h_threshold).ln()).sqrt())
        } else {
            None
        }
    }
}

/// A resolution cell, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub i: u32,
    pub j: u32,
}

impl Cell {
    pub const fn new(i: u32, j: u32) -> Self {
        Self { i, j }
    }
}

/// Sorted, duplicate-free set of in-bounds cells.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CellSet {
    cells: Vec<Cell>,
}

impl CellSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_cells(mut cells: Vec<Cell>) -> Self {
        cells.sort_unstable_by_key(|c| (c.j, c.i));
        cells.dedup();
        Self { cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cell> + '_ {
        self.cells.iter()
    }

    pub fn as_slice(&self) -> &[Cell] {
        &self.cells
    }

    pub fn contains(&self, cell: &Cell) -> bool {
        self.cells
            .binary_search_by_key(&(cell.j, cell.i), |c| (c.j, c.i))
            .is_ok()
    }

    pub fn intersects(&self, other: &CellSet) -> bool {
        let (mut a, mut b) = (0, 0);
        while a < self.cells.len() && b < other.cells.len() {
            let ka = (self.cells[a].j, self.cells[a].i);
            let kb = (other.cells[b].j, other.cells[b].i);
            match ka.cmp(&kb) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    pub fn union<'a>(sets: impl IntoIterator<Item = &'a CellSet>) -> CellSet {
        let cells = sets.into_iter().flat_map(|s| s.cells.iter().copied()).collect();
        Self::from_cells(cells)
    }
}

/// PSF contribution of a target at `state` with the given intensity to `cell`:
/// `I · exp(-((i·dx - x)² + (j·dy - y)²) / σ_h²)`.
#[inline]
pub fn psf(state: &StateVector, intensity: f64, cell: Cell, cfg: &SensorConfig) -> f64 {
    psf_at(state[0], state[2], intensity, cell, cfg)
}

#[inline]
pub(crate) fn psf_at(x: f64, y: f64, intensity: f64, cell: Cell, cfg: &SensorConfig) -> f64 {
    let ex = cell.i as f64 * cfg.dx - x;
    let ey = cell.j as f64 * cfg.dy - y;
    intensity * (-(ex * ex + ey * ey) / cfg.sigma_h2).exp()
}

/// In-bounds cells whose PSF value from a target at `mean` exceeds the
/// illumination threshold.
pub fn illuminated_cells(mean: &StateVector, intensity: f64, cfg: &SensorConfig) -> CellSet {
    let Some(rho) = cfg.illumination_radius(intensity) else {
        return CellSet::new();
    };
    let (x, y) = (mean[0], mean[2]);
    if !x.is_finite() || !y.is_finite() {
        return CellSet::new();
    }
    // Candidate box padded by one cell; the exact test is the PSF comparison.
    let lo_i = ((x - rho) / cfg.dx).floor() - 1.0;
    let hi_i = ((x + rho) / cfg.dx).ceil() + 1.0;
    let lo_j = ((y - rho) / cfg.dy).floor() - 1.0;
    let hi_j = ((y + rho) / cfg.dy).ceil() + 1.0;
    let lo_i = lo_i.max(1.0);
    let lo_j = lo_j.max(1.0);
    let hi_i = hi_i.min(cfg.width as f64);
    let hi_j = hi_j.min(cfg.height as f64);
    if lo_i > hi_i || lo_j > hi_j {
        return CellSet::new();
    }
    let mut cells = Vec::new();
    for j in lo_j as u32..=hi_j as u32 {
        for i in lo_i as u32..=hi_i as u32 {
            let c = Cell::new(i, j);
            if psf_at(x, y, intensity, c, cfg) > cfg.h_threshold {
                cells.push(c);
            }
        }
    }
    CellSet { cells }
}

/// `log[N(z; s, R) / N(z; 0, R)] = (z·s - s²/2) / R`.
#[inline]
pub fn cell_log_ratio(z: f64, s: f64, noise_var: f64) -> f64 {
    (z * s - 0.5 * s * s) / noise_var
}

/// One frame of cell intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMeasurement {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImageMeasurement {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    /// `values` is row-major in `j` (row) then `i` (column), i.e. index
    /// `(j-1)·width + (i-1)`.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                got: values.len(),
            });
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at 1-based cell `(i, j)`.
    pub fn get(&self, cell: Cell) -> f64 {
        self.values[(cell.j as usize - 1) * self.width + (cell.i as usize - 1)]
    }

    pub fn set(&mut self, cell: Cell, v: f64) {
        self.values[(cell.j as usize - 1) * self.width + (cell.i as usize - 1)] = v;
    }

    pub fn check_dims(&self, cfg: &SensorConfig) -> Result<()> {
        if self.width != cfg.width || self.height != cfg.height {
            return Err(Error::DimensionMismatch {
                want_w: cfg.width,
                want_h: cfg.height,
                got_w: self.width,
                got_h: self.height,
            });
        }
        Ok(())
    }

    /// Flat CSV with header `i,j,value`, `j` outer, `i` inner.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,value")?;
        for j in 1..=self.height {
            for i in 1..=self.width {
                let v = self.values[(j - 1) * self.width + (i - 1)];
                writeln!(w, "{i},{j},{v}")?;
            }
        }
        Ok(())
    }

    /// Portable graymap. Row `j = 1` is written first. Intensities are
    /// mapped linearly from `scaling` onto `0..=255` and clamped.
    pub fn write_pgm<W: Write>(&self, mut w: W, format: PgmFormat, scaling: PgmScaling) -> std::io::Result<()> {
        let (lo, hi) = match scaling {
            PgmScaling::Fixed { lo, hi } => (lo, hi),
            PgmScaling::Auto => {
                let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        };
        let span = if hi > lo { hi - lo } else { 1.0 };
        let level = |v: f64| -> u8 {
            let t = ((v - lo) / span * 255.0).round();
            if t.is_nan() {
                0
            } else {
                t.clamp(0.0, 255.0) as u8
            }
        };
        match format {
            PgmFormat::Ascii => {
                writeln!(w, "P2\n{} {}\n255", self.width, self.height)?;
                for row in self.values.chunks(self.width) {
                    let line: Vec<String> = row.iter().map(|v| level(*v).to_string()).collect();
                    writeln!(w, "{}", line.join(" "))?;
                }
            }
            PgmFormat::Binary => {
                write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
                let bytes: Vec<u8> = self.values.iter().map(|v| level(*v)).collect();
                w.write_all(&bytes)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// P2
    Ascii,
    /// P5
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PgmScaling {
    /// Frame minimum maps to 0, maximum to 255.
    Auto,
    Fixed {
        lo: f64,
        hi: f64,
    },
}

/// Synthesizes one frame: every cell receives the summed PSF of all targets
/// plus independent `N(0, R)` noise. No threshold gating is applied here.
pub fn simulate_measurement<R: Rng + ?Sized>(
    truth: &[(StateVector, f64)],
    cfg: &SensorConfig,
    rng: &mut R,
) -> ImageMeasurement {
    let mut img = ImageMeasurement::zeros(cfg.width, cfg.height);
    let sd = cfg.noise_var.sqrt();
    for j in 1..=cfg.height as u32 {
        for i in 1..=cfg.width as u32 {
            let c = Cell::new(i, j);
            let signal: f64 = truth.iter().map(|(x, inten)| psf(x, *inten, c, cfg)).sum();
            let noise: f64 = rng.sample(StandardNormal);
            img.values[cfg.index(c)] = signal + sd * noise;
        }
    }
    img
}

/// Noise-free frame: the summed PSF of all targets at every cell.
pub fn render_signal(truth: &[(StateVector, f64)], cfg: &SensorConfig) -> ImageMeasurement {
    let mut img = ImageMeasurement::zeros(cfg.width, cfg.height);
    for j in 1..=cfg.height as u32 {
        for i in 1..=cfg.width as u32 {
            let c = Cell::new(i, j);
            img.values[cfg.index(c)] = truth.iter().map(|(x, inten)| psf(x, *inten, c, cfg)).sum();
        }
    }
    img
}
