//! Multi-Bernoulli multi-target state.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianDensity, StateMatrix, StateVector};

/// Stable identifier of a Bernoulli component. Bookkeeping only; never enters
/// the filter arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComponentId(pub u64);

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Bernoulli random finite set: empty with probability `1 - r`, otherwise a
/// single target distributed as `density`.
///
/// `intensity` is the nominal target intensity the sensor model assumes for
/// this component when computing its point-spread contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliComponent {
    pub id: ComponentId,
    pub r: f64,
    pub density: GaussianDensity,
    pub intensity: f64,
}

/// Disjoint union of independent Bernoulli components.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiBernoulli {
    pub components: Vec<BernoulliComponent>,
    next_id: u64,
}

/// A new-target hypothesis injected by the prediction at step `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthComponent {
    pub time: u32,
    pub r_b: f64,
    pub density: GaussianDensity,
    pub intensity: f64,
}

/// An extracted target estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub id: ComponentId,
    pub state: StateVector,
}

impl Extraction {
    pub fn position(&self) -> [f64; 2] {
        [self.state[0], self.state[2]]
    }
}

impl MultiBernoulli {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a multi-Bernoulli from explicit components. Ids must be unique.
    pub fn from_components(components: Vec<BernoulliComponent>) -> Result<Self> {
        let mut ids: Vec<u64> = components.iter().map(|c| c.id.0).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("duplicate component id".into()));
        }
        if let Some(c) = components.iter().find(|c| !(0.0..=1.0).contains(&c.r)) {
            return Err(Error::InvalidConfig(format!(
                "existence probability {} of component {} outside [0, 1]",
                c.r, c.id
            )));
        }
        let next_id = ids.last().map_or(0, |m| m + 1);
        Ok(Self { components, next_id })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Expected number of targets, `Σ r`.
    pub fn expected_cardinality(&self) -> f64 {
        self.components.iter().map(|c| c.r).sum()
    }

    /// Appends a new component with a fresh id and returns that id.
    pub fn push_new(&mut self, r: f64, density: GaussianDensity, intensity: f64) -> ComponentId {
        let id = ComponentId(self.next_id);
        self.next_id += 1;
        self.components.push(BernoulliComponent {
            id,
            r,
            density,
            intensity,
        });
        id
    }

    /// Same id counter, different components. Used by the filter stages to
    /// keep id allocation monotone across steps.
    pub(crate) fn with_components(&self, components: Vec<BernoulliComponent>) -> Self {
        Self {
            components,
            next_id: self.next_id,
        }
    }

    /// One line per component: `id,r,x,vx,y,vy,P00,P01,...,P33,intensity`.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for c in &self.components {
            write_record(&mut out, c);
            out.push('\n');
        }
        out
    }

    pub fn from_records(text: &str) -> Result<Self> {
        let mut comps = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            comps.push(parse_record(line, lineno + 1)?);
        }
        Self::from_components(comps)
    }
}

/// Keeps components with `r >= r_prune`, preserving order.
pub fn prune(mb: &MultiBernoulli, r_prune: f64) -> MultiBernoulli {
    mb.with_components(mb.components.iter().filter(|c| c.r >= r_prune).cloned().collect())
}

/// Means of components with `r > r_extract` (strict).
pub fn extract(mb: &MultiBernoulli, r_extract: f64) -> Vec<Extraction> {
    mb.components
        .iter()
        .filter(|c| c.r > r_extract)
        .map(|c| Extraction {
            id: c.id,
            state: c.density.mean,
        })
        .collect()
}

pub(crate) fn write_record(out: &mut String, c: &BernoulliComponent) {
    let _ = write!(out, "{},{}", c.id, c.r);
    for v in c.density.mean.iter() {
        let _ = write!(out, ",{v}");
    }
    // Row-major.
    for i in 0..4 {
        for j in 0..4 {
            let _ = write!(out, ",{}", c.density.cov[(i, j)]);
        }
    }
    let _ = write!(out, ",{}", c.intensity);
}

fn parse_record(line: &str, lineno: usize) -> Result<BernoulliComponent> {
    let err = |msg: String| Error::Parse { line: lineno, msg };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 23 {
        return Err(err(format!("expected 23 fields, found {}", fields.len())));
    }
    let id = fields[0].parse::<u64>().map_err(|e| err(format!("bad id: {e}")))?;
    let nums = fields[1..]
        .iter()
        .map(|f| f.parse::<f64>().map_err(|e| err(format!("bad number {f:?}: {e}"))))
        .collect::<Result<Vec<f64>>>()?;
    let mean = StateVector::from_column_slice(&nums[1..5]);
    let cov = StateMatrix::from_row_slice(&nums[5..21]);
    Ok(BernoulliComponent {
        id: ComponentId(id),
        r: nums[0],
        density: GaussianDensity::new(mean, cov),
        intensity: nums[21],
    })
}
