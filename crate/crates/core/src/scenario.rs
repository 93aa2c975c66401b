//! Scenario definition, ground truth, closed-loop trials and Monte Carlo
//! batches.
//!
//! Randomness: every trial owns two ChaCha8 streams keyed by the master
//! seed, stream `2·trial` for truth motion and stream `2·trial + 1` for
//! measurement noise. Trials are therefore reproducible in isolation and in
//! any execution order.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{step, Algorithm, MotionModel, StepOutput, Thresholds, UpdateConfig};
use crate::gaussian::{GaussianDensity, StateVector};
use crate::metrics::{mean_std, ospa, OspaParams, Position};
use crate::rfs::{BirthComponent, Extraction, MultiBernoulli};
use crate::sensor::{simulate_measurement, ImageMeasurement, SensorConfig};

/// Bundled five-target crossing scenario.
pub const BUILTIN_SCENARIO_JSON: &str = include_str!("../scenarios/five_targets.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Mean of the state at `birth_time`.
    pub initial_mean: [f64; 4],
    pub birth_time: u32,
    /// Last step at which the target is present (inclusive).
    pub death_time: u32,
    pub intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioThresholds {
    pub r_extract: f64,
    pub r_prune: f64,
    /// Existence probability given to mirrored birth components.
    pub r_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(rename = "K")]
    pub steps: u32,
    pub sensor: SensorConfig,
    pub motion: MotionModel,
    pub targets: Vec<TargetSpec>,
    /// Filter-side birth schedule. When absent, one birth per target is
    /// placed at its initial mean and birth time with covariance `Q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub births: Option<Vec<BirthComponent>>,
    pub thresholds: ScenarioThresholds,
    #[serde(default)]
    pub update: UpdateConfig,
    #[serde(default)]
    pub ospa: OspaParams,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN_SCENARIO_JSON).expect("bundled scenario parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        self.motion.validate()?;
        self.update.validate()?;
        self.ospa.validate()?;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.steps == 0 {
            return bad("K must be at least 1".into());
        }
        for (n, t) in self.targets.iter().enumerate() {
            if !(1 <= t.birth_time && t.birth_time <= t.death_time && t.death_time <= self.steps) {
                return bad(format!("target {n}: need 1 <= birth_time <= death_time <= K"));
            }
            if !(t.intensity > 0.0) {
                return bad(format!("target {n}: intensity must be positive"));
            }
        }
        let th = &self.thresholds;
        for (name, v) in [("r_extract", th.r_extract), ("r_prune", th.r_prune), ("r_b", th.r_b)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if let Some(births) = &self.births {
            if let Some(b) = births.iter().find(|b| !(0.0..=1.0).contains(&b.r_b)) {
                return bad(format!("birth r_b = {} outside [0, 1]", b.r_b));
            }
        }
        Ok(())
    }

    pub fn birth_schedule(&self) -> Vec<BirthComponent> {
        match &self.births {
            Some(b) => b.clone(),
            None => self
                .targets
                .iter()
                .map(|t| BirthComponent {
                    time: t.birth_time,
                    r_b: self.thresholds.r_b,
                    density: GaussianDensity::new(StateVector::from(t.initial_mean), self.motion.process_noise),
                    intensity: t.intensity,
                })
                .collect(),
        }
    }

    pub fn filter_thresholds(&self) -> Thresholds {
        Thresholds {
            r_extract: self.thresholds.r_extract,
            r_prune: self.thresholds.r_prune,
        }
    }

    /// Number of targets present at each step `1..=K`.
    pub fn true_cardinality(&self) -> Vec<usize> {
        (1..=self.steps)
            .map(|k| {
                self.targets
                    .iter()
                    .filter(|t| t.birth_time <= k && k <= t.death_time)
                    .count()
            })
            .collect()
    }
}

/// Independent random streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Truth = 0,
    Measurement = 1,
}

/// Generator for `stream` of `trial`; trials are independent of each other
/// and of the order they run in.
pub fn trial_rng(seed: u64, trial: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * trial + stream as u64);
    rng
}

/// True target states per step; entry `k - 1` holds `(target index, state)`
/// for every target present at step `k`.
pub type Truth = Vec<Vec<(usize, StateVector)>>;

/// Initial state of each target drawn from `N(initial_mean, Q)` at its birth
/// time, then propagated with `x ← F·x + n`, `n ~ N(0, Q)` until death.
pub fn generate_truth<R: rand::Rng + ?Sized>(sc: &ScenarioConfig, rng: &mut R) -> Truth {
    let mut truth: Truth = vec![Vec::new(); sc.steps as usize];
    let noise = GaussianDensity::new(StateVector::zeros(), sc.motion.process_noise);
    for (idx, t) in sc.targets.iter().enumerate() {
        let init = GaussianDensity::new(StateVector::from(t.initial_mean), sc.motion.process_noise);
        let mut x = init.sample(rng);
        for k in t.birth_time..=t.death_time.min(sc.steps) {
            if k > t.birth_time {
                x = sc.motion.transition * x + noise.sample(rng);
            }
            truth[k as usize - 1].push((idx, x));
        }
    }
    truth
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: u64,
    /// Number of extracted targets per step.
    pub cardinality: Vec<usize>,
    pub ospa: Vec<f64>,
    pub extractions: Vec<Vec<Extraction>>,
    pub wall_time: Duration,
}

/// What a trial observer sees at each step.
pub struct TrialStep<'a> {
    pub k: u32,
    pub truth: &'a [(usize, StateVector)],
    pub measurement: &'a ImageMeasurement,
    pub output: &'a StepOutput,
}

pub fn run_trial(sc: &ScenarioConfig, algorithm: Algorithm, trial: u64) -> Result<TrialResult> {
    run_trial_observed(sc, algorithm, trial, |_| Ok(()))
}

/// Closed loop over `K` steps: truth, measurement, filter step, scoring.
/// `observe` is called after every step.
pub fn run_trial_observed(
    sc: &ScenarioConfig,
    algorithm: Algorithm,
    trial: u64,
    mut observe: impl FnMut(&TrialStep<'_>) -> Result<()>,
) -> Result<TrialResult> {
    let started = Instant::now();
    let truth = generate_truth(sc, &mut trial_rng(sc.seed, trial, Stream::Truth));
    let mut meas_rng = trial_rng(sc.seed, trial, Stream::Measurement);
    let births = sc.birth_schedule();
    let thresholds = sc.filter_thresholds();
    let intensity_of = |idx: usize| sc.targets[idx].intensity;

    let mut mb = MultiBernoulli::new();
    let mut cardinality = Vec::with_capacity(sc.steps as usize);
    let mut ospa_series = Vec::with_capacity(sc.steps as usize);
    let mut extractions = Vec::with_capacity(sc.steps as usize);
    for k in 1..=sc.steps {
        let present = &truth[k as usize - 1];
        let scene: Vec<(StateVector, f64)> = present.iter().map(|(i, x)| (*x, intensity_of(*i))).collect();
        let z = simulate_measurement(&scene, &sc.sensor, &mut meas_rng);
        let out = step(
            &mb, &z, &sc.motion, &births, k, &sc.sensor, &sc.update, thresholds, algorithm,
        )?;

        let truth_pos: Vec<Position> = present.iter().map(|(_, x)| [x[0], x[2]]).collect();
        let est_pos: Vec<Position> = out.extractions.iter().map(Extraction::position).collect();
        cardinality.push(out.extractions.len());
        ospa_series.push(ospa(&truth_pos, &est_pos, sc.ospa));

        observe(&TrialStep {
            k,
            truth: present,
            measurement: &z,
            output: &out,
        })?;
        extractions.push(out.extractions);
        mb = out.posterior;
    }
    Ok(TrialResult {
        trial,
        cardinality,
        ospa: ospa_series,
        extractions,
        wall_time: started.elapsed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchRow {
    pub k: u32,
    pub true_card: usize,
    pub mean_card: f64,
    pub std_card: f64,
    pub mean_ospa: f64,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub algorithm: Algorithm,
    pub rows: Vec<BatchRow>,
    /// In trial-index order.
    pub trials: Vec<TrialResult>,
}

/// Runs trials `0..n_trials` (in parallel on the current rayon pool) and
/// aggregates them in trial-index order. With one trial the standard
/// deviation is reported as zero.
pub fn run_batch(sc: &ScenarioConfig, algorithm: Algorithm, n_trials: u64) -> Result<BatchResult> {
    if n_trials == 0 {
        return Err(Error::InvalidConfig("n_trials must be at least 1".into()));
    }
    sc.validate()?;
    let trials = (0..n_trials)
        .into_par_iter()
        .map(|t| run_trial(sc, algorithm, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(sc, algorithm, trials))
}

/// Deterministic reduction of trial results. Trials are sorted by index
/// first, so any completion order gives the same aggregate.
pub fn aggregate(sc: &ScenarioConfig, algorithm: Algorithm, mut trials: Vec<TrialResult>) -> BatchResult {
    trials.sort_by_key(|t| t.trial);
    let truth = sc.true_cardinality();
    let rows = truth
        .iter()
        .enumerate()
        .map(|(i, &true_card)| {
            let card = mean_std(trials.iter().map(|t| t.cardinality[i] as f64));
            let ospa = mean_std(trials.iter().map(|t| t.ospa[i]));
            BatchRow {
                k: i as u32 + 1,
                true_card,
                mean_card: card.mean,
                std_card: card.std,
                mean_ospa: ospa.mean,
            }
        })
        .collect();
    BatchResult {
        algorithm,
        rows,
        trials,
    }
}

impl BatchResult {
    pub const CSV_HEADER: &'static str = "k,true_card,mean_card,std_card,mean_ospa";

    /// One row per step; values to 6 significant digits. `std_card` is the
    /// sample (n − 1) standard deviation.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.k,
                r.true_card,
                format_sig(r.mean_card, 6),
                format_sig(r.std_card, 6),
                format_sig(r.mean_ospa, 6)
            )?;
        }
        Ok(())
    }

    /// Mean of `f(row)` over steps `lo..=hi`.
    pub fn window_mean(&self, lo: u32, hi: u32, f: impl Fn(&BatchRow) -> f64) -> f64 {
        let vals: Vec<f64> = self.rows.iter().filter(|r| lo <= r.k && r.k <= hi).map(f).collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{exp}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
