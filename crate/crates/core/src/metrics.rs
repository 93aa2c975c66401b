//! OSPA distance and cardinality statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Position = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OspaParams {
    /// Cut-off, in cells.
    pub c: f64,
    /// Order, at least 1.
    pub p: f64,
}

impl Default for OspaParams {
    fn default() -> Self {
        Self { c: 10.0, p: 1.0 }
    }
}

impl OspaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.p >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "OSPA needs c > 0 and p >= 1, got c = {}, p = {}",
                self.c, self.p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentSolver {
    Hungarian,
    /// Enumerates every injection of the smaller set into the larger one.
    BruteForce,
}

/// OSPA distance between two finite position sets, solved with the
/// Hungarian method.
pub fn ospa(x: &[Position], y: &[Position], params: OspaParams) -> f64 {
    ospa_with(x, y, params, AssignmentSolver::Hungarian)
}

pub fn ospa_with(x: &[Position], y: &[Position], params: OspaParams, solver: AssignmentSolver) -> f64 {
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return 0.0;
    }
    let OspaParams { c, p } = params;
    let cost: Vec<Vec<f64>> = small
        .iter()
        .map(|a| large.iter().map(|b| cut_distance(a, b, c).powf(p)).collect())
        .collect();
    let assigned = match solver {
        AssignmentSolver::Hungarian => assignment_cost(&cost, &hungarian(&cost)),
        AssignmentSolver::BruteForce => brute_force_min(&cost),
    };
    let total = assigned + c.powf(p) * (n - m) as f64;
    (total / n as f64).powf(1.0 / p)
}

fn cut_distance(a: &Position, b: &Position, c: f64) -> f64 {
    let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    d.min(c)
}

/// Total of an assignment, summed in ascending order so that equal cost
/// multisets give bit-identical totals regardless of how they were found.
fn assignment_cost(cost: &[Vec<f64>], cols: &[usize]) -> f64 {
    let mut terms: Vec<f64> = cols.iter().enumerate().map(|(r, &c)| cost[r][c]).collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Minimum-cost assignment of every row to a distinct column for an
/// `m × n` matrix with `m ≤ n`. Returns the column of each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let m = cost.len();
    if m == 0 {
        return Vec::new();
    }
    let n = cost[0].len();
    assert!(m <= n, "hungarian expects rows <= columns");

    // Potentials and matching use 1-based indices with a virtual column 0.
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=m {
        row_of_col[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = row_of_col[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let cur = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[row_of_col[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            row_of_col[col0] = row_of_col[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0usize; m];
    for col in 1..=n {
        if row_of_col[col] != 0 {
            out[row_of_col[col] - 1] = col - 1;
        }
    }
    out
}

fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut [bool], cols: &mut Vec<usize>, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(assignment_cost(cost, cols));
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                cols.push(c);
                go(cost, row + 1, used, cols, best);
                cols.pop();
                used[c] = false;
            }
        }
    }
    if cost.is_empty() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost[0].len()], &mut Vec::new(), &mut best);
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardinalityStats {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); zero for one trial.
    pub std: f64,
}

/// Per-step mean and sample standard deviation of cardinality estimates
/// across trials. Every trial must have one entry per step of `truth`.
pub fn cardinality_stats(runs: &[Vec<f64>], truth: &[usize]) -> Result<Vec<CardinalityStats>> {
    let steps = truth.len();
    for run in runs {
        if run.len() != steps {
            return Err(Error::LengthMismatch {
                expected: steps,
                got: run.len(),
            });
        }
    }
    Ok((0..steps).map(|k| mean_std(runs.iter().map(|r| r[k]))).collect())
}

pub(crate) fn mean_std(values: impl Iterator<Item = f64> + Clone) -> CardinalityStats {
    let n = values.clone().count();
    if n == 0 {
        return CardinalityStats {
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    CardinalityStats { mean, std }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    const P: OspaParams = OspaParams { c: 10.0, p: 1.0 };

    #[test]
    fn ospa_examples() {
        let x = [[1.0, 2.0], [30.0, 4.0]];
        assert_eq!(ospa(&x, &x, P), 0.0);
        assert_eq!(ospa(&[], &[[0.0, 0.0]], P), 10.0);
        assert_eq!(ospa(&[[0.0, 0.0]], &[], P), 10.0);
        assert_eq!(ospa(&[], &[], P), 0.0);
        let y = [[0.0, 0.0], [50.0, 50.0]];
        assert_eq!(ospa(&[[0.0, 0.0]], &y, P), 5.0);
        assert_eq!(ospa_with(&[[0.0, 0.0]], &y, P, AssignmentSolver::BruteForce), 5.0);
    }

    #[test]
    fn ospa_order_two() {
        // One pair 3 apart, one unmatched: ((9 + 100) / 2)^(1/2).
        let d = ospa(
            &[[0.0, 0.0]],
            &[[3.0, 0.0], [40.0, 0.0]],
            OspaParams { c: 10.0, p: 2.0 },
        );
        assert!((d - (109.0f64 / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hungarian_prefers_global_optimum() {
        let cost = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![3.0, 6.0, 9.0]];
        let cols = hungarian(&cost);
        assert_eq!(assignment_cost(&cost, &cols), 10.0);
        assert_eq!(brute_force_min(&cost), 10.0);
    }

    #[test]
    fn cardinality_examples() {
        let s = cardinality_stats(&[vec![2.0, 1.0], vec![4.0, 1.0]], &[3, 1]).unwrap();
        assert_eq!(s[0].mean, 3.0);
        assert!((s[0].std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s[1].std, 0.0);
        let single = cardinality_stats(&[vec![5.0]], &[5]).unwrap();
        assert_eq!(single[0], CardinalityStats { mean: 5.0, std: 0.0 });
        assert!(matches!(
            cardinality_stats(&[vec![1.0, 2.0], vec![1.0]], &[1, 1]),
            Err(Error::LengthMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn bernoulli_counts_mean_is_sane() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let runs: Vec<Vec<f64>> = (0..1000)
            .map(|_| vec![if rng.random_bool(0.5) { 1.0 } else { 0.0 }])
            .collect();
        let s = cardinality_stats(&runs, &[0]).unwrap()[0];
        let sigma = (0.25f64 / 1000.0).sqrt();
        assert!((s.mean - 0.5).abs() < 3.0 * sigma);
    }

    fn points(max: usize) -> impl Strategy<Value = Vec<Position>> {
        prop::collection::vec((0.0f64..25.0, 0.0f64..25.0).prop_map(|(a, b)| [a, b]), 0..=max)
    }

    proptest! {
        #[test]
        fn hungarian_equals_brute_force(x in points(6), y in points(6)) {
            prop_assert_eq!(
                ospa_with(&x, &y, P, AssignmentSolver::Hungarian),
                ospa_with(&x, &y, P, AssignmentSolver::BruteForce)
            );
        }

        #[test]
        fn metric_axioms(x in points(4), y in points(4), z in points(4)) {
            let bf = |a: &[Position], b: &[Position]| ospa_with(a, b, P, AssignmentSolver::BruteForce);
            let dxy = bf(&x, &y);
            prop_assert_eq!(dxy, bf(&y, &x));
            prop_assert!((0.0..=10.0).contains(&dxy));
            prop_assert_eq!(bf(&x, &x), 0.0);
            prop_assert!(dxy <= bf(&x, &z) + bf(&z, &y) + 1e-12);
        }
    }
}
