//! Measurement update by enumeration of existence hypotheses and sigma-point
//! tuples over each cluster.
//!
//! For a cluster of `M` members every hypothesis term is
//!
//! ```text
//! Π_{absent m} (1 - r_m) · Π_{present m} r_m w_{i_m} · L(present sigma points)
//! ```
//!
//! where `L` is the product over the cluster cells of the per-cell Gaussian
//! likelihood ratio of the summed PSF. Terms in which member `m` is present
//! are accumulated onto the weight of its chosen sigma point; the rest
//! accumulate into its "absent" mass. All accumulation is done on logs.

use rayon::prelude::*;

use super::{Algorithm, UpdateConfig};
use crate::clustering::{cluster_indices, illuminated_sets, Cluster, IndexCluster};
use crate::error::{Error, Result};
use crate::gaussian::{cholesky, sigma_points, symmetrize, GaussianDensity, SigmaPointSet, StateMatrix, StateVector};
use crate::rfs::{BernoulliComponent, ComponentId, MultiBernoulli};
use crate::sensor::{cell_log_ratio, psf, CellSet, ImageMeasurement, SensorConfig};

/// Running `ln Σ exp(xᵢ)` that rescales whenever a new maximum arrives.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    scaled: f64,
}

impl LogSum {
    const EMPTY: LogSum = LogSum {
        max: f64::NEG_INFINITY,
        scaled: 0.0,
    };

    #[inline]
    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.scaled += (x - self.max).exp();
        }
    }

    fn ln(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

struct Member<'a> {
    comp: &'a BernoulliComponent,
    sigma: SigmaPointSet,
    ln_present: Vec<f64>,
    ln_absent: f64,
    /// PSF of each sigma point at each cluster cell, `[point][cell]`.
    contrib: Vec<Vec<f64>>,
}

struct Enumeration<'a> {
    members: Vec<Member<'a>>,
    z: Vec<f64>,
    noise_var: f64,
    /// Chosen sigma index per member, `None` when absent.
    choice: Vec<Option<usize>>,
    /// Summed predicted signal per depth, `[depth][cell]`.
    partial: Vec<Vec<f64>>,
    absent_acc: Vec<LogSum>,
    present_acc: Vec<Vec<LogSum>>,
}

impl Enumeration<'_> {
    fn descend(&mut self, depth: usize, ln_prior: f64) {
        if depth == self.members.len() {
            self.leaf(ln_prior);
            return;
        }
        let ln_absent = self.members[depth].ln_absent;
        if ln_absent > f64::NEG_INFINITY {
            self.choice[depth] = None;
            let (head, tail) = self.partial.split_at_mut(depth + 1);
            tail[0].copy_from_slice(&head[depth]);
            self.descend(depth + 1, ln_prior + ln_absent);
        }
        for i in 0..self.members[depth].sigma.len() {
            let lp = self.members[depth].ln_present[i];
            if lp == f64::NEG_INFINITY {
                continue;
            }
            self.choice[depth] = Some(i);
            {
                let (head, tail) = self.partial.split_at_mut(depth + 1);
                let contrib = &self.members[depth].contrib[i];
                for ((out, base), add) in tail[0].iter_mut().zip(&head[depth]).zip(contrib) {
                    *out = base + add;
                }
            }
            self.descend(depth + 1, ln_prior + lp);
        }
    }

    fn leaf(&mut self, ln_prior: f64) {
        let signal = &self.partial[self.members.len()];
        let ln_lik: f64 = self
            .z
            .iter()
            .zip(signal)
            .map(|(z, s)| cell_log_ratio(*z, *s, self.noise_var))
            .sum();
        let term = ln_prior + ln_lik;
        for (m, choice) in self.choice.iter().enumerate() {
            match choice {
                None => self.absent_acc[m].add(term),
                Some(i) => self.present_acc[m][*i].add(term),
            }
        }
    }
}

/// Joint update of one cluster over `cells`. Returns posteriors in member
/// order.
fn update_cluster(
    comps: &[&BernoulliComponent],
    cells: &CellSet,
    z: &ImageMeasurement,
    cfg: &SensorConfig,
    kappa: f64,
) -> Result<Vec<BernoulliComponent>> {
    let z_cells: Vec<f64> = cells.iter().map(|c| z.get(*c)).collect();
    let members = comps
        .iter()
        .map(|comp| {
            let sigma = sigma_points(&comp.density, kappa)?;
            let ln_r = ln_or_neg_inf(comp.r);
            let ln_present = sigma.weights.iter().map(|w| ln_r + ln_or_neg_inf(*w)).collect();
            let contrib = sigma
                .points
                .iter()
                .map(|p| cells.iter().map(|c| psf(p, comp.intensity, *c, cfg)).collect())
                .collect();
            Ok(Member {
                comp,
                ln_present,
                ln_absent: ln_or_neg_inf(1.0 - comp.r),
                sigma,
                contrib,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let m = members.len();
    let n_cells = z_cells.len();
    let mut en = Enumeration {
        absent_acc: vec![LogSum::EMPTY; m],
        present_acc: members.iter().map(|mb| vec![LogSum::EMPTY; mb.sigma.len()]).collect(),
        members,
        z: z_cells,
        noise_var: cfg.noise_var,
        choice: vec![None; m],
        partial: vec![vec![0.0; n_cells]; m + 1],
    };
    en.descend(0, 0.0);

    Ok(en
        .members
        .iter()
        .enumerate()
        .map(|(idx, mem)| {
            let ln_w: Vec<f64> = en.present_acc[idx].iter().map(LogSum::ln).collect();
            let mut total = LogSum::EMPTY;
            ln_w.iter().for_each(|v| total.add(*v));
            posterior_component(mem.comp, &mem.sigma, &ln_w, total.ln(), en.absent_acc[idx].ln())
        })
        .collect())
}

/// Existence from the present/absent masses; state moments from the
/// normalized sigma-point masses.
fn posterior_component(
    prior: &BernoulliComponent,
    sigma: &SigmaPointSet,
    ln_w: &[f64],
    ln_present: f64,
    ln_absent: f64,
) -> BernoulliComponent {
    let r = if ln_present == f64::NEG_INFINITY {
        0.0
    } else if ln_absent == f64::NEG_INFINITY {
        1.0
    } else {
        1.0 / (1.0 + (ln_absent - ln_present).exp())
    };
    let density = if ln_present == f64::NEG_INFINITY {
        prior.density.clone()
    } else {
        let w: Vec<f64> = ln_w.iter().map(|l| (l - ln_present).exp()).collect();
        let mean = sigma
            .points
            .iter()
            .zip(&w)
            .fold(StateVector::zeros(), |acc, (p, w)| acc + p * *w);
        let cov = sigma.points.iter().zip(&w).fold(StateMatrix::zeros(), |acc, (p, w)| {
            let d = p - mean;
            acc + d * d.transpose() * *w
        });
        let mut cov = symmetrize(&cov);
        if cholesky(&cov).is_err() {
            cov += StateMatrix::identity() * 1e-12;
        }
        GaussianDensity::new(mean, cov)
    };
    BernoulliComponent {
        id: prior.id,
        r: r.clamp(0.0, 1.0),
        density,
        intensity: prior.intensity,
    }
}

/// Updates `mb` with each group of component indices handled jointly over
/// the union of its members' cells. Groups must partition the components.
fn update_groups(
    mb: &MultiBernoulli,
    z: &ImageMeasurement,
    cfg: &SensorConfig,
    ucfg: &UpdateConfig,
    groups: &[IndexCluster],
) -> Result<MultiBernoulli> {
    z.check_dims(cfg)?;
    let results: Vec<Vec<BernoulliComponent>> = groups
        .par_iter()
        .map(|g| {
            let comps: Vec<&BernoulliComponent> = g.members.iter().map(|&i| &mb.components[i]).collect();
            update_cluster(&comps, &g.cells, z, cfg, ucfg.kappa)
        })
        .collect::<Result<_>>()?;

    let mut slots: Vec<Option<BernoulliComponent>> = vec![None; mb.components.len()];
    for (g, posts) in groups.iter().zip(results) {
        for (&i, p) in g.members.iter().zip(posts) {
            slots[i] = Some(p);
        }
    }
    let comps = slots
        .into_iter()
        .map(|s| s.ok_or_else(|| Error::InvalidConfig("update groups do not cover every component".into())))
        .collect::<Result<Vec<_>>>()?;
    Ok(mb.with_components(comps))
}

/// Moves the lowest-existence members out of oversized clusters into
/// singletons until every cluster fits the cap.
fn enforce_cap(mb: &MultiBernoulli, sets: &[CellSet], clusters: Vec<IndexCluster>, cap: usize) -> Vec<IndexCluster> {
    let mut out = Vec::with_capacity(clusters.len());
    for cl in clusters {
        if cl.members.len() <= cap {
            out.push(cl);
            continue;
        }
        let mut by_strength = cl.members.clone();
        // Weakest first; ties broken by larger id first.
        by_strength.sort_by(|&a, &b| {
            let (ca, cb) = (&mb.components[a], &mb.components[b]);
            ca.r.total_cmp(&cb.r).then(cb.id.cmp(&ca.id))
        });
        let evicted: Vec<usize> = by_strength[..cl.members.len() - cap].to_vec();
        let kept: Vec<usize> = cl.members.iter().copied().filter(|i| !evicted.contains(i)).collect();
        let cells = CellSet::union(kept.iter().map(|&i| &sets[i]));
        out.push(IndexCluster { members: kept, cells });
        for i in evicted {
            out.push(IndexCluster {
                members: vec![i],
                cells: sets[i].clone(),
            });
        }
    }
    out
}

pub(super) fn update_with_clusters(
    mb: &MultiBernoulli,
    z: &ImageMeasurement,
    cfg: &SensorConfig,
    ucfg: &UpdateConfig,
    algorithm: Algorithm,
) -> Result<(MultiBernoulli, Vec<Cluster>)> {
    ucfg.validate()?;
    let sets = illuminated_sets(mb, cfg);
    let clusters = cluster_indices(mb, &sets);
    let public: Vec<Cluster> = clusters
        .iter()
        .map(|c| Cluster {
            member_ids: c.members.iter().map(|&i| mb.components[i].id).collect(),
            cells: c.cells.clone(),
        })
        .collect();
    let groups = match algorithm {
        Algorithm::Tcmb => enforce_cap(mb, &sets, clusters, ucfg.max_cluster_size),
        Algorithm::Mbtbd => (0..mb.components.len())
            .map(|i| IndexCluster {
                members: vec![i],
                cells: sets[i].clone(),
            })
            .collect(),
    };
    Ok((update_groups(mb, z, cfg, ucfg, &groups)?, public))
}

/// Clustered joint update. Components keep their ids and order, and the
/// output has exactly as many components as the input.
pub fn tcmb_update(
    mb: &MultiBernoulli,
    z: &ImageMeasurement,
    cfg: &SensorConfig,
    ucfg: &UpdateConfig,
) -> Result<MultiBernoulli> {
    update_with_clusters(mb, z, cfg, ucfg, Algorithm::Tcmb).map(|(m, _)| m)
}

/// Baseline update: each component alone over its own illuminated cells,
/// ignoring every other component's contribution.
pub fn mbtbd_update(
    mb: &MultiBernoulli,
    z: &ImageMeasurement,
    cfg: &SensorConfig,
    ucfg: &UpdateConfig,
) -> Result<MultiBernoulli> {
    update_with_clusters(mb, z, cfg, ucfg, Algorithm::Mbtbd).map(|(m, _)| m)
}

/// Joint update over a caller-chosen partition of component ids; each group
/// is evaluated over the union of its members' illuminated cells. No size
/// cap is applied.
pub fn partitioned_update(
    mb: &MultiBernoulli,
    z: &ImageMeasurement,
    cfg: &SensorConfig,
    ucfg: &UpdateConfig,
    partition: &[Vec<ComponentId>],
) -> Result<MultiBernoulli> {
    ucfg.validate()?;
    let sets = illuminated_sets(mb, cfg);
    let index_of = |id: &ComponentId| {
        mb.components
            .iter()
            .position(|c| c.id == *id)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown component id {id}")))
    };
    let mut seen = vec![false; mb.components.len()];
    let mut groups = Vec::with_capacity(partition.len());
    for group in partition {
        let members = group.iter().map(index_of).collect::<Result<Vec<_>>>()?;
        for &i in &members {
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidConfig(format!(
                    "component {} appears in more than one group",
                    mb.components[i].id
                )));
            }
        }
        let cells = CellSet::union(members.iter().map(|&i| &sets[i]));
        groups.push(IndexCluster { members, cells });
    }
    update_groups(mb, z, cfg, ucfg, &groups)
}
