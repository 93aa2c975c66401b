//! Grouping of predicted components whose illuminated cell sets overlap,
//! directly or through a chain of other components.

use crate::rfs::{ComponentId, MultiBernoulli};
use crate::sensor::{illuminated_cells, CellSet, SensorConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    /// Sorted ascending.
    pub member_ids: Vec<ComponentId>,
    /// Union of the members' illuminated cells.
    pub cells: CellSet,
}

/// Cluster with members addressed by position in the source multi-Bernoulli.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct IndexCluster {
    pub members: Vec<usize>,
    pub cells: CellSet,
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Illuminated cell set of every component, evaluated at its mean with its
/// nominal intensity.
pub fn illuminated_sets(mb: &MultiBernoulli, cfg: &SensorConfig) -> Vec<CellSet> {
    mb.components
        .iter()
        .map(|c| illuminated_cells(&c.density.mean, c.intensity, cfg))
        .collect()
}

pub(crate) fn cluster_indices(mb: &MultiBernoulli, sets: &[CellSet]) -> Vec<IndexCluster> {
    let n = mb.components.len();
    let mut ds = DisjointSets::new(n);
    for a in 0..n {
        if sets[a].is_empty() {
            continue;
        }
        for b in (a + 1)..n {
            if sets[a].intersects(&sets[b]) {
                ds.union(a, b);
            }
        }
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot_of_root = vec![usize::MAX; n];
    for idx in 0..n {
        let root = ds.find(idx);
        if slot_of_root[root] == usize::MAX {
            slot_of_root[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot_of_root[root]].push(idx);
    }

    let id_of = |i: usize| mb.components[i].id;
    for g in &mut groups {
        g.sort_by_key(|&i| id_of(i));
    }
    groups.sort_by_key(|g| id_of(g[0]));

    groups
        .into_iter()
        .map(|members| {
            let cells = CellSet::union(members.iter().map(|&i| &sets[i]));
            IndexCluster { members, cells }
        })
        .collect()
}

/// Partitions the components into clusters of interacting targets: the
/// connected components of the graph joining every pair whose illuminated
/// cell sets intersect. Output is sorted canonically by id and does not
/// depend on the input component order.
pub fn cluster_targets(mb: &MultiBernoulli, cfg: &SensorConfig) -> Vec<Cluster> {
    let sets = illuminated_sets(mb, cfg);
    cluster_indices(mb, &sets)
        .into_iter()
        .map(|c| Cluster {
            member_ids: c.members.iter().map(|&i| mb.components[i].id).collect(),
            cells: c.cells,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{GaussianDensity, StateMatrix, StateVector};
    use crate::rfs::BernoulliComponent;
    use crate::testutil::reference_sensor;
    use proptest::prelude::*;

    fn comp(id: u64, x: f64, y: f64, intensity: f64) -> BernoulliComponent {
        BernoulliComponent {
            id: ComponentId(id),
            r: 0.5,
            density: GaussianDensity::new(StateVector::new(x, 0.0, y, 0.0), StateMatrix::identity()),
            intensity,
        }
    }

    fn mb(comps: Vec<BernoulliComponent>) -> MultiBernoulli {
        MultiBernoulli::from_components(comps).unwrap()
    }

    /// Pairwise overlap matrix closed transitively (Floyd–Warshall style).
    fn brute_force_partition(m: &MultiBernoulli, cfg: &SensorConfig) -> Vec<Vec<ComponentId>> {
        let sets = illuminated_sets(m, cfg);
        let n = sets.len();
        let mut reach = vec![vec![false; n]; n];
        for a in 0..n {
            reach[a][a] = true;
            for b in 0..n {
                if a != b && sets[a].iter().any(|c| sets[b].contains(c)) {
                    reach[a][b] = true;
                }
            }
        }
        for k in 0..n {
            for a in 0..n {
                for b in 0..n {
                    if reach[a][k] && reach[k][b] {
                        reach[a][b] = true;
                    }
                }
            }
        }
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for a in 0..n {
            if seen[a] {
                continue;
            }
            let mut group: Vec<ComponentId> = (0..n)
                .filter(|&b| reach[a][b])
                .inspect(|&b| seen[b] = true)
                .map(|b| m.components[b].id)
                .collect();
            group.sort();
            out.push(group);
        }
        out.sort();
        out
    }

    #[test]
    fn separated_targets_are_singletons() {
        let cfg = reference_sensor();
        let clusters = cluster_targets(&mb(vec![comp(0, 30.0, 30.0, 10.0), comp(1, 50.0, 30.0, 10.0)]), &cfg);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].member_ids, vec![ComponentId(0)]);
        assert_eq!(clusters[0].cells.len(), 13);
    }

    #[test]
    fn chain_is_transitive() {
        let cfg = reference_sensor();
        // A–B 3.5 apart (overlap), B–C 3.5 apart (overlap), A–C 7 apart (disjoint).
        let m = mb(vec![
            comp(0, 30.0, 30.0, 10.0),
            comp(1, 33.5, 30.0, 10.0),
            comp(2, 37.0, 30.0, 10.0),
        ]);
        let sets = illuminated_sets(&m, &cfg);
        assert!(sets[0].intersects(&sets[1]));
        assert!(sets[1].intersects(&sets[2]));
        assert!(!sets[0].intersects(&sets[2]));
        let clusters = cluster_targets(&m, &cfg);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].member_ids.len(), 3);
        assert_eq!(clusters[0].cells, CellSet::union(sets.iter()));
    }

    #[test]
    fn four_targets_at_the_crossing_form_one_cluster() {
        // Table I means propagated noise-free to k = 21.
        let cfg = reference_sensor();
        let k = 21.0;
        let m = mb(vec![
            comp(0, 20.0 + 1.5 * (k - 1.0), 20.0 + 1.5 * (k - 1.0), 10.0),
            comp(1, 80.0 - 1.5 * (k - 1.0), 20.0 + 1.5 * (k - 1.0), 7.0),
            comp(2, 20.0 + 2.0 * (k - 6.0), 50.0, 8.0),
            comp(3, 50.0, 20.0 + 2.0 * (k - 6.0), 9.0),
        ]);
        let clusters = cluster_targets(&m, &cfg);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].member_ids.len(), 4);
        assert!(clusters[0].cells.contains(&crate::sensor::Cell::new(50, 50)));
    }

    #[test]
    fn off_image_component_is_an_empty_singleton() {
        let cfg = reference_sensor();
        let clusters = cluster_targets(&mb(vec![comp(4, -100.0, 5.0, 10.0), comp(7, 60.0, 60.0, 10.0)]), &cfg);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].member_ids, vec![ComponentId(4)]);
        assert!(clusters[0].cells.is_empty());
    }

    #[test]
    fn empty_input() {
        assert!(cluster_targets(&MultiBernoulli::new(), &reference_sensor()).is_empty());
    }

    fn scene() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((10.0f64..30.0, 10.0f64..30.0, 0.5f64..12.0), 0..=10)
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(targets in scene()) {
            let cfg = reference_sensor();
            let m = mb(targets.iter().enumerate().map(|(i, (x, y, s))| comp(i as u64, *x, *y, *s)).collect());
            let mut got: Vec<Vec<ComponentId>> = cluster_targets(&m, &cfg).into_iter().map(|c| c.member_ids).collect();
            got.sort();
            prop_assert_eq!(got, brute_force_partition(&m, &cfg));
        }

        #[test]
        fn partition_and_cell_union(targets in scene()) {
            let cfg = reference_sensor();
            let m = mb(targets.iter().enumerate().map(|(i, (x, y, s))| comp(i as u64, *x, *y, *s)).collect());
            let clusters = cluster_targets(&m, &cfg);
            let mut ids: Vec<ComponentId> = clusters.iter().flat_map(|c| c.member_ids.clone()).collect();
            ids.sort();
            let mut want: Vec<ComponentId> = m.components.iter().map(|c| c.id).collect();
            want.sort();
            prop_assert_eq!(ids, want);
            let all = CellSet::union(clusters.iter().map(|c| &c.cells));
            prop_assert_eq!(all, CellSet::union(illuminated_sets(&m, &cfg).iter()));
        }

        #[test]
        fn order_invariant(targets in scene(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let cfg = reference_sensor();
            let comps: Vec<_> = targets.iter().enumerate().map(|(i, (x, y, s))| comp(i as u64, *x, *y, *s)).collect();
            let mut shuffled = comps.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(cluster_targets(&mb(comps), &cfg), cluster_targets(&mb(shuffled), &cfg));
        }
    }
}
