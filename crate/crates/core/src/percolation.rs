//! Cluster identification for site predicates, Fortuin–Kasteleyn bond
//! realizations and cluster-size statistics.
//!
//! "Percolating" at finite volume means winding around the torus in at least
//! one direction, detected with [`DisplacementUnionFind`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::{BondMask, LatticeGraph};
use crate::region::RegionSpec;
use crate::spin::{cut_feasible, hemisphere_decompose, reflect, IsingProjection, ModelParams, SpinConfig};
use crate::union_find::DisplacementUnionFind;

/// Label of a site outside the clustered set.
pub const OUTSIDE: u32 = u32::MAX;

/// Connected components of a site set, with sizes and winding flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPartition {
    /// Compact cluster label per site, numbered in order of the first
    /// (row-major) member; [`OUTSIDE`] for excluded sites.
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
    /// Unwrapped displacement of each member from its cluster root.
    pub displacement: Vec<[i64; 2]>,
    pub wraps: Vec<[bool; 2]>,
}

impl ClusterPartition {
    fn from_union_find(uf: &mut DisplacementUnionFind, members: &[bool]) -> Self {
        let n = members.len();
        let mut root_label = vec![OUTSIDE; n];
        let mut labels = vec![OUTSIDE; n];
        let mut displacement = vec![[0, 0]; n];
        let mut sizes = Vec::new();
        let mut wraps = Vec::new();
        for site in 0..n {
            if !members[site] {
                continue;
            }
            let (root, d) = uf.find(site);
            if root_label[root] == OUTSIDE {
                root_label[root] = sizes.len() as u32;
                sizes.push(uf.set_size(root));
                wraps.push(uf.set_wraps(root));
            }
            labels[site] = root_label[root];
            displacement[site] = d;
        }
        Self {
            labels,
            sizes,
            displacement,
            wraps,
        }
    }

    pub fn site_count(&self) -> usize {
        self.labels.len()
    }

    pub fn cluster_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn member_count(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn largest(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    pub fn wraps_x(&self) -> bool {
        self.wraps.iter().any(|w| w[0])
    }

    pub fn wraps_y(&self) -> bool {
        self.wraps.iter().any(|w| w[1])
    }

    /// Any cluster winds in at least one direction.
    pub fn percolates(&self) -> bool {
        self.wraps.iter().any(|w| w[0] || w[1])
    }

    pub fn label(&self, site: usize) -> Option<u32> {
        match self.labels[site] {
            OUTSIDE => None,
            l => Some(l),
        }
    }

    pub fn stats(&self) -> ClusterStats {
        ClusterStats {
            cluster_count: self.cluster_count(),
            member_count: self.member_count(),
            mean_size: mean_cluster_size(self),
            largest_fraction: self.largest() as f64 / self.site_count() as f64,
            wraps_x: self.wraps_x(),
            wraps_y: self.wraps_y(),
        }
    }
}

/// Summary of one partition, as emitted in cluster CSV rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub cluster_count: usize,
    pub member_count: usize,
    pub mean_size: f64,
    pub largest_fraction: f64,
    pub wraps_x: bool,
    pub wraps_y: bool,
}

/// Clusters of `members` connected through present bonds.
pub fn label_sites(graph: &LatticeGraph, members: &[bool], mask: &BondMask) -> ClusterPartition {
    assert_eq!(members.len(), graph.site_count());
    let mut uf = DisplacementUnionFind::new(graph.site_count());
    let half = graph.degree() / 2;
    for site in 0..graph.site_count() {
        if !members[site] {
            continue;
        }
        let nbs = graph.neighbors(site);
        let bonds = graph.neighbor_bonds(site);
        for k in 0..half {
            if members[nbs[k]] && mask.is_present(bonds[k]) {
                uf.union(site, nbs[k], graph.offset(k));
            }
        }
    }
    ClusterPartition::from_union_find(&mut uf, members)
}

/// Clusters of all sites connected through occupied bonds (every site is a
/// member; unconnected sites are singletons).
pub fn label_bonds(graph: &LatticeGraph, occupied: &[bool]) -> ClusterPartition {
    assert_eq!(occupied.len(), graph.bond_count());
    let mut uf = DisplacementUnionFind::new(graph.site_count());
    for (b, bond) in graph.bonds().iter().enumerate() {
        if occupied[b] {
            uf.union(bond.i, bond.j, graph.bond_displacement(bond));
        }
    }
    ClusterPartition::from_union_find(&mut uf, &vec![true; graph.site_count()])
}

/// Site predicates used to define clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "predicate", rename_all = "snake_case")]
pub enum SitePredicate {
    /// `σ = +1` (upper hemisphere about the reference axis, ties included).
    SigmaPlus,
    SigmaMinus,
    /// `s∥ > d`, the two polar caps.
    DSet { d: f64 },
    /// `s∥ < d`, the equatorial strip.
    DBar { d: f64 },
    Region(RegionSpec),
}

impl SitePredicate {
    pub fn name(&self) -> String {
        match self {
            SitePredicate::SigmaPlus => "sigma_plus".into(),
            SitePredicate::SigmaMinus => "sigma_minus".into(),
            SitePredicate::DSet { .. } => "d_set".into(),
            SitePredicate::DBar { .. } => "d_bar".into(),
            SitePredicate::Region(r) => r.label(),
        }
    }

    pub fn evaluate(&self, config: &SpinConfig, u: &[f64]) -> Vec<bool> {
        (0..config.len())
            .map(|i| {
                let s = config.spin(i);
                let p = crate::spin::dot(s, u);
                match self {
                    SitePredicate::SigmaPlus => p >= 0.0,
                    SitePredicate::SigmaMinus => p < 0.0,
                    SitePredicate::DSet { d } => p.abs() > *d,
                    SitePredicate::DBar { d } => p.abs() < *d,
                    SitePredicate::Region(r) => r.contains(s, u),
                }
            })
            .collect()
    }

    /// The complementary predicate, when it is itself expressible. `D` and
    /// `D̄` are complementary up to the measure-zero set `s∥ = d`.
    pub fn complement(&self) -> Option<SitePredicate> {
        match self {
            SitePredicate::SigmaPlus => Some(SitePredicate::SigmaMinus),
            SitePredicate::SigmaMinus => Some(SitePredicate::SigmaPlus),
            SitePredicate::DSet { d } => Some(SitePredicate::DBar { d: *d }),
            SitePredicate::DBar { d } => Some(SitePredicate::DSet { d: *d }),
            SitePredicate::Region(_) => None,
        }
    }
}

pub fn clusters_by_predicate(
    config: &SpinConfig,
    graph: &LatticeGraph,
    predicate: &SitePredicate,
    u: &[f64],
    mask: &BondMask,
) -> ClusterPartition {
    label_sites(graph, &predicate.evaluate(config, u), mask)
}

/// Expected size of the cluster containing a uniformly chosen site, sites
/// outside the set counting as size 0: `Σ_c |c|² / |Λ|`.
pub fn mean_cluster_size(partition: &ClusterPartition) -> f64 {
    let s2: f64 = partition.sizes.iter().map(|&s| (s * s) as f64).sum();
    s2 / partition.site_count() as f64
}

/// Mean cluster size with the largest cluster removed, the usual finite-size
/// scaling estimator. Never used for the FK identity.
pub fn mean_cluster_size_without_largest(partition: &ClusterPartition) -> f64 {
    let largest = partition.largest();
    let s2: f64 = partition.sizes.iter().map(|&s| (s * s) as f64).sum::<f64>() - (largest * largest) as f64;
    s2 / partition.site_count() as f64
}

/// Bond occupation drawn on top of an H partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BondRealization {
    pub occupied: Vec<bool>,
    /// Bonds occupied with probability one because flipping a single
    /// endpoint would violate the cut constraint.
    pub frozen: Vec<bool>,
}

/// Outcome of an FK realization: the bonds, the FK clusters and the
/// hemisphere projection they were built from.
#[derive(Debug, Clone)]
pub struct FkRealization {
    pub bonds: BondRealization,
    pub clusters: ClusterPartition,
    pub projection: IsingProjection,
}

/// `1 - exp(-2 β s∥_i s∥_j)`.
#[inline]
pub fn fk_bond_probability(beta: f64, s_par_i: f64, s_par_j: f64) -> f64 {
    -(-2.0 * beta * s_par_i * s_par_j).exp_m1()
}

/// Whether flipping `a` alone (reflection through the plane orthogonal to
/// `u`) would break `|a - b| < epsilon`.
pub fn flip_breaks_cut(a: &[f64], b: &[f64], u: &[f64], epsilon: f64) -> bool {
    let mut flipped = a.to_vec();
    reflect(&mut flipped, u);
    !cut_feasible(&flipped, b, epsilon)
}

/// Draws an FK bond configuration relative to axis `u`: like-σ present bonds
/// are occupied with [`fk_bond_probability`], or with probability one when a
/// single-endpoint flip would violate the cut. Bonds are visited in
/// canonical bond order.
pub fn fk_realize<R: Rng + ?Sized>(
    config: &SpinConfig,
    graph: &LatticeGraph,
    params: &ModelParams,
    mask: &BondMask,
    u: &[f64],
    rng: &mut R,
) -> FkRealization {
    let projection = hemisphere_decompose(config, u);
    let eps = params.variant.epsilon();
    let nb = graph.bond_count();
    let mut occupied = vec![false; nb];
    let mut frozen = vec![false; nb];
    for (b, bond) in graph.bonds().iter().enumerate() {
        if !mask.is_present(b) || projection.sigma[bond.i] != projection.sigma[bond.j] {
            continue;
        }
        let must = match eps {
            Some(e) => flip_breaks_cut(config.spin(bond.i), config.spin(bond.j), u, e),
            None => false,
        };
        if must {
            frozen[b] = true;
            occupied[b] = true;
        } else {
            let p = fk_bond_probability(params.beta, projection.s_parallel[bond.i], projection.s_parallel[bond.j]);
            occupied[b] = p > 0.0 && rng.random::<f64>() < p;
        }
    }
    let clusters = label_bonds(graph, &occupied);
    FkRealization {
        bonds: BondRealization { occupied, frozen },
        clusters,
        projection,
    }
}

/// Whether every cluster of `fine` lies inside a single cluster of `coarse`
/// (sites outside `coarse` must be outside `fine` or singletons of it).
pub fn refines(fine: &ClusterPartition, coarse: &ClusterPartition) -> bool {
    let mut image = vec![None; fine.cluster_count()];
    for site in 0..fine.site_count() {
        let Some(f) = fine.label(site) else { continue };
        let c = coarse.label(site);
        match image[f as usize] {
            None => image[f as usize] = Some(c),
            Some(prev) if prev != c => return false,
            _ => {}
        }
        if c.is_none() && fine.sizes[f as usize] > 1 {
            return false;
        }
    }
    true
}

/// Every cluster of `inner` is contained in one cluster of `outer`.
pub fn contained_in(inner: &ClusterPartition, outer: &ClusterPartition) -> bool {
    let mut image: Vec<Option<u32>> = vec![None; inner.cluster_count()];
    for site in 0..inner.site_count() {
        let Some(i) = inner.label(site) else { continue };
        let Some(o) = outer.label(site) else { return false };
        match image[i as usize] {
            None => image[i as usize] = Some(o),
            Some(prev) if prev != o => return false,
            _ => {}
        }
    }
    true
}

/// Percolation summary of a set `E` and its complement for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RussoReport {
    pub e_wraps: bool,
    pub complement_wraps: bool,
    /// Both species wind at once; expected to be (close to) never on the
    /// triangular lattice.
    pub both_wrap: bool,
    pub e_mean_size: f64,
    pub complement_mean_size: f64,
    pub e_largest_fraction: f64,
    pub complement_largest_fraction: f64,
}

/// Clusters of `members` and of its complement on the full lattice.
pub fn russo_report(graph: &LatticeGraph, members: &[bool], mask: &BondMask) -> RussoReport {
    let complement: Vec<bool> = members.iter().map(|&m| !m).collect();
    let e = label_sites(graph, members, mask);
    let c = label_sites(graph, &complement, mask);
    let n = graph.site_count() as f64;
    RussoReport {
        e_wraps: e.percolates(),
        complement_wraps: c.percolates(),
        both_wrap: e.percolates() && c.percolates(),
        e_mean_size: mean_cluster_size(&e),
        complement_mean_size: mean_cluster_size(&c),
        e_largest_fraction: e.largest() as f64 / n,
        complement_largest_fraction: c.largest() as f64 / n,
    }
}

/// Bernoulli site percolation: each site occupied independently with
/// probability `p`, then clustered over all bonds.
pub fn bernoulli_site_mode<R: Rng + ?Sized>(graph: &LatticeGraph, p: f64, rng: &mut R) -> (Vec<bool>, ClusterPartition) {
    let members: Vec<bool> = (0..graph.site_count()).map(|_| rng.random::<f64>() < p).collect();
    let partition = label_sites(graph, &members, &BondMask::full(graph));
    (members, partition)
}
