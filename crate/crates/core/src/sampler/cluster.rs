//! Embedded Fortuin–Kasteleyn cluster update.
//!
//! Relative to an axis `r`, each spin splits into a sign `σ = sign(s·r)` and
//! the untouched magnitudes. Conditional on the magnitudes the signs form a
//! ferromagnetic Ising model with couplings `β s∥_i s∥_j`, whose
//! Swendsen–Wang move is: draw FK bonds among like-σ neighbours, then give
//! every FK cluster an independent fair-coin flip `s -> s - 2 (s·r) r`.
//! Under a cut, a like-σ bond whose single-endpoint flip would break the
//! constraint is occupied with probability one; unlike-σ bonds can never be
//! broken by a flip, since a flip only brings their parallel parts closer.

use rand::Rng;

use super::ChainState;
use crate::error::{Error, Result};
use crate::lattice::{BondMask, LatticeGraph};
use crate::percolation::{fk_realize, FkRealization};
use crate::spin::{norm, reflect, ModelParams};

/// What one cluster update did.
#[derive(Debug, Clone)]
pub struct ClusterUpdateRecord {
    pub fk: FkRealization,
    pub axis: Vec<f64>,
    pub flipped: Vec<bool>,
}

impl ClusterUpdateRecord {
    pub fn flipped_sites(&self) -> usize {
        (0..self.fk.clusters.site_count())
            .filter(|&s| self.flipped[self.fk.clusters.labels[s] as usize])
            .count()
    }
}

pub fn embedded_cluster_update(
    chain: &mut ChainState,
    graph: &LatticeGraph,
    params: &ModelParams,
    mask: &BondMask,
    axis: &[f64],
) -> Result<ClusterUpdateRecord> {
    let fk = fk_realize(&chain.config, graph, params, mask, axis, &mut chain.rng);
    let flipped: Vec<bool> = (0..fk.clusters.cluster_count())
        .map(|_| chain.rng.random::<bool>())
        .collect();
    for site in 0..graph.site_count() {
        if flipped[fk.clusters.labels[site] as usize] {
            let s = chain.config.spin_mut(site);
            reflect(s, axis);
            let r = norm(s);
            s.iter_mut().for_each(|x| *x /= r);
        }
    }
    // the freezing rule makes violations impossible; any hit is a bug
    if params.variant.epsilon().is_some() || params.variant.richard_bound().is_some() {
        for site in 0..graph.site_count() {
            if !params.site_ok(chain.config.spin(site)) {
                return Err(Error::Infeasible(format!("cluster flip broke the site constraint at {site}")));
            }
        }
        for (b, bond) in graph.bonds().iter().enumerate() {
            if mask.is_present(b) && !params.bond_ok(chain.config.spin(bond.i), chain.config.spin(bond.j)) {
                return Err(Error::Infeasible(format!(
                    "cluster flip broke the cut on bond {b} ({}, {})",
                    bond.i, bond.j
                )));
            }
        }
    }
    Ok(ClusterUpdateRecord {
        fk,
        axis: axis.to_vec(),
        flipped,
    })
}
