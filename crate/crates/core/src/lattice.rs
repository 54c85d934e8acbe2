//! Periodic two-dimensional lattices.
//!
//! Sites are indexed row-major: site `(x, y)` has index `y * L + x`, with
//! `x, y ∈ [0, L)`. The triangular lattice is embedded in the square index
//! grid by adding the `(+1, +1)` and `(-1, -1)` diagonals, which gives every
//! site six neighbours with the topology of the triangular lattice.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bond occupation fraction at the triangular bond-percolation threshold,
/// `2 sin(π/18)`.
pub const TRIANGULAR_BOND_THRESHOLD: f64 = 0.347_296_355_333_860_7;

/// Largest removal probability that keeps the remaining triangular bonds
/// above their percolation threshold.
pub const TRIANGULAR_MAX_REMOVAL: f64 = 1.0 - TRIANGULAR_BOND_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Triangular,
    Square,
}

impl LatticeKind {
    pub fn degree(self) -> usize {
        match self {
            LatticeKind::Triangular => 6,
            LatticeKind::Square => 4,
        }
    }

    /// Neighbour offsets in the order used by the neighbour table. The first
    /// `degree / 2` entries are the forward directions that own a bond.
    pub fn offsets(self) -> &'static [[i64; 2]] {
        match self {
            LatticeKind::Triangular => &[[1, 0], [0, 1], [1, 1], [-1, 0], [0, -1], [-1, -1]],
            LatticeKind::Square => &[[1, 0], [0, 1], [-1, 0], [0, -1]],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LatticeKind::Triangular => "triangular",
            LatticeKind::Square => "square",
        }
    }
}

impl std::str::FromStr for LatticeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "triangular" | "tri" | "t" => Ok(LatticeKind::Triangular),
            "square" | "sq" => Ok(LatticeKind::Square),
            other => Err(Error::Config(format!("unknown lattice kind `{other}`"))),
        }
    }
}

/// A bond in canonical orientation `i < j`.
///
/// `wrap` is the periodic image offset crossed when stepping from `i` to
/// `j`: the real-space displacement is `pos(j) - pos(i) + L * wrap`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub wrap: [i8; 2],
}

/// One bond traversed in a given direction as part of a closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrientedBond {
    pub bond: usize,
    /// `true` when traversed from `i` to `j`.
    pub forward: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeGraph {
    kind: LatticeKind,
    size: usize,
    neighbors: Vec<usize>,
    neighbor_bonds: Vec<usize>,
    bonds: Vec<Bond>,
}

impl LatticeGraph {
    /// Builds a periodic lattice of linear size `size`, which must be even and
    /// at least 4.
    pub fn new(kind: LatticeKind, size: usize) -> Result<Self> {
        if size < 4 || !size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "lattice size must be even and >= 4, got {size}"
            )));
        }
        Ok(Self::build(kind, size))
    }

    /// Builds a lattice of any size `>= 3`. Only intended for small
    /// exact-enumeration checks; production runs go through [`LatticeGraph::new`].
    pub fn new_unchecked(kind: LatticeKind, size: usize) -> Result<Self> {
        if size < 3 {
            return Err(Error::Config(format!(
                "lattice size must be >= 3 to avoid duplicate bonds, got {size}"
            )));
        }
        Ok(Self::build(kind, size))
    }

    fn build(kind: LatticeKind, size: usize) -> Self {
        let n = size * size;
        let deg = kind.degree();
        let half = deg / 2;
        let offsets = kind.offsets();
        let mut bonds = Vec::with_capacity(n * half);
        let mut neighbors = vec![0; n * deg];
        let mut neighbor_bonds = vec![0; n * deg];
        let l = size as i64;

        for site in 0..n {
            let (x, y) = ((site % size) as i64, (site / size) as i64);
            for (k, off) in offsets[..half].iter().enumerate() {
                let (tx, ty) = (x + off[0], y + off[1]);
                let w = [tx.div_euclid(l) as i8, ty.div_euclid(l) as i8];
                let other = (ty.rem_euclid(l) * l + tx.rem_euclid(l)) as usize;
                let bond = if site < other {
                    Bond { i: site, j: other, wrap: w }
                } else {
                    Bond { i: other, j: site, wrap: [-w[0], -w[1]] }
                };
                let b = bonds.len();
                bonds.push(bond);
                neighbors[site * deg + k] = other;
                neighbor_bonds[site * deg + k] = b;
                neighbors[other * deg + k + half] = site;
                neighbor_bonds[other * deg + k + half] = b;
            }
        }

        Self {
            kind,
            size,
            neighbors,
            neighbor_bonds,
            bonds,
        }
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn site_count(&self) -> usize {
        self.size * self.size
    }

    pub fn degree(&self) -> usize {
        self.kind.degree()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    #[inline]
    pub fn neighbors(&self, site: usize) -> &[usize] {
        let d = self.degree();
        &self.neighbors[site * d..(site + 1) * d]
    }

    /// Bond indices parallel to [`LatticeGraph::neighbors`].
    #[inline]
    pub fn neighbor_bonds(&self, site: usize) -> &[usize] {
        let d = self.degree();
        &self.neighbor_bonds[site * d..(site + 1) * d]
    }

    /// Unwrapped displacement of neighbour slot `k`, identical for all sites.
    #[inline]
    pub fn offset(&self, k: usize) -> [i64; 2] {
        self.kind.offsets()[k]
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site % self.size, site / self.size)
    }

    pub fn index(&self, x: i64, y: i64) -> usize {
        let l = self.size as i64;
        (y.rem_euclid(l) * l + x.rem_euclid(l)) as usize
    }

    /// Real-space displacement of a bond traversed from `i` to `j`.
    pub fn bond_displacement(&self, bond: &Bond) -> [i64; 2] {
        let (xi, yi) = self.coords(bond.i);
        let (xj, yj) = self.coords(bond.j);
        let l = self.size as i64;
        [
            xj as i64 - xi as i64 + l * bond.wrap[0] as i64,
            yj as i64 - yi as i64 + l * bond.wrap[1] as i64,
        ]
    }

    /// Elementary plaquettes as closed loops of oriented bonds: two
    /// triangles per site on the triangular lattice, one square otherwise.
    pub fn plaquettes(&self) -> Vec<Vec<OrientedBond>> {
        let deg = self.degree();
        let l = self.size as i64;
        let step = |from: usize, k: usize| -> (usize, OrientedBond) {
            let to = self.neighbors[from * deg + k];
            let bond = self.neighbor_bonds[from * deg + k];
            let forward = self.bonds[bond].i == from;
            (to, OrientedBond { bond, forward })
        };
        // slots: 0:(1,0) 1:(0,1) 2:(1,1) and their reverses at +half
        let loops: &[&[usize]] = match self.kind {
            // (1,0) then (0,1) then (-1,-1); (1,1) then (-1,0) then (0,-1)
            LatticeKind::Triangular => &[&[0, 1, 5], &[2, 3, 4]],
            // (1,0), (0,1), (-1,0), (0,-1)
            LatticeKind::Square => &[&[0, 1, 2, 3]],
        };
        let mut out = Vec::with_capacity(self.site_count() * loops.len());
        for y in 0..l {
            for x in 0..l {
                for path in loops {
                    let mut at = self.index(x, y);
                    let mut cycle = Vec::with_capacity(path.len());
                    for &k in path.iter() {
                        let (next, ob) = step(at, k);
                        cycle.push(ob);
                        at = next;
                    }
                    debug_assert_eq!(at, self.index(x, y));
                    out.push(cycle);
                }
            }
        }
        out
    }

    /// Sum of oriented wrap vectors along a closed loop.
    pub fn loop_wrap_sum(&self, cycle: &[OrientedBond]) -> [i64; 2] {
        cycle.iter().fold([0, 0], |acc, ob| {
            let w = self.bonds[ob.bond].wrap;
            let s = if ob.forward { 1 } else { -1 };
            [acc[0] + s * w[0] as i64, acc[1] + s * w[1] as i64]
        })
    }

    /// Shortest-path (hop) distance from every site to the nearest source
    /// site; `usize::MAX` where unreachable or when `sources` is empty.
    pub fn hop_distances(&self, sources: &[usize]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.site_count()];
        let mut queue = std::collections::VecDeque::with_capacity(self.site_count());
        for &s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(site) = queue.pop_front() {
            let d = dist[site] + 1;
            for &nb in self.neighbors(site) {
                if dist[nb] == usize::MAX {
                    dist[nb] = d;
                    queue.push_back(nb);
                }
            }
        }
        dist
    }
}

/// Per-bond presence flags produced by random dilution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BondMask {
    present: Vec<bool>,
    removal_probability: f64,
}

impl BondMask {
    pub fn full(graph: &LatticeGraph) -> Self {
        Self {
            present: vec![true; graph.bond_count()],
            removal_probability: 0.0,
        }
    }

    /// Removes each bond independently with probability
    /// `removal_probability`, which must lie in `[0, 1)`. Callers that need
    /// the remaining bonds to percolate should also check against
    /// [`TRIANGULAR_MAX_REMOVAL`].
    pub fn dilute<R: Rng + ?Sized>(
        graph: &LatticeGraph,
        removal_probability: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&removal_probability) {
            return Err(Error::Config(format!(
                "bond removal probability must be in [0, 1), got {removal_probability}"
            )));
        }
        let present = (0..graph.bond_count())
            .map(|_| rng.random::<f64>() >= removal_probability)
            .collect();
        Ok(Self {
            present,
            removal_probability,
        })
    }

    /// Mask from explicit presence flags (removal probability recorded as 0).
    pub fn from_flags(present: Vec<bool>) -> Self {
        Self {
            present,
            removal_probability: 0.0,
        }
    }

    #[inline]
    pub fn is_present(&self, bond: usize) -> bool {
        self.present[bond]
    }

    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn removed_count(&self) -> usize {
        self.present.iter().filter(|&&p| !p).count()
    }

    pub fn removal_probability(&self) -> f64 {
        self.removal_probability
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn triangular_counts() {
        let g = LatticeGraph::new(LatticeKind::Triangular, 4).unwrap();
        assert_eq!(g.site_count(), 16);
        assert_eq!(g.bond_count(), 48);
        for s in 0..16 {
            assert_eq!(g.neighbors(s).len(), 6);
        }
    }

    #[test]
    fn square_counts() {
        let g = LatticeGraph::new(LatticeKind::Square, 4).unwrap();
        assert_eq!(g.site_count(), 16);
        assert_eq!(g.bond_count(), 32);
        for s in 0..16 {
            assert_eq!(g.neighbors(s).len(), 4);
        }
    }

    #[test]
    fn plaquette_wraps_cancel() {
        for kind in [LatticeKind::Triangular, LatticeKind::Square] {
            let g = LatticeGraph::new(kind, 4).unwrap();
            let plaqs = g.plaquettes();
            let per_site = if kind == LatticeKind::Triangular { 2 } else { 1 };
            assert_eq!(plaqs.len(), per_site * g.site_count());
            for p in &plaqs {
                assert_eq!(g.loop_wrap_sum(p), [0, 0]);
            }
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(LatticeGraph::new(LatticeKind::Triangular, 2).is_err());
        assert!(LatticeGraph::new(LatticeKind::Triangular, 5).is_err());
        assert!(LatticeGraph::new(LatticeKind::Square, 0).is_err());
        assert!(LatticeGraph::new_unchecked(LatticeKind::Triangular, 3).is_ok());
        assert!(LatticeGraph::new_unchecked(LatticeKind::Triangular, 2).is_err());
    }

    #[test]
    fn canonical_orientation_and_displacement() {
        let g = LatticeGraph::new(LatticeKind::Triangular, 6).unwrap();
        for b in g.bonds() {
            assert!(b.i < b.j);
            let d = g.bond_displacement(b);
            let ok = g.kind().offsets().iter().any(|o| o[0] == d[0] && o[1] == d[1]);
            assert!(ok, "bond {b:?} has non-neighbour displacement {d:?}");
        }
    }

    #[test]
    fn zero_dilution_keeps_all_bonds() {
        let g = LatticeGraph::new(LatticeKind::Triangular, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = BondMask::dilute(&g, 0.0, &mut rng).unwrap();
        assert_eq!(m.removed_count(), 0);
        assert!(BondMask::dilute(&g, 1.0, &mut rng).is_err());
    }

    #[test]
    fn dilution_is_binomial() {
        let g = LatticeGraph::new(LatticeKind::Triangular, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = 0.1;
        let m = BondMask::dilute(&g, q, &mut rng).unwrap();
        let n = g.bond_count() as f64;
        let mean = n * q;
        let sd = (n * q * (1.0 - q)).sqrt();
        let got = m.removed_count() as f64;
        assert!((got - mean).abs() < 4.0 * sd, "removed {got}, expected {mean} ± {sd}");
    }

    #[test]
    fn dilution_is_deterministic() {
        let g = LatticeGraph::new(LatticeKind::Square, 16).unwrap();
        let a = BondMask::dilute(&g, 0.3, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = BondMask::dilute(&g, 0.3, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hop_distance_on_square() {
        let g = LatticeGraph::new(LatticeKind::Square, 8).unwrap();
        let d = g.hop_distances(&[0]);
        assert_eq!(d[g.index(4, 4)], 8);
        assert_eq!(d[g.index(7, 7)], 2);
        let t = LatticeGraph::new(LatticeKind::Triangular, 8).unwrap();
        let d = t.hop_distances(&[0]);
        // (3,3) is reachable along the diagonal
        assert_eq!(d[t.index(3, 3)], 3);
    }
}
