//! Observables measured on configuration snapshots and their ensemble
//! estimators.
//!
//! Susceptibilities use squared-sum forms: `Σ_{x,y} σ_x σ_y = (Σ_x σ_x)²`
//! and `Σ_{x,y} cos(φ_x - φ_y) = (Σ cos φ)² + (Σ sin φ)²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BondMask, LatticeGraph};
use crate::region::RegionSpec;
use crate::spin::{bond_energy_sum, dot, hemisphere_decompose, spherical_angles, AxisFrame, SpinConfig};
use crate::stats::{jackknife, Estimate, DEFAULT_BLOCKS, MIN_BLOCKS};

/// `Σ_x σ_x` relative to axis `u`.
pub fn ising_magnetization(config: &SpinConfig, u: &[f64]) -> f64 {
    hemisphere_decompose(config, u).sigma.iter().map(|&s| s as f64).sum()
}

/// `χ_Is = ⟨(Σ σ)²⟩ / |Λ|` from per-configuration magnetizations.
pub fn chi_ising(magnetizations: &[f64], sites: usize) -> Result<Estimate> {
    require(magnetizations.len())?;
    let m2: Vec<f64> = magnetizations.iter().map(|m| m * m / sites as f64).collect();
    Estimate::from_series(&m2)
}

/// `(Σ cos φ, Σ sin φ)` for the azimuths of an N = 3 configuration.
pub fn phase_sums(config: &SpinConfig, frame: &AxisFrame) -> (f64, f64) {
    (0..config.len()).fold((0.0, 0.0), |(c, s), i| {
        let (_, phi) = spherical_angles(config.spin(i), frame);
        (c + phi.cos(), s + phi.sin())
    })
}

pub fn phase_sums_of(phi: &[f64]) -> (f64, f64) {
    phi.iter().fold((0.0, 0.0), |(c, s), p| (c + p.cos(), s + p.sin()))
}

/// `χ_φ = ⟨(Σ cos φ)² + (Σ sin φ)²⟩ / |Λ|`.
pub fn chi_phi(sums: &[(f64, f64)], sites: usize) -> Result<Estimate> {
    require(sums.len())?;
    let v: Vec<f64> = sums.iter().map(|(c, s)| (c * c + s * s) / sites as f64).collect();
    Estimate::from_series(&v)
}

/// Mean of `s_i·s_j` over present bonds.
pub fn energy_per_bond(config: &SpinConfig, graph: &LatticeGraph, mask: &BondMask) -> f64 {
    let present = (0..graph.bond_count()).filter(|&b| mask.is_present(b)).count();
    bond_energy_sum(config, graph, mask) / present as f64
}

fn require(n: usize) -> Result<()> {
    if n < MIN_BLOCKS {
        Err(Error::InsufficientSamples { needed: MIN_BLOCKS, got: n })
    } else {
        Ok(())
    }
}

/// `G(r) = ⟨s_0·s_r⟩` averaged over sites and the two lattice axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPointTable {
    pub r: Vec<usize>,
    pub g: Vec<f64>,
    pub error: Vec<f64>,
    pub samples: usize,
}

/// Collects per-configuration `G(r)` for `r = 0..=L/2`.
#[derive(Debug, Clone, Default)]
pub struct TwoPointAccumulator {
    per_config: Vec<Vec<f64>>,
}

/// `G(r)` of a single configuration.
pub fn two_point_single(config: &SpinConfig, graph: &LatticeGraph) -> Vec<f64> {
    let l = graph.size();
    let rmax = l / 2;
    let mut g = vec![0.0; rmax + 1];
    for site in 0..graph.site_count() {
        let (x, y) = graph.coords(site);
        let s0 = config.spin(site);
        for (r, gr) in g.iter_mut().enumerate() {
            let sx = config.spin(graph.index((x + r) as i64, y as i64));
            let sy = config.spin(graph.index(x as i64, (y + r) as i64));
            *gr += dot(s0, sx) + dot(s0, sy);
        }
    }
    let norm = 2.0 * graph.site_count() as f64;
    g.iter_mut().for_each(|v| *v /= norm);
    g[0] = 1.0;
    g
}

impl TwoPointAccumulator {
    pub fn add(&mut self, config: &SpinConfig, graph: &LatticeGraph) {
        self.per_config.push(two_point_single(config, graph));
    }

    pub fn len(&self) -> usize {
        self.per_config.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_config.is_empty()
    }

    pub fn finish(&self) -> Result<TwoPointTable> {
        require(self.per_config.len())?;
        let rn = self.per_config[0].len();
        let mut g = Vec::with_capacity(rn);
        let mut error = Vec::with_capacity(rn);
        for r in 0..rn {
            let col: Vec<f64> = self.per_config.iter().map(|v| v[r]).collect();
            let (m, e) = jackknife(&[&col], DEFAULT_BLOCKS.min(col.len()), |m| m[0])?;
            g.push(m);
            error.push(e);
        }
        g[0] = 1.0;
        error[0] = 0.0;
        Ok(TwoPointTable {
            r: (0..rn).collect(),
            g,
            error,
            samples: self.per_config.len(),
        })
    }
}

/// Unit normal of the `c`-tilted great circle, `n_c = -c e1 + √(1-c²) u`
/// in the frame of the reference axis. For `u = ẑ` this is
/// `(-c, 0, √(1-c²))`: the circle passes through `(0, ±1, 0)` and reaches
/// its highest point `s_z = c` at `s_y = 0`.
pub fn tilted_normal(frame: &AxisFrame, c: f64) -> Vec<f64> {
    let a = (1.0 - c * c).sqrt();
    frame.u.iter().zip(&frame.e1).map(|(u, e)| a * u - c * e).collect()
}

/// Number of bonds across which `s·n_c` changes sign.
pub fn crossing_count(config: &SpinConfig, graph: &LatticeGraph, frame: &AxisFrame, c: f64) -> u64 {
    let n = tilted_normal(frame, c);
    let proj: Vec<f64> = (0..config.len()).map(|i| dot(config.spin(i), &n)).collect();
    graph
        .bonds()
        .iter()
        .filter(|b| proj[b.i] * proj[b.j] < 0.0)
        .count() as u64
}

/// Fraction of sites whose spin lies in `region`.
pub fn region_fraction(config: &SpinConfig, region: &RegionSpec, u: &[f64]) -> f64 {
    let hits = (0..config.len()).filter(|&i| region.contains(config.spin(i), u)).count();
    hits as f64 / config.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaCheck {
    pub region: String,
    pub expected: f64,
    pub estimate: Estimate,
    pub z: f64,
    pub pass: bool,
}

/// Area preservation: occupancy of each region against its share of the
/// sphere, at 3σ. `fractions[k]` is the per-configuration series for
/// `regions[k]`.
pub fn area_test(regions: &[RegionSpec], fractions: &[Vec<f64>]) -> Result<Vec<AreaCheck>> {
    regions
        .iter()
        .zip(fractions)
        .map(|(region, series)| {
            let expected = region
                .sphere_fraction()
                .ok_or_else(|| Error::Config(format!("region {} has no closed-form area", region.label())))?;
            let estimate = Estimate::from_series(series)?;
            let z = estimate.z_distance(&Estimate::exact(expected));
            Ok(AreaCheck {
                region: region.label(),
                expected,
                estimate,
                z,
                pass: z <= 3.0,
            })
        })
        .collect()
}

/// Two target-sphere points and the angular radius of their neighbourhoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub radius: f64,
}

impl PointPair {
    pub fn separation(&self) -> f64 {
        dot(&self.p1, &self.p2).clamp(-1.0, 1.0).acos()
    }
}

/// Mean hop distance from sites pointing near `p1` to the nearest site
/// pointing near `p2`. `None` when either neighbourhood is empty.
pub fn gradient_statistic(config: &SpinConfig, graph: &LatticeGraph, pair: &PointPair) -> Option<f64> {
    let cos_r = pair.radius.cos();
    let near = |p: &[f64]| -> Vec<usize> {
        (0..config.len()).filter(|&i| dot(config.spin(i), p) > cos_r).collect()
    };
    let a = near(&pair.p1);
    let b = near(&pair.p2);
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let dist = graph.hop_distances(&b);
    Some(a.iter().map(|&i| dist[i] as f64).sum::<f64>() / a.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub pairs: Vec<(f64, Estimate)>,
    /// Configurations skipped per pair because a neighbourhood was empty.
    pub empty: Vec<usize>,
    pub max_z: f64,
    pub pass: bool,
}

/// Gradient preservation: the statistic must agree within 3σ across pairs
/// of equal separation. `series[k]` holds per-configuration values for
/// pair `k` (`None` where a neighbourhood was empty).
pub fn gradient_test(pairs: &[PointPair], series: &[Vec<Option<f64>>]) -> Result<GradientCheck> {
    let mut out = Vec::with_capacity(pairs.len());
    let mut empty = Vec::with_capacity(pairs.len());
    for (pair, s) in pairs.iter().zip(series) {
        let vals: Vec<f64> = s.iter().flatten().copied().collect();
        empty.push(s.len() - vals.len());
        out.push((pair.separation(), Estimate::from_series(&vals)?));
    }
    let mut max_z: f64 = 0.0;
    for i in 0..out.len() {
        for j in i + 1..out.len() {
            if (out[i].0 - out[j].0).abs() < 1e-9 {
                max_z = max_z.max(out[i].1.z_distance(&out[j].1));
            }
        }
    }
    Ok(GradientCheck {
        pairs: out,
        empty,
        max_z,
        pass: max_z <= 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeKind;
    use crate::region::RegionShape;
    use crate::rng::seeded;
    use crate::spin::{random_unit, ModelParams, Variant};
    use rand::Rng;

    fn z_frame() -> AxisFrame {
        AxisFrame::new(&[0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn frozen_ferromagnet_chi() {
        let series = vec![64.0; 40];
        let e = chi_ising(&series, 64).unwrap();
        assert_eq!(e.mean, 64.0);
        assert_eq!(e.error, 0.0);
    }

    #[test]
    fn fair_coin_chi_is_one() {
        let mut rng = seeded(1, 0);
        let sites = 100;
        let mags: Vec<f64> = (0..5000)
            .map(|_| (0..sites).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).sum())
            .collect();
        let e = chi_ising(&mags, sites).unwrap();
        assert!(e.agrees_with(1.0, 3.0), "{e:?}");
    }

    #[test]
    fn aligned_and_random_phases() {
        let sites = 64;
        let aligned = vec![(64.0, 0.0); 20];
        assert_eq!(chi_phi(&aligned, sites).unwrap().mean, 64.0);
        let mut rng = seeded(2, 0);
        let sums: Vec<(f64, f64)> = (0..4000)
            .map(|_| {
                let phi: Vec<f64> = (0..sites).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
                phase_sums_of(&phi)
            })
            .collect();
        let e = chi_phi(&sums, sites).unwrap();
        assert!(e.agrees_with(1.0, 3.0), "{e:?}");
        assert!(chi_phi(&sums[..5], sites).is_err());
    }

    #[test]
    fn chi_bounds_per_configuration() {
        // 0 <= M²/|Λ| <= |Λ| for any σ pattern
        let mut rng = seeded(3, 0);
        for _ in 0..100 {
            let m: f64 = (0..50).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).sum();
            let v = m * m / 50.0;
            assert!((0.0..=50.0).contains(&v));
        }
    }

    #[test]
    fn two_point_of_uniform_config() {
        let g = LatticeGraph::new(LatticeKind::Triangular, 8).unwrap();
        let p = ModelParams::new(3, 1.0, Variant::Standard).unwrap();
        let cfg = SpinConfig::cold(&p, 64);
        let gr = two_point_single(&cfg, &g);
        assert_eq!(gr.len(), 5);
        assert!(gr.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn two_point_at_infinite_temperature() {
        let g = LatticeGraph::new(LatticeKind::Square, 16).unwrap();
        let p = ModelParams::new(3, 0.0, Variant::Standard).unwrap();
        let mut rng = seeded(4, 0);
        let mut acc = TwoPointAccumulator::default();
        for _ in 0..400 {
            acc.add(&SpinConfig::hot(&p, 256, &mut rng), &g);
        }
        let t = acc.finish().unwrap();
        assert_eq!(t.g[0], 1.0);
        for r in 1..t.r.len() {
            assert!(t.g[r].abs() <= 3.5 * t.error[r] + 1e-12, "G({r}) = {} ± {}", t.g[r], t.error[r]);
        }
    }

    #[test]
    fn tilted_normals() {
        let f = z_frame();
        let n0 = tilted_normal(&f, 0.0);
        assert_eq!(n0, vec![0.0, 0.0, 1.0]);
        let n = tilted_normal(&f, 0.4);
        assert!((dot(&n, &n) - 1.0).abs() < 1e-15);
        // (0, 1, 0) lies on every tilted circle
        assert!(dot(&n, &[0.0, 1.0, 0.0]).abs() < 1e-15);
        // highest point of the circle at s_y = 0 has s_z = c
        let top = [(1.0f64 - 0.16).sqrt(), 0.0, 0.4];
        assert!(dot(&n, &top).abs() < 1e-15);
    }

    #[test]
    fn crossing_of_uniform_config_is_zero() {
        let g = LatticeGraph::new(LatticeKind::Triangular, 8).unwrap();
        let p = ModelParams::new(3, 1.0, Variant::Standard).unwrap();
        let cfg = SpinConfig::cold(&p, 64);
        for c in [0.0, 0.3, 0.9] {
            assert_eq!(crossing_count(&cfg, &g, &z_frame(), c), 0);
        }
    }

    #[test]
    fn crossing_half_of_bonds_for_uniform_spins() {
        let g = LatticeGraph::new(LatticeKind::Triangular, 16).unwrap();
        let mut rng = seeded(5, 0);
        for c in [0.0, 0.5] {
            let counts: Vec<f64> = (0..2000)
                .map(|_| {
                    let vals: Vec<f64> = (0..256).flat_map(|_| random_unit(3, &mut rng)).collect();
                    let cfg = SpinConfig::from_values(3, vals).unwrap();
                    crossing_count(&cfg, &g, &z_frame(), c) as f64
                })
                .collect();
            let e = Estimate::from_series(&counts).unwrap();
            assert!(e.agrees_with(g.bond_count() as f64 / 2.0, 3.0), "c = {c}: {e:?}");
        }
    }

    #[test]
    fn full_sphere_area_is_exact() {
        let full = RegionSpec::new(RegionShape::Full, 3).unwrap();
        let p = ModelParams::new(3, 0.0, Variant::Standard).unwrap();
        let mut rng = seeded(6, 0);
        let fr: Vec<f64> = (0..20)
            .map(|_| region_fraction(&SpinConfig::hot(&p, 64, &mut rng), &full, &p.axis))
            .collect();
        let checks = area_test(&[full], &[fr]).unwrap();
        assert_eq!(checks[0].estimate.mean, 1.0);
        assert!(checks[0].pass);
    }

    #[test]
    fn degenerate_gradient_pair_is_zero() {
        let g = LatticeGraph::new(LatticeKind::Triangular, 8).unwrap();
        let p = ModelParams::new(3, 0.0, Variant::Standard).unwrap();
        let mut rng = seeded(7, 0);
        let cfg = SpinConfig::hot(&p, 64, &mut rng);
        for axis in [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]] {
            let pair = PointPair { p1: axis.to_vec(), p2: axis.to_vec(), radius: 0.8 };
            if let Some(v) = gradient_statistic(&cfg, &g, &pair) {
                assert_eq!(v, 0.0);
            }
        }
        let tiny = PointPair { p1: vec![0.0, 0.0, 1.0], p2: vec![1.0, 0.0, 0.0], radius: 1e-9 };
        assert_eq!(gradient_statistic(&cfg, &g, &tiny), None);
    }
}
