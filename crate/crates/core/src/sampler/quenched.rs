//! O(2) phases with frozen site amplitudes: weight
//! `exp(β Σ_<ij> k_i k_j cos(φ_i - φ_j))`, `k_i = sin θ̄_i` taken from one
//! N = 3 configuration.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SweepStats;
use crate::error::Result;
use crate::lattice::{BondMask, LatticeGraph};
use crate::spin::{spherical_angles, AxisFrame, SpinConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchedFrame {
    /// Frozen amplitudes in `[0, 1]`.
    pub k: Vec<f64>,
    /// Phases in `[0, 2π)`.
    pub phi: Vec<f64>,
    /// Proposal half-width for phase updates.
    pub delta: f64,
}

impl QuenchedFrame {
    /// Quenches the polar angles of `config` about `axis`; the phases start
    /// at the configuration's azimuths.
    pub fn from_config(config: &SpinConfig, axis: &[f64]) -> Result<Self> {
        let frame = AxisFrame::new(axis)?;
        let (k, phi) = (0..config.len())
            .map(|i| {
                let (theta, phi) = spherical_angles(config.spin(i), &frame);
                (theta.sin(), phi.rem_euclid(TAU))
            })
            .unzip();
        Ok(Self { k, phi, delta: 1.0 })
    }

    pub fn from_amplitudes<R: Rng + ?Sized>(k: Vec<f64>, rng: &mut R) -> Self {
        let phi = (0..k.len()).map(|_| rng.random::<f64>() * TAU).collect();
        Self { k, phi, delta: 1.0 }
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// Adjusts `delta` toward 50% acceptance.
    pub fn tune(&mut self, stats: &SweepStats) {
        self.delta = if stats.rate() > 0.5 {
            (self.delta * 1.1).min(std::f64::consts::PI)
        } else {
            (self.delta / 1.1).max(1e-3)
        };
    }
}

/// One sequential Metropolis pass over the phases; amplitudes are untouched.
pub fn quenched_phi_sweep<R: Rng + ?Sized>(
    frame: &mut QuenchedFrame,
    beta: f64,
    graph: &LatticeGraph,
    mask: &BondMask,
    rng: &mut R,
) -> SweepStats {
    let mut stats = SweepStats::default();
    for site in 0..graph.site_count() {
        let old = frame.phi[site];
        let new = (old + frame.delta * (2.0 * rng.random::<f64>() - 1.0)).rem_euclid(TAU);
        stats.proposals += 1;
        let ki = frame.k[site];
        let mut de = 0.0;
        for (&nb, &b) in graph.neighbors(site).iter().zip(graph.neighbor_bonds(site)) {
            if mask.is_present(b) {
                let c = ki * frame.k[nb];
                de += c * ((new - frame.phi[nb]).cos() - (old - frame.phi[nb]).cos());
            }
        }
        let x = beta * de;
        if x >= 0.0 || rng.random::<f64>() < x.exp() {
            frame.phi[site] = new;
            stats.accepted += 1;
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeKind;
    use crate::rng::seeded;

    #[test]
    fn zero_amplitudes_accept_everything() {
        let g = LatticeGraph::new(LatticeKind::Triangular, 8).unwrap();
        let mut rng = seeded(1, 0);
        let mut frame = QuenchedFrame::from_amplitudes(vec![0.0; 64], &mut rng);
        let k_before = frame.k.clone();
        let st = quenched_phi_sweep(&mut frame, 5.0, &g, &BondMask::full(&g), &mut rng);
        assert_eq!(st.accepted, 64);
        assert_eq!(frame.k, k_before);
        assert!(frame.phi.iter().all(|p| (0.0..TAU).contains(p)));
    }

    #[test]
    fn frame_from_config_reads_angles() {
        let cfg = SpinConfig::from_values(3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0]).unwrap();
        let f = QuenchedFrame::from_config(&cfg, &[0.0, 0.0, 1.0]).unwrap();
        assert!((f.k[0] - 1.0).abs() < 1e-15);
        assert!(f.k[1].abs() < 1e-15);
        assert!((f.phi[0] - 0.0).abs() < 1e-15);
        assert!((f.phi[2] - 1.5 * std::f64::consts::PI).abs() < 1e-12);
    }
}
