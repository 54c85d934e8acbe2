//! Markov chains over spin configurations.
//!
//! A chain advances in *sweeps*: one Metropolis pass over every site,
//! followed by an embedded cluster update on sweeps selected by the
//! schedule. While `sweeps < thermalization` the proposal width is tuned
//! toward 50% acceptance; afterwards it is frozen.

mod cluster;
mod diagnostics;
mod metropolis;
mod quenched;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use cluster::{embedded_cluster_update, ClusterUpdateRecord};
pub use diagnostics::{ergodicity_diagnostics, DiagnosticsReport, ObservableCheck, P1Check, P2Check, TrackedObservable};
pub use metropolis::{metropolis_sweep, propose_in_cap, SweepStats};
pub use quenched::{quenched_phi_sweep, QuenchedFrame};

use crate::error::{Error, Result};
use crate::lattice::{BondMask, LatticeGraph};
use crate::rng::{RngState, SimRng};
use crate::spin::{complete_frame, random_unit, ModelParams, SpinConfig, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepOrder {
    Sequential,
    /// Even `x + y` sites first, then odd.
    Checkerboard,
}

/// Reflection axis used by cluster updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterAxis {
    /// Always the model's reference axis.
    Reference,
    /// A fresh axis per update, drawn from the reflections that preserve
    /// the model's constraints: uniform on the sphere for the standard and
    /// cut variants; for the Richard variant the reference axis or a uniform
    /// axis orthogonal to it, with probability 1/2 each.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartKind {
    Hot,
    Cold,
}

/// Sweep schedule of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub thermalization: u64,
    pub measurements: u64,
    /// Sweeps between measurements.
    pub interval: u64,
    /// Cluster update after every `cluster_every`-th sweep; 0 disables.
    pub cluster_every: u64,
    pub axis: ClusterAxis,
    pub order: SweepOrder,
    /// Check every constraint after every sweep and fail on a violation.
    pub strict: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            thermalization: 1000,
            measurements: 1000,
            interval: 1,
            cluster_every: 1,
            axis: ClusterAxis::Random,
            order: SweepOrder::Checkerboard,
            strict: cfg!(debug_assertions),
        }
    }
}

impl Schedule {
    pub fn total_sweeps(&self) -> u64 {
        self.thermalization + self.measurements * self.interval
    }

    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(Error::Config("measurement interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// State of one Markov chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub config: SpinConfig,
    pub rng: SimRng,
    pub sweeps: u64,
    /// Metropolis proposal cap radius (radians).
    pub delta: f64,
    pub proposals: u64,
    pub accepted: u64,
    /// Constraint violations seen by strict checks.
    pub violations: u64,
    /// Constraint checks performed by strict mode.
    pub checks: u64,
}

impl ChainState {
    pub fn new(
        graph: &LatticeGraph,
        params: &ModelParams,
        mask: &BondMask,
        start: StartKind,
        mut rng: SimRng,
    ) -> Result<Self> {
        let config = match start {
            StartKind::Hot => SpinConfig::hot(params, graph.site_count(), &mut rng),
            StartKind::Cold => SpinConfig::cold(params, graph.site_count()),
        };
        Self::from_config(config, graph, params, mask, rng)
    }

    pub fn from_config(
        config: SpinConfig,
        graph: &LatticeGraph,
        params: &ModelParams,
        mask: &BondMask,
        rng: SimRng,
    ) -> Result<Self> {
        config.check_feasible(graph, params, mask)?;
        Ok(Self {
            config,
            rng,
            sweeps: 0,
            delta: 1.0,
            proposals: 0,
            accepted: 0,
            violations: 0,
            checks: 0,
        })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    pub fn rng_state(&self) -> RngState {
        RngState::capture(&self.rng)
    }

    fn draw_axis(&mut self, params: &ModelParams, kind: ClusterAxis) -> Vec<f64> {
        match (kind, params.variant) {
            (ClusterAxis::Reference, _) => params.axis.clone(),
            (ClusterAxis::Random, Variant::Richard { .. }) => {
                if self.rng.random::<bool>() {
                    params.axis.clone()
                } else {
                    let perp = complete_frame(&params.axis);
                    let coeffs = random_unit(perp.len(), &mut self.rng);
                    let mut r = vec![0.0; params.n];
                    for (c, e) in coeffs.iter().zip(&perp) {
                        for (x, ex) in r.iter_mut().zip(e) {
                            *x += c * ex;
                        }
                    }
                    r
                }
            }
            (ClusterAxis::Random, _) => random_unit(params.n, &mut self.rng),
        }
    }

    /// Advances the chain by one sweep (Metropolis pass plus the scheduled
    /// cluster update). Returns the Metropolis statistics.
    pub fn step(
        &mut self,
        graph: &LatticeGraph,
        params: &ModelParams,
        mask: &BondMask,
        schedule: &Schedule,
    ) -> Result<SweepStats> {
        let stats = metropolis_sweep(self, graph, params, mask, schedule.order);
        self.proposals += stats.proposals;
        self.accepted += stats.accepted;
        if self.sweeps < schedule.thermalization {
            self.delta = if stats.rate() > 0.5 {
                (self.delta * 1.1).min(std::f64::consts::PI)
            } else {
                (self.delta / 1.1).max(1e-4)
            };
        }
        if schedule.cluster_every > 0 && (self.sweeps + 1).is_multiple_of(schedule.cluster_every) {
            let axis = self.draw_axis(params, schedule.axis);
            embedded_cluster_update(self, graph, params, mask, &axis)?;
        }
        self.sweeps += 1;
        self.config.generation = self.sweeps;
        if schedule.strict {
            self.checks += 1;
            let bad = self.config.violation_count(graph, params, mask);
            if bad > 0 {
                self.violations += bad as u64;
                return Err(Error::Infeasible(format!(
                    "{bad} constraint violations after sweep {}",
                    self.sweeps
                )));
            }
        }
        Ok(stats)
    }

    /// Runs until `sweeps == schedule.thermalization`.
    pub fn thermalize(
        &mut self,
        graph: &LatticeGraph,
        params: &ModelParams,
        mask: &BondMask,
        schedule: &Schedule,
    ) -> Result<()> {
        while self.sweeps < schedule.thermalization {
            self.step(graph, params, mask, schedule)?;
        }
        Ok(())
    }

    /// Runs the remaining measurement phase, calling `measure` after every
    /// `interval`-th sweep with the measurement index.
    pub fn measure<F>(
        &mut self,
        graph: &LatticeGraph,
        params: &ModelParams,
        mask: &BondMask,
        schedule: &Schedule,
        measure: F,
    ) -> Result<()>
    where
        F: FnMut(u64, &ChainState),
    {
        self.run_until(graph, params, mask, schedule, schedule.total_sweeps(), measure)
    }

    /// Like [`ChainState::measure`] but stops once `sweeps` reaches `end`
    /// (capped at the schedule's total), so a run can be split across
    /// checkpoints without changing its trajectory.
    pub fn run_until<F>(
        &mut self,
        graph: &LatticeGraph,
        params: &ModelParams,
        mask: &BondMask,
        schedule: &Schedule,
        end: u64,
        mut measure: F,
    ) -> Result<()>
    where
        F: FnMut(u64, &ChainState),
    {
        let end = end.min(schedule.total_sweeps());
        while self.sweeps < end {
            self.step(graph, params, mask, schedule)?;
            if self.sweeps > schedule.thermalization {
                let since = self.sweeps - schedule.thermalization;
                if since.is_multiple_of(schedule.interval) {
                    measure(since / schedule.interval - 1, self);
                }
            }
        }
        Ok(())
    }
}
