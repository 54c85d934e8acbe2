//! Ergodicity diagnostics.
//!
//! P1 compares the spatial average of a local observable in one late
//! configuration with its time average over the run. P2 compares the first
//! and second halves of each tracked time series with a two-sample KS test
//! after thinning by the integrated autocorrelation time.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::{integrated_autocorrelation, jackknife, ks_two_sample, Estimate, TestOutcome, MIN_BLOCKS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1Check {
    pub spatial: Estimate,
    pub ensemble: Estimate,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P2Check {
    pub test: TestOutcome,
    pub thinning: usize,
    pub half_size: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableCheck {
    pub name: String,
    pub p1: Option<P1Check>,
    pub p2: Option<P2Check>,
    /// Too few (effective) samples to decide; never counted as a pass.
    pub insufficient: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub significance: f64,
    pub checks: Vec<ObservableCheck>,
}

impl DiagnosticsReport {
    pub fn all_pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn p2_failures(&self) -> usize {
        self.checks
            .iter()
            .filter(|c| c.p2.as_ref().is_some_and(|p| !p.pass))
            .count()
    }
}

/// A tracked observable: its time series and, for local observables, the
/// per-site values in the last configuration, laid out as `rows` of equal
/// length for spatial blocking.
pub struct TrackedObservable<'a> {
    pub name: &'a str,
    pub series: &'a [f64],
    pub late_sites: Option<&'a [f64]>,
    pub rows: usize,
}

pub fn ergodicity_diagnostics(observables: &[TrackedObservable<'_>], significance: f64) -> Result<DiagnosticsReport> {
    let mut checks = Vec::with_capacity(observables.len());
    for obs in observables {
        let mut insufficient = false;
        let p2 = match p2_check(obs.series, significance)? {
            Some(p) => Some(p),
            None => {
                insufficient = true;
                None
            }
        };
        let p1 = match obs.late_sites {
            Some(sites) => match p1_check(obs.series, sites, obs.rows)? {
                Some(p) => Some(p),
                None => {
                    insufficient = true;
                    None
                }
            },
            None => None,
        };
        let pass = !insufficient && p2.as_ref().is_none_or(|p| p.pass) && p1.as_ref().is_none_or(|p| p.pass);
        checks.push(ObservableCheck {
            name: obs.name.to_string(),
            p1,
            p2,
            insufficient,
            pass,
        });
    }
    Ok(DiagnosticsReport { significance, checks })
}

fn p2_check(series: &[f64], significance: f64) -> Result<Option<P2Check>> {
    let tau = integrated_autocorrelation(series);
    let thinning = (2.0 * tau).ceil().max(1.0) as usize;
    let half = series.len() / 2;
    let first: Vec<f64> = series[..half].iter().step_by(thinning).copied().collect();
    let second: Vec<f64> = series[half..2 * half].iter().step_by(thinning).copied().collect();
    if first.len() < MIN_BLOCKS || second.len() < MIN_BLOCKS {
        return Ok(None);
    }
    let test = ks_two_sample(&first, &second)?;
    Ok(Some(P2Check {
        pass: test.passes(significance),
        test,
        thinning,
        half_size: first.len(),
    }))
}

fn p1_check(series: &[f64], sites: &[f64], rows: usize) -> Result<Option<P1Check>> {
    if series.len() < MIN_BLOCKS || rows < MIN_BLOCKS || !sites.len().is_multiple_of(rows) {
        return Ok(None);
    }
    let ensemble = Estimate::from_series(series)?;
    // jackknife over whole rows of the lattice
    let (mean, error) = jackknife(&[sites], rows, |m| m[0])?;
    let spatial = Estimate {
        mean,
        error,
        samples: sites.len(),
        tau: 0.0,
    };
    let z = spatial.z_distance(&ensemble);
    Ok(Some(P1Check {
        spatial,
        ensemble,
        z,
        pass: z <= 3.0,
    }))
}
