//! Error analysis for Monte Carlo time series: blocked jackknife, integrated
//! autocorrelation time and two-sample tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Minimum number of jackknife blocks.
pub const MIN_BLOCKS: usize = 10;
/// Default number of jackknife blocks.
pub const DEFAULT_BLOCKS: usize = 20;

/// A mean with its statistical error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub error: f64,
    pub samples: usize,
    /// Integrated autocorrelation time in units of the sample spacing.
    pub tau: f64,
}

impl Estimate {
    /// Blocked-jackknife estimate of the mean of `series`, with
    /// [`DEFAULT_BLOCKS`] blocks or one block per sample for short series
    /// (at least [`MIN_BLOCKS`]).
    pub fn from_series(series: &[f64]) -> Result<Self> {
        let (mean, error) = jackknife(&[series], DEFAULT_BLOCKS.min(series.len()), |m| m[0])?;
        Ok(Self {
            mean,
            error,
            samples: series.len(),
            tau: integrated_autocorrelation(series),
        })
    }

    /// An exact value with zero error.
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            error: 0.0,
            samples: 1,
            tau: 0.0,
        }
    }

    /// `|a - b|` in units of the combined (independent) error.
    pub fn z_distance(&self, other: &Estimate) -> f64 {
        let e = (self.error * self.error + other.error * other.error).sqrt();
        let diff = (self.mean - other.mean).abs();
        if e == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / e
        }
    }

    /// Whether `value` lies within `k` errors of the mean.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.error
    }
}

/// Blocked jackknife for a function of column means.
///
/// `columns` are equal-length time series, cut into `blocks` contiguous
/// blocks (the remainder at the end is dropped). `f` maps the vector of
/// column means to the derived quantity. Returns `(f(full means), error)`.
pub fn jackknife<F>(columns: &[&[f64]], blocks: usize, f: F) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Config("jackknife columns must have equal length".into()));
    }
    let blocks = blocks.max(MIN_BLOCKS);
    if n < blocks {
        return Err(Error::InsufficientSamples { needed: blocks, got: n });
    }
    let per = n / blocks;
    let used = per * blocks;
    let k = columns.len();
    let mut block_sums = vec![vec![0.0; k]; blocks];
    let mut totals = vec![0.0; k];
    for (c, col) in columns.iter().enumerate() {
        for (b, chunk) in col[..used].chunks(per).enumerate() {
            let s: f64 = chunk.iter().sum();
            block_sums[b][c] = s;
            totals[c] += s;
        }
    }
    let full_means: Vec<f64> = totals.iter().map(|t| t / used as f64).collect();
    let full = f(&full_means);
    let leave_one: Vec<f64> = block_sums
        .iter()
        .map(|bs| {
            let means: Vec<f64> = totals
                .iter()
                .zip(bs)
                .map(|(t, s)| (t - s) / (used - per) as f64)
                .collect();
            f(&means)
        })
        .collect();
    let avg = leave_one.iter().sum::<f64>() / blocks as f64;
    let var = leave_one.iter().map(|v| (v - avg).powi(2)).sum::<f64>() * (blocks - 1) as f64 / blocks as f64;
    Ok((full, var.sqrt()))
}

/// Integrated autocorrelation time `τ = 1/2 + Σ_t ρ(t)` with the automatic
/// window `W`: the smallest `W` with `W >= 6 τ(W)`.
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 0.5;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c0 = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for t in 1..n / 2 {
        let ct = series[..n - t]
            .iter()
            .zip(&series[t..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / (n - t) as f64;
        tau += ct / c0;
        if t as f64 >= 6.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}

/// Result of a two-sample hypothesis test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

impl TestOutcome {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value (Stephens'
/// small-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    Ok(TestOutcome {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    })
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sided z-test for equality of two binomial proportions.
pub fn two_proportion_test(hits_a: usize, n_a: usize, hits_b: usize, n_b: usize) -> Result<TestOutcome> {
    if n_a == 0 || n_b == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let (pa, pb) = (hits_a as f64 / n_a as f64, hits_b as f64 / n_b as f64);
    let pooled = (hits_a + hits_b) as f64 / (n_a + n_b) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n_a as f64 + 1.0 / n_b as f64)).sqrt();
    if se == 0.0 {
        let same = pa == pb;
        return Ok(TestOutcome {
            statistic: if same { 0.0 } else { f64::INFINITY },
            p_value: if same { 1.0 } else { 0.0 },
        });
    }
    let z = (pa - pb) / se;
    Ok(TestOutcome {
        statistic: z,
        p_value: two_sided_normal_p(z),
    })
}

pub fn two_sided_normal_p(z: f64) -> f64 {
    let normal = Normal::standard();
    (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn jackknife_of_iid_mean_matches_standard_error() {
        let mut rng = seeded(1, 0);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let e = Estimate::from_series(&xs).unwrap();
        let se = (1.0 / 12.0f64 / 20_000.0).sqrt();
        assert!((e.mean - 0.5).abs() < 4.0 * se);
        assert!((e.error / se - 1.0).abs() < 0.5, "error {} vs {}", e.error, se);
        assert!(e.tau < 1.0);
    }

    #[test]
    fn jackknife_needs_ten_blocks() {
        let xs = vec![1.0; 9];
        assert!(matches!(Estimate::from_series(&xs), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn jackknife_of_linear_function_is_exact_combination() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..100).map(|i| 2.0 * i as f64).collect();
        let (v, _) = jackknife(&[&a, &b], 10, |m| m[1] - 2.0 * m[0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn autocorrelated_series_has_long_tau() {
        let mut rng = seeded(2, 0);
        let mut x = 0.0;
        let rho: f64 = 0.9;
        let xs: Vec<f64> = (0..50_000)
            .map(|_| {
                x = rho * x + rng.random::<f64>() - 0.5;
                x
            })
            .collect();
        let tau = integrated_autocorrelation(&xs);
        // exact: (1 + ρ) / (2 (1 - ρ)) = 9.5
        assert!((tau - 9.5).abs() < 2.0, "tau = {tau}");
    }

    #[test]
    fn ks_detects_shift_and_accepts_identity() {
        let mut rng = seeded(3, 0);
        let a: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let same = ks_two_sample(&a, &a).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert!(same.passes(0.05));
        let b: Vec<f64> = (0..500).map(|_| rng.random::<f64>() + 0.3).collect();
        assert!(!ks_two_sample(&a, &b).unwrap().passes(0.05));
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.010
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn proportion_test() {
        let t = two_proportion_test(50, 100, 50, 100).unwrap();
        assert_eq!(t.p_value, 1.0);
        let t = two_proportion_test(80, 100, 20, 100).unwrap();
        assert!(t.p_value < 1e-6);
    }
}
