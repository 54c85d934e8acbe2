//! Result files and the run manifest.
//!
//! Layout of an output directory:
//!
//! ```text
//! manifest.json            resolved spec, seeds, timings, file digests
//! summary.json             estimates, fits and verdicts
//! verdicts.txt             one PASS/FAIL line per verdict
//! point_NNN/observables.csv
//! point_NNN/clusters.csv
//! point_NNN/estimates.csv
//! point_NNN/g_r.dat        (custom recipe) r, G(r), error
//! ```
//!
//! Numbers in CSV files carry 17 significant digits so reruns of the same
//! manifest reproduce the files byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentSpec, GridPoint};
use crate::error::{Error, Result};
use crate::experiments::{two_point_table, ExperimentOutcome, PointFailure, PointRecord, Series, Verdict};
use crate::fit::{fit_eq7, TwoPointFits};
use crate::observables::{chi_ising, chi_phi, TwoPointTable};
use crate::rng::{aux_stream, mask_stream};
use crate::sampler::DiagnosticsReport;
use crate::stats::{Estimate, MIN_BLOCKS};

/// Version of the CSV column contracts.
pub const CSV_FORMAT_VERSION: u32 = 1;
pub const CLUSTER_HEADER: &str = "config_index,predicate,cluster_count,mean_size,largest_fraction,wraps_x,wraps_y";
pub const OBSERVABLE_HEADER: &str = "config_index,name,value";

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSeed {
    pub index: usize,
    pub seed: u64,
    pub chain_stream: u64,
    pub aux_stream: u64,
    pub mask_stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointTiming {
    pub index: usize,
    pub seconds: f64,
    pub sweeps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub csv_format: u32,
    pub spec: ExperimentSpec,
    pub total_seconds: f64,
    pub timings: Vec<PointTiming>,
    pub chains: Vec<ChainSeed>,
    pub files: Vec<FileEntry>,
    pub failures: Vec<PointFailure>,
    pub verdicts_pass: bool,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: GridPoint,
    pub estimates: BTreeMap<String, Estimate>,
    pub two_point_fit: Option<TwoPointFits>,
    pub two_point_fit_error: Option<String>,
    pub diagnostics: Option<DiagnosticsReport>,
    pub acceptance_rate: f64,
    pub delta: f64,
    pub strict_checks: u64,
    pub strict_violations: u64,
    pub measured_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub recipe: String,
    pub seed: u64,
    pub points: Vec<PointSummary>,
    pub verdicts: Vec<Verdict>,
}

pub fn point_dir(index: usize) -> String {
    format!("point_{index:03}")
}

pub fn observables_csv(series: &Series) -> String {
    let mut out = format!("{OBSERVABLE_HEADER}\n");
    for k in 0..series.len() {
        for (name, values) in series.iter() {
            if let Some(v) = values.get(k) {
                let _ = writeln!(out, "{k},{name},{}", fmt_f64(*v));
            }
        }
    }
    out
}

pub fn clusters_csv(record: &PointRecord) -> String {
    let mut out = format!("{CLUSTER_HEADER}\n");
    for row in &record.clusters {
        let s = &row.stats;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.config_index,
            row.predicate,
            s.cluster_count,
            fmt_f64(s.mean_size),
            fmt_f64(s.largest_fraction),
            s.wraps_x as u8,
            s.wraps_y as u8
        );
    }
    out
}

pub fn estimates_csv(estimates: &BTreeMap<String, Estimate>) -> String {
    let mut out = String::from("name,mean,error,samples,tau\n");
    for (name, e) in estimates {
        let _ = writeln!(out, "{name},{},{},{},{}", fmt_f64(e.mean), fmt_f64(e.error), e.samples, fmt_f64(e.tau));
    }
    out
}

/// Plot-ready `r G(r) error` columns.
pub fn two_point_dat(table: &TwoPointTable) -> String {
    let mut out = String::from("# r G(r) error\n");
    for ((r, g), e) in table.r.iter().zip(&table.g).zip(&table.error) {
        let _ = writeln!(out, "{r} {} {}", fmt_f64(*g), fmt_f64(*e));
    }
    out
}

/// Parses an observable CSV back into named series.
pub fn parse_observables(text: &str) -> Result<Series> {
    let mut lines = text.lines();
    if lines.next() != Some(OBSERVABLE_HEADER) {
        return Err(Error::Config(format!("observable file does not start with `{OBSERVABLE_HEADER}`")));
    }
    let mut series = Series::default();
    for (n, line) in lines.enumerate() {
        let bad = || Error::Config(format!("malformed observable row {}: `{line}`", n + 2));
        let mut parts = line.split(',');
        let (_, name, value) = (parts.next().ok_or_else(bad)?, parts.next().ok_or_else(bad)?, parts.next().ok_or_else(bad)?);
        let value: f64 = value.parse().map_err(|_| bad())?;
        series.push(name, value);
    }
    Ok(series)
}

struct Collector {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl Collector {
    fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
        fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.files.push(FileEntry {
            path: rel.to_string(),
            bytes: contents.len() as u64,
            sha256: hex::encode(Sha256::digest(contents)),
        });
        Ok(())
    }
}

pub fn summarize(outcome: &ExperimentOutcome) -> RunSummary {
    RunSummary {
        recipe: outcome.spec.recipe.name().to_string(),
        seed: outcome.spec.seed,
        points: outcome
            .records
            .iter()
            .map(|r| PointSummary {
                point: r.point.clone(),
                estimates: r.estimates.clone(),
                two_point_fit: r.two_point_fit.clone(),
                two_point_fit_error: r.two_point_fit_error.clone(),
                diagnostics: r.diagnostics.clone(),
                acceptance_rate: r.acceptance_rate,
                delta: r.delta,
                strict_checks: r.strict_checks,
                strict_violations: r.strict_violations,
                measured_violations: r.measured_violations,
            })
            .collect(),
        verdicts: outcome.verdicts.clone(),
    }
}

pub fn verdict_lines(verdicts: &[Verdict]) -> String {
    let mut out = String::new();
    for v in verdicts {
        let _ = writeln!(out, "{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    out
}

/// Writes every result file of `outcome` under `dir` in grid order, then the
/// manifest listing them.
pub fn write_outcome(outcome: &ExperimentOutcome, dir: &Path) -> Result<RunManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut c = Collector {
        root: dir.to_path_buf(),
        files: Vec::new(),
    };
    for r in &outcome.records {
        let base = point_dir(r.point.index);
        c.write(&format!("{base}/observables.csv"), observables_csv(&r.series).as_bytes())?;
        c.write(&format!("{base}/clusters.csv"), clusters_csv(r).as_bytes())?;
        c.write(&format!("{base}/estimates.csv"), estimates_csv(&r.estimates).as_bytes())?;
        if let Some(t) = &r.two_point {
            c.write(&format!("{base}/g_r.dat"), two_point_dat(t).as_bytes())?;
        }
    }
    let summary = serde_json::to_vec_pretty(&summarize(outcome))?;
    c.write("summary.json", &summary)?;
    c.write("verdicts.txt", verdict_lines(&outcome.verdicts).as_bytes())?;

    let spec = &outcome.spec;
    let mut chains: Vec<ChainSeed> = outcome
        .records
        .iter()
        .map(|r| (r.point.index, r.stream))
        .chain(outcome.failures.iter().map(|f| (f.point.index, crate::rng::grid_stream(f.point.index))))
        .map(|(index, stream)| ChainSeed {
            index,
            seed: spec.seed,
            chain_stream: stream,
            aux_stream: aux_stream(index),
            mask_stream: mask_stream(index),
        })
        .collect();
    chains.sort_by_key(|s| s.index);
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        csv_format: CSV_FORMAT_VERSION,
        spec: spec.clone(),
        total_seconds: outcome.seconds,
        timings: outcome
            .records
            .iter()
            .map(|r| PointTiming {
                index: r.point.index,
                seconds: r.seconds,
                sweeps: r.sweeps,
            })
            .collect(),
        chains,
        files: c.files,
        failures: outcome.failures.clone(),
        verdicts_pass: outcome.verdicts_pass(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(manifest)
}

/// Estimates recomputed from one point directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAnalysis {
    pub dir: String,
    pub estimates: BTreeMap<String, Estimate>,
    pub two_point: Option<TwoPointTable>,
    pub two_point_fit: Option<TwoPointFits>,
    pub two_point_fit_error: Option<String>,
}

/// Recomputes jackknife estimates (and the two-point fit when `g_r` series
/// are present) from `observables.csv` in `dir`. `sites` is the lattice
/// volume, needed for susceptibilities.
pub fn analyze_point(dir: &Path, sites: usize) -> Result<PointAnalysis> {
    let path = dir.join("observables.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let series = parse_observables(&text)?;
    let mut estimates = BTreeMap::new();
    for (name, values) in series.iter() {
        if name.starts_with("g_") {
            continue;
        }
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.len() >= MIN_BLOCKS {
            estimates.insert(name.to_string(), Estimate::from_series(&finite)?);
        }
    }
    if let Some(m) = series.get("magnetization") {
        estimates.insert("chi_ising".into(), chi_ising(m, sites)?);
    }
    if let (Some(c), Some(s)) = (series.get("phase_cos"), series.get("phase_sin")) {
        let sums: Vec<(f64, f64)> = c.iter().copied().zip(s.iter().copied()).collect();
        estimates.insert("chi_phi".into(), chi_phi(&sums, sites)?);
    }
    let (mut two_point, mut fit, mut fit_error) = (None, None, None);
    let rmax = series.names().iter().filter(|n| n.starts_with("g_")).count();
    if rmax > 0 {
        let table = two_point_table(&series, rmax - 1)?;
        let r: Vec<f64> = table.r.iter().map(|&r| r as f64).collect();
        match fit_eq7(&r, &table.g, &table.error) {
            Ok(f) => fit = Some(f),
            Err(e) => fit_error = Some(e.to_string()),
        }
        two_point = Some(table);
    }
    Ok(PointAnalysis {
        dir: dir.display().to_string(),
        estimates,
        two_point,
        two_point_fit: fit,
        two_point_fit_error: fit_error,
    })
}

/// Analyzes every point of a finished run directory.
pub fn analyze_run(dir: &Path) -> Result<Vec<PointAnalysis>> {
    let manifest = RunManifest::load(&dir.join("manifest.json"))?;
    let grid = manifest.spec.grid()?;
    let mut out = Vec::new();
    for p in grid {
        let pd = dir.join(point_dir(p.index));
        if pd.join("observables.csv").exists() {
            out.push(analyze_point(&pd, p.size * p.size)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observable_csv_round_trips() {
        let mut s = Series::default();
        for k in 0..5 {
            s.push("energy", 0.1 * k as f64 + 1.0 / 3.0);
            s.push("magnetization", -(k as f64));
        }
        let text = observables_csv(&s);
        assert!(text.starts_with("config_index,name,value\n0,energy,3.3333333333333331e-1\n"));
        let back = parse_observables(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn bad_header_rejected() {
        assert!(parse_observables("a,b,c\n").is_err());
        assert!(parse_observables("config_index,name,value\n0,x,abc\n").is_err());
    }
}
