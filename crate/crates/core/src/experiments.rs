//! Experiment recipes.
//!
//! Every grid point runs one chain on its own random stream; points run in
//! parallel and their records are returned in grid order. A failing point
//! is recorded and the rest of the sweep continues. Verdicts are computed
//! from the collected records once all points are done.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentSpec, GridPoint, Recipe};
use crate::error::{Error, Result};
use crate::fit::{fit_eq7, fit_power_law, FitResult, TwoPointFits};
use crate::lattice::{BondMask, LatticeGraph, LatticeKind, TRIANGULAR_MAX_REMOVAL};
use crate::observables::{
    area_test, crossing_count, energy_per_bond, gradient_statistic, gradient_test, ising_magnetization, phase_sums,
    phase_sums_of, region_fraction, two_point_single, AreaCheck, PointPair, TwoPointTable,
};
use crate::percolation::{bernoulli_site_mode, clusters_by_predicate, fk_realize, mean_cluster_size, ClusterStats, SitePredicate};
use crate::region::{RegionShape, RegionSpec};
use crate::rng::{aux_stream, grid_stream, mask_stream, seeded, SimRng};
use crate::sampler::{
    embedded_cluster_update, ergodicity_diagnostics, quenched_phi_sweep, QuenchedFrame, ChainState, DiagnosticsReport, Schedule, StartKind, TrackedObservable,
};
use crate::spin::{dot, AxisFrame, ModelParams, SpinConfig, Variant};
use crate::stats::{jackknife, ks_two_sample, two_proportion_test, Estimate, TestOutcome, DEFAULT_BLOCKS};

/// Smallest fit p-value accepted as a good power law.
pub const FIT_P_THRESHOLD: f64 = 0.01;

/// Named per-configuration series, in first-insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl Series {
    pub fn push(&mut self, name: &str, value: f64) {
        match self.names.iter().position(|n| n == name) {
            Some(k) => self.values[k].push(value),
            None => {
                self.names.push(name.to_string());
                self.values.push(vec![value]);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|k| self.values[k].as_slice())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(Vec::as_slice))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub config_index: u64,
    pub predicate: String,
    pub stats: ClusterStats,
}

/// Everything measured at one grid point.
#[derive(Debug, Clone)]
pub struct PointRecord {
    pub point: GridPoint,
    pub stream: u64,
    pub series: Series,
    pub clusters: Vec<ClusterRow>,
    pub estimates: BTreeMap<String, Estimate>,
    pub two_point: Option<TwoPointTable>,
    pub two_point_fit: Option<TwoPointFits>,
    pub two_point_fit_error: Option<String>,
    pub diagnostics: Option<DiagnosticsReport>,
    pub sweeps: u64,
    pub acceptance_rate: f64,
    pub delta: f64,
    /// Constraint checks run by strict mode and violations they found.
    pub strict_checks: u64,
    pub strict_violations: u64,
    /// Violations counted on the measured configurations.
    pub measured_violations: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub point: GridPoint,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub values: BTreeMap<String, f64>,
}

impl Verdict {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
            values: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.values.insert(key.to_string(), value);
        self
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub spec: ExperimentSpec,
    pub records: Vec<PointRecord>,
    pub failures: Vec<PointFailure>,
    pub verdicts: Vec<Verdict>,
    pub seconds: f64,
}

impl ExperimentOutcome {
    pub fn verdicts_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn record(&self, index: usize) -> Option<&PointRecord> {
        self.records.iter().find(|r| r.point.index == index)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

/// The cap and strip of area 4π/3 compared by the C6 recipe.
pub fn c6_regions() -> Result<(RegionSpec, RegionSpec)> {
    let area = 4.0 * PI / 3.0;
    Ok((RegionSpec::cap_with_area(area)?, RegionSpec::strip_with_area(area)?))
}

/// Polar and equatorial point pairs at equal separation `PI / 3`, for the
/// gradient test.
pub fn gradient_pairs(frame: &AxisFrame) -> Vec<PointPair> {
    let sep = PI / 3.0;
    let comb = |a: &[f64], ca: f64, b: &[f64], cb: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| ca * x + cb * y).collect() };
    vec![
        PointPair {
            p1: frame.u.clone(),
            p2: comb(&frame.u, sep.cos(), &frame.e1, sep.sin()),
            radius: 0.35,
        },
        PointPair {
            p1: frame.e1.clone(),
            p2: comb(&frame.e1, sep.cos(), &frame.e2, sep.sin()),
            radius: 0.35,
        },
    ]
}

/// `(Σ cos φ, Σ sin φ)` about the reference axis; for N = 2 the spin
/// components themselves.
pub fn phases(config: &SpinConfig, params: &ModelParams, frame: Option<&AxisFrame>) -> (f64, f64) {
    match frame {
        Some(f) => phase_sums(config, f),
        None => {
            debug_assert_eq!(params.n, 2);
            (0..config.len()).fold((0.0, 0.0), |(c, s), i| {
                let v = config.spin(i);
                (c + v[0], s + v[1])
            })
        }
    }
}

fn crossing_name(c: f64) -> String {
    format!("crossing_{c}")
}

struct Measurer<'a> {
    recipe: Recipe,
    spec: &'a ExperimentSpec,
    graph: &'a LatticeGraph,
    params: &'a ModelParams,
    mask: &'a BondMask,
    frame: Option<AxisFrame>,
    regions: (RegionSpec, RegionSpec),
    pairs: Vec<PointPair>,
    aux: SimRng,
    series: Series,
    clusters: Vec<ClusterRow>,
    violations: u64,
}

impl Measurer<'_> {
    fn measure(&mut self, index: u64, chain: &ChainState) {
        let cfg = &chain.config;
        let u = &self.params.axis;
        let sites = self.graph.site_count() as f64;
        self.violations += cfg.violation_count(self.graph, self.params, self.mask) as u64;
        self.series.push("energy", energy_per_bond(cfg, self.graph, self.mask));
        let plus = SitePredicate::SigmaPlus.evaluate(cfg, u);
        self.series
            .push("occupancy_plus", plus.iter().filter(|&&b| b).count() as f64 / sites);
        match self.recipe {
            Recipe::C6CapVsStrip => {
                let (a, b) = (self.regions.0.clone(), self.regions.1.clone());
                for (label, region) in [("cap", a), ("strip", b)] {
                    let part = clusters_by_predicate(cfg, self.graph, &SitePredicate::Region(region), u, self.mask);
                    let st = part.stats();
                    self.series.push(&format!("mean_size_{label}"), st.mean_size);
                    self.series.push(&format!("occupancy_{label}"), st.member_count as f64 / sites);
                    self.clusters.push(ClusterRow {
                        config_index: index,
                        predicate: label.to_string(),
                        stats: st,
                    });
                }
            }
            Recipe::RichardDiscriminator | Recipe::DilutedO2 | Recipe::FkIdentity | Recipe::Custom => {
                self.series.push("magnetization", ising_magnetization(cfg, u));
                let (c, s) = phases(cfg, self.params, self.frame.as_ref());
                self.series.push("phase_cos", c);
                self.series.push("phase_sin", s);
                if self.recipe == Recipe::FkIdentity {
                    let fk = fk_realize(cfg, self.graph, self.params, self.mask, u, &mut self.aux);
                    let st = fk.clusters.stats();
                    self.series.push("fk_mean_size", st.mean_size);
                    self.clusters.push(ClusterRow {
                        config_index: index,
                        predicate: "fk".into(),
                        stats: st,
                    });
                }
                if self.recipe == Recipe::Custom {
                    let st = label_stats(cfg, self.graph, &SitePredicate::SigmaPlus, u, self.mask);
                    self.clusters.push(ClusterRow {
                        config_index: index,
                        predicate: "sigma_plus".into(),
                        stats: st,
                    });
                    for (r, g) in two_point_single(cfg, self.graph).into_iter().enumerate() {
                        self.series.push(&format!("g_{r}"), g);
                    }
                }
            }
            Recipe::CrossingFlatness => {
                let frame = self.frame.as_ref().expect("crossing needs N = 3");
                for &c in &self.spec.c_values {
                    self.series.push(&crossing_name(c), crossing_count(cfg, self.graph, frame, c) as f64);
                }
                self.series.push("occupancy_cap", region_fraction(cfg, &self.regions.0, u));
                self.series.push("occupancy_strip", region_fraction(cfg, &self.regions.1, u));
                for (k, pair) in self.pairs.iter().enumerate() {
                    let v = gradient_statistic(cfg, self.graph, pair).unwrap_or(f64::NAN);
                    self.series.push(&format!("gradient_{k}"), v);
                }
            }
            Recipe::Validate => {
                self.series.push("occupancy_cap", region_fraction(cfg, &self.regions.0, u));
                self.series.push("occupancy_strip", region_fraction(cfg, &self.regions.1, u));
                let st = label_stats(cfg, self.graph, &SitePredicate::SigmaPlus, u, self.mask);
                self.clusters.push(ClusterRow {
                    config_index: index,
                    predicate: "sigma_plus".into(),
                    stats: st,
                });
            }
        }
    }
}

fn label_stats(cfg: &SpinConfig, graph: &LatticeGraph, pred: &SitePredicate, u: &[f64], mask: &BondMask) -> ClusterStats {
    clusters_by_predicate(cfg, graph, pred, u, mask).stats()
}

/// Runs one grid point of `spec`.
pub fn run_point(spec: &ExperimentSpec, point: &GridPoint) -> Result<PointRecord> {
    let t0 = Instant::now();
    let graph = LatticeGraph::new(spec.lattice, point.size)?;
    let mask = if point.dilution > 0.0 {
        BondMask::dilute(&graph, point.dilution, &mut seeded(spec.seed, mask_stream(point.index)))?
    } else {
        BondMask::full(&graph)
    };
    let params = &point.params;
    let stream = grid_stream(point.index);
    let mut chain = ChainState::new(&graph, params, &mask, spec.start, seeded(spec.seed, stream))?;
    let mut m = Measurer {
        recipe: spec.recipe,
        spec,
        graph: &graph,
        params,
        mask: &mask,
        frame: if params.n >= 3 { Some(AxisFrame::new(&params.axis)?) } else { None },
        regions: c6_regions()?,
        pairs: Vec::new(),
        aux: seeded(spec.seed, aux_stream(point.index)),
        series: Series::default(),
        clusters: Vec::new(),
        violations: 0,
    };
    if spec.recipe == Recipe::CrossingFlatness {
        m.pairs = gradient_pairs(m.frame.as_ref().ok_or_else(|| Error::Config("crossing needs N = 3".into()))?);
    }
    chain.measure(&graph, params, &mask, &spec.schedule, |i, c| m.measure(i, c))?;

    let mut estimates = BTreeMap::new();
    let sites = graph.site_count();
    for (name, values) in m.series.iter() {
        if matches!(name, "magnetization" | "phase_cos" | "phase_sin") || name.starts_with("g_") {
            continue;
        }
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.len() >= crate::stats::MIN_BLOCKS {
            estimates.insert(name.to_string(), Estimate::from_series(&finite)?);
        }
    }
    if let Some(mag) = m.series.get("magnetization") {
        let chi = crate::observables::chi_ising(mag, sites)?;
        estimates.insert(
            "chi_ising_per_site".into(),
            Estimate {
                mean: chi.mean / sites as f64,
                error: chi.error / sites as f64,
                ..chi
            },
        );
        estimates.insert("chi_ising".into(), chi);
    }
    if let (Some(c), Some(s)) = (m.series.get("phase_cos"), m.series.get("phase_sin")) {
        let sums: Vec<(f64, f64)> = c.iter().copied().zip(s.iter().copied()).collect();
        estimates.insert("chi_phi".into(), crate::observables::chi_phi(&sums, sites)?);
    }

    let (mut two_point, mut two_point_fit, mut two_point_fit_error) = (None, None, None);
    if spec.recipe == Recipe::Custom {
        let table = two_point_table(&m.series, graph.size() / 2)?;
        let r: Vec<f64> = table.r.iter().map(|&r| r as f64).collect();
        match fit_eq7(&r, &table.g, &table.error) {
            Ok(f) => two_point_fit = Some(f),
            Err(e) => two_point_fit_error = Some(e.to_string()),
        }
        two_point = Some(table);
    }

    let late: Vec<f64> = SitePredicate::SigmaPlus
        .evaluate(&chain.config, &params.axis)
        .into_iter()
        .map(|b| if b { 1.0 } else { 0.0 })
        .collect();
    let energy = m.series.get("energy").unwrap_or(&[]);
    let occupancy = m.series.get("occupancy_plus").unwrap_or(&[]);
    let diagnostics = ergodicity_diagnostics(
        &[
            TrackedObservable { name: "energy", series: energy, late_sites: None, rows: 0 },
            TrackedObservable {
                name: "occupancy_plus",
                series: occupancy,
                late_sites: Some(&late),
                rows: graph.size(),
            },
        ],
        spec.significance,
    )?;

    Ok(PointRecord {
        point: point.clone(),
        stream,
        series: m.series,
        clusters: m.clusters,
        estimates,
        two_point,
        two_point_fit,
        two_point_fit_error,
        diagnostics: Some(diagnostics),
        sweeps: chain.sweeps,
        acceptance_rate: chain.acceptance_rate(),
        delta: chain.delta,
        strict_checks: chain.checks,
        strict_violations: chain.violations,
        measured_violations: m.violations,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// `G(r)` table from the `g_r` series of a record.
pub fn two_point_table(series: &Series, rmax: usize) -> Result<TwoPointTable> {
    let mut g = Vec::with_capacity(rmax + 1);
    let mut error = Vec::with_capacity(rmax + 1);
    for r in 0..=rmax {
        let col = series
            .get(&format!("g_{r}"))
            .ok_or_else(|| Error::Config(format!("no g_{r} series recorded")))?;
        let (v, e) = jackknife(&[col], DEFAULT_BLOCKS.min(col.len()), |m| m[0])?;
        g.push(v);
        error.push(e);
    }
    g[0] = 1.0;
    error[0] = 0.0;
    Ok(TwoPointTable {
        r: (0..=rmax).collect(),
        g,
        error,
        samples: series.len(),
    })
}

/// Runs every grid point of `spec` and judges the recipe.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    run_experiment_with(spec, run_point)
}

/// [`run_experiment`] with a custom per-point runner.
pub fn run_experiment_with<F>(spec: &ExperimentSpec, runner: F) -> Result<ExperimentOutcome>
where
    F: Fn(&ExperimentSpec, &GridPoint) -> Result<PointRecord> + Sync,
{
    spec.validate()?;
    let t0 = Instant::now();
    let grid = spec.grid()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<PointRecord>> = pool.install(|| grid.par_iter().map(|p| runner(spec, p)).collect());
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (point, res) in grid.iter().zip(results) {
        match res {
            Ok(r) => records.push(r),
            Err(e) => failures.push(PointFailure {
                point: point.clone(),
                error: e.to_string(),
            }),
        }
    }
    let mut verdicts = judge(spec, &records, &failures);
    if spec.recipe == Recipe::Validate {
        verdicts.extend(validation_suite(spec)?);
    }
    Ok(ExperimentOutcome {
        spec: spec.clone(),
        records,
        failures,
        verdicts,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Records grouped by every grid coordinate except the lattice size, each
/// group sorted by size. Groups with a failed point are reported separately.
fn size_groups<'a>(spec: &ExperimentSpec, records: &'a [PointRecord]) -> Vec<(usize, Vec<&'a PointRecord>)> {
    let per = spec.sizes.len();
    let mut groups: BTreeMap<usize, Vec<&PointRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.point.index / per).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by_key(|r| r.point.size);
            (k, v)
        })
        .collect()
}

fn group_label(r: &PointRecord) -> String {
    let p = &r.point;
    let mut s = format!("beta={}", p.params.beta);
    if let Some(e) = p.params.variant.epsilon() {
        s += &format!(",eps={e}");
    }
    if p.dilution > 0.0 {
        s += &format!(",q={}", p.dilution);
    }
    s
}

fn estimate<'a>(r: &'a PointRecord, name: &str) -> Option<&'a Estimate> {
    r.estimates.get(name)
}

/// Power-law fit of an estimate against `L`.
pub fn size_fit(group: &[&PointRecord], name: &str) -> Result<FitResult> {
    let x: Vec<f64> = group.iter().map(|r| r.point.size as f64).collect();
    let mut y = Vec::new();
    let mut e = Vec::new();
    for r in group {
        let est = estimate(r, name).ok_or_else(|| Error::Fit(format!("no {name} estimate at L = {}", r.point.size)))?;
        y.push(est.mean);
        e.push(est.error);
    }
    fit_power_law(&x, &y, &e)
}

/// Whether `name` rises (`up`) or falls with L between every pair of
/// consecutive sizes by more than `k` combined standard errors.
fn monotone(group: &[&PointRecord], name: &str, up: bool, k: f64) -> (bool, Vec<f64>) {
    let mut zs = Vec::new();
    let mut ok = group.len() >= 2;
    for w in group.windows(2) {
        match (estimate(w[0], name), estimate(w[1], name)) {
            (Some(a), Some(b)) => {
                let diff = if up { b.mean - a.mean } else { a.mean - b.mean };
                let z = diff / (a.error.powi(2) + b.error.powi(2)).sqrt();
                ok &= z > k;
                zs.push(z);
            }
            _ => ok = false,
        }
    }
    (ok, zs)
}

/// Paired difference `a - b` across configurations, as an estimate.
fn paired_difference(r: &PointRecord, a: &[f64], b: &[f64]) -> Result<Estimate> {
    let _ = r;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Estimate::from_series(&d)
}

fn judge(spec: &ExperimentSpec, records: &[PointRecord], failures: &[PointFailure]) -> Vec<Verdict> {
    let mut out = Vec::new();
    if !failures.is_empty() {
        out.push(Verdict::new(
            "grid_complete",
            false,
            format!("{} of {} grid points failed", failures.len(), failures.len() + records.len()),
        ));
    }
    match spec.recipe {
        Recipe::C6CapVsStrip => {
            for (_, group) in size_groups(spec, records) {
                out.push(c6_verdict(&group));
            }
            out.push(constraint_verdict(records));
        }
        Recipe::RichardDiscriminator => {
            for (_, group) in size_groups(spec, records) {
                let label = group_label(group[0]);
                let (phi_up, zp) = monotone(&group, "chi_phi", true, 2.0);
                let (is_down, zi) = monotone(&group, "chi_ising_per_site", false, 2.0);
                out.push(Verdict::new(
                    format!("richard[{label}]"),
                    phi_up && is_down,
                    format!(
                        "chi_phi rises with L (z = {}), chi_ising/|V| falls with L (z = {})",
                        fmt_list(&zp),
                        fmt_list(&zi)
                    ),
                ));
            }
            out.push(constraint_verdict(records));
        }
        Recipe::DilutedO2 => {
            let groups = size_groups(spec, records);
            let top_beta = spec.betas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (_, group) in groups {
                let label = group_label(group[0]);
                let q = group[0].point.dilution;
                let (up, zs) = monotone(&group, "chi_phi", true, 2.0);
                let fit = size_fit(&group, "chi_phi");
                let mut v = Verdict::new(
                    format!("diluted_o2[{label}]"),
                    up || group[0].point.params.beta < top_beta,
                    format!(
                        "chi_phi vs L z = {}; dilution {} {} the bond-percolation bound {:.4}; {}",
                        fmt_list(&zs),
                        q,
                        if q < TRIANGULAR_MAX_REMOVAL { "below" } else { "not below" },
                        TRIANGULAR_MAX_REMOVAL,
                        match &fit {
                            Ok(f) => format!("eta = {:.4} ± {:.4}", f.value("eta"), f.error("eta")),
                            Err(e) => format!("fit failed: {e}"),
                        }
                    ),
                );
                if let Ok(f) = &fit {
                    v = v.with("eta", f.value("eta")).with("eta_error", f.error("eta"));
                }
                // only the largest β is expected to be massless
                if group[0].point.params.beta < top_beta {
                    v.detail = format!("(informational) {}", v.detail);
                }
                out.push(v);
            }
        }
        Recipe::CrossingFlatness => {
            for r in records {
                out.extend(crossing_verdicts(spec, r));
            }
        }
        Recipe::FkIdentity => {
            for r in records {
                out.push(fk_identity_verdict(r));
            }
        }
        Recipe::Validate => {
            for r in records {
                out.push(area_verdict(r));
            }
        }
        Recipe::Custom => {}
    }
    out
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2}")).collect();
    format!("[{}]", parts.join(", "))
}

fn c6_verdict(group: &[&PointRecord]) -> Verdict {
    let label = group_label(group[0]);
    let name = format!("c6[{label}]");
    let (fa, fb) = match (size_fit(group, "mean_size_cap"), size_fit(group, "mean_size_strip")) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => {
            let err = a.err().or(b.err()).map(|e| e.to_string()).unwrap_or_default();
            return Verdict::new(name, false, format!("power-law fit failed: {err}"));
        }
    };
    let (ea, sa) = (fa.value("eta"), fa.error("eta"));
    let (eb, sb) = (fb.value("eta"), fb.error("eta"));
    let z = (eb - ea) / (sa * sa + sb * sb).sqrt();
    let good = fa.acceptable(FIT_P_THRESHOLD) && fb.acceptable(FIT_P_THRESHOLD);
    Verdict::new(
        name,
        z >= 2.0 && good,
        format!(
            "eta_cap = {ea:.4} ± {sa:.4} (p = {}), eta_strip = {eb:.4} ± {sb:.4} (p = {}), separation {z:.2} sigma",
            fmt_p(fa.p_value),
            fmt_p(fb.p_value)
        ),
    )
    .with("eta_cap", ea)
    .with("eta_cap_error", sa)
    .with("eta_strip", eb)
    .with("eta_strip_error", sb)
    .with("z", z)
}

fn fmt_p(p: Option<f64>) -> String {
    p.map_or("n/a".into(), |p| format!("{p:.3}"))
}

fn constraint_verdict(records: &[PointRecord]) -> Verdict {
    let strict: u64 = records.iter().map(|r| r.strict_violations).sum();
    let checks: u64 = records.iter().map(|r| r.strict_checks).sum();
    let measured: u64 = records.iter().map(|r| r.measured_violations).sum();
    Verdict::new(
        "constraints",
        strict == 0 && measured == 0,
        format!("{strict} violations in {checks} per-sweep checks, {measured} in measured configurations"),
    )
    .with("violations", (strict + measured) as f64)
    .with("checks", checks as f64)
}

fn crossing_verdicts(spec: &ExperimentSpec, r: &PointRecord) -> Vec<Verdict> {
    let tag = format!("L={},{}", r.point.size, group_label(r));
    let mut out = Vec::new();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    let cs = &spec.c_values;
    for i in 0..cs.len() {
        for j in i + 1..cs.len() {
            let (a, b) = (r.series.get(&crossing_name(cs[i])), r.series.get(&crossing_name(cs[j])));
            if let (Some(a), Some(b)) = (a, b) {
                match paired_difference(r, a, b) {
                    Ok(d) => {
                        let z = d.z_distance(&Estimate::exact(0.0));
                        worst = worst.max(z);
                        parts.push(format!("c={}-{}: {:.2} ± {:.2} (z {:.2})", cs[i], cs[j], d.mean, d.error, z));
                    }
                    Err(e) => parts.push(format!("c={}-{}: {e}", cs[i], cs[j])),
                }
            }
        }
    }
    let means: Vec<String> = cs
        .iter()
        .filter_map(|&c| r.estimates.get(&crossing_name(c)).map(|e| format!("{c}: {:.2} ± {:.2}", e.mean, e.error)))
        .collect();
    out.push(
        Verdict::new(
            format!("crossing_flatness[{tag}]"),
            worst <= 3.0 && parts.len() == cs.len() * (cs.len().saturating_sub(1)) / 2,
            format!("means {}; differences {}", means.join(", "), parts.join("; ")),
        )
        .with("max_z", worst),
    );
    out.push(area_verdict(r));
    let pairs = gradient_pairs(&AxisFrame::new(&r.point.params.axis).expect("N = 3"));
    let series: Vec<Vec<Option<f64>>> = (0..pairs.len())
        .map(|k| {
            r.series
                .get(&format!("gradient_{k}"))
                .unwrap_or(&[])
                .iter()
                .map(|v| v.is_finite().then_some(*v))
                .collect()
        })
        .collect();
    out.push(match gradient_test(&pairs, &series) {
        Ok(g) => Verdict::new(
            format!("gradient[{tag}]"),
            g.pass,
            format!(
                "polar {:.3} ± {:.3}, equatorial {:.3} ± {:.3}, z = {:.2}, empty neighbourhoods {:?}",
                g.pairs[0].1.mean, g.pairs[0].1.error, g.pairs[1].1.mean, g.pairs[1].1.error, g.max_z, g.empty
            ),
        )
        .with("max_z", g.max_z),
        Err(e) => Verdict::new(format!("gradient[{tag}]"), false, e.to_string()),
    });
    out
}

fn area_checks(r: &PointRecord) -> Result<Vec<AreaCheck>> {
    let n = r.point.params.n;
    let hemi = RegionSpec::new(RegionShape::Hemisphere { axis: r.point.params.axis.clone() }, n)?;
    let (cap, strip) = c6_regions()?;
    let mut regions = vec![hemi];
    let mut series = vec![r.series.get("occupancy_plus").unwrap_or(&[]).to_vec()];
    if n == 3 {
        for (region, name) in [(cap, "occupancy_cap"), (strip, "occupancy_strip")] {
            if let Some(s) = r.series.get(name) {
                regions.push(region);
                series.push(s.to_vec());
            }
        }
    }
    area_test(&regions, &series)
}

fn area_verdict(r: &PointRecord) -> Verdict {
    let tag = format!("L={},{}", r.point.size, group_label(r));
    match area_checks(r) {
        Ok(checks) => {
            let parts: Vec<String> = checks
                .iter()
                .map(|c| {
                    format!(
                        "{}: {:.4} ± {:.4} vs {:.4} (z {:.2})",
                        c.region, c.estimate.mean, c.estimate.error, c.expected, c.z
                    )
                })
                .collect();
            let worst = checks.iter().map(|c| c.z).fold(0.0, f64::max);
            Verdict::new(format!("area[{tag}]"), checks.iter().all(|c| c.pass), parts.join("; ")).with("max_z", worst)
        }
        Err(e) => Verdict::new(format!("area[{tag}]"), false, e.to_string()),
    }
}

fn fk_identity_verdict(r: &PointRecord) -> Verdict {
    let tag = format!("L={},{}", r.point.size, group_label(r));
    let sites = (r.point.size * r.point.size) as f64;
    let (Some(mag), Some(fk)) = (r.series.get("magnetization"), r.series.get("fk_mean_size")) else {
        return Verdict::new(format!("fk_identity[{tag}]"), false, "series missing");
    };
    let chi: Vec<f64> = mag.iter().map(|m| m * m / sites).collect();
    match paired_difference(r, &chi, fk) {
        Ok(d) => {
            let z = d.z_distance(&Estimate::exact(0.0));
            let (ci, fm) = (&r.estimates["chi_ising"], &r.estimates["fk_mean_size"]);
            Verdict::new(
                format!("fk_identity[{tag}]"),
                z <= 3.0,
                format!(
                    "chi_ising = {:.4} ± {:.4}, FK mean size = {:.4} ± {:.4}, paired difference {:.4} ± {:.4} (z {:.2})",
                    ci.mean, ci.error, fm.mean, fm.error, d.mean, d.error, z
                ),
            )
            .with("z", z)
        }
        Err(e) => Verdict::new(format!("fk_identity[{tag}]"), false, e.to_string()),
    }
}

/// Exact `χ_Is` of Ising spins on a graph with couplings `J_b` per bond, by
/// enumeration of all `2^|V|` states.
pub fn exact_chi_ising(graph: &LatticeGraph, couplings: &[f64]) -> Result<f64> {
    let n = graph.site_count();
    if n > 20 {
        return Err(Error::Config(format!("enumeration over 2^{n} states is too large")));
    }
    let (mut z, mut m2) = (0.0, 0.0);
    for state in 0u32..(1 << n) {
        let s = |i: usize| if state >> i & 1 == 1 { 1.0 } else { -1.0 };
        let e: f64 = graph.bonds().iter().zip(couplings).map(|(b, j)| j * s(b.i) * s(b.j)).sum();
        let w = e.exp();
        let m: f64 = (0..n).map(s).sum();
        z += w;
        m2 += w * m * m;
    }
    Ok(m2 / z / n as f64)
}

/// Quenched parallel components used by the enumeration check.
pub const ENUMERATION_S_PARALLEL: [f64; 9] = [0.9, 0.35, 0.7, 0.55, 1.0, 0.2, 0.8, 0.6, 0.45];

/// Ising spins embedded in N = 3 vectors with fixed `|s·ẑ|`: the embedded
/// cluster update with reflection axis ẑ is then Swendsen–Wang for couplings
/// `β s∥_i s∥_j`. Returns the FK mean cluster size of every update.
pub fn fk_mean_size_series(graph: &LatticeGraph, s_parallel: &[f64], beta: f64, updates: usize, rng: SimRng) -> Result<Vec<f64>> {
    let params = ModelParams::new(3, beta, Variant::Standard)?;
    let mask = BondMask::full(graph);
    let values: Vec<f64> = s_parallel
        .iter()
        .flat_map(|&p| [(1.0 - p * p).sqrt(), 0.0, p])
        .collect();
    let mut chain = ChainState::from_config(SpinConfig::from_values(3, values)?, graph, &params, &mask, rng)?;
    let axis = params.axis.clone();
    let burn = 100;
    let mut out = Vec::with_capacity(updates);
    for k in 0..burn + updates {
        let rec = embedded_cluster_update(&mut chain, graph, &params, &mask, &axis)?;
        if k >= burn {
            out.push(mean_cluster_size(&rec.fk.clusters));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub size: usize,
    pub configs: usize,
    pub areas: Vec<AreaCheck>,
    pub spin_wrap_rate: f64,
    pub bernoulli_wrap_rate: f64,
    pub wrap_test: TestOutcome,
    pub size_test: TestOutcome,
    pub spin_mean_size: Estimate,
    pub bernoulli_mean_size: Estimate,
    pub both_wrap: usize,
    pub diagnostics: DiagnosticsReport,
    pub pass: bool,
}

/// The β = 0, ε = 2 spin channel against direct Bernoulli(1/2) site
/// percolation: sphere areas of the hemisphere and of the cap of area 4π/3,
/// the wrapping rate of `σ = +1` clusters (two-proportion test) and the
/// distribution of their mean cluster size (two-sample KS test).
pub fn bernoulli_equivalence(
    kind: LatticeKind,
    size: usize,
    configs: usize,
    seed: u64,
    significance: f64,
) -> Result<EquivalenceReport> {
    let graph = LatticeGraph::new(kind, size)?;
    let params = ModelParams::new(3, 0.0, Variant::Standard)?;
    let mask = BondMask::full(&graph);
    let schedule = Schedule {
        thermalization: 50,
        measurements: configs as u64,
        interval: 1,
        ..Schedule::default()
    };
    let mut chain = ChainState::new(&graph, &params, &mask, StartKind::Hot, seeded(seed, 0))?;
    let (cap, _) = c6_regions()?;
    let u = params.axis.clone();
    let (mut hemi, mut capf, mut energy, mut wraps, mut sizes) = (vec![], vec![], vec![], 0usize, vec![]);
    let mut both = 0;
    chain.measure(&graph, &params, &mask, &schedule, |_, c| {
        let plus = SitePredicate::SigmaPlus.evaluate(&c.config, &u);
        let rep = crate::percolation::russo_report(&graph, &plus, &mask);
        hemi.push(plus.iter().filter(|&&b| b).count() as f64 / graph.site_count() as f64);
        capf.push(region_fraction(&c.config, &cap, &u));
        energy.push(energy_per_bond(&c.config, &graph, &mask));
        wraps += rep.e_wraps as usize;
        both += rep.both_wrap as usize;
        sizes.push(rep.e_mean_size);
    })?;
    let mut rng = seeded(seed, 0).clone();
    rng.set_stream(u64::MAX);
    let (mut bwraps, mut bsizes) = (0usize, vec![]);
    for _ in 0..configs {
        let (_, part) = bernoulli_site_mode(&graph, 0.5, &mut rng);
        bwraps += part.percolates() as usize;
        bsizes.push(mean_cluster_size(&part));
    }
    let hemi_region = RegionSpec::new(RegionShape::Hemisphere { axis: u.clone() }, 3)?;
    let areas = area_test(&[hemi_region, cap], &[hemi.clone(), capf])?;
    let wrap_test = two_proportion_test(wraps, configs, bwraps, configs)?;
    let size_test = ks_two_sample(&sizes, &bsizes)?;
    let late: Vec<f64> = SitePredicate::SigmaPlus
        .evaluate(&chain.config, &u)
        .into_iter()
        .map(|b| if b { 1.0 } else { 0.0 })
        .collect();
    let diagnostics = ergodicity_diagnostics(
        &[
            TrackedObservable { name: "energy", series: &energy, late_sites: None, rows: 0 },
            TrackedObservable { name: "occupancy_plus", series: &hemi, late_sites: Some(&late), rows: size },
        ],
        significance,
    )?;
    let pass = areas.iter().all(|a| a.pass) && wrap_test.passes(significance) && size_test.passes(significance);
    Ok(EquivalenceReport {
        size,
        configs,
        areas,
        spin_wrap_rate: wraps as f64 / configs as f64,
        bernoulli_wrap_rate: bwraps as f64 / configs as f64,
        wrap_test,
        size_test,
        spin_mean_size: Estimate::from_series(&sizes)?,
        bernoulli_mean_size: Estimate::from_series(&bsizes)?,
        both_wrap: both,
        diagnostics,
        pass,
    })
}

fn validation_suite(spec: &ExperimentSpec) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    let g3 = LatticeGraph::new_unchecked(LatticeKind::Triangular, 3)?;
    let beta = 1.0;
    let couplings: Vec<f64> = g3
        .bonds()
        .iter()
        .map(|b| beta * ENUMERATION_S_PARALLEL[b.i] * ENUMERATION_S_PARALLEL[b.j])
        .collect();
    let exact = exact_chi_ising(&g3, &couplings)?;
    let series = fk_mean_size_series(&g3, &ENUMERATION_S_PARALLEL, beta, 20_000, seeded(spec.seed, 0))?;
    let mc = Estimate::from_series(&series)?;
    let z = mc.z_distance(&Estimate::exact(exact));
    out.push(
        Verdict::new(
            "fk_identity_enumeration",
            z <= 3.0,
            format!("exact chi_ising = {exact:.6}, FK mean cluster size = {:.6} ± {:.6} (z {z:.2})", mc.mean, mc.error),
        )
        .with("exact", exact)
        .with("z", z),
    );
    let size = spec.sizes[0];
    let eq = bernoulli_equivalence(spec.lattice, size, spec.schedule.measurements as usize, spec.seed, spec.significance)?;
    out.push(
        Verdict::new(
            format!("bernoulli_equivalence[L={size}]"),
            eq.pass,
            format!(
                "wrap rate spin {:.4} vs Bernoulli {:.4} (p {:.3}); mean size KS p {:.3}; areas {}",
                eq.spin_wrap_rate,
                eq.bernoulli_wrap_rate,
                eq.wrap_test.p_value,
                eq.size_test.p_value,
                eq.areas
                    .iter()
                    .map(|a| format!("{} {:.4} ± {:.4}", a.region, a.estimate.mean, a.estimate.error))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        )
        .with("both_wrap", eq.both_wrap as f64),
    );
    out.push(Verdict::new(
        format!("diagnostics_beta0[L={size}]"),
        eq.diagnostics.all_pass(),
        eq.diagnostics
            .checks
            .iter()
            .map(|c| format!("{}: {}", c.name, if c.pass { "pass" } else { "fail" }))
            .collect::<Vec<_>>()
            .join(", "),
    ));
    let control = unthermalized_control(16, 4000, 0.02, spec.seed, spec.significance)?;
    out.push(Verdict::new(
        "diagnostics_negative_control",
        control.p2_failures() > 0,
        match control.checks[0].p2.as_ref() {
            Some(p) => format!("unthermalized energy series: P2 p = {:.3e} (expected to fail)", p.test.p_value),
            None => "unthermalized energy series: P2 undecided (too few effective samples)".into(),
        },
    ));
    Ok(out)
}

/// Index of the value closest to `target`; picks the "typical"
/// configuration, whose mean `sin²θ` is nearest the ensemble mean.
pub fn typical_index(values: &[f64], target: f64) -> Option<usize> {
    (0..values.len()).min_by(|&a, &b| (values[a] - target).abs().total_cmp(&(values[b] - target).abs()))
}

/// Spatial mean of `sin²θ = 1 - (s·u)²`.
pub fn mean_sin2(config: &SpinConfig, u: &[f64]) -> f64 {
    (0..config.len()).map(|i| 1.0 - dot(config.spin(i), u).powi(2)).sum::<f64>() / config.len() as f64
}

/// Unthermalized negative control for the diagnostics: a cold start at
/// β = 0 with no thermalization, a small fixed Metropolis step `delta` and
/// sign flips about the reference axis every sweep. The flips keep the
/// energy mean at zero and decorrelate it within a sweep, while its spread
/// shrinks slowly from the cold-start value, so the two halves of the series
/// have different distributions.
pub fn unthermalized_control(size: usize, sweeps: u64, delta: f64, seed: u64, significance: f64) -> Result<DiagnosticsReport> {
    let graph = LatticeGraph::new(LatticeKind::Triangular, size)?;
    let params = ModelParams::new(3, 0.0, Variant::Standard)?;
    let mask = BondMask::full(&graph);
    let schedule = Schedule {
        thermalization: 0,
        measurements: sweeps,
        cluster_every: 1,
        axis: crate::sampler::ClusterAxis::Reference,
        strict: false,
        ..Schedule::default()
    };
    let mut chain = ChainState::new(&graph, &params, &mask, StartKind::Cold, seeded(seed, grid_stream(0)))?;
    chain.delta = delta;
    let mut energy = Vec::with_capacity(sweeps as usize);
    chain.measure(&graph, &params, &mask, &schedule, |_, c| {
        energy.push(energy_per_bond(&c.config, &graph, &mask));
    })?;
    ergodicity_diagnostics(
        &[TrackedObservable { name: "energy", series: &energy, late_sites: None, rows: 0 }],
        significance,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchedReport {
    pub size: usize,
    pub beta: f64,
    pub full: Estimate,
    pub quenched: Estimate,
    pub mean_sin2: f64,
    pub frame_sin2: f64,
    /// `quenched / full`.
    pub ratio: f64,
}

/// `χ_φ` of the full O(3) model against the O(2) phases with amplitudes
/// frozen from one typical configuration (the snapshot whose mean `sin²θ`
/// is closest to the ensemble mean). Both chains run `sweeps` measurement
/// sweeps after `sweeps / 5` of thermalization.
pub fn quenched_consistency(kind: LatticeKind, size: usize, beta: f64, sweeps: u64, seed: u64) -> Result<QuenchedReport> {
    let graph = LatticeGraph::new(kind, size)?;
    let params = ModelParams::new(3, beta, Variant::Standard)?;
    let mask = BondMask::full(&graph);
    let frame = AxisFrame::new(&params.axis)?;
    let schedule = Schedule {
        thermalization: sweeps / 5,
        measurements: sweeps,
        strict: false,
        ..Schedule::default()
    };
    let stride = (sweeps / 100).max(1);
    let mut chain = ChainState::new(&graph, &params, &mask, StartKind::Hot, seeded(seed, grid_stream(0)))?;
    let (mut sums, mut sin2, mut snapshots) = (Vec::new(), Vec::new(), Vec::new());
    chain.measure(&graph, &params, &mask, &schedule, |i, c| {
        sums.push(phase_sums(&c.config, &frame));
        let v = mean_sin2(&c.config, &params.axis);
        sin2.push(v);
        if i % stride == 0 {
            snapshots.push((v, c.config.clone()));
        }
    })?;
    let sites = graph.site_count();
    let full = crate::observables::chi_phi(&sums, sites)?;
    let mean = sin2.iter().sum::<f64>() / sin2.len() as f64;
    let snap: Vec<f64> = snapshots.iter().map(|s| s.0).collect();
    let pick = typical_index(&snap, mean).ok_or(Error::InsufficientSamples { needed: 1, got: 0 })?;
    let (frame_sin2, cfg) = &snapshots[pick];
    let mut q = QuenchedFrame::from_config(cfg, &params.axis)?;
    let mut rng = seeded(seed, aux_stream(0));
    for _ in 0..schedule.thermalization {
        let st = quenched_phi_sweep(&mut q, beta, &graph, &mask, &mut rng);
        q.tune(&st);
    }
    let mut qsums = Vec::with_capacity(sweeps as usize);
    for _ in 0..sweeps {
        quenched_phi_sweep(&mut q, beta, &graph, &mask, &mut rng);
        qsums.push(phase_sums_of(&q.phi));
    }
    let quenched = crate::observables::chi_phi(&qsums, sites)?;
    Ok(QuenchedReport {
        size,
        beta,
        ratio: quenched.mean / full.mean,
        full,
        quenched,
        mean_sin2: mean,
        frame_sin2: *frame_sin2,
    })
}
