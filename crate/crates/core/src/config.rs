//! Experiment specifications.
//!
//! A spec file is TOML with optional sections; every field may be left out
//! and is then taken from the recipe's preset. Grid-valued fields accept a
//! number, an array, or a comma list such as `"16, 32, 64"`.
//!
//! ```toml
//! recipe = "c6_cap_vs_strip"
//! seed = 7
//! output = "runs/c6"
//!
//! [model]
//! n = 3
//! beta = 0.0
//! variant = "cut"
//! epsilon = "0.6"
//!
//! [lattice]
//! sizes = "16, 32, 64"
//!
//! [schedule]
//! thermalization = 2000
//! measurements = 10000
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeGraph, LatticeKind};
use crate::sampler::{ClusterAxis, Schedule, StartKind, SweepOrder};
use crate::spin::{ModelParams, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    Validate,
    C6CapVsStrip,
    RichardDiscriminator,
    DilutedO2,
    CrossingFlatness,
    FkIdentity,
    Custom,
}

impl Recipe {
    pub const ALL: [Recipe; 7] = [
        Recipe::Validate,
        Recipe::C6CapVsStrip,
        Recipe::RichardDiscriminator,
        Recipe::DilutedO2,
        Recipe::CrossingFlatness,
        Recipe::FkIdentity,
        Recipe::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::Validate => "validate",
            Recipe::C6CapVsStrip => "c6_cap_vs_strip",
            Recipe::RichardDiscriminator => "richard_discriminator",
            Recipe::DilutedO2 => "diluted_o2",
            Recipe::CrossingFlatness => "crossing_flatness",
            Recipe::FkIdentity => "fk_identity",
            Recipe::Custom => "custom",
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Recipe::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown recipe `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Standard,
    Cut,
    Richard,
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(VariantKind::Standard),
            "cut" => Ok(VariantKind::Cut),
            "richard" => Ok(VariantKind::Richard),
            _ => Err(Error::Config(format!("unknown variant `{s}`"))),
        }
    }
}

/// A grid as written in a spec file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum GridValue {
    One(f64),
    Many(Vec<f64>),
    Text(String),
}

impl GridValue {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            GridValue::One(x) => vec![*x],
            GridValue::Many(xs) => xs.clone(),
            GridValue::Text(s) => parse_list(s)?,
        };
        if v.is_empty() {
            return Err(Error::Config("grid must not be empty".into()));
        }
        Ok(v)
    }
}

/// Parses a comma list of numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| Error::Config(format!("bad number `{t}` in list: {e}"))))
        .collect()
}

fn to_sizes(v: &[f64]) -> Result<Vec<usize>> {
    v.iter()
        .map(|&x| {
            if x.fract() == 0.0 && x >= 1.0 {
                Ok(x as usize)
            } else {
                Err(Error::Config(format!("lattice size must be a positive integer, got {x}")))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: Option<usize>,
    pub beta: Option<GridValue>,
    pub variant: Option<VariantKind>,
    pub epsilon: Option<GridValue>,
    pub richard_b: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub kind: Option<LatticeKind>,
    pub sizes: Option<GridValue>,
    pub dilution: Option<GridValue>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub thermalization: Option<u64>,
    pub measurements: Option<u64>,
    pub interval: Option<u64>,
    pub cluster_every: Option<u64>,
    pub axis: Option<ClusterAxis>,
    pub order: Option<SweepOrder>,
    pub start: Option<StartKind>,
    pub strict: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub significance: Option<f64>,
    pub c_values: Option<GridValue>,
    pub threads: Option<usize>,
}

/// A partially specified experiment, as read from a file or the command
/// line. Unset fields fall back to the recipe preset.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpec {
    pub recipe: Option<Recipe>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, [$($f:ident),*]) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RawSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid spec file: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(&mut self, other: &RawSpec) {
        overlay!(self, other, [recipe, seed, output]);
        overlay!(self.model, other.model, [n, beta, variant, epsilon, richard_b]);
        overlay!(self.lattice, other.lattice, [kind, sizes, dilution]);
        overlay!(
            self.schedule,
            other.schedule,
            [thermalization, measurements, interval, cluster_every, axis, order, start, strict]
        );
        overlay!(self.analysis, other.analysis, [significance, c_values, threads]);
    }

    pub fn resolve(&self, recipe: Option<Recipe>) -> Result<ExperimentSpec> {
        let recipe = recipe
            .or(self.recipe)
            .ok_or_else(|| Error::Config("no recipe given".into()))?;
        let mut spec = ExperimentSpec::preset(recipe);
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(o) = &self.output {
            spec.output = o.clone();
        }
        let m = &self.model;
        if let Some(n) = m.n {
            spec.n = n;
        }
        if let Some(b) = &m.beta {
            spec.betas = b.values()?;
        }
        if let Some(v) = m.variant {
            spec.variant = v;
        }
        if let Some(e) = &m.epsilon {
            spec.epsilons = e.values()?;
        }
        if let Some(b) = m.richard_b {
            spec.richard_b = b;
        }
        let l = &self.lattice;
        if let Some(k) = l.kind {
            spec.lattice = k;
        }
        if let Some(s) = &l.sizes {
            spec.sizes = to_sizes(&s.values()?)?;
        }
        if let Some(d) = &l.dilution {
            spec.dilutions = d.values()?;
        }
        let s = &self.schedule;
        let sch = &mut spec.schedule;
        overlay_value(&mut sch.thermalization, s.thermalization);
        overlay_value(&mut sch.measurements, s.measurements);
        overlay_value(&mut sch.interval, s.interval);
        overlay_value(&mut sch.cluster_every, s.cluster_every);
        overlay_value(&mut sch.axis, s.axis);
        overlay_value(&mut sch.order, s.order);
        overlay_value(&mut sch.strict, s.strict);
        overlay_value(&mut spec.start, s.start);
        let a = &self.analysis;
        overlay_value(&mut spec.significance, a.significance);
        if let Some(c) = &a.c_values {
            spec.c_values = c.values()?;
        }
        if a.threads.is_some() {
            spec.threads = a.threads;
        }
        if spec.variant == VariantKind::Cut && spec.epsilons.is_empty() {
            return Err(Error::Config("the cut variant needs an epsilon grid".into()));
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn overlay_value<T: Copy>(dst: &mut T, src: Option<T>) {
    if let Some(v) = src {
        *dst = v;
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub recipe: Recipe,
    pub seed: u64,
    pub output: PathBuf,
    pub lattice: LatticeKind,
    pub sizes: Vec<usize>,
    pub n: usize,
    pub betas: Vec<f64>,
    pub variant: VariantKind,
    /// Cut widths; for the Richard variant an empty grid means no cut.
    pub epsilons: Vec<f64>,
    pub richard_b: f64,
    pub dilutions: Vec<f64>,
    pub schedule: Schedule,
    pub start: StartKind,
    pub significance: f64,
    pub c_values: Vec<f64>,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
}

/// One point of the parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub size: usize,
    pub params: ModelParams,
    pub dilution: f64,
}

impl ExperimentSpec {
    pub fn preset(recipe: Recipe) -> Self {
        let base = Self {
            recipe,
            seed: 1,
            output: PathBuf::from(format!("runs/{}", recipe.name())),
            lattice: LatticeKind::Triangular,
            sizes: vec![16],
            n: 3,
            betas: vec![1.0],
            variant: VariantKind::Standard,
            epsilons: Vec::new(),
            richard_b: 0.5,
            dilutions: vec![0.0],
            schedule: Schedule {
                thermalization: 1000,
                measurements: 5000,
                ..Schedule::default()
            },
            start: StartKind::Hot,
            significance: 0.05,
            c_values: vec![0.0, 0.2, 0.4],
            threads: None,
        };
        match recipe {
            Recipe::Validate => Self {
                sizes: vec![32],
                betas: vec![0.0, 1.0],
                schedule: Schedule { thermalization: 200, measurements: 2000, ..base.schedule.clone() },
                ..base
            },
            Recipe::C6CapVsStrip => Self {
                sizes: vec![16, 32, 64],
                betas: vec![0.0],
                variant: VariantKind::Cut,
                epsilons: vec![0.6],
                schedule: Schedule { thermalization: 2000, measurements: 60000, ..base.schedule.clone() },
                ..base
            },
            Recipe::RichardDiscriminator => Self {
                sizes: vec![16, 32, 64],
                betas: vec![1.0],
                variant: VariantKind::Richard,
                epsilons: vec![0.5],
                schedule: Schedule { thermalization: 2000, measurements: 5000, ..base.schedule.clone() },
                ..base
            },
            Recipe::DilutedO2 => Self {
                sizes: vec![16, 32, 64],
                n: 2,
                betas: vec![0.4, 1.5],
                dilutions: vec![0.2],
                ..base
            },
            Recipe::CrossingFlatness => Self {
                sizes: vec![64],
                betas: vec![1.5],
                ..base
            },
            Recipe::FkIdentity => Self {
                betas: vec![0.5, 1.0],
                ..base
            },
            Recipe::Custom => base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.betas.is_empty() || self.dilutions.is_empty() {
            return Err(Error::Config("grids must be non-empty".into()));
        }
        self.schedule.validate()?;
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::Config(format!("significance must be in (0, 1), got {}", self.significance)));
        }
        for &l in &self.sizes {
            LatticeGraph::new(self.lattice, l)?;
        }
        for &q in &self.dilutions {
            if !(0.0..1.0).contains(&q) {
                return Err(Error::Config(format!("dilution must be in [0, 1), got {q}")));
            }
        }
        if self.recipe == Recipe::CrossingFlatness && self.n != 3 {
            return Err(Error::Config("crossing statistics need N = 3".into()));
        }
        for &c in &self.c_values {
            if !(0.0..=0.9).contains(&c) {
                return Err(Error::Config(format!("tilt c must be in [0, 0.9], got {c}")));
            }
        }
        self.grid().map(|_| ())
    }

    fn variant_for(&self, epsilon: Option<f64>) -> Variant {
        match self.variant {
            VariantKind::Standard => Variant::Standard,
            // a cut of width 2 or more never binds
            VariantKind::Cut => match epsilon {
                Some(e) if e < 2.0 => Variant::Cut { epsilon: e },
                _ => Variant::Standard,
            },
            VariantKind::Richard => Variant::Richard {
                b: self.richard_b,
                epsilon: epsilon.filter(|&e| e < 2.0),
            },
        }
    }

    /// Grid points in a fixed order: β outermost, then ε, dilution, size.
    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        let eps: Vec<Option<f64>> = if self.epsilons.is_empty() {
            vec![None]
        } else {
            self.epsilons.iter().map(|&e| Some(e)).collect()
        };
        let mut out = Vec::new();
        for &beta in &self.betas {
            for &e in &eps {
                for &q in &self.dilutions {
                    for &size in &self.sizes {
                        let params = ModelParams::new(self.n, beta, self.variant_for(e))?;
                        out.push(GridPoint {
                            index: out.len(),
                            size,
                            params,
                            dilution: q,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}
