//! O(N) spin configurations, action variants and the hemispherical Ising
//! projection.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BondMask, LatticeGraph};

const UNIT_TOL: f64 = 1e-12;

/// Action variant. All variants share the ferromagnetic weight
/// `exp(+β Σ s_i·s_j)`; `Cut` and `Richard` multiply it by hard constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Variant {
    Standard,
    /// Every present bond must satisfy `|s_i - s_j| < epsilon`.
    Cut { epsilon: f64 },
    /// Every site must satisfy `|s·u| < 1 - b`; optionally also cut.
    Richard { b: f64, epsilon: Option<f64> },
}

impl Variant {
    pub fn epsilon(&self) -> Option<f64> {
        match *self {
            Variant::Standard => None,
            Variant::Cut { epsilon } => Some(epsilon),
            Variant::Richard { epsilon, .. } => epsilon,
        }
    }

    pub fn richard_bound(&self) -> Option<f64> {
        match *self {
            Variant::Richard { b, .. } => Some(1.0 - b),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Variant::Standard => "standard".into(),
            Variant::Cut { epsilon } => format!("cut(eps={epsilon})"),
            Variant::Richard { b, epsilon: None } => format!("richard(b={b})"),
            Variant::Richard { b, epsilon: Some(e) } => format!("richard(b={b},eps={e})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub beta: f64,
    pub variant: Variant,
    /// Reference axis of the hemispherical decomposition.
    pub axis: Vec<f64>,
}

impl ModelParams {
    /// Parameters with the default reference axis (last coordinate axis).
    pub fn new(n: usize, beta: f64, variant: Variant) -> Result<Self> {
        let mut axis = vec![0.0; n.max(1)];
        if let Some(last) = axis.last_mut() {
            *last = 1.0;
        }
        Self::with_axis(n, beta, variant, axis)
    }

    pub fn with_axis(n: usize, beta: f64, variant: Variant, axis: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("spin dimension must be >= 2, got {n}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {beta}")));
        }
        if axis.len() != n {
            return Err(Error::Config(format!(
                "axis has {} components, expected {n}",
                axis.len()
            )));
        }
        if (norm(&axis) - 1.0).abs() > UNIT_TOL {
            return Err(Error::Config("reference axis must be a unit vector".into()));
        }
        if let Some(eps) = variant.epsilon() {
            if !(eps > 0.0 && eps < 2.0) {
                return Err(Error::Config(format!("epsilon must be in (0, 2), got {eps}")));
            }
        }
        if let Variant::Richard { b, .. } = variant {
            if n != 3 {
                return Err(Error::Config("the Richard variant requires N = 3".into()));
            }
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("richard b must be in (0, 1), got {b}")));
            }
        }
        Ok(Self {
            n,
            beta,
            variant,
            axis,
        })
    }

    /// `d = ε/2` for variants carrying a cut.
    pub fn d(&self) -> Option<f64> {
        self.variant.epsilon().map(|e| e / 2.0)
    }

    /// Whether a single-site value satisfies the site constraint.
    #[inline]
    pub fn site_ok(&self, s: &[f64]) -> bool {
        match self.variant.richard_bound() {
            Some(bound) => dot(s, &self.axis).abs() < bound,
            None => true,
        }
    }

    /// Whether a pair of neighbouring values satisfies the bond constraint.
    #[inline]
    pub fn bond_ok(&self, a: &[f64], b: &[f64]) -> bool {
        match self.variant.epsilon() {
            Some(eps) => cut_feasible(a, b, eps),
            None => true,
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `|a - b| < epsilon`, strictly.
#[inline]
pub fn cut_feasible(a: &[f64], b: &[f64], epsilon: f64) -> bool {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    d2 < epsilon * epsilon
}

/// Reflection through the plane orthogonal to `u`: `s - 2 (s·u) u`.
#[inline]
pub fn reflect(s: &mut [f64], u: &[f64]) {
    let p = 2.0 * dot(s, u);
    for (x, ux) in s.iter_mut().zip(u) {
        *x -= p * ux;
    }
}

/// Uniform random unit vector in `n` dimensions.
pub fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let r = norm(&v);
        if r > 1e-8 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// Orthonormal vectors completing `u` to a frame, by Gram–Schmidt over the
/// coordinate axes. For `u` = last axis this returns the remaining axes in
/// order.
pub fn complete_frame(u: &[f64]) -> Vec<Vec<f64>> {
    let n = u.len();
    let mut basis: Vec<Vec<f64>> = vec![u.to_vec()];
    for k in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        for b in &basis {
            let p = dot(&v, b);
            for (x, bx) in v.iter_mut().zip(b) {
                *x -= p * bx;
            }
        }
        let r = norm(&v);
        if r > 1e-6 {
            v.iter_mut().for_each(|x| *x /= r);
            basis.push(v);
        }
    }
    basis.remove(0);
    basis
}

/// One unit N-vector per site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinConfig {
    n: usize,
    values: Vec<f64>,
    /// Number of sweeps applied since initialization.
    pub generation: u64,
}

impl SpinConfig {
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 || !values.len().is_multiple_of(n) {
            return Err(Error::Config(format!(
                "spin array of length {} is not a multiple of N = {n}",
                values.len()
            )));
        }
        let cfg = Self {
            n,
            values,
            generation: 0,
        };
        for i in 0..cfg.len() {
            if (norm(cfg.spin(i)) - 1.0).abs() > UNIT_TOL {
                return Err(Error::Infeasible(format!("spin {i} is not a unit vector")));
            }
        }
        Ok(cfg)
    }

    /// Every site set to `direction`.
    pub fn uniform(n: usize, sites: usize, direction: &[f64]) -> Self {
        assert_eq!(direction.len(), n);
        let mut values = Vec::with_capacity(n * sites);
        for _ in 0..sites {
            values.extend_from_slice(direction);
        }
        Self {
            n,
            values,
            generation: 0,
        }
    }

    /// Ordered start: all spins along the reference axis, or along the first
    /// perpendicular axis when the Richard constraint excludes the poles.
    pub fn cold(params: &ModelParams, sites: usize) -> Self {
        let dir = match params.variant {
            Variant::Richard { .. } => complete_frame(&params.axis).remove(0),
            _ => params.axis.clone(),
        };
        Self::uniform(params.n, sites, &dir)
    }

    /// Disordered start. Without a cut, spins are i.i.d. uniform (rejecting
    /// draws that violate the Richard bound). With a cut, every site gets the
    /// same uniformly drawn feasible direction and disorder is left to
    /// thermalization.
    pub fn hot<R: Rng + ?Sized>(params: &ModelParams, sites: usize, rng: &mut R) -> Self {
        let draw = |rng: &mut R| loop {
            let s = random_unit(params.n, rng);
            if params.site_ok(&s) {
                return s;
            }
        };
        if params.variant.epsilon().is_some() {
            let dir = draw(rng);
            return Self::uniform(params.n, sites, &dir);
        }
        let mut values = Vec::with_capacity(params.n * sites);
        for _ in 0..sites {
            values.extend(draw(rng));
        }
        Self {
            n: params.n,
            values,
            generation: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn spin(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn spin_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f` to every spin; the result is renormalized.
    pub fn map_spins(&mut self, mut f: impl FnMut(&[f64]) -> Vec<f64>) {
        for i in 0..self.len() {
            let mut v = f(self.spin(i));
            let r = norm(&v);
            v.iter_mut().for_each(|x| *x /= r);
            self.spin_mut(i).copy_from_slice(&v);
        }
    }

    /// Largest deviation of `|s_i|` from 1.
    pub fn max_norm_error(&self) -> f64 {
        (0..self.len())
            .map(|i| (norm(self.spin(i)) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Number of site and bond constraint violations (including non-unit
    /// spins) under `params` and `mask`.
    pub fn violation_count(&self, graph: &LatticeGraph, params: &ModelParams, mask: &BondMask) -> usize {
        let mut bad = (0..self.len())
            .filter(|&i| (norm(self.spin(i)) - 1.0).abs() > UNIT_TOL || !params.site_ok(self.spin(i)))
            .count();
        if params.variant.epsilon().is_some() {
            bad += graph
                .bonds()
                .iter()
                .enumerate()
                .filter(|(b, bond)| mask.is_present(*b) && !params.bond_ok(self.spin(bond.i), self.spin(bond.j)))
                .count();
        }
        bad
    }

    pub fn check_feasible(&self, graph: &LatticeGraph, params: &ModelParams, mask: &BondMask) -> Result<()> {
        if self.n != params.n || self.len() != graph.site_count() {
            return Err(Error::Config(format!(
                "configuration shape N={} x {} does not match N={} x {}",
                self.n,
                self.len(),
                params.n,
                graph.site_count()
            )));
        }
        match self.violation_count(graph, params, mask) {
            0 => Ok(()),
            k => Err(Error::Infeasible(format!("{k} constraint violations"))),
        }
    }
}

/// `Σ s_i·s_j` over present bonds. The Gibbs weight is `exp(β · value)`.
pub fn total_action(
    config: &SpinConfig,
    graph: &LatticeGraph,
    params: &ModelParams,
    mask: &BondMask,
) -> Result<f64> {
    config.check_feasible(graph, params, mask)?;
    Ok(bond_energy_sum(config, graph, mask))
}

/// Unchecked `Σ s_i·s_j` over present bonds.
pub fn bond_energy_sum(config: &SpinConfig, graph: &LatticeGraph, mask: &BondMask) -> f64 {
    graph
        .bonds()
        .iter()
        .enumerate()
        .filter(|(b, _)| mask.is_present(*b))
        .map(|(_, bond)| dot(config.spin(bond.i), config.spin(bond.j)))
        .sum()
}

/// Per-site hemisphere label and the magnitudes of the parallel and
/// perpendicular components relative to the reference axis.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingProjection {
    pub sigma: Vec<i8>,
    pub s_parallel: Vec<f64>,
    pub s_perp_norm: Vec<f64>,
}

/// Splits each spin into `σ = sign(s·u)` (ties go to `+1`), `|s·u|` and
/// `|s - (s·u) u|`.
pub fn hemisphere_decompose(config: &SpinConfig, u: &[f64]) -> IsingProjection {
    let sites = config.len();
    let mut sigma = Vec::with_capacity(sites);
    let mut s_parallel = Vec::with_capacity(sites);
    let mut s_perp_norm = Vec::with_capacity(sites);
    for i in 0..sites {
        let s = config.spin(i);
        let p = dot(s, u);
        sigma.push(if p >= 0.0 { 1 } else { -1 });
        s_parallel.push(p.abs());
        let perp2: f64 = s.iter().zip(u).map(|(x, ux)| (x - p * ux).powi(2)).sum();
        s_perp_norm.push(perp2.sqrt());
    }
    IsingProjection {
        sigma,
        s_parallel,
        s_perp_norm,
    }
}

/// Polar and azimuthal angles of an N = 3 spin about `u`, with the azimuth
/// measured in the frame returned by [`complete_frame`].
pub fn spherical_angles(s: &[f64], frame: &AxisFrame) -> (f64, f64) {
    let z = dot(s, &frame.u).clamp(-1.0, 1.0);
    let x = dot(s, &frame.e1);
    let y = dot(s, &frame.e2);
    (z.acos(), y.atan2(x))
}

/// Reference axis plus two perpendicular unit vectors (N >= 3).
#[derive(Debug, Clone)]
pub struct AxisFrame {
    pub u: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
}

impl AxisFrame {
    pub fn new(u: &[f64]) -> Result<Self> {
        if u.len() < 3 {
            return Err(Error::Config("azimuthal angles need N >= 3".into()));
        }
        let mut rest = complete_frame(u);
        let e1 = rest.remove(0);
        let e2 = rest.remove(0);
        Ok(Self { u: u.to_vec(), e1, e2 })
    }
}
