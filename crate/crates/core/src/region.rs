//! Regions of the target sphere used for region clusters and the
//! area-preservation test.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum RegionShape {
    /// `s·u > cos(theta0)`.
    Cap { theta0: f64 },
    /// `|s·u| < d`.
    Strip { d: f64 },
    /// `s·v > 0`.
    Hemisphere { axis: Vec<f64> },
    /// `c1 < s·u < c2`.
    TiltedBand { c1: f64, c2: f64 },
    /// Every direction.
    Full,
}

/// A region together with its spherical area `volume` and boundary length
/// `boundary`. Both are closed forms for N = 3 and `None` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub shape: RegionShape,
    pub n: usize,
    pub volume: Option<f64>,
    pub boundary: Option<f64>,
}

/// Area of the unit sphere S^{n-1}.
pub fn sphere_area(n: usize) -> f64 {
    // 2 π^{n/2} / Γ(n/2)
    let half = n as f64 / 2.0;
    2.0 * PI.powf(half) / statrs::function::gamma::gamma(half)
}

impl RegionSpec {
    pub fn new(shape: RegionShape, n: usize) -> Result<Self> {
        match &shape {
            RegionShape::Cap { theta0 } if !(*theta0 > 0.0 && *theta0 < PI) => {
                return Err(Error::Config(format!("cap angle must be in (0, π), got {theta0}")))
            }
            RegionShape::Strip { d } if !(*d > 0.0 && *d < 1.0) => {
                return Err(Error::Config(format!("strip half-width must be in (0, 1), got {d}")))
            }
            RegionShape::TiltedBand { c1, c2 } if !(-1.0 <= *c1 && c1 < c2 && *c2 <= 1.0) => {
                return Err(Error::Config(format!("band needs -1 <= c1 < c2 <= 1, got ({c1}, {c2})")))
            }
            RegionShape::Hemisphere { axis } if axis.len() != n => {
                return Err(Error::Config("hemisphere axis has the wrong dimension".into()))
            }
            _ => {}
        }
        let (volume, boundary) = if n == 3 {
            let (v, s) = match &shape {
                RegionShape::Cap { theta0 } => (2.0 * PI * (1.0 - theta0.cos()), 2.0 * PI * theta0.sin()),
                RegionShape::Strip { d } => (4.0 * PI * d, 4.0 * PI * (1.0 - d * d).sqrt()),
                RegionShape::Hemisphere { .. } => (2.0 * PI, 2.0 * PI),
                RegionShape::TiltedBand { c1, c2 } => (
                    2.0 * PI * (c2 - c1),
                    2.0 * PI * ((1.0 - c1 * c1).sqrt() + (1.0 - c2 * c2).sqrt()),
                ),
                RegionShape::Full => (4.0 * PI, 0.0),
            };
            (Some(v), Some(s))
        } else if matches!(shape, RegionShape::Full) {
            (Some(sphere_area(n)), Some(0.0))
        } else if matches!(shape, RegionShape::Hemisphere { .. }) {
            (Some(sphere_area(n) / 2.0), None)
        } else {
            (None, None)
        };
        Ok(Self {
            shape,
            n,
            volume,
            boundary,
        })
    }

    /// Polar cap (about the reference axis) of spherical area `area`, N = 3.
    pub fn cap_with_area(area: f64) -> Result<Self> {
        let c = 1.0 - area / (2.0 * PI);
        Self::new(RegionShape::Cap { theta0: c.clamp(-1.0, 1.0).acos() }, 3)
    }

    /// Equatorial strip of spherical area `area`, N = 3.
    pub fn strip_with_area(area: f64) -> Result<Self> {
        Self::new(RegionShape::Strip { d: area / (4.0 * PI) }, 3)
    }

    /// Fraction of the sphere covered, when the area is known.
    pub fn sphere_fraction(&self) -> Option<f64> {
        match self.shape {
            RegionShape::Full => Some(1.0),
            RegionShape::Hemisphere { .. } => Some(0.5),
            _ => self.volume.map(|v| v / sphere_area(self.n)),
        }
    }

    pub fn contains(&self, s: &[f64], u: &[f64]) -> bool {
        region_membership(s, self, u)
    }

    pub fn label(&self) -> String {
        match &self.shape {
            RegionShape::Cap { theta0 } => format!("cap({theta0:.6})"),
            RegionShape::Strip { d } => format!("strip({d:.6})"),
            RegionShape::Hemisphere { axis } => format!("hemisphere({axis:?})"),
            RegionShape::TiltedBand { c1, c2 } => format!("band({c1:.6},{c2:.6})"),
            RegionShape::Full => "full".to_string(),
        }
    }
}

pub fn region_membership(s: &[f64], region: &RegionSpec, u: &[f64]) -> bool {
    match &region.shape {
        RegionShape::Cap { theta0 } => dot(s, u) > theta0.cos(),
        RegionShape::Strip { d } => dot(s, u).abs() < *d,
        RegionShape::Hemisphere { axis } => dot(s, axis) > 0.0,
        RegionShape::TiltedBand { c1, c2 } => {
            let p = dot(s, u);
            *c1 < p && p < *c2
        }
        RegionShape::Full => true,
    }
}
