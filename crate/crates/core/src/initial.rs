//! Initial cell number densities.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::MassGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionKind {
    Constant,
    Beta,
    SmallToMedium,
    TwoNormalPeak,
}

impl DistributionKind {
    pub const ALL: [DistributionKind; 4] = [
        DistributionKind::Constant,
        DistributionKind::Beta,
        DistributionKind::SmallToMedium,
        DistributionKind::TwoNormalPeak,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistributionKind::Constant => "constant",
            DistributionKind::Beta => "beta",
            DistributionKind::SmallToMedium => "small_to_medium",
            DistributionKind::TwoNormalPeak => "two_normal_peak",
        }
    }
}

impl fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistributionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistributionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::config(
                    "distribution.kind",
                    format!("unknown kind `{s}` (constant, beta, small_to_medium, two_normal_peak)"),
                )
            })
    }
}

/// Shape and normalization of the initial density.
///
/// Only the parameters of the selected `kind` are used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    /// Cells per ml.
    pub total_cells: f64,
    /// Beta shape parameters, on the mass interval mapped to [0, 1].
    pub a: f64,
    pub b: f64,
    /// Small-to-medium: plateau up to `cutoff`, smoothstep down to zero over `taper`.
    pub cutoff: f64,
    pub taper: f64,
    /// Two normal peaks; `weight` is the share of the second peak.
    pub mean1: f64,
    pub mean2: f64,
    pub sd1: f64,
    pub sd2: f64,
    pub weight: f64,
}

impl Default for DistributionSpec {
    fn default() -> Self {
        Self {
            kind: DistributionKind::Constant,
            total_cells: 1e6,
            a: 2.0,
            b: 5.0,
            cutoff: 0.3784,
            taper: 0.8525 - 0.3784,
            mean1: 0.25 * 0.999,
            mean2: 0.6 * 0.999,
            sd1: 0.05,
            sd2: 0.05,
            weight: 0.5,
        }
    }
}

impl DistributionSpec {
    pub fn with_kind(kind: DistributionKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be > 0, got {v}")))
            }
        };
        pos("distribution.total_cells", self.total_cells)?;
        match self.kind {
            DistributionKind::Constant => {}
            DistributionKind::Beta => {
                pos("distribution.a", self.a)?;
                pos("distribution.b", self.b)?;
            }
            DistributionKind::SmallToMedium => {
                if !self.cutoff.is_finite() {
                    return Err(Error::config("distribution.cutoff", "must be finite"));
                }
                pos("distribution.taper", self.taper)?;
            }
            DistributionKind::TwoNormalPeak => {
                pos("distribution.sd1", self.sd1)?;
                pos("distribution.sd2", self.sd2)?;
                if !(self.mean1.is_finite() && self.mean2.is_finite()) {
                    return Err(Error::config("distribution.mean1", "must be finite"));
                }
                if !(0.0..=1.0).contains(&self.weight) {
                    return Err(Error::config("distribution.weight", "must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Unnormalized shape at mass `m`.
    fn shape(&self, m: f64, grid: &MassGrid) -> f64 {
        match self.kind {
            DistributionKind::Constant => 1.0,
            DistributionKind::Beta => {
                let x = (m - grid.m_min) / (grid.m_max - grid.m_min);
                x.powf(self.a - 1.0) * (1.0 - x).powf(self.b - 1.0)
            }
            DistributionKind::SmallToMedium => {
                let x = ((m - self.cutoff) / self.taper).clamp(0.0, 1.0);
                1.0 - x * x * (3.0 - 2.0 * x)
            }
            DistributionKind::TwoNormalPeak => {
                let gauss = |mu: f64, sd: f64| {
                    let z = (m - mu) / sd;
                    (-0.5 * z * z).exp() / sd
                };
                (1.0 - self.weight) * gauss(self.mean1, self.sd1)
                    + self.weight * gauss(self.mean2, self.sd2)
            }
        }
    }
}

/// Samples the shape at cell centers and rescales so that `sum w_i dm`
/// equals `total_cells`.
pub fn build_initial_density(spec: &DistributionSpec, grid: &MassGrid) -> Result<Vec<f64>> {
    spec.validate()?;
    let raw: Vec<f64> = grid.centers().iter().map(|&m| spec.shape(m, grid)).collect();
    let mass = grid.total(&raw);
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::config(
            "distribution.kind",
            format!("{} shape has no mass on the grid", spec.kind),
        ));
    }
    let scale = spec.total_cells / mass;
    Ok(raw.into_iter().map(|v| v * scale).collect())
}
