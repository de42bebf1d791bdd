//! TOML experiment configuration. Every section is optional; missing keys
//! fall back to the defaults of the chosen subcommand.

use serde::Deserialize;

use stokes_regularity::geometry::{Shape, StarDomain};
use stokes_regularity::stokes::MacGrid;

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub experiment: ExperimentSection,
    pub domain: DomainSection,
    pub time: TimeSection,
    pub forcing: ForcingSection,
    pub norms: NormsSection,
    pub bogovskii: BogovskiiSection,
    pub helmholtz: HelmholtzSection,
    pub stokes: StokesSection,
    pub transform: TransformSection,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: Option<u64>,
    /// Grid resolutions, strictly increasing. Defaults depend on the subcommand.
    pub resolutions: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    /// `ball`, `cube`, `cuboid` or `ellipsoid`. Unset means the default of
    /// the subcommand (the unit ball, or the unit square for sweeps).
    pub shape: Option<String>,
    pub dim: usize,
    /// Defaults to the origin, or to the cube centre `(1/2, ..)` for the
    /// default sweep domain.
    pub center: Option<Vec<f64>>,
    pub scale: f64,
    pub half_extents: Option<Vec<f64>>,
    pub semi_axes: Option<Vec<f64>>,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection {
            shape: None,
            dim: 2,
            center: None,
            scale: 1.0,
            half_extents: None,
            semi_axes: None,
        }
    }
}

impl DomainSection {
    /// The configured domain, with `default_shape` when none is set.
    pub fn star_domain(&self, default_shape: &str) -> Result<StarDomain> {
        let name = self.shape.as_deref().unwrap_or(default_shape);
        let shape = match name {
            "ball" => Shape::Ball,
            "cube" => Shape::Cube,
            "cuboid" => Shape::Cuboid {
                half_extents: self
                    .half_extents
                    .clone()
                    .ok_or_else(|| HarnessError::Config("cuboid needs domain.half_extents".into()))?,
            },
            "ellipsoid" => Shape::Ellipsoid {
                semi_axes: self
                    .semi_axes
                    .clone()
                    .ok_or_else(|| HarnessError::Config("ellipsoid needs domain.semi_axes".into()))?,
            },
            other => return Err(HarnessError::Config(format!("unknown domain shape `{other}`"))),
        };
        let center = match &self.center {
            Some(c) => c.clone(),
            None if self.shape.is_none() && name == "cube" => vec![0.5 * self.scale; self.dim],
            None => vec![0.0; self.dim],
        };
        Ok(StarDomain::new(self.dim, shape, &center, self.scale)?)
    }

    /// A MAC grid with `n` cells per axis over the bounding box of the domain.
    pub fn mac_grid(&self, default_shape: &str, n: usize) -> Result<MacGrid> {
        let dom = self.star_domain(default_shape)?;
        let d = dom.dim();
        let c = dom.center().to_vec();
        Ok(match dom.shape() {
            Shape::Ball => MacGrid::ball(&c, dom.scale(), n)?,
            Shape::Cube => {
                let lo: Vec<f64> = c.iter().map(|v| v - 0.5 * dom.scale()).collect();
                let hi: Vec<f64> = c.iter().map(|v| v + 0.5 * dom.scale()).collect();
                MacGrid::full_box(&lo, &hi, &vec![n; d])?
            }
            _ => {
                let r = dom.circumradius();
                let lo: Vec<f64> = c.iter().map(|v| v - r).collect();
                let hi: Vec<f64> = c.iter().map(|v| v + r).collect();
                MacGrid::new(&lo, &hi, &vec![n; d], |x| dom.contains(x))?
            }
        })
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub final_time: f64,
    pub steps: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            final_time: 0.2,
            steps: 10,
        }
    }
}

impl TimeSection {
    pub fn dt(&self) -> f64 {
        self.final_time / self.steps as f64
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingSection {
    /// `random` (seeded trigonometric sums) or `named`.
    pub kind: String,
    /// `general`, `solenoidal` or `gradient` for random sums.
    pub character: String,
    pub family_size: usize,
    pub modes: usize,
    pub max_wave: u32,
    /// Names for the `named` kind: zero, shear, vortex, potential, mixed.
    pub names: Vec<String>,
    pub amplitude: f64,
}

impl Default for ForcingSection {
    fn default() -> Self {
        ForcingSection {
            kind: "random".into(),
            character: "general".into(),
            family_size: 5,
            modes: 6,
            max_wave: 2,
            names: vec![],
            amplitude: 1.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NormsSection {
    /// `[s, q, k]` triples; `s` may be `inf`.
    pub specs: Vec<(f64, f64, usize)>,
    pub spread_tolerance: f64,
    pub homogeneity_tolerance: f64,
}

impl Default for NormsSection {
    fn default() -> Self {
        NormsSection {
            specs: vec![(2.0, 2.0, 0), (4.0, 2.0, 0), (2.0, 2.0, 1), (4.0, 2.0, 1)],
            spread_tolerance: 1.5,
            homogeneity_tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BogovskiiSection {
    pub forcings: usize,
    pub bumps: usize,
    pub baseline_tolerance: f64,
    pub min_order: f64,
    pub commutator_resolutions: Vec<usize>,
    pub commutator_tolerance: f64,
    pub symmetry_tolerance: f64,
}

impl Default for BogovskiiSection {
    fn default() -> Self {
        BogovskiiSection {
            forcings: 5,
            bumps: 3,
            baseline_tolerance: 5e-2,
            min_order: 1.0,
            commutator_resolutions: vec![32, 48, 64],
            commutator_tolerance: 5e-2,
            symmetry_tolerance: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct HelmholtzSection {
    pub fields: usize,
    pub tolerance: f64,
    pub recovery_tolerance: f64,
    /// Cells per axis of the mixed curl-plus-gradient decomposition.
    pub mixed_resolution: usize,
    pub box_factor: f64,
    pub collar_fraction: f64,
}

impl Default for HelmholtzSection {
    fn default() -> Self {
        HelmholtzSection {
            fields: 10,
            tolerance: 1e-12,
            recovery_tolerance: 1e-3,
            mixed_resolution: 128,
            box_factor: 4.0,
            collar_fraction: 0.25,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct StokesSection {
    pub spatial_order: f64,
    pub temporal_order: f64,
    pub divergence_tolerance: f64,
    pub harmonic_order: f64,
    /// Step counts of the temporal refinement on a fixed grid.
    pub temporal_steps: Vec<usize>,
    pub temporal_cells: usize,
}

impl Default for StokesSection {
    fn default() -> Self {
        StokesSection {
            spatial_order: 1.8,
            temporal_order: 0.9,
            divergence_tolerance: 1e-10,
            harmonic_order: 1.5,
            temporal_steps: vec![4, 8, 16, 32],
            temporal_cells: 12,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TransformSection {
    /// Coefficient `c` of the curved chart `h = c y^2 + (2c/3) y^3`; 0 gives the flat chart.
    pub curvature: f64,
    pub rho: f64,
    pub k: usize,
    pub flat_tolerance: f64,
    pub min_order: f64,
    pub localized_resolutions: Vec<usize>,
    pub localized_tolerance: f64,
    /// Minimum observed order of the localized residuals.
    pub localized_order: f64,
    pub momentum_tolerance: f64,
    pub recovery_exact_tolerance: f64,
    /// Feed deliberately broken inputs; every corresponding row must fail.
    pub corrupt: bool,
}

impl Default for TransformSection {
    fn default() -> Self {
        TransformSection {
            curvature: 0.3,
            rho: 0.25,
            k: 0,
            flat_tolerance: 1e-8,
            min_order: 1.8,
            localized_resolutions: vec![32, 64],
            localized_tolerance: 5e-2,
            localized_order: 1.0,
            momentum_tolerance: 1e-1,
            recovery_exact_tolerance: 1e-10,
            corrupt: false,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Resolutions after validation: present lists must be non-empty and
    /// strictly increasing.
    pub fn resolutions(&self, default: &[usize]) -> Result<Vec<usize>> {
        let r = self.experiment.resolutions.clone().unwrap_or_else(|| default.to_vec());
        check_resolutions("resolutions", &r)?;
        Ok(r)
    }

    pub fn seed(&self) -> u64 {
        self.experiment.seed.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = &self.experiment.resolutions {
            check_resolutions("resolutions", r)?;
        }
        check_resolutions("bogovskii.commutator_resolutions", &self.bogovskii.commutator_resolutions)?;
        check_resolutions("transform.localized_resolutions", &self.transform.localized_resolutions)?;
        check_resolutions("helmholtz.mixed_resolution", &[self.helmholtz.mixed_resolution])?;
        if self.domain.dim != 2 && self.domain.dim != 3 {
            return Err(HarnessError::Config(format!("domain.dim must be 2 or 3, got {}", self.domain.dim)));
        }
        if !(self.time.final_time > 0.0) || self.time.steps == 0 {
            return Err(HarnessError::Config("time.final_time and time.steps must be positive".into()));
        }
        let tolerances = [
            ("norms.spread_tolerance", self.norms.spread_tolerance),
            ("norms.homogeneity_tolerance", self.norms.homogeneity_tolerance),
            ("bogovskii.baseline_tolerance", self.bogovskii.baseline_tolerance),
            ("bogovskii.commutator_tolerance", self.bogovskii.commutator_tolerance),
            ("bogovskii.symmetry_tolerance", self.bogovskii.symmetry_tolerance),
            ("helmholtz.tolerance", self.helmholtz.tolerance),
            ("helmholtz.recovery_tolerance", self.helmholtz.recovery_tolerance),
            ("stokes.divergence_tolerance", self.stokes.divergence_tolerance),
            ("transform.flat_tolerance", self.transform.flat_tolerance),
            ("transform.localized_tolerance", self.transform.localized_tolerance),
            ("transform.momentum_tolerance", self.transform.momentum_tolerance),
            ("transform.recovery_exact_tolerance", self.transform.recovery_exact_tolerance),
        ];
        for (name, v) in tolerances {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HarnessError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.stokes.temporal_steps.len() < 3 {
            return Err(HarnessError::Config("stokes.temporal_steps needs at least 3 entries".into()));
        }
        check_resolutions("stokes.temporal_steps", &self.stokes.temporal_steps)?;
        if self.norms.specs.is_empty() {
            return Err(HarnessError::Config("norms.specs is empty".into()));
        }
        if self.norms.specs.iter().any(|s| s.2 > 2) {
            return Err(HarnessError::Config("norm order k must be 0, 1 or 2".into()));
        }
        Ok(())
    }
}

fn check_resolutions(name: &str, r: &[usize]) -> Result<()> {
    if r.is_empty() {
        return Err(HarnessError::Config(format!("{name} is empty")));
    }
    if r.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Config(format!("{name} must be strictly increasing, got {r:?}")));
    }
    if r[0] < 4 {
        return Err(HarnessError::Config(format!("{name} must be at least 4, got {}", r[0])));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn parses_sections_and_rejects_unknown_keys() {
        let c = Config::from_toml("[experiment]\nseed = 3\nresolutions = [8, 16]\n[norms]\nspecs = [[2.0, 2.0, 1]]\n").unwrap();
        assert_eq!(c.seed(), 3);
        assert_eq!(c.resolutions(&[4]).unwrap(), vec![8, 16]);
        assert!(Config::from_toml("[experiment]\nbogus = 1\n").is_err());
    }

    #[test]
    fn empty_or_unsorted_resolutions_are_invalid() {
        let c = Config::from_toml("[experiment]\nresolutions = []\n").unwrap();
        assert!(c.validate().is_err());
        let c = Config::from_toml("[experiment]\nresolutions = [16, 8]\n").unwrap();
        assert!(c.validate().is_err());
    }
}
