use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::Classification;
use crate::analysis::DecomposeParams;
use crate::error::{Error, Result};
use crate::families::FamilySpec;
use crate::target::Target;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPolicy {
    pub h_s: f64,
    pub n_theta: usize,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self { h_s: 0.1, n_theta: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisParams {
    pub eps0: f64,
    pub c0: f64,
    pub delta: Option<f64>,
    /// Exponents of the curve-tension norms; the CSV always carries `p = 1` and `p = 2`.
    pub p_values: Vec<f64>,
    /// Exponent of the four-term split of the curve-tension bound.
    pub split_p: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self { eps0: 0.25, c0: 0.1, delta: None, p_values: vec![1.0, 2.0], split_p: 2.0 }
    }
}

impl AnalysisParams {
    pub fn decompose_params(&self) -> DecomposeParams {
        DecomposeParams { eps0: self.eps0, c0: self.c0, delta: self.delta, ..Default::default() }
    }
}

/// One sweep: a family evaluated on a ladder of collars (`ell_list`) or tori (`heights`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Draw the sweep phase of curve sweeps from the seeded generator.
    #[serde(default)]
    pub randomize_phase: bool,
    #[serde(default)]
    pub expected: Option<Classification>,
    #[serde(default = "default_target")]
    pub target: Target,
    #[serde(default)]
    pub ell_list: Option<Vec<f64>>,
    /// Torus heights `B`; the torus has `ell = 2 pi (2 pi B)^{-1/2}`.
    #[serde(default)]
    pub heights: Option<Vec<f64>>,
    #[serde(default)]
    pub twist: f64,
    #[serde(default)]
    pub grid: GridPolicy,
    #[serde(default)]
    pub analysis: AnalysisParams,
    pub family: FamilySpec,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_target() -> Target {
    Target::sphere()
}

/// Collar lengths or torus heights, in sweep order.
#[derive(Debug, Clone, PartialEq)]
pub enum Ladder {
    Collar(Vec<f64>),
    Torus(Vec<f64>),
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn ladder(&self) -> Result<Ladder> {
        match (&self.ell_list, &self.heights) {
            (Some(ells), None) => Ok(Ladder::Collar(ells.clone())),
            (None, Some(bs)) => Ok(Ladder::Torus(bs.clone())),
            (Some(_), Some(_)) => Err(Error::Config("give either ell_list or heights, not both".into())),
            (None, None) => Err(Error::Config("one of ell_list or heights is required".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid sweep name {:?}", self.name)));
        }
        match self.ladder()? {
            Ladder::Collar(ells) => {
                if ells.is_empty() {
                    return Err(Error::Config("ell_list is empty".into()));
                }
                if let Some(bad) = ells.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
                    return Err(Error::Config(format!("ell = {bad} outside (0, 1)")));
                }
                if ells.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::Config(format!("ell_list must be strictly decreasing, got {ells:?}")));
                }
                if matches!(self.family, FamilySpec::TorusSweep { .. }) {
                    return Err(Error::Config("torus-sweep needs heights, not ell_list".into()));
                }
            }
            Ladder::Torus(bs) => {
                if bs.is_empty() {
                    return Err(Error::Config("heights is empty".into()));
                }
                if let Some(bad) = bs.iter().find(|&&b| !(b.is_finite() && b > 0.0)) {
                    return Err(Error::Config(format!("torus height {bad} must be positive")));
                }
                if bs.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config(format!("heights must be strictly increasing, got {bs:?}")));
                }
                if !matches!(self.family, FamilySpec::TorusSweep { .. }) {
                    return Err(Error::Config(format!("{} needs ell_list, not heights", self.family.short_name())));
                }
            }
        }
        if !(self.grid.h_s > 0.0 && self.grid.h_s <= 0.2) {
            return Err(Error::Config(format!("grid.h_s = {} must lie in (0, 0.2]", self.grid.h_s)));
        }
        if self.grid.n_theta < 32 {
            return Err(Error::Config(format!("grid.n_theta = {} must be at least 32", self.grid.n_theta)));
        }
        let a = &self.analysis;
        if !(a.eps0 > 0.0) || !(a.c0 > 0.0) {
            return Err(Error::Config("analysis.eps0 and analysis.c0 must be positive".into()));
        }
        if a.delta.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::Config("analysis.delta must be positive".into()));
        }
        if let Some(p) = a.p_values.iter().chain(std::iter::once(&a.split_p)).find(|&&p| !(p >= 1.0)) {
            return Err(Error::Config(format!("L^p exponent {p} must be at least 1")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LATITUDE: &str = r#"
        name = "latitude"
        seed = 3
        expected = "non-geodesic"
        ell_list = [0.2, 0.1]

        [grid]
        h_s = 0.1
        n_theta = 32

        [family]
        family = "curve-sweep"
        total_length = 5.0
        curve = { kind = "latitude", r = 0.8 }
    "#;

    #[test]
    fn parses_and_defaults() {
        let c = ExperimentConfig::from_toml_str(LATITUDE).unwrap();
        assert_eq!(c.expected, Some(Classification::NonGeodesic));
        assert_eq!(c.analysis, AnalysisParams::default());
        assert_eq!(c.ladder().unwrap(), Ladder::Collar(vec![0.2, 0.1]));
        assert_eq!(c.target, Target::sphere());
    }

    #[test]
    fn rejects_bad_ladders_and_grids() {
        for (from, to) in [
            ("ell_list = [0.2, 0.1]", "ell_list = [0.1, 0.2]"),
            ("ell_list = [0.2, 0.1]", "ell_list = [1.5, 0.1]"),
            ("ell_list = [0.2, 0.1]", "heights = [50.0, 100.0]"),
            ("h_s = 0.1", "h_s = 0.3"),
            ("n_theta = 32", "n_theta = 16"),
            ("seed = 3", "seed = 3\nbogus = 1"),
        ] {
            let text = LATITUDE.replace(from, to);
            assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))), "{to}");
        }
    }

    #[test]
    fn torus_ladder() {
        let text = r#"
            name = "torus"
            heights = [50.0, 100.0]
            [family]
            family = "torus-sweep"
            curve = { kind = "great-circle" }
        "#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.ladder().unwrap(), Ladder::Torus(vec![50.0, 100.0]));
        assert_eq!(c.grid, GridPolicy::default());
    }
}
