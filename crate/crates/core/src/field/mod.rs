//! Maps sampled on cylinder grids `[s_min, s_max] x S^1` and the discrete
//! operators acting on them.
//!
//! Values are stored row-major: one row per `s`-node, `n_theta` equally spaced
//! `theta`-nodes per row (periodic, the node at `2 pi` is the node at `0`), and
//! `ambient_dim` coordinates per node.

mod container;
mod kernel;
mod ops;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CollarGeometry, TorusGeometry};
use crate::target::{Target, TargetManifold};

pub(crate) use ops::{d_s, d_theta, d_theta_theta, tension_l2_of, CumulativeIntegral};
pub use container::{read_map_field, write_map_field, CONTAINER_MAGIC};
pub use kernel::{exp_kernel_direct, exp_kernel_recursive};
pub use ops::{
    alpha_profile, angular_energy_profile, energy, energy_density_profile, euclidean_tension,
    high_energy_set, hopf_profile, hopf_transport_profile, hyperbolic_tension, oscillation,
    remainder_profile, tension_l2, tension_sq_row_profile, HighEnergySet, SInterval,
};

/// Conformal structure of the grid's domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricTag {
    Euclidean,
    Hyperbolic { ell: f64 },
    Torus { twist: f64, height: f64 },
}

impl MetricTag {
    pub fn hyperbolic(geom: &CollarGeometry) -> Self {
        MetricTag::Hyperbolic { ell: geom.ell() }
    }

    pub fn torus(geom: &TorusGeometry) -> Self {
        MetricTag::Torus {
            twist: geom.twist(),
            height: geom.height(),
        }
    }

    pub fn collar(&self) -> Option<CollarGeometry> {
        match *self {
            MetricTag::Hyperbolic { ell } => CollarGeometry::new(ell).ok(),
            _ => None,
        }
    }

    pub fn torus_geometry(&self) -> Option<TorusGeometry> {
        match *self {
            MetricTag::Torus { twist, height } => TorusGeometry::new(twist, height).ok(),
            _ => None,
        }
    }

    /// Systole `ell` of the domain, if it is a collar or a torus.
    pub fn ell(&self) -> Option<f64> {
        match self {
            MetricTag::Euclidean => None,
            MetricTag::Hyperbolic { ell } => Some(*ell),
            MetricTag::Torus { .. } => self.torus_geometry().map(|t| t.sys_length()),
        }
    }
}

/// Serialisable description of a [`CylinderGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub s_min: f64,
    pub s_max: f64,
    pub n_s: usize,
    pub n_theta: usize,
    pub metric: MetricTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderGrid {
    spec: GridSpec,
    h_s: f64,
    rho: Vec<f64>,
}

impl CylinderGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        let GridSpec { s_min, s_max, n_s, n_theta, metric } = spec;
        if n_s < 2 || n_theta < 1 || !(s_max > s_min) {
            return Err(Error::Contract(format!(
                "grid needs n_s >= 2, n_theta >= 1 and s_max > s_min (got {n_s}, {n_theta}, [{s_min}, {s_max}])"
            )));
        }
        let h_s = (s_max - s_min) / (n_s - 1) as f64;
        let s_at = |j: usize| s_min + j as f64 * h_s;
        let rho = match metric {
            MetricTag::Euclidean => vec![1.0; n_s],
            MetricTag::Hyperbolic { ell } => {
                let geom = CollarGeometry::new(ell)?;
                (0..n_s).map(|j| geom.rho(s_at(j))).collect::<Result<Vec<_>>>()?
            }
            MetricTag::Torus { twist, height } => {
                let rho = TorusGeometry::new(twist, height)?.rho();
                vec![rho; n_s]
            }
        };
        Ok(Self { spec, h_s, rho })
    }

    /// The whole collar `[-X, X]` with `s`-spacing at most `h_s`.
    pub fn collar(geom: &CollarGeometry, h_s: f64, n_theta: usize) -> Result<Self> {
        let x = geom.half_length();
        Self::new(GridSpec {
            s_min: -x,
            s_max: x,
            n_s: nodes_for(2.0 * x, h_s),
            n_theta,
            metric: MetricTag::hyperbolic(geom),
        })
    }

    /// One fundamental domain `[0, B]` of a flat torus.
    pub fn torus(geom: &TorusGeometry, h_s: f64, n_theta: usize) -> Result<Self> {
        Self::new(GridSpec {
            s_min: 0.0,
            s_max: geom.height(),
            n_s: nodes_for(geom.height(), h_s),
            n_theta,
            metric: MetricTag::torus(geom),
        })
    }

    pub fn euclidean(s_min: f64, s_max: f64, n_s: usize, n_theta: usize) -> Result<Self> {
        Self::new(GridSpec { s_min, s_max, n_s, n_theta, metric: MetricTag::Euclidean })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn metric(&self) -> &MetricTag {
        &self.spec.metric
    }

    pub fn n_s(&self) -> usize {
        self.spec.n_s
    }

    pub fn n_theta(&self) -> usize {
        self.spec.n_theta
    }

    pub fn s_min(&self) -> f64 {
        self.spec.s_min
    }

    pub fn s_max(&self) -> f64 {
        self.spec.s_max
    }

    pub fn h_s(&self) -> f64 {
        self.h_s
    }

    pub fn h_theta(&self) -> f64 {
        2.0 * PI / self.spec.n_theta as f64
    }

    pub fn s(&self, j: usize) -> f64 {
        if j + 1 == self.spec.n_s {
            self.spec.s_max
        } else {
            self.spec.s_min + j as f64 * self.h_s
        }
    }

    pub fn s_values(&self) -> Vec<f64> {
        (0..self.n_s()).map(|j| self.s(j)).collect()
    }

    pub fn theta(&self, k: usize) -> f64 {
        k as f64 * self.h_theta()
    }

    /// Conformal factor at node row `j` (one for Euclidean grids).
    pub fn rho(&self, j: usize) -> f64 {
        self.rho[j]
    }

    /// Trapezoid weight of row `j` in `s`.
    pub(crate) fn s_weight(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.n_s() {
            0.5 * self.h_s
        } else {
            self.h_s
        }
    }

    /// Index of the node nearest to `s`, clamped to the grid.
    pub fn nearest_index(&self, s: f64) -> usize {
        let x = ((s - self.s_min()) / self.h_s).round();
        x.clamp(0.0, (self.n_s() - 1) as f64) as usize
    }

    /// Indices of the nodes lying in `[a, b]`.
    pub fn indices_in(&self, a: f64, b: f64) -> std::ops::Range<usize> {
        let tol = 1e-9 * self.h_s;
        let lo = ((a - self.s_min() - tol) / self.h_s).ceil().max(0.0) as usize;
        let hi = ((b - self.s_min() + tol) / self.h_s).floor();
        if hi < 0.0 {
            return 0..0;
        }
        let hi = (hi as usize).min(self.n_s() - 1);
        if lo > hi {
            0..0
        } else {
            lo..hi + 1
        }
    }
}

fn nodes_for(length: f64, h_s: f64) -> usize {
    ((length / h_s).ceil() as usize).max(1) + 1
}

/// A map from a cylinder grid into a target manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct MapField {
    grid: CylinderGrid,
    target: Target,
    values: Vec<f64>,
}

/// Largest admissible distance from the target after re-projection.
pub const ON_MANIFOLD_TOLERANCE: f64 = 1e-10;

impl MapField {
    /// Builds a field from raw ambient values, re-projecting every node onto the target.
    pub fn new(grid: CylinderGrid, target: Target, mut values: Vec<f64>) -> Result<Self> {
        let dim = target.ambient_dim();
        let expect = grid.n_s() * grid.n_theta() * dim;
        if values.len() != expect {
            return Err(Error::Contract(format!(
                "expected {expect} values for the grid, got {}",
                values.len()
            )));
        }
        let mut buf = vec![0.0; dim];
        for chunk in values.chunks_mut(dim) {
            target.project_into(chunk, &mut buf)?;
            chunk.copy_from_slice(&buf);
            let off = target.distance_to(chunk);
            if off > ON_MANIFOLD_TOLERANCE {
                return Err(Error::Contract(format!("value {off:.3e} off the target after projection")));
            }
        }
        let field = Self { grid, target, values };
        field.check_torus_seam()?;
        Ok(field)
    }

    /// Wraps stored values that are already on the target, without re-projecting.
    pub(crate) fn from_stored(grid: CylinderGrid, target: Target, values: Vec<f64>) -> Result<Self> {
        let dim = target.ambient_dim();
        let expect = grid.n_s() * grid.n_theta() * dim;
        if values.len() != expect {
            return Err(Error::Format(format!("expected {expect} values for the grid, got {}", values.len())));
        }
        if let Some(off) = values.chunks(dim).map(|c| target.distance_to(c)).find(|&d| !(d <= ON_MANIFOLD_TOLERANCE)) {
            return Err(Error::Format(format!("stored value {off:.3e} off the target")));
        }
        let field = Self { grid, target, values };
        field.check_torus_seam()?;
        Ok(field)
    }

    /// Evaluates `f(s, theta, out)` at every node.
    pub fn from_fn<F>(grid: CylinderGrid, target: Target, mut f: F) -> Result<Self>
    where
        F: FnMut(f64, f64, &mut [f64]) -> Result<()>,
    {
        let dim = target.ambient_dim();
        let mut values = vec![0.0; grid.n_s() * grid.n_theta() * dim];
        for j in 0..grid.n_s() {
            let s = grid.s(j);
            for k in 0..grid.n_theta() {
                let off = (j * grid.n_theta() + k) * dim;
                f(s, grid.theta(k), &mut values[off..off + dim])?;
            }
        }
        Self::new(grid, target, values)
    }

    pub fn grid(&self) -> &CylinderGrid {
        &self.grid
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn dim(&self) -> usize {
        self.target.ambient_dim()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, j: usize, k: usize) -> &[f64] {
        let d = self.dim();
        let off = (j * self.grid.n_theta() + k) * d;
        &self.values[off..off + d]
    }

    /// `u(s + s0, theta + theta0)` sampled on the same grid is not available in
    /// general; this rotates by a whole number of `theta`-nodes.
    pub fn rotate_theta(&self, shift: usize) -> Self {
        let n = self.grid.n_theta();
        let d = self.dim();
        let mut values = vec![0.0; self.values.len()];
        for j in 0..self.grid.n_s() {
            for k in 0..n {
                let src = self.value(j, (k + shift) % n);
                let off = (j * n + k) * d;
                values[off..off + d].copy_from_slice(src);
            }
        }
        Self { grid: self.grid.clone(), target: self.target.clone(), values }
    }

    /// Same map read on the reflected grid `s -> -s` (requires `s_min = -s_max`).
    pub fn reflect_s(&self) -> Result<Self> {
        let g = self.grid.spec();
        if (g.s_min + g.s_max).abs() > 1e-9 * g.s_max.abs().max(1.0) {
            return Err(Error::Contract("reflection needs a symmetric s-range".into()));
        }
        let n = self.grid.n_theta();
        let d = self.dim();
        let ns = self.grid.n_s();
        let mut values = vec![0.0; self.values.len()];
        for j in 0..ns {
            for k in 0..n {
                let src = self.value(ns - 1 - j, k);
                let off = (j * n + k) * d;
                values[off..off + d].copy_from_slice(src);
            }
        }
        Ok(Self { grid: self.grid.clone(), target: self.target.clone(), values })
    }

    /// Checks `u(s + B, theta + A) = u(s, theta)` between the first and last rows
    /// when the grid spans exactly one period of a torus.
    fn check_torus_seam(&self) -> Result<()> {
        let MetricTag::Torus { twist, height } = *self.grid.metric() else {
            return Ok(());
        };
        let span = self.grid.s_max() - self.grid.s_min();
        if (span - height).abs() > 1e-9 * height {
            return Ok(());
        }
        let resid = self.seam_residual(twist);
        let last = self.grid.n_s() - 1;
        let n = self.grid.n_theta();
        // linear interpolation in theta is exact up to the row's second differences
        let mut curv = 0.0f64;
        for k in 0..n {
            let (a, b, c) = (self.value(last, (k + n - 1) % n), self.value(last, k), self.value(last, (k + 1) % n));
            let dd: f64 = (0..self.dim()).map(|i| (a[i] - 2.0 * b[i] + c[i]).powi(2)).sum::<f64>().sqrt();
            curv = curv.max(dd);
        }
        if resid > 1e-8 + curv {
            return Err(Error::Contract(format!(
                "torus seam periodicity u(s+B, theta+A) = u(s, theta) violated by {resid:.3e}"
            )));
        }
        Ok(())
    }

    /// `max_k |u(s_max, theta_k + A) - u(s_min, theta_k)|` with periodic linear
    /// interpolation in `theta`.
    pub fn seam_residual(&self, twist: f64) -> f64 {
        let last = self.grid.n_s() - 1;
        let n = self.grid.n_theta();
        let ht = self.grid.h_theta();
        let d = self.dim();
        let mut worst = 0.0f64;
        for k in 0..n {
            let x = (self.grid.theta(k) + twist).rem_euclid(2.0 * PI) / ht;
            let k0 = x.floor() as usize % n;
            let k1 = (k0 + 1) % n;
            let w = x - x.floor();
            let (a, b) = (self.value(last, k0), self.value(last, k1));
            let base = self.value(0, k);
            let err: f64 = (0..d).map(|i| ((1.0 - w) * a[i] + w * b[i] - base[i]).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(err);
        }
        worst
    }
}

/// Ambient-vector field on a grid, same layout as [`MapField`] values.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub n_s: usize,
    pub n_theta: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl VectorField {
    pub fn zeros(n_s: usize, n_theta: usize, dim: usize) -> Self {
        Self { n_s, n_theta, dim, data: vec![0.0; n_s * n_theta * dim] }
    }

    pub fn at(&self, j: usize, k: usize) -> &[f64] {
        let off = (j * self.n_theta + k) * self.dim;
        &self.data[off..off + self.dim]
    }

    pub fn at_mut(&mut self, j: usize, k: usize) -> &mut [f64] {
        let off = (j * self.n_theta + k) * self.dim;
        &mut self.data[off..off + self.dim]
    }

    /// Largest pointwise Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        self.data
            .chunks(self.dim)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Largest pointwise norm over rows in `rows`.
    pub fn sup_norm_rows(&self, rows: std::ops::Range<usize>) -> f64 {
        let mut worst = 0.0f64;
        for j in rows {
            for k in 0..self.n_theta {
                worst = worst.max(crate::target::norm(self.at(j, k)));
            }
        }
        worst
    }
}

/// One scalar per `s`-node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarProfile {
    pub s: Vec<f64>,
    pub values: Vec<f64>,
}

impl ScalarProfile {
    pub fn new(s: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if s.len() != values.len() {
            return Err(Error::Contract("profile length differs from its s-grid".into()));
        }
        Ok(Self { s, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes `s,value` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["s", "value"])?;
        for (s, v) in self.s.iter().zip(&self.values) {
            wtr.write_record([format!("{s:.17e}"), format!("{v:.17e}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing_and_indices() {
        let g = CylinderGrid::euclidean(-2.0, 2.0, 41, 16).unwrap();
        assert!((g.h_s() - 0.1).abs() < 1e-15);
        assert!((g.h_theta() - 2.0 * PI / 16.0).abs() < 1e-15);
        assert_eq!(g.s(40), 2.0);
        assert_eq!(g.indices_in(-1.0, 1.0), 10..31);
        assert_eq!(g.indices_in(-1.05, 1.05), 10..31);
        assert_eq!(g.indices_in(3.0, 4.0), 0..0);
        assert_eq!(g.indices_in(-9.0, 9.0), 0..41);
        assert_eq!(g.nearest_index(0.04), 20);
        assert!(CylinderGrid::euclidean(1.0, 1.0, 5, 8).is_err());
        assert!(CylinderGrid::euclidean(0.0, 1.0, 1, 8).is_err());
    }

    #[test]
    fn collar_grid_covers_collar() {
        let geom = CollarGeometry::new(0.1).unwrap();
        let g = CylinderGrid::collar(&geom, 0.1, 8).unwrap();
        assert!(g.h_s() <= 0.1);
        assert_eq!(g.s(g.n_s() - 1), geom.half_length());
        assert!((g.rho(0) - geom.rho_at_end()).abs() < 1e-12);
        let bad = GridSpec { s_min: -200.0, s_max: 0.0, n_s: 10, n_theta: 8, metric: MetricTag::hyperbolic(&geom) };
        assert!(CylinderGrid::new(bad).is_err());
    }

    #[test]
    fn map_values_are_reprojected() {
        let g = CylinderGrid::euclidean(0.0, 1.0, 5, 8).unwrap();
        let u = MapField::from_fn(g, Target::sphere(), |s, th, out| {
            out.copy_from_slice(&[2.0 * th.cos(), 2.0 * th.sin(), s]);
            Ok(())
        })
        .unwrap();
        for c in u.values().chunks(3) {
            assert!((crate::target::norm(c) - 1.0).abs() < 1e-14);
        }
        let g = CylinderGrid::euclidean(0.0, 1.0, 5, 8).unwrap();
        let err = MapField::from_fn(g, Target::sphere(), |_, _, out| {
            out.copy_from_slice(&[0.0, 0.0, 0.0]);
            Ok(())
        });
        assert!(matches!(err, Err(Error::ProjectionUndefined { .. })));
    }

    #[test]
    fn torus_seam_is_enforced() {
        let geom = TorusGeometry::new(1.0, 20.0).unwrap();
        let g = CylinderGrid::torus(&geom, 0.2, 32).unwrap();
        // theta-independent and B-periodic in s: consistent with any twist
        let ok = MapField::from_fn(g.clone(), Target::sphere(), |s, _, out| {
            let x = 2.0 * PI * s / 20.0;
            out.copy_from_slice(&[x.cos(), x.sin(), 0.0]);
            Ok(())
        });
        assert!(ok.is_ok());
        // theta-dependent and s-periodic but ignoring the twist
        let bad = MapField::from_fn(g, Target::sphere(), |s, th, out| {
            let x = 2.0 * PI * s / 20.0;
            out.copy_from_slice(&[x.cos(), x.sin(), 0.5 * th.sin()]);
            Ok(())
        });
        assert!(bad.is_err());
    }

    #[test]
    fn profile_csv() {
        let p = ScalarProfile::new(vec![0.0, 0.5], vec![1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s,value\n"));
        assert_eq!(text.lines().count(), 3);
        assert!(ScalarProfile::new(vec![0.0], vec![]).is_err());
    }
}
