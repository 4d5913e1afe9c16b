//! Explicit map families on collars and tori: curve sweeps, harmonic bubbles,
//! glued bubble/sweep composites, perturbed geodesic sweeps and torus sweeps.

mod curve;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CylinderGrid, MapField, MetricTag, VectorField};
use crate::target::{dot, FlatTorusR4, Target, TargetManifold};

pub use curve::{CurveJet, CurveSpec, TrigPoly};

/// How a sweep's total length depends on `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthLaw {
    /// `total_length` as given.
    #[default]
    Fixed,
    /// `total_length * |log ell|`.
    LogEll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleSpec {
    pub center: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

fn default_halfwidth() -> f64 {
    3.0
}

/// Family selection as read from experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FamilySpec {
    CurveSweep {
        curve: CurveSpec,
        total_length: f64,
        #[serde(default)]
        length_law: LengthLaw,
        #[serde(default)]
        phase: f64,
    },
    Bubble {
        center: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Glued {
        curve: CurveSpec,
        bubbles: Vec<BubbleSpec>,
        /// Length of base curve traversed in each of the `bubbles.len() + 1` gaps.
        neck_lengths: Vec<f64>,
        #[serde(default = "default_halfwidth")]
        transition_halfwidth: f64,
    },
    PerturbedGeodesicSweep {
        beta: f64,
        amplitude: f64,
        total_length: f64,
    },
    TorusSweep {
        curve: CurveSpec,
    },
}

impl FamilySpec {
    pub fn build(&self, target: &Target, grid: CylinderGrid) -> Result<MapField> {
        match self {
            FamilySpec::CurveSweep { curve, total_length, length_law, phase } => {
                let length = scaled_length(*total_length, *length_law, grid.metric())?;
                curve_sweep(curve, target, length, *phase, grid)
            }
            FamilySpec::Bubble { center, scale } => bubble_map(target, *center, *scale, grid),
            FamilySpec::Glued { curve, bubbles, neck_lengths, transition_halfwidth } => {
                glued_map(curve, target, bubbles, neck_lengths, *transition_halfwidth, grid)
            }
            FamilySpec::PerturbedGeodesicSweep { beta, amplitude, total_length } => {
                perturbed_geodesic_sweep(target, *beta, *amplitude, *total_length, grid)
            }
            FamilySpec::TorusSweep { curve } => torus_sweep(curve, target, grid),
        }
    }

    /// Closed-form Euclidean tension where the family has one.
    pub fn tension_oracle(&self, target: &Target, grid: &CylinderGrid) -> Result<Option<VectorField>> {
        Ok(match self {
            FamilySpec::CurveSweep { curve, total_length, length_law, phase } => {
                let length = scaled_length(*total_length, *length_law, grid.metric())?;
                Some(sweep_tension_oracle(curve, target, length, *phase, grid)?)
            }
            FamilySpec::Bubble { .. } => Some(VectorField::zeros(grid.n_s(), grid.n_theta(), target.ambient_dim())),
            FamilySpec::TorusSweep { curve } => {
                let (lo, hi) = (grid.s_min(), grid.s_max());
                let speed = curve.period() / (hi - lo);
                Some(tension_of_profile(curve, target, grid, |s| [speed * (s - lo), speed, 0.0])?)
            }
            _ => None,
        })
    }

    /// Kebab-case family name used in reports.
    pub fn short_name(&self) -> &'static str {
        match self {
            FamilySpec::CurveSweep { .. } => "curve-sweep",
            FamilySpec::Bubble { .. } => "bubble",
            FamilySpec::Glued { .. } => "glued",
            FamilySpec::PerturbedGeodesicSweep { .. } => "perturbed-geodesic-sweep",
            FamilySpec::TorusSweep { .. } => "torus-sweep",
        }
    }
}

fn scaled_length(total: f64, law: LengthLaw, metric: &MetricTag) -> Result<f64> {
    match law {
        LengthLaw::Fixed => Ok(total),
        LengthLaw::LogEll => {
            let ell = metric
                .ell()
                .ok_or_else(|| Error::Contract("log-ell length law needs a collar or torus grid".into()))?;
            Ok(total * ell.ln().abs())
        }
    }
}

/// `[-X, X]` on collar grids, the grid range otherwise.
fn sweep_range(grid: &CylinderGrid) -> Result<(f64, f64)> {
    match grid.metric() {
        MetricTag::Hyperbolic { ell } => {
            let x = crate::geometry::collar_half_length(*ell)?;
            Ok((-x, x))
        }
        _ => Ok((grid.s_min(), grid.s_max())),
    }
}

/// Sweep of a curve along the collar, `u(s, theta) = gamma(phi(s))` with the linear
/// profile `phi(s) = phase + total_length (s + X) / 2X`.
pub fn curve_sweep(curve: &CurveSpec, target: &Target, total_length: f64, phase: f64, grid: CylinderGrid) -> Result<MapField> {
    curve.validate(target)?;
    let (lo, hi) = sweep_range(&grid)?;
    let speed = total_length / (hi - lo);
    let dim = target.ambient_dim();
    MapField::from_fn(grid, target.clone(), |s, _, out| {
        out.copy_from_slice(&curve.jet(phase + speed * (s - lo), dim).pos);
        Ok(())
    })
}

/// `tau_E = tau_curve(phi) phi'^2 + gamma'(phi) phi''` for the linear sweep profile.
pub fn sweep_tension_oracle(
    curve: &CurveSpec,
    target: &Target,
    total_length: f64,
    phase: f64,
    grid: &CylinderGrid,
) -> Result<VectorField> {
    let (lo, hi) = sweep_range(grid)?;
    let speed = total_length / (hi - lo);
    tension_of_profile(curve, target, grid, |s| [phase + speed * (s - lo), speed, 0.0])
}

/// Euclidean tension of `gamma(phi(s))` for a profile returning `[phi, phi', phi'']`.
fn tension_of_profile<F: Fn(f64) -> [f64; 3]>(
    curve: &CurveSpec,
    target: &Target,
    grid: &CylinderGrid,
    profile: F,
) -> Result<VectorField> {
    curve.validate(target)?;
    let dim = target.ambient_dim();
    let mut tau = VectorField::zeros(grid.n_s(), grid.n_theta(), dim);
    for j in 0..grid.n_s() {
        let [phi, d1, d2] = profile(grid.s(j));
        let k = curve.tension(target, phi);
        let vel = curve.jet(phi, dim).vel;
        let row: Vec<f64> = (0..dim).map(|i| k[i] * d1 * d1 + vel[i] * d2).collect();
        for t in 0..grid.n_theta() {
            tau.at_mut(j, t).copy_from_slice(&row);
        }
    }
    Ok(tau)
}

/// Inverse stereographic projection of `w = x + iy` from the north pole.
fn inverse_stereographic(x: f64, y: f64) -> [f64; 3] {
    let r2 = x * x + y * y;
    let d = 1.0 + r2;
    [2.0 * x / d, 2.0 * y / d, (r2 - 1.0) / d]
}

fn bubble_point(s: f64, theta: f64, center: f64, scale: f64) -> [f64; 3] {
    let r = scale * (s - center).exp();
    inverse_stereographic(r * theta.cos(), r * theta.sin())
}

fn require_s2(target: &Target) -> Result<()> {
    match target {
        Target::Sphere(s) if s.dim() == 2 => Ok(()),
        _ => Err(Error::Contract(format!("bubbles need the target s2, got {}", target.name()))),
    }
}

/// Degree-one harmonic sphere `u(s, theta) = Pi(scale e^{(s - center) + i theta})`.
pub fn bubble_map(target: &Target, center: f64, scale: f64, grid: CylinderGrid) -> Result<MapField> {
    require_s2(target)?;
    if !(scale >= 1.0) {
        return Err(Error::Contract(format!("bubble scale {scale} must be at least 1")));
    }
    MapField::from_fn(grid, target.clone(), |s, th, out| {
        out.copy_from_slice(&bubble_point(s, th, center, scale));
        Ok(())
    })
}

/// Quintic smoothstep on `[0, 1]`, clamped outside; `C^2` at both ends.
fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
}

/// Profile of the base curve of a glued map: frozen within `2w` of each bubble,
/// ramping up on `[2w, 3w]`, with a constant speed per gap chosen so that the gap
/// traverses its neck length.
#[derive(Debug, Clone)]
pub struct GluedLayout {
    lo: f64,
    hi: f64,
    centers: Vec<f64>,
    w: f64,
    speeds: Vec<f64>,
    starts: Vec<f64>,
}

impl GluedLayout {
    pub fn new(lo: f64, hi: f64, bubbles: &[BubbleSpec], neck_lengths: &[f64], w: f64) -> Result<Self> {
        if !(w > 0.0) {
            return Err(Error::Contract(format!("transition half-width {w} must be positive")));
        }
        if neck_lengths.len() != bubbles.len() + 1 {
            return Err(Error::Contract(format!(
                "{} bubbles need {} neck lengths, got {}",
                bubbles.len(),
                bubbles.len() + 1,
                neck_lengths.len()
            )));
        }
        let centers: Vec<f64> = bubbles.iter().map(|b| b.center).collect();
        let mut marks = vec![lo];
        marks.extend(&centers);
        marks.push(hi);
        for pair in marks.windows(2) {
            if pair[1] - pair[0] < 4.0 * w {
                return Err(Error::Contract(format!(
                    "transition bands overlap: bubble centers and ends {:?} must be at least 4w = {} apart",
                    marks,
                    4.0 * w
                )));
            }
        }
        let mut layout = Self { lo, hi, centers, w, speeds: Vec::new(), starts: Vec::new() };
        let mut start = 0.0;
        for (g, pair) in marks.windows(2).enumerate() {
            let mass = layout.mass(pair[0], pair[1]);
            layout.speeds.push(neck_lengths[g] / mass);
            layout.starts.push(start);
            start += neck_lengths[g];
        }
        Ok(layout)
    }

    /// Speed weight `m(s)`, zero within `2w` of every bubble center.
    pub fn weight(&self, s: f64) -> f64 {
        self.centers.iter().map(|c| smoothstep(((s - c).abs() - 2.0 * self.w) / self.w)).product()
    }

    fn weight_derivative(&self, s: f64) -> f64 {
        // at most one factor is non-constant at any s
        for c in &self.centers {
            let x = ((s - c).abs() - 2.0 * self.w) / self.w;
            if x > 0.0 && x < 1.0 {
                let d = 30.0 * x * x * (1.0 - x) * (1.0 - x) / self.w;
                return d * (s - c).signum();
            }
        }
        0.0
    }

    /// `int_a^b m` by 3-point Gauss-Legendre on polynomial pieces (exact).
    fn mass(&self, a: f64, b: f64) -> f64 {
        let mut cuts = vec![a, b];
        for c in &self.centers {
            for off in [-3.0, -2.0, 2.0, 3.0] {
                let x = c + off * self.w;
                if x > a && x < b {
                    cuts.push(x);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        let nodes = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
        let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        cuts.windows(2)
            .map(|p| {
                let (m, r) = (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0]));
                r * nodes.iter().zip(&weights).map(|(x, w)| w * self.weight(m + r * x)).sum::<f64>()
            })
            .sum()
    }

    fn gap(&self, s: f64) -> usize {
        self.centers.iter().filter(|&&c| c < s).count()
    }

    fn gap_start(&self, g: usize) -> f64 {
        if g == 0 {
            self.lo
        } else {
            self.centers[g - 1]
        }
    }

    /// `[phi, phi', phi'']` at `s`.
    pub fn profile(&self, s: f64) -> [f64; 3] {
        let g = self.gap(s);
        let v = self.speeds[g];
        [
            self.starts[g] + v * self.mass(self.gap_start(g), s),
            v * self.weight(s),
            v * self.weight_derivative(s),
        ]
    }

    /// `(-1)^{#centers < s}`: each degree-one bubble carries the base to its antipode.
    pub fn sign(&self, s: f64) -> f64 {
        if self.gap(s).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// Dirichlet energy of the base sweep, `pi int phi'^2 ds` for a unit-speed curve.
    pub fn base_energy(&self) -> f64 {
        let n = 200_000;
        let h = (self.hi - self.lo) / n as f64;
        let f = |i: usize| self.profile(self.lo + i as f64 * h)[1].powi(2);
        let inner: f64 = (1..n).map(f).sum();
        PI * h * (inner + 0.5 * (f(0) + f(n)))
    }
}

/// Rotation columns `(e1, e2, -p)` taking the south pole to `p`.
fn rotation_to(p: &[f64]) -> [[f64; 3]; 3] {
    let n = [-p[0], -p[1], -p[2]];
    let seed = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = dot(&seed, &n);
    let mut e1 = [seed[0] - d * n[0], seed[1] - d * n[1], seed[2] - d * n[2]];
    let l = dot(&e1, &e1).sqrt();
    e1.iter_mut().for_each(|x| *x /= l);
    let e2 = [n[1] * e1[2] - n[2] * e1[1], n[2] * e1[0] - n[0] * e1[2], n[0] * e1[1] - n[1] * e1[0]];
    [e1, e2, n]
}

fn apply(r: &[[f64; 3]; 3], x: &[f64; 3]) -> [f64; 3] {
    let mut y = [0.0; 3];
    for (col, &c) in r.iter().zip(x) {
        for i in 0..3 {
            y[i] += c * col[i];
        }
    }
    y
}

/// Spherical linear interpolation from `p` (t = 0) to `q` (t = 1).
fn slerp(p: &[f64; 3], q: &[f64; 3], t: f64) -> [f64; 3] {
    let c = dot(p, q).clamp(-1.0, 1.0);
    let omega = c.acos();
    let (a, b) = if omega < 1e-12 {
        (1.0 - t, t)
    } else {
        let s = omega.sin();
        (((1.0 - t) * omega).sin() / s, (t * omega).sin() / s)
    };
    [a * p[0] + b * q[0], a * p[1] + b * q[1], a * p[2] + b * q[2]]
}

/// Bubbles glued into a sweep of `curve`.
///
/// Within `w` of a center the map is the bubble (rotated so that it starts at the
/// frozen base point and ends at its antipode); on `w <= |s - c| <= 2w` it blends
/// into the base by slerp with a quintic cutoff; elsewhere it is the base sweep.
pub fn glued_map(
    curve: &CurveSpec,
    target: &Target,
    bubbles: &[BubbleSpec],
    neck_lengths: &[f64],
    w: f64,
    grid: CylinderGrid,
) -> Result<MapField> {
    if bubbles.is_empty() {
        let length = neck_lengths.first().copied().unwrap_or(0.0);
        return curve_sweep(curve, target, length, 0.0, grid);
    }
    require_s2(target)?;
    curve.validate(target)?;
    if let Some(b) = bubbles.iter().find(|b| !(b.scale >= 1.0)) {
        return Err(Error::Contract(format!("bubble scale {} must be at least 1", b.scale)));
    }
    let (lo, hi) = sweep_range(&grid)?;
    let layout = GluedLayout::new(lo, hi, bubbles, neck_lengths, w)?;
    let frames: Vec<[[f64; 3]; 3]> = bubbles
        .iter()
        .map(|b| {
            let before = b.center - 2.5 * w;
            let p = curve.jet(layout.profile(before)[0], 3).pos;
            let sign = layout.sign(before);
            rotation_to(&[sign * p[0], sign * p[1], sign * p[2]])
        })
        .collect();
    MapField::from_fn(grid, target.clone(), |s, th, out| {
        let base_pos = curve.jet(layout.profile(s)[0], 3).pos;
        let sign = layout.sign(s);
        let base = [sign * base_pos[0], sign * base_pos[1], sign * base_pos[2]];
        let near = bubbles.iter().zip(&frames).find(|(b, _)| (s - b.center).abs() < 2.0 * w);
        let value = match near {
            None => base,
            Some((b, frame)) => {
                let bubble = apply(frame, &bubble_point(s, th, b.center, b.scale));
                let d = (s - b.center).abs();
                if d <= w {
                    bubble
                } else {
                    slerp(&bubble, &base, smoothstep((d - w) / w))
                }
            }
        };
        out.copy_from_slice(&value);
        Ok(())
    })
}

/// Systole of the grid's domain, required by families scaled in `ell`.
fn grid_ell(grid: &CylinderGrid) -> Result<f64> {
    grid.metric()
        .ell()
        .ok_or_else(|| Error::Contract("family needs a collar or torus grid".into()))
}

/// Bump `(1 - x^2)^4` on `[-1, 1]`.
pub fn perturbation_bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - x * x).powi(4)
    }
}

/// Geodesic sweep displaced along a fixed tangent normal:
/// `u = project(gamma(phi(s)) + amplitude ell^beta bump(s/X) n)`.
///
/// On spheres `gamma` is the equator and `n = e_3`; on the flat torus `gamma` is the
/// unit-speed circle of the first block and `n` the second block's tangent.
pub fn perturbed_geodesic_sweep(
    target: &Target,
    beta: f64,
    amplitude: f64,
    total_length: f64,
    grid: CylinderGrid,
) -> Result<MapField> {
    if !(beta > 0.5) {
        return Err(Error::Contract(format!("perturbation exponent beta = {beta} must exceed 1/2")));
    }
    let ell = grid_ell(&grid)?;
    let size = amplitude * ell.powf(beta);
    if !(size.abs() < target.tubular_radius()) {
        return Err(Error::Contract(format!(
            "perturbation size {size} leaves the tubular neighbourhood of radius {}",
            target.tubular_radius()
        )));
    }
    let (lo, hi) = sweep_range(&grid)?;
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let speed = total_length / (hi - lo);
    let curve = match target {
        Target::Sphere(_) => CurveSpec::GreatCircle,
        Target::FlatTorus(_) => CurveSpec::torus_line(2f64.sqrt(), 0.0),
    };
    let dim = target.ambient_dim();
    MapField::from_fn(grid, target.clone(), |s, _, out| {
        let p = curve.jet(speed * (s - mid), dim).pos;
        let normal = match target {
            Target::Sphere(_) => {
                let mut n = vec![0.0; dim];
                n[2] = 1.0;
                n
            }
            Target::FlatTorus(_) => FlatTorusR4::block_tangent(&p, 1).to_vec(),
        };
        let b = size * perturbation_bump((s - mid) / half);
        let raw: Vec<f64> = p.iter().zip(&normal).map(|(x, n)| x + b * n).collect();
        target.project_into(&raw, out)
    })
}

/// `u(s, theta) = gamma(period * (s - s_min) / B)` on one period of a torus grid.
pub fn torus_sweep(curve: &CurveSpec, target: &Target, grid: CylinderGrid) -> Result<MapField> {
    if !matches!(grid.metric(), MetricTag::Torus { .. }) {
        return Err(Error::Contract("torus sweep needs a torus grid".into()));
    }
    curve.validate(target)?;
    let (lo, hi) = (grid.s_min(), grid.s_max());
    let speed = curve.period() / (hi - lo);
    let dim = target.ambient_dim();
    MapField::from_fn(grid, target.clone(), |s, _, out| {
        out.copy_from_slice(&curve.jet(speed * (s - lo), dim).pos);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{energy, euclidean_tension, high_energy_set, hopf_profile, tension_l2};
    use crate::geometry::{CollarGeometry, TorusGeometry};
    use crate::target::norm;

    fn collar(ell: f64, h: f64, n_theta: usize) -> CylinderGrid {
        CylinderGrid::collar(&CollarGeometry::new(ell).unwrap(), h, n_theta).unwrap()
    }

    fn max_diff(a: &VectorField, b: &VectorField) -> f64 {
        a.data.chunks(a.dim).zip(b.data.chunks(b.dim))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    #[test]
    fn great_circle_sweep_is_harmonic() {
        let t = Target::sphere();
        let u = curve_sweep(&CurveSpec::GreatCircle, &t, 3.0, 0.0, collar(0.2, 0.1, 16)).unwrap();
        assert!(euclidean_tension(&u).unwrap().sup_norm() < 1e-8);
        assert!(tension_l2(&u).unwrap() < 1e-5);
    }

    #[test]
    fn latitude_sweep_matches_oracle() {
        let t = Target::sphere();
        let curve = CurveSpec::latitude(0.8);
        let length = 2.0 * PI * 0.8;
        let err = |h: f64| {
            let g = collar(0.2, h, 16);
            let u = curve_sweep(&curve, &t, length, 0.0, g.clone()).unwrap();
            let oracle = sweep_tension_oracle(&curve, &t, length, 0.0, &g).unwrap();
            let (r, d) = (oracle.sup_norm(), max_diff(&euclidean_tension(&u).unwrap(), &oracle));
            assert!((r - 0.75 * (length / (2.0 * g.s_max())).powi(2)).abs() < 1e-12);
            d / r
        };
        let (a, b) = (err(0.2), err(0.1));
        assert!(a < 1e-2);
        assert!(((a / b).log2() - 2.0).abs() < 0.3);
    }

    #[test]
    fn latitude_tension_asymptotics() {
        // kappa L^2 (2 pi^3)^{-1/2} ell^{1/2}, with the exact quadrature oracle for comparison
        let t = Target::sphere();
        let length = 2.0 * PI * 0.8;
        for ell in [0.05, 0.025] {
            let u = curve_sweep(&CurveSpec::latitude(0.8), &t, length, 0.0, collar(ell, 0.1, 32)).unwrap();
            let measured = tension_l2(&u).unwrap();
            let asym = 0.75 * length * length * (2.0 * PI.powi(3)).powf(-0.5) * ell.sqrt();
            assert!((measured / asym - 1.0).abs() < 0.1, "ell {ell}: {measured} vs {asym}");
        }
    }

    #[test]
    fn bubble_family_properties() {
        let t = Target::sphere();
        let g = CylinderGrid::euclidean(-10.0, 10.0, 401, 64).unwrap();
        let u = bubble_map(&t, 1.0, 1.0, g).unwrap();
        let e = energy(&u, -7.0, 9.0);
        assert!((e - 4.0 * PI).abs() / (4.0 * PI) < 5e-3);
        let set = high_energy_set(&u, 0.25).unwrap();
        let inner: Vec<_> = set.interior().collect();
        assert_eq!(inner.len(), 1);
        assert!((inner[0].midpoint() - 1.0).abs() < 0.1);
        assert!(hopf_profile(&u).values.iter().all(|v| v.abs() < 0.05));
        assert!(bubble_map(&Target::flat_torus(), 0.0, 1.0, CylinderGrid::euclidean(-1.0, 1.0, 5, 8).unwrap()).is_err());
        assert!(bubble_map(&t, 0.0, 0.5, CylinderGrid::euclidean(-1.0, 1.0, 5, 8).unwrap()).is_err());
    }

    #[test]
    fn glued_without_bubbles_is_the_sweep() {
        let t = Target::sphere();
        let g = collar(0.3, 0.1, 16);
        let a = glued_map(&CurveSpec::GreatCircle, &t, &[], &[2.0], 3.0, g.clone()).unwrap();
        let b = curve_sweep(&CurveSpec::GreatCircle, &t, 2.0, 0.0, g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn glued_energy_is_additive() {
        let t = Target::sphere();
        let g = CylinderGrid::euclidean(-30.0, 30.0, 1201, 64).unwrap();
        let bubbles = [BubbleSpec { center: 0.0, scale: 1.0 }];
        let necks = [1.5, 2.0];
        let u = glued_map(&CurveSpec::GreatCircle, &t, &bubbles, &necks, 3.0, g).unwrap();
        let layout = GluedLayout::new(-30.0, 30.0, &bubbles, &necks, 3.0).unwrap();
        let expect = layout.base_energy() + 4.0 * PI;
        let e = energy(&u, -30.0, 30.0);
        assert!((e - expect).abs() / expect < 0.02, "{e} vs {expect}");
        // the base traverses each neck length and is frozen near the bubble
        assert!((layout.profile(-6.0)[0] - 1.5).abs() < 1e-12);
        assert!((layout.profile(30.0)[0] - 3.5).abs() < 1e-12);
        assert_eq!(layout.profile(5.0)[1], 0.0);
    }

    #[test]
    fn glued_rejects_overlaps() {
        let t = Target::sphere();
        let g = CylinderGrid::euclidean(-30.0, 30.0, 61, 16).unwrap();
        let close = [BubbleSpec { center: -5.0, scale: 1.0 }, BubbleSpec { center: 5.0, scale: 1.0 }];
        assert!(glued_map(&CurveSpec::GreatCircle, &t, &close, &[1.0, 1.0, 1.0], 3.0, g.clone()).is_err());
        let edge = [BubbleSpec { center: 25.0, scale: 1.0 }];
        assert!(glued_map(&CurveSpec::GreatCircle, &t, &edge, &[1.0, 1.0], 3.0, g.clone()).is_err());
        let ok = [BubbleSpec { center: 0.0, scale: 1.0 }];
        assert!(glued_map(&CurveSpec::GreatCircle, &t, &ok, &[1.0], 3.0, g).is_err());
    }

    #[test]
    fn perturbed_sweep_reduces_to_geodesic() {
        let t = Target::sphere();
        let g = collar(0.1, 0.1, 16);
        let u = perturbed_geodesic_sweep(&t, 1.0, 0.0, PI, g.clone()).unwrap();
        assert!(tension_l2(&u).unwrap() < 1e-5);
        let v = perturbed_geodesic_sweep(&t, 1.0, 0.5, PI, g.clone()).unwrap();
        assert!(tension_l2(&v).unwrap() > 1e-4);
        assert!(perturbed_geodesic_sweep(&t, 0.4, 0.5, PI, g.clone()).is_err());
        assert!(perturbed_geodesic_sweep(&t, 1.0, 100.0, PI, g).is_err());
        let torus = perturbed_geodesic_sweep(&Target::flat_torus(), 1.0, 0.5, PI, collar(0.1, 0.1, 16)).unwrap();
        assert!(tension_l2(&torus).unwrap() > 1e-4);
    }

    #[test]
    fn torus_sweep_tension_scales_with_height() {
        let curve = CurveSpec::latitude(0.8);
        let t = Target::sphere();
        let norms: Vec<f64> = [50.0, 100.0, 200.0]
            .iter()
            .map(|&b| {
                let geom = TorusGeometry::new(0.0, b).unwrap();
                let u = torus_sweep(&curve, &t, CylinderGrid::torus(&geom, 0.1, 32).unwrap()).unwrap();
                tension_l2(&u).unwrap().powi(2) * b * b
            })
            .collect();
        for n in &norms {
            assert!((n / norms[0] - 1.0).abs() < 0.05);
        }
        let geom = TorusGeometry::new(0.5, 50.0).unwrap();
        let line = CurveSpec::torus_line(2f64.sqrt(), 0.0);
        let u = torus_sweep(&line, &Target::flat_torus(), CylinderGrid::torus(&geom, 0.1, 32).unwrap()).unwrap();
        assert!(euclidean_tension(&u).unwrap().sup_norm() < 1e-6);
        assert!(torus_sweep(&line, &Target::flat_torus(), collar(0.1, 0.1, 16)).is_err());
    }

    #[test]
    fn oracle_for_torus_sweep() {
        let curve = CurveSpec::latitude(0.8);
        let t = Target::sphere();
        let geom = TorusGeometry::new(0.0, 50.0).unwrap();
        let g = CylinderGrid::torus(&geom, 0.1, 16).unwrap();
        let spec = FamilySpec::TorusSweep { curve: curve.clone() };
        let oracle = spec.tension_oracle(&t, &g).unwrap().unwrap();
        let u = spec.build(&t, g).unwrap();
        let tau = euclidean_tension(&u).unwrap();
        assert!(max_diff(&tau, &oracle) < 1e-3 * oracle.sup_norm());
        assert!(norm(oracle.at(3, 0)) > 0.0);
    }
}
