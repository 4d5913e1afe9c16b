use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::target::{Target, TargetManifold, BLOCK_RADIUS};

/// `linear * t + constant + sum_k (cos[k] cos((k+1) t) + sin[k] sin((k+1) t))`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrigPoly {
    pub linear: f64,
    pub constant: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, ..Default::default() }
    }

    pub fn linear(slope: f64, c: f64) -> Self {
        Self { linear: slope, constant: c, ..Default::default() }
    }

    /// Value and first two derivatives.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let mut v = [self.linear * t + self.constant, self.linear, 0.0];
        let n = self.cos.len().max(self.sin.len());
        for k in 0..n {
            let f = (k + 1) as f64;
            let a = self.cos.get(k).copied().unwrap_or(0.0);
            let b = self.sin.get(k).copied().unwrap_or(0.0);
            let (s, c) = (f * t).sin_cos();
            v[0] += a * c + b * s;
            v[1] += f * (-a * s + b * c);
            v[2] -= f * f * (a * c + b * s);
        }
        v
    }
}

/// An analytic curve on a target with closed-form derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CurveSpec {
    /// Unit-speed equator `(cos t, sin t, 0)` of a sphere.
    GreatCircle,
    /// Unit-speed circle of Euclidean radius `r` at height `sqrt(1 - r^2)`.
    Latitude { r: f64 },
    /// `(sin p cos a, sin p sin a, cos p)` with polar angle `p(t)` and azimuth `a(t)`.
    SphereAngles { polar: TrigPoly, azimuth: TrigPoly },
    /// Point of the flat torus with block angles `(first(t), second(t))`.
    TorusAngles { first: TrigPoly, second: TrigPoly },
}

/// Position, velocity and acceleration in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveJet {
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
    pub acc: Vec<f64>,
}

impl CurveSpec {
    pub fn latitude(r: f64) -> Self {
        CurveSpec::Latitude { r }
    }

    /// Straight line `(winding_0 t, winding_1 t)` in block angles; unit speed when
    /// `r^2 (w_0^2 + w_1^2) = 1`.
    pub fn torus_line(w0: f64, w1: f64) -> Self {
        CurveSpec::TorusAngles { first: TrigPoly::linear(w0, 0.0), second: TrigPoly::linear(w1, 0.0) }
    }

    pub fn validate(&self, target: &Target) -> Result<()> {
        let ok = match (self, target) {
            (CurveSpec::TorusAngles { .. }, Target::FlatTorus(_)) => true,
            (CurveSpec::TorusAngles { .. }, _) => false,
            (_, Target::Sphere(s)) => s.dim() >= 2,
            _ => false,
        };
        if !ok {
            return Err(Error::Contract(format!("curve {self:?} does not live on target {}", target.name())));
        }
        if let CurveSpec::Latitude { r } = self {
            if !(*r > 0.0 && *r <= 1.0) {
                return Err(Error::Contract(format!("latitude radius {r} outside (0, 1]")));
            }
        }
        Ok(())
    }

    /// Parameter period of the closed curve (its length for unit-speed kinds).
    pub fn period(&self) -> f64 {
        match self {
            CurveSpec::Latitude { r } => 2.0 * PI * r,
            CurveSpec::TorusAngles { first, second } => torus_period(first, second),
            _ => 2.0 * PI,
        }
    }

    /// Whether `|gamma'| = 1` identically.
    pub fn is_unit_speed(&self) -> bool {
        match self {
            CurveSpec::GreatCircle | CurveSpec::Latitude { .. } => true,
            CurveSpec::SphereAngles { polar, azimuth } => {
                polar.linear == 0.0
                    && polar.cos.iter().chain(&polar.sin).chain(&azimuth.cos).chain(&azimuth.sin).all(|&c| c == 0.0)
                    && (azimuth.linear * polar.constant.sin()).abs() == 1.0
            }
            CurveSpec::TorusAngles { first, second } => {
                first.cos.iter().chain(&first.sin).chain(&second.cos).chain(&second.sin).all(|&c| c == 0.0)
                    && (BLOCK_RADIUS * first.linear.hypot(second.linear) - 1.0).abs() < 1e-14
            }
        }
    }

    /// Ambient jet at parameter `t`; sphere curves are padded with zeros to `dim`.
    pub fn jet(&self, t: f64, dim: usize) -> CurveJet {
        let mut j = CurveJet { pos: vec![0.0; dim], vel: vec![0.0; dim], acc: vec![0.0; dim] };
        match self {
            CurveSpec::GreatCircle => {
                let (s, c) = t.sin_cos();
                j.pos[..3].copy_from_slice(&[c, s, 0.0]);
                j.vel[..3].copy_from_slice(&[-s, c, 0.0]);
                j.acc[..3].copy_from_slice(&[-c, -s, 0.0]);
            }
            CurveSpec::Latitude { r } => {
                let (s, c) = (t / r).sin_cos();
                j.pos[..3].copy_from_slice(&[r * c, r * s, (1.0 - r * r).max(0.0).sqrt()]);
                j.vel[..3].copy_from_slice(&[-s, c, 0.0]);
                j.acc[..3].copy_from_slice(&[-c / r, -s / r, 0.0]);
            }
            CurveSpec::SphereAngles { polar, azimuth } => {
                let [p, p1, p2] = polar.eval(t);
                let [a, a1, a2] = azimuth.eval(t);
                let (sp, cp) = p.sin_cos();
                let (sa, ca) = a.sin_cos();
                let x = [sp * ca, sp * sa, cp];
                let e_p = [cp * ca, cp * sa, -sp];
                let e_a = [-sa, ca, 0.0];
                let radial = [-ca, -sa, 0.0];
                for i in 0..3 {
                    j.pos[i] = x[i];
                    j.vel[i] = p1 * e_p[i] + a1 * sp * e_a[i];
                    j.acc[i] = p2 * e_p[i] - p1 * p1 * x[i]
                        + (2.0 * p1 * a1 * cp + a2 * sp) * e_a[i]
                        + a1 * a1 * sp * radial[i];
                }
            }
            CurveSpec::TorusAngles { first, second } => {
                let r = BLOCK_RADIUS;
                for (k, poly) in [first, second].into_iter().enumerate() {
                    let [phi, d1, d2] = poly.eval(t);
                    let (s, c) = phi.sin_cos();
                    j.pos[2 * k] = r * c;
                    j.pos[2 * k + 1] = r * s;
                    j.vel[2 * k] = -r * d1 * s;
                    j.vel[2 * k + 1] = r * d1 * c;
                    j.acc[2 * k] = -r * d2 * s - r * d1 * d1 * c;
                    j.acc[2 * k + 1] = r * d2 * c - r * d1 * d1 * s;
                }
            }
        }
        j
    }

    /// Curve tension `gamma'' + A(gamma)(gamma', gamma')` at `t`.
    pub fn tension(&self, target: &Target, t: f64) -> Vec<f64> {
        let j = self.jet(t, target.ambient_dim());
        let mut a = vec![0.0; j.pos.len()];
        target.sff_into(&j.pos, &j.vel, &j.vel, &mut a);
        j.acc.iter().zip(&a).map(|(x, y)| x + y).collect()
    }
}

/// Straight lines close after `2 pi / w` when every winding is an integer multiple of
/// the smallest one `w`; anything else is taken with period `2 pi`.
fn torus_period(first: &TrigPoly, second: &TrigPoly) -> f64 {
    let straight = [first, second].iter().all(|p| p.cos.iter().chain(&p.sin).all(|&c| c == 0.0));
    let slopes: Vec<f64> = [first.linear, second.linear].into_iter().filter(|w| *w != 0.0).map(f64::abs).collect();
    let Some(base) = slopes.iter().copied().reduce(f64::min) else {
        return 2.0 * PI;
    };
    let commensurate = slopes.iter().all(|w| ((w / base) - (w / base).round()).abs() < 1e-12);
    if straight && commensurate {
        2.0 * PI / base
    } else {
        2.0 * PI
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::{dist, norm};

    fn samples() -> Vec<(CurveSpec, Target)> {
        let wobble = CurveSpec::SphereAngles {
            polar: TrigPoly { constant: 1.2, cos: vec![0.1], sin: vec![0.0, 0.05], ..Default::default() },
            azimuth: TrigPoly { linear: 1.0, sin: vec![0.3], ..Default::default() },
        };
        let knot = CurveSpec::TorusAngles {
            first: TrigPoly { linear: 1.0, sin: vec![0.4], ..Default::default() },
            second: TrigPoly { linear: 2.0, cos: vec![0.0, 0.2], ..Default::default() },
        };
        vec![
            (CurveSpec::GreatCircle, Target::sphere()),
            (CurveSpec::latitude(0.8), Target::sphere()),
            (CurveSpec::latitude(0.6), Target::Sphere(crate::target::UnitSphere::new(3))),
            (wobble, Target::sphere()),
            (knot, Target::flat_torus()),
            (CurveSpec::torus_line(2f64.sqrt(), 0.0), Target::flat_torus()),
        ]
    }

    #[test]
    fn positions_on_target_and_derivatives_consistent() {
        for (c, target) in samples() {
            c.validate(&target).unwrap();
            let d = target.ambient_dim();
            let h = 1e-4;
            for i in 0..20 {
                let t = -3.0 + 0.37 * i as f64;
                let j = c.jet(t, d);
                assert!(target.distance_to(&j.pos) < 1e-12);
                let (m, p) = (c.jet(t - h, d), c.jet(t + h, d));
                for k in 0..d {
                    assert!(((p.pos[k] - m.pos[k]) / (2.0 * h) - j.vel[k]).abs() < 1e-7);
                    assert!(((p.vel[k] - m.vel[k]) / (2.0 * h) - j.acc[k]).abs() < 1e-7);
                }
                if c.is_unit_speed() {
                    assert!((norm(&j.vel) - 1.0).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn closed_with_period() {
        for (c, target) in samples() {
            let d = target.ambient_dim();
            assert!(dist(&c.jet(0.3, d).pos, &c.jet(0.3 + c.period(), d).pos) < 1e-12);
        }
    }

    #[test]
    fn latitude_curvature() {
        let c = CurveSpec::latitude(0.8);
        let tau = c.tension(&Target::sphere(), 0.7);
        assert!((norm(&tau) - 0.75).abs() < 1e-14);
        assert!(norm(&CurveSpec::GreatCircle.tension(&Target::sphere(), 0.7)) < 1e-15);
        assert!(norm(&CurveSpec::torus_line(1.0, 1.0).tension(&Target::flat_torus(), 0.7)) < 1e-15);
    }

    #[test]
    fn target_mismatch() {
        assert!(CurveSpec::GreatCircle.validate(&Target::flat_torus()).is_err());
        assert!(CurveSpec::torus_line(1.0, 0.0).validate(&Target::sphere()).is_err());
        assert!(CurveSpec::latitude(1.5).validate(&Target::sphere()).is_err());
        assert!(!CurveSpec::torus_line(1.0, 0.0).is_unit_speed());
        assert!(CurveSpec::torus_line(1.0, 1.0).is_unit_speed());
    }
}
