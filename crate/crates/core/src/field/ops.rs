use serde::{Deserialize, Serialize};

use super::kernel::exp_kernel_recursive;
use super::{CylinderGrid, MapField, MetricTag, ScalarProfile, VectorField};
use crate::error::{Error, Result};
use crate::target::{dot, TargetManifold};

/// Writes `du/ds` at node `(j, k)` into `out`.
///
/// Central differences in the interior, one-sided second-order stencils at the
/// first and last rows (first order if the grid has only two rows).
pub(crate) fn d_s(u: &MapField, j: usize, k: usize, out: &mut [f64]) {
    let n = u.grid().n_s();
    let h = u.grid().h_s();
    let at = |jj: usize, i: usize| u.value(jj, k)[i];
    for (i, o) in out.iter_mut().enumerate() {
        *o = if n == 2 {
            (at(1, i) - at(0, i)) / h
        } else if j == 0 {
            (-3.0 * (at(0, i) - at(1, i)) + (at(1, i) - at(2, i))) / (2.0 * h)
        } else if j + 1 == n {
            (3.0 * (at(j, i) - at(j - 1, i)) - (at(j - 1, i) - at(j - 2, i))) / (2.0 * h)
        } else {
            (at(j + 1, i) - at(j - 1, i)) / (2.0 * h)
        };
    }
}

fn d_ss(u: &MapField, j: usize, k: usize, out: &mut [f64]) {
    let n = u.grid().n_s();
    let h2 = u.grid().h_s().powi(2);
    let at = |jj: usize, i: usize| u.value(jj, k)[i];
    for (i, o) in out.iter_mut().enumerate() {
        *o = if j == 0 {
            (2.0 * (at(0, i) - at(1, i)) - 3.0 * (at(1, i) - at(2, i)) + (at(2, i) - at(3, i))) / h2
        } else if j + 1 == n {
            (2.0 * (at(j, i) - at(j - 1, i)) - 3.0 * (at(j - 1, i) - at(j - 2, i)) + (at(j - 2, i) - at(j - 3, i))) / h2
        } else {
            ((at(j + 1, i) - at(j, i)) - (at(j, i) - at(j - 1, i))) / h2
        };
    }
}

pub(crate) fn d_theta(u: &MapField, j: usize, k: usize, out: &mut [f64]) {
    let n = u.grid().n_theta();
    let h = u.grid().h_theta();
    let (a, b) = (u.value(j, (k + n - 1) % n), u.value(j, (k + 1) % n));
    for (i, o) in out.iter_mut().enumerate() {
        *o = (b[i] - a[i]) / (2.0 * h);
    }
}

pub(crate) fn d_theta_theta(u: &MapField, j: usize, k: usize, out: &mut [f64]) {
    let n = u.grid().n_theta();
    let h2 = u.grid().h_theta().powi(2);
    let (a, c, b) = (u.value(j, (k + n - 1) % n), u.value(j, k), u.value(j, (k + 1) % n));
    for (i, o) in out.iter_mut().enumerate() {
        *o = ((b[i] - c[i]) - (c[i] - a[i])) / h2;
    }
}

/// `tau_{g_E}(u) = u_ss + u_thth + A(u)(u_s, u_s) + A(u)(u_th, u_th)` at every node.
///
/// First derivatives are projected onto the tangent space before entering `A`.
pub fn euclidean_tension(u: &MapField) -> Result<VectorField> {
    let grid = u.grid();
    let (ns, nt, d) = (grid.n_s(), grid.n_theta(), u.dim());
    if ns < 5 || nt < 8 {
        return Err(Error::Contract(format!(
            "tension needs n_s >= 5 and n_theta >= 8 (got {ns} x {nt})"
        )));
    }
    let target = u.target();
    let mut tau = VectorField::zeros(ns, nt, d);
    let (mut us, mut ut, mut tan, mut a, mut second_deriv) =
        (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for j in 0..ns {
        for k in 0..nt {
            let p = u.value(j, k);
            let out = tau.at_mut(j, k);
            d_ss(u, j, k, &mut second_deriv);
            out.copy_from_slice(&second_deriv);
            d_theta_theta(u, j, k, &mut second_deriv);
            for i in 0..d {
                out[i] += second_deriv[i];
            }
            d_s(u, j, k, &mut us);
            d_theta(u, j, k, &mut ut);
            for v in [&us, &ut] {
                target.projection_differential_into(p, v, &mut tan);
                target.sff_into(p, &tan, &tan, &mut a);
                for i in 0..d {
                    out[i] += a[i];
                }
            }
        }
    }
    Ok(tau)
}

/// `tau_g(u) = rho^{-2} tau_{g_E}(u)` for hyperbolic and torus grids.
pub fn hyperbolic_tension(u: &MapField) -> Result<VectorField> {
    if matches!(u.grid().metric(), MetricTag::Euclidean) {
        return Err(Error::Contract("hyperbolic tension needs a hyperbolic or torus grid".into()));
    }
    let mut tau = euclidean_tension(u)?;
    let grid = u.grid();
    for j in 0..grid.n_s() {
        let w = grid.rho(j).powi(-2);
        for k in 0..grid.n_theta() {
            tau.at_mut(j, k).iter_mut().for_each(|x| *x *= w);
        }
    }
    Ok(tau)
}

/// `int |tau|^2 dtheta` per row.
pub fn tension_sq_row_profile(grid: &CylinderGrid, tau: &VectorField) -> ScalarProfile {
    let ht = grid.h_theta();
    let values = (0..grid.n_s())
        .map(|j| (0..grid.n_theta()).map(|k| dot(tau.at(j, k), tau.at(j, k))).sum::<f64>() * ht)
        .collect();
    ScalarProfile { s: grid.s_values(), values }
}

/// `||tau_g||_{L^2(g)}` from a Euclidean tension field: `(int rho^{-2} |tau_E|^2)^{1/2}`.
pub(crate) fn tension_l2_of(grid: &CylinderGrid, tau_e: &VectorField) -> f64 {
    let rows = tension_sq_row_profile(grid, tau_e);
    rows.values
        .iter()
        .enumerate()
        .map(|(j, v)| grid.s_weight(j) * v * grid.rho(j).powi(-2))
        .sum::<f64>()
        .sqrt()
}

/// `||tau_g(u)||_{L^2(g)}`; on Euclidean grids this is the flat `L^2` norm.
pub fn tension_l2(u: &MapField) -> Result<f64> {
    Ok(tension_l2_of(u.grid(), &euclidean_tension(u)?))
}

/// Row integrals of `f(|u_s|^2, |u_th|^2)` by the trapezoid rule in `theta`.
fn row_profile<F: Fn(f64, f64) -> f64>(u: &MapField, f: F) -> ScalarProfile {
    let grid = u.grid();
    let d = u.dim();
    let mut us = vec![0.0; d];
    let mut ut = vec![0.0; d];
    let ht = grid.h_theta();
    let values = (0..grid.n_s())
        .map(|j| {
            let mut acc = 0.0;
            for k in 0..grid.n_theta() {
                d_s(u, j, k, &mut us);
                d_theta(u, j, k, &mut ut);
                acc += f(dot(&us, &us), dot(&ut, &ut));
            }
            acc * ht
        })
        .collect();
    ScalarProfile { s: grid.s_values(), values }
}

/// `e(s) = 1/2 int (|u_s|^2 + |u_th|^2) dtheta`.
pub fn energy_density_profile(u: &MapField) -> ScalarProfile {
    row_profile(u, |a, b| 0.5 * (a + b))
}

/// Angular energy `int |u_th|^2 dtheta` per row.
pub fn angular_energy_profile(u: &MapField) -> ScalarProfile {
    row_profile(u, |_, b| b)
}

/// `int (|u_s|^2 - |u_th|^2) dtheta` per row (real part of the Hopf differential).
pub fn hopf_profile(u: &MapField) -> ScalarProfile {
    row_profile(u, |a, b| a - b)
}

/// Fiber mean of `|u_s|`.
pub fn alpha_profile(u: &MapField) -> ScalarProfile {
    let mut p = row_profile(u, |a, _| a.sqrt());
    p.values.iter_mut().for_each(|v| *v /= 2.0 * std::f64::consts::PI);
    p
}

/// `2 int tau_E . u_s dtheta` per row; equals `d/ds` of [`hopf_profile`].
pub fn hopf_transport_profile(u: &MapField, tau_e: &VectorField) -> ScalarProfile {
    let grid = u.grid();
    let mut us = vec![0.0; u.dim()];
    let values = (0..grid.n_s())
        .map(|j| {
            let mut acc = 0.0;
            for k in 0..grid.n_theta() {
                d_s(u, j, k, &mut us);
                acc += dot(tau_e.at(j, k), &us);
            }
            2.0 * acc * grid.h_theta()
        })
        .collect();
    ScalarProfile { s: grid.s_values(), values }
}

/// Integral of a nodal profile, linearly interpolated between nodes, over arbitrary windows.
#[derive(Debug, Clone)]
pub(crate) struct CumulativeIntegral {
    s_min: f64,
    h: f64,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl CumulativeIntegral {
    pub(crate) fn new(grid: &CylinderGrid, values: &[f64]) -> Self {
        let h = grid.h_s();
        let mut cumulative = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            cumulative.push(acc);
        }
        Self { s_min: grid.s_min(), h, values: values.to_vec(), cumulative }
    }

    fn span(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.h
    }

    /// `int_{s_min}^{s}` with `s` clamped to the grid.
    fn upto(&self, s: f64) -> f64 {
        let x = ((s - self.s_min) / self.h).clamp(0.0, (self.values.len() - 1) as f64);
        let j = (x.floor() as usize).min(self.values.len() - 2);
        let t = x - j as f64;
        let (a, b) = (self.values[j], self.values[j + 1]);
        self.cumulative[j] + self.h * (a * t + 0.5 * (b - a) * t * t)
    }

    /// `int_a^b`, zero for empty windows.
    pub(crate) fn between(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        (self.upto(b) - self.upto(a)).max(0.0)
    }

    /// `int_a^b` with the profile extended periodically beyond the grid.
    fn between_periodic(&self, a: f64, b: f64) -> f64 {
        let period = self.span();
        let lo = self.s_min;
        let mut total = 0.0;
        let (mut a, b) = (a, b);
        while a < b {
            let shift = ((a - lo) / period).floor() * period;
            let end = b.min(lo + shift + period);
            total += self.between(a - shift, end - shift);
            if end == b {
                break;
            }
            a = end;
        }
        total
    }
}

/// Dirichlet energy of `u` on `[a, b] x S^1`.
///
/// Only first derivatives enter, so the value is the same under every metric tag.
pub fn energy(u: &MapField, a: f64, b: f64) -> f64 {
    let e = energy_density_profile(u);
    CumulativeIntegral::new(u.grid(), &e.values).between(a, b)
}

/// A closed interval of `s`-values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SInterval {
    pub lo: f64,
    pub hi: f64,
    /// Touches an end of the grid (the collar-end bands belong to such components).
    pub boundary: bool,
}

impl SInterval {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, s: f64) -> bool {
        self.lo <= s && s <= self.hi
    }

    pub fn distance(&self, s: f64) -> f64 {
        (self.lo - s).max(s - self.hi).max(0.0)
    }
}

/// The high-energy set `{|s| >= X - 1} u {E(u, [s-1, s+1]) >= eps0}` as maximal node intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighEnergySet {
    pub eps0: f64,
    pub intervals: Vec<SInterval>,
    /// Period in `s` for torus grids, where distances wrap around.
    pub period: Option<f64>,
}

impl HighEnergySet {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, s: f64) -> bool {
        self.distance(s) == 0.0
    }

    /// `dist(s, A)`; infinite when the set is empty.
    pub fn distance(&self, s: f64) -> f64 {
        let mut best = f64::INFINITY;
        for iv in &self.intervals {
            best = best.min(iv.distance(s));
            if let Some(p) = self.period {
                best = best.min(iv.distance(s - p)).min(iv.distance(s + p));
            }
        }
        best
    }

    /// Components away from the grid ends, in increasing order.
    pub fn interior(&self) -> impl Iterator<Item = &SInterval> {
        self.intervals.iter().filter(|iv| !iv.boundary)
    }
}

/// Computes the high-energy set with threshold `eps0`.
///
/// Collar and Euclidean grids always include bands of width one at the domain
/// ends (for collars, `|s| >= X - 1`). Torus grids have no ends: energy windows
/// wrap around the period.
pub fn high_energy_set(u: &MapField, eps0: f64) -> Result<HighEnergySet> {
    let grid = u.grid();
    if !(eps0 > 0.0) {
        return Err(Error::Contract(format!("eps0 must be positive, got {eps0}")));
    }
    if grid.s_max() - grid.s_min() < 2.0 {
        return Err(Error::Contract("high-energy set needs an s-range of length at least 2".into()));
    }
    let e = energy_density_profile(u);
    let cum = CumulativeIntegral::new(grid, &e.values);
    let torus = matches!(grid.metric(), MetricTag::Torus { .. });
    let (band_lo, band_hi) = match grid.metric() {
        MetricTag::Hyperbolic { ell } => {
            let x = crate::geometry::collar_half_length(*ell)?;
            (-x + 1.0, x - 1.0)
        }
        MetricTag::Euclidean => (grid.s_min() + 1.0, grid.s_max() - 1.0),
        MetricTag::Torus { .. } => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let mask: Vec<bool> = (0..grid.n_s())
        .map(|j| {
            let s = grid.s(j);
            let window = if torus {
                cum.between_periodic(s - 1.0, s + 1.0)
            } else {
                cum.between(s - 1.0, s + 1.0)
            };
            s <= band_lo || s >= band_hi || window >= eps0
        })
        .collect();
    let last = grid.n_s() - 1;
    let mut intervals = Vec::new();
    let mut j = 0;
    while j <= last {
        if !mask[j] {
            j += 1;
            continue;
        }
        let start = j;
        while j < last && mask[j + 1] {
            j += 1;
        }
        intervals.push(SInterval {
            lo: grid.s(start),
            hi: grid.s(j),
            boundary: start == 0 || j == last,
        });
        j += 1;
    }
    Ok(HighEnergySet {
        eps0,
        intervals,
        period: torus.then(|| grid.s_max() - grid.s_min()),
    })
}

/// `R_u(s) = int |tau_E|^2 e^{-|s-q|} dq dtheta + e^{-dist(s, A)}`.
pub fn remainder_profile(u: &MapField, tau_e: &VectorField, set: &HighEnergySet) -> ScalarProfile {
    let grid = u.grid();
    let rows = tension_sq_row_profile(grid, tau_e);
    let s = grid.s_values();
    let conv = exp_kernel_recursive(&s, &rows.values);
    let values = s.iter().zip(conv).map(|(&x, c)| c + (-set.distance(x)).exp()).collect();
    ScalarProfile { s, values }
}

/// Diagonal of the coordinate bounding box of `u([a, b] x S^1)`, an upper bound
/// for the ambient diameter within a factor `sqrt(dim)`.
pub fn oscillation(u: &MapField, a: f64, b: f64) -> f64 {
    let grid = u.grid();
    let rows = grid.indices_in(a, b);
    if rows.is_empty() {
        return 0.0;
    }
    let d = u.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for j in rows {
        for k in 0..grid.n_theta() {
            for (i, &x) in u.value(j, k).iter().enumerate() {
                lo[i] = lo[i].min(x);
                hi[i] = hi[i].max(x);
            }
        }
    }
    lo.iter().zip(&hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CollarGeometry;
    use crate::target::Target;
    use std::f64::consts::PI;

    /// Inverse stereographic image of `e^{s + i theta}`.
    fn bubble(s: f64, th: f64, out: &mut [f64]) -> Result<()> {
        let r = s.exp();
        let d = 1.0 + r * r;
        out.copy_from_slice(&[2.0 * r * th.cos() / d, 2.0 * r * th.sin() / d, (r * r - 1.0) / d]);
        Ok(())
    }

    fn bubble_field(t: f64, h: f64, n_theta: usize) -> MapField {
        let n = (2.0 * t / h).round() as usize + 1;
        let g = CylinderGrid::euclidean(-t, t, n, n_theta).unwrap();
        MapField::from_fn(g, Target::sphere(), bubble).unwrap()
    }

    fn sweep_field(lambda: f64, t: f64, n: usize) -> MapField {
        let g = CylinderGrid::euclidean(-t, t, n, 16).unwrap();
        MapField::from_fn(g, Target::sphere(), |s, _, out| {
            let x = lambda * s;
            out.copy_from_slice(&[x.cos(), x.sin(), 0.0]);
            Ok(())
        })
        .unwrap()
    }

    #[test]
    fn constant_map_has_no_tension_or_energy() {
        let g = CylinderGrid::euclidean(-3.0, 3.0, 31, 16).unwrap();
        let u = MapField::from_fn(g, Target::sphere(), |_, _, out| {
            out.copy_from_slice(&[0.0, 0.6, 0.8]);
            Ok(())
        })
        .unwrap();
        assert_eq!(euclidean_tension(&u).unwrap().sup_norm(), 0.0);
        assert_eq!(energy(&u, -3.0, 3.0), 0.0);
        assert!(alpha_profile(&u).values.iter().all(|&v| v == 0.0));
        assert_eq!(oscillation(&u, -3.0, 3.0), 0.0);
        let set = high_energy_set(&u, 0.25).unwrap();
        assert_eq!(set.intervals.len(), 2);
        assert!(set.intervals.iter().all(|iv| iv.boundary));
    }

    #[test]
    fn small_grids_are_rejected() {
        let g = CylinderGrid::euclidean(0.0, 1.0, 4, 16).unwrap();
        let u = MapField::from_fn(g, Target::sphere(), bubble).unwrap();
        assert!(matches!(euclidean_tension(&u), Err(Error::Contract(_))));
        assert!(matches!(high_energy_set(&u, 0.25), Err(Error::Contract(_))));
        let g = CylinderGrid::euclidean(0.0, 1.0, 9, 4).unwrap();
        let u = MapField::from_fn(g, Target::sphere(), bubble).unwrap();
        assert!(euclidean_tension(&u).is_err());
    }

    #[test]
    fn harmonic_tension_converges_at_second_order() {
        let coarse = euclidean_tension(&bubble_field(4.0, 0.1, 64)).unwrap().sup_norm();
        let fine = euclidean_tension(&bubble_field(4.0, 0.05, 128)).unwrap().sup_norm();
        let order = (coarse / fine).log2();
        assert!((order - 2.0).abs() < 0.3, "order {order}");

        let coarse = euclidean_tension(&sweep_field(0.7, 3.0, 31)).unwrap().sup_norm();
        let fine = euclidean_tension(&sweep_field(0.7, 3.0, 61)).unwrap().sup_norm();
        let order = (coarse / fine).log2();
        assert!((order - 2.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn bubble_energy_is_one_quantum() {
        let u = bubble_field(8.0, 0.05, 128);
        let e = energy(&u, -8.0, 8.0);
        let exact = 4.0 * PI * 8f64.tanh();
        assert!((e - exact).abs() / exact < 1e-3);
        assert!((e - 4.0 * PI).abs() / (4.0 * PI) < 5e-3);
    }

    #[test]
    fn bubble_profiles_match_closed_forms() {
        let u = bubble_field(6.0, 0.025, 256);
        let theta = angular_energy_profile(&u);
        let j0 = u.grid().nearest_index(0.0);
        let j3 = u.grid().nearest_index(3.0);
        assert!((theta.values[j0] - 2.0 * PI).abs() < 5e-3);
        let ratio = theta.values[j3] / theta.values[j0];
        assert!((ratio - 0.009_866_037_165_440_19).abs() < 1e-4);
        let alpha = alpha_profile(&u);
        for j in (0..u.grid().n_s()).step_by(40).skip(1) {
            let s = u.grid().s(j);
            assert!((alpha.values[j] - 1.0 / s.cosh()).abs() < 1e-3);
        }
        let hopf = hopf_profile(&u);
        let worst = hopf.values[1..hopf.len() - 1].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 4.0 * 0.025f64.powi(2), "{worst}");
    }

    #[test]
    fn sweep_profiles() {
        let lambda = 0.7;
        let u = sweep_field(lambda, 3.0, 61);
        assert!(angular_energy_profile(&u).values.iter().all(|&v| v == 0.0));
        for v in &hopf_profile(&u).values[1..60] {
            assert!((v - 2.0 * PI * lambda * lambda).abs() < 1e-2);
        }
        for v in &alpha_profile(&u).values[1..60] {
            assert!((v - lambda).abs() < 1e-2);
        }
        let e = energy(&u, -1.0, 2.0);
        assert!((e - PI * lambda * lambda * 3.0).abs() < 1e-2);
        assert_eq!(oscillation(&u, 0.5, 0.5), 0.0);
    }

    #[test]
    fn energy_is_metric_independent() {
        let geom = CollarGeometry::new(0.1).unwrap();
        let x = geom.half_length();
        let spec = super::super::GridSpec {
            s_min: -10.0,
            s_max: 10.0,
            n_s: 201,
            n_theta: 32,
            metric: MetricTag::hyperbolic(&geom),
        };
        let hyp = MapField::from_fn(CylinderGrid::new(spec).unwrap(), Target::sphere(), bubble).unwrap();
        let euc = MapField::from_fn(CylinderGrid::euclidean(-10.0, 10.0, 201, 32).unwrap(), Target::sphere(), bubble)
            .unwrap();
        assert_eq!(energy(&hyp, -10.0, 10.0).to_bits(), energy(&euc, -10.0, 10.0).to_bits());
        assert!(x > 10.0);
        assert!(hyperbolic_tension(&euc).is_err());
        let te = euclidean_tension(&hyp).unwrap();
        let tg = hyperbolic_tension(&hyp).unwrap();
        for j in [0, 50, 100] {
            let w = hyp.grid().rho(j).powi(-2);
            assert_eq!(tg.at(j, 3)[0], te.at(j, 3)[0] * w);
        }
    }

    #[test]
    fn bubble_high_energy_edge() {
        let h = 0.05;
        let u = bubble_field(12.0, h, 64);
        let set = high_energy_set(&u, 0.25).unwrap();
        let inner: Vec<_> = set.interior().collect();
        assert_eq!(inner.len(), 1);
        // root of 2 pi (tanh(s + 1) - tanh(s - 1)) = 0.25
        let edge = 2.938_986_342_646_847;
        assert!((inner[0].hi - edge).abs() <= 2.0 * h, "{:?}", inner[0]);
        assert!((inner[0].lo + edge).abs() <= 2.0 * h);
        assert!(set.contains(0.0));
        assert!(!set.contains(6.0));
        assert!((set.distance(6.0) - (6.0 - inner[0].hi)).abs() < 1e-12);
    }

    #[test]
    fn two_separated_bubbles() {
        let g = CylinderGrid::euclidean(-25.0, 25.0, 1001, 32).unwrap();
        let u = MapField::from_fn(g, Target::sphere(), |s, th, out| {
            // bubble at -10 and its mirror image at +10, matching at the north pole
            bubble(10.0 - s.abs(), th, out)
        })
        .unwrap();
        let set = high_energy_set(&u, 0.25).unwrap();
        let mids: Vec<f64> = set.interior().map(|iv| iv.midpoint()).collect();
        assert_eq!(mids.len(), 2);
        assert!((mids[0] + 10.0).abs() < 0.1 && (mids[1] - 10.0).abs() < 0.1);
        assert_eq!(set.intervals.len(), 4);
    }

    #[test]
    fn hopf_identity_is_second_order() {
        // non-harmonic map: latitude sweep with a theta-dependent wobble
        let resid = |n: usize| {
            let g = CylinderGrid::euclidean(-2.0, 2.0, n, 8 * (n - 1) / 10).unwrap();
            let u = MapField::from_fn(g, Target::sphere(), |s, th, out| {
                let (a, b) = (0.8 * s, 0.3 + 0.2 * th.sin() * (0.5 * s).cos());
                out.copy_from_slice(&[b.cos() * a.cos(), b.cos() * a.sin(), b.sin()]);
                Ok(())
            })
            .unwrap();
            let tau = euclidean_tension(&u).unwrap();
            let ip = hopf_profile(&u);
            let tr = hopf_transport_profile(&u, &tau);
            let h = u.grid().h_s();
            let mut worst = 0.0f64;
            for j in 2..ip.len() - 2 {
                let d = (ip.values[j + 1] - ip.values[j - 1]) / (2.0 * h);
                worst = worst.max((d - tr.values[j]).abs());
            }
            worst
        };
        let (a, b) = (resid(41), resid(81));
        assert!(a < 0.05, "{a}");
        let order = (a / b).log2();
        assert!((order - 2.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn bubble_annulus_oscillation() {
        let u = bubble_field(6.0, 0.05, 64);
        let osc = oscillation(&u, 2.0, 4.0);
        // image is the spherical cap of Euclidean radius 2 e^2 / (1 + e^4) around the pole
        let cap = 2.0 * 2.0 * 2f64.exp() / (1.0 + 4f64.exp());
        assert!(osc >= cap && osc <= 3f64.sqrt() * cap);
    }

    #[test]
    fn remainder_combines_tension_and_distance() {
        let u = sweep_field(0.5, 5.0, 101);
        let tau = euclidean_tension(&u).unwrap();
        let set = high_energy_set(&u, 10.0).unwrap();
        let r = remainder_profile(&u, &tau, &set);
        let j = u.grid().nearest_index(0.0);
        assert!((r.values[j] - (-4.0f64).exp()).abs() < 1e-6);
        let mut doubled = tau.clone();
        doubled.data.iter_mut().for_each(|x| *x *= 2.0);
        let g = u.grid();
        assert!((tension_l2_of(g, &doubled) - 2.0 * tension_l2_of(g, &tau)).abs() < 1e-15);
    }
}
