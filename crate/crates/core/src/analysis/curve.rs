use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{alpha_profile, d_s, MapField, MetricTag};
use crate::target::{dot, norm, Target, TargetManifold};

/// Largest `| |v'| - 1 |` accepted at interior samples of a unit-speed curve.
pub const UNIT_SPEED_TOLERANCE: f64 = 1e-3;

/// The curve of projected fiber means `s -> pi(mean_theta u(s, .))` with its derivative.
#[derive(Debug, Clone)]
pub struct ConnectingCurve {
    target: Target,
    dim: usize,
    s: Vec<f64>,
    points: Vec<f64>,
    velocity: Vec<f64>,
    valid: Vec<bool>,
}

/// Projects the fiber mean of every row. Rows whose mean has no nearest point are
/// masked, never filled in.
pub fn connecting_curve(u: &MapField) -> ConnectingCurve {
    let grid = u.grid();
    let target = u.target();
    let d = u.dim();
    let n = grid.n_s();
    let inv = 1.0 / grid.n_theta() as f64;
    let mut points = vec![0.0; n * d];
    let mut velocity = vec![0.0; n * d];
    let mut valid = vec![false; n];
    let mut mean = vec![0.0; d];
    let mut mean_ds = vec![0.0; d];
    let mut us = vec![0.0; d];
    for j in 0..n {
        mean.fill(0.0);
        mean_ds.fill(0.0);
        for k in 0..grid.n_theta() {
            d_s(u, j, k, &mut us);
            for i in 0..d {
                mean[i] += u.value(j, k)[i] * inv;
                mean_ds[i] += us[i] * inv;
            }
        }
        let out = &mut points[j * d..(j + 1) * d];
        if target.project_into(&mean, out).is_ok() {
            valid[j] = true;
            target.projection_differential_into(&mean, &mean_ds, &mut velocity[j * d..(j + 1) * d]);
        } else {
            out.fill(0.0);
        }
    }
    ConnectingCurve { target: target.clone(), dim: d, s: grid.s_values(), points, velocity, valid }
}

impl ConnectingCurve {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn s(&self, j: usize) -> f64 {
        self.s[j]
    }

    pub fn is_valid(&self, j: usize) -> bool {
        self.valid[j]
    }

    /// Point at node `j`, `None` where masked.
    pub fn point(&self, j: usize) -> Option<&[f64]> {
        self.valid[j].then(|| &self.points[j * self.dim..(j + 1) * self.dim])
    }

    pub fn velocity(&self, j: usize) -> Option<&[f64]> {
        self.valid[j].then(|| &self.velocity[j * self.dim..(j + 1) * self.dim])
    }

    pub fn speed(&self, j: usize) -> Option<f64> {
        self.velocity(j).map(norm)
    }

    /// Node indices with `b <= s <= a`.
    pub fn nodes_in(&self, b: f64, a: f64) -> std::ops::Range<usize> {
        if self.s.len() < 2 {
            return 0..self.s.len();
        }
        let h = self.s[1] - self.s[0];
        let tol = 1e-9 * h;
        let lo = ((b - self.s[0] - tol) / h).ceil().max(0.0) as usize;
        let hi = ((a - self.s[0] + tol) / h).floor();
        if hi < 0.0 || lo as f64 > hi {
            return 0..0;
        }
        lo..(hi as usize).min(self.s.len() - 1) + 1
    }

    pub fn masked_in(&self, b: f64, a: f64) -> Vec<usize> {
        self.nodes_in(b, a).filter(|&j| !self.valid[j]).collect()
    }

    /// `int_b^a |u'| ds` along the Hermite interpolant used for reparametrization.
    pub fn length_between(&self, b: f64, a: f64) -> Result<f64> {
        let h = Hermite::new(self, b, a)?;
        Ok(h.total())
    }
}

/// Speed gate evaluated before reparametrizing on an interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityReport {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    pub masked: Vec<usize>,
    pub min_speed: f64,
    /// `min |u'| / alpha`, with `alpha` the fiber mean of `|u_s|`.
    pub min_alpha_ratio: f64,
    /// `min |u'| / (scale * delta)`; scale is the conformal factor on collars, `ell^2` on tori.
    pub min_scaled_ratio: f64,
    pub passed: bool,
}

/// Scale against which neck speeds are compared: `rho(s)` on collars, `ell^2` on tori.
pub(crate) fn speed_scale(u: &MapField, j: usize) -> f64 {
    match u.grid().metric() {
        MetricTag::Torus { .. } => u.grid().metric().ell().map_or(1.0, |l| l * l),
        _ => u.grid().rho(j),
    }
}

/// Checks `|u'| >= alpha / 2 > 0` on `[b, a]`. Masked nodes fail the gate.
pub fn velocity_lower_bound_check(u: &MapField, curve: &ConnectingCurve, b: f64, a: f64, delta: f64) -> VelocityReport {
    let alpha = alpha_profile(u);
    let nodes = curve.nodes_in(b, a);
    let masked = curve.masked_in(b, a);
    let mut min_speed = f64::INFINITY;
    let mut min_alpha_ratio = f64::INFINITY;
    let mut min_scaled_ratio = f64::INFINITY;
    for j in nodes.clone().filter(|&j| curve.is_valid(j)) {
        let v = curve.speed(j).unwrap_or(0.0);
        min_speed = min_speed.min(v);
        let ratio = if alpha.values[j] > 0.0 {
            v / alpha.values[j]
        } else if v > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        min_alpha_ratio = min_alpha_ratio.min(ratio);
        let scale = speed_scale(u, j) * delta;
        if scale > 0.0 {
            min_scaled_ratio = min_scaled_ratio.min(v / scale);
        }
    }
    let passed = !nodes.is_empty() && masked.is_empty() && min_speed > 0.0 && min_alpha_ratio >= 0.5;
    VelocityReport {
        lo: b,
        hi: a,
        nodes: nodes.len(),
        masked,
        min_speed,
        min_alpha_ratio,
        min_scaled_ratio,
        passed,
    }
}

const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Piecewise cubic Hermite interpolant of the curve on a run of valid nodes, with
/// cell lengths by 5-point Gauss-Legendre.
struct Hermite<'a> {
    curve: &'a ConnectingCurve,
    first: usize,
    h: f64,
    cumulative: Vec<f64>,
}

impl<'a> Hermite<'a> {
    fn new(curve: &'a ConnectingCurve, b: f64, a: f64) -> Result<Self> {
        let nodes = curve.nodes_in(b, a);
        if nodes.len() < 2 {
            return Err(Error::Contract(format!("interval [{b}, {a}] holds fewer than two curve nodes")));
        }
        for j in nodes.clone() {
            if !curve.valid[j] {
                return Err(Error::Contract(format!(
                    "connecting curve is masked at node {j} (s = {}) inside [{b}, {a}]",
                    curve.s[j]
                )));
            }
            if !(norm(curve.velocity(j).unwrap_or(&[])) > 1e-14) {
                return Err(Error::ZeroVelocity { node: j, s: curve.s[j] });
            }
        }
        let h = curve.s[1] - curve.s[0];
        let mut this = Self { curve, first: nodes.start, h, cumulative: vec![0.0] };
        for cell in 0..nodes.len() - 1 {
            let l = this.partial(cell, 1.0);
            let last = *this.cumulative.last().unwrap();
            this.cumulative.push(last + l);
        }
        Ok(this)
    }

    fn cells(&self) -> usize {
        self.cumulative.len() - 1
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn ends(&self, cell: usize) -> (&[f64], &[f64], &[f64], &[f64]) {
        let j = self.first + cell;
        let d = self.curve.dim;
        let c = self.curve;
        (
            &c.points[j * d..(j + 1) * d],
            &c.velocity[j * d..(j + 1) * d],
            &c.points[(j + 1) * d..(j + 2) * d],
            &c.velocity[(j + 1) * d..(j + 2) * d],
        )
    }

    fn eval(&self, cell: usize, x: f64, out: &mut [f64]) {
        let (p0, d0, p1, d1) = self.ends(cell);
        let (x2, x3) = (x * x, x * x * x);
        let h00 = 2.0 * x3 - 3.0 * x2 + 1.0;
        let h10 = x3 - 2.0 * x2 + x;
        let h01 = -2.0 * x3 + 3.0 * x2;
        let h11 = x3 - x2;
        for i in 0..out.len() {
            out[i] = h00 * p0[i] + h10 * self.h * d0[i] + h01 * p1[i] + h11 * self.h * d1[i];
        }
    }

    /// `|dH/ds|` at local coordinate `x` in the cell.
    fn speed(&self, cell: usize, x: f64) -> f64 {
        let (p0, d0, p1, d1) = self.ends(cell);
        let x2 = x * x;
        let g00 = 6.0 * x2 - 6.0 * x;
        let g10 = 3.0 * x2 - 4.0 * x + 1.0;
        let g11 = 3.0 * x2 - 2.0 * x;
        let mut acc = 0.0;
        for i in 0..p0.len() {
            let v = (g00 * (p0[i] - p1[i])) / self.h + g10 * d0[i] + g11 * d1[i];
            acc += v * v;
        }
        acc.sqrt()
    }

    /// Length of the cell from its start to local coordinate `x`.
    fn partial(&self, cell: usize, x: f64) -> f64 {
        let half = 0.5 * x;
        GAUSS_NODES
            .iter()
            .zip(&GAUSS_WEIGHTS)
            .map(|(g, w)| w * self.speed(cell, half * (g + 1.0)))
            .sum::<f64>()
            * half
            * self.h
    }

    /// Cell and local coordinate at which the length from the start equals `target`.
    fn locate(&self, target: f64) -> (usize, f64) {
        let cell = match self.cumulative.binary_search_by(|c| c.total_cmp(&target)) {
            Ok(i) => i.min(self.cells() - 1),
            Err(i) => i.saturating_sub(1).min(self.cells() - 1),
        };
        let want = target - self.cumulative[cell];
        let len = self.cumulative[cell + 1] - self.cumulative[cell];
        let mut x = (want / len).clamp(0.0, 1.0);
        for _ in 0..50 {
            let f = self.partial(cell, x) - want;
            let step = f / (self.speed(cell, x) * self.h);
            let next = (x - step).clamp(0.0, 1.0);
            let done = (next - x).abs() < 1e-15;
            x = next;
            if done {
                break;
            }
        }
        (cell, x)
    }

    fn s_at(&self, cell: usize, x: f64) -> f64 {
        self.curve.s[self.first + cell] + x * self.h
    }

    fn length_to(&self, s: f64) -> f64 {
        let x = (s - self.curve.s[self.first]) / self.h;
        let cell = (x.floor().max(0.0) as usize).min(self.cells() - 1);
        self.cumulative[cell] + self.partial(cell, x - cell as f64)
    }
}

/// Unit-speed curve sampled at equally spaced parameters on `[-c, c]`.
#[derive(Debug, Clone)]
pub struct UnitSpeedCurve {
    target: Target,
    dim: usize,
    half_length: f64,
    points: Vec<f64>,
    s_of_t: Option<Vec<f64>>,
}

impl UnitSpeedCurve {
    /// Wraps samples `v(t_i)`, `t_i = -c + 2ci/(n-1)`, of a curve on `target`.
    pub fn new(target: Target, half_length: f64, points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = target.ambient_dim();
        if points.len() < 2 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::Contract(format!("need at least two samples of dimension {dim}")));
        }
        if !(half_length >= 0.0) {
            return Err(Error::Contract(format!("half-length {half_length} must be non-negative")));
        }
        Ok(Self { target, dim, half_length, points: points.concat(), s_of_t: None })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn dt(&self) -> f64 {
        2.0 * self.half_length / (self.len() - 1) as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.dt()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Collar coordinate of each sample when the curve came from a reparametrization.
    pub fn s_of_t(&self) -> Option<&[f64]> {
        self.s_of_t.as_deref()
    }

    /// `max | |v'| - 1 |` over interior samples by central differences.
    pub fn max_speed_defect(&self) -> f64 {
        let dt = self.dt();
        (1..self.len().saturating_sub(1))
            .map(|i| {
                let v: Vec<f64> =
                    self.point(i + 1).iter().zip(self.point(i - 1)).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
                (norm(&v) - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t, x0..x{d-1}, tension`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let tau = curve_tension(self)?;
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim).map(|i| format!("x{i}")));
        header.push("tension".into());
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.t(i).to_string()];
            row.extend(self.point(i).iter().map(|x| x.to_string()));
            row.push(norm(&tau[i * self.dim..(i + 1) * self.dim]).to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reparametrizes the connecting curve on `[b, a]` by arclength.
///
/// The curve is interpolated by cubic Hermite cells through the nodal points and
/// velocities; `c` is half the interpolant's length, and each sample parameter is
/// inverted by Newton's method on the cell length before projecting onto the target.
pub fn arclength_reparametrize(curve: &ConnectingCurve, b: f64, a: f64) -> Result<UnitSpeedCurve> {
    let herm = Hermite::new(curve, b, a)?;
    let total = herm.total();
    let samples = (herm.cells() + 1).max(65);
    let d = curve.dim;
    let mut points = Vec::with_capacity(samples * d);
    let mut s_of_t = Vec::with_capacity(samples);
    let mut raw = vec![0.0; d];
    let mut on = vec![0.0; d];
    for i in 0..samples {
        let target = total * i as f64 / (samples - 1) as f64;
        let (cell, x) = herm.locate(target);
        herm.eval(cell, x, &mut raw);
        curve.target.project_into(&raw, &mut on)?;
        points.extend_from_slice(&on);
        s_of_t.push(herm.s_at(cell, x));
    }
    Ok(UnitSpeedCurve {
        target: curve.target.clone(),
        dim: d,
        half_length: 0.5 * total,
        points,
        s_of_t: Some(s_of_t),
    })
}

/// Largest `|L(s(t)) - (t + c)|` over the samples, relative to the total length.
pub fn reparametrization_residual(curve: &ConnectingCurve, b: f64, a: f64, v: &UnitSpeedCurve) -> Result<f64> {
    let herm = Hermite::new(curve, b, a)?;
    let s = v.s_of_t().ok_or_else(|| Error::Contract("curve carries no collar coordinates".into()))?;
    let total = herm.total();
    Ok(s.iter()
        .enumerate()
        .map(|(i, &si)| (herm.length_to(si) - (v.t(i) + v.half_length)).abs() / total)
        .fold(0.0, f64::max))
}

/// `v'' + A(v)(v', v')` by second-order differences, projected onto the tangent space.
pub fn curve_tension(v: &UnitSpeedCurve) -> Result<Vec<f64>> {
    let n = v.len();
    if n < 5 {
        return Err(Error::Contract(format!("curve tension needs at least 5 samples, got {n}")));
    }
    let defect = v.max_speed_defect();
    if !(defect <= UNIT_SPEED_TOLERANCE) {
        return Err(Error::Contract(format!("curve is not unit speed (speed defect {defect:.3e})")));
    }
    let d = v.dim;
    let dt = v.dt();
    let mut out = vec![0.0; n * d];
    let mut acc = vec![0.0; d];
    let mut vel = vec![0.0; d];
    let mut a = vec![0.0; d];
    for i in 0..n {
        let p = |k: usize| v.point(k);
        for c in 0..d {
            let (second, first) = if i == 0 {
                (
                    2.0 * p(0)[c] - 5.0 * p(1)[c] + 4.0 * p(2)[c] - p(3)[c],
                    -3.0 * p(0)[c] + 4.0 * p(1)[c] - p(2)[c],
                )
            } else if i == n - 1 {
                (
                    2.0 * p(i)[c] - 5.0 * p(i - 1)[c] + 4.0 * p(i - 2)[c] - p(i - 3)[c],
                    3.0 * p(i)[c] - 4.0 * p(i - 1)[c] + p(i - 2)[c],
                )
            } else {
                (p(i + 1)[c] - 2.0 * p(i)[c] + p(i - 1)[c], p(i + 1)[c] - p(i - 1)[c])
            };
            acc[c] = second / (dt * dt);
            vel[c] = first / (2.0 * dt);
        }
        let tangent = v.target.tangent_project(p(i), &vel);
        v.target.sff_into(p(i), &tangent, &tangent, &mut a);
        for c in 0..d {
            acc[c] += a[c];
        }
        v.target.projection_differential_into(p(i), &acc, &mut out[i * d..(i + 1) * d]);
    }
    Ok(out)
}

/// `(int |tau(v)|^p dt)^{1/p}` by the trapezoid rule.
pub fn curve_tension_lp(v: &UnitSpeedCurve, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Contract(format!("L^p exponent {p} must be at least 1")));
    }
    let tau = curve_tension(v)?;
    let n = v.len();
    let vals: Vec<f64> = tau.chunks(v.dim).map(|t| norm(t).powf(p)).collect();
    let inner: f64 = vals[1..n - 1].iter().sum();
    Ok((v.dt() * (inner + 0.5 * (vals[0] + vals[n - 1]))).powf(1.0 / p))
}

/// Largest distance between `v` and the geodesic with the same initial point and
/// direction, divided by `min(2c, 1)`.
pub fn geodesic_deviation(v: &UnitSpeedCurve) -> Result<f64> {
    let c = v.half_length;
    if !(c > 0.0) {
        return Err(Error::Contract("geodesic deviation needs a curve of positive length".into()));
    }
    if v.len() < 5 {
        return Err(Error::Contract("geodesic deviation needs at least 5 samples".into()));
    }
    let dt = v.dt();
    let p = |k: usize| v.point(k);
    let dir: Vec<f64> = (0..v.dim)
        .map(|i| (-25.0 * p(0)[i] + 48.0 * p(1)[i] - 36.0 * p(2)[i] + 16.0 * p(3)[i] - 3.0 * p(4)[i]) / (12.0 * dt))
        .collect();
    let dir = v.target.tangent_project(p(0), &dir);
    let mut g = vec![0.0; v.dim];
    let mut worst = 0.0f64;
    for i in 0..v.len() {
        v.target.geodesic_into(p(0), &dir, i as f64 * dt, &mut g);
        worst = worst.max(v.target.geodesic_distance(p(i), &g));
    }
    Ok(worst / (2.0 * c).min(1.0))
}

/// `|v'|`-weighted Dirichlet energy `1/2 int |u'|^2 ds` of the connecting curve on `[b, a]`.
pub(crate) fn curve_energy(curve: &ConnectingCurve, b: f64, a: f64) -> f64 {
    let nodes = curve.nodes_in(b, a);
    if nodes.len() < 2 {
        return 0.0;
    }
    let h = curve.s[1] - curve.s[0];
    let e: Vec<f64> = nodes.map(|j| curve.velocity(j).map_or(0.0, |v| 0.5 * dot(v, v))).collect();
    h * (e.iter().sum::<f64>() - 0.5 * (e[0] + e[e.len() - 1]))
}
