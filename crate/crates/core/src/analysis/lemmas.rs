//! Discrete checks of the a-priori estimates on collars.
//!
//! Every check evaluates a left-hand side and the right-hand side without its
//! constant on a family of admissible points or intervals and records the largest
//! ratio. Sample points sit on a fixed lattice in `s` (spacing a multiple of `h_s`)
//! so that a grid and its refinement are probed at the same places.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{curve_sweep, glued_map, perturbed_geodesic_sweep, BubbleSpec, CurveSpec};
use crate::field::{
    alpha_profile, angular_energy_profile, d_s, d_theta, d_theta_theta, energy_density_profile, euclidean_tension,
    high_energy_set, hopf_profile, hopf_transport_profile, remainder_profile, tension_l2_of, tension_sq_row_profile,
    CumulativeIntegral, CylinderGrid, HighEnergySet, MapField, MetricTag,
};
use crate::geometry::CollarGeometry;
use crate::target::{dot, Target};

/// Left-hand sides below this are treated as round-off and give ratio 0.
const ROUND_OFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LemmaParams {
    pub eps0: f64,
    pub ceiling: f64,
    /// Distance between sample points in `s`, rounded to a whole number of grid steps.
    pub sample_spacing: f64,
}

impl Default for LemmaParams {
    fn default() -> Self {
        Self { eps0: 0.25, ceiling: 100.0, sample_spacing: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateCheck {
    pub name: String,
    pub samples: usize,
    /// Candidates rejected because they are too close to the high-energy set.
    pub skipped: usize,
    pub max_ratio: f64,
    /// Sample point (or interval start) of the largest ratio.
    pub worst_at: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub ell: f64,
    pub h_s: f64,
    pub tension_l2: f64,
    pub params: LemmaParams,
    pub checks: Vec<EstimateCheck>,
    /// `max |d/ds hopf - 2 int tau . u_s|` over interior rows.
    pub hopf_identity_residual: f64,
    /// The residual divided by `h_s^2`.
    pub hopf_identity_scaled: f64,
    pub passed: bool,
}

impl LemmaReport {
    pub fn check(&self, name: &str) -> Option<&EstimateCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn write_json<W: std::io::Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Change of one check's maximal ratio between a grid and its refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementChange {
    pub name: String,
    pub coarse: f64,
    pub fine: f64,
    pub relative_change: f64,
    pub stable: bool,
}

/// Compares two reports check by check. Ratios that are both below `floor` count
/// as stable (they are zero up to discretization).
pub fn refinement_stability(coarse: &LemmaReport, fine: &LemmaReport, tolerance: f64, floor: f64) -> Vec<RefinementChange> {
    coarse
        .checks
        .iter()
        .filter_map(|c| {
            let f = fine.check(&c.name)?;
            let scale = c.max_ratio.max(f.max_ratio);
            let relative_change = if scale > 0.0 { (c.max_ratio - f.max_ratio).abs() / scale } else { 0.0 };
            Some(RefinementChange {
                name: c.name.clone(),
                coarse: c.max_ratio,
                fine: f.max_ratio,
                relative_change,
                stable: scale < floor || relative_change <= tolerance,
            })
        })
        .collect()
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs.abs() <= ROUND_OFF {
        0.0
    } else if rhs > 0.0 {
        lhs / rhs
    } else {
        f64::INFINITY
    }
}

struct Tally {
    name: &'static str,
    samples: usize,
    skipped: usize,
    max_ratio: f64,
    worst_at: Option<f64>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, samples: 0, skipped: 0, max_ratio: 0.0, worst_at: None }
    }

    fn push(&mut self, at: f64, r: f64) {
        self.samples += 1;
        if r > self.max_ratio || (r.is_nan() && !self.max_ratio.is_nan()) {
            self.max_ratio = r;
            self.worst_at = Some(at);
        }
    }

    fn skip(&mut self) {
        self.skipped += 1;
    }

    fn finish(self, ceiling: f64) -> EstimateCheck {
        EstimateCheck {
            name: self.name.to_string(),
            samples: self.samples,
            skipped: self.skipped,
            max_ratio: self.max_ratio,
            worst_at: self.worst_at,
            passed: self.max_ratio.is_finite() && self.max_ratio <= ceiling,
        }
    }
}

/// Row-wise quantities shared by the checks.
struct Rows {
    alpha: Vec<f64>,
    theta: Vec<f64>,
    hopf: Vec<f64>,
    tension_sq: Vec<f64>,
    /// `|fiber mean of u_s|`.
    mean_speed: Vec<f64>,
    /// `int |u_thth|^2 + |u_sth|^2 dtheta`.
    angular_hessian: Vec<f64>,
    /// `int |u_th|^4 dtheta`.
    angular_quartic: Vec<f64>,
    /// Coordinate bounds of each fiber image.
    box_lo: Vec<Vec<f64>>,
    box_hi: Vec<Vec<f64>>,
}

impl Rows {
    fn new(u: &MapField, tension_sq: Vec<f64>) -> Self {
        let grid = u.grid();
        let (n_s, n_t, d) = (grid.n_s(), grid.n_theta(), u.dim());
        let ht = grid.h_theta();
        let h = grid.h_s();
        let mut us = vec![0.0; d];
        let mut ut = vec![0.0; d];
        let mut utt = vec![0.0; d];
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        let mut mean_speed = Vec::with_capacity(n_s);
        let mut angular_hessian = Vec::with_capacity(n_s);
        let mut angular_quartic = Vec::with_capacity(n_s);
        let mut box_lo = Vec::with_capacity(n_s);
        let mut box_hi = Vec::with_capacity(n_s);
        for j in 0..n_s {
            let (jm, jp) = (j.saturating_sub(1), (j + 1).min(n_s - 1));
            let span = (jp - jm) as f64 * h;
            let mut mean = vec![0.0; d];
            let (mut hess, mut quart) = (0.0, 0.0);
            let mut blo = vec![f64::INFINITY; d];
            let mut bhi = vec![f64::NEG_INFINITY; d];
            for k in 0..n_t {
                d_s(u, j, k, &mut us);
                d_theta(u, j, k, &mut ut);
                d_theta_theta(u, j, k, &mut utt);
                d_theta(u, jm, k, &mut lo);
                d_theta(u, jp, k, &mut hi);
                for i in 0..d {
                    mean[i] += us[i];
                    let x = u.value(j, k)[i];
                    blo[i] = blo[i].min(x);
                    bhi[i] = bhi[i].max(x);
                }
                let ust: f64 = lo.iter().zip(&hi).map(|(a, b)| ((b - a) / span).powi(2)).sum();
                hess += dot(&utt, &utt) + ust;
                quart += dot(&ut, &ut).powi(2);
            }
            mean_speed.push(dot(&mean, &mean).sqrt() / n_t as f64);
            angular_hessian.push(hess * ht);
            angular_quartic.push(quart * ht);
            box_lo.push(blo);
            box_hi.push(bhi);
        }
        Self {
            alpha: alpha_profile(u).values,
            theta: angular_energy_profile(u).values,
            hopf: hopf_profile(u).values,
            tension_sq,
            mean_speed,
            angular_hessian,
            angular_quartic,
            box_lo,
            box_hi,
        }
    }

    fn oscillation(&self, rows: std::ops::Range<usize>) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let d = self.box_lo[0].len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for j in rows {
            for i in 0..d {
                lo[i] = lo[i].min(self.box_lo[j][i]);
                hi[i] = hi[i].max(self.box_hi[j][i]);
            }
        }
        lo.iter().zip(&hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt()
    }
}

fn profile_osc(values: &[f64], rows: std::ops::Range<usize>) -> f64 {
    let slice = &values[rows];
    if slice.is_empty() {
        return 0.0;
    }
    let max = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = slice.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Trapezoid integral over whole rows; differences of running sums lose tiny
/// windows to cancellation.
fn node_integral(values: &[f64], rows: std::ops::Range<usize>, h: f64) -> f64 {
    let slice = &values[rows];
    match slice.len() {
        0 | 1 => 0.0,
        n => h * (slice.iter().sum::<f64>() - 0.5 * (slice[0] + slice[n - 1])),
    }
}

/// Open complement components of the high-energy set, as `(lo, hi)`.
fn complement(set: &HighEnergySet, s_min: f64, s_max: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = s_min;
    let mut open = set.intervals.first().is_none_or(|iv| iv.lo > s_min);
    for iv in &set.intervals {
        if open && iv.lo > start {
            out.push((start, iv.lo));
        }
        start = iv.hi;
        open = true;
    }
    if open && start < s_max && set.intervals.last().is_none_or(|iv| iv.hi < s_max) {
        out.push((start, s_max));
    }
    out
}

/// Runs the estimate checks on a map over a collar grid.
pub fn verify_lemma_suite(u: &MapField, params: &LemmaParams) -> Result<LemmaReport> {
    let grid = u.grid();
    let MetricTag::Hyperbolic { ell } = *grid.metric() else {
        return Err(Error::Contract("the estimate checks need a collar grid".into()));
    };
    let x = CollarGeometry::new(ell)?.half_length();
    let h = grid.h_s();
    let n_s = grid.n_s();
    let tau = euclidean_tension(u)?;
    let tension_g = tension_l2_of(grid, &tau);
    let set = high_energy_set(u, params.eps0)?;
    let remainder = remainder_profile(u, &tau, &set).values;
    let rows = Rows::new(u, tension_sq_row_profile(grid, &tau).values);
    let energy_cum = CumulativeIntegral::new(grid, &energy_density_profile(u).values);
    let alpha_cum = CumulativeIntegral::new(grid, &rows.alpha);
    let theta_cum = CumulativeIntegral::new(grid, &rows.theta);
    let total_energy = energy_cum.between(grid.s_min(), grid.s_max());
    let rho = |j: usize| grid.rho(j);
    let sup_rho = |r: std::ops::Range<usize>| r.map(rho).fold(0.0, f64::max);

    let stride = ((params.sample_spacing / h).round() as usize).max(1);
    let samples: Vec<usize> = (0..n_s).step_by(stride).collect();
    let comps = complement(&set, grid.s_min(), grid.s_max());
    let lengths = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

    // pointwise checks off the high-energy set
    let mut angular = Tally::new("angular-energy-decay");
    let mut speed_osc = Tally::new("mean-speed-oscillation");
    let mut speed_gap = Tally::new("mean-velocity-gap");
    let mut hessian = Tally::new("angular-hessian");
    let mut quartic = Tally::new("angular-quartic");
    for &j in &samples {
        let s = grid.s(j);
        let dist = set.distance(s);
        if set.contains(s) {
            angular.skip();
            hessian.skip();
            quartic.skip();
        } else {
            angular.push(s, ratio(rows.theta[j], remainder[j]));
            let near = grid.indices_in(s - 1.0, s + 1.0);
            let (mut lhs_h, mut lhs_q, mut cut_tension) = (0.0, 0.0, 0.0);
            for i in near {
                let phi = (2.0 * (1.0 - (grid.s(i) - s).abs())).clamp(0.0, 1.0);
                let w = phi * phi * h;
                lhs_h += w * rows.angular_hessian[i];
                lhs_q += w * rows.angular_quartic[i];
                cut_tension += w * rows.tension_sq[i];
            }
            let e_theta = 0.5 * theta_cum.between(s - 1.0, s + 1.0);
            hessian.push(s, ratio(lhs_h, cut_tension + e_theta));
            quartic.push(s, ratio(lhs_q, e_theta * (cut_tension + e_theta)));
        }
        if dist >= 2.0 {
            let r = remainder[j].sqrt();
            speed_osc.push(s, ratio(profile_osc(&rows.alpha, grid.indices_in(s - 1.0, s + 1.0)), r));
            speed_gap.push(s, ratio(rows.alpha[j] - rows.mean_speed[j], r));
        } else {
            speed_osc.skip();
            speed_gap.skip();
        }
    }

    // Hopf profile bounds hold at every s
    let mut hopf_bound = Tally::new("hopf-upper-bound");
    let mut hopf_osc = Tally::new("hopf-oscillation");
    let sqrt_e = total_energy.sqrt();
    for &j in &samples {
        let s = grid.s(j);
        hopf_bound.push(s, ratio(rows.hopf[j].max(0.0), ell + rho(j) * tension_g));
        let half = if s >= 0.0 { (s - 0.5 * x, s) } else { (s, s + 0.5 * x) };
        for (a, b) in [half, (s, s + 1.0), (s, s + 4.0)] {
            // end rows use one-sided stencils, which the transport identity does not see
            let r = grid.indices_in(a, b);
            let r = r.start.max(1)..r.end.min(n_s - 1);
            if r.len() < 2 {
                continue;
            }
            let local = node_integral(&rows.tension_sq, r.clone(), h).sqrt();
            hopf_osc.push(s, ratio(profile_osc(&rows.hopf, r), sqrt_e * local));
        }
    }

    // intervals inside the complement of the high-energy set
    let mut transition_energy = Tally::new("transition-energy");
    let mut transition_osc = Tally::new("transition-oscillation");
    for &(lo, hi) in &comps {
        for len in lengths.iter().copied().chain(std::iter::once(hi - lo)) {
            for &j in &samples {
                let a = grid.s(j);
                let b = a + len;
                if a <= lo || b >= hi {
                    if a > lo && a < hi {
                        transition_energy.skip();
                        transition_osc.skip();
                    }
                    continue;
                }
                let r = grid.indices_in(a, b);
                let dist = (a - lo).min(hi - b);
                let sr = sup_rho(r.clone());
                let rhs_e = (-dist).exp() + sr * sr * tension_g * tension_g + len * (ell + sr * tension_g);
                transition_energy.push(a, ratio(energy_cum.between(a, b), rhs_e));
                let rhs_o = (-0.5 * dist).exp() + sr.sqrt() * tension_g + len * (ell + sr * tension_g).sqrt();
                transition_osc.push(a, ratio(rows.oscillation(r), rhs_o));
            }
        }
    }

    // far from the high-energy set: speed differences and speed integrals
    let mut speed_diff = Tally::new("speed-difference");
    let mut speed_int = Tally::new("speed-integral");
    let far = 4.0 * ell.ln().abs();
    for &(lo, hi) in &comps {
        let (a, b) = (lo + far, hi - far);
        if b <= a {
            speed_diff.skip();
            speed_int.skip();
            continue;
        }
        let nodes: Vec<usize> = samples.iter().copied().filter(|&j| grid.s(j) >= a && grid.s(j) <= b).collect();
        let step = nodes.len().div_ceil(150).max(1);
        let picked: Vec<usize> = nodes.iter().copied().step_by(step).collect();
        for (p, &j) in picked.iter().enumerate() {
            for &k in &picked[p + 1..] {
                let rhs = ell * ell + rho(j).max(rho(k)).sqrt() * tension_g;
                speed_diff.push(grid.s(j), ratio((rows.alpha[j] - rows.alpha[k]).abs(), rhs));
            }
        }
        for pieces in [1usize, 2, 4, 8] {
            let width = (b - a) / pieces as f64;
            for i in 0..pieces {
                let (ia, ib) = (a + i as f64 * width, a + (i + 1) as f64 * width);
                let r = grid.indices_in(ia, ib);
                let Some(j0) = r.clone().min_by(|&p, &q| rho(p).total_cmp(&rho(q))) else {
                    continue;
                };
                let rhs = rows.alpha[j0] / rho(j0) + ell + tension_g / rho(j0).sqrt();
                speed_int.push(ia, ratio(alpha_cum.between(ia, ib), rhs));
            }
        }
    }

    // d/ds of the Hopf profile against its transport term
    let transport = hopf_transport_profile(u, &tau).values;
    let residual = (1..n_s.saturating_sub(1))
        .map(|j| ((rows.hopf[j + 1] - rows.hopf[j - 1]) / (2.0 * h) - transport[j]).abs())
        .fold(0.0, f64::max);

    let checks: Vec<EstimateCheck> = [
        angular,
        hessian,
        quartic,
        speed_osc,
        speed_gap,
        hopf_bound,
        hopf_osc,
        transition_energy,
        transition_osc,
        speed_diff,
        speed_int,
    ]
    .into_iter()
    .map(|t| t.finish(params.ceiling))
    .collect();
    let passed = checks.iter().all(|c| c.passed);
    Ok(LemmaReport {
        ell,
        h_s: h,
        tension_l2: tension_g,
        params: *params,
        checks,
        hopf_identity_residual: residual,
        hopf_identity_scaled: residual / (h * h),
        passed,
    })
}

/// The reference maps for the estimate checks at grid step `h_s`: a bubble glued
/// into a geodesic sweep, a latitude sweep, a perturbed geodesic sweep and a
/// constant map.
pub fn default_lemma_maps(h_s: f64, n_theta: usize) -> Result<Vec<(String, MapField)>> {
    let sphere = Target::sphere();
    let collar = |ell: f64| -> Result<CylinderGrid> { CylinderGrid::collar(&CollarGeometry::new(ell)?, h_s, n_theta) };
    let glued = glued_map(
        &CurveSpec::GreatCircle,
        &sphere,
        &[BubbleSpec { center: 0.0, scale: 1.0 }],
        &[2.0, 2.0],
        3.0,
        collar(0.1)?,
    )?;
    let latitude = curve_sweep(&CurveSpec::latitude(0.8), &sphere, 2.0 * std::f64::consts::PI * 0.8, 0.0, collar(0.05)?)?;
    let perturbed = perturbed_geodesic_sweep(&sphere, 1.0, 0.5, std::f64::consts::PI, collar(0.05)?)?;
    let constant = curve_sweep(&CurveSpec::GreatCircle, &sphere, 0.0, 0.0, collar(0.1)?)?;
    Ok(vec![
        ("bubble-in-sweep".into(), glued),
        ("latitude-sweep".into(), latitude),
        ("perturbed-sweep".into(), perturbed),
        ("constant".into(), constant),
    ])
}
