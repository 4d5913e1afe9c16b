use serde::{Deserialize, Serialize};

use super::curve::{connecting_curve, curve_energy, ConnectingCurve};
use crate::error::{Error, Result};
use crate::field::{
    alpha_profile, angular_energy_profile, d_theta, energy, euclidean_tension, high_energy_set, oscillation,
    tension_l2_of, tension_sq_row_profile, HighEnergySet, MapField, MetricTag, SInterval,
};
use crate::target::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeParams {
    pub eps0: f64,
    pub c0: f64,
    /// Multiplier of `|log ell|` in the far-set distance; 4 on collars, 8 on tori when unset.
    pub log_threshold_factor: Option<f64>,
    /// Additive offset of the far-set distance; 1 on collars, 0 on tori when unset.
    pub log_threshold_offset: Option<f64>,
    /// Replaces `max(eps, ell)^{1/2}` as the neck speed threshold.
    pub delta: Option<f64>,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        Self { eps0: 0.25, c0: 0.1, log_threshold_factor: None, log_threshold_offset: None, delta: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Collar,
    Torus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeckCase {
    /// The connecting cylinder collapses to the midpoint of the gap.
    Trivial,
    /// The neck runs between the extremal far nodes whose scaled speed reaches `delta`.
    Threshold,
}

/// One gap between consecutive bubble marks (bubble centers or collar ends).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub left_mark: f64,
    pub right_mark: f64,
    /// Hull of the nodes at distance at least the threshold from the high-energy set.
    pub far_set: Option<SInterval>,
    /// Far node of smallest conformal factor (middle far node on tori).
    pub pivot: Option<f64>,
    /// Scaled speed at the pivot (supremum over the far set on tori).
    pub pivot_ratio: Option<f64>,
    pub case: NeckCase,
    pub neck_start: f64,
    pub neck_end: f64,
    pub warnings: Vec<String>,
}

impl GapRecord {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.left_mark + self.right_mark)
    }

    pub fn neck_length(&self) -> f64 {
        self.neck_end - self.neck_start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub domain: DomainKind,
    pub ell: f64,
    /// `||tau_g||` in `L^2(g)`.
    pub tension_l2: f64,
    /// `||tau_g|| ell^{-1/2}` on collars, `ell^{-3} ||tau_E||` on tori.
    pub normalized_tension: f64,
    pub delta: f64,
    pub threshold_distance: f64,
    pub params: DecomposeParams,
    pub high_energy_set: HighEnergySet,
    pub bubble_centers: Vec<f64>,
    pub gaps: Vec<GapRecord>,
}

impl Decomposition {
    /// Threshold gap with the longest neck.
    pub fn primary_neck(&self) -> Option<&GapRecord> {
        self.gaps
            .iter()
            .filter(|g| g.case == NeckCase::Threshold)
            .max_by(|a, b| a.neck_length().total_cmp(&b.neck_length()))
    }

    pub fn write_json<W: std::io::Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Energy and oscillation of `u` between each neck end and its neighbouring bubble,
/// kept `lambda` away from the bubble center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedRegionDiagnostic {
    pub lambda: f64,
    pub energy: f64,
    pub oscillation: f64,
}

pub fn extended_region_diagnostics(u: &MapField, dec: &Decomposition, lambdas: &[f64]) -> Vec<ExtendedRegionDiagnostic> {
    let is_center = |s: f64| dec.bubble_centers.iter().any(|c| (c - s).abs() < 1e-12);
    lambdas
        .iter()
        .map(|&lambda| {
            let mut e = 0.0;
            let mut osc = 0.0f64;
            for g in &dec.gaps {
                let mut regions = Vec::new();
                if is_center(g.left_mark) {
                    regions.push((g.left_mark + lambda, g.neck_start));
                }
                if is_center(g.right_mark) {
                    regions.push((g.neck_end, g.right_mark - lambda));
                }
                for (lo, hi) in regions.into_iter().filter(|(lo, hi)| hi > lo) {
                    e += energy(u, lo, hi);
                    osc = osc.max(oscillation(u, lo, hi));
                }
            }
            ExtendedRegionDiagnostic { lambda, energy: e, oscillation: osc }
        })
        .collect()
}

/// `ell^{-1/2}`- or `ell^{-2}`-normalised tension depending on the domain.
pub fn normalized_tension_of(u: &MapField, tension_l2: f64) -> Option<f64> {
    let ell = u.grid().metric().ell()?;
    Some(match u.grid().metric() {
        MetricTag::Torus { .. } => tension_l2 * ell.powi(-2),
        _ => tension_l2 * ell.powf(-0.5),
    })
}

struct Prepared {
    domain: DomainKind,
    ell: f64,
    tension_l2: f64,
    eps: f64,
}

fn prepare(u: &MapField) -> Result<Prepared> {
    let grid = u.grid();
    let (domain, ell) = match grid.metric() {
        MetricTag::Hyperbolic { ell } => (DomainKind::Collar, *ell),
        MetricTag::Torus { .. } => (DomainKind::Torus, grid.metric().ell().unwrap_or(f64::NAN)),
        MetricTag::Euclidean => {
            return Err(Error::Contract("decomposition needs a collar or torus grid".into()));
        }
    };
    if !(ell > 0.0 && ell < 1.0) {
        return Err(Error::Domain(format!("decomposition needs 0 < ell < 1, got {ell}")));
    }
    let tau = euclidean_tension(u)?;
    let tension_l2 = tension_l2_of(grid, &tau);
    let eps = match domain {
        DomainKind::Collar => tension_l2 * ell.powf(-0.5),
        DomainKind::Torus => {
            let rows = tension_sq_row_profile(grid, &tau);
            let flat: f64 = rows.values.iter().enumerate().map(|(j, v)| grid.s_weight(j) * v).sum();
            flat.sqrt() * ell.powi(-3)
        }
    };
    Ok(Prepared { domain, ell, tension_l2, eps })
}

/// Components of the high-energy set with seam-crossing runs merged on tori.
fn components(set: &HighEnergySet, s_min: f64, s_max: f64) -> Vec<SInterval> {
    let mut out = set.intervals.clone();
    if let Some(period) = set.period {
        if out.len() >= 2 {
            let first = out[0];
            let last = out[out.len() - 1];
            if first.lo <= s_min && last.hi >= s_max {
                out.pop();
                out[0] = SInterval { lo: last.lo, hi: first.hi + period, boundary: false };
            }
        }
        for iv in &mut out {
            iv.boundary = false;
        }
        if out.len() == 1 && out[0].lo <= s_min && out[0].hi >= s_max {
            // the whole period is high-energy
            out[0].boundary = true;
        }
    }
    out
}

/// Splits the domain into bubble regions and necks.
///
/// Bubble centers are the midpoints of the interior high-energy components. Each
/// gap between consecutive marks (centers, or collar ends) gets a far set of nodes
/// at least `factor |log ell| + offset` from the high-energy set. If the far set is
/// empty or the scaled speed at its pivot is below `c0`, the neck collapses to the
/// gap midpoint; otherwise it runs between the extremal far nodes whose scaled speed
/// reaches `delta`. Scaled speed is `alpha / rho` on collars and `alpha / ell^2` on tori.
pub fn decompose(u: &MapField, params: &DecomposeParams) -> Result<Decomposition> {
    let prep = prepare(u)?;
    let grid = u.grid();
    let set = high_energy_set(u, params.eps0)?;
    let (factor, offset) = match prep.domain {
        DomainKind::Collar => (params.log_threshold_factor.unwrap_or(4.0), params.log_threshold_offset.unwrap_or(1.0)),
        DomainKind::Torus => (params.log_threshold_factor.unwrap_or(8.0), params.log_threshold_offset.unwrap_or(0.0)),
    };
    let threshold = factor * prep.ell.ln().abs() + offset;
    let delta = params.delta.unwrap_or_else(|| prep.eps.max(prep.ell).sqrt());
    if !(delta > 0.0) {
        return Err(Error::Contract(format!("neck speed threshold must be positive, got {delta}")));
    }

    let (s_min, s_max) = (grid.s_min(), grid.s_max());
    let comps = components(&set, s_min, s_max);
    let centers: Vec<f64> = comps.iter().filter(|c| !c.boundary).map(|c| c.midpoint()).collect();
    let period = set.period;
    let marks: Vec<(f64, f64)> = match period {
        None => {
            let mut m = vec![s_min];
            m.extend(&centers);
            m.push(s_max);
            m.windows(2).map(|w| (w[0], w[1])).collect()
        }
        Some(p) => {
            if comps.iter().any(|c| c.boundary) {
                Vec::new()
            } else if centers.is_empty() {
                vec![(s_min, s_max)]
            } else {
                let mut m = centers.clone();
                m.push(centers[0] + p);
                m.windows(2).map(|w| (w[0], w[1])).collect()
            }
        }
    };
    if marks.is_empty() {
        return Err(Error::Degenerate("the high-energy set covers the whole domain; there is no gap".into()));
    }

    let alpha = alpha_profile(u);
    let curve = connecting_curve(u);
    let h = grid.h_s();
    let wrap = |s: f64| -> usize {
        match period {
            Some(_) => {
                let n = grid.n_s() - 1;
                (((s - s_min) / h).round() as i64).rem_euclid(n as i64) as usize
            }
            None => grid.nearest_index(s),
        }
    };
    let scaled = |j: usize| -> f64 {
        match prep.domain {
            DomainKind::Collar => alpha.values[j] / grid.rho(j),
            DomainKind::Torus => alpha.values[j] / (prep.ell * prep.ell),
        }
    };

    let mut gaps = Vec::with_capacity(marks.len());
    for (left, right) in marks {
        let first = ((left - s_min) / h - 1e-9).ceil() as i64;
        let last = ((right - s_min) / h + 1e-9).floor() as i64;
        let nodes: Vec<(f64, usize)> = (first..=last)
            .map(|i| s_min + i as f64 * h)
            .filter(|&s| set.distance(s) >= threshold)
            .map(|s| (s, wrap(s)))
            .collect();
        let mid = 0.5 * (left + right);
        let mut rec = GapRecord {
            left_mark: left,
            right_mark: right,
            far_set: None,
            pivot: None,
            pivot_ratio: None,
            case: NeckCase::Trivial,
            neck_start: mid,
            neck_end: mid,
            warnings: Vec::new(),
        };
        if nodes.is_empty() {
            gaps.push(rec);
            continue;
        }
        rec.far_set = Some(SInterval { lo: nodes[0].0, hi: nodes[nodes.len() - 1].0, boundary: false });
        let (pivot, ratio) = match prep.domain {
            DomainKind::Collar => {
                let &(s, j) = nodes
                    .iter()
                    .min_by(|a, b| grid.rho(a.1).total_cmp(&grid.rho(b.1)).then(a.0.abs().total_cmp(&b.0.abs())))
                    .unwrap();
                (s, scaled(j))
            }
            DomainKind::Torus => {
                let s = nodes[nodes.len() / 2].0;
                (s, nodes.iter().map(|&(_, j)| scaled(j)).fold(f64::NEG_INFINITY, f64::max))
            }
        };
        rec.pivot = Some(pivot);
        rec.pivot_ratio = Some(ratio);
        if ratio < params.c0 {
            gaps.push(rec);
            continue;
        }
        let fast: Vec<f64> = nodes.iter().filter(|&&(_, j)| scaled(j) >= delta).map(|&(s, _)| s).collect();
        let (Some(&b), Some(&a)) = (fast.first(), fast.last()) else {
            rec.warnings.push(format!("no far node reaches the speed threshold {delta:.4e}; neck collapsed"));
            gaps.push(rec);
            continue;
        };
        let masked: Vec<usize> = nodes
            .iter()
            .filter(|&&(s, j)| s >= b && s <= a && !curve.is_valid(j))
            .map(|&(_, j)| j)
            .collect();
        if !masked.is_empty() {
            rec.warnings.push(format!(
                "connecting curve masked at {} node(s) in [{b}, {a}] (first: {}); neck collapsed",
                masked.len(),
                masked[0]
            ));
            gaps.push(rec);
            continue;
        }
        if pivot < b || pivot > a {
            rec.warnings.push(format!("pivot {pivot} lies outside the neck [{b}, {a}]"));
        }
        if period.is_some() && a > s_max {
            rec.warnings.push("neck crosses the torus seam".into());
        }
        rec.case = NeckCase::Threshold;
        rec.neck_start = b;
        rec.neck_end = a;
        gaps.push(rec);
    }

    Ok(Decomposition {
        domain: prep.domain,
        ell: prep.ell,
        tension_l2: prep.tension_l2,
        normalized_tension: prep.eps,
        delta,
        threshold_distance: threshold,
        params: *params,
        high_energy_set: set,
        bubble_centers: centers,
        gaps,
    })
}

/// The four terms bounding `||tau(v)||_{L^p}^p` on a neck `[b, a]`:
/// tension, angular energy against curve energy, angular energy against the speed
/// floor, and mixed derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensionSplit {
    pub tension_term: f64,
    pub angular_term: f64,
    pub angular_speed_term: f64,
    pub mixed_term: f64,
}

pub fn neck_tension_split(
    u: &MapField,
    curve: &ConnectingCurve,
    b: f64,
    a: f64,
    p: f64,
    delta: f64,
) -> Result<TensionSplit> {
    let grid = u.grid();
    let ell = grid
        .metric()
        .ell()
        .ok_or_else(|| Error::Contract("tension split needs a collar or torus grid".into()))?;
    let tau = euclidean_tension(u)?;
    let theta = angular_energy_profile(u);
    let rows = grid.indices_in(b, a);
    if rows.len() < 2 {
        return Ok(TensionSplit { tension_term: 0.0, angular_term: 0.0, angular_speed_term: 0.0, mixed_term: 0.0 });
    }
    let h = grid.h_s();
    let ht = grid.h_theta();
    let d = u.dim();
    let weight = |j: usize| if j == rows.start || j + 1 == rows.end { 0.5 * h } else { h };
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    let (mut t1, mut t2, mut t3, mut t4) = (0.0, 0.0, 0.0, 0.0);
    for j in rows.clone() {
        let w = weight(j);
        let rho = grid.rho(j);
        let tension_row: f64 = (0..grid.n_theta()).map(|k| (norm(tau.at(j, k)) / rho).powf(p)).sum::<f64>() * ht;
        t1 += w * tension_row;
        t2 += w * theta.values[j].powf(p);
        t3 += w * rho.powf(1.0 - 2.0 * p) * theta.values[j].powf(1.5 * p);
        let (jm, jp) = (j.saturating_sub(1), (j + 1).min(grid.n_s() - 1));
        let span = (jp - jm) as f64 * h;
        let mut mixed = 0.0;
        for k in 0..grid.n_theta() {
            d_theta(u, jm, k, &mut lo);
            d_theta(u, jp, k, &mut hi);
            let diff: Vec<f64> = hi.iter().zip(&lo).map(|(x, y)| (x - y) / span).collect();
            mixed += dot(&diff, &diff).sqrt().powf(p);
        }
        t4 += w * rho.powf(1.0 - p) * mixed * ht;
    }
    Ok(TensionSplit {
        tension_term: delta.powf(1.0 - 2.0 * p) * ell.powf(1.0 - p) * t1,
        angular_term: curve_energy(curve, b, a).sqrt() * t2.sqrt(),
        angular_speed_term: delta.powf(1.0 - 2.0 * p) * t3,
        mixed_term: delta.powf(1.0 - p) * t4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{curve_sweep, glued_map, torus_sweep, BubbleSpec, CurveSpec};
    use crate::field::CylinderGrid;
    use crate::geometry::{CollarGeometry, TorusGeometry};
    use crate::target::Target;

    fn collar(ell: f64, h: f64, n_theta: usize) -> CylinderGrid {
        CylinderGrid::collar(&CollarGeometry::new(ell).unwrap(), h, n_theta).unwrap()
    }

    fn two_bubbles(h: f64) -> MapField {
        let bubbles = [BubbleSpec { center: -30.0, scale: 1.0 }, BubbleSpec { center: 30.0, scale: 1.0 }];
        glued_map(&CurveSpec::GreatCircle, &Target::sphere(), &bubbles, &[0.0, 4.5, 0.0], 6.0, collar(0.02, h, 32))
            .unwrap()
    }

    #[test]
    fn constant_map_is_trivial() {
        let u = curve_sweep(&CurveSpec::GreatCircle, &Target::sphere(), 0.0, 0.4, collar(0.1, 0.1, 32)).unwrap();
        let dec = decompose(&u, &DecomposeParams::default()).unwrap();
        assert!(dec.bubble_centers.is_empty());
        assert_eq!(dec.gaps.len(), 1);
        let g = &dec.gaps[0];
        assert_eq!(g.case, NeckCase::Trivial);
        assert!(g.neck_start.abs() < 1e-9 && g.neck_end.abs() < 1e-9);
        assert_eq!(g.pivot_ratio, Some(0.0));
    }

    #[test]
    fn latitude_sweep_has_a_threshold_neck() {
        let length = 2.0 * std::f64::consts::PI * 0.8;
        let u = curve_sweep(&CurveSpec::latitude(0.8), &Target::sphere(), length, 0.0, collar(0.1, 0.1, 32)).unwrap();
        let dec = decompose(&u, &DecomposeParams::default()).unwrap();
        let g = dec.primary_neck().unwrap();
        assert!(g.neck_start < 0.0 && g.neck_end > 0.0);
        assert!((g.neck_start + g.neck_end).abs() < 0.2);
        assert!(g.pivot.unwrap().abs() < 0.06);
        assert!(dec.delta > dec.ell.sqrt());
        let far = g.far_set.unwrap();
        assert!(far.lo <= g.neck_start && g.neck_end <= far.hi);
    }

    #[test]
    fn two_bubble_glued_map_is_recovered() {
        let u = two_bubbles(0.1);
        let dec = decompose(&u, &DecomposeParams::default()).unwrap();
        assert_eq!(dec.bubble_centers.len(), 2);
        assert!((dec.bubble_centers[0] + 30.0).abs() <= 0.2);
        assert!((dec.bubble_centers[1] - 30.0).abs() <= 0.2);
        assert_eq!(dec.gaps.len(), 3);
        assert_eq!(dec.gaps[0].case, NeckCase::Trivial);
        assert_eq!(dec.gaps[2].case, NeckCase::Trivial);
        let mid = &dec.gaps[1];
        assert_eq!(mid.case, NeckCase::Threshold, "{dec:#?}");
        assert!(-30.0 < mid.neck_start && mid.neck_start < mid.neck_end && mid.neck_end < 30.0);
        let diag = extended_region_diagnostics(&u, &dec, &[4.0, 8.0, 16.0]);
        for w in diag.windows(2) {
            assert!(w[1].energy < w[0].energy);
            assert!(w[1].oscillation <= w[0].oscillation);
        }
    }

    #[test]
    fn rotation_invariance_and_reflection_equivariance() {
        let u = two_bubbles(0.1);
        let p = DecomposeParams::default();
        let base = decompose(&u, &p).unwrap();
        let rotated = decompose(&u.rotate_theta(5), &p).unwrap();
        assert_eq!(base.gaps.len(), rotated.gaps.len());
        for (x, y) in base.gaps.iter().zip(&rotated.gaps) {
            assert_eq!(x.case, y.case);
            assert!((x.neck_start - y.neck_start).abs() < 1e-9 && (x.neck_end - y.neck_end).abs() < 1e-9);
        }
        assert!((base.tension_l2 / rotated.tension_l2 - 1.0).abs() < 1e-9);
        let mirrored = decompose(&u.reflect_s().unwrap(), &p).unwrap();
        let n = base.gaps.len();
        for (i, g) in base.gaps.iter().enumerate() {
            let m = &mirrored.gaps[n - 1 - i];
            assert_eq!(g.case, m.case);
            assert!((g.neck_start + m.neck_end).abs() < 1e-6, "{} vs {}", g.neck_start, m.neck_end);
            assert!((g.neck_end + m.neck_start).abs() < 1e-6);
        }
    }

    #[test]
    fn torus_geodesic_sweep_spans_the_period() {
        let geom = TorusGeometry::new(0.0, 50.0).unwrap();
        let g = CylinderGrid::torus(&geom, 0.1, 32).unwrap();
        let u = torus_sweep(&CurveSpec::GreatCircle, &Target::sphere(), g).unwrap();
        let dec = decompose(&u, &DecomposeParams::default()).unwrap();
        assert_eq!(dec.domain, DomainKind::Torus);
        assert!(dec.high_energy_set.is_empty());
        let neck = dec.primary_neck().unwrap();
        assert_eq!((neck.neck_start, neck.neck_end), (0.0, 50.0));
        assert!((neck.pivot_ratio.unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn bad_inputs() {
        let u = curve_sweep(
            &CurveSpec::GreatCircle,
            &Target::sphere(),
            1.0,
            0.0,
            CylinderGrid::euclidean(-5.0, 5.0, 51, 16).unwrap(),
        )
        .unwrap();
        assert!(matches!(decompose(&u, &DecomposeParams::default()), Err(Error::Contract(_))));
        let big = curve_sweep(&CurveSpec::GreatCircle, &Target::sphere(), 1.0, 0.0, collar(1.2, 0.1, 16)).unwrap();
        assert!(matches!(decompose(&big, &DecomposeParams::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn split_terms_vanish_on_geodesic_necks() {
        let u = curve_sweep(&CurveSpec::GreatCircle, &Target::sphere(), 3.0, 0.0, collar(0.1, 0.1, 32)).unwrap();
        let c = connecting_curve(&u);
        let split = neck_tension_split(&u, &c, -20.0, 20.0, 2.0, 0.3).unwrap();
        assert!(split.tension_term < 1e-9);
        assert_eq!(split.angular_term, 0.0);
        assert_eq!(split.mixed_term, 0.0);
    }
}
