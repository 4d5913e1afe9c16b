use serde::{Deserialize, Serialize};

use super::sweep::ExperimentRecord;
use crate::error::{Error, Result};

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero for two points or an exact fit.
    pub stderr: f64,
    pub points: usize,
}

/// Fits `y ~ C x^slope`. Needs at least three points with positive `x` and `y`.
pub fn fit_log_log(x: &[f64], y: &[f64]) -> Result<RateFit> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!("{} abscissae but {} values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Degenerate(format!("rate fit needs at least 3 points, got {}", x.len())));
    }
    let bad: Vec<String> =
        x.iter().zip(y).filter(|(a, b)| !(**a > 0.0 && **b > 0.0)).map(|(a, b)| format!("x = {a} (y = {b})")).collect();
    if !bad.is_empty() {
        return Err(Error::Domain(format!("rate fit needs positive values; offending points: {}", bad.join(", "))));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("rate fit needs at least two distinct abscissae".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = if lx.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(RateFit { slope, intercept, stderr, points: lx.len() })
}

/// Fits a record column against another (usually `ell`), skipping failed records.
pub fn fit_rate(records: &[ExperimentRecord], x: &str, y: &str) -> Result<RateFit> {
    let column = |name: &str, r: &ExperimentRecord| {
        r.value(name).ok_or_else(|| Error::Config(format!("unknown numeric column {name:?}")))
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in records.iter().filter(|r| r.error.is_empty()) {
        xs.push(column(x, r)?);
        ys.push(column(y, r)?);
    }
    fit_log_log(&xs, &ys).map_err(|e| match e {
        Error::Domain(_) => {
            let bad: Vec<String> = records
                .iter()
                .filter(|r| r.error.is_empty())
                .filter(|r| !(r.value(x).unwrap_or(0.0) > 0.0 && r.value(y).unwrap_or(0.0) > 0.0))
                .map(|r| format!("ell = {}", r.ell))
                .collect();
            Error::Domain(format!("column {y} vs {x} has non-positive values at {}", bad.join(", ")))
        }
        other => other,
    })
}

/// Limit behaviour of a family along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    /// The connecting curves collapse to a point.
    TrivialNeck,
    /// The curves settle to a finite length and straighten out.
    FiniteGeodesic,
    /// The curves keep lengthening along the sweep (the observable face of an
    /// infinite-length limit).
    GrowingLength,
    /// The curves stay a fixed distance away from geodesics.
    NonGeodesic,
    Inconclusive,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::TrivialNeck => "trivial-neck",
            Classification::FiniteGeodesic => "finite-geodesic",
            Classification::GrowingLength => "growing-length",
            Classification::NonGeodesic => "non-geodesic",
            Classification::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cutoffs of the classification rules.
pub mod thresholds {
    /// Half-length below which a neck counts as collapsed.
    pub const COLLAPSED_LENGTH: f64 = 1e-3;
    /// Final/initial half-length ratio of a shrinking neck that counts as collapsing.
    pub const SHRINK_FACTOR: f64 = 0.1;
    /// Deviation kept at every step by a non-geodesic family.
    pub const NON_GEODESIC_DEVIATION: f64 = 0.1;
    /// Final/initial half-length ratio of a growing family.
    pub const GROWTH_FACTOR: f64 = 1.5;
    /// Final deviation of a family converging to a geodesic.
    pub const GEODESIC_DEVIATION: f64 = 0.05;
    /// Relative change of the last two half-lengths of a settled family.
    pub const SETTLED_LENGTH: f64 = 0.1;
    /// Slack in monotonicity comparisons.
    pub const MONOTONE_SLACK: f64 = 1e-6;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendStatistics {
    pub records: usize,
    pub failed: usize,
    pub trivial: usize,
    pub half_length_first: f64,
    pub half_length_last: f64,
    pub half_length_increasing: bool,
    pub half_length_decreasing: bool,
    pub deviation_min: f64,
    pub deviation_last: f64,
    pub deviation_non_increasing: bool,
    /// Slope of `tension_l2` against `ell` when it can be fitted.
    pub tension_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub classification: Classification,
    pub reason: String,
    pub trend: TrendStatistics,
    pub notes: Vec<String>,
}

/// Classifies the limit of a sweep from its records, in sweep order (decreasing
/// `ell`). Rules are tried in order: trivial neck, non-geodesic, growing length,
/// finite geodesic; anything else is inconclusive.
pub fn threshold_report(records: &[ExperimentRecord]) -> ThresholdReport {
    use thresholds::*;
    let ok: Vec<&ExperimentRecord> = records.iter().filter(|r| r.error.is_empty()).collect();
    let c: Vec<f64> = ok.iter().map(|r| r.half_length).collect();
    let necks: Vec<&&ExperimentRecord> = ok.iter().filter(|r| r.case == "threshold").collect();
    let dev: Vec<f64> = necks.iter().map(|r| r.geodesic_deviation).collect();
    let first = c.first().copied().unwrap_or(0.0);
    let last = c.last().copied().unwrap_or(0.0);
    let increasing = c.len() >= 2 && c.windows(2).all(|w| w[1] > w[0]);
    let decreasing = c.len() >= 2 && c.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK);
    let dev_min = dev.iter().copied().fold(f64::INFINITY, f64::min);
    let dev_last = dev.last().copied().unwrap_or(f64::NAN);
    let dev_monotone = dev.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK);
    let tension_slope = fit_rate(records, "ell", "tension_l2").ok().map(|f| f.slope);
    let trend = TrendStatistics {
        records: records.len(),
        failed: records.len() - ok.len(),
        trivial: ok.len() - necks.len(),
        half_length_first: first,
        half_length_last: last,
        half_length_increasing: increasing,
        half_length_decreasing: decreasing,
        deviation_min: if dev.is_empty() { 0.0 } else { dev_min },
        deviation_last: if dev.is_empty() { 0.0 } else { dev_last },
        deviation_non_increasing: dev_monotone,
        tension_slope,
    };
    let mut notes = vec![
        "growing-length is the finite-sweep stand-in for an infinite-length geodesic limit, which no sweep can observe directly"
            .to_string(),
    ];
    if trend.failed > 0 {
        notes.push(format!("{} record(s) failed and were ignored", trend.failed));
    }

    let verdict = |classification, reason: String| ThresholdReport { classification, reason, trend: trend.clone(), notes: notes.clone() };
    if ok.len() < 2 {
        return verdict(Classification::Inconclusive, format!("only {} usable record(s)", ok.len()));
    }
    if necks.is_empty() {
        return verdict(Classification::TrivialNeck, "every record is in the trivial case".into());
    }
    if last <= COLLAPSED_LENGTH {
        return verdict(Classification::TrivialNeck, format!("final half-length {last:.3e} <= {COLLAPSED_LENGTH}"));
    }
    if decreasing && last <= SHRINK_FACTOR * first {
        return verdict(
            Classification::TrivialNeck,
            format!("half-length shrinks from {first:.4} to {last:.4}, below {SHRINK_FACTOR} of its start"),
        );
    }
    if necks.len() == ok.len() && dev_min >= NON_GEODESIC_DEVIATION {
        return verdict(
            Classification::NonGeodesic,
            format!("geodesic deviation stays >= {NON_GEODESIC_DEVIATION} (minimum {dev_min:.4})"),
        );
    }
    if increasing && first > 0.0 && last / first >= GROWTH_FACTOR {
        return verdict(
            Classification::GrowingLength,
            format!("half-length grows strictly from {first:.4} to {last:.4} (factor {:.3})", last / first),
        );
    }
    let settled = c.len() >= 2 && {
        let (p, q) = (c[c.len() - 2], c[c.len() - 1]);
        (q - p).abs() <= SETTLED_LENGTH * p.max(q)
    };
    if dev_last <= GEODESIC_DEVIATION && dev_monotone && settled {
        return verdict(
            Classification::FiniteGeodesic,
            format!("deviation decreases to {dev_last:.3e} while the half-length settles near {last:.4}"),
        );
    }
    verdict(Classification::Inconclusive, "no rule matched the trends".into())
}
