use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Ladder};
use super::report::{fit_rate, threshold_report, Classification, RateFit, ThresholdReport};
use crate::analysis::{
    arclength_reparametrize, connecting_curve, curve_tension_lp, decompose, extended_region_diagnostics,
    geodesic_deviation, neck_tension_split, velocity_lower_bound_check, Decomposition, NeckCase,
};
use crate::error::{Error, Result};
use crate::families::FamilySpec;
use crate::field::{CylinderGrid, MapField};
use crate::geometry::{CollarGeometry, TorusGeometry};

/// Distances from the bubble centers at which the extended bubble regions are cut off.
pub const EXTENSION_LENGTHS: [f64; 3] = [4.0, 8.0, 16.0];

/// Environment variable capping the worker threads of a sweep.
pub const THREADS_ENV: &str = "COLLAR_LAB_THREADS";

/// Measurements for one rung of a sweep.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub ell: f64,
    /// Torus height `B`; zero on collars.
    pub height: f64,
    pub h_s: f64,
    pub n_s: usize,
    pub n_theta: usize,
    /// `||tau_g||` in `L^2(g)`.
    pub tension_l2: f64,
    /// `tension_l2 * ell^{-1/2}` on collars, `ell^{-3} ||tau_E||` on tori.
    pub normalized_tension: f64,
    pub eps: f64,
    pub delta: f64,
    /// `trivial`, `threshold`, or `error`.
    pub case: String,
    pub neck_start: f64,
    pub neck_end: f64,
    pub half_length: f64,
    pub curve_tension_l1: f64,
    pub curve_tension_l2: f64,
    /// `(p, ||tau(v)||_{L^p})` for every configured exponent.
    #[serde(default)]
    pub curve_tension_lp: Vec<(f64, f64)>,
    pub geodesic_deviation: f64,
    /// `min |v'| / alpha` over the neck.
    pub min_velocity_ratio: f64,
    pub split_tension: f64,
    pub split_angular: f64,
    pub split_angular_speed: f64,
    pub split_mixed: f64,
    pub ext_energy: [f64; 3],
    pub ext_oscillation: [f64; 3],
    pub n_bubbles: usize,
    /// Empty unless this rung failed.
    pub error: String,
    #[serde(default)]
    pub wall_time: f64,
}

/// CSV columns, in order. `wall_time` and the extra `L^p` norms live in the JSON only.
pub const CSV_COLUMNS: [&str; 29] = [
    "ell",
    "height",
    "h_s",
    "n_s",
    "n_theta",
    "tension_l2",
    "normalized_tension",
    "eps",
    "delta",
    "case",
    "neck_start",
    "neck_end",
    "half_length",
    "curve_tension_l1",
    "curve_tension_l2",
    "geodesic_deviation",
    "min_velocity_ratio",
    "split_tension",
    "split_angular",
    "split_angular_speed",
    "split_mixed",
    "ext_energy_4",
    "ext_energy_8",
    "ext_energy_16",
    "ext_osc_4",
    "ext_osc_8",
    "ext_osc_16",
    "n_bubbles",
    "error",
];

impl ExperimentRecord {
    /// Numeric column by CSV name.
    pub fn value(&self, column: &str) -> Option<f64> {
        Some(match column {
            "ell" => self.ell,
            "height" => self.height,
            "h_s" => self.h_s,
            "n_s" => self.n_s as f64,
            "n_theta" => self.n_theta as f64,
            "tension_l2" => self.tension_l2,
            "normalized_tension" => self.normalized_tension,
            "eps" => self.eps,
            "delta" => self.delta,
            "neck_start" => self.neck_start,
            "neck_end" => self.neck_end,
            "half_length" => self.half_length,
            "curve_tension_l1" => self.curve_tension_l1,
            "curve_tension_l2" => self.curve_tension_l2,
            "geodesic_deviation" => self.geodesic_deviation,
            "min_velocity_ratio" => self.min_velocity_ratio,
            "split_tension" => self.split_tension,
            "split_angular" => self.split_angular,
            "split_angular_speed" => self.split_angular_speed,
            "split_mixed" => self.split_mixed,
            "ext_energy_4" => self.ext_energy[0],
            "ext_energy_8" => self.ext_energy[1],
            "ext_energy_16" => self.ext_energy[2],
            "ext_osc_4" => self.ext_oscillation[0],
            "ext_osc_8" => self.ext_oscillation[1],
            "ext_osc_16" => self.ext_oscillation[2],
            "n_bubbles" => self.n_bubbles as f64,
            "wall_time" => self.wall_time,
            _ => return None,
        })
    }

    fn csv_row(&self) -> Vec<String> {
        CSV_COLUMNS
            .iter()
            .map(|&c| match c {
                "case" => self.case.clone(),
                "error" => self.error.clone(),
                "n_s" => self.n_s.to_string(),
                "n_theta" => self.n_theta.to_string(),
                "n_bubbles" => self.n_bubbles.to_string(),
                other => self.value(other).map(|v| v.to_string()).unwrap_or_default(),
            })
            .collect()
    }

    fn from_csv_row(index: &HashMap<String, usize>, row: &csv::StringRecord) -> Result<Self> {
        let text = |name: &str| -> Result<&str> {
            let i = *index.get(name).ok_or_else(|| Error::Format(format!("CSV lacks column {name:?}")))?;
            row.get(i).ok_or_else(|| Error::Format(format!("short CSV row: {row:?}")))
        };
        let num = |name: &str| -> Result<f64> {
            let t = text(name)?;
            t.parse().map_err(|_| Error::Format(format!("column {name}: {t:?} is not a number")))
        };
        let count = |name: &str| -> Result<usize> {
            let t = text(name)?;
            t.parse().map_err(|_| Error::Format(format!("column {name}: {t:?} is not a count")))
        };
        Ok(Self {
            ell: num("ell")?,
            height: num("height")?,
            h_s: num("h_s")?,
            n_s: count("n_s")?,
            n_theta: count("n_theta")?,
            tension_l2: num("tension_l2")?,
            normalized_tension: num("normalized_tension")?,
            eps: num("eps")?,
            delta: num("delta")?,
            case: text("case")?.to_string(),
            neck_start: num("neck_start")?,
            neck_end: num("neck_end")?,
            half_length: num("half_length")?,
            curve_tension_l1: num("curve_tension_l1")?,
            curve_tension_l2: num("curve_tension_l2")?,
            curve_tension_lp: Vec::new(),
            geodesic_deviation: num("geodesic_deviation")?,
            min_velocity_ratio: num("min_velocity_ratio")?,
            split_tension: num("split_tension")?,
            split_angular: num("split_angular")?,
            split_angular_speed: num("split_angular_speed")?,
            split_mixed: num("split_mixed")?,
            ext_energy: [num("ext_energy_4")?, num("ext_energy_8")?, num("ext_energy_16")?],
            ext_oscillation: [num("ext_osc_4")?, num("ext_osc_8")?, num("ext_osc_16")?],
            n_bubbles: count("n_bubbles")?,
            error: text("error")?.to_string(),
            wall_time: 0.0,
        })
    }
}

/// Writes records as CSV. Floats use the shortest round-trip representation, so
/// identical records give identical bytes.
pub fn write_records_csv<W: Write>(records: &[ExperimentRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for r in records {
        out.write_record(r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<ExperimentRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let index: HashMap<String, usize> =
        reader.headers()?.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
    reader.records().map(|row| ExperimentRecord::from_csv_row(&index, &row?)).collect()
}

/// Column names of a CSV produced by [`write_records_csv`].
pub fn csv_columns() -> &'static [&'static str] {
    &CSV_COLUMNS
}

/// Everything a sweep produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub config: ExperimentConfig,
    pub records: Vec<ExperimentRecord>,
    pub report: ThresholdReport,
    /// `tension_l2` against `ell`.
    pub tension_rate: Option<RateFit>,
    pub expected_matches: Option<bool>,
}

impl SweepOutcome {
    /// Writes `<name>.csv` and `<name>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.config.name));
        let json_path = dir.join(format!("{}.json", self.config.name));
        write_records_csv(&self.records, std::io::BufWriter::new(std::fs::File::create(&csv_path)?))?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(&json_path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.flush()?;
        Ok((csv_path, json_path))
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        write_records_csv(&self.records, &mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy)]
struct Rung {
    ell: f64,
    height: f64,
    phase: Option<f64>,
}

fn rungs(config: &ExperimentConfig) -> Result<Vec<Rung>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut phase = || config.randomize_phase.then(|| rng.gen_range(0.0..std::f64::consts::TAU));
    Ok(match config.ladder()? {
        Ladder::Collar(ells) => ells.into_iter().map(|ell| Rung { ell, height: 0.0, phase: phase() }).collect(),
        Ladder::Torus(bs) => bs
            .into_iter()
            .map(|b| {
                let ell = TorusGeometry::new(config.twist, b).map(|g| g.sys_length()).unwrap_or(f64::NAN);
                Rung { ell, height: b, phase: phase() }
            })
            .collect(),
    })
}

fn build_rung(config: &ExperimentConfig, rung: &Rung) -> Result<MapField> {
    let grid = if rung.height > 0.0 {
        CylinderGrid::torus(&TorusGeometry::new(config.twist, rung.height)?, config.grid.h_s, config.grid.n_theta)?
    } else {
        CylinderGrid::collar(&CollarGeometry::new(rung.ell)?, config.grid.h_s, config.grid.n_theta)?
    };
    let family = match (&config.family, rung.phase) {
        (FamilySpec::CurveSweep { curve, total_length, length_law, .. }, Some(phase)) => FamilySpec::CurveSweep {
            curve: curve.clone(),
            total_length: *total_length,
            length_law: *length_law,
            phase,
        },
        (f, _) => f.clone(),
    };
    family.build(&config.target, grid)
}

/// Fills the neck measurements of `rec` from the primary neck of `dec`.
fn measure_neck(config: &ExperimentConfig, u: &MapField, dec: &Decomposition, rec: &mut ExperimentRecord) -> Result<()> {
    let Some(neck) = dec.primary_neck() else {
        rec.case = "trivial".into();
        if let Some(g) = dec.gaps.first() {
            rec.neck_start = g.neck_start;
            rec.neck_end = g.neck_end;
        }
        return Ok(());
    };
    debug_assert_eq!(neck.case, NeckCase::Threshold);
    let (b, a) = (neck.neck_start, neck.neck_end);
    rec.case = "threshold".into();
    rec.neck_start = b;
    rec.neck_end = a;
    if a > u.grid().s_max() {
        return Err(Error::Degenerate("the neck crosses the torus seam".into()));
    }
    let curve = connecting_curve(u);
    let v = arclength_reparametrize(&curve, b, a)?;
    rec.half_length = v.half_length();
    rec.curve_tension_l1 = curve_tension_lp(&v, 1.0)?;
    rec.curve_tension_l2 = curve_tension_lp(&v, 2.0)?;
    rec.curve_tension_lp =
        config.analysis.p_values.iter().map(|&p| Ok((p, curve_tension_lp(&v, p)?))).collect::<Result<_>>()?;
    rec.geodesic_deviation = geodesic_deviation(&v)?;
    rec.min_velocity_ratio = velocity_lower_bound_check(u, &curve, b, a, dec.delta).min_alpha_ratio;
    let split = neck_tension_split(u, &curve, b, a, config.analysis.split_p, dec.delta)?;
    rec.split_tension = split.tension_term;
    rec.split_angular = split.angular_term;
    rec.split_angular_speed = split.angular_speed_term;
    rec.split_mixed = split.mixed_term;
    Ok(())
}

fn run_rung(config: &ExperimentConfig, rung: &Rung) -> ExperimentRecord {
    let start = Instant::now();
    let mut rec = ExperimentRecord {
        ell: rung.ell,
        height: rung.height,
        h_s: config.grid.h_s,
        n_theta: config.grid.n_theta,
        case: "error".into(),
        ..Default::default()
    };
    let outcome = (|| -> Result<()> {
        let u = build_rung(config, rung)?;
        rec.h_s = u.grid().h_s();
        rec.n_s = u.grid().n_s();
        let dec = decompose(&u, &config.analysis.decompose_params())?;
        rec.tension_l2 = dec.tension_l2;
        rec.normalized_tension = dec.normalized_tension;
        rec.eps = dec.normalized_tension;
        rec.delta = dec.delta;
        rec.n_bubbles = dec.bubble_centers.len();
        for (i, d) in extended_region_diagnostics(&u, &dec, &EXTENSION_LENGTHS).into_iter().enumerate() {
            rec.ext_energy[i] = d.energy;
            rec.ext_oscillation[i] = d.oscillation;
        }
        measure_neck(config, &u, &dec, &mut rec)
    })();
    if let Err(e) = outcome {
        rec.error = e.to_string();
        rec.half_length = 0.0;
        rec.curve_tension_l1 = 0.0;
        rec.curve_tension_l2 = 0.0;
        rec.curve_tension_lp.clear();
        rec.geodesic_deviation = 0.0;
        rec.min_velocity_ratio = 0.0;
        rec.case = if rec.case == "threshold" { "threshold".into() } else { "error".into() };
    }
    rec.wall_time = start.elapsed().as_secs_f64();
    rec
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// Runs every rung of the ladder (in parallel), then classifies the sweep.
///
/// Failures of single rungs are recorded in their `error` column; only an invalid
/// configuration fails the whole sweep. Records keep ladder order.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let ladder = rungs(config)?;
    let work = || ladder.par_iter().map(|r| run_rung(config, r)).collect::<Vec<_>>();
    let records = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let report = threshold_report(&records);
    let tension_rate = fit_rate(&records, "ell", "tension_l2").ok();
    let expected_matches = config.expected.map(|e: Classification| e == report.classification);
    Ok(SweepOutcome { config: config.clone(), records, report, tension_rate, expected_matches })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(text).unwrap()
    }

    const GEODESIC: &str = r#"
        name = "geodesic"
        ell_list = [0.3, 0.2, 0.1]
        [grid]
        h_s = 0.2
        n_theta = 32
        [family]
        family = "curve-sweep"
        total_length = 2.0
        curve = { kind = "great-circle" }
    "#;

    #[test]
    fn geodesic_sweep_records() {
        let out = run_sweep(&config(GEODESIC)).unwrap();
        assert_eq!(out.records.len(), 3);
        for r in &out.records {
            assert!(r.error.is_empty(), "{}", r.error);
            assert_eq!(r.case, "threshold");
            assert!(r.geodesic_deviation <= 1e-4, "{}", r.geodesic_deviation);
            assert!(r.half_length > 0.0 && r.half_length < 1.0);
            for c in csv_columns() {
                if let Some(v) = r.value(c) {
                    assert!(v.is_finite(), "{c}");
                }
            }
        }
        assert_eq!(out.records.iter().map(|r| r.ell).collect::<Vec<_>>(), vec![0.3, 0.2, 0.1]);
    }

    #[test]
    fn csv_round_trip_and_determinism() {
        let c = config(GEODESIC);
        let a = run_sweep(&c).unwrap();
        let b = run_sweep(&c).unwrap();
        let text = a.csv_string().unwrap();
        assert_eq!(text, b.csv_string().unwrap());
        let back = read_records_csv(text.as_bytes()).unwrap();
        for (x, y) in back.iter().zip(&a.records) {
            assert_eq!(x.tension_l2, y.tension_l2);
            assert_eq!(x.ext_energy, y.ext_energy);
            assert_eq!(x.case, y.case);
        }
    }

    #[test]
    fn seeded_phases_are_reproducible() {
        let c = config(&GEODESIC.replace("name = \"geodesic\"", "name = \"g\"\nrandomize_phase = true\nseed = 11"));
        let p1: Vec<_> = rungs(&c).unwrap().iter().map(|r| r.phase.unwrap()).collect();
        let p2: Vec<_> = rungs(&c).unwrap().iter().map(|r| r.phase.unwrap()).collect();
        assert_eq!(p1, p2);
        assert!(p1.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn failing_rungs_do_not_stop_the_sweep() {
        let text = r#"
            name = "bad"
            ell_list = [0.5, 0.2]
            [grid]
            h_s = 0.2
            n_theta = 32
            [family]
            family = "glued"
            curve = { kind = "great-circle" }
            bubbles = [{ center = 0.0 }]
            neck_lengths = [1.0, 1.0]
            transition_halfwidth = 6.0
        "#;
        let out = run_sweep(&config(text)).unwrap();
        assert_eq!(out.records.len(), 2);
        assert!(!out.records[0].error.is_empty(), "ell = 0.5 collar is too short for the glue bands");
        assert!(out.records[1].error.is_empty(), "{}", out.records[1].error);
    }
}
