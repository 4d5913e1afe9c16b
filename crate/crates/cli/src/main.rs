use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use collar_lab::analysis::{decompose, verify_lemma_suite, DecomposeParams, LemmaParams};
use collar_lab::experiments::{
    csv_columns, fit_log_log, fit_rate, read_records_csv, run_sweep, threshold_report, ExperimentConfig, Ladder,
    RateFit,
};
use collar_lab::field::{read_map_field, write_map_field, CylinderGrid};
use collar_lab::geometry::{CollarGeometry, TorusGeometry};

/// Almost-harmonic maps on degenerating collars and tori: build, analyse, sweep.
#[derive(Parser, Debug)]
#[command(name = "collar-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the collar half-length and conformal factor samples as CSV.
    Geometry {
        #[arg(long)]
        ell: f64,
        /// Number of equally spaced samples on [0, X].
        #[arg(long, default_value_t = 11)]
        samples: usize,
    },
    /// Build a map from a sweep config and write it as a field container.
    Build {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Collar length to build at; defaults to the first rung.
        #[arg(long, conflicts_with = "height")]
        ell: Option<f64>,
        /// Torus height to build at; defaults to the first rung.
        #[arg(long)]
        height: Option<f64>,
    },
    /// Split a stored map into bubbles and necks; writes the decomposition as JSON.
    Decompose {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        eps0: Option<f64>,
        #[arg(long)]
        c0: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Evaluate the estimate checks on a stored collar map; writes the ratio report.
    VerifyLemmas {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        eps0: Option<f64>,
        /// Exit 1 if any ratio exceeds its ceiling.
        #[arg(long)]
        check: bool,
    },
    /// Run a sweep; writes `<name>.csv` and `<name>.json`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit 1 if a rung failed or the classification differs from `expected`.
        #[arg(long)]
        check: bool,
        /// Curve-tension exponents, replacing analysis.p_values.
        #[arg(long, num_args = 1..)]
        p: Vec<f64>,
    },
    /// Fit a log-log rate to two columns of a CSV and classify a sweep CSV.
    Rates {
        csv: PathBuf,
        #[arg(long, default_value = "tension_l2")]
        column: String,
        #[arg(long, default_value = "ell")]
        x: String,
    },
}

/// A failed `--check`, reported with exit code 1.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<CheckFailed>() => {
            eprintln!("check failed: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Geometry { ell, samples } => geometry(ell, samples),
        Command::Build { config, out, ell, height } => build(&config, &out, ell, height),
        Command::Decompose { input, out, eps0, c0, delta } => {
            let u = read_field(&input)?;
            let defaults = DecomposeParams::default();
            let params = DecomposeParams {
                eps0: eps0.unwrap_or(defaults.eps0),
                c0: c0.unwrap_or(defaults.c0),
                delta,
                ..defaults
            };
            let dec = decompose(&u, &params)?;
            dec.write_json(create(&out)?)?;
            let necks = dec.gaps.iter().filter(|g| g.neck_length() > 0.0).count();
            println!("bubbles: {}, gaps: {}, non-trivial necks: {}", dec.bubble_centers.len(), dec.gaps.len(), necks);
            Ok(())
        }
        Command::VerifyLemmas { input, out, eps0, check } => {
            let u = read_field(&input)?;
            let mut params = LemmaParams::default();
            if let Some(e) = eps0 {
                params.eps0 = e;
            }
            let report = verify_lemma_suite(&u, &params)?;
            report.write_json(create(&out)?)?;
            for c in &report.checks {
                println!("{:<24} max ratio {:>10.4e}  {}", c.name, c.max_ratio, if c.passed { "ok" } else { "FAIL" });
            }
            println!("hopf identity residual {:.3e} ({:.3} h^2)", report.hopf_identity_residual, report.hopf_identity_scaled);
            if check && !report.passed {
                bail!(CheckFailed("an estimate ratio exceeds its ceiling".into()));
            }
            Ok(())
        }
        Command::Sweep { config, out, check, p } => sweep(&config, out, check, p),
        Command::Rates { csv, column, x } => rates(&csv, &column, &x),
    }
}

fn geometry(ell: f64, samples: usize) -> Result<()> {
    let geom = CollarGeometry::new(ell)?;
    let x = geom.half_length();
    println!("# ell = {ell}, X = {x:.6}");
    println!("s,rho");
    let n = samples.max(2) - 1;
    for i in 0..=n {
        let s = x * i as f64 / n as f64;
        println!("{s},{}", geom.rho(s)?);
    }
    Ok(())
}

fn build(config_path: &Path, out: &Path, ell: Option<f64>, height: Option<f64>) -> Result<()> {
    let config = ExperimentConfig::from_path(config_path)?;
    let grid = match config.ladder()? {
        Ladder::Collar(ells) => {
            if height.is_some() {
                bail!("{} is a collar sweep; use --ell", config_path.display());
            }
            let ell = ell.unwrap_or(ells[0]);
            CylinderGrid::collar(&CollarGeometry::new(ell)?, config.grid.h_s, config.grid.n_theta)?
        }
        Ladder::Torus(bs) => {
            if ell.is_some() {
                bail!("{} is a torus sweep; use --height", config_path.display());
            }
            let b = height.unwrap_or(bs[0]);
            CylinderGrid::torus(&TorusGeometry::new(config.twist, b)?, config.grid.h_s, config.grid.n_theta)?
        }
    };
    let (n_s, n_theta) = (grid.n_s(), grid.n_theta());
    let u = config.family.build(&config.target, grid)?;
    let mut w = create(out)?;
    write_map_field(&u, &mut w)?;
    w.flush()?;
    println!("wrote {} ({} x {} nodes)", out.display(), n_s, n_theta);
    Ok(())
}

fn sweep(config_path: &Path, out: Option<PathBuf>, check: bool, p: Vec<f64>) -> Result<()> {
    let mut config = ExperimentConfig::from_path(config_path)?;
    if !p.is_empty() {
        config.analysis.p_values = p;
        config.validate()?;
    }
    let dir = out.unwrap_or_else(|| config.output_dir.clone());
    let outcome = run_sweep(&config)?;
    let (csv, json) = outcome.write(&dir)?;
    println!("wrote {} and {}", csv.display(), json.display());
    if let Some(fit) = &outcome.tension_rate {
        print_fit("tension_l2", "ell", fit);
    }
    println!("classification: {} ({})", outcome.report.classification, outcome.report.reason);
    if !check {
        return Ok(());
    }
    let failed: Vec<String> =
        outcome.records.iter().filter(|r| !r.error.is_empty()).map(|r| format!("ell = {}: {}", r.ell, r.error)).collect();
    if !failed.is_empty() {
        bail!(CheckFailed(format!("failed rungs: {}", failed.join("; "))));
    }
    if outcome.expected_matches == Some(false) {
        bail!(CheckFailed(format!(
            "expected {}, classified {}",
            config.expected.map(|c| c.to_string()).unwrap_or_default(),
            outcome.report.classification
        )));
    }
    Ok(())
}

fn rates(path: &Path, y: &str, x: &str) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header = text.lines().next().unwrap_or_default();
    let full = csv_columns().iter().all(|c| header.split(',').any(|h| h.trim() == *c));
    if full {
        let records = read_records_csv(text.as_bytes())?;
        let fit = fit_rate(&records, x, y)?;
        print_fit(y, x, &fit);
        let report = threshold_report(&records);
        println!("classification: {} ({})", report.classification, report.reason);
        for note in &report.notes {
            println!("note: {note}");
        }
    } else {
        let (xs, ys) = read_columns(&text, x, y)?;
        let fit = fit_log_log(&xs, &ys)?;
        print_fit(y, x, &fit);
        println!("classification: skipped (not a sweep CSV)");
    }
    Ok(())
}

/// Reads two numeric columns from an arbitrary CSV.
fn read_columns(text: &str, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name).with_context(|| format!("CSV lacks column {name:?}"));
    let (ix, iy) = (find(x)?, find(y)?);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let parse = |i: usize, name: &str| -> Result<f64> {
            let t = row.get(i).unwrap_or_default().trim();
            t.parse().with_context(|| format!("row {}: column {name}: {t:?} is not a number", line + 1))
        };
        xs.push(parse(ix, x)?);
        ys.push(parse(iy, y)?);
    }
    Ok((xs, ys))
}

fn print_fit(y: &str, x: &str, fit: &RateFit) {
    println!(
        "{y} ~ {x}^slope: slope = {:.4} +- {:.4}, intercept = {:.4}, points = {}",
        fit.slope, fit.stderr, fit.intercept, fit.points
    );
}

fn read_field(path: &Path) -> Result<collar_lab::field::MapField> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(read_map_field(BufReader::new(f))?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}
