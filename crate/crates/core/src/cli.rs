//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::bogoliubov::d_matrix;
use crate::detectors::{detect, DetectOptions};
use crate::distribution::{
    populations, total_probability, w_grid, w_grid_numeric, Estimator, GridSpec,
};
use crate::error::{OsgError, Result};
use crate::io::{to_report_json, write_grid, BuilderName, StateSpec};
use crate::kernel::profile::SlitProfile;
use crate::kernel::quadrature::QuadratureSpec;
use crate::state::DEFAULT_SUPPORT_CAP;
use crate::validation::run_battery;

pub const WORKERS_ENV: &str = "OSG_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "osg", version, about = "Two-dimensional optical Stern-Gerlach deflection patterns")]
pub struct Cli {
    /// Worker threads (default: $OSG_WORKERS, else all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the momentum density on a polar grid.
    Simulate(SimulateArgs),
    /// Run the entanglement detectors.
    Detect(DetectArgs),
    /// Ring populations by one estimator.
    Populations(PopulationArgs),
    /// Sweep the angle argument of a builder state.
    Sweep(SweepArgs),
    /// Print a rotation block D^(N)(theta).
    Coeffs(CoeffArgs),
    /// Run the oracle-equivalence battery.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Analytic,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    #[value(name = "eq8")]
    RingPeak,
    Window,
    Exact,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::RingPeak => Estimator::RingPeak,
            EstimatorArg::Window => Estimator::Window,
            EstimatorArg::Exact => Estimator::Exact,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "analytic")]
    pub kernel: KernelArg,
    /// Grid as r:<count>,phi:<count>,pmax:<value>; any subset.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::detectors::DEFAULT_ABS_THRESHOLD)]
    pub abs_threshold: f64,
    #[arg(long, default_value_t = crate::detectors::DEFAULT_REL_THRESHOLD)]
    pub rel_threshold: f64,
}

#[derive(Debug, Args)]
pub struct PopulationArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    pub estimator: EstimatorArg,
    /// Directory for populations.json; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Builder spec whose single angle argument is swept.
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub from: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    pub to: f64,
    #[arg(long, default_value_t = 33)]
    pub count: usize,
    #[arg(long, value_enum, default_value = "exact")]
    pub estimator: EstimatorArg,
}

#[derive(Debug, Args)]
pub struct CoeffArgs {
    #[arg(long = "n")]
    pub total: usize,
    #[arg(long, allow_negative_numbers = true)]
    pub theta: f64,
    /// Directory for coeffs.csv; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 20240601)]
    pub seed: u64,
}

/// Parses `r:400,phi:720,pmax:60`; missing keys keep their defaults.
pub fn parse_grid(text: &str) -> std::result::Result<GridSpec, String> {
    let mut spec = GridSpec::default();
    for part in text.split(',').filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once(':')
            .ok_or_else(|| format!("expected key:value, got '{part}'"))?;
        match key.trim() {
            "r" => spec.radial_count = value.trim().parse().map_err(|e| format!("r: {e}"))?,
            "phi" => spec.angular_count = value.trim().parse().map_err(|e| format!("phi: {e}"))?,
            "pmax" => {
                let v: f64 = value.trim().parse().map_err(|e| format!("pmax: {e}"))?;
                if !(v.is_finite() && v > 0.0) {
                    return Err("pmax must be positive".into());
                }
                spec.p_max = Some(v);
            }
            other => return Err(format!("unknown grid key '{other}'")),
        }
    }
    if spec.radial_count < 2 || spec.angular_count < 4 {
        return Err("grid needs r >= 2 and phi >= 4".into());
    }
    Ok(spec)
}

fn read_spec(path: &Path) -> Result<(StateSpec, crate::io::ParsedSpec)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| OsgError::Io(format!("{}: {e}", path.display())))?;
    let spec = StateSpec::from_json(&text)?;
    let parsed = spec.resolve()?;
    Ok((spec, parsed))
}

fn worker_count(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| OsgError::invalid(format!("{WORKERS_ENV} must be a positive integer"))),
        Err(_) => Ok(None),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count(cli.workers)? {
        if n == 0 {
            return Err(OsgError::invalid("worker count must be positive"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| OsgError::invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Populations(a) => populations_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Coeffs(a) => coeffs(a),
        Command::Validate(a) => validate(a),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let (spec, parsed) = read_spec(&a.state)?;
    let grid_spec = a.grid.unwrap_or_default();
    let grid = match a.kernel {
        KernelArg::Analytic => w_grid(&parsed.state, &parsed.atom, &parsed.params, &grid_spec)?,
        KernelArg::Numeric => w_grid_numeric(
            &parsed.state,
            &parsed.atom,
            &parsed.params,
            &grid_spec,
            &SlitProfile::for_params(&parsed.params),
            &QuadratureSpec::default(),
        )?,
    };
    write_grid(&a.out, &grid, &spec, parsed.norm_correction, &grid_spec)?;
    println!(
        "wrote {} x {} grid to {} (total probability {:.6})",
        grid.radial_values.len(),
        grid.angular_values.len(),
        a.out.display(),
        total_probability(&grid)
    );
    for w in &grid.meta.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn detect_cmd(a: DetectArgs) -> Result<()> {
    let (_, parsed) = read_spec(&a.state)?;
    let opts = DetectOptions {
        abs_threshold: a.abs_threshold,
        rel_threshold: a.rel_threshold,
    };
    let report = detect(&parsed.state, &parsed.atom, &parsed.params, &opts)?;
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("detect.json"), to_report_json(&report)?)?;
    let mut stdout = std::io::stdout().lock();
    for e in &report.spectrum.entries {
        writeln!(stdout, "P_{} = {:.6}", e.n, e.p)?;
    }
    match (report.theta_m, report.concurrence) {
        (Some(t), Some(c)) => writeln!(stdout, "theta_m = {t:.6} rad, concurrence = {c:.6}")?,
        _ => writeln!(stdout, "theta_m: not applicable")?,
    }
    writeln!(stdout, "flagged rings: {:?}", report.flagged())?;
    match report.predicted_missing {
        Some(n) => writeln!(stdout, "predicted missing ring: {n}")?,
        None => writeln!(stdout, "predicted missing ring: none")?,
    }
    Ok(())
}

fn populations_cmd(a: PopulationArgs) -> Result<()> {
    let (_, parsed) = read_spec(&a.state)?;
    let spec = populations(&parsed.state, &parsed.atom, &parsed.params, a.estimator.into())?;
    let json = to_report_json(&spec)?;
    match a.out {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("populations.json"), json)?;
        }
        None => print!("{json}"),
    }
    for w in &spec.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (spec, parsed) = read_spec(&a.state)?;
    let builder = spec
        .builder
        .clone()
        .ok_or_else(|| OsgError::invalid("sweep needs a builder-based state spec"))?;
    if !matches!(builder.name, BuilderName::OnePhoton | BuilderName::TwoPhoton) {
        return Err(OsgError::invalid("sweep supports the one_photon and two_photon builders"));
    }
    if a.count < 2 {
        return Err(OsgError::invalid("sweep count must be at least 2"));
    }
    let alphas: Vec<f64> = (0..a.count)
        .map(|i| a.from + (a.to - a.from) * i as f64 / (a.count - 1) as f64)
        .collect();
    let n_max = parsed.state.max_total() + 1;
    let estimator: Estimator = a.estimator.into();
    let rows: Vec<Result<String>> = alphas
        .par_iter()
        .map(|&alpha| {
            let mut s = spec.clone();
            s.builder = Some(crate::io::BuilderSpec {
                name: builder.name,
                args: vec![alpha],
            });
            let p = s.resolve()?;
            let spectrum = populations(&p.state, &p.atom, &p.params, estimator)?;
            let mut line = format!("{alpha:.12e}");
            if p.state.max_total() == 1 {
                let r = crate::detectors::rotation_angle(&p.state, &p.atom, &p.params, p.params.ring(2))?;
                let c = crate::detectors::concurrence_from_angle(r.theta_m);
                line.push_str(&format!(",{:.12e},{c:.12e}", r.theta_m));
            } else {
                line.push_str(",,");
            }
            for n in 1..=n_max {
                line.push_str(&format!(",{:.12e}", spectrum.get(n).unwrap_or(0.0)));
            }
            Ok(line)
        })
        .collect();
    std::fs::create_dir_all(&a.out)?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(a.out.join("sweep.csv"))?);
    let header: Vec<String> = ["alpha".to_string(), "theta_m".into(), "concurrence".into()]
        .into_iter()
        .chain((1..=n_max).map(|n| format!("P{n}")))
        .collect();
    writeln!(file, "{}", header.join(","))?;
    for row in rows {
        writeln!(file, "{}", row?)?;
    }
    file.flush()?;
    println!("wrote {} sweep rows to {}", alphas.len(), a.out.join("sweep.csv").display());
    Ok(())
}

/// CSV rows `m,n,value` for the rotation block.
pub fn coeffs_csv(total: usize, theta: f64) -> Result<String> {
    if total > DEFAULT_SUPPORT_CAP {
        return Err(OsgError::invalid(format!(
            "N = {total} exceeds the support cap {DEFAULT_SUPPORT_CAP}"
        )));
    }
    if !theta.is_finite() {
        return Err(OsgError::invalid("theta must be finite"));
    }
    let d = d_matrix(total, theta);
    let mut s = String::from("m,n,value\n");
    for m in 0..=total {
        for n in 0..=total {
            s.push_str(&format!("{m},{n},{:.12e}\n", d.get(m, n)));
        }
    }
    Ok(s)
}

fn coeffs(a: CoeffArgs) -> Result<()> {
    let csv = coeffs_csv(a.total, a.theta)?;
    match a.out {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("coeffs.csv"), csv)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let results = run_battery(a.seed)?;
    let mut failed = None;
    for r in &results {
        println!(
            "{} {}: worst {:.3e} (tolerance {:.1e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.worst,
            r.tolerance
        );
        if !r.passed && failed.is_none() {
            failed = Some(r.clone());
        }
    }
    match failed {
        Some(r) => Err(OsgError::Accuracy {
            estimate: r.worst,
            error_bound: r.tolerance,
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_flag_parsing() {
        let g = parse_grid("r:10,phi:20,pmax:5.5").unwrap();
        assert_eq!((g.radial_count, g.angular_count, g.p_max), (10, 20, Some(5.5)));
        let g = parse_grid("phi:36").unwrap();
        assert_eq!((g.radial_count, g.angular_count, g.p_max), (400, 36, None));
        assert!(parse_grid("r:1").is_err());
        assert!(parse_grid("z:3").is_err());
        assert!(parse_grid("pmax:-1").is_err());
    }

    #[test]
    fn coeff_table() {
        let csv = coeffs_csv(1, std::f64::consts::PI / 6.0).unwrap();
        let vals: Vec<f64> = csv
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        let h = 3f64.sqrt() / 2.0;
        for (v, e) in vals.iter().zip([h, 0.5, -0.5, h]) {
            assert!((v - e).abs() < 1e-12);
        }
        assert_eq!(coeffs_csv(2, 0.0).unwrap().lines().count(), 10);
        assert!(coeffs_csv(DEFAULT_SUPPORT_CAP + 1, 0.0).is_err());
    }

    #[test]
    fn cli_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
