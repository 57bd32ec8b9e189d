//! Command-line front end: CSV ingestion, model fitting and persistence,
//! map evaluation, test execution, and polygon emission for external
//! plotting. Exit codes are a scripting contract: 0 success, 2 input or
//! usage error, 3 numeric failure, 4 duplicate data rows.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use otranks::{
    depth, fit, generate, independence_statistic, independence_test, load_model, quantile, rank,
    save_model, two_sample_statistic, two_sample_statistic_exact_2d, two_sample_test,
    two_sample_test_exact_2d, Backend, Error, Family, GeneratorSpec, RankMode, ReferenceKind,
    ReferenceMeasure, Result, Seeds, SolverConfig,
};

#[derive(Parser)]
#[command(
    name = "otranks",
    version,
    about = "Multivariate ranks, quantiles and rank-based tests via semi-discrete transport"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReferenceArg {
    Cube,
    Ball,
    Spherical,
}

impl From<ReferenceArg> for ReferenceKind {
    fn from(v: ReferenceArg) -> Self {
        match v {
            ReferenceArg::Cube => ReferenceKind::Cube,
            ReferenceArg::Ball => ReferenceKind::Ball,
            ReferenceArg::Spherical => ReferenceKind::Spherical,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Auto,
    Exact1d,
    Exact2d,
    Montecarlo,
}

impl From<BackendArg> for Backend {
    fn from(v: BackendArg) -> Self {
        match v {
            BackendArg::Auto => Backend::Auto,
            BackendArg::Exact1d => Backend::Exact1d,
            BackendArg::Exact2d => Backend::Exact2d,
            BackendArg::Montecarlo => Backend::Montecarlo,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    ExactVertex,
    Optimize,
}

impl From<ModeArg> for RankMode {
    fn from(v: ModeArg) -> Self {
        match v {
            ModeArg::Auto => RankMode::Auto,
            ModeArg::ExactVertex => RankMode::ExactVertex,
            ModeArg::Optimize => RankMode::Optimize,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a transport model to CSV data and write it as JSON.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ReferenceArg::Cube)]
        reference: ReferenceArg,
        #[arg(long, value_enum, default_value_t = BackendArg::Auto)]
        backend: BackendArg,
        /// Sup-norm tolerance on cell-measure residuals; backend default
        /// when omitted (1e-7 exact, 0.25/n montecarlo).
        #[arg(long)]
        tol: Option<f64>,
        /// Monte Carlo quadrature size; default max(10^4, 100 n).
        #[arg(long, value_name = "M")]
        mc_size: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        max_iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip the first CSV line.
        #[arg(long)]
        header: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the rank map at query points; one output row per query.
    Rank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
        mode: ModeArg,
        #[arg(long)]
        header: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the quantile map at reference points; outputs are data rows.
    Quantile {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        header: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the depth function; each output row is the query plus depth.
    Depth {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required_unless_present = "grid", conflicts_with = "grid")]
        query: Option<PathBuf>,
        /// Evaluate on a G x G lattice over the unit square instead.
        #[arg(long, value_name = "G")]
        grid: Option<usize>,
        #[arg(long)]
        header: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit every power cell of a d=2 cube model as plot-ready polygons.
    Cells {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset as CSV.
    Synth {
        /// Family name: banana, standard-normal, correlated-normal,
        /// gauss-mixture-2s-ii, lognormal-gamma, gauss-mixture-indep-iii.
        family: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-sample test; writes the report JSON and prints T and p.
    Test2s {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// Monte Carlo sample count for the statistic.
        #[arg(long, default_value_t = 10_000)]
        mc: usize,
        /// Permutation replicate count; statistic only when omitted.
        #[arg(long, value_name = "B")]
        perms: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Integrate by exact polygon areas (d=2 cube data only).
        #[arg(long)]
        exact2d: bool,
        #[arg(long)]
        header: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mutual-independence test across coordinate blocks.
    Testindep {
        #[arg(long)]
        input: PathBuf,
        /// Block widths, comma separated; must sum to the column count.
        #[arg(long)]
        split: String,
        #[arg(long, value_name = "B")]
        perms: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        header: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(err) = thread_cap().and_then(|_| run(cli)) {
        eprintln!("error: {err}");
        return ExitCode::from(error_code(&err));
    }
    ExitCode::SUCCESS
}

fn error_code(err: &Error) -> u8 {
    match err {
        Error::DuplicateSite { .. } => 4,
        Error::NoConvergence { .. }
        | Error::Numeric(_)
        | Error::RankCertificate(_)
        | Error::Sampling(_) => 3,
        _ => 2,
    }
}

/// OTRANKS_THREADS caps worker parallelism. Execution is sequential, so any
/// positive cap is honored trivially; the variable is still validated so
/// scripts fail loudly on typos.
fn thread_cap() -> Result<Option<usize>> {
    let raw = match std::env::var("OTRANKS_THREADS") {
        Ok(raw) => raw,
        Err(std::env::VarError::NotPresent) => return Ok(None),
        Err(e) => return Err(Error::InvalidArgument(format!("OTRANKS_THREADS: {e}"))),
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(Some(n)),
        _ => Err(Error::InvalidArgument(format!(
            "OTRANKS_THREADS must be a positive integer, got {raw:?}"
        ))),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            input,
            reference,
            backend,
            tol,
            mc_size,
            max_iterations,
            seed,
            header,
            out,
        } => {
            let rows = read_csv(&input, header)?;
            let reference = ReferenceMeasure::new(reference.into(), rows[0].len())?;
            let config = SolverConfig {
                backend: backend.into(),
                tolerance: tol,
                max_iterations,
                quadrature_size: mc_size,
                seed,
                ..SolverConfig::default()
            };
            let fitted = fit(&rows, reference, &config)?;
            save_model(&fitted, &out)?;
            println!(
                "residual {:e} after {} iterations",
                fitted.residual, fitted.iterations
            );
            Ok(())
        }
        Command::Rank {
            model,
            query,
            mode,
            header,
            out,
        } => {
            let fitted = load_model(&model)?;
            let queries = read_csv(&query, header)?;
            let mut rows = Vec::with_capacity(queries.len());
            for q in &queries {
                rows.push(rank(&fitted, q, mode.into())?.point);
            }
            write_csv(&out, &rows)
        }
        Command::Quantile {
            model,
            query,
            header,
            out,
        } => {
            let fitted = load_model(&model)?;
            let queries = read_csv(&query, header)?;
            let mut rows = Vec::with_capacity(queries.len());
            for q in &queries {
                rows.push(quantile(&fitted, q)?);
            }
            write_csv(&out, &rows)
        }
        Command::Depth {
            model,
            query,
            grid,
            header,
            out,
        } => {
            let fitted = load_model(&model)?;
            let queries = match (query, grid) {
                (Some(path), None) => read_csv(&path, header)?,
                (None, Some(g)) => depth_grid(g)?,
                _ => unreachable!("clap enforces exactly one query source"),
            };
            let mut rows = Vec::with_capacity(queries.len());
            for q in &queries {
                let value = depth(&fitted, q)?;
                let mut row = q.clone();
                row.push(value);
                rows.push(row);
            }
            write_csv(&out, &rows)
        }
        Command::Cells { model, out } => {
            let fitted = load_model(&model)?;
            if fitted.reference.kind != ReferenceKind::Cube || fitted.reference.d != 2 {
                return Err(Error::Unsupported(
                    "cell export needs a d=2 cube model".into(),
                ));
            }
            let cells = fitted.potential.cells_2d()?;
            let sites = fitted.potential.points();
            let doc = CellsFile {
                version: 1,
                cells: cells
                    .iter()
                    .map(|c| CellOut {
                        site: c.site,
                        point: &sites[c.site],
                        area: c.measure,
                        vertices: &c.vertices,
                    })
                    .collect(),
            };
            write_json(&out, &doc)
        }
        Command::Synth {
            family,
            n,
            seed,
            out,
        } => {
            let family = Family::from_str(&family)?;
            let rows = generate(&GeneratorSpec { family, n, seed })?;
            write_csv(&out, &rows)
        }
        Command::Test2s {
            x,
            y,
            mc,
            perms,
            seed,
            exact2d,
            header,
            out,
        } => {
            let x = read_csv(&x, header)?;
            let y = read_csv(&y, header)?;
            let reference = ReferenceMeasure::cube(x[0].len())?;
            let seeds = Seeds::from_master(seed);
            let report = match (exact2d, perms) {
                (false, None) => two_sample_statistic(&x, &y, reference, mc, seeds)?,
                (false, Some(b)) => two_sample_test(&x, &y, reference, mc, b, seeds)?,
                (true, None) => two_sample_statistic_exact_2d(&x, &y, reference, seeds)?,
                (true, Some(b)) => two_sample_test_exact_2d(&x, &y, reference, b, seeds)?,
            };
            write_json(&out, &report)?;
            print_statistic(report.statistic, report.p_value);
            Ok(())
        }
        Command::Testindep {
            input,
            split,
            perms,
            seed,
            header,
            out,
        } => {
            let z = read_csv(&input, header)?;
            let split = parse_split(&split)?;
            let seeds = Seeds::from_master(seed);
            let report = match perms {
                None => independence_statistic(&z, &split, seeds)?,
                Some(b) => independence_test(&z, &split, b, seeds)?,
            };
            write_json(&out, &report)?;
            print_statistic(report.statistic, report.p_value);
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct CellOut<'a> {
    site: usize,
    point: &'a [f64],
    area: f64,
    vertices: &'a [Vec<f64>],
}

#[derive(Serialize)]
struct CellsFile<'a> {
    version: u32,
    cells: Vec<CellOut<'a>>,
}

fn print_statistic(t: f64, p: Option<f64>) {
    match p {
        Some(p) => println!("T = {t:e}  p = {p}"),
        None => println!("T = {t:e}"),
    }
}

fn read_csv(path: &Path, header: bool) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 && header || line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                let cell = cell.trim();
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::InvalidArgument(format!(
                        "{}:{}: not a finite number: {cell:?}",
                        path.display(),
                        idx + 1
                    ))),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::InvalidArgument(format!(
                    "{}:{}: expected {} columns, got {}",
                    path.display(),
                    idx + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(rows)
}

/// 17 significant digits; parsing the output reproduces every bit.
fn write_csv(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    use std::fmt::Write as _;
    let mut text = String::new();
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                text.push(',');
            }
            let _ = write!(text, "{v:.16e}");
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("report serialization: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Row-major G x G lattice on [0,1]^2 with spacing 1/(G-1).
fn depth_grid(g: usize) -> Result<Vec<Vec<f64>>> {
    if g < 2 {
        return Err(Error::InvalidArgument(
            "grid size must be at least 2".into(),
        ));
    }
    let step = 1.0 / (g - 1) as f64;
    let mut rows = Vec::with_capacity(g * g);
    for i in 0..g {
        for j in 0..g {
            rows.push(vec![i as f64 * step, j as f64 * step]);
        }
    }
    Ok(rows)
}

fn parse_split(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|part| {
            let part = part.trim();
            part.parse::<usize>().map_err(|_| {
                Error::InvalidArgument(format!("split component {part:?} is not an integer"))
            })
        })
        .collect()
}
