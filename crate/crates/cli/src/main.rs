mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use slcone::export::Projection;
use slcone::periodicity::SearchCase;

/// Explicit special Lagrangian cones in C^3: verification, integrable-systems
/// diagnostics, torus search and export.
#[derive(Debug, Parser)]
#[command(name = "slcone", version, about)]
pub struct Cli {
    /// Flat `key = value` file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the special Lagrangian conditions on a parameter grid.
    Verify(VerifyArgs),
    /// Harmonic-map, Toda, Killing-field and spectral-curve diagnostics.
    Diagnose(DiagnoseArgs),
    /// Search one family for doubly periodic parameters and write a catalog.
    TorusSearch(SearchArgs),
    /// Sample the link surface and write an OBJ or PLY mesh.
    Mesh(MeshArgs),
    /// Area of a torus from its periods and lattice.
    Area(AreaArgs),
    /// Integrate one strand and write its samples as CSV.
    StrandTrace(TraceArgs),
}

/// `(θ, B, C)` of the two-variable family.
#[derive(Debug, Clone, Args)]
struct ConeArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    theta: f64,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    b_level: f64,
    #[arg(long, default_value_t = 0.4, allow_negative_numbers = true)]
    c_level: f64,
}

/// Extra inputs of the three-variable family.
#[derive(Debug, Clone, Args)]
struct TripleArgs {
    /// Use the three-variable family; requires `--alpha`.
    #[arg(long)]
    three: bool,
    /// Direction of the first coefficient vector, e.g. `0.267,0.534,0.802`.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    alpha: Option<[f64; 3]>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    a_level: f64,
    /// Half-width of the `r` window, clipped to the strand's interval of existence.
    #[arg(long, default_value_t = 0.25)]
    r_max: f64,
    /// Half-width of the `s` and `t` windows.
    #[arg(long, default_value_t = 3.0)]
    span: f64,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    cone: ConeArgs,
    #[command(flatten)]
    triple: TripleArgs,
    /// Grid points per axis.
    #[arg(long, default_value_t = 20)]
    grid: usize,
    /// Pass threshold for every residual.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 1e-12)]
    integrator_tol: f64,
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    cone: ConeArgs,
    /// Finite-difference step for the Toda, Tzitzeica and Killing checks.
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    /// Finite-difference step for the return map.
    #[arg(long, default_value_t = 1e-4)]
    h_return: f64,
    #[arg(long, default_value_t = 1e-13)]
    integrator_tol: f64,
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write spectral-curve samples to this CSV file.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CurveFormArg::Sextic)]
    curve_form: CurveFormArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CurveFormArg {
    Quadratic,
    Sextic,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long, value_parser = parse_case, default_value = "a")]
    case: SearchCase,
    #[arg(long, default_value_t = 40)]
    max_den: i64,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    /// Sweep step in `C`.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Fixed `B` for cases a and c (defaults: -1 and 0.5).
    #[arg(long, allow_negative_numbers = true)]
    b_level: Option<f64>,
    /// Verify at most this many candidates in total.
    #[arg(long, default_value_t = 12)]
    limit: usize,
    #[arg(long, default_value = "catalog.ndjson")]
    out: PathBuf,
    /// Optional CSV summary of the catalog.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Keep records already in `--out` and continue after them.
    #[arg(long)]
    resume: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MeshFormat {
    Obj,
    Ply,
}

#[derive(Debug, Args)]
struct MeshArgs {
    #[command(flatten)]
    cone: ConeArgs,
    #[command(flatten)]
    triple: TripleArgs,
    /// Samples per axis.
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, value_enum, default_value_t = MeshFormat::Obj)]
    format: MeshFormat,
    /// Three real coordinates, e.g. `re1,re2,im3`.
    #[arg(long, default_value = "re1,re2,re3")]
    projection: Projection,
    /// `s` window `a,b`; defaults to one period.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    s_range: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    t_range: Option<(f64, f64)>,
    /// Radius for the three-variable family.
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    r: f64,
    #[arg(long, default_value_t = 1e-12)]
    integrator_tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AreaArgs {
    #[command(flatten)]
    cone: ConeArgs,
    /// Lattice `a11,a12,a21,a22` in units of the periods.
    #[arg(long, value_parser = parse_lattice, default_value = "1,0,0,1", allow_hyphen_values = true)]
    lattice: [[i64; 2]; 2],
    /// Period used when the `y` potential is constant.
    #[arg(long)]
    s_period: Option<f64>,
    /// Period used when the `z` potential is constant.
    #[arg(long)]
    t_period: Option<f64>,
    #[arg(long, default_value_t = 800)]
    panels: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrandChoice {
    Y,
    Z,
}

#[derive(Debug, Args)]
struct TraceArgs {
    /// Explicit coefficients `c1,c2,c3`; otherwise taken from `--theta`.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    coeffs: Option<[f64; 3]>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    theta: f64,
    #[arg(long, value_enum, default_value_t = StrandChoice::Y)]
    strand: StrandChoice,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    level: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    from: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    to: f64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> =
        s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let v = parse_list(s, 3)?;
    Ok([v[0], v[1], v[2]])
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = parse_list(s, 2)?;
    if v[0] >= v[1] {
        return Err(format!("empty range {s:?}"));
    }
    Ok((v[0], v[1]))
}

fn parse_lattice(s: &str) -> Result<[[i64; 2]; 2], String> {
    let v: Vec<i64> =
        s.split(',').map(|x| x.trim().parse::<i64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v.as_slice() {
        [a, b, c, d] => Ok([[*a, *b], [*c, *d]]),
        _ => Err("lattice needs four integers".into()),
    }
}

fn parse_case(s: &str) -> Result<SearchCase, String> {
    s.parse().map_err(|e: slcone::Error| e.to_string())
}

fn init_workers() -> Result<(), String> {
    let Ok(raw) = std::env::var("SLCONE_WORKERS") else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| format!("SLCONE_WORKERS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err("SLCONE_WORKERS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    if let Err(msg) = init_workers() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match commands::run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if commands::is_usage_error(&e) { 2 } else { 1 })
        }
    }
}
