//! The `aqo` command line: `enumerate`, `analyze` and `avoid`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::graph::{enumerate_maximal_independent_sets, generate_graph, parse_graph, Graph, GraphKind};
use crate::model::{AnnealInstance, DriverField};
use crate::report::{analyze, to_json, AnalysisOptions, AvoidReport, CatalogReport, InstanceInfo};
use crate::spectrum::{LambdaGrid, SolverOptions};
use crate::strategy::{iterative_avoid, scale_c, AvoidOptions, AvoidStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "aqo", version, about = "Level-crossing analysis for adiabatic MIS optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print every maximal independent set as JSON.
    Enumerate(Source),
    /// Predict and measure local/global crossings; writes a report and a trace.
    Analyze(AnalyzeArgs),
    /// Adjust the driver until the ground state no longer swaps.
    Avoid(AvoidArgs),
}

#[derive(Debug, Args)]
pub struct Source {
    /// Instance file: `n` on the first line, then one `u v` edge per line.
    #[arg(required_unless_present = "generate", conflicts_with = "generate")]
    pub path: Option<PathBuf>,
    /// Generator spec, e.g. `split:7,2` or `random_gnp:10,0.3`.
    #[arg(long = "gen", value_name = "KIND:PARAMS")]
    pub generate: Option<String>,
    /// Seed for random generators and the eigensolver.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InstanceArgs {
    #[command(flatten)]
    pub source: Source,
    /// Penalty coefficient (default: n).
    #[arg(long)]
    pub c: Option<f64>,
    /// Driver amplitudes: `uniform:x` or a comma-separated list.
    #[arg(long, default_value = "uniform:1")]
    pub delta: String,
    /// Geometric λ grid `lo:hi:points`.
    #[arg(long, default_value = "0.01:1.0:64")]
    pub grid: String,
    /// Number of lowest levels to track.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Directory for report and trace files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Cross-check perturbative values against dense finite differences.
    #[arg(long, hide = true)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct AvoidArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Maximum number of driver adjustments.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: u64,
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } | Error::TrackingAmbiguity(_) => EXIT_SOLVER,
        _ => EXIT_USAGE,
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Enumerate(source) => {
            let (graph, _) = load(&source)?;
            let catalog = enumerate_maximal_independent_sets(&graph);
            out.write_all(to_json(&CatalogReport::new(graph.n(), &catalog))?.as_bytes())?;
            Ok(EXIT_OK)
        }
        Command::Analyze(args) => {
            let loaded = prepare(&args.instance, err)?;
            let options = AnalysisOptions {
                grid: loaded.grid.clone(),
                k: args.instance.k,
                seed: args.instance.source.seed,
                solver: SolverOptions::default(),
                oracle: args.oracle,
            };
            let (report, trace) = analyze(&loaded.name, &loaded.source, &loaded.instance, &options)?;
            let json = to_json(&report)?;
            let dir = &args.instance.out_dir;
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{}.report.json", loaded.name)), &json)?;
            let mut csv = Vec::new();
            trace.write_csv(&mut csv)?;
            fs::write(dir.join(format!("{}.trace.csv", loaded.name)), csv)?;
            out.write_all(json.as_bytes())?;
            Ok(EXIT_OK)
        }
        Command::Avoid(args) => {
            let loaded = prepare(&args.instance, err)?;
            let budget = args.budget as usize;
            let options = AvoidOptions {
                grid: loaded.grid.clone(),
                k: args.instance.k.min(loaded.instance.dim()).max(2),
                solver: SolverOptions::default().with_seed(args.instance.source.seed),
            };
            let result = iterative_avoid(&loaded.instance, budget, &options)?;
            let exhausted = result.status == AvoidStatus::BudgetExhausted;
            let info = InstanceInfo::new(&loaded.name, &loaded.source, &loaded.instance);
            let json = to_json(&AvoidReport::new(info, budget, result))?;
            let dir = &args.instance.out_dir;
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{}.report.json", loaded.name)), &json)?;
            out.write_all(json.as_bytes())?;
            if exhausted {
                writeln!(err, "error: budget exhausted with the swap still present")?;
                return Ok(EXIT_BUDGET);
            }
            Ok(EXIT_OK)
        }
    }
}

struct Loaded {
    name: String,
    source: String,
    instance: AnnealInstance,
    grid: LambdaGrid,
}

fn prepare(args: &InstanceArgs, err: &mut dyn Write) -> Result<Loaded> {
    let (graph, source) = load(&args.source)?;
    let name = instance_name(&args.source);
    let c = match args.c {
        Some(c) => c,
        None => {
            let scaled = scale_c(&graph);
            if let Some(w) = &scaled.warning {
                writeln!(err, "warning: {w}")?;
            }
            scaled.c
        }
    };
    let driver = parse_delta(&args.delta, graph.n())?;
    let grid = parse_grid(&args.grid)?;
    if args.k == 0 {
        return Err(Error::InvalidArgument("--k must be at least 1".into()));
    }
    Ok(Loaded {
        name,
        source,
        instance: AnnealInstance::new(graph, c, driver)?,
        grid,
    })
}

fn load(source: &Source) -> Result<(Graph, String)> {
    match (&source.path, &source.generate) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let graph = parse_graph(&text).map_err(|e| match e {
                Error::Parse { line, message } => Error::Parse {
                    line,
                    message: format!("{}: {message}", path.display()),
                },
                other => other,
            })?;
            Ok((graph, path.display().to_string()))
        }
        (None, Some(spec)) => {
            let kind: GraphKind = spec.parse()?;
            Ok((generate_graph(&kind, source.seed)?, format!("gen:{kind}")))
        }
        (None, None) => Err(Error::InvalidArgument("an instance path or --gen is required".into())),
    }
}

fn instance_name(source: &Source) -> String {
    match (&source.path, &source.generate) {
        (Some(path), _) => Path::new(path)
            .file_stem()
            .map_or_else(|| "instance".into(), |s| s.to_string_lossy().into_owned()),
        (None, Some(spec)) => {
            let mut name: String = spec
                .chars()
                .map(|ch| if ch.is_ascii_alphanumeric() || ch == '.' || ch == '_' { ch } else { '-' })
                .collect();
            if spec.starts_with("random") || spec.starts_with("gnp") {
                name.push_str(&format!("-s{}", source.seed));
            }
            name
        }
        (None, None) => "instance".into(),
    }
}

/// `uniform:x` or a comma-separated list of `n` amplitudes.
pub fn parse_delta(text: &str, n: usize) -> Result<DriverField> {
    let bad = |why: &str| Error::InvalidDriver(format!("{why}: {text:?}"));
    if let Some(rest) = text.strip_prefix("uniform:") {
        let x: f64 = rest.trim().parse().map_err(|_| bad("malformed amplitude"))?;
        return DriverField::uniform(n, x);
    }
    let values = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad("malformed amplitude")))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != n {
        return Err(Error::InvalidDriver(format!("{} amplitudes for {n} nodes", values.len())));
    }
    DriverField::new(values)
}

/// `lo:hi:points`, geometric.
pub fn parse_grid(text: &str) -> Result<LambdaGrid> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::InvalidArgument(format!("grid must be lo:hi:points, got {text:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let points: usize = parts[2].trim().parse().map_err(|_| bad())?;
    LambdaGrid::geometric(lo, hi, points)
}
