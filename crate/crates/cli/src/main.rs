mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::RangedU64ValueParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use xsu_core::bounds::{
    degenerate_bound, nondegenerate_bound, sweep_m, variance_condition, BoundIngredients,
};
use xsu_core::clt::{clt_demo, write_clt_csv, CltConfig, CltErrors, CltStatistic};
use xsu_core::mc::{
    default_clustering, run_mc, table1_suite, write_cells_csv, DgpConfig, ErrorModel, McConfig,
    McResult, MeanModel, Table1Config, Table1Row,
};
use xsu_core::mixing::{beta_discrete, BerbeeCoupler};
use xsu_core::sparsity::{
    tau_bound_table, tau_exact_with_budget, TauTable, DEFAULT_ENUMERATION_BUDGET,
};
use xsu_core::spec_test::{run_test, Bandwidth, SmoothingKernel, SpecTestConfig};
use xsu_core::{io as readers, IndexSpace};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] xsu_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("config: {0}")]
    Config(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io_error",
            CliError::Config(_) => "config_error",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "xsu",
    version,
    about = "U-statistics under cross-sectional dependence"
)]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel-smoothing test of a linear conditional mean
    SpecTest(SpecTestArgs),
    /// Rejection rate of the test over simulated datasets from one design
    Mc(McArgs),
    /// Rejection rates over the six error models and four mean models
    Table1(Table1Args),
    /// Counts of index vectors by m-profile, exact or bounded
    Sparsity(SparsityArgs),
    /// β-mixing coefficient of a discrete joint law, with a coupling demo
    Mixing(MixingArgs),
    /// Evaluate normal-approximation bounds from a JSON ingredient document
    Bounds(BoundsArgs),
    /// Wasserstein-1 distance of a simulated statistic to N(0, 1) across n
    CltDemo(CltArgs),
}

#[derive(Args)]
struct Common {
    /// JSON object of flag values; flags given on the command line take precedence
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Gaussian,
    Epanechnikov,
    Uniform,
}

impl From<KernelArg> for SmoothingKernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Gaussian => SmoothingKernel::Gaussian,
            KernelArg::Epanechnikov => SmoothingKernel::Epanechnikov,
            KernelArg::Uniform => SmoothingKernel::Uniform,
        }
    }
}

#[derive(Args)]
struct TestArgs {
    /// Smoothing kernel
    #[arg(long, value_enum, default_value_t = KernelArg::Gaussian)]
    kernel: KernelArg,
    /// Fixed bandwidth for every regressor (replaces the rule)
    #[arg(long, value_parser = positive)]
    bandwidth: Option<f64>,
    /// Multiplier c of the bandwidth rule c·sd(z)·n^(-1/5)
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    bandwidth_mult: f64,
    /// Nominal size of the one-sided test
    #[arg(long, default_value_t = 0.05, value_parser = probability)]
    level: f64,
}

impl TestArgs {
    fn config(&self) -> SpecTestConfig {
        SpecTestConfig {
            kernel: self.kernel.into(),
            bandwidth: match self.bandwidth {
                Some(b) => Bandwidth::Fixed(b),
                None => Bandwidth::Rule {
                    multiplier: self.bandwidth_mult,
                },
            },
            level: self.level,
        }
    }
}

#[derive(Args)]
struct Workers {
    /// Worker threads (default: all cores)
    #[arg(long, env = "XSU_WORKERS", value_parser = RangedU64ValueParser::<usize>::new().range(1..))]
    workers: Option<usize>,
}

#[derive(Args)]
struct SpecTestArgs {
    /// CSV with header `y,z` or `y,z1,...,zd`
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    test: TestArgs,
    /// Reserved; the test itself is deterministic
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorsArg {
    Iid,
    Ar1,
    TwoWay,
}

#[derive(Args)]
struct McArgs {
    /// Sample size
    #[arg(long, default_value_t = 2000, value_parser = RangedU64ValueParser::<usize>::new().range(4..))]
    n: usize,
    /// Replications
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Error law
    #[arg(long, value_enum, default_value_t = ErrorsArg::Iid)]
    errors: ErrorsArg,
    /// AR(1) coefficient
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Row clusters of the two-way design (default: near-square factorization of n)
    #[arg(long, requires = "n2")]
    n1: Option<usize>,
    /// Column clusters of the two-way design
    #[arg(long, requires = "n1")]
    n2: Option<usize>,
    /// Height of the Gaussian bump in the mean; omit for the null model
    #[arg(long)]
    psi: Option<f64>,
    /// Scale of the bump
    #[arg(long, default_value_t = 0.25, value_parser = positive)]
    tau: f64,
    /// Include every replication's T_n in the JSON output
    #[arg(long)]
    keep_statistics: bool,
    #[command(flatten)]
    test: TestArgs,
    #[command(flatten)]
    workers: Workers,
    /// Also write the cell as CSV
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Table1Args {
    /// Sample size
    #[arg(long, default_value_t = 2000, value_parser = RangedU64ValueParser::<usize>::new().range(4..))]
    n: usize,
    /// Replications per cell
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// The two two-way shapes as `N1xN2,N1xN2`
    #[arg(long, value_delimiter = ',', num_args = 2, value_parser = shape)]
    clustering: Option<Vec<(usize, usize)>>,
    #[command(flatten)]
    test: TestArgs,
    #[command(flatten)]
    workers: Workers,
    /// Write the grid as CSV
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TauMethod {
    /// Exact when the enumeration fits the budget, otherwise the bound
    Auto,
    Exact,
    Bound,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("space").required(true))]
struct SparsityArgs {
    /// Square distance matrix CSV (`inf` for unreachable pairs)
    #[arg(long, group = "space")]
    distance_matrix: Option<PathBuf>,
    /// Edge list CSV `u,v`; distances are hop counts
    #[arg(long, group = "space")]
    graph: Option<PathBuf>,
    /// Node count for --graph (default: largest node + 1)
    #[arg(long, requires = "graph")]
    nodes: Option<usize>,
    /// Two-way clustering CSV `node,row_cluster,col_cluster`
    #[arg(long, group = "space")]
    clustering: Option<PathBuf>,
    /// Integer lattice coordinates, one point per line
    #[arg(long, group = "space")]
    lattice_file: Option<PathBuf>,
    /// Length of the index vectors
    #[arg(long, value_parser = RangedU64ValueParser::<usize>::new().range(1..))]
    q: usize,
    /// Radius m
    #[arg(long, value_parser = non_negative)]
    m: f64,
    #[arg(long, value_enum, default_value_t = TauMethod::Auto)]
    method: TauMethod,
    /// Largest number of index vectors to enumerate
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_BUDGET)]
    budget: u128,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MixingArgs {
    /// Joint pmf as a CSV matrix, rows indexed by A and columns by Y
    #[arg(long)]
    joint: PathBuf,
    /// Run the maximal coupling and report the empirical mismatch rate
    #[arg(long)]
    couple: bool,
    /// Coupling draws
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    draws: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write the JSON result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundMode {
    Nondegenerate,
    Degenerate,
    DegenerateDetail,
    Variance,
}

#[derive(Args)]
struct BoundsArgs {
    /// Ingredient document: one object, or an array of objects to sweep over m
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = BoundMode::Nondegenerate)]
    mode: BoundMode,
    /// σ_n² for the variance condition
    #[arg(long, required_if_eq("mode", "variance"), value_parser = positive)]
    sigma2: Option<f64>,
    /// The variance condition holds when lhs / σ_n² is below this
    #[arg(long, default_value_t = 0.1, value_parser = positive)]
    tolerance: f64,
    /// Write the JSON result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatisticArg {
    SpecTest,
    FixedProduct,
    StandardNormal,
}

#[derive(Args)]
struct CltArgs {
    /// Sample sizes
    #[arg(long, value_delimiter = ',', default_values_t = [200, 500, 1000],
          value_parser = RangedU64ValueParser::<usize>::new().range(4..))]
    n_grid: Vec<usize>,
    /// Replications per sample size
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(2..))]
    reps: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ErrorsArg::Iid)]
    errors: ErrorsArg,
    /// AR(1) coefficient
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, value_enum, default_value_t = StatisticArg::SpecTest)]
    statistic: StatisticArg,
    #[command(flatten)]
    test: TestArgs,
    #[command(flatten)]
    workers: Workers,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn non_negative(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a non-negative number")),
    }
}

fn probability(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("`{s}` is not in (0, 1)")),
    }
}

fn shape(s: &str) -> std::result::Result<(usize, usize), String> {
    let parse = |part: &str| part.trim().parse::<usize>().ok().filter(|&v| v > 0);
    s.split_once('x')
        .and_then(|(a, b)| Some((parse(a)?, parse(b)?)))
        .ok_or_else(|| format!("`{s}` is not of the form N1xN2"))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Writes `body` to `path`, or to stdout when `path` is `None`.
fn emit(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| CliError::Io { path, source }
    };
    match path {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
            body(&mut out)?;
            out.flush().map_err(io_err(path))
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            body(&mut out)?;
            out.flush().map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    emit(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)
            .map_err(|e| xsu_core::Error::Io(e.into()))?;
        writeln!(out).map_err(|e| xsu_core::Error::Io(e).into())
    })
}

fn spec_test(args: SpecTestArgs) -> Result<()> {
    let data = readers::read_regression(open(&args.input)?)?;
    let result = run_test(&data, &args.test.config())?;
    emit_json(args.out.as_deref(), &result)
}

#[derive(Serialize)]
struct McReport<'a> {
    error_model: &'a str,
    params: &'a str,
    column_label: String,
    n: usize,
    seed: u64,
    #[serde(flatten)]
    result: &'a McResult,
}

fn mc(args: McArgs) -> Result<()> {
    let error_model = match args.errors {
        ErrorsArg::Iid => ErrorModel::IidNormal,
        ErrorsArg::Ar1 => ErrorModel::Ar1 { rho: args.rho },
        ErrorsArg::TwoWay => {
            let (n1, n2) = args
                .n1
                .zip(args.n2)
                .unwrap_or(default_clustering(args.n)[0]);
            ErrorModel::TwoWay { n1, n2 }
        }
    };
    let mean_model = match args.psi {
        Some(psi) => MeanModel::Alternative {
            psi,
            bump_scale: args.tau,
        },
        None => MeanModel::Null,
    };
    let result = run_mc(&McConfig {
        dgp: DgpConfig {
            n: args.n,
            error_model,
            mean_model,
        },
        reps: args.reps,
        seed: args.seed,
        test: args.test.config(),
        workers: args.workers.workers,
        keep_statistics: args.keep_statistics,
    })?;
    let row = Table1Row::new(error_model);
    let label = mean_model.label();
    if let Some(path) = &args.out {
        emit(Some(path), |out| {
            Ok(write_cells_csv([(&row, label.as_str(), &result)], out)?)
        })?;
    }
    emit_json(
        None,
        &McReport {
            error_model: &row.error_model_label,
            params: &row.params,
            column_label: label,
            n: args.n,
            seed: args.seed,
            result: &result,
        },
    )
}

fn table1(args: Table1Args) -> Result<()> {
    let clustering = args.clustering.map(|shapes| [shapes[0], shapes[1]]);
    let table = table1_suite(&Table1Config {
        n: args.n,
        reps: args.reps,
        seed: args.seed,
        test: args.test.config(),
        workers: args.workers.workers,
        clustering,
    })?;
    if let Some(path) = &args.out {
        emit(Some(path), |out| Ok(table.write_csv(out)?))?;
    }
    emit(None, |out| {
        write!(out, "{}", table.render_text()).map_err(|e| xsu_core::Error::Io(e).into())
    })
}

fn read_space(args: &SparsityArgs) -> Result<IndexSpace> {
    let space = if let Some(path) = &args.distance_matrix {
        readers::read_distance_matrix(open(path)?)?
    } else if let Some(path) = &args.graph {
        readers::read_edge_list(open(path)?, args.nodes)?
    } else if let Some(path) = &args.clustering {
        readers::read_clustering(open(path)?)?
    } else if let Some(path) = &args.lattice_file {
        readers::read_lattice(open(path)?)?
    } else {
        unreachable!("clap requires one space input")
    };
    Ok(space)
}

fn sparsity(args: SparsityArgs) -> Result<()> {
    let space = read_space(&args)?;
    let table: TauTable = match args.method {
        TauMethod::Exact => tau_exact_with_budget(&space, args.q, args.m, args.budget)?,
        TauMethod::Bound => tau_bound_table(&space, args.q, args.m)?,
        TauMethod::Auto => match tau_exact_with_budget(&space, args.q, args.m, args.budget) {
            Err(xsu_core::Error::BudgetExceeded { required, limit }) => {
                log::warn!("enumerating {required} vectors exceeds the budget of {limit}; reporting bounds");
                tau_bound_table(&space, args.q, args.m)?
            }
            other => other?,
        },
    };
    let kind = if table.exact { "exact" } else { "bound" };
    emit(args.out.as_deref(), |out| {
        let mut writer = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| CliError::from(xsu_core::Error::Io(io::Error::other(e)));
        writer
            .write_record(["profile", "count", "kind"])
            .map_err(csv_err)?;
        for (profile, count) in &table.entries {
            writer
                .write_record([profile.to_string(), count.to_string(), kind.to_string()])
                .map_err(csv_err)?;
        }
        writer.flush().map_err(|e| xsu_core::Error::Io(e).into())
    })
}

#[derive(Serialize)]
struct CouplingReport {
    beta: f64,
    draws: u64,
    seed: u64,
    mismatches: u64,
    mismatch_rate: f64,
    mc_se: f64,
}

fn mixing(args: MixingArgs) -> Result<()> {
    let joint = readers::read_joint(open(&args.joint)?)?;
    let beta = beta_discrete(&joint);
    if !args.couple {
        return emit_json(args.out.as_deref(), &serde_json::json!({ "beta": beta }));
    }
    let coupler = BerbeeCoupler::new(&joint, args.seed)?;
    let mismatches = coupler
        .take(args.draws as usize)
        .filter(|d| d.y != d.y_tilde)
        .count() as u64;
    let rate = mismatches as f64 / args.draws as f64;
    emit_json(
        args.out.as_deref(),
        &CouplingReport {
            beta,
            draws: args.draws,
            seed: args.seed,
            mismatches,
            mismatch_rate: rate,
            mc_se: (rate * (1.0 - rate) / args.draws as f64).sqrt(),
        },
    )
}

fn bounds(args: BoundsArgs) -> Result<()> {
    let doc: serde_json::Value = serde_json::from_reader(open(&args.input)?)
        .map_err(|e| xsu_core::Error::Parse(format!("{}: {e}", args.input.display())))?;
    let parse = |value: serde_json::Value| {
        serde_json::from_value::<BoundIngredients>(value).map_err(|e| {
            CliError::from(xsu_core::Error::Parse(format!(
                "{}: {e}",
                args.input.display()
            )))
        })
    };
    let (grid, sweep) = match doc {
        serde_json::Value::Array(items) => (
            items.into_iter().map(parse).collect::<Result<Vec<_>>>()?,
            true,
        ),
        single => (vec![parse(single)?], false),
    };
    let out = args.out.as_deref();
    if args.mode == BoundMode::Variance {
        let sigma2 = args
            .sigma2
            .expect("clap requires --sigma2 in variance mode");
        let checks = grid
            .iter()
            .map(|ing| variance_condition(ing, sigma2, args.tolerance))
            .collect::<xsu_core::Result<Vec<_>>>()?;
        return if sweep {
            emit_json(out, &checks)
        } else {
            emit_json(out, &checks[0])
        };
    }
    let evaluate = |ing: &BoundIngredients| match args.mode {
        BoundMode::Nondegenerate => nondegenerate_bound(ing),
        BoundMode::Degenerate => degenerate_bound(ing, false),
        BoundMode::DegenerateDetail => degenerate_bound(ing, true),
        BoundMode::Variance => unreachable!(),
    };
    if sweep {
        emit_json(out, &sweep_m(&grid, evaluate)?)
    } else {
        emit_json(out, &evaluate(&grid[0])?)
    }
}

fn clt(args: CltArgs) -> Result<()> {
    let rows = clt_demo(&CltConfig {
        n_grid: args.n_grid,
        reps: args.reps,
        seed: args.seed,
        errors: match args.errors {
            ErrorsArg::Iid => CltErrors::Iid,
            ErrorsArg::Ar1 => CltErrors::Ar1 { rho: args.rho },
            ErrorsArg::TwoWay => CltErrors::TwoWay,
        },
        statistic: match args.statistic {
            StatisticArg::SpecTest => CltStatistic::SpecTest,
            StatisticArg::FixedProduct => CltStatistic::FixedProduct,
            StatisticArg::StandardNormal => CltStatistic::StandardNormal,
        },
        test: args.test.config(),
        workers: args.workers.workers,
    })?;
    emit(args.out.as_deref(), |out| Ok(write_clt_csv(&rows, out)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SpecTest(args) => spec_test(args),
        Command::Mc(args) => mc(args),
        Command::Table1(args) => table1(args),
        Command::Sparsity(args) => sparsity(args),
        Command::Mixing(args) => mixing(args),
        Command::Bounds(args) => bounds(args),
        Command::CltDemo(args) => clt(args),
    }
}

fn fail(error: CliError) -> ExitCode {
    let line = serde_json::json!({ "error": error.kind(), "message": error.to_string() });
    eprintln!("{line}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match config::merge(std::env::args_os().collect::<Vec<OsString>>()) {
        Ok(argv) => argv,
        Err(e) => return fail(e),
    };
    let cli = Cli::try_parse_from(argv).unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
