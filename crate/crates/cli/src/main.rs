//! `sd` — command-line driver for Sinkhorn-divergence barycenter pipelines.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
//! Standard output carries machine-readable `key=value` results; diagnostics
//! go to standard error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sinkhorn_descent::descent::{
    functional_gradient, ksbd, run_sd, BarycenterProblem, DescentConfig, DescentError,
    DescentTrace, SdRunError,
};
use sinkhorn_descent::experiments::{
    build_experiment, fw_config_from_spec, write_run, ExperimentError, ExperimentKind,
    ExperimentSpec,
};
use sinkhorn_descent::fw::{run_fw, FwConfig, FwError, WeightRule};
use sinkhorn_descent::measures::{
    load_measure_csv, median_heuristic_bandwidth, uniform_in_box, CostKind, DiscreteMeasure,
    DomainBox, GroundCost, MeasureError, RbfKernel,
};
use sinkhorn_descent::sinkhorn::{
    entropic_ot, entropic_ot_self, sinkhorn_divergence, SinkhornConfig, SolveError,
};

#[derive(Parser)]
#[command(
    name = "sd",
    version,
    about = "Sinkhorn-divergence barycenters of discrete measures by particle descent"
)]
struct Cli {
    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Per-step log on standard error.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a barycenter by particle descent and write a run directory.
    Barycenter(BarycenterArgs),
    /// Print the Sinkhorn divergence between two point clouds.
    Divergence(DivergenceArgs),
    /// Print the stationarity diagnostic of a measure against sources.
    Ksbd(KsbdArgs),
    /// Grid-search conditional-gradient baseline (d <= 3).
    Fw(FwArgs),
    /// Execute a JSON experiment spec.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct BarycenterArgs {
    /// Source measure CSV files.
    #[arg(long, required = true, num_args = 1..)]
    sources: Vec<PathBuf>,
    /// Initial particles: a CSV path or `uniform:N` for N seeded uniform
    /// draws over the domain box.
    #[arg(long)]
    init: String,
    /// Entropic regularization (no default on purpose).
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    steps: usize,
    /// Step size.
    #[arg(long)]
    eta: f64,
    /// Run directory to write.
    #[arg(long)]
    out: PathBuf,
    /// Disable the backtracking line search.
    #[arg(long)]
    no_backtrack: bool,
    /// Early-stop threshold on the stationarity diagnostic.
    #[arg(long, default_value_t = 0.0)]
    ksbd_stop: f64,
    /// Kernel bandwidth; median heuristic on the initial measure if omitted.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-source Monte-Carlo subsample for the gradient expectation.
    #[arg(long)]
    minibatch: Option<usize>,
    /// Solver tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct DivergenceArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Also print the three transport terms.
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct KsbdArgs {
    /// The measure to diagnose.
    #[arg(long)]
    measure: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    sources: Vec<PathBuf>,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum WeightRuleArg {
    Harmonic,
    TwoOverTPlusTwo,
}

impl From<WeightRuleArg> for WeightRule {
    fn from(v: WeightRuleArg) -> Self {
        match v {
            WeightRuleArg::Harmonic => WeightRule::Harmonic,
            WeightRuleArg::TwoOverTPlusTwo => WeightRule::TwoOverTPlusTwo,
        }
    }
}

#[derive(Args)]
struct FwArgs {
    #[arg(long, required = true, num_args = 1..)]
    sources: Vec<PathBuf>,
    #[arg(long)]
    init: String,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    steps: usize,
    /// Lattice points per axis.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    #[arg(long, value_enum, default_value_t = WeightRuleArg::TwoOverTPlusTwo)]
    weight_rule: WeightRuleArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Method {
    Sd,
    Fw,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment spec.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Sd)]
    method: Method,
}

/// Errors carrying their exit code: 2 for validation, 3 for numerics.
struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 2,
        }
    }
}

fn solve_code(e: &SolveError) -> u8 {
    match e {
        SolveError::MaxIterations { .. } | SolveError::NonFinite => 3,
        _ => 2,
    }
}

fn descent_code(e: &DescentError) -> u8 {
    match e {
        DescentError::SourceSolve { source, .. } => solve_code(source),
        DescentError::SelfSolve(source) => solve_code(source),
        DescentError::BacktrackingFailed { .. } => 3,
        _ => 2,
    }
}

impl From<MeasureError> for CliError {
    fn from(e: MeasureError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CliError {
            code: solve_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<DescentError> for CliError {
    fn from(e: DescentError) -> Self {
        CliError {
            code: descent_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<SdRunError> for CliError {
    fn from(e: SdRunError) -> Self {
        CliError {
            code: descent_code(&e.error),
            message: e.to_string(),
        }
    }
}

impl From<FwError> for CliError {
    fn from(e: FwError) -> Self {
        match e {
            FwError::Descent(inner) => inner.into(),
            FwError::Measure(inner) => inner.into(),
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Descent(inner) => inner.into(),
            other => CliError::validation(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = sinkhorn_descent::configure_threads(threads) {
            eprintln!("warning: could not cap threads: {e}");
        }
    }
    let verbose = cli.verbose;
    let result = match cli.command {
        Command::Barycenter(args) => cmd_barycenter(args, verbose),
        Command::Divergence(args) => cmd_divergence(args),
        Command::Ksbd(args) => cmd_ksbd(args),
        Command::Fw(args) => cmd_fw(args, verbose),
        Command::Experiment(args) => cmd_experiment(args, verbose),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

fn load_sources(paths: &[PathBuf]) -> Result<Vec<DiscreteMeasure>, CliError> {
    paths
        .iter()
        .map(|p| {
            load_measure_csv(p).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))
        })
        .collect()
}

/// Assemble the problem and initial particles shared by the descent and
/// baseline commands. The domain box is the padded hull of every input; a
/// `uniform:N` initial is sampled inside the source hull.
fn assemble(
    sources: Vec<DiscreteMeasure>,
    init: &str,
    gamma: f64,
    bandwidth: Option<f64>,
    seed: u64,
) -> Result<(BarycenterProblem, DiscreteMeasure), CliError> {
    let initial = match init.strip_prefix("uniform:") {
        Some(count) => {
            let n: usize = count
                .parse()
                .map_err(|_| CliError::validation(format!("--init: bad count `{count}`")))?;
            let source_hull = DomainBox::hull_of(&sources, 0.05)?;
            uniform_in_box(seed, n, &source_hull)?
        }
        None => load_measure_csv(&PathBuf::from(init))
            .map_err(|e| CliError::validation(format!("{init}: {e}")))?,
    };
    let mut members = sources.clone();
    members.push(initial.clone());
    let domain = DomainBox::hull_of(&members, 0.05)?;
    let bandwidth = match bandwidth {
        Some(b) => b,
        None => median_heuristic_bandwidth(&initial)?,
    };
    let kernel = RbfKernel::new(bandwidth)?;
    let cost = GroundCost::new(CostKind::SqEuclideanHalf, domain);
    let problem = BarycenterProblem::new(sources, cost, kernel, gamma)?;
    Ok((problem, initial))
}

fn log_trace(trace: &DescentTrace, verbose: bool) {
    if !verbose {
        return;
    }
    for (t, r) in trace.records.iter().enumerate() {
        eprintln!(
            "step {t}: objective={} ksbd={} eta={} sweeps={} wall_ms={}",
            sig12(r.objective),
            sig12(r.ksbd),
            r.step_size_used,
            r.sinkhorn_sweeps,
            r.wall.as_millis()
        );
    }
}

fn echo_spec(
    name: ExperimentKind,
    parameters: BTreeMap<String, serde_json::Value>,
    descent: DescentConfig,
    out: &std::path::Path,
) -> ExperimentSpec {
    ExperimentSpec {
        name,
        parameters,
        descent,
        output_dir: out.to_path_buf(),
    }
}

fn report_run(trace: &DescentTrace) {
    println!(
        "final_objective={}",
        sig12(trace.final_objective().unwrap_or(f64::NAN))
    );
    println!(
        "final_ksbd={}",
        sig12(trace.final_ksbd().unwrap_or(f64::NAN))
    );
    println!("steps_completed={}", trace.steps_completed());
}

fn cmd_barycenter(args: BarycenterArgs, verbose: bool) -> Result<(), CliError> {
    let sources = load_sources(&args.sources)?;
    let (problem, initial) = assemble(sources, &args.init, args.gamma, args.bandwidth, args.seed)?;

    let mut cfg = DescentConfig::new(SinkhornConfig::new(args.gamma).with_tolerance(args.tol));
    cfg.step_size = args.eta;
    cfg.max_steps = args.steps;
    cfg.ksbd_stop = args.ksbd_stop;
    cfg.backtracking = !args.no_backtrack;
    cfg.seed = args.seed;
    cfg.minibatch = args.minibatch;

    let (final_measure, trace) = run_sd(&initial, &problem, &cfg)?;
    log_trace(&trace, verbose);

    let mut params = BTreeMap::new();
    params.insert(
        "sources".to_string(),
        serde_json::json!(args
            .sources
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()),
    );
    params.insert("init".to_string(), serde_json::json!(args.init));
    params.insert(
        "bandwidth".to_string(),
        serde_json::json!(problem.kernel().bandwidth()),
    );
    let spec = echo_spec(ExperimentKind::Custom, params, cfg, &args.out);
    write_run(&args.out, &final_measure, &trace, &spec, &problem)?;
    report_run(&trace);
    Ok(())
}

fn cmd_divergence(args: DivergenceArgs) -> Result<(), CliError> {
    let a = load_measure_csv(&args.a)
        .map_err(|e| CliError::validation(format!("{}: {e}", args.a.display())))?;
    let b = load_measure_csv(&args.b)
        .map_err(|e| CliError::validation(format!("{}: {e}", args.b.display())))?;
    let domain = DomainBox::hull_of(&[a.clone(), b.clone()], 0.05)?;
    let cost = GroundCost::new(CostKind::SqEuclideanHalf, domain);
    let cfg = SinkhornConfig::new(args.gamma).with_tolerance(args.tol);
    cfg.validate()?;
    if args.raw {
        let ot_ab = entropic_ot(&a, &b, &cost, &cfg)?;
        let ot_aa = entropic_ot_self(&a, &cost, &cfg)?;
        let ot_bb = entropic_ot_self(&b, &cost, &cfg)?;
        println!("OT_ab={}", sig12(ot_ab));
        println!("OT_aa={}", sig12(ot_aa));
        println!("OT_bb={}", sig12(ot_bb));
        println!("S_gamma={}", sig12(ot_ab - 0.5 * ot_aa - 0.5 * ot_bb));
    } else {
        let s = sinkhorn_divergence(&a, &b, &cost, &cfg)?;
        println!("S_gamma={}", sig12(s));
    }
    Ok(())
}

fn cmd_ksbd(args: KsbdArgs) -> Result<(), CliError> {
    let measure = load_measure_csv(&args.measure)
        .map_err(|e| CliError::validation(format!("{}: {e}", args.measure.display())))?;
    let sources = load_sources(&args.sources)?;
    let mut members = sources.clone();
    members.push(measure.clone());
    let domain = DomainBox::hull_of(&members, 0.05)?;
    let bandwidth = match args.bandwidth {
        Some(b) => b,
        None => median_heuristic_bandwidth(&measure)?,
    };
    let kernel = RbfKernel::new(bandwidth)?;
    let cost = GroundCost::new(CostKind::SqEuclideanHalf, domain);
    let problem = BarycenterProblem::new(sources, cost, kernel, args.gamma)?;
    let cfg = SinkhornConfig::new(args.gamma).with_tolerance(args.tol);
    let direction = functional_gradient(&measure, &problem, &cfg, None)?;
    let value = ksbd(&measure, &direction, problem.kernel())?;
    println!("ksbd={}", sig12(value));
    Ok(())
}

fn cmd_fw(args: FwArgs, verbose: bool) -> Result<(), CliError> {
    let sources = load_sources(&args.sources)?;
    let dim = sources.first().map(|s| s.dim()).unwrap_or(0);
    if dim > 3 {
        return Err(CliError::validation(format!(
            "grid search limited to d <= 3, got d = {dim}"
        )));
    }
    let (problem, initial) = assemble(sources, &args.init, args.gamma, args.bandwidth, args.seed)?;
    let cfg = FwConfig {
        grid_resolution: args.grid,
        steps: args.steps,
        weight_rule: args.weight_rule.into(),
        sinkhorn: SinkhornConfig::new(args.gamma).with_tolerance(args.tol),
    };
    let (final_measure, trace) = run_fw(&initial, &problem, &cfg)?;
    log_trace(&trace, verbose);

    let mut params = BTreeMap::new();
    params.insert("method".to_string(), serde_json::json!("fw"));
    params.insert("grid".to_string(), serde_json::json!(args.grid));
    params.insert(
        "sources".to_string(),
        serde_json::json!(args
            .sources
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()),
    );
    params.insert("init".to_string(), serde_json::json!(args.init));
    let mut descent_echo =
        DescentConfig::new(SinkhornConfig::new(args.gamma).with_tolerance(args.tol));
    descent_echo.max_steps = args.steps;
    descent_echo.seed = args.seed;
    let spec = echo_spec(ExperimentKind::Custom, params, descent_echo, &args.out);
    write_run(&args.out, &final_measure, &trace, &spec, &problem)?;
    report_run(&trace);
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs, verbose: bool) -> Result<(), CliError> {
    let spec = ExperimentSpec::from_path(&args.spec)?;
    let (problem, initial) = build_experiment(&spec)?;
    let (final_measure, trace) = match args.method {
        Method::Sd => run_sd(&initial, &problem, &spec.descent)?,
        Method::Fw => {
            if problem.dim() > 3 {
                return Err(CliError::validation(format!(
                    "grid search limited to d <= 3, got d = {}",
                    problem.dim()
                )));
            }
            run_fw(&initial, &problem, &fw_config_from_spec(&spec)?)?
        }
    };
    log_trace(&trace, verbose);
    write_run(&spec.output_dir, &final_measure, &trace, &spec, &problem)?;
    report_run(&trace);
    Ok(())
}
