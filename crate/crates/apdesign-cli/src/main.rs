//! File-mediated pipeline: decompose -> randomize -> estimate, plus the
//! design-parameter optimizer, the simulation harness, and a feasibility
//! validator. Each stage reads and writes the documented formats so the
//! intermediate artifacts stay auditable.
//!
//! Exit codes: 0 ok, 2 parse error, 3 feasibility violation, 4 alignment
//! error, 5 missing data.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use apdesign::decompose::{decompose_one_to_one, ComponentKind};
use apdesign::design::{ap_randomize, DesignParams};
use apdesign::error::{
    DecomposeError, DesignError, EstimateError, MatchingError, OptimizeError, SimError,
};
use apdesign::estimate::estimate_report;
use apdesign::io::{self, ComponentsFile, FileError, PopulationSpec, Sidecar};
use apdesign::many_to_one::{decompose_many_to_one, validate_decomposition};
use apdesign::matching::{build_disagreement, AgentId, Matching, Mode};
use apdesign::optimize::{design_table, optimize_p};
use apdesign::sim::{normality_check, run_simulation};

#[derive(Parser)]
#[command(
    name = "apdesign",
    version,
    about = "Randomized experiments comparing two matching plans"
)]
struct Cli {
    /// Seed for any randomized stage. Required by randomize (unless
    /// --allow-entropy) and overrides the scenario seed in simulate;
    /// accepted and unused by the deterministic stages.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the disagreement set of two matching CSVs and decompose it
    /// into alternating paths and cycles.
    Decompose(DecomposeArgs),
    /// Draw one realization of the alternating-path design.
    Randomize(RandomizeArgs),
    /// Horvitz-Thompson estimate with variance bound and confidence interval.
    Estimate(EstimateArgs),
    /// Minimax-optimal randomization probability per component shape.
    OptimizeP(OptimizeArgs),
    /// Monte Carlo simulation of a scenario config.
    Simulate(SimulateArgs),
    /// Check a decomposition against the feasibility conditions.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct DecomposeArgs {
    /// Treatment matching CSV (header a,b or supplier,demand).
    #[arg(long)]
    treatment: PathBuf,
    /// Control matching CSV.
    #[arg(long)]
    control: PathBuf,
    #[arg(long, value_enum)]
    mode: CliMode,
    /// Supplier capacity C0 (many-to-one only).
    #[arg(long)]
    capacity: Option<u32>,
    /// Output path for the components JSON (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RandomizeArgs {
    /// Components JSON produced by decompose.
    #[arg(long)]
    components: PathBuf,
    /// Conditional randomization probability in (0, 1].
    #[arg(long)]
    p: f64,
    /// JSON file mapping component indices to per-component p overrides.
    #[arg(long)]
    p_map: Option<PathBuf>,
    /// Permit drawing a seed from OS entropy when --seed is omitted.
    #[arg(long)]
    allow_entropy: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    components: PathBuf,
    /// Assignment JSON produced by randomize.
    #[arg(long)]
    assignment: PathBuf,
    /// Outcome CSV (header a,b,y) for the realized matches.
    #[arg(long)]
    outcomes: PathBuf,
    /// Confidence level in (0, 1).
    #[arg(long, default_value_t = 0.95)]
    alpha: f64,
    /// Estimand normalizer (number of pairs, or C0 * suppliers).
    #[arg(long)]
    n: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long, value_enum)]
    kind: Option<CliKind>,
    /// Component length k.
    #[arg(long)]
    length: Option<usize>,
    /// Emit the full design table as CSV instead.
    #[arg(long)]
    table: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config (TOML or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for replications (default: rayon's choice). Results
    /// are byte-identical for any value.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write sorted Q-Q pairs (empirical_q,normal_q) as CSV.
    #[arg(long)]
    qq_out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    components: PathBuf,
    /// Disagreement CSV (header a,b,label with label t or c).
    #[arg(long)]
    disagreement: PathBuf,
    /// Supplier capacity C0.
    #[arg(long)]
    capacity: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    #[value(name = "one-to-one")]
    OneToOne,
    #[value(name = "many-to-one")]
    ManyToOne,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Mode {
        match m {
            CliMode::OneToOne => Mode::OneToOne,
            CliMode::ManyToOne => Mode::ManyToOne,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CliKind {
    Path,
    Cycle,
}

impl From<CliKind> for ComponentKind {
    fn from(k: CliKind) -> ComponentKind {
        match k {
            CliKind::Path => ComponentKind::Path,
            CliKind::Cycle => ComponentKind::Cycle,
        }
    }
}

/// Anything that can stop a stage, mapped onto the documented exit codes.
enum AppError {
    Parse(String),
    Feasibility(String),
    Alignment(String),
    MissingData(String),
    Io(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Parse(_) => 2,
            AppError::Feasibility(_) => 3,
            AppError::Alignment(_) => 4,
            AppError::MissingData(_) => 5,
            AppError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Parse(m)
            | AppError::Feasibility(m)
            | AppError::Alignment(m)
            | AppError::MissingData(m)
            | AppError::Io(m) => m,
        }
    }
}

impl From<FileError> for AppError {
    fn from(e: FileError) -> Self {
        AppError::Parse(e.to_string())
    }
}

impl From<MatchingError> for AppError {
    fn from(e: MatchingError) -> Self {
        match e {
            MatchingError::MissingOutcome(_) => AppError::MissingData(e.to_string()),
            _ => AppError::Feasibility(e.to_string()),
        }
    }
}

impl From<DecomposeError> for AppError {
    fn from(e: DecomposeError) -> Self {
        AppError::Feasibility(e.to_string())
    }
}

impl From<DesignError> for AppError {
    fn from(e: DesignError) -> Self {
        AppError::Parse(e.to_string())
    }
}

impl From<EstimateError> for AppError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::MissingOutcome(_) => AppError::MissingData(e.to_string()),
            EstimateError::InvalidAlpha(_) | EstimateError::InvalidK(_) => {
                AppError::Parse(e.to_string())
            }
            EstimateError::Design(d) => AppError::Parse(d.to_string()),
            EstimateError::ShapeMismatch(_)
            | EstimateError::InfeasibleAssignment(_)
            | EstimateError::NegativeVariance(_) => AppError::Alignment(e.to_string()),
        }
    }
}

impl From<OptimizeError> for AppError {
    fn from(e: OptimizeError) -> Self {
        AppError::Parse(e.to_string())
    }
}

impl From<SimError> for AppError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Matching(m) => m.into(),
            SimError::Decompose(d) => d.into(),
            SimError::Design(d) => d.into(),
            SimError::Estimate(est) => est.into(),
            SimError::File(f) => f.into(),
            other => AppError::Parse(other.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed;
    let result = match cli.command {
        Command::Decompose(args) => cmd_decompose(args),
        Command::Randomize(args) => cmd_randomize(args, seed),
        Command::Estimate(args) => cmd_estimate(args),
        Command::OptimizeP(args) => cmd_optimize(args),
        Command::Simulate(args) => cmd_simulate(args, seed),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// Write through a closure to either the --out path or stdout.
fn emit<F>(out: &Option<PathBuf>, write: F) -> Result<(), AppError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    match out {
        Some(path) => {
            let file = File::create(path)?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

/// Load one matching CSV plus its optional sidecar, resolving mode,
/// capacity, and population against the command-line flags.
struct LoadedPlan {
    edges: Vec<(u32, u32)>,
    sidecar: Option<Sidecar>,
}

fn load_plan(path: &Path, want: Mode) -> Result<LoadedPlan, AppError> {
    let (edges, header_mode) = io::read_matching_csv(path)?;
    if header_mode != want {
        return Err(AppError::Parse(format!(
            "{}: header implies {} but --mode is {}",
            path.display(),
            header_mode,
            want
        )));
    }
    let sidecar = io::read_sidecar(path)?;
    if let Some(s) = &sidecar {
        if let Some(m) = s.mode {
            if m != want {
                return Err(AppError::Parse(format!(
                    "{}: sidecar mode {} conflicts with --mode {}",
                    path.display(),
                    m,
                    want
                )));
            }
        }
    }
    Ok(LoadedPlan { edges, sidecar })
}

fn ids(values: &[u32]) -> Result<BTreeSet<AgentId>, AppError> {
    values
        .iter()
        .map(|&v| AgentId::new(v).map_err(AppError::from))
        .collect()
}

fn cmd_decompose(args: DecomposeArgs) -> Result<(), AppError> {
    let mode: Mode = args.mode.into();
    let treatment = load_plan(&args.treatment, mode)?;
    let control = load_plan(&args.control, mode)?;

    let sidecar_capacity = [&treatment.sidecar, &control.sidecar]
        .into_iter()
        .flatten()
        .find_map(|s| s.capacity);
    let population_spec = [&treatment.sidecar, &control.sidecar]
        .into_iter()
        .flatten()
        .find_map(|s| s.population.clone());

    let (mt, mc, capacity) = match mode {
        Mode::OneToOne => {
            let population = match population_spec {
                Some(PopulationSpec::OneSided(list)) => ids(&list)?,
                Some(PopulationSpec::TwoSided { .. }) => {
                    return Err(AppError::Parse(
                        "two-sided population given for a one-to-one matching".into(),
                    ))
                }
                None => {
                    let mut all = Vec::new();
                    for &(a, b) in treatment.edges.iter().chain(&control.edges) {
                        all.push(a);
                        all.push(b);
                    }
                    ids(&all)?
                }
            };
            let to_edges = |raw: &[(u32, u32)]| -> Result<Vec<_>, AppError> {
                raw.iter()
                    .map(|&(a, b)| {
                        Ok(apdesign::matching::MatchEdge::one_to_one(
                            AgentId::new(a)?,
                            AgentId::new(b)?,
                        )?)
                    })
                    .collect()
            };
            let mt = Matching::one_to_one(to_edges(&treatment.edges)?, population.clone())?;
            let mc = Matching::one_to_one(to_edges(&control.edges)?, population)?;
            (mt, mc, None)
        }
        Mode::ManyToOne => {
            let capacity = args.capacity.or(sidecar_capacity).ok_or_else(|| {
                AppError::Parse("many-to-one mode requires --capacity (or a sidecar)".into())
            })?;
            let (suppliers, demands) = match population_spec {
                Some(PopulationSpec::TwoSided { suppliers, demands }) => {
                    (ids(&suppliers)?, ids(&demands)?)
                }
                Some(PopulationSpec::OneSided(_)) => {
                    return Err(AppError::Parse(
                        "one-sided population given for a many-to-one matching".into(),
                    ))
                }
                None => {
                    let mut s = Vec::new();
                    let mut d = Vec::new();
                    for &(a, b) in treatment.edges.iter().chain(&control.edges) {
                        s.push(a);
                        d.push(b);
                    }
                    (ids(&s)?, ids(&d)?)
                }
            };
            let to_edges = |raw: &[(u32, u32)]| -> Result<Vec<_>, AppError> {
                raw.iter()
                    .map(|&(s, d)| {
                        Ok(apdesign::matching::MatchEdge::many_to_one(
                            AgentId::new(s)?,
                            AgentId::new(d)?,
                        )?)
                    })
                    .collect()
            };
            let mt = Matching::many_to_one(
                to_edges(&treatment.edges)?,
                suppliers.clone(),
                demands.clone(),
                capacity,
            )?;
            let mc =
                Matching::many_to_one(to_edges(&control.edges)?, suppliers, demands, capacity)?;
            (mt, mc, Some(capacity))
        }
    };

    let disagreement = build_disagreement(&mt, &mc)?;
    let components = match mode {
        Mode::OneToOne => decompose_one_to_one(&disagreement)?,
        Mode::ManyToOne => decompose_many_to_one(&disagreement)?,
    };
    if components.is_empty() {
        eprintln!("warning: the two plans are identical; nothing to randomize");
    }
    let file = ComponentsFile {
        capacity,
        components,
    };
    emit(&args.out, |w| io::write_components(w, &file))
}

fn cmd_randomize(args: RandomizeArgs, seed: Option<u64>) -> Result<(), AppError> {
    let components = io::read_components(&args.components)?;
    let seed = match (seed, args.allow_entropy) {
        (Some(s), _) => s,
        (None, true) => rand::random(),
        (None, false) => {
            return Err(AppError::Parse(
                "--seed is required (or pass --allow-entropy to draw one)".into(),
            ))
        }
    };
    let overrides = match &args.p_map {
        None => Default::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| AppError::Parse(format!("{}: {}", path.display(), e)))?
        }
    };
    let params = DesignParams::with_overrides(args.p, seed, overrides)?;
    let assignment = ap_randomize(&components.components, &params)?;
    emit(&args.out, |w| io::write_assignment(w, &assignment))
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), AppError> {
    if !(args.n > 0.0 && args.n.is_finite()) {
        return Err(AppError::Parse(format!(
            "--n must be a positive number, got {}",
            args.n
        )));
    }
    let components = io::read_components(&args.components)?;
    let assignment = io::read_assignment(&args.assignment)?;
    if assignment.design != apdesign::design::DesignKind::Ap {
        return Err(AppError::Alignment(
            "assignment was not drawn by the alternating-path design".into(),
        ));
    }
    let outcomes = io::read_outcomes(&args.outcomes)?;
    let report = estimate_report(
        &components.components,
        &assignment,
        &outcomes,
        &assignment.params.clone(),
        args.n,
        args.alpha,
    )?;
    emit(&args.out, |w| io::write_estimate_report(w, &report))?;
    println!(
        "tau_hat={:.6} ci=[{:.6},{:.6}]",
        report.tau_hat, report.ci_lo, report.ci_hi
    );
    Ok(())
}

fn cmd_optimize(args: OptimizeArgs) -> Result<(), AppError> {
    if args.table {
        let rows = design_table();
        return emit(&args.out, move |w| {
            writeln!(w, "kind,k,p_star,value_per_edge")?;
            for row in &rows {
                let kind = match row.kind {
                    ComponentKind::Path => "path",
                    ComponentKind::Cycle => "cycle",
                };
                writeln!(
                    w,
                    "{},{},{},{}",
                    kind, row.k, row.p_star, row.value_per_edge
                )?;
            }
            Ok(())
        });
    }
    let (kind, length) = match (args.kind, args.length) {
        (Some(k), Some(l)) => (k, l),
        _ => {
            return Err(AppError::Parse(
                "--kind and --length are required without --table".into(),
            ))
        }
    };
    let design = optimize_p(kind.into(), length, 1.0)?;
    emit(&args.out, move |w| {
        writeln!(
            w,
            "p_star={} value_per_edge={}",
            design.p_star, design.value_per_edge
        )
    })
}

fn cmd_simulate(args: SimulateArgs, seed: Option<u64>) -> Result<(), AppError> {
    let mut spec = io::read_scenario(&args.config)?;
    if let Some(seed) = seed {
        spec.params.seed = seed;
    }
    let run_spec = spec.clone();
    let run = match args.threads {
        None => run_simulation(&run_spec)?,
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| AppError::Parse(e.to_string()))?
            .install(|| run_simulation(&run_spec))?,
    };
    emit(&args.out, |w| io::write_sim_report(w, &run.report))?;
    if let Some(qq_path) = &args.qq_out {
        let check = normality_check(&run.tau_hats)?;
        emit(&Some(qq_path.clone()), |w| io::write_qq_csv(w, &check.qq))?;
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), AppError> {
    let components = io::read_components(&args.components)?;
    let disagreement = io::read_disagreement_csv(&args.disagreement)?;
    let report = validate_decomposition(&disagreement, &components.components, args.capacity);
    emit(&args.out, |w| io::write_validation_report(w, &report))?;
    if !report.pass {
        eprintln!("warning: decomposition violates at least one feasibility condition");
    }
    Ok(())
}
