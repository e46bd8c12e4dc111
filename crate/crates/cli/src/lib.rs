//! Command line surface over the design engine: ingestion, sample size
//! planning, estimator comparison, conservative maximization, stratified
//! design, synthetic population emission, coverage simulation, plot-data
//! curves, and the oracle verification suite.
//!
//! Everything randomized takes an explicit --seed and is deterministic for
//! it; coverage and verify additionally accept --workers without changing
//! their output.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use audit_design::aon::{self, EstimatorKind, SampleSizePlan, VariancePrediction};
use audit_design::montecarlo::{self, ErrorModel, SKEWNESS_FLAG_THRESHOLD};
use audit_design::partial;
use audit_design::population::{
    compute_moments, distinct_value_groups, read_claims_csv, write_claims_csv, ClaimPopulation,
    PopulationMoments,
};
use audit_design::ratio::{self, ExactMode, PreferenceMethod, PreferenceReport};
use audit_design::rng::derive_seed;
use audit_design::stratified::{self, StratificationPlan};
use audit_design::surface::{Edge, SurfaceMax};
use audit_design::synthpop::{self, SynthKind, SynthSpec};
use audit_design::Error;

/// Outcome of one invocation: what main prints and how it exits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    /// 0 success, 1 validation error, 2 internal error.
    pub exit_code: i32,
    /// Human-readable report (or error text when exit_code != 0).
    pub report: String,
    /// CSV files the command wrote.
    pub data_files: Vec<PathBuf>,
}

/// Parses and executes an argument list. Never panics on bad input; all
/// outcomes are encoded in the result.
pub fn run<I, T>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests render through the same path but
            // exit clean.
            let exit_code = if err.use_stderr() { 1 } else { 0 };
            return CommandResult {
                exit_code,
                report: err.render().to_string(),
                data_files: Vec::new(),
            };
        }
    };
    match execute(cli.command) {
        Ok(out) => CommandResult {
            exit_code: out.exit_code,
            report: out.report,
            data_files: out.data_files,
        },
        Err(err) => CommandResult {
            exit_code: err.code(),
            report: format!("error: {err}\n"),
            data_files: Vec::new(),
        },
    }
}

#[derive(Parser)]
#[command(
    name = "audit-design",
    version,
    about = "Plans fixed-cost audits of claim populations: variance prediction, \
             sample sizes, estimator selection, stratification, and simulation checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Population moments and the critical error rate.
    Moments(MomentsArgs),
    /// Sample size for a target margin of error.
    Plan(PlanArgs),
    /// Probability that ratio estimation beats simple expansion.
    Compare(CompareArgs),
    /// Worst-case predicted variance over the error-rate square.
    Conservative(ConservativeArgs),
    /// Stratified design with explicit or optimized breakpoints.
    Stratify(StratifyArgs),
    /// Emit a seeded synthetic claim population as CSV.
    Simulate(SimulateArgs),
    /// Confidence interval coverage by repeated sampling.
    Coverage(CoverageArgs),
    /// Plot data: sample size, preference, or variance cross-sections.
    Curves(CurvesArgs),
    /// Check the closed forms against the enumeration oracle.
    Verify(VerifyArgs),
}

/// Where the claim population comes from: a CSV file or a seeded generator.
#[derive(Args)]
struct Source {
    /// Claims CSV (claim_id,line_index,claimed_amount,probable_error_amount).
    #[arg(long, value_name = "FILE", conflicts_with_all = ["synth", "synth_seed", "size"])]
    claims: Option<PathBuf>,
    /// Synthetic population kind: edwards, neter, or clinic.
    #[arg(long, value_name = "KIND")]
    synth: Option<SynthKind>,
    /// Generation seed for --synth.
    #[arg(long, value_name = "SEED", default_value_t = 1, requires = "synth")]
    synth_seed: u64,
    /// Population size override for --synth.
    #[arg(long, value_name = "N", requires = "synth")]
    size: Option<usize>,
}

impl Source {
    fn load(&self) -> Result<(ClaimPopulation, String), CliError> {
        if let Some(path) = &self.claims {
            let file = File::open(path).map_err(Error::Io)?;
            let pop = read_claims_csv(file)?;
            let label = format!("claims file {} ({} claims)", path.display(), pop.len());
            return Ok((pop, label));
        }
        let Some(kind) = self.synth else {
            return Err(CliError::Usage(
                "a population source is required: --claims FILE or --synth KIND".into(),
            ));
        };
        let mut spec = SynthSpec::new(kind, self.synth_seed);
        spec.size_override = self.size;
        let pop = synthpop::generate(&spec)?;
        let label = format!(
            "synthetic {} (seed {}, {} claims)",
            kind.name(),
            self.synth_seed,
            pop.len()
        );
        Ok((pop, label))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstArg {
    SimpleExpansion,
    Ratio,
}

impl From<EstArg> for EstimatorKind {
    fn from(e: EstArg) -> Self {
        match e {
            EstArg::SimpleExpansion => EstimatorKind::SimpleExpansion,
            EstArg::Ratio => EstimatorKind::Ratio,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    /// Whole claims err with probability pi.
    Aon,
    /// Claims err fully with probability pi, otherwise lines err with pi_l.
    LineItem,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Normal,
    Exhaustive,
    MonteCarlo,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CurveKind {
    Samplesize,
    Preference,
    CrossSection,
}

#[derive(Args)]
struct MomentsArgs {
    #[command(flatten)]
    source: Source,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    estimator: EstArg,
    /// Target margin of error, dollars.
    #[arg(long)]
    margin: f64,
    /// Two-sided confidence level, decimal in (0.5, 1).
    #[arg(long)]
    confidence: f64,
    /// Claim error rate pi.
    #[arg(long, conflicts_with = "conservative")]
    error_rate: Option<f64>,
    /// Line error rate pi_L (line-item model only).
    #[arg(long, conflicts_with = "conservative")]
    line_rate: Option<f64>,
    /// Error model; defaults to line-item when --line-rate or --conservative
    /// is given, all-or-nothing otherwise.
    #[arg(long)]
    model: Option<ModelArg>,
    /// Plan against the worst case over every error rate combination.
    #[arg(long)]
    conservative: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: Source,
    /// Claim error rate pi.
    #[arg(long)]
    error_rate: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Normal)]
    method: MethodArg,
    /// Replicates for --method monte-carlo.
    #[arg(long, default_value_t = 100_000)]
    replicates: usize,
    /// Seed for --method monte-carlo.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ConservativeArgs {
    #[command(flatten)]
    source: Source,
    /// Restrict to one estimator; both are reported when omitted.
    #[arg(long)]
    estimator: Option<EstArg>,
}

#[derive(Args)]
struct StratifyArgs {
    #[command(flatten)]
    source: Source,
    /// Number of strata to optimize breakpoints for.
    #[arg(long, conflicts_with = "breakpoints")]
    strata: Option<usize>,
    /// Explicit breakpoints, decimal dollars, comma separated.
    #[arg(long, value_delimiter = ',', value_name = "DOLLARS")]
    breakpoints: Option<Vec<f64>>,
    #[arg(long)]
    estimator: EstArg,
    /// Total sample budget across strata.
    #[arg(long)]
    sample_size: usize,
    /// Claim error rate pi.
    #[arg(long)]
    error_rate: Option<f64>,
    /// Line error rate pi_L (line-item model only).
    #[arg(long)]
    line_rate: Option<f64>,
    #[arg(long)]
    model: Option<ModelArg>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Synthetic population kind: edwards, neter, or clinic.
    #[arg(long)]
    synth: SynthKind,
    #[arg(long)]
    seed: u64,
    /// Population size override.
    #[arg(long)]
    size: Option<usize>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    source: Source,
    /// Claim error rate pi.
    #[arg(long)]
    error_rate: f64,
    /// Line error rate pi_L (line-item model only).
    #[arg(long)]
    line_rate: Option<f64>,
    #[arg(long)]
    model: Option<ModelArg>,
    #[arg(long)]
    estimator: EstArg,
    /// Explicit sample size; alternative to --margin.
    #[arg(long, conflicts_with = "margin")]
    sample_size: Option<usize>,
    /// Target margin of error, dollars; the planner picks the sample size.
    #[arg(long)]
    margin: Option<f64>,
    /// Nominal confidence level for the intervals.
    #[arg(long, default_value_t = 0.90)]
    confidence: f64,
    #[arg(long)]
    replicates: usize,
    /// Seed; stream 0 realizes the errors, stream 1 drives the replicates.
    #[arg(long)]
    seed: u64,
    /// Worker threads; the result is identical for any count.
    #[arg(long)]
    workers: Option<usize>,
    /// Optional one-row CSV summary.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurvesArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    kind: CurveKind,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Target margin of error, dollars (samplesize curve only).
    #[arg(long)]
    margin: Option<f64>,
    /// Confidence level (samplesize curve only).
    #[arg(long)]
    confidence: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// How many random mini populations to check.
    #[arg(long, default_value_t = 100)]
    mini_populations: usize,
    #[arg(long)]
    seed: u64,
    /// Worker threads; the result is identical for any count.
    #[arg(long)]
    workers: Option<usize>,
}

enum CliError {
    /// Bad or missing arguments beyond what clap can see.
    Usage(String),
    Core(Error),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(Error::Internal(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

struct Output {
    report: String,
    data_files: Vec<PathBuf>,
    exit_code: i32,
}

impl Output {
    fn new(report: String) -> Self {
        Output {
            report,
            data_files: Vec::new(),
            exit_code: 0,
        }
    }
}

fn execute(command: Command) -> Result<Output, CliError> {
    match command {
        Command::Moments(args) => cmd_moments(args),
        Command::Plan(args) => cmd_plan(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Conservative(args) => cmd_conservative(args),
        Command::Stratify(args) => cmd_stratify(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Coverage(args) => cmd_coverage(args),
        Command::Curves(args) => cmd_curves(args),
        Command::Verify(args) => cmd_verify(args),
    }
}

/// Resolves the error model from the rate flags. The model kind defaults to
/// all-or-nothing unless a line rate was given.
fn point_model(
    model: Option<ModelArg>,
    error_rate: Option<f64>,
    line_rate: Option<f64>,
) -> Result<ErrorModel, CliError> {
    let kind = model.unwrap_or(if line_rate.is_some() {
        ModelArg::LineItem
    } else {
        ModelArg::Aon
    });
    let Some(pi) = error_rate else {
        return Err(CliError::Usage(
            "missing --error-rate: the expected claim error rate is required here".into(),
        ));
    };
    let model = match kind {
        ModelArg::Aon => {
            if line_rate.is_some() {
                return Err(CliError::Usage(
                    "--line-rate only applies to --model line-item".into(),
                ));
            }
            ErrorModel::AllOrNothing { pi }
        }
        ModelArg::LineItem => ErrorModel::LineItem {
            pi,
            pi_l: line_rate.unwrap_or(0.0),
        },
    };
    model.validate()?;
    Ok(model)
}

fn model_label(model: ErrorModel) -> String {
    match model {
        ErrorModel::AllOrNothing { pi } => format!("all-or-nothing (pi={pi:.6})"),
        ErrorModel::LineItem { pi, pi_l } => {
            format!("line-item (pi={pi:.6}, pi_l={pi_l:.6})")
        }
    }
}

fn dollars(v: f64) -> String {
    format!("${v:.2}")
}

fn dollars_to_cents(v: f64) -> i64 {
    (v * 100.0).round() as i64
}

/// Runs `f` on a dedicated pool when --workers was given; otherwise the
/// global default pool (available parallelism) applies.
fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(Error::Io)?))
}

fn cmd_moments(args: MomentsArgs) -> Result<Output, CliError> {
    let (pop, label) = args.source.load()?;
    let m = compute_moments(&pop);
    let crit = aon::pi_crit(&m);
    let mut r = String::new();
    writeln!(r, "population: {label}").unwrap();
    writeln!(r, "claims: {}", m.n_pop).unwrap();
    writeln!(r, "line items: {}", pop.line_count()).unwrap();
    writeln!(r, "total claimed: {}", dollars(m.tau_x)).unwrap();
    writeln!(r, "mean claim: ${:.6}", m.mu_x).unwrap();
    writeln!(r, "std dev: ${:.6}", m.sigma2_x.sqrt()).unwrap();
    writeln!(r, "second raw moment: {:.6} dollars^2", m.mu_x2).unwrap();
    writeln!(r, "skewness: {:.6}", m.g1_skew).unwrap();
    match crit.value {
        Some(v) if crit.interior => {
            writeln!(r, "critical error rate: {v:.6} (interior)").unwrap();
        }
        Some(v) => {
            writeln!(
                r,
                "critical error rate: {v:.6} (outside [0,1]; an endpoint governs)"
            )
            .unwrap();
        }
        None => {
            writeln!(
                r,
                "critical error rate: none (no interior maximum; an endpoint governs)"
            )
            .unwrap();
        }
    }
    writeln!(r, "large-N approximation: {:.6}", crit.large_n_approx).unwrap();
    Ok(Output::new(r))
}

/// Variance prediction feeding the sample size formula, for one estimator
/// and model, either at a rate point or maximized over rates.
fn planning_variance(
    pop: &ClaimPopulation,
    m: &PopulationMoments,
    estimator: EstimatorKind,
    model: Option<ModelArg>,
    error_rate: Option<f64>,
    line_rate: Option<f64>,
    conservative: bool,
) -> Result<VariancePrediction, CliError> {
    if conservative {
        // Worst case defaults to the full line-item surface; an explicit
        // --model aon restricts the maximization to the claim-level rate.
        let kind = model.unwrap_or(ModelArg::LineItem);
        return Ok(match (estimator, kind) {
            (EstimatorKind::SimpleExpansion, ModelArg::Aon) => aon::conservative_variance_aon(m),
            (EstimatorKind::SimpleExpansion, ModelArg::LineItem) => {
                let coef = partial::partial_y_coefficients(pop);
                partial::conservative_variance_partial(&coef, m)
            }
            (EstimatorKind::Ratio, ModelArg::Aon) => {
                // pi (1-pi) peaks at one half; the pi-free factor is exact.
                let v = ratio::roberts_ratio_variance(m, 0.5)?;
                VariancePrediction {
                    conservative: true,
                    ..v
                }
            }
            (EstimatorKind::Ratio, ModelArg::LineItem) => {
                let coef = ratio::partial_r_coefficients(pop)?;
                ratio::conservative_variance_ratio(&coef)
            }
        });
    }
    if error_rate.is_none() {
        return Err(CliError::Usage(
            "missing --error-rate: provide the expected claim error rate, or pass \
             --conservative to plan against the worst case"
                .into(),
        ));
    }
    let model = point_model(model, error_rate, line_rate)?;
    Ok(match (estimator, model) {
        (EstimatorKind::SimpleExpansion, ErrorModel::AllOrNothing { pi }) => {
            aon::roberts_variance(m, pi)?
        }
        (EstimatorKind::SimpleExpansion, ErrorModel::LineItem { pi, pi_l }) => {
            let coef = partial::partial_y_coefficients(pop);
            partial::expected_var_y(&coef, pi, pi_l)?
        }
        (EstimatorKind::Ratio, ErrorModel::AllOrNothing { pi }) => {
            ratio::roberts_ratio_variance(m, pi)?
        }
        (EstimatorKind::Ratio, ErrorModel::LineItem { pi, pi_l }) => {
            let coef = ratio::partial_r_coefficients(pop)?;
            ratio::expected_var_r(&coef, pi, pi_l)?
        }
    })
}

fn describe_prediction(pred: &VariancePrediction) -> String {
    let at = match pred.at_pi_l {
        Some(pi_l) => format!("pi={:.6}, pi_l={:.6}", pred.at_pi, pi_l),
        None => format!("pi={:.6}", pred.at_pi),
    };
    if pred.conservative {
        format!("{:.6} dollars^2 (worst case at {at})", pred.value)
    } else {
        format!("{:.6} dollars^2 at {at}", pred.value)
    }
}

fn describe_plan(r: &mut String, plan: &SampleSizePlan) {
    writeln!(r, "estimator: {}", plan.estimator).unwrap();
    writeln!(
        r,
        "planning variance: {}",
        describe_prediction(&plan.variance_used)
    )
    .unwrap();
    writeln!(r, "confidence: {:.6}", plan.confidence).unwrap();
    writeln!(r, "target margin: {}", dollars(plan.margin)).unwrap();
    writeln!(r, "sample size: {}", plan.n).unwrap();
    writeln!(r, "achieved margin: {}", dollars(plan.achieved_margin)).unwrap();
    if plan.census {
        writeln!(r, "note: the sample is a census of the population").unwrap();
    }
}

fn cmd_plan(args: PlanArgs) -> Result<Output, CliError> {
    let (pop, label) = args.source.load()?;
    let m = compute_moments(&pop);
    let estimator: EstimatorKind = args.estimator.into();
    let pred = planning_variance(
        &pop,
        &m,
        estimator,
        args.model,
        args.error_rate,
        args.line_rate,
        args.conservative,
    )?;
    let plan = aon::sample_size(&m, pred, args.margin, args.confidence, estimator)?;
    let mut r = String::new();
    writeln!(r, "population: {label}").unwrap();
    describe_plan(&mut r, &plan);
    Ok(Output::new(r))
}

fn cmd_compare(args: CompareArgs) -> Result<Output, CliError> {
    let (pop, label) = args.source.load()?;
    let m = compute_moments(&pop);
    let report: PreferenceReport = match args.method {
        MethodArg::Normal => {
            let groups = distinct_value_groups(&pop)?;
            ratio::preference_probability(&groups, &m, args.error_rate)?
        }
        MethodArg::Exhaustive => {
            ratio::preference_probability_exact(&pop, args.error_rate, ExactMode::Exhaustive)?
        }
        MethodArg::MonteCarlo => {
            let Some(seed) = args.seed else {
                return Err(CliError::Usage(
                    "missing --seed: --method monte-carlo is randomized and needs one".into(),
                ));
            };
            ratio::preference_probability_exact(
                &pop,
                args.error_rate,
                ExactMode::MonteCarlo {
                    replicates: args.replicates,
                    seed,
                },
            )?
        }
    };
    let method = match report.method {
        PreferenceMethod::NormalApprox => "normal approximation",
        PreferenceMethod::Exhaustive => "exhaustive enumeration",
        PreferenceMethod::MonteCarlo => "monte carlo",
    };
    let mut r = String::new();
    writeln!(r, "population: {label}").unwrap();
    writeln!(r, "claim error rate: {:.6}", args.error_rate).unwrap();
    writeln!(r, "method: {method}").unwrap();
    writeln!(
        r,
        "P(ratio beats simple expansion): {:.6}",
        report.prob_ratio_better
    )
    .unwrap();
    writeln!(r, "mean g: {:.6}", report.mean_g).unwrap();
    writeln!(r, "var g: {:.6}", report.var_g).unwrap();
    if let Some(se) = report.mc_std_err {
        writeln!(r, "monte carlo standard error: {se:.6}").unwrap();
    }
    writeln!(
        r,
        "distinct claim values: {} (smallest group {})",
        report.distinct_values, report.min_group_count
    )
    .unwrap();
    if report.degenerate {
        writeln!(r, "note: endpoint rate; the probability is its limit value").unwrap();
    }
    if matches!(report.method, PreferenceMethod::NormalApprox) && report.min_group_count < 100 {
        writeln!(
            r,
            "note: smallest distinct-value group has {} claims; the normal \
             approximation assumes large groups",
            report.min_group_count
        )
        .unwrap();
    }
    Ok(Output::new(r))
}

fn edge_name(edge: Edge) -> &'static str {
    match edge {
        Edge::SZero => "pi=0",
        Edge::SOne => "pi=1",
        Edge::TZero => "pi_l=0",
        Edge::TOne => "pi_l=1",
    }
}

fn describe_surface(r: &mut String, name: &str, value: f64, detail: &SurfaceMax) {
    let (pi, pi_l) = detail.argmax.first().copied().unwrap_or((0.0, 0.0));
    writeln!(
        r,
        "{name} worst case: {value:.6} dollars^2 at pi={pi:.6}, pi_l={pi_l:.6}"
    )
    .unwrap();
    if detail.argmax.len() > 1 {
        let ties: Vec<String> = detail.argmax[1..]
            .iter()
            .map(|(s, t)| format!("(pi={s:.6}, pi_l={t:.6})"))
            .collect();
        writeln!(r, "  ties: {}", ties.join(", ")).unwrap();
    }
    if detail.interior_candidates.is_empty() {
        writeln!(r, "  interior stationary points: none").unwrap();
    } else {
        let pts: Vec<String> = detail
            .interior_candidates
            .iter()
            .map(|(s, t)| format!("({s:.6}, {t:.6})"))
            .collect();
        writeln!(r, "  interior stationary points: {}", pts.join(", ")).unwrap();
    }
    if !detail.rejected_stationary.is_empty() {
        let pts: Vec<String> = detail
            .rejected_stationary
            .iter()
            .map(|(s, t)| format!("({s:.6}, {t:.6})"))
            .collect();
        writeln!(
            r,
            "  stationary points outside the square: {}",
            pts.join(", ")
        )
        .unwrap();
    }
    writeln!(r, "  edge maxima:").unwrap();
    for b in &detail.boundary_maxima {
        writeln!(
            r,
            "    {}: {:.6} at (pi={:.6}, pi_l={:.6})",
            edge_name(b.edge),
            b.value,
            b.at.0,
            b.at.1
        )
        .unwrap();
    }
}

fn cmd_conservative(args: ConservativeArgs) -> Result<Output, CliError> {
    let (pop, label) = args.source.load()?;
    let mut r = String::new();
    writeln!(r, "population: {label}").unwrap();
    let want = |e: EstArg| args.estimator.is_none() || args.estimator == Some(e);
    if want(EstArg::SimpleExpansion) {
        let coef = partial::partial_y_coefficients(&pop);
        let s = partial::conservative_surface_y(&coef);
        describe_surface(&mut r, "simple-expansion", s.prediction.value, &s.detail);
    }
    if want(EstArg::Ratio) {
        let coef = ratio::partial_r_coefficients(&pop)?;
        let s = ratio::conservative_surface_r(&coef);
        describe_surface(&mut r, "ratio", s.prediction.value, &s.detail);
    }
    Ok(Output::new(r))
}

fn describe_strata(r: &mut String, plan: &StratificationPlan) {
    let bps: Vec<String> = plan
        .breakpoints_cents
        .iter()
        .map(|&c| dollars(c as f64 / 100.0))
        .collect();
    writeln!(
        r,
        "breakpoints: {}",
        if bps.is_empty() {
            "none".to_string()
        } else {
            bps.join(", ")
        }
    )
    .unwrap();
    for s in &plan.strata {
        let high = match s.high_cents {
            Some(c) => dollars(c as f64 / 100.0),
            None => "...".to_string(),
        };
        writeln!(
            r,
            "stratum {}: [{}, {}) claims {} sample {} sigma2 {:.6}",
            s.index + 1,
            dollars(s.low_cents as f64 / 100.0),
            high,
            s.n_pop,
            s.n_sample,
            s.predicted_variance
        )
        .unwrap();
    }
    writeln!(r, "total variance: {:.6} dollars^2", plan.total_variance).unwrap();
    for w in &plan.warnings {
        writeln!(r, "warning: {w}").unwrap();
    }
}

fn cmd_stratify(args: StratifyArgs) -> Result<Output, CliError> {
    let (pop, label) = args.source.load()?;
    let model = point_model(args.model, args.error_rate, args.line_rate)?;
    let estimator: EstimatorKind = args.estimator.into();
    let plan = match (&args.breakpoints, args.strata) {
        (Some(bps), _) => {
            let cents: Vec<i64> = bps.iter().map(|&d| dollars_to_cents(d)).collect();
            stratified::build_plan(&pop, &cents, estimator, model, args.sample_size)?
        }
        (None, Some(l)) => {
            stratified::optimize_breakpoints(&pop, l, estimator, model, args.sample_size)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "missing --strata: give a stratum count to optimize, or pass explicit \
                 --breakpoints"
                    .into(),
            ));
        }
    };
    let mut r = String::new();
    writeln!(r, "population: {label}").unwrap();
    writeln!(r, "estimator: {estimator}").unwrap();
    writeln!(r, "model: {}", model_label(model)).unwrap();
    writeln!(
        r,
        "strata: {}, sample budget: {}",
        plan.stratum_count(),
        plan.n_total
    )
    .unwrap();
    describe_strata(&mut r, &plan);
    Ok(Output::new(r))
}

fn cmd_simulate(args: SimulateArgs) -> Result<Output, CliError> {
    let mut spec = SynthSpec::new(args.synth, args.seed);
    spec.size_override = args.size;
    let pop = synthpop::generate(&spec)?;
    let m = compute_moments(&pop);
    let mut file = create_file(&args.out)?;
    write_claims_csv(&pop, &mut file)?;
    file.flush().map_err(Error::Io)?;
    let mut r = String::new();
    writeln!(
        r,
        "synthetic population: {} (seed {})",
        args.synth.name(),
        args.seed
    )
    .unwrap();
    writeln!(r, "claims: {}", pop.len()).unwrap();
    writeln!(r, "line items: {}", pop.line_count()).unwrap();
    writeln!(r, "total claimed: {}", dollars(m.tau_x)).unwrap();
    writeln!(r, "wrote {}", args.out.display()).unwrap();
    Ok(Output {
        report: r,
        data_files: vec![args.out],
        exit_code: 0,
    })
}

fn cmd_coverage(args: CoverageArgs) -> Result<Output, CliError> {
    let (pop, label) = args.source.load()?;
    let m = compute_moments(&pop);
    let model = point_model(args.model, Some(args.error_rate), args.line_rate)?;
    let estimator: EstimatorKind = args.estimator.into();
    let (n, n_origin) = match (args.sample_size, args.margin) {
        (Some(n), _) => (n, String::new()),
        (None, Some(margin)) => {
            let pred = planning_variance(
                &pop,
                &m,
                estimator,
                args.model,
                Some(args.error_rate),
                args.line_rate,
                false,
            )?;
            let plan = aon::sample_size(&m, pred, margin, args.confidence, estimator)?;
            (plan.n, format!(" (planned for margin {})", dollars(margin)))
        }
        (None, None) => {
            return Err(CliError::Usage(
                "missing --sample-size: give one explicitly, or pass --margin to let the \
                 planner choose"
                    .into(),
            ));
        }
    };
    let realized = montecarlo::realize(&pop, model, derive_seed(args.seed, 0))?;
    let sim_seed = derive_seed(args.seed, 1);
    let report = with_workers(args.workers, || {
        montecarlo::simulate_estimation(
            &realized,
            n,
            estimator,
            args.confidence,
            args.replicates,
            sim_seed,
        )
    })??;
    let mut r = String::new();
    writeln!(r, "population: {label}").unwrap();
    writeln!(r, "estimator: {estimator}").unwrap();
    writeln!(r, "model: {}", model_label(model)).unwrap();
    writeln!(r, "true error total: {}", dollars(report.true_total)).unwrap();
    writeln!(r, "sample size: {}{}", report.n, n_origin).unwrap();
    writeln!(r, "replicates: {}", report.replicates).unwrap();
    writeln!(r, "nominal coverage: {:.6}", report.nominal).unwrap();
    writeln!(r, "attained coverage: {:.6}", report.attained).unwrap();
    writeln!(r, "mean margin: {}", dollars(report.mean_margin)).unwrap();
    writeln!(r, "rmse: {}", dollars(report.rmse)).unwrap();
    writeln!(r, "error skewness: {:.6}", report.skewness_y).unwrap();
    if report.skewness_y > SKEWNESS_FLAG_THRESHOLD {
        writeln!(
            r,
            "note: error skewness {:.2} exceeds {:.1}; normal-theory intervals are \
             expected to undershoot nominal coverage",
            report.skewness_y, SKEWNESS_FLAG_THRESHOLD
        )
        .unwrap();
    }
    let mut data_files = Vec::new();
    if let Some(path) = args.out {
        let mut w = csv::Writer::from_writer(create_file(&path)?);
        w.write_record([
            "estimator",
            "n",
            "pi",
            "pi_l",
            "nominal",
            "attained",
            "rmse",
        ])
        .map_err(csv_err)?;
        let pi_l = match model.pi_l() {
            Some(v) => format!("{v:.6}"),
            None => String::new(),
        };
        w.write_record([
            estimator.to_string(),
            report.n.to_string(),
            format!("{:.6}", model.pi()),
            pi_l,
            format!("{:.6}", report.nominal),
            format!("{:.6}", report.attained),
            format!("{:.6}", report.rmse),
        ])
        .map_err(csv_err)?;
        w.flush().map_err(Error::Io)?;
        writeln!(r, "wrote {}", path.display()).unwrap();
        data_files.push(path);
    }
    Ok(Output {
        report: r,
        data_files,
        exit_code: 0,
    })
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Core(Error::Internal(format!("csv write: {e}")))
}

fn cmd_curves(args: CurvesArgs) -> Result<Output, CliError> {
    let (pop, label) = args.source.load()?;
    let m = compute_moments(&pop);
    let mut w = csv::Writer::from_writer(create_file(&args.out)?);
    let rows = match args.kind {
        CurveKind::Samplesize => {
            let (Some(margin), Some(confidence)) = (args.margin, args.confidence) else {
                return Err(CliError::Usage(
                    "the samplesize curve needs --margin and --confidence".into(),
                ));
            };
            w.write_record(["pi", "n_simple_expansion", "n_ratio"])
                .map_err(csv_err)?;
            for tick in 1..=99u32 {
                let pi = f64::from(tick) / 100.0;
                let vy = aon::roberts_variance(&m, pi)?;
                let ny =
                    aon::sample_size(&m, vy, margin, confidence, EstimatorKind::SimpleExpansion)?;
                let vr = ratio::roberts_ratio_variance(&m, pi)?;
                let nr = ratio::ratio_sample_size(&m, vr, margin, confidence)?;
                w.write_record([format!("{pi:.2}"), ny.n.to_string(), nr.n.to_string()])
                    .map_err(csv_err)?;
            }
            99
        }
        CurveKind::Preference => {
            let groups = distinct_value_groups(&pop)?;
            w.write_record(["pi", "prob_ratio_better"])
                .map_err(csv_err)?;
            for tick in 1..=99u32 {
                let pi = f64::from(tick) / 100.0;
                let rep = ratio::preference_probability(&groups, &m, pi)?;
                w.write_record([format!("{pi:.2}"), format!("{:.9}", rep.prob_ratio_better)])
                    .map_err(csv_err)?;
            }
            99
        }
        CurveKind::CrossSection => {
            let cy = partial::partial_y_coefficients(&pop);
            let cr = ratio::partial_r_coefficients(&pop)?;
            w.write_record(["pi", "pi_l", "expected_var_y", "expected_var_r"])
                .map_err(csv_err)?;
            for i in 0..=20u32 {
                for j in 0..=20u32 {
                    let pi = f64::from(i) / 20.0;
                    let pi_l = f64::from(j) / 20.0;
                    let vy = partial::expected_var_y(&cy, pi, pi_l)?;
                    let vr = ratio::expected_var_r(&cr, pi, pi_l)?;
                    w.write_record([
                        format!("{pi:.2}"),
                        format!("{pi_l:.2}"),
                        format!("{:.6}", vy.value),
                        format!("{:.6}", vr.value),
                    ])
                    .map_err(csv_err)?;
                }
            }
            441
        }
    };
    w.flush().map_err(Error::Io)?;
    let kind = match args.kind {
        CurveKind::Samplesize => "samplesize",
        CurveKind::Preference => "preference",
        CurveKind::CrossSection => "cross-section",
    };
    let mut r = String::new();
    writeln!(r, "population: {label}").unwrap();
    writeln!(r, "curve: {kind} ({rows} rows)").unwrap();
    writeln!(r, "wrote {}", args.out.display()).unwrap();
    Ok(Output {
        report: r,
        data_files: vec![args.out],
        exit_code: 0,
    })
}

fn cmd_verify(args: VerifyArgs) -> Result<Output, CliError> {
    let seed = args.seed;
    let count = args.mini_populations;
    let report = with_workers(args.workers, || montecarlo::verify_suite(count, seed))??;
    let mut r = String::new();
    writeln!(r, "mini populations: {}", report.populations).unwrap();
    writeln!(r, "oracle checks: {}", report.checks).unwrap();
    writeln!(
        r,
        "max relative error, E(sigma_y^2): {:.3e}",
        report.max_rel_err_y
    )
    .unwrap();
    writeln!(
        r,
        "max relative error, E(sigma_R^2): {:.3e}",
        report.max_rel_err_r
    )
    .unwrap();
    writeln!(
        r,
        "max absolute error, P(g>0): {:.3e}",
        report.max_abs_err_p
    )
    .unwrap();
    for f in report.failures.iter().take(20) {
        writeln!(
            r,
            "failure: population {} at pi={:.2}, pi_l={:.2}: {} closed form {:.12e} \
             vs oracle {:.12e}",
            f.population, f.pi, f.pi_l, f.quantity, f.closed_form, f.oracle
        )
        .unwrap();
    }
    if report.failures.len() > 20 {
        writeln!(r, "({} more failures omitted)", report.failures.len() - 20).unwrap();
    }
    let passed = report.passed();
    writeln!(r, "verdict: {}", if passed { "pass" } else { "fail" }).unwrap();
    Ok(Output {
        report: r,
        data_files: Vec::new(),
        exit_code: if passed { 0 } else { 1 },
    })
}
