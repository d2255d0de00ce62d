//! Command-line surface of the `gsd` binary.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use gsd_core::baselines::{marginal_front, MarginalFrontResult};
use gsd_core::gsd::{d_matrix, dominance_graph, egsd_front_from, DMatrix, DominanceGraph, FrontResult, GsdOptions};
use gsd_core::io::{self, AnalysisConfig, RunInfo};
use gsd_core::permtest::{challenger_tests, dynamic_from_pairwise, static_from_pairwise, PairwiseTestResult};
use gsd_core::robust::{
    aggregate_curve, breakdown_from_curve, challenger_curves, curves_to_csv, default_k_max, BreakdownReport,
    ContaminationCurve,
};
use gsd_core::synth::{consistency_experiment, PopulationModel, SizeSummary};
use gsd_core::table::validate_table;
use gsd_core::{DynamicTestResult, Error as CoreError, PerformanceTable, PointScope, ResamplingPlan, StaticTestResult};

use crate::fetch::{fetch_csv, is_remote, FetchError, FetchOptions};

#[derive(Debug, Parser)]
#[command(
    name = "gsd",
    version,
    about = "Multi-metric classifier benchmarking by generalized stochastic dominance"
)]
pub struct Cli {
    /// Directory receiving the report files.
    #[arg(long, global = true, default_value = "gsd-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Input {
    /// Results CSV (path or http(s) URL) with columns dataset, classifier, metrics...
    pub csv: String,
    /// TOML analysis config declaring the metrics.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Retries for remote CSVs after a timeout or connection failure.
    #[arg(long, default_value_t = 0)]
    pub fetch_retries: u32,
    /// Size cap for remote CSVs, in MiB.
    #[arg(long, default_value_t = 64)]
    pub fetch_cap_mib: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    Pair,
    Suite,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fronts (empirical GSD, Pareto, first-order), relation graphs and the d matrix.
    Analyze {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        /// Points entering each d computation.
        #[arg(long, value_enum, default_value = "pair")]
        scope: ScopeArg,
    },
    /// Permutation tests of whether the target lies in the front.
    Test {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        target: String,
        /// Only the static test.
        #[arg(long = "static", conflicts_with = "dynamic")]
        static_only: bool,
        /// Only the dynamic test.
        #[arg(long)]
        dynamic: bool,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        resamples: Option<usize>,
        #[arg(long)]
        exhaustive: bool,
    },
    /// Contamination curves and breakdown points for the target.
    Robust {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        target: String,
        /// Largest number of contaminated datasets; defaults to ceil(s/4).
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        resamples: Option<usize>,
    },
    /// Marginal front from per-metric Friedman and Nemenyi tests.
    Baseline {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Consistency experiment on a synthetic population.
    Simulate {
        /// `default` or a JSON population model file.
        #[arg(long, default_value = "default")]
        model: String,
        #[arg(long, value_delimiter = ',', default_values_t = [50, 200, 800])]
        s_grid: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        runs: usize,
        #[arg(long, default_value_t = 1.0)]
        epsilon_c: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Ingestion dry run listing every table violation.
    Validate {
        #[command(flatten)]
        input: Input,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        if e.is_numerical() {
            return CliError::Numerical(msg);
        }
        match e {
            CoreError::Config(_)
            | CoreError::InvalidArgument(_)
            | CoreError::UnknownClassifier(_)
            | CoreError::QuantileAlpha(_)
            | CoreError::ExhaustiveTooLarge { .. } => CliError::Usage(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<FetchError> for CliError {
    fn from(e: FetchError) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("GSD_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Analyze {
            input,
            epsilon,
            delta,
            scope,
        } => analyze(out, input, *epsilon, *delta, *scope),
        Command::Test {
            input,
            target,
            static_only,
            dynamic,
            alpha,
            resamples,
            exhaustive,
        } => test(
            out,
            input,
            target,
            (!dynamic, !static_only),
            *alpha,
            *resamples,
            *exhaustive,
        ),
        Command::Robust {
            input,
            target,
            k_max,
            alpha,
            resamples,
        } => robust(out, input, target, *k_max, *alpha, *resamples),
        Command::Baseline { input, alpha } => baseline(out, input, *alpha),
        Command::Simulate {
            model,
            s_grid,
            runs,
            epsilon_c,
            seed,
        } => simulate(out, model, s_grid, *runs, *epsilon_c, *seed),
        Command::Validate { input } => validate(out, input),
    }
}

struct Loaded {
    config: AnalysisConfig,
    table: PerformanceTable,
    warnings: Vec<String>,
    seed: u64,
}

fn read_input(input: &Input) -> CliResult<Vec<u8>> {
    if is_remote(&input.csv) {
        let options = FetchOptions {
            cap_bytes: input.fetch_cap_mib.saturating_mul(1024 * 1024),
            retries: input.fetch_retries,
            ..FetchOptions::default()
        };
        Ok(fetch_csv(&input.csv, &options)?)
    } else {
        std::fs::read(&input.csv).map_err(|e| CliError::Data(format!("{}: {e}", input.csv)))
    }
}

fn load_config(input: &Input) -> CliResult<AnalysisConfig> {
    let text = std::fs::read_to_string(&input.config)
        .map_err(|e| CliError::Usage(format!("{}: {e}", input.config.display())))?;
    Ok(AnalysisConfig::from_toml_str(&text)?)
}

fn load(input: &Input) -> CliResult<Loaded> {
    let config = load_config(input)?;
    let bytes = read_input(input)?;
    let ingested = io::ingest(bytes.as_slice(), &config)?;
    for w in &ingested.warnings {
        log::warn!("{w}");
    }
    Ok(Loaded {
        seed: input.seed.unwrap_or(config.seed),
        config,
        table: ingested.table,
        warnings: ingested.warnings,
    })
}

fn write(out: &Path, name: &str, content: &str) -> CliResult<()> {
    let path = out.join(name);
    io::write_file(&path, content).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn check_level(alpha: f64) -> CliResult<f64> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(CliError::Usage(format!("alpha {alpha} not in (0,1)")))
    }
}

fn plan_for(config: &AnalysisConfig, seed: u64, resamples: Option<usize>, exhaustive: bool) -> ResamplingPlan {
    if exhaustive || config.exhaustive {
        ResamplingPlan::exhaustive()
    } else {
        ResamplingPlan::sampled(resamples.unwrap_or(config.n_resamples), seed)
    }
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    input: &'a str,
    epsilon: f64,
    delta: f64,
    scope: PointScope,
    classifiers: &'a [String],
    n_datasets: usize,
    warnings: &'a [String],
    gsd_front: FrontResult,
    pareto_front: FrontResult,
    fsd_front: FrontResult,
    relation: DominanceGraph,
    fsd_relation: DominanceGraph,
    d_matrix: DMatrix,
    fsd_d_matrix: DMatrix,
}

fn analyze(out: &Path, input: &Input, epsilon: Option<f64>, delta: Option<f64>, scope: ScopeArg) -> CliResult<()> {
    let l = load(input)?;
    let epsilon = epsilon.unwrap_or(l.config.epsilon);
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(CliError::Usage(format!("epsilon {epsilon} not in [0,1]")));
    }
    let opts = GsdOptions {
        delta: delta.unwrap_or(l.config.delta),
        scope: match scope {
            ScopeArg::Pair => PointScope::Pair,
            ScopeArg::Suite => PointScope::Suite,
        },
        ..GsdOptions::default()
    };
    let d = d_matrix(&l.table, &opts)?;
    let fsd_d = d_matrix(&l.table.as_all_ordinal(), &opts)?;
    let relation = dominance_graph(&d)?;
    let fsd_relation = dominance_graph(&fsd_d)?;
    let info = RunInfo::new("analyze", l.seed);
    let report = AnalyzeReport {
        input: &input.csv,
        epsilon,
        delta: opts.delta,
        scope: opts.scope,
        classifiers: l.table.classifiers(),
        n_datasets: l.table.s(),
        warnings: &l.warnings,
        gsd_front: egsd_front_from(&d, epsilon),
        pareto_front: gsd_core::pareto_front(&l.table)?,
        fsd_front: egsd_front_from(&fsd_d, epsilon),
        relation,
        fsd_relation,
        d_matrix: d,
        fsd_d_matrix: fsd_d,
    };
    println!("empirical GSD front: {}", report.gsd_front.members.join(", "));
    write(out, "analyze.json", &io::to_json(&info, &report)?)?;
    write(out, "d_matrix.csv", &io::to_csv(&info, &io::d_rows(&report.d_matrix))?)?;
    write(out, "gsd.dot", &io::with_dot_banner(&info, &report.relation.to_dot()))?;
    write(
        out,
        "fsd.dot",
        &io::with_dot_banner(&info, &report.fsd_relation.to_dot()),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct PairwiseRow<'a> {
    test: &'a str,
    candidate: &'a str,
    target: &'a str,
    level: f64,
    observed: f64,
    p_value: f64,
    critical_value: Option<f64>,
    ell: usize,
    reject: bool,
}

fn pairwise_rows<'a>(test: &'a str, results: &'a [PairwiseTestResult]) -> impl Iterator<Item = PairwiseRow<'a>> {
    results.iter().map(move |p| PairwiseRow {
        test,
        candidate: &p.candidate,
        target: &p.target,
        level: p.alpha,
        observed: p.observed,
        p_value: p.p_value,
        critical_value: p.critical_value,
        ell: p.ell,
        reject: p.reject,
    })
}

#[derive(Serialize)]
struct TestReport<'a> {
    input: &'a str,
    target: &'a str,
    alpha: f64,
    delta: f64,
    plan: ResamplingPlan,
    static_test: Option<StaticTestResult>,
    dynamic_test: Option<DynamicTestResult>,
}

fn test(
    out: &Path,
    input: &Input,
    target: &str,
    (run_static, run_dynamic): (bool, bool),
    alpha: Option<f64>,
    resamples: Option<usize>,
    exhaustive: bool,
) -> CliResult<()> {
    let l = load(input)?;
    let alpha = check_level(alpha.unwrap_or(l.config.alpha))?;
    let plan = plan_for(&l.config, l.seed, resamples, exhaustive);
    let delta = l.config.delta;
    let pairwise = challenger_tests(target, &l.table, alpha, &plan, delta)?;
    let dynamic_test = run_dynamic.then(|| dynamic_from_pairwise(target, alpha, &pairwise));
    let static_test = run_static.then(|| static_from_pairwise(target, pairwise));
    if let Some(s) = &static_test {
        println!("static test rejects: {}", s.reject);
    }
    if let Some(d) = &dynamic_test {
        println!("dynamic test s_max: {}", d.s_max.join(", "));
    }
    let mut rows: Vec<PairwiseRow> = Vec::new();
    if let Some(s) = &static_test {
        rows.extend(pairwise_rows("static", &s.pairwise));
    }
    if let Some(d) = &dynamic_test {
        rows.extend(pairwise_rows("dynamic", &d.pairwise));
    }
    let info = RunInfo::new("test", l.seed);
    let csv = io::to_csv(&info, &rows)?;
    let report = TestReport {
        input: &input.csv,
        target,
        alpha,
        delta,
        plan,
        static_test,
        dynamic_test,
    };
    write(out, "test.json", &io::to_json(&info, &report)?)?;
    write(out, "pairwise.csv", &csv)?;
    Ok(())
}

#[derive(Serialize)]
struct RobustStep {
    k: usize,
    aggregate: f64,
    static_reject: bool,
    s_max: Vec<String>,
}

#[derive(Serialize)]
struct RobustReport<'a> {
    input: &'a str,
    target: &'a str,
    alpha: f64,
    delta: f64,
    plan: ResamplingPlan,
    k_max: usize,
    static_breakdown: BreakdownReport,
    pairwise_breakdowns: Vec<BreakdownReport>,
    steps: Vec<RobustStep>,
    aggregate: ContaminationCurve,
    curves: Vec<ContaminationCurve>,
}

fn robust(
    out: &Path,
    input: &Input,
    target: &str,
    k_max: Option<usize>,
    alpha: Option<f64>,
    resamples: Option<usize>,
) -> CliResult<()> {
    let l = load(input)?;
    let alpha = check_level(alpha.unwrap_or(l.config.alpha))?;
    let k_max = k_max.or(l.config.k_max).unwrap_or_else(|| default_k_max(l.table.s()));
    let plan = plan_for(&l.config, l.seed, resamples, false);
    let delta = l.config.delta;
    let curves = challenger_curves(target, &l.table, &plan, delta, k_max)?;
    let aggregate = aggregate_curve(&curves)?;
    let level = alpha / curves.len() as f64;
    let steps = (0..=k_max)
        .map(|k| RobustStep {
            k,
            aggregate: aggregate.at(k),
            static_reject: aggregate.at(k) <= alpha,
            s_max: curves
                .iter()
                .filter(|c| c.at(k) <= level)
                .filter_map(|c| c.candidate.clone())
                .collect(),
        })
        .collect();
    let static_breakdown = breakdown_from_curve(&aggregate, alpha);
    match static_breakdown.k_star {
        Some(k) => println!("static decision holds up to k = {k}"),
        None => println!("static test does not reject at k = 0"),
    }
    let info = RunInfo::new("robust", l.seed);
    let mut all = curves.clone();
    all.push(aggregate.clone());
    let csv = io::with_csv_banner(&info, &curves_to_csv(&all)?);
    let report = RobustReport {
        input: &input.csv,
        target,
        alpha,
        delta,
        plan,
        k_max,
        static_breakdown,
        pairwise_breakdowns: curves.iter().map(|c| breakdown_from_curve(c, level)).collect(),
        steps,
        aggregate,
        curves,
    };
    write(out, "robust.json", &io::to_json(&info, &report)?)?;
    write(out, "curves.csv", &csv)?;
    Ok(())
}

#[derive(Serialize)]
struct NemenyiRow<'a> {
    metric: &'a str,
    first: &'a str,
    second: &'a str,
    mean_rank_first: f64,
    mean_rank_second: f64,
    p_value: f64,
    significant: bool,
}

#[derive(Serialize)]
struct BaselineReport<'a> {
    input: &'a str,
    marginal: &'a MarginalFrontResult,
}

fn baseline(out: &Path, input: &Input, alpha: Option<f64>) -> CliResult<()> {
    let l = load(input)?;
    let alpha = alpha.unwrap_or(l.config.alpha);
    let marginal = marginal_front(&l.table, alpha)?;
    println!("marginal front: {}", marginal.front.join(", "));
    let mut rows = Vec::new();
    for r in &marginal.nemenyi {
        let k = r.classifiers.len();
        for i in 0..k {
            for j in i + 1..k {
                rows.push(NemenyiRow {
                    metric: &r.metric,
                    first: &r.classifiers[i],
                    second: &r.classifiers[j],
                    mean_rank_first: r.mean_ranks[i],
                    mean_rank_second: r.mean_ranks[j],
                    p_value: r.p_values[i][j],
                    significant: r.significant[i][j],
                });
            }
        }
    }
    let info = RunInfo::new("baseline", l.seed);
    write(
        out,
        "baseline.json",
        &io::to_json(
            &info,
            &BaselineReport {
                input: &input.csv,
                marginal: &marginal,
            },
        )?,
    )?;
    write(out, "nemenyi.csv", &io::to_csv(&info, &rows)?)?;
    write(out, "friedman.csv", &io::to_csv(&info, &marginal.friedman)?)?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    model: &'a str,
    s_grid: &'a [usize],
    runs: usize,
    epsilon_c: f64,
    true_front: &'a [String],
    summaries: &'a [SizeSummary],
}

fn simulate(out: &Path, model: &str, s_grid: &[usize], runs: usize, epsilon_c: f64, seed: u64) -> CliResult<()> {
    let population = if model == "default" {
        PopulationModel::default_model()
    } else {
        let text = std::fs::read_to_string(model).map_err(|e| CliError::Usage(format!("{model}: {e}")))?;
        let m: PopulationModel = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{model}: {e}")))?;
        m.validate()?;
        m
    };
    if epsilon_c.is_nan() || epsilon_c <= 0.0 {
        return Err(CliError::Usage(format!("epsilon-c {epsilon_c} must be positive")));
    }
    let report = consistency_experiment(&population, s_grid, runs, epsilon_c, seed)?;
    for s in &report.summaries {
        println!(
            "s = {}: recovery {:.3}, superset {:.3}",
            s.s, s.recovery_rate, s.superset_rate
        );
    }
    let info = RunInfo::new("simulate", seed);
    let summary = SimulateReport {
        model,
        s_grid,
        runs,
        epsilon_c,
        true_front: &report.true_front,
        summaries: &report.summaries,
    };
    write(out, "simulate.json", &io::to_json(&info, &summary)?)?;
    write(out, "simulate_runs.csv", &io::to_csv(&info, &report.records)?)?;
    Ok(())
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    input: &'a str,
    ok: bool,
    classifiers: &'a [String],
    datasets: usize,
    metrics: Vec<String>,
    violations: Vec<String>,
    warnings: Vec<String>,
}

fn validate(out: &Path, input: &Input) -> CliResult<()> {
    let config = load_config(input)?;
    let bytes = read_input(input)?;
    let records = io::read_raw_records(bytes.as_slice(), &config)?;
    let ingested = io::ingest_unchecked(&records, &config)?;
    let violations: Vec<String> = validate_table(&ingested.table).iter().map(|v| v.to_string()).collect();
    for v in &violations {
        eprintln!("violation: {v}");
    }
    let report = ValidateReport {
        input: &input.csv,
        ok: violations.is_empty(),
        classifiers: ingested.table.classifiers(),
        datasets: ingested.table.s(),
        metrics: ingested
            .table
            .scale()
            .metrics()
            .iter()
            .map(|m| m.name.clone())
            .collect(),
        violations,
        warnings: ingested.warnings,
    };
    let info = RunInfo::new("validate", input.seed.unwrap_or(config.seed));
    write(out, "validate.json", &io::to_json(&info, &report)?)?;
    if report.ok {
        println!("table is valid");
        Ok(())
    } else {
        Err(CliError::Data(format!("{} violation(s)", report.violations.len())))
    }
}
