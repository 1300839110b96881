//! Command-line front end. Exit codes: 0 success, 1 I/O failure, 2 invalid
//! input or configuration, 3 experiment finished with failed cells.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beacon_placement::cmaes::EsConfig;
use beacon_placement::harness::{
    self, BaseScenario, ExperimentConfig, ExportFormat, SyntheticSpec, TrajectoryKind,
};
use beacon_placement::localization::{map_solve, mle_solve, rmse, SolveOptions};
use beacon_placement::scenario::EdgeReference;
use beacon_placement::{Algorithm, Error, FimMode, InfoState, Instance, Scenario, SelectionResult};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "beacon-placement", version, about = "D-optimal beacon placement for range-aided localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scenario as JSON.
    Generate(GenerateArgs),
    /// Simulate one instance of a scenario and run one selector on it.
    Select(SelectArgs),
    /// Localize a simulated instance using a previous selection.
    Localize(LocalizeArgs),
    /// Run the algorithm comparison sweep.
    Experiment(ExperimentArgs),
    /// Compare greedy against brute force on small random instances.
    Certify(CertifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Line,
    Loop,
    Serpentine,
    /// Prior means uniform in the box instead of along a path.
    Uniform,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 30)]
    positions: usize,
    #[arg(long, default_value_t = 50)]
    candidates: usize,
    #[arg(long, default_value_t = 2)]
    dimension: usize,
    /// Box lengths in meters, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "400,300")]
    extent: Vec<f64>,
    #[arg(long, value_enum, default_value = "serpentine")]
    layout: Layout,
    #[arg(long, default_value_t = 8.0)]
    prior_sigma: f64,
    #[arg(long, default_value_t = 25.0)]
    noise_variance: f64,
    /// Omit for no cutoff.
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long, default_value_t = 5)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InstanceArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    trial: u64,
    #[arg(long, default_value = "one-sample", value_parser = parse_fim_mode)]
    fim_mode: FimMode,
    /// Decide edges from the prior means instead of the simulated truth.
    #[arg(long)]
    prior_edges: bool,
}

impl InstanceArgs {
    fn instance(&self) -> beacon_placement::Result<Instance> {
        let scenario = Scenario::load(&self.scenario)?;
        let edges = if self.prior_edges {
            EdgeReference::PriorMean
        } else {
            EdgeReference::GroundTruth
        };
        Instance::simulate(scenario, self.seed, self.trial, edges)
    }
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, value_parser = parse_algorithm, default_value = "greedy")]
    algorithm: Algorithm,
    /// Override the scenario budget.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-generation CMA-ES convergence CSV.
    #[arg(long)]
    convergence: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    Map,
    Mle,
}

#[derive(Args)]
struct LocalizeArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// SelectionResult JSON from `select`; all beacons when omitted.
    #[arg(long)]
    selection: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "map")]
    estimator: Estimator,
    /// Start from the prior means rather than the simulated truth.
    #[arg(long)]
    init_prior: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump the simulated range measurements as `i,j,range`.
    #[arg(long)]
    measurements: Option<PathBuf>,
    /// Per-position solver diagnostics CSV.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// ExperimentConfig JSON; built-in factory sweep when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_algorithm)]
    algorithms: Option<Vec<Algorithm>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_fim_mode)]
    fim_mode: Option<FimMode>,
    /// Only run settings with these labels.
    #[arg(long, value_delimiter = ',')]
    settings: Option<Vec<String>>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: ExportFormat,
    /// Keep records already in `<out-dir>/records.csv` and skip their trials.
    #[arg(long)]
    resume: bool,
    /// Write 0 for runtimes so that reruns produce identical files.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long, default_value_t = 100)]
    instances: u64,
    /// Budgets to test, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7")]
    budgets: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    positions: usize,
    #[arg(long, default_value_t = 20)]
    candidates: usize,
    /// Sensing cutoff in metres; pass `inf` for none.
    #[arg(long, default_value_t = 60.0)]
    cutoff: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "one-sample", value_parser = parse_fim_mode)]
    fim_mode: FimMode,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: ExportFormat,
}

fn parse_fim_mode(s: &str) -> Result<FimMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> Result<ExportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn emit(text: &str, out: Option<&Path>) -> beacon_placement::Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn generate(args: GenerateArgs) -> beacon_placement::Result<()> {
    let spec = SyntheticSpec {
        positions: args.positions,
        candidates: args.candidates,
        dimension: args.dimension,
        extent: args.extent,
        trajectory: match args.layout {
            Layout::Line => TrajectoryKind::Line,
            Layout::Loop => TrajectoryKind::Loop,
            _ => TrajectoryKind::Serpentine,
        },
        prior_sigma: args.prior_sigma,
        noise_variance: args.noise_variance,
        cutoff: args.cutoff,
        budget: args.budget,
    };
    let scenario = match args.layout {
        Layout::Uniform => harness::generate_random_scenario(&spec, args.seed)?,
        _ => harness::generate_synthetic_scenario(&spec, args.seed)?,
    };
    emit(&scenario.to_json(), args.out.as_deref())
}

fn select(args: SelectArgs) -> beacon_placement::Result<()> {
    let mut instance = args.instance.instance()?;
    if let Some(k) = args.budget {
        instance.scenario.budget = k;
        instance.scenario.validate()?;
    }
    let state = InfoState::from_instance(&instance, args.instance.fim_mode)?;
    let config = ExperimentConfig {
        master_seed: args.instance.seed,
        es: EsConfig::default(),
        ..ExperimentConfig::default()
    };
    let result = harness::run_algorithm(args.algorithm, &instance, &state, &config, args.instance.trial)?;
    if let (Some(path), Some(report)) = (&args.convergence, &result.cmaes) {
        beacon_placement::cmaes::write_convergence_csv(report, path)?;
    }
    emit(&result.to_json(), args.out.as_deref())
}

fn localize(args: LocalizeArgs) -> beacon_placement::Result<()> {
    let instance = args.instance.instance()?;
    let graph = match &args.selection {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let selection: SelectionResult = serde_json::from_str(&text).map_err(|e| Error::Json {
                path: path.clone(),
                source: e,
            })?;
            for id in &selection.selected {
                instance.scenario.candidate(*id)?;
            }
            instance.graph.restricted_to(&selection.selected)
        }
        None => instance.graph.clone(),
    };
    if let Some(path) = &args.measurements {
        instance.measurements.write_csv(path)?;
    }
    let init = if args.init_prior {
        instance.scenario.prior_means()
    } else {
        instance.truth.clone()
    };
    let opts = SolveOptions::default();
    let result = match args.estimator {
        Estimator::Map => map_solve(&instance.scenario, &graph, &instance.measurements, &init, &opts)?,
        Estimator::Mle => mle_solve(&instance.scenario, &graph, &instance.measurements, &init, &opts)?,
    };
    if let Some(path) = &args.diagnostics {
        result.write_diagnostics_csv(path)?;
    }
    log::info!("rmse {:.6} m", rmse(&result.estimates, &instance.truth)?);
    emit(&result.to_json(), args.out.as_deref())
}

/// Returns whether every cell completed.
fn experiment(args: ExperimentArgs) -> beacon_placement::Result<bool> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(a) = args.algorithms {
        config.algorithms = a;
    }
    if let Some(s) = args.seed {
        config.master_seed = s;
    }
    if let Some(m) = args.fim_mode {
        config.fim_mode = m;
    }
    if let Some(labels) = &args.settings {
        config.settings.retain(|s| labels.contains(&s.label));
    }
    if args.no_timing {
        config.record_runtime = false;
    }
    if let BaseScenario::File(path) = &config.base {
        if path.is_relative() {
            if let Some(dir) = args.config.as_deref().and_then(Path::parent) {
                config.base = BaseScenario::File(dir.join(path));
            }
        }
    }
    config.validate()?;

    let records_path = args.out_dir.join("records.csv");
    let previous = if args.resume && records_path.exists() {
        let labels: Vec<&str> = config.settings.iter().map(|s| s.label.as_str()).collect();
        harness::read_records_csv(&records_path)?
            .into_iter()
            .filter(|r| labels.contains(&r.setting.as_str()) && config.algorithms.contains(&r.algorithm))
            .collect()
    } else {
        Vec::new()
    };
    let output = harness::run_experiment(&config, &previous)?;
    harness::export_experiment(&output, &args.out_dir, args.format)?;
    for row in output.summary.incomplete() {
        log::warn!(
            "{} / {}: {} of {} trials completed",
            row.setting,
            row.algorithm,
            row.trials,
            row.expected_trials
        );
    }
    Ok(output.is_complete())
}

fn certify(args: CertifyArgs) -> beacon_placement::Result<()> {
    let spec = SyntheticSpec {
        positions: args.positions,
        candidates: args.candidates,
        cutoff: args.cutoff.is_finite().then_some(args.cutoff),
        ..harness::small_instance_spec()
    };
    let rows = harness::certify_instances(&spec, args.instances, &args.budgets, args.seed, args.fim_mode)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    match args.format {
        ExportFormat::Csv => harness::write_certification_csv(&rows, args.out_dir.join("certify.csv"))?,
        ExportFormat::Json => {
            let path = args.out_dir.join("certify.json");
            let text = serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n";
            fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
        }
    }
    let holds = rows.iter().filter(|r| r.holds).count();
    let optimal = rows.iter().filter(|r| r.optimal).count();
    println!(
        "bound holds on {holds}/{n}; greedy optimal on {optimal}/{n}",
        n = rows.len()
    );
    if holds < rows.len() {
        return Err(Error::Config("greedy fell below the 1 - 1/e bound".into()));
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => generate(a).map(|_| true),
        Command::Select(a) => select(a).map(|_| true),
        Command::Localize(a) => localize(a).map(|_| true),
        Command::Experiment(a) => experiment(a),
        Command::Certify(a) => certify(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("some experiment cells failed; see failures.csv");
            ExitCode::from(3)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
