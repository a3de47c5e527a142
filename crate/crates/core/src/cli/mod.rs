//! Command-line front end.
//!
//! Settings resolve as built-in defaults, then an optional JSON config file
//! (`--config`), then flags. Machine-readable outputs go to files under
//! `--out`; stdout carries short human summaries. Exit codes: 0 success,
//! 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::bench::{run_benchmark, sensitivity_table, BenchReport, BenchSpec, Profile};
use crate::datagen::{simulate_panel, SimConfig};
use crate::error::Error;
use crate::estimate::{effect_series, EstimateOptions, EstimatorId};
use crate::factor::{infer_latents, load_checkpoint, save_checkpoint, train, LatentPanel, TrainConfig};
use crate::ingest::{case_study_run, load_panel, PanelSchema};
use crate::panel::TrajectoryPanel;

#[derive(Debug, Parser)]
#[command(name = "tifm", version, about = "Time-varying causal effects with a learned time-dependent instrument")]
pub struct Cli {
    /// Worker threads for benchmark replicates (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON config file with optional `sim`, `train`, `bench` and `schema` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a synthetic panel; writes panel.csv and truth.json.
    Simulate(SimulateArgs),
    /// Train the factor model on a panel CSV; writes model.json, latents.csv, curve.json.
    Train(TrainArgs),
    /// Estimate effect series from a panel CSV.
    Estimate(EstimateArgs),
    /// Run a replicate grid and print the sensitivity table.
    Benchmark(BenchmarkArgs),
    /// Per-treatment TSLS effect series for a real-data CSV.
    CaseStudy(CaseStudyArgs),
    /// Print the sensitivity table of a saved benchmark report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Number of individuals.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of time steps.
    #[arg(long)]
    pub t: Option<usize>,
    /// Autoregressive order.
    #[arg(long)]
    pub p: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    /// Recurrent hidden units.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long = "latent-dim")]
    pub latent_dim: Option<usize>,
    /// Dropout keep probability, in (0, 1].
    #[arg(long = "keep-prob")]
    pub keep_prob: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replicate index under the master seed.
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PanelInput {
    /// Panel CSV in long format.
    #[arg(long)]
    pub input: PathBuf,
    /// Column schema JSON; defaults to the layout written by `simulate`.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub panel: PanelInput,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub panel: PanelInput,
    /// Comma-separated estimators: tsls, naive, adjusted_ols, linear_dml.
    #[arg(long, value_delimiter = ',', default_value = "tsls,naive")]
    pub estimators: Vec<String>,
    /// Trained model checkpoint; required for tsls.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Cross-fitting folds for linear_dml.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, default_value = "desk")]
    pub profile: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,
    /// Comma-separated sample sizes (overrides the profile grid).
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Comma-separated autoregressive orders (overrides the profile grid).
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<usize>>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CaseStudyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A `report.json` written by `benchmark`.
    #[arg(long)]
    pub input: PathBuf,
    /// Sample size of the table (default: the largest in the report).
    #[arg(long)]
    pub n: Option<usize>,
    /// Optional directory for `sensitivity.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Optional overrides read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub sim: Option<SimConfig>,
    pub train: Option<TrainConfig>,
    pub bench: Option<BenchOverrides>,
    pub schema: Option<PanelSchema>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchOverrides {
    pub sample_sizes: Option<Vec<usize>>,
    pub p_orders: Option<Vec<usize>>,
    pub replicates: Option<usize>,
    pub t_report: Option<Vec<usize>>,
    pub estimators: Option<Vec<EstimatorId>>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// Failure while running; exit code 1.
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Field names in validation messages and the flag that sets each.
const FLAG_OF_FIELD: [(&str, &str); 9] = [
    ("n_individuals", "--n"),
    ("t_steps", "--t"),
    ("p_order", "--p"),
    ("batch_size", "--batch-size"),
    ("hidden_units", "--hidden"),
    ("latent_dim", "--latent-dim"),
    ("keep_probability", "--keep-prob"),
    ("replicates", "--replicates"),
    ("report step", "--t"),
];

/// Turns a configuration error into a usage error that names the flag.
fn usage(e: Error) -> CliError {
    match e {
        Error::InvalidConfig(msg) | Error::InvalidSchema(msg) => {
            let flag = FLAG_OF_FIELD.iter().find(|(field, _)| msg.contains(field)).map(|(_, f)| *f);
            CliError::Usage(match flag {
                Some(f) => format!("invalid value for {f}: {msg}"),
                None => msg,
            })
        }
        other => CliError::Runtime(other),
    }
}

fn read_config(path: Option<&Path>) -> CliResult<ConfigFile> {
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read --config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid --config {}: {e}", path.display())))
}

fn sim_config(file: &ConfigFile, flags: &SimArgs, seed: Option<u64>) -> CliResult<SimConfig> {
    let mut cfg = file.sim.clone().unwrap_or_default();
    if let Some(n) = flags.n {
        cfg.n_individuals = n;
    }
    if let Some(t) = flags.t {
        cfg.t_steps = t;
    }
    if let Some(p) = flags.p {
        cfg.p_order = p;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn train_config(file: &ConfigFile, flags: &TrainFlags, seed: Option<u64>) -> CliResult<TrainConfig> {
    let mut cfg = file.train.clone().unwrap_or_default();
    if let Some(v) = flags.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = flags.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = flags.hidden {
        cfg.hidden_units = v;
    }
    if let Some(v) = flags.latent_dim {
        cfg.latent_dim = v;
    }
    if let Some(v) = flags.keep_prob {
        cfg.keep_probability = v;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn parse_estimators(names: &[String]) -> CliResult<Vec<EstimatorId>> {
    let mut out = Vec::new();
    for name in names {
        let e: EstimatorId =
            name.trim().parse().map_err(|e: Error| CliError::Usage(format!("invalid value for --estimators: {e}")))?;
        if !out.contains(&e) {
            out.push(e);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("--estimators must name at least one estimator".into()));
    }
    Ok(out)
}

/// The schema from `--schema`, else the config file, else the layout of
/// files written by `simulate` (covariates `x1 … xk` read from the header).
fn resolve_schema(file: &ConfigFile, input: &PanelInput) -> CliResult<PanelSchema> {
    if let Some(path) = &input.schema {
        return PanelSchema::from_json_file(path).map_err(|e| CliError::Usage(format!("--schema: {e}")));
    }
    if let Some(s) = &file.schema {
        s.validate().map_err(usage)?;
        return Ok(s.clone());
    }
    let mut rdr = csv::Reader::from_path(&input.input).map_err(|e| CliError::Runtime(e.into()))?;
    let headers = rdr.headers().map_err(|e| CliError::Runtime(e.into()))?;
    let k = headers.iter().filter(|h| h.starts_with('x') && h[1..].parse::<usize>().is_ok()).count();
    if k == 0 {
        return Err(CliError::Usage("input has no x1..xk columns; pass --schema".into()));
    }
    Ok(PanelSchema::long_format(k))
}

fn load_input(file: &ConfigFile, input: &PanelInput) -> CliResult<TrajectoryPanel> {
    let schema = resolve_schema(file, input)?;
    let (panel, report) = load_panel(&input.input, &schema)?;
    log::info!(
        "loaded {} individuals x {} steps ({} rows dropped)",
        report.individuals,
        report.t_steps,
        report.rows_dropped
    );
    Ok(panel)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(Error::Io { path: dir.into(), source: e }))
}

fn write(path: &Path, text: String) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(Error::Io { path: path.into(), source: e }))
}

fn latents_csv(latents: &LatentPanel) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "time".into()];
    header.extend((1..=latents.latent_dim).map(|d| format!("l{d}")));
    w.write_record(&header).map_err(|e| CliError::Runtime(e.into()))?;
    for i in 0..latents.n {
        for t in 0..latents.t_steps {
            let start = (i * latents.t_steps + t) * latents.latent_dim;
            let mut rec = vec![(i + 1).to_string(), (t + 1).to_string()];
            rec.extend(latents.latents[start..start + latents.latent_dim].iter().map(f64::to_string));
            w.write_record(&rec).map_err(|e| CliError::Runtime(e.into()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(Error::Io { path: "<memory>".into(), source: e.into_error() }))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn simulate_cmd(file: &ConfigFile, a: &SimulateArgs) -> CliResult<()> {
    let cfg = sim_config(file, &a.sim, a.seed)?;
    let sim = simulate_panel(&cfg, a.replicate).map_err(usage)?;
    create_dir(&a.out)?;
    sim.write_files(&a.out.join("panel.csv"), &a.out.join("truth.json"))?;
    println!(
        "simulated {} individuals x {} steps (p = {}), true effect {}; wrote {}",
        cfg.n_individuals,
        cfg.t_steps,
        cfg.p_order,
        sim.true_effect,
        a.out.display()
    );
    Ok(())
}

fn train_cmd(file: &ConfigFile, a: &TrainArgs) -> CliResult<()> {
    let cfg = train_config(file, &a.train, a.seed)?;
    let panel = load_input(file, &a.panel)?;
    let (params, curve) = train(&panel, &cfg)?;
    let latents = infer_latents(&params, &panel)?;
    create_dir(&a.out)?;
    save_checkpoint(&params, &a.out.join("model.json"))?;
    write(&a.out.join("latents.csv"), latents_csv(&latents)?)?;
    write(&a.out.join("curve.json"), serde_json::to_string_pretty(&curve).map_err(Error::from)? + "\n")?;
    println!(
        "trained {} epochs: loss {:.4} -> {:.4}; wrote {}",
        cfg.epochs,
        curve.initial_loss,
        curve.final_loss,
        a.out.display()
    );
    Ok(())
}

fn estimate_cmd(file: &ConfigFile, a: &EstimateArgs) -> CliResult<()> {
    let estimators = parse_estimators(&a.estimators)?;
    let opts = EstimateOptions { folds: a.folds, ..EstimateOptions::default() };
    if estimators.contains(&EstimatorId::LinearDml) && a.folds < 2 {
        return Err(CliError::Usage("--folds must be >= 2".into()));
    }
    let latents_needed = estimators.iter().any(|e| e.needs_latents());
    if latents_needed && a.model.is_none() {
        return Err(CliError::Usage("tsls needs --model (a checkpoint written by `train`)".into()));
    }
    let panel = load_input(file, &a.panel)?;
    let latents = match (&a.model, latents_needed) {
        (Some(path), true) => Some(infer_latents(&load_checkpoint(path)?, &panel)?),
        _ => None,
    };
    create_dir(&a.out)?;
    for est in estimators {
        let series = effect_series(&panel, latents.as_ref(), est, &opts)?;
        series.write_csv(&a.out.join(format!("series_{est}.csv")))?;
        series.write_json(&a.out.join(format!("series_{est}.json")))?;
        let ok = series.estimates().count();
        let mean_beta = series.estimates().map(|e| e.beta_hat).sum::<f64>() / ok.max(1) as f64;
        println!("{est:<13} {ok}/{} steps estimated, mean beta_hat {mean_beta:.4}", series.points.len());
    }
    Ok(())
}

fn bench_spec(file: &ConfigFile, a: &BenchmarkArgs) -> CliResult<BenchSpec> {
    let profile: Profile = a.profile.parse().map_err(|e: Error| CliError::Usage(format!("invalid value for --profile: {e}")))?;
    let mut spec = BenchSpec::for_profile(profile);
    if let Some(sim) = &file.sim {
        spec.sim = sim.clone();
    }
    spec.train_config = train_config(file, &a.train, None)?;
    if let Some(b) = &file.bench {
        if let Some(v) = &b.sample_sizes {
            spec.sample_sizes = v.clone();
        }
        if let Some(v) = &b.p_orders {
            spec.p_orders = v.clone();
        }
        if let Some(v) = b.replicates {
            spec.replicates = v;
        }
        if let Some(v) = &b.t_report {
            spec.t_report = v.clone();
        }
        if let Some(v) = &b.estimators {
            spec.estimators = v.clone();
        }
    }
    if let Some(s) = a.seed {
        spec.master_seed = s;
    }
    if let Some(names) = &a.estimators {
        spec.estimators = parse_estimators(names)?;
    }
    if let Some(n) = &a.n {
        spec.sample_sizes = n.clone();
    }
    if let Some(p) = &a.p {
        spec.p_orders = p.clone();
    }
    if let Some(t) = a.t {
        spec.sim.t_steps = t;
        spec.t_report.retain(|&s| s <= t);
        if spec.t_report.is_empty() {
            spec.t_report = vec![t];
        }
    }
    if let Some(r) = a.replicates {
        spec.replicates = r;
    }
    spec.validate().map_err(usage)?;
    Ok(spec)
}

fn print_tables(report: &BenchReport, sample_size: Option<usize>) -> CliResult<String> {
    let sizes: Vec<usize> = match sample_size {
        Some(n) => vec![n],
        None => report.spec.sample_sizes.clone(),
    };
    let mut csv_out = String::new();
    for n in sizes {
        let table = sensitivity_table(report, n, &report.spec.p_orders).map_err(CliError::Runtime)?;
        println!("N = {n}: mean±std absolute error over {} replicates", report.spec.replicates);
        print!("{table}");
        println!();
        csv_out.push_str(&table.to_csv()?);
    }
    Ok(csv_out)
}

fn benchmark_cmd(file: &ConfigFile, threads: Option<usize>, a: &BenchmarkArgs) -> CliResult<()> {
    let spec = bench_spec(file, a)?;
    let report = run_benchmark(&spec, threads)?;
    report.write_files(&a.out)?;
    let csv = print_tables(&report, None)?;
    write(&a.out.join("sensitivity.csv"), csv)?;
    let failed: usize = report.replicates.iter().filter(|r| r.failure.is_some()).count();
    if failed > 0 {
        println!("{failed} replicate(s) recorded failures; see report.json");
    }
    Ok(())
}

fn case_study_cmd(file: &ConfigFile, a: &CaseStudyArgs) -> CliResult<()> {
    let schema = PanelSchema::from_json_file(&a.schema).map_err(|e| CliError::Usage(format!("--schema: {e}")))?;
    let cfg = train_config(file, &a.train, a.seed)?;
    let out = case_study_run(&a.input, &schema, &cfg)?;
    let paths = out.write_bundle(&a.out)?;
    for (s, p) in out.studies.iter().zip(&paths) {
        let ok = s.series.estimates().count();
        println!(
            "{:<12} {} individuals x {} steps, {ok} steps estimated -> {}",
            s.treatment,
            s.report.individuals,
            s.report.t_steps,
            p.display()
        );
    }
    Ok(())
}

fn report_cmd(a: &ReportArgs) -> CliResult<()> {
    let report = BenchReport::read_json(&a.input)?;
    let csv = print_tables(&report, a.n)?;
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write(&dir.join("sensitivity.csv"), csv)?;
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> CliResult<()> {
    let file = read_config(cli.config.as_deref())?;
    if cli.threads == Some(0) {
        return Err(CliError::Usage("--threads must be >= 1".into()));
    }
    match &cli.command {
        Command::Simulate(a) => simulate_cmd(&file, a),
        Command::Train(a) => train_cmd(&file, a),
        Command::Estimate(a) => estimate_cmd(&file, a),
        Command::Benchmark(a) => benchmark_cmd(&file, cli.threads, a),
        Command::CaseStudy(a) => case_study_cmd(&file, a),
        Command::Report(a) => report_cmd(a),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
