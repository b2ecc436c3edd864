//! The `titepk` command line.
//!
//! Exit codes: 0 success, 2 usage or validation error, 1 internal failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use titepk_core::scenarios::SCENARIO_IDS;
use titepk_core::{run_trial, trial_rng, DltGenerator, Outcome};

use crate::formats::{load_records, InputError, ScenarioTable, StudyConfigFile, StudyPlan};
use crate::report::{decision_text, study_report, table_block, write_study, Artifacts};
use crate::settings::{FieldError, ModelSettings};
use crate::store::Store;
use crate::study::run_plan;
use crate::wire::{class_name, decide, exposure_samples, RecordDto};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "titepk", version, about = "Time-to-event PK dose-schedule escalation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation study and write operating characteristics.
    Simulate(SimulateArgs),
    /// Replay one simulated trial patient by patient.
    Trial(TrialArgs),
    /// Fit observed patient records and print the decision table.
    Recommend(RecommendArgs),
    /// Sample E(t) and AUC_E(t) for one regimen.
    Exposure(ExposureArgs),
    /// Print a built-in scenario in the scenario-file format.
    Scenario(ScenarioArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TextFormat {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct StudyArgs {
    /// Study configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in scenario S1..S10.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Scenario file (tab-separated, one row per schedule).
    #[arg(long, conflicts_with = "scenario")]
    pub scenario_file: Option<PathBuf>,
    /// Feasibility bound a.
    #[arg(long)]
    pub bound: Option<f64>,
    /// highest-eligible, lowest-eligible or max-target.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Let escalation skip untried exposure levels.
    #[arg(long)]
    pub allow_skip: bool,
    /// tite-pk, uniform, exponential or early-late.
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub study: StudyArgs,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Output directory.
    #[arg(long, env = "TITEPK_OUT_DIR", default_value = "titepk-out")]
    pub out: PathBuf,
    /// Write only this format (default: both).
    #[arg(long, value_enum)]
    pub format: Option<FileFormat>,
}

#[derive(Debug, Clone, Args)]
pub struct TrialArgs {
    #[command(flatten)]
    pub study: StudyArgs,
    /// Trial index within the seeded study.
    #[arg(long, default_value_t = 0)]
    pub index: u64,
    #[arg(long, value_enum, default_value = "text")]
    pub format: TextFormat,
}

#[derive(Debug, Clone, Args)]
pub struct RecommendArgs {
    /// Patient record file (CSV with header).
    #[arg(long)]
    pub records: PathBuf,
    /// Model settings (TOML); defaults to the Vidaza set-up.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bound: Option<f64>,
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub allow_skip: bool,
    /// `text` prints the table followed by the JSON document.
    #[arg(long, value_enum, default_value = "text")]
    pub format: TextFormat,
}

#[derive(Debug, Clone, Args)]
pub struct ExposureArgs {
    #[arg(long)]
    pub dose: f64,
    /// Hours between administrations.
    #[arg(long, conflicts_with = "schedule")]
    pub interval_hours: Option<f64>,
    /// Schedule label from the model settings (A..D for Vidaza).
    #[arg(long)]
    pub schedule: Option<String>,
    /// Model settings (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Defaults to the cycle length t*.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FileFormat,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// S1..S10
    pub id: String,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: std::net::SocketAddr,
    /// Directory for the session log; in-memory if omitted.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Internal(String),
}

impl From<InputError> for CliError {
    fn from(e: InputError) -> Self {
        match e {
            InputError::Io { .. } => CliError::Usage(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

fn io(e: std::io::Error) -> CliError {
    CliError::Internal(e.to_string())
}

type CliResult = Result<(), CliError>;

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{rendered}") } else { write!(out, "{rendered}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a, out, err),
        Command::Trial(a) => trial(&a, out),
        Command::Recommend(a) => recommend(&a, out),
        Command::Exposure(a) => exposure(&a, out),
        Command::Scenario(a) => scenario(&a, out),
        Command::Serve(a) => serve(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Internal(msg)) => {
            let _ = writeln!(err, "internal error: {msg}");
            EXIT_INTERNAL
        }
    }
}

fn plan(args: &StudyArgs, trials: Option<usize>) -> Result<StudyPlan, CliError> {
    let mut cfg = match &args.config {
        Some(path) => StudyConfigFile::load(path)?,
        None => StudyConfigFile::default(),
    };
    if let Some(id) = &args.scenario {
        cfg.scenario = Some(id.clone());
        cfg.scenario_file = None;
        cfg.inline = None;
    }
    if let Some(f) = &args.scenario_file {
        cfg.scenario = None;
        cfg.scenario_file = Some(f.clone());
        cfg.inline = None;
    }
    if args.bound.is_some() {
        cfg.feasibility_bound = args.bound;
    }
    if args.strategy.is_some() {
        cfg.selection_strategy = args.strategy.clone();
    }
    if args.allow_skip {
        cfg.no_skip = Some(false);
    }
    if args.generator.is_some() {
        cfg.generator = args.generator.clone();
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if trials.is_some() {
        cfg.n_trials = trials;
    }
    Ok(cfg.resolve()?)
}

fn output_stem(plan: &StudyPlan) -> String {
    let cfg = &plan.model.config;
    format!(
        "{}-a{}-{}{}-{}",
        plan.label,
        cfg.feasibility_bound,
        cfg.selection_strategy.name(),
        if cfg.no_skip { "" } else { "-skip" },
        plan.generator.name()
    )
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let plan = plan(&args.study, args.trials)?;
    let study = run_plan(&plan).map_err(internal)?;
    let report = study_report(&plan, &study);
    let which = match args.format {
        None => Artifacts::Both,
        Some(FileFormat::Json) => Artifacts::Json,
        Some(FileFormat::Csv) => Artifacts::Csv,
    };
    let written = write_study(&args.out, &output_stem(&plan), &report, which).map_err(io)?;
    write!(out, "{}", table_block(&report)).map_err(io)?;
    for path in written {
        writeln!(err, "wrote {}", path.display()).map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PatientDto {
    patient: usize,
    combination: String,
    true_p: f64,
    dlt: bool,
    time_hours: f64,
    /// P(OD) at the assigned combination when it was chosen.
    p_overdose_at_assignment: f64,
}

#[derive(Debug, Serialize)]
struct TrialReplayDto {
    scenario: String,
    seed: u64,
    index: u64,
    patients: Vec<PatientDto>,
    mtc: Option<String>,
    mtc_class: String,
    stop_reason: Option<String>,
}

fn trial(args: &TrialArgs, out: &mut dyn Write) -> CliResult {
    let plan = plan(&args.study, Some(1))?;
    let mut rng = trial_rng(plan.seed, args.index);
    let m = &plan.model;
    let result = run_trial(&plan.scenario, &m.config, plan.generator, &m.prior, &m.params, &mut rng).map_err(internal)?;
    let grid = &m.grid;
    let summary = crate::wire::TrialSummaryDto::new(args.index as usize, &result.summary(&plan.scenario), grid);
    let patients: Vec<PatientDto> = result
        .patients
        .iter()
        .enumerate()
        .map(|(i, p)| PatientDto {
            patient: i + 1,
            combination: grid.label(p.combination),
            true_p: p.true_p,
            dlt: p.outcome.is_dlt(),
            time_hours: p.outcome.time(),
            p_overdose_at_assignment: result.decisions[p.decision]
                .row(p.combination)
                .map_or(f64::NAN, |r| r.p_overdose),
        })
        .collect();
    let replay = TrialReplayDto {
        scenario: plan.label.clone(),
        seed: plan.seed,
        index: args.index,
        patients,
        mtc: summary.mtc.clone(),
        mtc_class: summary.mtc_class.clone(),
        stop_reason: summary.stop_reason.clone(),
    };
    match args.format {
        TextFormat::Json => {
            writeln!(out, "{}", serde_json::to_string_pretty(&replay).map_err(internal)?).map_err(io)?;
        }
        TextFormat::Csv => {
            writeln!(out, "patient,combination,true_p,dlt,time_hours,p_overdose_at_assignment").map_err(io)?;
            for p in &replay.patients {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    p.patient,
                    p.combination,
                    p.true_p,
                    u8::from(p.dlt),
                    p.time_hours,
                    p.p_overdose_at_assignment
                )
                .map_err(io)?;
            }
        }
        TextFormat::Text => {
            writeln!(out, "{:>4} {:<8} {:>6} {:<22} {:>7}", "#", "combo", "true_p", "outcome", "P(OD)").map_err(io)?;
            for (p, log) in replay.patients.iter().zip(&result.patients) {
                let outcome = match log.outcome {
                    Outcome::Dlt { time } => format!("DLT at {time:.1} h"),
                    Outcome::Censored { time } => format!("no DLT by {time:.0} h"),
                };
                writeln!(
                    out,
                    "{:>4} {:<8} {:>6.2} {:<22} {:>7.3}",
                    p.patient, p.combination, p.true_p, outcome, p.p_overdose_at_assignment
                )
                .map_err(io)?;
            }
            let verdict = match &replay.mtc {
                Some(c) => format!("MTC {c} ({})", replay.mtc_class),
                None => format!("no MTC ({})", replay.stop_reason.as_deref().unwrap_or("")),
            };
            writeln!(out, "{verdict}").map_err(io)?;
        }
    }
    Ok(())
}

fn model_settings(path: Option<&Path>) -> Result<ModelSettings, CliError> {
    match path {
        None => Ok(ModelSettings::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {}", p.display(), e.message())))
        }
    }
}

fn fields_error(errors: Vec<FieldError>) -> CliError {
    CliError::Usage(errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))
}

fn recommend(args: &RecommendArgs, out: &mut dyn Write) -> CliResult {
    let mut settings = model_settings(args.config.as_deref())?;
    if let Some(a) = args.bound {
        settings.escalation.feasibility_bound = a;
    }
    if let Some(s) = &args.strategy {
        settings.escalation.selection_strategy = s.clone();
    }
    if args.allow_skip {
        settings.escalation.no_skip = false;
    }
    let model = settings.build().map_err(fields_error)?;
    let records = load_records(&args.records)?;
    // data rows start on line 2, after the header
    let resolved = records
        .iter()
        .enumerate()
        .map(|(i, r)| r.resolve(&model, &format!("row {}", i + 2)))
        .collect::<Result<Vec<_>, _>>()?;
    let decision = decide(&model, &resolved).map_err(|e| CliError::Usage(e.to_string()))?;
    let json = serde_json::to_string_pretty(&decision).map_err(internal)?;
    match args.format {
        TextFormat::Json => writeln!(out, "{json}"),
        TextFormat::Text => write!(out, "{}\n{json}\n", decision_text(&decision)),
        TextFormat::Csv => {
            let mut s = String::from("combination,cycle_auc,p_underdose,p_target,p_overdose,ewoc_ok,n_treated,recommended\n");
            for r in &decision.rows {
                s += &format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.combination,
                    r.cycle_auc,
                    r.p_underdose,
                    r.p_target,
                    r.p_overdose,
                    r.ewoc_ok,
                    r.n_treated,
                    decision.recommendation.as_deref() == Some(r.combination.as_str())
                );
            }
            write!(out, "{s}")
        }
    }
    .map_err(io)
}

fn exposure(args: &ExposureArgs, out: &mut dyn Write) -> CliResult {
    let settings = model_settings(args.config.as_deref())?;
    let model = settings.build().map_err(fields_error)?;
    let interval = match (&args.schedule, args.interval_hours) {
        (Some(label), None) => settings
            .schedules
            .iter()
            .find(|s| &s.label == label)
            .map(|s| s.interval_hours)
            .ok_or_else(|| CliError::Usage(format!("schedule: unknown schedule {label:?}")))?,
        (None, Some(h)) => h,
        _ => return Err(CliError::Usage("give --interval-hours or --schedule".into())),
    };
    let horizon = args.horizon.unwrap_or(model.params.t_star());
    let dto = exposure_samples(&model.params, args.dose, interval, horizon, args.step)?;
    let text = match args.format {
        FileFormat::Json => serde_json::to_string_pretty(&dto).map_err(internal)? + "\n",
        FileFormat::Csv => {
            let mut s = String::from("t_hours,exposure,auc\n");
            for p in &dto.samples {
                s += &format!("{},{},{}\n", p.t_hours, p.exposure, p.auc);
            }
            s
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(io),
        None => write!(out, "{text}").map_err(io),
    }
}

fn scenario(args: &ScenarioArgs, out: &mut dyn Write) -> CliResult {
    let table = ScenarioTable::catalog(&args.id).map_err(|_| {
        CliError::Usage(format!("scenario: unknown id {:?}; expected one of {}", args.id, SCENARIO_IDS.join(", ")))
    })?;
    write!(out, "{}", table.render(&format!("Scenario {}", args.id))).map_err(io)
}

fn serve(args: &ServeArgs) -> CliResult {
    let store = match &args.data_dir {
        Some(dir) => Store::open(dir).map_err(|e| CliError::Usage(e.to_string()))?,
        None => Store::in_memory(),
    };
    let runtime = tokio::runtime::Runtime::new().map_err(io)?;
    runtime
        .block_on(crate::service::serve(Arc::new(store), args.addr))
        .map_err(io)
}

/// Exposed for tests that need a record file body.
pub fn records_csv(records: &[RecordDto]) -> String {
    crate::formats::render_records(records)
}

#[allow(dead_code)]
fn generator_names() -> Vec<&'static str> {
    DltGenerator::ALL.iter().map(|g| g.name()).collect()
}

#[allow(dead_code)]
fn class_label(c: Option<titepk_core::ToxicityClass>) -> &'static str {
    class_name(c)
}
