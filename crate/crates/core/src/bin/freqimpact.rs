use std::collections::BTreeMap;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use freqimpact::diagnosis::Thresholds;
use freqimpact::indicators::IndicatorError;
use freqimpact::model::{validate_design, ExperimentDesign, Indicator, Mode, RunRecord};
use freqimpact::orchestrator::{
    build_run_matrix, execute_plan, AutoConfirm, CacheClearPolicy, CommandExecutor, Executor,
    FrequencyController, HookGate, MockExecutor, NonInteractive, PlanRequest, PromptGate, RunPlan,
    SchemeGate, SysfsConfig, CPUFREQ_ROOT_ENV,
};
use freqimpact::report::{
    aggregate, attach_utilization, baseline_utilization, build_report, emit_plot_data,
    from_envelope_json, parse_runs_str, parse_utilization_csv, read_envelope, render_report,
    to_envelope_json, write_runs_csv, write_runs_json, InputFormat, PlotGrouping, ReportDocument,
    ReportError, ReportFormat, ReportOptions, KIND_DESIGN, KIND_PLAN, KIND_PLOT, KIND_REPORT,
    KIND_SCALE_FIT, KIND_WORKLOAD,
};
use freqimpact::simulator::{
    fit_scale_model, gen_random_workload, predict_rt, simulate_records, GenParams, NoiseSource,
    Observation, ScaleFit, WorkloadModel,
};

const EXIT_VALIDATION: u8 = 1;
const EXIT_INCOMPLETE: u8 = 2;
const EXIT_EXECUTION: u8 = 3;

/// Measure and rank how much CPU, memory, disk and network speed matter to a workload.
#[derive(Parser)]
#[command(name = "freqimpact", version)]
struct Cli {
    /// Config file (TOML or JSON). Command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a design into an ordered run plan.
    Plan(PlanArgs),
    /// Execute a run plan and record wall-clock runtimes.
    Run(RunArgs),
    /// Validate run-record files against a design and merge them into one record store.
    Ingest(IngestArgs),
    /// Aggregate records and compute indicators, rankings and diagnoses.
    Compute(ComputeArgs),
    /// Produce synthetic run records from a workload model.
    Simulate(SimulateArgs),
    /// Fit the data-scale/cluster-size runtime model and predict with it.
    Fit(FitArgs),
    /// Render a computed report or its plot data.
    Report(ReportArgs),
}

#[derive(Args)]
struct DesignArg {
    /// Experiment design (JSON envelope, bare JSON or TOML).
    #[arg(long)]
    design: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    design: DesignArg,
    /// Workload ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    workloads: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    modes: Vec<Mode>,
    #[arg(long, value_delimiter = ',')]
    indicators: Vec<Indicator>,
    #[arg(long, value_enum)]
    cache_clear: Option<CacheClearArg>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum CacheClearArg {
    PerGroup,
    PerReplicate,
}

impl From<CacheClearArg> for CacheClearPolicy {
    fn from(c: CacheClearArg) -> Self {
        match c {
            CacheClearArg::PerGroup => CacheClearPolicy::PerGroup,
            CacheClearArg::PerReplicate => CacheClearPolicy::PerReplicate,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum GateArg {
    /// Stop at every hardware change.
    NonInteractive,
    /// Assume every hardware change is already in place.
    Auto,
    /// Ask on the terminal.
    Prompt,
    /// Run the configured hook command.
    Hook,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum FreqBackendArg {
    Sysfs,
    Mock,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Step index to resume from.
    #[arg(long, default_value_t = 0)]
    resume: usize,
    #[arg(long, value_enum)]
    gate: Option<GateArg>,
    /// Command template run at each hardware change with `--gate hook`.
    #[arg(long)]
    hook: Option<String>,
    #[arg(long, value_enum)]
    freq_backend: Option<FreqBackendArg>,
    /// Frequencies (GHz) the CPU supports, when the driver does not list them.
    #[arg(long, value_delimiter = ',')]
    available_freqs: Vec<f64>,
    /// Pretend every run takes this many seconds instead of executing commands.
    #[arg(long)]
    mock_runtime: Option<f64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    design: DesignArg,
    /// Run-record files (CSV or JSON).
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Utilization CSV keyed like the run records.
    #[arg(long)]
    utilization: Option<PathBuf>,
    /// Force the input format instead of guessing from the extension.
    #[arg(long)]
    format: Option<InputFormat>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ComputeArgs {
    #[command(flatten)]
    design: DesignArg,
    /// Record store written by `ingest`, or any run-record file.
    #[arg(long)]
    records: PathBuf,
    /// Indicators that must be computable; missing cells for them fail the command.
    #[arg(long, value_delimiter = ',')]
    require: Vec<Indicator>,
    /// Output format.
    #[arg(long)]
    format: Option<ReportFormat>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    design: DesignArg,
    /// Workload model document. Without it a random workload is generated from `--seed`.
    #[arg(long)]
    workload: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Relative standard deviation of multiplicative runtime noise.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Also write the workload model used.
    #[arg(long)]
    emit_workload: Option<PathBuf>,
    /// Records file; `.json` selects the JSON format, anything else CSV.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with header `scale,machines,rt`.
    #[arg(long)]
    observations: PathBuf,
    /// Predict at `SCALE:MACHINES`; repeatable.
    #[arg(long)]
    predict: Vec<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report document written by `compute --format json`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    format: Option<ReportFormat>,
    /// Emit plot series with this grouping instead of the report.
    #[arg(long)]
    plot: Option<PlotGrouping>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Config file contents. Every field is optional; flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    design_file: Option<PathBuf>,
    design: Option<ExperimentDesign>,
    workloads: Vec<String>,
    modes: Vec<Mode>,
    indicators: Vec<Indicator>,
    cache_clear: Option<CacheClearArg>,
    required: Vec<Indicator>,
    thresholds: Option<Thresholds>,
    format: Option<ReportFormat>,
    /// Shell command template per workload id.
    commands: BTreeMap<String, String>,
    cache_drop_command: Option<String>,
    gate: Option<GateArg>,
    hook: Option<String>,
    freq_backend: Option<FreqBackendArg>,
    available_freqs: Vec<f64>,
    seed: Option<u64>,
    noise: Option<f64>,
    noise_seed: Option<u64>,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    fn execution(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_EXECUTION,
            message: message.into(),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        let code = match e {
            ReportError::Incomplete(IndicatorError::IncompleteMatrix { .. }) => EXIT_INCOMPLETE,
            _ => EXIT_VALIDATION,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn write_out(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::execution(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn load_config(path: Option<&Path>) -> CliResult<Config> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = read(path)?;
    let cfg: Config = if is_json(path) {
        serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
    };
    Ok(cfg)
}

fn load_design(path: &Path) -> CliResult<ExperimentDesign> {
    let text = read(path)?;
    let source = path.display().to_string();
    if is_json(path) || text.trim_start().starts_with('{') {
        if text.contains("\"format\"") {
            return Ok(from_envelope_json(&text, KIND_DESIGN, &source)?);
        }
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{source}: {e}")))
    } else {
        toml::from_str(&text).map_err(|e| CliError::validation(format!("{source}: {e}")))
    }
}

/// Design from the flag, else the config's file, else the config's inline table. Always validated.
fn resolve_design(arg: &DesignArg, cfg: &Config) -> CliResult<ExperimentDesign> {
    let design = match (&arg.design, &cfg.design_file, &cfg.design) {
        (Some(p), _, _) | (None, Some(p), _) => load_design(p)?,
        (None, None, Some(d)) => d.clone(),
        (None, None, None) => {
            return Err(CliError::validation(
                "no design given (use --design or the config file)",
            ))
        }
    };
    let violations = validate_design(&design);
    if !violations.is_empty() {
        let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(CliError::validation(format!(
            "invalid design: {}",
            msgs.join("; ")
        )));
    }
    Ok(design)
}

fn pick<T: Clone>(flag: &[T], cfg: &[T], default: impl FnOnce() -> Vec<T>) -> Vec<T> {
    if !flag.is_empty() {
        flag.to_vec()
    } else if !cfg.is_empty() {
        cfg.to_vec()
    } else {
        default()
    }
}

fn cmd_plan(a: &PlanArgs, cfg: &Config) -> CliResult<()> {
    let design = resolve_design(&a.design, cfg)?;
    let req = PlanRequest {
        workloads: pick(&a.workloads, &cfg.workloads, Vec::new),
        modes: pick(&a.modes, &cfg.modes, || design.modes.clone()),
        indicators: pick(&a.indicators, &cfg.indicators, || Indicator::ALL.to_vec()),
        cache_clear: a
            .cache_clear
            .or(cfg.cache_clear)
            .map(Into::into)
            .unwrap_or_default(),
    };
    if req.workloads.is_empty() {
        log::warn!("no workloads given; the plan is empty");
    }
    let plan = build_run_matrix(&design, &req).map_err(|v| {
        CliError::validation(format!(
            "invalid design: {}",
            v.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ")
        ))
    })?;
    let c = plan.counts();
    eprintln!(
        "plan: {} steps, {} measured runs, {} warmups, {} cache drops, {} hardware changes",
        plan.steps.len(),
        c.measured,
        c.warmups,
        c.cache_clears,
        c.annotations
    );
    write_out(a.output.as_deref(), &to_envelope_json(KIND_PLAN, &plan))
}

fn cmd_run(a: &RunArgs, cfg: &Config) -> CliResult<()> {
    let plan: RunPlan = read_envelope(&a.plan, KIND_PLAN)?;
    if a.resume > plan.steps.len() {
        return Err(CliError::validation(format!(
            "resume index {} beyond the plan's {} steps",
            a.resume,
            plan.steps.len()
        )));
    }
    let plan_freqs = || {
        let mut f: Vec<f64> = plan.steps.iter().map(|s| s.scheme().cpu_freq).collect();
        f.sort_by(f64::total_cmp);
        f.dedup();
        f
    };
    let available = pick(&a.available_freqs, &cfg.available_freqs, Vec::new);
    let backend = a
        .freq_backend
        .or(cfg.freq_backend)
        .unwrap_or(FreqBackendArg::Sysfs);
    let mut controller = match backend {
        FreqBackendArg::Mock => FrequencyController::mock(if available.is_empty() {
            plan_freqs()
        } else {
            available
        }),
        FreqBackendArg::Sysfs => {
            let sys = SysfsConfig::from_env();
            log::info!(
                "cpufreq root {} (override with {CPUFREQ_ROOT_ENV})",
                sys.root.display()
            );
            FrequencyController::sysfs(sys, (!available.is_empty()).then_some(available))
                .map_err(|e| CliError::execution(e.to_string()))?
        }
    };

    let mut executor: Box<dyn Executor> = match a.mock_runtime {
        Some(t) => {
            let mut mock = MockExecutor::default();
            mock.fallback = Some(t);
            Box::new(mock)
        }
        None => {
            if cfg.commands.is_empty() {
                return Err(CliError::validation(
                    "no workload commands configured (config `commands` table)",
                ));
            }
            let mut ex = CommandExecutor::new(cfg.commands.clone());
            if let Some(c) = &cfg.cache_drop_command {
                ex.cache_drop_command = c.clone();
            }
            Box::new(ex)
        }
    };

    let gate_kind = a
        .gate
        .or(cfg.gate)
        .unwrap_or(if std::io::stdin().is_terminal() {
            GateArg::Prompt
        } else {
            GateArg::NonInteractive
        });
    let mut gate: Box<dyn SchemeGate> = match gate_kind {
        GateArg::NonInteractive => Box::new(NonInteractive),
        GateArg::Auto => Box::new(AutoConfirm),
        GateArg::Prompt => Box::new(PromptGate::new(std::io::stdin().lock(), std::io::stderr())),
        GateArg::Hook => {
            let command = a.hook.clone().or_else(|| cfg.hook.clone()).ok_or_else(|| {
                CliError::validation("--gate hook needs a hook command (--hook or config `hook`)")
            })?;
            Box::new(HookGate { command })
        }
    };

    let report = execute_plan(
        &plan,
        executor.as_mut(),
        &mut controller,
        gate.as_mut(),
        a.resume,
    );
    for entry in &report.log {
        log::info!("step {} {}: {}", entry.step, entry.action, entry.detail);
    }
    write_out(a.output.as_deref(), &write_runs_json(&report.records))?;
    match report.halted {
        None => {
            eprintln!("run complete: {} records", report.records.len());
            Ok(())
        }
        Some(h) => Err(CliError::execution(format!(
            "halted at step {}: {}; {} records written; resume with --resume {}",
            h.cursor,
            h.error,
            report.records.len(),
            h.cursor
        ))),
    }
}

fn load_records(paths: &[PathBuf], format: Option<InputFormat>) -> CliResult<Vec<RunRecord>> {
    let mut out = Vec::new();
    for p in paths {
        let text = read(p)?;
        let src = p.display().to_string();
        let fmt = format.unwrap_or_else(|| InputFormat::detect(&src, &text));
        out.extend(parse_runs_str(&text, fmt, &src)?);
    }
    Ok(out)
}

fn cmd_ingest(a: &IngestArgs, cfg: &Config) -> CliResult<()> {
    let design = resolve_design(&a.design, cfg)?;
    let mut records = load_records(&a.runs, a.format)?;
    if let Some(u) = &a.utilization {
        let src = u.display().to_string();
        let rows = parse_utilization_csv(&read(u)?, &src)?;
        attach_utilization(&mut records, &rows, &src)?;
    }
    let agg = aggregate(&records, &design)?;
    for u in &agg.under_replicated {
        log::warn!(
            "{}/{} at {}: {} of {} replicates",
            u.workload_id,
            u.mode,
            u.scheme,
            u.n_samples,
            u.expected
        );
    }
    eprintln!(
        "ingested {} records into {} cells ({} under-replicated)",
        records.len(),
        agg.matrix.len(),
        agg.under_replicated.len()
    );
    write_out(a.output.as_deref(), &write_runs_json(&records))
}

fn cmd_compute(a: &ComputeArgs, cfg: &Config) -> CliResult<()> {
    let design = resolve_design(&a.design, cfg)?;
    let records = load_records(std::slice::from_ref(&a.records), None)?;
    let agg = aggregate(&records, &design)?;
    let opts = ReportOptions {
        required: pick(&a.require, &cfg.required, Vec::new),
        thresholds: cfg.thresholds.unwrap_or_default(),
        utilization: baseline_utilization(&records, &design),
    };
    let doc = build_report(&agg.matrix, &design, &opts)?;
    let format = a.format.or(cfg.format).unwrap_or(ReportFormat::Json);
    write_out(a.output.as_deref(), &render_report(&doc, format))
}

fn cmd_simulate(a: &SimulateArgs, cfg: &Config) -> CliResult<()> {
    let design = resolve_design(&a.design, cfg)?;
    let workload: WorkloadModel = match &a.workload {
        Some(p) => read_envelope(p, KIND_WORKLOAD)?,
        None => {
            let seed = a.seed.or(cfg.seed).unwrap_or(0);
            gen_random_workload(seed, &GenParams::for_design(&design))
                .map_err(|e| CliError::validation(e.to_string()))?
        }
    };
    if let Some(p) = &a.emit_workload {
        write_out(Some(p), &to_envelope_json(KIND_WORKLOAD, &workload))?;
    }
    let sigma = a.noise.or(cfg.noise).unwrap_or(0.0);
    let noise_seed = a
        .noise_seed
        .or(cfg.noise_seed)
        .or(a.seed)
        .or(cfg.seed)
        .unwrap_or(0);
    let mut noise =
        NoiseSource::new(noise_seed, sigma).map_err(|e| CliError::validation(e.to_string()))?;
    let records = simulate_records(&workload, &design, &mut noise)
        .map_err(|e| CliError::validation(e.to_string()))?;
    let text = match &a.output {
        Some(p) if is_json(p) => write_runs_json(&records),
        _ => write_runs_csv(&records),
    };
    write_out(a.output.as_deref(), &text)
}

#[derive(Serialize)]
struct FitOutput {
    fit: ScaleFit,
    predictions: Vec<Prediction>,
}

#[derive(Serialize)]
struct Prediction {
    scale: f64,
    machines: f64,
    rt: f64,
}

fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let text = read(&a.observations)?;
    let src = a.observations.display().to_string();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| CliError::validation(format!("{src}: {e}")))?
        .clone();
    if header.iter().ne(["scale", "machines", "rt"]) {
        return Err(CliError::validation(format!(
            "{src}:1: header must be `scale,machines,rt`"
        )));
    }
    let mut obs = Vec::new();
    for row in rdr.deserialize::<Observation>() {
        obs.push(row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::validation(format!("{src}:{line}: {e}"))
        })?);
    }
    let fit = fit_scale_model(&obs).map_err(|e| CliError::validation(e.to_string()))?;
    let mut predictions = Vec::new();
    for p in &a.predict {
        let parsed = p
            .split_once(':')
            .and_then(|(s, m)| Some((s.trim().parse().ok()?, m.trim().parse().ok()?)));
        let Some((scale, machines)) = parsed else {
            return Err(CliError::validation(format!(
                "--predict expects SCALE:MACHINES, got `{p}`"
            )));
        };
        predictions.push(Prediction {
            scale,
            machines,
            rt: predict_rt(&fit.model, scale, machines),
        });
    }
    write_out(
        a.output.as_deref(),
        &to_envelope_json(KIND_SCALE_FIT, &FitOutput { fit, predictions }),
    )
}

fn cmd_report(a: &ReportArgs, cfg: &Config) -> CliResult<()> {
    let doc: ReportDocument = read_envelope(&a.report, KIND_REPORT)?;
    let text = match a.plot {
        Some(g) => {
            let sets: Vec<_> = doc.entries.iter().map(|e| e.indicators.clone()).collect();
            to_envelope_json(KIND_PLOT, &emit_plot_data(&sets, g))
        }
        None => render_report(&doc, a.format.or(cfg.format).unwrap_or(ReportFormat::Text)),
    };
    write_out(a.output.as_deref(), &text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = load_config(cli.config.as_deref()).and_then(|cfg| match &cli.command {
        Command::Plan(a) => cmd_plan(a, &cfg),
        Command::Run(a) => cmd_run(a, &cfg),
        Command::Ingest(a) => cmd_ingest(a, &cfg),
        Command::Compute(a) => cmd_compute(a, &cfg),
        Command::Simulate(a) => cmd_simulate(a, &cfg),
        Command::Fit(a) => cmd_fit(a),
        Command::Report(a) => cmd_report(a, &cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
