use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};
use std::process::Command;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::freq::{FrequencyController, FrequencyError};
use super::{PlanStep, RunPlan};
use crate::model::{Mode, ResourceScheme, RunRecord};

pub const DEFAULT_CACHE_DROP_COMMAND: &str = "sync && echo 3 > /proc/sys/vm/drop_caches";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("command `{command}` exited with {status}: {output}")]
    StepFailed {
        command: String,
        status: String,
        output: String,
    },
    #[error("no command template for workload `{0}`")]
    NoTemplate(String),
    #[error("frequency change failed: {0}")]
    Frequency(#[from] FrequencyError),
    #[error("hardware change to {scheme} needs operator confirmation")]
    PauseRequired { scheme: ResourceScheme },
    #[error("cache drop failed, run is tainted: {0}")]
    Tainted(String),
    #[error("executor failure: {0}")]
    Other(String),
}

/// One workload execution request.
#[derive(Debug, Clone, Copy)]
pub struct Invocation<'a> {
    pub workload_id: &'a str,
    pub mode: Mode,
    pub scheme: &'a ResourceScheme,
    pub replicate: u32,
    pub warmup: bool,
}

pub trait Executor {
    /// Run the workload to completion and return its wall-clock duration in seconds.
    fn run(&mut self, inv: &Invocation<'_>) -> Result<f64, ExecError>;

    /// Drop the OS page cache.
    fn clear_cache(&mut self) -> Result<(), ExecError>;
}

/// Confirms operator-performed hardware changes.
pub trait SchemeGate {
    fn confirm(&mut self, scheme: &ResourceScheme) -> Result<(), ExecError>;
}

/// Refuses every hardware change; for unattended sessions.
#[derive(Debug, Default, Clone, Copy)]
pub struct NonInteractive;

impl SchemeGate for NonInteractive {
    fn confirm(&mut self, scheme: &ResourceScheme) -> Result<(), ExecError> {
        Err(ExecError::PauseRequired {
            scheme: scheme.clone(),
        })
    }
}

/// Accepts every hardware change (the operator has pre-arranged it).
#[derive(Debug, Default, Clone, Copy)]
pub struct AutoConfirm;

impl SchemeGate for AutoConfirm {
    fn confirm(&mut self, _: &ResourceScheme) -> Result<(), ExecError> {
        Ok(())
    }
}

/// Asks on a terminal. An empty line or "y" confirms; anything else, or EOF, refuses.
pub struct PromptGate<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> PromptGate<R, W> {
    pub fn new(input: R, output: W) -> Self {
        PromptGate { input, output }
    }
}

impl<R: BufRead, W: Write> SchemeGate for PromptGate<R, W> {
    fn confirm(&mut self, scheme: &ResourceScheme) -> Result<(), ExecError> {
        let refuse = || ExecError::PauseRequired {
            scheme: scheme.clone(),
        };
        write!(
            self.output,
            "Reconfigure the cluster to disk `{}` and {} Gbps network, then press Enter (or type n to stop): ",
            scheme.disk_tier, scheme.network_bw
        )
        .and_then(|_| self.output.flush())
        .map_err(|e| ExecError::Other(e.to_string()))?;
        let mut line = String::new();
        match self.input.read_line(&mut line) {
            Ok(0) | Err(_) => Err(refuse()),
            Ok(_) => match line.trim().to_ascii_lowercase().as_str() {
                "" | "y" | "yes" => Ok(()),
                _ => Err(refuse()),
            },
        }
    }
}

/// Runs a user hook (for instance a `tc` bandwidth limit) for each hardware change.
/// The hook is a command template with the same placeholders as workload commands.
pub struct HookGate {
    pub command: String,
}

impl SchemeGate for HookGate {
    fn confirm(&mut self, scheme: &ResourceScheme) -> Result<(), ExecError> {
        let inv = Invocation {
            workload_id: "",
            mode: Mode::Disk,
            scheme,
            replicate: 0,
            warmup: false,
        };
        run_shell(&render_template(&self.command, &inv)).map(|_| ())
    }
}

/// Substitute `{workload_id}`, `{mode}`, `{replicate}` and `{scheme.*}` placeholders.
pub fn render_template(template: &str, inv: &Invocation<'_>) -> String {
    template
        .replace("{workload_id}", inv.workload_id)
        .replace("{mode}", inv.mode.as_str())
        .replace("{replicate}", &inv.replicate.to_string())
        .replace("{scheme.cpu_freq}", &inv.scheme.cpu_freq.to_string())
        .replace("{scheme.memory_tier}", &inv.scheme.memory_tier)
        .replace("{scheme.disk_tier}", &inv.scheme.disk_tier)
        .replace("{scheme.network_bw}", &inv.scheme.network_bw.to_string())
}

fn run_shell(command: &str) -> Result<f64, ExecError> {
    let start = Instant::now();
    let out = Command::new("sh")
        .arg("-c")
        .arg(command)
        .output()
        .map_err(|e| ExecError::Other(format!("cannot spawn `{command}`: {e}")))?;
    let elapsed = start.elapsed().as_secs_f64();
    if out.status.success() {
        Ok(elapsed)
    } else {
        let mut output = String::from_utf8_lossy(&out.stdout).into_owned();
        output.push_str(&String::from_utf8_lossy(&out.stderr));
        Err(ExecError::StepFailed {
            command: command.to_string(),
            status: out.status.to_string(),
            output: output.trim().to_string(),
        })
    }
}

/// Runs workloads as shell commands and times them with a wall clock.
#[derive(Debug, Clone)]
pub struct CommandExecutor {
    pub templates: BTreeMap<String, String>,
    pub cache_drop_command: String,
}

impl CommandExecutor {
    pub fn new(templates: BTreeMap<String, String>) -> Self {
        CommandExecutor {
            templates,
            cache_drop_command: DEFAULT_CACHE_DROP_COMMAND.into(),
        }
    }
}

impl Executor for CommandExecutor {
    fn run(&mut self, inv: &Invocation<'_>) -> Result<f64, ExecError> {
        let template = self
            .templates
            .get(inv.workload_id)
            .ok_or_else(|| ExecError::NoTemplate(inv.workload_id.into()))?;
        run_shell(&render_template(template, inv))
    }

    fn clear_cache(&mut self) -> Result<(), ExecError> {
        match run_shell(&self.cache_drop_command) {
            Ok(_) => Ok(()),
            Err(ExecError::StepFailed { output, status, .. }) => Err(ExecError::Tainted(format!(
                "`{}` exited with {status}: {output}",
                self.cache_drop_command
            ))),
            Err(e) => Err(ExecError::Tainted(e.to_string())),
        }
    }
}

/// Scripted result for one [`MockExecutor`] run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MockOutcome {
    Duration(f64),
    Fail(String),
}

/// In-memory executor returning scripted durations.
#[derive(Debug, Clone, Default)]
pub struct MockExecutor {
    script: VecDeque<MockOutcome>,
    /// Returned once the script is exhausted.
    pub fallback: Option<f64>,
    pub deny_cache_clear: bool,
    /// Every call, in order.
    pub calls: Vec<String>,
}

impl MockExecutor {
    pub fn scripted(script: impl IntoIterator<Item = MockOutcome>) -> Self {
        MockExecutor {
            script: script.into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn durations(d: impl IntoIterator<Item = f64>) -> Self {
        Self::scripted(d.into_iter().map(MockOutcome::Duration))
    }
}

impl Executor for MockExecutor {
    fn run(&mut self, inv: &Invocation<'_>) -> Result<f64, ExecError> {
        self.calls.push(format!(
            "{} {}/{} r{} @ {}",
            if inv.warmup { "warmup" } else { "run" },
            inv.workload_id,
            inv.mode,
            inv.replicate,
            inv.scheme
        ));
        match self.script.pop_front() {
            Some(MockOutcome::Duration(d)) => Ok(d),
            Some(MockOutcome::Fail(msg)) => Err(ExecError::StepFailed {
                command: format!("mock {}", inv.workload_id),
                status: "exit status: 1".into(),
                output: msg,
            }),
            None => self
                .fallback
                .ok_or_else(|| ExecError::Other("mock script exhausted".into())),
        }
    }

    fn clear_cache(&mut self) -> Result<(), ExecError> {
        self.calls.push("clear_cache".into());
        if self.deny_cache_clear {
            Err(ExecError::Tainted("permission denied".into()))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub action: String,
    pub detail: String,
}

/// Where and why execution stopped. Resume with `start_at = cursor`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halt {
    pub cursor: usize,
    pub error: ExecError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionReport {
    pub records: Vec<RunRecord>,
    pub log: Vec<LogEntry>,
    pub halted: Option<Halt>,
}

impl ExecutionReport {
    pub fn completed(&self) -> bool {
        self.halted.is_none()
    }
}

/// Drop the page cache and log it. A failure taints the run.
pub fn clear_page_cache(
    executor: &mut dyn Executor,
    log: &mut Vec<LogEntry>,
    step: usize,
) -> Result<(), ExecError> {
    executor.clear_cache()?;
    log.push(LogEntry {
        step,
        action: "clear_cache".into(),
        detail: "page cache dropped".into(),
    });
    Ok(())
}

/// Execute steps strictly in order from `start_at`, stopping at the first failure.
///
/// When resuming mid-plan, the most recent frequency and hardware configuration before
/// `start_at` are re-established first.
pub fn execute_plan(
    plan: &RunPlan,
    executor: &mut dyn Executor,
    controller: &mut FrequencyController,
    gate: &mut dyn SchemeGate,
    start_at: usize,
) -> ExecutionReport {
    let mut report = ExecutionReport {
        records: Vec::new(),
        log: Vec::new(),
        halted: None,
    };
    let halt = |report: &mut ExecutionReport, cursor: usize, error: ExecError| {
        report.log.push(LogEntry {
            step: cursor,
            action: "halt".into(),
            detail: error.to_string(),
        });
        report.halted = Some(Halt { cursor, error });
    };

    if start_at > 0 {
        let prior = &plan.steps[..start_at.min(plan.steps.len())];
        let last_annotation = prior
            .iter()
            .rposition(|s| matches!(s, PlanStep::AnnotateScheme { .. }));
        let last_freq = prior
            .iter()
            .rposition(|s| matches!(s, PlanStep::SetFrequency { .. }));
        for idx in [last_annotation, last_freq].into_iter().flatten() {
            if let Err(e) = run_step(
                idx,
                &plan.steps[idx],
                executor,
                controller,
                gate,
                &mut report,
            ) {
                halt(&mut report, start_at, e);
                return report;
            }
        }
    }

    for (idx, step) in plan.steps.iter().enumerate().skip(start_at) {
        if let Err(e) = run_step(idx, step, executor, controller, gate, &mut report) {
            halt(&mut report, idx, e);
            return report;
        }
    }
    report
}

fn run_step(
    idx: usize,
    step: &PlanStep,
    executor: &mut dyn Executor,
    controller: &mut FrequencyController,
    gate: &mut dyn SchemeGate,
    report: &mut ExecutionReport,
) -> Result<(), ExecError> {
    let log = |report: &mut ExecutionReport, detail: String| {
        report.log.push(LogEntry {
            step: idx,
            action: step.action().into(),
            detail,
        });
    };
    match step {
        PlanStep::SetFrequency { scheme } => {
            let ack = controller.set(scheme.cpu_freq)?;
            log(
                report,
                format!(
                    "{} GHz{}",
                    ack.freq,
                    if ack.changed { "" } else { " (unchanged)" }
                ),
            );
        }
        PlanStep::AnnotateScheme { scheme } => {
            gate.confirm(scheme)?;
            log(report, format!("confirmed {}", scheme));
        }
        PlanStep::ClearCache { .. } => clear_page_cache(executor, &mut report.log, idx)?,
        PlanStep::WarmupRun {
            scheme,
            workload_id,
            mode,
            replicate,
        }
        | PlanStep::RunWorkload {
            scheme,
            workload_id,
            mode,
            replicate,
        } => {
            let warmup = matches!(step, PlanStep::WarmupRun { .. });
            let inv = Invocation {
                workload_id,
                mode: *mode,
                scheme,
                replicate: *replicate,
                warmup,
            };
            let runtime_s = executor.run(&inv)?;
            if !(runtime_s > 0.0) {
                return Err(ExecError::Other(format!(
                    "non-positive runtime {runtime_s} s"
                )));
            }
            log(
                report,
                format!("{workload_id}/{mode} r{replicate}: {runtime_s:.3} s"),
            );
            report.records.push(RunRecord {
                workload_id: workload_id.clone(),
                mode: *mode,
                scheme: scheme.clone(),
                replicate: *replicate,
                runtime_s,
                utilization: None,
                warmup,
            });
        }
    }
    Ok(())
}
