//! Experiment plans and their sequential execution.
//!
//! A plan walks the hardware configurations one at a time (so the operator swaps disks or
//! reconfigures the network as few times as possible), raises the CPU frequency step by step
//! within each, and runs every workload/mode/replicate there. Memory-mode runs are preceded by an
//! uncounted warmup run that fills the cache, and the page cache is dropped after each
//! measurement group.

mod exec;
mod freq;

pub use exec::{
    clear_page_cache, execute_plan, render_template, AutoConfirm, CommandExecutor, ExecError,
    ExecutionReport, Executor, Halt, HookGate, Invocation, LogEntry, MockExecutor, MockOutcome,
    NonInteractive, PromptGate, SchemeGate, DEFAULT_CACHE_DROP_COMMAND,
};
pub use freq::{
    set_cpu_frequency, Backend, FreqAck, FrequencyController, FrequencyError, SysfsConfig,
    CPUFREQ_ROOT_ENV, DEFAULT_CPUFREQ_ROOT,
};

use serde::{Deserialize, Serialize};

use crate::model::{validate_design, ExperimentDesign, Indicator, Mode, ResourceScheme, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum PlanStep {
    SetFrequency {
        scheme: ResourceScheme,
    },
    /// Hardware change performed by the operator; execution pauses for confirmation.
    AnnotateScheme {
        scheme: ResourceScheme,
    },
    ClearCache {
        scheme: ResourceScheme,
        workload_id: String,
        mode: Mode,
    },
    WarmupRun {
        scheme: ResourceScheme,
        workload_id: String,
        mode: Mode,
        replicate: u32,
    },
    RunWorkload {
        scheme: ResourceScheme,
        workload_id: String,
        mode: Mode,
        replicate: u32,
    },
}

impl PlanStep {
    pub fn action(&self) -> &'static str {
        match self {
            PlanStep::SetFrequency { .. } => "set_frequency",
            PlanStep::AnnotateScheme { .. } => "annotate_scheme",
            PlanStep::ClearCache { .. } => "clear_cache",
            PlanStep::WarmupRun { .. } => "warmup_run",
            PlanStep::RunWorkload { .. } => "run_workload",
        }
    }

    pub fn scheme(&self) -> &ResourceScheme {
        match self {
            PlanStep::SetFrequency { scheme }
            | PlanStep::AnnotateScheme { scheme }
            | PlanStep::ClearCache { scheme, .. }
            | PlanStep::WarmupRun { scheme, .. }
            | PlanStep::RunWorkload { scheme, .. } => scheme,
        }
    }
}

/// When the page cache is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheClearPolicy {
    /// After all replicates of a (workload, scheme, mode) group.
    #[default]
    PerGroup,
    /// After every replicate.
    PerReplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub workloads: Vec<String>,
    pub modes: Vec<Mode>,
    pub indicators: Vec<Indicator>,
    #[serde(default)]
    pub cache_clear: CacheClearPolicy,
}

impl PlanRequest {
    /// All four indicators in every mode of the design.
    pub fn full(design: &ExperimentDesign, workloads: Vec<String>) -> Self {
        PlanRequest {
            workloads,
            modes: design.modes.clone(),
            indicators: Indicator::ALL.to_vec(),
            cache_clear: CacheClearPolicy::PerGroup,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub steps: Vec<PlanStep>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanCounts {
    pub measured: usize,
    pub warmups: usize,
    pub cache_clears: usize,
    pub frequency_sets: usize,
    pub annotations: usize,
}

impl RunPlan {
    pub fn counts(&self) -> PlanCounts {
        let mut c = PlanCounts::default();
        for s in &self.steps {
            match s {
                PlanStep::SetFrequency { .. } => c.frequency_sets += 1,
                PlanStep::AnnotateScheme { .. } => c.annotations += 1,
                PlanStep::ClearCache { .. } => c.cache_clears += 1,
                PlanStep::WarmupRun { .. } => c.warmups += 1,
                PlanStep::RunWorkload { .. } => c.measured += 1,
            }
        }
        c
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Build the ordered plan: I/O configuration, then ascending frequency, then workload, mode and
/// replicate.
pub fn build_run_matrix(
    design: &ExperimentDesign,
    req: &PlanRequest,
) -> Result<RunPlan, Vec<Violation>> {
    let violations = validate_design(design);
    if !violations.is_empty() {
        return Err(violations);
    }
    let mut steps = Vec::new();
    if req.workloads.is_empty() || req.modes.is_empty() {
        return Ok(RunPlan { steps });
    }
    let base = design.baseline_variant();
    for variant in design.io_variants(&req.indicators) {
        let config = ResourceScheme {
            cpu_freq: design.baseline.cpu_freq,
            memory_tier: design.baseline.memory_tier.clone(),
            disk_tier: variant.disk_tier.clone(),
            network_bw: variant.network_bw,
        };
        if !variant.matches(&base) {
            steps.push(PlanStep::AnnotateScheme {
                scheme: config.clone(),
            });
        }
        for f in design.frequencies() {
            let scheme = config.at_freq(f);
            steps.push(PlanStep::SetFrequency {
                scheme: scheme.clone(),
            });
            for w in &req.workloads {
                for &mode in &req.modes {
                    let clear = || PlanStep::ClearCache {
                        scheme: scheme.clone(),
                        workload_id: w.clone(),
                        mode,
                    };
                    for rep in 1..=design.replicates {
                        if mode == Mode::Memory {
                            steps.push(PlanStep::WarmupRun {
                                scheme: scheme.clone(),
                                workload_id: w.clone(),
                                mode,
                                replicate: rep,
                            });
                        }
                        steps.push(PlanStep::RunWorkload {
                            scheme: scheme.clone(),
                            workload_id: w.clone(),
                            mode,
                            replicate: rep,
                        });
                        if req.cache_clear == CacheClearPolicy::PerReplicate {
                            steps.push(clear());
                        }
                    }
                    if req.cache_clear == CacheClearPolicy::PerGroup {
                        steps.push(clear());
                    }
                }
            }
        }
    }
    Ok(RunPlan { steps })
}
