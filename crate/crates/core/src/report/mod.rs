//! File formats, aggregation of run records and report assembly.
//!
//! Every JSON document the toolkit writes shares one envelope:
//! `{"format": "freqimpact", "version": 1, "kind": <kind>, "data": <payload>}`.

mod ingest;
mod render;

pub use ingest::{
    attach_utilization, parse_runs, parse_runs_csv, parse_runs_json, parse_runs_str,
    parse_utilization_csv, write_runs_csv, write_runs_json, InputFormat, UtilizationRow,
    RUNS_HEADER, UTILIZATION_HEADER,
};
pub use render::{
    emit_plot_data, parse_indicator_csv, render_report, Bar, PlotData, PlotGrouping, PlotSeries,
    ReportFormat, INDICATOR_CSV_HEADER,
};

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnosis::{diagnose, DiagnosisReport, Thresholds};
use crate::indicators::{
    compute_all, rank_bottleneck, Flag, IndicatorError, IndicatorSet, Ranking,
};
use crate::model::{
    required_cells, validate_design, ExperimentDesign, Indicator, Mode, ResourceScheme, RunRecord,
    RuntimeMatrix, UtilizationSummary, Violation,
};

pub const FORMAT_NAME: &str = "freqimpact";
pub const FORMAT_VERSION: u32 = 1;

pub const KIND_DESIGN: &str = "design";
pub const KIND_PLAN: &str = "plan";
pub const KIND_RECORDS: &str = "records";
pub const KIND_REPORT: &str = "report";
pub const KIND_WORKLOAD: &str = "workload";
pub const KIND_PLOT: &str = "plot";
pub const KIND_SCALE_FIT: &str = "scale-fit";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("{location}: {message}")]
    Parse { location: String, message: String },
    #[error("invalid design: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidDesign(Vec<Violation>),
    #[error("{} record(s) match no design cell: {}", .0.len(), .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Unmatched(Vec<UnmatchedRecord>),
    #[error(transparent)]
    Incomplete(#[from] IndicatorError),
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmatchedRecord {
    /// 1-based position in the record list.
    pub index: usize,
    pub workload_id: String,
    pub mode: Mode,
    pub scheme: ResourceScheme,
}

impl std::fmt::Display for UnmatchedRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "#{} {}/{} at {}",
            self.index, self.workload_id, self.mode, self.scheme
        )
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, ReportError> {
    std::fs::read_to_string(path).map_err(|e| ReportError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T: Serialize> {
    format: &'a str,
    version: u32,
    kind: &'a str,
    data: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    format: String,
    version: u32,
    kind: String,
    data: serde_json::Value,
}

/// Pretty-printed envelope with a trailing newline. Byte-stable for equal input.
pub fn to_envelope_json<T: Serialize>(kind: &str, data: &T) -> String {
    let env = EnvelopeOut {
        format: FORMAT_NAME,
        version: FORMAT_VERSION,
        kind,
        data,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("toolkit types serialize infallibly");
    s.push('\n');
    s
}

/// Unwrap an envelope of the expected kind.
pub fn from_envelope_json<T: DeserializeOwned>(
    text: &str,
    kind: &str,
    source: &str,
) -> Result<T, ReportError> {
    let json_err = |e: serde_json::Error| ReportError::Parse {
        location: format!("{source}:{}", e.line()),
        message: e.to_string(),
    };
    let env: EnvelopeIn = serde_json::from_str(text).map_err(json_err)?;
    let fail = |message: String| ReportError::Parse {
        location: source.to_string(),
        message,
    };
    if env.format != FORMAT_NAME {
        return Err(fail(format!(
            "not a {FORMAT_NAME} document (format `{}`)",
            env.format
        )));
    }
    if env.version != FORMAT_VERSION {
        return Err(fail(format!(
            "unsupported document version {}",
            env.version
        )));
    }
    if env.kind != kind {
        return Err(fail(format!(
            "expected a `{kind}` document, found `{}`",
            env.kind
        )));
    }
    serde_json::from_value(env.data).map_err(|e| fail(format!("invalid `{kind}` payload: {e}")))
}

/// Read and unwrap an envelope file.
pub fn read_envelope<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T, ReportError> {
    from_envelope_json(&read_file(path)?, kind, &path.display().to_string())
}

/// A design cell that holds fewer samples than the design's replicate count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnderReplicated {
    pub workload_id: String,
    pub mode: Mode,
    pub scheme: ResourceScheme,
    pub n_samples: usize,
    pub expected: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub matrix: RuntimeMatrix,
    pub under_replicated: Vec<UnderReplicated>,
}

/// Average measured records into a matrix keyed by canonical design schemes.
///
/// Every record, warmups included, must match a design cell (frequencies and bandwidths within
/// the usual relative tolerance) in one of the design's modes.
pub fn aggregate(
    records: &[RunRecord],
    design: &ExperimentDesign,
) -> Result<Aggregation, ReportError> {
    let schemes = design.all_schemes();
    let mut matrix = RuntimeMatrix::new();
    let mut unmatched = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let canonical = schemes.iter().find(|s| s.matches(&r.scheme));
        match canonical {
            Some(s) if design.modes.contains(&r.mode) => {
                let snapped = RunRecord {
                    scheme: s.clone(),
                    ..r.clone()
                };
                matrix.add_sample(&snapped);
            }
            _ => unmatched.push(UnmatchedRecord {
                index: i + 1,
                workload_id: r.workload_id.clone(),
                mode: r.mode,
                scheme: r.scheme.clone(),
            }),
        }
    }
    if !unmatched.is_empty() {
        return Err(ReportError::Unmatched(unmatched));
    }
    let under_replicated = matrix
        .cells()
        .filter(|c| c.stats.n_samples < design.replicates as usize)
        .map(|c| UnderReplicated {
            workload_id: c.workload_id,
            mode: c.mode,
            scheme: c.scheme,
            n_samples: c.stats.n_samples,
            expected: design.replicates,
        })
        .collect();
    Ok(Aggregation {
        matrix,
        under_replicated,
    })
}

/// Mean utilization per (workload, mode) over measured runs at the baseline scheme.
pub fn baseline_utilization(
    records: &[RunRecord],
    design: &ExperimentDesign,
) -> BTreeMap<(String, Mode), UtilizationSummary> {
    let mut acc: BTreeMap<(String, Mode), ([f64; 3], usize)> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| !r.warmup && r.scheme.matches(&design.baseline))
    {
        if let Some(u) = &r.utilization {
            let e = acc
                .entry((r.workload_id.clone(), r.mode))
                .or_insert(([0.0; 3], 0));
            e.0[0] += u.cpu_util_pct;
            e.0[1] += u.disk_bw_util_pct;
            e.0[2] += u.net_bw_util_pct;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(k, (s, n))| {
            let n = n as f64;
            (
                k,
                UtilizationSummary {
                    cpu_util_pct: s[0] / n,
                    disk_bw_util_pct: s[1] / n,
                    net_bw_util_pct: s[2] / n,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Complete,
    UnderReplicated,
    Missing,
}

/// One required matrix cell behind an entry's indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub scheme: ResourceScheme,
    pub state: CellState,
    pub mean_runtime_s: Option<f64>,
    pub stddev_s: Option<f64>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub indicators: IndicatorSet,
    /// Absent only when no indicator could be computed.
    pub ranking: Option<Ranking>,
    pub diagnosis: DiagnosisReport,
    pub cells: Vec<CellStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagLegend {
    pub flag: Flag,
    pub meaning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub design: ExperimentDesign,
    /// Column order of the indicator table.
    pub workloads: Vec<String>,
    pub entries: Vec<ReportEntry>,
    pub flags_legend: Vec<FlagLegend>,
}

impl ReportDocument {
    pub fn entry(&self, workload_id: &str, mode: Mode) -> Option<&ReportEntry> {
        self.entries
            .iter()
            .find(|e| e.indicators.workload_id == workload_id && e.indicators.mode == mode)
    }

    /// Mean of the present values of one indicator across workloads, for one mode.
    pub fn average(&self, ind: Indicator, mode: Mode) -> Option<f64> {
        let vals: Vec<f64> = self
            .entries
            .iter()
            .filter(|e| e.indicators.mode == mode)
            .filter_map(|e| e.indicators.get(ind))
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

/// Options for [`build_report`].
#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    /// Indicators whose absence is an error rather than a flag.
    pub required: Vec<Indicator>,
    pub thresholds: Thresholds,
    pub utilization: BTreeMap<(String, Mode), UtilizationSummary>,
}

/// Compute indicators, ranking and diagnosis for every (workload, mode) in the matrix.
pub fn build_report(
    matrix: &RuntimeMatrix,
    design: &ExperimentDesign,
    opts: &ReportOptions,
) -> Result<ReportDocument, ReportError> {
    let violations = validate_design(design);
    if !violations.is_empty() {
        return Err(ReportError::InvalidDesign(violations));
    }
    let required = required_cells(design, &Indicator::ALL);
    let mut workloads: Vec<String> = Vec::new();
    let mut entries = Vec::new();
    for (workload_id, mode) in matrix.groups() {
        if workloads.last().map(String::as_str) != Some(workload_id) {
            workloads.push(workload_id.to_string());
        }
        let indicators = compute_all(matrix, design, workload_id, mode, &opts.required)?;
        let ranking = rank_bottleneck(&indicators).ok();
        let diagnosis = diagnose(
            &indicators,
            opts.utilization.get(&(workload_id.to_string(), mode)),
            &opts.thresholds,
        );
        let cells = required
            .iter()
            .filter(|c| c.mode == mode)
            .map(|c| match matrix.get(workload_id, mode, &c.scheme) {
                Some(st) => CellStatus {
                    scheme: c.scheme.clone(),
                    state: if st.n_samples < design.replicates as usize {
                        CellState::UnderReplicated
                    } else {
                        CellState::Complete
                    },
                    mean_runtime_s: Some(st.mean_runtime_s),
                    stddev_s: Some(st.stddev_s),
                    n_samples: st.n_samples,
                },
                None => CellStatus {
                    scheme: c.scheme.clone(),
                    state: CellState::Missing,
                    mean_runtime_s: None,
                    stddev_s: None,
                    n_samples: 0,
                },
            })
            .collect();
        entries.push(ReportEntry {
            indicators,
            ranking,
            diagnosis,
            cells,
        });
    }
    Ok(ReportDocument {
        design: design.clone(),
        workloads,
        entries,
        flags_legend: Flag::ALL
            .iter()
            .map(|&flag| FlagLegend {
                flag,
                meaning: flag.describe().into(),
            })
            .collect(),
    })
}
