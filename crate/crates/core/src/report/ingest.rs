//! Run-record and utilization file formats.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{from_envelope_json, to_envelope_json, ReportError, KIND_RECORDS};
use crate::model::{Mode, ResourceScheme, RunRecord, UtilizationSummary};

/// Exact header of a run-record CSV file.
pub const RUNS_HEADER: [&str; 9] = [
    "workload",
    "mode",
    "cpu_freq_ghz",
    "memory_tier",
    "disk_tier",
    "network_gbps",
    "replicate",
    "runtime_s",
    "warmup",
];

/// Exact header of a utilization CSV file.
pub const UTILIZATION_HEADER: [&str; 10] = [
    "workload",
    "mode",
    "cpu_freq_ghz",
    "memory_tier",
    "disk_tier",
    "network_gbps",
    "replicate",
    "cpu_util_pct",
    "disk_bw_util_pct",
    "net_bw_util_pct",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Json,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(InputFormat::Csv),
            "json" => Ok(InputFormat::Json),
            other => Err(format!(
                "unknown input format `{other}` (expected csv or json)"
            )),
        }
    }
}

impl InputFormat {
    /// Guess from the file extension, falling back to the first non-blank character.
    pub fn detect(path: &str, text: &str) -> Self {
        let lower = path.to_ascii_lowercase();
        if lower.ends_with(".json") {
            InputFormat::Json
        } else if lower.ends_with(".csv") {
            InputFormat::Csv
        } else if matches!(text.trim_start().chars().next(), Some('{' | '[')) {
            InputFormat::Json
        } else {
            InputFormat::Csv
        }
    }
}

fn parse_err(
    source: &str,
    line: u64,
    field: Option<&str>,
    message: impl Into<String>,
) -> ReportError {
    let location = match field {
        Some(f) => format!("{source}:{line} field `{f}`"),
        None => format!("{source}:{line}"),
    };
    ReportError::Parse {
        location,
        message: message.into(),
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes())
}

fn check_header(
    rdr: &mut csv::Reader<&[u8]>,
    expected: &[&str],
    source: &str,
) -> Result<(), ReportError> {
    let header = rdr
        .headers()
        .map_err(|e| parse_err(source, 1, None, e.to_string()))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(parse_err(
            source,
            1,
            None,
            format!(
                "header must be `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

/// Typed field access for one CSV row, with errors naming the row and column.
struct Row<'a> {
    rec: &'a csv::StringRecord,
    header: &'a [&'a str],
    source: &'a str,
    line: u64,
}

impl Row<'_> {
    fn raw(&self, idx: usize) -> &str {
        self.rec.get(idx).unwrap_or("").trim()
    }

    fn parse<T: FromStr>(&self, idx: usize) -> Result<T, ReportError>
    where
        T::Err: ToString,
    {
        let raw = self.raw(idx);
        raw.parse::<T>().map_err(|e| {
            let detail = e.to_string();
            parse_err(
                self.source,
                self.line,
                Some(self.header[idx]),
                format!("cannot parse `{raw}`: {detail}"),
            )
        })
    }

    fn text(&self, idx: usize) -> Result<String, ReportError> {
        let raw = self.raw(idx);
        if raw.is_empty() {
            return Err(parse_err(
                self.source,
                self.line,
                Some(self.header[idx]),
                "empty value",
            ));
        }
        Ok(raw.to_string())
    }

    fn key(&self) -> Result<(String, Mode, ResourceScheme, u32), ReportError> {
        let scheme = ResourceScheme {
            cpu_freq: self.parse(2)?,
            memory_tier: self.text(3)?,
            disk_tier: self.text(4)?,
            network_bw: self.parse(5)?,
        };
        Ok((self.text(0)?, self.parse(1)?, scheme, self.parse(6)?))
    }

    fn err(&self, message: impl Into<String>) -> ReportError {
        parse_err(self.source, self.line, None, message)
    }
}

fn parse_warmup(raw: &str) -> Result<bool, String> {
    match raw.to_ascii_lowercase().as_str() {
        "" | "false" | "0" | "no" => Ok(false),
        "true" | "1" | "yes" => Ok(true),
        other => Err(format!("expected true/false, got `{other}`")),
    }
}

/// Parse run records from CSV text. `source` names the input in error locations.
pub fn parse_runs_csv(text: &str, source: &str) -> Result<Vec<RunRecord>, ReportError> {
    let mut rdr = csv_reader(text);
    check_header(&mut rdr, &RUNS_HEADER, source)?;
    let mut out = Vec::new();
    for result in rdr.records() {
        let rec = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(source, line, None, e.to_string())
        })?;
        let row = Row {
            rec: &rec,
            header: &RUNS_HEADER,
            source,
            line: rec.position().map_or(0, |p| p.line()),
        };
        let (workload_id, mode, scheme, replicate) = row.key()?;
        let warmup =
            parse_warmup(row.raw(8)).map_err(|m| parse_err(source, row.line, Some("warmup"), m))?;
        let record = RunRecord {
            workload_id,
            mode,
            scheme,
            replicate,
            runtime_s: row.parse(7)?,
            utilization: None,
            warmup,
        };
        record.check().map_err(|m| row.err(m))?;
        out.push(record);
    }
    Ok(out)
}

/// Parse run records from a JSON envelope (kind `records`) or a bare array.
pub fn parse_runs_json(text: &str, source: &str) -> Result<Vec<RunRecord>, ReportError> {
    let records: Vec<RunRecord> = if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(|e| ReportError::Parse {
            location: format!("{source}:{}", e.line()),
            message: e.to_string(),
        })?
    } else {
        from_envelope_json(text, KIND_RECORDS, source)?
    };
    for (i, r) in records.iter().enumerate() {
        r.check().map_err(|m| ReportError::Parse {
            location: format!("{source} record {}", i + 1),
            message: m,
        })?;
    }
    Ok(records)
}

pub fn parse_runs_str(
    text: &str,
    format: InputFormat,
    source: &str,
) -> Result<Vec<RunRecord>, ReportError> {
    match format {
        InputFormat::Csv => parse_runs_csv(text, source),
        InputFormat::Json => parse_runs_json(text, source),
    }
}

/// Read and validate a run-record file. Any invalid row aborts the whole parse.
pub fn parse_runs(
    path: &std::path::Path,
    format: InputFormat,
) -> Result<Vec<RunRecord>, ReportError> {
    let text = super::read_file(path)?;
    parse_runs_str(&text, format, &path.display().to_string())
}

/// Utilization samples for one measured run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationRow {
    pub workload_id: String,
    pub mode: Mode,
    pub scheme: ResourceScheme,
    pub replicate: u32,
    pub utilization: UtilizationSummary,
    /// Line in the source file.
    pub line: u64,
}

pub fn parse_utilization_csv(text: &str, source: &str) -> Result<Vec<UtilizationRow>, ReportError> {
    let mut rdr = csv_reader(text);
    check_header(&mut rdr, &UTILIZATION_HEADER, source)?;
    let mut out = Vec::new();
    for result in rdr.records() {
        let rec = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(source, line, None, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = Row {
            rec: &rec,
            header: &UTILIZATION_HEADER,
            source,
            line,
        };
        let (workload_id, mode, scheme, replicate) = row.key()?;
        let utilization = UtilizationSummary {
            cpu_util_pct: row.parse(7)?,
            disk_bw_util_pct: row.parse(8)?,
            net_bw_util_pct: row.parse(9)?,
        };
        if !utilization.is_valid() {
            return Err(row.err("utilization values must lie in [0, 100]"));
        }
        out.push(UtilizationRow {
            workload_id,
            mode,
            scheme,
            replicate,
            utilization,
            line,
        });
    }
    Ok(out)
}

/// Attach utilization rows to the matching measured records. A row with no matching record is an
/// error.
pub fn attach_utilization(
    records: &mut [RunRecord],
    rows: &[UtilizationRow],
    source: &str,
) -> Result<(), ReportError> {
    for row in rows {
        let target = records.iter_mut().find(|r| {
            !r.warmup
                && r.workload_id == row.workload_id
                && r.mode == row.mode
                && r.replicate == row.replicate
                && r.scheme.matches(&row.scheme)
        });
        match target {
            Some(r) => r.utilization = Some(row.utilization),
            None => {
                return Err(parse_err(
                    source,
                    row.line,
                    None,
                    format!(
                        "no measured run for {}/{} replicate {} at {}",
                        row.workload_id, row.mode, row.replicate, row.scheme
                    ),
                ))
            }
        }
    }
    Ok(())
}

/// Serialize records in the run-record CSV schema. Numbers keep full precision.
pub fn write_runs_csv(records: &[RunRecord]) -> String {
    let mut out = RUNS_HEADER.join(",");
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_field(&r.workload_id),
            r.mode,
            r.scheme.cpu_freq,
            csv_field(&r.scheme.memory_tier),
            csv_field(&r.scheme.disk_tier),
            r.scheme.network_bw,
            r.replicate,
            r.runtime_s,
            if r.warmup { "true" } else { "" }
        );
    }
    out
}

/// Serialize records as a JSON envelope of kind `records`.
pub fn write_runs_json(records: &[RunRecord]) -> String {
    to_envelope_json(KIND_RECORDS, &records)
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
