//! Text, CSV and JSON renderings of a report, and bar-chart series.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ingest::csv_field;
use super::{to_envelope_json, CellState, ReportDocument, ReportError, KIND_REPORT};
use crate::indicators::{Flag, IndicatorSet};
use crate::model::{Indicator, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!(
                "unknown report format `{other}` (expected text, csv or json)"
            )),
        }
    }
}

pub const INDICATOR_CSV_HEADER: &str = "workload,mode,cri,mri,dri,nri,bottleneck,flags";

/// Render a report. Text shows two decimals; CSV and JSON keep full precision.
pub fn render_report(doc: &ReportDocument, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(doc),
        ReportFormat::Csv => render_csv(doc),
        ReportFormat::Json => to_envelope_json(KIND_REPORT, doc),
    }
}

fn fmt2(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

fn render_text(doc: &ReportDocument) -> String {
    let mut out = String::new();
    let mut columns: Vec<&str> = doc.workloads.iter().map(String::as_str).collect();
    columns.push("Avg");
    let widths: Vec<usize> = columns.iter().map(|c| c.len().max(6)).collect();

    let _ = write!(out, "{:<9} {:<6}", "indicator", "mode");
    for (c, w) in columns.iter().zip(&widths) {
        let _ = write!(out, "  {c:>w$}");
    }
    out.push('\n');

    if !doc.entries.is_empty() {
        for ind in Indicator::ALL {
            for &mode in &doc.design.modes {
                let _ = write!(out, "{:<9} {:<6}", ind.as_str(), mode.as_str());
                for (c, w) in doc.workloads.iter().zip(&widths) {
                    let v = doc.entry(c, mode).and_then(|e| e.indicators.get(ind));
                    let _ = write!(out, "  {:>w$}", fmt2(v));
                }
                let _ = write!(
                    out,
                    "  {:>w$}",
                    fmt2(doc.average(ind, mode)),
                    w = widths[widths.len() - 1]
                );
                out.push('\n');
            }
        }
    }

    if doc.entries.is_empty() {
        return out;
    }

    out.push_str("\nranking\n");
    for e in &doc.entries {
        let id = format!("{}/{}", e.indicators.workload_id, e.indicators.mode);
        match &e.ranking {
            Some(r) => {
                let order: Vec<String> = r
                    .order
                    .iter()
                    .map(|x| format!("{} {:.2}", x.resource, x.value))
                    .collect();
                let _ = writeln!(out, "  {id}: {}", order.join(" > "));
                for g in &r.tie_groups {
                    let names: Vec<String> = g.iter().map(ToString::to_string).collect();
                    let _ = writeln!(out, "    tie: {}", names.join(" = "));
                }
                if let Some(n) = &r.note {
                    let _ = writeln!(out, "    note: {n}");
                }
            }
            None => {
                let _ = writeln!(out, "  {id}: no indicator available");
            }
        }
    }

    let flagged: Vec<_> = doc
        .entries
        .iter()
        .filter(|e| !e.indicators.flags.is_empty())
        .collect();
    if !flagged.is_empty() {
        out.push_str("\nflags\n");
        for e in flagged {
            let names: Vec<&str> = e.indicators.flags.iter().map(|f| f.as_str()).collect();
            let _ = writeln!(
                out,
                "  {}/{}: {}",
                e.indicators.workload_id,
                e.indicators.mode,
                names.join(", ")
            );
        }
    }

    let diagnosed: Vec<_> = doc
        .entries
        .iter()
        .filter(|e| !e.diagnosis.findings.is_empty())
        .collect();
    if !diagnosed.is_empty() {
        out.push_str("\ndiagnosis\n");
        for e in diagnosed {
            for f in &e.diagnosis.findings {
                let trig: Vec<String> = f
                    .triggers
                    .iter()
                    .map(|t| format!("{}={:.2}", t.name, t.value))
                    .collect();
                let _ = writeln!(
                    out,
                    "  {}/{} {}: {} [{}]",
                    e.indicators.workload_id,
                    e.indicators.mode,
                    f.code.as_str(),
                    f.explanation,
                    trig.join(", ")
                );
            }
        }
    }

    out.push_str("\ncompleteness\n");
    for e in &doc.entries {
        let count = |s: CellState| e.cells.iter().filter(|c| c.state == s).count();
        let _ = writeln!(
            out,
            "  {}/{}: {} required cells, {} complete, {} under-replicated, {} missing",
            e.indicators.workload_id,
            e.indicators.mode,
            e.cells.len(),
            count(CellState::Complete),
            count(CellState::UnderReplicated),
            count(CellState::Missing)
        );
    }

    let used: BTreeSet<Flag> = doc
        .entries
        .iter()
        .flat_map(|e| e.indicators.flags.iter().copied())
        .collect();
    if !used.is_empty() {
        out.push_str("\nlegend\n");
        for l in doc.flags_legend.iter().filter(|l| used.contains(&l.flag)) {
            let _ = writeln!(out, "  {}: {}", l.flag.as_str(), l.meaning);
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn render_csv(doc: &ReportDocument) -> String {
    let mut out = String::from(INDICATOR_CSV_HEADER);
    out.push('\n');
    for e in &doc.entries {
        let i = &e.indicators;
        let flags: Vec<&str> = i.flags.iter().map(|f| f.as_str()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(&i.workload_id),
            i.mode,
            opt(i.cri),
            opt(i.mri),
            opt(i.dri),
            opt(i.nri),
            e.ranking
                .as_ref()
                .map_or(String::new(), |r| r.bottleneck().to_string()),
            flags.join(";")
        );
    }
    out
}

/// Read back the indicator CSV written by [`render_report`]. Per-variant CRIs are not part of
/// the CSV and come back empty.
pub fn parse_indicator_csv(text: &str, source: &str) -> Result<Vec<IndicatorSet>, ReportError> {
    let loc = |line: u64| format!("{source}:{line}");
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| ReportError::Parse {
        location: loc(1),
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>().join(",") != INDICATOR_CSV_HEADER {
        return Err(ReportError::Parse {
            location: loc(1),
            message: format!("header must be `{INDICATOR_CSV_HEADER}`"),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| ReportError::Parse {
            location: loc(e.position().map_or(0, |p| p.line())),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |message: String| ReportError::Parse {
            location: loc(line),
            message,
        };
        let mode: Mode = row[1].parse().map_err(err)?;
        let mut set = IndicatorSet::empty(&row[0], mode);
        for (k, ind) in Indicator::ALL.into_iter().enumerate() {
            let raw = &row[2 + k];
            if !raw.is_empty() {
                let v: f64 = raw
                    .parse()
                    .map_err(|e| err(format!("{}: {e}", ind.as_str())))?;
                set.set(ind, Some(v));
            }
        }
        for f in row[7].split(';').filter(|s| !s.is_empty()) {
            set.flags.insert(f.parse().map_err(err)?);
        }
        out.push(set);
    }
    Ok(out)
}

/// How bars are grouped in [`emit_plot_data`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotGrouping {
    /// CPU relative impact per I/O configuration and mode, labelled like `DH1` or `MS10`.
    #[default]
    Variant,
    /// One series per indicator and mode.
    Indicator,
}

impl FromStr for PlotGrouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "variant" => Ok(PlotGrouping::Variant),
            "indicator" => Ok(PlotGrouping::Indicator),
            other => Err(format!(
                "unknown grouping `{other}` (expected variant or indicator)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub workload_id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub label: String,
    pub group: String,
    pub bars: Vec<Bar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub grouping: PlotGrouping,
    pub series: Vec<PlotSeries>,
}

fn mode_letter(m: Mode) -> char {
    match m {
        Mode::Disk => 'D',
        Mode::Memory => 'M',
    }
}

/// Bar-chart series. Values are copied from the indicator sets unchanged.
pub fn emit_plot_data(sets: &[IndicatorSet], grouping: PlotGrouping) -> PlotData {
    let mut series: Vec<PlotSeries> = Vec::new();
    let mut push = |label: String, group: String, workload_id: &str, value: f64| {
        let bar = Bar {
            workload_id: workload_id.to_string(),
            value,
        };
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.bars.push(bar),
            None => series.push(PlotSeries {
                label,
                group,
                bars: vec![bar],
            }),
        }
    };
    for set in sets {
        match grouping {
            PlotGrouping::Variant => {
                for v in &set.variant_cri {
                    let group = v.variant.short_label();
                    push(
                        format!("{}{group}", mode_letter(set.mode)),
                        group,
                        &set.workload_id,
                        v.cri,
                    );
                }
            }
            PlotGrouping::Indicator => {
                for ind in Indicator::ALL {
                    if let Some(value) = set.get(ind) {
                        let label = format!("{}-{}", mode_letter(set.mode), ind.as_str());
                        push(label, ind.as_str().to_string(), &set.workload_id, value);
                    }
                }
            }
        }
    }
    PlotData { grouping, series }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicators::VariantCri;
    use crate::model::{ExperimentDesign, IoVariant};
    use crate::report::{build_report, from_envelope_json, ReportOptions};

    fn with_variants(w: &str, mode: Mode, vals: &[(&str, f64, f64)]) -> IndicatorSet {
        let mut s = IndicatorSet::empty(w, mode);
        s.cri = Some(vals[0].2);
        for &(d, n, cri) in vals {
            s.variant_cri.push(VariantCri {
                variant: IoVariant {
                    disk_tier: d.into(),
                    network_bw: n,
                },
                cri,
            });
        }
        s
    }

    #[test]
    fn two_modes_two_groups_give_four_series() {
        let sets = [
            with_variants("q1", Mode::Disk, &[("HDD", 1.0, 0.41), ("SSD", 10.0, 0.83)]),
            with_variants(
                "q1",
                Mode::Memory,
                &[("HDD", 1.0, 0.52), ("SSD", 10.0, 0.71)],
            ),
        ];
        let p = emit_plot_data(&sets, PlotGrouping::Variant);
        let labels: Vec<&str> = p.series.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, ["DH1", "DS10", "MH1", "MS10"]);
        assert_eq!(p.series[1].group, "S10");
        assert_eq!(
            p.series[1].bars,
            vec![Bar {
                workload_id: "q1".into(),
                value: 0.83
            }]
        );
    }

    #[test]
    fn single_workload_single_bar() {
        let mut s = IndicatorSet::empty("q1", Mode::Disk);
        s.cri = Some(1.0 / 3.0);
        let p = emit_plot_data(&[s], PlotGrouping::Indicator);
        assert_eq!(p.series.len(), 1);
        assert_eq!(p.series[0].bars.len(), 1);
        assert_eq!(p.series[0].bars[0].value, 1.0 / 3.0);
    }

    fn sample_doc() -> ReportDocument {
        let d = ExperimentDesign::reference_design();
        let mut m = crate::model::RuntimeMatrix::new();
        for s in d.all_schemes() {
            let io = if s.disk_tier == "SSD" { 10.0 } else { 20.0 } + 10.0 / s.network_bw;
            for (w, cpu) in [("q1", 60.0), ("q2", 30.0)] {
                m.set_mean(w, Mode::Disk, s.clone(), cpu * 1.2 / s.cpu_freq + io);
                m.set_mean(
                    w,
                    Mode::Memory,
                    s.clone(),
                    cpu * 1.2 / s.cpu_freq + io / 3.0 + 0.1,
                );
            }
        }
        build_report(&m, &d, &ReportOptions::default()).unwrap()
    }

    #[test]
    fn json_round_trip() {
        let doc = sample_doc();
        let text = render_report(&doc, ReportFormat::Json);
        let back: ReportDocument = from_envelope_json(&text, KIND_REPORT, "r").unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn csv_round_trip_keeps_full_precision() {
        let doc = sample_doc();
        let text = render_report(&doc, ReportFormat::Csv);
        let back = parse_indicator_csv(&text, "r").unwrap();
        assert_eq!(back.len(), doc.entries.len());
        for (b, e) in back.iter().zip(&doc.entries) {
            for ind in Indicator::ALL {
                assert_eq!(b.get(ind), e.indicators.get(ind));
            }
            assert_eq!(b.flags, e.indicators.flags);
        }
    }

    #[test]
    fn text_table_shape() {
        let doc = sample_doc();
        let text = render_report(&doc, ReportFormat::Text);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("indicator mode"));
        assert!(lines[0].trim_end().ends_with("Avg"));
        let rows: Vec<&str> = lines[1..9].iter().map(|l| &l[..16]).collect();
        assert_eq!(
            rows,
            [
                "CRI       disk  ",
                "CRI       memory",
                "MRI       disk  ",
                "MRI       memory",
                "DRI       disk  ",
                "DRI       memory",
                "NRI       disk  ",
                "NRI       memory"
            ]
        );
        let cri = doc.entry("q1", Mode::Disk).unwrap().indicators.cri.unwrap();
        assert!(lines[1].contains(&format!("{cri:.2}")));
        assert_eq!(render_report(&doc, ReportFormat::Text), text);
    }

    #[test]
    fn empty_report_is_header_only() {
        let d = ExperimentDesign::reference_design();
        let doc = build_report(
            &crate::model::RuntimeMatrix::new(),
            &d,
            &ReportOptions::default(),
        )
        .unwrap();
        let text = render_report(&doc, ReportFormat::Text);
        assert_eq!(text.lines().count(), 1);
        assert_eq!(
            render_report(&doc, ReportFormat::Csv),
            format!("{INDICATOR_CSV_HEADER}\n")
        );
    }

    #[test]
    fn absent_values_render_as_dash() {
        let d = ExperimentDesign::reference_design();
        let mut m = crate::model::RuntimeMatrix::new();
        for (f, t) in [(1.2, 100.0), (2.4, 70.0), (3.6, 60.0)] {
            m.set_mean("q1", Mode::Disk, d.baseline.at_freq(f), t);
        }
        let text = render_report(
            &build_report(&m, &d, &ReportOptions::default()).unwrap(),
            ReportFormat::Text,
        );
        let mri = text
            .lines()
            .find(|l| l.starts_with("MRI       disk"))
            .unwrap();
        assert!(mri.trim_end().ends_with('-'));
        assert!(text.contains("incomplete_matrix"));
    }
}
