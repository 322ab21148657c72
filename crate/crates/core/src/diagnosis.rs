//! Heuristics that read utilisation and relative impact side by side.
//!
//! Utilisation says how busy a resource was; relative impact says how much the runtime depends on
//! it. Disagreements between the two point at specific problems (memory stalls counted as CPU time,
//! idle cores, poor compute/I-O overlap).

use serde::{Deserialize, Serialize};

use crate::indicators::IndicatorSet;
use crate::model::UtilizationSummary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Utilisation at or above this percentage is "high".
    pub util_high_pct: f64,
    /// Utilisation at or below this percentage is "low".
    pub util_low_pct: f64,
    /// CRI at or above this is "high".
    pub ri_high: f64,
    /// CRI at or below this is "low".
    pub ri_low: f64,
    /// DRI at or above this is "high". I/O increments live on a smaller scale than CRI.
    pub io_ri_high: f64,
    /// DRI at or below this is "low".
    pub io_ri_low: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            util_high_pct: 60.0,
            util_low_pct: 30.0,
            ri_high: 0.5,
            ri_low: 0.3,
            io_ri_high: 0.2,
            io_ri_low: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagnosisCode {
    HighCpuutilLowCri,
    LowCpuutilHighCri,
    HighDiskutilLowDri,
    LowDiskutilHighDri,
}

impl DiagnosisCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosisCode::HighCpuutilLowCri => "HIGH_CPUUTIL_LOW_CRI",
            DiagnosisCode::LowCpuutilHighCri => "LOW_CPUUTIL_HIGH_CRI",
            DiagnosisCode::HighDiskutilLowDri => "HIGH_DISKUTIL_LOW_DRI",
            DiagnosisCode::LowDiskutilHighDri => "LOW_DISKUTIL_HIGH_DRI",
        }
    }

    pub fn explanation(self) -> &'static str {
        match self {
            DiagnosisCode::HighCpuutilLowCri => {
                "possible weak memory management / memory stalls inflate CPU utilization"
            }
            DiagnosisCode::LowCpuutilHighCri => "CPU cores not fully used (scheduling imbalance)",
            DiagnosisCode::HighDiskutilLowDri => "good I/O overlap, little disk blocked time",
            DiagnosisCode::LowDiskutilHighDri => {
                "weak I/O overlap; consider longer tasks or merged I/O"
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub code: DiagnosisCode,
    pub explanation: String,
    pub triggers: Vec<Trigger>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub findings: Vec<Finding>,
    pub thresholds: Thresholds,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn diagnose(
    ind: &IndicatorSet,
    util: Option<&UtilizationSummary>,
    th: &Thresholds,
) -> DiagnosisReport {
    let mut report = DiagnosisReport {
        findings: Vec::new(),
        thresholds: *th,
        notes: Vec::new(),
    };
    let Some(util) = util else {
        report
            .notes
            .push("no utilization data; diagnosis skipped".into());
        return report;
    };

    let mut emit =
        |code: DiagnosisCode, util_name: &str, util_value: f64, ri_name: &str, ri_value: f64| {
            report.findings.push(Finding {
                code,
                explanation: code.explanation().into(),
                triggers: vec![
                    Trigger {
                        name: util_name.into(),
                        value: util_value,
                    },
                    Trigger {
                        name: ri_name.into(),
                        value: ri_value,
                    },
                ],
            });
        };

    match ind.cri {
        Some(cri) => {
            let u = util.cpu_util_pct;
            if u >= th.util_high_pct && cri <= th.ri_low {
                emit(
                    DiagnosisCode::HighCpuutilLowCri,
                    "cpu_util_pct",
                    u,
                    "CRI",
                    cri,
                );
            }
            if u <= th.util_low_pct && cri >= th.ri_high {
                emit(
                    DiagnosisCode::LowCpuutilHighCri,
                    "cpu_util_pct",
                    u,
                    "CRI",
                    cri,
                );
            }
        }
        None => report.notes.push("CRI absent; CPU rules skipped".into()),
    }
    match ind.dri {
        Some(dri) => {
            let u = util.disk_bw_util_pct;
            if u >= th.util_high_pct && dri <= th.io_ri_low {
                emit(
                    DiagnosisCode::HighDiskutilLowDri,
                    "disk_bw_util_pct",
                    u,
                    "DRI",
                    dri,
                );
            }
            if u <= th.util_low_pct && dri >= th.io_ri_high {
                emit(
                    DiagnosisCode::LowDiskutilHighDri,
                    "disk_bw_util_pct",
                    u,
                    "DRI",
                    dri,
                );
            }
        }
        None => report.notes.push("DRI absent; disk rules skipped".into()),
    }
    if let Some(cri) = ind.cri {
        if !crate::indicators::io_upgrades_worthwhile(cri, th.ri_high) {
            report.notes.push(format!(
                "CRI {cri:.2} is above {:.2}: disk/network upgrade runs can be skipped for this workload",
                th.ri_high
            ));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;

    fn ind(cri: f64, dri: f64) -> IndicatorSet {
        let mut s = IndicatorSet::empty("q", Mode::Disk);
        s.cri = Some(cri);
        s.dri = Some(dri);
        s
    }

    fn util(cpu: f64, disk: f64) -> UtilizationSummary {
        UtilizationSummary {
            cpu_util_pct: cpu,
            disk_bw_util_pct: disk,
            net_bw_util_pct: 5.0,
        }
    }

    fn codes(r: &DiagnosisReport) -> Vec<DiagnosisCode> {
        r.findings.iter().map(|f| f.code).collect()
    }

    #[test]
    fn busy_cpu_with_low_impact() {
        let r = diagnose(
            &ind(0.2, 0.0),
            Some(&util(80.0, 40.0)),
            &Thresholds::default(),
        );
        assert_eq!(codes(&r), vec![DiagnosisCode::HighCpuutilLowCri]);
        assert_eq!(r.findings[0].triggers[0].value, 80.0);
        assert_eq!(r.findings[0].triggers[1].value, 0.2);
    }

    #[test]
    fn idle_cores_with_high_impact() {
        let r = diagnose(
            &ind(0.58, 0.15),
            Some(&util(17.0, 40.0)),
            &Thresholds::default(),
        );
        assert_eq!(codes(&r), vec![DiagnosisCode::LowCpuutilHighCri]);
        assert!(r.notes.iter().any(|n| n.contains("can be skipped")));
    }

    #[test]
    fn low_disk_bandwidth_with_high_disk_impact() {
        let r = diagnose(
            &ind(0.4, 0.25),
            Some(&util(45.0, 10.0)),
            &Thresholds::default(),
        );
        assert_eq!(codes(&r), vec![DiagnosisCode::LowDiskutilHighDri]);
    }

    #[test]
    fn busy_disk_with_low_disk_impact() {
        let r = diagnose(
            &ind(0.4, 0.05),
            Some(&util(45.0, 70.0)),
            &Thresholds::default(),
        );
        assert_eq!(codes(&r), vec![DiagnosisCode::HighDiskutilLowDri]);
    }

    #[test]
    fn no_utilization_gives_empty_report() {
        let r = diagnose(&ind(0.2, 0.3), None, &Thresholds::default());
        assert!(r.findings.is_empty());
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn thresholds_are_overridable() {
        let th = Thresholds {
            util_high_pct: 90.0,
            ..Thresholds::default()
        };
        assert!(diagnose(&ind(0.2, 0.0), Some(&util(80.0, 40.0)), &th)
            .findings
            .is_empty());
    }
}
