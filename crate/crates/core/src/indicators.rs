//! CPU, memory, disk and network relative impact.
//!
//! Every indicator is built from the same quantity: how close the runtime reduction under CPU
//! frequency scaling comes to the linear-scaling bound `1 - c_b/c_i`. The CPU indicator is that
//! closeness on the baseline scheme; the disk and network indicators are the increase in it
//! obtained by upgrading one I/O resource; the memory indicator is what remains below 1 once the
//! I/O resources are upgraded together. Because all four are expressed on one scale they can be
//! ranked directly, though they need not sum to 1.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ExperimentDesign, Indicator, IoVariant, Mode, ResourceScheme, RuntimeMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndicatorError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("incomplete matrix for {workload_id}/{mode}: missing {}", fmt_schemes(.missing))]
    IncompleteMatrix {
        workload_id: String,
        mode: Mode,
        missing: Vec<ResourceScheme>,
    },
}

fn fmt_schemes(s: &[ResourceScheme]) -> String {
    s.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Quality markers attached to an indicator value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// A frequency step made the workload slower; the term was treated as zero.
    ClampedNegativeCpi,
    /// A value left its theoretical range (superlinear term, negative increment) and was bounded.
    ClampedIndicator,
    /// Some indicator could not be computed because matrix cells are missing.
    IncompleteMatrix,
}

impl Flag {
    pub const ALL: [Flag; 3] = [
        Flag::ClampedNegativeCpi,
        Flag::ClampedIndicator,
        Flag::IncompleteMatrix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Flag::ClampedNegativeCpi => "clamped_negative_cpi",
            Flag::ClampedIndicator => "clamped_indicator",
            Flag::IncompleteMatrix => "incomplete_matrix",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Flag::ClampedNegativeCpi => {
                "runtime grew with frequency at some step; that term counted as 0"
            }
            Flag::ClampedIndicator => "a value exceeded its [0, 1] range and was clamped",
            Flag::IncompleteMatrix => "cells missing; the affected indicators are absent, not zero",
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Flag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Flag::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim())
            .ok_or_else(|| format!("unknown flag `{s}`"))
    }
}

/// A clamped value and the flags raised while computing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    pub value: f64,
    pub flags: BTreeSet<Flag>,
}

/// How the per-frequency terms of the CPU indicator are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrequencyWeighting {
    /// Plain mean over the alternative frequencies.
    #[default]
    Uniform,
    /// Weight each term by its headroom `1 - c_b/c_i`, favouring larger frequency steps.
    Headroom,
}

/// Fractional runtime reduction when moving from the baseline to a scaled frequency.
///
/// Unclamped: a slowdown gives a negative value that the caller must flag.
pub fn cpi(rt_base: f64, rt_scaled: f64) -> Result<f64, IndicatorError> {
    if !(rt_base > 0.0) || !(rt_scaled > 0.0) {
        return Err(IndicatorError::InvalidInput(format!(
            "runtimes must be > 0 (base {rt_base}, scaled {rt_scaled})"
        )));
    }
    Ok(1.0 - rt_scaled / rt_base)
}

/// CPU relative impact from a baseline runtime and runtimes at higher frequencies.
pub fn cri(
    baseline_rt: f64,
    scaled_rts: &[(f64, f64)],
    c_b: f64,
) -> Result<Bounded, IndicatorError> {
    cri_weighted(baseline_rt, scaled_rts, c_b, FrequencyWeighting::Uniform)
}

pub fn cri_weighted(
    baseline_rt: f64,
    scaled_rts: &[(f64, f64)],
    c_b: f64,
    weighting: FrequencyWeighting,
) -> Result<Bounded, IndicatorError> {
    if scaled_rts.is_empty() {
        return Err(IndicatorError::InvalidInput(
            "no scaled-frequency runtimes".into(),
        ));
    }
    if !(c_b > 0.0) {
        return Err(IndicatorError::InvalidInput(format!(
            "baseline frequency must be > 0 (got {c_b})"
        )));
    }
    let mut flags = BTreeSet::new();
    let mut weighted = 0.0;
    let mut total_weight = 0.0;
    for &(freq, rt) in scaled_rts {
        if !(freq > c_b) {
            return Err(IndicatorError::InvalidInput(format!(
                "frequency {freq} GHz does not exceed baseline {c_b} GHz"
            )));
        }
        let bound = 1.0 - c_b / freq;
        let mut improvement = cpi(baseline_rt, rt)?;
        if improvement < 0.0 {
            improvement = 0.0;
            flags.insert(Flag::ClampedNegativeCpi);
        }
        let mut term = improvement / bound;
        if term > 1.0 {
            term = 1.0;
            flags.insert(Flag::ClampedIndicator);
        }
        let w = match weighting {
            FrequencyWeighting::Uniform => 1.0,
            FrequencyWeighting::Headroom => bound,
        };
        weighted += w * term;
        total_weight += w;
    }
    Ok(Bounded {
        value: weighted / total_weight,
        flags,
    })
}

fn scheme_for(design: &ExperimentDesign, variant: &IoVariant, freq: f64) -> ResourceScheme {
    ResourceScheme {
        cpu_freq: freq,
        memory_tier: design.baseline.memory_tier.clone(),
        disk_tier: variant.disk_tier.clone(),
        network_bw: variant.network_bw,
    }
}

/// CPU relative impact measured on one I/O variant, i.e. `CRI(c_b, m_b, d, n)`.
pub fn variant_cri(
    matrix: &RuntimeMatrix,
    design: &ExperimentDesign,
    workload_id: &str,
    mode: Mode,
    variant: &IoVariant,
) -> Result<Bounded, IndicatorError> {
    let mut missing = Vec::new();
    let base_scheme = scheme_for(design, variant, design.baseline.cpu_freq);
    let base_rt = matrix.mean(workload_id, mode, &base_scheme);
    if base_rt.is_none() {
        missing.push(base_scheme);
    }
    let mut scaled = Vec::with_capacity(design.cpu_freqs.len());
    for &f in &design.cpu_freqs {
        let s = scheme_for(design, variant, f);
        match matrix.mean(workload_id, mode, &s) {
            Some(rt) => scaled.push((f, rt)),
            None => missing.push(s),
        }
    }
    match base_rt {
        Some(rt) if missing.is_empty() => cri(rt, &scaled, design.baseline.cpu_freq),
        _ => Err(IndicatorError::IncompleteMatrix {
            workload_id: workload_id.into(),
            mode,
            missing,
        }),
    }
}

/// Evaluate each variant, collecting every missing cell before failing.
fn variant_cris(
    matrix: &RuntimeMatrix,
    design: &ExperimentDesign,
    workload_id: &str,
    mode: Mode,
    variants: &[IoVariant],
) -> Result<Vec<Bounded>, IndicatorError> {
    let mut out = Vec::with_capacity(variants.len());
    let mut missing = Vec::new();
    for v in variants {
        match variant_cri(matrix, design, workload_id, mode, v) {
            Ok(b) => out.push(b),
            Err(IndicatorError::IncompleteMatrix { missing: m, .. }) => missing.extend(m),
            Err(e) => return Err(e),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(IndicatorError::IncompleteMatrix {
            workload_id: workload_id.into(),
            mode,
            missing,
        })
    }
}

/// Largest CRI increment over a set of upgraded variants, clamped at zero.
fn max_increment(
    matrix: &RuntimeMatrix,
    design: &ExperimentDesign,
    workload_id: &str,
    mode: Mode,
    upgrades: Vec<IoVariant>,
) -> Result<Bounded, IndicatorError> {
    if upgrades.is_empty() {
        return Err(IndicatorError::InvalidInput(
            "design declares no upgraded tier".into(),
        ));
    }
    let mut variants = vec![design.baseline_variant()];
    variants.extend(upgrades);
    let cris = variant_cris(matrix, design, workload_id, mode, &variants)?;
    let base = &cris[0];
    let mut flags: BTreeSet<Flag> = cris.iter().flat_map(|b| b.flags.iter().copied()).collect();
    let raw = cris[1..]
        .iter()
        .map(|b| b.value - base.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let value = if raw < 0.0 {
        flags.insert(Flag::ClampedIndicator);
        0.0
    } else {
        raw
    };
    Ok(Bounded { value, flags })
}

/// Disk relative impact: best CRI gain from upgrading only the disk.
pub fn dri(
    matrix: &RuntimeMatrix,
    design: &ExperimentDesign,
    workload_id: &str,
    mode: Mode,
) -> Result<Bounded, IndicatorError> {
    let n_b = design.baseline.network_bw;
    let upgrades = design
        .disk_tiers
        .iter()
        .map(|d| IoVariant {
            disk_tier: d.clone(),
            network_bw: n_b,
        })
        .collect();
    max_increment(matrix, design, workload_id, mode, upgrades)
}

/// Network relative impact: best CRI gain from upgrading only the network.
pub fn nri(
    matrix: &RuntimeMatrix,
    design: &ExperimentDesign,
    workload_id: &str,
    mode: Mode,
) -> Result<Bounded, IndicatorError> {
    let d_b = &design.baseline.disk_tier;
    let upgrades = design
        .network_bws
        .iter()
        .map(|&n| IoVariant {
            disk_tier: d_b.clone(),
            network_bw: n,
        })
        .collect();
    max_increment(matrix, design, workload_id, mode, upgrades)
}

/// Memory relative impact: one minus the best CRI with both I/O resources upgraded.
pub fn mri(
    matrix: &RuntimeMatrix,
    design: &ExperimentDesign,
    workload_id: &str,
    mode: Mode,
) -> Result<Bounded, IndicatorError> {
    let pairs = design.mri_pairs();
    let cris = variant_cris(matrix, design, workload_id, mode, &pairs)?;
    let flags = cris.iter().flat_map(|b| b.flags.iter().copied()).collect();
    let best = cris
        .iter()
        .map(|b| b.value)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Bounded {
        value: 1.0 - best,
        flags,
    })
}

/// CRI observed on one I/O variant, kept for plots and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantCri {
    pub variant: IoVariant,
    pub cri: f64,
}

/// The four indicators for one (workload, mode). Absent values mean "not computable", never 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSet {
    pub workload_id: String,
    pub mode: Mode,
    pub cri: Option<f64>,
    pub mri: Option<f64>,
    pub dri: Option<f64>,
    pub nri: Option<f64>,
    pub flags: BTreeSet<Flag>,
    #[serde(default)]
    pub variant_cri: Vec<VariantCri>,
}

impl IndicatorSet {
    pub fn empty(workload_id: &str, mode: Mode) -> Self {
        IndicatorSet {
            workload_id: workload_id.into(),
            mode,
            cri: None,
            mri: None,
            dri: None,
            nri: None,
            flags: BTreeSet::new(),
            variant_cri: Vec::new(),
        }
    }

    pub fn get(&self, ind: Indicator) -> Option<f64> {
        match ind {
            Indicator::Cri => self.cri,
            Indicator::Mri => self.mri,
            Indicator::Dri => self.dri,
            Indicator::Nri => self.nri,
        }
    }

    pub fn set(&mut self, ind: Indicator, value: Option<f64>) {
        let slot = match ind {
            Indicator::Cri => &mut self.cri,
            Indicator::Mri => &mut self.mri,
            Indicator::Dri => &mut self.dri,
            Indicator::Nri => &mut self.nri,
        };
        *slot = value;
    }

    pub fn present(&self) -> Vec<Indicator> {
        Indicator::ALL
            .into_iter()
            .filter(|&i| self.get(i).is_some())
            .collect()
    }
}

/// Compute every indicator the matrix supports.
///
/// Indicators listed in `required` must be computable, otherwise the missing cells are returned as
/// an error; the others are reported absent (with [`Flag::IncompleteMatrix`]) when their cells are
/// missing or the design declares no upgrade for them.
pub fn compute_all(
    matrix: &RuntimeMatrix,
    design: &ExperimentDesign,
    workload_id: &str,
    mode: Mode,
    required: &[Indicator],
) -> Result<IndicatorSet, IndicatorError> {
    let mut set = IndicatorSet::empty(workload_id, mode);
    for ind in Indicator::ALL {
        let result = match ind {
            Indicator::Cri => variant_cri(
                matrix,
                design,
                workload_id,
                mode,
                &design.baseline_variant(),
            ),
            Indicator::Mri => mri(matrix, design, workload_id, mode),
            Indicator::Dri => dri(matrix, design, workload_id, mode),
            Indicator::Nri => nri(matrix, design, workload_id, mode),
        };
        match result {
            Ok(b) => {
                set.flags.extend(b.flags);
                set.set(ind, Some(b.value));
            }
            Err(e) if required.contains(&ind) => return Err(e),
            Err(IndicatorError::IncompleteMatrix { .. }) => {
                set.flags.insert(Flag::IncompleteMatrix);
            }
            // no upgrade declared for this resource: nothing to measure
            Err(IndicatorError::InvalidInput(_)) => {}
        }
    }
    for v in design.io_variants(&Indicator::ALL) {
        if let Ok(b) = variant_cri(matrix, design, workload_id, mode, &v) {
            set.variant_cri.push(VariantCri {
                variant: v,
                cri: b.value,
            });
        }
    }
    if set.present().is_empty() {
        return Err(IndicatorError::IncompleteMatrix {
            workload_id: workload_id.into(),
            mode,
            missing: crate::model::required_cells(design, &Indicator::ALL)
                .into_iter()
                .filter(|c| c.mode == mode && matrix.get(workload_id, mode, &c.scheme).is_none())
                .map(|c| c.scheme)
                .collect(),
        });
    }
    Ok(set)
}

/// Whether disk/network upgrade runs are worth their cost for a workload with this CRI.
/// Clearly CPU-bound workloads (CRI above `cpu_bound_cutoff`) gain little from them.
pub fn io_upgrades_worthwhile(cri: f64, cpu_bound_cutoff: f64) -> bool {
    cri <= cpu_bound_cutoff
}

/// Resource behind each indicator. Declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Cpu,
    Memory,
    Disk,
    Network,
}

impl Resource {
    pub fn indicator(self) -> Indicator {
        match self {
            Resource::Cpu => Indicator::Cri,
            Resource::Memory => Indicator::Mri,
            Resource::Disk => Indicator::Dri,
            Resource::Network => Indicator::Nri,
        }
    }

    pub fn of(ind: Indicator) -> Resource {
        match ind {
            Indicator::Cri => Resource::Cpu,
            Indicator::Mri => Resource::Memory,
            Indicator::Dri => Resource::Disk,
            Indicator::Nri => Resource::Network,
        }
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::Cpu => "cpu",
            Resource::Memory => "memory",
            Resource::Disk => "disk",
            Resource::Network => "network",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub resource: Resource,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Highest impact first.
    pub order: Vec<RankEntry>,
    /// Groups of two or more resources with identical values, in ranking order.
    pub tie_groups: Vec<Vec<Resource>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Ranking {
    pub fn bottleneck(&self) -> Resource {
        self.order[0].resource
    }
}

/// Order the present indicators by value; the first entry is the bottleneck.
pub fn rank_bottleneck(ind: &IndicatorSet) -> Result<Ranking, IndicatorError> {
    let mut order: Vec<RankEntry> = Indicator::ALL
        .into_iter()
        .filter_map(|i| {
            ind.get(i).map(|value| RankEntry {
                resource: Resource::of(i),
                value,
            })
        })
        .collect();
    if order.is_empty() {
        return Err(IndicatorError::InvalidInput(
            "no indicator present to rank".into(),
        ));
    }
    order.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then(a.resource.cmp(&b.resource))
    });

    let mut tie_groups = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let j = (i..order.len())
            .take_while(|&k| order[k].value == order[i].value)
            .count()
            + i;
        if j - i > 1 {
            tie_groups.push(order[i..j].iter().map(|e| e.resource).collect());
        }
        i = j;
    }
    let note = (order.len() < 4).then(|| {
        let absent: Vec<&str> = Indicator::ALL
            .into_iter()
            .filter(|&i| ind.get(i).is_none())
            .map(Indicator::as_str)
            .collect();
        format!(
            "ranked on present indicators only; absent: {}",
            absent.join(", ")
        )
    });
    Ok(Ranking {
        order,
        tie_groups,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ResourceScheme;

    /// Serial additive runtime: CPU seconds at the baseline scale with `c_b / c`.
    fn additive(cpu_s: f64, rest_s: f64, c_b: f64, c: f64) -> f64 {
        cpu_s * c_b / c + rest_s
    }

    fn disk_design() -> ExperimentDesign {
        let mut d = ExperimentDesign::reference_design();
        d.modes = vec![Mode::Disk];
        d
    }

    /// Fill every design cell from a closure of (disk tier, bandwidth, frequency).
    fn matrix_from(design: &ExperimentDesign, rt: impl Fn(&str, f64, f64) -> f64) -> RuntimeMatrix {
        let mut m = RuntimeMatrix::new();
        for s in design.all_schemes() {
            let t = rt(&s.disk_tier, s.network_bw, s.cpu_freq);
            m.set_mean("w", Mode::Disk, s, t);
        }
        m
    }

    #[test]
    fn cpi_examples() {
        assert_eq!(cpi(100.0, 100.0).unwrap(), 0.0);
        assert_eq!(cpi(100.0, 50.0).unwrap(), 0.5);
        assert!((cpi(100.0, 110.0).unwrap() + 0.1).abs() < 1e-15);
        assert!(cpi(0.0, 1.0).is_err());
        assert!(cpi(1.0, -1.0).is_err());
    }

    #[test]
    fn cri_perfect_scaling_is_one() {
        let b = cri(100.0, &[(2.4, 50.0), (3.6, 100.0 / 3.0)], 1.2).unwrap();
        assert!((b.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cri_sixty_forty_is_point_six() {
        // 60 s CPU + 40 s I/O at 1.2 GHz; hand-computed terms 0.3/0.5 and 0.4/(2/3)
        let rts: Vec<(f64, f64)> = [2.4, 3.6]
            .iter()
            .map(|&c| (c, additive(60.0, 40.0, 1.2, c)))
            .collect();
        assert_eq!(rts, vec![(2.4, 70.0), (3.6, 60.0)]);
        let b = cri(100.0, &rts, 1.2).unwrap();
        assert!((b.value - 0.6).abs() < 1e-12, "{}", b.value);
        assert!(b.flags.is_empty());
    }

    #[test]
    fn cri_flat_runtime_is_zero() {
        let b = cri(100.0, &[(2.4, 100.0), (3.6, 100.0)], 1.2).unwrap();
        assert_eq!(b.value, 0.0);
    }

    #[test]
    fn cri_clamps_and_flags() {
        let slow = cri(100.0, &[(2.4, 120.0), (3.6, 60.0)], 1.2).unwrap();
        assert!(slow.flags.contains(&Flag::ClampedNegativeCpi));
        assert!((slow.value - 0.3).abs() < 1e-12);
        let superlinear = cri(100.0, &[(2.4, 40.0)], 1.2).unwrap();
        assert_eq!(superlinear.value, 1.0);
        assert!(superlinear.flags.contains(&Flag::ClampedIndicator));
    }

    #[test]
    fn cri_rejects_bad_frequency_sets() {
        assert!(matches!(
            cri(100.0, &[], 1.2),
            Err(IndicatorError::InvalidInput(_))
        ));
        assert!(matches!(
            cri(100.0, &[(1.2, 90.0)], 1.2),
            Err(IndicatorError::InvalidInput(_))
        ));
    }

    #[test]
    fn headroom_weighting_differs_from_uniform() {
        let rts = [(2.4, 80.0), (3.6, 50.0)];
        let u = cri_weighted(100.0, &rts, 1.2, FrequencyWeighting::Uniform)
            .unwrap()
            .value;
        let h = cri_weighted(100.0, &rts, 1.2, FrequencyWeighting::Headroom)
            .unwrap()
            .value;
        // terms 0.4 and 0.75; headroom weights 0.5 and 2/3
        assert!((u - 0.575).abs() < 1e-12);
        assert!((h - (0.5 * 0.4 + 2.0 / 3.0 * 0.75) / (0.5 + 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn dri_additive_sixty_forty_disk() {
        let d = disk_design();
        // SSD removes all disk time
        let m = matrix_from(&d, |disk, _, c| {
            additive(60.0, if disk == "SSD" { 0.0 } else { 40.0 }, 1.2, c)
        });
        let b = dri(&m, &d, "w", Mode::Disk).unwrap();
        assert!((b.value - 0.4).abs() < 1e-12, "{}", b.value);
        assert!(nri(&m, &d, "w", Mode::Disk).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn dri_zero_disk_time_and_noise_clamp() {
        let d = disk_design();
        let m = matrix_from(&d, |_, _, c| additive(60.0, 40.0, 1.2, c));
        assert_eq!(dri(&m, &d, "w", Mode::Disk).unwrap().value, 0.0);

        // SSD column measured slower at high frequency: increment negative
        let m = matrix_from(&d, |disk, _, c| {
            let t = additive(60.0, 40.0, 1.2, c);
            if disk == "SSD" && c > 1.2 {
                t + 5.0
            } else {
                t
            }
        });
        let b = dri(&m, &d, "w", Mode::Disk).unwrap();
        assert_eq!(b.value, 0.0);
        assert!(b.flags.contains(&Flag::ClampedIndicator));
    }

    #[test]
    fn nri_additive_and_max_selection() {
        let d = disk_design();
        let m = matrix_from(&d, |_, bw, c| {
            let net = if bw >= 10.0 {
                0.0
            } else if bw >= 5.0 {
                20.0
            } else {
                40.0
            };
            additive(60.0, net, 1.2, c)
        });
        let b = nri(&m, &d, "w", Mode::Disk).unwrap();
        assert!((b.value - 0.4).abs() < 1e-12);
        // the 5 Gbps column alone: 60/80 - 0.6
        let mut only5 = d.clone();
        only5.network_bws = vec![5.0];
        let b5 = nri(&m, &only5, "w", Mode::Disk).unwrap();
        assert!((b5.value - 0.15).abs() < 1e-12);
    }

    #[test]
    fn mri_memory_stall_example() {
        let d = disk_design();
        // 60 s CPU + 20 s memory stall + 20 s disk; best pair removes the disk time
        let m = matrix_from(&d, |disk, bw, c| {
            let io = if disk == "SSD" && bw >= 10.0 {
                0.0
            } else {
                20.0
            };
            additive(60.0, 20.0 + io, 1.2, c)
        });
        let pair = IoVariant {
            disk_tier: "SSD".into(),
            network_bw: 10.0,
        };
        let rts: Vec<f64> = [1.2, 2.4, 3.6]
            .iter()
            .map(|&c| {
                m.mean(
                    "w",
                    Mode::Disk,
                    &ResourceScheme::new(c, "DDR3-1600", "SSD", 10.0),
                )
                .unwrap()
            })
            .collect();
        assert_eq!(rts, vec![80.0, 50.0, 40.0]);
        let upgraded = variant_cri(&m, &d, "w", Mode::Disk, &pair).unwrap();
        assert!((upgraded.value - 0.75).abs() < 1e-12);
        assert!((mri(&m, &d, "w", Mode::Disk).unwrap().value - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mri_extremes() {
        let d = disk_design();
        let cpu_only = matrix_from(&d, |_, _, c| additive(60.0, 0.0, 1.2, c));
        assert!(mri(&cpu_only, &d, "w", Mode::Disk).unwrap().value.abs() < 1e-12);
        let blocked = matrix_from(&d, |_, _, _| 100.0);
        assert_eq!(mri(&blocked, &d, "w", Mode::Disk).unwrap().value, 1.0);
    }

    #[test]
    fn missing_cells_are_named() {
        let d = disk_design();
        let mut m = RuntimeMatrix::new();
        for f in d.frequencies() {
            m.set_mean("w", Mode::Disk, d.baseline.at_freq(f), 100.0 * 1.2 / f);
        }
        match dri(&m, &d, "w", Mode::Disk) {
            Err(IndicatorError::IncompleteMatrix { missing, .. }) => {
                assert_eq!(missing.len(), 3);
                assert!(missing.iter().all(|s| s.disk_tier == "SSD"));
            }
            other => panic!("{other:?}"),
        }
        let set = compute_all(&m, &d, "w", Mode::Disk, &[Indicator::Cri]).unwrap();
        assert!((set.cri.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(set.dri, None);
        assert_eq!(set.mri, None);
        assert!(set.flags.contains(&Flag::IncompleteMatrix));
        assert!(compute_all(&m, &d, "w", Mode::Disk, &Indicator::ALL).is_err());
    }

    #[test]
    fn all_equal_matrix_gives_zeroes_except_memory() {
        // flat runtimes: CPU has no impact and no upgrade helps, so everything left is "memory"
        let d = disk_design();
        let m = matrix_from(&d, |_, _, _| 42.0);
        let s = compute_all(&m, &d, "w", Mode::Disk, &Indicator::ALL).unwrap();
        assert_eq!((s.cri, s.dri, s.nri), (Some(0.0), Some(0.0), Some(0.0)));
        assert_eq!(s.mri, Some(1.0));
    }

    fn set_of(c: f64, m: f64, d: f64, n: f64) -> IndicatorSet {
        let mut s = IndicatorSet::empty("w", Mode::Disk);
        s.cri = Some(c);
        s.mri = Some(m);
        s.dri = Some(d);
        s.nri = Some(n);
        s
    }

    #[test]
    fn ranking_examples() {
        let r = rank_bottleneck(&set_of(0.61, 0.16, 0.24, 0.02)).unwrap();
        assert_eq!(r.bottleneck(), Resource::Cpu);
        let r = rank_bottleneck(&set_of(0.53, 0.30, 0.20, 0.06)).unwrap();
        let order: Vec<Resource> = r.order.iter().map(|e| e.resource).collect();
        assert_eq!(
            order,
            vec![
                Resource::Cpu,
                Resource::Memory,
                Resource::Disk,
                Resource::Network
            ]
        );
        assert!(r.tie_groups.is_empty());
        let r = rank_bottleneck(&set_of(0.5, 0.5, 0.5, 0.5)).unwrap();
        assert_eq!(r.bottleneck(), Resource::Cpu);
        assert_eq!(
            r.tie_groups,
            vec![vec![
                Resource::Cpu,
                Resource::Memory,
                Resource::Disk,
                Resource::Network
            ]]
        );
    }

    #[test]
    fn ranking_tie_order_and_partial_sets() {
        let r = rank_bottleneck(&set_of(0.1, 0.3, 0.3, 0.2)).unwrap();
        let order: Vec<Resource> = r.order.iter().map(|e| e.resource).collect();
        assert_eq!(
            order,
            vec![
                Resource::Memory,
                Resource::Disk,
                Resource::Network,
                Resource::Cpu
            ]
        );
        assert_eq!(r.tie_groups, vec![vec![Resource::Memory, Resource::Disk]]);

        let mut partial = IndicatorSet::empty("w", Mode::Disk);
        assert!(rank_bottleneck(&partial).is_err());
        partial.dri = Some(0.2);
        let r = rank_bottleneck(&partial).unwrap();
        assert_eq!(r.order.len(), 1);
        assert!(r.note.unwrap().contains("CRI, MRI, NRI"));
    }

    #[test]
    fn cost_cutoff() {
        assert!(!io_upgrades_worthwhile(0.7, 0.5));
        assert!(io_upgrades_worthwhile(0.3, 0.5));
    }
}
