//! Resource schemes, experiment designs, run records and the aggregated runtime matrix.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Relative tolerance used whenever two frequencies (or bandwidths) are compared.
pub const FREQ_REL_TOL: f64 = 1e-6;

/// True when `a` and `b` agree within [`FREQ_REL_TOL`].
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= FREQ_REL_TOL * a.abs().max(b.abs())
}

/// Workload variant: input read from distributed storage or from an in-memory cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Disk,
    Memory,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Disk, Mode::Memory];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Disk => "disk",
            Mode::Memory => "memory",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "disk" => Ok(Mode::Disk),
            "memory" => Ok(Mode::Memory),
            other => Err(format!("unknown mode `{other}` (expected disk or memory)")),
        }
    }
}

/// One configuration point `<cpu frequency, memory, disk, network>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceScheme {
    /// CPU frequency in GHz.
    pub cpu_freq: f64,
    pub memory_tier: String,
    pub disk_tier: String,
    /// Network bandwidth in Gbps.
    pub network_bw: f64,
}

impl ResourceScheme {
    pub fn new(cpu_freq: f64, memory_tier: &str, disk_tier: &str, network_bw: f64) -> Self {
        ResourceScheme {
            cpu_freq,
            memory_tier: memory_tier.to_string(),
            disk_tier: disk_tier.to_string(),
            network_bw,
        }
    }

    /// Same scheme with a different CPU frequency.
    pub fn at_freq(&self, cpu_freq: f64) -> Self {
        ResourceScheme {
            cpu_freq,
            ..self.clone()
        }
    }

    pub fn io_variant(&self) -> IoVariant {
        IoVariant {
            disk_tier: self.disk_tier.clone(),
            network_bw: self.network_bw,
        }
    }

    /// Tolerance-aware equality (frequency and bandwidth within [`FREQ_REL_TOL`]).
    pub fn matches(&self, other: &ResourceScheme) -> bool {
        approx_eq(self.cpu_freq, other.cpu_freq)
            && approx_eq(self.network_bw, other.network_bw)
            && self.memory_tier == other.memory_tier
            && self.disk_tier == other.disk_tier
    }
}

impl fmt::Display for ResourceScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "<{} GHz, {}, {}, {} Gbps>",
            self.cpu_freq, self.memory_tier, self.disk_tier, self.network_bw
        )
    }
}

/// The I/O part of a scheme: everything but the CPU frequency (memory is never upgraded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoVariant {
    pub disk_tier: String,
    pub network_bw: f64,
}

impl IoVariant {
    pub fn matches(&self, other: &IoVariant) -> bool {
        self.disk_tier == other.disk_tier && approx_eq(self.network_bw, other.network_bw)
    }

    /// Compact label in the `H1` / `S10` style (first letter of the disk tier, then bandwidth).
    pub fn short_label(&self) -> String {
        let disk = self
            .disk_tier
            .chars()
            .next()
            .map(|c| c.to_ascii_uppercase())
            .unwrap_or('?');
        format!("{disk}{}", self.network_bw)
    }
}

/// Which (disk, network) pairs enter the memory relative impact maximisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairPolicy {
    #[default]
    BestPairOnly,
    FullCrossProduct,
}

/// The four comparable indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Indicator {
    #[serde(alias = "cri")]
    Cri,
    #[serde(alias = "mri")]
    Mri,
    #[serde(alias = "dri")]
    Dri,
    #[serde(alias = "nri")]
    Nri,
}

impl Indicator {
    /// Report order: CRI, MRI, DRI, NRI.
    pub const ALL: [Indicator; 4] = [
        Indicator::Cri,
        Indicator::Mri,
        Indicator::Dri,
        Indicator::Nri,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Indicator::Cri => "CRI",
            Indicator::Mri => "MRI",
            Indicator::Dri => "DRI",
            Indicator::Nri => "NRI",
        }
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Indicator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CRI" => Ok(Indicator::Cri),
            "MRI" => Ok(Indicator::Mri),
            "DRI" => Ok(Indicator::Dri),
            "NRI" => Ok(Indicator::Nri),
            other => Err(format!("unknown indicator `{other}`")),
        }
    }
}

fn default_disk_order() -> Vec<String> {
    vec!["HDD".into(), "SSD".into(), "RAMDISK".into()]
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Disk, Mode::Memory]
}

fn default_replicates() -> u32 {
    3
}

/// Baseline scheme plus the alternative frequency, disk and network sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDesign {
    pub baseline: ResourceScheme,
    /// Alternative frequencies, ascending, each above the baseline frequency.
    pub cpu_freqs: Vec<f64>,
    /// Upgraded disk tiers.
    #[serde(default)]
    pub disk_tiers: Vec<String>,
    /// Upgraded bandwidths in Gbps.
    #[serde(default)]
    pub network_bws: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: u32,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub pair_policy: PairPolicy,
    /// Disk tier labels from slowest to fastest.
    #[serde(default = "default_disk_order")]
    pub disk_tier_order: Vec<String>,
}

/// One broken rule in an [`ExperimentDesign`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

impl ExperimentDesign {
    /// 1.2 GHz / DDR3-1600 / HDD / 1 Gbps baseline with CF = {2.4, 3.6}, DB = {SSD}, NB = {5, 10}.
    pub fn reference_design() -> Self {
        ExperimentDesign {
            baseline: ResourceScheme::new(1.2, "DDR3-1600", "HDD", 1.0),
            cpu_freqs: vec![2.4, 3.6],
            disk_tiers: vec!["SSD".into()],
            network_bws: vec![5.0, 10.0],
            replicates: 3,
            modes: default_modes(),
            pair_policy: PairPolicy::BestPairOnly,
            disk_tier_order: default_disk_order(),
        }
    }

    /// Position of a disk tier in the declared order.
    pub fn disk_rank(&self, tier: &str) -> Option<usize> {
        self.disk_tier_order.iter().position(|t| t == tier)
    }

    /// `{c_b} ∪ CF`, ascending.
    pub fn frequencies(&self) -> Vec<f64> {
        std::iter::once(self.baseline.cpu_freq)
            .chain(self.cpu_freqs.iter().copied())
            .collect()
    }

    pub fn baseline_variant(&self) -> IoVariant {
        self.baseline.io_variant()
    }

    /// Fastest declared disk tier among the upgrades, or the baseline tier if none.
    pub fn best_disk(&self) -> String {
        self.disk_tiers
            .iter()
            .max_by_key(|t| self.disk_rank(t))
            .cloned()
            .unwrap_or_else(|| self.baseline.disk_tier.clone())
    }

    /// Highest upgraded bandwidth, or the baseline bandwidth if none.
    pub fn best_network(&self) -> f64 {
        self.network_bws
            .iter()
            .copied()
            .fold(self.baseline.network_bw, f64::max)
    }

    /// `(d_j, n_k)` pairs selected for the memory indicator.
    pub fn mri_pairs(&self) -> Vec<IoVariant> {
        match self.pair_policy {
            PairPolicy::BestPairOnly => {
                vec![IoVariant {
                    disk_tier: self.best_disk(),
                    network_bw: self.best_network(),
                }]
            }
            PairPolicy::FullCrossProduct => {
                let disks: Vec<String> = if self.disk_tiers.is_empty() {
                    vec![self.baseline.disk_tier.clone()]
                } else {
                    self.disk_tiers.clone()
                };
                let nets: Vec<f64> = if self.network_bws.is_empty() {
                    vec![self.baseline.network_bw]
                } else {
                    self.network_bws.clone()
                };
                disks
                    .iter()
                    .flat_map(|d| {
                        nets.iter().map(move |&n| IoVariant {
                            disk_tier: d.clone(),
                            network_bw: n,
                        })
                    })
                    .collect()
            }
        }
    }

    /// I/O variants whose frequency columns the requested indicators consume, in a fixed order:
    /// baseline, disk upgrades, network upgrades, then memory-indicator pairs. Duplicates removed.
    pub fn io_variants(&self, indicators: &[Indicator]) -> Vec<IoVariant> {
        let wants = |i: Indicator| indicators.contains(&i);
        let base = self.baseline_variant();
        let mut out: Vec<IoVariant> = Vec::new();
        let mut push = |v: IoVariant| {
            if !out.iter().any(|o| o.matches(&v)) {
                out.push(v);
            }
        };
        if wants(Indicator::Cri) || wants(Indicator::Dri) || wants(Indicator::Nri) {
            push(base.clone());
        }
        if wants(Indicator::Dri) {
            for d in &self.disk_tiers {
                push(IoVariant {
                    disk_tier: d.clone(),
                    network_bw: base.network_bw,
                });
            }
        }
        if wants(Indicator::Nri) {
            for &n in &self.network_bws {
                push(IoVariant {
                    disk_tier: base.disk_tier.clone(),
                    network_bw: n,
                });
            }
        }
        if wants(Indicator::Mri) {
            for v in self.mri_pairs() {
                push(v);
            }
        }
        out
    }

    /// Every scheme consistent with the design's sets (full cross product of alternatives).
    pub fn all_schemes(&self) -> Vec<ResourceScheme> {
        let disks: Vec<&String> = std::iter::once(&self.baseline.disk_tier)
            .chain(self.disk_tiers.iter())
            .collect();
        let nets: Vec<f64> = std::iter::once(self.baseline.network_bw)
            .chain(self.network_bws.iter().copied())
            .collect();
        let mut out = Vec::new();
        for d in &disks {
            for &n in &nets {
                for f in self.frequencies() {
                    out.push(ResourceScheme {
                        cpu_freq: f,
                        memory_tier: self.baseline.memory_tier.clone(),
                        disk_tier: (*d).clone(),
                        network_bw: n,
                    });
                }
            }
        }
        out
    }

    /// Canonical design scheme a measured scheme belongs to, if any.
    pub fn match_scheme(&self, scheme: &ResourceScheme) -> Option<ResourceScheme> {
        self.all_schemes().into_iter().find(|s| s.matches(scheme))
    }
}

/// Check every design invariant; an empty result means the design is usable.
pub fn validate_design(design: &ExperimentDesign) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut violation = |field: &str, rule: String| {
        v.push(Violation {
            field: field.into(),
            rule,
        })
    };
    let base = &design.baseline;

    if !(base.cpu_freq > 0.0) || !base.cpu_freq.is_finite() {
        violation("baseline.cpu_freq", "cpu frequency must be > 0".into());
    }
    if !(base.network_bw > 0.0) || !base.network_bw.is_finite() {
        violation(
            "baseline.network_bw",
            "network bandwidth must be > 0".into(),
        );
    }
    if design.cpu_freqs.is_empty() {
        violation(
            "cpu_freqs",
            "at least one alternative frequency is required".into(),
        );
    }
    for (i, &f) in design.cpu_freqs.iter().enumerate() {
        if !(f > base.cpu_freq) || approx_eq(f, base.cpu_freq) {
            violation(
                "cpu_freqs",
                format!(
                    "frequency must exceed baseline ({f} GHz at index {i} is not above {} GHz)",
                    base.cpu_freq
                ),
            );
        }
        if i > 0 && !(f > design.cpu_freqs[i - 1]) {
            violation(
                "cpu_freqs",
                format!("frequencies must be strictly ascending (index {i})"),
            );
        }
    }
    match design.disk_rank(&base.disk_tier) {
        None => violation(
            "baseline.disk_tier",
            format!("tier `{}` is not in disk_tier_order", base.disk_tier),
        ),
        Some(base_rank) => {
            for d in &design.disk_tiers {
                match design.disk_rank(d) {
                    None => violation(
                        "disk_tiers",
                        format!("tier `{d}` is not in disk_tier_order"),
                    ),
                    Some(r) if r <= base_rank => violation(
                        "disk_tiers",
                        format!("tier `{d}` must outrank baseline tier `{}`", base.disk_tier),
                    ),
                    Some(_) => {}
                }
            }
        }
    }
    for (i, d) in design.disk_tier_order.iter().enumerate() {
        if design.disk_tier_order[..i].contains(d) {
            violation("disk_tier_order", format!("tier `{d}` listed twice"));
        }
    }
    for &n in &design.network_bws {
        if !(n > base.network_bw) || approx_eq(n, base.network_bw) {
            violation(
                "network_bws",
                format!(
                    "bandwidth must exceed baseline ({n} Gbps is not above {} Gbps)",
                    base.network_bw
                ),
            );
        }
    }
    if design.replicates < 1 {
        violation("replicates", "replicates ≥ 1".into());
    }
    if design.modes.is_empty() {
        violation("modes", "at least one running mode is required".into());
    }
    v
}

/// A (mode, scheme) pair whose mean runtime some indicator consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mode: Mode,
    pub scheme: ResourceScheme,
}

/// Cells the requested indicators need, ordered mode, then I/O variant, then frequency.
pub fn required_cells(design: &ExperimentDesign, indicators: &[Indicator]) -> Vec<Cell> {
    let variants = design.io_variants(indicators);
    let mut out = Vec::new();
    for &mode in &design.modes {
        for v in &variants {
            for f in design.frequencies() {
                out.push(Cell {
                    mode,
                    scheme: ResourceScheme {
                        cpu_freq: f,
                        memory_tier: design.baseline.memory_tier.clone(),
                        disk_tier: v.disk_tier.clone(),
                        network_bw: v.network_bw,
                    },
                });
            }
        }
    }
    out
}

/// Mean resource utilisation during a run, all in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilizationSummary {
    pub cpu_util_pct: f64,
    pub disk_bw_util_pct: f64,
    pub net_bw_util_pct: f64,
}

impl UtilizationSummary {
    pub fn is_valid(&self) -> bool {
        [
            self.cpu_util_pct,
            self.disk_bw_util_pct,
            self.net_bw_util_pct,
        ]
        .iter()
        .all(|v| (0.0..=100.0).contains(v))
    }
}

/// One measured (or simulated) execution of a workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub workload_id: String,
    pub mode: Mode,
    pub scheme: ResourceScheme,
    pub replicate: u32,
    pub runtime_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilization: Option<UtilizationSummary>,
    #[serde(default)]
    pub warmup: bool,
}

impl RunRecord {
    /// Reasons this record breaks the record invariants, if any.
    pub fn check(&self) -> Result<(), String> {
        if self.workload_id.trim().is_empty() {
            return Err("workload id is empty".into());
        }
        if !(self.runtime_s > 0.0) || !self.runtime_s.is_finite() {
            return Err(format!("runtime_s must be > 0 (got {})", self.runtime_s));
        }
        if self.replicate < 1 {
            return Err("replicate index must be ≥ 1".into());
        }
        if !(self.scheme.cpu_freq > 0.0) {
            return Err(format!(
                "cpu_freq must be > 0 (got {})",
                self.scheme.cpu_freq
            ));
        }
        if !(self.scheme.network_bw > 0.0) {
            return Err(format!(
                "network_bw must be > 0 (got {})",
                self.scheme.network_bw
            ));
        }
        if let Some(u) = &self.utilization {
            if !u.is_valid() {
                return Err("utilization values must lie in [0, 100]".into());
            }
        }
        Ok(())
    }
}

/// Mean, sample standard deviation and count of one matrix cell.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CellStats {
    pub mean_runtime_s: f64,
    pub stddev_s: f64,
    pub n_samples: usize,
    #[serde(skip)]
    m2: f64,
}

impl PartialEq for CellStats {
    fn eq(&self, other: &Self) -> bool {
        self.mean_runtime_s == other.mean_runtime_s
            && self.stddev_s == other.stddev_s
            && self.n_samples == other.n_samples
    }
}

impl CellStats {
    fn push(&mut self, x: f64) {
        // Welford: identical samples leave the mean bit-exact and the variance at zero.
        self.n_samples += 1;
        let delta = x - self.mean_runtime_s;
        self.mean_runtime_s += delta / self.n_samples as f64;
        self.m2 += delta * (x - self.mean_runtime_s);
        self.stddev_s = if self.n_samples > 1 {
            (self.m2 / (self.n_samples - 1) as f64).max(0.0).sqrt()
        } else {
            0.0
        };
    }

    pub fn from_mean(mean_runtime_s: f64, stddev_s: f64, n_samples: usize) -> Self {
        CellStats {
            mean_runtime_s,
            stddev_s,
            n_samples,
            m2: 0.0,
        }
    }
}

/// One serialised cell of a [`RuntimeMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub workload_id: String,
    pub mode: Mode,
    pub scheme: ResourceScheme,
    #[serde(flatten)]
    pub stats: CellStats,
}

/// Mean running time per (workload, mode, scheme).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<MatrixCell>", into = "Vec<MatrixCell>")]
pub struct RuntimeMatrix {
    groups: BTreeMap<(String, Mode), Vec<(ResourceScheme, CellStats)>>,
}

impl From<Vec<MatrixCell>> for RuntimeMatrix {
    fn from(cells: Vec<MatrixCell>) -> Self {
        let mut m = RuntimeMatrix::default();
        for c in cells {
            m.insert(&c.workload_id, c.mode, c.scheme, c.stats);
        }
        m
    }
}

impl From<RuntimeMatrix> for Vec<MatrixCell> {
    fn from(m: RuntimeMatrix) -> Self {
        m.cells().collect()
    }
}

impl RuntimeMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold records into cells; warmup records are skipped.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> Self {
        let mut m = RuntimeMatrix::default();
        for r in records {
            m.add_sample(r);
        }
        m
    }

    /// Add one non-warmup sample. Warmup records are ignored.
    pub fn add_sample(&mut self, r: &RunRecord) {
        if r.warmup {
            return;
        }
        let group = self
            .groups
            .entry((r.workload_id.clone(), r.mode))
            .or_default();
        match group.iter_mut().find(|(s, _)| s.matches(&r.scheme)) {
            Some((_, stats)) => stats.push(r.runtime_s),
            None => {
                let mut stats = CellStats::from_mean(0.0, 0.0, 0);
                stats.push(r.runtime_s);
                group.push((r.scheme.clone(), stats));
            }
        }
    }

    /// Insert (or replace) a cell with precomputed statistics.
    pub fn insert(
        &mut self,
        workload_id: &str,
        mode: Mode,
        scheme: ResourceScheme,
        stats: CellStats,
    ) {
        let group = self
            .groups
            .entry((workload_id.to_string(), mode))
            .or_default();
        match group.iter_mut().find(|(s, _)| s.matches(&scheme)) {
            Some(slot) => slot.1 = stats,
            None => group.push((scheme, stats)),
        }
    }

    /// Convenience for fixtures: a cell with a single exact mean.
    pub fn set_mean(
        &mut self,
        workload_id: &str,
        mode: Mode,
        scheme: ResourceScheme,
        mean_runtime_s: f64,
    ) {
        self.insert(
            workload_id,
            mode,
            scheme,
            CellStats::from_mean(mean_runtime_s, 0.0, 1),
        );
    }

    pub fn get(
        &self,
        workload_id: &str,
        mode: Mode,
        scheme: &ResourceScheme,
    ) -> Option<&CellStats> {
        self.groups
            .get(&(workload_id.to_string(), mode))?
            .iter()
            .find(|(s, _)| s.matches(scheme))
            .map(|(_, st)| st)
    }

    pub fn mean(&self, workload_id: &str, mode: Mode, scheme: &ResourceScheme) -> Option<f64> {
        self.get(workload_id, mode, scheme)
            .map(|s| s.mean_runtime_s)
    }

    /// Distinct (workload, mode) groups in sorted order.
    pub fn groups(&self) -> impl Iterator<Item = (&str, Mode)> + '_ {
        self.groups.keys().map(|(w, m)| (w.as_str(), *m))
    }

    pub fn cells(&self) -> impl Iterator<Item = MatrixCell> + '_ {
        self.groups.iter().flat_map(|((w, m), cells)| {
            cells.iter().map(move |(s, st)| MatrixCell {
                workload_id: w.clone(),
                mode: *m,
                scheme: s.clone(),
                stats: *st,
            })
        })
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multiply every mean and stddev by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        for cells in out.groups.values_mut() {
            for (_, st) in cells.iter_mut() {
                st.mean_runtime_s *= k;
                st.stddev_s *= k;
            }
        }
        out
    }
}
