//! Synthetic phase-based workloads with known per-resource time.
//!
//! Each phase spends `cpu_work / f` seconds computing at frequency `f`, a frequency-independent
//! memory stall, and disk/network time that depends on the configured tier. A fraction `overlap`
//! of the I/O can hide behind computation:
//!
//! ```text
//! compute = cpu_work / f + mem_stall
//! io      = disk[tier] + net[bw]
//! phase   = o * max(compute, io) + (1 - o) * (compute + io)
//! ```

mod scale_model;

pub use scale_model::{
    fit_scale_model, predict_rt, Observation, ScaleFit, ScaleModel, ScaleModelError,
};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    approx_eq, required_cells, ExperimentDesign, Indicator, Mode, ResourceScheme, RunRecord,
    RuntimeMatrix,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("infeasible generation targets: {0}")]
    Infeasible(String),
}

/// Network time at one bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetTime {
    pub gbps: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    /// GHz·s of computation; takes `cpu_work / f` seconds at `f` GHz.
    pub cpu_work: f64,
    #[serde(default)]
    pub mem_stall_s: f64,
    /// Disk time per tier. Empty means the phase does no disk I/O.
    #[serde(default)]
    pub disk_time_s: BTreeMap<String, f64>,
    /// Network time per bandwidth. Empty means no network I/O. A bandwidth without an entry
    /// scales the lowest-bandwidth entry by `bw_ref / bw`.
    #[serde(default)]
    pub net_time_s: Vec<NetTime>,
    /// Fraction of I/O that can overlap with computation, in [0, 1].
    #[serde(default)]
    pub overlap: f64,
}

/// Standalone time per resource for one phase under a scheme.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct PhaseTimes {
    cpu: f64,
    mem: f64,
    disk: f64,
    net: f64,
}

impl PhaseSpec {
    fn check(&self) -> Result<(), SimError> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SimError::InvalidInput(format!(
                    "{name} must be ≥ 0 (got {v})"
                )))
            }
        };
        nonneg("cpu_work", self.cpu_work)?;
        nonneg("mem_stall_s", self.mem_stall_s)?;
        for (tier, &t) in &self.disk_time_s {
            nonneg(&format!("disk_time_s[{tier}]"), t)?;
        }
        for n in &self.net_time_s {
            nonneg("net_time_s.seconds", n.seconds)?;
            if !(n.gbps > 0.0) {
                return Err(SimError::InvalidInput(format!(
                    "net_time_s bandwidth must be > 0 (got {})",
                    n.gbps
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(SimError::InvalidInput(format!(
                "overlap must lie in [0, 1] (got {})",
                self.overlap
            )));
        }
        Ok(())
    }

    fn disk_time(&self, tier: &str) -> Result<f64, SimError> {
        if self.disk_time_s.is_empty() {
            return Ok(0.0);
        }
        self.disk_time_s
            .get(tier)
            .copied()
            .ok_or_else(|| SimError::InvalidInput(format!("no disk time for tier `{tier}`")))
    }

    fn net_time(&self, bw: f64) -> Result<f64, SimError> {
        if let Some(n) = self.net_time_s.iter().find(|n| approx_eq(n.gbps, bw)) {
            return Ok(n.seconds);
        }
        match self
            .net_time_s
            .iter()
            .min_by(|a, b| a.gbps.total_cmp(&b.gbps))
        {
            None => Ok(0.0),
            Some(r) if bw > 0.0 => Ok(r.seconds * r.gbps / bw),
            Some(_) => Err(SimError::InvalidInput(format!(
                "bandwidth must be > 0 (got {bw})"
            ))),
        }
    }

    fn times(&self, s: &ResourceScheme) -> Result<PhaseTimes, SimError> {
        self.check()?;
        if !(s.cpu_freq > 0.0) {
            return Err(SimError::InvalidInput(format!(
                "cpu frequency must be > 0 (got {})",
                s.cpu_freq
            )));
        }
        Ok(PhaseTimes {
            cpu: self.cpu_work / s.cpu_freq,
            mem: self.mem_stall_s,
            disk: self.disk_time(&s.disk_tier)?,
            net: self.net_time(s.network_bw)?,
        })
    }

    fn duration(&self, t: &PhaseTimes) -> f64 {
        let compute = t.cpu + t.mem;
        let io = t.disk + t.net;
        let o = self.overlap;
        o * compute.max(io) + (1.0 - o) * (compute + io)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadModel {
    pub id: String,
    pub phases: Vec<PhaseSpec>,
}

impl WorkloadModel {
    fn check(&self) -> Result<(), SimError> {
        if self.phases.is_empty() {
            return Err(SimError::InvalidInput(format!(
                "workload `{}` has no phases",
                self.id
            )));
        }
        Ok(())
    }

    pub fn max_overlap(&self) -> f64 {
        self.phases.iter().map(|p| p.overlap).fold(0.0, f64::max)
    }
}

/// Noiseless runtime of a workload under a scheme.
pub fn simulate_rt(w: &WorkloadModel, s: &ResourceScheme) -> Result<f64, SimError> {
    w.check()?;
    let mut total = 0.0;
    for p in &w.phases {
        total += p.duration(&p.times(s)?);
    }
    Ok(total)
}

/// Per-resource standalone time divided by the runtime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shares {
    pub cpu: f64,
    pub memory: f64,
    pub disk: f64,
    pub network: f64,
    pub runtime_s: f64,
    /// Set when some phase overlaps I/O with compute; the shares then double-count and may sum
    /// above 1.
    pub overlapped: bool,
}

impl Shares {
    pub fn sum(&self) -> f64 {
        self.cpu + self.memory + self.disk + self.network
    }

    /// Values in resource order cpu, memory, disk, network.
    pub fn as_array(&self) -> [f64; 4] {
        [self.cpu, self.memory, self.disk, self.network]
    }
}

/// Ground-truth attribution of the runtime to each resource.
pub fn ground_truth_shares(w: &WorkloadModel, s: &ResourceScheme) -> Result<Shares, SimError> {
    w.check()?;
    let mut acc = PhaseTimes::default();
    let mut rt = 0.0;
    for p in &w.phases {
        let t = p.times(s)?;
        rt += p.duration(&t);
        acc.cpu += t.cpu;
        acc.mem += t.mem;
        acc.disk += t.disk;
        acc.net += t.net;
    }
    if !(rt > 0.0) {
        return Err(SimError::InvalidInput(format!(
            "workload `{}` has zero runtime",
            w.id
        )));
    }
    Ok(Shares {
        cpu: acc.cpu / rt,
        memory: acc.mem / rt,
        disk: acc.disk / rt,
        network: acc.net / rt,
        runtime_s: rt,
        overlapped: w.phases.iter().any(|p| p.overlap > 0.0),
    })
}

/// Optional baseline share target per resource.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ShareTargets {
    pub cpu: Option<f64>,
    pub memory: Option<f64>,
    pub disk: Option<f64>,
    pub network: Option<f64>,
}

impl ShareTargets {
    fn as_array(&self) -> [Option<f64>; 4] {
        [self.cpu, self.memory, self.disk, self.network]
    }
}

/// Parameters for [`gen_random_workload`].
///
/// Targets are fractions of the serial (no-overlap) baseline runtime. Each specified target is
/// drawn uniformly from `target ± tolerance`; unspecified resources share the remainder at random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub n_phases: (usize, usize),
    pub targets: ShareTargets,
    pub tolerance: f64,
    pub overlap: (f64, f64),
    pub total_runtime_s: (f64, f64),
    /// Baseline frequency in GHz.
    pub base_freq: f64,
    /// Disk tiers, baseline first, then upgrades from slowest to fastest.
    pub disk_tiers: Vec<String>,
    /// Bandwidths, baseline first, then upgrades ascending.
    pub network_bws: Vec<f64>,
    /// Fraction of baseline I/O time left after an upgrade. (0, 0) removes it entirely.
    pub upgrade_residual: (f64, f64),
}

impl GenParams {
    /// Parameters whose tiers and frequency follow a design.
    pub fn for_design(design: &ExperimentDesign) -> Self {
        let mut disks = design.disk_tiers.clone();
        disks.sort_by_key(|d| design.disk_rank(d));
        let mut nets = design.network_bws.clone();
        nets.sort_by(f64::total_cmp);
        GenParams {
            n_phases: (1, 4),
            targets: ShareTargets::default(),
            tolerance: 0.05,
            overlap: (0.0, 0.0),
            total_runtime_s: (50.0, 500.0),
            base_freq: design.baseline.cpu_freq,
            disk_tiers: std::iter::once(design.baseline.disk_tier.clone())
                .chain(disks)
                .collect(),
            network_bws: std::iter::once(design.baseline.network_bw)
                .chain(nets)
                .collect(),
            upgrade_residual: (0.0, 0.0),
        }
    }

    fn check(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidInput(m));
        if self.n_phases.0 < 1 || self.n_phases.0 > self.n_phases.1 {
            return bad(format!(
                "phase range {:?} must satisfy 1 ≤ min ≤ max",
                self.n_phases
            ));
        }
        let unit = |r: (f64, f64)| 0.0 <= r.0 && r.0 <= r.1 && r.1 <= 1.0;
        if !unit(self.overlap) {
            return bad(format!(
                "overlap range {:?} must lie in [0, 1]",
                self.overlap
            ));
        }
        if !unit(self.upgrade_residual) {
            return bad(format!(
                "upgrade residual range {:?} must lie in [0, 1]",
                self.upgrade_residual
            ));
        }
        if !(self.total_runtime_s.0 > 0.0 && self.total_runtime_s.0 <= self.total_runtime_s.1) {
            return bad(format!(
                "runtime range {:?} must be positive and ordered",
                self.total_runtime_s
            ));
        }
        if !(self.base_freq > 0.0) {
            return bad(format!(
                "base frequency must be > 0 (got {})",
                self.base_freq
            ));
        }
        if !(self.tolerance >= 0.0) {
            return bad(format!("tolerance must be ≥ 0 (got {})", self.tolerance));
        }
        if self.disk_tiers.is_empty() || self.network_bws.is_empty() {
            return bad("at least the baseline disk tier and bandwidth are required".into());
        }
        for t in self.targets.as_array().into_iter().flatten() {
            if !(0.0..=1.0).contains(&t) {
                return bad(format!("share target {t} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Random partition of 1 into `n` parts (flat Dirichlet).
fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter().map(|d| d / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

const MAX_DRAWS: usize = 10_000;

fn draw_shares(rng: &mut ChaCha8Rng, p: &GenParams) -> Result<[f64; 4], SimError> {
    let targets = p.targets.as_array();
    let band = |t: f64| ((t - p.tolerance).max(0.0), (t + p.tolerance).min(1.0));
    let lows: f64 = targets.iter().flatten().map(|&t| band(t).0).sum();
    let highs: f64 = targets.iter().flatten().map(|&t| band(t).1).sum();
    let unspecified: Vec<usize> = (0..4).filter(|&i| targets[i].is_none()).collect();
    if lows > 1.0 + 1e-12 {
        return Err(SimError::Infeasible(format!(
            "share targets need at least {lows:.3} of the runtime"
        )));
    }
    if unspecified.is_empty() && highs < 1.0 - 1e-12 {
        return Err(SimError::Infeasible(format!(
            "share targets cover at most {highs:.3} of the runtime"
        )));
    }

    for _ in 0..MAX_DRAWS {
        let mut s = [0.0; 4];
        if unspecified.is_empty() {
            // three free draws, the last share closes the sum
            for i in 0..3 {
                s[i] = uniform(rng, band(targets[i].unwrap()));
            }
            s[3] = 1.0 - s[0] - s[1] - s[2];
            let (lo, hi) = band(targets[3].unwrap());
            if s[3] >= lo - 1e-12 && s[3] <= hi + 1e-12 {
                s[3] = s[3].max(0.0);
                return Ok(s);
            }
            continue;
        }
        let mut used = 0.0;
        for (i, t) in targets.iter().enumerate() {
            if let Some(t) = t {
                s[i] = uniform(rng, band(*t));
                used += s[i];
            }
        }
        if used > 1.0 {
            continue;
        }
        let rest = simplex(rng, unspecified.len());
        for (k, &i) in unspecified.iter().enumerate() {
            s[i] = (1.0 - used) * rest[k];
        }
        return Ok(s);
    }
    Err(SimError::Infeasible(
        "no share vector within tolerance after repeated draws".into(),
    ))
}

/// Deterministic random workload whose serial baseline shares follow `params.targets`.
pub fn gen_random_workload(seed: u64, params: &GenParams) -> Result<WorkloadModel, SimError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shares = draw_shares(&mut rng, params)?;
    let total = uniform(&mut rng, params.total_runtime_s);
    let n = if params.n_phases.1 > params.n_phases.0 {
        rng.random_range(params.n_phases.0..=params.n_phases.1)
    } else {
        params.n_phases.0
    };
    let split: Vec<Vec<f64>> = (0..4).map(|_| simplex(&mut rng, n)).collect();

    // residual fraction per upgraded tier, non-increasing with tier rank
    let mut residuals = |count: usize| {
        let mut r: Vec<f64> = (0..count)
            .map(|_| uniform(&mut rng, params.upgrade_residual))
            .collect();
        r.sort_by(|a, b| b.total_cmp(a));
        r
    };
    let disk_res = residuals(params.disk_tiers.len() - 1);
    let net_res = residuals(params.network_bws.len() - 1);

    let mut phases = Vec::with_capacity(n);
    for k in 0..n {
        let cpu_s = shares[0] * total * split[0][k];
        let disk_s = shares[2] * total * split[2][k];
        let net_s = shares[3] * total * split[3][k];
        let mut disk_time_s = BTreeMap::new();
        disk_time_s.insert(params.disk_tiers[0].clone(), disk_s);
        for (tier, r) in params.disk_tiers[1..].iter().zip(&disk_res) {
            disk_time_s.insert(tier.clone(), disk_s * r);
        }
        let mut net_time_s = vec![NetTime {
            gbps: params.network_bws[0],
            seconds: net_s,
        }];
        for (&bw, r) in params.network_bws[1..].iter().zip(&net_res) {
            net_time_s.push(NetTime {
                gbps: bw,
                seconds: net_s * r,
            });
        }
        phases.push(PhaseSpec {
            cpu_work: cpu_s * params.base_freq,
            mem_stall_s: shares[1] * total * split[1][k],
            disk_time_s,
            net_time_s,
            overlap: uniform(&mut rng, params.overlap),
        });
    }
    Ok(WorkloadModel {
        id: format!("sim-{seed}"),
        phases,
    })
}

/// Multiplicative measurement noise `rt · (1 + ε)`, ε ~ N(0, sigma_rel²) truncated so the
/// result stays positive.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl NoiseSource {
    pub fn new(seed: u64, sigma_rel: f64) -> Result<Self, SimError> {
        if !(sigma_rel >= 0.0) || !sigma_rel.is_finite() {
            return Err(SimError::InvalidInput(format!(
                "sigma_rel must be ≥ 0 (got {sigma_rel})"
            )));
        }
        let normal = (sigma_rel > 0.0).then(|| Normal::new(0.0, sigma_rel).expect("finite sigma"));
        Ok(NoiseSource {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal,
        })
    }

    pub fn apply(&mut self, rt: f64) -> f64 {
        let Some(normal) = &self.normal else {
            return rt;
        };
        loop {
            let eps = normal.sample(&mut self.rng);
            if 1.0 + eps > 0.0 {
                return rt * (1.0 + eps);
            }
        }
    }
}

pub fn add_noise(rt: f64, sigma_rel: f64, seed: u64) -> Result<f64, SimError> {
    Ok(NoiseSource::new(seed, sigma_rel)?.apply(rt))
}

/// Noiseless matrix over every cell the design's indicators need, for each design mode.
pub fn simulate_matrix(
    w: &WorkloadModel,
    design: &ExperimentDesign,
) -> Result<RuntimeMatrix, SimError> {
    let mut m = RuntimeMatrix::new();
    for cell in required_cells(design, &Indicator::ALL) {
        let rt = simulate_rt(w, &cell.scheme)?;
        m.set_mean(&w.id, cell.mode, cell.scheme, rt);
    }
    Ok(m)
}

/// Run records for every required cell and replicate; memory-mode runs get a warmup record first.
pub fn simulate_records(
    w: &WorkloadModel,
    design: &ExperimentDesign,
    noise: &mut NoiseSource,
) -> Result<Vec<RunRecord>, SimError> {
    let mut out = Vec::new();
    for cell in required_cells(design, &Indicator::ALL) {
        let rt = simulate_rt(w, &cell.scheme)?;
        for rep in 1..=design.replicates {
            let record = |runtime_s: f64, warmup: bool| RunRecord {
                workload_id: w.id.clone(),
                mode: cell.mode,
                scheme: cell.scheme.clone(),
                replicate: rep,
                runtime_s,
                utilization: None,
                warmup,
            };
            if cell.mode == Mode::Memory {
                out.push(record(noise.apply(rt), true));
            }
            out.push(record(noise.apply(rt), false));
        }
    }
    Ok(out)
}
