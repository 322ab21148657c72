//! CPU frequency control through the cpufreq sysfs interface, or an in-memory mock.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::approx_eq;

/// Overrides the cpufreq root directory (point it at a fake tree in CI).
pub const CPUFREQ_ROOT_ENV: &str = "FREQIMPACT_CPUFREQ_ROOT";
pub const DEFAULT_CPUFREQ_ROOT: &str = "/sys/devices/system/cpu";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrequencyError {
    #[error("unsupported frequency {requested} GHz; available: {}", fmt_freqs(.available))]
    Unsupported { requested: f64, available: Vec<f64> },
    #[error(
        "permission denied writing {path}; run as root or grant write access to the cpufreq files"
    )]
    Permission { path: PathBuf },
    #[error("cpufreq I/O error at {path}: {detail}")]
    Io { path: PathBuf, detail: String },
    #[error("{path} reads {found} after writing {expected}")]
    ReadBack {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("no cpu*/cpufreq directories under {0}")]
    NoCpus(PathBuf),
    #[error("no available frequencies: {0}")]
    NoFrequencies(String),
}

fn fmt_freqs(f: &[f64]) -> String {
    f.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysfsConfig {
    pub root: PathBuf,
    /// Governor that honours `scaling_setspeed`.
    pub governor: String,
}

impl Default for SysfsConfig {
    fn default() -> Self {
        SysfsConfig {
            root: PathBuf::from(DEFAULT_CPUFREQ_ROOT),
            governor: "userspace".into(),
        }
    }
}

impl SysfsConfig {
    /// Default config, with the root taken from [`CPUFREQ_ROOT_ENV`] when set.
    pub fn from_env() -> Self {
        let mut c = SysfsConfig::default();
        if let Some(root) = std::env::var_os(CPUFREQ_ROOT_ENV) {
            c.root = PathBuf::from(root);
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Sysfs(SysfsConfig),
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqAck {
    pub freq: f64,
    /// False when the controller was already at this frequency.
    pub changed: bool,
}

#[derive(Debug, Clone)]
pub struct FrequencyController {
    available: Vec<f64>,
    current: Option<f64>,
    backend: Backend,
}

fn io_err(path: &Path, e: io::Error) -> FrequencyError {
    if e.kind() == io::ErrorKind::PermissionDenied {
        FrequencyError::Permission {
            path: path.to_path_buf(),
        }
    } else {
        FrequencyError::Io {
            path: path.to_path_buf(),
            detail: e.to_string(),
        }
    }
}

fn read_trimmed(path: &Path) -> Result<String, FrequencyError> {
    fs::read_to_string(path)
        .map(|s| s.trim().to_string())
        .map_err(|e| io_err(path, e))
}

fn ghz_to_khz(ghz: f64) -> u64 {
    (ghz * 1e6).round() as u64
}

/// `cpuN/cpufreq` directories, sorted by N.
fn cpu_dirs(root: &Path) -> Result<Vec<PathBuf>, FrequencyError> {
    let entries = fs::read_dir(root).map_err(|e| io_err(root, e))?;
    let mut cpus: Vec<(usize, PathBuf)> = entries
        .filter_map(Result::ok)
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let n: usize = name.strip_prefix("cpu")?.parse().ok()?;
            let dir = e.path().join("cpufreq");
            dir.is_dir().then_some((n, dir))
        })
        .collect();
    cpus.sort_by_key(|(n, _)| *n);
    if cpus.is_empty() {
        return Err(FrequencyError::NoCpus(root.to_path_buf()));
    }
    Ok(cpus.into_iter().map(|(_, p)| p).collect())
}

impl FrequencyController {
    pub fn mock(available: Vec<f64>) -> Self {
        FrequencyController {
            available,
            current: None,
            backend: Backend::Mock,
        }
    }

    /// Controller over the sysfs tree. `available` overrides `scaling_available_frequencies`,
    /// which some drivers (intel_pstate) do not expose.
    pub fn sysfs(config: SysfsConfig, available: Option<Vec<f64>>) -> Result<Self, FrequencyError> {
        let cpus = cpu_dirs(&config.root)?;
        let available = match available {
            Some(a) => a,
            None => {
                let path = cpus[0].join("scaling_available_frequencies");
                let raw = read_trimmed(&path)?;
                raw.split_whitespace()
                    .map(|t| {
                        t.parse::<f64>()
                            .map(|khz| khz / 1e6)
                            .map_err(|_| FrequencyError::Io {
                                path: path.clone(),
                                detail: format!("unparsable frequency `{t}`"),
                            })
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        if available.is_empty() {
            return Err(FrequencyError::NoFrequencies(
                config.root.display().to_string(),
            ));
        }
        Ok(FrequencyController {
            available,
            current: None,
            backend: Backend::Sysfs(config),
        })
    }

    pub fn available(&self) -> &[f64] {
        &self.available
    }

    pub fn current(&self) -> Option<f64> {
        self.current
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    /// Pin every logical CPU to `freq` GHz. Idempotent.
    pub fn set(&mut self, freq: f64) -> Result<FreqAck, FrequencyError> {
        let Some(&target) = self.available.iter().find(|&&a| approx_eq(a, freq)) else {
            return Err(FrequencyError::Unsupported {
                requested: freq,
                available: self.available.clone(),
            });
        };
        if self.current.is_some_and(|c| approx_eq(c, target)) {
            return Ok(FreqAck {
                freq: target,
                changed: false,
            });
        }
        if let Backend::Sysfs(cfg) = &self.backend {
            write_all_cpus(cfg, target)?;
        }
        self.current = Some(target);
        Ok(FreqAck {
            freq: target,
            changed: true,
        })
    }

    /// Per-CPU frequency as reported by the backend, in GHz.
    pub fn read_back(&self) -> Result<Vec<f64>, FrequencyError> {
        match &self.backend {
            Backend::Mock => Ok(self.current.into_iter().collect()),
            Backend::Sysfs(cfg) => cpu_dirs(&cfg.root)?
                .iter()
                .map(|dir| {
                    let path = dir.join("scaling_setspeed");
                    let raw = read_trimmed(&path)?;
                    raw.parse::<f64>()
                        .map(|khz| khz / 1e6)
                        .map_err(|_| FrequencyError::Io {
                            path,
                            detail: format!("unparsable frequency `{raw}`"),
                        })
                })
                .collect(),
        }
    }
}

fn write_all_cpus(cfg: &SysfsConfig, ghz: f64) -> Result<(), FrequencyError> {
    let khz = ghz_to_khz(ghz).to_string();
    for dir in cpu_dirs(&cfg.root)? {
        let gov = dir.join("scaling_governor");
        if read_trimmed(&gov)? != cfg.governor {
            fs::write(&gov, &cfg.governor).map_err(|e| io_err(&gov, e))?;
        }
        let speed = dir.join("scaling_setspeed");
        fs::write(&speed, &khz).map_err(|e| io_err(&speed, e))?;
        let found = read_trimmed(&speed)?;
        if found != khz {
            return Err(FrequencyError::ReadBack {
                path: speed,
                expected: khz,
                found,
            });
        }
    }
    Ok(())
}

pub fn set_cpu_frequency(
    controller: &mut FrequencyController,
    freq: f64,
) -> Result<FreqAck, FrequencyError> {
    controller.set(freq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_tree(cpus: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for n in 0..cpus {
            let d = dir.path().join(format!("cpu{n}/cpufreq"));
            fs::create_dir_all(&d).unwrap();
            fs::write(
                d.join("scaling_available_frequencies"),
                "1200000 2400000 3600000\n",
            )
            .unwrap();
            fs::write(d.join("scaling_governor"), "powersave\n").unwrap();
            fs::write(d.join("scaling_setspeed"), "<unsupported>\n").unwrap();
        }
        // not a cpu directory
        fs::create_dir_all(dir.path().join("cpuidle")).unwrap();
        dir
    }

    #[test]
    fn mock_set_and_idempotence() {
        let mut c = FrequencyController::mock(vec![1.2, 2.4, 3.6]);
        assert_eq!(
            set_cpu_frequency(&mut c, 2.4).unwrap(),
            FreqAck {
                freq: 2.4,
                changed: true
            }
        );
        assert_eq!(c.current(), Some(2.4));
        assert_eq!(
            set_cpu_frequency(&mut c, 2.4).unwrap(),
            FreqAck {
                freq: 2.4,
                changed: false
            }
        );
        assert_eq!(c.current(), Some(2.4));
    }

    #[test]
    fn unsupported_frequency_lists_choices() {
        let mut c = FrequencyController::mock(vec![1.2, 2.4, 3.6]);
        let err = c.set(2.0).unwrap_err();
        assert_eq!(
            err,
            FrequencyError::Unsupported {
                requested: 2.0,
                available: vec![1.2, 2.4, 3.6]
            }
        );
        assert!(err.to_string().contains("1.2, 2.4, 3.6"));
        assert_eq!(c.current(), None);
    }

    #[test]
    fn sysfs_sets_every_core() {
        let tree = fake_tree(4);
        let cfg = SysfsConfig {
            root: tree.path().into(),
            governor: "userspace".into(),
        };
        let mut c = FrequencyController::sysfs(cfg, None).unwrap();
        assert_eq!(c.available(), &[1.2, 2.4, 3.6]);
        c.set(3.6).unwrap();
        assert_eq!(c.read_back().unwrap(), vec![3.6; 4]);
        for n in 0..4 {
            let gov =
                fs::read_to_string(tree.path().join(format!("cpu{n}/cpufreq/scaling_governor")))
                    .unwrap();
            assert_eq!(gov, "userspace");
        }
    }

    #[test]
    fn sysfs_tolerates_governor_rounding() {
        let tree = fake_tree(1);
        let cfg = SysfsConfig {
            root: tree.path().into(),
            governor: "userspace".into(),
        };
        let mut c = FrequencyController::sysfs(cfg, None).unwrap();
        assert_eq!(c.set(2.4 * (1.0 + 1e-7)).unwrap().freq, 2.4);
    }

    #[cfg(unix)]
    #[test]
    fn sysfs_permission_error_names_the_path() {
        use std::os::unix::fs::PermissionsExt;
        let tree = fake_tree(1);
        let speed = tree.path().join("cpu0/cpufreq/scaling_setspeed");
        fs::set_permissions(&speed, fs::Permissions::from_mode(0o444)).unwrap();
        if fs::write(&speed, "x").is_ok() {
            // running as root: permissions are not enforced
            return;
        }
        let cfg = SysfsConfig {
            root: tree.path().into(),
            governor: "userspace".into(),
        };
        let mut c = FrequencyController::sysfs(cfg, None).unwrap();
        match c.set(1.2) {
            Err(FrequencyError::Permission { path }) => assert_eq!(path, speed),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_tree_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SysfsConfig {
            root: dir.path().into(),
            governor: "userspace".into(),
        };
        assert!(matches!(
            FrequencyController::sysfs(cfg, None),
            Err(FrequencyError::NoCpus(_))
        ));
    }
}
