//! RAPL package-domain counters exposed through the powercap sysfs tree.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::BackendError;

pub const DEFAULT_POWERCAP_ROOT: &str = "/sys/class/powercap";
pub const POWERCAP_ROOT_ENV: &str = "JOULEMARK_POWERCAP_ROOT";
/// Package domain of socket 0. DRAM and core sub-domains are not read.
pub const PACKAGE_DOMAIN: &str = "intel-rapl:0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub energy_uj: u64,
    pub max_range_uj: u64,
    pub timestamp_ns: u64,
}

fn read_u64(path: &Path) -> Result<u64, BackendError> {
    let text = fs::read_to_string(path).map_err(|e| BackendError::PathUnreadable {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    text.trim().parse::<u64>().map_err(|_| BackendError::MalformedCounter {
        path: path.display().to_string(),
        content: text.trim().to_string(),
    })
}

/// Reads `energy_uj` and `max_energy_range_uj` from a RAPL domain directory.
pub fn read_package_energy(domain_path: &Path) -> Result<CounterSnapshot, BackendError> {
    let max_range_uj = read_u64(&domain_path.join("max_energy_range_uj"))?;
    let energy_uj = read_u64(&domain_path.join("energy_uj"))?;
    let path = domain_path.join("energy_uj");
    if max_range_uj == 0 || energy_uj >= max_range_uj {
        return Err(BackendError::MalformedCounter {
            path: path.display().to_string(),
            content: format!("{energy_uj} (range {max_range_uj})"),
        });
    }
    let timestamp_ns = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    Ok(CounterSnapshot {
        energy_uj,
        max_range_uj,
        timestamp_ns,
    })
}

/// Counter advance in microjoules, assuming at most one wraparound.
pub fn counter_delta_uj(before: &CounterSnapshot, after: &CounterSnapshot) -> Result<u64, BackendError> {
    if before.max_range_uj != after.max_range_uj {
        return Err(BackendError::MismatchedRange {
            before: before.max_range_uj,
            after: after.max_range_uj,
        });
    }
    if after.energy_uj >= before.energy_uj {
        Ok(after.energy_uj - before.energy_uj)
    } else {
        Ok(after.max_range_uj - before.energy_uj + after.energy_uj)
    }
}

/// Energy between two snapshots in joules.
pub fn counter_delta(before: &CounterSnapshot, after: &CounterSnapshot) -> Result<f64, BackendError> {
    counter_delta_uj(before, after).map(|uj| uj as f64 * 1e-6)
}

/// Source of energy counter snapshots.
pub trait EnergyCounter {
    fn snapshot(&self) -> Result<CounterSnapshot, BackendError>;
}

/// The package domain under a powercap root.
#[derive(Debug, Clone)]
pub struct Powercap {
    domain: PathBuf,
}

impl Powercap {
    pub fn new(root: impl AsRef<Path>) -> Self {
        Powercap {
            domain: root.as_ref().join(PACKAGE_DOMAIN),
        }
    }

    /// Root from `JOULEMARK_POWERCAP_ROOT`, falling back to the sysfs mount.
    pub fn from_env() -> Self {
        Self::new(default_root())
    }

    pub fn domain(&self) -> &Path {
        &self.domain
    }
}

pub fn default_root() -> PathBuf {
    std::env::var_os(POWERCAP_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_POWERCAP_ROOT))
}

impl EnergyCounter for Powercap {
    fn snapshot(&self) -> Result<CounterSnapshot, BackendError> {
        read_package_energy(&self.domain)
    }
}
