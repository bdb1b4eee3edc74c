//! Thread pinning. A thin wrapper with a no-op fallback on platforms
//! without affinity control.

use std::sync::OnceLock;

/// Number of execution units (logical CPUs) pinning may target.
pub fn execution_units() -> usize {
    static UNITS: OnceLock<usize> = OnceLock::new();
    *UNITS.get_or_init(|| {
        core_affinity::get_core_ids()
            .map(|v| v.len())
            .filter(|n| *n > 0)
            .unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(1)
            })
    })
}

/// Physical core count, read from sysfs topology; falls back to the
/// logical count when the topology is not exposed.
pub fn physical_cores() -> usize {
    static CORES: OnceLock<usize> = OnceLock::new();
    *CORES.get_or_init(|| read_physical_cores().unwrap_or_else(execution_units))
}

fn read_physical_cores() -> Option<usize> {
    let mut pairs = std::collections::BTreeSet::new();
    for entry in std::fs::read_dir("/sys/devices/system/cpu").ok()? {
        let path = entry.ok()?.path();
        let name = path.file_name()?.to_string_lossy().into_owned();
        if !name.starts_with("cpu") || !name[3..].chars().all(|c| c.is_ascii_digit()) {
            continue;
        }
        let core = std::fs::read_to_string(path.join("topology/core_id")).ok();
        let pkg = std::fs::read_to_string(path.join("topology/physical_package_id")).ok();
        if let (Some(core), Some(pkg)) = (core, pkg) {
            pairs.insert((pkg.trim().to_owned(), core.trim().to_owned()));
        }
    }
    (!pairs.is_empty()).then_some(pairs.len())
}

/// Pin the calling thread to one execution unit. Returns false when the
/// platform refuses (callers treat that as a soft failure).
pub fn pin_current_to(unit: usize) -> bool {
    match core_affinity::get_core_ids() {
        Some(ids) => ids
            .into_iter()
            .find(|c| c.id == unit)
            .map(core_affinity::set_for_current)
            .unwrap_or(false),
        None => false,
    }
}
