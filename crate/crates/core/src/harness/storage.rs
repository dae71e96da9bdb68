use serde::Serialize;

use super::HarnessError;
use crate::server::{baseline_commitments, storage_bound};
use crate::sim::{run, Scenario};

/// Measured and analytic storage for one participant over one window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StorageRecord {
    #[serde(rename = "M")]
    pub m: u32,
    pub c_max: u32,
    /// Credits granted per report in the measured run.
    pub c: u32,
    pub server_peak: usize,
    pub server_peak_credit: usize,
    pub bound: u64,
    pub wallet_peak: usize,
    pub baseline: u64,
}

impl StorageRecord {
    pub fn within_bound(&self) -> bool {
        self.server_peak as u64 <= self.bound && self.wallet_peak == self.c as usize
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("storage record serializes")
    }
}

/// Runs one honest participant through a window of `m` tasks with every
/// report paid `c_max`, and reports the measured ledger and wallet peaks
/// next to the analytic bound and the baseline.
pub fn storage_record(m: u32, c_max: u32, key_bits: u64) -> Result<StorageRecord, HarnessError> {
    if m == 0 {
        return Err(HarnessError::Invalid("M must be at least 1".into()));
    }
    if c_max == 0 {
        return Err(HarnessError::Invalid("cmax must be at least 1".into()));
    }
    let sc = Scenario {
        m,
        c_max,
        policy_c: c_max,
        n_participants: 1,
        key_bits,
        horizon: 10_000u64.max(4 * (m as u64) * (c_max as u64 + 2) * Scenario::default().gap_max),
        ..Scenario::default()
    };
    let bundle = run(&sc, 0)?;
    if let Some(v) = bundle.violations().first() {
        return Err(HarnessError::Invalid(format!("honest run failed: {v}")));
    }
    Ok(StorageRecord {
        m,
        c_max,
        c: c_max,
        server_peak: bundle.storage.peak_total,
        server_peak_credit: bundle.storage.peak_credit,
        bound: storage_bound(m, c_max),
        wallet_peak: bundle.participants[0].wallet_peak,
        baseline: baseline_commitments(m, c_max),
    })
}
