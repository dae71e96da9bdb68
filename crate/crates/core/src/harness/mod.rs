//! Measurement and verification drivers behind the command-line tool:
//! phase benchmarks, storage accounting, the attack suite and run artifacts.

mod bench;
mod storage;
mod suite;

use std::path::Path;

use thiserror::Error;

use crate::sim::{ScenarioError, TranscriptBundle};

pub use bench::{
    bench, fit_line, BenchConfig, BenchRecord, BenchReport, LinearFit, Side, TotalRecord,
    CSV_HEADER,
};
pub use storage::{storage_record, StorageRecord};
pub use suite::{
    attack_suite, blinding_bijection_holds, unblinded_signatures_agree, SuiteConfig, SuiteReport,
    SuiteRow, PROPERTIES,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Writes a run's transcript, envelopes, scenario and summary into `dir`.
pub fn write_artifacts(bundle: &TranscriptBundle, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("transcript.log"), bundle.transcript().to_lines())?;
    std::fs::write(dir.join("envelopes.log"), bundle.envelope_lines())?;
    std::fs::write(dir.join("scenario.txt"), bundle.scenario.to_flat())?;
    let summary = serde_json::to_string_pretty(&bundle.summary()).expect("summary serializes");
    std::fs::write(dir.join("summary.json"), summary + "\n")?;
    std::fs::write(
        dir.join("transcript.sha256"),
        bundle.transcript_hash().to_hex() + "\n",
    )?;
    Ok(())
}
