//! Python bindings: scenario runs, the attack suite, storage and bench
//! measurements, and the signature primitives underneath them.

use std::path::PathBuf;

use num_bigint::BigUint;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use psn_core::crypto::{self, BlindingFactor, PbsKeyPair, RsaKeyPair, Timestamp};
use psn_core::harness::{self, BenchConfig, SuiteConfig};
use psn_core::server::Faults;
use psn_core::sim::{self, RunOptions, TranscriptBundle};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn bytes<'py>(py: Python<'py>, data: &[u8]) -> Bound<'py, PyBytes> {
    PyBytes::new(py, data)
}

/// SHA-256 of `data`.
#[pyfunction]
fn hash<'py>(py: Python<'py>, data: &[u8]) -> Bound<'py, PyBytes> {
    bytes(py, crypto::hash(data).as_bytes())
}

/// Full-domain hash of `data` onto the units of Z_n.
#[pyfunction]
fn fdh(data: &[u8], n: BigUint) -> BigUint {
    crypto::fdh(data, &n)
}

/// Prime exponent derived from common information.
#[pyfunction]
fn derive_exponent(common_info: &[u8], lambda_bits: u32) -> PyResult<u64> {
    crypto::derive_exponent(common_info, lambda_bits).map_err(value_err)
}

/// `fdh(msg) * z^e mod n`.
#[pyfunction]
fn blind(msg: &[u8], z: BigUint, n: BigUint, e: BigUint) -> PyResult<BigUint> {
    let z = BlindingFactor::new(z, &n).map_err(value_err)?;
    Ok(crypto::blind(msg, &z, &n, &e))
}

/// Removes the blinding factor `z` from a blind signature.
#[pyfunction]
fn unblind(sig: BigUint, z: BigUint, n: BigUint) -> PyResult<BigUint> {
    let zf = BlindingFactor::new(z, &n).map_err(value_err)?;
    Ok(crypto::unblind(&sig, &zf, &n))
}

/// Verifies a signature bound to timestamp `t`.
#[pyfunction]
fn verify_ts(n: BigUint, e: BigUint, msg: &[u8], t: u64, sig: BigUint) -> bool {
    crypto::verify_ts(&n, &e, msg, Timestamp(t), &sig)
}

#[pyclass(name = "RsaKey", frozen)]
struct PyRsaKey(RsaKeyPair);

#[pymethods]
impl PyRsaKey {
    /// Deterministic key of `bits` bits from `seed`.
    #[staticmethod]
    fn generate(bits: u64, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        crypto::keygen_rsa(bits, &mut rng)
            .map(Self)
            .map_err(value_err)
    }

    #[staticmethod]
    fn from_primes(p: BigUint, q: BigUint, e: BigUint) -> PyResult<Self> {
        RsaKeyPair::from_primes(p, q, e)
            .map(Self)
            .map_err(value_err)
    }

    #[getter]
    fn n(&self) -> BigUint {
        self.0.n.clone()
    }

    #[getter]
    fn e(&self) -> BigUint {
        self.0.e.clone()
    }

    #[getter]
    fn d(&self) -> BigUint {
        self.0.d.clone()
    }

    fn sign(&self, msg: &[u8]) -> BigUint {
        crypto::rsa_sign(&self.0, msg)
    }

    fn verify(&self, msg: &[u8], sig: BigUint) -> bool {
        crypto::rsa_verify(&self.0.n, &self.0.e, msg, &sig)
    }

    /// Signs a blinded value together with timestamp `t`.
    fn blind_sign_ts(&self, mu: BigUint, t: u64) -> PyResult<BigUint> {
        crypto::blind_sign_ts(&self.0, &mu, Timestamp(t)).map_err(value_err)
    }

    fn verify_ts(&self, msg: &[u8], t: u64, sig: BigUint) -> bool {
        crypto::verify_ts(&self.0.n, &self.0.e, msg, Timestamp(t), &sig)
    }

    fn __repr__(&self) -> String {
        format!("RsaKey(bits={})", self.0.n.bits())
    }
}

#[pyclass(name = "PbsKey", frozen)]
struct PyPbsKey(PbsKeyPair);

#[pymethods]
impl PyPbsKey {
    /// Deterministic safe-prime key of `bits` bits from `seed`.
    #[staticmethod]
    fn generate(bits: u64, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        crypto::keygen_pbs(bits, &mut rng)
            .map(Self)
            .map_err(value_err)
    }

    #[getter]
    fn n(&self) -> BigUint {
        self.0.n.clone()
    }

    #[getter]
    fn lambda_bits(&self) -> u32 {
        self.0.lambda
    }

    /// Exponent this key uses for `common_info`.
    fn exponent(&self, common_info: &[u8]) -> PyResult<u64> {
        crypto::derive_exponent(common_info, self.0.lambda).map_err(value_err)
    }

    fn blind(&self, msg: &[u8], common_info: &[u8], z: BigUint) -> PyResult<BigUint> {
        let z = BlindingFactor::new(z, &self.0.n).map_err(value_err)?;
        crypto::pbs_blind(&self.0.public(), msg, common_info, &z).map_err(value_err)
    }

    fn sign(&self, mu: BigUint, common_info: &[u8]) -> PyResult<BigUint> {
        crypto::pbs_sign(&self.0, &mu, common_info).map_err(value_err)
    }

    fn unblind(&self, sig: BigUint, z: BigUint) -> PyResult<BigUint> {
        unblind(sig, z, self.0.n.clone())
    }

    fn verify(&self, msg: &[u8], common_info: &[u8], sig: BigUint) -> bool {
        crypto::pbs_verify(&self.0.public(), msg, common_info, &sig)
    }

    fn __repr__(&self) -> String {
        format!(
            "PbsKey(bits={}, lambda_bits={})",
            self.0.n.bits(),
            self.0.lambda
        )
    }
}

#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario(sim::Scenario);

#[pymethods]
impl PyScenario {
    /// Defaults, overridden by any keyword arguments given as scenario keys.
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(py: Python<'_>, overrides: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let Some(kw) = overrides else {
            return Ok(Self(sim::Scenario::default()));
        };
        let text: String = py.import("json")?.call_method1("dumps", (kw,))?.extract()?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines or a JSON object.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        sim::Scenario::parse(text).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| value_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn to_flat(&self) -> String {
        self.0.to_flat()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &serde_json::to_string(&self.0).map_err(runtime_err)?)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario({})",
            self.0.to_flat().trim_end().replace('\n', ", ")
        )
    }
}

/// Result of one simulated run.
#[pyclass(name = "Run", unsendable)]
struct PyRun(TranscriptBundle);

#[pymethods]
impl PyRun {
    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn transcript_hash(&self) -> String {
        self.0.transcript_hash().to_hex()
    }

    #[getter]
    fn transcript_len(&self) -> usize {
        self.0.transcript().len()
    }

    /// Server balances by participant id.
    #[getter]
    fn balances(&self) -> std::collections::BTreeMap<String, u64> {
        self.0.balances.clone()
    }

    /// Credits the server granted, by participant id.
    #[getter]
    fn granted(&self) -> std::collections::BTreeMap<String, u64> {
        self.0.granted.clone()
    }

    fn violations(&self) -> Vec<String> {
        self.0.violations()
    }

    fn transcript_lines(&self) -> String {
        self.0.transcript().to_lines()
    }

    fn envelope_lines(&self) -> String {
        self.0.envelope_lines()
    }

    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(
            py,
            &serde_json::to_string(&self.0.summary()).map_err(runtime_err)?,
        )
    }

    /// Writes the transcript, envelopes, scenario and summary into `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        harness::write_artifacts(&self.0, &dir).map_err(runtime_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Run(seed={}, entries={}, hash={})",
            self.0.seed,
            self.0.transcript().len(),
            &self.0.transcript_hash().to_hex()[..16]
        )
    }
}

/// Runs a scenario; `scenario` is a `Scenario` or its text form.
#[pyfunction]
#[pyo3(signature = (scenario, seed=0, disable_ledger=false, disable_rid_check=false))]
fn run(
    scenario: &Bound<'_, PyAny>,
    seed: u64,
    disable_ledger: bool,
    disable_rid_check: bool,
) -> PyResult<PyRun> {
    let sc = match scenario.extract::<PyScenario>() {
        Ok(s) => s.0,
        Err(_) => PyScenario::parse(&scenario.extract::<String>()?)?.0,
    };
    let options = RunOptions {
        faults: Faults {
            disable_ledger,
            disable_rid_check,
        },
        ..RunOptions::default()
    };
    sim::run_with(&sc, seed, options)
        .map(PyRun)
        .map_err(runtime_err)
}

/// Attack suite as a dict with `seed`, `passed` and per-check `rows`.
#[pyfunction]
#[pyo3(signature = (seed=0, key_bits=1024, schedules=20, disable_ledger=false, disable_rid_check=false))]
fn attack_suite<'py>(
    py: Python<'py>,
    seed: u64,
    key_bits: u64,
    schedules: u32,
    disable_ledger: bool,
    disable_rid_check: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SuiteConfig {
        key_bits,
        schedules,
        faults: Faults {
            disable_ledger,
            disable_rid_check,
        },
        ..SuiteConfig::new(seed)
    };
    let report = harness::attack_suite(&cfg).map_err(runtime_err)?;
    let out = json_to_py(py, &serde_json::to_string(&report).map_err(runtime_err)?)?;
    out.set_item("passed", report.all_passed())?;
    out.set_item("table", report.to_table())?;
    Ok(out)
}

/// Peak ledger and wallet storage for one window, with the analytic bound.
#[pyfunction]
#[pyo3(signature = (m, cmax, key_bits=512))]
fn storage<'py>(py: Python<'py>, m: u32, cmax: u32, key_bits: u64) -> PyResult<Bound<'py, PyAny>> {
    let record = harness::storage_record(m, cmax, key_bits).map_err(value_err)?;
    let out = json_to_py(py, &record.to_json())?;
    out.set_item("within_bound", record.within_bound())?;
    Ok(out)
}

/// Per-phase medians; returns CSV text or a dict when `format="json"`.
#[pyfunction]
#[pyo3(name = "bench", signature = (tasks=vec![1, 2, 4, 8, 16], c=5, key_bits=2048, repeat=100, format="csv"))]
fn run_bench<'py>(
    py: Python<'py>,
    tasks: Vec<u32>,
    c: u32,
    key_bits: u64,
    repeat: u32,
    format: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = BenchConfig {
        tasks,
        c,
        key_bits,
        repeat,
        ..BenchConfig::default()
    };
    let report = harness::bench(&cfg).map_err(value_err)?;
    match format {
        "csv" => Ok(report.to_csv().into_pyobject(py)?.into_any()),
        "json" => json_to_py(py, &report.to_json()),
        other => Err(value_err(format!("unknown format {other:?}"))),
    }
}

#[pymodule]
fn psn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRsaKey>()?;
    m.add_class::<PyPbsKey>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(hash, m)?)?;
    m.add_function(wrap_pyfunction!(fdh, m)?)?;
    m.add_function(wrap_pyfunction!(derive_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(blind, m)?)?;
    m.add_function(wrap_pyfunction!(unblind, m)?)?;
    m.add_function(wrap_pyfunction!(verify_ts, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(attack_suite, m)?)?;
    m.add_function(wrap_pyfunction!(storage, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
