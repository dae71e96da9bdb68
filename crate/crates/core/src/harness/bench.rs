use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::HarnessError;
use crate::participant::Participant;
use crate::protocol::Phase;
use crate::server::{ConstantPolicy, Server, ServerConfig, ServerKeys, WindowParams};
use crate::sim::Bus;

pub const CSV_HEADER: &str = "tasks,phase,side,median_ns,c,key_bits,repeat";

const PHASES: [Phase; 3] = [
    Phase::TaskRequest,
    Phase::ReportSubmission,
    Phase::CreditDeposit,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BenchConfig {
    pub tasks: Vec<u32>,
    pub c: u32,
    pub key_bits: u64,
    pub repeat: u32,
    pub key_seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            tasks: vec![1, 2, 4, 8, 16],
            c: 5,
            key_bits: 2048,
            repeat: 100,
            key_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Side {
    SS,
    SP,
}

/// Median wall time of one phase on one side. `median_ns` is `None` for the
/// participant's deposit cell: depositing is a plain send with no local work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BenchRecord {
    pub tasks: u32,
    pub phase: &'static str,
    pub side: Side,
    pub median_ns: Option<u64>,
    pub c: u32,
    pub key_bits: u64,
    pub repeat: u32,
}

/// Median total server time for a task count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TotalRecord {
    pub tasks: u32,
    pub median_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub records: Vec<BenchRecord>,
    pub totals: Vec<TotalRecord>,
    /// Least-squares fit of total server time against task count.
    pub fit: LinearFit,
    pub bytes_to_server: u64,
    pub bytes_from_server: u64,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        let cfg = &self.config;
        for r in &self.records {
            let median = r.median_ns.map_or("-".to_string(), |m| m.to_string());
            out.push_str(&format!(
                "{},{},{:?},{},{},{},{}\n",
                r.tasks, r.phase, r.side, median, r.c, r.key_bits, r.repeat
            ));
        }
        for t in &self.totals {
            out.push_str(&format!(
                "{},total,SS,{},{},{},{}\n",
                t.tasks, t.median_ns, cfg.c, cfg.key_bits, cfg.repeat
            ));
        }
        out.push_str(&format!(
            "# fit slope_ns_per_task={:.1} intercept_ns={:.1} r2={:.6}\n",
            self.fit.slope, self.fit.intercept, self.fit.r2
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bench report serializes")
    }

    /// Records for one task count, in table order.
    pub fn table(&self, tasks: u32) -> Vec<&BenchRecord> {
        self.records.iter().filter(|r| r.tasks == tasks).collect()
    }
}

/// Times every phase on both sides for each task count, `repeat` times,
/// and reports medians. Repeats run serially.
pub fn bench(cfg: &BenchConfig) -> Result<BenchReport, HarnessError> {
    if cfg.repeat == 0 {
        return Err(HarnessError::Invalid("repeat must be at least 1".into()));
    }
    if cfg.tasks.is_empty() || cfg.tasks.contains(&0) {
        return Err(HarnessError::Invalid("task counts must be positive".into()));
    }
    if cfg.c == 0 {
        return Err(HarnessError::Invalid("c must be at least 1".into()));
    }
    let keys = ServerKeys::cached(cfg.key_bits, cfg.key_seed)
        .map_err(|e| HarnessError::Invalid(format!("key generation: {e}")))?;

    let mut records = Vec::new();
    let mut totals = Vec::new();
    let (mut up, mut down) = (0, 0);
    for &n in &cfg.tasks {
        let mut samples: BTreeMap<(Phase, Side), Vec<u64>> = BTreeMap::new();
        let mut total = Vec::with_capacity(cfg.repeat as usize);
        for rep in 0..cfg.repeat {
            let server = Server::new(
                keys.clone(),
                ServerConfig::default(),
                Box::new(ConstantPolicy(cfg.c)),
            );
            let times = run_once(server, n, cfg.c, rep as u64, &mut up, &mut down)?;
            let mut ss_total = 0;
            for ((phase, side), ns) in times {
                if side == Side::SS {
                    ss_total += ns;
                }
                samples.entry((phase, side)).or_default().push(ns);
            }
            total.push(ss_total);
        }
        for phase in PHASES {
            for side in [Side::SS, Side::SP] {
                let median_ns = if phase == Phase::CreditDeposit && side == Side::SP {
                    None
                } else {
                    samples.get_mut(&(phase, side)).map(|v| median(v))
                };
                records.push(BenchRecord {
                    tasks: n,
                    phase: phase.tag(),
                    side,
                    median_ns,
                    c: cfg.c,
                    key_bits: cfg.key_bits,
                    repeat: cfg.repeat,
                });
            }
        }
        totals.push(TotalRecord {
            tasks: n,
            median_ns: median(&mut total),
        });
    }
    let points: Vec<(f64, f64)> = totals
        .iter()
        .map(|t| (t.tasks as f64, t.median_ns as f64))
        .collect();
    Ok(BenchReport {
        config: cfg.clone(),
        records,
        totals,
        fit: fit_line(&points),
        bytes_to_server: up,
        bytes_from_server: down,
    })
}

/// One participant runs `n` tasks end to end. Participant time is wall time
/// around each call minus the server's handler time inside it.
fn run_once(
    server: Server,
    n: u32,
    c: u32,
    seed: u64,
    up: &mut u64,
    down: &mut u64,
) -> Result<BTreeMap<(Phase, Side), u64>, HarnessError> {
    let mut bus = Bus::new(server);
    let params = WindowParams {
        c_min: 1,
        c_max: c,
        horizon: 1_000_000,
    };
    let window = bus
        .server_mut()
        .publish_window(n, params, b"bench")
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    bus.server_mut().advance_to(1);
    let mut sp = Participant::new("bench-sp", seed);
    let fail = |e: crate::participant::ParticipantError| HarnessError::Invalid(e.to_string());
    sp.acquire_identity_signature(&mut bus).map_err(fail)?;
    bus.server_mut().take_phase_times();

    let mut wall: BTreeMap<Phase, Duration> = BTreeMap::new();
    for i in window.task_indexes() {
        let t = Instant::now();
        sp.request_task(i, &mut bus).map_err(fail)?;
        *wall.entry(Phase::TaskRequest).or_default() += t.elapsed();

        let t = Instant::now();
        sp.submit_report(i, format!("task={i} reading=1").as_bytes(), &mut bus)
            .map_err(fail)?;
        *wall.entry(Phase::ReportSubmission).or_default() += t.elapsed();
    }
    let tokens: Vec<_> = sp.wallet().iter().map(|w| w.token.clone()).collect();
    let t = Instant::now();
    for token in &tokens {
        sp.deposit_one(token, &mut bus).map_err(fail)?;
    }
    *wall.entry(Phase::CreditDeposit).or_default() += t.elapsed();

    let server_time = bus.server_mut().take_phase_times();
    let (u, d) = bus.traffic();
    *up += u;
    *down += d;
    let mut out = BTreeMap::new();
    for phase in PHASES {
        let ss = server_time.get(&phase).copied().unwrap_or_default();
        let total = wall.get(&phase).copied().unwrap_or_default();
        out.insert((phase, Side::SS), ss.as_nanos() as u64);
        out.insert(
            (phase, Side::SP),
            total.saturating_sub(ss).as_nanos() as u64,
        );
    }
    Ok(out)
}

fn median(v: &mut [u64]) -> u64 {
    v.sort_unstable();
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        (v[k / 2 - 1] + v[k / 2]) / 2
    }
}

/// Ordinary least squares `y = slope·x + intercept` with the coefficient of
/// determination. A perfect or degenerate fit reports `r2 = 1`.
pub fn fit_line(points: &[(f64, f64)]) -> LinearFit {
    let n = points.len() as f64;
    if points.is_empty() {
        return LinearFit {
            slope: 0.0,
            intercept: 0.0,
            r2: 1.0,
        };
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    LinearFit {
        slope,
        intercept,
        r2,
    }
}
