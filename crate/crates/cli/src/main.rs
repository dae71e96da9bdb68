use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use psn_core::harness::{self, BenchConfig, SuiteConfig};
use psn_core::server::Faults;
use psn_core::sim::{self, RunOptions, Scenario};

const SEED_ENV: &str = "PSN_SEED";

#[derive(Parser)]
#[command(
    name = "psn",
    version,
    about = "Participatory sensing incentive protocol: simulator and measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its transcript and metrics.
    Run {
        /// Scenario file: `key = value` lines or a JSON object.
        scenario: PathBuf,
        /// Run seed. Falls back to PSN_SEED, then to the scenario's seed, then 0.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for the run artifacts.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        faults: FaultArgs,
    },
    /// Run every attack and linkage check and print a pass/fail table.
    AttackSuite {
        /// Suite seed. Falls back to PSN_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1024, hide = true)]
        key_bits: u64,
        #[arg(long, default_value_t = 20, hide = true)]
        schedules: u32,
        #[command(flatten)]
        faults: FaultArgs,
    },
    /// Time each protocol phase on both sides over a range of task counts.
    Bench {
        /// Task counts: comma-separated values or inclusive ranges, e.g. `1,2,4` or `1..16`.
        #[arg(long, default_value = "1,2,4,8,16", value_parser = parse_tasks)]
        tasks: TaskList,
        /// Credits granted per report.
        #[arg(long, default_value_t = 5)]
        c: u32,
        #[arg(long, default_value_t = 2048)]
        key_bits: u32,
        /// Repetitions per task count; medians are reported.
        #[arg(long, default_value_t = 100)]
        repeat: u32,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Measure ledger and wallet peaks for one window against the bounds.
    Storage {
        /// Tasks per window.
        #[arg(long = "M")]
        m: u32,
        #[arg(long)]
        cmax: u32,
        #[arg(long, default_value_t = 512, hide = true)]
        key_bits: u64,
    },
}

/// Deliberate server defects for negative-control runs.
#[derive(Args, Clone, Copy)]
struct FaultArgs {
    #[arg(long, hide = true)]
    disable_ledger: bool,
    #[arg(long, hide = true)]
    disable_rid_check: bool,
}

impl From<FaultArgs> for Faults {
    fn from(f: FaultArgs) -> Self {
        Faults {
            disable_ledger: f.disable_ledger,
            disable_rid_check: f.disable_rid_check,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug)]
struct TaskList(Vec<u32>);

fn parse_tasks(s: &str) -> Result<TaskList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u32 = a.parse().map_err(|e| format!("{part}: {e}"))?;
            let b: u32 = b
                .trim_start_matches('=')
                .parse()
                .map_err(|e| format!("{part}: {e}"))?;
            if a == 0 || a > b {
                return Err(format!("bad range {part}"));
            }
            out.extend(a..=b);
        } else {
            let n: u32 = part.parse().map_err(|e| format!("{part}: {e}"))?;
            if n == 0 {
                return Err("task counts must be positive".into());
            }
            out.push(n);
        }
    }
    if out.is_empty() {
        return Err("no task counts given".into());
    }
    Ok(TaskList(out))
}

fn env_seed() -> Result<Option<u64>, String> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| format!("{SEED_ENV}={v:?}: {e}")),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Run {
            scenario,
            seed,
            out,
            faults,
        } => cmd_run(scenario, seed, out, faults.into()),
        Command::AttackSuite {
            seed,
            key_bits,
            schedules,
            faults,
        } => {
            let seed = seed.or(env_seed()?).unwrap_or(0);
            let cfg = SuiteConfig {
                key_bits,
                schedules,
                faults: faults.into(),
                ..SuiteConfig::new(seed)
            };
            let report = harness::attack_suite(&cfg).map_err(|e| e.to_string())?;
            print!("{}", report.to_table());
            Ok(verdict(report.all_passed()))
        }
        Command::Bench {
            tasks,
            c,
            key_bits,
            repeat,
            format,
        } => {
            let cfg = BenchConfig {
                tasks: tasks.0,
                c,
                key_bits: key_bits as u64,
                repeat,
                ..BenchConfig::default()
            };
            let report = harness::bench(&cfg).map_err(|e| e.to_string())?;
            match format {
                Format::Csv => print!("{}", report.to_csv()),
                Format::Json => println!("{}", report.to_json()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Storage { m, cmax, key_bits } => {
            let record = harness::storage_record(m, cmax, key_bits).map_err(|e| e.to_string())?;
            println!("{}", record.to_json());
            Ok(verdict(record.within_bound()))
        }
    }
}

fn cmd_run(
    path: PathBuf,
    seed: Option<u64>,
    out: PathBuf,
    faults: Faults,
) -> Result<ExitCode, String> {
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let scenario = Scenario::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let seed = seed.or(env_seed()?).or(scenario.seed).unwrap_or(0);
    let options = RunOptions {
        faults,
        ..RunOptions::default()
    };
    let bundle = sim::run_with(&scenario, seed, options).map_err(|e| e.to_string())?;
    harness::write_artifacts(&bundle, &out).map_err(|e| e.to_string())?;

    let violations = bundle.violations();
    let mismatches = bundle.mismatches();
    println!("seed        {seed}");
    println!(
        "transcript  {} ({} entries)",
        bundle.transcript_hash().to_hex(),
        bundle.transcript().len()
    );
    for (rid, bal) in &bundle.balances {
        println!(
            "balance     {rid} {bal} of {} granted",
            bundle.granted.get(rid).copied().unwrap_or(0)
        );
    }
    if !bundle.attacks.is_empty() {
        let rejected = bundle.attacks.iter().filter(|a| !a.breach).count();
        println!(
            "attacks     {rejected}/{} without gain",
            bundle.attacks.len()
        );
    }
    for f in &bundle.forgeries {
        println!(
            "forgery     {} {}/{} rejected",
            f.strategy, f.rejected, f.trials
        );
    }
    println!("artifacts   {}", out.display());
    for v in &violations {
        eprintln!("violation: {v}");
    }
    for m in &mismatches {
        eprintln!(
            "unexpected outcome: {} ({}) -> {}",
            m.label, m.kind, m.outcome
        );
    }
    Ok(verdict(violations.is_empty() && mismatches.is_empty()))
}

fn verdict(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_lists() {
        assert_eq!(parse_tasks("1,2,4").unwrap().0, [1, 2, 4]);
        assert_eq!(parse_tasks("1..4").unwrap().0, [1, 2, 3, 4]);
        assert_eq!(parse_tasks("1..=3, 8").unwrap().0, [1, 2, 3, 8]);
        assert!(parse_tasks("0").is_err());
        assert!(parse_tasks("4..2").is_err());
        assert!(parse_tasks("").is_err());
        assert!(parse_tasks("x").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
