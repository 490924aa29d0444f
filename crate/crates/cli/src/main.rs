// Licensed under the Apache-2.0 license.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use elastisim::compute::parse_word;
use elastisim::sim::bench::{self, HostPreset};
use elastisim::sim::scenario::{Action, Scenario, TimedEvent};
use elastisim::sim::{RunOutput, SimError, System};

/// Cycle-accurate simulator of an elastic FPGA crossbar.
#[derive(Debug, Parser)]
#[command(name = "elastisim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario file.
    scenario: PathBuf,
    /// Scenario override, `section.key=value` (repeatable).
    #[arg(long = "override", value_name = "K=V")]
    overrides: Vec<String>,
    #[arg(long, value_name = "N")]
    max_cycles: Option<u64>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Directory for CSV and summary files.
    #[arg(long, default_value = "elastisim-out")]
    out: PathBuf,
    /// Also write the full event trace.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and check its expectations.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Worst-case completion latency for 1..=M contending masters.
    BenchLatency {
        #[arg(long, default_value_t = 8)]
        max_masters: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// End-to-end time of the three-stage pipeline in each placement case.
    BenchElasticity {
        /// `default` or `calibrated`.
        #[arg(long, default_value = "default")]
        preset: String,
        /// Overrides the preset's one-way transfer delay.
        #[arg(long)]
        transfer: Option<u64>,
        /// Overrides the preset's host cycles per stage per burst.
        #[arg(long)]
        stage_cost: Option<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Total cycles of the pipeline at quota 16 and 128.
    BenchBandwidth {
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Read a register after running a scenario (up to `--cycle` if given).
    Peek {
        #[command(flatten)]
        scenario: ScenarioArgs,
        addr: String,
        #[arg(long)]
        cycle: Option<u64>,
    },
    /// Write a register at `--cycle` (default 0) and run the scenario.
    Poke {
        #[command(flatten)]
        scenario: ScenarioArgs,
        addr: String,
        value: String,
        #[arg(long, default_value_t = 0)]
        cycle: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Parse and check a scenario without running it.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

enum Failure {
    /// Bad arguments or scenario: exit 2.
    Usage(String),
    /// A check did not hold: exit 1.
    Assertion(String),
}

type Outcome = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn load(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    let mut sc = Scenario::from_file(&args.scenario).map_err(usage)?;
    for o in &args.overrides {
        sc.apply_override(o).map_err(usage)?;
    }
    if let Some(n) = args.max_cycles {
        sc.max_cycles = n;
    }
    sc.validate().map_err(usage)?;
    Ok(sc)
}

fn write(dir: &Path, name: &str, contents: &str) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn parse_u32(s: &str, what: &str) -> Result<u32, Failure> {
    parse_word(s).ok_or_else(|| usage(format!("{what}: expected a number, got `{s}`")))
}

/// Runs, writes artifacts, prints the summary and checks expectations.
fn run_and_report(sc: &Scenario, output: &OutputArgs) -> Outcome {
    let system = System::new(sc).map_err(usage)?;
    let (out, limit) = match system.run() {
        Ok(out) => (out, None),
        Err(SimError::CycleLimitExceeded { limit, output }) => (*output, Some(limit)),
        Err(e) => return Err(usage(e)),
    };
    write_artifacts(&out, output)?;
    print!("{}", out.stats.summary());
    println!("trace sha256: {}", out.digest());
    let checks = out.check(&sc.expect);
    for c in &checks {
        println!("{c}");
    }
    if let Some(limit) = limit {
        return Err(Failure::Assertion(format!("cycle limit of {limit} reached with work pending")));
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Assertion(format!("{failed} expectation(s) failed")));
    }
    Ok(())
}

fn write_artifacts(out: &RunOutput, output: &OutputArgs) -> Outcome {
    write(&output.out, "requests.csv", &out.stats.requests_csv())?;
    write(&output.out, "apps.csv", &out.stats.apps_csv())?;
    write(&output.out, "summary.txt", &out.stats.summary())?;
    if output.trace {
        write(&output.out, "trace.csv", &out.trace.to_csv())?;
    }
    Ok(())
}

fn bench_latency(max_masters: usize, output: &OutputArgs) -> Outcome {
    if max_masters == 0 || max_masters >= elastisim::regfile::MAX_PORTS {
        return Err(usage(format!("--max-masters must be in 1..{}", elastisim::regfile::MAX_PORTS - 1)));
    }
    let rows = bench::latency_table(max_masters).map_err(usage)?;
    let csv = bench::latency_csv(&rows);
    write(&output.out, "latency.csv", &csv)?;
    print!("{csv}");
    let bad: Vec<usize> =
        rows.iter().filter(|r| r.worst_completion != bench::expected_worst_case(r.masters)).map(|r| r.masters).collect();
    if bad.is_empty() {
        println!("linear fit 13 + 12(M-1): holds at every point");
        Ok(())
    } else {
        Err(Failure::Assertion(format!("linear fit violated at M = {bad:?}")))
    }
}

fn bench_elasticity(preset: &str, transfer: Option<u64>, stage_cost: Option<u64>, output: &OutputArgs) -> Outcome {
    let mut p = match preset {
        "default" => HostPreset::DEFAULT,
        "calibrated" => HostPreset::CALIBRATED,
        other => return Err(usage(format!("unknown preset `{other}` (default, calibrated)"))),
    };
    p.transfer = transfer.unwrap_or(p.transfer);
    p.stage_cost = stage_cost.unwrap_or(p.stage_cost);
    let rows = bench::elasticity(p).map_err(usage)?;
    let csv = bench::elasticity_csv(&rows);
    write(&output.out, "elasticity.csv", &csv)?;
    print!("{csv}");
    if let [first, .., last] = rows.as_slice() {
        println!("case 1 / case 3 = {:.3}", first.end_to_end as f64 / last.end_to_end.max(1) as f64);
    }
    if preset == "calibrated" {
        println!("calibrated preset: model-derived host costs, not a measurement");
    }
    if bench::elasticity_ordered(&rows) {
        return Ok(());
    }
    if p.stage_cost == 0 {
        println!("ordering not strict: host stages cost nothing, so the precondition does not hold");
        return Ok(());
    }
    Err(Failure::Assertion("end-to-end time does not decrease from case 1 to case 3".into()))
}

fn bench_bandwidth(output: &OutputArgs) -> Outcome {
    let rows = bench::bandwidth(HostPreset::BANDWIDTH).map_err(usage)?;
    let csv = bench::bandwidth_csv(&rows);
    write(&output.out, "bandwidth.csv", &csv)?;
    print!("{csv}");
    let bad: Vec<usize> = rows.iter().filter(|r| !r.improves()).map(|r| r.case).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(format!("quota 128 not faster than 16 in case(s) {bad:?}")))
    }
}

fn peek(args: &ScenarioArgs, addr: &str, cycle: Option<u64>) -> Outcome {
    let mut sc = load(args)?;
    let addr = parse_u32(addr, "address")?;
    if let Some(c) = cycle {
        sc.max_cycles = c;
    }
    let out = match System::new(&sc).map_err(usage)?.run() {
        Ok(out) => out,
        Err(SimError::CycleLimitExceeded { output, .. }) if cycle.is_some() => *output,
        Err(e) => return Err(Failure::Assertion(e.to_string())),
    };
    let value = out.regfile.read(addr).map_err(usage)?;
    println!("{addr:#06x} = {value:#010x} (cycle {})", out.cycles);
    Ok(())
}

fn poke(args: &ScenarioArgs, addr: &str, value: &str, cycle: u64, output: &OutputArgs) -> Outcome {
    let mut sc = load(args)?;
    let addr = parse_u32(addr, "address")?;
    let value = parse_u32(value, "value")?;
    sc.events.push(TimedEvent { cycle, action: Action::Poke { addr, value } });
    sc.validate().map_err(usage)?;
    run_and_report(&sc, output)
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Run { scenario, output } => run_and_report(&load(&scenario)?, &output),
        Command::BenchLatency { max_masters, output } => bench_latency(max_masters, &output),
        Command::BenchElasticity { preset, transfer, stage_cost, output } => {
            bench_elasticity(&preset, transfer, stage_cost, &output)
        }
        Command::BenchBandwidth { output } => bench_bandwidth(&output),
        Command::Peek { scenario, addr, cycle } => peek(&scenario, &addr, cycle),
        Command::Poke { scenario, addr, value, cycle, output } => poke(&scenario, &addr, &value, cycle, &output),
        Command::Validate { scenario } => {
            let sc = load(&scenario)?;
            println!("{}: ok ({} ports, {} apps, {} events)", scenario.scenario.display(), sc.ports, sc.apps.len(), sc.events.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
