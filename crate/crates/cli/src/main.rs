//! Scenario-driven verification front end.
//!
//! Exit codes: 0 when every check passes, 1 when any check fails,
//! 2 for usage errors or malformed scenarios.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use hypochain::verify::{run, Scenario, Status, Suite};

#[derive(Parser)]
#[command(name = "verify", version, about = "Run verification suites for hypoelliptic chain models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites of a scenario file and print one line per check.
    Run {
        /// Scenario file (flat key = value text)
        #[arg(long)]
        scenario: PathBuf,
        /// Restrict to the named suites (kernel, transport, maxreg, geometry, all)
        #[arg(long = "suite")]
        suites: Vec<String>,
        /// Directory for report.json and CSV tables
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario's RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// Force the refinement reruns on
        #[arg(long)]
        refine: bool,
    },
}

fn run_command(cmd: Command) -> Result<bool, String> {
    let Command::Run {
        scenario,
        suites,
        out,
        seed,
        refine,
    } = cmd;
    let text = std::fs::read_to_string(&scenario)
        .map_err(|e| format!("cannot read {}: {e}", scenario.display()))?;
    let mut sc = Scenario::parse(&text).map_err(|e| format!("bad scenario: {e}"))?;
    if let Some(seed) = seed {
        sc.seed = seed;
    }
    if refine {
        sc.refine = true;
    }
    let filter = if suites.is_empty() {
        None
    } else {
        let mut list: Vec<Suite> = Vec::new();
        for s in &suites {
            list.extend(Suite::parse(s).map_err(|e| format!("{e}"))?);
        }
        list.sort();
        list.dedup();
        Some(list)
    };
    let report = run(&sc, filter.as_deref(), out.as_deref()).map_err(|e| format!("run failed: {e}"))?;
    for suite in &report.payload.suites {
        for c in &suite.checks {
            let tag = match c.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Recorded => "info",
            };
            let detail = match (&c.predicted, c.measured.first()) {
                (Some(p), Some(m)) => format!("measured {m:.6e} predicted {p:.6e}"),
                (None, Some(m)) => format!("measured {m:.6e}"),
                _ => String::new(),
            };
            println!("[{tag}] {}/{} {} ({})", suite.suite, c.name, detail, c.paper_ref);
        }
    }
    println!(
        "{}: {} suite(s), {} check(s), wall {} ms",
        if report.passed() { "PASS" } else { "FAIL" },
        report.payload.suites.len(),
        report
            .payload
            .suites
            .iter()
            .map(|s| s.checks.len())
            .sum::<usize>(),
        report.meta.wall_ms
    );
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_command(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
