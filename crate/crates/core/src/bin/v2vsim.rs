use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use v2vsim::adversary::{bounded_search, SearchOutcome, DEFAULT_NODE_BUDGET};
use v2vsim::crypto::default_provider;
use v2vsim::sim::{demos, load_scenario, run, Category, RunReport, Scenario};

#[derive(Parser)]
#[command(name = "v2vsim", version, about = "Vehicle-to-vehicle authentication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Search for an attack with at most K adversary actions.
    Search {
        scenario: PathBuf,
        #[arg(long = "max-actions")]
        max_actions: usize,
        #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
        budget: u64,
    },
    /// Run a built-in demo.
    Demo {
        name: String,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// List the built-in demos.
    ListDemos,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut sc = load_scenario(&text).and_then(|s| s.with_env_seed()).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn write_trace(path: Option<&Path>, report: &RunReport) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, report.trace.render()).map_err(|e| format!("{}: {e}", p.display())),
        None => Ok(()),
    }
}

fn print_narrative(report: &RunReport) {
    for r in &report.trace.records {
        let interesting = match r.category {
            Category::Adv => r.get("event") != Some("oracle"),
            Category::Proto => {
                matches!(r.get("event"), Some("established" | "abort" | "data_sent" | "data_recv" | "binding" | "error"))
            }
            Category::Verdict => true,
            _ => false,
        };
        if interesting {
            println!("  {r}");
        }
    }
}

fn print_verdict(report: &RunReport) {
    println!("verdict: {}", report.verdict.outcome);
    for o in &report.verdict.oracle {
        println!("oracle: session {} {}: {}", o.session, o.term, o.result.as_str());
    }
    if let Some(a) = &report.verdict.attack {
        println!("{a}");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let provider = default_provider();
    match cli.command {
        Command::Run { scenario, trace, seed } => {
            let sc = match load(&scenario, seed) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let report = match run(&sc, provider) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            if let Err(e) = write_trace(trace.as_deref(), &report) {
                return fail(e);
            }
            println!("{sc}");
            print_verdict(&report);
            ExitCode::from(report.verdict.outcome.exit_code() as u8)
        }
        Command::Search { scenario, max_actions, budget } => {
            let sc = match load(&scenario, None) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let started = std::time::Instant::now();
            match bounded_search(&sc, provider, max_actions, budget) {
                Ok(SearchOutcome::Attack { trace, stats, .. }) => {
                    println!("ATTACK_FOUND (nodes={}, runs={}, {:.2?})", stats.nodes, stats.runs, started.elapsed());
                    println!("{trace}");
                    ExitCode::from(2)
                }
                Ok(SearchOutcome::NoAttack { stats }) => {
                    println!("NO_ATTACK_FOUND(explored={}) runs={} {:.2?}", stats.nodes, stats.runs, started.elapsed());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Demo { name, trace } => {
            let Some(demo) = demos::find(&name) else {
                return fail(format!("unknown demo `{name}`; try list-demos"));
            };
            let sc = match demo.scenario().with_env_seed() {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let report = match run(&sc, provider) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            if let Err(e) = write_trace(trace.as_deref(), &report) {
                return fail(e);
            }
            println!("{}: {}", demo.name, demo.summary);
            print_narrative(&report);
            print_verdict(&report);
            ExitCode::from(demo.exit_code(&report.verdict.outcome) as u8)
        }
        Command::ListDemos => {
            for d in &demos::DEMOS {
                println!("{:<14} {}", d.name, d.summary);
            }
            ExitCode::SUCCESS
        }
    }
}
