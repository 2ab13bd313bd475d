use clap::{Parser, Subcommand};
use morse_lab::config::{OutputConfig, ScenarioConfig};
use morse_lab::report::check_report;
use morse_lab::runner::{run_scenario, run_with_dumps, DumpSet, RunStatus};
use morse_lab::scenario;
use std::path::PathBuf;
use std::process::ExitCode;

/// Certification laboratory for invariant gradient flows.
#[derive(Parser)]
#[command(name = "morse-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the certification pipeline for a built-in scenario.
    Run {
        /// Scenario name (see `morse-lab list`).
        #[arg(long)]
        scenario: String,
        /// Run seed.
        #[arg(long)]
        seed: Option<u64>,
        /// JSON config file; CLI flags override its scenario/seed/output fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one CSV per certified pair trajectory.
        #[arg(long)]
        dump_trajectories: bool,
        /// Write one CSV of member directions per component.
        #[arg(long)]
        dump_directions: bool,
    },
    /// List the built-in scenarios.
    List,
    /// Re-validate a report against its own thresholds.
    Check {
        #[arg(long)]
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    // MORSE_LAB_THREADS caps worker parallelism.
    if let Ok(threads) = std::env::var("MORSE_LAB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    match Cli::parse().command {
        Command::Run { scenario, seed, config, out, dump_trajectories, dump_directions } => {
            run_command(scenario, seed, config, out, dump_trajectories, dump_directions)
        }
        Command::List => {
            println!(
                "{:<14} {:<42} {:>4}  {:<26} {:>9}",
                "name", "manifold", "dim", "group", "expected"
            );
            for row in scenario::list() {
                println!(
                    "{:<14} {:<42} {:>4}  {:<26} {:>9}",
                    row.name, row.manifold, row.dimension, row.group, row.expected_critical_count
                );
            }
            ExitCode::SUCCESS
        }
        Command::Check { report } => match std::fs::read_to_string(&report) {
            Ok(text) => match check_report(&text) {
                Ok(outcome) => {
                    println!(
                        "checked {} numeric checks: {}",
                        outcome.checks_seen,
                        if outcome.consistent() { "consistent" } else { "INCONSISTENT" }
                    );
                    for issue in &outcome.inconsistencies {
                        eprintln!("  {issue}");
                    }
                    if outcome.consistent() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(3)
                }
            },
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", report.display());
                ExitCode::from(3)
            }
        },
    }
}

fn run_command(
    scenario_name: String,
    seed: Option<u64>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    dump_trajectories: bool,
    dump_directions: bool,
) -> ExitCode {
    let mut cfg = match config {
        Some(path) => match std::fs::read_to_string(&path) {
            Ok(text) => match ScenarioConfig::from_json(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(3);
                }
            },
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return ExitCode::from(3);
            }
        },
        None => ScenarioConfig::new(scenario_name.clone()),
    };
    cfg.scenario = scenario_name;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out.or(cfg.outputs.report.clone());
    cfg.outputs = OutputConfig {
        report: out.clone(),
        dump_trajectories: dump_trajectories || cfg.outputs.dump_trajectories,
        dump_directions: dump_directions || cfg.outputs.dump_directions,
    };

    let outcome = if cfg.outputs.dump_trajectories || cfg.outputs.dump_directions {
        // Build once so the dump set can be routed next to the report.
        match cfg.validate().and_then(|_| morse_lab::scenario::build(&cfg.scenario, &cfg.tolerances))
        {
            Ok(s) => {
                let mut dumps = DumpSet::default();
                let outcome = run_with_dumps(&s, &cfg, &mut dumps);
                let stem: PathBuf = out
                    .clone()
                    .unwrap_or_else(|| PathBuf::from(format!("morse-lab-{}.json", cfg.scenario)));
                for (suffix, text) in dumps.files {
                    let mut path = stem.clone();
                    let file =
                        format!("{}-{}", path.file_stem().unwrap_or_default().to_string_lossy(), suffix);
                    path.set_file_name(file);
                    if let Err(e) = std::fs::write(&path, text) {
                        eprintln!("error: cannot write dump {}: {e}", path.display());
                        return ExitCode::from(3);
                    }
                }
                Ok(outcome)
            }
            Err(e) => Err(e),
        }
    } else {
        run_scenario(&cfg)
    };

    match outcome {
        Ok(outcome) => {
            let rendered = outcome.report.render();
            match &out {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, &rendered) {
                        eprintln!("error: cannot write report {}: {e}", path.display());
                        return ExitCode::from(3);
                    }
                    for (k, v) in &outcome.verdicts {
                        eprintln!("{k}: {v}");
                    }
                    eprintln!("overall: {}", status_label(outcome.status));
                }
                None => print!("{rendered}"),
            }
            ExitCode::from(outcome.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn status_label(status: RunStatus) -> &'static str {
    match status {
        RunStatus::Pass => "pass",
        RunStatus::CertificateFailed => "fail",
        RunStatus::HypothesisFailure => "hypothesis-failure",
    }
}
