//! trsim: validate scenarios, run single-mode simulations, and run
//! tr-vs-vpn comparisons.
//!
//! Exit codes: 0 success (simulation outcomes are data, including failed
//! sessions), 1 parse or read error, 2 validation failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use trsim_core::engine::SimError;
use trsim_core::metrics::MetricsReport;
use trsim_core::scenario::ScenarioError;
use trsim_core::{load_scenario, run, run_comparison, validate_graph, Scenario};

const EXIT_PARSE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;

#[derive(Parser)]
#[command(
    name = "trsim",
    version,
    about = "Deterministic simulator comparing trusted routing with a VPN tunnel baseline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a scenario parses and its graph satisfies the configured policies
    Validate { scenario: PathBuf },
    /// Run a scenario in its configured mode and emit the metrics report
    Run {
        scenario: PathBuf,
        /// Override the scenario seed stamped into the report
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON report to this path instead of stdout
        #[arg(long)]
        report: Option<PathBuf>,
        /// Output format for stdout
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run the scenario in both tr and vpn modes and emit the comparison report
    Compare {
        scenario: PathBuf,
        /// Write the JSON comparison report to this path instead of stdout
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

fn main() -> ExitCode {
    let code = match Cli::parse().command {
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Run {
            scenario,
            seed,
            report,
            format,
        } => cmd_run(&scenario, seed, report.as_deref(), format),
        Command::Compare { scenario, report } => cmd_compare(&scenario, report.as_deref()),
    };
    ExitCode::from(code)
}

fn load(path: &Path) -> Result<Scenario, u8> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_PARSE
    })?;
    load_scenario(&text).map_err(|e| {
        eprintln!("error: {e}");
        match e {
            ScenarioError::Parse { .. } => EXIT_PARSE,
            ScenarioError::Validation(_) => EXIT_VALIDATION,
        }
    })
}

fn sim_error(e: SimError) -> u8 {
    eprintln!("error: {e}");
    EXIT_VALIDATION
}

fn cmd_validate(path: &Path) -> u8 {
    let scenario = match load(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let violations = validate_graph(&scenario.graph, scenario.config.require_full_mesh);
    if violations.is_empty() {
        println!("OK");
        0
    } else {
        for v in &violations {
            println!("{v}");
        }
        EXIT_VALIDATION
    }
}

fn warn_graph_policy(scenario: &Scenario) {
    for v in validate_graph(&scenario.graph, scenario.config.require_full_mesh) {
        eprintln!("warning: {v}");
    }
}

fn cmd_run(path: &Path, seed: Option<u64>, report_path: Option<&Path>, format: Format) -> u8 {
    let mut scenario = match load(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Some(seed) = seed {
        scenario.config.seed = seed;
    }
    warn_graph_policy(&scenario);
    let report = match run(&scenario) {
        Ok(r) => r,
        Err(e) => return sim_error(e),
    };
    let json = report.to_canonical_json();
    match report_path {
        Some(out) => {
            if let Err(e) = fs::write(out, &json) {
                eprintln!("error: cannot write {}: {e}", out.display());
                return EXIT_PARSE;
            }
            println!("{} {}", out.display(), summary_line(&report));
        }
        None => match format {
            Format::Json => print!("{json}"),
            Format::Table => print!("{}", render_table(&report)),
        },
    }
    0
}

fn cmd_compare(path: &Path, report_path: Option<&Path>) -> u8 {
    let scenario = match load(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    warn_graph_policy(&scenario);
    let (comparison, notices) = match run_comparison(&scenario) {
        Ok(r) => r,
        Err(e) => return sim_error(e),
    };
    for notice in &notices {
        eprintln!("notice: {notice}");
    }
    let json = comparison.to_canonical_json();
    match report_path {
        Some(out) => {
            if let Err(e) = fs::write(out, &json) {
                eprintln!("error: cannot write {}: {e}", out.display());
                return EXIT_PARSE;
            }
            println!(
                "{} tr: {} | vpn: {}",
                out.display(),
                summary_line(&comparison.tr),
                summary_line(&comparison.vpn)
            );
        }
        None => print!("{json}"),
    }
    0
}

fn summary_line(report: &MetricsReport) -> String {
    format!(
        "mode={} delivered={}/{} exposures={} detections={} reroutes={}",
        report.mode,
        report.packets_delivered,
        report.packets_sent,
        report.total_exposures(),
        report.detections.len(),
        report.reroute_count
    )
}

fn render_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    let mut row = |name: &str, value: String| {
        out.push_str(&format!("{name:<24} {value}\n"));
    };
    row("mode", report.mode.to_string());
    row("seed", report.seed.to_string());
    row("ticks run", report.ticks_run.to_string());
    row("packets sent", report.packets_sent.to_string());
    row("packets delivered", report.packets_delivered.to_string());
    row("packets dropped", report.packets_dropped.to_string());
    row("packets in flight", report.packets_in_flight.to_string());
    row("plaintext exposures", report.plaintext_exposures.total.to_string());
    row("ciphertext exposures", report.ciphertext_exposures.total.to_string());
    row("detections", report.detections.len().to_string());
    row("max detection latency", report.max_detection_latency.to_string());
    row("reroutes", report.reroute_count.to_string());
    row("zombifications", report.zombification_count.to_string());
    row("ids alerts", report.ids_alert_count.to_string());
    out.push_str("sessions\n");
    for s in &report.sessions {
        out.push_str(&format!(
            "  {} {}->{} {} sent={} delivered={} dropped={}\n",
            s.id, s.sender, s.receiver, s.state, s.sent, s.delivered, s.dropped
        ));
    }
    out
}
