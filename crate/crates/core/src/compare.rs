//! Runs one scenario in both modes on identical graph, traffic and events
//! (mode-incompatible events skipped with a notice) and reports the deltas.

use crate::engine::{run, SimError};
use crate::metrics::ComparisonReport;
use crate::scenario::{Mode, Scenario};

/// Runs the tr and vpn arms of the comparison. Returns the report and any
/// notices about skipped events.
pub fn run_comparison(scenario: &Scenario) -> Result<(ComparisonReport, Vec<String>), SimError> {
    let mut notices = Vec::new();

    let mut tr_scenario = scenario.clone();
    tr_scenario.config.mode = Mode::Tr;
    tr_scenario.events.retain(|e| {
        if e.kind.valid_in_tr_mode() {
            true
        } else {
            notices.push(format!(
                "skipped {} event at tick {} in tr arm",
                e.kind.name(),
                e.tick
            ));
            false
        }
    });

    let mut vpn_scenario = scenario.clone();
    vpn_scenario.config.mode = Mode::Vpn;

    let tr = run(&tr_scenario)?;
    let vpn = run(&vpn_scenario)?;
    Ok((ComparisonReport::new(tr, vpn), notices))
}
