//! Scenario files, the trace oracles, the lower-bound demonstrators and the
//! run outputs.

pub mod check;
pub mod demo;
pub mod file;
pub mod output;

use std::path::{Path, PathBuf};

pub use check::{check_trace, CheckError, Outcome, RunSummary};
pub use demo::{
    forced_decisions, section1_check, thm1_demo, thm3_demo, undersized_restricted_async, IntersectionFailure,
    Section1Result, Thm1Result, Thm3Result,
};
pub use file::{ScenarioError, ScenarioFile};
pub use output::{read_trace_csv, summary_json, trace_rows, write_trace_csv, OutputError, TraceRow, CSV_HEADER};

use crate::approx_async::run_approx;
use crate::exact_sync::run_exact;
use crate::geom::RationalPoint;
use crate::model::{Mode, ScenarioConfig};
use crate::restricted::run_restricted;
use crate::simnet::{SimError, Trace};

/// Runs the protocol for `cfg.mode`.
pub fn simulate(cfg: &ScenarioConfig, inputs: &[RationalPoint]) -> Result<Trace, SimError> {
    match cfg.mode {
        Mode::ExactSync => run_exact(cfg, inputs),
        Mode::ApproxAsync => run_approx(cfg, inputs),
        Mode::RestrictedSync | Mode::RestrictedAsync => run_restricted(cfg, inputs),
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub summary: RunSummary,
    pub trace: Trace,
    /// Set when the simulation stopped early; the summary then describes
    /// the partial trace.
    pub error: Option<String>,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.summary.all_ok()
    }
}

/// Simulates and checks a scenario. Configuration problems are returned as
/// errors; a run that fails part way is reported with its partial trace.
pub fn run_scenario(cfg: &ScenarioConfig, inputs: &[RationalPoint]) -> Result<RunReport, SimError> {
    let (trace, error) = match simulate(cfg, inputs) {
        Ok(trace) => (trace, None),
        Err(e @ (SimError::Config(_) | SimError::AdversaryViolation(_))) => return Err(e),
        Err(e) => {
            let trace = e.partial_trace().cloned().unwrap_or_default();
            (trace, Some(e.to_string()))
        }
    };
    let mut summary = check_trace(&trace, cfg, inputs).map_err(|e| SimError::AdversaryViolation(e.to_string()))?;
    if let Some(e) = &error {
        summary.outcome.push(Outcome::PropertyFail(format!("simulation: {e}")));
    }
    Ok(RunReport { summary, trace, error })
}

pub fn default_out_dir(cfg: &ScenarioConfig) -> PathBuf {
    Path::new("out").join(format!("{}-{}", cfg.name, cfg.seed))
}

/// Writes `trace.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &ScenarioConfig, report: &RunReport) -> Result<(), OutputError> {
    std::fs::create_dir_all(dir)?;
    let csv = std::fs::File::create(dir.join("trace.csv"))?;
    write_trace_csv(std::io::BufWriter::new(csv), &trace_rows(&report.trace, cfg))?;
    std::fs::write(dir.join("summary.json"), summary_json(&report.summary)? + "\n")?;
    Ok(())
}
