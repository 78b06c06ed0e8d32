//! Trace CSV and summary JSON.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::rational::{parse_rational, to_decimal_string, to_fraction_string};
use crate::geom::{Rational, RationalPoint};
use crate::model::{spread, Mode, ProcessId, ScenarioConfig};
use crate::simnet::{Record, Trace};

use super::check::RunSummary;

pub const CSV_HEADER: &str = "run_id,round,process,coord_index,value_num,value_den,value_decimal,rho_num,rho_den";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad trace row: {0}")]
    Row(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub run_id: String,
    pub round: u64,
    pub process: ProcessId,
    pub coord_index: usize,
    pub value_num: String,
    pub value_den: String,
    pub value_decimal: String,
    pub rho_num: String,
    pub rho_den: String,
}

impl TraceRow {
    pub fn value(&self) -> Result<Rational, OutputError> {
        parse_rational(&format!("{}/{}", self.value_num, self.value_den))
            .ok_or_else(|| OutputError::Row(format!("{}/{}", self.value_num, self.value_den)))
    }

    pub fn rho(&self) -> Result<Rational, OutputError> {
        parse_rational(&format!("{}/{}", self.rho_num, self.rho_den))
            .ok_or_else(|| OutputError::Row(format!("{}/{}", self.rho_num, self.rho_den)))
    }
}

pub fn run_id(cfg: &ScenarioConfig) -> String {
    format!("{}-{}", cfg.name, cfg.seed)
}

/// One row per non-faulty state coordinate, ordered by round then process.
/// `rho` is the spread of that coordinate over the round's non-faulty
/// states. Exact runs have no intermediate states, so their decisions are
/// listed under the final phase.
pub fn trace_rows(trace: &Trace, cfg: &ScenarioConfig) -> Vec<TraceRow> {
    let mut states: BTreeMap<u64, BTreeMap<ProcessId, RationalPoint>> = BTreeMap::new();
    for entry in trace.journal.iter().filter(|e| !cfg.is_byzantine(e.process)) {
        match &entry.record {
            Record::State { round, value } => {
                states.entry(*round).or_default().insert(entry.process, value.clone());
            }
            Record::Decide { value } if cfg.mode == Mode::ExactSync => {
                states
                    .entry(trace.phases)
                    .or_default()
                    .insert(entry.process, value.clone());
            }
            _ => {}
        }
    }
    let id = run_id(cfg);
    let mut rows = Vec::new();
    for (round, by_process) in &states {
        let Ok(metrics) = spread(by_process.values()) else {
            continue;
        };
        for (process, value) in by_process {
            for (l, c) in value.coords().iter().enumerate() {
                rows.push(TraceRow {
                    run_id: id.clone(),
                    round: *round,
                    process: *process,
                    coord_index: l,
                    value_num: c.numer().to_string(),
                    value_den: c.denom().to_string(),
                    value_decimal: to_decimal_string(c, 20),
                    rho_num: metrics.rho[l].numer().to_string(),
                    rho_den: metrics.rho[l].denom().to_string(),
                });
            }
        }
    }
    rows
}

pub fn write_trace_csv<W: Write>(out: W, rows: &[TraceRow]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>, OutputError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<_> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(OutputError::Row(format!("unexpected header {}", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(OutputError::from)).collect()
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    outcome: Vec<String>,
    rounds: u64,
    gamma: Option<String>,
    round_bound: Option<u64>,
    final_spread: Vec<String>,
    trace_sha256: &'a str,
}

pub fn summary_json(summary: &RunSummary) -> Result<String, OutputError> {
    let doc = SummaryJson {
        outcome: summary.outcome.iter().map(ToString::to_string).collect(),
        rounds: summary.rounds,
        gamma: summary.gamma.as_ref().map(to_fraction_string),
        round_bound: summary.round_bound,
        final_spread: summary.final_spread.iter().map(to_fraction_string).collect(),
        trace_sha256: &summary.trace_sha256,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}
