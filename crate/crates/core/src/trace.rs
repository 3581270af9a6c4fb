//! Per-iteration records of a run and their CSV form.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::Result;
use crate::problem::SolverState;
use crate::Vector;

/// Reporting quantities for the master state `x^iter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Master iteration index of the state (the initial state has index 1).
    pub iter: usize,
    /// Simulated time at which the state was formed.
    pub sim_time: f64,
    /// Augmented Lagrangian.
    pub lagrangian: f64,
    pub objective: f64,
    /// `max_k |x_k - x| / |x|`.
    pub feas_gap: f64,
    pub prox_grad_norm: f64,
    /// Stopping measure: `feas_gap + prox_grad_norm`.
    pub e: f64,
    /// Number of gradients applied in this iteration.
    pub set_size: usize,
}

impl IterationRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.sim_time,
            self.lagrangian,
            self.objective,
            self.feas_gap,
            self.prox_grad_norm,
            self.e,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Full iterate, kept for offline residual checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iter: usize,
    pub x: Vec<f64>,
    pub locals: Vec<Vec<f64>>,
    pub duals: Vec<Vec<f64>>,
    pub stale_index: Vec<usize>,
}

impl Snapshot {
    pub fn capture(state: &SolverState) -> Self {
        let flat = |v: &Vector| v.iter().copied().collect::<Vec<f64>>();
        Snapshot {
            iter: state.t,
            x: flat(&state.x),
            locals: state.locals.iter().map(flat).collect(),
            duals: state.duals.iter().map(flat).collect(),
            stale_index: state.stale_index.clone(),
        }
    }

    pub fn x(&self) -> Vector {
        Vector::from_column_slice(&self.x)
    }

    pub fn local(&self, k: usize) -> Vector {
        Vector::from_column_slice(&self.locals[k])
    }

    pub fn dual(&self, k: usize) -> Vector {
        Vector::from_column_slice(&self.duals[k])
    }
}

/// Everything recorded during a run.
///
/// `records` holds one entry per completed iteration. When snapshots are
/// enabled, `snapshots[0]` is the initial state and `snapshots[i]` the state
/// after `i` iterations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub initial: Option<IterationRecord>,
    pub records: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<Snapshot>,
}

pub const CSV_HEADER: [&str; 7] = [
    "iter",
    "L",
    "f",
    "feas_gap",
    "prox_grad_norm",
    "e",
    "set_size",
];

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_snapshots(&self) -> bool {
        !self.snapshots.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last().or(self.initial.as_ref())
    }

    /// Initial record followed by every iteration.
    pub fn all_records(&self) -> impl Iterator<Item = &IterationRecord> {
        self.initial.iter().chain(self.records.iter())
    }

    pub fn lagrangians(&self) -> Vec<f64> {
        self.all_records().map(|r| r.lagrangian).collect()
    }

    /// Writes the summary columns, one row per state including the initial one.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in self.all_records() {
            w.write_record([
                r.iter.to_string(),
                r.lagrangian.to_string(),
                r.objective.to_string(),
                r.feas_gap.to_string(),
                r.prox_grad_norm.to_string(),
                r.e.to_string(),
                r.set_size.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}
