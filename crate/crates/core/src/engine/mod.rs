//! Discrete-event core.
//!
//! Time is an integer count of microseconds. Events pop in `(time, seq)`
//! order, where `seq` is assigned at scheduling time, so two events at the
//! same instant run in the order they were scheduled.
//!
//! All randomness comes from one ChaCha8 generator seeded with the run seed.
//! Draws happen only for DCF backoff: once per saturated WiFi station at
//! setup, in node order, and then once per completed data frame, in event
//! order.

mod sim;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::scenario::{validate, Issue, ScenarioConfig};

/// Cumulative per-link counters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub offered_bytes: u64,
    pub delivered_bytes: u64,
    pub corrupted_frames: u64,
    pub retransmissions: u64,
    pub dropped_frames: u64,
    pub dropped_bytes: u64,
    /// Queued or on air when the counters were read.
    pub in_flight_bytes: u64,
    pub airtime_us: u64,
    #[serde(skip)]
    pub delay_samples: Vec<u64>,
}

impl LinkStats {
    pub fn mean_delay_us(&self) -> f64 {
        if self.delay_samples.is_empty() {
            0.0
        } else {
            self.delay_samples.iter().sum::<u64>() as f64 / self.delay_samples.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    Wifi,
    Wimax,
}

/// One traffic source and everything measured about it after warm-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub id: String,
    pub kind: LinkKind,
    /// Fraction of the measured time this link's frames were on air.
    pub share: f64,
    pub throughput_bps: f64,
    pub mean_delay_us: f64,
    #[serde(flatten)]
    pub stats: LinkStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub bin_us: u64,
    /// Delivered bytes per bin over the whole run, one row per link.
    pub delivered_bytes: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scenario: String,
    pub seed: u64,
    pub measured_us: u64,
    pub links: Vec<LinkReport>,
    /// Jain index over link shares; 0 when no link was on air.
    pub fairness_index: f64,
    /// Time some platform interface transmitted while another one on the
    /// same platform was receiving.
    pub colocated_conflict_us: u64,
    pub cts_count: u64,
    pub cts_airtime_us: u64,
    /// Merged NAV windows announced by CTS frames, whole run.
    pub reservations: Vec<(u64, u64)>,
    pub timeline: Timeline,
    pub events: u64,
    pub trace_hash: String,
}

/// A successful delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub link: usize,
    pub at: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxRecord {
    pub id: u64,
    pub source: String,
    pub kind: crate::medium::FrameKind,
    pub start: u64,
    pub end: u64,
}

/// A station's NAV moved to `expiry` at `at`.
#[derive(Debug, Clone, PartialEq)]
pub struct NavSet {
    pub station: String,
    pub at: u64,
    pub expiry: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmaSample {
    pub at: u64,
    pub ss: usize,
    pub share: f64,
    pub goal: f64,
    pub interval_us: u64,
    pub cts_power_dbm: f64,
    pub cts_enabled: bool,
}

/// The report plus the raw logs tests and plots need.
#[derive(Debug, Clone)]
pub struct RunDetail {
    pub result: RunResult,
    pub deliveries: Vec<Delivery>,
    pub transmissions: Vec<TxRecord>,
    pub nav_sets: Vec<NavSet>,
    pub dma: Vec<DmaSample>,
    pub clc_denials: u64,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid scenario:\n{}", .0.iter().map(Issue::to_string).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Issue>),
    #[error("trace output: {0}")]
    Trace(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] Error),
}

/// Jain's fairness index of `shares`.
pub fn jain_index(shares: &[f64]) -> Result<f64> {
    if shares.is_empty() {
        return Err(Error::Domain("no shares".into()));
    }
    if shares.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain("shares must be finite and non-negative".into()));
    }
    let sum: f64 = shares.iter().sum();
    let squares: f64 = shares.iter().map(|x| x * x).sum();
    if squares == 0.0 {
        return Err(Error::Domain("all shares are zero".into()));
    }
    Ok(sum * sum / (shares.len() as f64 * squares))
}

pub fn run(scenario: &ScenarioConfig, seed: u64) -> std::result::Result<RunResult, RunError> {
    run_detailed(scenario, seed, None).map(|d| d.result)
}

/// Run `scenario` with `seed`, optionally writing one line per event to
/// `trace`.
pub fn run_detailed(
    scenario: &ScenarioConfig,
    seed: u64,
    trace: Option<&mut dyn Write>,
) -> std::result::Result<RunDetail, RunError> {
    let issues = validate(scenario);
    if !issues.is_empty() {
        return Err(RunError::Invalid(issues));
    }
    sim::Sim::new(scenario, seed, Trace::new(trace))?.run()
}

struct Queued<E> {
    time: u64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Queued<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<E> Eq for Queued<E> {}

impl<E> PartialOrd for Queued<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Queued<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// Min-queue on `(time, seq)`.
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Queued<E>>>,
    seq: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue { heap: BinaryHeap::new(), seq: 0 }
    }
}

impl<E> EventQueue<E> {
    pub fn push(&mut self, time: u64, event: E) -> u64 {
        self.seq += 1;
        self.heap.push(Reverse(Queued { time, seq: self.seq, event }));
        self.seq
    }

    pub fn pop(&mut self) -> Option<(u64, u64, E)> {
        self.heap.pop().map(|Reverse(q)| (q.time, q.seq, q.event))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Hashes every trace line and optionally writes it out.
pub(crate) struct Trace<'w> {
    hasher: Sha256,
    sink: Option<&'w mut dyn Write>,
}

impl<'w> Trace<'w> {
    fn new(sink: Option<&'w mut dyn Write>) -> Self {
        Trace { hasher: Sha256::new(), sink }
    }

    fn line(&mut self, time: u64, kind: &str, actor: &str, detail: &str) -> std::io::Result<()> {
        let line = format!("{time} {kind} {actor} {detail}\n");
        self.hasher.update(line.as_bytes());
        if let Some(w) = self.sink.as_mut() {
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    fn finish(mut self) -> std::io::Result<String> {
        if let Some(w) = self.sink.as_mut() {
            w.flush()?;
        }
        Ok(hex::encode(self.hasher.finalize()))
    }
}
