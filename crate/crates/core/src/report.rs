//! Report rendering and on/off comparisons.
//!
//! CSV column order, one row per link followed by one summary row:
//!
//! `row, link, kind, share, throughput_bps, mean_delay_us, offered_bytes,
//! delivered_bytes, corrupted_frames, retransmissions, dropped_frames,
//! dropped_bytes, in_flight_bytes, airtime_us, fairness_index,
//! colocated_conflict_us, cts_count, cts_airtime_us, measured_us, seed,
//! events, trace_hash`
//!
//! Link rows leave the summary columns empty and the summary row leaves the
//! link columns empty.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run, LinkKind, RunError, RunResult};
use crate::scenario::ScenarioConfig;

pub const CSV_HEADER: [&str; 22] = [
    "row",
    "link",
    "kind",
    "share",
    "throughput_bps",
    "mean_delay_us",
    "offered_bytes",
    "delivered_bytes",
    "corrupted_frames",
    "retransmissions",
    "dropped_frames",
    "dropped_bytes",
    "in_flight_bytes",
    "airtime_us",
    "fairness_index",
    "colocated_conflict_us",
    "cts_count",
    "cts_airtime_us",
    "measured_us",
    "seed",
    "events",
    "trace_hash",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

pub fn to_json(result: &RunResult) -> String {
    let mut s = serde_json::to_string_pretty(result).expect("run results always serialize");
    s.push('\n');
    s
}

pub fn to_csv(result: &RunResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let write = |w: &mut csv::Writer<Vec<u8>>, row: Vec<String>| w.write_record(&row).expect("in-memory write");
    write(&mut w, CSV_HEADER.iter().map(|s| s.to_string()).collect());
    for l in &result.links {
        let kind = match l.kind {
            LinkKind::Wifi => "wifi",
            LinkKind::Wimax => "wimax",
        };
        let s = &l.stats;
        let mut row = vec![
            "link".to_string(),
            l.id.clone(),
            kind.to_string(),
            l.share.to_string(),
            l.throughput_bps.to_string(),
            l.mean_delay_us.to_string(),
            s.offered_bytes.to_string(),
            s.delivered_bytes.to_string(),
            s.corrupted_frames.to_string(),
            s.retransmissions.to_string(),
            s.dropped_frames.to_string(),
            s.dropped_bytes.to_string(),
            s.in_flight_bytes.to_string(),
            s.airtime_us.to_string(),
        ];
        row.resize(CSV_HEADER.len(), String::new());
        write(&mut w, row);
    }
    let mut row = vec!["summary".to_string()];
    row.resize(14, String::new());
    row.extend([
        result.fairness_index.to_string(),
        result.colocated_conflict_us.to_string(),
        result.cts_count.to_string(),
        result.cts_airtime_us.to_string(),
        result.measured_us.to_string(),
        result.seed.to_string(),
        result.events.to_string(),
        result.trace_hash.clone(),
    ]);
    write(&mut w, row);
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn render(result: &RunResult, format: Format) -> String {
    match format {
        Format::Csv => to_csv(result),
        Format::Json => to_json(result),
    }
}

/// Write `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial report.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Toggle {
    Afr,
    Clc,
}

impl Toggle {
    pub fn apply(self, cfg: &ScenarioConfig, on: bool) -> ScenarioConfig {
        let mut c = cfg.clone();
        match self {
            Toggle::Afr => c.afr.enabled = on,
            Toggle::Clc => c.clc.enabled = on,
        }
        c
    }
}

/// The metrics a comparison reports for one arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub throughput_bps: f64,
    pub wifi_throughput_bps: f64,
    pub wimax_throughput_bps: f64,
    pub fairness_index: f64,
    pub corrupted_frames: f64,
    pub wimax_corrupted_frames: f64,
    pub colocated_conflict_us: f64,
    pub cts_count: f64,
    pub cts_airtime_us: f64,
}

impl Metrics {
    pub fn of(r: &RunResult) -> Self {
        let sum = |kind: Option<LinkKind>, f: &dyn Fn(&crate::engine::LinkReport) -> f64| -> f64 {
            r.links.iter().filter(|l| kind.is_none_or(|k| l.kind == k)).map(f).sum()
        };
        Metrics {
            throughput_bps: sum(None, &|l| l.throughput_bps),
            wifi_throughput_bps: sum(Some(LinkKind::Wifi), &|l| l.throughput_bps),
            wimax_throughput_bps: sum(Some(LinkKind::Wimax), &|l| l.throughput_bps),
            fairness_index: r.fairness_index,
            corrupted_frames: sum(None, &|l| l.stats.corrupted_frames as f64),
            wimax_corrupted_frames: sum(Some(LinkKind::Wimax), &|l| l.stats.corrupted_frames as f64),
            colocated_conflict_us: r.colocated_conflict_us as f64,
            cts_count: r.cts_count as f64,
            cts_airtime_us: r.cts_airtime_us as f64,
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Metrics {
            throughput_bps: f(self.throughput_bps, other.throughput_bps),
            wifi_throughput_bps: f(self.wifi_throughput_bps, other.wifi_throughput_bps),
            wimax_throughput_bps: f(self.wimax_throughput_bps, other.wimax_throughput_bps),
            fairness_index: f(self.fairness_index, other.fairness_index),
            corrupted_frames: f(self.corrupted_frames, other.corrupted_frames),
            wimax_corrupted_frames: f(self.wimax_corrupted_frames, other.wimax_corrupted_frames),
            colocated_conflict_us: f(self.colocated_conflict_us, other.colocated_conflict_us),
            cts_count: f(self.cts_count, other.cts_count),
            cts_airtime_us: f(self.cts_airtime_us, other.cts_airtime_us),
        }
    }

    pub fn mean(all: &[Metrics]) -> Self {
        if all.is_empty() {
            return Metrics::default();
        }
        let n = all.len() as f64;
        all.iter().fold(Metrics::default(), |acc, m| acc.zip(m, |a, b| a + b)).zip(&Metrics::default(), |a, _| a / n)
    }

    /// `self - other`, field by field.
    pub fn minus(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPair {
    pub seed: u64,
    pub off: Metrics,
    pub on: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub toggle: Toggle,
    pub seeds: Vec<u64>,
    pub off: Metrics,
    pub on: Metrics,
    /// Mean of on minus mean of off.
    pub delta: Metrics,
    pub per_seed: Vec<SeedPair>,
}

/// Run every seed with the mechanism off and on. Runs execute in parallel;
/// results are assembled in seed order.
pub fn compare(cfg: &ScenarioConfig, toggle: Toggle, seeds: &[u64]) -> Result<(Comparison, Vec<(RunResult, RunResult)>), RunError> {
    let arms = [toggle.apply(cfg, false), toggle.apply(cfg, true)];
    let jobs: Vec<(u64, usize)> = seeds.iter().flat_map(|&s| [(s, 0), (s, 1)]).collect();
    let results: Vec<RunResult> = jobs.par_iter().map(|&(seed, arm)| run(&arms[arm], seed)).collect::<Result<_, _>>()?;
    let runs: Vec<(RunResult, RunResult)> = results.chunks(2).map(|p| (p[0].clone(), p[1].clone())).collect();
    let per_seed: Vec<SeedPair> = seeds
        .iter()
        .zip(&runs)
        .map(|(&seed, (off, on))| SeedPair { seed, off: Metrics::of(off), on: Metrics::of(on) })
        .collect();
    let off = Metrics::mean(&per_seed.iter().map(|p| p.off).collect::<Vec<_>>());
    let on = Metrics::mean(&per_seed.iter().map(|p| p.on).collect::<Vec<_>>());
    let comparison = Comparison {
        scenario: cfg.name.clone(),
        toggle,
        seeds: seeds.to_vec(),
        off,
        on,
        delta: on.minus(&off),
        per_seed,
    };
    Ok((comparison, runs))
}

pub fn comparison_json(c: &Comparison) -> String {
    let mut s = serde_json::to_string_pretty(c).expect("comparisons always serialize");
    s.push('\n');
    s
}

/// One row per metric: `metric, off, on, delta`.
pub fn comparison_csv(c: &Comparison) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "off", "on", "delta"]).expect("in-memory write");
    let fields = |m: &Metrics| -> Vec<(&'static str, f64)> {
        vec![
            ("throughput_bps", m.throughput_bps),
            ("wifi_throughput_bps", m.wifi_throughput_bps),
            ("wimax_throughput_bps", m.wimax_throughput_bps),
            ("fairness_index", m.fairness_index),
            ("corrupted_frames", m.corrupted_frames),
            ("wimax_corrupted_frames", m.wimax_corrupted_frames),
            ("colocated_conflict_us", m.colocated_conflict_us),
            ("cts_count", m.cts_count),
            ("cts_airtime_us", m.cts_airtime_us),
        ]
    };
    for (((name, off), (_, on)), (_, delta)) in fields(&c.off).into_iter().zip(fields(&c.on)).zip(fields(&c.delta)) {
        w.write_record([name.to_string(), off.to_string(), on.to_string(), delta.to_string()]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
