//! Scenario files.
//!
//! The canonical text form is TOML. Every table rejects unknown keys, and
//! parse failures carry the dotted path of the offending field. Validation
//! runs after parsing and reports every problem it finds, not just the first.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::afr::{AcpParams, DmaParams, DpeParams};
use crate::medium::{Medium, PathLossKind, PathLossModel, RadioKind, SpillageTable, REFERENCE_LOSS_2400_DB};
use crate::wifi_mac::DcfParams;
use crate::wimax_mac::WimaxParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_duration")]
    pub duration_us: u64,
    #[serde(default = "default_warmup")]
    pub warmup_us: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub medium: MediumConfig,
    #[serde(default)]
    pub wifi: DcfParams,
    #[serde(default)]
    pub wimax: WimaxParams,
    #[serde(default)]
    pub afr: AfrConfig,
    #[serde(default)]
    pub clc: ClcConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub nodes: Vec<NodeConfig>,
}

fn default_duration() -> u64 {
    30_000_000
}

fn default_warmup() -> u64 {
    1_000_000
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Calibration {
    Staccato,
    Intel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MediumConfig {
    pub model: PathLossKind,
    pub exponent: f64,
    pub reference_loss_db: f64,
    pub frequency_mhz: f64,
    pub preset: Calibration,
    /// Overrides the preset's table when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spillage: Option<SpillageTable>,
    pub sinr_threshold_db: f64,
    pub coupling_loss_db: f64,
}

impl Default for MediumConfig {
    fn default() -> Self {
        MediumConfig {
            model: PathLossKind::LogDistance,
            exponent: 3.0,
            reference_loss_db: REFERENCE_LOSS_2400_DB,
            frequency_mhz: 2400.0,
            preset: Calibration::Staccato,
            spillage: None,
            sinr_threshold_db: 10.0,
            coupling_loss_db: 20.0,
        }
    }
}

impl MediumConfig {
    pub fn path_loss_model(&self) -> PathLossModel {
        PathLossModel {
            kind: self.model,
            exponent: self.exponent,
            reference_loss_db: self.reference_loss_db,
            frequency_mhz: self.frequency_mhz,
        }
    }

    pub fn spillage_table(&self) -> SpillageTable {
        match (&self.spillage, self.preset) {
            (Some(t), _) => t.clone(),
            (None, Calibration::Staccato) => SpillageTable::staccato(),
            (None, Calibration::Intel) => SpillageTable::intel(),
        }
    }

    pub fn build(&self) -> Medium {
        Medium {
            model: self.path_loss_model(),
            spillage: self.spillage_table(),
            coupling_loss_db: self.coupling_loss_db,
            sinr_threshold_db: self.sinr_threshold_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AfrConfig {
    pub enabled: bool,
    pub dma_enabled: bool,
    pub acp_enabled: bool,
    pub dpe_enabled: bool,
    /// Lead of the NAV over the first granted burst, and its tail after the last.
    pub guard_us: u64,
    /// Transmit power assumed for overheard interferers when estimating range.
    pub assumed_interferer_dbm: f64,
    pub estimate_window_us: u64,
    pub dma: DmaParams,
    pub acp: AcpParams,
    pub dpe: DpeParams,
}

impl Default for AfrConfig {
    fn default() -> Self {
        AfrConfig {
            enabled: false,
            dma_enabled: true,
            acp_enabled: true,
            dpe_enabled: true,
            guard_us: 200,
            assumed_interferer_dbm: 20.0,
            estimate_window_us: 1_000_000,
            dma: DmaParams::default(),
            acp: AcpParams::default(),
            dpe: DpeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClcConfig {
    pub enabled: bool,
    pub schedule_aware: bool,
    pub priority: bool,
    /// Wait before a denied WiFi transmission asks again.
    pub retry_us: u64,
}

impl Default for ClcConfig {
    fn default() -> Self {
        ClcConfig { enabled: false, schedule_aware: false, priority: false, retry_us: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub timeline_bin_us: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { timeline_bin_us: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Traffic {
    #[default]
    None,
    /// Always has a frame queued. WiFi nodes name their receiver; an SS
    /// loads both directions towards its BS.
    Saturated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dest: Option<String>,
        #[serde(default = "default_frame_bytes")]
        frame_bytes: u64,
    },
    /// Send one reservation at a fixed instant, ignoring carrier sense.
    CtsInject { start_us: u64, reservation_us: u64 },
}

fn default_frame_bytes() -> u64 {
    1500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: String,
    pub kind: RadioKind,
    pub x: f64,
    pub y: f64,
    pub tx_power_dbm: f64,
    pub channel_mhz: f64,
    #[serde(default)]
    pub traffic: Traffic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collocated_with: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub serving_bs: Option<String>,
    #[serde(default)]
    pub priority: u8,
}

/// One validation failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    /// Syntax errors, unknown keys and type mismatches.
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{}", join_issues(.0))]
    Invalid(Vec<Issue>),
}

fn join_issues(issues: &[Issue]) -> String {
    issues.iter().map(Issue::to_string).collect::<Vec<_>>().join("\n")
}

impl ScenarioError {
    pub fn issues(&self) -> Vec<Issue> {
        match self {
            ScenarioError::Parse { path, message } => vec![Issue { path: path.clone(), message: message.clone() }],
            ScenarioError::Invalid(v) => v.clone(),
        }
    }
}

/// Parse and validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ScenarioError::Parse {
        path: "<document>".into(),
        message: e.message().to_string(),
    })?;
    let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ScenarioError::Parse {
            path: if path == "." { "<document>".into() } else { path },
            message: e.into_inner().message().to_string(),
        }
    })?;
    let issues = validate(&config);
    if issues.is_empty() {
        Ok(config)
    } else {
        Err(ScenarioError::Invalid(issues))
    }
}

/// Canonical text of `config`.
pub fn emit_scenario(config: &ScenarioConfig) -> String {
    toml::to_string(config).expect("scenario config always serializes")
}

pub fn validate(c: &ScenarioConfig) -> Vec<Issue> {
    let mut out = Vec::new();
    let mut bad = |path: &str, message: String| out.push(Issue { path: path.to_string(), message });

    if c.duration_us == 0 {
        bad("duration_us", "must be positive".into());
    }
    if c.warmup_us >= c.duration_us.max(1) {
        bad("warmup_us", format!("must be shorter than duration_us ({})", c.duration_us));
    }

    if let Err(e) = c.medium.path_loss_model().validate() {
        bad("medium", e.to_string());
    }
    if !c.medium.sinr_threshold_db.is_finite() {
        bad("medium.sinr_threshold_db", "must be finite".into());
    }
    if !(c.medium.coupling_loss_db.is_finite() && c.medium.coupling_loss_db >= 0.0) {
        bad("medium.coupling_loss_db", "must be a non-negative number".into());
    }

    let w = &c.wifi;
    if w.slot_us == 0 {
        bad("wifi.slot_us", "must be positive".into());
    }
    if !(w.phy_rate_mbps > 0.0 && w.phy_rate_mbps.is_finite()) {
        bad("wifi.phy_rate_mbps", "must be positive".into());
    }
    if w.cw_min > w.cw_max {
        bad("wifi.cw_min", format!("exceeds cw_max ({})", w.cw_max));
    }
    if w.cts_airtime_us == 0 {
        bad("wifi.cts_airtime_us", "must be positive".into());
    }
    for (path, v) in [("wifi.decode_sensitivity_dbm", w.decode_sensitivity_dbm), ("wifi.cca_threshold_dbm", w.cca_threshold_dbm)] {
        if !(-150.0..=0.0).contains(&v) {
            bad(path, format!("{v} dBm is outside [-150, 0]"));
        }
    }

    let m = &c.wimax;
    if m.frame_us == 0 {
        bad("wimax.frame_us", "must be positive".into());
    }
    if !(m.dl_ratio > 0.0 && m.dl_ratio < 1.0) {
        bad("wimax.dl_ratio", "must lie strictly between 0 and 1".into());
    }
    if !(m.bytes_per_us > 0.0 && m.bytes_per_us.is_finite()) {
        bad("wimax.bytes_per_us", "must be positive".into());
    }
    if m.plan_lead_us > m.frame_us {
        bad("wimax.plan_lead_us", format!("exceeds frame_us ({})", m.frame_us));
    }
    if m.plan_lead_us < c.afr.guard_us + w.cts_airtime_us {
        bad("wimax.plan_lead_us", "must cover afr.guard_us plus the CTS airtime".into());
    }
    if !(-150.0..=0.0).contains(&m.decode_sensitivity_dbm) {
        bad("wimax.decode_sensitivity_dbm", "is outside [-150, 0]".into());
    }

    let d = &c.afr.dma;
    if d.min_interval_us == 0 || d.min_interval_us > d.max_interval_us {
        bad("afr.dma", "need 0 < min_interval_us <= max_interval_us".into());
    }
    if d.tick_us == 0 || d.window_us == 0 {
        bad("afr.dma", "tick_us and window_us must be positive".into());
    }
    if !(d.delta >= 0.0 && d.delta < 1.0) {
        bad("afr.dma.delta", "must lie in [0, 1)".into());
    }
    let a = &c.afr.acp;
    if !(a.floor_dbm <= a.ceiling_dbm) {
        bad("afr.acp", "floor_dbm exceeds ceiling_dbm".into());
    }
    let p = &c.afr.dpe;
    if p.retx_window_us == 0 || p.eval_window_us == 0 {
        bad("afr.dpe", "retx_window_us and eval_window_us must be positive".into());
    }
    if !(p.qos_growth >= 0.0 && p.max_reservation_scale >= 1.0) {
        bad("afr.dpe", "need qos_growth >= 0 and max_reservation_scale >= 1".into());
    }
    if c.afr.estimate_window_us == 0 {
        bad("afr.estimate_window_us", "must be positive".into());
    }
    if c.clc.retry_us == 0 {
        bad("clc.retry_us", "must be positive".into());
    }
    if c.report.timeline_bin_us == 0 {
        bad("report.timeline_bin_us", "must be positive".into());
    }

    let kinds: BTreeMap<&str, RadioKind> = c.nodes.iter().map(|n| (n.id.as_str(), n.kind)).collect();
    let mut seen = BTreeSet::new();
    for (i, n) in c.nodes.iter().enumerate() {
        let at = |field: &str| format!("nodes[{i}].{field}");
        if n.id.is_empty() {
            bad(&at("id"), "must not be empty".into());
        } else if !seen.insert(n.id.as_str()) {
            bad(&at("id"), format!("duplicate node id '{}'", n.id));
        }
        if !(n.x.is_finite() && n.y.is_finite()) {
            bad(&at("x"), "position must be finite".into());
        }
        if !(-50.0..=60.0).contains(&n.tx_power_dbm) {
            bad(&at("tx_power_dbm"), format!("{} dBm is outside [-50, 60]", n.tx_power_dbm));
        }
        if !(1.0..=100_000.0).contains(&n.channel_mhz) {
            bad(&at("channel_mhz"), format!("{} MHz is outside [1, 100000]", n.channel_mhz));
        }
        if let Some(peer) = &n.collocated_with {
            if peer == &n.id {
                bad(&at("collocated_with"), "a node cannot be collocated with itself".into());
            } else if !kinds.contains_key(peer.as_str()) {
                bad(&at("collocated_with"), format!("no node with id '{peer}'"));
            }
        }
        match (n.kind, &n.serving_bs) {
            (RadioKind::WimaxSs, None) => bad(&at("serving_bs"), "a WiMAX SS must name its base station".into()),
            (RadioKind::WimaxSs, Some(bs)) => match kinds.get(bs.as_str()) {
                Some(RadioKind::WimaxBs) => {}
                Some(_) => bad(&at("serving_bs"), format!("'{bs}' is not a wimax-bs node")),
                None => bad(&at("serving_bs"), format!("no node with id '{bs}'")),
            },
            (_, Some(_)) => bad(&at("serving_bs"), "only wimax-ss nodes have a serving base station".into()),
            (_, None) => {}
        }
        match &n.traffic {
            Traffic::None => {}
            Traffic::Saturated { dest, frame_bytes } => {
                if !(1..=65_535).contains(frame_bytes) {
                    bad(&at("traffic.frame_bytes"), "must lie in [1, 65535]".into());
                }
                match (n.kind, dest) {
                    (RadioKind::Wifi, None) => bad(&at("traffic.dest"), "saturated WiFi traffic needs a dest".into()),
                    (RadioKind::Wifi, Some(to)) => match kinds.get(to.as_str()) {
                        _ if to == &n.id => bad(&at("traffic.dest"), "a node cannot send to itself".into()),
                        Some(RadioKind::Wifi) => {}
                        Some(_) => bad(&at("traffic.dest"), format!("'{to}' is not a wifi node")),
                        None => bad(&at("traffic.dest"), format!("no node with id '{to}'")),
                    },
                    (RadioKind::WimaxSs, Some(_)) => {
                        bad(&at("traffic.dest"), "SS traffic always goes to its serving base station".into())
                    }
                    (RadioKind::WimaxSs, None) => {}
                    (RadioKind::WimaxBs, _) => {
                        bad(&at("traffic"), "base station load is set on its subscriber stations".into())
                    }
                }
            }
            Traffic::CtsInject { reservation_us, .. } => {
                if n.kind != RadioKind::Wifi {
                    bad(&at("traffic"), "only wifi nodes can inject a CTS".into());
                }
                if *reservation_us == 0 {
                    bad(&at("traffic.reservation_us"), "must be positive".into());
                }
            }
        }
    }
    out
}
