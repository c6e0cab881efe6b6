//! Adaptive frame reservation.
//!
//! Before a WiMAX subscriber station talks to its base station, the station's
//! co-located WiFi interface sends a CTS addressed to itself (a frame
//! reservation signal) so nearby WiFi stations set their NAV and stay off the
//! air. Three feedback loops tune the scheme:
//!
//! * medium acquisition pacing (`dma_update`): how often the SS may claim the
//!   medium, steering its airtime toward an equal share;
//! * CTS power sizing (`acp_power`): just enough power to reach the farthest
//!   interferer heard;
//! * performance evaluation (`dpe_tick`): turn CTS on when retransmissions
//!   pile up, and off again when it does not pay for itself in throughput.

use serde::{Deserialize, Serialize};

use crate::engine::LinkStats;
use crate::medium::{path_loss, FrameKind, InterfaceId, PathLossModel, Transmission};
use crate::wifi_mac::NAV_CAP_US;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmaParams {
    /// Dead band around the goal.
    pub delta: f64,
    pub min_interval_us: u64,
    pub max_interval_us: u64,
    pub initial_interval_us: u64,
    /// Period of the pacing update.
    pub tick_us: u64,
    /// Sliding window for the achieved share.
    pub window_us: u64,
}

impl Default for DmaParams {
    fn default() -> Self {
        DmaParams {
            delta: 0.02,
            min_interval_us: 1_000,
            max_interval_us: 64_000,
            initial_interval_us: 8_000,
            tick_us: 500_000,
            window_us: 500_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcpParams {
    pub margin_db: f64,
    pub floor_dbm: f64,
    pub ceiling_dbm: f64,
}

impl Default for AcpParams {
    fn default() -> Self {
        AcpParams { margin_db: 3.0, floor_dbm: -30.0, ceiling_dbm: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosTarget {
    /// Bytes per second.
    pub min_throughput: f64,
    pub max_mean_delay_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpeParams {
    /// Retransmissions per window that switch CTS on.
    pub retx_on: u64,
    pub retx_window_us: u64,
    pub eval_window_us: u64,
    pub hold_us: u64,
    pub th_dur_us: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qos: Option<QosTarget>,
    /// Reservation growth per QoS violation, as a fraction.
    pub qos_growth: f64,
    pub max_reservation_scale: f64,
}

impl Default for DpeParams {
    fn default() -> Self {
        DpeParams {
            retx_on: 3,
            retx_window_us: 100_000,
            eval_window_us: 1_000_000,
            hold_us: 2_000_000,
            th_dur_us: 2_000,
            qos: None,
            qos_growth: 0.25,
            max_reservation_scale: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmaState {
    pub utilization_goal: f64,
    pub achieved: f64,
    pub claim_interval_us: u64,
    pub window_us: u64,
}

impl DmaState {
    pub fn new(params: &DmaParams) -> Self {
        DmaState {
            utilization_goal: 1.0,
            achieved: 0.0,
            claim_interval_us: params
                .initial_interval_us
                .clamp(params.min_interval_us, params.max_interval_us),
            window_us: params.window_us,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InterfererEstimate {
    pub active_systems: usize,
    /// Meters.
    pub max_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overheard {
    pub at: u64,
    pub source: InterfaceId,
    pub rx_power_dbm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpeState {
    pub cts_enabled: bool,
    pub th_dur: u64,
    pub retx_window_count: u64,
    /// Bytes per second over the last CTS-off phase.
    pub throughput_before: f64,
    /// Bytes per second over the last CTS-on evaluation.
    pub throughput_after: f64,
    pub qos: Option<QosTarget>,
    pub hold_until: u64,
    /// Set while a freshly enabled CTS is still under evaluation.
    pub evaluating: bool,
    pub qos_violated: bool,
    phase_start_us: u64,
    phase_start_bytes: u64,
    phase_start_delays: usize,
    last_retx: u64,
}

impl DpeState {
    pub fn new(params: &DpeParams, cts_enabled: bool) -> Self {
        DpeState {
            cts_enabled,
            th_dur: params.th_dur_us,
            retx_window_count: 0,
            throughput_before: 0.0,
            throughput_after: 0.0,
            qos: params.qos,
            hold_until: 0,
            evaluating: false,
            qos_violated: false,
            phase_start_us: 0,
            phase_start_bytes: 0,
            phase_start_delays: 0,
            last_retx: 0,
        }
    }

    /// Start a new measurement phase at `now` from the given stats.
    pub fn begin_phase(&mut self, stats: &LinkStats, now: u64) {
        self.phase_start_us = now;
        self.phase_start_bytes = stats.delivered_bytes;
        self.phase_start_delays = stats.delay_samples.len();
    }

    fn phase_throughput(&self, stats: &LinkStats, now: u64) -> f64 {
        let elapsed = now.saturating_sub(self.phase_start_us);
        if elapsed == 0 {
            return 0.0;
        }
        let bytes = stats.delivered_bytes.saturating_sub(self.phase_start_bytes);
        bytes as f64 * 1e6 / elapsed as f64
    }

    fn phase_mean_delay(&self, stats: &LinkStats) -> Option<f64> {
        let samples = stats.delay_samples.get(self.phase_start_delays..)?;
        if samples.is_empty() {
            return None;
        }
        Some(samples.iter().sum::<u64>() as f64 / samples.len() as f64)
    }
}

/// Builds the CTS frames of one reservation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrsEmitter {
    pub source: InterfaceId,
    pub channel_mhz: f64,
    pub th_dur_us: u64,
    pub cts_airtime_us: u64,
}

impl FrsEmitter {
    /// CTS frames reserving `reservation` µs of NAV, the first going on air
    /// at `start`. Reservations shorter than the threshold produce nothing.
    ///
    /// Durations are chunked at the NAV field cap. Each later chunk is timed
    /// to finish exactly when the previous NAV runs out, so the NAV
    /// intervals tile `[start + airtime, start + airtime + reservation]`.
    pub fn emit(&self, reservation: u64, power_dbm: f64, start: u64, next_id: &mut u64) -> Vec<Transmission> {
        if reservation == 0 || reservation < self.th_dur_us {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut left = reservation;
        let mut at = start;
        while left > 0 {
            let chunk = left.min(NAV_CAP_US);
            *next_id += 1;
            let tx = Transmission {
                id: *next_id,
                source: self.source,
                dest: None,
                kind: FrameKind::Cts,
                start: at,
                airtime: self.cts_airtime_us,
                power_dbm,
                channel_mhz: self.channel_mhz,
                nav_us: chunk,
                bytes: 14,
            };
            at += chunk;
            out.push(tx);
            left -= chunk;
        }
        out
    }
}

/// Neighbourhood estimate from frames overheard within `window` before `now`.
pub fn estimate_interferers(
    overheard: &[Overheard],
    self_id: InterfaceId,
    now: u64,
    window: u64,
    assumed_tx_power_dbm: f64,
    model: &PathLossModel,
) -> InterfererEstimate {
    let since = now.saturating_sub(window);
    let mut sources: Vec<InterfaceId> = Vec::new();
    let mut weakest = f64::INFINITY;
    for o in overheard.iter().filter(|o| o.at >= since && o.at <= now && o.source != self_id) {
        if !sources.contains(&o.source) {
            sources.push(o.source);
        }
        weakest = weakest.min(o.rx_power_dbm);
    }
    if sources.is_empty() {
        return InterfererEstimate::default();
    }
    InterfererEstimate {
        active_systems: sources.len(),
        max_distance: model.distance_for_loss(assumed_tx_power_dbm - weakest),
    }
}

/// Equal-share goal plus multiplicative claim-interval adaptation.
pub fn dma_update(
    state: &DmaState,
    estimate: &InterfererEstimate,
    measured_share: f64,
    params: &DmaParams,
) -> DmaState {
    let goal = 1.0 / (1.0 + estimate.active_systems as f64);
    let share = measured_share.clamp(0.0, 1.0);
    let interval = if share < goal - params.delta {
        (state.claim_interval_us / 2).max(params.min_interval_us)
    } else if share > goal + params.delta {
        state.claim_interval_us.saturating_mul(2).min(params.max_interval_us)
    } else {
        state.claim_interval_us
    };
    DmaState {
        utilization_goal: goal,
        achieved: share,
        claim_interval_us: interval.clamp(params.min_interval_us, params.max_interval_us),
        window_us: state.window_us,
    }
}

/// CTS power that lands `margin` above CCA at distance `reach`.
pub fn acp_power(reach: f64, cca_threshold_dbm: f64, model: &PathLossModel, params: &AcpParams) -> f64 {
    if !(reach > 0.0) {
        return params.floor_dbm;
    }
    let loss = path_loss(reach.max(1.0), model).unwrap_or(f64::INFINITY);
    (cca_threshold_dbm + loss + params.margin_db).clamp(params.floor_dbm, params.ceiling_dbm)
}

/// One evaluation step, called once per retransmission window with the SS's
/// cumulative stats.
pub fn dpe_tick(state: &DpeState, stats: &LinkStats, now: u64, params: &DpeParams) -> DpeState {
    let mut next = state.clone();
    next.retx_window_count = stats.retransmissions.saturating_sub(state.last_retx);
    next.last_retx = stats.retransmissions;

    if !state.cts_enabled {
        if now >= state.hold_until && next.retx_window_count >= params.retx_on {
            next.throughput_before = state.phase_throughput(stats, now);
            next.cts_enabled = true;
            next.evaluating = true;
            next.begin_phase(stats, now);
        }
        next.qos_violated = false;
        return next;
    }

    let elapsed = now.saturating_sub(state.phase_start_us);
    if state.evaluating && elapsed >= params.eval_window_us {
        next.throughput_after = state.phase_throughput(stats, now);
        next.evaluating = false;
        if next.throughput_after <= state.throughput_before {
            next.cts_enabled = false;
            next.hold_until = now + params.hold_us;
            next.qos_violated = false;
            next.begin_phase(stats, now);
            return next;
        }
    }

    next.qos_violated = match state.qos {
        Some(q) if elapsed > 0 => {
            let slow = state.phase_throughput(stats, now) < q.min_throughput;
            let late = state.phase_mean_delay(stats).is_some_and(|d| d > q.max_mean_delay_us);
            slow || late
        }
        _ => false,
    };
    next
}
