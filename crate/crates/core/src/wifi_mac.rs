//! Simplified 802.11 DCF: carrier sense with binary exponential backoff,
//! NAV from overheard CTS frames and bounded retransmission.
//!
//! A [`WifiStation`] never looks at the clock on its own. The engine tells it
//! when the medium turns idle or busy and when its frames complete, and the
//! station answers with the instant it wants to transmit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::medium::{FrameKind, Transmission};

/// Largest value a CTS duration field can carry.
pub const NAV_CAP_US: u64 = 32_767;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DcfParams {
    pub slot_us: u64,
    pub difs_us: u64,
    pub sifs_us: u64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    pub cts_airtime_us: u64,
    pub preamble_us: u64,
    pub phy_rate_mbps: f64,
    pub decode_sensitivity_dbm: f64,
    pub cca_threshold_dbm: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        DcfParams {
            slot_us: 20,
            difs_us: 50,
            sifs_us: 10,
            cw_min: 15,
            cw_max: 1023,
            retry_limit: 7,
            cts_airtime_us: 44,
            preamble_us: 20,
            phy_rate_mbps: 6.0,
            decode_sensitivity_dbm: -85.0,
            cca_threshold_dbm: -82.0,
        }
    }
}

impl DcfParams {
    /// Airtime of a data frame carrying `bytes` at the configured PHY rate.
    pub fn data_airtime(&self, bytes: u64) -> u64 {
        self.preamble_us + ((bytes * 8) as f64 / self.phy_rate_mbps).ceil() as u64
    }
}

/// Virtual carrier sense.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NavState {
    /// Absolute expiry in µs; zero when idle.
    pub expiry: u64,
}

impl NavState {
    pub fn blocks(&self, now: u64) -> bool {
        self.expiry > now
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackoffState {
    pub contention_window: u32,
    pub pending_slots: u32,
    pub retry_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    /// Transmit at this instant unless the medium turns busy first.
    StartAt(u64),
    /// Wait; `until` is known only when NAV is the reason.
    Defer { until: Option<u64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    Acked,
    NoAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetryDecision {
    Delivered,
    Retry,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Countdown {
    /// End of DIFS: slots count from here.
    slots_from: u64,
    attempt_at: u64,
}

#[derive(Debug, Clone)]
pub struct WifiStation {
    params: DcfParams,
    pub nav: NavState,
    pub backoff: BackoffState,
    /// Overheard frames weaker than this are ignored for NAV purposes.
    pub hear_threshold_dbm: f64,
    countdown: Option<Countdown>,
}

impl WifiStation {
    pub fn new(params: DcfParams, hear_threshold_dbm: f64) -> Self {
        WifiStation {
            params,
            nav: NavState::default(),
            backoff: BackoffState {
                contention_window: params.cw_min,
                pending_slots: 0,
                retry_count: 0,
            },
            hear_threshold_dbm,
            countdown: None,
        }
    }

    pub fn params(&self) -> &DcfParams {
        &self.params
    }

    /// Process a frame this station overheard. Returns true when the NAV
    /// moved. Only CTS frames touch the NAV; the NAV never shrinks.
    pub fn on_overheard(&mut self, frame: &Transmission, rx_power_dbm: f64) -> bool {
        if rx_power_dbm < self.hear_threshold_dbm || frame.kind != FrameKind::Cts {
            return false;
        }
        let expiry = frame.end() + frame.nav_us;
        if expiry > self.nav.expiry {
            self.nav.expiry = expiry;
            true
        } else {
            false
        }
    }

    /// Ask for access at `now`. `medium_idle` is physical carrier sense.
    pub fn try_access(&mut self, now: u64, medium_idle: bool) -> Access {
        if !medium_idle {
            self.countdown = None;
            return Access::Defer { until: None };
        }
        if self.nav.blocks(now) {
            self.countdown = None;
            return Access::Defer { until: Some(self.nav.expiry) };
        }
        let slots_from = now + self.params.difs_us;
        let attempt_at = slots_from + u64::from(self.backoff.pending_slots) * self.params.slot_us;
        self.countdown = Some(Countdown { slots_from, attempt_at });
        Access::StartAt(attempt_at)
    }

    /// Scheduled attempt instant, if counting down.
    pub fn pending_attempt(&self) -> Option<u64> {
        self.countdown.map(|c| c.attempt_at)
    }

    /// The medium went busy at `now`: freeze the backoff, keeping only the
    /// slots that have not fully elapsed.
    pub fn on_medium_busy(&mut self, now: u64) {
        if let Some(c) = self.countdown.take() {
            let elapsed = now.saturating_sub(c.slots_from) / self.params.slot_us;
            let elapsed = u32::try_from(elapsed).unwrap_or(u32::MAX);
            self.backoff.pending_slots = self.backoff.pending_slots.saturating_sub(elapsed);
        }
    }

    /// The scheduled attempt fired and the frame went out.
    pub fn on_attempt_started(&mut self) {
        self.countdown = None;
        self.backoff.pending_slots = 0;
    }

    pub fn draw_backoff<R: Rng>(&mut self, rng: &mut R) {
        self.backoff.pending_slots = rng.random_range(0..=self.backoff.contention_window);
    }

    /// Apply the outcome of the frame that just finished. A fresh backoff is
    /// drawn in every case, for the retry or for the next frame.
    pub fn on_tx_outcome<R: Rng>(&mut self, outcome: TxOutcome, rng: &mut R) -> RetryDecision {
        let decision = match outcome {
            TxOutcome::Acked => {
                self.reset_window();
                RetryDecision::Delivered
            }
            TxOutcome::NoAck if self.backoff.retry_count >= self.params.retry_limit => {
                self.reset_window();
                RetryDecision::Drop
            }
            TxOutcome::NoAck => {
                self.backoff.retry_count += 1;
                let doubled = self.backoff.contention_window.saturating_mul(2).saturating_add(1);
                self.backoff.contention_window = doubled.min(self.params.cw_max);
                RetryDecision::Retry
            }
        };
        self.draw_backoff(rng);
        decision
    }

    fn reset_window(&mut self) {
        self.backoff.contention_window = self.params.cw_min;
        self.backoff.retry_count = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::InterfaceId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cts(start: u64, nav: u64) -> Transmission {
        Transmission {
            id: 1,
            source: InterfaceId(9),
            dest: None,
            kind: FrameKind::Cts,
            start,
            airtime: 44,
            power_dbm: 1.0,
            channel_mhz: 2412.0,
            nav_us: nav,
            bytes: 14,
        }
    }

    fn station() -> WifiStation {
        WifiStation::new(DcfParams::default(), -82.0)
    }

    #[test]
    fn cts_sets_nav_to_end_plus_duration() {
        let mut s = station();
        assert!(s.on_overheard(&cts(0, 10_000), -60.0));
        assert_eq!(s.nav.expiry, 10_044);
    }

    #[test]
    fn inaudible_cts_is_ignored() {
        let mut s = station();
        assert!(!s.on_overheard(&cts(0, 10_000), -87.1));
        assert_eq!(s.nav.expiry, 0);
    }

    #[test]
    fn nav_takes_the_max() {
        let mut s = station();
        s.on_overheard(&cts(0, 10_000), -60.0);
        assert!(!s.on_overheard(&cts(100, 2_000), -60.0));
        assert_eq!(s.nav.expiry, 10_044);
    }

    #[test]
    fn data_frames_do_not_touch_nav() {
        let mut s = station();
        let mut f = cts(0, 10_000);
        f.kind = FrameKind::Data;
        assert!(!s.on_overheard(&f, -40.0));
    }

    #[test]
    fn uncontended_access_waits_difs() {
        let mut s = station();
        assert_eq!(s.try_access(1000, true), Access::StartAt(1050));
    }

    #[test]
    fn nav_defers_access() {
        let mut s = station();
        s.on_overheard(&cts(0, 10_000), -60.0);
        assert_eq!(s.try_access(500, true), Access::Defer { until: Some(10_044) });
        assert_eq!(s.try_access(10_044, true), Access::StartAt(10_094));
    }

    #[test]
    fn busy_medium_defers_without_a_deadline() {
        let mut s = station();
        assert_eq!(s.try_access(0, false), Access::Defer { until: None });
    }

    /// Reference DCF countdown stepped one slot at a time: after DIFS of
    /// idle, each fully idle slot decrements the counter.
    fn step_through(pending: u32, idle_from: u64, busy_at: u64) -> u32 {
        let params = DcfParams::default();
        let mut left = pending;
        let mut t = idle_from + params.difs_us;
        while left > 0 && t + params.slot_us <= busy_at {
            t += params.slot_us;
            left -= 1;
        }
        left
    }

    #[test]
    fn busy_mid_backoff_freezes_remaining_slots() {
        let mut s = station();
        s.backoff.pending_slots = 10;
        assert_eq!(s.try_access(0, true), Access::StartAt(50 + 200));
        s.on_medium_busy(50 + 3 * 20 + 7);
        assert_eq!(s.backoff.pending_slots, step_through(10, 0, 117));
        assert_eq!(s.backoff.pending_slots, 7);
        // resumes after another DIFS of idle
        assert_eq!(s.try_access(1000, true), Access::StartAt(1050 + 7 * 20));
    }

    #[test]
    fn freeze_matches_step_through_everywhere() {
        for pending in 0..20u32 {
            for busy_at in (0..600).step_by(7) {
                let mut s = station();
                s.backoff.pending_slots = pending;
                s.try_access(0, true);
                s.on_medium_busy(busy_at);
                assert_eq!(
                    s.backoff.pending_slots,
                    step_through(pending, 0, busy_at),
                    "pending {pending} busy {busy_at}"
                );
            }
        }
    }

    #[test]
    fn success_resets_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = station();
        s.backoff.contention_window = 255;
        s.backoff.retry_count = 3;
        assert_eq!(s.on_tx_outcome(TxOutcome::Acked, &mut rng), RetryDecision::Delivered);
        assert_eq!(s.backoff.retry_count, 0);
        assert_eq!(s.backoff.contention_window, 15);
        assert!(s.backoff.pending_slots <= 15);
    }

    #[test]
    fn failure_doubles_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = station();
        assert_eq!(s.on_tx_outcome(TxOutcome::NoAck, &mut rng), RetryDecision::Retry);
        assert_eq!(s.backoff.contention_window, 31);
        assert_eq!(s.backoff.retry_count, 1);
    }

    #[test]
    fn retry_limit_drops_the_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = station();
        for _ in 0..7 {
            assert_eq!(s.on_tx_outcome(TxOutcome::NoAck, &mut rng), RetryDecision::Retry);
        }
        assert_eq!(s.backoff.retry_count, 7);
        assert_eq!(s.on_tx_outcome(TxOutcome::NoAck, &mut rng), RetryDecision::Drop);
        assert_eq!(s.backoff.retry_count, 0);
        assert_eq!(s.backoff.contention_window, 15);
    }

    #[test]
    fn window_stays_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = station();
        for i in 0..200 {
            let o = if i % 11 == 10 { TxOutcome::Acked } else { TxOutcome::NoAck };
            s.on_tx_outcome(o, &mut rng);
            let cw = s.backoff.contention_window;
            assert!((15..=1023).contains(&cw));
            assert!(s.backoff.pending_slots <= cw);
            assert!(s.backoff.retry_count <= 7);
        }
    }

    #[test]
    fn data_airtime_at_default_rate() {
        let p = DcfParams::default();
        assert_eq!(p.data_airtime(1500), 20 + 2000);
        let g = DcfParams { phy_rate_mbps: 54.0, ..p };
        assert_eq!(g.data_airtime(1500), 20 + 223);
    }
}
