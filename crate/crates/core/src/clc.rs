//! Co-located coexistence controller.
//!
//! One controller per multi-radio platform. Interfaces ask for sleep (S),
//! reception (Rx) or transmission (Tx); the controller grants a request
//! unless it would put a transmitter and a receiver on the same platform at
//! the same time:
//!
//! | state \ request | S | Rx | Tx |
//! |-----------------|---|----|----|
//! | S               | S | Rx | Tx |
//! | Rx              | S | Rx | X  |
//! | Tx              | S | X  | Tx |
//!
//! With several interfaces the grants are reference counted: the platform
//! falls back to S only once the last holder releases.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::{InterfaceId, RadioKind};
use crate::wimax_mac::{Direction, FrameMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ClcState {
    S = 0,
    Rx = 1,
    Tx = 2,
}

impl ClcState {
    pub const ALL: [ClcState; 3] = [ClcState::S, ClcState::Rx, ClcState::Tx];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Grant,
    Deny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterfaceRequest {
    pub interface: InterfaceId,
    pub kind: RadioKind,
    pub desired: ClcState,
    pub priority: u8,
    /// Absolute airtime the request covers, for schedule checks.
    pub span: Option<(u64, u64)>,
}

impl InterfaceRequest {
    pub fn new(interface: InterfaceId, kind: RadioKind, desired: ClcState) -> Self {
        InterfaceRequest { interface, kind, desired, priority: 0, span: None }
    }
}

/// Per-interface grants and the counts derived from them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GrantLedger {
    granted: BTreeMap<InterfaceId, ClcState>,
    rx_count: usize,
    tx_count: usize,
}

impl GrantLedger {
    pub fn new<I: IntoIterator<Item = InterfaceId>>(interfaces: I) -> Self {
        GrantLedger {
            granted: interfaces.into_iter().map(|i| (i, ClcState::S)).collect(),
            rx_count: 0,
            tx_count: 0,
        }
    }

    pub fn register(&mut self, interface: InterfaceId) {
        self.granted.entry(interface).or_insert(ClcState::S);
    }

    pub fn state(&self) -> ClcState {
        release_all_check(self)
    }

    pub fn granted(&self, interface: InterfaceId) -> Option<ClcState> {
        self.granted.get(&interface).copied()
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.rx_count, self.tx_count)
    }

    /// Decide `req` without mutating; a denial returns an identical ledger.
    pub fn request(&self, req: &InterfaceRequest) -> Result<(Decision, GrantLedger)> {
        let mut next = self.clone();
        let decision = next.apply(req)?;
        Ok((decision, next))
    }

    /// Decide `req` in place.
    pub fn apply(&mut self, req: &InterfaceRequest) -> Result<Decision> {
        let held = *self
            .granted
            .get(&req.interface)
            .ok_or(Error::Unregistered(req.interface.0))?;
        if matches!((self.state(), req.desired), (ClcState::Rx, ClcState::Tx) | (ClcState::Tx, ClcState::Rx)) {
            return Ok(Decision::Deny);
        }
        self.set(req.interface, held, req.desired);
        Ok(Decision::Grant)
    }

    fn set(&mut self, interface: InterfaceId, from: ClcState, to: ClcState) {
        match from {
            ClcState::Rx => self.rx_count -= 1,
            ClcState::Tx => self.tx_count -= 1,
            ClcState::S => {}
        }
        match to {
            ClcState::Rx => self.rx_count += 1,
            ClcState::Tx => self.tx_count += 1,
            ClcState::S => {}
        }
        self.granted.insert(interface, to);
    }
}

/// Controller state implied by the ledger.
pub fn release_all_check(ledger: &GrantLedger) -> ClcState {
    debug_assert!(ledger.rx_count == 0 || ledger.tx_count == 0);
    if ledger.tx_count > 0 {
        ClcState::Tx
    } else if ledger.rx_count > 0 {
        ClcState::Rx
    } else {
        ClcState::S
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleCheck {
    Allow,
    Deny,
}

/// Keep a co-located WiFi interface off the air while `ss` is scheduled to
/// receive, and deaf while `ss` is scheduled to transmit.
pub fn schedule_aware_check(req: &InterfaceRequest, map: &FrameMap, frame_start: u64, ss: InterfaceId) -> ScheduleCheck {
    let Some((from, to)) = req.span else {
        return ScheduleCheck::Allow;
    };
    let conflicting = match req.desired {
        ClcState::Tx => Direction::Dl,
        ClcState::Rx => Direction::Ul,
        ClcState::S => return ScheduleCheck::Allow,
    };
    let hit = map.grants_for(ss).any(|g| {
        g.direction == conflicting && frame_start + g.start < to && from < frame_start + g.end()
    });
    if hit {
        ScheduleCheck::Deny
    } else {
        ScheduleCheck::Allow
    }
}

/// Pick the request to serve first among simultaneous contenders: highest
/// priority, then WiMAX before WiFi, then lowest interface id.
pub fn priority_resolve(contenders: &[InterfaceRequest]) -> Result<usize> {
    let rank = |r: &InterfaceRequest| {
        let wifi = matches!(r.kind, RadioKind::Wifi);
        (std::cmp::Reverse(r.priority), wifi, r.interface)
    };
    contenders
        .iter()
        .enumerate()
        .min_by_key(|(_, r)| rank(r))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Domain("no contenders to resolve".into()))
}
