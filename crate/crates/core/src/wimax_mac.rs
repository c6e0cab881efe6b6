//! Scheduled TDM MAC for one base station and its subscriber stations.
//!
//! Each frame is split into a downlink subframe followed by an uplink
//! subframe. Within a subframe the BS hands out contiguous grants in
//! ascending SS id order, sized in proportion to demand, so an SS keeps its
//! relative position while its slot grows or shrinks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::{FrameKind, InterfaceId, RadioInterface, Transmission};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Dl,
    Ul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grant {
    pub ss: InterfaceId,
    pub direction: Direction,
    /// Offset from the frame start, µs.
    pub start: u64,
    pub len: u64,
}

impl Grant {
    pub fn end(&self) -> u64 {
        self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMap {
    pub frame_len: u64,
    pub dl_end: u64,
    pub grants: Vec<Grant>,
}

impl FrameMap {
    pub fn grants_for(&self, ss: InterfaceId) -> impl Iterator<Item = &Grant> {
        self.grants.iter().filter(move |g| g.ss == ss)
    }

    /// Smallest interval covering every grant of `ss`, as frame offsets.
    pub fn hull_for(&self, ss: InterfaceId) -> Option<(u64, u64)> {
        self.grants_for(ss).fold(None, |acc, g| match acc {
            None => Some((g.start, g.end())),
            Some((s, e)) => Some((s.min(g.start), e.max(g.end()))),
        })
    }

    /// Checks ordering, non-overlap and subframe containment.
    pub fn is_well_formed(&self) -> bool {
        let ordered = self.grants.windows(2).all(|w| w[0].end() <= w[1].start);
        let placed = self.grants.iter().all(|g| {
            g.len > 0
                && g.end() <= self.frame_len
                && match g.direction {
                    Direction::Dl => g.end() <= self.dl_end,
                    Direction::Ul => g.start >= self.dl_end,
                }
        });
        ordered && placed && self.dl_end <= self.frame_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsDemand {
    pub ss: InterfaceId,
    pub queued_bytes: u64,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WimaxParams {
    pub frame_us: u64,
    pub dl_ratio: f64,
    /// Slot capacity of the abstracted PHY.
    pub bytes_per_us: f64,
    /// How long before a frame starts its map is fixed and announced.
    pub plan_lead_us: u64,
    pub decode_sensitivity_dbm: f64,
}

impl Default for WimaxParams {
    fn default() -> Self {
        WimaxParams { frame_us: 5_000, dl_ratio: 0.6, bytes_per_us: 1.25, plan_lead_us: 1_000, decode_sensitivity_dbm: -90.0 }
    }
}

impl WimaxParams {
    pub fn dl_end(&self) -> u64 {
        (self.frame_us as f64 * self.dl_ratio).round() as u64
    }
}

/// Lay out grants for one frame.
pub fn build_frame_map(demands: &[SsDemand], frame_len: u64, dl_ratio: f64) -> Result<FrameMap> {
    if frame_len == 0 {
        return Err(Error::Domain("frame length must be positive".into()));
    }
    if !(dl_ratio > 0.0 && dl_ratio < 1.0) {
        return Err(Error::Domain(format!("dl_ratio must lie in (0, 1), got {dl_ratio}")));
    }
    let dl_end = (frame_len as f64 * dl_ratio).round() as u64;
    let mut grants = split(demands, Direction::Dl, 0, dl_end);
    grants.extend(split(demands, Direction::Ul, dl_end, frame_len));
    Ok(FrameMap { frame_len, dl_end, grants })
}

fn split(demands: &[SsDemand], direction: Direction, from: u64, to: u64) -> Vec<Grant> {
    let mut per_ss: std::collections::BTreeMap<InterfaceId, u64> = Default::default();
    for d in demands.iter().filter(|d| d.direction == direction && d.queued_bytes > 0) {
        *per_ss.entry(d.ss).or_default() += d.queued_bytes;
    }
    let total: u128 = per_ss.values().map(|&b| u128::from(b)).sum();
    let span = to - from;
    if total == 0 || span == 0 {
        return Vec::new();
    }
    let mut lens: Vec<(InterfaceId, u64)> = per_ss
        .iter()
        .map(|(&ss, &b)| (ss, (u128::from(span) * u128::from(b) / total) as u64))
        .collect();
    let mut left = span - lens.iter().map(|l| l.1).sum::<u64>();
    for l in lens.iter_mut() {
        if left == 0 {
            break;
        }
        l.1 += 1;
        left -= 1;
    }
    let mut at = from;
    lens.into_iter()
        .filter(|&(_, len)| len > 0)
        .map(|(ss, len)| {
            let g = Grant { ss, direction, start: at, len };
            at += len;
            g
        })
        .collect()
}

/// One BS and the subscriber stations it serves.
#[derive(Debug, Clone)]
pub struct WimaxCell {
    pub bs: RadioInterface,
    pub subscribers: Vec<RadioInterface>,
    pub bytes_per_us: f64,
}

impl WimaxCell {
    pub fn capacity_bytes(&self, len_us: u64) -> u64 {
        (len_us as f64 * self.bytes_per_us).floor() as u64
    }

    /// Bursts for `ss` in the frame starting at `frame_start`. Downlink bursts
    /// come from the BS, uplink bursts from the SS. Ids are drawn from
    /// `next_id`.
    pub fn ss_burst(
        &self,
        map: &FrameMap,
        ss: InterfaceId,
        frame_start: u64,
        next_id: &mut u64,
    ) -> Result<Vec<Transmission>> {
        let station = self
            .subscribers
            .iter()
            .find(|s| s.id == ss)
            .ok_or_else(|| Error::Lookup(format!("{ss} is not served by {}", self.bs.id)))?;
        Ok(map
            .grants_for(ss)
            .map(|g| {
                let (src, dst) = match g.direction {
                    Direction::Dl => (&self.bs, station),
                    Direction::Ul => (station, &self.bs),
                };
                *next_id += 1;
                Transmission {
                    id: *next_id,
                    source: src.id,
                    dest: Some(dst.id),
                    kind: FrameKind::WimaxBurst,
                    start: frame_start + g.start,
                    airtime: g.len,
                    power_dbm: src.tx_power_dbm,
                    channel_mhz: src.channel_mhz,
                    nav_us: 0,
                    bytes: self.capacity_bytes(g.len),
                }
            })
            .collect())
    }
}
