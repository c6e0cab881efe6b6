//! Propagation, adjacent-channel spillage and per-receiver delivery outcomes.
//!
//! Everything here is a pure function of its inputs. The engine precomputes a
//! loss table from these functions once per run and feeds the same decision
//! core ([`resolve_against`]) with table lookups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathLossKind {
    FreeSpace,
    LogDistance,
}

/// Distance-dependent attenuation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub kind: PathLossKind,
    /// Path-loss exponent. Fixed at 2.0 for free space.
    pub exponent: f64,
    /// Loss at the 1 m reference distance (log-distance only).
    pub reference_loss_db: f64,
    pub frequency_mhz: f64,
}

/// Free-space loss at 1 m and 2400 MHz, the default log-distance reference.
pub const REFERENCE_LOSS_2400_DB: f64 = 40.05;

impl PathLossModel {
    pub fn free_space(frequency_mhz: f64) -> Self {
        PathLossModel {
            kind: PathLossKind::FreeSpace,
            exponent: 2.0,
            reference_loss_db: free_space_db(1.0, frequency_mhz),
            frequency_mhz,
        }
    }

    pub fn log_distance(exponent: f64, reference_loss_db: f64, frequency_mhz: f64) -> Self {
        PathLossModel {
            kind: PathLossKind::LogDistance,
            exponent,
            reference_loss_db,
            frequency_mhz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_mhz.is_finite() && self.frequency_mhz > 0.0) {
            return Err(Error::Domain(format!(
                "frequency must be positive, got {} MHz",
                self.frequency_mhz
            )));
        }
        match self.kind {
            PathLossKind::FreeSpace if self.exponent != 2.0 => Err(Error::Domain(format!(
                "free-space exponent is fixed at 2.0, got {}",
                self.exponent
            ))),
            PathLossKind::LogDistance if !(self.exponent >= 2.0 && self.exponent.is_finite()) => {
                Err(Error::Domain(format!("exponent must be >= 2.0, got {}", self.exponent)))
            }
            PathLossKind::LogDistance
                if !(self.reference_loss_db > 0.0 && self.reference_loss_db.is_finite()) =>
            {
                Err(Error::Domain(format!(
                    "reference loss must be positive, got {} dB",
                    self.reference_loss_db
                )))
            }
            _ => Ok(()),
        }
    }

    /// Loss at `distance` meters; see [`path_loss`].
    pub fn loss_db(&self, distance: f64) -> Result<f64> {
        path_loss(distance, self)
    }

    /// Largest distance whose loss does not exceed `loss_db`. Losses at or
    /// below the 1 m value map to 1 m.
    pub fn distance_for_loss(&self, loss_db: f64) -> f64 {
        let at_one = self.loss_at_one_meter();
        if loss_db <= at_one {
            return 1.0;
        }
        10f64.powf((loss_db - at_one) / (10.0 * self.exponent))
    }

    fn loss_at_one_meter(&self) -> f64 {
        match self.kind {
            PathLossKind::FreeSpace => free_space_db(1.0, self.frequency_mhz),
            PathLossKind::LogDistance => self.reference_loss_db,
        }
    }
}

fn free_space_db(distance: f64, frequency_mhz: f64) -> f64 {
    20.0 * distance.log10() + 20.0 * frequency_mhz.log10() - 27.55
}

/// Path loss in dB. Distances under 1 m are clamped to 1 m.
pub fn path_loss(distance: f64, model: &PathLossModel) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::Domain(format!(
            "path loss needs a positive finite distance, got {distance} m"
        )));
    }
    let d = distance.max(1.0);
    Ok(match model.kind {
        PathLossKind::FreeSpace => free_space_db(d, model.frequency_mhz),
        PathLossKind::LogDistance => model.reference_loss_db + 10.0 * model.exponent * d.log10(),
    })
}

/// Adjacent-channel rejection as a function of center-frequency separation.
///
/// Linear interpolation between entries, clamped to the first/last entry
/// outside the table. Co-channel (zero separation) is always 0 dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct SpillageTable {
    entries: Vec<(f64, f64)>,
}

impl SpillageTable {
    pub fn new(mut entries: Vec<(f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Domain("spillage table needs at least one entry".into()));
        }
        if entries
            .iter()
            .any(|&(sep, rej)| !(sep.is_finite() && rej.is_finite()) || sep <= 0.0 || rej < 0.0)
        {
            return Err(Error::Domain(
                "spillage entries need positive separation and non-negative rejection".into(),
            ));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        if entries.windows(2).any(|w| w[1].1 < w[0].1 || w[1].0 == w[0].0) {
            return Err(Error::Domain(
                "rejection must be non-decreasing in separation, with distinct separations".into(),
            ));
        }
        Ok(SpillageTable { entries })
    }

    /// Two-point calibration: a 20 dBm WiFi transmitter 1 m away shows up at
    /// -61 dBm in a channel 32 MHz away and at -75 dBm 114 MHz away.
    pub fn staccato() -> Self {
        SpillageTable { entries: vec![(32.0, 41.0), (114.0, 55.0)] }
    }

    /// Alternate calibration matching 60 dB / 56 dB isolation requirements
    /// against the default -118 dBm victim tolerance (the stricter figure on
    /// the nearer channel pair).
    pub fn intel() -> Self {
        SpillageTable { entries: vec![(32.0, 37.95), (114.0, 41.95)] }
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn rejection_db(&self, separation_mhz: f64) -> f64 {
        let sep = separation_mhz.abs();
        if sep == 0.0 {
            return 0.0;
        }
        let first = self.entries[0];
        let last = self.entries[self.entries.len() - 1];
        if sep <= first.0 {
            return first.1;
        }
        if sep >= last.0 {
            return last.1;
        }
        for w in self.entries.windows(2) {
            let ((s0, r0), (s1, r1)) = (w[0], w[1]);
            if sep <= s1 {
                return r0 + (r1 - r0) * (sep - s0) / (s1 - s0);
            }
        }
        last.1
    }
}

impl TryFrom<Vec<(f64, f64)>> for SpillageTable {
    type Error = Error;

    fn try_from(entries: Vec<(f64, f64)>) -> Result<Self> {
        SpillageTable::new(entries)
    }
}

impl From<SpillageTable> for Vec<(f64, f64)> {
    fn from(t: SpillageTable) -> Self {
        t.entries
    }
}

/// How a transmitter couples into a receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// Separate platforms: distance-based path loss.
    Geometric { src: Position, dst: Position },
    /// Same platform: a fixed coupling loss replaces path loss.
    Colocated { coupling_loss_db: f64 },
}

/// Received in-band power: transmit power minus path (or coupling) loss minus
/// the adjacent-channel rejection for the center-frequency separation.
pub fn received_power(
    tx_power_dbm: f64,
    coupling: Coupling,
    tx_center_mhz: f64,
    rx_center_mhz: f64,
    model: &PathLossModel,
    spillage: &SpillageTable,
) -> Result<f64> {
    let loss = match coupling {
        Coupling::Geometric { src, dst } => path_loss(src.distance(&dst), model)?,
        Coupling::Colocated { coupling_loss_db } => coupling_loss_db,
    };
    Ok(tx_power_dbm - loss - spillage.rejection_db(tx_center_mhz - rx_center_mhz))
}

/// Attenuation needed so `spillage_level` falls to `victim_tolerance`.
pub fn required_isolation(spillage_level_dbm: f64, victim_tolerance_dbm: f64) -> f64 {
    spillage_level_dbm - victim_tolerance_dbm
}

/// Victim interference tolerance that makes -61 dBm spillage need 57 dB.
pub const DEFAULT_VICTIM_TOLERANCE_DBM: f64 = -118.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InterfaceId(pub usize);

impl std::fmt::Display for InterfaceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "if{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadioKind {
    Wifi,
    WimaxSs,
    WimaxBs,
}

/// A positioned transceiver. Interfaces sharing a `platform` are co-located.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioInterface {
    pub id: InterfaceId,
    pub kind: RadioKind,
    pub position: Position,
    pub channel_mhz: f64,
    pub tx_power_dbm: f64,
    pub decode_sensitivity_dbm: f64,
    pub cca_threshold_dbm: f64,
    pub platform: Option<usize>,
}

impl RadioInterface {
    pub fn colocated_with(&self, other: &RadioInterface) -> bool {
        self.id != other.id && self.platform.is_some() && self.platform == other.platform
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameKind {
    Data,
    Cts,
    Ack,
    WimaxBurst,
}

/// An on-air emission. Times are integer microseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub id: u64,
    pub source: InterfaceId,
    pub dest: Option<InterfaceId>,
    pub kind: FrameKind,
    pub start: u64,
    pub airtime: u64,
    pub power_dbm: f64,
    pub channel_mhz: f64,
    /// NAV duration carried by a CTS, zero otherwise.
    pub nav_us: u64,
    pub bytes: u64,
}

impl Transmission {
    pub fn end(&self) -> u64 {
        self.start + self.airtime
    }

    pub fn overlaps(&self, other: &Transmission) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeliveryResult {
    Decoded,
    Corrupted,
    BelowSensitivity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryOutcome {
    pub transmission: u64,
    pub receiver: InterfaceId,
    pub result: DeliveryResult,
    pub rx_power_dbm: f64,
}

/// Environment shared by every link in a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Medium {
    pub model: PathLossModel,
    pub spillage: SpillageTable,
    pub coupling_loss_db: f64,
    pub sinr_threshold_db: f64,
}

impl Medium {
    pub fn coupling(&self, from: &RadioInterface, to: &RadioInterface) -> Coupling {
        if from.colocated_with(to) {
            Coupling::Colocated { coupling_loss_db: self.coupling_loss_db }
        } else {
            Coupling::Geometric { src: from.position, dst: to.position }
        }
    }

    /// Total attenuation (path or coupling loss plus rejection) from `from`
    /// transmitting on `tx_channel_mhz` into `to`.
    pub fn attenuation_db(
        &self,
        from: &RadioInterface,
        to: &RadioInterface,
        tx_channel_mhz: f64,
    ) -> Result<f64> {
        received_power(
            0.0,
            self.coupling(from, to),
            tx_channel_mhz,
            to.channel_mhz,
            &self.model,
            &self.spillage,
        )
        .map(|p| -p)
    }
}

/// Outcome of `target` at `receiver`, given every other transmission that
/// may overlap it and a power function for (transmission -> receiver).
///
/// Corruption uses the strongest single overlapping interferer; a receiver
/// that transmits during the frame cannot decode it.
pub fn resolve_against<'a, I, F>(
    target: &Transmission,
    receiver: InterfaceId,
    sensitivity_dbm: f64,
    sinr_threshold_db: f64,
    others: I,
    mut power_at_receiver: F,
) -> (DeliveryResult, f64)
where
    I: IntoIterator<Item = &'a Transmission>,
    F: FnMut(&Transmission) -> f64,
{
    let signal = power_at_receiver(target);
    if signal < sensitivity_dbm {
        return (DeliveryResult::BelowSensitivity, signal);
    }
    for other in others {
        if other.id == target.id || !other.overlaps(target) {
            continue;
        }
        if other.source == receiver {
            return (DeliveryResult::Corrupted, signal);
        }
        if signal - power_at_receiver(other) < sinr_threshold_db {
            return (DeliveryResult::Corrupted, signal);
        }
    }
    (DeliveryResult::Decoded, signal)
}

/// Outcomes for every addressed transmission in `active` whose interval
/// touches `window`. Transmissions whose source or destination is not in
/// `interfaces` are skipped.
pub fn resolve_deliveries(
    active: &[Transmission],
    interfaces: &[RadioInterface],
    medium: &Medium,
    window: (u64, u64),
) -> Vec<DeliveryOutcome> {
    let lookup = |id: InterfaceId| interfaces.iter().find(|i| i.id == id);
    let mut outcomes = Vec::new();
    for tx in active {
        if tx.end() <= window.0 || tx.start >= window.1 {
            continue;
        }
        let (Some(dest_id), Some(_)) = (tx.dest, lookup(tx.source)) else {
            continue;
        };
        let Some(receiver) = lookup(dest_id) else {
            continue;
        };
        let power = |t: &Transmission| -> f64 {
            match lookup(t.source) {
                Some(src) if src.id != receiver.id => medium
                    .attenuation_db(src, receiver, t.channel_mhz)
                    .map(|a| t.power_dbm - a)
                    .unwrap_or(f64::NEG_INFINITY),
                _ => f64::NEG_INFINITY,
            }
        };
        let (result, rx_power_dbm) = resolve_against(
            tx,
            receiver.id,
            receiver.decode_sensitivity_dbm,
            medium.sinr_threshold_db,
            active.iter(),
            power,
        );
        outcomes.push(DeliveryOutcome {
            transmission: tx.id,
            receiver: receiver.id,
            result,
            rx_power_dbm,
        });
    }
    outcomes
}
