#![allow(dead_code)]

use std::path::PathBuf;

use coexsim::medium::{
    path_loss, DeliveryResult, InterfaceId, Medium, RadioInterface, Transmission,
};
use coexsim::scenario::{parse_scenario, ScenarioConfig};

pub const CANONICAL: [&str; 4] = ["emulation", "conference-room", "colocated", "lone-ss"];

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

pub fn scenario(name: &str) -> ScenarioConfig {
    let text = std::fs::read_to_string(scenario_path(name)).expect("canonical scenario is readable");
    parse_scenario(&text).expect("canonical scenario is valid")
}

/// Received power computed from first principles, without `Medium`.
fn power(tx: &Transmission, from: &RadioInterface, to: &RadioInterface, medium: &Medium) -> f64 {
    let same_platform = from.platform.is_some() && from.platform == to.platform;
    let loss = if same_platform {
        medium.coupling_loss_db
    } else {
        path_loss(from.position.distance(&to.position), &medium.model).unwrap()
    };
    tx.power_dbm - loss - medium.spillage.rejection_db(tx.channel_mhz - to.channel_mhz)
}

/// Walks every microsecond of every addressed frame and checks the
/// transmissions on air at that instant.
pub fn brute_force(
    active: &[Transmission],
    ifaces: &[RadioInterface],
    medium: &Medium,
) -> Vec<(u64, InterfaceId, DeliveryResult)> {
    let find = |id: InterfaceId| ifaces.iter().find(|i| i.id == id);
    let mut out = Vec::new();
    for tx in active {
        let (Some(dest), Some(src)) = (tx.dest.and_then(find), find(tx.source)) else { continue };
        let signal = power(tx, src, dest, medium);
        if signal < dest.decode_sensitivity_dbm {
            out.push((tx.id, dest.id, DeliveryResult::BelowSensitivity));
            continue;
        }
        let mut result = DeliveryResult::Decoded;
        'us: for us in tx.start..tx.start + tx.airtime {
            for other in active.iter().filter(|o| o.id != tx.id && o.start <= us && us < o.start + o.airtime) {
                let Some(osrc) = find(other.source) else { continue };
                if osrc.id == dest.id || signal - power(other, osrc, dest, medium) < medium.sinr_threshold_db {
                    result = DeliveryResult::Corrupted;
                    break 'us;
                }
            }
        }
        out.push((tx.id, dest.id, result));
    }
    out
}
