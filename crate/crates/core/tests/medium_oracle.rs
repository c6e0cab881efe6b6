mod common;

use coexsim::medium::{
    resolve_deliveries, FrameKind, InterfaceId, Medium, PathLossModel, Position, RadioInterface, RadioKind,
    SpillageTable, Transmission,
};
use proptest::prelude::*;

fn medium() -> Medium {
    Medium {
        model: PathLossModel::log_distance(3.0, 40.05, 2400.0),
        spillage: SpillageTable::staccato(),
        coupling_loss_db: 20.0,
        sinr_threshold_db: 10.0,
    }
}

fn arb_iface(id: usize) -> impl Strategy<Value = RadioInterface> {
    (-30.0f64..30.0, -30.0f64..30.0, prop::sample::select(vec![2380.0, 2412.0, 2437.0, 2462.0]), prop::option::of(0usize..2))
        .prop_map(move |(x, y, ch, platform)| RadioInterface {
            id: InterfaceId(id),
            kind: RadioKind::Wifi,
            position: Position::new(x, y),
            channel_mhz: ch,
            tx_power_dbm: 20.0,
            decode_sensitivity_dbm: -85.0,
            cca_threshold_dbm: -82.0,
            platform,
        })
}

fn arb_instance() -> impl Strategy<Value = (Vec<RadioInterface>, Vec<Transmission>)> {
    let ifaces = (arb_iface(0), arb_iface(1), arb_iface(2), arb_iface(3), arb_iface(4))
        .prop_map(|(a, b, c, d, e)| vec![a, b, c, d, e]);
    let txs = prop::collection::vec((0usize..5, 0usize..6, 0u64..300, 1u64..150, -10.0f64..25.0), 1..=4);
    (ifaces, txs).prop_map(|(ifaces, raw)| {
        let txs = raw
            .into_iter()
            .enumerate()
            .map(|(k, (src, dst, start, airtime, power))| Transmission {
                id: k as u64 + 1,
                source: InterfaceId(src),
                dest: (dst != src && dst < 5).then_some(InterfaceId(dst)),
                kind: FrameKind::Data,
                start,
                airtime,
                power_dbm: power,
                channel_mhz: ifaces[src].channel_mhz,
                nav_us: 0,
                bytes: 100,
            })
            .collect();
        (ifaces, txs)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn closed_form_matches_per_microsecond_walk((ifaces, txs) in arb_instance()) {
        let m = medium();
        let got: Vec<_> = resolve_deliveries(&txs, &ifaces, &m, (0, u64::MAX))
            .into_iter()
            .map(|o| (o.transmission, o.receiver, o.result))
            .collect();
        prop_assert_eq!(got, common::brute_force(&txs, &ifaces, &m));
    }
}

#[test]
fn abutting_frames_do_not_collide() {
    let ifaces: Vec<RadioInterface> = (0..3)
        .map(|i| RadioInterface {
            id: InterfaceId(i),
            kind: RadioKind::Wifi,
            position: Position::new(i as f64, 0.0),
            channel_mhz: 2412.0,
            tx_power_dbm: 20.0,
            decode_sensitivity_dbm: -85.0,
            cca_threshold_dbm: -82.0,
            platform: None,
        })
        .collect();
    let tx = |id, src, start| Transmission {
        id,
        source: InterfaceId(src),
        dest: Some(InterfaceId(1)),
        kind: FrameKind::Data,
        start,
        airtime: 100,
        power_dbm: 20.0,
        channel_mhz: 2412.0,
        nav_us: 0,
        bytes: 100,
    };
    let txs = [tx(1, 0, 0), tx(2, 2, 100)];
    let m = medium();
    let got = resolve_deliveries(&txs, &ifaces, &m, (0, 1000));
    assert!(got.iter().all(|o| o.result == coexsim::medium::DeliveryResult::Decoded));
    assert_eq!(common::brute_force(&txs, &ifaces, &m).len(), 2);
}
