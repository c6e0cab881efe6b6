//! One line per acceptance criterion. Runs without the libtest harness so
//! the lines appear on every run, and exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;

use coexsim::afr::FrsEmitter;
use coexsim::clc::{ClcState, Decision, GrantLedger, InterfaceRequest};
use coexsim::engine::{run, run_detailed, RunDetail};
use coexsim::medium::{
    path_loss, received_power, required_isolation, resolve_deliveries, Coupling, FrameKind, InterfaceId, Medium,
    PathLossModel, Position, RadioInterface, RadioKind, SpillageTable, Transmission,
};
use coexsim::report::{self, Toggle};
use coexsim::scenario::Traffic;
use coexsim::wifi_mac::NAV_CAP_US;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg()) }
}

fn ledger_transitions() -> Outcome {
    use ClcState::*;
    let id = InterfaceId(0);
    let table = [
        (S, S, Decision::Grant, S),
        (S, Rx, Decision::Grant, Rx),
        (S, Tx, Decision::Grant, Tx),
        (Rx, S, Decision::Grant, S),
        (Rx, Rx, Decision::Grant, Rx),
        (Rx, Tx, Decision::Deny, Rx),
        (Tx, S, Decision::Grant, S),
        (Tx, Tx, Decision::Grant, Tx),
        (Tx, Rx, Decision::Deny, Tx),
    ];
    for (from, want, decision, next) in table {
        let mut ledger = GrantLedger::new([id]);
        ledger.apply(&InterfaceRequest::new(id, RadioKind::Wifi, from)).map_err(|e| e.to_string())?;
        let (got, after) = ledger
            .request(&InterfaceRequest::new(id, RadioKind::Wifi, want))
            .map_err(|e| e.to_string())?;
        ensure(got == decision && after.state() == next, || {
            format!("{from:?} + {want:?}: got {got:?} -> {:?}", after.state())
        })?;
    }
    Ok("9/9 state-request pairs".into())
}

fn clc_removes_conflicts() -> Outcome {
    let cfg = common::scenario("colocated");
    let seeds: Vec<u64> = (1..=10).collect();
    let (cmp, _) = report::compare(&cfg, Toggle::Clc, &seeds).map_err(|e| e.to_string())?;
    for s in &cmp.per_seed {
        ensure(s.on.colocated_conflict_us == 0.0 && s.off.colocated_conflict_us > 0.0, || {
            format!("seed {}: off {} us, on {} us", s.seed, s.off.colocated_conflict_us, s.on.colocated_conflict_us)
        })?;
    }
    Ok(format!("10 seeds, mean conflict off {:.0} us, on 0 us", cmp.off.colocated_conflict_us))
}

fn isolation_arithmetic() -> Outcome {
    let pl = path_loss(7.0, &PathLossModel::free_space(2400.0)).map_err(|e| e.to_string())?;
    let iso = required_isolation(-61.0, -118.0);
    ensure((pl - 57.0).abs() <= 0.5 && iso == 57.0, || format!("path loss {pl:.2} dB, isolation {iso} dB"))?;
    Ok(format!("path loss at 7 m {pl:.2} dB, isolation {iso} dB"))
}

fn spillage_calibration() -> Outcome {
    let fs = PathLossModel::free_space(2400.0);
    let t = SpillageTable::staccato();
    let one_m = Coupling::Geometric { src: Position::new(0.0, 0.0), dst: Position::new(1.0, 0.0) };
    let ch1 = received_power(20.0, one_m, 2412.0, 2380.0, &fs, &t).map_err(|e| e.to_string())?;
    let ch11 = received_power(20.0, one_m, 2462.0, 2576.0, &fs, &t).map_err(|e| e.to_string())?;
    ensure((ch1 + 61.0).abs() <= 0.5 && (ch11 + 75.0).abs() <= 0.5, || {
        format!("ch1 {ch1:.2} dBm, ch11 {ch11:.2} dBm")
    })?;
    Ok(format!("ch1 {ch1:.2} dBm, ch11 {ch11:.2} dBm"))
}

fn delivered(d: &RunDetail, link: &str, from: u64, to: u64) -> Result<u64, String> {
    let k = d.result.links.iter().position(|l| l.id == link).ok_or(format!("no link {link}"))?;
    Ok(d.deliveries.iter().filter(|x| x.link == k && x.at > from && x.at <= to).map(|x| x.bytes).sum())
}

fn nav_silences_neighbour_only() -> Outcome {
    let cfg = common::scenario("emulation");
    let mut base = cfg.clone();
    base.nodes.iter_mut().find(|n| n.id == "node1").ok_or("no node1")?.traffic = Traffic::None;
    let with = run_detailed(&cfg, cfg.seed, None).map_err(|e| e.to_string())?;
    let without = run_detailed(&base, cfg.seed, None).map_err(|e| e.to_string())?;
    let &(nav_start, nav_end) = with.result.reservations.first().ok_or("no reservation")?;
    let cts_start = nav_start - cfg.wifi.cts_airtime_us;

    let silenced = delivered(&with, "node2", cts_start, nav_end)?;
    ensure(silenced == 0, || format!("node2 delivered {silenced} B under NAV"))?;

    let (l3, l3_base) = (delivered(&with, "node3", cts_start, nav_end)?, delivered(&without, "node3", cts_start, nav_end)?);
    let ratio3 = l3 as f64 / l3_base as f64;
    ensure((ratio3 - 1.0).abs() <= 0.05, || format!("node3 at {ratio3:.3} of baseline"))?;

    let after = (nav_end, nav_end + 500_000);
    let (l2, l2_base) = (delivered(&with, "node2", after.0, after.1)?, delivered(&without, "node2", after.0, after.1)?);
    let ratio2 = l2 as f64 / l2_base as f64;
    ensure(ratio2 >= 0.9, || format!("node2 recovers to {ratio2:.3} of baseline"))?;
    Ok(format!(
        "NAV {:.3}-{:.3} s, node2 0 B, node3 {ratio3:.3}x baseline, node2 after {ratio2:.3}x",
        cts_start as f64 / 1e6,
        nav_end as f64 / 1e6
    ))
}

fn wimax_gets_fair_share() -> Outcome {
    let cfg = common::scenario("conference-room");
    let r = run(&cfg, cfg.seed).map_err(|e| e.to_string())?;
    let ss = r.links.iter().find(|l| l.id == "ss").ok_or("no ss link")?;
    ensure((ss.share - 1.0 / 3.0).abs() <= 0.05, || format!("WiMAX share {:.4}", ss.share))?;
    Ok(format!("WiMAX share {:.4} with 2 WiFi links, fairness {:.3}", ss.share, r.fairness_index))
}

fn dpe_stays_quiet_and_protects() -> Outcome {
    let lone = common::scenario("lone-ss");
    let r = run(&lone, lone.seed).map_err(|e| e.to_string())?;
    ensure(r.cts_count == 0, || format!("lone SS sent {} CTS", r.cts_count))?;

    let cfg = common::scenario("conference-room");
    let seeds: Vec<u64> = (1..=10).collect();
    let (cmp, _) = report::compare(&cfg, Toggle::Afr, &seeds).map_err(|e| e.to_string())?;
    for s in &cmp.per_seed {
        ensure(s.on.wimax_corrupted_frames < s.off.wimax_corrupted_frames, || {
            format!("seed {}: corrupted off {} on {}", s.seed, s.off.wimax_corrupted_frames, s.on.wimax_corrupted_frames)
        })?;
    }
    Ok(format!(
        "lone SS 0 CTS; WiMAX corrupted frames off {:.1} vs on {:.1} over 10 seeds",
        cmp.off.wimax_corrupted_frames, cmp.on.wimax_corrupted_frames
    ))
}

fn frs_chunking() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..2000 {
        let em = FrsEmitter {
            source: InterfaceId(0),
            channel_mhz: 2412.0,
            th_dur_us: rng.random_range(0..5_000),
            cts_airtime_us: 44,
        };
        let reservation = rng.random_range(0..200_000);
        let start = rng.random_range(0..1_000_000);
        let mut next = 0;
        let frames = em.emit(reservation, 10.0, start, &mut next);
        if reservation < em.th_dur_us || reservation == 0 {
            ensure(frames.is_empty(), || format!("case {case}: {} frames below threshold", frames.len()))?;
            continue;
        }
        let total: u64 = frames.iter().map(|f| f.nav_us).sum();
        ensure(total == reservation, || format!("case {case}: {total} of {reservation} us"))?;
        ensure(frames.iter().all(|f| f.nav_us <= NAV_CAP_US && f.kind == FrameKind::Cts), || {
            format!("case {case}: chunk over cap")
        })?;
        let mut edge = start + em.cts_airtime_us;
        for f in &frames {
            ensure(f.end() == edge, || format!("case {case}: gap before {}", f.start))?;
            edge = f.end() + f.nav_us;
        }
    }
    Ok("2000 random reservations".into())
}

fn canonical_runs_repeat() -> Outcome {
    for name in common::CANONICAL {
        let cfg = common::scenario(name);
        let a = run(&cfg, cfg.seed).map_err(|e| e.to_string())?;
        let b = run(&cfg, cfg.seed).map_err(|e| e.to_string())?;
        ensure(report::to_json(&a) == report::to_json(&b) && report::to_csv(&a) == report::to_csv(&b), || {
            format!("{name}: reports differ")
        })?;
        ensure(a.trace_hash == b.trace_hash, || format!("{name}: trace hashes differ"))?;
    }
    Ok(format!("{} scenarios, identical reports and trace hashes", common::CANONICAL.len()))
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<RadioInterface>, Vec<Transmission>) {
    let channels = [2380.0, 2412.0, 2437.0, 2462.0];
    let ifaces: Vec<RadioInterface> = (0..5)
        .map(|i| RadioInterface {
            id: InterfaceId(i),
            kind: RadioKind::Wifi,
            position: Position::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)),
            channel_mhz: channels[rng.random_range(0..channels.len())],
            tx_power_dbm: 20.0,
            decode_sensitivity_dbm: -85.0,
            cca_threshold_dbm: -82.0,
            platform: rng.random_bool(0.4).then(|| rng.random_range(0..2)),
        })
        .collect();
    let n = rng.random_range(1..=4);
    let txs = (0..n)
        .map(|k| {
            let src = rng.random_range(0..5);
            let dst = rng.random_range(0..6);
            Transmission {
                id: k + 1,
                source: InterfaceId(src),
                dest: (dst != src && dst < 5).then_some(InterfaceId(dst)),
                kind: FrameKind::Data,
                start: rng.random_range(0..300),
                airtime: rng.random_range(1..150),
                power_dbm: rng.random_range(-10.0..25.0),
                channel_mhz: ifaces[src].channel_mhz,
                nav_us: 0,
                bytes: 100,
            }
        })
        .collect();
    (ifaces, txs)
}

fn oracle_agreement() -> Outcome {
    let medium = Medium {
        model: PathLossModel::log_distance(3.0, 40.05, 2400.0),
        spillage: SpillageTable::staccato(),
        coupling_loss_db: 20.0,
        sinr_threshold_db: 10.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut mismatches, mut outcomes) = (0, 0);
    for _ in 0..1000 {
        let (ifaces, txs) = random_instance(&mut rng);
        let got: Vec<_> = resolve_deliveries(&txs, &ifaces, &medium, (0, u64::MAX))
            .into_iter()
            .map(|o| (o.transmission, o.receiver, o.result))
            .collect();
        let want = common::brute_force(&txs, &ifaces, &medium);
        outcomes += want.len();
        if got != want {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} of 1000 instances disagree"))?;
    Ok(format!("1000 instances, {outcomes} outcomes, 0 mismatches"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("controller grant table", ledger_transitions),
        ("controller removes co-located conflicts", clc_removes_conflicts),
        ("isolation arithmetic", isolation_arithmetic),
        ("adjacent-channel calibration", spillage_calibration),
        ("CTS reservation silences only its neighbour", nav_silences_neighbour_only),
        ("WiMAX converges to its fair share", wimax_gets_fair_share),
        ("detection stays quiet alone and protects WiMAX", dpe_stays_quiet_and_protects),
        ("reservation chunking", frs_chunking),
        ("canonical runs are reproducible", canonical_runs_repeat),
        ("interference resolution matches brute force", oracle_agreement),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
