//! The simulator proper: one run of one scenario.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    jain_index, Delivery, DmaSample, EventQueue, LinkKind, LinkReport, LinkStats, NavSet, RunDetail, RunError,
    RunResult, Timeline, Trace, TxRecord,
};
use crate::afr::{acp_power, dma_update, dpe_tick, estimate_interferers, DmaState, DpeState, FrsEmitter, Overheard};
use crate::clc::{priority_resolve, schedule_aware_check, ClcState, Decision, GrantLedger, InterfaceRequest, ScheduleCheck};
use crate::medium::{
    resolve_against, DeliveryResult, FrameKind, InterfaceId, Medium, Position, RadioInterface, RadioKind,
    Transmission,
};
use crate::scenario::{ScenarioConfig, Traffic};
use crate::wifi_mac::{Access, RetryDecision, TxOutcome, WifiStation};
use crate::wimax_mac::{build_frame_map, Direction, FrameMap, SsDemand, WimaxCell};

#[derive(Debug)]
enum Ev {
    Warmup,
    End,
    Attempt { node: usize, gen: u64 },
    NavCheck { node: usize },
    ClcRetry { node: usize },
    Start { id: u64 },
    Finish { id: u64 },
    FramePlan { cell: usize, frame: u64 },
    DmaTick { ss: usize },
    DpeTick { ss: usize },
    ClcDecide { platform: usize },
}

/// Bytes waiting for (re)transmission and when they were first offered.
#[derive(Debug, Clone, Copy)]
struct Chunk {
    bytes: u64,
    since: u64,
}

#[derive(Debug, Clone)]
enum Purpose {
    Data { node: usize },
    Burst { ss: usize, payload: Vec<Chunk> },
    Cts,
}

#[derive(Debug, Clone)]
struct OnAir {
    tx: Transmission,
    purpose: Purpose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Contending,
    /// Waiting for the platform controller.
    Waiting,
    /// Denied by the controller, retrying later.
    Blocked,
    Transmitting,
}

struct Station {
    mac: WifiStation,
    link: usize,
    dest: usize,
    frame_bytes: u64,
    phase: Phase,
    gen: u64,
    hol_since: u64,
    /// Transmissions currently sensed above CCA.
    busy: u32,
    /// How many of those started at the given instant.
    started: (u64, u32),
}

struct Link {
    id: String,
    kind: LinkKind,
    stats: LinkStats,
    warm: Option<(LinkStats, usize)>,
    airtime: u64,
    bins: Vec<u64>,
}

struct AfrCtx {
    frs: usize,
    emitter: FrsEmitter,
    dma: DmaState,
    dpe: DpeState,
    power_dbm: f64,
    overheard: VecDeque<Overheard>,
    scale: f64,
    next_claim: u64,
}

struct Ss {
    node: usize,
    link: Option<usize>,
    arq: VecDeque<Chunk>,
    afr: Option<AfrCtx>,
    /// Medium this SS has claimed: reservation spans, or bare bursts when
    /// no CTS went out.
    claims: VecDeque<(u64, u64)>,
    maps: VecDeque<(u64, FrameMap)>,
}

struct Cell {
    bs: usize,
    members: Vec<usize>,
    mac: WimaxCell,
}

enum Action {
    WifiTx { node: usize },
    Rx { id: u64, iface: usize },
    Start(OnAir),
}

struct Platform {
    members: Vec<usize>,
    ledger: Option<GrantLedger>,
    tx: BTreeMap<usize, u32>,
    rx: BTreeMap<usize, u32>,
    conflict: bool,
    since: u64,
    conflict_us: u64,
    pending: Vec<(InterfaceRequest, Action)>,
}

pub(crate) struct Sim<'a, 'w> {
    cfg: &'a ScenarioConfig,
    seed: u64,
    medium: Medium,
    now: u64,
    queue: EventQueue<Ev>,
    rng: ChaCha8Rng,
    trace: Trace<'w>,
    trace_err: Option<std::io::Error>,
    names: Vec<String>,
    nodes: Vec<RadioInterface>,
    atten: Vec<Vec<f64>>,
    stations: Vec<Option<Station>>,
    station_nodes: Vec<usize>,
    links: Vec<Link>,
    ss: Vec<Ss>,
    cells: Vec<Cell>,
    platforms: Vec<Platform>,
    on_air: BTreeMap<u64, OnAir>,
    recent: Vec<Transmission>,
    planned: BTreeMap<u64, OnAir>,
    receiving: BTreeMap<u64, usize>,
    lost: BTreeSet<u64>,
    next_id: u64,
    events: u64,
    cts_count: u64,
    cts_airtime: u64,
    reservations: Vec<(u64, u64)>,
    deliveries: Vec<Delivery>,
    tx_log: Vec<TxRecord>,
    nav_sets: Vec<NavSet>,
    dma_log: Vec<DmaSample>,
    clc_denials: u64,
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    parent[i] = r;
    r
}

impl<'a, 'w> Sim<'a, 'w> {
    pub(crate) fn new(cfg: &'a ScenarioConfig, seed: u64, trace: Trace<'w>) -> Result<Self, RunError> {
        let medium = cfg.medium.build();
        let index: BTreeMap<&str, usize> = cfg.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let n = cfg.nodes.len();

        let mut parent: Vec<usize> = (0..n).collect();
        for (i, node) in cfg.nodes.iter().enumerate() {
            if let Some(peer) = node.collocated_with.as_deref().and_then(|p| index.get(p)) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, *peer));
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(i);
        }
        let mut platform_of = vec![None; n];
        let mut platforms = Vec::new();
        for members in groups.into_values().filter(|m| m.len() > 1) {
            for &m in &members {
                platform_of[m] = Some(platforms.len());
            }
            let ledger = cfg.clc.enabled.then(|| GrantLedger::new(members.iter().map(|&m| InterfaceId(m))));
            platforms.push(Platform {
                members,
                ledger,
                tx: BTreeMap::new(),
                rx: BTreeMap::new(),
                conflict: false,
                since: 0,
                conflict_us: 0,
                pending: Vec::new(),
            });
        }

        let nodes: Vec<RadioInterface> = cfg
            .nodes
            .iter()
            .enumerate()
            .map(|(i, c)| RadioInterface {
                id: InterfaceId(i),
                kind: c.kind,
                position: Position::new(c.x, c.y),
                channel_mhz: c.channel_mhz,
                tx_power_dbm: c.tx_power_dbm,
                decode_sensitivity_dbm: match c.kind {
                    RadioKind::Wifi => cfg.wifi.decode_sensitivity_dbm,
                    _ => cfg.wimax.decode_sensitivity_dbm,
                },
                cca_threshold_dbm: cfg.wifi.cca_threshold_dbm,
                platform: platform_of[i],
            })
            .collect();
        let mut atten = vec![vec![f64::INFINITY; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    atten[i][j] = medium.attenuation_db(&nodes[i], &nodes[j], nodes[i].channel_mhz)?;
                }
            }
        }

        let bins = cfg.duration_us.div_ceil(cfg.report.timeline_bin_us) as usize;
        let mut links = Vec::new();
        let mut stations: Vec<Option<Station>> = (0..n).map(|_| None).collect();
        let mut ss = Vec::new();
        let mut ss_of = vec![None; n];
        for (i, c) in cfg.nodes.iter().enumerate() {
            let Traffic::Saturated { dest, frame_bytes } = &c.traffic else {
                if c.kind == RadioKind::WimaxSs {
                    ss_of[i] = Some(ss.len());
                    ss.push(Ss { node: i, link: None, arq: VecDeque::new(), afr: None, claims: VecDeque::new(), maps: VecDeque::new() });
                }
                continue;
            };
            let kind = if c.kind == RadioKind::Wifi { LinkKind::Wifi } else { LinkKind::Wimax };
            let link = links.len();
            links.push(Link { id: c.id.clone(), kind, stats: LinkStats::default(), warm: None, airtime: 0, bins: vec![0; bins] });
            match c.kind {
                RadioKind::Wifi => {
                    let dest = index[dest.as_deref().unwrap_or_default()];
                    stations[i] = Some(Station {
                        mac: WifiStation::new(cfg.wifi, cfg.wifi.cca_threshold_dbm),
                        link,
                        dest,
                        frame_bytes: *frame_bytes,
                        phase: Phase::Contending,
                        gen: 0,
                        hol_since: 0,
                        busy: 0,
                        started: (0, 0),
                    });
                }
                _ => {
                    ss_of[i] = Some(ss.len());
                    ss.push(Ss { node: i, link: Some(link), arq: VecDeque::new(), afr: None, claims: VecDeque::new(), maps: VecDeque::new() });
                }
            }
        }

        let mut cells = Vec::new();
        for (b, c) in cfg.nodes.iter().enumerate().filter(|(_, c)| c.kind == RadioKind::WimaxBs) {
            let members: Vec<usize> = cfg
                .nodes
                .iter()
                .enumerate()
                .filter(|(_, s)| s.serving_bs.as_deref() == Some(c.id.as_str()))
                .filter_map(|(i, _)| ss_of[i])
                .collect();
            let mac = WimaxCell {
                bs: nodes[b].clone(),
                subscribers: members.iter().map(|&s| nodes[ss[s].node].clone()).collect(),
                bytes_per_us: cfg.wimax.bytes_per_us,
            };
            cells.push(Cell { bs: b, members, mac });
        }

        if cfg.afr.enabled {
            for s in ss.iter_mut() {
                let Some(p) = platform_of[s.node] else { continue };
                let Some(&frs) = platforms[p].members.iter().find(|&&m| nodes[m].kind == RadioKind::Wifi) else {
                    continue;
                };
                s.afr = Some(AfrCtx {
                    frs,
                    emitter: FrsEmitter {
                        source: InterfaceId(frs),
                        channel_mhz: nodes[frs].channel_mhz,
                        th_dur_us: cfg.afr.dpe.th_dur_us,
                        cts_airtime_us: cfg.wifi.cts_airtime_us,
                    },
                    dma: DmaState::new(&cfg.afr.dma),
                    dpe: DpeState::new(&cfg.afr.dpe, !cfg.afr.dpe_enabled),
                    power_dbm: nodes[frs].tx_power_dbm,
                    overheard: VecDeque::new(),
                    scale: 1.0,
                    next_claim: 0,
                });
            }
        }

        let station_nodes = (0..n).filter(|&i| stations[i].is_some()).collect();
        Ok(Sim {
            cfg,
            seed,
            medium,
            now: 0,
            queue: EventQueue::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace,
            trace_err: None,
            names: cfg.nodes.iter().map(|c| c.id.clone()).collect(),
            nodes,
            atten,
            stations,
            station_nodes,
            links,
            ss,
            cells,
            platforms,
            on_air: BTreeMap::new(),
            recent: Vec::new(),
            planned: BTreeMap::new(),
            receiving: BTreeMap::new(),
            lost: BTreeSet::new(),
            next_id: 0,
            events: 0,
            cts_count: 0,
            cts_airtime: 0,
            reservations: Vec::new(),
            deliveries: Vec::new(),
            tx_log: Vec::new(),
            nav_sets: Vec::new(),
            dma_log: Vec::new(),
            clc_denials: 0,
        })
    }

    pub(crate) fn run(mut self) -> Result<RunDetail, RunError> {
        self.setup();
        while let Some((t, _, ev)) = self.queue.pop() {
            debug_assert!(t >= self.now, "event scheduled in the past");
            self.now = t;
            if matches!(ev, Ev::End) {
                break;
            }
            if !matches!(ev, Ev::Warmup) {
                self.events += 1;
            }
            self.handle(ev)?;
        }
        self.now = self.cfg.duration_us;
        self.finish_run()
    }

    fn setup(&mut self) {
        let cfg = self.cfg;
        self.queue.push(cfg.warmup_us, Ev::Warmup);
        self.queue.push(cfg.duration_us, Ev::End);
        for k in 0..self.station_nodes.len() {
            let s = self.station_nodes[k];
            let st = self.stations[s].as_mut().expect("station");
            st.mac.draw_backoff(&mut self.rng);
            self.links[st.link].stats.offered_bytes += st.frame_bytes;
            self.contend(s);
        }
        let first = cfg.wimax.plan_lead_us.div_ceil(cfg.wimax.frame_us).max(1);
        for c in 0..self.cells.len() {
            self.schedule_plan(c, first);
        }
        for s in 0..self.ss.len() {
            if self.ss[s].afr.is_some() {
                self.queue.push(cfg.afr.dma.tick_us, Ev::DmaTick { ss: s });
                if cfg.afr.dpe_enabled {
                    self.queue.push(cfg.afr.dpe.retx_window_us, Ev::DpeTick { ss: s });
                }
            }
        }
        for (i, c) in cfg.nodes.iter().enumerate() {
            if let Traffic::CtsInject { start_us, reservation_us } = c.traffic {
                let emitter = FrsEmitter {
                    source: InterfaceId(i),
                    channel_mhz: c.channel_mhz,
                    th_dur_us: 0,
                    cts_airtime_us: cfg.wifi.cts_airtime_us,
                };
                for tx in emitter.emit(reservation_us, c.tx_power_dbm, start_us, &mut self.next_id) {
                    self.plan(tx, Purpose::Cts);
                }
            }
        }
    }

    fn plan(&mut self, tx: Transmission, purpose: Purpose) {
        self.queue.push(tx.start, Ev::Start { id: tx.id });
        self.planned.insert(tx.id, OnAir { tx, purpose });
    }

    fn schedule_plan(&mut self, cell: usize, frame: u64) {
        let w = &self.cfg.wimax;
        let at = frame * w.frame_us - w.plan_lead_us;
        if at < self.cfg.duration_us {
            self.queue.push(at, Ev::FramePlan { cell, frame });
        }
    }

    fn note(&mut self, kind: &str, actor: &str, detail: &str) {
        if self.trace_err.is_none() {
            if let Err(e) = self.trace.line(self.now, kind, actor, detail) {
                self.trace_err = Some(e);
            }
        }
    }

    fn handle(&mut self, ev: Ev) -> Result<(), RunError> {
        match ev {
            Ev::Warmup => {
                self.note("warmup", "-", "");
                for l in 0..self.links.len() {
                    let mut snap = self.links[l].stats.clone();
                    snap.in_flight_bytes = self.in_flight(l);
                    snap.delay_samples.clear();
                    let idx = self.links[l].stats.delay_samples.len();
                    self.links[l].warm = Some((snap, idx));
                }
            }
            Ev::End => {}
            Ev::Attempt { node, gen } => self.on_attempt(node, gen),
            Ev::NavCheck { node } => {
                let ready = self.stations[node].as_ref().is_some_and(|st| {
                    st.phase == Phase::Contending && st.mac.pending_attempt().is_none() && st.busy == 0
                        && !st.mac.nav.blocks(self.now)
                });
                if ready {
                    self.note("nav-clear", &self.names[node].clone(), "");
                    self.contend(node);
                }
            }
            Ev::ClcRetry { node } => {
                let st = self.stations[node].as_mut().expect("station");
                if st.phase == Phase::Blocked {
                    st.phase = Phase::Contending;
                    self.note("clc-retry", &self.names[node].clone(), "");
                    self.contend(node);
                }
            }
            Ev::Start { id } => {
                let Some(planned) = self.planned.remove(&id) else { return Ok(()) };
                self.on_start(planned);
            }
            Ev::Finish { id } => self.on_finish(id),
            Ev::FramePlan { cell, frame } => self.on_frame_plan(cell, frame)?,
            Ev::DmaTick { ss } => self.on_dma_tick(ss),
            Ev::DpeTick { ss } => self.on_dpe_tick(ss),
            Ev::ClcDecide { platform } => self.on_clc_decide(platform)?,
        }
        Ok(())
    }

    fn rx_power(&self, tx: &Transmission, at: usize) -> f64 {
        tx.power_dbm - self.atten[tx.source.0][at]
    }

    fn window_overlap(&self, a: u64, b: u64) -> u64 {
        let lo = a.max(self.cfg.warmup_us);
        let hi = b.min(self.cfg.duration_us);
        hi.saturating_sub(lo)
    }

    fn managed(&self, node: usize) -> Option<usize> {
        self.nodes[node].platform.filter(|&p| self.platforms[p].ledger.is_some())
    }

    // ---- DCF ----------------------------------------------------------

    fn contend(&mut self, node: usize) {
        let now = self.now;
        let st = self.stations[node].as_mut().expect("station");
        if st.phase != Phase::Contending || st.mac.pending_attempt().is_some() {
            return;
        }
        match st.mac.try_access(now, st.busy == 0) {
            Access::StartAt(t) => {
                let gen = st.gen;
                self.queue.push(t, Ev::Attempt { node, gen });
            }
            Access::Defer { until: Some(t) } => {
                self.queue.push(t, Ev::NavCheck { node });
            }
            Access::Defer { until: None } => {}
        }
    }

    fn on_attempt(&mut self, node: usize, gen: u64) {
        let now = self.now;
        let st = self.stations[node].as_mut().expect("station");
        if st.gen != gen || st.phase != Phase::Contending || st.mac.pending_attempt() != Some(now) {
            return;
        }
        let fresh = if st.started.0 == now { st.started.1 } else { 0 };
        if st.busy > fresh || st.mac.nav.blocks(now) {
            st.mac.on_medium_busy(now);
            st.gen += 1;
            if st.busy == 0 {
                let t = st.mac.nav.expiry;
                self.queue.push(t, Ev::NavCheck { node });
            }
            return;
        }
        st.mac.on_attempt_started();
        let (dest, bytes) = (st.dest, st.frame_bytes);
        self.note("attempt", &self.names[node].clone(), "");
        if let Some(p) = self.managed(node) {
            self.stations[node].as_mut().expect("station").phase = Phase::Waiting;
            let airtime = self.cfg.wifi.data_airtime(bytes);
            let req = InterfaceRequest {
                interface: InterfaceId(node),
                kind: RadioKind::Wifi,
                desired: ClcState::Tx,
                priority: self.cfg.nodes[node].priority,
                span: Some((now, now + airtime)),
            };
            self.clc_request(p, req, Action::WifiTx { node });
        } else {
            self.start_data(node, dest, bytes);
        }
    }

    fn start_data(&mut self, node: usize, dest: usize, bytes: u64) {
        self.stations[node].as_mut().expect("station").phase = Phase::Transmitting;
        self.next_id += 1;
        let tx = Transmission {
            id: self.next_id,
            source: InterfaceId(node),
            dest: Some(InterfaceId(dest)),
            kind: FrameKind::Data,
            start: self.now,
            airtime: self.cfg.wifi.data_airtime(bytes),
            power_dbm: self.nodes[node].tx_power_dbm,
            channel_mhz: self.nodes[node].channel_mhz,
            nav_us: 0,
            bytes,
        };
        self.begin_tx(tx, Purpose::Data { node });
    }

    fn medium_busy(&mut self, node: usize) {
        let now = self.now;
        let st = self.stations[node].as_mut().expect("station");
        if st.phase == Phase::Contending && st.mac.pending_attempt().is_some_and(|t| t > now) {
            st.mac.on_medium_busy(now);
            st.gen += 1;
        }
    }

    fn wifi_done(&mut self, node: usize, tx: &Transmission, result: DeliveryResult) {
        let now = self.now;
        let st = self.stations[node].as_mut().expect("station");
        let outcome = if result == DeliveryResult::Decoded { TxOutcome::Acked } else { TxOutcome::NoAck };
        let decision = st.mac.on_tx_outcome(outcome, &mut self.rng);
        st.phase = Phase::Contending;
        let link = st.link;
        let since = st.hol_since;
        match decision {
            RetryDecision::Delivered => {
                st.hol_since = now;
                self.deliver(link, tx.bytes, now - since);
                self.links[link].stats.offered_bytes += tx.bytes;
            }
            RetryDecision::Retry => {
                let s = &mut self.links[link].stats;
                s.corrupted_frames += 1;
                s.retransmissions += 1;
            }
            RetryDecision::Drop => {
                st.hol_since = now;
                let s = &mut self.links[link].stats;
                s.corrupted_frames += 1;
                s.dropped_frames += 1;
                s.dropped_bytes += tx.bytes;
                s.offered_bytes += tx.bytes;
            }
        }
        self.contend(node);
    }

    fn deliver(&mut self, link: usize, bytes: u64, delay: u64) {
        let l = &mut self.links[link];
        l.stats.delivered_bytes += bytes;
        l.stats.delay_samples.push(delay);
        let bin = (self.now / self.cfg.report.timeline_bin_us) as usize;
        if let Some(b) = l.bins.get_mut(bin) {
            *b += bytes;
        }
        self.deliveries.push(Delivery { link, at: self.now, bytes });
    }

    // ---- air ------------------------------------------------------------

    fn on_start(&mut self, planned: OnAir) {
        let OnAir { tx, mut purpose } = planned;
        if let Purpose::Burst { ss, payload } = &mut purpose {
            *payload = self.take_payload(*ss, tx.bytes);
        }
        let src = tx.source.0;
        if let Some(p) = self.managed(src) {
            let req = InterfaceRequest {
                interface: tx.source,
                kind: self.nodes[src].kind,
                desired: ClcState::Tx,
                priority: self.cfg.nodes[src].priority,
                span: Some((tx.start, tx.end())),
            };
            self.clc_request(p, req, Action::Start(OnAir { tx, purpose }));
        } else {
            self.begin_tx(tx, purpose);
        }
    }

    fn begin_tx(&mut self, tx: Transmission, purpose: Purpose) {
        let now = self.now;
        let src = tx.source.0;
        self.note("tx-start", &self.names[src].clone(), &format!("{} {:?} {}", tx.id, tx.kind, tx.airtime));
        self.tx_log.push(TxRecord { id: tx.id, source: self.names[src].clone(), kind: tx.kind, start: tx.start, end: tx.end() });
        if let Some(p) = self.nodes[src].platform {
            self.activity(p, src, 1, 0);
        }
        if tx.kind == FrameKind::Cts && tx.start >= self.cfg.warmup_us {
            self.cts_count += 1;
        }
        for k in 0..self.station_nodes.len() {
            let s = self.station_nodes[k];
            if s == src || self.rx_power(&tx, s) < self.cfg.wifi.cca_threshold_dbm {
                continue;
            }
            let st = self.stations[s].as_mut().expect("station");
            st.busy += 1;
            st.started = if st.started.0 == now { (now, st.started.1 + 1) } else { (now, 1) };
            if st.busy == 1 {
                self.medium_busy(s);
            }
        }
        if let Some(d) = tx.dest.map(|d| d.0) {
            if let Some(p) = self.nodes[d].platform {
                if self.platforms[p].ledger.is_some() {
                    let req = InterfaceRequest {
                        interface: InterfaceId(d),
                        kind: self.nodes[d].kind,
                        desired: ClcState::Rx,
                        priority: self.cfg.nodes[d].priority,
                        span: Some((tx.start, tx.end())),
                    };
                    self.clc_request(p, req, Action::Rx { id: tx.id, iface: d });
                } else if !self.platforms[p].tx.contains_key(&d) {
                    self.receiving.insert(tx.id, d);
                    self.activity(p, d, 0, 1);
                }
            }
        }
        self.queue.push(tx.end(), Ev::Finish { id: tx.id });
        self.recent.push(tx.clone());
        self.on_air.insert(tx.id, OnAir { tx, purpose });
    }

    fn on_finish(&mut self, id: u64) {
        let Some(OnAir { tx, purpose }) = self.on_air.remove(&id) else { return };
        let src = tx.source.0;
        let result = tx.dest.map(|d| {
            if self.lost.contains(&id) {
                DeliveryResult::Corrupted
            } else {
                let d = d.0;
                let (r, _) = resolve_against(
                    &tx,
                    InterfaceId(d),
                    self.nodes[d].decode_sensitivity_dbm,
                    self.medium.sinr_threshold_db,
                    self.recent.iter(),
                    |t| self.rx_power(t, d),
                );
                r
            }
        });
        self.lost.remove(&id);
        self.note("tx-end", &self.names[src].clone(), &format!("{id} {result:?}"));

        if let Some(p) = self.nodes[src].platform {
            self.activity(p, src, -1, 0);
        }
        if let Some(d) = self.receiving.remove(&id) {
            let p = self.nodes[d].platform.expect("receiver on a platform");
            self.activity(p, d, 0, -1);
        }

        let clipped = self.window_overlap(tx.start, tx.end());
        match tx.kind {
            FrameKind::Cts => {
                self.cts_airtime += clipped;
                let window = (tx.end(), tx.end() + tx.nav_us);
                match self.reservations.last_mut() {
                    Some(last) if window.0 <= last.1 => last.1 = last.1.max(window.1),
                    _ => self.reservations.push(window),
                }
                for k in 0..self.station_nodes.len() {
                    let s = self.station_nodes[k];
                    if s == src {
                        continue;
                    }
                    let power = self.rx_power(&tx, s);
                    let st = self.stations[s].as_mut().expect("station");
                    if st.mac.on_overheard(&tx, power) {
                        let expiry = st.mac.nav.expiry;
                        self.nav_sets.push(NavSet { station: self.names[s].clone(), at: self.now, expiry });
                    }
                }
            }
            FrameKind::Data => {
                for k in 0..self.ss.len() {
                    let Some(frs) = self.ss[k].afr.as_ref().map(|a| a.frs) else { continue };
                    if frs == src || self.nodes[frs].colocated_with(&self.nodes[src]) {
                        continue;
                    }
                    let power = self.rx_power(&tx, frs);
                    if power >= self.nodes[frs].decode_sensitivity_dbm {
                        let afr = self.ss[k].afr.as_mut().expect("afr");
                        afr.overheard.push_back(Overheard { at: self.now, source: tx.source, rx_power_dbm: power });
                    }
                }
            }
            _ => {}
        }

        for k in 0..self.station_nodes.len() {
            let s = self.station_nodes[k];
            if s == src || self.rx_power(&tx, s) < self.cfg.wifi.cca_threshold_dbm {
                continue;
            }
            let st = self.stations[s].as_mut().expect("station");
            st.busy -= 1;
            if st.busy == 0 {
                self.contend(s);
            }
        }

        match purpose {
            Purpose::Data { node } => {
                self.links[self.stations[node].as_ref().expect("station").link].airtime += clipped;
                self.wifi_done(node, &tx, result.unwrap_or(DeliveryResult::Corrupted));
            }
            Purpose::Burst { ss, payload } => {
                let link = self.ss[ss].link.expect("loaded SS has a link");
                self.links[link].airtime += clipped;
                if result == Some(DeliveryResult::Decoded) {
                    let since = payload.iter().map(|c| c.since).min().unwrap_or(self.now);
                    self.deliver(link, tx.bytes, self.now - since);
                } else {
                    let s = &mut self.links[link].stats;
                    s.corrupted_frames += 1;
                    s.retransmissions += 1;
                    self.return_payload(ss, payload);
                }
            }
            Purpose::Cts => {}
        }

        let oldest = self.on_air.values().map(|o| o.tx.start).min().unwrap_or(self.now);
        self.recent.retain(|t| t.end() > oldest);
    }

    // ---- WiMAX ----------------------------------------------------------

    fn take_payload(&mut self, ss: usize, want: u64) -> Vec<Chunk> {
        let now = self.now;
        let s = &mut self.ss[ss];
        let mut left = want;
        let mut out = Vec::new();
        while left > 0 {
            let Some(front) = s.arq.front_mut() else { break };
            let take = front.bytes.min(left);
            out.push(Chunk { bytes: take, since: front.since });
            front.bytes -= take;
            left -= take;
            if front.bytes == 0 {
                s.arq.pop_front();
            }
        }
        if left > 0 {
            if let Some(link) = s.link {
                self.links[link].stats.offered_bytes += left;
                out.push(Chunk { bytes: left, since: now });
            }
        }
        out
    }

    fn return_payload(&mut self, ss: usize, payload: Vec<Chunk>) {
        for c in payload.into_iter().rev() {
            self.ss[ss].arq.push_front(c);
        }
    }

    /// Whether the SS may use frame `frame_start`, advancing its pacing.
    fn claims(&mut self, ss: usize, frame_start: u64) -> bool {
        if !self.cfg.afr.dma_enabled {
            return true;
        }
        let Some(afr) = self.ss[ss].afr.as_mut() else { return true };
        if frame_start < afr.next_claim {
            return false;
        }
        afr.next_claim = (afr.next_claim + afr.dma.claim_interval_us).max(frame_start);
        true
    }

    fn on_frame_plan(&mut self, cell: usize, frame: u64) -> Result<(), RunError> {
        let w = self.cfg.wimax;
        let frame_start = frame * w.frame_us;
        let members = self.cells[cell].members.clone();
        let mut demands = Vec::new();
        for &s in &members {
            if self.ss[s].link.is_none() || !self.claims(s, frame_start) {
                continue;
            }
            let id = InterfaceId(self.ss[s].node);
            let cap = |len: u64| self.cells[cell].mac.capacity_bytes(len).max(1);
            demands.push(SsDemand { ss: id, queued_bytes: cap(w.dl_end()), direction: Direction::Dl });
            demands.push(SsDemand { ss: id, queued_bytes: cap(w.frame_us - w.dl_end()), direction: Direction::Ul });
        }
        let map = build_frame_map(&demands, w.frame_us, w.dl_ratio)?;
        self.note("frame-plan", &self.names[self.cells[cell].bs].clone(), &format!("{frame} {}", map.grants.len()));
        for &s in &members {
            let id = InterfaceId(self.ss[s].node);
            let Some(hull) = map.hull_for(id) else { continue };
            self.ss[s].maps.push_back((frame_start, map.clone()));
            while self.ss[s].maps.front().is_some_and(|(t, m)| t + m.frame_len <= self.now) {
                self.ss[s].maps.pop_front();
            }
            let mut claim = (frame_start + hull.0, frame_start + hull.1);
            if let Some(afr) = self.ss[s].afr.as_ref().filter(|a| a.dpe.cts_enabled) {
                let guard = self.cfg.afr.guard_us;
                let base = hull.1 - hull.0 + guard;
                let reservation = (base as f64 * afr.scale).round() as u64;
                let start = frame_start + hull.0 - guard - self.cfg.wifi.cts_airtime_us;
                let chunks = afr.emitter.emit(reservation, afr.power_dbm, start, &mut self.next_id);
                if !chunks.is_empty() {
                    claim = (start, claim.1.max(start + self.cfg.wifi.cts_airtime_us + reservation));
                }
                for tx in chunks {
                    self.plan(tx, Purpose::Cts);
                }
            }
            self.ss[s].claims.push_back(claim);
            let bursts = self.cells[cell].mac.ss_burst(&map, id, frame_start, &mut self.next_id)?;
            for tx in bursts {
                self.plan(tx, Purpose::Burst { ss: s, payload: Vec::new() });
            }
        }
        self.schedule_plan(cell, frame + 1);
        Ok(())
    }

    fn on_dma_tick(&mut self, ss: usize) {
        let now = self.now;
        let cfg = self.cfg;
        let from = now.saturating_sub(cfg.afr.dma.window_us);
        let s = &mut self.ss[ss];
        while s.claims.front().is_some_and(|b| b.1 <= from) {
            s.claims.pop_front();
        }
        let air: u64 = s.claims.iter().map(|&(a, b)| b.min(now).saturating_sub(a.max(from))).sum();
        let share = if now > from { air as f64 / (now - from) as f64 } else { 0.0 };
        let afr = s.afr.as_mut().expect("afr");
        let horizon = now.saturating_sub(cfg.afr.estimate_window_us);
        while afr.overheard.front().is_some_and(|o| o.at < horizon) {
            afr.overheard.pop_front();
        }
        let heard: Vec<Overheard> = afr.overheard.iter().copied().collect();
        let model = self.medium.model;
        let estimate = estimate_interferers(
            &heard,
            InterfaceId(afr.frs),
            now,
            cfg.afr.estimate_window_us,
            cfg.afr.assumed_interferer_dbm,
            &model,
        );
        if cfg.afr.dma_enabled {
            afr.dma = dma_update(&afr.dma, &estimate, share, &cfg.afr.dma);
        }
        afr.power_dbm = if cfg.afr.acp_enabled {
            acp_power(estimate.max_distance, cfg.wifi.cca_threshold_dbm, &model, &cfg.afr.acp)
        } else {
            self.nodes[afr.frs].tx_power_dbm
        };
        let sample = DmaSample {
            at: now,
            ss,
            share,
            goal: afr.dma.utilization_goal,
            interval_us: afr.dma.claim_interval_us,
            cts_power_dbm: afr.power_dbm,
            cts_enabled: afr.dpe.cts_enabled,
        };
        self.dma_log.push(sample);
        let actor = self.names[self.ss[ss].node].clone();
        self.note("dma", &actor, &format!("{share:.6} {} {}", sample.interval_us, estimate.active_systems));
        self.queue.push(now + cfg.afr.dma.tick_us, Ev::DmaTick { ss });
    }

    fn on_dpe_tick(&mut self, ss: usize) {
        let now = self.now;
        let cfg = self.cfg;
        let Some(link) = self.ss[ss].link else { return };
        let stats = &self.links[link].stats;
        let afr = self.ss[ss].afr.as_mut().expect("afr");
        afr.dpe = dpe_tick(&afr.dpe, stats, now, &cfg.afr.dpe);
        if afr.dpe.qos_violated {
            afr.scale = (afr.scale * (1.0 + cfg.afr.dpe.qos_growth)).min(cfg.afr.dpe.max_reservation_scale);
        }
        let detail = format!("{} {}", afr.dpe.cts_enabled, afr.dpe.retx_window_count);
        let actor = self.names[self.ss[ss].node].clone();
        self.note("dpe", &actor, &detail);
        self.queue.push(now + cfg.afr.dpe.retx_window_us, Ev::DpeTick { ss });
    }

    // ---- platform controller ----------------------------------------------

    fn clc_request(&mut self, p: usize, req: InterfaceRequest, action: Action) {
        let plat = &mut self.platforms[p];
        plat.pending.push((req, action));
        if plat.pending.len() == 1 {
            self.queue.push(self.now, Ev::ClcDecide { platform: p });
        }
    }

    fn on_clc_decide(&mut self, p: usize) -> Result<(), RunError> {
        let mut pending = std::mem::take(&mut self.platforms[p].pending);
        let mut order = Vec::with_capacity(pending.len());
        if self.cfg.clc.priority {
            while !pending.is_empty() {
                let reqs: Vec<InterfaceRequest> = pending.iter().map(|(r, _)| *r).collect();
                order.push(pending.remove(priority_resolve(&reqs)?));
            }
        } else {
            pending.sort_by_key(|(r, _)| r.interface);
            order = pending;
        }
        for (req, action) in order {
            let decision = if self.schedule_denies(p, &req) {
                Decision::Deny
            } else {
                self.platforms[p].ledger.as_mut().expect("managed platform").apply(&req)?
            };
            let actor = self.names[req.interface.0].clone();
            self.note("clc", &actor, &format!("{:?} {:?}", req.desired, decision));
            if decision == Decision::Deny {
                self.clc_denials += 1;
            }
            match (action, decision) {
                (Action::WifiTx { node }, Decision::Grant) => {
                    let st = self.stations[node].as_ref().expect("station");
                    let (dest, bytes) = (st.dest, st.frame_bytes);
                    self.start_data(node, dest, bytes);
                }
                (Action::WifiTx { node }, Decision::Deny) => {
                    self.stations[node].as_mut().expect("station").phase = Phase::Blocked;
                    self.queue.push(self.now + self.cfg.clc.retry_us, Ev::ClcRetry { node });
                }
                (Action::Rx { id, iface }, Decision::Grant) => {
                    if self.on_air.contains_key(&id) {
                        self.receiving.insert(id, iface);
                        self.activity(p, iface, 0, 1);
                    } else {
                        self.release_if_idle(p, iface);
                    }
                }
                (Action::Rx { id, .. }, Decision::Deny) => {
                    self.lost.insert(id);
                }
                (Action::Start(o), Decision::Grant) => self.begin_tx(o.tx, o.purpose),
                (Action::Start(o), Decision::Deny) => {
                    if let Purpose::Burst { ss, payload } = o.purpose {
                        self.return_payload(ss, payload);
                    }
                }
            }
        }
        Ok(())
    }

    fn schedule_denies(&self, p: usize, req: &InterfaceRequest) -> bool {
        if !self.cfg.clc.schedule_aware || req.kind != RadioKind::Wifi {
            return false;
        }
        self.platforms[p].members.iter().filter_map(|&m| self.ss.iter().find(|s| s.node == m)).any(|s| {
            s.maps
                .iter()
                .any(|(t, map)| schedule_aware_check(req, map, *t, InterfaceId(s.node)) == ScheduleCheck::Deny)
        })
    }

    fn release_if_idle(&mut self, p: usize, iface: usize) {
        let plat = &mut self.platforms[p];
        if plat.tx.contains_key(&iface) || plat.rx.contains_key(&iface) {
            return;
        }
        if let Some(ledger) = plat.ledger.as_mut() {
            if ledger.granted(InterfaceId(iface)) != Some(ClcState::S) {
                ledger
                    .apply(&InterfaceRequest::new(InterfaceId(iface), self.nodes[iface].kind, ClcState::S))
                    .expect("member is registered");
            }
        }
    }

    /// Adjust the Tx and Rx activity of `iface` on platform `p`.
    fn activity(&mut self, p: usize, iface: usize, dtx: i32, drx: i32) {
        let now = self.now;
        let (lo, hi) = (self.cfg.warmup_us, self.cfg.duration_us);
        let plat = &mut self.platforms[p];
        if plat.conflict {
            plat.conflict_us += now.min(hi).saturating_sub(plat.since.max(lo));
        }
        plat.since = now;
        for (map, d) in [(&mut plat.tx, dtx), (&mut plat.rx, drx)] {
            if d == 0 {
                continue;
            }
            let c = map.entry(iface).or_insert(0);
            *c = c.checked_add_signed(d).expect("activity count underflow");
            if *c == 0 {
                map.remove(&iface);
            }
        }
        plat.conflict = plat.tx.keys().any(|a| plat.rx.keys().any(|b| a != b));
        if dtx < 0 || drx < 0 {
            self.release_if_idle(p, iface);
        }
    }

    // ---- results ----------------------------------------------------------

    fn in_flight(&self, link: usize) -> u64 {
        match self.links[link].kind {
            LinkKind::Wifi => self
                .stations
                .iter()
                .flatten()
                .find(|s| s.link == link)
                .map_or(0, |s| s.frame_bytes),
            LinkKind::Wimax => {
                let Some(ss) = self.ss.iter().position(|s| s.link == Some(link)) else { return 0 };
                let queued: u64 = self.ss[ss].arq.iter().map(|c| c.bytes).sum();
                let airborne: u64 = self
                    .on_air
                    .values()
                    .chain(self.planned.values())
                    .chain(self.platforms.iter().flat_map(|p| p.pending.iter()).filter_map(|(_, a)| match a {
                        Action::Start(o) => Some(o),
                        _ => None,
                    }))
                    .filter_map(|o| match &o.purpose {
                        Purpose::Burst { ss: s, payload } if *s == ss => Some(payload.iter().map(|c| c.bytes).sum::<u64>()),
                        _ => None,
                    })
                    .sum();
                queued + airborne
            }
        }
    }

    fn finish_run(mut self) -> Result<RunDetail, RunError> {
        let end = self.cfg.duration_us;
        for p in 0..self.platforms.len() {
            let plat = &mut self.platforms[p];
            if plat.conflict {
                plat.conflict_us += end.saturating_sub(plat.since.max(self.cfg.warmup_us));
            }
        }
        let airborne: Vec<OnAir> = self.on_air.values().cloned().collect();
        for o in airborne {
            let clipped = self.window_overlap(o.tx.start, o.tx.end());
            match o.purpose {
                Purpose::Data { node } => self.links[self.stations[node].as_ref().expect("station").link].airtime += clipped,
                Purpose::Burst { ss, .. } => {
                    if let Some(l) = self.ss[ss].link {
                        self.links[l].airtime += clipped;
                    }
                }
                Purpose::Cts => self.cts_airtime += clipped,
            }
        }

        let measured = end - self.cfg.warmup_us;
        let mut reports = Vec::with_capacity(self.links.len());
        for l in 0..self.links.len() {
            let in_flight = self.in_flight(l);
            let link = &self.links[l];
            let (snap, idx) = link.warm.clone().unwrap_or_default();
            let raw = &link.stats;
            let stats = LinkStats {
                offered_bytes: raw.offered_bytes - snap.offered_bytes + snap.in_flight_bytes,
                delivered_bytes: raw.delivered_bytes - snap.delivered_bytes,
                corrupted_frames: raw.corrupted_frames - snap.corrupted_frames,
                retransmissions: raw.retransmissions - snap.retransmissions,
                dropped_frames: raw.dropped_frames - snap.dropped_frames,
                dropped_bytes: raw.dropped_bytes - snap.dropped_bytes,
                in_flight_bytes: in_flight,
                airtime_us: link.airtime,
                delay_samples: raw.delay_samples[idx..].to_vec(),
            };
            reports.push(LinkReport {
                id: link.id.clone(),
                kind: link.kind,
                share: link.airtime as f64 / measured as f64,
                throughput_bps: stats.delivered_bytes as f64 * 8e6 / measured as f64,
                mean_delay_us: stats.mean_delay_us(),
                stats,
            });
        }
        let shares: Vec<f64> = reports.iter().map(|r| r.share).collect();
        let fairness_index = jain_index(&shares).unwrap_or(0.0);
        let timeline = Timeline {
            bin_us: self.cfg.report.timeline_bin_us,
            delivered_bytes: self.links.iter().map(|l| l.bins.clone()).collect(),
        };
        if let Some(e) = self.trace_err.take() {
            return Err(e.into());
        }
        let summary = format!(
            "{} {} {} {}",
            fairness_index,
            self.cts_count,
            self.cts_airtime,
            self.platforms.iter().map(|p| p.conflict_us).sum::<u64>()
        );
        self.note("end", "-", &summary);
        if let Some(e) = self.trace_err.take() {
            return Err(e.into());
        }
        let result = RunResult {
            scenario: self.cfg.name.clone(),
            seed: self.seed,
            measured_us: measured,
            links: reports,
            fairness_index,
            colocated_conflict_us: self.platforms.iter().map(|p| p.conflict_us).sum(),
            cts_count: self.cts_count,
            cts_airtime_us: self.cts_airtime,
            reservations: std::mem::take(&mut self.reservations),
            timeline,
            events: self.events,
            trace_hash: String::new(),
        };
        let hash = self.trace.finish()?;
        Ok(RunDetail {
            result: RunResult { trace_hash: hash, ..result },
            deliveries: self.deliveries,
            transmissions: self.tx_log,
            nav_sets: self.nav_sets,
            dma: self.dma_log,
            clc_denials: self.clc_denials,
        })
    }
}
