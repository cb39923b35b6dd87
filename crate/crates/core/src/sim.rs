//! One simulation run: traffic sources, radio admission, per-slice PON MAC,
//! tier-2 forwarding and metric collection on a single event queue.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::forwarder::{Delivery, ForwarderConfig, ForwarderState};
use crate::kernel::{Priority, Scheduler, SimEvent};
use crate::mac::{
    check_grant_map, onu_transmit, CgsAdvertisement, CtiReport, DbaEngine, DbaPolicy, Grant, LineRate, MacParams,
    OnuQueue, PassInputs,
};
use crate::metrics::{CellStats, Point, RunSummary, StageBreakdown};
use crate::ran::{
    calibrate_rates, AppPacket, CgsAllocation, OccupancyEstimator, RadioConfig, RadioScheduler, SizeDist,
    TrafficClass,
};
use crate::rng::RngStream;
use crate::scenario::ScenarioConfig;
use crate::time::SimTime;
use crate::topology::{NodeKind, Topology};

#[derive(Clone, Debug, PartialEq)]
pub enum SimError {
    InvalidScenario(Vec<String>),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::InvalidScenario(v) => {
                f.write_str("invalid scenario:")?;
                for x in v {
                    write!(f, "\n  - {x}")?;
                }
                Ok(())
            }
        }
    }
}

/// A packet placed by hand instead of drawn from a Poisson source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Injection {
    pub ru: u16,
    pub class: TrafficClass,
    pub t_created: SimTime,
    pub size_bytes: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrafficMode {
    Poisson { load: f64 },
    Scripted(Vec<Injection>),
}

/// End-of-run bookkeeping used by the property checks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunChecks {
    pub events: u64,
    pub created: u64,
    pub delivered: u64,
    pub in_radio: u64,
    pub queued_at_onu: u64,
    pub in_flight: u64,
    /// Packets counted from the ONU queues themselves.
    pub queue_packets: u64,
    pub bytes_enqueued: u64,
    pub bytes_sent: u64,
    pub bytes_queued: u64,
    pub queue_recount_ok: bool,
    pub grants: u64,
    pub grant_violations: Vec<String>,
    pub capacity_exceeded_frames: u64,
    pub spilled_grants: u64,
    pub non_monotone: u64,
    pub admission_errors: u64,
    /// Worst ONU wait of URLLC bursts (arrival to last byte out).
    pub max_urllc_onu_wait: SimTime,
    pub urllc_onu_wait_over_frame: u64,
    pub max_dl_wait: SimTime,
    pub dl_wait_over_frame: u64,
    pub app_before_du: u64,
}

impl RunChecks {
    pub fn packets_conserved(&self) -> bool {
        self.created == self.delivered + self.in_radio + self.queued_at_onu + self.in_flight
            && self.queue_packets == self.queued_at_onu
    }

    pub fn bytes_conserved(&self) -> bool {
        self.bytes_enqueued == self.bytes_sent + self.bytes_queued && self.queue_recount_ok
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub load: f64,
    pub slot_us: u32,
    pub seed: u64,
    pub policies: Vec<(String, DbaPolicy)>,
    pub summary: RunSummary,
    pub stages: StageBreakdown,
    pub checks: RunChecks,
    /// Delivered packets in delivery order, when tracing.
    pub trace: Vec<AppPacket>,
}

impl RunOutput {
    pub fn cell(&self, class: TrafficClass, point: Point) -> Option<&CellStats> {
        self.summary.get(class, point)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct BurstKey {
    ru: u16,
    class: TrafficClass,
    slot: u64,
}

#[derive(Clone, Debug, Default)]
struct Burst {
    packets: Vec<u64>,
    bytes: u64,
}

#[derive(Clone, Debug)]
enum Action {
    Generate { ru: u16, class: TrafficClass },
    Inject(Injection),
    BurstAtOnu(BurstKey),
    DbaPass { slice: usize },
    GrantStart { slice: usize, grant: Grant },
    AtDu { packet: u64 },
    Ready { packet: u64 },
    AtApp { packet: u64 },
}

#[derive(Clone, Copy, Debug)]
struct CtiPending {
    key: BurstKey,
    expected_arrival: SimTime,
}

struct SliceRt {
    name: String,
    params: MacParams,
    engine: DbaEngine,
    lag: u64,
    queues: Vec<OnuQueue>,
    to_olt: Vec<SimTime>,
    pending_capacity: Vec<u64>,
    cum_sent: Vec<u64>,
    cum_in: Vec<u64>,
    snapshots: VecDeque<Vec<(u64, u64)>>,
    cti: BTreeMap<u64, Vec<CtiPending>>,
    grants: u64,
    violations: Vec<String>,
    exceeded: u64,
    spilled: u64,
}

struct Source {
    urllc: RngStream,
    normal: RngStream,
    sizes: RngStream,
    urllc_pps: f64,
    normal_pps: f64,
}

struct PacketStore {
    base: u64,
    slots: VecDeque<Option<AppPacket>>,
}

impl PacketStore {
    fn insert(&mut self, p: AppPacket) {
        debug_assert_eq!(p.id, self.base + self.slots.len() as u64);
        self.slots.push_back(Some(p));
    }

    fn get(&mut self, id: u64) -> &mut AppPacket {
        self.slots[(id - self.base) as usize].as_mut().expect("live packet")
    }

    fn take(&mut self, id: u64) -> AppPacket {
        let p = self.slots[(id - self.base) as usize].take().expect("live packet");
        while matches!(self.slots.front(), Some(None)) {
            self.slots.pop_front();
            self.base += 1;
        }
        p
    }

    fn live(&self) -> impl Iterator<Item = &AppPacket> {
        self.slots.iter().flatten()
    }
}

struct Collector {
    warmup_end: SimTime,
    cells: BTreeMap<(TrafficClass, Point), Vec<SimTime>>,
    dropped: u64,
    stages: StageBreakdown,
}

impl Collector {
    fn add(&mut self, p: &AppPacket) {
        if p.t_created < self.warmup_end {
            self.dropped += 1;
            return;
        }
        let (Some(du), Some(app)) = (p.t_at_du, p.t_at_app) else { return };
        self.cells.entry((p.class, Point::RuDu)).or_default().push(du - p.t_created);
        self.cells.entry((p.class, Point::App)).or_default().push(app - p.t_created);
        self.stages.add(p);
    }

    fn finish(self) -> (RunSummary, StageBreakdown) {
        let cells = self
            .cells
            .into_iter()
            .filter_map(|(k, mut v)| CellStats::from_latencies(&mut v).map(|c| (k, c)))
            .collect();
        (RunSummary { cells, dropped_warmup: self.dropped }, self.stages)
    }
}

pub struct Simulation {
    sched: Scheduler<Action>,
    t_end: SimTime,
    radio: RadioConfig,
    slot: SimTime,
    ru_names: Vec<String>,
    ru_phase: Vec<SimTime>,
    radio_sched: Vec<RadioScheduler>,
    sources: Vec<Source>,
    class_slice: [usize; 2],
    slices: Vec<SliceRt>,
    forwarder: ForwarderState,
    app_proc: SimTime,
    bursts: BTreeMap<BurstKey, Burst>,
    packets: PacketStore,
    next_id: u64,
    urllc_sizes: SizeDist,
    normal_sizes: SizeDist,
    jitter: Option<(RngStream, f64)>,
    estimators: Option<Vec<(OccupancyEstimator, u64)>>,
    urllc_slot_bytes: Vec<BTreeMap<u64, u64>>,
    cgs_full: u64,
    collector: Collector,
    checks: RunChecks,
    trace: Option<Vec<AppPacket>>,
    load: f64,
    seed: u64,
}

fn class_idx(c: TrafficClass) -> usize {
    match c {
        TrafficClass::Urllc => 0,
        TrafficClass::Normal => 1,
    }
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig, mode: TrafficMode, seed: u64) -> Result<Simulation, SimError> {
        let mut problems = cfg.validate();
        if let TrafficMode::Poisson { load } = mode {
            if !(load > 0.0 && load < 1.0) {
                problems.push(format!("load {load} must be in (0, 1)"));
            }
        }
        if !problems.is_empty() {
            return Err(SimError::InvalidScenario(problems));
        }
        let bad = |e: &dyn fmt::Display| SimError::InvalidScenario(vec![format!("{e}")]);
        let topo = Topology::new(cfg.topology.clone()).map_err(|e| bad(&e))?;
        let radio = cfg.radio.clone();
        let slot = radio.slot_duration();
        let t = &cfg.traffic;

        let uslice = topo.slice(&t.urllc_slice).map_err(|e| bad(&e))?.clone();
        let nslice = topo.slice(&t.normal_slice).map_err(|e| bad(&e))?.clone();
        let ru_names: Vec<String> = topo.ru_members(&uslice).map(String::from).collect();
        let n_ru = ru_names.len();
        let ru_phase: Vec<SimTime> = (0..n_ru)
            .map(|i| if t.ru_stagger { SimTime(slot.0 * i as u64 / n_ru as u64) } else { SimTime::ZERO })
            .collect();
        let radio_sched = (0..n_ru)
            .map(|i| RadioScheduler::new(radio.clone(), CgsAllocation::for_ru(i as u16, &radio), ru_phase[i]))
            .collect();

        let cgs_full = radio.cgs_burst_bytes();
        let ru_proc = radio.ru_proc();
        let mut slice_defs = vec![uslice.clone()];
        if nslice.id != uslice.id {
            slice_defs.push(nslice.clone());
        }
        let class_slice = [0, if nslice.id != uslice.id { 1 } else { 0 }];
        let mut slices = Vec::new();
        for (idx, s) in slice_defs.iter().enumerate() {
            let params = cfg.mac_params(&s.id).ok_or_else(|| bad(&"bad slice rate"))?;
            let mut to_olt = Vec::new();
            for ru in &ru_names {
                to_olt.push(topo.path_delay(ru, &s.olt, s).map_err(|e| bad(&e))?);
            }
            let rtt = SimTime(2 * to_olt.iter().map(|d| d.0).max().unwrap_or(0));
            let lag = rtt.0.div_ceil(params.frame_period.0).max(1);
            let cgs = if idx == class_slice[0] {
                (0..n_ru)
                    .map(|i| CgsAdvertisement {
                        onu: i as u16,
                        bytes_per_slot: cgs_full,
                        slot_phase: ru_phase[i] + slot + ru_proc,
                        slot_period: slot,
                    })
                    .collect()
            } else {
                Vec::new()
            };
            slices.push(SliceRt {
                name: s.id.clone(),
                params,
                engine: DbaEngine::new(s.dba, params, idx as u16, cgs),
                lag,
                queues: (0..n_ru).map(|i| OnuQueue::new(i as u16)).collect(),
                to_olt,
                pending_capacity: vec![0; n_ru],
                cum_sent: vec![0; n_ru],
                cum_in: vec![0; n_ru],
                snapshots: VecDeque::new(),
                cti: BTreeMap::new(),
                grants: 0,
                violations: Vec::new(),
                exceeded: 0,
                spilled: 0,
            });
        }

        let app_node = uslice
            .members
            .iter()
            .find(|m| topo.node(m).map(|n| n.kind) == Some(NodeKind::MecOlt))
            .cloned()
            .ok_or_else(|| bad(&"no pseudo-ONU"))?;
        let ds_rate = LineRate::from_bps(uslice.ds_rate_bps).map_err(|e| bad(&e))?;
        let forwarder = ForwarderState::new(ForwarderConfig {
            frame_period: uslice.frame_period(),
            dl_phase: uslice.dl_phase(),
            ds_rate,
            dl_overhead_bytes: cfg.forwarder.dl_overhead_bytes,
            propagation: topo.path_delay(&uslice.olt, &app_node, &uslice).map_err(|e| bad(&e))?,
            app_proc: SimTime::from_us_f64(cfg.forwarder.app_proc_us),
        });

        let (load, rates) = match mode {
            TrafficMode::Poisson { load } => {
                let tc = calibrate_rates(
                    load,
                    &radio,
                    n_ru,
                    uslice.us_rate_bps,
                    t.urllc_share,
                    t.urllc_size,
                    t.normal_size,
                )
                .map_err(|e| bad(&e))?;
                (load, Some(tc.per_ru))
            }
            TrafficMode::Scripted(_) => (0.0, None),
        };
        let sources = (0..n_ru)
            .map(|i| Source {
                urllc: RngStream::new(seed, &format!("{}/urllc", ru_names[i])),
                normal: RngStream::new(seed, &format!("{}/normal", ru_names[i])),
                sizes: RngStream::new(seed, &format!("{}/sizes", ru_names[i])),
                urllc_pps: rates.as_ref().map_or(0.0, |r| r[i].urllc_pps),
                normal_pps: rates.as_ref().map_or(0.0, |r| r[i].normal_pps),
            })
            .collect();

        let jitter = (cfg.mac.cti_jitter_us > 0.0)
            .then(|| (RngStream::new(seed, "cti_jitter"), cfg.mac.cti_jitter_us));
        let estimators = cfg.mac.cgs_occupancy_estimate.then(|| {
            (0..n_ru).map(|_| (OccupancyEstimator::new(cfg.mac.estimator_alpha, cgs_full as f64), 0)).collect()
        });

        let mut sim = Simulation {
            sched: Scheduler::new(),
            t_end: cfg.duration(),
            radio,
            slot,
            ru_names,
            ru_phase,
            radio_sched,
            sources,
            class_slice,
            slices,
            forwarder,
            app_proc: SimTime::from_us_f64(cfg.forwarder.app_proc_us),
            bursts: BTreeMap::new(),
            packets: PacketStore { base: 0, slots: VecDeque::new() },
            next_id: 0,
            urllc_sizes: t.urllc_size,
            normal_sizes: t.normal_size,
            jitter,
            estimators,
            urllc_slot_bytes: vec![BTreeMap::new(); n_ru],
            cgs_full,
            collector: Collector {
                warmup_end: cfg.warmup_end(),
                cells: BTreeMap::new(),
                dropped: 0,
                stages: StageBreakdown::default(),
            },
            checks: RunChecks::default(),
            trace: cfg.trace.then(Vec::new),
            load,
            seed,
        };
        sim.prime(mode);
        Ok(sim)
    }

    pub fn ru_names(&self) -> &[String] {
        &self.ru_names
    }

    /// Keeps every delivered packet for inspection.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    fn at(&mut self, t: SimTime, prio: Priority, a: Action) {
        self.sched.schedule(t, prio, a).expect("events are never scheduled in the past");
    }

    fn prime(&mut self, mode: TrafficMode) {
        for s in 0..self.slices.len() {
            self.at(SimTime::ZERO, Priority::Mac, Action::DbaPass { slice: s });
        }
        match mode {
            TrafficMode::Poisson { .. } => {
                for ru in 0..self.sources.len() as u16 {
                    for class in TrafficClass::ALL {
                        self.schedule_next_arrival(ru, class, SimTime::ZERO);
                    }
                }
            }
            TrafficMode::Scripted(list) => {
                for inj in list {
                    self.at(inj.t_created, Priority::Traffic, Action::Inject(inj));
                }
            }
        }
    }

    fn schedule_next_arrival(&mut self, ru: u16, class: TrafficClass, now: SimTime) {
        let src = &mut self.sources[ru as usize];
        let (rng, rate) = match class {
            TrafficClass::Urllc => (&mut src.urllc, src.urllc_pps),
            TrafficClass::Normal => (&mut src.normal, src.normal_pps),
        };
        let Ok(gap) = rng.exp_draw(rate) else { return };
        let t = now + SimTime::from_secs_f64(gap);
        if t < self.t_end {
            self.at(t, Priority::Traffic, Action::Generate { ru, class });
        }
    }

    pub fn run(mut self) -> RunOutput {
        while let Some(ev) = self.sched.pop_due(self.t_end) {
            self.checks.events += 1;
            self.handle(ev);
        }
        self.finish()
    }

    fn handle(&mut self, ev: SimEvent<Action>) {
        let now = ev.fire_time;
        match ev.action {
            Action::Generate { ru, class } => {
                let dist = match class {
                    TrafficClass::Urllc => self.urllc_sizes,
                    TrafficClass::Normal => self.normal_sizes,
                };
                let size = match dist {
                    SizeDist::Fixed { bytes } => bytes,
                    SizeDist::Uniform { min, max } => {
                        self.sources[ru as usize].sizes.uniform_int(min as u64, max as u64) as u32
                    }
                };
                self.create_packet(ru, class, size, now);
                self.schedule_next_arrival(ru, class, now);
            }
            Action::Inject(inj) => self.create_packet(inj.ru, inj.class, inj.size_bytes, now),
            Action::BurstAtOnu(key) => self.burst_at_onu(key, now),
            Action::DbaPass { slice } => self.dba_pass(slice, now),
            Action::GrantStart { slice, grant } => self.grant_start(slice, grant),
            Action::AtDu { packet } => self.at_du(packet, now),
            Action::Ready { packet } => self.ready(packet, now),
            Action::AtApp { packet } => self.at_app(packet),
        }
    }

    fn create_packet(&mut self, ru: u16, class: TrafficClass, size: u32, now: SimTime) {
        let id = self.next_id;
        self.next_id += 1;
        self.checks.created += 1;
        let mut p = AppPacket::new(id, ru, class, size, now);
        p.prbs = self.radio.prbs_for_payload(size);
        p.fh_bytes = self.radio.packet_iq_bytes(size);
        let slot = match self.radio_sched[ru as usize].admit(class, now, p.prbs) {
            Ok(s) => s,
            Err(_) => {
                // Rejected by validation up front; count defensively.
                self.checks.admission_errors += 1;
                self.checks.created -= 1;
                return;
            }
        };
        p.t_bsr = slot.bsr;
        p.t_radio_tx_start = Some(slot.tx_start);
        let arrival = slot.tx_start + self.slot + self.radio.ru_proc();
        let key = BurstKey { ru, class, slot: slot.slot_index };
        let fresh = !self.bursts.contains_key(&key);
        let b = self.bursts.entry(key).or_default();
        b.packets.push(id);
        b.bytes += p.fh_bytes;
        self.packets.insert(p);
        if fresh {
            self.at(arrival, Priority::LinkArrival, Action::BurstAtOnu(key));
            if class == TrafficClass::Normal {
                self.register_cti(key, arrival, now);
            }
        }
    }

    /// The DU knows dynamically granted bursts in advance and passes them to
    /// the OLT of the carrying slice.
    fn register_cti(&mut self, key: BurstKey, arrival: SimTime, now: SimTime) {
        let s = self.class_slice[class_idx(key.class)];
        let expected = match &mut self.jitter {
            Some((rng, x)) => {
                let off = (2.0 * rng.uniform() - 1.0) * *x;
                let t = arrival.as_us_f64() + off;
                SimTime::from_us_f64(t.max(now.as_us_f64()))
            }
            None => arrival,
        };
        let sl = &mut self.slices[s];
        let next_target = sl.params.frame_of(now) + 1;
        let frame = sl.params.frame_of(expected).max(next_target);
        sl.cti.entry(frame).or_default().push(CtiPending { key, expected_arrival: expected });
    }

    fn burst_at_onu(&mut self, key: BurstKey, now: SimTime) {
        let Some(b) = self.bursts.remove(&key) else { return };
        let s = self.class_slice[class_idx(key.class)];
        let header = self.radio.header_bytes;
        let sl = &mut self.slices[s];
        let q = &mut sl.queues[key.ru as usize];
        q.push(None, key.class, header);
        let mut total = header;
        for &id in &b.packets {
            let p = self.packets.get(id);
            p.t_at_onu = Some(now);
            q.push(Some(id), key.class, p.fh_bytes);
            total += p.fh_bytes;
        }
        sl.cum_in[key.ru as usize] += total;
        self.checks.bytes_enqueued += total;
        if key.class == TrafficClass::Urllc && self.estimators.is_some() {
            self.urllc_slot_bytes[key.ru as usize].insert(key.slot, total);
        }
    }

    fn cgs_sizes(&mut self, now: SimTime) -> Option<BTreeMap<u16, u64>> {
        let ests = self.estimators.as_mut()?;
        let lead = self.slot + self.radio.ru_proc();
        let mut out = BTreeMap::new();
        for (ru, (est, next_slot)) in ests.iter_mut().enumerate() {
            // Slots whose ONU arrival is already past have been observed.
            let origin = self.ru_phase[ru] + lead;
            let done = if now > origin { (now - origin).0.div_ceil(self.slot.0) } else { 0 };
            while *next_slot < done {
                let bytes = self.urllc_slot_bytes[ru].remove(next_slot).unwrap_or(0);
                est.observe(bytes);
                *next_slot += 1;
            }
            let s = self.class_slice[0];
            let queued = self.slices[s].queues[ru].class_occupancy(TrafficClass::Urllc);
            out.insert(ru as u16, est.predict(queued, self.cgs_full));
        }
        Some(out)
    }

    fn dba_pass(&mut self, s: usize, now: SimTime) {
        let cgs_sizes = if s == self.class_slice[0] { self.cgs_sizes(now) } else { None };
        let header = self.radio.header_bytes;
        let sl = &mut self.slices[s];
        let frame = sl.params.frame_of(now);
        let target = frame + 1;

        let snap: Vec<(u64, u64)> =
            sl.queues.iter().zip(&sl.cum_sent).map(|(q, &c)| (q.occupancy(), c)).collect();
        sl.snapshots.push_back(snap);
        while sl.snapshots.len() as u64 > sl.lag {
            sl.snapshots.pop_front();
        }
        let mut residual = BTreeMap::new();
        if sl.snapshots.len() as u64 == sl.lag {
            let old = &sl.snapshots[0];
            for ru in 0..sl.queues.len() {
                let (occ, sent_then) = old[ru];
                let served = sl.cum_sent[ru] - sent_then;
                let r = occ.saturating_sub(served).saturating_sub(sl.pending_capacity[ru]);
                residual.insert(ru as u16, r);
            }
        } else {
            for ru in 0..sl.queues.len() {
                residual.insert(ru as u16, 0);
            }
        }

        let mut cti = Vec::new();
        for (_, list) in sl.cti.range(..=target) {
            for c in list {
                let bytes = self.bursts.get(&c.key).map_or(0, |b| b.bytes) + header;
                cti.push(CtiReport {
                    onu: c.key.ru,
                    slot_index: c.key.slot,
                    expected_bytes: bytes,
                    expected_arrival: c.expected_arrival,
                    emitted_at: now,
                });
            }
        }
        sl.cti = sl.cti.split_off(&(target + 1));

        let out = sl.engine.pass(target, &PassInputs { cti, residual, cgs_sizes });
        if out.capacity_exceeded {
            sl.exceeded += 1;
        }
        sl.spilled += out.spilled.len() as u64;
        let v = check_grant_map(&out.grants, &sl.params);
        if !v.is_empty() && sl.violations.len() < 16 {
            sl.violations.extend(v.into_iter().map(|x| format!("{}: {x}", sl.name)));
        }
        let mut todo = Vec::new();
        for g in out.grants.iter() {
            sl.grants += 1;
            sl.pending_capacity[g.onu as usize] += sl.params.grant_payload(g.duration);
            todo.push(*g);
        }
        let next = sl.params.frame_start(target);
        for g in todo {
            self.at(g.start, Priority::Mac, Action::GrantStart { slice: s, grant: g });
        }
        if next < self.t_end {
            self.at(next, Priority::Mac, Action::DbaPass { slice: s });
        }
    }

    fn grant_start(&mut self, s: usize, g: Grant) {
        let sl = &mut self.slices[s];
        let ru = g.onu as usize;
        let cap = sl.params.grant_payload(g.duration);
        sl.pending_capacity[ru] -= cap;
        let rep = onu_transmit(&mut sl.queues[ru], &g, &sl.params);
        sl.cum_sent[ru] += rep.bytes_sent;
        self.checks.bytes_sent += rep.bytes_sent;
        let delay = sl.to_olt[ru];
        let frame = sl.params.frame_period;
        for (id, depart) in rep.departures {
            let p = self.packets.get(id);
            p.t_onu_depart = Some(depart);
            if p.class == TrafficClass::Urllc {
                let wait = depart - p.t_at_onu.unwrap_or(depart);
                self.checks.max_urllc_onu_wait = self.checks.max_urllc_onu_wait.max(wait);
                if wait > frame {
                    self.checks.urllc_onu_wait_over_frame += 1;
                }
            }
            self.at(depart + delay, Priority::LinkArrival, Action::AtDu { packet: id });
        }
    }

    fn at_du(&mut self, id: u64, now: SimTime) {
        let slot = self.slot;
        let app_proc = self.app_proc;
        let p = self.packets.get(id);
        p.t_at_du = Some(now);
        match self.forwarder.on_uplink_delivery(p, now, slot) {
            Delivery::Switch { ready } => {
                p.t_ready = Some(ready);
                self.at(ready, Priority::Traffic, Action::Ready { packet: id });
            }
            Delivery::Bypass => {
                // Terminates at the CO: DU/CU processing, then the local app.
                let ready = now + slot;
                p.t_ready = Some(ready);
                p.t_at_app = Some(ready + app_proc);
                self.at(ready + app_proc, Priority::LinkArrival, Action::AtApp { packet: id });
            }
        }
    }

    fn ready(&mut self, id: u64, now: SimTime) {
        let size = self.packets.get(id).size_bytes as u64;
        let depart = self.forwarder.enqueue(now, size);
        let t_app = self.forwarder.deliver_to_app(depart, size);
        let frame = self.forwarder.config().frame_period;
        let wait = depart - now;
        self.checks.max_dl_wait = self.checks.max_dl_wait.max(wait);
        if wait >= frame {
            self.checks.dl_wait_over_frame += 1;
        }
        let p = self.packets.get(id);
        p.t_dl_depart = Some(depart);
        p.t_at_app = Some(t_app);
        self.at(t_app, Priority::LinkArrival, Action::AtApp { packet: id });
    }

    fn at_app(&mut self, id: u64) {
        let p = self.packets.take(id);
        self.checks.delivered += 1;
        if !p.timestamps_monotone() {
            self.checks.non_monotone += 1;
        }
        if p.t_at_app < p.t_at_du {
            self.checks.app_before_du += 1;
        }
        self.collector.add(&p);
        if let Some(t) = &mut self.trace {
            t.push(p);
        }
    }

    fn finish(mut self) -> RunOutput {
        for p in self.packets.live() {
            if p.t_onu_depart.is_some() {
                self.checks.in_flight += 1;
            } else if p.t_at_onu.is_some() {
                self.checks.queued_at_onu += 1;
            } else {
                self.checks.in_radio += 1;
            }
        }
        let mut recount_ok = true;
        let mut policies = Vec::new();
        for sl in &self.slices {
            for q in &sl.queues {
                self.checks.bytes_queued += q.occupancy();
                self.checks.queue_packets += q.packets() as u64;
                recount_ok &= q.recount() == q.occupancy();
            }
            for ru in 0..sl.queues.len() {
                recount_ok &= sl.cum_in[ru] == sl.cum_sent[ru] + sl.queues[ru].occupancy();
            }
            self.checks.grants += sl.grants;
            self.checks.capacity_exceeded_frames += sl.exceeded;
            self.checks.spilled_grants += sl.spilled;
            self.checks.grant_violations.extend(sl.violations.iter().cloned());
            policies.push((sl.name.clone(), sl.engine.policy));
        }
        self.checks.queue_recount_ok = recount_ok;
        let (summary, stages) = self.collector.finish();
        RunOutput {
            load: self.load,
            slot_us: libm::round(self.radio.slot_us) as u32,
            seed: self.seed,
            policies,
            summary,
            stages,
            checks: self.checks,
            trace: self.trace.unwrap_or_default(),
        }
    }
}

/// Convenience wrapper for a Poisson run.
pub fn run_point(cfg: &ScenarioConfig, load: f64, seed: u64) -> Result<RunOutput, SimError> {
    Ok(Simulation::new(cfg, TrafficMode::Poisson { load }, seed)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(duration_s: f64) -> ScenarioConfig {
        ScenarioConfig { duration_s, ..Default::default() }
    }

    #[test]
    fn empty_script_runs_clean() {
        let out = Simulation::new(&short(0.01), TrafficMode::Scripted(vec![]), 1).unwrap().run();
        assert_eq!(out.checks.created, 0);
        assert!(out.checks.grant_violations.is_empty());
        assert!(out.checks.bytes_conserved());
    }

    #[test]
    fn short_poisson_run_conserves() {
        let out = run_point(&short(0.05), 0.5, 3).unwrap();
        let c = &out.checks;
        assert!(c.created > 1000);
        assert!(c.packets_conserved(), "{c:?}");
        assert!(c.bytes_conserved(), "{c:?}");
        assert!(c.grant_violations.is_empty(), "{:?}", c.grant_violations);
        assert_eq!(c.non_monotone, 0);
        assert!(out.cell(TrafficClass::Urllc, Point::App).is_some());
    }

    #[test]
    fn invalid_load_is_rejected() {
        assert!(matches!(run_point(&short(0.01), 1.5, 1), Err(SimError::InvalidScenario(_))));
    }
}
