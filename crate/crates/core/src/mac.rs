//! PON MAC: upstream framing, ONU queues and the DBA policies.
//!
//! Grant times are ONU transmit instants on the ranged upstream timeline.
//! Each frame `k` covers `[k * F, (k + 1) * F)`; every grant in a frame is
//! followed by at least one guard time before the next grant or the frame
//! end, so consecutive frames never need an extra separation check.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use alloc::format;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ran::TrafficClass;
use crate::time::{SimTime, PS_PER_S};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbaPolicy {
    /// Status-report DBA: grants follow reported occupancy one cycle later.
    Sr,
    /// Cooperative DBA fed with scheduled-traffic predictions.
    Codba,
    /// Cooperative DBA that also reserves standing grants for CGS resources.
    #[default]
    CodbaCgs,
}

impl DbaPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            DbaPolicy::Sr => "sr",
            DbaPolicy::Codba => "codba",
            DbaPolicy::CodbaCgs => "codba_cgs",
        }
    }

    pub fn parse(s: &str) -> Option<DbaPolicy> {
        match s {
            "sr" => Some(DbaPolicy::Sr),
            "codba" => Some(DbaPolicy::Codba),
            "codba_cgs" => Some(DbaPolicy::CodbaCgs),
            _ => None,
        }
    }
}

impl fmt::Display for DbaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MacError {
    InvalidRate(f64),
}

impl fmt::Display for MacError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MacError::InvalidRate(r) => write!(f, "line rate must be > 0, got {r}"),
        }
    }
}

/// Integral line rate in bits per second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct LineRate(u64);

impl LineRate {
    pub fn from_bps(rate: f64) -> Result<LineRate, MacError> {
        if !(rate >= 1.0) || !rate.is_finite() || rate > u64::MAX as f64 {
            return Err(MacError::InvalidRate(rate));
        }
        Ok(LineRate(libm::round(rate) as u64))
    }

    pub fn bps(self) -> u64 {
        self.0
    }

    /// Time to clock out `bytes`, rounded up to the picosecond.
    pub fn serialize(self, bytes: u64) -> SimTime {
        let num = bytes as u128 * 8 * PS_PER_S as u128;
        SimTime(num.div_ceil(self.0 as u128) as u64)
    }

    /// Whole bytes that fit in `dur`.
    pub fn bytes_in(self, dur: SimTime) -> u64 {
        (dur.0 as u128 * self.0 as u128 / (8 * PS_PER_S as u128)) as u64
    }
}

/// `bytes * 8 / rate`, in picosecond-exact simulation time.
pub fn serialize_time(bytes: u64, rate_bps: f64) -> Result<SimTime, MacError> {
    if !(rate_bps > 0.0) {
        return Err(MacError::InvalidRate(rate_bps));
    }
    Ok(LineRate::from_bps(rate_bps)?.serialize(bytes))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacParams {
    pub rate: LineRate,
    pub frame_period: SimTime,
    pub guard: SimTime,
    /// Preamble and delimiter bytes at the head of every upstream burst.
    pub overhead_bytes: u64,
}

impl MacParams {
    pub fn reference() -> Self {
        MacParams {
            rate: LineRate(10_000_000_000),
            frame_period: SimTime::from_us(125),
            guard: SimTime::from_us(1),
            overhead_bytes: 50,
        }
    }

    pub fn frame_start(&self, frame: u64) -> SimTime {
        SimTime(self.frame_period.0 * frame)
    }

    pub fn frame_of(&self, t: SimTime) -> u64 {
        t.period_index(self.frame_period)
    }

    pub fn grant_duration(&self, payload_bytes: u64) -> SimTime {
        self.rate.serialize(payload_bytes + self.overhead_bytes)
    }

    /// Payload bytes a grant of `dur` can carry after burst overhead.
    pub fn grant_payload(&self, dur: SimTime) -> u64 {
        self.rate.bytes_in(dur).saturating_sub(self.overhead_bytes)
    }
}

/// DU/CU prediction of a fronthaul burst arriving at an ONU.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CtiReport {
    pub onu: u16,
    pub slot_index: u64,
    pub expected_bytes: u64,
    pub expected_arrival: SimTime,
    pub emitted_at: SimTime,
}

/// Semi-static CGS reservation registered with the OLT when the slice is set
/// up. Arrivals at the ONU happen at `slot_phase + n * slot_period`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CgsAdvertisement {
    pub onu: u16,
    pub bytes_per_slot: u64,
    pub slot_phase: SimTime,
    pub slot_period: SimTime,
}

impl CgsAdvertisement {
    /// ONU arrival instants in `[from, to)`.
    pub fn arrivals_between(&self, from: SimTime, to: SimTime) -> impl Iterator<Item = (u64, SimTime)> + '_ {
        let first = from.next_boundary_index(self.slot_period, self.slot_phase);
        let period = self.slot_period;
        let phase = SimTime(self.slot_phase.0 % period.0);
        (first..)
            .map(move |n| (n, phase + SimTime(period.0 * n)))
            .take_while(move |&(_, t)| t < to)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GrantKind {
    Standing,
    Cti,
    Report,
    Poll,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grant {
    pub slice: u16,
    pub onu: u16,
    pub start: SimTime,
    pub duration: SimTime,
    pub frame_index: u64,
    pub kind: GrantKind,
    /// Radio slot this grant was sized for, when known.
    pub slot_index: Option<u64>,
}

impl Grant {
    pub fn end(&self) -> SimTime {
        self.start + self.duration
    }
}

/// Per-frame ordered grant lists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GrantMap {
    frames: BTreeMap<u64, Vec<Grant>>,
}

impl GrantMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, g: Grant) {
        let list = self.frames.entry(g.frame_index).or_default();
        let at = list.partition_point(|x| x.start <= g.start);
        list.insert(at, g);
    }

    pub fn frame(&self, frame: u64) -> &[Grant] {
        self.frames.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn frames(&self) -> impl Iterator<Item = (u64, &[Grant])> {
        self.frames.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Grant> {
        self.frames.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_time(&self, frame: u64) -> SimTime {
        SimTime(self.frame(frame).iter().map(|g| g.duration.0).sum())
    }

    pub fn extend(&mut self, other: GrantMap) {
        for g in other.frames.into_values().flatten() {
            self.insert(g);
        }
    }

    /// Drops frames before `frame`.
    pub fn prune_before(&mut self, frame: u64) {
        self.frames = self.frames.split_off(&frame);
    }
}

/// Checks the GrantMap invariants for every frame: grants lie inside their
/// frame, do not overlap, are separated by `guard`, and leave `guard` before
/// the frame end.
pub fn check_grant_map(map: &GrantMap, params: &MacParams) -> Vec<String> {
    let mut out = Vec::new();
    for (k, grants) in map.frames() {
        let fs = params.frame_start(k);
        let fe = params.frame_start(k + 1);
        let mut total = SimTime::ZERO;
        for (i, g) in grants.iter().enumerate() {
            total += g.duration;
            if g.start < fs || g.end() + params.guard > fe {
                out.push(format!("frame {k}: grant for onu {} at {} outside frame", g.onu, g.start));
            }
            for h in &grants[i + 1..] {
                if h.start < g.end() + params.guard {
                    out.push(format!(
                        "frame {k}: grants onu {}@{} and onu {}@{} overlap or miss guard",
                        g.onu, g.start, h.onu, h.start
                    ));
                }
            }
        }
        if total > params.frame_period {
            out.push(format!("frame {k}: {total} granted exceeds frame period"));
        }
    }
    out
}

/// A grant that did not fit its frame and moves to the head of a later one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GrantRequest {
    pub onu: u16,
    pub earliest: SimTime,
    pub payload_bytes: u64,
    pub kind: GrantKind,
    pub slot_index: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DbaOutcome {
    pub grants: GrantMap,
    /// Requested grant time (with guards) exceeded the frame period.
    pub capacity_exceeded: bool,
    /// Requests moved to a later frame, either for lack of room or because
    /// they would have crossed the frame end.
    pub spilled: Vec<GrantRequest>,
}

/// Packs grants into a single frame.
#[derive(Clone, Debug)]
pub struct FramePlanner {
    params: MacParams,
    slice: u16,
    frame: u64,
    fs: SimTime,
    limit: SimTime,
    grants: Vec<Grant>,
    requested: SimTime,
}

impl FramePlanner {
    pub fn new(params: MacParams, slice: u16, frame: u64) -> Self {
        let fs = params.frame_start(frame);
        let limit = params.frame_start(frame + 1) - params.guard;
        FramePlanner { params, slice, frame, fs, limit, grants: Vec::new(), requested: SimTime::ZERO }
    }

    pub fn grants(&self) -> &[Grant] {
        &self.grants
    }

    fn earliest_fit(&self, earliest: SimTime, dur: SimTime) -> Option<SimTime> {
        let mut cand = earliest.max(self.fs);
        for g in &self.grants {
            if cand + dur + self.params.guard <= g.start {
                break;
            }
            if g.end() + self.params.guard > cand {
                cand = cand.max(g.end() + self.params.guard);
            }
        }
        (cand + dur <= self.limit).then_some(cand)
    }

    fn push(&mut self, onu: u16, start: SimTime, dur: SimTime, kind: GrantKind, slot: Option<u64>) -> Grant {
        let g = Grant {
            slice: self.slice,
            onu,
            start,
            duration: dur,
            frame_index: self.frame,
            kind,
            slot_index: slot,
        };
        let at = self.grants.partition_point(|x| x.start <= start);
        self.grants.insert(at, g);
        g
    }

    /// Places the whole request or returns `None`.
    pub fn place(&mut self, req: &GrantRequest) -> Option<Grant> {
        let dur = self.params.grant_duration(req.payload_bytes);
        let start = self.earliest_fit(req.earliest, dur)?;
        Some(self.push(req.onu, start, dur, req.kind, req.slot_index))
    }

    /// Free upstream time left in the frame, counting one guard per grant.
    pub fn free_time(&self) -> SimTime {
        let used: u64 = self.grants.iter().map(|g| g.duration.0 + self.params.guard.0).sum();
        SimTime((self.limit.0 + self.params.guard.0 - self.fs.0).saturating_sub(used))
    }

    /// Places as much of the request as the first usable gap allows and
    /// returns the grant with the payload it carries.
    pub fn place_fill(&mut self, req: &GrantRequest) -> Option<(Grant, u64)> {
        if let Some(g) = self.place(req) {
            return Some((g, req.payload_bytes));
        }
        let min = self.params.grant_duration(1);
        let mut cand = req.earliest.max(self.fs);
        let mut gaps = Vec::new();
        for g in &self.grants {
            if g.start >= cand + self.params.guard {
                gaps.push((cand, g.start - self.params.guard));
            }
            cand = cand.max(g.end() + self.params.guard);
        }
        if self.limit > cand {
            gaps.push((cand, self.limit));
        }
        let (start, end) = gaps.into_iter().find(|(s, e)| *e >= *s + min)?;
        let payload = self.params.grant_payload(end - start).min(req.payload_bytes);
        let dur = self.params.grant_duration(payload);
        let g = self.push(req.onu, start, dur, req.kind, req.slot_index);
        Some((g, payload))
    }

    pub fn into_map(self) -> GrantMap {
        let mut m = GrantMap::new();
        for g in self.grants {
            m.insert(g);
        }
        m
    }
}

fn place_all(planner: &mut FramePlanner, reqs: impl IntoIterator<Item = GrantRequest>, out: &mut DbaOutcome) {
    for r in reqs {
        planner.requested += planner.params.grant_duration(r.payload_bytes) + planner.params.guard;
        if planner.place(&r).is_none() {
            out.spilled.push(r);
        }
    }
    if planner.requested > planner.params.frame_period {
        out.capacity_exceeded = true;
    }
}

fn cti_requests(params: &MacParams, cti: &[CtiReport]) -> Vec<GrantRequest> {
    let mut sorted: Vec<CtiReport> = cti.to_vec();
    sorted.sort_by_key(|r| (r.expected_arrival, r.onu, r.slot_index));
    sorted
        .into_iter()
        .map(|r| GrantRequest {
            onu: r.onu,
            earliest: r.expected_arrival + params.guard,
            payload_bytes: r.expected_bytes,
            kind: GrantKind::Cti,
            slot_index: Some(r.slot_index),
        })
        .collect()
}

/// Standing grants for every CGS arrival in `frame`, sized by `size_of`.
fn standing_requests(
    params: &MacParams,
    cgs: &[CgsAdvertisement],
    frame: u64,
    size_of: &dyn Fn(&CgsAdvertisement) -> u64,
) -> Vec<GrantRequest> {
    let fs = params.frame_start(frame);
    let fe = params.frame_start(frame + 1);
    let mut reqs: Vec<GrantRequest> = cgs
        .iter()
        .flat_map(|adv| {
            let bytes = size_of(adv);
            adv.arrivals_between(fs, fe).map(move |(n, a)| GrantRequest {
                onu: adv.onu,
                earliest: a + params.guard,
                payload_bytes: bytes,
                kind: GrantKind::Standing,
                slot_index: Some(n),
            })
        })
        .collect();
    reqs.sort_by_key(|r| (r.earliest, r.onu));
    reqs
}

/// Report-driven grants sized to `reports`, scaled down proportionally when
/// the frame cannot hold them all. Zero reports get a polling grant when
/// `poll` is set.
fn report_grants(planner: &mut FramePlanner, params: &MacParams, reports: &BTreeMap<u16, u64>, poll: bool) {
    let guard = params.guard.0;
    let demand: u64 = reports
        .values()
        .filter(|&&b| b > 0 || poll)
        .map(|&b| params.grant_duration(b).0 + guard)
        .sum();
    let free = planner.free_time().0;
    let fixed: u64 = reports
        .values()
        .filter(|&&b| b > 0 || poll)
        .map(|_| params.grant_duration(0).0 + guard)
        .sum();
    let scale = if demand > free && demand > fixed {
        free.saturating_sub(fixed) as f64 / (demand - fixed) as f64
    } else {
        1.0
    };
    for (&onu, &bytes) in reports {
        if bytes == 0 && !poll {
            continue;
        }
        let kind = if bytes == 0 { GrantKind::Poll } else { GrantKind::Report };
        let scaled = if scale < 1.0 { libm::floor(bytes as f64 * scale) as u64 } else { bytes };
        if bytes > 0 && scaled == 0 {
            continue;
        }
        let req = GrantRequest { onu, earliest: planner.fs, payload_bytes: scaled, kind, slot_index: None };
        if kind == GrantKind::Poll {
            let _ = planner.place(&req);
        } else {
            let _ = planner.place_fill(&req);
        }
    }
}

/// Status-report DBA for `frame`. Every listed ONU gets a grant; those
/// reporting nothing get a polling grant that only carries the next report.
pub fn sr_dba(params: &MacParams, slice: u16, reports: &BTreeMap<u16, u64>, frame: u64) -> GrantMap {
    let mut planner = FramePlanner::new(*params, slice, frame);
    report_grants(&mut planner, params, reports, true);
    planner.into_map()
}

/// Cooperative DBA: one grant per predicted burst, opening one guard time
/// after the predicted arrival. Overlapping requests are serialised in
/// arrival order; whatever does not fit spills.
pub fn co_dba(params: &MacParams, slice: u16, cti: &[CtiReport], frame: u64) -> DbaOutcome {
    enhanced_co_dba(params, slice, cti, &[], frame, &|adv| adv.bytes_per_slot)
}

/// Cooperative DBA with CGS awareness. Standing grants are laid down first at
/// each CGS arrival of the frame, then predicted dynamic bursts are packed
/// around them. `size_of` decides each standing grant's payload; the
/// conservative scheme passes the full advertised burst.
pub fn enhanced_co_dba(
    params: &MacParams,
    slice: u16,
    cti: &[CtiReport],
    cgs: &[CgsAdvertisement],
    frame: u64,
    size_of: &dyn Fn(&CgsAdvertisement) -> u64,
) -> DbaOutcome {
    let mut planner = FramePlanner::new(*params, slice, frame);
    let mut out = DbaOutcome::default();
    place_all(&mut planner, standing_requests(params, cgs, frame, size_of), &mut out);
    place_all(&mut planner, cti_requests(params, cti), &mut out);
    out.grants = planner.into_map();
    out
}

/// Inputs collected by the OLT for one DBA pass.
#[derive(Clone, Debug, Default)]
pub struct PassInputs {
    pub cti: Vec<CtiReport>,
    /// Occupancy not already covered by issued grants.
    pub residual: BTreeMap<u16, u64>,
    /// Standing grant payload per ONU when the occupancy estimator is on.
    pub cgs_sizes: Option<BTreeMap<u16, u64>>,
}

/// Per-slice DBA state across frames.
#[derive(Clone, Debug)]
pub struct DbaEngine {
    pub policy: DbaPolicy,
    pub params: MacParams,
    pub slice: u16,
    pub cgs: Vec<CgsAdvertisement>,
    carry: Vec<GrantRequest>,
}

impl DbaEngine {
    pub fn new(policy: DbaPolicy, params: MacParams, slice: u16, cgs: Vec<CgsAdvertisement>) -> Self {
        DbaEngine { policy, params, slice, cgs, carry: Vec::new() }
    }

    pub fn carried(&self) -> &[GrantRequest] {
        &self.carry
    }

    /// Plans `frame`. Order: standing CGS grants, spill from the previous
    /// frame, new dynamic grants in arrival order, then report grants for
    /// residual occupancy.
    pub fn pass(&mut self, frame: u64, inputs: &PassInputs) -> DbaOutcome {
        let p = self.params;
        let mut planner = FramePlanner::new(p, self.slice, frame);
        let mut out = DbaOutcome::default();
        if self.policy == DbaPolicy::CodbaCgs {
            let sizes = inputs.cgs_sizes.as_ref();
            let size_of = |adv: &CgsAdvertisement| {
                sizes.and_then(|m| m.get(&adv.onu).copied()).unwrap_or(adv.bytes_per_slot)
            };
            place_all(&mut planner, standing_requests(&p, &self.cgs, frame, &size_of), &mut out);
        }
        let carry = core::mem::take(&mut self.carry);
        place_all(&mut planner, carry, &mut out);
        if self.policy != DbaPolicy::Sr {
            place_all(&mut planner, cti_requests(&p, &inputs.cti), &mut out);
        }
        report_grants(&mut planner, &p, &inputs.residual, self.policy == DbaPolicy::Sr);
        self.carry = out.spilled.clone();
        out.grants = planner.into_map();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueueItem {
    pub packet: Option<u64>,
    pub class: TrafficClass,
    pub bytes: u64,
    pub remaining: u64,
}

/// Per-ONU upstream buffer. URLLC is always served before NORMAL; each class
/// is FIFO.
#[derive(Clone, Debug, Default)]
pub struct OnuQueue {
    pub onu: u16,
    urllc: VecDeque<QueueItem>,
    normal: VecDeque<QueueItem>,
    occupancy: u64,
}

impl OnuQueue {
    pub fn new(onu: u16) -> Self {
        OnuQueue { onu, ..Default::default() }
    }

    pub fn push(&mut self, packet: Option<u64>, class: TrafficClass, bytes: u64) {
        let item = QueueItem { packet, class, bytes, remaining: bytes };
        self.occupancy += bytes;
        match class {
            TrafficClass::Urllc => self.urllc.push_back(item),
            TrafficClass::Normal => self.normal.push_back(item),
        }
    }

    pub fn occupancy(&self) -> u64 {
        self.occupancy
    }

    pub fn class_occupancy(&self, class: TrafficClass) -> u64 {
        let q = match class {
            TrafficClass::Urllc => &self.urllc,
            TrafficClass::Normal => &self.normal,
        };
        q.iter().map(|i| i.remaining).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy == 0
    }

    pub fn items(&self) -> impl Iterator<Item = &QueueItem> {
        self.urllc.iter().chain(self.normal.iter())
    }

    /// Sum of `remaining` over all items; equals `occupancy()`.
    pub fn recount(&self) -> u64 {
        self.items().map(|i| i.remaining).sum()
    }

    /// Queued packets (whole or partial).
    pub fn packets(&self) -> usize {
        self.items().filter(|i| i.packet.is_some()).count()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransmitReport {
    /// Packets whose last byte left in this grant, with that instant.
    pub departures: Vec<(u64, SimTime)>,
    pub bytes_sent: u64,
    pub unused_bytes: u64,
}

/// Serves `queue` for the duration of `g`. Departure time of each item is
/// the end of its last byte.
pub fn onu_transmit(queue: &mut OnuQueue, g: &Grant, params: &MacParams) -> TransmitReport {
    debug_assert_eq!(queue.onu, g.onu);
    let capacity = params.grant_payload(g.duration);
    let mut sent = 0u64;
    let mut report = TransmitReport::default();
    for lane in [&mut queue.urllc, &mut queue.normal] {
        while sent < capacity {
            let Some(head) = lane.front_mut() else { break };
            let take = head.remaining.min(capacity - sent);
            head.remaining -= take;
            sent += take;
            if head.remaining == 0 {
                let item = lane.pop_front().unwrap();
                if let Some(id) = item.packet {
                    let depart = g.start + params.rate.serialize(params.overhead_bytes + sent);
                    report.departures.push((id, depart));
                }
            }
        }
    }
    queue.occupancy -= sent;
    report.bytes_sent = sent;
    report.unused_bytes = capacity - sent;
    report
}
