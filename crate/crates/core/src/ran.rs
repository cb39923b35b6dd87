//! Radio side: UE traffic, CGS and dynamic-grant access, split-7.2 payloads.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

pub const SUBCARRIERS_PER_PRB: u64 = 12;
/// Slots between the buffer status report and the granted transmission.
pub const DYNAMIC_GRANT_SLOTS: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficClass {
    Urllc,
    Normal,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 2] = [TrafficClass::Urllc, TrafficClass::Normal];

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficClass::Urllc => "urllc",
            TrafficClass::Normal => "normal",
        }
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RanError {
    InvalidPrbCount { prbs: u32, n_prb: u32 },
    InvalidLoad(f64),
    InvalidConfig(&'static str),
    PacketExceedsCgs { prbs: u32, cgs_prbs: u32 },
}

impl fmt::Display for RanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RanError::InvalidPrbCount { prbs, n_prb } => write!(f, "{prbs} PRBs requested, grid has {n_prb}"),
            RanError::InvalidLoad(l) => write!(f, "load must be in (0, 1), got {l}"),
            RanError::InvalidConfig(why) => write!(f, "invalid radio config: {why}"),
            RanError::PacketExceedsCgs { prbs, cgs_prbs } => {
                write!(f, "URLLC packet needs {prbs} PRBs but the CGS set holds {cgs_prbs}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    pub bandwidth_mhz: f64,
    pub n_prb: u32,
    pub slot_us: f64,
    pub symbols_per_slot: u32,
    pub n_layers: u32,
    pub iq_bitwidth: u32,
    pub cgs_fraction: f64,
    /// eCPRI plus Ethernet framing per fronthaul burst.
    pub header_bytes: u64,
    /// User-plane bytes one PRB carries per OFDM symbol.
    pub payload_bytes_per_prb_symbol: u32,
    pub ru_proc_us: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            bandwidth_mhz: 100.0,
            n_prb: 273,
            slot_us: 500.0,
            symbols_per_slot: 14,
            n_layers: 4,
            iq_bitwidth: 9,
            cgs_fraction: 0.10,
            header_bytes: 50,
            payload_bytes_per_prb_symbol: 12,
            ru_proc_us: 0.0,
        }
    }
}

impl RadioConfig {
    /// Default numerology for a slot length. The 250 µs mini-slot keeps the
    /// 273-PRB grid with seven symbols.
    pub fn for_slot_us(slot_us: f64) -> Self {
        let mut cfg = RadioConfig::default();
        cfg.set_slot_us(slot_us);
        cfg
    }

    /// Changes the slot length and rescales symbols from 14 per 500 µs.
    pub fn set_slot_us(&mut self, slot_us: f64) {
        self.slot_us = slot_us;
        self.symbols_per_slot = libm::round(14.0 * slot_us / 500.0).max(1.0) as u32;
    }

    pub fn slot_duration(&self) -> SimTime {
        SimTime::from_us_f64(self.slot_us)
    }

    pub fn ru_proc(&self) -> SimTime {
        SimTime::from_us_f64(self.ru_proc_us)
    }

    pub fn cgs_prbs(&self) -> u32 {
        libm::floor(self.cgs_fraction * self.n_prb as f64) as u32
    }

    pub fn dynamic_prbs(&self) -> u32 {
        self.n_prb - self.cgs_prbs()
    }

    pub fn validate(&self) -> Result<(), RanError> {
        if !(self.cgs_fraction > 0.0 && self.cgs_fraction < 1.0) {
            return Err(RanError::InvalidConfig("cgs_fraction must be in (0, 1)"));
        }
        if self.n_prb == 0 {
            return Err(RanError::InvalidConfig("n_prb must be > 0"));
        }
        if !(self.slot_us > 0.0) {
            return Err(RanError::InvalidConfig("slot duration must be > 0"));
        }
        if self.symbols_per_slot == 0 || self.n_layers == 0 || self.iq_bitwidth == 0 {
            return Err(RanError::InvalidConfig("symbols, layers and IQ width must be > 0"));
        }
        if self.payload_bytes_per_prb_symbol == 0 {
            return Err(RanError::InvalidConfig("payload_bytes_per_prb_symbol must be > 0"));
        }
        if self.cgs_prbs() == 0 {
            return Err(RanError::InvalidConfig("CGS set rounds down to zero PRBs"));
        }
        if !(self.ru_proc_us >= 0.0) {
            return Err(RanError::InvalidConfig("ru_proc must be >= 0"));
        }
        Ok(())
    }

    /// Frequency-domain IQ bytes for `prbs` over `symbols`, without header.
    pub fn iq_bytes(&self, prbs: u32, symbols: u32) -> u64 {
        let bits = prbs as u64
            * symbols as u64
            * SUBCARRIERS_PER_PRB
            * 2
            * self.iq_bitwidth as u64
            * self.n_layers as u64;
        bits.div_ceil(8)
    }

    /// PRBs needed to carry `size_bytes` of user data in one slot.
    pub fn prbs_for_payload(&self, size_bytes: u32) -> u32 {
        let per_prb = self.payload_bytes_per_prb_symbol * self.symbols_per_slot;
        size_bytes.div_ceil(per_prb).max(1)
    }

    /// IQ bytes a packet contributes to its slot's fronthaul burst.
    pub fn packet_iq_bytes(&self, size_bytes: u32) -> u64 {
        self.iq_bytes(self.prbs_for_payload(size_bytes), self.symbols_per_slot)
    }

    pub fn cgs_burst_bytes(&self) -> u64 {
        self.iq_bytes(self.cgs_prbs(), self.symbols_per_slot) + self.header_bytes
    }
}

/// Split-7.2 fronthaul bytes for one burst: IQ samples plus one header.
pub fn fronthaul_bytes(prbs: u32, symbols: u32, cfg: &RadioConfig) -> Result<u64, RanError> {
    if prbs > cfg.n_prb {
        return Err(RanError::InvalidPrbCount { prbs, n_prb: cfg.n_prb });
    }
    Ok(cfg.iq_bytes(prbs, symbols) + cfg.header_bytes)
}

/// DU/CU stack processing allowance: one slot.
pub fn du_cu_processing_delay(cfg: &RadioConfig) -> SimTime {
    cfg.slot_duration()
}

/// Access timing when radio capacity is not the constraint. URLLC transmits
/// on the next CGS occasion; NORMAL reports at the next boundary and is
/// granted [`DYNAMIC_GRANT_SLOTS`] later.
pub fn radio_tx_start(class: TrafficClass, t_created: SimTime, slot: SimTime, phase: SimTime) -> SimTime {
    let boundary = t_created.next_boundary(slot, phase);
    match class {
        TrafficClass::Urllc => boundary,
        TrafficClass::Normal => boundary + SimTime(slot.0 * DYNAMIC_GRANT_SLOTS),
    }
}

/// The slot's IQ has fully left the radio once the slot ends.
pub fn arrival_at_onu(t_radio_tx_start: SimTime, cfg: &RadioConfig) -> SimTime {
    t_radio_tx_start + cfg.slot_duration() + cfg.ru_proc()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppPacket {
    pub id: u64,
    pub ue_id: u32,
    pub ru: u16,
    pub class: TrafficClass,
    pub size_bytes: u32,
    pub prbs: u32,
    pub fh_bytes: u64,
    pub t_created: SimTime,
    pub t_bsr: Option<SimTime>,
    pub t_radio_tx_start: Option<SimTime>,
    pub t_at_onu: Option<SimTime>,
    pub t_onu_depart: Option<SimTime>,
    pub t_at_du: Option<SimTime>,
    pub t_ready: Option<SimTime>,
    pub t_dl_depart: Option<SimTime>,
    pub t_at_app: Option<SimTime>,
}

impl AppPacket {
    pub fn new(id: u64, ru: u16, class: TrafficClass, size_bytes: u32, t_created: SimTime) -> Self {
        AppPacket {
            id,
            ue_id: 0,
            ru,
            class,
            size_bytes,
            prbs: 0,
            fh_bytes: 0,
            t_created,
            t_bsr: None,
            t_radio_tx_start: None,
            t_at_onu: None,
            t_onu_depart: None,
            t_at_du: None,
            t_ready: None,
            t_dl_depart: None,
            t_at_app: None,
        }
    }

    /// Pipeline timestamps in order, skipping those not reached.
    pub fn timeline(&self) -> Vec<SimTime> {
        [
            Some(self.t_created),
            self.t_radio_tx_start,
            self.t_at_onu,
            self.t_onu_depart,
            self.t_at_du,
            self.t_ready,
            self.t_dl_depart,
            self.t_at_app,
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    pub fn timestamps_monotone(&self) -> bool {
        self.timeline().windows(2).all(|w| w[0] <= w[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CgsAllocation {
    pub ru: u16,
    pub prbs_per_slot: u32,
    pub period_slots: u32,
    pub active_from_slot: u64,
}

impl CgsAllocation {
    pub fn for_ru(ru: u16, cfg: &RadioConfig) -> Self {
        CgsAllocation { ru, prbs_per_slot: cfg.cgs_prbs(), period_slots: 1, active_from_slot: 0 }
    }
}

/// Outcome of radio admission for one packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RadioSlot {
    pub slot_index: u64,
    pub tx_start: SimTime,
    pub bsr: Option<SimTime>,
}

/// Per-RU radio resource accounting. URLLC packets fill the CGS set of each
/// slot in FIFO order; NORMAL packets fill the remaining PRBs four slots after
/// their BSR. A full slot pushes the packet to the next one.
#[derive(Clone, Debug)]
pub struct RadioScheduler {
    cfg: RadioConfig,
    phase: SimTime,
    cgs: CgsAllocation,
    urllc_cursor: (u64, u32),
    normal_cursor: (u64, u32),
}

impl RadioScheduler {
    pub fn new(cfg: RadioConfig, cgs: CgsAllocation, phase: SimTime) -> Self {
        RadioScheduler { cfg, phase, cgs, urllc_cursor: (0, 0), normal_cursor: (0, 0) }
    }

    pub fn phase(&self) -> SimTime {
        self.phase
    }

    pub fn slot_start(&self, slot_index: u64) -> SimTime {
        self.phase + SimTime(self.cfg.slot_duration().0 * slot_index)
    }

    fn first_slot_at_or_after(&self, t: SimTime) -> u64 {
        t.next_boundary_index(self.cfg.slot_duration(), self.phase)
    }

    pub fn admit(&mut self, class: TrafficClass, t_created: SimTime, prbs: u32) -> Result<RadioSlot, RanError> {
        let first = self.first_slot_at_or_after(t_created);
        match class {
            TrafficClass::Urllc => {
                let cap = self.cgs.prbs_per_slot;
                if prbs > cap {
                    return Err(RanError::PacketExceedsCgs { prbs, cgs_prbs: cap });
                }
                let first = first.max(self.cgs.active_from_slot);
                let idx = place(&mut self.urllc_cursor, first, prbs, cap);
                Ok(RadioSlot { slot_index: idx, tx_start: self.slot_start(idx), bsr: None })
            }
            TrafficClass::Normal => {
                let cap = self.cfg.dynamic_prbs();
                if prbs > cap {
                    return Err(RanError::InvalidPrbCount { prbs, n_prb: cap });
                }
                let bsr = self.slot_start(first);
                let idx = place(&mut self.normal_cursor, first + DYNAMIC_GRANT_SLOTS, prbs, cap);
                Ok(RadioSlot { slot_index: idx, tx_start: self.slot_start(idx), bsr: Some(bsr) })
            }
        }
    }
}

fn place(cursor: &mut (u64, u32), earliest: u64, prbs: u32, cap: u32) -> u64 {
    if earliest > cursor.0 {
        *cursor = (earliest, 0);
    }
    if cursor.1 + prbs > cap {
        *cursor = (cursor.0 + 1, 0);
    }
    cursor.1 += prbs;
    cursor.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeDist {
    Fixed { bytes: u32 },
    Uniform { min: u32, max: u32 },
}

impl SizeDist {
    pub fn mean(&self) -> f64 {
        match *self {
            SizeDist::Fixed { bytes } => bytes as f64,
            SizeDist::Uniform { min, max } => (min as f64 + max as f64) / 2.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            SizeDist::Fixed { bytes } => bytes > 0,
            SizeDist::Uniform { min, max } => min > 0 && min <= max,
        }
    }

    pub fn largest(&self) -> u32 {
        match *self {
            SizeDist::Fixed { bytes } => bytes,
            SizeDist::Uniform { max, .. } => max,
        }
    }

    /// Exact mean IQ bytes per packet under this size distribution.
    pub fn mean_iq_bytes(&self, cfg: &RadioConfig) -> f64 {
        match *self {
            SizeDist::Fixed { bytes } => cfg.packet_iq_bytes(bytes) as f64,
            SizeDist::Uniform { min, max } => {
                let total: f64 = (min..=max).map(|s| cfg.packet_iq_bytes(s) as f64).sum();
                total / (max - min + 1) as f64
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuRates {
    /// Offered fronthaul bit-rate (IQ only).
    pub urllc_bps: f64,
    pub normal_bps: f64,
    /// Packet arrival rates.
    pub urllc_pps: f64,
    pub normal_pps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficConfig {
    pub load: f64,
    pub urllc_share: f64,
    pub urllc_size: SizeDist,
    pub normal_size: SizeDist,
    pub per_ru: Vec<RuRates>,
}

impl TrafficConfig {
    pub fn aggregate_offered_bps(&self) -> f64 {
        self.per_ru.iter().map(|r| r.urllc_bps + r.normal_bps).sum()
    }
}

/// Maps a load ratio of `us_rate_bps` onto per-RU Poisson rates, split
/// evenly across `n_ru` sites.
pub fn calibrate_rates(
    load: f64,
    cfg: &RadioConfig,
    n_ru: usize,
    us_rate_bps: f64,
    urllc_share: f64,
    urllc_size: SizeDist,
    normal_size: SizeDist,
) -> Result<TrafficConfig, RanError> {
    if !(load > 0.0 && load < 1.0) {
        return Err(RanError::InvalidLoad(load));
    }
    if n_ru == 0 || !(us_rate_bps > 0.0) {
        return Err(RanError::InvalidConfig("calibration needs RUs and a positive rate"));
    }
    if !(0.0..=1.0).contains(&urllc_share) {
        return Err(RanError::InvalidConfig("urllc_share must be in [0, 1]"));
    }
    if !urllc_size.is_valid() || !normal_size.is_valid() {
        return Err(RanError::InvalidConfig("packet sizes must be positive"));
    }
    let per_ru_bps = load * us_rate_bps / n_ru as f64;
    let urllc_bps = per_ru_bps * urllc_share;
    let normal_bps = per_ru_bps - urllc_bps;
    let rates = RuRates {
        urllc_bps,
        normal_bps,
        urllc_pps: urllc_bps / (8.0 * urllc_size.mean_iq_bytes(cfg)),
        normal_pps: normal_bps / (8.0 * normal_size.mean_iq_bytes(cfg)),
    };
    Ok(TrafficConfig {
        load,
        urllc_share,
        urllc_size,
        normal_size,
        per_ru: alloc::vec![rates; n_ru],
    })
}

/// EWMA of observed per-slot CGS bytes, used to shrink standing grants when
/// the occupancy estimator is enabled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OccupancyEstimator {
    pub alpha: f64,
    pub safety_factor: f64,
    ewma_bytes: f64,
}

impl OccupancyEstimator {
    pub const DEFAULT_SAFETY: f64 = 1.25;

    pub fn new(alpha: f64, initial_bytes: f64) -> Self {
        OccupancyEstimator { alpha, safety_factor: Self::DEFAULT_SAFETY, ewma_bytes: initial_bytes }
    }

    pub fn ewma(&self) -> f64 {
        self.ewma_bytes
    }

    pub fn observe(&mut self, slot_bytes: u64) {
        self.ewma_bytes += self.alpha * (slot_bytes as f64 - self.ewma_bytes);
    }

    /// Predicted burst size, never above the full CGS burst.
    pub fn predict(&self, queued_bytes: u64, full_bytes: u64) -> u64 {
        let est = libm::ceil(self.ewma_bytes * self.safety_factor) as u64;
        est.max(queued_bytes).min(full_bytes)
    }
}
