//! Tier-2 uplink-to-downlink switch at the MEC OLT.
//!
//! URLLC bursts that terminate at the co-located DU are processed for one
//! slot and then sent straight back down the slice towards the second MEC,
//! which sits on the ODN as a pseudo-ONU. Downstream frames are periodic;
//! a packet waits for the next frame boundary, then packets leave
//! back-to-back. A packet never straddles two frames.

use crate::mac::LineRate;
use crate::ran::{AppPacket, TrafficClass};
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwarderConfig {
    pub frame_period: SimTime,
    pub dl_phase: SimTime,
    pub ds_rate: LineRate,
    /// Per-packet downstream framing bytes.
    pub dl_overhead_bytes: u64,
    /// One-way propagation from the switching OLT to the pseudo-ONU.
    pub propagation: SimTime,
    pub app_proc: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delivery {
    /// Switch onto the downlink once `ready`.
    Switch { ready: SimTime },
    /// Not handled by tier 2.
    Bypass,
}

#[derive(Clone, Debug)]
pub struct ForwarderState {
    cfg: ForwarderConfig,
    /// First free downstream transmit instant.
    cursor: SimTime,
    pub switched: u64,
    pub max_wait: SimTime,
}

impl ForwarderState {
    pub fn new(cfg: ForwarderConfig) -> Self {
        ForwarderState { cfg, cursor: SimTime::ZERO, switched: 0, max_wait: SimTime::ZERO }
    }

    pub fn config(&self) -> &ForwarderConfig {
        &self.cfg
    }

    /// Uplink arrival at the DU. URLLC is switched after `du_proc`.
    pub fn on_uplink_delivery(&self, pkt: &AppPacket, t_at_du: SimTime, du_proc: SimTime) -> Delivery {
        match pkt.class {
            TrafficClass::Urllc => Delivery::Switch { ready: t_at_du + du_proc },
            TrafficClass::Normal => Delivery::Bypass,
        }
    }

    pub fn dl_serialize(&self, size_bytes: u64) -> SimTime {
        self.cfg.ds_rate.serialize(size_bytes + self.cfg.dl_overhead_bytes)
    }

    /// Queues a packet for the downlink and returns its departure instant.
    /// Calls must come in non-decreasing `ready` order.
    pub fn enqueue(&mut self, ready: SimTime, size_bytes: u64) -> SimTime {
        let f = self.cfg.frame_period;
        let phase = self.cfg.dl_phase;
        let ser = self.dl_serialize(size_bytes);
        let mut start = downlink_departure(ready, f, phase).max(self.cursor);
        let frame_start = downlink_frame_start(start, f, phase);
        if ser <= f && start + ser > frame_start + f {
            start = frame_start + f;
        }
        self.cursor = start + ser;
        self.switched += 1;
        self.max_wait = self.max_wait.max(start - ready);
        start
    }

    pub fn deliver_to_app(&self, dl_depart: SimTime, size_bytes: u64) -> SimTime {
        dl_depart + self.dl_serialize(size_bytes) + self.cfg.propagation + self.cfg.app_proc
    }
}

/// Next downstream frame boundary at or after `ready`.
pub fn downlink_departure(ready: SimTime, frame: SimTime, phase: SimTime) -> SimTime {
    ready.next_boundary(frame, phase)
}

/// Start of the downstream frame that contains `t`.
fn downlink_frame_start(t: SimTime, frame: SimTime, phase: SimTime) -> SimTime {
    let b = t.next_boundary(frame, phase);
    if b == t {
        t
    } else {
        b - frame
    }
}
