//! Scenario description shared by the simulator and the CLI.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::mac::{DbaPolicy, LineRate, MacParams};
use crate::ran::{RadioConfig, SizeDist};
use crate::time::SimTime;
use crate::topology::{reference_topology, validate_topology, NodeKind, TopologyConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    /// Fraction of offered fronthaul bit-rate that is URLLC.
    pub urllc_share: f64,
    pub urllc_size: SizeDist,
    pub normal_size: SizeDist,
    /// Slice carrying URLLC fronthaul; its OLT hosts the DU and its
    /// pseudo-ONU member hosts the application.
    pub urllc_slice: String,
    /// Slice carrying normal fronthaul to the CO.
    pub normal_slice: String,
    /// Offset RU `i`'s slot grid by `i * slot / n_ru`.
    pub ru_stagger: bool,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            urllc_share: 0.10,
            urllc_size: SizeDist::Fixed { bytes: 100 },
            normal_size: SizeDist::Fixed { bytes: 1500 },
            urllc_slice: "tier1".into(),
            normal_slice: "co".into(),
            ru_stagger: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacSection {
    pub guard_us: f64,
    pub overhead_bytes: u64,
    /// Uniform +/- error applied to predicted ONU arrivals.
    pub cti_jitter_us: f64,
    pub cgs_occupancy_estimate: bool,
    pub estimator_alpha: f64,
}

impl Default for MacSection {
    fn default() -> Self {
        MacSection {
            guard_us: 1.0,
            overhead_bytes: 50,
            cti_jitter_us: 0.0,
            cgs_occupancy_estimate: false,
            estimator_alpha: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwarderSection {
    pub app_proc_us: f64,
    pub dl_overhead_bytes: u64,
}

impl Default for ForwarderSection {
    fn default() -> Self {
        ForwarderSection { app_proc_us: 0.0, dl_overhead_bytes: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration_s: f64,
    pub warmup_fraction: f64,
    /// Offered load as a fraction of the upstream line rate.
    pub loads: Vec<f64>,
    /// Slot durations to sweep; empty means `radio.slot_us` only.
    pub slots_us: Vec<f64>,
    pub seeds: u32,
    pub base_seed: u64,
    /// Parallel runs; 0 means one per core.
    pub jobs: usize,
    pub trace: bool,
    pub output_dir: String,
    pub topology: TopologyConfig,
    pub radio: RadioConfig,
    pub traffic: TrafficSection,
    pub mac: MacSection,
    pub forwarder: ForwarderSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "reference".into(),
            duration_s: 10.0,
            warmup_fraction: 0.05,
            loads: vec![0.25, 0.50, 0.75, 0.90, 0.95],
            slots_us: Vec::new(),
            seeds: 3,
            base_seed: 1,
            jobs: 0,
            trace: false,
            output_dir: "results".into(),
            topology: reference_topology(),
            radio: RadioConfig::default(),
            traffic: TrafficSection::default(),
            mac: MacSection::default(),
            forwarder: ForwarderSection::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.base_seed + i).collect()
    }

    pub fn slot_list(&self) -> Vec<f64> {
        if self.slots_us.is_empty() {
            vec![self.radio.slot_us]
        } else {
            self.slots_us.clone()
        }
    }

    /// Copy with the radio retuned to `slot_us`.
    pub fn with_slot(&self, slot_us: f64) -> ScenarioConfig {
        let mut c = self.clone();
        c.radio.set_slot_us(slot_us);
        c.slots_us.clear();
        c
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration_s)
    }

    pub fn warmup_end(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration_s * self.warmup_fraction)
    }

    pub fn set_dba_all(&mut self, policy: DbaPolicy) {
        for s in &mut self.topology.slices {
            s.dba = policy;
        }
    }

    pub fn mac_params(&self, slice: &str) -> Option<MacParams> {
        let s = self.topology.slices.iter().find(|s| s.id == slice)?;
        Some(MacParams {
            rate: LineRate::from_bps(s.us_rate_bps).ok()?,
            frame_period: s.frame_period(),
            guard: SimTime::from_us_f64(self.mac.guard_us),
            overhead_bytes: self.mac.overhead_bytes,
        })
    }

    /// Every problem found in the configuration; empty when runnable.
    pub fn validate(&self) -> Vec<String> {
        let mut out: Vec<String> = validate_topology(&self.topology).iter().map(|v| format!("{v}")).collect();
        if let Err(e) = self.radio.validate() {
            out.push(format!("radio: {e}"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            out.push("duration_s must be positive".into());
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            out.push("warmup_fraction must be in [0, 1)".into());
        }
        if self.loads.is_empty() {
            out.push("at least one load point is required".into());
        }
        for &l in &self.loads {
            if !(l > 0.0 && l < 1.0) {
                out.push(format!("load {l} must be in (0, 1)"));
            }
        }
        for &s in &self.slots_us {
            if !(s > 0.0 && s.is_finite()) {
                out.push(format!("slot {s} us must be positive"));
            }
        }
        if self.seeds == 0 {
            out.push("seeds must be >= 1".into());
        }
        let t = &self.traffic;
        if !(0.0..=1.0).contains(&t.urllc_share) {
            out.push("traffic.urllc_share must be in [0, 1]".into());
        }
        if !t.urllc_size.is_valid() || !t.normal_size.is_valid() {
            out.push("traffic packet sizes must be positive with min <= max".into());
        } else if self.radio.validate().is_ok() {
            let u = self.radio.prbs_for_payload(t.urllc_size.largest());
            if u > self.radio.cgs_prbs() {
                out.push(format!(
                    "largest URLLC packet needs {u} PRBs but the CGS set has {}",
                    self.radio.cgs_prbs()
                ));
            }
            let n = self.radio.prbs_for_payload(t.normal_size.largest());
            if n > self.radio.dynamic_prbs() {
                out.push(format!("largest normal packet needs {n} PRBs, more than the dynamic pool"));
            }
        }
        let find = |id: &str| self.topology.slices.iter().find(|s| s.id == id);
        match find(&t.urllc_slice) {
            None => out.push(format!("traffic.urllc_slice `{}` is not a slice", t.urllc_slice)),
            Some(s) => {
                let kind = |id: &str| self.topology.nodes.iter().find(|n| n.id == id).map(|n| n.kind);
                if kind(&s.olt) != Some(NodeKind::MecOlt) {
                    out.push(format!("URLLC slice `{}` must be served by a MEC OLT", s.id));
                }
                if !s.members.iter().any(|m| kind(m) == Some(NodeKind::MecOlt)) {
                    out.push(format!("URLLC slice `{}` has no MEC pseudo-ONU to deliver to", s.id));
                }
            }
        }
        match (find(&t.urllc_slice), find(&t.normal_slice)) {
            (_, None) => out.push(format!("traffic.normal_slice `{}` is not a slice", t.normal_slice)),
            (Some(u), Some(n)) => {
                let ru = |s: &crate::topology::VponSlice| -> Vec<String> {
                    let mut v: Vec<String> = s
                        .members
                        .iter()
                        .filter(|m| {
                            self.topology.nodes.iter().any(|n| &n.id == *m && n.kind == NodeKind::RuOnu)
                        })
                        .cloned()
                        .collect();
                    v.sort();
                    v
                };
                if ru(u) != ru(n) {
                    out.push("URLLC and normal slices must contain the same RUs".into());
                }
                if ru(u).is_empty() {
                    out.push("no RU sites in the traffic slices".into());
                }
            }
            _ => {}
        }
        let m = &self.mac;
        if !(m.guard_us >= 0.0) {
            out.push("mac.guard_us must be >= 0".into());
        }
        if !(m.cti_jitter_us >= 0.0) {
            out.push("mac.cti_jitter_us must be >= 0".into());
        }
        if !(m.estimator_alpha > 0.0 && m.estimator_alpha <= 1.0) {
            out.push("mac.estimator_alpha must be in (0, 1]".into());
        }
        if !(self.forwarder.app_proc_us >= 0.0) {
            out.push("forwarder.app_proc_us must be >= 0".into());
        }
        out
    }
}
