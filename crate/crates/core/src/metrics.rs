//! Latency samples and per-cell summary statistics.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ran::{AppPacket, TrafficClass};
use crate::time::SimTime;

/// Where a latency is measured, always relative to `t_created`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Point {
    /// Arrival of the fronthaul burst at the DU.
    #[serde(rename = "RU_DU")]
    RuDu,
    /// Delivery to the application.
    #[serde(rename = "APP")]
    App,
}

impl Point {
    pub const ALL: [Point; 2] = [Point::RuDu, Point::App];

    pub fn as_str(self) -> &'static str {
        match self {
            Point::RuDu => "RU_DU",
            Point::App => "APP",
        }
    }

    pub fn parse(s: &str) -> Option<Point> {
        match s {
            "RU_DU" => Some(Point::RuDu),
            "APP" => Some(Point::App),
            _ => None,
        }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatencySample {
    pub packet: u64,
    pub ru: u16,
    pub class: TrafficClass,
    pub point: Point,
    pub t_created: SimTime,
    pub latency: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IncompletePacket {
    pub packet: u64,
}

impl fmt::Display for IncompletePacket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "packet {} has not reached the application", self.packet)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmptyWindow;

impl fmt::Display for EmptyWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("no samples after warm-up")
    }
}

/// Both latency samples of a delivered packet.
pub fn record(p: &AppPacket) -> Result<[LatencySample; 2], IncompletePacket> {
    let (Some(du), Some(app)) = (p.t_at_du, p.t_at_app) else {
        return Err(IncompletePacket { packet: p.id });
    };
    let mk = |point, t: SimTime| LatencySample {
        packet: p.id,
        ru: p.ru,
        class: p.class,
        point,
        t_created: p.t_created,
        latency: t - p.t_created,
    };
    Ok([mk(Point::RuDu, du), mk(Point::App, app)])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellStats {
    pub count: u64,
    pub mean: f64,
    pub p50: SimTime,
    pub p95: SimTime,
    pub p99: SimTime,
    pub max: SimTime,
}

impl CellStats {
    /// Requires at least one value; values are sorted in place.
    pub fn from_latencies(values: &mut [SimTime]) -> Option<CellStats> {
        if values.is_empty() {
            return None;
        }
        values.sort_unstable();
        let sum: u128 = values.iter().map(|v| v.0 as u128).sum();
        Some(CellStats {
            count: values.len() as u64,
            mean: sum as f64 / values.len() as f64,
            p50: nearest_rank(values, 0.50),
            p95: nearest_rank(values, 0.95),
            p99: nearest_rank(values, 0.99),
            max: values[values.len() - 1],
        })
    }

    pub fn mean_us(&self) -> f64 {
        self.mean / 1e6
    }
}

/// Nearest-rank quantile of sorted data: the value at rank `ceil(p * n)`.
pub fn nearest_rank(sorted: &[SimTime], p: f64) -> SimTime {
    let n = sorted.len();
    let rank = libm::ceil(p * n as f64) as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub cells: BTreeMap<(TrafficClass, Point), CellStats>,
    pub dropped_warmup: u64,
}

impl RunSummary {
    pub fn get(&self, class: TrafficClass, point: Point) -> Option<&CellStats> {
        self.cells.get(&(class, point))
    }
}

/// Aggregates samples created at or after `warmup_end`.
pub fn summarize(samples: &[LatencySample], warmup_end: SimTime) -> Result<RunSummary, EmptyWindow> {
    let mut groups: BTreeMap<(TrafficClass, Point), Vec<SimTime>> = BTreeMap::new();
    let mut dropped = 0;
    for s in samples {
        if s.t_created < warmup_end {
            dropped += 1;
            continue;
        }
        groups.entry((s.class, s.point)).or_default().push(s.latency);
    }
    if groups.is_empty() {
        return Err(EmptyWindow);
    }
    let cells = groups
        .into_iter()
        .filter_map(|(k, mut v)| CellStats::from_latencies(&mut v).map(|c| (k, c)))
        .collect();
    Ok(RunSummary { cells, dropped_warmup: dropped })
}

/// Pipeline stages between consecutive packet timestamps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    RadioWait,
    RadioTx,
    OnuWait,
    Uplink,
    DuProc,
    DownlinkWait,
    Downlink,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::RadioWait,
        Stage::RadioTx,
        Stage::OnuWait,
        Stage::Uplink,
        Stage::DuProc,
        Stage::DownlinkWait,
        Stage::Downlink,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::RadioWait => "radio_wait",
            Stage::RadioTx => "radio_tx",
            Stage::OnuWait => "onu_wait",
            Stage::Uplink => "uplink",
            Stage::DuProc => "du_proc",
            Stage::DownlinkWait => "downlink_wait",
            Stage::Downlink => "downlink",
        }
    }
}

/// Mean time spent per stage, per class, over packets created after warm-up.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageBreakdown {
    sums: BTreeMap<(TrafficClass, Stage), (u128, u64)>,
}

impl StageBreakdown {
    pub fn add(&mut self, p: &AppPacket) {
        let stages = [
            (Stage::RadioWait, Some(p.t_created), p.t_radio_tx_start),
            (Stage::RadioTx, p.t_radio_tx_start, p.t_at_onu),
            (Stage::OnuWait, p.t_at_onu, p.t_onu_depart),
            (Stage::Uplink, p.t_onu_depart, p.t_at_du),
            (Stage::DuProc, p.t_at_du, p.t_ready),
            (Stage::DownlinkWait, p.t_ready, p.t_dl_depart),
            (Stage::Downlink, p.t_dl_depart, p.t_at_app),
        ];
        for (stage, a, b) in stages {
            if let (Some(a), Some(b)) = (a, b) {
                let e = self.sums.entry((p.class, stage)).or_insert((0, 0));
                e.0 += (b - a).0 as u128;
                e.1 += 1;
            }
        }
    }

    pub fn mean_us(&self, class: TrafficClass, stage: Stage) -> Option<f64> {
        self.sums.get(&(class, stage)).map(|&(s, n)| s as f64 / n as f64 / 1e6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample(class: TrafficClass, point: Point, created_us: u64, lat_us: u64) -> LatencySample {
        LatencySample {
            packet: 0,
            ru: 0,
            class,
            point,
            t_created: SimTime::from_us(created_us),
            latency: SimTime::from_us(lat_us),
        }
    }

    #[test]
    fn record_both_points() {
        let mut p = AppPacket::new(4, 1, TrafficClass::Urllc, 100, SimTime::from_us(200));
        assert_eq!(record(&p), Err(IncompletePacket { packet: 4 }));
        p.t_at_du = Some(SimTime::from_us(1050));
        p.t_at_app = Some(SimTime::from_us(1675));
        let [du, app] = record(&p).unwrap();
        assert_eq!((du.point, du.latency), (Point::RuDu, SimTime::from_us(850)));
        assert_eq!((app.point, app.latency), (Point::App, SimTime::from_us(1475)));
    }

    #[test]
    fn nearest_rank_quantiles() {
        let v: Vec<SimTime> = (1..=100).map(SimTime::from_us).collect();
        assert_eq!(nearest_rank(&v, 0.5), SimTime::from_us(50));
        assert_eq!(nearest_rank(&v, 0.95), SimTime::from_us(95));
        assert_eq!(nearest_rank(&v, 0.99), SimTime::from_us(99));
        let one = [SimTime::from_us(7)];
        assert_eq!(nearest_rank(&one, 0.99), SimTime::from_us(7));
        let three: Vec<SimTime> = [3, 1, 2].into_iter().map(SimTime::from_us).collect();
        let mut three = three;
        let c = CellStats::from_latencies(&mut three).unwrap();
        assert_eq!(c.p50, SimTime::from_us(2));
        assert_eq!(c.max, SimTime::from_us(3));
        assert_eq!(c.mean, 2e6);
    }

    #[test]
    fn warmup_samples_are_excluded() {
        let s = vec![
            sample(TrafficClass::Urllc, Point::App, 10, 999),
            sample(TrafficClass::Urllc, Point::App, 500, 1),
            sample(TrafficClass::Urllc, Point::App, 600, 3),
        ];
        let r = summarize(&s, SimTime::from_us(100)).unwrap();
        let c = r.get(TrafficClass::Urllc, Point::App).unwrap();
        assert_eq!(c.count, 2);
        assert_eq!(c.max, SimTime::from_us(3));
        assert_eq!(r.dropped_warmup, 1);
        assert!(r.get(TrafficClass::Normal, Point::App).is_none());
    }

    #[test]
    fn empty_window_is_an_error() {
        assert_eq!(summarize(&[], SimTime::ZERO), Err(EmptyWindow));
        let s = [sample(TrafficClass::Normal, Point::RuDu, 1, 1)];
        assert_eq!(summarize(&s, SimTime::from_us(2)), Err(EmptyWindow));
    }
}
