//! Parallel load/slot/seed sweeps and the artifacts they produce.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use meshpon_core::metrics::Point;
use meshpon_core::ran::AppPacket;
use meshpon_core::scenario::ScenarioConfig;
use meshpon_core::sim::{run_point, RunOutput, SimError};
use meshpon_core::TrafficClass;
use rayon::prelude::*;
use serde::Serialize;

use crate::charts::{bar_chart, line_chart, Series};
use crate::report::{format_load, pool, rows_for, write_rows, SummaryRow};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Job {
    pub slot_us: f64,
    pub load: f64,
    pub seed: u64,
}

pub fn jobs(cfg: &ScenarioConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for slot_us in cfg.slot_list() {
        for &load in &cfg.loads {
            for seed in cfg.seed_list() {
                out.push(Job { slot_us, load, seed });
            }
        }
    }
    out
}

/// Runs every job, at most `cfg.jobs` at a time (0 = all cores). Output
/// order matches [`jobs`] regardless of scheduling.
pub fn run_sweep(cfg: &ScenarioConfig) -> Result<Vec<RunOutput>, SimError> {
    let list = jobs(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .expect("thread pool");
    pool.install(|| {
        list.par_iter()
            .map(|j| run_point(&cfg.with_slot(j.slot_us), j.load, j.seed))
            .collect()
    })
}

pub fn summary_rows(runs: &[RunOutput]) -> Vec<SummaryRow> {
    runs.iter().flat_map(rows_for).collect()
}

fn select<'a>(runs: &'a [RunOutput], slot_us: u32, load: &str) -> Vec<&'a RunOutput> {
    runs.iter().filter(|r| r.slot_us == slot_us && format_load(r.load) == load).collect()
}

fn load_labels(cfg: &ScenarioConfig) -> (Vec<String>, Vec<String>) {
    let keys: Vec<String> = cfg.loads.iter().map(|&l| format_load(l)).collect();
    let labels = cfg.loads.iter().map(|l| format!("{:.0}%", l * 100.0)).collect();
    (keys, labels)
}

/// Average and max latency per load and class for one slot duration.
pub fn load_chart(cfg: &ScenarioConfig, runs: &[RunOutput], slot_us: u32) -> String {
    let (keys, labels) = load_labels(cfg);
    let cells = [
        (TrafficClass::Urllc, Point::RuDu, "URLLC RU-DU"),
        (TrafficClass::Urllc, Point::App, "URLLC APP"),
        (TrafficClass::Normal, Point::App, "normal APP"),
    ];
    let mut series = Vec::new();
    for (class, point, name) in cells {
        let pooled: Vec<_> = keys.iter().map(|k| pool(&select(runs, slot_us, k), class, point)).collect();
        series.push(Series { label: format!("{name} avg"), values: pooled.iter().map(|p| p.map(|p| p.mean_us / 1e3)).collect() });
        series.push(Series { label: format!("{name} max"), values: pooled.iter().map(|p| p.map(|p| p.max_us / 1e3)).collect() });
    }
    bar_chart(&format!("Latency vs PON load, {slot_us} us slot"), &labels, &series)
}

/// Average URLLC application latency versus load, one line per slot.
pub fn slot_chart(cfg: &ScenarioConfig, runs: &[RunOutput]) -> String {
    let (keys, labels) = load_labels(cfg);
    let mut series = Vec::new();
    for slot in cfg.slot_list() {
        let slot_us = slot.round() as u32;
        for (point, name) in [(Point::App, "avg"), (Point::App, "max")] {
            let values = keys
                .iter()
                .map(|k| {
                    pool(&select(runs, slot_us, k), TrafficClass::Urllc, point)
                        .map(|p| if name == "avg" { p.mean_us } else { p.max_us } / 1e3)
                })
                .collect();
            series.push(Series { label: format!("{slot_us} us slot {name}"), values });
        }
    }
    line_chart("URLLC application latency vs PON load", &labels, &series)
}

#[derive(Serialize)]
struct TraceRow {
    id: u64,
    ru: u16,
    class: &'static str,
    size_bytes: u32,
    fh_bytes: u64,
    t_created_us: f64,
    t_bsr_us: Option<f64>,
    t_radio_tx_start_us: Option<f64>,
    t_at_onu_us: Option<f64>,
    t_onu_depart_us: Option<f64>,
    t_at_du_us: Option<f64>,
    t_ready_us: Option<f64>,
    t_dl_depart_us: Option<f64>,
    t_at_app_us: Option<f64>,
}

impl From<&AppPacket> for TraceRow {
    fn from(p: &AppPacket) -> Self {
        let f = |t: Option<meshpon_core::SimTime>| t.map(|t| t.as_us_f64());
        TraceRow {
            id: p.id,
            ru: p.ru,
            class: p.class.as_str(),
            size_bytes: p.size_bytes,
            fh_bytes: p.fh_bytes,
            t_created_us: p.t_created.as_us_f64(),
            t_bsr_us: f(p.t_bsr),
            t_radio_tx_start_us: f(p.t_radio_tx_start),
            t_at_onu_us: f(p.t_at_onu),
            t_onu_depart_us: f(p.t_onu_depart),
            t_at_du_us: f(p.t_at_du),
            t_ready_us: f(p.t_ready),
            t_dl_depart_us: f(p.t_dl_depart),
            t_at_app_us: f(p.t_at_app),
        }
    }
}

pub fn write_trace(path: &Path, packets: &[AppPacket]) -> Result<()> {
    let rows: Vec<TraceRow> = packets.iter().map(TraceRow::from).collect();
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_rows(f, &rows)?;
    Ok(())
}

/// Writes `summary.csv`, the two charts and (when tracing) one packet trace
/// per run into `dir`.
pub fn write_artifacts(cfg: &ScenarioConfig, runs: &[RunOutput], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let summary = dir.join("summary.csv");
    write_rows(fs::File::create(&summary)?, &summary_rows(runs))?;
    written.push(summary);
    let first_slot = cfg.slot_list()[0].round() as u32;
    let f2 = dir.join("fig2.svg");
    fs::write(&f2, load_chart(cfg, runs, first_slot))?;
    let f3 = dir.join("fig3.svg");
    fs::write(&f3, slot_chart(cfg, runs))?;
    written.extend([f2, f3]);
    if cfg.trace {
        let tdir = dir.join("traces");
        fs::create_dir_all(&tdir)?;
        for r in runs {
            let p = tdir.join(format!("load{}_slot{}_seed{}.csv", format_load(r.load), r.slot_us, r.seed));
            write_trace(&p, &r.trace)?;
            written.push(p);
        }
    }
    Ok(written)
}
