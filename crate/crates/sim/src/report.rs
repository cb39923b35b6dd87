//! `summary.csv` rows and run-to-run comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use meshpon_core::metrics::Point;
use meshpon_core::sim::RunOutput;
use meshpon_core::TrafficClass;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One row per class x point x load x slot x seed. Latencies in whole µs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub load: String,
    pub slot_us: u32,
    pub class: String,
    pub point: String,
    pub count: u64,
    pub mean_us: i64,
    pub p50_us: i64,
    pub p95_us: i64,
    pub p99_us: i64,
    pub max_us: i64,
    pub seed: u64,
}

pub fn format_load(load: f64) -> String {
    format!("{load:.2}")
}

fn us(ps: f64) -> i64 {
    (ps / 1e6).round() as i64
}

pub fn rows_for(run: &RunOutput) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for class in TrafficClass::ALL {
        for point in Point::ALL {
            let Some(c) = run.cell(class, point) else { continue };
            rows.push(SummaryRow {
                load: format_load(run.load),
                slot_us: run.slot_us,
                class: class.as_str().to_string(),
                point: point.as_str().to_string(),
                count: c.count,
                mean_us: us(c.mean),
                p50_us: us(c.p50.0 as f64),
                p95_us: us(c.p95.0 as f64),
                p99_us: us(c.p99.0 as f64),
                max_us: us(c.max.0 as f64),
                seed: run.seed,
            });
        }
    }
    rows
}

pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> csv::Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("load/slot grids differ: only in baseline {only_a:?}, only in candidate {only_b:?}")]
    GridMismatch { only_a: Vec<(String, u32)>, only_b: Vec<(String, u32)> },
}

/// Candidate minus baseline, per matching row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub load: String,
    pub slot_us: u32,
    pub point: String,
    pub seed: u64,
    pub baseline_class: String,
    pub candidate_class: String,
    pub d_mean_us: i64,
    pub d_p50_us: i64,
    pub d_p95_us: i64,
    pub d_p99_us: i64,
    pub d_max_us: i64,
}

/// Rows are matched on `(load, slot, point, seed)` and on class, unless a
/// class filter is given for either side, in which case that side uses only
/// rows of the named class.
pub fn compare(
    a: &[SummaryRow],
    b: &[SummaryRow],
    class_a: Option<&str>,
    class_b: Option<&str>,
) -> Result<Vec<DeltaRow>, CompareError> {
    let grid = |rows: &[SummaryRow]| -> BTreeSet<(String, u32)> {
        rows.iter().map(|r| (r.load.clone(), r.slot_us)).collect()
    };
    let (ga, gb) = (grid(a), grid(b));
    if ga != gb {
        return Err(CompareError::GridMismatch {
            only_a: ga.difference(&gb).cloned().collect(),
            only_b: gb.difference(&ga).cloned().collect(),
        });
    }
    let by_class = class_a.is_none() && class_b.is_none();
    let key = |r: &SummaryRow| {
        let class = if by_class { r.class.clone() } else { String::new() };
        (r.load.clone(), r.slot_us, class, r.point.clone(), r.seed)
    };
    let pick = |rows: &[SummaryRow], filter: Option<&str>| -> BTreeMap<_, SummaryRow> {
        rows.iter()
            .filter(|r| filter.map_or(true, |c| r.class == c))
            .map(|r| (key(r), r.clone()))
            .collect()
    };
    let ma = pick(a, class_a);
    let mb = pick(b, class_b);
    let mut out = Vec::new();
    for (k, ra) in &ma {
        let Some(rb) = mb.get(k) else { continue };
        out.push(DeltaRow {
            load: ra.load.clone(),
            slot_us: ra.slot_us,
            point: ra.point.clone(),
            seed: ra.seed,
            baseline_class: ra.class.clone(),
            candidate_class: rb.class.clone(),
            d_mean_us: rb.mean_us - ra.mean_us,
            d_p50_us: rb.p50_us - ra.p50_us,
            d_p95_us: rb.p95_us - ra.p95_us,
            d_p99_us: rb.p99_us - ra.p99_us,
            d_max_us: rb.max_us - ra.max_us,
        });
    }
    Ok(out)
}

/// Count-weighted mean and overall max of a cell across seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pooled {
    pub count: u64,
    pub mean_us: f64,
    pub max_us: f64,
}

pub fn pool(runs: &[&RunOutput], class: TrafficClass, point: Point) -> Option<Pooled> {
    let mut count = 0u64;
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for r in runs {
        let Some(c) = r.cell(class, point) else { continue };
        count += c.count;
        sum += c.mean * c.count as f64;
        max = max.max(c.max.as_us_f64());
    }
    (count > 0).then(|| Pooled { count, mean_us: sum / count as f64 / 1e6, max_us: max })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(load: &str, class: &str, mean: i64) -> SummaryRow {
        SummaryRow {
            load: load.into(),
            slot_us: 500,
            class: class.into(),
            point: "APP".into(),
            count: 10,
            mean_us: mean,
            p50_us: mean,
            p95_us: mean,
            p99_us: mean,
            max_us: mean,
            seed: 1,
        }
    }

    #[test]
    fn identical_runs_have_zero_deltas() {
        let a = vec![row("0.25", "urllc", 1400), row("0.25", "normal", 3500)];
        let d = compare(&a, &a, None, None).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|x| x.d_mean_us == 0 && x.d_max_us == 0));
    }

    #[test]
    fn class_filters_cross_compare() {
        let a = vec![row("0.25", "urllc", 1400), row("0.25", "normal", 3500)];
        let d = compare(&a, &a, Some("normal"), Some("urllc")).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].d_mean_us, -2100);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = vec![row("0.25", "urllc", 1)];
        let b = vec![row("0.50", "urllc", 1)];
        assert!(matches!(compare(&a, &b, None, None), Err(CompareError::GridMismatch { .. })));
    }

    #[test]
    fn csv_round_trip_keeps_header() {
        let rows = vec![row("0.25", "urllc", 1400)];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("load,slot_us,class,point,count,mean_us,p50_us,p95_us,p99_us,max_us,seed\n"));
        assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);
    }
}
