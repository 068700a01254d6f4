use std::fmt::Write as _;

use crate::learner::{MetricLog, MetricRow};

pub const AGGREGATE_HEADER: &str = "# monoq-aggregate v1";

/// Metrics summarised across seeds, in column order.
pub const AGGREGATED_METRICS: [&str; 4] =
    ["eval_return_mean", "eval_return_median", "eval_success_rate", "max_qtot_at_s0"];

fn metric(row: &MetricRow, i: usize) -> Option<f64> {
    match i {
        0 => Some(row.eval_return_mean),
        1 => Some(row.eval_return_median),
        2 => Some(row.eval_success_rate),
        _ => row.max_qtot_at_s0,
    }
}

/// Nearest-rank percentile of an ascending slice: the value at 1-based rank
/// `ceil(p / 100 · n)`, clamped to at least 1.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of nothing");
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quartiles {
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self { p25: nearest_rank(&v, 25.0), median: nearest_rank(&v, 50.0), p75: nearest_rank(&v, 75.0) })
    }
}

/// One evaluation point across runs. Rows are aligned by position in each
/// log, since episode lengths make the exact env step vary between seeds;
/// `env_step` is the nearest-rank median of the runs' steps.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub env_step: u64,
    pub n_runs: usize,
    pub metrics: [Option<Quartiles>; 4],
}

pub fn aggregate(logs: &[MetricLog]) -> Vec<AggregateRow> {
    let rows = logs.iter().map(|l| l.rows.len()).max().unwrap_or(0);
    (0..rows)
        .map(|i| {
            let present: Vec<&MetricRow> = logs.iter().filter_map(|l| l.rows.get(i)).collect();
            let mut steps: Vec<u64> = present.iter().map(|r| r.env_step).collect();
            steps.sort_unstable();
            let rank = (steps.len() as f64 * 0.5).ceil() as usize;
            let env_step = steps[rank.clamp(1, steps.len()) - 1];
            let metrics = std::array::from_fn(|m| {
                let vals: Vec<f64> = present.iter().filter_map(|r| metric(r, m)).collect();
                Quartiles::of(&vals)
            });
            AggregateRow { env_step, n_runs: present.len(), metrics }
        })
        .collect()
}

pub fn aggregate_columns() -> String {
    let mut cols = vec!["env_step".to_string(), "n_runs".to_string()];
    for m in AGGREGATED_METRICS {
        cols.extend([format!("{m}_p25"), format!("{m}_median"), format!("{m}_p75")]);
    }
    cols.join(",")
}

pub fn aggregate_to_csv(rows: &[AggregateRow]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n{}\n", aggregate_columns());
    for r in rows {
        let _ = write!(out, "{},{}", r.env_step, r.n_runs);
        for q in &r.metrics {
            match q {
                Some(q) => {
                    let _ = write!(out, ",{},{},{}", q.p25, q.median, q.p75);
                }
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    out
}
