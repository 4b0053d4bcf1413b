//! Telemetry aggregation over a [`RunResult`].
//!
//! Conventions:
//! - A block belongs to the day and hour of its end time. Hours are simulated
//!   time modulo 86 400 s; there is no timezone.
//! - `rkr_proxy` is sifted bytes per second of production, alignment excluded.
//!   There is no photon layer, so it stands in for the raw detection rate.
//! - `skr` is secret bytes per second of wall time: block duration for per-block
//!   values, seconds in the day for daily means.
//! - The QBER 3-day average is trailing: blocks ending in `(t - 3 d, t]`.
//! - Hourly batches are cleaned with [`remove_outliers_3sigma`] before
//!   quantiles are taken; the number removed is reported.

mod export;
pub mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::linkmodel::BlockRecord;
use crate::orchestration::SwitchCause;
use crate::simcore::RunResult;
use crate::topology::{LinkId, NodeId};

pub use export::{
    export_csv, export_json, import_csv, import_json, write_key_events, write_table, Table, CSV_SCHEMA_VERSION,
};
pub use stats::{kde_mode, quantile, quartiles, remove_outliers_3sigma};

pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const HISTOGRAM_BIN_S: f64 = 10.0;
pub const QBER_AVERAGE_WINDOW_S: f64 = 3.0 * SECONDS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RkrProxy,
    Skr,
    QberX,
    QberZ,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::RkrProxy, Metric::Skr, Metric::QberX, Metric::QberZ];

    pub fn of(self, b: &BlockRecord) -> f64 {
        match self {
            Metric::RkrProxy => {
                let t = b.producing_secs();
                if t > 0.0 {
                    b.sifted_bytes as f64 / t
                } else {
                    0.0
                }
            }
            Metric::Skr => b.secret_bytes as f64 / b.duration_secs(),
            Metric::QberX => b.qber_x,
            Metric::QberZ => b.qber_z,
        }
    }
}

/// One histogram bin `[bin_lo_s, bin_hi_s)` of block durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTimeBin {
    pub link_id: LinkId,
    pub bin_lo_s: f64,
    pub bin_hi_s: f64,
    pub count_first: u64,
    pub count_other: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRate {
    pub link_id: LinkId,
    pub day: u32,
    pub rkr_proxy_bps: f64,
    pub skr_bps: f64,
    pub sifted_bytes: u64,
    pub secret_bytes: u64,
    pub active_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QberPoint {
    pub link_id: LinkId,
    pub time_s: f64,
    pub seq: u64,
    pub qber_x: f64,
    pub qber_z: f64,
    pub avg3d_x: f64,
    pub avg3d_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyStats {
    pub link_id: LinkId,
    pub metric: Metric,
    pub hour: u8,
    /// Points kept after outlier removal.
    pub count: u64,
    pub outliers_removed: u64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceRowKind {
    Block,
    Switch,
}

/// Blocks and switches seen at one intermediate node, in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchTraceRow {
    pub node_id: NodeId,
    pub time_s: f64,
    pub kind: TraceRowKind,
    pub link_id: LinkId,
    pub from_link: Option<LinkId>,
    pub cause: Option<SwitchCause>,
    pub seq: Option<u64>,
    pub first_after_switch: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub blocktimes: Vec<BlockTimeBin>,
    pub rates_daily: Vec<DailyRate>,
    pub qber: Vec<QberPoint>,
    pub hourly_box: Vec<HourlyStats>,
    pub switch_trace: Vec<SwitchTraceRow>,
}

impl Aggregates {
    pub fn histogram<'a>(&'a self, link: &'a LinkId) -> impl Iterator<Item = &'a BlockTimeBin> + 'a {
        self.blocktimes.iter().filter(move |b| &b.link_id == link)
    }

    pub fn switch_trace_at<'a>(&'a self, node: &'a NodeId) -> impl Iterator<Item = &'a SwitchTraceRow> + 'a {
        self.switch_trace.iter().filter(move |r| &r.node_id == node)
    }

    pub fn hourly<'a>(&'a self, link: &'a LinkId, metric: Metric) -> impl Iterator<Item = &'a HourlyStats> + 'a {
        self.hourly_box
            .iter()
            .filter(move |h| &h.link_id == link && h.metric == metric)
    }
}

/// Computes every aggregate. Pure: equal input gives bit-identical output.
pub fn aggregate(result: &RunResult) -> Aggregates {
    Aggregates {
        blocktimes: block_time_histogram(result),
        rates_daily: daily_rates(result),
        qber: qber_series(result),
        hourly_box: hourly_stats(result),
        switch_trace: switch_trace(result),
    }
}

pub fn block_time_histogram(result: &RunResult) -> Vec<BlockTimeBin> {
    let mut out = Vec::new();
    for link in &result.links {
        let blocks: Vec<&BlockRecord> = result.blocks_on(&link.id).collect();
        if blocks.is_empty() {
            continue;
        }
        let bin = |b: &BlockRecord| (b.duration_secs() / HISTOGRAM_BIN_S).floor() as i64;
        let lo = blocks.iter().map(|b| bin(b)).min().expect("non-empty");
        let hi = blocks.iter().map(|b| bin(b)).max().expect("non-empty");
        let mut counts = vec![(0u64, 0u64); (hi - lo + 1) as usize];
        for b in &blocks {
            let c = &mut counts[(bin(b) - lo) as usize];
            if b.first_after_switch {
                c.0 += 1;
            } else {
                c.1 += 1;
            }
        }
        for (i, (first, other)) in counts.into_iter().enumerate() {
            let k = lo + i as i64;
            out.push(BlockTimeBin {
                link_id: link.id.clone(),
                bin_lo_s: k as f64 * HISTOGRAM_BIN_S,
                bin_hi_s: (k + 1) as f64 * HISTOGRAM_BIN_S,
                count_first: first,
                count_other: other,
            });
        }
    }
    out
}

/// Most likely duration of first-after-switch and of other blocks on a link,
/// by kernel density. `None` for a category without blocks.
pub fn block_time_modes(result: &RunResult, link: &LinkId) -> (Option<f64>, Option<f64>) {
    let (first, other): (Vec<&BlockRecord>, Vec<&BlockRecord>) =
        result.blocks_on(link).partition(|b| b.first_after_switch);
    let secs = |v: Vec<&BlockRecord>| v.iter().map(|b| b.duration_secs()).collect::<Vec<_>>();
    (kde_mode(&secs(first)), kde_mode(&secs(other)))
}

fn day_of(b: &BlockRecord) -> u32 {
    (b.end_time.as_secs_f64() / SECONDS_PER_DAY).floor() as u32
}

pub fn daily_rates(result: &RunResult) -> Vec<DailyRate> {
    let duration = result.duration.as_secs_f64();
    let days = (duration / SECONDS_PER_DAY).ceil() as u32;
    let mut out = Vec::new();
    for link in &result.links {
        let mut acc: BTreeMap<u32, (u64, u64, f64)> = (0..days).map(|d| (d, (0, 0, 0.0))).collect();
        for b in result.blocks_on(&link.id) {
            let e = acc.entry(day_of(b)).or_default();
            e.0 += b.sifted_bytes;
            e.1 += b.secret_bytes;
            e.2 += b.producing_secs();
        }
        for (day, (sifted, secret, active)) in acc {
            let day_len = (duration - f64::from(day) * SECONDS_PER_DAY).clamp(0.0, SECONDS_PER_DAY);
            out.push(DailyRate {
                link_id: link.id.clone(),
                day,
                rkr_proxy_bps: if active > 0.0 { sifted as f64 / active } else { 0.0 },
                skr_bps: if day_len > 0.0 { secret as f64 / day_len } else { 0.0 },
                sifted_bytes: sifted,
                secret_bytes: secret,
                active_s: active,
            });
        }
    }
    out
}

pub fn qber_series(result: &RunResult) -> Vec<QberPoint> {
    let mut out = Vec::new();
    for link in &result.links {
        let blocks: Vec<&BlockRecord> = result.blocks_on(&link.id).collect();
        let (mut start, mut sx, mut sz) = (0usize, 0.0f64, 0.0f64);
        for (i, b) in blocks.iter().enumerate() {
            let t = b.end_time.as_secs_f64();
            sx += b.qber_x;
            sz += b.qber_z;
            while blocks[start].end_time.as_secs_f64() <= t - QBER_AVERAGE_WINDOW_S {
                sx -= blocks[start].qber_x;
                sz -= blocks[start].qber_z;
                start += 1;
            }
            let n = (i + 1 - start) as f64;
            out.push(QberPoint {
                link_id: link.id.clone(),
                time_s: t,
                seq: b.seq,
                qber_x: b.qber_x,
                qber_z: b.qber_z,
                avg3d_x: sx / n,
                avg3d_z: sz / n,
            });
        }
    }
    out
}

fn hour_of(b: &BlockRecord) -> u8 {
    ((b.end_time.as_secs_f64() % SECONDS_PER_DAY) / 3600.0).floor() as u8
}

/// Per-block values of `metric` on `link`, grouped by hour of day.
pub fn hourly_batches(result: &RunResult, link: &LinkId, metric: Metric) -> BTreeMap<u8, Vec<f64>> {
    let mut batches: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for b in result.blocks_on(link) {
        batches.entry(hour_of(b)).or_default().push(metric.of(b));
    }
    batches
}

pub fn hourly_stats(result: &RunResult) -> Vec<HourlyStats> {
    let mut out = Vec::new();
    for link in &result.links {
        for metric in Metric::ALL {
            for (hour, values) in hourly_batches(result, &link.id, metric) {
                let (kept, removed) = remove_outliers_3sigma(&values);
                let Some((q25, median, q75)) = quartiles(&kept) else {
                    continue;
                };
                out.push(HourlyStats {
                    link_id: link.id.clone(),
                    metric,
                    hour,
                    count: kept.len() as u64,
                    outliers_removed: removed as u64,
                    q25,
                    median,
                    q75,
                });
            }
        }
    }
    out
}

/// Spread of hourly medians against the interquartile range of all cleaned
/// hourly values pooled together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlySpread {
    pub median_range: f64,
    pub pooled_iqr: f64,
}

pub fn hourly_spread(result: &RunResult, link: &LinkId, metric: Metric) -> Option<HourlySpread> {
    let mut medians = Vec::new();
    let mut pooled = Vec::new();
    for values in hourly_batches(result, link, metric).into_values() {
        let (kept, _) = remove_outliers_3sigma(&values);
        medians.extend(quantile(&kept, 0.5));
        pooled.extend(kept);
    }
    let (q25, _, q75) = quartiles(&pooled)?;
    let max = medians.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = medians.iter().copied().fold(f64::INFINITY, f64::min);
    Some(HourlySpread {
        median_range: max - min,
        pooled_iqr: q75 - q25,
    })
}

pub fn switch_trace(result: &RunResult) -> Vec<SwitchTraceRow> {
    let mut out = Vec::new();
    for node in result.intermediate_nodes() {
        let mut rows: Vec<(u64, u8, usize, SwitchTraceRow)> = Vec::new();
        let mine: Vec<&LinkId> = result
            .links
            .iter()
            .filter(|l| l.endpoints.contains(node))
            .map(|l| &l.id)
            .collect();
        for (i, b) in result.blocks.iter().enumerate().filter(|(_, b)| mine.contains(&&b.link_id)) {
            rows.push((
                b.end_time.as_micros(),
                0,
                i,
                SwitchTraceRow {
                    node_id: node.clone(),
                    time_s: b.end_time.as_secs_f64(),
                    kind: TraceRowKind::Block,
                    link_id: b.link_id.clone(),
                    from_link: None,
                    cause: None,
                    seq: Some(b.seq),
                    first_after_switch: Some(b.first_after_switch),
                },
            ));
        }
        for (i, s) in result.switches.iter().enumerate().filter(|(_, s)| &s.node_id == node) {
            rows.push((
                s.time.as_micros(),
                1,
                i,
                SwitchTraceRow {
                    node_id: node.clone(),
                    time_s: s.time.as_secs_f64(),
                    kind: TraceRowKind::Switch,
                    link_id: s.to_link.clone(),
                    from_link: s.from_link.clone(),
                    cause: Some(s.cause),
                    seq: None,
                    first_after_switch: None,
                },
            ));
        }
        rows.sort_by_key(|(t, k, i, _)| (*t, *k, *i));
        out.extend(rows.into_iter().map(|(_, _, _, r)| r));
    }
    out
}

/// Per-link totals for the command-line summary.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTotals {
    pub link_id: LinkId,
    pub blocks: usize,
    /// Secret bytes per second over the whole run.
    pub mean_skr: f64,
    /// Mean over blocks of the larger of the two QBERs.
    pub mean_qber: f64,
}

pub fn link_totals(result: &RunResult) -> Vec<LinkTotals> {
    let secs = result.duration.as_secs_f64();
    result
        .links
        .iter()
        .map(|l| {
            let blocks: Vec<&BlockRecord> = result.blocks_on(&l.id).collect();
            let secret: u64 = blocks.iter().map(|b| b.secret_bytes).sum();
            let qber: Vec<f64> = blocks.iter().map(|b| b.qber_max()).collect();
            LinkTotals {
                link_id: l.id.clone(),
                blocks: blocks.len(),
                mean_skr: if secs > 0.0 { secret as f64 / secs } else { 0.0 },
                mean_qber: stats::mean(&qber).unwrap_or(0.0),
            }
        })
        .collect()
}
