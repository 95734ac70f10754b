//! Per-connection tables and daily series built from round logs.

use std::collections::{BTreeMap, BTreeSet};

use super::rules::{eliminate_3sigma, mean, mean_qber_with_threshold, SigmaPolicy};
use super::StatsError;
use crate::pipeline::{LogRecord, DEFAULT_QBER_THRESHOLD};
use crate::topology::{path_loss, ConnectionId, Route, Topology};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    /// Length of one pairing epoch; rounds in the same epoch form one
    /// pairing process.
    pub epoch_s: f64,
    pub round_s: f64,
    pub qber_threshold: f64,
    pub sigma: SigmaPolicy,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            epoch_s: 1800.0,
            round_s: 1.0,
            qber_threshold: DEFAULT_QBER_THRESHOLD,
            sigma: SigmaPolicy::default(),
        }
    }
}

impl ReportOptions {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("epoch_s", self.epoch_s), ("round_s", self.round_s)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    fn epoch_of(&self, t: f64) -> u64 {
        (t / self.epoch_s + 1e-9).floor() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleKind {
    KeyRateKbps,
    QberFraction,
}

/// Ordered `(timestamp_s, value)` samples for one connection.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSeries {
    pub connection: ConnectionId,
    pub kind: SampleKind,
    samples: Vec<(f64, f64)>,
}

impl SampleSeries {
    pub fn new(
        connection: ConnectionId,
        kind: SampleKind,
        samples: Vec<(f64, f64)>,
    ) -> Result<Self, StatsError> {
        if samples
            .iter()
            .any(|(t, v)| !t.is_finite() || !v.is_finite())
        {
            return Err(StatsError::NonFinite);
        }
        if samples.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(StatsError::Unordered);
        }
        Ok(Self {
            connection,
            kind,
            samples,
        })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }
}

fn by_connection(records: &[LogRecord]) -> BTreeMap<ConnectionId, Vec<&LogRecord>> {
    let mut map: BTreeMap<ConnectionId, Vec<&LogRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.connection.clone()).or_default().push(r);
    }
    map
}

/// One key-rate sample per pairing process: delivered bits over the time
/// the process spent in rounds, in kbps, stamped with the first round.
pub fn key_rate_samples(
    records: &[LogRecord],
    opts: &ReportOptions,
) -> BTreeMap<ConnectionId, SampleSeries> {
    by_connection(records)
        .into_iter()
        .map(|(c, recs)| {
            let mut per_epoch: BTreeMap<u64, (f64, u64, u64)> = BTreeMap::new();
            for r in recs {
                let e =
                    per_epoch
                        .entry(opts.epoch_of(r.timestamp_s))
                        .or_insert((r.timestamp_s, 0, 0));
                e.0 = e.0.min(r.timestamp_s);
                e.1 += r.key_bits_out;
                e.2 += 1;
            }
            let mut samples: Vec<(f64, f64)> = per_epoch
                .into_values()
                .map(|(t, bits, rounds)| (t, bits as f64 / (rounds as f64 * opts.round_s) / 1000.0))
                .collect();
            samples.sort_by(|a, b| a.0.total_cmp(&b.0));
            let series = SampleSeries::new(c.clone(), SampleKind::KeyRateKbps, samples)
                .expect("finite, sorted");
            (c, series)
        })
        .collect()
}

/// Measured per-round QBER values; rounds that never measured one are
/// left out.
pub fn qber_samples(records: &[LogRecord]) -> BTreeMap<ConnectionId, SampleSeries> {
    by_connection(records)
        .into_iter()
        .map(|(c, recs)| {
            let mut samples: Vec<(f64, f64)> = recs
                .iter()
                .filter(|r| r.action.measured_qber())
                .map(|r| (r.timestamp_s, r.qber))
                .collect();
            samples.sort_by(|a, b| a.0.total_cmp(&b.0));
            let series = SampleSeries::new(c.clone(), SampleKind::QberFraction, samples)
                .expect("finite, sorted");
            (c, series)
        })
        .collect()
}

/// Buckets samples by simulated day and applies 3-sigma elimination in each
/// bucket. `None` marks a day without samples.
pub fn daily_series(
    samples: &[(f64, f64)],
    day_s: f64,
    days: usize,
    sigma: &SigmaPolicy,
) -> Vec<Option<f64>> {
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); days];
    for &(t, v) in samples {
        let d = (t / day_s).floor();
        if d >= 0.0 && (d as usize) < days {
            buckets[d as usize].push(v);
        }
    }
    buckets
        .into_iter()
        .map(|b| {
            // Sort so the floating-point sum does not depend on input order.
            let mut b = b;
            b.sort_by(f64::total_cmp);
            eliminate_3sigma(&b, sigma).ok().map(|k| mean(&k))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DailyRow {
    pub day: usize,
    pub connection: ConnectionId,
    pub key_rate_kbps: Option<f64>,
}

/// Daily key-rate table, `days` rows per connection in the log.
pub fn daily_key_rates(records: &[LogRecord], opts: &ReportOptions, days: usize) -> Vec<DailyRow> {
    let mut rows = Vec::new();
    for (c, series) in key_rate_samples(records, opts) {
        for (day, v) in daily_series(series.samples(), SECONDS_PER_DAY, days, &opts.sigma)
            .into_iter()
            .enumerate()
        {
            rows.push(DailyRow {
                day,
                connection: c.clone(),
                key_rate_kbps: v,
            });
        }
    }
    rows
}

/// Days covered by a log: one past the day of the last record.
pub fn days_in_log(records: &[LogRecord]) -> usize {
    records
        .iter()
        .map(|r| (r.timestamp_s / SECONDS_PER_DAY).floor() as usize + 1)
        .max()
        .unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionReport {
    pub connection: ConnectionId,
    pub route: String,
    /// Absent when some segment on the route has no recorded length.
    pub length_km: Option<f64>,
    pub loss_db: f64,
    pub pairing_count: u64,
    pub key_rate_kbps: Option<f64>,
    pub qber: Option<f64>,
}

/// One row per connection in the log.
pub fn build_report(
    records: &[LogRecord],
    topology: &Topology,
    opts: &ReportOptions,
) -> Result<Vec<ConnectionReport>, StatsError> {
    let rates = key_rate_samples(records, opts);
    let qbers = qber_samples(records);
    let mut rows = Vec::new();
    for (c, recs) in by_connection(records) {
        let route_text = recs[0].route.clone();
        let route =
            Route::parse(&route_text).ok_or_else(|| StatsError::BadRoute(route_text.clone()))?;
        let loss = path_loss(topology, &route).map_err(|e| StatsError::Topology(e.to_string()))?;
        let length_km = route
            .segments()
            .map(|k| {
                let (a, b) = k.endpoints();
                topology.segment(a, b).and_then(|s| s.length_km)
            })
            .sum::<Option<f64>>();
        let epochs: BTreeSet<u64> = recs.iter().map(|r| opts.epoch_of(r.timestamp_s)).collect();
        let rate_values = rates[&c].values();
        let key_rate_kbps = if rate_values.is_empty() {
            None
        } else {
            Some(mean(&eliminate_3sigma(&rate_values, &opts.sigma)?))
        };
        let q = qbers[&c].values();
        let qber = if q.is_empty() {
            None
        } else {
            mean_qber_with_threshold(&q, opts.qber_threshold)?
        };
        rows.push(ConnectionReport {
            connection: c,
            route: route_text,
            length_km,
            loss_db: loss.total_db,
            pairing_count: epochs.len() as u64,
            key_rate_kbps,
            qber,
        });
    }
    Ok(rows)
}

pub const REPORT_HEADER: [&str; 7] = [
    "connection",
    "route",
    "length_km",
    "loss_db",
    "pairing_count",
    "key_rate_kbps",
    "qber",
];

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or(String::new(), |x| format!("{x:.digits$}"))
}

pub fn render_report_csv(rows: &[ConnectionReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.connection.to_string(),
            r.route.clone(),
            opt(r.length_km, 2),
            format!("{:.2}", r.loss_db),
            r.pairing_count.to_string(),
            opt(r.key_rate_kbps, 3),
            opt(r.qber, 6),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn parse_opt(s: &str, line: usize, name: &str) -> Result<Option<f64>, StatsError> {
    if s.is_empty() {
        return Ok(None);
    }
    parse_num(s, line, name).map(Some)
}

fn parse_num(s: &str, line: usize, name: &str) -> Result<f64, StatsError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| StatsError::Csv {
            line,
            message: format!("bad {name} `{s}`"),
        })
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ConnectionReport>, StatsError> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| StatsError::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(REPORT_HEADER) {
        return Err(StatsError::Csv {
            line: 1,
            message: "unexpected header".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| StatsError::Csv {
            line,
            message: e.to_string(),
        })?;
        let f = |k: usize| rec.get(k).unwrap_or("");
        rows.push(ConnectionReport {
            connection: f(0).parse().map_err(|e| StatsError::Csv {
                line,
                message: format!("{e}"),
            })?,
            route: f(1).to_string(),
            length_km: parse_opt(f(2), line, "length_km")?,
            loss_db: parse_num(f(3), line, "loss_db")?,
            pairing_count: f(4).parse().map_err(|_| StatsError::Csv {
                line,
                message: format!("bad pairing_count `{}`", f(4)),
            })?,
            key_rate_kbps: parse_opt(f(5), line, "key_rate_kbps")?,
            qber: parse_opt(f(6), line, "qber")?,
        });
    }
    Ok(rows)
}

pub fn render_daily_csv(rows: &[DailyRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["day", "connection", "key_rate_kbps"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.day.to_string(),
            r.connection.to_string(),
            opt(r.key_rate_kbps, 3),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
