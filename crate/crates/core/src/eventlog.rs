//! Event logs: CSV ingestion, per-case grouping, summary statistics and filters.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime, SecondsFormat, TimeZone, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: DateTime<Utc>,
}

/// Time-ordered, non-empty events of a single case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    case_id: String,
    events: Vec<Event>,
}

impl Trace {
    /// Validates the events and stable-sorts them by timestamp.
    pub fn new(case_id: impl Into<String>, mut events: Vec<Event>) -> Result<Self> {
        let case_id = case_id.into();
        if events.is_empty() {
            return Err(Error::InvalidTrace {
                case_id,
                reason: "no events".into(),
            });
        }
        if let Some(e) = events.iter().find(|e| e.case_id != case_id) {
            return Err(Error::InvalidTrace {
                case_id,
                reason: format!("event belongs to case `{}`", e.case_id),
            });
        }
        if events.iter().any(|e| e.activity.is_empty()) {
            return Err(Error::InvalidTrace {
                case_id,
                reason: "empty activity label".into(),
            });
        }
        events.sort_by_key(|e| e.timestamp);
        Ok(Self { case_id, events })
    }

    /// A trace with one event per label, one minute apart starting at the Unix epoch.
    pub fn from_activities<S: AsRef<str>>(case_id: &str, activities: &[S]) -> Result<Self> {
        let events = activities
            .iter()
            .enumerate()
            .map(|(i, a)| Event {
                case_id: case_id.to_string(),
                activity: a.as_ref().to_string(),
                timestamp: Utc.timestamp_opt(60 * i as i64, 0).unwrap(),
            })
            .collect();
        Self::new(case_id, events)
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn activities(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.activity.as_str())
    }

    /// The first `k` events as a trace of the same case.
    pub fn prefix(&self, k: usize) -> Result<Trace> {
        if k == 0 || k > self.events.len() {
            return Err(Error::InvalidTrace {
                case_id: self.case_id.clone(),
                reason: format!("prefix length {k} out of range 1..={}", self.events.len()),
            });
        }
        Ok(Trace {
            case_id: self.case_id.clone(),
            events: self.events[..k].to_vec(),
        })
    }
}

/// A set of traces with unique case ids, kept in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventLog {
    traces: Vec<Trace>,
}

impl EventLog {
    pub fn new(traces: Vec<Trace>) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &traces {
            if !seen.insert(t.case_id.as_str()) {
                return Err(Error::DuplicateCase(t.case_id.clone()));
            }
        }
        Ok(Self { traces })
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn case_ids(&self) -> Vec<String> {
        self.traces.iter().map(|t| t.case_id.clone()).collect()
    }

    pub fn max_trace_len(&self) -> usize {
        self.traces.iter().map(Trace::len).max().unwrap_or(0)
    }

    /// The traces whose case id is in `case_ids`, in the order given.
    pub fn subset(&self, case_ids: &[String]) -> EventLog {
        let by_id: HashMap<&str, &Trace> = self
            .traces
            .iter()
            .map(|t| (t.case_id.as_str(), t))
            .collect();
        let traces = case_ids
            .iter()
            .filter_map(|c| by_id.get(c.as_str()).map(|t| (*t).clone()))
            .collect();
        EventLog { traces }
    }
}

/// Column mapping and dialect of a CSV event log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogFormat {
    pub case_col: String,
    pub activity_col: String,
    pub time_col: String,
    /// Explicit chrono format string; when `None` the built-in formats are tried.
    pub time_format: Option<String>,
    pub delimiter: u8,
}

impl Default for LogFormat {
    fn default() -> Self {
        Self {
            case_col: "case".into(),
            activity_col: "activity".into(),
            time_col: "timestamp".into(),
            time_format: None,
            delimiter: b',',
        }
    }
}

fn truncate_to_millis(t: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(t.timestamp_millis()).unwrap_or(t)
}

/// Parses `YYYY-MM-DD HH:MM:SS` or ISO-8601 (optional fraction and offset).
/// Values without an offset are taken as UTC.
pub fn parse_timestamp(raw: &str, format: Option<&str>) -> Option<DateTime<Utc>> {
    let s = raw.trim();
    if let Some(fmt) = format {
        if let Ok(t) = DateTime::parse_from_str(s, fmt) {
            return Some(truncate_to_millis(t.with_timezone(&Utc)));
        }
        return NaiveDateTime::parse_from_str(s, fmt)
            .ok()
            .map(|n| truncate_to_millis(n.and_utc()));
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(truncate_to_millis(t.with_timezone(&Utc)));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(n) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(truncate_to_millis(n.and_utc()));
        }
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f%:z", "%Y-%m-%d %H:%M:%S%.f%z"] {
        if let Ok(t) = DateTime::parse_from_str(s, fmt) {
            return Some(truncate_to_millis(t.with_timezone(&Utc)));
        }
    }
    None
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Reads a CSV event log and groups its rows into traces.
///
/// Cases keep their order of first appearance; events inside a case are
/// stable-sorted by timestamp so ties keep file order.
pub fn parse_log<R: Read>(source: R, format: &LogFormat) -> Result<EventLog> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.into()))
    };
    let case_idx = column(&format.case_col)?;
    let act_idx = column(&format.activity_col)?;
    let time_idx = column(&format.time_col)?;

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Event>> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i as u64 + 1;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let case_id = field(case_idx).to_string();
        let activity = field(act_idx).to_string();
        if activity.is_empty() {
            return Err(Error::EmptyActivity { row });
        }
        let raw_time = field(time_idx);
        let timestamp =
            parse_timestamp(raw_time, format.time_format.as_deref()).ok_or_else(|| {
                Error::BadTimestamp {
                    row,
                    value: raw_time.to_string(),
                }
            })?;
        let events = groups.entry(case_id.clone()).or_insert_with(|| {
            order.push(case_id.clone());
            Vec::new()
        });
        events.push(Event {
            case_id,
            activity,
            timestamp,
        });
    }
    if order.is_empty() {
        return Err(Error::EmptyLog);
    }
    let traces = order
        .into_iter()
        .map(|c| {
            let events = groups.remove(&c).unwrap_or_default();
            Trace::new(c, events)
        })
        .collect::<Result<Vec<_>>>()?;
    EventLog::new(traces)
}

pub fn read_log_file(path: &std::path::Path, format: &LogFormat) -> Result<EventLog> {
    let file = std::fs::File::open(path)?;
    parse_log(std::io::BufReader::new(file), format)
}

/// Writes the log as CSV using `format`'s column names; timestamps are RFC 3339 with milliseconds.
pub fn write_log<W: Write>(log: &EventLog, sink: W, format: &LogFormat) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(format.delimiter)
        .from_writer(sink);
    w.write_record([&format.case_col, &format.activity_col, &format.time_col])?;
    for t in log.traces() {
        for e in t.events() {
            w.write_record([
                e.case_id.as_str(),
                e.activity.as_str(),
                &format_timestamp(&e.timestamp),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `[min; max; mean; median]` of a per-instance count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountSummary {
    pub min: usize,
    pub max: usize,
    /// Rounded to one decimal.
    pub mean: f64,
    pub median: f64,
}

impl CountSummary {
    fn of(values: &mut [usize]) -> Self {
        values.sort_unstable();
        let n = values.len();
        let mean = values.iter().sum::<usize>() as f64 / n as f64;
        let median = if n % 2 == 1 {
            values[n / 2] as f64
        } else {
            (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
        };
        Self {
            min: values[0],
            max: values[n - 1],
            mean: (mean * 10.0).round() / 10.0,
            median,
        }
    }
}

impl fmt::Display for CountSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{};{};{:.1};{}]",
            self.min, self.max, self.mean, self.median
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogStats {
    pub n_instances: usize,
    pub n_variants: usize,
    pub n_events: usize,
    /// Distinct data labels; the artificial end symbol is not counted.
    pub n_activities: usize,
    pub events_per_instance: CountSummary,
    pub activities_per_instance: CountSummary,
}

impl LogStats {
    pub const HEADER: [&'static str; 7] = [
        "Event log",
        "#instances",
        "# instance variants",
        "# events",
        "# activities",
        "# events per instance",
        "# activities per instance",
    ];

    /// One table row under [`LogStats::HEADER`].
    pub fn row(&self, name: &str) -> [String; 7] {
        [
            name.to_string(),
            self.n_instances.to_string(),
            self.n_variants.to_string(),
            self.n_events.to_string(),
            self.n_activities.to_string(),
            self.events_per_instance.to_string(),
            self.activities_per_instance.to_string(),
        ]
    }

    /// Pipe-separated table with a header row.
    pub fn table(&self, name: &str) -> String {
        let row = self.row(name);
        let widths: Vec<usize> = Self::HEADER
            .iter()
            .zip(&row)
            .map(|(h, r)| h.len().max(r.len()))
            .collect();
        let line = |cells: &[&str]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!(" {c:<w$} "))
                .collect();
            format!("|{}|", padded.join("|"))
        };
        let row_refs: Vec<&str> = row.iter().map(String::as_str).collect();
        let sep: Vec<String> = widths.iter().map(|w| "-".repeat(w + 2)).collect();
        format!(
            "{}\n|{}|\n{}\n  [min; max; mean; median]\n",
            line(&Self::HEADER),
            sep.join("|"),
            line(&row_refs)
        )
    }
}

pub fn compute_stats(log: &EventLog) -> Result<LogStats> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut variants: HashSet<Vec<&str>> = HashSet::new();
    let mut labels: HashSet<&str> = HashSet::new();
    let mut lengths = Vec::with_capacity(log.len());
    let mut distinct = Vec::with_capacity(log.len());
    for t in log.traces() {
        let seq: Vec<&str> = t.activities().collect();
        labels.extend(seq.iter().copied());
        distinct.push(seq.iter().collect::<HashSet<_>>().len());
        lengths.push(seq.len());
        variants.insert(seq);
    }
    Ok(LogStats {
        n_instances: log.len(),
        n_variants: variants.len(),
        n_events: log.n_events(),
        n_activities: labels.len(),
        events_per_instance: CountSummary::of(&mut lengths),
        activities_per_instance: CountSummary::of(&mut distinct),
    })
}

/// Drops traces longer than `max_trace_len`, then keeps a seeded uniform sample
/// of `floor(sample_fraction * n)` of the rest, preserving log order.
pub fn filter_log(
    log: &EventLog,
    max_trace_len: usize,
    sample_fraction: f64,
    seed: u64,
) -> Result<EventLog> {
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "sample fraction must be in (0, 1], got {sample_fraction}"
        )));
    }
    let kept: Vec<&Trace> = log
        .traces()
        .iter()
        .filter(|t| t.len() <= max_trace_len)
        .collect();
    let n = kept.len();
    let target = ((sample_fraction * n as f64) + 1e-9).floor() as usize;
    let target = target.min(n);
    let traces = if target == n {
        kept.into_iter().cloned().collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, n, target).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| kept[i].clone()).collect()
    };
    Ok(EventLog { traces })
}
