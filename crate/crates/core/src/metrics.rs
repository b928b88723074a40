//! Per-run counters, the CSV row format and the line-delimited trace.
//!
//! Every quantity in [`MetricsRecord`] is an integer (nanoseconds, counts,
//! bytes) so two runs with the same seed serialize identically. Means and
//! probabilities are derived on demand.

use std::fmt::Write as _;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beamtrack::TrackingMode;
use crate::discovery::DiscoveryMode;
use crate::mac_control::AccessCategory;
use crate::propagation::Band;
use crate::sim::{NodeId, SimTime};

/// First line of every metrics CSV; bump when the column set changes.
pub const CSV_VERSION_LINE: &str = "# cogcell-metrics v1";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("unknown trace event kind `{0}`")]
    UnknownKind(String),
    #[error("malformed trace line `{0}`")]
    Malformed(String),
    #[error("missing or unexpected CSV version line")]
    Version,
    #[error("derived column `{0}` does not match its counters")]
    DerivedMismatch(&'static str),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Everything the simulator can report. Matching is exhaustive so a new
/// variant must be handled by the collector and the trace parser.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MetricEvent {
    FrameGenerated {
        cat: AccessCategory,
    },
    AccessAttempt {
        cat: AccessCategory,
    },
    BackoffSlot {
        cat: AccessCategory,
    },
    Collision {
        cat: AccessCategory,
    },
    AccessGrant {
        cat: AccessCategory,
        delay: SimTime,
    },
    FrameDelivered {
        cat: AccessCategory,
    },
    FrameDropped {
        cat: AccessCategory,
    },
    Discovery {
        mode: DiscoveryMode,
        elapsed: SimTime,
        overhead: SimTime,
    },
    Rebeam {
        mode: TrackingMode,
        cost: SimTime,
    },
    BytesOffered {
        bytes: u64,
    },
    BytesDelivered {
        band: Band,
        bytes: u64,
    },
    Handover,
    WifiAssociation,
    ControlFrame60,
    Payload24While60 {
        bytes: u64,
    },
    FallbackSwitch {
        to_24: bool,
    },
    SessionComplete {
        latency: SimTime,
    },
    RunEnd {
        req60_in_flight: u64,
        wifi24_in_flight: u64,
        bytes_pending: u64,
    },
}

fn cat_name(c: AccessCategory) -> &'static str {
    match c {
        AccessCategory::Req60 => "REQ60",
        AccessCategory::Wifi24 => "WIFI24",
    }
}

fn parse_cat(s: &str) -> Option<AccessCategory> {
    match s {
        "REQ60" => Some(AccessCategory::Req60),
        "WIFI24" => Some(AccessCategory::Wifi24),
        _ => None,
    }
}

impl MetricEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            MetricEvent::FrameGenerated { .. } => "frame_generated",
            MetricEvent::AccessAttempt { .. } => "access_attempt",
            MetricEvent::BackoffSlot { .. } => "backoff_slot",
            MetricEvent::Collision { .. } => "collision",
            MetricEvent::AccessGrant { .. } => "access_grant",
            MetricEvent::FrameDelivered { .. } => "frame_delivered",
            MetricEvent::FrameDropped { .. } => "frame_dropped",
            MetricEvent::Discovery { .. } => "discovery",
            MetricEvent::Rebeam { .. } => "rebeam",
            MetricEvent::BytesOffered { .. } => "bytes_offered",
            MetricEvent::BytesDelivered { .. } => "bytes_delivered",
            MetricEvent::Handover => "handover",
            MetricEvent::WifiAssociation => "wifi_association",
            MetricEvent::ControlFrame60 => "control_frame_60",
            MetricEvent::Payload24While60 { .. } => "payload_24_while_60",
            MetricEvent::FallbackSwitch { .. } => "fallback_switch",
            MetricEvent::SessionComplete { .. } => "session_complete",
            MetricEvent::RunEnd { .. } => "run_end",
        }
    }

    fn fields(&self) -> String {
        match *self {
            MetricEvent::FrameGenerated { cat }
            | MetricEvent::AccessAttempt { cat }
            | MetricEvent::BackoffSlot { cat }
            | MetricEvent::Collision { cat }
            | MetricEvent::FrameDelivered { cat }
            | MetricEvent::FrameDropped { cat } => format!("cat={}", cat_name(cat)),
            MetricEvent::AccessGrant { cat, delay } => {
                format!("cat={} delay_ns={}", cat_name(cat), delay.as_nanos())
            }
            MetricEvent::Discovery { mode, elapsed, overhead } => format!(
                "mode={} elapsed_ns={} overhead_ns={}",
                mode.as_str(),
                elapsed.as_nanos(),
                overhead.as_nanos()
            ),
            MetricEvent::Rebeam { mode, cost } => {
                format!("mode={} cost_ns={}", mode.as_str(), cost.as_nanos())
            }
            MetricEvent::BytesOffered { bytes } | MetricEvent::Payload24While60 { bytes } => {
                format!("bytes={bytes}")
            }
            MetricEvent::BytesDelivered { band, bytes } => {
                let b = match band {
                    Band::Wifi24 => "24",
                    Band::Mmwave60 => "60",
                };
                format!("band={b} bytes={bytes}")
            }
            MetricEvent::Handover | MetricEvent::WifiAssociation | MetricEvent::ControlFrame60 => {
                String::new()
            }
            MetricEvent::FallbackSwitch { to_24 } => format!("to_24={}", to_24 as u8),
            MetricEvent::SessionComplete { latency } => format!("latency_ns={}", latency.as_nanos()),
            MetricEvent::RunEnd { req60_in_flight, wifi24_in_flight, bytes_pending } => format!(
                "req60_in_flight={req60_in_flight} wifi24_in_flight={wifi24_in_flight} bytes_pending={bytes_pending}"
            ),
        }
    }

    /// `<time_ns> <node> <kind> [key=value ...]`
    pub fn trace_line(&self, time: SimTime, node: NodeId) -> String {
        let fields = self.fields();
        if fields.is_empty() {
            format!("{} {} {}", time.as_nanos(), node, self.kind())
        } else {
            format!("{} {} {} {}", time.as_nanos(), node, self.kind(), fields)
        }
    }

    pub fn parse_trace_line(line: &str) -> Result<(SimTime, NodeId, MetricEvent), MetricsError> {
        let bad = || MetricsError::Malformed(line.to_string());
        let mut parts = line.split_whitespace();
        let time = parts
            .next()
            .and_then(|t| t.parse::<u64>().ok())
            .ok_or_else(bad)?;
        let node = parts
            .next()
            .and_then(|t| t.parse::<NodeId>().ok())
            .ok_or_else(bad)?;
        let kind = parts.next().ok_or_else(bad)?;
        let kv: Vec<(&str, &str)> = parts
            .map(|p| p.split_once('=').ok_or_else(bad))
            .collect::<Result<_, _>>()?;
        let get = |k: &str| {
            kv.iter()
                .find(|(key, _)| *key == k)
                .map(|(_, v)| *v)
                .ok_or_else(bad)
        };
        let num = |k: &str| get(k).and_then(|v| u64::from_str(v).map_err(|_| bad()));
        let cat = || get("cat").and_then(|v| parse_cat(v).ok_or_else(bad));
        let ev = match kind {
            "frame_generated" => MetricEvent::FrameGenerated { cat: cat()? },
            "access_attempt" => MetricEvent::AccessAttempt { cat: cat()? },
            "backoff_slot" => MetricEvent::BackoffSlot { cat: cat()? },
            "collision" => MetricEvent::Collision { cat: cat()? },
            "access_grant" => MetricEvent::AccessGrant {
                cat: cat()?,
                delay: SimTime::from_nanos(num("delay_ns")?),
            },
            "frame_delivered" => MetricEvent::FrameDelivered { cat: cat()? },
            "frame_dropped" => MetricEvent::FrameDropped { cat: cat()? },
            "discovery" => MetricEvent::Discovery {
                mode: get("mode")?.parse().map_err(|_| bad())?,
                elapsed: SimTime::from_nanos(num("elapsed_ns")?),
                overhead: SimTime::from_nanos(num("overhead_ns")?),
            },
            "rebeam" => MetricEvent::Rebeam {
                mode: get("mode")?.parse().map_err(|_| bad())?,
                cost: SimTime::from_nanos(num("cost_ns")?),
            },
            "bytes_offered" => MetricEvent::BytesOffered {
                bytes: num("bytes")?,
            },
            "bytes_delivered" => MetricEvent::BytesDelivered {
                band: match get("band")? {
                    "24" => Band::Wifi24,
                    "60" => Band::Mmwave60,
                    _ => return Err(bad()),
                },
                bytes: num("bytes")?,
            },
            "handover" => MetricEvent::Handover,
            "wifi_association" => MetricEvent::WifiAssociation,
            "control_frame_60" => MetricEvent::ControlFrame60,
            "payload_24_while_60" => MetricEvent::Payload24While60 {
                bytes: num("bytes")?,
            },
            "fallback_switch" => MetricEvent::FallbackSwitch {
                to_24: num("to_24")? != 0,
            },
            "session_complete" => MetricEvent::SessionComplete {
                latency: SimTime::from_nanos(num("latency_ns")?),
            },
            "run_end" => MetricEvent::RunEnd {
                req60_in_flight: num("req60_in_flight")?,
                wifi24_in_flight: num("wifi24_in_flight")?,
                bytes_pending: num("bytes_pending")?,
            },
            other => return Err(MetricsError::UnknownKind(other.to_string())),
        };
        Ok((SimTime::from_nanos(time), node, ev))
    }
}

/// Counters for one access category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CategoryCounters {
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub attempts: u64,
    pub slots: u64,
    pub collisions: u64,
    pub delay_sum_ns: u64,
    pub delay_count: u64,
}

impl CategoryCounters {
    pub fn mean_access_delay_us(&self) -> f64 {
        if self.delay_count == 0 {
            0.0
        } else {
            self.delay_sum_ns as f64 / self.delay_count as f64 / 1e3
        }
    }

    /// Probability that a backlogged station transmits in a given contention slot.
    pub fn transmission_probability(&self) -> f64 {
        ratio(self.attempts, self.slots)
    }

    /// Fraction of attempts that ended in a successful exchange.
    pub fn success_ratio(&self) -> f64 {
        ratio(self.delivered, self.attempts)
    }

    pub fn conserved(&self) -> bool {
        self.generated == self.delivered + self.dropped + self.in_flight
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Aggregated result of one run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub seed: u64,
    pub req60_generated: u64,
    pub req60_delivered: u64,
    pub req60_dropped: u64,
    pub req60_in_flight: u64,
    pub req60_attempts: u64,
    pub req60_slots: u64,
    pub req60_collisions: u64,
    pub req60_delay_sum_ns: u64,
    pub req60_delay_count: u64,
    pub wifi24_generated: u64,
    pub wifi24_delivered: u64,
    pub wifi24_dropped: u64,
    pub wifi24_in_flight: u64,
    pub wifi24_attempts: u64,
    pub wifi24_slots: u64,
    pub wifi24_collisions: u64,
    pub wifi24_delay_sum_ns: u64,
    pub wifi24_delay_count: u64,
    pub standalone_discovered: u64,
    pub standalone_time_sum_ns: u64,
    pub assisted_discovered: u64,
    pub assisted_time_sum_ns: u64,
    pub assisted_overhead_sum_ns: u64,
    pub rebeam_sensor_off: u64,
    pub rebeam_sensor_on: u64,
    pub rebeam_sensor_off_cost_ns: u64,
    pub rebeam_sensor_on_cost_ns: u64,
    pub bytes_offered: u64,
    pub bytes_60g: u64,
    pub bytes_24g: u64,
    pub bytes_pending: u64,
    pub handovers: u64,
    pub wifi_associations: u64,
    pub control_frames_60g: u64,
    pub payload_24g_while_60g: u64,
    pub fallback_switches: u64,
    pub sessions: u64,
    pub session_latency_sum_ns: u64,
    pub session_latency_p95_ns: u64,
    pub valid: bool,
    pub diagnostic: String,
}

impl MetricsRecord {
    pub fn category(&self, cat: AccessCategory) -> CategoryCounters {
        match cat {
            AccessCategory::Req60 => CategoryCounters {
                generated: self.req60_generated,
                delivered: self.req60_delivered,
                dropped: self.req60_dropped,
                in_flight: self.req60_in_flight,
                attempts: self.req60_attempts,
                slots: self.req60_slots,
                collisions: self.req60_collisions,
                delay_sum_ns: self.req60_delay_sum_ns,
                delay_count: self.req60_delay_count,
            },
            AccessCategory::Wifi24 => CategoryCounters {
                generated: self.wifi24_generated,
                delivered: self.wifi24_delivered,
                dropped: self.wifi24_dropped,
                in_flight: self.wifi24_in_flight,
                attempts: self.wifi24_attempts,
                slots: self.wifi24_slots,
                collisions: self.wifi24_collisions,
                delay_sum_ns: self.wifi24_delay_sum_ns,
                delay_count: self.wifi24_delay_count,
            },
        }
    }

    fn category_mut(&mut self, cat: AccessCategory) -> CategoryMut<'_> {
        match cat {
            AccessCategory::Req60 => CategoryMut {
                generated: &mut self.req60_generated,
                delivered: &mut self.req60_delivered,
                dropped: &mut self.req60_dropped,
                attempts: &mut self.req60_attempts,
                slots: &mut self.req60_slots,
                collisions: &mut self.req60_collisions,
                delay_sum_ns: &mut self.req60_delay_sum_ns,
                delay_count: &mut self.req60_delay_count,
            },
            AccessCategory::Wifi24 => CategoryMut {
                generated: &mut self.wifi24_generated,
                delivered: &mut self.wifi24_delivered,
                dropped: &mut self.wifi24_dropped,
                attempts: &mut self.wifi24_attempts,
                slots: &mut self.wifi24_slots,
                collisions: &mut self.wifi24_collisions,
                delay_sum_ns: &mut self.wifi24_delay_sum_ns,
                delay_count: &mut self.wifi24_delay_count,
            },
        }
    }

    pub fn mean_discovery_us(&self, mode: DiscoveryMode) -> f64 {
        let (sum, n) = match mode {
            DiscoveryMode::Standalone => (self.standalone_time_sum_ns, self.standalone_discovered),
            DiscoveryMode::Assisted => (self.assisted_time_sum_ns, self.assisted_discovered),
        };
        if n == 0 {
            0.0
        } else {
            sum as f64 / n as f64 / 1e3
        }
    }

    pub fn rebeam_count(&self, mode: TrackingMode) -> u64 {
        match mode {
            TrackingMode::SensorOff => self.rebeam_sensor_off,
            TrackingMode::SensorOn => self.rebeam_sensor_on,
        }
    }

    pub fn mean_session_latency_us(&self) -> f64 {
        if self.sessions == 0 {
            0.0
        } else {
            self.session_latency_sum_ns as f64 / self.sessions as f64 / 1e3
        }
    }

    pub fn bytes_conserved(&self) -> bool {
        self.bytes_offered == self.bytes_60g + self.bytes_24g + self.bytes_pending
    }

    /// Conservation identities that must hold at serialization time.
    pub fn check_identities(&self) -> Result<(), String> {
        for cat in AccessCategory::ALL {
            let c = self.category(cat);
            if !c.conserved() {
                return Err(format!(
                    "{}: generated {} != delivered {} + dropped {} + in_flight {}",
                    cat_name(cat),
                    c.generated,
                    c.delivered,
                    c.dropped,
                    c.in_flight
                ));
            }
            if c.attempts > c.slots {
                return Err(format!(
                    "{}: attempts exceed contention slots",
                    cat_name(cat)
                ));
            }
        }
        if !self.bytes_conserved() {
            return Err(format!(
                "bytes offered {} != 60g {} + 24g {} + pending {}",
                self.bytes_offered, self.bytes_60g, self.bytes_24g, self.bytes_pending
            ));
        }
        Ok(())
    }

    /// Human-readable summary with derived quantities.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "run {} (seed {}){}",
            self.run_id,
            self.seed,
            if self.valid { "" } else { " INVALID" }
        );
        for cat in AccessCategory::ALL {
            let c = self.category(cat);
            let _ = writeln!(
                s,
                "  {:<6} frames {:>6} delivered {:>6} dropped {:>4}  mean access delay {:>10.3} us  tx prob {:.4}  success {:.4}",
                cat_name(cat),
                c.generated,
                c.delivered,
                c.dropped,
                c.mean_access_delay_us(),
                c.transmission_probability(),
                c.success_ratio()
            );
        }
        if self.standalone_discovered + self.assisted_discovered > 0 {
            let _ = writeln!(
                s,
                "  discovery: standalone {:.3} us ({} dev), assisted {:.3} us ({} dev)",
                self.mean_discovery_us(DiscoveryMode::Standalone),
                self.standalone_discovered,
                self.mean_discovery_us(DiscoveryMode::Assisted),
                self.assisted_discovered
            );
        }
        let _ = writeln!(
            s,
            "  re-beamforming: sensor_off {} sensor_on {}",
            self.rebeam_sensor_off, self.rebeam_sensor_on
        );
        let _ = writeln!(
            s,
            "  bytes: offered {} 60g {} 24g {} pending {}  handovers {}  fallback switches {}",
            self.bytes_offered,
            self.bytes_60g,
            self.bytes_24g,
            self.bytes_pending,
            self.handovers,
            self.fallback_switches
        );
        if self.sessions > 0 {
            let _ = writeln!(
                s,
                "  sessions {} mean latency {:.3} us p95 {:.3} us",
                self.sessions,
                self.mean_session_latency_us(),
                self.session_latency_p95_ns as f64 / 1e3
            );
        }
        if !self.diagnostic.is_empty() {
            let _ = writeln!(s, "  diagnostic: {}", self.diagnostic);
        }
        s
    }
}

struct CategoryMut<'a> {
    generated: &'a mut u64,
    delivered: &'a mut u64,
    dropped: &'a mut u64,
    attempts: &'a mut u64,
    slots: &'a mut u64,
    collisions: &'a mut u64,
    delay_sum_ns: &'a mut u64,
    delay_count: &'a mut u64,
}

/// Live aggregation for one run. `record` is O(1) apart from the optional
/// trace line and session-latency sample.
#[derive(Debug, Default)]
pub struct Collector {
    record: MetricsRecord,
    latencies: Vec<u64>,
    trace: Option<Vec<String>>,
}

impl Collector {
    pub fn new(run_id: impl Into<String>, seed: u64) -> Self {
        Collector {
            record: MetricsRecord {
                run_id: run_id.into(),
                seed,
                ..Default::default()
            },
            latencies: Vec::new(),
            trace: None,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn trace(&self) -> Option<&[String]> {
        self.trace.as_deref()
    }

    pub fn current(&self) -> &MetricsRecord {
        &self.record
    }

    pub fn record(&mut self, time: SimTime, node: NodeId, ev: MetricEvent) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(ev.trace_line(time, node));
        }
        let r = &mut self.record;
        match ev {
            MetricEvent::FrameGenerated { cat } => *r.category_mut(cat).generated += 1,
            MetricEvent::AccessAttempt { cat } => {
                let c = r.category_mut(cat);
                *c.attempts += 1;
                *c.slots += 1;
            }
            MetricEvent::BackoffSlot { cat } => *r.category_mut(cat).slots += 1,
            MetricEvent::Collision { cat } => *r.category_mut(cat).collisions += 1,
            MetricEvent::AccessGrant { cat, delay } => {
                let c = r.category_mut(cat);
                *c.delay_sum_ns += delay.as_nanos();
                *c.delay_count += 1;
            }
            MetricEvent::FrameDelivered { cat } => *r.category_mut(cat).delivered += 1,
            MetricEvent::FrameDropped { cat } => *r.category_mut(cat).dropped += 1,
            MetricEvent::Discovery {
                mode,
                elapsed,
                overhead,
            } => match mode {
                DiscoveryMode::Standalone => {
                    r.standalone_discovered += 1;
                    r.standalone_time_sum_ns += elapsed.as_nanos();
                }
                DiscoveryMode::Assisted => {
                    r.assisted_discovered += 1;
                    r.assisted_time_sum_ns += elapsed.as_nanos();
                    r.assisted_overhead_sum_ns += overhead.as_nanos();
                }
            },
            MetricEvent::Rebeam { mode, cost } => match mode {
                TrackingMode::SensorOff => {
                    r.rebeam_sensor_off += 1;
                    r.rebeam_sensor_off_cost_ns += cost.as_nanos();
                }
                TrackingMode::SensorOn => {
                    r.rebeam_sensor_on += 1;
                    r.rebeam_sensor_on_cost_ns += cost.as_nanos();
                }
            },
            MetricEvent::BytesOffered { bytes } => r.bytes_offered += bytes,
            MetricEvent::BytesDelivered { band, bytes } => match band {
                Band::Wifi24 => r.bytes_24g += bytes,
                Band::Mmwave60 => r.bytes_60g += bytes,
            },
            MetricEvent::Handover => r.handovers += 1,
            MetricEvent::WifiAssociation => r.wifi_associations += 1,
            MetricEvent::ControlFrame60 => r.control_frames_60g += 1,
            MetricEvent::Payload24While60 { bytes } => r.payload_24g_while_60g += bytes,
            MetricEvent::FallbackSwitch { .. } => r.fallback_switches += 1,
            MetricEvent::SessionComplete { latency } => {
                r.sessions += 1;
                r.session_latency_sum_ns += latency.as_nanos();
                self.latencies.push(latency.as_nanos());
            }
            MetricEvent::RunEnd {
                req60_in_flight,
                wifi24_in_flight,
                bytes_pending,
            } => {
                r.req60_in_flight = req60_in_flight;
                r.wifi24_in_flight = wifi24_in_flight;
                r.bytes_pending = bytes_pending;
            }
        }
    }

    /// Computes aggregates and checks the conservation identities. A
    /// violation marks the record invalid and stores the diagnostic.
    pub fn finalize(mut self) -> MetricsRecord {
        let mut lat = std::mem::take(&mut self.latencies);
        lat.sort_unstable();
        self.record.session_latency_p95_ns = percentile_nearest_rank(&lat, 95);
        match self.record.check_identities() {
            Ok(()) => self.record.valid = true,
            Err(d) => {
                self.record.valid = false;
                self.record.diagnostic = d;
            }
        }
        self.record
    }

    /// Rebuilds a record from trace lines.
    pub fn replay<'a>(
        run_id: &str,
        seed: u64,
        lines: impl IntoIterator<Item = &'a str>,
    ) -> Result<MetricsRecord, MetricsError> {
        let mut c = Collector::new(run_id, seed);
        for line in lines {
            let (t, node, ev) = MetricEvent::parse_trace_line(line)?;
            c.record(t, node, ev);
        }
        Ok(c.finalize())
    }
}

fn percentile_nearest_rank(sorted: &[u64], pct: u64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((pct as usize * sorted.len()).div_ceil(100)).max(1);
    sorted[rank - 1]
}

/// Columns appended after the record's counters, derived from them.
const DERIVED_COLUMNS: [&str; 6] = [
    "req60_mean_access_delay_us",
    "wifi24_mean_access_delay_us",
    "req60_tx_probability",
    "wifi24_tx_probability",
    "standalone_mean_discovery_us",
    "assisted_mean_discovery_us",
];

fn derived_values(r: &MetricsRecord) -> [String; 6] {
    let req = r.category(AccessCategory::Req60);
    let wifi = r.category(AccessCategory::Wifi24);
    [
        format!("{:.3}", req.mean_access_delay_us()),
        format!("{:.3}", wifi.mean_access_delay_us()),
        format!("{:.6}", req.transmission_probability()),
        format!("{:.6}", wifi.transmission_probability()),
        format!("{:.3}", r.mean_discovery_us(DiscoveryMode::Standalone)),
        format!("{:.3}", r.mean_discovery_us(DiscoveryMode::Assisted)),
    ]
}

/// Header and values of the record's own columns, via its serde layout.
fn record_columns(
    r: &MetricsRecord,
) -> Result<(csv::StringRecord, csv::StringRecord), MetricsError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(true)
        .from_writer(Vec::new());
    w.serialize(r)?;
    let bytes = w
        .into_inner()
        .map_err(|e| io::Error::other(e.to_string()))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let header = rdr.headers()?.clone();
    let values = rdr.records().next().transpose()?.unwrap_or_default();
    Ok((header, values))
}

/// Header names in column order.
pub fn csv_header() -> Vec<String> {
    let (header, _) = record_columns(&MetricsRecord::default()).expect("in-memory csv");
    header
        .iter()
        .map(str::to_string)
        .chain(DERIVED_COLUMNS.iter().map(|c| c.to_string()))
        .collect()
}

pub fn write_csv<W: io::Write>(mut out: W, records: &[MetricsRecord]) -> Result<(), MetricsError> {
    writeln!(out, "{CSV_VERSION_LINE}")?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(csv_header())?;
    for r in records {
        let (_, values) = record_columns(r)?;
        let derived = derived_values(r);
        w.write_record(values.iter().chain(derived.iter().map(String::as_str)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[MetricsRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, records).expect("in-memory csv");
    String::from_utf8(buf).expect("utf8")
}

pub fn read_csv<R: io::Read>(mut input: R) -> Result<Vec<MetricsRecord>, MetricsError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut lines = text.splitn(2, '\n');
    if lines.next().map(str::trim_end) != Some(CSV_VERSION_LINE) {
        return Err(MetricsError::Version);
    }
    let rest = lines.next().unwrap_or("");
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(rest.as_bytes());
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != csv_header() {
        return Err(MetricsError::Version);
    }
    let own = header.len() - DERIVED_COLUMNS.len();
    let own_header: csv::StringRecord = header.iter().take(own).collect();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let fields: csv::StringRecord = row.iter().take(own).collect();
        let record: MetricsRecord = fields.deserialize(Some(&own_header))?;
        let expected = derived_values(&record);
        for (i, name) in DERIVED_COLUMNS.iter().enumerate() {
            if row.get(own + i) != Some(expected[i].as_str()) {
                return Err(MetricsError::DerivedMismatch(name));
            }
        }
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grant_updates_accumulator() {
        let mut c = Collector::new("t", 1);
        c.record(
            SimTime::ZERO,
            0,
            MetricEvent::AccessGrant {
                cat: AccessCategory::Req60,
                delay: SimTime::from_micros(120),
            },
        );
        let r = c.current();
        assert_eq!(r.req60_delay_sum_ns, 120_000);
        assert_eq!(r.req60_delay_count, 1);
    }

    #[test]
    fn zero_traffic_is_all_zero_and_valid() {
        let r = Collector::new("idle", 3).finalize();
        let mut expected = MetricsRecord {
            run_id: "idle".into(),
            seed: 3,
            ..Default::default()
        };
        expected.valid = true;
        assert_eq!(r, expected);
    }

    #[test]
    fn mean_is_exact_accumulator_over_count() {
        let mut c = Collector::new("m", 0);
        for us in [100u64, 250, 333] {
            c.record(
                SimTime::ZERO,
                0,
                MetricEvent::AccessGrant {
                    cat: AccessCategory::Wifi24,
                    delay: SimTime::from_micros(us),
                },
            );
        }
        let r = c.finalize();
        let c = r.category(AccessCategory::Wifi24);
        assert_eq!(c.delay_sum_ns, 683_000);
        assert_eq!(c.mean_access_delay_us(), 683_000.0 / 3.0 / 1e3);
    }

    #[test]
    fn violated_identity_marks_invalid() {
        let mut c = Collector::new("bad", 0);
        c.record(SimTime::ZERO, 0, MetricEvent::BytesOffered { bytes: 10 });
        let r = c.finalize();
        assert!(!r.valid);
        assert!(r.diagnostic.contains("bytes offered"));
    }

    #[test]
    fn unknown_trace_kind_is_rejected() {
        let err = MetricEvent::parse_trace_line("5 1 teleport x=1").unwrap_err();
        assert!(matches!(err, MetricsError::UnknownKind(k) if k == "teleport"));
    }

    #[test]
    fn trace_lines_parse_back() {
        let evs = [
            MetricEvent::AccessGrant {
                cat: AccessCategory::Req60,
                delay: SimTime::from_nanos(50_000),
            },
            MetricEvent::Discovery {
                mode: DiscoveryMode::Assisted,
                elapsed: SimTime::from_nanos(7),
                overhead: SimTime::from_nanos(3),
            },
            MetricEvent::Handover,
            MetricEvent::BytesDelivered {
                band: Band::Mmwave60,
                bytes: 99,
            },
            MetricEvent::RunEnd {
                req60_in_flight: 1,
                wifi24_in_flight: 2,
                bytes_pending: 3,
            },
        ];
        for ev in evs {
            let line = ev.trace_line(SimTime::from_nanos(42), 9);
            let (t, n, back) = MetricEvent::parse_trace_line(&line).unwrap();
            assert_eq!((t.as_nanos(), n, back), (42, 9, ev));
        }
    }

    #[test]
    fn p95_nearest_rank() {
        let v: Vec<u64> = (1..=20).collect();
        assert_eq!(percentile_nearest_rank(&v, 95), 19);
        assert_eq!(percentile_nearest_rank(&[5], 95), 5);
        assert_eq!(percentile_nearest_rank(&[], 95), 0);
    }

    #[test]
    fn csv_starts_with_version_line() {
        let s = to_csv_string(&[Collector::new("a", 1).finalize()]);
        assert!(s.starts_with(CSV_VERSION_LINE));
        assert_eq!(read_csv(s.as_bytes()).unwrap().len(), 1);
        assert!(read_csv("run_id\n".as_bytes()).is_err());
    }
}
