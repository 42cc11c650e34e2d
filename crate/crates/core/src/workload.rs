//! Per-instance request load: CSV traces and a synthetic ramp-peak-decay trend.

use std::fmt;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length of one simulated time instance (one compressed day), in seconds.
pub const DEFAULT_INSTANCE_DURATION_S: f64 = 864.0;

/// Ceiling on the number of requests in one time instance.
pub const DEFAULT_MAX_PARALLEL_REQUESTS: u32 = 700;

const TRACE_HEADER: [&str; 2] = ["instance", "requests"];

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("trace header must be `instance,requests`, found `{0}`")]
    Header(String),
    #[error("trace contains no instances")]
    Empty,
    #[error("unknown service type id {0} (expected 1..=5)")]
    UnknownServiceType(u8),
    #[error("{0}")]
    Range(String),
    #[error("instance index {index} out of bounds for trace of {len} instances")]
    OutOfBounds { index: usize, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServiceKind {
    Browsing,
    Bidding,
    #[serde(rename = "mixed-70-30")]
    Mixed70_30,
    #[serde(rename = "mixed-50-50")]
    Mixed50_50,
    #[serde(rename = "mixed-30-70")]
    Mixed30_70,
}

/// One of the five request types, folded into a single per-request MIPS demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceType {
    pub id: u8,
    pub kind: ServiceKind,
    /// Millions of instructions needed to serve one request.
    pub required_mips: f64,
}

impl ServiceType {
    pub fn from_id(id: u8) -> Result<Self, WorkloadError> {
        let (kind, required_mips) = match id {
            1 => (ServiceKind::Browsing, 10_000.0),
            2 => (ServiceKind::Bidding, 20_000.0),
            3 => (ServiceKind::Mixed70_30, 12_000.0),
            4 => (ServiceKind::Mixed50_50, 15_000.0),
            5 => (ServiceKind::Mixed30_70, 17_000.0),
            other => return Err(WorkloadError::UnknownServiceType(other)),
        };
        Ok(Self {
            id,
            kind,
            required_mips,
        })
    }

    pub fn all() -> [ServiceType; 5] {
        [1, 2, 3, 4, 5].map(|id| Self::from_id(id).expect("ids 1..=5 are valid"))
    }
}

impl fmt::Display for ServiceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{} ({} MIPS)", self.id, self.required_mips)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceInstance {
    pub index: usize,
    pub requests: u32,
}

/// An ordered, gap-free sequence of per-instance request counts for one service type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadTrace {
    instances: Vec<TraceInstance>,
    pub service_type: ServiceType,
    pub instance_duration_s: f64,
    /// Rows whose count was clamped to the request ceiling while loading.
    pub clamp_warnings: usize,
}

impl WorkloadTrace {
    /// Builds a trace from raw counts, re-indexed from zero and clamped to `max_requests`.
    pub fn from_counts(counts: &[u32], service_type: ServiceType, max_requests: u32) -> Self {
        let mut clamp_warnings = 0;
        let instances = counts
            .iter()
            .enumerate()
            .map(|(index, &c)| {
                if c > max_requests {
                    clamp_warnings += 1;
                }
                TraceInstance {
                    index,
                    requests: c.min(max_requests),
                }
            })
            .collect();
        Self {
            instances,
            service_type,
            instance_duration_s: DEFAULT_INSTANCE_DURATION_S,
            clamp_warnings,
        }
    }

    pub fn empty(service_type: ServiceType) -> Self {
        Self::from_counts(&[], service_type, DEFAULT_MAX_PARALLEL_REQUESTS)
    }

    pub fn with_service_type(mut self, service_type: ServiceType) -> Self {
        self.service_type = service_type;
        self
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[TraceInstance] {
        &self.instances
    }

    pub fn counts(&self) -> Vec<u32> {
        self.instances.iter().map(|i| i.requests).collect()
    }

    pub fn requests(&self, index: usize) -> Result<u32, WorkloadError> {
        self.instances
            .get(index)
            .map(|i| i.requests)
            .ok_or(WorkloadError::OutOfBounds {
                index,
                len: self.instances.len(),
            })
    }

    /// Requests per second over the instance window.
    pub fn arrival_rate(&self, index: usize) -> Result<f64, WorkloadError> {
        Ok(f64::from(self.requests(index)?) / self.instance_duration_s)
    }

    /// Writes the trace in the `instance,requests` CSV format.
    pub fn save<W: Write>(&self, writer: W) -> Result<(), WorkloadError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(TRACE_HEADER).map_err(csv_io)?;
        for inst in &self.instances {
            w.write_record([inst.index.to_string(), inst.requests.to_string()])
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> WorkloadError {
    WorkloadError::Io(std::io::Error::other(e))
}

/// Reads a `instance,requests` CSV trace. Rows keep file order and are re-indexed `0..n`.
pub fn load_trace<R: Read>(
    source: R,
    service_type_id: u8,
    max_parallel_requests: u32,
) -> Result<WorkloadTrace, WorkloadError> {
    let service_type = ServiceType::from_id(service_type_id)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);

    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(WorkloadError::Empty),
        Some(rec) => rec.map_err(|e| parse_err(1, e.to_string()))?,
    };
    if header.len() != 2 || header.get(0) != Some("instance") || header.get(1) != Some("requests")
    {
        return Err(WorkloadError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut counts = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", rec.len())));
        }
        rec[0]
            .parse::<u64>()
            .map_err(|_| parse_err(line, format!("invalid instance `{}`", &rec[0])))?;
        let requests = rec[1]
            .parse::<u64>()
            .map_err(|_| parse_err(line, format!("invalid request count `{}`", &rec[1])))?;
        counts.push(u32::try_from(requests).unwrap_or(u32::MAX));
    }
    if counts.is_empty() {
        return Err(WorkloadError::Empty);
    }
    let trace = WorkloadTrace::from_counts(&counts, service_type, max_parallel_requests);
    if trace.clamp_warnings > 0 {
        log::warn!(
            "{} trace rows clamped to {} requests",
            trace.clamp_warnings,
            max_parallel_requests
        );
    }
    Ok(trace)
}

fn parse_err(line: u64, reason: String) -> WorkloadError {
    WorkloadError::Parse { line, reason }
}

/// Index of the trend peak: 60% of the way through the horizon.
fn peak_index(n_instances: usize) -> usize {
    ((n_instances - 1) as f64 * 0.6).round() as usize
}

/// Noise-free ramp-peak-decay envelope value at instance `i`.
pub fn trend_envelope(base: u32, peak: u32, n_instances: usize, i: usize) -> f64 {
    let (base, peak) = (f64::from(base), f64::from(peak));
    let p = peak_index(n_instances);
    let last = n_instances - 1;
    if i <= p {
        if p == 0 {
            peak
        } else {
            base + (peak - base) * i as f64 / p as f64
        }
    } else {
        peak - (peak - base) * (i - p) as f64 / (last - p) as f64
    }
}

/// Synthesizes a day-scale trend: linear rise to `peak`, decay back to `base`, with
/// seeded multiplicative noise in `[0.9, 1.1]`.
pub fn synthesize_trend(
    base: u32,
    peak: u32,
    n_instances: usize,
    seed: u64,
) -> Result<WorkloadTrace, WorkloadError> {
    let cap = DEFAULT_MAX_PARALLEL_REQUESTS;
    if peak > cap {
        return Err(WorkloadError::Range(format!(
            "peak {peak} exceeds the {cap}-request ceiling"
        )));
    }
    if base > peak {
        return Err(WorkloadError::Range(format!(
            "base {base} exceeds peak {peak}"
        )));
    }
    if n_instances == 0 {
        return Err(WorkloadError::Range("n_instances must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts: Vec<u32> = (0..n_instances)
        .map(|i| {
            let noise = rng.gen_range(0.9..=1.1);
            let v = (trend_envelope(base, peak, n_instances, i) * noise).round();
            v.clamp(0.0, f64::from(cap)) as u32
        })
        .collect();
    let service = ServiceType::from_id(1).expect("service type 1 exists");
    Ok(WorkloadTrace::from_counts(&counts, service, cap))
}
