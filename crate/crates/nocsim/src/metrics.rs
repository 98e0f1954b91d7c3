//! Evaluation quantities computed from trace logs over the measurement
//! window.
//!
//! Only transactions *completing* inside the window count; the warm-up
//! prefix of a run is excluded by construction. Memory read bandwidth is
//! exposed both as response bytes per cycle and as completed-miss
//! transactions per cycle.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::engine::packet::PacketClass;
use crate::error::{Error, Result};
use crate::trace::{AttemptResult, TraceEvent, TraceLog};

pub const METRIC_NAMES: [&str; 7] = [
    "avg_transaction_latency",
    "completed_miss_fraction",
    "memory_read_bandwidth",
    "memory_read_requests",
    "bytes_per_core",
    "deflection_rate",
    "throughput",
];

/// Per-run aggregate metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean cycles from request generation to response delivery.
    pub avg_transaction_latency: f64,
    /// Percentage of completed transactions that missed in the LLC.
    pub completed_miss_fraction: f64,
    /// Memory-response payload bytes delivered per cycle.
    pub memory_read_bandwidth: f64,
    /// Completed miss transactions per cycle.
    pub memory_read_requests: f64,
    /// Total response bytes delivered, divided by the number of cores.
    pub bytes_per_core: f64,
    /// Deflection events (sink bounces and turn bounces) per cycle.
    pub deflection_rate: f64,
    /// Completed transactions per cycle.
    pub throughput: f64,
    pub completed: u64,
    pub completed_miss: u64,
    pub window: (u64, u64),
    /// Set when the window had zero length.
    pub empty_window: bool,
    /// Fingerprint of everything that defines the offered workload
    /// (mesh, queues, workload, cycles) but not the controller.
    pub workload_key: String,
    pub seed: u64,
}

impl MetricsReport {
    pub fn values(&self) -> [f64; 7] {
        [
            self.avg_transaction_latency,
            self.completed_miss_fraction,
            self.memory_read_bandwidth,
            self.memory_read_requests,
            self.bytes_per_core,
            self.deflection_rate,
            self.throughput,
        ]
    }
}

/// Everything that defines the offered load, rendered stable for
/// comparisons.
pub fn workload_key(config: &RunConfig) -> String {
    let m = &config.mesh;
    let q = &config.queues;
    let w = &config.workload;
    let phases: Vec<String> = w
        .phases
        .iter()
        .map(|p| format!("{}x{}", p.cycles, p.rate))
        .collect();
    format!(
        "mesh={}x{} mc={:?} src={:?} cap={}/{} svc={}/{} rate={} hit={} burst={} phases=[{}] bytes={}/{} cycles={}/{}",
        m.rows,
        m.cols,
        m.memory_controllers,
        m.sources,
        q.ingress_capacity,
        q.turn_capacity,
        q.llc_service_cycles,
        q.mc_service(),
        w.injection_rate,
        w.llc_hit_rate,
        w.burstiness,
        phases.join(","),
        w.request_bytes,
        w.response_bytes,
        config.run.warmup_cycles,
        config.run.total_cycles,
    )
}

/// Aggregates a trace over `[window.0, window.1)`.
pub fn compute_metrics(
    trace: &TraceLog,
    window: (u64, u64),
    cores: usize,
    config: &RunConfig,
) -> MetricsReport {
    let (start, end) = window;
    let span = end.saturating_sub(start);
    let mut completed = 0u64;
    let mut completed_miss = 0u64;
    let mut latency_sum = 0u128;
    let mut response_bytes = 0u64;
    let mut mem_response_bytes = 0u64;
    let mut deflections = 0u64;

    if span > 0 {
        for event in trace.events() {
            let t = event.cycle();
            if t < start || t >= end {
                continue;
            }
            match *event {
                TraceEvent::Completed { t, miss, start, .. } => {
                    completed += 1;
                    if miss {
                        completed_miss += 1;
                    }
                    latency_sum += u128::from(t - start);
                }
                TraceEvent::Delivered { class, bytes, .. } => {
                    response_bytes += u64::from(bytes);
                    if class == PacketClass::MemResponse {
                        mem_response_bytes += u64::from(bytes);
                    }
                }
                TraceEvent::SinkAttempt { result, .. } | TraceEvent::TurnAttempt { result, .. } => {
                    if result == AttemptResult::Deflected {
                        deflections += 1;
                    }
                }
                _ => {}
            }
        }
    }

    let per_cycle = |count: u64| {
        if span == 0 {
            0.0
        } else {
            count as f64 / span as f64
        }
    };
    MetricsReport {
        avg_transaction_latency: if completed == 0 {
            0.0
        } else {
            latency_sum as f64 / completed as f64
        },
        completed_miss_fraction: if completed == 0 {
            0.0
        } else {
            100.0 * completed_miss as f64 / completed as f64
        },
        memory_read_bandwidth: per_cycle(mem_response_bytes),
        memory_read_requests: per_cycle(completed_miss),
        bytes_per_core: if cores == 0 {
            0.0
        } else {
            response_bytes as f64 / cores as f64
        },
        deflection_rate: per_cycle(deflections),
        throughput: per_cycle(completed),
        completed,
        completed_miss,
        window,
        empty_window: span == 0,
        workload_key: workload_key(config),
        seed: config.run.seed,
    }
}

/// One metric compared across two runs.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub name: &'static str,
    pub a: f64,
    pub b: f64,
    /// b / a; 0 when a is 0.
    pub ratio: f64,
    /// 100 * (b - a) / a; 0 when a is 0.
    pub delta_pct: f64,
}

/// Per-metric ratios and percent deltas between two runs of the same
/// workload under different controllers.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonTable {
    pub label_a: String,
    pub label_b: String,
    pub rows: Vec<MetricRow>,
}

pub fn compare_runs(
    a: &MetricsReport,
    b: &MetricsReport,
    label_a: &str,
    label_b: &str,
) -> Result<ComparisonTable> {
    if a.workload_key != b.workload_key || a.seed != b.seed {
        return Err(Error::Comparison(format!(
            "runs are not comparable: workloads or seeds differ\n  a: {} seed {}\n  b: {} seed {}",
            a.workload_key, a.seed, b.workload_key, b.seed
        )));
    }
    let rows = METRIC_NAMES
        .iter()
        .zip(a.values().iter().zip(b.values().iter()))
        .map(|(&name, (&va, &vb))| MetricRow {
            name,
            a: va,
            b: vb,
            ratio: if va == 0.0 { 0.0 } else { vb / va },
            delta_pct: if va == 0.0 { 0.0 } else { 100.0 * (vb - va) / va },
        })
        .collect();
    Ok(ComparisonTable {
        label_a: label_a.to_string(),
        label_b: label_b.to_string(),
        rows,
    })
}

impl ComparisonTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<26} {:>14} {:>14} {:>9} {:>10}\n",
            "metric", &self.label_a, &self.label_b, "ratio", "delta%"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<26} {:>14.4} {:>14.4} {:>9.3} {:>+10.1}\n",
                row.name, row.a, row.b, row.ratio, row.delta_pct
            ));
        }
        out
    }
}

/// Seed-averaged view of several runs of the same workload.
#[derive(Debug, Clone, Serialize)]
pub struct SeedAggregate {
    pub mean: [f64; 7],
    pub min: [f64; 7],
    pub max: [f64; 7],
    pub runs: usize,
    pub workload_key: String,
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<SeedAggregate> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Comparison("cannot aggregate zero runs".into()))?;
    for r in reports {
        if r.workload_key != first.workload_key {
            return Err(Error::Comparison(
                "cannot aggregate runs of different workloads".into(),
            ));
        }
    }
    let mut mean = [0.0; 7];
    let mut min = [f64::INFINITY; 7];
    let mut max = [f64::NEG_INFINITY; 7];
    for r in reports {
        for (i, v) in r.values().into_iter().enumerate() {
            mean[i] += v;
            min[i] = min[i].min(v);
            max[i] = max[i].max(v);
        }
    }
    for v in &mut mean {
        *v /= reports.len() as f64;
    }
    Ok(SeedAggregate {
        mean,
        min,
        max,
        runs: reports.len(),
        workload_key: first.workload_key.clone(),
    })
}
