//! Per-sink congestion indicators.
//!
//! Fourteen features are tracked at every sink and sampled on every sink
//! attempt, whether the packet is written to the queue or bounces. Raw
//! values are smoothed with an exponentially weighted moving average,
//!
//! ```text
//! smoothed = alpha * sample + (1 - alpha) * previous
//! ```
//!
//! and the gradient features are backward five-point finite differences over
//! the smoothed histories, one step per sample.
//!
//! Estimator choices:
//! * instantaneous rates are inter-event reciprocals (`1 / dt` since the
//!   previous event of the same kind, with `dt` clamped to at least one
//!   cycle);
//! * coefficients of variation keep an EWMA of the inter-event time and an
//!   EWMA of its squared deviation, `cov = sqrt(var) / mean`;
//! * the queue-full probability is the EWMA of the full-at-attempt
//!   indicator;
//! * mean service time is the EWMA of observed per-packet service durations.
//!
//! EWMAs are continuous over the whole run; counters never reset between
//! samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of tracked features.
pub const FEATURE_COUNT: usize = 14;

/// Feature names in their fixed canonical order. Model files and dataset
/// headers both use this order; index `i` here is feature index `i`
/// everywhere else.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "sink_injection_rate",
    "total_injection_rate",
    "cov_total_interarrival",
    "cov_sink_interarrival",
    "deflected_rate",
    "mean_service_time",
    "cov_deflected_interarrival",
    "cov_interdeparture",
    "occupancy",
    "prob_queue_full",
    "grad_injection_rate",
    "grad_occupancy",
    "grad_total_injection_rate",
    "grad_prob_full",
];

pub const F_SINK_INJECTION_RATE: usize = 0;
pub const F_TOTAL_INJECTION_RATE: usize = 1;
pub const F_COV_TOTAL_INTERARRIVAL: usize = 2;
pub const F_COV_SINK_INTERARRIVAL: usize = 3;
pub const F_DEFLECTED_RATE: usize = 4;
pub const F_MEAN_SERVICE_TIME: usize = 5;
pub const F_COV_DEFLECTED_INTERARRIVAL: usize = 6;
pub const F_COV_INTERDEPARTURE: usize = 7;
pub const F_OCCUPANCY: usize = 8;
pub const F_PROB_QUEUE_FULL: usize = 9;
pub const F_GRAD_INJECTION_RATE: usize = 10;
pub const F_GRAD_OCCUPANCY: usize = 11;
pub const F_GRAD_TOTAL_INJECTION_RATE: usize = 12;
pub const F_GRAD_PROB_FULL: usize = 13;

/// One smoothed feature snapshot, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector([0.0; FEATURE_COUNT])
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One step of the exponentially weighted moving average.
///
/// Returns `alpha * sample + (1 - alpha) * prev`. The first sample of a
/// stream initializes the average directly; see [`Ewma`].
pub fn ewma_update(prev: f64, sample: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!(
            "EWMA mixing parameter must be in [0, 1], got {alpha}"
        )));
    }
    Ok(alpha * sample + (1.0 - alpha) * prev)
}

/// Running EWMA. The first observed sample becomes the initial value.
#[derive(Debug, Clone, Copy)]
pub struct Ewma {
    alpha: f64,
    value: Option<f64>,
}

impl Ewma {
    pub fn new(alpha: f64) -> Ewma {
        debug_assert!((0.0..=1.0).contains(&alpha));
        Ewma { alpha, value: None }
    }

    pub fn update(&mut self, sample: f64) -> f64 {
        let next = match self.value {
            None => sample,
            Some(prev) => self.alpha * sample + (1.0 - self.alpha) * prev,
        };
        self.value = Some(next);
        next
    }

    pub fn value(&self) -> f64 {
        self.value.unwrap_or(0.0)
    }
}

/// Backward five-point finite-difference slope at the newest sample.
///
/// Exact for polynomials up to degree four. Returns 0 until five samples are
/// available.
pub fn five_point_gradient(history: &[f64], spacing: f64) -> Result<f64> {
    if spacing == 0.0 {
        return Err(Error::Parameter(
            "gradient spacing must be non-zero".into(),
        ));
    }
    if history.len() < 5 {
        return Ok(0.0);
    }
    let f = &history[history.len() - 5..];
    Ok((25.0 * f[4] - 48.0 * f[3] + 36.0 * f[2] - 16.0 * f[1] + 3.0 * f[0]) / (12.0 * spacing))
}

/// Fixed-size window of the last five smoothed values.
#[derive(Debug, Clone)]
struct GradientWindow {
    buf: [f64; 5],
    len: usize,
}

impl GradientWindow {
    fn new() -> Self {
        GradientWindow {
            buf: [0.0; 5],
            len: 0,
        }
    }

    fn push(&mut self, v: f64) {
        if self.len < 5 {
            self.buf[self.len] = v;
            self.len += 1;
        } else {
            self.buf.rotate_left(1);
            self.buf[4] = v;
        }
    }

    fn gradient(&self) -> f64 {
        five_point_gradient(&self.buf[..self.len], 1.0).expect("unit spacing")
    }
}

/// Inter-event reciprocal rate, EWMA-smoothed. Events less than one cycle
/// apart count as one cycle apart.
#[derive(Debug, Clone)]
struct RateEstimator {
    last_event: Option<u64>,
    ewma: Ewma,
}

impl RateEstimator {
    fn new(alpha: f64) -> Self {
        RateEstimator {
            last_event: None,
            ewma: Ewma::new(alpha),
        }
    }

    fn on_event(&mut self, t: u64) {
        // The stream origin (cycle 0) anchors the first sample.
        let prev = self.last_event.unwrap_or(0);
        let dt = (t.saturating_sub(prev)).max(1) as f64;
        self.ewma.update(1.0 / dt);
        self.last_event = Some(t);
    }

    fn value(&self) -> f64 {
        self.ewma.value()
    }
}

/// Coefficient of variation of inter-event times: EWMA of the gap and EWMA
/// of its squared deviation.
#[derive(Debug, Clone)]
struct CovEstimator {
    last_event: Option<u64>,
    mean: Ewma,
    var: Ewma,
}

impl CovEstimator {
    fn new(alpha: f64) -> Self {
        CovEstimator {
            last_event: None,
            mean: Ewma::new(alpha),
            var: Ewma::new(alpha),
        }
    }

    fn on_event(&mut self, t: u64) {
        let prev = self.last_event.unwrap_or(0);
        let dt = (t.saturating_sub(prev)).max(1) as f64;
        let mean = self.mean.update(dt);
        self.var.update((dt - mean) * (dt - mean));
        self.last_event = Some(t);
    }

    fn value(&self) -> f64 {
        let mean = self.mean.value();
        if mean <= 0.0 {
            return 0.0;
        }
        self.var.value().max(0.0).sqrt() / mean
    }
}

/// Outcome of a single sink attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttemptOutcome {
    Sunk,
    Deflected,
}

/// A sampled feature row with its attempt timestamp.
#[derive(Debug, Clone, Copy)]
pub struct FeatureSample {
    pub features: FeatureVector,
    pub t: u64,
}

/// All feature-tracking state for one sink queue.
#[derive(Debug, Clone)]
pub struct SinkFeatureState {
    sink_rate: RateEstimator,
    total_rate: RateEstimator,
    deflected_rate: RateEstimator,
    cov_total: CovEstimator,
    cov_sink: CovEstimator,
    cov_deflected: CovEstimator,
    cov_departure: CovEstimator,
    mean_service: Ewma,
    occupancy: Ewma,
    prob_full: Ewma,
    grad_injection: GradientWindow,
    grad_occupancy: GradientWindow,
    grad_total: GradientWindow,
    grad_prob_full: GradientWindow,
}

impl SinkFeatureState {
    pub fn new(alpha: f64) -> Self {
        SinkFeatureState {
            sink_rate: RateEstimator::new(alpha),
            total_rate: RateEstimator::new(alpha),
            deflected_rate: RateEstimator::new(alpha),
            cov_total: CovEstimator::new(alpha),
            cov_sink: CovEstimator::new(alpha),
            cov_deflected: CovEstimator::new(alpha),
            cov_departure: CovEstimator::new(alpha),
            mean_service: Ewma::new(alpha),
            occupancy: Ewma::new(alpha),
            prob_full: Ewma::new(alpha),
            grad_injection: GradientWindow::new(),
            grad_occupancy: GradientWindow::new(),
            grad_total: GradientWindow::new(),
            grad_prob_full: GradientWindow::new(),
        }
    }

    /// Records a sink attempt and emits the smoothed feature row for it.
    ///
    /// `occupancy` is the queue occupancy the arriving packet saw; the
    /// attempt was deflected exactly when `occupancy == capacity`.
    pub fn record_attempt(
        &mut self,
        t: u64,
        occupancy: usize,
        capacity: usize,
        outcome: AttemptOutcome,
    ) -> FeatureSample {
        self.total_rate.on_event(t);
        self.cov_total.on_event(t);
        match outcome {
            AttemptOutcome::Sunk => {
                self.sink_rate.on_event(t);
                self.cov_sink.on_event(t);
            }
            AttemptOutcome::Deflected => {
                self.deflected_rate.on_event(t);
                self.cov_deflected.on_event(t);
            }
        }
        self.occupancy.update(occupancy as f64);
        let full = occupancy >= capacity;
        self.prob_full.update(if full { 1.0 } else { 0.0 });

        self.grad_injection.push(self.sink_rate.value());
        self.grad_occupancy.push(self.occupancy.value());
        self.grad_total.push(self.total_rate.value());
        self.grad_prob_full.push(self.prob_full.value());

        FeatureSample {
            features: self.snapshot(),
            t,
        }
    }

    /// Records a completed service: `duration` cycles spent serving the
    /// departing packet.
    pub fn record_departure(&mut self, t: u64, duration: u64) {
        self.mean_service.update(duration as f64);
        self.cov_departure.on_event(t);
    }

    /// Current smoothed feature values, in canonical order.
    pub fn snapshot(&self) -> FeatureVector {
        let mut f = [0.0; FEATURE_COUNT];
        f[F_SINK_INJECTION_RATE] = self.sink_rate.value();
        f[F_TOTAL_INJECTION_RATE] = self.total_rate.value();
        f[F_COV_TOTAL_INTERARRIVAL] = self.cov_total.value();
        f[F_COV_SINK_INTERARRIVAL] = self.cov_sink.value();
        f[F_DEFLECTED_RATE] = self.deflected_rate.value();
        f[F_MEAN_SERVICE_TIME] = self.mean_service.value();
        f[F_COV_DEFLECTED_INTERARRIVAL] = self.cov_deflected.value();
        f[F_COV_INTERDEPARTURE] = self.cov_departure.value();
        f[F_OCCUPANCY] = self.occupancy.value();
        f[F_PROB_QUEUE_FULL] = self.prob_full.value();
        f[F_GRAD_INJECTION_RATE] = self.grad_injection.gradient();
        f[F_GRAD_OCCUPANCY] = self.grad_occupancy.gradient();
        f[F_GRAD_TOTAL_INJECTION_RATE] = self.grad_total.gradient();
        f[F_GRAD_PROB_FULL] = self.grad_prob_full.gradient();
        FeatureVector(f)
    }

    /// Smoothed injection rate into the sink queue (the lambda of the local
    /// throttling condition).
    pub fn lambda(&self) -> f64 {
        self.sink_rate.value()
    }
}
