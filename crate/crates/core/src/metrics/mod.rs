//! Step-response and tracking metrics, PID-vs-fuzzy comparison, and the
//! trace artifacts (CSV, SVG, markdown report).
//!
//! Every metric is computed from a [`Trace`] and one error [`Signal`]. Times
//! are measured from the first record, so metrics do not change when a trace
//! is shifted in time.

mod csv_io;
mod report;
mod svg;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::experiment::{Channel, Trace, TraceRecord};

pub use csv_io::{column_value, format_sig9, read_trace_csv, trace_to_csv_string, write_trace_csv, COLUMNS};
pub use report::{render_report, write_report};
pub use svg::{render_plot_svg, write_plot_svg};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trace has {0} records; at least {MIN_RECORDS} are needed for band computation")]
    TooShort(usize),
    #[error("setpoint delta must be non-zero and finite, got {0}")]
    InvalidDelta(f64),
    #[error("traces come from different scenarios: `{0}` vs `{1}`")]
    ScenarioMismatch(String, String),
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("unexpected header column {index}: found `{found}`, expected `{expected}`")]
    Header { index: usize, found: String, expected: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const MIN_RECORDS: usize = 2;

/// Error columns a metric can be computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Signal {
    PixelErrorX,
    AreaError,
    LateralDev,
    FollowDist,
}

impl Signal {
    pub const ALL: [Signal; 4] = [Signal::PixelErrorX, Signal::AreaError, Signal::LateralDev, Signal::FollowDist];

    pub fn column(self) -> &'static str {
        match self {
            Signal::PixelErrorX => "pixel_error_x",
            Signal::AreaError => "area_error",
            Signal::LateralDev => "lateral_dev_m",
            Signal::FollowDist => "follow_dist_m",
        }
    }

    pub fn value(self, r: &TraceRecord) -> f64 {
        match self {
            Signal::PixelErrorX => r.pixel_error_x,
            Signal::AreaError => r.area_error,
            Signal::LateralDev => r.lateral_dev,
            Signal::FollowDist => r.follow_dist,
        }
    }

    /// The command channel whose effort the signal drives.
    pub fn channel(self) -> Channel {
        match self {
            Signal::PixelErrorX | Signal::LateralDev => Channel::Steering,
            Signal::AreaError | Signal::FollowDist => Channel::Throttle,
        }
    }

    /// The error signal a channel's controller acts on.
    pub fn for_channel(channel: Channel) -> Signal {
        match channel {
            Channel::Steering => Signal::PixelErrorX,
            Channel::Throttle => Signal::AreaError,
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for Signal {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Signal::ALL.into_iter().find(|sig| sig.column() == s).ok_or_else(|| MetricsError::UnknownChannel(s.into()))
    }
}

pub fn command_pwm(channel: Channel, r: &TraceRecord) -> f64 {
    match channel {
        Channel::Steering => r.steering_pwm,
        Channel::Throttle => r.throttle_pwm,
    }
}

/// Definitions used by [`step_metrics_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOptions {
    /// Rise is measured between these fractions of the step.
    pub rise_low: f64,
    pub rise_high: f64,
    /// Half-width of the settling band as a fraction of `|delta|`.
    pub settle_band: f64,
    /// Trailing fraction of records averaged for steady-state error.
    pub steady_window: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions { rise_low: 0.1, rise_high: 0.9, settle_band: 0.05, steady_window: 0.2 }
    }
}

/// Transient metrics are `None` when they do not apply: a zero step, or a
/// response that never reaches the upper rise threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSet {
    pub rise_time: Option<f64>,
    pub settling_time: Option<f64>,
    /// Percent of the step.
    pub overshoot: Option<f64>,
    /// Mean absolute distance from the target over the trailing window.
    pub steady_state_error: f64,
    pub rms_error: f64,
    /// Total variation of the driven channel's PWM command.
    pub control_effort_tv: f64,
    pub mean_loop_cost: f64,
    pub mean_op_count: f64,
}

pub fn step_metrics(trace: &Trace, signal: Signal, setpoint_delta: f64) -> Result<MetricSet, MetricsError> {
    step_metrics_with(trace, signal, setpoint_delta, &MetricOptions::default())
}

/// Metrics for a response that should move `signal` by `setpoint_delta`
/// from its value at the first record.
///
/// Threshold crossings are taken at the first record that reaches them, with
/// no interpolation. The settling band is centered on the last value.
pub fn step_metrics_with(
    trace: &Trace,
    signal: Signal,
    setpoint_delta: f64,
    opts: &MetricOptions,
) -> Result<MetricSet, MetricsError> {
    if !(setpoint_delta.is_finite() && setpoint_delta != 0.0) {
        return Err(MetricsError::InvalidDelta(setpoint_delta));
    }
    let recs = &trace.records;
    if recs.len() < MIN_RECORDS {
        return Err(MetricsError::TooShort(recs.len()));
    }
    let t0 = recs[0].t;
    let s0 = signal.value(&recs[0]);
    let target = s0 + setpoint_delta;
    let progress = |r: &TraceRecord| (signal.value(r) - s0) / setpoint_delta;

    let first_reaching = |level: f64| recs.iter().find(|r| progress(r) >= level).map(|r| r.t - t0);
    let rise_time = match (first_reaching(opts.rise_low), first_reaching(opts.rise_high)) {
        (Some(lo), Some(hi)) => Some(hi - lo),
        _ => None,
    };

    let last = signal.value(&recs[recs.len() - 1]);
    let band = opts.settle_band * setpoint_delta.abs();
    let settle_idx = recs.iter().rposition(|r| (signal.value(r) - last).abs() > band).map_or(0, |i| i + 1);
    let settling_time = Some(recs[settle_idx.min(recs.len() - 1)].t - t0);

    let excursion = recs.iter().map(|r| (signal.value(r) - last) * setpoint_delta.signum()).fold(0.0, f64::max);
    let overshoot = Some(100.0 * excursion / setpoint_delta.abs());

    Ok(MetricSet {
        rise_time,
        settling_time,
        overshoot,
        ..common_metrics(trace, signal, target, opts.steady_window)
    })
}

/// Metrics for a loop whose target is zero error. A trace that starts at
/// zero error has no step, so its transient metrics are `None`.
pub fn tracking_metrics(trace: &Trace, signal: Signal) -> Result<MetricSet, MetricsError> {
    let recs = &trace.records;
    if recs.len() < MIN_RECORDS {
        return Err(MetricsError::TooShort(recs.len()));
    }
    let delta = -signal.value(&recs[0]);
    if delta == 0.0 {
        Ok(common_metrics(trace, signal, 0.0, MetricOptions::default().steady_window))
    } else {
        step_metrics(trace, signal, delta)
    }
}

fn common_metrics(trace: &Trace, signal: Signal, target: f64, window: f64) -> MetricSet {
    let recs = &trace.records;
    let n = recs.len() as f64;
    let tail = ((window * n).ceil() as usize).clamp(1, recs.len());
    let steady_state_error =
        recs[recs.len() - tail..].iter().map(|r| (signal.value(r) - target).abs()).sum::<f64>() / tail as f64;
    let rms_error = (recs.iter().map(|r| signal.value(r).powi(2)).sum::<f64>() / n).sqrt();
    let channel = signal.channel();
    let control_effort_tv =
        recs.windows(2).map(|w| (command_pwm(channel, &w[1]) - command_pwm(channel, &w[0])).abs()).sum();
    MetricSet {
        rise_time: None,
        settling_time: None,
        overshoot: None,
        steady_state_error,
        rms_error,
        control_effort_tv,
        mean_loop_cost: recs.iter().map(|r| r.loop_cost_us).sum::<f64>() / n,
        mean_op_count: recs.iter().map(|r| r.op_count as f64).sum::<f64>() / n,
    }
}

/// Row order of every report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    RiseTime,
    SettlingTime,
    Overshoot,
    SteadyStateError,
    RmsError,
    ControlEffortTv,
    MeanLoopCost,
    MeanOpCount,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::RiseTime,
        Metric::SettlingTime,
        Metric::Overshoot,
        Metric::SteadyStateError,
        Metric::RmsError,
        Metric::ControlEffortTv,
        Metric::MeanLoopCost,
        Metric::MeanOpCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::RiseTime => "rise_time",
            Metric::SettlingTime => "settling_time",
            Metric::Overshoot => "overshoot",
            Metric::SteadyStateError => "steady_state_error",
            Metric::RmsError => "rms_error",
            Metric::ControlEffortTv => "control_effort_tv",
            Metric::MeanLoopCost => "mean_loop_cost",
            Metric::MeanOpCount => "mean_op_count",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::RiseTime | Metric::SettlingTime => "s",
            Metric::Overshoot => "%",
            Metric::SteadyStateError | Metric::RmsError => "signal",
            Metric::ControlEffortTv => "PWM",
            Metric::MeanLoopCost => "us",
            Metric::MeanOpCount => "ops",
        }
    }

    pub fn value(self, m: &MetricSet) -> Option<f64> {
        match self {
            Metric::RiseTime => m.rise_time,
            Metric::SettlingTime => m.settling_time,
            Metric::Overshoot => m.overshoot,
            Metric::SteadyStateError => Some(m.steady_state_error),
            Metric::RmsError => Some(m.rms_error),
            Metric::ControlEffortTv => Some(m.control_effort_tv),
            Metric::MeanLoopCost => Some(m.mean_loop_cost),
            Metric::MeanOpCount => Some(m.mean_op_count),
        }
    }
}

/// Relative tie bands per metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances([f64; 8]);

impl Tolerances {
    pub fn uniform(relative: f64) -> Self {
        Tolerances([relative; 8])
    }

    pub fn get(&self, metric: Metric) -> f64 {
        self.0[metric as usize]
    }

    pub fn set(&mut self, metric: Metric, relative: f64) {
        self.0[metric as usize] = relative;
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances::uniform(0.02)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    Pid,
    Fuzzy,
    Tie,
    NotApplicable,
}

impl Winner {
    pub fn as_str(self) -> &'static str {
        match self {
            Winner::Pid => "PID",
            Winner::Fuzzy => "fuzzy",
            Winner::Tie => "tie",
            Winner::NotApplicable => "n/a",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricComparison {
    pub metric: Metric,
    pub pid: Option<f64>,
    pub fuzzy: Option<f64>,
    pub winner: Winner,
    /// `|pid - fuzzy|`, `None` when either side is missing.
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub scenario: String,
    pub signal: Signal,
    pub pid: MetricSet,
    pub fuzzy: MetricSet,
    pub rows: Vec<MetricComparison>,
    pub notes: Vec<String>,
}

impl ComparisonReport {
    pub fn row(&self, metric: Metric) -> &MetricComparison {
        &self.rows[metric as usize]
    }
}

/// Lower is better for every metric. Values within the relative tolerance of
/// the larger magnitude tie.
pub fn pick_winner(pid: Option<f64>, fuzzy: Option<f64>, relative_tol: f64) -> Winner {
    match (pid, fuzzy) {
        (Some(a), Some(b)) => {
            if (a - b).abs() <= relative_tol * a.abs().max(b.abs()) {
                Winner::Tie
            } else if a < b {
                Winner::Pid
            } else {
                Winner::Fuzzy
            }
        }
        _ => Winner::NotApplicable,
    }
}

/// Default steady-state threshold on pixel error.
pub const DEFAULT_STEADY_STATE_PX: f64 = 5.0;

pub fn compare(
    trace_pid: &Trace,
    trace_fuzzy: &Trace,
    signal: Signal,
    tolerances: &Tolerances,
) -> Result<ComparisonReport, MetricsError> {
    if trace_pid.scenario != trace_fuzzy.scenario {
        return Err(MetricsError::ScenarioMismatch(trace_pid.scenario.clone(), trace_fuzzy.scenario.clone()));
    }
    let pid = tracking_metrics(trace_pid, signal)?;
    let fuzzy = tracking_metrics(trace_fuzzy, signal)?;
    let rows: Vec<MetricComparison> = Metric::ALL
        .into_iter()
        .map(|metric| {
            let (a, b) = (metric.value(&pid), metric.value(&fuzzy));
            MetricComparison {
                metric,
                pid: a,
                fuzzy: b,
                winner: pick_winner(a, b, tolerances.get(metric)),
                margin: a.zip(b).map(|(a, b)| (a - b).abs()),
            }
        })
        .collect();

    let mut notes = Vec::new();
    let (p_ops, f_ops) = (pid.mean_op_count, fuzzy.mean_op_count);
    if f_ops > p_ops {
        let ratio = if p_ops > 0.0 { format!(" ({:.1}x)", f_ops / p_ops) } else { String::new() };
        notes.push(format!(
            "fuzzy control used more operations per record than PID: {} vs {}{ratio}",
            format_sig9(f_ops),
            format_sig9(p_ops)
        ));
    } else {
        notes.push(format!(
            "fuzzy control did not use more operations per record than PID: {} vs {}",
            format_sig9(f_ops),
            format_sig9(p_ops)
        ));
    }
    if signal == Signal::PixelErrorX {
        let threshold = trace_pid.config.as_ref().map_or(DEFAULT_STEADY_STATE_PX, |c| c.steady_state_px);
        let verdict = |e: f64| if e < threshold { "below" } else { "not below" };
        notes.push(format!(
            "steady-state pixel error: PID {} ({}), fuzzy {} ({}) the {} px threshold",
            format_sig9(pid.steady_state_error),
            verdict(pid.steady_state_error),
            format_sig9(fuzzy.steady_state_error),
            verdict(fuzzy.steady_state_error),
            format_sig9(threshold)
        ));
    }

    Ok(ComparisonReport { scenario: trace_pid.scenario.clone(), signal, pid, fuzzy, rows, notes })
}

/// Scalar tuning objectives over one error signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    #[default]
    Itae,
    Ise,
    Rms,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Itae => "itae",
            Objective::Ise => "ise",
            Objective::Rms => "rms",
        }
    }

    /// ITAE is `Σ t·|e|·h` and ISE is `Σ e²·h`, with `h` the spacing to the
    /// next record (the last record reuses the previous spacing) and `t`
    /// measured from the first record.
    pub fn evaluate(self, trace: &Trace, signal: Signal) -> f64 {
        let recs = &trace.records;
        if recs.is_empty() {
            return 0.0;
        }
        if self == Objective::Rms {
            return (recs.iter().map(|r| signal.value(r).powi(2)).sum::<f64>() / recs.len() as f64).sqrt();
        }
        let t0 = recs[0].t;
        let mut total = 0.0;
        for (i, r) in recs.iter().enumerate() {
            let h = match (recs.get(i + 1), i.checked_sub(1).map(|j| &recs[j])) {
                (Some(next), _) => next.t - r.t,
                (None, Some(prev)) => r.t - prev.t,
                (None, None) => 0.0,
            };
            let e = signal.value(r);
            total += match self {
                Objective::Itae => (r.t - t0) * e.abs() * h,
                _ => e * e * h,
            };
        }
        total
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "itae" => Ok(Objective::Itae),
            "ise" => Ok(Objective::Ise),
            "rms" => Ok(Objective::Rms),
            other => Err(format!("unknown objective `{other}` (expected itae, ise or rms)")),
        }
    }
}

#[cfg(test)]
pub(crate) fn synthetic_trace(name: &str, ts: &[f64], values: &[f64]) -> Trace {
    use crate::world::VehicleState;
    let records = ts
        .iter()
        .zip(values)
        .map(|(&t, &v)| TraceRecord {
            t,
            leader: VehicleState::new(0.0, 0.0, 0.0, 0.0),
            follower: VehicleState::new(0.0, 0.0, 0.0, 0.0),
            reading: None,
            detected: true,
            pixel_error_x: v,
            area_error: v,
            steering_pwm: 90.0 + v,
            throttle_pwm: 90.0,
            lateral_dev: 0.0,
            follow_dist: 1.0,
            loop_cost_us: 0.0,
            op_count: 3,
        })
        .collect();
    Trace { scenario: name.into(), label: String::new(), config: None, records, stop: None }
}
