//! Positional discrete PID.
//!
//! The derivative acts on the measurement, not the error, so setpoint steps
//! do not kick the output, and it is smoothed by a first-order filter. The
//! integral is clamped so that its contribution never exceeds
//! `integral_limit`.

use super::{exp_filter_step, ControlError, ExpFilter, OpCount};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidConfig {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub output_limit: f64,
    pub integral_limit: f64,
    pub derivative_filter_alpha: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        PidConfig { kp: 1.0, ki: 0.0, kd: 0.0, output_limit: 1.0, integral_limit: 1.0, derivative_filter_alpha: 1.0 }
    }
}

impl PidConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        if ![self.kp, self.ki, self.kd].iter().all(|g| g.is_finite()) {
            return Err(ControlError::InvalidConfig("PID gains must be finite".into()));
        }
        if !(self.output_limit.is_finite() && self.output_limit > 0.0) {
            return Err(ControlError::InvalidConfig("output_limit must be positive".into()));
        }
        if !(self.integral_limit > 0.0 && self.integral_limit <= self.output_limit) {
            return Err(ControlError::InvalidConfig("integral_limit must lie in (0, output_limit]".into()));
        }
        if !(self.derivative_filter_alpha > 0.0 && self.derivative_filter_alpha <= 1.0) {
            return Err(ControlError::InvalidConfig("derivative_filter_alpha must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    pub integral: f64,
    /// `None` until the first step, so the first derivative is zero.
    pub prev_measurement: Option<f64>,
    pub filtered_derivative: f64,
}

pub fn pid_step(
    config: &PidConfig,
    state: &PidState,
    error: f64,
    measurement: f64,
    dt: f64,
) -> Result<(f64, PidState), ControlError> {
    pid_step_counted(config, state, error, measurement, dt, &mut OpCount::default())
}

/// [`pid_step`] with arithmetic operations tallied into `ops`.
pub fn pid_step_counted(
    config: &PidConfig,
    state: &PidState,
    error: f64,
    measurement: f64,
    dt: f64,
    ops: &mut OpCount,
) -> Result<(f64, PidState), ControlError> {
    if !error.is_finite() {
        return Err(ControlError::NonFinite("error"));
    }
    if !measurement.is_finite() {
        return Err(ControlError::NonFinite("measurement"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(ControlError::InvalidStep(dt));
    }

    let mut integral = state.integral + error * dt;
    ops.add(2);
    if config.ki != 0.0 {
        let bound = config.integral_limit / config.ki.abs();
        integral = integral.clamp(-bound, bound);
        ops.add(4);
    }

    let raw_derivative = match state.prev_measurement {
        Some(prev) => {
            ops.add(2);
            (measurement - prev) / dt
        }
        None => 0.0,
    };
    let a = config.derivative_filter_alpha;
    let filtered_derivative = a * raw_derivative + (1.0 - a) * state.filtered_derivative;
    ops.add(4);

    let effort = config.kp * error + config.ki * integral - config.kd * filtered_derivative;
    let effort = effort.clamp(-config.output_limit, config.output_limit);
    ops.add(7);

    Ok((effort, PidState { integral, prev_measurement: Some(measurement), filtered_derivative }))
}

/// PID loop with optional output smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct PidController {
    pub config: PidConfig,
    pub state: PidState,
    pub output_filter: Option<ExpFilter>,
}

impl PidController {
    pub fn new(config: PidConfig, output_filter_alpha: Option<f64>) -> Result<Self, ControlError> {
        config.validate()?;
        let output_filter = output_filter_alpha.map(ExpFilter::new).transpose()?;
        Ok(PidController { config, state: PidState::default(), output_filter })
    }

    /// One control update for a loop whose setpoint is zero error: the
    /// measurement fed to the derivative path is `-error`.
    pub fn step(&mut self, error: f64, dt: f64, ops: &mut OpCount) -> Result<f64, ControlError> {
        ops.add(1);
        let (effort, state) = pid_step_counted(&self.config, &self.state, error, -error, dt, ops)?;
        self.state = state;
        Ok(match self.output_filter {
            Some(filter) => {
                let (out, next) = exp_filter_step(filter, effort);
                ops.add(4);
                self.output_filter = Some(next);
                out
            }
            None => effort,
        })
    }
}
