//! Discrete controllers and the servo-command mapping.
//!
//! Controller efforts are normalized to roughly `±1` per channel. The
//! steering and throttle channels turn effort into a 0-180 servo value with
//! [`effort_to_pwm`], and [`pwm_to_actuation`] turns servo values back into a
//! steer angle and a speed command for the vehicle model.

pub mod fuzzy;
pub mod pid;

use thiserror::Error;

use crate::world::VehicleParams;

pub use fuzzy::{
    defuzz_centroid, fuzzify, fuzzy_step, infer, Aggregate, FuzzyConfig, FuzzyController, FuzzySet, MembershipFunction,
};
pub use pid::{pid_step, pid_step_counted, PidConfig, PidController, PidState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("non-finite controller input: {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
    #[error("aggregated output membership is zero everywhere; rule coverage is incomplete")]
    EmptyAggregate,
}

/// Running count of arithmetic operations (add, multiply, divide, compare,
/// min/max, transcendental call) performed by instrumented controller code.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct OpCount(pub u64);

impl OpCount {
    #[inline]
    pub fn add(&mut self, n: u64) {
        self.0 += n;
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

/// First-order low-pass filter: `out = alpha * input + (1 - alpha) * out`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFilter {
    pub alpha: f64,
    pub state: f64,
}

impl ExpFilter {
    pub fn new(alpha: f64) -> Result<Self, ControlError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(ControlError::InvalidConfig(format!("filter alpha {alpha} outside (0, 1]")));
        }
        Ok(ExpFilter { alpha, state: 0.0 })
    }
}

pub fn exp_filter_step(filter: ExpFilter, input: f64) -> (f64, ExpFilter) {
    let out = filter.alpha * input + (1.0 - filter.alpha) * filter.state;
    (out, ExpFilter { state: out, ..filter })
}

/// Servo neutral: straight steering, zero throttle.
pub const PWM_NEUTRAL: f64 = 90.0;
pub const PWM_MAX: f64 = 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    pub steering_pwm: f64,
    pub throttle_pwm: f64,
}

impl ControlCommand {
    pub const NEUTRAL: ControlCommand = ControlCommand { steering_pwm: PWM_NEUTRAL, throttle_pwm: PWM_NEUTRAL };
}

impl Default for ControlCommand {
    fn default() -> Self {
        Self::NEUTRAL
    }
}

pub fn effort_to_pwm(effort: f64, channel_gain: f64) -> f64 {
    (PWM_NEUTRAL + channel_gain * effort).clamp(0.0, PWM_MAX)
}

/// Converts servo commands into `(steer_angle, speed_cmd)`.
///
/// Steering above neutral turns right, which is a negative (clockwise)
/// steer angle in the vehicle model. Throttle below neutral is a zero speed
/// command; vehicles never reverse.
pub fn pwm_to_actuation(command: &ControlCommand, params: &VehicleParams) -> (f64, f64) {
    let steer = params.max_steer_angle * (PWM_NEUTRAL - command.steering_pwm) / PWM_NEUTRAL;
    let speed = params.max_speed * (command.throttle_pwm - PWM_NEUTRAL).max(0.0) / PWM_NEUTRAL;
    (steer, speed)
}
