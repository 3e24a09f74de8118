//! Closed-loop scenarios.
//!
//! Each physics step of `dt` seconds produces one [`TraceRecord`]. The
//! camera and the controllers run only on frame ticks (every
//! `1 / frame_rate` seconds); between frames the last command is held.
//! Physics integrates in sub-steps of at most 2 ms.

mod scenario;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::control::{
    effort_to_pwm, pwm_to_actuation, ControlCommand, ControlError, FuzzyConfig, FuzzyController, OpCount, PidConfig,
    PidController,
};
use crate::sensor::{self, area_at_range, CameraIntrinsics, SensorReading, TargetPanel};
use crate::world::{self, LeaderKind, LeaderScript, Point, VehicleParams, VehicleState, WorldError};

pub use scenario::{parse_scenario, read_scenario};

/// Longest physics sub-step, seconds.
pub const MAX_PHYSICS_STEP: f64 = 0.002;
/// Runs with a stationary leader end once the follower has been slower than
/// this for [`REST_HOLD_TIME`].
pub const REST_SPEED: f64 = 0.01;
pub const REST_HOLD_TIME: f64 = 1.0;
const MAX_STEPS: f64 = 1.0e7;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario file: {0}")]
    Parse(String),
    #[error("unknown scenario key `{0}`")]
    UnknownKey(String),
    #[error("scenario key `{key}`: {msg}")]
    InvalidValue { key: String, msg: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("{channel} channel uses {kind} control but the scenario has no `{kind}.{channel}` section")]
    MissingController { channel: &'static str, kind: &'static str },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Steering,
    Throttle,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Steering => "steering",
            Channel::Throttle => "throttle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Pid,
    Fuzzy,
    /// Channel held at neutral.
    Off,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Pid => "pid",
            ControllerKind::Fuzzy => "fuzzy",
            ControllerKind::Off => "off",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PidSettings {
    pub config: PidConfig,
    pub output_filter_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzySettings {
    pub config: FuzzyConfig,
    pub filter_alpha: Option<f64>,
}

/// Controller choice and tuning for one channel. PID sees the error
/// normalized by the channel's error scale (half the image width, or the
/// area setpoint); fuzzy sees raw pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub kind: ControllerKind,
    pub pid: Option<PidSettings>,
    pub fuzzy: Option<FuzzySettings>,
    /// Servo units per unit effort.
    pub pwm_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LostTargetPolicy {
    HoldLast,
    Stop,
}

/// Which procedure a scenario file asks for.
#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Run,
    StepResponse { separations: Vec<f64> },
    LateralOffset { offset: f64, leader_speed: f64 },
    PathFollow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub leader: LeaderScript,
    pub follower_start: VehicleState,
    pub follower_params: VehicleParams,
    pub camera: CameraIntrinsics,
    pub panel: TargetPanel,
    pub setpoint_area: f64,
    /// Half-width of uniform noise added to `x_px`; zero disables it.
    pub jitter_px: f64,
    pub lost_target: LostTargetPolicy,
    /// Mean absolute pixel error over the final 20% of a run below which the
    /// steering loop counts as settled.
    pub steady_state_px: f64,
    pub steering: ChannelConfig,
    pub throttle: ChannelConfig,
    pub experiment: Experiment,
}

/// Following range the default scenarios regulate to, meters.
pub const DEFAULT_SETPOINT_RANGE: f64 = 0.8;

impl Default for ScenarioConfig {
    fn default() -> Self {
        let camera = CameraIntrinsics::default();
        let panel = TargetPanel::default();
        let setpoint_area = area_at_range(&camera, &panel, DEFAULT_SETPOINT_RANGE);
        ScenarioConfig {
            name: "default".into(),
            dt: MAX_PHYSICS_STEP,
            duration: 20.0,
            seed: 0,
            leader: LeaderScript::stationary(VehicleState::new(0.0, 0.0, 0.0, 0.0)),
            follower_start: VehicleState::new(-2.0, 0.0, 0.0, 0.0),
            follower_params: VehicleParams::default(),
            camera,
            panel,
            setpoint_area,
            jitter_px: 0.0,
            lost_target: LostTargetPolicy::HoldLast,
            steady_state_px: 5.0,
            steering: ChannelConfig {
                kind: ControllerKind::Pid,
                pid: Some(default_steering_pid()),
                fuzzy: Some(default_steering_fuzzy(&camera)),
                pwm_gain: 90.0,
            },
            throttle: ChannelConfig {
                kind: ControllerKind::Pid,
                pid: Some(default_throttle_pid()),
                fuzzy: Some(default_throttle_fuzzy(setpoint_area)),
                pwm_gain: 90.0,
            },
            experiment: Experiment::Run,
        }
    }
}

pub fn default_steering_pid() -> PidSettings {
    PidSettings {
        config: PidConfig {
            kp: 0.6,
            ki: 0.2,
            kd: 0.05,
            output_limit: 1.0,
            integral_limit: 0.3,
            derivative_filter_alpha: 0.5,
        },
        output_filter_alpha: None,
    }
}

pub fn default_throttle_pid() -> PidSettings {
    PidSettings {
        config: PidConfig {
            kp: 1.3,
            ki: 0.05,
            kd: 4.0,
            output_limit: 1.0,
            integral_limit: 0.5,
            derivative_filter_alpha: 0.5,
        },
        output_filter_alpha: None,
    }
}

pub fn default_steering_fuzzy(camera: &CameraIntrinsics) -> FuzzySettings {
    let span = camera.center_x();
    FuzzySettings { config: FuzzyConfig::standard(span, 5.0 * span, 1.0), filter_alpha: Some(0.3) }
}

pub fn default_throttle_fuzzy(setpoint_area: f64) -> FuzzySettings {
    FuzzySettings { config: FuzzyConfig::standard(setpoint_area, 4.0 * setpoint_area, 1.0), filter_alpha: Some(0.3) }
}

impl ScenarioConfig {
    pub fn channel(&self, channel: Channel) -> &ChannelConfig {
        match channel {
            Channel::Steering => &self.steering,
            Channel::Throttle => &self.throttle,
        }
    }

    pub fn channel_mut(&mut self, channel: Channel) -> &mut ChannelConfig {
        match channel {
            Channel::Steering => &mut self.steering,
            Channel::Throttle => &mut self.throttle,
        }
    }

    /// Physics records per camera frame.
    pub fn frame_stride(&self) -> Result<usize, ScenarioError> {
        let ratio = self.camera.frame_period() / self.dt;
        let stride = ratio.round();
        if stride < 1.0 || (ratio - stride).abs() > 1e-6 * stride {
            return Err(ScenarioError::Invalid(format!(
                "camera frame period {} s is not a whole multiple of dt = {} s",
                self.camera.frame_period(),
                self.dt
            )));
        }
        Ok(stride as usize)
    }

    pub fn record_count(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize
    }

    /// Copy with both channels switched to `kind` (channels that are off stay
    /// off).
    pub fn with_controllers(&self, kind: ControllerKind) -> ScenarioConfig {
        let mut cfg = self.clone();
        for ch in [Channel::Steering, Channel::Throttle] {
            let c = cfg.channel_mut(ch);
            if c.kind != ControllerKind::Off {
                c.kind = kind;
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return invalid(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return invalid(format!("duration {} must be at least dt", self.duration));
        }
        if self.duration / self.dt > MAX_STEPS {
            return invalid("duration / dt exceeds 1e7 steps".into());
        }
        self.follower_params.validate()?;
        self.camera.validate().map_err(ScenarioError::Invalid)?;
        self.panel.validate().map_err(ScenarioError::Invalid)?;
        self.leader.validate(self.follower_params.max_speed)?;
        if !self.follower_start.is_finite() {
            return invalid("follower start pose must be finite".into());
        }
        if !(0.0..=self.follower_params.max_speed).contains(&self.follower_start.speed) {
            return invalid("follower start speed outside [0, max_speed]".into());
        }
        if !(self.setpoint_area.is_finite() && self.setpoint_area > 0.0) {
            return invalid("setpoint_area must be positive".into());
        }
        if !(self.jitter_px.is_finite() && self.jitter_px >= 0.0) {
            return invalid("jitter_px must be non-negative".into());
        }
        if !(self.steady_state_px.is_finite() && self.steady_state_px > 0.0) {
            return invalid("steady_state_px must be positive".into());
        }
        self.frame_stride()?;
        for ch in [Channel::Steering, Channel::Throttle] {
            let c = self.channel(ch);
            if !(c.pwm_gain.is_finite() && c.pwm_gain > 0.0) {
                return invalid(format!("{} pwm_gain must be positive", ch.as_str()));
            }
            match c.kind {
                ControllerKind::Pid => {
                    let pid = c.pid.as_ref().ok_or(ScenarioError::MissingController { channel: ch.as_str(), kind: "pid" })?;
                    PidController::new(pid.config, pid.output_filter_alpha)?;
                }
                ControllerKind::Fuzzy => {
                    let fz =
                        c.fuzzy.as_ref().ok_or(ScenarioError::MissingController { channel: ch.as_str(), kind: "fuzzy" })?;
                    FuzzyController::new(fz.config.clone(), fz.filter_alpha)?;
                }
                ControllerKind::Off => {}
            }
        }
        Ok(())
    }

    /// Along-track distance from the follower's start back from the leader's
    /// start.
    fn start_separation(&self) -> f64 {
        let (c, s) = self.leader.start.forward();
        (self.leader.start.x - self.follower_start.x) * c + (self.leader.start.y - self.follower_start.y) * s
    }
}

/// One controller instance for one channel.
enum Loop {
    Pid { ctl: PidController, scale: f64 },
    Fuzzy(FuzzyController),
    Off,
}

impl Loop {
    fn new(cfg: &ChannelConfig, error_scale: f64) -> Result<Self, ScenarioError> {
        Ok(match cfg.kind {
            ControllerKind::Pid => {
                let s = cfg.pid.as_ref().expect("validated");
                Loop::Pid { ctl: PidController::new(s.config, s.output_filter_alpha)?, scale: error_scale }
            }
            ControllerKind::Fuzzy => {
                let s = cfg.fuzzy.as_ref().expect("validated");
                Loop::Fuzzy(FuzzyController::new(s.config.clone(), s.filter_alpha)?)
            }
            ControllerKind::Off => Loop::Off,
        })
    }

    fn step(&mut self, error: f64, dt: f64, ops: &mut OpCount) -> Result<f64, ControlError> {
        match self {
            Loop::Pid { ctl, scale } => {
                ops.add(1);
                ctl.step(error / *scale, dt, ops)
            }
            Loop::Fuzzy(ctl) => ctl.step(error, dt, ops),
            Loop::Off => Ok(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub leader: VehicleState,
    pub follower: VehicleState,
    /// Present only on camera frames where the panel was detected.
    pub reading: Option<SensorReading>,
    /// Whether the most recent camera frame detected the panel.
    pub detected: bool,
    pub pixel_error_x: f64,
    pub area_error: f64,
    pub steering_pwm: f64,
    pub throttle_pwm: f64,
    pub lateral_dev: f64,
    pub follow_dist: f64,
    pub loop_cost_us: f64,
    pub op_count: u64,
}

impl TraceRecord {
    /// Field-for-field equality except the wall-clock `loop_cost_us`.
    pub fn eq_ignoring_timing(&self, other: &TraceRecord) -> bool {
        TraceRecord { loop_cost_us: 0.0, ..*self } == TraceRecord { loop_cost_us: 0.0, ..*other }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    /// The follower stayed below [`REST_SPEED`] for [`REST_HOLD_TIME`] behind
    /// a stationary leader.
    FollowerAtRest { t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scenario: String,
    /// Free-form run label, e.g. `pid` or `sep_2`.
    pub label: String,
    pub config: Option<ScenarioConfig>,
    pub records: Vec<TraceRecord>,
    pub stop: Option<StopReason>,
}

impl Trace {
    pub fn eq_ignoring_timing(&self, other: &Trace) -> bool {
        self.scenario == other.scenario
            && self.stop == other.stop
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| a.eq_ignoring_timing(b))
    }

    /// Frame-tick records that lost the panel.
    pub fn lost_detection_count(&self) -> usize {
        self.records.iter().filter(|r| !r.detected).count()
    }
}

/// Runs the closed loop described by `config` and logs every physics step.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Trace, ScenarioError> {
    config.validate()?;
    let n = config.record_count();
    let stride = config.frame_stride()?;
    let control_dt = stride as f64 * config.dt;
    let substeps = (config.dt / MAX_PHYSICS_STEP - 1e-9).ceil().max(1.0) as usize;
    let sub_dt = config.dt / substeps as f64;
    let params = &config.follower_params;
    let track: Vec<Point> = config.leader.track();
    let stop_at_rest = config.leader.kind == LeaderKind::Stationary;

    let mut steering = Loop::new(&config.steering, config.camera.center_x())?;
    let mut throttle = Loop::new(&config.throttle, config.setpoint_area)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut follower = config.follower_start;
    let mut command = ControlCommand::NEUTRAL;
    let mut pixel_error = 0.0;
    let mut area_err = 0.0;
    let mut detected = false;
    let mut at_rest_for = 0.0;
    let mut records = Vec::with_capacity(n);
    let mut stop = None;

    for k in 0..n {
        let t = k as f64 * config.dt;
        let leader = world::leader_pose(&config.leader, t)?;
        let mut reading = None;
        let mut loop_cost_us = 0.0;
        let mut ops = OpCount::default();

        if k % stride == 0 {
            let started = Instant::now();
            let mut obs = sensor::observe(&config.camera, &follower, &leader, &config.panel, t);
            if let Some(r) = obs.as_mut() {
                if config.jitter_px > 0.0 {
                    let noise = rng.random_range(-config.jitter_px..=config.jitter_px);
                    r.x_px = (r.x_px + noise).clamp(0.0, config.camera.image_width as f64);
                }
            }
            match obs {
                Some(r) => {
                    detected = true;
                    pixel_error = sensor::pixel_error_x(&r, &config.camera);
                    area_err = sensor::area_error(&r, config.setpoint_area);
                    let steer_effort = steering.step(pixel_error, control_dt, &mut ops)?;
                    let throttle_effort = throttle.step(area_err, control_dt, &mut ops)?;
                    command = ControlCommand {
                        steering_pwm: effort_to_pwm(steer_effort, config.steering.pwm_gain),
                        throttle_pwm: effort_to_pwm(throttle_effort, config.throttle.pwm_gain),
                    };
                    reading = Some(r);
                }
                None => {
                    detected = false;
                    if config.lost_target == LostTargetPolicy::Stop {
                        command = ControlCommand::NEUTRAL;
                    }
                }
            }
            loop_cost_us = started.elapsed().as_secs_f64() * 1e6;
        }

        records.push(TraceRecord {
            t,
            leader,
            follower,
            reading,
            detected,
            pixel_error_x: pixel_error,
            area_error: area_err,
            steering_pwm: command.steering_pwm,
            throttle_pwm: command.throttle_pwm,
            lateral_dev: world::lateral_deviation(&follower, &track)?,
            follow_dist: world::following_distance(&follower, &leader)?,
            loop_cost_us,
            op_count: ops.get(),
        });

        let (steer, speed_cmd) = pwm_to_actuation(&command, params);
        for _ in 0..substeps {
            follower = world::step_bicycle(&follower, params, steer, speed_cmd, sub_dt)?;
        }

        if stop_at_rest {
            if follower.speed < REST_SPEED {
                at_rest_for += config.dt;
                if at_rest_for >= REST_HOLD_TIME - 1e-9 {
                    stop = Some(StopReason::FollowerAtRest { t });
                    break;
                }
            } else {
                at_rest_for = 0.0;
            }
        }
    }

    Ok(Trace { scenario: config.name.clone(), label: String::new(), config: Some(config.clone()), records, stop })
}

/// Throttle step tests: for each separation the follower starts that far
/// directly behind a stationary leader with steering locked at neutral.
pub fn run_step_response(base: &ScenarioConfig, separations: &[f64]) -> Result<Vec<Trace>, ScenarioError> {
    let configs = separations
        .iter()
        .map(|&sep| {
            if !(sep.is_finite() && sep > base.camera.min_range) {
                return Err(ScenarioError::Invalid(format!(
                    "separation {sep} m must exceed the camera's minimum range {} m",
                    base.camera.min_range
                )));
            }
            if sep > base.camera.max_range {
                return Err(ScenarioError::Invalid(format!(
                    "separation {sep} m is beyond the camera's maximum range {} m",
                    base.camera.max_range
                )));
            }
            let mut cfg = base.clone();
            let start = VehicleState { speed: 0.0, ..base.leader.start };
            cfg.leader = LeaderScript::stationary(start);
            let (c, s) = start.forward();
            cfg.follower_start = VehicleState::new(start.x - sep * c, start.y - sep * s, start.heading, 0.0);
            cfg.steering.kind = ControllerKind::Off;
            Ok((sep, cfg))
        })
        .collect::<Result<Vec<_>, _>>()?;
    configs
        .par_iter()
        .map(|(sep, cfg)| {
            let mut trace = run_scenario(cfg)?;
            trace.label = format!("sep_{sep}");
            Ok(trace)
        })
        .collect()
}

/// Follower starts `offset` meters to the left (negative: right) of the
/// leader's track, at the base scenario's along-track separation. The
/// leader stays put when `leader_speed` is zero, otherwise drives straight.
pub fn run_lateral_offset(base: &ScenarioConfig, offset: f64, leader_speed: f64) -> Result<Trace, ScenarioError> {
    if !(offset.is_finite() && offset != 0.0) {
        return Err(ScenarioError::Invalid(format!("lateral offset must be non-zero, got {offset}")));
    }
    let mut cfg = base.clone();
    let start = VehicleState { speed: 0.0, ..base.leader.start };
    cfg.leader = if leader_speed == 0.0 {
        LeaderScript::stationary(start)
    } else {
        LeaderScript::straight_line(start, leader_speed)
    };
    cfg.follower_start = offset_start(base, &start, offset);
    run_scenario(&cfg)
}

fn offset_start(base: &ScenarioConfig, leader_start: &VehicleState, offset: f64) -> VehicleState {
    let sep = base.start_separation();
    let (c, s) = leader_start.forward();
    let (lx, ly) = leader_start.left();
    VehicleState::new(
        leader_start.x - sep * c + offset * lx,
        leader_start.y - sep * s + offset * ly,
        leader_start.heading,
        base.follower_start.speed,
    )
}

/// Both loops active while the leader follows `path`; the follower starts
/// behind the path's start at the base scenario's separation.
pub fn run_path_follow(base: &ScenarioConfig, path: &LeaderScript) -> Result<Trace, ScenarioError> {
    if path.kind == LeaderKind::Stationary {
        return Err(ScenarioError::Invalid("path following needs a moving leader script".into()));
    }
    let mut cfg = base.clone();
    cfg.leader = path.clone();
    let (c, s) = path.start.forward();
    let sep = base.start_separation();
    cfg.follower_start =
        VehicleState::new(path.start.x - sep * c, path.start.y - sep * s, path.start.heading, base.follower_start.speed);
    run_scenario(&cfg)
}

/// Dispatches on the scenario's [`Experiment`].
pub fn run_experiment(config: &ScenarioConfig) -> Result<Vec<Trace>, ScenarioError> {
    match &config.experiment {
        Experiment::Run => Ok(vec![run_scenario(config)?]),
        Experiment::StepResponse { separations } => run_step_response(config, separations),
        Experiment::LateralOffset { offset, leader_speed } => Ok(vec![run_lateral_offset(config, *offset, *leader_speed)?]),
        Experiment::PathFollow => Ok(vec![run_path_follow(config, &config.leader)?]),
    }
}
