//! Scenario files.
//!
//! A scenario is TOML written as flat dotted keys:
//!
//! ```toml
//! name = "lateral_moving"
//! duration = 20.0
//! experiment.kind = "lateral_offset"
//! experiment.offset = 1.0
//! experiment.leader_speed = 1.0
//! controller.steering.kind = "pid"
//! pid.steering.kp = 1.2
//! fuzzy.steering.error_span = 160.0
//! ```
//!
//! Every key is optional and falls back to [`ScenarioConfig::default`],
//! except controller sections: a `pid.<channel>` or `fuzzy.<channel>` section
//! exists only if at least one of its keys is present. Unknown keys are
//! rejected.

use std::collections::BTreeMap;
use std::path::Path;

use toml::Value;

use super::{
    ChannelConfig, ControllerKind, Experiment, FuzzySettings, LostTargetPolicy, PidSettings, ScenarioConfig,
    ScenarioError,
};
use crate::control::fuzzy::universe;
use crate::control::{FuzzyConfig, FuzzySet, MembershipFunction};
use crate::sensor::area_at_range;
use crate::world::{LeaderKind, LeaderScript, Point, SpeedProfile, VehicleState};

pub fn read_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
    let mut keys = Keys::default();
    flatten("", &table, &mut keys.0);
    let cfg = build(&mut keys)?;
    if let Some(unknown) = keys.0.keys().next() {
        return Err(ScenarioError::UnknownKey(unknown.clone()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidValue { key: key.to_string(), msg: msg.into() }
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ScenarioError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(key, "expected a number")),
    }
}

fn as_f64_list(key: &str, v: &Value) -> Result<Vec<f64>, ScenarioError> {
    match v {
        Value::Array(items) => items.iter().map(|x| as_f64(key, x)).collect(),
        _ => Err(bad(key, "expected an array of numbers")),
    }
}

fn as_str_list(key: &str, v: &Value) -> Result<Vec<String>, ScenarioError> {
    match v {
        Value::Array(items) => items
            .iter()
            .map(|x| x.as_str().map(str::to_string).ok_or_else(|| bad(key, "expected an array of strings")))
            .collect(),
        _ => Err(bad(key, "expected an array of strings")),
    }
}

/// Remaining, not yet consumed keys.
#[derive(Default)]
struct Keys(BTreeMap<String, Value>);

impl Keys {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.0.remove(key)
    }

    fn has_prefix(&self, prefix: &str) -> bool {
        let dotted = format!("{prefix}.");
        self.0.keys().any(|k| k.starts_with(&dotted))
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, ScenarioError> {
        self.take(key).map_or(Ok(default), |v| as_f64(key, &v))
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>, ScenarioError> {
        self.take(key).map(|v| as_f64(key, &v)).transpose()
    }

    fn string(&mut self, key: &str) -> Result<Option<String>, ScenarioError> {
        self.take(key)
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| bad(key, "expected a string")))
            .transpose()
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64, ScenarioError> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if i >= 0 => Ok(i as u64),
            Some(_) => Err(bad(key, "expected a non-negative integer")),
        }
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>, ScenarioError> {
        self.take(key).map(|v| as_f64_list(key, &v)).transpose()
    }
}

fn pose(key: &str, values: &[f64]) -> Result<VehicleState, ScenarioError> {
    match values {
        [x, y, heading] => Ok(VehicleState::new(*x, *y, *heading, 0.0)),
        _ => Err(bad(key, "expected [x, y, heading]")),
    }
}

fn build(keys: &mut Keys) -> Result<ScenarioConfig, ScenarioError> {
    let d = ScenarioConfig::default();
    let mut cfg = ScenarioConfig {
        name: keys.string("name")?.unwrap_or(d.name.clone()),
        dt: keys.f64("dt", d.dt)?,
        duration: keys.f64("duration", d.duration)?,
        seed: keys.u64("seed", d.seed)?,
        jitter_px: keys.f64("jitter_px", d.jitter_px)?,
        steady_state_px: keys.f64("steady_state_px", d.steady_state_px)?,
        ..d.clone()
    };
    cfg.lost_target = match keys.string("lost_target")?.as_deref() {
        None | Some("hold") => LostTargetPolicy::HoldLast,
        Some("stop") => LostTargetPolicy::Stop,
        Some(other) => return Err(bad("lost_target", format!("expected `hold` or `stop`, got `{other}`"))),
    };

    let p = &mut cfg.follower_params;
    p.wheelbase = keys.f64("follower.wheelbase", p.wheelbase)?;
    p.max_steer_angle = keys.f64("follower.max_steer_angle", p.max_steer_angle)?;
    p.max_speed = keys.f64("follower.max_speed", p.max_speed)?;
    p.max_accel = keys.f64("follower.max_accel", p.max_accel)?;
    if let Some(v) = keys.list("follower.start")? {
        cfg.follower_start = pose("follower.start", &v)?;
    }
    cfg.follower_start.speed = keys.f64("follower.speed", cfg.follower_start.speed)?;

    let cam = &mut cfg.camera;
    cam.image_width = keys.u64("camera.image_width", cam.image_width as u64)? as u32;
    cam.image_height = keys.u64("camera.image_height", cam.image_height as u64)? as u32;
    if let Some(deg) = keys.opt_f64("camera.horizontal_fov_deg")? {
        cam.horizontal_fov = deg.to_radians();
    }
    cam.frame_rate = keys.f64("camera.frame_rate", cam.frame_rate)?;
    cam.min_range = keys.f64("camera.min_range", cam.min_range)?;
    cam.max_range = keys.f64("camera.max_range", cam.max_range)?;

    let panel = &mut cfg.panel;
    panel.width = keys.f64("panel.width", panel.width)?;
    panel.height = keys.f64("panel.height", panel.height)?;
    panel.rear_offset = keys.f64("panel.rear_offset", panel.rear_offset)?;

    cfg.setpoint_area = match (keys.opt_f64("setpoint_area")?, keys.opt_f64("setpoint_range")?) {
        (Some(_), Some(_)) => return Err(bad("setpoint_range", "give either setpoint_area or setpoint_range")),
        (Some(area), None) => area,
        (None, Some(range)) => area_at_range(&cfg.camera, &cfg.panel, range),
        (None, None) => area_at_range(&cfg.camera, &cfg.panel, super::DEFAULT_SETPOINT_RANGE),
    };

    cfg.leader = build_leader(keys, &d)?;
    cfg.experiment = build_experiment(keys)?;

    let mut steering = d.steering.clone();
    steering.fuzzy = Some(super::default_steering_fuzzy(&cfg.camera));
    let mut throttle = d.throttle.clone();
    throttle.fuzzy = Some(super::default_throttle_fuzzy(cfg.setpoint_area));
    cfg.steering = build_channel(keys, "steering", &steering)?;
    cfg.throttle = build_channel(keys, "throttle", &throttle)?;
    Ok(cfg)
}

fn build_leader(keys: &mut Keys, d: &ScenarioConfig) -> Result<LeaderScript, ScenarioError> {
    let kind = match keys.string("leader.kind")?.as_deref() {
        None | Some("stationary") => LeaderKind::Stationary,
        Some("straight_line") => LeaderKind::StraightLine,
        Some("waypoint_path") => LeaderKind::WaypointPath,
        Some(other) => return Err(bad("leader.kind", format!("unknown leader kind `{other}`"))),
    };
    let start = match keys.list("leader.start")? {
        Some(v) => pose("leader.start", &v)?,
        None => d.leader.start,
    };
    let profile = match (keys.opt_f64("leader.speed")?, keys.take("leader.speed_profile")) {
        (Some(_), Some(_)) => return Err(bad("leader.speed_profile", "give either leader.speed or leader.speed_profile")),
        (Some(v), None) => SpeedProfile::constant(v),
        (None, Some(v)) => {
            let key = "leader.speed_profile";
            let Value::Array(rows) = v else { return Err(bad(key, "expected [[t, speed], ...]")) };
            let mut segs = Vec::with_capacity(rows.len());
            for row in &rows {
                match as_f64_list(key, row)?.as_slice() {
                    [t, s] => segs.push((*t, *s)),
                    _ => return Err(bad(key, "expected [[t, speed], ...]")),
                }
            }
            SpeedProfile::new(segs)?
        }
        (None, None) => SpeedProfile::constant(0.0),
    };
    let waypoints = match keys.take("leader.waypoints") {
        None => Vec::new(),
        Some(Value::Array(rows)) => rows
            .iter()
            .map(|row| match as_f64_list("leader.waypoints", row)?.as_slice() {
                [x, y] => Ok(Point::new(*x, *y)),
                _ => Err(bad("leader.waypoints", "expected [[x, y], ...]")),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(bad("leader.waypoints", "expected [[x, y], ...]")),
    };
    Ok(match kind {
        LeaderKind::Stationary => LeaderScript::stationary(start),
        LeaderKind::StraightLine => LeaderScript { kind, start, speed_profile: profile, waypoints: Vec::new() },
        LeaderKind::WaypointPath => LeaderScript::waypoint_path(waypoints, profile)?,
    })
}

fn build_experiment(keys: &mut Keys) -> Result<Experiment, ScenarioError> {
    let kind = keys.string("experiment.kind")?;
    let separations = keys.list("experiment.separations")?;
    let offset = keys.opt_f64("experiment.offset")?;
    let leader_speed = keys.opt_f64("experiment.leader_speed")?;
    Ok(match kind.as_deref() {
        None | Some("run") => Experiment::Run,
        Some("step_response") => Experiment::StepResponse {
            separations: separations.ok_or_else(|| bad("experiment.separations", "required for step_response"))?,
        },
        Some("lateral_offset") => Experiment::LateralOffset {
            offset: offset.ok_or_else(|| bad("experiment.offset", "required for lateral_offset"))?,
            leader_speed: leader_speed.unwrap_or(0.0),
        },
        Some("path_follow") => Experiment::PathFollow,
        Some(other) => return Err(bad("experiment.kind", format!("unknown experiment `{other}`"))),
    })
}

fn build_channel(keys: &mut Keys, channel: &str, defaults: &ChannelConfig) -> Result<ChannelConfig, ScenarioError> {
    let kind_key = format!("controller.{channel}.kind");
    let kind = match keys.string(&kind_key)?.as_deref() {
        None => defaults.kind,
        Some("pid") => ControllerKind::Pid,
        Some("fuzzy") => ControllerKind::Fuzzy,
        Some("off") => ControllerKind::Off,
        Some(other) => return Err(bad(&kind_key, format!("expected pid, fuzzy or off, got `{other}`"))),
    };
    let pwm_gain = keys.f64(&format!("controller.{channel}.pwm_gain"), defaults.pwm_gain)?;

    let pid_prefix = format!("pid.{channel}");
    let pid = if keys.has_prefix(&pid_prefix) {
        let d = defaults.pid.clone().expect("default pid settings");
        let mut c = d.config;
        let k = |name: &str| format!("{pid_prefix}.{name}");
        c.kp = keys.f64(&k("kp"), c.kp)?;
        c.ki = keys.f64(&k("ki"), c.ki)?;
        c.kd = keys.f64(&k("kd"), c.kd)?;
        c.output_limit = keys.f64(&k("output_limit"), c.output_limit)?;
        c.integral_limit = keys.f64(&k("integral_limit"), c.integral_limit)?;
        c.derivative_filter_alpha = keys.f64(&k("derivative_filter_alpha"), c.derivative_filter_alpha)?;
        let output_filter_alpha = keys.opt_f64(&k("output_filter_alpha"))?.or(d.output_filter_alpha);
        Some(PidSettings { config: c, output_filter_alpha })
    } else {
        None
    };

    let fz_prefix = format!("fuzzy.{channel}");
    let fuzzy = if keys.has_prefix(&fz_prefix) {
        Some(build_fuzzy(keys, &fz_prefix, defaults.fuzzy.as_ref().expect("default fuzzy settings"))?)
    } else {
        None
    };
    Ok(ChannelConfig { kind, pid, fuzzy, pwm_gain })
}

fn build_fuzzy(keys: &mut Keys, prefix: &str, d: &FuzzySettings) -> Result<FuzzySettings, ScenarioError> {
    let k = |name: &str| format!("{prefix}.{name}");
    let (d_err, d_delta, d_out) = (
        universe(&d.config.error_sets).1,
        universe(&d.config.delta_sets).1,
        d.config.output_universe().1,
    );
    let error_span = keys.f64(&k("error_span"), d_err)?;
    let delta_span = keys.f64(&k("delta_span"), d_delta)?;
    let output_span = keys.f64(&k("output_span"), d_out)?;
    let mut config = FuzzyConfig::standard(error_span, delta_span, output_span);
    config.grid_points = keys.u64(&k("grid_points"), config.grid_points as u64)? as usize;

    for (name, target) in [("error_sets", 0), ("delta_sets", 1), ("output_sets", 2)] {
        let key = k(name);
        if let Some(v) = keys.take(&key) {
            let sets = as_str_list(&key, &v)?.iter().map(|s| parse_set(&key, s)).collect::<Result<Vec<_>, _>>()?;
            match target {
                0 => config.error_sets = sets,
                1 => config.delta_sets = sets,
                _ => config.output_sets = sets,
            }
        }
    }
    let rules_key = k("rules");
    if let Some(v) = keys.take(&rules_key) {
        config.rules = parse_rules(&rules_key, &as_str_list(&rules_key, &v)?, &config)?;
    } else if config.error_sets.len() * config.delta_sets.len() != config.rules.len() {
        return Err(bad(&rules_key, "custom input sets need an explicit rule table"));
    }

    let filter_alpha = match keys.opt_f64(&k("filter_alpha"))? {
        Some(1.0) => None,
        Some(a) => Some(a),
        None => d.filter_alpha,
    };
    Ok(FuzzySettings { config, filter_alpha })
}

/// `"LABEL tri a b c"` or `"LABEL trap a b c d"`.
fn parse_set(key: &str, text: &str) -> Result<FuzzySet, ScenarioError> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let nums = |xs: &[&str]| -> Result<Vec<f64>, ScenarioError> {
        xs.iter().map(|x| x.parse::<f64>().map_err(|_| bad(key, format!("bad number `{x}` in `{text}`")))).collect()
    };
    match parts.as_slice() {
        [label, "tri", rest @ ..] if rest.len() == 3 => {
            let n = nums(rest)?;
            Ok(FuzzySet::new(*label, MembershipFunction::triangular(n[0], n[1], n[2])))
        }
        [label, "trap", rest @ ..] if rest.len() == 4 => {
            let n = nums(rest)?;
            Ok(FuzzySet::new(*label, MembershipFunction::trapezoidal(n[0], n[1], n[2], n[3])))
        }
        _ => Err(bad(key, format!("expected `LABEL tri a b c` or `LABEL trap a b c d`, got `{text}`"))),
    }
}

/// `"ERROR DELTA -> OUTPUT"` per entry; the table must be total.
fn parse_rules(key: &str, lines: &[String], config: &FuzzyConfig) -> Result<Vec<usize>, ScenarioError> {
    let index = |sets: &[FuzzySet], label: &str| {
        sets.iter().position(|s| s.label == label).ok_or_else(|| bad(key, format!("unknown label `{label}`")))
    };
    let n_delta = config.delta_sets.len();
    let mut table = vec![None; config.error_sets.len() * n_delta];
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [e, dl, "->", o] = parts.as_slice() else {
            return Err(bad(key, format!("expected `ERROR DELTA -> OUTPUT`, got `{line}`")));
        };
        let slot = index(&config.error_sets, e)? * n_delta + index(&config.delta_sets, dl)?;
        if table[slot].replace(index(&config.output_sets, o)?).is_some() {
            return Err(bad(key, format!("duplicate rule for `{e} {dl}`")));
        }
    }
    table
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.ok_or_else(|| {
                bad(key, format!("no rule for `{} {}`", config.error_sets[i / n_delta].label, config.delta_sets[i % n_delta].label))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default_minus_controller_sections() {
        let cfg = parse_scenario("").unwrap_err();
        // Both channels default to PID but no pid sections were given.
        assert!(matches!(cfg, ScenarioError::MissingController { .. }));
    }

    #[test]
    fn parses_full_example() {
        let text = r#"
name = "demo"
dt = 0.002
duration = 5
seed = 3
setpoint_range = 1.0
leader.kind = "straight_line"
leader.start = [0.0, 0.0, 0.0]
leader.speed = 1.0
follower.start = [-2.0, 1.0, 0.0]
experiment.kind = "lateral_offset"
experiment.offset = 1.0
experiment.leader_speed = 1.0
controller.steering.kind = "fuzzy"
controller.throttle.kind = "pid"
pid.throttle.kp = 0.7
fuzzy.steering.error_span = 160
fuzzy.steering.filter_alpha = 0.5
"#;
        let cfg = parse_scenario(text).unwrap();
        assert_eq!(cfg.name, "demo");
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.steering.kind, ControllerKind::Fuzzy);
        assert_eq!(cfg.throttle.pid.as_ref().unwrap().config.kp, 0.7);
        assert!(cfg.steering.pid.is_none());
        assert_eq!(cfg.steering.fuzzy.as_ref().unwrap().filter_alpha, Some(0.5));
        assert_eq!(cfg.experiment, Experiment::LateralOffset { offset: 1.0, leader_speed: 1.0 });
        assert_eq!(cfg.leader.kind, LeaderKind::StraightLine);
        assert_eq!(cfg.setpoint_area, area_at_range(&cfg.camera, &cfg.panel, 1.0));
    }

    #[test]
    fn unknown_key_is_named() {
        let text = "pid.steering.kp = 1.0\npid.throttle.kp = 1.0\npid.steering.kpp = 2.0\n";
        match parse_scenario(text) {
            Err(ScenarioError::UnknownKey(k)) => assert_eq!(k, "pid.steering.kpp"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn custom_sets_and_rules() {
        let text = r#"
controller.steering.kind = "fuzzy"
controller.throttle.kind = "off"
fuzzy.steering.error_sets = ["N trap -160 -160 -80 0", "Z tri -80 0 80", "P trap 0 80 160 160"]
fuzzy.steering.delta_sets = ["any trap -500 -500 500 500"]
fuzzy.steering.output_sets = ["L tri -1 -1 0", "C tri -1 0 1", "R tri 0 1 1"]
fuzzy.steering.rules = ["N any -> L", "Z any -> C", "P any -> R"]
"#;
        let cfg = parse_scenario(text).unwrap();
        let fz = &cfg.steering.fuzzy.as_ref().unwrap().config;
        assert_eq!(fz.rules, vec![0, 1, 2]);

        let incomplete = text.replace(", \"P any -> R\"", "");
        assert!(matches!(parse_scenario(&incomplete), Err(ScenarioError::InvalidValue { .. })));
    }

    #[test]
    fn type_errors_name_the_key() {
        match parse_scenario("dt = \"fast\"") {
            Err(ScenarioError::InvalidValue { key, .. }) => assert_eq!(key, "dt"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_scenario("dt = [1"), Err(ScenarioError::Parse(_))));
    }
}
