//! Ground-truth vehicle kinematics.
//!
//! Both vehicles are modelled as no-slip kinematic bicycles referenced at the
//! rear axle:
//!
//! ```text
//! x' = v cos(heading)
//! y' = v sin(heading)
//! heading' = v tan(steer) / wheelbase
//! ```
//!
//! Positive steer angles turn counterclockwise (left). Integration uses a
//! fixed-step fourth-order Runge-Kutta scheme, and speed follows the command
//! through a first-order slew limit.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),
    #[error("invalid vehicle parameter: {0}")]
    InvalidParams(&'static str),
    #[error("invalid leader script: {0}")]
    InvalidScript(String),
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("leader track is empty")]
    EmptyTrack,
}

/// A point in the ground plane, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Planar pose and forward speed of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Radians counterclockwise from +x, kept in `[-π, π)`.
    pub heading: f64,
    /// Meters per second, never negative.
    pub speed: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        VehicleState { x, y, heading: normalize_angle(heading), speed }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite() && self.speed.is_finite()
    }

    /// Unit vector along the heading.
    pub fn forward(&self) -> (f64, f64) {
        (self.heading.cos(), self.heading.sin())
    }

    /// Unit vector pointing to the vehicle's left.
    pub fn left(&self) -> (f64, f64) {
        let (c, s) = self.forward();
        (-s, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub max_steer_angle: f64,
    pub max_speed: f64,
    pub max_accel: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams { wheelbase: 0.33, max_steer_angle: 0.45, max_speed: 4.0, max_accel: 2.0 }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), WorldError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.wheelbase) {
            return Err(WorldError::InvalidParams("wheelbase must be positive"));
        }
        if !positive(self.max_steer_angle) || self.max_steer_angle >= PI / 2.0 {
            return Err(WorldError::InvalidParams("max_steer_angle must lie in (0, pi/2)"));
        }
        if !positive(self.max_speed) {
            return Err(WorldError::InvalidParams("max_speed must be positive"));
        }
        if !positive(self.max_accel) {
            return Err(WorldError::InvalidParams("max_accel must be positive"));
        }
        Ok(())
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    if (-PI..PI).contains(&angle) {
        return angle;
    }
    let two_pi = 2.0 * PI;
    let mut wrapped = angle - two_pi * ((angle + PI) / two_pi).floor();
    if wrapped >= PI {
        wrapped -= two_pi;
    }
    if wrapped < -PI {
        wrapped += two_pi;
    }
    wrapped
}

/// Advances `state` by `dt` seconds.
///
/// The steer angle is clamped to `±max_steer_angle`. Speed moves toward
/// `speed_cmd` by at most `max_accel * dt` and is capped at `max_speed`; the
/// pose is integrated with RK4 against the resulting linear speed ramp.
pub fn step_bicycle(
    state: &VehicleState,
    params: &VehicleParams,
    steer_angle: f64,
    speed_cmd: f64,
    dt: f64,
) -> Result<VehicleState, WorldError> {
    if !state.is_finite() {
        return Err(WorldError::NonFinite("vehicle state"));
    }
    if !steer_angle.is_finite() {
        return Err(WorldError::NonFinite("steer_angle"));
    }
    if !speed_cmd.is_finite() {
        return Err(WorldError::NonFinite("speed_cmd"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(WorldError::InvalidStep(dt));
    }

    let steer = steer_angle.clamp(-params.max_steer_angle, params.max_steer_angle);
    let target = speed_cmd.clamp(0.0, params.max_speed);
    let max_delta = params.max_accel * dt;
    let v0 = state.speed;
    let v1 = (v0 + (target - v0).clamp(-max_delta, max_delta)).clamp(0.0, params.max_speed);
    let accel = (v1 - v0) / dt;
    let curvature = steer.tan() / params.wheelbase;

    let deriv = |tau: f64, heading: f64| {
        let v = v0 + accel * tau;
        [v * heading.cos(), v * heading.sin(), v * curvature]
    };

    let h = state.heading;
    let k1 = deriv(0.0, h);
    let k2 = deriv(0.5 * dt, h + 0.5 * dt * k1[2]);
    let k3 = deriv(0.5 * dt, h + 0.5 * dt * k2[2]);
    let k4 = deriv(dt, h + dt * k3[2]);
    let incr = |i: usize| dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

    Ok(VehicleState {
        x: state.x + incr(0),
        y: state.y + incr(1),
        heading: normalize_angle(h + incr(2)),
        speed: v1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaderKind {
    Stationary,
    StraightLine,
    WaypointPath,
}

impl LeaderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LeaderKind::Stationary => "stationary",
            LeaderKind::StraightLine => "straight_line",
            LeaderKind::WaypointPath => "waypoint_path",
        }
    }
}

/// Piecewise-constant speed schedule: `(start_time, speed)` pairs sorted by
/// time. The first segment starts at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    segments: Vec<(f64, f64)>,
}

impl SpeedProfile {
    pub fn constant(speed: f64) -> Self {
        SpeedProfile { segments: vec![(0.0, speed)] }
    }

    pub fn new(segments: Vec<(f64, f64)>) -> Result<Self, WorldError> {
        if segments.is_empty() {
            return Err(WorldError::InvalidScript("speed profile is empty".into()));
        }
        if segments[0].0 != 0.0 {
            return Err(WorldError::InvalidScript("speed profile must start at t = 0".into()));
        }
        for w in segments.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(WorldError::InvalidScript("speed profile times must increase".into()));
            }
        }
        if segments.iter().any(|&(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(WorldError::NonFinite("speed profile"));
        }
        Ok(SpeedProfile { segments })
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        self.segments.iter().rev().find(|(start, _)| *start <= t).map_or(0.0, |s| s.1)
    }

    /// Distance covered from time 0 to `t`.
    pub fn distance_at(&self, t: f64) -> f64 {
        let mut dist = 0.0;
        for (i, &(start, speed)) in self.segments.iter().enumerate() {
            if t <= start {
                break;
            }
            let end = self.segments.get(i + 1).map_or(t, |next| next.0.min(t));
            dist += speed * (end - start);
        }
        dist
    }

    /// Earliest time at which the covered distance reaches `dist`, if ever.
    fn time_to_cover(&self, dist: f64) -> Option<f64> {
        let mut covered = 0.0;
        for (i, &(start, speed)) in self.segments.iter().enumerate() {
            let seg_len = self.segments.get(i + 1).map(|next| speed * (next.0 - start));
            match seg_len {
                Some(len) if covered + len < dist => covered += len,
                _ if speed > 0.0 => return Some(start + (dist - covered) / speed),
                Some(len) => covered += len,
                None => return None,
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderScript {
    pub kind: LeaderKind,
    pub start: VehicleState,
    pub speed_profile: SpeedProfile,
    /// Used only by [`LeaderKind::WaypointPath`]; the first waypoint is the
    /// start position.
    pub waypoints: Vec<Point>,
}

impl LeaderScript {
    pub fn stationary(start: VehicleState) -> Self {
        LeaderScript {
            kind: LeaderKind::Stationary,
            start: VehicleState { speed: 0.0, ..start },
            speed_profile: SpeedProfile::constant(0.0),
            waypoints: Vec::new(),
        }
    }

    pub fn straight_line(start: VehicleState, speed: f64) -> Self {
        LeaderScript {
            kind: LeaderKind::StraightLine,
            start,
            speed_profile: SpeedProfile::constant(speed),
            waypoints: Vec::new(),
        }
    }

    pub fn waypoint_path(waypoints: Vec<Point>, profile: SpeedProfile) -> Result<Self, WorldError> {
        if waypoints.len() < 2 {
            return Err(WorldError::InvalidScript("waypoint path needs at least two points".into()));
        }
        let (a, b) = (waypoints[0], waypoints[1]);
        let start = VehicleState::new(a.x, a.y, (b.y - a.y).atan2(b.x - a.x), 0.0);
        let script = LeaderScript { kind: LeaderKind::WaypointPath, start, speed_profile: profile, waypoints };
        script.validate(f64::INFINITY)?;
        Ok(script)
    }

    pub fn validate(&self, max_speed: f64) -> Result<(), WorldError> {
        if !self.start.is_finite() {
            return Err(WorldError::NonFinite("leader start pose"));
        }
        for &(_, v) in self.speed_profile.segments() {
            if !(0.0..=max_speed).contains(&v) {
                return Err(WorldError::InvalidScript(format!("speed {v} outside [0, {max_speed}]")));
            }
        }
        if self.kind == LeaderKind::WaypointPath {
            if self.waypoints.len() < 2 {
                return Err(WorldError::InvalidScript("waypoint path needs at least two points".into()));
            }
            if self.waypoints.windows(2).any(|w| w[0].distance(w[1]) == 0.0) {
                return Err(WorldError::InvalidScript("consecutive waypoints must be distinct".into()));
            }
        }
        Ok(())
    }

    fn path_length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Polyline describing the leader's track for lateral-deviation
    /// measurements. Lines are extended far behind the start and beyond the
    /// end so a follower approaching from behind projects onto the track.
    pub fn track(&self) -> Vec<Point> {
        const EXTENT: f64 = 1.0e3;
        match self.kind {
            LeaderKind::Stationary | LeaderKind::StraightLine => {
                let (c, s) = self.start.forward();
                vec![
                    Point::new(self.start.x - EXTENT * c, self.start.y - EXTENT * s),
                    Point::new(self.start.x + EXTENT * c, self.start.y + EXTENT * s),
                ]
            }
            LeaderKind::WaypointPath => {
                let n = self.waypoints.len();
                let first = self.waypoints[0];
                let last = self.waypoints[n - 1];
                let (c0, s0) = self.start.forward();
                let prev = self.waypoints[n - 2];
                let end_len = last.distance(prev);
                let (c1, s1) = ((last.x - prev.x) / end_len, (last.y - prev.y) / end_len);
                let mut track = Vec::with_capacity(n + 2);
                track.push(Point::new(first.x - EXTENT * c0, first.y - EXTENT * s0));
                track.extend_from_slice(&self.waypoints);
                track.push(Point::new(last.x + EXTENT * c1, last.y + EXTENT * s1));
                track
            }
        }
    }
}

/// Pose of the scripted leader at time `t`.
pub fn leader_pose(script: &LeaderScript, t: f64) -> Result<VehicleState, WorldError> {
    if !t.is_finite() {
        return Err(WorldError::NonFinite("t"));
    }
    let t = t.max(0.0);
    match script.kind {
        LeaderKind::Stationary => Ok(VehicleState { speed: 0.0, ..script.start }),
        LeaderKind::StraightLine => {
            let d = script.speed_profile.distance_at(t);
            let (c, s) = script.start.forward();
            Ok(VehicleState {
                x: script.start.x + d * c,
                y: script.start.y + d * s,
                heading: script.start.heading,
                speed: script.speed_profile.speed_at(t),
            })
        }
        LeaderKind::WaypointPath => {
            let total = script.path_length();
            let mut remaining = script.speed_profile.distance_at(t);
            let finished = script.speed_profile.time_to_cover(total).is_some_and(|end| t >= end);
            for w in script.waypoints.windows(2) {
                let len = w[0].distance(w[1]);
                let heading = (w[1].y - w[0].y).atan2(w[1].x - w[0].x);
                if remaining < len && !finished {
                    let f = remaining / len;
                    return Ok(VehicleState::new(
                        w[0].x + f * (w[1].x - w[0].x),
                        w[0].y + f * (w[1].y - w[0].y),
                        heading,
                        script.speed_profile.speed_at(t),
                    ));
                }
                remaining -= len;
            }
            let n = script.waypoints.len();
            let (a, b) = (script.waypoints[n - 2], script.waypoints[n - 1]);
            Ok(VehicleState::new(b.x, b.y, (b.y - a.y).atan2(b.x - a.x), 0.0))
        }
    }
}

/// Signed distance from the follower to the nearest point on the leader's
/// track polyline; positive when the follower is left of the direction of
/// travel. A single-point track yields the unsigned distance to that point.
pub fn lateral_deviation(follower: &VehicleState, track: &[Point]) -> Result<f64, WorldError> {
    if !follower.is_finite() {
        return Err(WorldError::NonFinite("follower state"));
    }
    let p = follower.position();
    match track {
        [] => Err(WorldError::EmptyTrack),
        [only] => Ok(p.distance(*only)),
        _ => {
            let segs: Vec<(Point, Point)> =
                track.windows(2).map(|w| (w[0], w[1])).filter(|(a, b)| a.distance(*b) > 0.0).collect();
            if segs.is_empty() {
                // All segments degenerate: every vertex is the same point.
                return Ok(p.distance(track[0]));
            }
            let left_normal = |(a, b): (Point, Point)| {
                let len = a.distance(b);
                ((a.y - b.y) / len, (b.x - a.x) / len)
            };
            let mut best = (f64::INFINITY, 0.0);
            for (i, &(a, b)) in segs.iter().enumerate() {
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                let u = (((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
                let dist = p.distance(Point::new(a.x + u * dx, a.y + u * dy));
                if dist < best.0 {
                    // At a shared vertex the side is taken from the summed
                    // normals of both segments, so ties agree.
                    let joint = match u {
                        u if u == 0.0 && i > 0 => Some((a, segs[i - 1])),
                        u if u == 1.0 && i + 1 < segs.len() => Some((b, segs[i + 1])),
                        _ => None,
                    };
                    let side = match joint {
                        Some((v, other)) => {
                            let (n1, n2) = (left_normal((a, b)), left_normal(other));
                            (p.x - v.x) * (n1.0 + n2.0) + (p.y - v.y) * (n1.1 + n2.1)
                        }
                        None => dx * (p.y - a.y) - dy * (p.x - a.x),
                    };
                    best = (dist, side);
                }
            }
            Ok(if best.1 < 0.0 { -best.0 } else { best.0 })
        }
    }
}

pub fn following_distance(follower: &VehicleState, leader: &VehicleState) -> Result<f64, WorldError> {
    if !follower.is_finite() || !leader.is_finite() {
        return Err(WorldError::NonFinite("vehicle state"));
    }
    Ok(follower.position().distance(leader.position()))
}
