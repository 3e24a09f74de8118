//! Property checks shared by the `properties` and `acceptance` targets. Each
//! check runs a deterministic proptest runner for [`CASES`] cases.

#![allow(dead_code)]

use std::f64::consts::PI;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use follower_lab::control::{
    effort_to_pwm, exp_filter_step, fuzzy_step, pid_step, pwm_to_actuation, ControlCommand, ExpFilter, FuzzyConfig,
    FuzzyController, MembershipFunction, OpCount, PidConfig, PidController, PidState,
};
use follower_lab::experiment::{
    run_lateral_offset, run_scenario, ControllerKind, LostTargetPolicy, ScenarioConfig, Trace, TraceRecord,
};
use follower_lab::metrics::{
    column_value, compare, step_metrics, trace_to_csv_string, tracking_metrics, MetricSet, Signal, Tolerances,
    Winner, COLUMNS,
};
use follower_lab::sensor::{observe, CameraIntrinsics, TargetPanel};
use follower_lab::world::{
    lateral_deviation, leader_pose, step_bicycle, LeaderScript, Point, SpeedProfile, VehicleParams, VehicleState,
};

pub const CASES: u32 = 1000;

pub fn runner() -> TestRunner {
    let config = Config { cases: CASES, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

pub type Property = (&'static str, fn() -> Result<(), String>);

pub const ALL: &[Property] = &[
    ("pid_saturation_bounds", pid_saturation_bounds),
    ("pid_linear_without_clamping", pid_linear_without_clamping),
    ("fuzzy_centroid_homogeneity", fuzzy_centroid_homogeneity),
    ("fuzzy_output_in_universe", fuzzy_output_in_universe),
    ("membership_in_unit_interval", membership_in_unit_interval),
    ("exp_filter_convex", exp_filter_convex),
    ("pwm_mapping_bounds", pwm_mapping_bounds),
    ("fuzzy_costs_more_than_pid", fuzzy_costs_more_than_pid),
    ("arc_consistency", arc_consistency),
    ("zero_steer_heading_bit_identical", zero_steer_heading_bit_identical),
    ("bicycle_state_invariants", bicycle_state_invariants),
    ("lateral_deviation_rigid_invariance", lateral_deviation_rigid_invariance),
    ("projection_monotonicity", projection_monotonicity),
    ("range_law", range_law),
    ("reading_invariants", reading_invariants),
    ("record_invariants", record_invariants),
    ("lateral_offset_mirror_symmetry", lateral_offset_mirror_symmetry),
    ("csv_round_trip", csv_round_trip),
    ("metrics_time_shift_invariance", metrics_time_shift_invariance),
    ("rms_zero_iff_zero_signal", rms_zero_iff_zero_signal),
    ("compare_antisymmetry", compare_antisymmetry),
];

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---- controllers ----

fn pid_config() -> impl Strategy<Value = PidConfig> {
    (0.0..5.0f64, 0.0..3.0f64, 0.0..2.0f64, 0.1..3.0f64, 0.05..1.0f64, 0.05..=1.0f64).prop_map(
        |(kp, ki, kd, out, frac, a)| PidConfig {
            kp,
            ki,
            kd,
            output_limit: out,
            integral_limit: out * frac,
            derivative_filter_alpha: a,
        },
    )
}

pub fn pid_saturation_bounds() -> Result<(), String> {
    check((pid_config(), prop::collection::vec(-50.0..50.0f64, 1..60), 0.001..0.1f64), |(cfg, errors, dt)| {
        let mut s = PidState::default();
        for e in errors {
            let (u, next) = pid_step(&cfg, &s, e, -e, dt).unwrap();
            prop_assert!(u.abs() <= cfg.output_limit);
            prop_assert!((cfg.ki * next.integral).abs() <= cfg.integral_limit * (1.0 + 1e-12));
            s = next;
        }
        Ok(())
    })
}

pub fn pid_linear_without_clamping() -> Result<(), String> {
    let seqs = (1usize..40).prop_flat_map(|n| {
        (prop::collection::vec(-10.0..10.0f64, n), prop::collection::vec(-10.0..10.0f64, n))
    });
    check((0.0..5.0f64, 0.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, seqs), |(kp, ki, a, b, (e1, e2))| {
        let cfg = PidConfig { kp, ki, kd: 0.0, output_limit: 1e12, integral_limit: 1e12, derivative_filter_alpha: 1.0 };
        let (mut s1, mut s2, mut s3) = (PidState::default(), PidState::default(), PidState::default());
        for (x, y) in e1.iter().zip(&e2) {
            let (u1, n1) = pid_step(&cfg, &s1, *x, 0.0, 0.02).unwrap();
            let (u2, n2) = pid_step(&cfg, &s2, *y, 0.0, 0.02).unwrap();
            let (u3, n3) = pid_step(&cfg, &s3, a * x + b * y, 0.0, 0.02).unwrap();
            prop_assert!(close(u3, a * u1 + b * u2, 1e-9 * (1.0 + u3.abs())));
            (s1, s2, s3) = (n1, n2, n3);
        }
        Ok(())
    })
}

/// Standard partitions with random spans and a random total rule table.
pub fn fuzzy_config() -> impl Strategy<Value = FuzzyConfig> {
    (1.0..500.0f64, 1.0..2000.0f64, 0.1..10.0f64, prop::collection::vec(0usize..5, 25), 201usize..400).prop_map(
        |(e, d, o, rules, n)| {
            let mut cfg = FuzzyConfig::standard(e, d, o);
            cfg.rules = rules;
            cfg.grid_points = n;
            cfg
        },
    )
}

pub fn fuzzy_centroid_homogeneity() -> Result<(), String> {
    check((fuzzy_config(), -1.2..1.2f64, -1.2..1.2f64, 0.05..20.0f64), |(cfg, fe, fd, k)| {
        let (lo, hi) = cfg.output_universe();
        let e = fe * cfg.error_sets.last().unwrap().mf.corners()[3];
        let d = fd * cfg.delta_sets.last().unwrap().mf.corners()[3];
        let base = fuzzy_step(&cfg, e, d).unwrap();
        let scaled = fuzzy_step(&cfg.with_output_scale(k), e, d).unwrap();
        prop_assert!(close(scaled, k * base, 1e-9 * k * (hi - lo)), "{scaled} vs {}", k * base);
        Ok(())
    })
}

pub fn fuzzy_output_in_universe() -> Result<(), String> {
    check((fuzzy_config(), -1e4..1e4f64, -1e5..1e5f64), |(cfg, e, d)| {
        let (lo, hi) = cfg.output_universe();
        let u = fuzzy_step(&cfg, e, d).unwrap();
        prop_assert!(u >= lo && u <= hi);
        Ok(())
    })
}

pub fn membership_in_unit_interval() -> Result<(), String> {
    let mf = prop::collection::vec(-10.0..10.0f64, 4).prop_flat_map(|mut v| {
        v.sort_by(f64::total_cmp);
        prop_oneof![
            Just(MembershipFunction::triangular(v[0], v[1], v[2])),
            Just(MembershipFunction::trapezoidal(v[0], v[1], v[2], v[3])),
        ]
    });
    check((mf, -20.0..20.0f64), |(mf, x)| {
        let m = mf.eval(x);
        prop_assert!((0.0..=1.0).contains(&m));
        Ok(())
    })
}

pub fn exp_filter_convex() -> Result<(), String> {
    check((0.001..=1.0f64, -100.0..100.0f64, -100.0..100.0f64), |(alpha, prev, input)| {
        let (out, _) = exp_filter_step(ExpFilter { alpha, state: prev }, input);
        prop_assert!(out >= prev.min(input) - 1e-12 && out <= prev.max(input) + 1e-12);
        Ok(())
    })
}

pub fn pwm_mapping_bounds() -> Result<(), String> {
    check((-1e6..1e6f64, 0.1..500.0f64, -1e6..1e6f64), |(effort, gain, other)| {
        let p = effort_to_pwm(effort, gain);
        prop_assert!((0.0..=180.0).contains(&p));
        let params = VehicleParams::default();
        let cmd = ControlCommand { steering_pwm: p, throttle_pwm: effort_to_pwm(other, gain) };
        let (steer, speed) = pwm_to_actuation(&cmd, &params);
        prop_assert!(steer.abs() <= params.max_steer_angle && (0.0..=params.max_speed).contains(&speed));
        let neutral = ControlCommand { steering_pwm: effort_to_pwm(0.0, gain), throttle_pwm: effort_to_pwm(0.0, gain) };
        prop_assert_eq!(pwm_to_actuation(&neutral, &params), (0.0, 0.0));
        Ok(())
    })
}

pub fn fuzzy_costs_more_than_pid() -> Result<(), String> {
    let d = ScenarioConfig::default();
    check(prop::collection::vec(-160.0..160.0f64, 1..20), move |errors| {
        for ch in [&d.steering, &d.throttle] {
            let pid = ch.pid.as_ref().unwrap();
            let fz = ch.fuzzy.as_ref().unwrap();
            let mut p = PidController::new(pid.config, pid.output_filter_alpha).unwrap();
            let mut f = FuzzyController::new(fz.config.clone(), fz.filter_alpha).unwrap();
            for &e in &errors {
                let (mut po, mut fo) = (OpCount::default(), OpCount::default());
                p.step(e / 160.0, 0.02, &mut po).unwrap();
                f.step(e, 0.02, &mut fo).unwrap();
                prop_assert!(fo.get() > po.get());
            }
        }
        Ok(())
    })
}

// ---- world ----

pub fn arc_consistency() -> Result<(), String> {
    let params = VehicleParams::default();
    let max = params.max_steer_angle;
    check((-max..max, 0.1..params.max_speed, -PI..PI), move |(delta, v, h0)| {
        let dt = 1e-3;
        let steps = 2000;
        let mut s = VehicleState::new(0.0, 0.0, h0, v);
        for _ in 0..steps {
            s = step_bicycle(&s, &params, delta, v, dt).unwrap();
        }
        let t = steps as f64 * dt;
        let (ex, ey) = if delta == 0.0 {
            (v * t * h0.cos(), v * t * h0.sin())
        } else {
            let r = params.wheelbase / delta.tan();
            let h = h0 + v * t / r;
            (r * (h.sin() - h0.sin()), -r * (h.cos() - h0.cos()))
        };
        prop_assert!((s.x - ex).hypot(s.y - ey) < 1e-3);
        Ok(())
    })
}

pub fn zero_steer_heading_bit_identical() -> Result<(), String> {
    let params = VehicleParams::default();
    check((-PI..PI, prop::collection::vec(0.0..4.0f64, 1..200), 0.0005..0.05f64), move |(h, cmds, dt)| {
        let mut s = VehicleState::new(1.0, -2.0, h, 0.0);
        let start = s.heading;
        for c in cmds {
            s = step_bicycle(&s, &params, 0.0, c, dt).unwrap();
            prop_assert_eq!(s.heading.to_bits(), start.to_bits());
        }
        Ok(())
    })
}

fn state() -> impl Strategy<Value = VehicleState> {
    (-1e3..1e3f64, -1e3..1e3f64, -50.0..50.0f64, 0.0..4.0f64).prop_map(|(x, y, h, v)| VehicleState::new(x, y, h, v))
}

pub fn bicycle_state_invariants() -> Result<(), String> {
    let params = VehicleParams::default();
    check((state(), -10.0..10.0f64, -10.0..10.0f64, 1e-4..0.5f64), move |(s, steer, cmd, dt)| {
        let n = step_bicycle(&s, &params, steer, cmd, dt).unwrap();
        prop_assert!(n.is_finite());
        prop_assert!(n.heading >= -PI && n.heading < PI);
        prop_assert!(n.speed >= 0.0 && n.speed <= params.max_speed);
        Ok(())
    })
}

pub fn lateral_deviation_rigid_invariance() -> Result<(), String> {
    let track = prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64), 2..8);
    check((track, -30.0..30.0f64, -30.0..30.0f64, -PI..PI, -100.0..100.0f64, -100.0..100.0f64), |(pts, fx, fy, th, tx, ty)| {
        let track: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        prop_assume!(track.windows(2).all(|w| w[0].distance(w[1]) > 1e-3));
        let (c, s) = (th.cos(), th.sin());
        let tf = |x: f64, y: f64| Point::new(c * x - s * y + tx, s * x + c * y + ty);
        let moved: Vec<Point> = track.iter().map(|p| tf(p.x, p.y)).collect();
        let f = VehicleState::new(fx, fy, 0.0, 0.0);
        let q = tf(fx, fy);
        let g = VehicleState::new(q.x, q.y, 0.0, 0.0);
        let a = lateral_deviation(&f, &track).unwrap();
        let b = lateral_deviation(&g, &moved).unwrap();
        prop_assert!(close(a, b, 1e-8), "{} vs {}", a, b);
        Ok(())
    })
}

// ---- sensor ----

pub fn projection_monotonicity() -> Result<(), String> {
    let cam = CameraIntrinsics::default();
    let half = cam.horizontal_fov / 2.0;
    let panel = TargetPanel::default();
    check((-half * 0.95..half * 0.95, -half * 0.95..half * 0.95, 0.5..10.0f64), move |(b1, b2, r)| {
        prop_assume!((b1 - b2).abs() > 1e-6);
        let follower = VehicleState::new(0.0, 0.0, 0.0, 0.0);
        // Leader faces away from the camera along the line of sight.
        let leader = |b: f64| VehicleState::new(r * b.cos(), r * b.sin(), b, 0.0);
        let x1 = observe(&cam, &follower, &leader(b1), &panel, 0.0).unwrap().x_px;
        let x2 = observe(&cam, &follower, &leader(b2), &panel, 0.0).unwrap().x_px;
        // A bearing further left puts the target further left in the image.
        prop_assert_eq!(b1 < b2, x1 > x2);
        Ok(())
    })
}

pub fn range_law() -> Result<(), String> {
    let cam = CameraIntrinsics::default();
    let panel = TargetPanel::default();
    let f = cam.focal_px();
    // Below this range the box height saturates the image.
    let min_unclamped = f * panel.height / cam.image_height as f64;
    check((min_unclamped..cam.max_range, min_unclamped..cam.max_range), move |(r1, r2)| {
        let follower = VehicleState::new(0.0, 0.0, 0.0, 0.0);
        let w = |r: f64| observe(&cam, &follower, &VehicleState::new(r, 0.0, 0.0, 0.0), &panel, 0.0).unwrap();
        let (a, b) = (w(r1), w(r2));
        prop_assert!(close(a.width_px * r1, b.width_px * r2, 1e-9 * f));
        prop_assert!(close(a.area_px2 * r1 * r1, b.area_px2 * r2 * r2, 1e-9 * f * f));
        Ok(())
    })
}

pub fn reading_invariants() -> Result<(), String> {
    let cam = CameraIntrinsics::default();
    let panel = TargetPanel::default();
    check((state(), -25.0..25.0f64, -25.0..25.0f64, -PI..PI), move |(f, dx, dy, lh)| {
        let leader = VehicleState::new(f.x + dx, f.y + dy, lh, 0.0);
        if let Some(r) = observe(&cam, &f, &leader, &panel, 0.0) {
            prop_assert!(r.x_px >= 0.0 && r.x_px <= cam.image_width as f64);
            prop_assert!(r.y_px >= 0.0 && r.y_px <= cam.image_height as f64);
            prop_assert_eq!(r.area_px2, r.width_px * r.height_px);
            prop_assert!(r.width_px > 0.0 && r.height_px > 0.0);
        }
        Ok(())
    })
}

// ---- experiments ----

fn kind() -> impl Strategy<Value = ControllerKind> {
    prop_oneof![Just(ControllerKind::Pid), Just(ControllerKind::Fuzzy), Just(ControllerKind::Off)]
}

fn leader_script() -> impl Strategy<Value = LeaderScript> {
    let start = (-2.0..2.0f64, -2.0..2.0f64, -PI..PI).prop_map(|(x, y, h)| VehicleState::new(x, y, h, 0.0));
    prop_oneof![
        start.clone().prop_map(LeaderScript::stationary),
        (start, 0.0..3.0f64).prop_map(|(s, v)| LeaderScript::straight_line(s, v)),
        (prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 2..5), 0.1..2.0f64).prop_filter_map(
            "distinct waypoints",
            |(pts, v)| {
                let wps: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
                LeaderScript::waypoint_path(wps, SpeedProfile::constant(v)).ok()
            }
        ),
    ]
}

pub fn scenario_config() -> impl Strategy<Value = ScenarioConfig> {
    (
        leader_script(),
        (-1.5..1.5f64, 0.5..3.0f64, -0.6..0.6f64, 0.0..2.0f64),
        (kind(), kind()),
        (0.0..4.0f64, any::<u64>(), any::<bool>()),
        (prop_oneof![Just(0.002), Just(0.001), Just(0.004)], 0.05..0.6f64),
    )
        .prop_map(|(leader, (lat, back, dh, v), (sk, tk), (jitter, seed, stop), (dt, duration))| {
            let mut cfg = ScenarioConfig::default();
            let (c, s) = leader.start.forward();
            let (lx, ly) = leader.start.left();
            cfg.follower_start = VehicleState::new(
                leader.start.x - back * c + lat * lx,
                leader.start.y - back * s + lat * ly,
                leader.start.heading + dh,
                v,
            );
            cfg.leader = leader;
            cfg.steering.kind = sk;
            cfg.throttle.kind = tk;
            cfg.jitter_px = jitter;
            cfg.seed = seed;
            cfg.lost_target = if stop { LostTargetPolicy::Stop } else { LostTargetPolicy::HoldLast };
            cfg.dt = dt;
            cfg.duration = duration;
            cfg
        })
}

pub fn check_trace_invariants(cfg: &ScenarioConfig, trace: &Trace) -> Result<(), TestCaseError> {
    let stride = cfg.frame_stride().unwrap();
    let n = cfg.record_count();
    match trace.stop {
        None => prop_assert_eq!(trace.records.len(), n),
        Some(_) => prop_assert!(trace.records.len() <= n),
    }
    let params = &cfg.follower_params;
    for (k, r) in trace.records.iter().enumerate() {
        prop_assert_eq!(r.t, k as f64 * cfg.dt);
        prop_assert!((0.0..=180.0).contains(&r.steering_pwm) && (0.0..=180.0).contains(&r.throttle_pwm));
        prop_assert!(r.follower.heading >= -PI && r.follower.heading < PI);
        prop_assert!(r.follower.speed >= 0.0 && r.follower.speed <= params.max_speed);
        if k % stride != 0 {
            prop_assert!(r.reading.is_none());
            let prev = &trace.records[k - 1];
            prop_assert_eq!((r.steering_pwm, r.throttle_pwm), (prev.steering_pwm, prev.throttle_pwm));
            prop_assert_eq!(r.op_count, 0);
        } else {
            prop_assert_eq!(r.reading.is_some(), r.detected);
        }
        if let Some(reading) = r.reading {
            prop_assert_eq!(reading.t, r.t);
        }
        let expected = leader_pose(&cfg.leader, r.t).unwrap();
        prop_assert_eq!(r.leader, expected);
    }
    for w in trace.records.windows(2) {
        prop_assert!(w[1].t > w[0].t);
    }
    Ok(())
}

pub fn record_invariants() -> Result<(), String> {
    check(scenario_config(), |cfg| {
        let trace = run_scenario(&cfg).unwrap();
        check_trace_invariants(&cfg, &trace)?;
        let again = run_scenario(&cfg).unwrap();
        prop_assert!(trace.eq_ignoring_timing(&again));
        Ok(())
    })
}

pub fn lateral_offset_mirror_symmetry() -> Result<(), String> {
    let strategy = (0.1..1.5f64, prop_oneof![Just(0.0), 0.3..1.5f64], kind(), kind(), 0.6..1.6f64);
    check(strategy, |(offset, speed, sk, tk, back)| {
        let mut base = ScenarioConfig { duration: 1.0, ..ScenarioConfig::default() };
        base.follower_start = VehicleState::new(-back, 0.0, 0.0, 0.0);
        base.steering.kind = sk;
        base.throttle.kind = tk;
        let left = run_lateral_offset(&base, offset, speed).unwrap();
        let right = run_lateral_offset(&base, -offset, speed).unwrap();
        prop_assert_eq!(left.records.len(), right.records.len());
        for (a, b) in left.records.iter().zip(&right.records) {
            let tol = 1e-6;
            prop_assert!(close(a.follower.x, b.follower.x, tol));
            prop_assert!(close(a.follower.y, -b.follower.y, tol));
            prop_assert!(close(a.follower.heading, -b.follower.heading, tol));
            prop_assert!(close(a.pixel_error_x, -b.pixel_error_x, tol * 100.0));
            prop_assert!(close(a.area_error, b.area_error, tol * 1e4));
            prop_assert!(close(a.steering_pwm - 90.0, 90.0 - b.steering_pwm, tol * 100.0));
            prop_assert!(close(a.throttle_pwm, b.throttle_pwm, tol * 100.0));
            prop_assert!(close(a.lateral_dev, -b.lateral_dev, tol));
            prop_assert_eq!(a.detected, b.detected);
        }
        Ok(())
    })
}

// ---- metrics ----

fn record(t: f64, v: [f64; 12], detected: bool, ops: u64) -> TraceRecord {
    TraceRecord {
        t,
        leader: VehicleState { x: v[0], y: v[1], heading: 0.0, speed: 0.0 },
        follower: VehicleState { x: v[2], y: v[3], heading: v[4], speed: 0.0 },
        reading: None,
        detected,
        pixel_error_x: v[5],
        area_error: v[6],
        steering_pwm: v[7],
        throttle_pwm: v[8],
        lateral_dev: v[9],
        follow_dist: v[10],
        loop_cost_us: v[11],
        op_count: ops,
    }
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3..1e3f64, -1e-3..1e-3f64, -1e12..1e12f64, Just(0.0)]
}

pub fn trace_strategy(max_len: usize) -> impl Strategy<Value = Trace> {
    prop::collection::vec((prop::array::uniform12(finite()), any::<bool>(), any::<u32>()), 0..max_len).prop_map(
        |rows| {
            let records = rows
                .into_iter()
                .enumerate()
                .map(|(i, (v, d, ops))| record(i as f64 * 0.002, v, d, u64::from(ops)))
                .collect();
            Trace { scenario: "prop".into(), label: String::new(), config: None, records, stop: None }
        },
    )
}

pub fn csv_round_trip() -> Result<(), String> {
    check(trace_strategy(40), |trace| {
        let text = trace_to_csv_string(&trace);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prop.csv");
        std::fs::write(&path, &text).unwrap();
        let back = follower_lab::metrics::read_trace_csv(&path).unwrap();
        prop_assert_eq!(&back.scenario, "prop");
        prop_assert_eq!(back.records.len(), trace.records.len());
        for (a, b) in trace.records.iter().zip(&back.records) {
            for c in COLUMNS {
                let (x, y) = (column_value(a, c).unwrap(), column_value(b, c).unwrap());
                prop_assert!((x - y).abs() <= 5e-9 * x.abs(), "{}: {} vs {}", c, x, y);
            }
        }
        prop_assert_eq!(trace_to_csv_string(&back), text);
        Ok(())
    })
}

fn signal_trace() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(-100.0..100.0f64, 5..80), 0.001..0.1f64)
}

fn simple_trace(values: &[f64], dt: f64, t0: f64) -> Trace {
    let records = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut r = record(t0 + i as f64 * dt, [0.0; 12], true, 4);
            r.pixel_error_x = v;
            r.steering_pwm = 90.0 + v / 2.0;
            r
        })
        .collect();
    Trace { scenario: "s".into(), label: String::new(), config: None, records, stop: None }
}

fn metric_sets_close(a: &MetricSet, b: &MetricSet, tol: f64) -> bool {
    let opt = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) => close(x, y, tol),
        (None, None) => true,
        _ => false,
    };
    opt(a.rise_time, b.rise_time)
        && opt(a.settling_time, b.settling_time)
        && opt(a.overshoot, b.overshoot)
        && a.steady_state_error == b.steady_state_error
        && a.rms_error == b.rms_error
        && a.control_effort_tv == b.control_effort_tv
        && a.mean_op_count == b.mean_op_count
}

pub fn metrics_time_shift_invariance() -> Result<(), String> {
    check((signal_trace(), -1e3..1e3f64, prop_oneof![Just(0.0), -50.0..50.0f64]), |((values, dt), shift, delta)| {
        let a = simple_trace(&values, dt, 0.0);
        let b = simple_trace(&values, dt, shift);
        let tol = 1e-9 * (1.0 + shift.abs());
        let (ma, mb) = if delta == 0.0 {
            (tracking_metrics(&a, Signal::PixelErrorX).unwrap(), tracking_metrics(&b, Signal::PixelErrorX).unwrap())
        } else {
            (step_metrics(&a, Signal::PixelErrorX, delta).unwrap(), step_metrics(&b, Signal::PixelErrorX, delta).unwrap())
        };
        prop_assert!(metric_sets_close(&ma, &mb, tol), "{:?} vs {:?}", ma, mb);
        Ok(())
    })
}

pub fn rms_zero_iff_zero_signal() -> Result<(), String> {
    let values = prop::collection::vec(prop_oneof![Just(0.0), -1e3..1e3f64], 2..50);
    check(values, |values| {
        let m = tracking_metrics(&simple_trace(&values, 0.01, 0.0), Signal::PixelErrorX).unwrap();
        prop_assert!(m.rms_error >= 0.0 && m.control_effort_tv >= 0.0);
        prop_assert!(m.overshoot.is_none_or(|o| o >= 0.0));
        prop_assert_eq!(m.rms_error == 0.0, values.iter().all(|&v| v == 0.0));
        Ok(())
    })
}

pub fn compare_antisymmetry() -> Result<(), String> {
    check((signal_trace(), prop::collection::vec(-100.0..100.0f64, 80)), |((va, dt), vb)| {
        let a = simple_trace(&va, dt, 0.0);
        let b = simple_trace(&vb[..va.len()], dt, 0.0);
        let tol = Tolerances::default();
        let ab = compare(&a, &b, Signal::PixelErrorX, &tol).unwrap();
        let ba = compare(&b, &a, Signal::PixelErrorX, &tol).unwrap();
        for (x, y) in ab.rows.iter().zip(&ba.rows) {
            let swapped = match x.winner {
                Winner::Pid => Winner::Fuzzy,
                Winner::Fuzzy => Winner::Pid,
                w => w,
            };
            prop_assert_eq!(swapped, y.winner);
        }
        Ok(())
    })
}
