//! Two-input Mamdani fuzzy controller.
//!
//! Inputs are the error and its rate of change. Each rule fires with the
//! minimum of its two antecedent degrees, clips its output set at that
//! strength, and the clipped sets are combined by pointwise maximum on a
//! uniform grid over the output universe. The crisp effort is the centroid
//! of that grid.

use super::{exp_filter_step, ControlError, ExpFilter, OpCount};

/// Minimum number of grid points used to sample the output universe.
pub const MIN_GRID_POINTS: usize = 201;

/// Labels of the standard five-set partition, most negative first.
pub const STANDARD_LABELS: [&str; 5] = ["NL", "NS", "Z", "PS", "PL"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MembershipFunction {
    Triangular([f64; 3]),
    Trapezoidal([f64; 4]),
}

impl MembershipFunction {
    pub fn triangular(a: f64, b: f64, c: f64) -> Self {
        MembershipFunction::Triangular([a, b, c])
    }

    pub fn trapezoidal(a: f64, b: f64, c: f64, d: f64) -> Self {
        MembershipFunction::Trapezoidal([a, b, c, d])
    }

    /// Breakpoints as a trapezoid `(a, b, c, d)`; a triangle has `b == c`.
    pub fn corners(&self) -> [f64; 4] {
        match *self {
            MembershipFunction::Triangular([a, b, c]) => [a, b, b, c],
            MembershipFunction::Trapezoidal(p) => p,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        match self {
            MembershipFunction::Triangular(p) => p,
            MembershipFunction::Trapezoidal(p) => p,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let bp = self.breakpoints();
        if bp.iter().any(|v| !v.is_finite()) {
            return Err(ControlError::InvalidConfig("membership breakpoints must be finite".into()));
        }
        if bp.windows(2).any(|w| w[1] < w[0]) {
            return Err(ControlError::InvalidConfig(format!("membership breakpoints {bp:?} are not ascending")));
        }
        Ok(())
    }

    /// Membership degree of `x`, in `[0, 1]`. Coincident breakpoints make a
    /// vertical edge whose top belongs to the set.
    pub fn eval(&self, x: f64) -> f64 {
        let [a, b, c, d] = self.corners();
        if x < a || x > d {
            0.0
        } else if x < b {
            (x - a) / (b - a)
        } else if x <= c {
            1.0
        } else {
            (d - x) / (d - c)
        }
    }

    fn scaled(&self, k: f64) -> Self {
        match *self {
            MembershipFunction::Triangular(p) => MembershipFunction::Triangular(p.map(|v| v * k)),
            MembershipFunction::Trapezoidal(p) => MembershipFunction::Trapezoidal(p.map(|v| v * k)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzySet {
    pub label: String,
    pub mf: MembershipFunction,
}

impl FuzzySet {
    pub fn new(label: impl Into<String>, mf: MembershipFunction) -> Self {
        FuzzySet { label: label.into(), mf }
    }
}

/// Span covered by a list of sets.
pub fn universe(sets: &[FuzzySet]) -> (f64, f64) {
    sets.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        let [a, _, _, d] = s.mf.corners();
        (lo.min(a), hi.max(d))
    })
}

/// Checks that every point of the universe has positive membership in at
/// least one set.
fn check_complete(name: &str, sets: &[FuzzySet]) -> Result<(), ControlError> {
    if sets.is_empty() {
        return Err(ControlError::InvalidConfig(format!("{name}: no fuzzy sets")));
    }
    for s in sets {
        s.mf.validate()?;
    }
    let (lo, hi) = universe(sets);
    if hi <= lo {
        return Err(ControlError::InvalidConfig(format!("{name}: universe has zero width")));
    }
    // Each set is positive on an interval from a to d; an end is closed only
    // where the edge is vertical.
    let mut spans: Vec<(f64, bool, f64, bool)> = sets
        .iter()
        .map(|s| {
            let [a, b, c, d] = s.mf.corners();
            (a, a == b, d, c == d)
        })
        .collect();
    spans.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)));

    // Sweep: (reach, closed) is the right edge of the covered region so far.
    let mut reach = lo;
    let mut closed = false;
    let mut started = false;
    for (a, a_closed, d, d_closed) in spans {
        let joins = if !started {
            a == lo && a_closed
        } else {
            a < reach || (a == reach && (closed || a_closed))
        };
        if !joins {
            let at = if started { reach } else { lo };
            return Err(ControlError::InvalidConfig(format!("{name}: no set covers {at}")));
        }
        started = true;
        if d > reach || (d == reach && d_closed) {
            reach = d;
            closed = d_closed;
        }
    }
    if reach < hi || !closed {
        return Err(ControlError::InvalidConfig(format!("{name}: no set covers {hi}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyConfig {
    pub error_sets: Vec<FuzzySet>,
    pub delta_sets: Vec<FuzzySet>,
    pub output_sets: Vec<FuzzySet>,
    /// Output set index for each (error set, delta set) pair, row-major by
    /// error set.
    pub rules: Vec<usize>,
    pub grid_points: usize,
}

impl FuzzyConfig {
    /// Five 50%-overlap triangles per variable over `±span`, with shoulder
    /// triangles at the edges, and the 25-rule table
    /// `out = clamp(error_level + delta_level)`.
    pub fn standard(error_span: f64, delta_span: f64, output_span: f64) -> Self {
        FuzzyConfig {
            error_sets: standard_partition(error_span),
            delta_sets: standard_partition(delta_span),
            output_sets: standard_partition(output_span),
            rules: standard_rules(),
            grid_points: MIN_GRID_POINTS,
        }
    }

    pub fn rule(&self, error_idx: usize, delta_idx: usize) -> usize {
        self.rules[error_idx * self.delta_sets.len() + delta_idx]
    }

    pub fn output_universe(&self) -> (f64, f64) {
        universe(&self.output_sets)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        check_complete("error sets", &self.error_sets)?;
        check_complete("delta sets", &self.delta_sets)?;
        check_complete("output sets", &self.output_sets)?;
        let expected = self.error_sets.len() * self.delta_sets.len();
        if self.rules.len() != expected {
            return Err(ControlError::InvalidConfig(format!(
                "rule table has {} entries, needs {expected}",
                self.rules.len()
            )));
        }
        if let Some(bad) = self.rules.iter().find(|&&r| r >= self.output_sets.len()) {
            return Err(ControlError::InvalidConfig(format!("rule refers to missing output set {bad}")));
        }
        if self.grid_points < MIN_GRID_POINTS {
            return Err(ControlError::InvalidConfig(format!("grid needs at least {MIN_GRID_POINTS} points")));
        }
        Ok(())
    }

    /// Copy with every output set scaled by `k` about zero.
    pub fn with_output_scale(&self, k: f64) -> Self {
        let mut scaled = self.clone();
        for s in &mut scaled.output_sets {
            s.mf = s.mf.scaled(k);
        }
        scaled
    }
}

fn standard_partition(span: f64) -> Vec<FuzzySet> {
    let h = span / 2.0;
    let shapes = [
        MembershipFunction::triangular(-span, -span, -h),
        MembershipFunction::triangular(-span, -h, 0.0),
        MembershipFunction::triangular(-h, 0.0, h),
        MembershipFunction::triangular(0.0, h, span),
        MembershipFunction::triangular(h, span, span),
    ];
    STANDARD_LABELS.iter().zip(shapes).map(|(l, mf)| FuzzySet::new(*l, mf)).collect()
}

fn standard_rules() -> Vec<usize> {
    let mut rules = Vec::with_capacity(25);
    for e in 0..5i32 {
        for d in 0..5i32 {
            rules.push((((e - 2) + (d - 2)).clamp(-2, 2) + 2) as usize);
        }
    }
    rules
}

/// Membership degree of `value` in each set, in set order. Values outside
/// the universe are clamped to its nearest edge.
pub fn fuzzify(value: f64, sets: &[FuzzySet]) -> Vec<f64> {
    fuzzify_counted(value, sets, &mut OpCount::default())
}

fn fuzzify_counted(value: f64, sets: &[FuzzySet], ops: &mut OpCount) -> Vec<f64> {
    let (lo, hi) = universe(sets);
    let x = value.clamp(lo, hi);
    ops.add(2 + 4 * sets.len() as u64);
    sets.iter().map(|s| s.mf.eval(x)).collect()
}

/// Output membership sampled on a uniform grid over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub lo: f64,
    pub hi: f64,
    pub mu: Vec<f64>,
}

impl Aggregate {
    pub fn point(&self, i: usize) -> f64 {
        grid_point(self.lo, self.hi, self.mu.len(), i)
    }
}

fn grid_point(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    // The last point is pinned so a vertical edge at `hi` stays inside.
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

pub fn infer(config: &FuzzyConfig, error_degrees: &[f64], delta_degrees: &[f64]) -> Aggregate {
    infer_counted(config, error_degrees, delta_degrees, &mut OpCount::default())
}

fn infer_counted(config: &FuzzyConfig, error_degrees: &[f64], delta_degrees: &[f64], ops: &mut OpCount) -> Aggregate {
    let (lo, hi) = config.output_universe();
    let n = config.grid_points;
    let grid: Vec<f64> = (0..n).map(|i| grid_point(lo, hi, n, i)).collect();
    ops.add(4 * n as u64);
    let mut mu = vec![0.0f64; n];
    for (ei, &ed) in error_degrees.iter().enumerate() {
        for (di, &dd) in delta_degrees.iter().enumerate() {
            let strength = ed.min(dd);
            ops.add(2);
            if strength <= 0.0 {
                continue;
            }
            let set = &config.output_sets[config.rule(ei, di)].mf;
            for (m, &u) in mu.iter_mut().zip(&grid) {
                *m = m.max(set.eval(u).min(strength));
            }
            ops.add(6 * n as u64);
        }
    }
    Aggregate { lo, hi, mu }
}

/// Centroid `∫ u·μ du / ∫ μ du` of a gridded membership, both integrals by
/// the trapezoid rule.
pub fn defuzz_centroid(aggregate: &Aggregate) -> Result<f64, ControlError> {
    defuzz_counted(aggregate, &mut OpCount::default())
}

fn defuzz_counted(aggregate: &Aggregate, ops: &mut OpCount) -> Result<f64, ControlError> {
    let last = aggregate.mu.len().saturating_sub(1);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &m) in aggregate.mu.iter().enumerate() {
        let w = if i == 0 || i == last { 0.5 * m } else { m };
        num += aggregate.point(i) * w;
        den += w;
    }
    ops.add(8 * aggregate.mu.len() as u64 + 1);
    if den <= 0.0 {
        return Err(ControlError::EmptyAggregate);
    }
    Ok(num / den)
}

/// Fuzzify, infer and defuzzify one input pair.
pub fn fuzzy_step(config: &FuzzyConfig, error: f64, error_delta: f64) -> Result<f64, ControlError> {
    fuzzy_step_counted(config, error, error_delta, &mut OpCount::default())
}

pub fn fuzzy_step_counted(
    config: &FuzzyConfig,
    error: f64,
    error_delta: f64,
    ops: &mut OpCount,
) -> Result<f64, ControlError> {
    if !error.is_finite() {
        return Err(ControlError::NonFinite("error"));
    }
    if !error_delta.is_finite() {
        return Err(ControlError::NonFinite("error_delta"));
    }
    let e = fuzzify_counted(error, &config.error_sets, ops);
    let d = fuzzify_counted(error_delta, &config.delta_sets, ops);
    let agg = infer_counted(config, &e, &d, ops);
    defuzz_counted(&agg, ops)
}

/// Fuzzy loop: tracks the error rate between updates and smooths the crisp
/// output with an exponential filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyController {
    pub config: FuzzyConfig,
    pub filter: Option<ExpFilter>,
    prev_error: Option<f64>,
}

impl FuzzyController {
    pub fn new(config: FuzzyConfig, filter_alpha: Option<f64>) -> Result<Self, ControlError> {
        config.validate()?;
        let filter = filter_alpha.map(ExpFilter::new).transpose()?;
        Ok(FuzzyController { config, filter, prev_error: None })
    }

    pub fn step(&mut self, error: f64, dt: f64, ops: &mut OpCount) -> Result<f64, ControlError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(ControlError::InvalidStep(dt));
        }
        let delta = self.prev_error.map_or(0.0, |prev| (error - prev) / dt);
        ops.add(2);
        let crisp = fuzzy_step_counted(&self.config, error, delta, ops)?;
        self.prev_error = Some(error);
        Ok(match self.filter {
            Some(f) => {
                let (out, next) = exp_filter_step(f, crisp);
                ops.add(4);
                self.filter = Some(next);
                out
            }
            None => crisp,
        })
    }
}
