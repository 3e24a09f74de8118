//! Exhaustive grid search over one channel's controller gains.
//!
//! A PID channel is tuned over `kp × ki × kd`; a fuzzy channel over a single
//! output-universe scale factor. Candidates run in parallel but results are
//! collected in grid order, then ranked by objective, control-effort total
//! variation, and finally the gains themselves.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::experiment::{run_experiment, Channel, ControllerKind, ScenarioConfig, ScenarioError, Trace};
use crate::metrics::{format_sig9, tracking_metrics, MetricsError, Objective, Signal};

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("grid file: {0}")]
    Grid(String),
    #[error("{0}")]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Values to try. Gains left out of a PID grid keep the scenario's value.
#[derive(Debug, Clone, PartialEq)]
pub enum TuneGrid {
    Pid { kp: Vec<f64>, ki: Vec<f64>, kd: Vec<f64> },
    FuzzyScale { output_scale: Vec<f64> },
}

impl TuneGrid {
    pub fn len(&self) -> usize {
        match self {
            TuneGrid::Pid { kp, ki, kd } => kp.len() * ki.len() * kd.len(),
            TuneGrid::FuzzyScale { output_scale } => output_scale.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Candidates in lexicographic order: the last gain varies fastest.
    pub fn candidates(&self) -> Vec<Vec<f64>> {
        match self {
            TuneGrid::Pid { kp, ki, kd } => kp
                .iter()
                .flat_map(|&p| ki.iter().flat_map(move |&i| kd.iter().map(move |&d| vec![p, i, d])))
                .collect(),
            TuneGrid::FuzzyScale { output_scale } => output_scale.iter().map(|&k| vec![k]).collect(),
        }
    }

    pub fn gain_names(&self) -> &'static [&'static str] {
        match self {
            TuneGrid::Pid { .. } => &["kp", "ki", "kd"],
            TuneGrid::FuzzyScale { .. } => &["output_scale"],
        }
    }

    pub fn validate(&self) -> Result<(), TuneError> {
        let lists: Vec<(&str, &Vec<f64>)> = match self {
            TuneGrid::Pid { kp, ki, kd } => vec![("kp", kp), ("ki", ki), ("kd", kd)],
            TuneGrid::FuzzyScale { output_scale } => vec![("output_scale", output_scale)],
        };
        for (name, values) in lists {
            if values.is_empty() {
                return Err(TuneError::Grid(format!("`{name}` has no values")));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(TuneError::Grid(format!("`{name}` has a non-finite value")));
            }
            if values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(TuneError::Grid(format!("`{name}` must be strictly ascending")));
            }
        }
        if let TuneGrid::FuzzyScale { output_scale } = self {
            if output_scale.iter().any(|&k| k <= 0.0) {
                return Err(TuneError::Grid("`output_scale` values must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Parses a TOML grid file: `kp`, `ki`, `kd` arrays for PID channels or an
/// `output_scale` array for fuzzy channels. `current` fills in PID gains the
/// file leaves out.
pub fn parse_grid(text: &str, current: Option<[f64; 3]>) -> Result<TuneGrid, TuneError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| TuneError::Grid(e.message().to_string()))?;
    let list = |key: &str| -> Result<Option<Vec<f64>>, TuneError> {
        let Some(v) = table.get(key) else { return Ok(None) };
        let arr = v.as_array().ok_or_else(|| TuneError::Grid(format!("`{key}` must be an array of numbers")))?;
        arr.iter()
            .map(|x| {
                x.as_float()
                    .or_else(|| x.as_integer().map(|i| i as f64))
                    .ok_or_else(|| TuneError::Grid(format!("`{key}` must be an array of numbers")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    };
    if let Some(key) = table.keys().find(|k| !["kp", "ki", "kd", "output_scale"].contains(&k.as_str())) {
        return Err(TuneError::Grid(format!("unknown key `{key}`")));
    }
    let grid = match list("output_scale")? {
        Some(output_scale) => {
            if ["kp", "ki", "kd"].iter().any(|k| table.contains_key(*k)) {
                return Err(TuneError::Grid("give either PID gains or `output_scale`, not both".into()));
            }
            TuneGrid::FuzzyScale { output_scale }
        }
        None => {
            let base = current.unwrap_or([0.0; 3]);
            let (kp, ki, kd) = (list("kp")?, list("ki")?, list("kd")?);
            if kp.is_none() && ki.is_none() && kd.is_none() {
                return Err(TuneError::Grid("no gain lists given".into()));
            }
            TuneGrid::Pid {
                kp: kp.unwrap_or_else(|| vec![base[0]]),
                ki: ki.unwrap_or_else(|| vec![base[1]]),
                kd: kd.unwrap_or_else(|| vec![base[2]]),
            }
        }
    };
    grid.validate()?;
    Ok(grid)
}

pub fn read_grid(path: &Path, current: Option<[f64; 3]>) -> Result<TuneGrid, TuneError> {
    parse_grid(&std::fs::read_to_string(path)?, current)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneSpec {
    pub channel: Channel,
    pub grid: TuneGrid,
    pub objective: Objective,
    pub scenario: ScenarioConfig,
}

impl TuneSpec {
    /// Scenario with the candidate's gains applied to the tuned channel.
    pub fn configure(&self, gains: &[f64]) -> Result<ScenarioConfig, TuneError> {
        let mut cfg = self.scenario.clone();
        let ch = cfg.channel_mut(self.channel);
        let name = self.channel.as_str();
        match &self.grid {
            TuneGrid::Pid { .. } => {
                if ch.kind != ControllerKind::Pid {
                    return Err(TuneError::Grid(format!("gain grid given but the {name} channel is not PID")));
                }
                let pid = ch.pid.as_mut().ok_or(ScenarioError::MissingController { channel: name, kind: "pid" })?;
                pid.config.kp = gains[0];
                pid.config.ki = gains[1];
                pid.config.kd = gains[2];
            }
            TuneGrid::FuzzyScale { .. } => {
                if ch.kind != ControllerKind::Fuzzy {
                    return Err(TuneError::Grid(format!("output_scale grid given but the {name} channel is not fuzzy")));
                }
                let fz = ch.fuzzy.as_mut().ok_or(ScenarioError::MissingController { channel: name, kind: "fuzzy" })?;
                fz.config = fz.config.with_output_scale(gains[0]);
            }
        }
        Ok(cfg)
    }

    pub fn signal(&self) -> Signal {
        Signal::for_channel(self.channel)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Position in [`TuneGrid::candidates`] order.
    pub index: usize,
    pub gains: Vec<f64>,
    /// Objective summed over every trace the scenario produces.
    pub score: f64,
    pub control_effort_tv: f64,
    /// Kept only when requested.
    pub traces: Vec<Trace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub objective: Objective,
    pub gain_names: &'static [&'static str],
    /// Best first.
    pub ranked: Vec<Candidate>,
}

impl TuneResult {
    pub fn best(&self) -> &Candidate {
        &self.ranked[0]
    }
}

fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then(a.control_effort_tv.total_cmp(&b.control_effort_tv))
        .then_with(|| a.gains.iter().zip(&b.gains).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal))
}

pub fn grid_search(spec: &TuneSpec, keep_traces: bool) -> Result<TuneResult, TuneError> {
    spec.grid.validate()?;
    let signal = spec.signal();
    let mut ranked = spec
        .grid
        .candidates()
        .into_par_iter()
        .enumerate()
        .map(|(index, gains)| {
            let cfg = spec.configure(&gains)?;
            let traces = run_experiment(&cfg)?;
            let mut score = 0.0;
            let mut tv = 0.0;
            for t in &traces {
                score += spec.objective.evaluate(t, signal);
                tv += tracking_metrics(t, signal).map_or(0.0, |m| m.control_effort_tv);
            }
            Ok(Candidate {
                index,
                gains,
                score,
                control_effort_tv: tv,
                traces: if keep_traces { traces } else { Vec::new() },
            })
        })
        .collect::<Result<Vec<_>, TuneError>>()?;
    ranked.sort_by(rank_order);
    Ok(TuneResult { objective: spec.objective, gain_names: spec.grid.gain_names(), ranked })
}

/// Ranked results: `rank,candidate,<gains>,<objective>,control_effort_tv`.
pub fn results_csv(result: &TuneResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "rank,candidate,{},{},control_effort_tv", result.gain_names.join(","), result.objective.as_str());
    for (rank, c) in result.ranked.iter().enumerate() {
        let gains: Vec<String> = c.gains.iter().map(|&g| format_sig9(g)).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            rank + 1,
            c.index,
            gains.join(","),
            format_sig9(c.score),
            format_sig9(c.control_effort_tv)
        );
    }
    s
}
