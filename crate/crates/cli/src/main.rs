use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use follower_lab::experiment::{
    read_scenario, run_experiment, run_step_response, Channel, ControllerKind, ScenarioConfig, Trace,
};
use follower_lab::metrics::{
    compare, format_sig9, render_report, tracking_metrics, write_plot_svg, write_trace_csv, ComparisonReport,
    Metric, MetricSet, Objective, Signal, Tolerances,
};
use follower_lab::tune::{grid_search, read_grid, results_csv, TuneSpec};

/// Leader-follower control lab: simulate, compare PID and fuzzy control,
/// tune gains, and sweep step responses.
#[derive(Parser)]
#[command(name = "follower-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment a scenario file describes and write its trace CSV and plots.
    Run {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory; created if missing. Nothing is written elsewhere.
        #[arg(long)]
        out: PathBuf,
        /// Seed for the optional sensor jitter; overrides the file's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario with PID and then fuzzy control and write a comparison report.
    Compare {
        /// Scenario TOML file; it must configure both controller types.
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Seed for the optional sensor jitter; overrides the file's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Grid-search one channel's gains and write ranked results.
    Tune {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Channel whose controller is tuned.
        #[arg(long, value_enum)]
        channel: ChannelArg,
        /// Grid TOML file: `kp`, `ki`, `kd` lists for PID, or `output_scale` for fuzzy.
        #[arg(long)]
        grid: PathBuf,
        /// Objective to minimize.
        #[arg(long, value_enum, default_value = "itae")]
        objective: ObjectiveArg,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Seed for the optional sensor jitter; overrides the file's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Throttle step responses from several starting separations.
    Sweep {
        /// Scenario TOML file supplying the vehicles, camera and controllers.
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated starting separations in meters, e.g. `1,2,4`.
        #[arg(long)]
        separations: String,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Seed for the optional sensor jitter; overrides the file's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Steering,
    Throttle,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Itae,
    Ise,
    Rms,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, out, seed } => cmd_run(&load(&scenario, seed)?, &out),
        Command::Compare { scenario, out, seed } => cmd_compare(&load(&scenario, seed)?, &out),
        Command::Tune { scenario, channel, grid, objective, out, seed } => {
            let channel = match channel {
                ChannelArg::Steering => Channel::Steering,
                ChannelArg::Throttle => Channel::Throttle,
            };
            let objective = match objective {
                ObjectiveArg::Itae => Objective::Itae,
                ObjectiveArg::Ise => Objective::Ise,
                ObjectiveArg::Rms => Objective::Rms,
            };
            cmd_tune(&load(&scenario, seed)?, channel, &grid, objective, &out)
        }
        Command::Sweep { scenario, separations, out, seed } => {
            let seps = parse_separations(&separations)?;
            cmd_sweep(&load(&scenario, seed)?, &seps, &out)
        }
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = read_scenario(path).with_context(|| format!("scenario {}", path.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn parse_separations(text: &str) -> Result<Vec<f64>> {
    let seps = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("invalid separation `{}`", s.trim())))
        .collect::<Result<Vec<_>>>()?;
    if seps.is_empty() {
        bail!("no separations given");
    }
    Ok(seps)
}

/// File-name-safe version of a scenario name or label.
fn file_stem(parts: &[&str]) -> String {
    let joined = parts.iter().filter(|p| !p.is_empty()).copied().collect::<Vec<_>>().join("_");
    let cleaned: String =
        joined.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.' { c } else { '_' }).collect();
    let cleaned = cleaned.trim_start_matches('.').to_string();
    if cleaned.is_empty() {
        "trace".into()
    } else {
        cleaned
    }
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn channel_active(trace: &Trace, channel: Channel) -> bool {
    trace.config.as_ref().is_none_or(|c| c.channel(channel).kind != ControllerKind::Off)
}

/// Writes `<stem>.csv`, the steering plot `<stem>.svg` and the throttle plot
/// `<stem>_throttle.svg`.
fn write_artifacts(trace: &Trace, out: &Path, stem: &str) -> Result<()> {
    write_trace_csv(trace, &out.join(format!("{stem}.csv")))?;
    write_plot_svg(trace, &["pixel_error_x", "steering_pwm"], &out.join(format!("{stem}.svg")))?;
    write_plot_svg(trace, &["area_error", "throttle_pwm"], &out.join(format!("{stem}_throttle.svg")))?;
    Ok(())
}

fn summary_line(trace: &Trace) -> String {
    let last = trace.records.last();
    let stop = match trace.stop {
        Some(follower_lab::experiment::StopReason::FollowerAtRest { t }) => format!("stopped at rest t={}", format_sig9(t)),
        None => "ran to duration".into(),
    };
    format!(
        "{}: {} records, {stop}, final pixel_error_x={}, final area_error={}, lost detections={}",
        file_stem(&[&trace.scenario, &trace.label]),
        trace.records.len(),
        last.map_or("n/a".into(), |r| format_sig9(r.pixel_error_x)),
        last.map_or("n/a".into(), |r| format_sig9(r.area_error)),
        trace.lost_detection_count()
    )
}

fn cmd_run(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let traces = run_experiment(cfg)?;
    prepare_out(out)?;
    for trace in &traces {
        write_artifacts(trace, out, &file_stem(&[&trace.scenario, &trace.label]))?;
        println!("{}", summary_line(trace));
    }
    Ok(())
}

fn cmd_compare(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let pid_cfg = cfg.with_controllers(ControllerKind::Pid);
    let fuzzy_cfg = cfg.with_controllers(ControllerKind::Fuzzy);
    pid_cfg.validate().context("PID configuration")?;
    fuzzy_cfg.validate().context("fuzzy configuration")?;
    let pid = run_experiment(&pid_cfg)?;
    let fuzzy = run_experiment(&fuzzy_cfg)?;
    prepare_out(out)?;

    let mut reports: Vec<ComparisonReport> = Vec::new();
    for (p, f) in pid.iter().zip(&fuzzy) {
        write_artifacts(p, out, &file_stem(&[&p.scenario, &p.label, "pid"]))?;
        write_artifacts(f, out, &file_stem(&[&f.scenario, &f.label, "fuzzy"]))?;
        for channel in [Channel::Steering, Channel::Throttle] {
            if !channel_active(p, channel) {
                continue;
            }
            let mut report = compare(p, f, Signal::for_channel(channel), &Tolerances::default())?;
            if !p.label.is_empty() {
                report.scenario = format!("{} {}", report.scenario, p.label);
            }
            reports.push(report);
        }
    }
    fs::write(out.join("report.md"), render_report(&reports))?;

    for r in &reports {
        let winners: Vec<String> =
            r.rows.iter().map(|row| format!("{}={}", row.metric.name(), row.winner.as_str())).collect();
        println!("{} [{}]: {}", r.scenario, r.signal, winners.join(" "));
    }
    Ok(())
}

fn cmd_tune(cfg: &ScenarioConfig, channel: Channel, grid: &Path, objective: Objective, out: &Path) -> Result<()> {
    let current = cfg.channel(channel).pid.as_ref().map(|p| [p.config.kp, p.config.ki, p.config.kd]);
    let grid = read_grid(grid, current).with_context(|| format!("grid {}", grid.display()))?;
    let spec = TuneSpec { channel, grid, objective, scenario: cfg.clone() };
    let result = grid_search(&spec, true)?;
    prepare_out(out)?;
    fs::write(out.join("results.csv"), results_csv(&result))?;
    let runs = out.join("runs");
    prepare_out(&runs)?;
    let mut by_index: Vec<_> = result.ranked.iter().collect();
    by_index.sort_by_key(|c| c.index);
    for c in by_index {
        for t in &c.traces {
            let candidate = format!("candidate_{:03}", c.index);
            write_trace_csv(t, &runs.join(format!("{}.csv", file_stem(&[&candidate, &t.label]))))?;
        }
    }
    let best = result.best();
    let gains: Vec<String> =
        result.gain_names.iter().zip(&best.gains).map(|(n, g)| format!("{n}={}", format_sig9(*g))).collect();
    println!(
        "best {} (candidate {}): {} {}={} control_effort_tv={}",
        channel.as_str(),
        best.index,
        gains.join(" "),
        objective.as_str(),
        format_sig9(best.score),
        format_sig9(best.control_effort_tv)
    );
    Ok(())
}

fn cmd_sweep(cfg: &ScenarioConfig, separations: &[f64], out: &Path) -> Result<()> {
    let traces = run_step_response(cfg, separations)?;
    prepare_out(out)?;
    let mut rows = Vec::new();
    for (sep, trace) in separations.iter().zip(&traces) {
        write_artifacts(trace, out, &file_stem(&[&trace.scenario, &trace.label]))?;
        rows.push((*sep, tracking_metrics(trace, Signal::AreaError)?));
    }
    let table = summary_table(&rows);
    fs::write(out.join("summary.md"), &table)?;
    print!("{table}");
    Ok(())
}

fn summary_table(rows: &[(f64, MetricSet)]) -> String {
    let mut s = String::from("| separation_m |");
    for m in Metric::ALL {
        s.push_str(&format!(" {} |", m.name()));
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(Metric::ALL.len()));
    s.push('\n');
    for (sep, set) in rows {
        s.push_str(&format!("| {} |", format_sig9(*sep)));
        for m in Metric::ALL {
            s.push_str(&format!(" {} |", m.value(set).map_or("n/a".into(), format_sig9)));
        }
        s.push('\n');
    }
    s
}
