//! Trace CSV files.
//!
//! A file carries the projection of each record onto [`COLUMNS`]. Reading
//! restores those fields; the rest (speeds, leader heading, raw sensor
//! reading, run configuration) come back as defaults.

use std::fs;
use std::path::Path;

use super::MetricsError;
use crate::experiment::{Trace, TraceRecord};
use crate::world::VehicleState;

pub const COLUMNS: [&str; 15] = [
    "t",
    "leader_x",
    "leader_y",
    "follower_x",
    "follower_y",
    "follower_heading",
    "pixel_error_x",
    "area_error",
    "steering_pwm",
    "throttle_pwm",
    "lateral_dev_m",
    "follow_dist_m",
    "detected",
    "loop_cost_us",
    "op_count",
];

/// Value of a schema column, or `None` for a name outside the schema.
pub fn column_value(r: &TraceRecord, column: &str) -> Option<f64> {
    Some(match column {
        "t" => r.t,
        "leader_x" => r.leader.x,
        "leader_y" => r.leader.y,
        "follower_x" => r.follower.x,
        "follower_y" => r.follower.y,
        "follower_heading" => r.follower.heading,
        "pixel_error_x" => r.pixel_error_x,
        "area_error" => r.area_error,
        "steering_pwm" => r.steering_pwm,
        "throttle_pwm" => r.throttle_pwm,
        "lateral_dev_m" => r.lateral_dev,
        "follow_dist_m" => r.follow_dist,
        "detected" => f64::from(u8::from(r.detected)),
        "loop_cost_us" => r.loop_cost_us,
        "op_count" => r.op_count as f64,
        _ => return None,
    })
}

/// Shortest `%.9g`-style rendering: nine significant digits, trailing zeros
/// dropped, exponent form outside `[1e-4, 1e9)`.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        return format!("{}e{exp}", trim_fraction(mantissa));
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_fraction(&format!("{x:.decimals$}")).to_string()
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn row(r: &TraceRecord) -> Vec<String> {
    COLUMNS
        .iter()
        .map(|&c| match c {
            "detected" => u8::from(r.detected).to_string(),
            "op_count" => r.op_count.to_string(),
            _ => format_sig9(column_value(r, c).expect("schema column")),
        })
        .collect()
}

pub fn trace_to_csv_string(trace: &Trace) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for r in &trace.records {
        w.write_record(row(r)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write_trace_csv(trace: &Trace, path: &Path) -> Result<(), MetricsError> {
    fs::write(path, trace_to_csv_string(trace))?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`]. The scenario name is the
/// file stem.
pub fn read_trace_csv(path: &Path) -> Result<Trace, MetricsError> {
    let text = fs::read_to_string(path)?;
    let scenario = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_trace_csv(&text, scenario)
}

pub(crate) fn parse_trace_csv(text: &str, scenario: String) -> Result<Trace, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| parse_err(1, e))?,
        None => return Err(MetricsError::Parse { line: 1, msg: "missing header row".into() }),
    };
    for (index, expected) in COLUMNS.iter().enumerate() {
        match header.get(index) {
            Some(found) if found == *expected => {}
            found => {
                return Err(MetricsError::Header {
                    index,
                    found: found.unwrap_or("<missing>").to_string(),
                    expected: expected.to_string(),
                })
            }
        }
    }
    if header.len() > COLUMNS.len() {
        return Err(MetricsError::Header {
            index: COLUMNS.len(),
            found: header[COLUMNS.len()].to_string(),
            expected: "<end of header>".into(),
        });
    }

    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != COLUMNS.len() {
            return Err(MetricsError::Parse {
                line,
                msg: format!("expected {} fields, found {}", COLUMNS.len(), row.len()),
            });
        }
        let num = |i: usize| -> Result<f64, MetricsError> {
            row[i].parse::<f64>().map_err(|_| MetricsError::Parse {
                line,
                msg: format!("column `{}`: `{}` is not a number", COLUMNS[i], &row[i]),
            })
        };
        let detected = match &row[12] {
            "1" => true,
            "0" => false,
            other => return Err(MetricsError::Parse { line, msg: format!("column `detected`: `{other}` is not 0 or 1") }),
        };
        let op_count = row[14].parse::<u64>().map_err(|_| MetricsError::Parse {
            line,
            msg: format!("column `op_count`: `{}` is not a non-negative integer", &row[14]),
        })?;
        records.push(TraceRecord {
            t: num(0)?,
            leader: VehicleState { x: num(1)?, y: num(2)?, heading: 0.0, speed: 0.0 },
            follower: VehicleState { x: num(3)?, y: num(4)?, heading: num(5)?, speed: 0.0 },
            reading: None,
            detected,
            pixel_error_x: num(6)?,
            area_error: num(7)?,
            steering_pwm: num(8)?,
            throttle_pwm: num(9)?,
            lateral_dev: num(10)?,
            follow_dist: num(11)?,
            loop_cost_us: num(13)?,
            op_count,
        });
    }
    Ok(Trace { scenario, label: String::new(), config: None, records, stop: None })
}

fn parse_err(line: u64, e: csv::Error) -> MetricsError {
    MetricsError::Parse { line, msg: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{run_scenario, ScenarioConfig};

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(-0.0), "0");
        assert_eq!(format_sig9(90.0), "90");
        assert_eq!(format_sig9(0.002), "0.002");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(-123456.789012), "-123456.789");
        assert_eq!(format_sig9(1.5e-7), "1.5e-7");
        assert_eq!(format_sig9(2.0e12), "2e12");
        assert_eq!(format_sig9(999999999.7), "1e9");
        assert_eq!(format_sig9(0.0001), "0.0001");
    }

    #[test]
    fn header_only_round_trip() {
        let t = Trace { scenario: "empty".into(), label: String::new(), config: None, records: vec![], stop: None };
        let text = trace_to_csv_string(&t);
        assert_eq!(text, format!("{}\n", COLUMNS.join(",")));
        let back = parse_trace_csv(&text, "empty".into()).unwrap();
        assert!(back.records.is_empty());
    }

    #[test]
    fn simulated_trace_round_trips() {
        let cfg = ScenarioConfig { duration: 0.5, ..ScenarioConfig::default() };
        let trace = run_scenario(&cfg).unwrap();
        let text = trace_to_csv_string(&trace);
        let back = parse_trace_csv(&text, trace.scenario.clone()).unwrap();
        assert_eq!(back.records.len(), trace.records.len());
        for (a, b) in trace.records.iter().zip(&back.records) {
            for c in COLUMNS {
                let (x, y) = (column_value(a, c).unwrap(), column_value(b, c).unwrap());
                assert!((x - y).abs() <= 1e-8 * x.abs().max(1e-300), "{c}: {x} vs {y}");
            }
        }
        assert_eq!(trace_to_csv_string(&back), text);
    }

    #[test]
    fn permuted_header_names_column() {
        let mut cols = COLUMNS.to_vec();
        cols.swap(1, 2);
        let err = parse_trace_csv(&format!("{}\n", cols.join(",")), "x".into()).unwrap_err();
        match err {
            MetricsError::Header { index, found, expected } => {
                assert_eq!((index, found.as_str(), expected.as_str()), (1, "leader_y", "leader_x"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bad_cell_reports_line() {
        let mut text = format!("{}\n", COLUMNS.join(","));
        text.push_str("0,0,0,0,0,0,0,0,90,90,0,1,1,0,3\n");
        text.push_str("0.002,0,0,0,0,0,abc,0,90,90,0,1,1,0,3\n");
        let err = parse_trace_csv(&text, "x".into()).unwrap_err();
        match err {
            MetricsError::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("pixel_error_x"), "{msg}");
            }
            other => panic!("unexpected {other}"),
        }
    }
}
