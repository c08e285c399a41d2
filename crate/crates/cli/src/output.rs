//! CSV and JSON writers, plus the reader for trajectory CSV files.
//!
//! Floats are printed as `{:.16e}`: 17 significant digits, enough to read every
//! `f64` back bit for bit.

use std::fmt::Write as _;

use eulerlab_core::ode::CollapseDetection;
use eulerlab_core::{Classification, FieldSample, Trajectory, TrajectoryState, TrajectoryStatus, Verdict};
use serde::Serialize;

use crate::CliError;

pub const TRAJECTORY_HEADER: &str = "t,a,adot,b,bdot,y";
pub const SWEEP_HEADER: &str = "xi,a0,a1,gamma,verdict,E,T";

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::BlowupFiniteTime => "BlowupFiniteTime",
        Verdict::Global => "Global",
    }
}

fn detection_name(d: CollapseDetection) -> &'static str {
    match d {
        CollapseDetection::Threshold => "threshold",
        CollapseDetection::StepUnderflow => "step_underflow",
    }
}

/// One classified parameter cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassRow {
    pub xi: f64,
    pub a0: f64,
    pub a1: f64,
    pub gamma: f64,
    #[serde(flatten)]
    pub classification: Classification,
}

impl ClassRow {
    /// Formula time when one exists, otherwise the integrated one.
    pub fn blowup_time(&self) -> Option<f64> {
        self.classification.t_formula.or(self.classification.t_numeric)
    }

    fn csv_line(&self, out: &mut String) {
        let c = &self.classification;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            num(self.xi),
            num(self.a0),
            num(self.a1),
            num(self.gamma),
            verdict_name(c.verdict),
            num(c.energy),
            opt_num(self.blowup_time())
        );
    }
}

pub fn class_rows_csv(rows: &[ClassRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        r.csv_line(&mut out);
    }
    out
}

pub fn trajectory_csv(tr: &Trajectory) -> String {
    let mut out = format!("{TRAJECTORY_HEADER}\n");
    for s in &tr.states {
        let _ = writeln!(out, "{},{},{},{},{},{}", num(s.t), num(s.a), num(s.adot), num(s.b), num(s.bdot), num(s.y));
    }
    match tr.status {
        TrajectoryStatus::Completed { t_end } => {
            let _ = writeln!(out, "# status=completed t_end={}", num(t_end));
        }
        TrajectoryStatus::BlowupDetected { t_collapse, detection } => {
            let _ = writeln!(out, "# status=blowup T={} detection={}", num(t_collapse), detection_name(detection));
        }
    }
    out
}

#[derive(Serialize)]
struct TrajectoryDoc<'a> {
    states: &'a [TrajectoryState],
    status: TrajectoryStatus,
    rtol: f64,
    atol: f64,
}

pub fn trajectory_json(tr: &Trajectory) -> Result<String, CliError> {
    let doc = TrajectoryDoc { states: &tr.states, status: tr.status, rtol: tr.rtol, atol: tr.atol };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

/// Footer record of a trajectory CSV file.
#[derive(Debug, Clone, PartialEq)]
pub enum Footer {
    Completed { t_end: f64 },
    Blowup { t_collapse: f64, detection: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCsv {
    pub states: Vec<TrajectoryState>,
    pub footer: Footer,
}

/// Parses the output of `integrate --format csv`.
pub fn read_trajectory_csv(text: &str) -> Result<TrajectoryCsv, CliError> {
    let bad = |m: String| CliError::Parse(m);
    let mut lines = text.lines();
    match lines.next() {
        Some(TRAJECTORY_HEADER) => {}
        other => return Err(bad(format!("unexpected header {other:?}"))),
    }
    let mut states = Vec::new();
    let mut footer = None;
    for (n, line) in lines.enumerate() {
        if let Some(rest) = line.strip_prefix("# ") {
            footer = Some(parse_footer(rest).ok_or_else(|| bad(format!("bad status record `{line}`")))?);
            continue;
        }
        if footer.is_some() {
            return Err(bad(format!("data after the status record on line {}", n + 2)));
        }
        let v: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", n + 2)))?;
        if v.len() != 6 {
            return Err(bad(format!("line {}: expected 6 columns, got {}", n + 2, v.len())));
        }
        states.push(TrajectoryState { t: v[0], a: v[1], adot: v[2], b: v[3], bdot: v[4], y: v[5] });
    }
    let footer = footer.ok_or_else(|| bad("missing status record".into()))?;
    Ok(TrajectoryCsv { states, footer })
}

fn parse_footer(rest: &str) -> Option<Footer> {
    let mut status = None;
    let mut time = None;
    let mut detection = None;
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        match k {
            "status" => status = Some(v),
            "t_end" | "T" => time = Some(v.parse::<f64>().ok()?),
            "detection" => detection = Some(v.to_string()),
            _ => return None,
        }
    }
    match status? {
        "completed" => Some(Footer::Completed { t_end: time? }),
        "blowup" => Some(Footer::Blowup { t_collapse: time?, detection: detection? }),
        _ => None,
    }
}

/// One lattice node of a field file. `x` is the radius in radial mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldRow {
    pub t: f64,
    #[serde(flatten)]
    pub sample: FieldSample,
}

pub fn field_csv(rows: &[FieldRow], radial: bool) -> String {
    let mut out = String::from(if radial { "t,r,rho,u,in_support\n" } else { "t,x,rho,u,in_support\n" });
    for r in rows {
        let s = r.sample;
        let _ = writeln!(out, "{},{},{},{},{}", num(r.t), num(s.x), num(s.rho), num(s.u), s.in_support);
    }
    out
}

#[derive(Serialize)]
struct RadialRow {
    t: f64,
    r: f64,
    rho: f64,
    u: f64,
    in_support: bool,
}

pub fn field_json(rows: &[FieldRow], radial: bool) -> Result<String, CliError> {
    let text = if radial {
        let rows: Vec<RadialRow> = rows
            .iter()
            .map(|r| RadialRow {
                t: r.t,
                r: r.sample.x,
                rho: r.sample.rho,
                u: r.sample.u,
                in_support: r.sample.in_support,
            })
            .collect();
        serde_json::to_string_pretty(&rows)?
    } else {
        serde_json::to_string_pretty(rows)?
    };
    Ok(text + "\n")
}
