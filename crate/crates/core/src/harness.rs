//! Batch runs, JSONL logs, metric summaries, replay and weight sweeps.
//!
//! A log is one JSON object per line: a `header`, one `tick` per control
//! tick, and an `end` marker. Summaries are always computed from the log
//! rows by [`summarize`], so a replay reproduces the run's summary exactly.

use crate::mode::Mode;
use crate::scenario::{Goals, ProgressMetric, Scenario, ScenarioError};
use crate::session::{camera_violation, InvariantViolation, Session, TickRecord};
use crate::se3::rotation_angle;
use crate::tracker::TrackingStatus;
use crate::viewpoint::{OptimizerConfig, SolveStatus};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const LOG_FORMAT: &str = "vdi-run-log";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("log line {line}: {message}; last valid tick {last_valid}")]
    CorruptLog {
        line: usize,
        message: String,
        /// `None` when no tick row was read.
        last_valid: LastTick,
    },
    #[error("replayed summary differs from {0}")]
    SummaryMismatch(String),
}

/// Displayable "last valid tick" for log errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LastTick(pub Option<(u64, f64)>);

impl std::fmt::Display for LastTick {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Some((tick, time)) => write!(f, "{tick} (t = {time:.3} s)"),
            None => write!(f, "none"),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub scenario: String,
    pub seed: u64,
    pub tick: f64,
    pub duration: f64,
    pub optimizer: OptimizerConfig,
    pub goals: Goals,
}

impl LogHeader {
    pub fn for_scenario(scenario: &Scenario, seed: u64) -> Self {
        Self {
            format: LOG_FORMAT.into(),
            version: LOG_VERSION,
            scenario: scenario.name.clone(),
            seed,
            tick: scenario.tick,
            duration: scenario.duration,
            optimizer: scenario.optimizer.clone(),
            goals: scenario.goals.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEnd {
    pub ticks: u64,
    pub status: RunStatus,
    pub violation: Option<InvariantViolation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogLine {
    Header(LogHeader),
    Tick(TickRecord),
    End(LogEnd),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeChange {
    pub time: f64,
    pub mode: Mode,
}

/// Mean objective terms over ticks with an estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanObjectives {
    pub distance: f64,
    pub centering: f64,
    pub neutral_position: f64,
    pub neutral_rotation: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub scenario: String,
    pub seed: u64,
    pub status: RunStatus,
    pub ticks: u64,
    pub simulated_time: f64,
    /// Share of ticks in NaturalTracking/NaturalLost whose tracker status was
    /// Tracking. Zero if those modes were never entered.
    pub tracking_uptime: f64,
    pub mean_position_error: Option<f64>,
    pub max_position_error: Option<f64>,
    pub mean_rotation_error: Option<f64>,
    pub max_rotation_error: Option<f64>,
    pub constraint_violations: u64,
    pub mode_entries: BTreeMap<Mode, u64>,
    pub mode_ticks: BTreeMap<Mode, u64>,
    pub mode_sequence: Vec<ModeChange>,
    pub beeps: u64,
    pub faults: u64,
    pub solver_rejections: u64,
    pub mean_objectives: Option<MeanObjectives>,
    /// Mean true camera-to-tool depth while in NaturalTracking.
    pub mean_tracking_depth: Option<f64>,
    pub progress: f64,
    pub required_modes_visited: bool,
    pub complete: bool,
}

#[derive(Default)]
struct Stat {
    n: u64,
    sum: f64,
    max: f64,
}

impl Stat {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.max = self.max.max(v);
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }

    fn max(&self) -> Option<f64> {
        (self.n > 0).then_some(self.max)
    }
}

pub fn summarize(header: &LogHeader, rows: &[TickRecord], status: RunStatus) -> MetricsSummary {
    let mut mode_entries = BTreeMap::new();
    let mut mode_ticks = BTreeMap::new();
    let mut mode_sequence = Vec::new();
    let (mut active, mut up) = (0u64, 0u64);
    let (mut pos_err, mut rot_err, mut depth) = (Stat::default(), Stat::default(), Stat::default());
    let mut obj = [Stat::default(), Stat::default(), Stat::default(), Stat::default(), Stat::default()];
    let (mut violations, mut beeps, mut faults, mut rejections) = (0u64, 0u64, 0u64, 0u64);

    let mut prev: Option<&TickRecord> = None;
    for r in rows {
        *mode_ticks.entry(r.mode).or_insert(0) += 1;
        if prev.is_none_or(|p| p.mode != r.mode) {
            *mode_entries.entry(r.mode).or_insert(0) += 1;
            mode_sequence.push(ModeChange {
                time: r.time,
                mode: r.mode,
            });
        }
        if matches!(r.mode, Mode::NaturalTracking | Mode::NaturalLost) {
            active += 1;
            if r.tracking == TrackingStatus::Tracking {
                up += 1;
            }
        }
        if r.published && r.tracking == TrackingStatus::Tracking {
            if let Some(est) = &r.estimate {
                pos_err.push((est.position - r.tool_true.position).norm());
                rot_err.push(rotation_angle(&(r.tool_true.rotation * est.rotation.inverse())));
            }
        }
        if r.mode == Mode::NaturalTracking {
            depth.push(r.depth_true);
        }
        if let Some(o) = &r.objectives {
            for (s, v) in obj.iter_mut().zip(o.as_array()) {
                s.push(v);
            }
        }
        let prev_camera = prev.map_or(r.camera, |p| p.camera);
        if camera_violation(&header.optimizer, &prev_camera, &r.camera, header.tick).is_some() {
            violations += 1;
        }
        if r.signals.beep && !prev.is_some_and(|p| p.signals.beep) {
            beeps += 1;
        }
        if r.fault.is_some() {
            faults += 1;
        }
        if r.solver == Some(SolveStatus::Rejected) {
            rejections += 1;
        }
        prev = Some(r);
    }

    let progress = rows.last().map_or(0.0, |r| r.progress);
    let required_modes_visited = header.goals.required_modes.iter().all(|m| mode_ticks.contains_key(m));
    let progress_ok = header.goals.progress == ProgressMetric::None || progress >= header.goals.min_progress;
    let mean_objectives = obj[0].mean().map(|_| MeanObjectives {
        distance: obj[0].mean().unwrap(),
        centering: obj[1].mean().unwrap(),
        neutral_position: obj[2].mean().unwrap(),
        neutral_rotation: obj[3].mean().unwrap(),
        total: obj[4].mean().unwrap(),
    });

    MetricsSummary {
        scenario: header.scenario.clone(),
        seed: header.seed,
        status,
        ticks: rows.len() as u64,
        simulated_time: rows.last().map_or(0.0, |r| r.time),
        tracking_uptime: if active > 0 { up as f64 / active as f64 } else { 0.0 },
        mean_position_error: pos_err.mean(),
        max_position_error: pos_err.max(),
        mean_rotation_error: rot_err.mean(),
        max_rotation_error: rot_err.max(),
        constraint_violations: violations,
        mode_entries,
        mode_ticks,
        mode_sequence,
        beeps,
        faults,
        solver_rejections: rejections,
        mean_objectives,
        mean_tracking_depth: depth.mean(),
        progress,
        required_modes_visited,
        complete: status == RunStatus::Complete && required_modes_visited && progress_ok,
    }
}

/// An in-memory run: every log line plus the summary.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub header: LogHeader,
    pub rows: Vec<TickRecord>,
    pub end: LogEnd,
    pub summary: MetricsSummary,
}

impl RunOutput {
    pub fn violation(&self) -> Option<&InvariantViolation> {
        self.end.violation.as_ref()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &LogLine| {
            out.push_str(&serde_json::to_string(line).expect("log lines serialize"));
            out.push('\n');
        };
        push(&LogLine::Header(self.header.clone()));
        for r in &self.rows {
            push(&LogLine::Tick(r.clone()));
        }
        push(&LogLine::End(self.end.clone()));
        out
    }
}

/// Runs a scenario to completion (or to the first invariant violation).
pub fn run(scenario: &Scenario, seed: u64) -> Result<RunOutput, ScenarioError> {
    let header = LogHeader::for_scenario(scenario, seed);
    let mut session = Session::new(scenario.clone(), seed)?;
    let mut rows = Vec::with_capacity(scenario.total_ticks() as usize);
    let mut violation = None;
    loop {
        match session.tick() {
            Ok(Some(r)) => rows.push(r),
            Ok(None) => break,
            Err(v) => {
                if let Some(r) = session.last_record() {
                    rows.push(r.clone());
                }
                violation = Some(v);
                break;
            }
        }
    }
    let status = if violation.is_some() {
        RunStatus::Aborted
    } else {
        RunStatus::Complete
    };
    let summary = summarize(&header, &rows, status);
    let end = LogEnd {
        ticks: rows.len() as u64,
        status,
        violation,
    };
    Ok(RunOutput {
        header,
        rows,
        end,
        summary,
    })
}

pub fn summary_path(log: &Path) -> PathBuf {
    log.with_extension("summary.json")
}

pub fn summary_json(summary: &MetricsSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

/// Runs and writes `<log>` and `<log stem>.summary.json`. An invariant
/// violation still writes both files and is then returned as the error.
pub fn run_to_files(scenario: &Scenario, seed: u64, log: &Path) -> Result<MetricsSummary, HarnessError> {
    let out = run(scenario, seed)?;
    std::fs::write(log, out.to_jsonl()).map_err(io_err(log))?;
    let sp = summary_path(log);
    std::fs::write(&sp, summary_json(&out.summary)).map_err(io_err(&sp))?;
    match out.end.violation {
        Some(v) => Err(HarnessError::Invariant(v)),
        None => Ok(out.summary),
    }
}

/// A parsed log.
#[derive(Clone, Debug)]
pub struct ParsedLog {
    pub header: LogHeader,
    pub rows: Vec<TickRecord>,
    pub end: LogEnd,
}

pub fn parse_log<R: BufRead>(reader: R) -> Result<ParsedLog, HarnessError> {
    let mut header = None;
    let mut rows: Vec<TickRecord> = Vec::new();
    let mut end = None;
    let mut line_no = 0;
    let last = |rows: &[TickRecord]| LastTick(rows.last().map(|r| (r.tick, r.time)));
    for line in reader.lines() {
        line_no += 1;
        let corrupt = |message: String, rows: &[TickRecord]| HarnessError::CorruptLog {
            line: line_no,
            message,
            last_valid: last(rows),
        };
        let line = line.map_err(|e| corrupt(e.to_string(), &rows))?;
        if line.trim().is_empty() {
            continue;
        }
        if end.is_some() {
            return Err(corrupt("content after end marker".into(), &rows));
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string(), &rows))?;
        match parsed {
            LogLine::Header(h) if header.is_none() && rows.is_empty() => {
                if h.format != LOG_FORMAT || h.version != LOG_VERSION {
                    return Err(corrupt(format!("unsupported log format {} v{}", h.format, h.version), &rows));
                }
                header = Some(h);
            }
            LogLine::Header(_) => return Err(corrupt("unexpected header".into(), &rows)),
            LogLine::Tick(_) if header.is_none() => return Err(corrupt("tick before header".into(), &rows)),
            LogLine::Tick(r) => {
                if let Some(p) = rows.last() {
                    if r.tick != p.tick + 1 || r.time <= p.time {
                        return Err(corrupt(format!("tick {} does not follow tick {}", r.tick, p.tick), &rows));
                    }
                }
                rows.push(r);
            }
            LogLine::End(e) => {
                if e.ticks != rows.len() as u64 {
                    return Err(corrupt(format!("end marker claims {} ticks, found {}", e.ticks, rows.len()), &rows));
                }
                end = Some(e);
            }
        }
    }
    let Some(header) = header else {
        return Err(HarnessError::CorruptLog {
            line: line_no,
            message: "missing header".into(),
            last_valid: LastTick(None),
        });
    };
    let Some(end) = end else {
        return Err(HarnessError::CorruptLog {
            line: line_no,
            message: "truncated: no end marker".into(),
            last_valid: last(&rows),
        });
    };
    Ok(ParsedLog { header, rows, end })
}

pub fn replay_str(text: &str) -> Result<MetricsSummary, HarnessError> {
    let log = parse_log(text.as_bytes())?;
    Ok(summarize(&log.header, &log.rows, log.end.status))
}

/// Recomputes the summary from a log. If a summary file sits next to the
/// log it must match; if it is missing it is written.
pub fn replay_file(log: &Path) -> Result<MetricsSummary, HarnessError> {
    let file = std::fs::File::open(log).map_err(io_err(log))?;
    let parsed = parse_log(std::io::BufReader::new(file))?;
    let summary = summarize(&parsed.header, &parsed.rows, parsed.end.status);
    let sp = summary_path(log);
    match std::fs::read_to_string(&sp) {
        Ok(existing) => {
            if existing != summary_json(&summary) {
                return Err(HarnessError::SummaryMismatch(sp.display().to_string()));
            }
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            std::fs::write(&sp, summary_json(&summary)).map_err(io_err(&sp))?;
        }
        Err(e) => return Err(io_err(&sp)(e)),
    }
    Ok(summary)
}

/// Objective weights and desired distance for one sweep point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightPoint {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub desired_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightGrid {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub w3: Vec<f64>,
    pub w4: Vec<f64>,
    pub desired_distance: Vec<f64>,
}

impl WeightGrid {
    /// Single point at `config`'s values.
    pub fn from_config(config: &OptimizerConfig) -> Self {
        Self {
            w1: vec![config.w1],
            w2: vec![config.w2],
            w3: vec![config.w3],
            w4: vec![config.w4],
            desired_distance: vec![config.desired_distance],
        }
    }

    pub fn points(&self) -> Vec<WeightPoint> {
        let mut out = Vec::new();
        for &w1 in &self.w1 {
            for &w2 in &self.w2 {
                for &w3 in &self.w3 {
                    for &w4 in &self.w4 {
                        for &desired_distance in &self.desired_distance {
                            out.push(WeightPoint {
                                w1,
                                w2,
                                w3,
                                w4,
                                desired_distance,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One CSV row of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub desired_distance: f64,
    pub tracking_uptime: f64,
    pub mean_position_error: Option<f64>,
    pub mean_rotation_error: Option<f64>,
    pub mean_distance_term: Option<f64>,
    pub mean_centering_term: Option<f64>,
    pub mean_neutral_position_term: Option<f64>,
    pub mean_neutral_rotation_term: Option<f64>,
    pub mean_objective: Option<f64>,
    pub mean_tracking_depth: Option<f64>,
    pub beeps: u64,
    pub constraint_violations: u64,
    pub complete: bool,
    pub aborted: bool,
}

pub fn sweep(scenario: &Scenario, seed: u64, grid: &WeightGrid) -> Result<Vec<SweepRow>, ScenarioError> {
    let mut rows = Vec::new();
    for p in grid.points() {
        let mut s = scenario.clone();
        s.optimizer.w1 = p.w1;
        s.optimizer.w2 = p.w2;
        s.optimizer.w3 = p.w3;
        s.optimizer.w4 = p.w4;
        s.optimizer.desired_distance = p.desired_distance;
        let out = run(&s, seed)?;
        let m = &out.summary;
        let o = m.mean_objectives;
        rows.push(SweepRow {
            w1: p.w1,
            w2: p.w2,
            w3: p.w3,
            w4: p.w4,
            desired_distance: p.desired_distance,
            tracking_uptime: m.tracking_uptime,
            mean_position_error: m.mean_position_error,
            mean_rotation_error: m.mean_rotation_error,
            mean_distance_term: o.map(|o| o.distance),
            mean_centering_term: o.map(|o| o.centering),
            mean_neutral_position_term: o.map(|o| o.neutral_position),
            mean_neutral_rotation_term: o.map(|o| o.neutral_rotation),
            mean_objective: o.map(|o| o.total),
            mean_tracking_depth: m.mean_tracking_depth,
            beeps: m.beeps,
            constraint_violations: m.constraint_violations,
            complete: m.complete,
            aborted: m.status == RunStatus::Aborted,
        });
    }
    Ok(rows)
}

/// Writes log text to any sink; used by callers streaming to stdout.
pub fn write_jsonl<W: Write>(out: &RunOutput, mut sink: W) -> std::io::Result<()> {
    sink.write_all(out.to_jsonl().as_bytes())
}
