//! Scenario files and the built-in scenario library.
//!
//! A scenario is a TOML document. Every table except `trajectory` is
//! optional and falls back to defaults; all quantities are SI (meters,
//! radians, seconds, newtons). The README describes every field.

use crate::mode::{Mode, ModeConfig};
use crate::se3::{Pose, Rotation};
use crate::tracker::{MarkerLayout, TrackerConfig};
use crate::viewpoint::{CameraDecision, OptimizerConfig};
use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown scenario `{0}`")]
    Unknown(String),
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

fn default_tick() -> f64 {
    0.02
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisibilityConfig {
    /// Half-angle of the camera view cone, radians.
    pub fov_half_angle: f64,
    pub min_range: f64,
    pub max_range: f64,
    /// Largest angle between a marker normal and the marker→camera ray.
    pub max_incidence: f64,
    /// Per-marker, per-frame probability of a missed detection (occlusion).
    pub dropout_prob: f64,
    /// Gaussian noise on each detected marker pose, in the camera frame.
    pub noise_pos: f64,
    pub noise_rot: f64,
}

impl Default for VisibilityConfig {
    fn default() -> Self {
        Self {
            fov_half_angle: 0.6,
            min_range: 0.1,
            max_range: 1.0,
            max_incidence: 1.1,
            dropout_prob: 0.05,
            noise_pos: 0.005,
            noise_rot: 0.02,
        }
    }
}

impl VisibilityConfig {
    pub fn noiseless() -> Self {
        Self {
            dropout_prob: 0.0,
            noise_pos: 0.0,
            noise_rot: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle < FRAC_PI_2) {
            return Err(invalid("visibility.fov_half_angle", "must lie in (0, π/2)"));
        }
        if !(self.min_range >= 0.0 && self.min_range < self.max_range && self.max_range.is_finite()) {
            return Err(invalid("visibility.min_range", "need 0 <= min_range < max_range"));
        }
        if !(self.max_incidence > 0.0 && self.max_incidence < FRAC_PI_2) {
            return Err(invalid("visibility.max_incidence", "must lie in (0, π/2)"));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(invalid("visibility.dropout_prob", "must lie in [0, 1]"));
        }
        if !(self.noise_pos >= 0.0 && self.noise_rot >= 0.0) {
            return Err(invalid("visibility.noise_pos", "noise must be non-negative"));
        }
        Ok(())
    }
}

/// Unilateral linear spring half-space: pushes the tool tip out along
/// `normal` once it is below the plane through `point`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSurface {
    pub name: String,
    pub point: [f64; 3],
    pub normal: [f64; 3],
    /// N/m
    pub stiffness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactConfig {
    /// Tool tip in the tool frame.
    pub tip_offset: [f64; 3],
    pub surfaces: Vec<ContactSurface>,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            tip_offset: [0.0, 0.0, 0.12],
            surfaces: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    /// Probability per tick that the raw contact (FSR) reading flips.
    pub fsr_flip_prob: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { fsr_flip_prob: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProgressMetric {
    #[default]
    None,
    /// Tool-tip path length while touching any surface (rolling).
    ContactTravel,
    /// Deepest tip penetration below the first surface (press fitting).
    InsertionDepth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Goals {
    pub required_modes: Vec<Mode>,
    pub progress: ProgressMetric,
    pub min_progress: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    pub attached: bool,
    pub pin_pulled: bool,
    /// Defaults to the optimizer's neutral decision.
    pub camera: Option<CameraDecision>,
    /// Tool pose for interactive sessions (scripted runs start on the trajectory).
    pub tool: Option<Pose>,
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            attached: true,
            pin_pulled: false,
            camera: None,
            tool: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Pin pulled and tool removed from the mount.
    PullPin,
    /// Tool seated back on the mount, pin home.
    Reattach,
    /// Input device pressed with deflection `twist`.
    PressDevice,
    ReleaseDevice,
    /// Operator grasps the attached tool and pulls with `force` N along the tool axis.
    Grasp,
    ReleaseGrasp,
    /// Extra environment force of `force` N pushing back along the tool axis.
    ExternalForce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedEvent {
    pub t: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "is_zero6")]
    pub twist: [f64; 6],
    #[serde(default, skip_serializing_if = "is_zero")]
    pub force: f64,
}

fn is_zero6(v: &[f64; 6]) -> bool {
    v.iter().all(|c| *c == 0.0)
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl TimedEvent {
    pub fn new(t: f64, kind: EventKind) -> Self {
        Self {
            t,
            kind,
            twist: [0.0; 6],
            force: 0.0,
        }
    }

    pub fn with_twist(mut self, twist: [f64; 6]) -> Self {
        self.twist = twist;
        self
    }

    pub fn with_force(mut self, force: f64) -> Self {
        self.force = force;
        self
    }
}

/// One trajectory sample. Orientation is either a quaternion `[w, x, y, z]`
/// or roll-pitch-yaw radians (world-fixed x, then y, then z).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub t: f64,
    pub position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quaternion: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpy: Option<[f64; 3]>,
}

impl Keyframe {
    pub fn from_pose(t: f64, pose: &Pose) -> Self {
        Self {
            t,
            position: [pose.position.x, pose.position.y, pose.position.z],
            quaternion: Some(pose.rotation.to_wxyz()),
            rpy: None,
        }
    }

    fn rotation(&self) -> Option<Rotation> {
        match (self.quaternion, self.rpy) {
            (Some(q), None) => Rotation::from_wxyz(q),
            (None, Some([r, p, y])) => Some(Rotation::about_z(y) * Rotation::about_y(p) * Rotation::about_x(r)),
            (None, None) => Some(Rotation::identity()),
            (Some(_), Some(_)) => None,
        }
    }

    pub fn pose(&self) -> Option<Pose> {
        let p = Vector3::from(self.position);
        if p.iter().any(|c| !c.is_finite()) || !self.t.is_finite() {
            return None;
        }
        Some(Pose::new(p, self.rotation()?))
    }
}

/// Piecewise interpolation through keyframes: linear in position, slerp in
/// rotation. Defined on `[first.t, last.t]`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    times: Vec<f64>,
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(keyframes: &[Keyframe]) -> Result<Self, ScenarioError> {
        if keyframes.is_empty() {
            return Err(invalid("trajectory", "at least one keyframe is required"));
        }
        let mut times = Vec::with_capacity(keyframes.len());
        let mut poses = Vec::with_capacity(keyframes.len());
        for (i, k) in keyframes.iter().enumerate() {
            let pose = k
                .pose()
                .ok_or_else(|| invalid(&format!("trajectory[{i}]"), "needs a finite position and exactly one of quaternion/rpy"))?;
            if let Some(&prev) = times.last() {
                if k.t <= prev {
                    return Err(invalid(&format!("trajectory[{i}].t"), "keyframe times must strictly increase"));
                }
            }
            times.push(k.t);
            poses.push(pose);
        }
        Ok(Self { times, poses })
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn sample(&self, t: f64) -> Option<Pose> {
        const SLACK: f64 = 1e-9;
        if !(t >= self.start() - SLACK && t <= self.end() + SLACK) {
            return None;
        }
        let idx = self.times.partition_point(|&k| k <= t);
        if idx == 0 {
            return Some(self.poses[0]);
        }
        if idx >= self.times.len() {
            return Some(*self.poses.last().unwrap());
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let (a, b) = (&self.poses[idx - 1], &self.poses[idx]);
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let position = a.position + (b.position - a.position) * s;
        if a.rotation == b.rotation {
            return Some(Pose::new(position, a.rotation));
        }
        let qa = *a.rotation.quaternion();
        let mut qb = *b.rotation.quaternion();
        if qa.quaternion().dot(qb.quaternion()) < 0.0 {
            qb = UnitQuaternion::new_unchecked(-qb.into_inner());
        }
        let q = qa.try_slerp(&qb, s, 1e-12).unwrap_or(qa);
        let rotation = Rotation::from_wxyz([q.w, q.i, q.j, q.k]).unwrap_or(a.rotation);
        Some(Pose::new(position, rotation))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub duration: f64,
    #[serde(default = "default_tick")]
    pub tick: f64,
    #[serde(default)]
    pub seed: u64,
    /// Tool pose comes from an interactive client instead of `trajectory`.
    #[serde(default)]
    pub interactive: bool,
    #[serde(default = "yes")]
    pub abort_on_violation: bool,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default)]
    pub visibility: VisibilityConfig,
    #[serde(default)]
    pub contact: ContactConfig,
    #[serde(default)]
    pub sensors: SensorConfig,
    #[serde(default)]
    pub goals: Goals,
    #[serde(default = "MarkerLayout::default_tool")]
    pub markers: MarkerLayout,
    #[serde(default)]
    pub events: Vec<TimedEvent>,
    #[serde(default)]
    pub trajectory: Vec<Keyframe>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ScenarioError::Parse(msg) => ScenarioError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// A built-in scenario name or a path to a scenario file.
    pub fn resolve(name_or_path: &str) -> Result<Self, ScenarioError> {
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::load(path);
        }
        builtin_scenarios()
            .into_iter()
            .find(|s| s.name == name_or_path)
            .ok_or_else(|| ScenarioError::Unknown(name_or_path.to_string()))
    }

    pub fn total_ticks(&self) -> u64 {
        (self.duration / self.tick).round() as u64
    }

    pub fn trajectory(&self) -> Result<Trajectory, ScenarioError> {
        Trajectory::new(&self.trajectory)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if !(self.tick > 0.0 && self.tick.is_finite()) {
            return Err(invalid("tick", "must be positive"));
        }
        if !(self.duration >= self.tick && self.duration.is_finite()) {
            return Err(invalid("duration", "must be at least one tick"));
        }
        self.optimizer
            .validate()
            .map_err(|e| invalid("optimizer", e.to_string()))?;
        self.tracker.validate().map_err(|e| invalid("tracker", e.to_string()))?;
        self.mode.validate().map_err(|e| invalid("mode", e))?;
        self.visibility.validate()?;
        if !(0.0..=1.0).contains(&self.sensors.fsr_flip_prob) {
            return Err(invalid("sensors.fsr_flip_prob", "must lie in [0, 1]"));
        }
        for (i, s) in self.contact.surfaces.iter().enumerate() {
            let n = Vector3::from(s.normal);
            if !(n.norm() > 1e-9) || !(s.stiffness >= 0.0) || s.point.iter().any(|c| !c.is_finite()) {
                return Err(invalid(&format!("contact.surfaces[{i}]"), "needs a non-zero normal and non-negative stiffness"));
            }
        }
        if self.initial.attached && self.initial.pin_pulled {
            return Err(invalid("initial", "tool cannot be attached with the pin pulled"));
        }
        if let Some(c) = &self.initial.camera {
            if !self.optimizer.contains(c, 0.0) {
                return Err(invalid("initial.camera", "outside the optimizer bounds"));
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            if !(e.t >= 0.0 && e.t.is_finite()) {
                return Err(invalid(&format!("events[{i}].t"), "must be a non-negative time"));
            }
            if e.twist.iter().any(|c| !c.is_finite() || c.abs() > 1.0) || !e.force.is_finite() {
                return Err(invalid(&format!("events[{i}]"), "twist components must lie in [-1, 1] and force be finite"));
            }
        }
        if self.interactive {
            if !self.trajectory.is_empty() {
                self.trajectory()?;
            }
        } else {
            let traj = self.trajectory()?;
            if traj.start() > 0.0 || traj.end() + 1e-9 < self.duration {
                return Err(invalid("trajectory", format!("must cover [0, {}] s", self.duration)));
            }
        }
        Ok(())
    }
}

/// Tool held upright (tip down) with its front (+x) facing world +y, i.e.
/// toward a camera that looks along −y.
pub fn front_facing() -> Rotation {
    Rotation::from_matrix(&nalgebra::Matrix3::from_columns(&[
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 0.0, -1.0),
    ]))
}

/// Top face turned toward the camera.
pub fn top_facing() -> Rotation {
    Rotation::about_x(-FRAC_PI_2) * front_facing()
}

/// Tip (end effector) turned toward the camera.
pub fn tip_facing() -> Rotation {
    Rotation::about_x(FRAC_PI_2) * front_facing()
}

/// Rolling about the tool's own axis by `angle`.
fn rolled(base: Rotation, angle: f64) -> Rotation {
    base * Rotation::about_z(angle)
}

fn kf(t: f64, p: [f64; 3], r: Rotation) -> Keyframe {
    Keyframe::from_pose(t, &Pose::new(Vector3::from(p), r))
}

/// Back-and-forth rolling strokes along world x starting at `t0`.
fn rolling_strokes(t0: f64, t1: f64, center: [f64; 3], amplitude: f64, period: f64, roll: f64, base: Rotation) -> Vec<Keyframe> {
    let mut out = Vec::new();
    let steps_per_period = 8;
    let dt = period / steps_per_period as f64;
    let mut k = 0;
    loop {
        let t = t0 + k as f64 * dt;
        if t > t1 + 1e-9 {
            break;
        }
        let phase = 2.0 * PI * (k as f64) / steps_per_period as f64;
        let x = center[0] + amplitude * phase.sin();
        out.push(kf(t, [x, center[1], center[2]], rolled(base, roll * phase.sin())));
        k += 1;
    }
    out
}

const WORK_POINT: [f64; 3] = [0.0, -0.7, 0.25];

fn natural_base(name: &str, description: &str, duration: f64, seed: u64) -> Scenario {
    Scenario {
        name: name.into(),
        description: description.into(),
        duration,
        tick: default_tick(),
        seed,
        interactive: false,
        abort_on_violation: true,
        initial: InitialState::default(),
        optimizer: OptimizerConfig::default(),
        tracker: TrackerConfig::default(),
        mode: ModeConfig::default(),
        visibility: VisibilityConfig::default(),
        contact: ContactConfig::default(),
        sensors: SensorConfig::default(),
        goals: Goals {
            required_modes: vec![Mode::NaturalTracking],
            progress: ProgressMetric::None,
            min_progress: 0.0,
        },
        markers: MarkerLayout::default_tool(),
        events: vec![TimedEvent::new(0.5, EventKind::PullPin)],
        trajectory: Vec::new(),
    }
}

/// Front of the tool angled toward the camera throughout a rolling task.
fn fig5a_angled() -> Scenario {
    let mut s = natural_base(
        "fig5a_angled",
        "Front of the tool (most markers) kept angled toward the robot camera while rolling",
        40.0,
        1,
    );
    let mut traj = vec![kf(0.0, WORK_POINT, front_facing()), kf(2.0, WORK_POINT, front_facing())];
    traj.extend(rolling_strokes(2.0, 40.0, WORK_POINT, 0.06, 8.0, 0.3, front_facing()).into_iter().skip(1));
    if traj.last().unwrap().t < 40.0 {
        traj.push(kf(40.0, WORK_POINT, front_facing()));
    }
    s.trajectory = traj;
    s
}

/// Tip turned toward the camera: the end effector is in view but no marker is.
fn fig5b_end_effector() -> Scenario {
    let mut s = natural_base(
        "fig5b_end_effector",
        "Operator points the tool tip at the camera; the end effector is visible but none of the markers",
        16.0,
        2,
    );
    s.trajectory = vec![
        kf(0.0, WORK_POINT, front_facing()),
        kf(5.0, WORK_POINT, front_facing()),
        kf(6.0, WORK_POINT, tip_facing()),
        kf(16.0, WORK_POINT, tip_facing()),
    ];
    s
}

/// Top face (no markers) turned toward the camera.
fn fig5c_topface() -> Scenario {
    let mut s = natural_base(
        "fig5c_topface",
        "Operator turns the marker-free top face of the interface toward the camera",
        16.0,
        3,
    );
    s.trajectory = vec![
        kf(0.0, WORK_POINT, front_facing()),
        kf(6.0, WORK_POINT, front_facing()),
        kf(7.0, WORK_POINT, top_facing()),
        kf(16.0, WORK_POINT, top_facing()),
    ];
    s
}

/// Tracking is lost, the operator presents the tool when it beeps, then
/// loses it again while reorienting to continue the task.
fn fig5d_present_reorient() -> Scenario {
    let mut s = natural_base(
        "fig5d_present_reorient",
        "Operator presents the tool after the beep, then reorients it to continue and loses tracking again",
        24.0,
        4,
    );
    let present = [0.0, -0.68, 0.28];
    s.trajectory = vec![
        kf(0.0, WORK_POINT, front_facing()),
        kf(4.0, WORK_POINT, front_facing()),
        kf(5.0, WORK_POINT, top_facing()),
        kf(8.0, WORK_POINT, top_facing()),
        kf(9.0, present, front_facing()),
        kf(14.0, present, front_facing()),
        kf(15.0, WORK_POINT, top_facing()),
        kf(24.0, WORK_POINT, top_facing()),
    ];
    s
}

/// Natural-mode rolling of a proxy dough against a mold plane.
fn rolling() -> Scenario {
    let mut s = natural_base(
        "rolling",
        "Contact-rich rolling stroke against a mold surface in the natural demonstration mode",
        40.0,
        5,
    );
    let tip_height = WORK_POINT[2] - 0.12;
    s.contact.surfaces = vec![ContactSurface {
        name: "mold".into(),
        point: [0.0, 0.0, tip_height + 0.001],
        normal: [0.0, 0.0, 1.0],
        stiffness: 5000.0,
    }];
    s.goals = Goals {
        required_modes: vec![Mode::NaturalTracking],
        progress: ProgressMetric::ContactTravel,
        min_progress: 0.3,
    };
    let hover = [WORK_POINT[0], WORK_POINT[1], WORK_POINT[2] + 0.02];
    let mut traj = vec![kf(0.0, hover, front_facing()), kf(2.0, hover, front_facing()), kf(3.0, WORK_POINT, front_facing())];
    traj.extend(rolling_strokes(3.0, 38.0, WORK_POINT, 0.05, 7.0, 0.35, front_facing()).into_iter().skip(1));
    traj.push(kf(40.0, hover, front_facing()));
    s.trajectory = traj;
    s
}

/// Hand-held demonstration height above the fittings.
const DEMO_POINT: [f64; 3] = [0.0, -0.7, 0.31];

/// Press fitting that needs teleoperation (coarse seat), kinesthetic
/// guidance (second fitting by hand) and a natural demonstration.
fn press_fit() -> Scenario {
    let mut s = natural_base(
        "press_fit",
        "Press-fit a fitting by teleoperation, guide the arm kinesthetically, then demonstrate naturally",
        24.0,
        6,
    );
    let start = [0.1, -0.6, 0.30];
    let slot_top = start[2] - 0.12 - 0.01;
    s.contact.surfaces = vec![
        ContactSurface {
            name: "fitting".into(),
            point: [0.0, 0.0, slot_top],
            normal: [0.0, 0.0, 1.0],
            stiffness: 2000.0,
        },
        ContactSurface {
            name: "seat".into(),
            point: [0.0, 0.0, slot_top - 0.005],
            normal: [0.0, 0.0, 1.0],
            stiffness: 200_000.0,
        },
    ];
    s.sensors.fsr_flip_prob = 0.02;
    s.goals = Goals {
        required_modes: vec![Mode::Teleoperation, Mode::Kinesthetic, Mode::NaturalTracking],
        progress: ProgressMetric::InsertionDepth,
        min_progress: 0.005,
    };
    s.events = vec![
        TimedEvent::new(0.5, EventKind::PressDevice).with_twist([0.0, 0.0, -1.0, 0.0, 0.0, 0.0]),
        TimedEvent::new(1.5, EventKind::ReleaseDevice),
        TimedEvent::new(4.0, EventKind::Grasp).with_force(8.0),
        TimedEvent::new(8.0, EventKind::ReleaseGrasp),
        TimedEvent::new(11.0, EventKind::PullPin),
    ];
    let lifted = [start[0], start[1], start[2] + 0.05];
    let over = [start[0] - 0.08, start[1], start[2] + 0.05];
    s.trajectory = vec![
        kf(0.0, start, front_facing()),
        kf(4.0, start, front_facing()),
        kf(5.0, lifted, front_facing()),
        kf(6.5, over, front_facing()),
        kf(7.5, [over[0], over[1], start[2]], front_facing()),
        kf(11.0, [over[0], over[1], start[2]], front_facing()),
        kf(12.0, DEMO_POINT, front_facing()),
    ];
    s.trajectory
        .extend(rolling_strokes(12.0, 24.0, DEMO_POINT, 0.04, 6.0, 0.2, front_facing()).into_iter().skip(1));
    if s.trajectory.last().unwrap().t < 24.0 {
        s.trajectory.push(kf(24.0, DEMO_POINT, front_facing()));
    }
    s
}

pub const BUILTIN_NAMES: [&str; 6] = [
    "rolling",
    "press_fit",
    "fig5a_angled",
    "fig5b_end_effector",
    "fig5c_topface",
    "fig5d_present_reorient",
];

pub fn builtin_scenarios() -> Vec<Scenario> {
    vec![
        rolling(),
        press_fit(),
        fig5a_angled(),
        fig5b_end_effector(),
        fig5c_topface(),
        fig5d_present_reorient(),
    ]
}

/// A scenario for interactive sessions: the client drives the tool pose.
pub fn interactive_default() -> Scenario {
    let mut s = natural_base("interactive", "Tool pose driven by a connected client", 3600.0, 0);
    s.interactive = true;
    s.abort_on_violation = false;
    s.events.clear();
    s.initial.tool = Some(Pose::new(Vector3::from(WORK_POINT), front_facing()));
    s
}
