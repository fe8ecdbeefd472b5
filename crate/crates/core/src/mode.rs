//! Demonstration-mode state machine.
//!
//! Transition table, evaluated once per control tick on debounced inputs
//! (first matching row wins):
//!
//! | from                          | condition                                         | to              |
//! |-------------------------------|---------------------------------------------------|-----------------|
//! | any                           | tool attached and pin pulled (sensor fault)       | Idle, fault     |
//! | Idle, Teleoperation, Kinesthetic | tool detached, pin pulled                      | NaturalReady    |
//! | Idle, Teleoperation, Kinesthetic | tool detached, pin home                        | Idle            |
//! | Idle                          | device pressed                                    | Teleoperation   |
//! | Idle                          | discrepancy > threshold and axial pull > pull threshold | Kinesthetic |
//! | Teleoperation                 | contact force > force limit                       | Idle            |
//! | Kinesthetic                   | discrepancy ≤ threshold for `hold_time`           | Idle            |
//! | Natural*                      | tool attached                                     | Idle            |
//! | NaturalReady, NaturalLost     | marker seen this tick                             | NaturalTracking |
//! | NaturalReady, NaturalTracking | tracking lost and no marker this tick             | NaturalLost     |
//! | otherwise                     |                                                   | unchanged       |
//!
//! The axial pull is the part of the robot-side force along the tool axis
//! that the tool-side sensor does not see, i.e. the force the operator
//! applies in the tool direction. Tracking in `NaturalReady` is judged from
//! the moment the tool was removed, so an operator who never shows a marker
//! hears the beep after one lost-tracking timeout.

use crate::tracker::TrackingStatus;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    Teleoperation,
    Kinesthetic,
    NaturalReady,
    NaturalTracking,
    NaturalLost,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Idle,
        Mode::Teleoperation,
        Mode::Kinesthetic,
        Mode::NaturalReady,
        Mode::NaturalTracking,
        Mode::NaturalLost,
    ];

    pub fn is_natural(self) -> bool {
        matches!(self, Mode::NaturalReady | Mode::NaturalTracking | Mode::NaturalLost)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Idle => "idle",
            Mode::Teleoperation => "teleoperation",
            Mode::Kinesthetic => "kinesthetic",
            Mode::NaturalReady => "natural_ready",
            Mode::NaturalTracking => "natural_tracking",
            Mode::NaturalLost => "natural_lost",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerInputs {
    /// Normalized 6-D input device deflection, each component in [-1, 1].
    pub device_twist: [f64; 6],
    pub device_pressed: bool,
    /// Robot-side external wrench estimate, force (N) then torque (N·m).
    pub robot_wrench_est: [f64; 6],
    /// Uni-axial tool sensor, positive = pull along the tool z-axis.
    pub tool_axial_force: f64,
    /// Tool z-axis in world coordinates (unit).
    pub tool_axis: [f64; 3],
    pub tool_attached: bool,
    pub pin_pulled: bool,
    pub marker_seen_now: bool,
    pub tracking_status: TrackingStatus,
    pub time: f64,
}

impl Default for ControllerInputs {
    fn default() -> Self {
        Self {
            device_twist: [0.0; 6],
            device_pressed: false,
            robot_wrench_est: [0.0; 6],
            tool_axial_force: 0.0,
            tool_axis: [0.0, 0.0, -1.0],
            tool_attached: true,
            pin_pulled: false,
            marker_seen_now: false,
            tracking_status: TrackingStatus::Lost,
            time: 0.0,
        }
    }
}

impl ControllerInputs {
    pub fn contact_force(&self) -> Vector3<f64> {
        Vector3::new(self.robot_wrench_est[0], self.robot_wrench_est[1], self.robot_wrench_est[2])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedColor {
    White,
    Green,
    Blue,
    Red,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", content = "value", rename_all = "snake_case")]
pub enum Led {
    Off,
    Solid(LedColor),
    FlashBlue,
    ForceGradient(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signals {
    pub led: Led,
    /// Lost-tracking alarm.
    pub beep: bool,
    /// Teleoperation force approaching the limit.
    pub force_warning: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeleopConfig {
    /// m/s per unit input
    pub lin_gain: f64,
    /// rad/s per unit input
    pub ang_gain: f64,
    /// N
    pub force_limit: f64,
    pub warn_fraction: f64,
    /// m/(s·N): yield velocity per newton of contact force.
    pub admittance_compliance: f64,
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        Self {
            lin_gain: 0.05,
            ang_gain: 0.3,
            force_limit: 15.0,
            warn_fraction: 0.8,
            admittance_compliance: 0.001,
            max_linear_speed: 0.1,
            max_angular_speed: 0.6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeConfig {
    pub teleop: TeleopConfig,
    /// N; minimum operator pull along the tool axis for kinesthetic entry.
    pub pull_threshold: f64,
    /// N
    pub discrepancy_threshold: f64,
    /// s the discrepancy must stay low before leaving kinesthetic mode.
    pub kinesthetic_hold_time: f64,
    /// Consecutive identical samples needed to accept a switch change.
    pub debounce_ticks: u32,
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self {
            teleop: TeleopConfig::default(),
            pull_threshold: 3.0,
            discrepancy_threshold: 2.5,
            kinesthetic_hold_time: 1.0,
            debounce_ticks: 3,
        }
    }
}

impl ModeConfig {
    pub fn validate(&self) -> Result<(), String> {
        let t = &self.teleop;
        if !(t.force_limit > 0.0) {
            return Err("teleop.force_limit must be positive".into());
        }
        if !(t.warn_fraction > 0.0 && t.warn_fraction < 1.0) {
            return Err("teleop.warn_fraction must lie in (0, 1)".into());
        }
        let non_negative = [
            t.lin_gain,
            t.ang_gain,
            t.admittance_compliance,
            t.max_linear_speed,
            t.max_angular_speed,
            self.pull_threshold,
            self.discrepancy_threshold,
            self.kinesthetic_hold_time,
        ];
        if non_negative.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("gains, thresholds and speed caps must be finite and non-negative".into());
        }
        if self.debounce_ticks == 0 {
            return Err("debounce_ticks must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "twist", rename_all = "snake_case")]
pub enum RobotCommand {
    Hold,
    /// Linear (m/s) then angular (rad/s) velocity of the tool mount.
    Twist([f64; 6]),
    /// Robot follows the operator's hand.
    FreeDrive,
    /// Camera motion comes from the viewpoint optimizer.
    TrackCamera,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerFault {
    AttachedWithPinPulled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub mode: Mode,
    /// Start of the current low-discrepancy stretch in kinesthetic mode.
    pub quiet_since: Option<f64>,
}

impl ControllerState {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            quiet_since: None,
        }
    }
}

impl Default for ControllerState {
    fn default() -> Self {
        Self::new(Mode::Idle)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    pub state: ControllerState,
    pub signals: Signals,
    pub command: RobotCommand,
    pub fault: Option<ControllerFault>,
}

/// `|f·axis − tool_axial|` where `f` is the robot-side force estimate.
pub fn force_discrepancy(robot_wrench_est: &[f64; 6], tool_axial_force: f64, tool_axis_in_world: &Vector3<f64>) -> f64 {
    axial_pull(robot_wrench_est, tool_axial_force, tool_axis_in_world).abs()
}

/// Signed part of the robot-side axial force not seen by the tool sensor.
fn axial_pull(robot_wrench_est: &[f64; 6], tool_axial_force: f64, tool_axis_in_world: &Vector3<f64>) -> f64 {
    let f = Vector3::new(robot_wrench_est[0], robot_wrench_est[1], robot_wrench_est[2]);
    f.dot(tool_axis_in_world) - tool_axial_force
}

pub fn force_feedback_level(contact_force: f64, config: &TeleopConfig) -> f64 {
    (contact_force.abs() / config.force_limit).clamp(0.0, 1.0)
}

fn cap(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Admittance teleoperation twist. The scaled device input loses its
/// component into the contact in proportion to `|f| / force_limit` (fully
/// at the limit), and the contact force adds a compliant yield term.
pub fn admittance_command(inputs: &ControllerInputs, config: &TeleopConfig) -> [f64; 6] {
    if !inputs.device_pressed {
        return [0.0; 6];
    }
    let t = inputs.device_twist;
    let mut v = Vector3::new(t[0], t[1], t[2]) * config.lin_gain;
    let w = Vector3::new(t[3], t[4], t[5]) * config.ang_gain;

    let f = inputs.contact_force();
    let magnitude = f.norm();
    if magnitude > 0.0 && magnitude.is_finite() {
        let into_contact = -f / magnitude;
        let approach = v.dot(&into_contact);
        if approach > 0.0 {
            v -= into_contact * approach * (magnitude / config.force_limit).min(1.0);
        }
        v += f * config.admittance_compliance;
    }
    let v = cap(v, config.max_linear_speed);
    let w = cap(w, config.max_angular_speed);
    [v.x, v.y, v.z, w.x, w.y, w.z]
}

pub fn signals_for(mode: Mode, inputs: &ControllerInputs, config: &ModeConfig, fault: bool) -> Signals {
    let quiet = |led| Signals {
        led,
        beep: false,
        force_warning: false,
    };
    if fault {
        return quiet(Led::Off);
    }
    match mode {
        Mode::Idle => quiet(Led::Solid(LedColor::White)),
        Mode::Teleoperation => {
            let level = force_feedback_level(inputs.contact_force().norm(), &config.teleop);
            Signals {
                led: Led::ForceGradient(level),
                beep: false,
                force_warning: level >= config.teleop.warn_fraction,
            }
        }
        Mode::Kinesthetic => quiet(Led::Solid(LedColor::Green)),
        Mode::NaturalReady => quiet(Led::FlashBlue),
        Mode::NaturalTracking => quiet(Led::Solid(LedColor::Blue)),
        Mode::NaturalLost => Signals {
            led: Led::Solid(LedColor::Red),
            beep: true,
            force_warning: false,
        },
    }
}

/// One control tick. Pure in `(state, inputs, config)`.
pub fn step(state: &ControllerState, inputs: &ControllerInputs, config: &ModeConfig) -> StepOutput {
    let attached = inputs.tool_attached;
    let pin = inputs.pin_pulled;

    if attached && pin {
        let next = ControllerState::new(Mode::Idle);
        return StepOutput {
            state: next,
            signals: signals_for(Mode::Idle, inputs, config, true),
            command: RobotCommand::Hold,
            fault: Some(ControllerFault::AttachedWithPinPulled),
        };
    }

    let axis = Vector3::from(inputs.tool_axis);
    let pull = axial_pull(&inputs.robot_wrench_est, inputs.tool_axial_force, &axis);
    let discrepancy = pull.abs();
    let contact = inputs.contact_force().norm();
    let seen = inputs.marker_seen_now;
    let lost = inputs.tracking_status == TrackingStatus::Lost;

    let mut quiet_since = None;
    let mode = match state.mode {
        Mode::Idle | Mode::Teleoperation | Mode::Kinesthetic if !attached => {
            if pin {
                Mode::NaturalReady
            } else {
                Mode::Idle
            }
        }
        Mode::Idle => {
            if inputs.device_pressed {
                Mode::Teleoperation
            } else if discrepancy > config.discrepancy_threshold && pull > config.pull_threshold {
                Mode::Kinesthetic
            } else {
                Mode::Idle
            }
        }
        Mode::Teleoperation => {
            if contact > config.teleop.force_limit {
                Mode::Idle
            } else {
                Mode::Teleoperation
            }
        }
        Mode::Kinesthetic => {
            if discrepancy > config.discrepancy_threshold {
                Mode::Kinesthetic
            } else {
                let since = state.quiet_since.unwrap_or(inputs.time);
                if inputs.time - since >= config.kinesthetic_hold_time - 1e-9 {
                    Mode::Idle
                } else {
                    quiet_since = Some(since);
                    Mode::Kinesthetic
                }
            }
        }
        Mode::NaturalReady | Mode::NaturalTracking | Mode::NaturalLost if attached => Mode::Idle,
        Mode::NaturalReady if seen => Mode::NaturalTracking,
        Mode::NaturalReady if lost => Mode::NaturalLost,
        Mode::NaturalReady => Mode::NaturalReady,
        Mode::NaturalTracking if lost && !seen => Mode::NaturalLost,
        Mode::NaturalTracking => Mode::NaturalTracking,
        Mode::NaturalLost if seen => Mode::NaturalTracking,
        Mode::NaturalLost => Mode::NaturalLost,
    };

    let command = match mode {
        Mode::Idle => RobotCommand::Hold,
        Mode::Teleoperation => RobotCommand::Twist(admittance_command(inputs, &config.teleop)),
        Mode::Kinesthetic => RobotCommand::FreeDrive,
        Mode::NaturalReady | Mode::NaturalTracking | Mode::NaturalLost => RobotCommand::TrackCamera,
    };

    StepOutput {
        state: ControllerState { mode, quiet_since },
        signals: signals_for(mode, inputs, config, false),
        command,
        fault: None,
    }
}

/// Accepts a new switch value only after it has been sampled
/// `ticks` times in a row. The first sample is taken as-is.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Debounced {
    stable: Option<bool>,
    candidate: bool,
    count: u32,
}

impl Debounced {
    pub fn new() -> Self {
        Self {
            stable: None,
            candidate: false,
            count: 0,
        }
    }

    pub fn sample(&mut self, raw: bool, ticks: u32) -> bool {
        let Some(stable) = self.stable else {
            self.stable = Some(raw);
            return raw;
        };
        if raw == stable {
            self.count = 0;
            return stable;
        }
        if raw == self.candidate && self.count > 0 {
            self.count += 1;
        } else {
            self.candidate = raw;
            self.count = 1;
        }
        if self.count >= ticks {
            self.stable = Some(raw);
            self.count = 0;
            raw
        } else {
            stable
        }
    }
}

impl Default for Debounced {
    fn default() -> Self {
        Self::new()
    }
}

/// Stateful wrapper: debounces the physical switches (device button,
/// contact sensor, pin) and then applies [`step`]. After a force-limit exit
/// from teleoperation the device must be released before a press counts
/// again, so a held button cannot re-enter teleoperation straight away.
#[derive(Clone, Debug)]
pub struct ModeController {
    config: ModeConfig,
    state: ControllerState,
    pressed: Debounced,
    attached: Debounced,
    pin: Debounced,
    press_latched: bool,
}

impl ModeController {
    pub fn new(config: ModeConfig) -> Self {
        Self {
            config,
            state: ControllerState::default(),
            pressed: Debounced::new(),
            attached: Debounced::new(),
            pin: Debounced::new(),
            press_latched: false,
        }
    }

    pub fn config(&self) -> &ModeConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut ModeConfig {
        &mut self.config
    }

    pub fn mode(&self) -> Mode {
        self.state.mode
    }

    /// Debounced view of `raw` as seen by the state machine.
    pub fn debounce(&mut self, raw: &ControllerInputs) -> ControllerInputs {
        let n = self.config.debounce_ticks;
        let mut inputs = *raw;
        inputs.device_pressed = self.pressed.sample(raw.device_pressed, n);
        inputs.tool_attached = self.attached.sample(raw.tool_attached, n);
        inputs.pin_pulled = self.pin.sample(raw.pin_pulled, n);
        inputs
    }

    pub fn tick(&mut self, raw: &ControllerInputs) -> (ControllerInputs, StepOutput) {
        let mut inputs = self.debounce(raw);
        if self.press_latched {
            if inputs.device_pressed {
                inputs.device_pressed = false;
            } else {
                self.press_latched = false;
            }
        }
        let out = step(&self.state, &inputs, &self.config);
        if self.state.mode == Mode::Teleoperation && out.state.mode == Mode::Idle && out.fault.is_none() {
            self.press_latched = inputs.tool_attached;
        }
        self.state = out.state;
        (inputs, out)
    }
}
