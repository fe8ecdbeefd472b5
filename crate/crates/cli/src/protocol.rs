//! JSON messages exchanged with interactive clients over the websocket.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use vdi_core::mode::{Led, Mode};
use vdi_core::scenario::Scenario;
use vdi_core::se3::{Pose, Rotation};
use vdi_core::session::{ClientInput, Session};
use vdi_core::tracker::TrackingStatus;
use vdi_core::viewpoint::{CameraDecision, ObjectiveTerms};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    SetToolPose {
        position: [f64; 3],
        /// `[w, x, y, z]`, normalized on receipt.
        quaternion: [f64; 4],
    },
    /// Environment force pushing back along the tool axis.
    SetForce { newtons: f64 },
    PressDevice {
        pressed: bool,
        #[serde(default)]
        twist: [f64; 6],
    },
    PullPin {},
    Reattach {},
    Grasp { newtons: f64 },
    /// JSON-pointer path into the scenario, e.g. `/optimizer/w1`.
    SetConfig { path: String, value: Value },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub seq: u64,
    pub time: f64,
    pub mode: Mode,
    pub led: Led,
    pub beep: bool,
    pub force_warning: bool,
    pub tracking: TrackingStatus,
    pub tool_true: Pose,
    pub tool_estimate: Option<Pose>,
    pub camera_decision: CameraDecision,
    pub camera_pose: Pose,
    pub objectives: Option<ObjectiveTerms>,
    pub visible_markers: Vec<u32>,
    pub contact_force: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ServerMessage {
    State(StateFrame),
    Error { message: String },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        Self::Error {
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

pub fn parse_client(text: &str) -> Result<ClientMessage, String> {
    serde_json::from_str(text).map_err(|e| format!("bad message: {e}"))
}

/// Applies `value` at `path` to a copy of `scenario` and re-validates it.
pub fn patch_scenario(scenario: &Scenario, path: &str, value: Value) -> Result<Scenario, String> {
    let mut doc = serde_json::to_value(scenario).map_err(|e| e.to_string())?;
    let slot = doc
        .pointer_mut(path)
        .ok_or_else(|| format!("unknown config path `{path}`"))?;
    *slot = value;
    let patched: Scenario = serde_json::from_value(doc).map_err(|e| format!("invalid value for `{path}`: {e}"))?;
    patched.validate().map_err(|e| e.to_string())?;
    Ok(patched)
}

/// Applies one client message to the session.
pub fn apply(session: &mut Session, msg: ClientMessage) -> Result<(), String> {
    let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());
    let input = match msg {
        ClientMessage::SetToolPose { position, quaternion } => {
            if !finite(&position) {
                return Err("position must be finite".into());
            }
            let rotation = Rotation::from_wxyz(quaternion).ok_or("quaternion must be finite and non-zero")?;
            ClientInput::SetToolPose(Pose::new(position.into(), rotation))
        }
        ClientMessage::SetForce { newtons } if newtons.is_finite() => ClientInput::SetForce(newtons),
        ClientMessage::Grasp { newtons } if newtons.is_finite() => ClientInput::Grasp(newtons),
        ClientMessage::SetForce { .. } | ClientMessage::Grasp { .. } => return Err("force must be finite".into()),
        ClientMessage::PressDevice { pressed, twist } => {
            if !finite(&twist) || twist.iter().any(|c| c.abs() > 1.0) {
                return Err("twist components must lie in [-1, 1]".into());
            }
            ClientInput::PressDevice { pressed, twist }
        }
        ClientMessage::PullPin {} => ClientInput::PullPin,
        ClientMessage::Reattach {} => ClientInput::Reattach,
        ClientMessage::SetConfig { path, value } => {
            let patched = patch_scenario(session.scenario(), &path, value)?;
            return session.reconfigure(&patched).map_err(|e| e.to_string());
        }
    };
    session.apply(input);
    Ok(())
}

pub fn frame(session: &Session, seq: u64) -> StateFrame {
    let world = session.world();
    let record = session.last_record();
    let signals = record.map(|r| r.signals);
    let f = &world.contact_wrench;
    StateFrame {
        seq,
        time: world.time,
        mode: session.mode(),
        led: signals.map_or(Led::Solid(vdi_core::mode::LedColor::White), |s| s.led),
        beep: signals.is_some_and(|s| s.beep),
        force_warning: signals.is_some_and(|s| s.force_warning),
        tracking: record.map_or(TrackingStatus::Lost, |r| r.tracking),
        tool_true: world.tool_true,
        tool_estimate: record.and_then(|r| r.estimate),
        camera_decision: world.camera,
        camera_pose: world.camera_true,
        objectives: record.and_then(|r| r.objectives),
        visible_markers: record.map(|r| r.visible.clone()).unwrap_or_default(),
        contact_force: record.map_or((f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt(), |r| {
            let w = r.robot_wrench_est;
            (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt()
        }),
    }
}
