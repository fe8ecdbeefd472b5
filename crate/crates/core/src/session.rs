//! Closed loop: world → markers → tracker → mode controller → optimizer → world.

use crate::mode::{ControllerFault, ControllerInputs, Mode, ModeController, Signals};
use crate::scenario::{EventKind, Scenario, ScenarioError, Trajectory};
use crate::se3::Pose;
use crate::sim::{self, Commands, WorldState};
use crate::tracker::{Tracker, TrackingStatus};
use crate::viewpoint::{evaluate, solve, CameraDecision, ObjectiveTerms, SolveStatus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Position tolerance for the camera bound and rate checks.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// One logged control tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    pub mode: Mode,
    pub attached: bool,
    pub tool_true: Pose,
    /// Latest published estimate while in a natural mode.
    pub estimate: Option<Pose>,
    /// Set on ticks where the tracker published a fresh estimate.
    pub published: bool,
    pub tracking: TrackingStatus,
    pub camera: CameraDecision,
    pub objectives: Option<ObjectiveTerms>,
    /// Depth of the true tool along the optical axis.
    pub depth_true: f64,
    pub signals: Signals,
    pub robot_wrench_est: [f64; 6],
    pub tool_axial_force: f64,
    pub visible: Vec<u32>,
    pub fault: Option<ControllerFault>,
    pub solver: Option<SolveStatus>,
    pub progress: f64,
}

#[derive(Clone, Debug, PartialEq, Error, Serialize, Deserialize)]
#[error("invariant violated at tick {tick} (t = {time:.3} s): {reason}")]
pub struct InvariantViolation {
    pub tick: u64,
    pub time: f64,
    pub reason: String,
}

/// Inputs an interactive client may inject between ticks.
#[derive(Clone, Debug, PartialEq)]
pub enum ClientInput {
    SetToolPose(Pose),
    /// Environment force pushing back along the tool axis, N.
    SetForce(f64),
    PressDevice { pressed: bool, twist: [f64; 6] },
    PullPin,
    Reattach,
    /// Operator pull on the attached tool along its axis, N.
    Grasp(f64),
}

/// Checks the camera decision against the box and against the rate limits
/// relative to the previous decision.
pub fn camera_violation(
    config: &crate::viewpoint::OptimizerConfig,
    prev: &CameraDecision,
    next: &CameraDecision,
    dt: f64,
) -> Option<String> {
    if !next.is_finite() {
        return Some("camera decision is not finite".into());
    }
    if !config.contains(next, CONSTRAINT_TOL) {
        return Some(format!("camera decision {next:?} outside bounds"));
    }
    let lin = (next.position - prev.position).norm();
    if lin > config.v_lin_max * dt + CONSTRAINT_TOL {
        return Some(format!("camera moved {lin:.6} m in one tick"));
    }
    let ang = ((next.theta_x - prev.theta_x).powi(2) + (next.theta_y - prev.theta_y).powi(2)).sqrt();
    if ang > config.v_ang_max * dt + CONSTRAINT_TOL {
        return Some(format!("camera rotated {ang:.6} rad in one tick"));
    }
    None
}

pub struct Session {
    scenario: Scenario,
    trajectory: Option<Trajectory>,
    world: WorldState,
    tracker: Tracker,
    controller: ModeController,
    rng: ChaCha8Rng,
    commands: Commands,
    camera_target: Option<CameraDecision>,
    last: Option<TickRecord>,
    unreported: Option<InvariantViolation>,
    finished: bool,
}

impl Session {
    pub fn new(scenario: Scenario, seed: u64) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let trajectory = if scenario.trajectory.is_empty() {
            None
        } else {
            Some(scenario.trajectory()?)
        };
        let world = WorldState::initial(&scenario)?;
        let tracker = Tracker::new(scenario.tracker.clone(), scenario.markers.clone());
        let controller = ModeController::new(scenario.mode.clone());
        Ok(Self {
            scenario,
            trajectory,
            world,
            tracker,
            controller,
            rng: ChaCha8Rng::seed_from_u64(seed),
            commands: Commands::default(),
            camera_target: None,
            last: None,
            unreported: None,
            finished: false,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Swaps in live-tunable settings from `updated`: optimizer, mode,
    /// visibility, contact and sensor tables. Anything else must match the
    /// running scenario.
    pub fn reconfigure(&mut self, updated: &Scenario) -> Result<(), ScenarioError> {
        updated.validate()?;
        let mut probe = updated.clone();
        probe.optimizer = self.scenario.optimizer.clone();
        probe.mode = self.scenario.mode.clone();
        probe.visibility = self.scenario.visibility.clone();
        probe.contact = self.scenario.contact.clone();
        probe.sensors = self.scenario.sensors.clone();
        if probe != self.scenario {
            return Err(ScenarioError::Invalid {
                field: "config".into(),
                message: "only optimizer, mode, visibility, contact and sensors can change while running".into(),
            });
        }
        self.scenario = updated.clone();
        *self.controller.config_mut() = updated.mode.clone();
        if let Some(target) = self.camera_target {
            self.camera_target = Some(updated.optimizer.project(&target));
        }
        Ok(())
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn mode(&self) -> Mode {
        self.controller.mode()
    }

    pub fn last_record(&self) -> Option<&TickRecord> {
        self.last.as_ref()
    }

    /// Most recent violation tolerated because `abort_on_violation` is off.
    pub fn take_violation(&mut self) -> Option<InvariantViolation> {
        self.unreported.take()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn apply(&mut self, input: ClientInput) {
        let w = &mut self.world;
        match input {
            ClientInput::SetToolPose(p) => w.hand_pose = p,
            ClientInput::SetForce(f) => w.apply_event(EventKind::ExternalForce, [0.0; 6], f),
            ClientInput::PressDevice { pressed: true, twist } => w.apply_event(EventKind::PressDevice, twist, 0.0),
            ClientInput::PressDevice { pressed: false, .. } => w.apply_event(EventKind::ReleaseDevice, [0.0; 6], 0.0),
            ClientInput::PullPin => w.apply_event(EventKind::PullPin, [0.0; 6], 0.0),
            ClientInput::Reattach => w.apply_event(EventKind::Reattach, [0.0; 6], 0.0),
            ClientInput::Grasp(f) => w.apply_event(EventKind::Grasp, [0.0; 6], f),
        }
        if !w.attached {
            w.tool_true = w.hand_pose;
        }
    }

    /// Advances one tick. `Ok(None)` once the scenario is over.
    pub fn tick(&mut self) -> Result<Option<TickRecord>, InvariantViolation> {
        if self.finished {
            return Ok(None);
        }
        if !self.scenario.interactive && self.world.tick_index >= self.scenario.total_ticks() {
            self.finished = true;
            return Ok(None);
        }
        let Some((world, readings)) = sim::step(
            &self.world,
            &self.commands,
            &self.scenario,
            self.trajectory.as_ref(),
            &mut self.rng,
        ) else {
            self.finished = true;
            return Ok(None);
        };
        let prev_camera = self.world.camera;
        self.world = world;
        let t = self.world.time;
        let sc = &self.scenario;

        let observations = sim::visible_markers(
            &self.world.camera_true,
            &self.world.tool_true,
            &sc.markers,
            &sc.visibility,
            t,
            &mut self.rng,
        );

        let was_natural = self.controller.mode().is_natural();
        let (fused, published) = if was_natural {
            let report = self.tracker.ingest(&observations, &self.world.camera_true, t);
            (report.fused, report.published.is_some())
        } else {
            (0, false)
        };
        let tracking = if was_natural {
            self.tracker.tracking_status(t, sc.tracker.lost_timeout)
        } else {
            TrackingStatus::Lost
        };

        let inputs = ControllerInputs {
            device_twist: readings.device_twist,
            device_pressed: readings.device_pressed,
            robot_wrench_est: readings.robot_wrench_est,
            tool_axial_force: readings.tool_axial_force,
            tool_axis: readings.tool_axis,
            tool_attached: readings.fsr_attached,
            pin_pulled: readings.pin_pulled,
            marker_seen_now: fused > 0,
            tracking_status: tracking,
            time: t,
        };
        let (_, out) = self.controller.tick(&inputs);
        let mode = out.state.mode;
        if mode == Mode::NaturalReady && !was_natural {
            self.tracker.start_session(t);
        }

        let mut solver = None;
        if mode == Mode::NaturalTracking {
            if published {
                if let Some(est) = self.tracker.published() {
                    let outcome = solve(&sc.optimizer, &self.world.camera, &est.tool_in_world);
                    solver = Some(outcome.status);
                    self.camera_target = (!outcome.is_error()).then_some(outcome.decision);
                }
            }
        } else {
            self.camera_target = None;
        }
        self.commands = Commands {
            robot: out.command,
            camera_target: self.camera_target,
        };

        let estimate = if mode.is_natural() {
            self.tracker.published().map(|e| e.tool_in_world)
        } else {
            None
        };
        let objectives = estimate.and_then(|p| evaluate(&sc.optimizer, &self.world.camera, &p).ok());
        let cam = &self.world.camera_true;
        let depth_true = cam
            .rotation
            .inverse()
            .apply(&(self.world.tool_true.position - cam.position))
            .z;

        let record = TickRecord {
            tick: self.world.tick_index,
            time: t,
            mode,
            attached: self.world.attached,
            tool_true: self.world.tool_true,
            estimate,
            published: published && mode.is_natural(),
            tracking,
            camera: self.world.camera,
            objectives,
            depth_true,
            signals: out.signals,
            robot_wrench_est: readings.robot_wrench_est,
            tool_axial_force: readings.tool_axial_force,
            visible: observations.iter().map(|o| o.marker_id).collect(),
            fault: out.fault,
            solver,
            progress: self.world.progress,
        };
        self.last = Some(record.clone());

        if let Some(reason) = self.check_invariants(&prev_camera) {
            let violation = InvariantViolation {
                tick: record.tick,
                time: t,
                reason,
            };
            if self.scenario.abort_on_violation {
                self.finished = true;
                return Err(violation);
            }
            self.unreported = Some(violation);
        }
        Ok(Some(record))
    }

    fn check_invariants(&self, prev_camera: &CameraDecision) -> Option<String> {
        if let Some(r) = camera_violation(&self.scenario.optimizer, prev_camera, &self.world.camera, self.scenario.tick) {
            return Some(r);
        }
        if let Some(est) = self.tracker.estimate() {
            let p = &est.covariance;
            if !est.tool_in_world.is_finite() || p.iter().any(|v| !v.is_finite()) {
                return Some("tool estimate is not finite".into());
            }
            if (p - p.transpose()).amax() > 1e-9 * p.amax().max(1.0) {
                return Some("estimate covariance is not symmetric".into());
            }
            let min_eig = p.symmetric_eigenvalues().min();
            if min_eig < -1e-12 * p.trace().abs().max(1.0) {
                return Some(format!("estimate covariance has eigenvalue {min_eig:e}"));
            }
        }
        None
    }
}
