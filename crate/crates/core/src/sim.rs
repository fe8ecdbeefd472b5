//! Kinematic world simulator: tool motion, contact, sensors and marker
//! visibility. Nothing here is dynamic; the robot moves exactly as commanded.

use crate::mode::RobotCommand;
use crate::scenario::{ContactConfig, EventKind, ProgressMetric, Scenario, ScenarioError, Trajectory, VisibilityConfig};
use crate::se3::{compose, invert, Pose, Rotation};
use crate::tracker::{MarkerLayout, MarkerObservation};
use crate::viewpoint::{limit_velocity, CameraDecision};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// What the controllers ask of the world for the next tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Commands {
    pub robot: RobotCommand,
    /// Desired camera decision; the world moves toward it under the rate limits.
    pub camera_target: Option<CameraDecision>,
}

impl Default for Commands {
    fn default() -> Self {
        Self {
            robot: RobotCommand::Hold,
            camera_target: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick_index: u64,
    pub time: f64,
    pub tool_true: Pose,
    /// Where the operator's hand is (scripted or set interactively).
    pub hand_pose: Pose,
    pub camera: CameraDecision,
    pub camera_true: Pose,
    pub attached: bool,
    pub pin_pulled: bool,
    pub device_pressed: bool,
    pub device_twist: [f64; 6],
    /// Operator pull on the attached tool along its axis, N.
    pub hand_pull: f64,
    /// Extra environment force pushing back along the tool axis, N.
    pub external_force: f64,
    /// Environment wrench on the tool (force, torque about the tool origin).
    pub contact_wrench: [f64; 6],
    pub progress: f64,
}

/// Raw sensor readings after a step, before debouncing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorReadings {
    pub robot_wrench_est: [f64; 6],
    pub tool_axial_force: f64,
    pub tool_axis: [f64; 3],
    /// Contact (FSR) switch between tool and mount.
    pub fsr_attached: bool,
    pub pin_pulled: bool,
    pub device_pressed: bool,
    pub device_twist: [f64; 6],
}

pub fn tool_tip(tool: &Pose, contact: &ContactConfig) -> Vector3<f64> {
    tool.transform_point(&Vector3::from(contact.tip_offset))
}

/// Penetration of the tool tip below `surface` (positive when inside).
fn penetration(tip: &Vector3<f64>, point: [f64; 3], normal: [f64; 3]) -> f64 {
    let n = Vector3::from(normal).normalize();
    (Vector3::from(point) - tip).dot(&n)
}

/// Environment wrench on the tool from all contact surfaces, force then
/// torque about the tool origin.
pub fn contact_force(tool: &Pose, contact: &ContactConfig) -> [f64; 6] {
    let tip = tool_tip(tool, contact);
    let mut f = Vector3::zeros();
    for s in &contact.surfaces {
        let depth = penetration(&tip, s.point, s.normal);
        if depth > 0.0 {
            f += Vector3::from(s.normal).normalize() * (s.stiffness * depth);
        }
    }
    let tau = (tip - tool.position).cross(&f);
    [f.x, f.y, f.z, tau.x, tau.y, tau.z]
}

/// One marker's view geometry: angle off the optical axis, range, and
/// incidence (marker normal vs. marker→camera ray).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkerGeometry {
    pub off_axis: f64,
    pub range: f64,
    pub incidence: f64,
}

pub fn marker_geometry(camera: &Pose, marker_in_world: &Pose) -> MarkerGeometry {
    let ray = marker_in_world.position - camera.position;
    let range = ray.norm();
    if range == 0.0 {
        return MarkerGeometry {
            off_axis: f64::INFINITY,
            range,
            incidence: f64::INFINITY,
        };
    }
    let dir = ray / range;
    let off_axis = dir.dot(&camera.rotation.z_axis()).clamp(-1.0, 1.0).acos();
    let normal = marker_in_world.rotation.z_axis();
    let incidence = (-dir).dot(&normal).clamp(-1.0, 1.0).acos();
    MarkerGeometry {
        off_axis,
        range,
        incidence,
    }
}

impl MarkerGeometry {
    pub fn in_view(&self, vis: &VisibilityConfig) -> bool {
        self.off_axis <= vis.fov_half_angle
            && self.range >= vis.min_range
            && self.range <= vis.max_range
            && self.incidence <= vis.max_incidence
    }
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    let mut draw = || -> f64 { StandardNormal.sample(rng) };
    Vector3::new(draw(), draw(), draw()) * sigma
}

/// Simulated detections. Random draws are made for every marker in layout
/// order whether or not it is in view, so the random stream does not depend
/// on geometry.
pub fn visible_markers<R: Rng + ?Sized>(
    camera: &Pose,
    tool: &Pose,
    layout: &MarkerLayout,
    vis: &VisibilityConfig,
    timestamp: f64,
    rng: &mut R,
) -> Vec<MarkerObservation> {
    let camera_inv = invert(camera);
    let mut out = Vec::new();
    for entry in layout.entries() {
        let dropped = rng.random::<f64>() < vis.dropout_prob;
        let dp = gaussian3(rng, vis.noise_pos);
        let dr = gaussian3(rng, vis.noise_rot);
        let marker_world = compose(tool, &entry.marker_in_tool);
        if dropped || !marker_geometry(camera, &marker_world).in_view(vis) {
            continue;
        }
        let clean = compose(&camera_inv, &marker_world);
        let noisy = Pose::new(clean.position + dp, Rotation::from_rotation_vector(dr) * clean.rotation);
        out.push(MarkerObservation {
            marker_id: entry.id,
            marker_in_camera: noisy,
            timestamp,
        });
    }
    out
}

/// Twist integration in the world frame.
fn integrate_twist(pose: &Pose, twist: &[f64; 6], dt: f64) -> Pose {
    let v = Vector3::new(twist[0], twist[1], twist[2]);
    let w = Vector3::new(twist[3], twist[4], twist[5]);
    Pose::new(pose.position + v * dt, Rotation::from_rotation_vector(w * dt) * pose.rotation)
}

/// Moves `tool` by the hand's motion from `from` to `to`.
fn follow_delta(tool: &Pose, from: &Pose, to: &Pose) -> Pose {
    let dr = to.rotation * from.rotation.inverse();
    Pose::new(tool.position + (to.position - from.position), dr * tool.rotation)
}

impl WorldState {
    pub fn initial(scenario: &Scenario) -> Result<Self, ScenarioError> {
        let start = if scenario.interactive {
            match (&scenario.initial.tool, scenario.trajectory.is_empty()) {
                (Some(p), _) => *p,
                (None, false) => scenario.trajectory()?.sample(0.0).unwrap_or_default(),
                (None, true) => Pose::identity(),
            }
        } else {
            scenario
                .trajectory()?
                .sample(0.0)
                .ok_or_else(|| ScenarioError::Invalid {
                    field: "trajectory".into(),
                    message: "undefined at t = 0".into(),
                })?
        };
        let camera = scenario
            .initial
            .camera
            .unwrap_or_else(|| scenario.optimizer.neutral_decision());
        let mut world = Self {
            tick_index: 0,
            time: 0.0,
            tool_true: start,
            hand_pose: start,
            camera,
            camera_true: camera.pose(&scenario.optimizer),
            attached: scenario.initial.attached,
            pin_pulled: scenario.initial.pin_pulled,
            device_pressed: false,
            device_twist: [0.0; 6],
            hand_pull: 0.0,
            external_force: 0.0,
            contact_wrench: [0.0; 6],
            progress: 0.0,
        };
        for e in scenario.events.iter().filter(|e| e.t <= 0.0) {
            world.apply_event(e.kind, e.twist, e.force);
        }
        world.contact_wrench = contact_force(&world.tool_true, &scenario.contact);
        Ok(world)
    }

    pub fn apply_event(&mut self, kind: EventKind, twist: [f64; 6], force: f64) {
        match kind {
            EventKind::PullPin => {
                self.pin_pulled = true;
                self.attached = false;
                self.hand_pull = 0.0;
            }
            EventKind::Reattach => {
                self.pin_pulled = false;
                self.attached = true;
            }
            EventKind::PressDevice => {
                self.device_pressed = true;
                self.device_twist = twist;
            }
            EventKind::ReleaseDevice => {
                self.device_pressed = false;
                self.device_twist = [0.0; 6];
            }
            EventKind::Grasp => self.hand_pull = force,
            EventKind::ReleaseGrasp => self.hand_pull = 0.0,
            EventKind::ExternalForce => self.external_force = force,
        }
    }

    pub fn tool_axis(&self) -> Vector3<f64> {
        self.tool_true.rotation.z_axis()
    }

    /// Total environment force on the tool, including the external push.
    pub fn environment_force(&self) -> Vector3<f64> {
        let w = &self.contact_wrench;
        Vector3::new(w[0], w[1], w[2]) - self.tool_axis() * self.external_force
    }

    /// Readings the controllers would see for the current state. `fsr_flip`
    /// inverts the contact switch for this reading.
    pub fn sensors(&self, fsr_flip: bool) -> SensorReadings {
        let axis = self.tool_axis();
        let env = self.environment_force();
        let robot = if self.attached {
            env + axis * self.hand_pull
        } else {
            Vector3::zeros()
        };
        let tau = if self.attached {
            Vector3::new(self.contact_wrench[3], self.contact_wrench[4], self.contact_wrench[5])
        } else {
            Vector3::zeros()
        };
        SensorReadings {
            robot_wrench_est: [robot.x, robot.y, robot.z, tau.x, tau.y, tau.z],
            tool_axial_force: env.dot(&axis),
            tool_axis: [axis.x, axis.y, axis.z],
            fsr_attached: self.attached != fsr_flip,
            pin_pulled: self.pin_pulled,
            device_pressed: self.device_pressed,
            device_twist: self.device_twist,
        }
    }
}

fn update_progress(world: &mut WorldState, prev_tip: &Vector3<f64>, scenario: &Scenario) {
    let contact = &scenario.contact;
    let tip = tool_tip(&world.tool_true, contact);
    match scenario.goals.progress {
        ProgressMetric::None => {}
        ProgressMetric::ContactTravel => {
            let touching = contact
                .surfaces
                .iter()
                .any(|s| penetration(&tip, s.point, s.normal) > 0.0);
            if touching {
                world.progress += (tip - prev_tip).norm();
            }
        }
        ProgressMetric::InsertionDepth => {
            if let Some(s) = contact.surfaces.first() {
                world.progress = world.progress.max(penetration(&tip, s.point, s.normal));
            }
        }
    }
}

/// Advances the world by one tick. Returns `None` once a scripted
/// trajectory no longer covers the new time. The random draw for sensor
/// noise is made every tick.
pub fn step<R: Rng + ?Sized>(
    world: &WorldState,
    commands: &Commands,
    scenario: &Scenario,
    trajectory: Option<&Trajectory>,
    rng: &mut R,
) -> Option<(WorldState, SensorReadings)> {
    let dt = scenario.tick;
    let mut next = world.clone();
    next.tick_index = world.tick_index + 1;
    next.time = next.tick_index as f64 * dt;

    let now = next.time;
    for e in scenario
        .events
        .iter()
        .filter(|e| e.t > world.time + 1e-9 && e.t <= now + 1e-9)
    {
        next.apply_event(e.kind, e.twist, e.force);
    }

    if !scenario.interactive {
        next.hand_pose = trajectory?.sample(next.time)?;
    }

    next.tool_true = if !next.attached {
        next.hand_pose
    } else {
        match commands.robot {
            RobotCommand::Twist(twist) => integrate_twist(&world.tool_true, &twist, dt),
            RobotCommand::FreeDrive => follow_delta(&world.tool_true, &world.hand_pose, &next.hand_pose),
            RobotCommand::Hold | RobotCommand::TrackCamera => world.tool_true,
        }
    };

    if let Some(target) = &commands.camera_target {
        next.camera = limit_velocity(&world.camera, target, dt, &scenario.optimizer);
        next.camera_true = next.camera.pose(&scenario.optimizer);
    }

    next.contact_wrench = contact_force(&next.tool_true, &scenario.contact);
    update_progress(&mut next, &tool_tip(&world.tool_true, &scenario.contact), scenario);

    let flip = rng.random::<f64>() < scenario.sensors.fsr_flip_prob;
    let readings = next.sensors(flip);
    Some((next, readings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{builtin_scenarios, front_facing, top_facing, ContactSurface};
    use crate::viewpoint::OptimizerConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn upright_at(p: [f64; 3]) -> Pose {
        Pose::new(Vector3::from(p), front_facing())
    }

    #[test]
    fn contact_force_is_spring_along_normal() {
        let contact = ContactConfig {
            tip_offset: [0.0, 0.0, 0.12],
            surfaces: vec![ContactSurface {
                name: "table".into(),
                point: [0.0, 0.0, 0.0],
                normal: [0.0, 0.0, 2.0],
                stiffness: 1000.0,
            }],
        };
        // Tip 2 mm below the table.
        let w = contact_force(&upright_at([0.0, 0.0, 0.118]), &contact);
        assert!((w[2] - 2.0).abs() < 1e-9);
        assert_eq!(w[0], 0.0);
        // Force through the tool axis has no torque about the origin.
        assert!(w[3..].iter().all(|t| t.abs() < 1e-12));
        let free = contact_force(&upright_at([0.0, 0.0, 0.2]), &contact);
        assert_eq!(free, [0.0; 6]);
    }

    #[test]
    fn front_markers_visible_top_face_none() {
        let cfg = OptimizerConfig::default();
        let cam = cfg.neutral_decision().pose(&cfg);
        let layout = MarkerLayout::default_tool();
        let vis = VisibilityConfig::noiseless();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let front = visible_markers(&cam, &upright_at([0.0, -0.7, 0.25]), &layout, &vis, 0.0, &mut rng);
        let ids: Vec<u32> = front.iter().map(|o| o.marker_id).collect();
        assert_eq!(ids, vec![0, 1]);
        let top = Pose::new(Vector3::new(0.0, -0.7, 0.25), top_facing());
        assert!(visible_markers(&cam, &top, &layout, &vis, 0.0, &mut rng).is_empty());
    }

    #[test]
    fn noiseless_observation_is_exact_relative_pose() {
        let cfg = OptimizerConfig::default();
        let cam = cfg.neutral_decision().pose(&cfg);
        let tool = upright_at([0.02, -0.7, 0.25]);
        let layout = MarkerLayout::default_tool();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let obs = visible_markers(&cam, &tool, &layout, &VisibilityConfig::noiseless(), 1.5, &mut rng);
        for o in obs {
            let expected = compose(&invert(&cam), &compose(&tool, &layout.get(o.marker_id).unwrap().marker_in_tool));
            assert!((o.marker_in_camera.position - expected.position).norm() < 1e-12);
            assert_eq!(o.timestamp, 1.5);
        }
    }

    #[test]
    fn out_of_range_and_behind_camera_are_invisible() {
        let cfg = OptimizerConfig::default();
        let cam = cfg.neutral_decision().pose(&cfg);
        let layout = MarkerLayout::default_tool();
        let vis = VisibilityConfig::noiseless();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(visible_markers(&cam, &upright_at([0.0, -1.6, 0.25]), &layout, &vis, 0.0, &mut rng).is_empty());
        assert!(visible_markers(&cam, &upright_at([0.0, 0.0, 0.25]), &layout, &vis, 0.0, &mut rng).is_empty());
    }

    #[test]
    fn events_fire_once_in_their_tick() {
        let s = builtin_scenarios().into_iter().find(|s| s.name == "fig5a_angled").unwrap();
        let traj = s.trajectory().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = WorldState::initial(&s).unwrap();
        assert!(w.attached);
        let mut detached_at = None;
        for _ in 0..50 {
            let (n, r) = step(&w, &Commands::default(), &s, Some(&traj), &mut rng).unwrap();
            if !n.attached && detached_at.is_none() {
                detached_at = Some(n.time);
                assert!(r.pin_pulled && !r.fsr_attached);
            }
            w = n;
        }
        assert!((detached_at.unwrap() - 0.5).abs() < 1e-9);
        assert!((w.time - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_ends_when_trajectory_runs_out() {
        let s = builtin_scenarios().into_iter().find(|s| s.name == "fig5c_topface").unwrap();
        let traj = s.trajectory().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = WorldState::initial(&s).unwrap();
        w.tick_index = s.total_ticks();
        w.time = s.duration;
        assert!(step(&w, &Commands::default(), &s, Some(&traj), &mut rng).is_none());
    }

    #[test]
    fn twist_moves_attached_tool_and_hold_keeps_it() {
        let s = builtin_scenarios().into_iter().find(|s| s.name == "press_fit").unwrap();
        let traj = s.trajectory().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = WorldState::initial(&s).unwrap();
        let cmd = Commands {
            robot: RobotCommand::Twist([0.0, 0.0, -0.05, 0.0, 0.0, 0.0]),
            camera_target: None,
        };
        let (n, _) = step(&w, &cmd, &s, Some(&traj), &mut rng).unwrap();
        assert!((n.tool_true.position.z - (w.tool_true.position.z - 0.001)).abs() < 1e-12);
        let (h, _) = step(&n, &Commands::default(), &s, Some(&traj), &mut rng).unwrap();
        assert_eq!(h.tool_true, n.tool_true);
    }

    #[test]
    fn hand_pull_shows_only_on_robot_side() {
        let s = builtin_scenarios().into_iter().find(|s| s.name == "press_fit").unwrap();
        let mut w = WorldState::initial(&s).unwrap();
        w.apply_event(EventKind::Grasp, [0.0; 6], 8.0);
        let r = w.sensors(false);
        let axis = Vector3::from(r.tool_axis);
        let f = Vector3::new(r.robot_wrench_est[0], r.robot_wrench_est[1], r.robot_wrench_est[2]);
        assert!((f.dot(&axis) - r.tool_axial_force - 8.0).abs() < 1e-12);
    }
}
