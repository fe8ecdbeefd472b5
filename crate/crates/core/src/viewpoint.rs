//! Camera viewpoint optimization.
//!
//! The camera pose is parameterized by a 5-vector `(x, y, z, θx, θy)`; the
//! rotation about the camera's z-axis is fixed by configuration so that the
//! camera faces the human. The commanded pose minimizes
//!
//! ```text
//! w1·φ1 + w2·φ2 + w3·φ3 + w4·φ4
//! φ1 = ((R_rᵀ (p_h − p_r))·ẑ − d)²          viewing depth error
//! φ2 = (û·(R_r ẑ) − 1)²                      centering, û = (p_h − p_r)/‖p_h − p_r‖
//! φ3 = ‖p_r − p_n‖²                          neutral position
//! φ4 = θy²                                   neutral pan angle
//! ```
//!
//! subject to box bounds on position and on both free angles.
//!
//! Camera frame convention: x right, y down, z along the optical axis. At
//! `θx = θy = 0` and `θz = 0` the optical axis points along world −y and the
//! image "down" direction is world −z. Negative `θx` tilts the camera down.

use crate::se3::{Pose, Rotation};
use nalgebra::{Matrix3, Vector3, Vector5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("camera and tool positions coincide; centering direction is undefined")]
    DegenerateOffset,
    #[error("objective is not finite at the supplied tool estimate")]
    NonFiniteObjective,
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
}

fn default_max_iterations() -> usize {
    200
}

fn default_step_tolerance() -> f64 {
    1e-7
}

/// Objective weights, neutral pose, bounds and rate limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    /// Desired camera-to-tool viewing depth, meters.
    pub desired_distance: f64,
    pub neutral_position: [f64; 3],
    /// Fixed rotation about world z applied to the base camera orientation.
    pub theta_z_fixed: f64,
    pub pos_lo: [f64; 3],
    pub pos_hi: [f64; 3],
    pub theta_x_lo: f64,
    pub theta_x_hi: f64,
    pub theta_y_lo: f64,
    pub theta_y_hi: f64,
    /// m/s
    pub v_lin_max: f64,
    /// rad/s
    pub v_ang_max: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_step_tolerance")]
    pub step_tolerance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            w1: 100.0,
            w2: 100.0,
            w3: 2.0,
            w4: 0.5,
            desired_distance: 0.3,
            neutral_position: [0.0, -0.4, 0.35],
            theta_z_fixed: 0.0,
            pos_lo: [-0.3, -0.45, -0.2],
            pos_hi: [0.3, -0.25, 0.55],
            theta_x_lo: -0.45,
            theta_x_hi: 0.0,
            theta_y_lo: -0.8,
            theta_y_hi: 0.8,
            v_lin_max: 0.01,
            v_ang_max: 0.1,
            max_iterations: default_max_iterations(),
            step_tolerance: default_step_tolerance(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |msg: &str| Err(OptimizerError::InvalidConfig(msg.to_string()));
        let scalars = [
            self.w1,
            self.w2,
            self.w3,
            self.w4,
            self.desired_distance,
            self.theta_z_fixed,
            self.theta_x_lo,
            self.theta_x_hi,
            self.theta_y_lo,
            self.theta_y_hi,
            self.v_lin_max,
            self.v_ang_max,
            self.step_tolerance,
        ];
        if scalars
            .iter()
            .chain(self.neutral_position.iter())
            .chain(self.pos_lo.iter())
            .chain(self.pos_hi.iter())
            .any(|v| !v.is_finite())
        {
            return bad("all values must be finite");
        }
        if [self.w1, self.w2, self.w3, self.w4].iter().any(|w| *w < 0.0) {
            return bad("weights must be non-negative");
        }
        if self.desired_distance <= 0.0 {
            return bad("desired_distance must be positive");
        }
        if (0..3).any(|i| self.pos_lo[i] >= self.pos_hi[i]) {
            return bad("pos_lo must be below pos_hi componentwise");
        }
        if self.theta_x_lo > self.theta_x_hi || self.theta_y_lo > self.theta_y_hi {
            return bad("angle bounds must satisfy lo <= hi");
        }
        if self.v_lin_max <= 0.0 || self.v_ang_max <= 0.0 {
            return bad("velocity limits must be positive");
        }
        if self.max_iterations == 0 || self.step_tolerance <= 0.0 {
            return bad("solver needs a positive iteration cap and tolerance");
        }
        Ok(())
    }

    pub fn weights(&self) -> [f64; 4] {
        [self.w1, self.w2, self.w3, self.w4]
    }

    pub fn neutral(&self) -> Vector3<f64> {
        Vector3::from(self.neutral_position)
    }

    fn lower(&self) -> Vector5<f64> {
        Vector5::new(self.pos_lo[0], self.pos_lo[1], self.pos_lo[2], self.theta_x_lo, self.theta_y_lo)
    }

    fn upper(&self) -> Vector5<f64> {
        Vector5::new(self.pos_hi[0], self.pos_hi[1], self.pos_hi[2], self.theta_x_hi, self.theta_y_hi)
    }

    /// The fixed part of the camera orientation, `Rz(θz)·R_face`.
    fn mount_matrix(&self) -> Matrix3<f64> {
        Rotation::about_z(self.theta_z_fixed).matrix() * face_matrix()
    }

    /// Camera orientation at the neutral angles `θx = θy = 0`.
    pub fn neutral_rotation(&self) -> Rotation {
        camera_rotation(self, 0.0, 0.0)
    }

    /// The decision at the neutral position and angles.
    pub fn neutral_decision(&self) -> CameraDecision {
        CameraDecision::new(self.neutral(), 0.0, 0.0)
    }

    /// Whether `decision` lies inside the box, allowing `tol` slack.
    pub fn contains(&self, decision: &CameraDecision, tol: f64) -> bool {
        let x = decision.to_vector();
        let (lo, hi) = (self.lower(), self.upper());
        (0..5).all(|i| x[i] >= lo[i] - tol && x[i] <= hi[i] + tol)
    }

    pub fn project(&self, decision: &CameraDecision) -> CameraDecision {
        CameraDecision::from_vector(&self.project_vector(&decision.to_vector()))
    }

    fn project_vector(&self, x: &Vector5<f64>) -> Vector5<f64> {
        let (lo, hi) = (self.lower(), self.upper());
        Vector5::from_fn(|i, _| x[i].clamp(lo[i], hi[i]))
    }
}

/// Base camera axes: optical axis along world −y, image down along world −z.
fn face_matrix() -> Matrix3<f64> {
    Matrix3::from_columns(&[
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 0.0, -1.0),
        Vector3::new(0.0, -1.0, 0.0),
    ])
}

/// Camera orientation for the free angles: `Rz(θz)·R_face·Ry(θy)·Rx(θx)`.
pub fn camera_rotation(config: &OptimizerConfig, theta_x: f64, theta_y: f64) -> Rotation {
    Rotation::about_z(config.theta_z_fixed)
        * Rotation::from_matrix(&face_matrix())
        * Rotation::about_y(theta_y)
        * Rotation::about_x(theta_x)
}

/// Commanded camera position and the two free rotation angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraDecision {
    #[serde(with = "vec3_array")]
    pub position: Vector3<f64>,
    pub theta_x: f64,
    pub theta_y: f64,
}

mod vec3_array {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        Ok(Vector3::from(<[f64; 3]>::deserialize(d)?))
    }
}

impl CameraDecision {
    pub fn new(position: Vector3<f64>, theta_x: f64, theta_y: f64) -> Self {
        Self {
            position,
            theta_x,
            theta_y,
        }
    }

    pub fn to_vector(&self) -> Vector5<f64> {
        Vector5::new(self.position.x, self.position.y, self.position.z, self.theta_x, self.theta_y)
    }

    pub fn from_vector(x: &Vector5<f64>) -> Self {
        Self::new(Vector3::new(x[0], x[1], x[2]), x[3], x[4])
    }

    pub fn pose(&self, config: &OptimizerConfig) -> Pose {
        Pose::new(self.position, camera_rotation(config, self.theta_x, self.theta_y))
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Viewing-depth objective.
pub fn objective_distance(camera: &Pose, tool_pos: &Vector3<f64>, d: f64) -> f64 {
    let offset_in_camera = camera.rotation.inverse().apply(&(tool_pos - camera.position));
    (offset_in_camera.z - d).powi(2)
}

/// Centering objective; rejects a zero-length camera-to-tool offset.
pub fn objective_centering(camera: &Pose, tool_pos: &Vector3<f64>) -> Result<f64, OptimizerError> {
    let offset = tool_pos - camera.position;
    let r = offset.norm();
    if r == 0.0 || !r.is_finite() {
        return Err(OptimizerError::DegenerateOffset);
    }
    Ok((offset.dot(&camera.rotation.z_axis()) / r - 1.0).powi(2))
}

pub fn objective_neutral_position(camera_pos: &Vector3<f64>, neutral: &Vector3<f64>) -> f64 {
    (camera_pos - neutral).norm_squared()
}

/// Only the pan (y) angle is penalized; the neutral pan angle is zero.
pub fn objective_neutral_rotation(decision: &CameraDecision) -> f64 {
    decision.theta_y.powi(2)
}

/// The four objective values and their weighted sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub distance: f64,
    pub centering: f64,
    pub neutral_position: f64,
    pub neutral_rotation: f64,
    pub total: f64,
}

impl ObjectiveTerms {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.distance,
            self.centering,
            self.neutral_position,
            self.neutral_rotation,
            self.total,
        ]
    }
}

pub fn evaluate(
    config: &OptimizerConfig,
    decision: &CameraDecision,
    tool: &Pose,
) -> Result<ObjectiveTerms, OptimizerError> {
    let camera = decision.pose(config);
    let distance = objective_distance(&camera, &tool.position, config.desired_distance);
    let centering = objective_centering(&camera, &tool.position)?;
    let neutral_position = objective_neutral_position(&decision.position, &config.neutral());
    let neutral_rotation = objective_neutral_rotation(decision);
    let total = config.w1 * distance
        + config.w2 * centering
        + config.w3 * neutral_position
        + config.w4 * neutral_rotation;
    Ok(ObjectiveTerms {
        distance,
        centering,
        neutral_position,
        neutral_rotation,
        total,
    })
}

pub fn total_objective(
    config: &OptimizerConfig,
    decision: &CameraDecision,
    tool: &Pose,
) -> Result<f64, OptimizerError> {
    evaluate(config, decision, tool).map(|t| t.total)
}

/// Optical axis and its partial derivatives with respect to θx and θy.
fn optical_axis_with_partials(config: &OptimizerConfig, theta_x: f64, theta_y: f64) -> [Vector3<f64>; 3] {
    let m = config.mount_matrix();
    let (sx, cx) = theta_x.sin_cos();
    let (sy, cy) = theta_y.sin_cos();
    // Rx(θx)·ẑ and its θx-derivative.
    let a = Vector3::new(0.0, -sx, cx);
    let da = Vector3::new(0.0, -cx, -sx);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let dry = Matrix3::new(-sy, 0.0, cy, 0.0, 0.0, 0.0, -cy, 0.0, -sy);
    [m * ry * a, m * ry * da, m * dry * a]
}

/// Analytic gradient of the weighted objective with respect to
/// `(x, y, z, θx, θy)`.
pub fn gradient(
    config: &OptimizerConfig,
    decision: &CameraDecision,
    tool: &Pose,
) -> Result<Vector5<f64>, OptimizerError> {
    let [z, dz_dx, dz_dy] = optical_axis_with_partials(config, decision.theta_x, decision.theta_y);
    let c = tool.position - decision.position;
    let r = c.norm();
    if r == 0.0 || !r.is_finite() {
        return Err(OptimizerError::DegenerateOffset);
    }
    let u = c / r;

    let depth_err = c.dot(&z) - config.desired_distance;
    let cos_err = u.dot(&z) - 1.0;

    // ∂(c·z)/∂p = −z ; ∂(u·z)/∂p = −(z − (u·z)u)/r
    let d_depth_dp = -z;
    let d_cos_dp = -(z - u * u.dot(&z)) / r;
    let grad_p = 2.0 * config.w1 * depth_err * d_depth_dp
        + 2.0 * config.w2 * cos_err * d_cos_dp
        + 2.0 * config.w3 * (decision.position - config.neutral());

    let grad_tx = 2.0 * config.w1 * depth_err * c.dot(&dz_dx) + 2.0 * config.w2 * cos_err * u.dot(&dz_dx);
    let grad_ty = 2.0 * config.w1 * depth_err * c.dot(&dz_dy)
        + 2.0 * config.w2 * cos_err * u.dot(&dz_dy)
        + 2.0 * config.w4 * decision.theta_y;

    Ok(Vector5::new(grad_p.x, grad_p.y, grad_p.z, grad_tx, grad_ty))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    /// The line search could not find further decrease.
    Stalled,
    /// The objective was not finite at the warm start; `current` is returned.
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOutcome {
    pub decision: CameraDecision,
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
}

impl SolveOutcome {
    pub fn is_error(&self) -> bool {
        self.status == SolveStatus::Rejected
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const STEP_MIN: f64 = 1e-10;
const STEP_MAX: f64 = 1e10;

/// Projected gradient descent with Armijo backtracking, warm-started at
/// `current`. The trial step length comes from the Barzilai-Borwein
/// estimate; every accepted iterate decreases the objective.
pub fn solve(config: &OptimizerConfig, current: &CameraDecision, tool_estimate: &Pose) -> SolveOutcome {
    let reject = |objective| SolveOutcome {
        decision: *current,
        status: SolveStatus::Rejected,
        iterations: 0,
        objective,
    };
    if !tool_estimate.is_finite() || !current.is_finite() {
        return reject(f64::NAN);
    }
    let f_of = |x: &Vector5<f64>| total_objective(config, &CameraDecision::from_vector(x), tool_estimate);
    let g_of = |x: &Vector5<f64>| gradient(config, &CameraDecision::from_vector(x), tool_estimate);

    let mut x = config.project_vector(&current.to_vector());
    let (mut f, mut g) = match (f_of(&x), g_of(&x)) {
        (Ok(f), Ok(g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => (f, g),
        (Ok(f), _) => return reject(f),
        _ => return reject(f64::NAN),
    };
    // Guard against a projection that moved an infeasible warm start uphill.
    let f_start = total_objective(config, current, tool_estimate).unwrap_or(f64::NAN);
    if f_start.is_finite() && config.contains(current, 0.0) && f > f_start {
        x = current.to_vector();
        f = f_start;
    }

    let gmax = g.amax();
    let mut alpha = if gmax > 0.0 { (1.0 / gmax).clamp(STEP_MIN, STEP_MAX) } else { 1.0 };
    let mut status = SolveStatus::IterationLimit;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let direction = config.project_vector(&(x - alpha * g)) - x;
        if direction.norm() < config.step_tolerance {
            status = SolveStatus::Converged;
            break;
        }
        let slope = g.dot(&direction);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = config.project_vector(&(x + lambda * direction));
            if let Ok(ft) = f_of(&trial) {
                if ft.is_finite() && ft <= f + ARMIJO * lambda * slope {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            status = SolveStatus::Stalled;
            break;
        };
        let g_new = match g_of(&x_new) {
            Ok(g) if g.iter().all(|v| v.is_finite()) => g,
            _ => {
                x = x_new;
                f = f_new;
                status = SolveStatus::Stalled;
                break;
            }
        };
        let s = x_new - x;
        let y = g_new - g;
        x = x_new;
        f = f_new;
        g = g_new;
        if s.norm() < config.step_tolerance {
            status = SolveStatus::Converged;
            break;
        }
        let sy = s.dot(&y);
        alpha = if sy > 0.0 { (s.norm_squared() / sy).clamp(STEP_MIN, STEP_MAX) } else { STEP_MAX.min(1.0 / g.amax().max(1e-12)) };
    }

    SolveOutcome {
        decision: CameraDecision::from_vector(&x),
        status,
        iterations,
        objective: f,
    }
}

/// Rate-limits the step from `prev` to `next`: the position step is capped at
/// `v_lin_max·dt` and the `(θx, θy)` step at `v_ang_max·dt`, each keeping its
/// direction. The result is projected onto the bounds.
pub fn limit_velocity(
    prev: &CameraDecision,
    next: &CameraDecision,
    dt: f64,
    config: &OptimizerConfig,
) -> CameraDecision {
    if !(dt > 0.0) || !next.is_finite() {
        return *prev;
    }
    let clamp_step = |step: Vector3<f64>, max: f64| {
        let n = step.norm();
        if n > max {
            step * (max / n)
        } else {
            step
        }
    };
    let dp = clamp_step(next.position - prev.position, config.v_lin_max * dt);
    let dtheta = clamp_step(
        Vector3::new(next.theta_x - prev.theta_x, next.theta_y - prev.theta_y, 0.0),
        config.v_ang_max * dt,
    );
    let limited = CameraDecision::new(prev.position + dp, prev.theta_x + dtheta.x, prev.theta_y + dtheta.y);
    config.project(&limited)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::rotation_angle;
    use proptest::prelude::*;

    fn cfg() -> OptimizerConfig {
        OptimizerConfig::default()
    }

    /// Tool placed at distance d along the optical axis of `decision`.
    fn tool_in_view(config: &OptimizerConfig, decision: &CameraDecision) -> Pose {
        let cam = decision.pose(config);
        Pose::from_translation(cam.position + config.desired_distance * cam.rotation.z_axis())
    }

    fn central_difference(config: &OptimizerConfig, decision: &CameraDecision, tool: &Pose, h: f64) -> Vector5<f64> {
        let x = decision.to_vector();
        Vector5::from_fn(|i, _| {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fp = total_objective(config, &CameraDecision::from_vector(&xp), tool).unwrap();
            let fm = total_objective(config, &CameraDecision::from_vector(&xm), tool).unwrap();
            (fp - fm) / (2.0 * h)
        })
    }

    #[test]
    fn defaults_validate() {
        let c = cfg();
        c.validate().unwrap();
        assert_eq!(c.weights(), [100.0, 100.0, 2.0, 0.5]);
        assert_eq!(c.desired_distance, 0.3);
        assert_eq!(c.neutral_position, [0.0, -0.4, 0.35]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = cfg();
        c.w3 = -1.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.pos_lo[1] = c.pos_hi[1];
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.v_ang_max = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn neutral_camera_looks_along_minus_y() {
        let r = cfg().neutral_rotation();
        assert!((r.z_axis() - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        let down = camera_rotation(&cfg(), -0.3, 0.0).z_axis();
        assert!(down.z < 0.0);
    }

    #[test]
    fn analytic_axis_matches_rotation() {
        let c = cfg();
        for &(tx, ty) in &[(0.0, 0.0), (-0.3, 0.5), (-0.45, -0.8), (-0.1, 0.2)] {
            let [z, _, _] = optical_axis_with_partials(&c, tx, ty);
            assert!((z - camera_rotation(&c, tx, ty).z_axis()).norm() < 1e-12);
        }
    }

    #[test]
    fn distance_objective_examples() {
        let cam = Pose::identity();
        assert_eq!(objective_distance(&cam, &Vector3::new(0.0, 0.0, 0.3), 0.3), 0.0);
        assert!((objective_distance(&cam, &Vector3::new(0.0, 0.0, 0.5), 0.3) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn distance_uses_camera_frame_depth() {
        // Camera rotated so its optical axis is world +x.
        let cam = Pose::new(Vector3::zeros(), Rotation::about_y(std::f64::consts::FRAC_PI_2));
        assert!(objective_distance(&cam, &Vector3::new(0.3, 0.0, 0.0), 0.3) < 1e-20);
        assert!((objective_distance(&cam, &Vector3::new(0.0, 0.0, 0.3), 0.3) - 0.09).abs() < 1e-12);
    }

    #[test]
    fn centering_objective_examples() {
        let cam = Pose::identity();
        assert_eq!(objective_centering(&cam, &Vector3::new(0.0, 0.0, 2.0)).unwrap(), 0.0);
        let off = objective_centering(&cam, &Vector3::new(0.3, 0.0, 0.4)).unwrap();
        assert!((off - 0.04).abs() < 1e-15);
        let behind = objective_centering(&cam, &Vector3::new(0.0, 0.0, -1.0)).unwrap();
        assert!((behind - 4.0).abs() < 1e-15);
        assert_eq!(
            objective_centering(&cam, &Vector3::zeros()),
            Err(OptimizerError::DegenerateOffset)
        );
    }

    #[test]
    fn neutral_objectives() {
        let c = cfg();
        assert_eq!(objective_neutral_position(&c.neutral(), &c.neutral()), 0.0);
        let off = objective_neutral_position(&Vector3::new(0.1, -0.4, 0.35), &c.neutral());
        assert!((off - 0.01).abs() < 1e-15);
        assert_eq!(objective_neutral_rotation(&c.neutral_decision()), 0.0);
        let d = CameraDecision::new(c.neutral(), c.neutral_decision().theta_x, 0.2);
        assert!((objective_neutral_rotation(&d) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn constructed_optimum_has_zero_total_and_gradient() {
        let c = cfg();
        let d = CameraDecision::new(c.neutral(), -0.2, 0.0);
        let tool = tool_in_view(&c, &d);
        assert!(total_objective(&c, &d, &tool).unwrap() < 1e-28);
        assert!(gradient(&c, &d, &tool).unwrap().norm() < 1e-6);
    }

    #[test]
    fn total_is_linear_in_weights() {
        let mut c = cfg();
        let d = CameraDecision::new(Vector3::new(0.1, -0.3, 0.2), -0.1, 0.3);
        let tool = Pose::from_translation(Vector3::new(0.2, -0.8, 0.1));
        let base = total_objective(&c, &d, &tool).unwrap();
        c.w1 *= 2.0;
        c.w2 *= 2.0;
        c.w3 *= 2.0;
        c.w4 *= 2.0;
        assert!((total_objective(&c, &d, &tool).unwrap() - 2.0 * base).abs() < 1e-12 * base.max(1.0));
    }

    #[test]
    fn neutral_position_gradient_term() {
        // Only the φ3 term active: unit weight gives 2·(p_r − p_n), the
        // default w3 = 2 doubles it.
        let mut c = cfg();
        c.w1 = 0.0;
        c.w2 = 0.0;
        c.w4 = 0.0;
        let d = CameraDecision::new(c.neutral() + Vector3::new(0.1, 0.0, 0.0), -0.1, 0.0);
        let tool = Pose::from_translation(Vector3::new(0.0, -0.8, 0.2));
        let weighted = gradient(&c, &d, &tool).unwrap();
        assert!((weighted - Vector5::new(0.4, 0.0, 0.0, 0.0, 0.0)).norm() < 1e-15);
        c.w3 = 1.0;
        let unit = gradient(&c, &d, &tool).unwrap();
        assert!((unit - Vector5::new(0.2, 0.0, 0.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences_at_fixed_points() {
        let c = cfg();
        let d = CameraDecision::new(Vector3::new(0.05, -0.33, 0.3), -0.2, 0.35);
        let tool = Pose::from_translation(Vector3::new(0.15, -0.75, 0.05));
        let g = gradient(&c, &d, &tool).unwrap();
        let fd = central_difference(&c, &d, &tool, 1e-6);
        assert!((g - fd).norm() / g.norm() < 1e-5, "{g} vs {fd}");
    }

    #[test]
    fn solve_is_fixed_point_at_optimum() {
        let c = cfg();
        let d = CameraDecision::new(c.neutral(), -0.25, 0.0);
        let tool = tool_in_view(&c, &d);
        let out = solve(&c, &d, &tool);
        assert_eq!(out.status, SolveStatus::Converged);
        assert!((out.decision.to_vector() - d.to_vector()).norm() < 1e-6);
    }

    #[test]
    fn solve_reaches_interior_optimum_from_neutral() {
        let c = cfg();
        let target = CameraDecision::new(c.neutral(), -0.3, 0.0);
        let tool = tool_in_view(&c, &target);
        let out = solve(&c, &c.neutral_decision(), &tool);
        let terms = evaluate(&c, &out.decision, &tool).unwrap();
        assert!(terms.distance < 1e-6 && terms.centering < 1e-6, "{terms:?} {out:?}");
    }

    #[test]
    fn solve_rejects_non_finite_tool() {
        let c = cfg();
        let tool = Pose::from_translation(Vector3::new(f64::NAN, 0.0, 0.0));
        let start = c.neutral_decision();
        let out = solve(&c, &start, &tool);
        assert!(out.is_error());
        assert_eq!(out.decision, start);
        // Tool exactly at the camera: centering is undefined.
        let out = solve(&c, &start, &Pose::from_translation(c.neutral()));
        assert!(out.is_error());
    }

    #[test]
    fn far_tool_pushes_to_boundary() {
        let c = cfg();
        let tool = Pose::from_translation(Vector3::new(0.0, -1.5, 0.3));
        let out = solve(&c, &c.neutral_decision(), &tool);
        let x = out.decision.to_vector();
        let active = (0..5).any(|i| (x[i] - c.lower()[i]).abs() < 1e-9 || (x[i] - c.upper()[i]).abs() < 1e-9);
        assert!(active, "{x}");
        // The camera backs against its y bound toward the far tool.
        assert!((out.decision.position.y - c.pos_lo[1]).abs() < 1e-9);
    }

    #[test]
    fn velocity_limit_examples() {
        let c = cfg();
        let prev = CameraDecision::new(c.neutral(), -0.2, 0.0);
        let dir = Vector3::new(3.0, 0.0, 4.0) / 5.0;
        let next = CameraDecision::new(prev.position + dir * 0.005, -0.2, 0.0);
        let out = limit_velocity(&prev, &next, 0.1, &c);
        assert!(((out.position - prev.position) - dir * 0.001).norm() < 1e-15);

        let small = CameraDecision::new(prev.position + Vector3::new(0.0005, 0.0, 0.0), -0.195, 0.002);
        assert_eq!(limit_velocity(&prev, &small, 0.1, &c), small);

        let turn = CameraDecision::new(prev.position, -0.2, 0.05);
        let out = limit_velocity(&prev, &turn, 0.1, &c);
        assert!((out.theta_y - 0.01).abs() < 1e-15);
        assert!(rotation_angle(&(prev.pose(&c).rotation.inverse() * out.pose(&c).rotation)) <= 0.01 + 1e-12);
    }

    fn arb_decision() -> impl Strategy<Value = CameraDecision> {
        (-0.3f64..0.3, -0.45f64..-0.25, -0.2f64..0.55, -0.45f64..0.0, -0.8f64..0.8)
            .prop_map(|(x, y, z, tx, ty)| CameraDecision::new(Vector3::new(x, y, z), tx, ty))
    }

    fn arb_tool() -> impl Strategy<Value = Pose> {
        (-0.6f64..0.6, -1.4f64..-0.5, -0.3f64..0.6).prop_map(|(x, y, z)| Pose::from_translation(Vector3::new(x, y, z)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn solve_is_feasible_and_monotone(start in arb_decision(), tool in arb_tool()) {
            let c = cfg();
            let out = solve(&c, &start, &tool);
            prop_assert!(c.contains(&out.decision, 1e-9));
            let before = total_objective(&c, &start, &tool).unwrap();
            let after = total_objective(&c, &out.decision, &tool).unwrap();
            prop_assert!(after <= before + 1e-12);
        }

        #[test]
        fn solve_is_deterministic(start in arb_decision(), tool in arb_tool()) {
            let c = cfg();
            let a = solve(&c, &start, &tool).decision.to_vector();
            let b = solve(&c, &start, &tool).decision.to_vector();
            for i in 0..5 {
                prop_assert_eq!(a[i].to_bits(), b[i].to_bits());
            }
        }

        #[test]
        fn limited_step_respects_caps(a in arb_decision(), b in arb_decision(), dt in 0.001f64..0.5) {
            let c = cfg();
            let out = limit_velocity(&a, &b, dt, &c);
            prop_assert!(c.contains(&out, 1e-9));
            prop_assert!((out.position - a.position).norm() <= c.v_lin_max * dt * (1.0 + 1e-12));
            let dth = ((out.theta_x - a.theta_x).powi(2) + (out.theta_y - a.theta_y).powi(2)).sqrt();
            prop_assert!(dth <= c.v_ang_max * dt * (1.0 + 1e-12));
        }

        #[test]
        fn depth_zeroes_at_desired_distance_anywhere(d in arb_decision(), lateral in prop::array::uniform2(-0.2f64..0.2)) {
            // Slide the tool laterally in the image plane, then set its depth to d.
            let c = cfg();
            let cam = d.pose(&c);
            let offset = Vector3::new(lateral[0], lateral[1], c.desired_distance);
            let tool = cam.position + cam.rotation.apply(&offset);
            prop_assert!(objective_distance(&cam, &tool, c.desired_distance) < 1e-24);
        }
    }
}
