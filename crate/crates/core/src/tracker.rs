//! Fiducial-based tool tracking.
//!
//! Each marker sighting is converted into a full 6-DoF tool-pose
//! measurement through the known marker layout, then fused by an error-state
//! EKF over `[δp, δθ]` (position and world-frame rotation vector). The
//! process model is a random walk. Estimates are published at most once per
//! `publish_period` seconds so several sightings contribute to each
//! published pose.

use crate::se3::{compose, invert, Pose, Rotation};
use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

/// Slack for comparing simulated timestamps built from tick counts.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("marker id {0} is not part of the layout")]
    UnknownMarker(u32),
    #[error("measurement is not finite")]
    NonFiniteMeasurement,
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,
    #[error("invalid marker layout: {0}")]
    InvalidLayout(String),
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerEntry {
    pub id: u32,
    pub marker_in_tool: Pose,
    /// meters
    pub edge_length: f64,
}

/// Known placement of every marker on the tool body. Marker frames have
/// their z-axis along the outward face normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<MarkerEntry>", into = "Vec<MarkerEntry>")]
pub struct MarkerLayout {
    entries: Vec<MarkerEntry>,
}

impl TryFrom<Vec<MarkerEntry>> for MarkerLayout {
    type Error = TrackerError;

    fn try_from(entries: Vec<MarkerEntry>) -> Result<Self, Self::Error> {
        MarkerLayout::new(entries)
    }
}

impl From<MarkerLayout> for Vec<MarkerEntry> {
    fn from(layout: MarkerLayout) -> Self {
        layout.entries
    }
}

impl MarkerLayout {
    pub fn new(entries: Vec<MarkerEntry>) -> Result<Self, TrackerError> {
        if entries.is_empty() {
            return Err(TrackerError::InvalidLayout("at least one marker is required".into()));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id) {
                return Err(TrackerError::InvalidLayout(format!("duplicate marker id {}", e.id)));
            }
            if !(e.edge_length > 0.0) || !e.marker_in_tool.is_finite() {
                return Err(TrackerError::InvalidLayout(format!("marker {} has invalid geometry", e.id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[MarkerEntry] {
        &self.entries
    }

    pub fn get(&self, id: u32) -> Option<&MarkerEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Five markers around a tool barrel of radius 25 mm: a front plate
    /// (id 0, +x) plus four barrel markers at 90° spacing (ids 1-4, the
    /// first also facing +x). The tool z-axis runs from the top face, which
    /// mates with the robot mount and carries no marker, toward the tip.
    pub fn default_tool() -> Self {
        let radius = 0.025;
        let edge = 0.03;
        // Marker z along the outward radial direction at azimuth `az`.
        let radial = |id: u32, az: f64, r: f64, z: f64| {
            let normal = Vector3::new(az.cos(), az.sin(), 0.0);
            let rot = Rotation::about_z(az) * Rotation::about_y(std::f64::consts::FRAC_PI_2);
            debug_assert!((rot.z_axis() - normal).norm() < 1e-12);
            MarkerEntry {
                id,
                marker_in_tool: Pose::new(normal * r + Vector3::new(0.0, 0.0, z), rot),
                edge_length: edge,
            }
        };
        let mut entries = vec![radial(0, 0.0, radius + 0.01, 0.04)];
        for k in 0..4 {
            entries.push(radial(k + 1, k as f64 * std::f64::consts::FRAC_PI_2, radius, 0.0));
        }
        Self::new(entries).expect("default layout is valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerObservation {
    pub marker_id: u32,
    pub marker_in_camera: Pose,
    pub timestamp: f64,
}

/// Filter state. Covariance is over `[δp (m), δθ (rad)]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToolEstimate {
    pub tool_in_world: Pose,
    pub covariance: Matrix6<f64>,
    pub timestamp: f64,
    pub tracking: bool,
}

impl ToolEstimate {
    pub fn new(tool_in_world: Pose, covariance: Matrix6<f64>, timestamp: f64) -> Self {
        Self {
            tool_in_world,
            covariance,
            timestamp,
            tracking: true,
        }
    }

    /// Error of this estimate relative to `truth`: `[p_true − p, log(R_true·Rᵀ)]`.
    pub fn error_to(&self, truth: &Pose) -> Vector6<f64> {
        pose_difference(truth, &self.tool_in_world)
    }

    /// Normalized estimation error squared against `truth`.
    pub fn nees(&self, truth: &Pose) -> Option<f64> {
        let e = self.error_to(truth);
        let inv = self.covariance.cholesky()?.inverse();
        Some((e.transpose() * inv * e)[(0, 0)])
    }
}

/// `[a.p − b.p, log(a.R · b.Rᵀ)]`
fn pose_difference(a: &Pose, b: &Pose) -> Vector6<f64> {
    let dp = a.position - b.position;
    let dr = (a.rotation * b.rotation.inverse()).to_rotation_vector();
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Measurement standard deviations of a single tool-pose sighting.
    pub meas_sigma_pos: f64,
    pub meas_sigma_rot: f64,
    /// Random-walk variance growth per second.
    pub process_var_pos: f64,
    pub process_var_rot: f64,
    /// Prior variances used when the first sighting initializes the filter.
    pub init_var_pos: f64,
    pub init_var_rot: f64,
    pub publish_period: f64,
    pub lost_timeout: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            meas_sigma_pos: 0.005,
            meas_sigma_rot: 0.02,
            process_var_pos: 1e-3,
            process_var_rot: 1e-2,
            init_var_pos: 0.01,
            init_var_rot: 0.1,
            publish_period: 0.2,
            lost_timeout: 0.6,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let positive = [
            self.meas_sigma_pos,
            self.meas_sigma_rot,
            self.init_var_pos,
            self.init_var_rot,
            self.publish_period,
            self.lost_timeout,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(TrackerError::InvalidConfig(
                "noise, prior, period and timeout values must be positive".into(),
            ));
        }
        if !(self.process_var_pos >= 0.0 && self.process_var_rot >= 0.0)
            || !self.process_var_pos.is_finite()
            || !self.process_var_rot.is_finite()
        {
            return Err(TrackerError::InvalidConfig("process noise must be non-negative".into()));
        }
        Ok(())
    }

    pub fn meas_noise(&self) -> Vector6<f64> {
        let p = self.meas_sigma_pos.powi(2);
        let r = self.meas_sigma_rot.powi(2);
        Vector6::new(p, p, p, r, r, r)
    }

    pub fn process_noise(&self) -> Vector6<f64> {
        let p = self.process_var_pos;
        let r = self.process_var_rot;
        Vector6::new(p, p, p, r, r, r)
    }

    pub fn initial_covariance(&self) -> Matrix6<f64> {
        let p = self.init_var_pos;
        let r = self.init_var_rot;
        Matrix6::from_diagonal(&Vector6::new(p, p, p, r, r, r))
    }
}

/// Tool pose implied by one sighting: `camera ∘ marker_in_camera ∘ marker_in_tool⁻¹`.
pub fn marker_to_tool_pose(
    obs: &MarkerObservation,
    layout: &MarkerLayout,
    camera_in_world: &Pose,
) -> Result<Pose, TrackerError> {
    let entry = layout.get(obs.marker_id).ok_or(TrackerError::UnknownMarker(obs.marker_id))?;
    let pose = compose(
        &compose(camera_in_world, &obs.marker_in_camera),
        &invert(&entry.marker_in_tool),
    );
    if pose.is_finite() {
        Ok(pose)
    } else {
        Err(TrackerError::NonFiniteMeasurement)
    }
}

/// Random-walk prediction: the mean is kept, `P += diag(q)·dt`.
pub fn ekf_predict(state: &ToolEstimate, dt: f64, process_noise: &Vector6<f64>) -> ToolEstimate {
    let mut next = *state;
    if dt > 0.0 {
        next.covariance += Matrix6::from_diagonal(&(process_noise * dt));
        next.timestamp = state.timestamp + dt;
    }
    next
}

/// EKF update with a full tool-pose measurement. The rotation innovation is
/// the rotation vector of `R_meas·R_estᵀ`; the covariance uses the Joseph
/// form so it stays symmetric positive semi-definite.
pub fn ekf_update(
    state: &ToolEstimate,
    measured_tool_pose: &Pose,
    meas_noise: &Vector6<f64>,
) -> Result<ToolEstimate, TrackerError> {
    if !measured_tool_pose.is_finite() || meas_noise.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(TrackerError::NonFiniteMeasurement);
    }
    let innovation = pose_difference(measured_tool_pose, &state.tool_in_world);
    let p = state.covariance;
    let r = Matrix6::from_diagonal(meas_noise);
    let s_inv = (p + r).cholesky().ok_or(TrackerError::SingularInnovation)?.inverse();
    let gain = p * s_inv;
    let correction = gain * innovation;

    let position = state.tool_in_world.position + correction.fixed_rows::<3>(0).into_owned();
    let rotation = Rotation::from_rotation_vector(correction.fixed_rows::<3>(3).into_owned())
        * state.tool_in_world.rotation;

    let i_kh = Matrix6::identity() - gain;
    let cov = i_kh * p * i_kh.transpose() + gain * r * gain.transpose();
    let cov = (cov + cov.transpose()) * 0.5;

    Ok(ToolEstimate {
        tool_in_world: Pose::new(position, rotation),
        covariance: cov,
        timestamp: state.timestamp,
        tracking: state.tracking,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingStatus {
    Tracking,
    Lost,
}

/// What one `ingest` call did.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestReport {
    pub fused: usize,
    pub rejected: Vec<(u32, TrackerError)>,
    /// Set when this call crossed a publication boundary.
    pub published: Option<ToolEstimate>,
}

/// Single-owner tracker; all mutation goes through [`Tracker::ingest`].
#[derive(Clone, Debug)]
pub struct Tracker {
    config: TrackerConfig,
    layout: MarkerLayout,
    estimate: Option<ToolEstimate>,
    last_seen: Option<f64>,
    session_start: Option<f64>,
    /// Time of the last publication; never reset, so spacing holds across sessions.
    last_publish: Option<f64>,
    published: Option<ToolEstimate>,
}

impl Tracker {
    pub fn new(config: TrackerConfig, layout: MarkerLayout) -> Self {
        Self {
            config,
            layout,
            estimate: None,
            last_seen: None,
            session_start: None,
            last_publish: None,
            published: None,
        }
    }

    /// Starts from a given prior instead of the first sighting.
    pub fn with_prior(config: TrackerConfig, layout: MarkerLayout, prior: ToolEstimate) -> Self {
        let mut t = Self::new(config, layout);
        t.estimate = Some(prior);
        t
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn layout(&self) -> &MarkerLayout {
        &self.layout
    }

    /// Forgets the current estimate and anchors the lost-tracking timer at
    /// `now`, so a new session gets one timeout of grace before it is Lost.
    pub fn start_session(&mut self, now: f64) {
        self.estimate = None;
        self.last_seen = None;
        self.session_start = Some(now);
        self.published = None;
    }

    /// Latest internal filter state (updated on every sighting).
    pub fn estimate(&self) -> Option<&ToolEstimate> {
        self.estimate.as_ref()
    }

    /// Latest published (throttled) estimate.
    pub fn published(&self) -> Option<&ToolEstimate> {
        self.published.as_ref()
    }

    pub fn last_seen(&self) -> Option<f64> {
        self.last_seen
    }

    pub fn ingest(
        &mut self,
        observations: &[MarkerObservation],
        camera_in_world: &Pose,
        now: f64,
    ) -> IngestReport {
        let mut report = IngestReport::default();
        let meas_noise = self.config.meas_noise();
        let process_noise = self.config.process_noise();

        for obs in observations {
            let measured = match marker_to_tool_pose(obs, &self.layout, camera_in_world) {
                Ok(p) => p,
                Err(e) => {
                    report.rejected.push((obs.marker_id, e));
                    continue;
                }
            };
            let stamp = obs.timestamp.min(now);
            let next = match self.estimate {
                None => Ok(ToolEstimate::new(measured, self.config.initial_covariance(), stamp)),
                Some(state) => {
                    let predicted = ekf_predict(&state, stamp - state.timestamp, &process_noise);
                    ekf_update(&predicted, &measured, &meas_noise)
                }
            };
            match next {
                Ok(est) => {
                    self.estimate = Some(est);
                    self.last_seen = Some(self.last_seen.map_or(stamp, |t: f64| t.max(stamp)));
                    report.fused += 1;
                }
                Err(e) => report.rejected.push((obs.marker_id, e)),
            }
        }

        if let Some(state) = self.estimate {
            let mut state = ekf_predict(&state, now - state.timestamp, &process_noise);
            state.tracking = self.tracking_status(now, self.config.lost_timeout) == TrackingStatus::Tracking;
            self.estimate = Some(state);

            let period = self.config.publish_period;
            if self.last_publish.is_none_or(|last| now - last >= period - TIME_EPS) {
                self.last_publish = Some(now);
                self.published = Some(state);
                report.published = Some(state);
            }
        }
        report
    }

    /// Lost once more than `timeout` seconds have passed since the last
    /// sighting (or since the session started, if nothing was seen yet).
    pub fn tracking_status(&self, now: f64, timeout: f64) -> TrackingStatus {
        match self.last_seen.or(self.session_start) {
            Some(t) if now - t <= timeout + TIME_EPS => TrackingStatus::Tracking,
            _ => TrackingStatus::Lost,
        }
    }
}
