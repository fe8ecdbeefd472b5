use nalgebra::{Matrix6, SymmetricEigen, Vector3, Vector6};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vdi_core::scenario::{front_facing, VisibilityConfig};
use vdi_core::se3::{compose, invert, rotation_angle, Pose, Rotation};
use vdi_core::sim::visible_markers;
use vdi_core::tracker::{
    ekf_predict, ekf_update, MarkerLayout, MarkerObservation, ToolEstimate, Tracker, TrackerConfig,
};
use vdi_core::viewpoint::OptimizerConfig;

fn min_eigenvalue(p: &Matrix6<f64>) -> f64 {
    SymmetricEigen::new(*p).eigenvalues.min()
}

fn arb_vec3(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-scale..scale).prop_map(Vector3::from)
}

fn arb_pose() -> impl Strategy<Value = Pose> {
    (arb_vec3(1.0), arb_vec3(3.0)).prop_map(|(p, r)| Pose::new(p, Rotation::from_rotation_vector(r)))
}

#[derive(Clone, Debug)]
enum Op {
    Predict(f64),
    Update(Pose, Vector6<f64>),
}

fn arb_op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0.0..2.0f64).prop_map(Op::Predict),
        (arb_pose(), prop::array::uniform6(1e-8..1.0f64)).prop_map(|(p, n)| Op::Update(p, Vector6::from(n))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    // 100 cases × 100 steps = 10,000 randomized predict/update steps.
    #[test]
    fn covariance_stays_psd(start in arb_pose(), ops in prop::collection::vec(arb_op(), 100)) {
        let config = TrackerConfig::default();
        let mut state = ToolEstimate::new(start, config.initial_covariance(), 0.0);
        for op in ops {
            state = match op {
                Op::Predict(dt) => ekf_predict(&state, dt, &config.process_noise()),
                Op::Update(meas, noise) => ekf_update(&state, &meas, &noise).unwrap(),
            };
            let p = state.covariance;
            prop_assert!((p - p.transpose()).amax() <= 1e-12);
            prop_assert!(min_eigenvalue(&p) >= -1e-10, "min eigenvalue {}", min_eigenvalue(&p));
        }
    }

    #[test]
    fn fusion_order_at_one_timestamp_barely_matters(
        truth in arb_pose(),
        da in arb_vec3(0.01), ra in arb_vec3(0.03),
        db in arb_vec3(0.01), rb in arb_vec3(0.03),
    ) {
        let layout = MarkerLayout::default_tool();
        let camera = Pose::identity();
        let sighting = |dp: Vector3<f64>, dr: Vector3<f64>, id: u32| {
            let tool = Pose::new(truth.position + dp, Rotation::from_rotation_vector(dr) * truth.rotation);
            let m = layout.get(id).unwrap();
            MarkerObservation { marker_id: id, marker_in_camera: compose(&tool, &m.marker_in_tool), timestamp: 1.0 }
        };
        let (a, b) = (sighting(da, ra, 1), sighting(db, rb, 2));
        let prior = ToolEstimate::new(truth, TrackerConfig::default().initial_covariance(), 1.0);
        let fuse = |obs: [MarkerObservation; 2]| {
            let mut t = Tracker::with_prior(TrackerConfig::default(), layout.clone(), prior);
            t.ingest(&obs, &camera, 1.0);
            *t.estimate().unwrap()
        };
        let ab = fuse([a, b]);
        let ba = fuse([b, a]);
        prop_assert!((ab.tool_in_world.position - ba.tool_in_world.position).norm() <= 1e-6);
        let dr = ab.tool_in_world.rotation * ba.tool_in_world.rotation.inverse();
        prop_assert!(rotation_angle(&dr) <= 1e-6);
    }

    #[test]
    fn publications_never_closer_than_one_period_less_a_tick(
        seen in prop::collection::vec(any::<bool>(), 500),
    ) {
        let tick = 0.02;
        let config = TrackerConfig::default();
        let layout = MarkerLayout::default_tool();
        let tool = Pose::new(Vector3::new(0.0, 0.0, 0.3), Rotation::identity());
        let m = layout.get(0).unwrap().marker_in_tool;
        let mut tracker = Tracker::new(config.clone(), layout.clone());
        let mut last: Option<f64> = None;
        for (k, s) in seen.iter().enumerate() {
            let t = k as f64 * tick;
            let obs: Vec<_> = if *s {
                vec![MarkerObservation { marker_id: 0, marker_in_camera: compose(&tool, &m), timestamp: t }]
            } else {
                vec![]
            };
            if tracker.ingest(&obs, &Pose::identity(), t).published.is_some() {
                if let Some(prev) = last {
                    prop_assert!(t - prev >= config.publish_period - tick - 1e-9);
                }
                last = Some(t);
            }
        }
    }
}

#[test]
fn two_sightings_in_one_window_publish_once() {
    let layout = MarkerLayout::default_tool();
    let tool = Pose::new(Vector3::new(0.0, 0.0, 0.3), Rotation::identity());
    let obs = |id: u32, t: f64| MarkerObservation {
        marker_id: id,
        marker_in_camera: compose(&tool, &layout.get(id).unwrap().marker_in_tool),
        timestamp: t,
    };
    let mut tracker = Tracker::new(TrackerConfig::default(), layout.clone());
    let first = tracker.ingest(&[obs(0, 0.04)], &Pose::identity(), 0.04);
    let second = tracker.ingest(&[obs(1, 0.08)], &Pose::identity(), 0.08);
    assert_eq!(first.fused + second.fused, 2);
    assert_eq!(first.published.is_some() as u32 + second.published.is_some() as u32, 1);
}

/// Closed loop through the simulator's visibility model with noise off:
/// a static tool in plain view converges within 20 publications.
#[test]
fn noiseless_simulated_sightings_converge() {
    let vis = VisibilityConfig::noiseless();
    let camera = OptimizerConfig::default().neutral_decision().pose(&OptimizerConfig::default());
    let truth = Pose::new(Vector3::new(0.0, -0.7, 0.25), front_facing());
    let layout = MarkerLayout::default_tool();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let config = TrackerConfig::default();
    let off = Pose::new(truth.position + Vector3::new(0.3, -0.2, 0.25), Rotation::about_x(0.9) * truth.rotation);
    let mut tracker = Tracker::with_prior(config.clone(), layout.clone(), ToolEstimate::new(off, config.initial_covariance(), 0.0));
    let mut published = 0;
    let mut k = 0u64;
    let mut last = None;
    while published < 20 {
        let t = k as f64 * 0.02;
        let obs = visible_markers(&camera, &truth, &layout, &vis, t, &mut rng);
        assert!(!obs.is_empty(), "tool must stay in view");
        if let Some(p) = tracker.ingest(&obs, &camera, t).published {
            published += 1;
            last = Some(p);
        }
        k += 1;
    }
    let est = last.unwrap().tool_in_world;
    assert!((est.position - truth.position).norm() < 1e-3);
    assert!(rotation_angle(&(est.rotation * truth.rotation.inverse())) < 0.01);
    // The estimate is in the world frame, independent of the camera pose.
    let rel = compose(&invert(&camera), &est);
    assert!(rel.is_finite());
}
