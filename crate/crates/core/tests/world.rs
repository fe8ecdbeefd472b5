use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vdi_core::harness;
use vdi_core::mode::{Led, Mode, RobotCommand};
use vdi_core::scenario::{builtin_scenarios, front_facing, top_facing, EventKind, Keyframe, Scenario, TimedEvent, VisibilityConfig};
use vdi_core::se3::{compose, Pose, Rotation};
use vdi_core::sim::{step, visible_markers, Commands, WorldState};
use vdi_core::tracker::MarkerLayout;
use vdi_core::viewpoint::{limit_velocity, CameraDecision, OptimizerConfig};

const WORK_POINT: [f64; 3] = [0.0, -0.7, 0.25];

fn neutral_camera() -> Pose {
    let c = OptimizerConfig::default();
    c.neutral_decision().pose(&c)
}

fn static_scenario(duration: f64) -> Scenario {
    let pose = Pose::new(Vector3::from(WORK_POINT), front_facing());
    Scenario {
        name: "static".into(),
        description: String::new(),
        duration,
        tick: 0.02,
        seed: 3,
        interactive: false,
        abort_on_violation: true,
        initial: Default::default(),
        optimizer: Default::default(),
        tracker: Default::default(),
        mode: Default::default(),
        visibility: Default::default(),
        contact: Default::default(),
        sensors: Default::default(),
        goals: Default::default(),
        markers: MarkerLayout::default_tool(),
        events: vec![],
        trajectory: vec![Keyframe::from_pose(0.0, &pose), Keyframe::from_pose(duration, &pose)],
    }
}

fn arb_pose_near_work_point() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-0.15..0.15f64), prop::array::uniform3(-3.2..3.2f64)).prop_map(|(dp, r)| {
        Pose::new(Vector3::from(WORK_POINT) + Vector3::from(dp), Rotation::from_rotation_vector(Vector3::from(r)))
    })
}

proptest! {
    #[test]
    fn shrinking_max_incidence_never_adds_markers(
        tool in arb_pose_near_work_point(),
        wide in 0.05..1.5f64,
        shrink in 0.0..1.0f64,
        seed in any::<u64>(),
    ) {
        let layout = MarkerLayout::default_tool();
        let camera = neutral_camera();
        let ids = |max_incidence: f64| {
            let vis = VisibilityConfig { max_incidence, ..VisibilityConfig::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            visible_markers(&camera, &tool, &layout, &vis, 0.0, &mut rng)
                .into_iter()
                .map(|o| o.marker_id)
                .collect::<Vec<_>>()
        };
        let broad = ids(wide);
        let narrow = ids(wide * shrink);
        prop_assert!(narrow.iter().all(|id| broad.contains(id)), "{narrow:?} ⊄ {broad:?}");
    }
}

/// With the top face toward the camera, every marker normal makes more than
/// the maximum incidence angle with its ray to the camera.
#[test]
fn top_face_toward_camera_hides_every_marker() {
    let camera = neutral_camera();
    let tool = Pose::new(Vector3::from(WORK_POINT), top_facing());
    let vis = VisibilityConfig::default();
    let layout = MarkerLayout::default_tool();
    for m in layout.entries() {
        let marker = compose(&tool, &m.marker_in_tool);
        let to_camera = (camera.position - marker.position).normalize();
        let normal = marker.rotation.matrix().column(2).into_owned();
        let incidence = to_camera.dot(&normal).clamp(-1.0, 1.0).acos();
        assert!(incidence > vis.max_incidence, "marker {} incidence {incidence}", m.id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(visible_markers(&camera, &tool, &layout, &VisibilityConfig::noiseless(), 0.0, &mut rng).is_empty());
}

#[test]
fn directly_facing_marker_in_range_is_visible() {
    let camera = neutral_camera();
    let tool = Pose::new(Vector3::from(WORK_POINT), front_facing());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let seen = visible_markers(&camera, &tool, &MarkerLayout::default_tool(), &VisibilityConfig::noiseless(), 0.0, &mut rng);
    assert!(seen.iter().any(|o| o.marker_id == 0));
}

#[test]
fn zero_commands_on_static_trajectory_change_only_time() {
    let s = static_scenario(2.0);
    let traj = s.trajectory().unwrap();
    let world = WorldState::initial(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let commands = Commands {
        robot: RobotCommand::Hold,
        camera_target: None,
    };
    let (next, _) = step(&world, &commands, &s, Some(&traj), &mut rng).unwrap();
    let mut expect = world.clone();
    expect.tick_index = 1;
    expect.time = s.tick;
    assert_eq!(next, expect);
}

#[test]
fn camera_command_is_clamped_like_limit_velocity() {
    let s = static_scenario(2.0);
    let traj = s.trajectory().unwrap();
    let world = WorldState::initial(&s).unwrap();
    let far = CameraDecision::new(Vector3::new(0.3, -0.25, 0.55), -0.45, 0.8);
    let commands = Commands {
        robot: RobotCommand::TrackCamera,
        camera_target: Some(far),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (next, _) = step(&world, &commands, &s, Some(&traj), &mut rng).unwrap();
    let expect = limit_velocity(&world.camera, &far, s.tick, &s.optimizer);
    assert_eq!(next.camera, expect);
    assert!((next.camera.position - world.camera.position).norm() <= 0.01 * s.tick + 1e-12);
}

#[test]
fn simulation_ends_cleanly_where_trajectory_stops() {
    let s = static_scenario(1.0);
    let out = harness::run(&s, 0).unwrap();
    assert_eq!(out.rows.len() as u64, s.total_ticks());
    assert!(out.violation().is_none());
}

fn pin_pull_at_five(debounce: u32) -> (f64, Vec<(f64, Mode, Led)>) {
    let mut s = static_scenario(6.0);
    s.mode.debounce_ticks = debounce;
    s.events.push(TimedEvent::new(5.0, EventKind::PullPin));
    let out = harness::run(&s, 0).unwrap();
    let trace = out.rows.iter().map(|r| (r.time, r.mode, r.signals.led)).collect();
    (s.tick, trace)
}

#[test]
fn pin_pull_event_reaches_natural_ready() {
    let (tick, trace) = pin_pull_at_five(1);
    let first = trace.iter().find(|r| r.1 == Mode::NaturalReady).expect("reaches NaturalReady");
    assert!((first.0 - 5.0).abs() < 1e-9, "entered at {}", first.0);
    assert_eq!(first.2, Led::FlashBlue);
    assert!(trace.iter().filter(|r| r.0 < 5.0 - tick / 2.0).all(|r| r.1 == Mode::Idle));

    // The default three-tick debounce delays entry by two more ticks.
    let (tick, trace) = pin_pull_at_five(3);
    let first = trace.iter().find(|r| r.1 == Mode::NaturalReady).unwrap();
    assert!((first.0 - (5.0 + 2.0 * tick)).abs() < 1e-9, "entered at {}", first.0);
}

#[test]
fn builtins_replay_across_seeds() {
    for s in builtin_scenarios() {
        for seed in [0, 17] {
            let out = harness::run(&s, seed).unwrap();
            assert_eq!(harness::replay_str(&out.to_jsonl()).unwrap(), out.summary, "{} seed {seed}", s.name);
            assert_eq!(out.summary.constraint_violations, 0);
            assert!((0.0..=1.0).contains(&out.summary.tracking_uptime));
        }
    }
}
