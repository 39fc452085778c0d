//! Closed-loop simulator and environment behaviour.

use cajun_core::control::{CentroidalAction, ControllerConfig};
use cajun_core::env::{
    batch_rollout, EnvSetup, HeuristicPolicy, HoldPolicy, JumpingEnv, Policy, TerminationReason,
};
use cajun_core::gait::{GaitConfig, GaitName, PhaseState};
use cajun_core::model::{RobotModel, NUM_LEGS};
use cajun_core::sim::{SimConfig, Simulation};

fn standing(config: SimConfig) -> Simulation {
    Simulation::new(&RobotModel::go1(), ControllerConfig::default(), GaitConfig::preset(GaitName::Standing), config).unwrap()
}

#[test]
fn hold_command_keeps_height_for_two_seconds() {
    let mut sim = standing(SimConfig::default());
    let z0 = sim.state.base.position.z;
    let hold = HoldPolicy {
        f_step: 2.0,
        height: z0,
        height_gain: 5.0,
    };
    let mut drift = 0.0_f64;
    for _ in 0..200 {
        let action = hold.command(sim.state.base.position.z);
        sim.step_high_level(&action).unwrap();
        drift = drift.max((sim.state.base.position.z - z0).abs());
    }
    assert!((sim.state.time - 2.0).abs() < 1e-9);
    assert!(drift < 1e-3, "drift {drift}");
}

#[test]
fn flight_conserves_horizontal_momentum() {
    let gait = GaitConfig::preset(GaitName::Pronking);
    let mut sim = Simulation::new(&RobotModel::go1(), ControllerConfig::default(), gait.clone(), SimConfig::default()).unwrap();
    // Mid-swing for every leg, one metre above the ground.
    sim.phase = gait.advance_phase(&PhaseState::new(2.0), 2.0, 0.25);
    sim.state.base.position.z += 1.0;
    sim.state.anchors = [None; NUM_LEGS];
    sim.state.touching = [false; NUM_LEGS];
    sim.state.base.linear_velocity = nalgebra::Vector3::new(1.3, -0.4, 0.7);
    let g_dt = sim.model.gravity * sim.config.dt;
    let action = CentroidalAction::hold(2.0);
    for _ in 0..100 {
        let before = sim.state.base.linear_velocity;
        let log = sim.advance_tick(&action).unwrap();
        let after = sim.state.base.linear_velocity;
        assert!(log.contacts.iter().all(|c| !c));
        assert!((after.x - before.x).abs() <= 1e-9 && (after.y - before.y).abs() <= 1e-9);
        assert!((after.z - (before.z - g_dt)).abs() <= 1e-12);
    }
}

#[test]
fn identical_inputs_give_bitwise_identical_trajectories() {
    let run = || {
        let mut env = JumpingEnv::new(EnvSetup::default()).unwrap();
        let mut obs = env.reset(42).unwrap();
        let mut policy = HeuristicPolicy::default();
        let mut ticks = Vec::new();
        loop {
            let raw = policy.act(&obs, env.gait()).unwrap();
            let out = env.step(&raw).unwrap();
            ticks.extend(out.info.logs);
            obs = out.observation;
            if out.done {
                break;
            }
        }
        ticks
    };
    assert_eq!(run(), run());
}

#[test]
fn goal_distance_is_uniform_over_resets() {
    let mut env = JumpingEnv::new(EnvSetup::default()).unwrap();
    let n = 10_000;
    let mut u: Vec<f64> = (0..n)
        .map(|seed| {
            env.reset(seed as u64).unwrap();
            let start = env.sim().state.base.position.xy();
            let d = (env.episode().goal - start).norm();
            assert!((0.3..1.0).contains(&d), "distance {d}");
            (d - 0.3) / 0.7
        })
        .collect();
    u.sort_by(f64::total_cmp);
    let ks = u
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - x))
        .fold(0.0_f64, f64::max);
    // Asymptotic Kolmogorov critical value at the 1% level.
    let critical = 1.6276 / (n as f64).sqrt();
    assert!(ks < critical, "KS statistic {ks} >= {critical}");
}

#[test]
fn doubling_the_batch_keeps_existing_episodes() {
    let setup = EnvSetup::default();
    let make = |_| Ok(Box::new(HeuristicPolicy::default()) as Box<dyn Policy>);
    let small = batch_rollout(&setup, 2, 17, make, false).unwrap();
    let large = batch_rollout(&setup, 4, 17, make, false).unwrap();
    assert_eq!(small.episodes[..], large.episodes[..2]);
    assert!(large
        .episodes
        .iter()
        .all(|e| e.termination == TerminationReason::CyclesComplete));
}
