//! Continuous-jumping environment.
//!
//! A policy step clamps the raw action, runs one high-level simulator step,
//! computes the reward on the post-step state and only then checks
//! termination. A cycle boundary (phase wrap) increments the cycle count and
//! resamples the goal; the episode ends after `num_cycles` cycles, or early
//! when the base is too low or too tilted.

pub mod policy;
pub mod reward;
pub mod rollout;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{ActionBounds, CentroidalAction, ControllerConfig};
use crate::dynamics::yaw_rotation;
use crate::error::{Error, Result};
use crate::gait::GaitConfig;
use crate::model::{RobotModel, NUM_LEGS};
use crate::sim::{SimConfig, Simulation, TickLog};

pub use policy::{HeuristicConfig, HeuristicPolicy, HoldPolicy, Policy, ReplayPolicy};
pub use reward::{compute_reward, CycleAccumulator, RewardBreakdown, RewardConfig, RewardInput, RewardTerms};
pub use rollout::{batch_rollout, derive_seed, run_episode, BatchReport, EpisodeLog, EpisodeResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub reward: RewardConfig,
    pub action_bounds: ActionBounds,
    /// Early termination below this base height (m).
    pub min_height: f64,
    /// Early termination below this upright projection.
    pub min_upright: f64,
    /// Goal distance range ahead of the robot (m).
    pub goal_range: [f64; 2],
    pub num_cycles: u32,
    /// Observe raw phase instead of `(sin, cos)`.
    pub raw_phase_observation: bool,
    /// Include world x, y and yaw in the flat observation.
    pub include_absolute_pose: bool,
    /// Overrides the commanded stepping frequency when set (Hz).
    pub fixed_frequency: Option<f64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            reward: RewardConfig::default(),
            action_bounds: ActionBounds::default(),
            min_height: 0.15,
            min_upright: 0.5,
            goal_range: [0.3, 1.0],
            num_cycles: 10,
            raw_phase_observation: false,
            include_absolute_pose: true,
            fixed_frequency: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.action_bounds.validate()?;
        let [lo, hi] = self.goal_range;
        if !(lo >= 0.0 && lo < hi) {
            return Err(Error::config("env.goal_range", "must satisfy 0 <= min < max"));
        }
        if self.num_cycles == 0 {
            return Err(Error::config("env.num_cycles", "must be at least 1"));
        }
        if let Some(f) = self.fixed_frequency {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::config("env.fixed_frequency", "must be positive"));
            }
        }
        if !(self.reward.clearance_cap >= 0.0 && self.reward.knee_margin >= 0.0) {
            return Err(Error::config("env.reward", "caps and margins must be non-negative"));
        }
        Ok(())
    }
}

/// All the pieces needed to build an environment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnvSetup {
    pub model: RobotModel,
    pub controller: ControllerConfig,
    pub gait: GaitConfig,
    pub sim: SimConfig,
    pub env: EnvConfig,
}

impl EnvSetup {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.controller.validate()?;
        self.gait.validate()?;
        self.sim.validate()?;
        self.env.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    CyclesComplete,
    Height,
    Upright,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub position: Vector3<f64>,
    pub orientation: Vector3<f64>,
    /// Base frame.
    pub linear_velocity: Vector3<f64>,
    /// Base frame.
    pub angular_velocity: Vector3<f64>,
    pub feet_base: [Vector3<f64>; NUM_LEGS],
    /// Raw phase in `[0, 2pi)`.
    pub phase: f64,
    /// Goal offset in the heading frame.
    pub goal: Vector2<f64>,
}

impl Observation {
    pub fn phase_encoding(&self) -> [f64; 2] {
        [self.phase.sin(), self.phase.cos()]
    }

    /// Flat observation vector.
    pub fn to_vec(&self, raw_phase: bool, absolute_pose: bool) -> Vec<f64> {
        let mut v = Vec::with_capacity(32);
        if absolute_pose {
            v.extend_from_slice(self.position.as_slice());
            v.extend_from_slice(self.orientation.as_slice());
        } else {
            v.extend_from_slice(&[self.position.z, self.orientation.x, self.orientation.y]);
        }
        v.extend_from_slice(self.linear_velocity.as_slice());
        v.extend_from_slice(self.angular_velocity.as_slice());
        for f in &self.feet_base {
            v.extend_from_slice(f.as_slice());
        }
        if raw_phase {
            v.push(self.phase);
        } else {
            v.extend_from_slice(&self.phase_encoding());
        }
        v.extend_from_slice(self.goal.as_slice());
        v
    }
}

/// Observation of a simulator state with a world-frame goal.
pub fn observe(sim: &Simulation, goal: &Vector2<f64>) -> Observation {
    let base = &sim.state.base;
    let rot_t = base.rotation().transpose();
    let heading_t = yaw_rotation(base.yaw()).transpose();
    let offset = goal - base.position.xy();
    let goal_ego = heading_t * Vector3::new(offset.x, offset.y, 0.0);
    Observation {
        position: base.position,
        orientation: base.orientation,
        linear_velocity: rot_t * base.linear_velocity,
        angular_velocity: rot_t * base.angular_velocity,
        feet_base: std::array::from_fn(|leg| base.foot_in_base(leg)),
        phase: sim.phase.phase(),
        goal: goal_ego.xy(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub cycles_completed: u32,
    /// World-frame goal.
    pub goal: Vector2<f64>,
    pub accumulator: CycleAccumulator,
    pub done: bool,
    pub termination: Option<TerminationReason>,
    pub steps: usize,
    pub start_position: Vector3<f64>,
    /// Closed cycles that contained at least one all-feet-off tick.
    pub flight_cycles: u32,
    flight_in_cycle: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Action actually applied (clamped, with ablation overlays).
    pub action: CentroidalAction,
    pub action_excess: f64,
    pub cycles_closed: usize,
    pub termination: Option<TerminationReason>,
    pub logs: Vec<TickLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
pub struct JumpingEnv {
    setup: EnvSetup,
    sim: Simulation,
    episode: EpisodeState,
    rng: ChaCha8Rng,
}

impl JumpingEnv {
    pub fn new(setup: EnvSetup) -> Result<Self> {
        setup.validate()?;
        let sim = Simulation::new(&setup.model, setup.controller.clone(), setup.gait.clone(), setup.sim.clone())?;
        let episode = EpisodeState {
            cycles_completed: 0,
            goal: Vector2::zeros(),
            accumulator: CycleAccumulator::default(),
            done: false,
            termination: None,
            steps: 0,
            start_position: sim.state.base.position,
            flight_cycles: 0,
            flight_in_cycle: false,
        };
        let mut env = JumpingEnv {
            setup,
            sim,
            episode,
            rng: ChaCha8Rng::seed_from_u64(0),
        };
        env.reset(0)?;
        Ok(env)
    }

    pub fn setup(&self) -> &EnvSetup {
        &self.setup
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    /// Direct access for tests and scripted scenarios.
    pub fn sim_mut(&mut self) -> &mut Simulation {
        &mut self.sim
    }

    pub fn episode(&self) -> &EpisodeState {
        &self.episode
    }

    pub fn gait(&self) -> &GaitConfig {
        &self.setup.gait
    }

    pub fn observation(&self) -> Observation {
        observe(&self.sim, &self.episode.goal)
    }

    fn sample_goal(&mut self) -> Vector2<f64> {
        let [lo, hi] = self.setup.env.goal_range;
        let d: f64 = self.rng.random_range(lo..hi);
        let base = &self.sim.state.base;
        let yaw = base.yaw();
        base.position.xy() + Vector2::new(yaw.cos(), yaw.sin()) * d
    }

    /// Standing pose, phase zero, fresh goal.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let s = &self.setup;
        self.sim = Simulation::new(&s.model, s.controller.clone(), s.gait.clone(), s.sim.clone())?;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.episode = EpisodeState {
            cycles_completed: 0,
            goal: Vector2::zeros(),
            accumulator: CycleAccumulator::default(),
            done: false,
            termination: None,
            steps: 0,
            start_position: self.sim.state.base.position,
            flight_cycles: 0,
            flight_in_cycle: false,
        };
        self.episode.goal = self.sample_goal();
        Ok(self.observation())
    }

    /// Clamp a raw action and apply the configured overlays.
    pub fn decode_action(&self, raw: &[f64]) -> Result<(CentroidalAction, f64)> {
        let (mut action, excess) = self.setup.env.action_bounds.clamp(raw)?;
        if let Some(f) = self.setup.env.fixed_frequency {
            action.f_step = f;
        }
        if !self.setup.controller.swing_residuals {
            action.swing_residuals = [Vector3::zeros(); NUM_LEGS];
        }
        Ok((action, excess))
    }

    pub fn step(&mut self, raw: &[f64]) -> Result<StepOutcome> {
        if self.episode.done {
            return Err(Error::SteppedAfterDone);
        }
        let (action, excess) = self.decode_action(raw)?;
        let turns_before = self.sim.phase.turns();
        let mut logs = Vec::with_capacity(self.setup.sim.steps_per_action);
        let mut cycles_closed = 0;
        for _ in 0..self.setup.sim.steps_per_action {
            let cycle = self.sim.phase.cycle_count();
            match self.sim.advance_tick(&action) {
                Ok(log) => logs.push(log),
                Err(e) => {
                    self.episode.done = true;
                    self.episode.termination = Some(TerminationReason::Diverged);
                    return Err(e);
                }
            }
            if self.sim.state.in_flight() {
                self.episode.flight_in_cycle = true;
            }
            for _ in cycle..self.sim.phase.cycle_count() {
                self.close_cycle();
                cycles_closed += 1;
            }
        }
        self.episode.steps += 1;

        let f_applied = self.setup.gait.clamp_frequency(action.f_step);
        let normalization = f_applied * self.setup.sim.policy_dt();
        let fold = self
            .setup
            .model
            .joint_limits
            .knee_fold_limit(self.setup.model.knee_branch);
        let state = &self.sim.state;
        let input = RewardInput {
            state: &state.base,
            contacts: self.sim.actual_contacts(),
            desired: state.desired,
            foot_velocities: &state.foot_velocities,
            knee_angles: std::array::from_fn(|leg| state.joints.angles[leg].z),
            knee_fold_limit: fold,
            ground_height: self.setup.sim.ground_height,
            f_step: f_applied,
            goal: self.episode.goal,
            action_excess: excess,
            normalization,
        };
        let reward = compute_reward(&self.setup.env.reward, &input);
        self.episode
            .accumulator
            .add(turns_before, self.sim.phase.turns(), reward.total);

        // Termination is checked after the reward.
        let env = &self.setup.env;
        let base = &self.sim.state.base;
        let termination = if base.position.z - self.setup.sim.ground_height < env.min_height {
            Some(TerminationReason::Height)
        } else if base.upright() < env.min_upright {
            Some(TerminationReason::Upright)
        } else if self.episode.cycles_completed >= env.num_cycles {
            Some(TerminationReason::CyclesComplete)
        } else {
            None
        };
        if termination.is_some() {
            self.episode.done = true;
            self.episode.termination = termination;
        }
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            done: self.episode.done,
            info: StepInfo {
                action,
                action_excess: excess,
                cycles_closed,
                termination,
                logs,
            },
        })
    }

    fn close_cycle(&mut self) {
        let ep = &mut self.episode;
        ep.cycles_completed += 1;
        if ep.flight_in_cycle {
            ep.flight_cycles += 1;
        }
        ep.flight_in_cycle = false;
        if ep.cycles_completed < self.setup.env.num_cycles {
            self.episode.goal = self.sample_goal();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::forward_kinematics;

    #[test]
    fn reset_is_deterministic_and_standing() {
        let mut env = JumpingEnv::new(EnvSetup::default()).unwrap();
        let a = env.reset(7).unwrap();
        let b = env.reset(7).unwrap();
        assert_eq!(a, b);
        let c = env.reset(8).unwrap();
        assert_ne!(a.goal, c.goal);
        let model = &env.setup().model;
        for leg in 0..4 {
            let fk = forward_kinematics(model, leg, &model.nominal_joint_angles());
            assert!((a.feet_base[leg] - fk).norm() < 1e-12);
        }
        assert!(a.goal.x >= 0.3 && a.goal.x < 1.0 && a.goal.y.abs() < 1e-12);
        assert_eq!(a.phase, 0.0);
    }

    #[test]
    fn action_at_bounds_has_no_excess() {
        let env = JumpingEnv::new(EnvSetup::default()).unwrap();
        let bounds = env.setup().env.action_bounds.as_box();
        let lo: Vec<f64> = bounds.iter().map(|b| b[0]).collect();
        let hi: Vec<f64> = bounds.iter().map(|b| b[1]).collect();
        assert_eq!(env.decode_action(&lo).unwrap().1, 0.0);
        assert_eq!(env.decode_action(&hi).unwrap().1, 0.0);
        let mut over = hi.clone();
        over[1] += 4.0;
        assert!((env.decode_action(&over).unwrap().1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn low_base_terminates_after_reward() {
        let mut env = JumpingEnv::new(EnvSetup::default()).unwrap();
        env.reset(1).unwrap();
        env.sim_mut().state.base.position.z = 0.10;
        let out = env.step(&CentroidalAction::hold(2.0).to_vec()).unwrap();
        assert!(out.done);
        assert_eq!(out.info.termination, Some(TerminationReason::Height));
        assert!(out.reward.raw.base_height < 0.15);
        assert!(matches!(
            env.step(&CentroidalAction::hold(2.0).to_vec()),
            Err(Error::SteppedAfterDone)
        ));
    }

    #[test]
    fn goal_is_egocentric() {
        let mut env = JumpingEnv::new(EnvSetup::default()).unwrap();
        env.reset(3).unwrap();
        let o1 = env.observation();
        let yaw = 0.7;
        let shift = Vector3::new(2.0, -1.0, 0.0);
        let rz = yaw_rotation(yaw);
        let goal_world = env.episode().goal;
        let g = rz * Vector3::new(goal_world.x, goal_world.y, 0.0) + shift;
        let sim = env.sim_mut();
        sim.state.base.orientation.z += yaw;
        sim.state.base.position = rz * sim.state.base.position + shift;
        for f in sim.state.base.foot_positions_world.iter_mut() {
            *f = rz * *f + shift;
        }
        let o2 = observe(env.sim(), &g.xy());
        let a = o1.to_vec(false, false);
        let b = o2.to_vec(false, false);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
