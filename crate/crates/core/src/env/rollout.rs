//! Episode rollouts, sequential and batched.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EnvSetup, JumpingEnv, Policy, RewardTerms, TerminationReason};
use crate::error::{Error, Result};
use crate::sim::TickLog;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeLog {
    pub ticks: Vec<TickLog>,
    /// Raw policy outputs, one per step.
    pub actions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub index: usize,
    pub seed: u64,
    pub total_return: f64,
    /// Horizontal distance between start and end position (m).
    pub displacement: f64,
    pub forward_displacement: f64,
    pub cycles_completed: u32,
    pub flight_cycles: u32,
    pub steps: usize,
    pub termination: TerminationReason,
    /// Mean of each unweighted term over the episode's steps.
    pub term_means: RewardTerms,
    /// Completed per-cycle reward totals.
    pub cycle_rewards: Vec<f64>,
    #[serde(skip)]
    pub log: Option<EpisodeLog>,
}

/// Run one episode to completion. Divergence ends the episode with
/// [`TerminationReason::Diverged`] instead of an error.
pub fn run_episode(
    env: &mut JumpingEnv,
    policy: &mut dyn Policy,
    seed: u64,
    index: usize,
    keep_log: bool,
) -> Result<EpisodeResult> {
    let mut obs = env.reset(seed)?;
    policy.reset();
    let mut log = keep_log.then(EpisodeLog::default);
    let mut total_return = 0.0;
    let mut sums = [0.0; 9];
    let termination = loop {
        let raw = policy.act(&obs, env.gait())?;
        if let Some(l) = log.as_mut() {
            l.actions.push(raw.clone());
        }
        let out = match env.step(&raw) {
            Ok(out) => out,
            Err(Error::SimDiverged { time, reason }) => {
                log::warn!("episode {index} diverged at t = {time:.3} s: {reason}");
                break TerminationReason::Diverged;
            }
            Err(e) => return Err(e),
        };
        total_return += out.reward.total;
        for (s, v) in sums.iter_mut().zip(out.reward.raw.to_array()) {
            *s += v;
        }
        if let Some(l) = log.as_mut() {
            l.ticks.extend(out.info.logs);
        }
        obs = out.observation;
        if let Some(reason) = out.info.termination {
            break reason;
        }
    };
    let ep = env.episode();
    let steps = ep.steps.max(1) as f64;
    let delta: Vector3<f64> = env.sim().state.base.position - ep.start_position;
    Ok(EpisodeResult {
        index,
        seed,
        total_return,
        displacement: delta.xy().norm(),
        forward_displacement: delta.x,
        cycles_completed: ep.cycles_completed,
        flight_cycles: ep.flight_cycles,
        steps: ep.steps,
        termination,
        term_means: RewardTerms::from_array(sums.map(|s| s / steps)),
        cycle_rewards: ep.accumulator.completed().to_vec(),
        log,
    })
}

/// Seed of episode `index` in a batch: independent of the batch size.
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub episodes: Vec<EpisodeResult>,
    pub wall_clock_s: f64,
    pub threads: usize,
}

impl BatchReport {
    pub fn any_diverged(&self) -> bool {
        self.episodes
            .iter()
            .any(|e| e.termination == TerminationReason::Diverged)
    }
}

/// Run `n_envs` independent episodes in parallel. Episode `i` uses
/// `derive_seed(seed, i)` and a fresh policy from `make_policy(i)`.
pub fn batch_rollout<F>(setup: &EnvSetup, n_envs: usize, seed: u64, make_policy: F, keep_logs: bool) -> Result<BatchReport>
where
    F: Fn(usize) -> Result<Box<dyn Policy>> + Sync,
{
    if n_envs == 0 {
        return Err(Error::config("episodes", "must be at least 1"));
    }
    setup.validate()?;
    let start = Instant::now();
    let episodes = (0..n_envs)
        .into_par_iter()
        .map(|i| {
            let mut env = JumpingEnv::new(setup.clone())?;
            let mut policy = make_policy(i)?;
            run_episode(&mut env, policy.as_mut(), derive_seed(seed, i), i, keep_logs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchReport {
        episodes,
        wall_clock_s: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    })
}
