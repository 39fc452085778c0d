//! The nine-term jumping reward and its per-cycle normalization.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::CentroidalState;
use crate::model::NUM_LEGS;

/// One value per reward term, in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardTerms {
    pub upright: f64,
    pub base_height: f64,
    pub contact_consistency: f64,
    pub foot_slipping: f64,
    pub foot_clearance: f64,
    pub knee_contact: f64,
    pub stepping_frequency: f64,
    pub distance_to_goal: f64,
    pub out_of_bound: f64,
}

impl RewardTerms {
    pub const NAMES: [&'static str; 9] = [
        "upright",
        "base_height",
        "contact_consistency",
        "foot_slipping",
        "foot_clearance",
        "knee_contact",
        "stepping_frequency",
        "distance_to_goal",
        "out_of_bound",
    ];

    pub fn to_array(&self) -> [f64; 9] {
        [
            self.upright,
            self.base_height,
            self.contact_consistency,
            self.foot_slipping,
            self.foot_clearance,
            self.knee_contact,
            self.stepping_frequency,
            self.distance_to_goal,
            self.out_of_bound,
        ]
    }

    pub fn from_array(a: [f64; 9]) -> Self {
        RewardTerms {
            upright: a[0],
            base_height: a[1],
            contact_consistency: a[2],
            foot_slipping: a[3],
            foot_clearance: a[4],
            knee_contact: a[5],
            stepping_frequency: a[6],
            distance_to_goal: a[7],
            out_of_bound: a[8],
        }
    }

    pub fn default_weights() -> Self {
        RewardTerms::from_array([0.02, 0.01, 0.008, 0.032, 0.008, 0.064, 0.008, 0.016, 0.01])
    }

    /// Rewarded behaviour enters with `+1`, penalized behaviour with `-1`.
    pub fn default_signs() -> Self {
        RewardTerms::from_array([1.0, 1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, -1.0])
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let a = self.to_array();
        let b = other.to_array();
        RewardTerms::from_array(std::array::from_fn(|i| f(a[i], b[i])))
    }

    pub fn sum(&self) -> f64 {
        self.to_array().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub weights: RewardTerms,
    pub signs: RewardTerms,
    /// Cap on each swing foot's height in the clearance term (m).
    pub clearance_cap: f64,
    /// Knee within this distance of its fold limit counts as knee contact (rad).
    pub knee_margin: f64,
    /// ... but only while the foot is below this height (m).
    pub knee_height: f64,
    pub alive_bonus: bool,
    pub alive_bonus_value: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            weights: RewardTerms::default_weights(),
            signs: RewardTerms::default_signs(),
            clearance_cap: 0.02,
            knee_margin: 0.05,
            knee_height: 0.02,
            alive_bonus: false,
            alive_bonus_value: 0.02,
        }
    }
}

/// Everything the reward looks at after a policy step.
#[derive(Debug, Clone, Copy)]
pub struct RewardInput<'a> {
    pub state: &'a CentroidalState,
    /// Actual contacts.
    pub contacts: [bool; NUM_LEGS],
    /// Contacts the gait asked for.
    pub desired: [bool; NUM_LEGS],
    pub foot_velocities: &'a [Vector3<f64>; NUM_LEGS],
    /// Commanded knee angles.
    pub knee_angles: [f64; NUM_LEGS],
    pub knee_fold_limit: f64,
    pub ground_height: f64,
    /// Applied stepping frequency (Hz).
    pub f_step: f64,
    pub goal: Vector2<f64>,
    pub action_excess: f64,
    /// `f_step * dt_high`, the fraction of a cycle covered by the step.
    pub normalization: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Unweighted, unnormalized terms.
    pub raw: RewardTerms,
    /// `weight * sign * raw * normalization` per term.
    pub weighted: RewardTerms,
    pub normalization: f64,
    pub alive: f64,
    pub total: f64,
}

pub fn compute_reward(cfg: &RewardConfig, input: &RewardInput<'_>) -> RewardBreakdown {
    let state = input.state;
    let mut raw = RewardTerms {
        upright: state.upright(),
        base_height: state.position.z,
        stepping_frequency: 1.5 - input.f_step.clamp(1.5, 4.0),
        distance_to_goal: (state.position.xy() - input.goal).norm(),
        out_of_bound: input.action_excess,
        ..Default::default()
    };
    for leg in 0..NUM_LEGS {
        let desired = input.desired[leg];
        let foot_z = state.foot_positions_world[leg].z - input.ground_height;
        if input.contacts[leg] == desired {
            raw.contact_consistency += 1.0;
        }
        if desired {
            raw.foot_slipping += input.foot_velocities[leg].xy().norm();
        } else {
            raw.foot_clearance += foot_z.min(cfg.clearance_cap);
        }
        if (input.knee_angles[leg] - input.knee_fold_limit).abs() <= cfg.knee_margin && foot_z < cfg.knee_height {
            raw.knee_contact += 1.0;
        }
    }
    let n = input.normalization;
    let weighted = raw
        .zip_with(&cfg.weights, |r, w| r * w)
        .zip_with(&cfg.signs, |r, s| r * s * n);
    let alive = if cfg.alive_bonus { cfg.alive_bonus_value * n } else { 0.0 };
    RewardBreakdown {
        raw,
        weighted,
        normalization: n,
        alive,
        total: weighted.sum() + alive,
    }
}

/// Sums normalized step rewards per gait cycle. A step that straddles a
/// cycle boundary is split in proportion to the phase covered on each side.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleAccumulator {
    current: f64,
    completed: Vec<f64>,
}

impl CycleAccumulator {
    /// Add a step's total reward, with the phase (in cycles) before and
    /// after the step. Returns the number of cycles closed by this step.
    pub fn add(&mut self, turns_before: f64, turns_after: f64, reward: f64) -> usize {
        let span = turns_after - turns_before;
        if span <= 0.0 {
            self.current += reward;
            return 0;
        }
        let mut closed = 0;
        let mut t = turns_before;
        loop {
            let boundary = t.floor() + 1.0;
            if boundary > turns_after {
                self.current += reward * (turns_after - t) / span;
                break;
            }
            self.current += reward * (boundary - t) / span;
            self.completed.push(std::mem::take(&mut self.current));
            closed += 1;
            t = boundary;
            if t >= turns_after {
                break;
            }
        }
        closed
    }

    /// Totals of every closed cycle, in order.
    pub fn completed(&self) -> &[f64] {
        &self.completed
    }

    /// Partial total of the open cycle.
    pub fn current(&self) -> f64 {
        self.current
    }
}
