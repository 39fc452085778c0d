//! Phase-based gait generator.
//!
//! A cycle is parameterized by a phase in `[0, 2pi)` that advances at the
//! commanded stepping frequency. Each leg owns a list of stance windows; the
//! leg is in stance whenever the phase falls inside one of them.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NUM_LEGS;

/// Stepping frequency used when gait modulation is disabled.
pub const FIXED_STEPPING_FREQUENCY: f64 = 1.66;

/// Snap distance (in cycles) used to absorb floating point drift when the
/// accumulated phase lands on a cycle boundary.
const TURN_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitName {
    Pronking,
    Bounding,
    Crawling,
    Pacing,
    Trotting,
    FlyTrotting,
    Standing,
    Custom,
}

impl GaitName {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name.replace('-', "_").as_str() {
            "pronking" => GaitName::Pronking,
            "bounding" => GaitName::Bounding,
            "crawling" => GaitName::Crawling,
            "pacing" => GaitName::Pacing,
            "trotting" => GaitName::Trotting,
            "fly_trotting" => GaitName::FlyTrotting,
            "standing" => GaitName::Standing,
            "custom" => GaitName::Custom,
            _ => return None,
        })
    }
}

/// Half-open phase interval `[start, end)`, `0 <= start < end <= 2pi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", try_from = "[f64; 2]")]
pub struct StanceWindow {
    pub start: f64,
    pub end: f64,
}

impl StanceWindow {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && 0.0 <= start && start < end && end <= TAU) {
            return Err(Error::config(
                "gait.stance_windows",
                format!("window [{start}, {end}) must satisfy 0 <= start < end <= 2pi"),
            ));
        }
        Ok(StanceWindow { start, end })
    }

    fn fractions(a: f64, b: f64) -> Self {
        StanceWindow {
            start: a * TAU,
            end: b * TAU,
        }
    }

    pub fn contains(&self, phase: f64) -> bool {
        phase >= self.start && phase < self.end
    }

    pub fn width(&self) -> f64 {
        self.end - self.start
    }
}

impl From<StanceWindow> for [f64; 2] {
    fn from(w: StanceWindow) -> Self {
        [w.start, w.end]
    }
}

impl TryFrom<[f64; 2]> for StanceWindow {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        StanceWindow::new(v[0], v[1])
    }
}

/// A contact sequence plus its default timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitConfig {
    pub name: GaitName,
    pub stance_windows: [Vec<StanceWindow>; NUM_LEGS],
    /// Hz.
    pub default_frequency: f64,
    /// `[min, max]` Hz; commanded frequencies are clamped into it.
    pub frequency_bounds: [f64; 2],
}

/// A circular interval `[start, start + len)` on the phase circle.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Arc {
    start: f64,
    len: f64,
}

impl GaitConfig {
    pub fn preset(name: GaitName) -> Self {
        let w = StanceWindow::fractions;
        let same = |win: Vec<StanceWindow>| -> [Vec<StanceWindow>; NUM_LEGS] {
            std::array::from_fn(|_| win.clone())
        };
        // Leg order FR, FL, RR, RL.
        let stance_windows = match name {
            GaitName::Pronking | GaitName::Custom => same(vec![w(0.0, 0.5)]),
            GaitName::Bounding => [
                vec![w(0.0, 0.35)],
                vec![w(0.0, 0.35)],
                vec![w(0.45, 0.8)],
                vec![w(0.45, 0.8)],
            ],
            GaitName::Trotting => [
                vec![w(0.0, 0.5)],
                vec![w(0.5, 1.0)],
                vec![w(0.5, 1.0)],
                vec![w(0.0, 0.5)],
            ],
            GaitName::FlyTrotting => [
                vec![w(0.0, 0.4)],
                vec![w(0.5, 0.9)],
                vec![w(0.5, 0.9)],
                vec![w(0.0, 0.4)],
            ],
            GaitName::Pacing => [
                vec![w(0.0, 0.5)],
                vec![w(0.5, 1.0)],
                vec![w(0.0, 0.5)],
                vec![w(0.5, 1.0)],
            ],
            // One leg swings per quarter cycle: FL, RR, FR, RL.
            GaitName::Crawling => [
                vec![w(0.0, 0.5), w(0.75, 1.0)],
                vec![w(0.25, 1.0)],
                vec![w(0.0, 0.25), w(0.5, 1.0)],
                vec![w(0.0, 0.75)],
            ],
            GaitName::Standing => same(vec![w(0.0, 1.0)]),
        };
        let default_frequency = match name {
            GaitName::Crawling => 1.0,
            GaitName::Trotting | GaitName::Pacing | GaitName::FlyTrotting => 2.5,
            _ => 2.0,
        };
        GaitConfig {
            name,
            stance_windows,
            default_frequency,
            frequency_bounds: [1.0, 4.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.frequency_bounds;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config(
                "gait.frequency_bounds",
                "must satisfy 0 < min <= max",
            ));
        }
        if !(self.default_frequency >= lo && self.default_frequency <= hi) {
            return Err(Error::config(
                "gait.default_frequency",
                "must lie within frequency_bounds",
            ));
        }
        for (leg, windows) in self.stance_windows.iter().enumerate() {
            let mut sorted = windows.clone();
            for w in &sorted {
                StanceWindow::new(w.start, w.end)
                    .map_err(|_| Error::config(format!("gait.stance_windows[{leg}]"), "window out of range"))?;
            }
            sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
            if sorted.windows(2).any(|p| p[1].start < p[0].end) {
                return Err(Error::config(
                    format!("gait.stance_windows[{leg}]"),
                    "windows overlap",
                ));
            }
        }
        Ok(())
    }

    pub fn clamp_frequency(&self, f: f64) -> f64 {
        f.clamp(self.frequency_bounds[0], self.frequency_bounds[1])
    }

    /// Advance the phase by `2pi f dt` with `f` clamped to the bounds.
    pub fn advance_phase(&self, state: &PhaseState, f_step: f64, dt: f64) -> PhaseState {
        debug_assert!(dt > 0.0);
        let f = self.clamp_frequency(f_step);
        let mut turns = state.turns + f * dt;
        let nearest = turns.round();
        if (turns - nearest).abs() < TURN_SNAP {
            turns = nearest;
        }
        PhaseState {
            turns,
            stepping_frequency: f,
        }
    }

    pub fn is_stance(&self, leg: usize, phase: f64) -> bool {
        self.stance_windows[leg].iter().any(|w| w.contains(phase))
    }

    /// Desired contact state of every leg at `phase`.
    pub fn desired_contact_state(&self, phase: f64) -> [bool; NUM_LEGS] {
        std::array::from_fn(|leg| self.is_stance(leg, phase))
    }

    /// Stance windows of a leg merged across the `2pi -> 0` seam.
    fn stance_arcs(&self, leg: usize) -> Vec<Arc> {
        let mut ws = self.stance_windows[leg].clone();
        ws.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut arcs: Vec<Arc> = Vec::with_capacity(ws.len());
        for w in ws {
            match arcs.last_mut() {
                Some(last) if (last.start + last.len - w.start).abs() < 1e-12 => {
                    last.len += w.width();
                }
                _ => arcs.push(Arc {
                    start: w.start,
                    len: w.width(),
                }),
            }
        }
        if arcs.len() > 1 {
            let first = arcs[0];
            let last = *arcs.last().unwrap();
            if first.start.abs() < 1e-12 && (last.start + last.len - TAU).abs() < 1e-12 {
                arcs.pop();
                arcs[0] = Arc {
                    start: last.start,
                    len: last.len + first.len,
                };
            }
        }
        arcs
    }

    /// Swing intervals of a leg: the circular complement of its stance arcs.
    fn swing_arcs(&self, leg: usize) -> Vec<Arc> {
        let stance = self.stance_arcs(leg);
        if stance.is_empty() {
            return vec![Arc { start: 0.0, len: TAU }];
        }
        let mut out = Vec::with_capacity(stance.len());
        for (i, s) in stance.iter().enumerate() {
            let next = stance[(i + 1) % stance.len()];
            let end = s.start + s.len;
            let len = (next.start - end).rem_euclid(TAU);
            if len > 1e-12 {
                out.push(Arc {
                    start: end.rem_euclid(TAU),
                    len,
                });
            }
        }
        out
    }

    /// Fraction of the current swing interval elapsed: 0 at lift-off and
    /// approaching 1 at touchdown.
    pub fn swing_progress(&self, phase: f64, leg: usize) -> Result<f64> {
        if self.is_stance(leg, phase) {
            return Err(Error::NotInSwing { leg, phase });
        }
        for arc in self.swing_arcs(leg) {
            let offset = (phase - arc.start).rem_euclid(TAU);
            if offset < arc.len {
                return Ok((offset / arc.len).clamp(0.0, 1.0));
            }
        }
        Err(Error::NotInSwing { leg, phase })
    }

    /// Fraction of the current stance interval elapsed, `None` in swing.
    pub fn stance_progress(&self, phase: f64, leg: usize) -> Option<f64> {
        self.stance_arcs(leg).into_iter().find_map(|arc| {
            let offset = (phase - arc.start).rem_euclid(TAU);
            (offset < arc.len).then(|| (offset / arc.len).clamp(0.0, 1.0))
        })
    }

    /// Duration (s) of the first stance window starting at or after `phase`.
    pub fn stance_duration_after(&self, phase: f64, f_step: f64, leg: usize) -> f64 {
        let arcs = self.stance_arcs(leg);
        let next = arcs
            .iter()
            .min_by(|a, b| {
                let da = (a.start - phase).rem_euclid(TAU);
                let db = (b.start - phase).rem_euclid(TAU);
                da.total_cmp(&db)
            })
            .map(|a| a.len)
            .unwrap_or(0.0);
        (next / TAU) / f_step
    }

    /// Expected stance duration (s) of a leg at stepping frequency `f_step`,
    /// using the leg's next stance window from the cycle start.
    pub fn estimate_stance_duration(&self, f_step: f64, leg: usize) -> f64 {
        self.stance_duration_after(0.0, f_step, leg)
    }

    /// Phase at which the leg's swing starts for the swing arc containing
    /// `phase`, if the leg is in swing.
    pub fn swing_start(&self, phase: f64, leg: usize) -> Option<f64> {
        if self.is_stance(leg, phase) {
            return None;
        }
        self.swing_arcs(leg)
            .into_iter()
            .find(|arc| (phase - arc.start).rem_euclid(TAU) < arc.len)
            .map(|arc| arc.start)
    }
}

/// Phase variable. Stored as unwrapped cycles so the cycle count is exact.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseState {
    turns: f64,
    /// Last applied (clamped) stepping frequency, Hz.
    pub stepping_frequency: f64,
}

impl PhaseState {
    pub fn new(stepping_frequency: f64) -> Self {
        PhaseState {
            turns: 0.0,
            stepping_frequency,
        }
    }

    /// Phase in `[0, 2pi)`.
    pub fn phase(&self) -> f64 {
        let p = self.turns.fract() * TAU;
        if p >= TAU {
            0.0
        } else {
            p
        }
    }

    pub fn cycle_count(&self) -> u64 {
        self.turns.floor() as u64
    }

    /// Total elapsed phase in cycles.
    pub fn turns(&self) -> f64 {
        self.turns
    }
}

impl Default for GaitConfig {
    fn default() -> Self {
        GaitConfig::preset(GaitName::Pronking)
    }
}
