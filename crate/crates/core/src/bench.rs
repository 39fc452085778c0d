//! Closed-form versus QP ground reaction force benchmark.
//!
//! Instances are random stance configurations: 1 to 4 stance legs, feet
//! scattered around the hips, a random base orientation and a random
//! reference acceleration. Only the solve is timed; the dynamics matrices
//! are built beforehand.

use std::time::Instant;

use nalgebra::{DVector, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::qp::solve_grf_qp;
use crate::control::{clip_to_friction_cone, solve_grf_closed_form, SolverWeights};
use crate::dynamics::{build_from_base_feet, rotation_zyx, CentroidalDynamics};
use crate::error::{Error, Result};
use crate::model::{RobotModel, NUM_LEGS};

pub const BENCH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct GrfInstance {
    pub dynamics: CentroidalDynamics,
    pub acc_ref: Vector6<f64>,
}

/// How reference accelerations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    /// Reference reachable by forces well inside the friction cone and force
    /// box, so the constrained optimum is usually unconstrained.
    Interior,
    /// Reference drawn independently of the feasible set; clipping and
    /// active constraints are common.
    Unrestricted,
}

/// Random stance configuration.
pub fn random_instance(model: &RobotModel, kind: InstanceKind, rng: &mut impl Rng) -> GrfInstance {
    let n_stance = rng.random_range(1..=NUM_LEGS);
    let mut mask = [false; NUM_LEGS];
    let mut picked = 0;
    while picked < n_stance {
        let leg = rng.random_range(0..NUM_LEGS);
        if !mask[leg] {
            mask[leg] = true;
            picked += 1;
        }
    }
    let feet: [Vector3<f64>; NUM_LEGS] = std::array::from_fn(|leg| {
        model.shoulder_offset(leg)
            + Vector3::new(
                rng.random_range(-0.08..0.08),
                rng.random_range(-0.04..0.04),
                rng.random_range(-0.35..-0.18),
            )
    });
    let rpy = Vector3::new(
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    );
    let dynamics = build_from_base_feet(model, &rotation_zyx(&rpy), &feet, &mask);
    let acc_ref = match kind {
        InstanceKind::Interior => {
            let k = dynamics.num_stance();
            let lo = model.f_min + 0.2 * (model.f_max - model.f_min);
            let hi = model.f_max - 0.2 * (model.f_max - model.f_min);
            let f = DVector::from_fn(3 * k, |i, _| {
                if i % 3 == 2 {
                    rng.random_range(lo..hi)
                } else {
                    0.0
                }
            });
            let mut f = f;
            for leg in 0..k {
                let fz = f[3 * leg + 2];
                let r = rng.random_range(0.0..0.5) * model.friction_mu * fz;
                let th = rng.random_range(0.0..std::f64::consts::TAU);
                f[3 * leg] = r * th.cos();
                f[3 * leg + 1] = r * th.sin();
            }
            dynamics.acceleration(&f)
        }
        InstanceKind::Unrestricted => Vector6::from_fn(|i, _| {
            let scale = if i < 3 { 40.0 } else { 15.0 };
            rng.random_range(-scale..scale)
        }),
    };
    GrfInstance { dynamics, acc_ref }
}

pub fn generate_instances(model: &RobotModel, kind: InstanceKind, count: usize, seed: u64) -> Vec<GrfInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_instance(model, kind, &mut rng)).collect()
}

/// Closed-form solve followed by per-leg cone clipping.
pub fn closed_form_clipped(model: &RobotModel, weights: &SolverWeights, inst: &GrfInstance) -> (DVector<f64>, bool) {
    let mut f = solve_grf_closed_form(&inst.dynamics, &inst.acc_ref, weights);
    let mut clipped = false;
    for leg in 0..f.len() / 3 {
        let raw = Vector3::new(f[3 * leg], f[3 * leg + 1], f[3 * leg + 2]);
        let c = clip_to_friction_cone(&raw, model.friction_mu, model.f_min, model.f_max);
        clipped |= c.normal_clipped || c.tangential_scaled;
        f.fixed_rows_mut::<3>(3 * leg).copy_from(&c.force);
    }
    (f, clipped)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_us: f64,
    pub median_us: f64,
    pub p99_us: f64,
}

impl TimingStats {
    pub fn from_samples(samples_us: &mut [f64]) -> Self {
        samples_us.sort_by(f64::total_cmp);
        let n = samples_us.len();
        let pick = |q: f64| samples_us[((q * (n - 1) as f64).round() as usize).min(n - 1)];
        TimingStats {
            mean_us: samples_us.iter().sum::<f64>() / n as f64,
            median_us: pick(0.5),
            p99_us: pick(0.99),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTiming {
    pub batch_size: usize,
    /// Per-instance time over each repeat of the batch.
    pub closed_form: TimingStats,
    pub qp: TimingStats,
    /// Median QP time over median closed-form time.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: Option<String>,
    pub instances: usize,
    pub batches: Vec<BatchTiming>,
    /// Instances whose QP optimum has no active constraint.
    pub interior_instances: usize,
    /// Max of `|f_closed - f_qp|_inf / (1 + |f_qp|_inf)` over interior instances.
    pub max_divergence: f64,
    /// Instances where the closed-form forces needed clipping.
    pub clipped_instances: usize,
    pub qp_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub batch_sizes: Vec<usize>,
    pub instances: usize,
    pub seed: u64,
    /// Timed passes over each batch.
    pub repeats: usize,
    pub qp_max_iterations: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            batch_sizes: vec![1, 64, 1024],
            instances: 1024,
            seed: 0,
            repeats: 5,
            qp_max_iterations: 200,
        }
    }
}

fn time_batch(batch: &[&GrfInstance], mut solve: impl FnMut(&GrfInstance)) -> f64 {
    let start = Instant::now();
    for inst in batch {
        solve(inst);
    }
    start.elapsed().as_secs_f64() * 1e6 / batch.len() as f64
}

pub fn run_bench(model: &RobotModel, weights: &SolverWeights, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.instances < 100 {
        return Err(Error::config("instances", "must be at least 100"));
    }
    if cfg.batch_sizes.is_empty() || cfg.batch_sizes.contains(&0) {
        return Err(Error::config("batch_sizes", "must be a non-empty list of positive sizes"));
    }
    let (mu, fmin, fmax) = (model.friction_mu, model.f_min, model.f_max);
    let half = cfg.instances / 2;
    let mut instances = generate_instances(model, InstanceKind::Interior, half, cfg.seed);
    instances.extend(generate_instances(
        model,
        InstanceKind::Unrestricted,
        cfg.instances - half,
        cfg.seed.wrapping_add(1),
    ));

    // Agreement check (untimed).
    let mut interior = 0;
    let mut max_divergence: f64 = 0.0;
    let mut clipped_instances = 0;
    let mut qp_failures = 0;
    for inst in &instances {
        let raw = solve_grf_closed_form(&inst.dynamics, &inst.acc_ref, weights);
        if closed_form_clipped(model, weights, inst).1 {
            clipped_instances += 1;
        }
        match solve_grf_qp(&inst.dynamics, &inst.acc_ref, weights, mu, fmin, fmax, cfg.qp_max_iterations) {
            Ok(sol) if sol.active.is_empty() => {
                interior += 1;
                let d = (&raw - &sol.x).amax() / (1.0 + sol.x.amax());
                max_divergence = max_divergence.max(d);
            }
            Ok(_) => {}
            Err(_) => qp_failures += 1,
        }
    }

    let mut batches = Vec::with_capacity(cfg.batch_sizes.len());
    for &size in &cfg.batch_sizes {
        let batch: Vec<&GrfInstance> = (0..size).map(|i| &instances[i % instances.len()]).collect();
        // Warm-up pass, discarded.
        time_batch(&batch, |inst| {
            std::hint::black_box(closed_form_clipped(model, weights, inst));
        });
        time_batch(&batch, |inst| {
            std::hint::black_box(solve_grf_qp(&inst.dynamics, &inst.acc_ref, weights, mu, fmin, fmax, cfg.qp_max_iterations).ok());
        });
        let mut cf = Vec::with_capacity(cfg.repeats);
        let mut qp = Vec::with_capacity(cfg.repeats);
        for _ in 0..cfg.repeats.max(1) {
            cf.push(time_batch(&batch, |inst| {
                std::hint::black_box(closed_form_clipped(model, weights, inst));
            }));
            qp.push(time_batch(&batch, |inst| {
                std::hint::black_box(
                    solve_grf_qp(&inst.dynamics, &inst.acc_ref, weights, mu, fmin, fmax, cfg.qp_max_iterations).ok(),
                );
            }));
        }
        let closed_form = TimingStats::from_samples(&mut cf);
        let qp = TimingStats::from_samples(&mut qp);
        batches.push(BatchTiming {
            batch_size: size,
            speedup: qp.median_us / closed_form.median_us,
            closed_form,
            qp,
        });
    }

    Ok(BenchReport {
        schema_version: BENCH_SCHEMA_VERSION,
        seed: cfg.seed,
        config_hash: None,
        instances: instances.len(),
        batches,
        interior_instances: interior,
        max_divergence,
        clipped_instances,
        qp_failures,
    })
}

impl BenchReport {
    /// Plain-text table for terminals.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:>8} {:>14} {:>14} {:>12} {:>12} {:>9}\n",
            "batch", "closed med us", "closed p99 us", "qp med us", "qp p99 us", "speedup"
        );
        for b in &self.batches {
            s += &format!(
                "{:>8} {:>14.3} {:>14.3} {:>12.3} {:>12.3} {:>8.2}x\n",
                b.batch_size, b.closed_form.median_us, b.closed_form.p99_us, b.qp.median_us, b.qp.p99_us, b.speedup
            );
        }
        s += &format!(
            "interior instances: {} / {}, max divergence {:.3e}, clipped {}, qp failures {}\n",
            self.interior_instances, self.instances, self.max_divergence, self.clipped_instances, self.qp_failures
        );
        s
    }
}
