//! The active-set QP against an accelerated projected-gradient oracle.

use cajun_core::bench::{generate_instances, InstanceKind};
use cajun_core::control::qp::{grf_problem, QpProblem};
use cajun_core::control::SolverWeights;
use cajun_core::dynamics::build_centroidal_dynamics;
use cajun_core::model::{RobotModel, NUM_LEGS};
use cajun_core::sim::SimState;
use nalgebra::{DVector, Matrix3, Vector3, Vector6};

/// Halfspaces `n . f <= b` of one leg's feasible set.
fn leg_halfspaces(mu: f64, f_min: f64, f_max: f64) -> Vec<(Vector3<f64>, f64)> {
    vec![
        (Vector3::new(0.0, 0.0, -1.0), -f_min),
        (Vector3::new(0.0, 0.0, 1.0), f_max),
        (Vector3::new(1.0, 0.0, -mu), 0.0),
        (Vector3::new(-1.0, 0.0, -mu), 0.0),
        (Vector3::new(0.0, 1.0, -mu), 0.0),
        (Vector3::new(0.0, -1.0, -mu), 0.0),
    ]
}

/// Exact Euclidean projection onto an intersection of halfspaces in R^3:
/// try every set of at most three active faces and keep the closest
/// candidate that is feasible with non-negative multipliers.
fn project(p: Vector3<f64>, halfspaces: &[(Vector3<f64>, f64)]) -> Vector3<f64> {
    let feasible = |x: &Vector3<f64>| halfspaces.iter().all(|(n, b)| n.dot(x) <= b + 1e-10);
    if feasible(&p) {
        return p;
    }
    let m = halfspaces.len();
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for mask in 1u32..(1 << m) {
        if mask.count_ones() > 3 {
            continue;
        }
        // Unused rows are padded with a decoupled identity block and a zero
        // right-hand side, so their multipliers come out as zero.
        let mut normals = Matrix3::zeros();
        let mut rhs = Vector3::zeros();
        let mut pad = Matrix3::zeros();
        let mut row = 0;
        for (k, (n, b)) in halfspaces.iter().enumerate() {
            if mask & (1 << k) != 0 {
                normals.set_row(row, &n.transpose());
                rhs[row] = *b;
                row += 1;
            }
        }
        for r in row..3 {
            pad[(r, r)] = 1.0;
        }
        let gram = normals * normals.transpose() + pad;
        if gram.determinant().abs() < 1e-12 {
            continue;
        }
        let lambda = gram.try_inverse().unwrap() * (normals * p - rhs);
        if lambda.iter().any(|&l| l < -1e-10) {
            continue;
        }
        let x = p - normals.transpose() * lambda;
        if feasible(&x) {
            let d = (x - p).norm_squared();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, x));
            }
        }
    }
    best.expect("feasible set is non-empty").1
}

/// FISTA with adaptive restart on `0.5 x'Hx + c'x` over per-leg polytopes.
fn projected_gradient(qp: &QpProblem, halfspaces: &[(Vector3<f64>, f64)]) -> DVector<f64> {
    let n = qp.c.len();
    let step = 1.0 / qp.h.clone().symmetric_eigen().eigenvalues.max();
    let proj = |v: &DVector<f64>| {
        let mut out = v.clone();
        for leg in 0..n / 3 {
            let f = project(Vector3::new(v[3 * leg], v[3 * leg + 1], v[3 * leg + 2]), halfspaces);
            out.fixed_rows_mut::<3>(3 * leg).copy_from(&f);
        }
        out
    };
    let mut x = proj(&DVector::zeros(n));
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut restarted = false;
    for _ in 0..200_000 {
        let grad = &qp.h * &y + &qp.c;
        let next = proj(&(&y - grad * step));
        if (&next - &x).amax() <= 1e-12 * (1.0 + x.amax()) {
            return next;
        }
        if qp.objective(&next) > qp.objective(&x) {
            if restarted {
                // A plain gradient step from x no longer descends: x is at
                // the rounding floor.
                return x;
            }
            y = x.clone();
            t = 1.0;
            restarted = true;
            continue;
        }
        restarted = false;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
    }
    x
}

#[test]
fn hover_with_low_force_cap_saturates_every_leg() {
    let mut model = RobotModel::go1();
    model.f_max = 25.0;
    let state = SimState::standing(&model, 0.0).base;
    let dynamics = build_centroidal_dynamics(&model, &state, &[true; NUM_LEGS]);
    let weights = SolverWeights::default();
    let qp = grf_problem(&dynamics, &Vector6::zeros(), &weights, model.friction_mu, model.f_min, model.f_max);
    let sol = qp.solve(200).unwrap();
    assert!(sol.kkt_residual < 1e-8, "kkt {}", sol.kkt_residual);
    for leg in 0..NUM_LEGS {
        assert!((sol.x[3 * leg + 2] - 25.0).abs() < 1e-9);
    }
    let oracle = projected_gradient(&qp, &leg_halfspaces(model.friction_mu, model.f_min, model.f_max));
    assert!((&oracle - &sol.x).amax() < 1e-6, "oracle {oracle} qp {}", sol.x);
    assert!(qp.objective(&sol.x) <= qp.objective(&oracle) + 1e-9);
}

#[test]
fn random_constrained_instances_match_oracle() {
    let model = RobotModel::go1();
    // A heavier force weight keeps the oracle's gradient iteration well
    // conditioned; the problems remain constrained.
    let weights = SolverWeights::default().with_force_weight(1e-2);
    let halfspaces = leg_halfspaces(model.friction_mu, model.f_min, model.f_max);
    let mut active_seen = 0;
    for inst in generate_instances(&model, InstanceKind::Unrestricted, 12, 99) {
        let qp = grf_problem(&inst.dynamics, &inst.acc_ref, &weights, model.friction_mu, model.f_min, model.f_max);
        let sol = qp.solve(200).unwrap();
        assert!(sol.kkt_residual < 1e-8, "kkt {}", sol.kkt_residual);
        active_seen += usize::from(!sol.active.is_empty());
        let oracle = projected_gradient(&qp, &halfspaces);
        let scale = 1.0 + qp.objective(&oracle).abs();
        assert!(qp.objective(&sol.x) <= qp.objective(&oracle) + 1e-9 * scale);
        assert!((&oracle - &sol.x).amax() < 1e-4 * (1.0 + sol.x.amax()), "oracle {oracle} qp {}", sol.x);
    }
    assert!(active_seen >= 6, "only {active_seen} constrained instances");
}
