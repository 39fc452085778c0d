//! Dense active-set solver for small strictly convex QPs
//!
//! ```text
//! minimize    1/2 x' H x + c' x
//! subject to  G x <= b
//! ```
//!
//! and its use for the constrained ground reaction force problem. Ties in
//! both the adding and dropping rule go to the smallest constraint index
//! (Bland's rule), so the iterate sequence is fully deterministic.
//!
//! The force problem is degenerate at the friction pyramid's apex (five
//! constraints meet when `f_min = 0`), where a primal active-set iteration
//! can cycle; the dual method used here terminates regardless.

use nalgebra::{DMatrix, DVector, Vector6};

use super::stance::normal_equations;
use super::SolverWeights;
use crate::dynamics::CentroidalDynamics;
use crate::error::{Error, Result};

/// Constraints per stance leg: `f_z >= f_min`, `f_z <= f_max`, and the four
/// faces of the friction pyramid.
pub const CONSTRAINTS_PER_LEG: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub g: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Working set at termination, ascending.
    pub active: Vec<usize>,
    /// Lagrange multiplier per constraint (zero when inactive).
    pub multipliers: DVector<f64>,
    pub iterations: usize,
    /// Max of stationarity, primal infeasibility, dual infeasibility and
    /// complementarity violations.
    pub kkt_residual: f64,
}

impl QpProblem {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.c.dot(x)
    }

    /// KKT violation of a primal/dual pair.
    pub fn kkt_residual(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
        let stationarity = (&self.h * x + &self.c + self.g.transpose() * lambda).amax();
        let slack = &self.b - &self.g * x;
        let primal = slack.iter().fold(0.0_f64, |m, &s| m.max(-s));
        let dual = lambda.iter().fold(0.0_f64, |m, &l| m.max(-l));
        let comp = slack
            .iter()
            .zip(lambda.iter())
            .fold(0.0_f64, |m, (&s, &l)| m.max((s * l).abs()));
        stationarity.max(primal).max(dual).max(comp)
    }

    /// Solve with the dual active-set method of Goldfarb and Idnani. It
    /// starts from the unconstrained minimizer and adds violated constraints
    /// one at a time, so it needs no feasible starting point and does not
    /// stall on degenerate vertices.
    pub fn solve(&self, max_iterations: usize) -> Result<QpSolution> {
        let n = self.h.nrows();
        let m = self.g.nrows();
        let h_inv = self
            .h
            .clone()
            .cholesky()
            .ok_or_else(|| Error::QpNumerical("Hessian is not positive definite".into()))?
            .inverse();
        let mut x = -(&h_inv * &self.c);
        let scale = 1.0 + self.b.amax() + x.amax();
        let feas_tol = 1e-12 * scale;
        let zero_tol = 1e-14;

        // Working set and its multipliers, in insertion order.
        let mut active: Vec<usize> = Vec::new();
        let mut u: Vec<f64> = Vec::new();
        let mut iterations = 0;
        let slack = |x: &DVector<f64>, i: usize| self.b[i] - self.g.row(i).dot(&x.transpose());

        loop {
            // Most violated constraint; Bland: ties go to the lowest index.
            let mut violated: Option<(usize, f64)> = None;
            for i in 0..m {
                if active.contains(&i) {
                    continue;
                }
                let s = slack(&x, i);
                if s < -feas_tol && violated.is_none_or(|(_, v)| s < v) {
                    violated = Some((i, s));
                }
            }
            let Some((p, _)) = violated else {
                break;
            };
            let n_plus = -self.g.row(p).transpose();
            let mut u_p = 0.0;
            loop {
                iterations += 1;
                if iterations > max_iterations {
                    return Err(Error::QpIterationLimit {
                        iterations: max_iterations,
                    });
                }
                let q = active.len();
                let hn = &h_inv * &n_plus;
                let (z, r) = if q == 0 {
                    (hn, DVector::zeros(0))
                } else {
                    let mut nmat = DMatrix::zeros(n, q);
                    for (col, &ci) in active.iter().enumerate() {
                        nmat.column_mut(col).copy_from(&(-self.g.row(ci).transpose()));
                    }
                    let w = &h_inv * &nmat;
                    let r = (nmat.transpose() * &w)
                        .lu()
                        .solve(&(w.transpose() * &n_plus))
                        .ok_or_else(|| Error::QpNumerical("dependent working set".into()))?;
                    (hn - &w * &r, r)
                };
                // Largest dual step keeping the working-set multipliers non-negative.
                let mut t1 = f64::INFINITY;
                let mut drop: Option<usize> = None;
                for j in 0..q {
                    if r[j] > zero_tol {
                        let ratio = u[j] / r[j];
                        let better = ratio < t1
                            || (ratio == t1 && drop.is_some_and(|d| active[j] < active[d]));
                        if better {
                            t1 = ratio;
                            drop = Some(j);
                        }
                    }
                }
                let zn = z.dot(&n_plus);
                let t2 = if z.amax() > zero_tol && zn > 0.0 {
                    -slack(&x, p) / zn
                } else {
                    f64::INFINITY
                };
                if t1.is_infinite() && t2.is_infinite() {
                    return Err(Error::QpNumerical("constraints are infeasible".into()));
                }
                let t = t1.min(t2);
                if t2.is_finite() {
                    x += &z * t;
                }
                for j in 0..q {
                    u[j] -= t * r[j];
                }
                u_p += t;
                if t2 <= t1 {
                    active.push(p);
                    u.push(u_p);
                    break;
                }
                let j = drop.expect("finite partial step has a blocking multiplier");
                active.remove(j);
                u.remove(j);
            }
        }

        let mut multipliers = DVector::zeros(m);
        for (&ci, &uj) in active.iter().zip(&u) {
            multipliers[ci] = uj.max(0.0);
        }
        active.sort_unstable();
        let kkt_residual = self.kkt_residual(&x, &multipliers);
        Ok(QpSolution {
            x,
            active,
            multipliers,
            iterations,
            kkt_residual,
        })
    }
}

/// The constrained force problem as a QP over the stance-leg forces.
pub fn grf_problem(
    dynamics: &CentroidalDynamics,
    acc_ref: &Vector6<f64>,
    weights: &SolverWeights,
    mu: f64,
    f_min: f64,
    f_max: f64,
) -> QpProblem {
    let n = dynamics.a.ncols();
    let k = n / 3;
    let (normal, rhs) = normal_equations(dynamics, acc_ref, weights);
    let mut g = DMatrix::zeros(CONSTRAINTS_PER_LEG * k, n);
    let mut b = DVector::zeros(CONSTRAINTS_PER_LEG * k);
    for leg in 0..k {
        let r = CONSTRAINTS_PER_LEG * leg;
        let (x, y, z) = (3 * leg, 3 * leg + 1, 3 * leg + 2);
        g[(r, z)] = -1.0;
        b[r] = -f_min;
        g[(r + 1, z)] = 1.0;
        b[r + 1] = f_max;
        g[(r + 2, x)] = 1.0;
        g[(r + 2, z)] = -mu;
        g[(r + 3, x)] = -1.0;
        g[(r + 3, z)] = -mu;
        g[(r + 4, y)] = 1.0;
        g[(r + 4, z)] = -mu;
        g[(r + 5, y)] = -1.0;
        g[(r + 5, z)] = -mu;
    }
    QpProblem {
        h: normal * 2.0,
        c: rhs * -2.0,
        g,
        b,
    }
}

/// Squared-norm objective `|A f + g - acc_ref|_U^2 + |f|_V^2`.
pub fn grf_objective(
    dynamics: &CentroidalDynamics,
    acc_ref: &Vector6<f64>,
    weights: &SolverWeights,
    f: &DVector<f64>,
) -> f64 {
    let e = dynamics.acceleration(f) - acc_ref;
    let mut val = e.dot(&(weights.u * e));
    for leg in 0..f.len() / 3 {
        let fl = f.fixed_rows::<3>(3 * leg);
        val += fl.dot(&(weights.v_leg * fl));
    }
    val
}

/// Optimal stance forces under the box and friction-pyramid constraints.
pub fn solve_grf_qp(
    dynamics: &CentroidalDynamics,
    acc_ref: &Vector6<f64>,
    weights: &SolverWeights,
    mu: f64,
    f_min: f64,
    f_max: f64,
    max_iterations: usize,
) -> Result<QpSolution> {
    grf_problem(dynamics, acc_ref, weights, mu, f_min, f_max).solve(max_iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn textbook_problem() {
        // min (x1-1)^2 + (x2-2.5)^2 s.t. the Nocedal & Wright example 16.3
        // constraints; optimum (1.4, 1.7).
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0]));
        let c = DVector::from_vec(vec![-2.0, -5.0]);
        let g = DMatrix::from_row_slice(5, 2, &[
            -1.0, 2.0, //
            1.0, 2.0, //
            1.0, -2.0, //
            -1.0, 0.0, //
            0.0, -1.0,
        ]);
        let b = DVector::from_vec(vec![2.0, 6.0, 2.0, 0.0, 0.0]);
        let qp = QpProblem { h, c, g, b };
        let sol = qp.solve(50).unwrap();
        assert_abs_diff_eq!(sol.x, DVector::from_vec(vec![1.4, 1.7]), epsilon = 1e-12);
        assert_eq!(sol.active, vec![0]);
        assert!(sol.kkt_residual < 1e-10);
    }

    #[test]
    fn unconstrained_interior() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let c = DVector::from_vec(vec![1.0, 2.0]);
        let g = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![10.0]);
        let qp = QpProblem { h: h.clone(), c: c.clone(), g, b };
        let sol = qp.solve(10).unwrap();
        let expect = h.lu().solve(&(-c)).unwrap();
        assert_abs_diff_eq!(sol.x, expect, epsilon = 1e-12);
        assert!(sol.active.is_empty());
    }

    #[test]
    fn iteration_limit_is_reported() {
        let qp = QpProblem {
            h: DMatrix::identity(2, 2),
            c: DVector::from_vec(vec![-5.0, -5.0]),
            g: DMatrix::identity(2, 2),
            b: DVector::from_vec(vec![1.0, 1.0]),
        };
        assert!(matches!(
            qp.solve(1),
            Err(Error::QpIterationLimit { iterations: 1 })
        ));
        let sol = qp.solve(10).unwrap();
        assert_abs_diff_eq!(sol.x, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-14);
    }
}
