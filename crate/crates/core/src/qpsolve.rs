//! Convex quadratic programs for the relaxed precoding problems.
//!
//! Both the full relaxation and the branch-and-bound subproblems minimize a
//! positive-semidefinite quadratic in the joint variable `z = [x_rf; f]`
//! subject to `R [x_rf; f] <= 0` and `f >= F_FLOOR`. The objective is stored
//! so that its value equals the MSE of the corresponding precoding problem
//! (the data-energy constant is included).
//!
//! The solver is a primal-dual interior-point method with Mehrotra
//! predictor-corrector steps on the inequality system. If the normal-matrix
//! factorization fails, a projected-gradient descent with Armijo line search
//! takes over.

use crate::error::{Error, Result};
use crate::linalg::{RMat, RVec};
use crate::polytope::Polyhedron;

/// Strict lower bound standing in for the open constraint `f > 0`.
pub const F_FLOOR: f64 = 1e-8;
/// Default relative duality-gap tolerance.
pub const DEFAULT_GAP_TOL: f64 = 1e-8;
/// Default feasibility tolerance.
pub const DEFAULT_FEAS_TOL: f64 = 1e-9;
/// Default iteration cap for the interior-point loop.
pub const DEFAULT_MAX_ITER: usize = 100;

/// Geometry of the hull constraints, kept so the fallback can project onto
/// the per-antenna polygons without reverse-engineering `G`.
#[derive(Debug, Clone, Copy)]
pub struct HullShape {
    /// Transmit alphabet cardinality.
    pub alpha_x: usize,
    /// Free antennas in this problem.
    pub antennas: usize,
    /// Apothem of the unit-`f` polygon (`cos(pi/alpha_x)/sqrt(M_full)`).
    pub apothem: f64,
}

/// A convex QP `min z^T Q z + c^T z + constant` over `G z <= h`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    /// PSD quadratic coefficient.
    pub q: RMat,
    /// Linear coefficient.
    pub c: RVec,
    /// Constant making the objective equal to the MSE.
    pub constant: f64,
    /// Inequality matrix (hull rows plus the `f` floor row).
    pub g: RMat,
    /// Inequality right-hand side.
    pub h: RVec,
    /// Hull geometry, absent when no antenna coordinates are free.
    pub hull: Option<HullShape>,
}

/// Termination state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    /// Tolerances met.
    Optimal,
    /// Iteration cap hit; best iterate returned.
    MaxIter,
    /// No feasible point (cannot occur for hull problems, kept for
    /// completeness).
    Infeasible,
}

/// Result of solving a [`QpProblem`].
#[derive(Debug, Clone)]
pub struct QpSolution {
    /// Scaled precoder part `x_rf`.
    pub x_f: RVec,
    /// Scaling factor.
    pub f: f64,
    /// Objective value (the MSE).
    pub objective: f64,
    /// Termination state.
    pub status: QpStatus,
    /// Interior-point (or fallback) iterations used.
    pub iterations: usize,
    /// True when the projected-gradient fallback produced the result.
    pub used_fallback: bool,
}

impl QpProblem {
    /// Problem dimension (stacked precoder coordinates plus the scaling).
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// Objective value at a point, including the constant term.
    pub fn objective(&self, z: &RVec) -> f64 {
        (z.transpose() * &self.q * z)[(0, 0)] + self.c.dot(z) + self.constant
    }

    /// Largest constraint violation at a point.
    pub fn max_violation(&self, z: &RVec) -> f64 {
        (&self.g * z - &self.h).max()
    }
}

/// Assembles the full relaxed MMSE problem in `z = [x_rf; f]`:
/// `x_rf^T H_r^T H_r x_rf - 2 x_rf^T H_r^T s_r + f^2 E{w_r^T w_r} + ||s_r||^2`
/// subject to `R [x_rf; f] <= 0`, `f >= F_FLOOR`.
pub fn assemble_full_qp(
    h_r: &RMat,
    s_r: &RVec,
    noise_energy: f64,
    poly: &Polyhedron,
) -> QpProblem {
    let nx = h_r.ncols();
    let n = nx + 1;
    let gram = h_r.transpose() * h_r;
    let hts = h_r.transpose() * s_r;

    let mut q = RMat::zeros(n, n);
    q.view_mut((0, 0), (nx, nx)).copy_from(&gram);
    q[(nx, nx)] = noise_energy;

    let mut c = RVec::zeros(n);
    c.rows_mut(0, nx).copy_from(&(-2.0 * hts));

    let (g, h) = constraints_from(poly, n);
    QpProblem {
        q,
        c,
        constant: s_r.norm_squared(),
        g,
        h,
        hull: Some(HullShape {
            alpha_x: poly.alpha_x,
            antennas: poly.m,
            apothem: poly.b[0],
        }),
    }
}

/// Assembles the subproblem with a fixed prefix: minimizes
/// `|| H_r' x_rf' - s_r + f' H_fixed x_fixed ||^2 + f'^2 E{w_r^T w_r}`
/// over `R' [x_rf'; f'] <= 0`, `f' >= F_FLOOR`. With an empty prefix this
/// reduces exactly to [`assemble_full_qp`]; with everything fixed
/// (`h_r_free` has no columns) the problem is a quadratic in `f'` alone and
/// `poly` may be `None`.
pub fn assemble_subproblem_qp(
    h_r_free: &RMat,
    h_r_fixed: &RMat,
    x_r_fixed: &RVec,
    s_r: &RVec,
    noise_energy: f64,
    poly: Option<&Polyhedron>,
) -> QpProblem {
    let nx = h_r_free.ncols();
    let n = nx + 1;
    let u = h_r_fixed * x_r_fixed;

    let mut q = RMat::zeros(n, n);
    if nx > 0 {
        let gram = h_r_free.transpose() * h_r_free;
        q.view_mut((0, 0), (nx, nx)).copy_from(&gram);
        let cross = h_r_free.transpose() * &u;
        for i in 0..nx {
            q[(i, nx)] = cross[i];
            q[(nx, i)] = cross[i];
        }
    }
    q[(nx, nx)] = u.norm_squared() + noise_energy;

    let mut c = RVec::zeros(n);
    if nx > 0 {
        c.rows_mut(0, nx).copy_from(&(-2.0 * (h_r_free.transpose() * s_r)));
    }
    c[nx] = -2.0 * s_r.dot(&u);

    let (g, h) = match poly {
        Some(p) if nx > 0 => {
            debug_assert_eq!(p.a.ncols(), nx);
            constraints_from(p, n)
        }
        _ => {
            // Only the scaling floor remains.
            let mut g = RMat::zeros(1, n);
            g[(0, nx)] = -1.0;
            (g, RVec::from_element(1, -F_FLOOR))
        }
    };

    QpProblem {
        q,
        c,
        constant: s_r.norm_squared(),
        g,
        h,
        hull: poly.filter(|_| nx > 0).map(|p| HullShape {
            alpha_x: p.alpha_x,
            antennas: p.m,
            apothem: p.b[0],
        }),
    }
}

fn constraints_from(poly: &Polyhedron, n: usize) -> (RMat, RVec) {
    let rows = poly.r.nrows();
    let mut g = RMat::zeros(rows + 1, n);
    g.view_mut((0, 0), (rows, n)).copy_from(&poly.r);
    g[(rows, n - 1)] = -1.0;
    let mut h = RVec::zeros(rows + 1);
    h[rows] = -F_FLOOR;
    (g, h)
}

/// Solves the QP to the given relative duality gap.
pub fn solve(p: &QpProblem, tol_gap: f64, max_iter: usize) -> Result<QpSolution> {
    match interior_point(p, tol_gap, max_iter) {
        Ok(sol) => Ok(sol),
        Err(_) => projected_gradient(p, tol_gap.max(1e-10)),
    }
}

/// Solves with the default tolerances.
pub fn solve_default(p: &QpProblem) -> Result<QpSolution> {
    solve(p, DEFAULT_GAP_TOL, DEFAULT_MAX_ITER)
}

fn interior_point(p: &QpProblem, tol_gap: f64, max_iter: usize) -> Result<QpSolution> {
    let n = p.dim();
    let m = p.g.nrows();
    let big_p = 2.0 * &p.q;

    // Strictly feasible start: x = 0, f = 1 lies inside every hull problem.
    let mut z = RVec::zeros(n);
    z[n - 1] = 1.0;
    let mut s = &p.h - &p.g * &z;
    if s.min() <= 0.0 {
        // Nudge the scaling until the start is interior.
        for _ in 0..60 {
            z[n - 1] *= 2.0;
            s = &p.h - &p.g * &z;
            if s.min() > 0.0 {
                break;
            }
        }
        if s.min() <= 0.0 {
            return Err(Error::SolverFailure("no interior starting point".into()));
        }
    }
    let mut lambda = RVec::from_element(m, 1.0);

    let c_scale = 1.0 + p.c.amax();
    let h_scale = 1.0 + p.h.amax();
    let mut iterations = 0;

    for iter in 0..max_iter {
        iterations = iter + 1;
        let r_d = &big_p * &z + &p.c + p.g.transpose() * &lambda;
        let r_p = &p.g * &z + &s - &p.h;
        let gap: f64 = s.dot(&lambda);
        let obj = p.objective(&z);

        if r_p.amax() <= DEFAULT_FEAS_TOL * h_scale
            && r_d.amax() <= 1e-7 * c_scale
            && gap <= tol_gap * obj.abs().max(1.0)
        {
            return Ok(QpSolution {
                x_f: z.rows(0, n - 1).into_owned(),
                f: z[n - 1],
                objective: obj,
                status: QpStatus::Optimal,
                iterations,
                used_fallback: false,
            });
        }

        // Normal matrix P + G^T diag(lambda/s) G, with a static regularizer.
        let w: Vec<f64> = (0..m).map(|i| lambda[i] / s[i]).collect();
        let mut normal = big_p.clone();
        for i in 0..m {
            let gi = p.g.row(i);
            let wi = w[i];
            for a in 0..n {
                let ga = gi[a] * wi;
                if ga == 0.0 {
                    continue;
                }
                for b in 0..n {
                    normal[(a, b)] += ga * gi[b];
                }
            }
        }
        let mut chol = None;
        let mut reg = 1e-12;
        while chol.is_none() && reg <= 1e-5 {
            let mut trial = normal.clone();
            for a in 0..n {
                trial[(a, a)] += reg;
            }
            chol = nalgebra::Cholesky::new(trial);
            reg *= 100.0;
        }
        let chol = chol.ok_or_else(|| {
            Error::SolverFailure("normal-matrix factorization failed".into())
        })?;

        let mu = gap / m as f64;

        // Affine (predictor) direction.
        let rhs_c_aff: RVec = RVec::from_fn(m, |i, _| -s[i] * lambda[i]);
        let (_dz_aff, ds_aff, dl_aff) =
            kkt_step(p, &chol, &r_d, &r_p, &s, &lambda, &rhs_c_aff);
        let alpha_p_aff = max_step(&s, &ds_aff);
        let alpha_d_aff = max_step(&lambda, &dl_aff);
        let alpha_aff = alpha_p_aff.min(alpha_d_aff);
        let mu_aff = {
            let s_new = &s + alpha_aff * &ds_aff;
            let l_new = &lambda + alpha_aff * &dl_aff;
            s_new.dot(&l_new) / m as f64
        };
        let sigma = (mu_aff / mu.max(1e-300)).powi(3).clamp(0.0, 1.0);

        // Corrector direction.
        let rhs_c: RVec =
            RVec::from_fn(m, |i, _| -s[i] * lambda[i] - ds_aff[i] * dl_aff[i] + sigma * mu);
        let (dz, ds, dl) = kkt_step(p, &chol, &r_d, &r_p, &s, &lambda, &rhs_c);

        let tau = 0.995;
        let alpha_p = (tau * max_step(&s, &ds)).min(1.0);
        let alpha_d = (tau * max_step(&lambda, &dl)).min(1.0);
        z += alpha_p * &dz;
        s += alpha_p * &ds;
        lambda += alpha_d * &dl;
    }

    let obj = p.objective(&z);
    Ok(QpSolution {
        x_f: z.rows(0, n - 1).into_owned(),
        f: z[n - 1],
        objective: obj,
        status: QpStatus::MaxIter,
        iterations,
        used_fallback: false,
    })
}

fn kkt_step(
    p: &QpProblem,
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    r_d: &RVec,
    r_p: &RVec,
    s: &RVec,
    lambda: &RVec,
    rhs_c: &RVec,
) -> (RVec, RVec, RVec) {
    let m = p.g.nrows();
    // rhs = -r_d - G^T S^{-1} (rhs_c + Lambda r_p)
    let tmp = RVec::from_fn(m, |i, _| (rhs_c[i] + lambda[i] * r_p[i]) / s[i]);
    let rhs = -r_d - p.g.transpose() * tmp;
    let dz = chol.solve(&rhs);
    let ds = -r_p - &p.g * &dz;
    let dl = RVec::from_fn(m, |i, _| (rhs_c[i] - lambda[i] * ds[i]) / s[i]);
    (dz, ds, dl)
}

fn max_step(v: &RVec, dv: &RVec) -> f64 {
    let mut alpha = 1.0f64;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            alpha = alpha.min(-v[i] / dv[i]);
        }
    }
    alpha
}

/// Feasibility repair: successive projections onto the violated half-spaces
/// of `G z <= h` in the joint `(x, f)` space, finished by lifting `f` until
/// the hull rows hold exactly.
fn repair(p: &QpProblem, z: &mut RVec) {
    let n = z.len();
    let m = p.g.nrows();
    let row_norms: Vec<f64> = (0..m).map(|i| p.g.row(i).norm_squared()).collect();
    for _ in 0..200 {
        let mut worst = 0.0f64;
        for i in 0..m {
            let viol = p.g.row(i).transpose().dot(z) - p.h[i];
            if viol > 0.0 && row_norms[i] > 0.0 {
                worst = worst.max(viol);
                let scale = viol / row_norms[i];
                for a in 0..n {
                    *z.get_mut(a).unwrap() -= scale * p.g[(i, a)];
                }
            }
        }
        if worst <= 1e-13 {
            break;
        }
    }
    // Exact feasibility: raising f only loosens every hull row.
    z[n - 1] = z[n - 1].max(F_FLOOR);
    if let Some(hull) = p.hull {
        let mut f_min = F_FLOOR;
        for ant in 0..hull.antennas {
            for i in 1..=hull.alpha_x {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / hull.alpha_x as f64;
                let lhs = z[2 * ant] * phi.cos() - z[2 * ant + 1] * phi.sin();
                f_min = f_min.max(lhs / hull.apothem);
            }
        }
        z[n - 1] = z[n - 1].max(f_min);
    }
}

/// Projected-gradient descent with Armijo backtracking; the fallback path
/// when the interior-point factorization fails.
pub fn projected_gradient(p: &QpProblem, tol: f64) -> Result<QpSolution> {
    let n = p.dim();
    let big_p = 2.0 * &p.q;
    let mut z = RVec::zeros(n);
    z[n - 1] = 1.0;
    repair(p, &mut z);
    let mut obj = p.objective(&z);
    let mut t = 1.0;
    let max_outer = 20_000usize;
    let mut iterations = 0;
    let mut stalled = false;

    for iter in 0..max_outer {
        iterations = iter + 1;
        let grad = &big_p * &z + &p.c;
        let mut accepted = false;
        for _ in 0..80 {
            let mut cand = &z - t * &grad;
            repair(p, &mut cand);
            let cand_obj = p.objective(&cand);
            let step = (&cand - &z).norm_squared();
            if cand_obj <= obj - 1e-4 / t.max(1e-300) * step && cand_obj < obj {
                z = cand;
                obj = cand_obj;
                accepted = true;
                t = (t * 4.0).min(1e6);
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            stalled = true;
            break;
        }
        if obj.abs() < tol && iter > 100 {
            break;
        }
    }

    let status = if stalled || iterations < max_outer {
        QpStatus::Optimal
    } else {
        QpStatus::MaxIter
    };
    Ok(QpSolution {
        x_f: z.rows(0, n - 1).into_owned(),
        f: z[n - 1],
        objective: obj,
        status,
        iterations,
        used_fallback: true,
    })
}

/// Quadratic form `v^T Gamma v + nu^2 eps + 2 nu eta^T v` of the Hessian of
/// the scaled MSE objective `f^2 x^T H^T H x - 2 f x^T H^T s + f^2 E_w`
/// without the variable substitution, evaluated at `(x_r, f)` along the
/// direction `(v, nu)`. Negative values witness that the unsubstituted
/// problem is not jointly convex.
pub fn joint_hessian_quadratic_form(
    h_r: &RMat,
    s_r: &RVec,
    noise_energy: f64,
    x_r: &RVec,
    f: f64,
    v: &RVec,
    nu: f64,
) -> f64 {
    let gram = h_r.transpose() * h_r;
    let hx = h_r * x_r;
    let gamma_v = 2.0 * f * f * (&gram * v);
    let eps = 2.0 * hx.norm_squared() + 2.0 * noise_energy;
    let eta = 4.0 * f * (&gram * x_r) - 2.0 * (h_r.transpose() * s_r);
    v.dot(&gamma_v) + nu * nu * eps + 2.0 * nu * eta.dot(v)
}
