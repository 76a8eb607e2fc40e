//! Convex hull of the phase-quantized transmit set as a polyhedron.
//!
//! For an `alpha_x`-PSK transmit alphabet per antenna, the hull of `X^M` in
//! real stacked coordinates is `{x_r : A x_r <= b}` where row block `i` of
//! `A` applies `beta_i = [cos(phi_i), -sin(phi_i)]`, `phi_i = 2 pi i /
//! alpha_x`, to each antenna's `(Re, Im)` pair and `b = cos(pi/alpha_x) /
//! sqrt(M)` (unit total transmit energy). The scaled form `R = [A, -b]`
//! expresses `A x <= f b` as `R [x; f] <= 0`.

use crate::error::{Error, Result};
use crate::linalg::{RMat, RVec};

/// Facet-activity tolerance at unit scale.
pub const FACET_TOL: f64 = 1e-9;

/// Polyhedral description of the convex hull of `X^M`.
#[derive(Debug, Clone)]
pub struct Polyhedron {
    /// `(M alpha_x) x 2M` constraint matrix.
    pub a: RMat,
    /// Right-hand side, `cos(pi/alpha_x)/sqrt(M)` in every entry.
    pub b: RVec,
    /// Scaled form `[A, -b]`.
    pub r: RMat,
    /// Transmit alphabet cardinality.
    pub alpha_x: usize,
    /// Antenna count of the full problem.
    pub m: usize,
}

/// Builds the hull polyhedron for `M` antennas and an `alpha_x`-PSK transmit
/// alphabet with unit total transmit energy.
///
/// Rows are ordered with the outer loop over `i = 1..alpha_x` and the inner
/// loop over antennas, matching the stacked Kronecker blocks `I_M (x) beta_i`.
pub fn build_polyhedron(m: usize, alpha_x: usize) -> Result<Polyhedron> {
    if alpha_x < 3 {
        return Err(Error::UnsupportedAlphabet(format!(
            "hull of a {alpha_x}-point phase alphabet degenerates to a segment; need alpha_x >= 3"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidConfig("antenna count must be >= 1".into()));
    }
    let rows = m * alpha_x;
    let mut a = RMat::zeros(rows, 2 * m);
    for i in 1..=alpha_x {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / alpha_x as f64;
        let (beta_re, beta_im) = (phi.cos(), -phi.sin());
        for ant in 0..m {
            let row = (i - 1) * m + ant;
            a[(row, 2 * ant)] = beta_re;
            a[(row, 2 * ant + 1)] = beta_im;
        }
    }
    let b_val = (std::f64::consts::PI / alpha_x as f64).cos() / (m as f64).sqrt();
    let b = RVec::from_element(rows, b_val);
    let r = scaled_form(&a, &b);
    Ok(Polyhedron {
        a,
        b,
        r,
        alpha_x,
        m,
    })
}

fn scaled_form(a: &RMat, b: &RVec) -> RMat {
    let mut r = RMat::zeros(a.nrows(), a.ncols() + 1);
    r.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    for row in 0..a.nrows() {
        r[(row, a.ncols())] = -b[row];
    }
    r
}

impl Polyhedron {
    /// Constraint set seen by a subproblem whose first `d` antennas are
    /// fixed: the last `2(M-d)` columns of `A`, with rows that only touch
    /// fixed antennas dropped. The right-hand side keeps the full-problem
    /// scaling (transmit entries still have magnitude `1/sqrt(M)`).
    pub fn subproblem(&self, d: usize) -> Result<Polyhedron> {
        if d >= self.m {
            return Err(Error::Dimension(format!(
                "subproblem needs d < M, got d={d} with M={}",
                self.m
            )));
        }
        if d == 0 {
            return Ok(self.clone());
        }
        let m_free = self.m - d;
        let rows = m_free * self.alpha_x;
        let mut a = RMat::zeros(rows, 2 * m_free);
        let mut b = RVec::zeros(rows);
        let mut out = 0usize;
        for i in 0..self.alpha_x {
            for ant in d..self.m {
                let src = i * self.m + ant;
                for c in 0..2 * m_free {
                    a[(out, c)] = self.a[(src, 2 * d + c)];
                }
                b[out] = self.b[src];
                out += 1;
            }
        }
        let r = scaled_form(&a, &b);
        Ok(Polyhedron {
            a,
            b,
            r,
            alpha_x: self.alpha_x,
            m: m_free,
        })
    }

    /// Componentwise membership test `A x_r <= b + tol`.
    pub fn contains(&self, x_r: &RVec, tol: f64) -> bool {
        debug_assert_eq!(x_r.len(), self.a.ncols());
        let ax = &self.a * x_r;
        ax.iter().zip(self.b.iter()).all(|(v, bound)| *v <= bound + tol)
    }

    /// Number of active facets (`|A x - b| <= tol`) at a point.
    pub fn active_facets(&self, x_r: &RVec, tol: f64) -> usize {
        let ax = &self.a * x_r;
        ax.iter()
            .zip(self.b.iter())
            .filter(|(v, bound)| (*v - *bound).abs() <= tol)
            .count()
    }
}
