//! Brute-force reference implementations backing the test suites.
//!
//! Everything here is deliberately simple and works in complex arithmetic,
//! independent of the real-stacked production path, so the two routes check
//! each other. None of it is used by the simulator itself.

use crate::alphabet::PskAlphabet;
use crate::linalg::{CMat, CVec};
use num_complex::Complex64;

/// Scaling and MSE of a fixed discrete precoding vector, evaluated in the
/// complex domain: `f = Re{s^H u} / (||u||^2 + K sigma_w^2)` with `u = H x`,
/// clamped to the feasible `f >= 0` limit.
pub fn discrete_mse_complex(h: &CMat, s: &CVec, sigma_w2: f64, x: &CVec) -> (f64, f64) {
    let k = h.nrows();
    let noise_energy = k as f64 * sigma_w2;
    let u = h * x;
    let num: f64 = s
        .iter()
        .zip(u.iter())
        .map(|(si, ui)| (si.conj() * ui).re)
        .sum();
    let denom: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>() + noise_energy;
    if denom <= 0.0 || num <= 0.0 {
        let s_energy: f64 = s.iter().map(|z| z.norm_sqr()).sum();
        return (0.0, s_energy);
    }
    let f = num / denom;
    let mse: f64 = s
        .iter()
        .zip(u.iter())
        .map(|(si, ui)| (f * ui - si).norm_sqr())
        .sum::<f64>()
        + f * f * noise_energy;
    (f, mse)
}

/// Exhaustive minimum-MSE search over every vector in `X^M`.
pub fn exhaustive_min_mse(
    h: &CMat,
    s: &CVec,
    sigma_w2: f64,
    x_alpha: &PskAlphabet,
) -> (Vec<u8>, f64) {
    let m = h.ncols();
    let alpha = x_alpha.cardinality;
    let total = alpha.pow(m as u32);
    let mut best = (vec![0u8; m], f64::INFINITY);
    let mut x = CVec::from_element(m, Complex64::new(0.0, 0.0));
    for code in 0..total {
        let mut idx = vec![0u8; m];
        let mut rem = code;
        for ant in (0..m).rev() {
            idx[ant] = (rem % alpha) as u8;
            rem /= alpha;
        }
        for ant in 0..m {
            x[ant] = x_alpha.point(idx[ant] as usize);
        }
        let (_, mse) = discrete_mse_complex(h, s, sigma_w2, &x);
        if mse < best.1 {
            best = (idx, mse);
        }
    }
    best
}
