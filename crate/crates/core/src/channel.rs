//! Channel generation, AWGN, real-valued stacking, and SNR accounting.
//!
//! Channels are frequency-flat i.i.d. Rayleigh: every coefficient is drawn
//! `CN(0, 1)` (unit-variance small-scale fading, large-scale coefficients
//! fixed to one). The real stacked forms interleave real and imaginary parts
//! so that `H_r x_r` is the stacked image of `H x`.
//!
//! Randomness comes from a seedable, splittable ChaCha stream: every Monte
//! Carlo trial derives its own stream from `(master seed, trial index)`, so
//! results are reproducible for any worker count.

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, RMat, RVec};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// One block-fading channel realization together with the operating noise
/// variance.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `K x M` complex channel matrix.
    pub h: CMat,
    /// Number of single-antenna users.
    pub k: usize,
    /// Number of transmit antennas.
    pub m: usize,
    /// Noise variance per user (linear).
    pub sigma_w2: f64,
}

impl ChannelRealization {
    /// Real stacked `2K x 2M` form of the channel.
    pub fn stacked(&self) -> RMat {
        stack_real_matrix(&self.h)
    }

    /// Row of the channel matrix seen by user `k` as a complex vector.
    pub fn user_row(&self, k: usize) -> CVec {
        CVec::from_iterator(self.m, self.h.row(k).iter().cloned())
    }
}

/// Deterministic per-stream RNG: the same `(master_seed, stream)` pair always
/// yields the same sequence, and distinct streams are independent.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Samples one `CN(0, 1)` value.
#[inline]
pub fn standard_complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// Draws a `K x M` i.i.d. `CN(0, 1)` channel. Entries are sampled row-major.
pub fn draw_channel<R: Rng + ?Sized>(
    k: usize,
    m: usize,
    sigma_w2: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if k == 0 || m == 0 {
        return Err(Error::InvalidConfig(
            "channel needs at least one user and one antenna".into(),
        ));
    }
    let mut h = CMat::zeros(k, m);
    for r in 0..k {
        for c in 0..m {
            h[(r, c)] = standard_complex_gaussian(rng);
        }
    }
    Ok(ChannelRealization { h, k, m, sigma_w2 })
}

/// Draws a length-`k` AWGN vector with per-entry variance `sigma_w2`.
pub fn draw_noise<R: Rng + ?Sized>(k: usize, sigma_w2: f64, rng: &mut R) -> CVec {
    let sd = sigma_w2.sqrt();
    CVec::from_iterator(k, (0..k).map(|_| standard_complex_gaussian(rng) * sd))
}

/// Interleaved real stacking `[Re v_1, Im v_1, ..., Re v_n, Im v_n]`.
pub fn stack_real(v: &CVec) -> RVec {
    let mut out = RVec::zeros(2 * v.len());
    for (i, z) in v.iter().enumerate() {
        out[2 * i] = z.re;
        out[2 * i + 1] = z.im;
    }
    out
}

/// Inverse of [`stack_real`].
pub fn unstack(v: &RVec) -> CVec {
    debug_assert!(v.len() % 2 == 0);
    CVec::from_iterator(
        v.len() / 2,
        (0..v.len() / 2).map(|i| Complex64::new(v[2 * i], v[2 * i + 1])),
    )
}

/// Real stacked `2K x 2M` channel: each complex coefficient `h` becomes the
/// 2x2 block `[Re h, -Im h; Im h, Re h]`.
pub fn stack_real_matrix(h: &CMat) -> RMat {
    let (k, m) = h.shape();
    let mut out = RMat::zeros(2 * k, 2 * m);
    for r in 0..k {
        for c in 0..m {
            let z = h[(r, c)];
            out[(2 * r, 2 * c)] = z.re;
            out[(2 * r, 2 * c + 1)] = -z.im;
            out[(2 * r + 1, 2 * c)] = z.im;
            out[(2 * r + 1, 2 * c + 1)] = z.re;
        }
    }
    out
}

/// Noise variance for an SNR given as `||x||^2 / sigma_w^2` in dB, with the
/// constant-envelope transmit energy `||x||^2 = e_tx`.
pub fn snr_to_sigma_w2(snr_db: f64, e_tx: f64) -> f64 {
    e_tx / 10f64.powf(snr_db / 10.0)
}

/// Expected stacked noise energy `E{w_r^T w_r} = K sigma_w^2`, the constant
/// appearing in every MSE objective.
#[inline]
pub fn stacked_noise_energy(k: usize, sigma_w2: f64) -> f64 {
    k as f64 * sigma_w2
}
