//! Iterative detection and decoding for one user's codeword.
//!
//! The receiver alternates a soft detector and the sum-product decoder.
//! The detector outputs extrinsic information, so its result feeds the
//! decoder directly (no subtraction at the detector output); the a-priori
//! information for the next pass is extracted from the decoder as
//! `L_a = L - L_e`. Iteration counting: `n_iter` is the number of feedback
//! passes after the initial detect+decode, so `n_iter = 0` is the
//! non-iterative receiver.

use crate::coding::{DecoderResult, LdpcCode};
use crate::detectors::{compute_le, DetectorKind, UserStatistics};
use crate::error::{Error, Result};
use num_complex::Complex64;

/// Receiver configuration.
#[derive(Debug, Clone)]
pub struct IddConfig {
    /// Soft detector used for every pass.
    pub detector: DetectorKind,
    /// Feedback passes after the initial detect+decode.
    pub n_iter: usize,
    /// Iteration cap of each sum-product decode.
    pub decoder_max_iter: usize,
    /// Magnitude bound applied to exchanged LLRs.
    pub llr_clamp: f64,
}

impl Default for IddConfig {
    fn default() -> Self {
        Self {
            detector: DetectorKind::DpaLm,
            n_iter: 2,
            decoder_max_iter: 50,
            llr_clamp: crate::detectors::LLR_CLAMP,
        }
    }
}

/// Per-pass summary used for traces and tests.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    /// Mean magnitude of the detector output.
    pub mean_abs_le: f64,
    /// Mean magnitude of the decoder output.
    pub mean_abs_l: f64,
    /// Decoder syndrome state after this pass.
    pub syndrome_ok: bool,
    /// Sum-product iterations spent in this pass.
    pub decoder_iterations: usize,
}

/// Result of receiving one codeword.
#[derive(Debug, Clone)]
pub struct IddResult {
    /// Hard message decisions from the systematic positions.
    pub message_bits: Vec<u8>,
    /// Final a-posteriori LLRs over the whole codeword.
    pub codeword_llr: Vec<f64>,
    /// Detector output of the final pass (the decoder's exact input).
    pub final_le: Vec<f64>,
    /// One entry per detect+decode pass.
    pub trace: Vec<IterationTrace>,
}

/// A-priori extraction `L_a = L - L_e`, clamped.
pub fn extract_a_priori(l: &[f64], le: &[f64], clamp: f64) -> Result<Vec<f64>> {
    if l.len() != le.len() {
        return Err(Error::Dimension(format!(
            "posterior length {} != extrinsic length {}",
            l.len(),
            le.len()
        )));
    }
    Ok(l
        .iter()
        .zip(le.iter())
        .map(|(a, b)| (a - b).clamp(-clamp, clamp))
        .collect())
}

/// Runs the detect/decode loop over one user's received slots.
pub fn idd_receive(
    z_slots: &[Complex64],
    stats: &UserStatistics,
    code: &LdpcCode,
    cfg: &IddConfig,
) -> Result<IddResult> {
    if cfg.llr_clamp <= 0.0 {
        return Err(Error::InvalidConfig("LLR clamp must be positive".into()));
    }
    let n_bits = stats.n_bits;
    if z_slots.len() * n_bits != code.n {
        return Err(Error::Dimension(format!(
            "{} slots x {} bits != codeword length {}",
            z_slots.len(),
            n_bits,
            code.n
        )));
    }

    let mut l_a = vec![0.0f64; code.n];
    let mut trace = Vec::with_capacity(cfg.n_iter + 1);
    let mut le = vec![0.0f64; code.n];
    let mut decoded: Option<DecoderResult> = None;

    for pass in 0..=cfg.n_iter {
        for (t, &z) in z_slots.iter().enumerate() {
            let priors = &l_a[t * n_bits..(t + 1) * n_bits];
            let slot_le = compute_le(cfg.detector, z, stats, priors)?;
            for (i, v) in slot_le.into_iter().enumerate() {
                le[t * n_bits + i] = v.clamp(-cfg.llr_clamp, cfg.llr_clamp);
            }
        }
        // The detector already produced extrinsic information; it goes to
        // the decoder as-is.
        let res = code.spa_decode(&le, cfg.decoder_max_iter)?;
        trace.push(IterationTrace {
            mean_abs_le: mean_abs(&le),
            mean_abs_l: mean_abs(&res.llr),
            syndrome_ok: res.syndrome_ok,
            decoder_iterations: res.iterations_used,
        });
        if pass < cfg.n_iter {
            l_a = extract_a_priori(&res.llr, &le, cfg.llr_clamp)?;
        }
        decoded = Some(res);
    }

    let decoded = decoded.expect("at least one pass always runs");
    let message_bits = decoded.hard_bits[code.message_range()].to_vec();
    Ok(IddResult {
        message_bits,
        codeword_llr: decoded.llr,
        final_le: le,
        trace,
    })
}

fn mean_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len().max(1) as f64
}
