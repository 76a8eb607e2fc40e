//! Soft detectors for discrete-precoded PSK downlinks.
//!
//! All four detectors output extrinsic log-likelihood ratios for the `N`
//! bits of one received sample, combining per-symbol likelihoods with
//! a-priori information from the other bits of the same symbol:
//!
//! * [`llr_dpa`] — exact likelihoods from the true conditional means
//!   `h_k x(s)` over every interferer combination; exponential in `K`.
//! * [`llr_gdpa`] — one bivariate Gaussian per data symbol, parameterized by
//!   the exact conditional mean and covariance of the received sample.
//! * [`llr_dpa_lm`] — scalar linear model `z = h_eff s + w + eps` with a
//!   circularly symmetric Gaussian error term.
//! * [`llr_awgn_baseline`] — ignores precoder distortion entirely.
//!
//! Everything runs in the log domain with log-sum-exp, and final LLRs are
//! clamped to `+-LLR_CLAMP`.

use crate::alphabet::GrayMapper;
use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::precoders::LookupTable;
use num_complex::Complex64;
use std::io::{BufRead, Write};

/// Magnitude bound for every emitted LLR.
pub const LLR_CLAMP: f64 = 50.0;

/// Largest interferer enumeration the exact detector accepts without an
/// explicit override.
pub const DPA_TERM_GUARD: usize = 32_768;

/// 2x2 covariance with cached inverse and log-determinant.
#[derive(Debug, Clone)]
pub struct Cov2 {
    /// Entries `[[var_re, rho], [rho, var_im]]`.
    pub mat: [[f64; 2]; 2],
    inv: [[f64; 2]; 2],
    logdet: f64,
}

impl Cov2 {
    /// Builds the cached form; the matrix must be positive definite.
    pub fn new(var_re: f64, var_im: f64, rho: f64) -> Result<Self> {
        let det = var_re * var_im - rho * rho;
        if det <= 0.0 || var_re <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "covariance not positive definite: [{var_re}, {rho}; {rho}, {var_im}]"
            )));
        }
        Ok(Self {
            mat: [[var_re, rho], [rho, var_im]],
            inv: [[var_im / det, -rho / det], [-rho / det, var_re / det]],
            logdet: det.ln(),
        })
    }

    fn mahalanobis(&self, d0: f64, d1: f64) -> f64 {
        d0 * d0 * self.inv[0][0] + 2.0 * d0 * d1 * self.inv[0][1] + d1 * d1 * self.inv[1][1]
    }
}

/// Receiver-side statistics of one user, precomputed from the lookup table.
#[derive(Debug, Clone)]
pub struct UserStatistics {
    /// User index.
    pub user: usize,
    /// Number of users in the system.
    pub k: usize,
    /// Data alphabet cardinality.
    pub alpha_s: usize,
    /// Bits per symbol.
    pub n_bits: usize,
    /// Noise variance.
    pub sigma_w2: f64,
    /// Data constellation points.
    pub s_points: Vec<Complex64>,
    /// Gray bit labels per constellation position.
    pub labels: Vec<Vec<i8>>,
    /// `h_k x(s)` for every data index.
    pub zeta: Vec<Complex64>,
    /// Conditional means of the stacked received sample per data symbol.
    pub means: Vec<[f64; 2]>,
    /// Conditional covariances per data symbol.
    pub covs: Vec<Cov2>,
    /// Effective scalar channel of the linear model.
    pub h_eff: Complex64,
    /// Precoding-distortion power of the linear model.
    pub lambda2: f64,
    /// Effective noise variance `lambda2 + sigma_w2`.
    pub sigma_eff2: f64,
}

/// Exact per-user statistics from a complete lookup table: conditional means
/// and covariances of the received sample given the user's data symbol, and
/// the effective channel / distortion power of the linear model.
pub fn compute_statistics(
    table: &LookupTable,
    ch: &ChannelRealization,
    user: usize,
) -> Result<UserStatistics> {
    let k = table.k;
    let alpha_s = table.alpha_s;
    let total = alpha_s.pow(k as u32);
    if table.entries.len() != total {
        return Err(Error::InvalidConfig(format!(
            "lookup table has {} entries, expected {total}",
            table.entries.len()
        )));
    }
    if user >= k {
        return Err(Error::InvalidConfig(format!(
            "user {user} out of range for K={k}"
        )));
    }
    if !alpha_s.is_power_of_two() {
        return Err(Error::InvalidConfig(
            "data alphabet must be a power of two for bit labeling".into(),
        ));
    }
    let n_bits = alpha_s.trailing_zeros() as usize;
    let labels = GrayMapper::new(n_bits)?.labels().to_vec();
    let h_k = ch.user_row(user);

    let mut zeta = Vec::with_capacity(total);
    for idx in 0..total {
        let x = table.x_vec(idx);
        let z: Complex64 = h_k.iter().zip(x.iter()).map(|(h, xv)| h * xv).sum();
        zeta.push(z);
    }

    // Stride of this user's digit in the mixed-radix index.
    let stride = alpha_s.pow((k - 1 - user) as u32);
    let digit_of = |idx: usize| (idx / stride) % alpha_s;

    let share = (total / alpha_s) as f64;
    let mut sum = vec![[0.0f64; 2]; alpha_s];
    let mut sum_sq = vec![[0.0f64; 2]; alpha_s];
    let mut sum_cross = vec![0.0f64; alpha_s];
    for (idx, z) in zeta.iter().enumerate() {
        let a = digit_of(idx);
        sum[a][0] += z.re;
        sum[a][1] += z.im;
        sum_sq[a][0] += z.re * z.re;
        sum_sq[a][1] += z.im * z.im;
        sum_cross[a] += z.re * z.im;
    }
    let mut means = Vec::with_capacity(alpha_s);
    let mut covs = Vec::with_capacity(alpha_s);
    for a in 0..alpha_s {
        let mu = [sum[a][0] / share, sum[a][1] / share];
        let var_re = (sum_sq[a][0] / share - mu[0] * mu[0]).max(0.0) + ch.sigma_w2 / 2.0;
        let var_im = (sum_sq[a][1] / share - mu[1] * mu[1]).max(0.0) + ch.sigma_w2 / 2.0;
        let rho = sum_cross[a] / share - mu[0] * mu[1];
        means.push(mu);
        covs.push(Cov2::new(var_re, var_im, rho)?);
    }

    // Linear model: h_eff minimizes E|h_k x(s) - gamma s_k|^2 and lambda2 is
    // the residual power (sigma_s^2 = 1 for unit PSK).
    let mut h_eff = Complex64::new(0.0, 0.0);
    let mut power = 0.0;
    for (idx, z) in zeta.iter().enumerate() {
        let s_k = table.s_points[digit_of(idx)];
        h_eff += s_k.conj() * z;
        power += z.norm_sqr();
    }
    h_eff /= total as f64;
    power /= total as f64;
    let lambda2 = power - h_eff.norm_sqr();
    let sigma_eff2 = lambda2.max(0.0) + ch.sigma_w2;

    Ok(UserStatistics {
        user,
        k,
        alpha_s,
        n_bits,
        sigma_w2: ch.sigma_w2,
        s_points: table.s_points.clone(),
        labels,
        zeta,
        means,
        covs,
        h_eff,
        lambda2,
        sigma_eff2,
    })
}

impl UserStatistics {
    /// Digit of a data index belonging to this user.
    #[inline]
    pub fn digit_of(&self, idx: usize) -> usize {
        let stride = self.alpha_s.pow((self.k - 1 - self.user) as u32);
        (idx / stride) % self.alpha_s
    }
}

/// Detector selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    /// Exact detector over all interferer combinations.
    Dpa {
        /// Accept enumerations beyond [`DPA_TERM_GUARD`] terms per symbol.
        allow_large: bool,
    },
    /// Gaussian approximation with exact first and second moments.
    Gdpa,
    /// Scalar linear model.
    DpaLm,
    /// Distortion-unaware baseline.
    Awgn,
}

/// Dispatches to the selected detector.
pub fn compute_le(
    kind: DetectorKind,
    z: Complex64,
    stats: &UserStatistics,
    priors: &[f64],
) -> Result<Vec<f64>> {
    match kind {
        DetectorKind::Dpa { allow_large } => llr_dpa(z, stats, priors, allow_large),
        DetectorKind::Gdpa => Ok(llr_gdpa(z, stats, priors)),
        DetectorKind::DpaLm => Ok(llr_dpa_lm(z, stats, priors)),
        DetectorKind::Awgn => Ok(llr_awgn_baseline(z, stats.sigma_w2, stats, priors)),
    }
}

/// Log of the a-priori probability of the symbol labeled `label`, taken over
/// every bit except `upsilon`.
pub fn log_prior_excluding(label: &[i8], priors: &[f64], upsilon: usize) -> f64 {
    let mut acc = 0.0;
    for (l, (&a, &la)) in label.iter().zip(priors.iter()).enumerate() {
        if l == upsilon {
            continue;
        }
        acc += log_sigmoid(f64::from(a) * la);
    }
    acc
}

#[inline]
fn log_sigmoid(u: f64) -> f64 {
    // log(1/(1+e^{-u})) = -softplus(-u)
    -softplus(-u)
}

#[inline]
fn softplus(u: f64) -> f64 {
    if u > 35.0 {
        u
    } else if u < -35.0 {
        0.0
    } else {
        u.exp().ln_1p()
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = terms.collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = vals.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Combines per-symbol log-likelihoods with the a-priori terms into one
/// extrinsic LLR per bit.
fn extrinsic_from_loglik(stats: &UserStatistics, loglik: &[f64], priors: &[f64]) -> Vec<f64> {
    let n = stats.n_bits;
    let mut out = Vec::with_capacity(n);
    // Total prior of each symbol; per-bit exclusion subtracts one term.
    let prior_terms: Vec<Vec<f64>> = stats
        .labels
        .iter()
        .map(|label| {
            label
                .iter()
                .zip(priors.iter())
                .map(|(&a, &la)| log_sigmoid(f64::from(a) * la))
                .collect()
        })
        .collect();
    let prior_total: Vec<f64> = prior_terms.iter().map(|t| t.iter().sum()).collect();

    for upsilon in 0..n {
        let num = log_sum_exp((0..stats.alpha_s).filter_map(|a| {
            (stats.labels[a][upsilon] > 0)
                .then(|| loglik[a] + prior_total[a] - prior_terms[a][upsilon])
        }));
        let den = log_sum_exp((0..stats.alpha_s).filter_map(|a| {
            (stats.labels[a][upsilon] < 0)
                .then(|| loglik[a] + prior_total[a] - prior_terms[a][upsilon])
        }));
        out.push((num - den).clamp(-LLR_CLAMP, LLR_CLAMP));
    }
    out
}

/// Exact detector: sums the complex-Gaussian likelihood over every
/// interferer combination for each candidate symbol.
pub fn llr_dpa(
    z: Complex64,
    stats: &UserStatistics,
    priors: &[f64],
    allow_large: bool,
) -> Result<Vec<f64>> {
    let terms = stats.alpha_s.pow((stats.k - 1) as u32);
    if terms > DPA_TERM_GUARD && !allow_large {
        return Err(Error::ComplexityGuard(format!(
            "exact detector needs {terms} likelihood terms per symbol; override to proceed"
        )));
    }
    check_priors(stats, priors)?;
    let mut buckets: Vec<Vec<f64>> = vec![Vec::with_capacity(terms); stats.alpha_s];
    for (idx, zeta) in stats.zeta.iter().enumerate() {
        let a = stats.digit_of(idx);
        buckets[a].push(-(z - zeta).norm_sqr() / stats.sigma_w2);
    }
    let loglik: Vec<f64> = buckets
        .into_iter()
        .map(|b| log_sum_exp(b.into_iter()))
        .collect();
    Ok(extrinsic_from_loglik(stats, &loglik, priors))
}

/// Gaussian detector: one bivariate Gaussian per data symbol with the exact
/// conditional moments, including the log-determinant weight.
pub fn llr_gdpa(z: Complex64, stats: &UserStatistics, priors: &[f64]) -> Vec<f64> {
    let loglik: Vec<f64> = (0..stats.alpha_s)
        .map(|a| {
            let d0 = z.re - stats.means[a][0];
            let d1 = z.im - stats.means[a][1];
            -0.5 * stats.covs[a].mahalanobis(d0, d1) - 0.5 * stats.covs[a].logdet
        })
        .collect();
    extrinsic_from_loglik(stats, &loglik, priors)
}

/// Linear-model detector: scalar effective channel plus circularly symmetric
/// Gaussian distortion.
pub fn llr_dpa_lm(z: Complex64, stats: &UserStatistics, priors: &[f64]) -> Vec<f64> {
    let loglik: Vec<f64> = (0..stats.alpha_s)
        .map(|a| -(z - stats.h_eff * stats.s_points[a]).norm_sqr() / stats.sigma_eff2)
        .collect();
    extrinsic_from_loglik(stats, &loglik, priors)
}

/// Baseline detector that models the channel as pure AWGN around the data
/// constellation.
pub fn llr_awgn_baseline(
    z: Complex64,
    sigma_w2: f64,
    stats: &UserStatistics,
    priors: &[f64],
) -> Vec<f64> {
    let loglik: Vec<f64> = (0..stats.alpha_s)
        .map(|a| -(z - stats.s_points[a]).norm_sqr() / sigma_w2)
        .collect();
    extrinsic_from_loglik(stats, &loglik, priors)
}

fn check_priors(stats: &UserStatistics, priors: &[f64]) -> Result<()> {
    if priors.len() != stats.n_bits {
        return Err(Error::Dimension(format!(
            "expected {} prior LLRs, got {}",
            stats.n_bits,
            priors.len()
        )));
    }
    if priors.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidConfig("priors must be finite".into()));
    }
    Ok(())
}

/// Serializes a lookup table together with the per-user statistics the
/// receivers need, as the table CSV followed by one statistics section.
pub fn write_table_with_statistics<W: Write>(
    w: &mut W,
    table: &LookupTable,
    stats: &[UserStatistics],
) -> std::io::Result<()> {
    table.write_csv(w)?;
    writeln!(w, "statistics,{}", stats.len())?;
    for st in stats {
        write!(
            w,
            "user,{},h_eff,{},{},lambda2,{},sigma_eff2,{}",
            st.user, st.h_eff.re, st.h_eff.im, st.lambda2, st.sigma_eff2
        )?;
        for a in 0..st.alpha_s {
            write!(
                w,
                ",mu,{},{},cov,{},{},{}",
                st.means[a][0],
                st.means[a][1],
                st.covs[a].mat[0][0],
                st.covs[a].mat[1][1],
                st.covs[a].mat[0][1]
            )?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads back the statistics section appended by
/// [`write_table_with_statistics`]; returns `(h_eff, lambda2, sigma_eff2,
/// means, covs)` per user, covariances as `[var_re, var_im, rho]`.
#[allow(clippy::type_complexity)]
pub fn read_statistics_section<R: BufRead>(
    r: &mut R,
) -> Result<Vec<(Complex64, f64, f64, Vec<[f64; 2]>, Vec<[f64; 3]>)>> {
    let mut header = String::new();
    r.read_line(&mut header)
        .map_err(|e| Error::Parse(format!("read failure: {e}")))?;
    let header = header.trim();
    let mut parts = header.split(',');
    if parts.next() != Some("statistics") {
        return Err(Error::Parse("missing statistics section".into()));
    }
    let count: usize = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse("bad statistics count".into()))?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut line = String::new();
        r.read_line(&mut line)
            .map_err(|e| Error::Parse(format!("read failure: {e}")))?;
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() < 9 || fields[0] != "user" {
            return Err(Error::Parse("bad statistics row".into()));
        }
        let h_eff = Complex64::new(parse_f64(fields[3])?, parse_f64(fields[4])?);
        let lambda2 = parse_f64(fields[6])?;
        let sigma_eff2 = parse_f64(fields[8])?;
        let mut means = Vec::new();
        let mut covs = Vec::new();
        let mut i = 9;
        while i + 6 < fields.len() {
            if fields[i] != "mu" || fields[i + 3] != "cov" {
                return Err(Error::Parse("bad statistics entry".into()));
            }
            means.push([parse_f64(fields[i + 1])?, parse_f64(fields[i + 2])?]);
            covs.push([
                parse_f64(fields[i + 4])?,
                parse_f64(fields[i + 5])?,
                parse_f64(fields[i + 6])?,
            ]);
            i += 7;
        }
        out.push((h_eff, lambda2, sigma_eff2, means, covs));
    }
    Ok(out)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad float {s:?}")))
}

/// Conditional mean of the linear-model error term for one data symbol,
/// computed by exact enumeration over the interferers:
/// `E{eps_k | s} = h_k E{x(s') | s_k = s} - h_eff s`.
pub fn conditional_error_mean(
    table: &LookupTable,
    ch: &ChannelRealization,
    stats: &UserStatistics,
    symbol: usize,
) -> Complex64 {
    let h_k: CVec = ch.user_row(stats.user);
    let total = table.entries.len();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut count = 0usize;
    for idx in 0..total {
        if stats.digit_of(idx) != symbol {
            continue;
        }
        let x = table.x_vec(idx);
        let z: Complex64 = h_k.iter().zip(x.iter()).map(|(h, xv)| h * xv).sum();
        acc += z;
        count += 1;
    }
    acc / count as f64 - stats.h_eff * table.s_points[symbol]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::PskAlphabet;
    use crate::channel::{draw_channel, stream_rng};
    use crate::linalg::CMat;
    use crate::polytope::build_polyhedron;
    use crate::precoders::{build_lookup_table, BbConfig, TablePrecoder};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn identity_stats(alpha: usize, sigma_w2: f64) -> UserStatistics {
        let ch = ChannelRealization {
            h: CMat::from_vec(1, 1, vec![Complex64::new(1.0, 0.0)]),
            k: 1,
            m: 1,
            sigma_w2,
        };
        let s_alpha = PskAlphabet::data(alpha).unwrap();
        let x_alpha = PskAlphabet::transmit(alpha, 1, 1.0).unwrap();
        let poly = build_polyhedron(1, alpha.max(3)).unwrap();
        let table = build_lookup_table(
            &ch,
            &s_alpha,
            &x_alpha,
            &poly,
            TablePrecoder::BranchAndBound,
            4096,
            &BbConfig::default(),
        )
        .unwrap();
        compute_statistics(&table, &ch, 0).unwrap()
    }

    fn random_system(
        k: usize,
        m: usize,
        alpha: usize,
        sigma_w2: f64,
        seed: u64,
    ) -> (ChannelRealization, LookupTable) {
        let mut rng = stream_rng(seed, 0);
        let ch = draw_channel(k, m, sigma_w2, &mut rng).unwrap();
        let s_alpha = PskAlphabet::data(alpha).unwrap();
        let x_alpha = PskAlphabet::transmit(alpha, m, 1.0).unwrap();
        let poly = build_polyhedron(m, alpha).unwrap();
        let table = build_lookup_table(
            &ch,
            &s_alpha,
            &x_alpha,
            &poly,
            TablePrecoder::BranchAndBound,
            4096,
            &BbConfig::default(),
        )
        .unwrap();
        (ch, table)
    }

    #[test]
    fn identity_channel_statistics_are_distortion_free() {
        let stats = identity_stats(4, 0.3);
        let s_alpha = PskAlphabet::data(4).unwrap();
        for a in 0..4 {
            let p = s_alpha.point(a);
            assert_relative_eq!(stats.means[a][0], p.re, epsilon = 1e-9);
            assert_relative_eq!(stats.means[a][1], p.im, epsilon = 1e-9);
            assert_relative_eq!(stats.covs[a].mat[0][0], 0.15, epsilon = 1e-9);
            assert_relative_eq!(stats.covs[a].mat[1][1], 0.15, epsilon = 1e-9);
            assert_relative_eq!(stats.covs[a].mat[0][1], 0.0, epsilon = 1e-9);
        }
        assert!((stats.h_eff - Complex64::new(1.0, 0.0)).norm() < 1e-9);
        assert!(stats.lambda2.abs() < 1e-9);
    }

    #[test]
    fn distortion_power_is_nonnegative() {
        for seed in 0..10 {
            let (ch, table) = random_system(2, 3, 4, 0.4, 40 + seed);
            for user in 0..2 {
                let stats = compute_statistics(&table, &ch, user).unwrap();
                assert!(stats.lambda2 >= -1e-12, "lambda2 {}", stats.lambda2);
                assert!(stats.sigma_eff2 >= ch.sigma_w2 - 1e-12);
            }
        }
    }

    #[test]
    fn effective_channel_minimizes_model_error() {
        let mut rng = stream_rng(50, 0);
        let ch = draw_channel(2, 3, 0.4, &mut rng).unwrap();
        let s_alpha = PskAlphabet::data(4).unwrap();
        let x_alpha = PskAlphabet::transmit(4, 3, 1.0).unwrap();
        let poly = build_polyhedron(3, 4).unwrap();
        let table = build_lookup_table(
            &ch,
            &s_alpha,
            &x_alpha,
            &poly,
            TablePrecoder::BranchAndBound,
            4096,
            &BbConfig::default(),
        )
        .unwrap();
        let stats = compute_statistics(&table, &ch, 1).unwrap();
        let cost = |gamma: Complex64| -> f64 {
            let total = table.entries.len();
            (0..total)
                .map(|idx| {
                    let s_k = table.s_points[stats.digit_of(idx)];
                    (stats.zeta[idx] - gamma * s_k).norm_sqr()
                })
                .sum::<f64>()
                / total as f64
        };
        let at_opt = cost(stats.h_eff);
        for delta in [
            Complex64::new(1e-3, 0.0),
            Complex64::new(-1e-3, 0.0),
            Complex64::new(0.0, 1e-3),
            Complex64::new(0.0, -1e-3),
        ] {
            assert!(cost(stats.h_eff + delta) > at_opt);
        }
        // The residual is the linear model's distortion power.
        assert_relative_eq!(at_opt, stats.lambda2, epsilon = 1e-9);
    }

    #[test]
    fn symmetric_table_rotates_conditional_means() {
        let (ch, table) = random_system(2, 2, 4, 0.2, 60);
        let stats = compute_statistics(&table, &ch, 0).unwrap();
        let rot = Complex64::from_polar(1.0, stats.s_points[1].arg() - stats.s_points[0].arg());
        for a in 0..4 {
            let mu = Complex64::new(stats.means[a][0], stats.means[a][1]);
            let mu_next =
                Complex64::new(stats.means[(a + 1) % 4][0], stats.means[(a + 1) % 4][1]);
            assert!((mu * rot - mu_next).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_priors_give_uniform_symbol_priors() {
        let stats = identity_stats(8, 0.1);
        let priors = vec![0.0; 3];
        for a in 0..8 {
            for upsilon in 0..3 {
                let lp = log_prior_excluding(&stats.labels[a], &priors, upsilon);
                assert_relative_eq!(lp.exp(), 0.25, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exact_and_gaussian_agree_for_single_user() {
        let mut rng = stream_rng(61, 0);
        let base = identity_stats(8, 1.0);
        for _ in 0..200 {
            let sigma_w2: f64 = rng.gen_range(0.01..2.0);
            let mut st = base.clone();
            st.sigma_w2 = sigma_w2;
            st.covs = (0..8)
                .map(|_| Cov2::new(sigma_w2 / 2.0, sigma_w2 / 2.0, 0.0).unwrap())
                .collect();
            let z = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let priors: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let dpa = llr_dpa(z, &st, &priors, false).unwrap();
            let gdpa = llr_gdpa(z, &st, &priors);
            for (a, b) in dpa.iter().zip(gdpa.iter()) {
                assert!((a - b).abs() < 1e-9, "dpa {a} vs gdpa {b}");
            }
        }
    }

    #[test]
    fn mirror_symmetric_sample_gives_zero_llr() {
        let stats = identity_stats(4, 0.5);
        let priors = vec![0.0; 2];
        // Bit 0 splits the QPSK constellation at the imaginary axis; any z on
        // that axis is equidistant from the two halves.
        for im in [-1.0, -0.2, 0.0, 0.7] {
            let le = llr_dpa(Complex64::new(0.0, im), &stats, &priors, false).unwrap();
            assert!(le[0].abs() < 1e-9, "L_e {le:?}");
        }
    }

    #[test]
    fn dominant_cluster_sign_matches_gray_label() {
        let stats = identity_stats(8, 1e-4);
        let priors = vec![0.0; 3];
        for a in 0..8 {
            let z = stats.s_points[a];
            let le = llr_dpa(z, &stats, &priors, false).unwrap();
            for (bit, lab) in le.iter().zip(stats.labels[a].iter()) {
                assert_eq!(bit.signum() as i8, *lab, "symbol {a}");
            }
        }
    }

    #[test]
    fn gaussian_detector_flattens_at_huge_noise() {
        let mut stats = identity_stats(8, 1.0);
        stats.sigma_w2 = 1e6;
        stats.covs = (0..8).map(|_| Cov2::new(5e5, 5e5, 0.0).unwrap()).collect();
        let priors = vec![0.0; 3];
        let le = llr_gdpa(Complex64::new(0.6, -0.3), &stats, &priors);
        for v in le {
            assert!(v.abs() < 1e-3, "L_e should vanish, got {v}");
        }
    }

    #[test]
    fn linear_model_matches_gaussian_when_parameters_align() {
        let mut rng = stream_rng(62, 0);
        let mut stats = identity_stats(8, 0.4);
        stats.h_eff = Complex64::new(0.8, -0.3);
        stats.lambda2 = 0.2;
        stats.sigma_eff2 = stats.lambda2 + stats.sigma_w2;
        for a in 0..8 {
            let mu = stats.h_eff * stats.s_points[a];
            stats.means[a] = [mu.re, mu.im];
            stats.covs[a] =
                Cov2::new(stats.sigma_eff2 / 2.0, stats.sigma_eff2 / 2.0, 0.0).unwrap();
        }
        for _ in 0..100 {
            let z = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let priors: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let lm = llr_dpa_lm(z, &stats, &priors);
            let gdpa = llr_gdpa(z, &stats, &priors);
            for (a, b) in lm.iter().zip(gdpa.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn distortion_free_linear_model_is_awgn() {
        let mut rng = stream_rng(63, 0);
        let mut stats = identity_stats(8, 0.7);
        stats.h_eff = Complex64::new(1.0, 0.0);
        stats.lambda2 = 0.0;
        stats.sigma_eff2 = stats.sigma_w2;
        for _ in 0..100 {
            let z = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let priors: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let lm = llr_dpa_lm(z, &stats, &priors);
            let awgn = llr_awgn_baseline(z, stats.sigma_w2, &stats, &priors);
            for (a, b) in lm.iter().zip(awgn.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn awgn_llr_scales_inversely_with_noise() {
        // For BPSK the extrinsic LLR is a single-term ratio, so doubling the
        // noise variance halves it exactly.
        let stats = identity_stats(2, 0.5);
        let z = Complex64::new(0.4, 0.1);
        let priors = vec![0.0];
        let le1 = llr_awgn_baseline(z, 0.5, &stats, &priors);
        let le2 = llr_awgn_baseline(z, 1.0, &stats, &priors);
        assert_relative_eq!(le1[0], 2.0 * le2[0], epsilon = 1e-12);
    }

    #[test]
    fn linear_model_llr_flips_sign_exactly_once_between_hypotheses() {
        // Walking z along the segment joining two adjacent hypothesis means
        // must flip the distinguishing bit's extrinsic sign exactly once.
        let mut stats = identity_stats(8, 0.08);
        stats.h_eff = Complex64::new(0.9, 0.2);
        stats.lambda2 = 0.02;
        stats.sigma_eff2 = stats.lambda2 + stats.sigma_w2;
        let priors = vec![0.3, -0.4, 0.1];
        for a in 0..8 {
            let b = (a + 1) % 8;
            // Adjacent Gray labels differ in exactly one bit.
            let bit = (0..3)
                .find(|&l| stats.labels[a][l] != stats.labels[b][l])
                .unwrap();
            let mu_a = stats.h_eff * stats.s_points[a];
            let mu_b = stats.h_eff * stats.s_points[b];
            let mut flips = 0;
            let mut last: Option<bool> = None;
            for step in 0..=400 {
                let t = step as f64 / 400.0;
                let z = mu_a * (1.0 - t) + mu_b * t;
                let le = llr_dpa_lm(z, &stats, &priors);
                let sign = le[bit] > 0.0;
                if let Some(prev) = last {
                    if prev != sign {
                        flips += 1;
                    }
                }
                last = Some(sign);
            }
            assert_eq!(flips, 1, "symbols {a}->{b}, bit {bit}");
        }
    }

    #[test]
    fn log_domain_survives_extreme_snr() {
        let mut stats = identity_stats(8, 1.0);
        stats.sigma_w2 = 1e-12;
        let priors = vec![0.0; 3];
        let le = llr_dpa(Complex64::new(0.9, 0.2), &stats, &priors, false).unwrap();
        for v in le {
            assert!(v.is_finite());
            assert!(v.abs() <= LLR_CLAMP);
        }
    }

    #[test]
    fn complexity_guard_blocks_large_enumerations() {
        let mut stats = identity_stats(8, 0.1);
        stats.k = 7;
        let priors = vec![0.0; 3];
        let err = llr_dpa(Complex64::new(0.0, 0.0), &stats, &priors, false);
        assert!(matches!(err, Err(Error::ComplexityGuard(_))));
    }

    #[test]
    fn gdpa_moments_match_monte_carlo() {
        let (ch, table) = random_system(2, 4, 8, 0.3, 70);
        let stats = compute_statistics(&table, &ch, 0).unwrap();
        let mut rng = stream_rng(71, 0);
        let n = 200_000usize;
        let mut count = vec![0usize; 8];
        let mut mean = vec![[0.0f64; 2]; 8];
        let mut m2 = vec![[0.0f64; 3]; 8];
        for _ in 0..n {
            let idx = rng.gen_range(0..table.entries.len());
            let a = stats.digit_of(idx);
            let noise =
                crate::channel::standard_complex_gaussian(&mut rng) * ch.sigma_w2.sqrt();
            let z = stats.zeta[idx] + noise;
            count[a] += 1;
            mean[a][0] += z.re;
            mean[a][1] += z.im;
            m2[a][0] += z.re * z.re;
            m2[a][1] += z.im * z.im;
            m2[a][2] += z.re * z.im;
        }
        for a in 0..8 {
            let c = count[a] as f64;
            let mu = [mean[a][0] / c, mean[a][1] / c];
            let var_re = m2[a][0] / c - mu[0] * mu[0];
            let var_im = m2[a][1] / c - mu[1] * mu[1];
            let rho = m2[a][2] / c - mu[0] * mu[1];
            let se_mean = (stats.covs[a].mat[0][0] / c).sqrt();
            assert!((mu[0] - stats.means[a][0]).abs() < 4.0 * se_mean);
            assert!((mu[1] - stats.means[a][1]).abs() < 4.0 * se_mean);
            let se_var = stats.covs[a].mat[0][0] * (2.0 / c).sqrt() * 2.0;
            assert!((var_re - stats.covs[a].mat[0][0]).abs() < 4.0 * se_var);
            assert!((var_im - stats.covs[a].mat[1][1]).abs() < 4.0 * se_var);
            assert!((rho - stats.covs[a].mat[0][1]).abs() < 4.0 * se_var);
        }
    }

    #[test]
    fn statistics_section_roundtrips() {
        let (ch, table) = random_system(2, 2, 4, 0.2, 80);
        let stats: Vec<UserStatistics> = (0..2)
            .map(|u| compute_statistics(&table, &ch, u).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_table_with_statistics(&mut buf, &table, &stats).unwrap();
        let mut reader = std::io::BufReader::new(&buf[..]);
        let _table = LookupTable::read_csv(&mut reader).unwrap();
        let parsed = read_statistics_section(&mut reader).unwrap();
        assert_eq!(parsed.len(), 2);
        for (u, row) in parsed.iter().enumerate() {
            assert!((row.0 - stats[u].h_eff).norm() < 1e-15);
            assert_eq!(row.1, stats[u].lambda2);
            assert_eq!(row.3.len(), 4);
            for a in 0..4 {
                assert_eq!(row.3[a], stats[u].means[a]);
                assert_eq!(row.4[a][0], stats[u].covs[a].mat[0][0]);
            }
        }
    }

    #[test]
    fn zero_mean_error_for_symmetric_tables() {
        let (ch, table) = random_system(2, 2, 4, 0.25, 90);
        for user in 0..2 {
            let stats = compute_statistics(&table, &ch, user).unwrap();
            for symbol in 0..4 {
                let eps = conditional_error_mean(&table, &ch, &stats, symbol);
                assert!(
                    eps.norm() < 1e-9,
                    "user {user} symbol {symbol}: E{{eps}} = {eps}"
                );
            }
        }
    }
}
