//! Monte Carlo experiment engine.
//!
//! Three experiment types share one configuration and result schema:
//! uncoded BER with hard phase detection, coded BER through the iterative
//! receiver, and branch-and-bound complexity censuses. Every trial draws
//! its own RNG stream from `(master_seed, trial_index)`, trials are
//! processed in fixed-size chunks whose partial results are merged in trial
//! order, and solvers are deterministic, so every emitted number is
//! reproducible for any worker count.

use crate::alphabet::{GrayMapper, PskAlphabet};
use crate::channel::{
    draw_channel, snr_to_sigma_w2, standard_complex_gaussian, stream_rng, ChannelRealization,
};
use crate::coding::{frame_bits, to_antipodal, CodeSpec, LdpcCode};
use crate::detectors::{compute_statistics, DetectorKind};
use crate::error::{Error, Result};
use crate::idd::{idd_receive, IddConfig};
use crate::linalg::CVec;
use crate::polytope::{build_polyhedron, Polyhedron};
use crate::precoders::{
    build_lookup_table, data_index, mmse_branch_and_bound, mmse_continuous, mmse_mapped,
    rotation_order, zfp_quantized, BbConfig, PrecodeSolution, TablePrecoder,
};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

/// Trials fetched per parallel chunk; fixed so early stopping is
/// independent of the worker count.
const TRIAL_CHUNK: u64 = 64;

/// Precoder selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrecoderKind {
    /// Phase-quantized zero forcing.
    Zfp,
    /// Continuous closed-form MMSE (no quantization).
    Continuous,
    /// Hull relaxation plus nearest-point mapping.
    Mapped,
    /// Optimal branch-and-bound.
    BranchAndBound,
}

/// Detector selection (CLI-facing names).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorChoice {
    /// Exact discrete-precoding-aware detector.
    Dpa,
    /// Gaussian-approximation detector.
    Gdpa,
    /// Linear-model detector.
    #[default]
    DpaLm,
    /// Distortion-unaware AWGN baseline.
    Awgn,
}

impl DetectorChoice {
    /// Maps to the detector implementation.
    pub fn kind(self, allow_large_dpa: bool) -> DetectorKind {
        match self {
            DetectorChoice::Dpa => DetectorKind::Dpa {
                allow_large: allow_large_dpa,
            },
            DetectorChoice::Gdpa => DetectorKind::Gdpa,
            DetectorChoice::DpaLm => DetectorKind::DpaLm,
            DetectorChoice::Awgn => DetectorKind::Awgn,
        }
    }
}

/// Channel-code configuration; presence selects coded experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodeConfig {
    /// Codeword length for the generated code.
    #[serde(default = "default_code_len")]
    pub n: usize,
    /// Construction seed for the generated code.
    #[serde(default = "default_code_seed")]
    pub seed: u64,
    /// Optional alist file overriding the generated code.
    #[serde(default)]
    pub alist: Option<std::path::PathBuf>,
}

fn default_code_len() -> usize {
    crate::coding::DEFAULT_BLOCK_LEN
}

fn default_code_seed() -> u64 {
    crate::coding::DEFAULT_CODE_SEED
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self {
            n: default_code_len(),
            seed: default_code_seed(),
            alist: None,
        }
    }
}

/// One experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// User count.
    pub k: usize,
    /// Antenna count.
    pub m: usize,
    /// Data alphabet cardinality (power of two).
    pub alpha_s: usize,
    /// Transmit alphabet cardinality.
    pub alpha_x: usize,
    /// Total transmit energy (discrete precoders require 1).
    #[serde(default = "default_e_tx")]
    pub e_tx: f64,
    /// SNR grid in dB.
    pub snr_grid_db: Vec<f64>,
    /// Precoder under test.
    pub precoder: PrecoderKind,
    /// Detector for coded runs.
    #[serde(default)]
    pub detector: DetectorChoice,
    /// Feedback passes after the initial detect+decode.
    #[serde(default = "default_n_iter")]
    pub n_iter: usize,
    /// Channel code; absent means uncoded.
    #[serde(default)]
    pub code: Option<CodeConfig>,
    /// Trial cap per SNR point (blocks).
    pub trials: u64,
    /// Early-stop threshold on accumulated bit errors.
    #[serde(default)]
    pub target_errors: Option<u64>,
    /// Slots per channel realization in uncoded runs.
    #[serde(default = "default_symbols_per_block")]
    pub symbols_per_block: usize,
    /// Master seed; with the config it determines every emitted number.
    pub master_seed: u64,
    /// Branch-and-bound candidate budget.
    #[serde(default = "default_max_candidates")]
    pub max_candidates: usize,
    /// Lookup-table entry budget.
    #[serde(default = "default_table_budget")]
    pub table_budget: usize,
    /// Let the exact detector run past its complexity guard.
    #[serde(default)]
    pub allow_large_dpa: bool,
    /// Worker threads (default: rayon's global pool).
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_e_tx() -> f64 {
    1.0
}
fn default_n_iter() -> usize {
    2
}
fn default_symbols_per_block() -> usize {
    50
}
fn default_max_candidates() -> usize {
    1_000_000
}
fn default_table_budget() -> usize {
    4096
}

/// One measured point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    /// Operating SNR in dB.
    pub snr_db: f64,
    /// Bit error rate (`error_count / bit_count`).
    pub ber: f64,
    /// Bit errors counted.
    pub error_count: u64,
    /// Bits simulated.
    pub bit_count: u64,
    /// Wilson 95% interval, lower end.
    pub ci_low: f64,
    /// Wilson 95% interval, upper end.
    pub ci_high: f64,
    /// Mean bound evaluations per precoder solve.
    pub mean_bounds_evaluated: f64,
    /// Mean precoding MSE over transmitted slots.
    pub mean_mse: f64,
    /// Wall-clock seconds for this point.
    pub wall_time_s: f64,
    /// Hash of the generating configuration.
    pub config_hash: String,
    /// Exhaustive-search candidate count, for census rows.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exhaustive_candidates: Option<f64>,
}

/// Stable hash of a configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Wilson 95% score interval for a binomial proportion.
pub fn wilson_interval(errors: u64, total: u64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let z = 1.96f64;
    let n = total as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.k == 0 || cfg.m == 0 {
        return Err(Error::InvalidConfig("k and m must be >= 1".into()));
    }
    if !cfg.alpha_s.is_power_of_two() || cfg.alpha_s < 2 {
        return Err(Error::InvalidConfig(
            "alpha_s must be a power of two >= 2".into(),
        ));
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    if cfg.snr_grid_db.is_empty() {
        return Err(Error::InvalidConfig("snr grid must be nonempty".into()));
    }
    let discrete = !matches!(cfg.precoder, PrecoderKind::Continuous);
    if discrete {
        if cfg.alpha_x < 3 {
            return Err(Error::InvalidConfig(
                "discrete precoding needs alpha_x >= 3".into(),
            ));
        }
        if (cfg.e_tx - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(
                "discrete precoders assume unit transmit energy".into(),
            ));
        }
    }
    if cfg.symbols_per_block == 0 {
        return Err(Error::InvalidConfig(
            "symbols_per_block must be >= 1".into(),
        ));
    }
    Ok(())
}

fn with_pool<T: Send>(threads: Option<usize>, body: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(body),
        None => body(),
    }
}

#[derive(Default, Clone)]
struct Tally {
    errors: u64,
    bits: u64,
    bounds: u64,
    solves: u64,
    mse_sum: f64,
    slots: u64,
}

impl Tally {
    fn merge(&mut self, other: &Tally) {
        self.errors += other.errors;
        self.bits += other.bits;
        self.bounds += other.bounds;
        self.solves += other.solves;
        self.mse_sum += other.mse_sum;
        self.slots += other.slots;
    }
}

/// Runs trials in deterministic chunks, stopping once `target` errors have
/// accumulated. The per-trial closure must be pure in the trial index.
fn run_trials<F>(trials: u64, target: Option<u64>, trial_fn: F) -> Result<Tally>
where
    F: Fn(u64) -> Result<Tally> + Sync,
{
    let mut total = Tally::default();
    let mut start = 0u64;
    while start < trials {
        let end = (start + TRIAL_CHUNK).min(trials);
        let chunk: Vec<Result<Tally>> =
            (start..end).into_par_iter().map(&trial_fn).collect();
        for t in chunk {
            let t = t?;
            total.merge(&t);
            if let Some(target) = target {
                if total.errors >= target {
                    return Ok(total);
                }
            }
        }
        start = end;
    }
    Ok(total)
}

struct UncodedSystem {
    s_alpha: PskAlphabet,
    x_alpha: PskAlphabet,
    mapper: GrayMapper,
    poly: Option<Polyhedron>,
    bb: BbConfig,
}

fn precode_for(
    cfg: &ExperimentConfig,
    sys: &UncodedSystem,
    ch: &ChannelRealization,
    s: &CVec,
) -> Result<PrecodeSolution> {
    match cfg.precoder {
        PrecoderKind::Zfp => zfp_quantized(ch, s, &sys.x_alpha),
        PrecoderKind::Continuous => mmse_continuous(ch, s, cfg.e_tx),
        PrecoderKind::Mapped => mmse_mapped(
            ch,
            s,
            sys.poly.as_ref().expect("hull built for discrete precoders"),
            &sys.x_alpha,
            &sys.bb,
        ),
        PrecoderKind::BranchAndBound => mmse_branch_and_bound(
            ch,
            s,
            sys.poly.as_ref().expect("hull built for discrete precoders"),
            &sys.x_alpha,
            &sys.bb,
        ),
    }
}

/// Uncoded BER with the phase quantizer as hard detector.
pub fn run_uncoded(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    validate(cfg)?;
    if cfg.code.is_some() {
        return Err(Error::InvalidConfig(
            "uncoded run given a code configuration".into(),
        ));
    }
    let hash = config_hash(cfg);
    with_pool(cfg.threads, || {
        cfg.snr_grid_db
            .iter()
            .map(|&snr| uncoded_point(cfg, snr, &hash))
            .collect()
    })
}

fn uncoded_point(cfg: &ExperimentConfig, snr_db: f64, hash: &str) -> Result<ResultRow> {
    let started = Instant::now();
    let sigma_w2 = snr_to_sigma_w2(snr_db, cfg.e_tx);
    let discrete = !matches!(cfg.precoder, PrecoderKind::Continuous);
    let sys = UncodedSystem {
        s_alpha: PskAlphabet::data(cfg.alpha_s)?,
        x_alpha: PskAlphabet::transmit(cfg.alpha_x, cfg.m, cfg.e_tx)?,
        mapper: GrayMapper::new(cfg.alpha_s.trailing_zeros() as usize)?,
        poly: if discrete {
            Some(build_polyhedron(cfg.m, cfg.alpha_x)?)
        } else {
            None
        },
        bb: BbConfig {
            max_candidates: cfg.max_candidates,
            ..BbConfig::default()
        },
    };
    // Rotation classes shared by both alphabets let one solve cover a whole
    // orbit of data vectors.
    let g = if discrete && matches!(cfg.precoder, PrecoderKind::Mapped | PrecoderKind::BranchAndBound)
    {
        rotation_order(cfg.alpha_s, cfg.alpha_x)
    } else {
        1
    };
    let s_step = cfg.alpha_s / g;
    let x_step = cfg.alpha_x / g;
    let n_bits = sys.mapper.bits_per_symbol;

    let tally = run_trials(cfg.trials, cfg.target_errors, |trial| {
        let mut rng = stream_rng(cfg.master_seed, trial);
        let ch = draw_channel(cfg.k, cfg.m, sigma_w2, &mut rng)?;
        // Cache: canonical data index -> (per-user noiseless samples, mse,
        // transmit indices or points).
        let mut cache: HashMap<usize, (CVec, f64)> = HashMap::new();
        let mut t = Tally::default();
        for _ in 0..cfg.symbols_per_block {
            let digits: Vec<u8> = (0..cfg.k)
                .map(|_| rng.gen_range(0..cfg.alpha_s) as u8)
                .collect();
            // Canonicalize by the common rotation group.
            let shift = (digits[0] as usize) / s_step * s_step;
            let canon: Vec<u8> = digits
                .iter()
                .map(|&d| ((d as usize + cfg.alpha_s - shift) % cfg.alpha_s) as u8)
                .collect();
            let canon_idx = data_index(&canon, cfg.alpha_s);
            if !cache.contains_key(&canon_idx) {
                let s = CVec::from_iterator(
                    cfg.k,
                    canon.iter().map(|&d| sys.s_alpha.point(d as usize)),
                );
                let sol = precode_for(cfg, &sys, &ch, &s)?;
                t.bounds += sol.bounds_evaluated;
                t.solves += 1;
                let hx = &ch.h * &sol.x;
                cache.insert(canon_idx, (hx, sol.mse));
            }
            let (hx_canon, mse) = cache.get(&canon_idx).expect("just inserted");
            // Rotate the cached noiseless samples back to the true data.
            let rot = Complex64::from_polar(
                1.0,
                2.0 * std::f64::consts::PI * (shift / s_step) as f64 * x_step as f64
                    / cfg.alpha_x as f64,
            );
            t.mse_sum += mse;
            t.slots += 1;
            for (u, &digit) in digits.iter().enumerate() {
                let z = hx_canon[u] * rot + standard_complex_gaussian(&mut rng) * sigma_w2.sqrt();
                let detected = sys.s_alpha.nearest(z);
                let tx_bits = sys.mapper.demap(digit as usize);
                let rx_bits = sys.mapper.demap(detected);
                t.errors += tx_bits
                    .iter()
                    .zip(rx_bits.iter())
                    .filter(|(a, b)| a != b)
                    .count() as u64;
                t.bits += n_bits as u64;
            }
        }
        Ok(t)
    })?;

    Ok(finish_row(snr_db, tally, hash, started, None))
}

fn finish_row(
    snr_db: f64,
    t: Tally,
    hash: &str,
    started: Instant,
    exhaustive: Option<f64>,
) -> ResultRow {
    let (ci_low, ci_high) = wilson_interval(t.errors, t.bits);
    ResultRow {
        snr_db,
        ber: if t.bits == 0 {
            0.0
        } else {
            t.errors as f64 / t.bits as f64
        },
        error_count: t.errors,
        bit_count: t.bits,
        ci_low,
        ci_high,
        mean_bounds_evaluated: t.bounds as f64 / t.solves.max(1) as f64,
        mean_mse: t.mse_sum / t.slots.max(1) as f64,
        wall_time_s: started.elapsed().as_secs_f64(),
        config_hash: hash.to_string(),
        exhaustive_candidates: exhaustive,
    }
}

/// Coded BER through the iterative receiver.
pub fn run_coded(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let rows = run_coded_multi(cfg, &[cfg.detector])?;
    Ok(rows.into_iter().next().expect("one detector requested"))
}

/// Coded BER for several detectors over the same precoded blocks and noise.
/// Returns one row vector per detector, in the given order.
pub fn run_coded_multi(
    cfg: &ExperimentConfig,
    detectors: &[DetectorChoice],
) -> Result<Vec<Vec<ResultRow>>> {
    validate(cfg)?;
    let code_cfg = cfg
        .code
        .clone()
        .ok_or_else(|| Error::InvalidConfig("coded run needs a code configuration".into()))?;
    let table_precoder = match cfg.precoder {
        PrecoderKind::Mapped => TablePrecoder::Mapped,
        PrecoderKind::BranchAndBound => TablePrecoder::BranchAndBound,
        other => {
            return Err(Error::InvalidConfig(format!(
                "coded runs precompute lookup tables and support only the \
                 mapped and branch-and-bound precoders, got {other:?}"
            )))
        }
    };
    if detectors.is_empty() {
        return Err(Error::InvalidConfig("no detector selected".into()));
    }
    let spec = match &code_cfg.alist {
        Some(path) => CodeSpec::Alist(path.clone()),
        None => CodeSpec::Generated {
            n: code_cfg.n,
            seed: code_cfg.seed,
        },
    };
    let code = crate::coding::load_or_generate_code(&spec)?;
    let n_bits = cfg.alpha_s.trailing_zeros() as usize;
    if code.n % n_bits != 0 {
        return Err(Error::InvalidConfig(format!(
            "{} bits per symbol do not divide the codeword length {}",
            n_bits, code.n
        )));
    }
    let hash = config_hash(cfg);

    with_pool(cfg.threads, || {
        let mut out: Vec<Vec<ResultRow>> = vec![Vec::new(); detectors.len()];
        for &snr in &cfg.snr_grid_db {
            let rows = coded_point(cfg, snr, &code, table_precoder, detectors, &hash)?;
            for (d, row) in rows.into_iter().enumerate() {
                out[d].push(row);
            }
        }
        Ok(out)
    })
}

fn coded_point(
    cfg: &ExperimentConfig,
    snr_db: f64,
    code: &LdpcCode,
    table_precoder: TablePrecoder,
    detectors: &[DetectorChoice],
    hash: &str,
) -> Result<Vec<ResultRow>> {
    let started = Instant::now();
    let sigma_w2 = snr_to_sigma_w2(snr_db, cfg.e_tx);
    let s_alpha = PskAlphabet::data(cfg.alpha_s)?;
    let x_alpha = PskAlphabet::transmit(cfg.alpha_x, cfg.m, cfg.e_tx)?;
    let mapper = GrayMapper::new(cfg.alpha_s.trailing_zeros() as usize)?;
    let poly = build_polyhedron(cfg.m, cfg.alpha_x)?;
    let bb = BbConfig {
        max_candidates: cfg.max_candidates,
        ..BbConfig::default()
    };
    let n_bits = mapper.bits_per_symbol;
    let slots = code.n / n_bits;

    // Per-trial tallies carry one error count per detector; bits/bounds are
    // shared. Reuse Tally for the shared part and a vector for errors.
    struct CodedOut {
        shared: Tally,
        errors: Vec<u64>,
    }

    let run_trial = |trial: u64| -> Result<CodedOut> {
        let mut rng = stream_rng(cfg.master_seed, trial);
        let ch = draw_channel(cfg.k, cfg.m, sigma_w2, &mut rng)?;
        let table = build_lookup_table(
            &ch,
            &s_alpha,
            &x_alpha,
            &poly,
            table_precoder,
            cfg.table_budget,
            &bb,
        )?;
        let stats: Vec<_> = (0..cfg.k)
            .map(|u| compute_statistics(&table, &ch, u))
            .collect::<Result<_>>()?;

        // Encode one codeword per user.
        let mut messages = Vec::with_capacity(cfg.k);
        let mut frames = Vec::with_capacity(cfg.k);
        for _ in 0..cfg.k {
            let msg: Vec<u8> = (0..code.k_msg).map(|_| rng.gen_range(0..2u8)).collect();
            let cw = code.encode(&msg)?;
            frames.push(frame_bits(&to_antipodal(&cw), n_bits)?);
            messages.push(msg);
        }

        // Precode slot by slot via the table and add noise.
        let mut z: Vec<Vec<Complex64>> = vec![Vec::with_capacity(slots); cfg.k];
        let mut shared = Tally::default();
        for t in 0..slots {
            let digits: Vec<u8> = (0..cfg.k)
                .map(|u| mapper.map(&frames[u][t]).map(|p| p as u8))
                .collect::<Result<_>>()?;
            let idx = data_index(&digits, cfg.alpha_s);
            let x = table.x_vec(idx);
            shared.mse_sum += table.entries[idx].mse;
            shared.slots += 1;
            let hx = &ch.h * &x;
            for u in 0..cfg.k {
                z[u].push(hx[u] + standard_complex_gaussian(&mut rng) * sigma_w2.sqrt());
            }
        }
        shared.bounds = table.build_bounds_total;
        shared.solves = table.build_solves;

        // Every detector sees the same received blocks.
        let mut errors = vec![0u64; detectors.len()];
        for (d, &det) in detectors.iter().enumerate() {
            let idd_cfg = IddConfig {
                detector: det.kind(cfg.allow_large_dpa),
                n_iter: cfg.n_iter,
                ..IddConfig::default()
            };
            for u in 0..cfg.k {
                let out = idd_receive(&z[u], &stats[u], code, &idd_cfg)?;
                errors[d] += out
                    .message_bits
                    .iter()
                    .zip(messages[u].iter())
                    .filter(|(a, b)| a != b)
                    .count() as u64;
                shared.bits += code.k_msg as u64;
            }
        }
        // Shared bit counter accumulated once per detector; normalize.
        shared.bits /= detectors.len() as u64;
        Ok(CodedOut { shared, errors })
    };

    // Deterministic chunked accumulation with early stop once every
    // detector reached the target.
    let mut shared = Tally::default();
    let mut errors = vec![0u64; detectors.len()];
    let mut start = 0u64;
    'outer: while start < cfg.trials {
        let end = (start + TRIAL_CHUNK).min(cfg.trials);
        let chunk: Vec<Result<CodedOut>> = (start..end).into_par_iter().map(run_trial).collect();
        for out in chunk {
            let out = out?;
            shared.merge(&out.shared);
            for (e, v) in errors.iter_mut().zip(out.errors.iter()) {
                *e += v;
            }
            if let Some(target) = cfg.target_errors {
                if errors.iter().all(|&e| e >= target) {
                    break 'outer;
                }
            }
        }
        start = end;
    }

    Ok(detectors
        .iter()
        .enumerate()
        .map(|(d, _)| {
            let t = Tally {
                errors: errors[d],
                ..shared.clone()
            };
            finish_row(snr_db, t, hash, started, None)
        })
        .collect())
}

/// Mean bound-evaluation census of the branch-and-bound precoder.
pub fn run_bound_census(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    validate(cfg)?;
    if cfg.precoder != PrecoderKind::BranchAndBound {
        return Err(Error::InvalidConfig(
            "bound census requires the branch-and-bound precoder".into(),
        ));
    }
    let hash = config_hash(cfg);
    let exhaustive = (cfg.alpha_x as f64).powi(cfg.m as i32);
    with_pool(cfg.threads, || {
        let s_alpha = PskAlphabet::data(cfg.alpha_s)?;
        let x_alpha = PskAlphabet::transmit(cfg.alpha_x, cfg.m, cfg.e_tx)?;
        let poly = build_polyhedron(cfg.m, cfg.alpha_x)?;
        let bb = BbConfig {
            max_candidates: cfg.max_candidates,
            ..BbConfig::default()
        };
        cfg.snr_grid_db
            .iter()
            .map(|&snr| {
                let started = Instant::now();
                let sigma_w2 = snr_to_sigma_w2(snr, cfg.e_tx);
                let tally = run_trials(cfg.trials, None, |trial| {
                    let mut rng = stream_rng(cfg.master_seed, trial);
                    let ch = draw_channel(cfg.k, cfg.m, sigma_w2, &mut rng)?;
                    let s = CVec::from_iterator(
                        cfg.k,
                        (0..cfg.k).map(|_| s_alpha.point(rng.gen_range(0..cfg.alpha_s))),
                    );
                    let sol = mmse_branch_and_bound(&ch, &s, &poly, &x_alpha, &bb)?;
                    Ok(Tally {
                        errors: 0,
                        bits: 0,
                        bounds: sol.bounds_evaluated,
                        solves: 1,
                        mse_sum: sol.mse,
                        slots: 1,
                    })
                })?;
                Ok(finish_row(snr, tally, &hash, started, Some(exhaustive)))
            })
            .collect()
    })
}

/// Output format for [`emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmitFormat {
    /// Fixed-column CSV.
    Csv,
    /// Pretty JSON array with every row field.
    Json,
}

/// Writes result rows; CSV uses the fixed column order
/// `snr_db, ber, errors, bits, ci_low, ci_high, mean_bounds, mean_mse,
/// seconds`.
pub fn emit<W: Write>(rows: &[ResultRow], format: EmitFormat, w: &mut W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no results to emit".into()));
    }
    let io_err = |e: std::io::Error| Error::Io {
        path: "<writer>".into(),
        source: e,
    };
    match format {
        EmitFormat::Csv => {
            writeln!(
                w,
                "snr_db,ber,errors,bits,ci_low,ci_high,mean_bounds,mean_mse,seconds"
            )
            .map_err(io_err)?;
            for r in rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    r.snr_db,
                    r.ber,
                    r.error_count,
                    r.bit_count,
                    r.ci_low,
                    r.ci_high,
                    r.mean_bounds_evaluated,
                    r.mean_mse,
                    r.wall_time_s
                )
                .map_err(io_err)?;
            }
        }
        EmitFormat::Json => {
            serde_json::to_writer_pretty(&mut *w, rows)
                .map_err(|e| Error::Parse(format!("json serialization failed: {e}")))?;
            writeln!(w).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Writes results to a file path.
pub fn emit_to_path(rows: &[ResultRow], format: EmitFormat, path: &std::path::Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    emit(rows, format, &mut file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_uncoded_cfg() -> ExperimentConfig {
        ExperimentConfig {
            k: 2,
            m: 3,
            alpha_s: 4,
            alpha_x: 4,
            e_tx: 1.0,
            snr_grid_db: vec![5.0],
            precoder: PrecoderKind::BranchAndBound,
            detector: DetectorChoice::DpaLm,
            n_iter: 0,
            code: None,
            trials: 20,
            target_errors: None,
            symbols_per_block: 25,
            master_seed: 7,
            max_candidates: 1_000_000,
            table_budget: 4096,
            allow_large_dpa: false,
            threads: Some(2),
        }
    }

    #[test]
    fn uncoded_is_deterministic_across_worker_counts() {
        let mut cfg = small_uncoded_cfg();
        let a = run_uncoded(&cfg).unwrap();
        cfg.threads = Some(1);
        let b = run_uncoded(&cfg).unwrap();
        // The thread count participates in the config hash but must not
        // change any measured number.
        assert_eq!(a[0].error_count, b[0].error_count);
        assert_eq!(a[0].bit_count, b[0].bit_count);
        assert_eq!(a[0].ber, b[0].ber);
        assert_eq!(a[0].mean_bounds_evaluated, b[0].mean_bounds_evaluated);
        assert_eq!(a[0].mean_mse, b[0].mean_mse);

        let c = run_uncoded(&small_uncoded_cfg()).unwrap();
        assert_eq!(a[0].error_count, c[0].error_count);
        assert_eq!(a[0].config_hash, c[0].config_hash);
    }

    #[test]
    fn error_accounting_is_exact() {
        let cfg = small_uncoded_cfg();
        let rows = run_uncoded(&cfg).unwrap();
        for r in &rows {
            assert_eq!((r.ber * r.bit_count as f64).round() as u64, r.error_count);
            assert!(r.ci_low <= r.ber && r.ber <= r.ci_high);
        }
    }

    #[test]
    fn high_snr_single_user_floor_is_tiny() {
        let cfg = ExperimentConfig {
            k: 1,
            m: 4,
            alpha_s: 8,
            alpha_x: 8,
            snr_grid_db: vec![120.0],
            trials: 40,
            symbols_per_block: 20,
            ..small_uncoded_cfg()
        };
        let rows = run_uncoded(&cfg).unwrap();
        assert!(
            rows[0].ber < 1e-3,
            "branch-and-bound hard-detection floor {} too high",
            rows[0].ber
        );
    }

    #[test]
    fn early_stop_respects_target() {
        let mut cfg = small_uncoded_cfg();
        cfg.snr_grid_db = vec![-5.0];
        cfg.trials = 10_000;
        cfg.target_errors = Some(50);
        let rows = run_uncoded(&cfg).unwrap();
        assert!(rows[0].error_count >= 50);
        // Stops within a couple of chunks rather than running every trial.
        assert!(rows[0].bit_count < 10_000 * 25 * 2 * 2);
    }

    #[test]
    fn invalid_configs_are_rejected_before_work() {
        let mut cfg = small_uncoded_cfg();
        cfg.alpha_s = 6;
        assert!(run_uncoded(&cfg).is_err());

        let mut cfg = small_uncoded_cfg();
        cfg.alpha_x = 2;
        assert!(run_uncoded(&cfg).is_err());

        let mut cfg = small_uncoded_cfg();
        cfg.trials = 0;
        assert!(run_uncoded(&cfg).is_err());

        let mut cfg = small_uncoded_cfg();
        cfg.code = Some(CodeConfig::default());
        assert!(run_uncoded(&cfg).is_err());

        let mut cfg = small_uncoded_cfg();
        cfg.e_tx = 2.0;
        assert!(run_uncoded(&cfg).is_err());
    }

    #[test]
    fn census_reports_bounds_and_reference_line() {
        let cfg = ExperimentConfig {
            k: 2,
            m: 3,
            snr_grid_db: vec![0.0],
            trials: 10,
            ..small_uncoded_cfg()
        };
        let rows = run_bound_census(&cfg).unwrap();
        assert_eq!(rows[0].exhaustive_candidates, Some(64.0));
        assert!(rows[0].mean_bounds_evaluated >= 1.0);
        assert!(rows[0].mean_bounds_evaluated < 64.0);

        let mut bad = cfg;
        bad.precoder = PrecoderKind::Mapped;
        assert!(run_bound_census(&bad).is_err());
    }

    #[test]
    fn coded_smoke_run_decodes_cleanly_at_high_snr() {
        let cfg = ExperimentConfig {
            k: 2,
            m: 4,
            alpha_s: 4,
            alpha_x: 4,
            snr_grid_db: vec![25.0],
            precoder: PrecoderKind::BranchAndBound,
            detector: DetectorChoice::Gdpa,
            n_iter: 1,
            code: Some(CodeConfig::default()),
            trials: 3,
            ..small_uncoded_cfg()
        };
        let rows = run_coded(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bit_count, 3 * 2 * 243);
        assert_eq!(rows[0].error_count, 0, "clean channel should decode");
    }

    #[test]
    fn coded_multi_shares_blocks_across_detectors() {
        let cfg = ExperimentConfig {
            k: 2,
            m: 4,
            alpha_s: 4,
            alpha_x: 4,
            snr_grid_db: vec![6.0],
            precoder: PrecoderKind::BranchAndBound,
            n_iter: 0,
            code: Some(CodeConfig::default()),
            trials: 4,
            ..small_uncoded_cfg()
        };
        let multi = run_coded_multi(&cfg, &[DetectorChoice::Gdpa, DetectorChoice::Gdpa]).unwrap();
        // Identical detectors on identical blocks must agree bit for bit.
        assert_eq!(multi[0][0].error_count, multi[1][0].error_count);
        assert_eq!(multi[0][0].bit_count, multi[1][0].bit_count);

        let single = run_coded(&ExperimentConfig {
            detector: DetectorChoice::Gdpa,
            ..cfg
        })
        .unwrap();
        assert_eq!(single[0].error_count, multi[0][0].error_count);
    }

    #[test]
    fn emit_formats() {
        let rows = vec![ResultRow {
            snr_db: 10.0,
            ber: 0.125,
            error_count: 4,
            bit_count: 32,
            ci_low: 0.05,
            ci_high: 0.29,
            mean_bounds_evaluated: 3.5,
            mean_mse: 0.9,
            wall_time_s: 0.01,
            config_hash: "abcd".into(),
            exhaustive_candidates: None,
        }];
        let mut csv = Vec::new();
        emit(&rows, EmitFormat::Csv, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "snr_db,ber,errors,bits,ci_low,ci_high,mean_bounds,mean_mse,seconds"
        );
        assert!(text.ends_with('\n'));
        assert_eq!(lines[1].split(',').count(), 9);

        let mut json = Vec::new();
        emit(&rows, EmitFormat::Json, &mut json).unwrap();
        let back: Vec<ResultRow> = serde_json::from_slice(&json).unwrap();
        assert_eq!(back[0].error_count, rows[0].error_count);
        assert_eq!(back[0].ber, rows[0].ber);

        assert!(emit(&[], EmitFormat::Csv, &mut Vec::new()).is_err());
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let cfg = small_uncoded_cfg();
        let a = config_hash(&cfg);
        let b = config_hash(&small_uncoded_cfg());
        assert_eq!(a, b);
        let mut other = small_uncoded_cfg();
        other.master_seed = 8;
        assert_ne!(a, config_hash(&other));
    }

    #[test]
    fn wilson_interval_behaves() {
        let (lo, hi) = wilson_interval(0, 1000);
        assert!(lo == 0.0 && hi < 0.01);
        let (lo, hi) = wilson_interval(500, 1000);
        assert!(lo < 0.5 && hi > 0.5);
        assert!(hi - lo < 0.07);
    }
}
