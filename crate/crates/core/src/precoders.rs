//! MMSE precoders for constant-envelope phase-quantized transmission.
//!
//! Four precoders share one interface:
//!
//! * [`zfp_quantized`] — zero-forcing followed by entrywise phase
//!   quantization; the cheap baseline.
//! * [`mmse_continuous`] — the closed-form MMSE precoder without
//!   quantization, meeting the transmit-energy constraint with equality.
//! * [`mmse_mapped`] — solves the convex-hull relaxation as a QP and maps
//!   the relaxed solution to the nearest discrete vector; the relaxed
//!   objective lower-bounds and the mapped objective upper-bounds the
//!   discrete optimum.
//! * [`mmse_branch_and_bound`] — breadth-first tree search over antenna
//!   prefixes using the relaxation for pruning; returns the exact discrete
//!   optimum.
//!
//! [`build_lookup_table`] precomputes one entry per data vector for a block
//! fading interval, enforcing circular symmetry by construction when the
//! data and transmit alphabets have equal cardinality.

use crate::alphabet::PskAlphabet;
use crate::channel::{stack_real, stacked_noise_energy, unstack, ChannelRealization};
use crate::error::{Error, Result};
use crate::linalg::{CVec, RMat, RVec};
use crate::polytope::Polyhedron;
use crate::qpsolve::{
    assemble_full_qp, assemble_subproblem_qp, solve, QpProblem, QpStatus, DEFAULT_MAX_ITER,
};
use num_complex::Complex64;
use sha2::{Digest, Sha256};
use std::io::{BufRead, Read, Write};

/// Pruning guard: a prefix survives only if its lower bound is below the
/// incumbent by more than this margin, so QP tolerance cannot flip pruning
/// decisions on near-ties.
pub const PRUNE_GUARD: f64 = 1e-10;

/// Tolerance for deciding that a relaxed solution already lies in `X^M`.
const IN_SET_TOL: f64 = 1e-6;

/// Branch-and-bound options.
#[derive(Debug, Clone)]
pub struct BbConfig {
    /// Abort threshold for the per-level candidate set.
    pub max_candidates: usize,
    /// Relative duality-gap tolerance handed to the QP solver.
    pub gap_tol: f64,
    /// Iteration cap per QP solve.
    pub max_iter: usize,
}

impl Default for BbConfig {
    fn default() -> Self {
        // Tree search solves to a much sharper gap than the standalone
        // default: a node whose subtree optimum ties the incumbent must land
        // within the pruning guard of the tie, or it survives spuriously and
        // costs a whole extra level of child solves.
        Self {
            max_candidates: 1_000_000,
            gap_tol: 1e-12,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Output of a precoder run.
#[derive(Debug, Clone)]
pub struct PrecodeSolution {
    /// Precoding vector (entries in `X` for the discrete precoders).
    pub x: CVec,
    /// Receive scaling factor.
    pub f: f64,
    /// MSE achieved by `(x, f)`.
    pub mse: f64,
    /// Relaxation lower bound (discrete precoders only).
    pub mse_lb: Option<f64>,
    /// Number of relaxation subproblems solved.
    pub bounds_evaluated: u64,
    /// True when `mse` is certified equal to the discrete optimum (or, for
    /// the continuous precoder, the continuous one).
    pub optimal: bool,
    /// True when branch-and-bound aborted on the candidate budget; the
    /// returned vector is still a valid upper bound.
    pub partial: bool,
    /// Set when a rank-deficient channel forced a pseudo-inverse.
    pub rank_warning: bool,
}

/// Raw optimal scaling for a fully fixed discrete vector:
/// `f = s_r^T u / (||u||^2 + E{w_r^T w_r})` with `u = H_r x_r`; zero when
/// `u` vanishes.
pub fn optimal_scaling(h_r: &RMat, x_r_full: &RVec, noise_energy: f64, s_r: &RVec) -> f64 {
    let u = h_r * x_r_full;
    let denom = u.norm_squared() + noise_energy;
    if denom <= 0.0 {
        return 0.0;
    }
    s_r.dot(&u) / denom
}

/// Scaling and MSE of a fixed discrete vector, treating non-positive optimal
/// scalings as the degenerate `f -> 0` limit where the MSE is `||s_r||^2`.
pub fn discrete_mse(h_r: &RMat, x_r_full: &RVec, noise_energy: f64, s_r: &RVec) -> (f64, f64) {
    let u = h_r * x_r_full;
    let denom = u.norm_squared() + noise_energy;
    let num = s_r.dot(&u);
    if denom <= 0.0 || num <= 0.0 {
        return (0.0, s_r.norm_squared());
    }
    let f = num / denom;
    let mse = (f * u - s_r).norm_squared() + f * f * noise_energy;
    (f, mse)
}

/// Zero-forcing precoder with entrywise phase quantization to `X`.
pub fn zfp_quantized(
    ch: &ChannelRealization,
    s: &CVec,
    x_alpha: &PskAlphabet,
) -> Result<PrecodeSolution> {
    if ch.k > ch.m {
        return Err(Error::InvalidConfig(format!(
            "zero-forcing needs K <= M, got K={} M={}",
            ch.k, ch.m
        )));
    }
    let hh = &ch.h * ch.h.adjoint();
    let mut rank_warning = false;
    let y = match nalgebra::Cholesky::new(hh.clone()) {
        Some(chol) => chol.solve(s),
        None => {
            rank_warning = true;
            let mut reg = hh;
            for i in 0..ch.k {
                reg[(i, i)] += Complex64::new(1e-12, 0.0);
            }
            nalgebra::Cholesky::new(reg)
                .ok_or_else(|| Error::SolverFailure("channel Gram not invertible".into()))?
                .solve(s)
        }
    };
    let x_unq = ch.h.adjoint() * y;
    let idx: Vec<u8> = x_unq.iter().map(|z| x_alpha.nearest(*z) as u8).collect();
    let x = materialize(&idx, x_alpha);
    let h_r = ch.stacked();
    let s_r = stack_real(s);
    let noise_energy = stacked_noise_energy(ch.k, ch.sigma_w2);
    let (f, mse) = discrete_mse(&h_r, &stack_real(&x), noise_energy, &s_r);
    Ok(PrecodeSolution {
        x,
        f,
        mse,
        mse_lb: None,
        bounds_evaluated: 0,
        optimal: false,
        partial: false,
        rank_warning,
    })
}

/// Closed-form continuous MMSE precoder under the total transmit-energy
/// constraint.
pub fn mmse_continuous(ch: &ChannelRealization, s: &CVec, e_tx: f64) -> Result<PrecodeSolution> {
    if e_tx <= 0.0 {
        return Err(Error::InvalidConfig("transmit energy must be > 0".into()));
    }
    let s_energy: f64 = s.iter().map(|z| z.norm_sqr()).sum();
    if s_energy == 0.0 {
        return Err(Error::InvalidConfig(
            "zero data vector has no MMSE precoder".into(),
        ));
    }
    let c = stacked_noise_energy(ch.k, ch.sigma_w2) / e_tx;
    let mut a = ch.h.adjoint() * &ch.h;
    for i in 0..ch.m {
        a[(i, i)] += Complex64::new(c, 0.0);
    }
    let rhs = ch.h.adjoint() * s;
    let y = match nalgebra::Cholesky::new(a.clone()) {
        Some(chol) => chol.solve(&rhs),
        None => {
            // sigma_w^2 = 0 with a rank-deficient channel: regularize.
            for i in 0..ch.m {
                a[(i, i)] += Complex64::new(1e-12, 0.0);
            }
            nalgebra::Cholesky::new(a)
                .ok_or_else(|| Error::SolverFailure("regularized Gram not invertible".into()))?
                .solve(&rhs)
        }
    };
    let norm_y = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm_y == 0.0 {
        return Err(Error::SolverFailure("degenerate zero precoder".into()));
    }
    let f = norm_y / e_tx.sqrt();
    let x = y.map(|z| z / f);
    let hy = &ch.h * &y;
    let mse = s
        .iter()
        .zip(hy.iter())
        .map(|(si, hi)| (hi - si).norm_sqr())
        .sum::<f64>()
        + f * f * stacked_noise_energy(ch.k, ch.sigma_w2);
    Ok(PrecodeSolution {
        x,
        f,
        mse,
        mse_lb: None,
        bounds_evaluated: 0,
        optimal: true,
        partial: false,
        rank_warning: false,
    })
}

struct RelaxedStep {
    mapped_idx: Vec<u8>,
    f: f64,
    mse: f64,
    lb: f64,
    lb_certified: bool,
    in_feasible_set: bool,
}

fn solve_relaxed_and_map(
    problem: &QpProblem,
    x_alpha: &PskAlphabet,
    mapped_mse: impl Fn(&[u8]) -> (f64, f64),
    cfg: &BbConfig,
) -> Result<RelaxedStep> {
    let mut sol = solve(problem, cfg.gap_tol, cfg.max_iter)?;
    if sol.status != QpStatus::Optimal {
        // One retry with more headroom; an unconverged value must not
        // certify pruning decisions.
        sol = solve(problem, cfg.gap_tol, cfg.max_iter * 4)?;
    }
    let certified = !sol.used_fallback && sol.status == QpStatus::Optimal;
    let x_lb = unstack(&(&sol.x_f / sol.f));
    let mut mapped_idx = Vec::with_capacity(x_lb.len());
    let mut in_set = true;
    for z in x_lb.iter() {
        let idx = x_alpha.nearest(*z);
        if (z - x_alpha.point(idx)).norm() > IN_SET_TOL {
            in_set = false;
        }
        mapped_idx.push(idx as u8);
    }
    let (f, mse) = mapped_mse(&mapped_idx);
    Ok(RelaxedStep {
        mapped_idx,
        f,
        mse,
        lb: sol.objective.min(mse),
        lb_certified: certified,
        in_feasible_set: in_set,
    })
}

/// Suboptimal precoder: solve the hull relaxation, map to the nearest
/// discrete vector, recompute the optimal scaling.
pub fn mmse_mapped(
    ch: &ChannelRealization,
    s: &CVec,
    poly: &Polyhedron,
    x_alpha: &PskAlphabet,
    cfg: &BbConfig,
) -> Result<PrecodeSolution> {
    let h_r = ch.stacked();
    let s_r = stack_real(s);
    let noise_energy = stacked_noise_energy(ch.k, ch.sigma_w2);
    let qp = assemble_full_qp(&h_r, &s_r, noise_energy, poly);
    let step = solve_relaxed_and_map(
        &qp,
        x_alpha,
        |idx| discrete_mse(&h_r, &stack_real(&materialize(idx, x_alpha)), noise_energy, &s_r),
        cfg,
    )?;
    Ok(PrecodeSolution {
        x: materialize(&step.mapped_idx, x_alpha),
        f: step.f,
        mse: step.mse,
        mse_lb: Some(step.lb),
        bounds_evaluated: 1,
        optimal: step.in_feasible_set || step.mse <= step.lb + PRUNE_GUARD,
        partial: false,
        rank_warning: false,
    })
}

/// Optimal precoder: breadth-first branch-and-bound over antenna prefixes
/// with hull-relaxation lower bounds and mapped upper bounds.
pub fn mmse_branch_and_bound(
    ch: &ChannelRealization,
    s: &CVec,
    poly: &Polyhedron,
    x_alpha: &PskAlphabet,
    cfg: &BbConfig,
) -> Result<PrecodeSolution> {
    let m = ch.m;
    let alpha = x_alpha.cardinality;
    let h_r = ch.stacked();
    let s_r = stack_real(s);
    let noise_energy = stacked_noise_energy(ch.k, ch.sigma_w2);

    // Initialization: the full relaxation gives the root lower bound and a
    // first incumbent. A relaxed solution that is already discrete is
    // optimal and skips the tree search.
    let root_qp = assemble_full_qp(&h_r, &s_r, noise_energy, poly);
    let root = solve_relaxed_and_map(
        &root_qp,
        x_alpha,
        |idx| discrete_mse(&h_r, &stack_real(&materialize(idx, x_alpha)), noise_energy, &s_r),
        cfg,
    )?;
    let mut bounds_evaluated = 1u64;
    let mut best_idx = root.mapped_idx.clone();
    let mut best_mse = root.mse;
    let mut best_f = root.f;
    let root_lb = root.lb;

    if root.in_feasible_set {
        return Ok(PrecodeSolution {
            x: materialize(&best_idx, x_alpha),
            f: best_f,
            mse: best_mse,
            mse_lb: Some(root_lb),
            bounds_evaluated,
            optimal: true,
            partial: false,
            rank_warning: false,
        });
    }

    let sub_polys: Vec<Polyhedron> = (1..m)
        .map(|d| poly.subproblem(d))
        .collect::<Result<_>>()?;

    // Level d holds prefixes of length d with the lower bound inherited
    // from their parent; the first level is X itself under the root bound.
    let mut level: Vec<(Vec<u8>, f64)> = (0..alpha).map(|i| (vec![i as u8], root_lb)).collect();
    let mut partial = false;

    for d in 1..m {
        let h_fixed = h_r.columns(0, 2 * d).into_owned();
        let h_free = h_r.columns(2 * d, 2 * (m - d)).into_owned();
        let sub_poly = &sub_polys[d - 1];
        let mut scored: Vec<(Vec<u8>, f64, bool)> = Vec::with_capacity(level.len());

        // Most promising nodes first, so the incumbent tightens early and
        // later siblings can be discarded on their inherited bound alone,
        // without evaluating a new one.
        level.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));

        for (prefix, inherited_lb) in level.drain(..) {
            if inherited_lb >= best_mse - PRUNE_GUARD {
                continue;
            }
            let x_fixed = stack_real(&materialize(&prefix, x_alpha));
            let qp = assemble_subproblem_qp(
                &h_free,
                &h_fixed,
                &x_fixed,
                &s_r,
                noise_energy,
                Some(sub_poly),
            );
            let step = solve_relaxed_and_map(
                &qp,
                x_alpha,
                |suffix| {
                    let mut full = prefix.clone();
                    full.extend_from_slice(suffix);
                    discrete_mse(
                        &h_r,
                        &stack_real(&materialize(&full, x_alpha)),
                        noise_energy,
                        &s_r,
                    )
                },
                cfg,
            )?;
            bounds_evaluated += 1;
            if step.mse < best_mse {
                best_mse = step.mse;
                best_f = step.f;
                best_idx = prefix.clone();
                best_idx.extend_from_slice(&step.mapped_idx);
            }
            // A node solved by the fallback has no certified bound; its
            // children inherit the parent's certified one.
            let lb = if step.lb_certified {
                step.lb.max(inherited_lb)
            } else {
                inherited_lb
            };
            scored.push((prefix, lb, step.lb_certified));
        }

        // Prune against the freshest incumbent.
        let survivors: Vec<(Vec<u8>, f64)> = scored
            .into_iter()
            .filter(|(_, lb, _)| *lb < best_mse - PRUNE_GUARD)
            .map(|(prefix, lb, _)| (prefix, lb))
            .collect();

        let next_len = survivors.len().saturating_mul(alpha);
        if next_len > cfg.max_candidates {
            partial = true;
            break;
        }
        level = Vec::with_capacity(next_len);
        for (prefix, lb) in survivors {
            for i in 0..alpha {
                let mut child = prefix.clone();
                child.push(i as u8);
                level.push((child, lb));
            }
        }
    }

    if !partial {
        // Ultimate level: evaluate every surviving full vector directly.
        for (full, lb) in &level {
            if *lb >= best_mse - PRUNE_GUARD {
                continue;
            }
            let (f, mse) = discrete_mse(
                &h_r,
                &stack_real(&materialize(full, x_alpha)),
                noise_energy,
                &s_r,
            );
            if mse < best_mse {
                best_mse = mse;
                best_f = f;
                best_idx = full.clone();
            }
        }
    }

    Ok(PrecodeSolution {
        x: materialize(&best_idx, x_alpha),
        f: best_f,
        mse: best_mse,
        mse_lb: Some(root_lb.min(best_mse)),
        bounds_evaluated,
        optimal: !partial,
        partial,
        rank_warning: false,
    })
}

fn materialize(idx: &[u8], x_alpha: &PskAlphabet) -> CVec {
    CVec::from_iterator(idx.len(), idx.iter().map(|&i| x_alpha.point(i as usize)))
}

/// Which precoder fills a lookup table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TablePrecoder {
    /// Hull relaxation plus nearest-point mapping.
    Mapped,
    /// Exact branch-and-bound.
    BranchAndBound,
}

/// One lookup-table entry: the precoding vector in alphabet-index form plus
/// its scaling and MSE.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    /// Transmit alphabet indices, one per antenna.
    pub x_idx: Vec<u8>,
    /// Receive scaling.
    pub f: f64,
    /// Achieved MSE.
    pub mse: f64,
}

/// Per-channel table of precoding vectors for every data vector in `S^K`.
#[derive(Debug, Clone)]
pub struct LookupTable {
    /// User count.
    pub k: usize,
    /// Antenna count.
    pub m: usize,
    /// Data alphabet cardinality.
    pub alpha_s: usize,
    /// Transmit alphabet cardinality.
    pub alpha_x: usize,
    /// Noise variance the table was built for.
    pub sigma_w2: f64,
    /// Hash of the channel realization.
    pub channel_hash: String,
    /// True when entries were generated from canonical representatives by
    /// rotation (requires `alpha_x == alpha_s`).
    pub symmetric: bool,
    /// Entries indexed by the mixed-radix data index (user 0 most
    /// significant).
    pub entries: Vec<TableEntry>,
    /// Transmit constellation.
    pub x_points: Vec<Complex64>,
    /// Data constellation.
    pub s_points: Vec<Complex64>,
    /// Total bound evaluations spent building the table.
    pub build_bounds_total: u64,
    /// Number of precoder solves spent building the table.
    pub build_solves: u64,
}

/// Mixed-radix index of a data-symbol digit vector (user 0 most significant).
pub fn data_index(digits: &[u8], alpha_s: usize) -> usize {
    digits
        .iter()
        .fold(0usize, |acc, &d| acc * alpha_s + d as usize)
}

/// Digit vector of a mixed-radix data index.
pub fn data_digits(mut index: usize, k: usize, alpha_s: usize) -> Vec<u8> {
    let mut out = vec![0u8; k];
    for u in (0..k).rev() {
        out[u] = (index % alpha_s) as u8;
        index /= alpha_s;
    }
    out
}

impl LookupTable {
    /// Precoding vector for a data index, materialized as complex symbols.
    pub fn x_vec(&self, s_index: usize) -> CVec {
        let e = &self.entries[s_index];
        CVec::from_iterator(
            e.x_idx.len(),
            e.x_idx.iter().map(|&i| self.x_points[i as usize]),
        )
    }

    /// Largest deviation from `x(s e^{j 2 pi/alpha_s}) = x(s) e^{j 2
    /// pi/alpha_s}` over all entries; meaningful when `alpha_x == alpha_s`.
    pub fn max_rotation_defect(&self) -> f64 {
        let rot = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / self.alpha_s as f64);
        let mut worst = 0.0f64;
        for idx in 0..self.entries.len() {
            let digits = data_digits(idx, self.k, self.alpha_s);
            let rotated: Vec<u8> = digits
                .iter()
                .map(|&d| ((d as usize + 1) % self.alpha_s) as u8)
                .collect();
            let target = self.x_vec(data_index(&rotated, self.alpha_s));
            let from_rule = self.x_vec(idx).map(|z| z * rot);
            for (a, b) in target.iter().zip(from_rule.iter()) {
                worst = worst.max((a - b).norm());
            }
        }
        worst
    }

    /// Mean bound evaluations per precoder solve during the build.
    pub fn mean_bounds(&self) -> f64 {
        self.build_bounds_total as f64 / self.build_solves.max(1) as f64
    }
}

/// Hash of a channel realization, stable across runs.
pub fn channel_hash(ch: &ChannelRealization) -> String {
    let mut hasher = Sha256::new();
    for z in ch.h.iter() {
        hasher.update(z.re.to_le_bytes());
        hasher.update(z.im.to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Largest common rotation order of the two alphabets: rotating a data
/// vector by any multiple of `2 pi / gcd(alpha_s, alpha_x)` maps both `S`
/// and `X` onto themselves, so the rotated optimum is the optimum of the
/// rotated instance.
pub fn rotation_order(alpha_s: usize, alpha_x: usize) -> usize {
    let (mut a, mut b) = (alpha_s, alpha_x);
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Builds the complete per-channel lookup table.
///
/// Only canonical data vectors (first user's index reduced modulo the
/// common rotation order) are solved; the remaining entries follow by
/// rotating both the data vector and the precoder, which preserves
/// optimality. With `alpha_x == alpha_s` this solves the `alpha_s^(K-1)`
/// canonical vectors and enforces circular symmetry exactly.
pub fn build_lookup_table(
    ch: &ChannelRealization,
    s_alpha: &PskAlphabet,
    x_alpha: &PskAlphabet,
    poly: &Polyhedron,
    precoder: TablePrecoder,
    budget: usize,
    cfg: &BbConfig,
) -> Result<LookupTable> {
    let k = ch.k;
    let alpha_s = s_alpha.cardinality;
    let total = alpha_s
        .checked_pow(k as u32)
        .ok_or_else(|| Error::BudgetExceeded("lookup table size overflow".into()))?;
    if total > budget {
        return Err(Error::BudgetExceeded(format!(
            "lookup table needs {total} entries, budget is {budget}"
        )));
    }

    let alpha_x = x_alpha.cardinality;
    let g = rotation_order(alpha_s, alpha_x);
    let symmetric = g == alpha_s;
    let mut entries: Vec<Option<TableEntry>> = vec![None; total];
    let mut bounds_total = 0u64;
    let mut solves = 0u64;

    let solve_entry = |digits: &[u8]| -> Result<(TableEntry, u64)> {
        let s = CVec::from_iterator(k, digits.iter().map(|&d| s_alpha.point(d as usize)));
        let sol = match precoder {
            TablePrecoder::Mapped => mmse_mapped(ch, &s, poly, x_alpha, cfg)?,
            TablePrecoder::BranchAndBound => mmse_branch_and_bound(ch, &s, poly, x_alpha, cfg)?,
        };
        let x_idx = sol.x.iter().map(|z| x_alpha.nearest(*z) as u8).collect();
        Ok((
            TableEntry {
                x_idx,
                f: sol.f,
                mse: sol.mse,
            },
            sol.bounds_evaluated,
        ))
    };

    // One rotation step shifts data indices by s_step and transmit indices
    // by x_step.
    let s_step = alpha_s / g;
    let x_step = alpha_x / g;
    for canon in 0..total {
        let digits = data_digits(canon, k, alpha_s);
        if (digits[0] as usize) >= s_step {
            continue;
        }
        let (entry, bounds) = solve_entry(&digits)?;
        bounds_total += bounds;
        solves += 1;
        for l in 0..g {
            let rotated_digits: Vec<u8> = digits
                .iter()
                .map(|&d| ((d as usize + l * s_step) % alpha_s) as u8)
                .collect();
            let rotated_x: Vec<u8> = entry
                .x_idx
                .iter()
                .map(|&i| ((i as usize + l * x_step) % alpha_x) as u8)
                .collect();
            entries[data_index(&rotated_digits, alpha_s)] = Some(TableEntry {
                x_idx: rotated_x,
                f: entry.f,
                mse: entry.mse,
            });
        }
    }

    let entries: Vec<TableEntry> = entries
        .into_iter()
        .map(|e| e.expect("table construction covers every index"))
        .collect();

    Ok(LookupTable {
        k,
        m: ch.m,
        alpha_s,
        alpha_x: x_alpha.cardinality,
        sigma_w2: ch.sigma_w2,
        channel_hash: channel_hash(ch),
        symmetric,
        entries,
        x_points: x_alpha.points.clone(),
        s_points: s_alpha.points.clone(),
        build_bounds_total: bounds_total,
        build_solves: solves,
    })
}

const TABLE_MAGIC_TEXT: &str = "cepsim-table";
const TABLE_MAGIC_BIN: &[u8; 4] = b"CEPT";
const TABLE_VERSION: u32 = 1;

impl LookupTable {
    /// Writes the table as versioned CSV: a header with the system
    /// parameters and channel hash, then one row per entry carrying the data
    /// symbol indices, the precoding vector as interleaved re/im pairs, the
    /// scaling, and the MSE.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{TABLE_MAGIC_TEXT},{TABLE_VERSION}")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            self.k,
            self.m,
            self.alpha_s,
            self.alpha_x,
            self.sigma_w2,
            self.channel_hash,
            u8::from(self.symmetric)
        )?;
        for (idx, e) in self.entries.iter().enumerate() {
            let digits = data_digits(idx, self.k, self.alpha_s);
            let mut row = String::new();
            for d in &digits {
                row.push_str(&format!("{d},"));
            }
            for &xi in &e.x_idx {
                let p = self.x_points[xi as usize];
                row.push_str(&format!("{},{},", p.re, p.im));
            }
            row.push_str(&format!("{},{}", e.f, e.mse));
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    /// Reads a table written by [`LookupTable::write_csv`].
    pub fn read_csv<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut lines = r.lines();
        let magic = next_line(&mut lines)?;
        let mut parts = magic.split(',');
        if parts.next() != Some(TABLE_MAGIC_TEXT) {
            return Err(Error::Parse("not a lookup-table CSV".into()));
        }
        let header = next_line(&mut lines)?;
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse("bad table header".into()));
        }
        let k: usize = parse(fields[0])?;
        let m: usize = parse(fields[1])?;
        let alpha_s: usize = parse(fields[2])?;
        let alpha_x: usize = parse(fields[3])?;
        let sigma_w2: f64 = parse(fields[4])?;
        let channel_hash = fields[5].to_string();
        let symmetric = fields[6] == "1";
        let s_alpha = PskAlphabet::new(alpha_s, 1.0)?;
        let x_alpha = PskAlphabet::transmit(alpha_x, m, 1.0)?;

        let total = alpha_s.pow(k as u32);
        let mut entries = Vec::with_capacity(total);
        for idx in 0..total {
            let line = next_line(&mut lines)?;
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != k + 2 * m + 2 {
                return Err(Error::Parse(format!("bad entry row {idx}")));
            }
            let digits: Vec<u8> = cols[..k]
                .iter()
                .map(|c| parse::<u8>(c))
                .collect::<Result<_>>()?;
            if data_index(&digits, alpha_s) != idx {
                return Err(Error::Parse(format!("entry {idx} out of order")));
            }
            let mut x_idx = Vec::with_capacity(m);
            for ant in 0..m {
                let re: f64 = parse(cols[k + 2 * ant])?;
                let im: f64 = parse(cols[k + 2 * ant + 1])?;
                x_idx.push(x_alpha.nearest(Complex64::new(re, im)) as u8);
            }
            let f: f64 = parse(cols[k + 2 * m])?;
            let mse: f64 = parse(cols[k + 2 * m + 1])?;
            entries.push(TableEntry { x_idx, f, mse });
        }

        Ok(LookupTable {
            k,
            m,
            alpha_s,
            alpha_x,
            sigma_w2,
            channel_hash,
            symmetric,
            entries,
            x_points: x_alpha.points,
            s_points: s_alpha.points,
            build_bounds_total: 0,
            build_solves: 0,
        })
    }

    /// Writes the table in the versioned binary layout (little-endian).
    pub fn write_binary<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(TABLE_MAGIC_BIN)?;
        w.write_all(&TABLE_VERSION.to_le_bytes())?;
        for v in [self.k, self.m, self.alpha_s, self.alpha_x] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&self.sigma_w2.to_le_bytes())?;
        let hash = self.channel_hash.as_bytes();
        w.write_all(&(hash.len() as u32).to_le_bytes())?;
        w.write_all(hash)?;
        w.write_all(&[u8::from(self.symmetric)])?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (idx, e) in self.entries.iter().enumerate() {
            let digits = data_digits(idx, self.k, self.alpha_s);
            w.write_all(&digits)?;
            for &xi in &e.x_idx {
                let p = self.x_points[xi as usize];
                w.write_all(&p.re.to_le_bytes())?;
                w.write_all(&p.im.to_le_bytes())?;
            }
            w.write_all(&e.f.to_le_bytes())?;
            w.write_all(&e.mse.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a table written by [`LookupTable::write_binary`].
    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != TABLE_MAGIC_BIN {
            return Err(Error::Parse("not a lookup-table binary".into()));
        }
        let version = read_u32(r)?;
        if version != TABLE_VERSION {
            return Err(Error::Parse(format!("unsupported table version {version}")));
        }
        let k = read_u32(r)? as usize;
        let m = read_u32(r)? as usize;
        let alpha_s = read_u32(r)? as usize;
        let alpha_x = read_u32(r)? as usize;
        let sigma_w2 = read_f64(r)?;
        let hash_len = read_u32(r)? as usize;
        let mut hash = vec![0u8; hash_len];
        read_exact(r, &mut hash)?;
        let channel_hash = String::from_utf8(hash)
            .map_err(|_| Error::Parse("channel hash is not UTF-8".into()))?;
        let mut flag = [0u8; 1];
        read_exact(r, &mut flag)?;
        let symmetric = flag[0] == 1;
        let count = read_u32(r)? as usize;

        let s_alpha = PskAlphabet::new(alpha_s, 1.0)?;
        let x_alpha = PskAlphabet::transmit(alpha_x, m, 1.0)?;
        let mut entries = Vec::with_capacity(count);
        for idx in 0..count {
            let mut digits = vec![0u8; k];
            read_exact(r, &mut digits)?;
            if data_index(&digits, alpha_s) != idx {
                return Err(Error::Parse(format!("entry {idx} out of order")));
            }
            let mut x_idx = Vec::with_capacity(m);
            for _ in 0..m {
                let re = read_f64(r)?;
                let im = read_f64(r)?;
                x_idx.push(x_alpha.nearest(Complex64::new(re, im)) as u8);
            }
            let f = read_f64(r)?;
            let mse = read_f64(r)?;
            entries.push(TableEntry { x_idx, f, mse });
        }

        Ok(LookupTable {
            k,
            m,
            alpha_s,
            alpha_x,
            sigma_w2,
            channel_hash,
            symmetric,
            entries,
            x_points: x_alpha.points,
            s_points: s_alpha.points,
            build_bounds_total: 0,
            build_solves: 0,
        })
    }
}

fn next_line<B: BufRead>(lines: &mut std::io::Lines<B>) -> Result<String> {
    lines
        .next()
        .ok_or_else(|| Error::Parse("unexpected end of table file".into()))?
        .map_err(|e| Error::Parse(format!("read failure: {e}")))
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad field {s:?}")))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Parse(format!("short read: {e}")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}
