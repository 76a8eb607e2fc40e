//! Systematic LDPC encoding and sum-product decoding.
//!
//! The default code is a regular (3,6) parity-check matrix grown by
//! progressive edge growth with a fixed seed, giving rate 1/2, block length
//! 486, girth at least 6 and full row rank. Any code in alist form can be
//! substituted. Codewords are laid out `[parity | message]`.
//!
//! Bit dictionary, used everywhere downstream: GF(2) `0` maps to antipodal
//! `+1`, and an LLR is positive exactly when bit `+1` (binary 0) is more
//! likely.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed of the committed default code.
pub const DEFAULT_CODE_SEED: u64 = 1;

/// Block length of the default coded configuration.
pub const DEFAULT_BLOCK_LEN: usize = 486;

/// A binary LDPC code with a systematic encoder.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    /// Codeword length.
    pub n: usize,
    /// Number of parity checks (rows of the parity-check matrix).
    pub n_checks: usize,
    /// Message length (`n - n_checks`).
    pub k_msg: usize,
    check_to_var: Vec<Vec<u32>>,
    var_to_check: Vec<Vec<u32>>,
    /// Encoder rows over the message bits: parity `i` is the GF(2) inner
    /// product of row `i` with the message.
    enc_rows: Vec<Vec<u64>>,
}

/// Output of the sum-product decoder.
#[derive(Debug, Clone)]
pub struct DecoderResult {
    /// A-posteriori LLR per code bit (intrinsic plus all check messages).
    pub llr: Vec<f64>,
    /// Hard decisions in GF(2) form.
    pub hard_bits: Vec<u8>,
    /// Iterations actually run.
    pub iterations_used: usize,
    /// True when the hard decisions satisfy every parity check.
    pub syndrome_ok: bool,
}

/// Code source: a generated ensemble member or an alist file.
#[derive(Debug, Clone)]
pub enum CodeSpec {
    /// Regular (3,6) progressive-edge-growth code of the given length.
    Generated {
        /// Codeword length (must be even).
        n: usize,
        /// Construction seed.
        seed: u64,
    },
    /// Load from an alist file.
    Alist(std::path::PathBuf),
}

/// Builds a code from a [`CodeSpec`].
pub fn load_or_generate_code(spec: &CodeSpec) -> Result<LdpcCode> {
    match spec {
        CodeSpec::Generated { n, seed } => LdpcCode::generate_regular(*n, *seed),
        CodeSpec::Alist(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            LdpcCode::from_alist(&text)
        }
    }
}

impl LdpcCode {
    /// Generates a regular (3,6) rate-1/2 code by progressive edge growth
    /// and systematizes it. Deterministic in `(n, seed)`.
    pub fn generate_regular(n: usize, seed: u64) -> Result<Self> {
        if n % 2 != 0 || n < 8 {
            return Err(Error::InvalidConfig(format!(
                "regular (3,6) code needs an even length >= 8, got {n}"
            )));
        }
        let n_checks = n / 2;
        let var_deg = 3usize;
        let check_deg = 6usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut check_to_var: Vec<Vec<u32>> = vec![Vec::with_capacity(check_deg); n_checks];
        let mut var_to_check: Vec<Vec<u32>> = vec![Vec::with_capacity(var_deg); n];

        for v in 0..n {
            for edge in 0..var_deg {
                let candidates: Vec<u32> = if edge == 0 {
                    (0..n_checks as u32).collect()
                } else {
                    // Breadth-first distances from v in the current graph;
                    // prefer unreachable checks, otherwise the farthest ones.
                    let dist = bfs_check_distances(v, &var_to_check, &check_to_var, n_checks);
                    let unreachable: Vec<u32> = (0..n_checks as u32)
                        .filter(|&c| dist[c as usize] == u32::MAX)
                        .collect();
                    if unreachable.is_empty() {
                        let max_d = dist
                            .iter()
                            .filter(|&&d| d != u32::MAX)
                            .cloned()
                            .max()
                            .unwrap_or(0);
                        (0..n_checks as u32)
                            .filter(|&c| dist[c as usize] == max_d)
                            .collect()
                    } else {
                        unreachable
                    }
                };
                // Regularity wins over distance: when every candidate check
                // is saturated, fall back to any check with a free slot
                // (one always exists while edges remain).
                let open: Vec<u32> = candidates
                    .iter()
                    .cloned()
                    .filter(|&c| check_to_var[c as usize].len() < check_deg)
                    .collect();
                let pool = if open.is_empty() {
                    (0..n_checks as u32)
                        .filter(|&c| check_to_var[c as usize].len() < check_deg)
                        .collect()
                } else {
                    open
                };
                let min_deg = pool
                    .iter()
                    .map(|&c| check_to_var[c as usize].len())
                    .min()
                    .expect("candidate pool never empty");
                let best: Vec<u32> = pool
                    .into_iter()
                    .filter(|&c| check_to_var[c as usize].len() == min_deg)
                    .collect();
                let chosen = best[rng.gen_range(0..best.len())];
                check_to_var[chosen as usize].push(v as u32);
                var_to_check[v].push(chosen);
            }
        }

        Self::from_adjacency(n, check_to_var)
    }

    /// Builds the systematic encoder from a parity-check adjacency,
    /// permuting columns so the first `n_checks` positions carry the parity
    /// bits.
    fn from_adjacency(n: usize, check_to_var: Vec<Vec<u32>>) -> Result<Self> {
        let n_checks = check_to_var.len();
        if n_checks == 0 || n_checks >= n {
            return Err(Error::InvalidConfig(
                "parity-check matrix must have 0 < rows < columns".into(),
            ));
        }
        let words = n.div_ceil(64);
        let mut rows: Vec<Vec<u64>> = vec![vec![0u64; words]; n_checks];
        for (c, vars) in check_to_var.iter().enumerate() {
            for &v in vars {
                let v = v as usize;
                if v >= n {
                    return Err(Error::Parse(format!("variable index {v} out of range")));
                }
                rows[c][v / 64] ^= 1u64 << (v % 64);
            }
        }

        // Gauss-Jordan elimination to find a set of pivot columns.
        let mut work = rows.clone();
        let mut pivot_cols = Vec::with_capacity(n_checks);
        let mut r = 0usize;
        for col in 0..n {
            if r == n_checks {
                break;
            }
            let Some(src) = (r..n_checks).find(|&i| bit(&work[i], col)) else {
                continue;
            };
            work.swap(r, src);
            let pivot_row = work[r].clone();
            for (i, row) in work.iter_mut().enumerate() {
                if i != r && bit(row, col) {
                    xor_into(row, &pivot_row);
                }
            }
            pivot_cols.push(col);
            r += 1;
        }
        if r < n_checks {
            return Err(Error::Parse(format!(
                "parity-check matrix is rank deficient: rank {r} < {n_checks}"
            )));
        }

        // Column permutation: pivots first (they become the parity
        // positions), the rest keep their relative order.
        let mut is_pivot = vec![false; n];
        for &c in &pivot_cols {
            is_pivot[c] = true;
        }
        let mut order: Vec<usize> = pivot_cols.clone();
        order.extend((0..n).filter(|&c| !is_pivot[c]));
        let mut new_pos = vec![0usize; n];
        for (pos, &old) in order.iter().enumerate() {
            new_pos[old] = pos;
        }

        let permuted: Vec<Vec<u32>> = check_to_var
            .iter()
            .map(|vars| {
                let mut v: Vec<u32> = vars.iter().map(|&x| new_pos[x as usize] as u32).collect();
                v.sort_unstable();
                v
            })
            .collect();

        // Re-run elimination on the permuted matrix over the leading block,
        // leaving [I | B]; the parity of a message m is then B m.
        let mut dense: Vec<Vec<u64>> = vec![vec![0u64; words]; n_checks];
        for (c, vars) in permuted.iter().enumerate() {
            for &v in vars {
                dense[c][v as usize / 64] ^= 1u64 << (v as usize % 64);
            }
        }
        for col in 0..n_checks {
            let src = (col..n_checks)
                .find(|&i| bit(&dense[i], col))
                .ok_or_else(|| Error::Parse("systematization lost rank".into()))?;
            dense.swap(col, src);
            let pivot_row = dense[col].clone();
            for (i, row) in dense.iter_mut().enumerate() {
                if i != col && bit(row, col) {
                    xor_into(row, &pivot_row);
                }
            }
        }

        let k_msg = n - n_checks;
        let msg_words = k_msg.div_ceil(64);
        let mut enc_rows = vec![vec![0u64; msg_words]; n_checks];
        for c in 0..n_checks {
            for j in 0..k_msg {
                if bit(&dense[c], n_checks + j) {
                    enc_rows[c][j / 64] ^= 1u64 << (j % 64);
                }
            }
        }

        let mut var_to_check: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (c, vars) in permuted.iter().enumerate() {
            for &v in vars {
                var_to_check[v as usize].push(c as u32);
            }
        }

        Ok(Self {
            n,
            n_checks,
            k_msg,
            check_to_var: permuted,
            var_to_check,
            enc_rows,
        })
    }

    /// Code rate.
    pub fn rate(&self) -> f64 {
        self.k_msg as f64 / self.n as f64
    }

    /// Column indices of the systematic (message) positions.
    pub fn message_range(&self) -> std::ops::Range<usize> {
        self.n_checks..self.n
    }

    /// Variable adjacency of one check.
    pub fn check_vars(&self, c: usize) -> &[u32] {
        &self.check_to_var[c]
    }

    /// Encodes a message into `[parity | message]`.
    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.k_msg {
            return Err(Error::Dimension(format!(
                "message length {} != {}",
                message.len(),
                self.k_msg
            )));
        }
        let msg_words = self.k_msg.div_ceil(64);
        let mut packed = vec![0u64; msg_words];
        for (j, &b) in message.iter().enumerate() {
            if b > 1 {
                return Err(Error::InvalidConfig("message bits must be 0/1".into()));
            }
            if b == 1 {
                packed[j / 64] ^= 1u64 << (j % 64);
            }
        }
        let mut out = Vec::with_capacity(self.n);
        for row in &self.enc_rows {
            let ones: u32 = row
                .iter()
                .zip(packed.iter())
                .map(|(a, b)| (a & b).count_ones())
                .sum();
            out.push((ones & 1) as u8);
        }
        out.extend_from_slice(message);
        Ok(out)
    }

    /// True when `bits` satisfies every parity check.
    pub fn syndrome_ok(&self, bits: &[u8]) -> bool {
        self.check_to_var.iter().all(|vars| {
            vars.iter().fold(0u8, |acc, &v| acc ^ bits[v as usize]) == 0
        })
    }

    /// Flooding-schedule sum-product decoding with early stop on a zero
    /// syndrome. The output LLR is the full a-posteriori value.
    pub fn spa_decode(&self, channel_llr: &[f64], max_iter: usize) -> Result<DecoderResult> {
        if channel_llr.len() != self.n {
            return Err(Error::Dimension(format!(
                "LLR length {} != {}",
                channel_llr.len(),
                self.n
            )));
        }
        if channel_llr.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidConfig("channel LLRs must be finite".into()));
        }

        // Messages live per (check, slot) aligned with check_to_var.
        let mut msg: Vec<Vec<f64>> = self
            .check_to_var
            .iter()
            .map(|vars| vec![0.0; vars.len()])
            .collect();
        let mut incoming: Vec<f64> = vec![0.0; self.n];
        let mut iterations_used = 0;
        let mut posterior: Vec<f64> = channel_llr.to_vec();

        for iter in 1..=max_iter {
            iterations_used = iter;
            // Check update with prefix/suffix products of tanh(q/2).
            for (c, vars) in self.check_to_var.iter().enumerate() {
                let deg = vars.len();
                let mut t = vec![0.0f64; deg];
                for (e, &v) in vars.iter().enumerate() {
                    let q = posterior[v as usize] - msg[c][e];
                    t[e] = (q.clamp(-40.0, 40.0) / 2.0).tanh();
                }
                let mut prefix = vec![1.0f64; deg + 1];
                for e in 0..deg {
                    prefix[e + 1] = prefix[e] * t[e];
                }
                let mut suffix = 1.0f64;
                for e in (0..deg).rev() {
                    let prod = prefix[e] * suffix;
                    suffix *= t[e];
                    let clamped = prod.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    msg[c][e] = 2.0 * clamped.atanh();
                }
            }
            // Variable update: posterior = channel + sum of check messages.
            incoming.iter_mut().for_each(|x| *x = 0.0);
            for (c, vars) in self.check_to_var.iter().enumerate() {
                for (e, &v) in vars.iter().enumerate() {
                    incoming[v as usize] += msg[c][e];
                }
            }
            for v in 0..self.n {
                posterior[v] = channel_llr[v] + incoming[v];
            }
            let hard: Vec<u8> = posterior.iter().map(|&l| hard_decision(l)).collect();
            if self.syndrome_ok(&hard) {
                return Ok(DecoderResult {
                    llr: posterior,
                    hard_bits: hard,
                    iterations_used,
                    syndrome_ok: true,
                });
            }
        }

        let hard: Vec<u8> = posterior.iter().map(|&l| hard_decision(l)).collect();
        let syndrome_ok = self.syndrome_ok(&hard);
        Ok(DecoderResult {
            llr: posterior,
            hard_bits: hard,
            iterations_used,
            syndrome_ok,
        })
    }

    /// Serializes the parity-check matrix in alist form.
    pub fn to_alist(&self) -> String {
        let max_col = self.var_to_check.iter().map(Vec::len).max().unwrap_or(0);
        let max_row = self.check_to_var.iter().map(Vec::len).max().unwrap_or(0);
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.n, self.n_checks));
        out.push_str(&format!("{max_col} {max_row}\n"));
        let col_degs: Vec<String> = self
            .var_to_check
            .iter()
            .map(|v| v.len().to_string())
            .collect();
        out.push_str(&col_degs.join(" "));
        out.push('\n');
        let row_degs: Vec<String> = self
            .check_to_var
            .iter()
            .map(|v| v.len().to_string())
            .collect();
        out.push_str(&row_degs.join(" "));
        out.push('\n');
        for v in 0..self.n {
            let entries: Vec<String> = self.var_to_check[v]
                .iter()
                .map(|&c| (c + 1).to_string())
                .collect();
            out.push_str(&entries.join(" "));
            out.push('\n');
        }
        for c in 0..self.n_checks {
            let entries: Vec<String> = self.check_to_var[c]
                .iter()
                .map(|&v| (v + 1).to_string())
                .collect();
            out.push_str(&entries.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses an alist file (tolerates zero padding).
    pub fn from_alist(text: &str) -> Result<Self> {
        let mut nums = text
            .split_whitespace()
            .map(|t| t.parse::<i64>().map_err(|_| Error::Parse(format!("bad alist token {t:?}"))));
        let mut next = |what: &str| -> Result<i64> {
            nums.next()
                .ok_or_else(|| Error::Parse(format!("alist truncated before {what}")))?
        };
        let n = next("n")? as usize;
        let n_checks = next("m")? as usize;
        let _max_col = next("max col degree")?;
        let _max_row = next("max row degree")?;
        let col_degs: Vec<usize> = (0..n)
            .map(|_| next("column degree").map(|v| v as usize))
            .collect::<Result<_>>()?;
        let row_degs: Vec<usize> = (0..n_checks)
            .map(|_| next("row degree").map(|v| v as usize))
            .collect::<Result<_>>()?;

        let mut check_to_var: Vec<Vec<u32>> = vec![Vec::new(); n_checks];
        for (v, &deg) in col_degs.iter().enumerate() {
            let mut seen = 0usize;
            // Padded variants list max_col entries with trailing zeros.
            while seen < deg {
                let c = next("column entry")?;
                if c == 0 {
                    continue;
                }
                let c = (c - 1) as usize;
                if c >= n_checks {
                    return Err(Error::Parse(format!("check index {c} out of range")));
                }
                check_to_var[c].push(v as u32);
                seen += 1;
            }
        }
        // The row section is redundant; consume and verify degrees.
        for (c, &deg) in row_degs.iter().enumerate() {
            let mut seen = 0usize;
            while seen < deg {
                let v = next("row entry")?;
                if v == 0 {
                    continue;
                }
                let v = (v - 1) as usize;
                if v >= n {
                    return Err(Error::Parse(format!("variable index {v} out of range")));
                }
                seen += 1;
            }
            if check_to_var[c].len() != deg {
                return Err(Error::Parse(format!(
                    "inconsistent alist: check {c} has {} entries, degree says {deg}",
                    check_to_var[c].len()
                )));
            }
        }
        for row in &mut check_to_var {
            row.sort_unstable();
        }
        Self::from_adjacency(n, check_to_var)
    }

    /// True when no two checks share more than one variable (girth >= 6).
    pub fn four_cycle_free(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        for checks in &self.var_to_check {
            for i in 0..checks.len() {
                for j in (i + 1)..checks.len() {
                    let key = (checks[i].min(checks[j]), checks[i].max(checks[j]));
                    if !seen.insert(key) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn bfs_check_distances(
    v: usize,
    var_to_check: &[Vec<u32>],
    check_to_var: &[Vec<u32>],
    n_checks: usize,
) -> Vec<u32> {
    let mut dist = vec![u32::MAX; n_checks];
    let mut var_seen = vec![false; var_to_check.len()];
    var_seen[v] = true;
    let mut frontier_checks: Vec<u32> = Vec::new();
    for &c in &var_to_check[v] {
        if dist[c as usize] == u32::MAX {
            dist[c as usize] = 1;
            frontier_checks.push(c);
        }
    }
    let mut depth = 1u32;
    while !frontier_checks.is_empty() {
        let mut next_vars = Vec::new();
        for &c in &frontier_checks {
            for &u in &check_to_var[c as usize] {
                if !var_seen[u as usize] {
                    var_seen[u as usize] = true;
                    next_vars.push(u);
                }
            }
        }
        depth += 2;
        let mut next_checks = Vec::new();
        for &u in &next_vars {
            for &c in &var_to_check[u as usize] {
                if dist[c as usize] == u32::MAX {
                    dist[c as usize] = depth;
                    next_checks.push(c);
                }
            }
        }
        frontier_checks = next_checks;
    }
    dist
}

#[inline]
fn bit(row: &[u64], col: usize) -> bool {
    row[col / 64] >> (col % 64) & 1 == 1
}

#[inline]
fn xor_into(dst: &mut [u64], src: &[u64]) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d ^= s;
    }
}

/// Hard decision under the `LLR > 0 <=> binary 0` dictionary.
#[inline]
pub fn hard_decision(llr: f64) -> u8 {
    u8::from(llr <= 0.0)
}

/// GF(2) bits to antipodal form (`0 -> +1`, `1 -> -1`).
pub fn to_antipodal(bits: &[u8]) -> Vec<i8> {
    bits.iter().map(|&b| if b == 0 { 1 } else { -1 }).collect()
}

/// Splits an antipodal codeword into per-symbol bit vectors of length
/// `bits_per_symbol`.
pub fn frame_bits(codeword: &[i8], bits_per_symbol: usize) -> Result<Vec<Vec<i8>>> {
    if bits_per_symbol == 0 || codeword.len() % bits_per_symbol != 0 {
        return Err(Error::Dimension(format!(
            "codeword length {} is not divisible by {bits_per_symbol}",
            codeword.len()
        )));
    }
    Ok(codeword
        .chunks_exact(bits_per_symbol)
        .map(|c| c.to_vec())
        .collect())
}

/// Inverse of [`frame_bits`].
pub fn deframe_bits(frames: &[Vec<i8>]) -> Vec<i8> {
    frames.iter().flatten().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn default_code() -> LdpcCode {
        LdpcCode::generate_regular(DEFAULT_BLOCK_LEN, DEFAULT_CODE_SEED).unwrap()
    }

    #[test]
    fn default_code_shape_and_rank() {
        let code = default_code();
        assert_eq!(code.n, 486);
        assert_eq!(code.n_checks, 243);
        assert_eq!(code.k_msg, 243);
        assert!((code.rate() - 0.5).abs() < 1e-12);
        for checks in &code.var_to_check {
            assert_eq!(checks.len(), 3);
        }
        for vars in &code.check_to_var {
            assert_eq!(vars.len(), 6);
        }
        assert!(code.four_cycle_free(), "default code must have girth >= 6");
    }

    #[test]
    fn encoding_satisfies_every_check() {
        let code = default_code();
        let mut rng = stream_rng(100, 0);
        let zero = code.encode(&vec![0u8; code.k_msg]).unwrap();
        assert!(zero.iter().all(|&b| b == 0));
        for _ in 0..100 {
            let msg: Vec<u8> = (0..code.k_msg).map(|_| rng.gen_range(0..2u8)).collect();
            let cw = code.encode(&msg).unwrap();
            assert!(code.syndrome_ok(&cw));
            assert_eq!(&cw[code.message_range()], &msg[..]);
        }
    }

    #[test]
    fn single_bit_messages_form_generator_rows() {
        let code = LdpcCode::generate_regular(32, 1).unwrap();
        for i in 0..code.k_msg {
            let mut msg = vec![0u8; code.k_msg];
            msg[i] = 1;
            let row = code.encode(&msg).unwrap();
            assert!(code.syndrome_ok(&row));
            // Linearity: the sum of two rows is a codeword.
            let mut msg2 = vec![0u8; code.k_msg];
            msg2[(i + 1) % code.k_msg] = 1;
            let row2 = code.encode(&msg2).unwrap();
            let sum: Vec<u8> = row.iter().zip(row2.iter()).map(|(a, b)| a ^ b).collect();
            assert!(code.syndrome_ok(&sum));
        }
    }

    #[test]
    fn tiny_handwritten_code_systematizes() {
        let alist = "\
8 4
2 3
1 1 1 1 2 2 2 2
3 3 3 3
1
2
3
4
1 4
1 2
2 3
3 4
1 5 6
2 6 7
3 7 8
4 5 8
";
        let code = LdpcCode::from_alist(alist).unwrap();
        assert_eq!(code.n, 8);
        assert_eq!(code.n_checks, 4);
        let mut rng = stream_rng(101, 0);
        for _ in 0..20 {
            let msg: Vec<u8> = (0..code.k_msg).map(|_| rng.gen_range(0..2u8)).collect();
            assert!(code.syndrome_ok(&code.encode(&msg).unwrap()));
        }
    }

    #[test]
    fn committed_alist_matches_generator() {
        let path = concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/assets/ldpc_486_rate12.alist"
        );
        let committed = std::fs::read_to_string(path).expect("committed code asset");
        let code = default_code();
        assert_eq!(committed, code.to_alist(), "asset drifted from generator");
        let loaded =
            load_or_generate_code(&CodeSpec::Alist(std::path::PathBuf::from(path))).unwrap();
        assert_eq!(loaded.check_to_var, code.check_to_var);
        assert_eq!(loaded.enc_rows, code.enc_rows);
    }

    #[test]
    fn alist_roundtrip() {
        let code = default_code();
        let text = code.to_alist();
        let back = LdpcCode::from_alist(&text).unwrap();
        assert_eq!(back.check_to_var, code.check_to_var);
        assert_eq!(back.enc_rows, code.enc_rows);
    }

    #[test]
    fn rank_deficient_alist_is_rejected() {
        // Two identical checks cannot be systematized.
        let alist = "\
4 2
2 2
2 2 0 0
2 2
1 2
1 2


1 2
1 2
";
        let err = LdpcCode::from_alist(alist);
        assert!(matches!(err, Err(Error::Parse(_))));
    }

    #[test]
    fn noiseless_input_decodes_in_one_iteration() {
        let code = default_code();
        let mut rng = stream_rng(102, 0);
        let msg: Vec<u8> = (0..code.k_msg).map(|_| rng.gen_range(0..2u8)).collect();
        let cw = code.encode(&msg).unwrap();
        let llr: Vec<f64> = cw.iter().map(|&b| if b == 0 { 30.0 } else { -30.0 }).collect();
        let res = code.spa_decode(&llr, 50).unwrap();
        assert!(res.syndrome_ok);
        assert_eq!(res.iterations_used, 1);
        assert_eq!(res.hard_bits, cw);
    }

    #[test]
    fn single_flip_is_corrected() {
        let code = default_code();
        let mut rng = stream_rng(103, 0);
        for trial in 0..20 {
            let msg: Vec<u8> = (0..code.k_msg).map(|_| rng.gen_range(0..2u8)).collect();
            let cw = code.encode(&msg).unwrap();
            let mut llr: Vec<f64> =
                cw.iter().map(|&b| if b == 0 { 8.0 } else { -8.0 }).collect();
            let flip = (trial * 37) % code.n;
            llr[flip] = -llr[flip];
            let res = code.spa_decode(&llr, 50).unwrap();
            assert!(res.syndrome_ok, "flip at {flip} not corrected");
            assert_eq!(res.hard_bits, cw);
        }
    }

    #[test]
    fn spa_negation_symmetry_via_all_ones_codeword() {
        // Every check has even degree, so the all-ones word is a codeword
        // and negating all LLRs must flip every decision.
        let code = default_code();
        let ones = vec![1u8; code.n];
        assert!(code.syndrome_ok(&ones));
        let mut rng = stream_rng(104, 0);
        let msg: Vec<u8> = (0..code.k_msg).map(|_| rng.gen_range(0..2u8)).collect();
        let cw = code.encode(&msg).unwrap();
        let llr: Vec<f64> = cw
            .iter()
            .map(|&b| {
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.8;
                (if b == 0 { 4.0 } else { -4.0 }) + noise
            })
            .collect();
        let plain = code.spa_decode(&llr, 50).unwrap();
        let negated: Vec<f64> = llr.iter().map(|l| -l).collect();
        let flipped = code.spa_decode(&negated, 50).unwrap();
        if plain.syndrome_ok && flipped.syndrome_ok {
            for (a, b) in plain.hard_bits.iter().zip(flipped.hard_bits.iter()) {
                assert_eq!(a ^ 1, *b);
            }
        }
    }

    #[test]
    fn bpsk_awgn_waterfall_at_3db() {
        // Rate 1/2, Eb/N0 = 3 dB => Es/N0 = 0 dB, sigma^2 = 1/10^{0.3}.
        let code = default_code();
        let mut rng = stream_rng(105, 0);
        let sigma2 = 1.0 / 10f64.powf(0.3);
        let blocks = 10_000usize;
        let mut errors = 0u64;
        let mut bits = 0u64;
        for _ in 0..blocks {
            let msg: Vec<u8> = (0..code.k_msg).map(|_| rng.gen_range(0..2u8)).collect();
            let cw = code.encode(&msg).unwrap();
            let llr: Vec<f64> = cw
                .iter()
                .map(|&b| {
                    let x = if b == 0 { 1.0 } else { -1.0 };
                    let y = x + rng.sample::<f64, _>(StandardNormal) * sigma2.sqrt();
                    2.0 * y / sigma2
                })
                .collect();
            let res = code.spa_decode(&llr, 50).unwrap();
            let range = code.message_range();
            errors += res.hard_bits[range]
                .iter()
                .zip(msg.iter())
                .filter(|(a, b)| a != b)
                .count() as u64;
            bits += code.k_msg as u64;
        }
        let ber = errors as f64 / bits as f64;
        assert!(ber < 1e-3, "waterfall BER {ber} too high at Eb/N0 = 3 dB");
    }

    #[test]
    fn framing_and_deframing() {
        let code = default_code();
        let cw: Vec<i8> = (0..code.n).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let frames = frame_bits(&cw, 3).unwrap();
        assert_eq!(frames.len(), 162);
        let frames2 = frame_bits(&cw, 2).unwrap();
        assert_eq!(frames2.len(), 243);
        assert!(frame_bits(&cw, 4).is_err());
        assert_eq!(deframe_bits(&frames), cw);
    }

    #[test]
    fn extrinsic_has_low_correlation_with_sign_errors_at_high_snr() {
        // Weak statistical check: at high SNR the extrinsic part L - L_ch
        // should not systematically follow channel sign errors.
        let code = default_code();
        let mut rng = stream_rng(106, 0);
        let sigma2: f64 = 0.35;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..50 {
            let msg: Vec<u8> = (0..code.k_msg).map(|_| rng.gen_range(0..2u8)).collect();
            let cw = code.encode(&msg).unwrap();
            let llr: Vec<f64> = cw
                .iter()
                .map(|&b| {
                    let x = if b == 0 { 1.0 } else { -1.0 };
                    let y = x + rng.sample::<f64, _>(StandardNormal) * sigma2.sqrt();
                    2.0 * y / sigma2
                })
                .collect();
            let res = code.spa_decode(&llr, 50).unwrap();
            for v in 0..code.n {
                let sign_error = (hard_decision(llr[v]) != cw[v]) as i32 as f64;
                xs.push(sign_error);
                ys.push(res.llr[v] - llr[v]);
            }
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
        let sx = (xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n).sqrt();
        let corr = cov / (sx * sy).max(1e-12);
        // Correcting wrong channel signs makes the correlation negative;
        // anything near +1 would mean the decoder echoes its input.
        assert!(corr < 0.2, "extrinsic correlation {corr}");
    }
}
