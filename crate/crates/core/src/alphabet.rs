//! PSK alphabets and Gray bit labeling.
//!
//! Data symbols live in an `alpha_s`-PSK set with unit amplitude; transmit
//! symbols live in an `alpha_x`-PSK set scaled to `sqrt(E_tx / M)` so the
//! total transmit energy over `M` antennas is `E_tx`. Point `i` of an
//! `alpha`-PSK set has phase `pi * (2i + 1) / alpha` for `i = 1..alpha`, and
//! points are stored in that index order.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// An `alpha`-PSK constellation with a fixed amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct PskAlphabet {
    /// Number of constellation points.
    pub cardinality: usize,
    /// Common magnitude of every point.
    pub amplitude: f64,
    /// Points ordered by index `i = 1..alpha` (phase `pi (2i+1) / alpha`).
    pub points: Vec<Complex64>,
}

impl PskAlphabet {
    /// Builds an alphabet with the given cardinality and amplitude.
    pub fn new(cardinality: usize, amplitude: f64) -> Result<Self> {
        if cardinality < 2 {
            return Err(Error::InvalidConfig(format!(
                "alphabet cardinality must be >= 2, got {cardinality}"
            )));
        }
        if amplitude <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "alphabet amplitude must be > 0, got {amplitude}"
            )));
        }
        let points = (0..cardinality)
            .map(|p| {
                let i = (p + 1) as f64;
                let phase = PI * (2.0 * i + 1.0) / cardinality as f64;
                Complex64::from_polar(amplitude, phase)
            })
            .collect();
        Ok(Self {
            cardinality,
            amplitude,
            points,
        })
    }

    /// Unit-amplitude data alphabet. Cardinality must be a power of two so
    /// symbols carry an integer number of bits.
    pub fn data(alpha_s: usize) -> Result<Self> {
        if !alpha_s.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "data alphabet cardinality must be a power of two, got {alpha_s}"
            )));
        }
        Self::new(alpha_s, 1.0)
    }

    /// Transmit alphabet for `m` antennas with total transmit energy `e_tx`,
    /// so each entry has magnitude `sqrt(e_tx / m)`.
    pub fn transmit(alpha_x: usize, m: usize, e_tx: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig("antenna count must be >= 1".into()));
        }
        Self::new(alpha_x, (e_tx / m as f64).sqrt())
    }

    /// Number of bits carried by one symbol (`log2` of the cardinality).
    pub fn bits_per_symbol(&self) -> usize {
        self.cardinality.trailing_zeros() as usize
    }

    /// Point at position `idx` (0-based; position `p` holds paper index `p+1`).
    #[inline]
    pub fn point(&self, idx: usize) -> Complex64 {
        self.points[idx]
    }

    /// Index of the point closest to `z` in Euclidean distance.
    /// Exact ties resolve to the lowest index.
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (idx, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = idx;
            }
        }
        best
    }

    /// Position reached from `idx` after rotating by `steps * 2*pi/alpha`.
    #[inline]
    pub fn rotate_index(&self, idx: usize, steps: usize) -> usize {
        (idx + steps) % self.cardinality
    }

    /// Phase increment between consecutive points.
    pub fn phase_step(&self) -> f64 {
        2.0 * PI / self.cardinality as f64
    }
}

/// Bijection between length-`N` bit vectors in `{-1,+1}` and the positions of
/// a `2^N`-PSK alphabet, using the binary-reflected Gray code over the
/// phase-ordered points. Bit `0` of a label is the most significant Gray bit,
/// and the antipodal convention is `binary 0 <-> +1`.
#[derive(Debug, Clone)]
pub struct GrayMapper {
    /// Bits per symbol.
    pub bits_per_symbol: usize,
    labels: Vec<Vec<i8>>,
}

impl GrayMapper {
    /// Builds the mapper for a `2^n_bits`-point alphabet.
    pub fn new(n_bits: usize) -> Result<Self> {
        if n_bits == 0 || n_bits > 16 {
            return Err(Error::InvalidConfig(format!(
                "bits per symbol must be in 1..=16, got {n_bits}"
            )));
        }
        let size = 1usize << n_bits;
        let labels = (0..size)
            .map(|p| {
                let g = p ^ (p >> 1);
                (0..n_bits)
                    .map(|l| {
                        let bit = (g >> (n_bits - 1 - l)) & 1;
                        if bit == 0 {
                            1i8
                        } else {
                            -1i8
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            bits_per_symbol: n_bits,
            labels,
        })
    }

    /// Mapper matching a data alphabet.
    pub fn for_alphabet(alphabet: &PskAlphabet) -> Result<Self> {
        if !alphabet.cardinality.is_power_of_two() {
            return Err(Error::InvalidConfig(
                "Gray mapping needs a power-of-two alphabet".into(),
            ));
        }
        Self::new(alphabet.bits_per_symbol())
    }

    /// Alphabet position for a `{-1,+1}` bit vector.
    pub fn map(&self, bits: &[i8]) -> Result<usize> {
        if bits.len() != self.bits_per_symbol {
            return Err(Error::Dimension(format!(
                "expected {} bits, got {}",
                self.bits_per_symbol,
                bits.len()
            )));
        }
        let mut g = 0usize;
        for &b in bits {
            g = (g << 1) | usize::from(b < 0);
        }
        // Invert the Gray code by prefix XOR.
        let mut p = g;
        let mut shift = 1;
        while shift < self.bits_per_symbol {
            p ^= p >> shift;
            shift <<= 1;
        }
        Ok(p)
    }

    /// Bit label of an alphabet position.
    #[inline]
    pub fn demap(&self, position: usize) -> &[i8] {
        &self.labels[position]
    }

    /// All labels in position order.
    pub fn labels(&self) -> &[Vec<i8>] {
        &self.labels
    }
}

/// Maps a bit vector to its constellation point.
pub fn gray_map(alphabet: &PskAlphabet, mapper: &GrayMapper, bits: &[i8]) -> Result<Complex64> {
    Ok(alphabet.point(mapper.map(bits)?))
}
