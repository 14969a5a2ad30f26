//! Bit-packed bipolar hypervectors.
//!
//! Coordinate `i` lives in bit `i % 64` of word `i / 64`. A clear bit encodes
//! `+1` and a set bit encodes `-1`, so XOR on the packed words is exactly the
//! coordinate-wise product of the bipolar vectors. Pad bits past `dim - 1` are
//! always zero.

use crate::error::{Error, Result};
use crate::rng::{word_from_key, HdcSeed};

pub const DEFAULT_DIM: usize = 1536;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Hypervector {
    dim: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for Hypervector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hypervector")
            .field("dim", &self.dim)
            .field("minus_ones", &self.count_minus_ones())
            .finish()
    }
}

#[inline]
pub fn words_for(dim: usize) -> usize {
    dim.div_ceil(64)
}

#[inline]
fn last_word_mask(dim: usize) -> u64 {
    match dim % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::InvalidDimension(dim))
    } else {
        Ok(())
    }
}

fn check_same(a: &Hypervector, b: &Hypervector) -> Result<()> {
    if a.dim != b.dim {
        Err(Error::DimensionMismatch {
            left: a.dim,
            right: b.dim,
        })
    } else {
        Ok(())
    }
}

impl Hypervector {
    /// The all-(+1) vector, the identity of [`bind`].
    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            words: vec![0; words_for(dim)],
        })
    }

    /// The all-(−1) vector.
    pub fn negative_one(dim: usize) -> Result<Self> {
        let mut v = Self::identity(dim)?;
        v.words.iter_mut().for_each(|w| *w = u64::MAX);
        v.clear_padding();
        Ok(v)
    }

    /// Builds a vector from packed words; pad bits are cleared.
    pub fn from_words(dim: usize, mut words: Vec<u64>) -> Result<Self> {
        check_dim(dim)?;
        if words.len() != words_for(dim) {
            return Err(Error::Shape(format!(
                "{} words supplied for dimension {dim} (need {})",
                words.len(),
                words_for(dim)
            )));
        }
        let last = words.len() - 1;
        words[last] &= last_word_mask(dim);
        Ok(Self { dim, words })
    }

    /// Builds a vector from bipolar coordinates; any value other than `+1`
    /// or `-1` is rejected.
    pub fn from_bipolar(coords: &[i8]) -> Result<Self> {
        let mut v = Self::identity(coords.len())?;
        for (i, &c) in coords.iter().enumerate() {
            match c {
                1 => {}
                -1 => v.words[i / 64] |= 1 << (i % 64),
                other => {
                    return Err(Error::InvalidValue(format!(
                        "coordinate {i} is {other}, expected +1 or -1"
                    )))
                }
            }
        }
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    /// Bipolar value of coordinate `i`: `1 - 2 * bit(i)`.
    #[inline]
    pub fn coordinate(&self, i: usize) -> i8 {
        if self.bit(i) {
            -1
        } else {
            1
        }
    }

    pub fn to_bipolar(&self) -> Vec<i8> {
        (0..self.dim).map(|i| self.coordinate(i)).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.dim).map(|i| f64::from(self.coordinate(i))).collect()
    }

    /// Adds `scale * self` into `out` coordinate-wise.
    pub fn axpy_into(&self, scale: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        for (w, chunk) in self.words.iter().zip(out.chunks_mut(64)) {
            for (j, o) in chunk.iter_mut().enumerate() {
                if (w >> j) & 1 == 1 {
                    *o -= scale;
                } else {
                    *o += scale;
                }
            }
        }
    }

    /// Dot product with a real vector, treating `self` as ±1.
    pub fn dot_f64(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut acc = 0.0;
        for (w, chunk) in self.words.iter().zip(x.chunks(64)) {
            for (j, &v) in chunk.iter().enumerate() {
                if (w >> j) & 1 == 1 {
                    acc -= v;
                } else {
                    acc += v;
                }
            }
        }
        acc
    }

    pub fn count_minus_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn hamming(&self, other: &Self) -> Result<u32> {
        check_same(self, other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum())
    }

    pub fn padding_is_clean(&self) -> bool {
        self.words
            .last()
            .is_some_and(|&w| w & !last_word_mask(self.dim) == 0)
    }

    fn clear_padding(&mut self) {
        if let Some(w) = self.words.last_mut() {
            *w &= last_word_mask(self.dim);
        }
    }
}

/// Rademacher-distributed hypervector for codebook entry `index`.
pub fn random_hypervector(seed: &HdcSeed, index: u64, dim: usize) -> Result<Hypervector> {
    check_dim(dim)?;
    let key = seed.vector_key(index);
    let words = (0..words_for(dim) as u64)
        .map(|pos| word_from_key(key, pos))
        .collect();
    Hypervector::from_words(dim, words)
}

pub fn bind(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    check_same(a, b)?;
    Ok(Hypervector {
        dim: a.dim,
        words: a.words.iter().zip(&b.words).map(|(x, y)| x ^ y).collect(),
    })
}

/// Inverse of [`bind`]; bipolar binding is its own inverse.
pub fn unbind(c: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    bind(c, b)
}

/// Coordinate-wise majority. Zero-sum coordinates take their sign from the
/// tie vector `random_hypervector(tie_seed, 0, dim)`.
pub fn bundle(vs: &[Hypervector], tie_seed: &HdcSeed) -> Result<Hypervector> {
    let first = vs.first().ok_or(Error::EmptyBundle)?;
    for v in &vs[1..] {
        check_same(first, v)?;
    }
    let dim = first.dim;
    let n = vs.len() as i64;
    let mut minus = vec![0i64; dim];
    for v in vs {
        for (i, m) in minus.iter_mut().enumerate() {
            *m += i64::from(v.bit(i));
        }
    }
    let ties = if n % 2 == 0 {
        Some(random_hypervector(tie_seed, 0, dim)?)
    } else {
        None
    };
    let mut out = Hypervector::identity(dim)?;
    for (i, &m) in minus.iter().enumerate() {
        let sum = n - 2 * m;
        let negative = match sum.signum() {
            -1 => true,
            1 => false,
            _ => ties.as_ref().is_some_and(|t| t.bit(i)),
        };
        if negative {
            out.words[i / 64] |= 1 << (i % 64);
        }
    }
    Ok(out)
}

/// Cyclic rotation: coordinate `i` of the input lands at `(i + k) mod dim`.
pub fn permute(a: &Hypervector, k: i64) -> Hypervector {
    let dim = a.dim;
    let shift = k.rem_euclid(dim as i64) as usize;
    if shift == 0 {
        return a.clone();
    }
    let mut out = Hypervector {
        dim,
        words: vec![0; a.words.len()],
    };
    for i in 0..dim {
        if a.bit(i) {
            let j = (i + shift) % dim;
            out.words[j / 64] |= 1 << (j % 64);
        }
    }
    out
}

/// Exact cosine similarity `(d - 2 * hamming) / d`.
pub fn cossim_hv(a: &Hypervector, b: &Hypervector) -> Result<f64> {
    let h = a.hamming(b)?;
    Ok((a.dim as f64 - 2.0 * f64::from(h)) / a.dim as f64)
}
