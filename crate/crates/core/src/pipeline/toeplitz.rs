//! Privacy amplification by Toeplitz hashing over GF(2).
//!
//! The seed `s` has `n_in + n_out - 1` bits and the matrix entry is
//! `T[i][j] = s[i - j + n_in - 1]`. Row `i` is therefore the seed window
//! `s[i..i + n_in]` read backwards, which is a forward window of the
//! reversed seed starting at `n_out - 1 - i`. Rows are evaluated a word at a
//! time against the packed input, from 64 pre-shifted copies of the seed.

use rand::Rng;

use crate::bits::BitString;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToeplitzSeed {
    bits: BitString,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PaError {
    #[error("seed has {got} bits, expected {expected}")]
    SeedLength { got: usize, expected: usize },
    #[error("output length {n_out} exceeds input length {n_in}")]
    OutputTooLong { n_out: usize, n_in: usize },
}

pub fn seed_len(n_in: usize, n_out: usize) -> usize {
    (n_in + n_out).saturating_sub(1)
}

impl ToeplitzSeed {
    pub fn new(bits: BitString) -> Self {
        Self { bits }
    }

    pub fn random<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        Self::new(BitString::random(seed_len(n_in, n_out), rng))
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits.to_bytes()
    }
}

/// 64 bits of `words` starting at bit `start` (LSB-first packing).
#[inline]
fn window(words: &[u64], start: usize) -> u64 {
    let w = start / 64;
    let o = start % 64;
    let lo = words.get(w).copied().unwrap_or(0);
    if o == 0 {
        lo
    } else {
        let hi = words.get(w + 1).copied().unwrap_or(0);
        (lo >> o) | (hi << (64 - o))
    }
}

pub fn privacy_amplify(
    key: &BitString,
    seed: &ToeplitzSeed,
    n_out: usize,
) -> Result<BitString, PaError> {
    let n_in = key.len();
    if n_out > n_in {
        return Err(PaError::OutputTooLong { n_out, n_in });
    }
    let expected = seed_len(n_in, n_out);
    if seed.len() != expected {
        return Err(PaError::SeedLength {
            got: seed.len(),
            expected,
        });
    }
    if n_out == 0 {
        return Ok(BitString::new());
    }
    let x = key.to_words();
    let reversed: BitString = seed.bits.as_slice().iter().rev().copied().collect();
    let r = reversed.to_words();
    // Bits past n_in are zero in the last input word, so no tail mask.
    let words = x.len();

    // shifted[o][k] holds the 64 reversed-seed bits starting at o + 64k,
    // so every row reads whole aligned words.
    let span = (n_out - 1) / 64 + words;
    let shifted: Vec<Vec<u64>> = (0..64.min(n_out))
        .map(|o| (0..span).map(|k| window(&r, o + 64 * k)).collect())
        .collect();

    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let base = n_out - 1 - i;
        let row = &shifted[base % 64][base / 64..base / 64 + words];
        let acc = row.iter().zip(&x).fold(0u64, |acc, (s, x)| acc ^ (s & x));
        out.push((acc.count_ones() & 1) as u8);
    }
    Ok(BitString::from_bits(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_seed_gives_zero_output() {
        let key = BitString::parse("1011001110").unwrap();
        let seed = ToeplitzSeed::new(BitString::zeros(seed_len(10, 4)));
        let out = privacy_amplify(&key, &seed, 4).unwrap();
        assert_eq!(out, BitString::zeros(4));
    }

    #[test]
    fn wrong_seed_length_is_rejected() {
        let key = BitString::zeros(8);
        let seed = ToeplitzSeed::new(BitString::zeros(5));
        assert_eq!(
            privacy_amplify(&key, &seed, 4).unwrap_err(),
            PaError::SeedLength {
                got: 5,
                expected: 11
            }
        );
    }

    #[test]
    fn small_case_by_hand() {
        // n_in 4, n_out 2, seed 10110: rows are s3 s2 s1 s0 = 1101 and s4 s3 s2 s1 = 0110.
        let key = BitString::parse("1101").unwrap();
        let seed = ToeplitzSeed::new(BitString::parse("10110").unwrap());
        let out = privacy_amplify(&key, &seed, 2).unwrap();
        assert_eq!(out, BitString::parse("11").unwrap());
    }
}
