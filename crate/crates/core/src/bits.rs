//! Bit strings used by the post-processing stages.
//!
//! One byte per bit (0 or 1). Winnow shuffles and deletes individual bits
//! every round, which is simpler and fast enough on an unpacked layout;
//! the Toeplitz multiplier packs into words on its own.

use rand::Rng;

#[derive(Clone, PartialEq, Eq, Default)]
pub struct BitString(Vec<u8>);

impl BitString {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    /// Panics if any element is not 0 or 1.
    pub fn from_bits(bits: Vec<u8>) -> Self {
        assert!(bits.iter().all(|&b| b <= 1), "bit values must be 0 or 1");
        Self(bits)
    }

    /// Parses a string of '0'/'1' characters.
    pub fn parse(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(0),
                '1' => Some(1),
                _ => None,
            })
            .collect::<Option<Vec<u8>>>()
            .map(Self)
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            let word: u64 = rng.random();
            let take = (len - out.len()).min(64);
            out.extend((0..take).map(|i| ((word >> i) & 1) as u8));
        }
        Self(out)
    }

    /// MSB-first unpacking of `len` bits from `bytes`.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Self {
        assert!(len <= bytes.len() * 8);
        Self(
            (0..len)
                .map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1)
                .collect(),
        )
    }

    /// MSB-first packing, zero-padded in the last byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.0.len().div_ceil(8)];
        for (i, &b) in self.0.iter().enumerate() {
            out[i / 8] |= b << (7 - i % 8);
        }
        out
    }

    /// Little-endian word packing: bit i lands in word i/64 at position i%64.
    pub fn to_words(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.0.len().div_ceil(64)];
        for (i, &b) in self.0.iter().enumerate() {
            out[i / 64] |= (b as u64) << (i % 64);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] ^= 1;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn push(&mut self, bit: u8) {
        debug_assert!(bit <= 1);
        self.0.push(bit);
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn parity(&self) -> u8 {
        self.0.iter().fold(0, |acc, &b| acc ^ b)
    }

    pub fn xor(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a ^ b).collect())
    }

    pub fn hamming_distance(&self, other: &Self) -> usize {
        assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl std::fmt::Debug for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.len() <= 64 {
            write!(f, "BitString(")?;
            for b in &self.0 {
                write!(f, "{b}")?;
            }
            write!(f, ")")
        } else {
            write!(
                f,
                "BitString(len={}, ones={})",
                self.len(),
                self.count_ones()
            )
        }
    }
}

impl FromIterator<u8> for BitString {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        Self::from_bits(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_packing_is_msb_first() {
        let b = BitString::parse("1000000011").unwrap();
        assert_eq!(b.to_bytes(), vec![0x80, 0xc0]);
        assert_eq!(BitString::from_bytes(&b.to_bytes(), 10), b);
    }

    #[test]
    fn word_packing_is_lsb_first() {
        let mut bits = vec![0u8; 70];
        bits[0] = 1;
        bits[65] = 1;
        let w = BitString::from_bits(bits).to_words();
        assert_eq!(w, vec![1, 2]);
    }

    #[test]
    fn parse_rejects_other_characters() {
        assert!(BitString::parse("0102").is_none());
    }
}
