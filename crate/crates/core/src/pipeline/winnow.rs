//! Winnow error reconciliation.
//!
//! Each round both strings are shuffled with a shared seeded permutation
//! (except the first), then cut into blocks. Alice announces one parity
//! per block; for each block whose parity differs she also announces a
//! Hamming syndrome over positions `1..len`, and Bob flips the bit the
//! syndrome difference points at. After every block the first bit (for the
//! parity) and, on mismatched blocks, the bits at power-of-two positions
//! (for the syndrome) are discarded, so the disclosed values say nothing
//! about the surviving bits. A shorter trailing block is handled the same
//! way with a narrower syndrome, so every bit is covered every round.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bits::BitString;

/// Who put bits on the public channel and what they were.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Disclosure {
    /// Alice's block parities.
    Parity,
    /// Alice's syndromes for mismatched blocks, concatenated.
    Syndrome,
    /// Bob's per-block mismatch flags (derived from parities Alice sent).
    Mismatch,
}

/// Observer for everything the two parties exchange in the clear.
pub trait PublicChannel {
    fn send(&mut self, kind: Disclosure, bits: &BitString);
}

/// Channel that only counts leaked bits.
#[derive(Clone, Debug, Default)]
pub struct CountingChannel {
    pub parity_bits: u64,
    pub syndrome_bits: u64,
    pub messages: u64,
}

impl PublicChannel for CountingChannel {
    fn send(&mut self, kind: Disclosure, bits: &BitString) {
        self.messages += 1;
        match kind {
            Disclosure::Parity => self.parity_bits += bits.len() as u64,
            Disclosure::Syndrome => self.syndrome_bits += bits.len() as u64,
            Disclosure::Mismatch => {}
        }
    }
}

/// Channel that keeps every message.
#[derive(Clone, Debug, Default)]
pub struct RecordingChannel {
    pub messages: Vec<(Disclosure, BitString)>,
}

impl PublicChannel for RecordingChannel {
    fn send(&mut self, kind: Disclosure, bits: &BitString) {
        self.messages.push((kind, bits.clone()));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WinnowParams {
    /// Block size per round; the last entry repeats once the list runs out.
    /// Entries must be at least 2.
    pub schedule: Vec<usize>,
    pub max_rounds: usize,
    pub shuffle_seed: u64,
}

impl Default for WinnowParams {
    fn default() -> Self {
        Self {
            schedule: vec![8, 8, 16, 16, 32, 64, 128, 256],
            max_rounds: 24,
            shuffle_seed: 0,
        }
    }
}

impl WinnowParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.shuffle_seed = seed;
        self
    }

    fn block_size(&self, round: usize) -> usize {
        let last = *self.schedule.last().unwrap_or(&8);
        self.schedule.get(round).copied().unwrap_or(last)
    }
}

#[derive(Clone, Debug)]
pub struct ReconciliationResult {
    pub alice: BitString,
    pub bob: BitString,
    pub leaked_bits: u64,
    pub discarded_bits: u64,
    /// Bits Bob flipped.
    pub corrections: u64,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WinnowError {
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("input shorter than one block ({0} bits)")]
    TooShort(usize),
    #[error("block sizes must be at least 2")]
    BadSchedule,
    #[error("still mismatched after {rounds} rounds")]
    RoundLimit {
        rounds: usize,
        corrections: u64,
        leaked_bits: u64,
    },
}

/// Syndrome over positions `1..block.len()`: XOR of the indices of set bits.
pub fn hamming_syndrome(block: &[u8]) -> usize {
    block
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &b)| b == 1)
        .fold(0, |acc, (i, _)| acc ^ i)
}

/// Bits needed to carry a syndrome of a block of `len` bits.
pub fn syndrome_width(len: usize) -> usize {
    if len < 2 {
        0
    } else {
        (usize::BITS - (len - 1).leading_zeros()) as usize
    }
}

fn push_value(out: &mut BitString, v: usize, width: usize) {
    for k in (0..width).rev() {
        out.push(((v >> k) & 1) as u8);
    }
}

pub fn winnow_reconcile(
    alice: &BitString,
    bob: &BitString,
    params: &WinnowParams,
    channel: &mut dyn PublicChannel,
) -> Result<ReconciliationResult, WinnowError> {
    if alice.len() != bob.len() {
        return Err(WinnowError::LengthMismatch(alice.len(), bob.len()));
    }
    if params.schedule.iter().any(|&b| b < 2) {
        return Err(WinnowError::BadSchedule);
    }
    let first = params.block_size(0);
    if alice.len() < first {
        return Err(WinnowError::TooShort(alice.len()));
    }

    let mut a: Vec<u8> = alice.as_slice().to_vec();
    let mut b: Vec<u8> = bob.as_slice().to_vec();
    let mut leaked = 0u64;
    let mut discarded = 0u64;
    let mut corrections = 0u64;
    let mut perm: Vec<usize> = Vec::new();
    let mut scratch_a = Vec::new();
    let mut scratch_b = Vec::new();

    for round in 0..params.max_rounds.max(1) {
        if round > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(
                params.shuffle_seed ^ (round as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            perm.clear();
            perm.extend(0..a.len());
            perm.shuffle(&mut rng);
            scratch_a.clear();
            scratch_b.clear();
            scratch_a.extend(perm.iter().map(|&i| a[i]));
            scratch_b.extend(perm.iter().map(|&i| b[i]));
            std::mem::swap(&mut a, &mut scratch_a);
            std::mem::swap(&mut b, &mut scratch_b);
        }
        if a.is_empty() {
            return Ok(ReconciliationResult {
                alice: BitString::new(),
                bob: BitString::new(),
                leaked_bits: leaked,
                discarded_bits: discarded,
                corrections,
                rounds: round,
            });
        }

        let size = params.block_size(round);
        let mut parities = BitString::new();
        let mut flags = BitString::new();
        let mut syndromes = BitString::new();
        let mut keep_a = Vec::with_capacity(a.len());
        let mut keep_b = Vec::with_capacity(b.len());
        let mut mismatched = 0usize;

        for (blk_a, blk_b) in a.chunks_mut(size).zip(b.chunks_mut(size)) {
            let len = blk_a.len();
            let pa = blk_a.iter().fold(0, |x, &v| x ^ v);
            let pb = blk_b.iter().fold(0, |x, &v| x ^ v);
            parities.push(pa);
            let differs = pa != pb;
            flags.push(differs as u8);
            if differs {
                mismatched += 1;
                let width = syndrome_width(len);
                let sa = hamming_syndrome(blk_a);
                push_value(&mut syndromes, sa, width);
                let diff = sa ^ hamming_syndrome(blk_b);
                if diff != 0 && diff < len {
                    blk_b[diff] ^= 1;
                    corrections += 1;
                }
            }
            for i in 1..len {
                if differs && i.is_power_of_two() {
                    continue;
                }
                keep_a.push(blk_a[i]);
                keep_b.push(blk_b[i]);
            }
            discarded += 1 + if differs {
                syndrome_width(len) as u64
            } else {
                0
            };
        }

        leaked += parities.len() as u64 + syndromes.len() as u64;
        channel.send(Disclosure::Parity, &parities);
        channel.send(Disclosure::Mismatch, &flags);
        if !syndromes.is_empty() {
            channel.send(Disclosure::Syndrome, &syndromes);
        }
        a = keep_a;
        b = keep_b;

        if mismatched == 0 {
            return Ok(ReconciliationResult {
                alice: BitString::from_bits(a),
                bob: BitString::from_bits(b),
                leaked_bits: leaked,
                discarded_bits: discarded,
                corrections,
                rounds: round + 1,
            });
        }
    }
    Err(WinnowError::RoundLimit {
        rounds: params.max_rounds.max(1),
        corrections,
        leaked_bits: leaked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syndrome_width_matches_power_of_two_positions() {
        for len in 1usize..300 {
            let positions = (1..len).filter(|i| i.is_power_of_two()).count();
            assert_eq!(syndrome_width(len), positions, "len {len}");
        }
    }

    #[test]
    fn identical_inputs_take_one_round() {
        let k = BitString::parse(&"0110".repeat(25)).unwrap();
        let mut ch = CountingChannel::default();
        let r = winnow_reconcile(&k, &k, &WinnowParams::default(), &mut ch).unwrap();
        assert_eq!(r.rounds, 1);
        assert_eq!(r.corrections, 0);
        assert_eq!(r.leaked_bits, 13);
        assert_eq!(r.discarded_bits, 13);
        assert_eq!(r.alice.len(), 87);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let a = BitString::zeros(16);
        let b = BitString::zeros(17);
        let mut ch = CountingChannel::default();
        assert!(matches!(
            winnow_reconcile(&a, &b, &WinnowParams::default(), &mut ch),
            Err(WinnowError::LengthMismatch(16, 17))
        ));
    }
}
