//! Abstracted quantum channel: detections from transmittance and detector
//! efficiency, random basis choices, and independent bit flips.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric};

use super::rate::DeviceProfile;
use crate::bits::BitString;

pub const SIFT_FACTOR: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct SiftedKeyPair {
    pub alice: BitString,
    pub bob: BitString,
    /// Flip probability used to generate `bob`; not visible to the protocol.
    pub qber_true: f64,
    pub pulses: u64,
    pub detections: u64,
    /// Basis choice per detection, Alice then Bob; the public sift record.
    pub alice_bases: BitString,
    pub bob_bases: BitString,
}

impl SiftedKeyPair {
    pub fn len(&self) -> usize {
        self.alice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice.is_empty()
    }

    /// Bytes both sides hold after basis reconciliation.
    pub fn sift_record(&self) -> Vec<u8> {
        let mut out = self.alice_bases.to_bytes();
        out.extend_from_slice(&self.bob_bases.to_bytes());
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SiftError {
    #[error("no detections in {pulses} pulses")]
    NoDetections { pulses: u64 },
    #[error("invalid sifting parameters: {0}")]
    Invalid(String),
}

fn detection_probability(profile: &DeviceProfile, total_loss_db: f64) -> f64 {
    10f64.powf(-total_loss_db / 10.0) * profile.detector_efficiency
}

/// Pulses needed so the expected sifted length is `target_bits`.
pub fn pulses_for_target(profile: &DeviceProfile, total_loss_db: f64, target_bits: usize) -> u64 {
    let p = detection_probability(profile, total_loss_db) * SIFT_FACTOR;
    (target_bits as f64 / p).ceil() as u64
}

/// Sifted key of expected length `block_target_bits`.
pub fn simulate_sifting<R: Rng + ?Sized>(
    profile: &DeviceProfile,
    total_loss_db: f64,
    block_target_bits: usize,
    rng: &mut R,
) -> Result<SiftedKeyPair, SiftError> {
    if block_target_bits == 0 {
        return Err(SiftError::Invalid("block target must be positive".into()));
    }
    let pulses = pulses_for_target(profile, total_loss_db, block_target_bits);
    simulate_sifting_pulses(profile, total_loss_db, pulses, rng)
}

/// Sifted key from a fixed number of pulses.
pub fn simulate_sifting_pulses<R: Rng + ?Sized>(
    profile: &DeviceProfile,
    total_loss_db: f64,
    pulses: u64,
    rng: &mut R,
) -> Result<SiftedKeyPair, SiftError> {
    if !(total_loss_db >= 0.0) {
        return Err(SiftError::Invalid(format!(
            "loss must be non-negative, got {total_loss_db}"
        )));
    }
    let p = detection_probability(profile, total_loss_db).min(1.0);
    let detections = Binomial::new(pulses, p)
        .map_err(|e| SiftError::Invalid(e.to_string()))?
        .sample(rng);
    if detections == 0 {
        return Err(SiftError::NoDetections { pulses });
    }
    let n = detections as usize;
    let alice_bases = BitString::random(n, rng);
    let bob_bases = BitString::random(n, rng);
    let mut kept = Vec::with_capacity(n / 2 + 64);
    let mut word = 0u64;
    let mut left = 0u32;
    for (&x, &y) in alice_bases.as_slice().iter().zip(bob_bases.as_slice()) {
        if x != y {
            continue;
        }
        if left == 0 {
            word = rng.random();
            left = 64;
        }
        kept.push((word & 1) as u8);
        word >>= 1;
        left -= 1;
    }
    let mut flipped = kept.clone();
    let q = profile.qber_base;
    if q > 0.0 && !flipped.is_empty() {
        // Gaps between flips are geometric, so only the flips cost a draw.
        let gaps = Geometric::new(q).map_err(|e| SiftError::Invalid(e.to_string()))?;
        let mut i = gaps.sample(rng);
        while i < flipped.len() as u64 {
            flipped[i as usize] ^= 1;
            i += 1 + gaps.sample(rng);
        }
    }
    let alice = BitString::from_bits(kept);
    let bob = BitString::from_bits(flipped);
    Ok(SiftedKeyPair {
        alice,
        bob,
        qber_true: q,
        pulses,
        detections,
        alice_bases,
        bob_bases,
    })
}
