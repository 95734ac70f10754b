//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use metroqkd_core::bits::BitString;

/// Toeplitz product built from an explicit matrix.
pub fn naive_toeplitz(seed: &[u8], x: &[u8], n_out: usize) -> Vec<u8> {
    let n_in = x.len();
    let mut m = vec![vec![0u8; n_in]; n_out];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = seed[i + n_in - 1 - j];
        }
    }
    m.iter()
        .map(|row| row.iter().zip(x).fold(0u8, |acc, (a, b)| acc ^ (a & b)))
        .collect()
}

/// Calibrate events by rescanning the sample stream: walk runs of
/// over-threshold samples and mark every `limit`-th element of each run.
pub fn gate_rescan(samples: &[f64], threshold: f64, limit: usize) -> Vec<&'static str> {
    let mut out = vec!["keep"; samples.len()];
    let mut i = 0;
    while i < samples.len() {
        if samples[i] <= threshold {
            i += 1;
            continue;
        }
        let start = i;
        while i < samples.len() && samples[i] > threshold {
            i += 1;
        }
        for (k, slot) in out[start..i].iter_mut().enumerate() {
            *slot = if (k + 1) % limit == 0 {
                "calibrate"
            } else {
                "discard"
            };
        }
    }
    out
}

/// Decodes a single-error syndrome with an explicit parity-check matrix
/// whose column `p` is the binary form of `p`, for positions `1..len`.
pub fn parity_check_syndrome(block: &[u8]) -> usize {
    let len = block.len();
    let rows = (usize::BITS - (len.max(2) - 1).leading_zeros()) as usize;
    let mut s = 0usize;
    for r in 0..rows {
        let mut bit = 0u8;
        for (p, &v) in block.iter().enumerate().skip(1) {
            bit ^= (((p >> r) & 1) as u8) & v;
        }
        s |= (bit as usize) << r;
    }
    s
}

pub fn flip_with(bits: &BitString, mask: &[bool]) -> BitString {
    bits.as_slice()
        .iter()
        .zip(mask)
        .map(|(&b, &m)| b ^ m as u8)
        .collect()
}

/// Sample standard deviation (n - 1).
pub fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Single-pass 3-sigma mean by explicit scans.
pub fn sigma_mean_scan(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = sample_sd(v);
    let mut sum = 0.0;
    let mut count = 0usize;
    for &x in v {
        if sd == 0.0 || (x - m).abs() <= 3.0 * sd {
            sum += x;
            count += 1;
        }
    }
    sum / count as f64
}

pub fn threshold_mean_scan(v: &[f64], threshold: f64) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for &x in v {
        if x <= threshold {
            sum += x;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}
