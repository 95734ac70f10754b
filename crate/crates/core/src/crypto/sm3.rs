//! SM3 cryptographic hash (GB/T 32905-2016).
//!
//! Merkle-Damgard construction over 512-bit blocks with a 256-bit state.
//! The hasher is `Clone`, so a caller can absorb a fixed prefix once and
//! fork the midstate for many short suffixes.

/// Digest size in bytes.
pub const DIGEST_LEN: usize = 32;

/// Block size in bytes.
pub const BLOCK_LEN: usize = 64;

pub type Digest = [u8; DIGEST_LEN];

const IV: [u32; 8] = [
    0x7380_166f,
    0x4914_b2b9,
    0x1724_42d7,
    0xda8a_0600,
    0xa96f_30bc,
    0x1631_38aa,
    0xe38d_ee4d,
    0xb0fb_0e4e,
];

#[inline(always)]
fn p0(x: u32) -> u32 {
    x ^ x.rotate_left(9) ^ x.rotate_left(17)
}

#[inline(always)]
fn p1(x: u32) -> u32 {
    x ^ x.rotate_left(15) ^ x.rotate_left(23)
}

const fn round_constants() -> [u32; 64] {
    let mut t = [0u32; 64];
    let mut j = 0;
    while j < 64 {
        let base: u32 = if j < 16 { 0x79cc_4519 } else { 0x7a87_9d8a };
        t[j] = base.rotate_left(j as u32 % 32);
        j += 1;
    }
    t
}

const T: [u32; 64] = round_constants();

fn compress(state: &mut [u32; 8], block: &[u8; BLOCK_LEN]) {
    let mut w = [0u32; 68];
    for (i, word) in block.chunks_exact(4).enumerate() {
        w[i] = u32::from_be_bytes([word[0], word[1], word[2], word[3]]);
    }
    for j in 16..68 {
        w[j] = p1(w[j - 16] ^ w[j - 9] ^ w[j - 3].rotate_left(15))
            ^ w[j - 13].rotate_left(7)
            ^ w[j - 6];
    }

    let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut h] = *state;

    // One round with the register roles passed in; rotating the names over
    // four rounds avoids shuffling eight values every round.
    macro_rules! round {
        ($a:ident, $b:ident, $c:ident, $d:ident, $e:ident, $f:ident, $g:ident, $h:ident,
         $j:expr, $ff:expr, $gg:expr) => {{
            let j = $j;
            let a12 = $a.rotate_left(12);
            let ss1 = a12.wrapping_add($e).wrapping_add(T[j]).rotate_left(7);
            let ss2 = ss1 ^ a12;
            let tt1 = $ff($a, $b, $c)
                .wrapping_add($d)
                .wrapping_add(ss2)
                .wrapping_add(w[j] ^ w[j + 4]);
            let tt2 = $gg($e, $f, $g)
                .wrapping_add($h)
                .wrapping_add(ss1)
                .wrapping_add(w[j]);
            $d = tt1;
            $b = $b.rotate_left(9);
            $h = p0(tt2);
            $f = $f.rotate_left(19);
        }};
    }
    macro_rules! four {
        ($j:expr, $ff:expr, $gg:expr) => {{
            round!(a, b, c, d, e, f, g, h, $j, $ff, $gg);
            round!(d, a, b, c, h, e, f, g, $j + 1, $ff, $gg);
            round!(c, d, a, b, g, h, e, f, $j + 2, $ff, $gg);
            round!(b, c, d, a, f, g, h, e, $j + 3, $ff, $gg);
        }};
    }
    let xor3 = |x: u32, y: u32, z: u32| x ^ y ^ z;
    let maj = |x: u32, y: u32, z: u32| (x & y) | (x & z) | (y & z);
    let choose = |x: u32, y: u32, z: u32| (x & y) | (!x & z);
    four!(0, xor3, xor3);
    four!(4, xor3, xor3);
    four!(8, xor3, xor3);
    four!(12, xor3, xor3);
    four!(16, maj, choose);
    four!(20, maj, choose);
    four!(24, maj, choose);
    four!(28, maj, choose);
    four!(32, maj, choose);
    four!(36, maj, choose);
    four!(40, maj, choose);
    four!(44, maj, choose);
    four!(48, maj, choose);
    four!(52, maj, choose);
    four!(56, maj, choose);
    four!(60, maj, choose);

    state[0] ^= a;
    state[1] ^= b;
    state[2] ^= c;
    state[3] ^= d;
    state[4] ^= e;
    state[5] ^= f;
    state[6] ^= g;
    state[7] ^= h;
}

/// Incremental SM3 hasher.
#[derive(Clone)]
pub struct Sm3 {
    state: [u32; 8],
    buffer: [u8; BLOCK_LEN],
    buffered: usize,
    total_len: u64,
}

impl Default for Sm3 {
    fn default() -> Self {
        Self::new()
    }
}

impl Sm3 {
    pub fn new() -> Self {
        Self {
            state: IV,
            buffer: [0; BLOCK_LEN],
            buffered: 0,
            total_len: 0,
        }
    }

    pub fn update(&mut self, mut data: &[u8]) -> &mut Self {
        self.total_len = self.total_len.wrapping_add(data.len() as u64);

        if self.buffered > 0 {
            let take = (BLOCK_LEN - self.buffered).min(data.len());
            self.buffer[self.buffered..self.buffered + take].copy_from_slice(&data[..take]);
            self.buffered += take;
            data = &data[take..];
            if self.buffered < BLOCK_LEN {
                return self;
            }
            let block = self.buffer;
            compress(&mut self.state, &block);
            self.buffered = 0;
        }

        let mut blocks = data.chunks_exact(BLOCK_LEN);
        for block in &mut blocks {
            compress(&mut self.state, block.try_into().expect("exact chunk"));
        }
        let rest = blocks.remainder();
        self.buffer[..rest.len()].copy_from_slice(rest);
        self.buffered = rest.len();
        self
    }

    pub fn finalize(&self) -> Digest {
        let mut state = self.state;
        let mut block = [0u8; BLOCK_LEN];
        block[..self.buffered].copy_from_slice(&self.buffer[..self.buffered]);
        block[self.buffered] = 0x80;
        let bit_len = self.total_len.wrapping_mul(8).to_be_bytes();
        if self.buffered + 1 > BLOCK_LEN - 8 {
            compress(&mut state, &block);
            block = [0u8; BLOCK_LEN];
        }
        block[BLOCK_LEN - 8..].copy_from_slice(&bit_len);
        compress(&mut state, &block);

        let mut out = [0u8; DIGEST_LEN];
        for (chunk, word) in out.chunks_exact_mut(4).zip(state) {
            chunk.copy_from_slice(&word.to_be_bytes());
        }
        out
    }
}

/// One-shot SM3 digest.
pub fn sm3(data: &[u8]) -> Digest {
    Sm3::new().update(data).finalize()
}

/// SM3 over the concatenation of `parts`, without materializing it.
pub fn sm3_concat(parts: &[&[u8]]) -> Digest {
    let mut h = Sm3::new();
    for p in parts {
        h.update(p);
    }
    h.finalize()
}

pub fn to_hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_vector_abc() {
        assert_eq!(
            to_hex(&sm3(b"abc")),
            "66c7f0f462eeedd9d1f2d46bdc10e4e24167c4875cf2f7a2297da02b8f4ba8e0"
        );
    }

    #[test]
    fn standard_vector_512_bit_message() {
        let msg = b"abcd".repeat(16);
        assert_eq!(
            to_hex(&sm3(&msg)),
            "debe9ff92275b8a138604889c18e5a4d6fdb70e5387e5765293dcba39c0c5732"
        );
    }

    #[test]
    fn empty_differs_from_single_zero_byte() {
        assert_ne!(sm3(b""), sm3(&[0u8]));
        assert_eq!(
            to_hex(&sm3(b"")),
            "1ab21d8355cfa17f8e61194831e81a8f22bec8c728fefb747ed035eb5082aa2b"
        );
    }

    #[test]
    fn incremental_matches_one_shot_across_block_boundaries() {
        let data: Vec<u8> = (0..300u32).map(|i| (i * 7 + 3) as u8).collect();
        for split in [0, 1, 55, 56, 63, 64, 65, 128, 299] {
            let mut h = Sm3::new();
            h.update(&data[..split]).update(&data[split..]);
            assert_eq!(h.finalize(), sm3(&data), "split at {split}");
        }
    }

    #[test]
    fn forked_midstate_matches_full_hash() {
        let mut prefix = Sm3::new();
        prefix.update(&[9u8; 64]);
        let mut fork = prefix.clone();
        fork.update(b"suffix");
        assert_eq!(fork.finalize(), sm3_concat(&[&[9u8; 64], b"suffix"]));
    }
}
