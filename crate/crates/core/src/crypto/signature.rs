//! Signature abstraction and the default hash-based stand-in.
//!
//! The stand-in is a Winternitz one-time signature (base 4, 16-byte chain
//! values) under a height-6 Merkle tree, all built on SM3. The leaf is
//! chosen deterministically from the message, so signing is stateless; a
//! leaf can repeat across messages, which is acceptable for a simulator
//! but not for production use. Serialized keys and signatures are padded
//! with zeros to fixed lengths, and verification insists the padding is
//! zero so that any byte change is rejected.

use rand::RngCore;

use super::sm3::{sm3_concat, Sm3};

pub const PUBLIC_KEY_LEN: usize = 1331;
pub const PRIVATE_KEY_LEN: usize = 3482;
pub const SIGNATURE_LEN: usize = 2458;

#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: Vec<u8>,
    pub private: Vec<u8>,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("public_len", &self.public.len())
            .field("private_len", &self.private.len())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SignatureError {
    #[error("private key has length {0}, expected {1}")]
    PrivateKeyLength(usize, usize),
    #[error("private key is malformed")]
    MalformedPrivateKey,
}

pub trait SignatureScheme: Send + Sync {
    fn name(&self) -> &'static str;
    fn public_key_len(&self) -> usize;
    fn private_key_len(&self) -> usize;
    fn signature_len(&self) -> usize;
    fn keygen(&self, rng: &mut dyn RngCore) -> KeyPair;
    fn sign(&self, private_key: &[u8], message: &[u8]) -> Result<Vec<u8>, SignatureError>;
    fn verify(&self, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool;
}

const N: usize = 16;
const SEED_LEN: usize = 32;
const HEIGHT: usize = 6;
const LEAVES: usize = 1 << HEIGHT;
const LOG_W: usize = 2;
const W: usize = 1 << LOG_W;
const MSG_DIGITS: usize = N * 8 / LOG_W;
const CSUM_DIGITS: usize = 4;
const CHAINS: usize = MSG_DIGITS + CSUM_DIGITS;

// Private key layout.
const SK_SEED: std::ops::Range<usize> = 0..SEED_LEN;
const SK_PUB_SEED: std::ops::Range<usize> = SEED_LEN..2 * SEED_LEN;
const SK_ROOT: std::ops::Range<usize> = 2 * SEED_LEN..2 * SEED_LEN + N;
// Every tree level, leaves first: 2 * LEAVES - 1 nodes.
const SK_TREE_AT: usize = 2 * SEED_LEN + N;
const SK_USED: usize = SK_TREE_AT + (2 * LEAVES - 1) * N;

// Public key layout.
const PK_USED: usize = SEED_LEN + N;

// Signature layout.
const SIG_CHAINS_AT: usize = 4;
const SIG_PATH_AT: usize = SIG_CHAINS_AT + CHAINS * N;
const SIG_USED: usize = SIG_PATH_AT + HEIGHT * N;

const _: () = assert!(SK_USED <= PRIVATE_KEY_LEN);
const _: () = assert!(PK_USED <= PUBLIC_KEY_LEN);
const _: () = assert!(SIG_USED <= SIGNATURE_LEN);
const _: () = assert!((MSG_DIGITS * (W - 1)) < (1 << (CSUM_DIGITS * LOG_W)));

type Node = [u8; N];

fn truncate(d: [u8; 32]) -> Node {
    let mut out = [0u8; N];
    out.copy_from_slice(&d[..N]);
    out
}

/// Hash-chain context: a midstate over `pub_seed || 0^32` so every chain
/// step costs a single compression.
struct Chains {
    prefix: Sm3,
}

impl Chains {
    fn new(pub_seed: &[u8]) -> Self {
        let mut prefix = Sm3::new();
        prefix.update(pub_seed).update(&[0u8; 32]);
        Self { prefix }
    }

    fn step(&self, x: &Node, leaf: u32, chain: u32, pos: u32) -> Node {
        let mut h = self.prefix.clone();
        h.update(x)
            .update(&leaf.to_be_bytes())
            .update(&chain.to_be_bytes())
            .update(&pos.to_be_bytes());
        truncate(h.finalize())
    }

    fn walk(&self, mut x: Node, leaf: u32, chain: u32, from: usize, to: usize) -> Node {
        for pos in from..to {
            x = self.step(&x, leaf, chain, pos as u32);
        }
        x
    }
}

/// Secret chain starts for one leaf, two per hash output.
fn chain_secrets(sk_seed: &[u8], leaf: u32) -> [Node; CHAINS] {
    let mut out = [[0u8; N]; CHAINS];
    for (k, pair) in out.chunks_mut(2).enumerate() {
        let d = sm3_concat(&[
            sk_seed,
            b"wots",
            &leaf.to_be_bytes(),
            &(k as u32).to_be_bytes(),
        ]);
        for (i, node) in pair.iter_mut().enumerate() {
            node.copy_from_slice(&d[i * N..(i + 1) * N]);
        }
    }
    out
}

fn leaf_hash(pub_seed: &[u8], leaf: u32, ends: &[Node]) -> Node {
    let mut h = Sm3::new();
    h.update(pub_seed)
        .update(b"leaf")
        .update(&leaf.to_be_bytes());
    for e in ends {
        h.update(e);
    }
    truncate(h.finalize())
}

fn node_hash(pub_seed: &[u8], level: u32, index: u32, left: &Node, right: &Node) -> Node {
    truncate(sm3_concat(&[
        pub_seed,
        b"node",
        &level.to_be_bytes(),
        &index.to_be_bytes(),
        left,
        right,
    ]))
}

fn leaf_index(sk_seed: &[u8], message: &[u8]) -> u32 {
    (sm3_concat(&[sk_seed, b"idx", message])[0] as usize % LEAVES) as u32
}

fn digits(pub_seed: &[u8], root: &Node, leaf: u32, message: &[u8]) -> [usize; CHAINS] {
    let d = sm3_concat(&[pub_seed, root, &leaf.to_be_bytes(), message]);
    let mut out = [0usize; CHAINS];
    for i in 0..MSG_DIGITS {
        let byte = d[i * LOG_W / 8];
        let shift = 8 - LOG_W - (i * LOG_W) % 8;
        out[i] = ((byte >> shift) as usize) & (W - 1);
    }
    let mut csum: usize = out[..MSG_DIGITS].iter().map(|&v| W - 1 - v).sum();
    for i in (MSG_DIGITS..CHAINS).rev() {
        out[i] = csum & (W - 1);
        csum >>= LOG_W;
    }
    out
}

fn tree_levels(pub_seed: &[u8], leaves: &[Node]) -> Vec<Vec<Node>> {
    let mut levels = vec![leaves.to_vec()];
    for level in 0..HEIGHT {
        let below = &levels[level];
        let above: Vec<Node> = below
            .chunks_exact(2)
            .enumerate()
            .map(|(i, pair)| node_hash(pub_seed, level as u32 + 1, i as u32, &pair[0], &pair[1]))
            .collect();
        levels.push(above);
    }
    levels
}

/// WOTS + Merkle stand-in for a lattice signature, padded to fixed sizes.
#[derive(Clone, Copy, Debug, Default)]
pub struct HashChainSig;

impl SignatureScheme for HashChainSig {
    fn name(&self) -> &'static str {
        "sm3-wots-merkle"
    }

    fn public_key_len(&self) -> usize {
        PUBLIC_KEY_LEN
    }

    fn private_key_len(&self) -> usize {
        PRIVATE_KEY_LEN
    }

    fn signature_len(&self) -> usize {
        SIGNATURE_LEN
    }

    fn keygen(&self, rng: &mut dyn RngCore) -> KeyPair {
        let mut sk_seed = [0u8; SEED_LEN];
        let mut pub_seed = [0u8; SEED_LEN];
        rng.fill_bytes(&mut sk_seed);
        rng.fill_bytes(&mut pub_seed);

        let chains = Chains::new(&pub_seed);
        let leaves: Vec<Node> = (0..LEAVES as u32)
            .map(|leaf| {
                let secrets = chain_secrets(&sk_seed, leaf);
                let ends: Vec<Node> = (0..CHAINS as u32)
                    .map(|c| chains.walk(secrets[c as usize], leaf, c, 0, W - 1))
                    .collect();
                leaf_hash(&pub_seed, leaf, &ends)
            })
            .collect();
        let levels = tree_levels(&pub_seed, &leaves);
        let root = levels[HEIGHT][0];

        let mut public = vec![0u8; PUBLIC_KEY_LEN];
        public[..SEED_LEN].copy_from_slice(&pub_seed);
        public[SEED_LEN..PK_USED].copy_from_slice(&root);

        let mut private = vec![0u8; PRIVATE_KEY_LEN];
        private[SK_SEED].copy_from_slice(&sk_seed);
        private[SK_PUB_SEED].copy_from_slice(&pub_seed);
        private[SK_ROOT].copy_from_slice(&root);
        for (i, node) in levels.iter().flatten().enumerate() {
            let at = SK_TREE_AT + i * N;
            private[at..at + N].copy_from_slice(node);
        }
        KeyPair { public, private }
    }

    fn sign(&self, private_key: &[u8], message: &[u8]) -> Result<Vec<u8>, SignatureError> {
        if private_key.len() != PRIVATE_KEY_LEN {
            return Err(SignatureError::PrivateKeyLength(
                private_key.len(),
                PRIVATE_KEY_LEN,
            ));
        }
        if private_key[SK_USED..].iter().any(|&b| b != 0) {
            return Err(SignatureError::MalformedPrivateKey);
        }
        let sk_seed = &private_key[SK_SEED];
        let pub_seed = &private_key[SK_PUB_SEED];
        let root: Node = private_key[SK_ROOT].try_into().expect("fixed range");
        let tree = &private_key[SK_TREE_AT..SK_USED];

        let leaf = leaf_index(sk_seed, message);
        let ds = digits(pub_seed, &root, leaf, message);
        let chains = Chains::new(pub_seed);

        let mut sig = vec![0u8; SIGNATURE_LEN];
        sig[..4].copy_from_slice(&leaf.to_be_bytes());
        let secrets = chain_secrets(sk_seed, leaf);
        for (c, &d) in ds.iter().enumerate() {
            let v = chains.walk(secrets[c], leaf, c as u32, 0, d);
            let at = SIG_CHAINS_AT + c * N;
            sig[at..at + N].copy_from_slice(&v);
        }
        let mut idx = leaf as usize;
        let mut level_start = 0;
        for level in 0..HEIGHT {
            let from = (level_start + (idx ^ 1)) * N;
            let at = SIG_PATH_AT + level * N;
            sig[at..at + N].copy_from_slice(&tree[from..from + N]);
            level_start += LEAVES >> level;
            idx >>= 1;
        }
        Ok(sig)
    }

    fn verify(&self, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
        if public_key.len() != PUBLIC_KEY_LEN || signature.len() != SIGNATURE_LEN {
            return false;
        }
        if public_key[PK_USED..].iter().any(|&b| b != 0)
            || signature[SIG_USED..].iter().any(|&b| b != 0)
        {
            return false;
        }
        let leaf = u32::from_be_bytes(signature[..4].try_into().expect("4 bytes"));
        if leaf as usize >= LEAVES {
            return false;
        }
        let pub_seed = &public_key[..SEED_LEN];
        let root: Node = public_key[SEED_LEN..PK_USED]
            .try_into()
            .expect("fixed range");
        let ds = digits(pub_seed, &root, leaf, message);
        let chains = Chains::new(pub_seed);

        let ends: Vec<Node> = ds
            .iter()
            .enumerate()
            .map(|(c, &d)| {
                let at = SIG_CHAINS_AT + c * N;
                let v: Node = signature[at..at + N].try_into().expect("exact chunk");
                chains.walk(v, leaf, c as u32, d, W - 1)
            })
            .collect();
        let mut node = leaf_hash(pub_seed, leaf, &ends);
        let mut idx = leaf;
        for level in 0..HEIGHT {
            let at = SIG_PATH_AT + level * N;
            let sibling: Node = signature[at..at + N].try_into().expect("exact chunk");
            node = if idx & 1 == 0 {
                node_hash(pub_seed, level as u32 + 1, idx >> 1, &node, &sibling)
            } else {
                node_hash(pub_seed, level as u32 + 1, idx >> 1, &sibling, &node)
            };
            idx >>= 1;
        }
        node == root
    }
}
