//! Mutual certificate + nonce-signature handshake and post-handshake data
//! authentication.
//!
//! Both sides call [`AuthSession::start`] to emit a hello carrying their
//! certificate and a fresh nonce, then feed every received frame to
//! [`AuthSession::step`]:
//!
//! 1. hello in: check the peer certificate against the CA, the subject
//!    against the expected peer, and the nonce against recent history;
//!    reply with a signature over `transcript digest || peer nonce`.
//! 2. signature in: check it carries our nonce, verifies under the peer
//!    certificate key, and binds the same transcript digest.
//!
//! The transcript digest is `sm3(initiator hello || responder hello)` over
//! the exact frames, so altering either hello in flight is caught by the
//! side whose view differs.
//!
//! ## Wire format
//!
//! Every frame is `type: u8 || body_len: u32 BE || body`.
//!
//! | type | body |
//! |------|------|
//! | `0x01` hello | `cert_len: u32 || certificate || nonce[32] || origin: u16 len || utf-8` |
//! | `0x02` signature | `digest[32] || nonce[32] || signature` |
//! | `0x03` tag | `category: u8 || tag[32] || challenge[32] || signature` |
//!
//! Certificates are `version: u8 || subject || issuer || not_before: u64 ||
//! not_after: u64 || key_len: u32 || key || sig_len: u32 || ca_signature`,
//! strings as `u16 len || utf-8`.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::cert::{Certificate, CertificateError};
use super::codec::{put_bytes32, put_str16, CodecError, Reader};
use super::signature::{KeyPair, SignatureScheme};
use super::sm3::{sm3_concat, Digest};
use super::tag::{compute_tag, Tag, TagCategory};

pub const NONCE_LEN: usize = 32;
pub type Nonce = [u8; NONCE_LEN];

const TYPE_HELLO: u8 = 0x01;
const TYPE_SIGNATURE: u8 = 0x02;
const TYPE_TAG: u8 = 0x03;

#[derive(Clone, PartialEq, Eq)]
pub enum Message {
    Hello {
        certificate: Vec<u8>,
        nonce: Nonce,
        origin: String,
    },
    Signature {
        digest: Digest,
        nonce: Nonce,
        signature: Vec<u8>,
    },
    TagAuth {
        category: TagCategory,
        tag: Digest,
        challenge: Digest,
        signature: Vec<u8>,
    },
}

impl fmt::Debug for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use super::sm3::to_hex;
        match self {
            Message::Hello {
                certificate,
                nonce,
                origin,
            } => write!(
                f,
                "Hello(origin={origin}, cert={}B, nonce={})",
                certificate.len(),
                to_hex(nonce)
            ),
            Message::Signature {
                digest,
                nonce,
                signature,
            } => write!(
                f,
                "Signature(digest={}, nonce={}, sig={}B)",
                to_hex(digest),
                to_hex(nonce),
                signature.len()
            ),
            Message::TagAuth {
                category,
                tag,
                signature,
                ..
            } => write!(
                f,
                "TagAuth({category}, tag={}, sig={}B)",
                to_hex(tag),
                signature.len()
            ),
        }
    }
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Signature { .. } => "signature",
            Message::TagAuth { .. } => "tag",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        let ty = match self {
            Message::Hello {
                certificate,
                nonce,
                origin,
            } => {
                put_bytes32(&mut body, certificate);
                body.extend_from_slice(nonce);
                put_str16(&mut body, origin);
                TYPE_HELLO
            }
            Message::Signature {
                digest,
                nonce,
                signature,
            } => {
                body.extend_from_slice(digest);
                body.extend_from_slice(nonce);
                body.extend_from_slice(signature);
                TYPE_SIGNATURE
            }
            Message::TagAuth {
                category,
                tag,
                challenge,
                signature,
            } => {
                body.push(category.byte());
                body.extend_from_slice(tag);
                body.extend_from_slice(challenge);
                body.extend_from_slice(signature);
                TYPE_TAG
            }
        };
        let mut out = Vec::with_capacity(body.len() + 5);
        out.push(ty);
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn decode(frame: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(frame);
        let ty = r.u8()?;
        let body = r.bytes32()?;
        r.finish()?;
        let mut r = Reader::new(body);
        let msg = match ty {
            TYPE_HELLO => {
                let certificate = r.bytes32()?.to_vec();
                let nonce = r.array32()?;
                let origin = r.str16()?;
                Message::Hello {
                    certificate,
                    nonce,
                    origin,
                }
            }
            TYPE_SIGNATURE => {
                let digest = r.array32()?;
                let nonce = r.array32()?;
                let signature = r.take(body.len() - 64)?.to_vec();
                Message::Signature {
                    digest,
                    nonce,
                    signature,
                }
            }
            TYPE_TAG => {
                let cat = r.u8()?;
                let category =
                    TagCategory::from_byte(cat).ok_or(CodecError::UnknownCategory(cat))?;
                let tag = r.array32()?;
                let challenge = r.array32()?;
                let signature = r.take(body.len().saturating_sub(65))?.to_vec();
                Message::TagAuth {
                    category,
                    tag,
                    challenge,
                    signature,
                }
            }
            other => return Err(CodecError::UnknownType(other)),
        };
        r.finish()?;
        Ok(msg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureReason {
    Malformed,
    UnexpectedMessage,
    CertificateInvalid,
    IdentityMismatch,
    Replay,
    SignatureInvalid,
    DigestMismatch,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::Malformed => "malformed",
            FailureReason::UnexpectedMessage => "unexpected-message",
            FailureReason::CertificateInvalid => "certificate-invalid",
            FailureReason::IdentityMismatch => "identity-mismatch",
            FailureReason::Replay => "replay",
            FailureReason::SignatureInvalid => "signature-invalid",
            FailureReason::DigestMismatch => "digest-mismatch",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionState {
    Init,
    CertsExchanged,
    Signed,
    Authenticated,
    Failed(FailureReason),
}

impl SessionState {
    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Authenticated | SessionState::Failed(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HandshakeError {
    #[error("session already finished in state {0:?}")]
    Terminal(SessionState),
    #[error("session has not emitted its hello yet")]
    NotStarted,
    #[error("session already started")]
    AlreadyStarted,
    #[error("session is not authenticated")]
    NotAuthenticated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub frame: Vec<u8>,
}

/// A node's long-term credentials.
#[derive(Clone, Debug)]
pub struct Identity {
    pub id: String,
    pub keys: KeyPair,
    pub certificate: Certificate,
}

/// CA identity and key every node trusts.
#[derive(Clone, Debug)]
pub struct TrustAnchor {
    pub ca_id: String,
    pub ca_public_key: Vec<u8>,
}

/// Recently seen nonces, both issued and received, bounded to `window`.
#[derive(Clone, Debug)]
pub struct NonceHistory {
    window: usize,
    seen: VecDeque<Nonce>,
}

impl Default for NonceHistory {
    fn default() -> Self {
        Self::new(4096)
    }
}

impl NonceHistory {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            seen: VecDeque::new(),
        }
    }

    pub fn contains(&self, nonce: &Nonce) -> bool {
        self.seen.contains(nonce)
    }

    pub fn record(&mut self, nonce: Nonce) {
        if self.seen.len() == self.window {
            self.seen.pop_front();
        }
        self.seen.push_back(nonce);
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub role: Role,
    pub expected_peer: String,
    /// Simulation time in seconds used for certificate validity checks.
    pub now: u64,
    pub rng_seed: [u8; 32],
}

pub struct AuthSession {
    scheme: Arc<dyn SignatureScheme>,
    identity: Arc<Identity>,
    anchor: Arc<TrustAnchor>,
    config: SessionConfig,
    rng: ChaCha20Rng,
    history: NonceHistory,
    state: SessionState,
    states: Vec<SessionState>,
    local_nonce: Option<Nonce>,
    peer_nonce: Option<Nonce>,
    local_hello: Option<Vec<u8>>,
    peer_hello: Option<Vec<u8>>,
    peer_certificate: Option<Certificate>,
    transcript: Vec<TranscriptEntry>,
    tags_sent: u64,
    tags_received: u64,
}

impl AuthSession {
    pub fn new(
        scheme: Arc<dyn SignatureScheme>,
        identity: Arc<Identity>,
        anchor: Arc<TrustAnchor>,
        config: SessionConfig,
    ) -> Self {
        let rng = ChaCha20Rng::from_seed(config.rng_seed);
        Self {
            scheme,
            identity,
            anchor,
            config,
            rng,
            history: NonceHistory::default(),
            state: SessionState::Init,
            states: vec![SessionState::Init],
            local_nonce: None,
            peer_nonce: None,
            local_hello: None,
            peer_hello: None,
            peer_certificate: None,
            transcript: Vec::new(),
            tags_sent: 0,
            tags_received: 0,
        }
    }

    /// Carries a node's nonce history into this session.
    pub fn with_history(mut self, history: NonceHistory) -> Self {
        self.history = history;
        self
    }

    pub fn into_history(self) -> NonceHistory {
        self.history
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    /// Every state entered, in order.
    pub fn state_history(&self) -> &[SessionState] {
        &self.states
    }

    pub fn role(&self) -> Role {
        self.config.role
    }

    pub fn local_id(&self) -> &str {
        &self.identity.id
    }

    pub fn local_nonce(&self) -> Option<&Nonce> {
        self.local_nonce.as_ref()
    }

    pub fn peer_certificate(&self) -> Option<&Certificate> {
        self.peer_certificate.as_ref()
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    /// `sm3(initiator hello || responder hello)` once both are known.
    pub fn transcript_digest(&self) -> Option<Digest> {
        let (local, peer) = (self.local_hello.as_ref()?, self.peer_hello.as_ref()?);
        Some(match self.config.role {
            Role::Initiator => sm3_concat(&[local, peer]),
            Role::Responder => sm3_concat(&[peer, local]),
        })
    }

    fn enter(&mut self, s: SessionState) {
        self.state = s;
        self.states.push(s);
    }

    fn fail(&mut self, reason: FailureReason) -> Result<Option<Vec<u8>>, HandshakeError> {
        self.enter(SessionState::Failed(reason));
        Ok(None)
    }

    fn send(&mut self, msg: &Message) -> Vec<u8> {
        let frame = msg.encode();
        self.transcript.push(TranscriptEntry {
            direction: Direction::Sent,
            frame: frame.clone(),
        });
        frame
    }

    /// Emits the hello frame: certificate, fresh nonce, origin id.
    pub fn start(&mut self) -> Result<Vec<u8>, HandshakeError> {
        if self.state.is_terminal() {
            return Err(HandshakeError::Terminal(self.state));
        }
        if self.local_nonce.is_some() {
            return Err(HandshakeError::AlreadyStarted);
        }
        let nonce = loop {
            let mut n = [0u8; NONCE_LEN];
            self.rng.fill_bytes(&mut n);
            if !self.history.contains(&n) {
                break n;
            }
        };
        self.history.record(nonce);
        self.local_nonce = Some(nonce);
        let msg = Message::Hello {
            certificate: self.identity.certificate.to_bytes(),
            nonce,
            origin: self.identity.id.clone(),
        };
        let frame = self.send(&msg);
        self.local_hello = Some(frame.clone());
        Ok(frame)
    }

    /// Processes one received frame. Check failures move the session to
    /// `Failed` and return `Ok(None)`; `Err` is reserved for API misuse.
    pub fn step(&mut self, incoming: &[u8]) -> Result<Option<Vec<u8>>, HandshakeError> {
        if self.state.is_terminal() {
            return Err(HandshakeError::Terminal(self.state));
        }
        let local_nonce = self.local_nonce.ok_or(HandshakeError::NotStarted)?;
        self.transcript.push(TranscriptEntry {
            direction: Direction::Received,
            frame: incoming.to_vec(),
        });
        let msg = match Message::decode(incoming) {
            Ok(m) => m,
            Err(_) => return self.fail(FailureReason::Malformed),
        };
        match (self.state, msg) {
            (
                SessionState::Init,
                Message::Hello {
                    certificate,
                    nonce,
                    origin,
                },
            ) => {
                if self.history.contains(&nonce) {
                    return self.fail(FailureReason::Replay);
                }
                let cert = match Certificate::from_bytes(&certificate) {
                    Ok(c) => c,
                    Err(_) => return self.fail(FailureReason::Malformed),
                };
                let check: Result<(), CertificateError> = cert.verify(
                    self.scheme.as_ref(),
                    &self.anchor.ca_id,
                    &self.anchor.ca_public_key,
                    self.config.now,
                );
                if check.is_err() {
                    return self.fail(FailureReason::CertificateInvalid);
                }
                if cert.subject != self.config.expected_peer || origin != cert.subject {
                    return self.fail(FailureReason::IdentityMismatch);
                }
                self.history.record(nonce);
                self.peer_nonce = Some(nonce);
                self.peer_hello = Some(incoming.to_vec());
                self.peer_certificate = Some(cert);
                self.enter(SessionState::CertsExchanged);

                let digest = self.transcript_digest().expect("both hellos known");
                let payload = [&digest[..], &nonce[..]].concat();
                let signature = self
                    .scheme
                    .sign(&self.identity.keys.private, &payload)
                    .expect("identity key matches scheme");
                let frame = self.send(&Message::Signature {
                    digest,
                    nonce,
                    signature,
                });
                self.enter(SessionState::Signed);
                Ok(Some(frame))
            }
            (
                SessionState::Signed,
                Message::Signature {
                    digest,
                    nonce,
                    signature,
                },
            ) => {
                if nonce != local_nonce {
                    return self.fail(FailureReason::Replay);
                }
                let peer_pk = &self
                    .peer_certificate
                    .as_ref()
                    .expect("set on hello")
                    .subject_public_key;
                let payload = [&digest[..], &nonce[..]].concat();
                if !self.scheme.verify(peer_pk, &payload, &signature) {
                    return self.fail(FailureReason::SignatureInvalid);
                }
                if Some(digest) != self.transcript_digest() {
                    return self.fail(FailureReason::DigestMismatch);
                }
                self.enter(SessionState::Authenticated);
                Ok(None)
            }
            _ => self.fail(FailureReason::UnexpectedMessage),
        }
    }

    fn challenge(nonce: &Nonce, counter: u64, category: TagCategory) -> Digest {
        sm3_concat(&[b"tag", nonce, &counter.to_be_bytes(), &[category.byte()]])
    }

    /// Tag frame for `data`: the SM3 tag plus a signature over
    /// `tag || challenge`, the challenge binding the peer nonce and a
    /// per-session counter.
    pub fn sign_data(
        &mut self,
        category: TagCategory,
        data: &[u8],
    ) -> Result<Vec<u8>, HandshakeError> {
        self.sign_tag(&compute_tag(category, data))
    }

    /// As [`sign_data`](Self::sign_data) for an already computed tag.
    pub fn sign_tag(&mut self, tag: &Tag) -> Result<Vec<u8>, HandshakeError> {
        if self.state != SessionState::Authenticated {
            return Err(HandshakeError::NotAuthenticated);
        }
        let category = tag.category;
        let peer_nonce = self.peer_nonce.expect("authenticated");
        let tag = tag.digest;
        let challenge = Self::challenge(&peer_nonce, self.tags_sent, category);
        self.tags_sent += 1;
        let payload = [&tag[..], &challenge[..]].concat();
        let signature = self
            .scheme
            .sign(&self.identity.keys.private, &payload)
            .expect("identity key matches scheme");
        Ok(Message::TagAuth {
            category,
            tag,
            challenge,
            signature,
        }
        .encode())
    }

    /// Checks a peer tag frame against the local copy of `data`.
    pub fn verify_data(
        &mut self,
        frame: &[u8],
        category: TagCategory,
        data: &[u8],
    ) -> Result<bool, HandshakeError> {
        Ok(self.check_data(frame, category, data)? == TagVerdict::Accepted)
    }

    /// As [`verify_data`](Self::verify_data), distinguishing a bad frame from
    /// a well-signed tag over different data.
    pub fn check_data(
        &mut self,
        frame: &[u8],
        category: TagCategory,
        data: &[u8],
    ) -> Result<TagVerdict, HandshakeError> {
        self.check_tag(frame, &compute_tag(category, data))
    }

    /// As [`check_data`](Self::check_data) against an already computed
    /// local tag.
    pub fn check_tag(&mut self, frame: &[u8], local: &Tag) -> Result<TagVerdict, HandshakeError> {
        let category = local.category;
        if self.state != SessionState::Authenticated {
            return Err(HandshakeError::NotAuthenticated);
        }
        let expected = Self::challenge(
            &self.local_nonce.expect("authenticated"),
            self.tags_received,
            category,
        );
        self.tags_received += 1;
        let Ok(Message::TagAuth {
            category: got_category,
            tag,
            challenge,
            signature,
        }) = Message::decode(frame)
        else {
            return Ok(TagVerdict::Rejected);
        };
        if got_category != category || challenge != expected {
            return Ok(TagVerdict::Rejected);
        }
        let peer_pk = &self
            .peer_certificate
            .as_ref()
            .expect("authenticated")
            .subject_public_key;
        let payload = [&tag[..], &challenge[..]].concat();
        if !self.scheme.verify(peer_pk, &payload, &signature) {
            return Ok(TagVerdict::Rejected);
        }
        if tag == local.digest {
            Ok(TagVerdict::Accepted)
        } else {
            Ok(TagVerdict::DataMismatch)
        }
    }
}

/// Outcome of checking one tag frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TagVerdict {
    Accepted,
    /// Authentic tag, but computed over data that differs from ours.
    DataMismatch,
    /// Malformed, replayed or badly signed frame.
    Rejected,
}

impl fmt::Debug for AuthSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuthSession")
            .field("id", &self.identity.id)
            .field("role", &self.config.role)
            .field("state", &self.state)
            .finish()
    }
}

/// Which direction a tag frame travels in [`authenticate_data_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Leg {
    AToB,
    BToA,
}

/// Exchanges tag frames for one data item. Returns each side's verdict on
/// the frame it received.
pub fn authenticate_data(
    a: &mut AuthSession,
    b: &mut AuthSession,
    category: TagCategory,
    data_a: &[u8],
    data_b: &[u8],
) -> Result<(bool, bool), HandshakeError> {
    authenticate_data_with(a, b, category, data_a, data_b, |_, _| {})
}

/// As [`authenticate_data`], with a hook that may alter frames in flight.
pub fn authenticate_data_with(
    a: &mut AuthSession,
    b: &mut AuthSession,
    category: TagCategory,
    data_a: &[u8],
    data_b: &[u8],
    in_flight: impl FnMut(Leg, &mut Vec<u8>),
) -> Result<(bool, bool), HandshakeError> {
    let (va, vb) = exchange_tags(a, b, category, data_a, data_b, in_flight)?;
    Ok((va == TagVerdict::Accepted, vb == TagVerdict::Accepted))
}

/// Tag exchange returning each side's detailed verdict.
pub fn exchange_tags(
    a: &mut AuthSession,
    b: &mut AuthSession,
    category: TagCategory,
    data_a: &[u8],
    data_b: &[u8],
    mut in_flight: impl FnMut(Leg, &mut Vec<u8>),
) -> Result<(TagVerdict, TagVerdict), HandshakeError> {
    let tag_a = compute_tag(category, data_a);
    let tag_b = compute_tag(category, data_b);
    let mut to_b = a.sign_tag(&tag_a)?;
    let mut to_a = b.sign_tag(&tag_b)?;
    in_flight(Leg::AToB, &mut to_b);
    in_flight(Leg::BToA, &mut to_a);
    let vb = b.check_tag(&to_b, &tag_b)?;
    let va = a.check_tag(&to_a, &tag_a)?;
    Ok((va, vb))
}

/// Encodes a transcript as `direction: u8 ('S' or 'R') || frame`, frames
/// laid end to end.
pub fn dump_transcript(entries: &[TranscriptEntry]) -> Vec<u8> {
    let mut out = Vec::new();
    for e in entries {
        out.push(match e.direction {
            Direction::Sent => b'S',
            Direction::Received => b'R',
        });
        out.extend_from_slice(&e.frame);
    }
    out
}

/// Inverse of [`dump_transcript`].
pub fn parse_transcript(mut bytes: &[u8]) -> Result<Vec<TranscriptEntry>, CodecError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let direction = match bytes[0] {
            b'S' => Direction::Sent,
            b'R' => Direction::Received,
            _ => return Err(CodecError::Truncated),
        };
        if bytes.len() < 6 {
            return Err(CodecError::Truncated);
        }
        let len = u32::from_be_bytes(bytes[2..6].try_into().expect("4 bytes")) as usize;
        let end = 6 + len;
        if bytes.len() < end {
            return Err(CodecError::Truncated);
        }
        out.push(TranscriptEntry {
            direction,
            frame: bytes[1..end].to_vec(),
        });
        bytes = &bytes[end..];
    }
    Ok(out)
}
