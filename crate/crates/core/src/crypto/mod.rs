//! SM3, the signature abstraction, certificates, the authentication
//! handshake, data tags and the pre-shared-key fallback.

pub mod cert;
mod codec;
pub mod handshake;
pub mod preshared;
pub mod signature;
pub mod sm3;
pub mod tag;
pub mod timing;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub use cert::{Certificate, CertificateAuthority, CertificateError, Validity};
pub use codec::CodecError;
pub use handshake::{
    authenticate_data, authenticate_data_with, dump_transcript, exchange_tags, parse_transcript,
    AuthSession, Direction, FailureReason, HandshakeError, Identity, Leg, Message, NonceHistory,
    Role, SessionConfig, SessionState, TagVerdict, TranscriptEntry, TrustAnchor,
};
pub use preshared::{preshared_authenticate, preshared_exchange, PresharedError, PresharedPool};
pub use signature::{HashChainSig, KeyPair, SignatureError, SignatureScheme};
pub use sm3::{sm3, Digest};
pub use tag::{compute_tag, Tag, TagCategory};
pub use timing::{
    handshake_duration, simulate_handshake, simulate_handshake_with, ChannelModel, HandshakeRun,
    OperationCosts, OperationKind,
};

/// A CA plus the scheme it signs with; enrolls nodes and opens sessions.
pub struct Pki {
    scheme: Arc<dyn SignatureScheme>,
    ca: CertificateAuthority,
    anchor: Arc<TrustAnchor>,
}

impl Pki {
    pub fn new(scheme: Arc<dyn SignatureScheme>, ca_id: &str, seed: [u8; 32]) -> Self {
        let mut rng = ChaCha20Rng::from_seed(seed);
        let ca = CertificateAuthority::new(ca_id, scheme.as_ref(), &mut rng);
        let anchor = Arc::new(TrustAnchor {
            ca_id: ca_id.to_string(),
            ca_public_key: ca.public_key().to_vec(),
        });
        Self { scheme, ca, anchor }
    }

    /// Default stand-in scheme with a CA named `CA`.
    pub fn with_default_scheme(seed: [u8; 32]) -> Self {
        Self::new(Arc::new(HashChainSig), "CA", seed)
    }

    pub fn scheme(&self) -> &Arc<dyn SignatureScheme> {
        &self.scheme
    }

    pub fn anchor(&self) -> &Arc<TrustAnchor> {
        &self.anchor
    }

    pub fn authority(&self) -> &CertificateAuthority {
        &self.ca
    }

    pub fn enroll(&self, id: &str, validity: Validity, seed: [u8; 32]) -> Arc<Identity> {
        let mut rng = ChaCha20Rng::from_seed(seed);
        let keys = self.scheme.keygen(&mut rng);
        let certificate = self
            .ca
            .issue(self.scheme.as_ref(), id, &keys.public, validity);
        Arc::new(Identity {
            id: id.to_string(),
            keys,
            certificate,
        })
    }

    pub fn session(&self, identity: &Arc<Identity>, config: SessionConfig) -> AuthSession {
        AuthSession::new(
            self.scheme.clone(),
            identity.clone(),
            self.anchor.clone(),
            config,
        )
    }
}
