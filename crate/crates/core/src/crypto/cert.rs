use rand::RngCore;

use super::codec::{put_bytes32, put_str16, CodecError, Reader};
use super::signature::{KeyPair, SignatureScheme};

const VERSION: u8 = 1;

/// Validity window in simulation seconds, inclusive at both ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Validity {
    pub not_before: u64,
    pub not_after: u64,
}

impl Validity {
    pub fn contains(&self, now: u64) -> bool {
        self.not_before <= now && now <= self.not_after
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub subject: String,
    pub issuer: String,
    pub validity: Validity,
    pub subject_public_key: Vec<u8>,
    pub ca_signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CertificateError {
    #[error("issued by {found}, expected {expected}")]
    WrongIssuer { expected: String, found: String },
    #[error("not valid at t={now} (window {not_before}..={not_after})")]
    OutsideValidity {
        now: u64,
        not_before: u64,
        not_after: u64,
    },
    #[error("CA signature does not verify")]
    BadSignature,
    #[error("subject key has length {0}, expected {1}")]
    KeyLength(usize, usize),
}

impl Certificate {
    /// The bytes covered by the CA signature.
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.subject_public_key.len());
        out.push(VERSION);
        put_str16(&mut out, &self.subject);
        put_str16(&mut out, &self.issuer);
        out.extend_from_slice(&self.validity.not_before.to_be_bytes());
        out.extend_from_slice(&self.validity.not_after.to_be_bytes());
        put_bytes32(&mut out, &self.subject_public_key);
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.signed_bytes();
        put_bytes32(&mut out, &self.ca_signature);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let version = r.u8()?;
        if version != VERSION {
            return Err(CodecError::Version(version));
        }
        let subject = r.str16()?;
        let issuer = r.str16()?;
        let not_before = r.u64()?;
        let not_after = r.u64()?;
        let subject_public_key = r.bytes32()?.to_vec();
        let ca_signature = r.bytes32()?.to_vec();
        r.finish()?;
        Ok(Self {
            subject,
            issuer,
            validity: Validity {
                not_before,
                not_after,
            },
            subject_public_key,
            ca_signature,
        })
    }

    pub fn verify(
        &self,
        scheme: &dyn SignatureScheme,
        ca_id: &str,
        ca_public_key: &[u8],
        now: u64,
    ) -> Result<(), CertificateError> {
        if self.issuer != ca_id {
            return Err(CertificateError::WrongIssuer {
                expected: ca_id.to_string(),
                found: self.issuer.clone(),
            });
        }
        if !self.validity.contains(now) {
            return Err(CertificateError::OutsideValidity {
                now,
                not_before: self.validity.not_before,
                not_after: self.validity.not_after,
            });
        }
        if self.subject_public_key.len() != scheme.public_key_len() {
            return Err(CertificateError::KeyLength(
                self.subject_public_key.len(),
                scheme.public_key_len(),
            ));
        }
        if !scheme.verify(ca_public_key, &self.signed_bytes(), &self.ca_signature) {
            return Err(CertificateError::BadSignature);
        }
        Ok(())
    }
}

/// Certificate authority holding a signing key.
pub struct CertificateAuthority {
    pub id: String,
    keys: KeyPair,
}

impl CertificateAuthority {
    pub fn new(id: impl Into<String>, scheme: &dyn SignatureScheme, rng: &mut dyn RngCore) -> Self {
        Self {
            id: id.into(),
            keys: scheme.keygen(rng),
        }
    }

    pub fn public_key(&self) -> &[u8] {
        &self.keys.public
    }

    pub fn issue(
        &self,
        scheme: &dyn SignatureScheme,
        subject: &str,
        subject_public_key: &[u8],
        validity: Validity,
    ) -> Certificate {
        let mut cert = Certificate {
            subject: subject.to_string(),
            issuer: self.id.clone(),
            validity,
            subject_public_key: subject_public_key.to_vec(),
            ca_signature: Vec::new(),
        };
        cert.ca_signature = scheme
            .sign(&self.keys.private, &cert.signed_bytes())
            .expect("CA key generated by the same scheme");
        cert
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::signature::HashChainSig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const ALWAYS: Validity = Validity {
        not_before: 0,
        not_after: u64::MAX,
    };

    #[test]
    fn issued_certificate_verifies_only_under_its_ca() {
        let s = HashChainSig;
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let ca = CertificateAuthority::new("CA", &s, &mut rng);
        let other = CertificateAuthority::new("CA", &s, &mut rng);
        let user = s.keygen(&mut rng);
        let cert = ca.issue(&s, "U4", &user.public, ALWAYS);
        assert_eq!(cert.verify(&s, "CA", ca.public_key(), 5), Ok(()));
        assert_eq!(
            cert.verify(&s, "CA", other.public_key(), 5),
            Err(CertificateError::BadSignature)
        );
        assert_eq!(Certificate::from_bytes(&cert.to_bytes()).unwrap(), cert);
    }

    #[test]
    fn expired_certificate_fails() {
        let s = HashChainSig;
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let ca = CertificateAuthority::new("CA", &s, &mut rng);
        let user = s.keygen(&mut rng);
        let cert = ca.issue(
            &s,
            "U1",
            &user.public,
            Validity {
                not_before: 10,
                not_after: 20,
            },
        );
        assert!(cert.verify(&s, "CA", ca.public_key(), 20).is_ok());
        assert!(matches!(
            cert.verify(&s, "CA", ca.public_key(), 21),
            Err(CertificateError::OutsideValidity { .. })
        ));
        assert!(cert.verify(&s, "CA", ca.public_key(), 9).is_err());
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let s = HashChainSig;
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let ca = CertificateAuthority::new("CA", &s, &mut rng);
        let user = s.keygen(&mut rng);
        let mut bytes = ca.issue(&s, "U1", &user.public, ALWAYS).to_bytes();
        bytes.push(0);
        assert_eq!(
            Certificate::from_bytes(&bytes),
            Err(CodecError::Trailing(1))
        );
    }
}
