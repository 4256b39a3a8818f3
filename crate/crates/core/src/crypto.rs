//! Signature scheme used by the token service and the chain simulator.
//!
//! Signatures are secp256k1 ECDSA in the 65-byte recoverable layout
//! `r ∥ s ∥ v` with `v ∈ {27, 28}`. Messages are hashed with Keccak-256
//! before signing. Verification recovers the signer key and compares it with
//! the expected one, the same way an `ecrecover` based check does.
//!
//! The simulator only sees the [`Verifier`] trait, so a contract guard can be
//! configured with any scheme that produces 65-byte signatures.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use secp256k1::ecdsa::{RecoverableSignature, RecoveryId};
use secp256k1::{Message, PublicKey, SecretKey, SECP256K1};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha3::{Digest, Keccak256};

use crate::token::{Address, TokenError};

pub const SIGNATURE_LEN: usize = 65;

pub fn keccak256(data: &[u8]) -> [u8; 32] {
    Keccak256::digest(data).into()
}

/// A 65-byte serialized signature.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, TokenError> {
        let arr: [u8; SIGNATURE_LEN] = bytes
            .try_into()
            .map_err(|_| TokenError::MalformedSignature(bytes.len()))?;
        Ok(Signature(arr))
    }

    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature(0x{})", hex::encode(self.0))
    }
}

/// Checks signatures on behalf of a contract guard.
pub trait Verifier: Send + Sync + fmt::Debug {
    fn verify(&self, msg: &[u8], sig: &Signature) -> bool;

    /// Scheme tag written next to the key in state dumps.
    fn scheme(&self) -> &'static str;

    fn to_hex(&self) -> String;
}

/// Produces signatures; the counterpart of [`Verifier`].
pub trait Signer: Send + Sync {
    fn sign(&self, msg: &[u8]) -> Signature;

    fn verifier(&self) -> Arc<dyn Verifier>;
}

/// Public half of a secp256k1 key pair.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct VerifyingKey(PublicKey);

impl VerifyingKey {
    pub const SCHEME: &'static str = "secp256k1-keccak";

    /// Ethereum-style account address: last 20 bytes of the Keccak-256 of
    /// the uncompressed point without its `0x04` prefix.
    pub fn address(&self) -> Address {
        let uncompressed = self.0.serialize_uncompressed();
        let digest = keccak256(&uncompressed[1..]);
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest[12..]);
        Address(out)
    }

    pub fn from_hex(s: &str) -> Result<Self, TokenError> {
        let raw = decode_hex(s)?;
        PublicKey::from_slice(&raw)
            .map(VerifyingKey)
            .map_err(|e| TokenError::InvalidKey(e.to_string()))
    }
}

impl fmt::Debug for VerifyingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VerifyingKey({})", Verifier::to_hex(self))
    }
}

impl Verifier for VerifyingKey {
    fn verify(&self, msg: &[u8], sig: &Signature) -> bool {
        verify(self, msg, sig)
    }

    fn scheme(&self) -> &'static str {
        Self::SCHEME
    }

    fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(self.0.serialize()))
    }
}

impl Serialize for VerifyingKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&Verifier::to_hex(self))
    }
}

impl<'de> Deserialize<'de> for VerifyingKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        VerifyingKey::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Signing key plus its verification key.
#[derive(Clone)]
pub struct KeyPair {
    secret: SecretKey,
    public: VerifyingKey,
}

impl KeyPair {
    pub fn generate() -> Self {
        Self::from_secret(SecretKey::new(&mut rand::thread_rng()))
    }

    /// Deterministic key derived from a seed; used by fixtures and tests so
    /// that runs are reproducible.
    pub fn from_seed(seed: &[u8]) -> Self {
        let mut digest = keccak256(seed);
        loop {
            if let Ok(sk) = SecretKey::from_byte_array(&digest) {
                return Self::from_secret(sk);
            }
            digest = keccak256(&digest);
        }
    }

    fn from_secret(secret: SecretKey) -> Self {
        let public = VerifyingKey(PublicKey::from_secret_key_global(&secret));
        KeyPair { secret, public }
    }

    pub fn from_secret_hex(s: &str) -> Result<Self, TokenError> {
        let raw = decode_hex(s)?;
        let arr: [u8; 32] = raw
            .as_slice()
            .try_into()
            .map_err(|_| TokenError::InvalidKey(format!("secret key must be 32 bytes, got {}", raw.len())))?;
        SecretKey::from_byte_array(&arr)
            .map(Self::from_secret)
            .map_err(|e| TokenError::InvalidKey(e.to_string()))
    }

    pub fn secret_hex(&self) -> String {
        format!("0x{}", hex::encode(self.secret.secret_bytes()))
    }

    pub fn public(&self) -> VerifyingKey {
        self.public
    }

    pub fn address(&self) -> Address {
        self.public.address()
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

impl Signer for KeyPair {
    fn sign(&self, msg: &[u8]) -> Signature {
        sign(self, msg)
    }

    fn verifier(&self) -> Arc<dyn Verifier> {
        Arc::new(self.public)
    }
}

impl FromStr for KeyPair {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KeyPair::from_secret_hex(s.trim())
    }
}

pub fn keygen() -> KeyPair {
    KeyPair::generate()
}

pub fn sign(key: &KeyPair, msg: &[u8]) -> Signature {
    let digest = Message::from_digest(keccak256(msg));
    let (recid, compact) = SECP256K1
        .sign_ecdsa_recoverable(&digest, &key.secret)
        .serialize_compact();
    let mut out = [0u8; SIGNATURE_LEN];
    out[..64].copy_from_slice(&compact);
    out[64] = 27 + i32::from(recid) as u8;
    Signature(out)
}

/// Recovers the key that produced `sig` over `msg`.
pub fn recover(msg: &[u8], sig: &Signature) -> Option<VerifyingKey> {
    let v = sig.0[64];
    if v != 27 && v != 28 {
        return None;
    }
    let recid = RecoveryId::try_from(i32::from(v - 27)).ok()?;
    let rsig = RecoverableSignature::from_compact(&sig.0[..64], recid).ok()?;
    let digest = Message::from_digest(keccak256(msg));
    SECP256K1.recover_ecdsa(&digest, &rsig).ok().map(VerifyingKey)
}

pub fn verify(pk: &VerifyingKey, msg: &[u8], sig: &Signature) -> bool {
    recover(msg, sig).is_some_and(|k| k == *pk)
}

pub(crate) fn decode_hex(s: &str) -> Result<Vec<u8>, TokenError> {
    let body = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    hex::decode(body).map_err(|e| TokenError::InvalidHex(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_verify_round_trip() {
        let kp = keygen();
        let sig = sign(&kp, b"hello");
        assert!(verify(&kp.public(), b"hello", &sig));
        assert_eq!(sig.0.len(), SIGNATURE_LEN);
    }

    #[test]
    fn flipped_message_bit_fails() {
        let kp = KeyPair::from_seed(b"flip");
        let sig = sign(&kp, b"hello");
        for byte in 0..5 {
            for bit in 0..8 {
                let mut m = b"hello".to_vec();
                m[byte] ^= 1 << bit;
                assert!(!verify(&kp.public(), &m, &sig));
            }
        }
    }

    #[test]
    fn every_signature_byte_mutation_fails() {
        let kp = KeyPair::from_seed(b"sig-mutation");
        let sig = sign(&kp, b"payload");
        for i in 0..SIGNATURE_LEN {
            let mut bad = sig;
            bad.0[i] ^= 0x01;
            assert!(!verify(&kp.public(), b"payload", &bad), "byte {i}");
        }
    }

    #[test]
    fn different_key_fails() {
        let a = KeyPair::from_seed(b"a");
        let b = KeyPair::from_seed(b"b");
        let sig = sign(&a, b"m");
        assert!(!verify(&b.public(), b"m", &sig));
    }

    #[test]
    fn malformed_length_is_rejected() {
        assert!(matches!(
            Signature::from_slice(&[0u8; 64]),
            Err(TokenError::MalformedSignature(64))
        ));
    }

    #[test]
    fn key_hex_round_trip() {
        let kp = KeyPair::from_seed(b"hex");
        let again = KeyPair::from_secret_hex(&kp.secret_hex()).unwrap();
        assert_eq!(again.public(), kp.public());
        let pk = VerifyingKey::from_hex(&Verifier::to_hex(&kp.public())).unwrap();
        assert_eq!(pk, kp.public());
    }

    #[test]
    fn seeded_keys_are_stable() {
        assert_eq!(KeyPair::from_seed(b"x").address(), KeyPair::from_seed(b"x").address());
        assert_ne!(KeyPair::from_seed(b"x").address(), KeyPair::from_seed(b"y").address());
    }
}
