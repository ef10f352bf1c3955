//! Cipher abstraction the protocol runs against: real Paillier or a
//! plaintext passthrough that obeys the identical ring and scale contracts.
//! Every ciphertext carries the fixed-point scale of the plaintext inside.

use num_bigint::BigUint;
use num_traits::One;
use rand_chacha::ChaCha20Rng;

use crate::error::{CryptoError, Result};
use crate::fixed::FixedPointCodec;
use crate::paillier::{self, KeyPair};

pub const PASSTHROUGH_RING_BITS: usize = 127;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CipherKind {
    Paillier,
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    scale: i16,
}

impl Ciphertext {
    pub fn scale(&self) -> i16 {
        self.scale
    }

    /// Wire format: u32 big-endian length, value bytes big-endian, i16
    /// big-endian scale.
    pub fn to_bytes(&self) -> Vec<u8> {
        let v = self.value.to_bytes_be();
        let mut out = Vec::with_capacity(4 + v.len() + 2);
        out.extend_from_slice(&(v.len() as u32).to_be_bytes());
        out.extend_from_slice(&v);
        out.extend_from_slice(&self.scale.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < 6 {
            return Err(CryptoError::Decode("ciphertext frame too short".into()));
        }
        let len = u32::from_be_bytes(bytes[0..4].try_into().unwrap()) as usize;
        if bytes.len() < 4 + len + 2 {
            return Err(CryptoError::Decode("ciphertext frame truncated".into()));
        }
        let value = BigUint::from_bytes_be(&bytes[4..4 + len]);
        let scale = i16::from_be_bytes(bytes[4 + len..4 + len + 2].try_into().unwrap());
        Ok((Ciphertext { value, scale }, 4 + len + 2))
    }
}

/// What guests hold: enough to encrypt and combine, never to decrypt.
#[derive(Debug, Clone)]
pub enum EncKey {
    Paillier(paillier::PublicKey),
    Passthrough { modulus: BigUint },
}

/// What the host holds.
#[derive(Debug, Clone)]
pub struct DecKey {
    enc: EncKey,
    paillier: Option<KeyPair>,
}

pub fn keygen(kind: CipherKind, bits: usize, rng: &mut ChaCha20Rng) -> Result<(EncKey, DecKey)> {
    match kind {
        CipherKind::Paillier => {
            let kp = paillier::keygen(bits, rng)?;
            let enc = EncKey::Paillier(kp.public.clone());
            Ok((enc.clone(), DecKey { enc, paillier: Some(kp) }))
        }
        CipherKind::Passthrough => {
            let modulus = BigUint::one() << PASSTHROUGH_RING_BITS;
            let enc = EncKey::Passthrough { modulus };
            Ok((enc.clone(), DecKey { enc, paillier: None }))
        }
    }
}

impl EncKey {
    pub fn kind(&self) -> CipherKind {
        match self {
            EncKey::Paillier(_) => CipherKind::Paillier,
            EncKey::Passthrough { .. } => CipherKind::Passthrough,
        }
    }

    pub fn modulus(&self) -> &BigUint {
        match self {
            EncKey::Paillier(pk) => pk.modulus(),
            EncKey::Passthrough { modulus } => modulus,
        }
    }

    pub fn codec(&self, frac_bits: u32) -> FixedPointCodec {
        FixedPointCodec::new(frac_bits, self.modulus().clone())
    }

    /// Wire format: u32 big-endian length then modulus bytes; the kind tag
    /// travels separately (passthrough is a test double, not a negotiation).
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = self.modulus().to_bytes_be();
        let mut out = Vec::with_capacity(5 + m.len());
        out.push(match self.kind() {
            CipherKind::Paillier => 0u8,
            CipherKind::Passthrough => 1u8,
        });
        out.extend_from_slice(&(m.len() as u32).to_be_bytes());
        out.extend_from_slice(&m);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < 5 {
            return Err(CryptoError::Decode("public key frame too short".into()));
        }
        let kind = bytes[0];
        let len = u32::from_be_bytes(bytes[1..5].try_into().unwrap()) as usize;
        if bytes.len() < 5 + len {
            return Err(CryptoError::Decode("public key frame truncated".into()));
        }
        let modulus = BigUint::from_bytes_be(&bytes[5..5 + len]);
        let key = match kind {
            0 => EncKey::Paillier(paillier::PublicKey::from_modulus(modulus)),
            1 => EncKey::Passthrough { modulus },
            other => return Err(CryptoError::Decode(format!("unknown key kind {other}"))),
        };
        Ok((key, 5 + len))
    }

    pub fn encrypt(&self, m: &BigUint, scale: i16, rng: &mut ChaCha20Rng) -> Result<Ciphertext> {
        let value = match self {
            EncKey::Paillier(pk) => pk.encrypt(m, rng)?,
            EncKey::Passthrough { modulus } => {
                if m >= modulus {
                    return Err(CryptoError::OutOfRange("plaintext not in the ring".into()));
                }
                m.clone()
            }
        };
        Ok(Ciphertext { value, scale })
    }

    pub fn zero(&self, scale: i16, rng: &mut ChaCha20Rng) -> Result<Ciphertext> {
        self.encrypt(&BigUint::ZERO, scale, rng)
    }

    pub fn add(&self, c1: &Ciphertext, c2: &Ciphertext) -> Result<Ciphertext> {
        if c1.scale != c2.scale {
            return Err(CryptoError::ScaleMismatch(c1.scale, c2.scale));
        }
        let value = match self {
            EncKey::Paillier(pk) => pk.add(&c1.value, &c2.value),
            EncKey::Passthrough { modulus } => (&c1.value + &c2.value) % modulus,
        };
        Ok(Ciphertext { value, scale: c1.scale })
    }

    /// Add a plaintext ring element at the ciphertext's scale.
    pub fn add_plain(&self, c: &Ciphertext, m: &BigUint) -> Ciphertext {
        let value = match self {
            EncKey::Paillier(pk) => pk.add_plain(&c.value, m),
            EncKey::Passthrough { modulus } => (&c.value + (m % modulus)) % modulus,
        };
        Ciphertext { value, scale: c.scale }
    }

    /// Multiply by a constant that itself encodes a real at `k_scale`
    /// fractional bits; the scales compose.
    pub fn mul_plain(&self, c: &Ciphertext, k: &BigUint, k_scale: i16) -> Ciphertext {
        let value = match self {
            EncKey::Paillier(pk) => pk.mul_plain(&c.value, k),
            EncKey::Passthrough { modulus } => (&c.value * (k % modulus)) % modulus,
        };
        Ciphertext { value, scale: c.scale + k_scale }
    }
}

impl DecKey {
    pub fn enc_key(&self) -> &EncKey {
        &self.enc
    }

    pub fn decrypt(&self, c: &Ciphertext) -> (BigUint, i16) {
        let value = match (&self.enc, &self.paillier) {
            (EncKey::Paillier(_), Some(kp)) => kp.private.decrypt(&c.value),
            (EncKey::Passthrough { .. }, _) => c.value.clone(),
            _ => unreachable!("paillier deckey always carries the keypair"),
        };
        (value, c.scale)
    }
}
