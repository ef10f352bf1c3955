//! Finite-field Diffie-Hellman over the RFC 3526 2048-bit MODP group.

use num_bigint::BigUint;
use num_traits::One;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{CryptoError, Result};
use crate::paillier::sample_below;

/// RFC 3526 group 14 prime (2048 bits), generator 2.
const MODP_2048_HEX: &str = concat!(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1",
    "29024E088A67CC74020BBEA63B139B22514A08798E3404DD",
    "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245",
    "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED",
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3D",
    "C2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F",
    "83655D23DCA3AD961C62F356208552BB9ED529077096966D",
    "670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B",
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9",
    "DE2BCBF6955817183995497CEA956AE515D2261898FA0510",
    "15728E5A8AACAA68FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFF"
);

pub fn group_prime() -> BigUint {
    BigUint::parse_bytes(MODP_2048_HEX.as_bytes(), 16).expect("constant parses")
}

#[derive(Debug, Clone)]
pub struct DhPrivate(BigUint);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DhPublic(pub BigUint);

/// 256-bit secret shared by a guest pair, the root for mask derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedKey(pub [u8; 32]);

pub fn dh_keypair(rng: &mut ChaCha20Rng) -> (DhPrivate, DhPublic) {
    let p = group_prime();
    // 256-bit exponents suffice for this group's security level.
    let bound = BigUint::one() << 256;
    let x = loop {
        let x = sample_below(rng, &bound);
        if x > BigUint::one() {
            break x;
        }
    };
    let y = BigUint::from(2u8).modpow(&x, &p);
    (DhPrivate(x), DhPublic(y))
}

/// Derive the pair secret `SHA-256(their^my mod p)`. Rejects degenerate
/// public elements (0, 1 and p-1) that would collapse the shared secret.
pub fn dh_shared(my_private: &DhPrivate, their_public: &DhPublic) -> Result<SharedKey> {
    let p = group_prime();
    let y = &their_public.0;
    let one = BigUint::one();
    if y <= &one || *y >= &p - &one {
        return Err(CryptoError::InvalidPublic(
            "public element outside (1, p-1)".into(),
        ));
    }
    let s = y.modpow(&my_private.0, &p);
    let mut bytes = s.to_bytes_be();
    let width = p.to_bytes_be().len();
    while bytes.len() < width {
        bytes.insert(0, 0);
    }
    let digest = Sha256::digest(&bytes);
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    Ok(SharedKey(out))
}
