//! Pairwise cancellation masks for secure aggregation. Each ordered guest
//! pair derives identical mask values from their DH secret and a
//! (round, node, slot) context; the lower-indexed guest adds, the higher
//! one subtracts, so the sum over all participants is zero in the ring.

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::dh::SharedKey;
use crate::error::{CryptoError, Result};
use crate::paillier::sample_below;
use crate::suite::{Ciphertext, EncKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskCtx {
    pub round: u64,
    pub node: u64,
    pub slot: u64,
}

/// Deterministic uniform ring element keyed by (secret, round, node, slot).
pub fn mask_for(shared: &SharedKey, ctx: MaskCtx, modulus: &BigUint) -> BigUint {
    let mut hasher = Sha256::new();
    hasher.update(shared.0);
    hasher.update(ctx.round.to_be_bytes());
    hasher.update(ctx.node.to_be_bytes());
    hasher.update(ctx.slot.to_be_bytes());
    let seed: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha20Rng::from_seed(seed);
    sample_below(&mut rng, modulus)
}

/// Apply this guest's masks for one slot: `+mask(i,j)` toward every
/// higher-indexed peer and `-mask(j,i)` toward every lower-indexed one.
/// Peers are (index, shared key) pairs; an empty peer set is a no-op.
pub fn apply_masks(
    cipher: &Ciphertext,
    enc: &EncKey,
    my_index: usize,
    peers: &[(usize, SharedKey)],
    ctx: MaskCtx,
) -> Result<Ciphertext> {
    let modulus = enc.modulus();
    let mut out = cipher.clone();
    for (peer, key) in peers {
        if *peer == my_index {
            return Err(CryptoError::OutOfRange("peer set contains self".into()));
        }
        let m = mask_for(key, ctx, modulus);
        let applied = if my_index < *peer { m } else { (modulus - &m) % modulus };
        out = enc.add_plain(&out, &applied);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dh::{dh_keypair, dh_shared};
    use crate::suite::{keygen, CipherKind};
    use num_traits::Zero;

    fn setup_guests(n: usize, seed: u64) -> Vec<Vec<(usize, SharedKey)>> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let pairs: Vec<_> = (0..n).map(|_| dh_keypair(&mut rng)).collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|j| *j != i)
                    .map(|j| (j, dh_shared(&pairs[i].0, &pairs[j].1).unwrap()))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn two_guests_cancel() {
        let mut rng = ChaCha20Rng::seed_from_u64(30);
        let (enc, dec) = keygen(CipherKind::Paillier, 64, &mut rng).unwrap();
        let keys = setup_guests(2, 31);
        let ctx = MaskCtx { round: 1, node: 2, slot: 3 };
        let a = enc.encrypt(&BigUint::from(10u8), 0, &mut rng).unwrap();
        let b = enc.encrypt(&BigUint::from(32u8), 0, &mut rng).unwrap();
        let ma = apply_masks(&a, &enc, 0, &keys[0], ctx).unwrap();
        let mb = apply_masks(&b, &enc, 1, &keys[1], ctx).unwrap();
        let (sum, _) = dec.decrypt(&enc.add(&ma, &mb).unwrap());
        assert_eq!(sum, BigUint::from(42u8));
    }

    #[test]
    fn many_guests_cancel_exactly() {
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        let (enc, dec) = keygen(CipherKind::Passthrough, 64, &mut rng).unwrap();
        for n in 3..=10 {
            let keys = setup_guests(n, 100 + n as u64);
            let ctx = MaskCtx { round: 7, node: n as u64, slot: 9 };
            let values: Vec<u64> = (0..n as u64).map(|i| i * 13 + 1).collect();
            let mut acc: Option<Ciphertext> = None;
            for (i, v) in values.iter().enumerate() {
                let c = enc.encrypt(&BigUint::from(*v), 0, &mut rng).unwrap();
                let masked = apply_masks(&c, &enc, i, &keys[i], ctx).unwrap();
                acc = Some(match acc {
                    None => masked,
                    Some(prev) => enc.add(&prev, &masked).unwrap(),
                });
            }
            let (sum, _) = dec.decrypt(&acc.unwrap());
            assert_eq!(sum, BigUint::from(values.iter().sum::<u64>()));
        }
    }

    #[test]
    fn single_guest_no_masks() {
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let (enc, dec) = keygen(CipherKind::Paillier, 64, &mut rng).unwrap();
        let ctx = MaskCtx { round: 0, node: 0, slot: 0 };
        let c = enc.encrypt(&BigUint::from(5u8), 0, &mut rng).unwrap();
        let masked = apply_masks(&c, &enc, 0, &[], ctx).unwrap();
        let (v, _) = dec.decrypt(&masked);
        assert_eq!(v, BigUint::from(5u8));
    }

    #[test]
    fn dropping_a_guest_breaks_cancellation() {
        let mut rng = ChaCha20Rng::seed_from_u64(34);
        let (enc, dec) = keygen(CipherKind::Passthrough, 64, &mut rng).unwrap();
        let keys = setup_guests(3, 35);
        let ctx = MaskCtx { round: 1, node: 1, slot: 1 };
        let mut acc: Option<Ciphertext> = None;
        // Guest 2 never reports.
        for i in 0..2 {
            let c = enc.encrypt(&BigUint::from(7u8), 0, &mut rng).unwrap();
            let masked = apply_masks(&c, &enc, i, &keys[i], ctx).unwrap();
            acc = Some(match acc {
                None => masked,
                Some(prev) => enc.add(&prev, &masked).unwrap(),
            });
        }
        let (sum, _) = dec.decrypt(&acc.unwrap());
        assert_ne!(sum, BigUint::from(14u8));
    }

    #[test]
    fn mask_depends_on_every_context_field() {
        let key = SharedKey([9u8; 32]);
        let modulus = BigUint::from(1u128 << 100);
        let base = mask_for(&key, MaskCtx { round: 1, node: 2, slot: 3 }, &modulus);
        for ctx in [
            MaskCtx { round: 2, node: 2, slot: 3 },
            MaskCtx { round: 1, node: 3, slot: 3 },
            MaskCtx { round: 1, node: 2, slot: 4 },
        ] {
            assert_ne!(mask_for(&key, ctx, &modulus), base);
        }
        assert!(!base.is_zero());
    }
}
