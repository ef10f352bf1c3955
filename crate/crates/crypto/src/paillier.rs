//! Paillier cryptosystem with the `g = n + 1` generator, so plaintext
//! addition never needs a modular exponentiation. Decryption runs through
//! CRT over p^2 and q^2.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use rand_chacha::ChaCha20Rng;

use crate::error::{CryptoError, Result};

pub const SUPPORTED_KEY_BITS: [usize; 4] = [64, 512, 1024, 2048];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
}

impl PublicKey {
    pub fn from_modulus(n: BigUint) -> Self {
        let n_squared = &n * &n;
        PublicKey { n, n_squared }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn modulus_squared(&self) -> &BigUint {
        &self.n_squared
    }

    /// Randomized encryption: `(1 + m*n) * r^n mod n^2`.
    pub fn encrypt(&self, m: &BigUint, rng: &mut ChaCha20Rng) -> Result<BigUint> {
        if m >= &self.n {
            return Err(CryptoError::OutOfRange("plaintext not in the ring".into()));
        }
        let r = self.sample_unit(rng);
        let gm = (BigUint::one() + m * &self.n) % &self.n_squared;
        let rn = r.modpow(&self.n, &self.n_squared);
        Ok((gm * rn) % &self.n_squared)
    }

    /// Homomorphic addition of plaintexts: ciphertext product.
    pub fn add(&self, c1: &BigUint, c2: &BigUint) -> BigUint {
        (c1 * c2) % &self.n_squared
    }

    /// Add a plaintext into a ciphertext: `c * (1 + m*n) mod n^2`.
    pub fn add_plain(&self, c: &BigUint, m: &BigUint) -> BigUint {
        let gm = (BigUint::one() + (m % &self.n) * &self.n) % &self.n_squared;
        (c * gm) % &self.n_squared
    }

    /// Multiply the plaintext by a ring constant: `c^k mod n^2`.
    pub fn mul_plain(&self, c: &BigUint, k: &BigUint) -> BigUint {
        c.modpow(&(k % &self.n), &self.n_squared)
    }

    fn sample_unit(&self, rng: &mut ChaCha20Rng) -> BigUint {
        loop {
            let r = sample_below(rng, &self.n);
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrivateKey {
    n: BigUint,
    phi: BigUint,
    mu: BigUint,
    // CRT acceleration
    p_squared: BigUint,
    q_squared: BigUint,
    phi_mod_p: BigUint,
    q2_inv_mod_p2: BigUint,
    phi_mod_q: BigUint,
}

impl PrivateKey {
    fn new(p: &BigUint, q: &BigUint) -> Result<Self> {
        let n = p * q;
        let one = BigUint::one();
        let phi = (p - &one) * (q - &one);
        let mu = phi
            .modinv(&n)
            .ok_or_else(|| CryptoError::KeyGen("phi not invertible mod n".into()))?;
        let p_squared = p * p;
        let q_squared = q * q;
        // Orders of the unit groups mod p^2 and q^2.
        let phi_mod_p = &phi % (p * (p - &one));
        let phi_mod_q = &phi % (q * (q - &one));
        let q2_inv_mod_p2 = q_squared
            .modinv(&p_squared)
            .ok_or_else(|| CryptoError::KeyGen("q^2 not invertible mod p^2".into()))?;
        Ok(PrivateKey {
            n,
            phi,
            mu,
            p_squared,
            q_squared,
            phi_mod_p,
            q2_inv_mod_p2,
            phi_mod_q,
        })
    }

    pub fn decrypt(&self, c: &BigUint) -> BigUint {
        let n_squared = &self.p_squared * &self.q_squared;
        let c = c % &n_squared;
        // u = c^phi mod n^2 via CRT over the two prime-power halves.
        let u_p = (&c % &self.p_squared).modpow(&self.phi_mod_p, &self.p_squared);
        let u_q = (&c % &self.q_squared).modpow(&self.phi_mod_q, &self.q_squared);
        // Garner recombination.
        let diff = ((&u_p + &self.p_squared) - (&u_q % &self.p_squared)) % &self.p_squared;
        let h = (diff * &self.q2_inv_mod_p2) % &self.p_squared;
        let u = (&u_q + h * &self.q_squared) % &n_squared;
        // L(u) = (u - 1) / n, then scale by mu.
        let l = (u - BigUint::one()) / &self.n;
        (l * &self.mu) % &self.n
    }

    /// Reference decryption without CRT, kept for cross-checks.
    pub fn decrypt_plain(&self, c: &BigUint) -> BigUint {
        let n_squared = &self.n * &self.n;
        let u = (c % &n_squared).modpow(&self.phi, &n_squared);
        let l = (u - BigUint::one()) / &self.n;
        (l * &self.mu) % &self.n
    }
}

#[derive(Debug, Clone)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
    pub key_bits: usize,
}

/// Generate a key pair. Supported sizes: 64 (tests only), 512, 1024, 2048.
pub fn keygen(bits: usize, rng: &mut ChaCha20Rng) -> Result<KeyPair> {
    if !SUPPORTED_KEY_BITS.contains(&bits) {
        return Err(CryptoError::KeyGen(format!(
            "unsupported key size {bits}; expected one of {SUPPORTED_KEY_BITS:?}"
        )));
    }
    let half = bits / 2;
    loop {
        let p = random_prime(half, rng);
        let q = random_prime(half, rng);
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() as usize != bits {
            continue;
        }
        // g = n + 1 needs gcd(n, phi) = 1.
        let one = BigUint::one();
        let phi = (&p - &one) * (&q - &one);
        if !n.gcd(&phi).is_one() {
            continue;
        }
        let public = PublicKey::from_modulus(n);
        let private = PrivateKey::new(&p, &q)?;
        return Ok(KeyPair { public, private, key_bits: bits });
    }
}

/// Uniform value below `bound` by rejection sampling.
pub fn sample_below(rng: &mut ChaCha20Rng, bound: &BigUint) -> BigUint {
    let bits = bound.bits();
    let bytes = bits.div_ceil(8) as usize;
    let top_mask = if bits % 8 == 0 { 0xff } else { (1u16 << (bits % 8)) as u8 - 1 };
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= top_mask;
        let v = BigUint::from_bytes_be(&buf);
        if &v < bound {
            return v;
        }
    }
}

fn random_prime(bits: usize, rng: &mut ChaCha20Rng) -> BigUint {
    let one = BigUint::one();
    loop {
        let mut candidate = sample_below(rng, &(BigUint::one() << bits));
        candidate.set_bit(bits as u64 - 1, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, 32, rng) {
            return candidate;
        }
        let _ = &one;
    }
}

/// Miller-Rabin with `rounds` random bases.
fn is_probable_prime(n: &BigUint, rounds: usize, rng: &mut ChaCha20Rng) -> bool {
    let one = BigUint::one();
    let two = BigUint::from(2u8);
    let three = BigUint::from(3u8);
    if n < &two {
        return false;
    }
    if n == &two || n == &three {
        return true;
    }
    if n.is_even() {
        return false;
    }
    // Quick trial division by small primes.
    for small in [3u32, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47] {
        let sp = BigUint::from(small);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    'witness: for _ in 0..rounds {
        let a = loop {
            let a = sample_below(rng, &n_minus_one);
            if a >= two {
                break a;
            }
        };
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue 'witness;
        }
        for _ in 0..s.saturating_sub(1) {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
