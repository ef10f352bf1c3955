//! Fixed-point embedding of reals into the plaintext ring: values scale by
//! `2^f` and negatives live in the upper half of the ring.

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use crate::error::{CryptoError, Result};

pub const DEFAULT_FRAC_BITS: u32 = 24;

#[derive(Debug, Clone)]
pub struct FixedPointCodec {
    frac_bits: u32,
    modulus: BigUint,
    half: BigUint,
}

impl FixedPointCodec {
    pub fn new(frac_bits: u32, modulus: BigUint) -> Self {
        let half = &modulus >> 1;
        FixedPointCodec { frac_bits, modulus, half }
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    /// `round(x * 2^f)` embedded signed into `[0, n)`.
    pub fn encode(&self, x: f64) -> Result<BigUint> {
        self.encode_at(x, self.frac_bits)
    }

    /// Encode at an explicit scale (for reciprocal factors and the like).
    pub fn encode_at(&self, x: f64, scale_bits: u32) -> Result<BigUint> {
        if !x.is_finite() {
            return Err(CryptoError::Overflow(format!("cannot encode {x}")));
        }
        let scaled = x * (2f64.powi(scale_bits as i32));
        if scaled.abs() >= 2f64.powi(120) {
            return Err(CryptoError::Overflow(format!("{x} at scale {scale_bits} exceeds i128")));
        }
        let e = scaled.round() as i128;
        let mag = BigUint::from(e.unsigned_abs());
        if mag > self.half {
            return Err(CryptoError::Overflow(format!(
                "{x} at scale {scale_bits} exceeds the ring half"
            )));
        }
        Ok(if e >= 0 { mag } else { &self.modulus - mag })
    }

    /// Invert the signed embedding and divide out `2^scale_bits`.
    pub fn decode_at(&self, e: &BigUint, scale_bits: u32) -> Result<f64> {
        if e >= &self.modulus {
            return Err(CryptoError::Decode("value outside the ring".into()));
        }
        let signed = if e > &self.half {
            -((&self.modulus - e)
                .to_f64()
                .ok_or_else(|| CryptoError::Decode("magnitude too large".into()))?)
        } else {
            e.to_f64()
                .ok_or_else(|| CryptoError::Decode("magnitude too large".into()))?
        };
        Ok(signed / 2f64.powi(scale_bits as i32))
    }

    pub fn decode(&self, e: &BigUint) -> Result<f64> {
        self.decode_at(e, self.frac_bits)
    }
}
