//! Privacy machinery for federated tree training: Paillier additive
//! homomorphic encryption over fixed-point-encoded reals, Diffie-Hellman
//! pair keys, and cancellation masks for secure aggregation.

pub mod dh;
pub mod error;
pub mod fixed;
pub mod mask;
pub mod paillier;
pub mod suite;

pub use dh::{dh_keypair, dh_shared, DhPrivate, DhPublic, SharedKey};
pub use error::{CryptoError, Result};
pub use fixed::{FixedPointCodec, DEFAULT_FRAC_BITS};
pub use mask::{apply_masks, mask_for, MaskCtx};
pub use suite::{keygen, CipherKind, Ciphertext, DecKey, EncKey};
