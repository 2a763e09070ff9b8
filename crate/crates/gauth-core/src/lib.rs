//! Group authentication over inner-product spaces.
//!
//! A group manager fixes a secret subspace of an ambient rational vector
//! space together with a secret linear polynomial, and hands every member a
//! scaled copy of the subspace basis. Members then derive a shared group key
//! non-interactively by projection, authenticate simultaneously by
//! submitting Lagrange-blinded inner products whose sum the manager can
//! predict, delegate membership without the manager, and isolate misbehaving
//! participants by recursive subgroup re-authentication.
//!
//! The crate is organized around five modules:
//!
//! - [`exactmath`]: exact rational scalars/vectors, Gram-Schmidt, projection,
//!   rank, and seeded sampling — the substrate everything else runs on.
//! - [`protocol`]: key generation, credential issuance and delegation, group
//!   key derivation, share computation/encryption, and manager verification.
//! - [`detection`]: recursive bisection of a roster against a subgroup
//!   authentication oracle to identify malicious members.
//! - [`simnet`]: a deterministic multi-party simulation harness with
//!   pluggable adversary behaviors, producing replayable transcripts.
//! - [`metrics`]: operation counting and scaling benchmarks.

pub mod detection;
pub mod exactmath;
pub mod metrics;
pub mod protocol;
pub mod simnet;

pub use exactmath::{Basis, MathError, Scalar, Vector};
pub use protocol::{
    AuthShare, Credential, GroupKey, GroupSecret, ProtocolError, RejectReason, SessionParams,
    VerifyOutcome,
};

/// The deterministic RNG used throughout: every seeded entry point
/// (scenarios, benchmarks, tools) builds on the same stream cipher.
pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha20Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha20Rng::seed_from_u64(seed)
}
