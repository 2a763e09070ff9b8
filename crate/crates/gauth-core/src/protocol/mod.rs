//! The authentication scheme: group-manager setup, credential issuance and
//! member delegation, non-interactive group-key derivation, the four-part
//! blinded authentication exchange, and manager-side verification.

mod session;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactmath::{
    sample_basis, sample_nonzero_integer, Basis, MathError, Scalar,
};

pub use session::{
    compute_share, decrypt_share, delegate_credential, delegate_credential_as, derive_group_key,
    encrypt_share, gm_expected_value, gm_group_key, gm_verify, gm_verify_single,
    lagrange_coefficient, AuthShare, GroupKey, RejectReason, SessionParams, ShareError,
    VerifyOutcome,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("subspace dimension must satisfy 1 <= n < d (got n={n}, d={d})")]
    InvalidDimensions { d: usize, n: usize },
    #[error("polynomial must have degree exactly 1 (a != 0)")]
    DegeneratePolynomial,
    #[error("public key must be a nonzero integer, got {0}")]
    InvalidPublicKey(Scalar),
    #[error("f({x}) = 0; issue the credential under a different public key")]
    PolynomialRoot { x: Scalar },
    #[error("roster must be nonempty")]
    EmptyRoster,
    #[error("roster entries must be pairwise distinct nonzero integers")]
    InvalidRoster,
    #[error("public key {0} is not in the session roster")]
    NotInRoster(Scalar),
    #[error("basis index {index} out of range 1..={dim}")]
    BasisIndexOutOfRange { index: usize, dim: usize },
    #[error("failed to sample a non-orthogonal nonce vector after {0} attempts")]
    NonceSamplingExhausted(usize),
    #[error("parameter vector length {got} does not match ambient dimension {expected}")]
    ParamDimensionMismatch { expected: usize, got: usize },
}

/// Where a credential came from: issued directly by the group manager, or
/// created by an existing member for a newcomer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GmIssued,
    Delegated { host_public_key: Scalar },
}

/// The group manager's secret: the subspace basis `B = {v_1..v_n}` and the
/// linear polynomial `f(x) = a*x + b`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupSecret {
    basis: Basis,
    f_a: Scalar,
    f_b: Scalar,
}

impl<'de> Deserialize<'de> for GroupSecret {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            basis: Basis,
            f_a: Scalar,
            f_b: Scalar,
        }
        let raw = Raw::deserialize(deserializer)?;
        GroupSecret::from_parts(raw.basis, raw.f_a, raw.f_b).map_err(serde::de::Error::custom)
    }
}

impl GroupSecret {
    /// Builds a secret from explicit parts, enforcing `deg(f) = 1`.
    pub fn from_parts(basis: Basis, f_a: Scalar, f_b: Scalar) -> Result<Self, ProtocolError> {
        if f_a.is_zero() {
            return Err(ProtocolError::DegeneratePolynomial);
        }
        Ok(GroupSecret { basis, f_a, f_b })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// Ambient dimension `d`.
    pub fn ambient_dim(&self) -> usize {
        self.basis.ambient_dim()
    }

    /// Subspace dimension `n`.
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn f_a(&self) -> &Scalar {
        &self.f_a
    }

    pub fn f_b(&self) -> &Scalar {
        &self.f_b
    }

    /// Evaluates the secret polynomial at `x`.
    pub fn eval_f(&self, x: &Scalar) -> Scalar {
        &(&self.f_a * x) + &self.f_b
    }
}

/// A member's credential: public key `x_j` and private basis
/// `B_j = {f(x_j) v_1, ..., f(x_j) v_n}` (possibly rescaled by delegation).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Credential {
    public_key: Scalar,
    private_basis: Basis,
    provenance: Provenance,
}

impl<'de> Deserialize<'de> for Credential {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            public_key: Scalar,
            private_basis: Basis,
            provenance: Provenance,
        }
        let raw = Raw::deserialize(deserializer)?;
        Credential::from_parts(raw.public_key, raw.private_basis, raw.provenance)
            .map_err(serde::de::Error::custom)
    }
}

impl Credential {
    /// Assembles a credential from raw parts. Whether the basis actually
    /// spans the group subspace is only checkable against the manager's
    /// secret; this validates the local invariants.
    pub fn from_parts(
        public_key: Scalar,
        private_basis: Basis,
        provenance: Provenance,
    ) -> Result<Self, ProtocolError> {
        validate_public_key(&public_key)?;
        Ok(Credential { public_key, private_basis, provenance })
    }

    pub fn public_key(&self) -> &Scalar {
        &self.public_key
    }

    pub fn private_basis(&self) -> &Basis {
        &self.private_basis
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

fn validate_public_key(x: &Scalar) -> Result<(), ProtocolError> {
    if x.is_zero() || !x.is_integer() {
        return Err(ProtocolError::InvalidPublicKey(x.clone()));
    }
    Ok(())
}

/// Group-manager key generation: samples an independent basis for the secret
/// subspace (rank-checked, with bounded resampling) and a random degree-1
/// polynomial with nonzero coefficients.
pub fn gm_setup<R: Rng + ?Sized>(rng: &mut R, d: usize, n: usize) -> Result<GroupSecret, ProtocolError> {
    if n == 0 || n >= d {
        return Err(ProtocolError::InvalidDimensions { d, n });
    }
    let basis = sample_basis(rng, d, n)?;
    let f_a = sample_nonzero_integer(rng);
    let f_b = sample_nonzero_integer(rng);
    Ok(GroupSecret { basis, f_a, f_b })
}

/// Issues the credential for public key `x_j`: the private basis is the
/// manager's basis scaled by `f(x_j)`.
pub fn issue_credential(secret: &GroupSecret, x_j: &Scalar) -> Result<Credential, ProtocolError> {
    validate_public_key(x_j)?;
    let fx = secret.eval_f(x_j);
    if fx.is_zero() {
        return Err(ProtocolError::PolynomialRoot { x: x_j.clone() });
    }
    Ok(Credential {
        public_key: x_j.clone(),
        private_basis: secret.basis.scale(&fx)?,
        provenance: Provenance::GmIssued,
    })
}
