//! Malicious-actor identification by recursive bisection.
//!
//! The detector never looks inside the cryptography: it drives an abstract
//! subgroup-authentication oracle. A subgroup containing no malicious member
//! answers `true`, any subgroup containing one answers `false`. Failing
//! groups are split into order-preserving halves and re-queried; singletons
//! are resolved by a one-member identity check.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactmath::{Scalar, Vector};
use crate::protocol::{
    gm_group_key, gm_verify, gm_verify_single, AuthShare, GroupSecret, ProtocolError,
    SessionParams,
};

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("roster must be nonempty with distinct keys")]
    InvalidRoster,
    #[error(
        "oracle verdicts are inconsistent: {parent:?} failed but both halves {left:?} / {right:?} passed"
    )]
    InconsistentOracle { parent: CallRecord, left: CallRecord, right: CallRecord },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// One oracle query and its verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub subset: Vec<Scalar>,
    pub verdict: bool,
}

/// Answers whether a subgroup of public keys authenticates cleanly.
/// Verdicts must be consistent within one detection run and monotone: no
/// malicious member present implies `true`, at least one implies `false`.
pub trait SubgroupOracle {
    fn check(&mut self, subset: &[Scalar]) -> Result<bool, DetectionError>;
}

impl<F> SubgroupOracle for F
where
    F: FnMut(&[Scalar]) -> Result<bool, DetectionError>,
{
    fn check(&mut self, subset: &[Scalar]) -> Result<bool, DetectionError> {
        self(subset)
    }
}

/// The identified malicious set together with the full query trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub malicious: BTreeSet<Scalar>,
    pub oracle_calls: usize,
    pub call_log: Vec<CallRecord>,
}

/// Recursively isolates every malicious member of `roster`.
///
/// A clean roster costs exactly one query. Otherwise the roster is split
/// into halves (the extra element goes left), each failing half is recursed
/// into, and failing singletons are declared malicious. A parent that fails
/// while both halves pass violates the oracle's monotonicity and is
/// reported as an error with the offending calls.
pub fn detect_malicious(
    roster: &[Scalar],
    oracle: &mut dyn SubgroupOracle,
) -> Result<DetectionReport, DetectionError> {
    let distinct: BTreeSet<&Scalar> = roster.iter().collect();
    if roster.is_empty() || distinct.len() != roster.len() {
        return Err(DetectionError::InvalidRoster);
    }
    let mut call_log = Vec::new();
    let malicious = bisect(roster, oracle, &mut call_log)?;
    Ok(DetectionReport { oracle_calls: call_log.len(), malicious, call_log })
}

fn bisect(
    subset: &[Scalar],
    oracle: &mut dyn SubgroupOracle,
    call_log: &mut Vec<CallRecord>,
) -> Result<BTreeSet<Scalar>, DetectionError> {
    let verdict = oracle.check(subset)?;
    let record = CallRecord { subset: subset.to_vec(), verdict };
    call_log.push(record.clone());
    if verdict {
        return Ok(BTreeSet::new());
    }
    if subset.len() == 1 {
        return Ok(BTreeSet::from([subset[0].clone()]));
    }
    let mid = subset.len().div_ceil(2);
    let (left, right) = subset.split_at(mid);

    let left_start = call_log.len();
    let found_left = bisect(left, oracle, call_log)?;
    let right_start = call_log.len();
    let found_right = bisect(right, oracle, call_log)?;

    if found_left.is_empty() && found_right.is_empty() {
        return Err(DetectionError::InconsistentOracle {
            parent: record,
            left: call_log[left_start].clone(),
            right: call_log[right_start].clone(),
        });
    }
    Ok(found_left.union(&found_right).cloned().collect())
}

/// Binds the detector to the authentication protocol: each query runs a
/// fresh sub-session over the queried subset (same `v`/`h`, fresh nonce
/// vector) and asks the manager for a verdict. Size-one queries use the
/// single-member identity check, everything larger the group sum check.
///
/// `share_for` produces each participant's share for the query's session
/// parameters; the simulation harness plugs adversary behaviors in here.
pub fn subgroup_oracle_from_session<F>(
    secret: &GroupSecret,
    v: Vector,
    h: Vector,
    basis_index: usize,
    seed: u64,
    share_for: F,
) -> SessionOracle<'_, F>
where
    F: FnMut(&Scalar, &SessionParams) -> Result<AuthShare, ProtocolError>,
{
    SessionOracle { secret, v, h, basis_index, rng: ChaCha20Rng::seed_from_u64(seed), share_for }
}

pub struct SessionOracle<'a, F> {
    secret: &'a GroupSecret,
    v: Vector,
    h: Vector,
    basis_index: usize,
    rng: ChaCha20Rng,
    share_for: F,
}

impl<F> SubgroupOracle for SessionOracle<'_, F>
where
    F: FnMut(&Scalar, &SessionParams) -> Result<AuthShare, ProtocolError>,
{
    fn check(&mut self, subset: &[Scalar]) -> Result<bool, DetectionError> {
        let params = SessionParams::assemble(
            self.secret,
            self.v.clone(),
            self.h.clone(),
            subset.to_vec(),
            self.basis_index,
            &mut self.rng,
        )?;
        let key = gm_group_key(self.secret, &params)?;
        let shares = subset
            .iter()
            .map(|x| (self.share_for)(x, &params))
            .collect::<Result<Vec<_>, _>>()?;
        let outcome = if subset.len() == 1 {
            gm_verify_single(self.secret, &params, &shares[0], &key)?
        } else {
            gm_verify(self.secret, &params, &shares, &key)?
        };
        Ok(outcome.is_accept())
    }
}
