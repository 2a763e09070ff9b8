use std::collections::BTreeSet;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exactmath::{
    inner_product, projected_inner_product, sample_nonzero_integer, sample_vector, Scalar, Vector,
    MAX_SAMPLE_RETRIES,
};

use super::{Credential, GroupSecret, ProtocolError, Provenance};

const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;

/// Public parameters of one authentication session: the key-derivation
/// vectors `v` and `h`, the authentication nonce vector `g`, the roster of
/// participating public keys, and the agreed basis position (1-based,
/// defaulting to the first vector).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SessionParams {
    v: Vector,
    h: Vector,
    g: Vector,
    roster: Vec<Scalar>,
    basis_index: usize,
}

impl<'de> Deserialize<'de> for SessionParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            v: Vector,
            h: Vector,
            g: Vector,
            roster: Vec<Scalar>,
            basis_index: usize,
        }
        let raw = Raw::deserialize(deserializer)?;
        SessionParams::new(raw.v, raw.h, raw.g, raw.roster, raw.basis_index)
            .map_err(serde::de::Error::custom)
    }
}

impl SessionParams {
    /// Validates roster and shape invariants. The bound `basis_index <= n`
    /// is enforced by the operations that know the subspace dimension.
    pub fn new(
        v: Vector,
        h: Vector,
        g: Vector,
        roster: Vec<Scalar>,
        basis_index: usize,
    ) -> Result<Self, ProtocolError> {
        if roster.is_empty() {
            return Err(ProtocolError::EmptyRoster);
        }
        let distinct: BTreeSet<&Scalar> = roster.iter().collect();
        if distinct.len() != roster.len()
            || roster.iter().any(|x| x.is_zero() || !x.is_integer())
        {
            return Err(ProtocolError::InvalidRoster);
        }
        if basis_index == 0 {
            return Err(ProtocolError::BasisIndexOutOfRange { index: 0, dim: 0 });
        }
        let d = v.len();
        for w in [&h, &g] {
            if w.len() != d {
                return Err(ProtocolError::ParamDimensionMismatch { expected: d, got: w.len() });
            }
        }
        Ok(SessionParams { v, h, g, roster, basis_index })
    }

    /// Builds a session from given `v`, `h` and a freshly sampled nonce
    /// vector `g`, resampling until `<v_i, g> != 0` so verification is
    /// non-vacuous (bounded retries).
    pub fn assemble<R: Rng + ?Sized>(
        secret: &GroupSecret,
        v: Vector,
        h: Vector,
        roster: Vec<Scalar>,
        basis_index: usize,
        rng: &mut R,
    ) -> Result<Self, ProtocolError> {
        let v_i = secret
            .basis()
            .get(basis_index.wrapping_sub(1))
            .ok_or(ProtocolError::BasisIndexOutOfRange { index: basis_index, dim: secret.dim() })?;
        let d = secret.ambient_dim();
        for _ in 0..MAX_SAMPLE_RETRIES {
            let g = sample_vector(rng, d);
            if !inner_product(v_i, &g)?.is_zero() {
                return SessionParams::new(v, h, g, roster, basis_index);
            }
        }
        Err(ProtocolError::NonceSamplingExhausted(MAX_SAMPLE_RETRIES))
    }

    /// Samples a full session (fresh `v`, `h`, and non-degenerate `g`).
    pub fn sample<R: Rng + ?Sized>(
        secret: &GroupSecret,
        roster: Vec<Scalar>,
        basis_index: usize,
        rng: &mut R,
    ) -> Result<Self, ProtocolError> {
        let d = secret.ambient_dim();
        let v = sample_vector(rng, d);
        let h = sample_vector(rng, d);
        SessionParams::assemble(secret, v, h, roster, basis_index, rng)
    }

    /// Same `v`/`h`, new roster, fresh non-degenerate nonce vector. Used for
    /// per-subgroup re-authentication during detection.
    pub fn for_subgroup<R: Rng + ?Sized>(
        &self,
        secret: &GroupSecret,
        roster: Vec<Scalar>,
        rng: &mut R,
    ) -> Result<Self, ProtocolError> {
        SessionParams::assemble(secret, self.v.clone(), self.h.clone(), roster, self.basis_index, rng)
    }

    pub fn v(&self) -> &Vector {
        &self.v
    }

    pub fn h(&self) -> &Vector {
        &self.h
    }

    pub fn g(&self) -> &Vector {
        &self.g
    }

    pub fn roster(&self) -> &[Scalar] {
        &self.roster
    }

    pub fn basis_index(&self) -> usize {
        self.basis_index
    }
}

/// The shared group key: the scalar `s = <Proj_W v, h>` and the symmetric
/// key derived from it, `SHA-256` of the canonical encoding of `s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupKey {
    s: Scalar,
    key_bytes: [u8; 32],
}

impl GroupKey {
    pub fn from_scalar(s: Scalar) -> Self {
        let key_bytes = Sha256::digest(s.to_canonical_bytes()).into();
        GroupKey { s, key_bytes }
    }

    pub fn s(&self) -> &Scalar {
        &self.s
    }

    pub fn key_bytes(&self) -> &[u8; 32] {
        &self.key_bytes
    }
}

/// Derives the group key from a member credential: project `v` onto the
/// member's private basis and take the inner product with `h`. Every basis
/// spanning the same subspace (including delegated rescalings) yields the
/// same scalar.
pub fn derive_group_key(cred: &Credential, params: &SessionParams) -> Result<GroupKey, ProtocolError> {
    let s = group_key_scalar(cred.private_basis(), params)?;
    Ok(GroupKey::from_scalar(s))
}

/// The manager's own copy of the group key, computed from the secret basis.
pub fn gm_group_key(secret: &GroupSecret, params: &SessionParams) -> Result<GroupKey, ProtocolError> {
    let s = group_key_scalar(secret.basis(), params)?;
    Ok(GroupKey::from_scalar(s))
}

fn group_key_scalar(basis: &crate::exactmath::Basis, params: &SessionParams) -> Result<Scalar, ProtocolError> {
    if params.v.len() != basis.ambient_dim() {
        return Err(ProtocolError::ParamDimensionMismatch {
            expected: basis.ambient_dim(),
            got: params.v.len(),
        });
    }
    Ok(projected_inner_product(&params.v, basis, &params.h)?)
}

/// The Lagrange coefficient at zero for `x_j` within `roster`:
/// `A_j = prod_{k != j} (-x_k) / (x_j - x_k)`. A singleton roster gives the
/// empty product, 1.
pub fn lagrange_coefficient(x_j: &Scalar, roster: &[Scalar]) -> Result<Scalar, ProtocolError> {
    if roster.is_empty() {
        return Err(ProtocolError::EmptyRoster);
    }
    let distinct: BTreeSet<&Scalar> = roster.iter().collect();
    if distinct.len() != roster.len() || roster.iter().any(|x| x.is_zero() || !x.is_integer()) {
        return Err(ProtocolError::InvalidRoster);
    }
    if !distinct.contains(x_j) {
        return Err(ProtocolError::NotInRoster(x_j.clone()));
    }
    Ok(lagrange_fold(x_j, roster))
}

/// Folds the Lagrange factors over raw integers, cross-cancelling factors
/// against the accumulator so the running fraction stays in lowest terms
/// without ever taking a gcd of two large numbers. Public keys are small
/// integers in practice, so factors are batched in `i128` and the big
/// accumulators are touched only when a batch flushes.
fn lagrange_fold(x_j: &Scalar, roster: &[Scalar]) -> Scalar {
    use num_bigint::BigInt;
    use num_integer::Integer;
    use num_traits::{One, Signed, ToPrimitive};

    fn gcd_i128(mut a: i128, mut b: i128) -> i128 {
        a = a.abs();
        b = b.abs();
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    }

    // Exact gcd(big, small) via one division: gcd(big, s) = gcd(big mod s, s).
    fn gcd_vs_small(big: &BigInt, small: i128) -> i128 {
        let s = small.abs();
        if s <= 1 {
            return s.max(1);
        }
        let r = (big % BigInt::from(s)).to_i128().expect("remainder fits");
        gcd_i128(r, s)
    }

    struct Acc {
        num: BigInt,
        den: BigInt,
    }

    impl Acc {
        fn flush(&mut self, mut pn: i128, mut pd: i128) {
            let g = gcd_i128(pn, pd);
            if g > 1 {
                pn /= g;
                pd /= g;
            }
            let g1 = gcd_vs_small(&self.den, pn);
            if g1 > 1 {
                self.den /= BigInt::from(g1);
                pn /= g1;
            }
            let g2 = gcd_vs_small(&self.num, pd);
            if g2 > 1 {
                self.num /= BigInt::from(g2);
                pd /= g2;
            }
            self.num *= BigInt::from(pn);
            self.den *= BigInt::from(pd);
        }
    }

    // Batches stay below 2^90 so one more ~2^33 factor cannot overflow i128.
    const BATCH_LIMIT: i128 = 1 << 90;

    let small_roster: Option<Vec<i64>> = roster
        .iter()
        .map(|x| x.numer().to_i64())
        .collect::<Option<Vec<_>>>()
        .filter(|_| x_j.numer().to_i64().is_some());

    let mut acc = Acc { num: BigInt::one(), den: BigInt::one() };
    match small_roster {
        Some(keys) => {
            let xj = x_j.numer().to_i64().expect("checked above") as i128;
            let (mut pn, mut pd) = (1i128, 1i128);
            for &xk in &keys {
                let xk = xk as i128;
                if xk == xj {
                    continue;
                }
                let (mut fn_, mut fd) = (-xk, xj - xk);
                let g = gcd_i128(fn_, fd);
                if g > 1 {
                    fn_ /= g;
                    fd /= g;
                }
                match (pn.checked_mul(fn_), pd.checked_mul(fd)) {
                    (Some(n), Some(d)) if n.abs() < BATCH_LIMIT && d.abs() < BATCH_LIMIT => {
                        pn = n;
                        pd = d;
                    }
                    _ => {
                        acc.flush(pn, pd);
                        pn = fn_;
                        pd = fd;
                    }
                }
            }
            acc.flush(pn, pd);
        }
        None => {
            // Huge public keys: fall back to per-factor big-integer folding.
            for x_k in roster {
                if x_k == x_j {
                    continue;
                }
                let mut factor_num = -x_k.numer();
                let mut factor_den = x_j.numer() - x_k.numer();
                let g = factor_num.gcd(&factor_den);
                if !g.is_one() {
                    factor_num /= &g;
                    factor_den /= &g;
                }
                let g1 = factor_num.gcd(&acc.den);
                if !g1.is_one() {
                    acc.den /= &g1;
                    factor_num /= &g1;
                }
                let g2 = factor_den.gcd(&acc.num);
                if !g2.is_one() {
                    acc.num /= &g2;
                    factor_den /= &g2;
                }
                acc.num *= factor_num;
                acc.den *= factor_den;
            }
        }
    }
    let Acc { mut num, mut den } = acc;
    if den.is_negative() {
        num = -num;
        den = -den;
    }
    Scalar::from_coprime_parts(num, den)
}

/// One participant's blinded contribution: `<A_j * b_i, g>`, where `b_i` is
/// the agreed vector of the participant's private basis. For a gm-issued
/// credential this equals `f(x_j) * A_j * <v_i, g>`.
pub fn compute_share(cred: &Credential, params: &SessionParams) -> Result<Scalar, ProtocolError> {
    if !params.roster.contains(cred.public_key()) {
        return Err(ProtocolError::NotInRoster(cred.public_key().clone()));
    }
    let b_i = cred
        .private_basis()
        .get(params.basis_index.wrapping_sub(1))
        .ok_or(ProtocolError::BasisIndexOutOfRange {
            index: params.basis_index,
            dim: cred.private_basis().dim(),
        })?;
    // The roster was validated at session construction; fold directly.
    let coeff = lagrange_fold(cred.public_key(), &params.roster);
    let raw = inner_product(b_i, &params.g)?;
    Ok(&coeff * &raw)
}

/// Rejection reasons a share can produce during decryption.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShareError {
    #[error("authenticated decryption failed")]
    AuthFailed,
    #[error("plaintext is not a canonical scalar encoding")]
    MalformedPlaintext,
    #[error("malformed share wire bytes: {0}")]
    MalformedWire(&'static str),
}

/// An encrypted blinded contribution in transit: sender public key, the
/// AEAD nonce, and ciphertext with the appended authentication tag.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthShare {
    pub sender: Scalar,
    #[serde(with = "b64_nonce")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "b64_bytes")]
    pub ciphertext_and_tag: Vec<u8>,
}

impl AuthShare {
    /// Binary wire layout: sender scalar encoding, 12-byte nonce,
    /// ciphertext followed by the 16-byte tag.
    pub fn to_wire_bytes(&self) -> Vec<u8> {
        let mut out = self.sender.to_canonical_bytes();
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.ciphertext_and_tag);
        out
    }

    pub fn from_wire_bytes(buf: &[u8]) -> Result<Self, ShareError> {
        let (sender, used) =
            Scalar::decode_prefix(buf).map_err(|_| ShareError::MalformedWire("sender"))?;
        let rest = &buf[used..];
        if rest.len() < NONCE_LEN + TAG_LEN {
            return Err(ShareError::MalformedWire("truncated"));
        }
        let mut nonce = [0u8; NONCE_LEN];
        nonce.copy_from_slice(&rest[..NONCE_LEN]);
        Ok(AuthShare { sender, nonce, ciphertext_and_tag: rest[NONCE_LEN..].to_vec() })
    }
}

mod b64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(deserializer)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

mod b64_nonce {
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 12], serializer: S) -> Result<S::Ok, S::Error> {
        super::b64_bytes::serialize(bytes, serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<[u8; 12], D::Error> {
        let bytes = super::b64_bytes::deserialize(deserializer)?;
        bytes.try_into().map_err(|_| serde::de::Error::custom("nonce must be 12 bytes"))
    }
}

/// Encrypts a contribution under the group key with ChaCha20-Poly1305.
/// The nonce is 12 fresh bytes from the caller's RNG and the associated
/// data is the canonical encoding of the sender's public key.
pub fn encrypt_share<R: Rng + ?Sized>(
    key: &GroupKey,
    contribution: &Scalar,
    sender: &Scalar,
    rng: &mut R,
) -> AuthShare {
    let cipher = ChaCha20Poly1305::new(&Key::from(*key.key_bytes()));
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ciphertext_and_tag = cipher
        .encrypt(
            &Nonce::from(nonce),
            Payload { msg: &contribution.to_canonical_bytes(), aad: &sender.to_canonical_bytes() },
        )
        .expect("ChaCha20-Poly1305 encryption is infallible for in-memory buffers");
    AuthShare { sender: sender.clone(), nonce, ciphertext_and_tag }
}

/// Inverse of [`encrypt_share`]: authenticates and decodes the contribution.
/// A tag mismatch signals an outsider or a diverging group key.
pub fn decrypt_share(key: &GroupKey, share: &AuthShare) -> Result<Scalar, ShareError> {
    let cipher = ChaCha20Poly1305::new(&Key::from(*key.key_bytes()));
    let plaintext = cipher
        .decrypt(
            &Nonce::from(share.nonce),
            Payload { msg: &share.ciphertext_and_tag, aad: &share.sender.to_canonical_bytes() },
        )
        .map_err(|_| ShareError::AuthFailed)?;
    Scalar::from_canonical_bytes(&plaintext).map_err(|_| ShareError::MalformedPlaintext)
}

/// What the manager expects the contributions to sum to: `f(0) * <v_i, g>`,
/// with `f(0) = b`.
pub fn gm_expected_value(secret: &GroupSecret, params: &SessionParams) -> Result<Scalar, ProtocolError> {
    let v_i = secret
        .basis()
        .get(params.basis_index.wrapping_sub(1))
        .ok_or(ProtocolError::BasisIndexOutOfRange { index: params.basis_index, dim: secret.dim() })?;
    Ok(secret.f_b() * &inner_product(v_i, &params.g)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// The decrypted contributions do not sum to the expected value.
    SumMismatch,
    /// A share failed authenticated decryption: the sender either never held
    /// a basis for the subspace or derived a different group key.
    OutsiderOrBadKey { sender: Scalar },
    /// Senders and roster disagree (missing, duplicate, or unknown senders).
    MalformedSession,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum VerifyOutcome {
    Accept,
    Reject { reason: RejectReason },
}

impl VerifyOutcome {
    pub fn is_accept(&self) -> bool {
        matches!(self, VerifyOutcome::Accept)
    }

    fn reject(reason: RejectReason) -> Self {
        VerifyOutcome::Reject { reason }
    }
}

/// Manager-side group verification: decrypt every share, sum the
/// contributions, and accept exactly when the sum equals `f(0) * <v_i, g>`.
pub fn gm_verify(
    secret: &GroupSecret,
    params: &SessionParams,
    shares: &[AuthShare],
    key: &GroupKey,
) -> Result<VerifyOutcome, ProtocolError> {
    let expected = gm_expected_value(secret, params)?;
    if shares.len() != params.roster.len() {
        return Ok(VerifyOutcome::reject(RejectReason::MalformedSession));
    }
    let senders: BTreeSet<&Scalar> = shares.iter().map(|s| &s.sender).collect();
    if senders.len() != shares.len() || !params.roster.iter().all(|x| senders.contains(x)) {
        return Ok(VerifyOutcome::reject(RejectReason::MalformedSession));
    }
    let mut sum = Scalar::zero();
    for share in shares {
        match decrypt_share(key, share) {
            Ok(contribution) => sum += &contribution,
            Err(_) => {
                return Ok(VerifyOutcome::reject(RejectReason::OutsiderOrBadKey {
                    sender: share.sender.clone(),
                }))
            }
        }
    }
    if sum == expected {
        Ok(VerifyOutcome::Accept)
    } else {
        Ok(VerifyOutcome::reject(RejectReason::SumMismatch))
    }
}

/// Identity verification of a single participant: with a singleton roster
/// the Lagrange coefficient is 1, so the contribution must equal
/// `f(x_j) * <v_i, g>` exactly. This is what lets the manager tell a genuine
/// key-holder from a delegated or forged basis.
pub fn gm_verify_single(
    secret: &GroupSecret,
    params: &SessionParams,
    share: &AuthShare,
    key: &GroupKey,
) -> Result<VerifyOutcome, ProtocolError> {
    if params.roster.len() != 1 || params.roster[0] != share.sender {
        return Ok(VerifyOutcome::reject(RejectReason::MalformedSession));
    }
    let v_i = secret
        .basis()
        .get(params.basis_index.wrapping_sub(1))
        .ok_or(ProtocolError::BasisIndexOutOfRange { index: params.basis_index, dim: secret.dim() })?;
    let expected = &secret.eval_f(&share.sender) * &inner_product(v_i, &params.g)?;
    match decrypt_share(key, share) {
        Ok(contribution) if contribution == expected => Ok(VerifyOutcome::Accept),
        Ok(_) => Ok(VerifyOutcome::reject(RejectReason::SumMismatch)),
        Err(_) => Ok(VerifyOutcome::reject(RejectReason::OutsiderOrBadKey {
            sender: share.sender.clone(),
        })),
    }
}

/// An existing member adds a newcomer without the manager: the host rescales
/// its own private basis by a random nonzero `t`. The newcomer can derive
/// the group key (the span is unchanged) but cannot pass identity
/// verification, since its scaling no longer matches `f` at any key the
/// manager issued.
pub fn delegate_credential_as<R: Rng + ?Sized>(
    host: &Credential,
    public_key: Scalar,
    rng: &mut R,
) -> Result<Credential, ProtocolError> {
    let t = sample_nonzero_integer(rng);
    let basis = host.private_basis().scale(&t)?;
    Credential::from_parts(
        public_key,
        basis,
        Provenance::Delegated { host_public_key: host.public_key().clone() },
    )
}

/// [`delegate_credential_as`] with a fresh random public key for the
/// newcomer.
pub fn delegate_credential<R: Rng + ?Sized>(
    host: &Credential,
    rng: &mut R,
) -> Result<Credential, ProtocolError> {
    let public_key = sample_nonzero_integer(rng);
    delegate_credential_as(host, public_key, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactmath::{rank, Basis};
    use crate::protocol::{gm_setup, issue_credential, GroupSecret};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn s(text: &str) -> Scalar {
        text.parse().unwrap()
    }

    fn keys(values: &[i64]) -> Vec<Scalar> {
        values.iter().map(|&v| Scalar::from_integer(v)).collect()
    }

    /// d=3, n=1, B = {(1,0,3)}, f(x) = 2x + 5 — the worked example setup.
    fn example_secret() -> GroupSecret {
        GroupSecret::from_parts(
            Basis::new(vec![Vector::from_integers(&[1, 0, 3])]).unwrap(),
            s("2"),
            s("5"),
        )
        .unwrap()
    }

    fn example_params(roster: &[i64]) -> SessionParams {
        SessionParams::new(
            Vector::from_integers(&[1, 2, 3]),
            Vector::from_integers(&[2, 3, 4]),
            Vector::from_integers(&[1, 1, 1]),
            keys(roster),
            1,
        )
        .unwrap()
    }

    #[test]
    fn lagrange_singleton_is_one() {
        assert_eq!(lagrange_coefficient(&s("7"), &keys(&[7])).unwrap(), Scalar::one());
    }

    #[test]
    fn lagrange_two_party_hand_values() {
        let roster = keys(&[1, 2]);
        assert_eq!(lagrange_coefficient(&s("1"), &roster).unwrap(), s("2"));
        assert_eq!(lagrange_coefficient(&s("2"), &roster).unwrap(), s("-1"));
        // Cross-check: sum f(x_j) A_j = f(0) for f = 2x + 5.
        let f = |x: i64| Scalar::from_integer(2 * x + 5);
        let total = &(&f(1) * &s("2")) + &(&f(2) * &s("-1"));
        assert_eq!(total, s("5"));
    }

    #[test]
    fn lagrange_reconstructs_f0_for_random_linear_polynomials() {
        // Direct polynomial-evaluation oracle over roster {1, 2, 3}.
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let roster = keys(&[1, 2, 3]);
        for _ in 0..50 {
            let a = sample_nonzero_integer(&mut rng);
            let b = sample_nonzero_integer(&mut rng);
            let f = |x: &Scalar| &(&a * x) + &b;
            let mut total = Scalar::zero();
            for x in &roster {
                total += &(&f(x) * &lagrange_coefficient(x, &roster).unwrap());
            }
            assert_eq!(total, b);
        }
    }

    #[test]
    fn lagrange_rejects_duplicates_and_strangers() {
        assert!(matches!(
            lagrange_coefficient(&s("1"), &keys(&[1, 1])),
            Err(ProtocolError::InvalidRoster)
        ));
        assert!(matches!(
            lagrange_coefficient(&s("9"), &keys(&[1, 2])),
            Err(ProtocolError::NotInRoster(_))
        ));
    }

    #[test]
    fn group_key_matches_hand_projection() {
        // d=3, n=2, B = {e1, e2}, v = (1,1,1), h = (2,3,4): s = <(1,1,0), h> = 5.
        let secret = GroupSecret::from_parts(
            Basis::new(vec![Vector::from_integers(&[1, 0, 0]), Vector::from_integers(&[0, 1, 0])])
                .unwrap(),
            s("3"),
            s("1"),
        )
        .unwrap();
        let params = SessionParams::new(
            Vector::from_integers(&[1, 1, 1]),
            Vector::from_integers(&[2, 3, 4]),
            Vector::from_integers(&[1, 1, 1]),
            keys(&[1, 2]),
            1,
        )
        .unwrap();
        let cred = issue_credential(&secret, &s("1")).unwrap();
        let key = derive_group_key(&cred, &params).unwrap();
        assert_eq!(key.s(), &s("5"));
        assert_eq!(gm_group_key(&secret, &params).unwrap(), key);
    }

    #[test]
    fn group_key_is_identical_across_members_and_delegates() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let secret = gm_setup(&mut rng, 6, 3).unwrap();
        let params =
            SessionParams::sample(&secret, keys(&[1, 2, 3]), 1, &mut rng).unwrap();
        let cred_1 = issue_credential(&secret, &s("1")).unwrap();
        let cred_2 = issue_credential(&secret, &s("2")).unwrap();
        let delegated = delegate_credential(&cred_2, &mut rng).unwrap();

        let k1 = derive_group_key(&cred_1, &params).unwrap();
        let k2 = derive_group_key(&cred_2, &params).unwrap();
        let kd = derive_group_key(&delegated, &params).unwrap();
        assert_eq!(k1.s(), k2.s());
        assert_eq!(k1.s(), kd.s());
    }

    #[test]
    fn group_key_fixes_vectors_already_in_subspace() {
        let secret = example_secret();
        // v in W: projection returns v itself, so s = <v, h>.
        let v = Vector::from_integers(&[2, 0, 6]);
        let h = Vector::from_integers(&[1, 1, 1]);
        let params =
            SessionParams::new(v.clone(), h.clone(), Vector::from_integers(&[1, 1, 1]), keys(&[1]), 1)
                .unwrap();
        let cred = issue_credential(&secret, &s("1")).unwrap();
        let key = derive_group_key(&cred, &params).unwrap();
        assert_eq!(key.s(), &inner_product(&v, &h).unwrap());
    }

    #[test]
    fn shares_match_hand_computation() {
        let secret = example_secret();
        let params = example_params(&[1, 2]);
        let cred_1 = issue_credential(&secret, &s("1")).unwrap();
        let cred_2 = issue_credential(&secret, &s("2")).unwrap();
        // f(1) = 7, A_1 = 2, <v_1, g> = 4: share 56. f(2) = 9, A_2 = -1: -36.
        assert_eq!(compute_share(&cred_1, &params).unwrap(), s("56"));
        assert_eq!(compute_share(&cred_2, &params).unwrap(), s("-36"));
        // The sum telescopes to f(0) * <v_1, g> = 5 * 4.
        assert_eq!(gm_expected_value(&secret, &params).unwrap(), s("20"));
    }

    #[test]
    fn share_is_zero_when_nonce_orthogonal_to_basis_vector() {
        let secret = example_secret();
        // g = (3, 9, -1) is orthogonal to v_1 = (1, 0, 3).
        let params = SessionParams::new(
            Vector::from_integers(&[1, 2, 3]),
            Vector::from_integers(&[2, 3, 4]),
            Vector::from_integers(&[3, 9, -1]),
            keys(&[1, 2]),
            1,
        )
        .unwrap();
        let cred = issue_credential(&secret, &s("1")).unwrap();
        assert_eq!(compute_share(&cred, &params).unwrap(), Scalar::zero());
        assert_eq!(gm_expected_value(&secret, &params).unwrap(), Scalar::zero());
    }

    #[test]
    fn share_errors() {
        let secret = example_secret();
        let cred = issue_credential(&secret, &s("1")).unwrap();
        let params = example_params(&[2, 3]);
        assert!(matches!(compute_share(&cred, &params), Err(ProtocolError::NotInRoster(_))));
        let bad_index = SessionParams::new(
            Vector::from_integers(&[1, 2, 3]),
            Vector::from_integers(&[2, 3, 4]),
            Vector::from_integers(&[1, 1, 1]),
            keys(&[1, 2]),
            4,
        )
        .unwrap();
        assert!(matches!(
            compute_share(&cred, &bad_index),
            Err(ProtocolError::BasisIndexOutOfRange { index: 4, dim: 1 })
        ));
    }

    #[test]
    fn encryption_round_trips_and_authenticates() {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        let key = GroupKey::from_scalar(s("22/7"));
        let contribution = s("-56/3");
        let sender = s("4");
        let share = encrypt_share(&key, &contribution, &sender, &mut rng);
        assert_eq!(decrypt_share(&key, &share).unwrap(), contribution);

        // A different group key fails the tag.
        let other = GroupKey::from_scalar(s("22/9"));
        assert_eq!(decrypt_share(&other, &share), Err(ShareError::AuthFailed));

        // Tampering one ciphertext byte fails the tag.
        let mut tampered = share.clone();
        tampered.ciphertext_and_tag[0] ^= 0x01;
        assert_eq!(decrypt_share(&key, &tampered), Err(ShareError::AuthFailed));

        // Claiming a different sender breaks the associated data.
        let mut resent = share.clone();
        resent.sender = s("5");
        assert_eq!(decrypt_share(&key, &resent), Err(ShareError::AuthFailed));
    }

    #[test]
    fn decryption_rejects_non_canonical_plaintext() {
        use chacha20poly1305::aead::{Aead, KeyInit, Payload};
        use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};

        let key = GroupKey::from_scalar(s("5"));
        let sender = s("3");
        let cipher = ChaCha20Poly1305::new(&Key::from(*key.key_bytes()));
        let nonce = [7u8; 12];
        let ciphertext_and_tag = cipher
            .encrypt(
                &Nonce::from(nonce),
                Payload { msg: &[0xff, 0x01, 0x02], aad: &sender.to_canonical_bytes() },
            )
            .unwrap();
        let share = AuthShare { sender, nonce, ciphertext_and_tag };
        assert_eq!(decrypt_share(&key, &share), Err(ShareError::MalformedPlaintext));
    }

    #[test]
    fn wire_bytes_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        let key = GroupKey::from_scalar(s("9"));
        let share = encrypt_share(&key, &s("123/5"), &s("2"), &mut rng);
        let wire = share.to_wire_bytes();
        assert_eq!(AuthShare::from_wire_bytes(&wire).unwrap(), share);
        assert!(AuthShare::from_wire_bytes(&wire[..10]).is_err());
    }

    #[test]
    fn wire_types_round_trip_through_json() {
        let mut rng = ChaCha20Rng::seed_from_u64(44);
        let secret = gm_setup(&mut rng, 4, 2).unwrap();
        let cred = issue_credential(&secret, &s("6")).unwrap();
        let params = SessionParams::sample(&secret, keys(&[6, 7]), 2, &mut rng).unwrap();
        let key = derive_group_key(&cred, &params).unwrap();
        let share = encrypt_share(&key, &compute_share(&cred, &params).unwrap(), &s("6"), &mut rng);

        let cred_json = serde_json::to_string(&cred).unwrap();
        assert_eq!(serde_json::from_str::<Credential>(&cred_json).unwrap(), cred);
        let params_json = serde_json::to_string(&params).unwrap();
        assert_eq!(serde_json::from_str::<SessionParams>(&params_json).unwrap(), params);
        let share_json = serde_json::to_string(&share).unwrap();
        assert_eq!(serde_json::from_str::<AuthShare>(&share_json).unwrap(), share);
        // Byte fields travel as base64 strings.
        let value: serde_json::Value = serde_json::from_str(&share_json).unwrap();
        assert!(value["nonce"].is_string());
        assert!(value["ciphertext_and_tag"].is_string());
    }

    #[test]
    fn zero_constant_term_is_allowed_and_verifiable() {
        // f(x) = 3x has f(0) = 0: the expected sum is zero, yet singleton
        // identity checks stay meaningful through f(x_j).
        let secret = GroupSecret::from_parts(
            Basis::new(vec![Vector::from_integers(&[1, 0, 3])]).unwrap(),
            s("3"),
            Scalar::zero(),
        )
        .unwrap();
        let params = example_params(&[1, 2]);
        assert_eq!(gm_expected_value(&secret, &params).unwrap(), Scalar::zero());

        let mut rng = ChaCha20Rng::seed_from_u64(45);
        let key = gm_group_key(&secret, &params).unwrap();
        let shares: Vec<_> = keys(&[1, 2])
            .iter()
            .map(|x| {
                let cred = issue_credential(&secret, x).unwrap();
                encrypt_share(&key, &compute_share(&cred, &params).unwrap(), x, &mut rng)
            })
            .collect();
        assert_eq!(gm_verify(&secret, &params, &shares, &key).unwrap(), VerifyOutcome::Accept);

        let single = SessionParams::sample(&secret, keys(&[1]), 1, &mut rng).unwrap();
        let cred = issue_credential(&secret, &s("1")).unwrap();
        let single_key = derive_group_key(&cred, &single).unwrap();
        let share =
            encrypt_share(&single_key, &compute_share(&cred, &single).unwrap(), &s("1"), &mut rng);
        assert_eq!(
            gm_verify_single(&secret, &single, &share, &single_key).unwrap(),
            VerifyOutcome::Accept
        );
    }

    fn honest_session(
        secret: &GroupSecret,
        roster: &[i64],
        rng: &mut ChaCha20Rng,
    ) -> (SessionParams, GroupKey, Vec<AuthShare>) {
        let params = SessionParams::sample(secret, keys(roster), 1, rng).unwrap();
        let key = gm_group_key(secret, &params).unwrap();
        let shares = keys(roster)
            .iter()
            .map(|x| {
                let cred = issue_credential(secret, x).unwrap();
                let contribution = compute_share(&cred, &params).unwrap();
                let member_key = derive_group_key(&cred, &params).unwrap();
                assert_eq!(member_key, key);
                encrypt_share(&member_key, &contribution, x, rng)
            })
            .collect();
        (params, key, shares)
    }

    #[test]
    fn gm_verify_accepts_honest_roster() {
        let mut rng = ChaCha20Rng::seed_from_u64(47);
        let secret = gm_setup(&mut rng, 5, 2).unwrap();
        let (params, key, shares) = honest_session(&secret, &[1, 2, 3], &mut rng);
        assert_eq!(gm_verify(&secret, &params, &shares, &key).unwrap(), VerifyOutcome::Accept);
    }

    #[test]
    fn gm_verify_rejects_single_perturbed_contribution() {
        let mut rng = ChaCha20Rng::seed_from_u64(53);
        let secret = gm_setup(&mut rng, 5, 2).unwrap();
        let (params, key, mut shares) = honest_session(&secret, &[1, 2, 3], &mut rng);
        let honest = decrypt_share(&key, &shares[1]).unwrap();
        shares[1] = encrypt_share(&key, &(&honest + &Scalar::one()), &s("2"), &mut rng);
        assert_eq!(
            gm_verify(&secret, &params, &shares, &key).unwrap(),
            VerifyOutcome::Reject { reason: RejectReason::SumMismatch }
        );
    }

    #[test]
    fn gm_verify_rejects_outsider_encrypting_under_self_invented_key() {
        let mut rng = ChaCha20Rng::seed_from_u64(59);
        let secret = gm_setup(&mut rng, 5, 2).unwrap();
        let (params, key, mut shares) = honest_session(&secret, &[1, 2, 3], &mut rng);
        // The outsider invents a basis, derives a different group key, and
        // encrypts a plausible-looking contribution under it.
        let fake_basis = crate::exactmath::sample_basis(&mut rng, 5, 2).unwrap();
        let fake_cred = Credential::from_parts(s("3"), fake_basis, Provenance::GmIssued).unwrap();
        let fake_key = derive_group_key(&fake_cred, &params).unwrap();
        assert_ne!(fake_key, key);
        let fake_contribution = compute_share(&fake_cred, &params).unwrap();
        shares[2] = encrypt_share(&fake_key, &fake_contribution, &s("3"), &mut rng);
        assert_eq!(
            gm_verify(&secret, &params, &shares, &key).unwrap(),
            VerifyOutcome::Reject { reason: RejectReason::OutsiderOrBadKey { sender: s("3") } }
        );
    }

    #[test]
    fn gm_verify_rejects_malformed_sessions() {
        let mut rng = ChaCha20Rng::seed_from_u64(61);
        let secret = gm_setup(&mut rng, 5, 2).unwrap();
        let (params, key, mut shares) = honest_session(&secret, &[1, 2, 3], &mut rng);
        let dropped = shares.split_off(2);
        assert_eq!(
            gm_verify(&secret, &params, &shares, &key).unwrap(),
            VerifyOutcome::Reject { reason: RejectReason::MalformedSession }
        );
        shares.extend(dropped);
        shares[0].sender = s("2"); // duplicate sender
        assert_eq!(
            gm_verify(&secret, &params, &shares, &key).unwrap(),
            VerifyOutcome::Reject { reason: RejectReason::MalformedSession }
        );
    }

    #[test]
    fn replayed_share_from_an_earlier_session_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(67);
        let secret = gm_setup(&mut rng, 5, 2).unwrap();
        let (old_params, old_key, old_shares) = honest_session(&secret, &[1, 2, 3], &mut rng);

        // A later session keeps v/h (so the group key is unchanged) but gets
        // a fresh nonce vector: the stale contribution decrypts yet no
        // longer sums to the expected value.
        let fresh =
            SessionParams::for_subgroup(&old_params, &secret, keys(&[1, 2, 3]), &mut rng).unwrap();
        assert_ne!(fresh.g(), old_params.g());
        let fresh_key = gm_group_key(&secret, &fresh).unwrap();
        assert_eq!(fresh_key, old_key);
        let mut shares: Vec<AuthShare> = keys(&[1, 2, 3])
            .iter()
            .map(|x| {
                let cred = issue_credential(&secret, x).unwrap();
                encrypt_share(&fresh_key, &compute_share(&cred, &fresh).unwrap(), x, &mut rng)
            })
            .collect();
        shares[0] = old_shares[0].clone();
        assert!(decrypt_share(&fresh_key, &old_shares[0]).is_ok());
        assert_eq!(
            gm_verify(&secret, &fresh, &shares, &fresh_key).unwrap(),
            VerifyOutcome::Reject { reason: RejectReason::SumMismatch }
        );

        // A replay across sessions with different v/h (here: a different
        // group altogether) fails the tag instead.
        let other_secret = gm_setup(&mut ChaCha20Rng::seed_from_u64(99), 5, 2).unwrap();
        let mut foreign = shares.clone();
        let foreign_cred = issue_credential(&other_secret, &s("1")).unwrap();
        foreign[0] = encrypt_share(
            &derive_group_key(&foreign_cred, &fresh).unwrap(),
            &compute_share(&foreign_cred, &fresh).unwrap(),
            &s("1"),
            &mut rng,
        );
        assert_eq!(
            gm_verify(&secret, &fresh, &foreign, &fresh_key).unwrap(),
            VerifyOutcome::Reject { reason: RejectReason::OutsiderOrBadKey { sender: s("1") } }
        );
    }

    #[test]
    fn gm_verify_single_accepts_genuine_member() {
        let mut rng = ChaCha20Rng::seed_from_u64(71);
        let secret = gm_setup(&mut rng, 5, 2).unwrap();
        let params = SessionParams::sample(&secret, keys(&[4]), 1, &mut rng).unwrap();
        let cred = issue_credential(&secret, &s("4")).unwrap();
        let key = derive_group_key(&cred, &params).unwrap();
        let share = encrypt_share(&key, &compute_share(&cred, &params).unwrap(), &s("4"), &mut rng);
        assert_eq!(gm_verify_single(&secret, &params, &share, &key).unwrap(), VerifyOutcome::Accept);
    }

    #[test]
    fn gm_verify_single_rejects_delegated_and_bogus() {
        let mut rng = ChaCha20Rng::seed_from_u64(73);
        let secret = gm_setup(&mut rng, 5, 2).unwrap();
        let host = issue_credential(&secret, &s("1")).unwrap();
        let delegated = delegate_credential_as(&host, s("9"), &mut rng).unwrap();

        let params = SessionParams::sample(&secret, keys(&[9]), 1, &mut rng).unwrap();
        let key = derive_group_key(&delegated, &params).unwrap();
        assert_eq!(key, gm_group_key(&secret, &params).unwrap());
        let share =
            encrypt_share(&key, &compute_share(&delegated, &params).unwrap(), &s("9"), &mut rng);
        assert_eq!(
            gm_verify_single(&secret, &params, &share, &key).unwrap(),
            VerifyOutcome::Reject { reason: RejectReason::SumMismatch }
        );

        // A genuine member sending a perturbed value also fails.
        let params_1 = SessionParams::sample(&secret, keys(&[1]), 1, &mut rng).unwrap();
        let honest = compute_share(&host, &params_1).unwrap();
        let key_1 = derive_group_key(&host, &params_1).unwrap();
        let bogus = encrypt_share(&key_1, &(&honest + &Scalar::one()), &s("1"), &mut rng);
        assert_eq!(
            gm_verify_single(&secret, &params_1, &bogus, &key_1).unwrap(),
            VerifyOutcome::Reject { reason: RejectReason::SumMismatch }
        );
    }

    #[test]
    fn delegated_credentials_span_the_subspace() {
        let mut rng = ChaCha20Rng::seed_from_u64(79);
        let secret = gm_setup(&mut rng, 6, 3).unwrap();
        let host = issue_credential(&secret, &s("2")).unwrap();
        let delegated = delegate_credential(&host, &mut rng).unwrap();
        assert_eq!(
            delegated.provenance(),
            &Provenance::Delegated { host_public_key: s("2") }
        );
        let mut union = delegated.private_basis().vectors().to_vec();
        union.extend_from_slice(host.private_basis().vectors());
        assert_eq!(rank(&union).unwrap(), secret.dim());
    }

    #[test]
    fn session_construction_validates_roster() {
        let v = Vector::from_integers(&[1, 2, 3]);
        let short = Vector::from_integers(&[1, 2]);
        assert!(matches!(
            SessionParams::new(v.clone(), v.clone(), v.clone(), vec![], 1),
            Err(ProtocolError::EmptyRoster)
        ));
        assert!(matches!(
            SessionParams::new(v.clone(), v.clone(), v.clone(), keys(&[1, 1]), 1),
            Err(ProtocolError::InvalidRoster)
        ));
        assert!(matches!(
            SessionParams::new(v.clone(), v.clone(), v.clone(), keys(&[0]), 1),
            Err(ProtocolError::InvalidRoster)
        ));
        assert!(matches!(
            SessionParams::new(v.clone(), v.clone(), short, keys(&[1]), 1),
            Err(ProtocolError::ParamDimensionMismatch { .. })
        ));
        assert!(matches!(
            SessionParams::new(v.clone(), v.clone(), v, keys(&[1]), 0),
            Err(ProtocolError::BasisIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn assemble_resamples_nonce_orthogonal_to_basis_vector() {
        // Rig the draw: peek at the nonce vector `assemble` would sample
        // first, then pick the secret basis orthogonal to it.
        let seed = 2024u64;
        let mut peek = ChaCha20Rng::seed_from_u64(seed);
        let first_g = sample_vector(&mut peek, 2);
        let c = first_g.components();
        let orthogonal = Vector::new(vec![c[1].clone(), -&c[0]]);
        let secret = GroupSecret::from_parts(
            Basis::new(vec![orthogonal.clone()]).unwrap(),
            s("2"),
            s("5"),
        )
        .unwrap();
        assert!(inner_product(&orthogonal, &first_g).unwrap().is_zero());

        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let params = SessionParams::assemble(
            &secret,
            Vector::from_integers(&[1, 2]),
            Vector::from_integers(&[3, 4]),
            keys(&[1]),
            1,
            &mut rng,
        )
        .unwrap();
        assert_ne!(params.g(), &first_g, "the orthogonal first draw must be resampled");
        assert!(!inner_product(&orthogonal, params.g()).unwrap().is_zero());
    }
}
