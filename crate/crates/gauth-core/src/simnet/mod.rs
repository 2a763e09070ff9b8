//! Deterministic multi-party simulation of the three-channel network model.
//!
//! A scenario fixes the group shape, a seed, the phases to run, and a
//! behavior per participant (honest by default). Running it replays the
//! whole exchange — registration over the secure channel, public parameter
//! broadcast, local key derivation, the blinded share exchange, and
//! optionally malicious-actor detection — through a single-threaded,
//! round-based event loop. Identical scenarios produce byte-identical
//! transcripts.

mod transcript;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{detect_malicious, subgroup_oracle_from_session, DetectionError};
use crate::exactmath::{inner_product, projected_inner_product, sample_basis, sample_vector, Basis, Scalar};
use crate::protocol::{
    compute_share, delegate_credential_as, derive_group_key, encrypt_share, gm_group_key,
    gm_setup, gm_verify, gm_verify_single, issue_credential, lagrange_coefficient, AuthShare,
    Credential, GroupKey, GroupSecret, ProtocolError, SessionParams,
};

pub use transcript::{
    ActorId, DetectSummary, Event, GroupKeySummary, KeygenSummary, MetricsSnapshot, Outcomes,
    Transcript,
};

use transcript::EventLog;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Math(#[from] crate::exactmath::MathError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
}

/// How one participant behaves during the exchange.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActorBehavior {
    /// Follows the protocol.
    Honest,
    /// Holds a genuine credential but submits its contribution shifted by a
    /// nonzero offset (the bogus-share / denial-of-service adversary).
    BogusShare { offset: Scalar },
    /// Never registered: invents a basis from its own seed and plays the
    /// protocol with it (the existential-forgery adversary).
    RandomBasisOutsider { seed: u64 },
    /// Resubmits a previously captured share verbatim.
    Replay { share: AuthShare },
    /// Was added by an existing member instead of the manager; holds a
    /// rescaled copy of the host's basis.
    DelegatedMember { host: Scalar },
}

/// Protocol phases a scenario can run, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Keygen,
    GroupKey,
    Auth,
    Detect,
}

/// Who broadcasts the public key-derivation vectors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Broadcaster {
    #[default]
    Gm,
    Member(Scalar),
}

fn default_basis_index() -> usize {
    1
}

/// A complete scenario description; serializable as the scenario file format.
/// Participants carry public keys `1..=roster_size`; `behaviors` maps the
/// decimal key to a behavior, with absent members honest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub d: usize,
    pub n: usize,
    pub roster_size: usize,
    #[serde(default)]
    pub behaviors: BTreeMap<String, ActorBehavior>,
    pub seed: u64,
    pub phases: Vec<Phase>,
    #[serde(default)]
    pub broadcaster: Broadcaster,
    #[serde(default = "default_basis_index")]
    pub basis_index: usize,
}

impl Scenario {
    /// An all-honest scenario running the full pipeline except detection.
    pub fn honest(d: usize, n: usize, roster_size: usize, seed: u64) -> Self {
        Scenario {
            d,
            n,
            roster_size,
            behaviors: BTreeMap::new(),
            seed,
            phases: vec![Phase::Keygen, Phase::GroupKey, Phase::Auth],
            broadcaster: Broadcaster::Gm,
            basis_index: 1,
        }
    }

    pub fn with_behavior(mut self, key: i64, behavior: ActorBehavior) -> Self {
        self.behaviors.insert(key.to_string(), behavior);
        self
    }

    pub fn with_phases(mut self, phases: Vec<Phase>) -> Self {
        self.phases = phases;
        self
    }

    fn roster(&self) -> Vec<Scalar> {
        (1..=self.roster_size as i64).map(Scalar::from_integer).collect()
    }

    /// Full config validation; nothing runs unless this passes.
    fn resolve(&self) -> Result<BTreeMap<Scalar, ActorBehavior>, SimError> {
        let bad = |msg: String| SimError::InvalidScenario(msg);
        if self.n == 0 || self.n >= self.d {
            return Err(bad(format!("need 1 <= n < d, got n={} d={}", self.n, self.d)));
        }
        if self.roster_size == 0 {
            return Err(bad("roster_size must be at least 1".into()));
        }
        if self.basis_index == 0 || self.basis_index > self.n {
            return Err(bad(format!(
                "basis_index {} out of range 1..={}",
                self.basis_index, self.n
            )));
        }
        if self.phases.is_empty() {
            return Err(bad("phases must be nonempty".into()));
        }
        if !self.phases.windows(2).all(|w| w[0] < w[1]) {
            return Err(bad("phases must be listed once each, in protocol order".into()));
        }
        if self.phases[0] != Phase::Keygen {
            return Err(bad("every scenario starts with the keygen phase".into()));
        }
        let has = |p: Phase| self.phases.contains(&p);
        if (has(Phase::Auth) || has(Phase::Detect)) && !has(Phase::GroupKey) {
            return Err(bad("auth and detect phases require the group_key phase".into()));
        }

        let roster = self.roster();
        let mut resolved: BTreeMap<Scalar, ActorBehavior> =
            roster.iter().map(|x| (x.clone(), ActorBehavior::Honest)).collect();
        for (key_text, behavior) in &self.behaviors {
            let key: Scalar = key_text
                .parse()
                .map_err(|_| bad(format!("behavior key {key_text:?} is not an integer")))?;
            if !resolved.contains_key(&key) {
                return Err(bad(format!("behavior key {key_text} is not in the roster")));
            }
            match behavior {
                ActorBehavior::BogusShare { offset } if offset.is_zero() => {
                    return Err(bad(format!("bogus_share offset for {key_text} must be nonzero")));
                }
                ActorBehavior::DelegatedMember { host } => {
                    if *host == key {
                        return Err(bad(format!("member {key_text} cannot delegate itself")));
                    }
                    if !roster.contains(host) {
                        return Err(bad(format!("delegation host {host} is not in the roster")));
                    }
                    let host_behavior =
                        self.behaviors.get(&host.to_string()).unwrap_or(&ActorBehavior::Honest);
                    if matches!(
                        host_behavior,
                        ActorBehavior::RandomBasisOutsider { .. }
                            | ActorBehavior::DelegatedMember { .. }
                    ) {
                        return Err(bad(format!(
                            "delegation host {host} holds no manager-issued credential"
                        )));
                    }
                }
                _ => {}
            }
            resolved.insert(key, behavior.clone());
        }
        if let Broadcaster::Member(key) = &self.broadcaster {
            if !roster.contains(key) {
                return Err(bad(format!("broadcaster {key} is not in the roster")));
            }
        }
        Ok(resolved)
    }
}

/// Everything the run produced besides the transcript; handy for tests that
/// need to look at the secrets (for example the channel-leak scan).
pub struct SimState {
    pub secret: GroupSecret,
    pub credentials: BTreeMap<Scalar, Credential>,
    pub outsider_bases: BTreeMap<Scalar, Basis>,
    pub session: Option<SessionParams>,
}

/// Runs a scenario to completion, producing the transcript.
pub fn run_scenario(sc: &Scenario) -> Result<Transcript, SimError> {
    run_scenario_with_state(sc).map(|(t, _)| t)
}

/// Reruns the scenario and byte-compares the serialized transcripts.
pub fn replay_transcript(t: &Transcript, sc: &Scenario) -> Result<bool, SimError> {
    Ok(run_scenario(sc)?.to_jsonl() == t.to_jsonl())
}

pub fn run_scenario_with_state(sc: &Scenario) -> Result<(Transcript, SimState), SimError> {
    let behaviors = sc.resolve()?;
    let roster = sc.roster();
    let has = |p: Phase| sc.phases.contains(&p);
    let mut rng = ChaCha20Rng::seed_from_u64(sc.seed);
    let mut log = EventLog::default();
    let mut outcomes = Outcomes::default();

    // --- keygen: registration over the secure channel -------------------
    let secret = gm_setup(&mut rng, sc.d, sc.n)?;
    let mut credentials: BTreeMap<Scalar, Credential> = BTreeMap::new();
    let mut outsider_bases: BTreeMap<Scalar, Basis> = BTreeMap::new();
    let mut delegations: Vec<(Scalar, Scalar)> = Vec::new();
    for x in &roster {
        match &behaviors[x] {
            ActorBehavior::Honest | ActorBehavior::BogusShare { .. } | ActorBehavior::Replay { .. } => {
                let cred = issue_credential(&secret, x)?;
                log.record(
                    Phase::Keygen,
                    1,
                    ActorId::Gm,
                    ActorId::Member(x.clone()),
                    "issue_credential",
                    serde_json::to_vec(&cred).expect("credential serialization"),
                );
                credentials.insert(x.clone(), cred);
            }
            ActorBehavior::RandomBasisOutsider { seed } => {
                let mut forge_rng = ChaCha20Rng::seed_from_u64(*seed);
                outsider_bases.insert(x.clone(), sample_basis(&mut forge_rng, sc.d, sc.n)?);
            }
            ActorBehavior::DelegatedMember { host } => {
                delegations.push((x.clone(), host.clone()));
            }
        }
    }
    for (x, host) in &delegations {
        let host_cred = credentials
            .get(host)
            .expect("validation guarantees the host holds a manager-issued credential");
        let cred = delegate_credential_as(host_cred, x.clone(), &mut rng)?;
        // Delegation is a registration-class message, so it rides the
        // dedicated line rather than the open channels.
        log.record(
            Phase::Keygen,
            1,
            ActorId::Member(host.clone()),
            ActorId::Member(x.clone()),
            "delegate_credential",
            serde_json::to_vec(&cred).expect("credential serialization"),
        );
        credentials.insert(x.clone(), cred);
    }
    outcomes.keygen = Some(KeygenSummary {
        gm_issued: credentials.len() - delegations.len(),
        delegated: delegations.len(),
        outsiders: outsider_bases.len(),
    });

    // --- group_key: broadcast v/h, everyone derives locally -------------
    let mut session: Option<SessionParams> = None;
    let mut member_keys: BTreeMap<Scalar, GroupKey> = BTreeMap::new();
    let mut gm_key: Option<GroupKey> = None;
    if has(Phase::GroupKey) {
        let v = sample_vector(&mut rng, sc.d);
        let h = sample_vector(&mut rng, sc.d);
        let params = SessionParams::assemble(
            &secret,
            v.clone(),
            h.clone(),
            roster.clone(),
            sc.basis_index,
            &mut rng,
        )?;
        // Manager broadcasts ride the manager<->member channel; a member
        // broadcasting to its peers uses the member<->member channel.
        let (broadcaster, channel) = match &sc.broadcaster {
            Broadcaster::Gm => (ActorId::Gm, 2),
            Broadcaster::Member(key) => (ActorId::Member(key.clone()), 3),
        };
        log.record(Phase::GroupKey, channel, broadcaster.clone(), ActorId::All, "publish_v", v.to_canonical_bytes());
        log.record(Phase::GroupKey, channel, broadcaster, ActorId::All, "publish_h", h.to_canonical_bytes());

        let manager_key = gm_group_key(&secret, &params)?;
        let mut agreeing = 0usize;
        let mut divergent = Vec::new();
        for x in &roster {
            let key = match credentials.get(x) {
                Some(cred) => derive_group_key(cred, &params)?,
                None => {
                    let basis = &outsider_bases[x];
                    let s = projected_inner_product(params.v(), basis, params.h())?;
                    GroupKey::from_scalar(s)
                }
            };
            if key == manager_key {
                agreeing += 1;
            } else {
                divergent.push(x.clone());
            }
            member_keys.insert(x.clone(), key);
        }
        outcomes.group_key = Some(GroupKeySummary {
            consistent: agreeing == credentials.len() && divergent.len() == outsider_bases.len(),
            members_agreeing: agreeing,
            divergent,
        });
        session = Some(params);
        gm_key = Some(manager_key);
    }

    // --- auth: the four-part exchange ------------------------------------
    if has(Phase::Auth) {
        let params = session.as_ref().expect("auth phase requires group_key");
        let key = gm_key.as_ref().expect("auth phase requires group_key");
        log.record(Phase::Auth, 2, ActorId::Gm, ActorId::All, "publish_g", params.g().to_canonical_bytes());

        let mut shares = Vec::with_capacity(roster.len());
        for x in &roster {
            let share = actor_share(
                x,
                &behaviors[x],
                &credentials,
                &outsider_bases,
                &member_keys,
                params,
                &mut rng,
            )?;
            log.record(
                Phase::Auth,
                2,
                ActorId::Member(x.clone()),
                ActorId::Gm,
                "auth_share",
                share.to_wire_bytes(),
            );
            shares.push(share);
        }
        let outcome = if roster.len() == 1 {
            gm_verify_single(&secret, params, &shares[0], key)?
        } else {
            gm_verify(&secret, params, &shares, key)?
        };
        log.record(
            Phase::Auth,
            2,
            ActorId::Gm,
            ActorId::All,
            "auth_verdict",
            serde_json::to_vec(&outcome).expect("verdict serialization"),
        );
        outcomes.auth = Some(outcome);
    }

    // --- detect: recursive subgroup re-authentication --------------------
    if has(Phase::Detect) {
        let params = session.as_ref().expect("detect phase requires group_key");
        let mut share_rng = ChaCha20Rng::seed_from_u64(sc.seed ^ 0x5ea1_ed00_dead_beef);
        let share_for = |x: &Scalar, query: &SessionParams| {
            actor_share(
                x,
                &behaviors[x],
                &credentials,
                &outsider_bases,
                &member_keys,
                query,
                &mut share_rng,
            )
        };
        let mut oracle = subgroup_oracle_from_session(
            &secret,
            params.v().clone(),
            params.h().clone(),
            sc.basis_index,
            sc.seed ^ 0x00de_7ec7_0000_0001,
            share_for,
        );
        let report = detect_malicious(&roster, &mut oracle)?;
        for call in &report.call_log {
            log.record(
                Phase::Detect,
                2,
                ActorId::Gm,
                ActorId::All,
                "detect_query",
                serde_json::to_vec(call).expect("call serialization"),
            );
        }
        let summary = DetectSummary {
            malicious: report.malicious.iter().cloned().collect(),
            oracle_calls: report.oracle_calls,
            call_log: report.call_log,
        };
        log.record(
            Phase::Detect,
            2,
            ActorId::Gm,
            ActorId::All,
            "detect_report",
            serde_json::to_vec(&summary).expect("summary serialization"),
        );
        outcomes.detect = Some(summary);
    }

    let transcript = Transcript {
        events: log.into_events(),
        outcomes,
        metrics: MetricsSnapshot::new(sc.roster_size, sc.d, sc.n),
    };
    let state = SimState { secret, credentials, outsider_bases, session };
    Ok((transcript, state))
}

/// Produces participant `x`'s share for the given session parameters
/// according to its behavior. Used identically by the auth phase and by
/// every detection sub-session.
fn actor_share(
    x: &Scalar,
    behavior: &ActorBehavior,
    credentials: &BTreeMap<Scalar, Credential>,
    outsider_bases: &BTreeMap<Scalar, Basis>,
    member_keys: &BTreeMap<Scalar, GroupKey>,
    params: &SessionParams,
    rng: &mut ChaCha20Rng,
) -> Result<AuthShare, ProtocolError> {
    let key = &member_keys[x];
    match behavior {
        ActorBehavior::Honest | ActorBehavior::DelegatedMember { .. } => {
            let contribution = compute_share(&credentials[x], params)?;
            Ok(encrypt_share(key, &contribution, x, rng))
        }
        ActorBehavior::BogusShare { offset } => {
            let contribution = &compute_share(&credentials[x], params)? + offset;
            Ok(encrypt_share(key, &contribution, x, rng))
        }
        ActorBehavior::RandomBasisOutsider { .. } => {
            // Mimics an honest participant with a self-invented basis.
            let basis = &outsider_bases[x];
            let b_i = basis.get(params.basis_index() - 1).ok_or(
                ProtocolError::BasisIndexOutOfRange {
                    index: params.basis_index(),
                    dim: basis.dim(),
                },
            )?;
            let coeff = lagrange_coefficient(x, params.roster())?;
            let contribution = &coeff * &inner_product(b_i, params.g())?;
            Ok(encrypt_share(key, &contribution, x, rng))
        }
        ActorBehavior::Replay { share } => Ok(share.clone()),
    }
}
