//! Shared instance builders for the benchmark targets.

use gauth_core::protocol::{
    compute_share, derive_group_key, encrypt_share, gm_group_key, gm_setup, issue_credential,
    AuthShare, Credential, GroupKey, GroupSecret, SessionParams,
};
use gauth_core::{seeded_rng, Scalar};

pub struct BenchInstance {
    pub secret: GroupSecret,
    pub roster: Vec<Scalar>,
    pub params: SessionParams,
    pub creds: Vec<Credential>,
    pub key: GroupKey,
}

/// A deterministic all-honest instance with roster `1..=m`.
pub fn instance(m: usize, d: usize, n: usize, seed: u64) -> BenchInstance {
    let mut rng = seeded_rng(seed);
    let secret = gm_setup(&mut rng, d, n).expect("bench setup");
    let roster: Vec<Scalar> = (1..=m as i64).map(Scalar::from_integer).collect();
    let params = SessionParams::sample(&secret, roster.clone(), 1, &mut rng).expect("bench session");
    let creds: Vec<Credential> =
        roster.iter().map(|x| issue_credential(&secret, x).expect("bench issue")).collect();
    let key = gm_group_key(&secret, &params).expect("bench key");
    BenchInstance { secret, roster, params, creds, key }
}

/// Every participant's encrypted share for the instance.
pub fn all_shares(inst: &BenchInstance, seed: u64) -> Vec<AuthShare> {
    let mut rng = seeded_rng(seed);
    inst.creds
        .iter()
        .zip(&inst.roster)
        .map(|(cred, x)| {
            let key = derive_group_key(cred, &inst.params).expect("bench member key");
            let contribution = compute_share(cred, &inst.params).expect("bench share");
            encrypt_share(&key, &contribution, x, &mut rng)
        })
        .collect()
}
