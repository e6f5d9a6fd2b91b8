//! SHA-256 digests binding outputs to the inputs they were computed from.

use pairdesign_core::{Sample, Stratification};
use sha2::{Digest, Sha256};

fn finish(h: Sha256) -> String {
    hex::encode(h.finalize())
}

fn put_str(h: &mut Sha256, s: &str) {
    h.update((s.len() as u64).to_le_bytes());
    h.update(s.as_bytes());
}

/// Digest of the unit ids, covariate names and covariate values.
///
/// Outcome, treatment and attrition columns are left out so they can be
/// filled in between pairing and estimation without breaking the chain.
pub fn sample_digest(sample: &Sample) -> String {
    let mut h = Sha256::new();
    h.update(b"pairdesign.sample/1");
    h.update((sample.n_units() as u64).to_le_bytes());
    sample.unit_ids.iter().for_each(|id| put_str(&mut h, id));
    sample.covariate_names.iter().for_each(|c| put_str(&mut h, c));
    for v in sample.covariates.as_slice() {
        h.update(v.to_bits().to_le_bytes());
    }
    finish(h)
}

pub fn stratification_digest(strat: &Stratification) -> String {
    let mut h = Sha256::new();
    h.update(b"pairdesign.stratification/1");
    h.update((strat.n_units as u64).to_le_bytes());
    for (s, &c) in strat.strata.iter().zip(&strat.treated_counts) {
        h.update((s.len() as u64).to_le_bytes());
        s.iter().for_each(|&u| h.update((u as u64).to_le_bytes()));
        h.update((c as u64).to_le_bytes());
    }
    h.update((strat.excluded.len() as u64).to_le_bytes());
    strat.excluded.iter().for_each(|&u| h.update((u as u64).to_le_bytes()));
    finish(h)
}

pub fn bytes_digest(bytes: &[u8]) -> String {
    finish(Sha256::new_with_prefix(bytes))
}
