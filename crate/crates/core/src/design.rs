//! Samples, stratifications and within-stratum treatment assignment.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{substream, Domain};

/// Experimental units with their baseline covariates and, once the trial has
/// run, outcomes, treatment and attrition indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub unit_ids: Vec<String>,
    pub covariate_names: Vec<String>,
    pub covariates: Matrix,
    /// Column of `covariates` holding the baseline value of the outcome.
    pub baseline_col: Option<usize>,
    pub outcomes: Option<Vec<f64>>,
    pub treatment: Option<Vec<u8>>,
    /// `1` = outcome observed at endline.
    pub attrition: Option<Vec<u8>>,
}

fn check_binary(what: &'static str, v: &[u8], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::LengthMismatch { what, expected: n, got: v.len() });
    }
    if v.iter().any(|&b| b > 1) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

impl Sample {
    /// Sample with generated ids `0..n` and columns `x0..x{p-1}`.
    pub fn new(covariates: Matrix) -> Result<Self> {
        let n = covariates.rows();
        let names = (0..covariates.cols()).map(|j| alloc::format!("x{j}")).collect();
        let ids = (0..n).map(|i| alloc::format!("{i}")).collect();
        Self::with_names(ids, names, covariates, None)
    }

    pub fn with_names(
        unit_ids: Vec<String>,
        covariate_names: Vec<String>,
        covariates: Matrix,
        baseline_col: Option<usize>,
    ) -> Result<Self> {
        let n = covariates.rows();
        if n == 0 {
            return Err(Error::InsufficientRows { needed: 1, got: 0 });
        }
        if unit_ids.len() != n {
            return Err(Error::LengthMismatch { what: "unit ids", expected: n, got: unit_ids.len() });
        }
        if covariate_names.len() != covariates.cols() {
            return Err(Error::LengthMismatch {
                what: "covariate names",
                expected: covariates.cols(),
                got: covariate_names.len(),
            });
        }
        if !covariates.all_finite() {
            return Err(Error::NonFinite("covariates"));
        }
        if let Some(col) = baseline_col {
            if col >= covariates.cols() {
                return Err(Error::BadBaselineColumn(col));
            }
        }
        Ok(Self {
            unit_ids,
            covariate_names,
            covariates,
            baseline_col,
            outcomes: None,
            treatment: None,
            attrition: None,
        })
    }

    pub fn with_baseline(mut self, col: usize) -> Result<Self> {
        if col >= self.covariates.cols() {
            return Err(Error::BadBaselineColumn(col));
        }
        self.baseline_col = Some(col);
        Ok(self)
    }

    /// Outcomes may be NaN for units that attrited.
    pub fn with_outcomes(mut self, y: Vec<f64>) -> Result<Self> {
        let n = self.n_units();
        if y.len() != n {
            return Err(Error::LengthMismatch { what: "outcomes", expected: n, got: y.len() });
        }
        self.outcomes = Some(y);
        Ok(self)
    }

    pub fn with_treatment(mut self, d: Vec<u8>) -> Result<Self> {
        check_binary("treatment", &d, self.n_units())?;
        self.treatment = Some(d);
        Ok(self)
    }

    pub fn with_attrition(mut self, a: Vec<u8>) -> Result<Self> {
        check_binary("attrition", &a, self.n_units())?;
        self.attrition = Some(a);
        Ok(self)
    }

    pub fn n_units(&self) -> usize {
        self.covariates.rows()
    }

    pub fn baseline(&self) -> Option<Vec<f64>> {
        self.baseline_col.map(|c| self.covariates.column(c))
    }

    /// Restrict to the given rows, in order.
    pub fn subset(&self, rows: &[usize]) -> Sample {
        let pick_u8 = |v: &Vec<u8>| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Sample {
            unit_ids: rows.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            covariate_names: self.covariate_names.clone(),
            covariates: self.covariates.select_rows(rows),
            baseline_col: self.baseline_col,
            outcomes: self.outcomes.as_ref().map(|v| rows.iter().map(|&i| v[i]).collect()),
            treatment: self.treatment.as_ref().map(pick_u8),
            attrition: self.attrition.as_ref().map(pick_u8),
        }
    }
}

/// A partition of unit indices into strata with a treated count per stratum.
///
/// Strata are kept in construction order: for designs built from a sorted
/// index or from pairing pairs, strata `2j` and `2j + 1` are adjacent and the
/// variance corrections rely on that order. Units listed in `excluded` were
/// removed before stratifying (see [`drop_remainder`]) and belong to no
/// stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratification {
    pub n_units: usize,
    pub strata: Vec<Vec<usize>>,
    pub treated_counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<usize>,
}

impl Stratification {
    /// Strata with `treated` units per stratum; validated.
    pub fn uniform(strata: Vec<Vec<usize>>, treated: usize, n_units: usize) -> Result<Self> {
        let counts = vec![treated; strata.len()];
        validate_stratification(strata, counts, n_units)
    }

    /// One stratum holding every unit, half treated.
    pub fn unstratified(n_units: usize) -> Result<Self> {
        if !n_units.is_multiple_of(2) {
            return Err(Error::OddLength(n_units));
        }
        validate_stratification(vec![(0..n_units).collect()], vec![n_units / 2], n_units)
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn is_pairs(&self) -> bool {
        self.strata.iter().all(|s| s.len() == 2) && self.treated_counts.iter().all(|&c| c == 1)
    }

    pub fn is_balanced_fours(&self) -> bool {
        self.strata.iter().all(|s| s.len() == 4) && self.treated_counts.iter().all(|&c| c == 2)
    }

    /// Included units in ascending order.
    pub fn included(&self) -> Vec<usize> {
        let mut units: Vec<usize> = self.strata.iter().flatten().copied().collect();
        units.sort_unstable();
        units
    }

    /// Remap indices onto the included units only (ascending order), dropping
    /// the excluded set. Returns the kept original indices and the remapped
    /// stratification.
    pub fn compact(&self) -> (Vec<usize>, Stratification) {
        let kept = self.included();
        let mut position = vec![usize::MAX; self.n_units];
        for (new, &old) in kept.iter().enumerate() {
            position[old] = new;
        }
        let strata = self.strata.iter().map(|s| s.iter().map(|&u| position[u]).collect()).collect();
        let strat = Stratification {
            n_units: kept.len(),
            strata,
            treated_counts: self.treated_counts.clone(),
            excluded: Vec::new(),
        };
        (kept, strat)
    }

    /// Lift a stratification built on `kept` (positions `0..kept.len()`) back
    /// to the original index space of `n_units` units.
    pub fn lift(&self, kept: &[usize], n_units: usize) -> Result<Stratification> {
        let strata = self.strata.iter().map(|s| s.iter().map(|&u| kept[u]).collect()).collect();
        let mut excluded: Vec<usize> = {
            let mut in_kept = vec![false; n_units];
            kept.iter().for_each(|&k| in_kept[k] = true);
            (0..n_units).filter(|&i| !in_kept[i]).collect()
        };
        excluded.sort_unstable();
        validate_with_excluded(strata, self.treated_counts.clone(), n_units, excluded)
    }
}

/// Check that `strata` partition `0..n_units` and that every stratum can
/// hold its treated count strictly between zero and its size.
pub fn validate_stratification(
    strata: Vec<Vec<usize>>,
    treated_counts: Vec<usize>,
    n_units: usize,
) -> Result<Stratification> {
    validate_with_excluded(strata, treated_counts, n_units, Vec::new())
}

pub fn validate_with_excluded(
    strata: Vec<Vec<usize>>,
    treated_counts: Vec<usize>,
    n_units: usize,
    excluded: Vec<usize>,
) -> Result<Stratification> {
    if treated_counts.len() != strata.len() {
        return Err(Error::LengthMismatch {
            what: "treated counts",
            expected: strata.len(),
            got: treated_counts.len(),
        });
    }
    let mut seen = vec![false; n_units];
    for &u in strata.iter().flatten().chain(excluded.iter()) {
        if u >= n_units {
            return Err(Error::IndexOutOfRange { index: u, n_units });
        }
        if seen[u] {
            return Err(Error::Overlap(u));
        }
        seen[u] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::Coverage(missing));
    }
    for (s, (stratum, &treated)) in strata.iter().zip(&treated_counts).enumerate() {
        if treated == 0 || treated >= stratum.len() {
            return Err(Error::DegenerateStratum { stratum: s, size: stratum.len(), treated });
        }
    }
    Ok(Stratification { n_units, strata, treated_counts, excluded })
}

/// Choose `n_units % multiple` units uniformly at random to drop, so the
/// remainder divides into strata of size `multiple`. Returns the kept units
/// (ascending) and the dropped ones (ascending).
pub fn drop_remainder(n_units: usize, multiple: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let extra = if multiple == 0 { 0 } else { n_units % multiple };
    let mut units: Vec<usize> = (0..n_units).collect();
    let mut rng = substream(seed, Domain::Remainder, 0);
    let (dropped, _) = units.partial_shuffle(&mut rng, extra);
    let mut dropped = dropped.to_vec();
    dropped.sort_unstable();
    let mut is_dropped = vec![false; n_units];
    dropped.iter().for_each(|&d| is_dropped[d] = true);
    let kept = (0..n_units).filter(|&i| !is_dropped[i]).collect();
    (kept, dropped)
}

/// A realized treatment vector and the seed that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub bits: Vec<u8>,
    pub seed: u64,
}

impl Assignment {
    pub fn treated(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

/// Independently in each stratum, treat a uniformly random subset of the
/// stratum's treated count. Stratum `s` draws from its own stream, so its
/// draw is a function of `(seed, s)` alone. Excluded units stay untreated.
pub fn assign_treatments(strat: &Stratification, seed: u64) -> Assignment {
    let mut bits = vec![0u8; strat.n_units];
    let mut members = Vec::new();
    for (s, (stratum, &count)) in strat.strata.iter().zip(&strat.treated_counts).enumerate() {
        members.clear();
        members.extend_from_slice(stratum);
        members.sort_unstable();
        let mut rng = substream(seed, Domain::Assignment, s as u64);
        let (chosen, _) = members.partial_shuffle(&mut rng, count);
        for &u in chosen.iter() {
            bits[u] = 1;
        }
    }
    Assignment { bits, seed }
}

/// Exact law of the treatment vector: uniform over its support, since each
/// stratum draws a uniform subset independently.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentDistribution {
    /// Support in lexicographic order.
    pub outcomes: Vec<Vec<u8>>,
    /// Inverse of the common probability, `Π_s C(n_s, c_s)`.
    pub support_size: u64,
}

impl AssignmentDistribution {
    pub fn probability(&self) -> f64 {
        1.0 / self.support_size as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], f64)> {
        let p = self.probability();
        self.outcomes.iter().map(move |o| (o.as_slice(), p))
    }
}

pub const DEFAULT_ENUMERATION_LIMIT: usize = 20;

fn subsets_of_size(items: &[usize], k: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut Vec::new(), out);
}

/// Enumerate every treatment vector the stratification can produce.
pub fn assignment_distribution(strat: &Stratification, max_units: usize) -> Result<AssignmentDistribution> {
    if strat.n_units > max_units {
        return Err(Error::TooLarge { len: strat.n_units, limit: max_units });
    }
    let mut outcomes = vec![vec![0u8; strat.n_units]];
    for (stratum, &count) in strat.strata.iter().zip(&strat.treated_counts) {
        let mut choices = Vec::new();
        subsets_of_size(stratum, count, &mut choices);
        let mut next = Vec::with_capacity(outcomes.len() * choices.len());
        for base in &outcomes {
            for choice in &choices {
                let mut v = base.clone();
                choice.iter().for_each(|&u| v[u] = 1);
                next.push(v);
            }
        }
        outcomes = next;
    }
    outcomes.sort();
    let support_size = outcomes.len() as u64;
    Ok(AssignmentDistribution { outcomes, support_size })
}
