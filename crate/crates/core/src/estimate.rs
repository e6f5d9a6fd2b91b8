//! Difference-in-means estimation and inference under stratified designs.
//!
//! Variances for pair and four-unit designs are on the pair scale: they
//! estimate the limiting variance of `√n(θ̂ - θ)` with `n` the number of
//! pairs, and `variance_hat / n_effective` estimates `Var(θ̂)`. The
//! saturated estimator works on the unit scale (`n_effective` = units).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::design::Stratification;
use crate::error::{Error, Result};

/// `Φ⁻¹(0.975)`.
pub const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    AdjustedPairs,
    AdjustedFour,
    MatchedPairsT,
    TwoSample,
    Saturated,
    Combined,
}

impl VarianceMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::AdjustedPairs => "adjusted_pairs",
            Self::AdjustedFour => "adjusted_four",
            Self::MatchedPairsT => "matched_pairs_t",
            Self::TwoSample => "two_sample",
            Self::Saturated => "saturated",
            Self::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub theta_hat: f64,
    pub variance_method: VarianceMethod,
    pub variance_hat: f64,
    pub n_effective: usize,
    /// `None` when the variance is zero and `θ̂ ≠ θ0`.
    pub z_stat: Option<f64>,
    pub p_value: f64,
    pub ci_95: [f64; 2],
    pub theta0: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl EstimateReport {
    /// Standard error of `θ̂`.
    pub fn std_error(&self) -> f64 {
        libm::sqrt(self.variance_hat / self.n_effective as f64)
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Two-sided standard-normal p-value.
pub fn normal_p_value(z: f64) -> f64 {
    libm::erfc(libm::fabs(z) / core::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Studentize `θ̂` against `θ0` with `z = √n_eff (θ̂ - θ0) / √variance`.
pub fn test_ate(
    theta_hat: f64,
    variance_hat: f64,
    n_effective: usize,
    method: VarianceMethod,
    theta0: f64,
) -> EstimateReport {
    let variance_hat = variance_hat.max(0.0);
    let se = libm::sqrt(variance_hat / n_effective as f64);
    let (z_stat, p_value) = if se > 0.0 {
        let z = (theta_hat - theta0) / se;
        (Some(z), normal_p_value(z))
    } else if theta_hat == theta0 {
        (Some(0.0), 1.0)
    } else {
        (None, 0.0)
    };
    EstimateReport {
        theta_hat,
        variance_method: method,
        variance_hat,
        n_effective,
        z_stat,
        p_value,
        ci_95: [theta_hat - Z_975 * se, theta_hat + Z_975 * se],
        theta0,
        notes: Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffInMeans {
    pub theta_hat: f64,
    pub mu1: f64,
    pub mu0: f64,
    /// Arm variances with the `1/n_arm` divisor.
    pub sig2_1: f64,
    pub sig2_0: f64,
    pub n1: usize,
    pub n0: usize,
}

fn check_lengths(y: &[f64], d: &[u8]) -> Result<()> {
    if y.len() != d.len() {
        return Err(Error::LengthMismatch { what: "treatment", expected: y.len(), got: d.len() });
    }
    Ok(())
}

/// Arm means and variances over the units in `units`.
fn diff_in_means_over(y: &[f64], d: &[u8], units: impl Iterator<Item = usize> + Clone) -> Result<DiffInMeans> {
    let (mut s1, mut s0, mut n1, mut n0) = (0.0, 0.0, 0usize, 0usize);
    for i in units.clone() {
        if !y[i].is_finite() {
            return Err(Error::NonFinite("outcomes"));
        }
        if d[i] == 1 {
            s1 += y[i];
            n1 += 1;
        } else {
            s0 += y[i];
            n0 += 1;
        }
    }
    if n1 == 0 {
        return Err(Error::EmptyArm(1));
    }
    if n0 == 0 {
        return Err(Error::EmptyArm(0));
    }
    let mu1 = s1 / n1 as f64;
    let mu0 = s0 / n0 as f64;
    let (mut v1, mut v0) = (0.0, 0.0);
    for i in units {
        if d[i] == 1 {
            v1 += (y[i] - mu1) * (y[i] - mu1);
        } else {
            v0 += (y[i] - mu0) * (y[i] - mu0);
        }
    }
    Ok(DiffInMeans {
        theta_hat: mu1 - mu0,
        mu1,
        mu0,
        sig2_1: v1 / n1 as f64,
        sig2_0: v0 / n0 as f64,
        n1,
        n0,
    })
}

pub fn diff_in_means(y: &[f64], d: &[u8]) -> Result<DiffInMeans> {
    check_lengths(y, d)?;
    diff_in_means_over(y, d, 0..y.len())
}

/// Difference in means over the units a stratification covers, after
/// checking that `d` honours every stratum's treated count.
pub fn diff_in_means_strat(y: &[f64], d: &[u8], strat: &Stratification) -> Result<DiffInMeans> {
    check_assignment(y, d, strat)?;
    diff_in_means_over(y, d, strat.strata.iter().flatten().copied())
}

fn check_assignment(y: &[f64], d: &[u8], strat: &Stratification) -> Result<()> {
    check_lengths(y, d)?;
    if y.len() != strat.n_units {
        return Err(Error::LengthMismatch { what: "outcomes", expected: strat.n_units, got: y.len() });
    }
    for (s, (members, &expected)) in strat.strata.iter().zip(&strat.treated_counts).enumerate() {
        let got = members.iter().filter(|&&i| d[i] == 1).count();
        if got != expected {
            return Err(Error::TreatedCountMismatch { stratum: s, expected, got });
        }
    }
    Ok(())
}

/// `ρ̂ = (2/n) Σ_j (Y_{π(4j-3)} + Y_{π(4j-2)})(Y_{π(4j-1)} + Y_{π(4j)})`
/// over adjacent pairs of pairs in stored order; an odd last pair is unused.
pub fn rho_pairs(y: &[f64], strat: &Stratification) -> Result<f64> {
    if !strat.is_pairs() || strat.is_empty() {
        return Err(Error::NotPairs);
    }
    let n = strat.len();
    let sum: f64 = strat
        .strata
        .chunks_exact(2)
        .map(|b| (y[b[0][0]] + y[b[0][1]]) * (y[b[1][0]] + y[b[1][1]]))
        .sum();
    Ok(2.0 * sum / n as f64)
}

fn adjusted(dm: &DiffInMeans, rho: f64) -> f64 {
    dm.sig2_1 + dm.sig2_0 - 0.5 * rho + 0.5 * (dm.mu1 + dm.mu0) * (dm.mu1 + dm.mu0)
}

/// `ς̂² = σ̂²(1) + σ̂²(0) - ρ̂/2 + (μ̂(1) + μ̂(0))²/2` without clamping.
pub fn var_adjusted_pairs_raw(y: &[f64], d: &[u8], strat: &Stratification) -> Result<f64> {
    if !strat.is_pairs() {
        return Err(Error::NotPairs);
    }
    let dm = diff_in_means_strat(y, d, strat)?;
    Ok(adjusted(&dm, rho_pairs(y, strat)?))
}

/// Adjusted matched-pair variance; nonnegative up to rounding, which is
/// clamped away.
pub fn var_adjusted_pairs(y: &[f64], d: &[u8], strat: &Stratification) -> Result<f64> {
    Ok(var_adjusted_pairs_raw(y, d, strat)?.max(0.0))
}

/// `ρ̂^four = (2/n) Σ_s ½[(Y_i+Y_k)(Y_j+Y_l) + (Y_i+Y_l)(Y_j+Y_k)]` with
/// `i, j` treated and `k, l` control in stratum `s`.
pub fn rho_four(y: &[f64], d: &[u8], strat: &Stratification) -> Result<f64> {
    if !strat.is_balanced_fours() || strat.is_empty() {
        return Err(Error::NotFours);
    }
    let n = 2 * strat.len();
    let mut sum = 0.0;
    for s in &strat.strata {
        let mut t = s.iter().copied().filter(|&u| d[u] == 1);
        let mut c = s.iter().copied().filter(|&u| d[u] != 1);
        let (Some(i), Some(j), Some(k), Some(l)) = (t.next(), t.next(), c.next(), c.next()) else {
            return Err(Error::NotFours);
        };
        sum += 0.5 * ((y[i] + y[k]) * (y[j] + y[l]) + (y[i] + y[l]) * (y[j] + y[k]));
    }
    Ok(2.0 * sum / n as f64)
}

pub fn var_adjusted_four_raw(y: &[f64], d: &[u8], strat: &Stratification) -> Result<f64> {
    if !strat.is_balanced_fours() {
        return Err(Error::NotFours);
    }
    let dm = diff_in_means_strat(y, d, strat)?;
    Ok(adjusted(&dm, rho_four(y, d, strat)?))
}

pub fn var_adjusted_four(y: &[f64], d: &[u8], strat: &Stratification) -> Result<f64> {
    Ok(var_adjusted_four_raw(y, d, strat)?.max(0.0))
}

/// Per-pair treated-minus-control differences in stored order.
pub fn pair_differences(y: &[f64], d: &[u8], strat: &Stratification) -> Result<Vec<f64>> {
    if !strat.is_pairs() {
        return Err(Error::NotPairs);
    }
    check_assignment(y, d, strat)?;
    Ok(strat
        .strata
        .iter()
        .map(|s| if d[s[0]] == 1 { y[s[0]] - y[s[1]] } else { y[s[1]] - y[s[0]] })
        .collect())
}

/// `n/(n-1) · (1/n) Σ (Δ_s - θ̂)²`, the matched-pairs t variance.
pub fn var_matched_pairs_t(y: &[f64], d: &[u8], strat: &Stratification) -> Result<f64> {
    let delta = pair_differences(y, d, strat)?;
    let n = delta.len();
    if n < 2 {
        return Err(Error::InsufficientRows { needed: 2, got: n });
    }
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("outcomes"));
    }
    let mean = delta.iter().sum::<f64>() / n as f64;
    let ss: f64 = delta.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(ss / (n - 1) as f64)
}

/// Two-sample variance `(N/2)(σ̂²(1)/n1 + σ̂²(0)/n0)`, which is
/// `σ̂²(1) + σ̂²(0)` for balanced arms; pair scale.
pub fn two_sample_variance(dm: &DiffInMeans) -> f64 {
    let half = (dm.n1 + dm.n0) as f64 / 2.0;
    half * (dm.sig2_1 / dm.n1 as f64 + dm.sig2_0 / dm.n0 as f64)
}

pub fn var_two_sample(y: &[f64], d: &[u8], strat: &Stratification) -> Result<f64> {
    Ok(two_sample_variance(&diff_in_means_strat(y, d, strat)?))
}

/// Cross-product averages used by the general stratum estimator.
#[derive(Debug, Default, Clone, Copy)]
struct Products {
    t11: (f64, usize),
    t10: (f64, usize),
    t00: (f64, usize),
}

impl Products {
    fn add(&mut self, y: &[f64], d: &[u8], a: &[usize], b: Option<&[usize]>) {
        // within one block (b = None) every unordered pair of distinct units;
        // across two strata only the cross-stratum pairs
        let mut push = |i: usize, j: usize| {
            let p = y[i] * y[j];
            let slot = match (d[i] == 1, d[j] == 1) {
                (true, true) => &mut self.t11,
                (false, false) => &mut self.t00,
                _ => &mut self.t10,
            };
            slot.0 += p;
            slot.1 += 1;
        };
        match b {
            None => {
                for x in 0..a.len() {
                    for z in (x + 1)..a.len() {
                        push(a[x], a[z]);
                    }
                }
            }
            Some(b) => {
                for &i in a {
                    for &j in b {
                        push(i, j);
                    }
                }
            }
        }
    }

    fn mean(slot: (f64, usize)) -> f64 {
        if slot.1 == 0 {
            0.0
        } else {
            slot.0 / slot.1 as f64
        }
    }
}

/// Unit-scale adjusted variance for strata of a common size `k` with `l`
/// treated (`τ = l/k`): the limiting variance of `√N(θ̂ - θ)`.
///
/// `E[g^τ(X)²]` is estimated from products of outcomes sharing a block. A
/// block is one stratum when it holds at least two treated and two control
/// units, otherwise two adjacent strata (in stored order) using only their
/// cross-stratum products. At `k = 2` this is twice the pair estimator and
/// at `k = 4, l = 2` twice the four-unit estimator. Returns the unclamped
/// value.
pub fn var_adjusted_strata_raw(y: &[f64], d: &[u8], strat: &Stratification) -> Result<f64> {
    let dm = diff_in_means_strat(y, d, strat)?;
    var_strata_given(y, d, &strat.strata, &strat.treated_counts, &dm)
}

fn var_strata_given(
    y: &[f64],
    d: &[u8],
    strata: &[Vec<usize>],
    counts: &[usize],
    dm: &DiffInMeans,
) -> Result<f64> {
    let Some(first) = strata.first() else {
        return Err(Error::Config("no strata".into()));
    };
    let k = first.len();
    let l = counts[0];
    if strata.iter().zip(counts).any(|(s, &c)| s.len() != k || c != l) {
        return Err(Error::Config("strata must share one size and treated count".into()));
    }
    let tau = l as f64 / k as f64;
    let mut prod = Products::default();
    if l >= 2 && k - l >= 2 {
        for s in strata {
            prod.add(y, d, s, None);
        }
    } else {
        for b in strata.chunks_exact(2) {
            prod.add(y, d, &b[0], Some(&b[1]));
        }
    }
    if prod.t11.1 == 0 || prod.t10.1 == 0 || prod.t00.1 == 0 {
        return Err(Error::InsufficientRows { needed: 2 * k, got: k * strata.len() });
    }
    let rho = Products::mean(prod.t11) / (tau * tau)
        + 2.0 * Products::mean(prod.t10) / (tau * (1.0 - tau))
        + Products::mean(prod.t00) / ((1.0 - tau) * (1.0 - tau));
    let g_bar = dm.mu1 / tau + dm.mu0 / (1.0 - tau);
    Ok(dm.sig2_1 / tau + dm.sig2_0 / (1.0 - tau) - tau * (1.0 - tau) * (rho - g_bar * g_bar))
}

/// Adjusted variance for the stored design, picking the pair or four-unit
/// estimator by shape. The report is on the pair scale.
pub fn estimate_adjusted(
    y: &[f64],
    d: &[u8],
    strat: &Stratification,
    theta0: f64,
) -> Result<EstimateReport> {
    if strat.is_pairs() {
        estimate(y, d, strat, VarianceMethod::AdjustedPairs, theta0)
    } else if strat.is_balanced_fours() {
        estimate(y, d, strat, VarianceMethod::AdjustedFour, theta0)
    } else {
        Err(Error::NotPairs)
    }
}

/// Difference-in-means report for a single population with the named
/// variance estimator (`Saturated` treats the whole sample as one
/// subpopulation; `Combined` needs [`combined_test`]).
pub fn estimate(
    y: &[f64],
    d: &[u8],
    strat: &Stratification,
    method: VarianceMethod,
    theta0: f64,
) -> Result<EstimateReport> {
    let dm = diff_in_means_strat(y, d, strat)?;
    let n_pairs = (dm.n1 + dm.n0) / 2;
    let mut notes = Vec::new();
    let (raw, n_eff) = match method {
        VarianceMethod::AdjustedPairs => (var_adjusted_pairs_raw(y, d, strat)?, n_pairs),
        VarianceMethod::AdjustedFour => (var_adjusted_four_raw(y, d, strat)?, n_pairs),
        VarianceMethod::MatchedPairsT => (var_matched_pairs_t(y, d, strat)?, n_pairs),
        VarianceMethod::TwoSample => (two_sample_variance(&dm), n_pairs),
        VarianceMethod::Saturated => {
            let labels = vec![1u32; y.len()];
            return theta_saturated(y, d, &labels, strat, theta0);
        }
        VarianceMethod::Combined => {
            return Err(Error::Config("the combined test needs pilot estimates".into()))
        }
    };
    if raw < 0.0 {
        notes.push(String::from("negative variance estimate clamped to zero"));
    }
    if method == VarianceMethod::AdjustedPairs && strat.len() % 2 == 1 {
        notes.push(String::from("odd number of pairs: last pair unused in rho"));
    }
    let mut report = test_ate(dm.theta_hat, raw, n_eff, method, theta0);
    report.notes = notes;
    Ok(report)
}

/// Per-subpopulation pieces of the saturated estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpopulationEstimate {
    pub label: u32,
    pub n_units: usize,
    pub tau: f64,
    pub theta_hat: f64,
    /// Unit-scale adjusted variance within the subpopulation.
    pub variance_hat: f64,
}

/// Fully saturated estimator `θ̂_sat = Σ_r (n_r/n)(μ̂_r(1) - μ̂_r(0))` with
/// `μ̂_r(1) = Σ Y D / (n_r τ_r)` and `μ̂_r(0) = Σ Y (1-D) / (n_r (1-τ_r))`.
/// Every stratum must lie inside one subpopulation and `τ_r` is read off the
/// strata. The variance is `Σ p̂_r ς̂²_r + Σ p̂_r (θ̂_r - θ̂_sat)²` on the unit
/// scale.
pub fn theta_saturated(
    y: &[f64],
    d: &[u8],
    labels: &[u32],
    strat: &Stratification,
    theta0: f64,
) -> Result<EstimateReport> {
    Ok(saturated_parts(y, d, labels, strat, theta0)?.0)
}

pub fn saturated_parts(
    y: &[f64],
    d: &[u8],
    labels: &[u32],
    strat: &Stratification,
    theta0: f64,
) -> Result<(EstimateReport, Vec<SubpopulationEstimate>)> {
    check_assignment(y, d, strat)?;
    if labels.len() != y.len() {
        return Err(Error::LengthMismatch { what: "labels", expected: y.len(), got: labels.len() });
    }
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (s, members) in strat.strata.iter().enumerate() {
        let label = labels[members[0]];
        if members.iter().any(|&u| labels[u] != label) {
            return Err(Error::Subpopulation { label, message: "a stratum spans subpopulations".into() });
        }
        groups.entry(label).or_default().push(s);
    }
    let n_total: usize = strat.strata.iter().map(|s| s.len()).sum();
    let mut parts = Vec::with_capacity(groups.len());
    let mut notes = Vec::new();
    for (&label, idx) in &groups {
        let strata: Vec<Vec<usize>> = idx.iter().map(|&s| strat.strata[s].clone()).collect();
        let counts: Vec<usize> = idx.iter().map(|&s| strat.treated_counts[s]).collect();
        let n_r: usize = strata.iter().map(|s| s.len()).sum();
        let tau = counts.iter().sum::<usize>() as f64 / n_r as f64;
        let units = strata.iter().flatten().copied();
        let dm = diff_in_means_over(y, d, units.clone()).map_err(|e| match e {
            Error::EmptyArm(_) => Error::EmptyArmInSubpop { label },
            e => e,
        })?;
        let (mut s1, mut s0) = (0.0, 0.0);
        for u in units {
            if d[u] == 1 {
                s1 += y[u];
            } else {
                s0 += y[u];
            }
        }
        let theta_r = s1 / (n_r as f64 * tau) - s0 / (n_r as f64 * (1.0 - tau));
        let raw = var_strata_given(y, d, &strata, &counts, &dm).map_err(|e| Error::Subpopulation {
            label,
            message: alloc::format!("{e}"),
        })?;
        if raw < 0.0 {
            notes.push(alloc::format!("subpopulation {label}: negative variance clamped to zero"));
        }
        if strata[0].len() > 4 {
            notes.push(alloc::format!("subpopulation {label}: stratum size above four is experimental"));
        }
        parts.push(SubpopulationEstimate { label, n_units: n_r, tau, theta_hat: theta_r, variance_hat: raw.max(0.0) });
    }
    let n = n_total as f64;
    let theta_sat: f64 = parts.iter().map(|p| p.n_units as f64 / n * p.theta_hat).sum();
    let within: f64 = parts.iter().map(|p| p.n_units as f64 / n * p.variance_hat).sum();
    let between: f64 = parts
        .iter()
        .map(|p| p.n_units as f64 / n * (p.theta_hat - theta_sat) * (p.theta_hat - theta_sat))
        .sum();
    let mut report = test_ate(theta_sat, within + between, n_total, VarianceMethod::Saturated, theta0);
    report.notes = notes;
    Ok((report, parts))
}

/// Ratio-form estimator over non-attritors: arm means restricted to units
/// with `A = 1`. The two-sample variance on that subsample is conservative.
pub fn theta_attrition(y: &[f64], d: &[u8], a: &[u8], theta0: f64) -> Result<EstimateReport> {
    check_lengths(y, d)?;
    if a.len() != y.len() {
        return Err(Error::LengthMismatch { what: "attrition", expected: y.len(), got: a.len() });
    }
    let observed = (0..y.len()).filter(|&i| a[i] == 1);
    let dm = diff_in_means_over(y, d, observed)?;
    let n_eff = (dm.n1 + dm.n0) / 2;
    let mut report = test_ate(dm.theta_hat, two_sample_variance(&dm), n_eff.max(1), VarianceMethod::TwoSample, theta0);
    report.notes.push(String::from("attrition: two-sample variance on non-attritors is conservative"));
    Ok(report)
}

/// Pilot difference in means and its unit-scale variance under
/// independent coin flips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotSummary {
    pub theta: f64,
    pub variance: f64,
    pub m: usize,
}

pub fn pilot_summary(y: &[f64], d: &[u8]) -> Result<PilotSummary> {
    let dm = diff_in_means(y, d)?;
    let m = dm.n1 + dm.n0;
    let variance = m as f64 * (dm.sig2_1 / dm.n1 as f64 + dm.sig2_0 / dm.n0 as f64);
    Ok(PilotSummary { theta: dm.theta_hat, variance, m })
}

/// Pool pilot and main experiments:
/// `θ̂ = (m θ̃ + 2n θ̂_n)/(m + 2n)` and
/// `T = √(m+2n)(θ̂ - θ0) / √(m/(m+2n) ς̃² + 2n/(m+2n) · 2ς̂²)`,
/// where `ς̂²` is the main experiment's pair-scale variance.
pub fn combined_test(pilot: PilotSummary, main_theta: f64, main_variance: f64, main_units: usize, theta0: f64) -> EstimateReport {
    let m = pilot.m as f64;
    let n2 = main_units as f64;
    let total = m + n2;
    let theta = (m * pilot.theta + n2 * main_theta) / total;
    let variance = m / total * pilot.variance.max(0.0) + n2 / total * 2.0 * main_variance.max(0.0);
    test_ate(theta, variance, pilot.m + main_units, VarianceMethod::Combined, theta0)
}
