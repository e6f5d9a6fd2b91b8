//! Stratification constructors: adjacent pairing on a scalar index, exact
//! minimum-weight pairing on covariate distances, the penalized pilot
//! metric, matched sets of four, `k`-unit strata and subpopulation unions.

pub mod blossom;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::design::{validate_stratification, Stratification};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, sample_covariance, squared_distance, Matrix, PilotFit, SpdFactor};

/// How a pairing was solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Blossom minimum-weight perfect matching (globally optimal).
    #[default]
    Exact,
    /// Nearest-unmatched-neighbour heuristic; not optimal.
    Greedy,
}

/// A pairing together with its objective and how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub stratification: Stratification,
    /// Sum of within-pair distances of the first-stage pairing.
    pub cost: f64,
    pub solver: Solver,
    /// Ridge added while factoring the metric, if any.
    pub ridge_applied: f64,
}

/// The metric a design matches on. Every multivariate metric is a squared
/// Euclidean distance after a linear map of the covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistanceSpec {
    /// Squared gap of a scalar index (`h`, `g`, `g^τ` or a plug-in estimate),
    /// one value per unit.
    ScalarGap { values: Vec<f64> },
    /// Mahalanobis distance; `covariance` factors the covariance matrix.
    Mahalanobis { covariance: SpdFactor },
    /// Penalized pilot metric; `metric` factors `β̃β̃' + Ω̃`.
    Penalized { metric: SpdFactor },
    /// `‖R x1 - R x2‖²` for an arbitrary upper-triangular transform.
    EuclideanTransformed { transform: SpdFactor },
}

impl DistanceSpec {
    /// Mahalanobis metric under the sample covariance of `x`.
    pub fn mahalanobis(x: &Matrix) -> Result<Self> {
        Ok(Self::Mahalanobis { covariance: cholesky(&sample_covariance(x)?)? })
    }

    pub fn penalized(fit: &PilotFit) -> Result<Self> {
        Ok(Self::Penalized { metric: cholesky(&fit.penalized_metric())? })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::ScalarGap { .. } => "scalar_gap",
            Self::Mahalanobis { .. } => "mahalanobis",
            Self::Penalized { .. } => "penalized",
            Self::EuclideanTransformed { .. } => "euclidean_transformed",
        }
    }

    pub fn ridge_applied(&self) -> f64 {
        match self {
            Self::ScalarGap { .. } => 0.0,
            Self::Mahalanobis { covariance: f } | Self::Penalized { metric: f } => f.ridge_applied,
            Self::EuclideanTransformed { transform } => transform.ridge_applied,
        }
    }

    /// Map units into the space where the metric is squared Euclidean.
    /// `x` is required for every kind except `ScalarGap`.
    pub fn embed(&self, x: Option<&Matrix>) -> Result<Matrix> {
        match self {
            Self::ScalarGap { values } => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("index values"));
                }
                Ok(Matrix::column_vector(values))
            }
            Self::Mahalanobis { covariance } => map_rows(x, covariance, |f, r| f.whiten(r)),
            Self::Penalized { metric } => map_rows(x, metric, |f, r| f.apply(r)),
            Self::EuclideanTransformed { transform } => map_rows(x, transform, |f, r| f.apply(r)),
        }
    }

    /// The metric between two covariate vectors (or, for `ScalarGap`,
    /// between the index values of units `x1[0]` and `x2[0]`).
    pub fn distance(&self, x1: &[f64], x2: &[f64]) -> f64 {
        match self {
            Self::ScalarGap { .. } => (x1[0] - x2[0]) * (x1[0] - x2[0]),
            Self::Mahalanobis { covariance } => {
                squared_distance(&covariance.whiten(x1), &covariance.whiten(x2))
            }
            Self::Penalized { metric: f } | Self::EuclideanTransformed { transform: f } => {
                squared_distance(&f.apply(x1), &f.apply(x2))
            }
        }
    }
}

fn map_rows(
    x: Option<&Matrix>,
    factor: &SpdFactor,
    f: impl Fn(&SpdFactor, &[f64]) -> Vec<f64>,
) -> Result<Matrix> {
    let x = x.ok_or(Error::Missing("covariates"))?;
    if x.cols() != factor.dim {
        return Err(Error::DimensionMismatch { expected: factor.dim, got: x.cols() });
    }
    let mut data = Vec::with_capacity(x.rows() * x.cols());
    for i in 0..x.rows() {
        data.extend(f(factor, x.row(i)));
    }
    Matrix::from_vec(x.rows(), x.cols(), data)
}

/// Indices sorted by value; ties keep ascending index order.
pub fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// Sort by the index and pair adjacent units. Strata come out in sorted
/// order, and each pair lists its lower-valued unit first.
pub fn pair_by_scalar(values: &[f64]) -> Result<Stratification> {
    if !values.len().is_multiple_of(2) {
        return Err(Error::OddLength(values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("index values"));
    }
    let order = sorted_order(values);
    let strata = order.chunks(2).map(|c| c.to_vec()).collect();
    Stratification::uniform(strata, 1, values.len())
}

/// Sum of within-pair costs, accumulated in a canonical order (pairs
/// normalized to `(low, high)` and sorted) so equal pairings give equal sums.
pub fn pairing_cost(dist: &Matrix, strat: &Stratification) -> f64 {
    let mut pairs: Vec<(usize, usize)> = strat
        .strata
        .iter()
        .filter(|s| s.len() == 2)
        .map(|s| (s[0].min(s[1]), s[0].max(s[1])))
        .collect();
    pairs.sort_unstable();
    pairs.iter().map(|&(i, j)| dist[(i, j)]).sum()
}

fn check_distance_matrix(dist: &Matrix) -> Result<()> {
    let n = dist.rows();
    if dist.cols() != n {
        return Err(Error::BadDistanceMatrix);
    }
    if !n.is_multiple_of(2) {
        return Err(Error::OddLength(n));
    }
    if !dist.all_finite() {
        return Err(Error::NonFinite("distance matrix"));
    }
    for i in 0..n {
        if dist[(i, i)] != 0.0 {
            return Err(Error::BadDistanceMatrix);
        }
        for j in (i + 1)..n {
            if dist[(i, j)] != dist[(j, i)] || dist[(i, j)] < 0.0 {
                return Err(Error::BadDistanceMatrix);
            }
        }
    }
    Ok(())
}

fn greedy_partners(n: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut mate = vec![usize::MAX; n];
    for i in 0..n {
        if mate[i] != usize::MAX {
            continue;
        }
        let mut best = usize::MAX;
        let mut best_cost = f64::INFINITY;
        for j in (i + 1)..n {
            if mate[j] == usize::MAX {
                let c = cost(i, j);
                if best == usize::MAX || c < best_cost {
                    best = j;
                    best_cost = c;
                }
            }
        }
        if best != usize::MAX {
            mate[i] = best;
            mate[best] = i;
        }
    }
    mate
}

fn pairs_from_mates(mate: &[usize]) -> Vec<Vec<usize>> {
    (0..mate.len()).filter(|&i| i < mate[i]).map(|i| vec![i, mate[i]]).collect()
}

fn partners(dist: &Matrix, solver: Solver) -> Vec<usize> {
    match solver {
        Solver::Exact => blossom::min_cost_perfect_matching(dist),
        Solver::Greedy => greedy_partners(dist.rows(), |i, j| dist[(i, j)]),
    }
}

/// Minimum-weight perfect matching on a symmetric, zero-diagonal,
/// nonnegative cost matrix. Pairs are listed by their lower index.
pub fn min_weight_pairing(dist: &Matrix) -> Result<Pairing> {
    min_weight_pairing_with(dist, Solver::Exact)
}

pub fn min_weight_pairing_with(dist: &Matrix, solver: Solver) -> Result<Pairing> {
    check_distance_matrix(dist)?;
    let strata = pairs_from_mates(&partners(dist, solver));
    let stratification = Stratification::uniform(strata, 1, dist.rows())?;
    let cost = pairing_cost(dist, &stratification);
    Ok(Pairing { stratification, cost, solver, ridge_applied: 0.0 })
}

fn embedded_distances(z: &Matrix) -> Matrix {
    let n = z.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = squared_distance(z.row(i), z.row(j));
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Reorder pairs so that positions `2j` and `2j + 1` hold pairs matched to
/// each other by the distance between their midpoints. With an odd number
/// of pairs the unmatched one goes last.
fn order_pairs_by_midpoints(z: &Matrix, pairs: Vec<Vec<usize>>, solver: Solver) -> Vec<Vec<usize>> {
    let m = pairs.len();
    if m < 3 {
        return pairs;
    }
    let p = z.cols();
    let mids: Vec<Vec<f64>> = pairs
        .iter()
        .map(|pr| (0..p).map(|c| 0.5 * (z[(pr[0], c)] + z[(pr[1], c)])).collect())
        .collect();
    // a zero-cost dummy vertex absorbs the leftover pair when m is odd
    let size = m + m % 2;
    let mut d = Matrix::zeros(size, size);
    for a in 0..m {
        for b in (a + 1)..m {
            let v = squared_distance(&mids[a], &mids[b]);
            d[(a, b)] = v;
            d[(b, a)] = v;
        }
    }
    let mate = partners(&d, solver);
    let mut ordered = Vec::with_capacity(m);
    let mut leftover = None;
    for a in 0..m {
        let b = mate[a];
        if b >= m {
            leftover = Some(a);
        } else if a < b {
            ordered.push(pairs[a].clone());
            ordered.push(pairs[b].clone());
        }
    }
    if let Some(a) = leftover {
        ordered.push(pairs[a].clone());
    }
    ordered
}

/// Pair units to minimize the summed squared Euclidean distance between
/// rows of `z`. One-dimensional embeddings use adjacent pairing, which is
/// optimal for squared gaps; otherwise pairs are matched exactly (or
/// greedily) and reordered by pairing their midpoints.
pub fn pair_embedded(z: &Matrix, solver: Solver) -> Result<Pairing> {
    let n = z.rows();
    if !n.is_multiple_of(2) {
        return Err(Error::OddLength(n));
    }
    if !z.all_finite() {
        return Err(Error::NonFinite("embedded covariates"));
    }
    if z.cols() == 1 {
        let values = z.column(0);
        let stratification = pair_by_scalar(&values)?;
        let cost = stratification
            .strata
            .iter()
            .map(|s| (values[s[0]] - values[s[1]]) * (values[s[0]] - values[s[1]]))
            .sum();
        return Ok(Pairing { stratification, cost, solver: Solver::Exact, ridge_applied: 0.0 });
    }
    let (pairs, cost) = match solver {
        Solver::Exact => {
            let d = embedded_distances(z);
            let pairs = pairs_from_mates(&blossom::min_cost_perfect_matching(&d));
            let strat = Stratification::uniform(pairs.clone(), 1, n)?;
            (pairs, pairing_cost(&d, &strat))
        }
        Solver::Greedy => {
            let mate = greedy_partners(n, |i, j| squared_distance(z.row(i), z.row(j)));
            let pairs = pairs_from_mates(&mate);
            let cost = pairs.iter().map(|p| squared_distance(z.row(p[0]), z.row(p[1]))).sum();
            (pairs, cost)
        }
    };
    let ordered = order_pairs_by_midpoints(z, pairs, solver);
    let stratification = Stratification::uniform(ordered, 1, n)?;
    Ok(Pairing { stratification, cost, solver, ridge_applied: 0.0 })
}

/// Pair under the metric, embedding `x` first.
pub fn pair_with_spec(spec: &DistanceSpec, x: Option<&Matrix>, solver: Solver) -> Result<Pairing> {
    let z = spec.embed(x)?;
    let mut pairing = pair_embedded(&z, solver)?;
    pairing.ridge_applied = spec.ridge_applied();
    Ok(pairing)
}

/// Pair on the squared Mahalanobis distance under the sample covariance.
pub fn pair_by_mahalanobis(x: &Matrix, solver: Solver) -> Result<Pairing> {
    if !x.rows().is_multiple_of(2) {
        return Err(Error::OddLength(x.rows()));
    }
    let spec = DistanceSpec::mahalanobis(x)?;
    pair_with_spec(&spec, Some(x), solver)
}

/// Pair on `(x1'β̃ - x2'β̃)² + (x1 - x2)'Ω̃(x1 - x2)`, solved as Euclidean
/// matching of `Z = R x` with `R'R = β̃β̃' + Ω̃`. With `Ω̃ = 0` the metric is
/// the squared gap of `x'β̃`, which is paired directly.
pub fn penalized_pairing(x: &Matrix, fit: &PilotFit, solver: Solver) -> Result<Pairing> {
    if x.cols() != fit.beta_sum.len() {
        return Err(Error::DimensionMismatch { expected: fit.beta_sum.len(), got: x.cols() });
    }
    if !x.rows().is_multiple_of(2) {
        return Err(Error::OddLength(x.rows()));
    }
    if fit.omega_sum.max_abs() == 0.0 {
        let index: Vec<f64> = (0..x.rows()).map(|i| fit.index(x.row(i))).collect();
        return pair_embedded(&Matrix::column_vector(&index), solver);
    }
    let spec = DistanceSpec::penalized(fit)?;
    pair_with_spec(&spec, Some(x), solver)
}

/// Pair units, then pair the pairs by their midpoints in the embedded
/// space; each set of four is treated with two units. `cost` reports the
/// first-stage pairing.
pub fn match_sets_of_four(spec: &DistanceSpec, x: Option<&Matrix>, solver: Solver) -> Result<Pairing> {
    let z = spec.embed(x)?;
    let n = z.rows();
    if n % 4 != 0 {
        return Err(Error::NotDivisibleBy4(n));
    }
    let pairs = pair_embedded(&z, solver)?;
    let strata: Vec<Vec<usize>> = pairs
        .stratification
        .strata
        .chunks(2)
        .map(|c| c.iter().flatten().copied().collect())
        .collect();
    let stratification = Stratification::uniform(strata, 2, n)?;
    Ok(Pairing { stratification, cost: pairs.cost, solver: pairs.solver, ridge_applied: spec.ridge_applied() })
}

/// Treated fraction `l/k` in lowest terms with `0 < l < k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatedFraction {
    pub treated: usize,
    pub size: usize,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl TreatedFraction {
    pub const HALF: TreatedFraction = TreatedFraction { treated: 1, size: 2 };

    pub fn new(treated: usize, size: usize) -> Result<Self> {
        if treated == 0 || treated >= size || gcd(treated, size) != 1 {
            return Err(Error::BadFraction { treated, size });
        }
        Ok(Self { treated, size })
    }

    pub fn tau(&self) -> f64 {
        self.treated as f64 / self.size as f64
    }
}

/// Sort by `g^τ` and cut into consecutive blocks of `k`, treating `l` in each.
pub fn k_strata_by_scalar(values: &[f64], fraction: TreatedFraction) -> Result<Stratification> {
    let TreatedFraction { treated, size } = TreatedFraction::new(fraction.treated, fraction.size)?;
    if !values.len().is_multiple_of(size) || values.is_empty() {
        return Err(Error::BadLength { len: values.len(), k: size });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("index values"));
    }
    let order = sorted_order(values);
    let strata = order.chunks(size).map(|c| c.to_vec()).collect();
    Stratification::uniform(strata, treated, values.len())
}

/// `g^τ(x) = μ1(x)/τ + μ0(x)/(1 - τ)`.
pub fn index_gtau(mu1: &[f64], mu0: &[f64], fraction: TreatedFraction) -> Result<Vec<f64>> {
    if mu1.len() != mu0.len() {
        return Err(Error::LengthMismatch { what: "mu0", expected: mu1.len(), got: mu0.len() });
    }
    let tau = fraction.tau();
    Ok(mu1.iter().zip(mu0).map(|(a, b)| a / tau + b / (1.0 - tau)).collect())
}

/// Design for one subpopulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpopulationPlan {
    pub spec: DistanceSpec,
    pub fraction: TreatedFraction,
}

/// Stratify every subpopulation separately and take the union of the
/// strata. Scalar specs carry one value per unit of the full sample; other
/// specs embed the subpopulation's rows of `x` and require `τ = 1/2`.
pub fn compose_subpopulations(
    labels: &[u32],
    plans: &BTreeMap<u32, SubpopulationPlan>,
    x: Option<&Matrix>,
    solver: Solver,
) -> Result<Stratification> {
    let n = labels.len();
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut strata = Vec::new();
    let mut counts = Vec::new();
    for (&label, members) in &groups {
        let wrap = |e: Error| Error::Subpopulation { label, message: format!("{e}") };
        let plan = plans.get(&label).ok_or_else(|| Error::Subpopulation {
            label,
            message: "no plan for this label".into(),
        })?;
        let local = match &plan.spec {
            DistanceSpec::ScalarGap { values } => {
                if values.len() != n {
                    return Err(wrap(Error::LengthMismatch { what: "index values", expected: n, got: values.len() }));
                }
                let sub: Vec<f64> = members.iter().map(|&i| values[i]).collect();
                k_strata_by_scalar(&sub, plan.fraction).map_err(wrap)?
            }
            spec => {
                if plan.fraction != TreatedFraction::HALF {
                    return Err(wrap(Error::BadFraction { treated: plan.fraction.treated, size: plan.fraction.size }));
                }
                let x = x.ok_or(Error::Missing("covariates"))?;
                let rows = x.select_rows(members);
                pair_with_spec(spec, Some(&rows), solver).map_err(wrap)?.stratification
            }
        };
        for (stratum, &c) in local.strata.iter().zip(&local.treated_counts) {
            strata.push(stratum.iter().map(|&u| members[u]).collect());
            counts.push(c);
        }
    }
    validate_stratification(strata, counts, n)
}
