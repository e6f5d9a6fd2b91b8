//! Monte Carlo engine: counterfactual imputation, bootstrap and synthetic
//! populations, the fixed pilot, and MSE / size / standard-error metrics
//! per design.
//!
//! Replication `r` draws everything from streams keyed on `(seed, r)`, so
//! [`run_replication`] can be evaluated in any order or in parallel and
//! [`aggregate`] reduces the outcomes in index order.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::design::{assign_treatments, Sample, Stratification};
use crate::error::{Error, Result};
use crate::estimate::{estimate, VarianceMethod};
use crate::linalg::{cholesky, ols_fit_pilot, sample_covariance, squared_distance, Matrix, PilotFit};
use crate::matching::{
    match_sets_of_four, pair_by_mahalanobis, pair_by_scalar, penalized_pairing, DistanceSpec, Solver,
};
use crate::rng::{derive_seed, substream, Domain};

/// A population with both potential outcomes filled in for every unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedPopulation {
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    pub covariates: Matrix,
    pub baseline_col: Option<usize>,
    pub model_tag: u8,
}

impl ImputedPopulation {
    pub fn n_units(&self) -> usize {
        self.y1.len()
    }

    pub fn true_ate(&self) -> f64 {
        let n = self.y1.len() as f64;
        self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).sum::<f64>() / n
    }
}

/// Fill in the unobserved arm.
///
/// * Model 1: `Y*(1) = Y*(0) = Y`.
/// * Model 2: the missing arm is copied from the nearest unit of the other
///   arm in Mahalanobis distance over all covariates.
/// * Model 3: as Model 2 with the absolute baseline gap.
///
/// Ties go to the lowest index.
pub fn impute(model: u8, sample: &Sample) -> Result<ImputedPopulation> {
    let y = sample.outcomes.as_deref().ok_or(Error::Missing("outcomes"))?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("outcomes"));
    }
    let n = sample.n_units();
    let pop = |y1, y0| ImputedPopulation {
        y1,
        y0,
        covariates: sample.covariates.clone(),
        baseline_col: sample.baseline_col,
        model_tag: model,
    };
    if model == 1 {
        return Ok(pop(y.to_vec(), y.to_vec()));
    }
    let d = sample.treatment.as_deref().ok_or(Error::Missing("treatment"))?;
    let z = match model {
        2 => DistanceSpec::Mahalanobis { covariance: cholesky(&sample_covariance(&sample.covariates)?)? }
            .embed(Some(&sample.covariates))?,
        3 => Matrix::column_vector(&sample.baseline().ok_or(Error::Missing("baseline column"))?),
        _ => return Err(Error::Config(format!("unknown imputation model {model}"))),
    };
    let donors = nearest_opposite(&z, d)?;
    let mut y1 = vec![0.0; n];
    let mut y0 = vec![0.0; n];
    for i in 0..n {
        if d[i] == 1 {
            y1[i] = y[i];
            y0[i] = y[donors[i]];
        } else {
            y0[i] = y[i];
            y1[i] = y[donors[i]];
        }
    }
    Ok(pop(y1, y0))
}

/// Index of the closest unit with the other treatment status.
pub fn nearest_opposite(z: &Matrix, d: &[u8]) -> Result<Vec<usize>> {
    let n = z.rows();
    if d.len() != n {
        return Err(Error::LengthMismatch { what: "treatment", expected: n, got: d.len() });
    }
    for arm in [0u8, 1] {
        if !d.contains(&arm) {
            return Err(Error::EmptyArm(arm));
        }
    }
    Ok((0..n)
        .map(|i| {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for j in (0..n).filter(|&j| d[j] != d[i]) {
                let dist = squared_distance(z.row(i), z.row(j));
                if best == usize::MAX || dist < best_d {
                    best = j;
                    best_d = dist;
                }
            }
            best
        })
        .collect())
}

/// Built-in linear DGP: `X ~ U(0,1)`, `Y(d) = dθ + γ_d X + ε`,
/// `ε ~ N(0, σ²)`. With `noise_covariate` a second, independent `U(0,1)`
/// column is appended that carries no information about outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDgp {
    pub theta: f64,
    pub gamma1: f64,
    pub gamma0: f64,
    pub sigma: f64,
    #[serde(default)]
    pub noise_covariate: bool,
}

impl Default for LinearDgp {
    fn default() -> Self {
        Self { theta: 0.0, gamma1: 2.0, gamma0: 2.0, sigma: 1.0, noise_covariate: false }
    }
}

impl LinearDgp {
    pub fn true_ate(&self) -> f64 {
        self.theta + 0.5 * (self.gamma1 - self.gamma0)
    }

    /// Parse `key=value` pairs separated by commas, e.g.
    /// `theta=0,gamma=2,sigma=1,noise=1` (`gamma` sets both slopes).
    pub fn parse(spec: &str) -> Result<Self> {
        let mut dgp = Self::default();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{part}`")))?;
            let v: f64 = value.trim().parse().map_err(|_| Error::Config(format!("bad number in `{part}`")))?;
            match key.trim() {
                "theta" => dgp.theta = v,
                "gamma" => {
                    dgp.gamma1 = v;
                    dgp.gamma0 = v;
                }
                "gamma1" => dgp.gamma1 = v,
                "gamma0" => dgp.gamma0 = v,
                "sigma" => dgp.sigma = v,
                "noise" => dgp.noise_covariate = v != 0.0,
                other => return Err(Error::Config(format!("unknown DGP parameter `{other}`"))),
            }
        }
        if !(dgp.sigma >= 0.0) || !dgp.sigma.is_finite() {
            return Err(Error::Config("sigma must be finite and nonnegative".into()));
        }
        Ok(dgp)
    }

    fn draw<R: Rng>(&self, n: usize, rng: &mut R) -> Draw {
        let p = if self.noise_covariate { 2 } else { 1 };
        let noise = Normal::new(0.0, self.sigma).expect("sigma checked");
        let mut x = Vec::with_capacity(n * p);
        let mut y1 = Vec::with_capacity(n);
        let mut y0 = Vec::with_capacity(n);
        for _ in 0..n {
            let xi: f64 = rng.random();
            x.push(xi);
            if self.noise_covariate {
                x.push(rng.random());
            }
            let e1 = noise.sample(rng);
            let e0 = noise.sample(rng);
            y1.push(self.theta + self.gamma1 * xi + e1);
            y0.push(self.gamma0 * xi + e0);
        }
        Draw { covariates: Matrix::from_vec(n, p, x).expect("shape"), baseline_col: Some(0), y1, y0 }
    }
}

/// Where replications come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Population {
    /// Bootstrap from an imputed empirical population.
    Imputed(ImputedPopulation),
    /// Fresh draws from a linear-normal model.
    Synthetic(LinearDgp),
}

impl Population {
    pub fn true_ate(&self) -> f64 {
        match self {
            Self::Imputed(p) => p.true_ate(),
            Self::Synthetic(d) => d.true_ate(),
        }
    }

    pub fn n_covariates(&self) -> usize {
        match self {
            Self::Imputed(p) => p.covariates.cols(),
            Self::Synthetic(d) => 1 + d.noise_covariate as usize,
        }
    }

    fn draw<R: Rng>(&self, n: usize, rng: &mut R) -> Draw {
        match self {
            Self::Imputed(p) => {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..p.n_units())).collect();
                Draw {
                    covariates: p.covariates.select_rows(&idx),
                    baseline_col: p.baseline_col,
                    y1: idx.iter().map(|&i| p.y1[i]).collect(),
                    y0: idx.iter().map(|&i| p.y0[i]).collect(),
                }
            }
            Self::Synthetic(d) => d.draw(n, rng),
        }
    }
}

/// One drawn sample with both potential outcomes carried along.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub covariates: Matrix,
    pub baseline_col: Option<usize>,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
}

impl Draw {
    /// `Y = Y*(D)`.
    pub fn reveal(&self, d: &[u8]) -> Vec<f64> {
        d.iter().enumerate().map(|(i, &di)| if di == 1 { self.y1[i] } else { self.y0[i] }).collect()
    }
}

/// Sample `n_draw` units with replacement for replication `rep`.
pub fn draw_replication(pop: &Population, n_draw: usize, seed: u64, rep: u64) -> Draw {
    pop.draw(n_draw, &mut substream(seed, Domain::Replication, rep))
}

/// `⌊frac · n_draw⌋` units with replacement, each treated by a fair coin.
pub fn draw_pilot(pop: &Population, frac: f64, n_draw: usize, seed: u64) -> Result<Sample> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::Config(format!("pilot fraction {frac} not in (0, 1)")));
    }
    let m = libm::floor(frac * n_draw as f64) as usize;
    if m == 0 {
        return Err(Error::InsufficientRows { needed: 1, got: 0 });
    }
    let mut rng = substream(seed, Domain::Pilot, 0);
    let draw = pop.draw(m, &mut rng);
    let d: Vec<u8> = (0..m).map(|_| rng.random_bool(0.5) as u8).collect();
    let y = draw.reveal(&d);
    let mut sample = Sample::new(draw.covariates)?;
    sample.baseline_col = draw.baseline_col;
    sample.with_outcomes(y)?.with_treatment(d)
}

/// Which index a scalar pairing sorts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarSource {
    Baseline,
    Column(usize),
    /// `x'β̃` from the pilot.
    Pilot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    /// Complete randomization with half of the units treated.
    None,
    Pairs { source: ScalarSource },
    MahalanobisPairs,
    PenalizedPairs,
    Fours { source: ScalarSource },
    MahalanobisFours,
}

impl Design {
    pub fn uses_fours(&self) -> bool {
        matches!(self, Self::Fours { .. } | Self::MahalanobisFours)
    }

    pub fn uses_pilot(&self) -> bool {
        matches!(self, Self::PenalizedPairs | Self::Pairs { source: ScalarSource::Pilot } | Self::Fours { source: ScalarSource::Pilot })
    }

    fn default_variance(&self) -> VarianceMethod {
        match self {
            Self::None => VarianceMethod::TwoSample,
            d if d.uses_fours() => VarianceMethod::AdjustedFour,
            _ => VarianceMethod::AdjustedPairs,
        }
    }
}

/// A design plus the variance estimator used to test with it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub design: Design,
    pub variance: VarianceMethod,
}

fn source_label(s: ScalarSource) -> String {
    match s {
        ScalarSource::Baseline => "base".into(),
        ScalarSource::Column(j) => format!("col:{j}"),
        ScalarSource::Pilot => "pilot".into(),
    }
}

fn variance_label(v: VarianceMethod) -> &'static str {
    match v {
        VarianceMethod::AdjustedPairs => "adj",
        VarianceMethod::AdjustedFour => "adj4",
        VarianceMethod::MatchedPairsT => "mpt",
        VarianceMethod::TwoSample => "two-sample",
        VarianceMethod::Saturated => "saturated",
        VarianceMethod::Combined => "combined",
    }
}

impl MethodSpec {
    /// Parse descriptors such as `none`, `mp-base`, `mp-base/mpt`,
    /// `mp-col:noise`, `mp-x`, `mp-pilot`, `mp-pen`, `ms-base`, `ms-x`.
    /// Column references may be names from `columns` or indices.
    pub fn parse(text: &str, columns: &[String]) -> Result<Self> {
        let bad = || Error::Config(format!("unknown method `{text}`"));
        let (design_text, variance_text) = match text.trim().split_once('/') {
            Some((a, b)) => (a.trim(), Some(b.trim())),
            None => (text.trim(), None),
        };
        let source = |s: &str| -> Result<ScalarSource> {
            match s {
                "base" => Ok(ScalarSource::Baseline),
                "pilot" => Ok(ScalarSource::Pilot),
                _ => {
                    let col = s.strip_prefix("col:").ok_or_else(bad)?;
                    if let Some(j) = columns.iter().position(|c| c == col) {
                        return Ok(ScalarSource::Column(j));
                    }
                    col.parse().map(ScalarSource::Column).map_err(|_| {
                        Error::Config(format!("unknown column `{col}` in method `{text}`"))
                    })
                }
            }
        };
        let design = match design_text {
            "none" => Design::None,
            "mp-x" => Design::MahalanobisPairs,
            "mp-pen" => Design::PenalizedPairs,
            "ms-x" => Design::MahalanobisFours,
            t => {
                if let Some(rest) = t.strip_prefix("mp-") {
                    Design::Pairs { source: source(rest)? }
                } else if let Some(rest) = t.strip_prefix("ms-") {
                    Design::Fours { source: source(rest)? }
                } else {
                    return Err(bad());
                }
            }
        };
        let variance = match variance_text {
            None => design.default_variance(),
            Some("adj") if design.uses_fours() => VarianceMethod::AdjustedFour,
            Some("adj") => VarianceMethod::AdjustedPairs,
            Some("adj4") => VarianceMethod::AdjustedFour,
            Some("mpt") => VarianceMethod::MatchedPairsT,
            Some("two-sample") => VarianceMethod::TwoSample,
            Some("saturated") => VarianceMethod::Saturated,
            Some(_) => return Err(bad()),
        };
        let ok = match (design.uses_fours(), variance) {
            (_, VarianceMethod::TwoSample | VarianceMethod::Saturated) => true,
            (true, v) => v == VarianceMethod::AdjustedFour,
            (false, v) => design != Design::None && v != VarianceMethod::AdjustedFour,
        };
        if !ok {
            return Err(Error::Config(format!("variance estimator does not fit the design in `{text}`")));
        }
        Ok(Self { design, variance })
    }

    pub fn label(&self) -> String {
        let design = match self.design {
            Design::None => "none".to_string(),
            Design::Pairs { source } => format!("mp-{}", source_label(source)),
            Design::MahalanobisPairs => "mp-x".into(),
            Design::PenalizedPairs => "mp-pen".into(),
            Design::Fours { source } => format!("ms-{}", source_label(source)),
            Design::MahalanobisFours => "ms-x".into(),
        };
        if self.variance == self.design.default_variance() {
            design
        } else {
            format!("{design}/{}", variance_label(self.variance))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub methods: Vec<MethodSpec>,
    pub replications: usize,
    pub seed: u64,
    /// Units per replication before rounding to the design multiple.
    pub n_draw: usize,
    pub pilot_fraction: f64,
    /// Test value; `None` means the population's true ATE.
    pub theta0: Option<f64>,
    pub solver: Solver,
}

impl SimConfig {
    pub fn new(methods: Vec<MethodSpec>, replications: usize, n_draw: usize, seed: u64) -> Self {
        Self { methods, replications, seed, n_draw, pilot_fraction: 0.2, theta0: None, solver: Solver::Exact }
    }

    /// Units actually drawn: a multiple of 4 when any design uses sets of
    /// four, otherwise even.
    pub fn effective_n_draw(&self) -> usize {
        let multiple = if self.methods.iter().any(|m| m.design.uses_fours()) { 4 } else { 2 };
        self.n_draw - self.n_draw % multiple
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.pilot_fraction > 0.0 && self.pilot_fraction < 1.0) {
            return Err(Error::Config("pilot fraction must lie in (0, 1)".into()));
        }
        if self.effective_n_draw() < 4 {
            return Err(Error::Config(format!("n_draw {} is too small", self.n_draw)));
        }
        if self.baseline_index().is_none() {
            return Err(Error::MissingNoneBaseline);
        }
        Ok(())
    }

    fn baseline_index(&self) -> Option<usize> {
        self.methods.iter().position(|m| m.design == Design::None)
    }

    fn needs_pilot(&self) -> bool {
        self.methods.iter().any(|m| m.design.uses_pilot())
    }
}

/// Shared state for all replications: the fixed pilot and its fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SimContext {
    pub population: Population,
    pub config: SimConfig,
    pub pilot: Option<PilotFit>,
    pub true_theta: f64,
    pub theta0: f64,
}

impl SimContext {
    pub fn new(population: Population, config: SimConfig) -> Result<Self> {
        config.validate()?;
        let pilot = if config.needs_pilot() {
            let sample = draw_pilot(&population, config.pilot_fraction, config.effective_n_draw(), config.seed)?;
            Some(ols_fit_pilot(&sample)?)
        } else {
            None
        };
        let true_theta = population.true_ate();
        let theta0 = config.theta0.unwrap_or(true_theta);
        Ok(Self { population, config, pilot, true_theta, theta0 })
    }

    pub fn replications(&self) -> usize {
        self.config.replications
    }
}

/// One method's result in one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOutcome {
    pub theta_hat: f64,
    pub std_error: f64,
    pub reject: bool,
}

fn scalar_values(source: ScalarSource, draw: &Draw, pilot: Option<&PilotFit>) -> Result<Vec<f64>> {
    let x = &draw.covariates;
    match source {
        ScalarSource::Baseline => {
            let col = draw.baseline_col.ok_or(Error::Missing("baseline column"))?;
            Ok(x.column(col))
        }
        ScalarSource::Column(j) => {
            if j >= x.cols() {
                return Err(Error::DimensionMismatch { expected: x.cols(), got: j + 1 });
            }
            Ok(x.column(j))
        }
        ScalarSource::Pilot => {
            let fit = pilot.ok_or(Error::Missing("pilot fit"))?;
            Ok((0..x.rows()).map(|i| fit.index(x.row(i))).collect())
        }
    }
}

/// Build the stratification a design prescribes for one drawn sample.
pub fn build_design(design: Design, draw: &Draw, pilot: Option<&PilotFit>, solver: Solver) -> Result<Stratification> {
    let x = &draw.covariates;
    let n = x.rows();
    match design {
        Design::None => Stratification::unstratified(n),
        Design::Pairs { source } => pair_by_scalar(&scalar_values(source, draw, pilot)?),
        Design::MahalanobisPairs => Ok(pair_by_mahalanobis(x, solver)?.stratification),
        Design::PenalizedPairs => {
            let fit = pilot.ok_or(Error::Missing("pilot fit"))?;
            Ok(penalized_pairing(x, fit, solver)?.stratification)
        }
        Design::Fours { source } => {
            let spec = DistanceSpec::ScalarGap { values: scalar_values(source, draw, pilot)? };
            Ok(match_sets_of_four(&spec, None, solver)?.stratification)
        }
        Design::MahalanobisFours => {
            let spec = DistanceSpec::mahalanobis(x)?;
            Ok(match_sets_of_four(&spec, Some(x), solver)?.stratification)
        }
    }
}

/// Run every method on replication `rep`.
pub fn run_replication(ctx: &SimContext, rep: usize) -> Result<Vec<MethodOutcome>> {
    let cfg = &ctx.config;
    let draw = draw_replication(&ctx.population, cfg.effective_n_draw(), cfg.seed, rep as u64);
    let n_methods = cfg.methods.len() as u64;
    cfg.methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let strat = build_design(method.design, &draw, ctx.pilot.as_ref(), cfg.solver)?;
            let seed = derive_seed(cfg.seed, Domain::Method, rep as u64 * n_methods + m as u64);
            let assignment = assign_treatments(&strat, seed);
            let y = draw.reveal(&assignment.bits);
            let report = estimate(&y, &assignment.bits, &strat, method.variance, ctx.theta0)?;
            Ok(MethodOutcome {
                theta_hat: report.theta_hat,
                std_error: report.std_error(),
                reject: report.rejects(0.05),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub mse: f64,
    pub mse_ratio_vs_none: f64,
    pub size: f64,
    pub avg_se: f64,
    pub se_ratio_vs_none: f64,
    pub mean_theta_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub true_theta: f64,
    pub theta0: f64,
    pub replications: usize,
    pub n_draw: usize,
    pub seed: u64,
    pub pilot_size: Option<usize>,
    pub methods: Vec<MethodSummary>,
}

/// Reduce per-replication outcomes (indexed by replication) in order.
pub fn aggregate(ctx: &SimContext, outcomes: &[Vec<MethodOutcome>]) -> Result<SimReport> {
    let cfg = &ctx.config;
    let base = cfg.baseline_index().ok_or(Error::MissingNoneBaseline)?;
    let reps = outcomes.len() as f64;
    let mut sums = vec![(0.0f64, 0.0f64, 0usize, 0.0f64); cfg.methods.len()];
    for rep in outcomes {
        for (acc, o) in sums.iter_mut().zip(rep) {
            let err = o.theta_hat - ctx.true_theta;
            acc.0 += err * err;
            acc.1 += o.std_error;
            acc.2 += o.reject as usize;
            acc.3 += o.theta_hat;
        }
    }
    let (base_mse, base_se) = (sums[base].0 / reps, sums[base].1 / reps);
    let ratio = |a: f64, b: f64| if b == 0.0 { if a == 0.0 { 1.0 } else { f64::MAX } } else { a / b };
    let methods = cfg
        .methods
        .iter()
        .zip(&sums)
        .map(|(m, &(se2, se, rej, th))| {
            let mse = se2 / reps;
            let avg_se = se / reps;
            MethodSummary {
                method: m.label(),
                mse,
                mse_ratio_vs_none: ratio(mse, base_mse),
                size: rej as f64 / reps,
                avg_se,
                se_ratio_vs_none: ratio(avg_se, base_se),
                mean_theta_hat: th / reps,
            }
        })
        .collect();
    Ok(SimReport {
        true_theta: ctx.true_theta,
        theta0: ctx.theta0,
        replications: outcomes.len(),
        n_draw: cfg.effective_n_draw(),
        seed: cfg.seed,
        pilot_size: ctx.pilot.as_ref().map(|p| p.m_pilot),
        methods,
    })
}

/// Sequential driver.
pub fn run(population: Population, config: SimConfig) -> Result<SimReport> {
    let ctx = SimContext::new(population, config)?;
    let outcomes = (0..ctx.replications()).map(|r| run_replication(&ctx, r)).collect::<Result<Vec<_>>>()?;
    aggregate(&ctx, &outcomes)
}
