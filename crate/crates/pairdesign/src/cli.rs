//! The `pairdesign` command line: `pair`, `assign`, `estimate`, `simulate`
//! and `verify`.
//!
//! Exit codes: 0 success, 2 invalid input, 3 integrity failure (inputs
//! changed between stages), 4 internal error. Failures print one JSON object
//! on stderr.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pairdesign_core::design::drop_remainder;
use pairdesign_core::estimate::{estimate, estimate_adjusted, saturated_parts, theta_attrition};
use pairdesign_core::linalg::ols_fit_pilot;
use pairdesign_core::matching::{
    compose_subpopulations, index_gtau, k_strata_by_scalar, match_sets_of_four, pair_by_mahalanobis,
    pair_by_scalar, penalized_pairing, SubpopulationPlan,
};
use pairdesign_core::sim::{impute, LinearDgp, MethodSpec, Population, SimConfig};
use pairdesign_core::{
    assign_treatments, DistanceSpec, PilotFit, Sample, Solver, Stratification, TreatedFraction, VarianceMethod,
};
use serde::Serialize;

use crate::digest::{sample_digest, stratification_digest};
use crate::formats::*;
use crate::io::{load_sample, LoadedSample, BASELINE};
use crate::manifest::{manifest_path, now, FileDigest, RunManifest};
use crate::parallel::run_parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Validation,
    Integrity,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Validation, message: message.into() }
    }

    fn integrity(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Integrity, message: message.into() }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Internal, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 2,
            ErrorKind::Integrity => 3,
            ErrorKind::Internal => 4,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind, "message": self.message }).to_string()
    }
}

impl From<pairdesign_core::Error> for CliError {
    fn from(e: pairdesign_core::Error) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<crate::io::InputError> for CliError {
    fn from(e: crate::io::InputError) -> Self {
        Self::validation(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "pairdesign", version, about = "Optimal stratified randomization and ATE inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a stratification from a sample CSV.
    Pair(PairArgs),
    /// Draw a treatment assignment within a stratification.
    Assign(AssignArgs),
    /// Estimate the average treatment effect and test it.
    Estimate(EstimateArgs),
    /// Monte Carlo comparison of designs.
    Simulate(SimulateArgs),
    /// Recompute the digests recorded in a manifest.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// baseline | scalar:<col> | pilot | mahalanobis | penalized |
    /// sets4:<inner> | kstrata:<l>/<k> | kstrata:<label>=<l>/<k>,...
    #[arg(long)]
    pub method: String,
    /// Pilot CSV with outcome and treatment columns.
    #[arg(long)]
    pub pilot: Option<PathBuf>,
    /// Nearest-neighbour pairing instead of exact matching.
    #[arg(long)]
    pub greedy: bool,
    /// Stratify each `label` subpopulation separately.
    #[arg(long)]
    pub by_label: bool,
    /// Drop a uniformly chosen remainder so the strata divide evenly.
    #[arg(long, requires = "seed")]
    pub drop_remainder: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub strata: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub strata: PathBuf,
    /// Assignment JSON; without it the CSV `treatment` column is used.
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    /// adj | adj4 | mpt | two-sample | saturated
    #[arg(long, default_value = "adj")]
    pub variance: String,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub theta0: f64,
    /// Restrict arm means to units with `attrition = 1`.
    #[arg(long)]
    pub attrition: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Imputation model for `--input`: 1, 2 or 3.
    #[arg(long)]
    pub model: Option<u8>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `synthetic:<key=value,...>` with keys theta, gamma, gamma1, gamma0,
    /// sigma, noise.
    #[arg(long)]
    pub dgp: Option<String>,
    /// Comma-separated method descriptors, e.g. `none,mp-base,mp-x`.
    #[arg(long)]
    pub methods: String,
    #[arg(long)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    /// Units per replication (default: the input size, or 400).
    #[arg(long)]
    pub n_draw: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub pilot_fraction: f64,
    /// Test value; defaults to the population ATE.
    #[arg(long, allow_negative_numbers = true)]
    pub theta0: Option<f64>,
    #[arg(long)]
    pub greedy: bool,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub manifest: PathBuf,
}

/// Parsed `--method` of `pair`.
#[derive(Debug, Clone, PartialEq)]
pub enum PairMethod {
    Baseline,
    Scalar(String),
    Pilot,
    Mahalanobis,
    Penalized,
    Sets4(Box<PairMethod>),
    KStrata(TreatedFraction),
    KStrataByLabel(BTreeMap<u32, TreatedFraction>),
}

fn parse_fraction(text: &str) -> CliResult<TreatedFraction> {
    let (l, k) = text.split_once('/').ok_or_else(|| CliError::validation(format!("expected l/k, got `{text}`")))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| CliError::validation(format!("bad fraction `{text}`")));
    Ok(TreatedFraction::new(parse(l)?, parse(k)?)?)
}

impl PairMethod {
    pub fn parse(text: &str) -> CliResult<Self> {
        let text = text.trim();
        Ok(match text {
            "baseline" => Self::Baseline,
            "pilot" => Self::Pilot,
            "mahalanobis" => Self::Mahalanobis,
            "penalized" => Self::Penalized,
            t if t.starts_with("scalar:") => Self::Scalar(t["scalar:".len()..].to_string()),
            t if t.starts_with("sets4:") => {
                let inner = Self::parse(&t["sets4:".len()..])?;
                if matches!(inner, Self::Sets4(_) | Self::KStrata(_) | Self::KStrataByLabel(_)) {
                    return Err(CliError::validation(format!("`{t}`: sets of four need a pairing method inside")));
                }
                Self::Sets4(Box::new(inner))
            }
            t if t.starts_with("kstrata:") => {
                let body = &t["kstrata:".len()..];
                if body.contains('=') {
                    let mut plans = BTreeMap::new();
                    for part in body.split(',') {
                        let (label, frac) = part
                            .split_once('=')
                            .ok_or_else(|| CliError::validation(format!("bad plan `{part}` in `{t}`")))?;
                        let label = label.trim().parse::<u32>().map_err(|_| CliError::validation(format!("bad label in `{part}`")))?;
                        plans.insert(label, parse_fraction(frac)?);
                    }
                    Self::KStrataByLabel(plans)
                } else {
                    Self::KStrata(parse_fraction(body)?)
                }
            }
            t => return Err(CliError::validation(format!("unknown pairing method `{t}`"))),
        })
    }

    /// Stratum size the sample must divide into.
    fn multiple(&self) -> usize {
        match self {
            Self::Sets4(_) => 4,
            Self::KStrata(f) => f.size,
            Self::KStrataByLabel(plans) => plans.values().map(|f| f.size).fold(1, |a, b| a / gcd(a, b) * b),
            _ => 2,
        }
    }

    fn needs_pilot(&self) -> bool {
        match self {
            Self::Pilot | Self::Penalized => true,
            Self::Sets4(inner) => inner.needs_pilot(),
            _ => false,
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn column(sample: &Sample, name: &str) -> CliResult<Vec<f64>> {
    let j = sample
        .covariate_names
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| CliError::validation(format!("column `{name}` not found in the sample")))?;
    Ok(sample.covariates.column(j))
}

fn scalar_index(method: &PairMethod, sample: &Sample, pilot: Option<&PilotFit>) -> CliResult<Option<Vec<f64>>> {
    let x = &sample.covariates;
    Ok(match method {
        PairMethod::Baseline => Some(column(sample, BASELINE)?),
        PairMethod::Scalar(c) => Some(column(sample, c)?),
        PairMethod::Pilot => {
            let fit = pilot.expect("checked");
            Some((0..x.rows()).map(|i| fit.index(x.row(i))).collect())
        }
        _ => None,
    })
}

struct Built {
    strat: Stratification,
    cost: Option<f64>,
    solver: Solver,
    ridge: f64,
}

fn build_stratification(
    method: &PairMethod,
    sample: &Sample,
    labels: Option<&[u32]>,
    pilot: Option<&PilotFit>,
    solver: Solver,
) -> CliResult<Built> {
    let x = &sample.covariates;
    let from_pairing = |p: pairdesign_core::Pairing| Built {
        strat: p.stratification,
        cost: Some(p.cost),
        solver: p.solver,
        ridge: p.ridge_applied,
    };
    if let Some(labels) = labels {
        let mut ridge = 0.0;
        let plans: BTreeMap<u32, SubpopulationPlan> = match method {
            PairMethod::Sets4(_) => return Err(CliError::validation("sets of four cannot be built per label")),
            PairMethod::KStrataByLabel(fractions) => {
                let values = kstrata_values(method, sample, pilot)?;
                let spec = DistanceSpec::ScalarGap { values };
                fractions.iter().map(|(&l, &fraction)| (l, SubpopulationPlan { spec: spec.clone(), fraction })).collect()
            }
            m => {
                let spec = match m {
                    PairMethod::Mahalanobis => DistanceSpec::mahalanobis(x)?,
                    PairMethod::Penalized => DistanceSpec::penalized(pilot.expect("checked"))?,
                    m => DistanceSpec::ScalarGap { values: kstrata_values(m, sample, pilot)? },
                };
                ridge = spec.ridge_applied();
                let fraction = match m {
                    PairMethod::KStrata(f) => *f,
                    _ => TreatedFraction::HALF,
                };
                labels.iter().map(|&l| (l, SubpopulationPlan { spec: spec.clone(), fraction })).collect()
            }
        };
        let strat = compose_subpopulations(labels, &plans, Some(x), solver)?;
        return Ok(Built { strat, cost: None, solver, ridge });
    }
    Ok(match method {
        PairMethod::Baseline | PairMethod::Scalar(_) | PairMethod::Pilot => {
            let values = scalar_index(method, sample, pilot)?.expect("scalar");
            let strat = pair_by_scalar(&values)?;
            let cost = strat.strata.iter().map(|s| (values[s[0]] - values[s[1]]).powi(2)).sum();
            Built { strat, cost: Some(cost), solver: Solver::Exact, ridge: 0.0 }
        }
        PairMethod::Mahalanobis => from_pairing(pair_by_mahalanobis(x, solver)?),
        PairMethod::Penalized => from_pairing(penalized_pairing(x, pilot.expect("checked"), solver)?),
        PairMethod::Sets4(inner) => {
            let spec = match scalar_index(inner, sample, pilot)? {
                Some(values) => DistanceSpec::ScalarGap { values },
                None if **inner == PairMethod::Mahalanobis => DistanceSpec::mahalanobis(x)?,
                None => DistanceSpec::penalized(pilot.expect("checked"))?,
            };
            let with_x = (!matches!(spec, DistanceSpec::ScalarGap { .. })).then_some(x);
            from_pairing(match_sets_of_four(&spec, with_x, solver)?)
        }
        PairMethod::KStrata(f) => {
            let strat = k_strata_by_scalar(&kstrata_values(method, sample, pilot)?, *f)?;
            Built { strat, cost: None, solver: Solver::Exact, ridge: 0.0 }
        }
        PairMethod::KStrataByLabel(_) => unreachable!("per-label plans always receive labels"),
    })
}

/// Sorting index for `k`-unit strata: `g^τ` from the pilot arm fits when a
/// pilot is given, else the scalar of a scalar method, else the baseline.
fn kstrata_values(method: &PairMethod, sample: &Sample, pilot: Option<&PilotFit>) -> CliResult<Vec<f64>> {
    if let Some(values) = scalar_index(method, sample, pilot)? {
        return Ok(values);
    }
    match (pilot, method) {
        (Some(fit), PairMethod::KStrata(f)) => {
            let x = &sample.covariates;
            let mu1: Vec<f64> = (0..x.rows()).map(|i| fit.arms[1].predict(x.row(i))).collect();
            let mu0: Vec<f64> = (0..x.rows()).map(|i| fit.arms[0].predict(x.row(i))).collect();
            Ok(index_gtau(&mu1, &mu0, *f)?)
        }
        _ => column(sample, BASELINE),
    }
}

fn load_pilot(path: &Path, sample: &Sample) -> CliResult<(PilotFit, String)> {
    let pilot = load_sample(path)?.sample;
    if pilot.covariate_names != sample.covariate_names {
        return Err(CliError::validation(format!(
            "{}: pilot covariates {:?} differ from sample covariates {:?}",
            path.display(),
            pilot.covariate_names,
            sample.covariate_names
        )));
    }
    let fit = ols_fit_pilot(&pilot).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    Ok((fit, sample_digest(&pilot)))
}

/// A produced document and what the manifest should record about it.
pub struct Output {
    pub json: String,
    pub inputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn cmd_pair(a: &PairArgs) -> CliResult<Output> {
    let LoadedSample { sample, labels } = load_sample(&a.input)?;
    let method = PairMethod::parse(&a.method)?;
    let mut inputs = vec![a.input.clone()];
    let pilot = match (&a.pilot, method.needs_pilot() || matches!(method, PairMethod::KStrata(_))) {
        (Some(p), _) => {
            inputs.push(p.clone());
            Some(load_pilot(p, &sample)?)
        }
        (None, true) if method.needs_pilot() => {
            return Err(CliError::validation(format!("method `{}` needs --pilot", a.method)))
        }
        _ => None,
    };
    let n = sample.n_units();
    let multiple = method.multiple();
    let kept: Vec<usize> = if a.drop_remainder {
        drop_remainder(n, multiple, a.seed.expect("clap requires seed")).0
    } else {
        (0..n).collect()
    };
    let by_label = a.by_label || matches!(method, PairMethod::KStrataByLabel(_));
    let sub_labels: Option<Vec<u32>> = if by_label {
        let l = labels.as_ref().ok_or_else(|| CliError::validation("column `label` not found in the sample"))?;
        Some(kept.iter().map(|&i| l[i]).collect())
    } else {
        None
    };
    if !by_label && !kept.len().is_multiple_of(multiple) {
        return Err(CliError::validation(format!(
            "{} units do not divide into strata of {multiple}; pass --drop-remainder --seed <s>",
            kept.len()
        )));
    }
    let sub = sample.subset(&kept);
    let solver = if a.greedy { Solver::Greedy } else { Solver::Exact };
    let built = build_stratification(&method, &sub, sub_labels.as_deref(), pilot.as_ref().map(|p| &p.0), solver)?;
    let strat = built.strat.lift(&kept, n)?;
    let doc = StratificationDoc {
        format: STRATIFICATION_FORMAT.into(),
        method: a.method.trim().to_string(),
        solver: built.solver,
        ridge_applied: built.ridge,
        cost: built.cost,
        seed: if strat.excluded.is_empty() { None } else { a.seed },
        pilot_digest: pilot.map(|p| p.1),
        sample_digest: sample_digest(&sample),
        unit_ids: sample.unit_ids.clone(),
        stratification: strat,
    };
    Ok(Output { json: to_json(&doc), inputs, seed: doc.seed, out: a.out.clone() })
}

pub fn cmd_assign(a: &AssignArgs) -> CliResult<Output> {
    let doc: StratificationDoc = read_json(&a.strata).map_err(CliError::validation)?;
    let strat = pairdesign_core::design::validate_with_excluded(
        doc.stratification.strata.clone(),
        doc.stratification.treated_counts.clone(),
        doc.stratification.n_units,
        doc.stratification.excluded.clone(),
    )?;
    let assignment = assign_treatments(&strat, a.seed);
    let out = AssignmentDoc {
        format: ASSIGNMENT_FORMAT.into(),
        seed: a.seed,
        method: doc.method,
        sample_digest: doc.sample_digest,
        stratification_digest: stratification_digest(&strat),
        treatment: assignment.bits,
    };
    Ok(Output { json: to_json(&out), inputs: vec![a.strata.clone()], seed: Some(a.seed), out: a.out.clone() })
}

pub fn cmd_estimate(a: &EstimateArgs) -> CliResult<Output> {
    let LoadedSample { sample, labels } = load_sample(&a.input)?;
    let doc: StratificationDoc = read_json(&a.strata).map_err(CliError::validation)?;
    let digest = sample_digest(&sample);
    if digest != doc.sample_digest {
        return Err(CliError::integrity(format!(
            "{} does not match the sample the stratification in {} was built from",
            a.input.display(),
            a.strata.display()
        )));
    }
    let strat = doc.stratification;
    let strat_digest = stratification_digest(&strat);
    let mut inputs = vec![a.input.clone(), a.strata.clone()];
    let (d, seed) = match &a.assignment {
        Some(path) => {
            inputs.push(path.clone());
            let asg: AssignmentDoc = read_json(path).map_err(CliError::validation)?;
            if asg.stratification_digest != strat_digest || asg.sample_digest != digest {
                return Err(CliError::integrity(format!(
                    "{} was not drawn from the stratification in {}",
                    path.display(),
                    a.strata.display()
                )));
            }
            if let Some(csv_d) = &sample.treatment {
                if strat.included().iter().any(|&i| csv_d[i] != asg.treatment[i]) {
                    return Err(CliError::integrity(format!(
                        "`treatment` column of {} disagrees with {}",
                        a.input.display(),
                        path.display()
                    )));
                }
            }
            (asg.treatment, Some(asg.seed))
        }
        None => (
            sample.treatment.clone().ok_or_else(|| CliError::validation("no --assignment and no `treatment` column"))?,
            None,
        ),
    };
    let y = sample.outcomes.as_deref().ok_or_else(|| CliError::validation("column `outcome` not found in the sample"))?;
    let mut subpopulations = Vec::new();
    let report = if a.attrition {
        let attr = sample.attrition.as_deref().ok_or_else(|| CliError::validation("column `attrition` not found"))?;
        let keep: Vec<u8> = (0..sample.n_units()).map(|i| attr[i] * !strat.excluded.contains(&i) as u8).collect();
        theta_attrition(y, &d, &keep, a.theta0)?
    } else {
        match a.variance.as_str() {
            "adj" => estimate_adjusted(y, &d, &strat, a.theta0)?,
            "adj4" => estimate(y, &d, &strat, VarianceMethod::AdjustedFour, a.theta0)?,
            "mpt" => estimate(y, &d, &strat, VarianceMethod::MatchedPairsT, a.theta0)?,
            "two-sample" => estimate(y, &d, &strat, VarianceMethod::TwoSample, a.theta0)?,
            "saturated" => {
                let labels = labels.unwrap_or_else(|| vec![1; sample.n_units()]);
                let (report, parts) = saturated_parts(y, &d, &labels, &strat, a.theta0)?;
                subpopulations = parts;
                report
            }
            v => return Err(CliError::validation(format!("unknown variance estimator `{v}`"))),
        }
    };
    let out = EstimateDoc {
        format: ESTIMATE_FORMAT.into(),
        method: doc.method,
        assignment_seed: seed,
        sample_digest: digest,
        stratification_digest: strat_digest,
        report,
        subpopulations,
    };
    Ok(Output { json: to_json(&out), inputs, seed, out: a.out.clone() })
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<Output> {
    let mut inputs = Vec::new();
    let (population, label, names, input_digest, n_default) = match (&a.input, &a.dgp) {
        (Some(path), None) => {
            let model = a.model.ok_or_else(|| CliError::validation("--input needs --model 1|2|3"))?;
            let sample = load_sample(path)?.sample;
            inputs.push(path.clone());
            let pop = impute(model, &sample)?;
            let n = sample.n_units();
            (Population::Imputed(pop), format!("model:{model}"), sample.covariate_names.clone(), Some(sample_digest(&sample)), n)
        }
        (None, Some(spec)) => {
            let body = spec
                .strip_prefix("synthetic:")
                .or_else(|| (spec == "synthetic").then_some(""))
                .ok_or_else(|| CliError::validation(format!("unknown DGP `{spec}`")))?;
            let dgp = LinearDgp::parse(body)?;
            let mut names = vec!["x".to_string()];
            if dgp.noise_covariate {
                names.push("noise".into());
            }
            (Population::Synthetic(dgp), format!("synthetic:{body}"), names, None, 400)
        }
        _ => return Err(CliError::validation("give exactly one of --input or --dgp")),
    };
    let methods = a
        .methods
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(|m| MethodSpec::parse(m, &names))
        .collect::<Result<Vec<_>, _>>()?;
    let mut config = SimConfig::new(methods, a.reps, a.n_draw.unwrap_or(n_default), a.seed);
    config.pilot_fraction = a.pilot_fraction;
    config.theta0 = a.theta0;
    config.solver = if a.greedy { Solver::Greedy } else { Solver::Exact };
    let report = run_parallel(population, config.clone(), a.threads)?;
    let doc = SimulationDoc { format: SIMULATION_FORMAT.into(), population: label, input_digest, config, report };
    Ok(Output { json: to_json(&doc), inputs, seed: Some(a.seed), out: a.out.clone() })
}

fn cmd_verify(a: &VerifyArgs) -> CliResult<()> {
    let manifest: RunManifest = read_json(&a.manifest).map_err(CliError::validation)?;
    manifest.verify().map_err(CliError::integrity)
}

fn write_output(output: Output, argv: &[String], started: f64) -> CliResult<()> {
    let Some(path) = output.out else {
        print!("{}", output.json);
        return Ok(());
    };
    std::fs::write(&path, &output.json).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))?;
    let digest = |p: &Path| FileDigest::of(p).map_err(|e| CliError::internal(format!("{}: {e}", p.display())));
    let manifest = RunManifest {
        command: argv.to_vec(),
        inputs: output.inputs.iter().map(|p| digest(p)).collect::<CliResult<_>>()?,
        output: digest(&path)?,
        seed: output.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        started_at: started,
        finished_at: now(),
    };
    let mpath = manifest_path(&path);
    std::fs::write(&mpath, to_json(&manifest)).map_err(|e| CliError::internal(format!("{}: {e}", mpath.display())))
}

/// Parse and run; `argv[0]` is the program name.
pub fn run(argv: &[String]) -> CliResult<()> {
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::validation(e.to_string()))?;
    let started = now();
    let output = match &cli.command {
        Command::Pair(a) => cmd_pair(a)?,
        Command::Assign(a) => cmd_assign(a)?,
        Command::Estimate(a) => cmd_estimate(a)?,
        Command::Simulate(a) => cmd_simulate(a)?,
        Command::Verify(a) => return cmd_verify(a),
    };
    write_output(output, argv, started)
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    let argv: Vec<String> = std::env::args().collect();
    if let Err(e) = Cli::try_parse_from(&argv) {
        if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
            let _ = e.print();
            return 0;
        }
    }
    match run(&argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
