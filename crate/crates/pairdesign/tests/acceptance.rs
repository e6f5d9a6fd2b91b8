//! Acceptance checks. Each criterion prints one `PASS` or `FAIL` line; the
//! process exits non-zero if any criterion fails.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;
mod corpus;

use std::io::Write;
use std::time::{Duration, Instant};

use pairdesign::core::design::{assign_treatments, assignment_distribution, Stratification};
use pairdesign::core::estimate::{
    diff_in_means, theta_attrition, theta_saturated, two_sample_variance, var_adjusted_four_raw,
    var_adjusted_pairs, var_adjusted_pairs_raw,
};
use pairdesign::core::linalg::{ols_fit_pilot, ArmFit, PilotFit};
use pairdesign::core::matching::{
    match_sets_of_four, min_weight_pairing, pair_by_scalar, penalized_pairing, DistanceSpec, Solver,
};
use pairdesign::core::sim::{draw_replication, LinearDgp, MethodSpec, Population, SimConfig, SimReport};
use pairdesign::core::{Matrix, Sample};
use pairdesign::parallel::run_parallel;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn within_time(start: Instant, limit: Duration, detail: String) -> Check {
    let took = start.elapsed();
    let detail = format!("{detail}; {:.2}s", took.as_secs_f64());
    if took <= limit {
        Ok(detail)
    } else {
        Err(format!("{detail} exceeds {}s", limit.as_secs()))
    }
}

fn random_symmetric(r: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = r.random_range(0.0..100.0);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

fn random_pairing(r: &mut ChaCha8Rng, n_units: usize, size: usize, treated: usize) -> Stratification {
    let mut units: Vec<usize> = (0..n_units).collect();
    units.shuffle(r);
    Stratification::uniform(units.chunks(size).map(|c| c.to_vec()).collect(), treated, n_units).unwrap()
}

fn random_assignment(r: &mut ChaCha8Rng, strat: &Stratification) -> Vec<u8> {
    assign_treatments(strat, r.random()).bits
}

fn matching_optimality() -> Check {
    let start = Instant::now();
    let mut r = rng(1);
    for n in [4usize, 6, 8, 10] {
        let pairings = oracle::all_pairings(n);
        let expected_count = (1..n).step_by(2).product::<usize>();
        if pairings.len() != expected_count {
            return Err(format!("oracle produced {} pairings for 2n={n}", pairings.len()));
        }
        for trial in 0..200 {
            let d = random_symmetric(&mut r, n);
            let got = min_weight_pairing(&d).map_err(|e| e.to_string())?.cost;
            let best = pairings
                .iter()
                .map(|p| oracle::canonical_cost(p, |i, j| d[(i, j)]))
                .fold(f64::INFINITY, f64::min);
            if got != best {
                return Err(format!("2n={n} trial {trial}: cost {got} vs optimum {best}"));
            }
        }
    }
    within_time(start, Duration::from_secs(30), "800 matrices, exact equality".into())
}

fn adjacent_pairing_optimality() -> Check {
    let mut r = rng(2);
    for n in [2usize, 4, 6, 8, 10] {
        let pairings = oracle::all_pairings(n);
        for trial in 0..200 {
            let g: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
            let gap = |i: usize, j: usize| (g[i] - g[j]) * (g[i] - g[j]);
            let s = pair_by_scalar(&g).map_err(|e| e.to_string())?;
            let got = oracle::canonical_cost(&oracle::pairs_of(&s), gap);
            let best = pairings.iter().map(|p| oracle::canonical_cost(p, gap)).fold(f64::INFINITY, f64::min);
            if got != best {
                return Err(format!("2n={n} trial {trial}: {got} vs {best}"));
            }
        }
    }
    Ok("1000 instances, exact equality".into())
}

fn mixing_lemma() -> Check {
    // Listed in the worked example, units numbered from 1.
    let six: Vec<Vec<u8>> = vec![
        vec![1, 1, 0, 0],
        vec![1, 0, 1, 0],
        vec![1, 0, 0, 1],
        vec![0, 1, 1, 0],
        vec![0, 1, 0, 1],
        vec![0, 0, 1, 1],
    ];
    let designs: [(&[[usize; 2]; 2], [[u8; 4]; 4]); 3] = [
        (&[[0, 1], [2, 3]], [[1, 0, 1, 0], [1, 0, 0, 1], [0, 1, 1, 0], [0, 1, 0, 1]]),
        (&[[0, 2], [1, 3]], [[1, 0, 0, 1], [1, 1, 0, 0], [0, 0, 1, 1], [0, 1, 1, 0]]),
        (&[[0, 3], [1, 2]], [[1, 0, 1, 0], [1, 1, 0, 0], [0, 1, 0, 1], [0, 0, 1, 1]]),
    ];
    let four = Stratification::uniform(vec![vec![0, 1, 2, 3]], 2, 4).unwrap();
    let law = assignment_distribution(&four, 4).map_err(|e| e.to_string())?;
    let mut expected = six.clone();
    expected.sort();
    if law.outcomes != expected || law.probability() != 1.0 / 6.0 {
        return Err(format!("four-unit stratum: {:?} at {}", law.outcomes, law.probability()));
    }
    let mut mixture: std::collections::BTreeMap<Vec<u8>, f64> = Default::default();
    for (pairs, listed) in designs {
        let s = Stratification::uniform(pairs.iter().map(|p| p.to_vec()).collect(), 1, 4).unwrap();
        let law = assignment_distribution(&s, 4).map_err(|e| e.to_string())?;
        let mut listed: Vec<Vec<u8>> = listed.iter().map(|v| v.to_vec()).collect();
        listed.sort();
        if law.outcomes != listed || law.probability() != 0.25 {
            return Err(format!("pair design {pairs:?} gives {:?}", law.outcomes));
        }
        for (v, p) in law.iter() {
            *mixture.entry(v.to_vec()).or_default() += p / 3.0;
        }
    }
    let worst = mixture.values().map(|p| (p - 1.0 / 6.0).abs()).fold(0.0, f64::max);
    if mixture.len() != 6 || worst > 1e-15 {
        return Err(format!("mixture {mixture:?}"));
    }
    Ok("six vectors at 1/6, equal to the mixture of the three pair designs".into())
}

fn nonnegativity() -> Check {
    let mut r = rng(4);
    let mut violations = 0;
    for _ in 0..1000 {
        let sets = r.random_range(1..12);
        let n = 4 * sets;
        let scale = 10f64.powi(r.random_range(-2..4));
        let y: Vec<f64> = (0..n).map(|_| scale * r.random_range(-1.0..1.0)).collect();
        let pairs = random_pairing(&mut r, n, 2, 1);
        let d = random_assignment(&mut r, &pairs);
        if var_adjusted_pairs_raw(&y, &d, &pairs).map_err(|e| e.to_string())? < 0.0 {
            violations += 1;
        }
        let fours = random_pairing(&mut r, n, 4, 2);
        let d = random_assignment(&mut r, &fours);
        if var_adjusted_four_raw(&y, &d, &fours).map_err(|e| e.to_string())? < 0.0 {
            violations += 1;
        }
    }
    if violations == 0 {
        Ok("1000 instances, 0 violations (unclamped estimators)".into())
    } else {
        Err(format!("{violations} negative estimates"))
    }
}

fn closed_form_limit() -> Check {
    let start = Instant::now();
    let dgp = LinearDgp::default();
    let pop = Population::Synthetic(dgp);
    let draw = draw_replication(&pop, 10_000, 5, 0);
    let x = draw.covariates.column(0);
    let paired = pair_by_scalar(&x).map_err(|e| e.to_string())?;
    let d = assign_treatments(&paired, 51).bits;
    let adj = var_adjusted_pairs(&draw.reveal(&d), &d, &paired).map_err(|e| e.to_string())?;

    let whole = Stratification::uniform(vec![(0..10_000).collect()], 5_000, 10_000).unwrap();
    let d = assign_treatments(&whole, 52).bits;
    let dm = diff_in_means(&draw.reveal(&d), &d).map_err(|e| e.to_string())?;
    let two = two_sample_variance(&dm);

    let sigma2 = dgp.sigma * dgp.sigma;
    let paired_limit = 2.0 * sigma2;
    let none_limit = 2.0 * sigma2 + dgp.gamma1 * dgp.gamma1 / 6.0;
    let detail = format!("adjusted {adj:.4} vs {paired_limit}, two-sample {two:.4} vs {none_limit:.4}");
    if (adj - paired_limit).abs() > 0.1 * paired_limit || (two - none_limit).abs() > 0.1 * none_limit {
        return Err(detail);
    }
    within_time(start, Duration::from_secs(10), detail)
}

fn simulate(dgp: &str, methods: &[&str], seed: u64) -> Result<SimReport, String> {
    let dgp = LinearDgp::parse(dgp).map_err(|e| e.to_string())?;
    let mut names = vec!["x".to_string()];
    if dgp.noise_covariate {
        names.push("noise".into());
    }
    let methods = methods
        .iter()
        .map(|m| MethodSpec::parse(m, &names))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    run_parallel(Population::Synthetic(dgp), SimConfig::new(methods, 2000, 400, seed), 0).map_err(|e| e.to_string())
}

fn find<'a>(report: &'a SimReport, text: &str) -> &'a pairdesign::core::sim::MethodSummary {
    let label = MethodSpec::parse(text, &["x".into(), "noise".into()]).unwrap().label();
    report.methods.iter().find(|m| m.method == label).expect("method in roster")
}

fn size_control(null: &SimReport, null_time: Duration) -> Check {
    let start = Instant::now() - null_time;
    let adj = find(null, "mp-base/adj").size;
    let het = simulate("gamma1=3,gamma0=1", &["none", "mp-base/adj", "mp-base/mpt"], 61)?;
    let het_adj = find(&het, "mp-base/adj").size;
    let het_mpt = find(&het, "mp-base/mpt").size;
    let detail = format!("null adjusted size {adj:.4}; heterogeneous adjusted {het_adj:.4}, mpt {het_mpt:.4}");
    if !(0.035..=0.065).contains(&adj) || het_mpt > het_adj + 0.01 {
        return Err(detail);
    }
    within_time(start, Duration::from_secs(300), detail)
}

fn mse_ordering(null: &SimReport, _: Duration) -> Check {
    let informative = find(null, "mp-base/adj").mse_ratio_vs_none;
    let noise = find(null, "mp-col:noise/adj").mse_ratio_vs_none;
    let detail = format!("MSE ratio on X {informative:.4}, on noise {noise:.4}");
    if (0.6..=0.9).contains(&informative) && (0.9..=1.1).contains(&noise) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn penalized_identity() -> Check {
    let mut r = rng(8);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = r.random_range(1..5);
        let m = r.random_range(2 * p + 4..40);
        let x: Vec<Vec<f64>> = (0..m).map(|_| (0..p).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..m).map(|i| x[i].iter().sum::<f64>() + r.random_range(-1.0..1.0)).collect();
        let mut d: Vec<u8> = (0..m).map(|i| (i % 2) as u8).collect();
        d.shuffle(&mut r);
        let pilot = Sample::new(Matrix::from_rows(&x).unwrap()).unwrap().with_outcomes(y).unwrap();
        let fit = ols_fit_pilot(&pilot.with_treatment(d).unwrap()).map_err(|e| e.to_string())?;
        let spec = DistanceSpec::penalized(&fit).map_err(|e| e.to_string())?;
        let units = Matrix::from_vec(2, p, (0..2 * p).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap();
        let z = spec.embed(Some(&units)).map_err(|e| e.to_string())?;
        let euclid: f64 = z.row(0).iter().zip(z.row(1)).map(|(a, b)| (a - b) * (a - b)).sum();
        let diff: Vec<f64> = units.row(0).iter().zip(units.row(1)).map(|(a, b)| a - b).collect();
        let lin: f64 = diff.iter().zip(&fit.beta_sum).map(|(a, b)| a * b).sum();
        let mut quad = 0.0;
        for i in 0..p {
            for j in 0..p {
                quad += diff[i] * fit.omega_sum[(i, j)] * diff[j];
            }
        }
        let ridge = spec.ridge_applied() * diff.iter().map(|v| v * v).sum::<f64>();
        let err = (euclid - (lin * lin + quad + ridge)).abs();
        worst = worst.max(err);
        if err > 1e-8 {
            return Err(format!("identity off by {err}"));
        }
    }
    for _ in 0..200 {
        let p = r.random_range(1..4);
        let n = 2 * r.random_range(1..10);
        let x = Matrix::from_vec(n, p, (0..n * p).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let beta: Vec<f64> = (0..p).map(|_| r.random_range(-2.0..2.0)).collect();
        let arm = ArmFit {
            n: 0,
            intercept: 0.0,
            slopes: vec![0.0; p],
            nu2: 0.0,
            slope_variance: Matrix::zeros(p, p),
            rank_deficient: false,
        };
        let fit = PilotFit { beta_sum: beta, omega_sum: Matrix::zeros(p, p), m_pilot: 0, arms: [arm.clone(), arm], rank_deficient: false };
        let index: Vec<f64> = (0..n).map(|i| fit.index(x.row(i))).collect();
        let pen = penalized_pairing(&x, &fit, Solver::Exact).map_err(|e| e.to_string())?;
        if pen.stratification != pair_by_scalar(&index).map_err(|e| e.to_string())? {
            return Err("zero penalty strata differ from index pairing".into());
        }
    }
    Ok(format!("max error {worst:.2e} over 1000 fits; 200 zero-penalty cases identical"))
}

fn unbiasedness() -> Check {
    let mut r = rng(9);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let y1: Vec<f64> = (0..8).map(|_| r.random_range(-3.0..3.0)).collect();
        let y0: Vec<f64> = (0..8).map(|_| r.random_range(-3.0..3.0)).collect();
        let x: Vec<f64> = (0..8).map(|_| r.random_range(0.0..1.0)).collect();
        let ate = y1.iter().zip(&y0).map(|(a, b)| a - b).sum::<f64>() / 8.0;
        let fours = match_sets_of_four(&DistanceSpec::ScalarGap { values: x.clone() }, None, Solver::Exact)
            .map_err(|e| e.to_string())?
            .stratification;
        let designs = [
            pair_by_scalar(&x).map_err(|e| e.to_string())?,
            fours,
            Stratification::uniform(vec![(0..8).collect()], 4, 8).unwrap(),
        ];
        for s in &designs {
            let law = assignment_distribution(s, 8).map_err(|e| e.to_string())?;
            if law.outcomes.len() != oracle::enumerate_assignments(s).len() {
                return Err("support size disagrees with the enumeration oracle".into());
            }
            let mean: f64 = law
                .iter()
                .map(|(d, p)| {
                    let y: Vec<f64> = (0..8).map(|i| if d[i] == 1 { y1[i] } else { y0[i] }).collect();
                    p * oracle::diff_means(&y, d)
                })
                .sum();
            worst = worst.max((mean - ate).abs());
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max |mean - ATE| {worst:.2e}"))
    } else {
        Err(format!("max |mean - ATE| {worst:.2e}"))
    }
}

fn saturated_reduction() -> Check {
    let mut r = rng(10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 2 * r.random_range(2..30);
        let s = random_pairing(&mut r, n, 2, 1);
        let d = random_assignment(&mut r, &s);
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let expected = oracle::diff_means(&y, &d);
        let sat = theta_saturated(&y, &d, &vec![1; n], &s, 0.0).map_err(|e| e.to_string())?;
        worst = worst.max((sat.theta_hat - expected).abs());
        let att = theta_attrition(&y, &d, &vec![1; n], 0.0).map_err(|e| e.to_string())?;
        let plain = diff_in_means(&y, &d).map_err(|e| e.to_string())?;
        if att.theta_hat != plain.theta_hat {
            return Err(format!("attrition {} vs {}", att.theta_hat, plain.theta_hat));
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max |sat - diff| {worst:.2e}; attrition exact"))
    } else {
        Err(format!("max |sat - diff| {worst:.2e}"))
    }
}

fn pipeline_determinism() -> Check {
    let mut runs = Vec::new();
    for threads in [1, 4] {
        let work = tempfile::tempdir().map_err(|e| e.to_string())?;
        corpus::run_binary(work.path(), threads)?;
        let bad = corpus::mismatches(work.path());
        if !bad.is_empty() {
            return Err(format!("threads={threads}: differs from golden: {}", bad.join(", ")));
        }
        runs.push(work);
    }
    Ok(format!("{} outputs byte-identical to golden at 1 and 4 threads", corpus::STEPS.len()))
}

fn main() {
    let started = Instant::now();
    let null = simulate("noise=1", &["none", "mp-base", "mp-col:noise"], 71);
    let null_time = started.elapsed();
    let shared = |f: fn(&SimReport, Duration) -> Check| -> Check {
        match &null {
            Ok(report) => f(report, null_time),
            Err(e) => Err(e.clone()),
        }
    };
    let results: Vec<(&str, Check)> = vec![
        ("1 matching optimality", matching_optimality()),
        ("2 adjacent pairing optimality", adjacent_pairing_optimality()),
        ("3 four-unit mixing", mixing_lemma()),
        ("4 variance nonnegativity", nonnegativity()),
        ("5 closed-form variance limits", closed_form_limit()),
        ("6 size control", shared(size_control)),
        ("7 MSE ordering", shared(mse_ordering)),
        ("8 penalized identity", penalized_identity()),
        ("9 unbiasedness over randomization", unbiasedness()),
        ("10 saturated reduction", saturated_reduction()),
        ("11 pipeline determinism", pipeline_determinism()),
    ];
    let mut out = std::io::stdout().lock();
    let mut failed = 0;
    for (name, result) in &results {
        match result {
            Ok(detail) => writeln!(out, "PASS {name}: {detail}").unwrap(),
            Err(detail) => {
                failed += 1;
                writeln!(out, "FAIL {name}: {detail}").unwrap();
            }
        }
    }
    writeln!(out, "{} of {} criteria passed", results.len() - failed, results.len()).unwrap();
    out.flush().unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}
