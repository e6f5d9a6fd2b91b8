//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the code under test except for plain data types.
#![allow(dead_code)]

use pairdesign_core::{Matrix, Stratification};

/// Every perfect matching of `0..n` (n even), each as a list of `(low, high)`.
pub fn all_pairings(n: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(rest: &[usize], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if rest.is_empty() {
            out.push(acc.clone());
            return;
        }
        let first = rest[0];
        for k in 1..rest.len() {
            let mut next: Vec<usize> = rest[1..].to_vec();
            let partner = next.remove(k - 1);
            acc.push((first, partner));
            rec(&next, acc, out);
            acc.pop();
        }
    }
    let units: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    rec(&units, &mut Vec::new(), &mut out);
    out
}

/// Sum of `cost(i, j)` over pairs normalized to `(low, high)` and sorted.
pub fn canonical_cost(pairs: &[(usize, usize)], cost: impl Fn(usize, usize) -> f64) -> f64 {
    let mut p: Vec<(usize, usize)> = pairs.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    p.sort_unstable();
    p.iter().map(|&(a, b)| cost(a, b)).sum()
}

pub fn brute_force_min(n: usize, cost: impl Fn(usize, usize) -> f64 + Copy) -> f64 {
    all_pairings(n).iter().map(|p| canonical_cost(p, cost)).fold(f64::INFINITY, f64::min)
}

pub fn pairs_of(strat: &Stratification) -> Vec<(usize, usize)> {
    strat.strata.iter().map(|s| (s[0], s[1])).collect()
}

/// Textbook two-pass covariance with the `1/n` divisor.
pub fn two_pass_covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let p = rows[0].len();
    let mean: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    (0..p)
        .map(|a| {
            (0..p)
                .map(|b| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / n)
                .collect()
        })
        .collect()
}

pub fn to_nalgebra(m: &Matrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// `(x1 - x2)' Σ⁻¹ (x1 - x2)` with an explicit LU inverse.
pub fn mahalanobis_explicit(x1: &[f64], x2: &[f64], sigma: &Matrix) -> f64 {
    let inv = to_nalgebra(sigma).try_inverse().expect("invertible");
    let d = nalgebra::DVector::from_iterator(x1.len(), x1.iter().zip(x2).map(|(a, b)| a - b));
    (d.transpose() * inv * &d)[(0, 0)]
}

/// Every treatment vector honouring the per-stratum counts, by scanning all
/// `2^n` bit masks.
pub fn enumerate_assignments(strat: &Stratification) -> Vec<Vec<u8>> {
    let n = strat.n_units;
    assert!(n <= 20);
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        let d: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
        let ok = strat
            .strata
            .iter()
            .zip(&strat.treated_counts)
            .all(|(s, &c)| s.iter().filter(|&&i| d[i] == 1).count() == c)
            && strat.excluded.iter().all(|&i| d[i] == 0);
        if ok {
            out.push(d);
        }
    }
    out
}

/// Plain difference in arm means.
pub fn diff_means(y: &[f64], d: &[u8]) -> f64 {
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
    for (v, &di) in y.iter().zip(d) {
        if di == 1 {
            s1 += v;
            n1 += 1.0;
        } else {
            s0 += v;
            n0 += 1.0;
        }
    }
    s1 / n1 - s0 / n0
}

/// Nearest index with the other label by scanning all candidates; ties to
/// the lowest index.
pub fn nearest_other(dist: impl Fn(usize, usize) -> f64, d: &[u8]) -> Vec<usize> {
    let n = d.len();
    (0..n)
        .map(|i| {
            let mut best = None;
            for j in 0..n {
                if d[j] == d[i] {
                    continue;
                }
                match best {
                    None => best = Some((j, dist(i, j))),
                    Some((_, bd)) if dist(i, j) < bd => best = Some((j, dist(i, j))),
                    _ => {}
                }
            }
            best.unwrap().0
        })
        .collect()
}

/// Closed-form univariate least squares `(intercept, slope, mean sq. residual)`.
pub fn simple_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    (intercept, slope, ssr / n)
}
