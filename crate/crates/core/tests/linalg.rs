mod oracle;

use pairdesign_core::linalg::{cholesky, mahalanobis_sq, ols_fit_pilot, sample_covariance, symmetric_eigen};
use pairdesign_core::{Error, Matrix, Sample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> Matrix {
    let a = random_matrix(rng, p, p);
    let mut s = a.transpose().matmul(&a).unwrap();
    for i in 0..p {
        s[(i, i)] += 0.1;
    }
    s
}

#[test]
fn covariance_examples() {
    let x = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
    assert_eq!(sample_covariance(&x).unwrap().as_slice(), &[1.0]);
    let same = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
    assert!(sample_covariance(&same).unwrap().as_slice().iter().all(|&v| v == 0.0));
    let one = Matrix::from_rows(&[[1.0]]).unwrap();
    assert_eq!(sample_covariance(&one), Err(Error::InsufficientRows { needed: 2, got: 1 }));
}

#[test]
fn covariance_matches_two_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_matrix(&mut rng, 50, 3);
    let rows: Vec<Vec<f64>> = (0..50).map(|i| x.row(i).to_vec()).collect();
    let expected = oracle::two_pass_covariance(&rows);
    let got = sample_covariance(&x).unwrap();
    for a in 0..3 {
        for b in 0..3 {
            assert!((got[(a, b)] - expected[a][b]).abs() < 1e-12);
        }
    }
}

#[test]
fn cholesky_examples() {
    let f = cholesky(&Matrix::identity(3)).unwrap();
    assert_eq!((f.upper_r.clone(), f.ridge_applied), (Matrix::identity(3), 0.0));
    let f = cholesky(&Matrix::from_rows(&[[4.0, 0.0], [0.0, 9.0]]).unwrap()).unwrap();
    assert_eq!(f.upper_r.as_slice(), &[2.0, 0.0, 0.0, 3.0]);

    let bb = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
    let f = cholesky(&bb).unwrap();
    assert!(f.ridge_applied > 0.0);
    let rtr = f.upper_r.transpose().matmul(&f.upper_r).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let target = bb[(i, j)] + if i == j { f.ridge_applied } else { 0.0 };
            assert!((rtr[(i, j)] - target).abs() <= 1e-9 * bb.max_abs());
        }
    }

    let asym = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
    assert_eq!(cholesky(&asym), Err(Error::NotSymmetric));
    let indefinite = Matrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]).unwrap();
    assert!(matches!(cholesky(&indefinite), Err(Error::Indefinite { .. })));
}

#[test]
fn mahalanobis_examples() {
    let id = cholesky(&Matrix::identity(2)).unwrap();
    assert_eq!(mahalanobis_sq(&[1.0, 1.0], &[1.0, 1.0], &id).unwrap(), 0.0);
    assert_eq!(mahalanobis_sq(&[3.0, 4.0], &[0.0, 0.0], &id).unwrap(), 25.0);
    assert!(matches!(mahalanobis_sq(&[1.0], &[1.0, 2.0], &id), Err(Error::DimensionMismatch { .. })));

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let sigma = random_spd(&mut rng, 4);
        let f = cholesky(&sigma).unwrap();
        let x1: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x2: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = mahalanobis_sq(&x1, &x2, &f).unwrap();
        let expected = oracle::mahalanobis_explicit(&x1, &x2, &sigma);
        assert!((got - expected).abs() <= 1e-10 * expected.max(1.0), "{got} vs {expected}");
        assert_eq!(got, mahalanobis_sq(&x2, &x1, &f).unwrap());
        // whitened Euclidean form
        let w = |v: &[f64]| f.whiten(v);
        let e: f64 = w(&x1).iter().zip(w(&x2)).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((got - e).abs() <= 1e-9 * got.max(1.0));
    }
}

fn pilot(x: &[Vec<f64>], y: &[f64], d: &[u8]) -> Sample {
    Sample::new(Matrix::from_rows(x).unwrap())
        .unwrap()
        .with_outcomes(y.to_vec())
        .unwrap()
        .with_treatment(d.to_vec())
        .unwrap()
}

#[test]
fn ols_exact_fit_has_zero_variance() {
    let beta = [1.5, -2.0];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let y: Vec<f64> = x.iter().map(|r| beta[0] * r[0] + beta[1] * r[1]).collect();
    let d: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
    let fit = ols_fit_pilot(&pilot(&x, &y, &d)).unwrap();
    for j in 0..2 {
        assert!((fit.beta_sum[j] - 2.0 * beta[j]).abs() < 1e-10);
    }
    assert!(fit.omega_sum.max_abs() < 1e-10);
}

#[test]
fn ols_matches_simple_regression() {
    let x = [0.0, 1.0, 2.0, 3.0, 4.0, 6.0];
    let y = [1.0, 2.5, 2.0, 4.5, 6.0, 1.5];
    let d = [1, 0, 1, 0, 1, 0];
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let fit = ols_fit_pilot(&pilot(&rows, &y, &d)).unwrap();
    for arm in [0u8, 1] {
        let idx: Vec<usize> = (0..6).filter(|&i| d[i] == arm).collect();
        let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let (a, b, nu2) = oracle::simple_regression(&xs, &ys);
        let f = &fit.arms[arm as usize];
        assert!((f.intercept - a).abs() < 1e-12);
        assert!((f.slopes[0] - b).abs() < 1e-12);
        assert!((f.nu2 - nu2).abs() < 1e-12);
        let sxx: f64 = xs.iter().map(|v| (v - xs.iter().sum::<f64>() / 3.0).powi(2)).sum();
        assert!((f.slope_variance[(0, 0)] - nu2 / sxx).abs() < 1e-12);
    }
}

#[test]
fn ols_homogeneity_and_residual_orthogonality() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
    let d: Vec<u8> = (0..30).map(|i| (i % 2) as u8).collect();
    let fit = ols_fit_pilot(&pilot(&x, &y, &d)).unwrap();
    let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
    let fit2 = ols_fit_pilot(&pilot(&x, &y2, &d)).unwrap();
    for j in 0..3 {
        assert!((fit2.beta_sum[j] - 2.0 * fit.beta_sum[j]).abs() < 1e-10);
        for k in 0..3 {
            assert!((fit2.omega_sum[(j, k)] - 4.0 * fit.omega_sum[(j, k)]).abs() < 1e-10);
        }
    }
    assert!(fit.omega_sum.is_symmetric(1e-10));
    let (values, _) = symmetric_eigen(&fit.omega_sum);
    assert!(values.iter().all(|&v| v >= -1e-9 * fit.omega_sum.trace()));
    for arm in [0u8, 1] {
        let f = &fit.arms[arm as usize];
        for col in 0..4 {
            let s: f64 = (0..30)
                .filter(|&i| d[i] == arm)
                .map(|i| {
                    let r = y[i] - f.predict(&x[i]);
                    if col == 0 { r } else { r * x[i][col - 1] }
                })
                .sum();
            assert!(s.abs() < 1e-8);
        }
    }
}

#[test]
fn ols_errors() {
    let x = vec![vec![0.0], vec![1.0], vec![2.0]];
    let err = ols_fit_pilot(&pilot(&x, &[1.0, 2.0, 3.0], &[1, 1, 0])).unwrap_err();
    assert!(matches!(err, Error::TooFewUnits { arm: 0, .. }));
    // identical covariates within an arm make its Gram matrix singular
    let x = vec![vec![1.0], vec![1.0], vec![1.0], vec![0.0], vec![1.0], vec![2.0]];
    let fit = ols_fit_pilot(&pilot(&x, &[1.0, 2.0, 3.0, 0.0, 1.0, 2.0], &[1, 1, 1, 0, 0, 0])).unwrap();
    assert!(fit.rank_deficient);
    assert!(fit.beta_sum.iter().all(|v| v.is_finite()));
}

proptest! {
    #[test]
    fn cholesky_reconstructs(seed in any::<u64>(), p in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(&mut rng, p);
        let f = cholesky(&a).unwrap();
        prop_assert!((0..p).all(|i| f.upper_r[(i, i)] > 0.0));
        let rtr = f.upper_r.transpose().matmul(&f.upper_r).unwrap();
        for i in 0..p {
            for j in 0..p {
                let target = a[(i, j)] + if i == j { f.ridge_applied } else { 0.0 };
                prop_assert!((rtr[(i, j)] - target).abs() <= 1e-9 * a.max_abs());
            }
        }
    }
}
