mod common;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::{kron, kron_all, random_scale, random_spd, rng};
use ttreg::distributions::Nu;
use ttreg::estimators::Method;
use ttreg::inference::{
    active_set, confidence_interval, cov_l, cov_n, cov_ost, cov_t, method_covariance, normal_quantile, wald_test,
    AsymptoticCov, CovFlavor, LinearRestriction, Restriction,
};
use ttreg::tensor::KroneckerScale;

fn min_eig(m: DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().min()
}

#[test]
fn t_covariance_closed_form() {
    let sx = DMatrix::identity(1, 1);
    let xi = KroneckerScale::identity(&[2, 2]);
    let all: Vec<usize> = (0..4).collect();
    let v = cov_t(&sx, &xi, Nu::Finite(4.0), &all).unwrap();
    assert_relative_eq!(v.matrix, DMatrix::identity(4, 4) * (10.0 / 8.0), epsilon = 1e-14);
    assert_eq!(v.flavor, CovFlavor::T);
}

#[test]
fn covariances_match_materialized_oracles() {
    let mut r = rng(1);
    let sx = random_spd(&mut r, 2);
    let xi = random_scale(&mut r, &[2, 3]);
    let active = vec![0, 2, 3, 5, 6, 9, 11];
    let nu = Nu::Finite(5.0);
    let sigma = kron_all(xi.modes());
    let omega = sigma.clone().try_inverse().unwrap();
    let pick = |m: &DMatrix<f64>| m.select_rows(&active).select_columns(&active);
    let fisher = pick(&kron(&sx, &omega)).try_inverse().unwrap();
    let bread = pick(&kron(&sx, &DMatrix::identity(6, 6))).try_inverse().unwrap();
    let meat = pick(&kron(&sx, &sigma));

    let t = cov_t(&sx, &xi, nu, &active).unwrap();
    let n = cov_n(&sx, &xi, nu, &active).unwrap();
    let l = cov_l(&sx, &xi, nu, &active).unwrap();
    assert_relative_eq!(t.matrix, &fisher * (13.0 / 11.0), epsilon = 1e-12, max_relative = 1e-9);
    assert_relative_eq!(n.matrix, &fisher * (5.0 / 3.0), epsilon = 1e-12, max_relative = 1e-9);
    assert_relative_eq!(l.matrix, &bread * meat * &bread * (5.0 / 3.0), epsilon = 1e-12, max_relative = 1e-9);
}

#[test]
fn ost_covariance_is_near_t_for_large_p() {
    let sx = DMatrix::identity(1, 1);
    let xi = KroneckerScale::identity(&[10, 10]);
    let all: Vec<usize> = (0..100).collect();
    let nu = Nu::Finite(4.0);
    let t = cov_t(&sx, &xi, nu, &all).unwrap();
    let l = cov_l(&sx, &xi, nu, &all).unwrap();
    let v = cov_ost(&t, &l, nu, 100).unwrap();
    let rel = (&v.matrix - &t.matrix).norm() / t.matrix.norm();
    assert!(rel < 1e-3, "{}", rel);

    let same = cov_ost(&t, &t, nu, 100).unwrap();
    assert_eq!(same.matrix, t.matrix);
}

#[test]
fn ost_mixture_arithmetic() {
    let xi = KroneckerScale::identity(&[2, 2]);
    let sx = DMatrix::identity(1, 1) * 2.0;
    let all: Vec<usize> = (0..4).collect();
    let nu = Nu::Finite(4.0);
    let t = cov_t(&sx, &xi, nu, &all).unwrap();
    let l = cov_l(&sx, &xi, nu, &all).unwrap();
    let v = cov_ost(&t, &l, nu, 4).unwrap();
    let expected = &t.matrix + (&l.matrix - &t.matrix) * 0.04;
    assert_relative_eq!(v.matrix, expected, epsilon = 1e-14);
    let inf = cov_ost(&t, &l, Nu::Infinite, 4).unwrap();
    assert_eq!(inf.matrix, t.matrix);
}

#[test]
fn method_dispatch() {
    let mut r = rng(2);
    let sx = random_spd(&mut r, 2);
    let xi = random_scale(&mut r, &[2, 2]);
    let b = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 2.0, 0.5, 0.0, 0.0, 0.0]);
    let active = active_set(&b);
    assert_eq!(active, vec![0, 2, 5]);
    let nu = Nu::Finite(4.0);
    let by = |m| method_covariance(m, &b, &[2, 2], Some(&xi), nu, &sx).unwrap();
    assert_eq!(by(Method::Apt).matrix, cov_t(&sx, &xi, nu, &active).unwrap().matrix);
    assert_eq!(by(Method::Apn).matrix, cov_n(&sx, &xi, nu, &active).unwrap().matrix);
    assert_eq!(by(Method::Apl).matrix, cov_l(&sx, &xi, nu, &active).unwrap().matrix);
    assert_eq!(by(Method::Ost).flavor, CovFlavor::Ost);
    assert!(cov_n(&sx, &xi, Nu::Finite(2.0), &active).is_err());
}

#[test]
fn scalar_wald_statistic() {
    let cov = AsymptoticCov {
        matrix: DMatrix::from_element(1, 1, 2.0),
        flavor: CovFlavor::T,
        active_set: vec![1],
    };
    let b = DMatrix::from_column_slice(3, 1, &[0.0, 1.3, 0.0]);
    let h = LinearRestriction::coordinates(&[1], 3);
    let res = wald_test(&b, &cov, 50, &h, &DVector::from_element(1, 1.0)).unwrap();
    assert_relative_eq!(res.statistic, 50.0 * 0.09 / 2.0, max_relative = 1e-12);
    assert_eq!(res.df, 1);
    assert!(h.describe().contains("b[1]"));

    let off = LinearRestriction::coordinates(&[0], 3);
    assert!(wald_test(&b, &cov, 50, &off, &DVector::from_element(1, 0.0)).is_err());
}

#[test]
fn chi_square_tail() {
    // T = n d²/V with n = 1, V = 1, d² = 3.84.
    let cov = AsymptoticCov {
        matrix: DMatrix::identity(1, 1),
        flavor: CovFlavor::T,
        active_set: vec![0],
    };
    let b = DMatrix::from_element(1, 1, 3.84f64.sqrt());
    let h = LinearRestriction::coordinates(&[0], 1);
    let res = wald_test(&b, &cov, 1, &h, &DVector::zeros(1)).unwrap();
    assert!((res.p_value - 0.05).abs() < 1e-3, "{}", res.p_value);
}

#[test]
fn confidence_intervals() {
    assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-6);
    let cov = AsymptoticCov {
        matrix: DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.0])),
        flavor: CovFlavor::L,
        active_set: vec![0, 1],
    };
    let b = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
    let (lo, hi) = confidence_interval(&b, &cov, 100, 0, 0.95).unwrap();
    assert_relative_eq!(hi - lo, 2.0 * normal_quantile(0.975) * 0.2, max_relative = 1e-12);
    assert_relative_eq!(0.5 * (lo + hi), 1.0, epsilon = 1e-15);
    assert!(confidence_interval(&b, &cov, 100, 1, 0.95).is_err());
    assert!(confidence_interval(&b, &cov, 100, 0, 1.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn loewner_order(seed in any::<u64>(), nu in 2.5f64..30.0) {
        let mut r = rng(seed);
        let sx = random_spd(&mut r, 2);
        let xi = random_scale(&mut r, &[2, 2]);
        let active: Vec<usize> = (0..8).filter(|i| (seed >> i) & 1 == 1 || *i == 0).collect();
        let nu = Nu::Finite(nu);
        let t = cov_t(&sx, &xi, nu, &active).unwrap().matrix;
        let n = cov_n(&sx, &xi, nu, &active).unwrap().matrix;
        let l = cov_l(&sx, &xi, nu, &active).unwrap().matrix;
        let scale = l.norm();
        prop_assert!(min_eig(&l - &n) >= -1e-10 * scale);
        prop_assert!(min_eig(&n - &t) > 0.0);
    }

    #[test]
    fn wald_is_invariant_to_row_scaling(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut r = rng(seed);
        let v = random_spd(&mut r, 2);
        let cov = AsymptoticCov { matrix: v, flavor: CovFlavor::T, active_set: vec![0, 1] };
        let b = DMatrix::from_column_slice(2, 1, &[0.3, -0.7]);
        let h1 = LinearRestriction { matrix: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]) };
        let h2 = LinearRestriction { matrix: DMatrix::from_row_slice(1, 2, &[c, c]) };
        let a = wald_test(&b, &cov, 30, &h1, &DVector::zeros(1)).unwrap();
        let z = wald_test(&b, &cov, 30, &h2, &DVector::zeros(1)).unwrap();
        prop_assert!((a.statistic - z.statistic).abs() <= 1e-9 * a.statistic.max(1.0));
    }
}
