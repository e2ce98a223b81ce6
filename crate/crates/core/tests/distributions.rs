mod common;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;

use common::{kron_all, random_scale, random_tensor, rng};
use ttreg::distributions::{
    ecme_estimate_nu, em_fit_location_scale, log_density_tt, negative_log_likelihood, sample_tn, sample_tt, weight,
    BracketBound, EcmeOptions, EmOptions, Nu, TensorSampler, TensorTParams,
};
use ttreg::tensor::{ar_matrix, DenseTensor, KroneckerScale};

/// Multivariate t log density of `y` with location `mu` and scale `s`.
fn mvt_log_density(y: &DVector<f64>, mu: &DVector<f64>, s: &DMatrix<f64>, nu: f64) -> f64 {
    let p = y.len() as f64;
    let d = y - mu;
    let q = (d.transpose() * s.clone().try_inverse().unwrap() * &d)[(0, 0)];
    ln_gamma(0.5 * (nu + p)) - ln_gamma(0.5 * nu) - 0.5 * p * (nu * std::f64::consts::PI).ln()
        - 0.5 * s.determinant().ln()
        - 0.5 * (nu + p) * (1.0 + q / nu).ln()
}

/// Sample covariance of the vectorized draws in a `p_1×…×p_M×n` stack.
fn vec_covariance(stack: &DenseTensor) -> DMatrix<f64> {
    let n = *stack.dims().last().unwrap();
    let p = stack.len() / n;
    let m = DMatrix::from_column_slice(p, n, stack.data());
    let mean = m.column_mean();
    let c = m.map_with_location(|i, _, v| v - mean[i]);
    &c * c.transpose() / (n as f64 - 1.0)
}

fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn sampler(modes: Vec<DMatrix<f64>>, nu: Nu) -> TensorSampler {
    TensorSampler::new(&TensorTParams::centered(KroneckerScale::new(modes).unwrap(), nu)).unwrap()
}

#[test]
fn standard_normal_entries_have_unit_variance() {
    let s = sampler(vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)], Nu::Infinite);
    let (stack, _) = s.sample_stack(10_000, &mut rng(1));
    let n = 10_000.0;
    for i in 0..4 {
        let v: Vec<f64> = stack.data().iter().skip(i).step_by(4).copied().collect();
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        // The sample variance of n normals has standard error sqrt(2/n).
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n).sqrt(), "variance {}", var);
    }
}

#[test]
fn equal_seeds_give_equal_draws() {
    let xi = random_scale(&mut rng(2), &[2, 3]);
    let params = TensorTParams::centered(xi, Nu::Finite(5.0));
    let a = sample_tt(&params, &mut rng(9)).unwrap();
    let b = sample_tt(&params, &mut rng(9)).unwrap();
    assert_eq!(a, b);
    let normal = TensorTParams { nu: Nu::Infinite, ..params };
    assert_eq!(sample_tn(&normal, &mut rng(9)).unwrap(), sample_tn(&normal, &mut rng(9)).unwrap());
}

#[test]
fn normal_covariance_is_kronecker() {
    let s1 = ar_matrix(2, 0.5).unwrap();
    let s2 = DMatrix::identity(3, 3);
    let s = sampler(vec![s1.clone(), s2.clone()], Nu::Infinite);
    let (stack, _) = s.sample_stack(50_000, &mut rng(3));
    assert!(rel_frobenius(&vec_covariance(&stack), &kron_all(&[s1, s2])) < 0.05);
}

#[test]
fn infinite_nu_matches_normal_sampler() {
    let params = TensorTParams::centered(random_scale(&mut rng(4), &[2, 2]), Nu::Infinite);
    let (t, g) = sample_tt(&params, &mut rng(5)).unwrap();
    assert_eq!(t, sample_tn(&params, &mut rng(5)).unwrap());
    assert_eq!(g.g, vec![1.0]);
}

#[test]
fn t_covariance_is_inflated() {
    let s = sampler(vec![DMatrix::identity(4, 4)], Nu::Finite(8.0));
    let (stack, _) = s.sample_stack(50_000, &mut rng(6));
    let target = DMatrix::identity(4, 4) * (8.0 / 6.0);
    assert!(rel_frobenius(&vec_covariance(&stack), &target) < 0.05);
}

#[test]
fn standard_t4_density_at_zero() {
    let p = TensorTParams::centered(KroneckerScale::new(vec![DMatrix::identity(1, 1)]).unwrap(), Nu::Finite(4.0));
    let y = DenseTensor::zeros(&[1]).unwrap();
    assert_relative_eq!(log_density_tt(&y, &p).unwrap().exp(), 0.375, epsilon = 1e-14);
}

#[test]
fn density_matches_multivariate_t() {
    let mut r = rng(7);
    for nu in [1.5, 4.0, 30.0] {
        let dims = [2, 3, 2];
        let xi = random_scale(&mut r, &dims);
        let mu = random_tensor(&mut r, &dims);
        let y = random_tensor(&mut r, &dims);
        let s = kron_all(xi.modes());
        let oracle = mvt_log_density(&DVector::from_vec(y.vectorize()), &DVector::from_vec(mu.vectorize()), &s, nu);
        let p = TensorTParams::new(mu, xi, Nu::Finite(nu)).unwrap();
        assert!((log_density_tt(&y, &p).unwrap() - oracle).abs() < 1e-8);
    }
}

#[test]
fn density_is_invariant_to_rescaling() {
    let mut r = rng(8);
    let xi = random_scale(&mut r, &[2, 3]);
    let moved = KroneckerScale::new(vec![xi.modes()[0].clone() * 4.0, xi.modes()[1].clone() * 0.25]).unwrap();
    let y = random_tensor(&mut r, &[2, 3]);
    let a = log_density_tt(&y, &TensorTParams::centered(xi.clone(), Nu::Finite(4.0))).unwrap();
    let b = log_density_tt(&y, &TensorTParams::centered(moved.clone(), Nu::Finite(4.0))).unwrap();
    assert_relative_eq!(a, b, max_relative = 1e-12);
    assert_relative_eq!(xi.normalize().unwrap().modes()[0], moved.normalize().unwrap().modes()[0], max_relative = 1e-12);
}

#[test]
fn weight_examples() {
    assert_eq!(Nu::Finite(4.0).weight(4.0, 4), 1.0);
    assert!(Nu::Finite(4.0).weight(0.0, 4) > 1.0);
    assert_eq!(Nu::Finite(4.0).weight(0.0, 4), 2.0);
    let a = Nu::Finite(4.0).weight(1024.0, 1024);
    let b = Nu::Finite(20.0).weight(1024.0, 1024);
    assert!((a - b).abs() / b < 0.02);

    let id = KroneckerScale::identity(&[2, 2]);
    let y = DenseTensor::from_fn(&[2, 2], |_| 1.0).unwrap();
    let z = DenseTensor::zeros(&[2, 2]).unwrap();
    assert_eq!(weight(&y, &z, &id, Nu::Finite(4.0)).unwrap(), 1.0);
    assert_eq!(weight(&y, &z, &id, Nu::Infinite).unwrap(), 1.0);
}

#[test]
fn em_on_normal_data_is_stationary() {
    let s = sampler(vec![ar_matrix(3, 0.5).unwrap(), ar_matrix(2, 0.3).unwrap()], Nu::Infinite);
    let (stack, _) = s.sample_stack(200, &mut rng(10));
    let fit = em_fit_location_scale(&stack, Nu::Infinite, EmOptions::default()).unwrap();
    assert!(fit.converged);
    assert!(fit.weights.iter().all(|w| *w == 1.0));
    let resid = {
        let mut r = stack.clone();
        for c in r.data_mut().chunks_mut(6) {
            c.iter_mut().zip(fit.mu.data()).for_each(|(v, m)| *v -= m);
        }
        r
    };
    let st = ttreg::covariance::stationarity_residual(&resid, &fit.weights, &fit.xi).unwrap();
    assert!(st < 1e-8, "stationarity residual {}", st);
}

#[test]
fn em_recovers_location() {
    let mu = DenseTensor::new(vec![2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let params = TensorTParams::new(mu.clone(), KroneckerScale::identity(&[2, 2]), Nu::Finite(4.0)).unwrap();
    let s = TensorSampler::new(&params).unwrap();
    let (stack, _) = s.sample_stack(200, &mut rng(11));
    let fit = em_fit_location_scale(&stack, Nu::Finite(4.0), EmOptions::default()).unwrap();
    // Marginal variance ν/(ν−2) = 2 per entry.
    let se = (2.0f64 / 200.0).sqrt();
    for (a, b) in fit.mu.data().iter().zip(mu.data()) {
        assert!((a - b).abs() < 3.0 * se, "{} vs {}", a, b);
    }
    for w in fit.nll_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-10 * w[0].abs());
    }
    let nll = negative_log_likelihood(&stack, &fit.mu, &fit.xi, Nu::Finite(4.0)).unwrap();
    assert_relative_eq!(nll, *fit.nll_trace.last().unwrap(), max_relative = 1e-12);
}

#[test]
fn em_rejects_single_sample() {
    let stack = DenseTensor::zeros(&[2, 2, 1]).unwrap();
    assert!(em_fit_location_scale(&stack, Nu::Finite(4.0), EmOptions::default()).is_err());
}

#[test]
fn ecme_flags_normal_data() {
    let s = sampler(vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)], Nu::Infinite);
    let (stack, _) = s.sample_stack(2000, &mut rng(12));
    let est = ecme_estimate_nu(&stack, EcmeOptions::default()).unwrap();
    assert_eq!(est.at_bound, Some(BracketBound::Upper));
    assert_eq!(est.nu, EcmeOptions::default().upper);
}

#[test]
fn ecme_recovers_nu() {
    for seed in 0..20 {
        let s = sampler(vec![ar_matrix(2, 0.5).unwrap(), DMatrix::identity(2, 2)], Nu::Finite(6.0));
        let (stack, _) = s.sample_stack(2000, &mut rng(100 + seed));
        let est = ecme_estimate_nu(&stack, EcmeOptions::default()).unwrap();
        assert!(est.at_bound.is_none());
        assert!((4.0..=9.0).contains(&est.nu), "seed {} gave {}", seed, est.nu);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_is_finite_and_peaks_at_location(seed in any::<u64>(), nu in 0.5f64..50.0) {
        let mut r = rng(seed);
        let dims = [2, 2];
        let xi = random_scale(&mut r, &dims);
        let mu = random_tensor(&mut r, &dims);
        let y = random_tensor(&mut r, &dims);
        let p = TensorTParams::new(mu.clone(), xi, Nu::Finite(nu)).unwrap();
        let at_y = log_density_tt(&y, &p).unwrap();
        let at_mu = log_density_tt(&mu, &p).unwrap();
        prop_assert!(at_y.is_finite());
        prop_assert!(at_y <= at_mu);
    }
}
