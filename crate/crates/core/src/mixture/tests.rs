use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use super::*;
use crate::rng::{Domain, Stream};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn two_1d(a: f64, b: f64) -> Mixture {
    Mixture::gaussian_1d(&[a, b], &[1.0, 1.0], &[0.5, 0.5]).unwrap()
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

#[test]
fn standard_normal_log_density_at_zero() {
    let m = Mixture::gaussian_1d(&[0.0], &[1.0], &[1.0]).unwrap();
    assert!((m.log_density(&[0.0]).unwrap() + 0.5 * LN_2PI).abs() < 1e-15);
}

#[test]
fn symmetric_pair_log_density_at_midpoint() {
    let m = two_1d(-3.0, 3.0);
    let expect = ((-4.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt()).ln();
    assert!((m.log_density(&[0.0]).unwrap() - expect).abs() < 1e-14);
}

#[test]
fn log_density_matches_naive_summation() {
    let m = two_1d(0.0, 4.0);
    let pdf = |x: f64, mu: f64| (-(x - mu) * (x - mu) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let naive = (0.5 * pdf(1.0, 0.0) + 0.5 * pdf(1.0, 4.0)).ln();
    assert!((m.log_density(&[1.0]).unwrap() - naive).abs() < 1e-12);
}

#[test]
fn full_covariance_log_density_matches_direct_formula() {
    let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let c = Component::gaussian(vec![1.0, -1.0], Covariance::Full(cov.clone())).unwrap();
    let x = [0.3, 0.4];
    let r = nalgebra::DVector::from_column_slice(&[x[0] - 1.0, x[1] + 1.0]);
    let q = r.dot(&(cov.clone().try_inverse().unwrap() * &r));
    let expect = -0.5 * q - 0.5 * (2.0 * LN_2PI + cov.determinant().ln());
    assert!((c.log_density(&x) - expect).abs() < 1e-13);
}

#[test]
fn errors_on_bad_points() {
    let m = two_1d(0.0, 1.0);
    assert_eq!(m.log_density(&[0.0, 1.0]).unwrap_err(), Error::DimensionMismatch { expected: 1, got: 2 });
    assert_eq!(m.log_density(&[f64::NAN]).unwrap_err(), Error::NonFinite("point"));
    assert!(m.score(&[0.0, 0.0]).is_err());
    assert!(m.hessian_log_density(&[]).is_err());
}

#[test]
fn rejects_bad_weights() {
    let c = || Component::iso(vec![0.0], 1.0).unwrap();
    assert!(Mixture::new(vec![c(), c()], vec![0.5, 0.6]).is_err());
    assert!(Mixture::new(vec![c(), c()], vec![1.0, 0.0]).is_err());
    assert!(Mixture::new(vec![c()], vec![0.5, 0.5]).is_err());
    assert!(Mixture::new(vec![], vec![]).is_err());
}

#[test]
fn score_examples() {
    assert_eq!(two_1d(-3.0, 3.0).score(&[0.0]).unwrap(), vec![0.0]);
    let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let m = Mixture::new(vec![Component::gaussian(vec![1.0, -1.0], Covariance::Full(cov.clone())).unwrap()], vec![1.0])
        .unwrap();
    let x = [0.3, 0.4];
    let s = m.score(&x).unwrap();
    let expect = -(cov.try_inverse().unwrap() * nalgebra::DVector::from_column_slice(&[-0.7, 1.4]));
    for t in 0..2 {
        assert!((s[t] - expect[t]).abs() < 1e-13);
    }
    let m = two_1d(0.0, 4.0);
    let h = 1e-5;
    let fd = (m.log_density(&[1.0 + h]).unwrap() - m.log_density(&[1.0 - h]).unwrap()) / (2.0 * h);
    assert!((m.score(&[1.0]).unwrap()[0] - fd).abs() < 1e-6);
}

#[test]
fn hessian_examples() {
    let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let m = Mixture::new(vec![Component::gaussian(vec![0.0, 0.0], Covariance::Full(cov.clone())).unwrap()], vec![1.0])
        .unwrap();
    let h = m.hessian_log_density(&[0.5, 0.1]).unwrap();
    assert!((h + cov.try_inverse().unwrap()).amax() < 1e-12);

    let m = two_1d(-3.0, 3.0);
    let e = 1e-4;
    let f = |x: f64| m.log_density(&[x]).unwrap();
    let fd = (f(e) - 2.0 * f(0.0) + f(-e)) / (e * e);
    let an = m.hessian_log_density(&[0.0]).unwrap()[(0, 0)];
    assert!((an - 8.0).abs() < 1e-12, "{an}");
    assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "{fd} vs {an}");
}

#[test]
fn responsibilities_examples() {
    let m = Mixture::gaussian_1d(&[0.7], &[2.0], &[1.0]).unwrap();
    assert_eq!(m.responsibilities(&[3.0]).unwrap(), vec![1.0]);
    assert_eq!(two_1d(-3.0, 3.0).responsibilities(&[0.0]).unwrap(), vec![0.5, 0.5]);
    let m = two_1d(0.0, 4.0);
    let r = m.responsibilities(&[0.0]).unwrap();
    assert!((r[0] - logistic(8.0)).abs() < 1e-15);
    assert!((r[1] - logistic(-8.0)).abs() < 1e-15);
    let pdf = |x: f64, mu: f64| (-(x - mu) * (x - mu) / 2.0).exp();
    assert!((r[1] / r[0] - pdf(0.0, 4.0) / pdf(0.0, 0.0)).abs() < 1e-15);
}

#[test]
fn i_max_examples() {
    let m = two_1d(-3.0, 3.0);
    assert_eq!(m.i_max(&[0.0], &[0, 1]).unwrap(), 1);
    assert_eq!(m.i_max(&[0.0], &[1, 0]).unwrap(), 1);
    assert_eq!(m.i_max_all_unchecked(&[0.0]), 1);
    assert_eq!(m.i_max(&[-3.0], &[0, 1]).unwrap(), 0);
    assert_eq!(m.i_max(&[0.0], &[]).unwrap_err(), Error::EmptySubset);

    let m = Mixture::gaussian_1d(&[-1.0, 0.5, 2.0], &[1.0, 0.3, 2.0], &[0.2, 0.5, 0.3]).unwrap();
    let mut s = Stream::new(3, Domain::Diagnostics, 0);
    for _ in 0..200 {
        let x = [6.0 * s.uniform() - 3.0];
        let logs = m.component_log_densities(&x).unwrap();
        let brute = (0..3).max_by(|&a, &b| logs[a].partial_cmp(&logs[b]).unwrap().then(a.cmp(&b))).unwrap();
        assert_eq!(m.i_max(&x, &[0, 1, 2]).unwrap(), brute);
        assert_eq!(m.i_max_all_unchecked(&x), brute);
    }
}

#[test]
fn ground_truth_sampling_examples() {
    let m = Mixture::new(vec![Component::iso(vec![0.0, 0.0], 1.0).unwrap()], vec![1.0]).unwrap();
    let mut s = Stream::new(11, Domain::GroundTruth, 0);
    let n = 100_000;
    let xs = m.sample_ground_truth(n, &mut s).unwrap();
    for t in 0..2 {
        let mean = xs.iter().map(|x| x[t]).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02);
    }

    let m = Mixture::gaussian_1d(&[-5.0, 5.0], &[1.0, 1.0], &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
    let n = 90_000;
    let (_, labels) = m.sample_labeled(n, &mut Stream::new(12, Domain::GroundTruth, 0)).unwrap();
    let c0 = labels.iter().filter(|&&l| l == 0).count() as f64;
    assert!((c0 - 2.0 / 3.0 * n as f64).abs() <= 3.0 * (n as f64 * 2.0 / 9.0).sqrt());

    assert!(m.sample_ground_truth(0, &mut s).unwrap().is_empty());

    let a = m.sample_ground_truth(5, &mut Stream::new(1, Domain::GroundTruth, 0)).unwrap();
    let b = m.sample_ground_truth(5, &mut Stream::new(1, Domain::GroundTruth, 0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn full_covariance_samples_have_the_right_covariance() {
    let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let m = Mixture::new(vec![Component::gaussian(vec![1.0, -1.0], Covariance::Full(cov.clone())).unwrap()], vec![1.0])
        .unwrap();
    let n = 100_000;
    let xs = m.sample_ground_truth(n, &mut Stream::new(2, Domain::GroundTruth, 0)).unwrap();
    let mean = [xs.iter().map(|x| x[0]).sum::<f64>() / n as f64, xs.iter().map(|x| x[1]).sum::<f64>() / n as f64];
    for a in 0..2 {
        for b in 0..2 {
            let c = xs.iter().map(|x| (x[a] - mean[a]) * (x[b] - mean[b])).sum::<f64>() / n as f64;
            assert!((c - cov[(a, b)]).abs() < 0.03, "{a}{b}: {c}");
        }
    }
}

#[test]
fn smoothness_summary_examples() {
    for d in [1usize, 3, 32] {
        let m = Mixture::new(vec![Component::iso(vec![0.0; d], 1.0).unwrap()], vec![1.0]).unwrap();
        let s = m.smoothness_summary();
        assert_eq!((s.alpha, s.beta, s.kappa), (1.0, 1.0, 1.0));
        assert!((s.d_radius - 5.0 * (d as f64).sqrt() * 10f64.ln()).abs() < 1e-12);
        assert!(!s.rescale_advised);
    }
    let s = Mixture::gaussian_1d(&[0.0, 1.0], &[1.0, 2.0], &[0.5, 0.5]).unwrap().smoothness_summary();
    assert_eq!((s.alpha, s.beta, s.kappa), (0.5, 1.0, 2.0));

    let mut e1 = vec![0.0; 32];
    e1[0] = 6.0;
    let neg: Vec<f64> = e1.iter().map(|v| -v).collect();
    let m = Mixture::normalized(
        vec![Component::iso(neg, 1.5).unwrap(), Component::iso(e1, 1.5).unwrap()],
        vec![2.0, 1.0],
    )
    .unwrap();
    let s = m.smoothness_summary();
    assert!((s.alpha - 2.0 / 3.0).abs() < 1e-15 && (s.beta - 2.0 / 3.0).abs() < 1e-15);
    assert!((s.kappa - 1.0).abs() < 1e-15);
    assert!(s.rescale_advised);
}

#[test]
fn hessian_spectrum_bounded_by_beta_when_beta_at_most_one() {
    let m = Mixture::normalized(
        vec![
            Component::gaussian(vec![-2.0, 0.0], Covariance::Diag(vec![1.0, 2.0])).unwrap(),
            Component::iso(vec![2.0, 1.0], 1.5).unwrap(),
            Component::gaussian(vec![0.0, 3.0], Covariance::Full(DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 1.2])))
                .unwrap(),
        ],
        vec![0.3, 0.3, 0.4],
    )
    .unwrap();
    let beta = m.components().iter().map(|c| c.beta()).fold(0.0, f64::max);
    assert!(beta <= 1.0);
    let mut s = Stream::new(4, Domain::Diagnostics, 0);
    for _ in 0..100 {
        let x = [8.0 * s.uniform() - 4.0, 8.0 * s.uniform() - 2.0];
        let hv = -m.hessian_log_density(&x).unwrap();
        let top = SymmetricEigen::new(hv).eigenvalues.max();
        assert!(top <= 1.0 + 1e-12);
    }
}

#[derive(Debug)]
struct LogCoshWell;

// V(x) = x²/2 + ln cosh(x): 1 <= V'' <= 2.
impl Potential for LogCoshWell {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x[0] * x[0] + x[0].cosh().ln()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] + x[0].tanh();
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 2.0 - x[0].tanh().powi(2))
    }
}

fn log_cosh_component(shift_mode: f64) -> Component {
    let lz = log_normalizer_1d(&LogCoshWell, -40.0, 40.0, 1e-13).unwrap();
    Component::custom(Custom {
        potential: Arc::new(LogCoshWell),
        mode: vec![shift_mode],
        alpha: 1.0,
        beta: 2.0,
        log_normalizer: lz,
        scale: 1.0,
    })
    .unwrap()
}

#[test]
fn custom_component_density_is_normalized_and_audits_clean() {
    let c = log_cosh_component(0.0);
    let z = crate::quadrature::adaptive_trapezoid(&|x: f64| c.log_density(&[x]).exp(), -30.0, 30.0, 1e-12).unwrap();
    assert!((z.value - 1.0).abs() < 1e-10);
    let pts: Vec<Vec<f64>> = (-10..=10).map(|i| vec![i as f64 * 0.4]).collect();
    let rep = audit_custom(&c, &pts, 1e-5);
    assert!(rep.max_gradient_error < 1e-8);
    assert!(rep.max_hessian_error < 1e-8);
    assert!(rep.constants_consistent);

    let m = Mixture::new(vec![c.clone(), Component::iso(vec![3.0], 1.0).unwrap()], vec![0.5, 0.5]).unwrap();
    assert_eq!(m.sample_ground_truth(3, &mut Stream::new(0, Domain::GroundTruth, 0)).unwrap_err(), Error::NoSampler(0));
    let h = 1e-5;
    for x in [-1.0, 0.5, 2.0] {
        let fd = (m.log_density(&[x + h]).unwrap() - m.log_density(&[x - h]).unwrap()) / (2.0 * h);
        assert!((m.score(&[x]).unwrap()[0] - fd).abs() < 1e-8);
    }
}

#[test]
fn audit_flags_wrong_declared_constants() {
    let lz = log_normalizer_1d(&LogCoshWell, -40.0, 40.0, 1e-12).unwrap();
    let c = Component::custom(Custom {
        potential: Arc::new(LogCoshWell),
        mode: vec![0.0],
        alpha: 1.5,
        beta: 2.0,
        log_normalizer: lz,
        scale: 1.0,
    })
    .unwrap();
    let rep = audit_custom(&c, &[vec![3.0]], 1e-5);
    assert!(!rep.constants_consistent);
}

#[test]
fn empirical_tail_respects_concentration_bound() {
    for (d, var) in [(1usize, 1.0), (4, 2.0), (16, 0.5)] {
        let m = Mixture::new(vec![Component::iso(vec![1.0; d], var).unwrap()], vec![1.0]).unwrap();
        let s = m.smoothness_summary();
        let n = 100_000;
        let xs = m.sample_ground_truth(n, &mut Stream::new(d as u64, Domain::GroundTruth, 0)).unwrap();
        let norms: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>().sqrt()).collect();
        for mult in [0.5, 1.0, 2.0] {
            let t = mult * (d as f64 / s.alpha).sqrt();
            let bound = (-s.alpha * t * t / 4.0).exp();
            let rate = norms.iter().filter(|&&r| r >= s.d_radius + t).count() as f64 / n as f64;
            let slack = 3.0 * (bound * (1.0 - bound) / n as f64).sqrt();
            assert!(rate <= bound + slack);
        }
    }
}
