use lmclab::inequalities::*;
use lmclab::quadrature::Grid;
use lmclab::{Component, Error, Mixture};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn phi(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

fn pdf(x: f64, mu: f64, var: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Plain trapezoid with fixed step, independent of the crate's quadrature.
fn trap(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let h = (hi - lo) / n as f64;
    let mut s = 0.5 * (f(lo) + f(hi));
    for i in 1..n {
        s += f(lo + i as f64 * h);
    }
    s * h
}

fn quad() -> OverlapMethod {
    OverlapMethod::Quadrature { tol: 1e-9 }
}

#[test]
fn overlap_examples() {
    let same = Mixture::gaussian_1d(&[1.0, 1.0], &[2.0, 2.0], &[0.5, 0.5]).unwrap();
    assert!((overlap(&same, 0, 1, quad()).unwrap().value - 1.0).abs() < 1e-9);
    assert_eq!(overlap(&same, 1, 1, quad()).unwrap().value, 1.0);

    for (b, closed) in [(4.0, 2.0 * phi(-2.0)), (1.0, 2.0 * phi(-0.5))] {
        let m = Mixture::gaussian_1d(&[0.0, b], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
        let o = overlap(&m, 0, 1, quad()).unwrap();
        let oracle = trap(|x| pdf(x, 0.0, 1.0).min(pdf(x, b, 1.0)), -10.0, 14.0, 1e-3);
        assert!((o.value - oracle).abs() < 1e-4, "{} vs {oracle}", o.value);
        assert!((o.value - closed).abs() < 1e-7);
    }
    assert!((2.0 * phi(-2.0) - 0.0455).abs() < 1e-4);
    assert!((2.0 * phi(-0.5) - 0.6171).abs() < 1e-4);
}

#[test]
fn overlap_is_one_minus_tv() {
    let m = Mixture::gaussian_1d(&[-0.5, 1.2], &[0.7, 1.9], &[0.3, 0.7]).unwrap();
    let o = overlap(&m, 0, 1, quad()).unwrap().value;
    let tv = 0.5 * trap(|x| (pdf(x, -0.5, 0.7) - pdf(x, 1.2, 1.9)).abs(), -20.0, 20.0, 1e-4);
    assert!((o + tv - 1.0).abs() < 1e-7);
}

#[test]
fn overlap_in_two_dimensions_matches_closed_form() {
    let m = Mixture::normalized(
        vec![Component::iso(vec![0.0, 0.0], 1.0).unwrap(), Component::iso(vec![1.2, -1.6], 1.0).unwrap()],
        vec![1.0, 1.0],
    )
    .unwrap();
    let o = overlap(&m, 0, 1, OverlapMethod::Quadrature { tol: 1e-7 }).unwrap();
    assert!((o.value - 2.0 * phi(-1.0)).abs() < 1e-5, "{}", o.value);
}

#[test]
fn monte_carlo_overlap_agrees_with_quadrature() {
    let m = Mixture::gaussian_1d(&[0.0, 1.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
    let mc = overlap(&m, 0, 1, OverlapMethod::MonteCarlo { samples: 100_000, seed: 5 }).unwrap();
    assert!((mc.value - 2.0 * phi(-0.5)).abs() < 3.0 * mc.error);
    assert!(mc.error > 0.0 && mc.error < 0.01);
}

#[test]
fn quadrature_rejects_high_dimension() {
    let m = Mixture::normalized(
        vec![Component::iso(vec![0.0; 4], 1.0).unwrap(), Component::iso(vec![1.0; 4], 1.0).unwrap()],
        vec![1.0, 1.0],
    )
    .unwrap();
    assert_eq!(overlap(&m, 0, 1, quad()).unwrap_err(), Error::QuadratureDimension(4));
    let mc = overlap_matrix(&m, OverlapMethod::MonteCarlo { samples: 20_000, seed: 1 }).unwrap();
    assert!((mc.get(0, 1) - 2.0 * phi(-1.0)).abs() < 4.0 * mc.error(0, 1));
    assert_eq!(mc.get(1, 0), mc.get(0, 1));
    assert_eq!(mc.method, MethodTag::MonteCarlo);
}

#[test]
fn overlap_matrix_is_symmetric_with_unit_diagonal() {
    let m = Mixture::gaussian_1d(&[0.0, 1.0, 3.0], &[1.0, 0.5, 2.0], &[0.2, 0.3, 0.5]).unwrap();
    let o = overlap_matrix(&m, quad()).unwrap();
    for i in 0..3 {
        assert_eq!(o.get(i, i), 1.0);
        for j in 0..3 {
            assert_eq!(o.get(i, j), o.get(j, i));
            assert!((0.0..=1.0).contains(&o.get(i, j)));
        }
    }
}

#[test]
fn graph_examples() {
    let o = OverlapMatrix::from_values(vec![vec![1.0, 0.9], vec![0.9, 1.0]]).unwrap();
    let g = build_graph(&o, 0.5).unwrap();
    assert_eq!(g.components, vec![vec![0, 1]]);
    assert_eq!(g.diameters, vec![1]);

    let o = OverlapMatrix::from_values(vec![vec![1.0, 0.6, 0.1], vec![0.6, 1.0, 0.6], vec![0.1, 0.6, 1.0]]).unwrap();
    let g = build_graph(&o, 0.5).unwrap();
    assert!(g.is_connected());
    assert_eq!(g.diameters, vec![2]);
    let g = build_graph(&o, 0.6).unwrap();
    assert_eq!(g.edge_count(), 2);
    let g = build_graph(&o, 0.7).unwrap();
    assert_eq!(g.components, vec![vec![0], vec![1], vec![2]]);
    assert!(build_graph(&o, 0.0).is_err());
    assert!(build_graph(&o, 1.5).is_err());
}

fn symmetric_matrix(k: usize, raw: &[f64]) -> Vec<Vec<f64>> {
    let mut v = vec![vec![1.0; k]; k];
    let mut it = raw.iter();
    for i in 0..k {
        for j in i + 1..k {
            let x = *it.next().unwrap();
            v[i][j] = x;
            v[j][i] = x;
        }
    }
    v
}

fn closure_components(v: &[Vec<f64>], t: f64) -> Vec<Vec<usize>> {
    let k = v.len();
    let mut reach = vec![vec![false; k]; k];
    for i in 0..k {
        for j in 0..k {
            reach[i][j] = i == j || v[i][j] >= t;
        }
    }
    for m in 0..k {
        for i in 0..k {
            for j in 0..k {
                reach[i][j] = reach[i][j] || (reach[i][m] && reach[m][j]);
            }
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in 0..k {
        let c: Vec<usize> = (0..k).filter(|&j| reach[i][j]).collect();
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

proptest! {
    #[test]
    fn graph_components_match_transitive_closure(raw in prop::collection::vec(0.0f64..1.0, 15), t in 0.01f64..1.0) {
        let v = symmetric_matrix(6, &raw);
        let g = build_graph(&OverlapMatrix::from_values(v.clone()).unwrap(), t).unwrap();
        prop_assert_eq!(g.components.clone(), closure_components(&v, t));
        for (c, d) in g.components.iter().zip(&g.diameters) {
            prop_assert!(*d < c.len().max(1));
        }
    }

    #[test]
    fn graph_is_monotone_in_threshold(raw in prop::collection::vec(0.0f64..1.0, 15), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let o = OverlapMatrix::from_values(symmetric_matrix(6, &raw)).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (gl, gh) = (build_graph(&o, lo).unwrap(), build_graph(&o, hi).unwrap());
        prop_assert!(gh.edge_count() <= gl.edge_count());
        prop_assert!(gh.components.len() >= gl.components.len());
    }
}

#[test]
fn lsi_certificate_examples() {
    let m = Mixture::gaussian_1d(&[0.0], &[2.0], &[1.0]).unwrap();
    let o = overlap_matrix(&m, quad()).unwrap();
    let c = lsi_bound(&m, &build_graph(&o, 1.0).unwrap()).unwrap();
    assert!((c.c_ls_bound - 4.0 * 4f64.ln() * 2.0).abs() < 1e-12);
    assert!(c.c_pi_bound <= c.c_ls_bound);

    let m = Mixture::gaussian_1d(&[0.0, 1.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
    let o = overlap_matrix(&m, quad()).unwrap();
    let g = build_graph(&o, 0.61).unwrap();
    let c = lsi_bound(&m, &g).unwrap();
    let hand = 4.0 * 1.0 * 8f64.ln() / 0.61 * (1.0 / 0.5);
    assert!((c.c_ls_bound - hand).abs() < 1e-12);
    assert!((c.c_ls_bound - 27.3).abs() < 0.05);
    assert!((c.c_pi_bound - 4.0 / 0.61 * 2.0).abs() < 1e-12);
    assert!((c.chain_constant_formal - (1.0 + 2f64.ln())).abs() < 1e-15);
    assert!((c.cluster_constant - 4.0 * 4.0 * (1.0 + 2f64.ln()) / 0.5).abs() < 1e-12);
    assert!((c.cluster_constant_linear - 4.0 * 2.0 * (1.0 + 2f64.ln()) / 0.5).abs() < 1e-12);

    let g = build_graph(&o, 0.7).unwrap();
    assert_eq!(lsi_bound(&m, &g).unwrap_err(), Error::Disconnected(2));
    let parts = lsi_bound_per_component(&m, &g).unwrap();
    assert_eq!(parts.len(), 2);
    assert!((parts[1].c_ls_bound - 4.0 * 4f64.ln()).abs() < 1e-12);
}

#[test]
fn verify_lsi_examples() {
    let m = Mixture::gaussian_1d(&[0.0], &[1.0], &[1.0]).unwrap();
    let grid = default_grid_1d(&m);
    let r = verify_lsi_1d(&m, 1.0, &[TestFunction::Constant(3.0), TestFunction::Linear], &grid).unwrap();
    assert_eq!(r.entries[0].ratio, 0.0);
    // Ent[x²] = E[x² ln x²] = 2 - γ - ln 2 for a standard normal.
    let euler_gamma = 0.577_215_664_901_532_9;
    let closed = (2.0 - euler_gamma - 2f64.ln()) / 2.0;
    assert!((r.entries[1].ratio - closed).abs() < 1e-6, "{}", r.entries[1].ratio);
    assert!(r.pass);

    let m = Mixture::gaussian_1d(&[0.0, 1.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
    let o = overlap_matrix(&m, quad()).unwrap();
    let cert = lsi_bound(&m, &build_graph(&o, 0.61).unwrap()).unwrap();
    let r = verify_lsi_1d(&m, cert.c_ls_bound, &default_family(&m), &default_grid_1d(&m)).unwrap();
    assert_eq!(r.entries.len(), 12);
    assert!(r.pass, "max ratio {}", r.max_ratio);

    let fails = verify_lsi_1d(&m, 1e-3, &default_family(&m), &default_grid_1d(&m)).unwrap();
    assert!(!fails.pass);
}

#[test]
fn verify_lsi_rejects_bad_grids() {
    let m = Mixture::gaussian_1d(&[0.0], &[1.0], &[1.0]).unwrap();
    let narrow = Grid::new(-5.0, 5.0, 4001).unwrap();
    assert!(matches!(
        verify_lsi_1d(&m, 1.0, &[TestFunction::Linear], &narrow),
        Err(Error::GridTooNarrow { component: 0, .. })
    ));
    let coarse = Grid::new(-10.0, 10.0, 9).unwrap();
    assert!(matches!(
        verify_lsi_1d(&m, 1.0, &[TestFunction::Square], &coarse),
        Err(Error::QuadratureSelfCheck { .. })
    ));
}

#[test]
fn test_function_derivatives_match_finite_differences() {
    let fam = [
        TestFunction::Linear,
        TestFunction::Square,
        TestFunction::LogisticStep { center: 0.3, scale: 0.7 },
        TestFunction::GaussianBump { center: -1.0, width: 1.3 },
    ];
    for f in fam {
        for x in [-2.0, -0.1, 0.4, 1.7] {
            let h = 1e-6;
            let fd = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
            assert!((fd - f.derivative(x)).abs() < 1e-8, "{}", f.name());
        }
    }
}

#[test]
fn decomposition_examples() {
    let m = Mixture::gaussian_1d(&[0.5], &[2.0], &[1.0]).unwrap();
    let r = decomposition_checks_1d(&m, &TestFunction::Linear, &default_grid_1d(&m)).unwrap();
    assert!((r.variance_lhs - 4.0).abs() < 1e-9);
    assert!((r.variance_rhs - 4.0).abs() < 1e-9);
    assert!(r.pass);

    let m = Mixture::gaussian_1d(&[0.0, 2.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
    let grid = default_grid_1d(&m);
    let r = decomposition_checks_1d(&m, &TestFunction::Linear, &grid).unwrap();
    assert!((r.variance_lhs - 4.0).abs() < 1e-8, "{}", r.variance_lhs);
    assert!((r.variance_rhs - 4.0).abs() < 1e-8, "{}", r.variance_rhs);
    assert!((r.pairs[0].c_ij - 6.0).abs() < 1e-8);
    assert!(r.pass);

    let r = decomposition_checks_1d(&m, &TestFunction::LogisticStep { center: 1.0, scale: 1.0 }, &grid).unwrap();
    assert!(r.entropy_rel_error < 1e-6);
    assert!(r.pass);
}

#[test]
fn multiscale_examples() {
    let m = Mixture::gaussian_1d(&[3.0], &[1.0], &[1.0]).unwrap();
    let o = overlap_matrix(&m, quad()).unwrap();
    let p = multiscale_plan(&m, &o, 0.1, 0.1, MultiscaleOptions::default()).unwrap();
    assert_eq!((p.terminal_scale, p.partition.clone()), (0, vec![vec![0]]));

    let m = Mixture::gaussian_1d(&[0.0, 1.0, 50.0], &[1.0; 3], &[1.0; 3]).unwrap();
    let o = overlap_matrix(&m, quad()).unwrap();
    let p = multiscale_plan(&m, &o, 0.1, 0.1, MultiscaleOptions::default()).unwrap();
    assert_eq!(p.terminal_scale, 1);
    assert_eq!(p.partition, vec![vec![0, 1], vec![2]]);
    assert_eq!(p.termination, Termination::Separated);
    for w in p.ln_delta_sequence.windows(2) {
        assert!(w[1] < w[0]);
    }
    for w in p.scales.windows(2) {
        assert!(w[1].components.len() <= w[0].components.len());
    }
    assert!(p.mixing_time > 0.0 && p.mixing_time.is_finite());

    let close = Mixture::gaussian_1d(&[0.0, 0.1, 0.2], &[1.0; 3], &[1.0; 3]).unwrap();
    let o = overlap_matrix(&close, quad()).unwrap();
    assert!((0..3).all(|i| (0..3).all(|j| o.get(i, j) >= 0.9)));
    let p = multiscale_plan(&close, &o, 0.1, 0.1, MultiscaleOptions::default()).unwrap();
    assert_eq!(p.partition, vec![vec![0, 1, 2]]);
    assert_eq!(p.termination, Termination::Connected);
}

#[test]
fn delta_recursion_matches_direct_arithmetic() {
    let c = RecursionInputs { k: 3, dim: 2, alpha: 0.5, beta: 2.0, l: 40.0, p_star: 0.2 };
    let (eps, tau, delta): (f64, f64, f64) = (0.01, 0.003, 0.25);
    let bl: f64 = 2.0 * 40.0;
    let direct = delta.powf(1.5) * 0.5f64.powf(1.5) * 0.2f64.powf(2.5) * eps * eps * tau
        / (1e5
            * 3f64.powi(5)
            * 2.0
            * bl.powi(3)
            * (1.0f64 / 0.2).ln().powf(1.5)
            * (4.0 * 40.0 / eps * (1.0f64 / tau).ln() / 0.5).ln().powf(1.5)
            * (16.0 * 2.0 * bl * bl / (eps * tau * delta * 0.5)).ln().powf(2.51));
    let got = ln_delta_prime(&c, eps, tau, delta.ln()).exp();
    assert!((got / direct - 1.0).abs() < 1e-12, "{got} vs {direct}");
    assert!((cluster_constant(0.25, 3) - 4.0 * 9.0 * (1.0 + 4f64.ln()) * 4.0).abs() < 1e-12);
}

#[test]
fn threshold_examples() {
    let m = Mixture::gaussian_1d(&[0.0, 5.0, 10.0], &[1.0; 3], &[0.6, 0.3, 0.1]).unwrap();
    let s = threshold_small_weights(&m, 0.2).unwrap();
    assert_eq!((s.kept.clone(), s.discarded.clone()), (vec![0, 1], vec![2]));
    assert!((s.kept_weights[0] - 2.0 / 3.0).abs() < 1e-15);
    assert!(threshold_small_weights(&m, 0.1).unwrap().discarded.is_empty());
    assert!(matches!(threshold_small_weights(&m, 0.7), Err(Error::NoComponentsKept { .. })));
    let s = threshold_small_weights(&m, 1.0 / 3.0).unwrap();
    assert!(!s.kept.is_empty());

    let tiny = Mixture::gaussian_1d(&[0.0, 1.0, 2.0], &[1.0; 3], &[0.5, 0.5 - 1e-300, 1e-300]).unwrap();
    let o = overlap_matrix(&tiny, quad()).unwrap();
    let p = multiscale_plan(&tiny, &o, 0.1, 0.1, MultiscaleOptions { threshold_small_weights: true }).unwrap();
    let t = p.threshold.unwrap();
    assert_eq!(t.discarded, vec![2]);
    assert_eq!(t.thresholds[0], 1.0 / 3.0);
    assert_eq!(p.partition, vec![vec![0, 1]]);
}

fn schedule_oracle(alpha: f64, beta: f64, d: f64, k: f64, p: f64, eps: f64, tau: f64) -> [f64; 6] {
    let kappa = beta / alpha;
    let l0 = kappa * kappa * k * d.sqrt() * ((10.0 * kappa).ln() + k.exp() * (d / p / eps).ln());
    let ginv = 1e8 * d * (beta * l0).powi(3) * k.exp() * (1.0 / p).ln().powf(1.5)
        * (16.0 * d * (beta * l0).powi(2) / (eps * tau * alpha)).ln().powi(5)
        / (p.powf(3.5) * eps.powi(3) * alpha.powf(1.5));
    let t = k * k * (10.0 / p).ln() / (alpha * p) * ginv.powf(2.0 * (1.5f64.powf(k - 1.0) - 1.0));
    let h = eps.powi(4) / ((beta * l0).powi(4) * d * t);
    let budget = p.sqrt() * eps * eps * h.sqrt() / (7.0 * t);
    let m = 4000.0 / p / eps.powi(4) * k * k * (k / eps).ln() * (1.0 / tau).ln();
    [l0, l0 / (kappa * k), t, h, budget, m]
}

#[test]
fn schedule_matches_direct_arithmetic() {
    let m = Mixture::gaussian_1d(&[0.0, 3.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
    let s = schedule_params(&m, 0.1, 0.1, ScheduleConstants::literal()).unwrap();
    let o = schedule_oracle(1.0, 1.0, 1.0, 2.0, 0.5, 0.1, 0.1);
    for (got, want) in [s.l0, s.l, s.t, s.h_formula, s.m_min].iter().zip([o[0], o[1], o[2], o[3], o[5]]) {
        assert!((got / want - 1.0).abs() < 1e-12, "{got} vs {want}");
    }
    assert!((s.h / s.h_formula - 1.0).abs() < 1e-9);
    assert!((s.h * s.n_steps / s.t - 1.0).abs() < 1e-12);
    let budget = 0.5f64.sqrt() * 0.01 * s.h.sqrt() / (7.0 * s.t);
    assert!((s.eps_score_budget / budget - 1.0).abs() < 1e-12);
    assert!((s.eps_score_budget / o[4] - 1.0).abs() < 1e-9);
}

#[test]
fn schedule_monotone_in_eps_and_trivial_exponent_for_one_component() {
    let m = Mixture::gaussian_1d(&[0.0, 3.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
    let a = schedule_params(&m, 0.1, 0.1, ScheduleConstants::literal()).unwrap();
    let b = schedule_params(&m, 0.05, 0.1, ScheduleConstants::literal()).unwrap();
    assert!(b.h < a.h);
    assert!(b.eps_score_budget < a.eps_score_budget);

    let one = Mixture::gaussian_1d(&[0.0], &[0.5], &[1.0]).unwrap();
    let s = schedule_params(&one, 0.1, 0.1, ScheduleConstants::literal()).unwrap();
    assert_eq!(s.exponent, 0.0);
    assert!((s.t - 10f64.ln() / 2.0).abs() < 1e-12);

    let scaled = ScheduleConstants { t: 2.0, ..ScheduleConstants::literal() };
    let u = schedule_params(&one, 0.1, 0.1, scaled).unwrap();
    assert!((u.t / s.t - 2.0).abs() < 1e-12);
    assert!(schedule_params(&one, 0.6, 0.1, ScheduleConstants::literal()).is_err());
}

#[test]
fn schedule_rescales_exactly_with_covariance() {
    let a = Mixture::gaussian_1d(&[0.0, 3.0, 5.0], &[1.0, 2.0, 1.5], &[0.2, 0.3, 0.5]).unwrap();
    let b = Mixture::gaussian_1d(&[0.0, 3.0, 5.0], &[2.0, 4.0, 3.0], &[0.2, 0.3, 0.5]).unwrap();
    let (sa, sb) = (
        schedule_params(&a, 0.1, 0.2, ScheduleConstants::literal()).unwrap(),
        schedule_params(&b, 0.1, 0.2, ScheduleConstants::literal()).unwrap(),
    );
    assert_eq!(sa.kappa, sb.kappa);
    assert_eq!(sa.l0, sb.l0);
    for (s, alpha, beta) in [(&sa, 1.0 / 2.0, 1.0), (&sb, 1.0 / 4.0, 0.5)] {
        let o = schedule_oracle(alpha, beta, 1.0, 3.0, 0.2, 0.1, 0.2);
        assert!((s.t / o[2] - 1.0).abs() < 1e-12);
        assert!((s.h_formula / o[3] - 1.0).abs() < 1e-12);
    }
    assert_eq!(sa.m_min, sb.m_min);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]
    #[test]
    fn decomposition_identities_hold_on_random_mixtures(
        k in 1usize..5,
        raw in prop::collection::vec((-4.0f64..4.0, 0.3f64..2.5, 0.05f64..1.0), 4),
        fi in 0usize..5,
    ) {
        let means: Vec<f64> = raw[..k].iter().map(|r| r.0).collect();
        let vars: Vec<f64> = raw[..k].iter().map(|r| r.1).collect();
        let ws: Vec<f64> = raw[..k].iter().map(|r| r.2).collect();
        let m = Mixture::gaussian_1d(&means, &vars, &ws).unwrap();
        let f = [
            TestFunction::Linear,
            TestFunction::Square,
            TestFunction::LogisticStep { center: 0.5, scale: 1.0 },
            TestFunction::GaussianBump { center: -1.0, width: 1.0 },
            TestFunction::LogisticStep { center: -2.0, scale: 0.5 },
        ][fi];
        let r = decomposition_checks_1d(&m, &f, &default_grid_1d(&m)).unwrap();
        prop_assert!(r.pass, "{:?}", r);
    }
}
