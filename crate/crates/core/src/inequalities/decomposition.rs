use crate::error::{Error, Result};
use crate::mixture::Mixture;
use crate::quadrature::Grid;

use super::lsi::{check_grid_1d, xlogx, GridMeasure, TestFunction};

#[derive(Debug, Clone, PartialEq)]
pub struct PairCheck {
    pub i: usize,
    pub j: usize,
    /// `∬ (f(x) - f(y))² μ_i(dx) μ_j(dy)`.
    pub c_ij: f64,
    pub overlap: f64,
    /// `2 (2 - δ_ij)/δ_ij (Var_i f + Var_j f)`.
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    /// `2 Var_μ f`.
    pub variance_lhs: f64,
    /// `Σ_{i,j} p_i p_j C_ij`.
    pub variance_rhs: f64,
    /// `Ent_μ[f²]`.
    pub entropy_lhs: f64,
    /// `Σ_i p_i Ent_{μ_i}[f²] + Ent_p[ḡ]` with `ḡ(i) = E_{μ_i} f²`.
    pub entropy_rhs: f64,
    pub variance_rel_error: f64,
    pub entropy_rel_error: f64,
    pub pairs: Vec<PairCheck>,
    pub pass: bool,
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s < 1e-300 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

fn evaluate(m: &Mixture, f: &TestFunction, grid: &Grid) -> DecompositionReport {
    let k = m.k();
    let p = m.weights();
    let mu = GridMeasure::new(grid, |x| m.log_density(&[x]).unwrap_or(f64::NEG_INFINITY));
    let comps: Vec<GridMeasure> =
        m.components().iter().map(|c| GridMeasure::new(grid, |x| c.log_density(&[x]))).collect();

    let f1 = |x: f64| f.value(x);
    let f2 = |x: f64| f.value(x).powi(2);
    let mean = mu.expect(f1);
    let variance_lhs = 2.0 * mu.expect(|x| (f.value(x) - mean).powi(2));

    let e1: Vec<f64> = comps.iter().map(|c| c.expect(f1)).collect();
    let e2: Vec<f64> = comps.iter().map(|c| c.expect(f2)).collect();
    let var: Vec<f64> = comps.iter().zip(&e1).map(|(c, m1)| c.expect(|x| (f.value(x) - m1).powi(2))).collect();
    // The double integral factors into single integrals once the square is expanded.
    let c_ij = |i: usize, j: usize| e2[i] + e2[j] - 2.0 * e1[i] * e1[j];
    let mut variance_rhs = 0.0;
    for i in 0..k {
        for j in 0..k {
            variance_rhs += p[i] * p[j] * c_ij(i, j);
        }
    }

    let g_mean = mu.expect(f2);
    let entropy_lhs = mu.expect(|x| xlogx(f2(x))) - xlogx(g_mean);
    let within: f64 =
        (0..k).map(|i| p[i] * (comps[i].expect(|x| xlogx(f2(x))) - xlogx(e2[i]))).sum();
    let pooled: f64 = (0..k).map(|i| p[i] * e2[i]).sum();
    let between = (0..k).map(|i| p[i] * xlogx(e2[i])).sum::<f64>() - xlogx(pooled);
    let entropy_rhs = within + between;

    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let (ci, cj) = (m.component(i), m.component(j));
            let mins: Vec<f64> = mu
                .xs
                .iter()
                .map(|&x| ci.log_density(&[x]).min(cj.log_density(&[x])).exp())
                .collect();
            let overlap = crate::quadrature::trapezoid(&mins, mu.dx).clamp(0.0, 1.0);
            let c = c_ij(i, j);
            let bound = if overlap > 0.0 {
                2.0 * (2.0 - overlap) / overlap * (var[i] + var[j])
            } else {
                f64::INFINITY
            };
            pairs.push(PairCheck { i, j, c_ij: c, overlap, bound, holds: c <= bound * (1.0 + 1e-9) + 1e-12 });
        }
    }
    let variance_rel_error = rel(variance_lhs, variance_rhs);
    let entropy_rel_error = rel(entropy_lhs, entropy_rhs);
    let pass = variance_rel_error <= 1e-6 && entropy_rel_error <= 1e-6 && pairs.iter().all(|p| p.holds);
    DecompositionReport {
        variance_lhs,
        variance_rhs,
        entropy_lhs,
        entropy_rhs,
        variance_rel_error,
        entropy_rel_error,
        pairs,
        pass,
    }
}

/// Checks the variance and entropy decompositions over components and the
/// pairwise comparison inequality for `f`, by quadrature on `grid`. The
/// reported values are computed on the grid with every cell halved and must
/// agree with the coarse grid to `1e-6` relative.
pub fn decomposition_checks_1d(m: &Mixture, f: &TestFunction, grid: &Grid) -> Result<DecompositionReport> {
    check_grid_1d(m, grid)?;
    let coarse = evaluate(m, f, grid);
    let fine = evaluate(m, f, &grid.refined());
    for (name, a, b) in [
        ("2 Var", coarse.variance_lhs, fine.variance_lhs),
        ("Ent", coarse.entropy_lhs, fine.entropy_lhs),
    ] {
        if (a - b).abs() > 1e-6 * b.abs().max(1.0) {
            return Err(Error::QuadratureSelfCheck { quantity: format!("{name} of {}", f.name()), coarse: a, fine: b });
        }
    }
    Ok(fine)
}
