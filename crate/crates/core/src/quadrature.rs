//! Trapezoid rules on uniform grids.

use crate::error::{Error, Result};

/// Uniform grid of `n >= 2` points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidArgument(format!("bad grid bounds [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Same interval with every cell halved (`2n - 1` points).
    pub fn refined(&self) -> Self {
        Self { n: 2 * self.n - 1, ..*self }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.n).map(|i| f(self.point(i))).collect()
    }
}

/// Composite trapezoid rule for samples `y` with spacing `dx`.
pub fn trapezoid(y: &[f64], dx: f64) -> f64 {
    match y.len() {
        0 | 1 => 0.0,
        n => dx * (0.5 * (y[0] + y[n - 1]) + y[1..n - 1].iter().sum::<f64>()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// `|I_{2n} - I_n|` at the last refinement.
    pub error: f64,
    pub points: usize,
}

const MAX_LEVELS_1D: u32 = 22;

/// Trapezoid on `[lo, hi]`, halving the spacing until two successive
/// estimates differ by at most `tol`. Reuses the coarse evaluations.
pub fn adaptive_trapezoid<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> Result<Estimate> {
    let mut n_cells: usize = 64;
    let mut h = (hi - lo) / n_cells as f64;
    let mut sum = 0.5 * (f(lo) + f(hi)) + (1..n_cells).map(|i| f(lo + i as f64 * h)).sum::<f64>();
    let mut prev = sum * h;
    let mut change = f64::INFINITY;
    for _ in 0..MAX_LEVELS_1D {
        let mid: f64 = (0..n_cells).map(|i| f(lo + (i as f64 + 0.5) * h)).sum();
        sum += mid;
        n_cells *= 2;
        h *= 0.5;
        let cur = sum * h;
        change = (cur - prev).abs();
        if change <= tol {
            return Ok(Estimate { value: cur, error: change, points: n_cells + 1 });
        }
        prev = cur;
    }
    Err(Error::QuadratureNotConverged { tol, change })
}

/// Tensor-product trapezoid over a box of dimension 1 to 3 with `n` points
/// per axis.
pub fn trapezoid_box<F: Fn(&[f64]) -> f64 + Sync>(f: &F, lo: &[f64], hi: &[f64], n: usize) -> f64 {
    use rayon::prelude::*;
    let d = lo.len();
    let h: Vec<f64> = (0..d).map(|t| (hi[t] - lo[t]) / (n - 1) as f64).collect();
    let w = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let vol: f64 = h.iter().product();
    let coord = |t: usize, i: usize| if i == n - 1 { hi[t] } else { lo[t] + i as f64 * h[t] };
    let total: f64 = match d {
        1 => (0..n).map(|i| w(i) * f(&[coord(0, i)])).sum(),
        2 => (0..n)
            .into_par_iter()
            .map(|i| {
                let mut x = [coord(0, i), 0.0];
                let mut s = 0.0;
                for j in 0..n {
                    x[1] = coord(1, j);
                    s += w(j) * f(&x);
                }
                w(i) * s
            })
            .collect::<Vec<_>>()
            .iter()
            .sum(),
        3 => (0..n)
            .into_par_iter()
            .map(|i| {
                let mut x = [coord(0, i), 0.0, 0.0];
                let mut s = 0.0;
                for j in 0..n {
                    x[1] = coord(1, j);
                    for k in 0..n {
                        x[2] = coord(2, k);
                        s += w(j) * w(k) * f(&x);
                    }
                }
                w(i) * s
            })
            .collect::<Vec<_>>()
            .iter()
            .sum(),
        _ => panic!("trapezoid_box supports dimensions 1 to 3"),
    };
    total * vol
}

/// [`trapezoid_box`] with per-axis point counts doubling from 65 until two
/// successive estimates differ by at most `tol`.
pub fn adaptive_trapezoid_box<F: Fn(&[f64]) -> f64 + Sync>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    tol: f64,
) -> Result<Estimate> {
    let d = lo.len();
    if !(1..=3).contains(&d) {
        return Err(Error::QuadratureDimension(d));
    }
    let max_n: usize = match d {
        1 => (1 << 20) + 1,
        2 => 4097,
        _ => 257,
    };
    let mut n = 65;
    let mut prev = trapezoid_box(f, lo, hi, n);
    let mut change = f64::INFINITY;
    while 2 * n - 1 <= max_n {
        n = 2 * n - 1;
        let cur = trapezoid_box(f, lo, hi, n);
        change = (cur - prev).abs();
        if change <= tol {
            return Ok(Estimate { value: cur, error: change, points: n.pow(d as u32) });
        }
        prev = cur;
    }
    Err(Error::QuadratureNotConverged { tol, change })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_on_linear() {
        let g = Grid::new(0.0, 2.0, 5).unwrap();
        let y = g.map(|x| 3.0 * x + 1.0);
        assert!((trapezoid(&y, g.step()) - 8.0).abs() < 1e-14);
    }

    #[test]
    fn refined_grid_contains_coarse_points() {
        let g = Grid::new(-1.0, 3.0, 9).unwrap();
        let r = g.refined();
        for i in 0..g.n {
            assert!((r.point(2 * i) - g.point(i)).abs() < 1e-15);
        }
    }

    #[test]
    fn adaptive_gaussian_integral() {
        let f = |x: f64| (-0.5 * x * x).exp();
        let e = adaptive_trapezoid(&f, -12.0, 12.0, 1e-12).unwrap();
        assert!((e.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn box_rule_in_two_and_three_dims() {
        let f2 = |x: &[f64]| (-0.5 * (x[0] * x[0] + x[1] * x[1])).exp();
        let e = adaptive_trapezoid_box(&f2, &[-9.0, -9.0], &[9.0, 9.0], 1e-9).unwrap();
        assert!((e.value - 2.0 * std::f64::consts::PI).abs() < 1e-8);
        let f3 = |x: &[f64]| x[0] * x[1] * x[2];
        let v = trapezoid_box(&f3, &[0.0; 3], &[1.0; 3], 17);
        assert!((v - 0.125).abs() < 1e-14);
    }

    #[test]
    fn box_rule_rejects_high_dimension() {
        let f = |_: &[f64]| 1.0;
        assert_eq!(
            adaptive_trapezoid_box(&f, &[0.0; 4], &[1.0; 4], 1e-3).unwrap_err(),
            Error::QuadratureDimension(4)
        );
    }
}
