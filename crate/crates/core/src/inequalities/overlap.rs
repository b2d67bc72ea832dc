use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mixture::Mixture;
use crate::quadrature::adaptive_trapezoid_box;
use crate::rng::{Domain, Stream};

/// Half-width of the quadrature box in units of the largest standard deviation.
pub const BOX_WIDTH: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OverlapMethod {
    /// Adaptive tensor trapezoid, `d <= 3`.
    Quadrature { tol: f64 },
    /// `E_{x~μ_i}[min(1, μ_j(x)/μ_i(x))]` from `samples` draws.
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodTag {
    Quadrature,
    MonteCarlo,
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapEstimate {
    pub value: f64,
    /// Last-halving change for quadrature, standard error for Monte Carlo.
    pub error: f64,
}

/// `δ(μ_i, μ_j) = ∫ min{μ_i, μ_j}`.
pub fn overlap(m: &Mixture, i: usize, j: usize, method: OverlapMethod) -> Result<OverlapEstimate> {
    let k = m.k();
    if i >= k || j >= k {
        return Err(Error::InvalidArgument(format!("component index out of range ({i}, {j}) for K = {k}")));
    }
    if i == j {
        return Ok(OverlapEstimate { value: 1.0, error: 0.0 });
    }
    let (ci, cj) = (m.component(i), m.component(j));
    match method {
        OverlapMethod::Quadrature { tol } => {
            if !(tol > 0.0) {
                return Err(Error::InvalidArgument("tolerance must be positive".into()));
            }
            let d = m.dim();
            if d > 3 {
                return Err(Error::QuadratureDimension(d));
            }
            let s = ci.max_std().max(cj.max_std());
            let lo: Vec<f64> = (0..d).map(|t| ci.mode()[t].min(cj.mode()[t]) - BOX_WIDTH * s).collect();
            let hi: Vec<f64> = (0..d).map(|t| ci.mode()[t].max(cj.mode()[t]) + BOX_WIDTH * s).collect();
            let f = |x: &[f64]| ci.log_density(x).min(cj.log_density(x)).exp();
            let e = adaptive_trapezoid_box(&f, &lo, &hi, tol)?;
            Ok(OverlapEstimate { value: e.value.clamp(0.0, 1.0), error: e.error })
        }
        OverlapMethod::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidArgument("Monte Carlo overlap needs at least 2 samples".into()));
            }
            if !ci.has_sampler() {
                return Err(Error::NoSampler(i));
            }
            let mut stream = Stream::new(seed, Domain::Overlap, (i * k + j) as u64);
            let mut x = vec![0.0; m.dim()];
            let (mut sum, mut sum2) = (0.0, 0.0);
            for _ in 0..samples {
                ci.sample_into(&mut stream, &mut x);
                let v = (cj.log_density(&x) - ci.log_density(&x)).min(0.0).exp();
                sum += v;
                sum2 += v * v;
            }
            let n = samples as f64;
            let mean = sum / n;
            let var = ((sum2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
            Ok(OverlapEstimate { value: mean, error: (var / n).sqrt() })
        }
    }
}

/// Symmetric `K x K` matrix of pairwise overlaps.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix {
    values: Vec<f64>,
    errors: Vec<f64>,
    k: usize,
    pub method: MethodTag,
}

impl OverlapMatrix {
    /// Wraps known values. `values[i][j]` must be symmetric with unit diagonal.
    pub fn from_values(values: Vec<Vec<f64>>) -> Result<Self> {
        let k = values.len();
        let mut flat = Vec::with_capacity(k * k);
        for (i, row) in values.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: row.len() });
            }
            for (j, v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::InvalidArgument(format!("overlap[{i}][{j}] = {v} outside [0, 1]")));
                }
                if *v != values[j][i] {
                    return Err(Error::InvalidArgument("overlap matrix is not symmetric".into()));
                }
                if i == j && *v != 1.0 {
                    return Err(Error::InvalidArgument("overlap diagonal must be 1".into()));
                }
            }
            flat.extend_from_slice(row);
        }
        Ok(Self { values: flat, errors: vec![0.0; k * k], k, method: MethodTag::Given })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }

    pub fn error(&self, i: usize, j: usize) -> f64 {
        self.errors[i * self.k + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.k).map(|r| r.to_vec()).collect()
    }
}

/// All pairwise overlaps. Pairs run concurrently; each Monte Carlo pair owns
/// its own stream, so the result does not depend on scheduling.
pub fn overlap_matrix(m: &Mixture, method: OverlapMethod) -> Result<OverlapMatrix> {
    let k = m.k();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let est: Vec<Result<OverlapEstimate>> = pairs.par_iter().map(|&(i, j)| overlap(m, i, j, method)).collect();
    let mut values = vec![0.0; k * k];
    let mut errors = vec![0.0; k * k];
    for i in 0..k {
        values[i * k + i] = 1.0;
    }
    for (&(i, j), e) in pairs.iter().zip(est) {
        let e = e?;
        values[i * k + j] = e.value;
        values[j * k + i] = e.value;
        errors[i * k + j] = e.error;
        errors[j * k + i] = e.error;
    }
    let method = match method {
        OverlapMethod::Quadrature { .. } => MethodTag::Quadrature,
        OverlapMethod::MonteCarlo { .. } => MethodTag::MonteCarlo,
    };
    Ok(OverlapMatrix { values, errors, k, method })
}

/// Quadrature for `d <= 3`, Monte Carlo with 10^5 draws otherwise.
pub fn default_method(m: &Mixture, seed: u64) -> OverlapMethod {
    if m.dim() <= 3 && m.all_gaussian() {
        OverlapMethod::Quadrature { tol: 1e-9 }
    } else {
        OverlapMethod::MonteCarlo { samples: 100_000, seed }
    }
}
