use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::rng::Stream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Covariance of a Gaussian component as written in a config.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Iso(f64),
    Diag(Vec<f64>),
    Full(DMatrix<f64>),
}

#[derive(Debug, Clone)]
enum Precision {
    Iso(f64),
    Diag(Vec<f64>),
    Full(DMatrix<f64>),
}

#[derive(Debug, Clone)]
enum Factor {
    Iso(f64),
    Diag(Vec<f64>),
    Lower(DMatrix<f64>),
}

/// Gaussian component `N(mean, cov)` with its precision and Cholesky factor
/// precomputed.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Vec<f64>,
    cov: Covariance,
    precision: Precision,
    factor: Factor,
    log_norm: f64,
    alpha: f64,
    beta: f64,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: Covariance) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidMixture("component of dimension 0".into()));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("component mean"));
        }
        let (precision, factor, log_det, lmin, lmax) = match &cov {
            Covariance::Iso(s) => {
                if !(s.is_finite() && *s > 0.0) {
                    return Err(Error::InvalidMixture(format!("isotropic variance {s} must be positive")));
                }
                (Precision::Iso(1.0 / s), Factor::Iso(s.sqrt()), d as f64 * s.ln(), *s, *s)
            }
            Covariance::Diag(v) => {
                if v.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: v.len() });
                }
                if v.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(Error::InvalidMixture("diagonal variances must be positive".into()));
                }
                let lmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
                let lmax = v.iter().cloned().fold(0.0, f64::max);
                (
                    Precision::Diag(v.iter().map(|s| 1.0 / s).collect()),
                    Factor::Diag(v.iter().map(|s| s.sqrt()).collect()),
                    v.iter().map(|s| s.ln()).sum(),
                    lmin,
                    lmax,
                )
            }
            Covariance::Full(m) => {
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: m.nrows() });
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("covariance"));
                }
                if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                    return Err(Error::InvalidMixture("covariance is not symmetric".into()));
                }
                let chol = m
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::InvalidMixture("covariance is not positive definite".into()))?;
                let l = chol.l();
                let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                let eig = SymmetricEigen::new(m.clone()).eigenvalues;
                let lmin = eig.min();
                let lmax = eig.max();
                if lmin <= 0.0 {
                    return Err(Error::InvalidMixture("covariance is not positive definite".into()));
                }
                (Precision::Full(chol.inverse()), Factor::Lower(l), log_det, lmin, lmax)
            }
        };
        Ok(Self {
            log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
            mean,
            cov,
            precision,
            factor,
            alpha: 1.0 / lmax,
            beta: 1.0 / lmin,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Covariance {
        &self.cov
    }

    /// Covariance as a dense matrix.
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let d = self.mean.len();
        match &self.cov {
            Covariance::Iso(s) => DMatrix::from_diagonal_element(d, d, *s),
            Covariance::Diag(v) => DMatrix::from_diagonal(&DVector::from_column_slice(v)),
            Covariance::Full(m) => m.clone(),
        }
    }

    /// Largest marginal standard deviation.
    pub fn max_std(&self) -> f64 {
        match &self.cov {
            Covariance::Iso(s) => s.sqrt(),
            Covariance::Diag(v) => v.iter().cloned().fold(0.0, f64::max).sqrt(),
            Covariance::Full(m) => m.diagonal().max().sqrt(),
        }
    }

    /// Standard deviation of the projection onto unit vector `u`.
    pub fn projected_std(&self, u: &[f64]) -> f64 {
        let c = self.covariance_matrix();
        let v = DVector::from_column_slice(u);
        (v.dot(&(&c * &v))).sqrt()
    }

    /// Writes `P (x - mean)` into `out` and returns `(x - mean)ᵀ P (x - mean)`.
    fn precision_times_centered(&self, x: &[f64], out: &mut [f64]) -> f64 {
        match &self.precision {
            Precision::Iso(p) => {
                let mut q = 0.0;
                for ((o, xi), mi) in out.iter_mut().zip(x).zip(&self.mean) {
                    let r = xi - mi;
                    *o = p * r;
                    q += r * r;
                }
                p * q
            }
            Precision::Diag(p) => {
                let mut q = 0.0;
                for (((o, xi), mi), pi) in out.iter_mut().zip(x).zip(&self.mean).zip(p) {
                    let r = xi - mi;
                    *o = pi * r;
                    q += r * *o;
                }
                q
            }
            Precision::Full(p) => {
                let d = self.mean.len();
                let mut q = 0.0;
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..d {
                        acc += p[(i, j)] * (x[j] - self.mean[j]);
                    }
                    out[i] = acc;
                    q += (x[i] - self.mean[i]) * acc;
                }
                q
            }
        }
    }

    fn quad_form(&self, x: &[f64]) -> f64 {
        match &self.precision {
            Precision::Iso(p) => p * x.iter().zip(&self.mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            Precision::Diag(p) => x
                .iter()
                .zip(&self.mean)
                .zip(p)
                .map(|((a, b), pi)| pi * (a - b) * (a - b))
                .sum(),
            Precision::Full(_) => {
                let mut tmp = vec![0.0; x.len()];
                self.precision_times_centered(x, &mut tmp)
            }
        }
    }

    fn precision_matrix(&self) -> DMatrix<f64> {
        let d = self.mean.len();
        match &self.precision {
            Precision::Iso(p) => DMatrix::from_diagonal_element(d, d, *p),
            Precision::Diag(p) => DMatrix::from_diagonal(&DVector::from_column_slice(p)),
            Precision::Full(p) => p.clone(),
        }
    }

    fn sample_into(&self, stream: &mut Stream, out: &mut [f64]) {
        stream.fill_normal(out);
        match &self.factor {
            Factor::Iso(s) => {
                for (o, m) in out.iter_mut().zip(&self.mean) {
                    *o = m + s * *o;
                }
            }
            Factor::Diag(s) => {
                for ((o, m), si) in out.iter_mut().zip(&self.mean).zip(s) {
                    *o = m + si * *o;
                }
            }
            Factor::Lower(l) => {
                let z = out.to_vec();
                let d = z.len();
                for i in 0..d {
                    let mut acc = self.mean[i];
                    for (j, zj) in z.iter().enumerate().take(i + 1) {
                        acc += l[(i, j)] * zj;
                    }
                    out[i] = acc;
                }
            }
        }
    }
}

/// A potential `V` for a custom strongly log-concave component with density
/// `exp(-V(x) - log_normalizer)`.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;

    /// Approved approximate sampler, if any. Returns `false` when the
    /// potential has none, leaving `out` untouched.
    fn sample(&self, _stream: &mut Stream, _out: &mut [f64]) -> bool {
        false
    }

    fn has_sampler(&self) -> bool {
        false
    }
}

/// A user-supplied component. The declared constants are trusted; use
/// [`audit_custom`] to spot-check them.
#[derive(Clone)]
pub struct Custom {
    pub potential: Arc<dyn Potential>,
    pub mode: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub log_normalizer: f64,
    /// Standard-deviation scale used to size quadrature boxes and grids.
    pub scale: f64,
}

impl fmt::Debug for Custom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Custom")
            .field("mode", &self.mode)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("log_normalizer", &self.log_normalizer)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum Component {
    Gaussian(Gaussian),
    Custom(Custom),
}

impl Component {
    pub fn gaussian(mean: Vec<f64>, cov: Covariance) -> Result<Self> {
        Gaussian::new(mean, cov).map(Component::Gaussian)
    }

    pub fn iso(mean: Vec<f64>, var: f64) -> Result<Self> {
        Self::gaussian(mean, Covariance::Iso(var))
    }

    pub fn custom(c: Custom) -> Result<Self> {
        if c.mode.len() != c.potential.dim() {
            return Err(Error::DimensionMismatch { expected: c.potential.dim(), got: c.mode.len() });
        }
        if !(c.alpha > 0.0 && c.beta >= c.alpha && c.beta.is_finite()) {
            return Err(Error::InvalidMixture(format!(
                "custom component needs 0 < alpha <= beta, got alpha={} beta={}",
                c.alpha, c.beta
            )));
        }
        if !c.log_normalizer.is_finite() {
            return Err(Error::NonFinite("log normalizer"));
        }
        Ok(Component::Custom(c))
    }

    pub fn dim(&self) -> usize {
        match self {
            Component::Gaussian(g) => g.mean.len(),
            Component::Custom(c) => c.mode.len(),
        }
    }

    pub fn mode(&self) -> &[f64] {
        match self {
            Component::Gaussian(g) => &g.mean,
            Component::Custom(c) => &c.mode,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Component::Gaussian(g) => g.alpha,
            Component::Custom(c) => c.alpha,
        }
    }

    pub fn beta(&self) -> f64 {
        match self {
            Component::Gaussian(g) => g.beta,
            Component::Custom(c) => c.beta,
        }
    }

    pub fn max_std(&self) -> f64 {
        match self {
            Component::Gaussian(g) => g.max_std(),
            Component::Custom(c) => c.scale,
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            Component::Gaussian(g) => g.log_norm - 0.5 * g.quad_form(x),
            Component::Custom(c) => -c.potential.value(x) - c.log_normalizer,
        }
    }

    /// Writes `∇V(x)` into `grad` and returns `log μ_i(x)`.
    pub fn log_density_and_grad_potential(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            Component::Gaussian(g) => g.log_norm - 0.5 * g.precision_times_centered(x, grad),
            Component::Custom(c) => {
                c.potential.gradient(x, grad);
                -c.potential.value(x) - c.log_normalizer
            }
        }
    }

    pub fn grad_potential(&self, x: &[f64], grad: &mut [f64]) {
        self.log_density_and_grad_potential(x, grad);
    }

    pub fn hessian_potential(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            Component::Gaussian(g) => g.precision_matrix(),
            Component::Custom(c) => c.potential.hessian(x),
        }
    }

    pub fn has_sampler(&self) -> bool {
        match self {
            Component::Gaussian(_) => true,
            Component::Custom(c) => c.potential.has_sampler(),
        }
    }

    /// Draws one point. Returns `false` for a custom component without an
    /// approved sampler.
    pub fn sample_into(&self, stream: &mut Stream, out: &mut [f64]) -> bool {
        match self {
            Component::Gaussian(g) => {
                g.sample_into(stream, out);
                true
            }
            Component::Custom(c) => c.potential.sample(stream, out),
        }
    }

    pub fn as_gaussian(&self) -> Option<&Gaussian> {
        match self {
            Component::Gaussian(g) => Some(g),
            Component::Custom(_) => None,
        }
    }
}

/// Result of a finite-difference audit of a custom component.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub max_gradient_error: f64,
    pub max_hessian_error: f64,
    pub min_hessian_eigenvalue: f64,
    pub max_hessian_eigenvalue: f64,
    /// Declared `alpha <= λ_min` and `λ_max <= beta` at every audited point.
    pub constants_consistent: bool,
}

/// Compares the component's gradient and Hessian against central finite
/// differences of its value and gradient at `points`, and checks the
/// Hessian spectrum against the declared `alpha`, `beta`.
pub fn audit_custom(component: &Component, points: &[Vec<f64>], step: f64) -> AuditReport {
    let d = component.dim();
    let mut max_g: f64 = 0.0;
    let mut max_h: f64 = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut g = vec![0.0; d];
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    let neg_log = |x: &[f64]| -component.log_density(x);
    for x in points {
        component.grad_potential(x, &mut g);
        let h = component.hessian_potential(x);
        let mut y = x.clone();
        for k in 0..d {
            y[k] = x[k] + step;
            let fp = neg_log(&y);
            component.grad_potential(&y, &mut gp);
            y[k] = x[k] - step;
            let fm = neg_log(&y);
            component.grad_potential(&y, &mut gm);
            y[k] = x[k];
            max_g = max_g.max(((fp - fm) / (2.0 * step) - g[k]).abs());
            for r in 0..d {
                max_h = max_h.max(((gp[r] - gm[r]) / (2.0 * step) - h[(r, k)]).abs());
            }
        }
        let eig = SymmetricEigen::new(h).eigenvalues;
        lo = lo.min(eig.min());
        hi = hi.max(eig.max());
    }
    let tol = 1e-9 * component.beta().max(1.0);
    AuditReport {
        max_gradient_error: max_g,
        max_hessian_error: max_h,
        min_hessian_eigenvalue: lo,
        max_hessian_eigenvalue: hi,
        constants_consistent: points.is_empty()
            || (lo >= component.alpha() - tol && hi <= component.beta() + tol),
    }
}

/// `log ∫ exp(-V(x)) dx` for a 1-D potential by trapezoid on `[lo, hi]`,
/// doubling the resolution until successive estimates agree to `tol`.
pub fn log_normalizer_1d(potential: &dyn Potential, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if potential.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: potential.dim() });
    }
    let shift = (0..=64)
        .map(|i| -potential.value(&[lo + (hi - lo) * i as f64 / 64.0]))
        .fold(f64::NEG_INFINITY, f64::max);
    let f = |x: f64| (-potential.value(&[x]) - shift).exp();
    let z = crate::quadrature::adaptive_trapezoid(&f, lo, hi, tol)?;
    Ok(z.value.ln() + shift)
}
