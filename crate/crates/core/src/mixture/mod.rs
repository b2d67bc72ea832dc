//! Mixtures of strongly log-concave components.

mod component;

pub use component::{audit_custom, log_normalizer_1d, AuditReport, Component, Covariance, Custom, Gaussian, Potential};

pub use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// `μ = Σ p_i μ_i`.
#[derive(Debug, Clone)]
pub struct Mixture {
    components: Vec<Component>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    dim: usize,
}

/// Constants shared by the whole mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessSummary {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub p_star: f64,
    pub k: usize,
    pub dim: usize,
    /// Concentration radius `5 sqrt(d/α) ln(10κ)`.
    pub d_radius: f64,
    /// `β < 1`: the domain should be rescaled so that `β ≥ 1`.
    pub rescale_advised: bool,
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|a| (a - m).exp()).sum::<f64>().ln()
}

fn check_point(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("point"));
    }
    Ok(())
}

/// Scratch buffers for the allocation-free evaluation paths.
#[derive(Debug, Clone)]
pub struct Workspace {
    logs: Vec<f64>,
    grads: Vec<f64>,
}

impl Workspace {
    pub fn new(k: usize, d: usize) -> Self {
        Self { logs: vec![0.0; k], grads: vec![0.0; k * d] }
    }
}

impl Mixture {
    pub fn new(components: Vec<Component>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMixture("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::InvalidMixture(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        let dim = components[0].dim();
        for c in &components {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.dim() });
            }
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidMixture("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMixture(format!("weights sum to {total}, not 1")));
        }
        Ok(Self {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            components,
            weights,
            dim,
        })
    }

    /// Like [`Mixture::new`] but rescales `weights` to sum to one first.
    pub fn normalized(components: Vec<Component>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidMixture("weights must be positive".into()));
        }
        Self::new(components, weights.iter().map(|w| w / total).collect())
    }

    /// Equal-weight 1-D Gaussian mixture, a common test fixture.
    pub fn gaussian_1d(means: &[f64], vars: &[f64], weights: &[f64]) -> Result<Self> {
        let comps = means
            .iter()
            .zip(vars)
            .map(|(m, v)| Component::iso(vec![*m], *v))
            .collect::<Result<Vec<_>>>()?;
        Self::normalized(comps, weights.to_vec())
    }

    /// Same components under different weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.components.clone(), weights)
    }

    /// Sub-mixture over `subset`, weights renormalized.
    pub fn restrict(&self, subset: &[usize]) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        Self::normalized(
            subset.iter().map(|&i| self.components[i].clone()).collect(),
            subset.iter().map(|&i| self.weights[i]).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Component {
        &self.components[i]
    }

    pub fn p_star(&self) -> f64 {
        self.weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn kappa(&self) -> f64 {
        let beta = self.components.iter().map(|c| c.beta()).fold(0.0, f64::max);
        let alpha = self.components.iter().map(|c| c.alpha()).fold(f64::INFINITY, f64::min);
        beta / alpha
    }

    pub fn all_gaussian(&self) -> bool {
        self.components.iter().all(|c| matches!(c, Component::Gaussian(_)))
    }

    /// `log p_i + log μ_i(x)` for every component.
    pub fn component_log_terms(&self, x: &[f64], out: &mut [f64]) {
        for ((o, c), lw) in out.iter_mut().zip(&self.components).zip(&self.log_weights) {
            *o = lw + c.log_density(x);
        }
    }

    pub fn log_density_unchecked(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        self.component_log_terms(x, &mut ws.logs);
        log_sum_exp(&ws.logs)
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.dim)?;
        Ok(self.log_density_unchecked(x, &mut Workspace::new(self.k(), self.dim)))
    }

    /// Log of each component density `log μ_i(x)` (no weights).
    pub fn component_log_densities(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_point(x, self.dim)?;
        Ok(self.components.iter().map(|c| c.log_density(x)).collect())
    }

    fn responsibilities_from_logs(logs: &mut [f64]) {
        let lse = log_sum_exp(logs);
        for v in logs.iter_mut() {
            *v = (*v - lse).exp();
        }
        let s: f64 = logs.iter().sum();
        for v in logs.iter_mut() {
            *v /= s;
        }
    }

    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_point(x, self.dim)?;
        let mut logs = vec![0.0; self.k()];
        self.component_log_terms(x, &mut logs);
        Self::responsibilities_from_logs(&mut logs);
        Ok(logs)
    }

    /// `∇ log μ(x)` written into `out`, without validation.
    pub fn score_unchecked(&self, x: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        let d = self.dim;
        if self.k() == 1 {
            self.components[0].grad_potential(x, out);
            for o in out.iter_mut() {
                *o = -*o;
            }
            return;
        }
        for (i, c) in self.components.iter().enumerate() {
            ws.logs[i] = self.log_weights[i]
                + c.log_density_and_grad_potential(x, &mut ws.grads[i * d..(i + 1) * d]);
        }
        Self::responsibilities_from_logs(&mut ws.logs);
        out.fill(0.0);
        for (i, r) in ws.logs.iter().enumerate() {
            for (o, g) in out.iter_mut().zip(&ws.grads[i * d..(i + 1) * d]) {
                *o -= r * g;
            }
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_point(x, self.dim)?;
        let mut out = vec![0.0; self.dim];
        self.score_unchecked(x, &mut Workspace::new(self.k(), self.dim), &mut out);
        Ok(out)
    }

    /// `∇² log μ(x) = -(Σ r_i ∇²V_i - Σ_{i<j} r_i r_j (∇V_i - ∇V_j)(∇V_i - ∇V_j)ᵀ)`.
    pub fn hessian_log_density(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_point(x, self.dim)?;
        let d = self.dim;
        let k = self.k();
        let mut ws = Workspace::new(k, d);
        for (i, c) in self.components.iter().enumerate() {
            ws.logs[i] = self.log_weights[i]
                + c.log_density_and_grad_potential(x, &mut ws.grads[i * d..(i + 1) * d]);
        }
        Self::responsibilities_from_logs(&mut ws.logs);
        let r = &ws.logs;
        let mut hv = DMatrix::zeros(d, d);
        for (i, c) in self.components.iter().enumerate() {
            hv += c.hessian_potential(x) * r[i];
        }
        let mut diff = vec![0.0; d];
        for i in 0..k {
            for j in i + 1..k {
                let w = r[i] * r[j];
                if w == 0.0 {
                    continue;
                }
                for (t, dv) in diff.iter_mut().enumerate() {
                    *dv = ws.grads[i * d + t] - ws.grads[j * d + t];
                }
                for a in 0..d {
                    for b in 0..d {
                        hv[(a, b)] -= w * diff[a] * diff[b];
                    }
                }
            }
        }
        Ok(-hv)
    }

    /// Component of largest density `μ_i(x)` over `subset`; ties go to the
    /// largest index.
    pub fn i_max(&self, x: &[f64], subset: &[usize]) -> Result<usize> {
        check_point(x, self.dim)?;
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        let mut best = subset[0];
        let mut best_v = f64::NEG_INFINITY;
        for &i in subset {
            if i >= self.k() {
                return Err(Error::InvalidArgument(format!("component index {i} out of range")));
            }
            let v = self.components[i].log_density(x);
            if v > best_v || (v == best_v && i > best) {
                best = i;
                best_v = v;
            }
        }
        Ok(best)
    }

    /// `i_max` over all components, without validation.
    pub fn i_max_all_unchecked(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (i, c) in self.components.iter().enumerate() {
            let v = c.log_density(x);
            if v >= best_v {
                best = i;
                best_v = v;
            }
        }
        best
    }

    /// Ancestral sampling: component from `p`, then a draw from that
    /// component. Each draw `n` uses its own position in `stream`'s keyspace
    /// so the batch is a pure function of the stream key.
    pub fn sample_ground_truth(&self, n: usize, stream: &mut Stream) -> Result<Vec<Vec<f64>>> {
        if let Some(i) = self.components.iter().position(|c| !c.has_sampler()) {
            return Err(Error::NoSampler(i));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let i = stream.categorical(&self.weights);
            let mut x = vec![0.0; self.dim];
            if !self.components[i].sample_into(stream, &mut x) {
                return Err(Error::NoSampler(i));
            }
            out.push(x);
        }
        Ok(out)
    }

    /// Like [`Mixture::sample_ground_truth`] but also returns the component
    /// label of each draw.
    pub fn sample_labeled(&self, n: usize, stream: &mut Stream) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        if let Some(i) = self.components.iter().position(|c| !c.has_sampler()) {
            return Err(Error::NoSampler(i));
        }
        let mut pts = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let i = stream.categorical(&self.weights);
            let mut x = vec![0.0; self.dim];
            self.components[i].sample_into(stream, &mut x);
            pts.push(x);
            labels.push(i);
        }
        Ok((pts, labels))
    }

    pub fn smoothness_summary(&self) -> SmoothnessSummary {
        let alpha = self.components.iter().map(|c| c.alpha()).fold(f64::INFINITY, f64::min);
        let beta = self.components.iter().map(|c| c.beta()).fold(0.0, f64::max);
        let kappa = beta / alpha;
        SmoothnessSummary {
            alpha,
            beta,
            kappa,
            p_star: self.p_star(),
            k: self.k(),
            dim: self.dim,
            d_radius: 5.0 * (self.dim as f64 / alpha).sqrt() * (10.0 * kappa).ln(),
            rescale_advised: beta < 1.0,
        }
    }

    /// Largest distance between two component modes.
    pub fn max_mode_distance(&self) -> f64 {
        let mut best: f64 = 0.0;
        for a in &self.components {
            for b in &self.components {
                let d2: f64 = a.mode().iter().zip(b.mode()).map(|(x, y)| (x - y) * (x - y)).sum();
                best = best.max(d2.sqrt());
            }
        }
        best
    }

    /// Axis-aligned box enclosing every mode widened by `width` times the
    /// largest component standard deviation.
    pub fn bounding_box(&self, width: f64) -> (Vec<f64>, Vec<f64>) {
        let s = self.components.iter().map(|c| c.max_std()).fold(0.0, f64::max);
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for c in &self.components {
            for (t, m) in c.mode().iter().enumerate() {
                lo[t] = lo[t].min(m - width * s);
                hi[t] = hi[t].max(m + width * s);
            }
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests;
