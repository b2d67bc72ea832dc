//! Sample-quality measures: kernel density estimates, total variation on
//! grids and projections, weight recovery, concentration and drift checks.

mod svg;

pub use svg::{line_plot, Series};

use crate::error::{Error, Result};
use crate::inequalities::RecursionInputs;
use crate::mixture::{Component, Mixture};
use crate::quadrature::Grid;
use crate::rng::Stream;
use crate::score::ScoreModel;

/// Default KDE grid resolution.
pub const GRID_POINTS: usize = 2048;
/// Default grid half-width beyond the mode hull, in units of the largest
/// standard deviation.
pub const GRID_MARGIN: f64 = 6.0;
pub const BANDWIDTH_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeCurve {
    pub fn integral(&self) -> f64 {
        integrate(&self.grid, &self.density)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,density\n");
        for (x, y) in self.grid.iter().zip(&self.density) {
            s.push_str(&format!("{x:.16e},{y:.16e}\n"));
        }
        s
    }
}

/// `0.9 · min(sd, IQR/1.34) · n^{-1/5}`, floored at [`BANDWIDTH_FLOOR`].
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    (0.9 * spread * n.powf(-0.2)).max(BANDWIDTH_FLOOR)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Gaussian-kernel density estimate evaluated on `grid`.
pub fn kde_1d(samples: &[f64], bandwidth: Bandwidth, grid: &[f64]) -> Result<KdeCurve> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("kde needs at least 2 samples".into()));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("kde grid is empty".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("kde samples"));
    }
    let bw = match bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(samples),
        Bandwidth::Fixed(b) if b > 0.0 => b.max(BANDWIDTH_FLOOR),
        Bandwidth::Fixed(b) => return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {b}"))),
    };
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let norm = 1.0 / (sorted.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    // kernels beyond 9 bandwidths contribute below 1e-17 relative
    let reach = 9.0 * bw;
    let density = grid
        .iter()
        .map(|&x| {
            let lo = sorted.partition_point(|&s| s < x - reach);
            let hi = sorted.partition_point(|&s| s <= x + reach);
            let sum: f64 = sorted[lo..hi]
                .iter()
                .map(|&s| {
                    let u = (x - s) / bw;
                    (-0.5 * u * u).exp()
                })
                .sum();
            sum * norm
        })
        .collect();
    Ok(KdeCurve { grid: grid.to_vec(), density, bandwidth: bw })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvMethod {
    Grid1d,
    Projected,
    WeightLowerBound,
}

impl TvMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            TvMethod::Grid1d => "grid-1d",
            TvMethod::Projected => "projected",
            TvMethod::WeightLowerBound => "weight-lower-bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvReport {
    pub estimate: f64,
    pub method: TvMethod,
    pub grid_points: usize,
    pub bandwidth: Option<f64>,
    pub mc_error: Option<f64>,
}

fn integrate(grid: &[f64], y: &[f64]) -> f64 {
    grid.windows(2).zip(y.windows(2)).map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1])).sum()
}

/// `½∫|f - g|` by the trapezoid rule on a shared grid, clamped to `[0, 1]`.
pub fn tv_curves(grid_f: &[f64], f: &[f64], grid_g: &[f64], g: &[f64]) -> Result<f64> {
    if grid_f != grid_g || f.len() != grid_f.len() || g.len() != grid_g.len() {
        return Err(Error::GridMismatch);
    }
    let diff: Vec<f64> = f.iter().zip(g).map(|(a, b)| (a - b).abs()).collect();
    Ok((0.5 * integrate(grid_f, &diff)).clamp(0.0, 1.0))
}

pub fn tv_grid_1d(f: &KdeCurve, g: &KdeCurve) -> Result<TvReport> {
    Ok(TvReport {
        estimate: tv_curves(&f.grid, &f.density, &g.grid, &g.density)?,
        method: TvMethod::Grid1d,
        grid_points: f.grid.len(),
        bandwidth: Some(f.bandwidth),
        mc_error: None,
    })
}

/// The exact density of a one-dimensional mixture as a curve.
pub fn density_curve(m: &Mixture, grid: &[f64]) -> Result<KdeCurve> {
    if m.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: m.dim() });
    }
    let density = grid.iter().map(|&x| m.log_density(&[x]).map(f64::exp)).collect::<Result<Vec<_>>>()?;
    Ok(KdeCurve { grid: grid.to_vec(), density, bandwidth: 0.0 })
}

/// [`GRID_POINTS`] points over the projected mode hull ± [`GRID_MARGIN`]
/// projected standard deviations.
pub fn default_grid(m: &Mixture, direction: &[f64]) -> Result<Vec<f64>> {
    if direction.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: direction.len() });
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in m.components() {
        let centre: f64 = c.mode().iter().zip(direction).map(|(a, b)| a * b).sum();
        let sd = match c {
            Component::Gaussian(g) => g.projected_std(direction),
            Component::Custom(_) => c.max_std(),
        };
        lo = lo.min(centre - GRID_MARGIN * sd);
        hi = hi.max(centre + GRID_MARGIN * sd);
    }
    Ok(Grid::new(lo, hi, GRID_POINTS)?.points())
}

/// Grid-TV between KDEs of two samples, sharing one Silverman bandwidth
/// computed from the pooled samples.
pub fn sample_tv_1d(a: &[f64], b: &[f64], grid: &[f64]) -> Result<TvReport> {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument("each sample needs at least 2 points".into()));
    }
    let bw = silverman_bandwidth(&pooled);
    let fa = kde_1d(a, Bandwidth::Fixed(bw), grid)?;
    let fb = kde_1d(b, Bandwidth::Fixed(bw), grid)?;
    tv_grid_1d(&fa, &fb)
}

/// Grid-TV between the KDE of `samples` and the exact density of a 1-D
/// mixture, on the mixture's default grid.
pub fn tv_to_truth_1d(samples: &[f64], m: &Mixture) -> Result<(TvReport, KdeCurve, KdeCurve)> {
    let grid = default_grid(m, &[1.0])?;
    let kde = kde_1d(samples, Bandwidth::Silverman, &grid)?;
    let truth = density_curve(m, &grid)?;
    Ok((tv_grid_1d(&kde, &truth)?, kde, truth))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightRecoveryReport {
    pub fractions: Vec<f64>,
    pub weights: Vec<f64>,
    pub counts: Vec<usize>,
    pub std_errors: Vec<f64>,
    /// `½ Σ |α̂_i - p_i|`.
    pub bound: f64,
}

/// Assigns every endpoint to its most likely component and compares the
/// cluster fractions with the mixture weights.
pub fn weight_recovery(endpoints: &[Vec<f64>], m: &Mixture) -> Result<WeightRecoveryReport> {
    if endpoints.is_empty() {
        return Err(Error::InvalidArgument("no endpoints".into()));
    }
    let mut counts = vec![0usize; m.k()];
    for x in endpoints {
        if x.len() != m.dim() {
            return Err(Error::DimensionMismatch { expected: m.dim(), got: x.len() });
        }
        counts[m.i_max_all_unchecked(x)] += 1;
    }
    let n = endpoints.len() as f64;
    let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let weights = m.weights().to_vec();
    let std_errors = weights.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
    let bound = 0.5 * fractions.iter().zip(&weights).map(|(a, p)| (a - p).abs()).sum::<f64>();
    Ok(WeightRecoveryReport { fractions, weights, counts, std_errors, bound })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedTvReport {
    pub directions: Vec<Vec<f64>>,
    pub per_direction: Vec<TvReport>,
    pub max: f64,
}

/// Grid-TV of one-dimensional projections of `endpoints` against
/// projections of `n_ref` fresh ground-truth draws. A lower-bound surrogate
/// for the full total variation.
pub fn projected_tv(
    endpoints: &[Vec<f64>],
    m: &Mixture,
    directions: &[Vec<f64>],
    n_ref: usize,
    stream: &mut Stream,
) -> Result<ProjectedTvReport> {
    if m.dim() < 2 {
        return Err(Error::InvalidArgument("projected TV needs d >= 2".into()));
    }
    for u in directions {
        if u.len() != m.dim() {
            return Err(Error::DimensionMismatch { expected: m.dim(), got: u.len() });
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("zero projection direction".into()));
        }
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("projection directions must be unit vectors".into()));
        }
    }
    let reference = m.sample_ground_truth(n_ref, stream)?;
    let mut per_direction = Vec::with_capacity(directions.len());
    for u in directions {
        let a = project(endpoints, u);
        let b = project(&reference, u);
        let grid = default_grid(m, u)?;
        let mut r = sample_tv_1d(&a, &b, &grid)?;
        r.method = TvMethod::Projected;
        per_direction.push(r);
    }
    let max = per_direction.iter().map(|r| r.estimate).fold(0.0, f64::max);
    Ok(ProjectedTvReport { directions: directions.to_vec(), per_direction, max })
}

pub fn project(points: &[Vec<f64>], u: &[f64]) -> Vec<f64> {
    points.iter().map(|x| x.iter().zip(u).map(|(a, b)| a * b).sum()).collect()
}

pub fn unit_vector(dim: usize, axis: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[axis] = 1.0;
    e
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationEntry {
    pub t: f64,
    pub empirical: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    /// `D = 5 √(d/α) ln(10κ)`.
    pub radius: f64,
    pub entries: Vec<ConcentrationEntry>,
    pub pass: bool,
}

/// Empirical `P[‖x - x_*‖ ≥ D + t]` against `exp(-α t²/4)` plus three
/// binomial standard errors.
pub fn concentration_check(samples: &[Vec<f64>], component: &Component, t_list: &[f64]) -> Result<ConcentrationReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let (alpha, beta, d) = (component.alpha(), component.beta(), component.dim());
    let radius = 5.0 * (d as f64 / alpha).sqrt() * (10.0 * beta / alpha).ln();
    let mode = component.mode();
    let dists: Vec<f64> = samples
        .iter()
        .map(|x| x.iter().zip(mode).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect();
    let n = samples.len() as f64;
    let entries: Vec<ConcentrationEntry> = t_list
        .iter()
        .map(|&t| {
            let empirical = dists.iter().filter(|&&r| r >= radius + t).count() as f64 / n;
            let bound = (-alpha * t * t / 4.0).exp().min(1.0);
            let slack = 3.0 * (bound * (1.0 - bound) / n).sqrt();
            ConcentrationEntry { t, empirical, bound, slack, pass: empirical <= bound + slack }
        })
        .collect();
    let pass = entries.iter().all(|e| e.pass);
    Ok(ConcentrationReport { radius, entries, pass })
}

/// Constants of the one-step displacement bound
/// `2h(A₀ + A₁‖x - u‖) + √(48 d h ln(6N/η))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftParams {
    pub h: f64,
    pub a0: f64,
    pub a1: f64,
    pub centre: Vec<f64>,
    pub eta: f64,
}

impl DriftParams {
    /// `A₁ = β`, `A₀ = βL`, centre the weighted mean of the modes, `η = 0.1`.
    pub fn for_mixture(m: &Mixture, h: f64) -> Self {
        let c = RecursionInputs::from_mixture(m);
        let mut centre = vec![0.0; m.dim()];
        for (comp, p) in m.components().iter().zip(m.weights()) {
            for (u, v) in centre.iter_mut().zip(comp.mode()) {
                *u += p * v;
            }
        }
        Self { h, a0: c.beta * c.l, a1: c.beta, centre, eta: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub block: usize,
    pub block_max: Vec<f64>,
    pub block_exceeds: Vec<bool>,
    pub exceed_fraction: f64,
    /// `η + 3σ` with `σ` the binomial standard error at rate `η`.
    pub allowed: f64,
    pub pass: bool,
}

/// Splits a stride-1 path into blocks of `block` steps and flags blocks in
/// which some step moves further than the displacement bound with `N = block`.
pub fn drift_stats(path: &[Vec<f64>], stride: usize, block: usize, params: &DriftParams) -> Result<DriftReport> {
    if stride != 1 {
        return Err(Error::InvalidArgument(format!("drift statistics need stride 1, got {stride}")));
    }
    if block == 0 || path.len() < 2 {
        return Err(Error::InvalidArgument("need a block size >= 1 and at least one step".into()));
    }
    let d = path[0].len() as f64;
    let noise = (48.0 * d * params.h * (6.0 * block as f64 / params.eta).ln()).sqrt();
    let steps = path.len() - 1;
    let mut block_max = Vec::new();
    let mut block_exceeds = Vec::new();
    for start in (0..steps).step_by(block) {
        let end = (start + block).min(steps);
        let mut mx = 0.0f64;
        let mut exceed = false;
        for k in start..end {
            let (x, y) = (&path[k], &path[k + 1]);
            let disp = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let r = x.iter().zip(&params.centre).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let bound = 2.0 * params.h * (params.a0 + params.a1 * r) + noise;
            mx = mx.max(disp);
            exceed |= disp > bound;
        }
        block_max.push(mx);
        block_exceeds.push(exceed);
    }
    let nb = block_max.len() as f64;
    let exceed_fraction = block_exceeds.iter().filter(|&&e| e).count() as f64 / nb;
    let allowed = params.eta + 3.0 * (params.eta * (1.0 - params.eta) / nb).sqrt();
    Ok(DriftReport { block, block_max, block_exceeds, exceed_fraction, allowed, pass: exceed_fraction <= allowed })
}

/// Density `∝ exp(∫ s)` of a one-dimensional score field on `grid`, the
/// stationary law of the Langevin diffusion driven by `s`.
pub fn stationary_density_1d(model: &ScoreModel, grid: &[f64]) -> Result<KdeCurve> {
    if model.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: model.dim() });
    }
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
    }
    let mut ws = model.workspace();
    let mut s = [0.0];
    let score: Vec<f64> = grid
        .iter()
        .map(|&x| {
            model.eval_into(&[x], &mut ws, &mut s);
            s[0]
        })
        .collect();
    let mut log_p = vec![0.0; grid.len()];
    for i in 1..grid.len() {
        log_p[i] = log_p[i - 1] + 0.5 * (grid[i] - grid[i - 1]) * (score[i] + score[i - 1]);
    }
    let top = log_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut density: Vec<f64> = log_p.iter().map(|l| (l - top).exp()).collect();
    let z = integrate(grid, &density);
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::NonFinite("stationary density normalizer"));
    }
    density.iter_mut().for_each(|v| *v /= z);
    Ok(KdeCurve { grid: grid.to_vec(), density, bandwidth: 0.0 })
}
