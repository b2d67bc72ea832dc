use crate::error::{Error, Result};
use crate::mixture::Mixture;
use crate::quadrature::{trapezoid, Grid};

use super::graph::OverlapGraph;

/// Poincaré and log-Sobolev constant bounds for a mixture whose overlap
/// graph is connected.
#[derive(Debug, Clone, PartialEq)]
pub struct LsiCertificate {
    /// Components covered, in the original mixture's indexing.
    pub indices: Vec<usize>,
    pub c_pi_bound: f64,
    pub c_ls_bound: f64,
    pub delta_used: f64,
    pub diameter: usize,
    pub p_star: f64,
    /// `ln(4/p_*)`, the log-Sobolev constant of the instant-mixing chain
    /// used in `c_ls_bound`.
    pub chain_constant: f64,
    /// `1 + ln(1/p_*)`, recorded for comparison.
    pub chain_constant_formal: f64,
    /// `4 |I|^2 (1 + ln(1/p_*)) / p_*`.
    pub cluster_constant: f64,
    /// `4 |I| (1 + ln(1/p_*)) / p_*`, informational.
    pub cluster_constant_linear: f64,
    /// `C_LS(μ_i) = 1/α_i` for each covered component (also used as `C_PI`).
    pub component_constants: Vec<f64>,
    pub weights: Vec<f64>,
}

fn certify(m: &Mixture, indices: &[usize], delta: f64, diameter: usize) -> LsiCertificate {
    let total: f64 = indices.iter().map(|&i| m.weights()[i]).sum();
    let weights: Vec<f64> = indices.iter().map(|&i| m.weights()[i] / total).collect();
    let comps: Vec<f64> = indices.iter().map(|&i| 1.0 / m.component(i).alpha()).collect();
    let p_star = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let n = indices.len() as f64;
    let worst = comps.iter().zip(&weights).map(|(c, p)| c / p).fold(0.0, f64::max);
    let mm = diameter.max(1) as f64;
    let chain = (4.0 / p_star).ln();
    let formal = 1.0 + (1.0 / p_star).ln();
    LsiCertificate {
        indices: indices.to_vec(),
        c_pi_bound: 4.0 * mm / delta * worst,
        c_ls_bound: 4.0 * mm * chain / delta * worst,
        delta_used: delta,
        diameter,
        p_star,
        chain_constant: chain,
        chain_constant_formal: formal,
        cluster_constant: 4.0 * n * n * formal / p_star,
        cluster_constant_linear: 4.0 * n * formal / p_star,
        component_constants: comps,
        weights,
    }
}

fn component_delta(graph: &OverlapGraph, c: usize) -> f64 {
    if graph.components[c].len() == 1 {
        1.0
    } else {
        graph.threshold
    }
}

/// Certificate for the whole mixture. Fails if the graph is disconnected;
/// see [`lsi_bound_per_component`].
pub fn lsi_bound(m: &Mixture, graph: &OverlapGraph) -> Result<LsiCertificate> {
    if graph.k() != m.k() {
        return Err(Error::DimensionMismatch { expected: m.k(), got: graph.k() });
    }
    if !graph.is_connected() {
        return Err(Error::Disconnected(graph.components.len()));
    }
    Ok(certify(m, &graph.components[0], component_delta(graph, 0), graph.diameters[0]))
}

/// One certificate per connected component, each for the sub-mixture with
/// renormalized weights.
pub fn lsi_bound_per_component(m: &Mixture, graph: &OverlapGraph) -> Result<Vec<LsiCertificate>> {
    if graph.k() != m.k() {
        return Err(Error::DimensionMismatch { expected: m.k(), got: graph.k() });
    }
    Ok((0..graph.components.len())
        .map(|c| certify(m, &graph.components[c], component_delta(graph, c), graph.diameters[c]))
        .collect())
}

/// Scalar test functions with known derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    Constant(f64),
    Linear,
    Square,
    LogisticStep { center: f64, scale: f64 },
    GaussianBump { center: f64, width: f64 },
}

impl TestFunction {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Constant(c) => c,
            TestFunction::Linear => x,
            TestFunction::Square => x * x,
            TestFunction::LogisticStep { center, scale } => 1.0 / (1.0 + (-(x - center) / scale).exp()),
            TestFunction::GaussianBump { center, width } => (-0.5 * ((x - center) / width).powi(2)).exp(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Constant(_) => 0.0,
            TestFunction::Linear => 1.0,
            TestFunction::Square => 2.0 * x,
            TestFunction::LogisticStep { .. } => {
                let s = self.value(x);
                let TestFunction::LogisticStep { scale, .. } = *self else { unreachable!() };
                s * (1.0 - s) / scale
            }
            TestFunction::GaussianBump { center, width } => -(x - center) / (width * width) * self.value(x),
        }
    }

    pub fn name(&self) -> String {
        match self {
            TestFunction::Constant(c) => format!("constant({c})"),
            TestFunction::Linear => "x".into(),
            TestFunction::Square => "x^2".into(),
            TestFunction::LogisticStep { center, scale } => format!("logistic(center={center}, scale={scale})"),
            TestFunction::GaussianBump { center, width } => format!("bump(center={center}, width={width})"),
        }
    }
}

/// `x`, `x²`, and logistic steps and Gaussian bumps at five locations
/// spread evenly over the mode hull widened by two standard deviations.
pub fn default_family(m: &Mixture) -> Vec<TestFunction> {
    let s = m.components().iter().map(|c| c.max_std()).fold(0.0, f64::max);
    let lo = m.components().iter().map(|c| c.mode()[0]).fold(f64::INFINITY, f64::min) - 2.0 * s;
    let hi = m.components().iter().map(|c| c.mode()[0]).fold(f64::NEG_INFINITY, f64::max) + 2.0 * s;
    let centers: Vec<f64> = (0..5).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect();
    let mut fam = vec![TestFunction::Linear, TestFunction::Square];
    fam.extend(centers.iter().map(|&c| TestFunction::LogisticStep { center: c, scale: s }));
    fam.extend(centers.iter().map(|&c| TestFunction::GaussianBump { center: c, width: s }));
    fam
}

/// Grid over the mode hull widened by 10 standard deviations.
pub fn default_grid_1d(m: &Mixture) -> Grid {
    let (lo, hi) = m.bounding_box(10.0);
    Grid { lo: lo[0], hi: hi[0], n: 8193 }
}

pub(crate) fn check_grid_1d(m: &Mixture, grid: &Grid) -> Result<()> {
    if m.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: m.dim() });
    }
    for (i, c) in m.components().iter().enumerate() {
        let (need_lo, need_hi) = (c.mode()[0] - 8.0 * c.max_std(), c.mode()[0] + 8.0 * c.max_std());
        if grid.lo > need_lo || grid.hi < need_hi {
            return Err(Error::GridTooNarrow { component: i, need_lo, need_hi });
        }
    }
    Ok(())
}

/// Expectations under a 1-D density sampled on a grid, normalized by the
/// quadrature mass.
pub(crate) struct GridMeasure {
    pub xs: Vec<f64>,
    pub dens: Vec<f64>,
    pub dx: f64,
    mass: f64,
}

impl GridMeasure {
    pub fn new(grid: &Grid, log_density: impl Fn(f64) -> f64) -> Self {
        let xs = grid.points();
        let dens: Vec<f64> = xs.iter().map(|&x| log_density(x).exp()).collect();
        let dx = grid.step();
        let mass = trapezoid(&dens, dx);
        Self { xs, dens, dx, mass }
    }

    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        let y: Vec<f64> = self.xs.iter().zip(&self.dens).map(|(&x, &p)| g(x) * p).collect();
        trapezoid(&y, self.dx) / self.mass
    }
}

pub(crate) fn xlogx(v: f64) -> f64 {
    if v > 0.0 {
        v * v.ln()
    } else {
        0.0
    }
}

/// `Ent_μ[f²]` and `E_μ[f'²]`.
pub(crate) fn entropy_and_energy(mu: &GridMeasure, f: &TestFunction) -> (f64, f64) {
    let g_mean = mu.expect(|x| f.value(x).powi(2));
    let ent = mu.expect(|x| xlogx(f.value(x).powi(2))) - xlogx(g_mean);
    let energy = mu.expect(|x| f.derivative(x).powi(2));
    (ent.max(0.0), energy)
}

fn ratio(ent: f64, energy: f64, scale: f64) -> f64 {
    if energy > 0.0 {
        ent / (2.0 * energy)
    } else if ent <= 1e-12 * scale.max(1.0) {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsiCheckEntry {
    pub function: TestFunction,
    pub entropy: f64,
    pub energy: f64,
    /// `Ent_μ[f²] / (2 E_μ[f'²])`, zero for constant `f`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsiCheckReport {
    pub constant: f64,
    pub entries: Vec<LsiCheckEntry>,
    pub max_ratio: f64,
    pub pass: bool,
}

/// Checks `Ent_μ[f²] <= 2 c E_μ[f'²]` for each test function by trapezoid
/// quadrature on `grid`, cross-checked against the grid with every cell
/// halved.
pub fn verify_lsi_1d(m: &Mixture, c: f64, family: &[TestFunction], grid: &Grid) -> Result<LsiCheckReport> {
    check_grid_1d(m, grid)?;
    let log_mu = |x: f64| m.log_density(&[x]).unwrap_or(f64::NEG_INFINITY);
    let coarse = GridMeasure::new(grid, log_mu);
    let fine = GridMeasure::new(&grid.refined(), log_mu);
    let mut entries = Vec::with_capacity(family.len());
    for f in family {
        let (e0, d0) = entropy_and_energy(&coarse, f);
        let (e1, d1) = entropy_and_energy(&fine, f);
        let g_scale = fine.expect(|x| f.value(x).powi(2));
        let (r0, r1) = (ratio(e0, d0, g_scale), ratio(e1, d1, g_scale));
        if r1.is_finite() && (r0 - r1).abs() > 1e-6 * r1.abs().max(1.0) {
            return Err(Error::QuadratureSelfCheck { quantity: format!("LSI ratio for {}", f.name()), coarse: r0, fine: r1 });
        }
        entries.push(LsiCheckEntry { function: *f, entropy: e1, energy: d1, ratio: r1 });
    }
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    Ok(LsiCheckReport { constant: c, pass: max_ratio <= c * (1.0 + 1e-6), max_ratio, entries })
}
