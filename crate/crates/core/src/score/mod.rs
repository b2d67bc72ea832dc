//! Score fields `s ≈ ∇ log μ`: the exact score, the score under wrong
//! weights, additive perturbations, and a trained network.

mod mlp;
mod train;

pub use mlp::{tanh, Loss, Mlp};
pub use train::{train, train_denoising, train_vanilla, Optimizer, TrainConfig, TrainData, TrainReport};

use crate::error::{Error, Result};
use crate::mixture::{Component, Mixture, Workspace};
use crate::rng::Stream;

/// Perturbation added to a base score.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Constant(Vec<f64>),
    /// `amplitude · sin(⟨wavevector, x⟩ + phase)`.
    Sinusoid { amplitude: Vec<f64>, wavevector: Vec<f64>, phase: f64 },
}

impl Field {
    pub fn dim(&self) -> usize {
        match self {
            Field::Constant(c) => c.len(),
            Field::Sinusoid { amplitude, .. } => amplitude.len(),
        }
    }

    fn add_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Field::Constant(c) => {
                for (o, v) in out.iter_mut().zip(c) {
                    *o += v;
                }
            }
            Field::Sinusoid { amplitude, wavevector, phase } => {
                let s = (wavevector.iter().zip(x).map(|(k, v)| k * v).sum::<f64>() + phase).sin();
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o += a * s;
                }
            }
        }
    }

    /// `E_μ ‖field(x)‖²` in closed form for Gaussian mixtures.
    pub fn l2_norm_sq(&self, m: &Mixture) -> Result<f64> {
        match self {
            Field::Constant(c) => Ok(c.iter().map(|v| v * v).sum()),
            Field::Sinusoid { amplitude, wavevector, phase } => {
                let a2: f64 = amplitude.iter().map(|v| v * v).sum();
                let mut acc = 0.0;
                for (c, p) in m.components().iter().zip(m.weights()) {
                    let Component::Gaussian(g) = c else {
                        return Err(Error::InvalidArgument("closed-form field norm needs Gaussian components".into()));
                    };
                    let cov = g.covariance_matrix();
                    let k = nalgebra::DVector::from_column_slice(wavevector);
                    let var = k.dot(&(&cov * &k));
                    let mean_phase: f64 = wavevector.iter().zip(g.mean()).map(|(a, b)| a * b).sum::<f64>() + phase;
                    // sin² θ = (1 - cos 2θ)/2 and E cos(2θ) = cos(2 E θ) e^{-2 Var θ}
                    acc += p * 0.5 * (1.0 - (2.0 * mean_phase).cos() * (-2.0 * var).exp());
                }
                Ok(a2 * acc)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum ScoreModel {
    Exact(Mixture),
    /// Score of the same components under `fake_weights`.
    WeightBiased { mixture: Mixture, fake_weights: Vec<f64>, biased: Mixture },
    AdditiveField { base: Box<ScoreModel>, field: Field, nominal_eps: f64 },
    Mlp(Mlp),
}

/// Scratch space for [`ScoreModel::eval_into`].
#[derive(Debug, Clone)]
pub struct ScoreWorkspace {
    mix: Workspace,
    act: Vec<f64>,
}

impl ScoreModel {
    pub fn exact(m: &Mixture) -> Self {
        ScoreModel::Exact(m.clone())
    }

    pub fn weight_biased(m: &Mixture, fake_weights: Vec<f64>) -> Result<Self> {
        let biased = m.with_weights(fake_weights.clone())?;
        Ok(ScoreModel::WeightBiased { mixture: m.clone(), fake_weights, biased })
    }

    pub fn additive(base: ScoreModel, field: Field) -> Result<Self> {
        if field.dim() != base.dim() {
            return Err(Error::DimensionMismatch { expected: base.dim(), got: field.dim() });
        }
        if let Field::Sinusoid { wavevector, .. } = &field {
            if wavevector.len() != base.dim() {
                return Err(Error::DimensionMismatch { expected: base.dim(), got: wavevector.len() });
            }
        }
        let nominal_eps = match &field {
            Field::Constant(c) => c.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Field::Sinusoid { amplitude, .. } => amplitude.iter().map(|v| v * v).sum::<f64>().sqrt(),
        };
        Ok(ScoreModel::AdditiveField { base: Box::new(base), field, nominal_eps })
    }

    pub fn dim(&self) -> usize {
        match self {
            ScoreModel::Exact(m) => m.dim(),
            ScoreModel::WeightBiased { mixture, .. } => mixture.dim(),
            ScoreModel::AdditiveField { base, .. } => base.dim(),
            ScoreModel::Mlp(n) => n.dim,
        }
    }

    pub fn tag(&self) -> String {
        match self {
            ScoreModel::Exact(_) => "exact".into(),
            ScoreModel::WeightBiased { fake_weights, .. } => format!("biased{fake_weights:?}"),
            ScoreModel::AdditiveField { base, field, .. } => {
                let f = match field {
                    Field::Constant(_) => "constant",
                    Field::Sinusoid { .. } => "sinusoid",
                };
                format!("{}+{f}", base.tag())
            }
            ScoreModel::Mlp(n) => format!("mlp(hidden={})", n.hidden),
        }
    }

    pub fn workspace(&self) -> ScoreWorkspace {
        let (k, h) = self.sizes();
        ScoreWorkspace { mix: Workspace::new(k, self.dim()), act: vec![0.0; h] }
    }

    fn sizes(&self) -> (usize, usize) {
        match self {
            ScoreModel::Exact(m) => (m.k(), 0),
            ScoreModel::WeightBiased { biased, .. } => (biased.k(), 0),
            ScoreModel::AdditiveField { base, .. } => base.sizes(),
            ScoreModel::Mlp(n) => (1, n.hidden),
        }
    }

    /// `s(x)` into `out`, without validation.
    pub fn eval_into(&self, x: &[f64], ws: &mut ScoreWorkspace, out: &mut [f64]) {
        match self {
            ScoreModel::Exact(m) => m.score_unchecked(x, &mut ws.mix, out),
            ScoreModel::WeightBiased { biased, .. } => biased.score_unchecked(x, &mut ws.mix, out),
            ScoreModel::AdditiveField { base, field, .. } => {
                base.eval_into(x, ws, out);
                field.add_into(x, out);
            }
            ScoreModel::Mlp(n) => n.eval_into(x, &mut ws.act, out),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut self.workspace(), &mut out);
        Ok(out)
    }
}

/// Monte Carlo estimate of `E_μ ‖s - ∇log μ‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Error {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
}

pub fn squared_errors(model: &ScoreModel, m: &Mixture, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    if model.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: model.dim() });
    }
    let exact = ScoreModel::exact(m);
    let (mut w1, mut w2) = (model.workspace(), exact.workspace());
    let (mut a, mut b) = (vec![0.0; m.dim()], vec![0.0; m.dim()]);
    Ok(points
        .iter()
        .map(|x| {
            model.eval_into(x, &mut w1, &mut a);
            exact.eval_into(x, &mut w2, &mut b);
            a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum()
        })
        .collect())
}

pub fn l2_error(model: &ScoreModel, m: &Mixture, n_mc: usize, stream: &mut Stream) -> Result<L2Error> {
    if n_mc < 100 {
        return Err(Error::InvalidArgument(format!("l2_error needs at least 100 draws, got {n_mc}")));
    }
    let pts = m.sample_ground_truth(n_mc, stream)?;
    let e = squared_errors(model, m, &pts)?;
    let n = n_mc as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(L2Error { estimate: mean, std_error: (var / n).sqrt(), n: n_mc })
}

/// Threshold `ε_{score,1}` defining the bad set `{‖s - ∇log μ‖ > ε_{score,1}}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BadSetConfig {
    pub eps_score_1: f64,
}

impl BadSetConfig {
    pub fn new(eps_score_1: f64) -> Result<Self> {
        if !(eps_score_1 > 0.0 && eps_score_1.is_finite()) {
            return Err(Error::InvalidArgument("bad-set threshold must be positive".into()));
        }
        Ok(Self { eps_score_1 })
    }

    /// `ε_{score,1}² = ε_TV² / (8T)`.
    pub fn from_tv(eps_tv: f64, t: f64) -> Result<Self> {
        Self::new((eps_tv * eps_tv / (8.0 * t)).sqrt())
    }
}

pub fn bad_set_member(model: &ScoreModel, m: &Mixture, cfg: &BadSetConfig, x: &[f64]) -> Result<bool> {
    let s = model.evaluate(x)?;
    let e = m.score(x)?;
    let d2: f64 = s.iter().zip(&e).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(d2.sqrt() > cfg.eps_score_1)
}

/// Allocation-free bad-set test for the sampler's monitor.
pub(crate) struct BadSetProbe {
    exact: ScoreModel,
    ws: ScoreWorkspace,
    ex: Vec<f64>,
    threshold_sq: f64,
}

impl BadSetProbe {
    pub fn new(m: &Mixture, cfg: &BadSetConfig) -> Self {
        let exact = ScoreModel::exact(m);
        let ws = exact.workspace();
        Self { exact, ws, ex: vec![0.0; m.dim()], threshold_sq: cfg.eps_score_1 * cfg.eps_score_1 }
    }

    /// `s` must be the model's score at `x`.
    pub fn contains(&mut self, x: &[f64], s: &[f64]) -> bool {
        self.exact.eval_into(x, &mut self.ws, &mut self.ex);
        s.iter().zip(&self.ex).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() > self.threshold_sq
    }
}
