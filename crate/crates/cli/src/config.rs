//! Experiment configuration files (TOML). Unknown keys are rejected.

use std::path::Path;

use anyhow::{bail, Context, Result};
use lmclab::diagnostics::Bandwidth;
use lmclab::inequalities::OverlapMethod;
use lmclab::mixture::Mixture;
use lmclab::score::{Field, Loss, Optimizer, TrainConfig};
use lmclab::{Component, Covariance};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub mixture: MixtureSpec,
    #[serde(default)]
    pub score: ScoreSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub lsi: LsiSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub check: Vec<CheckSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub components: Vec<ComponentSpec>,
}

/// A Gaussian component. Weights are relative and rescaled to sum to one.
/// At most one of `variance`, `diag`, `covariance`;
/// unit variance when none is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScoreSpec {
    #[default]
    Exact,
    Biased {
        weights: Vec<f64>,
    },
    /// Exact (or biased, when `weights` is set) score plus a field.
    Field {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        field: FieldSpec,
    },
    Trained {
        train: TrainSpec,
    },
    /// Network weights from a file written by `train-score`.
    File {
        path: String,
    },
}

impl ScoreSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            ScoreSpec::Exact => "exact",
            ScoreSpec::Biased { .. } => "biased",
            ScoreSpec::Field { .. } => "field",
            ScoreSpec::Trained { .. } => "trained",
            ScoreSpec::File { .. } => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { vector: Vec<f64> },
    Sinusoid { amplitude: Vec<f64>, wavevector: Vec<f64>, #[serde(default)] phase: f64 },
}

impl FieldSpec {
    pub fn build(&self) -> Field {
        match self {
            FieldSpec::Constant { vector } => Field::Constant(vector.clone()),
            FieldSpec::Sinusoid { amplitude, wavevector, phase } => {
                Field::Sinusoid { amplitude: amplitude.clone(), wavevector: wavevector.clone(), phase: *phase }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossSpec {
    Vanilla,
    Denoising,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerSpec {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub loss: LossSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub optimizer: OptimizerSpec,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub hidden: usize,
    /// Size of the fixed training set; 0 draws a fresh batch at every step.
    pub n_train: usize,
    #[serde(default)]
    pub shuffle: bool,
    /// Monte Carlo draws for the reported L2 score error.
    #[serde(default = "default_l2_samples")]
    pub l2_samples: usize,
}

fn default_l2_samples() -> usize {
    10_000
}

impl TrainSpec {
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let loss = match (&self.loss, self.sigma) {
            (LossSpec::Vanilla, None) => Loss::Vanilla,
            (LossSpec::Vanilla, Some(_)) => bail!("score.train.sigma is only valid with the denoising loss"),
            (LossSpec::Denoising, Some(sigma)) => Loss::Denoising { sigma },
            (LossSpec::Denoising, None) => bail!("score.train.sigma is required for the denoising loss"),
        };
        let optimizer = match self.optimizer {
            OptimizerSpec::Sgd => Optimizer::Sgd { lr: self.lr },
            OptimizerSpec::Adam => Optimizer::adam(self.lr),
        };
        let cfg = TrainConfig {
            loss,
            optimizer,
            steps: self.steps,
            batch_size: self.batch_size,
            hidden: self.hidden,
            seed,
            shuffle: self.shuffle,
        };
        cfg.validate().context("score.train")?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitModeSpec {
    PerSample,
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    /// Number of ground-truth draws in the init set.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<InitModeSpec>,
    /// CSV of init points (`x_0,...` header), replacing the ground-truth draws.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

fn default_m() -> usize {
    40
}

impl Default for InitSpec {
    fn default() -> Self {
        Self { m: default_m(), mode: None, file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub h: f64,
    /// Iteration counts at which states are reported.
    pub horizons: Vec<usize>,
    pub chains: usize,
    /// When set, every `record_stride`-th state is written to
    /// `trajectories.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self { h: 0.01, horizons: vec![0, 200], chains: 40, record_stride: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// Axes along which projected TVs are computed (d >= 2).
    #[serde(default = "default_axes")]
    pub projection_axes: Vec<usize>,
    #[serde(default = "default_n_ref")]
    pub n_ref: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bad_set: Option<BadSetSpec>,
    /// Block length for displacement statistics of the first chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_block: Option<usize>,
    /// Number of chains drawn in trajectory plots.
    #[serde(default = "default_plot_chains")]
    pub plot_chains: usize,
    /// Fixed KDE bandwidth; Silverman's rule when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
}

impl DiagnosticsSpec {
    pub fn kde_bandwidth(&self) -> Bandwidth {
        match self.bandwidth {
            Some(b) => Bandwidth::Fixed(b),
            None => Bandwidth::Silverman,
        }
    }
}

fn default_axes() -> Vec<usize> {
    vec![0]
}

fn default_n_ref() -> usize {
    10_000
}

fn default_plot_chains() -> usize {
    15
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            projection_axes: default_axes(),
            n_ref: default_n_ref(),
            bad_set: None,
            drift_block: None,
            plot_chains: default_plot_chains(),
            bandwidth: None,
        }
    }
}

/// Bad-set threshold `ε₁² = ε_TV² / (8T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BadSetSpec {
    pub eps_tv: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapSpec {
    Auto,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsiSpec {
    /// Graph threshold; defaults to the largest one keeping the graph
    /// connected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "default_eps")]
    pub eps_tv: f64,
    #[serde(default = "default_eps")]
    pub tau: f64,
    #[serde(default = "default_overlap")]
    pub overlap: OverlapSpec,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_mc")]
    pub samples: usize,
    #[serde(default)]
    pub threshold_small_weights: bool,
}

fn default_eps() -> f64 {
    0.1
}

fn default_overlap() -> OverlapSpec {
    OverlapSpec::Auto
}

fn default_tol() -> f64 {
    1e-9
}

fn default_mc() -> usize {
    100_000
}

impl Default for LsiSpec {
    fn default() -> Self {
        Self {
            delta: None,
            eps_tv: default_eps(),
            tau: default_eps(),
            overlap: default_overlap(),
            tol: default_tol(),
            samples: default_mc(),
            threshold_small_weights: false,
        }
    }
}

impl LsiSpec {
    pub fn method(&self, m: &Mixture, seed: u64) -> OverlapMethod {
        match self.overlap {
            OverlapSpec::Auto => lmclab::inequalities::default_method(m, seed),
            OverlapSpec::Quadrature => OverlapMethod::Quadrature { tol: self.tol },
            OverlapSpec::MonteCarlo => OverlapMethod::MonteCarlo { samples: self.samples, seed },
        }
    }
}

/// A threshold on a reported metric, enforced by `--check`.
/// `metric <= max`, `metric >= min`, and `metric <= other + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_most: Option<String>,
    #[serde(default)]
    pub offset: f64,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.mixture()?;
        let s = &self.schedule;
        if !(s.h > 0.0 && s.h.is_finite()) {
            bail!("schedule.h must be positive");
        }
        if s.chains == 0 {
            bail!("schedule.chains must be at least 1");
        }
        if s.horizons.is_empty() || s.horizons.windows(2).any(|w| w[0] >= w[1]) {
            bail!("schedule.horizons must be a non-empty increasing list");
        }
        if s.record_stride == Some(0) {
            bail!("schedule.record_stride must be at least 1");
        }
        if let Some(b) = self.diagnostics.bandwidth {
            if !(b > 0.0 && b.is_finite()) {
                bail!("diagnostics.bandwidth must be positive");
            }
        }
        if self.init.m == 0 && self.init.file.is_none() {
            bail!("init.m must be at least 1");
        }
        if let Some(axis) = self.diagnostics.projection_axes.iter().find(|&&a| a >= m.dim()) {
            bail!("diagnostics.projection_axes: axis {axis} out of range for dimension {}", m.dim());
        }
        match &self.score {
            ScoreSpec::Biased { weights } if weights.len() != m.k() => {
                bail!("score.weights has {} entries for {} components", weights.len(), m.k())
            }
            ScoreSpec::Trained { train } => {
                train.train_config(self.seed)?;
            }
            _ => {}
        }
        for c in &self.check {
            if c.max.is_none() && c.min.is_none() && c.at_most.is_none() {
                bail!("check on {} sets none of max, min, at_most", c.metric);
            }
        }
        Ok(())
    }

    pub fn mixture(&self) -> Result<Mixture> {
        let comps = &self.mixture.components;
        if comps.is_empty() {
            bail!("mixture.components is empty");
        }
        let mut built = Vec::with_capacity(comps.len());
        for (i, c) in comps.iter().enumerate() {
            let cov = match (&c.variance, &c.diag, &c.covariance) {
                (None, None, None) => Covariance::Iso(1.0),
                (Some(v), None, None) => Covariance::Iso(*v),
                (None, Some(d), None) => Covariance::Diag(d.clone()),
                (None, None, Some(rows)) => {
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        bail!("mixture.components[{i}].covariance must be square");
                    }
                    Covariance::Full(lmclab::mixture::DMatrix::from_fn(n, n, |a, b| rows[a][b]))
                }
                _ => bail!("mixture.components[{i}]: give at most one of variance, diag, covariance"),
            };
            built.push(Component::gaussian(c.mean.clone(), cov).with_context(|| format!("mixture.components[{i}]"))?);
        }
        let weights = comps.iter().map(|c| c.weight).collect();
        Ok(Mixture::normalized(built, weights).context("mixture")?)
    }
}
