//! Built-in configurations for the two reference experiments.

use anyhow::{bail, Result};
use clap::ValueEnum;

use crate::config::{
    CheckSpec, ComponentSpec, DiagnosticsSpec, ExperimentConfig, InitModeSpec, InitSpec, LossSpec, LsiSpec, MixtureSpec,
    OptimizerSpec, ScheduleSpec, ScoreSpec, TrainSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig1,
    Fig2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreChoice {
    Exact,
    Biased,
    Trained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PresetOptions {
    pub score: Option<ScoreChoice>,
    pub horizon: Option<usize>,
    pub full: bool,
}

pub fn preset(fig: Figure, opts: PresetOptions) -> Result<ExperimentConfig> {
    let mut cfg = match fig {
        Figure::Fig1 => fig1(opts),
        Figure::Fig2 => fig2(opts),
    };
    if let Some(h) = opts.horizon {
        cfg.schedule.horizons = vec![h];
        cfg.check.retain(|c| c.metric.ends_with(&format!("@{h}")) && c.at_most.is_none());
    }
    if opts.score == Some(ScoreChoice::Biased) && fig == Figure::Fig2 {
        cfg.score = ScoreSpec::Biased { weights: vec![1.0 / 3.0, 2.0 / 3.0] };
    }
    if let Err(e) = cfg.validate() {
        bail!("preset {fig:?}: {e}");
    }
    Ok(cfg)
}

/// ½N(-3, 1) + ½N(3, 1), 40 data points, step 0.01, horizons 0 / 200 / 20000.
fn fig1(opts: PresetOptions) -> ExperimentConfig {
    let comp = |mean: f64| ComponentSpec { weight: 0.5, mean: vec![mean], variance: Some(1.0), diag: None, covariance: None };
    let score = match opts.score.unwrap_or(ScoreChoice::Trained) {
        ScoreChoice::Exact => ScoreSpec::Exact,
        ScoreChoice::Biased => ScoreSpec::Biased { weights: vec![0.8, 0.2] },
        ScoreChoice::Trained => ScoreSpec::Trained {
            train: TrainSpec {
                loss: LossSpec::Vanilla,
                sigma: None,
                optimizer: OptimizerSpec::Sgd,
                lr: if opts.full { 1e-5 } else { 2e-3 },
                steps: if opts.full { 300_000 } else { 20_000 },
                batch_size: 1,
                hidden: if opts.full { 2048 } else { 256 },
                n_train: 0,
                shuffle: false,
                l2_samples: 10_000,
            },
        },
    };
    let at_most = |other: &str, offset: f64| CheckSpec {
        metric: "tv_truth@200".into(),
        max: None,
        min: None,
        at_most: Some(other.into()),
        offset,
    };
    let check = match opts.score.unwrap_or(ScoreChoice::Trained) {
        ScoreChoice::Exact => vec![at_most("tv_truth@0", 0.0)],
        ScoreChoice::Biased => vec![at_most("tv_truth@0", 0.0), at_most("tv_truth@20000", -0.05)],
        ScoreChoice::Trained => vec![at_most("tv_truth@0", 0.0), at_most("tv_truth@20000", 0.0)],
    };
    ExperimentConfig {
        seed: 1,
        out: None,
        mixture: MixtureSpec { components: vec![comp(-3.0), comp(3.0)] },
        score,
        init: InitSpec { m: 40, mode: Some(InitModeSpec::Resample), file: None },
        schedule: ScheduleSpec { h: 0.01, horizons: vec![0, 200, 20_000], chains: 1000, record_stride: None },
        diagnostics: DiagnosticsSpec { bandwidth: Some(0.35), ..DiagnosticsSpec::default() },
        lsi: LsiSpec::default(),
        check,
    }
}

/// (2/3)N(-6e₁, 1.5I) + (1/3)N(6e₁, 1.5I) in d = 32, 15 data points and
/// chains, step 0.001, horizons 300 / 12000 / 120000.
fn fig2(opts: PresetOptions) -> ExperimentConfig {
    let d = 32;
    let comp = |weight: f64, sign: f64| {
        let mut mean = vec![0.0; d];
        mean[0] = 6.0 * sign;
        ComponentSpec { weight, mean, variance: Some(1.5), diag: None, covariance: None }
    };
    let score = match opts.score.unwrap_or(ScoreChoice::Trained) {
        ScoreChoice::Exact => ScoreSpec::Exact,
        ScoreChoice::Biased => ScoreSpec::Exact,
        ScoreChoice::Trained => ScoreSpec::Trained {
            train: TrainSpec {
                loss: LossSpec::Denoising,
                sigma: Some(0.5),
                optimizer: OptimizerSpec::Adam,
                lr: 1e-3,
                steps: if opts.full { 200 * 300 } else { 200 * 30 },
                batch_size: 256,
                hidden: if opts.full { 2048 } else { 128 },
                n_train: 0,
                shuffle: false,
                l2_samples: 10_000,
            },
        },
    };
    ExperimentConfig {
        seed: 1,
        out: None,
        mixture: MixtureSpec { components: vec![comp(2.0 / 3.0, -1.0), comp(1.0 / 3.0, 1.0)] },
        score,
        init: InitSpec { m: 15, mode: Some(InitModeSpec::PerSample), file: None },
        schedule: ScheduleSpec { h: 0.001, horizons: vec![300, 12_000, 120_000], chains: 15, record_stride: Some(100) },
        diagnostics: DiagnosticsSpec { projection_axes: vec![0, 1], ..DiagnosticsSpec::default() },
        lsi: LsiSpec::default(),
        check: vec![CheckSpec { metric: "transitions@12000".into(), max: Some(0.0), min: None, at_most: None, offset: 0.0 }],
    }
}
