use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::mixture::Mixture;
use crate::rng::{Domain, Stream};

use super::mlp::{Loss, Mlp};
use super::{l2_error, L2Error, ScoreModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    fn lr(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: Loss,
    pub optimizer: Optimizer,
    pub steps: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub seed: u64,
    /// Reshuffle a fixed dataset at every epoch instead of cycling through it
    /// in order.
    pub shuffle: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.optimizer.lr() > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument("batch size and hidden width must be at least 1".into()));
        }
        if let Loss::Denoising { sigma } = self.loss {
            if !(sigma > 0.0) {
                return Err(Error::InvalidArgument("denoising sigma must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Where training batches come from.
#[derive(Debug, Clone, Copy)]
pub enum TrainData<'a> {
    /// A fixed dataset visited in contiguous batches.
    Fixed(&'a [Vec<f64>]),
    /// Fresh ground-truth draws at every step.
    Fresh(&'a Mixture),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss at every step, before that step's update.
    pub loss_curve: Vec<f64>,
    pub wall_clock: Duration,
    pub loss: Loss,
    pub note: Option<String>,
    /// Filled by [`TrainReport::attach_l2_error`] when the target law is known.
    pub l2_error: Option<L2Error>,
}

impl TrainReport {
    /// Measures the trained network against the exact score of `m`.
    pub fn attach_l2_error(&mut self, net: &Mlp, m: &Mixture, n_mc: usize, stream: &mut Stream) -> Result<L2Error> {
        let e = l2_error(&ScoreModel::Mlp(net.clone()), m, n_mc, stream)?;
        self.l2_error = Some(e);
        Ok(e)
    }

    pub fn loss_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, l) in self.loss_curve.iter().enumerate() {
            s.push_str(&format!("{i},{l:.16e}\n"));
        }
        s
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Trains a fresh network. Runs on the calling thread; the result is a pure
/// function of `(data, cfg)`.
pub fn train(data: TrainData<'_>, cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    cfg.validate()?;
    let dim = match data {
        TrainData::Fixed(d) => {
            let first = d.first().ok_or_else(|| Error::InvalidArgument("training data is empty".into()))?;
            if let Some(bad) = d.iter().find(|x| x.len() != first.len()) {
                return Err(Error::DimensionMismatch { expected: first.len(), got: bad.len() });
            }
            first.len()
        }
        TrainData::Fresh(m) => m.dim(),
    };
    let start = Instant::now();
    let mut net = Mlp::init(dim, cfg.hidden, cfg.seed);
    let mut params = net.params();
    let mut grad = vec![0.0; params.len()];
    let mut adam = AdamState { m: vec![0.0; params.len()], v: vec![0.0; params.len()], t: 0 };
    let mut batch_stream = Stream::new(cfg.seed, Domain::Training, 1);
    let mut noise_stream = Stream::new(cfg.seed, Domain::Training, 2);
    let mut curve = Vec::with_capacity(cfg.steps);

    let mut order: Vec<usize> = match data {
        TrainData::Fixed(d) => (0..d.len()).collect(),
        TrainData::Fresh(_) => Vec::new(),
    };
    if cfg.shuffle {
        shuffle(&mut order, &mut batch_stream);
    }
    let mut cursor = 0usize;
    let mut fresh: Vec<Vec<f64>> = Vec::new();
    let mut noise: Vec<Vec<f64>> = vec![vec![0.0; dim]; cfg.batch_size];

    for step in 0..cfg.steps {
        let batch: Vec<&[f64]> = match data {
            TrainData::Fixed(d) => {
                let b = cfg.batch_size.min(d.len());
                let mut idx = Vec::with_capacity(b);
                for _ in 0..b {
                    if cursor == order.len() {
                        cursor = 0;
                        if cfg.shuffle {
                            shuffle(&mut order, &mut batch_stream);
                        }
                    }
                    idx.push(order[cursor]);
                    cursor += 1;
                }
                idx.into_iter().map(|i| d[i].as_slice()).collect()
            }
            TrainData::Fresh(m) => {
                fresh = m.sample_ground_truth(cfg.batch_size, &mut batch_stream)?;
                fresh.iter().map(|x| x.as_slice()).collect()
            }
        };
        if let Loss::Denoising { .. } = cfg.loss {
            for z in noise.iter_mut().take(batch.len()) {
                noise_stream.fill_normal(z);
            }
        }
        net.set_params(&params);
        let l = net.loss_and_grad(cfg.loss, &batch, &noise, &mut grad);
        if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { step, loss: l });
        }
        curve.push(l);
        apply(&cfg.optimizer, &mut params, &grad, &mut adam);
    }
    drop(fresh);
    net.set_params(&params);
    let note = match cfg.loss {
        Loss::Vanilla => None,
        Loss::Denoising { sigma } => Some(format!(
            "denoising objective: the network estimates the score of the data law convolved with N(0, {sigma:e}^2 I)"
        )),
    };
    Ok((net, TrainReport { loss_curve: curve, wall_clock: start.elapsed(), loss: cfg.loss, note, l2_error: None }))
}

/// Vanilla score matching on a fixed dataset.
pub fn train_vanilla(data: &[Vec<f64>], cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    if cfg.loss != Loss::Vanilla {
        return Err(Error::InvalidArgument("train_vanilla needs the vanilla loss".into()));
    }
    train(TrainData::Fixed(data), cfg)
}

/// Denoising score matching on a fixed dataset.
pub fn train_denoising(data: &[Vec<f64>], cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    if !matches!(cfg.loss, Loss::Denoising { .. }) {
        return Err(Error::InvalidArgument("train_denoising needs the denoising loss".into()));
    }
    train(TrainData::Fixed(data), cfg)
}

fn shuffle(v: &mut [usize], s: &mut Stream) {
    for i in (1..v.len()).rev() {
        let j = s.below(i + 1);
        v.swap(i, j);
    }
}

fn apply(opt: &Optimizer, p: &mut [f64], g: &[f64], st: &mut AdamState) {
    match *opt {
        Optimizer::Sgd { lr } => {
            for (pi, gi) in p.iter_mut().zip(g) {
                *pi -= lr * gi;
            }
        }
        Optimizer::Adam { lr, beta1, beta2, eps } => {
            st.t += 1;
            let c1 = 1.0 - beta1.powi(st.t);
            let c2 = 1.0 - beta2.powi(st.t);
            for i in 0..p.len() {
                st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g[i];
                st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g[i] * g[i];
                p[i] -= lr * (st.m[i] / c1) / ((st.v[i] / c2).sqrt() + eps);
            }
        }
    }
}
