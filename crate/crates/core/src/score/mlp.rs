//! One-hidden-layer tanh network `s(x) = W2 tanh(W1 x + b1) + b2` with
//! hand-written gradients for the vanilla and denoising score-matching
//! losses.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rng::{Domain, Stream};

/// `tanh` through a single `exp`, accurate to a few ulps.
#[inline]
pub fn tanh(z: f64) -> f64 {
    let e = (-2.0 * z.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub dim: usize,
    pub hidden: usize,
    /// `hidden x dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `dim x hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub seed: u64,
}

/// Score-matching objectives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    /// `½‖s(x)‖² + div s(x)`.
    Vanilla,
    /// `½‖s(x + σξ) + ξ/σ‖²`, `ξ ~ N(0, I)`.
    Denoising { sigma: f64 },
}

impl Loss {
    pub fn tag(&self) -> String {
        match self {
            Loss::Vanilla => "vanilla".into(),
            Loss::Denoising { sigma } => format!("denoising(sigma={sigma:e})"),
        }
    }
}

impl Mlp {
    /// Every parameter uniform on `±1/√fan_in` of its layer.
    pub fn init(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut s = Stream::new(seed, Domain::Training, 0);
        let mut uni = |bound: f64, n: usize| -> Vec<f64> { (0..n).map(|_| bound * (2.0 * s.uniform() - 1.0)).collect() };
        let r1 = 1.0 / (dim as f64).sqrt();
        let r2 = 1.0 / (hidden as f64).sqrt();
        let w1 = uni(r1, hidden * dim);
        let b1 = uni(r1, hidden);
        let w2 = uni(r2, dim * hidden);
        let b2 = uni(r2, dim);
        Self { dim, hidden, w1, b1, w2, b2, seed }
    }

    /// `W2 = 0`, `b2 = c`: the constant field `c`.
    pub fn constant(c: Vec<f64>, hidden: usize) -> Self {
        let dim = c.len();
        Self { dim, hidden, w1: vec![0.0; hidden * dim], b1: vec![0.0; hidden], w2: vec![0.0; dim * hidden], b2: c, seed: 0 }
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameters flattened as `[W1, b1, W2, b2]`.
    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    /// Writes `s(x)` into `out`, using `act` (length `hidden`) as scratch.
    pub fn eval_into(&self, x: &[f64], act: &mut [f64], out: &mut [f64]) {
        let d = self.dim;
        for (k, a) in act.iter_mut().enumerate() {
            let row = &self.w1[k * d..(k + 1) * d];
            let z = self.b1[k] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            *a = tanh(z);
        }
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.w2[j * self.hidden..(j + 1) * self.hidden];
            *o = self.b2[j] + row.iter().zip(act.iter()).map(|(w, a)| w * a).sum::<f64>();
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.hidden];
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut act, &mut out);
        out
    }

    /// `c_k = Σ_j W2[j,k] W1[k,j]`, so that `div s(x) = Σ_k tanh'(z_k) c_k`.
    fn divergence_weights(&self) -> Vec<f64> {
        let (d, h) = (self.dim, self.hidden);
        (0..h).map(|k| (0..d).map(|j| self.w2[j * h + k] * self.w1[k * d + j]).sum()).collect()
    }

    pub fn divergence(&self, x: &[f64]) -> f64 {
        let c = self.divergence_weights();
        let d = self.dim;
        (0..self.hidden)
            .map(|k| {
                let z = self.b1[k] + (0..d).map(|j| self.w1[k * d + j] * x[j]).sum::<f64>();
                let a = tanh(z);
                (1.0 - a * a) * c[k]
            })
            .sum()
    }

    /// Mean loss over `batch` and its gradient with respect to
    /// [`Mlp::params`], accumulated in sample order. `noise` supplies one
    /// standard-normal vector per sample for the denoising loss.
    pub fn loss_and_grad(&self, loss: Loss, batch: &[&[f64]], noise: &[Vec<f64>], grad: &mut [f64]) -> f64 {
        let (d, h) = (self.dim, self.hidden);
        let vanilla = loss == Loss::Vanilla;
        let c = if vanilla { self.divergence_weights() } else { vec![0.0; h] };
        // Work with W2ᵀ so that every per-unit slice is contiguous.
        let mut w2t = vec![0.0; h * d];
        for j in 0..d {
            for k in 0..h {
                w2t[k * d + j] = self.w2[j * h + k];
            }
        }
        let mut gw1 = vec![0.0; h * d];
        let mut gb1 = vec![0.0; h];
        let mut gw2t = vec![0.0; h * d];
        let mut gb2 = vec![0.0; d];
        let mut act = vec![0.0; h];
        let mut s = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut total = 0.0;
        for (n, x) in batch.iter().enumerate() {
            match loss {
                Loss::Vanilla => y.copy_from_slice(x),
                Loss::Denoising { sigma } => {
                    for ((yt, xt), zt) in y.iter_mut().zip(x.iter()).zip(&noise[n]) {
                        *yt = xt + sigma * zt;
                    }
                }
            }
            s.copy_from_slice(&self.b2);
            for (k, a) in act.iter_mut().enumerate() {
                let w1k = &self.w1[k * d..(k + 1) * d];
                *a = tanh(self.b1[k] + w1k.iter().zip(&y).map(|(w, v)| w * v).sum::<f64>());
                for (st, w) in s.iter_mut().zip(&w2t[k * d..(k + 1) * d]) {
                    *st += w * *a;
                }
            }
            // s becomes the residual ∂L/∂s
            if let Loss::Denoising { sigma } = loss {
                for (st, zt) in s.iter_mut().zip(&noise[n]) {
                    *st += zt / sigma;
                }
            }
            let mut sample_loss = 0.5 * s.iter().map(|v| v * v).sum::<f64>();
            for (g, st) in gb2.iter_mut().zip(&s) {
                *g += st;
            }
            for k in 0..h {
                let a = act[k];
                let dt = 1.0 - a * a;
                let w1k = &self.w1[k * d..(k + 1) * d];
                let w2k = &w2t[k * d..(k + 1) * d];
                let gw1k = &mut gw1[k * d..(k + 1) * d];
                let gw2k = &mut gw2t[k * d..(k + 1) * d];
                let back: f64 = s.iter().zip(w2k).map(|(r, w)| r * w).sum();
                let mut g = back * dt;
                for (gw, r) in gw2k.iter_mut().zip(&s) {
                    *gw += r * a;
                }
                if vanilla {
                    sample_loss += dt * c[k];
                    g -= 2.0 * a * dt * c[k];
                    for (gw, w) in gw2k.iter_mut().zip(w1k) {
                        *gw += dt * w;
                    }
                    for (gw, w) in gw1k.iter_mut().zip(w2k) {
                        *gw += dt * w;
                    }
                }
                gb1[k] += g;
                for (gw, yt) in gw1k.iter_mut().zip(&y) {
                    *gw += g * yt;
                }
            }
            total += sample_loss;
        }
        let inv = 1.0 / batch.len() as f64;
        let (g1, rest) = grad.split_at_mut(h * d);
        let (g2, rest) = rest.split_at_mut(h);
        let (g3, g4) = rest.split_at_mut(d * h);
        for (o, v) in g1.iter_mut().zip(&gw1) {
            *o = v * inv;
        }
        for (o, v) in g2.iter_mut().zip(&gb1) {
            *o = v * inv;
        }
        for j in 0..d {
            for k in 0..h {
                g3[j * h + k] = gw2t[k * d + j] * inv;
            }
        }
        for (o, v) in g4.iter_mut().zip(&gb2) {
            *o = v * inv;
        }
        total * inv
    }

    /// Mean loss without gradients.
    pub fn loss(&self, loss: Loss, batch: &[&[f64]], noise: &[Vec<f64>]) -> f64 {
        let mut g = vec![0.0; self.n_params()];
        self.loss_and_grad(loss, batch, noise, &mut g)
    }

    pub fn to_text(&self, loss: Loss) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# lmclab-mlp v1");
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(s, "hidden {}", self.hidden);
        let _ = writeln!(s, "activation tanh");
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "loss {}", loss.tag());
        for (name, v) in [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)] {
            let _ = write!(s, "{name}");
            for x in v.iter() {
                let _ = write!(s, " {x:.17e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("weight file: {m}"));
        let mut dim = None;
        let mut hidden = None;
        let mut seed = 0;
        let mut arrays: [Option<Vec<f64>>; 4] = [None, None, None, None];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let mut it = line.split_whitespace();
            let key = it.next().unwrap();
            let rest: Vec<&str> = it.collect();
            let one = || rest.first().copied().ok_or_else(|| bad(&format!("missing value for {key}")));
            match key {
                "dim" => dim = Some(one()?.parse::<usize>().map_err(|e| bad(&e.to_string()))?),
                "hidden" => hidden = Some(one()?.parse::<usize>().map_err(|e| bad(&e.to_string()))?),
                "seed" => seed = one()?.parse::<u64>().map_err(|e| bad(&e.to_string()))?,
                "activation" => {
                    if one()? != "tanh" {
                        return Err(bad("only tanh activation is supported"));
                    }
                }
                "loss" => {}
                "w1" | "b1" | "w2" | "b2" => {
                    let v = rest.iter().map(|t| t.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>();
                    let i = ["w1", "b1", "w2", "b2"].iter().position(|k| *k == key).unwrap();
                    arrays[i] = Some(v.map_err(|e| bad(&e.to_string()))?);
                }
                other => return Err(bad(&format!("unknown key {other}"))),
            }
        }
        let (dim, hidden) = (dim.ok_or_else(|| bad("missing dim"))?, hidden.ok_or_else(|| bad("missing hidden"))?);
        let [w1, b1, w2, b2] = arrays;
        let (w1, b1, w2, b2) = (
            w1.ok_or_else(|| bad("missing w1"))?,
            b1.ok_or_else(|| bad("missing b1"))?,
            w2.ok_or_else(|| bad("missing w2"))?,
            b2.ok_or_else(|| bad("missing b2"))?,
        );
        if w1.len() != hidden * dim || b1.len() != hidden || w2.len() != dim * hidden || b2.len() != dim {
            return Err(bad("array lengths do not match dim and hidden"));
        }
        Ok(Self { dim, hidden, w1, b1, w2, b2, seed })
    }
}
