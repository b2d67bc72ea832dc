use crate::error::{Error, Result};
use crate::mixture::Mixture;

use super::graph::build_graph_log;
use super::overlap::OverlapMatrix;

/// Constants entering the δ recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionInputs {
    pub k: usize,
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Mode-distance scale: at least every pairwise mode distance and `10 D`.
    pub l: f64,
    pub p_star: f64,
}

impl RecursionInputs {
    pub fn from_mixture(m: &Mixture) -> Self {
        let s = m.smoothness_summary();
        Self {
            k: s.k,
            dim: s.dim,
            alpha: s.alpha,
            beta: s.beta,
            l: m.max_mode_distance().max(10.0 * s.d_radius),
            p_star: s.p_star,
        }
    }
}

/// `ln δ'` for separation threshold `δ'` at accuracy `eps`, failure
/// probability `tau`, and graph threshold `exp(ln_delta)`:
///
/// `δ' = δ^{3/2} α^{3/2} p_*^{5/2} ε² τ / (10⁵ K⁵ d (βL)³ ln^{3/2}(1/p_*)
///       ln^{3/2}(β² L ε⁻¹ ln(1/τ) / α) ln^{2.51}(16 d (βL)² / (ε τ δ α)))`.
///
/// Evaluated in log space; `δ` underflows long before the recursion ends.
pub fn ln_delta_prime(c: &RecursionInputs, eps: f64, tau: f64, ln_delta: f64) -> f64 {
    let (k, d) = (c.k as f64, c.dim as f64);
    let bl = c.beta * c.l;
    let ln_num = 1.5 * ln_delta + 1.5 * c.alpha.ln() + 2.5 * c.p_star.ln() + 2.0 * eps.ln() + tau.ln();
    let ln_den = 1e5f64.ln()
        + 5.0 * k.ln()
        + d.ln()
        + 3.0 * bl.ln()
        + 1.5 * (1.0 / c.p_star).ln().ln()
        + 1.5 * (c.beta * c.beta * c.l / eps * (1.0 / tau).ln() / c.alpha).ln().ln()
        + 2.51 * ((16.0 * d * bl * bl / (eps * tau * c.alpha)).ln() - ln_delta).ln();
    ln_num - ln_den
}

/// `C_{p_*, K} = 4 K² (1 + ln(1/p_*)) / p_*`.
pub fn cluster_constant(p_star: f64, k: usize) -> f64 {
    let k = k as f64;
    4.0 * k * k * (1.0 + (1.0 / p_star).ln()) / p_star
}

/// `2 C_{p_*,K} / (δ α) (ln(β² L/α) + ln ln(1/τ) + 2 ln(1/ε))`.
pub fn mixing_time(c: &RecursionInputs, eps: f64, tau: f64, ln_delta: f64) -> f64 {
    let tail = (c.beta * c.beta * c.l / c.alpha).ln() + (1.0 / tau).ln().ln() + 2.0 * (1.0 / eps).ln();
    2.0 * cluster_constant(c.p_star, c.k) / c.alpha * (-ln_delta).exp() * tail
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MultiscaleOptions {
    pub threshold_small_weights: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Every overlap across parts is at most the next scale's threshold.
    Separated,
    /// The graph at the last scale is connected.
    Connected,
    /// Neither condition held by the last scale.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleStep {
    pub scale: usize,
    pub ln_delta: f64,
    pub components: Vec<Vec<usize>>,
    /// Largest overlap between components in different parts (0 if none).
    pub max_cross_overlap: f64,
    pub separated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTrace {
    /// `p_{s,*}` for each round.
    pub thresholds: Vec<f64>,
    /// `ln δ_{s,K}` for each round.
    pub ln_delta_last: Vec<f64>,
    pub kept: Vec<usize>,
    pub discarded: Vec<usize>,
    pub kept_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiscalePlan {
    pub inputs: RecursionInputs,
    pub eps_tilde: f64,
    pub tau_tilde: f64,
    /// `δ_0 = 1 > δ_1 > ...` (entries may underflow to 0; see `ln_delta_sequence`).
    pub delta_sequence: Vec<f64>,
    pub ln_delta_sequence: Vec<f64>,
    pub scales: Vec<ScaleStep>,
    pub terminal_scale: usize,
    pub termination: Termination,
    pub partition: Vec<Vec<usize>>,
    /// `T_s` at the terminal scale.
    pub mixing_time: f64,
    pub threshold: Option<ThresholdTrace>,
}

fn ln_delta_sequence(c: &RecursionInputs, eps: f64, tau: f64, len: usize) -> Vec<f64> {
    let mut seq = vec![0.0];
    while seq.len() < len {
        let last = *seq.last().unwrap();
        seq.push(ln_delta_prime(c, eps, tau, last));
    }
    seq
}

/// Small-weight thresholding: starting from `p_{0,*} = 1/K`, components with
/// weight below `p_{s,*}` are set aside until the largest of them falls
/// below `δ_{s,K}/8`, where `δ_{s,K}` is the last δ of the recursion run
/// with `p_* = p_{s,*}`.
pub fn threshold_recursion(m: &Mixture, eps_tv: f64) -> ThresholdTrace {
    let k = m.k();
    let p = m.weights();
    let base = RecursionInputs::from_mixture(m);
    let eps_t = eps_tv / (9.0 * k as f64);
    let mut thresholds = vec![1.0 / k as f64];
    let mut ln_last = Vec::new();
    let mut s = 0;
    loop {
        let ps = thresholds[s];
        let c = RecursionInputs { p_star: ps, ..base };
        let tau_t = ps * eps_tv / (9.0 * k as f64);
        let ln_dk = if k > 1 { *ln_delta_sequence(&c, eps_t, tau_t, k + 1).last().unwrap() } else { 0.0 };
        ln_last.push(ln_dk);
        let max_small = p.iter().filter(|&&w| w < ps).cloned().fold(0.0, f64::max);
        let next = ln_dk.exp() / 8.0;
        if max_small == 0.0 || max_small < next || s + 2 > k {
            break;
        }
        thresholds.push(next);
        s += 1;
    }
    let ps = *thresholds.last().unwrap();
    let kept: Vec<usize> = (0..k).filter(|&i| p[i] >= ps).collect();
    let discarded: Vec<usize> = (0..k).filter(|&i| p[i] < ps).collect();
    let total: f64 = kept.iter().map(|&i| p[i]).sum();
    ThresholdTrace {
        kept_weights: kept.iter().map(|&i| p[i] / total).collect(),
        thresholds,
        ln_delta_last: ln_last,
        kept,
        discarded,
    }
}

/// Walks the δ scales `s = 0, 1, ...`, building the overlap graph at `δ_s`
/// and stopping at the first scale where every overlap across its connected
/// components is at most `δ_{s+1}`, or where the graph is connected.
pub fn multiscale_plan(
    m: &Mixture,
    overlaps: &OverlapMatrix,
    eps_tv: f64,
    tau: f64,
    options: MultiscaleOptions,
) -> Result<MultiscalePlan> {
    if !(eps_tv > 0.0 && eps_tv < 0.5 && tau > 0.0 && tau < 0.5) {
        return Err(Error::InvalidArgument(format!("eps_tv = {eps_tv} and tau = {tau} must lie in (0, 1/2)")));
    }
    if overlaps.k() != m.k() {
        return Err(Error::DimensionMismatch { expected: m.k(), got: overlaps.k() });
    }
    let threshold = options.threshold_small_weights.then(|| threshold_recursion(m, eps_tv));
    let active: Vec<usize> = match &threshold {
        Some(t) => t.kept.clone(),
        None => (0..m.k()).collect(),
    };
    let k = m.k();
    let mut inputs = RecursionInputs::from_mixture(m);
    if let Some(t) = &threshold {
        inputs.p_star = *t.thresholds.last().unwrap();
    }
    let eps_t = eps_tv / (9.0 * k as f64);
    let tau_t = inputs.p_star * eps_tv / (9.0 * k as f64);

    let sub = restrict(overlaps, &active);
    let relabel = |parts: Vec<Vec<usize>>| -> Vec<Vec<usize>> {
        parts.into_iter().map(|c| c.into_iter().map(|i| active[i]).collect()).collect()
    };

    if active.len() == 1 || k == 1 {
        let partition = relabel(vec![(0..active.len()).collect()]);
        return Ok(MultiscalePlan {
            inputs,
            eps_tilde: eps_t,
            tau_tilde: tau_t,
            delta_sequence: vec![1.0],
            ln_delta_sequence: vec![0.0],
            scales: vec![ScaleStep {
                scale: 0,
                ln_delta: 0.0,
                components: partition.clone(),
                max_cross_overlap: 0.0,
                separated: true,
            }],
            terminal_scale: 0,
            termination: Termination::Separated,
            partition,
            mixing_time: mixing_time(&inputs, eps_t, tau_t, 0.0),
            threshold,
        });
    }

    let ln_seq = ln_delta_sequence(&inputs, eps_t, tau_t, k + 1);
    let mut scales = Vec::new();
    let mut terminal = None;
    for s in 0..k {
        let g = build_graph_log(&sub, ln_seq[s], ln_seq[s].exp());
        let mut max_cross: f64 = 0.0;
        for (a, ca) in g.components.iter().enumerate() {
            for cb in &g.components[a + 1..] {
                for &i in ca {
                    for &j in cb {
                        max_cross = max_cross.max(sub.get(i, j));
                    }
                }
            }
        }
        let separated = g.components.len() == 1 || max_cross.ln() <= ln_seq[s + 1];
        scales.push(ScaleStep {
            scale: s,
            ln_delta: ln_seq[s],
            components: relabel(g.components.clone()),
            max_cross_overlap: max_cross,
            separated,
        });
        if s + 2 <= k && separated && g.components.len() > 1 {
            terminal = Some((s, Termination::Separated));
            break;
        }
        if g.components.len() == 1 {
            terminal = Some((s, Termination::Connected));
            break;
        }
    }
    let (terminal_scale, termination) = terminal.unwrap_or((k - 1, Termination::Exhausted));
    Ok(MultiscalePlan {
        inputs,
        eps_tilde: eps_t,
        tau_tilde: tau_t,
        delta_sequence: ln_seq.iter().map(|v| v.exp()).collect(),
        partition: scales[terminal_scale].components.clone(),
        mixing_time: mixing_time(&inputs, eps_t, tau_t, ln_seq[terminal_scale]),
        ln_delta_sequence: ln_seq,
        scales,
        terminal_scale,
        termination,
        threshold,
    })
}

fn restrict(o: &OverlapMatrix, idx: &[usize]) -> OverlapMatrix {
    let rows = idx.iter().map(|&i| idx.iter().map(|&j| o.get(i, j)).collect()).collect();
    OverlapMatrix::from_values(rows).expect("submatrix of a valid overlap matrix")
}

/// Kept and discarded components for a fixed weight threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSplit {
    pub kept: Vec<usize>,
    pub discarded: Vec<usize>,
    pub kept_weights: Vec<f64>,
}

/// `I' = {i : p_i >= threshold}` and its complement.
pub fn threshold_small_weights(m: &Mixture, threshold: f64) -> Result<WeightSplit> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside (0, 1)")));
    }
    let p = m.weights();
    let kept: Vec<usize> = (0..m.k()).filter(|&i| p[i] >= threshold).collect();
    if kept.is_empty() {
        return Err(Error::NoComponentsKept {
            threshold,
            max_weight: p.iter().cloned().fold(0.0, f64::max),
        });
    }
    let total: f64 = kept.iter().map(|&i| p[i]).sum();
    Ok(WeightSplit {
        kept_weights: kept.iter().map(|&i| p[i] / total).collect(),
        discarded: (0..m.k()).filter(|&i| p[i] < threshold).collect(),
        kept,
    })
}
