//! Langevin Monte Carlo `X ← X + h s(X) + √(2h) ξ` with data-based
//! initialization, ensembles, monitoring, and a step-size probe.

use rayon::prelude::*;

use crate::diagnostics::{default_grid, project, sample_tv_1d, TvReport};
use crate::error::{Error, Result};
use crate::mixture::Mixture;
use crate::rng::{Domain, Stream};
use crate::score::{BadSetConfig, BadSetProbe, ScoreModel};

/// Chains whose state norm exceeds this are frozen and flagged.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// Responsibility a chain needs before it counts as having entered a new
/// mode.
pub const MODE_SWITCH_CONFIDENCE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub h: f64,
    pub n_steps: usize,
    pub record_stride: usize,
}

impl Schedule {
    pub fn new(h: f64, n_steps: usize, record_stride: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
        }
        if record_stride == 0 {
            return Err(Error::InvalidArgument("record stride must be at least 1".into()));
        }
        Ok(Self { h, n_steps, record_stride })
    }

    /// Total continuous time `h · n_steps`.
    pub fn horizon(&self) -> f64 {
        self.h * self.n_steps as f64
    }
}

/// Writes `x + h s + √(2h) ξ` into `out`.
#[inline]
pub fn lmc_update(x: &[f64], h: f64, s: &[f64], noise: &[f64], out: &mut [f64]) {
    let c = (2.0 * h).sqrt();
    for (((o, xi), si), zi) in out.iter_mut().zip(x).zip(s).zip(noise) {
        *o = xi + h * si + c * zi;
    }
}

/// One LMC step from `x` with the caller's standard-normal `noise`.
pub fn lmc_step(x: &[f64], h: f64, model: &ScoreModel, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: noise.len() });
    }
    let s = model.evaluate(x)?;
    let mut out = vec![0.0; x.len()];
    lmc_update(x, h, &s, noise, &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("chain state"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitProvenance {
    GroundTruth { seed: u64 },
    External { source: String },
}

/// The set `U_sample` chains start from.
#[derive(Debug, Clone, PartialEq)]
pub struct InitSet {
    pub points: Vec<Vec<f64>>,
    pub provenance: InitProvenance,
}

impl InitSet {
    pub fn external(points: Vec<Vec<f64>>, source: &str) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::InvalidArgument("init set is empty".into()))?;
        let d = first.len();
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: p.len() });
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("init point"));
        }
        Ok(Self { points, provenance: InitProvenance::External { source: source.into() } })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Number of init points assigned to each component.
    pub fn cluster_counts(&self, m: &Mixture) -> Vec<usize> {
        let mut c = vec![0; m.k()];
        for p in &self.points {
            c[m.i_max_all_unchecked(p)] += 1;
        }
        c
    }
}

/// `M` ground-truth draws from the stream keyed by `(seed, GroundTruth, 0)`.
pub fn data_based_init(m: &Mixture, n: usize, seed: u64) -> Result<InitSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("init set needs M >= 1".into()));
    }
    let points = m.sample_ground_truth(n, &mut Stream::new(seed, Domain::GroundTruth, 0))?;
    Ok(InitSet { points, provenance: InitProvenance::GroundTruth { seed } })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Uniform with replacement from the init set.
    Resample,
    /// Chain `i` starts at point `i mod M`.
    PerSample,
}

impl InitMode {
    pub fn tag(&self) -> &'static str {
        match self {
            InitMode::Resample => "resample",
            InitMode::PerSample => "per-sample",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions<'a> {
    pub n_chains: usize,
    pub master_seed: u64,
    pub threads: usize,
    /// `None` picks per-sample when `n_chains` equals the init size and
    /// resampling otherwise.
    pub init_mode: Option<InitMode>,
    /// Mixture used to label modes and count cross-mode transitions.
    pub mixture: Option<&'a Mixture>,
    /// Requires `mixture`.
    pub bad_set: Option<BadSetConfig>,
    /// Also keep every `record_stride`-th state.
    pub record: bool,
    /// Steps at which every chain's state is kept, ascending, each at most
    /// `n_steps`.
    pub snapshots: Vec<usize>,
}

impl<'a> RunOptions<'a> {
    pub fn new(n_chains: usize, master_seed: u64) -> Self {
        Self { n_chains, master_seed, threads: 1, init_mode: None, mixture: None, bad_set: None, record: false, snapshots: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub chain: usize,
    pub init_index: usize,
    pub start: Vec<f64>,
    /// `(step, state)` at every multiple of the record stride.
    pub states: Vec<(usize, Vec<f64>)>,
    pub endpoint: Vec<f64>,
    /// States at [`RunOptions::snapshots`]; a frozen chain repeats its last
    /// state.
    pub snapshots: Vec<Vec<f64>>,
    /// Steps at which the pre-step state was in the bad set.
    pub bad_hits: Vec<usize>,
    /// Step at which the chain was frozen.
    pub diverged_at: Option<usize>,
    pub start_cluster: Option<usize>,
    pub end_cluster: Option<usize>,
    /// Steps at which the chain entered a different mode.
    pub transitions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub chains: Vec<Trajectory>,
    pub schedule: Schedule,
    pub model_tag: String,
    pub master_seed: u64,
    pub init_mode: InitMode,
    pub snapshot_steps: Vec<usize>,
}

impl Ensemble {
    pub fn endpoints(&self) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.endpoint.clone()).collect()
    }

    /// All chains' states at the `k`-th snapshot.
    pub fn snapshot(&self, k: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.snapshots[k].clone()).collect()
    }

    pub fn diverged(&self) -> usize {
        self.chains.iter().filter(|c| c.diverged_at.is_some()).count()
    }

    pub fn transitions(&self) -> usize {
        self.chains.iter().map(|c| c.transitions.len()).sum()
    }

    /// Cross-mode transitions up to and including `step`.
    pub fn transitions_until(&self, step: usize) -> usize {
        self.chains.iter().map(|c| c.transitions.partition_point(|&t| t <= step)).sum()
    }

    pub fn bad_hits(&self) -> usize {
        self.chains.iter().map(|c| c.bad_hits.len()).sum()
    }

    /// Fraction of visited (chain, step) pairs inside the bad set.
    pub fn bad_fraction(&self) -> f64 {
        let visits: usize = self.chains.iter().map(|c| c.diverged_at.unwrap_or(self.schedule.n_steps)).sum();
        if visits == 0 {
            0.0
        } else {
            self.bad_hits() as f64 / visits as f64
        }
    }

    /// `chain,x_0..x_{d-1},cluster,bad_hits,diverged` at the final step.
    pub fn endpoints_csv(&self) -> String {
        self.states_csv(self.schedule.n_steps, |c| (&c.endpoint, c.end_cluster))
    }

    /// Same columns at the `k`-th snapshot; clusters are labelled with `m`
    /// when given, and hits and divergence are counted up to that step.
    pub fn snapshot_csv(&self, k: usize, m: Option<&Mixture>) -> String {
        let step = self.snapshot_steps[k];
        self.states_csv(step, |c| (&c.snapshots[k], m.map(|m| m.i_max_all_unchecked(&c.snapshots[k]))))
    }

    fn states_csv<'a>(&'a self, step: usize, state: impl Fn(&'a Trajectory) -> (&'a Vec<f64>, Option<usize>)) -> String {
        let d = self.chains.first().map_or(0, |c| c.endpoint.len());
        let mut s = String::from("chain");
        for j in 0..d {
            s.push_str(&format!(",x_{j}"));
        }
        s.push_str(",cluster,bad_hits,diverged\n");
        for c in &self.chains {
            let (x, cluster) = state(c);
            s.push_str(&c.chain.to_string());
            for v in x {
                s.push_str(&format!(",{v:.16e}"));
            }
            let cl = cluster.map_or(String::new(), |k| k.to_string());
            let hits = c.bad_hits.partition_point(|&h| h < step);
            let diverged = c.diverged_at.is_some_and(|d| d <= step);
            s.push_str(&format!(",{cl},{hits},{}\n", u8::from(diverged)));
        }
        s
    }

    /// `chain,step,t,x_0..x_{d-1}` over the recorded states.
    pub fn trajectories_csv(&self) -> String {
        let d = self.chains.first().map_or(0, |c| c.endpoint.len());
        let mut s = String::from("chain,step,t");
        for j in 0..d {
            s.push_str(&format!(",x_{j}"));
        }
        s.push('\n');
        for c in &self.chains {
            for (step, x) in &c.states {
                s.push_str(&format!("{},{step},{:.16e}", c.chain, *step as f64 * self.schedule.h));
                for v in x {
                    s.push_str(&format!(",{v:.16e}"));
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Runs `n_chains` independent chains. Chain `i` draws its start from the
/// stream `(master_seed, ChainInit, i)` and its noise from
/// `(master_seed, ChainNoise, i)`, so results do not depend on `threads`.
pub fn run_ensemble(init: &InitSet, sched: &Schedule, model: &ScoreModel, opts: &RunOptions<'_>) -> Result<Ensemble> {
    if init.is_empty() {
        return Err(Error::InvalidArgument("init set is empty".into()));
    }
    if opts.n_chains == 0 {
        return Err(Error::InvalidArgument("need at least one chain".into()));
    }
    if init.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: init.dim() });
    }
    if let Some(m) = opts.mixture {
        if m.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), got: m.dim() });
        }
    }
    if opts.bad_set.is_some() && opts.mixture.is_none() {
        return Err(Error::InvalidArgument("bad-set monitoring needs the target mixture".into()));
    }
    if opts.snapshots.windows(2).any(|w| w[0] >= w[1]) || opts.snapshots.last().is_some_and(|&s| s > sched.n_steps) {
        return Err(Error::InvalidArgument("snapshot steps must be increasing and within the schedule".into()));
    }
    let mode = opts.init_mode.unwrap_or(if opts.n_chains == init.len() { InitMode::PerSample } else { InitMode::Resample });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let chains = pool.install(|| {
        (0..opts.n_chains).into_par_iter().map(|i| run_chain(i, init, mode, sched, model, opts)).collect::<Vec<_>>()
    });
    Ok(Ensemble { chains, schedule: *sched, model_tag: model.tag(), master_seed: opts.master_seed, init_mode: mode, snapshot_steps: opts.snapshots.clone() })
}

struct ModeTracker<'a> {
    m: &'a Mixture,
    terms: Vec<f64>,
    current: usize,
    transitions: Vec<usize>,
}

impl<'a> ModeTracker<'a> {
    fn new(m: &'a Mixture, x: &[f64]) -> Self {
        let current = m.i_max_all_unchecked(x);
        Self { m, terms: vec![0.0; m.k()], current, transitions: Vec::new() }
    }

    /// A switch is counted once the new mode's responsibility reaches
    /// [`MODE_SWITCH_CONFIDENCE`]; this ignores flicker at the boundary.
    fn observe(&mut self, step: usize, x: &[f64]) {
        self.m.component_log_terms(x, &mut self.terms);
        let (best, top) = self
            .terms
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v >= acc.1 { (i, v) } else { acc });
        if best == self.current {
            return;
        }
        let z: f64 = self.terms.iter().map(|v| (v - top).exp()).sum();
        if 1.0 / z >= MODE_SWITCH_CONFIDENCE {
            self.current = best;
            self.transitions.push(step);
        }
    }
}

fn run_chain(i: usize, init: &InitSet, mode: InitMode, sched: &Schedule, model: &ScoreModel, opts: &RunOptions<'_>) -> Trajectory {
    let d = init.dim();
    let init_index = match mode {
        InitMode::PerSample => i % init.len(),
        InitMode::Resample => Stream::new(opts.master_seed, Domain::ChainInit, i as u64).below(init.len()),
    };
    let start = init.points[init_index].clone();
    let mut x = start.clone();
    let mut next = vec![0.0; d];
    let mut s = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut ws = model.workspace();
    let mut noise = Stream::chain_noise(opts.master_seed, i as u64, 0, d);
    let mut tracker = opts.mixture.map(|m| ModeTracker::new(m, &x));
    let start_cluster = tracker.as_ref().map(|t| t.current);
    let mut probe = match (opts.mixture, &opts.bad_set) {
        (Some(m), Some(cfg)) => Some(BadSetProbe::new(m, cfg)),
        _ => None,
    };
    let mut states = Vec::new();
    let mut bad_hits = Vec::new();
    let mut diverged_at = None;
    let mut snapshots = Vec::with_capacity(opts.snapshots.len());
    let mut pending = opts.snapshots.iter().peekable();
    if opts.record {
        states.push((0, x.clone()));
    }
    if pending.next_if_eq(&&0).is_some() {
        snapshots.push(x.clone());
    }
    for step in 0..sched.n_steps {
        model.eval_into(&x, &mut ws, &mut s);
        if let Some(p) = probe.as_mut() {
            if p.contains(&x, &s) {
                bad_hits.push(step);
            }
        }
        noise.fill_normal(&mut xi);
        lmc_update(&x, sched.h, &s, &xi, &mut next);
        let norm_sq: f64 = next.iter().map(|v| v * v).sum();
        if !(norm_sq <= DIVERGENCE_NORM * DIVERGENCE_NORM) {
            diverged_at = Some(step + 1);
            break;
        }
        std::mem::swap(&mut x, &mut next);
        if let Some(t) = tracker.as_mut() {
            t.observe(step + 1, &x);
        }
        if opts.record && (step + 1) % sched.record_stride == 0 {
            states.push((step + 1, x.clone()));
        }
        if pending.next_if_eq(&&(step + 1)).is_some() {
            snapshots.push(x.clone());
        }
    }
    snapshots.resize(opts.snapshots.len(), x.clone());
    let end_cluster = opts.mixture.map(|m| m.i_max_all_unchecked(&x));
    Trajectory {
        chain: i,
        init_index,
        start,
        states,
        endpoint: x,
        snapshots,
        bad_hits,
        diverged_at,
        start_cluster,
        end_cluster,
        transitions: tracker.map_or_else(Vec::new, |t| t.transitions),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub horizon: f64,
    pub h_coarse: f64,
    pub h_fine: f64,
    pub direction: Vec<f64>,
    /// TV between endpoint projections at `h_coarse` and `h_fine`.
    pub tv: TvReport,
    /// TV between two independent `h_fine` ensembles: the estimator's noise
    /// level at this sample size.
    pub noise_floor: f64,
    pub coarse_endpoints: Vec<Vec<f64>>,
    pub fine_endpoints: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    pub n_chains: usize,
    pub master_seed: u64,
    pub threads: usize,
    pub direction: Vec<f64>,
}

/// Runs ensembles to time `horizon` at `h_coarse` and `h_coarse / refine`
/// and compares their endpoint laws along `direction`.
pub fn discretization_probe(
    init: &InitSet,
    model: &ScoreModel,
    m: &Mixture,
    horizon: f64,
    h_coarse: f64,
    refine: usize,
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    if refine < 2 {
        return Err(Error::InvalidArgument(format!("refine must be at least 2, got {refine}")));
    }
    if opts.direction.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: opts.direction.len() });
    }
    let h_fine = h_coarse / refine as f64;
    let steps = |h: f64| (horizon / h).round() as usize;
    let run = |h: f64, seed: u64| -> Result<Vec<Vec<f64>>> {
        let mut o = RunOptions::new(opts.n_chains, seed);
        o.threads = opts.threads;
        o.init_mode = Some(InitMode::Resample);
        Ok(run_ensemble(init, &Schedule::new(h, steps(h), 1)?, model, &o)?.endpoints())
    };
    let coarse = run(h_coarse, opts.master_seed)?;
    let fine = run(h_fine, opts.master_seed.wrapping_add(1))?;
    let fine2 = run(h_fine, opts.master_seed.wrapping_add(2))?;
    let grid = default_grid(m, &opts.direction)?;
    let (pc, pf, pf2) = (project(&coarse, &opts.direction), project(&fine, &opts.direction), project(&fine2, &opts.direction));
    let noise_floor = sample_tv_1d(&pf, &pf2, &grid)?.estimate;
    let mut tv = sample_tv_1d(&pc, &pf, &grid)?;
    tv.mc_error = Some(noise_floor);
    Ok(ProbeReport {
        horizon,
        h_coarse,
        h_fine,
        direction: opts.direction.clone(),
        tv,
        noise_floor,
        coarse_endpoints: coarse,
        fine_endpoints: fine,
    })
}

/// Variance after `n` steps of LMC on `N(0, 1)` started from variance `v0`:
/// `(1-h)^{2n} v0 + v∞ (1 - (1-h)^{2n})` with `v∞ = 2/(2-h)`.
pub fn ou_discretized_variance(h: f64, n: usize, v0: f64) -> f64 {
    let r = (1.0 - h).powi(2).powf(n as f64);
    let v_inf = 2.0 / (2.0 - h);
    r * v0 + v_inf * (1.0 - r)
}
