//! The simulate pipeline: build the score, run the ensemble, diagnose every
//! horizon, and write artifacts.

use anyhow::{Context, Result};
use lmclab::diagnostics::{
    default_grid, density_curve, drift_stats, kde_1d, line_plot, projected_tv, stationary_density_1d, tv_grid_1d,
    unit_vector, weight_recovery, DriftParams, KdeCurve, Series,
};
use lmclab::mixture::Mixture;
use lmclab::rng::{Domain, Stream};
use lmclab::sampler::{data_based_init, run_ensemble, Ensemble, InitMode, InitSet, RunOptions, Schedule};
use lmclab::score::{l2_error, train, BadSetConfig, L2Error, Mlp, ScoreModel, TrainData};

use crate::config::{ExperimentConfig, InitModeSpec, ScoreSpec, TrainSpec};
use crate::manifest::Outputs;
use crate::report::{list, Report};

/// Ground-truth stream index under the experiment seed; the init set uses 0.
const TRAIN_DATA_STREAM: u64 = 1;
/// Diagnostics stream indices under the experiment seed.
const L2_STREAM: u64 = 1;
const REFERENCE_STREAM: u64 = 2;

pub struct Outcome {
    pub report: Report,
    pub diverged_chains: usize,
}

pub struct BuiltScore {
    pub model: ScoreModel,
    pub l2: Option<L2Error>,
}

pub fn build_score(cfg: &ExperimentConfig, m: &Mixture, out: &mut Outputs, report: &mut Report) -> Result<BuiltScore> {
    report.section("score");
    report.line("kind", cfg.score.tag());
    let model = match &cfg.score {
        ScoreSpec::Exact => ScoreModel::exact(m),
        ScoreSpec::Biased { weights } => {
            report.line("fake_weights", list(weights));
            ScoreModel::weight_biased(m, weights.clone())?
        }
        ScoreSpec::Field { weights, field } => {
            let base = match weights {
                Some(w) => ScoreModel::weight_biased(m, w.clone())?,
                None => ScoreModel::exact(m),
            };
            let field = field.build();
            let norm = field.l2_norm_sq(m)?;
            let model = ScoreModel::additive(base, field)?;
            report.metric("field_l2_norm_sq", norm);
            model
        }
        ScoreSpec::Trained { train: spec } => ScoreModel::Mlp(train_network(cfg.seed, spec, m, out, report)?),
        ScoreSpec::File { path } => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading weights {path}"))?;
            let net = Mlp::from_text(&text).with_context(|| format!("parsing weights {path}"))?;
            report.line("weights_file", path);
            ScoreModel::Mlp(net)
        }
    };
    let l2 = match cfg.score {
        ScoreSpec::Exact => None,
        _ => {
            let e = l2_error(&model, m, 10_000, &mut Stream::new(cfg.seed, Domain::Diagnostics, L2_STREAM))?;
            report.metric("score_l2_error", e.estimate);
            report.metric("score_l2_error_se", e.std_error);
            Some(e)
        }
    };
    Ok(BuiltScore { model, l2 })
}

/// Trains the configured network and writes `weights.txt` and `loss.csv`.
pub fn train_network(seed: u64, spec: &TrainSpec, m: &Mixture, out: &mut Outputs, report: &mut Report) -> Result<Mlp> {
    let tc = spec.train_config(seed)?;
    let data;
    let source = if spec.n_train == 0 {
        TrainData::Fresh(m)
    } else {
        data = m.sample_ground_truth(spec.n_train, &mut Stream::new(seed, Domain::GroundTruth, TRAIN_DATA_STREAM))?;
        TrainData::Fixed(&data)
    };
    let (net, mut tr) = train(source, &tc)?;
    let e = tr.attach_l2_error(&net, m, spec.l2_samples.max(100), &mut Stream::new(seed, Domain::Diagnostics, L2_STREAM))?;
    eprintln!("trained {} steps in {:.1?}", tc.steps, tr.wall_clock);
    report.line("loss", tc.loss.tag());
    report.line("hidden", tc.hidden);
    report.line("steps", tc.steps);
    report.line("batch_size", tc.batch_size);
    report.line("training_data", if spec.n_train == 0 { "fresh".to_string() } else { spec.n_train.to_string() });
    if let Some(last) = tr.loss_curve.last() {
        report.metric("final_loss", *last);
    }
    report.metric("trained_l2_error", e.estimate);
    report.metric("trained_l2_error_se", e.std_error);
    if let Some(note) = &tr.note {
        report.line("note", note);
    }
    out.write("loss.csv", &tr.loss_csv())?;
    out.write("weights.txt", &net.to_text(tc.loss))?;
    Ok(net)
}

pub fn init_set(cfg: &ExperimentConfig, m: &Mixture) -> Result<InitSet> {
    match &cfg.init.file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading init points {path}"))?;
            let points = read_points(&text).with_context(|| format!("parsing {path}"))?;
            Ok(InitSet::external(points, path)?)
        }
        None => Ok(data_based_init(m, cfg.init.m, cfg.seed)?),
    }
}

/// `index,x_0,...` with one row per point.
pub fn points_csv(points: &[Vec<f64>]) -> String {
    let d = points.first().map_or(0, Vec::len);
    let mut s = String::from("index");
    for j in 0..d {
        s.push_str(&format!(",x_{j}"));
    }
    s.push('\n');
    for (i, p) in points.iter().enumerate() {
        s.push_str(&i.to_string());
        for v in p {
            s.push_str(&format!(",{v:.16e}"));
        }
        s.push('\n');
    }
    s
}

/// Reads the `x_*` columns of a CSV with a header row.
pub fn read_points(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().context("empty CSV")?.split(',').map(str::trim).collect();
    let cols: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.starts_with("x_")).map(|(i, _)| i).collect();
    anyhow::ensure!(!cols.is_empty(), "CSV has no x_ columns");
    lines
        .enumerate()
        .map(|(row, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            cols.iter()
                .map(|&c| {
                    let f = fields.get(c).with_context(|| format!("row {} is short", row + 2))?;
                    f.trim().parse::<f64>().with_context(|| format!("row {}: bad number {f:?}", row + 2))
                })
                .collect()
        })
        .collect()
}

pub fn simulate(cfg: &ExperimentConfig, threads: usize, out: &mut Outputs) -> Result<Outcome> {
    let m = cfg.mixture()?;
    let mut report = Report::new("lmclab simulate");
    report.section("target");
    report.line("components", m.k());
    report.line("dim", m.dim());
    report.line("weights", list(m.weights()));
    report.line("seed", cfg.seed);

    let score = build_score(cfg, &m, out, &mut report)?;
    let init = init_set(cfg, &m)?;
    report.section("init");
    report.line("points", init.len());
    report.line("cluster_counts", format!("{:?}", init.cluster_counts(&m)));
    out.write("init.csv", &points_csv(&init.points))?;

    let s = &cfg.schedule;
    let n_steps = *s.horizons.last().unwrap();
    let sched = Schedule::new(s.h, n_steps, s.record_stride.unwrap_or(1))?;
    let bad_set = match &cfg.diagnostics.bad_set {
        Some(b) => Some(BadSetConfig::from_tv(b.eps_tv, b.t)?),
        None => None,
    };
    let opts = RunOptions {
        n_chains: s.chains,
        master_seed: cfg.seed,
        threads,
        init_mode: cfg.init.mode.as_ref().map(|mo| match mo {
            InitModeSpec::PerSample => InitMode::PerSample,
            InitModeSpec::Resample => InitMode::Resample,
        }),
        mixture: Some(&m),
        bad_set,
        record: s.record_stride.is_some(),
        snapshots: s.horizons.clone(),
    };
    let ens = run_ensemble(&init, &sched, &score.model, &opts)?;
    report.section("run");
    report.metric("h", s.h);
    report.line("chains", s.chains);
    report.line("init_mode", ens.init_mode.tag());
    report.line("horizons", format!("{:?}", s.horizons));
    report.metric("diverged", ens.diverged() as f64);
    report.metric("transitions", ens.transitions() as f64);

    if let (Some(cfg_b), Some(b)) = (&bad_set, &cfg.diagnostics.bad_set) {
        report.section("bad_set");
        report.metric("eps_score_1", cfg_b.eps_score_1);
        report.metric("bad_fraction", ens.bad_fraction());
        if let Some(l2) = score.l2 {
            let e1 = cfg_b.eps_score_1 * cfg_b.eps_score_1;
            report.metric("bad_markov_bound", l2.estimate / e1);
            report.metric("continuous_time", b.t);
        }
    }

    for (k, &step) in s.horizons.iter().enumerate() {
        out.write(&format!("endpoints_{step}.csv"), &ens.snapshot_csv(k, Some(&m)))?;
    }
    if opts.record {
        out.write("trajectories.csv", &ens.trajectories_csv())?;
    }
    horizon_diagnostics(cfg, &m, &score.model, &init, &ens, out, &mut report)?;
    if let Some(block) = cfg.diagnostics.drift_block {
        drift_section(cfg, &m, &score.model, &init, &ens, block, &mut report)?;
    }
    Ok(Outcome { report, diverged_chains: ens.diverged() })
}

fn horizon_diagnostics(
    cfg: &ExperimentConfig,
    m: &Mixture,
    model: &ScoreModel,
    init: &InitSet,
    ens: &Ensemble,
    out: &mut Outputs,
    report: &mut Report,
) -> Result<()> {
    let horizons = &cfg.schedule.horizons;
    let mut curves: Vec<(String, KdeCurve)> = Vec::new();
    if m.dim() == 1 {
        let grid = default_grid(m, &[1.0])?;
        let truth = density_curve(m, &grid)?;
        out.write("truth.csv", &truth.to_csv())?;
        let raw: Vec<f64> = init.points.iter().map(|p| p[0]).collect();
        if raw.len() >= 2 {
            let k = kde_1d(&raw, cfg.diagnostics.kde_bandwidth(), &grid)?;
            report.section("init_kde");
            report.metric("tv_truth@init", tv_grid_1d(&k, &truth)?.estimate);
            out.write("kde_init.csv", &k.to_csv())?;
        }
        if let Ok(st) = stationary_density_1d(model, &grid) {
            report.section("stationary");
            report.metric("tv_stationary_truth", tv_grid_1d(&st, &truth)?.estimate);
            out.write("stationary.csv", &st.to_csv())?;
            curves.push(("stationary law of the score".into(), st));
        }
        curves.push(("truth".into(), truth));
    }
    for (k, &step) in horizons.iter().enumerate() {
        let pts = ens.snapshot(k);
        report.section(&format!("horizon {step}"));
        report.metric("time", step as f64 * cfg.schedule.h);
        let wr = weight_recovery(&pts, m)?;
        report.metric(&format!("weight_bound@{step}"), wr.bound);
        for (i, f) in wr.fractions.iter().enumerate() {
            report.metric(&format!("fraction_{i}@{step}"), *f);
        }
        report.metric(&format!("transitions@{step}"), ens.transitions_until(step) as f64);
        if m.dim() == 1 {
            let grid = default_grid(m, &[1.0])?;
            let x: Vec<f64> = pts.iter().map(|p| p[0]).collect();
            if x.len() >= 2 {
                let kde = kde_1d(&x, cfg.diagnostics.kde_bandwidth(), &grid)?;
                let truth = density_curve(m, &grid)?;
                report.metric(&format!("tv_truth@{step}"), tv_grid_1d(&kde, &truth)?.estimate);
                report.metric(&format!("kde_integral@{step}"), kde.integral());
                report.metric(&format!("bandwidth@{step}"), kde.bandwidth);
                out.write(&format!("kde_{step}.csv"), &kde.to_csv())?;
                curves.push((format!("T = {step}"), kde));
            }
        } else {
            let dirs: Vec<Vec<f64>> =
                cfg.diagnostics.projection_axes.iter().map(|&a| unit_vector(m.dim(), a)).collect();
            if !dirs.is_empty() && pts.len() >= 2 {
                let mut stream = Stream::new(cfg.seed, Domain::Diagnostics, REFERENCE_STREAM);
                let p = projected_tv(&pts, m, &dirs, cfg.diagnostics.n_ref, &mut stream)?;
                for (&a, r) in cfg.diagnostics.projection_axes.iter().zip(&p.per_direction) {
                    report.metric(&format!("projected_tv_e{a}@{step}"), r.estimate);
                }
                report.metric(&format!("projected_tv@{step}"), p.max);
            }
        }
    }
    if m.dim() == 1 {
        let series: Vec<Series> =
            curves.into_iter().map(|(label, c)| Series::line(&label, c.grid, c.density)).collect();
        out.write("kde.svg", &line_plot("Langevin iterates vs ground truth", "x", "density", &series))?;
    } else {
        trajectory_plots(cfg, ens, out)?;
    }
    Ok(())
}

/// First two coordinates of the first chains up to each horizon.
fn trajectory_plots(cfg: &ExperimentConfig, ens: &Ensemble, out: &mut Outputs) -> Result<()> {
    let n = cfg.diagnostics.plot_chains.min(ens.chains.len());
    for (k, &step) in cfg.schedule.horizons.iter().enumerate() {
        let series: Vec<Series> = if cfg.schedule.record_stride.is_some() {
            ens.chains[..n]
                .iter()
                .map(|c| {
                    let path: Vec<&Vec<f64>> = c.states.iter().filter(|(s, _)| *s <= step).map(|(_, x)| x).collect();
                    Series::line(
                        &format!("chain {}", c.chain),
                        path.iter().map(|x| x[0]).collect(),
                        path.iter().map(|x| x[1]).collect(),
                    )
                })
                .collect()
        } else {
            let pts = ens.snapshot(k);
            vec![Series::scatter("chains", pts.iter().map(|x| x[0]).collect(), pts.iter().map(|x| x[1]).collect())]
        };
        out.write(
            &format!("trajectories_{step}.svg"),
            &line_plot(&format!("first two coordinates up to T = {step}"), "x_0", "x_1", &series),
        )?;
    }
    Ok(())
}

fn drift_section(
    cfg: &ExperimentConfig,
    m: &Mixture,
    model: &ScoreModel,
    init: &InitSet,
    ens: &Ensemble,
    block: usize,
    report: &mut Report,
) -> Result<()> {
    // chain 0 depends only on its own streams, so a one-chain rerun at stride 1 retraces it
    let sched = Schedule::new(cfg.schedule.h, ens.schedule.n_steps, 1)?;
    let mut o = RunOptions::new(1, cfg.seed);
    o.init_mode = Some(ens.init_mode);
    o.record = true;
    let one = run_ensemble(init, &sched, model, &o)?;
    let path: Vec<Vec<f64>> = one.chains[0].states.iter().map(|(_, x)| x.clone()).collect();
    let r = drift_stats(&path, 1, block, &DriftParams::for_mixture(m, cfg.schedule.h))?;
    report.section("drift");
    report.line("block", block);
    report.metric("drift_exceed_fraction", r.exceed_fraction);
    report.metric("drift_allowed", r.allowed);
    Ok(())
}
