//! `train-score`, `certify-lsi`, `schedule`, and `diagnose`.

use anyhow::{bail, Context, Result};
use lmclab::diagnostics::{default_grid, density_curve, kde_1d, projected_tv, tv_grid_1d, unit_vector, weight_recovery};
use lmclab::inequalities::{
    build_graph, default_family, default_grid_1d, lsi_bound, lsi_bound_per_component, multiscale_plan, overlap_matrix,
    schedule_params, verify_lsi_1d, MultiscaleOptions, OverlapMatrix, ScheduleConstants,
};
use lmclab::mixture::Mixture;
use lmclab::rng::{Domain, Stream};

use crate::config::{ExperimentConfig, ScoreSpec};
use crate::manifest::Outputs;
use crate::report::{list, num, parts, Report};
use crate::run::{read_points, train_network};

pub fn train_score(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Report> {
    let ScoreSpec::Trained { train } = &cfg.score else {
        return Err(crate::fail(2, "train-score needs score.kind = \"trained\""));
    };
    let m = cfg.mixture()?;
    let mut report = Report::new("lmclab train-score");
    report.section("score");
    train_network(cfg.seed, train, &m, out, &mut report)?;
    Ok(report)
}

/// The largest threshold at which the overlap graph is connected: the
/// bottleneck of a maximum spanning tree.
pub fn connecting_threshold(ov: &OverlapMatrix) -> f64 {
    let k = ov.k();
    let mut in_tree = vec![false; k];
    let mut best = vec![f64::NEG_INFINITY; k];
    in_tree[0] = true;
    for j in 1..k {
        best[j] = ov.get(0, j);
    }
    let mut bottleneck = 1.0f64;
    for _ in 1..k {
        let (j, w) = (0..k).filter(|&j| !in_tree[j]).map(|j| (j, best[j])).fold((usize::MAX, f64::NEG_INFINITY), |a, b| {
            if b.1 > a.1 {
                b
            } else {
                a
            }
        });
        in_tree[j] = true;
        bottleneck = bottleneck.min(w);
        for l in 0..k {
            if !in_tree[l] {
                best[l] = best[l].max(ov.get(j, l));
            }
        }
    }
    bottleneck
}

pub fn certify_lsi(cfg: &ExperimentConfig) -> Result<Report> {
    let m = cfg.mixture()?;
    let l = &cfg.lsi;
    let ov = overlap_matrix(&m, l.method(&m, cfg.seed))?;
    let mut report = Report::new("lmclab certify-lsi");
    report.section("overlaps");
    report.line("method", format!("{:?}", ov.method));
    for (i, row) in ov.rows().iter().enumerate() {
        report.line(&format!("row_{i}"), list(row));
    }
    let delta = match l.delta {
        Some(d) => d,
        None => connecting_threshold(&ov),
    };
    report.section("graph");
    if !(delta > 0.0) {
        report.metric("delta", delta);
        report.line("connected", "no threshold in (0, 1] connects the graph");
    } else {
        let g = build_graph(&ov, delta.min(1.0))?;
        report.metric("delta", g.threshold);
        report.line("edges", g.edge_count());
        report.line("components", parts(&g.components));
        report.line("connected", g.is_connected());
        report.section("certificate");
        if g.is_connected() {
            let c = lsi_bound(&m, &g)?;
            write_certificate(&mut report, "", &c);
            if m.dim() == 1 {
                let grid = default_grid_1d(&m);
                let check = verify_lsi_1d(&m, c.c_ls_bound, &default_family(&m), &grid)?;
                report.section("verification");
                report.metric("constant", check.constant);
                report.line("grid_points", grid.n);
                for e in &check.entries {
                    report.metric(&format!("ratio[{}]", e.function.name()), e.ratio);
                }
                report.metric("max_ratio", check.max_ratio);
                report.line("pass", check.pass);
            }
        } else {
            for (n, c) in lsi_bound_per_component(&m, &g)?.iter().enumerate() {
                write_certificate(&mut report, &format!("part{n}_"), c);
            }
        }
    }
    let plan = multiscale_plan(
        &m,
        &ov,
        l.eps_tv,
        l.tau,
        MultiscaleOptions { threshold_small_weights: l.threshold_small_weights },
    )?;
    report.section("plan");
    report.metric("eps_tilde", plan.eps_tilde);
    report.metric("tau_tilde", plan.tau_tilde);
    report.line("ln_delta_sequence", list(&plan.ln_delta_sequence));
    for st in &plan.scales {
        report.line(
            &format!("scale_{}", st.scale),
            format!("ln_delta={} parts={} max_cross={} separated={}", num(st.ln_delta), parts(&st.components), num(st.max_cross_overlap), st.separated),
        );
    }
    report.line("terminal_scale", plan.terminal_scale);
    report.line("termination", format!("{:?}", plan.termination));
    report.line("partition", parts(&plan.partition));
    report.metric("mixing_time", plan.mixing_time);
    if let Some(t) = &plan.threshold {
        report.line("thresholds", list(&t.thresholds));
        report.line("kept", format!("{:?}", t.kept));
        report.line("discarded", format!("{:?}", t.discarded));
    }
    Ok(report)
}

fn write_certificate(report: &mut Report, prefix: &str, c: &lmclab::inequalities::LsiCertificate) {
    report.line(&format!("{prefix}indices"), format!("{:?}", c.indices));
    report.metric(&format!("{prefix}c_ls"), c.c_ls_bound);
    report.metric(&format!("{prefix}c_pi"), c.c_pi_bound);
    report.metric(&format!("{prefix}delta_used"), c.delta_used);
    report.line(&format!("{prefix}diameter"), c.diameter);
    report.metric(&format!("{prefix}p_star"), c.p_star);
    report.metric(&format!("{prefix}chain_constant"), c.chain_constant);
    report.metric(&format!("{prefix}chain_constant_formal"), c.chain_constant_formal);
    report.metric(&format!("{prefix}cluster_constant"), c.cluster_constant);
}

pub fn schedule(cfg: &ExperimentConfig) -> Result<Report> {
    let m = cfg.mixture()?;
    let p = schedule_params(&m, cfg.lsi.eps_tv, cfg.lsi.tau, ScheduleConstants::literal())?;
    let mut report = Report::new("lmclab schedule");
    report.section("inputs");
    report.metric("eps_tv", p.eps_tv);
    report.metric("tau", p.tau);
    report.line("k", p.k);
    report.line("dim", p.dim);
    report.metric("alpha", p.alpha);
    report.metric("beta", p.beta);
    report.metric("kappa", p.kappa);
    report.metric("p_star", p.p_star);
    report.line("constants", "literal (every order-one multiplier is 1)");
    report.section("schedule");
    report.metric("l0", p.l0);
    report.metric("l", p.l);
    report.metric("exponent", p.exponent);
    report.metric("t", p.t);
    report.metric("h_formula", p.h_formula);
    report.metric("n_steps", p.n_steps);
    report.metric("h", p.h);
    report.metric("eps_score", p.eps_score_budget);
    report.metric("m_min", p.m_min);
    report.metric("max_mode_distance", m.max_mode_distance());
    report.line("modes_within_l", m.max_mode_distance() <= p.l);
    Ok(report)
}

/// Diagnostics of an existing endpoint CSV against the configured target.
pub fn diagnose(cfg: &ExperimentConfig, endpoints: &std::path::Path, out: &mut Outputs) -> Result<Report> {
    let m = cfg.mixture()?;
    let text = std::fs::read_to_string(endpoints).with_context(|| format!("reading {}", endpoints.display()))?;
    let pts = read_points(&text).with_context(|| format!("parsing {}", endpoints.display()))?;
    if let Some(p) = pts.iter().find(|p| p.len() != m.dim()) {
        bail!("endpoint has dimension {} but the mixture has {}", p.len(), m.dim());
    }
    let mut report = Report::new("lmclab diagnose");
    report.section("endpoints");
    report.line("file", endpoints.display());
    report.line("points", pts.len());
    let wr = weight_recovery(&pts, &m)?;
    report.metric("weight_bound", wr.bound);
    for (i, f) in wr.fractions.iter().enumerate() {
        report.metric(&format!("fraction_{i}"), *f);
    }
    check_finite(&m)?;
    if m.dim() == 1 {
        let grid = default_grid(&m, &[1.0])?;
        let x: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        let kde = kde_1d(&x, cfg.diagnostics.kde_bandwidth(), &grid)?;
        report.metric("tv_truth", tv_grid_1d(&kde, &density_curve(&m, &grid)?)?.estimate);
        report.metric("kde_integral", kde.integral());
        out.write("kde.csv", &kde.to_csv())?;
    } else {
        let dirs: Vec<Vec<f64>> = cfg.diagnostics.projection_axes.iter().map(|&a| unit_vector(m.dim(), a)).collect();
        let mut stream = Stream::new(cfg.seed, Domain::Diagnostics, 2);
        let p = projected_tv(&pts, &m, &dirs, cfg.diagnostics.n_ref, &mut stream)?;
        for (&a, r) in cfg.diagnostics.projection_axes.iter().zip(&p.per_direction) {
            report.metric(&format!("projected_tv_e{a}"), r.estimate);
        }
        report.metric("projected_tv", p.max);
    }
    Ok(report)
}

fn check_finite(m: &Mixture) -> Result<()> {
    if m.components().iter().any(|c| c.mode().iter().any(|v| !v.is_finite())) {
        bail!("mixture has non-finite modes");
    }
    Ok(())
}
