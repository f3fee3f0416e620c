//! Named experiment suites driven by a resolved configuration: verify,
//! metrics, regularize, mainlemma and nonsmooth. Each suite produces a
//! report with every measured quantity beside its required bound; auxiliary
//! files (certificate tables, pipeline traces) land in the output directory.

use crate::config::{rotation_family, Resolved};
use crate::error::{Error, Result};
use crate::expr::{parse_expr, Args, Expr};
use crate::flow::conformal_factor;
use crate::grid::{seeded_cloud, GridSpec};
use crate::mainlemma::{
    synthesize, PipelineParams, Schedule, SynthesisInput, SynthesisMode,
};
use crate::metrics::{c0_distance, contact_distance, ham_norm, NormKind};
use crate::regularize::{build_variation, regularize_isotopy};
use crate::report::{certificate_csv, Report, ReportRow};
use crate::system::direct_flow_check;
use std::fs;
use std::path::{Path, PathBuf};

/// Run the configured suite; returns the report and any files written.
pub fn run_experiment(resolved: &Resolved, out_dir: &Path) -> Result<(Report, Vec<PathBuf>)> {
    let kind = resolved
        .experiment
        .kind
        .clone()
        .unwrap_or_else(|| "verify".into());
    let spec = GridSpec::new(resolved.grids.space, resolved.grids.time_knots);
    let mut report = Report::new(&kind, resolved.grids.seed, spec);
    let mut files = Vec::new();

    match kind.as_str() {
        "verify" => verify_suite(resolved, &spec, &mut report)?,
        "metrics" => metrics_suite(resolved, &spec, &mut report)?,
        "regularize" => regularize_suite(resolved, &spec, &mut report)?,
        "mainlemma" => mainlemma_suite(resolved, &mut report, out_dir, &mut files)?,
        "nonsmooth" => nonsmooth_suite(resolved, &mut report, out_dir, &mut files)?,
        other => return Err(Error::Config(format!("unknown experiment kind `{other}`"))),
    }
    Ok((report, files))
}

fn tol(resolved: &Resolved, key: &str, default: f64) -> f64 {
    resolved
        .experiment
        .tolerances
        .get(key)
        .copied()
        .unwrap_or(default)
}

fn verify_suite(resolved: &Resolved, spec: &GridSpec, report: &mut Report) -> Result<()> {
    let pullback_tol = tol(resolved, "pullback", 1e-5);
    let conformal_tol = tol(resolved, "conformal", 1e-6);
    let cross_tol = tol(resolved, "cross_check", 1e-5);
    for name in &resolved.experiment.targets {
        let sys = resolved
            .systems
            .get(name)
            .ok_or_else(|| Error::Unresolved(name.clone()))?;
        let chart = sys.chart();
        let cloud = seeded_cloud(&chart, 64, resolved.grids.seed, 0.02);
        let flow = &sys.flow;
        // composite systems carry algebraic flows without a pairing id;
        // their conformal factor is read off the flow samples directly
        let conf = match conformal_factor(&sys.ham, flow) {
            Ok(c) => c,
            Err(Error::MismatchedPairing) => crate::flow::ConformalFactor {
                iso: flow.iso.clone(),
            },
            Err(e) => return Err(e),
        };
        let res = crate::flow::pullback_residual(flow, &conf, flow.interval().1, &cloud)?;
        report.push(ReportRow::le(
            "flow.pullback_residual",
            name,
            res,
            pullback_tol,
        ));

        // round trip of the inverse maps
        let mut rt = 0.0f64;
        for p in cloud.iter().take(16) {
            let fwd = flow.forward(1.0, p)?;
            let back = flow.inverse(1.0, &fwd.point)?;
            rt = rt.max(chart.distance(&back.point, p));
        }
        report.push(ReportRow::le("flow.round_trip", name, rt, conformal_tol.max(1e-6)));

        // strictly contact targets keep |h| at zero; report the sup
        let habs = sys.conformal_sup(&GridSpec::new(spec.per_axis.min(6), 8))?;
        report.push(ReportRow::info("flow.conformal_sup", name, habs));

        if sys.provenance == crate::system::Provenance::AlgebraicComposition {
            let check = direct_flow_check(sys, &cloud[..6.min(cloud.len())], 4, 5e-3)?;
            report.push(ReportRow::le(
                "cds.direct_flow_check.point",
                name,
                check.point_sup,
                cross_tol,
            ));
            report.push(ReportRow::le(
                "cds.direct_flow_check.conformal",
                name,
                check.conformal_sup,
                cross_tol,
            ));
        }
    }
    Ok(())
}

fn metrics_suite(resolved: &Resolved, spec: &GridSpec, report: &mut Report) -> Result<()> {
    for name in &resolved.experiment.targets {
        let sys = resolved
            .systems
            .get(name)
            .ok_or_else(|| Error::Unresolved(name.clone()))?;
        for kind in [NormKind::L1Inf, NormKind::LInf] {
            let r = ham_norm(&sys.ham, kind, spec)?;
            report.push(ReportRow::info(
                &format!("metrics.ham_norm.{}", r.kind),
                name,
                r.value,
            ));
        }
    }
    if resolved.experiment.targets.len() >= 2 {
        let a = &resolved.systems[&resolved.experiment.targets[0]];
        let b = &resolved.systems[&resolved.experiment.targets[1]];
        let d = c0_distance(&a.flow, &b.flow, spec, true)?;
        report.push(ReportRow::info("metrics.c0_distance", "pair", d));
        let m = contact_distance(a, b, NormKind::L1Inf, spec)?;
        report.push(ReportRow::info("metrics.contact_distance", "pair", m.total));
    }
    Ok(())
}

fn regularize_suite(resolved: &Resolved, spec: &GridSpec, report: &mut Report) -> Result<()> {
    let k = resolved
        .experiment
        .params
        .get("k")
        .copied()
        .unwrap_or(1.0) as usize;
    let eps_box = resolved
        .experiment
        .params
        .get("eps_box")
        .copied()
        .unwrap_or(0.02);
    let cutoff = resolved
        .experiment
        .params
        .get("cutoff")
        .copied()
        .unwrap_or(0.3);
    let smallness = tol(resolved, "smallness", 0.05);
    for name in &resolved.experiment.targets {
        let sys = resolved
            .systems
            .get(name)
            .ok_or_else(|| Error::Unresolved(name.clone()))?;
        let chart = sys.chart();
        let mut base_display = vec![0.0; chart.dim()];
        base_display[0] = 0.45 * chart.domain.intervals[0][1];
        let variation = build_variation(chart.clone(), chart.to_working(&base_display), k, cutoff)?;
        let reg = regularize_isotopy(&sys.ham, &variation, eps_box, spec, 100)?;
        report.push(ReportRow::gt("regularize.margin", name, reg.margin, 0.0));
        let hnorm = ham_norm(&sys.ham, NormKind::L1Inf, spec)?.value;
        report.push(ReportRow::le(
            "regularize.loop_norm_1inf",
            name,
            reg.loop_norm_1inf,
            smallness * hnorm,
        ));
        report.push(ReportRow::info("regularize.loop_c0", name, reg.loop_c0));
    }
    Ok(())
}

fn mainlemma_suite(
    resolved: &Resolved,
    report: &mut Report,
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let depth = resolved
        .experiment
        .params
        .get("depth")
        .copied()
        .unwrap_or(3.0) as usize;
    let eps = resolved
        .experiment
        .params
        .get("eps")
        .copied()
        .unwrap_or(0.3);
    let mode = match resolved.experiment.mode.as_deref() {
        Some("near_input") => SynthesisMode::NearInput,
        _ => SynthesisMode::NearIdentity,
    };
    let systems: Vec<_> = resolved
        .experiment
        .targets
        .iter()
        .map(|n| {
            resolved
                .systems
                .get(n)
                .cloned()
                .ok_or_else(|| Error::Unresolved(n.clone()))
        })
        .collect::<Result<_>>()?;
    if systems.is_empty() {
        return Ok(());
    }
    let chart = systems[0].chart();
    let params = PipelineParams::darboux_default(&chart);
    let schedule = Schedule {
        depth,
        ..Schedule::default()
    };
    let input = if systems.len() == 1 {
        SynthesisInput::Single(systems.into_iter().next().unwrap())
    } else {
        SynthesisInput::Sequence(systems)
    };
    let out = synthesize(input, &schedule, mode, eps, &params)?;
    let tr = &out.trace;
    report.push(ReportRow::le(
        "mainlemma.time_one_error",
        "pipeline",
        tr.time_one_error,
        3.0 * tr.integrator_tolerance,
    ));
    report.push(ReportRow::le(
        "mainlemma.final_norm_inf",
        "pipeline",
        tr.final_norm_inf,
        tr.final_norm_bound,
    ));
    for s in &tr.stages {
        report.push(ReportRow::le(
            "mainlemma.stage_norm",
            &format!("stage{}", s.index),
            s.n_norm_inf,
            s.n_bound,
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let trace_path = out_dir.join("pipeline_trace.json");
    let file = fs::File::create(&trace_path).map_err(|e| Error::Io {
        path: trace_path.display().to_string(),
        source: e,
    })?;
    serde_json::to_writer_pretty(file, tr).map_err(|e| Error::Config(e.to_string()))?;
    files.push(trace_path);
    Ok(())
}

fn nonsmooth_suite(
    resolved: &Resolved,
    report: &mut Report,
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let a = resolved
        .experiment
        .params
        .get("a")
        .copied()
        .unwrap_or(1.0);
    let delta = resolved
        .experiment
        .params
        .get("delta")
        .copied()
        .unwrap_or(0.5);
    let kmax = resolved
        .experiment
        .params
        .get("kmax")
        .copied()
        .unwrap_or(1e4) as u64;
    // family from the experiment parameters
    let expr_text = format!("rotation(a={a}, eps=[0.15, 0.08])");
    let expr = parse_expr(&expr_text)?;
    let Expr::Call { name, args } = &expr else {
        unreachable!()
    };
    let family = rotation_family(
        &resolved.chart,
        &Args {
            call: name,
            args,
        },
    )?;
    let rows = crate::nonsmooth::lipschitz_certificate(&family, delta, kmax)?;
    let usable = rows.len();
    let all_pass = rows.iter().all(|r| r.pass);
    let mut increasing = true;
    for w in rows.windows(2) {
        if w[1].quotient <= w[0].quotient {
            increasing = false;
            break;
        }
    }
    report.push(ReportRow::info(
        "nonsmooth.certificate_rows",
        "certificate",
        usable as f64,
    ));
    report.push(ReportRow::gt(
        "nonsmooth.certificate_all_pass",
        "certificate",
        if all_pass { 1.0 } else { 0.0 },
        0.5,
    ));
    report.push(ReportRow::gt(
        "nonsmooth.certificate_monotone",
        "certificate",
        if increasing { 1.0 } else { 0.0 },
        0.5,
    ));
    fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let csv_path = out_dir.join("certificate.csv");
    let file = fs::File::create(&csv_path).map_err(|e| Error::Io {
        path: csv_path.display().to_string(),
        source: e,
    })?;
    certificate_csv(&rows, file)?;
    files.push(csv_path);
    Ok(())
}
