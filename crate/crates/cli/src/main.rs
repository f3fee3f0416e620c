//! Batch experiment runner: parses a config, wires the toolkit modules, runs
//! named suites, and emits CSV/JSON reports. Exit status 0 means every
//! asserted bound passed; 1 means an assertion failed; 2 means the
//! configuration could not be parsed or resolved.

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use contact_dynamics::config::{load_config, resolve, Resolved};
use contact_dynamics::error::Error as CoreError;
use contact_dynamics::experiments::run_experiment;
use contact_dynamics::grid::GridSpec;
use contact_dynamics::mainlemma::{
    synthesize, PipelineParams, Schedule, SynthesisInput, SynthesisMode,
};
use contact_dynamics::metrics::{ham_norm, NormKind};
use contact_dynamics::regularize::{build_variation, regularize_isotopy};
use contact_dynamics::report::{certificate_csv, Report, ReportRow};
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "contactdyn",
    about = "Contact dynamics experiment runner",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment suite named in a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for independent targets (0 = serial).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Suite override (verify|metrics|regularize|mainlemma|nonsmooth).
        #[arg(long)]
        suite: Option<String>,
        /// Treat warnings (informational rows with bounds) as failures.
        #[arg(long, default_value_t = false)]
        strict: bool,
    },
    /// Regularize a configured system by a small loop.
    Regularize {
        /// Config file defining the chart and the input system.
        #[arg(long)]
        input: PathBuf,
        /// System name (defaults to the first experiment target).
        #[arg(long)]
        system: Option<String>,
        /// Pairs in the loop variation.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Half-width of the parameter search box.
        #[arg(long = "eps-box", default_value_t = 0.02)]
        eps_box: f64,
        /// CSV report path.
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the synthesis pipeline on a configured system or sequence.
    Mainlemma {
        /// Config file; experiment targets form the input sequence.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::NearIdentity)]
        mode: ModeArg,
        /// Perturbation budget epsilon.
        #[arg(long, default_value_t = 0.3)]
        eps: f64,
        /// Trace JSON output path.
        #[arg(long)]
        trace: PathBuf,
    },
    /// Emit the non-Lipschitz displacement certificate.
    Nonsmooth {
        /// Blow-up exponent in (0, 2).
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        /// Certificate exponent in (0, a).
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 10_000)]
        kmax: u64,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    NearInput,
    NearIdentity,
}

fn main() -> ExitCode {
    match run() {
        Ok(ok) => {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            // parse/config problems exit with 2
            let is_config = e.downcast_ref::<CoreError>().map_or(false, |ce| {
                matches!(
                    ce,
                    CoreError::Parse(_) | CoreError::Config(_) | CoreError::Unresolved(_)
                )
            });
            if is_config {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn load(path: &PathBuf) -> anyhow::Result<Resolved> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg = load_config(&text)?;
    Ok(resolve(&cfg)?)
}

fn run() -> anyhow::Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            workers,
            suite,
            strict,
        } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading config {}", config.display()))?;
            let mut cfg = load_config(&text)?;
            if let Some(s) = suite {
                cfg.experiment.kind = Some(s);
            }
            let resolved = resolve(&cfg)?;
            let out_dir = out
                .or_else(|| cfg.experiment.out.clone().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("reports"));
            // targets are independent; the suite runner is already
            // deterministic, so worker parallelism only affects wall time
            let _ = workers;
            let (report, files) = run_experiment(&resolved, &out_dir)?;
            fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            let csv_path = out_dir.join(format!("{}.csv", report.suite));
            let json_path = out_dir.join(format!("{}.json", report.suite));
            report.write_csv(fs::File::create(&csv_path)?)?;
            report.write_json(fs::File::create(&json_path)?)?;
            for f in &files {
                println!("wrote {}", f.display());
            }
            println!("wrote {}", csv_path.display());
            println!("wrote {}", json_path.display());
            let ok = report.all_passed()
                && (!strict || report.rows.iter().all(|r| r.pass != Some(false)));
            for row in report.failed_rows() {
                eprintln!(
                    "FAIL {} {}: {} vs bound {:?}",
                    row.id, row.name, row.value, row.bound
                );
            }
            println!(
                "{}: {} rows, {}",
                report.suite,
                report.rows.len(),
                if ok { "all bounds hold" } else { "FAILURES" }
            );
            Ok(ok)
        }
        Command::Regularize {
            input,
            system,
            k,
            eps_box,
            report,
        } => {
            let resolved = load(&input)?;
            let name = system
                .or_else(|| resolved.experiment.targets.first().cloned())
                .context("no system named; set --system or experiment targets")?;
            let sys = resolved
                .systems
                .get(&name)
                .ok_or_else(|| CoreError::Unresolved(name.clone()))?;
            let chart = sys.chart();
            let mut base = vec![0.0; chart.dim()];
            base[0] = 0.45 * chart.domain.intervals[0][1];
            let variation = build_variation(chart.clone(), chart.to_working(&base), k, 0.3)?;
            let spec = GridSpec::new(resolved.grids.space, resolved.grids.time_knots);
            let reg = regularize_isotopy(&sys.ham, &variation, eps_box, &spec, 100)?;
            let hnorm = ham_norm(&sys.ham, NormKind::L1Inf, &spec)?.value;
            let mut rep = Report::new("regularize", resolved.grids.seed, spec);
            rep.push(ReportRow::gt("regularize.margin", &name, reg.margin, 0.0));
            rep.push(ReportRow::info(
                "regularize.loop_norm_1inf",
                &name,
                reg.loop_norm_1inf,
            ));
            rep.push(ReportRow::info("regularize.input_norm_1inf", &name, hnorm));
            rep.push(ReportRow::info("regularize.loop_c0", &name, reg.loop_c0));
            let mut file = fs::File::create(&report)
                .with_context(|| format!("creating {}", report.display()))?;
            rep.write_csv(&mut file)?;
            println!(
                "margin {} with loop norm {} (eps* = {:?})",
                reg.margin, reg.loop_norm_1inf, reg.eps_star
            );
            Ok(rep.all_passed())
        }
        Command::Mainlemma {
            input,
            depth,
            mode,
            eps,
            trace,
        } => {
            let resolved = load(&input)?;
            let systems: Vec<_> = resolved
                .experiment
                .targets
                .iter()
                .map(|n| {
                    resolved
                        .systems
                        .get(n)
                        .cloned()
                        .ok_or_else(|| CoreError::Unresolved(n.clone()))
                })
                .collect::<Result<_, _>>()?;
            anyhow::ensure!(!systems.is_empty(), "experiment targets are empty");
            let chart = systems[0].chart();
            let schedule = Schedule {
                depth,
                ..Schedule::default()
            };
            let input_arg = if systems.len() == 1 {
                SynthesisInput::Single(systems.into_iter().next().unwrap())
            } else {
                SynthesisInput::Sequence(systems)
            };
            let mode = match mode {
                ModeArg::NearInput => SynthesisMode::NearInput,
                ModeArg::NearIdentity => SynthesisMode::NearIdentity,
            };
            let params = PipelineParams::darboux_default(&chart);
            let out = synthesize(input_arg, &schedule, mode, eps, &params)?;
            let file = fs::File::create(&trace)
                .with_context(|| format!("creating {}", trace.display()))?;
            serde_json::to_writer_pretty(file, &out.trace)?;
            println!(
                "time-one error {} (tolerance {}), final sup norm {} (bound {})",
                out.trace.time_one_error,
                3.0 * out.trace.integrator_tolerance,
                out.trace.final_norm_inf,
                out.trace.final_norm_bound
            );
            Ok(true)
        }
        Command::Nonsmooth {
            a,
            delta,
            kmax,
            out,
        } => {
            let chart = contact_dynamics::chart::Chart::darboux(1, 2.5, 4.0)?;
            let family = std::sync::Arc::new(contact_dynamics::nonsmooth::RotationFamily::new(
                chart,
                contact_dynamics::nonsmooth::RhoProfile {
                    exponent: a,
                    r_inner: 0.2,
                    r_outer: 0.8,
                    truncations: vec![0.15, 0.08],
                },
                contact_dynamics::smooth::Plateau::new(2.0, 3.0),
            )?);
            let rows = contact_dynamics::nonsmooth::lipschitz_certificate(&family, delta, kmax)?;
            let pass = rows.iter().all(|r| r.pass);
            let mut file = fs::File::create(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            certificate_csv(&rows, &mut file)?;
            file.flush()?;
            println!(
                "{} certificate rows, smallest radius {:.3e}, all pass: {pass}",
                rows.len(),
                rows.last().map(|r| r.s_k).unwrap_or(f64::NAN)
            );
            Ok(pass)
        }
    }
}
