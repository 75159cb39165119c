use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use chsh_kcbs::dataset::{
    bundled_dataset, dataset_to_json, emit_figure_data, load_dataset, verify_paper, write_csv,
    CheckStatus, ExperimentRecord, THEORY_TOL,
};
use chsh_kcbs::hidden::{
    enumerate_local_vertices_with, enumerate_noncontextual_vertices, max_functional,
    min_functional, LocalVariant,
};
use chsh_kcbs::inequalities::{correlators_from_behavior, evaluate_model, Functional};
use chsh_kcbs::quantum::{quantum_behavior, QuantumModel, DEFAULT_THETA_U, DEFAULT_THETA_V};
use chsh_kcbs::scenario::{
    check_no_disturbance, check_no_signalling, disturbance_distance, marginalize_bob, Scenario,
    ANALYTIC_TOL,
};
use chsh_kcbs::search::{
    joint_violation_window, optimize_state_params, phi_scan, Objective, DEFAULT_RESOLUTION,
};
use chsh_kcbs::shot_noise::{simulate_experiment, DEFAULT_COUNTS, DEFAULT_RESAMPLES};
use chsh_kcbs::Error;

/// Joint CHSH/KCBS violation in a qubit-qutrit system.
#[derive(Parser)]
#[command(name = "chsh-kcbs", version)]
struct Cli {
    #[arg(long, global = true, default_value_t = DEFAULT_THETA_U)]
    theta_u: f64,
    #[arg(long, global = true, default_value_t = DEFAULT_THETA_V)]
    theta_v: f64,
    /// Check tolerance; each subcommand has its own default.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for files written by the subcommand.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// α and β along φ, as CSV (phi, alpha, beta, region).
    Scan {
        #[arg(long, default_value_t = 0.0)]
        phi_min: f64,
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
        phi_max: f64,
        #[arg(long, default_value_t = 158)]
        steps: usize,
        /// Also report the joint-violation window on stderr.
        #[arg(long)]
        window: bool,
    },
    /// Behavior, correlators and consistency checks at one φ.
    Evaluate {
        #[arg(long)]
        phi: f64,
        /// Print the full behavior instead of the summary.
        #[arg(long)]
        behavior: bool,
    },
    /// Exhaustive classical maxima and their maximising strategies.
    Bounds {
        #[arg(long, value_enum, default_value_t = Variant::Unconstrained)]
        variant: Variant,
    },
    /// Re-optimise (θ_u, θ_v) at fixed φ.
    Optimize {
        #[arg(long)]
        phi: f64,
        /// max_min_margin, weighted_sum(w) or max_beta_given_alpha_above(d).
        #[arg(long, default_value = "max_min_margin")]
        objective: Objective,
    },
    /// Finite-count simulation of the experiment at one φ.
    Simulate {
        #[arg(long)]
        phi: f64,
        #[arg(long, default_value_t = DEFAULT_COUNTS)]
        counts: u64,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        /// Include the raw count tables.
        #[arg(long)]
        raw: bool,
    },
    /// Validate a dataset file and write it back in canonical form.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Recompute the reported summary values from the per-state data.
    VerifyPaper {
        /// Dataset file; the bundled one when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Write curve.csv, points.csv and bounds.csv.
    EmitFigure {
        #[arg(long, default_value_t = 1571)]
        steps: usize,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Unconstrained,
    SingletonConsistent,
}

enum Outcome {
    Pass,
    CheckFailed,
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn records(path: Option<&Path>) -> chsh_kcbs::Result<Vec<ExperimentRecord>> {
    match path {
        Some(p) => load_dataset(p),
        None => Ok(bundled_dataset()),
    }
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let (tu, tv) = (cli.theta_u, cli.theta_v);
    match cli.command {
        Command::Scan {
            phi_min,
            phi_max,
            steps,
            window,
        } => {
            let points = phi_scan(phi_min, phi_max, steps, tu, tv)?;
            match &cli.output_dir {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    write_csv(fs::File::create(dir.join("scan.csv"))?, &points)?;
                }
                None => write_csv(io::stdout().lock(), &points)?,
            }
            if window {
                let res = cli.tol.unwrap_or(DEFAULT_RESOLUTION);
                match joint_violation_window(tu, tv, res)? {
                    Some(w) => eprintln!(
                        "joint violation for phi in [{:.4}, {:.4}]",
                        w.phi_lo, w.phi_hi
                    ),
                    None => eprintln!("no joint violation"),
                }
            }
            Ok(Outcome::Pass)
        }
        Command::Evaluate { phi, behavior } => {
            let tol = cli.tol.unwrap_or(ANALYTIC_TOL);
            let model = QuantumModel::new(phi, tu, tv);
            let b = quantum_behavior(&model, &Scenario::chsh_kcbs())?;
            if behavior {
                println!("{}", b.to_json()?);
                return Ok(Outcome::Pass);
            }
            let m = marginalize_bob(&b)?;
            let correlators: BTreeMap<String, f64> = correlators_from_behavior(&b, &m)?
                .iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
            let signalling = check_no_signalling(&b, tol);
            let disturbance = check_no_disturbance(&m, tol);
            let ok = signalling.is_empty() && disturbance.is_empty();
            #[derive(Serialize)]
            struct Report<'a> {
                phi: f64,
                theta_u: f64,
                theta_v: f64,
                result: chsh_kcbs::inequalities::InequalityResult,
                correlators: BTreeMap<String, f64>,
                disturbance_distance: f64,
                no_signalling: &'a chsh_kcbs::scenario::ConsistencyReport,
                no_disturbance: &'a chsh_kcbs::scenario::ConsistencyReport,
            }
            print_json(&Report {
                phi,
                theta_u: tu,
                theta_v: tv,
                result: evaluate_model(&model)?,
                correlators,
                disturbance_distance: disturbance_distance(&m)?,
                no_signalling: &signalling,
                no_disturbance: &disturbance,
            })?;
            Ok(if ok {
                Outcome::Pass
            } else {
                Outcome::CheckFailed
            })
        }
        Command::Bounds { variant } => {
            let scenario = Scenario::chsh_kcbs();
            let variant = match variant {
                Variant::Unconstrained => LocalVariant::Unconstrained,
                Variant::SingletonConsistent => LocalVariant::SingletonConsistent,
            };
            let local = enumerate_local_vertices_with(&scenario, variant);
            let nc = enumerate_noncontextual_vertices(&scenario);
            let (alpha_local, a_arg) = max_functional(&local, &Functional::chsh())?;
            let (beta_local, bl_arg) = max_functional(&local, &Functional::kcbs())?;
            let (beta_nc, b_arg) = max_functional(&nc, &Functional::kcbs())?;
            let (beta_nc_min, bmin_arg) = min_functional(&nc, &Functional::kcbs())?;
            print_json(&serde_json::json!({
                "local_vertices": local.len(),
                "noncontextual_vertices": nc.len(),
                "max_alpha_local": { "value": alpha_local, "argmax": a_arg },
                "max_beta_local": { "value": beta_local, "argmax": bl_arg },
                "max_beta_noncontextual": { "value": beta_nc, "argmax": b_arg },
                "min_beta_noncontextual": { "value": beta_nc_min, "argmin": bmin_arg },
            }))?;
            let ok = alpha_local == 2 && beta_nc == 3 && beta_local == 5;
            Ok(if ok {
                Outcome::Pass
            } else {
                Outcome::CheckFailed
            })
        }
        Command::Optimize { phi, objective } => {
            let r = optimize_state_params(phi, objective)?;
            print_json(&r)?;
            Ok(if r.feasible {
                Outcome::Pass
            } else {
                Outcome::CheckFailed
            })
        }
        Command::Simulate {
            phi,
            counts,
            resamples,
            raw,
        } => {
            if counts == 0 {
                return Err(Error::Domain("--counts must be positive".into()).into());
            }
            let mut r =
                simulate_experiment(&QuantumModel::new(phi, tu, tv), counts, cli.seed, resamples)?;
            if !raw {
                r.counts.clear();
            }
            print_json(&r)?;
            Ok(Outcome::Pass)
        }
        Command::Ingest { input } => {
            let recs = load_dataset(&input)?;
            eprintln!("{}: {} records", input.display(), recs.len());
            if let Some(dir) = &cli.output_dir {
                fs::create_dir_all(dir)?;
                let path = dir.join("dataset.json");
                fs::write(&path, dataset_to_json(&recs)? + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            } else {
                println!("{}", dataset_to_json(&recs)?);
            }
            Ok(Outcome::Pass)
        }
        Command::VerifyPaper { dataset, json } => {
            let recs = records(dataset.as_deref())?;
            let report = verify_paper(&recs, tu, tv, cli.tol.unwrap_or(THEORY_TOL))?;
            if json {
                print_json(&report)?;
            } else {
                for (state, c) in report.checks() {
                    let tag = match c.status {
                        CheckStatus::Pass => "PASS",
                        CheckStatus::Fail => "FAIL",
                        CheckStatus::Flagged => "FLAG",
                    };
                    println!(
                        "{tag} {state:<6} {:<14} expected {:.4} got {:.4} (delta {:+.1e})",
                        c.name, c.expected, c.actual, c.delta
                    );
                }
                for s in report.states.iter().filter(|s| s.notes.is_some()) {
                    println!(
                        "NOTE {}: {}",
                        s.state_id,
                        s.notes.as_deref().unwrap_or_default()
                    );
                }
                let fails = report.with_status(CheckStatus::Fail).len();
                let flags = report.with_status(CheckStatus::Flagged).len();
                println!(
                    "{} checks, {fails} failed, {flags} flagged",
                    report.checks().count()
                );
            }
            if let Some(dir) = &cli.output_dir {
                fs::create_dir_all(dir)?;
                fs::write(
                    dir.join("verification.json"),
                    serde_json::to_string_pretty(&report)? + "\n",
                )?;
            }
            Ok(if report.passed() {
                Outcome::Pass
            } else {
                Outcome::CheckFailed
            })
        }
        Command::EmitFigure { steps, dataset } => {
            let recs = records(dataset.as_deref())?;
            let scan = phi_scan(0.0, std::f64::consts::FRAC_PI_2, steps, tu, tv)?;
            let dir = cli.output_dir.unwrap_or_else(|| PathBuf::from("."));
            let files = emit_figure_data(&scan, &recs, &dir)?;
            print_json(&files)?;
            Ok(Outcome::Pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
