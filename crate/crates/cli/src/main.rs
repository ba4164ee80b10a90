// negated float comparisons are how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod output;
mod scenario;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use urf_core::framework::Configuration;
use urf_core::rigidity::{spectrum_report, verify_urf, RigidityTolerances};
use urf_core::sim::{estimate_rate, simulate, SimConfig, DEFAULT_RATE_WINDOW};
use urf_core::solver::SolveParams;
use urf_core::{design, Design, Hyperparams, SolveStatus};

use error::CliError;
use output::{CertificateRecord, DesignResult};
use scenario::{InitSpec, Scenario};

#[derive(Debug, Parser)]
#[command(
    name = "urf",
    version,
    about = "Sparse universally rigid formation design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for a stress matrix and certify it.
    Design {
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Relative edge threshold; overrides the scenario.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Replaces the seed of a random generator.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Check a stress matrix against a scenario's configuration.
    Verify {
        stress: PathBuf,
        scenario: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Eigenvalues, `λ_{D+2}` and condition number of a stress matrix.
    Spectrum {
        stress: PathBuf,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Directory for `spectrum.json`; prints to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the formation dynamics of a design.
    Simulate {
        design: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Run even when the certificate failed.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_enum)]
        init: Option<InitSpec>,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Solve one design per α and tabulate the trade-off.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        alphas: Vec<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("urf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Design {
            scenario,
            out,
            tau,
            max_iter,
            seed_override,
        } => cmd_design(&scenario, &out, tau, max_iter, seed_override),
        Command::Verify {
            stress,
            scenario,
            tau,
            seed_override,
        } => cmd_verify(&stress, &scenario, tau, seed_override),
        Command::Spectrum { stress, dim, out } => cmd_spectrum(&stress, dim, out.as_deref()),
        Command::Simulate {
            design,
            out,
            force,
            t_end,
            samples,
            init,
            scale,
            seed_override,
        } => {
            let d = SimConfig::default();
            let sim = SimConfig {
                t_end: t_end.unwrap_or(d.t_end),
                samples: samples.unwrap_or(d.samples),
                init: init.map(Into::into).unwrap_or(d.init),
                perturbation_scale: scale.or(d.perturbation_scale),
                seed: seed_override.unwrap_or(d.seed),
            };
            cmd_simulate(&design, &out, force, &sim)
        }
        Command::Sweep {
            scenario,
            alphas,
            out,
            tau,
            max_iter,
            seed_override,
        } => cmd_sweep(&scenario, &alphas, &out, tau, max_iter, seed_override),
    }
}

fn check_tau(tau: f64) -> Result<f64, CliError> {
    if tau > 0.0 && tau < 1.0 {
        Ok(tau)
    } else {
        Err(CliError::Input(format!(
            "--tau must lie in (0, 1), got {tau}"
        )))
    }
}

fn solver_params(scenario: &Scenario, max_iter: Option<usize>) -> Result<SolveParams, CliError> {
    let mut params = scenario.solver.params();
    if let Some(m) = max_iter {
        params.max_iter = m;
    }
    params
        .validate()
        .map_err(|e| CliError::Input(format!("solver: {e}")))?;
    Ok(params)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Exit status of a finished design: non-convergence outranks a failed certificate.
fn verdict(d: &Design) -> Result<(), CliError> {
    if d.report.status != SolveStatus::Optimal {
        return Err(CliError::NotConverged(format!(
            "status {} after {} iterations",
            d.report.status.as_str(),
            d.report.iterations
        )));
    }
    if !d.certificate.passes() {
        return Err(CliError::Certificate(certificate_summary(
            &CertificateRecord::from(&d.certificate),
        )));
    }
    Ok(())
}

fn certificate_summary(c: &CertificateRecord) -> String {
    format!(
        "psd={} rank={}/{} nullspace={}",
        c.psd_ok, c.rank, c.expected_rank, c.nullspace_ok
    )
}

fn cmd_design(
    scenario_path: &Path,
    out: &Path,
    tau: Option<f64>,
    max_iter: Option<usize>,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    let scenario = Scenario::load(scenario_path)?;
    let tau = check_tau(tau.unwrap_or(scenario.tau))?;
    let params = solver_params(&scenario, max_iter)?;
    let config = scenario.configuration(seed_override)?;
    let d = design(&config, scenario.hyperparams(), &params, tau)?;
    let result = DesignResult::from_design(&d, tau);

    ensure_dir(out)?;
    output::write_json(&out.join("design.json"), &result)?;
    output::write_matrix_csv(&out.join("stress.csv"), &d.omega_normalized)?;
    output::write_edges_csv(&out.join("edges.csv"), &result.edges)?;
    eprintln!(
        "alpha={} M={} lambda_{}={} status={} iterations={} certificate={}",
        result.alpha,
        result.edges_effective,
        result.dimension + 2,
        result.certificate.lambda_min_nonzero,
        result.solve.status,
        result.solve.iterations,
        if result.certificate.passes {
            "pass"
        } else {
            "fail"
        }
    );
    verdict(&d)
}

fn cmd_verify(
    stress_path: &Path,
    scenario_path: &Path,
    tau: Option<f64>,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    let scenario = Scenario::load(scenario_path)?;
    let tau = check_tau(tau.unwrap_or(scenario.tau))?;
    let config = scenario.configuration(seed_override)?;
    let omega = output::read_matrix_csv(stress_path)?;
    if omega.nrows() != config.len() {
        return Err(CliError::Input(format!(
            "{}: {}x{} stress for {} agents",
            stress_path.display(),
            omega.nrows(),
            omega.ncols(),
            config.len()
        )));
    }
    let tols = RigidityTolerances {
        edge: tau,
        ..RigidityTolerances::default()
    };
    let cert = CertificateRecord::from(&verify_urf(&omega, &config, &tols)?);
    println!(
        "{}",
        serde_json::to_string_pretty(&cert).map_err(|e| CliError::Io(std::io::Error::other(e)))?
    );
    if cert.passes {
        Ok(())
    } else {
        Err(CliError::Certificate(certificate_summary(&cert)))
    }
}

#[derive(Debug, Serialize)]
struct SpectrumOutput {
    dimension: usize,
    spectrum: Vec<f64>,
    lambda_min_nonzero: f64,
    condition_number: Option<f64>,
    rigid: bool,
}

fn cmd_spectrum(stress_path: &Path, dim: usize, out: Option<&Path>) -> Result<(), CliError> {
    if dim == 0 {
        return Err(CliError::Input("--dim must be positive".into()));
    }
    let omega = output::read_matrix_csv(stress_path)?;
    let report = spectrum_report(&omega, dim).map_err(|e| CliError::Input(e.to_string()))?;
    let payload = SpectrumOutput {
        dimension: dim,
        spectrum: report.spectrum,
        lambda_min_nonzero: report.lambda_min_nonzero,
        condition_number: report
            .condition_number
            .is_finite()
            .then_some(report.condition_number),
        rigid: report.rigid,
    };
    match out {
        Some(dir) => {
            ensure_dir(dir)?;
            output::write_json(&dir.join("spectrum.json"), &payload)
        }
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(&payload)
                    .map_err(|e| CliError::Io(std::io::Error::other(e)))?
            );
            Ok(())
        }
    }
}

fn cmd_simulate(
    design_path: &Path,
    out: &Path,
    force: bool,
    sim: &SimConfig,
) -> Result<(), CliError> {
    sim.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let result = DesignResult::load(design_path)?;
    if !result.certificate.passes && !force {
        return Err(CliError::Certificate(format!(
            "{} ({}); pass --force to simulate anyway",
            design_path.display(),
            certificate_summary(&result.certificate)
        )));
    }
    let config = Configuration::from_points(&result.positions)
        .map_err(|e| CliError::Input(format!("{}: {e}", design_path.display())))?;
    let omega = result.normalized_matrix()?;
    let trace = simulate(&omega, &config, sim)?;
    let rate = estimate_rate(&trace, DEFAULT_RATE_WINDOW)?;

    ensure_dir(out)?;
    output::write_trace_csv(&out.join("trace.csv"), &trace, &rate)?;
    eprintln!(
        "rate={}{} lambda_{}={}",
        rate.rate,
        if rate.lower_bound {
            " (lower bound)"
        } else {
            ""
        },
        result.dimension + 2,
        result.certificate.lambda_min_nonzero
    );
    Ok(())
}

fn cmd_sweep(
    scenario_path: &Path,
    alphas: &[f64],
    out: &Path,
    tau: Option<f64>,
    max_iter: Option<usize>,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    let scenario = Scenario::load(scenario_path)?;
    if alphas.is_empty() {
        return Err(CliError::Input("--alphas needs at least one value".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(CliError::Input(format!(
            "every alpha must be positive, got {a}"
        )));
    }
    let tau = check_tau(tau.unwrap_or(scenario.tau))?;
    let params = solver_params(&scenario, max_iter)?;
    let config = scenario.configuration(seed_override)?;
    let hyper = scenario.hyperparams();
    let with_alpha = |a: f64| Hyperparams {
        alpha: Some(a),
        ..hyper
    };
    with_alpha(alphas[0])
        .validate()
        .map_err(|e| CliError::Input(format!("hyperparameters: {e}")))?;

    let designs = alphas
        .par_iter()
        .map(|&a| design(&config, with_alpha(a), &params, tau))
        .collect::<Result<Vec<_>, _>>()?;

    ensure_dir(out)?;
    let path = out.join("sweep.csv");
    let mut w =
        csv::Writer::from_path(&path).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    let csv_err = |e: csv::Error| CliError::Io(std::io::Error::other(e));
    w.write_record([
        "alpha",
        "M",
        "lambda_{D+2}",
        "kappa",
        "objective",
        "iterations",
    ])
    .map_err(csv_err)?;
    for d in &designs {
        w.write_record([
            d.problem.alpha.to_string(),
            d.edges.count().to_string(),
            d.certificate.lambda_min_nonzero.to_string(),
            d.certificate.condition_number.to_string(),
            d.report.objective.to_string(),
            d.report.iterations.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    for d in &designs {
        verdict(d)?;
    }
    Ok(())
}
