use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use afem::driver::AdaptiveConfig;
use afem::experiments::{self, BenchmarkSpec, RunSummary};
use afem::Domain;

#[derive(Parser)]
#[command(name = "afem", about = "Adaptive FEM for quasilinear elliptic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its step log.
    Run {
        #[arg(long)]
        domain: Domain,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 1e-2)]
        lambda_alg: f64,
        #[arg(long, default_value_t = 1e-2)]
        lambda_pic: f64,
        #[arg(long, default_value_t = 200_000)]
        max_elements: usize,
        /// Refine every triangle (theta = 1).
        #[arg(long)]
        uniform: bool,
        /// Record oracle errors and the quasi-error.
        #[arg(long)]
        diagnostics: bool,
        /// With --diagnostics, skip the exact discrete solution on each mesh.
        #[arg(long)]
        no_discrete_oracle: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a parameter grid described by a key=value file.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print fitted convergence rates of the runs in a directory.
    Rates {
        #[arg(long = "in")]
        input: PathBuf,
        /// Exit with status 2 unless every slope matches its expected rate.
        #[arg(long)]
        assert: bool,
        #[arg(long, default_value_t = 0.06)]
        tol_n: f64,
        #[arg(long, default_value_t = 0.08)]
        tol_cost: f64,
    },
}

fn print_summary(s: &RunSummary) {
    let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "{:<40} levels={:<4} N={:<8} eta={:.4e} slope_N={} slope_cost={} pcg_max={} pcg_median={}",
        s.name, s.levels, s.final_n, s.final_eta, f(s.slope_n), f(s.slope_cost), s.pcg_max, s.pcg_median
    );
}

fn run(cli: Cli) -> afem::Result<ExitCode> {
    match cli.command {
        Command::Run { domain, theta, lambda_alg, lambda_pic, max_elements, uniform, diagnostics, no_discrete_oracle, out } => {
            let problem = experiments::problem_for(domain)?;
            let cfg = AdaptiveConfig {
                theta: if uniform { 1.0 } else { theta },
                lambda_alg,
                lambda_pic,
                max_elements,
                uniform: uniform || theta == 1.0,
                diagnostics,
                discrete_oracle: !no_discrete_oracle,
                ..Default::default()
            };
            let (log, curves) = experiments::run_and_write(&problem, &cfg, &out)?;
            let summary = RunSummary::new(&curves.name, &curves, &cfg);
            experiments::write_summary(&out.join("summary.csv"), std::slice::from_ref(&summary))?;
            experiments::emit_plotdata(std::slice::from_ref(&curves), &out)?;
            print_summary(&summary);
            if let (Some(qa), Some(qp)) = (log.measured_q_alg(), log.measured_q_picard()) {
                println!("measured q_alg = {qa:.4}, measured q_pic = {qp:.4}");
            }
        }
        Command::Sweep { spec, out } => {
            let spec = BenchmarkSpec::parse(&std::fs::read_to_string(spec)?)?;
            for s in experiments::run_benchmark(&spec, &out)? {
                print_summary(&s);
            }
        }
        Command::Rates { input, assert, tol_n, tol_cost } => {
            let rows = experiments::rates(&input)?;
            println!("{:<40} {:>9} {:>9} {:>10} {:>8} {:>10}", "run", "expected", "slope_N", "slope_cost", "pcg_max", "pcg_median");
            let mut ok = true;
            for r in &rows {
                let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
                let pass = r.passes(tol_n, tol_cost);
                ok &= pass;
                println!(
                    "{:<40} {:>9.4} {:>9} {:>10} {:>8} {:>10} {}",
                    r.run,
                    r.expected,
                    f(r.slope_n),
                    f(r.slope_cost),
                    r.pcg_max,
                    r.pcg_median,
                    if pass { "ok" } else { "MISMATCH" }
                );
            }
            if assert && !ok {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
