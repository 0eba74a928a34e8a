use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairtransport::audit::{run_bias, run_distance, run_recourse, AuditConfig};
use fairtransport::simulate::{simulate_admissions, SimulationSpec};
use fairtransport::Error;

/// Audit classification policies by optimal transport between their outcomes.
#[derive(Parser)]
#[command(name = "fairtransport", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Wasserstein distance between two outcome distributions.
    Distance(AuditArgs),
    /// Individual and group bias with the group-by-group decomposition.
    Bias(AuditArgs),
    /// Alpha sweep of coupling-guided recourse.
    Recourse(AuditArgs),
    /// The two-school admissions simulation.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct AuditArgs {
    /// Audit config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Replace the alpha grid with this single value.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation spec (JSON); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Acceptance rule r in [0, 1].
    #[arg(long)]
    rule: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "simulate_out")]
    out: PathBuf,
}

fn audit_config(args: &AuditArgs) -> Result<AuditConfig, Error> {
    let mut cfg = AuditConfig::load(&args.config)?;
    if let Some(alpha) = args.alpha {
        cfg.alphas = vec![alpha];
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn simulate(args: &SimulateArgs) -> Result<(), Error> {
    let mut spec = match &args.config {
        Some(path) => SimulationSpec::load(path)?,
        None => SimulationSpec::default(),
    };
    if let Some(rule) = args.rule {
        spec.rule = rule;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let report = simulate_admissions(&spec)?;
    let mut json = report.to_json()?;
    json.push('\n');
    write(&args.out, "simulation.json", &json)?;
    write(&args.out, "simulation.csv", &report.to_csv())?;
    println!(
        "rule {}: W2 {:.7} every year, mean disparate impact {:.4} over {} years",
        spec.rule, report.closed_form_wasserstein, report.mean_di_ratio, spec.years
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Distance(args) => {
            let cfg = audit_config(&args)?;
            let r = run_distance(&cfg)?;
            println!(
                "W{} = {} ({} x {}, {} iterations)",
                r.cost_order, r.wasserstein, r.n_a, r.n_b, r.solver.iterations
            );
        }
        Command::Bias(args) => {
            let cfg = audit_config(&args)?;
            let r = run_bias(&cfg)?;
            println!("total group bias {}", r.total_bias());
            for (name, b) in r.groups_a.iter().zip(&r.group_bias) {
                println!("  {name}: {b}");
            }
        }
        Command::Recourse(args) => {
            let cfg = audit_config(&args)?;
            let r = run_recourse(&cfg)?;
            for a in &r.alphas {
                println!(
                    "alpha {}: mean probability {:.4}, reclassified {:.4}",
                    a.alpha, a.mean_probability, a.reclassified_fraction
                );
            }
        }
        Command::Simulate(args) => simulate(&args)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
