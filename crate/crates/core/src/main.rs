use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hdg_core::driver::{run_to_dir, Marking, RunConfig, SchemeOptions, StepRecord};
use hdg_core::hdg_mixed::{MixedOptions, MixedStabilization};
use hdg_core::hdg_primal::{gamma_threshold, PrimalOptions, PrimalStabilization};
use hdg_core::problem::ProblemSpec;
use hdg_core::{Error, Result};

#[derive(Parser)]
#[command(name = "hdg", version, about = "Adaptive HDG solver with guaranteed error estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an adaptive or uniform refinement study.
    Run(RunArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Primal,
    Mixed,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StabArg {
    Lemma,
    Paper10k2,
    Uniform,
    SingleFacet,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    /// Polynomial degree of the cell unknowns.
    #[arg(long)]
    k: usize,
    /// Primal facet degree reduction (0 or 1).
    #[arg(long, default_value_t = 0)]
    delta: usize,
    /// Primal penalty constant for `--stab lemma` (default: twice the threshold).
    #[arg(long)]
    gamma: Option<f64>,
    /// Stabilization: lemma or paper10k2 (primal), uniform or single-facet (mixed).
    #[arg(long, value_enum)]
    stab: Option<StabArg>,
    /// Built-in problem id (square-smooth, lshape2d, checkerboard-a) or a JSON file.
    #[arg(long)]
    problem: String,
    /// dorfler:THETA or uniform.
    #[arg(long, default_value = "dorfler:0.5")]
    marking: String,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long)]
    max_dofs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Print a table of invariant checks and fail if any is violated.
    #[arg(long)]
    verify: bool,
    /// Also write VTU files.
    #[arg(long)]
    vtu: bool,
    /// Record wall-clock seconds per step.
    #[arg(long)]
    timing: bool,
}

fn parse_marking(s: &str) -> Result<Marking> {
    if s == "uniform" {
        return Ok(Marking::Uniform);
    }
    s.strip_prefix("dorfler:")
        .and_then(|t| t.parse().ok())
        .map(Marking::Dorfler)
        .ok_or_else(|| Error::Config(format!("bad marking '{s}', expected dorfler:THETA or uniform")))
}

fn load_problem(id: &str) -> Result<ProblemSpec> {
    match ProblemSpec::builtin(id) {
        Ok(p) => Ok(p),
        Err(_) if id.ends_with(".json") || Path::new(id).is_file() => ProblemSpec::from_json(Path::new(id)),
        Err(e) => Err(e),
    }
}

fn scheme_options(args: &RunArgs) -> Result<SchemeOptions> {
    match args.scheme {
        SchemeArg::Primal => {
            let stabilization = match args.stab.unwrap_or(StabArg::Paper10k2) {
                StabArg::Paper10k2 => PrimalStabilization::Scaled,
                StabArg::Lemma => PrimalStabilization::Lemma {
                    gamma: args.gamma.unwrap_or(2.0 * gamma_threshold(args.k)),
                },
                other => {
                    return Err(Error::Config(format!(
                        "--stab {} applies to the mixed scheme",
                        other.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
                    )))
                }
            };
            Ok(SchemeOptions::Primal(PrimalOptions {
                k: args.k,
                delta: args.delta,
                stabilization,
            }))
        }
        SchemeArg::Mixed => {
            if args.delta != 0 || args.gamma.is_some() {
                return Err(Error::Config("--delta and --gamma apply to the primal scheme".into()));
            }
            let stabilization = match args.stab.unwrap_or(StabArg::Uniform) {
                StabArg::Uniform => MixedStabilization::Uniform,
                StabArg::SingleFacet => MixedStabilization::SingleFacet,
                _ => return Err(Error::Config("--stab lemma/paper10k2 apply to the primal scheme".into())),
            };
            Ok(SchemeOptions::Mixed(MixedOptions::new(args.k, stabilization)))
        }
    }
}

/// Returns whether every check passed.
fn print_verification(records: &[StepRecord]) -> bool {
    let max = |f: &dyn Fn(&StepRecord) -> f64| records.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let mut rows: Vec<(&str, f64, f64)> = vec![
        ("equilibration of sigma*", max(&|r| r.invariants.equilibration.max()), 1e-8),
        ("element conservation", max(&|r| r.invariants.conservation), 1e-10),
        ("numerical flux single-valued", max(&|r| r.invariants.flux_jump), 1e-8),
        ("skeleton solve residual", max(&|r| r.invariants.solver_residual), 1e-10),
    ];
    if records.iter().all(|r| r.invariants.off_facet_jump.is_some()) {
        rows.push(("off-facet jump", max(&|r| r.invariants.off_facet_jump.unwrap_or(0.0)), 0.0));
    }
    if records.iter().all(|r| r.error.is_some()) {
        rows.push((
            "error <= eta (max ratio - 1)",
            max(&|r| r.error.unwrap_or(0.0) / r.eta - 1.0),
            1e-6,
        ));
    }
    println!("{:<32} {:>12} {:>10}  result", "check", "worst", "limit");
    let mut ok = true;
    for (name, worst, limit) in rows {
        let pass = worst <= limit;
        ok &= pass;
        println!(
            "{name:<32} {worst:>12.3e} {limit:>10.1e}  {}",
            if pass { "pass" } else { "FAIL" }
        );
    }
    ok
}

fn run(args: RunArgs) -> Result<bool> {
    let problem = load_problem(&args.problem)?;
    let config = RunConfig {
        scheme: scheme_options(&args)?,
        marking: parse_marking(&args.marking)?,
        steps: args.steps,
        max_dofs: args.max_dofs,
        timing: args.timing,
    };
    let records = run_to_dir(&problem, &config, &args.out, args.vtu)?;
    if let Some(last) = records.last() {
        println!(
            "{} steps, final mesh {} elements, {} dofs, eta = {:.4e}",
            records.len(),
            last.nelems,
            last.ndof_total,
            last.eta
        );
    }
    Ok(!args.verify || print_verification(&records))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
