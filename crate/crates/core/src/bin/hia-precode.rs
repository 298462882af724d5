//! Command-line front end for the precoding simulator.
//!
//! Exit codes:
//! - 0: success
//! - 1: one or more validation checks failed
//! - 2: bad input (unknown scenario, unreadable file, parse error)
//! - 3: numerical failure during a run

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hia_precode::error::HiaError;
use hia_precode::harness::{
    bundled_scenario, bundled_scenarios, monte_carlo, trace_run, trace_to_csv, Scenario,
    CSV_HEADER, TRACE_CSV_HEADER,
};
use hia_precode::validate::{run_suites, SUITES};

#[derive(Parser)]
#[command(
    name = "hia-precode",
    about = "Secure precoding simulator for layered-access downlink MU-MIMO",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Bundled scenario id (see `scenarios`) or a path to a scenario TOML file.
    #[arg(long)]
    scenario: String,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Channel draw count override.
    #[arg(long)]
    draws: Option<usize>,
    /// Worker threads (default: HIA_PRECODE_JOBS, then all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write a JSON mirror next to the CSV (requires --out).
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario's Monte Carlo experiment and emit the rate table.
    Run(RunArgs),
    /// Emit the per-iteration solver trace of a scenario (first draw).
    Trace(RunArgs),
    /// Run the built-in numeric self checks.
    Validate {
        /// Restrict to one suite: lse, quadform, gradient, fixed_point, split.
        #[arg(long)]
        only: Option<String>,
    },
    /// List the bundled scenarios.
    Scenarios,
    /// Print the scenario file schema and the output CSV schemas.
    Schema,
}

fn load_scenario(spec: &str) -> Result<Scenario, ExitCode> {
    if let Some(sc) = bundled_scenario(spec) {
        return Ok(sc);
    }
    let path = PathBuf::from(spec);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        eprintln!("error: cannot read scenario '{spec}': {e}");
        ExitCode::from(2)
    })?;
    Scenario::from_toml_str(&text).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

fn apply_overrides(sc: &mut Scenario, args: &RunArgs) -> Result<(), ExitCode> {
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    if let Some(draws) = args.draws {
        sc.draws = draws;
    }
    sc.validate().map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })?;
    let jobs = args.jobs.or_else(|| {
        std::env::var("HIA_PRECODE_JOBS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(jobs) = jobs {
        // a failure here means a pool already exists; proceed with it
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    Ok(())
}

fn numeric_exit(e: HiaError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        HiaError::Config(_) | HiaError::InvalidGeometry(_) => ExitCode::from(2),
        _ => ExitCode::from(3),
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), ExitCode> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", path.display());
            ExitCode::from(3)
        }),
        None => {
            use std::io::Write;
            // ignore a closed pipe so `| head` works cleanly
            let _ = std::io::stdout().write_all(content.as_bytes());
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let mut sc = match load_scenario(&args.scenario) {
        Ok(sc) => sc,
        Err(code) => return code,
    };
    if let Err(code) = apply_overrides(&mut sc, &args) {
        return code;
    }
    if sc.trace {
        return cmd_trace_inner(&sc, &args);
    }
    let table = match monte_carlo(&sc) {
        Ok(t) => t,
        Err(e) => return numeric_exit(e),
    };
    if let Err(code) = emit(&args.out, &table.to_csv()) {
        return code;
    }
    if args.json {
        match &args.out {
            Some(path) => {
                let json_path = path.with_extension("json");
                if let Err(e) = std::fs::write(&json_path, table.to_json()) {
                    eprintln!("error: cannot write {}: {e}", json_path.display());
                    return ExitCode::from(3);
                }
            }
            None => {
                eprintln!("error: --json needs --out");
                return ExitCode::from(2);
            }
        }
    }
    ExitCode::SUCCESS
}

fn cmd_trace_inner(sc: &Scenario, args: &RunArgs) -> ExitCode {
    let trace = match trace_run(sc) {
        Ok(t) => t,
        Err(e) => return numeric_exit(e),
    };
    match emit(&args.out, &trace_to_csv(sc, &trace)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}

fn cmd_trace(args: RunArgs) -> ExitCode {
    let mut sc = match load_scenario(&args.scenario) {
        Ok(sc) => sc,
        Err(code) => return code,
    };
    if let Err(code) = apply_overrides(&mut sc, &args) {
        return code;
    }
    cmd_trace_inner(&sc, &args)
}

fn cmd_validate(only: Option<String>) -> ExitCode {
    if let Some(name) = &only {
        if !SUITES.contains(&name.as_str()) {
            eprintln!("error: unknown suite '{name}'; pick one of {SUITES:?}");
            return ExitCode::from(2);
        }
    }
    match run_suites(only.as_deref()) {
        Ok(report) => {
            print!("{}", report.render());
            if report.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => numeric_exit(e),
    }
}

fn cmd_scenarios() -> ExitCode {
    for sc in bundled_scenarios() {
        println!(
            "{:<12} variant={:<6} N={:<3} users={:<3} layers={:?}",
            sc.id,
            format!("{:?}", sc.variant).to_lowercase(),
            sc.n,
            sc.n_users(),
            sc.layer_sizes
        );
    }
    ExitCode::SUCCESS
}

fn cmd_schema() -> ExitCode {
    println!("# Scenario file schema (TOML)");
    println!("#");
    println!("# id            string, free-form label used in output rows");
    println!("# n             transmit antennas (uniform circular array)");
    println!("# layer_sizes   users per access layer, lowest layer first");
    println!("# snr_db        SNR grid in dB (one entry when user_grid is set)");
    println!("# user_grid     optional total-user sweep; entries divisible by K");
    println!("# kappa         CSIT quality in [0,1], 0 = perfect (default 0)");
    println!("# alpha_init    smoothing schedule start (default 10)");
    println!("# alpha_decay   schedule decay per annealing stage (default 0.9)");
    println!("# epsilon       iterate-residual tolerance (default 0.01)");
    println!("# max_inner_iters / max_alpha_restarts   loop caps (50 / 30)");
    println!("# spread        angular spread in radians (default pi/6)");
    println!("# aoa           \"uniform\" or {{ fixed = <radians> }}");
    println!("# beta          \"unit\" or {{ pathloss = {{ d_min_m, d_max_m }} }}");
    println!("# draws         channel draws / drops (default 100)");
    println!("# seed          master seed (default 1)");
    println!("# variant       \"nc\" | \"c\" | \"pf-nc\" | \"pf-c\" | \"noma\"");
    println!("# baselines     subset of [\"mrt\", \"zf\"] (default both)");
    println!("# delta         fairness filter constant (default 0.2)");
    println!("# slots         scheduling slots per drop (default 50)");
    println!("# quad_points   covariance quadrature nodes (default 2048)");
    println!("# trace         emit the solver trace on `run` (default false)");
    println!();
    println!("# A bundled example:");
    println!();
    let example = bundled_scenario("fig3_nc").expect("bundled scenario exists");
    print!("{}", example.to_toml());
    println!();
    println!("# Rate table CSV header:");
    println!("#   {CSV_HEADER}");
    println!("#   message is a 0-based index or \"sum\"; snr_db_or_m is the");
    println!("#   SNR in dB, or the user count on a user-count sweep.");
    println!("# Trace CSV header:");
    println!("#   {TRACE_CSV_HEADER}");
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Trace(args) => cmd_trace(args),
        Command::Validate { only } => cmd_validate(only),
        Command::Scenarios => cmd_scenarios(),
        Command::Schema => cmd_schema(),
    }
}
