use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ferment_pbe::simulation::Comparison;
use ferment_pbe::{compare, run, verify, ConfigSource, Error, Execution};
use log::error;

const EXIT_CONFIG: u8 = 1;
const EXIT_INTEGRATION: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;

#[derive(Parser)]
#[command(name = "ferment-sim", version, about = "Yeast population balance simulator for wine fermentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its CSV artifacts.
    Simulate(SimulateArgs),
    /// Compare two completed runs state by state.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Report file (CSV).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle suite.
    Verify {
        /// Also integrate the default 20-day run (about a minute).
        #[arg(long)]
        full: bool,
        /// Disable the thread pool.
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// `key = value` configuration file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["ide", "ode"])]
    model: Option<String>,
    #[arg(long)]
    cells: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long = "t-final")]
    t_final: Option<String>,
    #[arg(long)]
    distribution: Option<String>,
    #[arg(long = "output-dir")]
    output_dir: Option<PathBuf>,
    /// Extra overrides, `KEY=VALUE`, applied after the named flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config { .. } | Error::Domain(_) | Error::ModelValidity(_) | Error::GridMismatch(_) | Error::Dimension { .. }
    )
}

fn simulate(args: SimulateArgs) -> Result<u8, Error> {
    let mut src = match &args.config {
        Some(path) => ConfigSource::read(path)?,
        None => ConfigSource::default(),
    };
    let flags = [
        ("model", args.model),
        ("grid.n_cells", args.cells),
        ("dt", args.dt),
        ("t_final", args.t_final),
        ("distribution.kind", args.distribution),
        ("output.dir", args.output_dir.map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            src.set(key, &v)?;
        }
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config { key: kv.clone(), message: "expected KEY=VALUE".into() })?;
        src.set(k.trim(), v)?;
    }
    let cfg = src.build()?;
    let out = run(&cfg)?;
    let [n, e, s, o] = out.final_concentrations();
    println!(
        "{} run: status={} t={} N={n:.6} E={e:.4} S={s:.4} O={o:.3e} wall={:.2}s dir={}",
        cfg.model,
        if out.succeeded() { "ok" } else { "failed" },
        out.trajectory.times.last().copied().unwrap_or(0.0),
        out.wall_time.as_secs_f64(),
        cfg.output_dir.display()
    );
    match &out.failure {
        None => Ok(0),
        Some(f) => {
            error!("integration failed: {f}");
            Ok(EXIT_INTEGRATION)
        }
    }
}

fn print_comparison(cmp: &Comparison) {
    for (k, state) in cmp.states.iter().enumerate() {
        println!("max_rel_diff {state} = {:.6e}", cmp.max_over_horizon[k]);
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Compare { a, b, out } => compare(&a, &b, &out).map(|cmp| {
            print_comparison(&cmp);
            0
        }),
        Command::Verify { full, sequential } => {
            let exec = if sequential { Execution::Sequential } else { Execution::default() };
            verify::run_all(exec, full).map(|reports| {
                for r in &reports {
                    println!("{r}");
                }
                let failed = reports.iter().filter(|r| !r.pass).count();
                println!("{} checks, {failed} failed", reports.len());
                if failed == 0 {
                    0
                } else {
                    EXIT_VERIFICATION
                }
            })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            error!("{e}");
            ExitCode::from(if input_error(&e) { EXIT_CONFIG } else { EXIT_INTEGRATION })
        }
    }
}
