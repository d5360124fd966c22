//! `msfem`: experiment runner for the moving-coordinate multiscale method.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msfem::experiment::{self, ExperimentConfig};
use msfem::transform::TransformKind;
use msfem::Error;

#[derive(Parser)]
#[command(
    name = "msfem",
    version,
    about = "Multiscale FEM with advection-induced coordinates"
)]
struct Cli {
    /// Output root; run directories are created below it.
    #[arg(long, global = true, env = "MSFEM_OUT", default_value = "runs")]
    out: PathBuf,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set k=30`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Print the resolved config and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Reference, coarse FEM and multiscale variants for one case.
    RunCase(ConfigArgs),
    /// Error of the characteristic variant over a list of resolutions.
    RunConvergence(ConfigArgs),
    /// Offline phase only; writes the basis container and one cell as CSV.
    DumpBasis {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// eulerian, mean-flow or characteristic.
        #[arg(long, default_value = "characteristic")]
        transform: TransformKind,
        #[arg(long, default_value_t = 0)]
        cell: usize,
    },
    /// Coarse node paths as CSV.
    TraceChars {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "characteristic")]
        transform: TransformKind,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else if matches!(e, Error::Io(_)) {
        1
    } else {
        2
    }
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    ExperimentConfig::load(args.config.as_deref(), &args.overrides)
}

fn run_dir(cli_out: &Path, cfg: &ExperimentConfig, suffix: &str) -> Result<PathBuf, Error> {
    let root = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| cli_out.to_path_buf());
    let label = experiment::case_label(&cfg.case_params()?);
    Ok(root.join(format!("{label}{suffix}")))
}

fn dry_run(cfg: &ExperimentConfig, sweep: bool) -> Result<u8, Error> {
    cfg.validate(sweep)?;
    print!("{}", cfg.to_toml());
    Ok(0)
}

fn run(cli: &Cli) -> Result<u8, Error> {
    match &cli.command {
        Command::RunCase(args) => {
            let cfg = load(args)?;
            if args.dry_run {
                return dry_run(&cfg, false);
            }
            let report = experiment::run_case(&cfg)?;
            let dir = run_dir(&cli.out, &cfg, "")?;
            experiment::write_case(&report, &dir)?;
            println!("{}", dir.display());
            for r in &report.variants {
                match &r.outcome {
                    Ok(d) => {
                        let e = d.final_errors();
                        println!(
                            "{:<11} rel_L2 {:.3e}  rel_Linf {:.3e}  rel_H1 {:.3e}  max_dev {:.3e}  ({:.1} s)",
                            r.variant, e.rel_l2, e.rel_linf, e.rel_h1, e.max_dev, d.seconds
                        );
                    }
                    Err(e) => println!("{:<11} failed: {e}", r.variant),
                }
            }
            // a case run fails as a whole only if every variant failed
            let failed: Vec<&Error> = report
                .variants
                .iter()
                .filter_map(|r| r.outcome.as_ref().err())
                .collect();
            if !failed.is_empty() && failed.len() == report.variants.len() {
                return Ok(exit_code(failed[0]));
            }
            Ok(0)
        }
        Command::RunConvergence(args) => {
            let cfg = load(args)?;
            if args.dry_run {
                return dry_run(&cfg, true);
            }
            let dir = run_dir(&cli.out, &cfg, "-sweep")?;
            let table = experiment::run_convergence(&cfg, &dir)?;
            println!("{}", dir.display());
            println!("{:>6} {:>12} {:>12}", "N", "rel_L2", "rel_Linf");
            for r in &table.rows {
                println!("{:>6} {:>12.4e} {:>12.4e}", r.n, r.rel_l2, r.rel_linf);
            }
            Ok(0)
        }
        Command::DumpBasis {
            cfg: args,
            transform,
            cell,
        } => {
            let cfg = load(args)?;
            if args.dry_run {
                return dry_run(&cfg, false);
            }
            let dir = run_dir(&cli.out, &cfg, &format!("-basis-{transform}"))?;
            experiment::dump_basis(&cfg, *transform, *cell, &dir)?;
            println!("{}", dir.display());
            Ok(0)
        }
        Command::TraceChars {
            cfg: args,
            transform,
        } => {
            let cfg = load(args)?;
            if args.dry_run {
                return dry_run(&cfg, false);
            }
            let dir = run_dir(&cli.out, &cfg, "-paths")?;
            let path = experiment::trace_chars(&cfg, *transform, &dir)?;
            println!("{}", path.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
