use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use fracflow::harness::cases;
use fracflow::harness::config::CaseConfig;
use fracflow::harness::io;

#[derive(Parser)]
#[command(name = "fracflow", version, about = "Embedded fracture-matrix flow and transport")]
struct Cli {
    /// Worker threads for assembly and face loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CaseArgs {
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; defaults to the one in the config.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Override the relative solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one case and write fields, fluxes, samples and a manifest.
    Run(CaseArgs),
    /// Pressure errors on every mesh of the case's convergence block.
    Convergence(CaseArgs),
    /// Validate a reference centroid table and write a normalized copy.
    IngestRef {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Parse and check a config without running it.
    Validate {
        #[arg(long, short)]
        config: PathBuf,
    },
}

fn load(args: &CaseArgs) -> fracflow::Result<(CaseConfig, String, PathBuf)> {
    let (mut cfg, text) = CaseConfig::load(&args.config)?;
    if let Some(t) = args.tol {
        cfg.solver.rel_tol = t;
    }
    let out = args.output.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, text, out))
}

fn execute(cli: Cli) -> fracflow::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, text, out) = load(&args)?;
            let r = cases::run_case(&cfg, &text, Some(&out))?;
            println!("{}", serde_json::to_string_pretty(&r.manifest).unwrap_or_default());
        }
        Command::Convergence(args) => {
            let (cfg, _, out) = load(&args)?;
            let t = cases::convergence(&cfg, Some(&out))?;
            println!("{:<16} {:>9} {:>8} {:>11} {:>11}", "mesh", "elements", "N_dof", "err_M", "err_F");
            for r in &t.rows {
                println!(
                    "{:<16} {:>9} {:>8} {:>11.3e} {:>11.3e}",
                    r.mesh, r.elements, r.n_dof, r.err_m, r.err_f
                );
            }
            println!("slope err_M {:.3}  err_F {:.3}", t.slope_m, t.slope_f);
        }
        Command::IngestRef { input, output } => {
            let r = io::ingest_reference(&input)?;
            r.validate()?;
            std::fs::create_dir_all(&output)?;
            io::write_reference(&output.join("reference.csv"), &r)?;
            println!(
                "{} cells, {} on fractures, pressure range {:.6e}",
                r.len(),
                r.on_fracture.iter().filter(|&&f| f).count(),
                r.range()
            );
        }
        Command::Validate { config } => {
            let (cfg, _) = CaseConfig::load(&config)?;
            cfg.validate()?;
            println!("{}: ok", display(&config));
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("{e}");
            return ExitCode::FAILURE;
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
