use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use parrep::harness::{self, Experiment, SweepSpec};
use parrep::parse::DephasingKind;
use parrep::validate::{run_suite, ValidateOptions};
use parrep::{Error, Executor};

#[derive(Parser, Debug)]
#[command(name = "parrep", version, about = "Parallel replica simulation of metastable reaction networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and write summary.csv and cycles.csv.
    Run(RunArgs),
    /// Run a grid of replica counts, thresholds and dephasing methods.
    Sweep(SweepArgs),
    /// Run the statistical check suite on the explicit fixtures.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: `output` from the config, else `parrep-out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Override the replica count.
    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Replica counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    replicas: Vec<usize>,
    /// Thresholds, comma separated; each sets both t_c = t_p or n_c = n_p.
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<f64>,
    /// Dephasing methods, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_dephasing)]
    dephasing: Vec<DephasingKind>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Smaller samples and looser thresholds.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Replace a reference value, e.g. `ex1.sigma1=0.891`. Repeatable.
    #[arg(long = "reference", value_name = "NAME=VALUE")]
    references: Vec<String>,
}

fn parse_dephasing(s: &str) -> Result<DephasingKind, String> {
    match s {
        "rejection" => Ok(DephasingKind::Rejection),
        "fleming-viot" => Ok(DephasingKind::FlemingViot),
        _ => Err(format!("unknown dephasing `{s}` (rejection, fleming-viot)")),
    }
}

/// Exit code for a failed command: 2 for unreadable files, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Io { .. }) => 2,
        _ => 1,
    }
}

fn load(common: &Common) -> anyhow::Result<(Experiment, Executor, PathBuf)> {
    let mut exp = Experiment::load(&common.config)?;
    if let Some(s) = common.seed {
        exp.config.master_seed = s;
    }
    let workers = common.workers.or(exp.config.workers).unwrap_or(1);
    let exec = Executor::new(workers)?;
    let out = common
        .out
        .clone()
        .or_else(|| exp.config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("parrep-out"));
    Ok((exp, exec, out))
}

fn run(args: RunArgs) -> anyhow::Result<bool> {
    let (mut exp, exec, out) = load(&args.common)?;
    if let Some(r) = args.replicas {
        exp.config.replicas = r;
    }
    let report = exp.run(&exec)?;
    let names = exp.observable_names();
    let prov = exp.provenance();
    let files = harness::write_report(&out, &prov, &names, &report)?;
    print!("{}", String::from_utf8_lossy(&harness::summary_csv(&prov, &names, &report)?));
    log::info!("wrote {} and {}", files.summary.display(), files.cycles.display());
    Ok(true)
}

fn sweep(args: SweepArgs) -> anyhow::Result<bool> {
    let (exp, exec, out) = load(&args.common)?;
    let spec = SweepSpec {
        replicas: args.replicas,
        thresholds: args.thresholds,
        dephasing: args.dephasing,
    };
    let rows = harness::sweep(&exp, &spec, &exec)?;
    let csv = harness::sweep_csv(&exp.provenance(), &exp.observable_names(), &rows)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("sweep.csv");
    fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(true)
}

fn validate(args: ValidateArgs) -> anyhow::Result<bool> {
    let mut opts = ValidateOptions {
        seed: args.seed,
        quick: args.quick,
        ..Default::default()
    };
    for r in &args.references {
        opts.references.apply(r)?;
    }
    let exec = Executor::new(args.workers.unwrap_or(1))?;
    let checks = run_suite(&opts, &exec)?;
    let mut ok = true;
    for c in &checks {
        println!("{c}");
        ok &= c.pass;
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        println!("{} checks passed", checks.len());
    } else {
        println!("{} of {} checks failed", failed.len(), checks.len());
        for f in failed {
            eprintln!("failed: {f}");
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
