use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use voxevo::bench::{self, BenchConfig};
use voxevo::config::{AdvisorMode, RunConfig};
use voxevo::run;

#[derive(Parser)]
#[command(name = "voxevo", version, about = "Evolve voxel soft robots from an implicit genome")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all repetitions from a config.
    Run(RunArgs),
    /// Continue a run from its checkpoint file or run directory.
    Resume { checkpoint: PathBuf },
    /// Measure spring updates per second across thread counts.
    Bench(BenchArgs),
    /// Write the best body of a checkpoint as an OBJ mesh.
    ExportMesh {
        checkpoint: PathBuf,
        #[arg(short, long, default_value = "robot.obj")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    generations: Option<u64>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    advisor: Option<AdvisorMode>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 30)]
    robots: usize,
    #[arg(long, default_value_t = 1000)]
    steps: u64,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Highest thread count; defaults to the available cores.
    #[arg(long)]
    max_threads: Option<usize>,
    /// Also write the rows to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn run_cmd(args: RunArgs) -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.generations {
        cfg.generations = v;
    }
    if let Some(v) = args.population {
        cfg.population = v;
    }
    if let Some(v) = args.advisor {
        cfg.advisor.mode = v;
    }
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    if let Some(v) = args.out {
        cfg.output = v;
    }
    cfg.validate()?;
    for rep in 0..cfg.repetitions {
        let s = run::run_repetition(&cfg, rep, None)?;
        println!(
            "run {} seed {} best fitness {} ({})",
            s.run_index,
            s.seed,
            s.best_fitness,
            s.dir.display()
        );
    }
    Ok(())
}

fn bench_cmd(args: BenchArgs) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = BenchConfig {
        robots: args.robots,
        steps: args.steps,
        trials: args.trials,
        thread_counts: bench::thread_ladder(args.max_threads.unwrap_or_else(bench::available_threads)),
        ..BenchConfig::default()
    };
    let rows = bench::run_bench(&cfg);
    bench::write_table(std::io::stdout().lock(), &rows)?;
    if let Some(path) = args.csv {
        bench::write_csv(std::fs::File::create(path)?, &rows)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_cmd(args),
        Command::Resume { checkpoint } => run::resume(&checkpoint)
            .map(|s| {
                println!(
                    "run {} seed {} best fitness {} ({})",
                    s.run_index,
                    s.seed,
                    s.best_fitness,
                    s.dir.display()
                )
            })
            .map_err(Into::into),
        Command::Bench(args) => bench_cmd(args),
        Command::ExportMesh { checkpoint, out } => run::export_mesh(&checkpoint, &out).map_err(Into::into),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
